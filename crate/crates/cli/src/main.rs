//! `pwae`: train, sample, plot and evaluate Poincaré Wasserstein autoencoders.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pwae_core::checkpoint::{self, ModelKind};
use pwae_core::config::TrainConfig;
use pwae_core::data::{
    load_cora, load_edge_list, read_idx, read_idx_labels, split_edges, synth_tree,
};
use pwae_core::data::{EdgeSplit, Graph, ImageDataset};
use pwae_core::models::{
    generate, train_vgae, train_wae, LatentGeometry, LossReport, PoincareWae, Vgae,
};
use pwae_core::viz::{latent_svg, pgm_grid, planar_codes};
use pwae_core::{PriorSampler, PriorSamplerConfig};

#[derive(Parser)]
#[command(
    name = "pwae",
    version,
    about = "Wasserstein autoencoders with a Poincaré-ball latent space"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train the image autoencoder on an IDX file.
    TrainMnist(TrainMnist),
    /// Train the graph autoencoder for link prediction.
    TrainGraph(TrainGraph),
    /// Decode prior samples into a PGM grid.
    Sample(Sample),
    /// Scatter 2-D latent codes inside the unit disk (SVG).
    PlotLatent(PlotLatent),
    /// Reconstruction error (images) or AUC/AP (graphs).
    Eval(Eval),
}

/// Hyperparameters shared by both training commands. Unset flags fall back
/// to the config file, then to the built-in defaults.
#[derive(Args)]
struct Hyper {
    /// `key = value` file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    latent_dim: Option<usize>,
    /// Latent blocks: 2 (disks), 1 (lines) or ball.
    #[arg(long)]
    block: Option<String>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    curvature: Option<f64>,
    #[arg(long)]
    rmax: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    rlr: Option<f64>,
    /// Weight of the variance penalty.
    #[arg(long)]
    gamma: Option<f64>,
    /// Comma-separated hidden widths.
    #[arg(long)]
    hidden: Option<String>,
}

impl Hyper {
    fn resolve(&self, mut cfg: TrainConfig) -> anyhow::Result<TrainConfig> {
        if let Some(p) = &self.config {
            cfg.apply_file(p)?;
        }
        let flags: [(&str, Option<String>); 13] = [
            ("latent-dim", self.latent_dim.map(|v| v.to_string())),
            ("block", self.block.clone()),
            ("beta", self.beta.map(|v| v.to_string())),
            ("lambda", self.lambda.map(|v| v.to_string())),
            ("curvature", self.curvature.map(|v| v.to_string())),
            ("rmax", self.rmax.map(|v| v.to_string())),
            ("epochs", self.epochs.map(|v| v.to_string())),
            ("batch", self.batch.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("lr", self.lr.map(|v| v.to_string())),
            ("rlr", self.rlr.map(|v| v.to_string())),
            ("gamma", self.gamma.map(|v| v.to_string())),
            ("hidden", self.hidden.clone()),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                cfg.set(k, &v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainMnist {
    /// IDX image file.
    #[arg(long)]
    data: PathBuf,
    /// Use only the first N images.
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long, default_value = "runs/mnist")]
    out: PathBuf,
    /// Write 0 for wall time so reruns give identical metrics files.
    #[arg(long)]
    no_timing: bool,
    #[command(flatten)]
    hyper: Hyper,
}

#[derive(Clone, Copy, ValueEnum)]
enum Geometry {
    Hyperbolic,
    Euclidean,
}

impl From<Geometry> for LatentGeometry {
    fn from(g: Geometry) -> Self {
        match g {
            Geometry::Hyperbolic => LatentGeometry::Hyperbolic,
            Geometry::Euclidean => LatentGeometry::Euclidean,
        }
    }
}

#[derive(Args)]
struct TrainGraph {
    /// Edge-list file, a directory with cora.content and cora.cites, or
    /// `tree:B,L` for a synthetic tree.
    #[arg(long)]
    data: String,
    #[arg(long, value_enum, default_value = "hyperbolic")]
    geometry: Geometry,
    #[arg(long, default_value_t = 0.05)]
    val_frac: f64,
    #[arg(long, default_value_t = 0.10)]
    test_frac: f64,
    #[arg(long, default_value = "runs/graph")]
    out: PathBuf,
    #[arg(long)]
    no_timing: bool,
    #[command(flatten)]
    hyper: Hyper,
}

#[derive(Args)]
struct Sample {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 16)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "samples.pgm")]
    out: PathBuf,
}

#[derive(Args)]
struct PlotLatent {
    #[arg(long)]
    checkpoint: PathBuf,
    /// IDX images for an image model; graph source for a graph model.
    #[arg(long)]
    data: String,
    /// IDX label file used to colour markers.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long, default_value = "latent.svg")]
    out: PathBuf,
}

#[derive(Args)]
struct Eval {
    #[arg(long)]
    checkpoint: PathBuf,
    /// IDX images for an image model; graph source for a graph model.
    #[arg(long)]
    data: String,
    /// Edge split written by train-graph (default: split.json next to the
    /// checkpoint).
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long)]
    limit: Option<usize>,
}

/// Missing input files map to exit code 2.
#[derive(Debug)]
struct Missing(PathBuf);

impl std::fmt::Display for Missing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "dataset not found: {}", self.0.display())
    }
}

impl std::error::Error for Missing {}

fn require(p: &Path) -> anyhow::Result<()> {
    if !p.exists() {
        return Err(Missing(p.to_path_buf()).into());
    }
    Ok(())
}

fn load_images(path: &Path, limit: Option<usize>) -> anyhow::Result<ImageDataset> {
    require(path)?;
    let ds = read_idx(path)?;
    Ok(match limit {
        Some(n) if n < ds.len() => ds.take(n)?,
        _ => ds,
    })
}

fn load_graph(spec: &str) -> anyhow::Result<Graph> {
    if let Some(rest) = spec.strip_prefix("tree:") {
        let (b, l) = rest.split_once(',').context("tree spec is tree:B,L")?;
        return Ok(synth_tree(b.trim().parse()?, l.trim().parse()?));
    }
    let p = Path::new(spec);
    require(p)?;
    if p.is_dir() {
        let (content, cites) = (p.join("cora.content"), p.join("cora.cites"));
        require(&content)?;
        require(&cites)?;
        let (g, report) = load_cora(&content, &cites)?;
        if report.skipped > 0 {
            log::warn!("skipped {} citations with unknown ids", report.skipped);
        }
        return Ok(g);
    }
    Ok(load_edge_list(p)?)
}

fn create_out(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

struct Metrics {
    file: fs::File,
    no_timing: bool,
    err: Option<std::io::Error>,
}

impl Metrics {
    fn create(path: &Path, no_timing: bool) -> anyhow::Result<Self> {
        let file =
            fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        Ok(Self {
            file,
            no_timing,
            err: None,
        })
    }

    fn log(&mut self, r: &LossReport) {
        let mut r = *r;
        if self.no_timing {
            r.seconds = 0.0;
        }
        log::info!(
            "epoch {} recon {:.4} mmd {:.5} total {:.4}",
            r.epoch,
            r.recon,
            r.mmd,
            r.total
        );
        if self.err.is_none() {
            if let Err(e) = writeln!(self.file, "{}", r.to_json_line()) {
                self.err = Some(e);
            }
        }
    }

    fn finish(self) -> anyhow::Result<()> {
        match self.err {
            Some(e) => Err(e).context("writing metrics"),
            None => Ok(()),
        }
    }
}

fn train_mnist(a: TrainMnist) -> anyhow::Result<()> {
    let cfg = a.hyper.resolve(TrainConfig::mnist())?;
    let data = load_images(&a.data, a.limit)?;
    create_out(&a.out)?;
    let mut model = PoincareWae::new(&cfg, data.dim(), &mut ChaCha8Rng::seed_from_u64(cfg.seed))?;
    let mut metrics = Metrics::create(&a.out.join("metrics.jsonl"), a.no_timing)?;
    train_wae(&mut model, &data, |r| metrics.log(r))?;
    metrics.finish()?;
    checkpoint::save_wae(&a.out.join("model.ckpt"), &model)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn train_graph(a: TrainGraph) -> anyhow::Result<()> {
    let cfg = a.hyper.resolve(TrainConfig::graph())?;
    let g = load_graph(&a.data)?;
    create_out(&a.out)?;
    let split = split_edges(
        &g,
        a.val_frac,
        a.test_frac,
        &mut ChaCha8Rng::seed_from_u64(cfg.seed),
    )?;
    let feat = g.features().map(|x| x.cols());
    let mut model = Vgae::new(
        &cfg,
        a.geometry.into(),
        g.num_nodes(),
        feat,
        &mut ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1)),
    )?;
    let mut metrics = Metrics::create(&a.out.join("metrics.jsonl"), a.no_timing)?;
    train_vgae(&mut model, &g, &split, |r| metrics.log(r))?;
    metrics.finish()?;
    checkpoint::save_vgae(&a.out.join("model.ckpt"), &model)?;
    fs::write(a.out.join("split.json"), serde_json::to_vec(&split)?)?;
    if !split.test.is_empty() {
        let inp = model.inputs(&g.with_edges(&split.train)?)?;
        let (auc, ap) = model.evaluate(&inp, &split.test, &split.test_neg)?;
        println!("test auc {auc:.4} ap {ap:.4}");
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

fn sample(a: Sample) -> anyhow::Result<()> {
    require(&a.checkpoint)?;
    let model = checkpoint::load_wae(&a.checkpoint)?;
    let cfg = model.config();
    let mut sampler = PriorSampler::new(
        PriorSamplerConfig {
            seed: a.seed,
            ..cfg.prior()
        },
        model.ball(),
    )?;
    let probs = generate(&model, a.n, &mut sampler)?;
    let images: Vec<Vec<f64>> = (0..probs.rows()).map(|i| probs.row(i).to_vec()).collect();
    let side = (model.input_dim() as f64).sqrt().round() as usize;
    let (rows, cols) = if side * side == model.input_dim() {
        (side, side)
    } else {
        (1, model.input_dim())
    };
    fs::write(&a.out, pgm_grid(&images, rows, cols)?)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn plot_latent(a: PlotLatent) -> anyhow::Result<()> {
    require(&a.checkpoint)?;
    let (h, store) = checkpoint::load(&a.checkpoint)?;
    let (pts, labels, radius) = match h.model {
        ModelKind::Wae => {
            let model = checkpoint::wae_from_parts(&h, &store)?;
            let radius = 1.0 / model.ball().sqrt_c();
            if a.limit == Some(0) {
                (Vec::new(), None, radius)
            } else {
                let data = load_images(Path::new(&a.data), a.limit)?;
                let x = data.scaled_batch(&(0..data.len()).collect::<Vec<_>>());
                let mu: Vec<_> = model.encode(&x)?.into_iter().map(|o| o.mu).collect();
                let labels = match &a.labels {
                    Some(p) => {
                        require(p)?;
                        let l = read_idx_labels(p)?;
                        Some(
                            l.iter()
                                .take(mu.len())
                                .map(|&v| v as usize)
                                .collect::<Vec<_>>(),
                        )
                    }
                    None => None,
                };
                (planar_codes(&mu)?, labels, radius)
            }
        }
        ModelKind::Vgae => {
            let model = checkpoint::vgae_from_parts(&h, &store)?;
            let g = load_graph(&a.data)?;
            let inp = model.inputs(&g)?;
            let mut mu = model.embed_latent(&inp)?;
            if let Some(n) = a.limit {
                mu.truncate(n);
            }
            let labels = g.labels().map(|l| l[..mu.len()].to_vec());
            (planar_codes(&mu)?, labels, 1.0 / model.ball().sqrt_c())
        }
    };
    fs::write(&a.out, latent_svg(&pts, labels.as_deref(), radius)?)?;
    println!("wrote {} ({} markers)", a.out.display(), pts.len());
    Ok(())
}

fn eval(a: Eval) -> anyhow::Result<()> {
    require(&a.checkpoint)?;
    let (h, store) = checkpoint::load(&a.checkpoint)?;
    match h.model {
        ModelKind::Wae => {
            let model = checkpoint::wae_from_parts(&h, &store)?;
            let data = load_images(Path::new(&a.data), a.limit)?;
            if data.dim() != model.input_dim() {
                bail!(
                    "checkpoint expects {} pixels per image, dataset has {}",
                    model.input_dim(),
                    data.dim()
                );
            }
            let x = data.scaled_batch(&(0..data.len()).collect::<Vec<_>>());
            let err = model.reconstruction_error(&x)?;
            println!(
                "{}",
                serde_json::json!({ "images": data.len(), "recon": err })
            );
        }
        ModelKind::Vgae => {
            let model = checkpoint::vgae_from_parts(&h, &store)?;
            let g = load_graph(&a.data)?;
            if g.num_nodes() != model.num_nodes() {
                bail!(
                    "checkpoint expects {} nodes, graph has {}",
                    model.num_nodes(),
                    g.num_nodes()
                );
            }
            let split_path = a
                .split
                .unwrap_or_else(|| a.checkpoint.with_file_name("split.json"));
            require(&split_path)?;
            let split: EdgeSplit = serde_json::from_slice(&fs::read(&split_path)?)?;
            let inp = model.inputs(&g.with_edges(&split.train)?)?;
            let (auc, ap) = model.evaluate(&inp, &split.test, &split.test_neg)?;
            println!("{}", serde_json::json!({ "auc": auc, "ap": ap }));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::TrainMnist(a) => train_mnist(a),
        Cmd::TrainGraph(a) => train_graph(a),
        Cmd::Sample(a) => sample(a),
        Cmd::PlotLatent(a) => plot_latent(a),
        Cmd::Eval(a) => eval(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Missing>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
