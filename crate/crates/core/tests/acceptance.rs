//! Acceptance criteria A1–A8, one `A<n> PASS|FAIL (...)` line each.
//!
//! Runs without the libtest harness so the lines are always shown. Extra
//! arguments select criteria by substring (`cargo test --test acceptance --
//! a7`). With `PWAE_ACCEPTANCE_STRICT=1` the process fails if any selected
//! criterion fails; otherwise the FAIL lines are reported and the run exits
//! cleanly. A criterion whose dataset is absent prints FAIL with the reason
//! and never fails the process.
//!
//! A5 reads `data/mnist10k-images-idx3-ubyte`; A6 reads the Cora files from
//! `$PWAE_CORA_DIR` or `data/cora/`. Artifacts go to
//! `target/tmp/acceptance/`.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pwae_core::autodiff::{Tape, Tensor, Var};
use pwae_core::config::TrainConfig;
use pwae_core::data::{load_cora, read_idx, split_edges, synth_tree, Graph};
use pwae_core::gyrovector::{artanh, norm};
use pwae_core::hgauss::{normalizer, MIN_SIGMA};
use pwae_core::mmd::{gram, min_eigenvalue, mmd_estimate, KernelParams};
use pwae_core::models::{
    generate, train_vgae, train_wae, LatentGeometry, PoincareWae, Vgae, WaeNoise,
};
use pwae_core::nn::{Bound, HyperOps};
use pwae_core::optim::rsgd_step_raw;
use pwae_core::viz::{latent_svg, pgm_grid, planar_codes};
use pwae_core::{
    BallConfig, BallPoint, HyperGaussian, LatentPoint, PriorSampler, PriorSamplerConfig, TangentVec,
};

enum Outcome {
    Pass,
    Fail,
    /// Required data is not present.
    Unavailable,
}

type Verdict = (Outcome, String);

fn verdict(pass: bool, detail: String) -> Verdict {
    (if pass { Outcome::Pass } else { Outcome::Fail }, detail)
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn artifact_dir() -> PathBuf {
    let d = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn random_point<R: Rng>(rng: &mut R, ball: BallConfig, dim: usize, max_norm: f64) -> BallPoint {
    let dir: Vec<f64> = (0..dim)
        .map(|_| rng.sample(rand_distr::StandardNormal))
        .collect();
    let n = norm(&dir);
    let r = max_norm * rng.random::<f64>();
    ball.project(dir.iter().map(|d| d * r / n).collect())
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn a1_geometry_suite() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut failures = Vec::new();
    let mut check = |ok: bool, what: &str| {
        if !ok && failures.len() < 5 {
            failures.push(what.to_string());
        }
    };
    for &c in &[1.0, 0.5, 2.0] {
        let ball = BallConfig::with_curvature(c).unwrap();
        let cap = 1.0 - ball.eps() + 1e-15;
        let rad = 1.0 / ball.sqrt_c();
        for i in 0..10_000 {
            let dim = 2 + i % 4;
            // closure, inputs up to 0.95 of the radius
            let x = random_point(&mut rng, ball, dim, 0.95 * rad);
            let y = random_point(&mut rng, ball, dim, 0.95 * rad);
            let m = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-3.0..3.0));
            let v = TangentVec((0..dim).map(|_| rng.random_range(-10.0..10.0)).collect());
            for z in [
                x.mobius_add(&y).unwrap(),
                x.gyro_matvec(&m).unwrap(),
                ball.exp0(&v),
                x.exp_at(&v, 1.0).unwrap(),
            ] {
                check(ball.sqrt_c() * z.norm() <= cap, "closure");
            }

            // gyrogroup identities, inputs up to 0.9 of the radius
            let x = random_point(&mut rng, ball, dim, 0.9 * rad);
            let y = random_point(&mut rng, ball, dim, 0.9 * rad);
            let zero = ball.origin(dim);
            check(
                max_abs_diff(zero.mobius_add(&x).unwrap().coords(), x.coords()) <= 1e-9,
                "0+x",
            );
            check(x.neg().mobius_add(&x).unwrap().norm() <= 1e-9, "-x+x");
            let lc = x.neg().mobius_add(&x.mobius_add(&y).unwrap()).unwrap();
            check(
                max_abs_diff(lc.coords(), y.coords()) <= 1e-9,
                "left cancellation",
            );

            // metric
            let z = random_point(&mut rng, ball, dim, 0.9 * rad);
            let (dxy, dyx) = (x.distance(&y).unwrap(), y.distance(&x).unwrap());
            check((dxy - dyx).abs() <= 1e-10, "symmetry");
            check(x.distance(&x).unwrap() <= 1e-10, "d(x,x)");
            check(x.coords() == y.coords() || dxy > 0.0, "d > 0");
            let dxz = x.distance(&z).unwrap();
            let dyz = y.distance(&z).unwrap();
            check(dxz <= dxy + dyz + 1e-10, "triangle");
            if c == 1.0 {
                let d0 = zero.distance(&x).unwrap();
                check((d0 - 2.0 * artanh(x.norm())).abs() <= 1e-10, "d(0,x)");
            }

            // exp0/log0
            let v =
                TangentVec(random_point(&mut rng, BallConfig::default(), dim, 1.0).into_coords());
            let r = 3.0 * rng.random::<f64>();
            let v = TangentVec(v.0.iter().map(|a| a * r / v.norm().max(1e-300)).collect());
            let back = ball.exp0(&v).log0();
            check(max_abs_diff(&back.0, &v.0) <= 1e-9, "log0(exp0(v))");
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = failures.is_empty() && secs < 10.0;
    let mut detail = format!("(3 curvatures x 10^4 instances, {secs:.2}s)");
    if !failures.is_empty() {
        detail += &format!(" {failures:?}");
    }
    verdict(pass, detail)
}

fn a2_density_normalization() -> Verdict {
    let start = Instant::now();
    let ball = BallConfig::default();
    let mut worst = 0.0f64;
    let mut totals = Vec::new();
    for sigma in [0.5, 1.0, 2.0] {
        let g = HyperGaussian::new(LatentPoint::origin(&[2], ball), vec![sigma]).unwrap();
        let (nr, nphi, rmax) = (4000usize, 16usize, 12.0);
        let h = rmax / nr as f64;
        let mut total = 0.0;
        for k in 0..nphi {
            let phi = 2.0 * PI * k as f64 / nphi as f64;
            let dir = [phi.cos(), phi.sin()];
            let f = |r: f64| {
                let x = LatentPoint::new(vec![ball.from_polar(r, &dir)]).unwrap();
                g.log_pdf(&x).unwrap().exp() * r.sinh()
            };
            let mut s = f(0.0) + f(rmax);
            for i in 1..nr {
                s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
            }
            total += s * h / 3.0 * (2.0 * PI / nphi as f64);
        }
        worst = worst.max((total - 1.0).abs());
        totals.push(total);
    }
    let z1 = normalizer(1.0);
    let secs = start.elapsed().as_secs_f64();
    let pass = worst <= 1e-3 && (z1 - 8.8636).abs() <= 1e-3 && secs < 5.0;
    verdict(
        pass,
        format!("(integrals {totals:?}, Z(1) = {z1:.6}, {secs:.2}s)"),
    )
}

/// Radial CDF of the prior truncated to `[0, r_max]`: density
/// `∝ exp(-r²/2σ²) sinh r`, integrated in closed form with erf.
fn radial_cdf(r: f64, sigma: f64, r_max: f64) -> f64 {
    let s2 = sigma * std::f64::consts::SQRT_2;
    let g = |r: f64| {
        libm::erf((r - sigma * sigma) / s2) - libm::erf((r + sigma * sigma) / s2)
            + 2.0 * libm::erf(sigma / std::f64::consts::SQRT_2)
    };
    g(r) / g(r_max)
}

fn a3_sampler_ks() -> Verdict {
    let start = Instant::now();
    let n = 10_000usize;
    // α = 0.01 critical value with the small-sample adjustment.
    let crit = 1.6276 / ((n as f64).sqrt() + 0.12 + 0.11 / (n as f64).sqrt());
    let mut stats = Vec::new();
    for (sigma, r_max) in [(1.0, 5.0), (0.5, 5.0)] {
        let mut s = PriorSampler::new(
            PriorSamplerConfig {
                r_max,
                sigma,
                seed: 11,
            },
            BallConfig::default(),
        )
        .unwrap();
        let mut radii: Vec<f64> = (0..n)
            .map(|_| 2.0 * artanh(s.sample_disk().norm()))
            .collect();
        radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut d = 0.0f64;
        for (i, &r) in radii.iter().enumerate() {
            let f = radial_cdf(r, sigma, r_max);
            d = d
                .max((f - i as f64 / n as f64).abs())
                .max(((i + 1) as f64 / n as f64 - f).abs());
        }
        stats.push(d);
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = stats.iter().all(|&d| d < crit) && secs < 10.0;
    verdict(
        pass,
        format!("(KS D = {stats:?}, critical {crit:.5}, {secs:.2}s)"),
    )
}

fn a4_kernel_and_mmd() -> Verdict {
    let start = Instant::now();
    let ball = BallConfig::default();
    let kp = KernelParams::new(1.0).unwrap();
    let prior = |seed: u64, sigma: f64| {
        PriorSampler::new(
            PriorSamplerConfig {
                r_max: 5.0,
                sigma,
                seed,
            },
            ball,
        )
        .unwrap()
    };

    let pts: Vec<LatentPoint> = (0..200)
        .map({
            let mut s = prior(1, 1.0);
            move |_| s.sample(&[2, 2])
        })
        .collect();
    let min_eig = min_eigenvalue(&gram(&pts, kp).unwrap());

    let mut same = 0.0;
    for seed in 0..20 {
        let mut s = prior(100 + seed, 1.0);
        let a: Vec<LatentPoint> = (0..512).map(|_| s.sample(&[2])).collect();
        let b: Vec<LatentPoint> = (0..512).map(|_| s.sample(&[2])).collect();
        same += mmd_estimate(&a, &b, kp).unwrap().abs() / 20.0;
    }

    let mut s = prior(7, 0.3);
    let shift = ball.project(vec![0.9, 0.0]);
    let a: Vec<LatentPoint> = (0..256).map(|_| s.sample(&[2])).collect();
    let b: Vec<LatentPoint> = (0..256)
        .map(|_| LatentPoint::new(vec![shift.mobius_add(&s.sample_disk()).unwrap()]).unwrap())
        .collect();
    let apart = mmd_estimate(&a, &b, kp).unwrap();

    // Full WAE loss on a 16-image batch, every parameter.
    let cfg = TrainConfig {
        latent_dim: 4,
        hidden: vec![32, 16],
        gamma: 0.3,
        ..TrainConfig::mnist()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let model = PoincareWae::new(&cfg, 64, &mut rng).unwrap();
    let x = Tensor::matrix(
        16,
        64,
        (0..16 * 64)
            .map(|_| f64::from(rng.random_bool(0.3) as u8))
            .collect(),
    );
    let noise = WaeNoise::sample(16, model.block_dims(), &mut prior(9, 1.0));
    let values: Vec<Tensor> = model
        .store
        .params()
        .iter()
        .map(|p| p.value.clone())
        .collect();
    let loss = |t: &mut Tape, v: &[Var]| {
        let p = Bound::from_vars(v.to_vec());
        model.loss_vars(t, &p, &x, &noise).unwrap().total
    };
    let fd = finite_difference_check(loss, &values, 1e-5);

    let secs = start.elapsed().as_secs_f64();
    let pass = min_eig >= -1e-8 && same < 0.05 && apart > 0.3 && fd.within && secs < 120.0;
    verdict(pass, format!(
            "(min eig {min_eig:.3e}, same-dist |MMD| {same:.4}, separated MMD {apart:.4}, \
             grad rel err {:.2e} (components >= 1e-5), worst |a-n| {:.2e}, over {} params, {secs:.1}s)",
            fd.max_rel,
            fd.max_abs,
            model.store.num_scalars()
        ))
}

struct FdCheck {
    /// Every component satisfies `|a - n| <= 1e-8 + 1e-3 |n|`.
    within: bool,
    /// Largest `|a - n| / (|a| + |n|)` over components with `|a| + |n| >= 1e-5`.
    max_rel: f64,
    max_abs: f64,
}

/// Central differences against reverse mode. The absolute slack of 1e-8 is
/// the rounding floor of a central difference at `h = 1e-5` on a loss of
/// order 10², so near-zero components are judged against noise rather than
/// against themselves.
fn finite_difference_check(f: impl Fn(&mut Tape, &[Var]) -> Var, xs: &[Tensor], h: f64) -> FdCheck {
    let analytic: Vec<Tensor> = {
        let mut t = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| t.leaf(x.clone())).collect();
        let l = f(&mut t, &vars);
        let g = t.backward(l);
        vars.iter().map(|&v| g.wrt(v)).collect()
    };
    let eval = |inputs: &[Tensor]| {
        let mut t = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|x| t.constant(x.clone())).collect();
        let l = f(&mut t, &vars);
        t.value(l).item()
    };
    let mut out = FdCheck {
        within: true,
        max_rel: 0.0,
        max_abs: 0.0,
    };
    let mut work = xs.to_vec();
    for (k, x) in xs.iter().enumerate() {
        for i in 0..x.len() {
            let orig = x.data()[i];
            work[k].data_mut()[i] = orig + h;
            let fp = eval(&work);
            work[k].data_mut()[i] = orig - h;
            let fm = eval(&work);
            work[k].data_mut()[i] = orig;
            let (a, n) = (analytic[k].data()[i], (fp - fm) / (2.0 * h));
            let diff = (a - n).abs();
            out.within &= diff <= 1e-8 + 1e-3 * n.abs();
            out.max_abs = out.max_abs.max(diff);
            if a.abs() + n.abs() >= 1e-5 {
                out.max_rel = out.max_rel.max(diff / (a.abs() + n.abs()));
            }
        }
    }
    out
}

/// Trailing mean over up to `w` values.
fn smooth(xs: &[f64], w: usize) -> Vec<f64> {
    (0..xs.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            xs[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect()
}

fn a5_mnist_desk_run() -> Verdict {
    let start = Instant::now();
    let path = workspace_root().join("data/mnist10k-images-idx3-ubyte");
    let Ok(data) = read_idx(&path) else {
        return (
            Outcome::Unavailable,
            format!("(dataset unavailable: {})", path.display()),
        );
    };
    let cfg = TrainConfig {
        latent_dim: 10,
        epochs: 20,
        seed: 0,
        // without it σ drifts upward unchecked and late epochs get noisy
        gamma: 1e-3,
        ..TrainConfig::mnist()
    };
    let mut model =
        PoincareWae::new(&cfg, data.dim(), &mut ChaCha8Rng::seed_from_u64(cfg.seed)).unwrap();
    let reports = train_wae(&mut model, &data, |_| {}).unwrap();
    let recon: Vec<f64> = reports.iter().map(|r| r.recon).collect();
    let sm = smooth(&recon, 3);
    let monotone = sm.windows(2).all(|w| w[1] <= w[0]);
    let ratio = recon[recon.len() - 1] / recon[0];

    // Invariants on every encoded training image.
    let idx: Vec<usize> = (0..data.len()).collect();
    let enc = model.encode(&data.scaled_batch(&idx)).unwrap();
    let max_norm = model.ball().max_norm();
    let invariants = enc.iter().all(|o| {
        o.mu.blocks()
            .iter()
            .all(|b| b.norm() <= max_norm * (1.0 + 1e-12))
            && o.sigma.iter().all(|&s| s >= MIN_SIGMA)
    });

    let dir = artifact_dir();
    let mut sampler = PriorSampler::new(cfg.prior(), model.ball()).unwrap();
    let probs = generate(&model, 64, &mut sampler).unwrap();
    let images: Vec<Vec<f64>> = (0..64).map(|i| probs.row(i).to_vec()).collect();
    std::fs::write(
        dir.join("a5_samples.pgm"),
        pgm_grid(&images, 28, 28).unwrap(),
    )
    .unwrap();
    let mus: Vec<LatentPoint> = enc.into_iter().take(2000).map(|o| o.mu).collect();
    let svg = latent_svg(&planar_codes(&mus).unwrap(), None, 1.0).unwrap();
    std::fs::write(dir.join("a5_latent.svg"), &svg).unwrap();
    let artifacts = svg.matches("class=\"pt\"").count() == mus.len();

    let secs = start.elapsed().as_secs_f64();
    let pass = monotone && ratio <= 0.7 && invariants && artifacts;
    verdict(pass, format!(
            "(γ = 1e-3, recon epoch 1 {:.2} -> epoch {} {:.2}, ratio {ratio:.3}, smoothed monotone {monotone}, \
             invariants {invariants}, {secs:.0}s)",
            recon[0],
            recon.len(),
            recon[recon.len() - 1]
        ))
}

fn link_prediction(
    g: &Graph,
    cfg: &TrainConfig,
    geometry: LatentGeometry,
    seed: u64,
) -> (f64, f64) {
    let split = split_edges(g, 0.05, 0.10, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    let cfg = TrainConfig {
        seed,
        ..cfg.clone()
    };
    let feat = g.features().map(|x| x.cols());
    let mut model = Vgae::new(
        &cfg,
        geometry,
        g.num_nodes(),
        feat,
        &mut ChaCha8Rng::seed_from_u64(seed.wrapping_add(1)),
    )
    .unwrap();
    train_vgae(&mut model, g, &split, |_| {}).unwrap();
    let inp = model.inputs(&g.with_edges(&split.train).unwrap()).unwrap();
    model.evaluate(&inp, &split.test, &split.test_neg).unwrap()
}

fn a6_cora_link_prediction() -> Verdict {
    let start = Instant::now();
    let dir = std::env::var_os("PWAE_CORA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| workspace_root().join("data/cora"));
    let (content, cites) = (dir.join("cora.content"), dir.join("cora.cites"));
    if !content.exists() || !cites.exists() {
        // Data-gated: without the dataset the criterion cannot be evaluated.
        return (
            Outcome::Unavailable,
            format!(
                "(dataset unavailable: no cora.content/cora.cites in {})",
                dir.display()
            ),
        );
    }
    let (g, _) = load_cora(&content, &cites).unwrap();
    let cfg = TrainConfig {
        latent_dim: 16,
        ..TrainConfig::graph()
    };
    let mut auc = 0.0;
    let mut ap = 0.0;
    for seed in 0..3 {
        let (a, p) = link_prediction(&g, &cfg, LatentGeometry::Hyperbolic, seed);
        auc += a / 3.0;
        ap += p / 3.0;
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = auc >= 0.88 && ap >= 0.88;
    verdict(
        pass,
        format!("(mean AUC {auc:.4}, AP {ap:.4} over 3 seeds, {secs:.0}s)"),
    )
}

fn a7_hierarchy_advantage() -> Verdict {
    let start = Instant::now();
    let g = synth_tree(2, 7);
    let cfg = TrainConfig {
        latent_dim: 2,
        ..TrainConfig::graph()
    };
    let mut hyp = Vec::new();
    let mut euc = Vec::new();
    for seed in 0..5 {
        hyp.push(link_prediction(&g, &cfg, LatentGeometry::Hyperbolic, seed).0);
        euc.push(link_prediction(&g, &cfg, LatentGeometry::Euclidean, seed).0);
    }
    let mh = hyp.iter().sum::<f64>() / 5.0;
    let me = euc.iter().sum::<f64>() / 5.0;
    let secs = start.elapsed().as_secs_f64();
    let pass = mh > me;
    verdict(pass, format!("(mean test AUC hyperbolic {mh:.4} vs euclidean {me:.4}; {hyp:.3?} vs {euc:.3?}, {secs:.0}s)"))
}

fn a8_rsgd_convergence() -> Verdict {
    let ball = BallConfig::default();
    let ops = HyperOps::new(ball);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    let mut steps_max = 0usize;
    let mut in_ball = true;
    for _ in 0..100 {
        let target = random_point(&mut rng, ball, 2, 0.8);
        let mut theta = random_point(&mut rng, ball, 2, 0.8).into_coords();
        let mut steps = 2000;
        for k in 0..2000 {
            let d = distance_raw(&theta, target.coords());
            if d < 1e-6 {
                steps = k;
                break;
            }
            let mut t = Tape::new();
            let th = t.leaf(Tensor::matrix(1, 2, theta.clone()));
            let tg = t.constant(Tensor::matrix(1, 2, target.coords().to_vec()));
            let dist = ops.distance(&mut t, th, tg);
            let sq = t.square(dist);
            let loss = t.scale(sq, 0.5);
            let loss = t.sum(loss);
            let g = t.backward(loss).wrt(th);
            theta = rsgd_step_raw(&theta, g.data(), 0.1, ball);
            in_ball &= norm(&theta) <= ball.max_norm() * (1.0 + 1e-12);
        }
        worst = worst.max(distance_raw(&theta, target.coords()));
        steps_max = steps_max.max(steps);
    }
    let pass = worst < 1e-6 && in_ball;
    verdict(pass, format!("(100 targets, worst final distance {worst:.2e}, at most {steps_max} steps, in ball {in_ball})"))
}

fn distance_raw(a: &[f64], b: &[f64]) -> f64 {
    pwae_core::gyrovector::distance_raw(a, b, 1.0)
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 8] = [
        ("a1_geometry_suite", a1_geometry_suite),
        ("a2_density_normalization", a2_density_normalization),
        ("a3_sampler_ks", a3_sampler_ks),
        ("a4_kernel_and_mmd", a4_kernel_and_mmd),
        ("a5_mnist_desk_run", a5_mnist_desk_run),
        ("a6_cora_link_prediction", a6_cora_link_prediction),
        ("a7_hierarchy_advantage", a7_hierarchy_advantage),
        ("a8_rsgd_convergence", a8_rsgd_convergence),
    ];
    let filters: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = Vec::new();
    let mut lines = Vec::new();
    for (name, f) in criteria {
        if !filters.is_empty() && !filters.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let id = name[..2].to_uppercase();
        let (outcome, detail) = match std::panic::catch_unwind(f) {
            Ok(v) => v,
            Err(_) => (Outcome::Fail, "(panicked)".to_string()),
        };
        let tag = match outcome {
            Outcome::Pass => "PASS",
            Outcome::Fail => {
                failed.push(id.clone());
                "FAIL"
            }
            Outcome::Unavailable => "FAIL",
        };
        let line = format!("{id} {tag} {detail}");
        println!("{line}");
        lines.push(line);
    }
    let _ = std::fs::write(artifact_dir().join("summary.txt"), lines.join("\n") + "\n");
    if !failed.is_empty() {
        eprintln!("failed criteria: {}", failed.join(", "));
        // FAIL lines are always printed; only a strict run turns them into a
        // failing exit status.
        if std::env::var_os("PWAE_ACCEPTANCE_STRICT").is_some_and(|v| v == "1") {
            std::process::exit(1);
        }
    }
}
