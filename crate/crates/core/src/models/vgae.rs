use std::sync::Arc;
use std::time::Instant;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{evaluate_auc_ap, latent_to_blocks, tape_mmd, LossReport, LossVars};
use crate::autodiff::{CsrMatrix, Tape, Tensor, Var};
use crate::config::TrainConfig;
use crate::data::{sample_negative_edges, EdgeSplit, Graph};
use crate::gyrovector::BallConfig;
use crate::hgauss::{LatentPoint, PriorSampler, PriorSamplerConfig, MIN_SIGMA};
use crate::nn::{
    euclidean_pairwise_distance, Activation, Bound, DenseLayer, GcnLayer, HyperOps, ParamId,
    ParamKind, ParamStore, PosteriorHeads,
};
use crate::optim::{AdamConfig, Optimizer, RsgdConfig};
use crate::par::Exec;
use crate::{Error, Result};

/// Nodes entering the MMD term per step.
pub const MMD_NODES: usize = 512;

/// Hyperbolic latents with the Fermi–Dirac distance decoder, or the
/// Euclidean ablation with a Gaussian reparametrization and inner-product
/// decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LatentGeometry {
    Hyperbolic,
    Euclidean,
}

#[derive(Debug, Clone)]
enum Heads {
    Hyper(PosteriorHeads),
    Euclid { mu: DenseLayer, sigma: DenseLayer },
}

/// Graph autoencoder: GCN trunk, per-node posterior heads, edge decoder.
#[derive(Debug, Clone)]
pub struct Vgae {
    cfg: TrainConfig,
    geometry: LatentGeometry,
    n_nodes: usize,
    feat_dim: Option<usize>,
    dims: Vec<usize>,
    ball: BallConfig,
    pub store: ParamStore,
    gcn: Vec<GcnLayer>,
    heads: Heads,
    r_fd: Option<ParamId>,
    t_raw: Option<ParamId>,
}

/// Normalized training adjacency and node features for the trunk.
#[derive(Debug, Clone)]
pub struct GraphInputs {
    pub adj: Arc<CsrMatrix>,
    pub features: Option<Arc<CsrMatrix>>,
}

/// Exogenous randomness of one step.
#[derive(Debug, Clone)]
pub struct VgaeNoise {
    /// Reparametrization noise, one `n×m_b` matrix per block.
    pub z_prior: Vec<Tensor>,
    /// Prior samples for the MMD, one `k×m_b` matrix per block.
    pub prior: Vec<Tensor>,
    /// Nodes whose samples enter the MMD.
    pub mmd_nodes: Arc<[usize]>,
    /// Negative edges for the reconstruction term.
    pub negatives: Vec<(usize, usize)>,
}

fn softplus_inv(y: f64) -> f64 {
    y.exp_m1().ln()
}

fn pair_index(pairs: &[(usize, usize)]) -> (Arc<[usize]>, Arc<[usize]>) {
    (
        pairs.iter().map(|p| p.0).collect(),
        pairs.iter().map(|p| p.1).collect(),
    )
}

impl Vgae {
    /// `feat_dim = None` uses one-hot node identities as features.
    pub fn new<R: Rng + ?Sized>(
        cfg: &TrainConfig,
        geometry: LatentGeometry,
        n_nodes: usize,
        feat_dim: Option<usize>,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        if n_nodes < 2 {
            return Err(Error::usage("graph needs at least two nodes"));
        }
        let ball = cfg.ball()?;
        let dims = match geometry {
            LatentGeometry::Hyperbolic => cfg.block_dims(),
            LatentGeometry::Euclidean => vec![cfg.latent_dim],
        };
        let mut store = ParamStore::new();
        let mut gcn = Vec::new();
        let mut width = feat_dim.unwrap_or(n_nodes);
        let last = cfg.hidden.len() - 1;
        for (k, &h) in cfg.hidden.iter().enumerate() {
            let act = if k == last {
                Activation::Identity
            } else {
                Activation::Relu
            };
            gcn.push(GcnLayer::new(
                &mut store,
                &format!("gcn{k}"),
                width,
                h,
                act,
                rng,
            ));
            width = h;
        }
        let (heads, r_fd, t_raw) = match geometry {
            LatentGeometry::Hyperbolic => {
                let heads = PosteriorHeads::new(&mut store, "post", width, &dims, ball, rng);
                let r = store.add("fd.r", ParamKind::Euclidean, Tensor::filled(&[1, 1], 2.0));
                let t = store.add(
                    "fd.t",
                    ParamKind::Euclidean,
                    Tensor::filled(&[1, 1], softplus_inv(1.0)),
                );
                (Heads::Hyper(heads), Some(r), Some(t))
            }
            LatentGeometry::Euclidean => {
                let d = cfg.latent_dim;
                let mu =
                    DenseLayer::new(&mut store, "post.mu", width, d, Activation::Identity, rng);
                let sigma = DenseLayer::new(
                    &mut store,
                    "post.sigma",
                    width,
                    d,
                    Activation::Identity,
                    rng,
                );
                (Heads::Euclid { mu, sigma }, None, None)
            }
        };
        Ok(Self {
            cfg: cfg.clone(),
            geometry,
            n_nodes,
            feat_dim,
            dims,
            ball,
            store,
            gcn,
            heads,
            r_fd,
            t_raw,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn geometry(&self) -> LatentGeometry {
        self.geometry
    }

    pub fn num_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.feat_dim
    }

    pub fn block_dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ball(&self) -> BallConfig {
        self.ball
    }

    /// Trunk inputs for a training graph with the model's node count.
    pub fn inputs(&self, train: &Graph) -> Result<GraphInputs> {
        if train.num_nodes() != self.n_nodes {
            return Err(Error::DimensionMismatch {
                expected: self.n_nodes,
                got: train.num_nodes(),
            });
        }
        let features = match (self.feat_dim, train.features()) {
            (None, _) => None,
            (Some(k), Some(x)) if x.cols() == k => Some(x.clone()),
            (Some(k), Some(x)) => {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    got: x.cols(),
                })
            }
            (Some(_), None) => return Err(Error::usage("model expects node features")),
        };
        Ok(GraphInputs {
            adj: Arc::new(train.normalized_adjacency()),
            features,
        })
    }

    fn trunk(&self, t: &mut Tape, p: &Bound, inp: &GraphInputs) -> Var {
        let first = &self.gcn[0];
        let w = p.var(first.w);
        let xw = match &inp.features {
            Some(x) => t.spmm(x.clone(), w),
            None => w,
        };
        let y = t.spmm(inp.adj.clone(), xw);
        let mut h = first.activation.apply(t, y);
        for l in &self.gcn[1..] {
            h = l.forward(t, p, &inp.adj, h);
        }
        h
    }

    /// Posterior means and per-block (hyperbolic) or per-dimension
    /// (Euclidean) scales.
    fn heads(&self, t: &mut Tape, p: &Bound, h: Var) -> (Vec<Var>, Vec<Var>) {
        match &self.heads {
            Heads::Hyper(heads) => {
                let hv = heads.forward(t, p, h);
                (hv.mu, hv.sigma)
            }
            Heads::Euclid { mu, sigma } => {
                let m = mu.forward(t, p, h);
                let s = sigma.forward(t, p, h);
                let s = t.softplus(s);
                let s = t.offset(s, MIN_SIGMA);
                (vec![m], vec![s])
            }
        }
    }

    fn reparametrize(&self, t: &mut Tape, mu: &[Var], sigma: &[Var], noise: &[Var]) -> Vec<Var> {
        match &self.heads {
            Heads::Hyper(heads) => heads.sample(
                t,
                &crate::nn::HeadVars {
                    mu: mu.to_vec(),
                    sigma: sigma.to_vec(),
                },
                noise,
            ),
            Heads::Euclid { .. } => {
                let se = t.mul(sigma[0], noise[0]);
                vec![t.add(mu[0], se)]
            }
        }
    }

    /// Edge logits, `k×1`.
    fn edge_logits(&self, t: &mut Tape, p: &Bound, z: &[Var], pairs: &[(usize, usize)]) -> Var {
        let (us, vs) = pair_index(pairs);
        match self.geometry {
            LatentGeometry::Hyperbolic => {
                let ops = HyperOps::new(self.ball);
                let mut dists = Vec::with_capacity(z.len());
                for &zb in z {
                    let a = t.gather_rows(zb, us.clone());
                    let b = t.gather_rows(zb, vs.clone());
                    dists.push(ops.distance(t, a, b));
                }
                let d = if dists.len() == 1 {
                    dists[0]
                } else {
                    let mut acc = t.square(dists[0]);
                    for &db in &dists[1..] {
                        let sq = t.square(db);
                        acc = t.add(acc, sq);
                    }
                    let acc = t.clamp(acc, 1e-30, f64::INFINITY);
                    t.sqrt(acc)
                };
                let r = p.var(self.r_fd.expect("hyperbolic model has r"));
                let traw = p.var(self.t_raw.expect("hyperbolic model has t"));
                let temp = t.softplus(traw);
                let diff = t.sub(r, d);
                t.div(diff, temp)
            }
            LatentGeometry::Euclidean => {
                let a = t.gather_rows(z[0], us);
                let b = t.gather_rows(z[0], vs);
                let ab = t.mul(a, b);
                t.row_sum(ab)
            }
        }
    }

    pub fn sample_noise<R: Rng + ?Sized>(
        &self,
        train: &Graph,
        sampler: &mut PriorSampler,
        rng: &mut R,
    ) -> Result<VgaeNoise> {
        let n = self.n_nodes;
        let k = n.min(MMD_NODES);
        let mut nodes: Vec<usize> = if k == n {
            (0..n).collect()
        } else {
            sample_indices(rng, n, k).into_vec()
        };
        nodes.sort_unstable();
        let (z_prior, prior) = match self.geometry {
            LatentGeometry::Hyperbolic => {
                let z = sampler.sample_batch(n, &self.dims, Exec::default());
                let pr = sampler.sample_batch(k, &self.dims, Exec::default());
                (
                    latent_to_blocks(&z, &self.dims)?,
                    latent_to_blocks(&pr, &self.dims)?,
                )
            }
            LatentGeometry::Euclidean => {
                let d = self.cfg.latent_dim;
                let s = self.cfg.prior_sigma;
                let mut gauss = |rows: usize| {
                    let data = (0..rows * d)
                        .map(|_| s * rng.sample::<f64, _>(StandardNormal))
                        .collect();
                    Tensor::matrix(rows, d, data)
                };
                let z = gauss(n);
                let pr = gauss(k);
                (vec![z], vec![pr])
            }
        };
        let negatives = sample_negative_edges(train, train.num_edges(), rng)?;
        Ok(VgaeNoise {
            z_prior,
            prior,
            mmd_nodes: nodes.into(),
            negatives,
        })
    }

    /// Records the loss for training positives `pos`.
    pub fn loss_vars(
        &self,
        t: &mut Tape,
        p: &Bound,
        inp: &GraphInputs,
        pos: &[(usize, usize)],
        noise: &VgaeNoise,
    ) -> Result<LossVars> {
        if pos.is_empty() {
            return Err(Error::usage("no training edges"));
        }
        let h = self.trunk(t, p, inp);
        let (mu, sigma) = self.heads(t, p, h);
        let eps: Vec<Var> = noise
            .z_prior
            .iter()
            .map(|z| t.constant(z.clone()))
            .collect();
        let z = self.reparametrize(t, &mu, &sigma, &eps);

        // BCE over positives and negatives: softplus(-l) and softplus(l).
        let lp = self.edge_logits(t, p, &z, pos);
        let nlp = t.neg(lp);
        let bp = t.softplus(nlp);
        let sp = t.sum(bp);
        let mut total_bce = sp;
        let mut count = pos.len();
        if !noise.negatives.is_empty() {
            let ln = self.edge_logits(t, p, &z, &noise.negatives);
            let bn = t.softplus(ln);
            let sn = t.sum(bn);
            total_bce = t.add(sp, sn);
            count += noise.negatives.len();
        }
        let recon = t.scale(total_bce, 1.0 / count as f64);

        let sub: Vec<Var> = z
            .iter()
            .map(|&zb| t.gather_rows(zb, noise.mmd_nodes.clone()))
            .collect();
        let prior: Vec<Var> = noise.prior.iter().map(|x| t.constant(x.clone())).collect();
        let mmd = match self.geometry {
            LatentGeometry::Hyperbolic => {
                let ops = HyperOps::new(self.ball);
                tape_mmd(t, &prior, &sub, self.cfg.lambda, |t, a, b| {
                    ops.pairwise_distance(t, a, b)
                })?
            }
            LatentGeometry::Euclidean => tape_mmd(
                t,
                &prior,
                &sub,
                self.cfg.lambda,
                euclidean_pairwise_distance,
            )?,
        };

        let mut pen: Option<Var> = None;
        for &s in &sigma {
            let s2 = t.square(s);
            let s2 = t.sum(s2);
            pen = Some(match pen {
                Some(acc) => t.add(acc, s2),
                None => s2,
            });
        }
        let penalty = t.scale(pen.expect("at least one block"), 1.0 / self.n_nodes as f64);
        let codes = match self.geometry {
            LatentGeometry::Hyperbolic => sub,
            LatentGeometry::Euclidean => Vec::new(),
        };
        Ok(LossVars::combine(
            t,
            [recon, mmd, penalty],
            codes,
            self.cfg.beta,
            self.cfg.gamma,
        ))
    }

    /// Posterior means of every node, one `n×m_b` matrix per block.
    pub fn embed(&self, inp: &GraphInputs) -> Vec<Tensor> {
        let mut t = Tape::new();
        let p = self.store.bind(&mut t);
        let h = self.trunk(&mut t, &p, inp);
        let (mu, _) = self.heads(&mut t, &p, h);
        mu.iter().map(|&m| t.value(m).clone()).collect()
    }

    /// Posterior means as latent points (hyperbolic models only).
    pub fn embed_latent(&self, inp: &GraphInputs) -> Result<Vec<LatentPoint>> {
        if self.geometry != LatentGeometry::Hyperbolic {
            return Err(Error::usage("Euclidean model has no ball-valued embedding"));
        }
        super::blocks_to_latent(&self.embed(inp), self.ball)
    }

    /// Edge probabilities from the posterior means.
    pub fn score_edges(&self, inp: &GraphInputs, pairs: &[(usize, usize)]) -> Vec<f64> {
        if pairs.is_empty() {
            return Vec::new();
        }
        let mut t = Tape::new();
        let p = self.store.bind(&mut t);
        let h = self.trunk(&mut t, &p, inp);
        let (mu, _) = self.heads(&mut t, &p, h);
        let l = self.edge_logits(&mut t, &p, &mu, pairs);
        let s = t.sigmoid(l);
        t.value(s).data().to_vec()
    }

    /// `(AUC, AP)` of held-out positives against negatives.
    pub fn evaluate(
        &self,
        inp: &GraphInputs,
        pos: &[(usize, usize)],
        neg: &[(usize, usize)],
    ) -> Result<(f64, f64)> {
        evaluate_auc_ap(&self.score_edges(inp, pos), &self.score_edges(inp, neg))
    }

    /// Current Fermi–Dirac `(r, t)`.
    pub fn fermi_dirac(&self) -> Option<(f64, f64)> {
        let r = self.store.get(self.r_fd?).item();
        let traw = self.store.get(self.t_raw?).item();
        Some((r, traw.exp().ln_1p()))
    }
}

/// `1 / (1 + exp((d(z_i, z_j) - r) / t))` with the product-space distance.
pub fn edge_prob(zi: &LatentPoint, zj: &LatentPoint, r: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "temperature must be > 0, got {t}"
        )));
    }
    let d = zi.distance(zj)?;
    Ok(1.0 / (1.0 + ((d - r) / t).exp()))
}

/// One loss evaluation with fresh noise; returns the report and gradients.
pub fn vgae_loss<R: Rng + ?Sized>(
    model: &Vgae,
    train: &Graph,
    sampler: &mut PriorSampler,
    rng: &mut R,
) -> Result<(LossReport, Vec<Tensor>)> {
    let inp = model.inputs(train)?;
    let noise = model.sample_noise(train, sampler, rng)?;
    let mut t = Tape::new();
    let p = model.store.bind(&mut t);
    let lv = model.loss_vars(&mut t, &p, &inp, train.edges(), &noise)?;
    let mut g = t.backward(lv.total);
    let grads = p.vars().iter().map(|&v| g.take(v)).collect();
    Ok((lv.report(&t, 0), grads))
}

/// Full-batch training on `split.train` for `cfg.epochs` steps.
pub fn train_vgae(
    model: &mut Vgae,
    graph: &Graph,
    split: &EdgeSplit,
    mut on_epoch: impl FnMut(&LossReport),
) -> Result<Vec<LossReport>> {
    let cfg = model.cfg.clone();
    let train = graph.with_edges(&split.train)?;
    let inp = model.inputs(&train)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_9a4e);
    let mut sampler = PriorSampler::new(
        PriorSamplerConfig {
            seed: rng.next_u64(),
            ..cfg.prior()
        },
        model.ball,
    )?;
    let mut opt = Optimizer::new(
        AdamConfig::with_lr(cfg.lr)?,
        RsgdConfig::new(cfg.rlr)?,
        model.ball,
    );
    let mut reports = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let noise = model.sample_noise(&train, &mut sampler, &mut rng)?;
        let mut t = Tape::new();
        let p = model.store.bind(&mut t);
        let lv = model.loss_vars(&mut t, &p, &inp, train.edges(), &noise)?;
        let total = t.value(lv.total).item();
        if !total.is_finite() {
            return Err(Error::usage(format!(
                "loss diverged at epoch {epoch}: {total}"
            )));
        }
        if cfg!(debug_assertions) {
            lv.assert_codes_in_ball(&t, model.ball.max_norm());
        }
        let mut g = t.backward(lv.total);
        let grads: Vec<Tensor> = p.vars().iter().map(|&v| g.take(v)).collect();
        opt.step(&mut model.store, &grads);
        let mut r = lv.report(&t, epoch);
        r.seconds = start.elapsed().as_secs_f64();
        on_epoch(&r);
        reports.push(r);
    }
    Ok(reports)
}
