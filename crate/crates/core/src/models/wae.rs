use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{latent_to_blocks, tape_mmd, LossReport, LossVars};
use crate::autodiff::{Tape, Tensor, Var};
use crate::config::TrainConfig;
use crate::data::ImageDataset;
use crate::gyrovector::BallConfig;
use crate::hgauss::{LatentPoint, PriorSampler, PriorSamplerConfig};
use crate::nn::{
    Activation, Bound, DenseLayer, EncoderOutput, HeadVars, HyperOps, ParamStore, PosteriorHeads,
};
use crate::optim::{AdamConfig, Optimizer, RsgdConfig};
use crate::par::Exec;
use crate::{Error, Result};

/// Image autoencoder with a product-of-disks latent space.
///
/// Encoder: ReLU trunk with widths `cfg.hidden`, then one hyperbolic mean
/// head and one scale head per block. Decoder: the concatenated `log_0` of
/// the blocks through the mirrored trunk, ending in pixel logits.
#[derive(Debug, Clone)]
pub struct PoincareWae {
    cfg: TrainConfig,
    input_dim: usize,
    dims: Vec<usize>,
    ball: BallConfig,
    pub store: ParamStore,
    encoder: Vec<DenseLayer>,
    heads: PosteriorHeads,
    decoder: Vec<DenseLayer>,
}

/// Exogenous noise for one step: the prior draws fed through the
/// reparametrization and the prior samples on the other side of the MMD.
#[derive(Debug, Clone, PartialEq)]
pub struct WaeNoise {
    pub z_prior: Vec<Tensor>,
    pub prior: Vec<Tensor>,
}

impl WaeNoise {
    pub fn sample(n: usize, dims: &[usize], sampler: &mut PriorSampler) -> Self {
        let z = sampler.sample_batch(n, dims, Exec::default());
        let p = sampler.sample_batch(n, dims, Exec::default());
        Self {
            z_prior: latent_to_blocks(&z, dims).expect("sampler emits the requested blocks"),
            prior: latent_to_blocks(&p, dims).expect("sampler emits the requested blocks"),
        }
    }
}

impl PoincareWae {
    pub fn new<R: Rng + ?Sized>(cfg: &TrainConfig, input_dim: usize, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        if input_dim == 0 {
            return Err(Error::InvalidConfig(
                "input dimension must be positive".into(),
            ));
        }
        let ball = cfg.ball()?;
        let dims = cfg.block_dims();
        let mut store = ParamStore::new();
        let mut encoder = Vec::new();
        let mut width = input_dim;
        for (k, &h) in cfg.hidden.iter().enumerate() {
            encoder.push(DenseLayer::new(
                &mut store,
                &format!("enc{k}"),
                width,
                h,
                Activation::Relu,
                rng,
            ));
            width = h;
        }
        let heads = PosteriorHeads::new(&mut store, "post", width, &dims, ball, rng);
        let mut decoder = Vec::new();
        let mut width = cfg.latent_dim;
        for (k, &h) in cfg.hidden.iter().rev().enumerate() {
            decoder.push(DenseLayer::new(
                &mut store,
                &format!("dec{k}"),
                width,
                h,
                Activation::Relu,
                rng,
            ));
            width = h;
        }
        decoder.push(DenseLayer::new(
            &mut store,
            "out",
            width,
            input_dim,
            Activation::Identity,
            rng,
        ));
        Ok(Self {
            cfg: cfg.clone(),
            input_dim,
            dims,
            ball,
            store,
            encoder,
            heads,
            decoder,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn block_dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ball(&self) -> BallConfig {
        self.ball
    }

    pub fn encode_vars(&self, t: &mut Tape, p: &Bound, x: Var) -> HeadVars {
        let mut h = x;
        for l in &self.encoder {
            h = l.forward(t, p, h);
        }
        self.heads.forward(t, p, h)
    }

    /// Pixel logits for per-block latent matrices.
    pub fn decode_vars(&self, t: &mut Tape, p: &Bound, z: &[Var]) -> Var {
        let ops = HyperOps::new(self.ball);
        let logs: Vec<Var> = z.iter().map(|&b| ops.log0(t, b)).collect();
        let mut h = if logs.len() == 1 {
            logs[0]
        } else {
            t.concat(&logs)
        };
        for l in &self.decoder {
            h = l.forward(t, p, h);
        }
        h
    }

    /// Records the loss for the batch `x` (rows are binary images).
    pub fn loss_vars(
        &self,
        t: &mut Tape,
        p: &Bound,
        x: &Tensor,
        noise: &WaeNoise,
    ) -> Result<LossVars> {
        let n = x.rows();
        if n < 2 {
            return Err(Error::usage(format!(
                "batch of {n} images; MMD needs at least 2"
            )));
        }
        if x.cols() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.cols(),
            });
        }
        let xv = t.constant(x.clone());
        let heads = self.encode_vars(t, p, xv);
        let zp: Vec<Var> = noise
            .z_prior
            .iter()
            .map(|z| t.constant(z.clone()))
            .collect();
        let z = self.heads.sample(t, &heads, &zp);
        let logits = self.decode_vars(t, p, &z);

        // Bernoulli NLL from logits: softplus(l) - x·l, summed over pixels.
        let sp = t.softplus(logits);
        let xl = t.mul(xv, logits);
        let nll = t.sub(sp, xl);
        let nll = t.sum(nll);
        let recon = t.scale(nll, 1.0 / n as f64);

        let prior: Vec<Var> = noise.prior.iter().map(|z| t.constant(z.clone())).collect();
        let ops = HyperOps::new(self.ball);
        let mmd = tape_mmd(t, &prior, &z, self.cfg.lambda, |t, a, b| {
            ops.pairwise_distance(t, a, b)
        })?;

        let mut pen: Option<Var> = None;
        for &s in &heads.sigma {
            let s2 = t.square(s);
            let s2 = t.sum(s2);
            pen = Some(match pen {
                Some(acc) => t.add(acc, s2),
                None => s2,
            });
        }
        let penalty = t.scale(pen.expect("at least one block"), 1.0 / n as f64);
        Ok(LossVars::combine(
            t,
            [recon, mmd, penalty],
            z,
            self.cfg.beta,
            self.cfg.gamma,
        ))
    }

    /// Loss report and one gradient per parameter.
    pub fn loss_and_grads(
        &self,
        x: &Tensor,
        noise: &WaeNoise,
    ) -> Result<(LossReport, Vec<Tensor>)> {
        let mut t = Tape::new();
        let p = self.store.bind(&mut t);
        let lv = self.loss_vars(&mut t, &p, x, noise)?;
        let mut g = t.backward(lv.total);
        let grads = p.vars().iter().map(|&v| g.take(v)).collect();
        Ok((lv.report(&t, 0), grads))
    }

    pub fn encode(&self, x: &Tensor) -> Result<Vec<EncoderOutput>> {
        if x.cols() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.cols(),
            });
        }
        let mut t = Tape::new();
        let p = self.store.bind(&mut t);
        let xv = t.constant(x.clone());
        let h = self.encode_vars(&mut t, &p, xv);
        self.heads.outputs(&t, &h)
    }

    /// Pixel probabilities for the given latent points.
    pub fn decode(&self, z: &[LatentPoint]) -> Result<Tensor> {
        if z.is_empty() {
            return Ok(Tensor::matrix(0, self.input_dim, Vec::new()));
        }
        let blocks = latent_to_blocks(z, &self.dims)?;
        let mut t = Tape::new();
        let p = self.store.bind(&mut t);
        let zv: Vec<Var> = blocks.into_iter().map(|b| t.constant(b)).collect();
        let l = self.decode_vars(&mut t, &p, &zv);
        let s = t.sigmoid(l);
        Ok(t.value(s).clone())
    }

    /// Mean Bernoulli NLL per image, decoding the posterior means.
    pub fn reconstruction_error(&self, x: &Tensor) -> Result<f64> {
        let mu: Vec<LatentPoint> = self.encode(x)?.into_iter().map(|o| o.mu).collect();
        let probs = self.decode(&mu)?;
        let nll: f64 = probs
            .data()
            .iter()
            .zip(x.data())
            .map(|(&p, &xi)| {
                let p = p.clamp(1e-12, 1.0 - 1e-12);
                -(xi * p.ln() + (1.0 - xi) * (1.0 - p).ln())
            })
            .sum();
        Ok(nll / x.rows().max(1) as f64)
    }
}

/// Loss on one batch with noise drawn from `sampler`.
pub fn wae_loss(
    model: &PoincareWae,
    x: &Tensor,
    sampler: &mut PriorSampler,
) -> Result<(LossReport, Vec<Tensor>)> {
    if x.rows() < 2 {
        return Err(Error::usage(format!(
            "batch of {} images; MMD needs at least 2",
            x.rows()
        )));
    }
    let noise = WaeNoise::sample(x.rows(), &model.dims, sampler);
    model.loss_and_grads(x, &noise)
}

/// Decoded prior samples, `n×input_dim` probabilities.
pub fn generate(model: &PoincareWae, n: usize, sampler: &mut PriorSampler) -> Result<Tensor> {
    let z = sampler.sample_batch(n, &model.dims, Exec::default());
    model.decode(&z)
}

/// Trains for `cfg.epochs` epochs with fresh binarization and shuffling each
/// epoch. Calls `on_epoch` with the epoch-mean report after every epoch.
pub fn train_wae(
    model: &mut PoincareWae,
    data: &ImageDataset,
    mut on_epoch: impl FnMut(&LossReport),
) -> Result<Vec<LossReport>> {
    let cfg = model.cfg.clone();
    if data.dim() != model.input_dim {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim,
            got: data.dim(),
        });
    }
    if data.len() < 2 {
        return Err(Error::usage("need at least two images"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
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
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut reports = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut steps = Vec::new();
        for chunk in order.chunks(cfg.batch) {
            if chunk.len() < 2 {
                continue;
            }
            let x = data.binarized_batch(chunk, &mut rng);
            let noise = WaeNoise::sample(chunk.len(), &model.dims, &mut sampler);
            let mut t = Tape::new();
            let p = model.store.bind(&mut t);
            let lv = model.loss_vars(&mut t, &p, &x, &noise)?;
            let total = t.value(lv.total).item();
            if !total.is_finite() {
                return Err(Error::usage(format!(
                    "loss diverged at epoch {epoch}: {total}"
                )));
            }
            let mut g = t.backward(lv.total);
            let grads: Vec<Tensor> = p.vars().iter().map(|&v| g.take(v)).collect();
            if cfg!(debug_assertions) {
                lv.assert_codes_in_ball(&t, model.ball.max_norm());
            }
            steps.push(lv.report(&t, epoch));
            opt.step(&mut model.store, &grads);
        }
        let r = LossReport::mean(epoch, &steps, start.elapsed().as_secs_f64());
        on_epoch(&r);
        reports.push(r);
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check_many;
    use crate::hgauss::BlockLayout;
    use crate::models::blocks_to_latent;
    use approx::assert_abs_diff_eq;

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            latent_dim: 2,
            hidden: vec![8, 6],
            batch: 8,
            ..TrainConfig::mnist()
        }
    }

    fn images(n: usize, d: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::matrix(
            n,
            d,
            (0..n * d)
                .map(|_| f64::from(rng.random_bool(0.3)))
                .collect(),
        )
    }

    fn sampler(seed: u64) -> PriorSampler {
        PriorSampler::new(
            PriorSamplerConfig {
                seed,
                ..PriorSamplerConfig::default()
            },
            BallConfig::default(),
        )
        .unwrap()
    }

    #[test]
    fn zero_images_with_zero_logits() {
        let cfg = TrainConfig::mnist();
        let mut model = PoincareWae::new(&cfg, 784, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let out = model.decoder.last().unwrap().clone();
        *model.store.get_mut(out.w) = Tensor::zeros(model.store.get(out.w).shape());
        let x = Tensor::zeros(&[4, 784]);
        let (r, _) = wae_loss(&model, &x, &mut sampler(1)).unwrap();
        assert_abs_diff_eq!(r.recon, 784.0 * std::f64::consts::LN_2, epsilon = 1e-9);
        assert_abs_diff_eq!(r.recon, 543.43, epsilon = 5e-3);
        assert_abs_diff_eq!(r.total, r.recon + 10.0 * r.mmd, epsilon = 1e-9);
    }

    #[test]
    fn beta_zero_gives_pure_reconstruction() {
        let cfg = TrainConfig {
            beta: 0.0,
            ..small_cfg()
        };
        let model = PoincareWae::new(&cfg, 12, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let (r, _) = wae_loss(&model, &images(5, 12, 1), &mut sampler(2)).unwrap();
        assert_eq!(r.total, r.recon);
    }

    #[test]
    fn injected_identical_sets_give_estimator_value() {
        // With σ → floor and μ fixed at the prior samples, posterior = prior.
        let cfg = small_cfg();
        let model = PoincareWae::new(&cfg, 12, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let mut s = sampler(4);
        let noise = WaeNoise::sample(6, &[2], &mut s);
        let mut t = Tape::new();
        let a: Vec<Var> = noise.prior.iter().map(|z| t.constant(z.clone())).collect();
        let ops = HyperOps::new(BallConfig::default());
        let m = tape_mmd(&mut t, &a, &a, 1.0, |t, x, y| {
            ops.pairwise_distance(t, x, y)
        })
        .unwrap();
        let pts = blocks_to_latent(&noise.prior, BallConfig::default()).unwrap();
        let expect = crate::mmd::mmd_estimate(&pts, &pts, cfg.kernel().unwrap()).unwrap();
        // coincident pairs sit at acosh(1 + rounding), hence the looser bound
        assert_abs_diff_eq!(t.value(m).item(), expect, epsilon = 1e-7);
        assert!(model.block_dims() == [2]);
    }

    #[test]
    fn batch_of_one_is_usage_error() {
        let model = PoincareWae::new(&small_cfg(), 12, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(matches!(
            wae_loss(&model, &images(1, 12, 0), &mut sampler(0)),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn end_to_end_gradient_check() {
        let cfg = TrainConfig {
            gamma: 0.3,
            ..small_cfg()
        };
        let mut model = PoincareWae::new(&cfg, 10, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        model.store.get_mut(model.heads.mu[0].b_h).data_mut()[0] = 0.2;
        let x = images(8, 10, 5);
        let noise = WaeNoise::sample(8, &[2], &mut sampler(6));
        let values: Vec<Tensor> = model
            .store
            .params()
            .iter()
            .map(|p| p.value.clone())
            .collect();
        let err = grad_check_many(
            |t, v| {
                let p = Bound::from_vars(v.to_vec());
                model.loss_vars(t, &p, &x, &noise).unwrap().total
            },
            &values,
            1e-5,
        );
        assert!(err < 1e-3, "err = {err}");
    }

    #[test]
    fn generate_range_and_determinism() {
        let model = PoincareWae::new(&small_cfg(), 12, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(generate(&model, 0, &mut sampler(1)).unwrap().rows(), 0);
        let a = generate(&model, 5, &mut sampler(1)).unwrap();
        let b = generate(&model, 5, &mut sampler(1)).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().all(|&p| (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn smoke_training_is_deterministic() {
        let cfg = TrainConfig {
            epochs: 2,
            layout: BlockLayout::Lines,
            latent_dim: 3,
            ..small_cfg()
        };
        let pixels: Vec<u8> = (0..64 * 12).map(|k| ((k * 37) % 256) as u8).collect();
        let data = ImageDataset::new(pixels, 64, 3, 4).unwrap();
        let run = || {
            let mut m = PoincareWae::new(&cfg, 12, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
            let mut lines = Vec::new();
            let r = train_wae(&mut m, &data, |r| lines.push(r.epoch)).unwrap();
            (r, lines, m.store)
        };
        let (a, lines, sa) = run();
        let (b, _, sb) = run();
        assert_eq!(lines, vec![1, 2]);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!((x.recon, x.mmd, x.total), (y.recon, y.mmd, y.total));
            assert!((x.total - (x.recon + cfg.beta * x.mmd)).abs() < 1e-9);
        }
        assert_eq!(sa, sb);
    }
}
