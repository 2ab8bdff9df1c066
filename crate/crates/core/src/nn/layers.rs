use std::sync::Arc;

use rand::Rng;

use super::{Activation, Bound, HyperOps, ParamId, ParamKind, ParamStore};
use crate::autodiff::{CsrMatrix, Tape, Tensor, Var};
use crate::gyrovector::{BallConfig, BallPoint, TangentVec};
use crate::hgauss::{LatentPoint, MIN_SIGMA};
use crate::{Error, Result};

/// `act(x W + b)` with `W: in×out` and `b: 1×out`.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub w: ParamId,
    pub b: ParamId,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let w = store.add_glorot(format!("{name}.w"), input, output, rng);
        let b = store.add(
            format!("{name}.b"),
            ParamKind::Euclidean,
            Tensor::zeros(&[1, output]),
        );
        Self { w, b, activation }
    }

    pub fn forward(&self, t: &mut Tape, p: &Bound, x: Var) -> Var {
        let xw = t.matmul(x, p.var(self.w));
        let y = t.add_row(xw, p.var(self.b));
        self.activation.apply(t, y)
    }
}

/// Graph convolution `act(Â H W)` with a fixed normalized adjacency `Â`.
#[derive(Debug, Clone)]
pub struct GcnLayer {
    pub w: ParamId,
    pub activation: Activation,
}

impl GcnLayer {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let w = store.add_glorot(format!("{name}.w"), input, output, rng);
        Self { w, activation }
    }

    pub fn forward(&self, t: &mut Tape, p: &Bound, adj: &Arc<CsrMatrix>, h: Var) -> Var {
        let hw = t.matmul(h, p.var(self.w));
        let y = t.spmm(adj.clone(), hw);
        self.activation.apply(t, y)
    }
}

/// `φ_h(W^⊗ exp_0(h) ⊕ b_h)` mapping Euclidean features to an `m`-ball.
#[derive(Debug, Clone)]
pub struct HyperbolicFFLayer {
    pub w: ParamId,
    pub b_h: ParamId,
    pub activation: Activation,
    pub ops: HyperOps,
}

impl HyperbolicFFLayer {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        activation: Activation,
        ball: BallConfig,
        rng: &mut R,
    ) -> Self {
        let w = store.add_glorot(format!("{name}.w"), input, output, rng);
        let b_h = store.add(
            format!("{name}.b_h"),
            ParamKind::Hyperbolic,
            Tensor::zeros(&[1, output]),
        );
        Self {
            w,
            b_h,
            activation,
            ops: HyperOps::new(ball),
        }
    }

    pub fn forward(&self, t: &mut Tape, p: &Bound, h: Var) -> Var {
        let n = t.value(h).rows();
        let ops = self.ops;
        let x = ops.exp0(t, h);
        let y = ops.matvec(t, p.var(self.w), x);
        let b = t.broadcast_rows(p.var(self.b_h), n);
        let y = ops.mobius_add(t, y, b);
        match self.activation {
            Activation::Identity => y,
            act => ops.nonlinearity(t, y, |t, v| act.apply(t, v)),
        }
    }
}

/// `softplus(h w + b) + 1e-4`, one positive scale per row.
#[derive(Debug, Clone)]
pub struct SigmaHead {
    pub w: ParamId,
    pub b: ParamId,
}

impl SigmaHead {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        rng: &mut R,
    ) -> Self {
        let w = store.add_glorot(format!("{name}.w"), input, 1, rng);
        let b = store.add(
            format!("{name}.b"),
            ParamKind::Euclidean,
            Tensor::zeros(&[1, 1]),
        );
        Self { w, b }
    }

    pub fn forward(&self, t: &mut Tape, p: &Bound, h: Var) -> Var {
        let hw = t.matmul(h, p.var(self.w));
        let y = t.add_row(hw, p.var(self.b));
        let s = t.softplus(y);
        t.offset(s, MIN_SIGMA)
    }
}

/// Posterior mean and scale of one latent point.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    pub mu: LatentPoint,
    pub sigma: Vec<f64>,
}

impl EncoderOutput {
    pub fn new(mu: LatentPoint, sigma: Vec<f64>) -> Result<Self> {
        if sigma.len() != mu.blocks().len() {
            return Err(Error::DimensionMismatch {
                expected: mu.blocks().len(),
                got: sigma.len(),
            });
        }
        if sigma.iter().any(|&s| !(s >= MIN_SIGMA) || !s.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "posterior scales must be finite and >= {MIN_SIGMA}"
            )));
        }
        Ok(Self { mu, sigma })
    }
}

/// One hyperbolic mean head and one scale head per latent block.
#[derive(Debug, Clone)]
pub struct PosteriorHeads {
    pub mu: Vec<HyperbolicFFLayer>,
    pub sigma: Vec<SigmaHead>,
    dims: Vec<usize>,
    ball: BallConfig,
}

/// Per-block tape outputs of [`PosteriorHeads::forward`]: `n×m_b` means and
/// `n×1` scales.
#[derive(Debug, Clone)]
pub struct HeadVars {
    pub mu: Vec<Var>,
    pub sigma: Vec<Var>,
}

impl PosteriorHeads {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        dims: &[usize],
        ball: BallConfig,
        rng: &mut R,
    ) -> Self {
        let mut mu = Vec::new();
        let mut sigma = Vec::new();
        for (b, &m) in dims.iter().enumerate() {
            mu.push(HyperbolicFFLayer::new(
                store,
                &format!("{name}.mu{b}"),
                input,
                m,
                Activation::Identity,
                ball,
                rng,
            ));
            sigma.push(SigmaHead::new(
                store,
                &format!("{name}.sigma{b}"),
                input,
                rng,
            ));
        }
        Self {
            mu,
            sigma,
            dims: dims.to_vec(),
            ball,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ball(&self) -> BallConfig {
        self.ball
    }

    pub fn forward(&self, t: &mut Tape, p: &Bound, h: Var) -> HeadVars {
        HeadVars {
            mu: self.mu.iter().map(|l| l.forward(t, p, h)).collect(),
            sigma: self.sigma.iter().map(|l| l.forward(t, p, h)).collect(),
        }
    }

    /// `μ ⊕ diag(σ)^⊗ z_prior` per block; `z_prior` holds one `n×m_b` matrix
    /// per block.
    pub fn sample(&self, t: &mut Tape, heads: &HeadVars, z_prior: &[Var]) -> Vec<Var> {
        let ops = HyperOps::new(self.ball);
        heads
            .mu
            .iter()
            .zip(&heads.sigma)
            .zip(z_prior)
            .map(|((&mu, &sigma), &z)| {
                let s = ops.diag_scale(t, sigma, z);
                ops.mobius_add(t, mu, s)
            })
            .collect()
    }

    /// Reads the head values back as one [`EncoderOutput`] per row.
    pub fn outputs(&self, t: &Tape, heads: &HeadVars) -> Result<Vec<EncoderOutput>> {
        let n = t.value(heads.mu[0]).rows();
        (0..n)
            .map(|i| {
                let blocks = heads
                    .mu
                    .iter()
                    .map(|&v| self.ball.project(t.value(v).row(i).to_vec()))
                    .collect();
                let sigma = heads.sigma.iter().map(|&v| t.value(v).data()[i]).collect();
                EncoderOutput::new(LatentPoint::new(blocks)?, sigma)
            })
            .collect()
    }
}

/// `φ_h(x) = exp_0(φ(log_0 x))` with `φ` applied coordinate-wise.
pub fn hyperbolic_nonlinearity(x: &BallPoint, phi: impl Fn(f64) -> f64) -> BallPoint {
    let v = x.log0();
    x.config()
        .exp0(&TangentVec(v.0.into_iter().map(phi).collect()))
}

/// `z = μ ⊕ diag(σ)^⊗ z_prior`, blockwise.
pub fn reparametrize(out: &EncoderOutput, z_prior: &LatentPoint) -> Result<LatentPoint> {
    if out.mu.block_dims() != z_prior.block_dims() {
        return Err(Error::usage(
            "prior sample and posterior have different block structures",
        ));
    }
    let blocks = out
        .mu
        .blocks()
        .iter()
        .zip(&out.sigma)
        .zip(z_prior.blocks())
        .map(|((mu, &s), z)| mu.mobius_add(&z.gyro_scale(s)))
        .collect::<Result<_>>()?;
    LatentPoint::new(blocks)
}
