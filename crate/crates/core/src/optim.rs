//! Adam for Euclidean parameters, Riemannian SGD for ball-valued ones.

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::gyrovector::{self, BallConfig, BallPoint, TangentVec};
use crate::nn::{ParamKind, ParamStore};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Result<Self> {
        let cfg = Self {
            lr,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("bad Adam settings {self:?}")))
        }
    }
}

/// Moment buffers, created on the first step with the parameter shapes.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub cfg: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new(cfg: AdamConfig) -> Self {
        Self {
            cfg,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected update of every `(param, grad)` pair. Pairs must
    /// come in the same order and with the same lengths on every call.
    pub fn step<'a>(&mut self, pairs: impl IntoIterator<Item = (&'a mut [f64], &'a [f64])>) {
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (k, (p, g)) in pairs.into_iter().enumerate() {
            assert_eq!(p.len(), g.len(), "gradient length does not match parameter");
            if k == self.m.len() {
                self.m.push(vec![0.0; p.len()]);
                self.v.push(vec![0.0; p.len()]);
            }
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            assert_eq!(m.len(), p.len(), "parameter {k} changed size between steps");
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

/// Adam update of a list of tensors.
pub fn adam_step(state: &mut AdamState, params: &mut [Tensor], grads: &[Tensor]) {
    assert_eq!(params.len(), grads.len());
    state.step(
        params
            .iter_mut()
            .zip(grads)
            .map(|(p, g)| (p.data_mut(), g.data())),
    );
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RsgdConfig {
    pub lr: f64,
}

impl Default for RsgdConfig {
    fn default() -> Self {
        Self { lr: 1e-2 }
    }
}

impl RsgdConfig {
    pub fn new(lr: f64) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "RSGD lr must be > 0, got {lr}"
            )));
        }
        Ok(Self { lr })
    }
}

/// `exp_θ(-lr · g / λ_θ²)` on raw coordinates, projected.
pub fn rsgd_step_raw(theta: &[f64], grad: &[f64], lr: f64, ball: BallConfig) -> Vec<f64> {
    let c = ball.c();
    let lam = gyrovector::conformal_factor_raw(theta, c);
    let mut out = gyrovector::exp_at_raw(theta, grad, -lr / (lam * lam), c);
    gyrovector::project_raw(&mut out, c, ball.eps());
    out
}

pub fn rsgd_step(
    theta: &BallPoint,
    euclidean_grad: &TangentVec,
    cfg: RsgdConfig,
) -> Result<BallPoint> {
    if euclidean_grad.dim() != theta.dim() {
        return Err(Error::DimensionMismatch {
            expected: theta.dim(),
            got: euclidean_grad.dim(),
        });
    }
    let ball = theta.config();
    Ok(ball.project(rsgd_step_raw(
        theta.coords(),
        &euclidean_grad.0,
        cfg.lr,
        ball,
    )))
}

/// Adam on the Euclidean parameters of a store and RSGD on the hyperbolic
/// ones, whose rows are treated as independent ball points.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub adam: AdamState,
    pub rsgd: RsgdConfig,
    pub ball: BallConfig,
}

impl Optimizer {
    pub fn new(adam: AdamConfig, rsgd: RsgdConfig, ball: BallConfig) -> Self {
        Self {
            adam: AdamState::new(adam),
            rsgd,
            ball,
        }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &[Tensor]) {
        assert_eq!(store.len(), grads.len(), "one gradient per parameter");
        let mut euclid = Vec::new();
        for (p, g) in store.params_mut().iter_mut().zip(grads) {
            assert_eq!(p.value.shape(), g.shape(), "gradient shape for {}", p.name);
            match p.kind {
                ParamKind::Euclidean => euclid.push((p.value.data_mut(), g.data())),
                ParamKind::Hyperbolic => {
                    let m = *p.value.shape().last().unwrap_or(&1);
                    let data = p.value.data_mut();
                    for (row, grow) in data.chunks_mut(m).zip(g.data().chunks(m)) {
                        let next = rsgd_step_raw(row, grow, self.rsgd.lr, self.ball);
                        row.copy_from_slice(&next);
                    }
                }
            }
        }
        self.adam.step(euclid);
    }
}
