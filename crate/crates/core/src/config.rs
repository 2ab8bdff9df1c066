//! Training hyperparameters with their defaults in one place.
//!
//! Configuration files are plain `key = value` lines; `#` starts a comment.
//! Keys use the long flag names of the command-line tool without the leading
//! dashes (`latent-dim`, `beta`, `lambda`, …).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::gyrovector::BallConfig;
use crate::hgauss::{BlockLayout, PriorSamplerConfig};
use crate::mmd::KernelParams;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub latent_dim: usize,
    pub layout: BlockLayout,
    /// Weight of the MMD term.
    pub beta: f64,
    /// Laplacian kernel scale.
    pub lambda: f64,
    pub curvature: f64,
    pub eps: f64,
    pub r_max: f64,
    pub prior_sigma: f64,
    /// Adam learning rate (Euclidean parameters).
    pub lr: f64,
    /// Riemannian SGD learning rate (hyperbolic biases).
    pub rlr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    /// Weight of the `Σσ²` variance penalty.
    pub gamma: f64,
    /// Hidden widths of the Euclidean trunk.
    pub hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::mnist()
    }
}

impl TrainConfig {
    /// Image autoencoder defaults: 784→256→128 trunk, batch 128, β = 10.
    pub fn mnist() -> Self {
        Self {
            latent_dim: 10,
            layout: BlockLayout::Disks,
            beta: 10.0,
            lambda: 1.0,
            curvature: 1.0,
            eps: 1e-5,
            r_max: 5.0,
            prior_sigma: 1.0,
            lr: 1e-3,
            rlr: 1e-2,
            epochs: 20,
            batch: 128,
            seed: 0,
            gamma: 0.0,
            hidden: vec![256, 128],
        }
    }

    /// Graph autoencoder defaults: two GCN layers of width 32, latent 16.
    pub fn graph() -> Self {
        Self {
            latent_dim: 16,
            beta: 1.0,
            lr: 1e-2,
            rlr: 1e-2,
            epochs: 200,
            batch: 512,
            hidden: vec![32, 32],
            ..Self::mnist()
        }
    }

    pub fn ball(&self) -> Result<BallConfig> {
        BallConfig::new(self.curvature, self.eps)
    }

    pub fn kernel(&self) -> Result<KernelParams> {
        KernelParams::new(self.lambda)
    }

    pub fn prior(&self) -> PriorSamplerConfig {
        PriorSamplerConfig {
            r_max: self.r_max,
            sigma: self.prior_sigma,
            seed: self.seed,
        }
    }

    pub fn block_dims(&self) -> Vec<usize> {
        self.layout.block_dims(self.latent_dim)
    }

    pub fn validate(&self) -> Result<()> {
        self.ball()?;
        self.kernel()?;
        self.prior().validate()?;
        let bad = |what: &str| Err(Error::InvalidConfig(what.to_string()));
        if self.latent_dim == 0 {
            return bad("latent-dim must be positive");
        }
        if self.batch < 2 {
            return bad("batch must be at least 2");
        }
        if !(self.beta >= 0.0) || !(self.gamma >= 0.0) {
            return bad("beta and gamma must be non-negative");
        }
        if !(self.lr > 0.0) || !(self.rlr > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden widths must be positive");
        }
        Ok(())
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::InvalidConfig(format!("bad value {v:?} for {key}")))
        }
        match key {
            "latent-dim" => self.latent_dim = num(key, value)?,
            "block" => self.layout = BlockLayout::parse(value)?,
            "beta" => self.beta = num(key, value)?,
            "lambda" => self.lambda = num(key, value)?,
            "curvature" => self.curvature = num(key, value)?,
            "eps" => self.eps = num(key, value)?,
            "rmax" => self.r_max = num(key, value)?,
            "prior-sigma" => self.prior_sigma = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "rlr" => self.rlr = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "batch" => self.batch = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "gamma" => self.gamma = num(key, value)?,
            "hidden" => {
                self.hidden = value
                    .split(',')
                    .map(|s| num(key, s.trim()))
                    .collect::<Result<_>>()?
            }
            other => {
                return Err(Error::InvalidConfig(format!("unknown setting {other:?}")));
            }
        }
        Ok(())
    }

    /// Parses `key = value` lines.
    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected key = value", lineno + 1))
            })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_str(&text)
    }
}
