//! Hyperbolic Gaussian density and the standard-prior rejection sampler.
//!
//! The latent space is a product of low-dimensional blocks. Two-dimensional
//! blocks (Poincaré disks) are the default; an odd latent dimension adds a
//! single one-dimensional block. A single `d`-dimensional ball is also
//! supported, with a numerically integrated normalizer.
//!
//! For a disk, the density with respect to hyperbolic area is
//! `exp(-d(x, μ)² / 2σ²) / Z(σ)` with
//! `Z(σ) = 2π·√(π/2)·σ·exp(σ²/2)·erf(σ/√2)` at unit curvature.

use std::f64::consts::PI;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::gyrovector::{BallConfig, BallPoint};
use crate::par::Exec;
use crate::{Error, Result};

/// Smallest admissible per-block scale.
pub const MIN_SIGMA: f64 = 1e-4;

/// How a `d`-dimensional latent code is split into blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BlockLayout {
    /// `⌊d/2⌋` disks plus one line when `d` is odd.
    #[default]
    Disks,
    /// `d` one-dimensional blocks.
    Lines,
    /// One `d`-dimensional ball.
    Ball,
}

impl BlockLayout {
    pub fn block_dims(self, d: usize) -> Vec<usize> {
        match self {
            BlockLayout::Disks => {
                let mut dims = vec![2; d / 2];
                if d % 2 == 1 {
                    dims.push(1);
                }
                dims
            }
            BlockLayout::Lines => vec![1; d],
            BlockLayout::Ball => vec![d],
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "2" | "disks" => Ok(BlockLayout::Disks),
            "1" | "lines" => Ok(BlockLayout::Lines),
            "ball" => Ok(BlockLayout::Ball),
            other => Err(Error::InvalidConfig(format!(
                "unknown block layout {other:?} (expected 2, 1 or ball)"
            ))),
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            BlockLayout::Disks => 2,
            BlockLayout::Lines => 1,
            BlockLayout::Ball => 0,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            2 => Ok(BlockLayout::Disks),
            1 => Ok(BlockLayout::Lines),
            0 => Ok(BlockLayout::Ball),
            t => Err(Error::Checkpoint(format!("unknown block layout tag {t}"))),
        }
    }
}

/// A latent code: an ordered product of ball points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentPoint {
    blocks: Vec<BallPoint>,
}

impl LatentPoint {
    pub fn new(blocks: Vec<BallPoint>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::usage("a latent point needs at least one block"));
        }
        Ok(Self { blocks })
    }

    /// Builds a latent point from concatenated block coordinates.
    pub fn from_flat(flat: &[f64], dims: &[usize], ball: BallConfig) -> Result<Self> {
        let total: usize = dims.iter().sum();
        if flat.len() != total {
            return Err(Error::DimensionMismatch {
                expected: total,
                got: flat.len(),
            });
        }
        let mut off = 0;
        let blocks = dims
            .iter()
            .map(|&m| {
                let b = ball.project(flat[off..off + m].to_vec());
                off += m;
                b
            })
            .collect();
        Self::new(blocks)
    }

    pub fn origin(dims: &[usize], ball: BallConfig) -> Self {
        Self {
            blocks: dims.iter().map(|&m| ball.origin(m)).collect(),
        }
    }

    pub fn blocks(&self) -> &[BallPoint] {
        &self.blocks
    }

    pub fn block_dims(&self) -> Vec<usize> {
        self.blocks.iter().map(BallPoint::dim).collect()
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(BallPoint::dim).sum()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.blocks
            .iter()
            .flat_map(|b| b.coords().to_vec())
            .collect()
    }

    /// Concatenated `log_0` of every block.
    pub fn log0_flat(&self) -> Vec<f64> {
        self.blocks.iter().flat_map(|b| b.log0().0).collect()
    }

    fn check_structure(&self, other: &LatentPoint) -> Result<()> {
        if self.blocks.len() != other.blocks.len() {
            return Err(Error::DimensionMismatch {
                expected: self.blocks.len(),
                got: other.blocks.len(),
            });
        }
        Ok(())
    }

    /// Per-block geodesic distances.
    pub fn block_distances(&self, other: &LatentPoint) -> Result<Vec<f64>> {
        self.check_structure(other)?;
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a.distance(b))
            .collect()
    }

    /// Geodesic distance on the product manifold, `sqrt(Σ_b d_b²)`.
    pub fn distance(&self, other: &LatentPoint) -> Result<f64> {
        Ok(self
            .block_distances(other)?
            .iter()
            .map(|d| d * d)
            .sum::<f64>()
            .sqrt())
    }
}

/// Normalizer of the hyperbolic Gaussian on the unit-curvature disk.
pub fn normalizer(sigma: f64) -> f64 {
    disk_normalizer(sigma, 1.0)
}

/// Disk normalizer at curvature `-c`:
/// `2π/√c · σ√(π/2) · exp(cσ²/2) · erf(√c·σ/√2)`.
pub fn disk_normalizer(sigma: f64, c: f64) -> f64 {
    let sc = c.sqrt();
    2.0 * PI / sc
        * sigma
        * (PI / 2.0).sqrt()
        * (0.5 * c * sigma * sigma).exp()
        * libm::erf(sc * sigma / std::f64::consts::SQRT_2)
}

/// Normalizer for a block of dimension `dim`.
///
/// Lines are isometric to the real line, so their normalizer is the Euclidean
/// `σ√(2π)`. Balls of dimension three or more are integrated numerically.
pub fn block_normalizer(sigma: f64, dim: usize, c: f64) -> f64 {
    match dim {
        0 => 1.0,
        1 => sigma * (2.0 * PI).sqrt(),
        2 => disk_normalizer(sigma, c),
        m => {
            let sc = c.sqrt();
            let sphere = sphere_area(m);
            let upper = 10.0 * sigma + (m as f64) * sigma * sigma * sc + 10.0;
            let ln_f = |r: f64| {
                -r * r / (2.0 * sigma * sigma) + (m as f64 - 1.0) * ((sc * r).sinh() / sc).ln()
            };
            sphere
                * simpson(
                    |r| if r <= 0.0 { 0.0 } else { ln_f(r).exp() },
                    0.0,
                    upper,
                    20_000,
                )
        }
    }
}

/// Surface area of the unit sphere in `R^m`.
fn sphere_area(m: usize) -> f64 {
    // ω_{m-1} = 2π^{m/2} / Γ(m/2)
    let half = m as f64 / 2.0;
    2.0 * PI.powf(half) / libm::tgamma(half)
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// A product of independent hyperbolic Gaussians, one per latent block.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperGaussian {
    mu: LatentPoint,
    sigma: Vec<f64>,
}

impl HyperGaussian {
    pub fn new(mu: LatentPoint, sigma: Vec<f64>) -> Result<Self> {
        if sigma.len() != mu.blocks().len() {
            return Err(Error::DimensionMismatch {
                expected: mu.blocks().len(),
                got: sigma.len(),
            });
        }
        if let Some(s) = sigma.iter().find(|s| !(**s >= MIN_SIGMA)) {
            return Err(Error::InvalidConfig(format!(
                "sigma must be >= {MIN_SIGMA}, got {s}"
            )));
        }
        Ok(Self { mu, sigma })
    }

    pub fn mu(&self) -> &LatentPoint {
        &self.mu
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// `Σ_b [ -d(x_b, μ_b)²/(2σ_b²) - ln Z(σ_b) ]`.
    pub fn log_pdf(&self, x: &LatentPoint) -> Result<f64> {
        if x.block_dims() != self.mu.block_dims() {
            return Err(Error::usage("latent block structures differ"));
        }
        let mut total = 0.0;
        for ((xb, mb), &s) in x.blocks().iter().zip(self.mu.blocks()).zip(&self.sigma) {
            let d = xb.distance(mb)?;
            let c = mb.config().c();
            total += -d * d / (2.0 * s * s) - block_normalizer(s, mb.dim(), c).ln();
        }
        Ok(total)
    }
}

/// Free-function form of [`HyperGaussian::log_pdf`].
pub fn log_pdf(x: &LatentPoint, g: &HyperGaussian) -> Result<f64> {
    g.log_pdf(x)
}

/// Parameters of the standard prior sampler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSamplerConfig {
    /// Geodesic radius cutoff of the proposal.
    pub r_max: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for PriorSamplerConfig {
    fn default() -> Self {
        Self {
            r_max: 5.0,
            sigma: 1.0,
            seed: 0,
        }
    }
}

impl PriorSamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_max > 0.0 && self.r_max.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "r_max must be > 0, got {}",
                self.r_max
            )));
        }
        if !(self.sigma >= MIN_SIGMA && self.sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "prior sigma must be >= {MIN_SIGMA}, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

/// Inverse of the area CDF `(cosh(√c r) - 1)/(cosh(√c r_max) - 1)` of a
/// hyperbolic disk.
pub fn disk_radius_from_uniform(a: f64, r_max: f64, c: f64) -> f64 {
    let sc = c.sqrt();
    (1.0 + a * ((sc * r_max).cosh() - 1.0)).acosh() / sc
}

/// Draws `(r, φ)` uniformly with respect to hyperbolic area on the
/// unit-curvature disk of geodesic radius `r_max`.
pub fn sample_uniform_hyperbolic_disk<R: Rng + ?Sized>(r_max: f64, rng: &mut R) -> (f64, f64) {
    let phi = rng.random::<f64>() * 2.0 * PI;
    let a = rng.random::<f64>();
    (disk_radius_from_uniform(a, r_max, 1.0), phi)
}

/// Rejection sampler for the standard hyperbolic Gaussian prior.
#[derive(Debug, Clone)]
pub struct PriorSampler {
    cfg: PriorSamplerConfig,
    ball: BallConfig,
    rng: ChaCha8Rng,
}

impl PriorSampler {
    pub fn new(cfg: PriorSamplerConfig, ball: BallConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            ball,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        })
    }

    pub fn config(&self) -> &PriorSamplerConfig {
        &self.cfg
    }

    pub fn ball(&self) -> BallConfig {
        self.ball
    }

    /// Geodesic radius of one accepted disk sample.
    pub fn disk_radius(&mut self) -> f64 {
        disk_radius(&self.cfg, self.ball.c(), &mut self.rng)
    }

    /// One 2-D block drawn from the prior.
    pub fn sample_disk(&mut self) -> BallPoint {
        sample_block_with(&self.cfg, self.ball, 2, &mut self.rng)
    }

    /// One block of dimension `dim`.
    pub fn sample_block(&mut self, dim: usize) -> BallPoint {
        sample_block_with(&self.cfg, self.ball, dim, &mut self.rng)
    }

    /// One latent point with the given block dimensions.
    pub fn sample(&mut self, dims: &[usize]) -> LatentPoint {
        sample_latent_with(&self.cfg, self.ball, dims, &mut self.rng)
    }

    /// A batch of `n` latent points.
    ///
    /// Each sample uses its own ChaCha stream keyed by its index, so the
    /// batch does not depend on how the work is scheduled.
    pub fn sample_batch(&mut self, n: usize, dims: &[usize], exec: Exec) -> Vec<LatentPoint> {
        let base = self.rng.next_u64();
        let cfg = self.cfg;
        let ball = self.ball;
        exec.map(n, |i| {
            let mut rng = ChaCha8Rng::seed_from_u64(base);
            rng.set_stream(i as u64);
            sample_latent_with(&cfg, ball, dims, &mut rng)
        })
    }
}

/// Draws `(r, φ)` from the area-uniform proposal and accepts with
/// probability `exp(-r²/2σ²)`; returns the accepted geodesic radius.
fn disk_radius<R: Rng + ?Sized>(cfg: &PriorSamplerConfig, c: f64, rng: &mut R) -> f64 {
    loop {
        let a = rng.random::<f64>();
        let r = disk_radius_from_uniform(a, cfg.r_max, c);
        let u = rng.random::<f64>();
        if u < (-r * r / (2.0 * cfg.sigma * cfg.sigma)).exp() {
            return r;
        }
    }
}

/// Line proposal with density `∝ cosh(√c r)` on `[0, r_max]`, accepted with
/// probability `exp(-r²/2σ²)/cosh(√c r)`; the sign is drawn separately.
fn line_radius<R: Rng + ?Sized>(cfg: &PriorSamplerConfig, c: f64, rng: &mut R) -> f64 {
    let sc = c.sqrt();
    let smax = (sc * cfg.r_max).sinh();
    loop {
        let a = rng.random::<f64>();
        let r = (a * smax).asinh() / sc;
        let u = rng.random::<f64>();
        if u < (-r * r / (2.0 * cfg.sigma * cfg.sigma)).exp() / (sc * r).cosh() {
            return r;
        }
    }
}

/// Ball of dimension `m ≥ 3`: uniform radius proposal on `[0, r_max]`
/// against the radial target `exp(-r²/2σ²)·sinh(√c r)^{m-1}`. The envelope
/// is the exact maximum of the log-concave target.
fn ball_radius<R: Rng + ?Sized>(cfg: &PriorSamplerConfig, c: f64, m: usize, rng: &mut R) -> f64 {
    let sc = c.sqrt();
    let k = m as f64 - 1.0;
    let s2 = cfg.sigma * cfg.sigma;
    let ln_f = |r: f64| -r * r / (2.0 * s2) + k * ((sc * r).sinh() / sc).ln();
    // d/dr ln f = -r/σ² + k√c·coth(√c r), strictly decreasing.
    let slope = |r: f64| -r / s2 + k * sc / (sc * r).tanh();
    let mode = if slope(cfg.r_max) >= 0.0 {
        cfg.r_max
    } else {
        let (mut lo, mut hi) = (1e-12, cfg.r_max);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if slope(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let ln_m = ln_f(mode);
    loop {
        let r = rng.random::<f64>() * cfg.r_max;
        let u: f64 = rng.random();
        if r > 0.0 && u.ln() < ln_f(r) - ln_m {
            return r;
        }
    }
}

fn sample_block_with<R: Rng + ?Sized>(
    cfg: &PriorSamplerConfig,
    ball: BallConfig,
    dim: usize,
    rng: &mut R,
) -> BallPoint {
    match dim {
        1 => {
            let r = line_radius(cfg, ball.c(), rng);
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            ball.from_polar(r, &[sign])
        }
        2 => {
            let phi = rng.random::<f64>() * 2.0 * PI;
            let r = disk_radius(cfg, ball.c(), rng);
            ball.from_polar(r, &[phi.cos(), phi.sin()])
        }
        m => {
            let r = ball_radius(cfg, ball.c(), m, rng);
            let dir: Vec<f64> = (0..m)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            ball.from_polar(r, &dir)
        }
    }
}

fn sample_latent_with<R: Rng + ?Sized>(
    cfg: &PriorSamplerConfig,
    ball: BallConfig,
    dims: &[usize],
    rng: &mut R,
) -> LatentPoint {
    LatentPoint {
        blocks: dims
            .iter()
            .map(|&m| sample_block_with(cfg, ball, m, rng))
            .collect(),
    }
}

/// One prior draw for a latent dimension `d` split into disks.
pub fn sample_prior<R: Rng + ?Sized>(
    d: usize,
    cfg: &PriorSamplerConfig,
    ball: BallConfig,
    rng: &mut R,
) -> LatentPoint {
    sample_latent_with(cfg, ball, &BlockLayout::Disks.block_dims(d), rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn normalizer_values() {
        // Reference values evaluated at 30 significant digits.
        assert_abs_diff_eq!(normalizer(1.0), 8.863_602_394_227_393, epsilon = 1e-9);
        assert_abs_diff_eq!(normalizer(0.5), 1.708_481_398_338_183, epsilon = 1e-9);
        assert!(normalizer(1e-8) < 1e-14);
        let mut last = 0.0;
        for i in 1..100 {
            let z = normalizer(i as f64 * 0.05);
            assert!(z > last);
            last = z;
        }
    }

    #[test]
    fn log_pdf_examples() {
        let ball = BallConfig::default();
        let mu = LatentPoint::new(vec![ball.origin(2)]).unwrap();
        let g = HyperGaussian::new(mu.clone(), vec![1.0]).unwrap();
        assert_abs_diff_eq!(
            g.log_pdf(&mu).unwrap(),
            -normalizer(1.0).ln(),
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            g.log_pdf(&mu).unwrap(),
            -2.181_953_272_751_947,
            epsilon = 1e-12
        );

        let x = LatentPoint::new(vec![ball.project(vec![0.5, 0.0])]).unwrap();
        let expect = -(3f64.ln().powi(2)) / 2.0 - normalizer(1.0).ln();
        assert_abs_diff_eq!(g.log_pdf(&x).unwrap(), expect, epsilon = 1e-12);
        assert_abs_diff_eq!(expect, -2.785_427_753_158_238, epsilon = 1e-12);

        let mu2 = LatentPoint::new(vec![ball.origin(2), ball.origin(2)]).unwrap();
        let g2 = HyperGaussian::new(mu2, vec![1.0, 1.0]).unwrap();
        let x2 = LatentPoint::new(vec![x.blocks()[0].clone(), x.blocks()[0].clone()]).unwrap();
        assert_abs_diff_eq!(g2.log_pdf(&x2).unwrap(), 2.0 * expect, epsilon = 1e-12);

        assert!(matches!(g.log_pdf(&x2), Err(Error::Usage(_))));
    }

    #[test]
    fn gaussian_validation() {
        let ball = BallConfig::default();
        let mu = LatentPoint::new(vec![ball.origin(2)]).unwrap();
        assert!(HyperGaussian::new(mu.clone(), vec![0.0]).is_err());
        assert!(HyperGaussian::new(mu.clone(), vec![1.0, 1.0]).is_err());
        assert!(HyperGaussian::new(mu, vec![f64::NAN]).is_err());
    }

    #[test]
    fn radius_inverse_cdf_boundaries() {
        assert_eq!(disk_radius_from_uniform(0.0, 5.0, 1.0), 0.0);
        assert_abs_diff_eq!(
            disk_radius_from_uniform(1.0, 5.0, 1.0),
            5.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn polar_to_ball() {
        let ball = BallConfig::default();
        assert_eq!(ball.from_polar(0.0, &[1.0, 0.0]).coords(), &[0.0, 0.0]);
        let p = ball.from_polar(3f64.ln(), &[0.0, 1.0]);
        assert_abs_diff_eq!(p.norm(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn layouts() {
        assert_eq!(BlockLayout::Disks.block_dims(2), vec![2]);
        assert_eq!(BlockLayout::Disks.block_dims(5), vec![2, 2, 1]);
        assert_eq!(BlockLayout::Lines.block_dims(3), vec![1, 1, 1]);
        assert_eq!(BlockLayout::Ball.block_dims(4), vec![4]);
        assert!(BlockLayout::parse("3").is_err());
    }

    #[test]
    fn sample_prior_structure() {
        let ball = BallConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = sample_prior(5, &PriorSamplerConfig::default(), ball, &mut rng);
        assert_eq!(z.block_dims(), vec![2, 2, 1]);
        assert_eq!(
            sample_prior(2, &PriorSamplerConfig::default(), ball, &mut rng)
                .blocks()
                .len(),
            1
        );
    }

    #[test]
    fn batch_is_schedule_independent() {
        let ball = BallConfig::default();
        let cfg = PriorSamplerConfig {
            seed: 9,
            ..Default::default()
        };
        let a =
            PriorSampler::new(cfg, ball)
                .unwrap()
                .sample_batch(64, &[2, 2, 1], Exec::Sequential);
        let b = PriorSampler::new(cfg, ball)
            .unwrap()
            .sample_batch(64, &[2, 2, 1], Exec::default());
        assert_eq!(a, b);
    }

    #[test]
    fn higher_dimensional_normalizer_integrates_density() {
        // Monte-Carlo-free check: the 3-ball normalizer matches the closed
        // form ∫ e^{-r²/2} sinh² r dr · 4π at unit curvature.
        let z = block_normalizer(1.0, 3, 1.0);
        // ∫0^∞ e^{-r²/2} sinh² r dr = ½∫(e^{-r²/2}(cosh 2r - 1)) = ½(√(π/2)e² - √(π/2))
        let closed = 4.0 * PI * 0.5 * (PI / 2.0).sqrt() * (2f64.exp() - 1.0);
        assert_abs_diff_eq!(z, closed, epsilon = 1e-6 * closed);
    }

    #[test]
    fn invalid_sampler_config() {
        let bad = PriorSamplerConfig {
            r_max: 0.0,
            ..Default::default()
        };
        assert!(PriorSampler::new(bad, BallConfig::default()).is_err());
    }
}
