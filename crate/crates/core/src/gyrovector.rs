//! Gyrovector arithmetic on the Poincaré ball of curvature `-c`.
//!
//! Points are stored in ambient coordinates and every ball-valued result is
//! pulled back inside the radius `(1 - eps) / sqrt(c)`. The raw slice
//! functions at the bottom of the module are the shared kernels; the typed
//! [`BallPoint`] methods add dimension checks and projection on top.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Largest argument passed to `artanh`.
pub const ARTANH_CLAMP: f64 = 1.0 - 1e-12;

/// Norms below this are treated as zero when a direction `x / |x|` is formed.
pub const MIN_NORM: f64 = 1e-15;

/// Curvature magnitude and boundary margin shared by all points of a ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallConfig {
    c: f64,
    eps: f64,
}

impl Default for BallConfig {
    fn default() -> Self {
        Self { c: 1.0, eps: 1e-5 }
    }
}

impl BallConfig {
    pub fn new(c: f64, eps: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "curvature must be > 0, got {c}"
            )));
        }
        if !(eps > 0.0 && eps < 0.1) {
            return Err(Error::InvalidConfig(format!(
                "boundary margin must lie in (0, 0.1), got {eps}"
            )));
        }
        Ok(Self { c, eps })
    }

    pub fn with_curvature(c: f64) -> Result<Self> {
        Self::new(c, Self::default().eps)
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn sqrt_c(&self) -> f64 {
        self.c.sqrt()
    }

    /// Largest Euclidean norm a projected point may have.
    pub fn max_norm(&self) -> f64 {
        (1.0 - self.eps) / self.c.sqrt()
    }

    pub fn origin(&self, dim: usize) -> BallPoint {
        BallPoint {
            coords: vec![0.0; dim],
            config: *self,
        }
    }

    /// Wraps raw coordinates, projecting them into the ball.
    pub fn project(&self, mut coords: Vec<f64>) -> BallPoint {
        project_raw(&mut coords, self.c, self.eps);
        BallPoint {
            coords,
            config: *self,
        }
    }

    /// Exponential map at the origin.
    pub fn exp0(&self, v: &TangentVec) -> BallPoint {
        self.project(exp0_raw(&v.0, self.c))
    }

    /// Point at geodesic distance `r` from the origin in direction `dir`
    /// (`dir` need not be normalized).
    pub fn from_polar(&self, r: f64, dir: &[f64]) -> BallPoint {
        let n = norm(dir);
        let scale = if n < MIN_NORM {
            0.0
        } else {
            (0.5 * self.sqrt_c() * r).tanh() / (self.sqrt_c() * n)
        };
        self.project(dir.iter().map(|d| d * scale).collect())
    }
}

/// A point strictly inside the Poincaré ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallPoint {
    coords: Vec<f64>,
    config: BallConfig,
}

/// A tangent vector; unconstrained coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVec(pub Vec<f64>);

impl TangentVec {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl From<Vec<f64>> for TangentVec {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl BallPoint {
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn config(&self) -> BallConfig {
        self.config
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.coords)
    }

    /// Gyrogroup inverse `-x`.
    pub fn neg(&self) -> BallPoint {
        BallPoint {
            coords: self.coords.iter().map(|v| -v).collect(),
            config: self.config,
        }
    }

    fn check_pair(&self, other: &BallPoint) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        if self.config != other.config {
            return Err(Error::usage(
                "points belong to balls with different configurations",
            ));
        }
        Ok(())
    }

    /// Möbius addition `self ⊕ other`.
    pub fn mobius_add(&self, other: &BallPoint) -> Result<BallPoint> {
        self.check_pair(other)?;
        Ok(self
            .config
            .project(mobius_add_raw(&self.coords, &other.coords, self.config.c)))
    }

    /// Geodesic distance.
    pub fn distance(&self, other: &BallPoint) -> Result<f64> {
        self.check_pair(other)?;
        Ok(distance_raw(&self.coords, &other.coords, self.config.c))
    }

    /// Logarithmic map at the origin.
    pub fn log0(&self) -> TangentVec {
        TangentVec(log0_raw(&self.coords, self.config.c))
    }

    /// Conformal factor `λ_x = 2 / (1 - c|x|²)`.
    pub fn conformal_factor(&self) -> f64 {
        conformal_factor_raw(&self.coords, self.config.c)
    }

    /// Exponential map at `self` applied to `scale · v`.
    pub fn exp_at(&self, v: &TangentVec, scale: f64) -> Result<BallPoint> {
        if v.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: v.dim(),
            });
        }
        Ok(self
            .config
            .project(exp_at_raw(&self.coords, &v.0, scale, self.config.c)))
    }

    /// Matrix-gyrovector product `M^⊗ self`.
    pub fn gyro_matvec(&self, m: &DMatrix<f64>) -> Result<BallPoint> {
        if m.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: m.ncols(),
            });
        }
        let mx: Vec<f64> = (0..m.nrows())
            .map(|r| (0..m.ncols()).map(|k| m[(r, k)] * self.coords[k]).sum())
            .collect();
        Ok(self
            .config
            .project(gyro_scale_raw(&self.coords, mx, self.config.c)))
    }

    /// `diag(s,…,s)^⊗ self`, the scalar special case of [`Self::gyro_matvec`].
    pub fn gyro_scale(&self, s: f64) -> BallPoint {
        let sx: Vec<f64> = self.coords.iter().map(|v| v * s).collect();
        self.config
            .project(gyro_scale_raw(&self.coords, sx, self.config.c))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn artanh(x: f64) -> f64 {
    let x = x.clamp(-ARTANH_CLAMP, ARTANH_CLAMP);
    0.5 * ((1.0 + x).ln() - (1.0 - x).ln())
}

/// Rescales `x` in place to norm `(1 - eps)/sqrt(c)` if it lies outside.
pub fn project_raw(x: &mut [f64], c: f64, eps: f64) {
    let max = (1.0 - eps) / c.sqrt();
    let n = norm(x);
    if n > max {
        let s = max / n;
        x.iter_mut().for_each(|v| *v *= s);
    }
}

pub fn mobius_add_raw(x: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let xy = dot(x, y);
    let x2 = dot(x, x);
    let y2 = dot(y, y);
    let a = 1.0 + 2.0 * c * xy + c * y2;
    let b = 1.0 - c * x2;
    let den = 1.0 + 2.0 * c * xy + c * c * x2 * y2;
    x.iter()
        .zip(y)
        .map(|(xi, yi)| (a * xi + b * yi) / den)
        .collect()
}

pub fn distance_raw(x: &[f64], y: &[f64], c: f64) -> f64 {
    let diff2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    let den = (1.0 - c * dot(x, x)) * (1.0 - c * dot(y, y));
    let arg = (1.0 + 2.0 * c * diff2 / den).max(1.0);
    arg.acosh() / c.sqrt()
}

pub fn exp0_raw(v: &[f64], c: f64) -> Vec<f64> {
    let n = norm(v);
    if n < MIN_NORM {
        return v.to_vec();
    }
    let sc = c.sqrt();
    let s = (sc * n).tanh() / (sc * n);
    v.iter().map(|vi| vi * s).collect()
}

pub fn log0_raw(x: &[f64], c: f64) -> Vec<f64> {
    let n = norm(x);
    if n < MIN_NORM {
        return x.to_vec();
    }
    let sc = c.sqrt();
    let s = artanh(sc * n) / (sc * n);
    x.iter().map(|xi| xi * s).collect()
}

pub fn conformal_factor_raw(x: &[f64], c: f64) -> f64 {
    2.0 / (1.0 - c * dot(x, x))
}

pub fn exp_at_raw(x: &[f64], v: &[f64], scale: f64, c: f64) -> Vec<f64> {
    let w: Vec<f64> = v.iter().map(|vi| vi * scale).collect();
    let n = norm(&w);
    if n < MIN_NORM {
        return x.to_vec();
    }
    let sc = c.sqrt();
    let lam = conformal_factor_raw(x, c);
    let s = (0.5 * sc * lam * n).tanh() / (sc * n);
    let step: Vec<f64> = w.iter().map(|wi| wi * s).collect();
    mobius_add_raw(x, &step, c)
}

/// Shared tail of the matrix-gyrovector product: given `x` and `mx = M x`,
/// returns `tanh(|Mx|/|x| · artanh(√c|x|)) · Mx / (√c|Mx|)`.
pub fn gyro_scale_raw(x: &[f64], mx: Vec<f64>, c: f64) -> Vec<f64> {
    let nx = norm(x);
    let nmx = norm(&mx);
    if nx < MIN_NORM || nmx < MIN_NORM {
        return vec![0.0; mx.len()];
    }
    let sc = c.sqrt();
    let s = ((nmx / nx) * artanh(sc * nx)).tanh() / (sc * nmx);
    mx.into_iter().map(|v| v * s).collect()
}
