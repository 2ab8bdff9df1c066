//! Geodesic Laplacian kernel and the finite-sample MMD estimator.
//!
//! On a product of balls the kernel is `exp(-λ Σ_b d(x_b, y_b))`, the product
//! of per-block Laplacian kernels, which keeps it positive definite.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::hgauss::LatentPoint;
use crate::par::Exec;
use crate::{gyrovector, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub lambda: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self { lambda: 1.0 }
    }
}

impl KernelParams {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "kernel scale must be > 0, got {lambda}"
            )));
        }
        Ok(Self { lambda })
    }
}

pub fn laplace_kernel(x: &LatentPoint, y: &LatentPoint, p: KernelParams) -> Result<f64> {
    let d: f64 = x.block_distances(y)?.iter().sum();
    Ok((-p.lambda * d).exp())
}

/// Flattened copy of a sample set for the pairwise loops.
struct Packed {
    dims: Vec<usize>,
    c: Vec<f64>,
    rows: Vec<Vec<f64>>,
}

impl Packed {
    fn new(points: &[LatentPoint]) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::usage("empty sample set"))?;
        let dims = first.block_dims();
        let c = first.blocks().iter().map(|b| b.config().c()).collect();
        let rows = points
            .iter()
            .map(|p| {
                if p.block_dims() != dims {
                    Err(Error::usage("sample sets mix latent block structures"))
                } else {
                    Ok(p.flat())
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self { dims, c, rows })
    }

    fn compatible(&self, other: &Packed) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::usage(
                "sample sets have different latent block structures",
            ));
        }
        Ok(())
    }

    fn kernel(&self, i: usize, other: &Packed, j: usize, lambda: f64) -> f64 {
        let (a, b) = (&self.rows[i], &other.rows[j]);
        let mut off = 0;
        let mut d = 0.0;
        for (&m, &c) in self.dims.iter().zip(&self.c) {
            d += gyrovector::distance_raw(&a[off..off + m], &b[off..off + m], c);
            off += m;
        }
        (-lambda * d).exp()
    }
}

/// Unbiased MMD² estimate between prior samples `z` and posterior samples
/// `z̄`:
///
/// `1/(n(n-1)) Σ_{i≠j} k(z_i,z_j) + 1/(m(m-1)) Σ_{i≠j} k(z̄_i,z̄_j)
///  - 2/(nm) Σ_{i,j} k(z_i,z̄_j)`.
///
/// This is a U-statistic and can be slightly negative.
pub fn mmd_estimate(
    prior: &[LatentPoint],
    posterior: &[LatentPoint],
    p: KernelParams,
) -> Result<f64> {
    mmd_estimate_with(prior, posterior, p, Exec::default())
}

pub fn mmd_estimate_with(
    prior: &[LatentPoint],
    posterior: &[LatentPoint],
    p: KernelParams,
    exec: Exec,
) -> Result<f64> {
    let (n, m) = (prior.len(), posterior.len());
    if n < 2 || m < 2 {
        return Err(Error::usage(format!(
            "MMD needs at least two samples per side, got {n} and {m}"
        )));
    }
    let a = Packed::new(prior)?;
    let b = Packed::new(posterior)?;
    a.compatible(&b)?;
    let lam = p.lambda;
    let within = |s: &Packed, len: usize| {
        exec.sum(len, |i| {
            (0..len)
                .filter(|&j| j != i)
                .map(|j| s.kernel(i, s, j, lam))
                .sum::<f64>()
        })
    };
    let kaa = within(&a, n);
    let kbb = within(&b, m);
    let kab = exec.sum(n, |i| (0..m).map(|j| a.kernel(i, &b, j, lam)).sum::<f64>());
    let (nf, mf) = (n as f64, m as f64);
    Ok(kaa / (nf * (nf - 1.0)) + kbb / (mf * (mf - 1.0)) - 2.0 * kab / (nf * mf))
}

/// Kernel Gram matrix `K_ij = k(x_i, x_j)`.
pub fn gram(points: &[LatentPoint], p: KernelParams) -> Result<DMatrix<f64>> {
    gram_with(points, p, Exec::default())
}

pub fn gram_with(points: &[LatentPoint], p: KernelParams, exec: Exec) -> Result<DMatrix<f64>> {
    let n = points.len();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let a = Packed::new(points)?;
    let rows = exec.map(n, |i| {
        (0..n)
            .map(|j| {
                if i == j {
                    1.0
                } else {
                    a.kernel(i, &a, j, p.lambda)
                }
            })
            .collect::<Vec<f64>>()
    });
    // Fill the upper triangle from the lower so the result is exactly symmetric.
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if i >= j {
            rows[i][j]
        } else {
            rows[j][i]
        }
    }))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}
