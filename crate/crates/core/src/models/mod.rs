//! End-to-end models, losses, training loops and link-prediction metrics.

mod vgae;
mod wae;

pub use vgae::{edge_prob, train_vgae, vgae_loss, LatentGeometry, Vgae, VgaeNoise};
pub use wae::{generate, train_wae, wae_loss, PoincareWae, WaeNoise};

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::gyrovector::BallConfig;
use crate::hgauss::LatentPoint;
use crate::{Error, Result};

/// Loss components of one step or one epoch (averaged over steps).
///
/// `total = recon + β·mmd + γ·penalty`, where `penalty` is the mean `Σσ²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub epoch: usize,
    pub recon: f64,
    pub mmd: f64,
    pub penalty: f64,
    pub total: f64,
    pub seconds: f64,
}

impl LossReport {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("plain numbers serialize")
    }

    /// Componentwise mean of step reports.
    pub fn mean(epoch: usize, steps: &[LossReport], seconds: f64) -> LossReport {
        let k = steps.len().max(1) as f64;
        let avg = |f: fn(&LossReport) -> f64| steps.iter().map(f).sum::<f64>() / k;
        LossReport {
            epoch,
            recon: avg(|r| r.recon),
            mmd: avg(|r| r.mmd),
            penalty: avg(|r| r.penalty),
            total: avg(|r| r.total),
            seconds,
        }
    }
}

/// Scalar loss pieces recorded on a tape.
#[derive(Debug, Clone)]
pub struct LossVars {
    pub recon: Var,
    pub mmd: Var,
    pub penalty: Var,
    pub total: Var,
    /// Posterior samples entering the MMD, one matrix per block.
    pub codes: Vec<Var>,
}

impl LossVars {
    fn combine(
        t: &mut Tape,
        [recon, mmd, penalty]: [Var; 3],
        codes: Vec<Var>,
        beta: f64,
        gamma: f64,
    ) -> Self {
        let bm = t.scale(mmd, beta);
        let gp = t.scale(penalty, gamma);
        let s = t.add(recon, bm);
        let total = t.add(s, gp);
        Self {
            recon,
            mmd,
            penalty,
            total,
            codes,
        }
    }

    /// Panics if a posterior sample is not finite or lies outside the ball
    /// of radius `max_norm`.
    pub fn assert_codes_in_ball(&self, t: &Tape, max_norm: f64) {
        for &c in &self.codes {
            let v = t.value(c);
            for i in 0..v.rows() {
                let r = crate::gyrovector::norm(v.row(i));
                assert!(
                    r.is_finite() && r <= max_norm * (1.0 + 1e-9),
                    "latent code left the ball: |z| = {r}"
                );
            }
        }
    }

    pub fn report(&self, t: &Tape, epoch: usize) -> LossReport {
        LossReport {
            epoch,
            recon: t.value(self.recon).item(),
            mmd: t.value(self.mmd).item(),
            penalty: t.value(self.penalty).item(),
            total: t.value(self.total).item(),
            seconds: 0.0,
        }
    }
}

fn off_diagonal_mask(n: usize) -> Tensor {
    Tensor::matrix(
        n,
        n,
        (0..n * n)
            .map(|k| if k % (n + 1) == 0 { 0.0 } else { 1.0 })
            .collect(),
    )
}

/// Kernel matrix `exp(-λ Σ_b dist(a_b, b_b))` summed over block pairs.
fn kernel_matrix(
    t: &mut Tape,
    a: &[Var],
    b: &[Var],
    lambda: f64,
    dist: &impl Fn(&mut Tape, Var, Var) -> Var,
) -> Var {
    let mut acc: Option<Var> = None;
    for (&x, &y) in a.iter().zip(b) {
        let d = dist(t, x, y);
        acc = Some(match acc {
            Some(s) => t.add(s, d),
            None => d,
        });
    }
    let d = acc.expect("at least one block");
    let s = t.scale(d, -lambda);
    t.exp(s)
}

/// Unbiased MMD² between `prior` and `post` samples (one `n×m_b` matrix per
/// block on each side), matching [`crate::mmd::mmd_estimate`].
pub fn tape_mmd(
    t: &mut Tape,
    prior: &[Var],
    post: &[Var],
    lambda: f64,
    dist: impl Fn(&mut Tape, Var, Var) -> Var,
) -> Result<Var> {
    let n = t.value(prior[0]).rows();
    let m = t.value(post[0]).rows();
    if n < 2 || m < 2 {
        return Err(Error::usage(format!(
            "MMD needs at least two samples per side, got {n} and {m}"
        )));
    }
    let within = |t: &mut Tape, x: &[Var], k: usize| {
        let kk = kernel_matrix(t, x, x, lambda, &dist);
        let mask = t.constant(off_diagonal_mask(k));
        let kk = t.mul(kk, mask);
        let s = t.sum(kk);
        t.scale(s, 1.0 / (k as f64 * (k as f64 - 1.0)))
    };
    let kaa = within(t, prior, n);
    let kbb = within(t, post, m);
    let kab = kernel_matrix(t, prior, post, lambda, &dist);
    let kab = t.sum(kab);
    let kab = t.scale(kab, -2.0 / (n as f64 * m as f64));
    let s = t.add(kaa, kbb);
    Ok(t.add(s, kab))
}

/// Splits latent points into one `n×m_b` tensor per block.
pub fn latent_to_blocks(points: &[LatentPoint], dims: &[usize]) -> Result<Vec<Tensor>> {
    let n = points.len();
    let mut out: Vec<Vec<f64>> = dims.iter().map(|&m| Vec::with_capacity(n * m)).collect();
    for p in points {
        if p.block_dims() != dims {
            return Err(Error::usage("latent point has the wrong block structure"));
        }
        for (b, blk) in p.blocks().iter().enumerate() {
            out[b].extend_from_slice(blk.coords());
        }
    }
    Ok(out
        .into_iter()
        .zip(dims)
        .map(|(data, &m)| Tensor::matrix(n, m, data))
        .collect())
}

/// Inverse of [`latent_to_blocks`].
pub fn blocks_to_latent(blocks: &[Tensor], ball: BallConfig) -> Result<Vec<LatentPoint>> {
    let n = blocks.first().map_or(0, |b| b.rows());
    (0..n)
        .map(|i| {
            LatentPoint::new(
                blocks
                    .iter()
                    .map(|b| ball.project(b.row(i).to_vec()))
                    .collect(),
            )
        })
        .collect()
}

/// Link-prediction AUC (ties count ½) and average precision (mean precision
/// at the score threshold of each positive).
pub fn evaluate_auc_ap(pos: &[f64], neg: &[f64]) -> Result<(f64, f64)> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::usage(
            "AUC/AP need at least one positive and one negative",
        ));
    }
    if pos.iter().chain(neg).any(|s| s.is_nan()) {
        return Err(Error::usage("scores contain NaN"));
    }
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    // Descending by score.
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    let mut auc = 0.0;
    let mut ap = 0.0;
    let (mut seen_pos, mut seen_neg) = (0.0, 0.0);
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        let (mut gp, mut gn) = (0.0, 0.0);
        while j < all.len() && all[j].0 == all[i].0 {
            if all[j].1 {
                gp += 1.0;
            } else {
                gn += 1.0;
            }
            j += 1;
        }
        // Positives in this group beat every negative below it and tie with
        // the group's negatives.
        auc += gp * (nn - seen_neg - gn) + 0.5 * gp * gn;
        seen_pos += gp;
        seen_neg += gn;
        ap += gp * seen_pos / (seen_pos + seen_neg);
        i = j;
    }
    Ok((auc / (np * nn), ap / np))
}
