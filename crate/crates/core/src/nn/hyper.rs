//! Row-batched gyrovector operations recorded on a [`Tape`].
//!
//! Every matrix argument holds one ball point (or tangent vector) per row.
//! The formulas match [`crate::gyrovector`]; the test module checks each one
//! against the scalar implementation.

use crate::autodiff::{Tape, Var};
use crate::gyrovector::{BallConfig, MIN_NORM};

/// Tape-level gyrovector operations for a fixed ball.
#[derive(Debug, Clone, Copy)]
pub struct HyperOps {
    c: f64,
    sqrt_c: f64,
    max_norm: f64,
}

impl HyperOps {
    pub fn new(ball: BallConfig) -> Self {
        Self {
            c: ball.c(),
            sqrt_c: ball.sqrt_c(),
            max_norm: ball.max_norm(),
        }
    }

    /// Squared row norms, `n×1`.
    pub fn sqnorm(&self, t: &mut Tape, x: Var) -> Var {
        let s = t.square(x);
        t.row_sum(s)
    }

    /// Row norms floored at [`MIN_NORM`], `n×1`.
    pub fn norm(&self, t: &mut Tape, x: Var) -> Var {
        let s = self.sqnorm(t, x);
        let s = t.clamp(s, MIN_NORM * MIN_NORM, f64::INFINITY);
        t.sqrt(s)
    }

    /// Pulls rows with `√c|x| > 1 - eps` back onto that radius.
    pub fn project(&self, t: &mut Tape, x: Var) -> Var {
        let n = self.norm(t, x);
        let cap = t.scalar(self.max_norm);
        let f = t.div(cap, n);
        let f = t.clamp(f, 0.0, 1.0);
        t.mul_rows(f, x)
    }

    pub fn exp0(&self, t: &mut Tape, v: Var) -> Var {
        let n = self.norm(t, v);
        let sn = t.scale(n, self.sqrt_c);
        let th = t.tanh(sn);
        let s = t.div(th, sn);
        let y = t.mul_rows(s, v);
        self.project(t, y)
    }

    pub fn log0(&self, t: &mut Tape, x: Var) -> Var {
        let n = self.norm(t, x);
        let sn = t.scale(n, self.sqrt_c);
        let at = t.artanh(sn);
        let s = t.div(at, sn);
        t.mul_rows(s, x)
    }

    pub fn mobius_add(&self, t: &mut Tape, x: Var, y: Var) -> Var {
        let c = self.c;
        let xy = t.mul(x, y);
        let xy = t.row_sum(xy);
        let x2 = self.sqnorm(t, x);
        let y2 = self.sqnorm(t, y);
        // a = 1 + 2c<x,y> + c|y|², b = 1 - c|x|², den = 1 + 2c<x,y> + c²|x|²|y|²
        let two_c_xy = t.scale(xy, 2.0 * c);
        let one_plus = t.offset(two_c_xy, 1.0);
        let cy2 = t.scale(y2, c);
        let a = t.add(one_plus, cy2);
        let cx2 = t.scale(x2, c);
        let b = t.rsub(1.0, cx2);
        let x2y2 = t.mul(x2, y2);
        let c2x2y2 = t.scale(x2y2, c * c);
        let den = t.add(one_plus, c2x2y2);
        let ax = t.mul_rows(a, x);
        let by = t.mul_rows(b, y);
        let num = t.add(ax, by);
        let one = t.scalar(1.0);
        let inv = t.div(one, den);
        let out = t.mul_rows(inv, num);
        self.project(t, out)
    }

    /// `tanh(|Mx|/|x| · artanh(√c|x|)) · Mx / (√c|Mx|)` given `x` and `mx`.
    fn gyro_rescale(&self, t: &mut Tape, x: Var, mx: Var) -> Var {
        let nx = self.norm(t, x);
        let nmx = self.norm(t, mx);
        let snx = t.scale(nx, self.sqrt_c);
        let at = t.artanh(snx);
        let ratio = t.div(nmx, nx);
        let arg = t.mul(ratio, at);
        let th = t.tanh(arg);
        let snmx = t.scale(nmx, self.sqrt_c);
        let s = t.div(th, snmx);
        let out = t.mul_rows(s, mx);
        self.project(t, out)
    }

    /// Matrix-gyrovector product for row batches: row `i` of the result is
    /// `M^⊗ x_i` with `M = wᵀ`, i.e. `x_i w` in the Euclidean part.
    pub fn matvec(&self, t: &mut Tape, w: Var, x: Var) -> Var {
        let mx = t.matmul(x, w);
        self.gyro_rescale(t, x, mx)
    }

    /// `diag(σ_i,…,σ_i)^⊗ x_i` for a positive `n×1` column `σ`.
    pub fn diag_scale(&self, t: &mut Tape, sigma: Var, x: Var) -> Var {
        let nx = self.norm(t, x);
        let snx = t.scale(nx, self.sqrt_c);
        let at = t.artanh(snx);
        let arg = t.mul(sigma, at);
        let th = t.tanh(arg);
        let s = t.div(th, snx);
        let out = t.mul_rows(s, x);
        self.project(t, out)
    }

    /// Row-wise geodesic distances `d(x_i, y_i)`, `n×1`.
    pub fn distance(&self, t: &mut Tape, x: Var, y: Var) -> Var {
        let c = self.c;
        let diff = t.sub(x, y);
        let d2 = self.sqnorm(t, diff);
        let x2 = self.sqnorm(t, x);
        let y2 = self.sqnorm(t, y);
        let cx2 = t.scale(x2, c);
        let cy2 = t.scale(y2, c);
        let a = t.rsub(1.0, cx2);
        let b = t.rsub(1.0, cy2);
        let den = t.mul(a, b);
        self.acosh_of(t, d2, den)
    }

    /// `(1/√c) arccosh(1 + 2c·d2/den)`, evaluated without forming `1 + q`
    /// so nearly coincident points keep a bounded gradient.
    fn acosh_of(&self, t: &mut Tape, d2: Var, den: Var) -> Var {
        let q = t.div(d2, den);
        let q = t.scale(q, 2.0 * self.c);
        let d = t.acosh1p(q);
        t.scale(d, 1.0 / self.sqrt_c)
    }

    /// All-pairs geodesic distances between the rows of `x` (`n×m`) and
    /// `y` (`p×m`), `n×p`.
    pub fn pairwise_distance(&self, t: &mut Tape, x: Var, y: Var) -> Var {
        let c = self.c;
        let n = t.value(x).rows();
        let p = t.value(y).rows();
        let x2 = self.sqnorm(t, x);
        let y2 = self.sqnorm(t, y);
        let yt = t.transpose(y);
        let cross = t.matmul(x, yt);
        let x2b = t.broadcast_cols(x2, p);
        let y2t = t.transpose(y2);
        let y2b = t.broadcast_rows(y2t, n);
        let s = t.add(x2b, y2b);
        let cross2 = t.scale(cross, 2.0);
        let d2 = t.sub(s, cross2);
        let d2 = t.clamp(d2, 0.0, f64::INFINITY);
        let cx2 = t.scale(x2, c);
        let a = t.rsub(1.0, cx2);
        let cy2 = t.scale(y2t, c);
        let b = t.rsub(1.0, cy2);
        let den = t.matmul(a, b);
        self.acosh_of(t, d2, den)
    }

    /// `φ_h(x) = exp_0(φ(log_0 x))`.
    pub fn nonlinearity(
        &self,
        t: &mut Tape,
        x: Var,
        phi: impl FnOnce(&mut Tape, Var) -> Var,
    ) -> Var {
        let v = self.log0(t, x);
        let v = phi(t, v);
        self.exp0(t, v)
    }
}

/// Euclidean all-pairs distances `|x_i - y_j|`, floored at `1e-12`.
pub fn euclidean_pairwise_distance(t: &mut Tape, x: Var, y: Var) -> Var {
    let n = t.value(x).rows();
    let p = t.value(y).rows();
    let sq = |t: &mut Tape, v: Var| {
        let s = t.square(v);
        t.row_sum(s)
    };
    let x2 = sq(t, x);
    let y2 = sq(t, y);
    let yt = t.transpose(y);
    let cross = t.matmul(x, yt);
    let x2b = t.broadcast_cols(x2, p);
    let y2t = t.transpose(y2);
    let y2b = t.broadcast_rows(y2t, n);
    let s = t.add(x2b, y2b);
    let cross2 = t.scale(cross, 2.0);
    let d2 = t.sub(s, cross2);
    let d2 = t.clamp(d2, 1e-24, f64::INFINITY);
    t.sqrt(d2)
}
