//! Execution policy for the data-parallel loops.
//!
//! Every parallel loop in the crate has the same shape: map an index range to
//! per-index values, collect them in index order, then reduce sequentially.
//! The reduction order therefore never depends on scheduling, so `Rayon` and
//! `Sequential` produce bit-identical results.

/// How a data-parallel loop is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    #[cfg(feature = "parallel")]
    Rayon,
}

#[allow(clippy::derivable_impls)]
impl Default for Exec {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        {
            Exec::Rayon
        }
        #[cfg(not(feature = "parallel"))]
        {
            Exec::Sequential
        }
    }
}

impl Exec {
    /// Evaluates `f` on `0..n` and returns the results in index order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Exec::Sequential => (0..n).map(f).collect(),
            #[cfg(feature = "parallel")]
            Exec::Rayon => {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(f).collect()
            }
        }
    }

    /// Sum of `f(i)` over `0..n`, reduced left to right.
    pub fn sum<F>(self, n: usize, f: F) -> f64
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        self.map(n, f).into_iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let v = Exec::default().map(100, |i| i * 2);
        assert_eq!(v, (0..100).map(|i| i * 2).collect::<Vec<_>>());
    }

    #[test]
    fn sum_matches_sequential_bitwise() {
        let f = |i: usize| (i as f64 + 0.1).sqrt().sin();
        let a = Exec::Sequential.sum(10_000, f);
        let b = Exec::default().sum(10_000, f);
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
