//! Fixed-order reductions.
//!
//! Long-range lattice sums reach 1e9+ terms, and reported numbers must not
//! depend on worker count or chunking. Everything that feeds a result goes
//! through either a fixed pairwise tree or Neumaier compensation in index
//! order.

use crate::math::fabs;

/// Neumaier-compensated accumulator (Kahan variant that stays correct when
/// the new term exceeds the running sum).
#[derive(Clone, Copy, Debug, Default)]
pub struct Compensated {
    hi: f64,
    lo: f64,
}

impl Compensated {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.hi + x;
        if fabs(self.hi) >= fabs(x) {
            self.lo += (self.hi - t) + x;
        } else {
            self.lo += (x - t) + self.hi;
        }
        self.hi = t;
    }

    /// Folds another accumulator in without losing its compensation term.
    pub fn merge(&mut self, other: Compensated) {
        self.add(other.hi);
        self.add(other.lo);
    }

    pub fn value(&self) -> f64 {
        self.hi + self.lo
    }
}

const PAIRWISE_BASE: usize = 32;

/// Sum with a fixed halving tree; the result depends only on the slice.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= PAIRWISE_BASE {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        return s;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Dot product over the same halving tree as `pairwise_sum`.
pub fn dot(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    if xs.len() <= PAIRWISE_BASE {
        let mut s = 0.0;
        for (&x, &y) in xs.iter().zip(ys.iter()) {
            s += x * y;
        }
        return s;
    }
    let mid = xs.len() / 2;
    dot(&xs[..mid], &ys[..mid]) + dot(&xs[mid..], &ys[mid..])
}

/// Sum of squares.
pub fn sum_sq(xs: &[f64]) -> f64 {
    dot(xs, xs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg_doubles(seed: u64, n: usize) -> alloc::vec::Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
            })
            .collect()
    }

    #[test]
    fn compensated_handles_cancellation() {
        let mut acc = Compensated::new();
        acc.add(1e16);
        acc.add(1.0);
        acc.add(-1e16);
        assert_eq!(acc.value(), 1.0);
    }

    #[test]
    fn pairwise_matches_compensated() {
        let xs = lcg_doubles(7, 100_001);
        let mut acc = Compensated::new();
        for &x in &xs {
            acc.add(x);
        }
        let a = pairwise_sum(&xs);
        let b = acc.value();
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
    }

    #[test]
    fn merge_keeps_compensation() {
        let xs = lcg_doubles(11, 4096);
        let mut whole = Compensated::new();
        for &x in &xs {
            whole.add(x);
        }
        let mut left = Compensated::new();
        let mut right = Compensated::new();
        for &x in &xs[..2048] {
            left.add(x);
        }
        for &x in &xs[2048..] {
            right.add(x);
        }
        left.merge(right);
        assert!((left.value() - whole.value()).abs() <= 1e-15 * whole.value().abs().max(1.0));
    }

    #[test]
    fn dot_is_pairwise_sum_of_products() {
        let xs = lcg_doubles(3, 999);
        let ys = lcg_doubles(5, 999);
        let prods: alloc::vec::Vec<f64> = xs.iter().zip(ys.iter()).map(|(a, b)| a * b).collect();
        assert_eq!(dot(&xs, &ys), pairwise_sum(&prods));
    }
}
