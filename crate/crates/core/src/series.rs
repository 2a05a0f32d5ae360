//! The power-sum recurrence behind the series kernels.
//!
//! Given `d_k = tr(A^k) / 2`, the coefficients
//! `c_0 = 1, c_k = (1/k) sum_{r<k} d_{k-r} c_r` are the Taylor coefficients
//! of `det(I - xA)^{-1/2}`, so `sum_k (-1)^k c_k = det(I + A)^{-1/2}`
//! whenever the spectral radius of `A` is below one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Adaptive truncation rule for alternating series.
///
/// Summation stops at the first `k` such that the last `patience` terms all
/// satisfied `|term| < eps * (1 + |partial sum|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub eps: f64,
    pub n_max: usize,
    pub patience: usize,
}

impl Truncation {
    pub const fn new(eps: f64, n_max: usize) -> Self {
        Truncation { eps, n_max, patience: 3 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) || self.n_max == 0 || self.patience == 0 {
            return Err(Error::InvalidParameter(format!(
                "truncation needs eps > 0, n_max >= 1, patience >= 1 (got {self:?})"
            )));
        }
        Ok(())
    }
}

/// Default for the cloud kernel: `eps = 1e-10`, at most 64 terms.
pub const KERNEL_TRUNCATION: Truncation = Truncation::new(1e-10, 64);
/// Default for the Euclidean variance path: `eps = 1e-12`, at most 256 terms.
pub const VARIANCE_TRUNCATION: Truncation = Truncation::new(1e-12, 256);

/// Value of a truncated series and the index of its last term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesSum<T> {
    pub value: T,
    pub terms: usize,
}

/// Incremental generator of the coefficients `c_k`.
#[derive(Debug, Clone)]
pub struct Coefficients<T> {
    d: Vec<T>,
    c: Vec<T>,
}

impl<T: Real> Default for Coefficients<T> {
    fn default() -> Self {
        Coefficients { d: Vec::new(), c: vec![T::one()] }
    }
}

impl<T: Real> Coefficients<T> {
    /// Feeds `d_k` for the next `k` and returns `c_k`.
    pub fn push(&mut self, d_k: T) -> T {
        self.d.push(d_k);
        let k = self.d.len();
        let mut acc = T::zero();
        for r in 0..k {
            acc += self.d[k - r - 1] * self.c[r];
        }
        let c_k = acc / T::from_usize_lossy(k);
        self.c.push(c_k);
        c_k
    }

    pub fn coefficients(&self) -> &[T] {
        &self.c
    }
}

/// All `c_0..=c_n` for the given `d_1..=d_n`.
pub fn coefficients<T: Real>(d: &[T]) -> Vec<T> {
    let mut gen = Coefficients::default();
    for &x in d {
        gen.push(x);
    }
    gen.c
}

/// Sums `sum_k (-1)^k c_k`, pulling `d_k` lazily from `d_of`.
pub fn alternating_sum<T: Real>(
    mut d_of: impl FnMut(usize) -> T,
    rule: &Truncation,
) -> Result<SeriesSum<T>> {
    rule.validate()?;
    let eps = T::tol(rule.eps);
    let mut gen = Coefficients::default();
    let mut partial = T::one();
    let mut quiet = 0;
    let mut last = T::one();
    for k in 1..=rule.n_max {
        let c_k = gen.push(d_of(k));
        if !c_k.is_finite() {
            return Err(Error::NonConvergence { terms: k, last_term: c_k.as_f64() });
        }
        partial = if k % 2 == 0 { partial + c_k } else { partial - c_k };
        last = c_k;
        if c_k.abs() < eps * (T::one() + partial.abs()) {
            quiet += 1;
            if quiet >= rule.patience {
                return Ok(SeriesSum { value: partial, terms: k });
            }
        } else {
            quiet = 0;
        }
    }
    Err(Error::NonConvergence { terms: rule.n_max, last_term: last.as_f64() })
}

/// `Gamma(m / 2)` for a positive integer `m`.
pub fn gamma_half<T: Real>(m: usize) -> T {
    assert!(m >= 1, "Gamma(0) is undefined");
    let (mut x, mut g) = if m % 2 == 0 { (2, T::one()) } else { (1, T::pi().sqrt()) };
    while x < m {
        g *= T::from_usize_lossy(x) / T::lit(2.0);
        x += 2;
    }
    g
}
