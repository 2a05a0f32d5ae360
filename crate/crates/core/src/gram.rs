//! Joint Gram matrices of mixtures and their weighted centering.
//!
//! For a mixture with weights `w` (the diagonal of `Delta`) and joint Gram
//! matrix `K`, the centered matrix is
//!
//! ```text
//! raw = (I - 1 Delta) K (I - Delta 1) Delta
//! S   = Delta^1/2 (I - 1 Delta) K (I - Delta 1) Delta^1/2
//! ```
//!
//! `raw` is similar to the symmetric positive semidefinite `S` whenever all
//! weights are positive, so every spectral quantity is computed on `S`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::base_kernel::{max_asymmetry, PointKernel};
use crate::error::{Error, Result};
use crate::measures::{check_compatible, check_normalized, PointCloud, NORMALIZED_SLACK};
use crate::scalar::Real;

/// Relative threshold separating rounding noise from genuinely negative
/// eigenvalues of `S`.
pub const PSD_CLAMP: f64 = 1e-9;
/// Symmetry tolerance for externally supplied Gram matrices.
pub const PRECOMPUTED_SYMMETRY_TOL: f64 = 1e-9;

/// Joint Gram matrix `[[K_a, K_*], [K_*^T, K_b]]` over a concatenated support.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix<T: Real> {
    entries: DMatrix<T>,
}

impl<T: Real> GramMatrix<T> {
    pub fn new(entries: DMatrix<T>) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::InvalidParameter(format!(
                "Gram matrix must be square, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("Gram matrix has non-finite entries".into()));
        }
        let dev = max_asymmetry(&entries);
        if dev > T::tol(PRECOMPUTED_SYMMETRY_TOL) {
            return Err(Error::Asymmetry { max_deviation: dev.as_f64() });
        }
        Ok(GramMatrix { entries })
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<T> {
        &self.entries
    }

    pub fn into_inner(self) -> DMatrix<T> {
        self.entries
    }
}

/// Gram matrix of the mixture of `a` and `b`: points of `a` first.
pub fn joint_gram<T: Real, K: PointKernel<T> + ?Sized>(
    a: &PointCloud<T>,
    b: &PointCloud<T>,
    kernel: &K,
) -> Result<GramMatrix<T>> {
    check_normalized(a)?;
    check_normalized(b)?;
    check_compatible(a, b)?;
    let (d, e) = (a.len(), b.len());
    let mut m = DMatrix::zeros(d + e, d + e);
    kernel.fill_block(a, a, &mut m, 0, 0)?;
    kernel.fill_block(b, b, &mut m, d, d)?;
    kernel.fill_block(a, b, &mut m, 0, d)?;
    mirror_block(&mut m, d, e);
    Ok(GramMatrix { entries: m })
}

/// Same as [`joint_gram`] but reusing precomputed self-blocks `K_a`, `K_b`.
pub(crate) fn joint_gram_with_blocks<T: Real, K: PointKernel<T> + ?Sized>(
    a: &PointCloud<T>,
    b: &PointCloud<T>,
    block_a: &DMatrix<T>,
    block_b: &DMatrix<T>,
    kernel: &K,
) -> Result<GramMatrix<T>> {
    let (d, e) = (a.len(), b.len());
    let mut m = DMatrix::zeros(d + e, d + e);
    m.view_mut((0, 0), (d, d)).copy_from(block_a);
    m.view_mut((d, d), (e, e)).copy_from(block_b);
    kernel.fill_block(a, b, &mut m, 0, d)?;
    mirror_block(&mut m, d, e);
    Ok(GramMatrix { entries: m })
}

/// Gram matrix of a single cloud against itself.
pub fn self_gram<T: Real, K: PointKernel<T> + ?Sized>(
    a: &PointCloud<T>,
    kernel: &K,
) -> Result<DMatrix<T>> {
    let mut m = DMatrix::zeros(a.len(), a.len());
    kernel.fill_block(a, a, &mut m, 0, 0)?;
    Ok(m)
}

fn mirror_block<T: Real>(m: &mut DMatrix<T>, d: usize, e: usize) {
    for i in 0..d {
        for j in 0..e {
            m[(d + j, i)] = m[(i, d + j)];
        }
    }
}

/// Weight-centered joint Gram matrix of a mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredGram<T: Real> {
    raw: DMatrix<T>,
    symmetrized: DMatrix<T>,
    weights: Vec<T>,
}

impl<T: Real> CenteredGram<T> {
    /// The (generally non-symmetric) centered matrix `(I - 1 Delta) K (I - Delta 1) Delta`.
    pub fn raw(&self) -> &DMatrix<T> {
        &self.raw
    }

    /// The symmetric form `Delta^1/2 (I - 1 Delta) K (I - Delta 1) Delta^1/2`.
    pub fn symmetrized(&self) -> &DMatrix<T> {
        &self.symmetrized
    }

    /// Diagonal of `Delta`.
    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn delta(&self) -> DMatrix<T> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.weights))
    }

    pub fn size(&self) -> usize {
        self.weights.len()
    }

    /// `tr(raw)`, equal to `tr(S)`.
    pub fn trace(&self) -> T {
        self.raw.trace()
    }

    pub fn spectrum(&self) -> Result<Vec<T>> {
        spectrum_of(&self.symmetrized)
    }

    pub fn trace_powers(&self, delta: T, n: usize) -> Vec<T> {
        trace_powers_of(&self.symmetrized, delta, n)
    }

    pub fn spectral_radius(&self) -> T {
        spectral_radius(&self.symmetrized, POWER_MAX_ITER, T::tol(POWER_REL_TOL))
    }
}

/// Centers a Gram matrix with the mixture weights `w`.
pub fn center<T: Real>(k: &GramMatrix<T>, weights: &[T]) -> Result<CenteredGram<T>> {
    let n = k.size();
    if weights.len() != n {
        return Err(Error::WeightMismatch(format!(
            "{} weights for a {n}x{n} Gram matrix",
            weights.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < T::zero()) {
        return Err(Error::WeightMismatch("weights must be finite and nonnegative".into()));
    }
    let total: T = weights.iter().copied().sum();
    if (total - T::one()).abs() > T::tol(NORMALIZED_SLACK) {
        return Err(Error::WeightMismatch(format!("weights sum to {total}, expected 1")));
    }

    let kk = &k.entries;
    // r_j = sum_i w_i K_ij and c = w^T K w
    let r: Vec<T> = (0..n)
        .map(|j| (0..n).map(|i| weights[i] * kk[(i, j)]).sum())
        .collect();
    let c: T = weights.iter().zip(&r).map(|(&w, &rj)| w * rj).sum();
    let roots: Vec<T> = weights.iter().map(|w| w.sqrt()).collect();

    let mut raw = DMatrix::zeros(n, n);
    let mut sym = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            let centered = kk[(i, j)] - r[i] - r[j] + c;
            raw[(i, j)] = centered * weights[j];
            sym[(i, j)] = roots[i] * centered * roots[j];
        }
    }
    Ok(CenteredGram { raw, symmetrized: sym, weights: weights.to_vec() })
}

/// Builds a [`CenteredGram`] from an externally computed Gram matrix.
pub fn from_precomputed<T: Real>(k: DMatrix<T>, weights: &[T]) -> Result<CenteredGram<T>> {
    center(&GramMatrix::new(k)?, weights)
}

/// Eigenvalues of a symmetric positive semidefinite matrix, descending.
///
/// Eigenvalues in `[-1e-9 * |S|, 0)` are clamped to zero; anything lower is
/// reported as [`Error::NotPsd`].
pub fn spectrum_of<T: Real>(s: &DMatrix<T>) -> Result<Vec<T>> {
    if s.nrows() == 0 {
        return Ok(Vec::new());
    }
    let mut eig: Vec<T> = s.clone().symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let norm = eig.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    let threshold = T::tol(PSD_CLAMP) * norm;
    for x in eig.iter_mut() {
        if *x < -threshold {
            return Err(Error::NotPsd {
                min_eigenvalue: x.as_f64(),
                threshold: threshold.as_f64(),
            });
        }
        if *x < T::zero() {
            *x = T::zero();
        }
    }
    Ok(eig)
}

/// Spectrum of the symmetrized centered Gram matrix.
pub fn spectrum<T: Real>(c: &CenteredGram<T>) -> Result<Vec<T>> {
    c.spectrum()
}

/// `d_k = tr((delta S)^k) / 2` for `k = 1..=n`.
pub fn trace_powers<T: Real>(c: &CenteredGram<T>, delta: T, n: usize) -> Vec<T> {
    c.trace_powers(delta, n)
}

pub fn trace_powers_of<T: Real>(s: &DMatrix<T>, delta: T, n: usize) -> Vec<T> {
    let mut pt = PowerTraces::new(s * delta, baby_steps_for(n));
    let half = T::lit(0.5);
    (1..=n).map(|k| pt.trace(k) * half).collect()
}

/// Baby-step count for an expected number of trace powers.
pub(crate) fn baby_steps_for(n_max: usize) -> usize {
    ((n_max as f64 / 2.5).sqrt().round() as usize).clamp(2, 16)
}

/// Exact traces `tr(A^k)` of a symmetric matrix, computed lazily.
///
/// Keeps the baby steps `A, A^2, ..., A^q` and a running giant step
/// `G = A^{iq}`. Since every power of a symmetric matrix is symmetric,
/// `tr(A^{iq + j}) = <G, A^j>_F`, so each matrix product yields `q` new
/// traces and `N` traces cost about `q + N/q` products instead of `N`.
/// Products are not re-symmetrized; the resulting asymmetry is at rounding
/// level and only perturbs the traces by the same amount.
#[derive(Debug, Clone)]
pub struct PowerTraces<T: Real> {
    baby: Vec<DMatrix<T>>,
    giant: DMatrix<T>,
    giant_exp: usize,
    spare: Option<DMatrix<T>>,
    traces: Vec<T>,
    products: usize,
}

impl<T: Real> PowerTraces<T> {
    pub fn new(a: DMatrix<T>, q: usize) -> Self {
        let q = q.max(1);
        let n = a.nrows();
        let mut baby = Vec::with_capacity(q);
        let mut traces = Vec::with_capacity(4 * q);
        traces.push(a.trace());
        baby.push(a);
        let mut products = 0;
        for _ in 1..q {
            let last = baby.last().expect("nonempty");
            let mut next = DMatrix::zeros(n, n);
            next.gemm(T::one(), last, &baby[0], T::zero());
            traces.push(next.trace());
            baby.push(next);
            products += 1;
        }
        let giant = baby[q - 1].clone();
        let mut pt = PowerTraces { baby, giant, giant_exp: q, spare: None, traces, products };
        pt.extend_from_giant();
        pt
    }

    fn q(&self) -> usize {
        self.baby.len()
    }

    fn extend_from_giant(&mut self) {
        for j in 0..self.q() {
            let t = frobenius(&self.giant, &self.baby[j]);
            self.traces.push(t);
        }
    }

    /// `tr(A^k)`, `k >= 1`.
    pub fn trace(&mut self, k: usize) -> T {
        assert!(k >= 1, "trace powers start at 1");
        while self.traces.len() < k {
            let n = self.giant.nrows();
            let mut next = self.spare.take().unwrap_or_else(|| DMatrix::zeros(n, n));
            next.gemm(T::one(), &self.giant, &self.baby[self.q() - 1], T::zero());
            self.spare = Some(std::mem::replace(&mut self.giant, next));
            self.giant_exp += self.q();
            self.products += 1;
            self.extend_from_giant();
        }
        self.traces[k - 1]
    }

    /// Number of traces available without further matrix products.
    pub fn available(&self) -> usize {
        self.traces.len()
    }

    /// Matrix products performed so far.
    pub fn products(&self) -> usize {
        self.products
    }

    /// Upper bound on the spectral radius of `A` from the highest even power
    /// already computed: `rho <= tr(A^{2m})^{1/(2m)}`.
    pub fn radius_upper_bound(&self) -> T {
        let m = self.available() / 2;
        let t = self.traces[2 * m - 1].max(T::zero());
        t.powf(T::one() / T::from_usize_lossy(2 * m))
    }
}

fn frobenius<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    a.as_slice().iter().zip(b.as_slice()).map(|(&x, &y)| x * y).sum()
}

pub const POWER_MAX_ITER: usize = 200;
pub const POWER_REL_TOL: f64 = 1e-6;

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
///
/// Returns the Rayleigh quotient once it changes by less than `rel_tol`
/// (relative) between iterations, or after `max_iter` iterations.
pub fn spectral_radius<T: Real>(s: &DMatrix<T>, max_iter: usize, rel_tol: T) -> T {
    let n = s.nrows();
    if n == 0 {
        return T::zero();
    }
    // Fixed, non-degenerate start vector so results are reproducible.
    let mut v = DVector::from_fn(n, |i, _| {
        T::one() + T::lit(((i as u64).wrapping_mul(2_654_435_761) % 1000) as f64 / 1000.0)
    });
    v /= v.norm();
    let mut w = DVector::zeros(n);
    let mut rho = T::zero();
    for _ in 0..max_iter {
        w.gemv(T::one(), s, &v, T::zero());
        let next = v.dot(&w);
        let norm = w.norm();
        if norm == T::zero() {
            return T::zero();
        }
        v.copy_from(&w);
        v /= norm;
        let converged = (next - rho).abs() <= rel_tol * next.abs();
        rho = next;
        if converged {
            break;
        }
    }
    rho.max(T::zero())
}

/// Stochastic estimate of `d_k = tr((delta S)^k) / 2` with Rademacher probes.
///
/// Uses only matrix-vector products: `O(n * d^2 * probes)`.
pub fn trace_powers_hutchinson<T: Real>(
    c: &CenteredGram<T>,
    delta: T,
    n: usize,
    probes: usize,
    seed: u64,
) -> Vec<T> {
    let s = c.symmetrized() * delta;
    let d = s.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = vec![T::zero(); n];
    let mut w = DVector::zeros(d);
    for _ in 0..probes.max(1) {
        let z = DVector::from_fn(d, |_, _| if rng.random::<bool>() { T::one() } else { -T::one() });
        let mut v = z.clone();
        for slot in acc.iter_mut() {
            w.gemv(T::one(), &s, &v, T::zero());
            std::mem::swap(&mut v, &mut w);
            *slot += z.dot(&v);
        }
    }
    let scale = T::lit(0.5) / T::from_usize_lossy(probes.max(1));
    acc.into_iter().map(|x| x * scale).collect()
}

/// Right-hand side of the admissible-`delta` bound
/// `1 / ([max(d*omega - 1, 1)]^2 * d * omega)` for mixtures of at most `d`
/// points whose weights never exceed `omega`.
pub fn delta_bound(d: usize, omega: f64) -> f64 {
    let dw = d as f64 * omega;
    let m = (dw - 1.0).max(1.0);
    1.0 / (m * m * dw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base_kernel::BaseKernel;
    use proptest::prelude::*;
    use rand::Rng;

    fn pt(coords: &[f64]) -> PointCloud<f64> {
        PointCloud::uniform(2, coords.to_vec()).unwrap()
    }

    /// Literal matrix-product form of the centering, used as an oracle.
    fn centered_oracle(k: &DMatrix<f64>, w: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = w.len();
        let delta = DMatrix::from_diagonal(&DVector::from_column_slice(w));
        let root = DMatrix::from_diagonal(&DVector::from_iterator(n, w.iter().map(|x| x.sqrt())));
        let ones = DMatrix::from_element(n, n, 1.0);
        let id = DMatrix::identity(n, n);
        let left = &id - &ones * &delta;
        let right = &id - &delta * &ones;
        let raw = &left * k * &right * &delta;
        let sym = &root * &left * k * &right * &root;
        (raw, sym)
    }

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud<f64> {
        let coords: Vec<f64> = (0..2 * n).map(|_| rng.random::<f64>()).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.05).collect();
        PointCloud::euclidean(2, coords, w).unwrap()
    }

    #[test]
    fn identical_single_points_give_ones() {
        let a = pt(&[0.2, 0.3]);
        let g = joint_gram(&a, &a, &BaseKernel::Gaussian { sigma: 0.1 }).unwrap();
        assert_eq!(g.entries(), &DMatrix::from_element(2, 2, 1.0));
    }

    #[test]
    fn two_points_one_width_apart() {
        let g = joint_gram(&pt(&[0.0, 0.0]), &pt(&[0.06, 0.08]), &BaseKernel::Gaussian { sigma: 0.1 })
            .unwrap();
        let e = (-0.5f64).exp();
        let expect = DMatrix::from_row_slice(2, 2, &[1.0, e, e, 1.0]);
        assert!((g.entries() - expect).amax() < 1e-15);
    }

    #[test]
    fn joint_gram_matches_entry_loop() {
        let a = pt(&[0.0, 0.0, 0.5, 0.1]);
        let b = pt(&[0.3, 0.9, 0.2, 0.2]);
        let k = BaseKernel::Gaussian { sigma: 0.4 };
        let g = joint_gram(&a, &b, &k).unwrap();
        let all = [0.0, 0.0, 0.5, 0.1, 0.3, 0.9, 0.2, 0.2];
        for i in 0..4 {
            for j in 0..4 {
                let v: f64 = k.evaluate(&all[2 * i..2 * i + 2], &all[2 * j..2 * j + 2]).unwrap();
                assert_eq!(g.entries()[(i, j)], v);
            }
        }
    }

    #[test]
    fn constant_kernel_centers_to_zero() {
        for n in [1usize, 3, 7] {
            let w: Vec<f64> = (1..=n).map(|i| i as f64).collect();
            let total: f64 = w.iter().sum();
            let w: Vec<f64> = w.iter().map(|x| x / total).collect();
            let c = from_precomputed(DMatrix::from_element(n, n, 1.0), &w).unwrap();
            assert!(c.raw().amax() < 1e-15);
            assert!(c.symmetrized().amax() < 1e-15);
        }
    }

    #[test]
    fn one_atom_has_zero_centered_gram() {
        let c = from_precomputed(DMatrix::from_element(1, 1, 3.7), &[1.0]).unwrap();
        assert_eq!(c.raw()[(0, 0)], 0.0);
    }

    #[test]
    fn two_by_two_spectrum() {
        let e = (-0.5f64).exp();
        let c = from_precomputed(DMatrix::from_row_slice(2, 2, &[1.0, e, e, 1.0]), &[0.5, 0.5])
            .unwrap();
        let s = c.spectrum().unwrap();
        assert!((s[0] - (1.0 - e) / 2.0).abs() < 1e-14);
        assert!(s[1].abs() < 1e-15);
    }

    #[test]
    fn centering_matches_matrix_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [2usize, 5, 9] {
            let x = DMatrix::from_fn(n, 3, |_, _| rng.random::<f64>());
            let k = &x * x.transpose();
            let mut w: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let t: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= t);
            let c = from_precomputed(k.clone(), &w).unwrap();
            let (raw, sym) = centered_oracle(&k, &w);
            assert!((c.raw() - raw).amax() < 1e-13);
            assert!((c.symmetrized() - sym).amax() < 1e-13);
        }
    }

    #[test]
    fn precomputed_identity_and_errors() {
        let c = from_precomputed(DMatrix::<f64>::identity(2, 2), &[0.5, 0.5]).unwrap();
        let (raw, _) = centered_oracle(&DMatrix::identity(2, 2), &[0.5, 0.5]);
        assert!((c.raw() - raw).amax() < 1e-15);
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(from_precomputed(asym, &[0.5, 0.5]), Err(Error::Asymmetry { .. })));
        let id = DMatrix::<f64>::identity(2, 2);
        assert!(matches!(from_precomputed(id.clone(), &[1.0]), Err(Error::WeightMismatch(_))));
        assert!(matches!(from_precomputed(id, &[0.7, 0.7]), Err(Error::WeightMismatch(_))));
    }

    #[test]
    fn precomputed_equals_pipeline() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_cloud(&mut rng, 4);
        let b = random_cloud(&mut rng, 3);
        let k = BaseKernel::Gaussian { sigma: 0.3 };
        let g = joint_gram(&a, &b, &k).unwrap();
        let w: Vec<f64> = crate::measures::mixture(&a, &b).unwrap().weights().to_vec();
        let pipeline = center(&g, &w).unwrap();
        let pre = from_precomputed(g.into_inner(), &w).unwrap();
        assert_eq!(pipeline, pre);
    }

    #[test]
    fn spectrum_examples() {
        assert_eq!(spectrum_of(&DMatrix::<f64>::zeros(3, 3)).unwrap(), vec![0.0; 3]);
        let d = DMatrix::from_diagonal(&DVector::from_column_slice(&[0.25, 0.5]));
        assert_eq!(spectrum_of(&d).unwrap(), vec![0.5, 0.25]);
        let bad = DMatrix::from_diagonal(&DVector::from_column_slice(&[0.5, -0.1]));
        assert!(matches!(spectrum_of(&bad), Err(Error::NotPsd { .. })));
        let noisy = DMatrix::from_diagonal(&DVector::from_column_slice(&[0.5, -1e-14]));
        assert_eq!(spectrum_of(&noisy).unwrap(), vec![0.5, 0.0]);
    }

    #[test]
    fn trace_power_examples() {
        assert_eq!(trace_powers_of(&DMatrix::<f64>::zeros(4, 4), 1.0, 5), vec![0.0; 5]);
        let d = DMatrix::from_diagonal(&DVector::from_column_slice(&[0.5, 0.25]));
        let t = trace_powers_of(&d, 1.0, 3);
        // oracle: half the power sums of the eigenvalues
        let oracle: Vec<f64> = (1..=3).map(|k| 0.5 * (0.5f64.powi(k) + 0.25f64.powi(k))).collect();
        for (a, b) in t.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((t[0] - 0.375).abs() < 1e-15);
        assert!((t[1] - 0.15625).abs() < 1e-15);
        assert!((t[2] - 0.0703125).abs() < 1e-15);
    }

    #[test]
    fn power_traces_match_eigen_power_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = DMatrix::from_fn(12, 12, |_, _| rng.random::<f64>() - 0.5);
        let s = &x * x.transpose() / 12.0;
        let eig = s.clone().symmetric_eigenvalues();
        for q in [1usize, 2, 3, 5] {
            let mut pt = PowerTraces::new(s.clone(), q);
            for k in 1..=40 {
                let oracle: f64 = eig.iter().map(|l| l.powi(k as i32)).sum();
                let got = pt.trace(k);
                assert!((got - oracle).abs() <= 1e-12 * oracle.abs().max(1e-300) + 1e-300, "q={q} k={k}");
            }
        }
        let pt = PowerTraces::new(s, 4);
        assert!(pt.radius_upper_bound() >= eig.max() * (1.0 - 1e-12));
    }

    #[test]
    fn first_trace_power_is_half_raw_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = joint_gram(&random_cloud(&mut rng, 5), &random_cloud(&mut rng, 6), &BaseKernel::Gaussian {
            sigma: 0.2,
        })
        .unwrap();
        let w: Vec<f64> = (0..11).map(|i| if i < 5 { 0.1 } else { 0.5 / 6.0 }).collect();
        let c = center(&g, &w).unwrap();
        let delta = 0.7;
        assert!((c.trace_powers(delta, 1)[0] - 0.5 * delta * c.raw().trace()).abs() < 1e-14);
    }

    #[test]
    fn power_iteration_finds_top_eigenvalue() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = DMatrix::from_fn(30, 30, |_, _| rng.random::<f64>() - 0.5);
        let s = &x * x.transpose();
        let top = s.clone().symmetric_eigenvalues().max();
        let rho = spectral_radius(&s, 2000, 1e-12);
        assert!((rho - top).abs() < 1e-6 * top);
        assert_eq!(spectral_radius(&DMatrix::<f64>::zeros(3, 3), 10, 1e-6), 0.0);
    }

    #[test]
    fn hutchinson_is_unbiased_enough() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_cloud(&mut rng, 20);
        let b = random_cloud(&mut rng, 20);
        let g = joint_gram(&a, &b, &BaseKernel::Gaussian { sigma: 0.3 }).unwrap();
        let w = crate::measures::mixture(&a, &b).unwrap().weights().to_vec();
        let c = center(&g, &w).unwrap();
        let exact = c.trace_powers(1.0, 4);
        // relative standard error is at most sqrt(2 / probes) ~ 0.022 here
        let est = trace_powers_hutchinson(&c, 1.0, 4, 4000, 7);
        for (e, x) in exact.iter().zip(&est) {
            assert!((e - x).abs() < 0.1 * e, "{e} vs {x}");
        }
    }

    #[test]
    fn delta_bound_examples() {
        // d = 10 points of weight 0.1: d*omega = 1
        assert_eq!(delta_bound(10, 0.1), 1.0);
        // equal-size uniform clouds of m points: mixture has 2m points of weight 1/(2m)
        for m in [5usize, 40, 80] {
            assert!(delta_bound(2 * m, 0.5 / m as f64) >= 1.0 - 1e-12);
        }
        // d_min..d_max uniform clouds: omega = 1/(2 d_min), d = 2 d_max
        for (dmin, dmax) in [(40usize, 80usize), (10, 30), (50, 50)] {
            let b = delta_bound(2 * dmax, 0.5 / dmin as f64);
            assert!(b >= (dmin as f64 / dmax as f64).powi(3) * (1.0 - 1e-12), "{dmin} {dmax} {b}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn centered_invariants(seed in 0u64..10_000, da in 1usize..12, db in 1usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_cloud(&mut rng, da);
            let b = random_cloud(&mut rng, db);
            let g = joint_gram(&a, &b, &BaseKernel::Gaussian { sigma: 0.25 }).unwrap();
            let w = crate::measures::mixture(&a, &b).unwrap().weights().to_vec();
            let c = center(&g, &w).unwrap();
            let s = c.symmetrized();
            let norm = s.norm().max(1e-300);
            // trace similarity
            prop_assert!((c.raw().trace() - s.trace()).abs() <= 1e-10 * s.trace().abs().max(1e-12));
            // PSD up to rounding
            let eig = s.clone().symmetric_eigenvalues();
            prop_assert!(eig.min() >= -1e-9 * norm);
            // all-weights direction annihilated
            let root = DVector::from_iterator(w.len(), w.iter().map(|x| x.sqrt()));
            prop_assert!((s * &root).norm() <= 1e-10 * norm);
            // raw and symmetrized share eigenvalues
            let mut raw_eig: Vec<f64> = c.raw().clone().complex_eigenvalues().iter().map(|z| z.re).collect();
            raw_eig.sort_by(|x, y| y.partial_cmp(x).unwrap());
            let sym = c.spectrum().unwrap();
            let top = sym[0].max(1e-300);
            for (x, y) in raw_eig.iter().zip(&sym) {
                prop_assert!((x - y).abs() <= 1e-8 * top, "{} vs {}", x, y);
            }
        }

        #[test]
        fn permutation_and_null_padding(seed in 0u64..10_000, da in 1usize..10, db in 1usize..10) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_cloud(&mut rng, da);
            let b = random_cloud(&mut rng, db);
            let k = BaseKernel::Gaussian { sigma: 0.3 };
            let g = joint_gram(&a, &b, &k).unwrap().into_inner();
            let w = crate::measures::mixture(&a, &b).unwrap().weights().to_vec();
            let base = from_precomputed(g.clone(), &w).unwrap().spectrum().unwrap();

            let n = w.len();
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                let j = rng.random_range(0..=i);
                perm.swap(i, j);
            }
            let gp = DMatrix::from_fn(n, n, |i, j| g[(perm[i], perm[j])]);
            let wp: Vec<f64> = perm.iter().map(|&i| w[i]).collect();
            let permuted = from_precomputed(gp, &wp).unwrap().spectrum().unwrap();
            for (x, y) in base.iter().zip(&permuted) {
                prop_assert!((x - y).abs() <= 1e-12);
            }

            let extra = crate::measures::Points::Euclidean { dim: 2, coords: vec![rng.random(), rng.random()] };
            let padded_a = a.with_extra_points(extra, vec![0.0]).unwrap();
            let gpad = joint_gram(&padded_a, &b, &k).unwrap();
            let wpad = crate::measures::mixture(&padded_a, &b).unwrap().weights().to_vec();
            let padded = center(&gpad, &wpad).unwrap().spectrum().unwrap();
            prop_assert_eq!(padded.len(), base.len() + 1);
            prop_assert!(padded[base.len()].abs() <= 1e-10);
            for (x, y) in base.iter().zip(&padded) {
                prop_assert!((x - y).abs() <= 1e-10);
            }
        }
    }
}
