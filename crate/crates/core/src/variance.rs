//! Variance matrices of Euclidean clouds and the spectral functions built
//! on them.
//!
//! These are the finite-dimensional counterparts of the Gram-matrix kernels
//! and double as an independent route for checking them: for a Linear base
//! kernel the nonzero spectrum of the centered Gram matrix equals the
//! nonzero spectrum of the variance matrix.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gram::PowerTraces;
use crate::measures::PointCloud;
use crate::scalar::Real;
use crate::series::{alternating_sum, gamma_half, Coefficients, SeriesSum, Truncation};

/// Eigenvalues at or below this are treated as zero by the inverse-spectrum
/// functions.
pub const TOL_PD: f64 = 1e-12;
/// Largest number of index compositions `gamma_i` will enumerate.
pub const MAX_COMPOSITIONS: u128 = 1_000_000;
const MASS_SLACK: f64 = 1e-9;

/// Symmetric positive semidefinite `n x n` variance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceMatrix<T: Real> {
    sigma: DMatrix<T>,
}

impl<T: Real> VarianceMatrix<T> {
    /// Wraps a matrix after checking symmetry and semidefiniteness.
    pub fn new(sigma: DMatrix<T>) -> Result<Self> {
        if !sigma.is_square() {
            return Err(Error::InvalidParameter("variance matrix must be square".into()));
        }
        let scale = sigma.amax().max(T::one());
        let dev = crate::base_kernel::max_asymmetry(&sigma);
        if dev > T::tol(1e-12) * scale {
            return Err(Error::Asymmetry { max_deviation: dev.as_f64() });
        }
        let m = VarianceMatrix { sigma };
        let eig = m.raw_eigenvalues();
        let norm = eig.iter().fold(T::zero(), |a, x| a.max(x.abs()));
        if let Some(&low) = eig.iter().find(|&&x| x < -T::tol(1e-10) * norm) {
            return Err(Error::NotPsd { min_eigenvalue: low.as_f64(), threshold: 1e-10 * norm.as_f64() });
        }
        Ok(m)
    }

    pub fn from_diagonal(diag: &[T]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(diag)))
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.sigma
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    fn raw_eigenvalues(&self) -> Vec<T> {
        self.sigma.clone().symmetric_eigenvalues().iter().copied().collect()
    }

    /// Eigenvalues, descending, with rounding noise below zero clamped.
    pub fn eigenvalues(&self) -> Vec<T> {
        let mut e: Vec<T> = self.raw_eigenvalues().into_iter().map(|x| x.max(T::zero())).collect();
        e.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        e
    }

    /// Same matrix embedded in a larger one with `extra` zero rows and columns.
    pub fn padded(&self, extra: usize) -> Self {
        let n = self.dim();
        let mut m = DMatrix::zeros(n + extra, n + extra);
        m.view_mut((0, 0), (n, n)).copy_from(&self.sigma);
        VarianceMatrix { sigma: m }
    }
}

/// `sum_i a_i x_i x_i^T - m m^T` with `m = sum_i a_i x_i`, without any
/// check on the total mass.
pub fn second_moment_variance<T: Real>(dim: usize, coords: &[T], weights: &[T]) -> DMatrix<T> {
    let mut s = DMatrix::zeros(dim, dim);
    let mut m = vec![T::zero(); dim];
    for (x, &a) in coords.chunks_exact(dim).zip(weights) {
        for i in 0..dim {
            m[i] += a * x[i];
            for j in 0..dim {
                s[(i, j)] += a * x[i] * x[j];
            }
        }
    }
    for i in 0..dim {
        for j in 0..dim {
            s[(i, j)] -= m[i] * m[j];
        }
    }
    s
}

/// Variance matrix of a Euclidean sub-probability measure.
pub fn variance<T: Real>(cloud: &PointCloud<T>) -> Result<VarianceMatrix<T>> {
    let (dim, coords) = match (cloud.dim(), cloud.coords()) {
        (Some(d), Some(c)) => (d, c),
        _ => return Err(Error::Mode("variance needs Euclidean points".into())),
    };
    let mass = cloud.mass();
    if mass > T::one() + T::tol(MASS_SLACK) {
        return Err(Error::MassExceeded { mass: mass.as_f64() });
    }
    let mut s = second_moment_variance(dim, coords, cloud.weights());
    // exact symmetry
    for i in 0..dim {
        for j in (i + 1)..dim {
            let v = (s[(i, j)] + s[(j, i)]) * T::lit(0.5);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    Ok(VarianceMatrix { sigma: s })
}

/// Trace of the variance matrix.
pub fn psi_tr<T: Real>(sigma: &VarianceMatrix<T>) -> T {
    sigma.sigma.trace()
}

/// Inverse generalized variance `det(Sigma / eta + I)^{-1/2}`.
pub fn psi0<T: Real>(sigma: &VarianceMatrix<T>, eta: T) -> Result<T> {
    if !(eta > T::zero()) {
        return Err(Error::InvalidParameter(format!("eta must be positive, got {eta}")));
    }
    Ok(sigma
        .eigenvalues()
        .into_iter()
        .map(|l| (l / eta + T::one()).sqrt().recip())
        .product())
}

fn positive_spectrum<T: Real>(sigma: &VarianceMatrix<T>) -> Result<Vec<T>> {
    let eig = sigma.eigenvalues();
    match eig.last() {
        Some(&low) if low > T::tol(TOL_PD) => Ok(eig),
        Some(&low) => Err(Error::Singular { min_eigenvalue: low.as_f64() }),
        None => Err(Error::InvalidParameter("empty variance matrix".into())),
    }
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r.saturating_mul(n - i) / (i + 1);
    }
    r
}

/// Calls `f` on every composition of `total` into `parts` nonnegative parts.
fn for_each_composition(total: usize, parts: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(rem: usize, idx: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if idx + 1 == cur.len() {
            cur[idx] = rem;
            f(cur);
            return;
        }
        for v in 0..=rem {
            cur[idx] = v;
            rec(rem - v, idx + 1, cur, f);
        }
    }
    let mut cur = vec![0; parts];
    rec(total, 0, &mut cur, f);
}

fn composition_sum<T: Real>(eig: &[T], i: usize, integral: bool) -> Result<T> {
    let n = eig.len();
    let count = binomial((i + n - 1) as u128, i as u128);
    if count > MAX_COMPOSITIONS {
        return Err(Error::Complexity { compositions: count });
    }
    // Gamma(j + 1/2) and j! for j = 0..=i
    let gammas: Vec<T> = (0..=i).map(|j| gamma_half(2 * j + 1)).collect();
    let mut factorials = vec![T::one(); i + 1];
    for j in 1..=i {
        factorials[j] = factorials[j - 1] * T::from_usize_lossy(j);
    }
    let mut total = T::zero();
    for_each_composition(i, n, &mut |j: &[usize]| {
        let mut term = if integral { factorials[i] } else { T::one() };
        for (k, &jk) in j.iter().enumerate() {
            term *= gammas[jk] / eig[k].powi(jk as i32);
            if integral {
                term /= factorials[jk] * eig[k].sqrt();
            }
        }
        total += term;
    });
    Ok(total)
}

/// `gamma_i(Sigma) = sum_{|j| = i} prod_k Gamma(j_k + 1/2) / lambda_k^{j_k}`.
pub fn gamma_i<T: Real>(sigma: &VarianceMatrix<T>, i: usize) -> Result<T> {
    let eig = positive_spectrum(sigma)?;
    if i == 0 {
        return Ok(T::one());
    }
    composition_sum(&eig, i, false)
}

/// Closed form of `int exp(-y^T Sigma y) (y^T y)^i dy`.
///
/// Expanding `(sum_k y_k^2)^i` brings in the multinomial weights, so this is
/// `sum_{|j| = i} i! prod_k Gamma(j_k + 1/2) lambda_k^{-j_k - 1/2} / j_k!`,
/// which differs from [`gamma_i`] once `i >= 2`.
pub fn psi_g_integral<T: Real>(sigma: &VarianceMatrix<T>, i: usize) -> Result<T> {
    let eig = positive_spectrum(sigma)?;
    if i == 0 {
        let det: T = eig.iter().copied().product();
        return Ok(T::pi().powf(T::from_usize_lossy(eig.len()) / T::lit(2.0)) / det.sqrt());
    }
    composition_sum(&eig, i, true)
}

/// `(2 / sqrt(pi))^{n/2}`.
pub fn sigma_n<T: Real>(n: usize) -> T {
    (T::lit(2.0) / T::pi().sqrt()).powf(T::from_usize_lossy(n) / T::lit(2.0))
}

/// The three closed forms in the inverse power traces of `Sigma`:
///
/// ```text
/// psi_1 = s_n / sqrt|S| [tr S^-1]
/// psi_2 = s_n / sqrt|S| [(tr S^-1)^2 + 2 tr S^-2]
/// psi_3 = s_n / sqrt|S| [(tr S^-1)^3 + 6 (tr S^-1)(tr S^-2) + 8 tr S^-3]
/// ```
pub fn psi_lancaster<T: Real>(sigma: &VarianceMatrix<T>, i: usize) -> Result<T> {
    let eig = positive_spectrum(sigma)?;
    let inv_trace = |p: i32| -> T { eig.iter().map(|l| l.powi(-p)).sum() };
    let (t1, t2, t3) = (inv_trace(1), inv_trace(2), inv_trace(3));
    let bracket = match i {
        1 => t1,
        2 => t1 * t1 + T::lit(2.0) * t2,
        3 => t1 * t1 * t1 + T::lit(6.0) * t1 * t2 + T::lit(8.0) * t3,
        _ => {
            return Err(Error::InvalidParameter(format!(
                "closed forms exist for i = 1, 2, 3 (got {i})"
            )))
        }
    };
    let det: T = eig.iter().copied().product();
    Ok(sigma_n::<T>(eig.len()) / det.sqrt() * bracket)
}

fn check_below<T: Real>(sigma: &VarianceMatrix<T>, bound: T) -> Result<()> {
    let top = sigma.eigenvalues().first().copied().unwrap_or(T::zero());
    if top >= bound {
        return Err(Error::SpectrumTooLarge { max_eigenvalue: top.as_f64() });
    }
    Ok(())
}

/// `c_0..=c_n` from the power traces of `Sigma`.
fn sigma_coefficients<T: Real>(sigma: &VarianceMatrix<T>, n: usize) -> Vec<T> {
    let mut gen = Coefficients::default();
    if n > 0 {
        let mut pt = PowerTraces::new(sigma.sigma.clone(), crate::gram::baby_steps_for(n));
        for k in 1..=n {
            gen.push(pt.trace(k) * T::lit(0.5));
        }
    }
    gen.coefficients().to_vec()
}

/// Partial sum through `k = n_terms` of
/// `f(t) = pi^{n/2} sum_k (-1)^k c_k t^{n/2 + k - 1} / Gamma(n/2 + k)`,
/// the density of `int exp(-y^T Sigma y)` over the spheres `y^T y = t`.
pub fn f_mu_density<T: Real>(sigma: &VarianceMatrix<T>, t: T, n_terms: usize) -> Result<T> {
    if !(t > T::zero()) {
        return Err(Error::InvalidParameter(format!("t must be positive, got {t}")));
    }
    check_below(sigma, T::one())?;
    let n = sigma.dim();
    let c = sigma_coefficients(sigma, n_terms);
    let half_n = T::from_usize_lossy(n) / T::lit(2.0);
    // t^{n/2 + k - 1} / Gamma(n/2 + k), built up by ratios
    let mut basis = t.powf(half_n - T::one()) / gamma_half::<T>(n);
    let mut sum = T::zero();
    for (k, &ck) in c.iter().enumerate() {
        if k > 0 {
            basis *= t / (half_n + T::from_usize_lossy(k - 1));
        }
        let term = ck * basis;
        sum = if k % 2 == 0 { sum + term } else { sum - term };
    }
    Ok(T::pi().powf(half_n) * sum)
}

/// Partial sum through `k = n_terms` of the Laplace transform of
/// [`f_mu_density`]: `L(s) = pi^{n/2} sum_k (-1)^k c_k s^{-n/2 - k}`,
/// which converges to `pi^{n/2} det(Sigma + s I)^{-1/2}`.
pub fn laplace_l<T: Real>(sigma: &VarianceMatrix<T>, s: T, n_terms: usize) -> Result<T> {
    if !(s > T::zero()) {
        return Err(Error::InvalidParameter(format!("s must be positive, got {s}")));
    }
    check_below(sigma, s)?;
    let n = sigma.dim();
    let half_n = T::from_usize_lossy(n) / T::lit(2.0);
    let c = sigma_coefficients(sigma, n_terms);
    let mut basis = s.powf(-half_n);
    let mut sum = T::zero();
    for (k, &ck) in c.iter().enumerate() {
        if k > 0 {
            basis /= s;
        }
        let term = ck * basis;
        sum = if k % 2 == 0 { sum + term } else { sum - term };
    }
    Ok(T::pi().powf(half_n) * sum)
}

/// `psi_M(Sigma) = sum_k (-1)^k c_k` with `d_k = tr(Sigma^k) / 2`, truncated
/// adaptively. Equals `det(I + Sigma)^{-1/2}` and ignores zero eigenvalues.
pub fn psi_m_variance<T: Real>(sigma: &VarianceMatrix<T>, rule: &Truncation) -> Result<SeriesSum<T>> {
    check_below(sigma, T::one())?;
    let mut pt = PowerTraces::new(sigma.sigma.clone(), crate::gram::baby_steps_for(rule.n_max));
    alternating_sum(|k| pt.trace(k) * T::lit(0.5), rule)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::VARIANCE_TRUNCATION;
    use nalgebra::DVector;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn diag(v: &[f64]) -> VarianceMatrix<f64> {
        VarianceMatrix::from_diagonal(v).unwrap()
    }

    fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        a.qr().q()
    }

    fn random_sigma(rng: &mut ChaCha8Rng, n: usize, top: f64) -> VarianceMatrix<f64> {
        let h = random_orthogonal(rng, n);
        let l = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| rng.random::<f64>() * top));
        let m = &h * l * h.transpose();
        VarianceMatrix::new((&m + m.transpose()) * 0.5).unwrap()
    }

    #[test]
    fn variance_examples() {
        let one = PointCloud::uniform(2, vec![0.3, 0.4]).unwrap();
        assert_eq!(variance(&one).unwrap().matrix(), &DMatrix::zeros(2, 2));

        let two = PointCloud::uniform(2, vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        let s = variance(&two).unwrap();
        assert_eq!(s.matrix(), &DMatrix::from_row_slice(2, 2, &[0.25, 0.0, 0.0, 0.0]));
        assert_eq!(psi_tr(&s), 0.25);
        assert_eq!(psi_tr(&s.padded(2)), 0.25);
    }

    #[test]
    fn variance_rejects_excess_mass_and_opaque() {
        let heavy = PointCloud::new(
            crate::measures::Points::Euclidean { dim: 1, coords: vec![0.0, 1.0] },
            vec![0.5, 0.5],
            crate::measures::Ingest::Strict,
        )
        .unwrap();
        assert!(variance(&heavy).is_ok());
        let coords = [0.0, 1.0];
        let s = second_moment_variance(1, &coords, &[1.0, 1.0]);
        // mass 2: the unnormalized definition is still computable
        assert_eq!(s[(0, 0)], 0.0);
        let opaque = PointCloud::<f64>::opaque(vec![1, 2], vec![1.0, 1.0]).unwrap();
        assert!(matches!(variance(&opaque), Err(Error::Mode(_))));
    }

    #[test]
    fn variance_is_translation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let coords: Vec<f64> = (0..30).map(|_| rng.random()).collect();
        let w: Vec<f64> = (0..10).map(|_| rng.random::<f64>() + 0.1).collect();
        let a = PointCloud::euclidean(3, coords.clone(), w.clone()).unwrap();
        let shifted: Vec<f64> = coords.iter().enumerate().map(|(i, x)| x + [3.0, -1.0, 0.5][i % 3]).collect();
        let b = PointCloud::euclidean(3, shifted, w).unwrap();
        let d = variance(&a).unwrap().matrix() - variance(&b).unwrap().matrix();
        assert!(d.amax() < 1e-12);
    }

    #[test]
    fn psi0_examples() {
        assert_eq!(psi0(&diag(&[0.0, 0.0]), 1.0).unwrap(), 1.0);
        let v = psi0(&diag(&[0.5, 0.25]), 1.0).unwrap();
        assert!((v - (1.5f64 * 1.25).powf(-0.5)).abs() < 1e-15);
        assert!((v - 0.730_296_743_340_221_4).abs() < 1e-12);
        assert_eq!(psi0(&diag(&[0.5, 0.25]).padded(3), 1.0).unwrap(), v);
        assert!(psi0(&diag(&[0.5]), 0.0).is_err());
    }

    #[test]
    fn gamma_i_examples() {
        assert_eq!(gamma_i(&diag(&[0.3, 2.0]), 0).unwrap(), 1.0);
        for n in 1..=5usize {
            let id = VarianceMatrix::new(DMatrix::<f64>::identity(n, n)).unwrap();
            let v = gamma_i(&id, 1).unwrap();
            assert!((v - n as f64 * PI.powf(n as f64 / 2.0) / 2.0).abs() < 1e-12);
        }
        let l = 0.7;
        assert!((gamma_i(&diag(&[l]), 1).unwrap() - PI.sqrt() / (2.0 * l)).abs() < 1e-14);
    }

    #[test]
    fn gamma_i_rejects_singular_and_huge() {
        assert!(matches!(gamma_i(&diag(&[1.0, 0.0]), 1), Err(Error::Singular { .. })));
        assert!(matches!(psi_lancaster(&diag(&[1.0, 0.0]), 1), Err(Error::Singular { .. })));
        let big = VarianceMatrix::new(DMatrix::<f64>::identity(40, 40)).unwrap();
        assert!(matches!(gamma_i(&big, 8), Err(Error::Complexity { .. })));
    }

    /// 1-D Gauss-Hermite-free check: composite Simpson on [-R, R].
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for k in 1..n {
            s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn integral_form_matches_quadrature() {
        // n = 1: int exp(-l y^2) y^{2i} dy
        for &(l, i) in &[(0.7, 1usize), (2.0, 2), (1.3, 3)] {
            let q = simpson(|y| (-l * y * y).exp() * y.powi(2 * i as i32), -12.0, 12.0, 4000);
            let v = psi_g_integral(&diag(&[l]), i).unwrap();
            assert!((v - q).abs() < 1e-9 * q, "{v} vs {q}");
        }
        // n = 2 with Sigma = I: int exp(-|y|^2) |y|^2 dy = pi (polar coordinates: 2 pi int r^3 e^{-r^2} dr)
        let q = 2.0 * PI * simpson(|r| r.powi(3) * (-r * r).exp(), 0.0, 12.0, 4000);
        let id = VarianceMatrix::new(DMatrix::<f64>::identity(2, 2)).unwrap();
        assert!((psi_g_integral(&id, 1).unwrap() - q).abs() < 1e-9);
        assert!((gamma_i(&id, 1).unwrap() - q).abs() < 1e-9);

        // n = 2, i = 2, Sigma = diag(a, b): in polar coordinates the radial
        // integral is Gamma(3) / (2 q^3) with q = a cos^2 + b sin^2
        let (a, b) = (0.7, 1.9);
        let m = 4000;
        let q = (0..m)
            .map(|k| {
                let th = 2.0 * PI * k as f64 / m as f64;
                (a * th.cos().powi(2) + b * th.sin().powi(2)).powi(-3)
            })
            .sum::<f64>()
            * 2.0
            * PI
            / m as f64;
        let v = psi_g_integral(&diag(&[a, b]), 2).unwrap();
        assert!((v - q).abs() < 1e-10 * q, "{v} vs {q}");
        // the plain composition sum has no multinomial weights
        let plain = gamma_i(&diag(&[a, b]), 2).unwrap() / (a * b).sqrt();
        assert!((plain - q).abs() > 1e-3 * q);
    }

    #[test]
    fn lancaster_examples() {
        for n in 1..=4usize {
            let id = VarianceMatrix::new(DMatrix::<f64>::identity(n, n)).unwrap();
            let v = psi_lancaster(&id, 1).unwrap();
            assert!((v - sigma_n::<f64>(n) * n as f64).abs() < 1e-13);
        }
        let v = psi_lancaster(&diag(&[2.0]), 2).unwrap();
        assert!((v - sigma_n::<f64>(1) * 2f64.powf(-0.5) * 0.75).abs() < 1e-14);
        let a = 0.4;
        let v = psi_lancaster(&diag(&[a, a]), 1).unwrap();
        assert!((v - sigma_n::<f64>(2) * (1.0 / a) * (2.0 / a)).abs() < 1e-12);
        assert!(psi_lancaster(&diag(&[a, a]), 4).is_err());
    }

    #[test]
    fn lancaster_is_proportional_to_integral_form() {
        // int exp(-y^T S y)(y^T y)^i dy = pi^{n/2} 2^{-i} |S|^{-1/2} bracket_i
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for n in 1..=4usize {
            for i in 1..=3usize {
                let h = random_orthogonal(&mut rng, n);
                let l = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| 0.2 + rng.random::<f64>()));
                let m = &h * l * h.transpose();
                let s = VarianceMatrix::new((&m + m.transpose()) * 0.5).unwrap();
                let lhs = psi_g_integral(&s, i).unwrap();
                let rhs = psi_lancaster(&s, i).unwrap() * PI.powf(n as f64 / 2.0)
                    / (2f64.powi(i as i32) * sigma_n::<f64>(n));
                assert!((lhs - rhs).abs() < 1e-10 * lhs, "n={n} i={i}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn density_series_examples() {
        // Sigma = 0: only the k = 0 term
        for n in 1..=3usize {
            let zero = VarianceMatrix::new(DMatrix::<f64>::zeros(n, n)).unwrap();
            let t: f64 = 0.7;
            let expect = PI.powf(n as f64 / 2.0) * t.powf(n as f64 / 2.0 - 1.0) / gamma_half::<f64>(n);
            assert!((f_mu_density(&zero, t, 10).unwrap() - expect).abs() < 1e-14);
            assert!((laplace_l(&zero, 1.0, 10).unwrap() - PI.powf(n as f64 / 2.0)).abs() < 1e-14);
        }
        // n = 1: the sphere {y^2 = t} is two points, f(t) = t^{-1/2} exp(-l t)
        let l = 0.6;
        for t in [0.1, 0.5, 1.0, 1.5, 2.0] {
            let v = f_mu_density(&diag(&[l]), t, 60).unwrap();
            let oracle = t.powf(-0.5) * (-l * t).exp();
            assert!((v - oracle).abs() < 1e-6, "t={t}: {v} vs {oracle}");
        }
        let v = laplace_l(&diag(&[0.5]), 1.0, 200).unwrap();
        assert!((v - PI.sqrt() * 1.5f64.powf(-0.5)).abs() < 1e-12);
        assert!(matches!(f_mu_density(&diag(&[1.2]), 1.0, 5), Err(Error::SpectrumTooLarge { .. })));
        assert!(matches!(laplace_l(&diag(&[1.0]), 1.0, 5), Err(Error::SpectrumTooLarge { .. })));
    }

    #[test]
    fn density_series_two_dimensional_quadrature() {
        // f(t) = t^{n/2-1}/2 * int_{S^1} exp(-t u^T S u) du, trapezoid in angle
        let s = diag(&[0.3, 0.2]);
        for t in [0.25, 0.8, 1.6, 3.0] {
            let m = 2000;
            let ang: f64 = (0..m)
                .map(|k| {
                    let th = 2.0 * PI * k as f64 / m as f64;
                    (-t * (0.3 * th.cos().powi(2) + 0.2 * th.sin().powi(2))).exp()
                })
                .sum::<f64>()
                * 2.0
                * PI
                / m as f64;
            let oracle = 0.5 * ang;
            let v = f_mu_density(&s, t, 80).unwrap();
            assert!((v - oracle).abs() < 1e-5, "t={t}: {v} vs {oracle}");
        }
    }

    #[test]
    fn laplace_decays_in_s() {
        let eig = [0.5, 0.2, 0.1];
        let s = diag(&eig);
        let mut prev = f64::INFINITY;
        for k in 0..20 {
            let at = 1.0 + k as f64;
            let v = laplace_l(&s, at, 200).unwrap();
            let closed: f64 = PI.powf(1.5) * eig.iter().map(|l| (l + at).powf(-0.5)).product::<f64>();
            assert!((v - closed).abs() < 1e-12);
            assert!(v < prev && v > 0.0);
            prev = v;
        }
        assert!(laplace_l(&s, 1e6, 10).unwrap() < 1e-8);
    }

    #[test]
    fn psi_m_examples() {
        let zero = diag(&[0.0, 0.0]);
        assert_eq!(psi_m_variance(&zero, &VARIANCE_TRUNCATION).unwrap().value, 1.0);
        let s = diag(&[0.5, 0.25]);
        let v = psi_m_variance(&s, &VARIANCE_TRUNCATION).unwrap().value;
        assert!((v - 0.730_296_743_340_221_4).abs() < 1e-10);
        let p = psi_m_variance(&s.padded(4), &VARIANCE_TRUNCATION).unwrap().value;
        assert!((v - p).abs() < 1e-12);
        assert!(matches!(
            psi_m_variance(&diag(&[1.0]), &VARIANCE_TRUNCATION),
            Err(Error::SpectrumTooLarge { .. })
        ));
    }

    #[test]
    fn mixture_variance_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let n = 3;
            let da = rng.random_range(1..8);
            let db = rng.random_range(1..8);
            let ca: Vec<f64> = (0..da * n).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let cb: Vec<f64> = (0..db * n).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let wa: Vec<f64> = (0..da).map(|_| rng.random::<f64>() + 0.1).collect();
            let wb: Vec<f64> = (0..db).map(|_| rng.random::<f64>() + 0.1).collect();
            let a = PointCloud::euclidean(n, ca, wa).unwrap();
            let b = PointCloud::euclidean(n, cb, wb).unwrap();

            // direct variance of the mixture vs brute-force moments
            let mix = crate::measures::mixture(&a, &b).unwrap();
            let direct = variance(&mix).unwrap();
            let mut brute = DMatrix::zeros(n, n);
            let mut m = DVector::zeros(n);
            for k in 0..mix.len() {
                let x = DVector::from_column_slice(&mix.coords().unwrap()[k * n..(k + 1) * n]);
                brute += &x * x.transpose() * mix.weights()[k];
                m += x * mix.weights()[k];
            }
            brute -= &m * m.transpose();
            assert!((direct.matrix() - brute).amax() < 1e-10);

            // Sigma(mu + mu') = Sigma(mu) + Sigma(mu') - (m m'^T + m' m^T) for the mass-2 sum
            let mut coords = a.coords().unwrap().to_vec();
            coords.extend_from_slice(b.coords().unwrap());
            let mut w = a.weights().to_vec();
            w.extend_from_slice(b.weights());
            let sum = second_moment_variance(n, &coords, &w);
            let ma = DVector::from_vec(a.mean().unwrap());
            let mb = DVector::from_vec(b.mean().unwrap());
            let rhs = variance(&a).unwrap().matrix() + variance(&b).unwrap().matrix()
                - (&ma * mb.transpose() + &mb * ma.transpose());
            assert!((sum - rhs).amax() < 1e-10);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn series_equals_determinant(seed in 0u64..100_000, n in 1usize..7) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_sigma(&mut rng, n, 0.85);
            let v = psi_m_variance(&s, &VARIANCE_TRUNCATION).unwrap().value;
            let eig = s.matrix().clone().symmetric_eigenvalues();
            let oracle: f64 = eig.iter().map(|l| (1.0 + l.max(0.0)).powf(-0.5)).product();
            prop_assert!((v - oracle).abs() < 1e-8);
            prop_assert!((v - psi0(&s, 1.0).unwrap()).abs() < 1e-8);
        }

        #[test]
        fn spectral_functions_are_rotation_invariant(seed in 0u64..100_000, n in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = random_orthogonal(&mut rng, n);
            let l = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| 0.05 + 0.8 * rng.random::<f64>()));
            let a = VarianceMatrix::new(l.clone()).unwrap();
            let m = &h * l * h.transpose();
            let b = VarianceMatrix::new((&m + m.transpose()) * 0.5).unwrap();
            let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1e-300);
            prop_assert!(close(psi_tr(&a), psi_tr(&b)));
            prop_assert!(close(psi0(&a, 0.3).unwrap(), psi0(&b, 0.3).unwrap()));
            prop_assert!(close(
                psi_m_variance(&a, &VARIANCE_TRUNCATION).unwrap().value,
                psi_m_variance(&b, &VARIANCE_TRUNCATION).unwrap().value
            ));
            for i in 1..=3 {
                prop_assert!(close(gamma_i(&a, i).unwrap(), gamma_i(&b, i).unwrap()));
                prop_assert!(close(psi_lancaster(&a, i).unwrap(), psi_lancaster(&b, i).unwrap()));
            }
            prop_assert!(close(f_mu_density(&a, 0.9, 60).unwrap(), f_mu_density(&b, 0.9, 60).unwrap()));
            prop_assert!(close(laplace_l(&a, 1.5, 120).unwrap(), laplace_l(&b, 1.5, 120).unwrap()));
        }

        #[test]
        fn null_eigenvalues_are_ignored(seed in 0u64..100_000, n in 1usize..5, extra in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_sigma(&mut rng, n, 0.9);
            let p = s.padded(extra);
            let rel = |x: f64, y: f64| (x - y).abs() <= 1e-12 * x.abs().max(1e-300);
            prop_assert!(rel(psi_tr(&s), psi_tr(&p)));
            prop_assert!(rel(psi0(&s, 0.5).unwrap(), psi0(&p, 0.5).unwrap()));
            let a = psi_m_variance(&s, &VARIANCE_TRUNCATION).unwrap().value;
            let b = psi_m_variance(&p, &VARIANCE_TRUNCATION).unwrap().value;
            prop_assert!((a - b).abs() <= 1e-12);
            let singular = matches!(gamma_i(&p, 1), Err(Error::Singular { .. }));
            prop_assert!(singular);
            let singular = matches!(psi_lancaster(&p, 2), Err(Error::Singular { .. }));
            prop_assert!(singular);
        }
    }
}
