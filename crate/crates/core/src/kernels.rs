//! Kernels between point clouds: `k_tr`, `k_0` and the series kernel `k_M`,
//! all computed from the centered Gram matrix of the mixture.

use std::fmt;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base_kernel::{BaseKernel, PointKernel};
use crate::error::{Error, Result};
use crate::gram::{
    baby_steps_for, center, delta_bound, joint_gram, joint_gram_with_blocks, self_gram,
    spectral_radius, spectrum_of, CenteredGram, PowerTraces, POWER_MAX_ITER, POWER_REL_TOL,
};
use crate::measures::{check_compatible, check_normalized, PointCloud};
use crate::scalar::Real;
use crate::series::{alternating_sum, SeriesSum, Truncation, KERNEL_TRUNCATION};

/// Safety factor applied to the spectral-radius estimate before accepting `delta`.
pub const RHO_MARGIN: f64 = 1.01;
/// Fraction of the admissible bound returned by [`choose_delta`].
pub const DELTA_SAFETY: f64 = 0.99;

/// Which cloud kernel to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum KernelKind {
    /// `exp(-tr(K~) / t)`
    Tr { t: f64 },
    /// `det(K~ / eta + I)^{-1/2}`
    Igv { eta: f64 },
    /// `sum_k (-1)^k c_k` with `d_k = tr((delta K~)^k) / 2`
    Series {
        delta: f64,
        #[serde(default = "default_n_max")]
        n_max: usize,
        #[serde(default = "default_eps")]
        eps: f64,
    },
}

fn default_n_max() -> usize {
    KERNEL_TRUNCATION.n_max
}

fn default_eps() -> f64 {
    KERNEL_TRUNCATION.eps
}

impl KernelKind {
    pub fn tr(t: f64) -> Self {
        KernelKind::Tr { t }
    }

    pub fn igv(eta: f64) -> Self {
        KernelKind::Igv { eta }
    }

    /// Series kernel with the default truncation rule.
    pub fn series(delta: f64) -> Self {
        KernelKind::Series { delta, n_max: KERNEL_TRUNCATION.n_max, eps: KERNEL_TRUNCATION.eps }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
            }
        };
        match *self {
            KernelKind::Tr { t } => positive("t", t),
            KernelKind::Igv { eta } => positive("eta", eta),
            KernelKind::Series { delta, n_max, eps } => {
                positive("delta", delta)?;
                positive("eps", eps)?;
                if n_max == 0 {
                    return Err(Error::InvalidParameter("n_max must be at least 1".into()));
                }
                Ok(())
            }
        }
    }

    fn truncation(&self) -> Option<Truncation> {
        match *self {
            KernelKind::Series { n_max, eps, .. } => Some(Truncation::new(eps, n_max)),
            _ => None,
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelKind::Tr { t } => write!(f, "k_tr(t={t})"),
            KernelKind::Igv { eta } => write!(f, "k_0(eta={eta})"),
            KernelKind::Series { delta, .. } => write!(f, "k_M(delta={delta})"),
        }
    }
}

/// A cloud kernel together with the base kernel it is built on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub kind: KernelKind,
    #[serde(default)]
    pub normalize: bool,
    pub base: BaseKernel,
}

impl KernelConfig {
    pub fn new(kind: KernelKind, base: BaseKernel) -> Self {
        KernelConfig { kind, normalize: false, base }
    }

    pub fn normalized(mut self, yes: bool) -> Self {
        self.normalize = yes;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.kind.validate()?;
        self.base.validate()
    }
}

/// Value of one kernel evaluation; `terms` is set for the series kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelValue<T> {
    pub value: T,
    pub terms: Option<usize>,
}

/// How `det(I + S / eta)` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DetMethod {
    /// Full spectrum, rejecting matrices that are not PSD.
    Spectrum,
    /// Cholesky factor of `I + S / eta`; only used when the Gram matrix
    /// comes from a kernel known to be positive definite.
    Cholesky,
}

/// Centered Gram matrix of the mixture of two unit-mass clouds.
pub fn centered_mixture<T: Real, K: PointKernel<T> + ?Sized>(
    a: &PointCloud<T>,
    b: &PointCloud<T>,
    kernel: &K,
) -> Result<CenteredGram<T>> {
    let k = joint_gram(a, b, kernel)?;
    center(&k, &mixture_weights(a, b))
}

fn mixture_weights<T: Real>(a: &PointCloud<T>, b: &PointCloud<T>) -> Vec<T> {
    let half = T::lit(0.5);
    a.weights().iter().chain(b.weights()).map(|&w| w * half).collect()
}

fn wrong_kind(expected: &str, kind: &KernelKind) -> Error {
    Error::InvalidParameter(format!("expected a {expected} configuration, got {kind}"))
}

/// `k_tr(a, b) = exp(-tr(K~) / t)`.
pub fn k_tr<T: Real>(a: &PointCloud<T>, b: &PointCloud<T>, config: &KernelConfig) -> Result<T> {
    match config.kind {
        KernelKind::Tr { .. } => Ok(evaluate(a, b, config)?.value),
        ref k => Err(wrong_kind("trace", k)),
    }
}

/// `k_0(a, b) = det(K~ / eta + I)^{-1/2}`.
pub fn k_0<T: Real>(a: &PointCloud<T>, b: &PointCloud<T>, config: &KernelConfig) -> Result<T> {
    match config.kind {
        KernelKind::Igv { .. } => Ok(evaluate(a, b, config)?.value),
        ref k => Err(wrong_kind("inverse generalized variance", k)),
    }
}

/// Series kernel `k_M(a, b)`.
pub fn k_m<T: Real>(a: &PointCloud<T>, b: &PointCloud<T>, config: &KernelConfig) -> Result<T> {
    Ok(k_m_detailed(a, b, config)?.value)
}

/// Series kernel with the number of terms used.
pub fn k_m_detailed<T: Real>(
    a: &PointCloud<T>,
    b: &PointCloud<T>,
    config: &KernelConfig,
) -> Result<SeriesSum<T>> {
    match config.kind {
        KernelKind::Series { .. } => {
            let v = evaluate(a, b, config)?;
            Ok(SeriesSum { value: v.value, terms: v.terms.unwrap_or(0) })
        }
        ref k => Err(wrong_kind("series", k)),
    }
}

/// Any of the three kernels between two clouds. Normalization does not
/// apply to a single value.
pub fn evaluate<T: Real>(
    a: &PointCloud<T>,
    b: &PointCloud<T>,
    config: &KernelConfig,
) -> Result<KernelValue<T>> {
    config.validate()?;
    let c = centered_mixture(a, b, &config.base)?;
    evaluate_centered(&c, &config.kind)
}

/// Evaluates a kernel on an already centered Gram matrix.
pub fn evaluate_centered<T: Real>(c: &CenteredGram<T>, kind: &KernelKind) -> Result<KernelValue<T>> {
    kind.validate()?;
    eval_kind(c, kind, DetMethod::Spectrum)
}

fn eval_kind<T: Real>(c: &CenteredGram<T>, kind: &KernelKind, det: DetMethod) -> Result<KernelValue<T>> {
    match *kind {
        KernelKind::Tr { t } => Ok(KernelValue { value: tr_value(c, T::lit(t)), terms: None }),
        KernelKind::Igv { eta } => {
            Ok(KernelValue { value: igv_value(c.symmetrized(), T::lit(eta), det)?, terms: None })
        }
        KernelKind::Series { delta, .. } => {
            let rule = kind.truncation().expect("series kind");
            let s = series_value(c.symmetrized(), T::lit(delta), &rule)?;
            Ok(KernelValue { value: s.value, terms: Some(s.terms) })
        }
    }
}

fn tr_value<T: Real>(c: &CenteredGram<T>, t: T) -> T {
    (-c.trace() / t).exp()
}

fn igv_value<T: Real>(s: &DMatrix<T>, eta: T, det: DetMethod) -> Result<T> {
    if det == DetMethod::Cholesky {
        let n = s.nrows();
        let m = s / eta + DMatrix::identity(n, n);
        if let Some(chol) = m.cholesky() {
            // det(M)^{-1/2} = 1 / prod diag(L)
            let l = chol.l_dirty();
            return Ok((0..n).map(|i| l[(i, i)].recip()).product());
        }
    }
    let eig = spectrum_of(s)?;
    Ok(eig.into_iter().map(|l| (l / eta + T::one()).sqrt().recip()).product())
}

/// Checks `delta * rho(S) < 1` with the safety margin, cheapest test first.
///
/// `S` is PSD, so `rho <= tr(S)`, and for the already computed powers
/// `rho(delta S) <= tr((delta S)^{2m})^{1/(2m)}`. Only when both bounds are
/// inconclusive is `rho` estimated by power iteration.
fn check_delta<T: Real>(s: &DMatrix<T>, delta: T, powers: &PowerTraces<T>) -> Result<()> {
    let margin = T::lit(RHO_MARGIN);
    if delta * s.trace() * margin < T::one() {
        return Ok(());
    }
    if powers.radius_upper_bound() * margin < T::one() {
        return Ok(());
    }
    let rho = spectral_radius(s, POWER_MAX_ITER, T::tol(POWER_REL_TOL));
    let product = delta * rho;
    if product * margin >= T::one() {
        return Err(Error::DeltaTooLarge {
            delta: delta.as_f64(),
            rho: rho.as_f64(),
            product: product.as_f64(),
        });
    }
    Ok(())
}

fn series_value<T: Real>(s: &DMatrix<T>, delta: T, rule: &Truncation) -> Result<SeriesSum<T>> {
    rule.validate()?;
    let mut powers = PowerTraces::new(s * delta, baby_steps_for(rule.n_max));
    check_delta(s, delta, &powers)?;
    let half = T::lit(0.5);
    alternating_sum(|k| powers.trace(k) * half, rule)
}

/// Series kernel on a symmetrized centered Gram matrix `S`.
pub fn series_on_symmetrized<T: Real>(
    s: &DMatrix<T>,
    delta: T,
    rule: &Truncation,
) -> Result<SeriesSum<T>> {
    series_value(s, delta, rule)
}

/// `det(I + S / eta)^{-1/2}` from the spectrum of `S`.
pub fn igv_on_symmetrized<T: Real>(s: &DMatrix<T>, eta: T) -> Result<T> {
    igv_value(s, eta, DetMethod::Spectrum)
}

/// Kernel matrix with optional per-pair series term counts.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix<T: Real> {
    pub kind: KernelKind,
    pub values: DMatrix<T>,
    /// For the series kernel: terms used by each pair `i <= j`, row-major.
    pub terms: Option<Vec<usize>>,
}

/// Kernel matrix of a set of clouds.
pub fn kernel_matrix<T: Real>(clouds: &[PointCloud<T>], config: &KernelConfig) -> Result<DMatrix<T>> {
    config.base.validate()?;
    let mut out = kernel_matrices(clouds, &config.base, &[config.kind], config.normalize)?;
    Ok(out.remove(0).values)
}

/// Several kernel matrices at once, sharing the Gram matrices between them.
pub fn kernel_matrices<T: Real>(
    clouds: &[PointCloud<T>],
    base: &BaseKernel,
    kinds: &[KernelKind],
    normalize: bool,
) -> Result<Vec<KernelMatrix<T>>> {
    base.validate()?;
    assemble(clouds, base, kinds, normalize, DetMethod::Cholesky)
}

/// Kernel matrices under an arbitrary point kernel.
pub fn kernel_matrices_with<T: Real, K: PointKernel<T> + ?Sized>(
    clouds: &[PointCloud<T>],
    kernel: &K,
    kinds: &[KernelKind],
    normalize: bool,
) -> Result<Vec<KernelMatrix<T>>> {
    assemble(clouds, kernel, kinds, normalize, DetMethod::Spectrum)
}

fn assemble<T: Real, K: PointKernel<T> + ?Sized>(
    clouds: &[PointCloud<T>],
    kernel: &K,
    kinds: &[KernelKind],
    normalize: bool,
    det: DetMethod,
) -> Result<Vec<KernelMatrix<T>>> {
    for k in kinds {
        k.validate()?;
    }
    for (i, c) in clouds.iter().enumerate() {
        check_normalized(c).map_err(|e| pair_error(i, i, e))?;
        if let Some(first) = clouds.first() {
            check_compatible(first, c).map_err(|e| pair_error(0, i, e))?;
        }
    }
    let m = clouds.len();
    let blocks: Vec<Result<DMatrix<T>>> = clouds.par_iter().map(|c| self_gram(c, kernel)).collect();
    let mut ready = Vec::with_capacity(m);
    for (i, b) in blocks.into_iter().enumerate() {
        ready.push(b.map_err(|e| pair_error(i, i, e))?);
    }

    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i..m).map(move |j| (i, j))).collect();
    // One preallocated slot per (pair, kind): small per-pair allocations
    // interleaved with the Gram temporaries fragment the heap badly.
    let nk = kinds.len();
    let mut slots = vec![KernelValue { value: T::zero(), terms: None }; pairs.len() * nk];
    let status: Vec<Result<()>> = slots
        .par_chunks_mut(nk.max(1))
        .zip(pairs.par_iter())
        .map(|(slot, &(i, j))| {
            let (a, b) = (&clouds[i], &clouds[j]);
            let k = joint_gram_with_blocks(a, b, &ready[i], &ready[j], kernel)?;
            let c = center(&k, &mixture_weights(a, b))?;
            for (out, kind) in slot.iter_mut().zip(kinds) {
                *out = eval_kind(&c, kind, det)?;
            }
            Ok(())
        })
        .collect();

    let mut out: Vec<KernelMatrix<T>> = kinds
        .iter()
        .map(|&kind| KernelMatrix {
            kind,
            values: DMatrix::zeros(m, m),
            terms: matches!(kind, KernelKind::Series { .. }).then(|| Vec::with_capacity(pairs.len())),
        })
        .collect();
    for ((&(i, j), r), values) in pairs.iter().zip(status).zip(slots.chunks(nk.max(1))) {
        r.map_err(|e| pair_error(i, j, e))?;
        for (km, v) in out.iter_mut().zip(values) {
            km.values[(i, j)] = v.value;
            km.values[(j, i)] = v.value;
            if let (Some(t), Some(n)) = (km.terms.as_mut(), v.terms) {
                t.push(n);
            }
        }
    }
    if normalize {
        for km in &mut out {
            normalize_matrix(&mut km.values)?;
        }
    }
    Ok(out)
}

fn pair_error(i: usize, j: usize, source: Error) -> Error {
    match source {
        e @ Error::Pair { .. } => e,
        e => Error::Pair { i, j, source: Box::new(e) },
    }
}

/// Divides entry `(i, j)` by `sqrt(K_ii K_jj)` so the diagonal becomes one.
pub fn normalize_matrix<T: Real>(k: &mut DMatrix<T>) -> Result<()> {
    let diag: Vec<T> = k.diagonal().iter().copied().collect();
    if let Some(i) = diag.iter().position(|&d| !(d > T::zero())) {
        return Err(Error::InvalidParameter(format!(
            "cannot normalize: diagonal entry {i} is {}",
            diag[i]
        )));
    }
    let roots: Vec<T> = diag.iter().map(|d| d.sqrt()).collect();
    let m = k.nrows();
    for j in 0..m {
        for i in 0..m {
            k[(i, j)] /= roots[i] * roots[j];
        }
        k[(j, j)] = T::one();
    }
    Ok(())
}

/// A single `delta` admissible for every mixture of the given clouds:
/// `0.99 * delta_bound(2 * max size, max weight / 2)`.
pub fn choose_delta<T: Real>(clouds: &[PointCloud<T>], base: &BaseKernel) -> Result<f64> {
    choose_delta_with(clouds, base)
}

pub fn choose_delta_with<T: Real, K: PointKernel<T> + ?Sized>(
    clouds: &[PointCloud<T>],
    kernel: &K,
) -> Result<f64> {
    if !kernel.is_bounded_by_one() {
        return Err(Error::UnboundedKernel);
    }
    if clouds.is_empty() {
        return Err(Error::InvalidParameter("no clouds given".into()));
    }
    let mut omega = 0.0f64;
    let mut size = 0usize;
    for c in clouds {
        check_normalized(c)?;
        omega = omega.max(c.max_weight().as_f64() * 0.5);
        size = size.max(c.len());
    }
    Ok(DELTA_SAFETY * delta_bound(2 * size, omega))
}
