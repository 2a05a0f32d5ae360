//! Stratified, repeated k-fold cross-validation on a precomputed kernel.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base_kernel::BaseKernel;
use crate::error::{Error, Result};
use crate::kernels::{kernel_matrices, KernelConfig, KernelKind};
use crate::measures::PointCloud;

use super::sampling::LabeledCloud;
use super::svm::train_svm_ovr;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    pub repeats: usize,
    /// SVM regularization.
    pub c: f64,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig { folds: 3, repeats: 5, c: 10.0, seed: 0 }
    }
}

/// Misclassification rates of one kernel, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub kernel: Option<KernelConfig>,
    pub cv: CvConfig,
    /// `fold_errors[r][f]`: error of fold `f` in repeat `r`.
    pub fold_errors: Vec<Vec<f64>>,
    pub mean: f64,
    pub std: f64,
    pub kernel_seconds: f64,
    pub seconds: f64,
    /// Series kernel only: number of terms used, per pair.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terms_histogram: Option<BTreeMap<usize, usize>>,
}

impl CvReport {
    pub fn rates(&self) -> impl Iterator<Item = f64> + '_ {
        self.fold_errors.iter().flatten().copied()
    }
}

/// Fold index of every example. Each class is shuffled and dealt round
/// robin, so every fold holds `floor` or `ceil` of `n_class / folds`.
pub fn stratified_folds(labels: &[u32], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::InvalidParameter("need at least 2 folds".into()));
    }
    let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; labels.len()];
    let mut offset = 0;
    for (class, mut members) in by_class {
        if members.len() < folds {
            return Err(Error::InvalidParameter(format!(
                "class {class} has {} examples, fewer than {folds} folds",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for (k, &i) in members.iter().enumerate() {
            fold[i] = (offset + k) % folds;
        }
        offset += members.len();
    }
    Ok(fold)
}

fn repeat_seed(seed: u64, r: usize) -> u64 {
    seed.wrapping_add((r as u64).wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Cross-validates an SVM on the full kernel matrix `k`, slicing it per fold.
pub fn cross_validate_matrix(k: &DMatrix<f64>, labels: &[u32], cv: &CvConfig) -> Result<CvReport> {
    let start = Instant::now();
    if k.nrows() != labels.len() || !k.is_square() {
        return Err(Error::InvalidParameter("kernel matrix and labels disagree in size".into()));
    }
    if cv.repeats == 0 {
        return Err(Error::InvalidParameter("need at least one repeat".into()));
    }
    let assignments = (0..cv.repeats)
        .map(|r| stratified_folds(labels, cv.folds, repeat_seed(cv.seed, r)))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> =
        (0..cv.repeats).flat_map(|r| (0..cv.folds).map(move |f| (r, f))).collect();
    let errors = jobs
        .par_iter()
        .map(|&(r, f)| {
            let fold = &assignments[r];
            let train: Vec<usize> = (0..labels.len()).filter(|&i| fold[i] != f).collect();
            let test: Vec<usize> = (0..labels.len()).filter(|&i| fold[i] == f).collect();
            let k_train = k.select_rows(&train).select_columns(&train);
            let y_train: Vec<u32> = train.iter().map(|&i| labels[i]).collect();
            let model = train_svm_ovr(&k_train, &y_train, cv.c)?;
            let predicted = model.predict(&k.select_rows(&test).select_columns(&train));
            let wrong = test.iter().zip(&predicted).filter(|(&i, &p)| labels[i] != p).count();
            Ok(100.0 * wrong as f64 / test.len() as f64)
        })
        .collect::<Vec<Result<f64>>>()
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    let fold_errors: Vec<Vec<f64>> = errors.chunks(cv.folds).map(<[f64]>::to_vec).collect();
    let n = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / n;
    let std = if errors.len() > 1 {
        (errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(CvReport {
        kernel: None,
        cv: *cv,
        fold_errors,
        mean,
        std,
        kernel_seconds: 0.0,
        seconds: start.elapsed().as_secs_f64(),
        terms_histogram: None,
    })
}

/// Computes the kernel matrix of `dataset` and cross-validates on it.
pub fn cross_validate(dataset: &[LabeledCloud], config: &KernelConfig, cv: &CvConfig) -> Result<CvReport> {
    let mut out = cross_validate_many(dataset, &config.base, &[config.kind], config.normalize, cv)?;
    Ok(out.remove(0))
}

/// Cross-validates several kernels sharing the same Gram matrices. Every
/// kernel sees the same fold assignments.
pub fn cross_validate_many(
    dataset: &[LabeledCloud],
    base: &BaseKernel,
    kinds: &[KernelKind],
    normalize: bool,
    cv: &CvConfig,
) -> Result<Vec<CvReport>> {
    let start = Instant::now();
    let clouds: Vec<PointCloud<f64>> = dataset.iter().map(|d| d.cloud.clone()).collect();
    let labels: Vec<u32> = dataset.iter().map(|d| d.label).collect();
    let matrices = kernel_matrices(&clouds, base, kinds, normalize)?;
    let kernel_seconds = start.elapsed().as_secs_f64();
    matrices
        .into_iter()
        .map(|km| {
            let mut report = cross_validate_matrix(&km.values, &labels, cv)?;
            report.kernel = Some(KernelConfig { kind: km.kind, normalize, base: *base });
            report.kernel_seconds = kernel_seconds;
            report.seconds += kernel_seconds;
            report.terms_histogram = km.terms.map(|t| histogram(&t));
            Ok(report)
        })
        .collect()
}

pub fn histogram(values: &[usize]) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for &v in values {
        *h.entry(v).or_insert(0) += 1;
    }
    h
}

/// Text table with one row per sample size and one column per kernel,
/// entries `mean (std)` in percent.
pub fn render_table(rows: &[(usize, Vec<CvReport>)]) -> String {
    let headers: Vec<String> = rows
        .first()
        .map(|(_, r)| {
            r.iter()
                .map(|x| x.kernel.map_or_else(|| "kernel".to_string(), |k| k.kind.to_string()))
                .collect()
        })
        .unwrap_or_default();
    let width = headers.iter().map(String::len).max().unwrap_or(6).max(16);
    let mut out = String::new();
    let _ = write!(out, "{:>8}", "samples");
    for h in &headers {
        let _ = write!(out, "  {h:>width$}");
    }
    out.push('\n');
    for (samples, reports) in rows {
        let _ = write!(out, "{samples:>8}");
        for r in reports {
            let cell = format!("{:.2} ({:.2})", r.mean, r.std);
            let _ = write!(out, "  {cell:>width$}");
        }
        out.push('\n');
    }
    out
}
