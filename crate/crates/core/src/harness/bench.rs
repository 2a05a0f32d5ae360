//! Timing of the series kernel against the eigendecomposition route.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::base_kernel::BaseKernel;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};

use crate::kernels::{centered_mixture, series_on_symmetrized};
use crate::measures::PointCloud;
use crate::series::KERNEL_TRUNCATION;

pub const METHOD_SERIES: &str = "series";
pub const METHOD_EIGEN: &str = "eigen";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    /// Size of the mixture (both clouds together).
    pub d: usize,
    pub method: &'static str,
    pub mean_seconds: f64,
    pub std_seconds: f64,
    pub median_seconds: f64,
}

/// Rows plus the largest disagreement between the two methods.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub max_abs_diff: f64,
}

impl BenchReport {
    /// Median series time over median eigen time at each size.
    pub fn ratios(&self) -> Vec<(usize, f64)> {
        self.rows
            .chunks(2)
            .map(|p| (p[0].d, p[0].median_seconds / p[1].median_seconds))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["d", "method", "mean_seconds", "std_seconds"])?;
        for r in &self.rows {
            out.write_record([
                r.d.to_string(),
                r.method.to_string(),
                format!("{:e}", r.mean_seconds),
                format!("{:e}", r.std_seconds),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn stats(mut t: Vec<f64>) -> (f64, f64, f64) {
    let n = t.len() as f64;
    let mean = t.iter().sum::<f64>() / n;
    let std = (t.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    t.sort_by(f64::total_cmp);
    let mid = t.len() / 2;
    let median = if t.len() % 2 == 0 { (t[mid - 1] + t[mid]) / 2.0 } else { t[mid] };
    (mean, std, median)
}

/// `det(I + S / eta)^{-1/2}` through a full eigendecomposition (values and
/// vectors) of `S`.
pub fn igv_full_eigen(s: &DMatrix<f64>, eta: f64) -> f64 {
    let eig = SymmetricEigen::new(s.clone());
    eig.eigenvalues.iter().map(|&l| (l.max(0.0) / eta + 1.0).sqrt().recip()).product()
}

/// For each mixture size `d`, draws `trials` pairs of uniform clouds of
/// `d / 2` points in the unit square (Gaussian base kernel of width
/// `sigma`) and times `k_M` by the truncated series against `k_0` by a
/// full symmetric eigendecomposition, with `delta = 1 / (2 rho)` and
/// `eta = 1 / delta` so the two agree.
pub fn bench_series_vs_eigen(sizes: &[usize], trials: usize, sigma: f64, seed: u64) -> Result<BenchReport> {
    if let Some(&d) = sizes.iter().find(|&&d| d < 8) {
        return Err(Error::InvalidParameter(format!("sizes must be at least 8 (got {d})")));
    }
    if trials == 0 {
        return Err(Error::InvalidParameter("need at least one trial".into()));
    }
    let base = BaseKernel::gaussian(sigma)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(2 * sizes.len());
    let mut max_diff = 0.0f64;
    for &d in sizes {
        let half = d / 2;
        let mut series_t = Vec::with_capacity(trials);
        let mut eigen_t = Vec::with_capacity(trials);
        for _ in 0..trials {
            let a = PointCloud::uniform(2, (0..2 * half).map(|_| rng.random()).collect())?;
            let b = PointCloud::uniform(2, (0..2 * (d - half)).map(|_| rng.random()).collect())?;
            let c = centered_mixture(&a, &b, &base)?;
            let s = c.symmetrized();
            let rho = c.spectrum()?.first().copied().unwrap_or(0.0);
            if rho <= 0.0 {
                continue;
            }
            let delta = 1.0 / (2.0 * rho);

            let t0 = Instant::now();
            let series = series_on_symmetrized::<f64>(s, delta, &KERNEL_TRUNCATION)?;
            series_t.push(t0.elapsed().as_secs_f64());

            let t0 = Instant::now();
            let eigen = igv_full_eigen(s, 1.0 / delta);
            eigen_t.push(t0.elapsed().as_secs_f64());

            max_diff = max_diff.max((series.value - eigen).abs());
        }
        for (method, t) in [(METHOD_SERIES, series_t), (METHOD_EIGEN, eigen_t)] {
            let (mean_seconds, std_seconds, median_seconds) = stats(t);
            rows.push(BenchRow { d, method, mean_seconds, std_seconds, median_seconds });
        }
    }
    Ok(BenchReport { rows, max_abs_diff: max_diff })
}
