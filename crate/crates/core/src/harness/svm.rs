//! Soft-margin SVM on a precomputed kernel, trained by SMO with
//! second-order working-set selection; one-vs-rest for several classes.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stopping tolerance on the maximal KKT violation.
pub const SMO_EPS: f64 = 1e-3;
const TAU: f64 = 1e-12;

/// Dual solution of a two-class problem with labels `+1 / -1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvm {
    pub alpha: Vec<f64>,
    /// `alpha_i * y_i`
    pub coef: Vec<f64>,
    pub rho: f64,
    pub updates: usize,
}

impl BinarySvm {
    /// `sum_i coef_i k(x_i, x) - rho` for one row of test-vs-train kernel values.
    pub fn decision(&self, k_row: impl IntoIterator<Item = f64>) -> f64 {
        k_row.into_iter().zip(&self.coef).map(|(k, c)| k * c).sum::<f64>() - self.rho
    }
}

fn in_up(y: f64, a: f64, c: f64) -> bool {
    (y > 0.0 && a < c) || (y < 0.0 && a > 0.0)
}

fn in_low(y: f64, a: f64, c: f64) -> bool {
    (y > 0.0 && a > 0.0) || (y < 0.0 && a < c)
}

/// Gap `max_{I_up} -y G - min_{I_low} -y G` of the dual; zero at an exact
/// optimum. Computed from scratch, independently of the solver state.
pub fn max_violation(k: &DMatrix<f64>, y: &[f64], alpha: &[f64], c: f64) -> f64 {
    let n = y.len();
    let grad: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| y[i] * y[j] * k[(i, j)] * alpha[j]).sum::<f64>() - 1.0)
        .collect();
    let mut up = f64::NEG_INFINITY;
    let mut low = f64::INFINITY;
    for t in 0..n {
        let v = -y[t] * grad[t];
        if in_up(y[t], alpha[t], c) {
            up = up.max(v);
        }
        if in_low(y[t], alpha[t], c) {
            low = low.min(v);
        }
    }
    if up.is_finite() && low.is_finite() {
        (up - low).max(0.0)
    } else {
        0.0
    }
}

/// Trains a binary SVM. Fails with [`Error::SolverDivergence`] after
/// `10 * m^2` pair updates.
pub fn train_binary(k: &DMatrix<f64>, y: &[f64], c: f64, eps: f64) -> Result<BinarySvm> {
    let n = y.len();
    if k.nrows() != n || k.ncols() != n {
        return Err(Error::InvalidParameter(format!(
            "kernel is {}x{}, labels have length {n}",
            k.nrows(),
            k.ncols()
        )));
    }
    if !(c > 0.0) || !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("need C > 0 and eps > 0 (got {c}, {eps})")));
    }
    let cap = 10 * n * n;
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut updates = 0;
    loop {
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            if in_up(y[t], alpha[t], c) {
                let v = -y[t] * grad[t];
                if v >= gmax {
                    gmax = v;
                    i = t;
                }
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        if i != usize::MAX {
            for t in 0..n {
                if !in_low(y[t], alpha[t], c) {
                    continue;
                }
                let v = y[t] * grad[t];
                gmax2 = gmax2.max(v);
                let b = gmax + v;
                if b > 0.0 {
                    let mut a = k[(i, i)] + k[(t, t)] - 2.0 * k[(i, t)];
                    if a <= 0.0 {
                        a = TAU;
                    }
                    let obj = -(b * b) / a;
                    if obj <= best {
                        best = obj;
                        j = t;
                    }
                }
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax + gmax2 < eps {
            break;
        }
        if updates >= cap {
            return Err(Error::SolverDivergence { iterations: updates });
        }
        updates += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let quad = {
            let q = k[(i, i)] + k[(j, j)] - 2.0 * k[(i, j)];
            if q <= 0.0 {
                TAU
            } else {
                q
            }
        };
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * k[(t, i)] * di + y[j] * k[(t, j)] * dj);
        }
    }

    let rho = bias(y, &alpha, &grad, c);
    let coef = alpha.iter().zip(y).map(|(a, yy)| a * yy).collect();
    Ok(BinarySvm { alpha, coef, rho, updates })
}

fn bias(y: &[f64], alpha: &[f64], grad: &[f64], c: f64) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let (mut free, mut sum) = (0usize, 0.0);
    for t in 0..y.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum += yg;
        }
    }
    if free > 0 {
        sum / free as f64
    } else if ub.is_finite() && lb.is_finite() {
        (ub + lb) / 2.0
    } else if ub.is_finite() {
        ub
    } else if lb.is_finite() {
        lb
    } else {
        0.0
    }
}

/// One-vs-rest multiclass model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvrModel {
    pub classes: Vec<u32>,
    /// One binary machine per class; empty when only one class was seen.
    pub machines: Vec<BinarySvm>,
}

impl OvrModel {
    /// Predicted class for each row of a test-vs-train kernel block.
    pub fn predict(&self, k_test_train: &DMatrix<f64>) -> Vec<u32> {
        (0..k_test_train.nrows())
            .map(|r| {
                if self.machines.is_empty() {
                    return self.classes[0];
                }
                let mut best = (f64::NEG_INFINITY, 0);
                for (c, m) in self.machines.iter().enumerate() {
                    let v = m.decision(k_test_train.row(r).iter().copied());
                    if v > best.0 {
                        best = (v, c);
                    }
                }
                self.classes[best.1]
            })
            .collect()
    }
}

/// Trains one binary SVM per class on a precomputed kernel matrix.
pub fn train_svm_ovr(k: &DMatrix<f64>, labels: &[u32], c: f64) -> Result<OvrModel> {
    train_svm_ovr_with(k, labels, c, SMO_EPS)
}

pub fn train_svm_ovr_with(k: &DMatrix<f64>, labels: &[u32], c: f64, eps: f64) -> Result<OvrModel> {
    if labels.is_empty() {
        return Err(Error::InvalidParameter("no training examples".into()));
    }
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() == 1 {
        return Ok(OvrModel { classes, machines: Vec::new() });
    }
    let machines = classes
        .iter()
        .map(|&cl| {
            let y: Vec<f64> = labels.iter().map(|&l| if l == cl { 1.0 } else { -1.0 }).collect();
            train_binary(k, &y, c, eps)
        })
        .collect::<Result<_>>()?;
    Ok(OvrModel { classes, machines })
}
