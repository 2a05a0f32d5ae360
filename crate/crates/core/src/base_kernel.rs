//! The kernel on the underlying point space, evaluated between pairs of
//! support points.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{PointCloud, PointRef, Points};
use crate::scalar::Real;

/// Anything that can evaluate a positive definite kernel between two
/// support points.
pub trait PointKernel<T: Real>: Sync {
    fn eval(&self, x: PointRef<'_, T>, y: PointRef<'_, T>) -> Result<T>;

    /// Whether `sup_x |k(x, x)| <= 1` holds on the whole point space.
    fn is_bounded_by_one(&self) -> bool;

    /// Writes `k(a_i, b_j)` into `out` starting at `(row0, col0)`.
    fn fill_block(
        &self,
        a: &PointCloud<T>,
        b: &PointCloud<T>,
        out: &mut DMatrix<T>,
        row0: usize,
        col0: usize,
    ) -> Result<()> {
        for i in 0..a.len() {
            for j in 0..b.len() {
                out[(row0 + i, col0 + j)] = self.eval(a.point(i), b.point(j))?;
            }
        }
        Ok(())
    }
}

/// Built-in base kernels on `R^n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BaseKernel {
    /// `exp(-|x - y|^2 / (2 sigma^2))`
    Gaussian { sigma: f64 },
    /// `x . y`
    Linear,
    /// `(x . y + offset)^degree`
    Polynomial { degree: u32, offset: f64 },
}

impl BaseKernel {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        let k = BaseKernel::Gaussian { sigma };
        k.validate()?;
        Ok(k)
    }

    pub fn polynomial(degree: u32, offset: f64) -> Result<Self> {
        let k = BaseKernel::Polynomial { degree, offset };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            BaseKernel::Gaussian { sigma } if !(sigma > 0.0 && sigma.is_finite()) => Err(
                Error::InvalidParameter(format!("gaussian width must be positive, got {sigma}")),
            ),
            BaseKernel::Polynomial { degree: 0, .. } => {
                Err(Error::InvalidParameter("polynomial degree must be at least 1".into()))
            }
            BaseKernel::Polynomial { offset, .. } if !(offset >= 0.0 && offset.is_finite()) => Err(
                Error::InvalidParameter(format!("polynomial offset must be >= 0, got {offset}")),
            ),
            _ => Ok(()),
        }
    }

    /// Evaluates the kernel on two coordinate vectors.
    pub fn evaluate<T: Real>(&self, x: &[T], y: &[T]) -> Result<T> {
        if x.len() != y.len() {
            return Err(Error::Mode(format!(
                "points of dimension {} and {}",
                x.len(),
                y.len()
            )));
        }
        Ok(match *self {
            BaseKernel::Gaussian { sigma } => {
                let s = T::lit(sigma);
                (-sq_dist(x, y) / (s * s * T::lit(2.0))).exp()
            }
            BaseKernel::Linear => dot(x, y),
            BaseKernel::Polynomial { degree, offset } => {
                (dot(x, y) + T::lit(offset)).powi(degree as i32)
            }
        })
    }

    /// Fills `out[(i, j)] = k(a_i, b_j)` for row-major point blocks.
    pub(crate) fn fill_coords<T: Real>(
        &self,
        dim: usize,
        a: &[T],
        b: &[T],
        out: &mut DMatrix<T>,
        row0: usize,
        col0: usize,
    ) {
        let coef = match *self {
            BaseKernel::Gaussian { sigma } => {
                let s = T::lit(sigma);
                -T::one() / (s * s * T::lit(2.0))
            }
            _ => T::zero(),
        };
        for (i, x) in a.chunks_exact(dim).enumerate() {
            for (j, y) in b.chunks_exact(dim).enumerate() {
                let v = match *self {
                    BaseKernel::Gaussian { .. } => (coef * sq_dist(x, y)).exp(),
                    BaseKernel::Linear => dot(x, y),
                    BaseKernel::Polynomial { degree, offset } => {
                        (dot(x, y) + T::lit(offset)).powi(degree as i32)
                    }
                };
                out[(row0 + i, col0 + j)] = v;
            }
        }
    }
}

impl<T: Real> PointKernel<T> for BaseKernel {
    fn eval(&self, x: PointRef<'_, T>, y: PointRef<'_, T>) -> Result<T> {
        match (x, y) {
            (PointRef::Vector(x), PointRef::Vector(y)) => self.evaluate(x, y),
            _ => Err(Error::Mode(format!("{self} needs Euclidean points"))),
        }
    }

    fn is_bounded_by_one(&self) -> bool {
        matches!(self, BaseKernel::Gaussian { .. })
    }

    fn fill_block(
        &self,
        a: &PointCloud<T>,
        b: &PointCloud<T>,
        out: &mut DMatrix<T>,
        row0: usize,
        col0: usize,
    ) -> Result<()> {
        match (a.points(), b.points()) {
            (
                Points::Euclidean { dim: da, coords: ca },
                Points::Euclidean { dim: db, coords: cb },
            ) if da == db => {
                self.fill_coords(*da, ca, cb, out, row0, col0);
                Ok(())
            }
            (Points::Euclidean { dim: da, .. }, Points::Euclidean { dim: db, .. }) => {
                Err(Error::Mode(format!("points of dimension {da} and {db}")))
            }
            _ => Err(Error::Mode(format!("{self} needs Euclidean points"))),
        }
    }
}

/// Free-function form of [`PointKernel::is_bounded_by_one`] for built-in kernels.
pub fn is_bounded_by_one(spec: &BaseKernel) -> bool {
    <BaseKernel as PointKernel<f64>>::is_bounded_by_one(spec)
}

impl fmt::Display for BaseKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BaseKernel::Gaussian { sigma } => write!(f, "gaussian:{sigma}"),
            BaseKernel::Linear => write!(f, "linear"),
            BaseKernel::Polynomial { degree, offset } => write!(f, "poly:{degree}:{offset}"),
        }
    }
}

impl FromStr for BaseKernel {
    type Err = Error;

    /// Parses `gaussian:<sigma>`, `linear` or `poly:<degree>:<offset>`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |p: &str| -> Result<f64> {
            p.parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("bad number {p:?} in {s:?}")))
        };
        let kernel = match parts.as_slice() {
            ["gaussian", sigma] => BaseKernel::Gaussian { sigma: num(sigma)? },
            ["linear"] => BaseKernel::Linear,
            ["poly", degree, offset] => BaseKernel::Polynomial {
                degree: degree
                    .parse()
                    .map_err(|_| Error::InvalidParameter(format!("bad degree in {s:?}")))?,
                offset: num(offset)?,
            },
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "unknown base kernel {s:?} (expected gaussian:<sigma>, linear, poly:<d>:<c>)"
                )))
            }
        };
        kernel.validate()?;
        Ok(kernel)
    }
}

/// A kernel on opaque items given by a precomputed symmetric table indexed
/// by item handle.
#[derive(Debug, Clone)]
pub struct ItemTable<T> {
    table: DMatrix<T>,
}

impl<T: Real> ItemTable<T> {
    pub fn new(table: DMatrix<T>) -> Result<Self> {
        if !table.is_square() {
            return Err(Error::InvalidParameter("item table must be square".into()));
        }
        let dev = max_asymmetry(&table);
        if dev > T::tol(1e-9) {
            return Err(Error::Asymmetry { max_deviation: dev.as_f64() });
        }
        Ok(ItemTable { table })
    }
}

impl<T: Real> PointKernel<T> for ItemTable<T> {
    fn eval(&self, x: PointRef<'_, T>, y: PointRef<'_, T>) -> Result<T> {
        match (x, y) {
            (PointRef::Item(i), PointRef::Item(j)) => {
                let n = self.table.nrows() as u64;
                if i >= n || j >= n {
                    return Err(Error::Mode(format!("item handle out of range ({i}, {j})")));
                }
                Ok(self.table[(i as usize, j as usize)])
            }
            _ => Err(Error::Mode("item table only evaluates opaque items".into())),
        }
    }

    fn is_bounded_by_one(&self) -> bool {
        self.table.diagonal().iter().all(|d| d.abs() <= T::one())
    }
}

pub(crate) fn max_asymmetry<T: Real>(m: &DMatrix<T>) -> T {
    let n = m.nrows();
    let mut dev = T::zero();
    for i in 0..n {
        for j in (i + 1)..n {
            dev = dev.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    dev
}

#[inline]
fn sq_dist<T: Real>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).map(|(&a, &b)| (a - b) * (a - b)).sum()
}

#[inline]
fn dot<T: Real>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).map(|(&a, &b)| a * b).sum()
}
