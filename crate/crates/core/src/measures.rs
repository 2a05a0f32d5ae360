//! Weighted point clouds, i.e. finitely supported measures.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Largest total mass accepted for a sub-probability measure.
pub const MASS_SLACK: f64 = 1e-12;
/// Allowed deviation from unit mass when mixing two clouds.
pub const NORMALIZED_SLACK: f64 = 1e-9;

/// Kind of support a cloud lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Real vectors of the given dimension.
    Euclidean(usize),
    /// Items only reachable through a base kernel (see [`crate::base_kernel::ItemTable`]).
    Opaque,
}

/// Storage for the support of a cloud.
#[derive(Debug, Clone, PartialEq)]
pub enum Points<T> {
    /// Row-major coordinates, `dim` values per point.
    Euclidean { dim: usize, coords: Vec<T> },
    /// Opaque item handles.
    Opaque(Vec<u64>),
}

impl<T> Points<T> {
    pub fn len(&self) -> usize {
        match self {
            Points::Euclidean { dim, coords } => {
                if *dim == 0 {
                    0
                } else {
                    coords.len() / dim
                }
            }
            Points::Opaque(items) => items.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mode(&self) -> Mode {
        match self {
            Points::Euclidean { dim, .. } => Mode::Euclidean(*dim),
            Points::Opaque(_) => Mode::Opaque,
        }
    }
}

/// Borrowed view of one support point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PointRef<'a, T> {
    Vector(&'a [T]),
    Item(u64),
}

/// How weights are treated at construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Ingest {
    /// Rescale weights to unit mass.
    #[default]
    Normalize,
    /// Keep weights as given; reject a total mass above one.
    Strict,
}

/// A weighted cloud of points `{(x_i, a_i)}`: an atomic measure with
/// nonnegative weights and total mass at most one.
///
/// Clouds are immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud<T> {
    points: Points<T>,
    weights: Vec<T>,
}

impl<T: Real> PointCloud<T> {
    pub fn new(points: Points<T>, weights: Vec<T>, ingest: Ingest) -> Result<Self> {
        validate_points(&points)?;
        let n = points.len();
        if weights.len() != n {
            return Err(Error::InvalidCloud(format!(
                "{} points but {} weights",
                n,
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < T::zero()) {
            return Err(Error::InvalidCloud(format!("weight {w} is negative or not finite")));
        }
        let cloud = PointCloud { points, weights };
        match ingest {
            Ingest::Normalize => cloud.normalize_weights(),
            Ingest::Strict => {
                let mass = cloud.mass();
                if mass > T::one() + T::tol(MASS_SLACK) {
                    return Err(Error::MassExceeded { mass: mass.as_f64() });
                }
                Ok(cloud)
            }
        }
    }

    /// Euclidean cloud from row-major coordinates, weights normalized.
    pub fn euclidean(dim: usize, coords: Vec<T>, weights: Vec<T>) -> Result<Self> {
        Self::new(Points::Euclidean { dim, coords }, weights, Ingest::Normalize)
    }

    /// Euclidean cloud with uniform weights `1/d`.
    pub fn uniform(dim: usize, coords: Vec<T>) -> Result<Self> {
        let n = if dim == 0 { 0 } else { coords.len() / dim };
        Self::euclidean(dim, coords, vec![T::one(); n])
    }

    /// Euclidean cloud from a list of rows. `weights` defaults to uniform.
    pub fn from_rows(rows: &[Vec<T>], weights: Option<Vec<T>>) -> Result<Self> {
        let dim = rows.first().map(Vec::len).ok_or(Error::EmptyCloud)?;
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::InvalidCloud(format!(
                "row of length {} in a cloud of dimension {dim}",
                bad.len()
            )));
        }
        let coords: Vec<T> = rows.iter().flatten().copied().collect();
        let weights = weights.unwrap_or_else(|| vec![T::one(); rows.len()]);
        Self::euclidean(dim, coords, weights)
    }

    pub fn opaque(items: Vec<u64>, weights: Vec<T>) -> Result<Self> {
        Self::new(Points::Opaque(items), weights, Ingest::Normalize)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn mode(&self) -> Mode {
        self.points.mode()
    }

    pub fn points(&self) -> &Points<T> {
        &self.points
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Total mass `|mu| = sum a_i`.
    pub fn mass(&self) -> T {
        self.weights.iter().copied().sum()
    }

    pub fn point(&self, i: usize) -> PointRef<'_, T> {
        match &self.points {
            Points::Euclidean { dim, coords } => PointRef::Vector(&coords[i * dim..(i + 1) * dim]),
            Points::Opaque(items) => PointRef::Item(items[i]),
        }
    }

    /// Row-major coordinates in Euclidean mode.
    pub fn coords(&self) -> Option<&[T]> {
        match &self.points {
            Points::Euclidean { coords, .. } => Some(coords),
            Points::Opaque(_) => None,
        }
    }

    pub fn dim(&self) -> Option<usize> {
        match self.mode() {
            Mode::Euclidean(dim) => Some(dim),
            Mode::Opaque => None,
        }
    }

    /// Largest single weight.
    pub fn max_weight(&self) -> T {
        self.weights.iter().fold(T::zero(), |m, &w| m.max(w))
    }

    /// First moment `sum a_i x_i` (not divided by the mass).
    pub fn mean(&self) -> Option<Vec<T>> {
        let dim = self.dim()?;
        let coords = self.coords()?;
        let mut m = vec![T::zero(); dim];
        for (row, &w) in coords.chunks_exact(dim).zip(&self.weights) {
            for (acc, &x) in m.iter_mut().zip(row) {
                *acc += w * x;
            }
        }
        Some(m)
    }

    /// Returns the same points with weights rescaled to unit mass.
    pub fn normalize_weights(&self) -> Result<Self> {
        let mass = self.mass();
        if mass <= T::zero() {
            return Err(Error::ZeroMass);
        }
        Ok(PointCloud {
            points: self.points.clone(),
            weights: self.weights.iter().map(|&w| w / mass).collect(),
        })
    }

    /// Appends points with the given weights, skipping validation of mass.
    /// Used to pad a cloud with null (zero-weight) atoms.
    pub fn with_extra_points(&self, extra: Points<T>, weights: Vec<T>) -> Result<Self> {
        let points = concat_points(&self.points, &extra)?;
        let mut all = self.weights.clone();
        all.extend(weights);
        Self::new(points, all, Ingest::Strict)
    }
}

/// Free-function form of [`PointCloud::normalize_weights`].
pub fn normalize_weights<T: Real>(cloud: &PointCloud<T>) -> Result<PointCloud<T>> {
    cloud.normalize_weights()
}

/// The mixture `{(x_i, a_i/2), (y_j, b_j/2)}` of two unit-mass clouds.
pub fn mixture<T: Real>(a: &PointCloud<T>, b: &PointCloud<T>) -> Result<PointCloud<T>> {
    check_normalized(a)?;
    check_normalized(b)?;
    let points = concat_points(&a.points, &b.points)?;
    let half = T::lit(0.5);
    let weights = a.weights.iter().chain(&b.weights).map(|&w| w * half).collect();
    Ok(PointCloud { points, weights })
}

pub(crate) fn check_normalized<T: Real>(c: &PointCloud<T>) -> Result<()> {
    let mass = c.mass();
    if (mass - T::one()).abs() > T::tol(NORMALIZED_SLACK) {
        return Err(Error::NotNormalized { mass: mass.as_f64() });
    }
    Ok(())
}

pub(crate) fn check_compatible<T: Real>(a: &PointCloud<T>, b: &PointCloud<T>) -> Result<()> {
    if a.mode() != b.mode() {
        return Err(Error::ModeMismatch(format!("{:?} vs {:?}", a.mode(), b.mode())));
    }
    Ok(())
}

fn concat_points<T: Real>(a: &Points<T>, b: &Points<T>) -> Result<Points<T>> {
    match (a, b) {
        (Points::Euclidean { dim: da, coords: ca }, Points::Euclidean { dim: db, coords: cb })
            if da == db =>
        {
            let mut coords = Vec::with_capacity(ca.len() + cb.len());
            coords.extend_from_slice(ca);
            coords.extend_from_slice(cb);
            Ok(Points::Euclidean { dim: *da, coords })
        }
        (Points::Opaque(ia), Points::Opaque(ib)) => {
            Ok(Points::Opaque(ia.iter().chain(ib).copied().collect()))
        }
        _ => Err(Error::ModeMismatch(format!("{:?} vs {:?}", a.mode(), b.mode()))),
    }
}

fn validate_points<T: Real>(points: &Points<T>) -> Result<()> {
    match points {
        Points::Euclidean { dim, coords } => {
            if *dim == 0 {
                return Err(Error::InvalidCloud("dimension must be at least 1".into()));
            }
            if coords.is_empty() {
                return Err(Error::EmptyCloud);
            }
            if coords.len() % dim != 0 {
                return Err(Error::InvalidCloud(format!(
                    "{} coordinates do not split into points of dimension {dim}",
                    coords.len()
                )));
            }
            if coords.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidCloud("non-finite coordinate".into()));
            }
        }
        Points::Opaque(items) => {
            if items.is_empty() {
                return Err(Error::EmptyCloud);
            }
        }
    }
    Ok(())
}
