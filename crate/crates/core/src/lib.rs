//! Positive definite kernels between weighted point clouds, built from the
//! spectrum of the centered Gram matrix of their mixture.

pub mod base_kernel;
pub mod error;
pub mod gram;
pub mod harness;
pub mod io;
pub mod kernels;
pub mod measures;
pub mod scalar;
pub mod series;
pub mod variance;

pub use base_kernel::{BaseKernel, ItemTable, PointKernel};
pub use error::{Error, Result};
pub use gram::{center, joint_gram, CenteredGram, GramMatrix};
pub use kernels::{
    choose_delta, evaluate, k_0, k_m, k_tr, kernel_matrices, kernel_matrix, KernelConfig,
    KernelKind, KernelMatrix, KernelValue,
};
pub use measures::{mixture, Ingest, Mode, PointCloud, Points};
pub use scalar::Real;
pub use series::{SeriesSum, Truncation, KERNEL_TRUNCATION, VARIANCE_TRUNCATION};
pub use variance::{variance, VarianceMatrix};

pub type PointCloud64 = PointCloud<f64>;
pub type PointCloud32 = PointCloud<f32>;
pub type CenteredGram64 = CenteredGram<f64>;
pub type CenteredGram32 = CenteredGram<f32>;
pub type VarianceMatrix64 = VarianceMatrix<f64>;
pub type VarianceMatrix32 = VarianceMatrix<f32>;
