//! The digit-classification experiment: MNIST ingestion, pixel-cloud
//! sampling, a precomputed-kernel SVM, cross-validation and a timing
//! benchmark for the series kernel.

pub mod bench;
pub mod cv;
pub mod mnist;
pub mod sampling;
pub mod svm;

pub use bench::{bench_series_vs_eigen, BenchReport, BenchRow};
pub use cv::{cross_validate, cross_validate_many, cross_validate_matrix, render_table, CvConfig, CvReport};
pub use mnist::{load_mnist_idx, select_per_class, GrayImage};
pub use sampling::{build_dataset, sample_cloud, sample_cloud_with, LabeledCloud, SamplingLaw};
pub use svm::{train_svm_ovr, OvrModel};
