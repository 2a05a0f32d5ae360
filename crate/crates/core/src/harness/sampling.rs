//! Turning a grayscale image into a cloud of ink pixels.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::PointCloud;

use super::mnist::GrayImage;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// How ink pixels are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingLaw {
    /// Uniformly among pixels above the threshold.
    #[default]
    Uniform,
    /// Proportionally to intensity, among pixels above the threshold.
    Intensity,
}

/// A cloud with its class label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCloud {
    pub cloud: PointCloud<f64>,
    pub label: u32,
}

/// Samples `min(m, #ink)` distinct ink pixels uniformly without replacement.
pub fn sample_cloud(image: &GrayImage, m: usize, threshold: f64, seed: u64) -> Result<PointCloud<f64>> {
    sample_cloud_with(image, m, threshold, SamplingLaw::Uniform, seed)
}

/// Same as [`sample_cloud`] with a choice of sampling law. Pixel `(row, col)`
/// maps to `((col + 0.5) / cols, (row + 0.5) / rows)`; weights are uniform.
pub fn sample_cloud_with(
    image: &GrayImage,
    m: usize,
    threshold: f64,
    law: SamplingLaw,
    seed: u64,
) -> Result<PointCloud<f64>> {
    if m == 0 {
        return Err(Error::InvalidParameter("sample size must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&threshold) {
        return Err(Error::InvalidParameter(format!("threshold {threshold} outside [0, 1)")));
    }
    let ink: Vec<usize> = (0..image.pixels.len()).filter(|&p| image.pixels[p] > threshold).collect();
    if ink.is_empty() {
        return Err(Error::EmptyImage);
    }
    let mut chosen: Vec<usize> = if ink.len() <= m {
        ink
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let picks = match law {
            SamplingLaw::Uniform => index::sample(&mut rng, ink.len(), m),
            SamplingLaw::Intensity => {
                index::sample_weighted(&mut rng, ink.len(), |k| image.pixels[ink[k]], m)
                    .map_err(|e| Error::InvalidParameter(format!("intensity sampling: {e}")))?
            }
        };
        picks.into_iter().map(|k| ink[k]).collect()
    };
    chosen.sort_unstable();
    let (rows, cols) = (image.rows as f64, image.cols as f64);
    let coords = chosen
        .iter()
        .flat_map(|&p| {
            let (r, c) = (p / image.cols, p % image.cols);
            [(c as f64 + 0.5) / cols, (r as f64 + 0.5) / rows]
        })
        .collect();
    PointCloud::uniform(2, coords)
}

/// Per-image seed derived from the run seed and the image index.
pub fn image_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Samples one cloud per image.
pub fn build_dataset(
    images: &[(GrayImage, u8)],
    m: usize,
    threshold: f64,
    law: SamplingLaw,
    seed: u64,
) -> Result<Vec<LabeledCloud>> {
    images
        .iter()
        .enumerate()
        .map(|(k, (img, label))| {
            Ok(LabeledCloud {
                cloud: sample_cloud_with(img, m, threshold, law, image_seed(seed, k))?,
                label: u32::from(*label),
            })
        })
        .collect()
}
