//! Image containers, patches, estimator configuration and the sample
//! statistics everything else is built on.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const RED: usize = 0;
pub const GREEN: usize = 1;
pub const BLUE: usize = 2;

/// Planar three-channel image with samples normalized to `[0, 1]`.
///
/// Planes are stored row-major in R, G, B order.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    planes: [Vec<f64>; 3],
}

impl RgbImage {
    /// Builds an image from three row-major planes, rejecting mismatched
    /// plane lengths and samples that are non-finite or outside `[0, 1]`.
    pub fn from_planes(width: usize, height: usize, planes: [Vec<f64>; 3]) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        let n = width * height;
        for (c, plane) in planes.iter().enumerate() {
            if plane.len() != n {
                return Err(Error::InvalidImage(format!(
                    "plane {c} has {} samples, expected {n}",
                    plane.len()
                )));
            }
            if let Some(v) = plane.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::InvalidImage(format!(
                    "plane {c} holds sample {v} outside [0, 1]"
                )));
            }
        }
        Ok(Self { width, height, planes })
    }

    /// Skips range validation; for planes produced by convex combinations of
    /// already validated samples, where rounding may overshoot by an ulp.
    pub(crate) fn from_planes_unchecked(width: usize, height: usize, planes: [Vec<f64>; 3]) -> Self {
        debug_assert!(planes.iter().all(|p| p.len() == width * height));
        Self { width, height, planes }
    }

    /// Builds an image by evaluating `f(channel, row, col)` at every sample.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        let planes = std::array::from_fn(|c| {
            let mut plane = Vec::with_capacity(width * height);
            for row in 0..height {
                for col in 0..width {
                    plane.push(f(c, row, col));
                }
            }
            plane
        });
        Self::from_planes(width, height, planes)
    }

    pub fn constant(width: usize, height: usize, rgb: [f64; 3]) -> Result<Self> {
        Self::from_fn(width, height, |c, _, _| rgb[c])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn plane(&self, channel: usize) -> &[f64] {
        &self.planes[channel]
    }

    pub fn planes(&self) -> &[Vec<f64>; 3] {
        &self.planes
    }

    pub fn into_planes(self) -> [Vec<f64>; 3] {
        self.planes
    }

    #[inline]
    pub fn get(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.planes[channel][row * self.width + col]
    }

    pub(crate) fn same_dims(&self, other: &RgbImage) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// A `k x k` window (or a concatenation of windows) with per-channel samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    /// Top-left `(row, col)` in the source image.
    pub origin: (usize, usize),
    /// Side length `k`.
    pub size: usize,
    channels: [Vec<f64>; 3],
}

impl Patch {
    pub fn from_channels(origin: (usize, usize), size: usize, channels: [Vec<f64>; 3]) -> Result<Self> {
        let n = channels[0].len();
        if channels.iter().any(|c| c.len() != n) {
            return Err(Error::DegeneratePatch("channel sample counts differ".into()));
        }
        if n < 2 {
            return Err(Error::DegeneratePatch(format!(
                "{n} samples per channel, need at least 2"
            )));
        }
        Ok(Self { origin, size, channels })
    }

    /// Copies the `size x size` window at `origin` out of `image`.
    pub fn extract(image: &RgbImage, origin: (usize, usize), size: usize) -> Result<Self> {
        let (row, col) = origin;
        if row + size > image.height() || col + size > image.width() {
            return Err(Error::InvalidParameter(format!(
                "patch at ({row}, {col}) of size {size} exceeds {}x{} image",
                image.width(),
                image.height()
            )));
        }
        let channels = std::array::from_fn(|c| window(image.plane(c), image.width(), origin, size));
        Self::from_channels(origin, size, channels)
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.channels[c]
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn samples(&self) -> impl Iterator<Item = f64> + '_ {
        self.channels.iter().flatten().copied()
    }
}

pub(crate) fn window(plane: &[f64], width: usize, origin: (usize, usize), size: usize) -> Vec<f64> {
    let (row, col) = origin;
    let mut out = Vec::with_capacity(size * size);
    for r in row..row + size {
        out.extend_from_slice(&plane[r * width + col..r * width + col + size]);
    }
    out
}

/// Estimator parameters. Defaults match the reference configuration:
/// `gamma = 2.0`, `k = 5`, `N_p = 1000`, `blur_sigma = 5.0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub gamma: f64,
    pub patch_size: usize,
    pub num_patches: usize,
    pub blur_sigma: f64,
    pub seed: u64,
    pub exposure_low: f64,
    pub exposure_high: f64,
}

pub const DEFAULT_SEED: u64 = 0x5eed;

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            gamma: 2.0,
            patch_size: 5,
            num_patches: 1000,
            blur_sigma: 5.0,
            seed: DEFAULT_SEED,
            exposure_low: 2.0 / 255.0,
            exposure_high: 253.0 / 255.0,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return bad(format!("gamma must be finite and >= 0, got {}", self.gamma));
        }
        if self.patch_size < 2 {
            return bad(format!("patch size must be >= 2, got {}", self.patch_size));
        }
        if self.num_patches < 1 {
            return bad("number of patches must be >= 1".into());
        }
        if !(self.blur_sigma.is_finite() && self.blur_sigma > 0.0) {
            return bad(format!("blur sigma must be > 0, got {}", self.blur_sigma));
        }
        let range = 0.0..=1.0;
        if !range.contains(&self.exposure_low) || !range.contains(&self.exposure_high) {
            return bad("exposure thresholds must lie in [0, 1]".into());
        }
        if self.exposure_low >= self.exposure_high {
            return bad(format!(
                "exposure_low ({}) must be below exposure_high ({})",
                self.exposure_low, self.exposure_high
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exclusion {
    None,
    Overexposed,
    Underexposed,
}

impl Exclusion {
    pub fn is_excluded(self) -> bool {
        self != Exclusion::None
    }
}

/// Per-patch diagnostics. Excluded patches keep their statistics but carry
/// zero weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchStats {
    pub origin: (usize, usize),
    pub alpha: f64,
    pub beta: f64,
    pub sigma2: f64,
    pub loss: f64,
    pub weight: f64,
    pub excluded: Exclusion,
}

/// Unbiased sample variance, normalized by `n - 1`.
pub fn sample_variance(values: &[f64]) -> Result<f64> {
    let n = values.len();
    if n < 2 {
        return Err(Error::DegeneratePatch(format!(
            "variance needs at least 2 samples, got {n}"
        )));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    Ok(ss / (n - 1) as f64)
}

/// Unbiased sample covariance, same normalization as [`sample_variance`].
pub fn sample_covariance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DegeneratePatch(format!(
            "covariance of sequences with lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::DegeneratePatch(format!(
            "covariance needs at least 2 samples, got {n}"
        )));
    }
    let mean_a = a.iter().sum::<f64>() / n as f64;
    let mean_b = b.iter().sum::<f64>() / n as f64;
    let s: f64 = a.iter().zip(b).map(|(x, y)| (x - mean_a) * (y - mean_b)).sum();
    Ok(s / (n - 1) as f64)
}

/// Draws `count` top-left origins uniformly (with replacement) over every
/// valid position of a `size x size` window in a `width x height` grid.
pub fn sample_origins(
    width: usize,
    height: usize,
    size: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<(usize, usize)>> {
    if width < size || height < size {
        return Err(Error::ImageTooSmall {
            width,
            height,
            required: size,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_row = height - size;
    let max_col = width - size;
    Ok((0..count)
        .map(|_| {
            let row = rng.random_range(0..=max_row);
            let col = rng.random_range(0..=max_col);
            (row, col)
        })
        .collect())
}

pub fn sample_patches(image: &RgbImage, config: &EstimatorConfig) -> Result<Vec<Patch>> {
    config.validate()?;
    let k = config.patch_size;
    sample_origins(image.width(), image.height(), k, config.num_patches, config.seed)?
        .into_iter()
        .map(|origin| Patch::extract(image, origin, k))
        .collect()
}

/// Any sample at or above `exposure_high` marks the patch overexposed;
/// otherwise any sample at or below `exposure_low` marks it underexposed.
pub fn exposure_excluded(patch: &Patch, config: &EstimatorConfig) -> Exclusion {
    let mut under = false;
    for v in patch.samples() {
        if v >= config.exposure_high {
            return Exclusion::Overexposed;
        }
        under |= v <= config.exposure_low;
    }
    if under {
        Exclusion::Underexposed
    } else {
        Exclusion::None
    }
}
