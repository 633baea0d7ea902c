//! Per-patch statistics, loss-based weights and the weighted aggregate noise
//! variance.
//!
//! For a patch with per-channel samples `I_R, I_G, I_B`:
//!
//! * `alpha` is the mean of the three channel variances,
//! * `beta` is the variance of the per-pixel channel mean,
//! * `sigma2 = 1.5 * (alpha - beta)` (or `2.25 * (alpha - beta)` for patches
//!   built from Bayer sub-images, whose red and blue noise is halved by
//!   interpolation).
//!
//! When the noise-free channels differ only by constants within the patch,
//! `sigma2` is an unbiased estimate of the noise variance; otherwise it
//! overestimates. Each patch is weighted by `exp(-gamma * loss / mean_loss)`
//! where `loss` measures how far the blurred channel differences are from
//! constant.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtering::gaussian_blur;
use crate::types::{
    exposure_excluded, sample_origins, sample_variance, window, EstimatorConfig, Exclusion, Patch, PatchStats,
    RgbImage, BLUE, GREEN, RED,
};

/// Which correction factor turns `alpha - beta` into a variance estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatchMode {
    Rgb,
    Raw,
}

impl PatchMode {
    pub fn factor(self) -> f64 {
        match self {
            PatchMode::Rgb => 1.5,
            PatchMode::Raw => 2.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub mode: PatchMode,
    /// `sqrt(max(sigma2, 0))`.
    pub sigma: f64,
    /// Weighted aggregate, not clamped.
    pub sigma2: f64,
    pub patches_used: usize,
    pub patches_excluded: usize,
    /// Mean loss over usable patches, the weight normalization factor.
    pub mean_loss: f64,
    pub config: EstimatorConfig,
    pub per_patch: Vec<PatchStats>,
}

pub fn compute_alpha(patch: &Patch) -> Result<f64> {
    let mut total = 0.0;
    for c in [RED, GREEN, BLUE] {
        total += sample_variance(patch.channel(c))?;
    }
    Ok(total / 3.0)
}

pub fn compute_beta(patch: &Patch) -> Result<f64> {
    let (r, g, b) = (patch.channel(RED), patch.channel(GREEN), patch.channel(BLUE));
    let mean: Vec<f64> = (0..patch.len()).map(|i| (r[i] + g[i] + b[i]) / 3.0).collect();
    sample_variance(&mean)
}

/// Per-patch noise variance estimate. Not clamped: negative values are
/// legitimate samples of an unbiased estimator.
pub fn estimate_patch_sigma2(patch: &Patch, mode: PatchMode) -> Result<f64> {
    Ok(mode.factor() * (compute_alpha(patch)? - compute_beta(patch)?))
}

/// Mean variance of the pairwise channel differences of `blurred` inside the
/// `size x size` window at `origin`.
pub fn compute_patch_loss(origin: (usize, usize), size: usize, blurred: &RgbImage) -> Result<f64> {
    let (row, col) = origin;
    if row + size > blurred.height() || col + size > blurred.width() {
        return Err(Error::InvalidParameter(format!(
            "loss window at ({row}, {col}) of size {size} exceeds {}x{} image",
            blurred.width(),
            blurred.height()
        )));
    }
    let w: [Vec<f64>; 3] = std::array::from_fn(|c| window(blurred.plane(c), blurred.width(), origin, size));
    let diff = |a: usize, b: usize| -> Vec<f64> { w[a].iter().zip(&w[b]).map(|(x, y)| x - y).collect() };
    let total =
        sample_variance(&diff(RED, GREEN))? + sample_variance(&diff(GREEN, BLUE))? + sample_variance(&diff(BLUE, RED))?;
    Ok(total / 3.0)
}

/// `w_i = exp(-gamma * L_i / mean(L))`; all ones when the mean loss is zero.
pub fn compute_weights(losses: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if losses.is_empty() {
        return Err(Error::NoUsablePatches(0));
    }
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::InvalidParameter(format!("gamma must be >= 0, got {gamma}")));
    }
    let mean = neumaier_sum(losses.iter().copied()) / losses.len() as f64;
    if mean <= 0.0 {
        return Ok(vec![1.0; losses.len()]);
    }
    Ok(losses.iter().map(|l| (-gamma * l / mean).exp()).collect())
}

/// Weighted mean of `sigma2` over non-excluded patches, summed with
/// compensation in index order.
pub fn aggregate_weighted(stats: &[PatchStats]) -> Result<f64> {
    let usable = || stats.iter().filter(|s| !s.excluded.is_excluded());
    if usable().next().is_none() {
        return Err(Error::NoUsablePatches(stats.len()));
    }
    let num = neumaier_sum(usable().map(|s| s.weight * s.sigma2));
    let den = neumaier_sum(usable().map(|s| s.weight));
    if den <= 0.0 {
        return Err(Error::InvalidParameter(
            "all patch weights underflowed to zero; gamma is too large".into(),
        ));
    }
    Ok(num / den)
}

/// Neumaier-compensated sum.
pub(crate) fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Statistics of one sampled patch before weighting.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PatchMeasure {
    pub origin: (usize, usize),
    pub alpha: f64,
    pub beta: f64,
    pub loss: f64,
    pub excluded: Exclusion,
}

/// Weights the measured patches and aggregates them into a report.
pub(crate) fn finish(
    config: &EstimatorConfig,
    mode: PatchMode,
    factor: f64,
    measures: Vec<PatchMeasure>,
) -> Result<EstimateReport> {
    let usable_losses: Vec<f64> = measures
        .iter()
        .filter(|m| !m.excluded.is_excluded())
        .map(|m| m.loss)
        .collect();
    if usable_losses.is_empty() {
        return Err(Error::NoUsablePatches(measures.len()));
    }
    let mean_loss = neumaier_sum(usable_losses.iter().copied()) / usable_losses.len() as f64;
    let mut weights = compute_weights(&usable_losses, config.gamma)?.into_iter();

    let per_patch: Vec<PatchStats> = measures
        .iter()
        .map(|m| PatchStats {
            origin: m.origin,
            alpha: m.alpha,
            beta: m.beta,
            sigma2: factor * (m.alpha - m.beta),
            loss: m.loss,
            weight: if m.excluded.is_excluded() {
                0.0
            } else {
                weights.next().expect("one weight per usable patch")
            },
            excluded: m.excluded,
        })
        .collect();

    let sigma2 = aggregate_weighted(&per_patch)?;
    let patches_used = usable_losses.len();
    Ok(EstimateReport {
        mode,
        sigma: sigma2.max(0.0).sqrt(),
        sigma2,
        patches_used,
        patches_excluded: per_patch.len() - patches_used,
        mean_loss,
        config: *config,
        per_patch,
    })
}

/// Full pipeline on an RGB image: blur once, sample patches, drop badly
/// exposed ones, weight the rest by loss and aggregate.
pub fn estimate_noise(image: &RgbImage, config: &EstimatorConfig) -> Result<EstimateReport> {
    config.validate()?;
    let k = config.patch_size;
    let origins = sample_origins(image.width(), image.height(), k, config.num_patches, config.seed)?;
    let blurred = gaussian_blur(image, config.blur_sigma)?;

    let measures = origins
        .par_iter()
        .map(|&origin| {
            let patch = Patch::extract(image, origin, k)?;
            Ok(PatchMeasure {
                origin,
                alpha: compute_alpha(&patch)?,
                beta: compute_beta(&patch)?,
                loss: compute_patch_loss(origin, k, &blurred)?,
                excluded: exposure_excluded(&patch, config),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    finish(config, PatchMode::Rgb, PatchMode::Rgb.factor(), measures)
}
