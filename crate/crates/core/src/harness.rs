//! Evaluation machinery: synthetic degradation, stack-based ground truth,
//! inter-channel noise correlation, synthetic scenes and parameter sweeps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayer::{BayerFrame, CfaPattern};
use crate::error::{Error, Result};
use crate::estimator::{estimate_noise, neumaier_sum};
use crate::filtering::{blur_plane, GaussianKernel};
use crate::types::{EstimatorConfig, RgbImage};

/// Derives an independent stream seed from a base seed (SplitMix64 finalizer).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    mix(base ^ mix(stream))
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "noise sigma must be finite and >= 0, got {sigma}"
        )))
    }
}

/// Adds i.i.d. zero-mean Gaussian noise to every sample and clamps to `[0, 1]`.
pub fn degrade_gaussian(image: &RgbImage, sigma: f64, seed: u64) -> Result<RgbImage> {
    degrade_mixed(image, sigma, IDENTITY, seed)
}

pub const IDENTITY: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Mixing matrix `(1 - m) I + (m / 3) J` that blends each channel's noise
/// with the channel mean, emulating in-camera color processing.
pub fn channel_mixing(m: f64) -> [[f64; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| if i == j { 1.0 - m } else { 0.0 } + m / 3.0))
}

/// Adds `sigma * M z` per pixel, `z` a standard normal 3-vector, then clamps.
pub fn degrade_mixed(image: &RgbImage, sigma: f64, mixing: [[f64; 3]; 3], seed: u64) -> Result<RgbImage> {
    check_sigma(sigma)?;
    if sigma == 0.0 {
        return Ok(image.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = image.width() * image.height();
    let src = image.planes();
    let mut planes: [Vec<f64>; 3] = std::array::from_fn(|_| Vec::with_capacity(n));
    for pixel in (0..n).map(|i| [src[0][i], src[1][i], src[2][i]]) {
        let z: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
        for ((plane, row), v) in planes.iter_mut().zip(&mixing).zip(pixel) {
            let noise = row[0] * z[0] + row[1] * z[1] + row[2] * z[2];
            plane.push((v + sigma * noise).clamp(0.0, 1.0));
        }
    }
    RgbImage::from_planes(image.width(), image.height(), planes)
}

/// Adds i.i.d. Gaussian noise to every photosite and clamps to `[0, 1]`.
pub fn degrade_bayer(frame: &BayerFrame, sigma: f64, seed: u64) -> Result<BayerFrame> {
    check_sigma(sigma)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plane = frame
        .plane()
        .iter()
        .map(|v| {
            let z: f64 = StandardNormal.sample(&mut rng);
            (v + sigma * z).clamp(0.0, 1.0)
        })
        .collect();
    BayerFrame::new(
        frame.width(),
        frame.height(),
        plane,
        frame.pattern(),
        frame.max_value,
        frame.black_level,
    )
}

/// Frames of one static scene, all the same size.
#[derive(Debug, Clone)]
pub struct ImageStack {
    frames: Vec<RgbImage>,
}

impl ImageStack {
    pub fn new(frames: Vec<RgbImage>) -> Result<Self> {
        if frames.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "a stack needs at least 2 frames, got {}",
                frames.len()
            )));
        }
        if let Some(bad) = frames.iter().position(|f| !f.same_dims(&frames[0])) {
            return Err(Error::DimensionMismatch(format!(
                "frame {bad} is {}x{}, frame 0 is {}x{}",
                frames[bad].width(),
                frames[bad].height(),
                frames[0].width(),
                frames[0].height()
            )));
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[RgbImage] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Per-sample mean across frames.
    pub fn mean_image(&self) -> RgbImage {
        let first = &self.frames[0];
        let m = self.frames.len() as f64;
        let planes = std::array::from_fn(|c| {
            (0..first.plane(c).len())
                .map(|i| self.frames.iter().map(|f| f.plane(c)[i]).sum::<f64>() / m)
                .collect()
        });
        RgbImage::from_planes_unchecked(first.width(), first.height(), planes)
    }
}

/// Running per-sample mean and sum of squared deviations across frames.
struct StackAccumulator {
    count: usize,
    mean: [Vec<f64>; 3],
    m2: [Vec<f64>; 3],
}

impl StackAccumulator {
    fn new(n: usize) -> Self {
        Self {
            count: 0,
            mean: std::array::from_fn(|_| vec![0.0; n]),
            m2: std::array::from_fn(|_| vec![0.0; n]),
        }
    }

    fn push(&mut self, frame: &RgbImage) {
        self.count += 1;
        let k = self.count as f64;
        for c in 0..3 {
            for ((mean, m2), &x) in self.mean[c].iter_mut().zip(&mut self.m2[c]).zip(frame.plane(c)) {
                let delta = x - *mean;
                *mean += delta / k;
                *m2 += delta * (x - *mean);
            }
        }
    }

    /// Square root of the mean unbiased per-sample variance.
    fn sigma(&self) -> f64 {
        let n = self.m2[0].len() * 3;
        let denom = (self.count - 1) as f64;
        let total = neumaier_sum(self.m2.iter().flatten().map(|m2| m2 / denom));
        (total / n as f64).sqrt()
    }
}

/// Ground-truth noise level of a static stack: per-pixel, per-channel
/// unbiased variance across frames, averaged, then square-rooted.
pub fn ground_truth_from_stack(stack: &ImageStack) -> Result<f64> {
    let first = &stack.frames[0];
    let mut acc = StackAccumulator::new(first.width() * first.height());
    for f in &stack.frames {
        acc.push(f);
    }
    Ok(acc.sigma())
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}

/// Pearson correlations `[r_RG, r_GB, r_BR]` of the noise `noisy - reference`.
pub fn noise_correlation(noisy: &RgbImage, reference: &RgbImage) -> Result<[f64; 3]> {
    if !noisy.same_dims(reference) {
        return Err(Error::DimensionMismatch(format!(
            "noisy image is {}x{}, reference is {}x{}",
            noisy.width(),
            noisy.height(),
            reference.width(),
            reference.height()
        )));
    }
    let noise: [Vec<f64>; 3] = std::array::from_fn(|c| {
        noisy
            .plane(c)
            .iter()
            .zip(reference.plane(c))
            .map(|(a, b)| a - b)
            .collect()
    });
    let names = ["R", "G", "B"];
    let mut out = [0.0; 3];
    for (slot, (a, b)) in [(0, 1), (1, 2), (2, 0)].into_iter().enumerate() {
        out[slot] = pearson(&noise[a], &noise[b]).ok_or_else(|| {
            Error::UndefinedCorrelation(format!(
                "noise in channel {} or {} has zero variance",
                names[a], names[b]
            ))
        })?;
    }
    Ok(out)
}

/// Gaussian-smoothed white noise rescaled linearly onto `[lo, hi]`.
fn smooth_field(width: usize, height: usize, blur: f64, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let white: Vec<f64> = (0..width * height).map(|_| rng.random::<f64>()).collect();
    let kernel = GaussianKernel::new(blur).expect("positive blur");
    let field = blur_plane(&white, width, height, &kernel);
    let (min, max) = field
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = (max - min).max(f64::MIN_POSITIVE);
    field.into_iter().map(|v| lo + (hi - lo) * (v - min) / span).collect()
}

/// Scene whose channels are one shared band-limited texture plus
/// per-channel constants, so every channel difference is constant
/// everywhere. Values stay within `[0.32, 0.68]`.
pub fn make_condition_c_scene(width: usize, height: usize, seed: u64) -> Result<RgbImage> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidParameter("scene dimensions must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let texture = smooth_field(width, height, 2.0, 0.35, 0.65, &mut rng);
    let offsets = [0.0, rng.random_range(-0.03..0.03), rng.random_range(-0.03..0.03)];
    let planes = std::array::from_fn(|c| texture.iter().map(|t| t + offsets[c]).collect());
    RgbImage::from_planes(width, height, planes)
}

/// Shape of the scene produced by [`make_textured_scene`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TexturedSceneParams {
    /// Blur of the shared luminance texture.
    pub texture_blur: f64,
    /// Half-range of the shared texture around 0.5.
    pub texture_amplitude: f64,
    /// Blur and half-range of the slowly varying per-channel tint.
    pub tint_blur: f64,
    pub tint_amplitude: f64,
    /// Blur of the field selecting colorful regions.
    pub region_blur: f64,
    /// Approximate fraction of the frame covered by colorful regions.
    pub region_fraction: f64,
    /// Per-channel texture gain deviation inside colorful regions.
    pub gain: f64,
    /// Blur and half-range of the independent per-channel detail inside
    /// colorful regions.
    pub detail_blur: f64,
    pub detail_amplitude: f64,
}

impl Default for TexturedSceneParams {
    fn default() -> Self {
        Self {
            texture_blur: 3.0,
            texture_amplitude: 0.18,
            tint_blur: 24.0,
            tint_amplitude: 0.04,
            region_blur: 16.0,
            region_fraction: 0.35,
            gain: 0.5,
            detail_blur: 4.0,
            detail_amplitude: 0.05,
        }
    }
}

/// Realistic synthetic scene: a shared luminance texture with smooth tints,
/// plus colorful regions where channel gains differ and each channel carries
/// its own detail, so the channel differences are not constant there.
pub fn make_textured_scene(width: usize, height: usize, seed: u64, params: &TexturedSceneParams) -> Result<RgbImage> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidParameter("scene dimensions must be positive".into()));
    }
    let p = params;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let texture = smooth_field(width, height, p.texture_blur, -1.0, 1.0, &mut rng);
    let tints: [Vec<f64>; 3] = std::array::from_fn(|_| {
        smooth_field(
            width,
            height,
            p.tint_blur,
            -p.tint_amplitude,
            p.tint_amplitude,
            &mut rng,
        )
    });
    let details: [Vec<f64>; 3] = std::array::from_fn(|_| {
        smooth_field(
            width,
            height,
            p.detail_blur,
            -p.detail_amplitude,
            p.detail_amplitude,
            &mut rng,
        )
    });
    let region = smooth_field(width, height, p.region_blur, 0.0, 1.0, &mut rng);
    // Threshold the region field at its (1 - fraction) quantile with a soft edge.
    let mut sorted = region.clone();
    sorted.sort_by(f64::total_cmp);
    let idx = ((1.0 - p.region_fraction.clamp(0.0, 1.0)) * (sorted.len() - 1) as f64) as usize;
    let threshold = sorted[idx];
    let mask: Vec<f64> = region
        .iter()
        .map(|&r| ((r - threshold) / 0.04 + 0.5).clamp(0.0, 1.0))
        .collect();
    let gains = [1.0 + p.gain, 1.0, 1.0 - p.gain];

    let planes = std::array::from_fn(|c| {
        (0..width * height)
            .map(|i| {
                let m = mask[i];
                let gain = 1.0 + m * (gains[c] - 1.0);
                let v = 0.5 + p.texture_amplitude * texture[i] * gain + tints[c][i] + m * details[c][i];
                v.clamp(0.05, 0.95)
            })
            .collect()
    });
    RgbImage::from_planes(width, height, planes)
}

/// Samples each pixel's CFA-designated channel into a single plane.
pub fn mosaic_scene(image: &RgbImage, pattern: CfaPattern) -> Result<BayerFrame> {
    let (w, h) = (image.width(), image.height());
    if !w.is_multiple_of(2) || !h.is_multiple_of(2) {
        return Err(Error::InvalidFrame(format!(
            "mosaicking needs even dimensions, got {w}x{h}"
        )));
    }
    let mut plane = Vec::with_capacity(w * h);
    for row in 0..h {
        for col in 0..w {
            plane.push(image.get(pattern.color_at(row, col), row, col));
        }
    }
    BayerFrame::new(w, h, plane, pattern, 65535, 0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub sigmas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub patch_sizes: Vec<usize>,
}

impl SweepGrid {
    pub fn len(&self) -> usize {
        self.sigmas.len() * self.gammas.len() * self.patch_sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One grid point. `rel_error` is absent when the ground truth is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sigma_injected: f64,
    pub gamma: f64,
    pub patch_size: usize,
    pub num_patches: usize,
    pub blur_sigma: f64,
    pub seed: u64,
    pub estimate: f64,
    pub sigma_gt: f64,
    pub rel_error: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

/// For each injected sigma: degrades `scene` into a stack of `stack_size`
/// frames for the ground truth plus one more frame to estimate from, then
/// evaluates every `(gamma, k)` pair. Rows are ordered sigma-major, then
/// gamma, then k.
pub fn run_sweep(
    scene: &RgbImage,
    grid: &SweepGrid,
    config: &EstimatorConfig,
    stack_size: usize,
    seed: u64,
) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("sweep grid is empty".into()));
    }
    if stack_size < 2 {
        return Err(Error::InvalidParameter(format!(
            "ground truth needs a stack of at least 2 frames, got {stack_size}"
        )));
    }
    for &s in &grid.sigmas {
        check_sigma(s)?;
    }

    let per_sigma = grid
        .sigmas
        .par_iter()
        .enumerate()
        .map(|(si, &sigma)| -> Result<Vec<SweepRow>> {
            let base = derive_seed(seed, si as u64);
            let mut acc = StackAccumulator::new(scene.width() * scene.height());
            for j in 0..stack_size {
                acc.push(&degrade_gaussian(scene, sigma, derive_seed(base, j as u64))?);
            }
            let sigma_gt = acc.sigma();
            drop(acc);
            let noisy = degrade_gaussian(scene, sigma, derive_seed(base, stack_size as u64))?;

            let mut rows = Vec::with_capacity(grid.gammas.len() * grid.patch_sizes.len());
            for &gamma in &grid.gammas {
                for &patch_size in &grid.patch_sizes {
                    let cfg = EstimatorConfig {
                        gamma,
                        patch_size,
                        ..*config
                    };
                    let estimate = estimate_noise(&noisy, &cfg)?.sigma;
                    rows.push(SweepRow {
                        sigma_injected: sigma,
                        gamma,
                        patch_size,
                        num_patches: cfg.num_patches,
                        blur_sigma: cfg.blur_sigma,
                        seed: cfg.seed,
                        estimate,
                        sigma_gt,
                        rel_error: (sigma_gt > 0.0).then(|| (estimate - sigma_gt).abs() / sigma_gt),
                    });
                }
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(SweepResult {
        rows: per_sigma.into_iter().flatten().collect(),
    })
}
