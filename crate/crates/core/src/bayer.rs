//! Bayer RAW support: sub-image extraction at the two green sites of each
//! 2x2 CFA tile and the RAW variant of the estimator.
//!
//! Greens sharing a row with red are `G0`, greens sharing a row with blue are
//! `G1`. At a `G0` site red is the mean of the left/right neighbors and blue
//! the mean of the up/down neighbors; `G1` is the transpose. Sampling every
//! tile gives two half-resolution RGB sub-images whose red and blue planes
//! carry half the photosite noise variance, which is why RAW patches use the
//! `9/4` factor instead of `3/2`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{
    compute_alpha, compute_beta, compute_patch_loss, finish, EstimateReport, PatchMeasure, PatchMode,
};
use crate::filtering::gaussian_blur;
use crate::types::{exposure_excluded, sample_origins, window, EstimatorConfig, Patch, RgbImage, BLUE, GREEN, RED};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CfaPattern {
    Rggb,
    Bggr,
    Grbg,
    Gbrg,
}

impl CfaPattern {
    pub const ALL: [CfaPattern; 4] = [CfaPattern::Rggb, CfaPattern::Bggr, CfaPattern::Grbg, CfaPattern::Gbrg];

    /// Channel index (`RED`, `GREEN`, `BLUE`) of the cells of the 2x2 tile in
    /// row-major order.
    fn tile(self) -> [usize; 4] {
        match self {
            CfaPattern::Rggb => [RED, GREEN, GREEN, BLUE],
            CfaPattern::Bggr => [BLUE, GREEN, GREEN, RED],
            CfaPattern::Grbg => [GREEN, RED, BLUE, GREEN],
            CfaPattern::Gbrg => [GREEN, BLUE, RED, GREEN],
        }
    }

    fn from_tile(tile: [usize; 4]) -> Self {
        *Self::ALL
            .iter()
            .find(|p| p.tile() == tile)
            .expect("tile is a valid bayer layout")
    }

    #[inline]
    pub fn color_at(self, row: usize, col: usize) -> usize {
        self.tile()[(row % 2) * 2 + col % 2]
    }

    /// `(row, col)` offset in the tile of the green sharing a row with red.
    pub fn green0_offset(self) -> (usize, usize) {
        self.green_in_row_of(RED)
    }

    /// `(row, col)` offset in the tile of the green sharing a row with blue.
    pub fn green1_offset(self) -> (usize, usize) {
        self.green_in_row_of(BLUE)
    }

    fn green_in_row_of(self, color: usize) -> (usize, usize) {
        let t = self.tile();
        let row = if t[0] == color || t[1] == color { 0 } else { 1 };
        let col = if t[row * 2] == GREEN { 0 } else { 1 };
        (row, col)
    }

    /// Layout seen after mirroring an even-width frame left to right.
    pub fn flipped_horizontal(self) -> Self {
        let t = self.tile();
        Self::from_tile([t[1], t[0], t[3], t[2]])
    }

    /// Layout seen after mirroring an even-height frame top to bottom.
    pub fn flipped_vertical(self) -> Self {
        let t = self.tile();
        Self::from_tile([t[2], t[3], t[0], t[1]])
    }
}

impl fmt::Display for CfaPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CfaPattern::Rggb => "RGGB",
            CfaPattern::Bggr => "BGGR",
            CfaPattern::Grbg => "GRBG",
            CfaPattern::Gbrg => "GBRG",
        })
    }
}

impl FromStr for CfaPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RGGB" => Ok(CfaPattern::Rggb),
            "BGGR" => Ok(CfaPattern::Bggr),
            "GRBG" => Ok(CfaPattern::Grbg),
            "GBRG" => Ok(CfaPattern::Gbrg),
            _ => Err(Error::InvalidParameter(format!(
                "unknown CFA pattern {s:?}, expected one of RGGB, BGGR, GRBG, GBRG"
            ))),
        }
    }
}

/// Single-plane CFA mosaic, normalized to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BayerFrame {
    width: usize,
    height: usize,
    plane: Vec<f64>,
    pattern: CfaPattern,
    /// Integer full-scale of the source samples.
    pub max_value: u32,
    /// Integer offset subtracted before normalization.
    pub black_level: u32,
}

impl BayerFrame {
    pub fn new(
        width: usize,
        height: usize,
        plane: Vec<f64>,
        pattern: CfaPattern,
        max_value: u32,
        black_level: u32,
    ) -> Result<Self> {
        if width == 0 || height == 0 || !width.is_multiple_of(2) || !height.is_multiple_of(2) {
            return Err(Error::InvalidFrame(format!(
                "dimensions must be positive and even, got {width}x{height}"
            )));
        }
        if plane.len() != width * height {
            return Err(Error::InvalidFrame(format!(
                "{} samples for a {width}x{height} frame",
                plane.len()
            )));
        }
        if black_level >= max_value {
            return Err(Error::InvalidFrame(format!(
                "black level {black_level} must be below max value {max_value}"
            )));
        }
        if let Some(v) = plane.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidFrame(format!("sample {v} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            plane,
            pattern,
            max_value,
            black_level,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pattern(&self) -> CfaPattern {
        self.pattern
    }

    pub fn plane(&self) -> &[f64] {
        &self.plane
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.plane[row * self.width + col]
    }

    /// Same frame, relabelled with another layout. Used to reproduce a
    /// user-supplied wrong `--cfa`.
    pub fn with_pattern(mut self, pattern: CfaPattern) -> Self {
        self.pattern = pattern;
        self
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut plane = Vec::with_capacity(self.plane.len());
        for row in self.plane.chunks(self.width) {
            plane.extend(row.iter().rev());
        }
        Self {
            plane,
            pattern: self.pattern.flipped_horizontal(),
            ..self.clone()
        }
    }

    pub fn flip_vertical(&self) -> Self {
        let plane = self.plane.chunks(self.width).rev().flatten().copied().collect();
        Self {
            plane,
            pattern: self.pattern.flipped_vertical(),
            ..self.clone()
        }
    }
}

/// Half-resolution RGB images anchored at the `G0` and `G1` sites.
#[derive(Debug, Clone, PartialEq)]
pub struct SubImagePair {
    pub sub0: RgbImage,
    pub sub1: RgbImage,
}

/// Mean of the in-bounds cells among `a` and `b`; at least one is in bounds
/// for any site of an even-sized frame.
fn neighbor_mean(frame: &BayerFrame, a: (isize, isize), b: (isize, isize)) -> f64 {
    let inside = |(r, c): (isize, isize)| {
        (r >= 0 && c >= 0 && (r as usize) < frame.height && (c as usize) < frame.width)
            .then(|| frame.get(r as usize, c as usize))
    };
    match (inside(a), inside(b)) {
        (Some(x), Some(y)) => (x + y) / 2.0,
        (Some(x), None) | (None, Some(x)) => x,
        (None, None) => unreachable!("frame dimensions are at least 2"),
    }
}

pub fn extract_subimages(frame: &BayerFrame) -> Result<SubImagePair> {
    if !frame.width.is_multiple_of(2) || !frame.height.is_multiple_of(2) {
        return Err(Error::InvalidFrame(format!(
            "dimensions must be even, got {}x{}",
            frame.width, frame.height
        )));
    }
    let (sw, sh) = (frame.width / 2, frame.height / 2);

    // `horizontal` is the color found left/right of the green site.
    let build = |offset: (usize, usize), horizontal: usize| -> Result<RgbImage> {
        let mut planes: [Vec<f64>; 3] = std::array::from_fn(|_| Vec::with_capacity(sw * sh));
        let vertical = if horizontal == RED { BLUE } else { RED };
        for ty in 0..sh {
            for tx in 0..sw {
                let (y, x) = (2 * ty + offset.0, 2 * tx + offset.1);
                let (yi, xi) = (y as isize, x as isize);
                let h = neighbor_mean(frame, (yi, xi - 1), (yi, xi + 1));
                let v = neighbor_mean(frame, (yi - 1, xi), (yi + 1, xi));
                planes[GREEN].push(frame.get(y, x));
                planes[horizontal].push(h);
                planes[vertical].push(v);
            }
        }
        RgbImage::from_planes(sw, sh, planes)
    };

    Ok(SubImagePair {
        sub0: build(frame.pattern.green0_offset(), RED)?,
        sub1: build(frame.pattern.green1_offset(), BLUE)?,
    })
}

fn concat_patch(pair: &SubImagePair, origin: (usize, usize), k: usize) -> Result<Patch> {
    let w = pair.sub0.width();
    let channels = std::array::from_fn(|c| {
        let mut samples = window(pair.sub0.plane(c), w, origin, k);
        samples.extend(window(pair.sub1.plane(c), w, origin, k));
        samples
    });
    Patch::from_channels(origin, k, channels)
}

/// Samples origins on the sub-image grid and concatenates the co-located
/// windows of both sub-images into patches of `2 k^2` samples per channel.
pub fn sample_raw_patches(pair: &SubImagePair, config: &EstimatorConfig) -> Result<Vec<Patch>> {
    config.validate()?;
    let k = config.patch_size;
    sample_origins(
        pair.sub0.width(),
        pair.sub0.height(),
        k,
        config.num_patches,
        config.seed,
    )?
    .into_iter()
    .map(|origin| concat_patch(pair, origin, k))
    .collect()
}

pub fn estimate_noise_raw(frame: &BayerFrame, config: &EstimatorConfig) -> Result<EstimateReport> {
    estimate_raw_with_factor(frame, config, PatchMode::Raw.factor())
}

pub(crate) fn estimate_raw_with_factor(
    frame: &BayerFrame,
    config: &EstimatorConfig,
    factor: f64,
) -> Result<EstimateReport> {
    config.validate()?;
    let k = config.patch_size;
    if frame.width < 2 * k || frame.height < 2 * k {
        return Err(Error::ImageTooSmall {
            width: frame.width,
            height: frame.height,
            required: 2 * k,
        });
    }
    let pair = extract_subimages(frame)?;
    let origins = sample_origins(
        pair.sub0.width(),
        pair.sub0.height(),
        k,
        config.num_patches,
        config.seed,
    )?;
    let blurred0 = gaussian_blur(&pair.sub0, config.blur_sigma)?;
    let blurred1 = gaussian_blur(&pair.sub1, config.blur_sigma)?;

    let measures = origins
        .par_iter()
        .map(|&origin| {
            let patch = concat_patch(&pair, origin, k)?;
            let loss = 0.5 * (compute_patch_loss(origin, k, &blurred0)? + compute_patch_loss(origin, k, &blurred1)?);
            Ok(PatchMeasure {
                origin,
                alpha: compute_alpha(&patch)?,
                beta: compute_beta(&patch)?,
                loss,
                excluded: exposure_excluded(&patch, config),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    finish(config, PatchMode::Raw, factor, measures)
}
