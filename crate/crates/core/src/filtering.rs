//! Separable Gaussian blur with mirror-reflected borders.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::types::RgbImage;

/// Normalized 1-D Gaussian taps truncated at `radius = ceil(3 * sigma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel {
    sigma: f64,
    radius: usize,
    taps: Vec<f64>,
}

impl GaussianKernel {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "blur sigma must be finite and > 0, got {sigma}"
            )));
        }
        let radius = (3.0 * sigma).ceil() as usize;
        let denom = 2.0 * sigma * sigma;
        let raw: Vec<f64> = (0..=2 * radius)
            .map(|i| {
                let x = i as f64 - radius as f64;
                (-x * x / denom).exp()
            })
            .collect();
        let total: f64 = raw.iter().sum();
        let taps = raw.into_iter().map(|t| t / total).collect();
        Ok(Self { sigma, radius, taps })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// `2 * radius + 1` taps, index `radius` is the center.
    pub fn taps(&self) -> &[f64] {
        &self.taps
    }
}

/// Maps a possibly out-of-range index onto `[0, n)` by half-sample symmetric
/// reflection (`... c b a | a b c ... x y z | z y x ...`), period `2n`.
#[inline]
pub fn reflect_index(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

/// Blurs one row-major plane with the separable kernel.
pub fn blur_plane(plane: &[f64], width: usize, height: usize, kernel: &GaussianKernel) -> Vec<f64> {
    assert_eq!(plane.len(), width * height, "plane size mismatch");
    let r = kernel.radius as isize;
    let taps = kernel.taps();

    let mut horizontal = vec![0.0; plane.len()];
    horizontal
        .par_chunks_mut(width)
        .zip(plane.par_chunks(width))
        .for_each(|(out, src)| {
            for (x, o) in out.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (j, &t) in taps.iter().enumerate() {
                    acc += t * src[reflect_index(x as isize + j as isize - r, width)];
                }
                *o = acc;
            }
        });

    let mut out = vec![0.0; plane.len()];
    out.par_chunks_mut(width).enumerate().for_each(|(y, row)| {
        for (j, &t) in taps.iter().enumerate() {
            let sy = reflect_index(y as isize + j as isize - r, height);
            let src = &horizontal[sy * width..(sy + 1) * width];
            for (o, s) in row.iter_mut().zip(src) {
                *o += t * s;
            }
        }
    });
    out
}

/// Blurs each channel independently with the same kernel.
pub fn gaussian_blur(image: &RgbImage, sigma: f64) -> Result<RgbImage> {
    let kernel = GaussianKernel::new(sigma)?;
    let (w, h) = (image.width(), image.height());
    let planes = std::array::from_fn(|c| blur_plane(image.plane(c), w, h, &kernel));
    Ok(RgbImage::from_planes_unchecked(w, h, planes))
}
