//! Noise level estimation for a single color image from the correlation of
//! textures across the RGB channels.
//!
//! Natural textures are strongly correlated between channels while sensor
//! noise is not. Comparing the mean of the per-channel variances of a patch
//! with the variance of its channel-mean image isolates the noise variance
//! wherever the channel differences are locally constant. Patches where
//! they are not are down-weighted by a loss measured on a blurred copy of
//! the image.
//!
//! ```
//! use chroma_noise::{estimate_noise, harness, EstimatorConfig};
//!
//! let scene = harness::make_condition_c_scene(256, 256, 1).unwrap();
//! let noisy = harness::degrade_gaussian(&scene, 0.05, 2).unwrap();
//! let report = estimate_noise(&noisy, &EstimatorConfig::default()).unwrap();
//! assert!((report.sigma - 0.05).abs() < 0.005);
//! ```

pub mod bayer;
pub mod error;
pub mod estimator;
pub mod filtering;
pub mod harness;
pub mod io;
pub mod types;

pub use bayer::{estimate_noise_raw, extract_subimages, BayerFrame, CfaPattern, SubImagePair};
pub use error::{Error, Result};
pub use estimator::{estimate_noise, EstimateReport, PatchMode};
pub use filtering::gaussian_blur;
pub use types::{EstimatorConfig, Exclusion, Patch, PatchStats, RgbImage};
