#![no_main]

use chroma_noise::io::decode_rgb;
use chroma_noise::{estimate_noise, EstimatorConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(image) = decode_rgb(data) {
        let cfg = EstimatorConfig {
            num_patches: 8,
            patch_size: 2,
            ..Default::default()
        };
        let _ = estimate_noise(&image, &cfg);
    }
});
