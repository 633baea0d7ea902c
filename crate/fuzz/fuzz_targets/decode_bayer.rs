#![no_main]

use chroma_noise::io::decode_bayer;
use chroma_noise::{estimate_noise_raw, CfaPattern, EstimatorConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&selector, rest)) = data.split_first() else {
        return;
    };
    let pattern = CfaPattern::ALL[(selector & 3) as usize];
    let black_level = u32::from(selector >> 2) * 64;
    if let Ok(frame) = decode_bayer(rest, pattern, black_level) {
        assert!(frame.plane().iter().all(|v| (0.0..=1.0).contains(v)));
        let cfg = EstimatorConfig {
            num_patches: 8,
            patch_size: 2,
            ..Default::default()
        };
        let _ = estimate_noise_raw(&frame, &cfg);
    }
});
