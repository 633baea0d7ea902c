use chroma_noise::harness::{
    degrade_bayer, derive_seed, make_condition_c_scene, make_textured_scene, mosaic_scene, TexturedSceneParams,
};
use chroma_noise::{estimate_noise_raw, CfaPattern, EstimatorConfig};

#[test]
fn recovers_injected_sigma_for_every_pattern() {
    let scene = make_condition_c_scene(512, 512, 11).unwrap();
    for (i, pattern) in CfaPattern::ALL.into_iter().enumerate() {
        let clean = mosaic_scene(&scene, pattern).unwrap();
        for (j, sigma) in [0.02, 0.05, 0.10].into_iter().enumerate() {
            let noisy = degrade_bayer(&clean, sigma, derive_seed(12, (4 * i + j) as u64)).unwrap();
            let est = estimate_noise_raw(&noisy, &EstimatorConfig::default()).unwrap().sigma;
            assert!((est - sigma).abs() / sigma <= 0.05, "{pattern} sigma {sigma}: {est}");
        }
    }
}

#[test]
fn noise_free_mosaic_is_near_zero() {
    let scene = make_condition_c_scene(256, 256, 13).unwrap();
    let clean = mosaic_scene(&scene, CfaPattern::Rggb).unwrap();
    let report = estimate_noise_raw(&clean, &EstimatorConfig::default()).unwrap();
    assert!(report.sigma < 5e-3, "{}", report.sigma);
}

#[test]
fn wrong_pattern_inflates_estimate_on_colored_scene() {
    let params = TexturedSceneParams::default();
    let scene = make_textured_scene(512, 512, 14, &params).unwrap();
    let clean = mosaic_scene(&scene, CfaPattern::Rggb).unwrap();
    let noisy = degrade_bayer(&clean, 0.03, 15).unwrap();
    let cfg = EstimatorConfig::default();
    let right = estimate_noise_raw(&noisy, &cfg).unwrap().sigma;
    let wrong = estimate_noise_raw(&noisy.clone().with_pattern(CfaPattern::Grbg), &cfg)
        .unwrap()
        .sigma;
    assert!((right - 0.03).abs() / 0.03 < 0.05, "{right}");
    assert!(wrong > 1.02 * right, "{wrong} vs {right}");
}

#[test]
fn swapping_red_and_blue_labels_is_invisible() {
    // The estimator is symmetric in the channels, so RGGB read as BGGR only
    // permutes R and B.
    let scene = make_textured_scene(256, 256, 16, &TexturedSceneParams::default()).unwrap();
    let noisy = degrade_bayer(&mosaic_scene(&scene, CfaPattern::Rggb).unwrap(), 0.03, 17).unwrap();
    let cfg = EstimatorConfig::default();
    let a = estimate_noise_raw(&noisy, &cfg).unwrap().sigma2;
    let b = estimate_noise_raw(&noisy.with_pattern(CfaPattern::Bggr), &cfg)
        .unwrap()
        .sigma2;
    assert!((a - b).abs() <= 1e-12 * a);
}
