//! Acceptance suite. Each test checks one criterion and prints a single
//! `PASS`/`FAIL` line; run with `--nocapture` to see them.

use std::path::Path;
use std::process::Command;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use chroma_noise::bayer::extract_subimages;
use chroma_noise::estimator::{aggregate_weighted, compute_alpha, compute_beta, estimate_patch_sigma2};
use chroma_noise::filtering::gaussian_blur;
use chroma_noise::harness::{
    channel_mixing, degrade_bayer, degrade_gaussian, degrade_mixed, derive_seed, make_condition_c_scene,
    make_textured_scene, mosaic_scene, noise_correlation, run_sweep, SweepGrid, TexturedSceneParams,
};
use chroma_noise::types::sample_variance;
use chroma_noise::{
    estimate_noise_raw, BayerFrame, CfaPattern, EstimatorConfig, Exclusion, Patch, PatchMode, PatchStats, RgbImage,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

/// Serializes the timed criteria so their runtimes are not inflated by
/// each other.
static TIMED: Mutex<()> = Mutex::new(());

fn report(id: u32, pass: bool, detail: String) {
    println!("{} criterion {id}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {id} failed: {detail}");
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let _guard = TIMED.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (mean, (sample_variance(values).unwrap() / n).sqrt())
}

fn textured_stack_config() -> (RgbImage, f64) {
    (
        make_textured_scene(512, 512, 1, &TexturedSceneParams::default()).unwrap(),
        0.0485,
    )
}

#[test]
fn criterion_1_condition_c_sweep() {
    let sigmas = vec![0.01, 0.02, 0.04, 0.06, 0.08, 0.10, 0.12];
    let (result, elapsed) = timed(|| {
        let scene = make_condition_c_scene(1024, 1024, 1).unwrap();
        let grid = SweepGrid {
            sigmas: sigmas.clone(),
            gammas: vec![2.0],
            patch_sizes: vec![5],
        };
        run_sweep(&scene, &grid, &EstimatorConfig::default(), 10, 7).unwrap()
    });
    let worst = result.rows.iter().map(|r| r.rel_error.unwrap()).fold(0.0, f64::max);
    let points: Vec<String> = result
        .rows
        .iter()
        .map(|r| format!("{}:{:.5}/{:.5}", r.sigma_injected, r.estimate, r.sigma_gt))
        .collect();
    report(
        1,
        result.rows.len() == sigmas.len() && worst <= 0.05 && elapsed <= Duration::from_secs(30),
        format!(
            "worst rel error {worst:.4} (<= 0.05), {:.1}s (<= 30s) [{}]",
            elapsed.as_secs_f64(),
            points.join(" ")
        ),
    );
}

#[test]
fn criterion_2_textured_error_magnitude() {
    let (scene, sigma) = textured_stack_config();
    let grid = SweepGrid {
        sigmas: vec![sigma],
        gammas: vec![2.0],
        patch_sizes: vec![5],
    };
    let row = run_sweep(&scene, &grid, &EstimatorConfig::default(), 10, 3)
        .unwrap()
        .rows[0]
        .clone();
    let err = (row.estimate - row.sigma_gt).abs();
    report(
        2,
        err <= 0.002,
        format!(
            "sigma_gt {:.5}, estimate {:.5}, abs error {err:.5} (<= 0.002)",
            row.sigma_gt, row.estimate
        ),
    );
}

#[test]
fn criterion_3_unbiased_under_condition_c() {
    let sigma: f64 = 0.05;
    let (vals, elapsed) = timed(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let normal = Normal::new(0.0, sigma).unwrap();
        (0..20_000)
            .map(|_| {
                let texture: Vec<f64> = (0..25).map(|_| rng.random_range(0.2..0.8)).collect();
                let offsets: [f64; 3] = std::array::from_fn(|_| rng.random_range(-0.1..0.1));
                let channels = std::array::from_fn(|c| {
                    texture
                        .iter()
                        .map(|t| t + offsets[c] + normal.sample(&mut rng))
                        .collect()
                });
                estimate_patch_sigma2(&Patch::from_channels((0, 0), 5, channels).unwrap(), PatchMode::Rgb).unwrap()
            })
            .collect::<Vec<f64>>()
    });
    let (mean, se) = mean_se(&vals);
    let dev = (mean - sigma * sigma).abs();
    report(
        3,
        dev <= 3.0 * se && elapsed <= Duration::from_secs(10),
        format!(
            "{} patches, mean {mean:.6e} vs 2.5e-3, |dev| {dev:.2e} <= 3 SE {:.2e}, {:.2}s (<= 10s)",
            vals.len(),
            3.0 * se,
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_4_overestimation_inequality() {
    let sigma: f64 = 0.05;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut noisy = Vec::new();
    let mut min_clean = f64::INFINITY;
    for _ in 0..5_000 {
        // Shared texture with per-channel gains plus an independent texture
        // per channel: condition C does not hold.
        let shared: Vec<f64> = (0..25).map(|_| rng.random_range(-0.2..0.2)).collect();
        let gains: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..2.0));
        let own: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..0.1));
        let clean: [Vec<f64>; 3] = std::array::from_fn(|c| {
            shared
                .iter()
                .map(|s| 0.5 + gains[c] * s + own[c] * rng.random_range(-1.0..1.0))
                .collect()
        });
        let with_noise = std::array::from_fn(|c| {
            clean[c]
                .iter()
                .map(|v| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    v + sigma * z
                })
                .collect::<Vec<f64>>()
        });
        let c = estimate_patch_sigma2(&Patch::from_channels((0, 0), 5, clean).unwrap(), PatchMode::Rgb).unwrap();
        min_clean = min_clean.min(c);
        noisy.push(
            estimate_patch_sigma2(&Patch::from_channels((0, 0), 5, with_noise).unwrap(), PatchMode::Rgb).unwrap(),
        );
    }
    let (mean, se) = mean_se(&noisy);
    report(
        4,
        mean >= sigma * sigma - 3.0 * se && min_clean >= -1e-12,
        format!(
            "{} textures, mean {mean:.4e} >= 2.5e-3 - 3 SE ({:.4e}), min noise-free {min_clean:.3e} >= -1e-12",
            noisy.len(),
            sigma * sigma - 3.0 * se
        ),
    );
}

#[test]
fn criterion_5_gamma_patch_size_study() {
    let (result, elapsed) = timed(|| {
        let (scene, sigma) = textured_stack_config();
        let grid = SweepGrid {
            sigmas: vec![sigma],
            gammas: vec![0.0, 2.0],
            patch_sizes: vec![2, 5, 10, 15, 20],
        };
        run_sweep(&scene, &grid, &EstimatorConfig::default(), 10, 5).unwrap()
    });
    let series = |gamma: f64| -> Vec<f64> {
        result
            .rows
            .iter()
            .filter(|r| r.gamma == gamma)
            .map(|r| r.estimate)
            .collect()
    };
    let range = |v: &[f64]| v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min);
    let (g0, g2) = (series(0.0), series(2.0));
    let (r0, r2) = (range(&g0), range(&g2));
    report(
        5,
        r2 < r0 && g0[4] > g2[4] && elapsed <= Duration::from_secs(60),
        format!(
            "range gamma=2 {r2:.5} < gamma=0 {r0:.5}; k=20: gamma=0 {:.5} > gamma=2 {:.5}; {:.1}s (<= 60s)",
            g0[4],
            g2[4],
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_6_raw_factor() {
    let scene = make_condition_c_scene(1024, 1024, 6).unwrap();
    let clean = mosaic_scene(&scene, CfaPattern::Rggb).unwrap();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (i, sigma) in [0.02, 0.05, 0.10].into_iter().enumerate() {
        let noisy = degrade_bayer(&clean, sigma, derive_seed(6, i as u64)).unwrap();
        let est = estimate_noise_raw(&noisy, &EstimatorConfig::default()).unwrap().sigma;
        worst = worst.max((est - sigma).abs() / sigma);
        parts.push(format!("{sigma}:{est:.5}"));
    }

    // Interpolated R/B variance on a flat noisy frame. Every other interior
    // site uses a disjoint photosite pair, so those samples are independent.
    let sigma: f64 = 0.05;
    let (w, h) = (2048, 2048);
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let normal = Normal::new(0.5, sigma).unwrap();
    let frame = BayerFrame::new(
        w,
        h,
        (0..w * h).map(|_| normal.sample(&mut rng)).collect(),
        CfaPattern::Rggb,
        65535,
        0,
    )
    .unwrap();
    let pair = extract_subimages(&frame).unwrap();
    let expected = sigma * sigma / 2.0;
    let mut var_ok = true;
    for (img, name) in [(&pair.sub0, "sub0"), (&pair.sub1, "sub1")] {
        // sub0 interpolates R horizontally and B vertically; sub1 the reverse.
        let (horizontal, vertical) = if name == "sub0" { (0, 2) } else { (2, 0) };
        for (c, along_x) in [(horizontal, true), (vertical, false)] {
            let mut v = Vec::new();
            for y in 1..h / 2 - 1 {
                for x in 1..w / 2 - 1 {
                    if (along_x && x % 2 == 0) || (!along_x && y % 2 == 0) {
                        v.push(img.get(c, y, x));
                    }
                }
            }
            let var = sample_variance(&v).unwrap();
            let se = expected * (2.0 / (v.len() as f64 - 1.0)).sqrt();
            var_ok &= (var - expected).abs() <= 3.0 * se;
            parts.push(format!("{name}/{c}: {var:.4e}"));
        }
    }
    report(
        6,
        worst <= 0.05 && var_ok,
        format!(
            "worst rel error {worst:.4} (<= 0.05), R/B variance vs {expected:.4e} within 3 SE: {var_ok} [{}]",
            parts.join(" ")
        ),
    );
}

#[test]
fn criterion_7_noise_correlation() {
    let reference = make_condition_c_scene(1000, 1000, 7).unwrap();
    let sigma = 0.02;
    let indep = noise_correlation(&degrade_gaussian(&reference, sigma, 71).unwrap(), &reference).unwrap();
    let shared = noise_correlation(
        &degrade_mixed(&reference, sigma, channel_mixing(1.0), 72).unwrap(),
        &reference,
    )
    .unwrap();
    let half = noise_correlation(
        &degrade_mixed(&reference, sigma, channel_mixing(0.5), 73).unwrap(),
        &reference,
    )
    .unwrap();

    // M = a I + b J with a = 1 - m, b = m / 3 gives M M^T = a^2 I + (2ab + 3b^2) J.
    let (a, b) = (0.5, 0.5 / 3.0);
    let off = 2.0 * a * b + 3.0 * b * b;
    let closed = off / (a * a + off);

    let ok = indep.iter().all(|r| r.abs() <= 0.005)
        && shared.iter().all(|r| (r - 1.0).abs() <= 1e-9)
        && half.iter().all(|r| (r - closed).abs() <= 0.01);
    report(
        7,
        ok,
        format!("independent {indep:.4?} (|r| <= 0.005), shared {shared:.10?} (1 +- 1e-9), 50% mix {half:.4?} vs {closed:.4}"),
    );
}

/// Direct 2-D convolution with a sampled Gaussian and mirrored borders.
fn direct_blur(plane: &[f64], n: usize, sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let g: Vec<f64> = (-r..=r)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    let mirror = |i: isize| -> usize {
        let p = 2 * n as isize;
        let m = i.rem_euclid(p);
        if m < n as isize {
            m as usize
        } else {
            (p - 1 - m) as usize
        }
    };
    let mut out = vec![0.0; n * n];
    for y in 0..n {
        for x in 0..n {
            let mut acc = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let w = g[(dy + r) as usize] * g[(dx + r) as usize] / (s * s);
                    acc += w * plane[mirror(y as isize + dy) * n + mirror(x as isize + dx)];
                }
            }
            out[y * n + x] = acc;
        }
    }
    out
}

#[test]
fn criterion_8_numerical_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 16;
    let img = RgbImage::from_fn(n, n, |_, _, _| rng.random::<f64>()).unwrap();
    let mut blur_err: f64 = 0.0;
    for sigma in [0.8, 2.0, 5.0] {
        let fast = gaussian_blur(&img, sigma).unwrap();
        for c in 0..3 {
            let slow = direct_blur(img.plane(c), n, sigma);
            for (a, b) in fast.plane(c).iter().zip(&slow) {
                blur_err = blur_err.max((a - b).abs());
            }
        }
    }

    // 2x2 patch: R = [0.1, 0.2, 0.3, 0.4], G = [0.5, 0.5, 0.5, 0.9],
    // B = [0.0, 0.2, 0.0, 0.2].
    // var R = 1/60, var G = 0.04, var B = 1/75; alpha = 0.0233333...
    // mean image = [0.2, 0.3, 0.26667, 0.5]: var = 0.0171851851...
    let patch = Patch::from_channels(
        (0, 0),
        2,
        [
            vec![0.1, 0.2, 0.3, 0.4],
            vec![0.5, 0.5, 0.5, 0.9],
            vec![0.0, 0.2, 0.0, 0.2],
        ],
    )
    .unwrap();
    let alpha_exp = (1.0 / 60.0 + 0.04 + 1.0 / 75.0) / 3.0;
    let m = [0.6 / 3.0, 0.9 / 3.0, 0.8 / 3.0, 1.5 / 3.0];
    let mm = m.iter().sum::<f64>() / 4.0;
    let beta_exp = m.iter().map(|v| (v - mm) * (v - mm)).sum::<f64>() / 3.0;
    let alpha_err = (compute_alpha(&patch).unwrap() - alpha_exp).abs();
    let beta_err = (compute_beta(&patch).unwrap() - beta_exp).abs();

    let stats = |sigma2: f64, weight: f64, excluded: Exclusion| PatchStats {
        origin: (0, 0),
        alpha: 0.0,
        beta: 0.0,
        sigma2,
        loss: 0.0,
        weight,
        excluded,
    };
    // (1 * 0.01 + 3 * 0.03) / 4 = 0.025; the excluded patch is ignored.
    let agg = aggregate_weighted(&[
        stats(0.01, 1.0, Exclusion::None),
        stats(0.03, 3.0, Exclusion::None),
        stats(9.0, 0.0, Exclusion::Overexposed),
    ])
    .unwrap();
    let agg_err = (agg - 0.025).abs();

    report(
        8,
        blur_err <= 1e-10 && alpha_err <= 1e-12 && beta_err <= 1e-12 && agg_err <= 1e-12,
        format!("blur max diff {blur_err:.2e}, alpha err {alpha_err:.1e}, beta err {beta_err:.1e}, aggregate err {agg_err:.1e}"),
    );
}

fn cli(threads: &str, args: &[&str]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_chroma-noise"))
        .env_remove("CHROMA_NOISE_THREADS")
        .arg("--threads")
        .arg(threads)
        .args(args)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

/// Runs a subcommand and returns its stdout followed by the bytes of every
/// file it wrote.
fn capture(threads: &str, args: &[&str], outputs: &[&Path]) -> Vec<u8> {
    for p in outputs {
        let _ = std::fs::remove_file(p);
    }
    let mut bytes = cli(threads, args);
    for p in outputs {
        bytes.extend(std::fs::read(p).unwrap());
    }
    bytes
}

#[test]
fn criterion_9_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name);
    let s = |p: &Path| p.to_str().unwrap().to_owned();
    let (scene, noisy, noisy2, mixed, pgm, side, json, csv, scene_out) = (
        path("scene.png"),
        path("noisy.png"),
        path("noisy2.png"),
        path("mixed.png"),
        path("frame.pgm"),
        path("frame.txt"),
        path("report.json"),
        path("sweep.csv"),
        path("scene_out.png"),
    );

    // Inputs shared by the subcommands under test.
    cli(
        "1",
        &[
            "make-scene",
            "--kind",
            "textured",
            "--width",
            "192",
            "--height",
            "160",
            "--output",
            &s(&scene),
        ],
    );
    cli(
        "1",
        &[
            "degrade",
            "--input",
            &s(&scene),
            "--sigma",
            "0.04",
            "--seed",
            "1",
            "--output",
            &s(&noisy),
        ],
    );
    cli(
        "1",
        &[
            "degrade",
            "--input",
            &s(&scene),
            "--sigma",
            "0.04",
            "--seed",
            "2",
            "--output",
            &s(&noisy2),
        ],
    );
    cli(
        "1",
        &[
            "make-scene",
            "--width",
            "256",
            "--height",
            "256",
            "--cfa",
            "RGGB",
            "--sigma",
            "0.03",
            "--sidecar",
            &s(&side),
            "--output",
            &s(&pgm),
        ],
    );

    let cases: Vec<(&str, Vec<String>, Vec<&Path>)> = vec![
        (
            "estimate",
            vec![
                "estimate".into(),
                "--input".into(),
                s(&noisy),
                "--output".into(),
                s(&json),
            ],
            vec![&json],
        ),
        (
            "estimate json",
            vec![
                "estimate".into(),
                "--input".into(),
                s(&noisy),
                "--format".into(),
                "json".into(),
            ],
            vec![],
        ),
        (
            "estimate-raw",
            vec![
                "estimate-raw".into(),
                "--input".into(),
                s(&pgm),
                "--sidecar".into(),
                s(&side),
            ],
            vec![],
        ),
        (
            "degrade",
            vec![
                "degrade".into(),
                "--input".into(),
                s(&scene),
                "--sigma".into(),
                "0.05".into(),
                "--channel-mix".into(),
                "0.5".into(),
                "--seed".into(),
                "9".into(),
                "--output".into(),
                s(&mixed),
            ],
            vec![&mixed],
        ),
        (
            "ground-truth",
            vec!["ground-truth".into(), "--stack".into(), s(&noisy), s(&noisy2)],
            vec![],
        ),
        (
            "noise-corr",
            vec![
                "noise-corr".into(),
                "--noisy".into(),
                s(&noisy),
                "--reference".into(),
                s(&scene),
            ],
            vec![],
        ),
        (
            "sweep",
            vec![
                "sweep".into(),
                "--scene".into(),
                "textured".into(),
                "--width".into(),
                "128".into(),
                "--height".into(),
                "128".into(),
                "--sigmas".into(),
                "0.02,0.05".into(),
                "--gammas".into(),
                "0,2".into(),
                "--patch-sizes".into(),
                "5,10".into(),
                "--stack-size".into(),
                "3".into(),
                "--output".into(),
                s(&csv),
            ],
            vec![&csv],
        ),
        (
            "make-scene",
            vec![
                "make-scene".into(),
                "--width".into(),
                "96".into(),
                "--height".into(),
                "64".into(),
                "--sigma".into(),
                "0.02".into(),
                "--output".into(),
                s(&scene_out),
            ],
            vec![&scene_out],
        ),
    ];

    let mut failed = Vec::new();
    for (name, args, outputs) in &cases {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let first = capture("1", &args, outputs);
        let again = capture("1", &args, outputs);
        let wide = capture("8", &args, outputs);
        if first != again || first != wide {
            failed.push(*name);
        }
    }
    report(
        9,
        failed.is_empty(),
        format!(
            "{} invocations byte-identical across runs and --threads 1/8; mismatches: {failed:?}",
            cases.len()
        ),
    );
}
