use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use chroma_noise::harness::{self, ImageStack, SweepGrid, TexturedSceneParams};
use chroma_noise::io::{self, BitDepth, OutputFormat, Report, Sidecar};
use chroma_noise::types::DEFAULT_SEED;
use chroma_noise::{CfaPattern, Error, EstimateReport, EstimatorConfig, PatchMode, RgbImage};
use clap::{Args, Parser, Subcommand, ValueEnum};

const THREADS_ENV: &str = "CHROMA_NOISE_THREADS";

/// Single-image noise level estimation from inter-channel texture correlation.
#[derive(Debug, Parser)]
#[command(name = "chroma-noise", version)]
struct Cli {
    /// Worker threads (never changes results). Falls back to
    /// CHROMA_NOISE_THREADS, then to the number of CPUs.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate the noise level of an RGB PNG or JPEG.
    Estimate(EstimateArgs),
    /// Estimate the noise level of a Bayer frame stored as 16-bit PGM.
    EstimateRaw(EstimateRawArgs),
    /// Add Gaussian noise to an image.
    Degrade(DegradeArgs),
    /// Ground-truth noise level of a stack of static frames.
    GroundTruth(GroundTruthArgs),
    /// Correlation of noise between channel pairs.
    NoiseCorr(NoiseCorrArgs),
    /// Degrade a scene over a grid of noise levels and estimator settings.
    Sweep(SweepArgs),
    /// Generate a synthetic scene (optionally mosaicked to a Bayer PGM).
    MakeScene(MakeSceneArgs),
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Weight sharpness; 0 gives the unweighted mean.
    #[arg(long, default_value_t = 2.0)]
    gamma: f64,
    /// Patch side length k.
    #[arg(long, default_value_t = 5)]
    patch_size: usize,
    /// Number of sampled patches.
    #[arg(long, default_value_t = 1000)]
    num_patches: usize,
    /// Gaussian blur sigma used for the patch loss.
    #[arg(long, default_value_t = 5.0)]
    blur_sigma: f64,
    /// Patch sampling seed.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Patches with any sample at or below this are excluded.
    #[arg(long, default_value_t = 2.0 / 255.0)]
    exposure_low: f64,
    /// Patches with any sample at or above this are excluded.
    #[arg(long, default_value_t = 253.0 / 255.0)]
    exposure_high: f64,
}

impl ConfigArgs {
    fn config(&self) -> EstimatorConfig {
        EstimatorConfig {
            gamma: self.gamma,
            patch_size: self.patch_size,
            num_patches: self.num_patches,
            blur_sigma: self.blur_sigma,
            seed: self.seed,
            exposure_low: self.exposure_low,
            exposure_high: self.exposure_high,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReportFormat {
    Text,
    Json,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    format: ReportFormat,
    /// Write the full JSON report here.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EstimateRawArgs {
    #[arg(long)]
    input: PathBuf,
    /// CFA layout; overrides the sidecar.
    #[arg(long)]
    cfa: Option<CfaPattern>,
    /// Raw black level; overrides the sidecar. Default 0.
    #[arg(long)]
    black_level: Option<u32>,
    /// One-line `cfa=... black_level=...` metadata file.
    #[arg(long)]
    sidecar: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    format: ReportFormat,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Depth {
    #[value(name = "8")]
    Eight,
    #[value(name = "16")]
    Sixteen,
}

impl From<Depth> for BitDepth {
    fn from(d: Depth) -> Self {
        match d {
            Depth::Eight => BitDepth::Eight,
            Depth::Sixteen => BitDepth::Sixteen,
        }
    }
}

#[derive(Debug, Args)]
struct DegradeArgs {
    #[arg(long)]
    input: PathBuf,
    /// Noise standard deviation on the normalized scale.
    #[arg(long)]
    sigma: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Fraction of each channel's noise replaced by the channel mean.
    #[arg(long, default_value_t = 0.0)]
    channel_mix: f64,
    #[arg(long, value_enum, default_value_t = Depth::Sixteen)]
    bit_depth: Depth,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct GroundTruthArgs {
    /// Two or more frames of the same static scene.
    #[arg(long, num_args = 2.., required = true)]
    stack: Vec<PathBuf>,
}

#[derive(Debug, Args)]
struct NoiseCorrArgs {
    #[arg(long)]
    noisy: PathBuf,
    /// Noise-free reference of the same scene.
    #[arg(long)]
    reference: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SceneKind {
    /// Shared texture plus per-channel constants.
    ConditionC,
    /// Shared texture with colorful regions that break channel coupling.
    Textured,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Noise-free scene. Without it a synthetic scene is generated.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SceneKind::ConditionC)]
    scene: SceneKind,
    #[arg(long, default_value_t = 512)]
    width: usize,
    #[arg(long, default_value_t = 512)]
    height: usize,
    #[arg(long, default_value_t = 1)]
    scene_seed: u64,
    #[arg(long, value_delimiter = ',', required = true)]
    sigmas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "2.0")]
    gammas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "5")]
    patch_sizes: Vec<usize>,
    /// Frames per ground-truth stack.
    #[arg(long, default_value_t = 10)]
    stack_size: usize,
    /// Degradation seed.
    #[arg(long, default_value_t = 1)]
    noise_seed: u64,
    #[arg(long, default_value_t = 1000)]
    num_patches: usize,
    #[arg(long, default_value_t = 5.0)]
    blur_sigma: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// CSV destination; standard output when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MakeSceneArgs {
    #[arg(long, value_enum, default_value_t = SceneKind::ConditionC)]
    kind: SceneKind,
    #[arg(long, default_value_t = 512)]
    width: usize,
    #[arg(long, default_value_t = 512)]
    height: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Mosaic with this CFA layout and write a 16-bit PGM.
    #[arg(long)]
    cfa: Option<CfaPattern>,
    /// Photosite (with --cfa) or per-sample noise added after generation.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 2)]
    noise_seed: u64,
    /// Write a sidecar with the CFA layout next to the PGM.
    #[arg(long, requires = "cfa")]
    sidecar: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
}

/// Exit codes: 0 success, 1 input or flag error, 2 estimation impossible,
/// 3 I/O error.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::NoUsablePatches(_) => 2,
        Error::Io { .. } | Error::Encode { .. } => 3,
        _ => 1,
    }
}

fn config_line(cfg: &EstimatorConfig) -> String {
    format!(
        "gamma={} patch_size={} num_patches={} blur_sigma={} seed={} exposure_low={} exposure_high={}",
        cfg.gamma, cfg.patch_size, cfg.num_patches, cfg.blur_sigma, cfg.seed, cfg.exposure_low, cfg.exposure_high
    )
}

fn emit_estimate(
    report: &EstimateReport,
    format: ReportFormat,
    output: Option<&PathBuf>,
    extra: &str,
) -> Result<String, Error> {
    if let Some(path) = output {
        io::write_report(Report::Estimate(report), OutputFormat::Json, path)?;
    }
    Ok(match format {
        ReportFormat::Text => format!(
            "sigma={} sigma2={} patches_used={} patches_excluded={} mode={} {}{}\n",
            report.sigma,
            report.sigma2,
            report.patches_used,
            report.patches_excluded,
            match report.mode {
                PatchMode::Rgb => "rgb",
                PatchMode::Raw => "raw",
            },
            config_line(&report.config),
            extra,
        ),
        ReportFormat::Json => io::report_to_json(Report::Estimate(report)),
    })
}

fn scene(kind: SceneKind, width: usize, height: usize, seed: u64) -> Result<RgbImage, Error> {
    match kind {
        SceneKind::ConditionC => harness::make_condition_c_scene(width, height, seed),
        SceneKind::Textured => harness::make_textured_scene(width, height, seed, &TexturedSceneParams::default()),
    }
}

fn run(command: Command) -> Result<String, Error> {
    match command {
        Command::Estimate(a) => {
            let image = io::load_rgb(&a.input)?;
            let report = chroma_noise::estimate_noise(&image, &a.config.config())?;
            emit_estimate(&report, a.format, a.output.as_ref(), "")
        }
        Command::EstimateRaw(a) => {
            let sidecar = match &a.sidecar {
                Some(p) => io::load_sidecar(p)?,
                None => Sidecar::default(),
            };
            let pattern = a.cfa.or(sidecar.pattern).ok_or_else(|| {
                Error::InvalidParameter("CFA layout required: pass --cfa or a sidecar with cfa=".into())
            })?;
            let black_level = a.black_level.or(sidecar.black_level).unwrap_or(0);
            let frame = io::load_bayer(&a.input, pattern, black_level)?;
            let report = chroma_noise::estimate_noise_raw(&frame, &a.config.config())?;
            let extra = format!(" cfa={pattern} black_level={black_level}");
            emit_estimate(&report, a.format, a.output.as_ref(), &extra)
        }
        Command::Degrade(a) => {
            let image = io::load_rgb(&a.input)?;
            if !(0.0..=1.0).contains(&a.channel_mix) {
                return Err(Error::InvalidParameter(format!(
                    "channel mix must lie in [0, 1], got {}",
                    a.channel_mix
                )));
            }
            let noisy = harness::degrade_mixed(&image, a.sigma, harness::channel_mixing(a.channel_mix), a.seed)?;
            io::save_rgb_png(&noisy, &a.output, a.bit_depth.into())?;
            Ok(format!(
                "wrote={} sigma={} seed={} channel_mix={}\n",
                a.output.display(),
                a.sigma,
                a.seed,
                a.channel_mix
            ))
        }
        Command::GroundTruth(a) => {
            let frames = a.stack.iter().map(io::load_rgb).collect::<Result<Vec<_>, _>>()?;
            let gt = harness::ground_truth_from_stack(&ImageStack::new(frames)?)?;
            Ok(format!("sigma_gt={gt} frames={}\n", a.stack.len()))
        }
        Command::NoiseCorr(a) => {
            let noisy = io::load_rgb(&a.noisy)?;
            let reference = io::load_rgb(&a.reference)?;
            let [rg, gb, br] = harness::noise_correlation(&noisy, &reference)?;
            Ok(format!("r_rg={rg} r_gb={gb} r_br={br}\n"))
        }
        Command::Sweep(a) => {
            let base = match &a.input {
                Some(p) => io::load_rgb(p)?,
                None => scene(a.scene, a.width, a.height, a.scene_seed)?,
            };
            let grid = SweepGrid {
                sigmas: a.sigmas,
                gammas: a.gammas,
                patch_sizes: a.patch_sizes,
            };
            let cfg = EstimatorConfig {
                num_patches: a.num_patches,
                blur_sigma: a.blur_sigma,
                seed: a.seed,
                ..Default::default()
            };
            let result = harness::run_sweep(&base, &grid, &cfg, a.stack_size, a.noise_seed)?;
            match &a.output {
                Some(path) => {
                    io::write_report(Report::Sweep(&result), OutputFormat::Csv, path)?;
                    let mut msg = format!(
                        "wrote={} rows={} stack_size={} noise_seed={} ",
                        path.display(),
                        result.rows.len(),
                        a.stack_size,
                        a.noise_seed
                    );
                    msg.push_str(&config_line(&cfg));
                    msg.push('\n');
                    Ok(msg)
                }
                None => {
                    let bytes = io::render_report(Report::Sweep(&result), OutputFormat::Csv)?;
                    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
                }
            }
        }
        Command::MakeScene(a) => {
            let image = scene(a.kind, a.width, a.height, a.seed)?;
            let mut msg = format!(
                "wrote={} kind={} width={} height={} seed={}",
                a.output.display(),
                a.kind.to_possible_value().expect("no skipped variants").get_name(),
                a.width,
                a.height,
                a.seed
            );
            match a.cfa {
                Some(pattern) => {
                    let frame = harness::mosaic_scene(&image, pattern)?;
                    let frame = harness::degrade_bayer(&frame, a.sigma, a.noise_seed)?;
                    io::save_bayer_pgm(&frame, &a.output)?;
                    if let Some(path) = &a.sidecar {
                        let sc = Sidecar {
                            pattern: Some(pattern),
                            black_level: Some(0),
                        };
                        io::save_sidecar(&sc, path)?;
                    }
                    let _ = write!(msg, " cfa={pattern}");
                }
                None => {
                    let image = harness::degrade_gaussian(&image, a.sigma, a.noise_seed)?;
                    io::save_rgb_png(&image, &a.output, BitDepth::Sixteen)?;
                }
            }
            let _ = writeln!(msg, " sigma={} noise_seed={}", a.sigma, a.noise_seed);
            Ok(msg)
        }
    }
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, Error> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::InvalidParameter(format!("{THREADS_ENV}={v:?} is not a thread count"))),
        Err(_) => Ok(None),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };

    let result = thread_count(cli.threads).and_then(|threads| {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = threads {
            if n == 0 {
                return Err(Error::InvalidParameter("thread count must be >= 1".into()));
            }
            builder = builder.num_threads(n);
        }
        let pool = builder
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
        pool.install(|| run(cli.command))
    });

    match result {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            if stdout.write_all(out.as_bytes()).and_then(|_| stdout.flush()).is_err() {
                return ExitCode::from(3);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
