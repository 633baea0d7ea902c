//! Image ingestion and report egress.
//!
//! RGB inputs are 8- or 16-bit PNG or baseline JPEG, normalized by their
//! full scale. Bayer frames travel as binary PGM (`P5`, big-endian 16-bit
//! samples when `maxval > 255`); the CFA layout and black level come from
//! the caller or from a one-line sidecar such as `cfa=RGGB black_level=512`.

use std::fs;
use std::io::Write;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, Rgb};
use serde::Serialize;

use crate::bayer::{BayerFrame, CfaPattern};
use crate::error::{Error, Result};
use crate::estimator::EstimateReport;
use crate::harness::{SweepResult, SweepRow};
use crate::types::RgbImage;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Decodes PNG or JPEG bytes into a normalized RGB image.
pub fn decode_rgb(bytes: &[u8]) -> Result<RgbImage> {
    let format = image::guess_format(bytes).map_err(|e| Error::Decode(e.to_string()))?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Jpeg) {
        return Err(Error::UnsupportedImage(format!(
            "{format:?} input, expected PNG or JPEG"
        )));
    }
    let decoded = image::load_from_memory_with_format(bytes, format).map_err(|e| Error::Decode(e.to_string()))?;
    dynamic_to_rgb(decoded)
}

fn dynamic_to_rgb(img: DynamicImage) -> Result<RgbImage> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let planar = |samples: Vec<f64>| -> Result<RgbImage> {
        let planes = std::array::from_fn(|c| samples.iter().skip(c).step_by(3).copied().collect());
        RgbImage::from_planes(w, h, planes)
    };
    match img {
        DynamicImage::ImageRgb8(buf) => planar(buf.into_raw().into_iter().map(|v| v as f64 / 255.0).collect()),
        DynamicImage::ImageRgb16(buf) => planar(buf.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect()),
        DynamicImage::ImageLuma8(_)
        | DynamicImage::ImageLumaA8(_)
        | DynamicImage::ImageLuma16(_)
        | DynamicImage::ImageLumaA16(_) => Err(Error::UnsupportedImage(
            "grayscale input; a color image is required".into(),
        )),
        other => Err(Error::UnsupportedImage(format!(
            "{:?} layout, expected 8- or 16-bit RGB",
            other.color()
        ))),
    }
}

pub fn load_rgb(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    decode_rgb(&read_file(path)?).map_err(|e| match e {
        Error::Decode(msg) => Error::Decode(format!("{}: {msg}", path.display())),
        Error::UnsupportedImage(msg) => Error::UnsupportedImage(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

/// Quantizes to the given depth (round to nearest) and writes a PNG.
pub fn save_rgb_png(image: &RgbImage, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    let (w, h) = (image.width() as u32, image.height() as u32);
    let n = image.width() * image.height();
    let encode_err = |e: image::ImageError| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Encode {
            path: path.into(),
            message: other.to_string(),
        },
    };
    match depth {
        BitDepth::Eight => {
            let raw = (0..n * 3)
                .map(|i| (image.plane(i % 3)[i / 3] * 255.0).round() as u8)
                .collect();
            let buf: ImageBuffer<Rgb<u8>, Vec<u8>> = ImageBuffer::from_raw(w, h, raw).expect("sized buffer");
            buf.save_with_format(path, ImageFormat::Png).map_err(encode_err)
        }
        BitDepth::Sixteen => {
            let raw = (0..n * 3)
                .map(|i| (image.plane(i % 3)[i / 3] * 65535.0).round() as u16)
                .collect();
            let buf: ImageBuffer<Rgb<u16>, Vec<u16>> = ImageBuffer::from_raw(w, h, raw).expect("sized buffer");
            buf.save_with_format(path, ImageFormat::Png).map_err(encode_err)
        }
    }
}

/// Raw contents of a binary graymap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PgmImage {
    pub width: usize,
    pub height: usize,
    pub max_value: u16,
    pub samples: Vec<u16>,
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_whitespace_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        let mut value: u32 = 0;
        while let Some(&b) = self.bytes.get(self.pos) {
            if !b.is_ascii_digit() {
                break;
            }
            value = value
                .checked_mul(10)
                .and_then(|v| v.checked_add((b - b'0') as u32))
                .ok_or_else(|| Error::MalformedPgm(format!("{what} overflows")))?;
            self.pos += 1;
        }
        if self.pos == start {
            return Err(Error::MalformedPgm(format!("missing {what}")));
        }
        Ok(value)
    }
}

/// Parses a binary (`P5`) PGM. Samples wider than a byte are big-endian.
pub fn parse_pgm(bytes: &[u8]) -> Result<PgmImage> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::MalformedPgm("missing P5 signature".into()));
    }
    let mut cur = HeaderCursor { bytes, pos: 2 };
    match bytes.get(2) {
        Some(b) if b.is_ascii_whitespace() || *b == b'#' => {}
        _ => return Err(Error::MalformedPgm("no whitespace after signature".into())),
    }
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let max_value = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedPgm(format!("empty image {width}x{height}")));
    }
    if max_value == 0 || max_value > 65535 {
        return Err(Error::MalformedPgm(format!("maxval {max_value} outside 1..=65535")));
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(Error::MalformedPgm("no whitespace before raster".into())),
    }

    let bytes_per_sample = if max_value > 255 { 2 } else { 1 };
    let count = width
        .checked_mul(height)
        .ok_or_else(|| Error::MalformedPgm("dimensions overflow".into()))?;
    let needed = count
        .checked_mul(bytes_per_sample)
        .ok_or_else(|| Error::MalformedPgm("dimensions overflow".into()))?;
    let raster = &bytes[cur.pos..];
    if raster.len() < needed {
        return Err(Error::MalformedPgm(format!(
            "raster holds {} bytes, {width}x{height} needs {needed}",
            raster.len()
        )));
    }
    let samples: Vec<u16> = if bytes_per_sample == 2 {
        raster[..needed]
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]))
            .collect()
    } else {
        raster[..needed].iter().map(|&b| b as u16).collect()
    };
    if let Some(s) = samples.iter().find(|&&s| s as u32 > max_value) {
        return Err(Error::MalformedPgm(format!("sample {s} exceeds maxval {max_value}")));
    }
    Ok(PgmImage {
        width,
        height,
        max_value: max_value as u16,
        samples,
    })
}

pub fn encode_pgm(pgm: &PgmImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{}\n", pgm.width, pgm.height, pgm.max_value).into_bytes();
    if pgm.max_value > 255 {
        for s in &pgm.samples {
            out.extend_from_slice(&s.to_be_bytes());
        }
    } else {
        out.extend(pgm.samples.iter().map(|&s| s as u8));
    }
    out
}

/// Maps raw samples to `(raw - black) / (max - black)`, clamped to `[0, 1]`.
pub fn frame_from_pgm(pgm: &PgmImage, pattern: CfaPattern, black_level: u32) -> Result<BayerFrame> {
    let max = pgm.max_value as u32;
    if max < 255 {
        return Err(Error::InvalidFrame(format!(
            "maxval {max} is below 255; a RAW carrier needs at least 8 bits"
        )));
    }
    if black_level >= max {
        return Err(Error::InvalidFrame(format!(
            "black level {black_level} must be below maxval {max}"
        )));
    }
    let range = (max - black_level) as f64;
    let plane = pgm
        .samples
        .iter()
        .map(|&s| ((s as f64 - black_level as f64) / range).clamp(0.0, 1.0))
        .collect();
    BayerFrame::new(pgm.width, pgm.height, plane, pattern, max, black_level)
}

pub fn decode_bayer(bytes: &[u8], pattern: CfaPattern, black_level: u32) -> Result<BayerFrame> {
    frame_from_pgm(&parse_pgm(bytes)?, pattern, black_level)
}

pub fn load_bayer(path: impl AsRef<Path>, pattern: CfaPattern, black_level: u32) -> Result<BayerFrame> {
    let path = path.as_ref();
    decode_bayer(&read_file(path)?, pattern, black_level).map_err(|e| match e {
        Error::MalformedPgm(msg) => Error::MalformedPgm(format!("{}: {msg}", path.display())),
        Error::InvalidFrame(msg) => Error::InvalidFrame(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Inverse of [`frame_from_pgm`] up to rounding.
pub fn frame_to_pgm(frame: &BayerFrame) -> PgmImage {
    let black = frame.black_level as f64;
    let range = (frame.max_value - frame.black_level) as f64;
    PgmImage {
        width: frame.width(),
        height: frame.height(),
        max_value: frame.max_value.min(65535) as u16,
        samples: frame
            .plane()
            .iter()
            .map(|v| (black + v * range).round() as u16)
            .collect(),
    }
}

pub fn save_bayer_pgm(frame: &BayerFrame, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_pgm(&frame_to_pgm(frame)))
}

/// CFA metadata accompanying a PGM frame.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Sidecar {
    pub pattern: Option<CfaPattern>,
    pub black_level: Option<u32>,
}

/// Parses whitespace-separated `key=value` tokens; `#` starts a comment.
/// Keys: `cfa` (or `pattern`) and `black_level` (or `black-level`).
pub fn parse_sidecar(text: &str) -> Result<Sidecar> {
    let mut out = Sidecar::default();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("");
        for token in line.split_whitespace() {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| Error::MalformedSidecar(format!("expected key=value, got {token:?}")))?;
            match key {
                "cfa" | "pattern" => {
                    let p = value
                        .parse()
                        .map_err(|_| Error::MalformedSidecar(format!("unknown CFA pattern {value:?}")))?;
                    if out.pattern.replace(p).is_some() {
                        return Err(Error::MalformedSidecar("cfa given twice".into()));
                    }
                }
                "black_level" | "black-level" => {
                    let b = value
                        .parse()
                        .map_err(|_| Error::MalformedSidecar(format!("bad black level {value:?}")))?;
                    if out.black_level.replace(b).is_some() {
                        return Err(Error::MalformedSidecar("black_level given twice".into()));
                    }
                }
                other => return Err(Error::MalformedSidecar(format!("unknown key {other:?}"))),
            }
        }
    }
    Ok(out)
}

impl Sidecar {
    pub fn to_line(&self) -> String {
        let mut parts = Vec::new();
        if let Some(p) = self.pattern {
            parts.push(format!("cfa={p}"));
        }
        if let Some(b) = self.black_level {
            parts.push(format!("black_level={b}"));
        }
        parts.join(" ") + "\n"
    }
}

pub fn load_sidecar(path: impl AsRef<Path>) -> Result<Sidecar> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_sidecar(&text).map_err(|e| match e {
        Error::MalformedSidecar(msg) => Error::MalformedSidecar(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn save_sidecar(sidecar: &Sidecar, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), sidecar.to_line().as_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy)]
pub enum Report<'a> {
    Estimate(&'a EstimateReport),
    Sweep(&'a SweepResult),
}

const SWEEP_HEADER: [&str; 9] = [
    "sigma_injected",
    "gamma",
    "patch_size",
    "num_patches",
    "blur_sigma",
    "seed",
    "estimate",
    "sigma_gt",
    "rel_error",
];

#[derive(Serialize)]
struct PatchRow {
    origin_row: usize,
    origin_col: usize,
    alpha: f64,
    beta: f64,
    sigma2: f64,
    loss: f64,
    weight: f64,
    excluded: crate::types::Exclusion,
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidParameter(format!("csv serialization: {e}"))
}

/// Sweep rows as CSV: one header row, then one row per grid point. Floats
/// use the shortest representation that round-trips exactly.
pub fn write_sweep_csv<W: Write>(result: &SweepResult, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(SWEEP_HEADER).map_err(csv_err)?;
    for row in &result.rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| csv_err(e.into()))
}

pub fn read_sweep_csv(text: &str) -> Result<SweepResult> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let rows = r
        .deserialize::<SweepRow>()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Decode(format!("sweep csv: {e}")))?;
    Ok(SweepResult { rows })
}

/// Per-patch diagnostics of an estimate as CSV.
pub fn write_patch_csv<W: Write>(report: &EstimateReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in &report.per_patch {
        w.serialize(PatchRow {
            origin_row: p.origin.0,
            origin_col: p.origin.1,
            alpha: p.alpha,
            beta: p.beta,
            sigma2: p.sigma2,
            loss: p.loss,
            weight: p.weight,
            excluded: p.excluded,
        })
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| csv_err(e.into()))
}

pub fn report_to_json(report: Report<'_>) -> String {
    let s = match report {
        Report::Estimate(r) => serde_json::to_string_pretty(r),
        Report::Sweep(r) => serde_json::to_string_pretty(r),
    };
    s.expect("reports contain only finite numbers") + "\n"
}

pub fn render_report(report: Report<'_>, format: OutputFormat) -> Result<Vec<u8>> {
    match format {
        OutputFormat::Json => Ok(report_to_json(report).into_bytes()),
        OutputFormat::Csv => {
            let mut buf = Vec::new();
            match report {
                Report::Estimate(r) => write_patch_csv(r, &mut buf)?,
                Report::Sweep(r) => write_sweep_csv(r, &mut buf)?,
            }
            Ok(buf)
        }
    }
}

pub fn write_report(report: Report<'_>, format: OutputFormat, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &render_report(report, format)?)
}

pub fn read_estimate_json(path: impl AsRef<Path>) -> Result<EstimateReport> {
    let path = path.as_ref();
    serde_json::from_slice(&read_file(path)?).map_err(|e| Error::Decode(format!("{}: {e}", path.display())))
}
