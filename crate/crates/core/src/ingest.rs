//! Scenario bundles on disk.
//!
//! A bundle is a directory holding
//!
//! * `scenario.json` – ground truth, delivery target, parameter overrides;
//! * `trace.csv` – one row per frame: `frame,t`, 63 left-hand and 63
//!   right-hand coordinates (empty cells when the hand is not detected) and
//!   the container centroid pixel in each view (`u0,v0,u1,v1`, empty when
//!   occluded);
//! * `calib_0.txt`, `calib_1.txt` – a row-major 3×4 projection matrix
//!   followed by the image width and height;
//! * `mask_0.pgm`, `mask_1.pgm` – silhouettes of the container at the
//!   occlusion-free frame, PGM `P2` or `P5`;
//! * `estimates.csv` – `frame,view` and eight class probabilities.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use nalgebra::Matrix3x4;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{CameraProjection, Pixel, Point3};
use crate::params::{ParamError, ParameterSet};
use crate::perception::{ClassProbs, ContentClass, ContentType, KEYPOINTS};

pub const SCENARIO_FILE: &str = "scenario.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const ESTIMATES_FILE: &str = "estimates.csv";

pub fn calib_file(view: usize) -> String {
    format!("calib_{view}.txt")
}

pub fn mask_file(view: usize) -> String {
    format!("mask_{view}.pgm")
}

const HAND_COLUMNS: usize = KEYPOINTS * 3;
const TRACE_COLUMNS: usize = 2 + 2 * HAND_COLUMNS + 4;
const PROB_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing file {0}")]
    MissingFile(String),
    #[error("{file}:{line}: {message}")]
    SchemaViolation {
        file: String,
        line: usize,
        message: String,
    },
    #[error("{file}{}: {message}", .line.map(|l| format!(":{l}")).unwrap_or_default())]
    InvariantViolation {
        file: String,
        line: Option<usize>,
        message: String,
    },
    #[error("{file}: unsupported format: {message}")]
    UnsupportedFormat { file: String, message: String },
    #[error("{file}: truncated")]
    TruncatedFile { file: String },
    #[error("{file}: malformed calibration: {message}")]
    MalformedCalibration { file: String, message: String },
    #[error("{file}: {source}")]
    Io {
        file: String,
        #[source]
        source: io::Error,
    },
    #[error("{file}: {source}")]
    Params {
        file: String,
        #[source]
        source: ParamError,
    },
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, IngestError> {
    fs::read(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => IngestError::MissingFile(file_name(path)),
        _ => IngestError::Io {
            file: file_name(path),
            source: e,
        },
    })
}

fn read_text(path: &Path) -> Result<String, IngestError> {
    let bytes = read_bytes(path)?;
    String::from_utf8(bytes).map_err(|_| IngestError::UnsupportedFormat {
        file: file_name(path),
        message: "not UTF-8 text".into(),
    })
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), IngestError> {
    fs::write(path, contents).map_err(|e| IngestError::Io {
        file: file_name(path),
        source: e,
    })
}

/// Binary occupancy image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SilhouetteMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl SilhouetteMask {
    pub fn new(width: u32, height: u32, bits: Vec<bool>) -> Self {
        assert_eq!(
            bits.len(),
            width as usize * height as usize,
            "mask size mismatch"
        );
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn empty(width: u32, height: u32) -> Self {
        Self::new(width, height, vec![false; width as usize * height as usize])
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        x < self.width && y < self.height && self.bits[(y * self.width + x) as usize]
    }

    /// Occupancy of the pixel containing `p`; outside the image is empty.
    pub fn contains(&self, p: &Pixel) -> bool {
        if !(p.x >= 0.0 && p.y >= 0.0) {
            return false;
        }
        let (x, y) = (p.x.floor(), p.y.floor());
        x < self.width as f64 && y < self.height as f64 && self.get(x as u32, y as u32)
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Longest horizontal run of occupied pixels.
    pub fn widest_run(&self) -> u32 {
        let mut best = 0;
        for row in self.bits.chunks(self.width as usize) {
            let mut run = 0;
            for &b in row {
                run = if b { run + 1 } else { 0 };
                best = best.max(run);
            }
        }
        best
    }

    /// Mean of occupied pixel centres.
    pub fn centroid(&self) -> Option<Pixel> {
        let mut sum = Pixel::zeros();
        let mut n = 0usize;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    sum += Pixel::new(x as f64 + 0.5, y as f64 + 0.5);
                    n += 1;
                }
            }
        }
        (n > 0).then(|| sum / n as f64)
    }

    /// Binary `P5` encoding with occupied pixels at 255.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.bits.iter().map(|&b| if b { 255u8 } else { 0 }));
        out
    }
}

struct PgmCursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> PgmCursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.data.len() {
            let c = self.data[self.pos];
            if c == b'#' {
                while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Option<&'a [u8]> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.data.len()
            && !self.data[self.pos].is_ascii_whitespace()
            && self.data[self.pos] != b'#'
        {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.data[start..self.pos])
    }

    fn number(&mut self) -> Option<Result<u32, ()>> {
        self.token().map(|t| {
            std::str::from_utf8(t)
                .ok()
                .and_then(|s| s.parse().ok())
                .ok_or(())
        })
    }
}

/// Decodes a PGM image; values above 127 are occupied.
pub fn parse_mask_bytes(data: &[u8], file: &str) -> Result<SilhouetteMask, IngestError> {
    let unsupported = |m: &str| IngestError::UnsupportedFormat {
        file: file.to_string(),
        message: m.to_string(),
    };
    let truncated = || IngestError::TruncatedFile {
        file: file.to_string(),
    };
    let mut cur = PgmCursor { data, pos: 0 };
    let binary = match cur.token() {
        Some(b"P5") => true,
        Some(b"P2") => false,
        Some(_) => return Err(unsupported("expected magic P2 or P5")),
        None => return Err(truncated()),
    };
    let mut header = [0u32; 3];
    for h in header.iter_mut() {
        *h = match cur.number() {
            Some(Ok(v)) => v,
            Some(Err(())) => return Err(unsupported("non-numeric header field")),
            None => return Err(truncated()),
        };
    }
    let [width, height, maxval] = header;
    if width == 0 || height == 0 {
        return Err(unsupported("zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(unsupported("maxval must lie in 1..=65535"));
    }
    let n = width as usize * height as usize;
    let mut bits = Vec::with_capacity(n);
    if binary {
        // Exactly one whitespace byte separates the header from the raster.
        let start = cur.pos + 1;
        let wide = maxval > 255;
        let need = if wide { 2 * n } else { n };
        if start > data.len() || data.len() - start < need {
            return Err(truncated());
        }
        let raster = &data[start..start + need];
        if wide {
            bits.extend(
                raster
                    .chunks(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]) > 127),
            );
        } else {
            bits.extend(raster.iter().map(|&v| v > 127));
        }
    } else {
        for _ in 0..n {
            match cur.number() {
                Some(Ok(v)) => bits.push(v > 127),
                Some(Err(())) => return Err(unsupported("non-numeric pixel value")),
                None => return Err(truncated()),
            }
        }
    }
    Ok(SilhouetteMask::new(width, height, bits))
}

pub fn parse_mask(path: &Path) -> Result<SilhouetteMask, IngestError> {
    parse_mask_bytes(&read_bytes(path)?, &file_name(path))
}

pub fn write_mask(path: &Path, mask: &SilhouetteMask) -> Result<(), IngestError> {
    write_file(path, &mask.to_pgm())
}

pub fn parse_calibration_str(text: &str, file: &str) -> Result<CameraProjection, IngestError> {
    let malformed = |m: String| IngestError::MalformedCalibration {
        file: file.to_string(),
        message: m,
    };
    let tokens: Vec<&str> = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace)
        .collect();
    if tokens.len() != 14 {
        return Err(malformed(format!(
            "expected 12 reals and 2 integers, found {} values",
            tokens.len()
        )));
    }
    let mut m = [0.0f64; 12];
    for (v, t) in m.iter_mut().zip(&tokens[..12]) {
        *v = t
            .parse()
            .map_err(|_| malformed(format!("`{t}` is not a real number")))?;
        if !v.is_finite() {
            return Err(malformed(format!("`{t}` is not finite")));
        }
    }
    let dim = |t: &str| {
        t.parse::<u32>()
            .map_err(|_| malformed(format!("`{t}` is not an image dimension")))
    };
    let (w, h) = (dim(tokens[12])?, dim(tokens[13])?);
    CameraProjection::new(Matrix3x4::from_row_slice(&m), w, h).map_err(|e| malformed(e.to_string()))
}

pub fn parse_calibration(path: &Path) -> Result<CameraProjection, IngestError> {
    parse_calibration_str(&read_text(path)?, &file_name(path))
}

pub fn format_calibration(cam: &CameraProjection) -> String {
    let mut out = String::new();
    for r in 0..3 {
        let row: Vec<String> = (0..4)
            .map(|c| format!("{}", cam.matrix()[(r, c)]))
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    let _ = writeln!(out, "{} {}", cam.width(), cam.height());
    out
}

pub fn write_calibration(path: &Path, cam: &CameraProjection) -> Result<(), IngestError> {
    write_file(path, format_calibration(cam).as_bytes())
}

/// One recorded frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceFrame {
    pub frame_index: u64,
    pub timestamp: f64,
    pub left_hand: Option<[Point3; KEYPOINTS]>,
    pub right_hand: Option<[Point3; KEYPOINTS]>,
    /// Container centroid pixel per view; `None` when occluded.
    pub centroid_px: [Option<Pixel>; 2],
}

impl TraceFrame {
    pub fn hands(&self) -> impl Iterator<Item = &[Point3; KEYPOINTS]> {
        self.left_hand.iter().chain(self.right_hand.iter())
    }
}

fn schema(file: &str, line: usize, message: impl Into<String>) -> IngestError {
    IngestError::SchemaViolation {
        file: file.to_string(),
        line,
        message: message.into(),
    }
}

fn parse_cell(cell: &str, file: &str, line: usize, col: usize) -> Result<Option<f64>, IngestError> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    let v: f64 = cell.parse().map_err(|_| {
        schema(
            file,
            line,
            format!("column {}: `{cell}` is not a number", col + 1),
        )
    })?;
    if !v.is_finite() {
        return Err(schema(
            file,
            line,
            format!("column {}: value is not finite", col + 1),
        ));
    }
    Ok(Some(v))
}

fn parse_hand(
    cells: &[Option<f64>],
    file: &str,
    line: usize,
    side: &str,
) -> Result<Option<[Point3; KEYPOINTS]>, IngestError> {
    let present = cells.iter().filter(|c| c.is_some()).count();
    if present == 0 {
        return Ok(None);
    }
    if present != cells.len() {
        return Err(schema(
            file,
            line,
            format!("{side} hand has {present} of {HAND_COLUMNS} coordinates; a detected hand needs all {KEYPOINTS} keypoints"),
        ));
    }
    let mut kp = [Point3::zeros(); KEYPOINTS];
    for (i, p) in kp.iter_mut().enumerate() {
        *p = Point3::new(
            cells[3 * i].unwrap_or_default(),
            cells[3 * i + 1].unwrap_or_default(),
            cells[3 * i + 2].unwrap_or_default(),
        );
    }
    Ok(Some(kp))
}

fn parse_pixel(
    u: Option<f64>,
    v: Option<f64>,
    file: &str,
    line: usize,
) -> Result<Option<Pixel>, IngestError> {
    match (u, v) {
        (Some(u), Some(v)) => Ok(Some(Pixel::new(u, v))),
        (None, None) => Ok(None),
        _ => Err(schema(file, line, "centroid pixel needs both u and v")),
    }
}

pub fn trace_header() -> String {
    let mut cols = vec!["frame".to_string(), "t".to_string()];
    for side in ["L", "R"] {
        for i in 0..KEYPOINTS {
            for axis in ["x", "y", "z"] {
                cols.push(format!("{side}_{axis}{i}"));
            }
        }
    }
    cols.extend(["u0", "v0", "u1", "v1"].map(String::from));
    cols.join(",")
}

pub fn parse_trace_str(text: &str, file: &str) -> Result<Vec<TraceFrame>, IngestError> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, header)) if header.split(',').next().map(str::trim) == Some("frame") => {
            if header.split(',').count() != TRACE_COLUMNS {
                return Err(schema(
                    file,
                    1,
                    format!("header must have {TRACE_COLUMNS} columns"),
                ));
            }
        }
        Some((i, _)) => {
            return Err(schema(
                file,
                i + 1,
                "missing header row starting with `frame`",
            ))
        }
        None => return Err(schema(file, 1, "empty trace")),
    }
    let mut frames: Vec<TraceFrame> = Vec::new();
    for (i, raw) in lines {
        let line = i + 1;
        let cells: Vec<&str> = raw.split(',').collect();
        if cells.len() != TRACE_COLUMNS {
            return Err(schema(
                file,
                line,
                format!("expected {TRACE_COLUMNS} columns, found {}", cells.len()),
            ));
        }
        let frame_index: u64 = cells[0].trim().parse().map_err(|_| {
            schema(
                file,
                line,
                format!("frame `{}` is not an integer", cells[0]),
            )
        })?;
        let timestamp = parse_cell(cells[1], file, line, 1)?
            .ok_or_else(|| schema(file, line, "missing timestamp"))?;
        let values = cells[2..]
            .iter()
            .enumerate()
            .map(|(c, cell)| parse_cell(cell, file, line, c + 2))
            .collect::<Result<Vec<_>, _>>()?;
        let left_hand = parse_hand(&values[..HAND_COLUMNS], file, line, "left")?;
        let right_hand = parse_hand(&values[HAND_COLUMNS..2 * HAND_COLUMNS], file, line, "right")?;
        let px = &values[2 * HAND_COLUMNS..];
        let centroid_px = [
            parse_pixel(px[0], px[1], file, line)?,
            parse_pixel(px[2], px[3], file, line)?,
        ];
        if let Some(prev) = frames.last() {
            if timestamp <= prev.timestamp {
                return Err(IngestError::InvariantViolation {
                    file: file.to_string(),
                    line: Some(line),
                    message: format!(
                        "timestamp {timestamp} does not increase (previous {})",
                        prev.timestamp
                    ),
                });
            }
            if frame_index <= prev.frame_index {
                return Err(IngestError::InvariantViolation {
                    file: file.to_string(),
                    line: Some(line),
                    message: format!("frame index {frame_index} does not increase"),
                });
            }
        }
        frames.push(TraceFrame {
            frame_index,
            timestamp,
            left_hand,
            right_hand,
            centroid_px,
        });
    }
    if frames.is_empty() {
        return Err(IngestError::InvariantViolation {
            file: file.to_string(),
            line: None,
            message: "trace has no frames".into(),
        });
    }
    Ok(frames)
}

pub fn format_trace(frames: &[TraceFrame]) -> String {
    let mut out = trace_header();
    out.push('\n');
    for f in frames {
        let _ = write!(out, "{},{}", f.frame_index, f.timestamp);
        for hand in [&f.left_hand, &f.right_hand] {
            match hand {
                Some(kp) => {
                    for p in kp {
                        let _ = write!(out, ",{},{},{}", p.x, p.y, p.z);
                    }
                }
                None => out.push_str(&",".repeat(HAND_COLUMNS)),
            }
        }
        for px in &f.centroid_px {
            match px {
                Some(p) => {
                    let _ = write!(out, ",{},{}", p.x, p.y);
                }
                None => out.push_str(",,"),
            }
        }
        out.push('\n');
    }
    out
}

/// Per-frame class probabilities from both views; `None` when a frame has no estimate.
pub type EstimateStream = Vec<Option<[ClassProbs; 2]>>;

pub fn estimates_header() -> String {
    let mut cols = vec!["frame", "view"];
    cols.extend(ContentClass::ALL.iter().map(|c| c.label()));
    cols.join(",")
}

/// Parses `estimates.csv`, aligning rows to the trace's frame indices.
pub fn parse_estimates_str(
    text: &str,
    file: &str,
    frames: &[TraceFrame],
) -> Result<EstimateStream, IngestError> {
    let invariant = |line: Option<usize>, m: String| IngestError::InvariantViolation {
        file: file.to_string(),
        line,
        message: m,
    };
    let mut partial: Vec<[Option<ClassProbs>; 2]> = vec![[None, None]; frames.len()];
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.split(',').next().map(str::trim) == Some("frame") => {}
        Some((i, _)) => {
            return Err(schema(
                file,
                i + 1,
                "missing header row starting with `frame`",
            ))
        }
        None => return Ok(vec![None; frames.len()]),
    }
    for (i, raw) in lines {
        let line = i + 1;
        let cells: Vec<&str> = raw.split(',').map(str::trim).collect();
        if cells.len() != 10 {
            return Err(schema(
                file,
                line,
                format!("expected 10 columns, found {}", cells.len()),
            ));
        }
        let frame: u64 = cells[0].parse().map_err(|_| {
            schema(
                file,
                line,
                format!("frame `{}` is not an integer", cells[0]),
            )
        })?;
        let view: usize = match cells[1] {
            "0" => 0,
            "1" => 1,
            v => return Err(schema(file, line, format!("view `{v}` must be 0 or 1"))),
        };
        let mut p = ClassProbs::zeros();
        for k in 0..8 {
            p[k] = parse_cell(cells[2 + k], file, line, 2 + k)?
                .ok_or_else(|| schema(file, line, format!("column {} is empty", 3 + k)))?;
        }
        if p.iter().any(|v| *v < 0.0) {
            return Err(invariant(
                Some(line),
                format!("row {line} has a negative probability"),
            ));
        }
        let sum = p.sum();
        if (sum - 1.0).abs() > PROB_TOLERANCE {
            return Err(invariant(
                Some(line),
                format!("row {line} sums to {sum}, expected 1"),
            ));
        }
        let slot = frames
            .binary_search_by_key(&frame, |f| f.frame_index)
            .map_err(|_| invariant(Some(line), format!("frame {frame} is not in the trace")))?;
        if partial[slot][view].replace(p).is_some() {
            return Err(invariant(
                Some(line),
                format!("duplicate estimate for frame {frame} view {view}"),
            ));
        }
    }
    partial
        .into_iter()
        .zip(frames)
        .map(|(views, f)| match views {
            [Some(a), Some(b)] => Ok(Some([a, b])),
            [None, None] => Ok(None),
            _ => Err(invariant(
                None,
                format!("frame {} has an estimate for only one view", f.frame_index),
            )),
        })
        .collect()
}

pub fn format_estimates(frames: &[TraceFrame], stream: &EstimateStream) -> String {
    let mut out = estimates_header();
    out.push('\n');
    for (f, e) in frames.iter().zip(stream) {
        if let Some(views) = e {
            for (view, p) in views.iter().enumerate() {
                let _ = write!(out, "{},{}", f.frame_index, view);
                for v in p.iter() {
                    let _ = write!(out, ",{v}");
                }
                out.push('\n');
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    /// Mass of the empty container (g).
    pub container_mass: f64,
    pub content_type: ContentType,
    pub content_level: f64,
    /// Container capacity (mL).
    pub capacity: f64,
    #[serde(default)]
    pub opaque: bool,
}

impl GroundTruth {
    pub fn empty(container_mass: f64, capacity: f64) -> Self {
        Self {
            container_mass,
            content_type: ContentType::None,
            content_level: 0.0,
            capacity,
            opaque: false,
        }
    }

    pub fn class(&self) -> Option<ContentClass> {
        ContentClass::from_filling(self.content_type, self.content_level)
    }

    /// Annotated object mass: container plus content (g).
    pub fn object_mass(&self, densities: &crate::params::DensityTable) -> f64 {
        self.container_mass
            + self.content_level * self.capacity * self.content_type.density(densities)
    }

    fn validate(&self) -> Result<(), String> {
        if !(self.container_mass.is_finite() && self.container_mass >= 0.0) {
            return Err("container_mass must be a nonnegative number".into());
        }
        if !(self.capacity.is_finite() && self.capacity >= 0.0) {
            return Err("capacity must be a nonnegative number".into());
        }
        if (self.content_level == 0.0) != (self.content_type == ContentType::None) {
            return Err("content_level is 0 exactly when content_type is none".into());
        }
        if self.class().is_none() {
            return Err(format!(
                "content level {} is not one of 0, 0.5, 0.9",
                self.content_level
            ));
        }
        Ok(())
    }
}

/// Shape of `scenario.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioManifest {
    id: String,
    #[serde(default)]
    container: Option<String>,
    #[serde(default)]
    shape_frame: usize,
    truth: GroundTruth,
    delivery_target: [f64; 3],
    #[serde(default)]
    delivery_radius: Option<f64>,
    #[serde(default)]
    densities: Option<crate::params::DensityTable>,
    #[serde(default)]
    params: serde_json::Value,
}

/// Everything needed to simulate one handover.
#[derive(Debug, Clone)]
pub struct HandoverScenario {
    pub id: String,
    /// Container label used for batch grouping.
    pub container: String,
    pub frames: Vec<TraceFrame>,
    pub cameras: [CameraProjection; 2],
    pub shape_masks: [SilhouetteMask; 2],
    /// Index into `frames` of the occlusion-free frame the masks come from.
    pub shape_frame: usize,
    pub estimates: EstimateStream,
    pub truth: GroundTruth,
    pub params: ParameterSet,
    pub delivery_target: Point3,
    pub delivery_radius: f64,
}

impl HandoverScenario {
    /// Checks the cross-file invariants.
    pub fn validate(&self) -> Result<(), IngestError> {
        let inv = |file: &str, m: String| IngestError::InvariantViolation {
            file: file.to_string(),
            line: None,
            message: m,
        };
        if self.frames.is_empty() {
            return Err(inv(TRACE_FILE, "trace has no frames".into()));
        }
        if self
            .frames
            .windows(2)
            .any(|w| w[1].timestamp <= w[0].timestamp)
        {
            return Err(inv(TRACE_FILE, "timestamps must strictly increase".into()));
        }
        for v in 0..2 {
            let (m, c) = (&self.shape_masks[v], &self.cameras[v]);
            if m.width() != c.width() || m.height() != c.height() {
                return Err(inv(
                    &mask_file(v),
                    format!(
                        "mask is {}x{} but camera image is {}x{}",
                        m.width(),
                        m.height(),
                        c.width(),
                        c.height()
                    ),
                ));
            }
        }
        if self.estimates.len() != self.frames.len() {
            return Err(inv(
                ESTIMATES_FILE,
                "estimate stream does not match the trace length".into(),
            ));
        }
        if self.shape_frame >= self.frames.len() {
            return Err(inv(
                SCENARIO_FILE,
                format!("shape_frame {} is past the last frame", self.shape_frame),
            ));
        }
        self.truth.validate().map_err(|m| inv(SCENARIO_FILE, m))?;
        if self.delivery_radius.is_nan() || self.delivery_radius <= 0.0 || !self.delivery_target.iter().all(|v| v.is_finite()) {
            return Err(inv(
                SCENARIO_FILE,
                "delivery target must be finite and its radius positive".into(),
            ));
        }
        self.params.validate().map_err(|e| IngestError::Params {
            file: SCENARIO_FILE.into(),
            source: e,
        })
    }

    /// Ground-truth object mass (g).
    pub fn true_mass(&self) -> f64 {
        self.truth.object_mass(&self.params.densities)
    }

    /// Configuration label for batch matrices: `0`, `P5`, … `W9`.
    pub fn configuration(&self) -> &'static str {
        match self.truth.class() {
            Some(ContentClass::Empty) | None => "0",
            Some(c) => c.label(),
        }
    }
}

fn json_error(file: &str, e: serde_json::Error) -> IngestError {
    schema(file, e.line(), e.to_string())
}

/// Loads and validates a scenario bundle.
pub fn parse_scenario(dir: &Path) -> Result<HandoverScenario, IngestError> {
    parse_scenario_with(dir, None)
}

/// Like [`parse_scenario`], with extra parameter overrides applied on top
/// of the bundle's own (same JSON shape as the `params` object).
pub fn parse_scenario_with(
    dir: &Path,
    overrides: Option<&serde_json::Value>,
) -> Result<HandoverScenario, IngestError> {
    let required = [
        SCENARIO_FILE.to_string(),
        TRACE_FILE.to_string(),
        calib_file(0),
        calib_file(1),
        mask_file(0),
        mask_file(1),
        ESTIMATES_FILE.to_string(),
    ];
    if !dir.is_dir() {
        return Err(IngestError::MissingFile(dir.display().to_string()));
    }
    if let Some(missing) = required.iter().find(|f| !dir.join(f).is_file()) {
        return Err(IngestError::MissingFile(missing.clone()));
    }
    let manifest: ScenarioManifest = serde_json::from_str(&read_text(&dir.join(SCENARIO_FILE))?)
        .map_err(|e| json_error(SCENARIO_FILE, e))?;
    let mut merged = if manifest.params.is_null() {
        serde_json::json!({})
    } else {
        manifest.params.clone()
    };
    if let Some(extra) = overrides {
        merge_json(&mut merged, extra);
    }
    let mut params: ParameterSet = serde_json::from_value(merged.clone())
        .map_err(|e| schema(SCENARIO_FILE, 0, format!("params: {e}")))?;
    let defaulted = ParameterSet::defaulted_keys(&merged);
    if !defaulted.is_empty() {
        log::info!(
            "{}: default parameters applied for {}",
            manifest.id,
            defaulted.join(", ")
        );
    }
    if let Some(d) = manifest.densities {
        params.densities = d;
    }
    if let Some(eta) = manifest.delivery_radius {
        params.safety.eta = eta;
    }
    let frames = parse_trace_str(&read_text(&dir.join(TRACE_FILE))?, TRACE_FILE)?;
    let cameras = [
        parse_calibration(&dir.join(calib_file(0)))?,
        parse_calibration(&dir.join(calib_file(1)))?,
    ];
    let shape_masks = [
        parse_mask(&dir.join(mask_file(0)))?,
        parse_mask(&dir.join(mask_file(1)))?,
    ];
    let estimates = parse_estimates_str(
        &read_text(&dir.join(ESTIMATES_FILE))?,
        ESTIMATES_FILE,
        &frames,
    )?;
    let scenario = HandoverScenario {
        container: manifest.container.unwrap_or_else(|| manifest.id.clone()),
        id: manifest.id,
        frames,
        cameras,
        shape_masks,
        shape_frame: manifest.shape_frame,
        estimates,
        truth: manifest.truth,
        delivery_target: Point3::from(manifest.delivery_target),
        delivery_radius: params.safety.eta,
        params,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Recursively overlays `patch` onto `base`.
pub fn merge_json(base: &mut serde_json::Value, patch: &serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                merge_json(b.entry(k.clone()).or_insert(serde_json::Value::Null), v);
            }
        }
        (b, p) => *b = p.clone(),
    }
}

/// Writes `scenario` as a bundle under `dir`, creating it if needed.
pub fn write_scenario(dir: &Path, scenario: &HandoverScenario) -> Result<(), IngestError> {
    fs::create_dir_all(dir).map_err(|e| IngestError::Io {
        file: dir.display().to_string(),
        source: e,
    })?;
    let mut params = serde_json::to_value(&scenario.params).expect("parameters serialize");
    if let Some(obj) = params.as_object_mut() {
        obj.remove("densities");
    }
    let manifest = ScenarioManifest {
        id: scenario.id.clone(),
        container: Some(scenario.container.clone()),
        shape_frame: scenario.shape_frame,
        truth: scenario.truth.clone(),
        delivery_target: scenario.delivery_target.into(),
        delivery_radius: Some(scenario.delivery_radius),
        densities: Some(scenario.params.densities),
        params,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&dir.join(SCENARIO_FILE), (json + "\n").as_bytes())?;
    write_file(
        &dir.join(TRACE_FILE),
        format_trace(&scenario.frames).as_bytes(),
    )?;
    write_file(
        &dir.join(ESTIMATES_FILE),
        format_estimates(&scenario.frames, &scenario.estimates).as_bytes(),
    )?;
    for v in 0..2 {
        write_calibration(&dir.join(calib_file(v)), &scenario.cameras[v])?;
        write_mask(&dir.join(mask_file(v)), &scenario.shape_masks[v])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pgm_all_white_and_all_black() {
        let mut white = b"P5\n4 4\n255\n".to_vec();
        white.extend([255u8; 16]);
        assert_eq!(parse_mask_bytes(&white, "w").unwrap().count(), 16);
        let mut black = b"P5 4 4 255\n".to_vec();
        black.extend([0u8; 16]);
        assert_eq!(parse_mask_bytes(&black, "b").unwrap().count(), 0);
    }

    #[test]
    fn pgm_ascii_checkerboard_with_comment() {
        let text = b"P2\n# checker\n2 2\n255\n255 0\n0 255\n";
        let m = parse_mask_bytes(text, "c").unwrap();
        assert_eq!(m.count(), 2);
        assert!(m.get(0, 0) && m.get(1, 1));
        assert!(!m.get(1, 0) && !m.get(0, 1));
    }

    #[test]
    fn pgm_threshold_is_strictly_above_127() {
        let m = parse_mask_bytes(b"P2 3 1 255 127 128 200", "t").unwrap();
        assert_eq!(m.bits(), &[false, true, true]);
    }

    #[test]
    fn pgm_errors() {
        assert!(matches!(
            parse_mask_bytes(b"P6\n1 1\n255\n\0\0\0", "x"),
            Err(IngestError::UnsupportedFormat { .. })
        ));
        assert!(matches!(
            parse_mask_bytes(b"P5\n4 4\n255\n\xff\xff", "x"),
            Err(IngestError::TruncatedFile { .. })
        ));
        assert!(matches!(
            parse_mask_bytes(b"P2\n2 2\n255\n0 0 0", "x"),
            Err(IngestError::TruncatedFile { .. })
        ));
        assert!(matches!(
            parse_mask_bytes(b"", "x"),
            Err(IngestError::TruncatedFile { .. })
        ));
    }

    #[test]
    fn pgm_sixteen_bit() {
        let mut data = b"P5 2 1 65535\n".to_vec();
        data.extend([0x00, 0x7f, 0x00, 0x80]);
        assert_eq!(parse_mask_bytes(&data, "x").unwrap().bits(), &[false, true]);
    }

    #[test]
    fn calibration_identity_like() {
        let cam = parse_calibration_str("1 0 0 0\n0 1 0 0\n0 0 1 0\n640 480\n", "c").unwrap();
        assert_eq!(*cam.matrix(), Matrix3x4::identity());
        assert_eq!((cam.width(), cam.height()), (640, 480));
    }

    #[test]
    fn calibration_wrong_count() {
        let err = parse_calibration_str("1 0 0 0 0 1 0 0 0 0 1 640 480", "c").unwrap_err();
        assert!(matches!(err, IngestError::MalformedCalibration { .. }));
        let err = parse_calibration_str("1 0 0 0 0 1 0 0 0 0 1 0 640 -1", "c").unwrap_err();
        assert!(matches!(err, IngestError::MalformedCalibration { .. }));
    }

    fn blank_frame(i: u64) -> TraceFrame {
        TraceFrame {
            frame_index: i,
            timestamp: i as f64 / 30.0,
            left_hand: None,
            right_hand: None,
            centroid_px: [None, None],
        }
    }

    #[test]
    fn trace_round_trip_with_absent_hand() {
        let mut f = blank_frame(0);
        let mut kp = [Point3::zeros(); KEYPOINTS];
        for (i, p) in kp.iter_mut().enumerate() {
            *p = Point3::new(i as f64 * 1.5, -0.1 * i as f64, 300.0 + i as f64);
        }
        f.right_hand = Some(kp);
        f.centroid_px = [Some(Pixel::new(320.25, 240.5)), None];
        let frames = vec![f, blank_frame(1)];
        let text = format_trace(&frames);
        assert_eq!(parse_trace_str(&text, "trace.csv").unwrap(), frames);
    }

    #[test]
    fn trace_partial_hand_is_schema_violation() {
        let frames = vec![blank_frame(0)];
        let text = format_trace(&frames);
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let mut cells: Vec<String> = lines[1].split(',').map(String::from).collect();
        cells[2] = "1.0".into();
        lines[1] = cells.join(",");
        let err = parse_trace_str(&lines.join("\n"), "trace.csv").unwrap_err();
        assert!(
            matches!(err, IngestError::SchemaViolation { line: 2, .. }),
            "{err}"
        );
    }

    #[test]
    fn trace_non_increasing_time() {
        let mut b = blank_frame(1);
        b.timestamp = 0.0;
        let text = format_trace(&[blank_frame(0), b]);
        assert!(matches!(
            parse_trace_str(&text, "trace.csv"),
            Err(IngestError::InvariantViolation { line: Some(3), .. })
        ));
    }

    #[test]
    fn estimates_row_not_summing_to_one() {
        let frames = vec![blank_frame(0)];
        let text = "frame,view,empty,P5,P9,R5,R9,W5,W9,unknown\n0,0,0.9,0,0,0,0,0,0,0\n0,1,1,0,0,0,0,0,0,0\n";
        let err = parse_estimates_str(text, "estimates.csv", &frames).unwrap_err();
        match err {
            IngestError::InvariantViolation { line, message, .. } => {
                assert_eq!(line, Some(2));
                assert!(message.contains("row 2"), "{message}");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn estimates_need_both_views() {
        let frames = vec![blank_frame(0)];
        let text = "frame,view,empty,P5,P9,R5,R9,W5,W9,unknown\n0,0,1,0,0,0,0,0,0,0\n";
        assert!(matches!(
            parse_estimates_str(text, "estimates.csv", &frames),
            Err(IngestError::InvariantViolation { .. })
        ));
    }

    #[test]
    fn json_merge_overlays_nested_keys() {
        let mut base = serde_json::json!({"safety": {"c": 0.9, "eta": 400.0}, "lock_region": true});
        merge_json(
            &mut base,
            &serde_json::json!({"safety": {"c": 0.5}, "contact_noise": 0.1}),
        );
        assert_eq!(
            base,
            serde_json::json!({"safety": {"c": 0.5, "eta": 400.0}, "lock_region": true, "contact_noise": 0.1})
        );
    }

    proptest! {
        #[test]
        fn calibration_text_round_trip(vals in proptest::collection::vec(-1e4f64..1e4, 12), w in 1u32..4000, h in 1u32..4000) {
            let m = Matrix3x4::from_row_slice(&vals);
            prop_assume!(m.fixed_view::<3, 3>(0, 0).determinant().abs() > 1e-6);
            let cam = CameraProjection::new(m, w, h).unwrap();
            let back = parse_calibration_str(&format_calibration(&cam), "c").unwrap();
            prop_assert_eq!(back.matrix(), cam.matrix());
            prop_assert_eq!((back.width(), back.height()), (w, h));
        }

        #[test]
        fn pgm_p5_bytes_round_trip(w in 1u32..20, h in 1u32..20, seed in any::<u64>()) {
            let mask = SilhouetteMask::from_fn(w, h, |x, y| (seed >> ((x * 7 + y * 3) % 64)) & 1 == 1);
            let bytes = mask.to_pgm();
            let back = parse_mask_bytes(&bytes, "m").unwrap();
            prop_assert_eq!(&back, &mask);
            prop_assert_eq!(back.to_pgm(), bytes);
        }
    }
}
