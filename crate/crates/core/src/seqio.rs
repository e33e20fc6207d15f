//! Frames, ground truth and on-disk sequence formats.
//!
//! A sequence directory holds `img0001.pgm`, `img0002.pgm`, ... numbered from 1
//! without gaps. Ground truth is a text file with one `x,y,w,h` line per frame
//! (commas, tabs or spaces all separate fields). Boxes are 0-based top-left.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const FRAME_EXTENSIONS: &[&str] = &["pgm", "ppm", "pnm", "png"];

/// Axis-aligned box in integer pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: i32,
    pub y: i32,
    pub w: i32,
    pub h: i32,
}

impl BoundingBox {
    pub fn new(x: i32, y: i32, w: i32, h: i32) -> Result<Self> {
        if w <= 0 || h <= 0 {
            return Err(Error::InvalidBox(format!("{x},{y},{w},{h}: w and h must be > 0")));
        }
        Ok(Self { x, y, w, h })
    }

    pub fn translate(&self, dx: i32, dy: i32) -> Self {
        Self {
            x: self.x + dx,
            y: self.y + dy,
            ..*self
        }
    }

    pub fn center(&self) -> (f64, f64) {
        (
            self.x as f64 + self.w as f64 / 2.0,
            self.y as f64 + self.h as f64 / 2.0,
        )
    }

    pub fn area(&self) -> f64 {
        self.w as f64 * self.h as f64
    }

    /// Grows the box by `margin` pixels on every side.
    pub fn expand(&self, margin: i32) -> Self {
        Self {
            x: self.x - margin,
            y: self.y - margin,
            w: self.w + 2 * margin,
            h: self.h + 2 * margin,
        }
    }

    /// Intersection with `[0, width) x [0, height)`, or `None` if empty.
    pub fn clip(&self, width: usize, height: usize) -> Option<BoundingBox> {
        let x0 = self.x.max(0);
        let y0 = self.y.max(0);
        let x1 = (self.x + self.w).min(width as i32);
        let y1 = (self.y + self.h).min(height as i32);
        if x1 <= x0 || y1 <= y0 {
            None
        } else {
            Some(BoundingBox {
                x: x0,
                y: y0,
                w: x1 - x0,
                h: y1 - y0,
            })
        }
    }
}

impl std::fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{},{},{}", self.x, self.y, self.w, self.h)
    }
}

impl std::str::FromStr for BoundingBox {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_truth_line(s)
    }
}

/// 8-bit grayscale frame, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayFrame {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayFrame {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} pixels for a {width}x{height} frame",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    /// Copies the part of `region` that lies inside the frame. Returns the
    /// crop together with the clipped region it was taken from.
    pub fn crop(&self, region: &BoundingBox) -> Option<(GrayFrame, BoundingBox)> {
        let r = region.clip(self.width, self.height)?;
        let (w, h) = (r.w as usize, r.h as usize);
        let mut pixels = Vec::with_capacity(w * h);
        for y in 0..h {
            let start = (r.y as usize + y) * self.width + r.x as usize;
            pixels.extend_from_slice(&self.pixels[start..start + w]);
        }
        Some((
            GrayFrame {
                width: w,
                height: h,
                pixels,
            },
            r,
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub name: String,
    pub frames: Vec<GrayFrame>,
    pub truth: Option<Vec<BoundingBox>>,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn attach_truth(&mut self, truth: Vec<BoundingBox>) -> Result<()> {
        if truth.len() != self.frames.len() {
            return Err(Error::TruthLength {
                truth: truth.len(),
                frames: self.frames.len(),
            });
        }
        self.truth = Some(truth);
        Ok(())
    }
}

/// Parses one ground-truth line `x,y,w,h`. Commas, tabs and spaces are all
/// accepted as separators.
pub fn parse_truth_line(line: &str) -> Result<BoundingBox> {
    parse_truth_line_at(line, 1)
}

fn parse_truth_line_at(line: &str, lineno: usize) -> Result<BoundingBox> {
    let err = |message: String| Error::TruthParse {
        line: lineno,
        message,
    };
    let tokens: Vec<&str> = line
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .collect();
    if tokens.len() != 4 {
        return Err(err(format!("expected 4 fields, found {}", tokens.len())));
    }
    let mut v = [0i32; 4];
    for (slot, tok) in v.iter_mut().zip(&tokens) {
        *slot = tok
            .parse()
            .map_err(|_| err(format!("not an integer: {tok:?}")))?;
    }
    if v[2] <= 0 || v[3] <= 0 {
        return Err(err(format!("w and h must be > 0, got w={} h={}", v[2], v[3])));
    }
    Ok(BoundingBox {
        x: v[0],
        y: v[1],
        w: v[2],
        h: v[3],
    })
}

/// Reads a ground-truth file. With `one_based`, 1 is subtracted from x and y.
/// Trailing blank lines are ignored.
pub fn load_truth(path: &Path, one_based: bool) -> Result<Vec<BoundingBox>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines: Vec<&str> = text.lines().collect();
    while lines.last().is_some_and(|l| l.trim().is_empty()) {
        lines.pop();
    }
    lines
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let b = parse_truth_line_at(l, i + 1)?;
            Ok(if one_based { b.translate(-1, -1) } else { b })
        })
        .collect()
}

pub fn write_truth(path: &Path, truth: &[BoundingBox]) -> Result<()> {
    let mut out = String::new();
    for b in truth {
        out.push_str(&format!("{b}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn frame_index(path: &Path) -> Option<usize> {
    let ext = path.extension()?.to_str()?.to_ascii_lowercase();
    if !FRAME_EXTENSIONS.contains(&ext.as_str()) {
        return None;
    }
    let stem = path.file_stem()?.to_str()?;
    let digits = stem.strip_prefix("img")?;
    if digits.len() < 4 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

/// Converts RGB to gray with luma weights 0.299/0.587/0.114, rounded.
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64)
        .round()
        .clamp(0.0, 255.0) as u8
}

pub fn load_frame(path: &Path) -> Result<GrayFrame> {
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let pixels = match img {
        DynamicImage::ImageLuma8(g) => g.into_raw(),
        DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLumaA16(_) => {
            img.to_luma8().into_raw()
        }
        other => other
            .to_rgb8()
            .pixels()
            .map(|p| luma(p[0], p[1], p[2]))
            .collect(),
    };
    GrayFrame::new(w, h, pixels)
}

/// Writes a frame as binary 8-bit PGM (P5).
pub fn save_frame(path: &Path, frame: &GrayFrame) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = std::io::BufWriter::new(file);
    PnmEncoder::new(&mut writer)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(
            frame.pixels(),
            frame.width() as u32,
            frame.height() as u32,
            ExtendedColorType::L8,
        )
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Loads `img%04d.*` frames from `frame_dir` and, optionally, a 0-based truth file.
pub fn load_sequence(frame_dir: &Path, truth_path: Option<&Path>) -> Result<Sequence> {
    if !frame_dir.is_dir() {
        return Err(Error::MissingDirectory(frame_dir.to_path_buf()));
    }
    let mut indexed: Vec<(usize, PathBuf)> = fs::read_dir(frame_dir)
        .map_err(|e| Error::io(frame_dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter_map(|p| frame_index(&p).map(|i| (i, p)))
        .collect();
    if indexed.is_empty() {
        return Err(Error::NoFrames(frame_dir.to_path_buf()));
    }
    indexed.sort();
    for (expected, (index, _)) in (1..).zip(&indexed) {
        if *index != expected {
            return Err(Error::FrameGap {
                dir: frame_dir.to_path_buf(),
                index: expected,
            });
        }
    }
    let frames = indexed
        .iter()
        .map(|(_, p)| load_frame(p))
        .collect::<Result<Vec<_>>>()?;
    let name = frame_dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut seq = Sequence {
        name,
        frames,
        truth: None,
    };
    if let Some(tp) = truth_path {
        seq.attach_truth(load_truth(tp, false)?)?;
    }
    Ok(seq)
}

/// Writes frames as `img%04d.pgm` plus `groundtruth.txt` when truth is present.
pub fn save_sequence(seq: &Sequence, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, frame) in seq.frames.iter().enumerate() {
        save_frame(&dir.join(format!("img{:04}.pgm", i + 1)), frame)?;
    }
    if let Some(truth) = &seq.truth {
        write_truth(&dir.join("groundtruth.txt"), truth)?;
    }
    Ok(())
}

/// Parameters of the synthetic translating-texture sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub frame_w: usize,
    pub frame_h: usize,
    pub n_frames: usize,
    pub target_size: usize,
    pub velocity: (f64, f64),
    pub jitter_sigma: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Top-left of the target in the first frame; centered path when `None`.
    pub start: Option<(i32, i32)>,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            frame_w: 320,
            frame_h: 240,
            n_frames: 50,
            target_size: 40,
            velocity: (2.0, 1.0),
            jitter_sigma: 0.5,
            noise_sigma: 8.0,
            seed: 7,
            start: None,
        }
    }
}

fn axis_start(side: usize, size: usize, v: f64, n: usize, margin: f64, start: Option<i32>) -> Result<f64> {
    let last = v * (n.saturating_sub(1)) as f64;
    let (lo, hi) = (last.min(0.0), last.max(0.0));
    let s = match start {
        Some(s) => s as f64,
        None => ((side as f64 - size as f64 - (hi - lo)) / 2.0).floor() - lo,
    };
    if s + lo - margin < 0.0 || s + hi + margin + size as f64 > side as f64 {
        return Err(Error::TargetOutOfFrame(format!(
            "start {s}, travel [{lo}, {hi}], jitter margin {margin}, size {size}, frame side {side}"
        )));
    }
    Ok(s)
}

/// Renders a fixed random texture moving at constant velocity over a
/// Gaussian-noise background. Truth boxes are the exact drawn positions.
pub fn synth_sequence(params: &SynthParams) -> Result<Sequence> {
    let p = params;
    if p.target_size == 0 || p.n_frames == 0 {
        return Err(Error::InvalidParameter("target_size and n_frames must be ≥ 1".into()));
    }
    if p.jitter_sigma < 0.0 || p.noise_sigma < 0.0 {
        return Err(Error::InvalidParameter("sigmas must be ≥ 0".into()));
    }
    let margin = 3.0 * p.jitter_sigma;
    let x0 = axis_start(p.frame_w, p.target_size, p.velocity.0, p.n_frames, margin, p.start.map(|s| s.0))?;
    let y0 = axis_start(p.frame_h, p.target_size, p.velocity.1, p.n_frames, margin, p.start.map(|s| s.1))?;

    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let size = p.target_size;
    let block = (size / 10).max(1);
    let blocks = size.div_ceil(block);
    let block_values: Vec<f64> = (0..blocks * blocks).map(|_| rng.gen_range(0.0..=255.0)).collect();
    let texture: Vec<f64> = (0..size * size)
        .map(|i| {
            let (r, c) = (i / size, i % size);
            block_values[(r / block) * blocks + c / block]
        })
        .collect();

    let jitter = Normal::new(0.0, p.jitter_sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let noise = Normal::new(0.0, p.noise_sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let mut frames = Vec::with_capacity(p.n_frames);
    let mut truth = Vec::with_capacity(p.n_frames);
    for t in 0..p.n_frames {
        let offset = |sampler: &Normal<f64>, rng: &mut ChaCha8Rng| {
            if p.jitter_sigma > 0.0 {
                sampler.sample(rng).clamp(-margin, margin)
            } else {
                0.0
            }
        };
        let jx = offset(&jitter, &mut rng);
        let jy = offset(&jitter, &mut rng);
        let bx = (x0 + p.velocity.0 * t as f64 + jx).round() as i32;
        let by = (y0 + p.velocity.1 * t as f64 + jy).round() as i32;
        let mut pixels = Vec::with_capacity(p.frame_w * p.frame_h);
        for y in 0..p.frame_h as i32 {
            for x in 0..p.frame_w as i32 {
                let inside = x >= bx && x < bx + size as i32 && y >= by && y < by + size as i32;
                let base = if inside {
                    texture[(y - by) as usize * size + (x - bx) as usize]
                } else {
                    128.0
                };
                let n = if p.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                pixels.push((base + n).round().clamp(0.0, 255.0) as u8);
            }
        }
        frames.push(GrayFrame::new(p.frame_w, p.frame_h, pixels)?);
        truth.push(BoundingBox {
            x: bx,
            y: by,
            w: size as i32,
            h: size as i32,
        });
    }
    Ok(Sequence {
        name: format!("synth-{}", p.seed),
        frames,
        truth: Some(truth),
    })
}
