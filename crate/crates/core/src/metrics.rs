//! Overlap ratio and center location error, per-sequence reports and the
//! trajectory / report CSV files.

use std::path::Path;

use crate::error::{Error, Result};
use crate::seqio::BoundingBox;

/// Intersection over union of two boxes treated as real rectangles.
pub fn vor(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let ix = ((a.x + a.w).min(b.x + b.w) - a.x.max(b.x)).max(0) as f64;
    let iy = ((a.y + a.h).min(b.y + b.h) - a.y.max(b.y)).max(0) as f64;
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

/// Distance between box centers.
pub fn cle(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    (ax - bx).hypot(ay - by)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameMetrics {
    /// 1-based frame number.
    pub frame: usize,
    pub vor: f64,
    pub cle: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub per_frame: Vec<FrameMetrics>,
    pub mean_vor: f64,
    pub mean_cle: f64,
}

/// Per-frame metrics and their means over every frame, the first included.
pub fn evaluate(trajectory: &[BoundingBox], truth: &[BoundingBox]) -> Result<EvalReport> {
    if trajectory.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "trajectory has {} frames, truth has {}",
            trajectory.len(),
            truth.len()
        )));
    }
    let per_frame: Vec<FrameMetrics> = trajectory
        .iter()
        .zip(truth)
        .enumerate()
        .map(|(i, (t, g))| FrameMetrics {
            frame: i + 1,
            vor: vor(t, g),
            cle: cle(t, g),
        })
        .collect();
    let n = per_frame.len().max(1) as f64;
    Ok(EvalReport {
        mean_vor: per_frame.iter().map(|m| m.vor).sum::<f64>() / n,
        mean_cle: per_frame.iter().map(|m| m.cle).sum::<f64>() / n,
        per_frame,
    })
}

/// One row of a trajectory file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackRecord {
    pub frame: usize,
    pub bbox: BoundingBox,
    pub score: f64,
}

pub fn write_trajectory(path: &Path, records: &[TrackRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["frame", "x", "y", "w", "h", "score"])?;
    for r in records {
        w.write_record([
            r.frame.to_string(),
            r.bbox.x.to_string(),
            r.bbox.y.to_string(),
            r.bbox.w.to_string(),
            r.bbox.h.to_string(),
            format!("{:.6}", r.score),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trajectory(path: &Path) -> Result<Vec<TrackRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let bad = |what: &str| Error::TruthParse {
            line: i + 2,
            message: format!("bad {what} in trajectory row"),
        };
        if row.len() != 6 {
            return Err(bad("column count"));
        }
        let int = |k: usize| row[k].trim().parse::<i32>().map_err(|_| bad("integer"));
        out.push(TrackRecord {
            frame: row[0].trim().parse().map_err(|_| bad("frame"))?,
            bbox: BoundingBox::new(int(1)?, int(2)?, int(3)?, int(4)?)?,
            score: row[5].trim().parse().map_err(|_| bad("score"))?,
        });
    }
    Ok(out)
}

/// Per-frame `frame,vor,cle` rows.
pub fn write_report(path: &Path, report: &EvalReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["frame", "vor", "cle"])?;
    for m in &report.per_frame {
        w.write_record([m.frame.to_string(), format!("{:.6}", m.vor), format!("{:.6}", m.cle)])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_report(path: &Path) -> Result<Vec<FrameMetrics>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let parse = |k: usize| -> Result<f64> {
            row.get(k).and_then(|v| v.trim().parse().ok()).ok_or(Error::TruthParse {
                line: i + 2,
                message: "bad report row".into(),
            })
        };
        out.push(FrameMetrics {
            frame: parse(0)? as usize,
            vor: parse(1)?,
            cle: parse(2)?,
        });
    }
    Ok(out)
}
