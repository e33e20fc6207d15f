//! Dense patch extraction on a regular grid with per-patch contrast normalization.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::seqio::{BoundingBox, GrayFrame};

/// Variance floor added before dividing by the standard deviation (8-bit scale).
pub const CONTRAST_EPSILON: f64 = 10.0;

/// Targets whose smaller side is below this use the small-patch grid.
pub const SMALL_TARGET_SIDE: i32 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchGridSpec {
    pub patch_size: usize,
    pub stride: usize,
}

impl PatchGridSpec {
    pub fn new(patch_size: usize, stride: usize) -> Result<Self> {
        if patch_size < 2 || stride == 0 || stride > patch_size {
            return Err(Error::InvalidParameter(format!(
                "patch grid needs p ≥ 2 and 1 ≤ q ≤ p, got p={patch_size} q={stride}"
            )));
        }
        Ok(Self { patch_size, stride })
    }

    /// 8/4 for ordinary targets, 6/2 when the target is small.
    pub fn for_target(w: i32, h: i32) -> Self {
        if w.min(h) < SMALL_TARGET_SIDE {
            Self { patch_size: 6, stride: 2 }
        } else {
            Self { patch_size: 8, stride: 4 }
        }
    }

    pub fn dim(&self) -> usize {
        self.patch_size * self.patch_size
    }

    /// Patches along one axis of length `side`.
    pub fn count_along(&self, side: usize) -> usize {
        if side < self.patch_size {
            0
        } else {
            (side - self.patch_size) / self.stride + 1
        }
    }
}

impl Default for PatchGridSpec {
    fn default() -> Self {
        Self { patch_size: 8, stride: 4 }
    }
}

/// Column-stacked patches (`p² × N`) with their top-left offsets inside `region`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchMatrix {
    pub data: DMatrix<f64>,
    /// `(row, col)` offsets relative to the region origin.
    pub positions: Vec<(usize, usize)>,
    /// The clipped region the grid was laid over.
    pub region: BoundingBox,
}

impl PatchMatrix {
    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }

    /// Column subset, keeping positions aligned.
    pub fn select(&self, cols: &[usize]) -> PatchMatrix {
        PatchMatrix {
            data: self.data.select_columns(cols),
            positions: cols.iter().map(|&c| self.positions[c]).collect(),
            region: self.region,
        }
    }
}

/// Copies the `p × p` patch with top-left `(x, y)` into `out`, row-major.
pub fn read_patch(frame: &GrayFrame, x: usize, y: usize, p: usize, out: &mut [f64]) {
    let px = frame.pixels();
    let w = frame.width();
    for r in 0..p {
        let row = &px[(y + r) * w + x..(y + r) * w + x + p];
        for (o, &v) in out[r * p..(r + 1) * p].iter_mut().zip(row) {
            *o = v as f64;
        }
    }
}

/// Raw (unnormalized) patches of `region`, clipped to the frame.
pub fn extract_patches(frame: &GrayFrame, region: &BoundingBox, spec: &PatchGridSpec) -> Result<PatchMatrix> {
    let p = spec.patch_size;
    let clipped = region.clip(frame.width(), frame.height());
    let r = match clipped {
        Some(r) if r.w as usize >= p && r.h as usize >= p => r,
        Some(r) => return Err(Error::RegionTooSmall { w: r.w as i64, h: r.h as i64, patch: p }),
        None => return Err(Error::RegionTooSmall { w: 0, h: 0, patch: p }),
    };
    let rows = spec.count_along(r.h as usize);
    let cols = spec.count_along(r.w as usize);
    let mut data = DMatrix::zeros(p * p, rows * cols);
    let mut positions = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let k = positions.len();
            let (dy, dx) = (i * spec.stride, j * spec.stride);
            read_patch(
                frame,
                r.x as usize + dx,
                r.y as usize + dy,
                p,
                data.column_mut(k).as_mut_slice(),
            );
            positions.push((dy, dx));
        }
    }
    Ok(PatchMatrix { data, positions, region: r })
}

/// Subtracts the mean and divides by `sqrt(var + ε)` (population variance).
pub fn normalize_column(col: &mut [f64]) {
    let m = col.len() as f64;
    let mean = col.iter().sum::<f64>() / m;
    let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
    let scale = 1.0 / (var + CONTRAST_EPSILON).sqrt();
    for v in col.iter_mut() {
        *v = (*v - mean) * scale;
    }
}

pub fn contrast_normalize(mut patches: PatchMatrix) -> PatchMatrix {
    for mut col in patches.data.column_iter_mut() {
        normalize_column(col.as_mut_slice());
    }
    patches
}

/// Extraction followed by contrast normalization.
pub fn extract_normalized(frame: &GrayFrame, region: &BoundingBox, spec: &PatchGridSpec) -> Result<PatchMatrix> {
    extract_patches(frame, region, spec).map(contrast_normalize)
}
