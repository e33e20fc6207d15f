//! Spatial pyramid max pooling of patch codes into one feature vector.

use nalgebra::{DMatrix, DVector};

use crate::encode::CodeMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PyramidSpec {
    pub levels: Vec<usize>,
}

impl Default for PyramidSpec {
    fn default() -> Self {
        Self { levels: vec![1, 2, 3] }
    }
}

impl PyramidSpec {
    pub fn new(levels: Vec<usize>) -> Result<Self> {
        if levels.is_empty() || levels.contains(&0) {
            return Err(Error::InvalidParameter(format!("pyramid levels must be non-empty and ≥ 1, got {levels:?}")));
        }
        Ok(Self { levels })
    }

    pub fn cell_count(&self) -> usize {
        self.levels.iter().map(|s| s * s).sum()
    }

    /// Pooled length for `n` bases.
    pub fn feature_dim(&self, n: usize) -> usize {
        n * self.cell_count()
    }
}

impl std::str::FromStr for PyramidSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let levels = s
            .split(',')
            .map(|t| t.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::InvalidParameter(format!("bad pyramid levels {s:?}")))?;
        Self::new(levels)
    }
}

impl std::fmt::Display for PyramidSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.levels.iter().map(|l| l.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PooledFeature(pub DVector<f64>);

impl PooledFeature {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Cell membership of every patch, computed once per region geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolLayout {
    /// For each patch, the global cell index at every pyramid level.
    cells: Vec<Vec<usize>>,
    cell_count: usize,
}

fn cell_of(center: f64, side: usize, region_side: usize) -> usize {
    ((center * side as f64 / region_side as f64).floor() as usize).min(side - 1)
}

impl PoolLayout {
    pub fn new(
        positions: &[(usize, usize)],
        region_w: usize,
        region_h: usize,
        patch_size: usize,
        spec: &PyramidSpec,
    ) -> Result<Self> {
        let half = patch_size as f64 / 2.0;
        let mut cells = Vec::with_capacity(positions.len());
        for &(row, col) in positions {
            if row + patch_size > region_h || col + patch_size > region_w {
                return Err(Error::DimensionMismatch(format!(
                    "patch at ({row},{col}) of size {patch_size} leaves {region_w}x{region_h} region"
                )));
            }
            let (cy, cx) = (row as f64 + half, col as f64 + half);
            let mut offset = 0;
            let mut per_level = Vec::with_capacity(spec.levels.len());
            for &side in &spec.levels {
                let r = cell_of(cy, side, region_h);
                let c = cell_of(cx, side, region_w);
                per_level.push(offset + r * side + c);
                offset += side * side;
            }
            cells.push(per_level);
        }
        Ok(Self {
            cells,
            cell_count: spec.cell_count(),
        })
    }

    pub fn patch_count(&self) -> usize {
        self.cells.len()
    }

    /// Max-pools codes supplied per patch (each of length `n`).
    pub fn pool<'c>(&self, n: usize, code_of: impl Fn(usize) -> &'c [f64]) -> PooledFeature {
        let mut out = DVector::zeros(n * self.cell_count);
        let mut seen = vec![false; self.cell_count];
        for (k, per_level) in self.cells.iter().enumerate() {
            let code = code_of(k);
            for &cell in per_level {
                let slot = &mut out.as_mut_slice()[cell * n..(cell + 1) * n];
                if seen[cell] {
                    for (o, &v) in slot.iter_mut().zip(code) {
                        if v > *o {
                            *o = v;
                        }
                    }
                } else {
                    slot.copy_from_slice(code);
                    seen[cell] = true;
                }
            }
        }
        PooledFeature(out)
    }
}

/// Pools an `n × N` code matrix. Empty cells stay 0.
pub fn pyramid_max_pool_matrix(
    codes: &DMatrix<f64>,
    positions: &[(usize, usize)],
    region_w: usize,
    region_h: usize,
    patch_size: usize,
    spec: &PyramidSpec,
) -> Result<PooledFeature> {
    if positions.len() != codes.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{} positions for {} code columns",
            positions.len(),
            codes.ncols()
        )));
    }
    let layout = PoolLayout::new(positions, region_w, region_h, patch_size, spec)?;
    let n = codes.nrows();
    let data = codes.as_slice();
    Ok(layout.pool(n, |k| &data[k * n..(k + 1) * n]))
}

pub fn pyramid_max_pool(codes: &CodeMatrix, patch_size: usize, spec: &PyramidSpec) -> Result<PooledFeature> {
    pyramid_max_pool_matrix(
        &codes.data,
        &codes.positions,
        codes.region.w as usize,
        codes.region.h as usize,
        patch_size,
        spec,
    )
}
