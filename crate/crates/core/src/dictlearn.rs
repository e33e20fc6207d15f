//! Dictionary construction and online dictionary learning.
//!
//! The online learner keeps the sufficient statistics `A = Σ ααᵀ / η` and
//! `B = Σ xαᵀ / η` and refreshes the basis one column at a time by block
//! coordinate descent with projection onto the unit ball.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lasso::{LassoSolver, DEFAULT_MAX_ITER, DEFAULT_TOL};

/// Columns whose `A[j,j]` does not exceed this are left untouched.
pub const DEAD_COLUMN: f64 = 1e-8;
pub const DEFAULT_BATCH: usize = 256;
pub const KMEANS_MAX_ITER: usize = 50;
pub const DEFAULT_OVERLAP_THRESHOLD: f64 = 0.9;

const MAGIC: &[u8; 8] = b"FTDICT01";

#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    pub basis: DMatrix<f64>,
}

impl Dictionary {
    pub fn new(basis: DMatrix<f64>) -> Result<Self> {
        let d = Self { basis };
        let worst = d.max_column_norm();
        if worst > 1.0 + 1e-9 {
            return Err(Error::InvalidParameter(format!("dictionary column norm {worst} exceeds 1")));
        }
        Ok(d)
    }

    /// Patch dimension `m`.
    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    /// Basis count `n`.
    pub fn size(&self) -> usize {
        self.basis.ncols()
    }

    pub fn max_column_norm(&self) -> f64 {
        self.basis.column_iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Writes the `FTDICT01` format: magic, `m` and `n` as little-endian u32,
    /// then `m·n` little-endian f64 values in column-major order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * self.basis.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.dim() as u32).to_le_bytes());
        out.extend_from_slice(&(self.size() as u32).to_le_bytes());
        for v in self.basis.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(Error::DictionaryFormat("missing FTDICT01 header".into()));
        }
        let m = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let n = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let body = &bytes[16..];
        if body.len() != m * n * 8 {
            return Err(Error::DictionaryFormat(format!(
                "expected {} payload bytes for {m}x{n}, found {}",
                m * n * 8,
                body.len()
            )));
        }
        let values: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Dictionary::new(DMatrix::from_vec(m, n, values))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Accumulators of the online learner.
#[derive(Debug, Clone, PartialEq)]
pub struct OdlState {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// Rounds completed.
    pub t: usize,
    /// Nominal mini-batch size.
    pub eta: usize,
}

impl OdlState {
    pub fn zeros(dim: usize, size: usize, eta: usize) -> Self {
        Self {
            a: DMatrix::zeros(size, size),
            b: DMatrix::zeros(dim, size),
            t: 0,
            eta,
        }
    }
}

/// `½ Tr(DᵀDA) − Tr(DᵀB)`, the data-dependent part of the surrogate loss.
pub fn surrogate_objective(basis: &DMatrix<f64>, a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let gram = basis.tr_mul(basis);
    0.5 * gram.component_mul(a).sum() - basis.component_mul(b).sum()
}

/// One sequential pass of projected column updates with `A`, `B` fixed.
/// Later columns see the already-updated earlier ones.
pub fn update_columns(basis: &mut DMatrix<f64>, a: &DMatrix<f64>, b: &DMatrix<f64>) {
    let n = basis.ncols();
    for j in 0..n {
        let ajj = a[(j, j)];
        if ajj <= DEAD_COLUMN {
            continue;
        }
        let mut u: DVector<f64> = b.column(j) - &*basis * a.column(j);
        u /= ajj;
        u += basis.column(j);
        let scale = u.norm().max(1.0);
        basis.set_column(j, &(u / scale));
    }
}

/// One online round on a batch of normalized patches (`m × η'`).
pub fn odl_step(dict: &mut Dictionary, state: &mut OdlState, batch: &DMatrix<f64>, lambda: f64) -> Result<()> {
    if batch.nrows() != dict.dim() {
        return Err(Error::DimensionMismatch(format!(
            "batch rows {} vs dictionary dimension {}",
            batch.nrows(),
            dict.dim()
        )));
    }
    if state.a.nrows() != dict.size() || state.b.nrows() != dict.dim() || state.b.ncols() != dict.size() {
        return Err(Error::DimensionMismatch("ODL state does not match dictionary".into()));
    }
    if batch.ncols() == 0 {
        return Err(Error::InvalidParameter("empty batch".into()));
    }
    let codes = LassoSolver::new(&dict.basis)
        .with_tolerance(DEFAULT_TOL, DEFAULT_MAX_ITER)
        .solve_batch(batch, lambda)?;
    let inv = 1.0 / batch.ncols() as f64;
    state.a.gemm(inv, &codes, &codes.transpose(), 1.0);
    state.b.gemm(inv, batch, &codes.transpose(), 1.0);
    // keep A exactly symmetric against accumulated roundoff
    let sym = (&state.a + state.a.transpose()) * 0.5;
    state.a = sym;
    update_columns(&mut dict.basis, &state.a, &state.b);
    state.t += 1;
    Ok(())
}

/// One shuffled pass over `patches` in mini-batches of `state.eta`.
pub fn odl_epoch(
    dict: &mut Dictionary,
    state: &mut OdlState,
    patches: &DMatrix<f64>,
    lambda: f64,
    rng: &mut impl Rng,
) -> Result<()> {
    let mut order: Vec<usize> = (0..patches.ncols()).collect();
    order.shuffle(rng);
    for chunk in order.chunks(state.eta.max(1)) {
        let batch = patches.select_columns(chunk);
        odl_step(dict, state, &batch, lambda)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMethod {
    Odl,
    KMeans,
    RandomSample,
}

impl std::str::FromStr for InitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "odl" => Ok(Self::Odl),
            "kmeans" | "k-means" => Ok(Self::KMeans),
            "rs" | "random" | "random_sample" => Ok(Self::RandomSample),
            other => Err(Error::InvalidParameter(format!("unknown dictionary method {other:?}"))),
        }
    }
}

impl std::fmt::Display for InitMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Odl => "odl",
            Self::KMeans => "kmeans",
            Self::RandomSample => "rs",
        })
    }
}

fn unit_or_zero(mut v: DVector<f64>) -> DVector<f64> {
    let norm = v.norm();
    if norm > 0.0 {
        v /= norm;
    }
    v
}

fn sample_columns(patches: &DMatrix<f64>, n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let picks = rand::seq::index::sample(rng, patches.ncols(), n).into_vec();
    let mut basis = DMatrix::zeros(patches.nrows(), n);
    for (j, &c) in picks.iter().enumerate() {
        basis.set_column(j, &unit_or_zero(patches.column(c).clone_owned()));
    }
    basis
}

fn sq_dist(a: nalgebra::DVectorView<f64>, b: nalgebra::DVectorView<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm with k-means++ seeding. Returns raw centroids.
pub fn kmeans(patches: &DMatrix<f64>, k: usize, max_iter: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let (m, count) = patches.shape();
    let mut centroids = DMatrix::zeros(m, k);
    let first = rng.gen_range(0..count);
    centroids.set_column(0, &patches.column(first));
    let mut nearest: Vec<f64> = (0..count)
        .map(|i| sq_dist(patches.column(i), centroids.column(0)))
        .collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen_range(0.0..total);
            let mut chosen = count - 1;
            for (i, &d) in nearest.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.gen_range(0..count)
        };
        centroids.set_column(c, &patches.column(pick));
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq_dist(patches.column(i), centroids.column(c)));
        }
    }

    let mut assignment = vec![usize::MAX; count];
    for _ in 0..max_iter {
        let mut changed = false;
        for (i, slot) in assignment.iter_mut().enumerate() {
            let mut best = (f64::INFINITY, 0);
            for c in 0..k {
                let d = sq_dist(patches.column(i), centroids.column(c));
                if d < best.0 {
                    best = (d, c);
                }
            }
            if *slot != best.1 {
                *slot = best.1;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = DMatrix::<f64>::zeros(m, k);
        let mut counts = vec![0usize; k];
        for (i, &c) in assignment.iter().enumerate() {
            let mut col = sums.column_mut(c);
            col += patches.column(i);
            counts[c] += 1;
        }
        for c in 0..k {
            // empty clusters keep their previous centroid
            if counts[c] > 0 {
                centroids.set_column(c, &(sums.column(c) / counts[c] as f64));
            }
        }
    }
    centroids
}

/// Builds an initial dictionary of `n` bases from normalized patches.
pub fn init_dictionary(
    method: InitMethod,
    patches: &DMatrix<f64>,
    n: usize,
    epochs: usize,
    lambda: f64,
    seed: u64,
) -> Result<(Dictionary, OdlState)> {
    if n == 0 {
        return Err(Error::InvalidParameter("dictionary size must be ≥ 1".into()));
    }
    if patches.ncols() < n {
        return Err(Error::NotEnoughPatches {
            patches: patches.ncols(),
            bases: n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = patches.nrows();
    let mut state = OdlState::zeros(m, n, DEFAULT_BATCH);
    let dict = match method {
        InitMethod::RandomSample => Dictionary {
            basis: sample_columns(patches, n, &mut rng),
        },
        InitMethod::KMeans => {
            let mut basis = kmeans(patches, n, KMEANS_MAX_ITER, &mut rng);
            for j in 0..n {
                let c = unit_or_zero(basis.column(j).clone_owned());
                basis.set_column(j, &c);
            }
            Dictionary { basis }
        }
        InitMethod::Odl => {
            let mut dict = Dictionary {
                basis: sample_columns(patches, n, &mut rng),
            };
            for _ in 0..epochs {
                odl_epoch(&mut dict, &mut state, patches, lambda, &mut rng)?;
            }
            dict
        }
    };
    Ok((dict, state))
}

/// Per-basis weight `‖c_j‖ / Σ_l ‖c_l‖` over the rows of an `n × N` code matrix.
pub fn basis_weights(codes: &DMatrix<f64>) -> DVector<f64> {
    let n = codes.nrows();
    let norms = DVector::from_fn(n, |j, _| codes.row(j).norm());
    let total = norms.sum();
    if total > 0.0 {
        norms / total
    } else {
        DVector::from_element(n, 1.0 / n as f64)
    }
}

/// Indices of the `⌈n/2⌉` largest weights, ties to the lower index. Sorted ascending.
pub fn top_half(weights: &DVector<f64>) -> Vec<usize> {
    let n = weights.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    idx.truncate(n.div_ceil(2));
    idx.sort_unstable();
    idx
}

/// Appearance-change trigger over consecutive detections.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdatePolicy {
    pub overlap_threshold: f64,
    pub prev_top_set: Option<Vec<usize>>,
}

impl Default for UpdatePolicy {
    fn default() -> Self {
        Self {
            overlap_threshold: DEFAULT_OVERLAP_THRESHOLD,
            prev_top_set: None,
        }
    }
}

impl UpdatePolicy {
    pub fn new(overlap_threshold: f64) -> Result<Self> {
        if !(overlap_threshold > 0.0 && overlap_threshold <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "overlap threshold must be in (0, 1], got {overlap_threshold}"
            )));
        }
        Ok(Self {
            overlap_threshold,
            prev_top_set: None,
        })
    }

    /// Records the current top set; returns the overlap with the previous one.
    pub fn observe(&mut self, weights: &DVector<f64>) -> Option<f64> {
        let current = top_half(weights);
        let overlap = self.prev_top_set.as_ref().map(|prev| {
            let shared = prev.iter().filter(|i| current.binary_search(i).is_ok()).count();
            shared as f64 / current.len() as f64
        });
        self.prev_top_set = Some(current);
        overlap
    }

    /// True when the top-half overlap drops below the threshold. The first
    /// observation only seeds the previous set.
    pub fn should_update(&mut self, weights: &DVector<f64>) -> bool {
        matches!(self.observe(weights), Some(o) if o < self.overlap_threshold)
    }
}
