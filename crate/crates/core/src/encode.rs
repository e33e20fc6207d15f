//! Patch encoders: soft threshold (ST), triangle k-means (TK), soft
//! assignment (SA), localized soft assignment (LSA) and rectified sparse
//! coding (SC).

use nalgebra::DMatrix;

use crate::dictlearn::Dictionary;
use crate::error::{Error, Result};
use crate::lasso::LassoSolver;
use crate::patchgrid::PatchMatrix;
use crate::seqio::BoundingBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderMethod {
    SoftThreshold,
    TriangleKMeans,
    SoftAssignment,
    LocalizedSoftAssignment,
    SparseCoding,
}

impl std::str::FromStr for EncoderMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "st" => Ok(Self::SoftThreshold),
            "tk" => Ok(Self::TriangleKMeans),
            "sa" => Ok(Self::SoftAssignment),
            "lsa" => Ok(Self::LocalizedSoftAssignment),
            "sc" => Ok(Self::SparseCoding),
            other => Err(Error::InvalidParameter(format!("unknown encoder {other:?}"))),
        }
    }
}

impl std::fmt::Display for EncoderMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::SoftThreshold => "st",
            Self::TriangleKMeans => "tk",
            Self::SoftAssignment => "sa",
            Self::LocalizedSoftAssignment => "lsa",
            Self::SparseCoding => "sc",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderSpec {
    pub method: EncoderMethod,
    /// ST threshold as a fraction of `max(DᵀX)`.
    pub st_fraction: f64,
    /// SA/LSA smoothing factor.
    pub beta: f64,
    /// LSA neighborhood size.
    pub k: usize,
    pub sc_lambda: f64,
    /// Normalize LSA over the k neighbors instead of all bases.
    pub lsa_local_denominator: bool,
}

impl Default for EncoderSpec {
    fn default() -> Self {
        Self {
            method: EncoderMethod::SoftThreshold,
            st_fraction: 0.25,
            beta: 10.0,
            k: 10,
            sc_lambda: 0.25,
            lsa_local_denominator: false,
        }
    }
}

impl EncoderSpec {
    pub fn with_method(method: EncoderMethod) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.st_fraction > 0.0 && self.st_fraction < 1.0) {
            return bad(format!("st_fraction must be in (0,1), got {}", self.st_fraction));
        }
        if !(self.beta > 0.0) {
            return bad(format!("beta must be > 0, got {}", self.beta));
        }
        if self.method == EncoderMethod::LocalizedSoftAssignment && (self.k == 0 || self.k > n) {
            return bad(format!("k must be in 1..={n}, got {}", self.k));
        }
        if !(self.sc_lambda > 0.0) {
            return bad(format!("sc_lambda must be > 0, got {}", self.sc_lambda));
        }
        Ok(())
    }
}

/// Encoded responses, `n × N`, aligned with the source patches.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeMatrix {
    pub data: DMatrix<f64>,
    pub positions: Vec<(usize, usize)>,
    pub region: BoundingBox,
}

/// Encoder bound to one dictionary; reuses per-dictionary precomputation.
pub struct Encoder<'a> {
    dict: &'a Dictionary,
    spec: EncoderSpec,
    basis_sq_norms: Vec<f64>,
    lasso: Option<LassoSolver<'a>>,
}

impl<'a> Encoder<'a> {
    pub fn new(dict: &'a Dictionary, spec: EncoderSpec) -> Result<Self> {
        spec.validate(dict.size())?;
        let lasso = (spec.method == EncoderMethod::SparseCoding).then(|| LassoSolver::new(&dict.basis));
        Ok(Self {
            dict,
            spec,
            basis_sq_norms: dict.basis.column_iter().map(|c| c.norm_squared()).collect(),
            lasso,
        })
    }

    pub fn spec(&self) -> &EncoderSpec {
        &self.spec
    }

    /// Raw responses `DᵀX`.
    pub fn project(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.dict.basis.transpose() * x
    }

    /// ST threshold `s = st_fraction · max(DᵀX)` for a batch.
    pub fn st_threshold(&self, x: &DMatrix<f64>) -> f64 {
        self.spec.st_fraction * self.project(x).max()
    }

    fn check(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.nrows() != self.dict.dim() {
            return Err(Error::DimensionMismatch(format!(
                "patch dimension {} vs dictionary dimension {}",
                x.nrows(),
                self.dict.dim()
            )));
        }
        Ok(())
    }

    /// Encodes a batch. For ST the threshold comes from this batch.
    pub fn encode_matrix(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.encode_matrix_with_threshold(x, None)
    }

    /// Encodes a batch, using `st_threshold` for ST when given.
    pub fn encode_matrix_with_threshold(&self, x: &DMatrix<f64>, st_threshold: Option<f64>) -> Result<DMatrix<f64>> {
        self.check(x)?;
        let proj = self.project(x);
        if x.ncols() == 0 {
            return Ok(proj);
        }
        Ok(match self.spec.method {
            EncoderMethod::SoftThreshold => {
                let s = st_threshold.unwrap_or_else(|| self.spec.st_fraction * proj.max());
                proj.map(|v| (v - s).max(0.0))
            }
            EncoderMethod::SparseCoding => {
                let solver = self.lasso.as_ref().expect("solver built for SC");
                let mut codes = DMatrix::zeros(proj.nrows(), proj.ncols());
                for (k, corr) in proj.column_iter().enumerate() {
                    let alpha = solver.solve_with_correlation(&corr.clone_owned(), self.spec.sc_lambda)?;
                    codes.set_column(k, &alpha.map(|v| v.max(0.0)));
                }
                codes
            }
            _ => {
                let n = proj.nrows();
                let mut codes = DMatrix::zeros(n, proj.ncols());
                let mut dist = vec![0.0; n];
                for (k, xcol) in x.column_iter().enumerate() {
                    let xsq = xcol.norm_squared();
                    for j in 0..n {
                        dist[j] = (xsq - 2.0 * proj[(j, k)] + self.basis_sq_norms[j]).max(0.0);
                    }
                    self.distance_code(&dist, codes.column_mut(k).as_mut_slice());
                }
                codes
            }
        })
    }

    /// TK, SA and LSA from squared distances to every basis.
    fn distance_code(&self, sq_dist: &[f64], out: &mut [f64]) {
        let n = sq_dist.len();
        let beta = self.spec.beta;
        match self.spec.method {
            EncoderMethod::TriangleKMeans => {
                let dist: Vec<f64> = sq_dist.iter().map(|d| d.sqrt()).collect();
                let mu = dist.iter().sum::<f64>() / n as f64;
                for (o, d) in out.iter_mut().zip(&dist) {
                    *o = (mu - d).max(0.0);
                }
            }
            EncoderMethod::SoftAssignment | EncoderMethod::LocalizedSoftAssignment => {
                let shift = sq_dist.iter().fold(f64::INFINITY, |a, &b| a.min(b));
                let weights: Vec<f64> = sq_dist.iter().map(|d| (-beta * (d - shift)).exp()).collect();
                if self.spec.method == EncoderMethod::SoftAssignment {
                    let total: f64 = weights.iter().sum();
                    for (o, w) in out.iter_mut().zip(&weights) {
                        *o = w / total;
                    }
                } else {
                    let mut order: Vec<usize> = (0..n).collect();
                    order.sort_by(|&a, &b| sq_dist[a].total_cmp(&sq_dist[b]).then(a.cmp(&b)));
                    let nearest = &order[..self.spec.k];
                    let total: f64 = if self.spec.lsa_local_denominator {
                        nearest.iter().map(|&j| weights[j]).sum()
                    } else {
                        weights.iter().sum()
                    };
                    out.iter_mut().for_each(|o| *o = 0.0);
                    for &j in nearest {
                        out[j] = weights[j] / total;
                    }
                }
            }
            EncoderMethod::SoftThreshold | EncoderMethod::SparseCoding => unreachable!(),
        }
    }

    pub fn encode(&self, patches: &PatchMatrix) -> Result<CodeMatrix> {
        Ok(CodeMatrix {
            data: self.encode_matrix(&patches.data)?,
            positions: patches.positions.clone(),
            region: patches.region,
        })
    }
}

pub fn encode(dict: &Dictionary, patches: &PatchMatrix, spec: &EncoderSpec) -> Result<CodeMatrix> {
    Encoder::new(dict, *spec)?.encode(patches)
}
