use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot decode image {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("frame directory {0} does not exist")]
    MissingDirectory(PathBuf),

    #[error("no frames matching img%04d found in {0}")]
    NoFrames(PathBuf),

    #[error("gap at index {index} in {dir}")]
    FrameGap { dir: PathBuf, index: usize },

    #[error("truth length {truth} ≠ {frames} frames")]
    TruthLength { truth: usize, frames: usize },

    #[error("bad truth line {line}: {message}")]
    TruthParse { line: usize, message: String },

    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("region {w}x{h} after clipping is smaller than patch size {patch}")]
    RegionTooSmall { w: i64, h: i64, patch: usize },

    #[error("lasso did not converge in {iterations} passes (KKT residual {residual:.3e})")]
    LassoNoConvergence { iterations: usize, residual: f64 },

    #[error("fewer patches ({patches}) than requested bases ({bases})")]
    NotEnoughPatches { patches: usize, bases: usize },

    #[error("training set needs both classes (got {positives} positive, {negatives} negative)")]
    SingleClass { positives: usize, negatives: usize },

    #[error("non-finite feature value in training sample {0}")]
    NonFinite(usize),

    #[error("frame index {got} is not after previous frame {last}")]
    NonMonotoneFrame { last: usize, got: usize },

    #[error("synthetic target would leave the frame: {0}")]
    TargetOutOfFrame(String),

    #[error("no candidate box admits a patch grid")]
    NoValidCandidate,

    #[error("no valid negative sample around {0}")]
    NoNegatives(String),

    #[error("bad dictionary file: {0}")]
    DictionaryFormat(String),

    #[error("frame {frame}: {source}")]
    AtFrame {
        frame: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_frame(self, frame: usize) -> Self {
        match self {
            e @ Error::AtFrame { .. } => e,
            other => Error::AtFrame {
                frame,
                source: Box::new(other),
            },
        }
    }
}
