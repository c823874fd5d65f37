use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite coordinate in point ({0}, {1}, {2})")]
    NonFinite(f64, f64, f64),
    #[error("rotation is not orthonormal with det +1 (orthogonality error {0:.3e})")]
    NonRigidRotation(f64),
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(&'static str),
    #[error("all seed candidates rejected as reflected noise")]
    NoValidSeeds,
    #[error("need at least 2 correspondences, got {0}")]
    TooFewCorrespondences(usize),
    #[error("every measurement was rejected (sum of weights is zero)")]
    AllMeasurementsRejected,
    #[error("translation consensus below quorum ({best} < {quorum})")]
    EmptyConsensus { best: usize, quorum: usize },
    #[error("matching produced {0} putative correspondences (need at least 2)")]
    MatchingFailed(usize),
    #[error("pose graph is disconnected ({0} nodes unreachable from the anchors)")]
    DisconnectedGraph(usize),
    #[error("pose graph has no anchored node")]
    NoAnchor,
    #[error("pose graph: {0}")]
    InvalidGraph(String),
    #[error("registration confidence too low ({inliers} inliers, need {quorum})")]
    LowConfidence { inliers: usize, quorum: usize },
    #[error("no inter-session loop passed verification")]
    NoInterLoops,
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("malformed file {path}: {reason}")]
    MalformedFile { path: PathBuf, reason: String },
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Error {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage { stage, source: Box::new(e) },
        }
    }
}

/// Tags the error of a result with the pipeline stage it came from.
pub trait StageContext<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageContext<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}
