use crate::belief::VarId;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures raised by the numerical and planning pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not positive definite ({0})")]
    NotPositiveDefinite(&'static str),
    #[error("matrix is not symmetric (max relative asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("variable {0:?} already present in the belief")]
    DuplicateVariable(VarId),
    #[error("variable {0:?} is not part of the belief")]
    UnknownVariable(VarId),
    #[error("belief has no pose variable to propagate from")]
    MissingPose,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("requested depth {depth} exceeds the maximum {max} for {members} members")]
    DepthTooLarge { depth: usize, max: usize, members: usize },
    #[error("node ({level}, {index}) does not exist in the partition tree")]
    UnknownNode { level: usize, index: usize },
    #[error("nodes are not siblings")]
    NotSiblings,
    #[error("index {0} is not a member of the source node")]
    NotMembers(usize),
    #[error("invalid lower-bound cover: {0}")]
    InvalidCover(String),
    #[error("an upper-bound selection takes exactly one node, got {0}")]
    MultipleNodes(usize),
    #[error("measurement sets overlap at component {0}")]
    OverlappingSets(usize),

    #[error("covariance entries missing for state column {0}")]
    MissingCovarianceEntries(usize),
    #[error("new-variable Jacobian block lacks full column rank")]
    RankDeficientNew,
    #[error("data association inconsistent with the Jacobian: {0}")]
    InconsistentAssociation(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("components are not conditionally independent given X (deviation {0:e})")]
    NotConditionallyIndependent(f64),

    #[error("infeasible scenario configuration: {0}")]
    InfeasibleConfig(String),
    #[error("goal is unreachable from the start in the roadmap")]
    GoalUnreachable,
}
