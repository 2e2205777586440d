use std::fmt;

use thiserror::Error;

/// A single structural problem found while validating a schema.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SchemaViolation {
    /// Entity type with zero instances (1-based entity id).
    EmptyEntity { entity: usize },
    /// View whose row and column entity coincide (1-based view id).
    SelfView { view: usize },
    /// Two views declared over the same unordered entity pair.
    DuplicateView { first: usize, second: usize },
    /// View endpoint names an entity that does not exist.
    UnknownEntity { view: usize, entity: usize },
    /// Entity graph splits into more than one connected component.
    Disconnected { components: Vec<Vec<usize>> },
    /// Entity graph contains an odd cycle (1-based entity ids, closed walk).
    OddCycle { cycle: Vec<usize> },
    /// Entity with no incident view (m_k = 0).
    IsolatedEntity { entity: usize },
}

impl fmt::Display for SchemaViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EmptyEntity { entity } => write!(f, "entity {entity} has size 0"),
            Self::SelfView { view } => write!(f, "view {view} relates an entity type to itself"),
            Self::DuplicateView { first, second } => {
                write!(f, "views {first} and {second} relate the same entity pair")
            }
            Self::UnknownEntity { view, entity } => {
                write!(f, "view {view} references unknown entity {entity}")
            }
            Self::Disconnected { components } => write!(
                f,
                "entity graph has {} connected components {:?}; split the schema and solve each part separately",
                components.len(),
                components
            ),
            Self::OddCycle { cycle } => write!(f, "entity graph has an odd cycle {cycle:?}"),
            Self::IsolatedEntity { entity } => {
                write!(f, "entity {entity} is not incident to any view")
            }
        }
    }
}

fn join_violations(v: &[SchemaViolation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error)]
pub enum XmcError {
    #[error("invalid schema: {}", join_violations(.0))]
    InvalidSchema(Vec<SchemaViolation>),
    #[error("schema is not bipartite: odd cycle through entities {0:?}")]
    OddCycle(Vec<usize>),
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("vector is not unit length (norm {0})")]
    NonUnitVector(f64),
    #[error("factors do not synthesize the given matrix (relative error {0:.3e})")]
    FactorMismatch(f64),
    #[error("invalid sampling plan: {0}")]
    InvalidPlan(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("problem too large for dense baseline: N = {n} exceeds {limit}")]
    TooLarge { n: usize, limit: usize },
    #[error("trace sweep exhausted after {doublings} doublings (best residual {residual:.3e} at trace {eta:.3e}, target {target:.3e})")]
    SweepExhausted {
        doublings: usize,
        residual: f64,
        eta: f64,
        target: f64,
    },
    #[error("evaluation mask selects no cells")]
    EmptyMask,
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, XmcError>;
