//! Collective matrix completion: schemas over entity-relationship graphs,
//! collective-matrix algebra, tangent-space diagnostics, sampling, and a
//! Frank–Wolfe SDP solver.

pub mod cmalgebra;
pub mod error;
pub mod factorspace;
pub mod harness;
pub mod io;
pub mod observation;
pub mod schema;
pub mod solver;

pub use cmalgebra::{atom, basis, BlockSymmetric, CollectiveMatrix, SparseCollective};
pub use error::{Result, SchemaViolation, XmcError};
pub use factorspace::{FactorSet, Mu0Estimate, TangentBasis};
pub use observation::{Noise, ObservationSet, QuotaPreset, SamplingPlan, TheoryReport};
pub use schema::{BasisIndex, CollectiveSchema, Entity, View};
pub use solver::{hazan_cmc, solve_noise_free, SolverConfig, SolverReport};
