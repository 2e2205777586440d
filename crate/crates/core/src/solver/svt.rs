//! Dense proximal-gradient baseline on the block-symmetric lift.
//!
//! Minimizes `Σ_s (y_s − Z_{a_s b_s})² + γ·tr(Z)` over `Z ⪰ 0` with step `1/L`,
//! `L` the largest observation multiplicity. Every iteration needs a full
//! eigendecomposition, hence the size guard.

use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};

use super::{estimate_from_dense, IterRecord, ObservedPairs};
use crate::cmalgebra::CollectiveMatrix;
use crate::error::{Result, XmcError};
use crate::observation::ObservationSet;

pub const SVT_MAX_DIM: usize = 2000;

#[derive(Debug, Clone)]
pub struct SvtReport {
    pub history: Vec<IterRecord>,
    /// `[P_v(Z)]_v`.
    pub estimate: CollectiveMatrix,
    pub z: DMatrix<f64>,
    pub iterations: usize,
    /// Squared loss plus `γ·tr(Z)` at the returned iterate.
    pub objective: f64,
    pub loss: f64,
}

impl SvtReport {
    pub fn trace(&self) -> f64 {
        self.z.trace()
    }
}

pub fn svt_baseline(obs: &ObservationSet, gamma: f64, iters: usize) -> Result<SvtReport> {
    if !(gamma >= 0.0) {
        return Err(XmcError::InvalidConfig(format!("penalty must be nonnegative, got {gamma}")));
    }
    let schema = obs.schema().clone();
    let n = schema.total_size();
    if n > SVT_MAX_DIM {
        return Err(XmcError::TooLarge { n, limit: SVT_MAX_DIM });
    }
    let problem = ObservedPairs::new(obs)?;
    let lip = problem.max_multiplicity().max(1.0);
    let step = 1.0 / lip;
    let start = Instant::now();

    let pred_of = |z: &DMatrix<f64>| -> Vec<f64> {
        problem.pairs.iter().map(|&(a, b)| z[(a as usize, b as usize)]).collect()
    };
    let objective_of = |z: &DMatrix<f64>| {
        let loss = problem.loss_from_predictions(&pred_of(z), 1.0);
        (loss, loss + gamma * z.trace())
    };

    let mut z = DMatrix::<f64>::zeros(n, n);
    let mut history = Vec::with_capacity(iters);
    for t in 1..=iters {
        let pred = pred_of(&z);
        let g = problem.gradient_weights(&pred, 1.0);
        for (&(a, b), &gv) in problem.pairs.iter().zip(&g) {
            let (a, b) = (a as usize, b as usize);
            z[(a, b)] -= step * gv;
            z[(b, a)] -= step * gv;
        }
        z = soft_threshold_psd(z, gamma * step);
        let (_, objective) = objective_of(&z);
        history.push(IterRecord {
            iter: t,
            objective,
            gap: None,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
            matvecs: 0,
            eigen_tol: 0.0,
            eigen_residual: 0.0,
        });
    }
    let (loss, objective) = objective_of(&z);
    Ok(SvtReport {
        estimate: estimate_from_dense(&schema, &z, 1.0),
        history,
        iterations: iters,
        objective,
        loss,
        z,
    })
}

/// Eigenvalues `λ ↦ max(λ − τ, 0)`, result symmetrized exactly.
fn soft_threshold_psd(z: DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    let n = z.nrows();
    let sym = (&z + z.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut out = DMatrix::zeros(n, n);
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        let s = lam - tau;
        if s <= 0.0 {
            continue;
        }
        let v = eig.eigenvectors.column(j);
        out += (v * v.transpose()) * s;
    }
    (&out + out.transpose()) * 0.5
}
