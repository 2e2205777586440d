//! Trace-constrained SDP solver for collective matrix completion.
//!
//! The estimator minimizes `Σ_v ‖P_{Ω_v}(M_v − P_v(Z))‖_F²` over
//! `Z ⪰ 0, tr(Z) ≤ η`. After rescaling `Z ← Z/η` the feasible set is the unit
//! spectrahedron and the loss becomes `f̂_η(Z) = Σ_s (y_s − η Z_{a_s b_s})²`,
//! where `(a_s, b_s)` is the global block position of observation `s`.
//! Frank–Wolfe steps toward the best rank-one vertex `uuᵀ`, found by Lanczos
//! on `−∇f̂_η`.

pub mod lanczos;
pub mod lowrank;
pub mod svt;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cmalgebra::{extract_view, CollectiveMatrix};
use crate::error::{Result, XmcError};
use crate::observation::ObservationSet;
use crate::schema::CollectiveSchema;
use lanczos::{approx_top_eigvec, EigenOptions, SymmetricOperator};
pub use lowrank::LowRankPsd;

/// Observations folded onto distinct global pairs `(a, b)`, `a ≠ b`.
#[derive(Debug, Clone)]
pub struct ObservedPairs {
    schema: Arc<CollectiveSchema>,
    pairs: Vec<(u32, u32)>,
    mult: Vec<f64>,
    sum_y: Vec<f64>,
    sum_y2: f64,
    count: usize,
}

impl ObservedPairs {
    pub fn new(obs: &ObservationSet) -> Result<Self> {
        let schema = obs.schema().clone();
        schema.require_bipartite()?;
        let mut acc: BTreeMap<(u32, u32), (f64, f64)> = BTreeMap::new();
        let mut sum_y2 = 0.0;
        for &(idx, y) in obs.entries() {
            let (a, b) = schema.global_index(idx)?;
            let e = acc.entry((a as u32, b as u32)).or_insert((0.0, 0.0));
            e.0 += 1.0;
            e.1 += y;
            sum_y2 += y * y;
        }
        let mut pairs = Vec::with_capacity(acc.len());
        let mut mult = Vec::with_capacity(acc.len());
        let mut sum_y = Vec::with_capacity(acc.len());
        for (p, (m, s)) in acc {
            pairs.push(p);
            mult.push(m);
            sum_y.push(s);
        }
        Ok(Self {
            schema,
            pairs,
            mult,
            sum_y,
            sum_y2,
            count: obs.len(),
        })
    }

    pub fn schema(&self) -> &Arc<CollectiveSchema> {
        &self.schema
    }

    pub fn dim(&self) -> usize {
        self.schema.total_size()
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }

    /// |Ω| including duplicates.
    pub fn num_observations(&self) -> usize {
        self.count
    }

    pub fn max_multiplicity(&self) -> f64 {
        self.mult.iter().copied().fold(0.0, f64::max)
    }

    /// Σ_s y_s².
    pub fn y_norm_sq(&self) -> f64 {
        self.sum_y2
    }

    pub fn abs_sum_y_upper(&self) -> f64 {
        self.sum_y.iter().map(|s| s.abs()).sum()
    }

    /// `Z_{a b}` for every distinct pair.
    pub fn predictions(&self, state: &LowRankPsd) -> Vec<f64> {
        let mut out = vec![0.0; self.pairs.len()];
        for (c, w) in state.columns().iter().zip(state.weights()) {
            for (o, &(a, b)) in out.iter_mut().zip(&self.pairs) {
                *o += w * c[a as usize] * c[b as usize];
            }
        }
        out
    }

    /// f̂_η from per-pair predictions `Z_{ab}`.
    pub fn loss_from_predictions(&self, pred: &[f64], eta: f64) -> f64 {
        let mut quad = 0.0;
        for ((&m, &s), &z) in self.mult.iter().zip(&self.sum_y).zip(pred) {
            let ez = eta * z;
            quad += m * ez * ez - 2.0 * s * ez;
        }
        (self.sum_y2 + quad).max(0.0)
    }

    /// Gradient weights `g_p = −η (Σ_s y_s − mult_p η Z_{ab})`, placed at both
    /// `(a,b)` and `(b,a)`.
    pub fn gradient_weights(&self, pred: &[f64], eta: f64) -> Vec<f64> {
        self.mult
            .iter()
            .zip(&self.sum_y)
            .zip(pred)
            .map(|((&m, &s), &z)| -eta * (s - m * eta * z))
            .collect()
    }

    fn sparse(&self, weights: Vec<f64>) -> SparseSymmetric {
        SparseSymmetric {
            dim: self.dim(),
            pairs: self.pairs.clone(),
            values: weights,
        }
    }
}

/// Symmetric matrix with zero diagonal given by off-diagonal pairs;
/// `values[p]` sits at both `(a_p, b_p)` and `(b_p, a_p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymmetric {
    dim: usize,
    pairs: Vec<(u32, u32)>,
    values: Vec<f64>,
}

impl SparseSymmetric {
    pub fn pairs(&self) -> &[(u32, u32)] {
        &self.pairs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.dim, self.dim);
        for (&(a, b), &v) in self.pairs.iter().zip(&self.values) {
            g[(a as usize, b as usize)] += v;
            g[(b as usize, a as usize)] += v;
        }
        g
    }

    /// ⟨G, H⟩ for a dense symmetric `H`.
    pub fn inner_dense(&self, h: &DMatrix<f64>) -> f64 {
        self.pairs
            .iter()
            .zip(&self.values)
            .map(|(&(a, b), &v)| v * (h[(a as usize, b as usize)] + h[(b as usize, a as usize)]))
            .sum()
    }

    /// ⟨G, Z⟩ for a low-rank `Z`.
    pub fn inner_low_rank(&self, z: &LowRankPsd) -> f64 {
        self.pairs
            .iter()
            .zip(&self.values)
            .map(|(&(a, b), &v)| 2.0 * v * z.entry(a as usize, b as usize))
            .sum()
    }

    pub fn negated(&self) -> Self {
        Self {
            values: self.values.iter().map(|v| -v).collect(),
            ..self.clone()
        }
    }
}

impl SymmetricOperator for SparseSymmetric {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (&(a, b), &v) in self.pairs.iter().zip(&self.values) {
            let (a, b) = (a as usize, b as usize);
            y[a] += v * x[b];
            y[b] += v * x[a];
        }
    }
}

/// `−∇f̂_η` as a matvec-only operator over borrowed weights.
struct NegGradient<'a> {
    dim: usize,
    pairs: &'a [(u32, u32)],
    weights: &'a [f64],
}

impl SymmetricOperator for NegGradient<'_> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (&(a, b), &g) in self.pairs.iter().zip(self.weights) {
            let (a, b) = (a as usize, b as usize);
            y[a] -= g * x[b];
            y[b] -= g * x[a];
        }
    }
}

/// f̂_η(Z) evaluated from the low-rank form.
pub fn loss(state: &LowRankPsd, problem: &ObservedPairs, eta: f64) -> f64 {
    problem.loss_from_predictions(&problem.predictions(state), eta)
}

/// ∇f̂_η(Z) with the convention ⟨G, H⟩ = directional derivative along symmetric H.
pub fn gradient(state: &LowRankPsd, problem: &ObservedPairs, eta: f64) -> SparseSymmetric {
    let pred = problem.predictions(state);
    problem.sparse(problem.gradient_weights(&pred, eta))
}

/// Curvature constant of f̂_η on the unit spectrahedron:
/// sup 2η² Σ_s (S−Z)²_{a_s b_s} = 2η² · (largest multiplicity).
pub fn curvature_constant(problem: &ObservedPairs, eta: f64) -> f64 {
    2.0 * eta * eta * problem.max_multiplicity()
}

/// Frank–Wolfe linear minimization over `{Z ⪰ 0, tr Z ≤ 1}`: the vertex `uuᵀ`
/// for the top eigenvector `u` of `−G`, or `0` when `λ_max(−G) ≤ 0`.
#[derive(Debug, Clone)]
pub struct Vertex {
    pub direction: Option<Vec<f64>>,
    /// max(λ_max(−G), 0) estimate, equal to −⟨G, S⟩.
    pub value: f64,
    pub residual: f64,
    pub converged: bool,
    pub matvecs: usize,
}

fn linear_oracle(
    problem: &ObservedPairs,
    weights: &[f64],
    opts: &EigenOptions,
    warm: Option<&[f64]>,
) -> Vertex {
    if weights.iter().all(|&g| g == 0.0) {
        return Vertex {
            direction: None,
            value: 0.0,
            residual: 0.0,
            converged: true,
            matvecs: 0,
        };
    }
    let op = NegGradient {
        dim: problem.dim(),
        pairs: &problem.pairs,
        weights,
    };
    let e = approx_top_eigvec(&op, opts, warm);
    if e.value > 0.0 {
        Vertex {
            direction: Some(e.vector),
            value: e.value,
            residual: e.residual,
            converged: e.converged,
            matvecs: e.matvecs,
        }
    } else {
        Vertex {
            direction: None,
            value: 0.0,
            residual: e.residual,
            converged: e.converged,
            matvecs: e.matvecs,
        }
    }
}

/// Frank–Wolfe gap `g(Z) = ⟨∇f̂(Z), Z − S⟩` with `S` the oracle vertex.
pub fn duality_gap(state: &LowRankPsd, problem: &ObservedPairs, eta: f64, tol: f64, seed: u64) -> f64 {
    let pred = problem.predictions(state);
    let g = problem.gradient_weights(&pred, eta);
    let vertex = linear_oracle(
        problem,
        &g,
        &EigenOptions {
            tol,
            max_steps: problem.dim(),
            seed,
        },
        None,
    );
    gap_value(&g, &pred, vertex.value)
}

fn gap_value(g: &[f64], pred: &[f64], vertex_value: f64) -> f64 {
    let gz: f64 = g.iter().zip(pred).map(|(g, z)| 2.0 * g * z).sum();
    gz + vertex_value
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Trace bound η; `None` selects it by the noise-free sweep.
    pub eta: Option<f64>,
    #[serde(alias = "T")]
    pub max_iters: usize,
    /// Stop once the Frank–Wolfe gap drops to this value. Zero disables the check.
    #[serde(alias = "epsilon")]
    pub gap_tol: f64,
    pub seed: u64,
    /// Also run the dense proximal baseline.
    pub baseline: bool,
    /// Krylov dimension cap for each oracle call.
    pub max_lanczos_steps: usize,
    /// Sweep target as a fraction of ‖y‖.
    pub residual_tol: f64,
    pub max_doublings: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eta: None,
            max_iters: 1000,
            gap_tol: 1e-6,
            seed: 0,
            baseline: false,
            max_lanczos_steps: 200,
            residual_tol: 1e-3,
            max_doublings: 20,
        }
    }
}

impl SolverConfig {
    pub fn with_eta(eta: f64) -> Self {
        Self {
            eta: Some(eta),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(eta) = self.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(XmcError::InvalidConfig(format!("trace bound must be positive, got {eta}")));
            }
        }
        if self.max_iters == 0 {
            return Err(XmcError::InvalidConfig("max_iters must be at least 1".into()));
        }
        if !(self.gap_tol >= 0.0) {
            return Err(XmcError::InvalidConfig("gap_tol must be nonnegative".into()));
        }
        if self.max_lanczos_steps == 0 {
            return Err(XmcError::InvalidConfig("max_lanczos_steps must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterRecord {
    pub iter: usize,
    pub objective: f64,
    /// Frank–Wolfe gap at this iterate; absent for the proximal baseline.
    pub gap: Option<f64>,
    pub elapsed_ms: f64,
    pub matvecs: usize,
    pub eigen_tol: f64,
    pub eigen_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GapReached,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct SolverReport {
    pub history: Vec<IterRecord>,
    /// `[P_v(ηZ)]_v`.
    pub estimate: CollectiveMatrix,
    pub eta: f64,
    pub iterations: usize,
    pub termination: Termination,
    /// f̂_η at the returned iterate.
    pub objective: f64,
    /// Last measured gap.
    pub gap: f64,
    /// f̂_η(Z⁽¹⁾), the scale used by the eigen tolerance schedule.
    pub initial_objective: f64,
    pub state: LowRankPsd,
}

impl SolverReport {
    /// ‖P_Ω(y − estimate)‖ with multiplicity.
    pub fn training_residual(&self) -> f64 {
        self.objective.sqrt()
    }
}

/// Estimate `[P_v(ηZ)]` from a low-rank iterate.
pub fn estimate_from_state(schema: &Arc<CollectiveSchema>, state: &LowRankPsd, eta: f64) -> CollectiveMatrix {
    let f = state.scaled_factor();
    let views = (0..schema.num_views())
        .map(|v| {
            let view = schema.view(v);
            let (r, c) = schema.view_shape(v);
            if f.ncols() == 0 {
                return DMatrix::zeros(r, c);
            }
            let fr = f.rows(schema.offset(view.row), r);
            let fc = f.rows(schema.offset(view.col), c);
            (fr * fc.transpose()) * eta
        })
        .collect();
    CollectiveMatrix::from_views(schema.clone(), views).expect("estimate shapes follow the schema")
}

/// Dense variant used by tests and the baseline.
pub fn estimate_from_dense(schema: &Arc<CollectiveSchema>, z: &DMatrix<f64>, eta: f64) -> CollectiveMatrix {
    let views = (0..schema.num_views())
        .map(|v| extract_view(schema, z, v) * eta)
        .collect();
    CollectiveMatrix::from_views(schema.clone(), views).expect("estimate shapes follow the schema")
}

/// Hazan's algorithm on the unit spectrahedron with step `α_t = 2/(2+t)`.
pub fn hazan_cmc(obs: &ObservationSet, config: &SolverConfig) -> Result<SolverReport> {
    config.validate()?;
    let eta = config
        .eta
        .ok_or_else(|| XmcError::InvalidConfig("hazan_cmc needs an explicit trace bound".into()))?;
    let problem = ObservedPairs::new(obs)?;
    Ok(hazan_on_pairs(&problem, eta, config))
}

pub(crate) fn hazan_on_pairs(problem: &ObservedPairs, eta: f64, config: &SolverConfig) -> SolverReport {
    let start = Instant::now();
    let n = problem.dim();
    let steps = config.max_lanczos_steps.min(n);
    let mut state = LowRankPsd::zero(n);
    let mut pred = vec![0.0; problem.num_pairs()];

    // Z⁽¹⁾ from the oracle at Z = 0.
    let g0 = problem.gradient_weights(&pred, eta);
    let f0 = problem.y_norm_sq();
    let init = linear_oracle(
        problem,
        &g0,
        &EigenOptions {
            tol: 1e-10 * f0.max(1.0),
            max_steps: steps,
            seed: config.seed,
        },
        None,
    );
    let mut warm = init.direction.clone();
    if let Some(u) = init.direction {
        for (p, &(a, b)) in pred.iter_mut().zip(&problem.pairs) {
            *p = u[a as usize] * u[b as usize];
        }
        state.convex_step(1.0, Some(u));
    }
    let initial_objective = problem.loss_from_predictions(&pred, eta);
    let scale = initial_objective.max(1.0);

    let mut history = Vec::with_capacity(config.max_iters);
    let mut termination = Termination::MaxIterations;
    let mut last_gap = f64::INFINITY;
    let mut t = 1;
    while t <= config.max_iters {
        if t % 100 == 0 {
            state.recompress();
            pred = problem.predictions(&state);
        }
        let objective = problem.loss_from_predictions(&pred, eta);
        let g = problem.gradient_weights(&pred, eta);
        let tf = t as f64;
        let eigen_tol = (1.0 / (tf * tf)).max(1e-12) * scale;
        let vertex = linear_oracle(
            problem,
            &g,
            &EigenOptions {
                tol: eigen_tol,
                max_steps: steps,
                seed: config.seed.wrapping_add(t as u64),
            },
            warm.as_deref(),
        );
        let gap = gap_value(&g, &pred, vertex.value);
        last_gap = gap;
        history.push(IterRecord {
            iter: t,
            objective,
            gap: Some(gap),
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
            matvecs: vertex.matvecs,
            eigen_tol,
            eigen_residual: vertex.residual,
        });
        if config.gap_tol > 0.0 && gap <= config.gap_tol {
            termination = Termination::GapReached;
            break;
        }
        let alpha = 2.0 / (2.0 + tf);
        match &vertex.direction {
            Some(u) => {
                for (p, &(a, b)) in pred.iter_mut().zip(&problem.pairs) {
                    *p = (1.0 - alpha) * *p + alpha * u[a as usize] * u[b as usize];
                }
            }
            None => pred.iter_mut().for_each(|p| *p *= 1.0 - alpha),
        }
        if vertex.direction.is_some() {
            warm = vertex.direction.clone();
        }
        state.convex_step(alpha, vertex.direction);
        t += 1;
    }
    let iterations = history.len();
    pred = problem.predictions(&state);
    let objective = problem.loss_from_predictions(&pred, eta);
    SolverReport {
        estimate: estimate_from_state(problem.schema(), &state, eta),
        history,
        eta,
        iterations,
        termination,
        objective,
        gap: last_gap,
        initial_objective,
        state,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepStep {
    pub eta: f64,
    pub residual: f64,
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct NoiseFreeSolution {
    pub report: SolverReport,
    pub sweep: Vec<SweepStep>,
    /// Residual target ω = residual_tol·‖y‖.
    pub target: f64,
    pub residual: f64,
    pub target_met: bool,
}

/// Noise-free estimator. With a fixed η this is one Hazan run whose residual
/// is reported against the target; otherwise η doubles from the floor
/// `Σ_s|y_s|/√|Ω|` until the training residual reaches `residual_tol·‖y‖`.
/// The sweep gives up after `max_doublings` doublings, or earlier once the
/// residual has risen twice in a row.
pub fn solve_noise_free(obs: &ObservationSet, config: &SolverConfig) -> Result<NoiseFreeSolution> {
    config.validate()?;
    let problem = ObservedPairs::new(obs)?;
    let y_norm = problem.y_norm_sq().sqrt();
    let target = config.residual_tol * y_norm;
    let run = |eta: f64| {
        let report = hazan_on_pairs(&problem, eta, config);
        let residual = report.training_residual();
        let step = SweepStep {
            eta,
            residual,
            objective: report.objective,
            iterations: report.iterations,
        };
        (report, step)
    };

    if let Some(eta) = config.eta {
        let (report, step) = run(eta);
        let residual = step.residual;
        return Ok(NoiseFreeSolution {
            report,
            sweep: vec![step],
            target,
            residual,
            target_met: residual <= target,
        });
    }

    let count = obs.len().max(1) as f64;
    let abs_sum: f64 = obs.entries().iter().map(|e| e.1.abs()).sum();
    let floor = abs_sum / count.sqrt();
    let mut eta = if floor > 0.0 { floor } else { 1.0 };
    let mut sweep: Vec<SweepStep> = Vec::new();
    let mut rises = 0;
    for _ in 0..=config.max_doublings {
        let (report, step) = run(eta);
        let residual = step.residual;
        if let Some(prev) = sweep.last() {
            rises = if residual > prev.residual { rises + 1 } else { 0 };
        }
        sweep.push(step);
        if residual <= target {
            return Ok(NoiseFreeSolution {
                report,
                sweep,
                target,
                residual,
                target_met: true,
            });
        }
        // Past the useful range the fixed iteration budget no longer fits.
        if rises >= 2 {
            break;
        }
        eta *= 2.0;
    }
    let best = sweep
        .iter()
        .min_by(|a, b| a.residual.total_cmp(&b.residual))
        .expect("at least one sweep step");
    Err(XmcError::SweepExhausted {
        doublings: sweep.len() - 1,
        residual: best.residual,
        eta: best.eta,
        target,
    })
}
