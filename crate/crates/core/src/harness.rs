//! Synthetic experiments: ground-truth generation, error metrics, the
//! fraction sweep, and the diagnostics bundle.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cmalgebra::CollectiveMatrix;
use crate::error::{Result, XmcError};
use crate::factorspace::{FactorSet, Mu0Estimate};
use crate::observation::{lemma3_check, observe, Lemma3Summary, Noise, QuotaPreset, SamplingPlan, TheoryReport};
use crate::schema::{BasisIndex, CollectiveSchema};
use crate::solver::{hazan_cmc, solve_noise_free, SolverConfig};

/// Standard-normal factors of rank `rank` and the collective matrix they generate.
pub fn generate_synthetic(
    schema: Arc<CollectiveSchema>,
    rank: usize,
    seed: u64,
) -> Result<(FactorSet, CollectiveMatrix)> {
    schema.require_bipartite()?;
    let factors = FactorSet::random_gaussian(schema, rank, seed);
    let m = factors.synthesize();
    Ok((factors, m))
}

/// Cells over which an error is measured.
#[derive(Debug, Clone, Copy)]
pub enum Mask<'a> {
    All,
    /// Every cell not listed in the observed multiset.
    HeldOut(&'a [BasisIndex]),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rmse {
    pub absolute: f64,
    /// Absolute RMSE over the truth's RMS on the same cells.
    pub relative: f64,
    pub cells: usize,
}

pub fn rmse(estimate: &CollectiveMatrix, truth: &CollectiveMatrix, mask: Mask<'_>) -> Result<Rmse> {
    if **estimate.schema() != **truth.schema() {
        return Err(XmcError::SchemaMismatch("estimate and truth schemas differ".into()));
    }
    let schema = truth.schema();
    let observed: BTreeSet<BasisIndex> = match mask {
        Mask::All => BTreeSet::new(),
        Mask::HeldOut(idx) => idx.iter().copied().collect(),
    };
    let (mut err, mut norm, mut cells) = (0.0, 0.0, 0usize);
    for idx in schema.basis_indices() {
        if observed.contains(&idx) {
            continue;
        }
        let t = truth.get(idx);
        let d = estimate.get(idx) - t;
        err += d * d;
        norm += t * t;
        cells += 1;
    }
    if cells == 0 {
        return Err(XmcError::EmptyMask);
    }
    let relative = if norm > 0.0 {
        (err / norm).sqrt()
    } else if err == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(Rmse {
        absolute: (err / cells as f64).sqrt(),
        relative,
        cells,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankRule {
    Fixed(usize),
    /// `round(2 ln n)`.
    TwoLogN,
}

impl RankRule {
    pub fn rank(&self, n: usize) -> usize {
        match *self {
            RankRule::Fixed(r) => r,
            RankRule::TwoLogN => ((2.0 * (n as f64).ln()).round() as usize).max(1),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Custom schema; when absent the four-entity preset is built for each size.
    #[serde(skip)]
    pub schema: Option<Arc<CollectiveSchema>>,
    pub sizes: Vec<usize>,
    pub rank: RankRule,
    /// |Ω| as a fraction of the total number of cells.
    pub fractions: Vec<f64>,
    pub quota: QuotaPreset,
    pub sigma: f64,
    pub solver: SolverConfig,
    pub seed: u64,
    pub repetitions: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema: None,
            sizes: vec![50, 100],
            rank: RankRule::TwoLogN,
            fractions: (1..=10).map(|i| i as f64 / 10.0).collect(),
            quota: QuotaPreset::Proportional,
            sigma: 0.0,
            solver: SolverConfig {
                max_iters: 1000,
                ..SolverConfig::default()
            },
            seed: 0,
            repetitions: 5,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema.is_none() && self.sizes.is_empty() {
            return Err(XmcError::InvalidConfig("no sizes given".into()));
        }
        if self.sizes.contains(&0) {
            return Err(XmcError::InvalidConfig("sizes must be positive".into()));
        }
        if self.fractions.is_empty() {
            return Err(XmcError::InvalidConfig("empty fraction grid".into()));
        }
        if let Some(f) = self.fractions.iter().find(|&&f| !(f > 0.0 && f <= 1.0)) {
            return Err(XmcError::InvalidConfig(format!("fraction {f} outside (0, 1]")));
        }
        if self.repetitions == 0 {
            return Err(XmcError::InvalidConfig("repetitions must be at least 1".into()));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(XmcError::InvalidConfig(format!("invalid noise level {}", self.sigma)));
        }
        if let RankRule::Fixed(0) = self.rank {
            return Err(XmcError::InvalidConfig("rank must be at least 1".into()));
        }
        let mut solver = self.solver;
        solver.eta = solver.eta.or(Some(1.0));
        solver.validate()
    }

    fn schema_for(&self, n: usize) -> Result<Arc<CollectiveSchema>> {
        match &self.schema {
            Some(s) => Ok(s.clone()),
            None => Ok(Arc::new(CollectiveSchema::four_entity_preset(n)?)),
        }
    }

    fn size_list(&self) -> Vec<usize> {
        match &self.schema {
            Some(s) => vec![s.entities().iter().map(|e| e.size).max().unwrap_or(0)],
            None => self.sizes.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub n: usize,
    pub rank: usize,
    pub fraction_index: usize,
    pub repetition: usize,
    pub observations: usize,
    /// |Ω| / Σ_v n_{r_v} n_{c_v}.
    pub fraction: f64,
    /// min_k |Ω_k| / (n_k R ln N).
    pub normalized: f64,
    pub rmse_full_abs: f64,
    pub rmse_full_rel: f64,
    pub rmse_heldout_abs: Option<f64>,
    pub rmse_heldout_rel: Option<f64>,
    pub iterations: usize,
    pub gap: f64,
    pub eta: f64,
    pub seed: u64,
}

/// SplitMix64 finalizer.
pub fn mix_seed(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the ground truth for size `n`, repetition `rep`; shared across fractions.
pub fn truth_seed(base: u64, n: usize, rep: usize) -> u64 {
    mix_seed(base ^ mix_seed((n as u64) << 32 | rep as u64))
}

/// min_k |Ω_k| / (n_k R ln N) of a plan.
pub fn normalized_sample_size(plan: &SamplingPlan, rank: usize) -> f64 {
    let s = plan.schema();
    let ln_n = (s.total_size() as f64).ln();
    (0..s.num_entities())
        .map(|k| plan.quotas()[k] / (s.size(k) as f64 * rank as f64 * ln_n))
        .fold(f64::INFINITY, f64::min)
}

/// One sweep cell.
pub fn run_cell(config: &ExperimentConfig, n: usize, fraction_index: usize, rep: usize) -> Result<ExperimentRow> {
    let schema = config.schema_for(n)?;
    let rank = config.rank.rank(n);
    let fraction = config.fractions[fraction_index];
    let seed = truth_seed(config.seed, n, rep);
    let (factors, truth) = generate_synthetic(schema.clone(), rank, seed)?;
    let total = ((fraction * schema.num_cells() as f64).round() as usize).max(1);
    let plan_seed = mix_seed(seed ^ (fraction_index as u64 + 1));
    let plan = SamplingPlan::with_preset(schema.clone(), config.quota, total, plan_seed)?;
    let indices = plan.sample();
    let noise = if config.sigma > 0.0 {
        Noise::Gaussian { sigma: config.sigma }
    } else {
        Noise::None
    };
    let obs = observe(&truth, &indices, noise, mix_seed(plan_seed))?.with_plan(plan.clone());

    let report = match (noise, config.solver.eta) {
        (_, Some(_)) => hazan_cmc(&obs, &config.solver)?,
        (Noise::None, None) => hazan_cmc(
            &obs,
            &SolverConfig {
                eta: Some(factors.trace()),
                ..config.solver
            },
        )?,
        (Noise::Gaussian { sigma }, None) => {
            let floor = 1.05 * sigma * (obs.len() as f64).sqrt() / obs.norm().max(f64::MIN_POSITIVE);
            let cfg = SolverConfig {
                residual_tol: config.solver.residual_tol.max(floor),
                ..config.solver
            };
            solve_noise_free(&obs, &cfg)?.report
        }
    };

    let full = rmse(&report.estimate, &truth, Mask::All)?;
    let held = match rmse(&report.estimate, &truth, Mask::HeldOut(&indices)) {
        Ok(r) => Some(r),
        Err(XmcError::EmptyMask) => None,
        Err(e) => return Err(e),
    };
    Ok(ExperimentRow {
        n,
        rank,
        fraction_index,
        repetition: rep,
        observations: total,
        fraction: total as f64 / schema.num_cells() as f64,
        normalized: normalized_sample_size(&plan, rank),
        rmse_full_abs: full.absolute,
        rmse_full_rel: full.relative,
        rmse_heldout_abs: held.map(|r| r.absolute),
        rmse_heldout_rel: held.map(|r| r.relative),
        iterations: report.iterations,
        gap: report.gap,
        eta: report.eta,
        seed,
    })
}

/// Every (size, fraction, repetition) cell, run in parallel and sorted.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<ExperimentRow>> {
    config.validate()?;
    let cells: Vec<(usize, usize, usize)> = config
        .size_list()
        .into_iter()
        .flat_map(|n| {
            (0..config.fractions.len())
                .flat_map(move |f| (0..config.repetitions).map(move |r| (n, f, r)))
        })
        .collect();
    let mut rows = cells
        .into_par_iter()
        .map(|(n, f, r)| run_cell(config, n, f, r))
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by_key(|r| (r.n, r.fraction_index, r.repetition));
    Ok(rows)
}

/// Median relative RMSE per (n, fraction index); held-out when available.
pub fn median_curve(rows: &[ExperimentRow], heldout: bool) -> Vec<CurvePoint> {
    let mut keys: Vec<(usize, usize)> = rows.iter().map(|r| (r.n, r.fraction_index)).collect();
    keys.dedup();
    keys.into_iter()
        .map(|(n, fi)| {
            let cell: Vec<&ExperimentRow> = rows.iter().filter(|r| r.n == n && r.fraction_index == fi).collect();
            let mut errs: Vec<f64> = cell
                .iter()
                .map(|r| {
                    if heldout {
                        r.rmse_heldout_rel.unwrap_or(r.rmse_full_rel)
                    } else {
                        r.rmse_full_rel
                    }
                })
                .collect();
            let mut norm: Vec<f64> = cell.iter().map(|r| r.normalized).collect();
            CurvePoint {
                n,
                fraction: cell[0].fraction,
                normalized: median(&mut norm),
                rmse: median(&mut errs),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub n: usize,
    pub fraction: f64,
    pub normalized: f64,
    pub rmse: f64,
}

pub fn median(xs: &mut [f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagOptions {
    pub beta: f64,
    pub lemma3_trials: usize,
    pub seed: u64,
}

impl Default for DiagOptions {
    fn default() -> Self {
        Self {
            beta: 1.0,
            lemma3_trials: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagReport {
    pub mu0: Mu0Estimate,
    /// All tangent projections vanish (zero factors).
    pub degenerate_tangent: bool,
    pub kappa: f64,
    pub theory: TheoryReport,
    pub lemma3: Lemma3Summary,
}

impl DiagReport {
    /// `(key, value)` pairs for a two-column CSV.
    pub fn rows(&self) -> Vec<(String, f64)> {
        let mut out = vec![
            ("mu0".to_string(), self.mu0.mu0),
            ("mu0_exhaustive".to_string(), f64::from(u8::from(self.mu0.exhaustive))),
            ("degenerate_tangent".to_string(), f64::from(u8::from(self.degenerate_tangent))),
            ("kappa".to_string(), self.kappa),
        ];
        for (k, r) in self.theory.per_entity.iter().enumerate() {
            out.push((format!("condition_i_entity_{}", k + 1), *r));
        }
        out.push(("condition_ii_total".into(), self.theory.total_ratio));
        out.push(("condition_iii_density_min".into(), self.theory.density_ratio_min));
        out.push(("condition_iii_density_max".into(), self.theory.density_ratio_max));
        out.push(("concentration_fraction_within_half".into(), self.lemma3.fraction_within_half));
        let mut norms = self.lemma3.norms.clone();
        out.push(("concentration_median_norm".into(), median(&mut norms)));
        out
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "tangent space");
        if self.degenerate_tangent {
            let _ = writeln!(s, "  degenerate: every tangent projection is zero");
        }
        let _ = writeln!(
            s,
            "  mu0 = {:.6} ({} cells{})",
            self.mu0.mu0,
            self.mu0.evaluated,
            if self.mu0.exhaustive { "" } else { ", subsampled lower bound" }
        );
        let _ = writeln!(s, "sampling");
        let _ = writeln!(s, "  kappa = {:.6e}", self.kappa);
        for (k, r) in self.theory.per_entity.iter().enumerate() {
            let _ = writeln!(s, "  (i)   entity {}: ratio {:.6}", k + 1, r);
        }
        let _ = writeln!(s, "  (ii)  total: ratio {:.6}", self.theory.total_ratio);
        let _ = writeln!(
            s,
            "  (iii) density ratio min {:.6}, max {:.6}",
            self.theory.density_ratio_min, self.theory.density_ratio_max
        );
        let _ = writeln!(s, "concentration");
        let _ = writeln!(
            s,
            "  {} trials, fraction with norm <= 1/2: {:.3}",
            self.lemma3.norms.len(),
            self.lemma3.fraction_within_half
        );
        s
    }
}

pub fn diag_report(factors: &FactorSet, plan: &SamplingPlan, opts: &DiagOptions) -> Result<DiagReport> {
    plan.schema().require_bipartite()?;
    if **plan.schema() != **factors.schema() {
        return Err(XmcError::SchemaMismatch("plan and factor schemas differ".into()));
    }
    let tb = factors.tangent_basis();
    let degenerate = (0..factors.schema().num_entities()).all(|k| tb.entity_rank(k) == 0);
    let mu0 = tb.incoherence_mu0(opts.seed);
    let kappa = plan.kappa_omega();
    let theory = plan.theorem1_report(factors.rank(), mu0.mu0, opts.beta);
    let lemma3 = lemma3_check(plan, &tb, opts.lemma3_trials, opts.seed)?;
    Ok(DiagReport {
        mu0,
        degenerate_tangent: degenerate,
        kappa,
        theory,
        lemma3,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiplierScan {
    /// `(multiplier, fraction of trials with norm ≤ ½)`.
    pub results: Vec<(f64, f64)>,
    /// Smallest multiplier reaching the target fraction.
    pub passing: Option<f64>,
}

/// Concentration check over balanced plans `|Ω_k| = c · n_k R ln N`.
pub fn lemma3_multiplier_scan(
    factors: &FactorSet,
    multipliers: &[f64],
    trials: usize,
    target: f64,
    seed: u64,
) -> Result<MultiplierScan> {
    let tb = factors.tangent_basis();
    let mut results = Vec::with_capacity(multipliers.len());
    for &c in multipliers {
        let plan = SamplingPlan::from_multiplier(factors.schema().clone(), c, factors.rank(), seed)?;
        let summary = lemma3_check(&plan, &tb, trials, seed)?;
        results.push((c, summary.fraction_within_half));
    }
    let passing = results
        .iter()
        .filter(|(_, f)| *f >= target)
        .map(|(c, _)| *c)
        .fold(None, |acc: Option<f64>, c| Some(acc.map_or(c, |a| a.min(c))));
    Ok(MultiplierScan { results, passing })
}
