//! Observation model: the entity-driven sampler, observation operators
//! `P_Ω` / `R_Ω`, and empirical checks of the sampling conditions.
//!
//! Each draw picks an entity `k` with probability `|Ω_k| / 2|Ω|`, a row
//! uniformly in `[n_k]` and a column uniformly in `[m_k]`, and maps the
//! resulting cell of `𝕏_k` back to a view entry. Draws are independent and
//! with replacement, so the same cell may appear several times.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cmalgebra::{CollectiveMatrix, SparseCollective};
use crate::error::{Result, XmcError};
use crate::factorspace::TangentBasis;
use crate::schema::{BasisIndex, CollectiveSchema};

/// Expected per-entity observation counts `|Ω_k|` and the total `|Ω|`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingPlan {
    schema: Arc<CollectiveSchema>,
    quotas: Vec<f64>,
    total: usize,
    seed: u64,
}

/// How quotas are spread over entities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum QuotaPreset {
    /// `|Ω_k| ∝ n_k m_k`.
    #[default]
    Proportional,
    /// `|Ω_k| ∝ n_k`.
    Balanced,
}

impl SamplingPlan {
    pub fn new(schema: Arc<CollectiveSchema>, quotas: Vec<f64>, total: usize, seed: u64) -> Result<Self> {
        if quotas.len() != schema.num_entities() {
            return Err(XmcError::InvalidPlan(format!(
                "{} quotas for {} entities",
                quotas.len(),
                schema.num_entities()
            )));
        }
        if let Some(k) = quotas.iter().position(|&q| !(q > 0.0 && q.is_finite())) {
            return Err(XmcError::InvalidPlan(format!(
                "quota of entity {} must be positive, got {}",
                k + 1,
                quotas[k]
            )));
        }
        let sum: f64 = quotas.iter().sum();
        let target = 2.0 * total as f64;
        if (sum - target).abs() > 1e-9 * target.max(1.0) {
            return Err(XmcError::InvalidPlan(format!(
                "quotas sum to {sum}, expected 2|Ω| = {target}"
            )));
        }
        Ok(Self {
            schema,
            quotas,
            total,
            seed,
        })
    }

    /// Quotas proportional to `weights`, rescaled so that Σ|Ω_k| = 2|Ω|.
    pub fn from_weights(schema: Arc<CollectiveSchema>, weights: &[f64], total: usize, seed: u64) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) {
            return Err(XmcError::InvalidPlan("quota weights must be positive".into()));
        }
        let quotas = weights
            .iter()
            .map(|w| 2.0 * total as f64 * w / sum)
            .collect();
        Self::new(schema, quotas, total, seed)
    }

    pub fn with_preset(schema: Arc<CollectiveSchema>, preset: QuotaPreset, total: usize, seed: u64) -> Result<Self> {
        let weights: Vec<f64> = (0..schema.num_entities())
            .map(|k| match preset {
                QuotaPreset::Proportional => (schema.size(k) * schema.entity_width(k)) as f64,
                QuotaPreset::Balanced => schema.size(k) as f64,
            })
            .collect();
        Self::from_weights(schema, &weights, total, seed)
    }

    pub fn proportional(schema: Arc<CollectiveSchema>, total: usize, seed: u64) -> Result<Self> {
        Self::with_preset(schema, QuotaPreset::Proportional, total, seed)
    }

    pub fn balanced(schema: Arc<CollectiveSchema>, total: usize, seed: u64) -> Result<Self> {
        Self::with_preset(schema, QuotaPreset::Balanced, total, seed)
    }

    /// Balanced plan with `|Ω_k| ≈ multiplier · n_k · R · ln N`; the total is
    /// rounded to an integer and the quotas rescaled to match it.
    pub fn from_multiplier(schema: Arc<CollectiveSchema>, multiplier: f64, rank: usize, seed: u64) -> Result<Self> {
        let ln_n = (schema.total_size() as f64).ln();
        let weights: Vec<f64> = (0..schema.num_entities())
            .map(|k| multiplier * schema.size(k) as f64 * rank as f64 * ln_n)
            .collect();
        let total = (weights.iter().sum::<f64>() / 2.0).round().max(1.0) as usize;
        Self::from_weights(schema, &weights, total, seed)
    }

    pub fn schema(&self) -> &Arc<CollectiveSchema> {
        &self.schema
    }

    pub fn quotas(&self) -> &[f64] {
        &self.quotas
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    /// `|Ω_k| / (n_k m_k)`.
    pub fn density(&self, k: usize) -> f64 {
        self.quotas[k] / (self.schema.size(k) * self.schema.entity_width(k)) as f64
    }

    pub fn min_density(&self) -> f64 {
        (0..self.quotas.len()).map(|k| self.density(k)).fold(f64::INFINITY, f64::min)
    }

    pub fn max_density(&self) -> f64 {
        (0..self.quotas.len()).map(|k| self.density(k)).fold(0.0, f64::max)
    }

    /// `p(v,i,j) = |Ω_r|/(2 n_r m_r) + |Ω_c|/(2 n_c m_c)`; a single draw hits
    /// the cell with probability `p / |Ω|`.
    pub fn p_prob(&self, idx: BasisIndex) -> Result<f64> {
        self.schema.check_index(idx)?;
        Ok(self.p_view(idx.view))
    }

    /// `p` is constant within a view.
    pub fn p_view(&self, v: usize) -> f64 {
        let view = self.schema.view(v);
        0.5 * (self.density(view.row) + self.density(view.col))
    }

    /// Draws `|Ω|` indices. Identical plans give identical output.
    pub fn sample(&self) -> Vec<BasisIndex> {
        let s = &self.schema;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let pick = WeightedIndex::new(&self.quotas).expect("quotas validated positive");
        (0..self.total)
            .map(|_| {
                let k = pick.sample(&mut rng);
                let i = rng.random_range(0..s.size(k));
                let col = rng.random_range(0..s.entity_width(k));
                s.entity_cell(k, i, col).expect("draw inside entity matrix")
            })
            .collect()
    }

    /// κ_Ω(N) = 3|Ω|·√(max_k d_k) / min_k d_k with d_k = |Ω_k|/(n_k m_k).
    pub fn kappa_omega(&self) -> f64 {
        3.0 * self.total as f64 * self.max_density().sqrt() / self.min_density()
    }

    /// Raw ratios of the three sample-size conditions with every unnamed
    /// constant set to 1. μ₁ is not available and only μ₀ enters condition (ii).
    pub fn theorem1_report(&self, rank: usize, mu0: f64, beta: f64) -> TheoryReport {
        let s = &self.schema;
        let n_total = s.total_size() as f64;
        let ln_n = n_total.ln();
        let kappa = self.kappa_omega();
        let log_term = (n_total * kappa).ln();
        let r = rank as f64;
        let per_entity = (0..s.num_entities())
            .map(|k| self.quotas[k] / (mu0 * s.size(k) as f64 * r * beta * ln_n * log_term))
            .collect();
        let total_ratio = self.total as f64 / (mu0 * n_total * r * beta * ln_n * log_term);
        let uniform = self.total as f64 / (n_total * n_total);
        TheoryReport {
            per_entity,
            total_ratio,
            density_ratio_min: self.min_density() / uniform,
            density_ratio_max: self.max_density() / uniform,
            kappa,
            mu0,
            beta,
            rank,
        }
    }
}

/// Raw condition ratios; a ratio ≥ 1 means the condition holds with unit constant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryReport {
    /// |Ω_k| / (μ₀ n_k R β ln N ln(N κ)).
    pub per_entity: Vec<f64>,
    /// |Ω| / (μ₀ N R β ln N ln(N κ)).
    pub total_ratio: f64,
    /// min_k (|Ω_k|/n_k m_k) / (|Ω|/N²).
    pub density_ratio_min: f64,
    pub density_ratio_max: f64,
    pub kappa: f64,
    pub mu0: f64,
    pub beta: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Noise {
    #[default]
    None,
    Gaussian { sigma: f64 },
}

/// Observed entries `(v_s, i_s, j_s, y_s)` in draw order.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    schema: Arc<CollectiveSchema>,
    entries: Vec<(BasisIndex, f64)>,
    noise: Noise,
    plan: Option<SamplingPlan>,
}

impl ObservationSet {
    pub fn new(schema: Arc<CollectiveSchema>, entries: Vec<(BasisIndex, f64)>, noise: Noise) -> Result<Self> {
        for (idx, y) in &entries {
            schema.check_index(*idx)?;
            if !y.is_finite() {
                return Err(XmcError::Parse(format!("non-finite observation at {idx:?}")));
            }
        }
        Ok(Self {
            schema,
            entries,
            noise,
            plan: None,
        })
    }

    pub fn with_plan(mut self, plan: SamplingPlan) -> Self {
        self.plan = Some(plan);
        self
    }

    pub fn plan(&self) -> Option<&SamplingPlan> {
        self.plan.as_ref()
    }

    pub fn schema(&self) -> &Arc<CollectiveSchema> {
        &self.schema
    }

    pub fn entries(&self) -> &[(BasisIndex, f64)] {
        &self.entries
    }

    pub fn noise(&self) -> Noise {
        self.noise
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn indices(&self) -> Vec<BasisIndex> {
        self.entries.iter().map(|e| e.0).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.1).collect()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt()
    }
}

/// `y_s = ⟨𝓜, 𝓔^{(s)}⟩ + η_s`, η_s i.i.d. N(0, σ²) under Gaussian noise.
pub fn observe(m: &CollectiveMatrix, indices: &[BasisIndex], noise: Noise, seed: u64) -> Result<ObservationSet> {
    let s = m.schema();
    for idx in indices {
        s.check_index(*idx)?;
    }
    let entries = match noise {
        Noise::None => indices.iter().map(|&idx| (idx, m.get(idx))).collect(),
        Noise::Gaussian { sigma } => {
            let dist = Normal::new(0.0, sigma)
                .map_err(|e| XmcError::InvalidConfig(format!("noise sigma {sigma}: {e}")))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            indices
                .iter()
                .map(|&idx| (idx, m.get(idx) + dist.sample(&mut rng)))
                .collect()
        }
    };
    Ok(ObservationSet {
        schema: s.clone(),
        entries,
        noise,
        plan: None,
    })
}

/// Multiplicity of each distinct index.
pub fn multiplicities(indices: &[BasisIndex]) -> BTreeMap<BasisIndex, usize> {
    let mut out = BTreeMap::new();
    for &idx in indices {
        *out.entry(idx).or_insert(0) += 1;
    }
    out
}

/// `P_Ω(𝒳) = Σ_s ⟨𝒳, 𝓔^{(s)}⟩ 𝓔^{(s)}`.
pub fn apply_p_omega(x: &CollectiveMatrix, indices: &[BasisIndex]) -> Result<SparseCollective> {
    let entries = multiplicities(indices)
        .into_iter()
        .map(|(idx, k)| (idx, k as f64 * x.get(idx)))
        .collect();
    SparseCollective::new(x.schema().clone(), entries)
}

/// `R_Ω(𝒳) = Σ_s p(v_s,i_s,j_s)⁻¹ ⟨𝒳, 𝓔^{(s)}⟩ 𝓔^{(s)}`.
pub fn apply_r_omega(x: &CollectiveMatrix, indices: &[BasisIndex], plan: &SamplingPlan) -> Result<SparseCollective> {
    if **plan.schema() != **x.schema() {
        return Err(XmcError::SchemaMismatch("plan and matrix schemas differ".into()));
    }
    let entries = multiplicities(indices)
        .into_iter()
        .map(|(idx, k)| (idx, k as f64 / plan.p_view(idx.view) * x.get(idx)))
        .collect();
    SparseCollective::new(x.schema().clone(), entries)
}

/// Dense per-cell weights `M_Ω(v,i,j) / p(v,i,j)` so that `R_Ω(𝒳) = W ∘ 𝒳`.
pub fn r_omega_weights(indices: &[BasisIndex], plan: &SamplingPlan) -> CollectiveMatrix {
    let mut w = CollectiveMatrix::zeros(plan.schema().clone());
    for &idx in indices {
        let cur = w.get(idx);
        w.set(idx, cur + 1.0 / plan.p_view(idx.view));
    }
    w
}

fn hadamard(w: &CollectiveMatrix, x: &CollectiveMatrix) -> CollectiveMatrix {
    let views: Vec<DMatrix<f64>> = w
        .views()
        .iter()
        .zip(x.views())
        .map(|(a, b)| a.component_mul(b))
        .collect();
    CollectiveMatrix::from_views(x.schema().clone(), views).expect("same schema")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lemma3Summary {
    /// Estimated ‖P_T R_Ω P_T − P_T‖_op per trial.
    pub norms: Vec<f64>,
    pub fraction_within_half: f64,
}

/// Power-iteration estimate of ‖P_T R_Ω P_T − P_T‖_op for one index draw.
pub fn lemma3_operator_norm(
    tb: &TangentBasis,
    indices: &[BasisIndex],
    plan: &SamplingPlan,
    iterations: usize,
    restarts: usize,
    seed: u64,
) -> Result<f64> {
    let schema = tb.schema().clone();
    let w = r_omega_weights(indices, plan);
    let apply = |x: &CollectiveMatrix| -> Result<CollectiveMatrix> {
        let pt = tb.project_t(x)?;
        tb.project_t(&hadamard(&w, &pt))?.sub(&pt)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    for _ in 0..restarts.max(1) {
        let g = CollectiveMatrix::from_fn(schema.clone(), |_| StandardNormal.sample(&mut rng));
        let mut x = tb.project_t(&g)?;
        let nx = x.frob_norm();
        if nx == 0.0 {
            continue;
        }
        x = x.scaled(1.0 / nx);
        let mut estimate = 0.0;
        for _ in 0..iterations.max(1) {
            let y = apply(&x)?;
            estimate = y.frob_norm();
            if estimate == 0.0 {
                break;
            }
            x = y.scaled(1.0 / estimate);
        }
        best = best.max(estimate);
    }
    Ok(best)
}

/// Runs `trials` independent draws (trial t uses seed `seed + t` for the
/// sampler and a derived seed for the power iteration).
pub fn lemma3_check(plan: &SamplingPlan, tb: &TangentBasis, trials: usize, seed: u64) -> Result<Lemma3Summary> {
    plan.schema().require_bipartite()?;
    if **plan.schema() != **tb.schema() {
        return Err(XmcError::SchemaMismatch("plan and tangent basis schemas differ".into()));
    }
    let norms = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let trial_seed = seed.wrapping_add(t);
            let indices = plan.with_seed(trial_seed).sample();
            lemma3_operator_norm(tb, &indices, plan, 50, 2, trial_seed ^ 0x9e37_79b9_7f4a_7c15)
        })
        .collect::<Result<Vec<_>>>()?;
    let within = norms.iter().filter(|&&x| x <= 0.5).count();
    Ok(Lemma3Summary {
        fraction_within_half: if norms.is_empty() {
            0.0
        } else {
            within as f64 / norms.len() as f64
        },
        norms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factorspace::FactorSet;

    fn preset(n: usize) -> Arc<CollectiveSchema> {
        Arc::new(CollectiveSchema::four_entity_preset(n).unwrap())
    }

    fn random(schema: &Arc<CollectiveSchema>, seed: u64) -> CollectiveMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CollectiveMatrix::from_fn(schema.clone(), |_| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn plan_validation() {
        let s = preset(3);
        assert!(SamplingPlan::new(s.clone(), vec![1.0; 4], 2, 0).is_ok());
        assert!(SamplingPlan::new(s.clone(), vec![1.0; 4], 3, 0).is_err());
        assert!(SamplingPlan::new(s.clone(), vec![2.0, 2.0, 0.0, 0.0], 2, 0).is_err());
        assert!(SamplingPlan::new(s, vec![1.0; 3], 2, 0).is_err());
    }

    #[test]
    fn single_cell_schema() {
        let s = Arc::new(CollectiveSchema::from_sizes(&[1, 1], &[(0, 1)]).unwrap());
        let plan = SamplingPlan::new(s, vec![10.0, 10.0], 10, 3).unwrap();
        assert!(plan.sample().iter().all(|&i| i == BasisIndex::new(0, 0, 0)));
        assert_eq!(plan.p_prob(BasisIndex::new(0, 0, 0)).unwrap(), 10.0);
    }

    #[test]
    fn p_sums_to_total_and_is_bracketed() {
        let s = Arc::new(CollectiveSchema::from_sizes(&[3, 5, 2, 4], &[(0, 1), (0, 2), (1, 3)]).unwrap());
        let plan = SamplingPlan::new(s.clone(), vec![30.0, 10.0, 25.0, 15.0], 40, 0).unwrap();
        let sum: f64 = s.basis_indices().map(|i| plan.p_prob(i).unwrap()).sum();
        assert!((sum - 40.0).abs() < 1e-9 * 40.0);
        for idx in s.basis_indices() {
            let p = plan.p_prob(idx).unwrap();
            assert!(plan.min_density() <= p + 1e-15 && p <= plan.max_density() + 1e-15);
        }
    }

    #[test]
    fn sampler_is_deterministic() {
        let s = preset(4);
        let plan = SamplingPlan::proportional(s, 500, 42).unwrap();
        assert_eq!(plan.sample(), plan.sample());
        assert_ne!(plan.sample(), plan.with_seed(43).sample());
    }

    #[test]
    fn noise_free_and_noisy_observations() {
        let s = preset(3);
        let m = random(&s, 1);
        let idx = vec![BasisIndex::new(0, 1, 2), BasisIndex::new(0, 1, 2)];
        let obs = observe(&m, &idx, Noise::None, 0).unwrap();
        assert!(obs.values().iter().all(|&y| y == m.get(idx[0])));
        let obs = observe(&m, &idx, Noise::Gaussian { sigma: 1.0 }, 0).unwrap();
        assert_ne!(obs.values()[0], obs.values()[1]);

        let many = vec![BasisIndex::new(1, 0, 0); 100_000];
        let obs = observe(&m, &many, Noise::Gaussian { sigma: 1.0 }, 7).unwrap();
        let mean = obs.values().iter().map(|y| y - m.get(many[0])).sum::<f64>() / 1e5;
        assert!(mean.abs() <= 3.0 / (1e5f64).sqrt());
        assert!(observe(&m, &[BasisIndex::new(5, 0, 0)], Noise::None, 0).is_err());
    }

    #[test]
    fn p_omega_examples() {
        let s = preset(2);
        let x = random(&s, 3);
        let all: Vec<_> = s.basis_indices().collect();
        assert_eq!(apply_p_omega(&x, &all).unwrap().to_dense(), x);
        assert_eq!(apply_p_omega(&x, &[]).unwrap().to_dense().frob_norm(), 0.0);
        let mut y = CollectiveMatrix::zeros(s.clone());
        let e = BasisIndex::new(2, 1, 0);
        y.set(e, 3.0);
        let img = apply_p_omega(&y, &[e, e]).unwrap();
        assert_eq!(img.to_dense().get(e), 6.0);
    }

    #[test]
    fn r_omega_single_cell() {
        let s = Arc::new(CollectiveSchema::from_sizes(&[1, 1], &[(0, 1)]).unwrap());
        let plan = SamplingPlan::new(s.clone(), vec![3.0, 3.0], 3, 0).unwrap();
        let mut x = CollectiveMatrix::zeros(s);
        x.set(BasisIndex::new(0, 0, 0), 2.5);
        let idx = plan.sample();
        assert_eq!(apply_r_omega(&x, &idx, &plan).unwrap().to_dense(), x);
        let z = CollectiveMatrix::zeros(x.schema().clone());
        assert_eq!(apply_r_omega(&z, &idx, &plan).unwrap().to_dense(), z);
    }

    #[test]
    fn r_omega_self_adjoint_and_bounded() {
        let s = preset(5);
        let plan = SamplingPlan::balanced(s.clone(), 120, 4).unwrap();
        let idx = plan.sample();
        let x = random(&s, 1);
        let y = random(&s, 2);
        let rx = apply_r_omega(&x, &idx, &plan).unwrap();
        let ry = apply_r_omega(&y, &idx, &plan).unwrap();
        let lhs = rx.inner_dense(&y).unwrap();
        let rhs = ry.inner_dense(&x).unwrap();
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        let bound = plan.total() as f64 / plan.min_density() * x.frob_norm();
        assert!(rx.to_dense().frob_norm() <= bound);
    }

    #[test]
    fn kappa_hand_value() {
        // Two entities of size 2 and one view: N = 4, m_k = 2, n_k m_k = 4.
        let s = Arc::new(CollectiveSchema::from_sizes(&[2, 2], &[(0, 1)]).unwrap());
        let plan = SamplingPlan::new(s, vec![6.0, 2.0], 4, 0).unwrap();
        // d = (1.5, 0.5); κ = 3·4·√1.5 / 0.5
        let expected = 3.0 * 4.0 * 1.5f64.sqrt() / 0.5;
        assert!((plan.kappa_omega() - expected).abs() < 1e-12);
        assert!(plan.kappa_omega() >= 3.0 * 4.0 / plan.min_density().sqrt());
    }

    #[test]
    fn proportional_plan_meets_density_condition() {
        let n = 10;
        let s = preset(n);
        let plan = SamplingPlan::proportional(s.clone(), 150, 0).unwrap();
        let r = plan.theorem1_report(2, 1.0, 2.0);
        // Equal sizes: every density equals |Ω|/cells, so the ratio is N²/cells.
        let expected = (4.0 * n as f64).powi(2) / (3.0 * (n * n) as f64);
        assert!((r.density_ratio_min - expected).abs() < 1e-12);
        assert!((r.density_ratio_max - expected).abs() < 1e-12);
        assert!(r.density_ratio_min >= 1.0);
        assert!(r.per_entity.iter().all(|x| x.is_finite() && *x > 0.0));
    }

    #[test]
    fn concentration_trivial_tangent() {
        let s = preset(4);
        let tb = FactorSet::zeros(s.clone(), 2).unwrap().tangent_basis();
        let plan = SamplingPlan::balanced(s, 50, 0).unwrap();
        let out = lemma3_check(&plan, &tb, 3, 0).unwrap();
        assert!(out.norms.iter().all(|&x| x == 0.0));
        assert_eq!(out.fraction_within_half, 1.0);
    }

    #[test]
    fn concentration_norms_shrink_with_more_samples() {
        let s = preset(8);
        let tb = FactorSet::random_gaussian(s.clone(), 2, 1).tangent_basis();
        let base = s.num_cells();
        let medians: Vec<f64> = [1usize, 4, 16]
            .iter()
            .map(|&mult| {
                let plan = SamplingPlan::proportional(s.clone(), base * mult, 10).unwrap();
                let mut norms = lemma3_check(&plan, &tb, 9, 100).unwrap().norms;
                norms.sort_by(f64::total_cmp);
                norms[norms.len() / 2]
            })
            .collect();
        assert!(medians[0] > medians[1] && medians[1] > medians[2], "{medians:?}");
    }

    #[test]
    fn concentration_refuses_odd_cycle() {
        let s = Arc::new(CollectiveSchema::from_sizes(&[2; 3], &[(0, 1), (1, 2), (0, 2)]).unwrap());
        let tb = FactorSet::random_gaussian(s.clone(), 1, 0).tangent_basis();
        let plan = SamplingPlan::balanced(s, 10, 0).unwrap();
        assert!(matches!(lemma3_check(&plan, &tb, 1, 0), Err(XmcError::OddCycle(_))));
    }
}
