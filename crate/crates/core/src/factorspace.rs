//! Joint factorizations, tangent-space projectors and incoherence.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::cmalgebra::CollectiveMatrix;
use crate::error::{Result, XmcError};
use crate::schema::{BasisIndex, CollectiveSchema};

/// Cell count above which μ₀ is estimated on a uniform subsample.
pub const MU0_EXHAUSTIVE_LIMIT: usize = 1_000_000;

/// Joint factors `U_k ∈ ℝ^{n_k×R}` with `X_v = U_{r_v} U_{c_v}ᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorSet {
    schema: Arc<CollectiveSchema>,
    rank: usize,
    factors: Vec<DMatrix<f64>>,
}

impl FactorSet {
    pub fn new(schema: Arc<CollectiveSchema>, rank: usize, factors: Vec<DMatrix<f64>>) -> Result<Self> {
        if rank == 0 {
            return Err(XmcError::ShapeMismatch("joint rank must be at least 1".into()));
        }
        if factors.len() != schema.num_entities() {
            return Err(XmcError::ShapeMismatch(format!(
                "{} factors for {} entities",
                factors.len(),
                schema.num_entities()
            )));
        }
        for (k, u) in factors.iter().enumerate() {
            if u.shape() != (schema.size(k), rank) {
                return Err(XmcError::ShapeMismatch(format!(
                    "factor {} is {:?}, expected ({}, {rank})",
                    k + 1,
                    u.shape(),
                    schema.size(k)
                )));
            }
        }
        Ok(Self {
            schema,
            rank,
            factors,
        })
    }

    pub fn zeros(schema: Arc<CollectiveSchema>, rank: usize) -> Result<Self> {
        let factors = (0..schema.num_entities())
            .map(|k| DMatrix::zeros(schema.size(k), rank))
            .collect();
        Self::new(schema, rank, factors)
    }

    /// Entries i.i.d. standard normal.
    pub fn random_gaussian(schema: Arc<CollectiveSchema>, rank: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let factors = (0..schema.num_entities())
            .map(|k| DMatrix::from_fn(schema.size(k), rank, |_, _| StandardNormal.sample(&mut rng)))
            .collect();
        Self {
            schema,
            rank: rank.max(1),
            factors,
        }
    }

    pub fn schema(&self) -> &Arc<CollectiveSchema> {
        &self.schema
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn factor(&self, k: usize) -> &DMatrix<f64> {
        &self.factors[k]
    }

    pub fn factors(&self) -> &[DMatrix<f64>] {
        &self.factors
    }

    /// Σ_k ‖U_k‖_F², the trace of the feasible lift `UUᵀ`.
    pub fn trace(&self) -> f64 {
        self.factors.iter().map(|u| u.norm_squared()).sum()
    }

    pub fn synthesize(&self) -> CollectiveMatrix {
        let views = self
            .schema
            .views()
            .iter()
            .map(|v| &self.factors[v.row] * self.factors[v.col].transpose())
            .collect();
        CollectiveMatrix::from_views(self.schema.clone(), views)
            .expect("factor shapes were checked at construction")
    }

    pub fn tangent_basis(&self) -> TangentBasis {
        TangentBasis {
            schema: self.schema.clone(),
            rank: self.rank,
            bases: self.factors.iter().map(orthonormal_range).collect(),
        }
    }
}

/// Orthonormal basis of the column space of `u`, dropping directions with
/// singular value below 1e-10·‖u‖₂.
fn orthonormal_range(u: &DMatrix<f64>) -> DMatrix<f64> {
    let n = u.nrows();
    if u.ncols() == 0 || n == 0 {
        return DMatrix::zeros(n, 0);
    }
    let svd = u.clone().svd(true, false);
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return DMatrix::zeros(n, 0);
    }
    let left = svd.u.expect("requested left singular vectors");
    let keep: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > 1e-10 * smax)
        .map(|(i, _)| i)
        .collect();
    DMatrix::from_fn(n, keep.len(), |i, j| left[(i, keep[j])])
}

/// Per-entity orthonormal bases `Q_k` of the factor column spaces.
#[derive(Debug, Clone)]
pub struct TangentBasis {
    schema: Arc<CollectiveSchema>,
    rank: usize,
    bases: Vec<DMatrix<f64>>,
}

impl TangentBasis {
    pub fn schema(&self) -> &Arc<CollectiveSchema> {
        &self.schema
    }

    /// Joint rank R of the originating factor set.
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn basis(&self, k: usize) -> &DMatrix<f64> {
        &self.bases[k]
    }

    /// R_k, the numerical rank of `U_k`.
    pub fn entity_rank(&self, k: usize) -> usize {
        self.bases[k].ncols()
    }

    /// `Q Qᵀ`.
    pub fn projector(&self, k: usize) -> DMatrix<f64> {
        let q = &self.bases[k];
        q * q.transpose()
    }

    fn check(&self, x: &CollectiveMatrix) -> Result<()> {
        if **x.schema() != *self.schema {
            return Err(XmcError::SchemaMismatch(
                "tangent basis and matrix use different schemas".into(),
            ));
        }
        Ok(())
    }

    /// `(I − P_r) X (I − P_c)` for one view.
    fn perp_view(&self, v: usize, x: &DMatrix<f64>) -> DMatrix<f64> {
        let view = self.schema.view(v);
        let qr = &self.bases[view.row];
        let qc = &self.bases[view.col];
        let mut y = x.clone();
        if qr.ncols() > 0 {
            y -= qr * (qr.transpose() * &y);
        }
        if qc.ncols() > 0 {
            y -= (&y * qc) * qc.transpose();
        }
        y
    }

    /// Projection onto T⊥.
    pub fn project_t_perp(&self, x: &CollectiveMatrix) -> Result<CollectiveMatrix> {
        self.check(x)?;
        let views = x
            .views()
            .iter()
            .enumerate()
            .map(|(v, xv)| self.perp_view(v, xv))
            .collect();
        CollectiveMatrix::from_views(x.schema().clone(), views)
    }

    /// Projection onto T, the orthogonal complement of T⊥.
    pub fn project_t(&self, x: &CollectiveMatrix) -> Result<CollectiveMatrix> {
        self.check(x)?;
        let views = x
            .views()
            .iter()
            .enumerate()
            .map(|(v, xv)| xv - self.perp_view(v, xv))
            .collect();
        CollectiveMatrix::from_views(x.schema().clone(), views)
    }

    /// Explicit P_T, built from the expanded projector formula
    /// `P_r X + X P_c − P_r X P_c`.
    pub fn project_t_expanded(&self, x: &CollectiveMatrix) -> Result<CollectiveMatrix> {
        self.check(x)?;
        let views = x
            .views()
            .iter()
            .enumerate()
            .map(|(v, xv)| {
                let view = self.schema.view(v);
                let pr = self.projector(view.row);
                let pc = self.projector(view.col);
                &pr * xv + xv * &pc - &pr * xv * &pc
            })
            .collect();
        CollectiveMatrix::from_views(x.schema().clone(), views)
    }

    /// `‖Q_kᵀ e_i‖²` for every row i of entity k.
    pub fn leverage(&self, k: usize) -> Vec<f64> {
        let q = &self.bases[k];
        (0..q.nrows()).map(|i| q.row(i).norm_squared()).collect()
    }

    /// Closed form of ‖P_T(𝓔^{(v,i,j)})‖_F².
    pub fn basis_tangent_norm_sq(&self, idx: BasisIndex) -> f64 {
        let view = self.schema.view(idx.view);
        let a = self.bases[view.row].row(idx.row).norm_squared();
        let b = self.bases[view.col].row(idx.col).norm_squared();
        a + b - a * b
    }

    /// μ₀ estimate: max over basis elements of
    /// ‖P_T(𝓔)‖_F² / (R/m_{r_v} + R/m_{c_v}).
    pub fn incoherence_mu0(&self, seed: u64) -> Mu0Estimate {
        let s = &self.schema;
        let lev: Vec<Vec<f64>> = (0..s.num_entities()).map(|k| self.leverage(k)).collect();
        let r = self.rank as f64;
        let ratio = |idx: BasisIndex| {
            let view = s.view(idx.view);
            let a = lev[view.row][idx.row];
            let b = lev[view.col][idx.col];
            let denom = r / s.entity_width(view.row) as f64 + r / s.entity_width(view.col) as f64;
            (a + b - a * b) / denom
        };
        let cells = s.num_cells();
        if cells <= MU0_EXHAUSTIVE_LIMIT {
            let mu0 = s.basis_indices().map(ratio).fold(0.0f64, f64::max);
            Mu0Estimate {
                mu0,
                exhaustive: true,
                evaluated: cells,
            }
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let picks = sample(&mut rng, cells, MU0_EXHAUSTIVE_LIMIT);
            let offsets: Vec<usize> = (0..s.num_views())
                .scan(0, |acc, v| {
                    let start = *acc;
                    let (r, c) = s.view_shape(v);
                    *acc += r * c;
                    Some(start)
                })
                .collect();
            let mu0 = picks
                .iter()
                .map(|flat| {
                    let v = offsets.partition_point(|&o| o <= flat) - 1;
                    let local = flat - offsets[v];
                    let (_, c) = s.view_shape(v);
                    ratio(BasisIndex::new(v, local / c, local % c))
                })
                .fold(0.0f64, f64::max);
            Mu0Estimate {
                mu0,
                exhaustive: false,
                evaluated: MU0_EXHAUSTIVE_LIMIT,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Mu0Estimate {
    pub mu0: f64,
    /// False when only a subsample was scanned; `mu0` is then a lower bound.
    pub exhaustive: bool,
    pub evaluated: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmalgebra::basis;

    fn preset(n: usize) -> Arc<CollectiveSchema> {
        Arc::new(CollectiveSchema::four_entity_preset(n).unwrap())
    }

    #[test]
    fn synthesize_examples() {
        let s = preset(3);
        let z = FactorSet::zeros(s.clone(), 2).unwrap();
        assert_eq!(z.synthesize().frob_norm(), 0.0);
        let ones = FactorSet::new(
            s.clone(),
            1,
            (0..4).map(|_| DMatrix::from_element(3, 1, 1.0)).collect(),
        )
        .unwrap();
        assert!(ones.synthesize().views().iter().all(|x| x.iter().all(|&e| e == 1.0)));
    }

    #[test]
    fn synthesized_views_have_rank_at_most_r() {
        let s = preset(12);
        let f = FactorSet::random_gaussian(s, 3, 1);
        for x in f.synthesize().views() {
            let sv = x.singular_values();
            let rank = sv.iter().filter(|&&v| v > 1e-9 * sv.max()).count();
            assert!(rank <= 3);
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        let s = preset(3);
        assert!(FactorSet::new(s.clone(), 0, vec![]).is_err());
        assert!(FactorSet::new(s, 2, (0..4).map(|_| DMatrix::zeros(3, 1)).collect()).is_err());
    }

    #[test]
    fn duplicated_column_drops_rank() {
        let s = Arc::new(CollectiveSchema::from_sizes(&[5, 4], &[(0, 1)]).unwrap());
        let mut f = FactorSet::random_gaussian(s.clone(), 3, 2);
        let c0 = f.factors[0].column(0).into_owned();
        f.factors[0].set_column(2, &c0);
        let tb = f.tangent_basis();
        assert_eq!(tb.entity_rank(0), 2);
        assert_eq!(tb.entity_rank(1), 3);
        let p = tb.projector(0);
        assert!((&p * &p - &p).abs().max() < 1e-10);
        let q = tb.basis(0);
        assert!((q.transpose() * q - DMatrix::identity(2, 2)).abs().max() < 1e-12);
    }

    #[test]
    fn orthonormal_factor_gives_same_projector() {
        let s = Arc::new(CollectiveSchema::from_sizes(&[4, 4], &[(0, 1)]).unwrap());
        let q = DMatrix::from_fn(4, 2, |i, j| if i == j { 1.0 } else { 0.0 });
        let f = FactorSet::new(s, 2, vec![q.clone(), q.clone()]).unwrap();
        let tb = f.tangent_basis();
        assert!((tb.projector(0) - &q * q.transpose()).abs().max() < 1e-12);
    }

    #[test]
    fn tiny_projection_examples() {
        let s = Arc::new(CollectiveSchema::from_sizes(&[2, 2], &[(0, 1)]).unwrap());
        let e1 = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let f = FactorSet::new(s.clone(), 1, vec![e1.clone(), e1]).unwrap();
        let tb = f.tangent_basis();
        let e22 = basis(s.clone(), BasisIndex::new(0, 1, 1)).unwrap().to_dense();
        assert_eq!(tb.project_t_perp(&e22).unwrap(), e22);
        let e11 = basis(s.clone(), BasisIndex::new(0, 0, 0)).unwrap().to_dense();
        assert!((tb.project_t(&e11).unwrap().frob_norm_sq() - 1.0).abs() < 1e-15);
        assert_eq!(tb.basis_tangent_norm_sq(BasisIndex::new(0, 0, 0)), 1.0);
        assert_eq!(tb.basis_tangent_norm_sq(BasisIndex::new(0, 1, 1)), 0.0);
    }

    #[test]
    fn zero_factors_project_nothing() {
        let s = preset(3);
        let tb = FactorSet::zeros(s.clone(), 2).unwrap().tangent_basis();
        let x = FactorSet::random_gaussian(s, 2, 4).synthesize();
        assert_eq!(tb.project_t_perp(&x).unwrap(), x);
        assert_eq!(tb.project_t(&x).unwrap().frob_norm(), 0.0);
        let mu = tb.incoherence_mu0(0);
        assert_eq!(mu.mu0, 0.0);
        assert!(mu.exhaustive);
    }

    #[test]
    fn synthesized_lies_in_tangent_space() {
        let s = preset(6);
        let f = FactorSet::random_gaussian(s, 2, 5);
        let m = f.synthesize();
        let tb = f.tangent_basis();
        assert!(tb.project_t_perp(&m).unwrap().frob_norm() <= 1e-10 * m.frob_norm());
    }

    #[test]
    fn full_span_gives_unit_tangent_norms() {
        let s = preset(3);
        let f = FactorSet::random_gaussian(s.clone(), 3, 6);
        let tb = f.tangent_basis();
        for idx in s.basis_indices() {
            assert!((tb.basis_tangent_norm_sq(idx) - 1.0).abs() < 1e-12);
        }
        let mu = tb.incoherence_mu0(0);
        assert!(mu.mu0.is_finite() && mu.mu0 > 0.0);
    }
}
