//! Collective-matrix values and their algebra.
//!
//! A [`CollectiveMatrix`] stores one dense matrix per view. The same value
//! can be viewed as the entity-matrix set `𝕏_k` (all views incident to
//! entity `k`, concatenated in canonical column order) or as the N×N
//! block-symmetric matrix `B(𝒳)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, XmcError};
use crate::factorspace::FactorSet;
use crate::schema::{BasisIndex, CollectiveSchema};
use crate::solver::lanczos::{approx_top_eigvec, EigenOptions, SymmetricOperator};

/// Tolerance on the Lanczos residual for norm queries.
pub const NORM_EIGEN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct CollectiveMatrix {
    schema: Arc<CollectiveSchema>,
    views: Vec<DMatrix<f64>>,
}

/// N×N symmetric matrix carrying each view and its transpose as off-diagonal blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSymmetric {
    schema: Arc<CollectiveSchema>,
    matrix: DMatrix<f64>,
}

/// Coordinate-list collective matrix. Duplicated indices add up.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCollective {
    schema: Arc<CollectiveSchema>,
    entries: Vec<(BasisIndex, f64)>,
}

fn same_schema(a: &CollectiveSchema, b: &CollectiveSchema) -> Result<()> {
    if std::ptr::eq(a, b) || a == b {
        Ok(())
    } else {
        Err(XmcError::SchemaMismatch(
            "operands belong to different schemas".into(),
        ))
    }
}

impl CollectiveMatrix {
    pub fn zeros(schema: Arc<CollectiveSchema>) -> Self {
        let views = (0..schema.num_views())
            .map(|v| {
                let (r, c) = schema.view_shape(v);
                DMatrix::zeros(r, c)
            })
            .collect();
        Self { schema, views }
    }

    pub fn from_views(schema: Arc<CollectiveSchema>, views: Vec<DMatrix<f64>>) -> Result<Self> {
        if views.len() != schema.num_views() {
            return Err(XmcError::ShapeMismatch(format!(
                "{} views given, schema declares {}",
                views.len(),
                schema.num_views()
            )));
        }
        for (v, x) in views.iter().enumerate() {
            let shape = schema.view_shape(v);
            if x.shape() != shape {
                return Err(XmcError::ShapeMismatch(format!(
                    "view {} is {:?}, expected {:?}",
                    v + 1,
                    x.shape(),
                    shape
                )));
            }
            if x.iter().any(|e| !e.is_finite()) {
                return Err(XmcError::ShapeMismatch(format!(
                    "view {} has non-finite entries",
                    v + 1
                )));
            }
        }
        Ok(Self { schema, views })
    }

    /// Builds a value by evaluating `f` at every basis index.
    pub fn from_fn(schema: Arc<CollectiveSchema>, mut f: impl FnMut(BasisIndex) -> f64) -> Self {
        let views = (0..schema.num_views())
            .map(|v| {
                let (r, c) = schema.view_shape(v);
                DMatrix::from_fn(r, c, |i, j| f(BasisIndex::new(v, i, j)))
            })
            .collect();
        Self { schema, views }
    }

    pub fn schema(&self) -> &Arc<CollectiveSchema> {
        &self.schema
    }

    pub fn view(&self, v: usize) -> &DMatrix<f64> {
        &self.views[v]
    }

    pub fn view_mut(&mut self, v: usize) -> &mut DMatrix<f64> {
        &mut self.views[v]
    }

    pub fn views(&self) -> &[DMatrix<f64>] {
        &self.views
    }

    pub fn into_views(self) -> Vec<DMatrix<f64>> {
        self.views
    }

    pub fn get(&self, idx: BasisIndex) -> f64 {
        self.views[idx.view][(idx.row, idx.col)]
    }

    pub fn set(&mut self, idx: BasisIndex, value: f64) {
        self.views[idx.view][(idx.row, idx.col)] = value;
    }

    /// ⟨𝒳, 𝒴⟩ = Σ_v ⟨X_v, Y_v⟩.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        same_schema(&self.schema, &other.schema)?;
        Ok(self
            .views
            .iter()
            .zip(&other.views)
            .map(|(a, b)| a.dot(b))
            .sum())
    }

    pub fn frob_norm(&self) -> f64 {
        self.frob_norm_sq().sqrt()
    }

    pub fn frob_norm_sq(&self) -> f64 {
        self.views.iter().map(|x| x.norm_squared()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.views
            .iter()
            .flat_map(|x| x.iter())
            .fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            schema: self.schema.clone(),
            views: self.views.iter().map(|x| x * a).collect(),
        }
    }

    /// `self + a·other`.
    pub fn axpy(&self, a: f64, other: &Self) -> Result<Self> {
        same_schema(&self.schema, &other.schema)?;
        Ok(Self {
            schema: self.schema.clone(),
            views: self
                .views
                .iter()
                .zip(&other.views)
                .map(|(x, y)| x + y * a)
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.axpy(-1.0, other)
    }

    pub fn to_block(&self) -> BlockSymmetric {
        let s = &self.schema;
        let n = s.total_size();
        let mut z = DMatrix::zeros(n, n);
        for (v, x) in self.views.iter().enumerate() {
            let view = s.view(v);
            let (ro, co) = (s.offset(view.row), s.offset(view.col));
            let (r, c) = x.shape();
            z.view_mut((ro, co), (r, c)).copy_from(x);
            z.view_mut((co, ro), (c, r)).copy_from(&x.transpose());
        }
        BlockSymmetric {
            schema: s.clone(),
            matrix: z,
        }
    }

    /// Entity matrix `𝕏_k` of shape n_k × m_k.
    pub fn to_entity_set(&self, k: usize) -> DMatrix<f64> {
        let s = &self.schema;
        let mut out = DMatrix::zeros(s.size(k), s.entity_width(k));
        let mut col = 0;
        for (v, x) in self.views.iter().enumerate() {
            let view = s.view(v);
            if view.row == k {
                out.view_mut((0, col), x.shape()).copy_from(x);
                col += x.ncols();
            } else if view.col == k {
                let xt = x.transpose();
                out.view_mut((0, col), xt.shape()).copy_from(&xt);
                col += xt.ncols();
            }
        }
        out
    }

    /// Action of `B(𝒳)` on a vector of length N.
    pub fn block_apply(&self, x: &[f64], y: &mut [f64]) {
        let s = &self.schema;
        for (v, m) in self.views.iter().enumerate() {
            let view = s.view(v);
            let (ro, co) = (s.offset(view.row), s.offset(view.col));
            let (r, c) = m.shape();
            for j in 0..c {
                let xj = x[co + j];
                let col = m.column(j);
                let mut acc = 0.0;
                for i in 0..r {
                    y[ro + i] += col[i] * xj;
                    acc += col[i] * x[ro + i];
                }
                y[co + j] += acc;
            }
        }
    }

    /// `½·λ_max(B(𝒳))` together with the maximizing unit vector.
    pub fn dual_atomic_norm_with_vector(&self) -> Result<(f64, Vec<f64>)> {
        self.schema.require_bipartite()?;
        let op = BlockOperator(self);
        let n = op.dim();
        let e = approx_top_eigvec(
            &op,
            &EigenOptions {
                tol: NORM_EIGEN_TOL * self.frob_norm().max(1.0),
                max_steps: n,
                seed: 0x5eed,
            },
            None,
        );
        // The spectrum of B(𝒳) is symmetric on bipartite graphs, so λ_max ≥ 0.
        Ok((0.5 * e.value.max(0.0), e.vector))
    }

    /// Dual atomic norm `‖𝒳‖_𝒜^* = ½·λ_max(B(𝒳))`.
    pub fn dual_atomic_norm(&self) -> Result<f64> {
        Ok(self.dual_atomic_norm_with_vector()?.0)
    }

    /// Certified bounds on the atomic norm. `certificates` are arbitrary
    /// collective matrices, rescaled by their dual norm to become dual
    /// feasible; `factors`, when supplied, must synthesize `self` and give
    /// the feasible trace Σ_k‖U_k‖_F².
    pub fn atomic_norm_bounds(
        &self,
        certificates: &[CollectiveMatrix],
        factors: Option<&FactorSet>,
    ) -> Result<(f64, f64)> {
        self.schema.require_bipartite()?;
        if self.frob_norm_sq() == 0.0 {
            return Ok((0.0, 0.0));
        }
        let mut lower = 0.0f64;
        for y in certificates {
            let d = y.dual_atomic_norm()?;
            if d > 0.0 {
                lower = lower.max(self.inner(y)? / d);
            }
        }
        let upper = match factors {
            Some(f) => {
                let m = f.synthesize();
                same_schema(&self.schema, m.schema())?;
                let rel = m.sub(self)?.frob_norm() / self.frob_norm();
                if rel > 1e-8 {
                    return Err(XmcError::FactorMismatch(rel));
                }
                f.trace()
            }
            None => f64::INFINITY,
        };
        Ok((lower.min(upper), upper))
    }
}

struct BlockOperator<'a>(&'a CollectiveMatrix);

impl SymmetricOperator for BlockOperator<'_> {
    fn dim(&self) -> usize {
        self.0.schema.total_size()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.0.block_apply(x, y)
    }
}

/// Standard basis element `𝓔^{(v,i,j)}`.
pub fn basis(schema: Arc<CollectiveSchema>, idx: BasisIndex) -> Result<SparseCollective> {
    schema.check_index(idx)?;
    Ok(SparseCollective {
        schema,
        entries: vec![(idx, 1.0)],
    })
}

/// Atom `[P_v(uuᵀ)]_v` for a unit vector `u ∈ ℝ^N`.
pub fn atom(schema: Arc<CollectiveSchema>, u: &[f64]) -> Result<CollectiveMatrix> {
    if u.len() != schema.total_size() {
        return Err(XmcError::ShapeMismatch(format!(
            "vector of length {} for N = {}",
            u.len(),
            schema.total_size()
        )));
    }
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (nu - 1.0).abs() > 1e-12 {
        return Err(XmcError::NonUnitVector(nu));
    }
    let views = (0..schema.num_views())
        .map(|v| {
            let view = schema.view(v);
            let (ro, co) = (schema.offset(view.row), schema.offset(view.col));
            let (r, c) = schema.view_shape(v);
            let a = DVector::from_column_slice(&u[ro..ro + r]);
            let b = DVector::from_column_slice(&u[co..co + c]);
            &a * b.transpose()
        })
        .collect();
    Ok(CollectiveMatrix { schema, views })
}

impl BlockSymmetric {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn schema(&self) -> &Arc<CollectiveSchema> {
        &self.schema
    }

    /// Wraps an arbitrary symmetric N×N matrix laid out by `schema`.
    pub fn from_matrix(schema: Arc<CollectiveSchema>, matrix: DMatrix<f64>) -> Result<Self> {
        let n = schema.total_size();
        if matrix.shape() != (n, n) {
            return Err(XmcError::ShapeMismatch(format!(
                "matrix is {:?}, expected {n}x{n}",
                matrix.shape()
            )));
        }
        Ok(Self { schema, matrix })
    }

    /// `P_v(Z) = Z[r_v, c_v]`.
    pub fn extract_view(&self, v: usize) -> DMatrix<f64> {
        extract_view(&self.schema, &self.matrix, v)
    }

    /// `[P_v(Z)]_v`.
    pub fn to_collective(&self) -> CollectiveMatrix {
        CollectiveMatrix {
            schema: self.schema.clone(),
            views: (0..self.schema.num_views())
                .map(|v| self.extract_view(v))
                .collect(),
        }
    }
}

pub(crate) fn extract_view(schema: &CollectiveSchema, z: &DMatrix<f64>, v: usize) -> DMatrix<f64> {
    let view = schema.view(v);
    let (ro, co) = (schema.offset(view.row), schema.offset(view.col));
    z.view((ro, co), schema.view_shape(v)).into_owned()
}

impl SparseCollective {
    pub fn new(schema: Arc<CollectiveSchema>, entries: Vec<(BasisIndex, f64)>) -> Result<Self> {
        for (idx, _) in &entries {
            schema.check_index(*idx)?;
        }
        Ok(Self { schema, entries })
    }

    pub fn zero(schema: Arc<CollectiveSchema>) -> Self {
        Self {
            schema,
            entries: Vec::new(),
        }
    }

    pub fn schema(&self) -> &Arc<CollectiveSchema> {
        &self.schema
    }

    pub fn entries(&self) -> &[(BasisIndex, f64)] {
        &self.entries
    }

    pub fn to_dense(&self) -> CollectiveMatrix {
        let mut out = CollectiveMatrix::zeros(self.schema.clone());
        for &(idx, x) in &self.entries {
            out.views[idx.view][(idx.row, idx.col)] += x;
        }
        out
    }

    pub fn inner_dense(&self, x: &CollectiveMatrix) -> Result<f64> {
        same_schema(&self.schema, x.schema())?;
        Ok(self.entries.iter().map(|&(idx, v)| v * x.get(idx)).sum())
    }

    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.inner_dense(&other.to_dense())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random(schema: &Arc<CollectiveSchema>, seed: u64) -> CollectiveMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CollectiveMatrix::from_fn(schema.clone(), |_| StandardNormal.sample(&mut rng))
    }

    fn single(rows: usize, cols: usize) -> Arc<CollectiveSchema> {
        Arc::new(CollectiveSchema::from_sizes(&[rows, cols], &[(0, 1)]).unwrap())
    }

    #[test]
    fn inner_examples() {
        let s = single(1, 2);
        let x = CollectiveMatrix::from_views(s.clone(), vec![DMatrix::from_row_slice(1, 2, &[1., 2.])]).unwrap();
        let y = CollectiveMatrix::from_views(s.clone(), vec![DMatrix::from_row_slice(1, 2, &[3., 4.])]).unwrap();
        assert_eq!(x.inner(&y).unwrap(), 11.0);
        assert_eq!(x.inner(&x).unwrap(), x.frob_norm_sq());
        assert_eq!(x.inner(&CollectiveMatrix::zeros(s)).unwrap(), 0.0);
    }

    #[test]
    fn schema_mismatch_rejected() {
        let x = CollectiveMatrix::zeros(single(1, 2));
        let y = CollectiveMatrix::zeros(single(2, 1));
        assert!(matches!(x.inner(&y), Err(XmcError::SchemaMismatch(_))));
    }

    #[test]
    fn wrong_shape_rejected() {
        let r = CollectiveMatrix::from_views(single(2, 2), vec![DMatrix::zeros(2, 3)]);
        assert!(matches!(r, Err(XmcError::ShapeMismatch(_))));
    }

    #[test]
    fn basis_orthonormal_and_extracts() {
        let s = Arc::new(CollectiveSchema::four_entity_preset(2).unwrap());
        let x = random(&s, 1);
        let all: Vec<_> = s.basis_indices().collect();
        for &a in &all {
            let ea = basis(s.clone(), a).unwrap();
            assert_eq!(ea.inner_dense(&x).unwrap(), x.get(a));
            for &b in all.iter().take(6) {
                let eb = basis(s.clone(), b).unwrap();
                let expected = if a == b { 1.0 } else { 0.0 };
                assert_eq!(ea.inner(&eb).unwrap(), expected);
            }
        }
        assert!(basis(s, BasisIndex::new(0, 5, 0)).is_err());
    }

    #[test]
    fn block_round_trip_and_trace() {
        let s = Arc::new(CollectiveSchema::four_entity_preset(3).unwrap());
        let x = random(&s, 2);
        let b = x.to_block();
        assert_eq!(b.to_collective(), x);
        assert_eq!(b.matrix().transpose(), *b.matrix());
        assert_eq!(b.matrix().trace(), 0.0);
        assert!((b.matrix().norm_squared() - 2.0 * x.frob_norm_sq()).abs() < 1e-10);
    }

    #[test]
    fn block_of_scalar_view() {
        let s = single(1, 1);
        let x = CollectiveMatrix::from_views(s, vec![DMatrix::from_element(1, 1, 3.0)]).unwrap();
        assert_eq!(
            *x.to_block().matrix(),
            DMatrix::from_row_slice(2, 2, &[0., 3., 3., 0.])
        );
        assert!((x.dual_atomic_norm().unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn entity_sets() {
        let s = Arc::new(CollectiveSchema::four_entity_preset(2).unwrap());
        let x = random(&s, 3);
        let x1 = x.to_entity_set(0);
        assert_eq!(x1.columns(0, 2), *x.view(0));
        assert_eq!(x1.columns(2, 2), *x.view(1));
        assert_eq!(x.to_entity_set(2), x.view(1).transpose());
        let total: f64 = (0..4).map(|k| x.to_entity_set(k).norm_squared()).sum();
        assert!((total - 2.0 * x.frob_norm_sq()).abs() < 1e-10);
        // entity_cell agrees with the concatenation
        for k in 0..4 {
            let xk = x.to_entity_set(k);
            for i in 0..s.size(k) {
                for c in 0..s.entity_width(k) {
                    let idx = s.entity_cell(k, i, c).unwrap();
                    assert_eq!(xk[(i, c)], x.get(idx));
                }
            }
        }
    }

    #[test]
    fn atom_examples() {
        let s = single(1, 1);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let a = atom(s.clone(), &[h, h]).unwrap();
        assert!((a.get(BasisIndex::new(0, 0, 0)) - 0.5).abs() < 1e-15);
        let z = atom(s.clone(), &[1.0, 0.0]).unwrap();
        assert_eq!(z.frob_norm(), 0.0);
        assert!(matches!(atom(s, &[1.0, 1.0]), Err(XmcError::NonUnitVector(_))));

        let s = Arc::new(CollectiveSchema::four_entity_preset(3).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut u: Vec<f64> = (0..12).map(|_| StandardNormal.sample(&mut rng)).collect();
        let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        u.iter_mut().for_each(|x| *x /= nu);
        assert!(atom(s, &u).unwrap().frob_norm() <= 1.0);
    }

    #[test]
    fn dual_norm_bounds_and_basis_value() {
        let s = Arc::new(CollectiveSchema::four_entity_preset(3).unwrap());
        let x = random(&s, 4);
        let d = x.dual_atomic_norm().unwrap();
        assert!(d >= 0.5 * x.max_abs() - 1e-12);
        assert!(d >= x.frob_norm() / (2.0 * s.total_size() as f64));
        assert_eq!(CollectiveMatrix::zeros(s.clone()).dual_atomic_norm().unwrap(), 0.0);
        for idx in s.basis_indices().step_by(5) {
            let e = basis(s.clone(), idx).unwrap().to_dense();
            assert!((e.dual_atomic_norm().unwrap() - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn dual_norm_requires_bipartite() {
        let s = Arc::new(CollectiveSchema::from_sizes(&[1; 3], &[(0, 1), (1, 2), (0, 2)]).unwrap());
        let x = CollectiveMatrix::zeros(s);
        assert!(matches!(x.dual_atomic_norm(), Err(XmcError::OddCycle(_))));
    }

    #[test]
    fn bounds_for_scaled_atom() {
        // Single view, balanced u: lower and upper meet at t.
        let s = single(2, 3);
        let u1 = [0.6, 0.8];
        let u2 = [2.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0];
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let u: Vec<f64> = u1.iter().chain(u2.iter()).map(|x| x * h).collect();
        let t = 2.5;
        let a = atom(s.clone(), &u).unwrap();
        let x = a.scaled(t);
        let st = t.sqrt();
        let factors = FactorSet::new(
            s.clone(),
            1,
            vec![
                DMatrix::from_column_slice(2, 1, &u[..2]).scale(st),
                DMatrix::from_column_slice(3, 1, &u[2..]).scale(st),
            ],
        )
        .unwrap();
        let (lo, hi) = x.atomic_norm_bounds(&[a], Some(&factors)).unwrap();
        assert!((lo - t).abs() < 1e-9, "{lo}");
        assert!((hi - t).abs() < 1e-12);

        let (lo, hi) = CollectiveMatrix::zeros(s.clone()).atomic_norm_bounds(&[], None).unwrap();
        assert_eq!((lo, hi), (0.0, 0.0));

        let wrong = x.scaled(2.0);
        assert!(matches!(
            wrong.atomic_norm_bounds(&[], Some(&factors)),
            Err(XmcError::FactorMismatch(_))
        ));
    }

    #[test]
    fn weak_duality_on_random_factors() {
        let s = Arc::new(CollectiveSchema::four_entity_preset(4).unwrap());
        let f = FactorSet::random_gaussian(s.clone(), 2, 8);
        let x = f.synthesize();
        let certs = vec![x.clone(), random(&s, 1), random(&s, 2)];
        let (lo, hi) = x.atomic_norm_bounds(&certs, Some(&f)).unwrap();
        assert!(lo > 0.0);
        assert!(hi - lo >= 0.0);
    }
}
