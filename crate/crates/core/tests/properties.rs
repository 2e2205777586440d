mod common;

use std::sync::Arc;

use proptest::prelude::*;

use common::{gaussian, random_bipartite_schema, rng};
use xmc::observation::{apply_p_omega, apply_r_omega, SamplingPlan};
use xmc::{CollectiveSchema, FactorSet};

fn schema_from(seed: u64) -> Arc<CollectiveSchema> {
    random_bipartite_schema(&mut rng(seed), 5, 6)
}

fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-10 * scale.max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn entity_cells_count_each_view_twice(seed in any::<u64>()) {
        let s = schema_from(seed);
        let total: usize = (0..s.num_entities()).map(|k| s.size(k) * s.entity_width(k)).sum();
        prop_assert_eq!(total, 2 * s.num_cells());
    }

    #[test]
    fn inner_product_is_bilinear_and_symmetric(seed in any::<u64>(), a in -5.0f64..5.0) {
        let s = schema_from(seed);
        let mut r = rng(seed ^ 1);
        let (x, y, z) = (gaussian(&s, &mut r), gaussian(&s, &mut r), gaussian(&s, &mut r));
        let xy = x.inner(&y).unwrap();
        prop_assert!(close(xy, y.inner(&x).unwrap(), xy.abs()));
        let lhs = x.axpy(a, &y).unwrap().inner(&z).unwrap();
        let rhs = x.inner(&z).unwrap() + a * y.inner(&z).unwrap();
        prop_assert!(close(lhs, rhs, lhs.abs() + rhs.abs()));
        prop_assert!(close(x.inner(&x).unwrap(), x.frob_norm_sq(), x.frob_norm_sq()));
    }

    #[test]
    fn block_embedding_preserves_inner_product(seed in any::<u64>()) {
        let s = schema_from(seed);
        let mut r = rng(seed ^ 2);
        let (x, y) = (gaussian(&s, &mut r), gaussian(&s, &mut r));
        let bx = x.to_block();
        let by = y.to_block();
        let block = bx.matrix().dot(by.matrix());
        let xy = x.inner(&y).unwrap();
        prop_assert!(close(block, 2.0 * xy, xy.abs()));
        prop_assert_eq!(bx.to_collective(), x);
    }

    #[test]
    fn projectors_split_and_are_self_adjoint(seed in any::<u64>(), rank in 1usize..4) {
        let s = schema_from(seed);
        let tb = FactorSet::random_gaussian(s.clone(), rank, seed).tangent_basis();
        let mut r = rng(seed ^ 3);
        let (x, y) = (gaussian(&s, &mut r), gaussian(&s, &mut r));
        let pt = tb.project_t(&x).unwrap();
        let pp = tb.project_t_perp(&x).unwrap();
        prop_assert!(pt.add(&pp).unwrap().sub(&x).unwrap().frob_norm() <= 1e-10 * x.frob_norm());
        let lhs = pt.inner(&y).unwrap();
        let rhs = x.inner(&tb.project_t(&y).unwrap()).unwrap();
        prop_assert!(close(lhs, rhs, x.frob_norm() * y.frob_norm()));
        prop_assert!(pt.frob_norm() <= x.frob_norm() * (1.0 + 1e-12));
    }

    #[test]
    fn sampling_operators_are_linear(seed in any::<u64>(), a in -3.0f64..3.0, total in 1usize..200) {
        let s = schema_from(seed);
        let plan = SamplingPlan::proportional(s.clone(), total, seed).unwrap();
        let omega = plan.sample();
        let mut r = rng(seed ^ 4);
        let (x, y) = (gaussian(&s, &mut r), gaussian(&s, &mut r));
        let combo = x.axpy(a, &y).unwrap();
        let scale = combo.frob_norm() + x.frob_norm() + y.frob_norm();

        let lhs = apply_r_omega(&combo, &omega, &plan).unwrap().to_dense();
        let rx = apply_r_omega(&x, &omega, &plan).unwrap().to_dense();
        let ry = apply_r_omega(&y, &omega, &plan).unwrap().to_dense();
        let diff = lhs.sub(&rx.axpy(a, &ry).unwrap()).unwrap().frob_norm();
        prop_assert!(diff <= 1e-9 * scale * lhs.frob_norm().max(1.0));

        let lhs = apply_p_omega(&combo, &omega).unwrap().to_dense();
        let px = apply_p_omega(&x, &omega).unwrap().to_dense();
        let py = apply_p_omega(&y, &omega).unwrap().to_dense();
        prop_assert!(lhs.sub(&px.axpy(a, &py).unwrap()).unwrap().frob_norm() <= 1e-10 * scale * total as f64);
    }

    #[test]
    fn r_omega_is_self_adjoint(seed in any::<u64>(), total in 1usize..200) {
        let s = schema_from(seed);
        let plan = SamplingPlan::balanced(s.clone(), total, seed).unwrap();
        let omega = plan.sample();
        let mut r = rng(seed ^ 5);
        let (x, y) = (gaussian(&s, &mut r), gaussian(&s, &mut r));
        let lhs = apply_r_omega(&x, &omega, &plan).unwrap().inner_dense(&y).unwrap();
        let rhs = apply_r_omega(&y, &omega, &plan).unwrap().inner_dense(&x).unwrap();
        prop_assert!(close(lhs, rhs, lhs.abs() + rhs.abs()));
    }
}
