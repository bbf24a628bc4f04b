//! Property tests of the algebraic invariants.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use ssmp::chart::ManifoldSpec;
use ssmp::domain::Ball;
use ssmp::fields::{ConstMetric, ConstScalar, CovectorFn, ScalarFn, ZeroCovector};
use ssmp::flow::{momentum_j, SpacetimeState};
use ssmp::scattering::project_to_boundary_m;

fn curved_spec() -> ManifoldSpec {
    ManifoldSpec::new(
        Arc::new(Ball::unit_disk()),
        Arc::new(ConstMetric::euclidean(2)),
        Arc::new(CovectorFn {
            dim: 2,
            f: |x: &[f64]| DVector::from_column_slice(&[-0.1 * x[1], 0.2 * x[0]]),
            jac: |_: &[f64]| DMatrix::from_row_slice(2, 2, &[0.0, 0.2, -0.1, 0.0]),
        }),
        Arc::new(ScalarFn {
            f: |x: &[f64]| 1.0 + 0.4 * x[0] * x[0] + 0.2 * x[1],
            grad: |x: &[f64]| DVector::from_column_slice(&[0.8 * x[0], 0.2]),
        }),
    )
    .unwrap()
}

fn interior_point() -> impl Strategy<Value = [f64; 2]> {
    (-0.65..0.65f64, -0.65..0.65f64).prop_map(|(a, b)| [a, b])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn block_inverse_matches_identity(x in interior_point()) {
        let spec = curved_spec();
        let gv = spec.assemble_g(&x).unwrap();
        let prod = &gv.g * &gv.g_inv;
        let dev = (prod - DMatrix::<f64>::identity(3, 3)).abs().max();
        prop_assert!(dev <= 1e-12, "g g^-1 deviates by {dev:.3e}");
        prop_assert!(gv.lorentzian);
    }

    #[test]
    fn momentum_is_linear_in_velocity(
        x in interior_point(),
        v0 in -3.0..3.0f64,
        vx0 in -3.0..3.0f64,
        vx1 in -3.0..3.0f64,
        a in -5.0..5.0f64,
    ) {
        let spec = curved_spec();
        let state = SpacetimeState::new(
            0.0,
            DVector::from_column_slice(&x),
            v0,
            DVector::from_column_slice(&[vx0, vx1]),
        );
        let scaled = SpacetimeState::new(
            0.0,
            state.x.clone(),
            a * state.v0,
            a * &state.vx,
        );
        let j = momentum_j(&spec, &state).unwrap();
        let ja = momentum_j(&spec, &scaled).unwrap();
        prop_assert!((ja - a * j).abs() <= 1e-12 * (1.0 + j.abs() * a.abs()));
    }

    #[test]
    fn tilde_round_trip(
        w0 in -0.6..0.6f64,
        w1 in -0.6..0.6f64,
        lam in 0.5..3.0f64,
        hd in 0.6..2.0f64,
    ) {
        // Constant tilde data: build the spec, recover the tilde fields.
        let h_tilde = DMatrix::from_diagonal(&DVector::from_column_slice(&[hd, 1.0]));
        let spec = ManifoldSpec::from_tilde(
            Arc::new(Ball::unit_disk()),
            Arc::new(ConstMetric(h_tilde.clone())),
            Arc::new(CovectorFn {
                dim: 2,
                f: move |_: &[f64]| DVector::from_column_slice(&[w0, w1]),
                jac: |_: &[f64]| DMatrix::zeros(2, 2),
            }),
            Arc::new(ConstScalar(lam)),
        ).unwrap();
        let x = [0.2, -0.1];
        let w_back = spec.omega_tilde_at(&x);
        let h_back = spec.h_tilde_at(&x);
        prop_assert!((w_back[0] - w0).abs() <= 1e-12);
        prop_assert!((w_back[1] - w1).abs() <= 1e-12);
        prop_assert!((h_back - h_tilde).abs().max() <= 1e-12);
    }

    #[test]
    fn boundary_projection_idempotent_and_orthogonal(
        angle in 0.0..std::f64::consts::TAU,
        vt in -3.0..3.0f64,
        va in -3.0..3.0f64,
        vb in -3.0..3.0f64,
    ) {
        let spec = curved_spec();
        let x = DVector::from_column_slice(&[angle.cos(), angle.sin()]);
        let v = DVector::from_column_slice(&[vt, va, vb]);
        let bt = project_to_boundary_m(&spec, 0.0, &x, &v).unwrap();
        let nu = spec.outward_normal(x.as_slice()).unwrap();
        prop_assert!(spec.inner_h(x.as_slice(), &bt.vx, &nu).abs() <= 1e-10);
        let again =
            project_to_boundary_m(&spec, 0.0, &x, &bt.full_components(&spec)).unwrap();
        prop_assert!((again.vt - bt.vt).abs() <= 1e-10);
        prop_assert!((again.vx - &bt.vx).norm() <= 1e-10);
    }
}
