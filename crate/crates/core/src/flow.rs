//! Geodesic flow of the stationary metric as an explicit first-order system
//! in the variables `(t, x, v⁰, v_x)`, with monitoring of the two conserved
//! quantities: the momentum `J = -λ(v⁰ - ⟨ω, v_x⟩)` of the time-translation
//! symmetry, and the Hamiltonian `H = ½|v|²_g`.

use nalgebra::DVector;

use crate::chart::ManifoldSpec;
use crate::domain::boundary_tol;
use crate::error::{Error, Result};
use crate::ode::{
    self, gauss_legendre_7, DenseSolution, EventSpec, IntegrationOptions, StopReason, Tolerances,
};

/// Grazing threshold on `db/ds` at a boundary crossing.
pub const GRAZING_RATE_TOL: f64 = 1e-6;

/// Relative drift allowed in `J` and `H` before the integration is retried.
pub const CONSERVATION_REL_TOL: f64 = 1e-8;

/// A point of the tangent bundle of the spacetime, in chart coordinates.
#[derive(Debug, Clone)]
pub struct SpacetimeState {
    pub t: f64,
    pub x: DVector<f64>,
    pub v0: f64,
    pub vx: DVector<f64>,
    /// Affine parameter at which this state was sampled.
    pub s: f64,
}

impl SpacetimeState {
    pub fn new(t: f64, x: DVector<f64>, v0: f64, vx: DVector<f64>) -> Self {
        SpacetimeState { t, x, v0, vx, s: 0.0 }
    }

    pub(crate) fn from_flat(y: &DVector<f64>, s: f64) -> Self {
        let n = (y.len() - 2) / 2;
        SpacetimeState {
            t: y[0],
            x: y.rows(1, n).into_owned(),
            v0: y[n + 1],
            vx: y.rows(n + 2, n).into_owned(),
            s,
        }
    }

    pub(crate) fn to_flat(&self) -> DVector<f64> {
        let n = self.x.len();
        let mut y = DVector::zeros(2 * n + 2);
        y[0] = self.t;
        for i in 0..n {
            y[1 + i] = self.x[i];
            y[n + 2 + i] = self.vx[i];
        }
        y[n + 1] = self.v0;
        y
    }

    /// Full spacetime velocity `(v⁰, v_x)`.
    pub fn velocity(&self) -> DVector<f64> {
        let n = self.vx.len();
        let mut v = DVector::zeros(n + 1);
        v[0] = self.v0;
        for i in 0..n {
            v[i + 1] = self.vx[i];
        }
        v
    }
}

/// `H = ½ |v|²_g`; equals `-m²/2` on a mass-`m` timelike state.
pub fn hamiltonian_h(spec: &ManifoldSpec, state: &SpacetimeState) -> Result<f64> {
    let x = state.x.as_slice();
    let b = spec.domain().b(x);
    if b < -boundary_tol(x) {
        return Err(Error::OutOfDomain { point: x.to_vec(), b });
    }
    Ok(0.5 * spec.inner_g(x, &state.velocity(), &state.velocity())?)
}

/// Conserved momentum `J = -λ(x)(v⁰ - ⟨ω, v_x⟩) = (∂_t, v)_g`.
pub fn momentum_j(spec: &ManifoldSpec, state: &SpacetimeState) -> Result<f64> {
    let x = state.x.as_slice();
    let b = spec.domain().b(x);
    if b < -boundary_tol(x) {
        return Err(Error::OutOfDomain { point: x.to_vec(), b });
    }
    let lam = spec.lambda_at(x);
    let w = spec.omega_at(x);
    Ok(-lam * (state.v0 - w.dot(&state.vx)))
}

/// Derivative of `(t, x, v⁰, v_x)` along the geodesic flow.
#[derive(Debug, Clone)]
pub struct FlowDerivative {
    pub t_dot: f64,
    pub x_dot: DVector<f64>,
    pub v0_dot: f64,
    pub vx_dot: DVector<f64>,
}

/// Explicit right-hand side of the geodesic equations:
///
/// ```text
/// ṫ    = v⁰
/// ẋ^l  = v_x^l
/// v̇⁰   = -v⁰⟨∂λ, v_x⟩/λ + ∂_j(λω_k) v_x^j v_x^k / λ - ω_l Γ^l_{ij} v_x^i v_x^j
///        - ½ u² W^k ∂_k λ + λ u W^k (∂_k ω_i - ∂_i ω_k) v_x^i
/// v̇_x^l = -Γ^l_{ij} v_x^i v_x^j - ½ u² h^{kl} ∂_k λ
///        + λ u h^{kl} (∂_k ω_i - ∂_i ω_k) v_x^i
/// ```
///
/// with `u = v⁰ - ⟨ω, v_x⟩` and `W^k = h^{kl} ω_l`. The `Γ` are the
/// Levi-Civita symbols of the spatial metric `h`.
pub fn geodesic_rhs(spec: &ManifoldSpec, state: &SpacetimeState) -> Result<FlowDerivative> {
    let n = spec.dim();
    let x = state.x.as_slice();
    let vx = &state.vx;

    let lam = spec.lambda_at(x);
    if !(lam > 0.0) {
        return Err(Error::NonLorentzian { point: x.to_vec(), lambda: lam });
    }
    let dlam = spec.grad_lambda_at(x);
    let w = spec.omega_at(x);
    let dw = spec.omega_jacobian_at(x); // (k, i) = ∂_k ω_i
    let hinv = spec.h_inv_at(x)?;
    let gamma = spec.christoffel_h(x)?;
    let wup = &hinv * &w;

    let u = state.v0 - w.dot(vx);

    // Γ^l_{ij} v^i v^j for each l.
    let quad: DVector<f64> = DVector::from_fn(n, |l, _| (vx.transpose() * &gamma[l] * vx)[0]);
    // dω contraction on the derivative index: curl_k = (∂_k ω_i - ∂_i ω_k) v^i.
    let curl = DVector::from_fn(n, |k, _| {
        (0..n).map(|i| (dw[(k, i)] - dw[(i, k)]) * vx[i]).sum::<f64>()
    });
    let curl_up = &hinv * &curl;
    let grad_lam_up = &hinv * &dlam;

    let vx_dot = -&quad - 0.5 * u * u * &grad_lam_up + lam * u * &curl_up;

    let mut v0_dot = -state.v0 * dlam.dot(vx) / lam;
    // ∂_j(λ ω_k) v^j v^k / λ
    let mut cross = 0.0;
    for j in 0..n {
        for k in 0..n {
            cross += (dlam[j] * w[k] + lam * dw[(j, k)]) * vx[j] * vx[k];
        }
    }
    v0_dot += cross / lam;
    v0_dot -= w.dot(&quad);
    v0_dot -= 0.5 * u * u * wup.dot(&dlam);
    v0_dot += lam * u * wup.dot(&curl);

    Ok(FlowDerivative { t_dot: state.v0, x_dot: vx.clone(), v0_dot, vx_dot })
}

struct GeodesicSystem<'a> {
    spec: &'a ManifoldSpec,
}

impl ode::OdeRhs for GeodesicSystem<'_> {
    fn dim(&self) -> usize {
        2 * self.spec.dim() + 2
    }
    fn eval(&self, s: f64, y: &[f64], dy: &mut [f64]) {
        let n = self.spec.dim();
        let state = SpacetimeState::from_flat(&DVector::from_column_slice(y), s);
        match geodesic_rhs(self.spec, &state) {
            Ok(d) => {
                dy[0] = d.t_dot;
                for i in 0..n {
                    dy[1 + i] = d.x_dot[i];
                    dy[n + 2 + i] = d.vx_dot[i];
                }
                dy[n + 1] = d.v0_dot;
            }
            Err(_) => {
                // Poison the step so the controller rejects it.
                for v in dy.iter_mut() {
                    *v = f64::NAN;
                }
            }
        }
    }
}

/// Internal representation of a spacetime trajectory.
#[derive(Debug, Clone)]
pub(crate) enum TrajectoryData {
    /// Dense solution of the full `(t, x, v⁰, v_x)` system.
    Direct(DenseSolution),
    /// Reduced `(x, v_x)` solution with the time coordinate recovered by
    /// quadrature of `ṫ = -ρ/λ + ⟨ω, ẋ⟩` from the momentum constraint.
    Lifted {
        base: DenseSolution,
        rho: f64,
        /// Cumulative `t` at the accepted knots of `base`.
        t_knots: Vec<(f64, f64)>,
    },
}

/// A geodesic of the spacetime over `[0, T]` with dense output and a
/// conserved-quantity log.
#[derive(Clone)]
pub struct TrajectoryM {
    pub(crate) spec: ManifoldSpec,
    pub(crate) data: TrajectoryData,
    /// `(s, J(s), H(s))` at accepted steps.
    pub drift_log: Vec<(f64, f64, f64)>,
    pub warnings: Vec<String>,
    pub stopped: StopReason,
    /// True when the trajectory ended in a tangential boundary crossing.
    pub grazing: bool,
}

impl TrajectoryM {
    pub fn spec(&self) -> &ManifoldSpec {
        &self.spec
    }

    /// Final affine parameter (exit time when stopped by the boundary).
    pub fn s_end(&self) -> f64 {
        match &self.data {
            TrajectoryData::Direct(sol) => sol.s_end,
            TrajectoryData::Lifted { base, .. } => base.s_end,
        }
    }

    pub fn exited_boundary(&self) -> bool {
        matches!(self.stopped, StopReason::Event { .. })
    }

    /// State at affine parameter `s` (clamped to the trajectory span).
    pub fn eval(&self, s: f64) -> SpacetimeState {
        match &self.data {
            TrajectoryData::Direct(sol) => SpacetimeState::from_flat(&sol.eval(s), s),
            TrajectoryData::Lifted { base, rho, t_knots } => {
                let n = base.dim / 2;
                let y = base.eval(s);
                let x = y.rows(0, n).into_owned();
                let vx = y.rows(n, n).into_owned();
                let lam = self.spec.lambda_at(x.as_slice());
                let w = self.spec.omega_at(x.as_slice());
                let v0 = -rho / lam + w.dot(&vx);
                let idx = t_knots.partition_point(|&(sk, _)| sk <= s).saturating_sub(1);
                let (sk, tk) = t_knots[idx];
                let t = tk
                    + gauss_legendre_7(
                        |u| {
                            let yu = base.eval(u);
                            let xu = yu.rows(0, n);
                            let vxu = yu.rows(n, n);
                            -rho / self.spec.lambda_at(xu.as_slice())
                                + self.spec.omega_at(xu.as_slice()).dot(&vxu)
                        },
                        sk,
                        s,
                    );
                SpacetimeState { t, x, v0, vx, s }
            }
        }
    }

    /// Time derivative of the state, from the dense interpolant.
    pub fn eval_derivative(&self, s: f64) -> FlowDerivative {
        match &self.data {
            TrajectoryData::Direct(sol) => {
                let n = sol.dim / 2 - 1;
                let dy = sol.eval_derivative(s);
                FlowDerivative {
                    t_dot: dy[0],
                    x_dot: dy.rows(1, n).into_owned(),
                    v0_dot: dy[n + 1],
                    vx_dot: dy.rows(n + 2, n).into_owned(),
                }
            }
            TrajectoryData::Lifted { base, rho, .. } => {
                let n = base.dim / 2;
                let state = self.eval(s);
                let dy = base.eval_derivative(s);
                let x_dot = dy.rows(0, n).into_owned();
                let vx_dot = dy.rows(n, n).into_owned();
                // v⁰ = -ρ/λ + ⟨ω, v_x⟩ differentiated along the curve.
                let x = state.x.as_slice();
                let lam = self.spec.lambda_at(x);
                let dlam = self.spec.grad_lambda_at(x);
                let w = self.spec.omega_at(x);
                let dw = self.spec.omega_jacobian_at(x);
                let mut v0_dot = rho * dlam.dot(&x_dot) / (lam * lam) + w.dot(&vx_dot);
                for k in 0..n {
                    for i in 0..n {
                        v0_dot += dw[(k, i)] * x_dot[k] * state.vx[i];
                    }
                }
                FlowDerivative { t_dot: state.v0, x_dot, v0_dot, vx_dot }
            }
        }
    }

    pub fn start_state(&self) -> SpacetimeState {
        self.eval(0.0)
    }

    pub fn end_state(&self) -> SpacetimeState {
        self.eval(self.s_end())
    }

    /// Accepted-step parameter values.
    pub fn knots(&self) -> Vec<f64> {
        match &self.data {
            TrajectoryData::Direct(sol) => sol.knots(),
            TrajectoryData::Lifted { base, .. } => base.knots(),
        }
    }

    pub fn max_j_drift(&self) -> f64 {
        let j0 = self.drift_log.first().map(|r| r.1).unwrap_or(0.0);
        self.drift_log.iter().map(|r| (r.1 - j0).abs()).fold(0.0, f64::max)
    }

    pub fn max_h_drift(&self) -> f64 {
        let h0 = self.drift_log.first().map(|r| r.2).unwrap_or(0.0);
        self.drift_log.iter().map(|r| (r.2 - h0).abs()).fold(0.0, f64::max)
    }
}

/// Default integration horizon: ten `h`-diameters at the initial spatial
/// speed.
pub fn default_horizon(spec: &ManifoldSpec, state: &SpacetimeState) -> f64 {
    let speed = spec.norm_h(state.x.as_slice(), &state.vx).max(1e-3);
    10.0 * spec.h_diameter_estimate() / speed
}

/// Integrate the geodesic flow from `state0` until the boundary is crossed
/// or the horizon is reached. Conservation of `J` and `H` is monitored at
/// every accepted step; if the drift exceeds the target the integration is
/// retried with tighter tolerances and a warning is recorded.
pub fn integrate_geodesic(
    spec: &ManifoldSpec,
    state0: &SpacetimeState,
    horizon: Option<f64>,
    tol: Tolerances,
) -> Result<TrajectoryM> {
    let x0 = state0.x.as_slice();
    let b0 = spec.domain().b(x0);
    if b0 < -boundary_tol(x0) {
        return Err(Error::OutOfDomain { point: x0.to_vec(), b: b0 });
    }
    let horizon = horizon.unwrap_or_else(|| default_horizon(spec, state0));
    let y0 = state0.to_flat();
    let n = spec.dim();

    let j0 = momentum_j(spec, state0)?;
    let h0 = hamiltonian_h(spec, state0)?;
    let j_target = CONSERVATION_REL_TOL * (1.0 + j0.abs());
    let h_target = CONSERVATION_REL_TOL * (1.0 + h0.abs());

    let system = GeodesicSystem { spec };
    let event_f = |_s: f64, y: &[f64]| spec.domain().b(&y[1..=n]);
    let event = EventSpec {
        f: &event_f,
        f_tol: 1e-10 * (1.0 + spec.domain().bounding_radius()),
        reject_beyond: Some(0.5 * spec.b_scale()),
    };

    // The time coordinate is a quadrature variable: excluding it from the
    // error norm makes trajectories exactly equivariant under time shifts.
    let mut mask = vec![true; 2 * n + 2];
    mask[0] = false;

    let mut warnings = Vec::new();
    let mut current_tol = tol;
    let mut last: Option<(ode::OdeOutcome, Vec<(f64, f64, f64)>)> = None;
    for attempt in 0..3 {
        let options = IntegrationOptions {
            tol: current_tol,
            error_mask: Some(mask.clone()),
            ..Default::default()
        };
        let outcome = ode::integrate(&system, 0.0, &y0, horizon, &options, Some(&event))?;

        let mut log = Vec::with_capacity(outcome.solution.steps.len() + 1);
        let mut max_dj = 0.0f64;
        let mut max_dh = 0.0f64;
        for s in outcome.solution.knots() {
            let state = SpacetimeState::from_flat(&outcome.solution.eval(s), s);
            let j = momentum_j(spec, &state)?;
            let h = hamiltonian_h(spec, &state)?;
            max_dj = max_dj.max((j - j0).abs());
            max_dh = max_dh.max((h - h0).abs());
            log.push((s, j, h));
        }

        if max_dj <= j_target && max_dh <= h_target {
            last = Some((outcome, log));
            break;
        }
        if attempt < 2 {
            warnings.push(format!(
                "ConservationWarning: drift J {:.3e} / H {:.3e} above target; retrying with tighter tolerances",
                max_dj, max_dh
            ));
            log::warn!("{}", warnings.last().unwrap());
            current_tol = current_tol.tightened(1e-2);
        } else {
            warnings.push(format!(
                "ConservationWarning: drift J {:.3e} / H {:.3e} above target after retries",
                max_dj, max_dh
            ));
            log::warn!("{}", warnings.last().unwrap());
        }
        last = Some((outcome, log));
    }

    let (outcome, drift_log) = last.expect("at least one integration attempt");

    // Grazing diagnosis at a boundary stop.
    let mut grazing = false;
    if let StopReason::Event { s } = outcome.stopped {
        let state = SpacetimeState::from_flat(&outcome.solution.eval(s), s);
        let rate = spec.domain().grad_b(state.x.as_slice()).dot(&state.vx);
        grazing = rate.abs() < GRAZING_RATE_TOL;
    }

    Ok(TrajectoryM {
        spec: spec.clone(),
        data: TrajectoryData::Direct(outcome.solution),
        drift_log,
        warnings,
        stopped: outcome.stopped,
        grazing,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::domain::Ball;
    use crate::fields::{ConstMetric, ConstScalar, CovectorFn, ScalarFn, ZeroCovector};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use std::sync::Arc;

    fn flat_disk() -> ManifoldSpec {
        ManifoldSpec::new(
            Arc::new(Ball::unit_disk()),
            Arc::new(ConstMetric::euclidean(2)),
            Arc::new(ZeroCovector(2)),
            Arc::new(ConstScalar(1.0)),
        )
        .unwrap()
    }

    /// The standard curved test manifold:
    /// `h = I₂`, `ω = 0.1(-x², x¹)`, `λ = 1 + 0.5 (x¹)²`.
    pub(crate) fn curved_spec() -> ManifoldSpec {
        ManifoldSpec::new(
            Arc::new(Ball::unit_disk()),
            Arc::new(ConstMetric::euclidean(2)),
            Arc::new(CovectorFn {
                dim: 2,
                f: |x: &[f64]| DVector::from_column_slice(&[-0.1 * x[1], 0.1 * x[0]]),
                jac: |_: &[f64]| DMatrix::from_row_slice(2, 2, &[0.0, 0.1, -0.1, 0.0]),
            }),
            Arc::new(ScalarFn {
                f: |x: &[f64]| 1.0 + 0.5 * x[0] * x[0],
                grad: |x: &[f64]| DVector::from_column_slice(&[x[0], 0.0]),
            }),
        )
        .unwrap()
    }

    #[test]
    fn flat_invariants() {
        let spec = flat_disk();
        let state = SpacetimeState::new(
            0.0,
            DVector::from_column_slice(&[0.0, 0.0]),
            2.0,
            DVector::from_column_slice(&[3.0f64.sqrt(), 0.0]),
        );
        assert_abs_diff_eq!(hamiltonian_h(&spec, &state).unwrap(), -0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(momentum_j(&spec, &state).unwrap(), -2.0, epsilon = 1e-14);

        let null = SpacetimeState::new(
            0.0,
            DVector::from_column_slice(&[0.0, 0.0]),
            1.0,
            DVector::from_column_slice(&[1.0, 0.0]),
        );
        assert_abs_diff_eq!(hamiltonian_h(&spec, &null).unwrap(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn momentum_equals_killing_inner_product() {
        let spec = curved_spec();
        let state = SpacetimeState::new(
            0.3,
            DVector::from_column_slice(&[0.2, -0.4]),
            1.0,
            DVector::from_column_slice(&[1.0, 0.25]),
        );
        let dt = DVector::from_column_slice(&[1.0, 0.0, 0.0]);
        let by_matrix = spec
            .inner_g(state.x.as_slice(), &state.velocity(), &dt)
            .unwrap();
        assert_abs_diff_eq!(momentum_j(&spec, &state).unwrap(), by_matrix, epsilon = 1e-12);
        // λ = 2, ω = (0.5, 0), v⁰ = 1, v_x = (1, 0) → J = -2(1 - 0.5) = -1.
        let spec2 = ManifoldSpec::new(
            Arc::new(Ball::unit_disk()),
            Arc::new(ConstMetric::euclidean(2)),
            Arc::new(CovectorFn {
                dim: 2,
                f: |_: &[f64]| DVector::from_column_slice(&[0.5, 0.0]),
                jac: |_: &[f64]| DMatrix::zeros(2, 2),
            }),
            Arc::new(ConstScalar(2.0)),
        )
        .unwrap();
        let st = SpacetimeState::new(
            0.0,
            DVector::from_column_slice(&[0.0, 0.0]),
            1.0,
            DVector::from_column_slice(&[1.0, 0.0]),
        );
        assert_abs_diff_eq!(momentum_j(&spec2, &st).unwrap(), -1.0, epsilon = 1e-14);
    }

    #[test]
    fn rhs_static_specialization() {
        // ω = 0, h = I: v̇_x = -½ (v⁰)² ∇λ, v̇⁰ = -v⁰⟨∇λ, v_x⟩/λ.
        let spec = ManifoldSpec::new(
            Arc::new(Ball::unit_disk()),
            Arc::new(ConstMetric::euclidean(2)),
            Arc::new(ZeroCovector(2)),
            Arc::new(ScalarFn {
                f: |x: &[f64]| 1.0 + 0.5 * x[0] * x[0],
                grad: |x: &[f64]| DVector::from_column_slice(&[x[0], 0.0]),
            }),
        )
        .unwrap();
        let state = SpacetimeState::new(
            0.0,
            DVector::from_column_slice(&[0.4, 0.2]),
            1.5,
            DVector::from_column_slice(&[0.3, -0.2]),
        );
        let d = geodesic_rhs(&spec, &state).unwrap();
        assert_abs_diff_eq!(d.vx_dot[0], -0.5 * 1.5 * 1.5 * 0.4, epsilon = 1e-13);
        assert_abs_diff_eq!(d.vx_dot[1], 0.0, epsilon = 1e-13);
        let lam = 1.0 + 0.5 * 0.4 * 0.4;
        assert_abs_diff_eq!(d.v0_dot, -1.5 * 0.4 * 0.3 / lam, epsilon = 1e-13);
    }

    #[test]
    fn rhs_agrees_with_christoffel_geodesic_equation() {
        let spec = curved_spec();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        use rand::{Rng, SeedableRng};
        for p in spec.domain().interior_samples(200, &mut rng.clone()) {
            let state = SpacetimeState::new(
                0.0,
                p.clone(),
                rng.gen_range(-2.0..2.0),
                DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0)),
            );
            let d = geodesic_rhs(&spec, &state).unwrap();
            let gamma = spec.christoffel_g(state.x.as_slice()).unwrap();
            let v = state.velocity();
            for mu in 0..3 {
                let acc = -(v.transpose() * &gamma[mu] * &v)[0];
                let got = match mu {
                    0 => d.v0_dot,
                    _ => d.vx_dot[mu - 1],
                };
                assert!(
                    (acc - got).abs() <= 1e-8 * (1.0 + acc.abs()),
                    "component {mu}: {acc} vs {got}"
                );
            }
        }
    }

    #[test]
    fn flat_straight_line_and_exit() {
        let spec = flat_disk();
        let state = SpacetimeState::new(
            0.0,
            DVector::from_column_slice(&[-0.9, 0.0]),
            2.0,
            DVector::from_column_slice(&[3.0f64.sqrt(), 0.0]),
        );
        let traj = integrate_geodesic(&spec, &state, None, Tolerances::default()).unwrap();
        assert!(traj.exited_boundary());
        let t_exit = 1.9 / 3.0f64.sqrt();
        assert_abs_diff_eq!(traj.s_end(), t_exit, epsilon = 1e-10);
        let end = traj.end_state();
        assert_abs_diff_eq!(end.x[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(end.t, 2.0 * t_exit, epsilon = 1e-9);
        // Dense output halfway.
        let mid = traj.eval(t_exit / 2.0);
        assert_abs_diff_eq!(mid.x[0], -0.9 + 3.0f64.sqrt() * t_exit / 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(mid.t, t_exit, epsilon = 1e-10);
    }

    #[test]
    fn conservation_on_curved_spec() {
        let spec = curved_spec();
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let x: DVector<f64> = DVector::from_column_slice(&[rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)]);
            let vx: DVector<f64> = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
            // Realize a mass-1 state by solving for v⁰ from H = -1/2.
            let lam = spec.lambda_at(x.as_slice());
            let w = spec.omega_at(x.as_slice());
            let speed2 = vx.norm_squared();
            let u: f64 = ((speed2 + 1.0) / lam).sqrt();
            let v0 = u + w.dot(&vx);
            let state = SpacetimeState::new(0.0, x, v0, vx);
            let traj = integrate_geodesic(&spec, &state, Some(10.0), Tolerances::default()).unwrap();
            let j0 = traj.drift_log[0].1;
            let h0 = traj.drift_log[0].2;
            assert!(traj.max_j_drift() <= 1e-8 * (1.0 + j0.abs()), "J drift {}", traj.max_j_drift());
            assert!(traj.max_h_drift() <= 1e-8 * (1.0 + h0.abs()), "H drift {}", traj.max_h_drift());
            assert_abs_diff_eq!(h0, -0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn time_translation_equivariance() {
        let spec = curved_spec();
        let x = DVector::from_column_slice(&[-0.3, 0.1]);
        let vx = DVector::from_column_slice(&[0.8, 0.4]);
        let s0 = SpacetimeState::new(0.0, x.clone(), 1.7, vx.clone());
        let s1 = SpacetimeState::new(5.0, x, 1.7, vx);
        let t0 = integrate_geodesic(&spec, &s0, Some(3.0), Tolerances::default()).unwrap();
        let t1 = integrate_geodesic(&spec, &s1, Some(3.0), Tolerances::default()).unwrap();
        assert_eq!(t0.knots().len(), t1.knots().len());
        assert_eq!(t0.s_end(), t1.s_end());
        for s in [0.25 * t0.s_end(), 0.5 * t0.s_end(), 0.9 * t0.s_end()] {
            let a = t0.eval(s);
            let b = t1.eval(s);
            // Identical step sequence: spatial data agree bitwise.
            assert_eq!(a.x, b.x);
            assert_eq!(a.vx, b.vx);
            assert_eq!(a.v0, b.v0);
            assert_abs_diff_eq!(b.t - a.t, 5.0, epsilon = 1e-11);
        }
    }

    #[test]
    fn curved_endpoint_matches_fixed_step_oracle() {
        let spec = curved_spec();
        // Mass-1, momentum -3 state via the reconstruction identities.
        let x = DVector::from_column_slice(&[-0.5, 0.2]);
        let lam = spec.lambda_at(x.as_slice());
        let w = spec.omega_at(x.as_slice());
        let rho = -3.0f64;
        let speed = (rho * rho / lam - 1.0).sqrt();
        let dir = DVector::from_column_slice(&[0.6, 0.8]);
        let vx = speed * dir;
        let v0 = -rho / lam + w.dot(&vx);
        let state = SpacetimeState::new(0.0, x, v0, vx);
        let horizon = 0.25; // stays inside the disk
        let traj = integrate_geodesic(&spec, &state, Some(horizon), Tolerances::default()).unwrap();

        // Classical RK4 with a fine fixed step, independent of the adaptive path.
        let mut y = state.to_flat();
        let n_steps = 40_000;
        let h = horizon / n_steps as f64;
        let rhs = |y: &DVector<f64>| {
            let st = SpacetimeState::from_flat(y, 0.0);
            let d = geodesic_rhs(&spec, &st).unwrap();
            let mut out = DVector::zeros(6);
            out[0] = d.t_dot;
            out[1] = d.x_dot[0];
            out[2] = d.x_dot[1];
            out[3] = d.v0_dot;
            out[4] = d.vx_dot[0];
            out[5] = d.vx_dot[1];
            out
        };
        for _ in 0..n_steps {
            let k1 = rhs(&y);
            let k2 = rhs(&(&y + &k1 * (h / 2.0)));
            let k3 = rhs(&(&y + &k2 * (h / 2.0)));
            let k4 = rhs(&(&y + &k3 * h));
            y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        let end = traj.eval(horizon).to_flat();
        assert!((end - y).norm() < 1e-8);
    }

    #[test]
    fn timelike_state_stays_on_mass_shell() {
        let spec = curved_spec();
        let x: DVector<f64> = DVector::from_column_slice(&[0.1, -0.2]);
        let lam = spec.lambda_at(x.as_slice());
        let w = spec.omega_at(x.as_slice());
        let vx: DVector<f64> = DVector::from_column_slice(&[0.9, -0.1]);
        let u: f64 = ((vx.norm_squared() + 1.0) / lam).sqrt();
        let state = SpacetimeState::new(0.0, x, u + w.dot(&vx), vx);
        let traj = integrate_geodesic(&spec, &state, Some(8.0), Tolerances::default()).unwrap();
        for &(_, _, h) in &traj.drift_log {
            assert!((h + 0.5).abs() <= 1e-8);
        }
    }
}
