//! The reduced system at a fixed momentum value.
//!
//! Fixing the conserved momentum `ρ` of the time-translation symmetry turns
//! the geodesic flow into the flow of a Riemannian system on `N` with
//! magnetic 2-form `ρ dω` and potential `U = ρ²/(-2λ)`. This module builds
//! that system, integrates its trajectories, and implements both directions
//! of the correspondence: projecting spacetime geodesics down and lifting
//! reduced trajectories back up.

use nalgebra::{DMatrix, DVector};

use crate::chart::ManifoldSpec;
use crate::domain::boundary_tol;
use crate::error::{Error, Result};
use crate::flow::{SpacetimeState, TrajectoryData, TrajectoryM, CONSERVATION_REL_TOL, GRAZING_RATE_TOL};
use crate::ode::{
    self, gauss_legendre_7, DenseSolution, EventSpec, IntegrationOptions, StopReason, Tolerances,
};

/// Reduced mechanical system `(N, h, ρ dω, ρ²/(-2λ))`.
#[derive(Clone)]
pub struct MPSystem {
    spec: ManifoldSpec,
    rho: f64,
    energy_level: Option<f64>,
}

/// Point of the reduced phase space `TN`.
#[derive(Debug, Clone)]
pub struct ReducedState {
    pub x: DVector<f64>,
    pub vx: DVector<f64>,
}

impl ReducedState {
    pub fn new(x: DVector<f64>, vx: DVector<f64>) -> Self {
        ReducedState { x, vx }
    }
}

/// Build the reduced system at momentum `rho`.
pub fn reduce(spec: &ManifoldSpec, rho: f64) -> MPSystem {
    MPSystem { spec: spec.clone(), rho, energy_level: None }
}

impl MPSystem {
    pub fn spec(&self) -> &ManifoldSpec {
        &self.spec
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn energy_level(&self) -> Option<f64> {
        self.energy_level
    }

    /// Fix the working energy level `k`.
    pub fn with_energy(mut self, k: f64) -> Self {
        self.energy_level = Some(k);
        self
    }

    /// Fix the energy level of mass-`m` trajectories, `k = -m²/2`.
    pub fn for_mass(self, m: f64) -> Self {
        self.with_energy(-0.5 * m * m)
    }

    /// Potential `U(x) = ρ²/(-2λ(x))`.
    pub fn potential(&self, x: &[f64]) -> f64 {
        -self.rho * self.rho / (2.0 * self.spec.lambda_at(x))
    }

    /// Euclidean gradient of `U` (covector components).
    pub fn grad_potential(&self, x: &[f64]) -> DVector<f64> {
        let lam = self.spec.lambda_at(x);
        self.spec.grad_lambda_at(x) * (self.rho * self.rho / (2.0 * lam * lam))
    }

    /// Lorentz force of the magnetic form `Ω = ρ dω`, as the matrix with
    /// `(Y u)^l = Y[(l, i)] u^i`, fixed by `(Y u, v)_h = Ω(u, v)` together
    /// with the reduced equations of motion.
    pub fn lorentz_force(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.spec.dim();
        let dw = self.spec.omega_jacobian_at(x);
        let hinv = self.spec.h_inv_at(x)?;
        let mut y = DMatrix::zeros(n, n);
        for l in 0..n {
            for i in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += hinv[(l, k)] * (dw[(i, k)] - dw[(k, i)]);
                }
                y[(l, i)] = self.rho * acc;
            }
        }
        Ok(y)
    }

    /// Kinetic-plus-potential energy `E = ½|v_x|²_h + U(x)`.
    pub fn energy(&self, state: &ReducedState) -> f64 {
        0.5 * self.spec.inner_h(state.x.as_slice(), &state.vx, &state.vx)
            + self.potential(state.x.as_slice())
    }

    /// Speed `|v_x|_h` on the energy shell `E = k` at `x`; fails when the
    /// shell is empty there.
    pub fn speed_at_energy(&self, x: &[f64], k: f64) -> Result<f64> {
        let gap = 2.0 * (k - self.potential(x));
        if gap <= 0.0 {
            return Err(Error::NoInwardSolution { c_squared: gap });
        }
        Ok(gap.sqrt())
    }
}

/// Mass-shell residual of the reduced energy identity
/// `ρ²/(-λ) + |v_x|²_h = -m²`, i.e. `E = -m²/2`.
#[derive(Debug, Clone, Copy)]
pub struct MassEnergyCheck {
    pub residual: f64,
    pub ok: bool,
}

pub fn mass_energy_check(system: &MPSystem, state: &ReducedState, m: f64) -> MassEnergyCheck {
    let residual = (system.energy(state) + 0.5 * m * m).abs();
    MassEnergyCheck { residual, ok: residual <= 1e-9 }
}

/// Build the full tangent vector of a mass-`m`, momentum-`rho` state moving
/// in the `h`-unit direction `dir` at `x`: the spatial speed comes from the
/// energy identity and `v⁰` from the momentum constraint.
pub fn momentum_mass_state(
    spec: &ManifoldSpec,
    t: f64,
    x: DVector<f64>,
    dir: &DVector<f64>,
    rho: f64,
    m: f64,
) -> Result<SpacetimeState> {
    let lam = spec.lambda_at(x.as_slice());
    let speed_sq = rho * rho / lam - m * m;
    if speed_sq <= 0.0 {
        return Err(Error::NoInwardSolution { c_squared: speed_sq });
    }
    let dn = spec.norm_h(x.as_slice(), dir);
    if dn < 1e-12 {
        return Err(Error::DegenerateMetric { point: x.as_slice().to_vec() });
    }
    let vx = dir * (speed_sq.sqrt() / dn);
    let w = spec.omega_at(x.as_slice());
    let v0 = -rho / lam + w.dot(&vx);
    Ok(SpacetimeState::new(t, x, v0, vx))
}

/// Right-hand side of the reduced equations:
/// `ẍ^l = -Γ^l_{ij} ẋ^i ẋ^j + (Y ẋ)^l - (h^{-1}∇U)^l`.
pub fn mp_rhs(system: &MPSystem, state: &ReducedState) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = system.spec.dim();
    let x = state.x.as_slice();
    let vx = &state.vx;
    let gamma = system.spec.christoffel_h(x)?;
    let quad = DVector::from_fn(n, |l, _| (vx.transpose() * &gamma[l] * vx)[0]);
    let y = system.lorentz_force(x)?;
    let hinv = system.spec.h_inv_at(x)?;
    let force = &y * vx - &hinv * system.grad_potential(x);
    Ok((vx.clone(), -quad + force))
}

struct ReducedSystemOde<'a> {
    system: &'a MPSystem,
}

impl ode::OdeRhs for ReducedSystemOde<'_> {
    fn dim(&self) -> usize {
        2 * self.system.spec.dim()
    }
    fn eval(&self, _s: f64, y: &[f64], dy: &mut [f64]) {
        let n = self.system.spec.dim();
        let state = ReducedState {
            x: DVector::from_column_slice(&y[..n]),
            vx: DVector::from_column_slice(&y[n..]),
        };
        match mp_rhs(self.system, &state) {
            Ok((xd, vd)) => {
                for i in 0..n {
                    dy[i] = xd[i];
                    dy[n + i] = vd[i];
                }
            }
            Err(_) => {
                for v in dy.iter_mut() {
                    *v = f64::NAN;
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) enum ReducedData {
    Dense(DenseSolution),
    /// Affine reparametrization `ζ(τ) = σ(anchor + ρτ)` with velocities
    /// scaled by `ρ`.
    Rescaled { base: DenseSolution, rho: f64 },
}

/// Trajectory of the reduced system over `[0, T]`.
#[derive(Clone)]
pub struct TrajectoryN {
    pub(crate) system: MPSystem,
    pub(crate) data: ReducedData,
    /// `(s, E(s))` at accepted steps.
    pub drift_log: Vec<(f64, f64)>,
    pub warnings: Vec<String>,
    pub stopped: StopReason,
    pub grazing: bool,
}

impl TrajectoryN {
    pub fn system(&self) -> &MPSystem {
        &self.system
    }

    pub fn s_end(&self) -> f64 {
        match &self.data {
            ReducedData::Dense(sol) => sol.s_end,
            ReducedData::Rescaled { base, rho } => base.span() / rho.abs(),
        }
    }

    pub fn exited_boundary(&self) -> bool {
        matches!(self.stopped, StopReason::Event { .. })
    }

    fn inner_param(base: &DenseSolution, rho: f64, tau: f64) -> f64 {
        if rho >= 0.0 {
            base.s_start + rho * tau
        } else {
            base.s_end + rho * tau
        }
    }

    pub fn eval(&self, s: f64) -> ReducedState {
        let n = self.system.spec.dim();
        match &self.data {
            ReducedData::Dense(sol) => {
                let y = sol.eval(s);
                ReducedState {
                    x: y.rows(0, n).into_owned(),
                    vx: y.rows(n, n).into_owned(),
                }
            }
            ReducedData::Rescaled { base, rho } => {
                let y = base.eval(Self::inner_param(base, *rho, s));
                ReducedState {
                    x: y.rows(0, n).into_owned(),
                    vx: *rho * y.rows(n, n).into_owned(),
                }
            }
        }
    }

    /// `(ẋ, v̇_x)` from the dense interpolant.
    pub fn eval_derivative(&self, s: f64) -> (DVector<f64>, DVector<f64>) {
        let n = self.system.spec.dim();
        match &self.data {
            ReducedData::Dense(sol) => {
                let dy = sol.eval_derivative(s);
                (dy.rows(0, n).into_owned(), dy.rows(n, n).into_owned())
            }
            ReducedData::Rescaled { base, rho } => {
                let dy = base.eval_derivative(Self::inner_param(base, *rho, s));
                (
                    *rho * dy.rows(0, n).into_owned(),
                    *rho * *rho * dy.rows(n, n).into_owned(),
                )
            }
        }
    }

    pub fn start_state(&self) -> ReducedState {
        self.eval(0.0)
    }

    pub fn end_state(&self) -> ReducedState {
        self.eval(self.s_end())
    }

    pub fn knots(&self) -> Vec<f64> {
        match &self.data {
            ReducedData::Dense(sol) => sol.knots(),
            ReducedData::Rescaled { base, rho } => {
                let anchor = if *rho >= 0.0 { base.s_start } else { base.s_end };
                let mut k: Vec<f64> =
                    base.knots().iter().map(|s| (s - anchor) / rho).collect();
                k.sort_by(|a, b| a.partial_cmp(b).unwrap());
                k
            }
        }
    }

    pub fn max_e_drift(&self) -> f64 {
        let e0 = self.drift_log.first().map(|r| r.1).unwrap_or(0.0);
        self.drift_log.iter().map(|r| (r.1 - e0).abs()).fold(0.0, f64::max)
    }

    pub(crate) fn dense(&self) -> Option<&DenseSolution> {
        match &self.data {
            ReducedData::Dense(sol) => Some(sol),
            ReducedData::Rescaled { .. } => None,
        }
    }
}

/// Integrate the reduced flow from `state0` until the boundary is crossed or
/// the horizon is reached, monitoring the energy integral.
pub fn integrate_mp(
    system: &MPSystem,
    state0: &ReducedState,
    horizon: Option<f64>,
    tol: Tolerances,
) -> Result<TrajectoryN> {
    let spec = &system.spec;
    let n = spec.dim();
    let x0 = state0.x.as_slice();
    let b0 = spec.domain().b(x0);
    if b0 < -boundary_tol(x0) {
        return Err(Error::OutOfDomain { point: x0.to_vec(), b: b0 });
    }
    let horizon = horizon.unwrap_or_else(|| {
        let speed = spec.norm_h(x0, &state0.vx).max(1e-3);
        10.0 * spec.h_diameter_estimate() / speed
    });

    let mut y0 = DVector::zeros(2 * n);
    for i in 0..n {
        y0[i] = state0.x[i];
        y0[n + i] = state0.vx[i];
    }
    let e0 = system.energy(state0);
    let e_target = CONSERVATION_REL_TOL * (1.0 + e0.abs());

    let rhs = ReducedSystemOde { system };
    let event_f = |_s: f64, y: &[f64]| spec.domain().b(&y[..n]);
    let event = EventSpec {
        f: &event_f,
        f_tol: 1e-10 * (1.0 + spec.domain().bounding_radius()),
        reject_beyond: Some(0.5 * spec.b_scale()),
    };

    let mut warnings = Vec::new();
    let mut current_tol = tol;
    let mut last: Option<(ode::OdeOutcome, Vec<(f64, f64)>)> = None;
    for attempt in 0..3 {
        let options = IntegrationOptions { tol: current_tol, ..Default::default() };
        let outcome = ode::integrate(&rhs, 0.0, &y0, horizon, &options, Some(&event))?;

        let mut log = Vec::with_capacity(outcome.solution.steps.len() + 1);
        let mut max_de = 0.0f64;
        for s in outcome.solution.knots() {
            let y = outcome.solution.eval(s);
            let state = ReducedState {
                x: y.rows(0, n).into_owned(),
                vx: y.rows(n, n).into_owned(),
            };
            let e = system.energy(&state);
            max_de = max_de.max((e - e0).abs());
            log.push((s, e));
        }
        if max_de <= e_target {
            last = Some((outcome, log));
            break;
        }
        if attempt < 2 {
            warnings.push(format!(
                "ConservationWarning: energy drift {:.3e} above target; retrying with tighter tolerances",
                max_de
            ));
            log::warn!("{}", warnings.last().unwrap());
            current_tol = current_tol.tightened(1e-2);
        } else {
            warnings.push(format!(
                "ConservationWarning: energy drift {:.3e} above target after retries",
                max_de
            ));
            log::warn!("{}", warnings.last().unwrap());
        }
        last = Some((outcome, log));
    }
    let (outcome, drift_log) = last.expect("at least one integration attempt");

    let mut grazing = false;
    if let StopReason::Event { s } = outcome.stopped {
        let y = outcome.solution.eval(s);
        let rate = spec.domain().grad_b(y.rows(0, n).as_slice()).dot(&y.rows(n, n));
        grazing = rate.abs() < GRAZING_RATE_TOL;
    }

    Ok(TrajectoryN {
        system: system.clone(),
        data: ReducedData::Dense(outcome.solution),
        drift_log,
        warnings,
        stopped: outcome.stopped,
        grazing,
    })
}

/// Project a spacetime trajectory with momentum `rho` to the reduced phase
/// space. The dense interpolant is restricted componentwise, so the result
/// is exactly the `(x, v_x)` part of the input.
pub fn project(traj: &TrajectoryM, rho: f64) -> Result<TrajectoryN> {
    let spec = traj.spec().clone();
    let n = spec.dim();
    // Momentum must sit on the requested level everywhere.
    for s in traj.knots() {
        let state = traj.eval(s);
        let j = crate::flow::momentum_j(&spec, &state)?;
        if (j - rho).abs() > 1e-8 * (1.0 + rho.abs()) {
            return Err(Error::MomentumMismatch { expected: rho, found: j });
        }
    }

    let system = reduce(&spec, rho);
    let sol = match &traj.data {
        TrajectoryData::Direct(sol) => {
            let idx: Vec<usize> = (1..=n).chain(n + 2..2 * n + 2).collect();
            sol.select_components(&idx)
        }
        TrajectoryData::Lifted { base, .. } => base.clone(),
    };

    let drift_log: Vec<(f64, f64)> = sol
        .knots()
        .iter()
        .map(|&s| {
            let y = sol.eval(s);
            let state = ReducedState {
                x: y.rows(0, n).into_owned(),
                vx: y.rows(n, n).into_owned(),
            };
            (s, system.energy(&state))
        })
        .collect();
    let e0 = drift_log.first().map(|r| r.1);

    Ok(TrajectoryN {
        system: match e0 {
            Some(e) => system.with_energy(e),
            None => system,
        },
        data: ReducedData::Dense(sol),
        drift_log,
        warnings: traj.warnings.clone(),
        stopped: traj.stopped,
        grazing: traj.grazing,
    })
}

/// Lift a reduced trajectory to a spacetime geodesic. The time coordinate
/// is recovered by quadrature of the momentum constraint
/// `ṫ = -ρ/λ(x) + ⟨ω(x), ẋ⟩` with `t(0) = t0`; the lifted curve carries
/// momentum `ρ` identically.
pub fn lift(system: &MPSystem, traj: &TrajectoryN, t0: f64) -> Result<TrajectoryM> {
    let spec = system.spec.clone();
    let n = spec.dim();
    let rho = system.rho;
    let base = traj
        .dense()
        .ok_or_else(|| Error::InvalidSpec("lift requires a densely integrated trajectory".into()))?
        .clone();

    let integrand = |s: f64| {
        let y = base.eval(s);
        let x = y.rows(0, n).into_owned();
        let vx = y.rows(n, n).into_owned();
        -rho / spec.lambda_at(x.as_slice()) + spec.omega_at(x.as_slice()).dot(&vx)
    };
    let knots = base.knots();
    let mut t_knots = Vec::with_capacity(knots.len());
    let mut t = t0;
    t_knots.push((knots[0], t));
    for pair in knots.windows(2) {
        t += gauss_legendre_7(integrand, pair[0], pair[1]);
        t_knots.push((pair[1], t));
    }

    let lifted = TrajectoryM {
        spec: spec.clone(),
        data: TrajectoryData::Lifted { base, rho, t_knots },
        drift_log: Vec::new(),
        warnings: traj.warnings.clone(),
        stopped: traj.stopped,
        grazing: traj.grazing,
    };

    // Conserved-quantity log for the lifted curve.
    let mut log = Vec::new();
    for s in lifted.knots() {
        let state = lifted.eval(s);
        let j = crate::flow::momentum_j(&spec, &state)?;
        let h = crate::flow::hamiltonian_h(&spec, &state)?;
        log.push((s, j, h));
    }
    Ok(TrajectoryM { drift_log: log, ..lifted })
}

/// Transport a trajectory of the unit-momentum system `(N, h, dω, 1/(-2λ))`
/// to the momentum-`rho` system by the affine reparametrization
/// `ζ(τ) = σ(ρτ)` (run backwards when `ρ < 0`), scaling velocities by `ρ`.
/// Energy scales by `ρ²`; when `expected_mass` is supplied, the input energy
/// must equal `-m²/(2ρ²)`.
pub fn rescale_momentum(
    traj: &TrajectoryN,
    rho: f64,
    expected_mass: Option<f64>,
) -> Result<TrajectoryN> {
    if (traj.system.rho - 1.0).abs() > 1e-12 {
        return Err(Error::MomentumMismatch { expected: 1.0, found: traj.system.rho });
    }
    let e0 = traj.drift_log.first().map(|r| r.1).unwrap_or_else(|| {
        traj.system.energy(&traj.start_state())
    });
    if let Some(m) = expected_mass {
        let expected = -m * m / (2.0 * rho * rho);
        if (e0 - expected).abs() > 1e-9 * (1.0 + expected.abs()) {
            return Err(Error::EnergyMismatch { expected, found: e0 });
        }
    }
    let base = traj
        .dense()
        .ok_or_else(|| Error::InvalidSpec("rescale requires a densely integrated trajectory".into()))?
        .clone();
    let system = reduce(&traj.system.spec, rho).with_energy(rho * rho * e0);
    let data = ReducedData::Rescaled { base, rho };
    let shell = TrajectoryN {
        system,
        data,
        drift_log: Vec::new(),
        warnings: traj.warnings.clone(),
        stopped: traj.stopped,
        grazing: traj.grazing,
    };
    let drift_log: Vec<(f64, f64)> = shell
        .knots()
        .iter()
        .map(|&s| (s, shell.system.energy(&shell.eval(s))))
        .collect();
    Ok(TrajectoryN { drift_log, ..shell })
}
