//! Boundary data of the flow: exit detection, projection of tangent
//! vectors to the boundary, the momentum-mass scattering relation, the
//! reduced scattering relation, and the boundary action — together with the
//! cross-reconstruction that ties the three to each other.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chart::ManifoldSpec;
use crate::error::{Error, Result};
use crate::flow::{integrate_geodesic, SpacetimeState, TrajectoryM};
use crate::ode::{quadrature_over, Tolerances};
use crate::reduction::{integrate_mp, lift, MPSystem, ReducedState, TrajectoryN};
use crate::simplicity::{shoot_connect, ShootOptions, ShootOutcome, ShootSolution};

/// Projected boundary data on the spacetime cylinder `ℝ × ∂N`.
///
/// The invariant decomposition `[v_t', v_x']` stores
/// `v_t' = -(v', ∂_t)_g` (equal to `-ρ` along momentum-`ρ` geodesics) and
/// the `h`-orthogonal projection `v_x'` of the spatial velocity onto
/// `T∂N`.
#[derive(Debug, Clone)]
pub struct BoundaryTangent {
    pub t: f64,
    pub x: DVector<f64>,
    pub vt: f64,
    pub vx: DVector<f64>,
}

impl BoundaryTangent {
    /// Full components of the projected vector `v' = (v'_t, v_x')`,
    /// reconstructed from the invariant pair: `v'_t = v_t'/λ + ⟨ω, v_x'⟩`.
    pub fn full_components(&self, spec: &ManifoldSpec) -> DVector<f64> {
        let n = spec.dim();
        let x = self.x.as_slice();
        let lam = spec.lambda_at(x);
        let w = spec.omega_at(x);
        let mut v = DVector::zeros(n + 1);
        v[0] = self.vt / lam + w.dot(&self.vx);
        for i in 0..n {
            v[i + 1] = self.vx[i];
        }
        v
    }
}

/// Projected boundary data of the reduced system on `∂N`.
#[derive(Debug, Clone)]
pub struct MPBoundaryTangent {
    pub x: DVector<f64>,
    pub vx: DVector<f64>,
}

/// One scattering record: entry and exit boundary data together with the
/// exit time, the time shift, and the boundary action.
#[derive(Debug, Clone)]
pub struct ScatteringRecord {
    pub entry: BoundaryTangent,
    pub exit: BoundaryTangent,
    /// Affine length `T` of the realizing geodesic.
    pub exit_time: f64,
    /// `t - s`: entry time minus exit time.
    pub time_shift: f64,
    /// Boundary action `ρ(t - s) - m² T`.
    pub action: f64,
    pub rho: f64,
    pub mass: f64,
}

/// First boundary crossing parameter of a spacetime trajectory.
pub fn exit_time(traj: &TrajectoryM) -> Result<f64> {
    if traj.grazing {
        let s = traj.s_end();
        let end = traj.end_state();
        let rate = traj.spec().domain().grad_b(end.x.as_slice()).dot(&end.vx);
        return Err(Error::GrazingExit { s, rate });
    }
    if !traj.exited_boundary() {
        return Err(Error::NoExit { horizon: traj.s_end() });
    }
    Ok(traj.s_end())
}

/// First boundary crossing parameter of a reduced trajectory.
pub fn mp_exit_time(traj: &TrajectoryN) -> Result<f64> {
    if traj.grazing {
        let s = traj.s_end();
        let end = traj.end_state();
        let rate = traj.system().spec().domain().grad_b(end.x.as_slice()).dot(&end.vx);
        return Err(Error::GrazingExit { s, rate });
    }
    if !traj.exited_boundary() {
        return Err(Error::NoExit { horizon: traj.s_end() });
    }
    Ok(traj.s_end())
}

/// Orthogonal projection of a spacetime vector at a boundary point onto the
/// tangent space of the cylinder `ℝ × ∂N`, in the invariant decomposition.
pub fn project_to_boundary_m(
    spec: &ManifoldSpec,
    t: f64,
    x: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<BoundaryTangent> {
    let n = spec.dim();
    let nu_x = spec.outward_normal(x.as_slice())?;
    let vx = v.rows(1, n).into_owned();
    let normal_part = spec.inner_h(x.as_slice(), &vx, &nu_x);
    let vx_proj = &vx - &nu_x * normal_part;
    // v_t' = -(v', ∂_t)_g = -(v, ∂_t)_g since the spacetime normal is
    // g-orthogonal to the Killing field.
    let dt = killing_vector(n);
    let vt = -spec.inner_g(x.as_slice(), v, &dt)?;
    Ok(BoundaryTangent { t, x: x.clone(), vt, vx: vx_proj })
}

fn killing_vector(n: usize) -> DVector<f64> {
    let mut dt = DVector::zeros(n + 1);
    dt[0] = 1.0;
    dt
}

/// Orthogonal projection of a spatial vector at a boundary point onto
/// `T∂N`.
pub fn mp_project_to_boundary(
    spec: &ManifoldSpec,
    x: &DVector<f64>,
    vx: &DVector<f64>,
) -> Result<MPBoundaryTangent> {
    let nu_x = spec.outward_normal(x.as_slice())?;
    let normal_part = spec.inner_h(x.as_slice(), vx, &nu_x);
    Ok(MPBoundaryTangent { x: x.clone(), vx: vx - nu_x * normal_part })
}

/// Reconstruct the unique inward mass-`m`, momentum-`ρ` vector whose
/// boundary projection is `entry`: the normal coefficient solves the energy
/// identity `|v_x|²_h = ρ²/λ - m²` and the time component follows from the
/// momentum constraint.
pub fn reconstruct_inward(
    spec: &ManifoldSpec,
    entry: &BoundaryTangent,
    rho: f64,
    m: f64,
) -> Result<SpacetimeState> {
    let x = entry.x.as_slice();
    if (entry.vt + rho).abs() > 1e-8 * (1.0 + rho.abs()) {
        return Err(Error::MomentumMismatch { expected: -rho, found: entry.vt });
    }
    let nu_x = spec.outward_normal(x)?;
    let tangential = spec.inner_h(x, &entry.vx, &nu_x);
    if tangential.abs() > 1e-8 * (1.0 + entry.vx.norm()) {
        return Err(Error::InvalidSpec(format!(
            "entry tangential data is not boundary-tangent (normal component {:.3e})",
            tangential
        )));
    }
    let lam = spec.lambda_at(x);
    let c_squared = rho * rho / lam - m * m - spec.inner_h(x, &entry.vx, &entry.vx);
    if c_squared <= 0.0 {
        return Err(Error::NoInwardSolution { c_squared });
    }
    let vx = &entry.vx - nu_x * c_squared.sqrt(); // inward: -c ν_x with c > 0
    let w = spec.omega_at(x);
    let v0 = -rho / lam + w.dot(&vx);
    Ok(SpacetimeState::new(entry.t, entry.x.clone(), v0, vx))
}

/// Reconstruct the inward vector on the energy-`k` shell of the reduced
/// system whose boundary projection is `entry`.
pub fn mp_reconstruct_inward(
    system: &MPSystem,
    entry: &MPBoundaryTangent,
    k: f64,
) -> Result<ReducedState> {
    let spec = system.spec();
    let x = entry.x.as_slice();
    let nu_x = spec.outward_normal(x)?;
    let c_squared = 2.0 * (k - system.potential(x)) - spec.inner_h(x, &entry.vx, &entry.vx);
    if c_squared <= 0.0 {
        return Err(Error::NoInwardSolution { c_squared });
    }
    Ok(ReducedState::new(entry.x.clone(), &entry.vx - nu_x * c_squared.sqrt()))
}

/// The scattering relation of momentum `ρ` and mass `m`: realize the entry
/// data by the inward geodesic, integrate to the boundary, and project the
/// exit. The record carries the exit time, the time shift, and the action
/// `ρ(t - s) - m²T`.
pub fn scattering_rho_m(
    spec: &ManifoldSpec,
    rho: f64,
    m: f64,
    entry: &BoundaryTangent,
    tol: Tolerances,
) -> Result<ScatteringRecord> {
    let state = reconstruct_inward(spec, entry, rho, m)?;
    let traj = integrate_geodesic(spec, &state, None, tol)?;
    let t_exit = exit_time(&traj)?;
    let end = traj.end_state();
    let exit = project_to_boundary_m(spec, end.t, &end.x, &end.velocity())?;
    let time_shift = entry.t - end.t;
    let action = rho * time_shift - m * m * t_exit;
    Ok(ScatteringRecord {
        entry: entry.clone(),
        exit,
        exit_time: t_exit,
        time_shift,
        action,
        rho,
        mass: m,
    })
}

/// The reduced scattering relation at the system's energy level: inward
/// realization, reduced flow to the boundary, projected exit. Returns the
/// exit data, the exit time, and the realizing trajectory.
pub fn scattering_mp(
    system: &MPSystem,
    entry: &MPBoundaryTangent,
    tol: Tolerances,
) -> Result<(MPBoundaryTangent, f64, TrajectoryN)> {
    let k = system
        .energy_level()
        .ok_or_else(|| Error::InvalidSpec("reduced scattering needs an energy level".into()))?;
    let state = mp_reconstruct_inward(system, entry, k)?;
    let traj = integrate_mp(system, &state, None, tol)?;
    let tau = mp_exit_time(&traj)?;
    let end = traj.end_state();
    let exit = mp_project_to_boundary(system.spec(), &end.x, &end.vx)?;
    Ok((exit, tau, traj))
}

/// Rebuild the full momentum-mass record from reduced data only: the exit
/// point and projected exit vector come from the reduced scattering
/// relation, and the time shift from the quadrature lift of the momentum
/// constraint. No spacetime integration is performed.
pub fn reconstruct_scattering(
    system: &MPSystem,
    m: f64,
    entry: &BoundaryTangent,
    tol: Tolerances,
) -> Result<ScatteringRecord> {
    let rho = system.rho();
    if (entry.vt + rho).abs() > 1e-8 * (1.0 + rho.abs()) {
        return Err(Error::MomentumMismatch { expected: -rho, found: entry.vt });
    }
    let mp_entry = MPBoundaryTangent { x: entry.x.clone(), vx: entry.vx.clone() };
    let sys = system.clone().for_mass(m);
    let (mp_exit, tau, traj) = scattering_mp(&sys, &mp_entry, tol)?;

    // Recover the time along the curve from the momentum constraint.
    let lifted = lift(&sys, &traj, entry.t)?;
    let s_exit = lifted.end_state().t;
    let time_shift = entry.t - s_exit;
    let action = rho * time_shift - m * m * tau;

    let exit = BoundaryTangent { t: s_exit, x: mp_exit.x, vt: -rho, vx: mp_exit.vx };
    Ok(ScatteringRecord {
        entry: entry.clone(),
        exit,
        exit_time: tau,
        time_shift,
        action,
        rho,
        mass: m,
    })
}

/// Time-free action of energy `k = -m²/2` evaluated along a reduced
/// trajectory:
/// `∫ (½|σ̇|²_h - ρ⟨ω, σ̇⟩ - U(σ)) ds + kT`.
pub fn time_free_action_along(system: &MPSystem, m: f64, traj: &TrajectoryN) -> Result<f64> {
    let spec = system.spec();
    let n = spec.dim();
    let rho = system.rho();
    let k = -0.5 * m * m;
    let sol = match &traj.dense() {
        Some(sol) => (*sol).clone(),
        None => {
            return Err(Error::InvalidSpec(
                "time-free action needs a densely integrated trajectory".into(),
            ))
        }
    };
    let integral = quadrature_over(&sol, |_s, y| {
        let x = y.rows(0, n).into_owned();
        let vx = y.rows(n, n).into_owned();
        let kinetic = 0.5 * spec.inner_h(x.as_slice(), &vx, &vx);
        let magnetic = rho * spec.omega_at(x.as_slice()).dot(&vx);
        kinetic - magnetic - system.potential(x.as_slice())
    });
    Ok(integral + k * sol.span())
}

/// Result of the boundary-action computation.
#[derive(Debug, Clone)]
pub struct ActionResult {
    pub value: f64,
    /// The connecting trajectory data found by shooting.
    pub shoot: Option<ShootSolution>,
    /// True when the multistart search found several connections; the value
    /// is then the smallest action among them.
    pub multiple: bool,
}

/// Boundary action `𝔸(x, y)` at energy `-m²/2`: find the connecting
/// trajectory of the reduced system by shooting and evaluate the time-free
/// action along it.
pub fn action_boundary(
    system: &MPSystem,
    m: f64,
    x: &DVector<f64>,
    y: &DVector<f64>,
    shoot_options: &ShootOptions,
) -> Result<ActionResult> {
    if (x - y).norm() < 1e-12 {
        return Ok(ActionResult { value: 0.0, shoot: None, multiple: false });
    }
    let k = -0.5 * m * m;
    let report = shoot_connect(system, k, x, y, shoot_options)?;
    let solutions: Vec<ShootSolution> = match report.outcome {
        ShootOutcome::Unique(sol) => vec![sol],
        ShootOutcome::NotSimple(sols) => sols,
    };
    let multiple = solutions.len() > 1;
    let mut best: Option<(f64, ShootSolution)> = None;
    for sol in solutions {
        let speed = system.speed_at_energy(x.as_slice(), k)?;
        let dn = system.spec().norm_h(x.as_slice(), &sol.direction);
        let vx = &sol.direction * (speed / dn);
        let state = ReducedState::new(x.clone(), vx);
        // Integrate just past the connection parameter; no boundary event
        // is needed since the duration is known.
        let traj = integrate_mp(system, &state, Some(sol.duration), Tolerances::default())?;
        let value = time_free_action_along(system, m, &traj)?;
        if best.as_ref().map(|(v, _)| value < *v).unwrap_or(true) {
            best = Some((value, sol));
        }
    }
    let (value, sol) = best.expect("at least one shooting solution");
    Ok(ActionResult { value, shoot: Some(sol), multiple })
}

/// Draw admissible boundary entries for a `(ρ, m)` batch: boundary points
/// with tangential data bounded away from the grazing threshold.
pub fn sample_admissible_entries(
    spec: &ManifoldSpec,
    rho: f64,
    m: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<BoundaryTangent>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(count);
    let mut guard = 0usize;
    while entries.len() < count {
        guard += 1;
        if guard > 100 * count {
            return Err(Error::InvalidSpec(
                "could not sample enough admissible boundary entries".into(),
            ));
        }
        let p = spec
            .domain()
            .boundary_samples(1, &mut rng)
            .pop()
            .expect("one boundary sample");
        let x = p.as_slice();
        let lam = spec.lambda_at(x);
        let cap = rho * rho / lam - m * m;
        if cap <= 0.0 {
            continue;
        }
        let basis = match spec.boundary_tangent_basis(x) {
            Ok(b) => b,
            Err(_) => continue,
        };
        let mut vx = DVector::zeros(spec.dim());
        for b in &basis {
            vx += b * rng.gen_range(-1.0..1.0f64);
        }
        let norm = spec.norm_h(x, &vx);
        if norm > 1e-12 {
            // At most 80% of the admissible tangential speed, away from
            // grazing entries.
            let frac: f64 = rng.gen_range(0.0..0.8);
            vx *= frac * cap.sqrt() / norm;
        }
        entries.push(BoundaryTangent { t: 0.0, x: p, vt: -rho, vx });
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Ball;
    use crate::fields::{ConstMetric, ConstScalar, CovectorFn, ZeroCovector};
    use crate::reduction::reduce;
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

    fn curved_spec() -> ManifoldSpec {
        crate::flow::tests::curved_spec()
    }

    fn magnetic_disk(c: f64) -> ManifoldSpec {
        ManifoldSpec::new(
            Arc::new(Ball::unit_disk()),
            Arc::new(ConstMetric::euclidean(2)),
            Arc::new(CovectorFn {
                dim: 2,
                f: move |x: &[f64]| {
                    DVector::from_column_slice(&[-0.5 * c * x[1], 0.5 * c * x[0]])
                },
                jac: move |_: &[f64]| {
                    DMatrix::from_row_slice(2, 2, &[0.0, 0.5 * c, -0.5 * c, 0.0])
                },
            }),
            Arc::new(ConstScalar(1.0)),
        )
        .unwrap()
    }

    #[test]
    fn flat_exit_time_examples() {
        let spec = flat_disk();
        let state = SpacetimeState::new(
            0.0,
            DVector::from_column_slice(&[-0.9, 0.0]),
            2.0,
            DVector::from_column_slice(&[3.0f64.sqrt(), 0.0]),
        );
        let traj = integrate_geodesic(&spec, &state, None, Tolerances::default()).unwrap();
        let tau = exit_time(&traj).unwrap();
        assert_abs_diff_eq!(tau, 1.9 / 3.0f64.sqrt(), epsilon = 1e-10);

        // Halving the tolerance moves the root by less than 1e-9.
        let tight = integrate_geodesic(&spec, &state, None, Tolerances::new(5e-11, 5e-11)).unwrap();
        assert!((exit_time(&tight).unwrap() - tau).abs() <= 1e-9);
    }

    #[test]
    fn no_exit_when_orbit_closes() {
        // A trapped circular magnetic orbit never reaches the boundary.
        let sys = reduce(&magnetic_disk(3.0), -1.0);
        let state = ReducedState::new(
            DVector::from_column_slice(&[0.0, 0.0]),
            DVector::from_column_slice(&[1.0, 0.0]),
        );
        let traj = integrate_mp(&sys, &state, Some(5.0), Tolerances::default()).unwrap();
        assert!(matches!(mp_exit_time(&traj), Err(Error::NoExit { .. })));
    }

    #[test]
    fn magnetic_exit_time_matches_circle_intersection() {
        // Unit-speed arc of radius R = 1/c from x0: the trajectory circle
        // has center x0 + (v², -v¹)/c; intersect it with the unit circle
        // and convert the (clockwise) arc angle to time.
        let c = 0.8;
        let sys = reduce(&magnetic_disk(c), -1.0);
        let x0 = DVector::from_column_slice(&[-0.6, -0.3]);
        let v0 = DVector::from_column_slice(&[1.0, 0.2]).normalize();
        let state = ReducedState::new(x0.clone(), v0.clone());
        let traj = integrate_mp(&sys, &state, Some(20.0), Tolerances::default()).unwrap();
        let tau = mp_exit_time(&traj).unwrap();

        let center = &x0 + DVector::from_column_slice(&[v0[1], -v0[0]]) / c;
        let r = 1.0 / c;
        // Points on both circles: solve |p|² = 1, |p - center|² = r².
        let d = center.norm();
        let a = (1.0 + d * d - r * r) / (2.0 * d);
        let h2 = 1.0 - a * a;
        assert!(h2 > 0.0, "circles intersect");
        let e = &center / d;
        let perp = DVector::from_column_slice(&[-e[1], e[0]]);
        let p1 = &e * a + &perp * h2.sqrt();
        let p2 = &e * a - &perp * h2.sqrt();
        // Clockwise angle from x0 to each intersection around the center.
        let angle_from = |p: &DVector<f64>| {
            let u0 = &x0 - &center;
            let u1 = p - &center;
            let cross = u0[0] * u1[1] - u0[1] * u1[0];
            let dot = u0.dot(&u1);
            let mut ang = (-cross).atan2(dot); // clockwise positive
            if ang <= 1e-12 {
                ang += 2.0 * std::f64::consts::PI;
            }
            ang
        };
        let expected = angle_from(&p1).min(angle_from(&p2)) * r;
        assert_abs_diff_eq!(tau, expected, epsilon = 1e-8);
    }

    #[test]
    fn boundary_projection_hand_example() {
        let spec = flat_disk();
        let x = DVector::from_column_slice(&[1.0, 0.0]);
        let v = DVector::from_column_slice(&[2.0, 3.0f64.sqrt(), 0.5]);
        let bt = project_to_boundary_m(&spec, 0.0, &x, &v).unwrap();
        assert_abs_diff_eq!(bt.vx[0], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(bt.vx[1], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(bt.vt, 2.0, epsilon = 1e-14);

        // (v', ν)_g = 0 and idempotence.
        let nu = spec.spacetime_outward_normal(x.as_slice()).unwrap();
        let v_full = bt.full_components(&spec);
        assert_abs_diff_eq!(
            spec.inner_g(x.as_slice(), &v_full, &nu).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        let again = project_to_boundary_m(&spec, 0.0, &x, &v_full).unwrap();
        assert_abs_diff_eq!(again.vt, bt.vt, epsilon = 1e-13);
        assert!((again.vx - &bt.vx).norm() <= 1e-13);
    }

    #[test]
    fn projection_invariants_on_curved_spec() {
        let spec = curved_spec();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for p in spec.domain().boundary_samples(25, &mut rng.clone()) {
            let v = DVector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0f64));
            let bt = project_to_boundary_m(&spec, 0.3, &p, &v).unwrap();
            let nu_x = spec.outward_normal(p.as_slice()).unwrap();
            // Tangentiality of v_x'.
            assert!(spec.inner_h(p.as_slice(), &bt.vx, &nu_x).abs() <= 1e-10);
            // The stored v_t' reproduces -(v', ∂_t)_g.
            let v_full = bt.full_components(&spec);
            let dt = killing_vector(2);
            let vt_again = -spec.inner_g(p.as_slice(), &v_full, &dt).unwrap();
            assert!((vt_again - bt.vt).abs() <= 1e-10);
        }
    }

    #[test]
    fn flat_diametral_scattering_closed_form() {
        let spec = flat_disk();
        let entry = BoundaryTangent {
            t: 0.0,
            x: DVector::from_column_slice(&[-1.0, 0.0]),
            vt: 2.0,
            vx: DVector::zeros(2),
        };
        let rec = scattering_rho_m(&spec, -2.0, 1.0, &entry, Tolerances::default()).unwrap();
        let sqrt3 = 3.0f64.sqrt();
        assert_abs_diff_eq!(rec.exit.x[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(rec.exit.x[1], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(rec.exit_time, 2.0 / sqrt3, epsilon = 1e-9);
        assert_abs_diff_eq!(rec.time_shift, -4.0 / sqrt3, epsilon = 1e-9);
        assert_abs_diff_eq!(rec.action, 2.0 * sqrt3, epsilon = 1e-9);
        assert_abs_diff_eq!(rec.exit.vt, 2.0, epsilon = 1e-9);
        assert!(rec.exit.vx.norm() <= 1e-9);
    }

    #[test]
    fn flat_chord_scattering_matches_geometry() {
        // Straight chord: entry at angle π with tangential component.
        let spec = flat_disk();
        let rho = -2.0;
        let m = 1.0;
        let x0 = DVector::from_column_slice(&[-1.0, 0.0]);
        let tangent = DVector::from_column_slice(&[0.0, 1.0]);
        let vx_t = 0.6;
        let entry = BoundaryTangent { t: 0.0, x: x0.clone(), vt: -rho, vx: &tangent * vx_t };
        let rec = scattering_rho_m(&spec, rho, m, &entry, Tolerances::default()).unwrap();

        // Chord oracle: speed² = ρ²/λ - m² = 3, v = (c, vx_t) with
        // c = √(3 - vx_t²); exit point where |x0 + T v| = 1.
        let c = (3.0 - vx_t * vx_t).sqrt();
        let v = DVector::from_column_slice(&[c, vx_t]);
        let b_half = x0.dot(&v);
        let t_exit = (-b_half + (b_half * b_half + v.norm_squared() * (1.0 - x0.norm_squared())).sqrt())
            / v.norm_squared();
        let exit_point = &x0 + &v * t_exit;
        assert_abs_diff_eq!(rec.exit_time, t_exit, epsilon = 1e-9);
        assert!((rec.exit.x.clone() - exit_point).norm() <= 1e-8);
        // v⁰ = 2 throughout, so t - s = -2T and 𝔸 = ρ(t-s) - m²T.
        assert_abs_diff_eq!(rec.time_shift, -2.0 * t_exit, epsilon = 1e-9);
        assert_abs_diff_eq!(rec.action, rho * rec.time_shift - rec.exit_time, epsilon = 1e-12);
    }

    #[test]
    fn unrealizable_entry_is_rejected() {
        let spec = flat_disk();
        // Tangential speed beyond the admissible cap: no inward solution.
        let entry = BoundaryTangent {
            t: 0.0,
            x: DVector::from_column_slice(&[-1.0, 0.0]),
            vt: 2.0,
            vx: DVector::from_column_slice(&[0.0, 2.5]),
        };
        assert!(matches!(
            scattering_rho_m(&spec, -2.0, 1.0, &entry, Tolerances::default()),
            Err(Error::NoInwardSolution { .. })
        ));
        // Momentum tag inconsistent with vt.
        let bad = BoundaryTangent {
            t: 0.0,
            x: DVector::from_column_slice(&[-1.0, 0.0]),
            vt: 1.0,
            vx: DVector::zeros(2),
        };
        assert!(matches!(
            scattering_rho_m(&spec, -2.0, 1.0, &bad, Tolerances::default()),
            Err(Error::MomentumMismatch { .. })
        ));
    }

    #[test]
    fn refinement_stability_on_curved_spec() {
        let spec = curved_spec();
        let rho = -3.0;
        let m = 1.0;
        let entries = sample_admissible_entries(&spec, rho, m, 5, 42).unwrap();
        for entry in &entries {
            let coarse = scattering_rho_m(&spec, rho, m, entry, Tolerances::default()).unwrap();
            let fine =
                scattering_rho_m(&spec, rho, m, entry, Tolerances::new(1e-11, 1e-11)).unwrap();
            assert!((coarse.exit_time - fine.exit_time).abs() <= 1e-8);
            assert!((coarse.action - fine.action).abs() <= 1e-8);
            assert!((coarse.exit.x.clone() - &fine.exit.x).norm() <= 1e-8);
        }
    }

    #[test]
    fn mp_scattering_flat_chord() {
        let spec = flat_disk();
        let sys = reduce(&spec, -2.0).for_mass(1.0);
        let entry = MPBoundaryTangent {
            x: DVector::from_column_slice(&[-1.0, 0.0]),
            vx: DVector::from_column_slice(&[0.0, 0.6]),
        };
        let (exit, tau, _) = scattering_mp(&sys, &entry, Tolerances::default()).unwrap();
        let nu = spec.outward_normal(exit.x.as_slice()).unwrap();
        assert!(spec.inner_h(exit.x.as_slice(), &exit.vx, &nu).abs() <= 1e-10);
        // Same chord as the spacetime side.
        let c = (3.0f64 - 0.36).sqrt();
        let v = DVector::from_column_slice(&[c, 0.6]);
        let x0 = DVector::from_column_slice(&[-1.0, 0.0]);
        let b_half = x0.dot(&v);
        let t_exit = (-b_half
            + (b_half * b_half + v.norm_squared() * (1.0 - x0.norm_squared())).sqrt())
            / v.norm_squared();
        assert_abs_diff_eq!(tau, t_exit, epsilon = 1e-9);
    }

    #[test]
    fn reconstruction_matches_direct_scattering() {
        for (spec, rho) in [
            (flat_disk(), -2.0),
            (curved_spec(), -3.0),
            (magnetic_disk(0.5), -2.0),
        ] {
            let m = 1.0;
            let sys = reduce(&spec, rho);
            let entries = sample_admissible_entries(&spec, rho, m, 8, 7).unwrap();
            for entry in &entries {
                let direct =
                    scattering_rho_m(&spec, rho, m, entry, Tolerances::default()).unwrap();
                let rebuilt =
                    reconstruct_scattering(&sys, m, entry, Tolerances::default()).unwrap();
                assert!((direct.exit.x.clone() - &rebuilt.exit.x).norm() <= 1e-6);
                assert!((direct.exit.vx.clone() - &rebuilt.exit.vx).norm() <= 1e-6);
                assert!((direct.exit.t - rebuilt.exit.t).abs() <= 1e-6);
                assert!((direct.exit_time - rebuilt.exit_time).abs() <= 1e-6);
                assert!((direct.time_shift - rebuilt.time_shift).abs() <= 1e-6);
                assert!((direct.action - rebuilt.action).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn action_formula_equals_time_free_integral() {
        for (spec, rho) in [(flat_disk(), -2.0), (curved_spec(), -3.0)] {
            let m = 1.0;
            let sys = reduce(&spec, rho).for_mass(m);
            let entries = sample_admissible_entries(&spec, rho, m, 6, 11).unwrap();
            for entry in &entries {
                let rec = reconstruct_scattering(&sys, m, entry, Tolerances::default()).unwrap();
                let mp_entry = MPBoundaryTangent { x: entry.x.clone(), vx: entry.vx.clone() };
                let (_, _, traj) = scattering_mp(&sys, &mp_entry, Tolerances::default()).unwrap();
                let integral = time_free_action_along(&sys, m, &traj).unwrap();
                assert!(
                    (integral - rec.action).abs() <= 1e-7,
                    "action via integral {integral} vs formula {}",
                    rec.action
                );
            }
        }
    }

    #[test]
    fn flat_action_boundary_closed_form() {
        let spec = flat_disk();
        let sys = reduce(&spec, -2.0);
        let x = DVector::from_column_slice(&[-1.0, 0.0]);
        let y = DVector::from_column_slice(&[1.0, 0.0]);
        let res = action_boundary(&sys, 1.0, &x, &y, &ShootOptions::default()).unwrap();
        assert_abs_diff_eq!(res.value, 2.0 * 3.0f64.sqrt(), epsilon = 1e-7);
        assert!(!res.multiple);
        // Degenerate pair.
        let zero = action_boundary(&sys, 1.0, &x, &x, &ShootOptions::default()).unwrap();
        assert_abs_diff_eq!(zero.value, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn record_internal_identity() {
        let spec = curved_spec();
        let entries = sample_admissible_entries(&spec, -3.0, 1.0, 10, 3).unwrap();
        for entry in &entries {
            let rec = scattering_rho_m(&spec, -3.0, 1.0, entry, Tolerances::default()).unwrap();
            assert!(
                (rec.action - (rec.rho * rec.time_shift - rec.mass * rec.mass * rec.exit_time))
                    .abs()
                    <= 1e-9
            );
        }
    }
}
