//! Lightlike mode: for specs with `λ ≡ 1`, null geodesics normalized to
//! momentum `-1` project to unit-speed magnetic trajectories of the system
//! `(N, h, -dω)`, and the boundary convexity computation has a magnetic
//! counterpart.

use nalgebra::DVector;

use crate::chart::ManifoldSpec;
use crate::error::{Error, Result};
use crate::flow::{hamiltonian_h, momentum_j, SpacetimeState, TrajectoryM};
use crate::reduction::{project, reduce, MPSystem, TrajectoryN};
use crate::simplicity::{mp_convexity, spacetime_second_form, ConvexityReport};

/// Tolerance for the `λ ≡ 1` requirement.
const LAMBDA_ONE_TOL: f64 = 1e-12;

/// The magnetic system seen by normalized null geodesics: the reduction at
/// momentum `-1`, whose magnetic form is `-dω` and whose potential is the
/// constant `-1/2` (so the null shell `E = 0` is the unit-speed shell).
#[derive(Clone)]
pub struct MagneticSystem {
    system: MPSystem,
}

impl MagneticSystem {
    pub fn new(spec: &ManifoldSpec) -> Result<Self> {
        require_unit_lambda(spec)?;
        Ok(MagneticSystem { system: reduce(spec, -1.0).with_energy(0.0) })
    }

    pub fn as_mp(&self) -> &MPSystem {
        &self.system
    }

    pub fn spec(&self) -> &ManifoldSpec {
        self.system.spec()
    }
}

fn require_unit_lambda(spec: &ManifoldSpec) -> Result<()> {
    for p in spec.validation_points() {
        let lam = spec.lambda_at(p.as_slice());
        if (lam - 1.0).abs() > LAMBDA_ONE_TOL {
            return Err(Error::LambdaNotOne { found: lam, point: p.as_slice().to_vec() });
        }
    }
    Ok(())
}

/// Rescale a null state so its momentum is exactly `-1`; the spatial speed
/// is then `|v_x|_h = 1`.
pub fn null_normalize(spec: &ManifoldSpec, state: &SpacetimeState) -> Result<SpacetimeState> {
    require_unit_lambda(spec)?;
    let h = hamiltonian_h(spec, state)?;
    if h.abs() > 1e-10 * (1.0 + state.velocity().norm_squared()) {
        return Err(Error::NotNull { h });
    }
    let j = momentum_j(spec, state)?;
    if j.abs() < 1e-12 {
        return Err(Error::NotNull { h });
    }
    let a = -1.0 / j;
    Ok(SpacetimeState {
        t: state.t,
        x: state.x.clone(),
        v0: a * state.v0,
        vx: a * &state.vx,
        s: state.s,
    })
}

/// Project a normalized null trajectory (momentum `-1`) to the magnetic
/// system; the result is a unit-speed magnetic trajectory.
pub fn null_project(traj: &TrajectoryM) -> Result<TrajectoryN> {
    require_unit_lambda(traj.spec())?;
    let reduced = project(traj, -1.0)?;
    Ok(reduced)
}

/// Report of the lightlike convexity comparison.
#[derive(Debug, Clone)]
pub struct NullConvexityReport {
    pub applicable: bool,
    /// Largest `|⟨ω, ξ̂⟩|` over sampled boundary tangents.
    pub omega_tangential_sup: f64,
    /// Largest entry of the symmetrized covariant derivative of `ω`.
    pub sym_derivative_sup: f64,
    /// Reduced margins (when applicable).
    pub magnetic: Option<ConvexityReport>,
    /// Per-sample `(Π_M, magnetic margin)` pairs.
    pub pairs: Vec<(f64, f64)>,
    pub max_deviation: f64,
    pub signs_agree: bool,
}

/// Compare the spacetime second fundamental form in the null direction
/// `v = (1 + ⟨ω, ξ⟩, ξ)` with the magnetic convexity margin, on the
/// unit-speed shell. Applicable when `d^s ω ≡ 0` and `ω` vanishes on
/// boundary tangents.
pub fn null_convexity(
    spec: &ManifoldSpec,
    samples: &[(DVector<f64>, DVector<f64>)],
) -> Result<NullConvexityReport> {
    require_unit_lambda(spec)?;
    let magnetic = MagneticSystem::new(spec)?;
    let n = spec.dim();
    let tol = 1e-10;

    let mut omega_sup = 0.0f64;
    let mut sym_sup = 0.0f64;
    for (p, xi) in samples {
        let x = p.as_slice();
        let w = spec.omega_at(x);
        let speed = spec.norm_h(x, xi).max(1e-12);
        omega_sup = omega_sup.max((w.dot(xi) / speed).abs());
        let dw = spec.omega_jacobian_at(x);
        let gamma = spec.christoffel_h(x)?;
        for i in 0..n {
            for j in 0..n {
                let mut cov = 0.5 * (dw[(i, j)] + dw[(j, i)]);
                for l in 0..n {
                    cov -= gamma[l][(i, j)] * w[l];
                }
                sym_sup = sym_sup.max(cov.abs());
            }
        }
    }
    if omega_sup > tol || sym_sup > tol {
        return Ok(NullConvexityReport {
            applicable: false,
            omega_tangential_sup: omega_sup,
            sym_derivative_sup: sym_sup,
            magnetic: None,
            pairs: Vec::new(),
            max_deviation: 0.0,
            signs_agree: true,
        });
    }

    let reduced = mp_convexity(magnetic.as_mp(), samples, 0.0)?;
    let mut pairs = Vec::with_capacity(samples.len());
    let mut max_dev = 0.0f64;
    let mut signs = true;
    for ((p, xi), sample) in samples.iter().zip(&reduced.samples) {
        let x = p.as_slice();
        let w = spec.omega_at(x);
        let mut v = DVector::zeros(n + 1);
        v[0] = 1.0 + w.dot(xi);
        for i in 0..n {
            v[i + 1] = xi[i];
        }
        let pi_m = spacetime_second_form(spec, x, &v)?;
        max_dev = max_dev.max((pi_m - sample.margin).abs());
        if pi_m.signum() != sample.margin.signum()
            && pi_m.abs() > 1e-10
            && sample.margin.abs() > 1e-10
        {
            signs = false;
        }
        pairs.push((pi_m, sample.margin));
    }
    Ok(NullConvexityReport {
        applicable: true,
        omega_tangential_sup: omega_sup,
        sym_derivative_sup: sym_sup,
        magnetic: Some(reduced),
        pairs,
        max_deviation: max_dev,
        signs_agree: signs,
    })
}
