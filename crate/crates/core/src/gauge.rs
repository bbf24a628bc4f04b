//! Gauge transformations of the spatial data and numerical verification
//! that gauge-related specs produce the same boundary scattering data.
//!
//! A gauge is a triple `(f, φ, μ)`: a diffeomorphism of `N` fixing the
//! boundary, a function vanishing on the boundary, and a positive
//! conformal factor equal to one on the boundary. Acting at momentum `ρ`
//! and mass `m` it sends
//!
//! ```text
//! h' = (1/μ) f*h,   ω' = f*ω + d(φ/ρ),
//! 1/λ' = μ (1/f*λ - m²/ρ²) + m²/ρ².
//! ```

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::chart::ManifoldSpec;
use crate::error::{Error, Result};
use crate::fields::{FdCovectorFn, FdMetricFn, FdScalarFn, ScalarField};
use crate::ode::Tolerances;
use crate::reduction::{reduce, MPSystem};
use crate::scattering::{sample_admissible_entries, scattering_rho_m};

/// Differentiable map of the chart with analytic Jacobian
/// (`J[(i, j)] = ∂f^i/∂x^j`).
pub trait DiffeoMap: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> DVector<f64>;
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64>;
}

/// The identity map.
pub struct IdentityMap(pub usize);

impl DiffeoMap for IdentityMap {
    fn dim(&self) -> usize {
        self.0
    }
    fn value(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }
    fn jacobian(&self, _x: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(self.0, self.0)
    }
}

/// Planar twist: rotation by the radius-dependent angle
/// `θ(x) = a (R² - r²)²`, which vanishes to second order on the circle of
/// radius `R`. A diffeomorphism for every amplitude.
pub struct TwistMap {
    pub amplitude: f64,
    pub radius: f64,
}

impl DiffeoMap for TwistMap {
    fn dim(&self) -> usize {
        2
    }
    fn value(&self, x: &[f64]) -> DVector<f64> {
        let r2 = x[0] * x[0] + x[1] * x[1];
        let g = self.radius * self.radius - r2;
        let theta = self.amplitude * g * g;
        let (s, c) = theta.sin_cos();
        DVector::from_column_slice(&[c * x[0] - s * x[1], s * x[0] + c * x[1]])
    }
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let r2 = x[0] * x[0] + x[1] * x[1];
        let g = self.radius * self.radius - r2;
        let theta = self.amplitude * g * g;
        let (s, c) = theta.sin_cos();
        // ∇θ = -4 a g x.
        let dth = [-4.0 * self.amplitude * g * x[0], -4.0 * self.amplitude * g * x[1]];
        // D(Rot(θ)x) = Rot(θ) + (J Rot(θ) x) ⊗ ∇θ.
        let rx = c * x[0] - s * x[1];
        let ry = s * x[0] + c * x[1];
        let jrot = [-ry, rx];
        DMatrix::from_row_slice(
            2,
            2,
            &[
                c + jrot[0] * dth[0],
                -s + jrot[0] * dth[1],
                s + jrot[1] * dth[0],
                c + jrot[1] * dth[1],
            ],
        )
    }
}

/// Radial bump displacement `f(x) = x + a (R² - r²)² w`; a diffeomorphism
/// for small `a |w|`.
pub struct RadialBumpMap {
    pub amplitude: f64,
    pub radius: f64,
    pub direction: DVector<f64>,
}

impl DiffeoMap for RadialBumpMap {
    fn dim(&self) -> usize {
        self.direction.len()
    }
    fn value(&self, x: &[f64]) -> DVector<f64> {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let g = self.radius * self.radius - r2;
        DVector::from_column_slice(x) + &self.direction * (self.amplitude * g * g)
    }
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.direction.len();
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let g = self.radius * self.radius - r2;
        let mut jac = DMatrix::identity(n, n);
        for i in 0..n {
            for j in 0..n {
                jac[(i, j)] += self.amplitude * self.direction[i] * (-4.0 * g * x[j]);
            }
        }
        jac
    }
}

/// Gauge data `(f, φ, μ)`.
#[derive(Clone)]
pub struct GaugeTransform {
    pub f: Arc<dyn DiffeoMap>,
    pub phi: Arc<dyn ScalarField>,
    pub mu: Arc<dyn ScalarField>,
}

impl GaugeTransform {
    pub fn identity(dim: usize) -> Self {
        GaugeTransform {
            f: Arc::new(IdentityMap(dim)),
            phi: Arc::new(crate::fields::ConstScalar(0.0)),
            mu: Arc::new(crate::fields::ConstScalar(1.0)),
        }
    }

    /// Boundary bump `φ = a (R² - r²)²` (vanishes to second order on the
    /// circle of radius `R`).
    pub fn bump_scalar(amplitude: f64, radius: f64) -> Arc<dyn ScalarField> {
        Arc::new(crate::fields::ScalarFn {
            f: move |x: &[f64]| {
                let g = radius * radius - x.iter().map(|v| v * v).sum::<f64>();
                amplitude * g * g
            },
            grad: move |x: &[f64]| {
                let g = radius * radius - x.iter().map(|v| v * v).sum::<f64>();
                DVector::from_fn(x.len(), |k, _| -4.0 * amplitude * g * x[k])
            },
        })
    }

    /// Interior conformal factor `μ = 1 + ε (R² - r²)`, equal to one on the
    /// boundary circle.
    pub fn interior_mu(epsilon: f64, radius: f64) -> Arc<dyn ScalarField> {
        Arc::new(crate::fields::ScalarFn {
            f: move |x: &[f64]| {
                1.0 + epsilon * (radius * radius - x.iter().map(|v| v * v).sum::<f64>())
            },
            grad: move |x: &[f64]| DVector::from_fn(x.len(), |k, _| -2.0 * epsilon * x[k]),
        })
    }

    /// Check the defining constraints on sampled boundary and interior
    /// points: `f` fixes the boundary, `φ` and `μ - 1` vanish there, the
    /// Jacobian is nonsingular, and `μ > 0`.
    pub fn validate(&self, spec: &ManifoldSpec) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x9a06e);
        for p in spec.domain().boundary_samples(200, &mut rng) {
            let x = p.as_slice();
            let moved = (self.f.value(x) - &p).norm();
            if moved > 1e-10 {
                return Err(Error::InvalidSpec(format!(
                    "gauge map moves the boundary point {:?} by {:.3e}",
                    x, moved
                )));
            }
            if self.phi.value(x).abs() > 1e-10 {
                return Err(Error::InvalidSpec("phi does not vanish on the boundary".into()));
            }
            if (self.mu.value(x) - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidSpec("mu is not 1 on the boundary".into()));
            }
        }
        for p in spec.validation_points() {
            let x = p.as_slice();
            if self.mu.value(x) <= 0.0 {
                return Err(Error::InvalidSpec("mu is not strictly positive".into()));
            }
            if self.f.jacobian(x).determinant().abs() < 1e-10 {
                return Err(Error::InvalidSpec(format!(
                    "gauge map has a singular Jacobian at {:?}",
                    x
                )));
            }
        }
        Ok(())
    }

    /// Gauge obtained by applying `self` first and `second` afterwards:
    /// `f = f₁∘f₂`, `φ = φ₁∘f₂ + φ₂`, `μ = μ₂ · (μ₁∘f₂)`.
    pub fn then(&self, second: &GaugeTransform) -> GaugeTransform {
        GaugeTransform {
            f: Arc::new(ComposedMap { outer: self.f.clone(), inner: second.f.clone() }),
            phi: Arc::new(PulledScalar {
                map: second.f.clone(),
                inner: self.phi.clone(),
                plus: Some(second.phi.clone()),
                times: None,
            }),
            mu: Arc::new(PulledScalar {
                map: second.f.clone(),
                inner: self.mu.clone(),
                plus: None,
                times: Some(second.mu.clone()),
            }),
        }
    }
}

/// `x ↦ inner(map(x)) (+ plus(x)) (· times(x))` with chain-rule gradient.
struct PulledScalar {
    map: Arc<dyn DiffeoMap>,
    inner: Arc<dyn ScalarField>,
    plus: Option<Arc<dyn ScalarField>>,
    times: Option<Arc<dyn ScalarField>>,
}

impl ScalarField for PulledScalar {
    fn value(&self, x: &[f64]) -> f64 {
        let mut v = self.inner.value(self.map.value(x).as_slice());
        if let Some(t) = &self.times {
            v *= t.value(x);
        }
        if let Some(p) = &self.plus {
            v += p.value(x);
        }
        v
    }
    fn gradient(&self, x: &[f64]) -> DVector<f64> {
        let y = self.map.value(x);
        let pulled = self.map.jacobian(x).transpose() * self.inner.gradient(y.as_slice());
        let mut g = match &self.times {
            Some(t) => {
                pulled * t.value(x) + t.gradient(x) * self.inner.value(y.as_slice())
            }
            None => pulled,
        };
        if let Some(p) = &self.plus {
            g += p.gradient(x);
        }
        g
    }
}

struct ComposedMap {
    outer: Arc<dyn DiffeoMap>,
    inner: Arc<dyn DiffeoMap>,
}

impl DiffeoMap for ComposedMap {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, x: &[f64]) -> DVector<f64> {
        self.outer.value(self.inner.value(x).as_slice())
    }
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let y = self.inner.value(x);
        self.outer.jacobian(y.as_slice()) * self.inner.jacobian(x)
    }
}

/// Shared field construction for the gauged spec: `2k/ρ²` replaces
/// `-m²/ρ²` so any energy level is supported.
fn gauged_spec(
    spec: &ManifoldSpec,
    gauge: &GaugeTransform,
    rho: f64,
    k: f64,
) -> Result<ManifoldSpec> {
    gauge.validate(spec)?;
    let n = spec.dim();
    let h = spec.h_field();
    let omega = spec.omega_field();
    let lambda = spec.lambda_field();
    let f = gauge.f.clone();
    let phi = gauge.phi.clone();
    let mu = gauge.mu.clone();

    let h_new = {
        let f = f.clone();
        let mu = mu.clone();
        FdMetricFn {
            dim: n,
            f: move |x: &[f64]| {
                let y = f.value(x);
                let jac = f.jacobian(x);
                jac.transpose() * h.value(y.as_slice()) * jac / mu.value(x)
            },
        }
    };
    let omega_new = {
        let f = f.clone();
        let phi = phi.clone();
        FdCovectorFn {
            dim: n,
            f: move |x: &[f64]| {
                let y = f.value(x);
                f.jacobian(x).transpose() * omega.value(y.as_slice())
                    + phi.gradient(x) / rho
            },
        }
    };
    let c = 2.0 * k / (rho * rho);
    let lambda_new = {
        let f = f.clone();
        let mu = mu.clone();
        FdScalarFn {
            f: move |x: &[f64]| {
                let y = f.value(x);
                let inv = mu.value(x) * (1.0 / lambda.value(y.as_slice()) + c) - c;
                1.0 / inv
            },
        }
    };

    ManifoldSpec::new(
        spec.domain_arc(),
        Arc::new(h_new),
        Arc::new(omega_new),
        Arc::new(lambda_new),
    )
    .map_err(|e| match e {
        Error::NonLorentzian { point, lambda } => Error::GaugeBreaksSignature { point, lambda },
        other => other,
    })
}

/// Apply a gauge to a spec at momentum `ρ` and mass `m`.
pub fn apply_gauge_ssm(
    spec: &ManifoldSpec,
    gauge: &GaugeTransform,
    rho: f64,
    m: f64,
) -> Result<ManifoldSpec> {
    gauged_spec(spec, gauge, rho, -0.5 * m * m)
}

/// Apply a `k`-gauge to a reduced system (same momentum, same energy
/// level).
pub fn apply_gauge_mp(system: &MPSystem, gauge: &GaugeTransform, k: f64) -> Result<MPSystem> {
    let spec = gauged_spec(system.spec(), gauge, system.rho(), k)?;
    Ok(reduce(&spec, system.rho()).with_energy(k))
}

/// Deviation summary of a scattering comparison between two specs.
#[derive(Debug, Clone)]
pub struct InvarianceReport {
    pub rho: f64,
    pub mass: f64,
    pub entries: usize,
    pub skipped: usize,
    pub max_exit_point: f64,
    pub max_exit_tangent: f64,
    pub max_exit_time: f64,
    pub max_time_shift: f64,
    pub max_action: f64,
    pub max_deviation: f64,
    pub pass: bool,
}

/// Tolerance at which two scattering records are considered identical.
pub const INVARIANCE_TOL: f64 = 1e-5;

/// Compare the boundary traces of two specs at sampled boundary points:
/// tangential `h`, pulled-back `ω`, and `λ`.
pub fn boundary_traces_match(a: &ManifoldSpec, b: &ManifoldSpec, tol: f64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7ace);
    for p in a.domain().boundary_samples(64, &mut rng) {
        let x = p.as_slice();
        let dev_lambda = (a.lambda_at(x) - b.lambda_at(x)).abs();
        if dev_lambda > tol {
            return Err(Error::BoundaryTraceMismatch { field: "lambda".into(), deviation: dev_lambda });
        }
        let basis = a.boundary_tangent_basis(x)?;
        let wa = a.omega_at(x);
        let wb = b.omega_at(x);
        for tau in &basis {
            let dev = (wa.dot(tau) - wb.dot(tau)).abs();
            if dev > tol {
                return Err(Error::BoundaryTraceMismatch { field: "omega".into(), deviation: dev });
            }
            for tau2 in &basis {
                let dev = (a.inner_h(x, tau, tau2) - b.inner_h(x, tau, tau2)).abs();
                if dev > tol {
                    return Err(Error::BoundaryTraceMismatch { field: "h".into(), deviation: dev });
                }
            }
        }
    }
    Ok(())
}

/// Sample admissible boundary entries, compute the momentum-mass scattering
/// record on both specs, and report the largest componentwise deviation.
pub fn verify_scattering_invariance(
    spec_a: &ManifoldSpec,
    spec_b: &ManifoldSpec,
    rho: f64,
    m: f64,
    n_samples: usize,
    seed: u64,
) -> Result<InvarianceReport> {
    boundary_traces_match(spec_a, spec_b, 1e-8)?;
    let entries = sample_admissible_entries(spec_a, rho, m, n_samples, seed)?;
    let mut report = InvarianceReport {
        rho,
        mass: m,
        entries: 0,
        skipped: 0,
        max_exit_point: 0.0,
        max_exit_tangent: 0.0,
        max_exit_time: 0.0,
        max_time_shift: 0.0,
        max_action: 0.0,
        max_deviation: 0.0,
        pass: false,
    };
    for entry in &entries {
        let ra = scattering_rho_m(spec_a, rho, m, entry, Tolerances::default());
        let rb = scattering_rho_m(spec_b, rho, m, entry, Tolerances::default());
        let (ra, rb) = match (ra, rb) {
            (Ok(a), Ok(b)) => (a, b),
            _ => {
                report.skipped += 1;
                continue;
            }
        };
        report.entries += 1;
        report.max_exit_point =
            report.max_exit_point.max((ra.exit.x - &rb.exit.x).norm());
        report.max_exit_tangent = report
            .max_exit_tangent
            .max((ra.exit.vx - &rb.exit.vx).norm())
            .max((ra.exit.vt - rb.exit.vt).abs());
        report.max_exit_time = report.max_exit_time.max((ra.exit_time - rb.exit_time).abs());
        report.max_time_shift =
            report.max_time_shift.max((ra.time_shift - rb.time_shift).abs());
        report.max_action = report.max_action.max((ra.action - rb.action).abs());
    }
    report.max_deviation = report
        .max_exit_point
        .max(report.max_exit_tangent)
        .max(report.max_exit_time)
        .max(report.max_time_shift)
        .max(report.max_action);
    report.pass = report.entries > 0 && report.max_deviation <= INVARIANCE_TOL;
    Ok(report)
}

/// For a boundary-fixing pair `(f, φ)` with `μ = 1`, the spacetime map
/// `Ψ(t, x) = (t - φ(x)/ρ, f(x))` pulls the metric back to exactly the
/// gauged assembly. This computes `Ψ*g` directly as a matrix congruence and
/// checks it against `apply_gauge_ssm`, reconciling the two presentations
/// of the same transformation.
pub fn psi_pullback(
    spec: &ManifoldSpec,
    gauge: &GaugeTransform,
    rho: f64,
) -> Result<ManifoldSpec> {
    for p in spec.validation_points().iter().take(64) {
        let mu = gauge.mu.value(p.as_slice());
        if (mu - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidSpec(
                "the spacetime pullback form requires mu = 1".into(),
            ));
        }
    }
    let gauged = apply_gauge_ssm(spec, gauge, rho, 1.0)?;

    let n = spec.dim();
    let mut max_dev = 0.0f64;
    for p in spec.validation_points() {
        let x = p.as_slice();
        if spec.domain().b(x) < 1e-8 {
            continue; // interior comparison; the boundary is fixed anyway
        }
        let y = gauge.f.value(x);
        let g_at_fx = spec.assemble_g(y.as_slice())?.g;
        // DΨ in block form: time row (1, -∇φᵀ/ρ), spatial block Df.
        let jac_f = gauge.f.jacobian(x);
        let dphi = gauge.phi.gradient(x);
        let mut dpsi = DMatrix::zeros(n + 1, n + 1);
        dpsi[(0, 0)] = 1.0;
        for j in 0..n {
            dpsi[(0, j + 1)] = -dphi[j] / rho;
            for i in 0..n {
                dpsi[(i + 1, j + 1)] = jac_f[(i, j)];
            }
        }
        let pulled = dpsi.transpose() * g_at_fx * dpsi;
        let direct = gauged.assemble_g(x)?.g;
        max_dev = max_dev.max((pulled - direct).abs().max());
    }
    if max_dev > 1e-10 {
        return Err(Error::ConventionMismatch { deviation: max_dev });
    }
    Ok(gauged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Ball;
    use crate::fields::{ConstMetric, ConstScalar, ScalarFn, ZeroCovector};
    use crate::simplicity::{boundary_energy_samples, mp_convexity};
    use approx::assert_abs_diff_eq;

    fn curved_spec() -> ManifoldSpec {
        crate::flow::tests::curved_spec()
    }

    fn test_gauge(amplitude: f64) -> GaugeTransform {
        GaugeTransform {
            f: Arc::new(TwistMap { amplitude, radius: 1.0 }),
            phi: GaugeTransform::bump_scalar(0.4 * amplitude, 1.0),
            mu: Arc::new(ConstScalar(1.0)),
        }
    }

    #[test]
    fn identity_gauge_preserves_fields() {
        let spec = curved_spec();
        let gauged = apply_gauge_ssm(&spec, &GaugeTransform::identity(2), -2.0, 1.0).unwrap();
        for p in spec.validation_points().iter().take(40) {
            let x = p.as_slice();
            assert_abs_diff_eq!(spec.lambda_at(x), gauged.lambda_at(x), epsilon = 1e-12);
            assert!((spec.omega_at(x) - gauged.omega_at(x)).norm() <= 1e-12);
            assert!((spec.h_at(x) - gauged.h_at(x)).abs().max() <= 1e-12);
        }
    }

    #[test]
    fn pure_phi_gauge_shifts_only_omega() {
        let spec = curved_spec();
        let rho = -2.0;
        let gauge = GaugeTransform {
            f: Arc::new(IdentityMap(2)),
            phi: GaugeTransform::bump_scalar(1.0, 1.0),
            mu: Arc::new(ConstScalar(1.0)),
        };
        let gauged = apply_gauge_ssm(&spec, &gauge, rho, 1.0).unwrap();
        for p in spec.validation_points().iter().take(40) {
            let x = p.as_slice();
            assert_abs_diff_eq!(spec.lambda_at(x), gauged.lambda_at(x), epsilon = 1e-12);
            assert!((spec.h_at(x) - gauged.h_at(x)).abs().max() <= 1e-12);
            let shift = gauged.omega_at(x) - spec.omega_at(x);
            let expected = gauge.phi.gradient(x) / rho;
            assert!((shift - expected).norm() <= 1e-12);
        }
    }

    #[test]
    fn boundary_traces_preserved_by_valid_gauges() {
        let spec = curved_spec();
        let gauge = GaugeTransform {
            f: Arc::new(TwistMap { amplitude: 0.3, radius: 1.0 }),
            phi: GaugeTransform::bump_scalar(0.2, 1.0),
            mu: GaugeTransform::interior_mu(0.15, 1.0),
        };
        let gauged = apply_gauge_ssm(&spec, &gauge, -2.0, 1.0).unwrap();
        boundary_traces_match(&spec, &gauged, 1e-10).unwrap();
    }

    #[test]
    fn mp_gauge_potential_identity() {
        // U' - k = μ (f*U - k) pointwise.
        let spec = curved_spec();
        let rho = -3.0;
        let k = -0.5;
        let sys = reduce(&spec, rho);
        let gauge = GaugeTransform {
            f: Arc::new(TwistMap { amplitude: 0.2, radius: 1.0 }),
            phi: GaugeTransform::bump_scalar(0.3, 1.0),
            mu: GaugeTransform::interior_mu(0.1, 1.0),
        };
        let gauged = apply_gauge_mp(&sys, &gauge, k).unwrap();
        for p in spec.validation_points().iter().take(60) {
            let x = p.as_slice();
            let y = gauge.f.value(x);
            let lhs = gauged.potential(x) - k;
            let rhs = gauge.mu.value(x) * (sys.potential(y.as_slice()) - k);
            assert!((lhs - rhs).abs() <= 1e-12, "at {x:?}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn gauge_composition_is_sequential_application() {
        let spec = curved_spec();
        let rho = -2.0;
        let m = 1.0;
        let g1 = GaugeTransform {
            f: Arc::new(TwistMap { amplitude: 0.15, radius: 1.0 }),
            phi: GaugeTransform::bump_scalar(0.2, 1.0),
            mu: GaugeTransform::interior_mu(0.1, 1.0),
        };
        let g2 = GaugeTransform {
            f: Arc::new(RadialBumpMap {
                amplitude: 0.05,
                radius: 1.0,
                direction: DVector::from_column_slice(&[1.0, 0.5]),
            }),
            phi: GaugeTransform::bump_scalar(-0.1, 1.0),
            mu: GaugeTransform::interior_mu(-0.05, 1.0),
        };
        let seq = apply_gauge_ssm(&apply_gauge_ssm(&spec, &g1, rho, m).unwrap(), &g2, rho, m)
            .unwrap();
        let composed_gauge = g1.then(&g2);
        let composed = apply_gauge_ssm(&spec, &composed_gauge, rho, m).unwrap();
        for p in spec.validation_points().iter().take(50) {
            let x = p.as_slice();
            assert!((seq.lambda_at(x) - composed.lambda_at(x)).abs() <= 1e-9);
            assert!((seq.omega_at(x) - composed.omega_at(x)).norm() <= 1e-9);
            assert!((seq.h_at(x) - composed.h_at(x)).abs().max() <= 1e-9);
        }
    }

    #[test]
    fn momentum_rescaling_of_gauged_systems() {
        // Gauging the momentum-ρ system at k = -m²/2 produces the same spec
        // as gauging the unit system at k = -m²/(2ρ²) with φ/ρ.
        let spec = curved_spec();
        let rho = -3.0;
        let m = 1.0;
        let gauge_rho = GaugeTransform {
            f: Arc::new(TwistMap { amplitude: 0.2, radius: 1.0 }),
            phi: GaugeTransform::bump_scalar(0.5, 1.0),
            mu: GaugeTransform::interior_mu(0.12, 1.0),
        };
        let gauge_unit = GaugeTransform {
            f: gauge_rho.f.clone(),
            phi: GaugeTransform::bump_scalar(0.5 / rho, 1.0),
            mu: gauge_rho.mu.clone(),
        };
        let a = apply_gauge_mp(&reduce(&spec, rho), &gauge_rho, -0.5 * m * m).unwrap();
        let b =
            apply_gauge_mp(&reduce(&spec, 1.0), &gauge_unit, -0.5 * m * m / (rho * rho)).unwrap();
        for p in spec.validation_points().iter().take(50) {
            let x = p.as_slice();
            assert!((a.spec().lambda_at(x) - b.spec().lambda_at(x)).abs() <= 1e-9);
            assert!((a.spec().omega_at(x) - b.spec().omega_at(x)).norm() <= 1e-9);
            assert!((a.spec().h_at(x) - b.spec().h_at(x)).abs().max() <= 1e-9);
        }
    }

    #[test]
    fn psi_pullback_agrees_with_gauge() {
        let spec = curved_spec();
        // φ = 0, f = id: identity.
        let trivial = GaugeTransform::identity(2);
        psi_pullback(&spec, &trivial, -2.0).unwrap();
        // f = id, φ ≠ 0: only the dt⊗dx cross terms change.
        let phi_only = GaugeTransform {
            f: Arc::new(IdentityMap(2)),
            phi: GaugeTransform::bump_scalar(0.7, 1.0),
            mu: Arc::new(ConstScalar(1.0)),
        };
        let gauged = psi_pullback(&spec, &phi_only, -2.0).unwrap();
        for p in spec.validation_points().iter().take(30) {
            let x = p.as_slice();
            let ga = spec.assemble_g(x).unwrap().g;
            let gb = gauged.assemble_g(x).unwrap().g;
            // The spatial-spatial block shifts only via the -λ ω⊗ω term.
            assert_abs_diff_eq!(ga[(0, 0)], gb[(0, 0)], epsilon = 1e-12);
        }
        // Full (f, φ) gauge.
        psi_pullback(&spec, &test_gauge(0.25), -2.0).unwrap();
    }

    #[test]
    fn scattering_invariance_under_boundary_fixing_gauge() {
        let spec = curved_spec();
        let rho = -3.0;
        let m = 1.0;
        let gauged = apply_gauge_ssm(&spec, &test_gauge(0.3), rho, m).unwrap();
        let report = verify_scattering_invariance(&spec, &gauged, rho, m, 12, 5).unwrap();
        assert!(report.entries >= 10, "skipped too many entries: {report:?}");
        assert!(report.pass, "max deviation {:.3e}", report.max_deviation);
    }

    #[test]
    fn interior_perturbation_is_detected() {
        // Scaling λ in the interior (boundary trace preserved) must produce
        // visibly different records: the comparison has power.
        let spec = curved_spec();
        let rho = -3.0;
        let m = 1.0;
        let perturbed = ManifoldSpec::new(
            spec.domain_arc(),
            spec.h_field(),
            spec.omega_field(),
            Arc::new(ScalarFn {
                f: |x: &[f64]| {
                    let base = 1.0 + 0.5 * x[0] * x[0];
                    base * (1.0 + 0.1 * (1.0 - x[0] * x[0] - x[1] * x[1]))
                },
                grad: |x: &[f64]| {
                    let r2 = x[0] * x[0] + x[1] * x[1];
                    let base = 1.0 + 0.5 * x[0] * x[0];
                    let bump = 1.0 + 0.1 * (1.0 - r2);
                    DVector::from_column_slice(&[
                        x[0] * bump + base * (-0.2 * x[0]),
                        base * (-0.2 * x[1]),
                    ])
                },
            }),
        )
        .unwrap();
        let report = verify_scattering_invariance(&spec, &perturbed, rho, m, 12, 5).unwrap();
        assert!(!report.pass);
        assert!(
            report.max_deviation >= 1e-3,
            "perturbation too weak to detect: {:.3e}",
            report.max_deviation
        );
        // A spec against itself is exactly invariant.
        let same = verify_scattering_invariance(&spec, &spec, rho, m, 8, 9).unwrap();
        assert_abs_diff_eq!(same.max_deviation, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn convexity_margin_invariant_under_phi_gauge() {
        // f = id, μ = 1, φ ≠ 0 leaves dω and hence the margins unchanged.
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
        let rho = -2.0;
        let m = 1.0;
        let k = -0.5 * m * m;
        let gauge = GaugeTransform {
            f: Arc::new(IdentityMap(2)),
            phi: GaugeTransform::bump_scalar(0.8, 1.0),
            mu: Arc::new(ConstScalar(1.0)),
        };
        let sys_a = reduce(&spec, rho);
        let sys_b = apply_gauge_mp(&sys_a, &gauge, k).unwrap();
        let samples = boundary_energy_samples(&sys_a, k, 24, 2, 3).unwrap();
        let ra = mp_convexity(&sys_a, &samples, k).unwrap();
        let rb = mp_convexity(&sys_b, &samples, k).unwrap();
        for (a, b) in ra.samples.iter().zip(&rb.samples) {
            assert!((a.margin - b.margin).abs() <= 1e-8);
        }
    }
}
