//! Single-chart representation of the spatial data `(N, h, ω, λ)` and the
//! pointwise algebra of the stationary metric built from it:
//!
//! ```text
//! g = -λ(x) (dt - ω_i dx^i)^2 + h_ij(x) dx^i dx^j
//! ```
//!
//! The module assembles `g` and its inverse in closed block form, converts
//! between the `(h̃, ω̃, λ)` and `(h, ω, λ)` presentations, and produces the
//! Christoffel symbols of both `h` and `g`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::domain::{boundary_tol, Domain};
use crate::error::{Error, Result};
use crate::fields::{CovectorField, MetricField, ScalarField};

/// Seed for the deterministic validation sampler.
const VALIDATION_SEED: u64 = 0x5ca77e21;

/// Options controlling the sampling validation performed at spec
/// construction.
#[derive(Debug, Clone)]
pub struct ValidationOptions {
    /// Lattice resolution per axis for interior checks.
    pub lattice_per_axis: usize,
    /// Number of boundary samples.
    pub boundary_samples: usize,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions { lattice_per_axis: 10, boundary_samples: 200 }
    }
}

/// Spatial data of a standard stationary metric on a single chart.
///
/// Immutable after construction; cheap to clone and safe to share across
/// threads. Positivity of `h` and `λ` is validated on a sample set at
/// construction time, not proven.
#[derive(Clone)]
pub struct ManifoldSpec {
    dim: usize,
    domain: Arc<dyn Domain>,
    h: Arc<dyn MetricField>,
    omega: Arc<dyn CovectorField>,
    lambda: Arc<dyn ScalarField>,
    samples: Arc<Vec<DVector<f64>>>,
    lambda_range: (f64, f64),
    b_scale: f64,
    h_eig_max: f64,
}

/// Value of the stationary metric at a point, with its inverse.
///
/// The inverse comes from the block formula
/// `g^00 = -1/λ + h^{kl} ω_k ω_l`, `g^{0j} = h^{kj} ω_k`, `g^{ij} = h^{ij}`.
#[derive(Debug, Clone)]
pub struct LorentzMetricValue {
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
    /// True when the assembled value has Lorentzian signature
    /// (λ > 0 and h positive definite).
    pub lorentzian: bool,
}

impl ManifoldSpec {
    /// Build and validate a spec from its four constituents.
    pub fn new(
        domain: Arc<dyn Domain>,
        h: Arc<dyn MetricField>,
        omega: Arc<dyn CovectorField>,
        lambda: Arc<dyn ScalarField>,
    ) -> Result<Self> {
        Self::with_options(domain, h, omega, lambda, &ValidationOptions::default())
    }

    pub fn with_options(
        domain: Arc<dyn Domain>,
        h: Arc<dyn MetricField>,
        omega: Arc<dyn CovectorField>,
        lambda: Arc<dyn ScalarField>,
        options: &ValidationOptions,
    ) -> Result<Self> {
        let dim = domain.dim();
        if h.dim() != dim || omega.dim() != dim {
            return Err(Error::InvalidSpec(format!(
                "field dimensions disagree: domain {}, h {}, omega {}",
                dim,
                h.dim(),
                omega.dim()
            )));
        }

        let samples = Self::validation_samples(domain.as_ref(), options);
        let mut lam_min = f64::INFINITY;
        let mut lam_max = f64::NEG_INFINITY;
        let mut b_scale = 0.0f64;
        let mut h_eig_max = 0.0f64;
        for p in &samples {
            let x = p.as_slice();
            let lam = lambda.value(x);
            if !(lam > 0.0) {
                return Err(Error::NonLorentzian { point: x.to_vec(), lambda: lam });
            }
            lam_min = lam_min.min(lam);
            lam_max = lam_max.max(lam);
            b_scale = b_scale.max(domain.b(x));
            let hv = h.value(x);
            let eig = hv.symmetric_eigenvalues();
            let min_eig = eig.iter().cloned().fold(f64::INFINITY, f64::min);
            h_eig_max = h_eig_max.max(eig.iter().cloned().fold(0.0, f64::max));
            if !(min_eig > 0.0) {
                return Err(Error::InvalidSpec(format!(
                    "h is not positive definite at {:?} (min eigenvalue {:.3e})",
                    x, min_eig
                )));
            }
        }
        // The boundary defining function must not degenerate on {b = 0}.
        let mut rng = ChaCha8Rng::seed_from_u64(VALIDATION_SEED ^ 1);
        for p in domain.boundary_samples(options.boundary_samples.min(64).max(16), &mut rng) {
            let gb = domain.grad_b(p.as_slice());
            if gb.norm() < 1e-8 {
                return Err(Error::DegenerateBoundary {
                    point: p.as_slice().to_vec(),
                    norm: gb.norm(),
                });
            }
        }

        Ok(ManifoldSpec {
            dim,
            domain,
            h,
            omega,
            lambda,
            samples: Arc::new(samples),
            lambda_range: (lam_min, lam_max),
            b_scale: b_scale.max(1e-6),
            h_eig_max: h_eig_max.max(1.0),
        })
    }

    /// Build a spec from the `(h̃, ω̃, λ)` presentation, converting to the
    /// internal `(h, ω, λ)` data via `h = h̃ + ω̃⊗ω̃/λ`, `ω = ω̃/λ`.
    pub fn from_tilde(
        domain: Arc<dyn Domain>,
        h_tilde: Arc<dyn MetricField>,
        omega_tilde: Arc<dyn CovectorField>,
        lambda: Arc<dyn ScalarField>,
    ) -> Result<Self> {
        let dim = domain.dim();
        let h = Arc::new(TildeMetric {
            h_tilde: h_tilde.clone(),
            omega_tilde: omega_tilde.clone(),
            lambda: lambda.clone(),
            dim,
        });
        let omega = Arc::new(TildeCovector {
            omega_tilde,
            lambda: lambda.clone(),
            dim,
        });
        Self::new(domain, h, omega, lambda)
    }

    fn validation_samples(domain: &dyn Domain, options: &ValidationOptions) -> Vec<DVector<f64>> {
        let dim = domain.dim();
        let r = domain.bounding_radius();
        let mut pts = Vec::new();
        // Lattice over the bounding box, filtered to the domain.
        let k = options.lattice_per_axis.max(2);
        let mut idx = vec![0usize; dim];
        loop {
            let x: Vec<f64> = idx
                .iter()
                .map(|&i| -r + 2.0 * r * (i as f64 + 0.5) / k as f64)
                .collect();
            if domain.contains(&x) && domain.b(&x) >= 0.0 {
                pts.push(DVector::from_column_slice(&x));
            }
            let mut carry = true;
            for d in 0..dim {
                if carry {
                    idx[d] += 1;
                    if idx[d] == k {
                        idx[d] = 0;
                    } else {
                        carry = false;
                    }
                }
            }
            if carry {
                break;
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(VALIDATION_SEED);
        pts.extend(domain.boundary_samples(options.boundary_samples, &mut rng));
        pts
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> &dyn Domain {
        self.domain.as_ref()
    }

    pub fn domain_arc(&self) -> Arc<dyn Domain> {
        self.domain.clone()
    }

    pub fn h_field(&self) -> Arc<dyn MetricField> {
        self.h.clone()
    }

    pub fn omega_field(&self) -> Arc<dyn CovectorField> {
        self.omega.clone()
    }

    pub fn lambda_field(&self) -> Arc<dyn ScalarField> {
        self.lambda.clone()
    }

    /// Deterministic sample set used for construction-time validation.
    pub fn validation_points(&self) -> &[DVector<f64>] {
        &self.samples
    }

    /// Sampled `(min λ, max λ)` over the validation set.
    pub fn lambda_range(&self) -> (f64, f64) {
        self.lambda_range
    }

    /// Sampled maximum of the defining function; a scale for "deep inside".
    pub fn b_scale(&self) -> f64 {
        self.b_scale
    }

    /// Estimated `h`-diameter of the domain.
    pub fn h_diameter_estimate(&self) -> f64 {
        2.0 * self.domain.bounding_radius() * self.h_eig_max.sqrt()
    }

    // -- pointwise field access ------------------------------------------

    pub fn lambda_at(&self, x: &[f64]) -> f64 {
        self.lambda.value(x)
    }

    pub fn grad_lambda_at(&self, x: &[f64]) -> DVector<f64> {
        self.lambda.gradient(x)
    }

    pub fn omega_at(&self, x: &[f64]) -> DVector<f64> {
        self.omega.value(x)
    }

    /// `(k, i)` entry is `∂_k ω_i`.
    pub fn omega_jacobian_at(&self, x: &[f64]) -> DMatrix<f64> {
        self.omega.jacobian(x)
    }

    pub fn h_at(&self, x: &[f64]) -> DMatrix<f64> {
        self.h.value(x)
    }

    pub fn h_partial_at(&self, x: &[f64], k: usize) -> DMatrix<f64> {
        self.h.partial(x, k)
    }

    pub fn h_inv_at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.h.value(x).try_inverse().ok_or(Error::DegenerateMetric { point: x.to_vec() })
    }

    /// `⟨u, v⟩_h` at `x`.
    pub fn inner_h(&self, x: &[f64], u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        (self.h.value(x) * v).dot(u)
    }

    pub fn norm_h(&self, x: &[f64], u: &DVector<f64>) -> f64 {
        self.inner_h(x, u, u).max(0.0).sqrt()
    }

    /// Recovered `ω̃ = λ ω` at `x`.
    pub fn omega_tilde_at(&self, x: &[f64]) -> DVector<f64> {
        self.lambda.value(x) * self.omega.value(x)
    }

    /// Recovered `h̃ = h - λ ω⊗ω` at `x`.
    pub fn h_tilde_at(&self, x: &[f64]) -> DMatrix<f64> {
        let w = self.omega.value(x);
        self.h.value(x) - self.lambda.value(x) * &w * w.transpose()
    }

    // -- metric assembly ---------------------------------------------------

    /// Assemble the stationary metric and its inverse at `x`.
    pub fn assemble_g(&self, x: &[f64]) -> Result<LorentzMetricValue> {
        let b = self.domain.b(x);
        if b < -boundary_tol(x) {
            return Err(Error::OutOfDomain { point: x.to_vec(), b });
        }
        let lam = self.lambda.value(x);
        if !(lam > 0.0) {
            return Err(Error::NonLorentzian { point: x.to_vec(), lambda: lam });
        }
        let n = self.dim;
        let w = self.omega.value(x);
        let h = self.h.value(x);

        let mut g = DMatrix::zeros(n + 1, n + 1);
        g[(0, 0)] = -lam;
        for i in 0..n {
            g[(0, i + 1)] = lam * w[i];
            g[(i + 1, 0)] = lam * w[i];
            for j in 0..n {
                g[(i + 1, j + 1)] = h[(i, j)] - lam * w[i] * w[j];
            }
        }

        let h_spd = h.clone().cholesky().is_some();
        let hinv = h.try_inverse().ok_or(Error::DegenerateMetric { point: x.to_vec() })?;
        let wup = &hinv * &w;
        let mut g_inv = DMatrix::zeros(n + 1, n + 1);
        g_inv[(0, 0)] = -1.0 / lam + wup.dot(&w);
        for i in 0..n {
            g_inv[(0, i + 1)] = wup[i];
            g_inv[(i + 1, 0)] = wup[i];
            for j in 0..n {
                g_inv[(i + 1, j + 1)] = hinv[(i, j)];
            }
        }

        Ok(LorentzMetricValue { g, g_inv, lorentzian: h_spd && lam > 0.0 })
    }

    /// `(u, v)_g` for spacetime vectors `u, v` of length `n + 1`.
    pub fn inner_g(&self, x: &[f64], u: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        // Evaluated from the block structure; avoids assembling the matrix.
        let n = self.dim;
        let lam = self.lambda.value(x);
        let w = self.omega.value(x);
        let ux = u.rows(1, n).into_owned();
        let vx = v.rows(1, n).into_owned();
        let fu = u[0] - w.dot(&ux);
        let fv = v[0] - w.dot(&vx);
        Ok(-lam * fu * fv + self.inner_h(x, &ux, &vx))
    }

    // -- Christoffel symbols ------------------------------------------------

    /// Levi-Civita symbols of the spatial metric `h`.
    /// Entry `[l][(i, j)]` is `Γ^l_{ij}`.
    pub fn christoffel_h(&self, x: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        let n = self.dim;
        let hinv = self.h_inv_at(x)?;
        let dh: Vec<DMatrix<f64>> = (0..n).map(|k| self.h.partial(x, k)).collect();
        let mut gamma = vec![DMatrix::zeros(n, n); n];
        for l in 0..n {
            for i in 0..n {
                for j in i..n {
                    let mut s = 0.0;
                    for m in 0..n {
                        s += hinv[(l, m)] * (dh[i][(m, j)] + dh[j][(m, i)] - dh[m][(i, j)]);
                    }
                    gamma[l][(i, j)] = 0.5 * s;
                    gamma[l][(j, i)] = 0.5 * s;
                }
            }
        }
        Ok(gamma)
    }

    /// Levi-Civita symbols of the full stationary metric `g` in closed form.
    /// Entry `[a][(b, c)]` is `Γ^a_{bc}` with index `0` the time direction
    /// and `1..=n` the spatial directions.
    pub fn christoffel_g(&self, x: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        let n = self.dim;
        let lam = self.lambda.value(x);
        if !(lam > 0.0) {
            return Err(Error::NonLorentzian { point: x.to_vec(), lambda: lam });
        }
        let dlam = self.lambda.gradient(x);
        let w = self.omega.value(x);
        let dw = self.omega.jacobian(x); // dw[(k, i)] = ∂_k ω_i
        let hinv = self.h_inv_at(x)?;
        let gam_h = self.christoffel_h(x)?;
        let wup = &hinv * &w; // W^k = h^{km} ω_m
        let w2 = wup.dot(&w); // |ω|_h²

        // a[(i, m)] = ∂_i(λ ω_m)
        let a = DMatrix::from_fn(n, n, |i, m| dlam[i] * w[m] + lam * dw[(i, m)]);
        // s3(i, k, j) = ∂_i(λ ω_k ω_j)
        let s3 = |i: usize, k: usize, j: usize| -> f64 {
            dlam[i] * w[k] * w[j] + lam * (dw[(i, k)] * w[j] + w[k] * dw[(i, j)])
        };

        let mut gamma = vec![DMatrix::zeros(n + 1, n + 1); n + 1];

        // Time row Γ^0.
        gamma[0][(0, 0)] = 0.5 * wup.dot(&dlam);
        for i in 0..n {
            let mut anti = 0.0;
            for k in 0..n {
                anti += wup[k] * (a[(i, k)] - a[(k, i)]);
            }
            let v = dlam[i] / (2.0 * lam) - 0.5 * w2 * dlam[i] + 0.5 * anti;
            gamma[0][(i + 1, 0)] = v;
            gamma[0][(0, i + 1)] = v;
        }
        for i in 0..n {
            for j in i..n {
                let sym = a[(i, j)] + a[(j, i)];
                let mut lowered = 0.0;
                for s in 0..n {
                    lowered += w[s] * gam_h[s][(i, j)];
                }
                let mut cubic = 0.0;
                for k in 0..n {
                    cubic += wup[k] * (s3(i, k, j) + s3(j, k, i) - s3(k, i, j));
                }
                let v = (0.5 * w2 - 0.5 / lam) * sym + lowered - 0.5 * cubic;
                gamma[0][(i + 1, j + 1)] = v;
                gamma[0][(j + 1, i + 1)] = v;
            }
        }

        // Spatial rows Γ^l.
        for l in 0..n {
            let mut lead = 0.0;
            for m in 0..n {
                lead += hinv[(l, m)] * dlam[m];
            }
            gamma[l + 1][(0, 0)] = 0.5 * lead;
            for i in 0..n {
                let mut anti = 0.0;
                for m in 0..n {
                    anti += hinv[(l, m)] * (a[(i, m)] - a[(m, i)]);
                }
                let v = 0.5 * anti - 0.5 * wup[l] * dlam[i];
                gamma[l + 1][(i + 1, 0)] = v;
                gamma[l + 1][(0, i + 1)] = v;
            }
            for i in 0..n {
                for j in i..n {
                    let sym = a[(i, j)] + a[(j, i)];
                    let mut cubic = 0.0;
                    for m in 0..n {
                        cubic += hinv[(l, m)] * (s3(i, m, j) + s3(j, m, i) - s3(m, i, j));
                    }
                    let v = 0.5 * wup[l] * sym + gam_h[l][(i, j)] - 0.5 * cubic;
                    gamma[l + 1][(i + 1, j + 1)] = v;
                    gamma[l + 1][(j + 1, i + 1)] = v;
                }
            }
        }

        Ok(gamma)
    }

    // -- boundary geometry ---------------------------------------------------

    /// `h`-unit outward normal to `∂N` at a boundary point:
    /// `ν_x = -h^{-1}∇b / |h^{-1}∇b|_h` (`∇b` points inward since `b ≥ 0`
    /// inside).
    pub fn outward_normal(&self, x: &[f64]) -> Result<DVector<f64>> {
        let b = self.domain.b(x);
        if b.abs() > boundary_tol(x) {
            return Err(Error::NotOnBoundary { point: x.to_vec(), b });
        }
        self.outward_normal_field(x)
    }

    /// The outward normal evaluated as a field near the boundary (no
    /// on-boundary check). Used when differentiating the normal.
    pub fn outward_normal_field(&self, x: &[f64]) -> Result<DVector<f64>> {
        let db = self.domain.grad_b(x);
        let hinv = self.h_inv_at(x)?;
        let v = &hinv * &db;
        let norm = v.dot(&db).max(0.0).sqrt();
        if norm < 1e-8 {
            return Err(Error::DegenerateBoundary { point: x.to_vec(), norm });
        }
        Ok(-v / norm)
    }

    /// Spacetime exterior unit normal to `ℝ × ∂N`:
    /// `ν = (⟨ω, ν_x⟩, ν_x)`.
    pub fn spacetime_outward_normal(&self, x: &[f64]) -> Result<DVector<f64>> {
        let nu_x = self.outward_normal(x)?;
        let w = self.omega.value(x);
        let mut nu = DVector::zeros(self.dim + 1);
        nu[0] = w.dot(&nu_x);
        for i in 0..self.dim {
            nu[i + 1] = nu_x[i];
        }
        Ok(nu)
    }

    /// An `h`-orthonormal basis of the boundary tangent space at `x`
    /// (all vectors `h`-orthogonal to the outward normal).
    pub fn boundary_tangent_basis(&self, x: &[f64]) -> Result<Vec<DVector<f64>>> {
        let n = self.dim;
        let nu = self.outward_normal(x)?;
        let mut basis: Vec<DVector<f64>> = Vec::with_capacity(n - 1);
        for k in 0..n {
            let mut e = DVector::zeros(n);
            e[k] = 1.0;
            // Gram-Schmidt against ν and the collected tangents.
            let mut v = e.clone();
            v -= &nu * self.inner_h(x, &e, &nu);
            for t in &basis {
                v -= t * self.inner_h(x, &v, t);
            }
            let norm = self.norm_h(x, &v);
            if norm > 1e-10 {
                basis.push(v / norm);
            }
            if basis.len() == n - 1 {
                break;
            }
        }
        Ok(basis)
    }
}

/// Assembled matrix of the `(h̃, ω̃, λ)` presentation:
/// `g_00 = -λ`, `g_{0i} = ω̃_i`, `g_{ij} = h̃_{ij}`.
pub fn assemble_from_tilde(
    lambda: f64,
    omega_tilde: &DVector<f64>,
    h_tilde: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = omega_tilde.len();
    let mut g = DMatrix::zeros(n + 1, n + 1);
    g[(0, 0)] = -lambda;
    for i in 0..n {
        g[(0, i + 1)] = omega_tilde[i];
        g[(i + 1, 0)] = omega_tilde[i];
        for j in 0..n {
            g[(i + 1, j + 1)] = h_tilde[(i, j)];
        }
    }
    g
}

/// `h = h̃ + ω̃⊗ω̃/λ` with analytic partials assembled from the parts.
struct TildeMetric {
    h_tilde: Arc<dyn MetricField>,
    omega_tilde: Arc<dyn CovectorField>,
    lambda: Arc<dyn ScalarField>,
    dim: usize,
}

impl MetricField for TildeMetric {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> DMatrix<f64> {
        let w = self.omega_tilde.value(x);
        let lam = self.lambda.value(x);
        self.h_tilde.value(x) + &w * w.transpose() / lam
    }
    fn partial(&self, x: &[f64], k: usize) -> DMatrix<f64> {
        let w = self.omega_tilde.value(x);
        let dw = self.omega_tilde.jacobian(x);
        let lam = self.lambda.value(x);
        let dlam = self.lambda.gradient(x)[k];
        let dwk = DVector::from_fn(self.dim, |i, _| dw[(k, i)]);
        self.h_tilde.partial(x, k) + (&dwk * w.transpose() + &w * dwk.transpose()) / lam
            - (dlam / (lam * lam)) * &w * w.transpose()
    }
}

/// `ω = ω̃/λ` with analytic partials.
struct TildeCovector {
    omega_tilde: Arc<dyn CovectorField>,
    lambda: Arc<dyn ScalarField>,
    dim: usize,
}

impl CovectorField for TildeCovector {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> DVector<f64> {
        self.omega_tilde.value(x) / self.lambda.value(x)
    }
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let w = self.omega_tilde.value(x);
        let dw = self.omega_tilde.jacobian(x);
        let lam = self.lambda.value(x);
        let dlam = self.lambda.gradient(x);
        DMatrix::from_fn(self.dim, self.dim, |k, i| {
            dw[(k, i)] / lam - w[i] * dlam[k] / (lam * lam)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Ball;
    use crate::fields::{ConstMetric, ConstScalar, FdMetricFn, ScalarFn, CovectorFn, ZeroCovector};
    use approx::assert_abs_diff_eq;

    fn flat_disk() -> ManifoldSpec {
        ManifoldSpec::new(
            Arc::new(Ball::unit_disk()),
            Arc::new(ConstMetric::euclidean(2)),
            Arc::new(ZeroCovector(2)),
            Arc::new(ConstScalar(1.0)),
        )
        .unwrap()
    }

    #[test]
    fn flat_assembly_is_minkowski() {
        let spec = flat_disk();
        let gv = spec.assemble_g(&[0.2, -0.3]).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_column_slice(&[-1.0, 1.0, 1.0]));
        assert_abs_diff_eq!(gv.g, expected, epsilon = 1e-15);
        assert_abs_diff_eq!(gv.g_inv, expected, epsilon = 1e-15);
        assert!(gv.lorentzian);
    }

    #[test]
    fn constant_omega_assembly_matches_hand_computation() {
        // h = I2, ω = (0.1, 0), λ = 2 at the origin.
        let spec = ManifoldSpec::new(
            Arc::new(Ball::unit_disk()),
            Arc::new(ConstMetric::euclidean(2)),
            Arc::new(CovectorFn {
                dim: 2,
                f: |_: &[f64]| DVector::from_column_slice(&[0.1, 0.0]),
                jac: |_: &[f64]| DMatrix::zeros(2, 2),
            }),
            Arc::new(ConstScalar(2.0)),
        )
        .unwrap();
        let gv = spec.assemble_g(&[0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(gv.g[(0, 0)], -2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(gv.g[(0, 1)], 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(gv.g[(1, 1)], 1.0 - 0.02, epsilon = 1e-15);
        assert_abs_diff_eq!(gv.g[(2, 2)], 1.0, epsilon = 1e-15);
        // Block-formula inverse, top-left entry -1/λ + |ω|².
        assert_abs_diff_eq!(gv.g_inv[(0, 0)], -0.5 + 0.01, epsilon = 1e-15);
        // Inverse agrees with LU inversion.
        let lu_inv = gv.g.clone().try_inverse().unwrap();
        assert_abs_diff_eq!(gv.g_inv, lu_inv, epsilon = 1e-13);
    }

    #[test]
    fn assembly_is_symmetric_and_rejects_outside_points() {
        let spec = flat_disk();
        let gv = spec.assemble_g(&[0.7, 0.1]).unwrap();
        assert_eq!(gv.g, gv.g.transpose());
        assert!(matches!(
            spec.assemble_g(&[1.5, 0.0]),
            Err(Error::OutOfDomain { .. })
        ));
    }

    fn curved_spec() -> ManifoldSpec {
        // h diagonal with (x¹)²-dependence, rotational ω, quadratic λ.
        ManifoldSpec::new(
            Arc::new(Ball::unit_disk()),
            Arc::new(FdMetricFn {
                dim: 2,
                f: |x: &[f64]| {
                    DMatrix::from_row_slice(
                        2,
                        2,
                        &[
                            1.0 + 0.2 * x[1] * x[1],
                            0.1 * x[0] * x[1],
                            0.1 * x[0] * x[1],
                            1.0 + 0.3 * x[0] * x[0],
                        ],
                    )
                },
            }),
            Arc::new(CovectorFn {
                dim: 2,
                f: |x: &[f64]| DVector::from_column_slice(&[-0.15 * x[1], 0.2 * x[0]]),
                jac: |_: &[f64]| DMatrix::from_row_slice(2, 2, &[0.0, 0.2, -0.15, 0.0]),
            }),
            Arc::new(ScalarFn {
                f: |x: &[f64]| 1.0 + 0.5 * x[0] * x[0] + 0.25 * x[1],
                grad: |x: &[f64]| DVector::from_column_slice(&[x[0], 0.25]),
            }),
        )
        .unwrap()
    }

    #[test]
    fn tilde_conversion_hand_example() {
        // (h̃ = I2, ω̃ = (1,0), λ = 2) → h = diag(1.5, 1), ω = (0.5, 0).
        let spec = ManifoldSpec::from_tilde(
            Arc::new(Ball::unit_disk()),
            Arc::new(ConstMetric::euclidean(2)),
            Arc::new(CovectorFn {
                dim: 2,
                f: |_: &[f64]| DVector::from_column_slice(&[1.0, 0.0]),
                jac: |_: &[f64]| DMatrix::zeros(2, 2),
            }),
            Arc::new(ConstScalar(2.0)),
        )
        .unwrap();
        let x = [0.3, 0.1];
        let h = spec.h_at(&x);
        assert_abs_diff_eq!(h[(0, 0)], 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(h[(0, 1)], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(h[(1, 1)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(spec.omega_at(&x)[0], 0.5, epsilon = 1e-15);

        // Both presentations assemble the same metric.
        let gv = spec.assemble_g(&x).unwrap();
        let tilde = assemble_from_tilde(
            2.0,
            &DVector::from_column_slice(&[1.0, 0.0]),
            &DMatrix::identity(2, 2),
        );
        assert_abs_diff_eq!(gv.g, tilde, epsilon = 1e-12);
    }

    #[test]
    fn tilde_round_trip_recovers_inputs() {
        let spec = curved_spec();
        for x in [[0.2, 0.3], [-0.5, 0.1], [0.0, -0.7]] {
            let w_tilde = spec.omega_tilde_at(&x);
            let h_tilde = spec.h_tilde_at(&x);
            // Rebuild (h, ω) from the recovered tilde data.
            let lam = spec.lambda_at(&x);
            let h_again = &h_tilde + &w_tilde * w_tilde.transpose() / lam;
            let w_again = &w_tilde / lam;
            assert_abs_diff_eq!(h_again, spec.h_at(&x), epsilon = 1e-12);
            assert_abs_diff_eq!(w_again, spec.omega_at(&x), epsilon = 1e-12);
        }
    }

    #[test]
    fn christoffel_h_euclidean_is_zero() {
        let spec = flat_disk();
        let gamma = spec.christoffel_h(&[0.3, 0.3]).unwrap();
        for g in gamma {
            assert_abs_diff_eq!(g, DMatrix::zeros(2, 2), epsilon = 1e-15);
        }
    }

    #[test]
    fn christoffel_h_diagonal_example() {
        // h = diag(1, (x¹)² + 1) at x = (1, 0):
        // Γ²₁₂ = x¹/((x¹)²+1) = 0.5, Γ¹₂₂ = -x¹ = -1.
        let spec = ManifoldSpec::with_options(
            Arc::new(Ball { dim: 2, radius: 2.0 }),
            Arc::new(FdMetricFn {
                dim: 2,
                f: |x: &[f64]| {
                    DMatrix::from_diagonal(&DVector::from_column_slice(&[
                        1.0,
                        x[0] * x[0] + 1.0,
                    ]))
                },
            }),
            Arc::new(ZeroCovector(2)),
            Arc::new(ConstScalar(1.0)),
            &ValidationOptions { lattice_per_axis: 4, boundary_samples: 16 },
        )
        .unwrap();
        let gamma = spec.christoffel_h(&[1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(gamma[1][(0, 1)], 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(gamma[1][(1, 0)], 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(gamma[0][(1, 1)], -1.0, epsilon = 1e-9);
    }

    #[test]
    fn christoffel_h_metric_compatibility() {
        let spec = curved_spec();
        let x = [0.25, -0.4];
        let gamma = spec.christoffel_h(&x).unwrap();
        let h = spec.h_at(&x);
        for k in 0..2 {
            let dh = spec.h_partial_at(&x, k);
            for i in 0..2 {
                for j in 0..2 {
                    let mut resid = dh[(i, j)];
                    for l in 0..2 {
                        resid -= gamma[l][(k, i)] * h[(l, j)] + gamma[l][(k, j)] * h[(i, l)];
                    }
                    assert!(resid.abs() < 1e-4, "residual {resid} at ({i},{j},{k})");
                }
            }
        }
    }

    #[test]
    fn christoffel_g_static_specialization() {
        // ω = 0, λ = λ(x), h = I: Γ^l_00 = λ_,l / 2, Γ^0_{i0} = λ_,i/(2λ),
        // spatial symbols vanish.
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
        let x = [0.6, -0.2];
        let lam = spec.lambda_at(&x);
        let gamma = spec.christoffel_g(&x).unwrap();
        assert_abs_diff_eq!(gamma[1][(0, 0)], 0.5 * x[0], epsilon = 1e-12);
        assert_abs_diff_eq!(gamma[2][(0, 0)], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(gamma[0][(1, 0)], 0.5 * x[0] / lam, epsilon = 1e-12);
        for i in 1..3 {
            for j in 1..3 {
                assert_abs_diff_eq!(gamma[1][(i, j)], 0.0, epsilon = 1e-12);
                assert_abs_diff_eq!(gamma[2][(i, j)], 0.0, epsilon = 1e-12);
                assert_abs_diff_eq!(gamma[0][(i, j)], 0.0, epsilon = 1e-12);
            }
        }
    }

    /// Finite-difference Levi-Civita oracle on the assembled metric.
    fn christoffel_fd_oracle(spec: &ManifoldSpec, x: &[f64]) -> Vec<DMatrix<f64>> {
        let n = spec.dim();
        let h = 1e-6 * (1.0 + x.iter().map(|v| v * v).sum::<f64>().sqrt());
        let g_inv = spec.assemble_g(x).unwrap().g_inv;
        // dg[k] = ∂_{x^k} g (spatial derivatives only; g is t-independent).
        let dg: Vec<DMatrix<f64>> = (0..n)
            .map(|k| {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[k] += h;
                xm[k] -= h;
                (spec.assemble_g(&xp).unwrap().g - spec.assemble_g(&xm).unwrap().g) / (2.0 * h)
            })
            .collect();
        let dg_full = |mu: usize, a: usize, b: usize| -> f64 {
            if mu == 0 {
                0.0
            } else {
                dg[mu - 1][(a, b)]
            }
        };
        let mut gamma = vec![DMatrix::zeros(n + 1, n + 1); n + 1];
        for m in 0..=n {
            for a in 0..=n {
                for b in 0..=n {
                    let mut s = 0.0;
                    for nu in 0..=n {
                        s += g_inv[(m, nu)]
                            * (dg_full(a, nu, b) + dg_full(b, nu, a) - dg_full(nu, a, b));
                    }
                    gamma[m][(a, b)] = 0.5 * s;
                }
            }
        }
        gamma
    }

    #[test]
    fn christoffel_g_matches_fd_levi_civita_oracle() {
        let spec = curved_spec();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for p in spec.domain().interior_samples(60, &mut rng) {
            if spec.domain().b(p.as_slice()) < 0.05 {
                continue; // keep the FD stencil inside the chart
            }
            let x = p.as_slice();
            let closed = spec.christoffel_g(x).unwrap();
            let oracle = christoffel_fd_oracle(&spec, x);
            for m in 0..3 {
                let dev = (&closed[m] - &oracle[m]).abs().max();
                assert!(dev < 1e-6, "Γ^{m} deviates by {dev} at {x:?}");
            }
        }
    }

    #[test]
    fn spacetime_normal_is_unit_and_boundary_orthogonal() {
        let spec = curved_spec();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for p in spec.domain().boundary_samples(32, &mut rng) {
            let x = p.as_slice();
            let nu = spec.spacetime_outward_normal(x).unwrap();
            assert_abs_diff_eq!(spec.inner_g(x, &nu, &nu).unwrap(), 1.0, epsilon = 1e-12);
            // ∂_t is g-orthogonal to ν.
            let dt = DVector::from_column_slice(&[1.0, 0.0, 0.0]);
            assert_abs_diff_eq!(spec.inner_g(x, &nu, &dt).unwrap(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn signature_has_one_negative_eigenvalue() {
        let spec = curved_spec();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for p in spec.domain().interior_samples(40, &mut rng) {
            let gv = spec.assemble_g(p.as_slice()).unwrap();
            let eig = gv.g.symmetric_eigenvalues();
            let negatives = eig.iter().filter(|&&e| e < 0.0).count();
            assert_eq!(negatives, 1);
            assert!(gv.lorentzian);
        }
    }

    #[test]
    fn rejects_nonpositive_lambda() {
        let err = ManifoldSpec::new(
            Arc::new(Ball::unit_disk()),
            Arc::new(ConstMetric::euclidean(2)),
            Arc::new(ZeroCovector(2)),
            Arc::new(ScalarFn {
                f: |x: &[f64]| 0.5 - x[0] * x[0] - x[1] * x[1],
                grad: |x: &[f64]| DVector::from_column_slice(&[-2.0 * x[0], -2.0 * x[1]]),
            }),
        );
        assert!(matches!(err, Err(Error::NonLorentzian { .. })));
    }
}
