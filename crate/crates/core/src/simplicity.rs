//! Admissibility and simplicity diagnostics: the momentum band, the
//! hyperbolic angle, strict convexity of the boundary for the reduced
//! system, the convexity bridge to the spacetime second fundamental form,
//! and two-point shooting with multistart non-uniqueness detection.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chart::ManifoldSpec;
use crate::error::{Error, Result};
use crate::fields::fd_step;
use crate::ode::{self, EventSpec, IntegrationOptions, StopReason, Tolerances};
use crate::reduction::{MPSystem, ReducedState};

/// Sampled admissibility data for a `(ρ, m)` pair.
#[derive(Debug, Clone)]
pub struct AdmissibilityReport {
    pub rho: f64,
    pub mass: f64,
    /// Sampled minimum of λ.
    pub lambda_min: f64,
    /// Sampled maximum of λ.
    pub lambda_max: f64,
    /// Whether `ρ² > m² · max λ` (the admissible momentum band).
    pub band_ok: bool,
    /// `ρ²/m² - max λ`.
    pub margin: f64,
}

/// Sampled `(min λ, max λ)` and the admissible momentum band
/// `ρ ∈ (-∞, -m√B) ∪ (m√B, ∞)` for mass `m`.
pub fn admissible_band(spec: &ManifoldSpec, m: f64) -> (f64, f64, String) {
    let (a, b) = spec.lambda_range();
    let edge = m * b.sqrt();
    (a, b, format!("(-inf, {:.6}) U ({:.6}, inf)", -edge, edge))
}

/// Evaluate admissibility of a concrete `ρ` for mass `m`.
pub fn check_admissible(spec: &ManifoldSpec, rho: f64, m: f64) -> AdmissibilityReport {
    let (a, b) = spec.lambda_range();
    AdmissibilityReport {
        rho,
        mass: m,
        lambda_min: a,
        lambda_max: b,
        band_ok: rho * rho > m * m * b,
        margin: rho * rho / (m * m) - b,
    }
}

/// Hyperbolic angle between a mass-`m`, momentum-`ρ` velocity and the
/// Killing field at `x`.
#[derive(Debug, Clone, Copy)]
pub struct HyperbolicAngle {
    pub phi: f64,
    /// True when the velocity lies in the same timecone as `∂_t` (`ρ < 0`).
    pub same_timecone: bool,
}

/// `cosh φ = |ρ| / (m √λ(x))`, defined only inside the admissible band.
pub fn hyperbolic_angle(
    spec: &ManifoldSpec,
    x: &[f64],
    rho: f64,
    m: f64,
) -> Result<HyperbolicAngle> {
    let bound = m * spec.lambda_at(x).sqrt();
    if rho.abs() <= bound {
        return Err(Error::AngleUndefined { rho_abs: rho.abs(), bound });
    }
    Ok(HyperbolicAngle { phi: (rho.abs() / bound).acosh(), same_timecone: rho < 0.0 })
}

/// One boundary sample of the convexity data.
#[derive(Debug, Clone)]
pub struct ConvexitySample {
    pub x: DVector<f64>,
    /// Tangent vector on the energy sphere (`|ξ|²_h = 2(k - U)`).
    pub xi: DVector<f64>,
    /// Second fundamental form `Π(ξ, ξ)` (positive on a convex boundary).
    pub second_form: f64,
    /// `(Y ξ, ν̃)_h` with `ν̃` the inward normal.
    pub force_term: f64,
    /// `dU(ν̃)`.
    pub potential_term: f64,
    /// `Π - (Yξ, ν̃)_h + dU(ν̃)`.
    pub margin: f64,
}

/// Convexity report over a boundary sample set.
#[derive(Debug, Clone)]
pub struct ConvexityReport {
    pub energy: f64,
    pub samples: Vec<ConvexitySample>,
    pub min_margin: f64,
    pub strictly_convex: bool,
}

/// Sample `(x, ξ)` pairs on the energy sphere over the boundary.
pub fn boundary_energy_samples(
    system: &MPSystem,
    k: f64,
    n_points: usize,
    dirs_per_point: usize,
    seed: u64,
) -> Result<Vec<(DVector<f64>, DVector<f64>)>> {
    let spec = system.spec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for p in spec.domain().boundary_samples(n_points, &mut rng) {
        let x = p.as_slice();
        let speed = system.speed_at_energy(x, k)?;
        let basis = spec.boundary_tangent_basis(x)?;
        if basis.is_empty() {
            continue;
        }
        for d in 0..dirs_per_point {
            // Unit combination of the tangent basis.
            let mut xi = DVector::zeros(spec.dim());
            if basis.len() == 1 {
                let sign = if d % 2 == 0 { 1.0 } else { -1.0 };
                xi += &basis[0] * sign;
            } else {
                for b in &basis {
                    xi += b * rng.gen_range(-1.0..1.0f64);
                }
            }
            let norm = spec.norm_h(x, &xi);
            if norm < 1e-10 {
                continue;
            }
            out.push((p.clone(), xi * (speed / norm)));
        }
    }
    Ok(out)
}

/// Second fundamental form of the boundary at `x` in the direction `ξ`,
/// with respect to the inward normal: `Π(ξ, ξ) = (∇_ξ ν_out, ξ)_h`
/// (the unit circle bounding the disk has `Π = |ξ|²`).
pub fn second_fundamental_form(spec: &ManifoldSpec, x: &[f64], xi: &DVector<f64>) -> Result<f64> {
    let n = spec.dim();
    let nu = spec.outward_normal_field(x)?;
    let h = fd_step(x);
    // Directional derivative of the normal field along ξ plus the
    // connection correction.
    let mut dnu = DVector::zeros(n);
    for j in 0..n {
        if xi[j] == 0.0 {
            continue;
        }
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[j] += h;
        xm[j] -= h;
        let dj = (spec.outward_normal_field(&xp)? - spec.outward_normal_field(&xm)?) / (2.0 * h);
        dnu += dj * xi[j];
    }
    let gamma = spec.christoffel_h(x)?;
    let mut cov = dnu;
    for l in 0..n {
        let mut corr = 0.0;
        for j in 0..n {
            for m in 0..n {
                corr += gamma[l][(j, m)] * xi[j] * nu[m];
            }
        }
        cov[l] += corr;
    }
    Ok(spec.inner_h(x, &cov, xi))
}

/// Strict convexity of `∂N` for the reduced system at energy `k`:
/// `Π(x, ξ) > (Y_x ξ, ν̃)_h - d_x U(ν̃)` on the energy sphere.
pub fn mp_convexity(
    system: &MPSystem,
    samples: &[(DVector<f64>, DVector<f64>)],
    k: f64,
) -> Result<ConvexityReport> {
    let spec = system.spec();
    let mut out = Vec::with_capacity(samples.len());
    let mut min_margin = f64::INFINITY;
    for (p, xi) in samples {
        let x = p.as_slice();
        let nu_in = -spec.outward_normal(x)?;
        let second_form = second_fundamental_form(spec, x, xi)?;
        let y = system.lorentz_force(x)?;
        let force_term = spec.inner_h(x, &(&y * xi), &nu_in);
        let potential_term = system.grad_potential(x).dot(&nu_in);
        let margin = second_form - force_term + potential_term;
        min_margin = min_margin.min(margin);
        out.push(ConvexitySample {
            x: p.clone(),
            xi: xi.clone(),
            second_form,
            force_term,
            potential_term,
            margin,
        });
    }
    Ok(ConvexityReport {
        energy: k,
        samples: out,
        min_margin,
        strictly_convex: min_margin > 0.0,
    })
}

/// Result of comparing the spacetime second-fundamental-form computation
/// with the reduced convexity margin.
#[derive(Debug, Clone)]
pub struct BridgeReport {
    /// Whether the bridge hypotheses hold on the sampled boundary data.
    pub applicable: bool,
    /// Largest violation of the tangential-`ω` hypothesis.
    pub omega_tangential_sup: f64,
    /// Largest weighted residual of the symmetric-derivative hypothesis.
    pub hypothesis_residual_sup: f64,
    /// Per-sample `(Π_M, reduced margin)` pairs (empty when not applicable).
    pub pairs: Vec<(f64, f64)>,
    /// Largest `|Π_M - margin|` over the samples.
    pub max_deviation: f64,
    /// Whether the two margins agree in sign everywhere.
    pub signs_agree: bool,
}

/// Spacetime second fundamental form `Π_M(v, v) = (∇_v ν, v)_g` of the
/// cylinder `ℝ × ∂N` in the direction `v = (v⁰, v_x)`, with `ν` the
/// exterior unit normal.
pub fn spacetime_second_form(
    spec: &ManifoldSpec,
    x: &[f64],
    v: &DVector<f64>,
) -> Result<f64> {
    let n = spec.dim();
    let h = fd_step(x);
    // ν(x) = (⟨ω, ν_x⟩, ν_x) extended as a field near the boundary.
    let nu_field = |x: &[f64]| -> Result<DVector<f64>> {
        let nu_x = spec.outward_normal_field(x)?;
        let w = spec.omega_at(x);
        let mut nu = DVector::zeros(n + 1);
        nu[0] = w.dot(&nu_x);
        for i in 0..n {
            nu[i + 1] = nu_x[i];
        }
        Ok(nu)
    };
    let nu = nu_field(x)?;
    // v^j ∂_j ν (spatial derivatives only, ν is time-independent).
    let mut dnu = DVector::zeros(n + 1);
    for j in 0..n {
        let vj = v[j + 1];
        if vj == 0.0 {
            continue;
        }
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[j] += h;
        xm[j] -= h;
        let dj = (nu_field(&xp)? - nu_field(&xm)?) / (2.0 * h);
        dnu += dj * vj;
    }
    let gamma = spec.christoffel_g(x)?;
    let mut cov = dnu;
    for mu in 0..=n {
        let mut corr = 0.0;
        for a in 0..=n {
            for b in 0..=n {
                corr += gamma[mu][(a, b)] * nu[a] * v[b];
            }
        }
        cov[mu] += corr;
    }
    spec.inner_g(x, &cov, v)
}

/// Evaluate the bridge between the spacetime and reduced convexity
/// quantities. The report is `applicable` only when, at every sample,
/// `⟨ω, ξ⟩ ≈ 0` and `|ω|²_h · (⟨∂^s(ρω), ν̃ ⊗ ξ̂⟩ - dU(ν̃))` is negligible;
/// under those hypotheses `Π_M(v, v)` with `v = (-ρ/λ, ξ)` equals the
/// reduced margin exactly.
pub fn lorentzian_convexity_bridge(
    spec: &ManifoldSpec,
    rho: f64,
    m: f64,
    samples: &[(DVector<f64>, DVector<f64>)],
) -> Result<BridgeReport> {
    let system = crate::reduction::reduce(spec, rho);
    let k = -0.5 * m * m;
    let tol = 1e-8;

    let mut omega_sup = 0.0f64;
    let mut hyp_sup = 0.0f64;
    for (p, xi) in samples {
        let x = p.as_slice();
        let w = spec.omega_at(x);
        let speed = spec.norm_h(x, xi).max(1e-12);
        omega_sup = omega_sup.max((w.dot(xi) / speed).abs());
        let w2 = {
            let hinv = spec.h_inv_at(x)?;
            (hinv * &w).dot(&w)
        };
        let nu_in = -spec.outward_normal(x)?;
        let dw = spec.omega_jacobian_at(x);
        // ⟨∂^s(ρω), ν̃ ⊗ ξ⟩ with the coordinate-symmetrized derivative.
        let mut sym = 0.0;
        for i in 0..spec.dim() {
            for j in 0..spec.dim() {
                sym += 0.5 * rho * (dw[(i, j)] + dw[(j, i)]) * nu_in[i] * xi[j];
            }
        }
        let du = system.grad_potential(x).dot(&nu_in);
        hyp_sup = hyp_sup.max((w2 * (sym - du)).abs());
    }
    if omega_sup > tol || hyp_sup > tol {
        return Ok(BridgeReport {
            applicable: false,
            omega_tangential_sup: omega_sup,
            hypothesis_residual_sup: hyp_sup,
            pairs: Vec::new(),
            max_deviation: 0.0,
            signs_agree: true,
        });
    }

    let reduced = mp_convexity(&system, samples, k)?;
    let mut pairs = Vec::with_capacity(samples.len());
    let mut max_dev = 0.0f64;
    let mut signs = true;
    for ((p, xi), sample) in samples.iter().zip(&reduced.samples) {
        let x = p.as_slice();
        let lam = spec.lambda_at(x);
        let mut v = DVector::zeros(spec.dim() + 1);
        v[0] = -rho / lam;
        for i in 0..spec.dim() {
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
    Ok(BridgeReport {
        applicable: true,
        omega_tangential_sup: omega_sup,
        hypothesis_residual_sup: hyp_sup,
        pairs,
        max_deviation: max_dev,
        signs_agree: signs,
    })
}

/// Endpoint of the trajectory on the energy-`k` shell issued from `x` in
/// the (not necessarily normalized) direction `dir`, after parameter `s`.
/// Integration is allowed to wander slightly outside the chart; leaving the
/// extended margin is an error.
pub fn mp_exponential(
    system: &MPSystem,
    k: f64,
    x: &DVector<f64>,
    dir: &DVector<f64>,
    s: f64,
) -> Result<DVector<f64>> {
    Ok(mp_exponential_state(system, k, x, dir, s)?.x)
}

fn mp_exponential_state(
    system: &MPSystem,
    k: f64,
    x: &DVector<f64>,
    dir: &DVector<f64>,
    s: f64,
) -> Result<ReducedState> {
    let spec = system.spec();
    let n = spec.dim();
    if s == 0.0 {
        return Ok(ReducedState::new(x.clone(), DVector::zeros(n)));
    }
    let speed = system.speed_at_energy(x.as_slice(), k)?;
    let dn = spec.norm_h(x.as_slice(), dir);
    if dn < 1e-12 {
        return Err(Error::DegenerateMetric { point: x.as_slice().to_vec() });
    }
    let vx = dir * (speed / dn);
    let mut y0 = DVector::zeros(2 * n);
    for i in 0..n {
        y0[i] = x[i];
        y0[n + i] = vx[i];
    }
    let margin = 0.35 * spec.b_scale();
    let rhs = ShootOde { system };
    let event_f = move |_s: f64, y: &[f64]| spec.domain().b(&y[..n]) + margin;
    let event = EventSpec { f: &event_f, f_tol: 1e-9, reject_beyond: Some(margin) };
    let options = IntegrationOptions { tol: Tolerances::default(), ..Default::default() };
    let out = ode::integrate(&rhs, 0.0, &y0, s, &options, Some(&event))?;
    match out.stopped {
        StopReason::Event { s } => Err(Error::LeftDomain { s }),
        StopReason::Horizon => {
            let y = out.solution.y_end;
            Ok(ReducedState::new(y.rows(0, n).into_owned(), y.rows(n, n).into_owned()))
        }
    }
}

struct ShootOde<'a> {
    system: &'a MPSystem,
}

impl ode::OdeRhs for ShootOde<'_> {
    fn dim(&self) -> usize {
        2 * self.system.spec().dim()
    }
    fn eval(&self, _s: f64, y: &[f64], dy: &mut [f64]) {
        let n = self.system.spec().dim();
        let state = ReducedState {
            x: DVector::from_column_slice(&y[..n]),
            vx: DVector::from_column_slice(&y[n..]),
        };
        match crate::reduction::mp_rhs(self.system, &state) {
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

/// A converged two-point connection.
#[derive(Debug, Clone)]
pub struct ShootSolution {
    /// Euclidean-unit initial direction.
    pub direction: DVector<f64>,
    /// Parameter length of the connecting trajectory.
    pub duration: f64,
    /// Final residual `|exp - y|`.
    pub residual: f64,
    /// Condition number of the shooting Jacobian at the solution; a local
    /// diagnostic for the exponential map being a diffeomorphism.
    pub condition: f64,
}

#[derive(Debug, Clone)]
pub enum ShootOutcome {
    /// All converged starts agree on one connection.
    Unique(ShootSolution),
    /// Distinct connections found: the system is not simple at this energy.
    NotSimple(Vec<ShootSolution>),
}

#[derive(Debug, Clone)]
pub struct ShootReport {
    pub outcome: ShootOutcome,
    pub starts: usize,
    pub converged: usize,
}

#[derive(Debug, Clone)]
pub struct ShootOptions {
    pub starts: usize,
    pub max_newton_iters: usize,
    pub residual_tol: f64,
    /// Optional initial guess `(direction, duration)` tried first.
    pub hint: Option<(DVector<f64>, f64)>,
}

impl Default for ShootOptions {
    fn default() -> Self {
        ShootOptions { starts: 16, max_newton_iters: 60, residual_tol: 1e-9, hint: None }
    }
}

/// Newton shooting for the two-point problem `exp_x^k(s·v) = y` with
/// finite-difference Jacobian. Multistart over initial directions detects
/// non-uniqueness; distinct solutions are reported as `NotSimple`.
pub fn shoot_connect(
    system: &MPSystem,
    k: f64,
    x: &DVector<f64>,
    y: &DVector<f64>,
    options: &ShootOptions,
) -> Result<ShootReport> {
    let spec = system.spec();
    let n = spec.dim();
    assert_eq!(n, 2, "shooting is implemented for planar charts");

    let speed = system.speed_at_energy(x.as_slice(), k)?;
    let dist = (y - x).norm();
    let s_guess = (dist / speed).max(1e-3);

    let residual = |theta: f64, s: f64| -> Result<DVector<f64>> {
        let dir = DVector::from_column_slice(&[theta.cos(), theta.sin()]);
        Ok(mp_exponential(system, k, x, &dir, s)? - y)
    };

    let mut starts: Vec<(f64, f64)> = Vec::new();
    if let Some((dir, s0)) = &options.hint {
        starts.push((dir[1].atan2(dir[0]), *s0));
    }
    // Prefer the straight-line direction, then fan out; each direction is
    // tried at a short and a long duration so windings are not missed.
    let base_angle = (y[1] - x[1]).atan2(y[0] - x[0]);
    for i in 0..options.starts {
        let angle = base_angle + 2.0 * std::f64::consts::PI * i as f64 / options.starts as f64;
        starts.push((angle, s_guess));
        starts.push((angle, 4.0 * s_guess));
    }

    let fd_jacobian = |theta: f64, s: f64| -> Result<DMatrix<f64>> {
        let dth = 1e-6;
        let ds = 1e-6 * (1.0 + s.abs());
        let col_t = (residual(theta + dth, s)? - residual(theta - dth, s)?) / (2.0 * dth);
        let col_s = (residual(theta, s + ds)? - residual(theta, (s - ds).max(1e-9))?) / (2.0 * ds);
        Ok(DMatrix::from_columns(&[col_t, col_s]))
    };

    let mut solutions: Vec<ShootSolution> = Vec::new();
    let mut converged = 0usize;
    let n_starts = starts.len();
    for (mut theta, mut s) in starts {
        let mut ok = false;
        for _ in 0..options.max_newton_iters {
            let f = match residual(theta, s) {
                Ok(f) => f,
                Err(_) => break,
            };
            if f.norm() <= options.residual_tol {
                ok = true;
                break;
            }
            let jac = match fd_jacobian(theta, s) {
                Ok(j) => j,
                Err(_) => break,
            };
            let delta = match jac.lu().solve(&f) {
                Some(d) => d,
                None => break,
            };
            // Damped update, keeping the duration positive.
            let mut step = 1.0;
            let f0 = f.norm();
            let mut accepted = false;
            for _ in 0..6 {
                let th_new = theta - step * delta[0];
                let s_new = (s - step * delta[1]).max(1e-6);
                if let Ok(f_new) = residual(th_new, s_new) {
                    if f_new.norm() < f0 {
                        theta = th_new;
                        s = s_new;
                        accepted = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if !ok {
            continue;
        }
        converged += 1;
        let f_final = residual(theta, s).map(|f| f.norm()).unwrap_or(f64::INFINITY);
        let jac = match fd_jacobian(theta, s) {
            Ok(j) => j,
            Err(_) => continue,
        };
        let svd = jac.svd(false, false);
        let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let smin = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
        let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        let dir = DVector::from_column_slice(&[theta.cos(), theta.sin()]);
        let duplicate = solutions.iter().any(|sol| {
            (&sol.direction - &dir).norm() < 1e-5 && (sol.duration - s).abs() < 1e-5 * (1.0 + s)
        });
        if !duplicate {
            solutions.push(ShootSolution { direction: dir, duration: s, residual: f_final, condition });
        }
    }

    if solutions.is_empty() {
        return Err(Error::ShootingFailed {
            attempts: n_starts,
            reason: "no start converged".into(),
        });
    }
    let outcome = if solutions.len() == 1 {
        ShootOutcome::Unique(solutions.into_iter().next().unwrap())
    } else {
        ShootOutcome::NotSimple(solutions)
    };
    Ok(ShootReport { outcome, starts: n_starts, converged })
}
