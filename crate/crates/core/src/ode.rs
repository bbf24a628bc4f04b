//! Adaptive Dormand-Prince 5(4) integrator with dense output and event
//! location.
//!
//! The integrator is shared by the spacetime geodesic flow and the reduced
//! flow. Dense output uses the standard fourth-order continuous extension,
//! so trajectories can be sampled, differentiated, and searched for boundary
//! crossings after the fact.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Absolute/relative tolerance pair.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub abs: f64,
    pub rel: f64,
}

impl Tolerances {
    pub fn new(abs: f64, rel: f64) -> Self {
        Tolerances { abs, rel }
    }

    /// Uniformly tighter tolerances by `factor`.
    pub fn tightened(self, factor: f64) -> Self {
        Tolerances { abs: self.abs * factor, rel: self.rel * factor }
    }
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { abs: 1e-10, rel: 1e-10 }
    }
}

/// Right-hand side of an autonomous first-order system.
pub trait OdeRhs {
    fn dim(&self) -> usize;
    fn eval(&self, s: f64, y: &[f64], dy: &mut [f64]);
}

impl<F: Fn(f64, &[f64], &mut [f64])> OdeRhs for (usize, F) {
    fn dim(&self) -> usize {
        self.0
    }
    fn eval(&self, s: f64, y: &[f64], dy: &mut [f64]) {
        (self.1)(s, y, dy)
    }
}

/// Terminal event: integration stops at the first root of `f` crossed from
/// positive to negative (e.g. a boundary defining function along the path).
pub struct EventSpec<'a> {
    pub f: &'a dyn Fn(f64, &[f64]) -> f64,
    /// Root is polished until `|f| <= f_tol`.
    pub f_tol: f64,
    /// Reject steps that land further below zero than this, so stage values
    /// stay near the domain.
    pub reject_beyond: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct IntegrationOptions {
    pub tol: Tolerances,
    pub max_steps: usize,
    pub h_max: Option<f64>,
    /// Component mask; `false` entries are excluded from the error norm
    /// (used for pure quadrature variables such as the time coordinate).
    pub error_mask: Option<Vec<bool>>,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        IntegrationOptions {
            tol: Tolerances::default(),
            max_steps: 2_000_000,
            h_max: None,
            error_mask: None,
        }
    }
}

/// Why the driver returned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopReason {
    /// Reached the requested end of the parameter interval.
    Horizon,
    /// Terminal event located at the recorded parameter value.
    Event { s: f64 },
}

/// One accepted step with dense-output coefficients.
#[derive(Debug, Clone)]
pub struct DenseStep {
    pub s0: f64,
    pub h: f64,
    rcont: [DVector<f64>; 5],
}

impl DenseStep {
    /// Value of the interpolant at local coordinate `theta` in `[0, 1]`.
    pub fn eval(&self, theta: f64) -> DVector<f64> {
        let t1 = 1.0 - theta;
        &self.rcont[0]
            + theta
                * (&self.rcont[1]
                    + t1 * (&self.rcont[2] + theta * (&self.rcont[3] + t1 * &self.rcont[4])))
    }

    /// Derivative of the interpolant with respect to the parameter `s`.
    pub fn eval_derivative(&self, theta: f64) -> DVector<f64> {
        let t1 = 1.0 - theta;
        let d = &self.rcont[2] * (1.0 - 2.0 * theta)
            + &self.rcont[3] * (theta * (2.0 - 3.0 * theta))
            + &self.rcont[4] * (2.0 * theta * t1 * (t1 - theta));
        (&self.rcont[1] + d) / self.h
    }
}

/// Piecewise-polynomial solution over `[s_start, s_end]`.
#[derive(Debug, Clone)]
pub struct DenseSolution {
    pub dim: usize,
    pub s_start: f64,
    pub s_end: f64,
    pub steps: Vec<DenseStep>,
    pub y_start: DVector<f64>,
    pub y_end: DVector<f64>,
}

impl DenseSolution {
    fn step_at(&self, s: f64) -> &DenseStep {
        let idx = self
            .steps
            .partition_point(|st| st.s0 + st.h < s)
            .min(self.steps.len().saturating_sub(1));
        &self.steps[idx]
    }

    pub fn eval(&self, s: f64) -> DVector<f64> {
        if self.steps.is_empty() {
            return self.y_start.clone();
        }
        let s = s.clamp(self.s_start, self.s_end);
        let st = self.step_at(s);
        st.eval((s - st.s0) / st.h)
    }

    pub fn eval_derivative(&self, s: f64) -> DVector<f64> {
        let s = s.clamp(self.s_start, self.s_end);
        let st = self.step_at(s);
        st.eval_derivative((s - st.s0) / st.h)
    }

    pub fn span(&self) -> f64 {
        self.s_end - self.s_start
    }

    /// Accepted-step parameter values, including both endpoints.
    pub fn knots(&self) -> Vec<f64> {
        let mut k: Vec<f64> = self.steps.iter().map(|st| st.s0).collect();
        k.push(self.s_end);
        k
    }

    /// Restriction of the solution to a subset of components. The dense
    /// interpolant is componentwise, so this is an exact projection.
    pub fn select_components(&self, idx: &[usize]) -> DenseSolution {
        let pick = |v: &DVector<f64>| DVector::from_fn(idx.len(), |r, _| v[idx[r]]);
        DenseSolution {
            dim: idx.len(),
            s_start: self.s_start,
            s_end: self.s_end,
            steps: self
                .steps
                .iter()
                .map(|st| DenseStep {
                    s0: st.s0,
                    h: st.h,
                    rcont: [
                        pick(&st.rcont[0]),
                        pick(&st.rcont[1]),
                        pick(&st.rcont[2]),
                        pick(&st.rcont[3]),
                        pick(&st.rcont[4]),
                    ],
                })
                .collect(),
            y_start: pick(&self.y_start),
            y_end: pick(&self.y_end),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OdeOutcome {
    pub solution: DenseSolution,
    pub stopped: StopReason,
    pub n_accepted: usize,
    pub n_rejected: usize,
}

// Dormand-Prince 5(4) coefficients.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// e = b5 - b4: combined once into the error estimate.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
// Dense-output weights for the fifth coefficient vector.
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

/// Integrate `rhs` from `s0` over `[s0, s0 + horizon]` (forward only).
pub fn integrate(
    rhs: &dyn OdeRhs,
    s0: f64,
    y0: &DVector<f64>,
    horizon: f64,
    options: &IntegrationOptions,
    event: Option<&EventSpec<'_>>,
) -> Result<OdeOutcome> {
    assert!(horizon > 0.0, "horizon must be positive");
    let n = rhs.dim();
    let s_end = s0 + horizon;
    let tol = options.tol;
    let mask = options.error_mask.clone().unwrap_or_else(|| vec![true; n]);
    let n_counted = mask.iter().filter(|&&m| m).count().max(1);

    let mut s = s0;
    let mut y = y0.clone();
    let mut f0 = DVector::zeros(n);
    rhs.eval(s, y.as_slice(), f0.as_mut_slice());
    if !f0.iter().all(|v| v.is_finite()) || !y.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteState { s });
    }

    let h_max = options.h_max.unwrap_or(horizon).min(horizon);
    let mut h = initial_step(rhs, s, &y, &f0, tol, h_max, &mask);
    let mut facold: f64 = 1e-4;

    let mut steps: Vec<DenseStep> = Vec::new();
    let mut n_accepted = 0usize;
    let mut n_rejected = 0usize;
    let mut k: Vec<DVector<f64>> = (0..7).map(|_| DVector::zeros(n)).collect();
    k[0] = f0;

    let mut event_val = event.map(|ev| (ev.f)(s, y.as_slice()));

    loop {
        if n_accepted + n_rejected > options.max_steps {
            return Err(Error::StepSizeUnderflow { s, h });
        }
        if s >= s_end {
            break;
        }
        h = h.min(s_end - s).min(h_max);
        if h < 1e-14 * (1.0 + s.abs()) {
            return Err(Error::StepSizeUnderflow { s, h });
        }

        // Stages (k[0] holds f(s, y) from FSAL).
        for i in 1..7 {
            let mut yi = y.clone();
            for (j, kj) in k.iter().enumerate().take(i) {
                if A[i][j] != 0.0 {
                    yi += kj * (A[i][j] * h);
                }
            }
            let mut ki = DVector::zeros(n);
            rhs.eval(s + C[i] * h, yi.as_slice(), ki.as_mut_slice());
            k[i] = ki;
        }
        // k[6] is f at the candidate endpoint (FSAL); the endpoint itself is
        // the stage-7 argument.
        let mut y1 = y.clone();
        for (j, kj) in k.iter().enumerate().take(6) {
            if A[6][j] != 0.0 {
                y1 += kj * (A[6][j] * h);
            }
        }

        if !y1.iter().all(|v| v.is_finite()) {
            n_rejected += 1;
            h *= 0.25;
            continue;
        }

        // Error estimate.
        let mut err_sq = 0.0;
        for c in 0..n {
            if !mask[c] {
                continue;
            }
            let mut e = 0.0;
            for (j, kj) in k.iter().enumerate() {
                e += E[j] * kj[c];
            }
            e *= h;
            let sc = tol.abs + tol.rel * y[c].abs().max(y1[c].abs());
            err_sq += (e / sc) * (e / sc);
        }
        let err = (err_sq / n_counted as f64).sqrt();

        if !err.is_finite() {
            n_rejected += 1;
            h *= 0.25;
            continue;
        }

        if err > 1.0 {
            // Rejected on accuracy.
            n_rejected += 1;
            let fac11 = err.powf(0.2 - BETA * 0.75);
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
            continue;
        }

        // Reject steps that plunge past the event surface.
        if let (Some(ev), Some(margin)) = (event, event.and_then(|e| e.reject_beyond)) {
            let f_end = (ev.f)(s + h, y1.as_slice());
            if f_end < -margin && h > 1e-12 * (1.0 + s.abs()) {
                n_rejected += 1;
                h *= 0.5;
                continue;
            }
        }

        // Accept: build dense coefficients.
        let ydiff = &y1 - &y;
        let mut rcont5 = DVector::zeros(n);
        for (j, kj) in k.iter().enumerate() {
            if D[j] != 0.0 {
                rcont5 += kj * D[j];
            }
        }
        rcont5 *= h;
        let rcont3 = &k[0] * h - &ydiff;
        let rcont4 = &ydiff - &k[6] * h - &rcont3;
        let step = DenseStep {
            s0: s,
            h,
            rcont: [y.clone(), ydiff, rcont3, rcont4, rcont5],
        };

        // Event check across the accepted step.
        if let Some(ev) = event {
            let f_start = event_val.unwrap_or_else(|| (ev.f)(s, y.as_slice()));
            if let Some((s_hit, y_hit)) = locate_event(ev, &step, f_start) {
                steps.push(step);
                let y_start_full = if steps.len() == 1 { y.clone() } else { steps[0].eval(0.0) };
                let solution = DenseSolution {
                    dim: n,
                    s_start: s0,
                    s_end: s_hit,
                    steps,
                    y_start: y_start_full,
                    y_end: y_hit,
                };
                return Ok(OdeOutcome {
                    solution,
                    stopped: StopReason::Event { s: s_hit },
                    n_accepted: n_accepted + 1,
                    n_rejected,
                });
            }
            event_val = Some((ev.f)(s + h, y1.as_slice()));
        }

        steps.push(step);
        n_accepted += 1;
        s += h;
        y = y1;
        k[0] = k[6].clone(); // FSAL

        let fac11 = err.max(1e-10).powf(0.2 - BETA * 0.75);
        let fac = (fac11 / facold.powf(BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
        h /= fac;
        facold = err.max(1e-4);
    }

    let solution = DenseSolution {
        dim: n,
        s_start: s0,
        s_end: s,
        steps,
        y_start: y0.clone(),
        y_end: y,
    };
    Ok(OdeOutcome { solution, stopped: StopReason::Horizon, n_accepted, n_rejected })
}

/// Classic initial step-size heuristic. Masked components are ignored so a
/// shift in a quadrature variable cannot perturb the step sequence.
fn initial_step(
    rhs: &dyn OdeRhs,
    s: f64,
    y: &DVector<f64>,
    f0: &DVector<f64>,
    tol: Tolerances,
    h_max: f64,
    mask: &[bool],
) -> f64 {
    let n = mask.iter().filter(|&&m| m).count().max(1);
    let sc = |yi: f64| tol.abs + tol.rel * yi.abs();
    let masked_rms = |vals: &dyn Fn(usize) -> f64| -> f64 {
        let sum: f64 = (0..y.len()).filter(|&c| mask[c]).map(|c| vals(c).powi(2)).sum();
        (sum / n as f64).sqrt()
    };
    let d0 = masked_rms(&|c| y[c] / sc(y[c]));
    let d1 = masked_rms(&|c| f0[c] / sc(y[c]));
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(h_max);
    // One explicit Euler probe to estimate the second derivative scale.
    let y1 = y + f0 * h0;
    let mut f1 = DVector::zeros(y.len());
    rhs.eval(s + h0, y1.as_slice(), f1.as_mut_slice());
    let d2 = masked_rms(&|c| (f1[c] - f0[c]) / sc(y[c])) / h0;
    let d_max = d1.max(d2);
    let h1 = if d_max <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d_max).powf(0.2)
    };
    (100.0 * h0).min(h1).min(h_max)
}

/// Find the first positive-to-negative root of the event function inside an
/// accepted step, if any. Returns the root parameter and state.
fn locate_event(
    ev: &EventSpec<'_>,
    step: &DenseStep,
    f_start: f64,
) -> Option<(f64, DVector<f64>)> {
    const SCAN: usize = 16;
    let f_at = |theta: f64| {
        let y = step.eval(theta);
        (ev.f)(step.s0 + theta * step.h, y.as_slice())
    };
    // Scan for the first bracket with a downward crossing.
    let mut lo = 0.0f64;
    let mut f_lo = f_start;
    let mut bracket = None;
    for i in 1..=SCAN {
        let hi = i as f64 / SCAN as f64;
        let f_hi = f_at(hi);
        if f_lo >= -ev.f_tol && f_hi < -ev.f_tol {
            bracket = Some((lo, f_lo, hi, f_hi));
            break;
        }
        lo = hi;
        f_lo = f_hi;
    }
    let (mut lo, mut f_lo, mut hi, mut f_hi) = bracket?;
    // Bisection with a secant nudge; the interpolant is smooth and cheap.
    for _ in 0..200 {
        let mid = if (f_lo - f_hi).abs() > 1e-300 {
            let sec = lo + (hi - lo) * f_lo / (f_lo - f_hi);
            if sec > lo && sec < hi {
                sec
            } else {
                0.5 * (lo + hi)
            }
        } else {
            0.5 * (lo + hi)
        };
        let f_mid = f_at(mid);
        if f_mid.abs() <= ev.f_tol {
            let s_hit = step.s0 + mid * step.h;
            return Some((s_hit, step.eval(mid)));
        }
        if f_mid > 0.0 {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
            f_hi = f_mid;
        }
        if (hi - lo) * step.h.abs() < 1e-16 {
            break;
        }
    }
    let mid = 0.5 * (lo + hi);
    Some((step.s0 + mid * step.h, step.eval(mid)))
}

// 7-point Gauss-Legendre rule on [-1, 1].
const GL_X: [f64; 7] = [
    -0.9491079123427585,
    -0.7415311855993945,
    -0.4058451513773972,
    0.0,
    0.4058451513773972,
    0.7415311855993945,
    0.9491079123427585,
];
const GL_W: [f64; 7] = [
    0.1294849661688697,
    0.2797053914892766,
    0.3818300505051189,
    0.4179591836734694,
    0.3818300505051189,
    0.2797053914892766,
    0.1294849661688697,
];

/// 7-point Gauss-Legendre quadrature of `f` over `[a, b]`.
pub fn gauss_legendre_7<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for (x, w) in GL_X.iter().zip(GL_W.iter()) {
        acc += w * f(mid + half * x);
    }
    acc * half
}

/// Composite Gauss-Legendre quadrature over the accepted steps of a dense
/// solution, integrating `f(s, y(s))`.
pub fn quadrature_over<F: FnMut(f64, &DVector<f64>) -> f64>(
    solution: &DenseSolution,
    mut f: F,
) -> f64 {
    let mut acc = 0.0;
    for st in &solution.steps {
        let a = st.s0;
        let b = (st.s0 + st.h).min(solution.s_end);
        if b <= a {
            continue;
        }
        acc += gauss_legendre_7(
            |s| {
                let y = st.eval((s - st.s0) / st.h);
                f(s, &y)
            },
            a,
            b,
        );
        if st.s0 + st.h >= solution.s_end {
            break;
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    struct Harmonic;
    impl OdeRhs for Harmonic {
        fn dim(&self) -> usize {
            2
        }
        fn eval(&self, _s: f64, y: &[f64], dy: &mut [f64]) {
            dy[0] = y[1];
            dy[1] = -y[0];
        }
    }

    #[test]
    fn harmonic_oscillator_endpoint_accuracy() {
        let y0 = DVector::from_column_slice(&[1.0, 0.0]);
        let out = integrate(&Harmonic, 0.0, &y0, 10.0, &IntegrationOptions::default(), None)
            .unwrap();
        assert_eq!(out.stopped, StopReason::Horizon);
        assert_abs_diff_eq!(out.solution.y_end[0], 10.0f64.cos(), epsilon = 1e-8);
        assert_abs_diff_eq!(out.solution.y_end[1], -10.0f64.sin(), epsilon = 1e-8);
    }

    #[test]
    fn dense_output_matches_closed_form() {
        let y0 = DVector::from_column_slice(&[1.0, 0.0]);
        let out = integrate(&Harmonic, 0.0, &y0, 6.0, &IntegrationOptions::default(), None)
            .unwrap();
        for i in 0..=60 {
            let s = 0.1 * i as f64;
            let y = out.solution.eval(s);
            assert_abs_diff_eq!(y[0], s.cos(), epsilon = 1e-8);
            let dy = out.solution.eval_derivative(s);
            assert_abs_diff_eq!(dy[0], -s.sin(), epsilon = 1e-6);
        }
    }

    #[test]
    fn event_located_to_tolerance() {
        // y' = 1; event at y = 2.5 via f = 2.5 - y.
        let rhs = (1usize, |_s: f64, _y: &[f64], dy: &mut [f64]| dy[0] = 1.0);
        let y0 = DVector::from_column_slice(&[0.0]);
        let f = |_s: f64, y: &[f64]| 2.5 - y[0];
        let ev = EventSpec { f: &f, f_tol: 1e-12, reject_beyond: None };
        let out =
            integrate(&rhs, 0.0, &y0, 10.0, &IntegrationOptions::default(), Some(&ev)).unwrap();
        match out.stopped {
            StopReason::Event { s } => assert_abs_diff_eq!(s, 2.5, epsilon = 1e-10),
            other => panic!("expected event stop, got {other:?}"),
        }
        assert_abs_diff_eq!(out.solution.y_end[0], 2.5, epsilon = 1e-10);
    }

    #[test]
    fn quadrature_reproduces_integral_along_solution() {
        let rhs = (1usize, |_s: f64, _y: &[f64], dy: &mut [f64]| dy[0] = 1.0);
        let y0 = DVector::from_column_slice(&[0.0]);
        let out = integrate(&rhs, 0.0, &y0, 3.0, &IntegrationOptions::default(), None).unwrap();
        // ∫0^3 y ds with y = s.
        let q = quadrature_over(&out.solution, |_s, y| y[0]);
        assert_abs_diff_eq!(q, 4.5, epsilon = 1e-10);
    }

    #[test]
    fn gauss_points_integrate_high_degree_exactly() {
        // Degree-13 polynomial is exact for the 7-point rule.
        let val = gauss_legendre_7(|x| x.powi(12), -1.0, 1.0);
        assert_abs_diff_eq!(val, 2.0 / 13.0, epsilon = 1e-14);
    }
}
