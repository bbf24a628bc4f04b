//! Field abstractions: scalar functions, 1-forms, and metric tensors on a
//! chart domain, each with first partial derivatives.
//!
//! Fields come in two derivative modes. Analytic fields carry closures for
//! their partials; finite-difference fields derive them by central
//! differences with relative step `FD_REL_STEP * (1 + |x|)`.

use nalgebra::{DMatrix, DVector};

/// Relative step for central finite differences.
pub const FD_REL_STEP: f64 = 1e-5;

/// Central-difference step at `x`.
pub fn fd_step(x: &[f64]) -> f64 {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    FD_REL_STEP * (1.0 + norm)
}

/// Central difference of a scalar function along coordinate `k`.
pub fn central_diff<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], k: usize) -> f64 {
    let h = fd_step(x);
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[k] += h;
    xm[k] -= h;
    (f(&xp) - f(&xm)) / (2.0 * h)
}

/// Scalar field with gradient.
pub trait ScalarField: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> DVector<f64>;
}

/// Covector field (1-form). `jacobian` returns the matrix with entry
/// `(k, i) = ∂_k ω_i`.
pub trait CovectorField: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> DVector<f64>;
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64>;
}

/// Symmetric matrix field. `partial` returns `∂_k h` as a matrix.
pub trait MetricField: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> DMatrix<f64>;
    fn partial(&self, x: &[f64], k: usize) -> DMatrix<f64>;
}

// ---------------------------------------------------------------------------
// Closure-backed fields
// ---------------------------------------------------------------------------

/// Scalar field from a value closure and an analytic gradient closure.
pub struct ScalarFn<F, G> {
    pub f: F,
    pub grad: G,
}

impl<F, G> ScalarField for ScalarFn<F, G>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
    G: Fn(&[f64]) -> DVector<f64> + Send + Sync,
{
    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
    fn gradient(&self, x: &[f64]) -> DVector<f64> {
        (self.grad)(x)
    }
}

/// Scalar field with finite-difference gradient.
pub struct FdScalarFn<F> {
    pub f: F,
}

impl<F> ScalarField for FdScalarFn<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
    fn gradient(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_fn(x.len(), |k, _| central_diff(&self.f, x, k))
    }
}

/// Constant scalar field.
pub struct ConstScalar(pub f64);

impl ScalarField for ConstScalar {
    fn value(&self, _x: &[f64]) -> f64 {
        self.0
    }
    fn gradient(&self, x: &[f64]) -> DVector<f64> {
        DVector::zeros(x.len())
    }
}

/// Covector field from value and analytic jacobian closures.
pub struct CovectorFn<F, G> {
    pub dim: usize,
    pub f: F,
    pub jac: G,
}

impl<F, G> CovectorField for CovectorFn<F, G>
where
    F: Fn(&[f64]) -> DVector<f64> + Send + Sync,
    G: Fn(&[f64]) -> DMatrix<f64> + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> DVector<f64> {
        (self.f)(x)
    }
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        (self.jac)(x)
    }
}

/// Covector field with finite-difference jacobian.
pub struct FdCovectorFn<F> {
    pub dim: usize,
    pub f: F,
}

impl<F> CovectorField for FdCovectorFn<F>
where
    F: Fn(&[f64]) -> DVector<f64> + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> DVector<f64> {
        (self.f)(x)
    }
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.dim;
        let h = fd_step(x);
        let mut jac = DMatrix::zeros(n, n);
        for k in 0..n {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[k] += h;
            xm[k] -= h;
            let dw = ((self.f)(&xp) - (self.f)(&xm)) / (2.0 * h);
            for i in 0..n {
                jac[(k, i)] = dw[i];
            }
        }
        jac
    }
}

/// Identically zero 1-form.
pub struct ZeroCovector(pub usize);

impl CovectorField for ZeroCovector {
    fn dim(&self) -> usize {
        self.0
    }
    fn value(&self, _x: &[f64]) -> DVector<f64> {
        DVector::zeros(self.0)
    }
    fn jacobian(&self, _x: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(self.0, self.0)
    }
}

/// Metric field from value and analytic partial closures.
pub struct MetricFn<F, G> {
    pub dim: usize,
    pub f: F,
    pub partials: G,
}

impl<F, G> MetricField for MetricFn<F, G>
where
    F: Fn(&[f64]) -> DMatrix<f64> + Send + Sync,
    G: Fn(&[f64], usize) -> DMatrix<f64> + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> DMatrix<f64> {
        (self.f)(x)
    }
    fn partial(&self, x: &[f64], k: usize) -> DMatrix<f64> {
        (self.partials)(x, k)
    }
}

/// Metric field with finite-difference partials.
pub struct FdMetricFn<F> {
    pub dim: usize,
    pub f: F,
}

impl<F> MetricField for FdMetricFn<F>
where
    F: Fn(&[f64]) -> DMatrix<f64> + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> DMatrix<f64> {
        (self.f)(x)
    }
    fn partial(&self, x: &[f64], k: usize) -> DMatrix<f64> {
        let h = fd_step(x);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[k] += h;
        xm[k] -= h;
        ((self.f)(&xp) - (self.f)(&xm)) / (2.0 * h)
    }
}

/// Constant (position-independent) metric.
pub struct ConstMetric(pub DMatrix<f64>);

impl ConstMetric {
    pub fn euclidean(dim: usize) -> Self {
        ConstMetric(DMatrix::identity(dim, dim))
    }
}

impl MetricField for ConstMetric {
    fn dim(&self) -> usize {
        self.0.nrows()
    }
    fn value(&self, _x: &[f64]) -> DMatrix<f64> {
        self.0.clone()
    }
    fn partial(&self, _x: &[f64], _k: usize) -> DMatrix<f64> {
        DMatrix::zeros(self.0.nrows(), self.0.ncols())
    }
}

// ---------------------------------------------------------------------------
// Polynomial/trigonometric coefficient fields (configuration surface)
// ---------------------------------------------------------------------------

/// Monomial term `coef * Π_i x_i^{powers[i]}`.
#[derive(Debug, Clone)]
pub struct PolyTerm {
    pub coef: f64,
    pub powers: Vec<u32>,
}

/// Trigonometric term `coef * sin(wave·x + phase)` (or cosine).
#[derive(Debug, Clone)]
pub struct TrigTerm {
    pub coef: f64,
    pub wave: Vec<f64>,
    pub phase: f64,
    pub cosine: bool,
}

/// Scalar function given by a constant plus polynomial and trigonometric
/// terms, with analytic gradient. This is the declarative form used by the
/// configuration format.
#[derive(Debug, Clone, Default)]
pub struct PolyTrigScalar {
    pub constant: f64,
    pub poly: Vec<PolyTerm>,
    pub trig: Vec<TrigTerm>,
}

impl PolyTrigScalar {
    pub fn constant(c: f64) -> Self {
        PolyTrigScalar {
            constant: c,
            ..Default::default()
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut v = self.constant;
        for t in &self.poly {
            let mut m = t.coef;
            for (xi, &p) in x.iter().zip(&t.powers) {
                m *= xi.powi(p as i32);
            }
            v += m;
        }
        for t in &self.trig {
            let arg: f64 = t.wave.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + t.phase;
            v += t.coef * if t.cosine { arg.cos() } else { arg.sin() };
        }
        v
    }

    pub fn grad(&self, x: &[f64]) -> DVector<f64> {
        let n = x.len();
        let mut g = DVector::zeros(n);
        for t in &self.poly {
            for k in 0..n {
                let pk = *t.powers.get(k).unwrap_or(&0);
                if pk == 0 {
                    continue;
                }
                let mut m = t.coef * pk as f64 * x[k].powi(pk as i32 - 1);
                for (i, xi) in x.iter().enumerate() {
                    if i != k {
                        m *= xi.powi(*t.powers.get(i).unwrap_or(&0) as i32);
                    }
                }
                g[k] += m;
            }
        }
        for t in &self.trig {
            let arg: f64 = t.wave.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + t.phase;
            let d = t.coef * if t.cosine { -arg.sin() } else { arg.cos() };
            for k in 0..n.min(t.wave.len()) {
                g[k] += d * t.wave[k];
            }
        }
        g
    }
}

impl ScalarField for PolyTrigScalar {
    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x)
    }
    fn gradient(&self, x: &[f64]) -> DVector<f64> {
        self.grad(x)
    }
}

/// 1-form with `PolyTrigScalar` components.
#[derive(Debug, Clone)]
pub struct PolyTrigCovector {
    pub components: Vec<PolyTrigScalar>,
}

impl CovectorField for PolyTrigCovector {
    fn dim(&self) -> usize {
        self.components.len()
    }
    fn value(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.components.len(), self.components.iter().map(|c| c.eval(x)))
    }
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.components.len();
        let mut jac = DMatrix::zeros(n, n);
        for (i, c) in self.components.iter().enumerate() {
            let g = c.grad(x);
            for k in 0..n {
                jac[(k, i)] = g[k];
            }
        }
        jac
    }
}

/// Symmetric metric with `PolyTrigScalar` entries, stored as the upper
/// triangle in row-major order: `(0,0), (0,1), .., (0,n-1), (1,1), ..`.
#[derive(Debug, Clone)]
pub struct PolyTrigMetric {
    pub dim: usize,
    pub upper: Vec<PolyTrigScalar>,
}

impl PolyTrigMetric {
    pub fn identity(dim: usize) -> Self {
        let mut upper = Vec::new();
        for i in 0..dim {
            for j in i..dim {
                upper.push(PolyTrigScalar::constant(if i == j { 1.0 } else { 0.0 }));
            }
        }
        PolyTrigMetric { dim, upper }
    }

    fn entry(&self, i: usize, j: usize) -> &PolyTrigScalar {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        // Offset of row i within the packed upper triangle.
        let offset = i * self.dim - i * (i + 1) / 2 + j;
        &self.upper[offset]
    }
}

impl MetricField for PolyTrigMetric {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.entry(i, j).eval(x))
    }
    fn partial(&self, x: &[f64], k: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.entry(i, j).grad(x)[k])
    }
}
