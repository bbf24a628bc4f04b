//! Chart domains described by a boundary defining function `b`:
//! the manifold is `N = {b >= 0}` with boundary `{b = 0}`.

use nalgebra::DVector;
use rand::Rng;
use std::f64::consts::PI;

/// Relative tolerance used to decide whether a point lies on the boundary.
pub const BOUNDARY_REL_TOL: f64 = 1e-10;

/// A point is "on the boundary" when `|b(x)| <= BOUNDARY_REL_TOL * (1 + |x|)`.
pub fn boundary_tol(x: &[f64]) -> f64 {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    BOUNDARY_REL_TOL * (1.0 + norm)
}

/// Domain of a single chart with boundary defining function.
pub trait Domain: Send + Sync {
    fn dim(&self) -> usize;

    /// Defining function; nonnegative inside the domain.
    fn b(&self, x: &[f64]) -> f64;

    /// Euclidean gradient of `b`.
    fn grad_b(&self, x: &[f64]) -> DVector<f64>;

    /// Radius of a Euclidean ball (centered at the origin) containing the
    /// sampled portion of the domain.
    fn bounding_radius(&self) -> f64;

    /// Random points on the boundary.
    fn boundary_samples(&self, count: usize, rng: &mut dyn rand::RngCore) -> Vec<DVector<f64>>;

    /// Random points in the interior.
    fn interior_samples(&self, count: usize, rng: &mut dyn rand::RngCore) -> Vec<DVector<f64>>;

    fn contains(&self, x: &[f64]) -> bool {
        self.b(x) >= -boundary_tol(x)
    }

    fn on_boundary(&self, x: &[f64]) -> bool {
        self.b(x).abs() <= boundary_tol(x)
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Ball `{|x| <= radius}` in any dimension; `b = radius^2 - |x|^2`.
#[derive(Debug, Clone)]
pub struct Ball {
    pub dim: usize,
    pub radius: f64,
}

impl Ball {
    /// The unit disk in the plane.
    pub fn unit_disk() -> Self {
        Ball { dim: 2, radius: 1.0 }
    }

    fn random_direction(&self, rng: &mut dyn rand::RngCore) -> DVector<f64> {
        if self.dim == 2 {
            let theta = rng.gen_range(0.0..2.0 * PI);
            return DVector::from_column_slice(&[theta.cos(), theta.sin()]);
        }
        // Gaussian direction, rejected near zero norm.
        loop {
            let v = DVector::from_fn(self.dim, |_, _| {
                // Box-Muller from two uniforms.
                let u1: f64 = rng.gen_range(1e-12..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
            });
            let n = v.norm();
            if n > 1e-6 {
                return v / n;
            }
        }
    }
}

impl Domain for Ball {
    fn dim(&self) -> usize {
        self.dim
    }
    fn b(&self, x: &[f64]) -> f64 {
        self.radius * self.radius - x.iter().map(|v| v * v).sum::<f64>()
    }
    fn grad_b(&self, x: &[f64]) -> DVector<f64> {
        -2.0 * DVector::from_column_slice(x)
    }
    fn bounding_radius(&self) -> f64 {
        self.radius
    }
    fn boundary_samples(&self, count: usize, rng: &mut dyn rand::RngCore) -> Vec<DVector<f64>> {
        (0..count).map(|_| self.radius * self.random_direction(rng)).collect()
    }
    fn interior_samples(&self, count: usize, rng: &mut dyn rand::RngCore) -> Vec<DVector<f64>> {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let x: Vec<f64> =
                (0..self.dim).map(|_| rng.gen_range(-self.radius..self.radius)).collect();
            if norm(&x) < self.radius {
                out.push(DVector::from_column_slice(&x));
            }
        }
        out
    }
}

/// Planar annulus `{inner <= |x| <= outer}`;
/// `b = (|x|^2 - inner^2)(outer^2 - |x|^2)`, normalized by `outer^2`.
#[derive(Debug, Clone)]
pub struct Annulus {
    pub inner: f64,
    pub outer: f64,
}

impl Domain for Annulus {
    fn dim(&self) -> usize {
        2
    }
    fn b(&self, x: &[f64]) -> f64 {
        let r2 = x[0] * x[0] + x[1] * x[1];
        (r2 - self.inner * self.inner) * (self.outer * self.outer - r2)
            / (self.outer * self.outer)
    }
    fn grad_b(&self, x: &[f64]) -> DVector<f64> {
        let r2 = x[0] * x[0] + x[1] * x[1];
        let d = (self.outer * self.outer + self.inner * self.inner - 2.0 * r2)
            / (self.outer * self.outer);
        DVector::from_column_slice(&[2.0 * x[0] * d, 2.0 * x[1] * d])
    }
    fn bounding_radius(&self) -> f64 {
        self.outer
    }
    fn boundary_samples(&self, count: usize, rng: &mut dyn rand::RngCore) -> Vec<DVector<f64>> {
        (0..count)
            .map(|i| {
                let r = if i % 2 == 0 { self.outer } else { self.inner };
                let theta = rng.gen_range(0.0..2.0 * PI);
                DVector::from_column_slice(&[r * theta.cos(), r * theta.sin()])
            })
            .collect()
    }
    fn interior_samples(&self, count: usize, rng: &mut dyn rand::RngCore) -> Vec<DVector<f64>> {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let x = [
                rng.gen_range(-self.outer..self.outer),
                rng.gen_range(-self.outer..self.outer),
            ];
            let r = norm(&x);
            if r > self.inner && r < self.outer {
                out.push(DVector::from_column_slice(&x));
            }
        }
        out
    }
}

/// Planar slab `{|x_axis| <= half_width}` with flat boundary lines. The slab
/// is unbounded along the other axis; sampling is restricted to `|x| <=
/// extent` there. Useful for boundary tests that need a constant normal.
#[derive(Debug, Clone)]
pub struct Slab {
    pub axis: usize,
    pub half_width: f64,
    pub extent: f64,
}

impl Domain for Slab {
    fn dim(&self) -> usize {
        2
    }
    fn b(&self, x: &[f64]) -> f64 {
        self.half_width * self.half_width - x[self.axis] * x[self.axis]
    }
    fn grad_b(&self, x: &[f64]) -> DVector<f64> {
        let mut g = DVector::zeros(2);
        g[self.axis] = -2.0 * x[self.axis];
        g
    }
    fn bounding_radius(&self) -> f64 {
        (self.half_width * self.half_width + self.extent * self.extent).sqrt()
    }
    fn boundary_samples(&self, count: usize, rng: &mut dyn rand::RngCore) -> Vec<DVector<f64>> {
        (0..count)
            .map(|i| {
                let side = if i % 2 == 0 { self.half_width } else { -self.half_width };
                let other = rng.gen_range(-self.extent..self.extent);
                let mut p = DVector::zeros(2);
                p[self.axis] = side;
                p[1 - self.axis] = other;
                p
            })
            .collect()
    }
    fn interior_samples(&self, count: usize, rng: &mut dyn rand::RngCore) -> Vec<DVector<f64>> {
        (0..count)
            .map(|_| {
                let mut p = DVector::zeros(2);
                p[self.axis] = rng.gen_range(-self.half_width..self.half_width);
                p[1 - self.axis] = rng.gen_range(-self.extent..self.extent);
                p
            })
            .collect()
    }
}
