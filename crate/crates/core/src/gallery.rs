//! Built-in manifold specs used by the test suites and the CLI. All live on
//! the unit disk chart.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::chart::ManifoldSpec;
use crate::domain::Ball;
use crate::error::{Error, Result};
use crate::fields::{ConstMetric, ConstScalar, CovectorFn, ScalarFn, ZeroCovector};

/// One catalog row.
#[derive(Debug, Clone)]
pub struct GalleryEntry {
    pub name: &'static str,
    pub summary: &'static str,
    pub parameters: &'static str,
}

/// The built-in catalog.
pub fn catalog() -> Vec<GalleryEntry> {
    vec![
        GalleryEntry {
            name: "flat-disk",
            summary: "h = I2, omega = 0, lambda = 1 on the unit disk",
            parameters: "none",
        },
        GalleryEntry {
            name: "rotating-disk",
            summary: "rotational 1-form omega = eps(-x2, x1), lambda = 1",
            parameters: "eps (default 0.1)",
        },
        GalleryEntry {
            name: "bumpy-lambda",
            summary: "lambda = 1 + eps (x1)^2, omega = 0",
            parameters: "eps (default 0.5)",
        },
        GalleryEntry {
            name: "magnetic-disk",
            summary: "omega = (c/2)(-x2, x1), lambda = 1: constant curl c",
            parameters: "c (default 0.3)",
        },
        GalleryEntry {
            name: "acoustic-analogue",
            summary: "tilde-form data of a rigidly rotating flow: h~ = I2, \
                      omega~ = -W, lambda = c^2 - |W|^2 with W = s(-x2, x1)",
            parameters: "c (default 1.2), s (default 0.2)",
        },
    ]
}

pub fn flat_disk() -> ManifoldSpec {
    ManifoldSpec::new(
        Arc::new(Ball::unit_disk()),
        Arc::new(ConstMetric::euclidean(2)),
        Arc::new(ZeroCovector(2)),
        Arc::new(ConstScalar(1.0)),
    )
    .expect("flat disk is a valid spec")
}

pub fn rotating_disk(eps: f64) -> Result<ManifoldSpec> {
    ManifoldSpec::new(
        Arc::new(Ball::unit_disk()),
        Arc::new(ConstMetric::euclidean(2)),
        Arc::new(CovectorFn {
            dim: 2,
            f: move |x: &[f64]| DVector::from_column_slice(&[-eps * x[1], eps * x[0]]),
            jac: move |_: &[f64]| DMatrix::from_row_slice(2, 2, &[0.0, eps, -eps, 0.0]),
        }),
        Arc::new(ConstScalar(1.0)),
    )
}

pub fn bumpy_lambda(eps: f64) -> Result<ManifoldSpec> {
    ManifoldSpec::new(
        Arc::new(Ball::unit_disk()),
        Arc::new(ConstMetric::euclidean(2)),
        Arc::new(ZeroCovector(2)),
        Arc::new(ScalarFn {
            f: move |x: &[f64]| 1.0 + eps * x[0] * x[0],
            grad: move |x: &[f64]| DVector::from_column_slice(&[2.0 * eps * x[0], 0.0]),
        }),
    )
}

pub fn magnetic_disk(c: f64) -> Result<ManifoldSpec> {
    ManifoldSpec::new(
        Arc::new(Ball::unit_disk()),
        Arc::new(ConstMetric::euclidean(2)),
        Arc::new(CovectorFn {
            dim: 2,
            f: move |x: &[f64]| DVector::from_column_slice(&[-0.5 * c * x[1], 0.5 * c * x[0]]),
            jac: move |_: &[f64]| DMatrix::from_row_slice(2, 2, &[0.0, 0.5 * c, -0.5 * c, 0.0]),
        }),
        Arc::new(ConstScalar(1.0)),
    )
}

/// Acoustic-style spec entered in the `(h̃, ω̃, λ)` presentation and
/// converted internally: a medium with sound speed `c` in rigid rotation at
/// rate `s`.
pub fn acoustic_analogue(c: f64, s: f64) -> Result<ManifoldSpec> {
    ManifoldSpec::from_tilde(
        Arc::new(Ball::unit_disk()),
        Arc::new(ConstMetric::euclidean(2)),
        Arc::new(CovectorFn {
            dim: 2,
            // ω̃ = -W with W = s(-x2, x1).
            f: move |x: &[f64]| DVector::from_column_slice(&[s * x[1], -s * x[0]]),
            jac: move |_: &[f64]| DMatrix::from_row_slice(2, 2, &[0.0, -s, s, 0.0]),
        }),
        Arc::new(ScalarFn {
            f: move |x: &[f64]| c * c - s * s * (x[0] * x[0] + x[1] * x[1]),
            grad: move |x: &[f64]| {
                DVector::from_column_slice(&[-2.0 * s * s * x[0], -2.0 * s * s * x[1]])
            },
        }),
    )
}

/// Build a gallery spec by name with parameter overrides.
pub fn build(name: &str, params: &BTreeMap<String, f64>) -> Result<ManifoldSpec> {
    let get = |key: &str, default: f64| params.get(key).copied().unwrap_or(default);
    match name {
        "flat-disk" => Ok(flat_disk()),
        "rotating-disk" => rotating_disk(get("eps", 0.1)),
        "bumpy-lambda" => bumpy_lambda(get("eps", 0.5)),
        "magnetic-disk" => magnetic_disk(get("c", 0.3)),
        "acoustic-analogue" => acoustic_analogue(get("c", 1.2), get("s", 0.2)),
        other => Err(Error::InvalidSpec(format!("unknown gallery spec '{other}'"))),
    }
}

/// Name/spec pairs with default parameters, for batch experiments.
pub fn default_gallery() -> Vec<(&'static str, ManifoldSpec)> {
    vec![
        ("flat-disk", flat_disk()),
        ("rotating-disk", rotating_disk(0.1).unwrap()),
        ("bumpy-lambda", bumpy_lambda(0.5).unwrap()),
        ("magnetic-disk", magnetic_disk(0.3).unwrap()),
        ("acoustic-analogue", acoustic_analogue(1.2, 0.2).unwrap()),
    ]
}
