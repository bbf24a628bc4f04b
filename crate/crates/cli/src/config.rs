//! TOML experiment configuration: manifold declarations (gallery references
//! or inline coefficient tables), experiment kind and sampling parameters,
//! gauge families, and output settings.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context};
use nalgebra::DVector;
use serde::Deserialize;

use ssmp::chart::ManifoldSpec;
use ssmp::domain::{Annulus, Ball, Domain, Slab};
use ssmp::fields::{PolyTerm, PolyTrigCovector, PolyTrigMetric, PolyTrigScalar, TrigTerm};
use ssmp::gauge::{GaugeTransform, IdentityMap, RadialBumpMap, TwistMap};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub experiment: ExperimentConfig,
    pub manifold: ManifoldConfig,
    #[serde(default)]
    pub gauge: Option<GaugeConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_rho")]
    pub rho: Vec<f64>,
    #[serde(default = "default_mass")]
    pub mass: f64,
    /// Horizon for the conservation sweep.
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    /// Boundary pairs for the shooting audit.
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    #[serde(default)]
    pub abs_tol: Option<f64>,
    #[serde(default)]
    pub rel_tol: Option<f64>,
    /// Expected simplicity verdict for the audit (optional assertion).
    #[serde(default)]
    pub expect_simple: Option<bool>,
    /// Allow momenta outside the admissible band (explicit override).
    #[serde(default)]
    pub allow_inadmissible: bool,
}

fn default_seed() -> u64 {
    0
}
fn default_samples() -> usize {
    100
}
fn default_rho() -> Vec<f64> {
    vec![-2.0]
}
fn default_mass() -> f64 {
    1.0
}
fn default_horizon() -> f64 {
    10.0
}
fn default_pairs() -> usize {
    6
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    ScatterBatch,
    EquivalenceCheck,
    GaugeInvariance,
    SimplicityAudit,
    LightlikeBatch,
    ConservationSweep,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldConfig {
    /// Gallery entry name.
    #[serde(default)]
    pub gallery: Option<String>,
    /// Gallery parameters.
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// Inline definition as coefficient tables.
    #[serde(default)]
    pub inline: Option<InlineManifold>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineManifold {
    pub domain: DomainConfig,
    pub lambda: FieldExpr,
    /// One expression per covector component.
    pub omega: Vec<FieldExpr>,
    /// Upper triangle of `h`, row-major.
    pub h_upper: Vec<FieldExpr>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DomainConfig {
    Disk {
        #[serde(default = "default_radius")]
        radius: f64,
    },
    Ball {
        dim: usize,
        #[serde(default = "default_radius")]
        radius: f64,
    },
    Annulus {
        inner: f64,
        outer: f64,
    },
    Slab {
        axis: usize,
        half_width: f64,
        extent: f64,
    },
}

fn default_radius() -> f64 {
    1.0
}

/// Scalar expression: constant + monomials + trigonometric terms.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldExpr {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub poly: Vec<PolyTermConfig>,
    #[serde(default)]
    pub trig: Vec<TrigTermConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyTermConfig {
    pub coef: f64,
    pub powers: Vec<u32>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigTermConfig {
    pub coef: f64,
    pub wave: Vec<f64>,
    #[serde(default)]
    pub phase: f64,
    #[serde(default)]
    pub cosine: bool,
}

impl FieldExpr {
    fn to_scalar(&self) -> PolyTrigScalar {
        PolyTrigScalar {
            constant: self.constant,
            poly: self
                .poly
                .iter()
                .map(|t| PolyTerm { coef: t.coef, powers: t.powers.clone() })
                .collect(),
            trig: self
                .trig
                .iter()
                .map(|t| TrigTerm {
                    coef: t.coef,
                    wave: t.wave.clone(),
                    phase: t.phase,
                    cosine: t.cosine,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaugeConfig {
    #[serde(default = "default_gauge_kind")]
    pub kind: GaugeKind,
    /// Amplitude of the diffeomorphism family.
    #[serde(default)]
    pub amplitude: f64,
    /// Direction of the radial bump family.
    #[serde(default)]
    pub direction: Option<Vec<f64>>,
    /// Amplitude of the boundary-vanishing function φ.
    #[serde(default)]
    pub phi_amplitude: f64,
    /// μ = 1 + ε(R² - r²); ε = 0 keeps μ ≡ 1.
    #[serde(default)]
    pub mu_epsilon: f64,
    /// Optional interior λ-perturbation control run (expected to break
    /// invariance); the value is the relative perturbation amplitude.
    #[serde(default)]
    pub control_perturbation: Option<f64>,
}

fn default_gauge_kind() -> GaugeKind {
    GaugeKind::Twist
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GaugeKind {
    Identity,
    Twist,
    RadialBump,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

pub fn parse(text: &str) -> anyhow::Result<Config> {
    toml::from_str(text).context("configuration error")
}

/// Build the manifold spec declared by the configuration.
pub fn build_manifold(cfg: &ManifoldConfig) -> anyhow::Result<ManifoldSpec> {
    match (&cfg.gallery, &cfg.inline) {
        (Some(name), None) => {
            ssmp::gallery::build(name, &cfg.params).context("gallery manifold")
        }
        (None, Some(inline)) => build_inline(inline),
        (Some(_), Some(_)) => bail!("manifold: gallery and inline are mutually exclusive"),
        (None, None) => bail!("manifold: either 'gallery' or 'inline' is required"),
    }
}

fn build_inline(inline: &InlineManifold) -> anyhow::Result<ManifoldSpec> {
    let domain: Arc<dyn Domain> = match &inline.domain {
        DomainConfig::Disk { radius } => Arc::new(Ball { dim: 2, radius: *radius }),
        DomainConfig::Ball { dim, radius } => Arc::new(Ball { dim: *dim, radius: *radius }),
        DomainConfig::Annulus { inner, outer } => {
            Arc::new(Annulus { inner: *inner, outer: *outer })
        }
        DomainConfig::Slab { axis, half_width, extent } => {
            Arc::new(Slab { axis: *axis, half_width: *half_width, extent: *extent })
        }
    };
    let dim = domain.dim();
    if inline.omega.len() != dim {
        bail!("manifold.inline.omega needs {dim} components, got {}", inline.omega.len());
    }
    let expected_upper = dim * (dim + 1) / 2;
    if inline.h_upper.len() != expected_upper {
        bail!(
            "manifold.inline.h_upper needs {expected_upper} entries (upper triangle), got {}",
            inline.h_upper.len()
        );
    }
    let h = PolyTrigMetric {
        dim,
        upper: inline.h_upper.iter().map(|e| e.to_scalar()).collect(),
    };
    let omega = PolyTrigCovector {
        components: inline.omega.iter().map(|e| e.to_scalar()).collect(),
    };
    let lambda = inline.lambda.to_scalar();
    ManifoldSpec::new(domain, Arc::new(h), Arc::new(omega), Arc::new(lambda))
        .context("inline manifold failed validation")
}

/// Build the gauge declared by the configuration for a disk of the given
/// radius.
pub fn build_gauge(cfg: &GaugeConfig, radius: f64, dim: usize) -> anyhow::Result<GaugeTransform> {
    let f: Arc<dyn ssmp::gauge::DiffeoMap> = match cfg.kind {
        GaugeKind::Identity => Arc::new(IdentityMap(dim)),
        GaugeKind::Twist => {
            if dim != 2 {
                bail!("twist gauge is planar");
            }
            Arc::new(TwistMap { amplitude: cfg.amplitude, radius })
        }
        GaugeKind::RadialBump => {
            let dir = cfg
                .direction
                .clone()
                .unwrap_or_else(|| {
                    let mut d = vec![0.0; dim];
                    d[0] = 1.0;
                    d
                });
            Arc::new(RadialBumpMap {
                amplitude: cfg.amplitude,
                radius,
                direction: DVector::from_column_slice(&dir),
            })
        }
    };
    Ok(GaugeTransform {
        f,
        phi: GaugeTransform::bump_scalar(cfg.phi_amplitude, radius),
        mu: GaugeTransform::interior_mu(cfg.mu_epsilon, radius),
    })
}
