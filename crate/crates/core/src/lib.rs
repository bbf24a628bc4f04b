//! Numerical engine for standard stationary spacetimes and their reduced
//! magnetic-potential systems.
//!
//! A standard stationary metric on `ℝ × N` is built from spatial data
//! `(h, ω, λ)` on a chart `N ⊂ ℝⁿ`:
//!
//! ```text
//! g = -λ(x) (dt - ω_i dx^i)^2 + h_ij(x) dx^i dx^j.
//! ```
//!
//! Because `∂_t` is Killing, every geodesic conserves the momentum
//! `J = (∂_t, γ̇)_g`, and fixing `J = ρ` reduces the geodesic flow to a
//! mechanical system on `N` with magnetic form `ρ dω` and potential
//! `ρ²/(-2λ)`. The crate realizes that correspondence numerically in both
//! directions, computes the associated boundary data (scattering relation,
//! reduced scattering relation, boundary action), applies gauge
//! transformations, and audits the admissibility and simplicity hypotheses
//! under which those data determine each other.
//!
//! Module map:
//!
//! - [`chart`]: the spatial data and all pointwise metric algebra.
//! - [`flow`]: the geodesic flow as an explicit first-order system.
//! - [`reduction`]: the reduced system, projection, and lift.
//! - [`scattering`]: boundary exit, projected boundary data, and the three
//!   equivalent scattering quantities.
//! - [`gauge`]: gauge transformations and scattering-invariance checks.
//! - [`simplicity`]: admissibility band, convexity margins, shooting.
//! - [`lightlike`]: the null case at `λ ≡ 1` and the magnetic system.
//! - [`gallery`]: built-in example specs.

pub mod chart;
pub mod domain;
pub mod error;
pub mod fields;
pub mod flow;
pub mod gallery;
pub mod gauge;
pub mod lightlike;
pub mod ode;
pub mod reduction;
pub mod scattering;
pub mod simplicity;

pub use chart::{LorentzMetricValue, ManifoldSpec, ValidationOptions};
pub use error::{Error, Result};
pub use flow::{
    geodesic_rhs, hamiltonian_h, integrate_geodesic, momentum_j, SpacetimeState, TrajectoryM,
};
pub use ode::Tolerances;
pub use reduction::{
    integrate_mp, lift, mass_energy_check, momentum_mass_state, mp_rhs, project, reduce,
    rescale_momentum, MPSystem, ReducedState, TrajectoryN,
};
pub use scattering::{
    action_boundary, exit_time, project_to_boundary_m, reconstruct_scattering, scattering_mp,
    scattering_rho_m, BoundaryTangent, MPBoundaryTangent, ScatteringRecord,
};
