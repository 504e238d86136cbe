//! Level-set model of illegal extraction from protected regions.
//!
//! Extractors walk out of a protected region `Ω` after harvesting at some
//! point `x₀`. The expected cost of that trip is the first arrival time of
//! a front evolved inward from `∂Ω` under
//!
//! ```text
//! φ_t + ṽ(x) |∇φ| = 0,    ṽ = 1 / (1/v(x) + α ψ(x) B(x₀))
//! ```
//!
//! where `v` is the terrain walking speed, `ψ` the patrol density and `B`
//! the benefit at the extraction point. Subtracting cost from benefit gives
//! a profit map; the near-optimal extraction region together with tubes
//! around the extractors' exit paths is the non-pristine part of `Ω`.
//!
//! Module map:
//!
//! * [`grid`]: node-registered rasters, contouring, exact signed distance.
//! * [`terrain`]: ESRI ASCII ingestion, slope, walking speed.
//! * [`solver`]: ENO2 / Godunov / TVD-RK2 Hamilton-Jacobi solver.
//! * [`patrol`]: patrol density constructors normalized to a budget.
//! * [`extraction`]: cost assembly, profit, exit paths, pristine metrics.
//! * [`scenario`]: JSON scenarios, analytic disc validation, SVG output.
//!
//! With the default `parallel` feature the per-node loops, benefit levels
//! and path traces run on rayon; without it everything runs serially with
//! identical results.

pub mod error;
pub mod extraction;
pub mod grid;
pub(crate) mod par;
pub mod patrol;
pub mod rng;
pub mod scenario;
pub mod solver;
pub mod terrain;

pub use error::{Error, Result};
pub use grid::{DomainMask, Grid, NodeMask, Point, Polyline, ScalarField};
