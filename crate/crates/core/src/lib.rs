//! Numerical Finsler geometry built around the Binet-Legendre averaging
//! construction.
//!
//! The crate turns a continuous Finsler structure `F(x, v)` into computable
//! objects and checks:
//!
//! - [`finsler`] — structures, axiom checking, and the metric zoo;
//! - [`quadrature`] — node/weight rules on `S^{n-1}`;
//! - [`binet_legendre`] — the averaged Riemannian tensor `g_ij(x)`, its
//!   exact polyhedral path and twisted variant;
//! - [`metric_space`] — path lengths and directed shortest-path distances;
//! - [`map_analysis`] — pullback residuals, blow-up tests, quasiconformal
//!   distortion, Christoffel transformation residuals, dilation checks;
//! - [`regularity`] — sampled Hölder seminorm/norm estimation.
//!
//! Everything randomized takes an explicit seed and replays exactly.

pub mod binet_legendre;
pub mod domain;
pub mod error;
pub mod finsler;
pub mod map_analysis;
pub mod metric_space;
pub mod polytope;
pub mod quadrature;
pub mod regularity;
pub mod sampling;

pub use binet_legendre::{
    bl_field, bl_inverse_tensor_at, bl_polyhedral_exact, bl_tensor_at, bl_twisted_tensor_at,
    partial_smoothness_check, MetricTensorField, PartialSmoothnessReport, Provenance, SpdMatrix,
    TwistMap,
};
pub use domain::Domain;
pub use error::{FinslerError, Result};
pub use finsler::{AxiomReport, FinslerStructure, MetricKind, MetricSpec, Remark2Profile};
pub use map_analysis::{
    blowup_isometry_test, christoffel_field, christoffel_transform_residual, dilation_check,
    distortion_at, pullback_residual, BlowupReport, ChristoffelField, DilationReport,
    DiscreteMap, DistortionResult,
};
pub use metric_space::{
    bilipschitz_check, bilipschitz_check_with, distance, distance_with_options, graph_for,
    path_length, symmetrized_distance, BilipschitzReport, DistanceMethod, DistanceOptions,
    DistanceResult, GridGraph, Polyline,
};
pub use quadrature::{surface_measure, QuadratureScheme, SphericalQuadrature};
pub use regularity::{
    bl_regularity_probe, field_seminorm, holder_norm, holder_seminorm, holder_seminorm_with,
    HolderEstimate, HolderValue, RegularityProbeReport,
};
