//! Two-dimensional acoustic scattering workbench.
//!
//! Forward models for sound-soft, impedance and penetrable scatterers,
//! synthesis of phaseless near-field data from single plane waves and from
//! superpositions of two plane waves, and a constructive retrieval of the
//! phased total field from those moduli.
//!
//! Conventions used throughout:
//!
//! * fundamental solution `Φ(x, y) = (i/4) H^(1)_0(k|x − y|)`;
//! * far field `u^s(x) = e^{ik|x|}/√|x| · (u∞(x̂) + O(1/|x|))`, so that a
//!   point source at `y` has far field `γ e^{−ik x̂·y}` with
//!   `γ = e^{iπ/4}/√(8πk)`;
//! * radiating expansions `Σ_n c_n H^(1)_{|n|}(kr) e^{inφ}` about a center.

pub mod data;
pub mod error;
pub mod experiments;
pub mod forward;
pub mod geometry;
pub mod imaging;
pub mod medium;
mod quadrature;
pub mod obstacle;
pub mod retrieval;
pub mod scene;
pub mod special;

pub use num_complex::Complex64;

pub use error::{Error, Result};
pub use geometry::{BoundingBox, Point};
pub use scene::{
    builtin_kite, translate_scene, BoundaryCondition, BoundaryCurve, Direction, DirectionGrid,
    IncidentField, MeasurementSet, MediumIndex, Obstacle, Scatterer, Scene,
};
