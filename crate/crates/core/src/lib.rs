//! Numerical toolkit for inverse boundary problems of the magnetic
//! Schroedinger operator in planar domains with convex obstacles:
//! broken-ray transforms of electromagnetic potentials, gauge-equivalence
//! decisions (including Aharonov-Bohm holonomy), discrete
//! Dirichlet-to-Neumann matrices, and tomographic recovery of the scalar
//! potential with an empirical probe of the broken-ray stability estimate.

pub mod brt;
pub mod dtn;
pub mod fields;
pub mod geom;
pub mod linalg;
pub mod quad;
pub mod recon;
pub mod scene;
pub mod tracer;

pub use geom::Vec2;
pub use num_complex::Complex64;
