//! Weighted orthogonal-polynomial spaces on compact domains and varieties.
//!
//! The crate builds `H_k`, the restrictions of polynomials of total degree at
//! most `k` to a built-in domain, equipped with the norm of `L²(e^{-kφ} dμ)`.
//! On top of an orthonormal basis it evaluates reproducing kernels and Bergman
//! functions, analyses finite point families as frames and Riesz sequences,
//! and measures density and transport diagnostics against equilibrium
//! measures.
//!
//! Module map:
//!
//! * [`geometry`]: domains, grids, tangent projection, ε-nets.
//! * [`quadrature`]: weighted measures and certified quadrature rules.
//! * [`polyspace`]: exponent sets, Gram matrices and the orthonormal basis.
//! * [`kernel`]: kernels, Bergman functions, Jacobi recurrences, Gauss nodes.
//! * [`family`]: point-family builders and their registry.
//! * [`framing`]: frame and Riesz bounds, dual frames, Carleson counts.
//! * [`diagnostics`]: equilibrium measures, Wasserstein distances and the
//!   sweep experiments built from them.

pub mod diagnostics;
pub mod error;
pub mod family;
pub mod framing;
pub mod geometry;
pub mod kernel;
pub mod numeric;
pub mod polyspace;
pub mod quadrature;

pub use error::{Error, Result};
pub use geometry::{Domain, PointFamilyLevel, PointSet};
pub use kernel::KernelEvaluator;
pub use polyspace::OrthonormalBasis;
pub use quadrature::{BaseMeasure, QuadratureRule, WeightFunction, WeightedMeasure};
