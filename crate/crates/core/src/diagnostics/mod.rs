//! Density, transport and kernel-estimate experiments.

pub mod density;
pub mod equilibrium;
pub mod estimates;
pub mod transport;

pub use density::{
    bergman_measure, interpolation_margin, landau_margin, transport_plan, DensityKind, DensityLevel,
    DensityReport, TransportPlan,
};
pub use equilibrium::{default_windows, equilibrium_density, wasserstein_to_equilibrium, Window};
pub use estimates::{
    bernstein_constant, convex_kernel_fit, moderate_growth_ratio, offdiag_functional, ConvexFit, ConvexProbe,
    GrowthReport, LqNorm, OffDiagonal,
};
pub use transport::{transport_solver, wasserstein1, DiscreteMeasure, TransportResult, TransportSolver};
