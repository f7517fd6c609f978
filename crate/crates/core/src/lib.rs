//! Numerical laboratory for weighted relative isoperimetric inequalities in
//! convex cones.
//!
//! The crate is `no_std` (it needs `alloc`). Sets are star-shaped regions
//! described by a radial function over the spherical patch `S^{n-1} ∩ C`;
//! weighted volumes and weighted relative perimeters are computed by
//! quadrature over that patch. On top of the geometry sit:
//!
//! * [`density`]: admissible weights `h` and audits of their hypotheses,
//! * [`lab`]: both sides of every inequality, sharp constants and probes,
//! * [`transport`]: discrete optimal transport standing in for the Brenier map,
//! * [`optimize`]: perimeter minimization under a weighted mass constraint.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod cone;
pub mod density;
pub mod error;
pub mod grid;
pub mod lab;
pub mod optimize;
pub mod qmc;
pub mod quadrature;
pub mod region;
pub mod report;
pub mod transport;

pub(crate) mod linalg;
pub(crate) mod math;

pub use cone::{ConeDescriptor, ConeKind, OrthantCheck};
pub use density::{BuiltinDensity, Density, DensityFlags};
pub use error::{Error, Result};
pub use grid::{PatchGrid, QuadratureSpec, RadialRule};
pub use region::Region;
pub use report::{InequalityReport, Verdict};
