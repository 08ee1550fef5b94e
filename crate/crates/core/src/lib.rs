//! Numerical laboratory for the time-dependent magnetic Schrodinger
//! equation on the unit square: forward solves, Dirichlet-to-Neumann
//! matrices, geometric optics packets and Fourier recovery of potential
//! differences.

pub mod dnmap;
pub mod error;
pub mod field;
pub mod grid;
pub mod harness;
pub mod forward;
pub mod go;
pub mod potentials;
pub mod recovery;

#[cfg(test)]
mod tests;

pub use dnmap::{boundary_basis, dn_apply, dn_distance, dn_matrix, BoundaryBasis, DnMatrix, Trace};
pub use error::{Error, Result};
pub use field::{ComplexField, Field3, RealField};
pub use go::{assemble_packet, cutoff_chi, GOPacket, GOParams};
pub use grid::{ray_points, BoundaryNode, Edge, SpaceTimeGrid};
pub use potentials::{
    check_admissibility, extend_pair, extend_potential, gauge_from_pair, gauge_transform, AdmissibilityReport,
    AdmissibilityTolerances, ExtendedPotential, GaugeFunction, PaddedGrid, PotentialPair, PotentialSpec,
};

pub type C64 = num_complex::Complex64;
