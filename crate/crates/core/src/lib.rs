//! Taylor-Hood (P2/P1) finite elements for the incompressible Navier-Stokes
//! equations with modular sparse grad-div stabilization.
//!
//! The pipeline is: build a [`mesh::SimplicialMesh`], a
//! [`fem::TaylorHoodSpace`] on it, assemble an [`assembly::OperatorSet`], then
//! advance a [`schemes::FlowState`] with one of the [`schemes::Scheme`]s while
//! [`diagnostics`] records energies and divergence norms per step.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod conditioning;
pub mod diagnostics;
pub mod fem;
pub mod forcing;
pub mod mesh;
pub mod par;
pub mod schemes;
pub mod sparse;

pub use assembly::OperatorSet;
pub use fem::TaylorHoodSpace;
pub use mesh::SimplicialMesh;
pub use sparse::CsrMatrix;
