//! Reduction of an `n`-letter mixture to a low-dimensional subspace: letter
//! isotropy, second-moment estimation and truncation, an inscribed-ellipsoid
//! basis, and the final map back onto the simplex.

mod adjust;
mod basis;
mod ellipsoid;
mod isotropy;
mod matrix;
mod reduction;

pub use adjust::{final_adjust, final_adjust_report, project_to_q, AdjustReport};
pub use basis::{build_basis, build_basis_from_span, verify_basis, Basis, BasisAxis, BasisReport};
pub use ellipsoid::{mvee_centered, CenteredEllipsoid, MVEE_TOL};
pub use isotropy::{apply_isotropy, build_isotropy_map, estimate_r, invert_isotropy, IsotropicBatch, IsotropyMap};
pub use matrix::{estimate_a, exact_a, sorted_eigen, spectral_truncate, Truncation};
pub use reduction::{reduce, split_matrix, Reduction, ReductionParams};
