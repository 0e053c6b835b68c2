//! Spectral condition number of the Step-2 component block.

use crate::assembly::OperatorSet;
use crate::fem::TaylorHoodSpace;
use crate::sparse::{extreme_eigenvalue_estimates, CsrMatrix, EigenOptions, LuFactorization, SolveError, SymbolicLu};

#[derive(Clone, Debug, PartialEq)]
pub struct ConditioningReport {
    pub h: f64,
    pub k: f64,
    pub gamma_plus_alpha: f64,
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub cond2: f64,
    pub bound_shape: f64,
    /// False when either eigenvalue iteration hit its cap.
    pub converged: bool,
}

/// (h² + s) / ((1 + s) h²) with s = k(γ+α).
pub fn bound_shape(h: f64, k_gamma_alpha: f64) -> f64 {
    (h * h + k_gamma_alpha) / ((1.0 + k_gamma_alpha) * h * h)
}

/// M₁ + s·Kₓ restricted to interior scalar nodes.
pub fn step2_block(space: &TaylorHoodSpace, ops: &OperatorSet, k_gamma_alpha: f64) -> CsrMatrix {
    let full = CsrMatrix::linear_combination(&[(1.0, &ops.mass_scalar), (k_gamma_alpha, &ops.axis_stiffness[0])]);
    full.principal_submatrix(&space.interior_scalar_nodes())
}

/// Estimates cond₂ of the x-component Step-2 block for time step `k`.
pub fn estimate_cond2(
    space: &TaylorHoodSpace,
    ops: &OperatorSet,
    k: f64,
    gamma_plus_alpha: f64,
    options: EigenOptions,
) -> Result<ConditioningReport, SolveError> {
    let s = k * gamma_plus_alpha;
    let a = step2_block(space, ops, s);
    let lu = LuFactorization::factor(&SymbolicLu::analyze(&a), &a)?;
    let ev = extreme_eigenvalue_estimates(&a, Some(&lu), options)?;
    let h = space.mesh().h();
    Ok(ConditioningReport {
        h,
        k,
        gamma_plus_alpha,
        lambda_max: ev.max.value,
        lambda_min: ev.min.value,
        cond2: ev.max.value / ev.min.value,
        bound_shape: bound_shape(h, s),
        converged: ev.converged(),
    })
}
