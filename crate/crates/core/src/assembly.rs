//! Assembly of the finite element operators.
//!
//! Cell contributions are computed independently (in parallel when the
//! `parallel` feature is on) and scattered into the global matrices in cell
//! order, so serial and parallel assembly produce identical matrices.
//!
//! Velocity matrices act on component-major coefficient vectors. The scalar
//! P2 blocks are kept alongside since Step 2 and the conditioning estimates
//! work component by component.

use crate::fem::{CellTabulation, FemError, TaylorHoodSpace};
use crate::forcing::Forcing;
use crate::par::Execution;
use crate::sparse::{CsrMatrix, SolveError};

/// All time-independent operators on a Taylor-Hood space.
#[derive(Clone, Debug)]
pub struct OperatorSet {
    pub dim: usize,
    pub n_scalar: usize,
    /// Scalar P2 mass matrix (φᵢ, φⱼ).
    pub mass_scalar: CsrMatrix,
    /// Scalar stiffness (∇φᵢ, ∇φⱼ).
    pub stiffness_scalar: CsrMatrix,
    /// (∂_c φᵢ, ∂_c φⱼ) for each axis c.
    pub axis_stiffness: Vec<CsrMatrix>,
    /// Velocity mass (u, v).
    pub mass: CsrMatrix,
    /// Velocity stiffness (∇u, ∇v), not scaled by ν.
    pub stiffness: CsrMatrix,
    /// Pressure × velocity coupling (∇·u, q).
    pub div: CsrMatrix,
    /// (∇·u, ∇·v).
    pub graddiv_full: CsrMatrix,
    /// Σ_c (∂_c u_c, ∂_c v_c); block diagonal across components.
    pub graddiv_diag: CsrMatrix,
    /// ∫ q_i, the pressure mean functional.
    pub pressure_mean: Vec<f64>,
}

impl OperatorSet {
    pub fn assemble(space: &TaylorHoodSpace) -> Result<Self, FemError> {
        Self::assemble_with(space, Execution::default())
    }

    pub fn assemble_with(space: &TaylorHoodSpace, exec: Execution) -> Result<Self, FemError> {
        let dim = space.dim();
        let ns = space.n_scalar();
        let nu = space.n_velocity();
        let np = space.n_pressure();
        let n2 = space.n_p2_local();
        let n1 = space.n_p1_local();
        let locals = exec.map(space.mesh().num_cells(), |c| local_static(space, c));

        let mut mass_t = Vec::new();
        let mut axis_t: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); dim];
        let mut gfull_t = Vec::new();
        let mut div_t = Vec::new();
        let mut pressure_mean = vec![0.0; np];
        for (c, local) in locals.into_iter().enumerate() {
            let local = local?;
            let dofs = space.cell_p2_dofs(c);
            let pdofs = space.cell_p1_dofs(c);
            for i in 0..n2 {
                for j in 0..n2 {
                    mass_t.push((dofs[i], dofs[j], local.mass[i * n2 + j]));
                    for a in 0..dim {
                        for b in 0..dim {
                            let v = local.deriv[((a * dim + b) * n2 + i) * n2 + j];
                            gfull_t.push((a * ns + dofs[i], b * ns + dofs[j], v));
                            if a == b {
                                axis_t[a].push((dofs[i], dofs[j], v));
                            }
                        }
                    }
                }
            }
            for q in 0..n1 {
                pressure_mean[pdofs[q]] += local.p1_mean[q];
                for comp in 0..dim {
                    for j in 0..n2 {
                        div_t.push((pdofs[q], comp * ns + dofs[j], local.div[(q * dim + comp) * n2 + j]));
                    }
                }
            }
        }

        let mass_scalar = CsrMatrix::from_triplets(ns, ns, &mass_t);
        let axis_stiffness: Vec<CsrMatrix> = axis_t
            .iter()
            .map(|t| CsrMatrix::from_triplets(ns, ns, t))
            .collect();
        let terms: Vec<(f64, &CsrMatrix)> = axis_stiffness.iter().map(|m| (1.0, m)).collect();
        let stiffness_scalar = CsrMatrix::linear_combination(&terms);
        let mass = block_diagonal(&vec![&mass_scalar; dim]);
        let stiffness = block_diagonal(&vec![&stiffness_scalar; dim]);
        let graddiv_diag = block_diagonal(&axis_stiffness.iter().collect::<Vec<_>>());
        let graddiv_full = CsrMatrix::from_triplets(nu, nu, &gfull_t);
        let div = CsrMatrix::from_triplets(np, nu, &div_t);

        Ok(Self {
            dim,
            n_scalar: ns,
            mass_scalar,
            stiffness_scalar,
            axis_stiffness,
            mass,
            stiffness,
            div,
            graddiv_full,
            graddiv_diag,
            pressure_mean,
        })
    }

    pub fn n_velocity(&self) -> usize {
        self.dim * self.n_scalar
    }

    pub fn n_pressure(&self) -> usize {
        self.pressure_mean.len()
    }

    /// Quadratic form of 𝒜 = (γ+α)·G*.
    pub fn form_a(&self, v: &[f64], gamma: f64, alpha: f64) -> f64 {
        (gamma + alpha) * self.graddiv_diag.quadratic_form(v)
    }

    /// Bilinear form ℬ(u, v) = (γ+α)(G* u, v) − γ(∇·u, ∇·v).
    pub fn form_b(&self, u: &[f64], v: &[f64], gamma: f64, alpha: f64) -> f64 {
        (gamma + alpha) * self.graddiv_diag.bilinear(v, u) - gamma * self.graddiv_full.bilinear(v, u)
    }

    /// Bilinear form ℬ*(u, v) = ℬ(u, v) − ((α − 2γ)/3)(∇·u, ∇·v).
    pub fn form_bstar(&self, u: &[f64], v: &[f64], gamma: f64, alpha: f64) -> f64 {
        self.form_b(u, v, gamma, alpha) - (alpha - 2.0 * gamma) / 3.0 * self.graddiv_full.bilinear(v, u)
    }
}

struct LocalStatic {
    mass: Vec<f64>,
    /// ∫ ∂_a φᵢ ∂_b φⱼ, `[((a*dim + b)*n2 + i)*n2 + j]`
    deriv: Vec<f64>,
    /// ∫ ψ_q ∂_c φⱼ, `[(q*dim + c)*n2 + j]`
    div: Vec<f64>,
    p1_mean: Vec<f64>,
}

fn local_static(space: &TaylorHoodSpace, c: usize) -> Result<LocalStatic, FemError> {
    let tab = space.tabulate(c)?;
    let dim = space.dim();
    let (n2, n1) = (tab.n_p2, tab.n_p1);
    let mut out = LocalStatic {
        mass: vec![0.0; n2 * n2],
        deriv: vec![0.0; dim * dim * n2 * n2],
        div: vec![0.0; n1 * dim * n2],
        p1_mean: vec![0.0; n1],
    };
    for q in 0..tab.num_points {
        let w = tab.weights[q];
        let phi = &tab.p2_values[q * n2..(q + 1) * n2];
        let grad = &tab.p2_grads[q * n2..(q + 1) * n2];
        let psi = &tab.p1_values[q * n1..(q + 1) * n1];
        for i in 0..n2 {
            for j in 0..n2 {
                out.mass[i * n2 + j] += w * phi[i] * phi[j];
                for a in 0..dim {
                    for b in 0..dim {
                        out.deriv[((a * dim + b) * n2 + i) * n2 + j] += w * grad[i][a] * grad[j][b];
                    }
                }
            }
        }
        for r in 0..n1 {
            out.p1_mean[r] += w * psi[r];
            for comp in 0..dim {
                for j in 0..n2 {
                    out.div[(r * dim + comp) * n2 + j] += w * psi[r] * grad[j][comp];
                }
            }
        }
    }
    Ok(out)
}

/// Block-diagonal matrix from square blocks.
pub fn block_diagonal(blocks: &[&CsrMatrix]) -> CsrMatrix {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    row_ptr.push(0);
    let mut offset = 0;
    for b in blocks {
        for i in 0..b.nrows() {
            let (cols, vals) = b.row(i);
            col_idx.extend(cols.iter().map(|j| j + offset));
            values.extend_from_slice(vals);
            row_ptr.push(col_idx.len());
        }
        offset += b.nrows();
    }
    CsrMatrix::from_raw(n, n, row_ptr, col_idx, values)
}

pub fn assemble_mass(space: &TaylorHoodSpace) -> Result<CsrMatrix, FemError> {
    Ok(OperatorSet::assemble(space)?.mass)
}

pub fn assemble_stiffness(space: &TaylorHoodSpace) -> Result<CsrMatrix, FemError> {
    Ok(OperatorSet::assemble(space)?.stiffness)
}

pub fn assemble_div_coupling(space: &TaylorHoodSpace) -> Result<CsrMatrix, FemError> {
    Ok(OperatorSet::assemble(space)?.div)
}

pub fn assemble_graddiv_full(space: &TaylorHoodSpace) -> Result<CsrMatrix, FemError> {
    Ok(OperatorSet::assemble(space)?.graddiv_full)
}

pub fn assemble_graddiv_diag(space: &TaylorHoodSpace) -> Result<CsrMatrix, FemError> {
    Ok(OperatorSet::assemble(space)?.graddiv_diag)
}

/// Scalar skew convection matrix ½[(w·∇φⱼ, φᵢ) − (w·∇φᵢ, φⱼ)].
///
/// The pattern is that of the scalar P2 mass matrix (explicit zeros are
/// kept), so values can be mapped into any matrix containing that pattern.
pub fn assemble_convection_scalar(
    space: &TaylorHoodSpace,
    w: &[f64],
    exec: Execution,
) -> Result<CsrMatrix, FemError> {
    let tabs = tabulate_all(space, exec)?;
    Ok(convection_scalar_cached(space, &tabs, w, exec))
}

/// Tabulations of every cell, for operators reassembled each step.
pub fn tabulate_all(space: &TaylorHoodSpace, exec: Execution) -> Result<Vec<CellTabulation>, FemError> {
    exec.map(space.mesh().num_cells(), |c| space.tabulate(c)).into_iter().collect()
}

/// [`assemble_convection_scalar`] from precomputed tabulations.
pub fn convection_scalar_cached(
    space: &TaylorHoodSpace,
    tabs: &[CellTabulation],
    w: &[f64],
    exec: Execution,
) -> CsrMatrix {
    let dim = space.dim();
    let ns = space.n_scalar();
    let n2 = space.n_p2_local();
    assert_eq!(w.len(), space.n_velocity());
    let locals = exec.map(tabs.len(), |c| {
        let tab = &tabs[c];
        let dofs = space.cell_p2_dofs(c);
        let mut n = vec![0.0; n2 * n2];
        let mut wq = [0.0; 3];
        for q in 0..tab.num_points {
            let phi = &tab.p2_values[q * n2..(q + 1) * n2];
            let grad = &tab.p2_grads[q * n2..(q + 1) * n2];
            for comp in 0..dim {
                wq[comp] = (0..n2).map(|i| w[comp * ns + dofs[i]] * phi[i]).sum();
            }
            let wt = tab.weights[q];
            for j in 0..n2 {
                let adv = (0..dim).map(|comp| wq[comp] * grad[j][comp]).sum::<f64>() * wt;
                for i in 0..n2 {
                    n[i * n2 + j] += adv * phi[i];
                }
            }
        }
        let mut skew = vec![0.0; n2 * n2];
        for i in 0..n2 {
            for j in 0..n2 {
                skew[i * n2 + j] = 0.5 * (n[i * n2 + j] - n[j * n2 + i]);
            }
        }
        skew
    });
    let mut trip = Vec::with_capacity(locals.len() * n2 * n2);
    for (c, local) in locals.into_iter().enumerate() {
        let dofs = space.cell_p2_dofs(c);
        for i in 0..n2 {
            for j in 0..n2 {
                trip.push((dofs[i], dofs[j], local[i * n2 + j]));
            }
        }
    }
    CsrMatrix::from_triplets(ns, ns, &trip)
}

/// Velocity skew convection matrix C(w), block diagonal across components.
pub fn assemble_convection(space: &TaylorHoodSpace, w: &[f64]) -> Result<CsrMatrix, FemError> {
    let scalar = assemble_convection_scalar(space, w, Execution::default())?;
    Ok(block_diagonal(&vec![&scalar; space.dim()]))
}

/// Load vector (f(·, t), v) over velocity test functions.
pub fn assemble_load(
    space: &TaylorHoodSpace,
    f: &dyn Forcing,
    t: f64,
    exec: Execution,
) -> Result<Vec<f64>, FemError> {
    if f.is_zero() {
        return Ok(vec![0.0; space.n_velocity()]);
    }
    let tabs = tabulate_all(space, exec)?;
    load_cached(space, &tabs, f, t, exec)
}

/// [`assemble_load`] from precomputed tabulations.
pub fn load_cached(
    space: &TaylorHoodSpace,
    tabs: &[CellTabulation],
    f: &dyn Forcing,
    t: f64,
    exec: Execution,
) -> Result<Vec<f64>, FemError> {
    let dim = space.dim();
    let ns = space.n_scalar();
    let n2 = space.n_p2_local();
    let mut load = vec![0.0; space.n_velocity()];
    if f.is_zero() {
        return Ok(load);
    }
    let locals = exec.map(tabs.len(), |c| -> Result<Vec<f64>, FemError> {
        let tab = &tabs[c];
        let mut local = vec![0.0; dim * n2];
        for q in 0..tab.num_points {
            let fq = f.eval(tab.points[q], t);
            for comp in 0..dim {
                if !fq[comp].is_finite() {
                    return Err(FemError::NonFinite {
                        node: c,
                        component: comp,
                    });
                }
            }
            let phi = &tab.p2_values[q * n2..(q + 1) * n2];
            for comp in 0..dim {
                let s = tab.weights[q] * fq[comp];
                for i in 0..n2 {
                    local[comp * n2 + i] += s * phi[i];
                }
            }
        }
        Ok(local)
    });
    for (c, local) in locals.into_iter().enumerate() {
        let local = local?;
        let dofs = space.cell_p2_dofs(c);
        for comp in 0..dim {
            for i in 0..n2 {
                load[comp * ns + dofs[i]] += local[comp * n2 + i];
            }
        }
    }
    Ok(load)
}

/// Symmetric elimination of homogeneous Dirichlet conditions: the listed
/// rows and columns are zeroed, their diagonal set to one and the matching
/// right-hand side entries set to zero.
pub fn apply_dirichlet(
    matrix: &CsrMatrix,
    rhs: &[f64],
    dirichlet_dofs: &[usize],
) -> Result<(CsrMatrix, Vec<f64>), SolveError> {
    let n = matrix.nrows();
    if matrix.ncols() != n {
        return Err(SolveError::NotSquare {
            nrows: n,
            ncols: matrix.ncols(),
        });
    }
    if rhs.len() != n {
        return Err(SolveError::ShapeMismatch {
            expected: n,
            found: rhs.len(),
        });
    }
    let mask = dirichlet_mask(n, dirichlet_dofs)?;
    let mut rhs = rhs.to_vec();
    for (i, fixed) in mask.iter().enumerate() {
        if *fixed {
            rhs[i] = 0.0;
        }
    }
    Ok((eliminate(matrix, &mask), rhs))
}

pub(crate) fn dirichlet_mask(n: usize, dofs: &[usize]) -> Result<Vec<bool>, SolveError> {
    let mut mask = vec![false; n];
    for &d in dofs {
        if d >= n {
            return Err(SolveError::IndexOutOfRange { index: d, dim: n });
        }
        mask[d] = true;
    }
    Ok(mask)
}

/// Zeroes masked rows/columns and puts 1 on their diagonal.
pub(crate) fn eliminate(matrix: &CsrMatrix, mask: &[bool]) -> CsrMatrix {
    let n = matrix.nrows();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(matrix.nnz());
    let mut values = Vec::with_capacity(matrix.nnz());
    row_ptr.push(0);
    for i in 0..n {
        if mask[i] {
            col_idx.push(i);
            values.push(1.0);
        } else {
            let (cols, vals) = matrix.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if !mask[j] {
                    col_idx.push(j);
                    values.push(v);
                }
            }
        }
        row_ptr.push(col_idx.len());
    }
    CsrMatrix::from_raw(n, n, row_ptr, col_idx, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::SimplicialMesh;

    fn square(n: usize) -> TaylorHoodSpace {
        TaylorHoodSpace::new(SimplicialMesh::unit_square(n))
    }

    #[test]
    fn mass_of_constant_field() {
        let s = square(2);
        let ops = OperatorSet::assemble(&s).unwrap();
        let ones = vec![1.0; s.n_velocity()];
        assert!((ops.mass.quadratic_form(&ones) - 2.0).abs() < 1e-13);

        let s = TaylorHoodSpace::new(SimplicialMesh::unit_cube(1));
        let ops = OperatorSet::assemble(&s).unwrap();
        let ones = vec![1.0; s.n_velocity()];
        assert!((ops.mass.quadratic_form(&ones) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn stiffness_kernel_and_linear_field() {
        let s = square(3);
        let ops = OperatorSet::assemble(&s).unwrap();
        let ones = vec![1.0; s.n_velocity()];
        let kc = ops.stiffness.spmv(&ones).unwrap();
        assert!(kc.iter().all(|v| v.abs() < 1e-12));
        let u = s.interpolate(|x, _| [x[0], 0.0, 0.0], 0.0).unwrap();
        assert!((ops.stiffness.quadratic_form(&u) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn divergence_of_linear_fields() {
        let s = square(3);
        let ops = OperatorSet::assemble(&s).unwrap();
        let u = s.interpolate(|x, _| [x[0], -x[1], 0.0], 0.0).unwrap();
        assert!(ops.div.spmv(&u).unwrap().iter().all(|v| v.abs() < 1e-12));
        assert!(ops.graddiv_full.quadratic_form(&u).abs() < 1e-13);

        let u = s.interpolate(|x, _| [x[0], x[1], 0.0], 0.0).unwrap();
        let total: f64 = ops.div.spmv(&u).unwrap().iter().sum();
        assert!((total - 2.0).abs() < 1e-12);
        assert!((ops.graddiv_full.quadratic_form(&u) - 4.0).abs() < 1e-12);
        assert!((ops.graddiv_diag.quadratic_form(&u) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn full_and_diag_agree_on_single_component_fields() {
        let s = square(2);
        let ops = OperatorSet::assemble(&s).unwrap();
        let u = s.interpolate(|x, _| [x[0] * x[0] - 0.3 * x[0], 0.0, 0.0], 0.0).unwrap();
        let (g, gd) = (ops.graddiv_full.quadratic_form(&u), ops.graddiv_diag.quadratic_form(&u));
        assert!((g - gd).abs() < 1e-13 * g.max(1.0));
    }

    #[test]
    fn operators_symmetric_and_diag_block_diagonal() {
        let s = TaylorHoodSpace::new(SimplicialMesh::unit_cube(2));
        let ops = OperatorSet::assemble(&s).unwrap();
        for m in [&ops.mass, &ops.stiffness, &ops.graddiv_full, &ops.graddiv_diag] {
            assert!(m.asymmetry() < 1e-13);
        }
        let ns = s.n_scalar();
        for i in 0..ops.graddiv_diag.nrows() {
            for &j in ops.graddiv_diag.row(i).0 {
                assert_eq!(i / ns, j / ns);
            }
        }
    }

    #[test]
    fn convection_is_skew() {
        let s = square(2);
        let w = s.interpolate(|x, _| [x[1] * (1.0 - x[1]), x[0] * x[0], 0.0], 0.0).unwrap();
        let c = assemble_convection(&s, &w).unwrap();
        let sum = CsrMatrix::linear_combination(&[(1.0, &c), (1.0, &c.transpose())]);
        assert_eq!(sum.max_abs(), 0.0);
        let zero = assemble_convection(&s, &vec![0.0; s.n_velocity()]).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn load_of_constant_force() {
        let s = square(2);
        let f = |_x: [f64; 3], _t: f64| [1.0, 0.0, 0.0];
        let load = assemble_load(&s, &f, 0.0, Execution::Serial).unwrap();
        let ns = s.n_scalar();
        let x_part: f64 = load[..ns].iter().sum();
        assert!((x_part - 1.0).abs() < 1e-14);
        assert!(load[ns..].iter().all(|v| *v == 0.0));
        let zero = crate::forcing::BuiltinForcing::Zero;
        assert!(assemble_load(&s, &zero, 0.0, Execution::Serial).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn load_rejects_non_finite() {
        let s = square(1);
        let f = |_x: [f64; 3], _t: f64| [f64::NAN, 0.0, 0.0];
        assert!(assemble_load(&s, &f, 0.0, Execution::Serial).is_err());
    }

    #[test]
    fn dirichlet_on_identity() {
        let a = CsrMatrix::identity(4);
        let (m, rhs) = apply_dirichlet(&a, &[1.0, 2.0, 3.0, 4.0], &[1, 3]).unwrap();
        assert_eq!(m, a);
        assert_eq!(rhs, vec![1.0, 0.0, 3.0, 0.0]);
        assert!(apply_dirichlet(&a, &[0.0; 4], &[4]).is_err());
    }

    #[test]
    fn parallel_matches_serial() {
        let s = TaylorHoodSpace::new(SimplicialMesh::unit_cube(2));
        let a = OperatorSet::assemble_with(&s, Execution::Serial).unwrap();
        let b = OperatorSet::assemble_with(&s, Execution::Parallel).unwrap();
        assert_eq!(a.graddiv_full, b.graddiv_full);
        assert_eq!(a.mass, b.mass);
        assert_eq!(a.div, b.div);
    }
}
