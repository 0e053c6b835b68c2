//! Taylor-Hood P2/P1 spaces on simplicial meshes.
//!
//! Scalar P2 nodes are numbered vertices first (same index as the mesh
//! vertex), then edge midpoints in lexicographic order of the sorted vertex
//! pair. Velocity DOFs are component-major: all x-DOFs, then y, then z.
//! Pressure DOFs are the mesh vertices.

mod quadrature;

use thiserror::Error;

pub use quadrature::{gauss_legendre_unit, QuadratureRule};

use crate::mesh::SimplicialMesh;

/// Minimum polynomial degree integrated exactly by the cell quadrature.
pub const QUADRATURE_DEGREE: usize = 5;

/// Local edges of a triangle, as pairs of local vertex indices.
pub const TRIANGLE_EDGES: [[usize; 2]; 3] = [[0, 1], [1, 2], [0, 2]];
/// Local edges of a tetrahedron.
pub const TET_EDGES: [[usize; 2]; 6] = [[0, 1], [1, 2], [0, 2], [0, 3], [1, 3], [2, 3]];

#[derive(Debug, Error, PartialEq)]
pub enum FemError {
    #[error("cell {cell} is degenerate (jacobian determinant {det:e})")]
    DegenerateCell { cell: usize, det: f64 },
    #[error("non-finite value at node {node} (component {component})")]
    NonFinite { node: usize, component: usize },
    #[error("cell index {cell} out of range ({num_cells} cells)")]
    CellOutOfRange { cell: usize, num_cells: usize },
}

pub fn local_edges(dim: usize) -> &'static [[usize; 2]] {
    if dim == 2 {
        &TRIANGLE_EDGES
    } else {
        &TET_EDGES
    }
}

/// Values of the local P2 basis at barycentric point `lam`.
pub fn p2_values(dim: usize, lam: &[f64; 4], out: &mut [f64]) {
    for i in 0..=dim {
        out[i] = lam[i] * (2.0 * lam[i] - 1.0);
    }
    for (e, [a, b]) in local_edges(dim).iter().enumerate() {
        out[dim + 1 + e] = 4.0 * lam[*a] * lam[*b];
    }
}

/// Physical gradients of the local P2 basis given barycentric gradients.
pub fn p2_gradients(dim: usize, lam: &[f64; 4], grad_lam: &[[f64; 3]; 4], out: &mut [[f64; 3]]) {
    for i in 0..=dim {
        let s = 4.0 * lam[i] - 1.0;
        out[i] = [s * grad_lam[i][0], s * grad_lam[i][1], s * grad_lam[i][2]];
    }
    for (e, [a, b]) in local_edges(dim).iter().enumerate() {
        let (la, lb) = (lam[*a], lam[*b]);
        let (ga, gb) = (grad_lam[*a], grad_lam[*b]);
        out[dim + 1 + e] = [
            4.0 * (la * gb[0] + lb * ga[0]),
            4.0 * (la * gb[1] + lb * ga[1]),
            4.0 * (la * gb[2] + lb * ga[2]),
        ];
    }
}

/// Affine geometry of one cell.
#[derive(Clone, Debug)]
pub struct CellGeometry {
    /// |det J|; the cell volume is |det J| / d!.
    pub abs_det: f64,
    /// ∇λᵢ, constant on the cell.
    pub grad_lambda: [[f64; 3]; 4],
    pub origin: [f64; 3],
    /// Columns p_i − p_0.
    pub jac: [[f64; 3]; 3],
}

impl CellGeometry {
    pub fn new(dim: usize, pts: &[[f64; 3]]) -> Option<Self> {
        let origin = pts[0];
        let mut jac = [[0.0; 3]; 3];
        for i in 0..dim {
            for k in 0..dim {
                jac[k][i] = pts[i + 1][k] - origin[k];
            }
        }
        let mut grad_lambda = [[0.0; 3]; 4];
        let det;
        if dim == 2 {
            det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
            if det == 0.0 || !det.is_finite() {
                return None;
            }
            // rows of J⁻¹
            grad_lambda[1] = [jac[1][1] / det, -jac[0][1] / det, 0.0];
            grad_lambda[2] = [-jac[1][0] / det, jac[0][0] / det, 0.0];
        } else {
            let j = &jac;
            let cof = |r: usize, c: usize| {
                let (r1, r2) = ((r + 1) % 3, (r + 2) % 3);
                let (c1, c2) = ((c + 1) % 3, (c + 2) % 3);
                j[r1][c1] * j[r2][c2] - j[r1][c2] * j[r2][c1]
            };
            det = j[0][0] * cof(0, 0) + j[0][1] * cof(0, 1) + j[0][2] * cof(0, 2);
            if det == 0.0 || !det.is_finite() {
                return None;
            }
            // (J⁻¹)_{ik} = cof(k, i) / det
            for i in 0..3 {
                grad_lambda[i + 1] = [cof(0, i) / det, cof(1, i) / det, cof(2, i) / det];
            }
        }
        for k in 0..3 {
            grad_lambda[0][k] = -(1..=dim).map(|i| grad_lambda[i][k]).sum::<f64>();
        }
        Some(Self {
            abs_det: det.abs(),
            grad_lambda,
            origin,
            jac,
        })
    }

    pub fn map(&self, dim: usize, lam: &[f64; 4]) -> [f64; 3] {
        let mut x = self.origin;
        for i in 0..dim {
            for k in 0..3 {
                x[k] += self.jac[k][i] * lam[i + 1];
            }
        }
        x
    }
}

/// Basis data at the quadrature points of one cell.
#[derive(Clone, Debug)]
pub struct CellTabulation {
    pub num_points: usize,
    pub n_p2: usize,
    pub n_p1: usize,
    /// Physical weights (reference weight × |det J|).
    pub weights: Vec<f64>,
    pub points: Vec<[f64; 3]>,
    /// `[q * n_p2 + i]`
    pub p2_values: Vec<f64>,
    pub p2_grads: Vec<[f64; 3]>,
    /// `[q * n_p1 + i]`
    pub p1_values: Vec<f64>,
    /// Constant on the cell, `[i]`.
    pub p1_grads: Vec<[f64; 3]>,
}

/// Discrete Taylor-Hood pair on a mesh.
#[derive(Clone, Debug)]
pub struct TaylorHoodSpace {
    mesh: SimplicialMesh,
    edges: Vec<[usize; 2]>,
    /// Scalar P2 DOFs per cell, local order: vertices then local edges.
    cell_dofs: Vec<usize>,
    node_coords: Vec<[f64; 3]>,
    boundary_node: Vec<bool>,
    dirichlet_velocity: Vec<usize>,
    quadrature: QuadratureRule,
    /// Reference basis values at quadrature points, `[q * n_p2 + i]`.
    ref_p2: Vec<f64>,
}

impl TaylorHoodSpace {
    pub fn new(mesh: SimplicialMesh) -> Self {
        let dim = mesh.dim();
        let nv = mesh.num_vertices();
        let edges = mesh.edges();
        let edge_index = |a: usize, b: usize| -> usize {
            let key = [a.min(b), a.max(b)];
            nv + edges.binary_search(&key).expect("edge of a cell is a mesh edge")
        };
        let n_local = n_p2_local(dim);
        let mut cell_dofs = Vec::with_capacity(mesh.num_cells() * n_local);
        for cell in mesh.cells() {
            cell_dofs.extend_from_slice(cell);
            for [a, b] in local_edges(dim) {
                cell_dofs.push(edge_index(cell[*a], cell[*b]));
            }
        }

        let mut node_coords = mesh.vertices().to_vec();
        for [a, b] in &edges {
            let (p, q) = (mesh.vertices()[*a], mesh.vertices()[*b]);
            node_coords.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1]), 0.5 * (p[2] + q[2])]);
        }

        // no-slip on every boundary facet
        let mut boundary_node = vec![false; node_coords.len()];
        for facet in mesh.boundary_facets() {
            let v = &facet.vertices;
            for (i, &a) in v.iter().enumerate() {
                boundary_node[a] = true;
                for &b in &v[i + 1..] {
                    boundary_node[edge_index(a, b)] = true;
                }
            }
        }
        let n_scalar = node_coords.len();
        let dirichlet_velocity = (0..dim)
            .flat_map(|c| {
                let boundary_node = &boundary_node;
                (0..n_scalar).filter(move |&i| boundary_node[i]).map(move |i| c * n_scalar + i)
            })
            .collect();

        let quadrature = QuadratureRule::simplex(dim, QUADRATURE_DEGREE);
        let mut ref_p2 = vec![0.0; quadrature.len() * n_local];
        for (q, lam) in quadrature.points.iter().enumerate() {
            p2_values(dim, lam, &mut ref_p2[q * n_local..(q + 1) * n_local]);
        }

        Self {
            mesh,
            edges,
            cell_dofs,
            node_coords,
            boundary_node,
            dirichlet_velocity,
            quadrature,
            ref_p2,
        }
    }

    pub fn mesh(&self) -> &SimplicialMesh {
        &self.mesh
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim()
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    /// Scalar P2 DOFs (vertices + edges).
    pub fn n_scalar(&self) -> usize {
        self.node_coords.len()
    }

    pub fn n_velocity(&self) -> usize {
        self.dim() * self.n_scalar()
    }

    pub fn n_pressure(&self) -> usize {
        self.mesh.num_vertices()
    }

    pub fn n_p2_local(&self) -> usize {
        n_p2_local(self.dim())
    }

    pub fn n_p1_local(&self) -> usize {
        self.dim() + 1
    }

    /// Scalar P2 DOFs of cell `c`.
    pub fn cell_p2_dofs(&self, c: usize) -> &[usize] {
        let n = self.n_p2_local();
        &self.cell_dofs[c * n..(c + 1) * n]
    }

    /// Pressure DOFs of cell `c` (its vertices).
    pub fn cell_p1_dofs(&self, c: usize) -> &[usize] {
        self.mesh.cell(c)
    }

    pub fn node_coords(&self) -> &[[f64; 3]] {
        &self.node_coords
    }

    pub fn is_boundary_node(&self, i: usize) -> bool {
        self.boundary_node[i]
    }

    /// Scalar P2 nodes not on the boundary, ascending.
    pub fn interior_scalar_nodes(&self) -> Vec<usize> {
        (0..self.n_scalar()).filter(|&i| !self.boundary_node[i]).collect()
    }

    /// Sorted global velocity DOFs fixed by the no-slip condition.
    pub fn dirichlet_velocity_dofs(&self) -> &[usize] {
        &self.dirichlet_velocity
    }

    pub fn quadrature(&self) -> &QuadratureRule {
        &self.quadrature
    }

    pub fn geometry(&self, c: usize) -> Result<CellGeometry, FemError> {
        if c >= self.mesh.num_cells() {
            return Err(FemError::CellOutOfRange {
                cell: c,
                num_cells: self.mesh.num_cells(),
            });
        }
        let pts: Vec<[f64; 3]> = self.mesh.cell(c).iter().map(|&v| self.mesh.vertices()[v]).collect();
        CellGeometry::new(self.dim(), &pts).ok_or(FemError::DegenerateCell {
            cell: c,
            det: 0.0,
        })
    }

    /// Basis values and physical gradients at the quadrature points of `c`.
    pub fn tabulate(&self, c: usize) -> Result<CellTabulation, FemError> {
        let geo = self.geometry(c)?;
        let dim = self.dim();
        let (n2, n1) = (self.n_p2_local(), self.n_p1_local());
        let nq = self.quadrature.len();
        let mut tab = CellTabulation {
            num_points: nq,
            n_p2: n2,
            n_p1: n1,
            weights: self.quadrature.weights.iter().map(|w| w * geo.abs_det).collect(),
            points: Vec::with_capacity(nq),
            p2_values: self.ref_p2.clone(),
            p2_grads: vec![[0.0; 3]; nq * n2],
            p1_values: Vec::with_capacity(nq * n1),
            p1_grads: geo.grad_lambda[..n1].to_vec(),
        };
        for (q, lam) in self.quadrature.points.iter().enumerate() {
            tab.points.push(geo.map(dim, lam));
            p2_gradients(dim, lam, &geo.grad_lambda, &mut tab.p2_grads[q * n2..(q + 1) * n2]);
            tab.p1_values.extend_from_slice(&lam[..n1]);
        }
        Ok(tab)
    }

    /// Nodal interpolant of `g(x, t)`, component-major velocity coefficients.
    pub fn interpolate<G>(&self, g: G, t: f64) -> Result<Vec<f64>, FemError>
    where
        G: Fn([f64; 3], f64) -> [f64; 3],
    {
        let ns = self.n_scalar();
        let mut u = vec![0.0; self.n_velocity()];
        for (i, &x) in self.node_coords.iter().enumerate() {
            let val = g(x, t);
            for c in 0..self.dim() {
                if !val[c].is_finite() {
                    return Err(FemError::NonFinite { node: i, component: c });
                }
                u[c * ns + i] = val[c];
            }
        }
        Ok(u)
    }

    /// Evaluates a velocity field at barycentric point `lam` of cell `c`.
    pub fn evaluate_velocity(&self, u: &[f64], c: usize, lam: &[f64; 4]) -> [f64; 3] {
        let dim = self.dim();
        let ns = self.n_scalar();
        let mut phi = vec![0.0; self.n_p2_local()];
        p2_values(dim, lam, &mut phi);
        let mut out = [0.0; 3];
        for (i, &dof) in self.cell_p2_dofs(c).iter().enumerate() {
            for comp in 0..dim {
                out[comp] += u[comp * ns + dof] * phi[i];
            }
        }
        out
    }

    /// Zeroes the no-slip DOFs of a velocity vector.
    pub fn zero_boundary(&self, u: &mut [f64]) {
        for &d in &self.dirichlet_velocity {
            u[d] = 0.0;
        }
    }
}

fn n_p2_local(dim: usize) -> usize {
    (dim + 1) * (dim + 2) / 2
}

/// Builds the Taylor-Hood space on `mesh`.
pub fn build_taylor_hood(mesh: SimplicialMesh) -> TaylorHoodSpace {
    TaylorHoodSpace::new(mesh)
}
