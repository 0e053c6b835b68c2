//! Dense brute-force reference operators for tiny meshes.
//!
//! Basis functions are polynomials in barycentric coordinates and every
//! integral is evaluated exactly with
//! ∫_T λ^a = d! |T| Π aₘ! / (d + |a|)!.
//! No quadrature, no sparse storage, no Dirichlet trick.

#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::BTreeMap;

use graddiv::schemes::Scheme;
use graddiv::{CsrMatrix, SimplicialMesh, TaylorHoodSpace};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Polynomial in the four barycentric coordinates.
#[derive(Clone, Debug, Default)]
pub struct Poly(BTreeMap<[u32; 4], f64>);

impl Poly {
    pub fn constant(c: f64) -> Self {
        let mut m = BTreeMap::new();
        m.insert([0; 4], c);
        Poly(m)
    }

    pub fn lam(i: usize) -> Self {
        let mut e = [0; 4];
        e[i] = 1;
        let mut m = BTreeMap::new();
        m.insert(e, 1.0);
        Poly(m)
    }

    pub fn add(&self, o: &Poly) -> Poly {
        let mut m = self.0.clone();
        for (e, c) in &o.0 {
            *m.entry(*e).or_insert(0.0) += c;
        }
        Poly(m)
    }

    pub fn scale(&self, s: f64) -> Poly {
        Poly(self.0.iter().map(|(e, c)| (*e, c * s)).collect())
    }

    pub fn mul(&self, o: &Poly) -> Poly {
        let mut m = BTreeMap::new();
        for (ea, ca) in &self.0 {
            for (eb, cb) in &o.0 {
                let e = [ea[0] + eb[0], ea[1] + eb[1], ea[2] + eb[2], ea[3] + eb[3]];
                *m.entry(e).or_insert(0.0) += ca * cb;
            }
        }
        Poly(m)
    }

    pub fn diff(&self, i: usize) -> Poly {
        let mut m = BTreeMap::new();
        for (e, c) in &self.0 {
            if e[i] > 0 {
                let mut f = *e;
                f[i] -= 1;
                *m.entry(f).or_insert(0.0) += c * e[i] as f64;
            }
        }
        Poly(m)
    }

    pub fn integrate(&self, dim: usize, volume: f64) -> f64 {
        let fact = |n: u32| (1..=n).map(|k| k as f64).product::<f64>();
        self.0
            .iter()
            .map(|(e, c)| {
                let deg: u32 = e.iter().sum();
                c * fact(dim as u32) * volume * e.iter().map(|&a| fact(a)).product::<f64>() / fact(dim as u32 + deg)
            })
            .sum()
    }
}

/// Reference data for one cell.
pub struct CellBasis {
    pub volume: f64,
    /// ∇λₘ
    pub grad_lam: Vec<[f64; 3]>,
    /// Global scalar P2 index and basis polynomial.
    pub p2: Vec<(usize, Poly)>,
    /// Global P1 index (vertex) and basis polynomial.
    pub p1: Vec<(usize, Poly)>,
    /// Physical coordinates as polynomials.
    pub x: [Poly; 3],
}

impl CellBasis {
    /// ∂φ/∂x_c for a polynomial in barycentrics.
    pub fn dx(&self, p: &Poly, c: usize) -> Poly {
        let mut out = Poly::default();
        for (m, g) in self.grad_lam.iter().enumerate() {
            out = out.add(&p.diff(m).scale(g[c]));
        }
        out
    }
}

fn find_node(coords: &[[f64; 3]], x: [f64; 3]) -> usize {
    coords
        .iter()
        .position(|y| (0..3).all(|c| (x[c] - y[c]).abs() < 1e-12))
        .expect("node present")
}

pub fn cell_bases(space: &TaylorHoodSpace) -> Vec<CellBasis> {
    let mesh = space.mesh();
    let dim = mesh.dim();
    let coords = space.node_coords();
    let mut out = Vec::new();
    for cell in mesh.cells() {
        let v: Vec<[f64; 3]> = cell.iter().map(|&i| mesh.vertices()[i]).collect();
        let j = DMatrix::from_fn(dim, dim, |r, c| v[c + 1][r] - v[0][r]);
        let fact: f64 = (1..=dim).map(|k| k as f64).product();
        let volume = j.determinant().abs() / fact;
        let jinv = j.try_inverse().expect("nondegenerate cell");
        let mut grad_lam = vec![[0.0; 3]; dim + 1];
        for m in 1..=dim {
            for c in 0..dim {
                grad_lam[m][c] = jinv[(m - 1, c)];
                grad_lam[0][c] -= jinv[(m - 1, c)];
            }
        }
        let mut p2 = Vec::new();
        for m in 0..=dim {
            let phi = Poly::lam(m).mul(&Poly::lam(m).scale(2.0).add(&Poly::constant(-1.0)));
            p2.push((find_node(coords, v[m]), phi));
        }
        for a in 0..=dim {
            for b in a + 1..=dim {
                let mid = [0.5 * (v[a][0] + v[b][0]), 0.5 * (v[a][1] + v[b][1]), 0.5 * (v[a][2] + v[b][2])];
                p2.push((find_node(coords, mid), Poly::lam(a).mul(&Poly::lam(b)).scale(4.0)));
            }
        }
        let p1 = (0..=dim).map(|m| (cell[m], Poly::lam(m))).collect();
        let x = std::array::from_fn(|c| {
            (0..=dim).fold(Poly::default(), |acc, m| acc.add(&Poly::lam(m).scale(v[m][c])))
        });
        out.push(CellBasis {
            volume,
            grad_lam,
            p2,
            p1,
            x,
        });
    }
    out
}

/// Dense operators assembled from exact integrals.
pub struct DenseOps {
    pub dim: usize,
    pub ns: usize,
    pub np: usize,
    pub mass_scalar: DMatrix<f64>,
    pub stiffness_scalar: DMatrix<f64>,
    pub axis: Vec<DMatrix<f64>>,
    pub mass: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
    pub div: DMatrix<f64>,
    pub graddiv_full: DMatrix<f64>,
    pub graddiv_diag: DMatrix<f64>,
    pub pressure_mean: DVector<f64>,
    pub bases: Vec<CellBasis>,
    pub boundary: Vec<bool>,
}

impl DenseOps {
    pub fn build(space: &TaylorHoodSpace) -> Self {
        let dim = space.dim();
        let ns = space.n_scalar();
        let np = space.n_pressure();
        let nu = dim * ns;
        let bases = cell_bases(space);
        let mut mass_scalar = DMatrix::zeros(ns, ns);
        let mut axis = vec![DMatrix::zeros(ns, ns); dim];
        let mut graddiv_full = DMatrix::zeros(nu, nu);
        let mut div = DMatrix::zeros(np, nu);
        let mut pressure_mean = DVector::zeros(np);
        for b in &bases {
            let grads: Vec<Vec<Poly>> = b.p2.iter().map(|(_, p)| (0..dim).map(|c| b.dx(p, c)).collect()).collect();
            for (i, (gi, pi)) in b.p2.iter().enumerate() {
                for (j, (gj, pj)) in b.p2.iter().enumerate() {
                    mass_scalar[(*gi, *gj)] += pi.mul(pj).integrate(dim, b.volume);
                    for a in 0..dim {
                        for c in 0..dim {
                            let v = grads[i][a].mul(&grads[j][c]).integrate(dim, b.volume);
                            graddiv_full[(a * ns + gi, c * ns + gj)] += v;
                            if a == c {
                                axis[a][(*gi, *gj)] += v;
                            }
                        }
                    }
                }
            }
            for (q, psi) in &b.p1 {
                pressure_mean[*q] += psi.integrate(dim, b.volume);
                for (j, (gj, _)) in b.p2.iter().enumerate() {
                    for c in 0..dim {
                        div[(*q, c * ns + gj)] += psi.mul(&grads[j][c]).integrate(dim, b.volume);
                    }
                }
            }
        }
        let stiffness_scalar = axis.iter().fold(DMatrix::zeros(ns, ns), |acc, a| acc + a);
        let block = |s: &DMatrix<f64>| {
            let mut m = DMatrix::zeros(nu, nu);
            for c in 0..dim {
                m.view_mut((c * ns, c * ns), (ns, ns)).copy_from(s);
            }
            m
        };
        let mut graddiv_diag = DMatrix::zeros(nu, nu);
        for c in 0..dim {
            graddiv_diag.view_mut((c * ns, c * ns), (ns, ns)).copy_from(&axis[c]);
        }
        let boundary = (0..ns).map(|i| space.is_boundary_node(i)).collect();
        DenseOps {
            dim,
            ns,
            np,
            mass: block(&mass_scalar),
            stiffness: block(&stiffness_scalar),
            mass_scalar,
            stiffness_scalar,
            axis,
            div,
            graddiv_full,
            graddiv_diag,
            pressure_mean,
            bases,
            boundary,
        }
    }

    pub fn nu(&self) -> usize {
        self.dim * self.ns
    }

    fn field(&self, b: &CellBasis, w: &[f64], c: usize) -> Poly {
        b.p2.iter()
            .fold(Poly::default(), |acc, (g, p)| acc.add(&p.scale(w[c * self.ns + g])))
    }

    /// Scalar skew convection ½[(w·∇φⱼ, φᵢ) − (w·∇φᵢ, φⱼ)].
    pub fn convection_scalar(&self, w: &[f64]) -> DMatrix<f64> {
        let mut n = DMatrix::zeros(self.ns, self.ns);
        for b in &self.bases {
            let wc: Vec<Poly> = (0..self.dim).map(|c| self.field(b, w, c)).collect();
            for (gi, pi) in &b.p2 {
                for (gj, pj) in &b.p2 {
                    let adv = (0..self.dim).fold(Poly::default(), |acc, c| acc.add(&wc[c].mul(&b.dx(pj, c))));
                    n[(*gi, *gj)] += adv.mul(pi).integrate(self.dim, b.volume);
                }
            }
        }
        (&n - n.transpose()) * 0.5
    }

    pub fn convection(&self, w: &[f64]) -> DMatrix<f64> {
        let s = self.convection_scalar(w);
        let mut m = DMatrix::zeros(self.nu(), self.nu());
        for c in 0..self.dim {
            m.view_mut((c * self.ns, c * self.ns), (self.ns, self.ns)).copy_from(&s);
        }
        m
    }

    /// Load for a force given as polynomials in physical coordinates.
    pub fn load(&self, f: impl Fn(&[Poly; 3]) -> [Poly; 3]) -> DVector<f64> {
        let mut out = DVector::zeros(self.nu());
        for b in &self.bases {
            let fx = f(&b.x);
            for (g, p) in &b.p2 {
                for c in 0..self.dim {
                    out[c * self.ns + g] += fx[c].mul(p).integrate(self.dim, b.volume);
                }
            }
        }
        out
    }

    /// Velocity DOFs not on the boundary, component-major.
    pub fn interior_velocity(&self) -> Vec<usize> {
        (0..self.dim)
            .flat_map(|c| (0..self.ns).filter(|&i| !self.boundary[i]).map(move |i| c * self.ns + i))
            .collect()
    }

    pub fn interior_scalar(&self) -> Vec<usize> {
        (0..self.ns).filter(|&i| !self.boundary[i]).collect()
    }

    /// Solves [A_II, −D_Iᵀ, 0; −D_I, 0, m; 0, mᵀ, 0] on interior velocity DOFs.
    pub fn saddle_solve(&self, a: &DMatrix<f64>, rhs: &DVector<f64>) -> (DVector<f64>, DVector<f64>, f64) {
        let iv = self.interior_velocity();
        let (ni, np) = (iv.len(), self.np);
        let n = ni + np + 1;
        let mut s = DMatrix::zeros(n, n);
        let mut b = DVector::zeros(n);
        for (r, &gi) in iv.iter().enumerate() {
            b[r] = rhs[gi];
            for (c, &gj) in iv.iter().enumerate() {
                s[(r, c)] = a[(gi, gj)];
            }
            for q in 0..np {
                s[(r, ni + q)] = -self.div[(q, gi)];
                s[(ni + q, r)] = -self.div[(q, gi)];
            }
        }
        for q in 0..np {
            s[(ni + q, n - 1)] = self.pressure_mean[q];
            s[(n - 1, ni + q)] = self.pressure_mean[q];
        }
        let x = s.full_piv_lu().solve(&b).expect("nonsingular saddle system");
        let mut u = DVector::zeros(self.nu());
        for (r, &gi) in iv.iter().enumerate() {
            u[gi] = x[r];
        }
        (u, x.rows(ni, np).into_owned(), x[n - 1])
    }

    /// Per-component interior solve of (M₁ + s K_cc) u_c = rhs_c.
    pub fn step2_solve(&self, s: f64, rhs: &DVector<f64>) -> DVector<f64> {
        let is = self.interior_scalar();
        let mut u = DVector::zeros(self.nu());
        for c in 0..self.dim {
            let a = DMatrix::from_fn(is.len(), is.len(), |r, q| {
                self.mass_scalar[(is[r], is[q])] + s * self.axis[c][(is[r], is[q])]
            });
            let b = DVector::from_fn(is.len(), |r, _| rhs[c * self.ns + is[r]]);
            let x = a.lu().solve(&b).expect("nonsingular step-2 block");
            for (r, &i) in is.iter().enumerate() {
                u[c * self.ns + i] = x[r];
            }
        }
        u
    }
}

pub fn dense(m: &CsrMatrix) -> DMatrix<f64> {
    let rows = m.to_dense();
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| rows[i][j])
}

pub fn max_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    (a - b).amax()
}

pub fn vec_diff(a: &[f64], b: &DVector<f64>) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Single irregular triangle.
pub fn triangle() -> SimplicialMesh {
    SimplicialMesh::new(2, vec![[0.1, 0.0, 0.0], [1.0, 0.2, 0.0], [0.3, 0.9, 0.0]], vec![0, 1, 2], Vec::new()).unwrap()
}

/// Single irregular tetrahedron.
pub fn tetrahedron() -> SimplicialMesh {
    SimplicialMesh::new(
        3,
        vec![[0.0, 0.1, 0.0], [1.1, 0.0, 0.2], [0.2, 0.9, 0.1], [0.1, 0.3, 1.0]],
        vec![0, 1, 2, 3],
        Vec::new(),
    )
    .unwrap()
}

/// Square cut into four triangles around an off-centre interior vertex.
pub fn star_square() -> SimplicialMesh {
    SimplicialMesh::new(
        2,
        vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0], [0.45, 0.55, 0.0]],
        vec![0, 1, 4, 1, 2, 4, 2, 3, 4, 3, 0, 4],
        Vec::new(),
    )
    .unwrap()
}

/// Tetrahedron cut into four around an interior vertex.
pub fn star_tet() -> SimplicialMesh {
    SimplicialMesh::new(
        3,
        vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.22, 0.26, 0.3]],
        vec![4, 1, 2, 3, 0, 4, 2, 3, 0, 1, 4, 3, 0, 1, 2, 4],
        Vec::new(),
    )
    .unwrap()
}

pub fn meshes() -> Vec<(&'static str, SimplicialMesh)> {
    vec![
        ("triangle", triangle()),
        ("square1", SimplicialMesh::unit_square(1)),
        ("star_square", star_square()),
        ("tetrahedron", tetrahedron()),
        ("star_tet", star_tet()),
    ]
}

pub fn force(x: [f64; 3], t: f64) -> [f64; 3] {
    [
        t * (x[0] * x[1] + 0.3),
        t * (x[1] * x[1] - x[2] + 0.1 * x[0]),
        t * (x[0] + 2.0 * x[2] - x[0] * x[2]),
    ]
}

pub fn force_poly(x: &[Poly; 3], t: f64) -> [Poly; 3] {
    let c = Poly::constant;
    [
        x[0].mul(&x[1]).add(&c(0.3)).scale(t),
        x[1].mul(&x[1]).add(&x[2].scale(-1.0)).add(&x[0].scale(0.1)).scale(t),
        x[0].add(&x[2].scale(2.0)).add(&x[0].mul(&x[2]).scale(-1.0)).scale(t),
    ]
}

pub fn random_field(space: &TaylorHoodSpace, rng: &mut ChaCha8Rng, zero_boundary: bool) -> Vec<f64> {
    let ns = space.n_scalar();
    (0..space.n_velocity())
        .map(|i| {
            if zero_boundary && space.is_boundary_node(i % ns) {
                0.0
            } else {
                rng.random_range(-1.0..1.0)
            }
        })
        .collect()
}

pub struct DenseStep {
    pub u_tilde: DVector<f64>,
    pub p: DVector<f64>,
    pub lambda: f64,
    pub u_next: DVector<f64>,
}

pub fn dense_step(d: &DenseOps, scheme: Scheme, u0: &[f64], nu: f64, k: f64, gamma: f64, alpha: f64) -> DenseStep {
    let un = DVector::from_column_slice(u0);
    let mut a = &d.mass / k + &d.stiffness * nu + d.convection(u0);
    let mut rhs = &d.mass * &un / k + d.load(|x| force_poly(x, k));
    let explicit = &d.graddiv_diag * (gamma + alpha) - &d.graddiv_full * gamma;
    match scheme {
        Scheme::ModularSgd => {}
        Scheme::Sgd1 => {
            a += &d.graddiv_diag * (gamma + alpha);
            rhs += &explicit * &un;
        }
        Scheme::CoupledGraddiv => a += &d.graddiv_full * gamma,
    }
    let (ut, p, lambda) = d.saddle_solve(&a, &rhs);
    let u_next = match scheme {
        Scheme::ModularSgd => {
            let r = &d.mass * &ut + &explicit * &un * k;
            d.step2_solve(k * (gamma + alpha), &r)
        }
        _ => ut.clone(),
    };
    DenseStep {
        u_tilde: ut,
        p,
        lambda,
        u_next,
    }
}
