//! Quadrature on the reference simplex.
//!
//! Conical product rules: Gauss–Legendre in each collapsed coordinate of the
//! Duffy map, with the Jacobian folded into the weights. All weights are
//! positive.

/// Quadrature rule with points in barycentric coordinates.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub dim: usize,
    /// Exact for polynomials up to this total degree.
    pub degree: usize,
    /// Barycentric coordinates (λ₀, …, λ_d); unused slots are zero.
    pub points: Vec<[f64; 4]>,
    /// Weights summing to the reference simplex volume (1/2 or 1/6).
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn simplex(dim: usize, degree: usize) -> Self {
        // the Duffy Jacobian adds up to dim-1 to the degree in the first coordinate
        let m = (degree + dim).div_ceil(2).max(1);
        let (x, w) = gauss_legendre_unit(m);
        let mut points = Vec::new();
        let mut weights = Vec::new();
        match dim {
            2 => {
                for i in 0..m {
                    for j in 0..m {
                        let (u, v) = (x[i], x[j]);
                        let xi = [u, v * (1.0 - u)];
                        points.push([1.0 - xi[0] - xi[1], xi[0], xi[1], 0.0]);
                        weights.push(w[i] * w[j] * (1.0 - u));
                    }
                }
            }
            3 => {
                for i in 0..m {
                    for j in 0..m {
                        for l in 0..m {
                            let (u, v, s) = (x[i], x[j], x[l]);
                            let xi = [u, v * (1.0 - u), s * (1.0 - u) * (1.0 - v)];
                            points.push([1.0 - xi[0] - xi[1] - xi[2], xi[0], xi[1], xi[2]]);
                            weights.push(w[i] * w[j] * w[l] * (1.0 - u).powi(2) * (1.0 - v));
                        }
                    }
                }
            }
            _ => panic!("quadrature only for dim 2 or 3"),
        }
        Self {
            dim,
            degree,
            points,
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Gauss–Legendre nodes and weights on [0, 1].
pub fn gauss_legendre_unit(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m {
        // Newton on P_m from the Chebyshev-like initial guess
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(m, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                let (_, d) = legendre(m, z);
                dp = d;
                break;
            }
        }
        // map [-1, 1] -> [0, 1], ascending order
        nodes[m - 1 - i] = 0.5 * (z + 1.0);
        weights[m - 1 - i] = 1.0 / ((1.0 - z * z) * dp * dp);
    }
    (nodes, weights)
}

fn legendre(m: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    if m == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=m {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let dp = m as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, dp)
}
