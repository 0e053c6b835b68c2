use super::cg::{dot, norm};
use super::{factorize, CsrMatrix, LuFactorization, SolveError};

/// Stopping rule for the Lanczos iterations.
#[derive(Clone, Copy, Debug)]
pub struct EigenOptions {
    /// Relative change of the extreme Ritz value between iterations.
    pub tol: f64,
    /// Relative Ritz residual ‖Op·v − θv‖/|θ|.
    pub residual_tol: f64,
    /// Largest Krylov dimension.
    pub max_iter: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tol: 1e-13,
            residual_tol: 1e-10,
            max_iter: 2000,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EigenEstimate {
    pub value: f64,
    pub iterations: usize,
    /// Ritz residual relative to the Ritz value, for the iterated operator
    /// (A for the largest eigenvalue, A⁻¹ for the smallest).
    pub residual: f64,
    /// False when the iteration cap was hit; the value is then the best estimate.
    pub converged: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct ExtremeEigenvalues {
    pub max: EigenEstimate,
    pub min: EigenEstimate,
}

impl ExtremeEigenvalues {
    pub fn converged(&self) -> bool {
        self.max.converged && self.min.converged
    }
}

/// Largest and smallest eigenvalues of an SPD matrix: Lanczos on A, and on
/// A⁻¹ through an LU factorization (computed here when not supplied).
pub fn extreme_eigenvalue_estimates(
    a: &CsrMatrix,
    factorization: Option<&LuFactorization>,
    options: EigenOptions,
) -> Result<ExtremeEigenvalues, SolveError> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(SolveError::NotSquare {
            nrows: n,
            ncols: a.ncols(),
        });
    }
    let owned;
    let lu = match factorization {
        Some(f) => f,
        None => {
            owned = factorize(a)?;
            &owned
        }
    };
    let max = lanczos_largest(n, options, |v, out| {
        a.spmv_into(v, out);
        Ok(())
    })?;
    let inv = lanczos_largest(n, options, |v, out| {
        out.copy_from_slice(&lu.solve(v)?);
        Ok(())
    })?;
    let min = EigenEstimate {
        value: 1.0 / inv.value,
        ..inv
    };
    Ok(ExtremeEigenvalues { max, min })
}

/// Largest eigenvalue of a symmetric operator by Lanczos with full
/// reorthogonalization.
fn lanczos_largest(
    n: usize,
    options: EigenOptions,
    mut op: impl FnMut(&[f64], &mut [f64]) -> Result<(), SolveError>,
) -> Result<EigenEstimate, SolveError> {
    if n == 0 {
        return Err(SolveError::ShapeMismatch { expected: 1, found: 0 });
    }
    // deterministic start with components in every direction
    let mut q: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64) * 0.7548776662).sin()).collect();
    let nq = norm(&q);
    q.iter_mut().for_each(|x| *x /= nq);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let (mut alpha, mut beta) = (Vec::new(), Vec::new());
    let mut w = vec![0.0; n];
    let mut theta = f64::NAN;
    let mut res = f64::INFINITY;
    let dim = options.max_iter.min(n).max(1);
    for it in 1..=dim {
        op(&q, &mut w)?;
        if !w.iter().all(|x| x.is_finite()) {
            return Err(SolveError::NotConverged {
                iterations: it,
                residual: f64::INFINITY,
            });
        }
        let a_j = dot(&q, &w);
        alpha.push(a_j);
        basis.push(std::mem::take(&mut q));
        for _ in 0..2 {
            for b in &basis {
                let r = dot(b, &w);
                w.iter_mut().zip(b).for_each(|(x, y)| *x -= r * y);
            }
        }
        let b_j = norm(&w);
        let next = tridiagonal_largest(&alpha, &beta);
        let change = ((next - theta) / next).abs();
        theta = next;
        let y_last = tridiagonal_last_component(&alpha, &beta, theta);
        res = (b_j * y_last).abs() / theta.abs();
        let scale = alpha.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if b_j <= 1e-14 * scale || change < options.tol || res < options.residual_tol {
            return Ok(EigenEstimate {
                value: theta,
                iterations: it,
                residual: res,
                converged: true,
            });
        }
        beta.push(b_j);
        q = w.iter().map(|x| x / b_j).collect();
    }
    Ok(EigenEstimate {
        value: theta,
        iterations: dim,
        residual: res,
        converged: false,
    })
}

/// Number of eigenvalues of the tridiagonal (alpha, beta) below x.
fn sturm_count(alpha: &[f64], beta: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut d = 1.0;
    for (i, &a) in alpha.iter().enumerate() {
        let b2 = if i == 0 { 0.0 } else { beta[i - 1] * beta[i - 1] };
        d = a - x - if i == 0 { 0.0 } else { b2 / d };
        if d == 0.0 {
            d = -f64::EPSILON * (a.abs() + x.abs()).max(f64::MIN_POSITIVE);
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

/// Largest eigenvalue of a symmetric tridiagonal by bisection.
fn tridiagonal_largest(alpha: &[f64], beta: &[f64]) -> f64 {
    let m = alpha.len();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..m {
        let r = if i > 0 { beta[i - 1].abs() } else { 0.0 } + if i + 1 < m { beta[i].abs() } else { 0.0 };
        lo = lo.min(alpha[i] - r);
        hi = hi.max(alpha[i] + r);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(alpha, beta, mid) == m {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Last component of the unit eigenvector of the tridiagonal for the
/// eigenvalue `theta`, by a few steps of inverse iteration.
fn tridiagonal_last_component(alpha: &[f64], beta: &[f64], theta: f64) -> f64 {
    let m = alpha.len();
    if m == 1 {
        return 1.0;
    }
    let shift = theta + 1e-13 * theta.abs().max(f64::MIN_POSITIVE);
    let mut y = vec![1.0; m];
    for _ in 0..3 {
        // Thomas algorithm on (T − shift)
        let mut c = vec![0.0; m];
        let mut d = vec![0.0; m];
        let mut denom = alpha[0] - shift;
        for i in 0..m {
            if i > 0 {
                denom = alpha[i] - shift - beta[i - 1] * c[i - 1];
            }
            if denom == 0.0 {
                denom = f64::EPSILON;
            }
            c[i] = if i + 1 < m { beta[i] / denom } else { 0.0 };
            d[i] = (y[i] - if i > 0 { beta[i - 1] * d[i - 1] } else { 0.0 }) / denom;
        }
        let mut x = vec![0.0; m];
        x[m - 1] = d[m - 1];
        for i in (0..m - 1).rev() {
            x[i] = d[i] - c[i] * x[i + 1];
        }
        let nx = norm(&x);
        if !nx.is_finite() || nx == 0.0 {
            break;
        }
        y = x.iter().map(|v| v / nx).collect();
    }
    y[m - 1]
}
