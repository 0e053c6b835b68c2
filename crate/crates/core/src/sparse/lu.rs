//! Left-looking sparse LU with threshold partial pivoting (Gilbert–Peierls).
//!
//! The symbolic phase fixes a column order from the pattern of A + Aᵀ; the
//! numeric phase chooses row pivots, preferring the diagonal entry whenever
//! it is within [`PIVOT_THRESHOLD`] of the largest candidate. Given identical
//! input the factors are bitwise identical.

use super::{minimum_degree, CsrMatrix, SolveError};

/// Relative size the diagonal must have to be kept as pivot.
pub const PIVOT_THRESHOLD: f64 = 0.1;

/// Column ordering computed from a sparsity pattern; reusable across
/// matrices sharing that pattern.
#[derive(Clone, Debug)]
pub struct SymbolicLu {
    n: usize,
    col_order: Vec<usize>,
}

impl SymbolicLu {
    pub fn analyze(a: &CsrMatrix) -> Self {
        Self {
            n: a.nrows(),
            col_order: minimum_degree(a),
        }
    }

    /// Natural (identity) column order.
    pub fn natural(n: usize) -> Self {
        Self {
            n,
            col_order: (0..n).collect(),
        }
    }

    pub fn column_order(&self) -> &[usize] {
        &self.col_order
    }
}

/// P A Q = L U with L unit lower triangular.
#[derive(Clone, Debug)]
pub struct LuFactorization {
    n: usize,
    col_order: Vec<usize>,
    /// row_perm[i] = pivot step at which original row i was eliminated
    row_perm: Vec<usize>,
    l_ptr: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
    u_ptr: Vec<usize>,
    u_idx: Vec<usize>,
    u_val: Vec<f64>,
}

/// Symbolic analysis followed by numeric factorization.
pub fn factorize(a: &CsrMatrix) -> Result<LuFactorization, SolveError> {
    LuFactorization::factor(&SymbolicLu::analyze(a), a)
}

impl LuFactorization {
    pub fn factor(symbolic: &SymbolicLu, a: &CsrMatrix) -> Result<Self, SolveError> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(SolveError::NotSquare {
                nrows: n,
                ncols: a.ncols(),
            });
        }
        if symbolic.n != n {
            return Err(SolveError::ShapeMismatch {
                expected: symbolic.n,
                found: n,
            });
        }
        // column access to A
        let at = a.transpose();
        let (a_ptr, a_idx, a_val) = (at.row_ptr(), at.col_idx(), at.values());

        let est = 4 * a.nnz() + n;
        let mut l_ptr = Vec::with_capacity(n + 1);
        let mut l_idx: Vec<usize> = Vec::with_capacity(est);
        let mut l_val: Vec<f64> = Vec::with_capacity(est);
        let mut u_ptr = Vec::with_capacity(n + 1);
        let mut u_idx: Vec<usize> = Vec::with_capacity(est);
        let mut u_val: Vec<f64> = Vec::with_capacity(est);

        const UNSET: usize = usize::MAX;
        let mut pinv = vec![UNSET; n];
        let mut x = vec![0.0; n];
        let mut reach = Workspace::new(n);

        for k in 0..n {
            l_ptr.push(l_idx.len());
            u_ptr.push(u_idx.len());
            let col = symbolic.col_order[k];
            let rows = &a_idx[a_ptr[col]..a_ptr[col + 1]];
            let vals = &a_val[a_ptr[col]..a_ptr[col + 1]];

            // x = L \ A(:, col), restricted to the reach of the column pattern
            let top = reach.reach(rows, &l_ptr, &l_idx, &pinv, k);
            for &i in &reach.stack_out[top..] {
                x[i] = 0.0;
            }
            for (&i, &v) in rows.iter().zip(vals) {
                x[i] = v;
            }
            for &j in &reach.stack_out[top..] {
                let jj = pinv[j];
                if jj == UNSET {
                    continue;
                }
                let xj = x[j];
                if xj != 0.0 {
                    // skip the unit diagonal stored first
                    for p in l_ptr[jj] + 1..l_end(&l_ptr, jj, l_idx.len()) {
                        x[l_idx[p]] -= l_val[p] * xj;
                    }
                }
            }

            let mut pivot_row = UNSET;
            let mut largest = -1.0;
            for &i in &reach.stack_out[top..] {
                if pinv[i] == UNSET {
                    let t = x[i].abs();
                    if t > largest {
                        largest = t;
                        pivot_row = i;
                    }
                } else {
                    u_idx.push(pinv[i]);
                    u_val.push(x[i]);
                }
            }
            if pivot_row == UNSET || !(largest > 0.0) || !largest.is_finite() {
                return Err(SolveError::Singular { column: col, step: k });
            }
            if pinv[col] == UNSET && x[col].abs() >= PIVOT_THRESHOLD * largest {
                pivot_row = col;
            }
            let pivot = x[pivot_row];
            u_idx.push(k);
            u_val.push(pivot);
            pinv[pivot_row] = k;
            l_idx.push(pivot_row);
            l_val.push(1.0);
            for &i in &reach.stack_out[top..] {
                if pinv[i] == UNSET {
                    l_idx.push(i);
                    l_val.push(x[i] / pivot);
                }
                x[i] = 0.0;
            }
        }
        l_ptr.push(l_idx.len());
        u_ptr.push(u_idx.len());
        for i in l_idx.iter_mut() {
            *i = pinv[*i];
        }
        Ok(Self {
            n,
            col_order: symbolic.col_order.clone(),
            row_perm: pinv,
            l_ptr,
            l_idx,
            l_val,
            u_ptr,
            u_idx,
            u_val,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored entries of L plus U.
    pub fn fill(&self) -> usize {
        self.l_idx.len() + self.u_idx.len()
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, SolveError> {
        if b.len() != self.n {
            return Err(SolveError::ShapeMismatch {
                expected: self.n,
                found: b.len(),
            });
        }
        let mut y = vec![0.0; self.n];
        for (i, &bi) in b.iter().enumerate() {
            y[self.row_perm[i]] = bi;
        }
        // L y = P b
        for k in 0..self.n {
            let yk = y[k];
            if yk != 0.0 {
                for p in self.l_ptr[k] + 1..self.l_ptr[k + 1] {
                    y[self.l_idx[p]] -= self.l_val[p] * yk;
                }
            }
        }
        // U z = y, diagonal stored last in each column
        for k in (0..self.n).rev() {
            let last = self.u_ptr[k + 1] - 1;
            y[k] /= self.u_val[last];
            let yk = y[k];
            if yk != 0.0 {
                for p in self.u_ptr[k]..last {
                    y[self.u_idx[p]] -= self.u_val[p] * yk;
                }
            }
        }
        let mut x = vec![0.0; self.n];
        for (k, &col) in self.col_order.iter().enumerate() {
            x[col] = y[k];
        }
        Ok(x)
    }
}

fn l_end(l_ptr: &[usize], col: usize, current_len: usize) -> usize {
    l_ptr.get(col + 1).copied().unwrap_or(current_len)
}

/// Depth-first reach in the graph of L, producing a topological order.
struct Workspace {
    mark: Vec<usize>,
    stack: Vec<(usize, usize)>,
    stack_out: Vec<usize>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            mark: vec![usize::MAX; n],
            stack: Vec::with_capacity(n),
            stack_out: vec![0; n],
        }
    }

    /// Fills `stack_out[top..n]` with the rows reachable from `rows` and
    /// returns `top`.
    fn reach(&mut self, rows: &[usize], l_ptr: &[usize], l_idx: &[usize], pinv: &[usize], stamp: usize) -> usize {
        let n = self.mark.len();
        let mut top = n;
        for &start in rows {
            if self.mark[start] == stamp {
                continue;
            }
            self.mark[start] = stamp;
            self.stack.push((start, first_child(start, l_ptr, pinv)));
            while let Some(&(node, pos)) = self.stack.last() {
                let jj = pinv[node];
                let end = if jj == usize::MAX {
                    0
                } else {
                    l_end(l_ptr, jj, l_idx.len())
                };
                let mut p = pos;
                while p < end && self.mark[l_idx[p]] == stamp {
                    p += 1;
                }
                if p < end {
                    let child = l_idx[p];
                    self.stack.last_mut().unwrap().1 = p + 1;
                    self.mark[child] = stamp;
                    self.stack.push((child, first_child(child, l_ptr, pinv)));
                } else {
                    self.stack.pop();
                    top -= 1;
                    self.stack_out[top] = node;
                }
            }
        }
        top
    }
}

fn first_child(node: usize, l_ptr: &[usize], pinv: &[usize]) -> usize {
    match pinv[node] {
        usize::MAX => 0,
        jj => l_ptr[jj] + 1,
    }
}
