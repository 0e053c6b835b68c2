//! Fill-reducing ordering for sparse factorization.
//!
//! Minimum degree on the graph of A + Aᵀ, run on the explicit elimination
//! graph. Ties are broken by the lowest index, so the ordering is a pure
//! function of the sparsity pattern.

use std::collections::BTreeSet;

use super::CsrMatrix;

/// Returns a permutation `order` with `order[k]` the k-th variable to eliminate.
pub fn minimum_degree(a: &CsrMatrix) -> Vec<usize> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "ordering needs a square matrix");

    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for &j in a.row(i).0 {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }

    let mut queue: BTreeSet<(usize, usize)> = (0..n).map(|i| (adj[i].len(), i)).collect();
    let mut eliminated = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut merged: Vec<usize> = Vec::new();

    while let Some((_, v)) = queue.pop_first() {
        eliminated[v] = true;
        order.push(v);
        let nbrs = std::mem::take(&mut adj[v]);
        for &u in &nbrs {
            queue.remove(&(adj[u].len(), u));
            // adj[u] ← (adj[u] ∪ nbrs) \ {u, v}
            merged.clear();
            let (x, y) = (&adj[u], &nbrs);
            let (mut p, mut q) = (0, 0);
            while p < x.len() || q < y.len() {
                let next = match (x.get(p), y.get(q)) {
                    (Some(&a), Some(&b)) if a == b => {
                        p += 1;
                        q += 1;
                        a
                    }
                    (Some(&a), Some(&b)) if a < b => {
                        p += 1;
                        a
                    }
                    (Some(_), Some(&b)) => {
                        q += 1;
                        b
                    }
                    (Some(&a), None) => {
                        p += 1;
                        a
                    }
                    (None, Some(&b)) => {
                        q += 1;
                        b
                    }
                    (None, None) => unreachable!(),
                };
                if next != u && next != v && !eliminated[next] {
                    merged.push(next);
                }
            }
            std::mem::swap(&mut adj[u], &mut merged);
            queue.insert((adj[u].len(), u));
        }
    }
    order
}
