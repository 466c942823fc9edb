//! Reverse Cuthill–McKee ordering for envelope factorizations.

use std::collections::VecDeque;

use super::sparse::SparseMatrix;

/// Adjacency lists of the symmetrized pattern, self loops removed.
fn adjacency(a: &SparseMatrix) -> Vec<Vec<usize>> {
    let n = a.nrows();
    let mut adj = vec![Vec::new(); n];
    for i in 0..n {
        let (idx, _) = a.row(i);
        for &j in idx {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    for l in &mut adj {
        l.sort_unstable();
        l.dedup();
    }
    adj
}

/// BFS level structure from `root` restricted to unvisited nodes.
fn levels(adj: &[Vec<usize>], root: usize, done: &[bool]) -> Vec<Vec<usize>> {
    let mut seen = vec![false; adj.len()];
    seen[root] = true;
    let mut out = vec![vec![root]];
    loop {
        let mut next = Vec::new();
        for &v in out.last().unwrap() {
            for &w in &adj[v] {
                if !seen[w] && !done[w] {
                    seen[w] = true;
                    next.push(w);
                }
            }
        }
        if next.is_empty() {
            return out;
        }
        out.push(next);
    }
}

/// Pseudo-peripheral node by repeated BFS from a minimum-degree start.
fn peripheral(adj: &[Vec<usize>], start: usize, done: &[bool]) -> usize {
    let mut root = start;
    let mut depth = levels(adj, root, done).len();
    for _ in 0..8 {
        let lv = levels(adj, root, done);
        let cand = *lv
            .last()
            .unwrap()
            .iter()
            .min_by_key(|&&v| (adj[v].len(), v))
            .unwrap();
        let d = levels(adj, cand, done).len();
        if d <= depth {
            break;
        }
        depth = d;
        root = cand;
    }
    root
}

/// Reverse Cuthill–McKee permutation, `perm[new] = old`.
pub fn rcm(a: &SparseMatrix) -> Vec<usize> {
    let n = a.nrows();
    let adj = adjacency(a);
    let mut done = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let start = (0..n)
            .filter(|&v| !done[v])
            .min_by_key(|&v| (adj[v].len(), v))
            .unwrap();
        let root = peripheral(&adj, start, &done);
        let mut q = VecDeque::from([root]);
        done[root] = true;
        while let Some(v) = q.pop_front() {
            order.push(v);
            let mut nb: Vec<usize> = adj[v].iter().copied().filter(|&w| !done[w]).collect();
            nb.sort_by_key(|&w| (adj[w].len(), w));
            for w in nb {
                done[w] = true;
                q.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// Number of stored entries of the lower envelope under `perm`.
pub fn envelope_size(a: &SparseMatrix, perm: &[usize]) -> usize {
    let n = a.nrows();
    let mut inv = vec![0usize; n];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    let mut first: Vec<usize> = (0..n).collect();
    for i in 0..n {
        let (idx, _) = a.row(i);
        for &j in idx {
            let (pi, pj) = (inv[i], inv[j]);
            let (hi, lo) = if pi > pj { (pi, pj) } else { (pj, pi) };
            first[hi] = first[hi].min(lo);
        }
    }
    first.iter().enumerate().map(|(i, &f)| i - f + 1).sum()
}
