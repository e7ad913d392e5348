//! Reverse Cuthill–McKee ordering on the symmetrised sparsity pattern.

use std::collections::VecDeque;

use crate::generator::SparseGenerator;

/// Symmetric adjacency lists of the off-diagonal pattern.
pub fn symmetric_pattern(q: &SparseGenerator) -> Vec<Vec<usize>> {
    let n = q.dim();
    let mut adj = vec![Vec::new(); n];
    for r in 0..n {
        for (c, _) in q.row(r) {
            adj[r].push(c);
            adj[c].push(r);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

fn bfs_levels(adj: &[Vec<usize>], start: usize, seen: &mut [bool]) -> Vec<usize> {
    let mut order = vec![start];
    seen[start] = true;
    let mut head = 0;
    while head < order.len() {
        let v = order[head];
        head += 1;
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                order.push(w);
            }
        }
    }
    for &v in &order {
        seen[v] = false;
    }
    order
}

/// Endpoint of a long BFS path inside the component of `start`.
fn pseudo_peripheral(adj: &[Vec<usize>], start: usize, seen: &mut [bool]) -> usize {
    let mut node = start;
    for _ in 0..4 {
        let order = bfs_levels(adj, node, seen);
        let far = *order.last().unwrap();
        if far == node {
            break;
        }
        node = far;
    }
    node
}

/// Permutation `perm[new] = old`.
pub fn reverse_cuthill_mckee(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| (adj[v].len(), v));
    for &root in &by_degree {
        if seen[root] {
            continue;
        }
        let start = pseudo_peripheral(adj, root, &mut seen);
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !seen[w]).collect();
            next.sort_by_key(|&w| (adj[w].len(), w));
            for w in next {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// Largest `|i − j|` over the pattern after applying `perm`.
pub fn bandwidth(adj: &[Vec<usize>], perm: &[usize]) -> usize {
    let mut pos = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        pos[old] = new;
    }
    adj.iter()
        .enumerate()
        .flat_map(|(v, list)| list.iter().map(move |&w| (v, w)))
        .map(|(v, w)| pos[v].abs_diff(pos[w]))
        .max()
        .unwrap_or(0)
}
