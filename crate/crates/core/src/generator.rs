//! Truncated generators over explicit micro-state sets, reentry redirection
//! and communicating-class analysis.

use std::collections::HashMap;

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use rayon::prelude::*;

use crate::model::ReactionNetwork;

/// A population vector; one count per species.
pub type MicroState = Vec<i64>;

#[derive(Debug, thiserror::Error)]
pub enum GeneratorError {
    #[error("truncation has outflow {outflow:.3e} but no in-boundary states to redirect it to")]
    EmptyInboundary { outflow: f64 },
    #[error("empty state set")]
    EmptyStates,
}

/// Bijection between a finite set of micro-states and dense indices, in
/// lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct StateIndex {
    dim: usize,
    states: Vec<MicroState>,
    lookup: HashMap<MicroState, usize>,
}

impl StateIndex {
    pub fn new(dim: usize, states: impl IntoIterator<Item = MicroState>) -> Self {
        let mut states: Vec<MicroState> = states.into_iter().collect();
        debug_assert!(states.iter().all(|s| s.len() == dim));
        states.sort();
        states.dedup();
        let lookup = states.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        StateIndex { dim, states, lookup }
    }

    /// All states of the box `[lo, hi]` that satisfy `keep`.
    pub fn from_box(lo: &[i64], hi: &[i64], keep: impl Fn(&[i64]) -> bool) -> Self {
        let mut states = Vec::new();
        let mut x = lo.to_vec();
        if lo.iter().zip(hi).all(|(l, h)| l <= h) {
            'outer: loop {
                if keep(&x) {
                    states.push(x.clone());
                }
                for i in (0..x.len()).rev() {
                    x[i] += 1;
                    if x[i] <= hi[i] {
                        continue 'outer;
                    }
                    x[i] = lo[i];
                }
                break;
            }
        }
        StateIndex::new(lo.len(), states)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, i: usize) -> &[i64] {
        &self.states[i]
    }

    pub fn states(&self) -> &[MicroState] {
        &self.states
    }

    pub fn index_of(&self, x: &[i64]) -> Option<usize> {
        self.lookup.get(x).copied()
    }

    pub fn contains(&self, x: &[i64]) -> bool {
        self.lookup.contains_key(x)
    }

    pub fn subset(&self, keep: &[usize]) -> StateIndex {
        StateIndex::new(self.dim, keep.iter().map(|&i| self.states[i].clone()))
    }
}

/// Conservative sparse rate matrix: off-diagonals in CSR form, the diagonal
/// is always the negative off-diagonal row sum.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGenerator {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    diag: Vec<f64>,
}

impl SparseGenerator {
    /// Builds from per-row off-diagonal entries; duplicates are summed,
    /// zeros and self-loops dropped.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut diag = Vec::with_capacity(n);
        row_ptr.push(0);
        for (r, mut row) in rows.into_iter().enumerate() {
            row.retain(|&(c, v)| c != r && v != 0.0);
            row.sort_by_key(|&(c, _)| c);
            let mut sum = 0.0;
            let mut k = 0;
            while k < row.len() {
                let c = row[k].0;
                let mut v = 0.0;
                while k < row.len() && row[k].0 == c {
                    v += row[k].1;
                    k += 1;
                }
                debug_assert!(v >= 0.0, "negative off-diagonal rate {v}");
                cols.push(c);
                vals.push(v);
                sum += v;
            }
            diag.push(-sum);
            row_ptr.push(cols.len());
        }
        SparseGenerator { n, row_ptr, cols, vals, diag }
    }

    pub fn from_triplets(n: usize, entries: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut rows = vec![Vec::new(); n];
        for (r, c, v) in entries {
            rows[r].push((c, v));
        }
        SparseGenerator::from_rows(rows)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz_offdiag(&self) -> usize {
        self.cols.len()
    }

    /// Off-diagonal entries of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()].iter().copied().zip(self.vals[span].iter().copied())
    }

    pub fn diag(&self, r: usize) -> f64 {
        self.diag[r]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        if r == c {
            return self.diag[r];
        }
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.cols[span.clone()].binary_search(&c) {
            Ok(k) => self.vals[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn row_sum(&self, r: usize) -> f64 {
        self.diag[r] + self.row(r).map(|(_, v)| v).sum::<f64>()
    }

    pub fn max_abs(&self) -> f64 {
        self.diag.iter().map(|d| d.abs()).fold(0.0, f64::max)
    }

    /// `y = π Q`.
    pub fn left_mul(&self, pi: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = pi.iter().zip(&self.diag).map(|(p, d)| p * d).collect();
        for (r, &p) in pi.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (c, v) in self.row(r) {
                y[c] += p * v;
            }
        }
        y
    }

    pub fn to_rows(&self) -> Vec<Vec<(usize, f64)>> {
        (0..self.n).map(|r| self.row(r).collect()).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|r| (0..self.n).map(|c| self.get(r, c)).collect()).collect()
    }

    /// Sub-generator on `keep` (in the given order). Rates to dropped states
    /// are discarded and the diagonal is recomputed.
    pub fn restrict(&self, keep: &[usize]) -> SparseGenerator {
        let mut pos = vec![usize::MAX; self.n];
        for (k, &i) in keep.iter().enumerate() {
            pos[i] = k;
        }
        let rows = keep
            .iter()
            .map(|&i| self.row(i).filter(|&(c, _)| pos[c] != usize::MAX).map(|(c, v)| (pos[c], v)).collect())
            .collect();
        SparseGenerator::from_rows(rows)
    }
}

/// A rate leaving the truncation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outflow {
    pub source: usize,
    pub reaction: usize,
    pub rate: f64,
}

/// Generator over a truncation, with transitions that leave it kept aside.
#[derive(Debug, Clone)]
pub struct TruncatedGenerator {
    pub generator: SparseGenerator,
    pub outflow: Vec<Outflow>,
}

impl TruncatedGenerator {
    pub fn total_outflow(&self) -> f64 {
        self.outflow.iter().map(|o| o.rate).sum()
    }

    pub fn uniform_reentry(&self, inboundary: &[usize]) -> Result<SparseGenerator, GeneratorError> {
        apply_uniform_reentry(&self.generator, &self.outflow, inboundary)
    }
}

/// Assembles `Q` on `states`. Transitions into infeasible states (negative
/// counts, undeclared mode combinations) are not transitions and are ignored.
pub fn build_generator(network: &ReactionNetwork, states: &StateIndex) -> TruncatedGenerator {
    let rows: Vec<(Vec<(usize, f64)>, Vec<Outflow>)> = (0..states.len())
        .into_par_iter()
        .map(|i| {
            let x = states.state(i);
            let mut row = Vec::new();
            let mut out = Vec::new();
            let mut y = vec![0i64; x.len()];
            for (j, r) in network.reactions().iter().enumerate() {
                let a = r.propensity(x);
                if a <= 0.0 {
                    continue;
                }
                for (k, yk) in y.iter_mut().enumerate() {
                    *yk = x[k] + r.change()[k];
                }
                if y == x {
                    continue;
                }
                match states.index_of(&y) {
                    Some(t) => row.push((t, a)),
                    None if network.is_feasible(&y) => out.push(Outflow { source: i, reaction: j, rate: a }),
                    None => {}
                }
            }
            (row, out)
        })
        .collect();
    let mut matrix_rows = Vec::with_capacity(rows.len());
    let mut outflow = Vec::new();
    for (row, out) in rows {
        matrix_rows.push(row);
        outflow.extend(out);
    }
    TruncatedGenerator { generator: SparseGenerator::from_rows(matrix_rows), outflow }
}

/// States of the set with an incoming positive-rate transition from a
/// feasible state outside the set, as sorted indices.
pub fn inboundary_states(network: &ReactionNetwork, states: &StateIndex) -> Vec<usize> {
    (0..states.len())
        .into_par_iter()
        .filter(|&i| {
            let y = states.state(i);
            let mut x = vec![0i64; y.len()];
            network.reactions().iter().any(|r| {
                for (k, xk) in x.iter_mut().enumerate() {
                    *xk = y[k] - r.change()[k];
                }
                x.as_slice() != y && network.is_feasible(&x) && !states.contains(&x) && r.propensity(&x) > 0.0
            })
        })
        .collect()
}

/// Adds `outflow_s · weight_b` to `Q[s, b]` for each target; self-loops are
/// dropped.
pub fn redirect(q: &SparseGenerator, outflow: &[Outflow], targets: &[(usize, f64)]) -> SparseGenerator {
    let mut per_source = vec![0.0; q.dim()];
    for o in outflow {
        per_source[o.source] += o.rate;
    }
    let rows = (0..q.dim())
        .map(|s| {
            let mut row: Vec<(usize, f64)> = q.row(s).collect();
            if per_source[s] > 0.0 {
                row.extend(targets.iter().filter(|&&(b, _)| b != s).map(|&(b, w)| (b, per_source[s] * w)));
            }
            row
        })
        .collect();
    SparseGenerator::from_rows(rows)
}

/// Splits every outflow rate evenly over the in-boundary states.
pub fn apply_uniform_reentry(
    q: &SparseGenerator,
    outflow: &[Outflow],
    inboundary: &[usize],
) -> Result<SparseGenerator, GeneratorError> {
    let total: f64 = outflow.iter().map(|o| o.rate).sum();
    if outflow.is_empty() || total == 0.0 {
        return Ok(q.clone());
    }
    if inboundary.is_empty() {
        return Err(GeneratorError::EmptyInboundary { outflow: total });
    }
    let w = 1.0 / inboundary.len() as f64;
    let targets: Vec<(usize, f64)> = inboundary.iter().map(|&b| (b, w)).collect();
    Ok(redirect(q, outflow, &targets))
}

/// Sends all outflow to a single state.
pub fn apply_single_target(q: &SparseGenerator, outflow: &[Outflow], target: usize) -> SparseGenerator {
    redirect(q, outflow, &[(target, 1.0)])
}

/// Closed communicating classes (no positive rate leaving the class),
/// largest first; ties go to the class containing the smaller index.
pub fn closed_classes(q: &SparseGenerator) -> Vec<Vec<usize>> {
    let mut graph: DiGraph<(), ()> = DiGraph::with_capacity(q.dim(), q.nnz_offdiag());
    let nodes: Vec<_> = (0..q.dim()).map(|_| graph.add_node(())).collect();
    for r in 0..q.dim() {
        for (c, _) in q.row(r) {
            graph.add_edge(nodes[r], nodes[c], ());
        }
    }
    let sccs = tarjan_scc(&graph);
    let mut component = vec![0usize; q.dim()];
    for (k, scc) in sccs.iter().enumerate() {
        for n in scc {
            component[n.index()] = k;
        }
    }
    let mut closed: Vec<Vec<usize>> = sccs
        .iter()
        .enumerate()
        .filter(|(k, scc)| scc.iter().all(|n| q.row(n.index()).all(|(c, _)| component[c] == *k)))
        .map(|(_, scc)| {
            let mut v: Vec<usize> = scc.iter().map(|n| n.index()).collect();
            v.sort_unstable();
            v
        })
        .collect();
    closed.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    closed
}

pub fn is_irreducible(q: &SparseGenerator) -> bool {
    let closed = closed_classes(q);
    closed.len() == 1 && closed[0].len() == q.dim()
}
