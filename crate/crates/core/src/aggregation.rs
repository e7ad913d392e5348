//! Hypercube macro-states and lumped generators.
//!
//! A macro-state is an axis-aligned box over all species. Mode species always
//! have width one, so a box fixes their values and the population axes form
//! a stack of grids, one per mode combination.
//!
//! The lumped rate from cell `i` to cell `k` under reaction `j` is
//! `ᾱ_j(((x̄_i + v_j) ∩ x̄_k) − v_j) / |x̄_i|` where `ᾱ_j` sums the propensity
//! over a box in closed form.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::generator::{
    apply_uniform_reentry, GeneratorError, Outflow, SparseGenerator, StateIndex, TruncatedGenerator,
};
use crate::model::ReactionNetwork;

/// Inclusive integer box `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MacroState {
    lower: Vec<i64>,
    upper: Vec<i64>,
}

impl MacroState {
    pub fn new(lower: Vec<i64>, upper: Vec<i64>) -> Self {
        assert_eq!(lower.len(), upper.len(), "corner dimensions differ");
        assert!(lower.iter().zip(&upper).all(|(l, u)| l <= u), "empty macro-state {lower:?}..{upper:?}");
        MacroState { lower, upper }
    }

    pub fn unit(x: &[i64]) -> Self {
        MacroState { lower: x.to_vec(), upper: x.to_vec() }
    }

    pub fn lower(&self) -> &[i64] {
        &self.lower
    }

    pub fn upper(&self) -> &[i64] {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn width(&self, axis: usize) -> i64 {
        self.upper[axis] - self.lower[axis] + 1
    }

    /// Number of micro-states, exact.
    pub fn volume(&self) -> u128 {
        (0..self.dim()).map(|i| self.width(i) as u128).product()
    }

    pub fn volume_f64(&self) -> f64 {
        (0..self.dim()).map(|i| self.width(i) as f64).product()
    }

    pub fn is_unit(&self) -> bool {
        self.lower == self.upper
    }

    pub fn contains(&self, x: &[i64]) -> bool {
        x.iter().zip(&self.lower).zip(&self.upper).all(|((v, l), u)| l <= v && v <= u)
    }

    pub fn intersect(&self, other: &MacroState) -> Option<MacroState> {
        let lower: Vec<i64> = self.lower.iter().zip(&other.lower).map(|(a, b)| *a.max(b)).collect();
        let upper: Vec<i64> = self.upper.iter().zip(&other.upper).map(|(a, b)| *a.min(b)).collect();
        lower.iter().zip(&upper).all(|(l, u)| l <= u).then_some(MacroState { lower, upper })
    }

    pub fn shift(&self, v: &[i64]) -> MacroState {
        MacroState {
            lower: self.lower.iter().zip(v).map(|(a, b)| a + b).collect(),
            upper: self.upper.iter().zip(v).map(|(a, b)| a + b).collect(),
        }
    }

    /// Micro-states in lexicographic order.
    pub fn states(&self) -> impl Iterator<Item = Vec<i64>> + '_ {
        let mut next = Some(self.lower.clone());
        std::iter::from_fn(move || {
            let current = next.take()?;
            let mut x = current.clone();
            for i in (0..x.len()).rev() {
                if x[i] < self.upper[i] {
                    x[i] += 1;
                    next = Some(x);
                    break;
                }
                x[i] = self.lower[i];
            }
            Some(current)
        })
    }

    /// `self` minus `other` as disjoint boxes.
    pub fn difference(&self, other: &MacroState) -> Vec<MacroState> {
        let Some(cut) = self.intersect(other) else {
            return vec![self.clone()];
        };
        let mut out = Vec::new();
        let mut rest = self.clone();
        for i in 0..self.dim() {
            if rest.lower[i] < cut.lower[i] {
                let mut slab = rest.clone();
                slab.upper[i] = cut.lower[i] - 1;
                out.push(slab);
                rest.lower[i] = cut.lower[i];
            }
            if rest.upper[i] > cut.upper[i] {
                let mut slab = rest.clone();
                slab.lower[i] = cut.upper[i] + 1;
                out.push(slab);
                rest.upper[i] = cut.upper[i];
            }
        }
        out
    }
}

/// `((xi + v) ∩ xk) − v`: the micro-states of `xi` that move into `xk`.
pub fn transition_set(xi: &MacroState, xk: &MacroState, v: &[i64]) -> Option<MacroState> {
    xi.shift(v).intersect(xk).map(|b| b.shift(&v.iter().map(|c| -c).collect::<Vec<_>>()))
}

/// Micro-states of `xi` that leave `xi` under `v`, as disjoint boxes. For a
/// shift along several axes this is an L-shaped union of faces.
pub fn exit_set(xi: &MacroState, v: &[i64]) -> Vec<MacroState> {
    match transition_set(xi, xi, v) {
        Some(stay) => xi.difference(&stay),
        None => vec![xi.clone()],
    }
}

/// `Σ_{x ∈ region} α_j(x)`.
pub fn lumped_rate(network: &ReactionNetwork, j: usize, region: &MacroState) -> f64 {
    network.reactions()[j].region_sum(&region.lower, &region.upper)
}

/// Halves every axis of width ≥ 2 at its floor midpoint.
pub fn split(cell: &MacroState) -> Vec<MacroState> {
    let mut out = vec![cell.clone()];
    for i in 0..cell.dim() {
        let w = cell.width(i);
        if w < 2 {
            continue;
        }
        let mid = cell.lower[i] + w / 2;
        out = out
            .into_iter()
            .flat_map(|c| {
                let mut a = c.clone();
                let mut b = c;
                a.upper[i] = mid - 1;
                b.lower[i] = mid;
                [a, b]
            })
            .collect();
    }
    out.sort();
    out
}

#[derive(Debug, thiserror::Error)]
pub enum PartitionError {
    #[error("partition has {cells} cells, above the cap of {cap}; use a larger initial exponent")]
    TooLarge { cells: usize, cap: usize },
    #[error("empty partition")]
    Empty,
}

/// Cells of a regular grid anchored at the origin, sorted by lower corner.
///
/// Every population axis has cell width `2^level_exponent`; mode axes have
/// width one.
#[derive(Debug, Clone)]
pub struct Partition {
    cells: Vec<MacroState>,
    widths: Vec<i64>,
    exponent: u32,
    index: HashMap<Vec<i64>, usize>,
}

impl Partition {
    pub fn new(mut cells: Vec<MacroState>, widths: Vec<i64>, exponent: u32) -> Self {
        cells.sort();
        cells.dedup();
        let index = cells.iter().enumerate().map(|(i, c)| (c.lower.clone(), i)).collect();
        Partition { cells, widths, exponent, index }
    }

    /// Grid of `cells_per_axis[i]` cells of width `2^exponent` along every
    /// population axis, stacked over all feasible mode combinations.
    pub fn grid(
        network: &ReactionNetwork,
        cells_per_axis: &[i64],
        exponent: u32,
        cap: usize,
    ) -> Result<Self, PartitionError> {
        let n = network.num_species();
        let w = 1i64 << exponent;
        let axes = network.aggregated_axes();
        let assignments = network.mode_assignments();
        let count =
            axes.iter().map(|&i| cells_per_axis[i].max(0) as u128).product::<u128>() * assignments.len() as u128;
        if count > cap as u128 {
            return Err(PartitionError::TooLarge { cells: count.min(usize::MAX as u128) as usize, cap });
        }
        if count == 0 {
            return Err(PartitionError::Empty);
        }
        let mut widths = vec![1i64; n];
        for &i in &axes {
            widths[i] = w;
        }
        let mut lo = vec![0i64; n];
        let mut hi = vec![0i64; n];
        for &i in &axes {
            hi[i] = cells_per_axis[i] - 1;
        }
        let index_box = MacroState::new(lo.clone(), hi);
        let mut cells = Vec::with_capacity(count as usize);
        for assignment in &assignments {
            for idx in index_box.states() {
                for &i in &axes {
                    lo[i] = idx[i] * w;
                }
                for &(s, v) in assignment {
                    lo[s] = v;
                }
                let upper = lo.iter().zip(&widths).map(|(l, w)| l + w - 1).collect();
                cells.push(MacroState::new(lo.clone(), upper));
            }
        }
        Ok(Partition::new(cells, widths, exponent))
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[MacroState] {
        &self.cells
    }

    pub fn cell(&self, i: usize) -> &MacroState {
        &self.cells[i]
    }

    pub fn widths(&self) -> &[i64] {
        &self.widths
    }

    pub fn exponent(&self) -> u32 {
        self.exponent
    }

    pub fn is_unit(&self) -> bool {
        self.widths.iter().all(|&w| w == 1)
    }

    pub fn total_volume(&self) -> u128 {
        self.cells.iter().map(|c| c.volume()).sum()
    }

    pub fn index_of(&self, lower: &[i64]) -> Option<usize> {
        self.index.get(lower).copied()
    }

    /// Grid cell containing `x` (whether or not it is in the partition).
    pub fn grid_cell(&self, x: &[i64]) -> MacroState {
        let lower: Vec<i64> = x.iter().zip(&self.widths).map(|(v, w)| v.div_euclid(*w) * w).collect();
        let upper = lower.iter().zip(&self.widths).map(|(l, w)| l + w - 1).collect();
        MacroState { lower, upper }
    }

    /// Index of the partition cell containing `x`.
    pub fn locate(&self, x: &[i64]) -> Option<usize> {
        let cell = self.grid_cell(x);
        self.index_of(&cell.lower).filter(|&i| self.cells[i].contains(x))
    }

    /// Grid cells overlapping `region`.
    fn grid_cells_over(&self, region: &MacroState) -> Vec<MacroState> {
        let lo = self.grid_cell(&region.lower);
        let hi = self.grid_cell(&region.upper);
        let steps: Vec<i64> = (0..region.dim()).map(|i| (hi.lower[i] - lo.lower[i]) / self.widths[i]).collect();
        let index_box = MacroState::new(vec![0; steps.len()], steps);
        index_box
            .states()
            .map(|k| {
                let lower: Vec<i64> = lo.lower.iter().zip(&k).zip(&self.widths).map(|((l, k), w)| l + k * w).collect();
                let upper = lower.iter().zip(&self.widths).map(|(l, w)| l + w - 1).collect();
                MacroState { lower, upper }
            })
            .collect()
    }

    /// Keeps the listed cells and splits each into `2^d` children.
    pub fn split_cells(&self, keep: &[usize]) -> Partition {
        let cells: Vec<MacroState> = keep.iter().flat_map(|&i| split(&self.cells[i])).collect();
        let widths = self.widths.iter().map(|&w| (w / 2).max(1)).collect();
        Partition::new(cells, widths, self.exponent.saturating_sub(1))
    }

    /// Micro-state index of a unit partition.
    pub fn to_state_index(&self) -> StateIndex {
        debug_assert!(self.is_unit());
        StateIndex::new(self.widths.len(), self.cells.iter().map(|c| c.lower.clone()))
    }

    /// Unit partition with the given micro-states.
    pub fn from_states(states: &StateIndex) -> Partition {
        let cells = states.states().iter().map(|x| MacroState::unit(x)).collect();
        Partition::new(cells, vec![1; states.dim()], 0)
    }
}

/// Lumped generator with outflow kept aside, plus the in-boundary cells.
#[derive(Debug, Clone)]
pub struct LumpedGenerator {
    pub truncated: TruncatedGenerator,
    pub inboundary: Vec<usize>,
}

impl LumpedGenerator {
    pub fn generator(&self) -> &SparseGenerator {
        &self.truncated.generator
    }

    pub fn outflow(&self) -> &[Outflow] {
        &self.truncated.outflow
    }

    pub fn uniform_reentry(&self) -> Result<SparseGenerator, GeneratorError> {
        apply_uniform_reentry(&self.truncated.generator, &self.truncated.outflow, &self.inboundary)
    }
}

fn clip_to_orthant(region: &MacroState) -> Option<MacroState> {
    let lower: Vec<i64> = region.lower.iter().map(|&l| l.max(0)).collect();
    lower.iter().zip(&region.upper).all(|(l, u)| l <= u).then(|| MacroState { lower, upper: region.upper.clone() })
}

/// Assembles the lumped generator of `partition`. Transitions into grid
/// cells outside the partition become outflow; transitions into infeasible
/// states are not transitions.
pub fn build_lumped_generator(network: &ReactionNetwork, partition: &Partition) -> LumpedGenerator {
    let reactions = network.reactions();
    let rows: Vec<(Vec<(usize, f64)>, Vec<Outflow>, bool)> = (0..partition.len())
        .into_par_iter()
        .map(|i| {
            let cell = &partition.cells[i];
            let volume = cell.volume_f64();
            let mut row = Vec::new();
            let mut out = Vec::new();
            for (j, r) in reactions.iter().enumerate() {
                let v = r.change();
                if v.iter().all(|&c| c == 0) {
                    continue;
                }
                let Some(image) = clip_to_orthant(&cell.shift(v)) else {
                    continue;
                };
                for target in partition.grid_cells_over(&image) {
                    if !network.is_feasible(&target.lower) {
                        continue;
                    }
                    let Some(t) = transition_set(cell, &target, v) else {
                        continue;
                    };
                    let rate = lumped_rate(network, j, &t);
                    if rate <= 0.0 {
                        continue;
                    }
                    match partition.index_of(&target.lower) {
                        Some(k) if k == i => {}
                        Some(k) => row.push((k, rate / volume)),
                        None => out.push(Outflow { source: i, reaction: j, rate: rate / volume }),
                    }
                }
            }
            let inboundary = reactions.iter().enumerate().any(|(j, r)| {
                let v = r.change();
                let back: Vec<i64> = v.iter().map(|c| -c).collect();
                let Some(preimage) = clip_to_orthant(&cell.shift(&back)) else {
                    return false;
                };
                partition.grid_cells_over(&preimage).into_iter().any(|source| {
                    partition.index_of(&source.lower).is_none()
                        && network.is_feasible(&source.lower)
                        && transition_set(&source, cell, v).is_some_and(|t| lumped_rate(network, j, &t) > 0.0)
                })
            });
            (row, out, inboundary)
        })
        .collect();
    let mut matrix_rows = Vec::with_capacity(rows.len());
    let mut outflow = Vec::new();
    let mut inboundary = Vec::new();
    for (i, (row, out, b)) in rows.into_iter().enumerate() {
        matrix_rows.push(row);
        outflow.extend(out);
        if b {
            inboundary.push(i);
        }
    }
    LumpedGenerator {
        truncated: TruncatedGenerator { generator: SparseGenerator::from_rows(matrix_rows), outflow },
        inboundary,
    }
}
