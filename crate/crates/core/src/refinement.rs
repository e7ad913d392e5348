//! Iterative refinement: solve the lumped model, keep the smallest set of
//! cells holding `1 − ε` of the mass, split the survivors, repeat until the
//! cells are single states, then solve once more without filtering.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::aggregation::{build_lumped_generator, MacroState, Partition, PartitionError};
use crate::generator::{GeneratorError, StateIndex};
use crate::lyapunov::{lyapunov_box, LyapunovError, LyapunovSpec};
use crate::model::ReactionNetwork;
use crate::solver::{solve_on_closed_class, Distribution, SolveOptions, SolverError, SolverMethod};

#[derive(Debug, thiserror::Error)]
pub enum RefinementError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Lyapunov(#[from] LyapunovError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error("level {level}: {source}")]
    Generator { level: u32, source: GeneratorError },
    #[error("level {level}: {source}")]
    Solver { level: u32, source: SolverError },
}

impl RefinementError {
    /// Input problems as opposed to numerical failures.
    pub fn is_input_error(&self) -> bool {
        matches!(self, RefinementError::Config(_) | RefinementError::Lyapunov(_) | RefinementError::Partition(_))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefinementConfig {
    /// Truncation threshold; each filter keeps at least `1 − epsilon` mass.
    pub epsilon: f64,
    /// Initial cell width is `2^init_exponent`.
    pub init_exponent: u32,
    /// Lyapunov threshold for the initial region.
    pub epsilon_l: f64,
    /// Largest partition the driver will build.
    pub max_states: usize,
    pub solver: SolverMethod,
    /// Per-species inclusive upper bounds of the initial region; overrides
    /// the Lyapunov box.
    pub initial_box: Option<Vec<i64>>,
    /// Cells per population axis of the initial grid; overrides
    /// `initial_box`. One entry applies to every axis.
    pub grid_cells: Option<Vec<i64>>,
    /// Stop after this many filter-and-split steps.
    pub max_levels: Option<u32>,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        RefinementConfig {
            epsilon: 1e-2,
            init_exponent: 7,
            epsilon_l: 1e-4,
            max_states: 2_000_000,
            solver: SolverMethod::Auto,
            initial_box: None,
            grid_cells: None,
            max_levels: None,
        }
    }
}

impl RefinementConfig {
    pub fn validate(&self) -> Result<(), RefinementError> {
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(RefinementError::Config(format!("epsilon must lie in [0, 1), got {}", self.epsilon)));
        }
        if !(self.epsilon_l > 0.0 && self.epsilon_l < 1.0) {
            return Err(RefinementError::Config(format!("epsilon_l must lie in (0, 1), got {}", self.epsilon_l)));
        }
        if self.init_exponent > 40 {
            return Err(RefinementError::Config("init_exponent above 40".into()));
        }
        if let Some(cells) = &self.grid_cells {
            if cells.is_empty() || cells.iter().any(|&c| c < 1) {
                return Err(RefinementError::Config("grid cell counts must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Telemetry for one solve.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct IterationReport {
    pub level: u32,
    /// Cell width along population axes.
    pub cell_width: u64,
    pub states: usize,
    pub micro_states: f64,
    pub residual: f64,
    /// Cells kept by the filter; equal to `states` after the final solve.
    pub kept: usize,
    pub kept_mass: f64,
    /// Set when the solve was restricted to the largest closed class.
    pub restricted: bool,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct RefinementResult {
    /// Partition of the last solve; unit cells when the run completed.
    pub partition: Partition,
    pub distribution: Distribution,
    pub reports: Vec<IterationReport>,
    /// Lyapunov data used for the initial region, if any.
    pub lyapunov: Option<LyapunovSpec>,
    pub initial_cells: usize,
    pub initial_micro_states: u128,
    pub complete: bool,
    pub warnings: Vec<String>,
}

impl RefinementResult {
    pub fn truncation(&self) -> Option<StateIndex> {
        self.partition.is_unit().then(|| self.partition.to_state_index())
    }

    pub fn final_size(&self) -> usize {
        self.partition.len()
    }
}

/// Cells per population axis for a cube `[0..n]^d` covering `upper`, with
/// `n` the largest population bound.
pub fn cells_for_box(network: &ReactionNetwork, upper: &[i64], exponent: u32) -> Vec<i64> {
    let w = 1i64 << exponent;
    let axes = network.aggregated_axes();
    let n = axes.iter().map(|&i| upper[i]).max().unwrap_or(0).max(0);
    let per_axis = n / w + 1;
    (0..network.num_species()).map(|i| if axes.contains(&i) { per_axis } else { 1 }).collect()
}

/// Grid of width-`2^exponent` cells anchored at the origin covering the box,
/// stacked over mode combinations.
pub fn initial_partition(
    network: &ReactionNetwork,
    upper: &[i64],
    exponent: u32,
    cap: usize,
) -> Result<Partition, PartitionError> {
    Partition::grid(network, &cells_for_box(network, upper, exponent), exponent, cap)
}

/// Indices (ascending) of the shortest prefix of cells, sorted by
/// descending mass with ties broken by cell order, whose mass reaches
/// `1 − epsilon`. Zero-mass cells are never kept.
pub fn filter_states(values: &[f64], epsilon: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).filter(|&i| values[i] > 0.0).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let target = 1.0 - epsilon;
    let mut mass = 0.0;
    let mut keep = Vec::new();
    for i in order {
        if mass >= target {
            break;
        }
        mass += values[i];
        keep.push(i);
    }
    keep.sort_unstable();
    keep
}

fn grid_override(network: &ReactionNetwork, cells: &[i64]) -> Result<Vec<i64>, RefinementError> {
    let axes = network.aggregated_axes();
    let per_axis: Vec<i64> = match cells.len() {
        1 => vec![cells[0]; axes.len()],
        k if k == axes.len() => cells.to_vec(),
        k => {
            return Err(RefinementError::Config(format!(
                "{k} grid cell counts given, network has {} population species",
                axes.len()
            )))
        }
    };
    let mut out = vec![1; network.num_species()];
    for (&i, c) in axes.iter().zip(per_axis) {
        out[i] = c;
    }
    Ok(out)
}

/// Runs the refinement loop.
pub fn refine(network: &ReactionNetwork, config: &RefinementConfig) -> Result<RefinementResult, RefinementError> {
    config.validate()?;
    let m = config.init_exponent;
    let mut lyapunov = None;
    let cells = if let Some(cells) = &config.grid_cells {
        grid_override(network, cells)?
    } else if let Some(upper) = &config.initial_box {
        if upper.len() != network.num_species() {
            return Err(RefinementError::Config("initial box needs one bound per species".into()));
        }
        cells_for_box(network, upper, m)
    } else {
        let spec = LyapunovSpec::for_network(network, config.epsilon_l)?;
        let upper = lyapunov_box(network, &spec)?;
        log::info!("Lyapunov drift supremum c = {}, box upper corner {:?}", spec.c, upper);
        lyapunov = Some(spec);
        cells_for_box(network, &upper, m)
    };
    let mut partition = Partition::grid(network, &cells, m, config.max_states)?;
    let initial_cells = partition.len();
    let initial_micro_states = partition.total_volume();
    log::info!("initial partition: {initial_cells} cells of width 2^{m}");

    let mut reports = Vec::new();
    let mut warnings = Vec::new();
    let mut warm: Option<Vec<f64>> = None;
    let mut level = 0u32;
    loop {
        let started = Instant::now();
        let lumped = build_lumped_generator(network, &partition);
        let q = lumped.uniform_reentry().map_err(|source| RefinementError::Generator { level, source })?;
        let options = SolveOptions { method: config.solver, warm_start: warm.take(), krylov: None };
        let (mut distribution, restricted) =
            solve_on_closed_class(&q, &options).map_err(|source| RefinementError::Solver { level, source })?;
        if restricted {
            let msg = format!("level {level}: lumped chain is reducible; solved on its largest closed class");
            log::warn!("{msg}");
            warnings.push(msg);
        }
        let unit = partition.is_unit();
        let stop = unit || config.max_levels.is_some_and(|l| level >= l);
        if unit && restricted {
            let keep: Vec<usize> = (0..partition.len()).filter(|&i| distribution.values[i] > 0.0).collect();
            partition = Partition::new(
                keep.iter().map(|&i| partition.cell(i).clone()).collect(),
                partition.widths().to_vec(),
                0,
            );
            distribution.values = keep.iter().map(|&i| distribution.values[i]).collect();
        }
        let (keep, kept_mass) = if stop {
            ((0..partition.len()).collect::<Vec<_>>(), distribution.total())
        } else {
            let keep = filter_states(&distribution.values, config.epsilon);
            let mass: f64 = keep.iter().map(|&i| distribution.values[i]).sum();
            assert!(mass >= 1.0 - config.epsilon - 1e-12, "filter kept only {mass} of the mass");
            (keep, mass)
        };
        let report = IterationReport {
            level,
            cell_width: partition.widths().iter().copied().max().unwrap_or(1) as u64,
            states: partition.len(),
            micro_states: partition.total_volume() as f64,
            residual: distribution.residual,
            kept: keep.len(),
            kept_mass,
            restricted,
            wall_time_s: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "level {}: {} cells of width {}, residual {:.2e}, kept {} ({:.6})",
            report.level,
            report.states,
            report.cell_width,
            report.residual,
            report.kept,
            report.kept_mass
        );
        reports.push(report);
        if stop {
            return Ok(RefinementResult {
                partition,
                distribution,
                reports,
                lyapunov,
                initial_cells,
                initial_micro_states,
                complete: unit,
                warnings,
            });
        }
        let next = partition.split_cells(&keep);
        if next.len() > config.max_states {
            return Err(RefinementError::Partition(PartitionError::TooLarge {
                cells: next.len(),
                cap: config.max_states,
            }));
        }
        warm = Some(map_warm_start(&partition, &distribution.values, &keep, &next));
        partition = next;
        level += 1;
    }
}

/// Spreads each kept parent's mass evenly over its children.
fn map_warm_start(parent: &Partition, values: &[f64], keep: &[usize], children: &Partition) -> Vec<f64> {
    let mut out = vec![0.0; children.len()];
    for &i in keep {
        let cell: &MacroState = parent.cell(i);
        let kids = crate::aggregation::split(cell);
        let share = values[i] / kids.len() as f64;
        for k in kids {
            if let Some(idx) = children.index_of(k.lower()) {
                out[idx] = share;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;

    #[test]
    fn filter_prefix_examples() {
        assert_eq!(filter_states(&[0.5, 0.3, 0.15, 0.05], 0.1), vec![0, 1, 2]);
        assert_eq!(filter_states(&[0.05, 0.15, 0.3, 0.5], 0.1), vec![1, 2, 3]);
        assert_eq!(filter_states(&[0.5, 0.0, 0.5], 0.0), vec![0, 2]);
        // ties go to the earlier cell
        assert_eq!(filter_states(&[0.25, 0.25, 0.25, 0.25], 0.5), vec![0, 1]);
    }

    #[test]
    fn cube_covering_the_box() {
        let net = parse_model("species A, B; 0 -> A @ mass_action(1); A -> 0 @ mass_action(1); 0 -> B @ mass_action(1); B -> 0 @ mass_action(1);").unwrap();
        assert_eq!(cells_for_box(&net, &[300, 10], 7), vec![3, 3]);
        assert_eq!(cells_for_box(&net, &[255, 0], 7), vec![2, 2]);
        let p = initial_partition(&net, &[255, 0], 7, 100).unwrap();
        assert_eq!(p.len(), 4);
    }

    #[test]
    fn birth_death_refines_to_unit_cells() {
        let net = parse_model("species S; 0 -> S @ mass_action(20); S -> 0 @ mass_action(1);").unwrap();
        let config =
            RefinementConfig { epsilon: 1e-3, init_exponent: 3, initial_box: Some(vec![100]), ..Default::default() };
        let result = refine(&net, &config).unwrap();
        assert!(result.complete);
        assert_eq!(result.reports.len(), 4);
        assert_eq!(result.initial_cells, 13);
        let widths: Vec<u64> = result.reports.iter().map(|r| r.cell_width).collect();
        assert_eq!(widths, vec![8, 4, 2, 1]);
        assert!((result.distribution.total() - 1.0).abs() < 1e-12);
    }
}
