use std::collections::HashMap;
use std::sync::OnceLock;

use proptest::prelude::*;
use steadytrunc::model::{parse_model, ReactionNetwork};
use steadytrunc::oracle::{analytic_outside_mass, analytic_pmf};
use steadytrunc::refinement::{filter_states, refine, RefinementConfig, RefinementError, RefinementResult};

fn shipped(name: &str) -> ReactionNetwork {
    let path = format!("{}/models/{name}.model", env!("CARGO_MANIFEST_DIR"));
    parse_model(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Model 2 on a 70 x 70 grid of width-128 cells, one run per epsilon.
fn parallel_run(epsilon: f64) -> &'static RefinementResult {
    static RUNS: OnceLock<HashMap<u64, RefinementResult>> = OnceLock::new();
    let runs = RUNS.get_or_init(|| {
        let net = shipped("parallel_birth_death");
        [1e-1, 1e-2, 1e-3]
            .into_iter()
            .map(|eps| {
                let config = RefinementConfig { epsilon: eps, grid_cells: Some(vec![70]), ..Default::default() };
                (eps.to_bits(), refine(&net, &config).unwrap())
            })
            .collect()
    });
    &runs[&epsilon.to_bits()]
}

#[test]
fn parallel_birth_death_starts_from_4900_cells() {
    let r = parallel_run(1e-2);
    assert_eq!(r.initial_cells, 4900);
    assert_eq!(r.initial_micro_states, 4900 * 128 * 128);
}

#[test]
fn cell_widths_halve_each_level() {
    let net = shipped("birth_death");
    let m = 5;
    let r = refine(&net, &RefinementConfig { init_exponent: m, ..Default::default() }).unwrap();
    assert!(r.complete);
    assert_eq!(r.reports.len(), m as usize + 1);
    for (i, report) in r.reports.iter().enumerate() {
        assert_eq!(report.level, i as u32);
        assert_eq!(report.cell_width, 1u64 << (m as usize - i));
    }
    assert_eq!(r.reports.last().unwrap().cell_width, 1);
}

#[test]
fn final_size_grows_as_epsilon_shrinks() {
    let sizes: Vec<usize> = [1e-1, 1e-2, 1e-3].iter().map(|&e| parallel_run(e).final_size()).collect();
    assert!(sizes.windows(2).all(|w| w[0] < w[1]), "{sizes:?}");
}

#[test]
fn parallel_birth_death_error_at_one_percent() {
    let net = shipped("parallel_birth_death");
    let r = parallel_run(1e-2);
    let states = r.truncation().expect("run completes");
    let exact = analytic_pmf(&net, &states).unwrap();
    let inside: f64 = r.distribution.values.iter().zip(&exact).map(|(a, b)| (a - b).abs()).sum();
    let total = inside + analytic_outside_mass(&net, &states).unwrap();
    // same order of magnitude as the reference value 6.22e-4
    assert!(total > 6.22e-5 && total < 6.22e-3, "total error {total:e}");
}

#[test]
fn every_filter_keeps_enough_mass() {
    for eps in [1e-1, 1e-2, 1e-3] {
        let r = parallel_run(eps);
        assert!(r.complete);
        for report in &r.reports[..r.reports.len() - 1] {
            assert!(report.kept_mass >= 1.0 - eps - 1e-12, "{report:?}");
        }
    }
}

#[test]
fn birth_death_result_is_spread_out() {
    let net = shipped("birth_death");
    let r = refine(&net, &RefinementConfig::default()).unwrap();
    assert!(r.complete);
    let states = r.truncation().unwrap();
    let peak = r.distribution.values.iter().cloned().fold(0.0, f64::max);
    // Poisson(200) has its largest probability near 0.028
    assert!(peak < 0.05, "{peak}");
    assert!(states.len() > 50);
    let mean: f64 = states.states().iter().zip(&r.distribution.values).map(|(x, p)| x[0] as f64 * p).sum();
    assert!((mean - 200.0).abs() < 1.0, "{mean}");
}

#[test]
fn oversized_partition_is_rejected() {
    let net = shipped("parallel_birth_death");
    let config = RefinementConfig { grid_cells: Some(vec![70]), max_states: 1000, ..Default::default() };
    let err = refine(&net, &config).unwrap_err();
    assert!(err.is_input_error());
    assert!(matches!(err, RefinementError::Partition(_)));
}

#[test]
fn bad_epsilon_is_rejected() {
    let net = shipped("birth_death");
    for epsilon in [1.0, -0.5, f64::NAN] {
        let err = refine(&net, &RefinementConfig { epsilon, ..Default::default() }).unwrap_err();
        assert!(err.is_input_error());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn filter_keeps_the_shortest_heavy_prefix(
        raw in prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..1.0], 1..200),
        epsilon in 1e-6f64..0.99,
    ) {
        let total: f64 = raw.iter().sum();
        prop_assume!(total > 0.0);
        let values: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let keep = filter_states(&values, epsilon);
        prop_assert!(keep.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(keep.iter().all(|&i| values[i] > 0.0));
        let mass: f64 = keep.iter().map(|&i| values[i]).sum();
        let positive: f64 = values.iter().filter(|&&v| v > 0.0).sum();
        prop_assert!(mass >= (1.0 - epsilon).min(positive) - 1e-12);
        // dropping the lightest kept cell must fall short of the target
        let lightest = keep.iter().map(|&i| values[i]).fold(f64::INFINITY, f64::min);
        prop_assert!(mass - lightest < 1.0 - epsilon);
        // nothing left out is heavier than what was kept
        let heaviest_dropped = (0..values.len()).filter(|i| !keep.contains(i)).map(|i| values[i]).fold(0.0, f64::max);
        prop_assert!(heaviest_dropped <= lightest);
    }
}
