use statrs::distribution::{Discrete, Poisson};
use steadytrunc::aggregation::MacroState;
use steadytrunc::generator::StateIndex;
use steadytrunc::model::{parse_model, ReactionNetwork};
use steadytrunc::oracle::{
    analytic_reference, analytic_stationary, autocorrelation, brute_force_lumped_rate, poisson_means, product_pmf,
    ssa_occupancy, ssa_trajectory, OccupancyEstimate, OracleError,
};

fn shipped(name: &str) -> ReactionNetwork {
    let path = format!("{}/models/{name}.model", env!("CARGO_MANIFEST_DIR"));
    parse_model(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Total-variation distance between an SSA estimate and Poisson(200).
fn tv_to_poisson(estimate: &OccupancyEstimate) -> f64 {
    let poisson = Poisson::new(200.0).unwrap();
    let mut seen = 0.0;
    let mut diff = 0.0;
    for (x, p) in &estimate.occupancy {
        let q = poisson.pmf(x[0] as u64);
        diff += (p - q).abs();
        seen += q;
    }
    0.5 * (diff + (1.0 - seen))
}

#[test]
fn birth_death_pmf_matches_an_independent_poisson() {
    let net = shipped("birth_death");
    assert_eq!(poisson_means(&net).unwrap(), vec![200.0]);
    let poisson = Poisson::new(200.0).unwrap();
    for k in [0, 150, 200, 260, 400] {
        let ours = product_pmf(&[200.0], &[k]);
        let theirs = poisson.pmf(k as u64);
        assert!((ours - theirs).abs() <= 1e-12 * theirs.max(1e-300), "{k}: {ours} vs {theirs}");
    }
}

#[test]
fn parallel_birth_death_mode_and_ties() {
    let net = shipped("parallel_birth_death");
    let means = poisson_means(&net).unwrap();
    assert_eq!(means, vec![100.0, 100.0]);
    let peak = product_pmf(&means, &[100, 100]);
    // an integer mean puts equal mass on mean and mean − 1
    assert!((product_pmf(&means, &[99, 100]) - peak).abs() <= 1e-15);
    assert!((product_pmf(&means, &[99, 99]) - peak).abs() <= 1e-15);
    assert!(product_pmf(&means, &[101, 100]) < peak);
    let reference = analytic_reference(&net, 1e-20).unwrap();
    let (argmax, _) = reference.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    assert!(argmax.iter().all(|&v| v == 99 || v == 100), "{argmax:?}");
}

#[test]
fn tail_box_is_renormalised() {
    let net = shipped("birth_death");
    let states = StateIndex::from_box(&[260], &[300], |_| true);
    let d = analytic_stationary(&net, &states).unwrap();
    assert!((d.total() - 1.0).abs() <= 1e-12);
    assert!(d.values.windows(2).all(|w| w[0] > w[1]));
}

#[test]
fn unsupported_models_are_rejected() {
    assert!(matches!(poisson_means(&shipped("p53")), Err(OracleError::Unsupported(_))));
    assert!(matches!(poisson_means(&shipped("exclusive_switch")), Err(OracleError::Unsupported(_))));
}

#[test]
fn brute_force_rate_examples() {
    let net = parse_model("species X, A; 2*X -> 0 @ mass_action(1); 0 -> A @ mass_action(100);").unwrap();
    let region = MacroState::new(vec![0, 0], vec![3, 0]);
    assert_eq!(brute_force_lumped_rate(&net, 0, Some(&region)).unwrap(), 4.0);
    let region = MacroState::new(vec![0, 0], vec![3, 3]);
    assert_eq!(brute_force_lumped_rate(&net, 1, Some(&region)).unwrap(), 1600.0);
    let huge = MacroState::new(vec![0, 0], vec![2000, 2000]);
    assert!(matches!(brute_force_lumped_rate(&net, 0, Some(&huge)), Err(OracleError::VolumeCap(_))));
}

#[test]
fn ssa_converges_to_the_poisson_solution() {
    let net = shipped("birth_death");
    let short = ssa_occupancy(&net, &[200], 1e4, 1e3, 11, u64::MAX).unwrap();
    let long = ssa_occupancy(&net, &[200], 1e5, 1e4, 11, u64::MAX).unwrap();
    let (tv_short, tv_long) = (tv_to_poisson(&short), tv_to_poisson(&long));
    assert!(tv_long <= 0.02, "{tv_long}");
    assert!(tv_long < tv_short, "{tv_long} vs {tv_short}");
}

#[test]
fn ssa_is_reproducible_and_normalised() {
    let net = shipped("birth_death");
    let a = ssa_occupancy(&net, &[0], 50.0, 49.9, 3, u64::MAX).unwrap();
    let b = ssa_occupancy(&net, &[0], 50.0, 49.9, 3, u64::MAX).unwrap();
    assert_eq!(a.occupancy, b.occupancy);
    assert_eq!(a.seed, 3);
    let total: f64 = a.occupancy.values().sum();
    assert!((total - 1.0).abs() <= 1e-9, "{total}");
    let c = ssa_occupancy(&net, &[0], 50.0, 49.9, 4, u64::MAX).unwrap();
    assert_ne!(a.occupancy, c.occupancy);
}

#[test]
fn ssa_guards() {
    let net = shipped("birth_death");
    assert!(matches!(ssa_occupancy(&net, &[0], 10.0, 10.0, 1, 100), Err(OracleError::Horizon { .. })));
    assert!(matches!(ssa_occupancy(&net, &[0], 1e6, 0.0, 1, 1000), Err(OracleError::JumpCap(1000))));
    assert!(matches!(ssa_occupancy(&net, &[-1], 1.0, 0.0, 1, 100), Err(OracleError::Infeasible(_))));
}

#[test]
fn merging_replicas_is_associative() {
    let net = shipped("birth_death");
    let runs: Vec<OccupancyEstimate> =
        (0..3).map(|s| ssa_occupancy(&net, &[200], 20.0 + s as f64, 2.0, s, u64::MAX).unwrap()).collect();
    let flat = OccupancyEstimate::merge(&runs);
    let nested = OccupancyEstimate::merge(&[OccupancyEstimate::merge(&runs[..2]), runs[2].clone()]);
    for (x, p) in &flat.occupancy {
        assert!((p - nested.occupancy[x]).abs() <= 1e-12);
    }
    let total: f64 = flat.occupancy.values().sum();
    assert!((total - 1.0).abs() <= 1e-9);
}

#[test]
fn p53_oscillates() {
    let net = shipped("p53");
    for seed in [1, 7] {
        let path = ssa_trajectory(&net, &[0, 0, 0], 2000.0, 0.5, seed, u64::MAX).unwrap();
        let series: Vec<f64> = path.iter().skip(100).map(|x| x[0] as f64).collect();
        let ac = autocorrelation(&series, 200);
        // after the first dip below zero the correlation comes back up
        let dip = ac.iter().position(|&v| v < 0.0).expect("correlation decays");
        let peak = ac[dip..].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(peak > 0.2, "seed {seed}: {peak}");
    }
}
