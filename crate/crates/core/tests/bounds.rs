use steadytrunc::bounds::statewise_bounds;
use steadytrunc::generator::{apply_single_target, build_generator, inboundary_states, StateIndex};
use steadytrunc::model::{parse_model, ReactionNetwork};
use steadytrunc::oracle::analytic_stationary;
use steadytrunc::refinement::{refine, RefinementConfig};
use steadytrunc::solver::{solve_stationary, SolverMethod};

fn shipped(name: &str) -> ReactionNetwork {
    let path = format!("{}/models/{name}.model", env!("CARGO_MANIFEST_DIR"));
    parse_model(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_valid_envelope(lower: &[f64], upper: &[f64]) {
    assert!(lower.iter().zip(upper).all(|(l, u)| 0.0 <= *l && l <= u && *u <= 1.0));
    let (sl, su): (f64, f64) = (lower.iter().sum(), upper.iter().sum());
    assert!(sl <= 1.0 + 1e-12 && su >= 1.0 - 1e-12, "{sl} {su}");
}

#[test]
fn conditional_poisson_lies_inside_the_bounds_in_one_dimension() {
    let net = shipped("birth_death");
    let states = StateIndex::from_box(&[150], &[260], |_| true);
    let (r, _) = statewise_bounds(&net, &states, SolverMethod::Auto).unwrap();
    assert_eq!(r.targets.len(), 2);
    assert_valid_envelope(&r.lower, &r.upper);
    let exact = analytic_stationary(&net, &states).unwrap();
    for (i, p) in exact.values.iter().enumerate() {
        assert!(r.lower[i] - 1e-12 <= *p && *p <= r.upper[i] + 1e-12, "state {i}");
    }
}

#[test]
fn one_sided_truncation_is_exact() {
    // {0..n} has a single in-boundary state, and redirecting to it gives
    // the conditional distribution exactly
    let net = shipped("birth_death");
    let states = StateIndex::from_box(&[0], &[260], |_| true);
    let (r, uniform) = statewise_bounds(&net, &states, SolverMethod::Auto).unwrap();
    assert_eq!(r.targets, vec![260]);
    assert!(r.max_width <= 1e-12);
    let exact = analytic_stationary(&net, &states).unwrap();
    let diff: f64 = uniform.values.iter().zip(&exact.values).map(|(a, b)| (a - b).abs()).sum();
    assert!(diff <= 1e-10);
}

#[test]
fn conditional_product_poisson_lies_inside_the_bounds() {
    let net = shipped("parallel_birth_death");
    let states = StateIndex::from_box(&[70, 70], &[130, 130], |_| true);
    let (r, uniform) = statewise_bounds(&net, &states, SolverMethod::Auto).unwrap();
    assert!(!r.is_partial());
    assert_valid_envelope(&r.lower, &r.upper);
    let exact = analytic_stationary(&net, &states).unwrap();
    for i in 0..states.len() {
        let p = exact.values[i];
        assert!(r.lower[i] - 1e-12 <= p && p <= r.upper[i] + 1e-12, "state {:?}", states.state(i));
        assert!(r.lower[i] - 1e-12 <= uniform.values[i] && uniform.values[i] <= r.upper[i] + 1e-12);
    }
}

#[test]
fn envelope_is_the_pointwise_hull_of_single_target_solutions() {
    let net = shipped("parallel_birth_death");
    let states = StateIndex::from_box(&[80, 80], &[120, 120], |_| true);
    let (r, _) = statewise_bounds(&net, &states, SolverMethod::Auto).unwrap();
    let t = build_generator(&net, &states);
    let targets = inboundary_states(&net, &states);
    assert_eq!(r.targets, targets);
    let mut lower = vec![f64::INFINITY; states.len()];
    let mut upper = vec![0.0f64; states.len()];
    for &b in &targets {
        let d = solve_stationary(&apply_single_target(&t.generator, &t.outflow, b), SolverMethod::Dense).unwrap();
        for (i, p) in d.values.iter().enumerate() {
            lower[i] = lower[i].min(*p);
            upper[i] = upper[i].max(*p);
        }
    }
    for i in 0..states.len() {
        assert!((r.lower[i] - lower[i]).abs() <= 1e-12);
        assert!((r.upper[i] - upper[i]).abs() <= 1e-12);
    }
}

#[test]
fn width_shrinks_as_the_truncation_grows() {
    let net = shipped("birth_death");
    let mut previous = f64::INFINITY;
    for epsilon in [1e-1, 1e-2, 1e-3, 1e-4] {
        let result = refine(&net, &RefinementConfig { epsilon, ..Default::default() }).unwrap();
        let states = result.truncation().unwrap();
        let (r, _) = statewise_bounds(&net, &states, SolverMethod::Auto).unwrap();
        assert_valid_envelope(&r.lower, &r.upper);
        assert!(r.total_width < previous, "epsilon {epsilon}: {} not below {previous}", r.total_width);
        previous = r.total_width;
    }
}
