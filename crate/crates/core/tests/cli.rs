use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use steadytrunc::cli::{execute, read_distribution, validate_summary, DiffReport, RunConfig};

fn model(name: &str) -> PathBuf {
    PathBuf::from(format!("{}/models/{name}.model", env!("CARGO_MANIFEST_DIR")))
}

fn steadytrunc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_steadytrunc")).args(args).output().expect("binary runs")
}

fn run_in(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    steadytrunc(&args)
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn birth_death_run_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("bd");
    let m = model("birth_death");
    let o = run_in(&out, &["--model", m.to_str().unwrap(), "--oracle", "analytic", "--bounds", "--epsilon", "1e-4"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for file in [
        "distribution.csv",
        "summary.json",
        "iterations.csv",
        "bounds.csv",
        "marginal_S.csv",
        "oracle_distribution.csv",
    ] {
        assert!(out.join(file).is_file(), "{file} missing");
    }
    let summary = read_json(&out.join("summary.json"));
    validate_summary(&summary).unwrap();
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["complete"], true);
    assert!(summary["bounds"]["total_width"].as_f64().unwrap() >= 0.0);
    assert!(summary["oracle"]["outside_mass"].as_f64().unwrap() < 1e-3);
}

#[test]
fn distribution_csv_round_trips_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("pbd");
    let m = model("parallel_birth_death");
    let o = run_in(&out, &["--model", m.to_str().unwrap(), "--grid-cells", "70", "--epsilon", "0.1"]);
    assert_eq!(o.status.code(), Some(0));

    let mut config = RunConfig::new(&m, tmp.path().join("unused"));
    config.epsilon = 0.1;
    config.grid_cells = Some(vec![70]);
    let memory = execute(&config).unwrap();
    let states = memory.result.truncation().unwrap();

    let table = read_distribution(&out.join("distribution.csv")).unwrap();
    assert_eq!(table.species, ["A", "B"]);
    assert_eq!(table.rows.len(), states.len());
    for ((x, p), (y, q)) in table.rows.iter().zip(states.states().iter().zip(&memory.result.distribution.values)) {
        assert_eq!(x, y);
        assert_eq!(p.to_bits(), q.to_bits(), "{x:?}: {p:e} vs {q:e}");
    }
}

#[test]
fn diff_against_the_analytic_solution() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("pbd");
    let m = model("parallel_birth_death");
    let o = run_in(
        &out,
        &["--model", m.to_str().unwrap(), "--grid-cells", "70", "--epsilon", "0.1", "--oracle", "analytic"],
    );
    assert_eq!(o.status.code(), Some(0));
    let (a, b) = (out.join("distribution.csv"), out.join("oracle_distribution.csv"));
    let o = steadytrunc(&["diff", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let report: DiffReport = serde_json::from_slice(&o.stdout).unwrap();
    // reference total 3.54e-2
    assert!((report.total_abs_diff - 3.54e-2).abs() <= 0.05 * 3.54e-2, "{report:?}");
    // reference max 6.04e-5; same order of magnitude
    assert!(report.max_abs_diff > 6.04e-6 && report.max_abs_diff < 6.04e-4, "{report:?}");
    assert!(report.mass_outside_intersection > 0.0);

    let o = steadytrunc(&["diff", a.to_str().unwrap(), a.to_str().unwrap()]);
    let same: DiffReport = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!((same.total_abs_diff, same.max_abs_diff, same.mass_outside_intersection), (0.0, 0.0, 0.0));
}

#[test]
fn diff_rejects_mismatched_dimensions() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a.csv");
    let b = tmp.path().join("b.csv");
    std::fs::write(&a, "S,probability\n0,1.0\n").unwrap();
    std::fs::write(&b, "A,B,probability\n0,0,1.0\n").unwrap();
    let o = steadytrunc(&["diff", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_model_is_an_input_error_with_no_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("none");
    let o = run_in(&out, &["--model", "/nonexistent/model.file"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists() || std::fs::read_dir(&out).unwrap().next().is_none());
}

#[test]
fn bad_inputs_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let broken = tmp.path().join("broken.model");
    std::fs::write(&broken, "species S; S -> @ mass_action(1);").unwrap();
    let m = model("birth_death");
    let p53 = model("p53");
    let cases: Vec<Vec<&str>> = vec![
        vec!["--model", broken.to_str().unwrap()],
        vec!["--model", m.to_str().unwrap(), "--epsilon", "2"],
        vec!["--model", m.to_str().unwrap(), "--solver", "magic"],
        vec!["--model", p53.to_str().unwrap(), "--oracle", "analytic", "--max-levels", "1"],
    ];
    for (i, args) in cases.iter().enumerate() {
        let out = tmp.path().join(format!("case{i}"));
        let o = run_in(&out, args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!out.join("summary.json").exists());
    }
}

#[test]
fn thread_cap_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    let m = model("birth_death");
    let mut tables = Vec::new();
    for threads in ["1", "3", "not-a-number"] {
        let out = tmp.path().join(format!("t{threads}"));
        let o = Command::new(env!("CARGO_BIN_EXE_steadytrunc"))
            .args(["--model", m.to_str().unwrap(), "--bounds", "--out", out.to_str().unwrap()])
            .env("STEADYTRUNC_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0));
        tables.push((
            std::fs::read(out.join("distribution.csv")).unwrap(),
            std::fs::read(out.join("bounds.csv")).unwrap(),
        ));
        if threads == "not-a-number" {
            assert!(String::from_utf8_lossy(&o.stderr).contains("STEADYTRUNC_THREADS"));
        }
    }
    assert!(tables.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn ssa_oracle_is_seeded() {
    let tmp = tempfile::tempdir().unwrap();
    let m = model("birth_death");
    let mut masses = Vec::new();
    for (dir, seed) in [("a", "5"), ("b", "5"), ("c", "6")] {
        let out = tmp.path().join(dir);
        let o = run_in(
            &out,
            &[
                "--model",
                m.to_str().unwrap(),
                "--oracle",
                "ssa",
                "--seed",
                seed,
                "--ssa-horizon",
                "2000",
                "--epsilon",
                "0.1",
            ],
        );
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let summary = read_json(&out.join("summary.json"));
        assert_eq!(summary["config"]["seed"].as_u64().unwrap().to_string(), seed);
        masses.push(summary["oracle"]["outside_mass"].as_f64().unwrap());
    }
    assert_eq!(masses[0], masses[1]);
    assert_ne!(masses[0], masses[2]);
}

#[test]
fn help_exits_cleanly() {
    let o = steadytrunc(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    for flag in [
        "--model",
        "--epsilon",
        "--epsilon-l",
        "--init-exponent",
        "--solver",
        "--bounds",
        "--out",
        "--seed",
        "--oracle",
    ] {
        assert!(text.contains(flag), "{flag}");
    }
}
