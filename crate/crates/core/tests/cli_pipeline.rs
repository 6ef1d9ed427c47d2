use std::path::Path;
use std::process::Command;

use resloc::cli::{self, Project, ProjectConfig};
use resloc::domain::io::{read_cells, read_edges, read_households};
use resloc::domain::{generate_synthetic_region, ScenarioSpec};
use resloc::simulate::{population_rng, scale_population};
use resloc::Error;

fn small(out: &Path) -> Project {
    let mut config = ProjectConfig {
        out_dir: out.to_path_buf(),
        validation_runs: 2,
        ..ProjectConfig::default()
    };
    config.synthetic.n_cells = 36;
    config.synthetic.n_households = 600;
    Project::new(config)
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn generate_round_trips_and_repeats() {
    let tmp = tempfile::tempdir().unwrap();
    let a = small(&tmp.path().join("a"));
    let b = small(&tmp.path().join("b"));
    let summary = cli::cmd_generate(&a).unwrap();
    assert!(
        summary.contains("cells: 36") && summary.contains("households: 600"),
        "{summary}"
    );
    cli::cmd_generate(&b).unwrap();
    let (region, _) = a.load_region().unwrap();
    let data = a.dir("data");
    assert_eq!(read_cells(&data.join("cells.csv")).unwrap(), region.cells());
    assert_eq!(
        read_households(&data.join("households.csv")).unwrap(),
        region.households()
    );
    assert_eq!(read_edges(&data.join("edges.csv")).unwrap(), region.edges());
    for f in [
        "cells.csv",
        "households.csv",
        "edges.csv",
        "moving_rates.csv",
    ] {
        assert_eq!(read(&data.join(f)), read(&b.dir("data").join(f)), "{f}");
    }
}

#[test]
fn generate_rejects_empty_population() {
    let tmp = tempfile::tempdir().unwrap();
    let mut p = small(tmp.path());
    p.config.synthetic.n_households = 0;
    assert!(matches!(cli::cmd_generate(&p), Err(Error::Domain(_))));
}

#[test]
fn proportional_placement_matches_the_generator() {
    let tmp = tempfile::tempdir().unwrap();
    let mut p = small(tmp.path());
    p.config.synthetic.placement = cli::Placement::Proportional;
    cli::cmd_generate(&p).unwrap();
    let (region, _) = p.load_region().unwrap();
    let direct = generate_synthetic_region(36, 600, p.config.seed).unwrap();
    assert_eq!(region.households(), direct.households());
}

#[test]
fn estimate_validate_simulate() {
    let tmp = tempfile::tempdir().unwrap();
    let p = small(tmp.path());
    cli::cmd_generate(&p).unwrap();
    assert!(
        matches!(cli::cmd_validate(&p), Err(Error::Config(_))),
        "models are needed first"
    );

    let text = cli::cmd_estimate(&p).unwrap();
    assert!(text.contains("Adjusted rho squared"), "{text}");
    let models = p.dir("models");
    let split = read(&models.join("split.csv"));
    for f in [
        "hedonic.txt",
        "residential_choice.txt",
        "choice_coefficients.csv",
        "choice_fit.csv",
    ] {
        assert!(models.join(f).exists(), "{f}");
    }
    cli::cmd_estimate(&p).unwrap();
    assert_eq!(read(&models.join("split.csv")), split);
    assert!(p.models().is_ok());

    let table = cli::cmd_validate(&p).unwrap();
    assert!(
        table.contains(cli::OBSERVED_LABEL) && table.contains(cli::SIMULATED_LABEL),
        "{table}"
    );
    assert!(table.contains("Removing data farther than 10000m"));
    let first = read(&p.dir("validate").join("indicators.csv"));
    cli::cmd_validate(&p).unwrap();
    assert_eq!(read(&p.dir("validate").join("indicators.csv")), first);

    let mut one = p.clone();
    one.runs = Some(1);
    let report = cli::validation_report(&one).unwrap();
    let sim = report.entries()[1].1;
    assert_eq!(sim.households, 120);
    assert!((sim.daa_share * 120.0 - sim.daa_households as f64).abs() < 1e-9);
    assert_eq!(sim.daa_distance.all.n, 120);

    let mut base_only = p.clone();
    base_only.scenarios = vec!["base".into()];
    base_only.runs = Some(2);
    let out = cli::cmd_simulate(&base_only).unwrap();
    assert!(!out.contains('+') && !out.contains("(-"), "{out}");
    let diff = cli::cmd_report_diff(&base_only).unwrap();
    assert!(!diff.contains('+'), "{diff}");

    let mut both = p.clone();
    both.scenarios = vec!["base".into(), "s2-policy2".into()];
    both.runs = Some(2);
    let results = cli::simulate_scenarios(&both).unwrap();
    assert_eq!(results.baseline, "base");
    let sim = p.dir("simulate");
    for f in [
        "s2-policy2_outcomes.csv",
        "s2-policy2_cell_counts.csv",
        "s2-policy2_histogram.csv",
        "s2-policy2_cell_diff.csv",
        "s2-policy2_surface.csv",
        "s2-policy2_policy_log.txt",
    ] {
        assert!(sim.join(f).exists(), "{f}");
    }
    let log = String::from_utf8(read(&sim.join("s2-policy2_policy_log.txt"))).unwrap();
    assert_eq!(log.matches("Refreshed").count(), 3, "{log}");

    let mut unknown = p.clone();
    unknown.scenarios = vec!["s7".into()];
    assert!(matches!(cli::cmd_simulate(&unknown), Err(Error::Config(_))));
}

#[test]
fn preset_scenarios_and_shared_seeds() {
    for (name, c, o) in [("base", 1.0, 1.0), ("s1", 0.75, 0.85), ("s2", 0.5, 0.7)] {
        let s = ScenarioSpec::preset(name).unwrap();
        assert_eq!((s.vot_commute_multiplier, s.vot_other_multiplier), (c, o));
        let cap = if name == "base" { 1.0 } else { 1.2 };
        assert_eq!(s.road_capacity_factor, cap);
    }
    let region = generate_synthetic_region(16, 500, 1).unwrap();
    let (a, b) = (
        ScenarioSpec::preset("s1").unwrap(),
        ScenarioSpec::preset("s2").unwrap(),
    );
    assert_eq!(a.seed, b.seed);
    let pa = scale_population(
        region.households(),
        a.population_ratio,
        &mut population_rng(a.seed),
    )
    .unwrap();
    let pb = scale_population(
        region.households(),
        b.population_ratio,
        &mut population_rng(b.seed),
    )
    .unwrap();
    assert_eq!(pa, pb);
}

#[test]
fn binary_reports_categorized_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let exe = env!("CARGO_BIN_EXE_resloc");
    let out = Command::new(exe)
        .args(["simulate", "--out"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error[config]:"), "{err}");

    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "split_fraction = 1.0\n").unwrap();
    let out = Command::new(exe)
        .args(["estimate", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("split_fraction"));

    let cfg = tmp.path().join("tiny.toml");
    std::fs::write(
        &cfg,
        "out_dir = \"run\"\n[synthetic]\nn_cells = 16\nn_households = 200\n",
    )
    .unwrap();
    let out = Command::new(exe)
        .args(["generate", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(tmp.path().join("run/data/cells.csv").exists());
    let out = Command::new(exe)
        .args([
            "simulate",
            "--preset",
            "--runs",
            "1",
            "--scenario",
            "base",
            "--scenario",
            "s1",
            "--config",
        ])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("Median distance to DAA"));
}
