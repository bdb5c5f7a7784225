use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use carbon_market::clearing::clear_flexible_demand;
use carbon_market::metrics::compute_metrics;
use carbon_market::model::{builtin_three_bus, ClearingModelKind};
use carbon_market_cli::harness::{aggregate, run_experiment, ExperimentConfig, RunStatus, METRICS};
use carbon_market_cli::report::{load_results, render};
use carbon_market_cli::stats::BoxStats;
use carbon_market_cli::Format;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_carbon-market")).args(args).env_remove("CARBON_MARKET_WORKERS").output().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn rts_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/rts-gmlc")
}

const INFEASIBLE: &str = r#"
version = 1
[scenario]
network = "inline"

[[bus]]
id = "1"
is_reference = true

[[generator]]
id = "G1"
bus = "1"
cost_usd_per_mwh = 10.0
p_min_mw = 0.0
p_max_mw = 5.0
emission_intensity_t_per_mwh = 0.5

[[consumer]]
id = "D1"
bus = "1"
utility_usd_per_mwh = 50.0
p_min_mw = 8.0
p_max_mw = 10.0
carbon_cost_usd_per_t = 0.0
"#;

#[test]
fn solve_three_bus_carbon_cost() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sol.json");
    let o = bin(&["solve", "--model", "carbon-cost", "--network", "builtin:3bus", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = json(&out);
    assert_eq!(v["metrics"]["total_generation"].as_f64().unwrap(), 48.0);
    assert_eq!(v["solution"]["p_g"], serde_json::json!([20.0, 3.0, 25.0]));
}

#[test]
fn solve_fixed_on_rts() {
    let net = format!("rts-gmlc:{}", rts_dir().display());
    let o = bin(&["solve", "--model", "fixed", "--network", &net, "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[1], "fixed-demand");
    assert!((row[2].parse::<f64>().unwrap() - 8550.0).abs() < 1e-6);
}

#[test]
fn malformed_scenario_is_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    std::fs::write(&p, "version = 1\n[scenario]\nnetwork = \"builtin:3bus\"\ndemand_flex_floor = \"high\"\n").unwrap();
    let o = bin(&["solve", "--scenario", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("demand_flex_floor"), "{}", stderr(&o));

    std::fs::write(&p, "version = 1\n[scenario]\nnetwork = \"builtin:3bus\"\ncolour = 1\n").unwrap();
    let o = bin(&["solve", "--scenario", p.to_str().unwrap(), "--strict"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("scenario.colour"), "{}", stderr(&o));
    // lenient mode warns and solves
    assert_eq!(bin(&["solve", "--scenario", p.to_str().unwrap()]).status.code(), Some(0));
}

#[test]
fn exit_codes_for_bad_flags_and_infeasible_input() {
    assert_eq!(bin(&["solve", "--network", "builtin:9bus"]).status.code(), Some(2));
    assert_eq!(bin(&["solve", "--model", "nlp"]).status.code(), Some(2));
    assert_eq!(bin(&["solve", "--range", "60:30"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("short.toml");
    std::fs::write(&p, INFEASIBLE).unwrap();
    for model in ["carbon-cost", "fixed", "flexible", "carbon-flow"] {
        let o = bin(&["solve", "--scenario", p.to_str().unwrap(), "--model", model]);
        assert_eq!(o.status.code(), Some(3), "{model}: {}", stderr(&o));
    }
}

#[test]
fn empty_ranges_write_empty_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("exp");
    let o = bin(&["sweep-costs", "--ranges", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["artifacts"], serde_json::json!([]));
    assert_eq!(m["runs"], serde_json::json!([]));
    assert_eq!(std::fs::read_dir(&out).unwrap().count(), 1);
}

#[test]
fn failed_trials_are_recorded_and_the_sweep_continues() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("short.toml");
    std::fs::write(&p, INFEASIBLE).unwrap();
    let out = dir.path().join("exp");
    let o = bin(&["sweep-costs", "--scenario", p.to_str().unwrap(), "--ranges", "10:20", "30:60", "--trials", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["complete"], false);
    let runs = m["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 2 + 2 * 2 * 2);
    assert!(runs.iter().all(|r| r["status"] == "infeasible"));
    assert!(out.join("table3.csv").exists());
}

#[test]
fn sweep_report_roundtrip_and_worker_independence() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (k, workers) in ["1", "3"].iter().enumerate() {
        let out = dir.path().join(format!("frac{k}"));
        let o = Command::new(env!("CARGO_BIN_EXE_carbon-market"))
            .args(["sweep-fraction", "--network", "builtin:3bus", "--fractions", "0", "50", "100", "--trials", "3", "--seed", "7"])
            .args(["--out", out.to_str().unwrap()])
            .env("CARBON_MARKET_WORKERS", workers)
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        outputs.push(out);
    }
    for f in ["result.json", "trials.csv", "fig6.csv", "fig9.csv", "manifest.json"] {
        assert_eq!(std::fs::read(outputs[0].join(f)).unwrap(), std::fs::read(outputs[1].join(f)).unwrap(), "{f}");
    }

    // report re-renders the same bytes, twice
    let rendered = dir.path().join("rendered");
    for _ in 0..2 {
        let o = bin(&["report", outputs[0].to_str().unwrap(), "--out", rendered.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        for f in ["fig6.csv", "fig9.csv"] {
            assert_eq!(std::fs::read(rendered.join(f)).unwrap(), std::fs::read(outputs[0].join(f)).unwrap());
        }
    }
    let fig9 = std::fs::read_to_string(rendered.join("fig9.csv")).unwrap();
    assert!(fig9.starts_with("fraction_pct,model,metric,n,mean,min,q1,median,q3,max,points\n"));
    assert_eq!(fig9.lines().count(), 1 + 3 * 2 * 4);

    let o = bin(&["report", outputs[0].to_str().unwrap(), "--format", "json", "--out", rendered.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let r = json(&rendered.join("report.json"));
    assert_eq!(r["tables"].as_array().unwrap().len(), 2);
}

#[test]
fn report_rejects_other_schema_versions() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("exp");
    let o = bin(&["sweep-costs", "--ranges", "10:20", "--trials", "1", "--models", "carbon-cost", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut v = json(&out.join("result.json"));
    v["schema_version"] = 2.into();
    let future = dir.path().join("future.json");
    std::fs::write(&future, serde_json::to_vec(&v).unwrap()).unwrap();

    let o = bin(&["report", out.to_str().unwrap(), future.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    assert!(msg.contains("mixed schema versions") && msg.contains("version 1") && msg.contains("version 2"), "{msg}");

    let o = bin(&["report", future.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unsupported schema version"));

    let table3 = std::fs::read_to_string(out.join("table3.csv")).unwrap();
    assert_eq!(
        table3.lines().next().unwrap(),
        "case,total_generation_mwh,total_generation_cost_usd,total_carbon_t,average_carbon_t_per_mwh,utility_term_usd,carbon_term_usd,objective_usd"
    );
    let mut rdr = csv::Reader::from_reader(table3.as_bytes());
    let cases: Vec<String> = rdr.records().map(|r| r.unwrap()[0].to_string()).collect();
    assert_eq!(cases, ["P(2)", "P(3)", "[10,20]"]);
}

#[test]
fn fraction_zero_reproduces_flexible_demand() {
    let net = builtin_three_bus(None).unwrap();
    let flex = compute_metrics(&net, &clear_flexible_demand(&net).unwrap());
    let cfg = ExperimentConfig::sweep_fraction(
        "builtin:3bus",
        &[0.0],
        [30.0, 60.0],
        11,
        4,
        &[ClearingModelKind::CarbonCost, ClearingModelKind::CarbonFlow],
    );
    let (result, _) = run_experiment(&net, &cfg, 2).unwrap();
    for t in &result.cases[0].trials {
        assert!(t.carbon_costs.iter().all(|&c| c == 0.0));
        for r in &t.runs {
            let m = r.metrics.as_ref().unwrap();
            assert_eq!(r.status, RunStatus::Ok);
            assert!((m.objective - flex.objective).abs() <= 1e-8 * flex.objective.abs());
            assert_eq!(m.total_generation, flex.total_generation);
            assert_eq!(m.total_carbon, flex.total_carbon);
        }
    }
}

#[test]
fn aggregates_recompute_from_trials() {
    let net = builtin_three_bus(None).unwrap();
    let models = [ClearingModelKind::CarbonCost, ClearingModelKind::CarbonFlow];
    let cfg = ExperimentConfig::sweep_costs("builtin:3bus", &[[10.0, 20.0], [50.0, 80.0]], 3, 6, &models);
    let (result, timings) = run_experiment(&net, &cfg, 2).unwrap();
    assert_eq!(timings.len(), 2 + 2 * 6 * 2);
    for case in &result.cases {
        assert_eq!(case.trials.len(), cfg.trials);
        for (agg, &m) in case.aggregates.iter().zip(&models) {
            assert_eq!(agg, &aggregate(&case.trials, m));
            let carbon: Vec<f64> = case
                .trials
                .iter()
                .flat_map(|t| &t.runs)
                .filter(|r| r.model == m)
                .map(|r| r.metrics.as_ref().unwrap().total_carbon)
                .collect();
            let k = METRICS.iter().position(|&n| n == "total_carbon_t").unwrap();
            assert_eq!(agg.metrics[k].stats, BoxStats::from_values(&carbon).unwrap());
        }
    }

    // table3 has one row per baseline and range
    let files = render(std::slice::from_ref(&result), Format::Csv).unwrap();
    let table3 = &files.iter().find(|(n, _)| n == "table3.csv").unwrap().1;
    assert_eq!(String::from_utf8_lossy(table3).lines().count(), 1 + 2 + 2);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("result.json");
    std::fs::write(&p, serde_json::to_vec(&result).unwrap()).unwrap();
    assert_eq!(load_results(&[p]).unwrap()[0], result);
}

#[test]
fn adding_cases_keeps_existing_draws() {
    let net = builtin_three_bus(None).unwrap();
    let models = [ClearingModelKind::CarbonCost];
    let small = ExperimentConfig::sweep_fraction("builtin:3bus", &[50.0], [30.0, 60.0], 5, 3, &models);
    let large = ExperimentConfig::sweep_fraction("builtin:3bus", &[10.0, 50.0, 90.0], [30.0, 60.0], 5, 3, &models);
    let (a, _) = run_experiment(&net, &small, 1).unwrap();
    let (b, _) = run_experiment(&net, &large, 1).unwrap();
    assert_eq!(a.cases[0].trials, b.cases[1].trials);
}
