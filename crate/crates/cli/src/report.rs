//! Plot-data tables rendered from experiment results.
//!
//! | file | rows | columns |
//! |------|------|---------|
//! | `table3.csv` | `P(2)`, `P(3)`, then one per carbon-cost range (carbon-cost model, trial mean) | `case` + [`METRICS`] |
//! | `fig6.csv` | fraction x metric, carbon-cost model | `fraction_pct,metric,n,mean,min,q1,median,q3,max,points` |
//! | `fig8.csv` | range x model (trial means) | `range_lo,range_hi,model,n` + four aggregate metrics |
//! | `fig9.csv` | fraction x model x metric | `fraction_pct,model,metric,n,mean,min,q1,median,q3,max,points` |
//!
//! `points` lists the per-trial values separated by `;` in trial order.
//! `table3` and `fig8` come from cost sweeps, `fig6` and `fig9` from fraction sweeps.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use carbon_market::model::ClearingModelKind;

use crate::error::{io_error, CliError};
use crate::harness::{internal, metric_values, CaseResult, ExperimentKind, ExperimentResult, RESULT_FILE, METRICS};
use crate::stats::BoxStats;
use crate::{Format, RESULT_SCHEMA_VERSION};

/// The four aggregates drawn in the box plots and bar charts.
const FIGURE_METRICS: [usize; 4] = [0, 1, 2, 3];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    fn new(name: &str, columns: &[&str]) -> Self {
        Table { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).map_err(internal)?;
        for r in &self.rows {
            w.write_record(r.iter().map(cell)).map_err(internal)?;
        }
        w.into_inner().map_err(internal)
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        Value::Number(n) => match n.as_f64() {
            Some(f) if n.is_f64() => format!("{f:?}"),
            _ => n.to_string(),
        },
        other => other.to_string(),
    }
}

fn num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}

fn text(s: impl Into<String>) -> Value {
    Value::String(s.into())
}

fn mean_of(case: &CaseResult, model: ClearingModelKind, metric: usize) -> Option<f64> {
    stats_of(case, model, metric).map(|s| s.mean)
}

fn stats_of(case: &CaseResult, model: ClearingModelKind, metric: usize) -> Option<BoxStats> {
    case.aggregates
        .iter()
        .find(|a| a.model == model)?
        .metrics
        .iter()
        .find(|m| m.metric == METRICS[metric])
        .map(|m| m.stats)
}

fn points(case: &CaseResult, model: ClearingModelKind, metric: usize) -> String {
    let vals: Vec<String> = case
        .trials
        .iter()
        .flat_map(|t| &t.runs)
        .filter(|r| r.model == model)
        .filter_map(|r| r.metrics.as_ref().map(|m| format!("{:?}", metric_values(m)[metric])))
        .collect();
    vals.join(";")
}

pub fn table3(results: &[&ExperimentResult]) -> Table {
    let mut cols = vec!["case"];
    cols.extend(METRICS);
    let mut t = Table::new("table3", &cols);
    if let Some(first) = results.first() {
        for b in &first.baselines {
            let mut row = vec![text(&b.label)];
            match &b.run.metrics {
                Some(m) => row.extend(metric_values(m).map(num)),
                None => row.extend(std::iter::repeat_n(Value::Null, METRICS.len())),
            }
            t.rows.push(row);
        }
    }
    for case in results.iter().flat_map(|r| &r.cases) {
        let mut row = vec![text(&case.case.label)];
        row.extend((0..METRICS.len()).map(|k| mean_of(case, ClearingModelKind::CarbonCost, k).map_or(Value::Null, num)));
        t.rows.push(row);
    }
    t
}

pub fn fig8(results: &[&ExperimentResult]) -> Table {
    let mut cols = vec!["range_lo", "range_hi", "model", "n"];
    cols.extend(FIGURE_METRICS.map(|k| METRICS[k]));
    let mut t = Table::new("fig8", &cols);
    for r in results {
        for case in &r.cases {
            for agg in &case.aggregates {
                let mut row = vec![
                    num(case.case.carbon_cost_range[0]),
                    num(case.case.carbon_cost_range[1]),
                    text(agg.model.as_str()),
                    Value::from(agg.solved),
                ];
                row.extend(FIGURE_METRICS.map(|k| mean_of(case, agg.model, k).map_or(Value::Null, num)));
                t.rows.push(row);
            }
        }
    }
    t
}

fn box_rows(t: &mut Table, case: &CaseResult, model: ClearingModelKind, with_model: bool) {
    for k in FIGURE_METRICS {
        let mut row = vec![num(case.case.fraction_pct)];
        if with_model {
            row.push(text(model.as_str()));
        }
        row.push(text(METRICS[k]));
        match stats_of(case, model, k) {
            Some(s) => {
                row.push(Value::from(s.n));
                row.extend([s.mean, s.min, s.q1, s.median, s.q3, s.max].map(num));
            }
            None => {
                row.push(Value::from(0));
                row.extend(std::iter::repeat_n(Value::Null, 6));
            }
        }
        row.push(text(points(case, model, k)));
        t.rows.push(row);
    }
}

const BOX_COLUMNS: [&str; 8] = ["n", "mean", "min", "q1", "median", "q3", "max", "points"];

pub fn fig6(results: &[&ExperimentResult]) -> Table {
    let mut cols = vec!["fraction_pct", "metric"];
    cols.extend(BOX_COLUMNS);
    let mut t = Table::new("fig6", &cols);
    for r in results.iter().filter(|r| r.config.models.contains(&ClearingModelKind::CarbonCost)) {
        for case in &r.cases {
            box_rows(&mut t, case, ClearingModelKind::CarbonCost, false);
        }
    }
    t
}

pub fn fig9(results: &[&ExperimentResult]) -> Table {
    let mut cols = vec!["fraction_pct", "model", "metric"];
    cols.extend(BOX_COLUMNS);
    let mut t = Table::new("fig9", &cols);
    for r in results {
        for case in &r.cases {
            for &m in &r.config.models {
                box_rows(&mut t, case, m, true);
            }
        }
    }
    t
}

/// Renders every table the inputs support. Returns `(file name, bytes)` pairs.
pub fn render(results: &[ExperimentResult], format: Format) -> Result<Vec<(String, Vec<u8>)>, CliError> {
    let of = |k: ExperimentKind| results.iter().filter(|r| r.config.experiment == k).collect::<Vec<_>>();
    let costs = of(ExperimentKind::SweepCosts);
    let fractions = of(ExperimentKind::SweepFraction);
    let mut tables = Vec::new();
    if !costs.is_empty() {
        tables.push(table3(&costs));
        tables.push(fig8(&costs));
    }
    if !fractions.is_empty() {
        tables.push(fig6(&fractions));
        tables.push(fig9(&fractions));
    }
    match format {
        Format::Csv => tables.iter().map(|t| Ok((format!("{}.csv", t.name), t.to_csv()?))).collect(),
        Format::Json => {
            #[derive(Serialize)]
            struct Report<'a> {
                schema_version: u32,
                tables: &'a [Table],
            }
            let report = Report { schema_version: RESULT_SCHEMA_VERSION, tables: &tables };
            Ok(vec![("report.json".into(), crate::harness::json_bytes(&report))])
        }
    }
}

fn result_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(RESULT_FILE)
    } else {
        p.to_path_buf()
    }
}

/// Reads result files (or experiment directories). All inputs must share the
/// supported schema version.
pub fn load_results(paths: &[PathBuf]) -> Result<Vec<ExperimentResult>, CliError> {
    if paths.is_empty() {
        return Err(CliError::Input("report: no result files given".into()));
    }
    let mut docs = Vec::with_capacity(paths.len());
    for p in paths.iter().map(|p| result_path(p)) {
        let text = std::fs::read_to_string(&p).map_err(|e| io_error(&p, e))?;
        let v: Value = serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
        let version = v.get("schema_version").and_then(Value::as_u64);
        docs.push((p, version, v));
    }
    let versions: Vec<String> =
        docs.iter().map(|(p, v, _)| format!("{} has {}", p.display(), v.map_or("no version".into(), |v| format!("version {v}")))).collect();
    if docs.iter().any(|(_, v, _)| *v != docs[0].1) {
        return Err(CliError::Input(format!("mixed schema versions: {}", versions.join(", "))));
    }
    if docs[0].1 != Some(RESULT_SCHEMA_VERSION as u64) {
        return Err(CliError::Input(format!(
            "unsupported schema version: {} (supported: version {RESULT_SCHEMA_VERSION})",
            versions.join(", ")
        )));
    }
    docs.into_iter()
        .map(|(p, _, v)| serde_json::from_value(v).map_err(|e| CliError::Input(format!("{}: {e}", p.display()))))
        .collect()
}

/// Renders `paths` into `out_dir`. Returns the written file names.
pub fn run_report(paths: &[PathBuf], format: Format, out_dir: &Path) -> Result<Vec<String>, CliError> {
    let results = load_results(paths)?;
    std::fs::create_dir_all(out_dir).map_err(|e| io_error(out_dir, e))?;
    let mut names = Vec::new();
    for (name, bytes) in render(&results, format)? {
        let p = out_dir.join(&name);
        std::fs::write(&p, bytes).map_err(|e| io_error(&p, e))?;
        names.push(name);
    }
    Ok(names)
}
