use std::io::Write;
use std::path::PathBuf;

use serde::Serialize;

use carbon_market::carbonflow::{clear_carbon_flow, CarbonFlowConfig, CarbonFlowSolution};
use carbon_market::clearing::clear;
use carbon_market::metrics::{compute_metrics, write_reports_csv, MetricsReport};
use carbon_market::model::{ClearingModelKind, DispatchSolution, Network};
use carbon_market::scenario::{check_fraction, check_range, generate_carbon_costs, ParseMode};

use crate::error::{io_error, CliError};
use crate::source::{resolve_network, resolve_scenario, Resolved};
use crate::{Format, RESULT_SCHEMA_VERSION};

#[derive(Debug, Clone, Default)]
pub struct SolveArgs {
    pub model: Option<ClearingModelKind>,
    pub network: Option<String>,
    pub scenario: Option<PathBuf>,
    pub seed: Option<u64>,
    pub range: Option<[f64; 2]>,
    pub fraction: Option<f64>,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub strict: bool,
}

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum Solution {
    Dispatch(DispatchSolution),
    CarbonFlow(CarbonFlowSolution),
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveOutput {
    pub schema_version: u32,
    pub model: ClearingModelKind,
    pub network: String,
    pub carbon_costs: Vec<f64>,
    pub solution: Solution,
    pub metrics: MetricsReport,
}

impl SolveOutput {
    pub fn converged(&self) -> bool {
        !matches!(&self.solution, Solution::CarbonFlow(s) if !s.converged)
    }
}

/// Solves `net` with `model`. Carbon flow uses the default iteration settings.
pub fn solve_model(net: &Network, model: ClearingModelKind) -> Result<(Solution, MetricsReport), CliError> {
    Ok(match model {
        ClearingModelKind::CarbonFlow => {
            let s = clear_carbon_flow(net, &CarbonFlowConfig::default())?;
            let m = compute_metrics(net, &s);
            (Solution::CarbonFlow(s), m)
        }
        kind => {
            let s = clear(net, kind)?;
            let m = compute_metrics(net, &s);
            (Solution::Dispatch(s), m)
        }
    })
}

fn resolve(args: &SolveArgs) -> Result<Resolved, CliError> {
    let mode = if args.strict { ParseMode::Strict } else { ParseMode::Lenient };
    match (&args.scenario, &args.network) {
        (Some(_), Some(_)) => Err(CliError::Input("give either --scenario or --network, not both".into())),
        (Some(p), None) => resolve_scenario(p, mode),
        (None, Some(n)) => resolve_network(n, mode),
        (None, None) => resolve_network("builtin:3bus", mode),
    }
}

/// Runs one solve. The output is returned even when carbon flow did not converge;
/// the caller maps that to its exit code.
pub fn run_solve(args: &SolveArgs) -> Result<SolveOutput, CliError> {
    let Resolved { mut network, mut spec } = resolve(args)?;
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if let Some([lo, hi]) = args.range {
        check_range(lo, hi)?;
        spec.carbon_cost_range = Some([lo, hi]);
    }
    if let Some(f) = args.fraction {
        check_fraction(f)?;
        spec.carbon_sensitive_fraction = f;
    }
    if let Some(range) = spec.carbon_cost_range {
        let costs = generate_carbon_costs(network.consumers.len(), range, spec.carbon_sensitive_fraction, spec.seed)?;
        network = network.with_carbon_costs(&costs);
    }
    let model = args.model.unwrap_or(ClearingModelKind::CarbonCost);
    let (solution, metrics) = solve_model(&network, model)?;
    Ok(SolveOutput {
        schema_version: RESULT_SCHEMA_VERSION,
        model,
        network: spec.network.to_string(),
        carbon_costs: network.carbon_costs(),
        solution,
        metrics,
    })
}

pub fn render_solve(out: &SolveOutput, format: Format) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut buf, out).map_err(|e| CliError::Internal(e.to_string()))?;
            buf.push(b'\n');
        }
        Format::Csv => {
            write_reports_csv(&[(out.model.as_str(), &out.metrics)], &mut buf)
                .map_err(|e| CliError::Internal(e.to_string()))?;
        }
    }
    Ok(buf)
}

/// Writes to `--out`, or standard output when absent.
pub fn emit(bytes: &[u8], out: Option<&std::path::Path>) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, bytes).map_err(|e| io_error(p, e)),
        None => std::io::stdout().write_all(bytes).map_err(|e| CliError::Internal(e.to_string())),
    }
}
