//! Seeded Monte Carlo sweeps over carbon-cost ranges and carbon-sensitive fractions.
//!
//! Each experiment is a list of cases (a carbon-cost range plus a fraction of
//! carbon-sensitive consumers) times a number of trials. A trial draws one set
//! of carbon costs and solves every requested model on it. Trials run on a
//! rayon pool; results are collected in case/trial order, so the written
//! files do not depend on the worker count.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use carbon_market::carbonflow::CarbonFlowConfig;
use carbon_market::metrics::MetricsReport;
use carbon_market::model::{ClearingModelKind, Network};
use carbon_market::scenario::{check_fraction, check_range, derive_seed, generate_carbon_costs, ParseMode};

use crate::error::{io_error, CliError};
use crate::report;
use crate::solve::{solve_model, Solution};
use crate::source::resolve_network;
use crate::stats::BoxStats;
use crate::{Format, RESULT_SCHEMA_VERSION};

/// Environment variable that sets the default worker count.
pub const WORKERS_ENV: &str = "CARBON_MARKET_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SweepCosts,
    SweepFraction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSpec {
    pub label: String,
    /// $/ton
    pub carbon_cost_range: [f64; 2],
    /// percent
    pub fraction_pct: f64,
}

/// Everything that determines the result bytes. Hashed into the config hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub network: String,
    pub master_seed: u64,
    pub trials: usize,
    pub models: Vec<ClearingModelKind>,
    pub cases: Vec<CaseSpec>,
    pub carbon_flow: CarbonFlowConfig,
}

impl ExperimentConfig {
    pub fn sweep_costs(network: &str, ranges: &[[f64; 2]], seed: u64, trials: usize, models: &[ClearingModelKind]) -> Self {
        let cases = ranges
            .iter()
            .map(|&[lo, hi]| CaseSpec { label: format!("[{lo},{hi}]"), carbon_cost_range: [lo, hi], fraction_pct: 100.0 })
            .collect();
        Self::new(ExperimentKind::SweepCosts, network, cases, seed, trials, models)
    }

    pub fn sweep_fraction(
        network: &str,
        fractions: &[f64],
        range: [f64; 2],
        seed: u64,
        trials: usize,
        models: &[ClearingModelKind],
    ) -> Self {
        let cases = fractions
            .iter()
            .map(|&f| CaseSpec { label: format!("{f}%"), carbon_cost_range: range, fraction_pct: f })
            .collect();
        Self::new(ExperimentKind::SweepFraction, network, cases, seed, trials, models)
    }

    fn new(
        experiment: ExperimentKind,
        network: &str,
        cases: Vec<CaseSpec>,
        master_seed: u64,
        trials: usize,
        models: &[ClearingModelKind],
    ) -> Self {
        ExperimentConfig {
            experiment,
            network: network.to_string(),
            master_seed,
            trials,
            models: models.to_vec(),
            cases,
            carbon_flow: CarbonFlowConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.trials == 0 {
            return Err(CliError::Input("--trials must be at least 1".into()));
        }
        if self.models.is_empty() {
            return Err(CliError::Input("--models must name at least one model".into()));
        }
        for c in &self.cases {
            let [lo, hi] = c.carbon_cost_range;
            check_range(lo, hi)?;
            check_fraction(c.fraction_pct)?;
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        format!("{:x}", Sha256::digest(bytes))
    }

    /// Seed of one trial: the case's range bounds and fraction (as bits) and
    /// the trial index folded into the master seed.
    pub fn trial_seed(&self, case: &CaseSpec, trial: usize) -> u64 {
        let [lo, hi] = case.carbon_cost_range;
        derive_seed(self.master_seed, &[lo.to_bits(), hi.to_bits(), case.fraction_pct.to_bits(), trial as u64])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Ok,
    /// Carbon flow stopped at the iteration cap; the best iterate is reported.
    NotConverged,
    Infeasible,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRun {
    pub model: ClearingModelKind,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    /// Carbon-flow iterations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub carbon_costs: Vec<f64>,
    pub runs: Vec<ModelRun>,
}

/// Names of the per-run quantities that get aggregated, in output order.
pub const METRICS: [&str; 7] = [
    "total_generation_mwh",
    "total_generation_cost_usd",
    "total_carbon_t",
    "average_carbon_t_per_mwh",
    "utility_term_usd",
    "carbon_term_usd",
    "objective_usd",
];

pub fn metric_values(m: &MetricsReport) -> [f64; 7] {
    [
        m.total_generation,
        m.total_generation_cost,
        m.total_carbon,
        m.average_carbon,
        m.objective_terms.utility,
        m.objective_terms.carbon,
        m.objective,
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub metric: String,
    pub stats: BoxStats,
}

/// Statistics over the runs of one model that produced a solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelAggregate {
    pub model: ClearingModelKind,
    pub solved: usize,
    pub metrics: Vec<MetricStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    #[serde(flatten)]
    pub case: CaseSpec,
    pub trials: Vec<TrialResult>,
    pub aggregates: Vec<ModelAggregate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRun {
    pub label: String,
    pub run: ModelRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub config_hash: String,
    /// Fixed-demand and flexible-demand solutions of the network as loaded.
    pub baselines: Vec<BaselineRun>,
    pub cases: Vec<CaseResult>,
    /// False when any run was not solved to a converged optimum.
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Timing {
    pub case: String,
    pub trial: Option<usize>,
    pub model: ClearingModelKind,
    pub seconds: f64,
}

/// Aggregates over the runs of `model` that carry metrics.
pub fn aggregate(trials: &[TrialResult], model: ClearingModelKind) -> ModelAggregate {
    let values: Vec<[f64; 7]> = trials
        .iter()
        .flat_map(|t| &t.runs)
        .filter(|r| r.model == model)
        .filter_map(|r| r.metrics.as_ref().map(metric_values))
        .collect();
    let metrics = METRICS
        .iter()
        .enumerate()
        .filter_map(|(k, name)| {
            let column: Vec<f64> = values.iter().map(|v| v[k]).collect();
            BoxStats::from_values(&column).map(|stats| MetricStats { metric: name.to_string(), stats })
        })
        .collect();
    ModelAggregate { model, solved: values.len(), metrics }
}

fn run_model(net: &Network, model: ClearingModelKind) -> (ModelRun, f64) {
    let start = Instant::now();
    let result = solve_model(net, model);
    let seconds = start.elapsed().as_secs_f64();
    let run = match result {
        Ok((sol, metrics)) => {
            let (status, iterations) = match &sol {
                Solution::CarbonFlow(s) if s.converged => (RunStatus::Ok, Some(s.iterations)),
                Solution::CarbonFlow(s) => (RunStatus::NotConverged, Some(s.iterations)),
                Solution::Dispatch(_) => (RunStatus::Ok, None),
            };
            ModelRun { model, status, message: None, iterations, metrics: Some(metrics) }
        }
        Err(e) => {
            let status = match e {
                CliError::Infeasible(_) => RunStatus::Infeasible,
                _ => RunStatus::Failed,
            };
            log::warn!("{model} failed: {e}");
            ModelRun { model, status, message: Some(e.to_string()), iterations: None, metrics: None }
        }
    };
    (run, seconds)
}

fn run_trial(net: &Network, cfg: &ExperimentConfig, case: &CaseSpec, trial: usize) -> (TrialResult, Vec<f64>) {
    let seed = cfg.trial_seed(case, trial);
    let costs = generate_carbon_costs(net.consumers.len(), case.carbon_cost_range, case.fraction_pct, seed)
        .expect("case validated");
    let scenario = net.with_carbon_costs(&costs);
    let (runs, secs): (Vec<ModelRun>, Vec<f64>) = cfg.models.iter().map(|&m| run_model(&scenario, m)).unzip();
    (TrialResult { trial, seed, carbon_costs: costs, runs }, secs)
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Internal(format!("worker pool: {e}")))
}

/// Runs every case and trial of `cfg` on `net` with up to `workers` threads.
pub fn run_experiment(net: &Network, cfg: &ExperimentConfig, workers: usize) -> Result<(ExperimentResult, Vec<Timing>), CliError> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> =
        (0..cfg.cases.len()).flat_map(|c| (0..cfg.trials).map(move |t| (c, t))).collect();
    log::info!("{} cases x {} trials x {} models on {} workers", cfg.cases.len(), cfg.trials, cfg.models.len(), workers);

    let (baseline_runs, trial_runs) = pool(workers)?.install(|| {
        let baselines: Vec<(ModelRun, f64)> = [ClearingModelKind::FixedDemand, ClearingModelKind::FlexibleDemand]
            .par_iter()
            .map(|&m| run_model(net, m))
            .collect();
        let trials: Vec<(TrialResult, Vec<f64>)> =
            jobs.par_iter().map(|&(c, t)| run_trial(net, cfg, &cfg.cases[c], t)).collect();
        (baselines, trials)
    });

    let mut timings = Vec::new();
    let baselines = baseline_runs
        .into_iter()
        .zip(["P(2)", "P(3)"])
        .map(|((run, s), label)| {
            timings.push(Timing { case: label.to_string(), trial: None, model: run.model, seconds: s });
            BaselineRun { label: label.to_string(), run }
        })
        .collect::<Vec<_>>();

    let mut trial_runs = trial_runs.into_iter();
    let mut cases = Vec::with_capacity(cfg.cases.len());
    for case in &cfg.cases {
        let mut trials = Vec::with_capacity(cfg.trials);
        for _ in 0..cfg.trials {
            let (t, secs) = trial_runs.next().expect("one result per job");
            for (run, s) in t.runs.iter().zip(secs) {
                timings.push(Timing { case: case.label.clone(), trial: Some(t.trial), model: run.model, seconds: s });
            }
            trials.push(t);
        }
        let aggregates = cfg.models.iter().map(|&m| aggregate(&trials, m)).collect();
        cases.push(CaseResult { case: case.clone(), trials, aggregates });
    }

    let complete = baselines.iter().map(|b| &b.run).chain(cases.iter().flat_map(|c| c.trials.iter().flat_map(|t| &t.runs))).all(|r| r.status == RunStatus::Ok);
    let result = ExperimentResult {
        schema_version: RESULT_SCHEMA_VERSION,
        config: cfg.clone(),
        config_hash: cfg.hash(),
        baselines,
        cases,
        complete,
    };
    Ok((result, timings))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    /// Absent for files whose content is not reproducible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
    pub deterministic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialStatus {
    pub case: String,
    pub trial: Option<usize>,
    pub seed: Option<u64>,
    pub model: ClearingModelKind,
    pub status: RunStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub experiment: ExperimentKind,
    pub config_hash: String,
    pub master_seed: u64,
    pub complete: bool,
    pub artifacts: Vec<Artifact>,
    pub runs: Vec<TrialStatus>,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RESULT_FILE: &str = "result.json";
pub const TRIALS_FILE: &str = "trials.csv";
pub const TIMINGS_FILE: &str = "timings.csv";

pub fn json_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    let mut b = serde_json::to_vec_pretty(v).expect("serializable");
    b.push(b'\n');
    b
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    let p = dir.join(name);
    std::fs::write(&p, bytes).map_err(|e| io_error(&p, e))
}

fn trials_csv(result: &ExperimentResult) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["case", "range_lo", "range_hi", "fraction_pct", "trial", "seed", "model", "status", "iterations"];
    header.extend(METRICS);
    header.push("message");
    w.write_record(&header).map_err(internal)?;
    for c in &result.cases {
        for t in &c.trials {
            for r in &t.runs {
                let mut rec = vec![
                    c.case.label.clone(),
                    format!("{:?}", c.case.carbon_cost_range[0]),
                    format!("{:?}", c.case.carbon_cost_range[1]),
                    format!("{:?}", c.case.fraction_pct),
                    t.trial.to_string(),
                    t.seed.to_string(),
                    r.model.to_string(),
                    status_str(r.status).to_string(),
                    r.iterations.map_or(String::new(), |i| i.to_string()),
                ];
                match &r.metrics {
                    Some(m) => rec.extend(metric_values(m).iter().map(|v| format!("{v:?}"))),
                    None => rec.extend(std::iter::repeat_n(String::new(), METRICS.len())),
                }
                rec.push(r.message.clone().unwrap_or_default());
                w.write_record(&rec).map_err(internal)?;
            }
        }
    }
    w.into_inner().map_err(|e| CliError::Internal(e.to_string()))
}

fn timings_csv(timings: &[Timing]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["case", "trial", "model", "seconds"]).map_err(internal)?;
    for t in timings {
        w.write_record([t.case.clone(), t.trial.map_or(String::new(), |i| i.to_string()), t.model.to_string(), format!("{:?}", t.seconds)])
            .map_err(internal)?;
    }
    w.into_inner().map_err(|e| CliError::Internal(e.to_string()))
}

pub(crate) fn internal(e: impl std::fmt::Display) -> CliError {
    CliError::Internal(e.to_string())
}

pub fn status_str(s: RunStatus) -> &'static str {
    match s {
        RunStatus::Ok => "ok",
        RunStatus::NotConverged => "not-converged",
        RunStatus::Infeasible => "infeasible",
        RunStatus::Failed => "failed",
    }
}

fn manifest_runs(result: &ExperimentResult) -> Vec<TrialStatus> {
    let base = result.baselines.iter().map(|b| TrialStatus {
        case: b.label.clone(),
        trial: None,
        seed: None,
        model: b.run.model,
        status: b.run.status,
    });
    let trials = result.cases.iter().flat_map(|c| {
        c.trials.iter().flat_map(move |t| {
            t.runs.iter().map(move |r| TrialStatus {
                case: c.case.label.clone(),
                trial: Some(t.trial),
                seed: Some(t.seed),
                model: r.model,
                status: r.status,
            })
        })
    });
    base.chain(trials).collect()
}

/// Writes the experiment directory and returns its manifest.
pub fn write_experiment(
    dir: &Path,
    result: &ExperimentResult,
    timings: &[Timing],
    format: Format,
) -> Result<Manifest, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let mut files: Vec<(String, Vec<u8>)> =
        vec![(RESULT_FILE.into(), json_bytes(result)), (TRIALS_FILE.into(), trials_csv(result)?)];
    files.extend(report::render(std::slice::from_ref(result), format)?);
    let mut artifacts = Vec::new();
    for (name, bytes) in &files {
        write_file(dir, name, bytes)?;
        artifacts.push(Artifact { path: name.clone(), sha256: Some(format!("{:x}", Sha256::digest(bytes))), deterministic: true });
    }
    write_file(dir, TIMINGS_FILE, &timings_csv(timings)?)?;
    artifacts.push(Artifact { path: TIMINGS_FILE.into(), sha256: None, deterministic: false });
    let manifest = Manifest {
        schema_version: RESULT_SCHEMA_VERSION,
        experiment: result.config.experiment,
        config_hash: result.config_hash.clone(),
        master_seed: result.config.master_seed,
        complete: result.complete,
        artifacts,
        runs: manifest_runs(result),
    };
    write_file(dir, MANIFEST_FILE, &json_bytes(&manifest))?;
    Ok(manifest)
}

/// Manifest of an experiment with nothing to run.
pub fn write_empty(dir: &Path, cfg: &ExperimentConfig) -> Result<Manifest, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let manifest = Manifest {
        schema_version: RESULT_SCHEMA_VERSION,
        experiment: cfg.experiment,
        config_hash: cfg.hash(),
        master_seed: cfg.master_seed,
        complete: true,
        artifacts: Vec::new(),
        runs: Vec::new(),
    };
    write_file(dir, MANIFEST_FILE, &json_bytes(&manifest))?;
    Ok(manifest)
}

#[derive(Debug, Clone)]
pub struct SweepArgs {
    pub network: String,
    pub strict: bool,
    pub workers: usize,
    pub out: PathBuf,
    pub format: Format,
}

/// Loads the network, runs `cfg` and writes the experiment directory.
pub fn run_sweep(args: &SweepArgs, cfg: &ExperimentConfig) -> Result<Manifest, CliError> {
    cfg.validate()?;
    if cfg.cases.is_empty() {
        log::info!("nothing to run");
        return write_empty(&args.out, cfg);
    }
    let mode = if args.strict { ParseMode::Strict } else { ParseMode::Lenient };
    let net = resolve_network(&args.network, mode)?.network;
    let (result, timings) = run_experiment(&net, cfg, args.workers)?;
    write_experiment(&args.out, &result, &timings, args.format)
}
