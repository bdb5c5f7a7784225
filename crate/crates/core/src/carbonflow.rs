//! Carbon-flow benchmark: consumers pay their carbon cost on emissions traced
//! through the network by proportional sharing, so each consumer inherits the
//! carbon intensity of its bus.
//!
//! The bilinear problem is solved by alternating between a dispatch LP with
//! frozen nodal intensities and recomputing the intensities from the new flows.
//! Every iterate is a feasible point (its intensities are recomputed from its
//! own flows); the best of them is returned, converged or not.

use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clearing::{self, ClearingError, Demand};
use crate::linalg::solve_dense;
use crate::model::{ClearingModelKind, DispatchSolution, Network, FEASIBILITY_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Initialization {
    /// Start from zero intensities (the first LP ignores carbon).
    ZeroLambda,
    /// Start from the intensities of the flexible-demand dispatch.
    FromFlexibleDispatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarbonFlowConfig {
    pub max_iterations: usize,
    /// tons/MWh; convergence when the max-norm change of the intensities drops below this
    pub lambda_tolerance: f64,
    pub initialization: Initialization,
}

impl Default for CarbonFlowConfig {
    fn default() -> Self {
        CarbonFlowConfig { max_iterations: 100, lambda_tolerance: 1e-6, initialization: Initialization::FromFlexibleDispatch }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CarbonFlowError {
    #[error(transparent)]
    Clearing(#[from] ClearingError),
    #[error("invalid carbon-flow configuration: {0}")]
    Config(String),
    #[error("{what} has {got} entries, expected {expected}")]
    Length { what: &'static str, got: usize, expected: usize },
    #[error("power imbalance of {residual} MW at bus {bus}")]
    Imbalance { bus: String, residual: f64 },
    #[error("carbon balance system is singular at bus {bus}")]
    Singular { bus: String },
}

/// Nodal carbon intensities for a fixed dispatch.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalIntensities {
    /// tons/MWh per bus
    pub lambda: Vec<f64>,
    /// MW entering each bus: local generation plus inflow
    pub throughflow: Vec<f64>,
    /// Indices of buses with no generation and no inflow.
    pub zero_throughflow: Vec<usize>,
}

/// Tracing state shared by the intensity solve and the residual check.
struct Tracing {
    local_carbon: Vec<f64>,
    throughflow: Vec<f64>,
    /// (from, to, MW) for every line with positive flow in its actual direction
    arcs: Vec<(usize, usize, f64)>,
}

fn tracing(net: &Network, p_g: &[f64], p_d: &[f64], flows: &[f64]) -> Result<Tracing, CarbonFlowError> {
    for (what, got, expected) in [
        ("p_g", p_g.len(), net.generators.len()),
        ("p_d", p_d.len(), net.consumers.len()),
        ("flows", flows.len(), net.lines.len()),
    ] {
        if got != expected {
            return Err(CarbonFlowError::Length { what, got, expected });
        }
    }
    let index = net.bus_index();
    let nb = net.buses.len();
    let mut local_carbon = vec![0.0; nb];
    let mut throughflow = vec![0.0; nb];
    let mut net_injection = vec![0.0; nb];
    for (g, &p) in net.generators.iter().zip(p_g) {
        let b = index[g.bus.as_str()];
        let p = p.max(0.0);
        local_carbon[b] += g.emission_intensity * p;
        throughflow[b] += p;
        net_injection[b] += p;
    }
    for (c, &p) in net.consumers.iter().zip(p_d) {
        net_injection[index[c.bus.as_str()]] -= p;
    }
    let mut arcs = Vec::new();
    for (l, &f) in net.lines.iter().zip(flows) {
        let (a, b) = (index[l.from_bus.as_str()], index[l.to_bus.as_str()]);
        net_injection[a] -= f;
        net_injection[b] += f;
        let (from, to) = if f >= 0.0 { (a, b) } else { (b, a) };
        if f != 0.0 {
            arcs.push((from, to, f.abs()));
            throughflow[to] += f.abs();
        }
    }
    for (i, r) in net_injection.iter().enumerate() {
        if r.abs() > FEASIBILITY_TOL * throughflow[i].max(1.0) {
            return Err(CarbonFlowError::Imbalance { bus: net.buses[i].id.clone(), residual: *r });
        }
    }
    Ok(Tracing { local_carbon, throughflow, arcs })
}

/// Proportional-sharing intensities: `lambda_i * T_i = local carbon_i + sum_j lambda_j * F_ji`
/// over lines flowing into bus `i`, with `T_i` the local generation plus inflow.
pub fn nodal_intensities(
    net: &Network,
    p_g: &[f64],
    p_d: &[f64],
    flows: &[f64],
) -> Result<NodalIntensities, CarbonFlowError> {
    let t = tracing(net, p_g, p_d, flows)?;
    let nb = net.buses.len();
    let zero: Vec<bool> = t.throughflow.iter().map(|&x| x <= 0.0).collect();
    // each row divided by its throughflow: unit diagonal, off-diagonals in [-1, 0]
    let mut a = vec![0.0; nb * nb];
    let mut rhs = vec![0.0; nb];
    for i in 0..nb {
        a[i * nb + i] = 1.0;
        if !zero[i] {
            rhs[i] = t.local_carbon[i] / t.throughflow[i];
        }
    }
    for &(from, to, f) in &t.arcs {
        if !zero[to] {
            a[to * nb + from] -= f / t.throughflow[to];
        }
    }
    let lambda = solve_dense(nb, a, &rhs, 1e-12)
        .map_err(|s| CarbonFlowError::Singular { bus: net.buses[s.column.min(nb - 1)].id.clone() })?;
    let lambda = lambda.into_iter().zip(&zero).map(|(l, &z)| if z { 0.0 } else { l.max(0.0) }).collect();
    Ok(NodalIntensities {
        lambda,
        throughflow: t.throughflow,
        zero_throughflow: zero.iter().enumerate().filter(|(_, &z)| z).map(|(i, _)| i).collect(),
    })
}

/// Largest nodal carbon-balance violation, in tons, each divided by `max(1, T_i)`.
pub fn carbon_balance_residual(
    net: &Network,
    p_g: &[f64],
    p_d: &[f64],
    flows: &[f64],
    lambda: &[f64],
) -> Result<f64, CarbonFlowError> {
    let t = tracing(net, p_g, p_d, flows)?;
    let mut r: Vec<f64> = (0..net.buses.len()).map(|i| lambda[i] * t.throughflow[i] - t.local_carbon[i]).collect();
    for &(from, to, f) in &t.arcs {
        r[to] -= lambda[from] * f;
    }
    Ok(r.iter().zip(&t.throughflow).map(|(r, tf)| r.abs() / tf.max(1.0)).fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    /// Self-consistent welfare of this iterate's dispatch.
    pub objective: f64,
    /// Max-norm change between the intensities used by the LP and those implied by its dispatch.
    pub delta_lambda: f64,
    pub lambda: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarbonFlowSolution {
    /// Dispatch of the returned iterate; `e_d` holds `lambda[bus(n)] * p_d[n]`, no allocation.
    pub dispatch: DispatchSolution,
    /// tons/MWh per bus
    pub lambda_e: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Carbon-balance residual of the returned solution, see [`carbon_balance_residual`].
    pub residual: f64,
    pub zero_throughflow_buses: Vec<String>,
    pub trace: Vec<TraceRow>,
}

struct Iterate {
    dispatch: DispatchSolution,
    intensities: NodalIntensities,
}

fn solve_with_lambda(net: &Network, lambda: &[f64]) -> Result<Iterate, CarbonFlowError> {
    let index = net.bus_index();
    let adjusted: Vec<f64> = net
        .consumers
        .iter()
        .map(|c| c.utility - c.carbon_cost * lambda[index[c.bus.as_str()]])
        .collect();
    let dc = clearing::build_dc_model(net, Demand::Flexible(&adjusted));
    let sol = clearing::solve_clearing_lp(&dc.lp)?;
    let p_g: Vec<f64> = dc.p_g.iter().map(|&v| sol.value(v)).collect();
    let p_d: Vec<f64> = dc.p_d.iter().map(|&v| sol.value(v)).collect();
    let line_flows: Vec<f64> = dc.flow.iter().map(|&v| sol.value(v)).collect();
    let theta: Vec<f64> = dc.theta.iter().map(|&v| sol.value(v)).collect();

    let intensities = nodal_intensities(net, &p_g, &p_d, &line_flows)?;
    let e_d: Vec<f64> =
        net.consumers.iter().zip(&p_d).map(|(c, p)| intensities.lambda[index[c.bus.as_str()]] * p).collect();
    let terms = clearing::objective_terms(net, &p_g, &p_d, Some(&e_d));
    let dispatch = DispatchSolution {
        model: ClearingModelKind::CarbonFlow,
        p_g,
        p_d,
        theta,
        line_flows,
        allocation: None,
        e_d: Some(e_d),
        objective: terms.welfare(),
        objective_terms: terms,
        allocation_unique: true,
    };
    Ok(Iterate { dispatch, intensities })
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Solves the carbon-flow model by fixed-point iteration on the nodal intensities.
///
/// Non-convergence is not an error: the best iterate is returned with
/// `converged = false`.
pub fn clear_carbon_flow(net: &Network, cfg: &CarbonFlowConfig) -> Result<CarbonFlowSolution, CarbonFlowError> {
    if cfg.max_iterations == 0 {
        return Err(CarbonFlowError::Config("max_iterations must be at least 1".into()));
    }
    if !(cfg.lambda_tolerance > 0.0) {
        return Err(CarbonFlowError::Config(format!("lambda_tolerance {} must be positive", cfg.lambda_tolerance)));
    }
    net.ensure_valid().map_err(ClearingError::from)?;

    let mut lambda = match cfg.initialization {
        Initialization::ZeroLambda => vec![0.0; net.buses.len()],
        Initialization::FromFlexibleDispatch => {
            let flex = clearing::clear_flexible_demand(net)?;
            nodal_intensities(net, &flex.p_g, &flex.p_d, &flex.line_flows)?.lambda
        }
    };

    let mut trace = Vec::new();
    let mut best: Option<Iterate> = None;
    let mut converged = false;
    for k in 1..=cfg.max_iterations {
        let it = solve_with_lambda(net, &lambda)?;
        let delta = max_abs_diff(&it.intensities.lambda, &lambda);
        log::debug!("carbon flow iteration {k}: objective {} delta {delta:e}", it.dispatch.objective);
        trace.push(TraceRow {
            iteration: k,
            objective: it.dispatch.objective,
            delta_lambda: delta,
            lambda: it.intensities.lambda.clone(),
        });
        lambda = it.intensities.lambda.clone();
        if best.as_ref().is_none_or(|b| it.dispatch.objective > b.dispatch.objective) {
            best = Some(it);
        }
        if delta < cfg.lambda_tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("carbon flow iteration did not converge in {} iterations", cfg.max_iterations);
    }

    let best = best.expect("at least one iteration");
    let d = &best.dispatch;
    let residual = carbon_balance_residual(net, &d.p_g, &d.p_d, &d.line_flows, &best.intensities.lambda)?;
    Ok(CarbonFlowSolution {
        zero_throughflow_buses: best.intensities.zero_throughflow.iter().map(|&i| net.buses[i].id.clone()).collect(),
        lambda_e: best.intensities.lambda,
        dispatch: best.dispatch,
        iterations: trace.len(),
        converged,
        residual,
        trace,
    })
}

/// Writes the iteration trace as CSV: `iteration,objective,delta_lambda,lambda_<bus>...`.
pub fn write_trace_csv<W: io::Write>(net: &Network, trace: &[TraceRow], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["iteration".to_string(), "objective".into(), "delta_lambda".into()];
    header.extend(net.buses.iter().map(|b| format!("lambda_{}", b.id)));
    out.write_record(&header)?;
    for row in trace {
        let mut rec = vec![row.iteration.to_string(), format!("{:?}", row.objective), format!("{:?}", row.delta_lambda)];
        rec.extend(row.lambda.iter().map(|l| format!("{l:?}")));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}
