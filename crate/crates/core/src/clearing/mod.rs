//! Market clearing formulations on the DC network model.
//!
//! * [`clear_carbon_cost`]: welfare maximization where each consumer is
//!   allocated MW from specific generators and pays its own carbon cost on the
//!   emissions of that allocation. One LP containing the full allocation matrix.
//! * [`clear_fixed_demand`]: least-cost dispatch with every consumer at its
//!   maximum demand.
//! * [`clear_flexible_demand`]: welfare maximization without carbon accounting.
//!
//! [`allocate_transportation`] solves the allocation subproblem for a fixed
//! dispatch with a sorted northwest-corner greedy; it verifies the LP path and
//! canonicalizes allocations when they are not unique.

mod transport;

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::lp::{self, ConstraintId, LinearProgram, LpError, LpStatus, Relation, Sense, VarId};
use crate::model::{
    AllocationMatrix, ClearingModelKind, DispatchSolution, ModelError, Network, ObjectiveTerms,
};

pub use transport::{allocate_transportation, TransportAllocation, TransportError};

/// Constraint groups an infeasibility certificate can point at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ConstraintFamily {
    NodalBalance,
    LineFlow,
    ReferenceAngle,
    GeneratorAllocation,
    ConsumerAllocation,
    EmissionAccounting,
}

impl fmt::Display for ConstraintFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConstraintFamily::NodalBalance => "nodal balance",
            ConstraintFamily::LineFlow => "line flow/limits",
            ConstraintFamily::ReferenceAngle => "reference angle",
            ConstraintFamily::GeneratorAllocation => "generator allocation",
            ConstraintFamily::ConsumerAllocation => "consumer allocation",
            ConstraintFamily::EmissionAccounting => "emission accounting",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClearingError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("market clearing infeasible; certificate implicates {}", fmt_families(.families))]
    Infeasible { families: Vec<ConstraintFamily>, constraints: Vec<String> },
    #[error("clearing LP unbounded (all bounds are finite, so this indicates a solver fault)")]
    Unbounded,
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Allocation(#[from] TransportError),
    #[error("model `{0}` is not an LP clearing formulation")]
    Unsupported(ClearingModelKind),
}

fn fmt_families(f: &[ConstraintFamily]) -> String {
    if f.is_empty() {
        return "no specific constraint family (variable bounds)".into();
    }
    f.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

/// Variable handles of the shared DC-OPF core.
pub(crate) struct DcModel {
    pub lp: LinearProgram,
    pub p_g: Vec<VarId>,
    pub p_d: Vec<VarId>,
    pub theta: Vec<VarId>,
    pub flow: Vec<VarId>,
}

#[derive(Clone, Copy)]
pub(crate) enum Demand<'a> {
    /// Every consumer at its maximum demand.
    Fixed,
    /// Flexible demand with the given objective coefficient per consumer.
    Flexible(&'a [f64]),
}

/// Builds the DC-OPF LP (maximize sense): generation bounds, demand bounds,
/// one flow variable per line bounded by its limit, flow law rows, nodal
/// balance rows and the reference angle row.
pub(crate) fn build_dc_model(net: &Network, demand: Demand<'_>) -> DcModel {
    let index = net.bus_index();
    let mut lp = LinearProgram::new(Sense::Maximize);
    let p_g: Vec<VarId> =
        net.generators.iter().map(|g| lp.add_var(format!("pg:{}", g.id), g.p_min, g.p_max, -g.cost)).collect();
    let p_d: Vec<VarId> = net
        .consumers
        .iter()
        .enumerate()
        .map(|(n, c)| match demand {
            Demand::Fixed => lp.add_var(format!("pd:{}", c.id), c.p_max, c.p_max, 0.0),
            Demand::Flexible(u) => lp.add_var(format!("pd:{}", c.id), c.p_min, c.p_max, u[n]),
        })
        .collect();
    let theta: Vec<VarId> = net
        .buses
        .iter()
        .map(|b| lp.add_var(format!("theta:{}", b.id), f64::NEG_INFINITY, f64::INFINITY, 0.0))
        .collect();
    let flow: Vec<VarId> =
        net.lines.iter().map(|l| lp.add_var(format!("flow:{}", l.id), -l.flow_limit, l.flow_limit, 0.0)).collect();

    for (k, l) in net.lines.iter().enumerate() {
        let (a, b) = (index[l.from_bus.as_str()], index[l.to_bus.as_str()]);
        lp.add_constraint(
            format!("flow:{}", l.id),
            vec![(flow[k], 1.0), (theta[a], -l.susceptance), (theta[b], l.susceptance)],
            Relation::Eq,
            0.0,
        );
    }

    let mut rows: Vec<Vec<(VarId, f64)>> = vec![Vec::new(); net.buses.len()];
    for (m, g) in net.generators.iter().enumerate() {
        rows[index[g.bus.as_str()]].push((p_g[m], 1.0));
    }
    for (n, c) in net.consumers.iter().enumerate() {
        rows[index[c.bus.as_str()]].push((p_d[n], -1.0));
    }
    for (k, l) in net.lines.iter().enumerate() {
        rows[index[l.from_bus.as_str()]].push((flow[k], -1.0));
        rows[index[l.to_bus.as_str()]].push((flow[k], 1.0));
    }
    for (b, terms) in net.buses.iter().zip(rows) {
        lp.add_constraint(format!("balance:{}", b.id), terms, Relation::Eq, 0.0);
    }
    if let Some(r) = net.reference_bus() {
        lp.add_constraint("ref", vec![(theta[r], 1.0)], Relation::Eq, 0.0);
    }
    DcModel { lp, p_g, p_d, theta, flow }
}

fn family_of(name: &str) -> Option<ConstraintFamily> {
    let prefix = name.split(':').next().unwrap_or(name);
    Some(match prefix {
        "balance" => ConstraintFamily::NodalBalance,
        "flow" => ConstraintFamily::LineFlow,
        "ref" => ConstraintFamily::ReferenceAngle,
        "alloc-gen" => ConstraintFamily::GeneratorAllocation,
        "alloc-con" => ConstraintFamily::ConsumerAllocation,
        "emission" => ConstraintFamily::EmissionAccounting,
        _ => return None,
    })
}

pub(crate) fn infeasible(lp: &LinearProgram, rows: &[ConstraintId]) -> ClearingError {
    let names: Vec<String> = rows.iter().map(|r| lp.constraints[r.0].name.clone()).collect();
    let families: BTreeSet<ConstraintFamily> = names.iter().filter_map(|n| family_of(n)).collect();
    ClearingError::Infeasible { families: families.into_iter().collect(), constraints: names }
}

/// Solves an assembled clearing LP, mapping non-optimal outcomes to errors.
pub(crate) fn solve_clearing_lp(lp: &LinearProgram) -> Result<lp::LpSolution, ClearingError> {
    let sol = lp::solve_lp(lp)?;
    match sol.status {
        LpStatus::Optimal => Ok(sol),
        LpStatus::Infeasible => Err(infeasible(lp, &sol.infeasible_constraints)),
        LpStatus::Unbounded => Err(ClearingError::Unbounded),
    }
}

pub(crate) fn objective_terms(net: &Network, p_g: &[f64], p_d: &[f64], e_d: Option<&[f64]>) -> ObjectiveTerms {
    ObjectiveTerms {
        utility: net.consumers.iter().zip(p_d).map(|(c, p)| c.utility * p).sum(),
        carbon: e_d.map_or(0.0, |e| net.consumers.iter().zip(e).map(|(c, e)| c.carbon_cost * e).sum()),
        generation_cost: net.generators.iter().zip(p_g).map(|(g, p)| g.cost * p).sum(),
    }
}

fn dispatch_from(
    net: &Network,
    model: ClearingModelKind,
    dc: &DcModel,
    sol: &lp::LpSolution,
    allocation: Option<AllocationMatrix>,
    e_d: Option<Vec<f64>>,
    allocation_unique: bool,
) -> DispatchSolution {
    let p_g: Vec<f64> = dc.p_g.iter().map(|&v| sol.value(v)).collect();
    let p_d: Vec<f64> = dc.p_d.iter().map(|&v| sol.value(v)).collect();
    let terms = objective_terms(net, &p_g, &p_d, e_d.as_deref());
    DispatchSolution {
        model,
        theta: dc.theta.iter().map(|&v| sol.value(v)).collect(),
        line_flows: dc.flow.iter().map(|&v| sol.value(v)).collect(),
        p_g,
        p_d,
        allocation,
        e_d,
        objective: terms.welfare(),
        objective_terms: terms,
        allocation_unique,
    }
}

/// Least-cost dispatch serving every consumer at `p_max`.
pub fn clear_fixed_demand(net: &Network) -> Result<DispatchSolution, ClearingError> {
    net.ensure_valid()?;
    let dc = build_dc_model(net, Demand::Fixed);
    let sol = solve_clearing_lp(&dc.lp)?;
    let mut out = dispatch_from(net, ClearingModelKind::FixedDemand, &dc, &sol, None, None, true);
    // pinned exactly; the scaled solve can leave round-off here
    for (p, c) in out.p_d.iter_mut().zip(&net.consumers) {
        *p = c.p_max;
    }
    out.objective_terms = objective_terms(net, &out.p_g, &out.p_d, None);
    out.objective = out.objective_terms.welfare();
    Ok(out)
}

/// Welfare-maximizing dispatch with flexible demand and no carbon accounting.
pub fn clear_flexible_demand(net: &Network) -> Result<DispatchSolution, ClearingError> {
    net.ensure_valid()?;
    let utilities: Vec<f64> = net.consumers.iter().map(|c| c.utility).collect();
    let dc = build_dc_model(net, Demand::Flexible(&utilities));
    let sol = solve_clearing_lp(&dc.lp)?;
    Ok(dispatch_from(net, ClearingModelKind::FlexibleDemand, &dc, &sol, None, None, true))
}

/// Carbon-cost market clearing: maximizes `u.P_d - c_co2.E_d - c_g.P_g` over
/// dispatch, angles, the generator-to-consumer allocation `pi` and the
/// consumer emissions `E_d`.
///
/// When every consumer submits the same carbon cost the optimal allocation is
/// not unique; the reported `pi` is then replaced by the greedy allocation that
/// gives cleaner power to lower-indexed consumers, and `allocation_unique` is
/// false. Dispatch and objective are unaffected.
pub fn clear_carbon_cost(net: &Network) -> Result<DispatchSolution, ClearingError> {
    net.ensure_valid()?;
    let utilities: Vec<f64> = net.consumers.iter().map(|c| c.utility).collect();
    let mut dc = build_dc_model(net, Demand::Flexible(&utilities));
    let (ng, nd) = (net.generators.len(), net.consumers.len());

    let mut pi = Vec::with_capacity(ng * nd);
    for g in &net.generators {
        for c in &net.consumers {
            pi.push(dc.lp.add_var(format!("pi:{}:{}", g.id, c.id), 0.0, f64::INFINITY, 0.0));
        }
    }
    let e_d: Vec<VarId> = net
        .consumers
        .iter()
        .map(|c| dc.lp.add_var(format!("ed:{}", c.id), f64::NEG_INFINITY, f64::INFINITY, -c.carbon_cost))
        .collect();

    for (m, g) in net.generators.iter().enumerate() {
        let mut terms: Vec<(VarId, f64)> = (0..nd).map(|n| (pi[m * nd + n], 1.0)).collect();
        terms.push((dc.p_g[m], -1.0));
        dc.lp.add_constraint(format!("alloc-gen:{}", g.id), terms, Relation::Eq, 0.0);
    }
    for (n, c) in net.consumers.iter().enumerate() {
        let mut terms: Vec<(VarId, f64)> = (0..ng).map(|m| (pi[m * nd + n], 1.0)).collect();
        terms.push((dc.p_d[n], -1.0));
        dc.lp.add_constraint(format!("alloc-con:{}", c.id), terms, Relation::Eq, 0.0);
    }
    for (n, c) in net.consumers.iter().enumerate() {
        let mut terms: Vec<(VarId, f64)> = net
            .generators
            .iter()
            .enumerate()
            .filter(|(_, g)| g.emission_intensity != 0.0)
            .map(|(m, g)| (pi[m * nd + n], g.emission_intensity))
            .collect();
        terms.push((e_d[n], -1.0));
        dc.lp.add_constraint(format!("emission:{}", c.id), terms, Relation::Eq, 0.0);
    }

    let sol = solve_clearing_lp(&dc.lp)?;
    let mut matrix = AllocationMatrix::zeros(ng, nd);
    for m in 0..ng {
        for n in 0..nd {
            matrix.set(m, n, sol.value(pi[m * nd + n]).max(0.0));
        }
    }
    let emissions: Vec<f64> = e_d.iter().map(|&v| sol.value(v)).collect();

    let costs = net.carbon_costs();
    let uniform = costs.windows(2).all(|w| w[0] == w[1]);
    if uniform {
        let p_g: Vec<f64> = dc.p_g.iter().map(|&v| sol.value(v)).collect();
        let p_d: Vec<f64> = dc.p_d.iter().map(|&v| sol.value(v)).collect();
        let canon = canonical_allocation(net, &p_g, &p_d)?;
        return Ok(dispatch_from(
            net,
            ClearingModelKind::CarbonCost,
            &dc,
            &sol,
            Some(canon.pi),
            Some(canon.e_d),
            false,
        ));
    }
    Ok(dispatch_from(net, ClearingModelKind::CarbonCost, &dc, &sol, Some(matrix), Some(emissions), true))
}

/// Allocation used when every consumer is indifferent to how emissions are
/// split: cleaner generation goes to lower-indexed consumers.
fn canonical_allocation(net: &Network, p_g: &[f64], p_d: &[f64]) -> Result<TransportAllocation, ClearingError> {
    let intensity: Vec<f64> = net.generators.iter().map(|g| g.emission_intensity).collect();
    let nd = net.consumers.len();
    let rank: Vec<f64> = (0..nd).map(|n| (nd - n) as f64).collect();
    let mut alloc = allocate_transportation(p_g, p_d, &intensity, &rank)?;
    alloc.carbon_term = net.consumers.iter().zip(&alloc.e_d).map(|(c, e)| c.carbon_cost * e).sum();
    Ok(alloc)
}

/// Dispatches to the LP-based formulations.
pub fn clear(net: &Network, kind: ClearingModelKind) -> Result<DispatchSolution, ClearingError> {
    match kind {
        ClearingModelKind::CarbonCost => clear_carbon_cost(net),
        ClearingModelKind::FixedDemand => clear_fixed_demand(net),
        ClearingModelKind::FlexibleDemand => clear_flexible_demand(net),
        ClearingModelKind::CarbonFlow => Err(ClearingError::Unsupported(kind)),
    }
}
