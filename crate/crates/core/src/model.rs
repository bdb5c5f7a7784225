//! Network and market participant types shared by every solver, plus the
//! solution records they return.
//!
//! All types are plain data: solvers borrow a [`Network`] and never mutate it.
//! Powers are in MW over a one-hour interval (so MW and MWh coincide), emissions
//! in tons of CO2, prices in $.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute feasibility tolerance (MW, tons) used by every solution check.
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: String,
    pub is_reference: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub id: String,
    pub from_bus: String,
    pub to_bus: String,
    /// MW per radian: flow from `from_bus` to `to_bus` is `susceptance * (theta_from - theta_to)`.
    pub susceptance: f64,
    /// MW, symmetric in both directions.
    pub flow_limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub id: String,
    pub bus: String,
    /// $/MWh
    pub cost: f64,
    pub p_min: f64,
    pub p_max: f64,
    /// tons CO2 per MWh
    pub emission_intensity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Consumer {
    pub id: String,
    pub bus: String,
    /// $/MWh
    pub utility: f64,
    pub p_min: f64,
    pub p_max: f64,
    /// $ per ton CO2 attributed to this consumer
    pub carbon_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Network {
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub generators: Vec<Generator>,
    pub consumers: Vec<Consumer>,
}

/// Machine-readable category of a network invariant breach.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationCode {
    EmptyNetwork,
    NoReference,
    MultipleReference,
    DuplicateId,
    UnknownBus,
    SelfLoop,
    NegativeLimit,
    BoundOrder,
    NegativeBound,
    NegativeCost,
    NegativeIntensity,
    NegativeCarbonCost,
    NonFinite,
    Disconnected,
}

impl ViolationCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationCode::EmptyNetwork => "empty-network",
            ViolationCode::NoReference => "no-reference",
            ViolationCode::MultipleReference => "multiple-reference",
            ViolationCode::DuplicateId => "duplicate-id",
            ViolationCode::UnknownBus => "unknown-bus",
            ViolationCode::SelfLoop => "self-loop",
            ViolationCode::NegativeLimit => "negative-limit",
            ViolationCode::BoundOrder => "bound-order",
            ViolationCode::NegativeBound => "negative-bound",
            ViolationCode::NegativeCost => "negative-cost",
            ViolationCode::NegativeIntensity => "negative-intensity",
            ViolationCode::NegativeCarbonCost => "negative-carbon-cost",
            ViolationCode::NonFinite => "non-finite",
            ViolationCode::Disconnected => "disconnected",
        }
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    /// Identifier of the offending element.
    pub subject: String,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({}): {}", self.code, self.subject, self.detail)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid network: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
}

impl Network {
    pub fn bus_index(&self) -> HashMap<&str, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id.as_str(), i)).collect()
    }

    pub fn reference_bus(&self) -> Option<usize> {
        self.buses.iter().position(|b| b.is_reference)
    }

    pub fn total_max_demand(&self) -> f64 {
        self.consumers.iter().map(|c| c.p_max).sum()
    }

    /// Returns the network with every consumer's carbon cost replaced.
    pub fn with_carbon_costs(&self, costs: &[f64]) -> Network {
        assert_eq!(costs.len(), self.consumers.len());
        let mut net = self.clone();
        for (c, &v) in net.consumers.iter_mut().zip(costs) {
            c.carbon_cost = v;
        }
        net
    }

    pub fn carbon_costs(&self) -> Vec<f64> {
        self.consumers.iter().map(|c| c.carbon_cost).collect()
    }

    pub fn ensure_valid(&self) -> Result<(), ModelError> {
        let v = validate_network(self);
        if v.is_empty() {
            Ok(())
        } else {
            Err(ModelError::Invalid(v))
        }
    }
}

/// Lists every invariant breach of `net`; an empty list means the network is valid.
pub fn validate_network(net: &Network) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |code, subject: &str, detail: String| {
        out.push(Violation { code, subject: subject.to_string(), detail });
    };

    if net.buses.is_empty() {
        push(ViolationCode::EmptyNetwork, "network", "no buses".into());
    }
    let refs: Vec<&Bus> = net.buses.iter().filter(|b| b.is_reference).collect();
    if refs.is_empty() && !net.buses.is_empty() {
        push(ViolationCode::NoReference, "network", "no reference bus".into());
    }
    if refs.len() > 1 {
        let ids: Vec<&str> = refs.iter().map(|b| b.id.as_str()).collect();
        push(ViolationCode::MultipleReference, "network", format!("reference buses {}", ids.join(", ")));
    }

    let mut seen = HashSet::new();
    for b in &net.buses {
        if !seen.insert(b.id.as_str()) {
            push(ViolationCode::DuplicateId, &b.id, "duplicate bus id".into());
        }
    }
    let buses: HashSet<&str> = net.buses.iter().map(|b| b.id.as_str()).collect();

    let mut line_ids = HashSet::new();
    for l in &net.lines {
        if !line_ids.insert(l.id.as_str()) {
            push(ViolationCode::DuplicateId, &l.id, "duplicate line id".into());
        }
        for end in [&l.from_bus, &l.to_bus] {
            if !buses.contains(end.as_str()) {
                push(ViolationCode::UnknownBus, &l.id, format!("endpoint bus `{end}` does not exist"));
            }
        }
        if l.from_bus == l.to_bus {
            push(ViolationCode::SelfLoop, &l.id, format!("both ends at bus `{}`", l.from_bus));
        }
        if !l.susceptance.is_finite() || l.flow_limit.is_nan() {
            push(ViolationCode::NonFinite, &l.id, "non-finite line parameter".into());
        } else if l.flow_limit < 0.0 {
            push(ViolationCode::NegativeLimit, &l.id, format!("flow_limit {} < 0", l.flow_limit));
        }
    }

    let mut gen_ids = HashSet::new();
    for g in &net.generators {
        if !gen_ids.insert(g.id.as_str()) {
            push(ViolationCode::DuplicateId, &g.id, "duplicate generator id".into());
        }
        if !buses.contains(g.bus.as_str()) {
            push(ViolationCode::UnknownBus, &g.id, format!("bus `{}` does not exist", g.bus));
        }
        if ![g.cost, g.p_min, g.p_max, g.emission_intensity].iter().all(|v| v.is_finite()) {
            push(ViolationCode::NonFinite, &g.id, "non-finite generator parameter".into());
            continue;
        }
        if g.p_min < 0.0 {
            push(ViolationCode::NegativeBound, &g.id, format!("p_min {} < 0", g.p_min));
        }
        if g.p_min > g.p_max {
            push(ViolationCode::BoundOrder, &g.id, format!("p_min {} > p_max {}", g.p_min, g.p_max));
        }
        if g.cost < 0.0 {
            push(ViolationCode::NegativeCost, &g.id, format!("cost {} < 0", g.cost));
        }
        if g.emission_intensity < 0.0 {
            push(ViolationCode::NegativeIntensity, &g.id, format!("emission_intensity {} < 0", g.emission_intensity));
        }
    }

    let mut con_ids = HashSet::new();
    for c in &net.consumers {
        if !con_ids.insert(c.id.as_str()) {
            push(ViolationCode::DuplicateId, &c.id, "duplicate consumer id".into());
        }
        if !buses.contains(c.bus.as_str()) {
            push(ViolationCode::UnknownBus, &c.id, format!("bus `{}` does not exist", c.bus));
        }
        if ![c.utility, c.p_min, c.p_max, c.carbon_cost].iter().all(|v| v.is_finite()) {
            push(ViolationCode::NonFinite, &c.id, "non-finite consumer parameter".into());
            continue;
        }
        if c.p_min < 0.0 {
            push(ViolationCode::NegativeBound, &c.id, format!("p_min {} < 0", c.p_min));
        }
        if c.p_min > c.p_max {
            push(ViolationCode::BoundOrder, &c.id, format!("p_min {} > p_max {}", c.p_min, c.p_max));
        }
        if c.carbon_cost < 0.0 {
            push(ViolationCode::NegativeCarbonCost, &c.id, format!("carbon_cost {} < 0", c.carbon_cost));
        }
    }

    // connectivity over known endpoints
    if !net.buses.is_empty() {
        let index = net.bus_index();
        let mut adj = vec![Vec::new(); net.buses.len()];
        for l in &net.lines {
            if let (Some(&a), Some(&b)) = (index.get(l.from_bus.as_str()), index.get(l.to_bus.as_str())) {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        let mut reached = vec![false; net.buses.len()];
        let mut queue = VecDeque::from([0usize]);
        reached[0] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !reached[v] {
                    reached[v] = true;
                    queue.push_back(v);
                }
            }
        }
        let isolated: Vec<&str> =
            net.buses.iter().zip(&reached).filter(|(_, &r)| !r).map(|(b, _)| b.id.as_str()).collect();
        if !isolated.is_empty() {
            push(ViolationCode::Disconnected, "network", format!("unreachable buses: {}", isolated.join(", ")));
        }
    }
    out
}

/// Susceptance and flow limit for one line of the built-in three-bus case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineParams {
    pub susceptance: f64,
    pub flow_limit: f64,
}

/// Default three-bus line parameters: unit susceptance, effectively unconstrained.
pub const THREE_BUS_DEFAULT_LINE: LineParams = LineParams { susceptance: 1.0, flow_limit: 1e4 };

/// The three-bus test system with one generator and one consumer per bus.
///
/// Lines are ordered 1-2, 1-3, 2-3. Carbon costs start at zero.
pub fn builtin_three_bus(line_params: Option<[LineParams; 3]>) -> Result<Network, ModelError> {
    let params = line_params.unwrap_or([THREE_BUS_DEFAULT_LINE; 3]);
    let buses = (1..=3).map(|i| Bus { id: i.to_string(), is_reference: i == 1 }).collect();
    let lines = [("1", "2"), ("1", "3"), ("2", "3")]
        .iter()
        .zip(params)
        .map(|(&(a, b), p)| Line {
            id: format!("L{a}-{b}"),
            from_bus: a.into(),
            to_bus: b.into(),
            susceptance: p.susceptance,
            flow_limit: p.flow_limit,
        })
        .collect();

    let gen_cost = [8.0, 10.0, 6.0];
    let gen_max = [20.0, 10.0, 25.0];
    let gen_e = [0.6, 1.0, 0.2];
    let generators = (0..3)
        .map(|k| Generator {
            id: format!("G{}", k + 1),
            bus: (k + 1).to_string(),
            cost: gen_cost[k],
            p_min: 0.0,
            p_max: gen_max[k],
            emission_intensity: gen_e[k],
        })
        .collect();

    let util = [18.0, 20.0, 21.0];
    let d_min = [4.0, 16.0, 12.0];
    let d_max = [6.0, 24.0, 18.0];
    let consumers = (0..3)
        .map(|k| Consumer {
            id: format!("D{}", k + 1),
            bus: (k + 1).to_string(),
            utility: util[k],
            p_min: d_min[k],
            p_max: d_max[k],
            carbon_cost: 0.0,
        })
        .collect();

    let net = Network { buses, lines, generators, consumers };
    net.ensure_valid()?;
    Ok(net)
}

/// Which clearing formulation produced a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClearingModelKind {
    /// Welfare maximization with a generator-to-consumer allocation and consumer carbon costs.
    CarbonCost,
    /// Cost minimization serving every consumer at its maximum demand.
    FixedDemand,
    /// Welfare maximization with flexible demand and no carbon accounting.
    FlexibleDemand,
    /// Carbon-cost welfare with proportional-sharing nodal intensities.
    CarbonFlow,
}

impl ClearingModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ClearingModelKind::CarbonCost => "carbon-cost",
            ClearingModelKind::FixedDemand => "fixed-demand",
            ClearingModelKind::FlexibleDemand => "flexible-demand",
            ClearingModelKind::CarbonFlow => "carbon-flow",
        }
    }
}

impl fmt::Display for ClearingModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Dense generators x consumers matrix of allocated MW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationMatrix {
    pub generators: usize,
    pub consumers: usize,
    /// Row-major: entry `(m, n)` at `m * consumers + n`.
    pub data: Vec<f64>,
}

impl AllocationMatrix {
    pub fn zeros(generators: usize, consumers: usize) -> Self {
        AllocationMatrix { generators, consumers, data: vec![0.0; generators * consumers] }
    }

    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.data[m * self.consumers + n]
    }

    pub fn set(&mut self, m: usize, n: usize, v: f64) {
        self.data[m * self.consumers + n] = v;
    }

    pub fn row_sum(&self, m: usize) -> f64 {
        self.data[m * self.consumers..(m + 1) * self.consumers].iter().sum()
    }

    pub fn col_sum(&self, n: usize) -> f64 {
        (0..self.generators).map(|m| self.get(m, n)).sum()
    }

    /// Emissions attributed to each consumer: `sum_m e[m] * pi[m][n]`.
    pub fn consumer_emissions(&self, intensity: &[f64]) -> Vec<f64> {
        (0..self.consumers).map(|n| (0..self.generators).map(|m| intensity[m] * self.get(m, n)).sum()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ObjectiveTerms {
    /// `u_d . P_d`
    pub utility: f64,
    /// `c_co2 . E_d`; zero for the carbon-agnostic models.
    pub carbon: f64,
    /// `c_g . P_g`
    pub generation_cost: f64,
}

impl ObjectiveTerms {
    pub fn welfare(&self) -> f64 {
        self.utility - self.carbon - self.generation_cost
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchSolution {
    pub model: ClearingModelKind,
    pub p_g: Vec<f64>,
    pub p_d: Vec<f64>,
    /// Voltage angles in radians, zero at the reference bus.
    pub theta: Vec<f64>,
    pub line_flows: Vec<f64>,
    /// Present only for the carbon-cost model.
    pub allocation: Option<AllocationMatrix>,
    /// Emissions attributed to each consumer; absent for carbon-agnostic models.
    pub e_d: Option<Vec<f64>>,
    /// Welfare `u_d.P_d - c_co2.E_d - c_g.P_g` at this dispatch, for every model.
    pub objective: f64,
    pub objective_terms: ObjectiveTerms,
    /// False when the reported allocation is one of several optimal ones.
    pub allocation_unique: bool,
}

impl DispatchSolution {
    pub fn total_generation(&self) -> f64 {
        self.p_g.iter().sum()
    }

    pub fn total_emissions(&self, net: &Network) -> f64 {
        net.generators.iter().zip(&self.p_g).map(|(g, p)| g.emission_intensity * p).sum()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("solution check failed: {}", .0.join("; "))]
pub struct SolutionCheckError(pub Vec<String>);

/// Verifies the dispatch and allocation invariants of `sol` against `net` at
/// [`FEASIBILITY_TOL`]: bounds, nodal balance, line limits, DC flow law,
/// reference angle, and (when present) allocation sums and emission accounting.
pub fn check_solution(net: &Network, sol: &DispatchSolution) -> Result<(), SolutionCheckError> {
    let tol = FEASIBILITY_TOL;
    let mut errs = Vec::new();
    let index = net.bus_index();
    if sol.p_g.len() != net.generators.len()
        || sol.p_d.len() != net.consumers.len()
        || sol.theta.len() != net.buses.len()
        || sol.line_flows.len() != net.lines.len()
    {
        return Err(SolutionCheckError(vec!["dimension mismatch".into()]));
    }

    for (g, &p) in net.generators.iter().zip(&sol.p_g) {
        if p < g.p_min - tol || p > g.p_max + tol {
            errs.push(format!("generator {} output {p} outside [{}, {}]", g.id, g.p_min, g.p_max));
        }
    }
    for (c, &p) in net.consumers.iter().zip(&sol.p_d) {
        if p < c.p_min - tol || p > c.p_max + tol {
            errs.push(format!("consumer {} demand {p} outside [{}, {}]", c.id, c.p_min, c.p_max));
        }
    }
    if let Some(r) = net.reference_bus() {
        if sol.theta[r].abs() > tol {
            errs.push(format!("reference angle {} != 0", sol.theta[r]));
        }
    }

    let mut injection = vec![0.0; net.buses.len()];
    for (g, &p) in net.generators.iter().zip(&sol.p_g) {
        injection[index[g.bus.as_str()]] += p;
    }
    for (c, &p) in net.consumers.iter().zip(&sol.p_d) {
        injection[index[c.bus.as_str()]] -= p;
    }
    for (l, &f) in net.lines.iter().zip(&sol.line_flows) {
        let (a, b) = (index[l.from_bus.as_str()], index[l.to_bus.as_str()]);
        let law = l.susceptance * (sol.theta[a] - sol.theta[b]);
        if (law - f).abs() > tol * law.abs().max(1.0) {
            errs.push(format!("line {} flow {f} differs from susceptance law {law}", l.id));
        }
        if f.abs() > l.flow_limit + tol {
            errs.push(format!("line {} flow {f} exceeds limit {}", l.id, l.flow_limit));
        }
        injection[a] -= f;
        injection[b] += f;
    }
    for (b, &r) in net.buses.iter().zip(&injection) {
        if r.abs() > tol {
            errs.push(format!("bus {} power imbalance {r}", b.id));
        }
    }

    if let Some(pi) = &sol.allocation {
        if pi.generators != net.generators.len() || pi.consumers != net.consumers.len() {
            errs.push("allocation dimension mismatch".into());
        } else {
            if let Some(v) = pi.data.iter().find(|&&v| v < -tol) {
                errs.push(format!("negative allocation entry {v}"));
            }
            for (m, g) in net.generators.iter().enumerate() {
                let s = pi.row_sum(m);
                if (s - sol.p_g[m]).abs() > tol {
                    errs.push(format!("allocation row {} sums to {s}, dispatch {}", g.id, sol.p_g[m]));
                }
            }
            for (n, c) in net.consumers.iter().enumerate() {
                let s = pi.col_sum(n);
                if (s - sol.p_d[n]).abs() > tol {
                    errs.push(format!("allocation column {} sums to {s}, demand {}", c.id, sol.p_d[n]));
                }
            }
            if let Some(e_d) = &sol.e_d {
                let intensity: Vec<f64> = net.generators.iter().map(|g| g.emission_intensity).collect();
                for (n, (want, have)) in pi.consumer_emissions(&intensity).iter().zip(e_d).enumerate() {
                    if (want - have).abs() > tol {
                        errs.push(format!("consumer {} emissions {have} but allocation implies {want}", net.consumers[n].id));
                    }
                }
            }
        }
    }
    if let Some(e_d) = &sol.e_d {
        if e_d.len() != net.consumers.len() {
            errs.push("emission vector dimension mismatch".into());
        } else if sol.allocation.is_some() {
            let total = sol.total_emissions(net);
            let attributed: f64 = e_d.iter().sum();
            if (total - attributed).abs() > tol * total.max(1.0) {
                errs.push(format!("attributed emissions {attributed} != generated emissions {total}"));
            }
        }
    }

    if errs.is_empty() {
        Ok(())
    } else {
        Err(SolutionCheckError(errs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_bus_is_valid_and_matches_table_data() {
        let net = builtin_three_bus(None).unwrap();
        assert!(validate_network(&net).is_empty());
        assert_eq!(net.total_max_demand(), 48.0);
        assert_eq!(net.generators[2].emission_intensity, 0.2);
        assert_eq!(net.generators[2].bus, "3");
        let utilities: Vec<f64> = net.consumers.iter().map(|c| c.utility).collect();
        assert_eq!(utilities, vec![18.0, 20.0, 21.0]);
        let costs: Vec<f64> = net.generators.iter().map(|g| g.cost).collect();
        assert_eq!(costs, vec![8.0, 10.0, 6.0]);
    }

    #[test]
    fn three_bus_rejects_negative_limit() {
        let mut p = [THREE_BUS_DEFAULT_LINE; 3];
        p[1].flow_limit = -1.0;
        match builtin_three_bus(Some(p)) {
            Err(ModelError::Invalid(v)) => {
                assert_eq!(v.len(), 1);
                assert_eq!(v[0].code, ViolationCode::NegativeLimit);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn two_reference_buses_flagged_once() {
        let mut net = builtin_three_bus(None).unwrap();
        net.buses[2].is_reference = true;
        let v = validate_network(&net);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].code.as_str(), "multiple-reference");
    }

    #[test]
    fn inverted_generator_bounds_flagged() {
        let mut net = builtin_three_bus(None).unwrap();
        net.generators[0].p_min = 10.0;
        net.generators[0].p_max = 5.0;
        let v = validate_network(&net);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].code.as_str(), "bound-order");
    }

    #[test]
    fn disconnected_and_unknown_bus() {
        let mut net = builtin_three_bus(None).unwrap();
        net.lines.retain(|l| l.to_bus != "3");
        net.consumers[0].bus = "9".into();
        let codes: Vec<_> = validate_network(&net).iter().map(|v| v.code).collect();
        assert!(codes.contains(&ViolationCode::Disconnected));
        assert!(codes.contains(&ViolationCode::UnknownBus));
    }

    #[test]
    fn allocation_helpers() {
        let mut pi = AllocationMatrix::zeros(2, 3);
        pi.set(0, 1, 2.0);
        pi.set(1, 1, 3.0);
        pi.set(1, 2, 1.0);
        assert_eq!(pi.row_sum(1), 4.0);
        assert_eq!(pi.col_sum(1), 5.0);
        assert_eq!(pi.consumer_emissions(&[1.0, 0.5]), vec![0.0, 3.5, 0.5]);
    }
}
