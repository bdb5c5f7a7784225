//! Evaluation metrics and baseline comparisons.

use std::fmt::Write as _;
use std::io;

use serde::{Deserialize, Serialize};

use crate::carbonflow::CarbonFlowSolution;
use crate::model::{ClearingModelKind, DispatchSolution, Network, ObjectiveTerms};

/// Where per-consumer emissions come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmissionAttribution {
    /// Generator-to-consumer allocation matrix.
    Allocation,
    /// Nodal carbon intensity times consumption.
    NodalIntensity,
    /// The model does not attribute emissions to consumers.
    NotAllocated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsumerMetrics {
    pub id: String,
    /// MWh
    pub p_d: f64,
    /// tons; `None` when not allocated
    pub e_d: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: ClearingModelKind,
    /// MWh
    pub total_generation: f64,
    /// $
    pub total_generation_cost: f64,
    /// tons
    pub total_carbon: f64,
    /// tons/MWh; 0 when total generation is 0
    pub average_carbon: f64,
    /// Set when total generation is zero and the average is undefined.
    pub degenerate: bool,
    pub attribution: EmissionAttribution,
    pub per_consumer: Vec<ConsumerMetrics>,
    pub objective_terms: ObjectiveTerms,
    /// $
    pub objective: f64,
}

/// Any solution the metrics can be computed for.
#[derive(Debug, Clone, Copy)]
pub enum SolutionRef<'a> {
    Dispatch(&'a DispatchSolution),
    CarbonFlow(&'a CarbonFlowSolution),
}

impl<'a> From<&'a DispatchSolution> for SolutionRef<'a> {
    fn from(s: &'a DispatchSolution) -> Self {
        SolutionRef::Dispatch(s)
    }
}

impl<'a> From<&'a CarbonFlowSolution> for SolutionRef<'a> {
    fn from(s: &'a CarbonFlowSolution) -> Self {
        SolutionRef::CarbonFlow(s)
    }
}

pub fn compute_metrics<'a>(net: &Network, sol: impl Into<SolutionRef<'a>>) -> MetricsReport {
    let sol = sol.into();
    let (d, attribution) = match sol {
        SolutionRef::Dispatch(d) if d.allocation.is_some() => (d, EmissionAttribution::Allocation),
        SolutionRef::Dispatch(d) => (d, EmissionAttribution::NotAllocated),
        SolutionRef::CarbonFlow(cf) => (&cf.dispatch, EmissionAttribution::NodalIntensity),
    };
    let total_generation: f64 = d.p_g.iter().sum();
    let total_carbon = d.total_emissions(net);
    let degenerate = total_generation == 0.0;
    let per_consumer = net
        .consumers
        .iter()
        .enumerate()
        .map(|(n, c)| ConsumerMetrics {
            id: c.id.clone(),
            p_d: d.p_d[n],
            e_d: match attribution {
                EmissionAttribution::NotAllocated => None,
                _ => d.e_d.as_ref().map(|e| e[n]),
            },
        })
        .collect();
    MetricsReport {
        model: d.model,
        total_generation,
        total_generation_cost: d.objective_terms.generation_cost,
        total_carbon,
        average_carbon: if degenerate { 0.0 } else { total_carbon / total_generation },
        degenerate,
        attribution,
        per_consumer,
        objective_terms: d.objective_terms,
        objective: d.objective,
    }
}

/// The four aggregate quantities compared across reports.
pub const AGGREGATES: [&str; 4] = ["total_generation", "total_generation_cost", "total_carbon", "average_carbon"];

impl MetricsReport {
    pub fn aggregates(&self) -> [f64; 4] {
        [self.total_generation, self.total_generation_cost, self.total_carbon, self.average_carbon]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub values: [f64; 4],
    /// Percent change against the baseline; `None` when the baseline value is 0.
    pub delta_pct: [Option<f64>; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline: String,
    pub rows: Vec<ComparisonRow>,
}

fn pct(v: f64, base: f64) -> Option<f64> {
    if base == 0.0 {
        (v == 0.0).then_some(0.0)
    } else {
        Some((v - base) / base * 100.0)
    }
}

/// Aligns `reports` and computes percent deltas of the aggregates against `reports[baseline]`.
pub fn compare(reports: &[(&str, &MetricsReport)], baseline: usize) -> Comparison {
    let (base_label, base) = reports[baseline];
    let b = base.aggregates();
    let rows = reports
        .iter()
        .map(|(label, r)| {
            let v = r.aggregates();
            ComparisonRow {
                label: label.to_string(),
                values: v,
                delta_pct: [pct(v[0], b[0]), pct(v[1], b[1]), pct(v[2], b[2]), pct(v[3], b[3])],
            }
        })
        .collect();
    Comparison { baseline: base_label.to_string(), rows }
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:?}"))
}

impl Comparison {
    /// Full-precision CSV: label, then value and delta for each aggregate.
    pub fn write_csv<W: io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["label".to_string()];
        for a in AGGREGATES {
            header.push(a.to_string());
            header.push(format!("{a}_delta_pct"));
        }
        out.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.label.clone()];
            for k in 0..4 {
                rec.push(format!("{:?}", r.values[k]));
                rec.push(opt(r.delta_pct[k]));
            }
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Human-readable table rounded to two decimals.
    pub fn to_text(&self) -> String {
        let mut s = format!("baseline: {}\n", self.baseline);
        let _ = writeln!(s, "{:<16}{:>22}{:>22}{:>22}{:>22}", "case", "generation [MWh]", "cost [$]", "carbon [t]", "avg [t/MWh]");
        for r in &self.rows {
            let _ = write!(s, "{:<16}", r.label);
            for k in 0..4 {
                let d = r.delta_pct[k].map_or("n/a".to_string(), |d| format!("{d:+.2}%"));
                let _ = write!(s, "{:>22}", format!("{:.2} ({d})", r.values[k]));
            }
            s.push('\n');
        }
        s
    }
}

/// Writes one CSV row per report with the aggregates and objective terms at full precision.
pub fn write_reports_csv<W: io::Write>(reports: &[(&str, &MetricsReport)], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "label",
        "model",
        "total_generation_mwh",
        "total_generation_cost_usd",
        "total_carbon_t",
        "average_carbon_t_per_mwh",
        "utility_term_usd",
        "carbon_term_usd",
        "objective_usd",
        "degenerate",
    ])?;
    for (label, r) in reports {
        out.write_record([
            label.to_string(),
            r.model.to_string(),
            format!("{:?}", r.total_generation),
            format!("{:?}", r.total_generation_cost),
            format!("{:?}", r.total_carbon),
            format!("{:?}", r.average_carbon),
            format!("{:?}", r.objective_terms.utility),
            format!("{:?}", r.objective_terms.carbon),
            format!("{:?}", r.objective),
            r.degenerate.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clearing::{clear_carbon_cost, clear_fixed_demand, clear_flexible_demand};
    use crate::model::builtin_three_bus;

    #[test]
    fn three_bus_zero_cost_metrics() {
        let net = builtin_three_bus(None).unwrap();
        let r = compute_metrics(&net, &clear_carbon_cost(&net).unwrap());
        assert!((r.total_generation - 48.0).abs() < 1e-9);
        assert!((r.total_generation_cost - 340.0).abs() < 1e-9);
        assert!((r.total_carbon - 20.0).abs() < 1e-9);
        assert!((r.average_carbon - 20.0 / 48.0).abs() < 1e-12);
        assert_eq!(r.attribution, EmissionAttribution::Allocation);
        let attributed: f64 = r.per_consumer.iter().map(|c| c.e_d.unwrap()).sum();
        assert!((attributed - r.total_carbon).abs() < 1e-6);
    }

    #[test]
    fn benchmarks_do_not_attribute() {
        let net = builtin_three_bus(None).unwrap();
        let r = compute_metrics(&net, &clear_fixed_demand(&net).unwrap());
        assert_eq!(r.attribution, EmissionAttribution::NotAllocated);
        assert!(r.per_consumer.iter().all(|c| c.e_d.is_none()));
    }

    #[test]
    fn empty_dispatch_is_degenerate() {
        let mut net = builtin_three_bus(None).unwrap();
        for c in &mut net.consumers {
            c.p_min = 0.0;
            c.utility = 1.0;
        }
        let r = compute_metrics(&net, &clear_flexible_demand(&net).unwrap());
        assert!(r.degenerate);
        assert_eq!(r.aggregates(), [0.0; 4]);
    }

    #[test]
    fn average_times_generation_is_total() {
        let net = builtin_three_bus(None).unwrap().with_carbon_costs(&[5.0, 10.0, 20.0]);
        let r = compute_metrics(&net, &clear_carbon_cost(&net).unwrap());
        assert!((r.average_carbon * r.total_generation - r.total_carbon).abs() <= 1e-9 * r.total_carbon);
    }

    #[test]
    fn comparison_deltas() {
        let net = builtin_three_bus(None).unwrap();
        let base = compute_metrics(&net, &clear_fixed_demand(&net).unwrap());
        let mut other = base.clone();
        other.total_generation *= 0.944;
        other.total_carbon *= 0.825;
        let c = compare(&[("P(2)", &base), ("[50,80]", &other), ("self", &base)], 0);
        assert!((c.rows[1].delta_pct[0].unwrap() + 5.6).abs() < 1e-9);
        assert!((c.rows[1].delta_pct[2].unwrap() + 17.5).abs() < 1e-9);
        assert_eq!(c.rows[2].delta_pct, [Some(0.0); 4]);
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("label,total_generation,total_generation_delta_pct,"));
        assert!(c.to_text().contains("-5.60%"));
    }
}
