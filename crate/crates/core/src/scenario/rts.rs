//! RTS-GMLC loader.
//!
//! Reads `bus.csv`, `branch.csv` and `gen.csv` from one directory. Only the
//! columns listed in [`BUS_COLUMNS`], [`BRANCH_COLUMNS`] and [`GEN_COLUMNS`]
//! are used; extra columns are ignored. Every nonzero bus load becomes one
//! consumer with id `D<bus>`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EmissionIntensityTable, ScenarioError};
use crate::model::{Bus, Consumer, Generator, Line, Network};

/// MVA base of the per-unit branch reactances.
pub const RTS_BASE_MVA: f64 = 100.0;

pub const BUS_COLUMNS: &[&str] = &["Bus ID", "MW Load"];
pub const BRANCH_COLUMNS: &[&str] = &["UID", "From Bus", "To Bus", "X", "Cont Rating"];
pub const GEN_COLUMNS: &[&str] = &[
    "GEN UID",
    "Bus ID",
    "Fuel",
    "PMax MW",
    "PMin MW",
    "Fuel Price $/MMBTU",
    "Output_pct_0",
    "Output_pct_1",
    "Output_pct_2",
    "Output_pct_3",
    "HR_avg_0",
    "HR_incr_1",
    "HR_incr_2",
    "HR_incr_3",
];

/// How consumer utilities are assigned.
#[derive(Debug, Clone, PartialEq)]
pub enum UtilitySpec {
    Constant(f64),
    /// Independent uniform draws in consumer order.
    Uniform { lo: f64, hi: f64, seed: u64 },
    /// CSV with columns `Consumer ID` and `Utility $/MWh`.
    File(PathBuf),
}

/// Linear cost coefficient extracted from the piecewise heat-rate curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostExtraction {
    /// `(C(P_max) - C(P_min)) / (P_max - P_min)`
    AverageIncremental,
    /// `C(P_max) / P_max`
    FullLoadAverage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RtsOptions {
    pub intensities: EmissionIntensityTable,
    /// `P_d^min = flex_floor * P_d^max`
    pub flex_floor: f64,
    pub utilities: UtilitySpec,
    pub cost: CostExtraction,
    /// Keep each unit's minimum output; otherwise `p_min = 0`.
    pub enforce_p_min: bool,
}

impl RtsOptions {
    /// Utility range whose mean times the 8550 MW system load is close to 457,039 $.
    pub const DEFAULT_UTILITY_RANGE: [f64; 2] = [45.5, 62.5];
    pub const DEFAULT_UTILITY_SEED: u64 = 20_240_917;
}

impl Default for RtsOptions {
    fn default() -> Self {
        let [lo, hi] = Self::DEFAULT_UTILITY_RANGE;
        RtsOptions {
            intensities: EmissionIntensityTable::standard(),
            flex_floor: 0.8,
            utilities: UtilitySpec::Uniform { lo, hi, seed: Self::DEFAULT_UTILITY_SEED },
            cost: CostExtraction::AverageIncremental,
            enforce_p_min: true,
        }
    }
}

struct Table {
    file: PathBuf,
    columns: HashMap<String, usize>,
    rows: Vec<(usize, csv::StringRecord)>,
}

impl Table {
    fn read(path: &Path, required: &[&str]) -> Result<Table, ScenarioError> {
        let io = |e: std::io::Error| ScenarioError::Io { file: path.to_path_buf(), source: e };
        let csv_err = |e: csv::Error, row: usize| ScenarioError::Csv {
            file: path.to_path_buf(),
            row: e.position().map_or(row, |p| p.line() as usize),
            column: String::new(),
            message: e.to_string(),
        };
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(std::fs::File::open(path).map_err(io)?);
        let headers = rdr.headers().map_err(|e| csv_err(e, 1))?.clone();
        let columns: HashMap<String, usize> = headers.iter().enumerate().map(|(i, h)| (h.to_string(), i)).collect();
        for c in required {
            if !columns.contains_key(*c) {
                return Err(ScenarioError::Csv {
                    file: path.to_path_buf(),
                    row: 1,
                    column: c.to_string(),
                    message: "required column missing from header".into(),
                });
            }
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| csv_err(e, i + 2))?;
            let line = rec.position().map_or(i + 2, |p| p.line() as usize);
            rows.push((line, rec));
        }
        Ok(Table { file: path.to_path_buf(), columns, rows })
    }

    fn err(&self, row: usize, column: &str, message: impl Into<String>) -> ScenarioError {
        ScenarioError::Csv { file: self.file.clone(), row, column: column.to_string(), message: message.into() }
    }

    fn str<'a>(&self, rec: &'a (usize, csv::StringRecord), column: &str) -> Result<&'a str, ScenarioError> {
        match rec.1.get(self.columns[column]) {
            Some(s) if !s.is_empty() => Ok(s),
            _ => Err(self.err(rec.0, column, "missing value")),
        }
    }

    fn f64(&self, rec: &(usize, csv::StringRecord), column: &str) -> Result<f64, ScenarioError> {
        let s = self.str(rec, column)?;
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.err(rec.0, column, format!("`{s}` is not a finite number"))),
        }
    }
}

fn bus_order(a: &str, b: &str) -> std::cmp::Ordering {
    match (a.parse::<i64>(), b.parse::<i64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        _ => a.cmp(b),
    }
}

/// Linear $/MWh cost of a generator row.
fn linear_cost(t: &Table, rec: &(usize, csv::StringRecord), how: CostExtraction) -> Result<f64, ScenarioError> {
    let price = t.f64(rec, "Fuel Price $/MMBTU")?;
    let p_max = t.f64(rec, "PMax MW")?;
    let pct: Vec<f64> =
        (0..4).map(|k| t.f64(rec, &format!("Output_pct_{k}"))).collect::<Result<_, _>>()?;
    let hr_avg = t.f64(rec, "HR_avg_0")?;
    let incr: Vec<f64> = (1..4).map(|k| t.f64(rec, &format!("HR_incr_{k}"))).collect::<Result<_, _>>()?;
    if price == 0.0 || p_max == 0.0 {
        return Ok(0.0);
    }
    // heat rates are BTU/kWh, i.e. MMBtu/MWh * 1000
    let x: Vec<f64> = pct.iter().map(|p| p * p_max).collect();
    let c0 = price * hr_avg * x[0] / 1000.0;
    let mut c = c0;
    for k in 1..4 {
        c += price * incr[k - 1] * (x[k] - x[k - 1]) / 1000.0;
    }
    Ok(match how {
        CostExtraction::AverageIncremental if x[3] > x[0] => (c - c0) / (x[3] - x[0]),
        CostExtraction::AverageIncremental => price * hr_avg / 1000.0,
        CostExtraction::FullLoadAverage => c / x[3].max(f64::MIN_POSITIVE),
    })
}

fn read_utility_file(path: &Path) -> Result<HashMap<String, f64>, ScenarioError> {
    let t = Table::read(path, &["Consumer ID", "Utility $/MWh"])?;
    let mut out = HashMap::new();
    for rec in &t.rows {
        let id = t.str(rec, "Consumer ID")?.to_string();
        let u = t.f64(rec, "Utility $/MWh")?;
        if out.insert(id.clone(), u).is_some() {
            return Err(t.err(rec.0, "Consumer ID", format!("duplicate consumer `{id}`")));
        }
    }
    Ok(out)
}

/// Loads the RTS-GMLC network from `dir`.
///
/// Line susceptance is `RTS_BASE_MVA / X` MW/rad (transformer taps ignored),
/// the flow limit is the continuous rating, and the numerically lowest bus id
/// is the reference.
pub fn load_rts_gmlc(dir: &Path, opts: &RtsOptions) -> Result<Network, ScenarioError> {
    opts.intensities.validate()?;
    if !(opts.flex_floor > 0.0 && opts.flex_floor <= 1.0) {
        return Err(ScenarioError::Invalid(format!("bound: demand_flex_floor {} must be in (0, 1]", opts.flex_floor)));
    }

    let bus_t = Table::read(&dir.join("bus.csv"), BUS_COLUMNS)?;
    let mut buses = Vec::new();
    let mut loads = Vec::new();
    for rec in &bus_t.rows {
        let id = bus_t.str(rec, "Bus ID")?.to_string();
        let load = bus_t.f64(rec, "MW Load")?;
        if load < 0.0 {
            return Err(bus_t.err(rec.0, "MW Load", format!("negative load {load}")));
        }
        buses.push(Bus { id: id.clone(), is_reference: false });
        loads.push((id, load));
    }
    if let Some(r) = (0..buses.len()).min_by(|&a, &b| bus_order(&buses[a].id, &buses[b].id)) {
        buses[r].is_reference = true;
    }

    let br_t = Table::read(&dir.join("branch.csv"), BRANCH_COLUMNS)?;
    let mut lines = Vec::new();
    for rec in &br_t.rows {
        let x = br_t.f64(rec, "X")?;
        if x <= 0.0 {
            return Err(br_t.err(rec.0, "X", format!("reactance {x} must be positive")));
        }
        lines.push(Line {
            id: br_t.str(rec, "UID")?.to_string(),
            from_bus: br_t.str(rec, "From Bus")?.to_string(),
            to_bus: br_t.str(rec, "To Bus")?.to_string(),
            susceptance: RTS_BASE_MVA / x,
            flow_limit: br_t.f64(rec, "Cont Rating")?,
        });
    }

    let gen_t = Table::read(&dir.join("gen.csv"), GEN_COLUMNS)?;
    let mut generators = Vec::new();
    for rec in &gen_t.rows {
        let id = gen_t.str(rec, "GEN UID")?.to_string();
        let fuel = gen_t.str(rec, "Fuel")?;
        let e = opts
            .intensities
            .lookup(fuel)
            .ok_or_else(|| ScenarioError::UnknownFuel { generator: id.clone(), fuel: fuel.to_string() })?;
        let p_min = gen_t.f64(rec, "PMin MW")?;
        generators.push(Generator {
            id,
            bus: gen_t.str(rec, "Bus ID")?.to_string(),
            cost: linear_cost(&gen_t, rec, opts.cost)?,
            p_min: if opts.enforce_p_min { p_min } else { 0.0 },
            p_max: gen_t.f64(rec, "PMax MW")?,
            emission_intensity: e,
        });
    }

    let demand: Vec<(String, f64)> = loads.into_iter().filter(|(_, l)| *l > 0.0).collect();
    let utilities: Vec<f64> = match &opts.utilities {
        UtilitySpec::Constant(u) => vec![*u; demand.len()],
        UtilitySpec::Uniform { lo, hi, seed } => {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(ScenarioError::Invalid(format!("utility range [{lo}, {hi}] is empty")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            (0..demand.len()).map(|_| rng.random_range(*lo..=*hi)).collect()
        }
        UtilitySpec::File(path) => {
            let map = read_utility_file(path)?;
            demand
                .iter()
                .map(|(bus, _)| {
                    let id = format!("D{bus}");
                    map.get(&id).copied().ok_or_else(|| ScenarioError::Invalid(format!(
                        "{}: no utility for consumer `{id}`",
                        path.display()
                    )))
                })
                .collect::<Result<_, _>>()?
        }
    };
    let consumers = demand
        .iter()
        .zip(utilities)
        .map(|((bus, load), u)| Consumer {
            id: format!("D{bus}"),
            bus: bus.clone(),
            utility: u,
            p_min: opts.flex_floor * load,
            p_max: *load,
            carbon_cost: 0.0,
        })
        .collect();

    let net = Network { buses, lines, generators, consumers };
    net.ensure_valid()?;
    log::info!(
        "loaded RTS-GMLC from {}: {} buses, {} lines, {} generators, {} consumers",
        dir.display(),
        net.buses.len(),
        net.lines.len(),
        net.generators.len(),
        net.consumers.len()
    );
    Ok(net)
}
