//! Data ingestion and seeded scenario generation.
//!
//! * [`load_rts_gmlc`] reads the RTS-GMLC `bus.csv`, `branch.csv` and `gen.csv` tables.
//! * [`load_scenario_file`] / [`save_scenario_file`] handle the TOML scenario format.
//! * [`generate_carbon_costs`] draws consumer carbon costs for a subset of consumers.
//! * [`derive_seed`] splits a master seed into per-experiment seeds.

mod file;
mod rts;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ModelError;

pub use file::{load_scenario_file, parse_scenario, render_scenario, save_scenario_file, ParseMode, ScenarioFile};
pub use rts::{load_rts_gmlc, CostExtraction, RtsOptions, UtilitySpec, RTS_BASE_MVA};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{file}: {source}")]
    Io { file: PathBuf, source: std::io::Error },
    #[error("{file}, row {row}, column `{column}`: {message}")]
    Csv { file: PathBuf, row: usize, column: String, message: String },
    #[error("{file}: {message}")]
    Parse { file: String, message: String },
    #[error("unknown fuel `{fuel}` for generator {generator} (no default intensity configured)")]
    UnknownFuel { generator: String, fuel: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Emission intensity per fuel label, tons CO2/MWh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionIntensityTable {
    pub by_fuel: BTreeMap<String, f64>,
    /// Used for fuels missing from `by_fuel`; `None` makes them an error.
    pub default: Option<f64>,
}

impl EmissionIntensityTable {
    /// Natural gas, oil, coal and the zero-emission renewables, plus zero for
    /// the nuclear, storage and synchronous-condenser units present in the data.
    pub fn standard() -> Self {
        let by_fuel = [
            ("NG", 0.6042),
            ("Oil", 0.7434),
            ("Coal", 0.9606),
            ("Wind", 0.0),
            ("Solar", 0.0),
            ("Hydro", 0.0),
            ("Nuclear", 0.0),
            ("Storage", 0.0),
            ("Sync_Cond", 0.0),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        EmissionIntensityTable { by_fuel, default: None }
    }

    pub fn lookup(&self, fuel: &str) -> Option<f64> {
        self.by_fuel.get(fuel).copied().or(self.default)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        for (k, v) in self.by_fuel.iter().map(|(k, v)| (k.as_str(), *v)).chain(self.default.map(|d| ("default", d))) {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ScenarioError::Invalid(format!("emission intensity for `{k}` is {v}; must be >= 0")));
            }
        }
        Ok(())
    }
}

/// Where a scenario's network comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NetworkSource {
    Builtin3Bus,
    RtsGmlc(PathBuf),
    /// TOML scenario file.
    File(PathBuf),
    /// Network tables embedded in the scenario file itself.
    Inline,
}

impl fmt::Display for NetworkSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NetworkSource::Builtin3Bus => write!(f, "builtin:3bus"),
            NetworkSource::RtsGmlc(p) => write!(f, "rts-gmlc:{}", p.display()),
            NetworkSource::File(p) => write!(f, "file:{}", p.display()),
            NetworkSource::Inline => write!(f, "inline"),
        }
    }
}

impl FromStr for NetworkSource {
    type Err = String;

    /// Accepts `builtin:3bus`, `rts-gmlc:<dir>`, `file:<path>`, `inline`, or a bare path to a scenario file.
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "builtin:3bus" {
            Ok(NetworkSource::Builtin3Bus)
        } else if s == "inline" {
            Ok(NetworkSource::Inline)
        } else if let Some(dir) = s.strip_prefix("rts-gmlc:") {
            Ok(NetworkSource::RtsGmlc(dir.into()))
        } else if let Some(p) = s.strip_prefix("file:") {
            Ok(NetworkSource::File(p.into()))
        } else if s.starts_with("builtin:") {
            Err(format!("unknown built-in network `{s}` (available: builtin:3bus)"))
        } else if s.is_empty() {
            Err("empty network source".into())
        } else {
            Ok(NetworkSource::File(s.into()))
        }
    }
}

impl Serialize for NetworkSource {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for NetworkSource {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Experiment parameters that accompany a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub network: NetworkSource,
    /// $/ton. `None` keeps the carbon costs stored with the network.
    pub carbon_cost_range: Option<[f64; 2]>,
    /// Percent of consumers that receive a carbon cost.
    pub carbon_sensitive_fraction: f64,
    pub demand_flex_floor: f64,
    pub seed: u64,
    pub trials: usize,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            network: NetworkSource::Builtin3Bus,
            carbon_cost_range: None,
            carbon_sensitive_fraction: 100.0,
            demand_flex_floor: 0.8,
            seed: 0,
            trials: 1,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if let Some([lo, hi]) = self.carbon_cost_range {
            check_range(lo, hi)?;
        }
        check_fraction(self.carbon_sensitive_fraction)?;
        if !(self.demand_flex_floor > 0.0 && self.demand_flex_floor <= 1.0) {
            return Err(ScenarioError::Invalid(format!(
                "bound: demand_flex_floor {} must be in (0, 1]",
                self.demand_flex_floor
            )));
        }
        if self.trials == 0 {
            return Err(ScenarioError::Invalid("bound: trials must be at least 1".into()));
        }
        Ok(())
    }
}

pub fn check_range(lo: f64, hi: f64) -> Result<(), ScenarioError> {
    if lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi {
        Ok(())
    } else {
        Err(ScenarioError::Invalid(format!("bound: carbon_cost_range [{lo}, {hi}] must satisfy 0 <= lo <= hi")))
    }
}

pub fn check_fraction(fraction: f64) -> Result<(), ScenarioError> {
    if (0.0..=100.0).contains(&fraction) {
        Ok(())
    } else {
        Err(ScenarioError::Invalid(format!("bound: carbon_sensitive_fraction {fraction} must be in [0, 100]")))
    }
}

/// Carbon costs for `consumers` consumers: a seeded shuffle picks
/// `round(fraction * consumers / 100)` of them, each gets an independent
/// uniform draw from `[lo, hi]`, the rest get 0.
pub fn generate_carbon_costs(
    consumers: usize,
    range: [f64; 2],
    fraction: f64,
    seed: u64,
) -> Result<Vec<f64>, ScenarioError> {
    let [lo, hi] = range;
    check_range(lo, hi)?;
    check_fraction(fraction)?;
    let k = ((fraction * consumers as f64 / 100.0).round() as usize).min(consumers);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..consumers).collect();
    order.shuffle(&mut rng);
    let mut costs = vec![0.0; consumers];
    for &n in &order[..k] {
        costs[n] = rng.random_range(lo..=hi);
    }
    Ok(costs)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds `parts` into `master` one at a time with SplitMix64:
/// `s = splitmix64(s ^ splitmix64(part))`.
///
/// Callers pass values that identify a run (range bounds or fraction as
/// `f64::to_bits`, trial index), so adding runs never changes existing seeds.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix64(master), |s, &p| splitmix64(s ^ splitmix64(p)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_fraction_draws_every_consumer_in_range() {
        let c = generate_carbon_costs(51, [10.0, 20.0], 100.0, 3).unwrap();
        assert!(c.iter().all(|v| (10.0..=20.0).contains(v)));
    }

    #[test]
    fn zero_fraction_is_all_zero() {
        assert!(generate_carbon_costs(51, [30.0, 60.0], 0.0, 9).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn subset_size_rounds_to_nearest() {
        let c = generate_carbon_costs(51, [30.0, 60.0], 10.0, 1).unwrap();
        assert_eq!(c.iter().filter(|&&v| v > 0.0).count(), 5);
        let c = generate_carbon_costs(51, [30.0, 60.0], 30.0, 1).unwrap();
        assert_eq!(c.iter().filter(|&&v| v > 0.0).count(), 15);
    }

    #[test]
    fn seeded_determinism() {
        let runs: Vec<Vec<f64>> = (0..5).map(|s| generate_carbon_costs(51, [10.0, 40.0], 50.0, s).unwrap()).collect();
        for (s, r) in runs.iter().enumerate() {
            assert_eq!(r, &generate_carbon_costs(51, [10.0, 40.0], 50.0, s as u64).unwrap());
            for other in &runs[s + 1..] {
                assert_ne!(r, other);
            }
        }
    }

    #[test]
    fn rejects_bad_range_and_fraction() {
        assert!(generate_carbon_costs(3, [20.0, 10.0], 50.0, 0).is_err());
        assert!(generate_carbon_costs(3, [-1.0, 10.0], 50.0, 0).is_err());
        assert!(generate_carbon_costs(3, [1.0, 10.0], 101.0, 0).is_err());
    }

    #[test]
    fn seed_derivation_is_order_sensitive_and_stable() {
        assert_eq!(derive_seed(1, &[2, 3]), derive_seed(1, &[2, 3]));
        assert_ne!(derive_seed(1, &[2, 3]), derive_seed(1, &[3, 2]));
        assert_ne!(derive_seed(1, &[2]), derive_seed(2, &[2]));
    }

    #[test]
    fn network_source_strings() {
        for s in ["builtin:3bus", "rts-gmlc:data/rts-gmlc", "file:x.toml", "inline"] {
            assert_eq!(s.parse::<NetworkSource>().unwrap().to_string(), s);
        }
        assert_eq!("a.toml".parse::<NetworkSource>().unwrap(), NetworkSource::File("a.toml".into()));
        assert!("builtin:9bus".parse::<NetworkSource>().is_err());
    }
}
