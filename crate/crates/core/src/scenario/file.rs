//! TOML scenario files.
//!
//! A file holds a mandatory `version`, a `[scenario]` table and optionally the
//! network itself as `[[bus]]`, `[[line]]`, `[[generator]]` and `[[consumer]]`
//! arrays. Field names carry their units. When the network arrays are present
//! they define the network and `scenario.network` only records where it came
//! from; otherwise the network is loaded from `scenario.network`. An `[rts]`
//! table configures the RTS-GMLC loader.
//!
//! See `data/scenarios/three_bus.toml` for a complete example.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::rts::{load_rts_gmlc, CostExtraction, RtsOptions, UtilitySpec};
use super::{NetworkSource, ScenarioError, ScenarioSpec};
use crate::model::{builtin_three_bus, validate_network, Bus, Consumer, Generator, Line, Network, ViolationCode};

pub const SCENARIO_VERSION: u32 = 1;

/// Unknown keys are errors in strict mode and warnings in lenient mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseMode {
    Strict,
    Lenient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFile {
    pub network: Network,
    pub spec: ScenarioSpec,
    /// Ignored keys (lenient mode only).
    pub warnings: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawFile {
    version: Option<u32>,
    scenario: RawSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rts: Option<RawRts>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    bus: Vec<RawBus>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    line: Vec<RawLine>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    generator: Vec<RawGenerator>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    consumer: Vec<RawConsumer>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawSpec {
    network: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    carbon_cost_range_usd_per_t: Option<[f64; 2]>,
    #[serde(default = "default_fraction")]
    carbon_sensitive_fraction_pct: f64,
    #[serde(default = "default_floor")]
    demand_flex_floor: f64,
    #[serde(default, with = "seed_repr")]
    seed: u64,
    #[serde(default = "default_trials")]
    trials: usize,
}

/// TOML integers are signed 64-bit, so seeds above `i64::MAX` are written as decimal strings.
mod seed_repr {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(seed: &u64, s: S) -> Result<S::Ok, S::Error> {
        match i64::try_from(*seed) {
            Ok(v) => s.serialize_i64(v),
            Err(_) => s.serialize_str(&seed.to_string()),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Int(i64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Int(v) => u64::try_from(v).map_err(|_| de::Error::custom(format!("seed {v} is negative"))),
            Repr::Str(s) => s.parse().map_err(|_| de::Error::custom(format!("seed `{s}` is not a 64-bit unsigned integer"))),
        }
    }
}

fn default_fraction() -> f64 {
    100.0
}
fn default_floor() -> f64 {
    0.8
}
fn default_trials() -> usize {
    1
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct RawRts {
    utility_constant_usd_per_mwh: Option<f64>,
    utility_range_usd_per_mwh: Option<[f64; 2]>,
    utility_seed: Option<u64>,
    utility_file: Option<PathBuf>,
    /// "average-incremental" or "full-load-average"
    cost_extraction: Option<String>,
    enforce_p_min: Option<bool>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawBus {
    id: String,
    #[serde(default)]
    is_reference: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawLine {
    id: String,
    from_bus: String,
    to_bus: String,
    susceptance_mw_per_rad: f64,
    flow_limit_mw: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawGenerator {
    id: String,
    bus: String,
    cost_usd_per_mwh: f64,
    #[serde(default)]
    p_min_mw: f64,
    p_max_mw: f64,
    emission_intensity_t_per_mwh: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawConsumer {
    id: String,
    bus: String,
    utility_usd_per_mwh: f64,
    p_min_mw: f64,
    p_max_mw: f64,
    #[serde(default)]
    carbon_cost_usd_per_t: f64,
}

fn field_of(code: ViolationCode) -> Option<&'static str> {
    Some(match code {
        ViolationCode::NegativeLimit => "flow_limit",
        ViolationCode::BoundOrder => "p_min <= p_max",
        ViolationCode::NegativeBound => "p_min",
        ViolationCode::NegativeCost => "cost",
        ViolationCode::NegativeIntensity => "emission_intensity",
        ViolationCode::NegativeCarbonCost => "carbon_cost",
        _ => return None,
    })
}

fn rts_options(raw: &RawRts, base: &Path, floor: f64, file: &str) -> Result<RtsOptions, ScenarioError> {
    let err = |m: String| ScenarioError::Parse { file: file.to_string(), message: m };
    let mut opts = RtsOptions { flex_floor: floor, ..Default::default() };
    let given = [raw.utility_constant_usd_per_mwh.is_some(), raw.utility_range_usd_per_mwh.is_some(), raw.utility_file.is_some()];
    if given.iter().filter(|&&g| g).count() > 1 {
        return Err(err("rts: set at most one of utility_constant_usd_per_mwh, utility_range_usd_per_mwh, utility_file".into()));
    }
    if let Some(u) = raw.utility_constant_usd_per_mwh {
        opts.utilities = UtilitySpec::Constant(u);
    }
    if let Some([lo, hi]) = raw.utility_range_usd_per_mwh {
        let seed = raw.utility_seed.unwrap_or(RtsOptions::DEFAULT_UTILITY_SEED);
        opts.utilities = UtilitySpec::Uniform { lo, hi, seed };
    } else if let (Some(seed), UtilitySpec::Uniform { lo, hi, .. }) = (raw.utility_seed, &opts.utilities) {
        opts.utilities = UtilitySpec::Uniform { lo: *lo, hi: *hi, seed };
    }
    if let Some(p) = &raw.utility_file {
        opts.utilities = UtilitySpec::File(base.join(p));
    }
    match raw.cost_extraction.as_deref() {
        None | Some("average-incremental") => {}
        Some("full-load-average") => opts.cost = CostExtraction::FullLoadAverage,
        Some(other) => return Err(err(format!("rts.cost_extraction: unknown value `{other}`"))),
    }
    if let Some(b) = raw.enforce_p_min {
        opts.enforce_p_min = b;
    }
    Ok(opts)
}

/// Parses scenario text. `file` names the source in messages; `base` resolves relative paths.
pub fn parse_scenario(text: &str, file: &str, base: &Path, mode: ParseMode) -> Result<ScenarioFile, ScenarioError> {
    let perr = |message: String| ScenarioError::Parse { file: file.to_string(), message };
    let mut ignored = Vec::new();
    let de = toml::Deserializer::new(text);
    let raw: RawFile = serde_ignored::deserialize(de, |path| ignored.push(path.to_string()))
        .map_err(|e| perr(e.to_string().trim_end().to_string()))?;
    if mode == ParseMode::Strict && !ignored.is_empty() {
        return Err(perr(format!("unknown field `{}`", ignored.join("`, `"))));
    }
    let warnings: Vec<String> = ignored.iter().map(|p| format!("{file}: ignoring unknown field `{p}`")).collect();
    for w in &warnings {
        log::warn!("{w}");
    }
    match raw.version {
        None => return Err(perr("missing mandatory field `version`".into())),
        Some(SCENARIO_VERSION) => {}
        Some(v) => return Err(perr(format!("unsupported scenario version {v} (supported: {SCENARIO_VERSION})"))),
    }

    let s = &raw.scenario;
    let spec = ScenarioSpec {
        network: s.network.parse().map_err(|e| perr(format!("scenario.network: {e}")))?,
        carbon_cost_range: s.carbon_cost_range_usd_per_t,
        carbon_sensitive_fraction: s.carbon_sensitive_fraction_pct,
        demand_flex_floor: s.demand_flex_floor,
        seed: s.seed,
        trials: s.trials,
    };
    spec.validate().map_err(|e| perr(format!("scenario: {e}")))?;

    let inline = !(raw.bus.is_empty() && raw.line.is_empty() && raw.generator.is_empty() && raw.consumer.is_empty());
    let network = if inline {
        Network {
            buses: raw.bus.into_iter().map(|b| Bus { id: b.id, is_reference: b.is_reference }).collect(),
            lines: raw
                .line
                .into_iter()
                .map(|l| Line {
                    id: l.id,
                    from_bus: l.from_bus,
                    to_bus: l.to_bus,
                    susceptance: l.susceptance_mw_per_rad,
                    flow_limit: l.flow_limit_mw,
                })
                .collect(),
            generators: raw
                .generator
                .into_iter()
                .map(|g| Generator {
                    id: g.id,
                    bus: g.bus,
                    cost: g.cost_usd_per_mwh,
                    p_min: g.p_min_mw,
                    p_max: g.p_max_mw,
                    emission_intensity: g.emission_intensity_t_per_mwh,
                })
                .collect(),
            consumers: raw
                .consumer
                .into_iter()
                .map(|c| Consumer {
                    id: c.id,
                    bus: c.bus,
                    utility: c.utility_usd_per_mwh,
                    p_min: c.p_min_mw,
                    p_max: c.p_max_mw,
                    carbon_cost: c.carbon_cost_usd_per_t,
                })
                .collect(),
        }
    } else {
        match &spec.network {
            NetworkSource::Builtin3Bus => builtin_three_bus(None)?,
            NetworkSource::RtsGmlc(dir) => {
                let opts = rts_options(raw.rts.as_ref().unwrap_or(&RawRts::default()), base, spec.demand_flex_floor, file)?;
                load_rts_gmlc(&base.join(dir), &opts)?
            }
            NetworkSource::File(p) => return Ok(load_scenario_file(&base.join(p), mode)?),
            NetworkSource::Inline => return Err(perr("scenario.network is `inline` but no [[bus]] entries are given".into())),
        }
    };

    let violations = validate_network(&network);
    if let Some(v) = violations.first() {
        let msg = match field_of(v.code) {
            Some(field) => format!("bound: {field} ({}): {}", v.subject, v.detail),
            None => v.to_string(),
        };
        let more = if violations.len() > 1 { format!(" (and {} more)", violations.len() - 1) } else { String::new() };
        return Err(perr(format!("{msg}{more}")));
    }
    Ok(ScenarioFile { network, spec, warnings })
}

pub fn load_scenario_file(path: &Path, mode: ParseMode) -> Result<ScenarioFile, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io { file: path.to_path_buf(), source: e })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_scenario(&text, &path.display().to_string(), base, mode)
}

/// Serializes `net` (always inline) and `spec` to scenario text.
pub fn render_scenario(net: &Network, spec: &ScenarioSpec) -> String {
    let raw = RawFile {
        version: Some(SCENARIO_VERSION),
        scenario: RawSpec {
            network: spec.network.to_string(),
            carbon_cost_range_usd_per_t: spec.carbon_cost_range,
            carbon_sensitive_fraction_pct: spec.carbon_sensitive_fraction,
            demand_flex_floor: spec.demand_flex_floor,
            seed: spec.seed,
            trials: spec.trials,
        },
        rts: None,
        bus: net.buses.iter().map(|b| RawBus { id: b.id.clone(), is_reference: b.is_reference }).collect(),
        line: net
            .lines
            .iter()
            .map(|l| RawLine {
                id: l.id.clone(),
                from_bus: l.from_bus.clone(),
                to_bus: l.to_bus.clone(),
                susceptance_mw_per_rad: l.susceptance,
                flow_limit_mw: l.flow_limit,
            })
            .collect(),
        generator: net
            .generators
            .iter()
            .map(|g| RawGenerator {
                id: g.id.clone(),
                bus: g.bus.clone(),
                cost_usd_per_mwh: g.cost,
                p_min_mw: g.p_min,
                p_max_mw: g.p_max,
                emission_intensity_t_per_mwh: g.emission_intensity,
            })
            .collect(),
        consumer: net
            .consumers
            .iter()
            .map(|c| RawConsumer {
                id: c.id.clone(),
                bus: c.bus.clone(),
                utility_usd_per_mwh: c.utility,
                p_min_mw: c.p_min,
                p_max_mw: c.p_max,
                carbon_cost_usd_per_t: c.carbon_cost,
            })
            .collect(),
    };
    toml::to_string(&raw).expect("scenario types serialize")
}

pub fn save_scenario_file(path: &Path, net: &Network, spec: &ScenarioSpec) -> Result<(), ScenarioError> {
    std::fs::write(path, render_scenario(net, spec)).map_err(|e| ScenarioError::Io { file: path.to_path_buf(), source: e })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, mode: ParseMode) -> Result<ScenarioFile, ScenarioError> {
        parse_scenario(text, "test.toml", Path::new("."), mode)
    }

    #[test]
    fn round_trip_three_bus() {
        let net = builtin_three_bus(None).unwrap().with_carbon_costs(&[5.0, 0.1 + 0.2, 1e-7]);
        let spec = ScenarioSpec { carbon_cost_range: Some([10.0, 40.0]), seed: u64::MAX, trials: 5, ..Default::default() };
        let text = render_scenario(&net, &spec);
        let back = parse(&text, ParseMode::Strict).unwrap();
        assert_eq!(back.network, net);
        assert_eq!(back.spec, spec);
        assert!(back.warnings.is_empty());
    }

    #[test]
    fn negative_flow_limit_is_a_bound_error() {
        let mut net = builtin_three_bus(None).unwrap();
        net.lines[0].flow_limit = -1.0;
        let text = render_scenario(&net, &ScenarioSpec::default());
        let msg = parse(&text, ParseMode::Strict).unwrap_err().to_string();
        assert!(msg.contains("bound: flow_limit"), "{msg}");
        assert!(msg.contains("L1-2"), "{msg}");
    }

    #[test]
    fn unknown_field_strict_vs_lenient() {
        let text = "version = 1\n[scenario]\nnetwork = \"builtin:3bus\"\ncolour = \"blue\"\n";
        let msg = parse(text, ParseMode::Strict).unwrap_err().to_string();
        assert!(msg.contains("unknown field `scenario.colour`"), "{msg}");
        let ok = parse(text, ParseMode::Lenient).unwrap();
        assert_eq!(ok.warnings.len(), 1);
        assert_eq!(ok.network.buses.len(), 3);
    }

    #[test]
    fn version_is_mandatory_and_checked() {
        let msg = parse("[scenario]\nnetwork = \"builtin:3bus\"\n", ParseMode::Strict).unwrap_err().to_string();
        assert!(msg.contains("version"), "{msg}");
        let msg = parse("version = 7\n[scenario]\nnetwork = \"builtin:3bus\"\n", ParseMode::Strict).unwrap_err().to_string();
        assert!(msg.contains("unsupported scenario version 7"), "{msg}");
    }

    #[test]
    fn type_errors_name_location() {
        let text = "version = 1\n[scenario]\nnetwork = \"builtin:3bus\"\nseed = \"x\"\n";
        let msg = parse(text, ParseMode::Strict).unwrap_err().to_string();
        assert!(msg.contains("line 4") || msg.contains("seed"), "{msg}");
    }

    #[test]
    fn spec_bounds_checked() {
        let text = "version = 1\n[scenario]\nnetwork = \"builtin:3bus\"\ncarbon_cost_range_usd_per_t = [40.0, 10.0]\n";
        assert!(parse(text, ParseMode::Strict).unwrap_err().to_string().contains("carbon_cost_range"));
    }

    #[test]
    fn example_file_parses() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/scenarios/three_bus.toml");
        let f = load_scenario_file(&path, ParseMode::Strict).unwrap();
        let mut want = builtin_three_bus(None).unwrap();
        want.consumers[0].carbon_cost = 5.0;
        want.consumers[1].carbon_cost = 10.0;
        want.consumers[2].carbon_cost = 20.0;
        assert_eq!(f.network, want);
    }
}
