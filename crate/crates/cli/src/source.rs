use std::path::Path;

use carbon_market::model::{builtin_three_bus, Network};
use carbon_market::scenario::{load_rts_gmlc, load_scenario_file, NetworkSource, ParseMode, RtsOptions, ScenarioSpec};

use crate::error::CliError;

/// A network plus the experiment parameters that came with it.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub network: Network,
    pub spec: ScenarioSpec,
}

/// Loads a network from a `--network` source string. Scenario files carry their own spec;
/// every other source gets the default spec.
pub fn resolve_network(source: &str, mode: ParseMode) -> Result<Resolved, CliError> {
    let parsed: NetworkSource = source.parse().map_err(|e: String| CliError::Input(format!("--network: {e}")))?;
    let spec = ScenarioSpec { network: parsed.clone(), ..ScenarioSpec::default() };
    match &parsed {
        NetworkSource::Builtin3Bus => Ok(Resolved { network: builtin_three_bus(None)?, spec }),
        NetworkSource::RtsGmlc(dir) => Ok(Resolved { network: load_rts_gmlc(dir, &RtsOptions::default())?, spec }),
        NetworkSource::File(p) => resolve_scenario(p, mode),
        NetworkSource::Inline => Err(CliError::Input("--network: `inline` is only valid inside a scenario file".into())),
    }
}

pub fn resolve_scenario(path: &Path, mode: ParseMode) -> Result<Resolved, CliError> {
    let f = load_scenario_file(path, mode)?;
    Ok(Resolved { network: f.network, spec: f.spec })
}
