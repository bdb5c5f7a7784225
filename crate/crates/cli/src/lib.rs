//! Command-line front end and experiment harness for the `carbon-market` crate.

pub mod error;
pub mod harness;
pub mod report;
pub mod solve;
pub mod source;
pub mod stats;

use std::str::FromStr;

use carbon_market::model::ClearingModelKind;

/// Version of the result, manifest and report file layouts.
pub const RESULT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(format!("unknown format `{s}` (expected csv or json)")),
        }
    }
}

/// Accepts the model names used on the command line, with `fixed` and `flexible` as short forms.
pub fn parse_model(s: &str) -> Result<ClearingModelKind, String> {
    match s {
        "carbon-cost" => Ok(ClearingModelKind::CarbonCost),
        "fixed" | "fixed-demand" => Ok(ClearingModelKind::FixedDemand),
        "flexible" | "flexible-demand" => Ok(ClearingModelKind::FlexibleDemand),
        "carbon-flow" => Ok(ClearingModelKind::CarbonFlow),
        _ => Err(format!("unknown model `{s}` (expected carbon-cost, fixed, flexible or carbon-flow)")),
    }
}

/// Parses `lo:hi` or `lo,hi`.
pub fn parse_range(s: &str) -> Result<[f64; 2], String> {
    let (lo, hi) = s
        .trim_matches(|c| c == '[' || c == ']')
        .split_once([':', ','])
        .ok_or_else(|| format!("range `{s}` must look like lo:hi"))?;
    let p = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("range `{s}`: {e}"));
    Ok([p(lo)?, p(hi)?])
}
