//! Electricity market clearing with consumer carbon costs.
//!
//! The crate contains a self-contained LP solver ([`lp`]), the network and
//! solution types ([`model`]), the LP clearing formulations ([`clearing`]),
//! the carbon-flow benchmark ([`carbonflow`]), data loading and scenario
//! generation ([`scenario`]) and evaluation metrics ([`metrics`]).

pub mod carbonflow;
pub mod clearing;
pub mod linalg;
pub mod lp;
pub mod metrics;
pub mod model;
pub mod scenario;
