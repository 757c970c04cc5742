//! Scenario files bundled with the binary.

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};

macro_rules! preset {
    ($name:literal) => {
        ($name, include_str!(concat!("../presets/", $name, ".json")))
    };
}

pub const PRESETS: &[(&str, &str)] = &[
    preset!("pure-noise-srd"),
    preset!("aggregate-elimination"),
    preset!("explearn-coexistence"),
    preset!("stratonovich-identity"),
    preset!("thm31-extinction"),
    preset!("thm33-strict-stability"),
    preset!("remark35-non-nash"),
    preset!("thm41-quadratic"),
    preset!("thm42-second-order-nash"),
    preset!("lemmaA2-hitting"),
    preset!("bimatrix-shocks"),
    preset!("random-mutations"),
    preset!("two-population-srd"),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|p| p.0)
}

pub fn preset(name: &str) -> Result<ScenarioConfig> {
    let (_, text) = PRESETS
        .iter()
        .find(|p| p.0 == name)
        .ok_or_else(|| Error::Validation(format!("no preset named `{name}`")))?;
    ScenarioConfig::from_json(text)
}
