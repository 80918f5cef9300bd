//! Scenario files shipped with the crate.

use crate::error::{Error, Result};

use super::config::ScenarioConfig;
use super::montecarlo::MonteCarloSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BundledKind {
    Scenario,
    MonteCarlo,
}

#[derive(Clone, Copy, Debug)]
pub struct Bundled {
    pub name: &'static str,
    pub summary: &'static str,
    pub kind: BundledKind,
    pub text: &'static str,
}

macro_rules! bundled {
    ($name:literal, $kind:ident, $summary:literal) => {
        Bundled {
            name: $name,
            summary: $summary,
            kind: BundledKind::$kind,
            text: include_str!(concat!("../../scenarios/", $name, ".toml")),
        }
    };
}

pub const BUNDLED: &[Bundled] = &[
    bundled!("hover", Scenario, "10 s hover in still air"),
    bundled!("circle", Scenario, "micro quadrotor on a 1.5 m circle at 2.5 m/s"),
    bundled!("calibration", Scenario, "still-air figure eight with a speed sweep, for drag fitting"),
    bundled!("constant_wind", Scenario, "hover in 2 m/s constant wind with the wind estimator"),
    bundled!("dryden_wind", Scenario, "hover in 3 m/s Dryden turbulence with the wind estimator"),
    bundled!("saturation", Scenario, "low thrust margin in gusty wind; motors saturate"),
    bundled!("wind_study", MonteCarlo, "50 randomized vehicles, calibrate then estimate wind"),
];

pub fn find(name: &str) -> Option<&'static Bundled> {
    BUNDLED.iter().find(|b| b.name == name)
}

pub fn scenario(name: &str) -> Result<ScenarioConfig> {
    match find(name) {
        Some(b) if b.kind == BundledKind::Scenario => ScenarioConfig::from_toml(b.text),
        _ => Err(Error::Config(format!("no bundled scenario named `{name}`"))),
    }
}

pub fn monte_carlo_spec(name: &str) -> Result<MonteCarloSpec> {
    match find(name) {
        Some(b) if b.kind == BundledKind::MonteCarlo => MonteCarloSpec::from_toml(b.text),
        _ => Err(Error::Config(format!("no bundled Monte Carlo study named `{name}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_bundled_file_parses() {
        for b in BUNDLED {
            match b.kind {
                BundledKind::Scenario => {
                    let cfg = scenario(b.name).unwrap();
                    assert_eq!(cfg.name, b.name);
                }
                BundledKind::MonteCarlo => {
                    let spec = monte_carlo_spec(b.name).unwrap();
                    assert_eq!(spec.name, b.name);
                }
            }
        }
    }
}
