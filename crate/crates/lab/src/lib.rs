//! Scenario runner for protective measurements of two-state vectors.
//!
//! A scenario is picked by name, configured from an optional JSON file plus
//! command-line overrides, validated in full, executed, and rendered as CSV
//! or JSON with the resolved config echoed in the header.

pub mod config;
pub mod error;
pub mod scenarios;
pub mod table;

use std::path::PathBuf;

pub use config::{Format, Parameters, Scenario, ScenarioConfig, SourceMap};
pub use error::{LabError, Result};
pub use table::{Cell, Report, Table};

use scenarios::Check;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Command-line settings that take precedence over the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
    pub seed: Option<u64>,
    pub steps: Option<usize>,
}

/// Parse the config (or take defaults) and apply overrides.
pub fn resolve(scenario: Scenario, config_text: Option<&str>, overrides: &Overrides) -> Result<(ScenarioConfig, SourceMap)> {
    let (mut cfg, map) = match config_text {
        Some(text) => ScenarioConfig::parse(text, scenario)?,
        None => (ScenarioConfig::defaults(scenario), SourceMap::default()),
    };
    if let Some(path) = &overrides.output {
        cfg.output.path = Some(path.clone());
    }
    if let Some(format) = overrides.format {
        cfg.output.format = format;
    }
    if let Some(steps) = overrides.steps {
        if steps == 0 {
            return Err(LabError::Usage("--steps must be positive".into()));
        }
        match &mut cfg.parameters {
            Parameters::Protect(p) => p.steps = steps,
            Parameters::Tomography(p) => p.steps = steps,
            Parameters::AdiabaticSingle(p) => p.steps = steps,
            _ => return Err(LabError::Usage(format!("--steps does not apply to scenario `{scenario}`"))),
        }
    }
    if let Some(seed) = overrides.seed {
        match &mut cfg.parameters {
            Parameters::Kaon(p) => p.seed = seed,
            _ => return Err(LabError::Usage(format!("scenario `{scenario}` draws no random numbers; --seed does not apply"))),
        }
    }
    Ok((cfg, map))
}

/// Validate and run a resolved scenario.
pub fn execute(cfg: &ScenarioConfig, map: &SourceMap) -> Result<Report> {
    let c = Check::new(map);
    match &cfg.parameters {
        Parameters::WeakValue(p) => scenarios::weak_value_scenario(p, &c),
        Parameters::Protect(p) => scenarios::protect_scenario(p, &c),
        Parameters::DisturbanceScan(p) => scenarios::disturbance_scenario(p, &c),
        Parameters::Tomography(p) => scenarios::tomography_scenario(p, &c),
        Parameters::AdiabaticSingle(p) => scenarios::adiabatic_scenario(p, &c),
        Parameters::Kaon(p) => scenarios::kaon_scenario(p, &c),
        Parameters::Spectrum(p) => scenarios::spectrum_scenario(p, &c),
    }
}

/// Render a report in the configured format.
pub fn render(cfg: &ScenarioConfig, report: &Report) -> Result<String> {
    let echo = serde_json::to_value(cfg).map_err(|e| LabError::Output(e.to_string()))?;
    match cfg.output.format {
        Format::Csv => report.to_csv(VERSION, &echo),
        Format::Json => report.to_json(VERSION, &echo),
    }
}

/// Rendered output and where it should go.
#[derive(Clone, Debug)]
pub struct Output {
    pub text: String,
    pub path: Option<PathBuf>,
}

pub fn run(scenario: Scenario, config_text: Option<&str>, overrides: &Overrides) -> Result<Output> {
    let (cfg, map) = resolve(scenario, config_text, overrides)?;
    let report = execute(&cfg, &map)?;
    Ok(Output { text: render(&cfg, &report)?, path: cfg.output.path.clone() })
}
