//! Scenario configuration files.
//!
//! A config is a JSON object `{scenario, parameters, output}`. Every table is
//! strict: unknown keys are rejected and missing keys take the documented
//! defaults. Parse errors carry the line of the offending token in the file.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::error::LabError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    WeakValue,
    Protect,
    DisturbanceScan,
    Tomography,
    AdiabaticSingle,
    Kaon,
    Spectrum,
}

impl Scenario {
    pub const ALL: [Scenario; 7] = [
        Scenario::WeakValue,
        Scenario::Protect,
        Scenario::DisturbanceScan,
        Scenario::Tomography,
        Scenario::AdiabaticSingle,
        Scenario::Kaon,
        Scenario::Spectrum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::WeakValue => "weak-value",
            Scenario::Protect => "protect",
            Scenario::DisturbanceScan => "disturbance-scan",
            Scenario::Tomography => "tomography",
            Scenario::AdiabaticSingle => "adiabatic-single",
            Scenario::Kaon => "kaon",
            Scenario::Spectrum => "spectrum",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    /// Destination file; standard output when absent.
    pub path: Option<PathBuf>,
    pub format: Format,
}

pub type Vec3 = [f64; 3];
/// A complex number as `[re, im]`.
pub type Complex = [f64; 2];

const X: Vec3 = [1.0, 0.0, 0.0];
const Y: Vec3 = [0.0, 1.0, 0.0];
const Z: Vec3 = [0.0, 0.0, 1.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeakValueParams {
    pub spin: f64,
    pub pre: Vec3,
    pub post: Vec3,
    /// Extra spin component whose weak value is reported.
    pub direction: Option<Vec3>,
}

impl Default for WeakValueParams {
    fn default() -> Self {
        Self { spin: 0.5, pre: X, post: Y, direction: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtectParams {
    pub lambda: f64,
    pub spins: Vec<f64>,
    pub pre: Vec3,
    pub post: Vec3,
    pub meas_dirs: Vec<Vec3>,
    pub p_max: f64,
    pub samples: usize,
    pub duration: f64,
    pub ramp_fraction: f64,
    pub steps: usize,
}

impl Default for ProtectParams {
    fn default() -> Self {
        Self {
            lambda: 2.0,
            spins: vec![20.0],
            pre: X,
            post: Y,
            meas_dirs: vec![X, Y, Z],
            p_max: 1.0,
            samples: 33,
            duration: 1.0,
            ramp_fraction: 0.1,
            steps: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DisturbanceParams {
    pub lambda: f64,
    pub spins: Vec<f64>,
    pub pre: Vec3,
    pub post: Vec3,
    pub meas_dir: Vec3,
    /// Bloch direction of the initial system state.
    pub initial: Vec3,
    /// Bloch direction of the intermediate outcome whose probability is reported.
    pub flagged: Vec3,
    pub p: f64,
    pub p_max: f64,
    pub duration: f64,
    pub time_samples: usize,
}

impl Default for DisturbanceParams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            spins: vec![4.0, 8.0, 16.0, 32.0],
            pre: X,
            post: Y,
            meas_dir: X,
            initial: [0.0, -1.0, 0.0],
            flagged: Y,
            p: 0.0,
            p_max: 1.0,
            duration: 1.0,
            time_samples: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TomographyParams {
    pub lambda: f64,
    pub spin: f64,
    pub pre: Vec3,
    pub post: Vec3,
    pub p_max: f64,
    pub samples: usize,
    pub duration: f64,
    /// Steps per measured component.
    pub steps: usize,
}

impl Default for TomographyParams {
    fn default() -> Self {
        Self { lambda: 5.0, spin: 25.0, pre: X, post: Y, p_max: 0.5, samples: 5, duration: 1.0, steps: 60 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    #[default]
    Ground,
    Excited,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdiabaticParams {
    /// Qubit Hamiltonian `(splitting/2) n̂·σ`.
    pub field: Vec3,
    pub splitting: f64,
    pub level: Level,
    /// Measured observable `m̂·σ`.
    pub observable: Vec3,
    pub durations: Vec<f64>,
    pub p_max: f64,
    pub samples: usize,
    pub ramp_fraction: f64,
    pub steps: usize,
}

impl Default for AdiabaticParams {
    fn default() -> Self {
        Self {
            field: Z,
            splitting: 10.0,
            level: Level::Ground,
            observable: [1.0, 0.0, 1.0],
            durations: vec![25.0, 50.0, 100.0],
            p_max: 1.0,
            samples: 33,
            ramp_fraction: 0.1,
            steps: 400,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KaonConfig {
    pub m_l: f64,
    pub m_s: f64,
    pub gamma_l: f64,
    pub gamma_s: f64,
    pub epsilon: Complex,
    /// Initial amplitudes on `(|K⁰⟩, |K̄⁰⟩)`.
    pub initial: [Complex; 2],
    pub times: Vec<f64>,
    /// Random parameter draws for the overlap-relation sweep.
    pub draws: usize,
    pub seed: u64,
}

impl Default for KaonConfig {
    fn default() -> Self {
        let d = tsv_core::kaon::KaonParams::default();
        Self {
            m_l: d.m_l,
            m_s: d.m_s,
            gamma_l: d.gamma_l,
            gamma_s: d.gamma_s,
            epsilon: [d.epsilon.re, d.epsilon.im],
            initial: [[1.0, 0.0], [0.0, 0.0]],
            times: vec![0.0, 1.0, 2.0, 5.0, 10.0],
            draws: 1000,
            seed: 42,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumParams {
    pub lambda: f64,
    pub spins: Vec<f64>,
    pub pre: Vec3,
    pub post: Vec3,
    /// Include the two-level effective Hamiltonian of the post-selected device.
    pub effective: bool,
    /// Strength `p/T` of the measurement term added to the effective Hamiltonian.
    pub p_over_t: f64,
    pub meas_dir: Vec3,
}

impl Default for SpectrumParams {
    fn default() -> Self {
        Self { lambda: 1.0, spins: vec![0.5, 1.0, 2.0], pre: X, post: Y, effective: true, p_over_t: 0.0, meas_dir: X }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Parameters {
    WeakValue(WeakValueParams),
    Protect(ProtectParams),
    DisturbanceScan(DisturbanceParams),
    Tomography(TomographyParams),
    AdiabaticSingle(AdiabaticParams),
    Kaon(KaonConfig),
    Spectrum(SpectrumParams),
}

impl Parameters {
    pub fn defaults(scenario: Scenario) -> Self {
        match scenario {
            Scenario::WeakValue => Parameters::WeakValue(Default::default()),
            Scenario::Protect => Parameters::Protect(Default::default()),
            Scenario::DisturbanceScan => Parameters::DisturbanceScan(Default::default()),
            Scenario::Tomography => Parameters::Tomography(Default::default()),
            Scenario::AdiabaticSingle => Parameters::AdiabaticSingle(Default::default()),
            Scenario::Kaon => Parameters::Kaon(Default::default()),
            Scenario::Spectrum => Parameters::Spectrum(Default::default()),
        }
    }

    fn from_json(scenario: Scenario, text: &str) -> serde_json::Result<Self> {
        Ok(match scenario {
            Scenario::WeakValue => Parameters::WeakValue(serde_json::from_str(text)?),
            Scenario::Protect => Parameters::Protect(serde_json::from_str(text)?),
            Scenario::DisturbanceScan => Parameters::DisturbanceScan(serde_json::from_str(text)?),
            Scenario::Tomography => Parameters::Tomography(serde_json::from_str(text)?),
            Scenario::AdiabaticSingle => Parameters::AdiabaticSingle(serde_json::from_str(text)?),
            Scenario::Kaon => Parameters::Kaon(serde_json::from_str(text)?),
            Scenario::Spectrum => Parameters::Spectrum(serde_json::from_str(text)?),
        })
    }
}

/// A fully resolved scenario configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub parameters: Parameters,
    pub output: OutputSpec,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig<'a> {
    #[serde(default)]
    scenario: Option<Scenario>,
    #[serde(borrow, default)]
    parameters: Option<&'a RawValue>,
    #[serde(default)]
    output: OutputSpec,
}

/// Maps parameter names back to lines of the source text.
#[derive(Clone, Debug, Default)]
pub struct SourceMap {
    text: String,
    params_offset: Option<usize>,
}

impl SourceMap {
    /// Line of the first `"key"` inside the parameters table, if present.
    pub fn line_of(&self, key: &str) -> Option<usize> {
        let start = self.params_offset?;
        let needle = format!("\"{key}\"");
        let pos = start + self.text[start..].find(&needle)?;
        Some(line_at(&self.text, pos))
    }
}

fn line_at(text: &str, offset: usize) -> usize {
    text[..offset].matches('\n').count() + 1
}

impl ScenarioConfig {
    pub fn defaults(scenario: Scenario) -> Self {
        Self { scenario, parameters: Parameters::defaults(scenario), output: OutputSpec::default() }
    }

    /// Parse a config for the scenario named on the command line. A
    /// `scenario` key in the file, when present, must agree with it.
    pub fn parse(text: &str, expected: Scenario) -> Result<(Self, SourceMap), LabError> {
        let raw: RawConfig = serde_json::from_str(text).map_err(|e| LabError::Config { line: Some(e.line()), message: e.to_string() })?;
        if let Some(s) = raw.scenario {
            if s != expected {
                return Err(LabError::Config {
                    line: find_line(text, "\"scenario\""),
                    message: format!("config is for scenario `{s}` but `{expected}` was requested"),
                });
            }
        }
        let mut map = SourceMap { text: text.to_owned(), params_offset: None };
        let parameters = match raw.parameters {
            None => Parameters::defaults(expected),
            Some(params) => {
                let offset = params.get().as_ptr() as usize - text.as_ptr() as usize;
                map.params_offset = Some(offset);
                Parameters::from_json(expected, params.get()).map_err(|e| LabError::Config {
                    line: Some(line_at(text, offset) + e.line() - 1),
                    message: strip_position(&e),
                })?
            }
        };
        Ok((Self { scenario: expected, parameters, output: raw.output }, map))
    }
}

fn find_line(text: &str, needle: &str) -> Option<usize> {
    text.find(needle).map(|pos| line_at(text, pos))
}

/// serde_json appends "at line L column C" relative to the parsed slice.
fn strip_position(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_owned(),
        None => msg,
    }
}
