//! Scenario configuration: strict JSON, embedded presets, and conversion into
//! library objects.

use nullctl::weights::{SigmaFamily, SigmaSpec, ValidationMode};
use nullctl::{Interval, MemoryKernel, SpaceTimeGrid, WeightParams};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Forward,
    Control,
    Memory,
    TwoPhase,
    CarlemanSuite,
    SpectralScan,
    HardySuite,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Self::Forward => "forward",
            Self::Control => "control",
            Self::Memory => "memory",
            Self::TwoPhase => "two_phase",
            Self::CarlemanSuite => "carleman_suite",
            Self::SpectralScan => "spectral_scan",
            Self::HardySuite => "hardy_suite",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub scenario: Scenario,
    #[serde(default)]
    pub description: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub problem: ProblemBlock,
    #[serde(default)]
    pub weights: WeightsBlock,
    #[serde(default)]
    pub kernel: Option<KernelBlock>,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub output: OutputBlock,
    #[serde(default)]
    pub scan: Option<ScanBlock>,
    #[serde(default)]
    pub suite: Option<SuiteBlock>,
    #[serde(default)]
    pub hardy: Option<HardyBlock>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialData {
    Sine,
    Bessel,
    Step,
    Parabola,
    /// Path to a file of `nx` values, relative to the config file.
    Csv(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemBlock {
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default = "one", rename = "T")]
    pub t_final: f64,
    #[serde(default = "default_n")]
    pub nx: usize,
    #[serde(default = "default_n")]
    pub nt: usize,
    #[serde(default = "default_omega")]
    pub omega: [f64; 2],
    #[serde(default = "default_omega_prime")]
    pub omega_prime: [f64; 2],
    #[serde(default = "default_y0")]
    pub y0: InitialData,
}

impl Default for ProblemBlock {
    fn default() -> Self {
        Self {
            mu: default_mu(),
            t_final: 1.0,
            nx: default_n(),
            nt: default_n(),
            omega: default_omega(),
            omega_prime: default_omega_prime(),
            y0: default_y0(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightPreset {
    #[default]
    Theory,
    Mild,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Basic,
    Memory,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaBlock {
    pub family: SigmaFamilyName,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default = "default_omega_tilde")]
    pub omega_tilde: [f64; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaFamilyName {
    Parabola,
    Sine,
}

/// Starts from `preset`; any listed field overrides it. `k` defaults to `1 + 2/γ`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsBlock {
    #[serde(default)]
    pub preset: WeightPreset,
    pub gamma: Option<f64>,
    pub k: Option<f64>,
    pub cfrak: Option<f64>,
    pub d: Option<f64>,
    pub rho: Option<f64>,
    pub s: Option<f64>,
    pub eta: Option<f64>,
    pub mode: Option<ModeName>,
    pub sigma: Option<SigmaBlock>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKindName {
    Constant,
    DecayExp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelBlock {
    pub kind: KernelKindName,
    pub amplitude: f64,
    #[serde(default, rename = "M0")]
    pub m0: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Hum,
    Variational,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightModeName {
    #[default]
    Uniform,
    Paper,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    #[serde(default)]
    pub method: Method,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_cg_tol")]
    pub cg_tol: f64,
    #[serde(default = "default_cg_max")]
    pub cg_max: usize,
    #[serde(default = "default_picard_tol")]
    pub picard_tol: f64,
    #[serde(default = "default_picard_max")]
    pub picard_max: usize,
    #[serde(default)]
    pub t0: Option<f64>,
    #[serde(default)]
    pub weight_mode: WeightModeName,
}

impl Default for SolverBlock {
    fn default() -> Self {
        Self {
            method: Method::Hum,
            epsilon: default_epsilon(),
            cg_tol: default_cg_tol(),
            cg_max: default_cg_max(),
            picard_tol: default_picard_tol(),
            picard_max: default_picard_max(),
            t0: None,
            weight_mode: WeightModeName::Uniform,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub directory: Option<PathBuf>,
    #[serde(default)]
    pub prefix: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanBlock {
    pub mu: Vec<f64>,
    pub nx: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FormName {
    #[default]
    Standard,
    Modified,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteBlock {
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default)]
    pub form: FormName,
    /// Multiples of `weights.s` to run the suite at.
    #[serde(default = "default_s_factors")]
    pub s_factors: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardyBlock {
    pub nx: Vec<usize>,
    #[serde(default = "default_etas")]
    pub eta: Vec<f64>,
}

fn one() -> f64 {
    1.0
}
fn default_mu() -> f64 {
    0.2
}
fn default_n() -> usize {
    50
}
fn default_omega() -> [f64; 2] {
    [0.3, 0.8]
}
fn default_omega_prime() -> [f64; 2] {
    [0.4, 0.7]
}
fn default_omega_tilde() -> [f64; 2] {
    [0.45, 0.55]
}
fn default_y0() -> InitialData {
    InitialData::Sine
}
fn default_epsilon() -> f64 {
    1e-6
}
fn default_cg_tol() -> f64 {
    1e-10
}
fn default_cg_max() -> usize {
    2000
}
fn default_picard_tol() -> f64 {
    1e-6
}
fn default_picard_max() -> usize {
    20
}
fn default_draws() -> usize {
    20
}
fn default_s_factors() -> Vec<f64> {
    vec![1.0, 2.0]
}
fn default_etas() -> Vec<f64> {
    vec![1.0, 2.0]
}

/// Failure while reading or interpreting a config: exit code 1.
#[derive(Debug)]
pub struct ConfigError {
    pub source_name: String,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.column) {
            (Some(l), Some(c)) => write!(f, "{}:{l}:{c}: {}", self.source_name, self.message),
            (Some(l), None) => write!(f, "{}:{l}: {}", self.source_name, self.message),
            _ => write!(f, "{}: {}", self.source_name, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

pub struct Preset {
    pub name: &'static str,
    pub text: &'static str,
}

pub const PRESETS: &[Preset] = &[
    Preset { name: "forward_sine", text: include_str!("../presets/forward_sine.json") },
    Preset { name: "forward_bessel", text: include_str!("../presets/forward_bessel.json") },
    Preset { name: "hum_control", text: include_str!("../presets/hum_control.json") },
    Preset { name: "variational_control", text: include_str!("../presets/variational_control.json") },
    Preset { name: "memory_preset", text: include_str!("../presets/memory_preset.json") },
    Preset { name: "two_phase_step", text: include_str!("../presets/two_phase_step.json") },
    Preset { name: "carleman_suite", text: include_str!("../presets/carleman_suite.json") },
    Preset { name: "spectral_scan", text: include_str!("../presets/spectral_scan.json") },
    Preset { name: "hardy_suite", text: include_str!("../presets/hardy_suite.json") },
];

pub fn preset(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

/// A parsed config together with its text, for line anchors, and its base directory.
#[derive(Debug)]
pub struct Loaded {
    pub config: Config,
    pub source_name: String,
    pub text: String,
    pub base_dir: PathBuf,
}

impl Loaded {
    /// First line mentioning `"key"`.
    pub fn line_of(&self, key: &str) -> Option<usize> {
        let needle = format!("\"{key}\"");
        self.text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
    }

    /// `source:line` for messages about `key`.
    pub fn anchor(&self, key: &str) -> String {
        match self.line_of(key) {
            Some(l) => format!("{}:{l}", self.source_name),
            None => self.source_name.clone(),
        }
    }

    pub fn error_at(&self, key: &str, message: impl Into<String>) -> ConfigError {
        let line = self.line_of(key);
        ConfigError {
            source_name: self.source_name.clone(),
            line,
            column: None,
            message: message.into(),
        }
    }
}

/// Reads `preset:NAME` or a file path.
pub fn load(arg: &str) -> Result<Loaded, ConfigError> {
    if let Some(name) = arg.strip_prefix("preset:") {
        let p = preset(name).ok_or_else(|| ConfigError {
            source_name: arg.to_string(),
            line: None,
            column: None,
            message: format!(
                "unknown preset '{name}' (available: {})",
                PRESETS.iter().map(|p| p.name).collect::<Vec<_>>().join(", ")
            ),
        })?;
        return parse(p.text, arg, PathBuf::from("."));
    }
    let path = Path::new(arg);
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        source_name: arg.to_string(),
        line: None,
        column: None,
        message: format!("cannot read config: {e}"),
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse(&text, arg, base)
}

pub fn parse(text: &str, source_name: &str, base_dir: PathBuf) -> Result<Loaded, ConfigError> {
    let config: Config = serde_json::from_str(text).map_err(|e| ConfigError {
        source_name: source_name.to_string(),
        line: Some(e.line()),
        column: Some(e.column()),
        message: e.to_string(),
    })?;
    Ok(Loaded {
        config,
        source_name: source_name.to_string(),
        text: text.to_string(),
        base_dir,
    })
}

impl Loaded {
    pub fn grid(&self) -> Result<SpaceTimeGrid, ConfigError> {
        let p = &self.config.problem;
        let iv = |a: [f64; 2]| Interval::new(a[0], a[1]);
        SpaceTimeGrid::new(p.nx, p.nt, p.t_final, iv(p.omega), iv(p.omega_prime))
            .map_err(|e| self.error_at("problem", e.to_string()))
    }

    /// Weight parameters with μ and T taken from the problem block. Scenarios with
    /// memory default to the memory-mode constraint set.
    pub fn weights(&self) -> WeightParams {
        let w = &self.config.weights;
        let base: WeightParams = match w.preset {
            WeightPreset::Theory => WeightParams::theory(),
            WeightPreset::Mild => WeightParams::mild(),
        };
        let gamma = w.gamma.unwrap_or(base.gamma);
        let default_mode = match self.config.scenario {
            Scenario::Memory | Scenario::TwoPhase => ValidationMode::Memory,
            _ => base.mode,
        };
        let mode = match w.mode {
            Some(ModeName::Basic) => ValidationMode::Basic,
            Some(ModeName::Memory) => ValidationMode::Memory,
            None => default_mode,
        };
        let mut p = WeightParams::new(
            gamma,
            w.cfrak.unwrap_or(base.cfrak),
            w.d.unwrap_or(base.d),
            w.rho.unwrap_or(base.rho),
            w.s.unwrap_or(base.s),
            self.config.problem.t_final,
            self.config.problem.mu,
            mode,
        );
        if let Some(k) = w.k {
            p.k = k;
        }
        p.eta = w.eta.unwrap_or(base.eta);
        if let Some(sig) = &w.sigma {
            p.sigma = SigmaSpec {
                family: match sig.family {
                    SigmaFamilyName::Parabola => SigmaFamily::Parabola,
                    SigmaFamilyName::Sine => SigmaFamily::Sine,
                },
                scale: sig.scale,
                omega_tilde: Interval::new(sig.omega_tilde[0], sig.omega_tilde[1]),
            };
        }
        p
    }

    pub fn kernel(&self, p: &WeightParams) -> Option<MemoryKernel> {
        self.config.kernel.as_ref().map(|k| match k.kind {
            KernelKindName::Constant => MemoryKernel::constant(k.amplitude),
            KernelKindName::DecayExp => MemoryKernel::decay_for(k.amplitude, k.m0, p),
        })
    }

    /// Initial data on the grid; reads the CSV file for `{"csv": path}`.
    pub fn initial_data(&self, grid: &SpaceTimeGrid) -> Result<Vec<f64>, ConfigError> {
        use nullctl::profiles;
        match &self.config.problem.y0 {
            InitialData::Sine => Ok(profiles::sine(grid)),
            InitialData::Step => Ok(profiles::step(grid)),
            InitialData::Parabola => Ok(profiles::parabola(grid)),
            InitialData::Bessel => profiles::bessel_mode(grid, self.config.problem.mu)
                .map(|(v, _)| v)
                .map_err(|e| self.error_at("y0", e.to_string())),
            InitialData::Csv(path) => {
                let full = self.base_dir.join(path);
                let text = std::fs::read_to_string(&full)
                    .map_err(|e| self.error_at("y0", format!("cannot read {}: {e}", full.display())))?;
                let values = parse_values(&text)
                    .map_err(|m| self.error_at("y0", format!("{}: {m}", full.display())))?;
                if values.len() != grid.nx {
                    return Err(self.error_at(
                        "y0",
                        format!("{} holds {} values, nx = {}", full.display(), values.len(), grid.nx),
                    ));
                }
                Ok(values)
            }
        }
    }
}

/// Numbers separated by commas, whitespace or newlines; a non-numeric first line is a header.
fn parse_values(text: &str) -> Result<Vec<f64>, String> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let cells: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|c| !c.is_empty())
            .collect();
        let parsed: Result<Vec<f64>, _> = cells.iter().map(|c| c.parse::<f64>()).collect();
        match parsed {
            Ok(v) => out.extend(v),
            Err(_) if ln == 0 => continue,
            Err(e) => return Err(format!("line {}: {e}", ln + 1)),
        }
    }
    Ok(out)
}
