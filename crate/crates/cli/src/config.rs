//! Run configuration: one JSON document with the sections `problem`,
//! `operator`, `fidelity`, `regularizer`, `solver`, `noise` and `output`.
//! Unknown keys are rejected. See `docs/config.md` for the schema.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub problem: Problem,
    #[serde(default)]
    pub operator: Operator,
    #[serde(default)]
    pub fidelity: FidelitySection,
    #[serde(default)]
    pub regularizer: RegularizerSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Problem {
    /// `disk`, `rectangles` or `shepp_like`.
    pub phantom: Option<String>,
    #[serde(default = "default_size")]
    pub size: usize,
    /// PGM or CSV image, relative to the config file.
    pub image: Option<PathBuf>,
    /// Binary mask for segmentation scoring.
    pub ground_truth: Option<PathBuf>,
    /// Segmentation phantoms: intensities inside and outside the shape.
    pub contrast: Option<[f64; 2]>,
}

fn default_size() -> usize {
    64
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Operator {
    /// `identity`, `blur`, `fourier` or `radon`; defaults per command.
    pub kind: Option<String>,
    pub kernel: Option<Kernel>,
    pub mask: Option<SamplingMask>,
    /// `full`, `sparse` or `limited`.
    pub geometry: Option<String>,
    pub angles: Option<usize>,
    pub span_degrees: Option<f64>,
    pub offsets: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Kernel {
    Gaussian { size: usize, sigma: f64 },
    /// Uniform average over a `width × height` window.
    Box { width: usize, height: usize },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplingMask {
    Full,
    /// Every `spacing`-th frequency row plus the `center` lowest rows.
    Lines { spacing: usize, center: usize },
    /// Each frequency kept with probability `fraction`, plus the `center`
    /// lowest frequencies in both directions.
    Random { fraction: f64, center: usize },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FidelitySection {
    #[serde(default = "default_fidelity")]
    pub kind: String,
}

impl Default for FidelitySection {
    fn default() -> Self {
        Self { kind: default_fidelity() }
    }
}

fn default_fidelity() -> String {
    "l2".into()
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizerSection {
    pub kind: Option<String>,
    pub weight: Option<f64>,
    /// pnp-sweep: the linear denoiser.
    pub denoiser: Option<Kernel>,
    pub tau_rule: Option<TauRuleSection>,
    /// segment: threshold of the relaxed indicator.
    pub threshold: Option<f64>,
    pub outer_iters: Option<usize>,
    pub init: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TauRuleSection {
    Linear(f64),
    Calibrated(Vec<f64>),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    /// `pdhg`, `admm` or `fbs`.
    pub method: Option<String>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    pub tau: Option<f64>,
    pub sigma: Option<f64>,
    pub lambda: Option<f64>,
    pub theta: Option<f64>,
    pub criterion: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    /// `gaussian`, `poisson` or `impulse`.
    pub kind: Option<String>,
    #[serde(default)]
    pub level: f64,
    /// Gaussian level taken relative to the largest clean datum.
    #[serde(default)]
    pub relative: bool,
    /// pnp-sweep: strictly decreasing noise norms.
    pub levels: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// `ascii` (P2) or `binary` (P5).
    #[serde(default = "default_pgm")]
    pub pgm: String,
    #[serde(default = "default_range")]
    pub range: [f64; 2],
    /// Also write the observed data as `observed.csv`.
    #[serde(default)]
    pub save_data: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            pgm: default_pgm(),
            range: default_range(),
            save_data: false,
        }
    }
}

fn default_pgm() -> String {
    "ascii".into()
}

fn default_range() -> [f64; 2] {
    [0.0, 1.0]
}

/// A parsed config and the directory its relative paths resolve against.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: Config,
    pub base: PathBuf,
}

impl Loaded {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }
}

pub fn load(path: &Path) -> Result<Loaded, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::config(path, format!("cannot read: {e}")))?;
    let config = parse(&text).map_err(|msg| CliError::config(path, msg))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Loaded { config, base })
}

/// serde_json errors already carry the offending field and `line L column C`.
pub fn parse(text: &str) -> Result<Config, String> {
    serde_json::from_str(text).map_err(|e| e.to_string())
}
