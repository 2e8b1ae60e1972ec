//! Experiment configuration files: JSON with a `version` field, unknown keys
//! rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;

use scldgm::dde::{CheckSchedule, DdeOptions};
use scldgm::grid::{ConvolutionMethod, DEFAULT_L_MAX, DEFAULT_N_BITS};
use scldgm::{CodeEnsemble, EnsembleSpec, LlrGrid};

use crate::CliError;

pub const CONFIG_VERSION: u32 = 1;

/// Longest sweep a config may request.
const MAX_POINTS: usize = 100_000;

pub fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Reads and parses a config; parse errors carry line and column.
pub fn load<T: DeserializeOwned + Versioned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
    let cfg: T = serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
    if cfg.version() != CONFIG_VERSION {
        return Err(config_error(format!(
            "{}: unsupported config version {}, expected {CONFIG_VERSION}",
            path.display(),
            cfg.version()
        )));
    }
    Ok(cfg)
}

pub trait Versioned {
    fn version(&self) -> u32;
}

macro_rules! versioned {
    ($($t:ty),*) => {
        $(impl Versioned for $t {
            fn version(&self) -> u32 {
                self.version
            }
        })*
    };
}

versioned!(DdeConfig, ThresholdConfig, BoundsConfig, SimulateConfig, OptimizeConfig, ConvergenceConfig);

/// An ensemble given inline or as a path (relative to the config file) to a
/// JSON file holding one.
#[derive(Debug, Clone)]
pub enum EnsembleRef {
    File(PathBuf),
    Inline(EnsembleSpec),
}

// Not `untagged`: buffered content cannot turn the string keys of degree maps
// into integers, and the untagged error hides the real cause.
impl<'de> Deserialize<'de> for EnsembleRef {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::String(p) => Ok(EnsembleRef::File(p.into())),
            v => serde_json::from_value(v).map(EnsembleRef::Inline).map_err(serde::de::Error::custom),
        }
    }
}

impl EnsembleRef {
    pub fn resolve(&self, base: &Path) -> Result<CodeEnsemble, CliError> {
        let spec = match self {
            EnsembleRef::Inline(s) => s.clone(),
            EnsembleRef::File(p) => {
                let path = base.join(p);
                let text = fs::read_to_string(&path)
                    .map_err(|e| config_error(format!("cannot read ensemble file {}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))?
            }
        };
        spec.build().map_err(|e| config_error(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

/// `E_b/N_o` points: an explicit list or an inclusive range.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    #[serde(default)]
    pub eb_no_db: Option<Vec<f64>>,
    #[serde(default)]
    pub range: Option<Range>,
}

impl Sweep {
    pub fn points(&self) -> Result<Vec<f64>, CliError> {
        let points = match (&self.eb_no_db, self.range) {
            (Some(list), None) => list.clone(),
            (None, Some(r)) => {
                if !(r.step > 0.0) || !(r.stop >= r.start) {
                    return Err(config_error(format!("sweep range needs step > 0 and stop >= start, got {r:?}")));
                }
                let n = ((r.stop - r.start) / r.step + 1e-9).floor() as usize + 1;
                if n > MAX_POINTS {
                    return Err(config_error(format!("sweep has {n} points, limit is {MAX_POINTS}")));
                }
                (0..n).map(|i| r.start + i as f64 * r.step).collect()
            }
            _ => return Err(config_error("sweep needs exactly one of `eb_no_db` or `range`")),
        };
        if points.is_empty() {
            return Err(config_error("sweep is empty"));
        }
        if let Some(p) = points.iter().find(|p| !p.is_finite()) {
            return Err(config_error(format!("sweep point {p} is not finite")));
        }
        Ok(points)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DdeParams {
    pub n_bits: u32,
    pub l_max: f64,
    pub max_iters: usize,
    pub convolution: ConvolutionMethod,
    pub check_schedule: CheckSchedule,
}

impl Default for DdeParams {
    fn default() -> Self {
        DdeParams {
            n_bits: DEFAULT_N_BITS,
            l_max: DEFAULT_L_MAX,
            max_iters: 200,
            convolution: ConvolutionMethod::Direct,
            check_schedule: CheckSchedule::Tree,
        }
    }
}

impl DdeParams {
    pub fn options(&self) -> Result<DdeOptions, CliError> {
        if self.max_iters == 0 {
            return Err(config_error("dde.max_iters must be at least 1"));
        }
        let grid = LlrGrid::new(self.l_max, self.n_bits).map_err(|e| config_error(format!("dde: {e}")))?;
        let mut opts = DdeOptions::default().with_grid(grid).with_max_iters(self.max_iters);
        opts.convolution = self.convolution;
        opts.check_schedule = self.check_schedule;
        Ok(opts)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DdeConfig {
    pub version: u32,
    pub inner: EnsembleRef,
    pub outer: EnsembleRef,
    pub sweep: Sweep,
    #[serde(default)]
    pub dde: DdeParams,
    /// Write per-iteration error traces for every point.
    #[serde(default)]
    pub traces: bool,
    /// Write the inner decision pmf handed to the outer stage for every point.
    #[serde(default)]
    pub snapshots: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdRowConfig {
    /// Absent for a stand-alone outer code.
    #[serde(default)]
    pub inner: Option<EnsembleRef>,
    pub outer: EnsembleRef,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdConfig {
    pub version: u32,
    pub rows: Vec<ThresholdRowConfig>,
    #[serde(default = "default_precision")]
    pub precision_db: f64,
    #[serde(default)]
    pub dde: DdeParams,
}

fn default_precision() -> f64 {
    0.01
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsEntry {
    pub name: String,
    pub inner: EnsembleRef,
    /// With an outer code the concatenation is evaluated; without one the
    /// inner code stands alone.
    #[serde(default)]
    pub outer: Option<EnsembleRef>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub version: u32,
    pub ensembles: Vec<BoundsEntry>,
    pub sweep: Sweep,
    #[serde(default)]
    pub dde: DdeParams,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimCode {
    pub name: String,
    pub inner: EnsembleRef,
    pub outer: EnsembleRef,
    /// Information bits per block.
    pub k: usize,
    /// Seed of the graph construction.
    #[serde(default)]
    pub graph_seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub version: u32,
    pub codes: Vec<SimCode>,
    pub sweep: Sweep,
    #[serde(default = "default_schedules")]
    pub schedules: Vec<scldgm::codec::Schedule>,
    #[serde(default = "default_blocks")]
    pub max_blocks: usize,
    #[serde(default)]
    pub min_errors: Option<usize>,
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default)]
    pub decoder: scldgm::codec::DecoderConfig,
    #[serde(default)]
    pub seed: u64,
}

fn default_schedules() -> Vec<scldgm::codec::Schedule> {
    vec![scldgm::codec::Schedule::TwoStep]
}

fn default_blocks() -> usize {
    1000
}

fn default_batch() -> usize {
    16
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeConfig {
    pub version: u32,
    pub search: scldgm::OptimizationConfig,
    /// Continue from `checkpoint.json` in the output directory if present.
    #[serde(default)]
    pub resume: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub version: u32,
    pub inner: EnsembleRef,
    pub outer: EnsembleRef,
    /// Overrides the critical BER derived from the outer threshold.
    #[serde(default)]
    pub critical_ber: Option<f64>,
    pub sweep: Sweep,
    #[serde(default)]
    pub dde: DdeParams,
}
