//! Run configuration: parsing (JSON or TOML), dotted overrides, validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use tse_core::eval::EvalGeometry;
use tse_core::grid::GridSpec;
use tse_core::solver::SolverConfig;
use tse_core::trajectory::{FormatSpec, SyntheticFieldSpec};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    /// Required unless the dataset is a saved matrix, which carries its grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub experiment: ExperimentBlock,
    #[serde(default)]
    pub estimate: EstimateBlock,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Exactly one of the three sources must be set.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectories: Option<TrajectoryFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<MatrixFiles>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryFile {
    pub path: PathBuf,
    #[serde(default)]
    pub format: FormatSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSource {
    pub field: SyntheticFieldSpec,
    /// Defaults to enough vehicles to keep entering for the whole window.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vehicle_count: Option<usize>,
    pub entry_headway_s: f64,
}

impl Default for SyntheticSource {
    fn default() -> Self {
        SyntheticSource {
            field: SyntheticFieldSpec::default(),
            vehicle_count: None,
            entry_headway_s: 2.0,
        }
    }
}

impl SyntheticSource {
    pub fn vehicle_count(&self, segment_length_m: f64, window_length_s: f64) -> usize {
        self.vehicle_count.unwrap_or_else(|| {
            let traverse = segment_length_m * 3.6 / self.field.free_flow_speed_kmh;
            ((window_length_s + traverse) / self.entry_headway_s) as usize + 1
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixFiles {
    pub csv: PathBuf,
    pub sidecar: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Tse,
    Rtse,
    Sensitivity,
    Ablation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentBlock {
    pub mode: Mode,
    pub master_seed: u64,
    pub reps: usize,
    /// Penetration rates of a `tse` sweep.
    pub rates: Vec<f64>,
    /// `tse` only: add the rectangular counterpart of an oblique grid.
    pub compare_rectangular: bool,
    /// Penetration rate of the `rtse`, `sensitivity` and `ablation` modes.
    pub penetration_rate: f64,
    /// Per-type corruption counts of an `rtse` sweep.
    pub corruption_levels: Vec<usize>,
    pub wave_speeds_kmh: Vec<f64>,
    /// Per-type corruption count of the ablation scenario.
    pub corruptions_per_type: usize,
    pub eval_geometry: EvalGeometry,
    pub detect_threshold_kmh: f64,
}

impl Default for ExperimentBlock {
    fn default() -> Self {
        ExperimentBlock {
            mode: Mode::Tse,
            master_seed: 0,
            reps: 10,
            rates: vec![0.05],
            compare_rectangular: true,
            penetration_rate: 0.05,
            corruption_levels: vec![0, 10, 20, 30, 40, 50],
            wave_speeds_kmh: (0..8).map(|i| -10.0 - 2.0 * i as f64).collect(),
            corruptions_per_type: 20,
            eval_geometry: EvalGeometry::Native,
            detect_threshold_kmh: tse_core::corruption::DEFAULT_DETECT_THRESHOLD_KMH,
        }
    }
}

/// Options of `estimate` and `build-grid`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateBlock {
    /// Keep only this fraction of vehicles before binning; the full data set
    /// then serves as the reference for RMSE/MAE.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub penetration_rate: Option<f64>,
    pub count_type1: usize,
    pub count_type2: usize,
}

/// Command-line settings applied on top of the file.
#[derive(Debug, Default)]
pub struct Overrides {
    pub sets: Vec<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// Reads a JSON or TOML file (by extension; `.toml` is TOML, anything else
/// JSON). A manifest written by a previous run is accepted too: its `config`
/// echo is used.
pub fn load_value(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let value: Value = if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
    } else {
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
    };
    match value {
        Value::Object(mut m) if m.contains_key("tool") && m.contains_key("config") => Ok(m.remove("config").unwrap_or_default()),
        v => Ok(v),
    }
}

/// Sets `a.b.c` in a JSON object tree, creating intermediate objects.
pub fn set_path(root: &mut Value, path: &str, value: Value) -> Result<(), CliError> {
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("bad override path `{path}`")));
    }
    let mut node = root;
    for (i, part) in parts.iter().enumerate() {
        if !node.is_object() {
            if node.is_null() {
                *node = Value::Object(Map::new());
            } else {
                return Err(CliError::Config(format!("override `{path}`: `{}` is not a table", parts[..i].join("."))));
            }
        }
        let map = node.as_object_mut().expect("checked above");
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map.entry(part.to_string()).or_insert(Value::Null);
    }
    unreachable!("loop returns on the last segment")
}

/// `key=value` with the value read as JSON when it parses, else as a string.
fn parse_set(raw: &str) -> Result<(String, Value), CliError> {
    let (k, v) = raw
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{raw}` is not key=value")))?;
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.trim().to_string(), value))
}

pub fn resolve(path: &Path, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let mut value = load_value(path)?;
    if !value.is_object() {
        return Err(CliError::Config(format!("{}: top level must be a table", path.display())));
    }
    for raw in &overrides.sets {
        let (k, v) = parse_set(raw)?;
        set_path(&mut value, &k, v)?;
    }
    if let Some(seed) = overrides.seed {
        set_path(&mut value, "experiment.master_seed", Value::from(seed))?;
    }
    if let Some(out) = &overrides.out {
        set_path(&mut value, "output_dir", Value::from(out.to_string_lossy().into_owned()))?;
    }
    let cfg: RunConfig = serde_path_to_error::deserialize(value).map_err(|e| CliError::Config(format!("{}: {}", e.path(), e.inner())))?;
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, e: tse_core::Error| CliError::Config(format!("{field}: {e}"));
        let d = &self.dataset;
        let sources = [d.trajectories.is_some(), d.synthetic.is_some(), d.matrix.is_some()];
        if sources.iter().filter(|&&s| s).count() != 1 {
            return Err(CliError::Config("dataset: set exactly one of `trajectories`, `synthetic`, `matrix`".into()));
        }
        let exists = |field: &str, p: &Path| {
            if p.exists() {
                Ok(())
            } else {
                Err(CliError::Config(format!("{field}: {} does not exist", p.display())))
            }
        };
        if let Some(t) = &d.trajectories {
            exists("dataset.trajectories.path", &t.path)?;
        }
        if let Some(m) = &d.matrix {
            exists("dataset.matrix.csv", &m.csv)?;
            exists("dataset.matrix.sidecar", &m.sidecar)?;
        }
        if let Some(s) = &d.synthetic {
            s.field.validate().map_err(|e| bad("dataset.synthetic.field", e))?;
            if !(s.entry_headway_s.is_finite() && s.entry_headway_s > 0.0) {
                return Err(CliError::Config("dataset.synthetic.entry_headway_s: must be positive".into()));
            }
            if s.vehicle_count == Some(0) {
                return Err(CliError::Config("dataset.synthetic.vehicle_count: must be at least 1".into()));
            }
        }
        match &self.grid {
            Some(g) => g.validate().map_err(|e| bad("grid", e))?,
            None if d.matrix.is_none() => return Err(CliError::Config("grid: required for trajectory and synthetic datasets".into())),
            None => {}
        }
        self.solver.validate().map_err(|e| bad("solver", e))?;

        let rate_ok = |r: f64| r > 0.0 && r <= 1.0;
        let e = &self.experiment;
        if e.reps == 0 {
            return Err(CliError::Config("experiment.reps: must be >= 1".into()));
        }
        if let Some(r) = e.rates.iter().find(|&&r| !rate_ok(r)) {
            return Err(CliError::Config(format!("experiment.rates: {r} is outside (0, 1]")));
        }
        if !rate_ok(e.penetration_rate) {
            return Err(CliError::Config(format!("experiment.penetration_rate: {} is outside (0, 1]", e.penetration_rate)));
        }
        if let Some(v) = e.wave_speeds_kmh.iter().find(|&&v| !(v.is_finite() && v < 0.0)) {
            return Err(CliError::Config(format!("experiment.wave_speeds_kmh: {v} is not a backward-wave speed")));
        }
        if !(e.detect_threshold_kmh.is_finite() && e.detect_threshold_kmh >= 0.0) {
            return Err(CliError::Config("experiment.detect_threshold_kmh: must be nonnegative".into()));
        }
        if let Some(r) = self.estimate.penetration_rate.filter(|&r| !rate_ok(r)) {
            return Err(CliError::Config(format!("estimate.penetration_rate: {r} is outside (0, 1]")));
        }
        Ok(())
    }
}
