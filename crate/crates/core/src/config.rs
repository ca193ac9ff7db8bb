//! Pipeline configuration: a single key=value file plus command-line
//! overrides, last writer wins.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::depthmetrics::SsimMode;
use crate::error::{Error, Result};
use crate::gbt::Hyperparams;
use crate::kinematics::{DeltaSMode, SeriesParams, DEFAULT_SMOOTH_WINDOW};
use crate::leadvehicle::{DEFAULT_LEFT_FACTOR, DEFAULT_RIGHT_FACTOR};

/// Everything a subcommand may need. Paths stay unresolved until the
/// subcommand that uses them runs.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Drive directories laid out as `manifest.txt`, `frames.csv`,
    /// `lidar.csv`, `depth/`.
    pub drives: Vec<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub frames: Option<PathBuf>,
    pub depth_dir: Option<PathBuf>,
    pub lidar: Option<PathBuf>,
    /// Candidate depth-model directories for calibration.
    pub depth_dirs: Vec<PathBuf>,
    /// Reference depth maps for the quality report.
    pub truth_depth_dir: Option<PathBuf>,
    /// Pre-computed per-model RMSEs; when set, calibration selects among
    /// them without touching depth files.
    pub reference_rmse: Vec<f64>,
    pub calibration: Option<PathBuf>,
    /// Optional `frame_index,v_rel` file overriding differentiated
    /// relative velocity.
    pub flow: Option<PathBuf>,
    /// Labeled series files (`series.<label>=<path>`).
    pub series: BTreeMap<String, PathBuf>,

    pub left_factor: f64,
    pub right_factor: f64,
    pub smooth_window: usize,
    pub delta_s: DeltaSMode,
    pub ssim_mode: SsimMode,
    pub alpha: f64,
    pub gbt: Hyperparams,
    pub train_fraction: f64,

    pub seed: u64,
    pub workers: usize,
    pub out: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            drives: Vec::new(),
            manifest: None,
            frames: None,
            depth_dir: None,
            lidar: None,
            depth_dirs: Vec::new(),
            truth_depth_dir: None,
            reference_rmse: Vec::new(),
            calibration: None,
            flow: None,
            series: BTreeMap::new(),
            left_factor: DEFAULT_LEFT_FACTOR,
            right_factor: DEFAULT_RIGHT_FACTOR,
            smooth_window: DEFAULT_SMOOTH_WINDOW,
            delta_s: DeltaSMode::Change,
            ssim_mode: SsimMode::HalfSsim,
            alpha: 0.05,
            gbt: Hyperparams::default(),
            train_fraction: 0.7,
            seed: 0,
            workers: 0,
            out: PathBuf::from("out"),
        }
    }
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut config = PipelineConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("{}:{}: expected key=value", path.display(), i + 1))
            })?;
            config.set(key.trim(), value.trim()).map_err(|e| {
                Error::Config(format!("{}:{}: {e}", path.display(), i + 1))
            })?;
        }
        config.validate()?;
        Ok(config)
    }

    /// Apply one `key=value` assignment; unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
        }
        if let Some(label) = key.strip_prefix("series.") {
            if label.is_empty() {
                return Err(Error::Config("series label must be non-empty".into()));
            }
            self.series.insert(label.to_string(), PathBuf::from(value));
            return Ok(());
        }
        match key {
            "drives" => {
                self.drives = split_paths(value);
            }
            "manifest" => self.manifest = Some(PathBuf::from(value)),
            "frames" => self.frames = Some(PathBuf::from(value)),
            "depth_dir" => self.depth_dir = Some(PathBuf::from(value)),
            "lidar" => self.lidar = Some(PathBuf::from(value)),
            "depth_dirs" => self.depth_dirs = split_paths(value),
            "truth_depth_dir" => self.truth_depth_dir = Some(PathBuf::from(value)),
            "reference_rmse" => {
                self.reference_rmse = value
                    .split(',')
                    .map(|s| num::<f64>("reference_rmse", s.trim()))
                    .collect::<Result<_>>()?;
            }
            "calibration" => self.calibration = Some(PathBuf::from(value)),
            "flow" => self.flow = Some(PathBuf::from(value)),
            "left_factor" => self.left_factor = num(key, value)?,
            "right_factor" => self.right_factor = num(key, value)?,
            "smooth_window" => self.smooth_window = num(key, value)?,
            "delta_s" => self.delta_s = DeltaSMode::parse(value)?,
            "ssim_mode" => self.ssim_mode = SsimMode::parse(value)?,
            "alpha" => self.alpha = num(key, value)?,
            "rounds" => self.gbt.rounds = num(key, value)?,
            "learning_rate" => self.gbt.learning_rate = num(key, value)?,
            "max_depth" => self.gbt.max_depth = num(key, value)?,
            "min_child_weight" => self.gbt.min_child_weight = num(key, value)?,
            "reg_lambda" => self.gbt.reg_lambda = num(key, value)?,
            "train_fraction" => self.train_fraction = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "workers" => self.workers = num(key, value)?,
            "out" => self.out = PathBuf::from(value),
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.left_factor > 0.0 && self.left_factor < self.right_factor && self.right_factor < 1.0)
        {
            return Err(Error::Config(format!(
                "triangle factors ({}, {}) must satisfy 0 < left < right < 1",
                self.left_factor, self.right_factor
            )));
        }
        if self.smooth_window == 0 || self.smooth_window % 2 == 0 {
            return Err(Error::Config(format!(
                "smooth_window {} must be odd and positive",
                self.smooth_window
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha {} must be in (0, 1)", self.alpha)));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction {} must be in (0, 1)",
                self.train_fraction
            )));
        }
        Ok(())
    }

    pub fn series_params(&self) -> SeriesParams {
        SeriesParams { smooth_window: self.smooth_window, delta_s_mode: self.delta_s }
    }
}

fn split_paths(value: &str) -> Vec<PathBuf> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(PathBuf::from)
        .collect()
}
