//! Subcommand implementations behind the `carfollow` binary.
//!
//! Every subcommand is a pure function of its inputs and the seed: outputs
//! are byte-identical across reruns. All file writes go through temporary
//! paths renamed into place, and a subcommand computes everything before
//! writing anything, so a failure leaves no partial outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};

use crate::config::PipelineConfig;
use crate::depthmetrics::{
    bbox_distance, fit_calibration, select_model, CalibrationFit, DepthQualityReport,
};
use crate::error::{Error, Result};
use crate::gbt::{self, Dataset, SplitSpec};
use crate::ingest::{self, DriveManifest, FrameRecord};
use crate::kinematics::{build_following_series, serialize_series, FollowingSeries};
use crate::leadvehicle::{build_track, serialize_track, LaneTriangle};
use crate::stats::{compare_groups, density_estimate, serialize_comparisons, serialize_density,
    Bandwidth, GroupSample};
use crate::synth;

/// How many frames the per-model quality report averages over.
const QUALITY_SAMPLE_FRAMES: usize = 25;

/// Outcome of a subcommand that can partially succeed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmdStatus {
    Ok,
    /// Some drives failed; the others produced outputs.
    Partial,
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

/// Write via a sibling temp file renamed into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("bad output path {}", path.display())))?;
    let tmp = dir.join(format!(".tmp-{}", name.to_string_lossy()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn write_all_atomic(outputs: &[(PathBuf, String)]) -> Result<()> {
    for (path, content) in outputs {
        write_atomic(path, content.as_bytes())?;
    }
    Ok(())
}

pub fn serialize_calibration(fit: &CalibrationFit) -> String {
    format!(
        "scale={}\noffset={}\nrmse_m={}\nn_samples={}\n",
        fit.scale, fit.offset, fit.rmse_m, fit.n_samples
    )
}

pub fn parse_calibration(text: &str) -> Result<CalibrationFit> {
    let mut lines = text.lines();
    let mut field = |key: &str| -> Result<String> {
        let line = lines
            .next()
            .ok_or_else(|| Error::Format(format!("calibration file ended before {key}")))?;
        line.strip_prefix(&format!("{key}="))
            .map(str::to_string)
            .ok_or_else(|| Error::Format(format!("expected {key}=..., got {line:?}")))
    };
    let scale: f64 = field("scale")?.parse().map_err(|_| Error::Format("bad scale".into()))?;
    let offset: f64 = field("offset")?.parse().map_err(|_| Error::Format("bad offset".into()))?;
    let rmse_m: f64 = field("rmse_m")?.parse().map_err(|_| Error::Format("bad rmse_m".into()))?;
    let n_samples: usize =
        field("n_samples")?.parse().map_err(|_| Error::Format("bad n_samples".into()))?;
    Ok(CalibrationFit { scale, offset, rmse_m, n_samples })
}

pub fn read_calibration(path: &Path) -> Result<CalibrationFit> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Config(format!("cannot read calibration {}: {e}", path.display()))
    })?;
    parse_calibration(&text)
}

/// Resolved input paths for one drive.
#[derive(Debug, Clone)]
pub struct DriveInput {
    pub manifest: PathBuf,
    pub frames: PathBuf,
    pub lidar: PathBuf,
    pub depth_dir: PathBuf,
    pub truth_depth_dir: Option<PathBuf>,
}

impl DriveInput {
    fn from_dir(dir: &Path) -> DriveInput {
        let truth = dir.join("truth_depth");
        DriveInput {
            manifest: dir.join("manifest.txt"),
            frames: dir.join("frames.csv"),
            lidar: dir.join("lidar.csv"),
            depth_dir: dir.join("depth"),
            truth_depth_dir: truth.is_dir().then_some(truth),
        }
    }
}

/// Drives from the config: either the `drives` directory list or the
/// explicit single-drive paths.
pub fn resolve_drives(config: &PipelineConfig) -> Result<Vec<DriveInput>> {
    if !config.drives.is_empty() {
        return Ok(config.drives.iter().map(|d| DriveInput::from_dir(d)).collect());
    }
    match (&config.manifest, &config.frames) {
        (Some(manifest), Some(frames)) => Ok(vec![DriveInput {
            manifest: manifest.clone(),
            frames: frames.clone(),
            lidar: config
                .lidar
                .clone()
                .unwrap_or_else(|| manifest.with_file_name("lidar.csv")),
            depth_dir: config
                .depth_dir
                .clone()
                .unwrap_or_else(|| manifest.with_file_name("depth")),
            truth_depth_dir: config.truth_depth_dir.clone(),
        }]),
        _ => Err(Error::Config(
            "no drives configured: set drives=<dir,...> or manifest=/frames=".into(),
        )),
    }
}

fn depth_map_path(dir: &Path, depth_ref: &str) -> PathBuf {
    dir.join(format!("{depth_ref}.dmap"))
}

// ---------------------------------------------------------------------------
// calibrate
// ---------------------------------------------------------------------------

/// Per-model calibration summary.
#[derive(Debug, Clone)]
pub struct ModelCalibration {
    pub model_id: String,
    pub fit: CalibrationFit,
    pub quality: Option<DepthQualityReport>,
}

/// Result of the calibrate subcommand.
#[derive(Debug, Clone)]
pub struct CalibrateOutcome {
    pub models: Vec<ModelCalibration>,
    pub selected: String,
}

/// Calibrate every candidate depth model against lidar and select the one
/// with the smallest RMSE. With `reference_rmse` configured the selection
/// runs directly on those values instead of reading any depth files.
pub fn cmd_calibrate(config: &PipelineConfig) -> Result<CalibrateOutcome> {
    if !config.reference_rmse.is_empty() {
        let reports: Vec<(String, f64)> = config
            .reference_rmse
            .iter()
            .enumerate()
            .map(|(i, rmse)| (format!("model {}", i + 1), *rmse))
            .collect();
        let selected = select_model(&reports)?;
        let mut selection = String::new();
        for (id, rmse) in &reports {
            let _ = writeln!(selection, "{id},{rmse}");
        }
        let _ = writeln!(selection, "selected,{selected}");
        write_all_atomic(&[(config.out.join("model_selection.csv"), selection)])?;
        return Ok(CalibrateOutcome {
            models: reports
                .into_iter()
                .map(|(model_id, rmse)| ModelCalibration {
                    model_id,
                    fit: CalibrationFit { scale: 1.0, offset: 0.0, rmse_m: rmse, n_samples: 0 },
                    quality: None,
                })
                .collect(),
            selected,
        })
    }

    let drive = resolve_drives(config)?
        .into_iter()
        .next()
        .expect("resolve_drives returns at least one drive");
    let manifest = ingest::read_manifest(&drive.manifest)?;
    let frames = ingest::read_frames(&drive.frames, &manifest)?;
    let lidar = ingest::read_lidar(&drive.lidar, &manifest)?;
    if lidar.is_empty() {
        return Err(Error::Data("no lidar samples to calibrate against".into()));
    }
    let refs: BTreeMap<u64, &str> = frames
        .iter()
        .filter_map(|f| f.depth_ref.as_deref().map(|r| (f.frame_index, r)))
        .collect();

    let model_dirs: Vec<PathBuf> = if config.depth_dirs.is_empty() {
        vec![drive.depth_dir.clone()]
    } else {
        config.depth_dirs.clone()
    };

    let mut models = Vec::new();
    let mut outputs: Vec<(PathBuf, String)> = Vec::new();
    for (k, dir) in model_dirs.iter().enumerate() {
        let model_id = format!("model {}", k + 1);
        let file_tag = format!("model_{}", k + 1);
        let mut pairs = Vec::new();
        let mut samples_by_ref: BTreeMap<&str, Vec<(u32, u32, f64)>> = BTreeMap::new();
        for s in &lidar {
            let Some(depth_ref) = refs.get(&s.frame_index) else {
                return Err(Error::Data(format!(
                    "lidar sample on frame {} which has no depth reference",
                    s.frame_index
                )));
            };
            samples_by_ref.entry(depth_ref).or_default().push((s.u, s.v, s.true_distance_m));
        }
        for (depth_ref, samples) in &samples_by_ref {
            let map = ingest::read_depth_map(&depth_map_path(dir, depth_ref))?;
            for (u, v, true_m) in samples {
                pairs.push((map.at(*u, *v), *true_m));
            }
        }
        let fit = fit_calibration(&pairs)?;
        let quality = match &drive.truth_depth_dir {
            Some(truth_dir) => {
                Some(quality_report(dir, truth_dir, &refs, &fit, config)?)
            }
            None => None,
        };
        outputs.push((
            config.out.join(format!("calibration_{file_tag}.txt")),
            serialize_calibration(&fit),
        ));
        if let Some(q) = &quality {
            outputs.push((config.out.join(format!("quality_{file_tag}.txt")), q.serialize()));
        }
        models.push(ModelCalibration { model_id, fit, quality });
    }

    let reports: Vec<(String, f64)> =
        models.iter().map(|m| (m.model_id.clone(), m.fit.rmse_m)).collect();
    let selected = select_model(&reports)?;
    let chosen = models
        .iter()
        .find(|m| m.model_id == selected)
        .expect("selected model is one of the candidates");
    outputs.push((config.out.join("calibration.txt"), serialize_calibration(&chosen.fit)));
    let mut selection = String::new();
    for (id, rmse) in &reports {
        let _ = writeln!(selection, "{id},{rmse}");
    }
    let _ = writeln!(selection, "selected,{selected}");
    outputs.push((config.out.join("model_selection.csv"), selection));
    write_all_atomic(&outputs)?;
    Ok(CalibrateOutcome { models, selected })
}

/// Average the depth-quality metrics over an evenly spaced sample of
/// frames, comparing the calibrated model maps against the reference maps.
fn quality_report(
    model_dir: &Path,
    truth_dir: &Path,
    refs: &BTreeMap<u64, &str>,
    fit: &CalibrationFit,
    config: &PipelineConfig,
) -> Result<DepthQualityReport> {
    let all_refs: Vec<&str> = refs.values().copied().collect();
    if all_refs.is_empty() {
        return Err(Error::Data("no frames with depth references".into()));
    }
    let step = all_refs.len().div_ceil(QUALITY_SAMPLE_FRAMES);
    let mut sums = [0.0f64; 4];
    let mut count = 0usize;
    for depth_ref in all_refs.iter().step_by(step) {
        let model = ingest::read_depth_map(&depth_map_path(model_dir, depth_ref))?;
        let truth = ingest::read_depth_map(&depth_map_path(truth_dir, depth_ref))?;
        let calibrated = ingest::DepthMap::new(
            model.width(),
            model.height(),
            model.values().iter().map(|v| fit.apply(*v).max(0.0)).collect(),
        )?;
        sums[0] += crate::depthmetrics::loss_depth(&truth, &calibrated)?;
        sums[1] += crate::depthmetrics::loss_grad(&truth, &calibrated)?;
        sums[2] += crate::depthmetrics::loss_ssim(&truth, &calibrated, config.ssim_mode)?;
        sums[3] += crate::depthmetrics::loss_silog(&truth, &calibrated)?;
        count += 1;
    }
    let n = count as f64;
    Ok(DepthQualityReport::new(
        fit.rmse_m,
        sums[0] / n,
        sums[1] / n,
        sums[2] / n,
        sums[3] / n,
    ))
}

// ---------------------------------------------------------------------------
// extract
// ---------------------------------------------------------------------------

/// Parse a `frame_index,v_rel` override file.
pub fn read_flow(path: &Path) -> Result<BTreeMap<u64, f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read flow file {}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let (idx, v) = line
            .split_once(',')
            .ok_or_else(|| Error::Format(format!("line {}: expected frame_index,v_rel", i + 1)))?;
        let idx: u64 =
            idx.parse().map_err(|_| Error::Format(format!("line {}: bad frame index", i + 1)))?;
        let v: f64 =
            v.parse().map_err(|_| Error::Format(format!("line {}: bad velocity", i + 1)))?;
        map.insert(idx, v);
    }
    Ok(map)
}

/// Extract the following series for one resolved drive.
pub fn extract_drive(
    drive: &DriveInput,
    fit: &CalibrationFit,
    config: &PipelineConfig,
    flow: Option<&BTreeMap<u64, f64>>,
) -> Result<(DriveManifest, FollowingSeries, String)> {
    let manifest = ingest::read_manifest(&drive.manifest)?;
    let frames = ingest::read_frames(&drive.frames, &manifest)?;
    let tri = LaneTriangle::from_image(
        manifest.image_width,
        manifest.image_height,
        config.left_factor,
        config.right_factor,
    )?;
    let mut track = build_track(&frames, &tri);
    let by_index: BTreeMap<u64, &FrameRecord> =
        frames.iter().map(|f| (f.frame_index, f)).collect();
    for entry in &mut track.entries {
        let frame = by_index[&entry.frame_index];
        if let Some(depth_ref) = &frame.depth_ref {
            let map = ingest::read_depth_map(&depth_map_path(&drive.depth_dir, depth_ref))?;
            entry.distance_m = Some(bbox_distance(&map, &entry.detection, fit)?);
        }
    }
    let series =
        build_following_series(&track, &frames, &manifest, &config.series_params(), flow)?;
    if series.is_empty() {
        warn!("drive {}: no leading vehicle in any frame", manifest.drive_id);
    }
    Ok((manifest, series, serialize_track(&track)))
}

/// Run extraction over every configured drive. Failed drives are reported
/// and skipped; any failure yields [`CmdStatus::Partial`].
pub fn cmd_extract(config: &PipelineConfig) -> Result<CmdStatus> {
    let drives = resolve_drives(config)?;
    let calibration_path =
        config.calibration.clone().unwrap_or_else(|| config.out.join("calibration.txt"));
    let fit = read_calibration(&calibration_path)?;
    let flow = match &config.flow {
        Some(path) => Some(read_flow(path)?),
        None => None,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    let results: Vec<(String, Result<()>)> = pool.install(|| {
        use rayon::prelude::*;
        drives
            .par_iter()
            .map(|drive| {
                let label = drive.manifest.display().to_string();
                let run = || -> Result<()> {
                    let (manifest, series, track_text) =
                        extract_drive(drive, &fit, config, flow.as_ref())?;
                    let dir = config.out.join(&manifest.drive_id);
                    write_atomic(&dir.join("series.csv"), serialize_series(&series).as_bytes())?;
                    write_atomic(&dir.join("track.csv"), track_text.as_bytes())?;
                    Ok(())
                };
                (label, run())
            })
            .collect()
    });

    let mut failures = 0;
    for (label, result) in &results {
        match result {
            Ok(()) => info!("extracted {label}"),
            Err(e) => {
                warn!("drive {label} failed: {e}");
                failures += 1;
            }
        }
    }
    Ok(if failures == 0 { CmdStatus::Ok } else { CmdStatus::Partial })
}

// ---------------------------------------------------------------------------
// groups
// ---------------------------------------------------------------------------

/// Load `(label, series_path)` pairs into group samples of following
/// distance.
pub fn load_group_samples(pairs: &[(String, PathBuf)]) -> Result<Vec<GroupSample>> {
    pairs
        .iter()
        .map(|(label, path)| {
            let series = crate::kinematics::read_series(path)?;
            GroupSample::new(ingest::DriverGroup::parse(label)?, series.d)
        })
        .collect()
}

/// Compare the labeled groups and write the table plus per-group density
/// grids. Returns the serialized table.
pub fn cmd_groups(config: &PipelineConfig, pairs: &[(String, PathBuf)]) -> Result<String> {
    let pairs: Vec<(String, PathBuf)> = if pairs.is_empty() {
        config.series.iter().map(|(k, v)| (k.clone(), v.clone())).collect()
    } else {
        pairs.to_vec()
    };
    if pairs.len() < 2 {
        return Err(Error::Config(format!(
            "group comparison needs at least 2 labeled series, got {}",
            pairs.len()
        )));
    }
    let samples = load_group_samples(&pairs)?;
    let rows = compare_groups(&samples, config.alpha)?;
    let table = serialize_comparisons(&rows);
    let mut outputs = vec![(config.out.join("ttest_table.csv"), table.clone())];
    for sample in &samples {
        let grid = density_estimate(sample, Bandwidth::Auto)?;
        outputs.push((
            config.out.join(format!("density_{}.csv", sample.group.as_str())),
            serialize_density(&grid),
        ));
    }
    write_all_atomic(&outputs)?;
    Ok(table)
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

/// Which acceleration the boosted model predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainTarget {
    Ego,
    LeadVehicle,
}

impl TrainTarget {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ego" => Ok(TrainTarget::Ego),
            "lv" => Ok(TrainTarget::LeadVehicle),
            other => Err(Error::Config(format!("target must be ego or lv, got {other:?}"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            TrainTarget::Ego => "ego",
            TrainTarget::LeadVehicle => "lv",
        }
    }
}

pub const FEATURE_DISTANCE: &str = "car_following_distance_m";
pub const FEATURE_V_REL: &str = "relative_velocity_mps";
pub const FEATURE_EGO_ACCEL: &str = "ego_accel_mps2";

/// Assemble the regression dataset for a target from following series.
/// Rows missing a needed value are skipped.
pub fn assemble_dataset(series: &[FollowingSeries], target: TrainTarget) -> Result<Dataset> {
    let mut distance = Vec::new();
    let mut v_rel = Vec::new();
    let mut ego_accel = Vec::new();
    let mut y = Vec::new();
    for s in series {
        for i in 0..s.len() {
            match target {
                TrainTarget::Ego => {
                    let Some(a_ego) = s.a_ego[i] else { continue };
                    distance.push(s.d[i]);
                    v_rel.push(s.v_rel[i]);
                    y.push(a_ego);
                }
                TrainTarget::LeadVehicle => {
                    let (Some(a_ego), Some(a_lv)) = (s.a_ego[i], s.a_lv[i]) else { continue };
                    distance.push(s.d[i]);
                    v_rel.push(s.v_rel[i]);
                    ego_accel.push(a_ego);
                    y.push(a_lv);
                }
            }
        }
    }
    match target {
        TrainTarget::Ego => Dataset::new(
            vec![FEATURE_DISTANCE.into(), FEATURE_V_REL.into()],
            vec![distance, v_rel],
            y,
        ),
        TrainTarget::LeadVehicle => Dataset::new(
            vec![FEATURE_DISTANCE.into(), FEATURE_V_REL.into(), FEATURE_EGO_ACCEL.into()],
            vec![distance, v_rel, ego_accel],
            y,
        ),
    }
}

/// Result of the train subcommand.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: gbt::BoostedModel,
    pub rmse: f64,
    pub n_train: usize,
    pub n_test: usize,
}

pub fn cmd_train(
    config: &PipelineConfig,
    target: TrainTarget,
    series_paths: &[PathBuf],
) -> Result<TrainOutcome> {
    let paths: Vec<PathBuf> = if series_paths.is_empty() {
        config.series.values().cloned().collect()
    } else {
        series_paths.to_vec()
    };
    if paths.is_empty() {
        return Err(Error::Config("no series files to train on".into()));
    }
    let series: Vec<FollowingSeries> = paths
        .iter()
        .map(|p| crate::kinematics::read_series(p))
        .collect::<Result<_>>()?;
    let ds = assemble_dataset(&series, target)?;
    let (train_set, test_set) = gbt::split_dataset(
        &ds,
        &SplitSpec { train_fraction: config.train_fraction, seed: config.seed },
    )?;
    let model = gbt::train(&train_set, &config.gbt)?;
    let rmse = gbt::evaluate(&model, &test_set)?;

    let tag = target.as_str();
    let mut importance = String::new();
    for (feature, gain) in model.feature_importance() {
        let _ = writeln!(importance, "{feature},{gain}");
    }
    let metrics = format!(
        "rmse={rmse}\nn_train={}\nn_test={}\nrounds={}\nlearning_rate={}\nmax_depth={}\n",
        train_set.n_rows(),
        test_set.n_rows(),
        config.gbt.rounds,
        config.gbt.learning_rate,
        config.gbt.max_depth,
    );
    write_all_atomic(&[
        (config.out.join(format!("model_{tag}.txt")), gbt::serialize_model(&model)),
        (config.out.join(format!("importance_{tag}.csv")), importance),
        (config.out.join(format!("metrics_{tag}.txt")), metrics),
    ])?;
    Ok(TrainOutcome { model, rmse, n_train: train_set.n_rows(), n_test: test_set.n_rows() })
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

/// Render the scenario into `out/<drive_id>/`, replacing any previous
/// render of the same drive atomically.
pub fn cmd_simulate(config: &PipelineConfig, scenario_path: &Path) -> Result<PathBuf> {
    let scenario = synth::read_scenario(scenario_path)?;
    let drive = synth::render_drive(&scenario, config.seed)?;
    let final_dir = config.out.join(&scenario.drive_id);
    let tmp_dir = config.out.join(format!(".tmp-{}", scenario.drive_id));
    if tmp_dir.exists() {
        std::fs::remove_dir_all(&tmp_dir)?;
    }
    std::fs::create_dir_all(&tmp_dir)?;
    synth::write_drive(&tmp_dir, &drive)?;
    if final_dir.exists() {
        std::fs::remove_dir_all(&final_dir)?;
    }
    std::fs::rename(&tmp_dir, &final_dir)?;
    Ok(final_dir)
}
