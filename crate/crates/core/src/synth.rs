//! Synthetic two-vehicle drive generator.
//!
//! Driver profiles are piecewise-constant acceleration schedules with exact
//! closed-form kinematics, rendered into the same artifact formats the
//! ingest module parses: pinhole-scaled bounding boxes, uniform-depth
//! vehicle regions over a far background, lidar samples at the bbox center,
//! and a ground-truth series. Rendering is deterministic per seed; each
//! frame draws from its own derived generator stream.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::ingest::{
    self, BBox, ClassLabel, Detection, DepthMap, DriveManifest, DriverGroup, FrameRecord,
    LidarSample,
};

/// Camera height above the road surface.
pub const CAMERA_HEIGHT_M: f64 = 1.5;
/// Physical width of the rendered leading vehicle.
pub const VEHICLE_WIDTH_M: f64 = 1.8;
/// Physical height of the rendered leading vehicle.
pub const VEHICLE_HEIGHT_M: f64 = 1.5;
/// Depth assigned to every pixel outside the vehicle bbox, so that median
/// aggregation is exercised against background contamination.
pub const BACKGROUND_DEPTH_M: f64 = 80.0;

/// Piecewise-constant acceleration schedule for one vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct DriverProfile {
    /// `(duration_s, acceleration_mps2)` segments, executed in order.
    pub accel_segments: Vec<(f64, f64)>,
    pub initial_speed_mps: f64,
    pub initial_position_m: f64,
}

impl DriverProfile {
    /// Validates durations and checks the speed never drops below zero;
    /// profiles that would reverse are rejected.
    pub fn new(
        accel_segments: Vec<(f64, f64)>,
        initial_speed_mps: f64,
        initial_position_m: f64,
    ) -> Result<Self> {
        if accel_segments.is_empty() {
            return Err(Error::Scenario("profile needs at least one segment".into()));
        }
        if !(initial_speed_mps.is_finite() && initial_speed_mps >= 0.0) {
            return Err(Error::Scenario(format!(
                "initial speed {initial_speed_mps} must be non-negative"
            )));
        }
        if !initial_position_m.is_finite() {
            return Err(Error::Scenario("initial position must be finite".into()));
        }
        let mut v = initial_speed_mps;
        for (dur, a) in &accel_segments {
            if !(dur.is_finite() && *dur > 0.0) || !a.is_finite() {
                return Err(Error::Scenario(format!("bad segment ({dur}, {a})")));
            }
            // speed is linear within a segment, so endpoint checks suffice
            v += a * dur;
            if v < 0.0 {
                return Err(Error::Scenario(format!(
                    "profile reverses: speed reaches {v} m/s"
                )));
            }
        }
        Ok(DriverProfile { accel_segments, initial_speed_mps, initial_position_m })
    }

    pub fn total_duration(&self) -> f64 {
        self.accel_segments.iter().map(|(d, _)| d).sum()
    }

    /// Exact position and velocity at `t` (piecewise quadratic / linear).
    pub fn state_at(&self, t: f64) -> Result<(f64, f64)> {
        if !(t.is_finite() && t >= 0.0) || t > self.total_duration() + 1e-9 {
            return Err(Error::Domain(format!(
                "t={t} outside profile duration {}",
                self.total_duration()
            )));
        }
        let mut pos = self.initial_position_m;
        let mut vel = self.initial_speed_mps;
        let mut remaining = t;
        for (dur, a) in &self.accel_segments {
            let tau = remaining.min(*dur);
            if tau > 0.0 {
                pos += vel * tau + 0.5 * a * tau * tau;
                vel += a * tau;
                remaining -= tau;
            }
            if remaining <= 0.0 {
                break;
            }
        }
        Ok((pos, vel))
    }

    /// Acceleration at `t`, right-continuous at segment boundaries.
    pub fn accel_at(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        let mut elapsed = 0.0;
        for (dur, a) in &self.accel_segments {
            acc = *a;
            elapsed += dur;
            if t < elapsed {
                return *a;
            }
        }
        acc
    }

    /// Segment boundary times, excluding 0 and the total duration.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut elapsed = 0.0;
        for (dur, _) in &self.accel_segments[..self.accel_segments.len() - 1] {
            elapsed += dur;
            out.push(elapsed);
        }
        out
    }
}

/// Closed-form position and velocity series over a time grid.
pub fn integrate(profile: &DriverProfile, t_grid: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut pos = Vec::with_capacity(t_grid.len());
    let mut vel = Vec::with_capacity(t_grid.len());
    for t in t_grid {
        let (p, v) = profile.state_at(*t)?;
        pos.push(p);
        vel.push(v);
    }
    Ok((pos, vel))
}

/// Camera and rendering parameters for a synthetic drive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneConfig {
    pub image_width: u32,
    pub image_height: u32,
    pub focal_px: f64,
    pub frame_rate_hz: f64,
    pub depth_noise_sigma_m: f64,
    pub bbox_jitter_px: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            image_width: 320,
            image_height: 240,
            focal_px: 300.0,
            frame_rate_hz: 10.0,
            depth_noise_sigma_m: 0.0,
            bbox_jitter_px: 0.0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.image_width == 0 || self.image_height == 0 {
            return Err(Error::Scenario("image dimensions must be positive".into()));
        }
        if !(self.focal_px.is_finite() && self.focal_px > 0.0) {
            return Err(Error::Scenario(format!("focal_px {} must be positive", self.focal_px)));
        }
        if !(self.frame_rate_hz.is_finite() && self.frame_rate_hz > 0.0) {
            return Err(Error::Scenario(format!(
                "frame_rate_hz {} must be positive",
                self.frame_rate_hz
            )));
        }
        if !(self.depth_noise_sigma_m.is_finite() && self.depth_noise_sigma_m >= 0.0) {
            return Err(Error::Scenario("depth_noise_sigma_m must be non-negative".into()));
        }
        if !(self.bbox_jitter_px.is_finite() && self.bbox_jitter_px >= 0.0) {
            return Err(Error::Scenario("bbox_jitter_px must be non-negative".into()));
        }
        Ok(())
    }
}

/// Complete description of a synthetic drive.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub drive_id: String,
    pub driver_group: DriverGroup,
    pub scene: SceneConfig,
    pub lead: DriverProfile,
    pub ego: DriverProfile,
}

/// Exact per-frame kinematic ground truth.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    pub t: Vec<f64>,
    pub gap_m: Vec<f64>,
    pub v_rel_mps: Vec<f64>,
    pub a_ego: Vec<f64>,
    pub a_lv: Vec<f64>,
}

/// A rendered drive held in memory before it is written out.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedDrive {
    pub manifest: DriveManifest,
    pub frames: Vec<FrameRecord>,
    /// `(depth_ref, map)` pairs; the maps carry the configured noise.
    pub depth_maps: Vec<(String, DepthMap)>,
    /// Noiseless counterparts of `depth_maps`.
    pub truth_depth_maps: Vec<(String, DepthMap)>,
    pub lidar: Vec<LidarSample>,
    pub truth: GroundTruth,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Independent generator for one frame, derived from the drive seed.
fn frame_rng(seed: u64, frame: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ frame.wrapping_mul(0x2545_F491_4F6C_DD1D)))
}

/// Render a scenario into the ingest artifact set.
///
/// Per frame: the true gap positions a pinhole-scaled bbox centered on the
/// image vertical axis, the depth map is uniform at the gap inside the bbox
/// (plus per-pixel Gaussian noise) over the fixed far background, and one
/// lidar sample at the bbox center carries the exact gap. A bbox that
/// leaves the image or a non-positive gap is a scenario error, never a
/// clamp.
pub fn render_drive(scenario: &Scenario, seed: u64) -> Result<RenderedDrive> {
    scenario.scene.validate()?;
    let scene = &scenario.scene;
    let horizon = scenario.lead.total_duration().min(scenario.ego.total_duration());
    let n_frames = (horizon * scene.frame_rate_hz + 1e-9).floor() as u64 + 1;
    if n_frames < 2 {
        return Err(Error::Scenario("horizon shorter than one frame interval".into()));
    }
    let (w, h) = (scene.image_width, scene.image_height);
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let manifest = DriveManifest {
        drive_id: scenario.drive_id.clone(),
        driver_group: scenario.driver_group.clone(),
        image_width: w,
        image_height: h,
        frame_rate_hz: scene.frame_rate_hz,
    };
    manifest.validate()?;

    let mut out = RenderedDrive {
        manifest,
        frames: Vec::new(),
        depth_maps: Vec::new(),
        truth_depth_maps: Vec::new(),
        lidar: Vec::new(),
        truth: GroundTruth::default(),
    };

    for i in 0..n_frames {
        let t = (i as f64 / scene.frame_rate_hz).min(horizon);
        let (lead_pos, lead_vel) = scenario.lead.state_at(t)?;
        let (ego_pos, ego_vel) = scenario.ego.state_at(t)?;
        let gap = lead_pos - ego_pos;
        if gap <= 0.0 {
            return Err(Error::Scenario(format!(
                "gap {gap} m at t={t}: leading vehicle no longer ahead"
            )));
        }
        let mut rng = frame_rng(seed, i);
        let jitter = |rng: &mut ChaCha8Rng| {
            if scene.bbox_jitter_px > 0.0 {
                rng.random_range(-scene.bbox_jitter_px..scene.bbox_jitter_px)
            } else {
                0.0
            }
        };
        let half_w = scene.focal_px * VEHICLE_WIDTH_M / gap / 2.0;
        let box_h = scene.focal_px * VEHICLE_HEIGHT_M / gap;
        let y_base = cy + scene.focal_px * CAMERA_HEIGHT_M / gap;
        let bbox = BBox::new(
            cx - half_w + jitter(&mut rng),
            y_base - box_h + jitter(&mut rng),
            cx + half_w + jitter(&mut rng),
            y_base + jitter(&mut rng),
        )?;
        if bbox.x_min < 0.0 || bbox.y_min < 0.0 || bbox.x_max > w as f64 || bbox.y_max > h as f64 {
            return Err(Error::Scenario(format!(
                "bbox ({}, {}, {}, {}) exits the {w}x{h} image at t={t}",
                bbox.x_min, bbox.y_min, bbox.x_max, bbox.y_max
            )));
        }

        let noise = if scene.depth_noise_sigma_m > 0.0 {
            Some(Normal::new(0.0, scene.depth_noise_sigma_m).map_err(|e| {
                Error::Scenario(format!("bad noise configuration: {e}"))
            })?)
        } else {
            None
        };
        let c0 = bbox.x_min.floor() as u32;
        let c1 = (bbox.x_max.ceil() as u32).min(w);
        let r0 = bbox.y_min.floor() as u32;
        let r1 = (bbox.y_max.ceil() as u32).min(h);
        let mut noisy = vec![BACKGROUND_DEPTH_M; (w * h) as usize];
        let mut exact = noisy.clone();
        for r in r0..r1 {
            for c in c0..c1 {
                let at = (r * w + c) as usize;
                exact[at] = gap;
                noisy[at] = match &noise {
                    Some(n) => (gap + n.sample(&mut rng)).max(0.0),
                    None => gap,
                };
            }
        }
        let depth_ref = format!("frame_{i:06}");
        out.depth_maps.push((depth_ref.clone(), DepthMap::new(w, h, noisy)?));
        out.truth_depth_maps.push((depth_ref.clone(), DepthMap::new(w, h, exact)?));

        let u = (((bbox.x_min + bbox.x_max) / 2.0).round() as u32).min(w - 1);
        let v = (((bbox.y_min + bbox.y_max) / 2.0).round() as u32).min(h - 1);
        out.lidar.push(LidarSample { frame_index: i, u, v, true_distance_m: gap });

        let a_ego = scenario.ego.accel_at(t);
        out.frames.push(FrameRecord {
            frame_index: i,
            timestamp_s: t,
            detections: vec![Detection::new(ClassLabel::Car, bbox, 0.99)?],
            depth_ref: Some(depth_ref),
            ego_speed_mps: Some(ego_vel),
            ego_accel_mps2: Some(a_ego),
        });
        out.truth.t.push(t);
        out.truth.gap_m.push(gap);
        out.truth.v_rel_mps.push(lead_vel - ego_vel);
        out.truth.a_ego.push(a_ego);
        out.truth.a_lv.push(scenario.lead.accel_at(t));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Ground-truth series format
// ---------------------------------------------------------------------------

pub fn serialize_truth(truth: &GroundTruth) -> String {
    let mut out = String::new();
    for i in 0..truth.t.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            truth.t[i], truth.gap_m[i], truth.v_rel_mps[i], truth.a_ego[i], truth.a_lv[i]
        );
    }
    out
}

pub fn parse_truth(text: &str) -> Result<GroundTruth> {
    let mut truth = GroundTruth::default();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Format(format!(
                "line {}: expected 5 fields, got {}",
                i + 1,
                fields.len()
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Format(format!("line {}: bad number {s:?}", i + 1)))
        };
        truth.t.push(parse(fields[0])?);
        truth.gap_m.push(parse(fields[1])?);
        truth.v_rel_mps.push(parse(fields[2])?);
        truth.a_ego.push(parse(fields[3])?);
        truth.a_lv.push(parse(fields[4])?);
    }
    Ok(truth)
}

// ---------------------------------------------------------------------------
// Scenario file format
// ---------------------------------------------------------------------------

const SCENARIO_KEYS: [&str; 14] = [
    "drive_id",
    "driver_group",
    "image_width",
    "image_height",
    "focal_px",
    "frame_rate_hz",
    "depth_noise_sigma_m",
    "bbox_jitter_px",
    "lead_initial_position_m",
    "lead_initial_speed_mps",
    "lead_segments",
    "ego_initial_position_m",
    "ego_initial_speed_mps",
    "ego_segments",
];

fn parse_segments(s: &str) -> Result<Vec<(f64, f64)>> {
    s.split(',')
        .map(|part| {
            let (dur, acc) = part
                .split_once(':')
                .ok_or_else(|| Error::Format(format!("segment {part:?} must be duration:accel")))?;
            let dur: f64 =
                dur.parse().map_err(|_| Error::Format(format!("bad duration {dur:?}")))?;
            let acc: f64 =
                acc.parse().map_err(|_| Error::Format(format!("bad acceleration {acc:?}")))?;
            Ok((dur, acc))
        })
        .collect()
}

fn fmt_segments(segments: &[(f64, f64)]) -> String {
    segments
        .iter()
        .map(|(d, a)| format!("{d}:{a}"))
        .collect::<Vec<_>>()
        .join(",")
}

/// Scenario files are key=value lines in the fixed [`SCENARIO_KEYS`] order.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("line {}: expected key=value", i + 1)))?;
        if i >= SCENARIO_KEYS.len() || key != SCENARIO_KEYS[i] {
            return Err(Error::Format(format!(
                "line {}: expected key {:?}, got {key:?}",
                i + 1,
                SCENARIO_KEYS.get(i).copied().unwrap_or("<none>")
            )));
        }
        values.push(value.to_string());
    }
    if values.len() != SCENARIO_KEYS.len() {
        return Err(Error::Format(format!(
            "scenario has {} of {} required keys",
            values.len(),
            SCENARIO_KEYS.len()
        )));
    }
    let num = |s: &String, what: &str| -> Result<f64> {
        s.parse().map_err(|_| Error::Format(format!("bad {what} {s:?}")))
    };
    let scene = SceneConfig {
        image_width: values[2]
            .parse()
            .map_err(|_| Error::Format(format!("bad image_width {:?}", values[2])))?,
        image_height: values[3]
            .parse()
            .map_err(|_| Error::Format(format!("bad image_height {:?}", values[3])))?,
        focal_px: num(&values[4], "focal_px")?,
        frame_rate_hz: num(&values[5], "frame_rate_hz")?,
        depth_noise_sigma_m: num(&values[6], "depth_noise_sigma_m")?,
        bbox_jitter_px: num(&values[7], "bbox_jitter_px")?,
    };
    let lead = DriverProfile::new(
        parse_segments(&values[10])?,
        num(&values[9], "lead_initial_speed_mps")?,
        num(&values[8], "lead_initial_position_m")?,
    )?;
    let ego = DriverProfile::new(
        parse_segments(&values[13])?,
        num(&values[12], "ego_initial_speed_mps")?,
        num(&values[11], "ego_initial_position_m")?,
    )?;
    Ok(Scenario {
        drive_id: values[0].clone(),
        driver_group: DriverGroup::parse(&values[1])?,
        scene,
        lead,
        ego,
    })
}

pub fn serialize_scenario(s: &Scenario) -> String {
    format!(
        "drive_id={}\ndriver_group={}\nimage_width={}\nimage_height={}\nfocal_px={}\n\
         frame_rate_hz={}\ndepth_noise_sigma_m={}\nbbox_jitter_px={}\n\
         lead_initial_position_m={}\nlead_initial_speed_mps={}\nlead_segments={}\n\
         ego_initial_position_m={}\nego_initial_speed_mps={}\nego_segments={}\n",
        s.drive_id,
        s.driver_group.as_str(),
        s.scene.image_width,
        s.scene.image_height,
        s.scene.focal_px,
        s.scene.frame_rate_hz,
        s.scene.depth_noise_sigma_m,
        s.scene.bbox_jitter_px,
        s.lead.initial_position_m,
        s.lead.initial_speed_mps,
        fmt_segments(&s.lead.accel_segments),
        s.ego.initial_position_m,
        s.ego.initial_speed_mps,
        fmt_segments(&s.ego.accel_segments),
    )
}

pub fn read_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    parse_scenario(&text)
}

/// Write a rendered drive under `dir`: `manifest.txt`, `frames.csv`,
/// `lidar.csv`, `truth.csv`, and one `DMAP` raster per frame in `depth/`
/// and `truth_depth/`.
pub fn write_drive(dir: &Path, drive: &RenderedDrive) -> Result<()> {
    std::fs::create_dir_all(dir.join("depth"))?;
    std::fs::create_dir_all(dir.join("truth_depth"))?;
    ingest::write_manifest(&dir.join("manifest.txt"), &drive.manifest)?;
    ingest::write_frames(&dir.join("frames.csv"), &drive.frames)?;
    ingest::write_lidar(&dir.join("lidar.csv"), &drive.lidar)?;
    std::fs::write(dir.join("truth.csv"), serialize_truth(&drive.truth))?;
    for (name, map) in &drive.depth_maps {
        ingest::write_depth_map(&dir.join("depth").join(format!("{name}.dmap")), map)?;
    }
    for (name, map) in &drive.truth_depth_maps {
        ingest::write_depth_map(&dir.join("truth_depth").join(format!("{name}.dmap")), map)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depthmetrics::{bbox_distance, CalibrationFit};
    use crate::kinematics::{build_following_series, SeriesParams};
    use crate::leadvehicle::{build_track, LaneTriangle};

    fn steady(speed: f64, pos: f64, duration: f64) -> DriverProfile {
        DriverProfile::new(vec![(duration, 0.0)], speed, pos).unwrap()
    }

    #[test]
    fn integrate_constant_speed() {
        let p = steady(10.0, 0.0, 5.0);
        let grid: Vec<f64> = (0..=50).map(|i| i as f64 * 0.1).collect();
        let (pos, vel) = integrate(&p, &grid).unwrap();
        for (i, t) in grid.iter().enumerate() {
            assert!((pos[i] - 10.0 * t).abs() < 1e-12);
            assert_eq!(vel[i], 10.0);
        }
    }

    #[test]
    fn integrate_single_accel_segment() {
        let p = DriverProfile::new(vec![(3.0, 2.0)], 0.0, 0.0).unwrap();
        let (pos, vel) = integrate(&p, &[3.0]).unwrap();
        assert!((pos[0] - 9.0).abs() < 1e-12);
        assert!((vel[0] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn integrate_rejects_grid_beyond_duration() {
        let p = steady(5.0, 0.0, 2.0);
        assert!(matches!(integrate(&p, &[2.5]), Err(Error::Domain(_))));
    }

    #[test]
    fn integrate_matches_fine_step_numeric_integration() {
        let p = DriverProfile::new(vec![(4.0, 1.5), (3.0, -2.0)], 8.0, 12.0).unwrap();
        let grid: Vec<f64> = (0..=70).map(|i| i as f64 * 0.1).collect();
        let (pos, vel) = integrate(&p, &grid).unwrap();
        // midpoint-evaluated numeric integration at 1e-5 s steps
        let dt = 1e-5;
        let mut x = p.initial_position_m;
        let mut v = p.initial_speed_mps;
        let mut t = 0.0;
        let mut gi = 0;
        while gi < grid.len() {
            while t + dt / 2.0 < grid[gi] {
                let a = p.accel_at(t + dt / 2.0);
                let v_new = v + a * dt;
                x += (v + v_new) / 2.0 * dt;
                v = v_new;
                t += dt;
            }
            assert!((x - pos[gi]).abs() < 1e-9, "t={t}: {x} vs {}", pos[gi]);
            assert!((v - vel[gi]).abs() < 1e-9);
            gi += 1;
        }
    }

    #[test]
    fn profile_rejects_reversing() {
        assert!(DriverProfile::new(vec![(5.0, -3.0)], 10.0, 0.0).is_err());
        assert!(DriverProfile::new(vec![(3.0, -3.0)], 10.0, 0.0).is_ok());
    }

    fn simple_scenario(noise: f64, jitter: f64) -> Scenario {
        Scenario {
            drive_id: "synthetic".into(),
            driver_group: DriverGroup::Other("synthetic".into()),
            scene: SceneConfig {
                depth_noise_sigma_m: noise,
                bbox_jitter_px: jitter,
                ..Default::default()
            },
            // gap opens from 6 m to 12 m over 12 s
            lead: DriverProfile::new(vec![(12.0, 0.0)], 15.5, 6.0).unwrap(),
            ego: steady(15.0, 0.0, 12.0),
        }
    }

    #[test]
    fn render_is_deterministic_per_seed() {
        let scenario = simple_scenario(0.05, 0.5);
        let a = render_drive(&scenario, 9).unwrap();
        let b = render_drive(&scenario, 9).unwrap();
        assert_eq!(a, b);
        let c = render_drive(&scenario, 10).unwrap();
        assert_ne!(a.depth_maps, c.depth_maps);
        assert_eq!(a.truth, c.truth, "ground truth is seed independent");
    }

    #[test]
    fn render_rejects_collision() {
        let scenario = Scenario {
            lead: DriverProfile::new(vec![(12.0, 0.0)], 10.0, 5.0).unwrap(),
            ego: DriverProfile::new(vec![(12.0, 0.0)], 12.0, 0.0).unwrap(),
            ..simple_scenario(0.0, 0.0)
        };
        assert!(matches!(render_drive(&scenario, 1), Err(Error::Scenario(_))));
    }

    #[test]
    fn noiseless_pipeline_recovers_ground_truth() {
        let scenario = simple_scenario(0.0, 0.0);
        let drive = render_drive(&scenario, 3).unwrap();
        let tri = LaneTriangle::with_default_factors(
            drive.manifest.image_width,
            drive.manifest.image_height,
        )
        .unwrap();
        let mut track = build_track(&drive.frames, &tri);
        assert_eq!(track.entries.len(), drive.frames.len(), "vehicle always leads");
        assert_eq!(track.segments.len(), 1);
        let fit = CalibrationFit::identity();
        for (i, entry) in track.entries.iter_mut().enumerate() {
            let map = &drive.depth_maps[i].1;
            entry.distance_m = Some(bbox_distance(map, &entry.detection, &fit).unwrap());
        }
        for (entry, gap) in track.entries.iter().zip(&drive.truth.gap_m) {
            assert!(
                (entry.distance_m.unwrap() - gap).abs() < 1e-9,
                "{} vs {gap}",
                entry.distance_m.unwrap()
            );
        }
        let series = build_following_series(
            &track,
            &drive.frames,
            &drive.manifest,
            &SeriesParams::default(),
            None,
        )
        .unwrap();
        // v_rel is 0.5 m/s throughout
        for (i, v) in series.v_rel.iter().enumerate() {
            assert!((v - 0.5).abs() < 1e-6, "i={i}: {v}");
        }
        // constant speeds: recovered leading-vehicle acceleration is zero
        for a in series.a_lv.iter().flatten() {
            assert!(a.abs() < 1e-6, "a_lv {a}");
        }
    }

    #[test]
    fn bbox_stays_inside_image_for_valid_gaps() {
        let scenario = simple_scenario(0.0, 0.5);
        let drive = render_drive(&scenario, 8).unwrap();
        let (w, h) = (
            drive.manifest.image_width as f64,
            drive.manifest.image_height as f64,
        );
        for f in &drive.frames {
            let b = &f.detections[0].bbox;
            assert!(b.x_min >= 0.0 && b.y_min >= 0.0 && b.x_max <= w && b.y_max <= h);
        }
    }

    #[test]
    fn truth_and_scenario_round_trip() {
        let scenario = simple_scenario(0.05, 0.25);
        let text = serialize_scenario(&scenario);
        let parsed = parse_scenario(&text).unwrap();
        assert_eq!(parsed, scenario);
        assert_eq!(serialize_scenario(&parsed), text);

        let drive = render_drive(&scenario, 4).unwrap();
        let truth_text = serialize_truth(&drive.truth);
        let truth = parse_truth(&truth_text).unwrap();
        assert_eq!(truth, drive.truth);
        assert_eq!(serialize_truth(&truth), truth_text);
    }

    #[test]
    fn lidar_samples_carry_exact_gap() {
        let drive = render_drive(&simple_scenario(0.05, 0.0), 2).unwrap();
        for (s, gap) in drive.lidar.iter().zip(&drive.truth.gap_m) {
            assert_eq!(s.true_distance_m, *gap);
        }
    }
}
