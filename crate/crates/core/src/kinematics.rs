//! Relative velocity and leading-vehicle acceleration from the distance track.
//!
//! The leading vehicle's acceleration is recovered from the differenced
//! equation of motion: over one frame step of length `t`, the gap change
//! satisfies `Δs = Δu·t + ½·Δa·t²` with `Δa` the ego-minus-leading
//! acceleration difference, so `a_lv = a_ego − 2(Δs − Δu·t)/t²`. With `Δu`
//! taken as the relative velocity at the end of the step this inverts the
//! kinematics exactly on constant-acceleration data.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::ingest::{DriveManifest, FrameRecord};
use crate::leadvehicle::LeadTrack;

/// Default centered moving-average window (frames) for all smoothing stages.
pub const DEFAULT_SMOOTH_WINDOW: usize = 5;

/// Which quantity plays the role of `Δs` in the differenced equation of
/// motion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DeltaSMode {
    /// Per-step change in following distance. This is the dimensionally
    /// consistent differencing of `s = ut + ½at²` and the default.
    #[default]
    Change,
    /// The absolute following distance, for comparison runs.
    Absolute,
}

impl DeltaSMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "change" => Ok(DeltaSMode::Change),
            "absolute" => Ok(DeltaSMode::Absolute),
            other => Err(Error::Config(format!("unknown delta_s mode {other:?}"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            DeltaSMode::Change => "change",
            DeltaSMode::Absolute => "absolute",
        }
    }
}

/// Tuning for [`build_following_series`].
#[derive(Debug, Clone, Copy)]
pub struct SeriesParams {
    /// Odd centered moving-average window applied to the distance series
    /// before differencing, to the relative velocity, and to the recovered
    /// acceleration. 1 disables smoothing.
    pub smooth_window: usize,
    pub delta_s_mode: DeltaSMode,
}

impl Default for SeriesParams {
    fn default() -> Self {
        SeriesParams { smooth_window: DEFAULT_SMOOTH_WINDOW, delta_s_mode: DeltaSMode::Change }
    }
}

fn check_window(window: usize) -> Result<()> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::Config(format!("smoothing window {window} must be odd and positive")));
    }
    Ok(())
}

/// Centered moving average where the full window fits; samples closer than
/// half a window to either end are copied through unchanged, so linear
/// series pass through exactly.
pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    debug_assert!(window % 2 == 1);
    let k = window / 2;
    if window <= 1 || xs.len() < window {
        return xs.to_vec();
    }
    (0..xs.len())
        .map(|i| {
            if i < k || i + k >= xs.len() {
                xs[i]
            } else {
                xs[i - k..=i + k].iter().sum::<f64>() / window as f64
            }
        })
        .collect()
}

/// Differentiate the distance series over time: central differences at
/// interior points, second-order one-sided differences at the endpoints,
/// then a centered moving average of `window` samples.
pub fn relative_velocity(d: &[f64], t: &[f64], window: usize) -> Result<Vec<f64>> {
    check_window(window)?;
    let n = d.len();
    if n != t.len() {
        return Err(Error::Data(format!("length mismatch: {} vs {}", n, t.len())));
    }
    if n < 2 {
        return Err(Error::Data(format!("need at least 2 samples, got {n}")));
    }
    for w in t.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Data(format!("time must be strictly increasing ({} then {})", w[0], w[1])));
        }
    }
    let mut v = vec![0.0; n];
    for i in 1..n - 1 {
        v[i] = (d[i + 1] - d[i - 1]) / (t[i + 1] - t[i - 1]);
    }
    if n == 2 {
        let slope = (d[1] - d[0]) / (t[1] - t[0]);
        v[0] = slope;
        v[1] = slope;
    } else {
        v[0] = one_sided_derivative(t[0], (t[0], d[0]), (t[1], d[1]), (t[2], d[2]));
        v[n - 1] = one_sided_derivative(
            t[n - 1],
            (t[n - 1], d[n - 1]),
            (t[n - 2], d[n - 2]),
            (t[n - 3], d[n - 3]),
        );
    }
    Ok(moving_average(&v, window))
}

/// Derivative of the quadratic through three points, evaluated at `x`.
fn one_sided_derivative(x: f64, p0: (f64, f64), p1: (f64, f64), p2: (f64, f64)) -> f64 {
    let (x0, y0) = p0;
    let (x1, y1) = p1;
    let (x2, y2) = p2;
    y0 * (2.0 * x - x1 - x2) / ((x0 - x1) * (x0 - x2))
        + y1 * (2.0 * x - x0 - x2) / ((x1 - x0) * (x1 - x2))
        + y2 * (2.0 * x - x0 - x1) / ((x2 - x0) * (x2 - x1))
}

/// Leading-vehicle acceleration for one step: `Δa = 2(Δs − Δu·t)/t²`,
/// `a_lv = a_ego − Δa`.
pub fn lv_acceleration(delta_s: f64, delta_u: f64, a_ego: f64, t_step: f64) -> Result<f64> {
    if !(t_step.is_finite() && t_step > 0.0) {
        return Err(Error::Domain(format!("t_step {t_step} must be positive")));
    }
    let delta_a = 2.0 * (delta_s - delta_u * t_step) / (t_step * t_step);
    Ok(a_ego - delta_a)
}

/// Time-indexed car-following kinematics for one drive.
///
/// All arrays share one length; `t` is strictly increasing and may jump
/// across track gaps. `v_rel` is positive when the gap opens. Absent ego or
/// leading-vehicle accelerations stay `None`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FollowingSeries {
    pub t: Vec<f64>,
    pub d: Vec<f64>,
    pub v_rel: Vec<f64>,
    pub a_ego: Vec<Option<f64>>,
    pub a_lv: Vec<Option<f64>>,
}

impl FollowingSeries {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.t.len();
        if self.d.len() != n
            || self.v_rel.len() != n
            || self.a_ego.len() != n
            || self.a_lv.len() != n
        {
            return Err(Error::Data("series arrays must share one length".into()));
        }
        for w in self.t.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Data(format!(
                    "series time must be strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        if let Some(bad) = self.d.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
            return Err(Error::Data(format!("following distance {bad} must be positive")));
        }
        Ok(())
    }
}

/// Assemble the kinematic series from a calibrated track.
///
/// Each contiguous track run (consecutive frames with a calibrated
/// distance) is processed independently: the distance is smoothed, then
/// differentiated into `v_rel`, and each step's `a_lv` comes from
/// [`lv_acceleration`] with the step-end relative velocity and ego
/// acceleration. The recovered acceleration is smoothed over present
/// samples but an absent step (run start, missing ego telemetry) stays
/// absent. Entries in `flow_override` replace the differentiated `v_rel`
/// on their frames.
pub fn build_following_series(
    track: &LeadTrack,
    frames: &[FrameRecord],
    manifest: &DriveManifest,
    params: &SeriesParams,
    flow_override: Option<&BTreeMap<u64, f64>>,
) -> Result<FollowingSeries> {
    manifest.validate()?;
    check_window(params.smooth_window)?;
    let by_index: BTreeMap<u64, &FrameRecord> =
        frames.iter().map(|f| (f.frame_index, f)).collect();

    let mut series = FollowingSeries::default();
    for seg in &track.segments {
        let entries = &track.entries[seg.clone()];
        // split the segment at entries with no calibrated distance
        let mut run: Vec<(u64, f64)> = Vec::new();
        let mut runs: Vec<Vec<(u64, f64)>> = Vec::new();
        for e in entries {
            match e.distance_m {
                Some(d) => run.push((e.frame_index, d)),
                None => {
                    if !run.is_empty() {
                        runs.push(std::mem::take(&mut run));
                    }
                }
            }
        }
        if !run.is_empty() {
            runs.push(run);
        }
        for run in runs {
            append_run(&mut series, &run, &by_index, params, flow_override)?;
        }
    }
    series.validate()?;
    Ok(series)
}

fn append_run(
    series: &mut FollowingSeries,
    run: &[(u64, f64)],
    by_index: &BTreeMap<u64, &FrameRecord>,
    params: &SeriesParams,
    flow_override: Option<&BTreeMap<u64, f64>>,
) -> Result<()> {
    let w = params.smooth_window;
    let mut t = Vec::with_capacity(run.len());
    let mut a_ego = Vec::with_capacity(run.len());
    for (idx, _) in run {
        let frame = by_index
            .get(idx)
            .ok_or_else(|| Error::Data(format!("track references unknown frame {idx}")))?;
        t.push(frame.timestamp_s);
        a_ego.push(frame.ego_accel_mps2);
    }
    let d: Vec<f64> = run.iter().map(|(_, d)| *d).collect();

    if run.len() == 1 {
        series.t.push(t[0]);
        series.d.push(d[0]);
        series.v_rel.push(0.0);
        series.a_ego.push(a_ego[0]);
        series.a_lv.push(None);
        return Ok(());
    }

    let d_smooth = moving_average(&d, w);
    let mut v = relative_velocity(&d_smooth, &t, w)?;
    if let Some(flow) = flow_override {
        for (i, (idx, _)) in run.iter().enumerate() {
            if let Some(fv) = flow.get(idx) {
                v[i] = *fv;
            }
        }
    }

    let mut a_raw: Vec<Option<f64>> = vec![None; run.len()];
    for i in 1..run.len() {
        let Some(ego) = a_ego[i] else { continue };
        let t_step = t[i] - t[i - 1];
        let delta_s = match params.delta_s_mode {
            DeltaSMode::Change => d_smooth[i] - d_smooth[i - 1],
            DeltaSMode::Absolute => d_smooth[i],
        };
        a_raw[i] = Some(lv_acceleration(delta_s, v[i], ego, t_step)?);
    }
    let a_lv = smooth_present(&a_raw, w);

    series.t.extend_from_slice(&t);
    series.d.extend_from_slice(&d);
    series.v_rel.extend_from_slice(&v);
    series.a_ego.extend_from_slice(&a_ego);
    series.a_lv.extend(a_lv);
    Ok(())
}

/// Moving average over the present values in each window; absent samples
/// stay absent.
fn smooth_present(xs: &[Option<f64>], window: usize) -> Vec<Option<f64>> {
    if window <= 1 {
        return xs.to_vec();
    }
    let k = window / 2;
    (0..xs.len())
        .map(|i| {
            xs[i]?;
            let lo = i.saturating_sub(k);
            let hi = (i + k + 1).min(xs.len());
            let present: Vec<f64> = xs[lo..hi].iter().flatten().copied().collect();
            Some(present.iter().sum::<f64>() / present.len() as f64)
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV export: `t,d,v_rel,a_ego,a_lv` per row, absent values empty.
pub fn serialize_series(s: &FollowingSeries) -> String {
    let mut out = String::new();
    for i in 0..s.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            s.t[i],
            s.d[i],
            s.v_rel[i],
            fmt_opt(s.a_ego[i]),
            fmt_opt(s.a_lv[i])
        );
    }
    out
}

pub fn parse_series(text: &str) -> Result<FollowingSeries> {
    let mut s = FollowingSeries::default();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Format(format!(
                "line {}: expected 5 fields, got {}",
                i + 1,
                fields.len()
            )));
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Format(format!("line {}: bad {what} {s:?}", i + 1)))
        };
        let opt = |s: &str, what: &str| -> Result<Option<f64>> {
            if s.is_empty() { Ok(None) } else { num(s, what).map(Some) }
        };
        s.t.push(num(fields[0], "t")?);
        s.d.push(num(fields[1], "d")?);
        s.v_rel.push(num(fields[2], "v_rel")?);
        s.a_ego.push(opt(fields[3], "a_ego")?);
        s.a_lv.push(opt(fields[4], "a_lv")?);
    }
    s.validate()?;
    Ok(s)
}

pub fn write_series(path: &std::path::Path, s: &FollowingSeries) -> Result<()> {
    std::fs::write(path, serialize_series(s))?;
    Ok(())
}

pub fn read_series(path: &std::path::Path) -> Result<FollowingSeries> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    parse_series(&text)
}
