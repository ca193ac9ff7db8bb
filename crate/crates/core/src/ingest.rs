//! Parsers and writers for every artifact the pipeline consumes or emits.
//!
//! All formats are line- or byte-exact: for any artifact produced by the
//! writers here, parse followed by serialize reproduces the input bytes.
//! Everything downstream consumes only the types in this module; parsed
//! values are immutable after construction.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

/// Magic bytes opening every depth-map raster file.
pub const DEPTH_MAGIC: &[u8; 4] = b"DMAP";

/// Object classes emitted by the upstream detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClassLabel {
    Car,
    Truck,
    TrafficSign,
    TrafficSignal,
}

impl ClassLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            ClassLabel::Car => "car",
            ClassLabel::Truck => "truck",
            ClassLabel::TrafficSign => "traffic_sign",
            ClassLabel::TrafficSignal => "traffic_signal",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "car" => Ok(ClassLabel::Car),
            "truck" => Ok(ClassLabel::Truck),
            "traffic_sign" => Ok(ClassLabel::TrafficSign),
            "traffic_signal" => Ok(ClassLabel::TrafficSignal),
            other => Err(Error::Format(format!("unknown class label {other:?}"))),
        }
    }

    /// Vehicles are the only classes eligible to lead.
    pub fn is_vehicle(&self) -> bool {
        matches!(self, ClassLabel::Car | ClassLabel::Truck)
    }
}

/// Axis-aligned bounding box in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let b = BBox { x_min, y_min, x_max, y_max };
        b.validate()?;
        Ok(b)
    }

    fn validate(&self) -> Result<()> {
        let vals = [self.x_min, self.y_min, self.x_max, self.y_max];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("bbox coordinate is not finite".into()));
        }
        if self.x_min >= self.x_max || self.y_min >= self.y_max {
            return Err(Error::Data(format!(
                "degenerate bbox ({}, {}, {}, {})",
                self.x_min, self.y_min, self.x_max, self.y_max
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    fn within_image(&self, width: u32, height: u32) -> bool {
        self.x_min >= 0.0
            && self.y_min >= 0.0
            && self.x_max <= width as f64
            && self.y_max <= height as f64
    }
}

/// One detector output on one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub class_label: ClassLabel,
    pub bbox: BBox,
    pub confidence: f64,
}

impl Detection {
    pub fn new(class_label: ClassLabel, bbox: BBox, confidence: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::Data(format!(
                "confidence {confidence} outside [0, 1]"
            )));
        }
        bbox.validate()?;
        Ok(Detection { class_label, bbox, confidence })
    }
}

/// One video frame's worth of upstream outputs plus ego telemetry.
///
/// Missing telemetry stays `None` all the way through the pipeline; it is
/// never coerced to zero because zero acceleration is itself a measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame_index: u64,
    pub timestamp_s: f64,
    pub detections: Vec<Detection>,
    pub depth_ref: Option<String>,
    pub ego_speed_mps: Option<f64>,
    pub ego_accel_mps2: Option<f64>,
}

/// Single-channel distance raster. Values are model units before
/// calibration and meters after; the on-disk format stores 32-bit floats,
/// so file round trips quantize to f32 precision.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: u32, height: u32, values: Vec<f64>) -> Result<Self> {
        if values.len() != width as usize * height as usize {
            return Err(Error::Shape(format!(
                "depth map {}x{} expects {} values, got {}",
                width,
                height,
                width as usize * height as usize,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Data(format!("depth value {bad} is not a finite non-negative number")));
        }
        Ok(DepthMap { width, height, values })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at column `u`, row `v`.
    pub fn at(&self, u: u32, v: u32) -> f64 {
        debug_assert!(u < self.width && v < self.height);
        self.values[v as usize * self.width as usize + u as usize]
    }

    pub fn same_shape(&self, other: &DepthMap) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Ground-truth distance at a single pixel of a single frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarSample {
    pub frame_index: u64,
    pub u: u32,
    pub v: u32,
    pub true_distance_m: f64,
}

/// Demographic group of the instrumented driver.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DriverGroup {
    ElderlyWoman,
    ElderlyMan,
    YoungMan1,
    YoungMan2,
    Other(String),
}

impl DriverGroup {
    pub fn as_str(&self) -> &str {
        match self {
            DriverGroup::ElderlyWoman => "elderly_woman",
            DriverGroup::ElderlyMan => "elderly_man",
            DriverGroup::YoungMan1 => "young_man_1",
            DriverGroup::YoungMan2 => "young_man_2",
            DriverGroup::Other(tag) => tag,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "elderly_woman" => Ok(DriverGroup::ElderlyWoman),
            "elderly_man" => Ok(DriverGroup::ElderlyMan),
            "young_man_1" => Ok(DriverGroup::YoungMan1),
            "young_man_2" => Ok(DriverGroup::YoungMan2),
            tag => {
                if tag.is_empty() || tag.contains(',') || tag.contains('\n') || tag.contains('=') {
                    Err(Error::Format(format!("invalid driver group tag {tag:?}")))
                } else {
                    Ok(DriverGroup::Other(tag.to_string()))
                }
            }
        }
    }

    pub fn is_elderly(&self) -> bool {
        matches!(self, DriverGroup::ElderlyWoman | DriverGroup::ElderlyMan)
    }

    pub fn is_young(&self) -> bool {
        matches!(self, DriverGroup::YoungMan1 | DriverGroup::YoungMan2)
    }
}

/// Per-drive metadata required to interpret the frame stream.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveManifest {
    pub drive_id: String,
    pub driver_group: DriverGroup,
    pub image_width: u32,
    pub image_height: u32,
    pub frame_rate_hz: f64,
}

impl DriveManifest {
    pub fn validate(&self) -> Result<()> {
        if self.image_width == 0 || self.image_height == 0 {
            return Err(Error::Data("image dimensions must be positive".into()));
        }
        if !(self.frame_rate_hz.is_finite() && self.frame_rate_hz > 0.0) {
            return Err(Error::Data(format!(
                "frame_rate_hz {} must be positive",
                self.frame_rate_hz
            )));
        }
        if self.drive_id.is_empty() || self.drive_id.contains(['\n', '=', ',']) {
            return Err(Error::Data(format!("invalid drive_id {:?}", self.drive_id)));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Depth map binary raster
// ---------------------------------------------------------------------------

/// Read a `DMAP` raster: magic, u32 LE width, u32 LE height, then
/// width*height f32 LE values, row-major, top row first.
pub fn read_depth_map(path: &Path) -> Result<DepthMap> {
    let file = File::open(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let mut rdr = BufReader::new(file);
    read_depth_map_from(&mut rdr)
}

pub fn read_depth_map_from<R: Read>(rdr: &mut R) -> Result<DepthMap> {
    let mut magic = [0u8; 4];
    rdr.read_exact(&mut magic)
        .map_err(|_| Error::Format("depth map truncated before magic".into()))?;
    if &magic != DEPTH_MAGIC {
        return Err(Error::Format(format!("bad depth map magic {magic:?}")));
    }
    let width = rdr
        .read_u32::<LittleEndian>()
        .map_err(|_| Error::Format("depth map truncated in header".into()))?;
    let height = rdr
        .read_u32::<LittleEndian>()
        .map_err(|_| Error::Format("depth map truncated in header".into()))?;
    let n = width as usize * height as usize;
    let mut raw = vec![0f32; n];
    rdr.read_f32_into::<LittleEndian>(&mut raw)
        .map_err(|_| Error::Format(format!("depth map payload shorter than {n} values")))?;
    let mut trailing = [0u8; 1];
    match rdr.read(&mut trailing) {
        Ok(0) => {}
        Ok(_) => return Err(Error::Format("trailing bytes after depth map payload".into())),
        Err(e) => return Err(Error::Io(e)),
    }
    DepthMap::new(width, height, raw.into_iter().map(f64::from).collect())
}

pub fn write_depth_map(path: &Path, map: &DepthMap) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_depth_map_to(&mut w, map)?;
    w.flush()?;
    Ok(())
}

pub fn write_depth_map_to<W: Write>(w: &mut W, map: &DepthMap) -> Result<()> {
    w.write_all(DEPTH_MAGIC)?;
    w.write_u32::<LittleEndian>(map.width)?;
    w.write_u32::<LittleEndian>(map.height)?;
    for v in &map.values {
        w.write_f32::<LittleEndian>(*v as f32)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Frame record text format
// ---------------------------------------------------------------------------

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    let v: f64 = s
        .parse()
        .map_err(|_| Error::Format(format!("cannot parse {what} from {s:?}")))?;
    if !v.is_finite() {
        return Err(Error::Data(format!("{what} {v} is not finite")));
    }
    Ok(v)
}

fn parse_opt_f64(s: &str, what: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_f64(s, what).map(Some)
    }
}

fn serialize_detection(d: &Detection, out: &mut String) {
    let _ = write!(
        out,
        "{}:{}:{}:{}:{}:{}",
        d.class_label.as_str(),
        d.confidence,
        d.bbox.x_min,
        d.bbox.y_min,
        d.bbox.x_max,
        d.bbox.y_max
    );
}

fn parse_detection(s: &str) -> Result<Detection> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 6 {
        return Err(Error::Format(format!(
            "detection group {s:?} must have 6 colon-separated fields"
        )));
    }
    let class_label = ClassLabel::parse(parts[0])?;
    let confidence = parse_f64(parts[1], "confidence")?;
    let bbox = BBox::new(
        parse_f64(parts[2], "x_min")?,
        parse_f64(parts[3], "y_min")?,
        parse_f64(parts[4], "x_max")?,
        parse_f64(parts[5], "y_max")?,
    )?;
    Detection::new(class_label, bbox, confidence)
}

/// One line per frame: `frame_index,timestamp_s,ego_speed,ego_accel,depth_ref,`
/// followed by semicolon-separated detection groups in the sixth field.
pub fn serialize_frame(rec: &FrameRecord) -> String {
    let mut line = format!(
        "{},{},{},{},{},",
        rec.frame_index,
        rec.timestamp_s,
        fmt_opt(rec.ego_speed_mps),
        fmt_opt(rec.ego_accel_mps2),
        rec.depth_ref.as_deref().unwrap_or("")
    );
    for (i, det) in rec.detections.iter().enumerate() {
        if i > 0 {
            line.push(';');
        }
        serialize_detection(det, &mut line);
    }
    line
}

fn parse_frame_line(line: &str, lineno: usize) -> Result<FrameRecord> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 6 {
        return Err(Error::Format(format!(
            "line {lineno}: expected 6 comma-separated fields, got {}",
            fields.len()
        )));
    }
    let frame_index: u64 = fields[0]
        .parse()
        .map_err(|_| Error::Format(format!("line {lineno}: bad frame_index {:?}", fields[0])))?;
    let timestamp_s = parse_f64(fields[1], "timestamp_s")?;
    let ego_speed_mps = parse_opt_f64(fields[2], "ego_speed_mps")?;
    let ego_accel_mps2 = parse_opt_f64(fields[3], "ego_accel_mps2")?;
    let depth_ref = if fields[4].is_empty() {
        None
    } else {
        if fields[4].contains([':', ';', '/', '\\']) {
            return Err(Error::Format(format!(
                "line {lineno}: invalid depth_ref {:?}",
                fields[4]
            )));
        }
        Some(fields[4].to_string())
    };
    let mut detections = Vec::new();
    if !fields[5].is_empty() {
        for group in fields[5].split(';') {
            detections.push(parse_detection(group).map_err(|e| match e {
                Error::Format(m) => Error::Format(format!("line {lineno}: {m}")),
                other => other,
            })?);
        }
    }
    Ok(FrameRecord {
        frame_index,
        timestamp_s,
        detections,
        depth_ref,
        ego_speed_mps,
        ego_accel_mps2,
    })
}

/// Parse a drive's frame stream and enforce the per-drive invariants:
/// strictly increasing frame indices and timestamps, every bbox inside the
/// image. A violated invariant aborts the parse; no record is ever dropped
/// silently.
pub fn read_frames(path: &Path, manifest: &DriveManifest) -> Result<Vec<FrameRecord>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    parse_frames(&text, manifest)
}

pub fn parse_frames(text: &str, manifest: &DriveManifest) -> Result<Vec<FrameRecord>> {
    manifest.validate()?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let rec = parse_frame_line(line, i + 1)?;
        for det in &rec.detections {
            if !det.bbox.within_image(manifest.image_width, manifest.image_height) {
                return Err(Error::Data(format!(
                    "line {}: bbox ({}, {}, {}, {}) outside {}x{} image",
                    i + 1,
                    det.bbox.x_min,
                    det.bbox.y_min,
                    det.bbox.x_max,
                    det.bbox.y_max,
                    manifest.image_width,
                    manifest.image_height
                )));
            }
        }
        if let Some(prev) = records.last() {
            let prev: &FrameRecord = prev;
            if rec.frame_index <= prev.frame_index {
                return Err(Error::Data(format!(
                    "line {}: frame_index {} not increasing (previous {})",
                    i + 1,
                    rec.frame_index,
                    prev.frame_index
                )));
            }
            if rec.timestamp_s <= prev.timestamp_s {
                return Err(Error::Data(format!(
                    "line {}: timestamp {} not increasing (previous {})",
                    i + 1,
                    rec.timestamp_s,
                    prev.timestamp_s
                )));
            }
        }
        records.push(rec);
    }
    Ok(records)
}

pub fn serialize_frames(records: &[FrameRecord]) -> String {
    let mut out = String::new();
    for rec in records {
        out.push_str(&serialize_frame(rec));
        out.push('\n');
    }
    out
}

pub fn write_frames(path: &Path, records: &[FrameRecord]) -> Result<()> {
    std::fs::write(path, serialize_frames(records))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Lidar samples
// ---------------------------------------------------------------------------

pub fn parse_lidar(text: &str, manifest: &DriveManifest) -> Result<Vec<LidarSample>> {
    manifest.validate()?;
    let mut samples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Format(format!(
                "line {}: expected 4 fields, got {}",
                i + 1,
                fields.len()
            )));
        }
        let frame_index: u64 = fields[0]
            .parse()
            .map_err(|_| Error::Format(format!("line {}: bad frame_index", i + 1)))?;
        let u: u32 = fields[1]
            .parse()
            .map_err(|_| Error::Format(format!("line {}: bad pixel u", i + 1)))?;
        let v: u32 = fields[2]
            .parse()
            .map_err(|_| Error::Format(format!("line {}: bad pixel v", i + 1)))?;
        let true_distance_m = parse_f64(fields[3], "true_distance_m")?;
        if true_distance_m <= 0.0 {
            return Err(Error::Data(format!(
                "line {}: true_distance_m {} must be positive",
                i + 1,
                true_distance_m
            )));
        }
        if u >= manifest.image_width || v >= manifest.image_height {
            return Err(Error::Data(format!(
                "line {}: pixel ({u}, {v}) outside {}x{} image",
                i + 1,
                manifest.image_width,
                manifest.image_height
            )));
        }
        samples.push(LidarSample { frame_index, u, v, true_distance_m });
    }
    Ok(samples)
}

pub fn read_lidar(path: &Path, manifest: &DriveManifest) -> Result<Vec<LidarSample>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    parse_lidar(&text, manifest)
}

pub fn serialize_lidar(samples: &[LidarSample]) -> String {
    let mut out = String::new();
    for s in samples {
        let _ = writeln!(out, "{},{},{},{}", s.frame_index, s.u, s.v, s.true_distance_m);
    }
    out
}

pub fn write_lidar(path: &Path, samples: &[LidarSample]) -> Result<()> {
    std::fs::write(path, serialize_lidar(samples))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Drive manifest
// ---------------------------------------------------------------------------

const MANIFEST_KEYS: [&str; 5] = [
    "drive_id",
    "driver_group",
    "image_width",
    "image_height",
    "frame_rate_hz",
];

/// Manifests are key=value lines in a fixed order so that serialization is
/// canonical.
pub fn parse_manifest(text: &str) -> Result<DriveManifest> {
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("line {}: expected key=value", i + 1)))?;
        if i >= MANIFEST_KEYS.len() || key != MANIFEST_KEYS[i] {
            return Err(Error::Format(format!(
                "line {}: expected key {:?}, got {key:?}",
                i + 1,
                MANIFEST_KEYS.get(i).copied().unwrap_or("<none>")
            )));
        }
        values.push(value.to_string());
    }
    if values.len() != MANIFEST_KEYS.len() {
        return Err(Error::Format(format!(
            "manifest has {} of {} required keys",
            values.len(),
            MANIFEST_KEYS.len()
        )));
    }
    let manifest = DriveManifest {
        drive_id: values[0].clone(),
        driver_group: DriverGroup::parse(&values[1])?,
        image_width: values[2]
            .parse()
            .map_err(|_| Error::Format(format!("bad image_width {:?}", values[2])))?,
        image_height: values[3]
            .parse()
            .map_err(|_| Error::Format(format!("bad image_height {:?}", values[3])))?,
        frame_rate_hz: parse_f64(&values[4], "frame_rate_hz")?,
    };
    manifest.validate()?;
    Ok(manifest)
}

pub fn read_manifest(path: &Path) -> Result<DriveManifest> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    parse_manifest(&text)
}

pub fn serialize_manifest(m: &DriveManifest) -> String {
    format!(
        "drive_id={}\ndriver_group={}\nimage_width={}\nimage_height={}\nframe_rate_hz={}\n",
        m.drive_id,
        m.driver_group.as_str(),
        m.image_width,
        m.image_height,
        m.frame_rate_hz
    )
}

pub fn write_manifest(path: &Path, m: &DriveManifest) -> Result<()> {
    m.validate()?;
    std::fs::write(path, serialize_manifest(m))?;
    Ok(())
}
