//! Leading-vehicle identification and tracking.
//!
//! A frame's leading vehicle is the nearest car or truck whose bounding-box
//! base corners both fall inside the lane triangle: base vertices at
//! configurable fractions of the image base (0.2 and 0.8 by default) and
//! apex at the image center, which approximates the lane's vanishing point.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::ingest::{BBox, Detection, FrameRecord};

/// Default fraction of the image width for the triangle's left base vertex.
pub const DEFAULT_LEFT_FACTOR: f64 = 0.2;
/// Default fraction of the image width for the triangle's right base vertex.
pub const DEFAULT_RIGHT_FACTOR: f64 = 0.8;

/// Minimum intersection-over-union between successive leading bboxes for
/// them to be linked into the same track segment.
pub const IOU_PERSISTENCE_THRESHOLD: f64 = 0.3;

/// Perspective triangle delimiting the ego lane in image space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneTriangle {
    pub left_base: (f64, f64),
    pub right_base: (f64, f64),
    pub apex: (f64, f64),
}

impl LaneTriangle {
    /// Triangle for an image, with base vertices at `left_factor` and
    /// `right_factor` of the width and the apex at the image center.
    pub fn from_image(
        image_width: u32,
        image_height: u32,
        left_factor: f64,
        right_factor: f64,
    ) -> Result<Self> {
        if image_width == 0 || image_height == 0 {
            return Err(Error::Geometry("image dimensions must be positive".into()));
        }
        if !(left_factor.is_finite() && right_factor.is_finite())
            || left_factor <= 0.0
            || right_factor >= 1.0
            || left_factor >= right_factor
        {
            return Err(Error::Geometry(format!(
                "base factors ({left_factor}, {right_factor}) must satisfy 0 < left < right < 1"
            )));
        }
        let w = image_width as f64;
        let h = image_height as f64;
        let tri = LaneTriangle {
            left_base: (left_factor * w, h),
            right_base: (right_factor * w, h),
            apex: (w / 2.0, h / 2.0),
        };
        tri.validate()?;
        Ok(tri)
    }

    pub fn with_default_factors(image_width: u32, image_height: u32) -> Result<Self> {
        Self::from_image(image_width, image_height, DEFAULT_LEFT_FACTOR, DEFAULT_RIGHT_FACTOR)
    }

    fn validate(&self) -> Result<()> {
        let (ax, ay) = self.left_base;
        let (bx, by) = self.right_base;
        let (cx, cy) = self.apex;
        let cross = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
        if cross == 0.0 {
            return Err(Error::Geometry("triangle vertices are collinear".into()));
        }
        Ok(())
    }
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// True iff `p` lies inside `tri` or on its boundary.
pub fn point_in_triangle(p: (f64, f64), tri: &LaneTriangle) -> bool {
    let d1 = cross(tri.left_base, tri.right_base, p);
    let d2 = cross(tri.right_base, tri.apex, p);
    let d3 = cross(tri.apex, tri.left_base, p);
    let has_pos = d1 > 0.0 || d2 > 0.0 || d3 > 0.0;
    let has_neg = d1 < 0.0 || d2 < 0.0 || d3 < 0.0;
    !(has_pos && has_neg)
}

/// The leading vehicle of a frame: a car or truck whose bbox base corners
/// `(x_min, y_max)` and `(x_max, y_max)` both lie inside the triangle.
/// Among candidates the one with the largest `y_max` wins (nearest by
/// perspective); ties break by larger bbox area.
pub fn find_leading(frame: &FrameRecord, tri: &LaneTriangle) -> Option<Detection> {
    let mut best: Option<Detection> = None;
    for det in &frame.detections {
        if !det.class_label.is_vehicle() {
            continue;
        }
        let left = (det.bbox.x_min, det.bbox.y_max);
        let right = (det.bbox.x_max, det.bbox.y_max);
        if !(point_in_triangle(left, tri) && point_in_triangle(right, tri)) {
            continue;
        }
        best = match best {
            None => Some(*det),
            Some(cur) => {
                let closer = det.bbox.y_max > cur.bbox.y_max
                    || (det.bbox.y_max == cur.bbox.y_max && det.bbox.area() > cur.bbox.area());
                Some(if closer { *det } else { cur })
            }
        };
    }
    best
}

/// Intersection-over-union of two boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let ix = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let iy = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 { 0.0 } else { inter / union }
}

/// One frame's leading detection inside a track.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackEntry {
    pub frame_index: u64,
    pub detection: Detection,
    /// Calibrated following distance; `None` until depth is attached.
    pub distance_m: Option<f64>,
}

/// Leading-vehicle track over a drive.
///
/// `segments` are disjoint, ordered index ranges into `entries`; together
/// with `gaps` (inclusive frame-index intervals with no leading vehicle)
/// they cover every input frame exactly once.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LeadTrack {
    pub entries: Vec<TrackEntry>,
    pub segments: Vec<std::ops::Range<usize>>,
    pub gaps: Vec<(u64, u64)>,
}

/// Fold per-frame leading detections into a persistent track. Successive
/// detections stay in one segment while their IoU is at least
/// [`IOU_PERSISTENCE_THRESHOLD`]; an IoU drop starts a new segment on the
/// same frame, and a frame with no leading vehicle records a gap.
pub fn build_track(frames: &[FrameRecord], tri: &LaneTriangle) -> LeadTrack {
    let mut track = LeadTrack::default();
    let mut seg_start: Option<usize> = None;
    let mut gap_start: Option<u64> = None;
    let mut prev: Option<(u64, BBox)> = None;

    for frame in frames {
        match find_leading(frame, tri) {
            Some(det) => {
                if let Some(start) = gap_start.take() {
                    track.gaps.push((start, frame.frame_index - 1));
                }
                let continues = match (&seg_start, &prev) {
                    (Some(_), Some((prev_idx, prev_bbox))) => {
                        frame.frame_index == prev_idx + 1
                            && iou(prev_bbox, &det.bbox) >= IOU_PERSISTENCE_THRESHOLD
                    }
                    _ => false,
                };
                if !continues {
                    if let Some(start) = seg_start.take() {
                        track.segments.push(start..track.entries.len());
                    }
                    seg_start = Some(track.entries.len());
                }
                prev = Some((frame.frame_index, det.bbox));
                track.entries.push(TrackEntry {
                    frame_index: frame.frame_index,
                    detection: det,
                    distance_m: None,
                });
            }
            None => {
                if let Some(start) = seg_start.take() {
                    track.segments.push(start..track.entries.len());
                }
                prev = None;
                if gap_start.is_none() {
                    gap_start = Some(frame.frame_index);
                }
            }
        }
    }
    if let Some(start) = seg_start {
        track.segments.push(start..track.entries.len());
    }
    if let (Some(start), Some(last)) = (gap_start, frames.last()) {
        track.gaps.push((start, last.frame_index));
    }
    track
}

/// CSV export: `frame_index,x_min,y_min,x_max,y_max,distance_m` per entry,
/// distance empty while uncalibrated.
pub fn serialize_track(track: &LeadTrack) -> String {
    let mut out = String::new();
    for e in &track.entries {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            e.frame_index,
            e.detection.bbox.x_min,
            e.detection.bbox.y_min,
            e.detection.bbox.x_max,
            e.detection.bbox.y_max,
            e.distance_m.map(|d| d.to_string()).unwrap_or_default()
        );
    }
    out
}
