//! Depth-quality metrics and metric calibration of model depth.
//!
//! Monocular depth arrives in model units; an affine least-squares fit
//! against lidar ground truth turns it into meters. The quality metrics
//! score a predicted map against a reference map: mean absolute error,
//! gradient error of the residual map, structural dissimilarity, and the
//! scale-invariant log loss. Model selection is by lidar RMSE.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::ingest::{DepthMap, Detection};

/// Weight of the absolute-error term in the combined loss.
pub const LAMBDA: f64 = 0.1;

/// Side length of the local SSIM window.
pub const SSIM_WINDOW: u32 = 7;

/// Affine map from model depth units to meters: `true ≈ scale * model + offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationFit {
    pub scale: f64,
    pub offset: f64,
    pub rmse_m: f64,
    pub n_samples: usize,
}

impl CalibrationFit {
    /// Identity calibration for depth that is already metric.
    pub fn identity() -> Self {
        CalibrationFit { scale: 1.0, offset: 0.0, rmse_m: 0.0, n_samples: 0 }
    }

    pub fn apply(&self, model_depth: f64) -> f64 {
        self.scale * model_depth + self.offset
    }
}

/// Least-squares affine fit of `true ≈ scale * model + offset` over
/// `(model_depth, true_distance_m)` pairs, with the residual RMSE.
pub fn fit_calibration(pairs: &[(f64, f64)]) -> Result<CalibrationFit> {
    let n = pairs.len();
    if n < 2 {
        return Err(Error::Calibration(format!("need at least 2 samples, got {n}")));
    }
    let nf = n as f64;
    let mean_x = pairs.iter().map(|p| p.0).sum::<f64>() / nf;
    let mean_y = pairs.iter().map(|p| p.1).sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in pairs {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    if sxx == 0.0 {
        return Err(Error::Calibration(
            "degenerate predictor: all model depths are equal".into(),
        ));
    }
    let scale = sxy / sxx;
    let offset = mean_y - scale * mean_x;
    let sse: f64 = pairs
        .iter()
        .map(|(x, y)| {
            let r = scale * x + offset - y;
            r * r
        })
        .sum();
    Ok(CalibrationFit { scale, offset, rmse_m: (sse / nf).sqrt(), n_samples: n })
}

/// Root mean squared error between two equal-length series.
pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "length mismatch: {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Shape("rmse of empty series".into()));
    }
    let sse: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sse / pred.len() as f64).sqrt())
}

/// RMSE between two depth maps of identical shape.
pub fn rmse_maps(pred: &DepthMap, truth: &DepthMap) -> Result<f64> {
    check_shapes(pred, truth)?;
    let sse: f64 = pred
        .values()
        .iter()
        .zip(truth.values())
        .map(|(p, t)| {
            let d = p - t;
            d * d
        })
        .sum();
    Ok((sse / pred.values().len() as f64).sqrt())
}

/// The model with minimal RMSE; ties break by first occurrence.
pub fn select_model<I: Clone>(reports: &[(I, f64)]) -> Result<I> {
    if reports.is_empty() {
        return Err(Error::EmptyInput("no models to select from".into()));
    }
    let mut best = &reports[0];
    for r in &reports[1..] {
        if r.1 < best.1 {
            best = r;
        }
    }
    Ok(best.0.clone())
}

fn check_shapes(y: &DepthMap, yhat: &DepthMap) -> Result<()> {
    if !y.same_shape(yhat) {
        return Err(Error::Shape(format!(
            "shape mismatch: {}x{} vs {}x{}",
            y.width(),
            y.height(),
            yhat.width(),
            yhat.height()
        )));
    }
    Ok(())
}

/// Mean absolute per-pixel error.
pub fn loss_depth(y: &DepthMap, yhat: &DepthMap) -> Result<f64> {
    check_shapes(y, yhat)?;
    let sum: f64 = y
        .values()
        .iter()
        .zip(yhat.values())
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(sum / y.values().len() as f64)
}

/// Mean absolute forward-difference gradient of the signed error map
/// `y - yhat` in x and y. The last column and row use a reflected
/// difference so every pixel contributes one term per direction.
pub fn loss_grad(y: &DepthMap, yhat: &DepthMap) -> Result<f64> {
    check_shapes(y, yhat)?;
    let (w, h) = (y.width() as usize, y.height() as usize);
    if w < 2 || h < 2 {
        return Err(Error::Shape(format!("gradients need at least 2x2, got {w}x{h}")));
    }
    let err: Vec<f64> = y
        .values()
        .iter()
        .zip(yhat.values())
        .map(|(a, b)| a - b)
        .collect();
    let at = |r: usize, c: usize| err[r * w + c];
    let mut sum = 0.0;
    for r in 0..h {
        for c in 0..w {
            let gx = if c + 1 < w { at(r, c + 1) - at(r, c) } else { at(r, c - 1) - at(r, c) };
            let gy = if r + 1 < h { at(r + 1, c) - at(r, c) } else { at(r - 1, c) - at(r, c) };
            sum += gx.abs() + gy.abs();
        }
    }
    Ok(sum / (w * h) as f64)
}

/// How the SSIM dissimilarity is folded into a loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SsimMode {
    /// `1 - SSIM/2`, which is 0.5 at perfect similarity.
    #[default]
    HalfSsim,
    /// `(1 - SSIM)/2`, which is 0 at perfect similarity.
    Conventional,
}

impl SsimMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "half_ssim" => Ok(SsimMode::HalfSsim),
            "conventional" => Ok(SsimMode::Conventional),
            other => Err(Error::Config(format!("unknown ssim mode {other:?}"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SsimMode::HalfSsim => "half_ssim",
            SsimMode::Conventional => "conventional",
        }
    }
}

/// Mean SSIM between two maps over uniform `SSIM_WINDOW`-sized windows at
/// every fully contained position, with moments normalized by the window
/// pixel count and stabilizers `C1 = (0.01 L)^2`, `C2 = (0.03 L)^2` where
/// `L` is the dynamic range of `y` (1 when `y` is constant).
pub fn mean_ssim(y: &DepthMap, yhat: &DepthMap) -> Result<f64> {
    check_shapes(y, yhat)?;
    let (w, h) = (y.width() as usize, y.height() as usize);
    let win = SSIM_WINDOW as usize;
    if w < win || h < win {
        return Err(Error::Shape(format!(
            "SSIM needs at least {win}x{win}, got {w}x{h}"
        )));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in y.values() {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    let range = if hi > lo { hi - lo } else { 1.0 };
    let c1 = (0.01 * range) * (0.01 * range);
    let c2 = (0.03 * range) * (0.03 * range);
    let npix = (win * win) as f64;
    let ya = y.values();
    let yb = yhat.values();
    let mut total = 0.0;
    let mut windows = 0usize;
    for r0 in 0..=(h - win) {
        for c0 in 0..=(w - win) {
            let mut sa = 0.0;
            let mut sb = 0.0;
            let mut saa = 0.0;
            let mut sbb = 0.0;
            let mut sab = 0.0;
            for r in r0..r0 + win {
                for c in c0..c0 + win {
                    let a = ya[r * w + c];
                    let b = yb[r * w + c];
                    sa += a;
                    sb += b;
                    saa += a * a;
                    sbb += b * b;
                    sab += a * b;
                }
            }
            let mu_a = sa / npix;
            let mu_b = sb / npix;
            let var_a = saa / npix - mu_a * mu_a;
            let var_b = sbb / npix - mu_b * mu_b;
            let cov = sab / npix - mu_a * mu_b;
            let ssim = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
            total += ssim;
            windows += 1;
        }
    }
    Ok(total / windows as f64)
}

/// Structural dissimilarity loss, clamped to [0, 1].
pub fn loss_ssim(y: &DepthMap, yhat: &DepthMap, mode: SsimMode) -> Result<f64> {
    let ssim = mean_ssim(y, yhat)?;
    let raw = match mode {
        SsimMode::HalfSsim => 1.0 - ssim / 2.0,
        SsimMode::Conventional => (1.0 - ssim) / 2.0,
    };
    Ok(raw.clamp(0.0, 1.0))
}

/// Scale-invariant log loss: with `d_i = ln(yhat_i) - ln(y_i)`,
/// `(1/n) Σ d_i² − (1/(2n²)) (Σ d_i)²`. Insensitive to uniform scaling of
/// either map up to the closed form `(ln c)²/2`.
pub fn loss_silog(y: &DepthMap, yhat: &DepthMap) -> Result<f64> {
    check_shapes(y, yhat)?;
    let n = y.values().len() as f64;
    let mut sum_d = 0.0;
    let mut sum_d2 = 0.0;
    for (a, b) in y.values().iter().zip(yhat.values()) {
        let (a, b) = (*a, *b);
        if a <= 0.0 || b <= 0.0 {
            return Err(Error::Domain(format!(
                "scale-invariant log loss needs positive values, got ({a}, {b})"
            )));
        }
        let d = b.ln() - a.ln();
        sum_d += d;
        sum_d2 += d * d;
    }
    Ok(sum_d2 / n - (sum_d * sum_d) / (2.0 * n * n))
}

/// Combined quality report for one depth model.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthQualityReport {
    pub rmse_m: f64,
    pub l_depth: f64,
    pub l_grad: f64,
    pub l_ssim: f64,
    pub l_total: f64,
    pub l_silog: f64,
}

impl DepthQualityReport {
    /// Assemble a report from the component metrics; the combined loss is
    /// `LAMBDA * l_depth + l_grad + l_ssim`.
    pub fn new(rmse_m: f64, l_depth: f64, l_grad: f64, l_ssim: f64, l_silog: f64) -> Self {
        DepthQualityReport {
            rmse_m,
            l_depth,
            l_grad,
            l_ssim,
            l_total: LAMBDA * l_depth + l_grad + l_ssim,
            l_silog,
        }
    }

    /// Score a predicted map against a reference map, with the lidar RMSE
    /// supplied separately.
    pub fn from_maps(
        truth: &DepthMap,
        pred: &DepthMap,
        rmse_m: f64,
        mode: SsimMode,
    ) -> Result<Self> {
        Ok(Self::new(
            rmse_m,
            loss_depth(truth, pred)?,
            loss_grad(truth, pred)?,
            loss_ssim(truth, pred, mode)?,
            loss_silog(truth, pred)?,
        ))
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "rmse_m={}", self.rmse_m);
        let _ = writeln!(out, "l_depth={}", self.l_depth);
        let _ = writeln!(out, "l_grad={}", self.l_grad);
        let _ = writeln!(out, "l_ssim={}", self.l_ssim);
        let _ = writeln!(out, "l_total={}", self.l_total);
        let _ = writeln!(out, "l_silog={}", self.l_silog);
        let _ = writeln!(out, "lambda={LAMBDA}");
        out
    }
}

/// Calibrated distance for a detection: the affine fit applied to the
/// median depth over the lower-central sub-region of the bbox (central 50%
/// in x, lower third in y), which rejects background pixels inside the box.
pub fn bbox_distance(depth: &DepthMap, det: &Detection, fit: &CalibrationFit) -> Result<f64> {
    let b = &det.bbox;
    if b.x_min < 0.0
        || b.y_min < 0.0
        || b.x_max > depth.width() as f64
        || b.y_max > depth.height() as f64
    {
        return Err(Error::Geometry(format!(
            "bbox ({}, {}, {}, {}) outside {}x{} map",
            b.x_min,
            b.y_min,
            b.x_max,
            b.y_max,
            depth.width(),
            depth.height()
        )));
    }
    let rx0 = b.x_min + 0.25 * b.width();
    let rx1 = b.x_max - 0.25 * b.width();
    let ry0 = b.y_min + (2.0 / 3.0) * b.height();
    let ry1 = b.y_max;
    let c0 = rx0.floor().max(0.0) as u32;
    let c1 = (rx1.ceil() as u32).min(depth.width());
    let r0 = ry0.floor().max(0.0) as u32;
    let r1 = (ry1.ceil() as u32).min(depth.height());
    if c0 >= c1 || r0 >= r1 {
        return Err(Error::Geometry(format!(
            "empty aggregation region for bbox ({}, {}, {}, {})",
            b.x_min, b.y_min, b.x_max, b.y_max
        )));
    }
    let mut region = Vec::with_capacity(((c1 - c0) * (r1 - r0)) as usize);
    for r in r0..r1 {
        for c in c0..c1 {
            region.push(depth.at(c, r));
        }
    }
    Ok(fit.apply(median(&mut region)))
}

/// Median by sorting: middle element for odd counts, mean of the two middle
/// elements for even counts.
fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{BBox, ClassLabel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn map_from(w: u32, h: u32, f: impl Fn(u32, u32) -> f64) -> DepthMap {
        let mut values = Vec::with_capacity((w * h) as usize);
        for r in 0..h {
            for c in 0..w {
                values.push(f(c, r));
            }
        }
        DepthMap::new(w, h, values).unwrap()
    }

    fn random_map(rng: &mut ChaCha8Rng, w: u32, h: u32, lo: f64, hi: f64) -> DepthMap {
        let values = (0..(w * h) as usize).map(|_| rng.random_range(lo..hi)).collect();
        DepthMap::new(w, h, values).unwrap()
    }

    // ---- independent oracles -------------------------------------------

    /// Naive summation least squares: solves the 2x2 normal equations
    /// directly from raw sums.
    fn fit_oracle(pairs: &[(f64, f64)]) -> (f64, f64) {
        let n = pairs.len() as f64;
        let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        for (x, y) in pairs {
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        let scale = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let offset = (sy - scale * sx) / n;
        (scale, offset)
    }

    fn loss_depth_oracle(y: &DepthMap, yhat: &DepthMap) -> f64 {
        let (w, h) = (y.width(), y.height());
        let mut sum = 0.0;
        for r in 0..h {
            for c in 0..w {
                sum += (y.at(c, r) - yhat.at(c, r)).abs();
            }
        }
        sum / (w * h) as f64
    }

    fn loss_grad_oracle(y: &DepthMap, yhat: &DepthMap) -> f64 {
        let (w, h) = (y.width(), y.height());
        let e = |c: u32, r: u32| y.at(c, r) - yhat.at(c, r);
        let mut sum = 0.0;
        for r in 0..h {
            for c in 0..w {
                let gx = if c + 1 < w { e(c + 1, r) - e(c, r) } else { e(c - 1, r) - e(c, r) };
                let gy = if r + 1 < h { e(c, r + 1) - e(c, r) } else { e(c, r - 1) - e(c, r) };
                sum += gx.abs() + gy.abs();
            }
        }
        sum / (w * h) as f64
    }

    fn ssim_oracle(y: &DepthMap, yhat: &DepthMap) -> f64 {
        let (w, h) = (y.width(), y.height());
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in y.values() {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
        let range = if hi > lo { hi - lo } else { 1.0 };
        let c1 = (0.01 * range).powi(2);
        let c2 = (0.03 * range).powi(2);
        let win = SSIM_WINDOW;
        let mut total = 0.0;
        let mut count = 0;
        for r0 in 0..=(h - win) {
            for c0 in 0..=(w - win) {
                let mut av = Vec::new();
                let mut bv = Vec::new();
                for r in r0..r0 + win {
                    for c in c0..c0 + win {
                        av.push(y.at(c, r));
                        bv.push(yhat.at(c, r));
                    }
                }
                let n = av.len() as f64;
                let ma = av.iter().sum::<f64>() / n;
                let mb = bv.iter().sum::<f64>() / n;
                let va = av.iter().map(|a| (a - ma) * (a - ma)).sum::<f64>() / n;
                let vb = bv.iter().map(|b| (b - mb) * (b - mb)).sum::<f64>() / n;
                let cov =
                    av.iter().zip(&bv).map(|(a, b)| (a - ma) * (b - mb)).sum::<f64>() / n;
                total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                    / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
        total / count as f64
    }

    fn loss_silog_oracle(y: &DepthMap, yhat: &DepthMap) -> f64 {
        let (w, h) = (y.width(), y.height());
        let n = (w * h) as f64;
        let mut ds = Vec::new();
        for r in 0..h {
            for c in 0..w {
                ds.push(yhat.at(c, r).ln() - y.at(c, r).ln());
            }
        }
        let s1: f64 = ds.iter().map(|d| d * d).sum();
        let s2: f64 = ds.iter().sum();
        s1 / n - s2 * s2 / (2.0 * n * n)
    }

    // ---- fit_calibration ------------------------------------------------

    #[test]
    fn calibration_identity() {
        let fit = fit_calibration(&[(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]).unwrap();
        assert!((fit.scale - 1.0).abs() < 1e-12);
        assert!(fit.offset.abs() < 1e-12);
        assert!(fit.rmse_m < 1e-12);
        assert_eq!(fit.n_samples, 3);
    }

    #[test]
    fn calibration_exact_line() {
        let fit = fit_calibration(&[(1.0, 3.0), (2.0, 5.0)]).unwrap();
        assert!((fit.scale - 2.0).abs() < 1e-12);
        assert!((fit.offset - 1.0).abs() < 1e-12);
        assert!(fit.rmse_m < 1e-12);
    }

    #[test]
    fn calibration_errors() {
        assert!(matches!(fit_calibration(&[(1.0, 2.0)]), Err(Error::Calibration(_))));
        assert!(matches!(
            fit_calibration(&[(1.0, 2.0), (1.0, 3.0)]),
            Err(Error::Calibration(_))
        ));
    }

    #[test]
    fn calibration_recovers_noisy_affine() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let sigma = 0.2;
        let noise = Normal::new(0.0, sigma).unwrap();
        let pairs: Vec<(f64, f64)> = (0..200)
            .map(|_| {
                let m = rng.random_range(1.0..30.0);
                (m, 2.0 * m + 0.5 + noise.sample(&mut rng))
            })
            .collect();
        let fit = fit_calibration(&pairs).unwrap();
        assert!((fit.scale - 2.0).abs() < 0.15 * 2.0, "scale {}", fit.scale);
        assert!((fit.offset - 0.5).abs() < 0.15, "offset {}", fit.offset);
        assert!((fit.rmse_m - sigma).abs() < 0.15 * sigma, "rmse {}", fit.rmse_m);
        let (oracle_scale, oracle_offset) = fit_oracle(&pairs);
        assert!((fit.scale - oracle_scale).abs() < 1e-9);
        assert!((fit.offset - oracle_offset).abs() < 1e-9);
    }

    // ---- rmse ------------------------------------------------------------

    #[test]
    fn rmse_basics() {
        let a = vec![1.0, 2.0, 3.0];
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        let b: Vec<f64> = a.iter().map(|v| v + 1.0).collect();
        assert!((rmse(&b, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!(rmse(&a, &[1.0]).is_err());
        assert!(rmse(&[], &[]).is_err());
    }

    #[test]
    fn rmse_uniform_perturbation_matches_analytic_std() {
        // std of U(-0.1, 0.1) is 0.1/sqrt(3)
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 1_000_000;
        let truth = vec![10.0f64; n];
        let pred: Vec<f64> = truth.iter().map(|t| t + rng.random_range(-0.1..0.1)).collect();
        let got = rmse(&pred, &truth).unwrap();
        let expected = 0.1 / 3f64.sqrt();
        assert!((got - expected).abs() / expected < 0.02, "rmse {got}");
        let direct: f64 =
            (pred.iter().zip(&truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n as f64)
                .sqrt();
        assert!((got - direct).abs() < 1e-12);
    }

    #[test]
    fn rmse_symmetry_and_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<f64> = (0..50).map(|_| rng.random_range(0.0..10.0)).collect();
        let b: Vec<f64> = (0..50).map(|_| rng.random_range(0.0..10.0)).collect();
        assert_eq!(rmse(&a, &b).unwrap(), rmse(&b, &a).unwrap());
        // scaling the error scales the rmse linearly
        let c: Vec<f64> = a.iter().zip(&b).map(|(x, y)| y + 3.0 * (x - y)).collect();
        assert!((rmse(&c, &b).unwrap() - 3.0 * rmse(&a, &b).unwrap()).abs() < 1e-9);
    }

    // ---- select_model ------------------------------------------------------

    #[test]
    fn select_model_minimum_and_ties() {
        let reports = vec![("model 1", 6.23), ("model 2", 58.0), ("model 3", 1.79)];
        assert_eq!(select_model(&reports).unwrap(), "model 3");
        assert_eq!(select_model(&[("m1", 5.0)]).unwrap(), "m1");
        assert_eq!(select_model(&[("a", 2.0), ("b", 2.0)]).unwrap(), "a");
        assert!(select_model::<&str>(&[]).is_err());
    }

    // ---- losses ------------------------------------------------------------

    #[test]
    fn loss_depth_examples() {
        let y = map_from(8, 8, |c, r| (c + r) as f64);
        assert_eq!(loss_depth(&y, &y).unwrap(), 0.0);
        let shifted = map_from(8, 8, |c, r| (c + r) as f64 + 0.5);
        assert!((loss_depth(&y, &shifted).unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn loss_grad_examples() {
        let y = map_from(8, 8, |c, r| (c * r) as f64 + 1.0);
        assert_eq!(loss_grad(&y, &y).unwrap(), 0.0);
        let shifted = map_from(8, 8, |c, r| (c * r) as f64 + 3.5);
        assert!(loss_grad(&y, &shifted).unwrap().abs() < 1e-9);
        assert!(loss_grad(&map_from(1, 4, |_, r| r as f64), &map_from(1, 4, |_, _| 0.0)).is_err());
    }

    #[test]
    fn loss_ssim_identical_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let y = random_map(&mut rng, 16, 16, 1.0, 10.0);
        assert!((loss_ssim(&y, &y, SsimMode::HalfSsim).unwrap() - 0.5).abs() < 1e-12);
        assert!(loss_ssim(&y, &y, SsimMode::Conventional).unwrap().abs() < 1e-12);
    }

    #[test]
    fn loss_ssim_anticorrelated_approaches_one() {
        // yhat = -y + const with matched mean: structure term goes to -1
        let y = map_from(16, 16, |c, r| ((c * 13 + r * 7) % 23) as f64 + 5.0);
        let mean = y.values().iter().sum::<f64>() / 256.0;
        let inv = map_from(16, 16, |c, r| 2.0 * mean - y.at(c, r));
        let loss = loss_ssim(&y, &inv, SsimMode::HalfSsim).unwrap();
        assert!(loss > 0.95, "loss {loss}");
        let ssim = mean_ssim(&y, &inv).unwrap();
        assert!(ssim < -0.9, "ssim {ssim}");
    }

    #[test]
    fn losses_match_loop_oracles() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..20 {
            let y = random_map(&mut rng, 16, 16, 0.5, 20.0);
            let yhat = random_map(&mut rng, 16, 16, 0.5, 20.0);
            let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-30);
            assert!(rel(loss_depth(&y, &yhat).unwrap(), loss_depth_oracle(&y, &yhat)) < 1e-9);
            assert!(rel(loss_grad(&y, &yhat).unwrap(), loss_grad_oracle(&y, &yhat)) < 1e-9);
            assert!(rel(mean_ssim(&y, &yhat).unwrap(), ssim_oracle(&y, &yhat)) < 1e-9);
            assert!(rel(loss_silog(&y, &yhat).unwrap(), loss_silog_oracle(&y, &yhat)) < 1e-9);
        }
    }

    #[test]
    fn loss_silog_uniform_scale_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let y = random_map(&mut rng, 12, 12, 1.0, 30.0);
        for c in [0.5f64, 2.0, std::f64::consts::E] {
            let scaled =
                DepthMap::new(12, 12, y.values().iter().map(|v| v * c).collect()).unwrap();
            let got = loss_silog(&y, &scaled).unwrap();
            let expected = c.ln() * c.ln() / 2.0;
            assert!((got - expected).abs() < 1e-12, "c={c}: {got} vs {expected}");
        }
        assert!(loss_silog(&y, &y).unwrap().abs() < 1e-15);
        let zeros = map_from(12, 12, |_, _| 0.0);
        assert!(matches!(loss_silog(&y, &zeros), Err(Error::Domain(_))));
    }

    #[test]
    fn loss_depth_triangle_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let y = random_map(&mut rng, 8, 8, 0.0, 10.0);
            let w = random_map(&mut rng, 8, 8, 0.0, 10.0);
            let z = random_map(&mut rng, 8, 8, 0.0, 10.0);
            let yz = loss_depth(&y, &z).unwrap();
            let yw = loss_depth(&y, &w).unwrap();
            let wz = loss_depth(&w, &z).unwrap();
            assert!(yz <= yw + wz + 1e-12);
        }
    }

    // ---- bbox_distance -------------------------------------------------------

    fn det(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Detection {
        Detection::new(ClassLabel::Car, BBox::new(x_min, y_min, x_max, y_max).unwrap(), 0.9)
            .unwrap()
    }

    #[test]
    fn bbox_distance_uniform_and_affine() {
        let map = map_from(40, 40, |_, _| 10.0);
        let d = det(4.0, 4.0, 36.0, 36.0);
        let got = bbox_distance(&map, &d, &CalibrationFit::identity()).unwrap();
        assert!((got - 10.0).abs() < 1e-9);

        let map5 = map_from(40, 40, |_, _| 5.0);
        let fit = CalibrationFit { scale: 2.0, offset: 1.0, rmse_m: 0.0, n_samples: 2 };
        assert!((bbox_distance(&map5, &d, &fit).unwrap() - 11.0).abs() < 1e-9);
    }

    #[test]
    fn bbox_distance_median_rejects_background() {
        // foreground at 8 m fills the bottom of the box, background at 80 m
        // leaks into the aggregation region but stays under half of it
        let map = map_from(60, 60, |c, r| {
            if r >= 30 && (14..46).contains(&c) { 8.0 } else { 80.0 }
        });
        let d = det(10.0, 0.0, 50.0, 54.0);
        // region rows 36..54, cols 20..40; background only where c in 14..20 is
        // outside the region, so region is fully foreground here
        let got = bbox_distance(&map, &d, &CalibrationFit::identity()).unwrap();
        assert!((got - 8.0).abs() < 1e-9);

        // now shrink the foreground so it covers just over half the region
        let map2 = map_from(60, 60, |c, r| {
            if r >= 36 && (20..31).contains(&c) { 8.0 } else { 80.0 }
        });
        let region_vals: Vec<f64> = {
            let mut v = Vec::new();
            for r in 36..54 {
                for c in 20..40 {
                    v.push(map2.at(c, r));
                }
            }
            v
        };
        let mut sorted = region_vals.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let oracle = (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2]) / 2.0;
        let got2 = bbox_distance(&map2, &d, &CalibrationFit::identity()).unwrap();
        assert_eq!(got2, oracle);
        assert!((got2 - 8.0).abs() < 1e-9, "foreground majority wins: {got2}");
    }

    #[test]
    fn bbox_distance_out_of_bounds() {
        let map = map_from(20, 20, |_, _| 1.0);
        assert!(matches!(
            bbox_distance(&map, &det(10.0, 10.0, 25.0, 19.0), &CalibrationFit::identity()),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn quality_report_combines_terms() {
        let rep = DepthQualityReport::new(1.5, 0.2, 0.3, 0.5, 0.1);
        assert!((rep.l_total - (LAMBDA * 0.2 + 0.3 + 0.5)).abs() < 1e-12);
        let text = rep.serialize();
        assert!(text.contains("lambda=0.1\n"));
        assert!(text.starts_with("rmse_m=1.5\n"));
    }
}
