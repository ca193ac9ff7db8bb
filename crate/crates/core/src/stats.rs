//! Demographic comparison machinery: density estimates of following
//! distance and pairwise two-sample t-tests.
//!
//! The variance-ratio rule picks the test variant: a ratio of at most 4:1
//! between the two sample variances selects the pooled equal-variance test,
//! anything larger selects Welch. P-values come from the regularized
//! incomplete beta function evaluated by continued fraction.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::ingest::DriverGroup;

/// Variance ratio at or under which the pooled test applies.
pub const VARIANCE_RATIO_LIMIT: f64 = 4.0;

/// Grid resolution for density estimates.
pub const KDE_GRID_POINTS: usize = 512;

/// Labeled collection of following distances for one demographic group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSample {
    pub group: DriverGroup,
    pub values: Vec<f64>,
}

impl GroupSample {
    pub fn new(group: DriverGroup, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Data(format!("group {} has no values", group.as_str())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("group {} has non-finite values", group.as_str())));
        }
        Ok(GroupSample { group, values })
    }

    fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Unbiased sample variance.
    fn variance(&self) -> f64 {
        let n = self.values.len();
        debug_assert!(n >= 2);
        let mean = self.mean();
        self.values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Reject,
    FailToReject,
}

impl Decision {
    pub fn as_str(&self) -> &'static str {
        match self {
            Decision::Reject => "reject",
            Decision::FailToReject => "fail_to_reject",
        }
    }
}

/// Outcome of one two-sample t-test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    pub t_stat: f64,
    pub df: f64,
    pub p_value: f64,
    pub pooled: bool,
    pub decision: Decision,
}

/// Bandwidth choice for [`density_estimate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// Silverman's rule: `1.06 * sd * n^(-1/5)`.
    Auto,
    Fixed(f64),
}

/// Gaussian kernel density on an evenly spaced grid spanning
/// `[min - 3h, max + 3h]`.
pub fn density_estimate(sample: &GroupSample, bandwidth: Bandwidth) -> Result<Vec<(f64, f64)>> {
    let n = sample.values.len();
    if n < 2 {
        return Err(Error::Data(format!("density estimate needs at least 2 values, got {n}")));
    }
    let h = match bandwidth {
        Bandwidth::Fixed(h) => {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::Data(format!("bandwidth {h} must be positive")));
            }
            h
        }
        Bandwidth::Auto => {
            let sd = sample.variance().sqrt();
            if sd == 0.0 {
                return Err(Error::Data(
                    "auto bandwidth undefined for zero-variance sample; supply one".into(),
                ));
            }
            1.06 * sd * (n as f64).powf(-0.2)
        }
    };
    let lo = sample.values.iter().cloned().fold(f64::INFINITY, f64::min) - 3.0 * h;
    let hi = sample.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h;
    let step = (hi - lo) / (KDE_GRID_POINTS - 1) as f64;
    let norm = 1.0 / (n as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    Ok((0..KDE_GRID_POINTS)
        .map(|i| {
            let x = lo + step * i as f64;
            let f = sample
                .values
                .iter()
                .map(|xi| {
                    let z = (x - xi) / h;
                    (-0.5 * z * z).exp()
                })
                .sum::<f64>()
                * norm;
            (x, f)
        })
        .collect())
}

/// True when the pooled equal-variance test applies: the larger variance is
/// at most [`VARIANCE_RATIO_LIMIT`] times the smaller. Two zero-variance
/// samples pool; exactly one zero variance forces Welch.
pub fn variance_rule(a: &GroupSample, b: &GroupSample) -> Result<bool> {
    if a.values.len() < 2 || b.values.len() < 2 {
        return Err(Error::Data("variance rule needs at least 2 values per group".into()));
    }
    let va = a.variance();
    let vb = b.variance();
    if va == 0.0 && vb == 0.0 {
        return Ok(true);
    }
    let (lo, hi) = if va < vb { (va, vb) } else { (vb, va) };
    if lo == 0.0 {
        return Ok(false);
    }
    Ok(hi / lo <= VARIANCE_RATIO_LIMIT)
}

/// Two-sided two-sample t-test at level `alpha`, pooled or Welch per
/// [`variance_rule`].
pub fn t_test(a: &GroupSample, b: &GroupSample, alpha: f64) -> Result<TestResult> {
    if !(alpha.is_finite() && 0.0 < alpha && alpha < 1.0) {
        return Err(Error::Config(format!("alpha {alpha} must be in (0, 1)")));
    }
    let na = a.values.len();
    let nb = b.values.len();
    if na < 2 || nb < 2 {
        return Err(Error::Data(format!(
            "t-test needs at least 2 values per group, got {na} and {nb}"
        )));
    }
    let pooled = variance_rule(a, b)?;
    let (naf, nbf) = (na as f64, nb as f64);
    let diff = a.mean() - b.mean();
    let va = a.variance();
    let vb = b.variance();
    let (se, df) = if pooled {
        let sp2 = ((naf - 1.0) * va + (nbf - 1.0) * vb) / (naf + nbf - 2.0);
        ((sp2 * (1.0 / naf + 1.0 / nbf)).sqrt(), naf + nbf - 2.0)
    } else {
        let qa = va / naf;
        let qb = vb / nbf;
        let df = (qa + qb) * (qa + qb) / (qa * qa / (naf - 1.0) + qb * qb / (nbf - 1.0));
        ((qa + qb).sqrt(), df)
    };
    let t_stat = if se == 0.0 {
        if diff == 0.0 {
            0.0
        } else if diff > 0.0 {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        }
    } else {
        diff / se
    };
    let p_value = if t_stat.is_infinite() { 0.0 } else { student_t_two_sided_p(t_stat, df) };
    let decision = if p_value < alpha { Decision::Reject } else { Decision::FailToReject };
    Ok(TestResult { t_stat, df, p_value, pooled, decision })
}

/// Two-sided p-value of the Student-t statistic: the regularized incomplete
/// beta `I_x(df/2, 1/2)` at `x = df / (df + t²)`.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    let x = df / (df + t * t);
    reg_inc_beta(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

/// Lanczos approximation of `ln Γ(x)` for `x > 0`.
fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 1e-15;
    const FPMIN: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let mf = m as f64;
        let m2 = 2.0 * mf;
        let aa = mf * (b - mf) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + mf) * (qab + mf) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// One labeled row of the comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub label: String,
    pub result: TestResult,
}

fn canonical_rank(g: &DriverGroup) -> (usize, &str) {
    let rank = match g {
        DriverGroup::ElderlyWoman => 0,
        DriverGroup::ElderlyMan => 1,
        DriverGroup::YoungMan1 => 2,
        DriverGroup::YoungMan2 => 3,
        DriverGroup::Other(_) => 4,
    };
    (rank, g.as_str())
}

/// Test every unordered pair of groups, canonical groups first in their
/// fixed order. When at least three canonical groups span both age classes,
/// an aggregate row pools the elderly subgroups against the young ones.
pub fn compare_groups(samples: &[GroupSample], alpha: f64) -> Result<Vec<Comparison>> {
    if samples.len() < 2 {
        return Err(Error::Data(format!(
            "group comparison needs at least 2 groups, got {}",
            samples.len()
        )));
    }
    let mut ordered: Vec<&GroupSample> = samples.iter().collect();
    ordered.sort_by(|a, b| canonical_rank(&a.group).cmp(&canonical_rank(&b.group)));
    for pair in ordered.windows(2) {
        if pair[0].group == pair[1].group {
            return Err(Error::Data(format!(
                "duplicate group {}",
                pair[0].group.as_str()
            )));
        }
    }
    let mut rows = Vec::new();
    for i in 0..ordered.len() {
        for j in i + 1..ordered.len() {
            rows.push(Comparison {
                label: format!("{} vs {}", ordered[i].group.as_str(), ordered[j].group.as_str()),
                result: t_test(ordered[i], ordered[j], alpha)?,
            });
        }
    }
    let elderly: Vec<&GroupSample> =
        ordered.iter().filter(|s| s.group.is_elderly()).copied().collect();
    let young: Vec<&GroupSample> =
        ordered.iter().filter(|s| s.group.is_young()).copied().collect();
    if !elderly.is_empty() && !young.is_empty() && elderly.len() + young.len() >= 3 {
        let pool = |groups: &[&GroupSample], tag: &str| {
            GroupSample::new(
                DriverGroup::Other(tag.to_string()),
                groups.iter().flat_map(|g| g.values.iter().copied()).collect(),
            )
        };
        let young_pool = pool(&young, "young")?;
        let elderly_pool = pool(&elderly, "elderly")?;
        rows.push(Comparison {
            label: "young vs elderly".to_string(),
            result: t_test(&young_pool, &elderly_pool, alpha)?,
        });
    }
    Ok(rows)
}

/// CSV export mirroring the three-column comparison table; p-values are
/// rounded to two decimals for display while tests keep full precision.
pub fn serialize_comparisons(rows: &[Comparison]) -> String {
    let mut out = String::new();
    for row in rows {
        let _ = writeln!(
            out,
            "{},{:.2},{}",
            row.label,
            row.result.p_value,
            row.result.decision.as_str()
        );
    }
    out
}

/// CSV export of a density grid: `x,f` per row.
pub fn serialize_density(grid: &[(f64, f64)]) -> String {
    let mut out = String::new();
    for (x, f) in grid {
        let _ = writeln!(out, "{x},{f}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn sample(tag: &str, values: Vec<f64>) -> GroupSample {
        GroupSample::new(DriverGroup::Other(tag.into()), values).unwrap()
    }

    /// Composite Simpson integral.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = if n % 2 == 0 { n } else { n + 1 };
        let h = (b - a) / n as f64;
        let mut acc = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(a + h * i as f64);
        }
        acc * h / 3.0
    }

    /// Independent two-sided p-value: after `x = sqrt(df) tan θ` the t
    /// density is proportional to `cos^(df-1) θ`, so the tail mass is a
    /// ratio of two finite integrals. No gamma functions involved.
    fn p_oracle(t: f64, df: f64) -> f64 {
        let theta_t = (t.abs() / df.sqrt()).atan();
        let half_pi = std::f64::consts::FRAC_PI_2;
        let g = |theta: f64| theta.cos().powf(df - 1.0);
        let tail = simpson(&g, theta_t, half_pi, 200_000);
        let whole = 2.0 * simpson(&g, 0.0, half_pi, 200_000);
        2.0 * tail / whole
    }

    #[test]
    fn pooled_example_is_exact() {
        let a = sample("a", vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let b = sample("b", vec![2.0, 3.0, 4.0, 5.0, 6.0]);
        let r = t_test(&a, &b, 0.05).unwrap();
        assert!(r.pooled);
        assert_eq!(r.t_stat, -1.0);
        assert_eq!(r.df, 8.0);
        assert!((r.p_value - 0.3466).abs() < 5e-4, "p {}", r.p_value);
        assert!((r.p_value - p_oracle(-1.0, 8.0)).abs() < 1e-6);
        assert_eq!(r.decision, Decision::FailToReject);
    }

    #[test]
    fn identical_samples_dont_reject() {
        let a = sample("a", vec![1.5, 2.5, 3.5]);
        let r = t_test(&a, &a, 0.05).unwrap();
        assert_eq!(r.t_stat, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.decision, Decision::FailToReject);
    }

    #[test]
    fn p_matches_numeric_integration_across_df() {
        for (t, df) in [
            (0.5, 1.0),
            (1.0, 2.0),
            (2.2, 5.0),
            (-1.7, 8.0),
            (3.0, 17.0),
            (0.3, 40.0),
            (2.0, 123.0),
            (-4.5, 60.0),
        ] {
            let got = student_t_two_sided_p(t, df);
            let want = p_oracle(t, df);
            assert!((got - want).abs() < 1e-9, "t={t} df={df}: {got} vs {want}");
        }
    }

    #[test]
    fn variance_rule_thresholds() {
        // variances: a has 1.0, b scaled copies
        let base = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let with_var = |target: f64| -> GroupSample {
            let v = 2.5f64; // variance of base
            let k = (target / v).sqrt();
            sample("s", base.iter().map(|x| x * k).collect())
        };
        assert!(variance_rule(&with_var(1.0), &with_var(3.9)).unwrap());
        assert!(!variance_rule(&with_var(1.0), &with_var(4.1)).unwrap());
        assert!(variance_rule(&with_var(2.0), &with_var(2.0)).unwrap());
        let flat = sample("flat", vec![3.0, 3.0, 3.0]);
        assert!(variance_rule(&flat, &flat).unwrap());
        assert!(!variance_rule(&flat, &with_var(1.0)).unwrap());
    }

    #[test]
    fn zero_variance_paths() {
        let flat = sample("flat", vec![3.0, 3.0, 3.0]);
        let r = t_test(&flat, &flat, 0.05).unwrap();
        assert!(r.pooled);
        assert_eq!(r.t_stat, 0.0);
        assert_eq!(r.p_value, 1.0);
        let other = sample("other", vec![5.0, 5.0, 5.0]);
        let r2 = t_test(&flat, &other, 0.05).unwrap();
        assert!(r2.t_stat.is_infinite());
        assert_eq!(r2.p_value, 0.0);
        assert_eq!(r2.decision, Decision::Reject);
    }

    #[test]
    fn swap_shift_scale_invariances() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..1000 {
            let na = rng.random_range(3usize..40);
            let nb = rng.random_range(3usize..40);
            let mu_a = rng.random_range(-3.0..3.0);
            let mu_b = rng.random_range(-3.0..3.0);
            let sd_a = rng.random_range(0.5..2.0);
            let sd_b = rng.random_range(0.5..4.0);
            let da = Normal::new(mu_a, sd_a).unwrap();
            let db = Normal::new(mu_b, sd_b).unwrap();
            let a = sample("a", (0..na).map(|_| da.sample(&mut rng)).collect());
            let b = sample("b", (0..nb).map(|_| db.sample(&mut rng)).collect());
            let r = t_test(&a, &b, 0.05).unwrap();
            let swapped = t_test(&b, &a, 0.05).unwrap();
            assert_eq!(r.t_stat, -swapped.t_stat);
            assert_eq!(r.p_value, swapped.p_value);
            assert_eq!(r.df, swapped.df);

            let shift = rng.random_range(-10.0..10.0);
            let scale = rng.random_range(0.1..10.0);
            let transform = |s: &GroupSample, f: &dyn Fn(f64) -> f64| {
                sample("t", s.values.iter().map(|v| f(*v)).collect())
            };
            let rs = t_test(
                &transform(&a, &|v| v + shift),
                &transform(&b, &|v| v + shift),
                0.05,
            )
            .unwrap();
            assert!((rs.t_stat - r.t_stat).abs() < 1e-7 * (1.0 + r.t_stat.abs()));
            assert!((rs.p_value - r.p_value).abs() < 1e-7);
            let rc = t_test(
                &transform(&a, &|v| v * scale),
                &transform(&b, &|v| v * scale),
                0.05,
            )
            .unwrap();
            assert!((rc.t_stat - r.t_stat).abs() < 1e-7 * (1.0 + r.t_stat.abs()));
            assert!((rc.p_value - r.p_value).abs() < 1e-7);
        }
    }

    #[test]
    fn p_decreases_as_separation_grows() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let base: Vec<f64> = (0..30).map(|_| noise.sample(&mut rng)).collect();
        let other: Vec<f64> = (0..25).map(|_| noise.sample(&mut rng)).collect();
        let mut last_p = f64::INFINITY;
        for k in 0..8 {
            let shifted: Vec<f64> = other.iter().map(|v| v + k as f64 * 0.5).collect();
            let r = t_test(&sample("a", base.clone()), &sample("b", shifted), 0.05).unwrap();
            if k > 0 {
                assert!(r.p_value < last_p, "k={k}: {} !< {last_p}", r.p_value);
            }
            last_p = r.p_value;
        }
    }

    #[test]
    fn density_single_value_bump_is_symmetric() {
        let s = sample("s", vec![5.0, 5.0, 5.0]);
        let grid = density_estimate(&s, Bandwidth::Fixed(0.5)).unwrap();
        let peak = grid
            .iter()
            .cloned()
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        assert!((peak.0 - 5.0).abs() < 0.01, "peak at {}", peak.0);
        let n = grid.len();
        for i in 0..n / 2 {
            assert!((grid[i].1 - grid[n - 1 - i].1).abs() < 1e-9);
        }
        assert!(grid.iter().all(|(_, f)| *f >= 0.0));
    }

    #[test]
    fn density_integrates_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let noise = Normal::new(6.0, 1.5).unwrap();
        let s = sample("s", (0..200).map(|_| noise.sample(&mut rng)).collect());
        let grid = density_estimate(&s, Bandwidth::Auto).unwrap();
        let mut integral = 0.0;
        for w in grid.windows(2) {
            integral += 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0);
        }
        assert!((integral - 1.0).abs() < 1e-3, "integral {integral}");
    }

    #[test]
    fn density_bimodal_sample_has_two_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m1 = Normal::new(3.0, 0.5).unwrap();
        let m2 = Normal::new(8.0, 0.5).unwrap();
        let mut values: Vec<f64> = (0..300).map(|_| m1.sample(&mut rng)).collect();
        values.extend((0..300).map(|_| m2.sample(&mut rng)));
        let grid = density_estimate(&sample("s", values), Bandwidth::Auto).unwrap();
        let local_maxima: Vec<f64> = grid
            .windows(3)
            .filter(|w| w[1].1 > w[0].1 && w[1].1 > w[2].1 && w[1].1 > 0.02)
            .map(|w| w[1].0)
            .collect();
        assert!(local_maxima.iter().any(|x| (x - 3.0).abs() < 0.5), "{local_maxima:?}");
        assert!(local_maxima.iter().any(|x| (x - 8.0).abs() < 0.5), "{local_maxima:?}");
    }

    fn canonical_samples() -> Vec<GroupSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        let make = |group: DriverGroup, mu: f64, rng: &mut ChaCha8Rng| {
            let noise = Normal::new(mu, 1.0).unwrap();
            GroupSample::new(group, (0..50).map(|_| noise.sample(rng)).collect()).unwrap()
        };
        vec![
            make(DriverGroup::YoungMan2, 3.0, &mut rng),
            make(DriverGroup::ElderlyWoman, 7.0, &mut rng),
            make(DriverGroup::YoungMan1, 3.0, &mut rng),
            make(DriverGroup::ElderlyMan, 5.5, &mut rng),
        ]
    }

    #[test]
    fn four_canonical_groups_make_seven_ordered_rows() {
        let rows = compare_groups(&canonical_samples(), 0.05).unwrap();
        let labels: Vec<&str> = rows.iter().map(|r| r.label.as_str()).collect();
        assert_eq!(
            labels,
            vec![
                "elderly_woman vs elderly_man",
                "elderly_woman vs young_man_1",
                "elderly_woman vs young_man_2",
                "elderly_man vs young_man_1",
                "elderly_man vs young_man_2",
                "young_man_1 vs young_man_2",
                "young vs elderly",
            ]
        );
        // well separated groups reject; the two young groups do not
        assert_eq!(rows[5].result.decision, Decision::FailToReject);
        assert_eq!(rows[6].result.decision, Decision::Reject);
    }

    #[test]
    fn two_groups_one_row() {
        let rows = compare_groups(
            &[sample("a", vec![1.0, 2.0, 3.0]), sample("b", vec![1.5, 2.5, 3.5])],
            0.05,
        )
        .unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].label, "a vs b");
        assert!(compare_groups(&[sample("a", vec![1.0, 2.0])], 0.05).is_err());
    }

    #[test]
    fn identical_groups_all_fail_to_reject() {
        let values = vec![2.0, 3.0, 4.0, 5.0];
        let samples = vec![
            GroupSample::new(DriverGroup::ElderlyWoman, values.clone()).unwrap(),
            GroupSample::new(DriverGroup::ElderlyMan, values.clone()).unwrap(),
            GroupSample::new(DriverGroup::YoungMan1, values.clone()).unwrap(),
            GroupSample::new(DriverGroup::YoungMan2, values).unwrap(),
        ];
        let rows = compare_groups(&samples, 0.05).unwrap();
        assert_eq!(rows.len(), 7);
        assert!(rows.iter().all(|r| r.result.decision == Decision::FailToReject));
    }

    #[test]
    fn table_export_rounds_to_two_decimals() {
        let rows = vec![Comparison {
            label: "a vs b".into(),
            result: TestResult {
                t_stat: -0.2,
                df: 8.0,
                p_value: 0.8437,
                pooled: true,
                decision: Decision::FailToReject,
            },
        }];
        assert_eq!(serialize_comparisons(&rows), "a vs b,0.84,fail_to_reject\n");
    }
}
