//! Verification metrics computed from an exact threshold sweep.
//!
//! The decision rule is fixed: a comparison is accepted as a match iff
//! `score >= threshold`. [`build_curves`] evaluates FMR and FNMR at every
//! distinct score plus one sentinel below the minimum and one above the
//! maximum, so every achievable operating point appears on the curve and
//! all rank-based metrics are invariant under strictly increasing score
//! transforms.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric;
use crate::scorebase::{AlignedScores, ScoreTable};

/// FMR and FNMR at every decision threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCurves {
    pub thresholds: Vec<f64>,
    pub fmr: Vec<f64>,
    pub fnmr: Vec<f64>,
    /// Non-mated comparisons accepted at each threshold.
    pub false_matches: Vec<u64>,
    /// Mated comparisons rejected at each threshold.
    pub false_non_matches: Vec<u64>,
    pub n_mated: u64,
    pub n_nonmated: u64,
}

fn check_labelled(scores: &[f64], mated: &[bool]) -> Result<(u64, u64)> {
    if scores.len() != mated.len() {
        return Err(Error::contract(format!(
            "{} scores but {} labels",
            scores.len(),
            mated.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::contract(format!("score {s} is not finite")));
    }
    let n_mated = mated.iter().filter(|&&m| m).count() as u64;
    let n_nonmated = mated.len() as u64 - n_mated;
    if n_mated == 0 || n_nonmated == 0 {
        return Err(Error::contract(format!(
            "need both classes, got {n_mated} mated and {n_nonmated} non-mated"
        )));
    }
    Ok((n_mated, n_nonmated))
}

/// Sweep all thresholds of a labelled score list.
pub fn build_curves(scores: &[f64], mated: &[bool]) -> Result<ThresholdCurves> {
    let (n_mated, n_nonmated) = check_labelled(scores, mated)?;

    let mut sorted: Vec<(f64, bool)> = scores.iter().copied().zip(mated.iter().copied()).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    let lowest = sorted[0].0;
    let highest = sorted[sorted.len() - 1].0;
    let cap = sorted.len() + 2;
    let mut curves = ThresholdCurves {
        thresholds: Vec::with_capacity(cap),
        fmr: Vec::with_capacity(cap),
        fnmr: Vec::with_capacity(cap),
        false_matches: Vec::with_capacity(cap),
        false_non_matches: Vec::with_capacity(cap),
        n_mated,
        n_nonmated,
    };
    let mut push = |t: f64, fm: u64, fnm: u64| {
        curves.thresholds.push(t);
        curves.false_matches.push(fm);
        curves.false_non_matches.push(fnm);
    };

    push(lowest - (1.0 + lowest.abs()), n_nonmated, 0);
    // counts of scores strictly below the current threshold
    let mut mated_below = 0u64;
    let mut nonmated_below = 0u64;
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        push(t, n_nonmated - nonmated_below, mated_below);
        while i < sorted.len() && sorted[i].0 == t {
            if sorted[i].1 {
                mated_below += 1;
            } else {
                nonmated_below += 1;
            }
            i += 1;
        }
    }
    push(highest + (1.0 + highest.abs()), 0, n_mated);

    curves.fmr = curves
        .false_matches
        .iter()
        .map(|&c| c as f64 / n_nonmated as f64)
        .collect();
    curves.fnmr = curves
        .false_non_matches
        .iter()
        .map(|&c| c as f64 / n_mated as f64)
        .collect();
    Ok(curves)
}

impl ThresholdCurves {
    pub fn from_table(table: &ScoreTable) -> Result<Self> {
        build_curves(&table.scores(), &table.labels())
    }

    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    /// ROC points `(FMR, 1 − FNMR)` in ascending FMR order.
    pub fn roc(&self) -> RocCurve {
        RocCurve {
            points: self
                .fmr
                .iter()
                .zip(&self.fnmr)
                .rev()
                .map(|(&f, &n)| (f, 1.0 - n))
                .collect(),
        }
    }

    /// `threshold,fmr,fnmr` rows, ascending threshold.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "threshold,fmr,fnmr")?;
        for ((t, f), n) in self.thresholds.iter().zip(&self.fmr).zip(&self.fnmr) {
            writeln!(w, "{t},{f},{n}")?;
        }
        Ok(())
    }

    /// Sign-exact `FMR − FNMR` at index `k`, scaled by `n_mated · n_nonmated`.
    fn scaled_gap(&self, k: usize) -> i128 {
        self.false_matches[k] as i128 * self.n_mated as i128
            - self.false_non_matches[k] as i128 * self.n_nonmated as i128
    }
}

/// ROC curve as `(FMR, 1 − FNMR)` points sorted by FMR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<(f64, f64)>,
}

impl RocCurve {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "fmr,one_minus_fnmr")?;
        for (f, t) in &self.points {
            writeln!(w, "{f},{t}")?;
        }
        Ok(())
    }
}

/// Area under the ROC curve by the trapezoid rule.
///
/// The area is accumulated in integer counts and divided once, so the result
/// equals the tie-corrected Mann–Whitney statistic
/// `P(mated > non-mated) + ½·P(tie)` up to the final rounding.
pub fn auc(curves: &ThresholdCurves) -> f64 {
    let n1 = curves.n_mated as u128;
    let mut twice_area: u128 = 0;
    for k in 0..curves.len() - 1 {
        let d_fm = (curves.false_matches[k] - curves.false_matches[k + 1]) as u128;
        let tp_here = n1 - curves.false_non_matches[k] as u128;
        let tp_next = n1 - curves.false_non_matches[k + 1] as u128;
        twice_area += d_fm * (tp_here + tp_next);
    }
    twice_area as f64 / (2 * n1 * curves.n_nonmated as u128) as f64
}

/// Operating point where FMR and FNMR meet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EerPoint {
    pub fmr: f64,
    pub fnmr: f64,
    /// Index of the last curve point with FMR ≥ FNMR.
    pub index: usize,
    /// Interpolation weight towards `index + 1`; zero on an exact crossing.
    pub alpha: f64,
}

impl EerPoint {
    pub fn rate(&self) -> f64 {
        self.fmr
    }
}

/// Locate the equal error point.
///
/// Returns the common value where FMR equals FNMR at a threshold, otherwise
/// linearly interpolates both rates between the two adjacent thresholds
/// where `FMR − FNMR` changes sign.
pub fn eer_point(curves: &ThresholdCurves) -> EerPoint {
    // gap is non-increasing, +n0·n1 at the bottom sentinel and −n0·n1 at the top
    for k in 0..curves.len() {
        let gap = curves.scaled_gap(k);
        if gap == 0 {
            return EerPoint {
                fmr: curves.fmr[k],
                fnmr: curves.fnmr[k],
                index: k,
                alpha: 0.0,
            };
        }
        let next = curves.scaled_gap(k + 1);
        if next < 0 {
            let alpha = gap as f64 / (gap - next) as f64;
            let lerp = |v: &[f64]| v[k] + alpha * (v[k + 1] - v[k]);
            return EerPoint {
                fmr: lerp(&curves.fmr),
                fnmr: lerp(&curves.fnmr),
                index: k,
                alpha,
            };
        }
    }
    unreachable!("threshold curves always end with FMR = 0 < FNMR = 1")
}

pub fn eer(curves: &ThresholdCurves) -> f64 {
    eer_point(curves).rate()
}

/// An operating point fixed by one of the two error rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatingPoint {
    Fmr(f64),
    Fnmr(f64),
}

/// The complementary error rate at a fixed FMR or FNMR.
///
/// For `Fmr(q)` the lowest threshold reaching `FMR ≤ q` is located; if FMR
/// equals `q` there, its FNMR is returned, otherwise FNMR is interpolated
/// linearly between that threshold and the one below it at `FMR = q`.
/// `Fnmr(q)` mirrors this from the top of the threshold range.
pub fn rate_at_operating_point(curves: &ThresholdCurves, point: OperatingPoint) -> Result<f64> {
    let q = match point {
        OperatingPoint::Fmr(q) | OperatingPoint::Fnmr(q) => q,
    };
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::contract(format!("operating rate {q} must lie in (0, 1)")));
    }
    let lerp = |v: &[f64], a: usize, b: usize, alpha: f64| v[a] + alpha * (v[b] - v[a]);
    Ok(match point {
        OperatingPoint::Fmr(q) => {
            let k = curves
                .fmr
                .iter()
                .position(|&f| f <= q)
                .expect("top sentinel has FMR 0");
            if curves.fmr[k] == q {
                curves.fnmr[k]
            } else {
                let alpha = (curves.fmr[k - 1] - q) / (curves.fmr[k - 1] - curves.fmr[k]);
                lerp(&curves.fnmr, k - 1, k, alpha)
            }
        }
        OperatingPoint::Fnmr(q) => {
            let k = curves
                .fnmr
                .iter()
                .rposition(|&f| f <= q)
                .expect("bottom sentinel has FNMR 0");
            if curves.fnmr[k] == q {
                curves.fmr[k]
            } else {
                let alpha = (q - curves.fnmr[k]) / (curves.fnmr[k + 1] - curves.fnmr[k]);
                lerp(&curves.fmr, k, k + 1, alpha)
            }
        }
    })
}

/// Standardised mean difference between mated and non-mated scores, using
/// the pooled unbiased standard deviation.
pub fn cohens_d(scores: &[f64], mated: &[bool]) -> Result<f64> {
    check_labelled(scores, mated)?;
    let (m, n): (Vec<f64>, Vec<f64>) = {
        let mut m = Vec::new();
        let mut n = Vec::new();
        for (&s, &l) in scores.iter().zip(mated) {
            if l {
                m.push(s)
            } else {
                n.push(s)
            }
        }
        (m, n)
    };
    if m.len() < 2 || n.len() < 2 {
        return Err(Error::UndefinedEffect(format!(
            "need two samples per class, got {} mated and {} non-mated",
            m.len(),
            n.len()
        )));
    }
    let (n1, n0) = (m.len() as f64, n.len() as f64);
    let v1 = numeric::sample_variance(&m).unwrap_or(0.0);
    let v0 = numeric::sample_variance(&n).unwrap_or(0.0);
    let pooled = (((n1 - 1.0) * v1 + (n0 - 1.0) * v0) / (n1 + n0 - 2.0)).sqrt();
    if !(pooled > 0.0) {
        return Err(Error::UndefinedEffect("pooled standard deviation is zero".into()));
    }
    let diff = numeric::mean(&m).unwrap_or(0.0) - numeric::mean(&n).unwrap_or(0.0);
    Ok(diff / pooled)
}

/// Pearson product-moment correlation.
pub fn pcc(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::contract(format!(
            "correlation needs two series of equal length ≥ 2, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let ma = numeric::mean(a).unwrap_or(0.0);
    let mb = numeric::mean(b).unwrap_or(0.0);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::contract("correlation undefined for a zero-variance series"));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Pairwise Pearson correlation between matcher score columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub matcher_ids: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl CorrelationMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "matcher,{}", self.matcher_ids.join(","))?;
        for (id, row) in self.matcher_ids.iter().zip(&self.values) {
            let cells: Vec<String> = row.iter().map(f64::to_string).collect();
            writeln!(w, "{id},{}", cells.join(","))?;
        }
        Ok(())
    }
}

pub fn correlation_matrix(aligned: &AlignedScores) -> Result<CorrelationMatrix> {
    let n = aligned.n_matchers();
    let columns: Vec<Vec<f64>> = (0..n).map(|j| aligned.column(j)).collect();
    for (id, col) in aligned.matcher_ids().iter().zip(&columns) {
        if numeric::sample_variance(col).is_none_or(|v| v == 0.0) {
            return Err(Error::contract(format!(
                "matcher `{id}` has zero score variance; correlation undefined"
            )));
        }
    }
    let mut values = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let r = pcc(&columns[i], &columns[j])?;
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(CorrelationMatrix {
        matcher_ids: aligned.matcher_ids().to_vec(),
        values,
    })
}

/// The five headline verification metrics of one score list.
///
/// Rates are percentages. `cohens_d` is `None` when the pooled standard
/// deviation vanishes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auc_pct: f64,
    pub eer_pct: f64,
    pub cohens_d: Option<f64>,
    pub fmr_at_fnmr1_pct: f64,
    pub fnmr_at_fmr1_pct: f64,
    pub n_mated: u64,
    pub n_nonmated: u64,
}

pub type MetricAccessor = fn(&MetricsReport) -> Option<f64>;

/// Field names and accessors in report column order.
pub const REPORT_METRICS: [(&str, MetricAccessor); 5] = [
    ("auc_pct", |r| Some(r.auc_pct)),
    ("eer_pct", |r| Some(r.eer_pct)),
    ("cohens_d", |r| r.cohens_d),
    ("fmr_at_fnmr1_pct", |r| Some(r.fmr_at_fnmr1_pct)),
    ("fnmr_at_fmr1_pct", |r| Some(r.fnmr_at_fmr1_pct)),
];

pub fn evaluate(scores: &[f64], mated: &[bool]) -> Result<MetricsReport> {
    let curves = build_curves(scores, mated)?;
    report_from_curves(&curves, scores, mated)
}

pub fn evaluate_table(table: &ScoreTable) -> Result<MetricsReport> {
    evaluate(&table.scores(), &table.labels())
}

pub fn report_from_curves(
    curves: &ThresholdCurves,
    scores: &[f64],
    mated: &[bool],
) -> Result<MetricsReport> {
    let d = match cohens_d(scores, mated) {
        Ok(d) => Some(d),
        Err(Error::UndefinedEffect(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(MetricsReport {
        auc_pct: 100.0 * auc(curves),
        eer_pct: 100.0 * eer(curves),
        cohens_d: d,
        fmr_at_fnmr1_pct: 100.0 * rate_at_operating_point(curves, OperatingPoint::Fnmr(0.01))?,
        fnmr_at_fmr1_pct: 100.0 * rate_at_operating_point(curves, OperatingPoint::Fmr(0.01))?,
        n_mated: curves.n_mated,
        n_nonmated: curves.n_nonmated,
    })
}
