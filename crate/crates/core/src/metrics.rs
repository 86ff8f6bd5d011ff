//! Equal error rate and per-class reporting.
//!
//! A sample is predicted positive when its score is at or above the
//! threshold. The EER is read off where the piecewise-linear FPR and FNR
//! curves cross.

use std::fmt::Write as _;

use crate::dataset::{CLASS_TAGS, NUM_CLASSES};
use crate::error::{Error, Result};

/// Scores with binary ground truth for one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
}

impl ScoreSet {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::Shape(format!("{} scores but {} labels", scores.len(), labels.len())));
        }
        Ok(ScoreSet { scores, labels })
    }

    fn counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&l| l).count();
        (pos, self.labels.len() - pos)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub fnr: f64,
}

/// Operating points in increasing threshold order: `-inf`, every distinct
/// score, `+inf`.
pub fn roc_points(s: &ScoreSet) -> Result<Vec<RocPoint>> {
    let (pos, neg) = s.counts();
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateClass(0));
    }
    let mut order: Vec<(f64, bool)> = s.scores.iter().copied().zip(s.labels.iter().copied()).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));

    let (pos, neg) = (pos as f64, neg as f64);
    let mut points = vec![RocPoint { threshold: f64::NEG_INFINITY, fpr: 1.0, fnr: 0.0 }];
    // scanning upward, everything strictly below the threshold is negative
    let (mut fn_count, mut tn_count) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = order[i].0;
        points.push(RocPoint { threshold: t, fpr: (neg - tn_count as f64) / neg, fnr: fn_count as f64 / pos });
        while i < order.len() && order[i].0 == t {
            if order[i].1 {
                fn_count += 1;
            } else {
                tn_count += 1;
            }
            i += 1;
        }
    }
    points.push(RocPoint { threshold: f64::INFINITY, fpr: 0.0, fnr: 1.0 });
    Ok(points)
}

/// EER by linear interpolation between the two ROC points that bracket
/// `FPR == FNR`.
pub fn eer(s: &ScoreSet) -> Result<f64> {
    let points = roc_points(s)?;
    let mut prev = points[0];
    for &p in &points {
        let d = p.fnr - p.fpr;
        if d == 0.0 {
            return Ok(p.fpr);
        }
        if d > 0.0 {
            let d0 = prev.fnr - prev.fpr;
            let t = -d0 / (d - d0);
            return Ok((prev.fpr + t * (p.fpr - prev.fpr)).clamp(0.0, 1.0));
        }
        prev = p;
    }
    unreachable!("the +inf sentinel always has FNR > FPR")
}

/// Per-class EERs with their mean and sample variance.
#[derive(Debug, Clone, PartialEq)]
pub struct EerReport {
    /// `None` for classes without both positives and negatives.
    pub per_class: [Option<f64>; NUM_CLASSES],
    pub average: f64,
    /// Sample variance (n - 1 denominator) across the present classes.
    pub variance: f64,
}

impl EerReport {
    pub fn from_per_class(per_class: [Option<f64>; NUM_CLASSES]) -> Self {
        let vals: Vec<f64> = per_class.iter().flatten().copied().collect();
        let (average, variance) = mean_and_sample_variance(&vals);
        EerReport { per_class, average, variance }
    }

    pub fn from_values(values: &[f64; NUM_CLASSES]) -> Self {
        Self::from_per_class(values.map(Some))
    }

    pub fn classes_present(&self) -> usize {
        self.per_class.iter().flatten().count()
    }

    /// `class,eer` rows followed by `avg` and `var` footer rows. Skipped
    /// classes have an empty value.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,eer\n");
        for (tag, v) in CLASS_TAGS.iter().zip(&self.per_class) {
            match v {
                Some(v) => writeln!(out, "{tag},{v:.6}").unwrap(),
                None => writeln!(out, "{tag},").unwrap(),
            }
        }
        writeln!(out, "avg,{:.6}", self.average).unwrap();
        writeln!(out, "var,{:.6}", self.variance).unwrap();
        out
    }

    pub fn summary_line(&self) -> String {
        format!("EER_AVG={:.6} EER_VAR={:.6}", self.average, self.variance)
    }

    /// Element-wise mean of several reports. A class is averaged over the
    /// reports where it is present.
    pub fn mean_of(reports: &[EerReport]) -> Option<EerReport> {
        if reports.is_empty() {
            return None;
        }
        let mut per_class = [None; NUM_CLASSES];
        for (c, slot) in per_class.iter_mut().enumerate() {
            let vals: Vec<f64> = reports.iter().filter_map(|r| r.per_class[c]).collect();
            if !vals.is_empty() {
                *slot = Some(vals.iter().sum::<f64>() / vals.len() as f64);
            }
        }
        let n = reports.len() as f64;
        Some(EerReport {
            per_class,
            average: reports.iter().map(|r| r.average).sum::<f64>() / n,
            variance: reports.iter().map(|r| r.variance).sum::<f64>() / n,
        })
    }
}

pub fn mean_and_sample_variance(vals: &[f64]) -> (f64, f64) {
    if vals.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    if vals.len() < 2 {
        return (mean, 0.0);
    }
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

fn class_scores(scores: &[[f64; NUM_CLASSES]], labels: &[[f64; NUM_CLASSES]], c: usize) -> ScoreSet {
    ScoreSet { scores: scores.iter().map(|s| s[c]).collect(), labels: labels.iter().map(|l| l[c] >= 0.5).collect() }
}

/// Strict report: every class must have positives and negatives.
pub fn per_class_report(scores: &[[f64; NUM_CLASSES]], labels: &[[f64; NUM_CLASSES]]) -> Result<EerReport> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!("{} score rows but {} label rows", scores.len(), labels.len())));
    }
    let mut per_class = [None; NUM_CLASSES];
    for (c, slot) in per_class.iter_mut().enumerate() {
        *slot = Some(eer(&class_scores(scores, labels, c)).map_err(|_| Error::DegenerateClass(c))?);
    }
    Ok(EerReport::from_per_class(per_class))
}

/// Like [`per_class_report`] but skips degenerate classes, returning their
/// indices alongside the report.
pub fn per_class_report_lenient(
    scores: &[[f64; NUM_CLASSES]],
    labels: &[[f64; NUM_CLASSES]],
) -> Result<(EerReport, Vec<usize>)> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!("{} score rows but {} label rows", scores.len(), labels.len())));
    }
    let mut per_class = [None; NUM_CLASSES];
    let mut skipped = Vec::new();
    for (c, slot) in per_class.iter_mut().enumerate() {
        match eer(&class_scores(scores, labels, c)) {
            Ok(v) => *slot = Some(v),
            Err(Error::DegenerateClass(_)) => skipped.push(c),
            Err(e) => return Err(e),
        }
    }
    if skipped.len() == NUM_CLASSES {
        return Err(Error::DegenerateClass(0));
    }
    Ok((EerReport::from_per_class(per_class), skipped))
}
