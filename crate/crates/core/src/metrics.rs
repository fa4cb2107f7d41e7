//! Confusion counts and per-class scores with AD as the positive class.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Label;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Counts seen with CN as the positive class.
    pub fn swapped(&self) -> Self {
        ConfusionCounts {
            tp: self.tn,
            fp: self.fn_,
            tn: self.tp,
            fn_: self.fp,
        }
    }
}

pub fn confusion(preds: &[Label], labels: &[Label]) -> Result<ConfusionCounts> {
    if preds.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::InvalidArgument("no predictions to score".into()));
    }
    let mut c = ConfusionCounts::default();
    for (p, l) in preds.iter().zip(labels) {
        match (p, l) {
            (Label::Ad, Label::Ad) => c.tp += 1,
            (Label::Ad, Label::Cn) => c.fp += 1,
            (Label::Cn, Label::Cn) => c.tn += 1,
            (Label::Cn, Label::Ad) => c.fn_ += 1,
        }
    }
    Ok(c)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub accuracy: f64,
    pub precision_ad: f64,
    pub precision_cn: f64,
    pub recall_ad: f64,
    pub recall_cn: f64,
    pub f1_ad: f64,
    pub f1_cn: f64,
}

impl MetricValues {
    pub const NAMES: [&'static str; 7] = [
        "accuracy",
        "precision_ad",
        "precision_cn",
        "recall_ad",
        "recall_cn",
        "f1_ad",
        "f1_cn",
    ];

    pub fn to_array(&self) -> [f64; 7] {
        [
            self.accuracy,
            self.precision_ad,
            self.precision_cn,
            self.recall_ad,
            self.recall_cn,
            self.f1_ad,
            self.f1_cn,
        ]
    }

    pub fn from_array(a: [f64; 7]) -> Self {
        MetricValues {
            accuracy: a[0],
            precision_ad: a[1],
            precision_cn: a[2],
            recall_ad: a[3],
            recall_cn: a[4],
            f1_ad: a[5],
            f1_cn: a[6],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(flatten)]
    pub values: MetricValues,
    pub counts: ConfusionCounts,
    /// Names of metrics whose denominator was zero (reported as 0).
    #[serde(default)]
    pub undefined: Vec<String>,
}

fn ratio(num: u64, den: u64, name: &str, undefined: &mut Vec<String>) -> f64 {
    if den == 0 {
        undefined.push(name.to_owned());
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64, name: &str, undefined: &mut Vec<String>) -> f64 {
    if p + r == 0.0 {
        undefined.push(name.to_owned());
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn metrics(c: &ConfusionCounts) -> Result<MetricsReport> {
    let total = c.total();
    if total == 0 {
        return Err(Error::InvalidArgument("confusion counts are all zero".into()));
    }
    let mut undefined = Vec::new();
    let u = &mut undefined;
    let precision_ad = ratio(c.tp, c.tp + c.fp, "precision_ad", u);
    let recall_ad = ratio(c.tp, c.tp + c.fn_, "recall_ad", u);
    let precision_cn = ratio(c.tn, c.tn + c.fn_, "precision_cn", u);
    let recall_cn = ratio(c.tn, c.tn + c.fp, "recall_cn", u);
    let f1_ad = f1(precision_ad, recall_ad, "f1_ad", u);
    let f1_cn = f1(precision_cn, recall_cn, "f1_cn", u);
    Ok(MetricsReport {
        values: MetricValues {
            accuracy: (c.tp + c.tn) as f64 / total as f64,
            precision_ad,
            precision_cn,
            recall_ad,
            recall_cn,
            f1_ad,
            f1_cn,
        },
        counts: *c,
        undefined,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    MeanProb,
    Majority,
}

/// Collapse one subject's segment probabilities to a single score. For
/// `MeanProb` the score is the mean probability; for `Majority` it is the
/// fraction of segments at or above `threshold`.
pub fn aggregate_subject(segment_probs: &[f64], how: Aggregation, threshold: f64) -> Result<f64> {
    if segment_probs.is_empty() {
        return Err(Error::InvalidArgument("subject has no segments".into()));
    }
    let n = segment_probs.len() as f64;
    Ok(match how {
        Aggregation::MeanProb => segment_probs.iter().sum::<f64>() / n,
        Aggregation::Majority => segment_probs.iter().filter(|&&p| p >= threshold).count() as f64 / n,
    })
}

/// Subject decision from an aggregated score; ties go to AD.
pub fn subject_prediction(score: f64, how: Aggregation, threshold: f64) -> Label {
    let cut = match how {
        Aggregation::MeanProb => threshold,
        Aggregation::Majority => 0.5,
    };
    if score >= cut {
        Label::Ad
    } else {
        Label::Cn
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedAverage {
    pub mean: MetricValues,
    /// Population standard deviation.
    pub sd: MetricValues,
    pub runs: usize,
}

pub fn average_over_seeds(reports: &[MetricsReport]) -> Result<SeedAverage> {
    if reports.is_empty() {
        return Err(Error::InvalidArgument("no reports to average".into()));
    }
    let n = reports.len() as f64;
    // Shifted by the first report so identical inputs average exactly.
    let base = reports[0].values.to_array();
    let mut shift = [0.0; 7];
    for r in reports {
        for ((d, v), b) in shift.iter_mut().zip(r.values.to_array()).zip(base) {
            *d += v - b;
        }
    }
    let mut mean = base;
    for (m, d) in mean.iter_mut().zip(shift) {
        *m += d / n;
    }
    let mut var = [0.0; 7];
    for r in reports {
        for ((s, v), m) in var.iter_mut().zip(r.values.to_array()).zip(mean) {
            *s += (v - m) * (v - m);
        }
    }
    Ok(SeedAverage {
        mean: MetricValues::from_array(mean),
        sd: MetricValues::from_array(var.map(|s| (s / n).sqrt())),
        runs: reports.len(),
    })
}

/// Two-decimal percentage, e.g. `0.942857 -> "94.29"`.
pub fn format_percent(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}
