//! Overlap metrics on binary masks and per-sample reports.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// `p >= threshold` maps to 1.
pub fn binarize(p: &[f32], threshold: f64) -> Vec<u8> {
    p.iter().map(|&v| (v as f64 >= threshold) as u8).collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

pub fn confusion(pred: &[u8], gt: &[u8]) -> Result<ConfusionCounts> {
    if pred.len() != gt.len() {
        return Err(Error::Invalid(format!("prediction has {} elements, target {}", pred.len(), gt.len())));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.iter().zip(gt) {
        match (p, g) {
            (1, 1) => c.tp += 1,
            (1, 0) => c.fp += 1,
            (0, 1) => c.fn_ += 1,
            (0, 0) => c.tn += 1,
            _ => return Err(Error::Invalid(format!("non-binary mask value ({p}, {g})"))),
        }
    }
    Ok(c)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub dice: f64,
    pub iou: f64,
    pub precision: f64,
    pub recall: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Both masks empty scores 1 everywhere; any other zero denominator gives 0.
    pub fn scores(&self) -> Scores {
        if self.tp + self.fp + self.fn_ == 0 {
            return Scores { dice: 1.0, iou: 1.0, precision: 1.0, recall: 1.0 };
        }
        Scores {
            dice: ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_),
            iou: ratio(self.tp, self.tp + self.fp + self.fn_),
            precision: ratio(self.tp, self.tp + self.fp),
            recall: ratio(self.tp, self.tp + self.fn_),
        }
    }
}

pub fn metrics(pred: &[u8], gt: &[u8]) -> Result<Scores> {
    Ok(confusion(pred, gt)?.scores())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleScores {
    pub sample_id: String,
    pub scores: Scores,
}

/// Per-sample scores with their macro average.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub samples: Vec<SampleScores>,
}

pub const REPORT_HEADER: &str = "sample_id,dice,iou,precision,recall";

impl MetricsReport {
    pub fn push(&mut self, sample_id: impl Into<String>, scores: Scores) {
        self.samples.push(SampleScores { sample_id: sample_id.into(), scores });
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Arithmetic mean over samples, summed in sample order.
    pub fn mean(&self) -> Option<Scores> {
        if self.samples.is_empty() {
            return None;
        }
        let n = self.samples.len() as f64;
        let mut m = Scores { dice: 0.0, iou: 0.0, precision: 0.0, recall: 0.0 };
        for s in &self.samples {
            m.dice += s.scores.dice;
            m.iou += s.scores.iou;
            m.precision += s.scores.precision;
            m.recall += s.scores.recall;
        }
        Some(Scores { dice: m.dice / n, iou: m.iou / n, precision: m.precision / n, recall: m.recall / n })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for s in &self.samples {
            let c = &s.scores;
            writeln!(out, "{},{},{},{},{}", s.sample_id, c.dice, c.iou, c.precision, c.recall).unwrap();
        }
        out
    }

    pub fn from_csv(text: &str) -> std::result::Result<Self, String> {
        let mut lines = text.lines();
        if lines.next() != Some(REPORT_HEADER) {
            return Err(format!("expected header '{REPORT_HEADER}'"));
        }
        let mut report = MetricsReport::default();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(format!("row {}: expected 5 fields", i + 1));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| format!("row {}: {e}", i + 1));
            report.push(f[0], Scores { dice: num(f[1])?, iou: num(f[2])?, precision: num(f[3])?, recall: num(f[4])? });
        }
        Ok(report)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).at(path)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).at(path)?;
        Self::from_csv(&text).map_err(|e| Error::format(path, e))
    }

    /// Two-line macro-averaged summary: `Dice IoU Precision Recall`.
    pub fn summary(&self) -> String {
        let m = self.mean().unwrap_or(Scores { dice: 0.0, iou: 0.0, precision: 0.0, recall: 0.0 });
        format!(
            "{:<10} {:<10} {:<10} {:<10} (macro mean over {} samples)\n{:<10.4} {:<10.4} {:<10.4} {:<10.4}\n",
            "Dice",
            "IoU",
            "Precision",
            "Recall",
            self.samples.len(),
            m.dice,
            m.iou,
            m.precision,
            m.recall
        )
    }
}
