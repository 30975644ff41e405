//! Paired lesion-volume comparison: Wilcoxon signed-rank test, Pearson
//! correlation and box-plot summaries.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, IoContext, Result};

/// Largest effective sample size for which the exact null distribution is used.
pub const EXACT_MAX_N: usize = 25;

/// Count of ones times the voxel volume (product of spacings).
pub fn lesion_volume(mask: &[u8], spacing: [f64; 3]) -> Result<f64> {
    let mut ones = 0u64;
    for &m in mask {
        match m {
            0 => {}
            1 => ones += 1,
            v => return Err(Error::Invalid(format!("mask value {v} is not binary"))),
        }
    }
    Ok(ones as f64 * spacing.iter().product::<f64>())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumePair {
    pub subject_id: String,
    pub actual: f64,
    pub predicted: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Alternative {
    TwoSided,
    /// Differences tend to be positive.
    Greater,
    Less,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Exact,
    NormalApprox,
    /// Every difference was zero.
    Degenerate,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::NormalApprox => "normal_approx",
            Method::Degenerate => "degenerate",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [Method::Exact, Method::NormalApprox, Method::Degenerate].into_iter().find(|m| m.name() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of the ranks of positive differences.
    pub w: f64,
    pub p_value: f64,
    pub n_effective: usize,
    pub method: Method,
}

/// Average ranks (1-based) of `values`, plus the sizes of tie groups.
fn average_ranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        if j - i > 1 {
            ties.push(j - i);
        }
        i = j;
    }
    (ranks, ties)
}

/// Number of sign patterns giving each value of `2 W`, for the given
/// (possibly half-integer) ranks.
fn exact_counts(ranks: &[f64]) -> Vec<u64> {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0u64; total + 1];
    counts[0] = 1;
    let mut reach = 0;
    for &d in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] > 0 {
                counts[s + d] += counts[s];
            }
        }
        reach += d;
    }
    counts
}

/// Nonzero differences with their average ranks and tie-group sizes, and W.
struct Ranked {
    nonzero: Vec<f64>,
    ranks: Vec<f64>,
    ties: Vec<usize>,
    w: f64,
}

fn rank_differences(diffs: &[f64]) -> Result<Ranked> {
    if diffs.is_empty() {
        return Err(Error::Invalid("Wilcoxon test needs at least one pair".into()));
    }
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::Numeric("non-finite paired difference".into()));
    }
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
    let magnitudes: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let (ranks, ties) = average_ranks(&magnitudes);
    let w: f64 = nonzero.iter().zip(&ranks).filter(|(&d, _)| d > 0.0).fold(0.0, |acc, (_, &r)| acc + r);
    Ok(Ranked { nonzero, ranks, ties, w })
}

fn degenerate() -> WilcoxonResult {
    WilcoxonResult { w: 0.0, p_value: 1.0, n_effective: 0, method: Method::Degenerate }
}

/// Signed-rank test on paired differences. Zero differences are dropped
/// and tied magnitudes share average ranks. The exact null distribution is
/// used up to [`EXACT_MAX_N`] nonzero differences, the normal approximation
/// beyond.
pub fn wilcoxon_signed_rank(diffs: &[f64], alternative: Alternative) -> Result<WilcoxonResult> {
    let n = rank_differences(diffs)?.nonzero.len();
    if n <= EXACT_MAX_N {
        wilcoxon_exact(diffs, alternative)
    } else {
        wilcoxon_normal(diffs, alternative)
    }
}

/// Exact p-value from the distribution of W over all sign patterns of the
/// observed ranks. Practical up to a few thousand rank units.
pub fn wilcoxon_exact(diffs: &[f64], alternative: Alternative) -> Result<WilcoxonResult> {
    let r = rank_differences(diffs)?;
    let n = r.nonzero.len();
    if n == 0 {
        return Ok(degenerate());
    }
    let counts = exact_counts(&r.ranks);
    let w2 = (2.0 * r.w).round() as usize;
    let all = 2f64.powi(n as i32);
    let lower = counts[..=w2].iter().sum::<u64>() as f64 / all;
    let upper = counts[w2..].iter().sum::<u64>() as f64 / all;
    let p = match alternative {
        Alternative::TwoSided => (2.0 * lower.min(upper)).min(1.0),
        Alternative::Greater => upper,
        Alternative::Less => lower,
    };
    Ok(WilcoxonResult { w: r.w, p_value: p, n_effective: n, method: Method::Exact })
}

/// Normal approximation with tie and continuity corrections.
pub fn wilcoxon_normal(diffs: &[f64], alternative: Alternative) -> Result<WilcoxonResult> {
    let r = rank_differences(diffs)?;
    let n = r.nonzero.len();
    if n == 0 {
        return Ok(degenerate());
    }
    let w = r.w;
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let tie_term: f64 = r.ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
    let sd = (nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term).sqrt();
    if sd == 0.0 {
        return Ok(WilcoxonResult { w, p_value: 1.0, n_effective: n, method: Method::NormalApprox });
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let p = match alternative {
        Alternative::TwoSided => {
            let z = (((w - mean).abs() - 0.5) / sd).max(0.0);
            (2.0 * normal.sf(z)).min(1.0)
        }
        Alternative::Greater => normal.sf((w - mean - 0.5) / sd),
        Alternative::Less => normal.cdf((w - mean + 0.5) / sd),
    };
    Ok(WilcoxonResult { w, p_value: p, n_effective: n, method: Method::NormalApprox })
}

/// Test on `predicted - actual`.
pub fn wilcoxon_pairs(pairs: &[VolumePair], alternative: Alternative) -> Result<WilcoxonResult> {
    let diffs: Vec<f64> = pairs.iter().map(|p| p.predicted - p.actual).collect();
    wilcoxon_signed_rank(&diffs, alternative)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PearsonResult {
    pub r: f64,
    pub p_value: f64,
}

/// Correlation with a two-sided p-value from Student's t on `n - 2` degrees
/// of freedom.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<PearsonResult> {
    if x.len() != y.len() {
        return Err(Error::Invalid(format!("series lengths differ: {} vs {}", x.len(), y.len())));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::Invalid(format!("Pearson correlation needs at least 3 pairs, got {n}")));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Numeric("correlation undefined for a constant series".into()));
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p_value = if r.abs() == 1.0 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Numeric(e.to_string()))?;
        (2.0 * dist.sf(t.abs())).min(1.0)
    };
    Ok(PearsonResult { r, p_value })
}

/// Five-number summary with linearly interpolated quartiles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxSummary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Quantile at `q` with `h = (n - 1) q`, interpolating between closest ranks.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn box_summary(values: &[f64]) -> Result<BoxSummary> {
    if values.is_empty() {
        return Err(Error::Invalid("box summary of an empty series".into()));
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(BoxSummary { min: s[0], q1: quantile(&s, 0.25), median: quantile(&s, 0.5), q3: quantile(&s, 0.75), max: s[s.len() - 1] })
}

/// Everything reported for one model's paired volumes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeReport {
    pub model_id: String,
    pub pairs: Vec<VolumePair>,
    pub wilcoxon: WilcoxonResult,
    /// Absent when fewer than 3 pairs or a series is constant.
    pub pearson: Option<PearsonResult>,
    pub pearson_note: Option<String>,
    pub actual_box: BoxSummary,
    pub predicted_box: BoxSummary,
}

pub fn volume_report(model_id: &str, pairs: &[VolumePair], alternative: Alternative) -> Result<VolumeReport> {
    let wilcoxon = wilcoxon_pairs(pairs, alternative)?;
    let actual: Vec<f64> = pairs.iter().map(|p| p.actual).collect();
    let predicted: Vec<f64> = pairs.iter().map(|p| p.predicted).collect();
    let (pearson, pearson_note) = match pearson(&actual, &predicted) {
        Ok(r) => (Some(r), None),
        Err(Error::Invalid(msg) | Error::Numeric(msg)) => (None, Some(msg)),
        Err(e) => return Err(e),
    };
    Ok(VolumeReport {
        model_id: model_id.to_string(),
        pairs: pairs.to_vec(),
        wilcoxon,
        pearson,
        pearson_note,
        actual_box: box_summary(&actual)?,
        predicted_box: box_summary(&predicted)?,
    })
}

pub const VOLUMES_HEADER: &str = "model_id,subject_id,actual_mm3,predicted_mm3";
pub const STATS_HEADER: &str = "model_id,W,wilcoxon_p,method,pearson_r,pearson_p,n";

/// Paired volumes grouped by model, in first-appearance order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PairedVolumes {
    pub models: Vec<(String, Vec<VolumePair>)>,
}

impl PairedVolumes {
    pub fn push(&mut self, model_id: &str, pair: VolumePair) {
        match self.models.iter_mut().find(|(m, _)| m == model_id) {
            Some((_, v)) => v.push(pair),
            None => self.models.push((model_id.to_string(), vec![pair])),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{VOLUMES_HEADER}\n");
        for (model, pairs) in &self.models {
            for p in pairs {
                writeln!(out, "{model},{},{},{}", p.subject_id, p.actual, p.predicted).unwrap();
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> std::result::Result<Self, String> {
        let mut lines = text.lines();
        if lines.next() != Some(VOLUMES_HEADER) {
            return Err(format!("expected header '{VOLUMES_HEADER}'"));
        }
        let mut out = PairedVolumes::default();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(format!("row {}: expected 4 fields", i + 1));
            }
            let num = |s: &str| match s.parse::<f64>() {
                Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
                _ => Err(format!("row {}: '{s}' is not a non-negative volume", i + 1)),
            };
            out.push(f[0], VolumePair { subject_id: f[1].to_string(), actual: num(f[2])?, predicted: num(f[3])? });
        }
        Ok(out)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).at(path)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).at(path)?;
        Self::from_csv(&text).map_err(|e| Error::format(path, e))
    }
}

/// One row of the stats table, as written and read back.
#[derive(Clone, Debug, PartialEq)]
pub struct StatsRow {
    pub model_id: String,
    pub w: f64,
    pub wilcoxon_p: f64,
    pub method: Method,
    pub pearson: Option<PearsonResult>,
    pub n: usize,
}

impl From<&VolumeReport> for StatsRow {
    fn from(r: &VolumeReport) -> Self {
        StatsRow {
            model_id: r.model_id.clone(),
            w: r.wilcoxon.w,
            wilcoxon_p: r.wilcoxon.p_value,
            method: r.wilcoxon.method,
            pearson: r.pearson,
            n: r.pairs.len(),
        }
    }
}

pub fn stats_csv(rows: &[StatsRow]) -> String {
    let mut out = format!("{STATS_HEADER}\n");
    for r in rows {
        let (pr, pp) = match r.pearson {
            Some(p) => (p.r.to_string(), p.p_value.to_string()),
            None => (String::new(), String::new()),
        };
        writeln!(out, "{},{},{},{},{pr},{pp},{}", r.model_id, r.w, r.wilcoxon_p, r.method.name(), r.n).unwrap();
    }
    out
}

pub fn parse_stats_csv(text: &str) -> std::result::Result<Vec<StatsRow>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(STATS_HEADER) {
        return Err(format!("expected header '{STATS_HEADER}'"));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(format!("row {}: expected 7 fields", i + 1));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| format!("row {}: {e}", i + 1));
        let pearson = match (f[4], f[5]) {
            ("", "") => None,
            (r, p) => Some(PearsonResult { r: num(r)?, p_value: num(p)? }),
        };
        rows.push(StatsRow {
            model_id: f[0].to_string(),
            w: num(f[1])?,
            wilcoxon_p: num(f[2])?,
            method: Method::parse(f[3]).ok_or_else(|| format!("row {}: unknown method '{}'", i + 1, f[3]))?,
            pearson,
            n: f[6].parse().map_err(|e| format!("row {}: {e}", i + 1))?,
        });
    }
    Ok(rows)
}
