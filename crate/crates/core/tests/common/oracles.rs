//! Independent reference computations, written as directly as possible.

use std::collections::BTreeSet;

/// Dice, IoU, precision and recall from set sizes of the foreground indices.
pub fn overlap_by_sets(pred: &[u8], gt: &[u8]) -> [f64; 4] {
    let x: BTreeSet<usize> = (0..pred.len()).filter(|&i| pred[i] == 1).collect();
    let y: BTreeSet<usize> = (0..gt.len()).filter(|&i| gt[i] == 1).collect();
    if x.is_empty() && y.is_empty() {
        return [1.0; 4];
    }
    let inter = x.intersection(&y).count() as f64;
    let union = x.union(&y).count() as f64;
    let div = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
    [div(2.0 * inter, (x.len() + y.len()) as f64), div(inter, union), div(inter, x.len() as f64), div(inter, y.len() as f64)]
}

pub fn soft_dice(p: &[f64], g: &[f64], eps: f64) -> f64 {
    let mut num = eps;
    let mut den = eps;
    for i in 0..p.len() {
        num += 2.0 * p[i] * g[i];
        den += p[i] * p[i] + g[i] * g[i];
    }
    1.0 - num / den
}

pub fn bce(p: &[f64], g: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..p.len() {
        let q = p[i].clamp(1e-7, 1.0 - 1e-7);
        total -= g[i] * q.ln() + (1.0 - g[i]) * (1.0 - q).ln();
    }
    total / p.len() as f64
}

/// Average 1-based rank of each magnitude, by counting.
pub fn ranks_by_counting(m: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|&a| {
            let less = m.iter().filter(|&&b| b < a).count() as f64;
            let equal = m.iter().filter(|&&b| b == a).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Two-sided signed-rank p-value by visiting every sign pattern.
pub fn wilcoxon_by_enumeration(diffs: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = diffs.iter().copied().filter(|&x| x != 0.0).collect();
    let n = d.len();
    let ranks = ranks_by_counting(&d.iter().map(|x| x.abs()).collect::<Vec<_>>());
    let w: f64 = (0..n).filter(|&i| d[i] > 0.0).map(|i| ranks[i]).sum();
    let (mut le, mut ge) = (0u64, 0u64);
    for pattern in 0u64..(1 << n) {
        let s: f64 = (0..n).filter(|&i| pattern >> i & 1 == 1).map(|i| ranks[i]).sum();
        if s <= w + 1e-9 {
            le += 1;
        }
        if s >= w - 1e-9 {
            ge += 1;
        }
    }
    let total = (1u64 << n) as f64;
    (w, (2.0 * le.min(ge) as f64 / total).min(1.0))
}

/// Published two-sided critical values of the signed-rank statistic at
/// alpha = 0.05, for n = 10..=20: reject when min(W+, W-) <= value.
pub const CRITICAL_05: [(usize, u32); 11] =
    [(10, 8), (11, 10), (12, 13), (13, 17), (14, 21), (15, 25), (16, 29), (17, 34), (18, 40), (19, 46), (20, 52)];

/// Differences with magnitudes 1..=n whose positive ranks sum to `w`
/// (greedy from the largest rank).
pub fn diffs_with_w(n: usize, w: u32) -> Vec<f64> {
    let mut left = w as usize;
    let mut d: Vec<f64> = (1..=n).map(|r| -(r as f64)).collect();
    for r in (1..=n).rev() {
        if r <= left {
            d[r - 1] = r as f64;
            left -= r;
        }
    }
    assert_eq!(left, 0);
    d
}
