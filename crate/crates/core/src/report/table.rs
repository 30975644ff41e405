//! Plain-text result tables laid out like the usual benchmark tables:
//! one row per model, metrics in the order Dice, IoU, Precision, Recall.

use std::fmt::Write as _;

use crate::metrics::Scores;
use crate::stats::StatsRow;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelRow {
    pub model: String,
    pub scores: Scores,
    pub samples: usize,
}

pub fn metrics_table(title: &str, rows: &[ModelRow]) -> String {
    let mut out = format!("{title}\n\n");
    writeln!(out, "| Model | Dice | IoU | Precision | Recall | Test samples |").unwrap();
    writeln!(out, "|---|---|---|---|---|---|").unwrap();
    for r in rows {
        let s = &r.scores;
        writeln!(out, "| {} | {:.4} | {:.4} | {:.4} | {:.4} | {} |", r.model, s.dice, s.iou, s.precision, s.recall, r.samples).unwrap();
    }
    out.push_str("\nScores are macro means over test samples.\n");
    out
}

pub fn stats_table(rows: &[StatsRow]) -> String {
    let mut out = String::from("Wilcoxon signed-rank and Pearson correlation, predicted vs actual lesion volume\n\n");
    writeln!(out, "| Model | W+ | p-value | method | Pearson r | p-value | n |").unwrap();
    writeln!(out, "|---|---|---|---|---|---|---|").unwrap();
    for r in rows {
        let (pr, pp) = match r.pearson {
            Some(p) => (format!("{:.4}", p.r), format!("{:.4}", p.p_value)),
            None => ("n/a".into(), "n/a".into()),
        };
        writeln!(out, "| {} | {} | {:.4} | {} | {pr} | {pp} | {} |", r.model_id, r.w, r.wilcoxon_p, r.method.name(), r.n).unwrap();
    }
    out
}
