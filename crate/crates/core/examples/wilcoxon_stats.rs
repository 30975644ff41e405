//! Paired lesion-volume statistics: Wilcoxon signed-rank, Pearson, plots.

use strokeseg::report::{box_plot_svg, scatter_svg, stats_table};
use strokeseg::stats::{volume_report, wilcoxon_signed_rank, Alternative, StatsRow, VolumePair};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for d in [vec![1.0, 2.0, 3.0], vec![-1.0, 2.0, -3.0, 4.0, -5.0]] {
        let r = wilcoxon_signed_rank(&d, Alternative::TwoSided)?;
        println!("{d:?}: W+ {} p {} ({})", r.w, r.p_value, r.method.name());
    }

    let actual = [1200.0, 340.0, 8800.0, 56.0, 2300.0, 410.0, 15000.0, 990.0];
    let over = [1350.0, 300.0, 9400.0, 80.0, 2500.0, 520.0, 15900.0, 1000.0];
    let under = [900.0, 280.0, 7000.0, 20.0, 2000.0, 300.0, 12500.0, 700.0];
    let mut reports = Vec::new();
    for (name, predicted) in [("overestimating", over), ("underestimating", under)] {
        let pairs: Vec<VolumePair> = actual
            .iter()
            .zip(predicted)
            .enumerate()
            .map(|(i, (&a, p))| VolumePair { subject_id: format!("sub-{i:04}"), actual: a, predicted: p })
            .collect();
        reports.push(volume_report(name, &pairs, Alternative::TwoSided)?);
    }
    print!("{}", stats_table(&reports.iter().map(StatsRow::from).collect::<Vec<_>>()));

    let dir = std::env::temp_dir().join("strokeseg-stats-example");
    std::fs::create_dir_all(&dir)?;
    for r in &reports {
        std::fs::write(dir.join(format!("scatter_{}.svg", r.model_id)), scatter_svg(r))?;
    }
    std::fs::write(dir.join("boxplots.svg"), box_plot_svg(&reports))?;
    println!("plots written to {}", dir.display());
    Ok(())
}
