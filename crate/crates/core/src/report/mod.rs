mod svg;
mod table;

pub use svg::{box_plot_svg, overlay_svg, scatter_svg};
pub use table::{metrics_table, stats_table, ModelRow};
