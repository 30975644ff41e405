mod attention;
mod conv;
mod elementwise;
mod linalg;
mod norm;
mod pool;
mod resample;
mod shape;
mod softmax;

pub use attention::{attention, attention_weights};
pub use conv::ConvOptions;
pub use norm::BatchStats;
pub use resample::{linear_taps, nearest_index, resample_axis, LinearTap};
pub use shape::concat;
