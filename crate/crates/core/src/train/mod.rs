mod adam;
mod batch;
mod config;
mod evaluate;
mod fit;
mod schedule;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use batch::stack;
pub use config::TrainConfig;
pub use evaluate::{eval_batch, evaluate, predict_samples, score_predictions, Evaluation};
pub use fit::{EpochRecord, Progress, TrainRecord, Trainer, BEST_CHECKPOINT, LAST_CHECKPOINT, RECORD_FILE, RECORD_HEADER, TIMING_FILE};
pub use schedule::{cosine_annealing, PlateauConfig, PlateauState, Scheduler};
