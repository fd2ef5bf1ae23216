//! Epoch loop with reduce-on-plateau scheduling, validation-based model
//! selection, evaluation and multi-window sweeps.

mod config;
mod eval;
mod scheduler;
mod sweep;
mod trainer;

pub use config::{derive_seed, TrainConfig};
pub use eval::{evaluate, validation_metrics, EvalReport, SamplePrediction};
pub use scheduler::PlateauScheduler;
pub use sweep::{reference_rows, sweep, ComparisonTable, ReferenceRow, SweepEntry, TABLE_WINDOWS};
pub use trainer::{batch_plan, train, EpochRecord, TrainOutcome, TrainingHistory};
