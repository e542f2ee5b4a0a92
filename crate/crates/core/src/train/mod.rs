//! Training loops for teachers, fine-tuned students and distilled
//! students, with evaluation, grid search and run records.

mod eval;
mod grid;
mod optim;
mod record;
mod trainer;

pub use eval::{agreement, evaluate, predict, score, ClassCounts, Evaluation};
pub use grid::{grid_csv, grid_search, write_grid_csv, GridPoint, GridResult, GridSpec, GridTemplate};
pub use optim::{adam_step, global_norm, AdamState, OptimizerConfig};
pub use record::{EpochRecord, RunConfig, RunKind, RunRecord};
pub use trainer::{distill, distill_student, finetune_student, train_teacher, TaskData, TeacherCache};
