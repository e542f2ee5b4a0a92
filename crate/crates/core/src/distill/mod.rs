//! Distillation objectives, teacher-to-student layer maps and student
//! initialization.

mod config;
mod init;
mod layer_map;
mod loss;

pub use config::{DistillConfig, DEFAULT_EPS_NORM};
pub use init::{init_student_from_teacher, init_student_with_config};
pub use layer_map::{build_layer_map, DistillStrategy, LayerMap};
pub use loss::{
    entropy, kd_loss, loss_ce, loss_ds, loss_pt, pkd_loss, record_objective, soft_labels, LossBreakdown,
    TeacherSignal,
};
