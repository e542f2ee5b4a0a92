use crate::encoder::{EncoderConfig, EncoderModel};
use crate::error::{Error, Result};

/// Copies the teacher's embeddings, its first `n` transformer layers, the
/// pooler and the classifier into a fresh `n`-layer model.
pub fn init_student_from_teacher(teacher: &EncoderModel, n: usize) -> Result<EncoderModel> {
    init_student_with_config(teacher, &teacher.config().with_layers(n))
}

/// Like [`init_student_from_teacher`] with an explicit student config,
/// which must equal the teacher's apart from `num_layers`.
pub fn init_student_with_config(teacher: &EncoderModel, student: &EncoderConfig) -> Result<EncoderModel> {
    let n = student.num_layers;
    let t = teacher.config();
    if n == 0 || n > t.num_layers {
        return Err(Error::Depth {
            teacher: t.num_layers,
            student: n,
        });
    }
    if student.hidden_dim != t.hidden_dim {
        return Err(Error::Config(format!(
            "student hidden size {} differs from the teacher's {}",
            student.hidden_dim, t.hidden_dim
        )));
    }
    if student.with_layers(t.num_layers) != *t {
        return Err(Error::Config(
            "student config must match the teacher's except for num_layers".into(),
        ));
    }
    let head = teacher.params().len() - 4;
    let layers_end = EncoderModel::layer_base(n);
    let params = teacher.params()[..layers_end]
        .iter()
        .chain(&teacher.params()[head..])
        .cloned()
        .collect();
    EncoderModel::from_params(student.clone(), params)
}
