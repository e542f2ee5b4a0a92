use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use log::info;
use pkd_core::bench::{bench_inference, emit_curves, BenchSpec};
use pkd_core::data::{
    load_tsv, synthetic_generate, write_tsv, EncodedSplit, Example, Schema, SyntheticTaskSpec, Vocabulary,
};
use pkd_core::distill::{build_layer_map, DistillStrategy};
use pkd_core::encoder::{load_checkpoint, save_checkpoint, EncoderConfig, EncoderModel};
use pkd_core::train::{self, GridSpec, GridTemplate, RunRecord, TaskData, TeacherCache};

use crate::settings::{distill_config, model_config, optimizer_config, ConfigFile};
use crate::{
    BenchArgs, CurvesArgs, DataArgs, DistillArgs, EvalArgs, FinetuneArgs, GenDataArgs, GridArgs, OptimArgs,
    TrainTeacherArgs,
};

const VOCAB_FILE: &str = "vocab.txt";

/// Longest encoding accepted when the length is inferred from data.
const MAX_INFERRED_LEN: usize = 512;

fn required<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    value.as_deref().with_context(|| format!("{flag} is required"))
}

fn read_examples(path: &Path, schema: Schema) -> Result<Vec<Example>> {
    let examples = load_tsv(path, schema)?;
    ensure!(!examples.is_empty(), "{} holds no examples", path.display());
    Ok(examples)
}

struct RawData {
    train: Vec<Example>,
    dev: Vec<Example>,
    test: Option<Vec<Example>>,
}

impl RawData {
    fn load(args: &DataArgs) -> Result<Self> {
        let train = read_examples(required(&args.data, "--data")?, args.schema)?;
        let dev = read_examples(required(&args.dev, "--dev")?, args.schema)?;
        let test = args.test.as_deref().map(|p| read_examples(p, args.schema)).transpose()?;
        Ok(RawData { train, dev, test })
    }

    fn num_classes(&self) -> usize {
        let max = self.train.iter().chain(&self.dev).map(|e| e.label).max().unwrap_or(0);
        (max + 1).max(2)
    }

    fn vocabulary(&self) -> Vocabulary {
        let mut vocab = Vocabulary::new();
        for ex in &self.train {
            for tok in ex.segment_a.iter().chain(ex.segment_b.iter().flatten()) {
                vocab.insert(tok);
            }
        }
        vocab
    }

    fn longest_encoding(&self) -> usize {
        let len = self
            .train
            .iter()
            .map(|e| e.segment_a.len() + 2 + e.segment_b.as_ref().map_or(0, |b| b.len() + 1))
            .max()
            .unwrap_or(2);
        len.min(MAX_INFERRED_LEN)
    }

    fn encode(&self, vocab: &Vocabulary, max_seq_len: usize) -> Result<TaskData> {
        Ok(TaskData {
            train: EncodedSplit::new(vocab, &self.train, max_seq_len)?,
            dev: EncodedSplit::new(vocab, &self.dev, max_seq_len)?,
            test: self.test.as_ref().map(|t| EncodedSplit::new(vocab, t, max_seq_len)).transpose()?,
        })
    }
}

fn load_model_dir(dir: &Path) -> Result<(EncoderModel, Vocabulary)> {
    let model = load_checkpoint(dir)?;
    let vocab = Vocabulary::load(&dir.join(VOCAB_FILE))?;
    ensure!(
        vocab.len() <= model.config().vocab_size,
        "{}: vocabulary has {} tokens but the model embeds only {}",
        dir.display(),
        vocab.len(),
        model.config().vocab_size
    );
    Ok((model, vocab))
}

fn save_run(out: &Path, model: &EncoderModel, vocab: &Vocabulary, record: &RunRecord) -> Result<()> {
    save_checkpoint(model, out)?;
    vocab.save(&out.join(VOCAB_FILE))?;
    record.save(out)?;
    let test = record.test_accuracy.map(|t| format!(", test accuracy {t:.4}")).unwrap_or_default();
    println!(
        "best dev accuracy {:.4} at epoch {}{test}; written to {}",
        record.best_dev_accuracy,
        record.selected_epoch,
        out.display()
    );
    Ok(())
}

pub fn gen_data(args: GenDataArgs) -> Result<()> {
    let spec = SyntheticTaskSpec {
        kind: args.task,
        vocab_size: args.vocab_size,
        seq_len: args.seq_len,
        num_samples: args.samples,
        seed: args.seed,
    };
    let splits = synthetic_generate(&spec)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    for (name, examples) in [("train", &splits.train), ("dev", &splits.dev), ("test", &splits.test)] {
        write_tsv(&args.out.join(format!("{name}.tsv")), examples)?;
    }
    spec.vocabulary().save(&args.out.join(VOCAB_FILE))?;
    println!(
        "{}: {} train, {} dev, {} test examples in {}",
        spec.kind,
        splits.train.len(),
        splits.dev.len(),
        splits.test.len(),
        args.out.display()
    );
    Ok(())
}

fn fresh_model_setup(
    file: &ConfigFile,
    raw: &RawData,
    vocab_path: Option<&Path>,
    max_seq_len: Option<usize>,
    layers: Option<usize>,
) -> Result<(EncoderConfig, Vocabulary)> {
    let vocab = match vocab_path {
        Some(p) => Vocabulary::load(p)?,
        None => raw.vocabulary(),
    };
    let max_len = max_seq_len.or(file.model.max_seq_len).unwrap_or_else(|| raw.longest_encoding());
    let config = model_config(&file.model, vocab.len(), raw.num_classes(), max_len, layers);
    config.validate()?;
    Ok((config, vocab))
}

pub fn train_teacher(args: TrainTeacherArgs) -> Result<()> {
    let file = ConfigFile::load(args.config.as_deref())?;
    let opt = optimizer_config(&file.optimizer, &args.optim);
    opt.validate()?;
    let raw = RawData::load(&args.data)?;
    let (config, vocab) = fresh_model_setup(&file, &raw, args.vocab.as_deref(), args.max_seq_len, args.layers)?;
    let data = raw.encode(&vocab, config.max_seq_len)?;
    info!("training a {}-layer teacher on {} examples", config.num_layers, data.train.len());
    let (model, record) = train::train_teacher(&config, &opt, &data)?;
    save_run(&args.out, &model, &vocab, &record)
}

pub fn finetune(args: FinetuneArgs) -> Result<()> {
    let file = ConfigFile::load(args.config.as_deref())?;
    let opt = optimizer_config(&file.optimizer, &args.optim);
    opt.validate()?;
    let teacher = args.teacher.as_deref().map(load_model_dir).transpose()?;
    if let Some((t, _)) = &teacher {
        ensure!(
            (1..=t.num_layers()).contains(&args.student_layers),
            "--student-layers {} must lie in [1, {}] for this teacher",
            args.student_layers,
            t.num_layers()
        );
    }
    let raw = RawData::load(&args.data)?;
    let (config, vocab) = match &teacher {
        Some((t, v)) => (t.config().clone(), v.clone()),
        None => fresh_model_setup(&file, &raw, args.vocab.as_deref(), args.max_seq_len, Some(args.student_layers))?,
    };
    let data = raw.encode(&vocab, config.max_seq_len)?;
    let (model, record) =
        train::finetune_student(teacher.as_ref().map(|(t, _)| t), args.student_layers, &config, &opt, &data)?;
    save_run(&args.out, &model, &vocab, &record)
}

pub fn distill(args: DistillArgs) -> Result<()> {
    let file = ConfigFile::load(args.config.as_deref())?;
    let dcfg = distill_config(&file.distill, &args.distill);
    dcfg.validate()?;
    let opt = optimizer_config(&file.optimizer, &args.optim);
    opt.validate()?;
    if let Some(layers) = args.teacher_layers {
        build_layer_map(layers, args.student_layers, dcfg.strategy)?;
    }
    let teacher_dir = required(&args.teacher, "--teacher")?;
    let out = required(&args.out, "--out")?;
    let (teacher, vocab) = load_model_dir(teacher_dir)?;
    if let Some(layers) = args.teacher_layers {
        ensure!(
            layers == teacher.num_layers(),
            "--teacher-layers {layers} but {} has {} layers",
            teacher_dir.display(),
            teacher.num_layers()
        );
    }
    build_layer_map(teacher.num_layers(), args.student_layers, dcfg.strategy)?;
    let raw = RawData::load(&args.data)?;
    let data = raw.encode(&vocab, teacher.config().max_seq_len)?;
    let cache = if args.no_cache { None } else { Some(TeacherCache::build(&teacher, &data.train)?) };
    let (model, record) = train::distill(&teacher, args.student_layers, &dcfg, &opt, &data, cache.as_ref())?;
    save_run(out, &model, &vocab, &record)
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let (model, vocab) = load_model_dir(&args.model)?;
    let examples = read_examples(&args.data, args.schema)?;
    let split = EncodedSplit::new(&vocab, &examples, model.config().max_seq_len)?;
    let evaluation = train::evaluate(&model, &split)?;
    println!("{}", serde_json::to_string_pretty(&evaluation)?);
    Ok(())
}

pub fn grid(args: GridArgs) -> Result<()> {
    let file = ConfigFile::load(args.config.as_deref())?;
    let betas = match (args.beta.is_empty(), args.strategy) {
        (false, _) => args.beta.clone(),
        (true, DistillStrategy::None) => vec![0.0],
        (true, _) => vec![10.0, 100.0, 500.0, 1000.0],
    };
    let spec = GridSpec {
        temperatures: args.temp.clone(),
        alphas: args.alpha.clone(),
        betas,
        learning_rates: args.lr.clone(),
    };
    spec.validate()?;
    let flags = OptimArgs {
        lr: None,
        batch: args.batch,
        epochs: args.epochs,
        seed: args.seed,
        grad_clip: None,
    };
    let opt = optimizer_config(&file.optimizer, &flags);
    let mut base = distill_config(
        &file.distill,
        &crate::DistillFlags {
            strategy: Some(args.strategy),
            alpha: None,
            beta: Some(0.0),
            temp: None,
            symmetric_temp: args.symmetric_temp,
        },
    );
    base.strategy = args.strategy;
    let (teacher, vocab) = load_model_dir(&args.teacher)?;
    build_layer_map(teacher.num_layers(), args.student_layers, args.strategy)?;
    let raw = RawData::load(&args.data)?;
    let data = raw.encode(&vocab, teacher.config().max_seq_len)?;
    let cache = if args.no_cache { None } else { Some(TeacherCache::build(&teacher, &data.train)?) };
    let template = GridTemplate {
        teacher: &teacher,
        student_layers: args.student_layers,
        distill: base,
        optimizer: opt,
        data: &data,
        cache: cache.as_ref(),
    };
    info!("running {} grid points", spec.points().len());
    let results = train::grid_search(&spec, &template)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    train::write_grid_csv(&args.out.join("grid.csv"), &results)?;
    for r in &results {
        if let Ok(rec) = &r.outcome {
            rec.save(&args.out.join("runs").join(format!("{:03}", r.index)))?;
        }
    }
    match results.first().and_then(|r| r.outcome.as_ref().ok().map(|rec| (r, rec))) {
        Some((r, rec)) => println!(
            "best: T={} alpha={} beta={} lr={} with dev accuracy {:.4}",
            r.point.temperature, r.point.alpha, r.point.beta, r.point.learning_rate, rec.best_dev_accuracy
        ),
        None => bail!("every grid point failed; see {}", args.out.join("grid.csv").display()),
    }
    Ok(())
}

pub fn bench(args: BenchArgs) -> Result<()> {
    let file = ConfigFile::load(args.config.as_deref())?;
    let m = &file.model;
    let deepest = args.depths.iter().copied().max().context("--depths is empty")?;
    let template = EncoderConfig {
        vocab_size: m.vocab_size.unwrap_or(1000),
        max_seq_len: m.max_seq_len.unwrap_or(args.seq_len).max(args.seq_len),
        hidden_dim: m.hidden_dim.unwrap_or(128),
        num_layers: deepest,
        num_heads: m.num_heads.unwrap_or(4),
        ffn_dim: m.ffn_dim.unwrap_or(512),
        num_classes: 2,
        dropout_prob: 0.0,
        layer_norm_eps: m.layer_norm_eps.unwrap_or(pkd_core::encoder::DEFAULT_LAYER_NORM_EPS),
    };
    template.validate()?;
    let spec = BenchSpec {
        batch_size: args.batch,
        seq_len: args.seq_len,
        repeats: args.repeats,
        seed: args.seed,
    };
    let report = bench_inference(&template, &args.depths, &spec)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    report.write_csv(&args.out.join("bench.csv"))?;
    print!("{}", report.to_csv());
    Ok(())
}

pub fn curves(args: CurvesArgs) -> Result<()> {
    let mut runs = Vec::with_capacity(args.runs.len());
    for dir in &args.runs {
        let path = if dir.is_dir() { dir.join("run.json") } else { dir.clone() };
        let id = dir
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .with_context(|| format!("cannot name run {}", dir.display()))?;
        runs.push((id, RunRecord::load(&path)?));
    }
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let path = args.out.join("curves.csv");
    emit_curves(&runs, &path)?;
    println!("{} runs written to {}", runs.len(), path.display());
    Ok(())
}
