//! Synthetic classification tasks with exactly balanced, disjoint splits.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::example::Example;
use super::vocab::Vocabulary;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    /// Label is the number of `"1"` tokens modulo 2.
    Parity,
    /// Tokens belong to class `token mod 2`; the label is the class with
    /// more occurrences. Tied sequences are never generated.
    Majority,
    /// Sentence pair; label 1 when the second segment repeats the first,
    /// 0 when it differs from it in exactly one position.
    PatternPair,
}

impl TaskKind {
    /// The label the task rule assigns to `example`'s tokens, or `None`
    /// when the rule does not apply (a tie, an unpaired example, ...).
    pub fn label_of(self, example: &Example) -> Option<usize> {
        match self {
            TaskKind::Parity => Some(example.segment_a.iter().filter(|t| *t == "1").count() % 2),
            TaskKind::Majority => {
                let mut counts = [0usize; 2];
                for t in &example.segment_a {
                    counts[t.parse::<usize>().ok()? % 2] += 1;
                }
                match counts[0].cmp(&counts[1]) {
                    std::cmp::Ordering::Greater => Some(0),
                    std::cmp::Ordering::Less => Some(1),
                    std::cmp::Ordering::Equal => None,
                }
            }
            TaskKind::PatternPair => {
                let b = example.segment_b.as_ref()?;
                if b.len() != example.segment_a.len() {
                    return None;
                }
                match example.segment_a.iter().zip(b).filter(|(x, y)| x != y).count() {
                    0 => Some(1),
                    1 => Some(0),
                    _ => None,
                }
            }
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Parity => "parity",
            TaskKind::Majority => "majority",
            TaskKind::PatternPair => "pattern-pair",
        })
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "parity" => Ok(TaskKind::Parity),
            "majority" => Ok(TaskKind::Majority),
            "pattern-pair" => Ok(TaskKind::PatternPair),
            other => Err(Error::Input(format!(
                "unknown task {other:?} (expected parity, majority or pattern-pair)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticTaskSpec {
    pub kind: TaskKind,
    /// Number of content tokens, named `"0"`, `"1"`, ...
    pub vocab_size: usize,
    /// Tokens per segment.
    pub seq_len: usize,
    /// Total over all three splits.
    pub num_samples: usize,
    pub seed: u64,
}

impl SyntheticTaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 {
            return Err(Error::Config("synthetic tasks need at least 2 content tokens".into()));
        }
        if self.seq_len == 0 {
            return Err(Error::Config("seq_len must be positive".into()));
        }
        if self.num_samples < 10 {
            return Err(Error::Config("num_samples must be at least 10 so every split is populated".into()));
        }
        Ok(())
    }

    /// Vocabulary holding the task's content tokens in numeric order.
    pub fn vocabulary(&self) -> Vocabulary {
        let names: Vec<String> = (0..self.vocab_size).map(|t| t.to_string()).collect();
        Vocabulary::from_tokens(names.iter().map(String::as_str))
    }

    /// Encoded length with `[CLS]`/`[SEP]` markers added.
    pub fn encoded_len(&self) -> usize {
        match self.kind {
            TaskKind::PatternPair => 2 * self.seq_len + 3,
            _ => self.seq_len + 2,
        }
    }

    /// `(train, dev, test)` sizes in an 80/10/10 ratio.
    pub fn split_sizes(&self) -> (usize, usize, usize) {
        let n = self.num_samples;
        let train = n * 8 / 10;
        let dev = n / 10;
        (train, dev, n - train - dev)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<Example>,
    pub dev: Vec<Example>,
    pub test: Vec<Example>,
}

/// Generates the three splits. Pure function of its settings; every split holds
/// each class exactly `len / 2` times (the odd one out going to class 0)
/// and no token sequence occurs twice anywhere.
pub fn synthetic_generate(spec: &SyntheticTaskSpec) -> Result<Splits> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut seen = HashSet::new();
    let (a, b, c) = spec.split_sizes();
    let mut split = |n| generate_split(spec, n, &mut rng, &mut seen);
    Ok(Splits {
        train: split(a)?,
        dev: split(b)?,
        test: split(c)?,
    })
}

fn generate_split(
    spec: &SyntheticTaskSpec,
    n: usize,
    rng: &mut ChaCha8Rng,
    seen: &mut HashSet<(Vec<String>, Option<Vec<String>>)>,
) -> Result<Vec<Example>> {
    let mut quota = [n - n / 2, n / 2];
    let mut out = Vec::with_capacity(n);
    let max_attempts = 1000 * n + 100_000;
    let mut attempts = 0;
    while out.len() < n {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::Config(format!(
                "could not draw {n} distinct balanced {} sequences; enlarge vocab_size or seq_len",
                spec.kind
            )));
        }
        let Some(ex) = draw(spec, rng) else { continue };
        if quota[ex.label] == 0 {
            continue;
        }
        if !seen.insert((ex.segment_a.clone(), ex.segment_b.clone())) {
            continue;
        }
        quota[ex.label] -= 1;
        out.push(ex);
    }
    out.shuffle(rng);
    Ok(out)
}

fn draw(spec: &SyntheticTaskSpec, rng: &mut ChaCha8Rng) -> Option<Example> {
    let seq = |rng: &mut ChaCha8Rng| -> Vec<usize> { (0..spec.seq_len).map(|_| rng.random_range(0..spec.vocab_size)).collect() };
    let names = |s: &[usize]| -> Vec<String> { s.iter().map(usize::to_string).collect() };
    match spec.kind {
        TaskKind::Parity => {
            let s = seq(rng);
            let label = s.iter().filter(|&&t| t == 1).count() % 2;
            Some(Example {
                segment_a: names(&s),
                segment_b: None,
                label,
            })
        }
        TaskKind::Majority => {
            let s = seq(rng);
            let odd = s.iter().filter(|&&t| t % 2 == 1).count();
            let even = s.len() - odd;
            if odd == even {
                return None;
            }
            Some(Example {
                segment_a: names(&s),
                segment_b: None,
                label: usize::from(odd > even),
            })
        }
        TaskKind::PatternPair => {
            let a = seq(rng);
            let mut b = a.clone();
            let label = usize::from(rng.random_bool(0.5));
            if label == 0 {
                let pos = rng.random_range(0..spec.seq_len);
                let shift = rng.random_range(1..spec.vocab_size);
                b[pos] = (b[pos] + shift) % spec.vocab_size;
            }
            Some(Example {
                segment_a: names(&a),
                segment_b: Some(names(&b)),
                label,
            })
        }
    }
}
