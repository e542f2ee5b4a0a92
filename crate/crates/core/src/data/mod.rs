//! Whitespace-tokenized examples, TSV ingestion, synthetic tasks and
//! deterministic batching.

mod batch;
mod example;
mod synthetic;
mod tsv;
mod vocab;

pub use batch::{batch_indices, batch_iter};
pub use example::{decode, encode, tokenize, Encoded, EncodedSplit, Example};
pub use synthetic::{synthetic_generate, Splits, SyntheticTaskSpec, TaskKind};
pub use tsv::{load_tsv, write_tsv, Schema};
pub use vocab::{Vocabulary, CLS, CLS_ID, PAD, PAD_ID, SEP, SEP_ID, UNK, UNK_ID};
