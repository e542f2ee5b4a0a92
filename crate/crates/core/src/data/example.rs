use serde::{Deserialize, Serialize};

use super::vocab::{Vocabulary, CLS_ID, PAD_ID, SEP_ID};
use crate::encoder::InputBatch;
use crate::error::{Error, Result};

/// A labeled single sentence or sentence pair, already split into tokens.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Example {
    pub segment_a: Vec<String>,
    pub segment_b: Option<Vec<String>>,
    pub label: usize,
}

impl Example {
    pub fn single(text: &str, label: usize) -> Self {
        Example {
            segment_a: tokenize(text),
            segment_b: None,
            label,
        }
    }

    pub fn pair(a: &str, b: &str, label: usize) -> Self {
        Example {
            segment_a: tokenize(a),
            segment_b: Some(tokenize(b)),
            label,
        }
    }
}

/// Whitespace tokenization.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}

/// One example laid out as `[CLS] a [SEP] (b [SEP])` and padded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoded {
    pub token_ids: Vec<usize>,
    pub segment_ids: Vec<usize>,
    pub mask: Vec<bool>,
}

/// Encodes `example` into exactly `max_seq_len` positions.
///
/// Overlong input loses tokens from the end of its segments (the longer
/// segment first); `[CLS]` and `[SEP]` are always kept. Truncation is
/// logged at warn level.
pub fn encode(vocab: &Vocabulary, example: &Example, max_seq_len: usize) -> Result<Encoded> {
    if example.segment_a.is_empty() && example.segment_b.as_ref().is_none_or(|b| b.is_empty()) {
        return Err(Error::Input("cannot encode an empty example".into()));
    }
    let specials = if example.segment_b.is_some() { 3 } else { 2 };
    if max_seq_len < specials {
        return Err(Error::Input(format!(
            "max_seq_len {max_seq_len} cannot hold the {specials} special tokens"
        )));
    }
    let mut a = &example.segment_a[..];
    let mut b = example.segment_b.as_deref().unwrap_or(&[]);
    let budget = max_seq_len - specials;
    if a.len() + b.len() > budget {
        log::warn!(
            "truncating example with {} tokens to fit max_seq_len {max_seq_len}",
            a.len() + b.len()
        );
        while a.len() + b.len() > budget {
            if a.len() >= b.len() {
                a = &a[..a.len() - 1];
            } else {
                b = &b[..b.len() - 1];
            }
        }
    }
    let mut token_ids = Vec::with_capacity(max_seq_len);
    let mut segment_ids = Vec::with_capacity(max_seq_len);
    token_ids.push(CLS_ID);
    token_ids.extend(a.iter().map(|t| vocab.id(t)));
    token_ids.push(SEP_ID);
    segment_ids.resize(token_ids.len(), 0);
    if example.segment_b.is_some() {
        token_ids.extend(b.iter().map(|t| vocab.id(t)));
        token_ids.push(SEP_ID);
        segment_ids.resize(token_ids.len(), 1);
    }
    let used = token_ids.len();
    let mut mask = vec![true; used];
    token_ids.resize(max_seq_len, PAD_ID);
    segment_ids.resize(max_seq_len, 0);
    mask.resize(max_seq_len, false);
    Ok(Encoded {
        token_ids,
        segment_ids,
        mask,
    })
}

/// Recovers the token segments of an encoded sequence.
pub fn decode(vocab: &Vocabulary, encoded: &Encoded) -> Result<(Vec<String>, Option<Vec<String>>)> {
    let ids: Vec<usize> = encoded
        .token_ids
        .iter()
        .zip(&encoded.mask)
        .filter(|(_, &m)| m)
        .map(|(&id, _)| id)
        .collect();
    if ids.first() != Some(&CLS_ID) || ids.last() != Some(&SEP_ID) {
        return Err(Error::Input("sequence is not framed by [CLS] ... [SEP]".into()));
    }
    let body = &ids[1..ids.len() - 1];
    let lookup = |ids: &[usize]| -> Result<Vec<String>> {
        ids.iter()
            .map(|&id| {
                vocab
                    .token(id)
                    .map(str::to_string)
                    .ok_or_else(|| Error::Input(format!("id {id} is outside the vocabulary")))
            })
            .collect()
    };
    match body.iter().position(|&id| id == SEP_ID) {
        Some(p) => Ok((lookup(&body[..p])?, Some(lookup(&body[p + 1..])?))),
        None => Ok((lookup(body)?, None)),
    }
}

/// A split encoded once up front so batches can be assembled by index.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSplit {
    pub seq_len: usize,
    pub items: Vec<Encoded>,
    pub labels: Vec<usize>,
}

impl EncodedSplit {
    pub fn new(vocab: &Vocabulary, examples: &[Example], max_seq_len: usize) -> Result<Self> {
        let items = examples
            .iter()
            .map(|e| encode(vocab, e, max_seq_len))
            .collect::<Result<Vec<_>>>()?;
        Ok(EncodedSplit {
            seq_len: max_seq_len,
            items,
            labels: examples.iter().map(|e| e.label).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Stacks the examples at `indices` into a batch plus their labels.
    pub fn batch(&self, indices: &[usize]) -> Result<(InputBatch, Vec<usize>)> {
        let n = indices.len() * self.seq_len;
        let (mut tok, mut seg, mut mask) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for &i in indices {
            let e = &self.items[i];
            tok.extend_from_slice(&e.token_ids);
            seg.extend_from_slice(&e.segment_ids);
            mask.extend_from_slice(&e.mask);
        }
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Ok((InputBatch::new(indices.len(), self.seq_len, tok, seg, mask)?, labels))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocabulary {
        Vocabulary::from_tokens(["a", "b", "c"])
    }

    #[test]
    fn single_layout() {
        let e = encode(&vocab(), &Example::single("a b", 0), 6).unwrap();
        assert_eq!(e.token_ids, vec![CLS_ID, 4, 5, SEP_ID, PAD_ID, PAD_ID]);
        assert_eq!(e.mask, vec![true, true, true, true, false, false]);
        assert_eq!(e.segment_ids, vec![0; 6]);
    }

    #[test]
    fn pair_layout() {
        let e = encode(&vocab(), &Example::pair("a", "b", 1), 7).unwrap();
        assert_eq!(e.token_ids, vec![CLS_ID, 4, SEP_ID, 5, SEP_ID, PAD_ID, PAD_ID]);
        assert_eq!(e.segment_ids, vec![0, 0, 0, 1, 1, 0, 0]);
    }

    #[test]
    fn unknown_tokens_map_to_unk() {
        let e = encode(&vocab(), &Example::single("a zebra", 0), 5).unwrap();
        assert_eq!(e.token_ids[2], super::super::vocab::UNK_ID);
    }

    #[test]
    fn truncation_keeps_specials() {
        let e = encode(&vocab(), &Example::single("a b c a b c", 0), 4).unwrap();
        assert_eq!(e.token_ids, vec![CLS_ID, 4, 5, SEP_ID]);
        let e = encode(&vocab(), &Example::pair("a a a a", "b", 0), 6).unwrap();
        assert_eq!(e.token_ids, vec![CLS_ID, 4, 4, SEP_ID, 5, SEP_ID]);
    }

    #[test]
    fn errors() {
        assert!(encode(&vocab(), &Example::single("", 0), 4).is_err());
        assert!(encode(&vocab(), &Example::pair("a", "b", 0), 2).is_err());
    }

    #[test]
    fn decode_inverts_encode() {
        let v = vocab();
        for ex in [Example::single("c a b", 0), Example::pair("a", "c b", 1)] {
            let (a, b) = decode(&v, &encode(&v, &ex, 9).unwrap()).unwrap();
            assert_eq!(a, ex.segment_a);
            assert_eq!(b, ex.segment_b);
        }
    }

    #[test]
    fn batch_stacks_rows() {
        let v = vocab();
        let split = EncodedSplit::new(&v, &[Example::single("a", 0), Example::single("b c", 1)], 5).unwrap();
        let (batch, labels) = split.batch(&[1, 0]).unwrap();
        assert_eq!(labels, vec![1, 0]);
        assert_eq!(batch.batch_size, 2);
        assert_eq!(&batch.token_ids[..5], &split.items[1].token_ids[..]);
    }
}
