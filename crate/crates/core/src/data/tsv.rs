use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::example::{tokenize, Example};
use crate::error::{Error, Result};

/// Column layout of a TSV file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schema {
    /// `sentence <TAB> label`
    Single,
    /// `sentence <TAB> sentence2 <TAB> label`
    Pair,
}

impl Schema {
    fn columns(self) -> usize {
        match self {
            Schema::Single => 2,
            Schema::Pair => 3,
        }
    }
}

impl FromStr for Schema {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Schema::Single),
            "pair" => Ok(Schema::Pair),
            other => Err(Error::Input(format!("unknown schema {other:?} (expected single or pair)"))),
        }
    }
}

/// Reads a tab-separated file in file order.
///
/// The first line is taken as a header when its label column is not an
/// integer. Blank lines are skipped.
pub fn load_tsv(path: &Path, schema: Schema) -> Result<Vec<Example>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let cols: Vec<&str> = line.split('\t').collect();
        let label_col = cols.get(schema.columns() - 1).map(|s| s.trim());
        if i == 0 && label_col.is_some_and(|l| l.parse::<i64>().is_err()) {
            continue;
        }
        if cols.len() != schema.columns() {
            return Err(err(format!(
                "expected {} tab-separated columns, found {}",
                schema.columns(),
                cols.len()
            )));
        }
        let label_text = label_col.unwrap_or_default();
        let label = label_text
            .parse::<usize>()
            .map_err(|_| err(format!("label {label_text:?} is not a non-negative integer")))?;
        let segment_a = tokenize(cols[0]);
        if segment_a.is_empty() {
            return Err(err("empty sentence".into()));
        }
        let segment_b = match schema {
            Schema::Single => None,
            Schema::Pair => Some(tokenize(cols[1])),
        };
        out.push(Example {
            segment_a,
            segment_b,
            label,
        });
    }
    Ok(out)
}

/// Writes examples with a header row that [`load_tsv`] recognizes.
pub fn write_tsv(path: &Path, examples: &[Example]) -> Result<()> {
    let pair = examples.first().is_some_and(|e| e.segment_b.is_some());
    if examples.iter().any(|e| e.segment_b.is_some() != pair) {
        return Err(Error::Input("cannot mix single and pair examples in one file".into()));
    }
    let mut text = String::from(if pair { "sentence\tsentence2\tlabel\n" } else { "sentence\tlabel\n" });
    for e in examples {
        text.push_str(&e.segment_a.join(" "));
        if let Some(b) = &e.segment_b {
            text.push('\t');
            text.push_str(&b.join(" "));
        }
        writeln!(text, "\t{}", e.label).expect("writing to a String");
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(text: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.tsv");
        fs::write(&p, text).unwrap();
        (dir, p)
    }

    #[test]
    fn two_rows_in_order() {
        let (_d, p) = write("a b\t1\nc\t0\n");
        let ex = load_tsv(&p, Schema::Single).unwrap();
        assert_eq!(ex, vec![Example::single("a b", 1), Example::single("c", 0)]);
    }

    #[test]
    fn header_is_detected() {
        let (_d, p) = write("sentence\tsentence2\tlabel\nx\ty\t1\n");
        assert_eq!(load_tsv(&p, Schema::Pair).unwrap(), vec![Example::pair("x", "y", 1)]);
    }

    #[test]
    fn missing_label_names_the_line() {
        let (_d, p) = write("a\t1\nb\n");
        let err = load_tsv(&p, Schema::Single).unwrap_err().to_string();
        assert!(err.contains(":2:"), "{err}");
    }

    #[test]
    fn bad_label_is_a_parse_error() {
        let (_d, p) = write("a\t1\nb\tx\n");
        assert!(matches!(load_tsv(&p, Schema::Single), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn write_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("o.tsv");
        let ex = vec![Example::pair("a b", "c", 0), Example::pair("d", "e f", 1)];
        write_tsv(&p, &ex).unwrap();
        assert_eq!(load_tsv(&p, Schema::Pair).unwrap(), ex);
    }
}
