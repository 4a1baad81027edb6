//! Monolingual embedding spaces and the word2vec text format.
//!
//! A file starts with a `<count> <dim>` header line, followed by one word per
//! line: the word, then `dim` real values. Readers accept any whitespace
//! between fields; the writer emits single spaces and six significant digits.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use log::warn;
use ndarray::{s, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Ordered vocabulary plus an `n × d` matrix whose i-th row belongs to the
/// i-th word. Row order is treated as descending corpus frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSpace {
    words: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Array2<f64>,
}

/// Counters collected while reading a word2vec text file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReadStats {
    /// Word count announced by the header.
    pub header_count: usize,
    /// Rows dropped for wrong arity, non-numeric or non-finite entries.
    pub malformed_rows: usize,
    /// Rows dropped because the word was already present.
    pub duplicate_rows: usize,
}

impl EmbeddingSpace {
    /// Build a space, checking that words are unique and every entry is finite.
    pub fn new(words: Vec<String>, vectors: Array2<f64>) -> Result<Self> {
        if words.len() != vectors.nrows() {
            return Err(Error::Dimension(format!(
                "{} words but {} vectors",
                words.len(),
                vectors.nrows()
            )));
        }
        if vectors.ncols() == 0 {
            return Err(Error::format("embedding dimension must be positive"));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(Error::format("embedding contains non-finite values"));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::format(format!("duplicate word {w:?}")));
            }
        }
        Ok(EmbeddingSpace {
            words,
            index,
            vectors,
        })
    }

    /// Same vocabulary, new vectors. Used by the transforms, which never
    /// touch the word list.
    pub(crate) fn with_vectors(&self, vectors: Array2<f64>) -> Self {
        debug_assert_eq!(vectors.nrows(), self.words.len());
        EmbeddingSpace {
            words: self.words.clone(),
            index: self.index.clone(),
            vectors,
        }
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn vectors(&self) -> ArrayView2<'_, f64> {
        self.vectors.view()
    }

    pub fn vector(&self, i: usize) -> ArrayView1<'_, f64> {
        self.vectors.row(i)
    }

    pub fn word_index(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    /// The `n` most frequent words, i.e. the first `min(n, len)` rows.
    pub fn frequency_cut(&self, n: usize) -> EmbeddingSpace {
        let keep = n.min(self.len());
        if keep == self.len() {
            return self.clone();
        }
        let words = self.words[..keep].to_vec();
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        EmbeddingSpace {
            words,
            index,
            vectors: self.vectors.slice(s![..keep, ..]).to_owned(),
        }
    }

    /// Read a word2vec text stream, keeping at most `max_vocab` valid rows in
    /// file order.
    pub fn read_word2vec<R: BufRead>(reader: R, max_vocab: usize) -> Result<(Self, ReadStats)> {
        read_word2vec(reader, max_vocab)
    }

    /// Write the space in word2vec text format.
    pub fn write_word2vec<W: Write>(&self, writer: W) -> Result<()> {
        write_word2vec(self, writer)
    }
}

fn parse_header(line: &str) -> Result<(usize, usize)> {
    let mut parts = line.split_whitespace();
    let (Some(n), Some(d), None) = (parts.next(), parts.next(), parts.next()) else {
        return Err(Error::format(format!("malformed header {:?}", line.trim_end())));
    };
    let n: usize = n
        .parse()
        .map_err(|_| Error::format(format!("malformed word count {n:?} in header")))?;
    let d: usize = d
        .parse()
        .map_err(|_| Error::format(format!("malformed dimension {d:?} in header")))?;
    if d == 0 {
        return Err(Error::format("header declares dimension 0"));
    }
    Ok((n, d))
}

fn parse_row(line: &str, dim: usize, out: &mut Vec<f64>) -> Option<String> {
    let mut fields = line.split_whitespace();
    let word = fields.next()?;
    let start = out.len();
    for field in fields {
        // values live as f32 in the file layer
        match field.parse::<f32>() {
            Ok(v) if v.is_finite() && out.len() - start < dim => out.push(v as f64),
            _ => {
                out.truncate(start);
                return None;
            }
        }
    }
    if out.len() - start != dim {
        out.truncate(start);
        return None;
    }
    Some(word.to_string())
}

fn read_word2vec<R: BufRead>(mut reader: R, max_vocab: usize) -> Result<(EmbeddingSpace, ReadStats)> {
    if max_vocab == 0 {
        return Err(Error::config("max_vocab must be positive"));
    }
    let mut buf = Vec::new();
    if reader.read_until(b'\n', &mut buf)? == 0 {
        return Err(Error::format("empty embedding stream"));
    }
    let header = std::str::from_utf8(&buf).map_err(|_| Error::format("header is not UTF-8"))?;
    let (header_count, dim) = parse_header(header)?;

    let mut stats = ReadStats {
        header_count,
        ..ReadStats::default()
    };
    let mut words = Vec::new();
    let mut seen = HashMap::new();
    let mut values = Vec::with_capacity(header_count.min(max_vocab) * dim);

    while words.len() < max_vocab {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        let Ok(line) = std::str::from_utf8(&buf) else {
            stats.malformed_rows += 1;
            continue;
        };
        if line.trim().is_empty() {
            continue;
        }
        let Some(word) = parse_row(line, dim, &mut values) else {
            stats.malformed_rows += 1;
            continue;
        };
        if seen.contains_key(&word) {
            values.truncate(values.len() - dim);
            stats.duplicate_rows += 1;
            continue;
        }
        seen.insert(word.clone(), words.len());
        words.push(word);
    }

    if stats.malformed_rows > 0 {
        warn!("skipped {} malformed embedding rows", stats.malformed_rows);
    }
    if stats.duplicate_rows > 0 {
        warn!("skipped {} duplicate embedding rows", stats.duplicate_rows);
    }
    if words.is_empty() {
        return Err(Error::format("no valid embedding rows"));
    }
    let vectors = Array2::from_shape_vec((words.len(), dim), values)
        .expect("row count and dimension agree");
    Ok((
        EmbeddingSpace {
            words,
            index: seen,
            vectors,
        },
        stats,
    ))
}

/// `%.6g`-style rendering: six significant digits, trailing zeros dropped,
/// scientific notation outside `[1e-4, 1e6)`.
pub fn format_g6(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{:.5e}", v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if !(-4..6).contains(&exp) {
        let mantissa = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{mantissa}e{sign}{:02}", exp.abs());
    }
    let decimals = (5 - exp) as usize;
    trim_fraction(&format!("{:.*}", decimals, v)).to_string()
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn write_word2vec<W: Write>(space: &EmbeddingSpace, mut writer: W) -> Result<()> {
    for w in &space.words {
        if w.is_empty() || w.chars().any(char::is_whitespace) {
            return Err(Error::format(format!(
                "word {w:?} cannot be written: words must be non-empty and free of whitespace"
            )));
        }
    }
    writeln!(writer, "{} {}", space.len(), space.dim())?;
    let mut line = String::new();
    for (word, row) in space.words.iter().zip(space.vectors.rows()) {
        line.clear();
        line.push_str(word);
        for v in row {
            line.push(' ');
            line.push_str(&format_g6(*v));
        }
        line.push('\n');
        writer.write_all(line.as_bytes())?;
    }
    writer.flush()?;
    Ok(())
}
