//! Translation dictionaries: index pairs between two vocabularies, plus the
//! plain-text pair format used for training and test lexicons.
//!
//! The text format is UTF-8, one `source<TAB or spaces>target` pair per line.
//! Blank lines and lines starting with `#` are ignored.

use std::collections::{BTreeMap, HashSet};
use std::io::BufRead;

use log::warn;

use crate::embeddings::EmbeddingSpace;
use crate::error::{Error, Result};

/// A set of `(source index, target index)` pairs over fixed-size vocabularies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dictionary {
    pairs: Vec<(usize, usize)>,
    src_size: usize,
    tgt_size: usize,
}

impl Dictionary {
    /// Build a dictionary. Duplicate pairs are dropped (first occurrence wins);
    /// out-of-range indices are an error.
    pub fn new(pairs: Vec<(usize, usize)>, src_size: usize, tgt_size: usize) -> Result<Self> {
        let mut seen = HashSet::with_capacity(pairs.len());
        let mut unique = Vec::with_capacity(pairs.len());
        for (s, t) in pairs {
            if s >= src_size || t >= tgt_size {
                return Err(Error::format(format!(
                    "pair ({s}, {t}) out of range for vocabularies {src_size}×{tgt_size}"
                )));
            }
            if seen.insert((s, t)) {
                unique.push((s, t));
            }
        }
        Ok(Dictionary {
            pairs: unique,
            src_size,
            tgt_size,
        })
    }

    /// `i ↦ i` for `i < n`.
    pub fn identity(n: usize) -> Self {
        Dictionary {
            pairs: (0..n).map(|i| (i, i)).collect(),
            src_size: n,
            tgt_size: n,
        }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn src_size(&self) -> usize {
        self.src_size
    }

    pub fn tgt_size(&self) -> usize {
        self.tgt_size
    }

    pub fn source_indices(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.0).collect()
    }

    pub fn target_indices(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.1).collect()
    }

    /// Swap the roles of source and target.
    pub fn transposed(&self) -> Dictionary {
        Dictionary {
            pairs: self.pairs.iter().map(|&(s, t)| (t, s)).collect(),
            src_size: self.tgt_size,
            tgt_size: self.src_size,
        }
    }

    /// Keep the first `n` pairs.
    pub fn truncated(&self, n: usize) -> Dictionary {
        Dictionary {
            pairs: self.pairs.iter().take(n).copied().collect(),
            src_size: self.src_size,
            tgt_size: self.tgt_size,
        }
    }

    /// True when every source and every target index occurs at most once.
    pub fn is_partial_bijection(&self) -> bool {
        let mut src = HashSet::new();
        let mut tgt = HashSet::new();
        self.pairs
            .iter()
            .all(|&(s, t)| src.insert(s) && tgt.insert(t))
    }

    /// Pairs as a sorted set, convenient for order-insensitive comparison.
    pub fn pair_set(&self) -> std::collections::BTreeSet<(usize, usize)> {
        self.pairs.iter().copied().collect()
    }
}

/// Counters from reading a dictionary file against two vocabularies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DictionaryStats {
    pub entries: usize,
    pub oov: usize,
    pub duplicates: usize,
    pub malformed: usize,
}

/// Word pairs in file order. Lines with other than two fields are skipped and
/// counted.
pub fn read_word_pairs<R: BufRead>(reader: R) -> Result<(Vec<(String, String)>, usize)> {
    let mut pairs = Vec::new();
    let mut malformed = 0;
    for line in reader.lines() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed.split_whitespace();
        match (fields.next(), fields.next(), fields.next()) {
            (Some(s), Some(t), None) => pairs.push((s.to_string(), t.to_string())),
            _ => malformed += 1,
        }
    }
    if malformed > 0 {
        warn!("skipped {malformed} malformed dictionary lines");
    }
    Ok((pairs, malformed))
}

/// Read a training lexicon, keeping pairs whose source word is in `src` and
/// target word is in `tgt`.
pub fn load_dictionary<R: BufRead>(
    reader: R,
    src: &EmbeddingSpace,
    tgt: &EmbeddingSpace,
) -> Result<(Dictionary, DictionaryStats)> {
    let (words, malformed) = read_word_pairs(reader)?;
    let mut stats = DictionaryStats {
        entries: words.len(),
        malformed,
        ..DictionaryStats::default()
    };
    let mut seen = HashSet::new();
    let mut pairs = Vec::new();
    for (s, t) in &words {
        match (src.word_index(s), tgt.word_index(t)) {
            (Some(i), Some(j)) => {
                if seen.insert((i, j)) {
                    pairs.push((i, j));
                } else {
                    stats.duplicates += 1;
                }
            }
            _ => stats.oov += 1,
        }
    }
    if stats.oov > 0 {
        warn!("skipped {} out-of-vocabulary dictionary pairs", stats.oov);
    }
    if pairs.is_empty() {
        return Err(Error::EmptyDictionary(
            "no dictionary pair has both words in vocabulary".into(),
        ));
    }
    let dict = Dictionary::new(pairs, src.len(), tgt.len())?;
    Ok((dict, stats))
}

/// Every `(i, j)` whose words are byte-identical.
pub fn identical_strings_seed(src: &EmbeddingSpace, tgt: &EmbeddingSpace) -> Result<Dictionary> {
    let pairs: Vec<_> = src
        .words()
        .iter()
        .enumerate()
        .filter_map(|(i, w)| tgt.word_index(w).map(|j| (i, j)))
        .collect();
    if pairs.is_empty() {
        return Err(Error::EmptyDictionary(
            "vocabularies share no identical strings".into(),
        ));
    }
    Dictionary::new(pairs, src.len(), tgt.len())
}

/// One test query: a source word and every gold translation listed for it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestQuery {
    pub source: String,
    pub targets: Vec<String>,
}

/// Group word pairs by source word. Repeated lines collapse; gold targets are
/// kept sorted, queries in order of first appearance.
pub fn group_test_pairs<I, S>(pairs: I) -> Vec<TestQuery>
where
    I: IntoIterator<Item = (S, S)>,
    S: Into<String>,
{
    let mut order = Vec::new();
    let mut gold: BTreeMap<String, std::collections::BTreeSet<String>> = BTreeMap::new();
    for (s, t) in pairs {
        let s = s.into();
        let entry = gold.entry(s.clone()).or_insert_with(|| {
            order.push(s);
            Default::default()
        });
        entry.insert(t.into());
    }
    order
        .into_iter()
        .map(|s| {
            let targets = gold.remove(&s).unwrap_or_default().into_iter().collect();
            TestQuery { source: s, targets }
        })
        .collect()
}

/// Read a test lexicon and group it by source word.
pub fn load_test_set<R: BufRead>(reader: R) -> Result<Vec<TestQuery>> {
    let (pairs, _) = read_word_pairs(reader)?;
    Ok(group_test_pairs(pairs))
}
