//! Fully unsupervised seed dictionary induction.
//!
//! Words with similar meaning are assumed to have similar distributions of
//! monolingual similarities. Each word is described by its sorted row of
//! `√max(XXᵀ, 0)`; mutual nearest neighbours between the two sets of
//! descriptors form the seed dictionary.

use log::warn;
use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

use crate::dictionary::Dictionary;
use crate::embeddings::EmbeddingSpace;
use crate::error::{Error, Result};
use crate::linalg::normalized_rows;

/// Number of most frequent words used for seed induction.
pub const DEFAULT_SEED_VOCAB: usize = 4000;

/// Row-sorted `√max(M, 0)` over the `m` most frequent words; each row is
/// non-increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityProfile {
    matrix: Array2<f64>,
}

impl SimilarityProfile {
    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.matrix.view()
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }
}

/// Build the similarity profile of the `m` most frequent words of `space`
/// (expected to be S1-normalized). `m` larger than the vocabulary is clamped.
pub fn similarity_profiles(space: &EmbeddingSpace, m: usize) -> SimilarityProfile {
    let m = if m > space.len() {
        warn!("profile size {m} exceeds vocabulary {}; clamping", space.len());
        space.len()
    } else {
        m
    };
    let x = space.vectors().slice(ndarray::s![..m, ..]).to_owned();
    let mut sims = x.dot(&x.t());
    sims.axis_iter_mut(Axis(0))
        .into_par_iter()
        .for_each(|mut row| {
            row.mapv_inplace(|v| v.max(0.0).sqrt());
            let mut values = row.to_vec();
            values.sort_unstable_by(|a, b| b.total_cmp(a));
            row.assign(&ArrayView1::from(&values));
        });
    SimilarityProfile { matrix: sims }
}

/// Index of the largest entry; ties go to the lower index.
pub(crate) fn argmax(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (j, &v) in row.iter().enumerate() {
        if v > best_val {
            best = j;
            best_val = v;
        }
    }
    best
}

/// Mutual nearest neighbours between the rows of two similarity matrices
/// expressed as one `|src| × |tgt|` score matrix.
pub(crate) fn mutual_argmax(scores: ArrayView2<f64>) -> Vec<(usize, usize)> {
    let forward: Vec<usize> = scores
        .axis_iter(Axis(0))
        .into_par_iter()
        .map(argmax)
        .collect();
    let backward: Vec<usize> = scores
        .axis_iter(Axis(1))
        .into_par_iter()
        .map(argmax)
        .collect();
    forward
        .iter()
        .enumerate()
        .filter(|&(i, &j)| backward[j] == i)
        .map(|(i, &j)| (i, j))
        .collect()
}

/// Induce `D⁽¹⁾` from two S1-normalized spaces without any supervision.
///
/// Both profiles use the `min(m, |X|, |Z|)` most frequent words so that their
/// rows are comparable; rows are compared by cosine similarity.
pub fn induce_unsupervised_seed(src: &EmbeddingSpace, tgt: &EmbeddingSpace, m: usize) -> Result<Dictionary> {
    if src.dim() != tgt.dim() {
        return Err(Error::Dimension(format!(
            "seed induction needs equal dimensions, got {} and {}",
            src.dim(),
            tgt.dim()
        )));
    }
    if m == 0 {
        return Err(Error::config("seed vocabulary size must be positive"));
    }
    let m = m.min(src.len()).min(tgt.len());
    let px = normalized_rows(similarity_profiles(src, m).matrix());
    let pz = normalized_rows(similarity_profiles(tgt, m).matrix());
    let scores = px.dot(&pz.t());
    let pairs = mutual_argmax(scores.view());
    if pairs.len() < 2 {
        return Err(Error::DegenerateSeed(format!(
            "only {} mutual nearest neighbour pair(s) found",
            pairs.len()
        )));
    }
    Dictionary::new(pairs, src.len(), tgt.len())
}
