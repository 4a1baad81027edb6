//! Bilingual lexicon induction: nearest-neighbour / CSLS retrieval, MRR and
//! P@1, and the success classes used to flag collapsed alignments.

use std::cmp::Ordering;

use log::warn;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dictionary::TestQuery;
use crate::embeddings::EmbeddingSpace;
use crate::error::{Error, Result};
use crate::linalg::normalized_rows;
use crate::transforms::ProjectionModel;

/// Neighbourhood size for CSLS.
pub const DEFAULT_CSLS_K: usize = 10;

/// At or below this MRR a run counts as a hard failure.
pub const HARD_FAIL_MRR: f64 = 0.01;
/// At or below this MRR a run counts as a weak failure.
pub const WEAK_FAIL_MRR: f64 = 0.05;

const ROW_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalMethod {
    /// Plain cosine similarity.
    Nn,
    /// Cross-domain similarity local scaling.
    Csls,
}

impl std::str::FromStr for RetrievalMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nn" => Ok(RetrievalMethod::Nn),
            "csls" => Ok(RetrievalMethod::Csls),
            _ => Err(Error::config(format!("unknown retrieval method {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuccessClass {
    HardFail,
    WeakFail,
    Ok,
}

impl SuccessClass {
    pub fn as_str(self) -> &'static str {
        match self {
            SuccessClass::HardFail => "hard_fail",
            SuccessClass::WeakFail => "weak_fail",
            SuccessClass::Ok => "ok",
        }
    }
}

/// Both thresholds are inclusive.
pub fn classify_success(mrr: f64) -> SuccessClass {
    if mrr <= HARD_FAIL_MRR {
        SuccessClass::HardFail
    } else if mrr <= WEAK_FAIL_MRR {
        SuccessClass::WeakFail
    } else {
        SuccessClass::Ok
    }
}

/// Best rank of one query; `None` when none of its gold targets is in the
/// target vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRank {
    pub source: String,
    pub rank: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BliReport {
    pub mrr: f64,
    pub p_at_1: f64,
    pub coverage: f64,
    pub n_queries: usize,
    pub success_class: SuccessClass,
    #[serde(skip)]
    pub per_query_ranks: Vec<QueryRank>,
}

impl BliReport {
    pub const TSV_HEADER: &'static str = "mrr\tp_at_1\tcoverage\tn_queries\tsuccess_class";

    pub fn from_ranks(per_query_ranks: Vec<QueryRank>, total_sources: usize) -> Result<Self> {
        let n = per_query_ranks.len();
        if n == 0 {
            return Err(Error::NoQueries("every test source is out of vocabulary".into()));
        }
        let reciprocal: f64 = per_query_ranks
            .iter()
            .filter_map(|q| q.rank)
            .map(|r| 1.0 / r as f64)
            .sum();
        let hits = per_query_ranks.iter().filter(|q| q.rank == Some(1)).count();
        let mrr = reciprocal / n as f64;
        Ok(BliReport {
            mrr,
            p_at_1: hits as f64 / n as f64,
            coverage: n as f64 / total_sources.max(1) as f64,
            n_queries: n,
            success_class: classify_success(mrr),
            per_query_ranks,
        })
    }

    pub fn to_tsv_line(&self) -> String {
        format!(
            "{:.6}\t{:.6}\t{:.6}\t{}\t{}",
            self.mrr,
            self.p_at_1,
            self.coverage,
            self.n_queries,
            self.success_class.as_str()
        )
    }
}

fn mean_top_k(row: ArrayView1<f64>, k: usize, scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    scratch.extend(row.iter().copied());
    let k = k.min(scratch.len());
    if k == 0 {
        return 0.0;
    }
    if k < scratch.len() {
        scratch.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
    }
    let top = &mut scratch[..k];
    top.sort_unstable_by(|a, b| b.total_cmp(a));
    top.iter().sum::<f64>() / k as f64
}

/// For each row of `a`, the mean similarity (dot product) to its `k` most
/// similar rows of `b`. Computed in row blocks so `|a| × |b|` is never
/// materialized.
pub fn knn_mean_similarity(a: ArrayView2<f64>, b: ArrayView2<f64>, k: usize) -> Array1<f64> {
    let n = a.nrows();
    let starts: Vec<usize> = (0..n).step_by(ROW_CHUNK).collect();
    let blocks: Vec<Vec<f64>> = starts
        .par_iter()
        .map(|&start| {
            let end = (start + ROW_CHUNK).min(n);
            let sims = a.slice(s![start..end, ..]).dot(&b.t());
            let mut scratch = Vec::with_capacity(b.nrows());
            sims.rows()
                .into_iter()
                .map(|row| mean_top_k(row, k, &mut scratch))
                .collect()
        })
        .collect();
    Array1::from_iter(blocks.into_iter().flatten())
}

fn clamp_k(k: usize, n: usize, what: &str) -> usize {
    if k > n {
        warn!("CSLS k={k} exceeds {what} size {n}; clamping");
        n
    } else {
        k.max(1)
    }
}

/// CSLS penalties `(r_T(q), r_S(t))` for unit-normalized `queries` and `targets`.
pub fn csls_penalties(queries: ArrayView2<f64>, targets: ArrayView2<f64>, k: usize) -> (Array1<f64>, Array1<f64>) {
    let k_t = clamp_k(k, targets.nrows(), "target");
    let k_q = clamp_k(k, queries.nrows(), "query");
    (
        knn_mean_similarity(queries, targets, k_t),
        knn_mean_similarity(targets, queries, k_q),
    )
}

/// Full CSLS matrix `2·cos(q,t) − r_T(q) − r_S(t)` over unit-normalized rows.
pub fn csls_scores(queries: ArrayView2<f64>, targets: ArrayView2<f64>, k: usize) -> Array2<f64> {
    let (r_t, r_s) = csls_penalties(queries, targets, k);
    let mut scores = queries.dot(&targets.t()) * 2.0;
    scores -= &r_t.insert_axis(Axis(1));
    scores -= &r_s;
    scores
}

/// 1-based rank of `target` in `row`: strictly better scores come first, ties
/// go to the lower index.
pub fn rank_of(row: ArrayView1<f64>, target: usize) -> usize {
    let score = row[target];
    1 + row
        .iter()
        .enumerate()
        .filter(|&(j, &v)| match v.total_cmp(&score) {
            Ordering::Greater => true,
            Ordering::Equal => j < target,
            Ordering::Less => false,
        })
        .count()
}

/// Rank queries in an already mapped, unit-normalized shared space.
///
/// Each query is `(source row, gold target rows)`. For CSLS the source-side
/// penalty uses every row of `src` as the query population.
pub fn rank_queries(
    src: ArrayView2<f64>,
    tgt: ArrayView2<f64>,
    queries: &[(usize, Vec<usize>)],
    method: RetrievalMethod,
    k: usize,
) -> Vec<Option<usize>> {
    let rows: Vec<usize> = queries.iter().map(|q| q.0).collect();
    let q = src.select(Axis(0), &rows);
    let (r_t, r_s) = match method {
        RetrievalMethod::Nn => (None, None),
        RetrievalMethod::Csls => {
            let k_t = clamp_k(k, tgt.nrows(), "target");
            let k_s = clamp_k(k, src.nrows(), "source");
            (
                Some(knn_mean_similarity(q.view(), tgt, k_t)),
                Some(knn_mean_similarity(tgt, src, k_s)),
            )
        }
    };

    let starts: Vec<usize> = (0..queries.len()).step_by(ROW_CHUNK).collect();
    let blocks: Vec<Vec<Option<usize>>> = starts
        .par_iter()
        .map(|&start| {
            let end = (start + ROW_CHUNK).min(queries.len());
            let mut scores = q.slice(s![start..end, ..]).dot(&tgt.t());
            if let (Some(r_t), Some(r_s)) = (&r_t, &r_s) {
                scores *= 2.0;
                scores -= &r_t.slice(s![start..end]).insert_axis(Axis(1));
                scores -= r_s;
            }
            scores
                .rows()
                .into_iter()
                .zip(&queries[start..end])
                .map(|(row, (_, gold))| gold.iter().map(|&g| rank_of(row, g)).min())
                .collect()
        })
        .collect();
    blocks.into_iter().flatten().collect()
}

/// Map both spaces with `model`, then rank every in-vocabulary test query.
pub fn evaluate_bli(
    model: &ProjectionModel,
    src: &EmbeddingSpace,
    tgt: &EmbeddingSpace,
    test: &[TestQuery],
    method: RetrievalMethod,
    k: usize,
) -> Result<BliReport> {
    if test.is_empty() {
        return Err(Error::NoQueries("test set is empty".into()));
    }
    let xm = normalized_rows(model.map_source(src.vectors()).view());
    let zm = normalized_rows(model.map_target(tgt.vectors()).view());
    evaluate_mapped(xm.view(), zm.view(), src, tgt, test, method, k)
}

/// Like [`evaluate_bli`] for matrices that are already in the shared space.
pub fn evaluate_mapped(
    xm: ArrayView2<f64>,
    zm: ArrayView2<f64>,
    src: &EmbeddingSpace,
    tgt: &EmbeddingSpace,
    test: &[TestQuery],
    method: RetrievalMethod,
    k: usize,
) -> Result<BliReport> {
    let mut names = Vec::new();
    let mut queries = Vec::new();
    for q in test {
        let Some(i) = src.word_index(&q.source) else {
            continue;
        };
        let gold: Vec<usize> = q.targets.iter().filter_map(|t| tgt.word_index(t)).collect();
        names.push(q.source.clone());
        queries.push((i, gold));
    }
    if queries.is_empty() {
        return Err(Error::NoQueries("every test source is out of vocabulary".into()));
    }
    let oov = test.len() - queries.len();
    if oov > 0 {
        warn!("{oov} of {} test sources are out of vocabulary", test.len());
    }
    let ranks = rank_queries(xm, zm, &queries, method, k);
    let per_query = names
        .into_iter()
        .zip(ranks)
        .map(|(source, rank)| QueryRank { source, rank })
        .collect();
    BliReport::from_ranks(per_query, test.len())
}
