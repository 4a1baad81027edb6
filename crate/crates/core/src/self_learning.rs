//! Iterative self-learning: alternate between fitting a projection on the
//! current dictionary and re-inducing the dictionary from nearest neighbours
//! in the projected space.
//!
//! Dictionary induction runs over the `vocab_cut` most frequent words of each
//! side. Scores are CSLS-adjusted by default; with dropout each score is
//! independently zeroed with probability `1 − keep`. The keep probability is
//! doubled whenever the objective stalls for a full patience window, and the
//! loop stops once it stalls with `keep = 1`.

use ndarray::{s, Array1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dictionary::Dictionary;
use crate::embeddings::EmbeddingSpace;
use crate::error::{Error, Result};
use crate::linalg::normalized_rows;
use crate::retrieval::{knn_mean_similarity, RetrievalMethod, DEFAULT_CSLS_K};
use crate::transforms::{solve_projection, ProjectionModel, StepKind};

/// Vocabulary cut used for dictionary induction.
pub const DEFAULT_VOCAB_CUT: usize = 20_000;
/// Initial keep probability when dropout is enabled.
pub const DEFAULT_DROPOUT_KEEP: f64 = 0.1;
pub const DEFAULT_MAX_ITERS: usize = 500;
pub const DEFAULT_CONVERGENCE_TOL: f64 = 1e-6;
/// Iterations without improvement before the keep probability is raised.
pub const DROPOUT_PATIENCE: usize = 50;

/// Score matrices up to this many entries are held in memory whole.
const MATERIALIZE_LIMIT: usize = 16 * 1024 * 1024;
const ROW_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InductionMode {
    /// Every source word paired with its best target.
    AllNn,
    /// Only pairs that are each other's best match.
    MutualNn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfLearnConfig {
    pub induction_mode: InductionMode,
    /// Initial keep probability in `(0, 1]`; `1` disables dropout.
    pub dropout_keep: f64,
    pub vocab_cut: usize,
    pub max_iters: usize,
    pub convergence_tol: f64,
    pub rng_seed: u64,
    pub step_kind: StepKind,
    pub scoring: RetrievalMethod,
    pub csls_k: usize,
}

impl Default for SelfLearnConfig {
    fn default() -> Self {
        SelfLearnConfig {
            induction_mode: InductionMode::AllNn,
            dropout_keep: 1.0,
            vocab_cut: DEFAULT_VOCAB_CUT,
            max_iters: DEFAULT_MAX_ITERS,
            convergence_tol: DEFAULT_CONVERGENCE_TOL,
            rng_seed: 0,
            step_kind: StepKind::FullS2S4,
            scoring: RetrievalMethod::Csls,
            csls_k: DEFAULT_CSLS_K,
        }
    }
}

impl SelfLearnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dropout_keep > 0.0 && self.dropout_keep <= 1.0) {
            return Err(Error::config(format!(
                "dropout keep probability {} outside (0, 1]",
                self.dropout_keep
            )));
        }
        if self.vocab_cut < 2 {
            return Err(Error::config("vocabulary cut must be at least 2"));
        }
        if self.max_iters == 0 {
            return Err(Error::config("max_iters must be positive"));
        }
        if self.convergence_tol.is_nan() || self.convergence_tol <= 0.0 {
            return Err(Error::config("convergence tolerance must be positive"));
        }
        if self.csls_k == 0 {
            return Err(Error::config("CSLS k must be positive"));
        }
        Ok(())
    }

    pub fn uses_dropout(&self) -> bool {
        self.dropout_keep < 1.0
    }

    /// Stall window at the given keep probability: long while dropout
    /// explores, a single step once it is off.
    pub fn patience(keep: f64) -> usize {
        if keep < 1.0 {
            DROPOUT_PATIENCE
        } else {
            1
        }
    }
}

/// One iteration of the learning loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// Mean cosine similarity of the induced pairs.
    pub objective: f64,
    pub best_objective: f64,
    pub dictionary_size: usize,
    pub dropout_keep: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LearningTrace {
    pub iterations: Vec<IterationRecord>,
}

impl LearningTrace {
    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    pub fn best_objective(&self) -> Option<f64> {
        self.iterations.last().map(|r| r.best_objective)
    }
}

#[derive(Debug, Clone)]
pub struct SelfLearnOutcome {
    /// Model of the best-objective iteration.
    pub model: ProjectionModel,
    /// Dictionary induced by that model.
    pub dictionary: Dictionary,
    pub trace: LearningTrace,
    /// Set when mutual induction produced an empty dictionary.
    pub collapsed: bool,
}

/// Output of one induction pass.
#[derive(Debug, Clone)]
pub struct Induced {
    pub pairs: Vec<(usize, usize)>,
    /// Mean cosine similarity of `pairs`.
    pub objective: f64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-entry Bernoulli mask. Counter-based, so it needs no storage and any
/// pass over the score matrix sees the same draws.
#[derive(Debug, Clone, Copy)]
struct DropoutMask {
    seed: u64,
    /// A draw keeps its entry when the 16-bit lane falls below this.
    threshold: u32,
}

impl DropoutMask {
    /// Each 64-bit hash yields four 16-bit draws, one per column in a group
    /// of four.
    const LANES: usize = 4;

    fn new(seed: u64, keep: f64) -> Self {
        let threshold = (keep * 65_536.0).round().clamp(1.0, 65_536.0) as u32;
        DropoutMask { seed, threshold }
    }

    fn row_hash(&self, src: usize) -> u64 {
        splitmix64(self.seed ^ src as u64)
    }

    /// Zero the dropped entries of row `src`.
    fn apply(&self, src: usize, row: &mut [f64]) {
        let h = self.row_hash(src);
        for (g, group) in row.chunks_mut(Self::LANES).enumerate() {
            let bits = splitmix64(h ^ (g as u64).rotate_left(32));
            for (lane, v) in group.iter_mut().enumerate() {
                let draw = ((bits >> (16 * lane)) & 0xFFFF) as u32;
                // branch-free: a dropped entry becomes +0.0
                let keep_bits = 0u64.wrapping_sub((draw < self.threshold) as u64);
                *v = f64::from_bits(v.to_bits() & keep_bits);
            }
        }
    }

    #[cfg(test)]
    fn kept(&self, src: usize, tgt: usize) -> bool {
        let bits = splitmix64(self.row_hash(src) ^ ((tgt / Self::LANES) as u64).rotate_left(32));
        let draw = ((bits >> (16 * (tgt % Self::LANES))) & 0xFFFF) as u32;
        draw < self.threshold
    }
}

/// Mean of the `k` largest entries of each row.
fn knn_mean_rows(sims: ArrayView2<f64>, k: usize) -> Array1<f64> {
    let rows: Vec<f64> = sims
        .axis_iter(Axis(0))
        .into_par_iter()
        .map(|row| {
            let mut v = row.to_vec();
            let k = k.min(v.len());
            if k < v.len() {
                v.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
            }
            let top = &mut v[..k];
            top.sort_unstable_by(|a, b| b.total_cmp(a));
            top.iter().sum::<f64>() / k as f64
        })
        .collect();
    Array1::from(rows)
}

/// Running `k` largest values of every column, each kept in decreasing order.
#[derive(Clone)]
struct ColumnTopK {
    k: usize,
    vals: Vec<f64>,
    /// Smallest retained value per column, contiguous for a cheap reject test.
    floor: Vec<f64>,
}

impl ColumnTopK {
    fn new(ncols: usize, k: usize) -> Self {
        ColumnTopK {
            k,
            vals: vec![f64::NEG_INFINITY; ncols * k],
            floor: vec![f64::NEG_INFINITY; ncols],
        }
    }

    fn insert(&mut self, j: usize, v: f64) {
        let k = self.k;
        let top = &mut self.vals[j * k..(j + 1) * k];
        let mut p = k - 1;
        while p > 0 && top[p - 1] < v {
            top[p] = top[p - 1];
            p -= 1;
        }
        top[p] = v;
        self.floor[j] = top[k - 1];
    }

    fn push_rows(&mut self, block: ArrayView2<f64>) {
        for row in block.rows() {
            for (j, &v) in row.iter().enumerate() {
                if v > self.floor[j] {
                    self.insert(j, v);
                }
            }
        }
    }

    fn merge(mut self, other: &ColumnTopK) -> ColumnTopK {
        let k = self.k;
        for j in 0..self.floor.len() {
            for &v in &other.vals[j * k..(j + 1) * k] {
                if v > self.floor[j] {
                    self.insert(j, v);
                }
            }
        }
        self
    }

    fn means(&self) -> Array1<f64> {
        self.vals
            .chunks(self.k)
            .map(|top| top.iter().sum::<f64>() / self.k as f64)
            .collect()
    }
}

fn column_knn_mean(sims: ArrayView2<f64>, k: usize) -> Array1<f64> {
    let k = k.min(sims.nrows()).max(1);
    let ncols = sims.ncols();
    // few large chunks: every chunk pays a warm-up while its lists fill
    let chunk = sims.nrows().div_ceil(rayon::current_num_threads()).max(ROW_CHUNK);
    sims.axis_chunks_iter(Axis(0), chunk)
        .into_par_iter()
        .map(|chunk| {
            let mut t = ColumnTopK::new(ncols, k);
            t.push_rows(chunk);
            t
        })
        .reduce_with(|a, b| a.merge(&b))
        .map(|t| t.means())
        .unwrap_or_else(|| Array1::zeros(ncols))
}

/// Row argmaxes of one block of (adjusted, masked) scores, and optionally the
/// best `(score, row)` per column. Ties go to the lower index throughout.
struct BlockResult {
    row_best: Vec<usize>,
    col_best: Vec<(f64, usize)>,
}

struct ScoreParams<'a> {
    penalties: Option<(&'a Array1<f64>, &'a Array1<f64>)>,
    mask: Option<DropoutMask>,
    columns: bool,
}

fn score_block(sims: ArrayView2<f64>, start: usize, p: &ScoreParams) -> BlockResult {
    let ncols = sims.ncols();
    let mut col_best = if p.columns {
        vec![(f64::NEG_INFINITY, usize::MAX); ncols]
    } else {
        Vec::new()
    };
    let mut row_best = Vec::with_capacity(sims.nrows());
    let mut scores = vec![0.0; ncols];
    for (di, row) in sims.rows().into_iter().enumerate() {
        let i = start + di;
        for (s, &c) in scores.iter_mut().zip(row.iter()) {
            *s = c;
        }
        if let Some((r_x, r_z)) = p.penalties {
            let rx = r_x[i];
            for (s, &rz) in scores.iter_mut().zip(r_z.iter()) {
                *s = 2.0 * *s - rx - rz;
            }
        }
        if let Some(m) = p.mask {
            m.apply(i, &mut scores);
        }
        let mut best = (f64::NEG_INFINITY, 0);
        for (j, &s) in scores.iter().enumerate() {
            if s > best.0 {
                best = (s, j);
            }
        }
        row_best.push(best.1);
        if p.columns {
            for (cb, &s) in col_best.iter_mut().zip(&scores) {
                if s > cb.0 || cb.1 == usize::MAX {
                    *cb = (s, i);
                }
            }
        }
    }
    BlockResult { row_best, col_best }
}

/// Forward nearest neighbours of every source row, plus the backward nearest
/// neighbour of every target row when `mutual` is set.
fn nearest_neighbours(
    x: ArrayView2<f64>,
    z: ArrayView2<f64>,
    scoring: RetrievalMethod,
    k: usize,
    mask: Option<DropoutMask>,
    mutual: bool,
    materialize: bool,
) -> (Vec<usize>, Vec<usize>) {
    let cos = materialize.then(|| x.dot(&z.t()));
    let penalties = (scoring == RetrievalMethod::Csls).then(|| {
        let k_z = k.min(z.nrows()).max(1);
        let k_x = k.min(x.nrows()).max(1);
        match &cos {
            Some(c) => (knn_mean_rows(c.view(), k_z), column_knn_mean(c.view(), k_x)),
            None => (knn_mean_similarity(x, z, k_z), knn_mean_similarity(z, x, k_x)),
        }
    });
    let params = ScoreParams {
        penalties: penalties.as_ref().map(|(a, b)| (a, b)),
        mask,
        columns: mutual,
    };
    let starts: Vec<usize> = (0..x.nrows()).step_by(ROW_CHUNK).collect();
    let blocks: Vec<BlockResult> = starts
        .par_iter()
        .map(|&start| {
            let end = (start + ROW_CHUNK).min(x.nrows());
            match &cos {
                Some(c) => score_block(c.slice(s![start..end, ..]), start, &params),
                None => score_block(x.slice(s![start..end, ..]).dot(&z.t()).view(), start, &params),
            }
        })
        .collect();

    let mut forward = Vec::with_capacity(x.nrows());
    let mut col_best = vec![(f64::NEG_INFINITY, usize::MAX); if mutual { z.nrows() } else { 0 }];
    for b in blocks {
        forward.extend_from_slice(&b.row_best);
        // earlier blocks hold lower rows, so only a strict improvement wins
        for (g, c) in col_best.iter_mut().zip(&b.col_best) {
            if c.0 > g.0 || g.1 == usize::MAX {
                *g = *c;
            }
        }
    }
    let backward = col_best.into_iter().map(|(_, i)| i).collect();
    (forward, backward)
}

/// Induce a dictionary from mapped, unit-normalized source and target rows.
///
/// With `keep < 1` one draw is taken from `rng` to seed the dropout mask;
/// with `keep = 1` the rng is not touched.
pub fn induce_dictionary<R: Rng + ?Sized>(
    x_mapped: ArrayView2<f64>,
    z_mapped: ArrayView2<f64>,
    mode: InductionMode,
    keep: f64,
    rng: &mut R,
    scoring: RetrievalMethod,
    csls_k: usize,
) -> Result<Induced> {
    if !(keep > 0.0 && keep <= 1.0) {
        return Err(Error::config(format!("keep probability {keep} outside (0, 1]")));
    }
    if x_mapped.nrows() == 0 || z_mapped.nrows() == 0 {
        return Err(Error::EmptyDictionary("cannot induce from an empty space".into()));
    }
    let mask = (keep < 1.0).then(|| DropoutMask::new(rng.random(), keep));
    let mutual = mode == InductionMode::MutualNn;
    let materialize = x_mapped.nrows() * z_mapped.nrows() <= MATERIALIZE_LIMIT;
    let (forward, backward) =
        nearest_neighbours(x_mapped, z_mapped, scoring, csls_k, mask, mutual, materialize);
    let pairs: Vec<(usize, usize)> = if mutual {
        forward
            .into_iter()
            .enumerate()
            .filter(|&(i, j)| backward[j] == i)
            .collect()
    } else {
        forward.into_iter().enumerate().collect()
    };
    let objective = if pairs.is_empty() {
        0.0
    } else {
        pairs
            .iter()
            .map(|&(i, j)| x_mapped.row(i).dot(&z_mapped.row(j)))
            .sum::<f64>()
            / pairs.len() as f64
    };
    Ok(Induced { pairs, objective })
}

/// Run self-learning from the seed dictionary `seed` over S1-processed spaces.
pub fn self_learn(
    src: &EmbeddingSpace,
    tgt: &EmbeddingSpace,
    seed: &Dictionary,
    cfg: &SelfLearnConfig,
) -> Result<SelfLearnOutcome> {
    cfg.validate()?;
    if seed.is_empty() {
        return Err(Error::EmptyDictionary("self-learning needs a non-empty seed".into()));
    }
    let x = src.vectors();
    let z = tgt.vectors();
    let x_cut = x.slice(s![..cfg.vocab_cut.min(src.len()), ..]);
    let z_cut = z.slice(s![..cfg.vocab_cut.min(tgt.len()), ..]);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut keep = cfg.dropout_keep;
    let mut dict = seed.clone();
    let mut trace = LearningTrace::default();
    let mut best: Option<(ProjectionModel, Dictionary)> = None;
    let mut best_objective = f64::NEG_INFINITY;
    let mut last_improvement = 0;
    let mut collapsed = false;

    for it in 0..cfg.max_iters {
        let model = solve_projection(cfg.step_kind, x, z, &dict)?;
        let xm = normalized_rows(model.map_source(x_cut).view());
        let zm = normalized_rows(model.map_target(z_cut).view());
        let induced = induce_dictionary(
            xm.view(),
            zm.view(),
            cfg.induction_mode,
            keep,
            &mut rng,
            cfg.scoring,
            cfg.csls_k,
        )?;

        if induced.pairs.is_empty() {
            log::warn!("self-learning collapsed at iteration {it}: empty dictionary");
            trace.iterations.push(IterationRecord {
                objective: induced.objective,
                best_objective,
                dictionary_size: 0,
                dropout_keep: keep,
            });
            collapsed = true;
            if best.is_none() {
                best = Some((model, dict.clone()));
            }
            break;
        }

        let next = Dictionary::new(induced.pairs, src.len(), tgt.len())?;
        if induced.objective - best_objective >= cfg.convergence_tol {
            best_objective = induced.objective;
            last_improvement = it;
            best = Some((model, next.clone()));
        }
        trace.iterations.push(IterationRecord {
            objective: induced.objective,
            best_objective,
            dictionary_size: next.len(),
            dropout_keep: keep,
        });
        log::debug!(
            "iteration {it}: objective {:.6} (best {:.6}), {} pairs, keep {keep}",
            induced.objective,
            best_objective,
            next.len()
        );

        if it - last_improvement >= SelfLearnConfig::patience(keep) {
            if keep >= 1.0 {
                break;
            }
            keep = (keep * 2.0).min(1.0);
            last_improvement = it;
        }
        dict = next;
    }

    let (model, dictionary) = best.expect("at least one iteration ran");
    Ok(SelfLearnOutcome {
        model,
        dictionary,
        trace,
        collapsed,
    })
}
