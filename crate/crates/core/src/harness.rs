//! End-to-end experiments over named model configurations.
//!
//! A configuration fixes three components: how the seed dictionary is
//! obtained (C1), which self-learning variant refines it (C2), and how much of
//! the normalization/whitening pipeline is applied (C3). The seven named
//! configurations are wired in [`ConfigName::wiring`].

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dictionary::{identical_strings_seed, load_dictionary, load_test_set, Dictionary, TestQuery};
use crate::embeddings::EmbeddingSpace;
use crate::error::{Error, Result};
use crate::retrieval::{
    evaluate_bli, BliReport, RetrievalMethod, DEFAULT_CSLS_K, HARD_FAIL_MRR, WEAK_FAIL_MRR,
};
use crate::seed::{induce_unsupervised_seed, DEFAULT_SEED_VOCAB};
use crate::self_learning::{self_learn, InductionMode, SelfLearnConfig, DEFAULT_DROPOUT_KEEP};
use crate::transforms::{length_normalize, s1_normalize, solve_projection, ProjectionModel, StepKind};

/// Vocabulary trim applied when loading embeddings.
pub const DEFAULT_MAX_VOCAB: usize = 200_000;
/// Restarts for the unsupervised configuration.
pub const UNSUPERVISED_RESTARTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConfigName {
    #[serde(rename = "unsupervised")]
    Unsupervised,
    #[serde(rename = "orthg-super")]
    OrthgSuper,
    #[serde(rename = "orthg+sl+sym")]
    OrthgSlSym,
    #[serde(rename = "full-super")]
    FullSuper,
    #[serde(rename = "full+sl")]
    FullSl,
    #[serde(rename = "full+sl+nod")]
    FullSlNod,
    #[serde(rename = "full+sl+sym")]
    FullSlSym,
}

/// C1: where the seed dictionary comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedComponent {
    Unsupervised,
    Provided,
}

/// Self-learning strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelfLearningVariant {
    /// All nearest neighbours, with dropout.
    #[serde(rename = "+sl")]
    Dropout,
    /// All nearest neighbours, no dropout.
    #[serde(rename = "+sl+nod")]
    NoDropout,
    /// Mutual nearest neighbours, no dropout.
    #[serde(rename = "+sl+sym")]
    Symmetric,
}

impl SelfLearningVariant {
    pub const ALL: [SelfLearningVariant; 3] = [
        SelfLearningVariant::Dropout,
        SelfLearningVariant::NoDropout,
        SelfLearningVariant::Symmetric,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SelfLearningVariant::Dropout => "+sl",
            SelfLearningVariant::NoDropout => "+sl+nod",
            SelfLearningVariant::Symmetric => "+sl+sym",
        }
    }

    pub fn induction_mode(self) -> InductionMode {
        match self {
            SelfLearningVariant::Symmetric => InductionMode::MutualNn,
            _ => InductionMode::AllNn,
        }
    }

    pub fn dropout_keep(self) -> f64 {
        match self {
            SelfLearningVariant::Dropout => DEFAULT_DROPOUT_KEEP,
            _ => 1.0,
        }
    }
}

/// C2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelfLearningComponent {
    None,
    Variant(SelfLearningVariant),
    /// Every variant is available; the best one is reported.
    AllTested,
}

/// C3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preprocessing {
    /// Unit length normalization only; orthogonal projections.
    LengthNormOnly,
    /// Normalization, centering, whitening, re-weighting, de-whitening.
    Full,
}

impl Preprocessing {
    pub fn step_kind(self) -> StepKind {
        match self {
            Preprocessing::LengthNormOnly => StepKind::OrthogonalOnly,
            Preprocessing::Full => StepKind::FullS2S4,
        }
    }

    pub fn apply(self, space: &EmbeddingSpace) -> EmbeddingSpace {
        match self {
            Preprocessing::LengthNormOnly => length_normalize(space).0,
            Preprocessing::Full => s1_normalize(space).0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Wiring {
    pub c1: SeedComponent,
    pub c2: SelfLearningComponent,
    pub c3: Preprocessing,
}

impl ConfigName {
    pub const ALL: [ConfigName; 7] = [
        ConfigName::Unsupervised,
        ConfigName::OrthgSuper,
        ConfigName::OrthgSlSym,
        ConfigName::FullSuper,
        ConfigName::FullSl,
        ConfigName::FullSlNod,
        ConfigName::FullSlSym,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ConfigName::Unsupervised => "unsupervised",
            ConfigName::OrthgSuper => "orthg-super",
            ConfigName::OrthgSlSym => "orthg+sl+sym",
            ConfigName::FullSuper => "full-super",
            ConfigName::FullSl => "full+sl",
            ConfigName::FullSlNod => "full+sl+nod",
            ConfigName::FullSlSym => "full+sl+sym",
        }
    }

    pub fn wiring(self) -> Wiring {
        use Preprocessing::*;
        use SeedComponent::*;
        use SelfLearningComponent as C2;
        use SelfLearningVariant::*;
        let (c1, c2, c3) = match self {
            ConfigName::Unsupervised => (Unsupervised, C2::AllTested, Full),
            ConfigName::OrthgSuper => (Provided, C2::None, LengthNormOnly),
            ConfigName::OrthgSlSym => (Provided, C2::Variant(Symmetric), LengthNormOnly),
            ConfigName::FullSuper => (Provided, C2::None, Full),
            ConfigName::FullSl => (Provided, C2::Variant(Dropout), Full),
            ConfigName::FullSlNod => (Provided, C2::Variant(NoDropout), Full),
            ConfigName::FullSlSym => (Provided, C2::Variant(Symmetric), Full),
        };
        Wiring { c1, c2, c3 }
    }
}

impl std::fmt::Display for ConfigName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ConfigName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ConfigName::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown configuration {s:?}")))
    }
}

/// How the seed dictionary is obtained for a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SeedSource {
    Unsupervised,
    /// Training lexicon, optionally head-truncated to `size` pairs.
    File { path: PathBuf, size: Option<usize> },
    IdenticalStrings,
}

/// A fully resolved configuration. Serialized verbatim into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub name: ConfigName,
    pub wiring: Wiring,
    pub seed_source: SeedSource,
    /// Self-learning settings (the `rng_seed` field is replaced per restart).
    pub self_learning: Option<SelfLearnConfig>,
    /// Variant used when C2 is "all tested" and `select_best` is off.
    pub default_variant: Option<SelfLearningVariant>,
    pub select_best: bool,
    pub restarts: usize,
    pub seed: u64,
    pub retrieval: RetrievalMethod,
    pub csls_k: usize,
    pub seed_vocab: usize,
    pub max_vocab: usize,
}

impl ModelConfig {
    /// Defaults for `name`. Provided-seed configurations need a seed source
    /// other than [`SeedSource::Unsupervised`].
    pub fn new(name: ConfigName, seed_source: SeedSource) -> Result<Self> {
        let wiring = name.wiring();
        match (wiring.c1, &seed_source) {
            (SeedComponent::Unsupervised, SeedSource::Unsupervised) => {}
            (SeedComponent::Unsupervised, _) => {
                return Err(Error::config(format!("{name} induces its own seed dictionary")))
            }
            (SeedComponent::Provided, SeedSource::Unsupervised) => {
                return Err(Error::config(format!(
                    "{name} needs a training dictionary or identical-strings seed"
                )))
            }
            _ => {}
        }
        let (variant, default_variant) = match wiring.c2 {
            SelfLearningComponent::None => (None, None),
            SelfLearningComponent::Variant(v) => (Some(v), None),
            SelfLearningComponent::AllTested => {
                (Some(SelfLearningVariant::Dropout), Some(SelfLearningVariant::Dropout))
            }
        };
        let self_learning = variant.map(|v| SelfLearnConfig {
            induction_mode: v.induction_mode(),
            dropout_keep: v.dropout_keep(),
            step_kind: wiring.c3.step_kind(),
            ..SelfLearnConfig::default()
        });
        let restarts = if wiring.c1 == SeedComponent::Unsupervised {
            UNSUPERVISED_RESTARTS
        } else {
            1
        };
        Ok(ModelConfig {
            name,
            wiring,
            seed_source,
            self_learning,
            default_variant,
            select_best: false,
            restarts,
            seed: 0,
            retrieval: RetrievalMethod::Csls,
            csls_k: DEFAULT_CSLS_K,
            seed_vocab: DEFAULT_SEED_VOCAB,
            max_vocab: DEFAULT_MAX_VOCAB,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::config("restarts must be positive"));
        }
        if self.csls_k == 0 {
            return Err(Error::config("CSLS k must be positive"));
        }
        if self.seed_vocab == 0 || self.max_vocab == 0 {
            return Err(Error::config("vocabulary sizes must be positive"));
        }
        if self.select_best && self.wiring.c2 != SelfLearningComponent::AllTested {
            return Err(Error::config("--select-best applies to the unsupervised configuration only"));
        }
        if let Some(sl) = &self.self_learning {
            sl.validate()?;
        }
        Ok(())
    }

    /// Self-learning settings for `variant`, keeping the shared hyperparameters.
    fn variant_config(&self, variant: SelfLearningVariant, base: &SelfLearnConfig) -> SelfLearnConfig {
        // an overridden initial keep carries over to the dropout variant
        let dropout_keep = match variant {
            SelfLearningVariant::Dropout if base.uses_dropout() => base.dropout_keep,
            v => v.dropout_keep(),
        };
        SelfLearnConfig {
            induction_mode: variant.induction_mode(),
            dropout_keep,
            ..base.clone()
        }
    }
}

/// Terminal state of one restart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// Mutual induction emptied the dictionary; best model so far evaluated.
    Collapsed,
    /// Unsupervised seed induction failed; nothing was trained.
    DegenerateSeed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub restart: usize,
    pub rng_seed: u64,
    pub variant: Option<SelfLearningVariant>,
    pub status: RunStatus,
    pub iterations: usize,
    pub final_dictionary_size: usize,
    /// `0` when no model could be trained.
    pub mrr: f64,
    pub bli: Option<BliReport>,
    pub wall_clock_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: SelfLearningVariant,
    pub mean_mrr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ModelConfig,
    pub source_path: String,
    pub target_path: String,
    pub source_language: String,
    pub target_language: String,
    pub seed_pairs: usize,
    pub runs: Vec<RunReport>,
    pub mean_mrr: f64,
    /// Every restart at or below the hard-failure threshold.
    pub unsuccessful: bool,
    /// Every restart at or below the weak-failure threshold.
    pub unsuccessful_weak: bool,
    pub selected_variant: Option<SelfLearningVariant>,
    pub variant_summaries: Vec<VariantSummary>,
}

impl ExperimentReport {
    pub const TSV_HEADER: &'static str =
        "source_language\ttarget_language\tconfig\trestart\tstatus\tmrr\tp_at_1\tcoverage\tn_queries\tsuccess_class";

    /// One TSV line per restart.
    pub fn tsv_lines(&self) -> Vec<String> {
        self.runs
            .iter()
            .map(|r| {
                let bli = match &r.bli {
                    Some(b) => b.to_tsv_line(),
                    None => format!("{:.6}\t{:.6}\t{:.6}\t0\thard_fail", 0.0, 0.0, 0.0),
                };
                format!(
                    "{}\t{}\t{}\t{}\t{}\t{}",
                    self.source_language,
                    self.target_language,
                    self.config.name,
                    r.restart,
                    serde_json::to_value(r.status)
                        .ok()
                        .and_then(|v| v.as_str().map(str::to_string))
                        .unwrap_or_default(),
                    bli.split_once('\t').map(|(_, rest)| format!("{:.6}\t{rest}", r.mrr)).unwrap_or(bli)
                )
            })
            .collect()
    }
}

/// Inputs and outputs of one experiment.
#[derive(Debug, Clone, Default)]
pub struct ExperimentPaths {
    pub source: PathBuf,
    pub target: PathBuf,
    pub test_dict: PathBuf,
    pub out_dir: Option<PathBuf>,
    pub source_language: Option<String>,
    pub target_language: Option<String>,
    /// Write the mapped spaces of the first restart to `out_dir`.
    pub save_aligned: bool,
}

fn language_label(explicit: &Option<String>, path: &Path) -> String {
    explicit.clone().unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    })
}

fn load_space(path: &Path, max_vocab: usize) -> Result<EmbeddingSpace> {
    let reader = BufReader::new(File::open(path)?);
    let (space, _) = EmbeddingSpace::read_word2vec(reader, max_vocab)?;
    Ok(space)
}

fn seed_dictionary(cfg: &ModelConfig, x: &EmbeddingSpace, z: &EmbeddingSpace) -> Result<Dictionary> {
    match &cfg.seed_source {
        SeedSource::Unsupervised => induce_unsupervised_seed(x, z, cfg.seed_vocab),
        SeedSource::File { path, size } => {
            let (dict, _) = load_dictionary(BufReader::new(File::open(path)?), x, z)?;
            Ok(match size {
                Some(n) => dict.truncated(*n),
                None => dict,
            })
        }
        SeedSource::IdenticalStrings => identical_strings_seed(x, z),
    }
}

struct TrainedRun {
    report: RunReport,
    model: Option<ProjectionModel>,
}

fn train_and_evaluate(
    cfg: &ModelConfig,
    x: &EmbeddingSpace,
    z: &EmbeddingSpace,
    seed: &Dictionary,
    test: &[TestQuery],
    restart: usize,
    variant: Option<SelfLearningVariant>,
) -> Result<TrainedRun> {
    let started = Instant::now();
    let rng_seed = cfg.seed.wrapping_add(restart as u64);
    let step = cfg.wiring.c3.step_kind();

    let (model, status, iterations, dict_size) = match &cfg.self_learning {
        None => (solve_projection(step, x.vectors(), z.vectors(), seed)?, RunStatus::Completed, 0, seed.len()),
        Some(base) => {
            let mut sl = match variant {
                Some(v) => cfg.variant_config(v, base),
                None => base.clone(),
            };
            sl.rng_seed = rng_seed;
            let out = self_learn(x, z, seed, &sl)?;
            let status = if out.collapsed {
                RunStatus::Collapsed
            } else {
                RunStatus::Completed
            };
            (out.model, status, out.trace.len(), out.dictionary.len())
        }
    };
    let bli = evaluate_bli(&model, x, z, test, cfg.retrieval, cfg.csls_k)?;
    Ok(TrainedRun {
        report: RunReport {
            restart,
            rng_seed,
            variant,
            status,
            iterations,
            final_dictionary_size: dict_size,
            mrr: bli.mrr,
            bli: Some(bli),
            wall_clock_secs: started.elapsed().as_secs_f64(),
        },
        model: Some(model),
    })
}

fn degenerate_runs(cfg: &ModelConfig, variant: Option<SelfLearningVariant>) -> Vec<TrainedRun> {
    (0..cfg.restarts)
        .map(|restart| TrainedRun {
            report: RunReport {
                restart,
                rng_seed: cfg.seed.wrapping_add(restart as u64),
                variant,
                status: RunStatus::DegenerateSeed,
                iterations: 0,
                final_dictionary_size: 0,
                mrr: 0.0,
                bli: None,
                wall_clock_secs: 0.0,
            },
            model: None,
        })
        .collect()
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Run one configuration on one language pair.
///
/// A degenerate unsupervised seed is not an error: the report comes back with
/// every restart marked [`RunStatus::DegenerateSeed`] and `unsuccessful` set.
pub fn run_experiment(cfg: &ModelConfig, paths: &ExperimentPaths) -> Result<ExperimentReport> {
    cfg.validate()?;
    let raw_x = load_space(&paths.source, cfg.max_vocab)?;
    let raw_z = load_space(&paths.target, cfg.max_vocab)?;
    if raw_x.dim() != raw_z.dim() {
        return Err(Error::Dimension(format!(
            "source dimension {} differs from target dimension {}",
            raw_x.dim(),
            raw_z.dim()
        )));
    }
    let test = load_test_set(BufReader::new(File::open(&paths.test_dict)?))?;
    if test.is_empty() {
        return Err(Error::NoQueries("test dictionary has no pairs".into()));
    }
    let x = cfg.wiring.c3.apply(&raw_x);
    let z = cfg.wiring.c3.apply(&raw_z);

    let seed = match seed_dictionary(cfg, &x, &z) {
        Ok(d) => Some(d),
        Err(Error::DegenerateSeed(msg)) => {
            log::warn!("seed induction degenerate: {msg}");
            None
        }
        Err(e) => return Err(e),
    };

    let variants: Vec<Option<SelfLearningVariant>> = if cfg.select_best {
        SelfLearningVariant::ALL.iter().copied().map(Some).collect()
    } else {
        vec![cfg.default_variant]
    };

    let mut per_variant: Vec<(Option<SelfLearningVariant>, Vec<TrainedRun>)> = Vec::new();
    for variant in variants {
        let runs = match &seed {
            None => degenerate_runs(cfg, variant),
            Some(seed) => (0..cfg.restarts)
                .into_par_iter()
                .map(|r| train_and_evaluate(cfg, &x, &z, seed, &test, r, variant))
                .collect::<Result<Vec<_>>>()?,
        };
        per_variant.push((variant, runs));
    }

    let variant_summaries: Vec<VariantSummary> = per_variant
        .iter()
        .filter_map(|(v, runs)| {
            v.map(|variant| VariantSummary {
                variant,
                mean_mrr: mean(runs.iter().map(|r| r.report.mrr)),
            })
        })
        .collect();
    // first variant wins ties
    let best_idx = per_variant
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bm), (i, (_, runs))| {
            let m = mean(runs.iter().map(|r| r.report.mrr));
            if m > bm {
                (i, m)
            } else {
                (bi, bm)
            }
        })
        .0;
    let (selected_variant, runs) = per_variant.swap_remove(best_idx);

    if let Some(dir) = &paths.out_dir {
        if paths.save_aligned {
            if let Some(model) = runs.first().and_then(|r| r.model.as_ref()) {
                std::fs::create_dir_all(dir)?;
                save_aligned_spaces(model, &x, &z, dir)?;
            }
        }
    }

    let runs: Vec<RunReport> = runs.into_iter().map(|r| r.report).collect();
    let mean_mrr = mean(runs.iter().map(|r| r.mrr));
    let report = ExperimentReport {
        config: cfg.clone(),
        source_path: paths.source.display().to_string(),
        target_path: paths.target.display().to_string(),
        source_language: language_label(&paths.source_language, &paths.source),
        target_language: language_label(&paths.target_language, &paths.target),
        seed_pairs: seed.as_ref().map_or(0, Dictionary::len),
        unsuccessful: runs.iter().all(|r| r.mrr <= HARD_FAIL_MRR),
        unsuccessful_weak: runs.iter().all(|r| r.mrr <= WEAK_FAIL_MRR),
        mean_mrr,
        runs,
        selected_variant: if cfg.select_best { selected_variant } else { None },
        variant_summaries: if cfg.select_best { variant_summaries } else { Vec::new() },
    };

    if let Some(dir) = &paths.out_dir {
        write_report(&report, dir)?;
    }
    Ok(report)
}

fn save_aligned_spaces(model: &ProjectionModel, x: &EmbeddingSpace, z: &EmbeddingSpace, dir: &Path) -> Result<()> {
    let mx = x.with_vectors(model.map_source(x.vectors()));
    let mz = z.with_vectors(model.map_target(z.vectors()));
    mx.write_word2vec(BufWriter::new(File::create(dir.join("src.aligned.vec"))?))?;
    mz.write_word2vec(BufWriter::new(File::create(dir.join("tgt.aligned.vec"))?))?;
    Ok(())
}

/// Write `report.json`, `report.tsv` and per-restart `ranks.<restart>.tsv`.
pub fn write_report(report: &ExperimentReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut json = BufWriter::new(File::create(dir.join("report.json"))?);
    serde_json::to_writer_pretty(&mut json, report)?;
    writeln!(json)?;
    json.flush()?;

    let mut tsv = BufWriter::new(File::create(dir.join("report.tsv"))?);
    writeln!(tsv, "{}", ExperimentReport::TSV_HEADER)?;
    for line in report.tsv_lines() {
        writeln!(tsv, "{line}")?;
    }
    tsv.flush()?;

    for run in &report.runs {
        let Some(bli) = &run.bli else { continue };
        let mut w = BufWriter::new(File::create(dir.join(format!("ranks.{}.tsv", run.restart)))?);
        writeln!(w, "source\trank")?;
        for q in &bli.per_query_ranks {
            match q.rank {
                Some(r) => writeln!(w, "{}\t{r}", q.source)?,
                None => writeln!(w, "{}\t-", q.source)?,
            }
        }
        w.flush()?;
    }
    Ok(())
}

/// Read a report written by [`write_report`].
pub fn read_report(path: &Path) -> Result<ExperimentReport> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    SourceLanguage,
    Config,
}

impl std::str::FromStr for GroupBy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "source" | "source_language" | "source-language" => Ok(GroupBy::SourceLanguage),
            "config" => Ok(GroupBy::Config),
            _ => Err(Error::config(format!("unknown grouping {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub group: String,
    pub n_reports: usize,
    pub mean_mrr: f64,
    /// Reports unsuccessful at the 0.01 threshold.
    pub unsuccessful: usize,
    /// Reports unsuccessful at the 0.05 threshold.
    pub unsuccessful_weak: usize,
}

impl AggregateRow {
    pub const TSV_HEADER: &'static str = "group\tn_reports\tmean_mrr\tunsuccessful_0.01\tunsuccessful_0.05";

    pub fn to_tsv_line(&self) -> String {
        format!(
            "{}\t{}\t{:.6}\t{}\t{}",
            self.group, self.n_reports, self.mean_mrr, self.unsuccessful, self.unsuccessful_weak
        )
    }
}

/// Mean MRR and failure counts per group, sorted by group key.
pub fn aggregate_reports(reports: &[ExperimentReport], group_by: GroupBy) -> Result<Vec<AggregateRow>> {
    if reports.is_empty() {
        return Err(Error::config("nothing to aggregate"));
    }
    let mut groups: BTreeMap<String, Vec<&ExperimentReport>> = BTreeMap::new();
    for r in reports {
        let key = match group_by {
            GroupBy::SourceLanguage => r.source_language.clone(),
            GroupBy::Config => r.config.name.to_string(),
        };
        groups.entry(key).or_default().push(r);
    }
    Ok(groups
        .into_iter()
        .map(|(group, members)| AggregateRow {
            n_reports: members.len(),
            mean_mrr: mean(members.iter().map(|r| r.mean_mrr)),
            unsuccessful: members.iter().filter(|r| r.unsuccessful).count(),
            unsuccessful_weak: members.iter().filter(|r| r.unsuccessful_weak).count(),
            group,
        })
        .collect())
}

/// Render aggregate rows as TSV with a header line.
pub fn aggregate_tsv(rows: &[AggregateRow]) -> String {
    let mut out = String::from(AggregateRow::TSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_tsv_line());
        out.push('\n');
    }
    out
}
