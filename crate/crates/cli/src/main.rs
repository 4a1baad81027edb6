use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use clwe_core::harness::{
    aggregate_reports, aggregate_tsv, read_report, run_experiment, ConfigName, ExperimentPaths, GroupBy,
    ModelConfig, SeedSource,
};
use clwe_core::retrieval::RetrievalMethod;
use clwe_core::synth::{generate_synthetic_pair, SyntheticParams};
use clwe_core::Error;

#[derive(Parser)]
#[command(name = "clwe", version, about = "Cross-lingual word embedding alignment experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Align two embedding spaces with a named configuration and evaluate BLI.
    Run(Box<RunArgs>),
    /// Write a synthetic language pair with a known gold dictionary.
    Synth(SynthArgs),
    /// Summarize report.json files by source language or configuration.
    Aggregate(AggregateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// unsupervised, orthg-super, orthg+sl+sym, full-super, full+sl, full+sl+nod or full+sl+sym
    #[arg(long)]
    config: ConfigName,
    #[arg(long)]
    src: PathBuf,
    #[arg(long)]
    tgt: PathBuf,
    /// Training dictionary (required by every configuration except unsupervised).
    #[arg(long, conflicts_with = "identical_strings")]
    train_dict: Option<PathBuf>,
    #[arg(long)]
    test_dict: PathBuf,
    /// Keep only the first N training pairs.
    #[arg(long, env = "CLWE_DICT_SIZE")]
    dict_size: Option<usize>,
    /// Seed with words spelled identically in both vocabularies.
    #[arg(long)]
    identical_strings: bool,
    #[arg(long, env = "CLWE_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, env = "CLWE_RESTARTS")]
    restarts: Option<usize>,
    #[arg(long, env = "CLWE_RETRIEVAL", value_enum, default_value_t = Retrieval::Csls)]
    retrieval: Retrieval,
    #[arg(long, env = "CLWE_CSLS_K")]
    csls_k: Option<usize>,
    /// Run every self-learning variant and keep the best (unsupervised only).
    #[arg(long)]
    select_best: bool,
    #[arg(long, env = "CLWE_SEED_VOCAB")]
    seed_vocab: Option<usize>,
    #[arg(long, env = "CLWE_MAX_VOCAB")]
    max_vocab: Option<usize>,
    #[arg(long, env = "CLWE_VOCAB_CUT")]
    vocab_cut: Option<usize>,
    #[arg(long, env = "CLWE_MAX_ITERS")]
    max_iters: Option<usize>,
    /// Initial dropout keep probability for the +sl variant.
    #[arg(long, env = "CLWE_DROPOUT_KEEP")]
    dropout_keep: Option<f64>,
    #[arg(long, env = "CLWE_CONVERGENCE_TOL")]
    convergence_tol: Option<f64>,
    #[arg(long)]
    src_lang: Option<String>,
    #[arg(long)]
    tgt_lang: Option<String>,
    /// Output directory for report.json, report.tsv and ranks.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the mapped spaces of the first restart.
    #[arg(long, requires = "out")]
    save_aligned: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Retrieval {
    Nn,
    Csls,
}

impl From<Retrieval> for RetrievalMethod {
    fn from(r: Retrieval) -> Self {
        match r {
            Retrieval::Nn => RetrievalMethod::Nn,
            Retrieval::Csls => RetrievalMethod::Csls,
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 50)]
    d: usize,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 1.0)]
    overlap: f64,
    #[arg(long, env = "CLWE_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Grouping {
    SourceLanguage,
    Config,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Tsv,
    Json,
}

#[derive(Args)]
struct AggregateArgs {
    #[arg(long, value_enum, default_value_t = Grouping::SourceLanguage)]
    group_by: Grouping,
    #[arg(long, value_enum, default_value_t = Format::Tsv)]
    format: Format,
    /// report.json files
    #[arg(required = true)]
    reports: Vec<PathBuf>,
}

fn build_config(args: &RunArgs) -> Result<ModelConfig> {
    let seed_source = match (&args.train_dict, args.identical_strings) {
        (Some(path), _) => SeedSource::File {
            path: path.clone(),
            size: args.dict_size,
        },
        (None, true) => SeedSource::IdenticalStrings,
        (None, false) => SeedSource::Unsupervised,
    };
    let mut cfg = ModelConfig::new(args.config, seed_source)?;
    cfg.seed = args.seed;
    cfg.select_best = args.select_best;
    cfg.retrieval = args.retrieval.into();
    if let Some(r) = args.restarts {
        cfg.restarts = r;
    }
    if let Some(k) = args.csls_k {
        cfg.csls_k = k;
    }
    if let Some(m) = args.seed_vocab {
        cfg.seed_vocab = m;
    }
    if let Some(m) = args.max_vocab {
        cfg.max_vocab = m;
    }
    let csls_k = cfg.csls_k;
    if let Some(sl) = cfg.self_learning.as_mut() {
        sl.csls_k = csls_k;
        if let Some(v) = args.vocab_cut {
            sl.vocab_cut = v;
        }
        if let Some(v) = args.max_iters {
            sl.max_iters = v;
        }
        if let Some(v) = args.convergence_tol {
            sl.convergence_tol = v;
        }
        if let Some(v) = args.dropout_keep {
            if sl.uses_dropout() {
                sl.dropout_keep = v;
            } else {
                log::warn!("--dropout-keep ignored: {} does not use dropout", args.config);
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Returns `true` when the run was successful.
fn run(args: RunArgs) -> Result<bool> {
    let cfg = build_config(&args)?;
    let paths = ExperimentPaths {
        source: args.src,
        target: args.tgt,
        test_dict: args.test_dict,
        out_dir: args.out,
        source_language: args.src_lang,
        target_language: args.tgt_lang,
        save_aligned: args.save_aligned,
    };
    let report = run_experiment(&cfg, &paths)?;
    println!("{}", clwe_core::ExperimentReport::TSV_HEADER);
    for line in report.tsv_lines() {
        println!("{line}");
    }
    if let Some(v) = report.selected_variant {
        info!("selected self-learning variant {}", v.as_str());
    }
    info!("mean MRR {:.4} over {} restart(s)", report.mean_mrr, report.runs.len());
    if report.unsuccessful {
        log::warn!("unsuccessful: every restart at or below MRR 0.01");
    }
    Ok(!report.unsuccessful)
}

fn synth(args: SynthArgs) -> Result<()> {
    let pair = generate_synthetic_pair(SyntheticParams {
        n: args.n,
        d: args.d,
        noise_sigma: args.noise,
        overlap: args.overlap,
        rng_seed: args.seed,
    })?;
    let files = pair.write_to_dir(&args.out)?;
    for p in [&files.source, &files.target, &files.gold, &files.train, &files.test] {
        println!("{}", p.display());
    }
    Ok(())
}

fn aggregate(args: AggregateArgs) -> Result<()> {
    let reports = args
        .reports
        .iter()
        .map(|p| read_report(p).with_context(|| format!("reading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let group_by = match args.group_by {
        Grouping::SourceLanguage => GroupBy::SourceLanguage,
        Grouping::Config => GroupBy::Config,
    };
    let rows = aggregate_reports(&reports, group_by)?;
    match args.format {
        Format::Tsv => print!("{}", aggregate_tsv(&rows)),
        Format::Json => println!("{}", serde_json::to_string_pretty(&rows)?),
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::DegenerateSeed(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(*args),
        Command::Synth(args) => synth(args).map(|()| true),
        Command::Aggregate(args) => aggregate(args).map(|()| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
