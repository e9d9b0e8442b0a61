//! `multimix`: ingest bag-of-words corpora, sweep mixture fits over the
//! number of clusters, select a model and emit topic reports.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.

mod error;
mod output;
mod report;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use multimix::corpus;
use multimix::em::{EmConfig, Floor};
use multimix::mixture;
use multimix::selection::{self, PenaltyMode, SelectionReport};
use multimix::synth::{self, ExperimentConfig, SeedOutcome};
use serde::Serialize;

use crate::error::{CliError, Result, ResultExt};
use crate::output::{open, write_atomic, write_csv, write_json};

#[derive(Parser, Debug)]
#[command(
    name = "multimix",
    version,
    about = "Multinomial mixture clustering of bag-of-words corpora"
)]
struct Cli {
    /// Base seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse a corpus, prune its vocabulary and save it.
    Ingest(IngestArgs),
    /// Fit robust EM for each ladder entry and write the contrast table.
    Sweep(SweepArgs),
    /// Pick the number of clusters from a sweep table.
    Select(SelectArgs),
    /// Top words, MAP labels and yearly evolution for a fitted model.
    Report(ReportArgs),
    /// Run a planted-mixture experiment from a TOML config.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct IngestArgs {
    /// UCI docword file (`D`, `W`, `NNZ` header, then `doc word count`).
    #[arg(long, requires = "vocab", conflicts_with = "matrix_csv")]
    docword: Option<PathBuf>,
    /// UCI vocabulary file, one word per line.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Word-by-document count matrix CSV (first column words, one column per document).
    #[arg(long, required_unless_present = "docword")]
    matrix_csv: Option<PathBuf>,
    /// `doc_id,year` CSV attached to the corpus.
    #[arg(long)]
    years: Option<PathBuf>,
    #[arg(long, default_value_t = 0.8)]
    max_doc_fraction: f64,
    #[arg(long, default_value_t = 300)]
    top_b: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EmArgs {
    /// Density floor: `1/n` or a value in (0, 1).
    #[arg(long)]
    epsilon: Option<Floor>,
    #[arg(long)]
    short_iters: Option<usize>,
    /// Number of random short-EM starts.
    #[arg(long)]
    starts: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Relative log-likelihood change that stops EM.
    #[arg(long)]
    rel_tol: Option<f64>,
}

impl EmArgs {
    fn apply(&self, config: &mut EmConfig) {
        if let Some(v) = self.epsilon {
            config.floor = v;
        }
        if let Some(v) = self.short_iters {
            config.short_iters = v;
        }
        if let Some(v) = self.starts {
            config.n_starts = v;
        }
        if let Some(v) = self.max_iters {
            config.max_iters = v;
        }
        if let Some(v) = self.rel_tol {
            config.rel_tol = v;
        }
    }
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Sweep `k_max = 1..=KMAX`.
    #[arg(long, conflicts_with = "ladder", required_unless_present = "ladder")]
    kmax: Option<usize>,
    /// Explicit comma-separated `k_max` values.
    #[arg(long, value_delimiter = ',')]
    ladder: Option<Vec<usize>>,
    #[command(flatten)]
    em: EmArgs,
    /// Output table with columns `K,D_K,min_contrast`.
    #[arg(long)]
    out: PathBuf,
    /// Directory for per-K models, run logs and the sweep log.
    #[arg(long)]
    fits_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SelectArgs {
    #[arg(long)]
    sweep: PathBuf,
    /// One of slope, theoretical, aic, bic.
    #[arg(long, default_value = "slope")]
    mode: PenaltyMode,
    /// Penalty constant for theoretical mode; calibrated by slope heuristics when absent.
    #[arg(long)]
    lambda0: Option<f64>,
    /// Corpus the sweep was run on; supplies `L` and `n` for theoretical, aic and bic.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// `doc_id,year` CSV; overrides years stored in the corpus.
    #[arg(long)]
    metadata: Option<PathBuf>,
    #[arg(long, default_value_t = 12)]
    top_m: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    em: EmArgs,
    #[arg(long)]
    out_dir: PathBuf,
}

fn ingest(args: &IngestArgs) -> Result<()> {
    let raw = match (&args.docword, &args.vocab, &args.matrix_csv) {
        (Some(docword), Some(vocab), None) => {
            let docs = open(docword)?;
            let words = open(vocab)?;
            corpus::parse_bag_of_words(docs, words).context(docword.display())?
        }
        (None, None, Some(csv)) => corpus::parse_word_doc_matrix_csv(open(csv)?).context(csv.display())?,
        _ => {
            return Err(CliError::Usage(
                "give either --docword with --vocab, or --matrix-csv".into(),
            ))
        }
    };
    let raw = match &args.years {
        Some(path) => raw.with_years(corpus::read_year_metadata(open(path)?).context(path.display())?),
        None => raw,
    };
    let pruned = corpus::prune_vocabulary(&raw, args.max_doc_fraction, args.top_b)?;
    write_atomic(&args.out, |out| Ok(corpus::save_corpus(&pruned, out)?))?;
    eprintln!(
        "corpus: L={} B={} n={} (dropped {} empty documents)",
        pruned.num_docs(),
        pruned.vocab_size(),
        pruned.total_tokens(),
        pruned.dropped_doc_ids().len()
    );
    Ok(())
}

fn load_corpus(path: &Path) -> Result<multimix::Corpus> {
    corpus::load_corpus(open(path)?).context(path.display())
}

#[derive(Serialize)]
struct SweepLog<'a> {
    ladder: &'a [usize],
    config: &'a EmConfig,
    records: Vec<SweepLogRecord>,
    failures: &'a [selection::SweepFailure],
}

#[derive(Serialize)]
struct SweepLogRecord {
    k: usize,
    k_max: Option<usize>,
    min_contrast: f64,
    model: Option<String>,
    run_log: Option<String>,
}

fn sweep(args: &SweepArgs, seed: Option<u64>) -> Result<()> {
    let corpus = load_corpus(&args.corpus)?;
    let ladder: Vec<usize> = match (&args.ladder, args.kmax) {
        (Some(l), _) => l.clone(),
        (None, Some(k)) => (1..=k).collect(),
        (None, None) => Vec::new(),
    };
    if ladder.is_empty() || ladder.contains(&0) {
        return Err(CliError::Usage("ladder must be nonempty with entries >= 1".into()));
    }
    let mut config = EmConfig::default();
    args.em.apply(&mut config);
    if let Some(s) = seed {
        config.seed = s;
    }
    config.validate()?;
    config.floor.resolve(&corpus)?;

    let result = selection::run_sweep(&corpus, &ladder, &config);
    for f in &result.failures {
        eprintln!("warning: fit with k_max={} failed: {}", f.k_max, f.error);
    }
    if result.records.is_empty() {
        return Err(CliError::Numerical("every fit in the sweep failed".into()));
    }
    write_atomic(&args.out, |out| Ok(selection::write_sweep_csv(&result, out)?))?;

    if let Some(dir) = &args.fits_dir {
        let mut records = Vec::new();
        for r in &result.records {
            let (mut model_name, mut log_name) = (None, None);
            if let Some(fit) = &r.fit {
                let m = format!("model_k{}.json", r.k);
                let l = format!("run_k{}.json", r.k);
                write_atomic(&dir.join(&m), |out| Ok(mixture::save_model(&fit.model, out)?))?;
                write_json(&dir.join(&l), &fit.run_log(&config))?;
                model_name = Some(m);
                log_name = Some(l);
            }
            records.push(SweepLogRecord {
                k: r.k,
                k_max: r.k_max,
                min_contrast: r.min_contrast,
                model: model_name,
                run_log: log_name,
            });
        }
        let log = SweepLog {
            ladder: &ladder,
            config: &config,
            records,
            failures: &result.failures,
        };
        write_json(&dir.join("sweep_log.json"), &log)?;
    }
    eprintln!(
        "sweep: {} realized model sizes from {} ladder entries",
        result.records.len(),
        ladder.len()
    );
    Ok(())
}

fn select(args: &SelectArgs) -> Result<()> {
    let sweep = selection::read_sweep_csv(open(&args.sweep)?).context(args.sweep.display())?;
    let corpus_sizes = || -> Result<(usize, f64)> {
        let path = args
            .corpus
            .as_ref()
            .ok_or_else(|| CliError::Usage(format!("--mode {:?} needs --corpus", args.mode).to_lowercase()))?;
        let c = load_corpus(path)?;
        if c.vocab_size() != sweep.num_words {
            return Err(CliError::Data(format!(
                "sweep has B = {} but the corpus has B = {}",
                sweep.num_words,
                c.vocab_size()
            )));
        }
        Ok((c.num_docs(), c.total_tokens() as f64))
    };
    let report: SelectionReport = match args.mode {
        PenaltyMode::Slope => selection::select_slope(&sweep)?,
        PenaltyMode::Theoretical => {
            let (l, n) = corpus_sizes()?;
            selection::select_theoretical(&sweep, l, n, args.lambda0)?
        }
        mode @ (PenaltyMode::Aic | PenaltyMode::Bic) => {
            let (_, n) = corpus_sizes()?;
            selection::select_information(&sweep, n, mode)?
        }
    };
    write_json(&args.out, &report)?;
    match report.lambda_min {
        Some(l) => println!("K_hat={} lambda_min={l}", report.k_hat),
        None => println!("K_hat={}", report.k_hat),
    }
    Ok(())
}

#[derive(Serialize)]
struct ReportSummary {
    num_docs: usize,
    num_components: usize,
    num_words: usize,
    top_m: usize,
    years: usize,
    docs_without_year: usize,
    notes: Vec<&'static str>,
}

fn report(args: &ReportArgs) -> Result<()> {
    let corpus = load_corpus(&args.corpus)?;
    let model = mixture::load_model(open(&args.model)?).context(args.model.display())?;
    let years = match &args.metadata {
        Some(path) => Some(corpus::read_year_metadata(open(path)?).context(path.display())?),
        None => corpus.years().cloned(),
    };
    let top_m = args.top_m.min(corpus.vocab_size());
    let tables = report::build(&corpus, &model, years.as_ref(), top_m)?;

    let dir = &args.out_dir;
    write_csv(&dir.join("topics.csv"), &tables.topics, &report::TOPIC_HEADER)?;
    write_csv(
        &dir.join("assignments.csv"),
        &tables.assignments,
        &report::ASSIGNMENT_HEADER,
    )?;
    let mut notes = vec!["topics.csv lists words by decreasing probability within each cluster"];
    if years.is_some() {
        write_csv(&dir.join("evolution.csv"), &tables.evolution, &report::EVOLUTION_HEADER)?;
        notes.push("evolution.csv: unweighted mean of per-document posterior probabilities per year");
        if tables.docs_without_year > 0 {
            notes.push("documents without a year are excluded from evolution.csv");
        }
    } else {
        notes.push("no year metadata: evolution.csv not written");
    }
    let summary = ReportSummary {
        num_docs: corpus.num_docs(),
        num_components: model.num_components(),
        num_words: model.num_words(),
        top_m,
        years: tables.years,
        docs_without_year: tables.docs_without_year,
        notes,
    };
    write_json(&dir.join("report.json"), &summary)?;
    if years.is_some() && tables.docs_without_year > 0 {
        eprintln!("warning: {} documents have no year", tables.docs_without_year);
    }
    Ok(())
}

#[derive(Serialize)]
struct SummaryRow {
    seed: u64,
    #[serde(rename = "K_hat")]
    k_hat: usize,
    risk: f64,
    agreement: f64,
}

#[derive(Serialize)]
struct SynthReport<'a> {
    note: &'static str,
    config: &'a ExperimentConfig,
    outcomes: &'a [SeedOutcome],
    median_k_hat: Option<usize>,
}

fn load_experiment(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).context(path.display())?;
    let config: ExperimentConfig =
        toml::from_str(&text).map_err(|e| CliError::Data(format!("{}: {}", path.display(), e.message())))?;
    config
        .validate()
        .map_err(|m| CliError::Data(format!("{}: {m}", path.display())))?;
    Ok(config)
}

fn synth_cmd(args: &SynthArgs, seed: Option<u64>) -> Result<()> {
    let mut config = load_experiment(&args.config)?;
    let mut em = config.em.clone().unwrap_or_default();
    args.em.apply(&mut em);
    if let Some(s) = seed {
        em.seed = s;
    }
    em.validate()?;
    config.em = Some(em);

    let mut outcomes = Vec::with_capacity(config.seeds.len());
    for &s in &config.seeds {
        let outcome = synth::run_seed(&config, s).map_err(|e| CliError::from(e).context(format!("seed {s}")))?;
        eprintln!("seed {s}: K_hat={} agreement={:.3}", outcome.k_hat, outcome.agreement);
        outcomes.push(outcome);
    }
    let rows: Vec<SummaryRow> = outcomes
        .iter()
        .map(|o| SummaryRow {
            seed: o.seed,
            k_hat: o.k_hat,
            risk: o.risk,
            agreement: o.agreement,
        })
        .collect();
    let mut k_hats: Vec<usize> = outcomes.iter().map(|o| o.k_hat).collect();
    k_hats.sort_unstable();
    let median_k_hat = (!k_hats.is_empty()).then(|| k_hats[(k_hats.len() - 1) / 2]);

    write_csv(
        &args.out_dir.join("summary.csv"),
        &rows,
        &["seed", "K_hat", "risk", "agreement"],
    )?;
    write_json(
        &args.out_dir.join("report.json"),
        &SynthReport {
            note: "synthetic benchmark: planted mixtures drawn by this tool, not a published experiment",
            config: &config,
            outcomes: &outcomes,
            median_k_hat,
        },
    )?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match &cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Sweep(a) => sweep(a, cli.seed),
        Command::Select(a) => select(a),
        Command::Report(a) => report(a),
        Command::Synth(a) => synth_cmd(a, cli.seed),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
