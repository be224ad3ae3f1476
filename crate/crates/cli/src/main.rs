use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use dialsum_core::corpus::{self, SplitRatios};
use dialsum_core::experiment::{self, ExperimentConfig, ReportFormat};
use dialsum_core::summarize::{self, PostProcessor};
use dialsum_core::weaklabel::{self, LabelSpec};
use dialsum_core::{seeded_rng, Corpus, HeuristicKind, MethodId, SpeakerRole, Split};

#[derive(Parser)]
#[command(
    name = "dialsum",
    version,
    about = "Perspective dialog summarization pipeline"
)]
struct Cli {
    /// Worker threads (0 = one per core). Outputs do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert raw data into the canonical dialog JSONL.
    Ingest(IngestArgs),
    /// Assign train/val/test splits.
    Split(SplitArgs),
    /// Produce Lead/Long weak pairs for one side.
    Weaklabel(WeaklabelArgs),
    /// Write nested few-shot training subsets.
    Subsets(SubsetsArgs),
    /// Run a heuristic baseline and write its predictions.
    Summarize(SummarizeArgs),
    /// Score summarizers against gold summaries and write reports.
    Score(ScoreArgs),
    /// Re-render a report from per-dialog scores.
    Report(ReportArgs),
    /// Post-processing rate per training size.
    RateCurve(RateCurveArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum InputFormat {
    KaggleCsv,
    DialogJsonl,
}

#[derive(Clone, Copy, ValueEnum)]
enum RoleArg {
    Customer,
    Agent,
}

impl From<RoleArg> for SpeakerRole {
    fn from(r: RoleArg) -> Self {
        match r {
            RoleArg::Customer => SpeakerRole::Customer,
            RoleArg::Agent => SpeakerRole::Agent,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum HeuristicArg {
    Lead,
    Long,
}

impl From<HeuristicArg> for HeuristicKind {
    fn from(h: HeuristicArg) -> Self {
        match h {
            HeuristicArg::Lead => HeuristicKind::Lead,
            HeuristicArg::Long => HeuristicKind::Long,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportArg {
    Md,
    Csv,
}

impl From<ReportArg> for ReportFormat {
    fn from(r: ReportArg) -> Self {
        match r {
            ReportArg::Md => ReportFormat::Markdown,
            ReportArg::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

#[derive(Args)]
struct PrefixArgs {
    /// Clause prepended to customer summaries lacking one.
    #[arg(long, default_value = summarize::DEFAULT_CUSTOMER_PREFIX)]
    prefix_customer: String,
    /// Clause prepended to agent summaries lacking one.
    #[arg(long, default_value = summarize::DEFAULT_AGENT_PREFIX)]
    prefix_agent: String,
}

impl PrefixArgs {
    fn post_processor(&self) -> Result<PostProcessor> {
        PostProcessor::new(self.prefix_customer.clone(), self.prefix_agent.clone()).map_err(usage)
    }
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long, value_enum)]
    format: InputFormat,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// JSONL of {"dialog_id", "candidates": [{"customer", "agent"}, ...]};
    /// one candidate per dialog becomes its gold summary.
    #[arg(long)]
    gold_candidates: Option<PathBuf>,
    /// Seed for gold selection.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// train,val,test proportions.
    #[arg(long, value_delimiter = ',', default_values_t = [0.8, 0.1, 0.1])]
    ratios: Vec<f64>,
    /// Existing dialog_id,split CSV to honor instead of a random split.
    #[arg(long, conflicts_with = "seed")]
    split_file: Option<PathBuf>,
    /// Also write the assignment as a dialog_id,split CSV.
    #[arg(long)]
    split_out: Option<PathBuf>,
}

#[derive(Args)]
struct WeaklabelArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum)]
    perspective: RoleArg,
    #[arg(long, value_enum)]
    heuristic: HeuristicArg,
    /// Remove the target utterance from the source dialog.
    #[arg(long)]
    masked: bool,
    #[arg(long, default_value_t = weaklabel::DEFAULT_MIN_TOKENS)]
    min_tokens: usize,
    /// File with one dialog id per line to leave out.
    #[arg(long)]
    exclude: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
    /// Also write the coverage counters to this JSON file.
    #[arg(long)]
    coverage: Option<PathBuf>,
}

#[derive(Args)]
struct SubsetsArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = experiment::DEFAULT_SIZES)]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    n_seeds: usize,
    /// First seed; seeds are seed..seed+n_seeds.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    cap_to_population: bool,
    /// Receives <seed>/<size>.txt files.
    #[arg(long)]
    output_dir: PathBuf,
}

#[derive(Args)]
struct SummarizeArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// A heuristic baseline, e.g. lead_post_process_base.
    #[arg(long)]
    method: String,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    #[arg(long, default_value_t = weaklabel::DEFAULT_MIN_TOKENS)]
    min_tokens: usize,
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    prefixes: PrefixArgs,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    config: PathBuf,
    /// Prediction files, added to those listed in the config.
    #[arg(long, num_args = 1..)]
    predictions: Vec<PathBuf>,
    /// dialog_id,split CSV overriding the corpus split.
    #[arg(long)]
    split_file: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "md")]
    report: ReportArg,
    #[arg(long)]
    output_dir: PathBuf,
    /// Fail when a test dialog has no prediction instead of excluding it.
    #[arg(long)]
    strict_missing: bool,
    #[arg(long)]
    cap_to_population: bool,
    #[arg(long)]
    prefix_customer: Option<String>,
    #[arg(long)]
    prefix_agent: Option<String>,
}

#[derive(Args)]
struct ReportArgs {
    /// per_dialog_scores.csv from `score`.
    #[arg(long)]
    scores: PathBuf,
    #[arg(long, value_enum, default_value = "md")]
    format: ReportArg,
    /// Defaults to standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct RateCurveArgs {
    #[arg(long, num_args = 1.., required = true)]
    predictions: Vec<PathBuf>,
    #[arg(long, value_enum)]
    perspective: RoleArg,
    /// Only use prediction sets of this method.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    prefixes: PrefixArgs,
}

/// Marks an error as a usage problem (exit 1) rather than a data problem.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(e: impl std::fmt::Display) -> anyhow::Error {
    UsageError(e.to_string()).into()
}

/// Exit codes: 0 success, 1 usage error, 2 data or validation error.
fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(anyhow::Error::from)
        .and_then(|pool| pool.install(|| run(cli.command)));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<UsageError>() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest(a) => ingest(a),
        Command::Split(a) => split(a),
        Command::Weaklabel(a) => weaklabel(a),
        Command::Subsets(a) => subsets(a),
        Command::Summarize(a) => summarize_cmd(a),
        Command::Score(a) => score(a),
        Command::Report(a) => report(a),
        Command::RateCurve(a) => rate_curve(a),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(file))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .with_context(|| format!("cannot create {}", parent.display()))?;
    }
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn load_corpus(path: &Path) -> Result<Corpus> {
    corpus::parse_dialog_corpus(open(path)?).with_context(|| format!("in {}", path.display()))
}

fn save_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    corpus::write_dialog_corpus(corpus, create(path)?)?;
    Ok(())
}

fn ingest(a: IngestArgs) -> Result<()> {
    let mut corpus = match a.format {
        InputFormat::DialogJsonl => load_corpus(&a.input)?,
        InputFormat::KaggleCsv => {
            let rows = corpus::read_tweet_csv(open(&a.input)?)
                .with_context(|| format!("in {}", a.input.display()))?;
            let rebuilt = corpus::reconstruct_threads(&rows);
            println!(
                "tweets: {}, dropped chains: {}, cycles: {}, gaps: {}",
                rows.len(),
                rebuilt.dropped,
                rebuilt.cycles,
                rebuilt.gaps
            );
            Corpus::new(rebuilt.dialogs)?
        }
    };
    if let Some(path) = &a.gold_candidates {
        let entries = corpus::read_gold_candidates(open(path)?)
            .with_context(|| format!("in {}", path.display()))?;
        corpus::attach_gold(&mut corpus, &entries, &mut seeded_rng(a.seed))?;
    }
    save_corpus(&corpus, &a.output)?;
    println!("dialogs: {}", corpus.len());
    Ok(())
}

fn split(a: SplitArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let corpus = match &a.split_file {
        Some(path) => {
            let assignment = corpus::read_split_file(open(path)?)
                .with_context(|| format!("in {}", path.display()))?;
            let mut corpus = corpus;
            corpus.set_split(assignment)?;
            corpus
        }
        None => {
            let [train, validation, test] = a.ratios[..] else {
                return Err(usage("--ratios takes exactly three values"));
            };
            let ratios = SplitRatios {
                train,
                validation,
                test,
            };
            corpus::split_corpus(corpus, ratios, &mut seeded_rng(a.seed))?
        }
    };
    save_corpus(&corpus, &a.output)?;
    if let Some(path) = &a.split_out {
        corpus::write_split_file(&corpus, create(path)?)?;
    }
    println!(
        "train: {}, val: {}, test: {}",
        corpus.ids_in(Split::Train).len(),
        corpus.ids_in(Split::Validation).len(),
        corpus.ids_in(Split::Test).len()
    );
    Ok(())
}

fn read_id_list(path: &Path) -> Result<HashSet<String>> {
    let mut ids = HashSet::new();
    for line in open(path)?.lines() {
        let line = line?;
        let id = line.trim();
        if !id.is_empty() {
            ids.insert(id.to_string());
        }
    }
    Ok(ids)
}

fn weaklabel(a: WeaklabelArgs) -> Result<()> {
    if a.min_tokens == 0 {
        return Err(usage("--min-tokens must be at least 1"));
    }
    let corpus = load_corpus(&a.corpus)?;
    let exclude = match &a.exclude {
        Some(path) => read_id_list(path)?,
        None => HashSet::new(),
    };
    let spec = LabelSpec {
        role: a.perspective.into(),
        heuristic: a.heuristic.into(),
        masked: a.masked,
        min_tokens: a.min_tokens,
    };
    let (pairs, coverage) = weaklabel::weaklabel_corpus(&corpus, spec, &exclude);
    let mut out = create(&a.output)?;
    for pair in &pairs {
        serde_json::to_writer(&mut out, pair)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    let report = serde_json::to_string(&coverage)?;
    if let Some(path) = &a.coverage {
        let mut f = create(path)?;
        writeln!(f, "{report}")?;
        f.flush()?;
    }
    println!("{report}");
    Ok(())
}

fn write_subsets(families: &[experiment::SubsetFamily], dir: &Path) -> Result<()> {
    for family in families {
        for (size, ids) in &family.subsets {
            let path = dir
                .join(family.seed.to_string())
                .join(format!("{size}.txt"));
            let mut f = create(&path)?;
            for id in ids {
                writeln!(f, "{id}")?;
            }
            f.flush()?;
        }
    }
    Ok(())
}

fn subsets(a: SubsetsArgs) -> Result<()> {
    if a.sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(usage("--sizes must be strictly increasing"));
    }
    let corpus = load_corpus(&a.corpus)?;
    if !corpus.has_split() {
        bail!("{} has no split assignment", a.corpus.display());
    }
    let train = corpus.ids_in(Split::Train);
    let families = (0..a.n_seeds as u64)
        .map(|k| {
            experiment::sample_nested_subsets(&train, &a.sizes, a.seed + k, a.cap_to_population)
        })
        .collect::<dialsum_core::Result<Vec<_>>>()?;
    write_subsets(&families, &a.output_dir)?;
    println!(
        "seeds: {}, sizes: {}, train: {}",
        families.len(),
        a.sizes.len(),
        train.len()
    );
    Ok(())
}

fn summarize_cmd(a: SummarizeArgs) -> Result<()> {
    let method: MethodId = a.method.parse().map_err(usage)?;
    if !matches!(method.kind(), summarize::MethodKind::Heuristic { .. }) {
        return Err(usage(format!("{method} is not a heuristic baseline")));
    }
    let post = a.prefixes.post_processor()?;
    let corpus = load_corpus(&a.corpus)?;
    let ids: Vec<&str> = match a.split {
        SplitArg::All => corpus.ids().collect(),
        SplitArg::Train => corpus.ids_in(Split::Train),
        SplitArg::Val => corpus.ids_in(Split::Validation),
        SplitArg::Test => corpus.ids_in(Split::Test),
    };
    let set = summarize::heuristic_predictions(&corpus, &ids, &method, &post, a.min_tokens)?;
    summarize::write_predictions(&set, create(&a.output)?)?;
    println!("predictions: {}", set.entries.len());
    Ok(())
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

fn score(a: ScoreArgs) -> Result<()> {
    let raw = fs::read_to_string(&a.config)
        .with_context(|| format!("cannot open {}", a.config.display()))?;
    let mut config: ExperimentConfig = serde_json::from_str(&raw)
        .with_context(|| format!("invalid config {}", a.config.display()))?;
    let base = a.config.parent().unwrap_or(Path::new("."));

    config.strict_missing |= a.strict_missing;
    config.cap_to_population |= a.cap_to_population;
    if let Some(p) = a.prefix_customer {
        config.customer_prefix = p;
    }
    if let Some(p) = a.prefix_agent {
        config.agent_prefix = p;
    }
    config.validate()?;

    let corpus_path = match (&a.corpus, &config.corpus) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => resolve(base, p),
        (None, None) => return Err(usage("no corpus: pass --corpus or set it in the config")),
    };
    let mut corpus = load_corpus(&corpus_path)?;
    let split_path = a
        .split_file
        .clone()
        .or_else(|| config.split.as_ref().map(|p| resolve(base, p)));
    if let Some(path) = split_path {
        let assignment = corpus::read_split_file(open(&path)?)
            .with_context(|| format!("in {}", path.display()))?;
        corpus.set_split(assignment)?;
    }

    let mut prediction_paths: Vec<PathBuf> = config
        .predictions
        .iter()
        .map(|p| resolve(base, p))
        .collect();
    prediction_paths.extend(a.predictions.iter().cloned());
    let mut sets = Vec::new();
    for path in &prediction_paths {
        let set = summarize::load_predictions(open(path)?)
            .with_context(|| format!("in {}", path.display()))?;
        sets.push(set);
    }

    let output = experiment::run_experiment(&corpus, &config, &sets)?;
    for w in &output.warnings {
        eprintln!("warning: {w}");
    }

    let dir = &a.output_dir;
    let format: ReportFormat = a.report.into();
    let name = match format {
        ReportFormat::Markdown => "report.md",
        ReportFormat::Csv => "report.csv",
    };
    let mut f = create(&dir.join(name))?;
    f.write_all(experiment::emit_report(&output.table, format).as_bytes())?;
    f.flush()?;
    experiment::write_dump_csv(&output.dump, create(&dir.join("per_dialog_scores.csv"))?)?;
    experiment::write_rate_curve_csv(&output.rate_curves, create(&dir.join("rate_curve.csv"))?)?;
    write_subsets(&output.subsets, &dir.join("subsets"))?;
    println!(
        "rows: {}, scored dialogs: {}, excluded: {}",
        output.table.rows.len(),
        output.dump.len(),
        output.warnings.len()
    );
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let dump = experiment::read_dump_csv(open(&a.scores)?)
        .with_context(|| format!("in {}", a.scores.display()))?;
    let table = experiment::table_from_dump(&dump)?;
    if table.is_empty() {
        bail!("{} has no scores", a.scores.display());
    }
    let text = experiment::emit_report(&table, a.format.into());
    match &a.output {
        Some(path) => {
            let mut f = create(path)?;
            f.write_all(text.as_bytes())?;
            f.flush()?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn rate_curve(a: RateCurveArgs) -> Result<()> {
    let post = a.prefixes.post_processor()?;
    let wanted: Option<MethodId> = a
        .method
        .as_deref()
        .map(str::parse)
        .transpose()
        .map_err(usage)?;
    let mut sets = Vec::new();
    for path in &a.predictions {
        let set = summarize::load_predictions(open(path)?)
            .with_context(|| format!("in {}", path.display()))?;
        if wanted.as_ref().is_none_or(|m| *m == set.method) {
            sets.push(set);
        }
    }
    if sets.is_empty() {
        bail!("no prediction set matches");
    }
    let role: SpeakerRole = a.perspective.into();
    let grouped = experiment::rate_candidates(&sets, role, &post);
    let points = experiment::rate_curve(&grouped)?;
    let method = wanted.unwrap_or_else(|| sets[0].method.clone());
    let series = experiment::RateSeries {
        method,
        perspective: role.into(),
        points,
    };
    experiment::write_rate_curve_csv(std::slice::from_ref(&series), create(&a.output)?)?;
    for (size, fraction) in &series.points {
        println!("{size}: {fraction}");
    }
    Ok(())
}
