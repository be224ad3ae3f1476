//! Few-shot experiment protocol: nested training subsets, per-cell scoring of
//! heuristic and external summarizers, aggregation over seeds and report
//! rendering.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Dialog, SpeakerRole, Split};
use crate::error::{Error, Result};
use crate::rouge::{
    aggregate, score_pair, AggregateCell, RougeVariant, ScoreTriple, TokenizerConfig,
};
use crate::summarize::{
    heuristic_summarize_with, post_process_rate, CandidateSummary, MethodId, MethodKind,
    Perspective, PostProcessor, PredictionSet, DEFAULT_AGENT_PREFIX, DEFAULT_CUSTOMER_PREFIX,
};
use crate::weaklabel::DEFAULT_MIN_TOKENS;

pub const DEFAULT_SIZES: [usize; 8] = [0, 16, 32, 64, 128, 256, 512, 1024];

fn default_sizes() -> Vec<usize> {
    DEFAULT_SIZES.to_vec()
}

fn default_n_seeds() -> usize {
    5
}

fn default_perspectives() -> Vec<Perspective> {
    vec![Perspective::Customer, Perspective::Agent, Perspective::Full]
}

fn default_min_tokens() -> usize {
    DEFAULT_MIN_TOKENS
}

fn default_customer_prefix() -> String {
    DEFAULT_CUSTOMER_PREFIX.into()
}

fn default_agent_prefix() -> String {
    DEFAULT_AGENT_PREFIX.into()
}

/// Experiment description, also the JSON config file format. Paths are
/// resolved by the caller.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_sizes")]
    pub sizes: Vec<usize>,
    #[serde(default = "default_n_seeds")]
    pub n_seeds: usize,
    /// Seeds are `seed_base .. seed_base + n_seeds`.
    #[serde(default)]
    pub seed_base: u64,
    pub methods: Vec<MethodId>,
    #[serde(default = "default_perspectives")]
    pub perspectives: Vec<Perspective>,
    #[serde(default)]
    pub tokenizer: TokenizerConfig,
    /// Treat sizes above the training population as "all of train".
    #[serde(default)]
    pub cap_to_population: bool,
    /// Fail instead of excluding test dialogs that lack a prediction.
    #[serde(default)]
    pub strict_missing: bool,
    #[serde(default = "default_min_tokens")]
    pub min_tokens: usize,
    #[serde(default = "default_customer_prefix")]
    pub customer_prefix: String,
    #[serde(default = "default_agent_prefix")]
    pub agent_prefix: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub predictions: Vec<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(methods: Vec<MethodId>) -> Self {
        ExperimentConfig {
            sizes: default_sizes(),
            n_seeds: default_n_seeds(),
            seed_base: 0,
            methods,
            perspectives: default_perspectives(),
            tokenizer: TokenizerConfig::default(),
            cap_to_population: false,
            strict_missing: false,
            min_tokens: DEFAULT_MIN_TOKENS,
            customer_prefix: default_customer_prefix(),
            agent_prefix: default_agent_prefix(),
            corpus: None,
            split: None,
            predictions: Vec::new(),
        }
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.n_seeds as u64).map(move |k| self.seed_base + k)
    }

    pub fn post_processor(&self) -> Result<PostProcessor> {
        PostProcessor::new(self.customer_prefix.clone(), self.agent_prefix.clone())
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(
                "sizes must be non-empty and strictly increasing",
            ));
        }
        if self.n_seeds == 0 {
            return Err(Error::invalid("n_seeds must be at least 1"));
        }
        if self.min_tokens == 0 {
            return Err(Error::invalid("min_tokens must be at least 1"));
        }
        if self.methods.is_empty() || self.perspectives.is_empty() {
            return Err(Error::invalid(
                "config needs at least one method and one perspective",
            ));
        }
        for m in &self.methods {
            if !self.perspectives.iter().any(|&p| applies(m, p)) {
                return Err(Error::invalid(format!(
                    "method {m} applies to none of the requested perspectives"
                )));
            }
        }
        self.post_processor()?;
        Ok(())
    }
}

/// Which (method, perspective) pairs are evaluated. Concatenations only
/// exist as full summaries; learned perspective models have no full output
/// of their own; heuristics and external models cover all three.
pub fn applies(method: &MethodId, perspective: Perspective) -> bool {
    match method.kind() {
        MethodKind::Combined { .. } => perspective == Perspective::Full,
        MethodKind::Heuristic { .. } => true,
        MethodKind::Predicted { .. } => {
            matches!(method, MethodId::External(_)) || perspective != Perspective::Full
        }
    }
}

// ---------------------------------------------------------------------------
// Nested subsets

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubsetFamily {
    pub seed: u64,
    pub subsets: BTreeMap<usize, Vec<String>>,
}

/// Shuffles `train_ids` once and takes prefixes, so every subset contains
/// all smaller ones. A size above the population is an error unless
/// `cap_to_population` is set, in which case it gets every id.
pub fn sample_nested_subsets(
    train_ids: &[&str],
    sizes: &[usize],
    seed: u64,
    cap_to_population: bool,
) -> Result<SubsetFamily> {
    use rand::seq::SliceRandom;

    let population = train_ids.len();
    if let Some(&too_big) = sizes.iter().find(|&&s| s > population) {
        if !cap_to_population {
            return Err(Error::invalid(format!(
                "subset size {too_big} exceeds the {population} training dialogs"
            )));
        }
    }
    let mut order: Vec<&str> = train_ids.to_vec();
    order.shuffle(&mut crate::seeded_rng(seed));
    let subsets = sizes
        .iter()
        .map(|&s| {
            (
                s,
                order[..s.min(population)]
                    .iter()
                    .map(|id| id.to_string())
                    .collect(),
            )
        })
        .collect();
    Ok(SubsetFamily { seed, subsets })
}

// ---------------------------------------------------------------------------
// Results

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub method: MethodId,
    pub perspective: Perspective,
    pub variant: RougeVariant,
    pub cells: BTreeMap<usize, AggregateCell>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResultTable {
    pub sizes: Vec<usize>,
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn get(
        &self,
        method: &MethodId,
        perspective: Perspective,
        variant: RougeVariant,
    ) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| &r.method == method && r.perspective == perspective && r.variant == variant)
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// One line of `per_dialog_scores.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DialogScore {
    pub dialog_id: String,
    pub method: MethodId,
    pub perspective: Perspective,
    pub size: usize,
    pub seed: u64,
    pub r1_p: f64,
    pub r1_r: f64,
    pub r1_f: f64,
    pub r2_f: f64,
    pub rl_f: f64,
}

impl DialogScore {
    pub fn f(&self, variant: RougeVariant) -> f64 {
        match variant {
            RougeVariant::Rouge1 => self.r1_f,
            RougeVariant::Rouge2 => self.r2_f,
            RougeVariant::RougeL => self.rl_f,
        }
    }
}

/// Post-processing rate per training size for one method and side.
#[derive(Clone, Debug, PartialEq)]
pub struct RateSeries {
    pub method: MethodId,
    pub perspective: Perspective,
    pub points: BTreeMap<usize, f64>,
}

#[derive(Clone, Debug, Default)]
pub struct ExperimentOutput {
    pub table: ResultTable,
    pub dump: Vec<DialogScore>,
    pub rate_curves: Vec<RateSeries>,
    pub subsets: Vec<SubsetFamily>,
    /// Test dialogs left out for lack of a prediction.
    pub warnings: Vec<String>,
}

enum Outcome {
    Text(CandidateSummary),
    /// The summarizer produced nothing; scored as zero.
    Empty,
    /// No prediction for this dialog; left out of the run mean.
    Missing,
}

struct Runner<'a> {
    corpus: &'a Corpus,
    config: &'a ExperimentConfig,
    post: PostProcessor,
    external: HashMap<(String, usize, u64), &'a PredictionSet>,
}

impl Runner<'_> {
    fn candidate(
        &self,
        method: &MethodId,
        perspective: Perspective,
        dialog: &Dialog,
        size: usize,
        seed: u64,
    ) -> Outcome {
        match (method.kind(), perspective.role()) {
            (
                MethodKind::Heuristic {
                    heuristic,
                    post_process,
                },
                Some(role),
            ) => match heuristic_summarize_with(dialog, role, heuristic, self.config.min_tokens) {
                Some(c) if post_process => {
                    Outcome::Text(self.post.apply_candidate(c, method.clone()))
                }
                Some(c) => Outcome::Text(CandidateSummary {
                    method: method.clone(),
                    ..c
                }),
                None => Outcome::Empty,
            },
            (
                MethodKind::Predicted {
                    source,
                    post_process,
                },
                _,
            ) => {
                let set = self.external[&(source, size, seed)];
                let Some(entry) = set.entries.get(&dialog.id) else {
                    return Outcome::Missing;
                };
                let Some(text) = entry.text(perspective) else {
                    return Outcome::Empty;
                };
                let c = CandidateSummary {
                    dialog_id: dialog.id.clone(),
                    perspective,
                    method: method.clone(),
                    text: text.to_string(),
                    post_processed: false,
                };
                if post_process {
                    Outcome::Text(self.post.apply_candidate(c, method.clone()))
                } else {
                    Outcome::Text(c)
                }
            }
            (MethodKind::Heuristic { .. }, None) => {
                self.concatenated(method, method, method, dialog, size, seed)
            }
            (MethodKind::Combined { customer, agent }, None) => {
                self.concatenated(method, &customer, &agent, dialog, size, seed)
            }
            (MethodKind::Combined { .. }, Some(_)) => {
                unreachable!("combined methods are full-only")
            }
        }
    }

    /// Joins the two sides with one space; a side that produced nothing is
    /// left out.
    fn concatenated(
        &self,
        method: &MethodId,
        customer: &MethodId,
        agent: &MethodId,
        dialog: &Dialog,
        size: usize,
        seed: u64,
    ) -> Outcome {
        let c = self.candidate(customer, Perspective::Customer, dialog, size, seed);
        let a = self.candidate(agent, Perspective::Agent, dialog, size, seed);
        let (text, fired) = match (c, a) {
            (Outcome::Missing, _) | (_, Outcome::Missing) => return Outcome::Missing,
            (Outcome::Empty, Outcome::Empty) => return Outcome::Empty,
            (Outcome::Text(c), Outcome::Text(a)) => (
                format!("{} {}", c.text, a.text),
                c.post_processed || a.post_processed,
            ),
            (Outcome::Text(one), Outcome::Empty) | (Outcome::Empty, Outcome::Text(one)) => {
                (one.text, one.post_processed)
            }
        };
        Outcome::Text(CandidateSummary {
            dialog_id: dialog.id.clone(),
            perspective: Perspective::Full,
            method: method.clone(),
            text,
            post_processed: fired,
        })
    }
}

fn prediction_sources(method: &MethodId, out: &mut Vec<String>) {
    match method.kind() {
        MethodKind::Predicted { source, .. } => out.push(source),
        MethodKind::Heuristic { .. } => {}
        MethodKind::Combined { customer, agent } => {
            prediction_sources(&customer, out);
            prediction_sources(&agent, out);
        }
    }
}

fn reference(gold: &crate::corpus::GoldSummary, perspective: Perspective) -> String {
    match perspective.role() {
        Some(role) => gold.part(role).to_string(),
        None => gold.full(),
    }
}

fn ordered_pairs(config: &ExperimentConfig) -> Vec<(MethodId, Perspective)> {
    let mut perspectives = config.perspectives.clone();
    perspectives.sort();
    perspectives.dedup();
    perspectives
        .into_iter()
        .flat_map(|p| {
            config
                .methods
                .iter()
                .filter(move |m| applies(m, p))
                .map(move |m| (m.clone(), p))
        })
        .collect()
}

/// Scores every requested (method, perspective, size, seed) cell on the test
/// split and aggregates over seeds.
pub fn run_experiment(
    corpus: &Corpus,
    config: &ExperimentConfig,
    external: &[PredictionSet],
) -> Result<ExperimentOutput> {
    config.validate()?;
    if !corpus.has_split() {
        return Err(Error::invalid("corpus has no split assignment"));
    }
    let test_ids = corpus.ids_in(Split::Test);
    if test_ids.is_empty() {
        return Err(Error::invalid("test split is empty"));
    }
    let mut golds = Vec::with_capacity(test_ids.len());
    for id in &test_ids {
        let gold = corpus
            .gold(id)
            .ok_or_else(|| Error::invalid(format!("test dialog {id} has no gold summary")))?;
        golds.push(gold);
    }

    let train_ids = corpus.ids_in(Split::Train);
    let seeds: Vec<u64> = config.seeds().collect();
    let subsets = seeds
        .iter()
        .map(|&seed| {
            sample_nested_subsets(&train_ids, &config.sizes, seed, config.cap_to_population)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut index = HashMap::new();
    for set in external {
        let key = (set.method.name(), set.training_size, set.seed);
        if index.insert(key.clone(), set).is_some() {
            return Err(Error::invalid(format!(
                "two prediction sets for ({}, size={}, seed={})",
                key.0, key.1, key.2
            )));
        }
    }

    let pairs = ordered_pairs(config);
    let mut missing_cells = Vec::new();
    for (method, _) in &pairs {
        let mut sources = Vec::new();
        prediction_sources(method, &mut sources);
        for source in sources {
            for &size in &config.sizes {
                for &seed in &seeds {
                    let cell = (source.clone(), size, seed);
                    if !index.contains_key(&cell) && !missing_cells.contains(&cell) {
                        missing_cells.push(cell);
                    }
                }
            }
        }
    }
    if !missing_cells.is_empty() {
        return Err(Error::MissingCells(missing_cells));
    }

    let runner = Runner {
        corpus,
        config,
        post: config.post_processor()?,
        external: index,
    };
    let references: Vec<[String; 3]> = golds
        .iter()
        .map(|g| {
            [Perspective::Customer, Perspective::Agent, Perspective::Full].map(|p| reference(g, p))
        })
        .collect();

    let mut out = ExperimentOutput {
        table: ResultTable {
            sizes: config.sizes.clone(),
            rows: Vec::new(),
        },
        subsets,
        ..Default::default()
    };

    for (method, perspective) in &pairs {
        let ref_slot = match perspective {
            Perspective::Customer => 0,
            Perspective::Agent => 1,
            Perspective::Full => 2,
        };
        let mut cells: BTreeMap<RougeVariant, BTreeMap<usize, AggregateCell>> = BTreeMap::new();
        let mut rate_points = BTreeMap::new();
        // Heuristics ignore size and seed; score them once.
        let mut base_cache: Option<Vec<ScoredDialog>> = None;

        for &size in &config.sizes {
            let mut run_means: BTreeMap<RougeVariant, Vec<f64>> = BTreeMap::new();
            let mut size_candidates = Vec::new();
            for &seed in &seeds {
                let scored = match (&base_cache, method.is_base()) {
                    (Some(cached), true) => cached.clone(),
                    _ => {
                        let fresh = score_run(
                            &runner,
                            method,
                            *perspective,
                            &test_ids,
                            &references,
                            ref_slot,
                            size,
                            seed,
                        )?;
                        if method.is_base() {
                            base_cache = Some(fresh.clone());
                        }
                        fresh
                    }
                };
                let mut sums = [0.0f64; 3];
                let mut n = 0usize;
                for (id, result) in test_ids.iter().zip(scored) {
                    let Some((candidate, triple)) = result else {
                        if config.strict_missing {
                            return Err(Error::invalid(format!(
                                "no {method} prediction for test dialog {id} (size={size}, seed={seed})"
                            )));
                        }
                        out.warnings.push(format!(
                            "excluded {id}: no {method} prediction (size={size}, seed={seed})"
                        ));
                        continue;
                    };
                    n += 1;
                    for (slot, v) in RougeVariant::ALL.iter().enumerate() {
                        sums[slot] += triple.get(*v).f_measure;
                    }
                    out.dump.push(DialogScore {
                        dialog_id: id.to_string(),
                        method: method.clone(),
                        perspective: *perspective,
                        size,
                        seed,
                        r1_p: triple.r1.precision,
                        r1_r: triple.r1.recall,
                        r1_f: triple.r1.f_measure,
                        r2_f: triple.r2.f_measure,
                        rl_f: triple.rl.f_measure,
                    });
                    if let Some(c) = candidate {
                        size_candidates.push(c);
                    }
                }
                if n == 0 {
                    return Err(Error::invalid(format!(
                        "{method}/{perspective} size={size} seed={seed}: no test dialog could be scored"
                    )));
                }
                for (slot, v) in RougeVariant::ALL.iter().enumerate() {
                    run_means.entry(*v).or_default().push(sums[slot] / n as f64);
                }
            }
            for (v, means) in run_means {
                cells.entry(v).or_default().insert(size, aggregate(&means)?);
            }
            if method.post_processes()
                && perspective.role().is_some()
                && !size_candidates.is_empty()
            {
                rate_points.insert(size, post_process_rate(&size_candidates)?);
            }
        }

        for (variant, cells) in cells {
            out.table.rows.push(ResultRow {
                method: method.clone(),
                perspective: *perspective,
                variant,
                cells,
            });
        }
        if !rate_points.is_empty() {
            out.rate_curves.push(RateSeries {
                method: method.clone(),
                perspective: *perspective,
                points: rate_points,
            });
        }
    }
    sort_rows(&mut out.table, config);
    Ok(out)
}

type ScoredDialog = Option<(Option<CandidateSummary>, ScoreTriple)>;

#[allow(clippy::too_many_arguments)]
fn score_run(
    runner: &Runner<'_>,
    method: &MethodId,
    perspective: Perspective,
    test_ids: &[&str],
    references: &[[String; 3]],
    ref_slot: usize,
    size: usize,
    seed: u64,
) -> Result<Vec<ScoredDialog>> {
    let tokenizer = &runner.config.tokenizer;
    let score_one = |(id, refs): (&&str, &[String; 3])| -> ScoredDialog {
        let dialog = runner
            .corpus
            .dialog(id)
            .expect("test ids come from the corpus");
        match runner.candidate(method, perspective, dialog, size, seed) {
            Outcome::Missing => None,
            Outcome::Empty => Some((None, score_pair("", &refs[ref_slot], tokenizer))),
            Outcome::Text(c) => {
                let triple = score_pair(&c.text, &refs[ref_slot], tokenizer);
                Some((Some(c), triple))
            }
        }
    };

    #[cfg(feature = "parallel")]
    let scored = {
        use rayon::prelude::*;
        test_ids
            .par_iter()
            .zip(references.par_iter())
            .map(score_one)
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let scored = test_ids
        .iter()
        .zip(references.iter())
        .map(score_one)
        .collect();
    Ok(scored)
}

fn sort_rows(table: &mut ResultTable, config: &ExperimentConfig) {
    let method_rank = |m: &MethodId| {
        config
            .methods
            .iter()
            .position(|x| x == m)
            .unwrap_or(usize::MAX)
    };
    table
        .rows
        .sort_by_key(|r| (r.perspective, r.variant, method_rank(&r.method)));
}

/// Rebuilds the aggregated table from per-dialog scores: per-run means over
/// dialogs, then mean and deviation over seeds. Rows keep first-appearance
/// order within each (perspective, variant) group.
pub fn table_from_dump(dump: &[DialogScore]) -> Result<ResultTable> {
    let mut order: Vec<(MethodId, Perspective)> = Vec::new();
    // (method, perspective) -> size -> seed -> (sums, n)
    type Runs = BTreeMap<usize, BTreeMap<u64, ([f64; 3], usize)>>;
    let mut runs: HashMap<(MethodId, Perspective), Runs> = HashMap::new();
    let mut sizes: Vec<usize> = Vec::new();
    for row in dump {
        let key = (row.method.clone(), row.perspective);
        if !runs.contains_key(&key) {
            order.push(key.clone());
        }
        if !sizes.contains(&row.size) {
            sizes.push(row.size);
        }
        let run = runs
            .entry(key)
            .or_default()
            .entry(row.size)
            .or_default()
            .entry(row.seed)
            .or_insert(([0.0; 3], 0));
        for (slot, v) in RougeVariant::ALL.iter().enumerate() {
            run.0[slot] += row.f(*v);
        }
        run.1 += 1;
    }
    sizes.sort_unstable();

    let mut table = ResultTable {
        sizes,
        rows: Vec::new(),
    };
    for key in &order {
        for (slot, variant) in RougeVariant::ALL.iter().enumerate() {
            let mut cells = BTreeMap::new();
            for (&size, seeds) in &runs[key] {
                let means: Vec<f64> = seeds.values().map(|(s, n)| s[slot] / *n as f64).collect();
                cells.insert(size, aggregate(&means)?);
            }
            table.rows.push(ResultRow {
                method: key.0.clone(),
                perspective: key.1,
                variant: *variant,
                cells,
            });
        }
    }
    let rank = |m: &MethodId| order.iter().position(|(x, _)| x == m).unwrap_or(usize::MAX);
    table
        .rows
        .sort_by_key(|r| (r.perspective, r.variant, rank(&r.method)));
    Ok(table)
}

pub fn write_dump_csv<W: Write>(dump: &[DialogScore], writer: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    for row in dump {
        csv.serialize(row)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_dump_csv<R: Read>(reader: R) -> Result<Vec<DialogScore>> {
    let mut csv = csv::Reader::from_reader(reader);
    csv.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| Error::parse(i + 2, e)))
        .collect()
}

// ---------------------------------------------------------------------------
// Reports

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::invalid(format!("unknown report format {other:?}"))),
        }
    }
}

/// `mean (±deviation)` on a 0-100 scale with two decimals; the deviation is
/// dropped when it would print as 0.00.
pub fn format_cell(cell: &AggregateCell) -> String {
    let mean = format!("{:.2}", cell.mean * 100.0);
    let dev = format!("{:.2}", cell.deviation * 100.0);
    if dev == "0.00" || dev == "-0.00" {
        mean
    } else {
        format!("{mean} (±{dev})")
    }
}

fn perspective_title(p: Perspective) -> &'static str {
    match p {
        Perspective::Customer => "Customer perspective",
        Perspective::Agent => "Agent perspective",
        Perspective::Full => "Complete summary",
    }
}

pub fn emit_report(table: &ResultTable, format: ReportFormat) -> String {
    let cells = |row: &ResultRow| -> Vec<String> {
        table
            .sizes
            .iter()
            .map(|s| row.cells.get(s).map(format_cell).unwrap_or_default())
            .collect()
    };
    let mut out = String::new();
    match format {
        ReportFormat::Markdown => {
            let header: Vec<String> = table.sizes.iter().map(|s| s.to_string()).collect();
            let mut current: Option<Perspective> = None;
            let mut last_variant: Option<RougeVariant> = None;
            for row in &table.rows {
                if current != Some(row.perspective) {
                    if current.is_some() {
                        out.push('\n');
                    }
                    current = Some(row.perspective);
                    last_variant = None;
                    out.push_str(&format!("## {}\n\n", perspective_title(row.perspective)));
                    out.push_str(&format!("| Rouge | Method | {} |\n", header.join(" | ")));
                    out.push_str(&format!("|---|---|{}\n", "---:|".repeat(header.len())));
                }
                let variant = if last_variant == Some(row.variant) {
                    ""
                } else {
                    row.variant.label()
                };
                last_variant = Some(row.variant);
                out.push_str(&format!(
                    "| {} | {} | {} |\n",
                    variant,
                    row.method,
                    cells(row).join(" | ")
                ));
            }
        }
        ReportFormat::Csv => {
            let mut csv = csv::Writer::from_writer(Vec::new());
            let mut header = vec!["perspective".to_string(), "rouge".into(), "method".into()];
            header.extend(table.sizes.iter().map(|s| s.to_string()));
            csv.write_record(&header).expect("in-memory write");
            for row in &table.rows {
                let mut record = vec![
                    row.perspective.as_str().to_string(),
                    row.variant.label().to_string(),
                    row.method.name(),
                ];
                record.extend(cells(row));
                csv.write_record(&record).expect("in-memory write");
            }
            out = String::from_utf8(csv.into_inner().expect("in-memory flush")).expect("utf-8");
        }
    }
    out
}

/// Post-processing rate at each training size.
pub fn rate_curve(
    candidates: &BTreeMap<usize, Vec<CandidateSummary>>,
) -> Result<BTreeMap<usize, f64>> {
    candidates
        .iter()
        .map(|(&size, list)| {
            if list.is_empty() {
                return Err(Error::invalid(format!("no candidates at size {size}")));
            }
            Ok((size, post_process_rate(list)?))
        })
        .collect()
}

pub fn write_rate_curve_csv<W: Write>(series: &[RateSeries], writer: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["method", "perspective", "size", "fraction"])?;
    for s in series {
        for (size, fraction) in &s.points {
            csv.write_record([
                s.method.name(),
                s.perspective.to_string(),
                size.to_string(),
                fraction.to_string(),
            ])?;
        }
    }
    csv.flush()?;
    Ok(())
}

/// Post-processes one side of every prediction set and groups the outcome
/// by training size, ready for [`rate_curve`].
pub fn rate_candidates(
    sets: &[PredictionSet],
    role: SpeakerRole,
    post: &PostProcessor,
) -> BTreeMap<usize, Vec<CandidateSummary>> {
    let mut out: BTreeMap<usize, Vec<CandidateSummary>> = BTreeMap::new();
    for set in sets {
        let list = out.entry(set.training_size).or_default();
        for (id, entry) in &set.entries {
            if let Some(text) = entry.text(role.into()) {
                let (text, fired) = post.apply(text, role);
                list.push(CandidateSummary {
                    dialog_id: id.clone(),
                    perspective: role.into(),
                    method: set.method.clone(),
                    text,
                    post_processed: fired,
                });
            }
        }
    }
    out
}
