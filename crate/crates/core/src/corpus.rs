//! Dialog data model, the canonical JSONL format and corpus preparation.
//!
//! One dialog per line:
//!
//! ```text
//! {"id":"d1","utterances":[{"role":"customer","text":"..."},{"role":"agent","text":"..."}],
//!  "gold":{"customer":"...","agent":"..."},"split":"test"}
//! ```
//!
//! `gold` and `split` are optional. Utterance indices are implicit by position.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Read, Write};
use std::str::FromStr;
use std::sync::LazyLock;

use rand::seq::SliceRandom;
use rand::Rng;
use regex::Regex;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeakerRole {
    Customer,
    Agent,
}

impl SpeakerRole {
    pub const ALL: [SpeakerRole; 2] = [SpeakerRole::Customer, SpeakerRole::Agent];

    pub fn as_str(self) -> &'static str {
        match self {
            SpeakerRole::Customer => "customer",
            SpeakerRole::Agent => "agent",
        }
    }
}

impl fmt::Display for SpeakerRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SpeakerRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "customer" | "user" => Ok(SpeakerRole::Customer),
            "agent" => Ok(SpeakerRole::Agent),
            other => Err(Error::invalid(format!("unknown speaker role {other:?}"))),
        }
    }
}

/// Number of whitespace-delimited tokens. This is the token notion used by
/// the Lead minimum-length rule and the Long comparison.
pub fn token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Utterance {
    pub index: usize,
    pub role: SpeakerRole,
    pub text: String,
    pub token_count: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dialog {
    pub id: String,
    pub utterances: Vec<Utterance>,
}

impl Dialog {
    /// Builds a dialog from role-tagged texts, assigning consecutive indices.
    /// Rejects an empty dialog and utterances without any visible text.
    pub fn new<I, S>(id: impl Into<String>, turns: I) -> Result<Self>
    where
        I: IntoIterator<Item = (SpeakerRole, S)>,
        S: Into<String>,
    {
        let id = id.into();
        let mut utterances = Vec::new();
        for (index, (role, text)) in turns.into_iter().enumerate() {
            let text = text.into();
            let tokens = token_count(&text);
            if tokens == 0 {
                return Err(Error::InvalidDialog {
                    dialog_id: id,
                    message: format!("utterance {index} has empty text"),
                });
            }
            utterances.push(Utterance {
                index,
                role,
                text,
                token_count: tokens,
            });
        }
        if utterances.is_empty() {
            return Err(Error::InvalidDialog {
                dialog_id: id,
                message: "dialog has no utterances".into(),
            });
        }
        Ok(Dialog { id, utterances })
    }

    pub fn turns(&self, role: SpeakerRole) -> impl Iterator<Item = &Utterance> {
        self.utterances.iter().filter(move |u| u.role == role)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GoldSummary {
    pub dialog_id: String,
    pub customer_part: String,
    pub agent_part: String,
}

impl GoldSummary {
    pub fn new(
        dialog_id: impl Into<String>,
        customer_part: impl Into<String>,
        agent_part: impl Into<String>,
    ) -> Result<Self> {
        let gold = GoldSummary {
            dialog_id: dialog_id.into(),
            customer_part: customer_part.into(),
            agent_part: agent_part.into(),
        };
        if gold.customer_part.trim().is_empty() || gold.agent_part.trim().is_empty() {
            return Err(Error::InvalidDialog {
                dialog_id: gold.dialog_id,
                message: "gold summary has an empty part".into(),
            });
        }
        Ok(gold)
    }

    pub fn part(&self, role: SpeakerRole) -> &str {
        match role {
            SpeakerRole::Customer => &self.customer_part,
            SpeakerRole::Agent => &self.agent_part,
        }
    }

    /// Customer part, one space, agent part.
    pub fn full(&self) -> String {
        format!("{} {}", self.customer_part, self.agent_part)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Split {
    #[serde(rename = "train")]
    Train,
    #[serde(rename = "val", alias = "validation")]
    Validation,
    #[serde(rename = "test")]
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "valid" | "validation" | "dev" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split {other:?}"))),
        }
    }
}

/// Dialogs plus optional gold summaries and split assignment, all keyed by
/// dialog id.
#[derive(Clone, Debug, Default)]
pub struct Corpus {
    dialogs: Vec<Dialog>,
    positions: HashMap<String, usize>,
    gold: BTreeMap<String, GoldSummary>,
    split: BTreeMap<String, Split>,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.dialogs == other.dialogs && self.gold == other.gold && self.split == other.split
    }
}

impl Corpus {
    pub fn new(dialogs: Vec<Dialog>) -> Result<Self> {
        let mut positions = HashMap::with_capacity(dialogs.len());
        for (i, dialog) in dialogs.iter().enumerate() {
            if positions.insert(dialog.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(dialog.id.clone()));
            }
        }
        Ok(Corpus {
            dialogs,
            positions,
            gold: BTreeMap::new(),
            split: BTreeMap::new(),
        })
    }

    pub fn dialogs(&self) -> &[Dialog] {
        &self.dialogs
    }

    pub fn len(&self) -> usize {
        self.dialogs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dialogs.is_empty()
    }

    pub fn dialog(&self, id: &str) -> Option<&Dialog> {
        self.positions.get(id).map(|&i| &self.dialogs[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.positions.contains_key(id)
    }

    pub fn gold(&self, id: &str) -> Option<&GoldSummary> {
        self.gold.get(id)
    }

    pub fn has_gold(&self) -> bool {
        !self.gold.is_empty()
    }

    pub fn set_gold(&mut self, gold: GoldSummary) -> Result<()> {
        if !self.contains(&gold.dialog_id) {
            return Err(Error::UnknownDialog(gold.dialog_id));
        }
        self.gold.insert(gold.dialog_id.clone(), gold);
        Ok(())
    }

    pub fn split_of(&self, id: &str) -> Option<Split> {
        self.split.get(id).copied()
    }

    pub fn has_split(&self) -> bool {
        !self.split.is_empty()
    }

    /// Replaces the split assignment. Every dialog must be assigned exactly
    /// once and every key must name a dialog of this corpus.
    pub fn set_split(&mut self, split: BTreeMap<String, Split>) -> Result<()> {
        if let Some(unknown) = split.keys().find(|id| !self.contains(id)) {
            return Err(Error::UnknownDialog(unknown.clone()));
        }
        if let Some(missing) = self.dialogs.iter().find(|d| !split.contains_key(&d.id)) {
            return Err(Error::InvalidDialog {
                dialog_id: missing.id.clone(),
                message: "no split assignment".into(),
            });
        }
        self.split = split;
        Ok(())
    }

    /// Ids assigned to `split`, in corpus order.
    pub fn ids_in(&self, split: Split) -> Vec<&str> {
        self.dialogs
            .iter()
            .filter(|d| self.split.get(&d.id) == Some(&split))
            .map(|d| d.id.as_str())
            .collect()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.dialogs.iter().map(|d| d.id.as_str())
    }
}

#[derive(Serialize, Deserialize)]
struct DialogRecord {
    id: String,
    utterances: Vec<UtteranceRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gold: Option<GoldRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<Split>,
}

#[derive(Serialize, Deserialize)]
struct UtteranceRecord {
    role: SpeakerRole,
    text: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldRecord {
    pub customer: String,
    pub agent: String,
}

/// Reads the canonical dialog JSONL. Blank lines are ignored; line numbers in
/// errors are 1-based.
pub fn parse_dialog_corpus<R: BufRead>(reader: R) -> Result<Corpus> {
    let mut dialogs = Vec::new();
    let mut golds = Vec::new();
    let mut splits = BTreeMap::new();
    let mut seen = HashSet::new();

    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DialogRecord =
            serde_json::from_str(&line).map_err(|e| Error::parse(line_no, e))?;
        if !seen.insert(record.id.clone()) {
            return Err(Error::DuplicateId(record.id));
        }
        let dialog = Dialog::new(
            record.id.clone(),
            record.utterances.into_iter().map(|u| (u.role, u.text)),
        )?;
        if let Some(g) = record.gold {
            golds.push(GoldSummary::new(record.id.clone(), g.customer, g.agent)?);
        }
        if let Some(s) = record.split {
            splits.insert(record.id, s);
        }
        dialogs.push(dialog);
    }

    let mut corpus = Corpus::new(dialogs)?;
    for g in golds {
        corpus.set_gold(g)?;
    }
    if !splits.is_empty() {
        corpus.set_split(splits)?;
    }
    Ok(corpus)
}

pub fn write_dialog_corpus<W: Write>(corpus: &Corpus, mut writer: W) -> Result<()> {
    for dialog in corpus.dialogs() {
        let record = DialogRecord {
            id: dialog.id.clone(),
            utterances: dialog
                .utterances
                .iter()
                .map(|u| UtteranceRecord {
                    role: u.role,
                    text: u.text.clone(),
                })
                .collect(),
            gold: corpus.gold(&dialog.id).map(|g| GoldRecord {
                customer: g.customer_part.clone(),
                agent: g.agent_part.clone(),
            }),
            split: corpus.split_of(&dialog.id),
        };
        serde_json::to_writer(&mut writer, &record)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Tweet threads

/// One row of the customer-support tweet table.
#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
pub struct TweetRow {
    #[serde(deserialize_with = "de_tweet_id")]
    pub tweet_id: String,
    #[serde(default)]
    pub author_id: String,
    #[serde(deserialize_with = "de_flag")]
    pub inbound: bool,
    #[serde(default)]
    pub created_at: String,
    pub text: String,
    #[serde(default)]
    pub response_tweet_id: String,
    #[serde(default, deserialize_with = "de_tweet_id")]
    pub in_response_to_tweet_id: String,
}

fn normalize_id(raw: &str) -> String {
    // Spreadsheet exports turn integer ids into floats ("119237.0").
    let id = raw.trim();
    id.strip_suffix(".0").unwrap_or(id).to_string()
}

fn de_tweet_id<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<String, D::Error> {
    let raw = String::deserialize(d)?;
    Ok(normalize_id(&raw))
}

fn de_flag<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<bool, D::Error> {
    let raw = String::deserialize(d)?;
    match raw.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(serde::de::Error::custom(format!(
            "bad inbound flag {other:?}"
        ))),
    }
}

/// Reads the tweet CSV (RFC 4180 quoting, header row required).
pub fn read_tweet_csv<R: Read>(reader: R) -> Result<Vec<TweetRow>> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let mut rows = Vec::new();
    for (i, row) in csv.deserialize().enumerate() {
        // +2: header line and 1-based numbering
        let row: TweetRow = row.map_err(|e| Error::parse(i + 2, e))?;
        rows.push(row);
    }
    Ok(rows)
}

static URL_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(?:https?://|www\.)\S+").expect("url pattern"));
static MENTION_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"@\w+").expect("mention pattern"));

/// URLs become `http://url`, mentions become `@user`, whitespace runs
/// collapse to a single space.
pub fn clean_tweet_text(text: &str) -> String {
    let text = URL_RE.replace_all(text, "http://url");
    let text = MENTION_RE.replace_all(&text, "@user");
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Reconstruction {
    pub dialogs: Vec<Dialog>,
    /// Reply cycles found; tweets on or below a cycle are skipped.
    pub cycles: usize,
    /// Distinct tweet ids referenced but absent from the table.
    pub gaps: usize,
    /// Chains dropped for having a single role or fewer than two turns.
    pub dropped: usize,
}

/// Follows reply chains from every root tweet to every leaf. Each chain with
/// both roles and at least two turns (after merging consecutive same-role
/// tweets) becomes a dialog named after its root tweet. When a root fans out
/// into several surviving chains, the second and later ones get `_<k>`
/// suffixes in depth-first order.
pub fn reconstruct_threads(rows: &[TweetRow]) -> Reconstruction {
    let mut by_id: HashMap<&str, usize> = HashMap::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        by_id.entry(row.tweet_id.as_str()).or_insert(i);
    }

    let mut missing: BTreeSet<&str> = BTreeSet::new();
    let mut parent: Vec<Option<usize>> = vec![None; rows.len()];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); rows.len()];
    let mut roots = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        if by_id[row.tweet_id.as_str()] != i {
            continue; // repeated tweet id, first row wins
        }
        let up = row.in_response_to_tweet_id.as_str();
        if up.is_empty() {
            roots.push(i);
        } else if let Some(&p) = by_id.get(up) {
            parent[i] = Some(p);
            children[p].push(i);
        } else {
            missing.insert(up);
        }
        for down in row.response_tweet_id.split(',') {
            let down = down.trim();
            let down = down.strip_suffix(".0").unwrap_or(down);
            if !down.is_empty() && !by_id.contains_key(down) {
                missing.insert(down);
            }
        }
    }

    let mut out = Reconstruction {
        gaps: missing.len(),
        cycles: count_cycles(&parent),
        ..Default::default()
    };

    for &root in &roots {
        let mut emitted = 0usize;
        // Iterative DFS over root-to-leaf paths.
        let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
        let mut path: Vec<usize> = vec![root];
        while let Some(&mut (node, ref mut next)) = stack.last_mut() {
            if children[node].is_empty() {
                match chain_to_dialog(rows, &path, &rows[root].tweet_id, emitted) {
                    Some(d) => {
                        emitted += 1;
                        out.dialogs.push(d);
                    }
                    None => out.dropped += 1,
                }
                stack.pop();
                path.pop();
            } else if *next < children[node].len() {
                let child = children[node][*next];
                *next += 1;
                stack.push((child, 0));
                path.push(child);
            } else {
                stack.pop();
                path.pop();
            }
        }
    }
    out
}

/// Counts cycles in the parent graph (each tweet has at most one parent, so
/// this is cycle detection on a functional graph).
fn count_cycles(parent: &[Option<usize>]) -> usize {
    const UNSEEN: usize = usize::MAX;
    let mut walk_of = vec![UNSEEN; parent.len()];
    let mut cycles = 0;
    for start in 0..parent.len() {
        if walk_of[start] != UNSEEN {
            continue;
        }
        let mut node = start;
        loop {
            if walk_of[node] == start {
                cycles += 1;
                break;
            }
            if walk_of[node] != UNSEEN {
                break;
            }
            walk_of[node] = start;
            match parent[node] {
                Some(p) => node = p,
                None => break,
            }
        }
    }
    cycles
}

fn chain_to_dialog(
    rows: &[TweetRow],
    path: &[usize],
    root_id: &str,
    emitted: usize,
) -> Option<Dialog> {
    let mut turns: Vec<(SpeakerRole, String)> = Vec::new();
    for &i in path {
        let text = clean_tweet_text(&rows[i].text);
        if text.is_empty() {
            continue;
        }
        let role = if rows[i].inbound {
            SpeakerRole::Customer
        } else {
            SpeakerRole::Agent
        };
        match turns.last_mut() {
            Some((last, merged)) if *last == role => {
                merged.push(' ');
                merged.push_str(&text);
            }
            _ => turns.push((role, text)),
        }
    }
    let both_roles = SpeakerRole::ALL
        .iter()
        .all(|r| turns.iter().any(|(role, _)| role == r));
    if turns.len() < 2 || !both_roles {
        return None;
    }
    let id = if emitted == 0 {
        root_id.to_string()
    } else {
        format!("{root_id}_{emitted}")
    };
    Dialog::new(id, turns).ok()
}

// ---------------------------------------------------------------------------
// Gold selection and splits

/// One abstractive reference with both perspective parts.
pub type SummaryCandidate = GoldRecord;

/// Candidate references for one dialog, as read from a gold-candidates file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldCandidates {
    pub dialog_id: String,
    pub candidates: Vec<SummaryCandidate>,
}

/// Picks one candidate uniformly with `rng`.
pub fn select_gold<R: Rng + ?Sized>(
    dialog_id: &str,
    candidates: &[SummaryCandidate],
    rng: &mut R,
) -> Result<GoldSummary> {
    if candidates.is_empty() {
        return Err(Error::InvalidDialog {
            dialog_id: dialog_id.to_string(),
            message: "no gold summary candidates".into(),
        });
    }
    let chosen = &candidates[rng.random_range(0..candidates.len())];
    GoldSummary::new(dialog_id, chosen.customer.clone(), chosen.agent.clone())
}

pub fn read_gold_candidates<R: BufRead>(reader: R) -> Result<Vec<GoldCandidates>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse(i + 1, e))?);
    }
    Ok(out)
}

/// Selects one gold per entry, drawing from a single generator in file order.
pub fn attach_gold<R: Rng + ?Sized>(
    corpus: &mut Corpus,
    entries: &[GoldCandidates],
    rng: &mut R,
) -> Result<()> {
    for entry in entries {
        let gold = select_gold(&entry.dialog_id, &entry.candidates, rng)?;
        corpus.set_gold(gold)?;
    }
    Ok(())
}

/// Train/validation/test proportions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.8,
            validation: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    /// Set sizes for `n` dialogs: floor for train and validation, the rest
    /// to test.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        // The epsilon keeps products like 0.7 * 10 from flooring to 6.
        let train = (self.train * n as f64 + 1e-9).floor() as usize;
        let validation = (self.validation * n as f64 + 1e-9).floor() as usize;
        let train = train.min(n);
        let validation = validation.min(n - train);
        (train, validation, n - train - validation)
    }
}

pub fn split_corpus<R: Rng + ?Sized>(
    mut corpus: Corpus,
    ratios: SplitRatios,
    rng: &mut R,
) -> Result<Corpus> {
    let sum = ratios.train + ratios.validation + ratios.test;
    let in_range = [ratios.train, ratios.validation, ratios.test]
        .iter()
        .all(|r| (0.0..=1.0).contains(r));
    if !in_range || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split ratios must be in [0,1] and sum to 1, got {sum}"
        )));
    }
    if corpus.len() < 3 {
        return Err(Error::invalid(format!(
            "need at least 3 dialogs to split, got {}",
            corpus.len()
        )));
    }
    let mut ids: Vec<String> = corpus.ids().map(str::to_string).collect();
    ids.shuffle(rng);
    let (train, validation, _) = ratios.sizes(ids.len());
    let split = ids
        .into_iter()
        .enumerate()
        .map(|(i, id)| {
            let s = if i < train {
                Split::Train
            } else if i < train + validation {
                Split::Validation
            } else {
                Split::Test
            };
            (id, s)
        })
        .collect();
    corpus.set_split(split)?;
    Ok(corpus)
}

#[derive(Deserialize, Serialize)]
struct SplitRow {
    dialog_id: String,
    split: String,
}

/// Reads a `dialog_id,split` CSV.
pub fn read_split_file<R: Read>(reader: R) -> Result<BTreeMap<String, Split>> {
    let mut csv = csv::Reader::from_reader(reader);
    let mut out = BTreeMap::new();
    for (i, row) in csv.deserialize().enumerate() {
        let row: SplitRow = row.map_err(|e| Error::parse(i + 2, e))?;
        let split = row.split.parse().map_err(|e| Error::parse(i + 2, e))?;
        if out.insert(row.dialog_id.clone(), split).is_some() {
            return Err(Error::DuplicateId(row.dialog_id));
        }
    }
    Ok(out)
}

pub fn write_split_file<W: Write>(corpus: &Corpus, writer: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    for id in corpus.ids() {
        if let Some(s) = corpus.split_of(id) {
            csv.serialize(SplitRow {
                dialog_id: id.to_string(),
                split: s.as_str().to_string(),
            })?;
        }
    }
    csv.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;
    use proptest::prelude::*;

    fn tweet(id: &str, inbound: bool, text: &str, parent: &str) -> TweetRow {
        TweetRow {
            tweet_id: id.into(),
            author_id: if inbound { "c".into() } else { "a".into() },
            inbound,
            created_at: String::new(),
            text: text.into(),
            response_tweet_id: String::new(),
            in_response_to_tweet_id: parent.into(),
        }
    }

    fn corpus_of(n: usize) -> Corpus {
        let dialogs = (0..n)
            .map(|i| {
                Dialog::new(
                    format!("d{i}"),
                    [
                        (SpeakerRole::Customer, "hello there"),
                        (SpeakerRole::Agent, "hi"),
                    ],
                )
                .unwrap()
            })
            .collect();
        Corpus::new(dialogs).unwrap()
    }

    #[test]
    fn parses_two_utterance_record() {
        let line = r#"{"id":"d1","utterances":[{"role":"customer","text":"my phone broke"},{"role":"agent","text":"sorry to hear"}]}"#;
        let corpus = parse_dialog_corpus(line.as_bytes()).unwrap();
        assert_eq!(corpus.len(), 1);
        let d = &corpus.dialogs()[0];
        assert_eq!(d.utterances.len(), 2);
        assert_eq!(d.utterances[0].index, 0);
        assert_eq!(d.utterances[1].index, 1);
        assert_eq!(d.utterances[0].token_count, 3);
        assert_eq!(d.utterances[1].role, SpeakerRole::Agent);
    }

    #[test]
    fn empty_utterance_names_dialog() {
        let line = r#"{"id":"bad7","utterances":[{"role":"customer","text":""}]}"#;
        match parse_dialog_corpus(line.as_bytes()) {
            Err(Error::InvalidDialog { dialog_id, .. }) => assert_eq!(dialog_id, "bad7"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_id_rejected() {
        let text = concat!(
            r#"{"id":"d1","utterances":[{"role":"customer","text":"a"}]}"#,
            "\n",
            r#"{"id":"d1","utterances":[{"role":"agent","text":"b"}]}"#,
        );
        assert!(matches!(
            parse_dialog_corpus(text.as_bytes()),
            Err(Error::DuplicateId(id)) if id == "d1"
        ));
    }

    #[test]
    fn malformed_line_carries_line_number() {
        let text = concat!(
            r#"{"id":"d1","utterances":[{"role":"customer","text":"a"}]}"#,
            "\n\n",
            "{not json\n"
        );
        assert!(matches!(
            parse_dialog_corpus(text.as_bytes()),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn partial_split_is_rejected() {
        let text = concat!(
            r#"{"id":"d1","utterances":[{"role":"customer","text":"a"}],"split":"train"}"#,
            "\n",
            r#"{"id":"d2","utterances":[{"role":"agent","text":"b"}]}"#,
        );
        assert!(parse_dialog_corpus(text.as_bytes()).is_err());
    }

    #[test]
    fn alternating_chain_keeps_three_turns() {
        let rows = vec![
            tweet("1", true, "my order is late", ""),
            tweet("2", false, "@cust sorry, DM us", "1"),
            tweet("3", true, "done", "2"),
        ];
        let r = reconstruct_threads(&rows);
        assert_eq!(r.dialogs.len(), 1);
        assert_eq!(r.dialogs[0].id, "1");
        assert_eq!(r.dialogs[0].utterances.len(), 3);
        assert_eq!(r.dialogs[0].utterances[1].text, "@user sorry, DM us");
    }

    #[test]
    fn same_role_tweets_merge() {
        let rows = vec![
            tweet("1", true, "first part", ""),
            tweet("2", true, "second  part", "1"),
            tweet("3", false, "ok", "2"),
        ];
        let r = reconstruct_threads(&rows);
        assert_eq!(r.dialogs.len(), 1);
        let u = &r.dialogs[0].utterances;
        assert_eq!(u.len(), 2);
        assert_eq!(u[0].text, "first part second part");
        assert_eq!(u[0].role, SpeakerRole::Customer);
    }

    #[test]
    fn lone_root_is_dropped() {
        let rows = vec![tweet("1", true, "anyone there?", "")];
        let r = reconstruct_threads(&rows);
        assert!(r.dialogs.is_empty());
        assert_eq!(r.dropped, 1);
    }

    #[test]
    fn cycles_and_gaps_are_counted() {
        let mut rows = vec![
            tweet("1", true, "a b", ""),
            tweet("2", false, "c d", "1"),
            // 5 <-> 6 form a cycle with no root
            tweet("5", true, "x", "6"),
            tweet("6", false, "y", "5"),
            // 9 answers a tweet that is not in the table
            tweet("9", false, "z", "404"),
        ];
        rows[1].response_tweet_id = "3".into();
        let r = reconstruct_threads(&rows);
        assert_eq!(r.cycles, 1);
        assert_eq!(r.gaps, 2);
        assert_eq!(r.dialogs.len(), 1);
        assert_eq!(r.dialogs[0].utterances.len(), 2);
    }

    #[test]
    fn branching_root_yields_suffixed_ids() {
        let rows = vec![
            tweet("1", true, "help", ""),
            tweet("2", false, "answer one", "1"),
            tweet("3", false, "answer two", "1"),
        ];
        let r = reconstruct_threads(&rows);
        let ids: Vec<_> = r.dialogs.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, ["1", "1_1"]);
    }

    #[test]
    fn cleaning_rules() {
        assert_eq!(
            clean_tweet_text("@AppleSupport  see https://t.co/xyz\n now"),
            "@user see http://url now"
        );
    }

    #[test]
    fn float_ids_are_normalized() {
        let csv = "tweet_id,author_id,inbound,created_at,text,response_tweet_id,in_response_to_tweet_id\n\
                   2,AmazonHelp,False,x,\"hi, there\",,1.0\n";
        let rows = read_tweet_csv(csv.as_bytes()).unwrap();
        assert_eq!(rows[0].in_response_to_tweet_id, "1");
        assert_eq!(rows[0].text, "hi, there");
        assert!(!rows[0].inbound);
    }

    #[test]
    fn select_gold_singleton_and_empty() {
        let one = vec![SummaryCandidate {
            customer: "c".into(),
            agent: "a".into(),
        }];
        for seed in 0..10 {
            let g = select_gold("d", &one, &mut seeded_rng(seed)).unwrap();
            assert_eq!(g.customer_part, "c");
        }
        assert!(select_gold("d", &[], &mut seeded_rng(0)).is_err());
    }

    #[test]
    fn select_gold_pinned_choice() {
        let three: Vec<_> = (0..3)
            .map(|i| SummaryCandidate {
                customer: format!("c{i}"),
                agent: format!("a{i}"),
            })
            .collect();
        let pick = |seed| {
            select_gold("d", &three, &mut seeded_rng(seed))
                .unwrap()
                .customer_part
        };
        let picks: Vec<String> = (0..8).map(pick).collect();
        assert_eq!(picks, (0..8).map(pick).collect::<Vec<_>>());
        // Recorded once with ChaCha8 seeded from 0..8; regression fixture.
        assert_eq!(picks, PINNED_PICKS);
    }

    const PINNED_PICKS: [&str; 8] = ["c1", "c1", "c0", "c0", "c2", "c0", "c0", "c0"];

    #[test]
    fn split_sizes() {
        let r = SplitRatios::default();
        assert_eq!(r.sizes(1100), (880, 110, 110));
        assert_eq!(r.sizes(10), (8, 1, 1));
        assert_eq!(r.sizes(3), (2, 0, 1));
    }

    #[test]
    fn split_errors() {
        let bad = SplitRatios {
            train: 0.5,
            validation: 0.1,
            test: 0.1,
        };
        assert!(split_corpus(corpus_of(10), bad, &mut seeded_rng(0)).is_err());
        assert!(split_corpus(corpus_of(2), SplitRatios::default(), &mut seeded_rng(0)).is_err());
    }

    #[test]
    fn split_is_deterministic() {
        let a = split_corpus(corpus_of(50), SplitRatios::default(), &mut seeded_rng(7)).unwrap();
        let b = split_corpus(corpus_of(50), SplitRatios::default(), &mut seeded_rng(7)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.ids_in(Split::Test).len(), 5);
    }

    #[test]
    fn split_file_round_trip() {
        let corpus =
            split_corpus(corpus_of(12), SplitRatios::default(), &mut seeded_rng(3)).unwrap();
        let mut buf = Vec::new();
        write_split_file(&corpus, &mut buf).unwrap();
        let split = read_split_file(buf.as_slice()).unwrap();
        let mut other = corpus_of(12);
        other.set_split(split).unwrap();
        assert_eq!(other, corpus);
    }

    proptest! {
        #[test]
        fn split_partitions_every_dialog(n in 3usize..400, seed in any::<u64>()) {
            let corpus = split_corpus(corpus_of(n), SplitRatios::default(), &mut seeded_rng(seed)).unwrap();
            let train = corpus.ids_in(Split::Train).len();
            let val = corpus.ids_in(Split::Validation).len();
            let test = corpus.ids_in(Split::Test).len();
            prop_assert_eq!(train + val + test, n);
            prop_assert_eq!(train, (n * 8) / 10);
            prop_assert_eq!(val, n / 10);
        }

        #[test]
        fn reconstructed_roles_alternate(
            chain in proptest::collection::vec((any::<bool>(), "[a-z]{1,6}( [a-z]{1,6}){0,3}"), 1..12)
        ) {
            let rows: Vec<_> = chain
                .iter()
                .enumerate()
                .map(|(i, (inbound, text))| {
                    let parent = if i == 0 { String::new() } else { (i - 1).to_string() };
                    tweet(&i.to_string(), *inbound, text, &parent)
                })
                .collect();
            for d in reconstruct_threads(&rows).dialogs {
                for w in d.utterances.windows(2) {
                    prop_assert_ne!(w[0].role, w[1].role);
                }
            }
        }

        #[test]
        fn jsonl_round_trip(
            turns in proptest::collection::vec(
                proptest::collection::vec((any::<bool>(), "\\PC*[a-zA-Z]\\PC*"), 1..6), 1..6),
            with_gold in any::<bool>(),
        ) {
            let dialogs: Vec<_> = turns
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    Dialog::new(
                        format!("d{i}"),
                        t.iter().map(|(c, s)| {
                            (if *c { SpeakerRole::Customer } else { SpeakerRole::Agent }, s.clone())
                        }),
                    )
                    .unwrap()
                })
                .collect();
            let mut corpus = Corpus::new(dialogs).unwrap();
            if with_gold {
                corpus.set_gold(GoldSummary::new("d0", "needs help", "helped").unwrap()).unwrap();
            }
            let mut buf = Vec::new();
            write_dialog_corpus(&corpus, &mut buf).unwrap();
            let back = parse_dialog_corpus(buf.as_slice()).unwrap();
            prop_assert_eq!(back, corpus);
        }
    }
}
