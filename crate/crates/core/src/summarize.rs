//! Candidate summaries: heuristic baselines, external predictions,
//! indirect-speech post-processing and full-summary concatenation.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::corpus::{Corpus, Dialog, SpeakerRole};
use crate::error::{Error, Result};
use crate::weaklabel::{HeuristicKind, DEFAULT_MIN_TOKENS};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MethodId {
    Lead,
    Long,
    LeadPostProcess,
    LongPostProcess,
    LeadBase,
    LongBase,
    LeadPostProcessBase,
    LongPostProcessBase,
    LeadMasked,
    LongMasked,
    /// Customer side from `lead_post_process`, agent side from
    /// `long_post_process`, concatenated.
    LeadLongPostProcess,
    /// The same concatenation built from the heuristics themselves.
    LeadLongPostProcessBase,
    External(String),
    /// Customer and agent outputs of an external set, concatenated.
    ExternalPersp(String),
}

const NAMED: [(&str, MethodId); 12] = [
    ("lead", MethodId::Lead),
    ("long", MethodId::Long),
    ("lead_post_process", MethodId::LeadPostProcess),
    ("long_post_process", MethodId::LongPostProcess),
    ("lead_base", MethodId::LeadBase),
    ("long_base", MethodId::LongBase),
    ("lead_post_process_base", MethodId::LeadPostProcessBase),
    ("long_post_process_base", MethodId::LongPostProcessBase),
    ("lead_masked", MethodId::LeadMasked),
    ("long_masked", MethodId::LongMasked),
    ("lead_long_post_process", MethodId::LeadLongPostProcess),
    (
        "lead_long_post_process_base",
        MethodId::LeadLongPostProcessBase,
    ),
];

/// Where a method's candidates come from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MethodKind {
    /// Applied directly to each test dialog.
    Heuristic {
        heuristic: HeuristicKind,
        post_process: bool,
    },
    /// Read from the prediction set named `source`.
    Predicted { source: String, post_process: bool },
    /// Full summary only: customer part from one method, agent part from
    /// another.
    Combined {
        customer: Box<MethodId>,
        agent: Box<MethodId>,
    },
}

impl MethodId {
    pub fn name(&self) -> String {
        match self {
            MethodId::External(n) => n.clone(),
            MethodId::ExternalPersp(n) => format!("{n}_persp"),
            named => NAMED
                .iter()
                .find(|(_, m)| m == named)
                .map(|(n, _)| n.to_string())
                .expect("every named method is in the table"),
        }
    }

    pub fn kind(&self) -> MethodKind {
        use HeuristicKind::{Lead, Long};
        let heuristic = |heuristic, post_process| MethodKind::Heuristic {
            heuristic,
            post_process,
        };
        let predicted = |source: &str, post_process| MethodKind::Predicted {
            source: source.to_string(),
            post_process,
        };
        let combined = |c: MethodId, a: MethodId| MethodKind::Combined {
            customer: Box::new(c),
            agent: Box::new(a),
        };
        match self {
            MethodId::LeadBase => heuristic(Lead, false),
            MethodId::LongBase => heuristic(Long, false),
            MethodId::LeadPostProcessBase => heuristic(Lead, true),
            MethodId::LongPostProcessBase => heuristic(Long, true),
            MethodId::Lead => predicted("lead", false),
            MethodId::Long => predicted("long", false),
            MethodId::LeadPostProcess => predicted("lead", true),
            MethodId::LongPostProcess => predicted("long", true),
            MethodId::LeadMasked => predicted("lead_masked", false),
            MethodId::LongMasked => predicted("long_masked", false),
            MethodId::External(n) => predicted(n, false),
            MethodId::LeadLongPostProcess => {
                combined(MethodId::LeadPostProcess, MethodId::LongPostProcess)
            }
            MethodId::LeadLongPostProcessBase => {
                combined(MethodId::LeadPostProcessBase, MethodId::LongPostProcessBase)
            }
            MethodId::ExternalPersp(n) => {
                combined(MethodId::External(n.clone()), MethodId::External(n.clone()))
            }
        }
    }

    /// Heuristic baselines ignore the training data entirely.
    pub fn is_base(&self) -> bool {
        match self.kind() {
            MethodKind::Heuristic { .. } => true,
            MethodKind::Combined { customer, agent } => customer.is_base() && agent.is_base(),
            MethodKind::Predicted { .. } => false,
        }
    }

    pub fn post_processes(&self) -> bool {
        matches!(
            self.kind(),
            MethodKind::Heuristic {
                post_process: true,
                ..
            } | MethodKind::Predicted {
                post_process: true,
                ..
            }
        )
    }

    /// Name of the concatenation of two per-perspective methods, if it has
    /// one of its own.
    pub fn compose(customer: &MethodId, agent: &MethodId) -> MethodId {
        match (customer, agent) {
            (MethodId::LeadPostProcess, MethodId::LongPostProcess) => MethodId::LeadLongPostProcess,
            (MethodId::LeadPostProcessBase, MethodId::LongPostProcessBase) => {
                MethodId::LeadLongPostProcessBase
            }
            (MethodId::External(c), MethodId::External(a)) if c == a => {
                MethodId::ExternalPersp(c.clone())
            }
            (c, a) if c == a => c.clone(),
            (c, a) => MethodId::External(format!("{}+{}", c.name(), a.name())),
        }
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for MethodId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(Error::invalid("empty method name"));
        }
        let lower = s.to_ascii_lowercase();
        if let Some((_, m)) = NAMED.iter().find(|(n, _)| *n == lower) {
            return Ok(m.clone());
        }
        match s.strip_suffix("_persp") {
            Some(base) if !base.is_empty() => Ok(MethodId::ExternalPersp(base.to_string())),
            _ => Ok(MethodId::External(s.to_string())),
        }
    }
}

impl Serialize for MethodId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for MethodId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Perspective {
    Customer,
    Agent,
    Full,
}

impl Perspective {
    pub fn role(self) -> Option<SpeakerRole> {
        match self {
            Perspective::Customer => Some(SpeakerRole::Customer),
            Perspective::Agent => Some(SpeakerRole::Agent),
            Perspective::Full => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Perspective::Customer => "customer",
            Perspective::Agent => "agent",
            Perspective::Full => "full",
        }
    }
}

impl From<SpeakerRole> for Perspective {
    fn from(role: SpeakerRole) -> Self {
        match role {
            SpeakerRole::Customer => Perspective::Customer,
            SpeakerRole::Agent => Perspective::Agent,
        }
    }
}

impl fmt::Display for Perspective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Perspective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "full" | "complete" => Ok(Perspective::Full),
            other => other.parse::<SpeakerRole>().map(Perspective::from),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub dialog_id: String,
    pub perspective: Perspective,
    pub method: MethodId,
    pub text: String,
    /// True only when the post-processing prefix was actually added.
    pub post_processed: bool,
}

/// The `*_base` summarizer: the Lead or Long utterance, verbatim.
pub fn heuristic_summarize(
    dialog: &Dialog,
    role: SpeakerRole,
    heuristic: HeuristicKind,
) -> Option<CandidateSummary> {
    heuristic_summarize_with(dialog, role, heuristic, DEFAULT_MIN_TOKENS)
}

pub fn heuristic_summarize_with(
    dialog: &Dialog,
    role: SpeakerRole,
    heuristic: HeuristicKind,
    min_tokens: usize,
) -> Option<CandidateSummary> {
    let utterance = heuristic.select(dialog, role, min_tokens)?;
    Some(CandidateSummary {
        dialog_id: dialog.id.clone(),
        perspective: role.into(),
        method: match heuristic {
            HeuristicKind::Lead => MethodId::LeadBase,
            HeuristicKind::Long => MethodId::LongBase,
        },
        text: utterance.text.clone(),
        post_processed: false,
    })
}

static OPENER_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^(the\s+)?(customer|agent)\b").expect("opener pattern"));

/// True when `text` already opens with `[The] customer` or `[The] agent`,
/// case-insensitively. Either role is accepted regardless of perspective.
pub fn has_speech_opener(text: &str) -> bool {
    OPENER_RE.is_match(text)
}

pub const DEFAULT_CUSTOMER_PREFIX: &str = "The customer says: ";
pub const DEFAULT_AGENT_PREFIX: &str = "The agent says: ";

/// Adds an indirect-speech clause to summaries that lack one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PostProcessor {
    customer_prefix: String,
    agent_prefix: String,
}

impl Default for PostProcessor {
    fn default() -> Self {
        PostProcessor {
            customer_prefix: DEFAULT_CUSTOMER_PREFIX.into(),
            agent_prefix: DEFAULT_AGENT_PREFIX.into(),
        }
    }
}

impl PostProcessor {
    /// Prefixes must themselves open with `[The] customer/agent`, otherwise
    /// post-processing would not be idempotent.
    pub fn new(
        customer_prefix: impl Into<String>,
        agent_prefix: impl Into<String>,
    ) -> Result<Self> {
        let p = PostProcessor {
            customer_prefix: customer_prefix.into(),
            agent_prefix: agent_prefix.into(),
        };
        for prefix in [&p.customer_prefix, &p.agent_prefix] {
            if !has_speech_opener(prefix) {
                return Err(Error::invalid(format!(
                    "prefix {prefix:?} does not start with \"[The] customer/agent\""
                )));
            }
        }
        Ok(p)
    }

    pub fn prefix(&self, role: SpeakerRole) -> &str {
        match role {
            SpeakerRole::Customer => &self.customer_prefix,
            SpeakerRole::Agent => &self.agent_prefix,
        }
    }

    pub fn apply(&self, text: &str, role: SpeakerRole) -> (String, bool) {
        if has_speech_opener(text) {
            (text.to_string(), false)
        } else {
            (format!("{}{}", self.prefix(role), text), true)
        }
    }

    pub fn apply_candidate(
        &self,
        candidate: CandidateSummary,
        method: MethodId,
    ) -> CandidateSummary {
        let Some(role) = candidate.perspective.role() else {
            return CandidateSummary {
                method,
                ..candidate
            };
        };
        let (text, fired) = self.apply(&candidate.text, role);
        CandidateSummary {
            text,
            post_processed: fired,
            method,
            ..candidate
        }
    }
}

pub fn post_process(text: &str, role: SpeakerRole) -> (String, bool) {
    PostProcessor::default().apply(text, role)
}

/// Fraction of candidates whose prefix rule fired.
pub fn post_process_rate(candidates: &[CandidateSummary]) -> Result<f64> {
    if candidates.is_empty() {
        return Err(Error::invalid(
            "post-process rate of an empty candidate list",
        ));
    }
    let fired = candidates.iter().filter(|c| c.post_processed).count();
    Ok(fired as f64 / candidates.len() as f64)
}

/// Customer text, one space, agent text.
pub fn concat_full(
    customer: &CandidateSummary,
    agent: &CandidateSummary,
) -> Result<CandidateSummary> {
    if customer.dialog_id != agent.dialog_id {
        return Err(Error::invalid(format!(
            "cannot concatenate summaries of {} and {}",
            customer.dialog_id, agent.dialog_id
        )));
    }
    if customer.perspective != Perspective::Customer || agent.perspective != Perspective::Agent {
        return Err(Error::invalid(
            "concatenation needs a customer and an agent summary",
        ));
    }
    if customer.text.trim().is_empty() || agent.text.trim().is_empty() {
        return Err(Error::InvalidDialog {
            dialog_id: customer.dialog_id.clone(),
            message: "cannot concatenate an empty summary".into(),
        });
    }
    Ok(CandidateSummary {
        dialog_id: customer.dialog_id.clone(),
        perspective: Perspective::Full,
        method: MethodId::compose(&customer.method, &agent.method),
        text: format!("{} {}", customer.text, agent.text),
        post_processed: customer.post_processed || agent.post_processed,
    })
}

// ---------------------------------------------------------------------------
// Prediction files

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionEntry {
    #[serde(default)]
    pub customer: Option<String>,
    #[serde(default)]
    pub agent: Option<String>,
    /// Output of a model trained on full summaries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full: Option<String>,
}

impl PredictionEntry {
    /// Text for one perspective; blank strings count as absent.
    pub fn text(&self, perspective: Perspective) -> Option<&str> {
        let text = match perspective {
            Perspective::Customer => self.customer.as_deref(),
            Perspective::Agent => self.agent.as_deref(),
            Perspective::Full => self.full.as_deref(),
        };
        text.filter(|t| !t.trim().is_empty())
    }
}

/// Outputs of one externally trained model for one (size, seed) cell.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PredictionSet {
    pub method: MethodId,
    pub training_size: usize,
    pub seed: u64,
    pub entries: BTreeMap<String, PredictionEntry>,
}

impl PredictionSet {
    /// Ids from `expected` with no entry in this set, in the given order.
    pub fn missing<'a>(&self, expected: impl IntoIterator<Item = &'a str>) -> Vec<String> {
        expected
            .into_iter()
            .filter(|id| !self.entries.contains_key(*id))
            .map(str::to_string)
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
struct PredictionHeader {
    method: MethodId,
    training_size: usize,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct PredictionLine {
    dialog_id: String,
    #[serde(flatten)]
    entry: PredictionEntry,
}

/// Reads a prediction file: a header object, then one object per dialog.
pub fn load_predictions<R: BufRead>(reader: R) -> Result<PredictionSet> {
    let mut header: Option<PredictionHeader> = None;
    let mut entries = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if header.is_none() {
            header = Some(serde_json::from_str(&line).map_err(|e| Error::parse(line_no, e))?);
            continue;
        }
        let row: PredictionLine =
            serde_json::from_str(&line).map_err(|e| Error::parse(line_no, e))?;
        if entries.insert(row.dialog_id.clone(), row.entry).is_some() {
            return Err(Error::DuplicateId(row.dialog_id));
        }
    }
    let header = header.ok_or_else(|| Error::parse(1, "missing prediction header"))?;
    Ok(PredictionSet {
        method: header.method,
        training_size: header.training_size,
        seed: header.seed,
        entries,
    })
}

pub fn write_predictions<W: Write>(set: &PredictionSet, mut writer: W) -> Result<()> {
    let header = PredictionHeader {
        method: set.method.clone(),
        training_size: set.training_size,
        seed: set.seed,
    };
    serde_json::to_writer(&mut writer, &header)?;
    writer.write_all(b"\n")?;
    for (id, entry) in &set.entries {
        let line = PredictionLine {
            dialog_id: id.clone(),
            entry: entry.clone(),
        };
        serde_json::to_writer(&mut writer, &line)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

/// Runs a heuristic baseline over `ids` and packages the result as a
/// prediction set (size 0, seed 0), both perspectives per line.
pub fn heuristic_predictions(
    corpus: &Corpus,
    ids: &[&str],
    method: &MethodId,
    post: &PostProcessor,
    min_tokens: usize,
) -> Result<PredictionSet> {
    let MethodKind::Heuristic {
        heuristic,
        post_process,
    } = method.kind()
    else {
        return Err(Error::invalid(format!(
            "{method} is not a heuristic baseline"
        )));
    };
    let mut entries = BTreeMap::new();
    for &id in ids {
        let dialog = corpus
            .dialog(id)
            .ok_or_else(|| Error::UnknownDialog(id.to_string()))?;
        let side = |role| {
            heuristic_summarize_with(dialog, role, heuristic, min_tokens).map(|c| {
                if post_process {
                    post.apply(&c.text, role).0
                } else {
                    c.text
                }
            })
        };
        entries.insert(
            id.to_string(),
            PredictionEntry {
                customer: side(SpeakerRole::Customer),
                agent: side(SpeakerRole::Agent),
                full: None,
            },
        );
    }
    Ok(PredictionSet {
        method: method.clone(),
        training_size: 0,
        seed: 0,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn candidate(id: &str, perspective: Perspective, text: &str, fired: bool) -> CandidateSummary {
        CandidateSummary {
            dialog_id: id.into(),
            perspective,
            method: MethodId::LeadBase,
            text: text.into(),
            post_processed: fired,
        }
    }

    #[test]
    fn method_names_round_trip() {
        for (name, m) in NAMED.iter() {
            assert_eq!(&m.name(), name);
            assert_eq!(&name.parse::<MethodId>().unwrap(), m);
        }
        assert_eq!(
            "pegasus".parse::<MethodId>().unwrap(),
            MethodId::External("pegasus".into())
        );
        assert_eq!(
            "pegasus_persp".parse::<MethodId>().unwrap(),
            MethodId::ExternalPersp("pegasus".into())
        );
        assert_eq!(
            MethodId::ExternalPersp("pegasus".into()).name(),
            "pegasus_persp"
        );
    }

    #[test]
    fn base_classification() {
        assert!(MethodId::LeadPostProcessBase.is_base());
        assert!(MethodId::LeadLongPostProcessBase.is_base());
        assert!(!MethodId::LeadPostProcess.is_base());
        assert!(!MethodId::External("x".into()).is_base());
    }

    #[test]
    fn post_process_examples() {
        assert_eq!(
            post_process("Customer asks about a refund.", SpeakerRole::Customer),
            ("Customer asks about a refund.".into(), false)
        );
        assert_eq!(
            post_process("The agent suggested restarting.", SpeakerRole::Agent),
            ("The agent suggested restarting.".into(), false)
        );
        assert_eq!(
            post_process("cannot attach files to email.", SpeakerRole::Customer),
            (
                "The customer says: cannot attach files to email.".into(),
                true
            )
        );
        assert!(has_speech_opener("the   AGENT, then"));
        assert!(!has_speech_opener("Customers are great"));
        assert!(!has_speech_opener("Then the customer"));
    }

    #[test]
    fn custom_prefix_must_be_detectable() {
        assert!(PostProcessor::new("The customer asks: ", "The agent answers: ").is_ok());
        assert!(PostProcessor::new("User: ", "The agent answers: ").is_err());
    }

    #[test]
    fn rate_counts_fired() {
        let mut cs: Vec<_> = (0..4)
            .map(|i| candidate(&i.to_string(), Perspective::Customer, "x", i == 0))
            .collect();
        assert_eq!(post_process_rate(&cs).unwrap(), 0.25);
        cs.iter_mut().for_each(|c| c.post_processed = true);
        assert_eq!(post_process_rate(&cs).unwrap(), 1.0);
        cs.iter_mut().for_each(|c| c.post_processed = false);
        assert_eq!(post_process_rate(&cs).unwrap(), 0.0);
        assert!(post_process_rate(&[]).is_err());
    }

    #[test]
    fn concat_examples() {
        let c = candidate("d", Perspective::Customer, "The customer says: X.", true);
        let a = candidate("d", Perspective::Agent, "The agent says: Y.", true);
        let full = concat_full(&c, &a).unwrap();
        assert_eq!(full.text, "The customer says: X. The agent says: Y.");
        assert_eq!(full.perspective, Perspective::Full);

        let other = candidate("e", Perspective::Agent, "Y", false);
        assert!(concat_full(&c, &other).is_err());
        let empty = candidate("d", Perspective::Customer, "", false);
        assert!(concat_full(&empty, &a).is_err());
    }

    #[test]
    fn concat_composes_method_names() {
        let mut c = candidate("d", Perspective::Customer, "x", false);
        let mut a = candidate("d", Perspective::Agent, "y", false);
        c.method = MethodId::LeadPostProcess;
        a.method = MethodId::LongPostProcess;
        assert_eq!(
            concat_full(&c, &a).unwrap().method,
            MethodId::LeadLongPostProcess
        );
    }

    #[test]
    fn prediction_file_parsing() {
        let text = concat!(
            r#"{"method":"pegasus","training_size":16,"seed":3}"#,
            "\n",
            r#"{"dialog_id":"a","customer":"c says","agent":null}"#,
            "\n",
            r#"{"dialog_id":"b","customer":"x","agent":"y"}"#,
            "\n",
        );
        let set = load_predictions(text.as_bytes()).unwrap();
        assert_eq!(set.method, MethodId::External("pegasus".into()));
        assert_eq!((set.training_size, set.seed), (16, 3));
        assert_eq!(set.entries["a"].text(Perspective::Agent), None);
        assert_eq!(set.missing(["a", "b", "c", "d", "e"]), ["c", "d", "e"]);

        let mut buf = Vec::new();
        write_predictions(&set, &mut buf).unwrap();
        assert_eq!(load_predictions(buf.as_slice()).unwrap(), set);

        let dup = format!(
            "{text}{}\n",
            r#"{"dialog_id":"a","customer":"again","agent":"y"}"#
        );
        assert!(
            matches!(load_predictions(dup.as_bytes()), Err(Error::DuplicateId(id)) if id == "a")
        );
        assert!(matches!(
            load_predictions(b"{\"method\":1}\n".as_slice()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    proptest! {
        #[test]
        fn post_process_is_idempotent(text in "\\PC{1,40}", cust in any::<bool>()) {
            let role = if cust { SpeakerRole::Customer } else { SpeakerRole::Agent };
            let (once, fired) = post_process(&text, role);
            prop_assert_eq!(fired, !has_speech_opener(&text));
            prop_assert!(has_speech_opener(&once));
            let (twice, again) = post_process(&once, role);
            prop_assert!(!again);
            prop_assert_eq!(twice, once);
        }

        #[test]
        fn concat_length(c in "[a-z ]{1,30}[a-z]", a in "[a-z]{1,30}") {
            let full = concat_full(
                &candidate("d", Perspective::Customer, &c, false),
                &candidate("d", Perspective::Agent, &a, false),
            ).unwrap();
            prop_assert_eq!(full.text.len(), c.len() + 1 + a.len());
        }

        #[test]
        fn rate_ignores_order(flags in proptest::collection::vec(any::<bool>(), 1..40), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let mut cs: Vec<_> = flags.iter().map(|&f| candidate("d", Perspective::Agent, "t", f)).collect();
            let before = post_process_rate(&cs).unwrap();
            cs.shuffle(&mut crate::seeded_rng(seed));
            prop_assert_eq!(post_process_rate(&cs).unwrap(), before);
        }
    }
}
