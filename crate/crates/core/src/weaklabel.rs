//! Lead and Long weak labeling.
//!
//! A weak pair is a (dialog, utterance) example: the source is the dialog
//! flattened to `role: text` lines, the target is one utterance of the
//! requested side picked by a heuristic. With masking, the target line is
//! removed from the source.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Dialog, SpeakerRole, Utterance};
use crate::error::{Error, Result};

pub const DEFAULT_MIN_TOKENS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeuristicKind {
    Lead,
    Long,
}

impl HeuristicKind {
    pub fn as_str(self) -> &'static str {
        match self {
            HeuristicKind::Lead => "lead",
            HeuristicKind::Long => "long",
        }
    }

    /// Lead uses `min_tokens`; Long ignores it.
    pub fn select(
        self,
        dialog: &Dialog,
        role: SpeakerRole,
        min_tokens: usize,
    ) -> Option<&Utterance> {
        match self {
            HeuristicKind::Lead => lead_utterance(dialog, role, min_tokens),
            HeuristicKind::Long => long_utterance(dialog, role),
        }
    }
}

impl fmt::Display for HeuristicKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HeuristicKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lead" => Ok(HeuristicKind::Lead),
            "long" => Ok(HeuristicKind::Long),
            other => Err(Error::invalid(format!("unknown heuristic {other:?}"))),
        }
    }
}

/// First utterance of `role` with at least `min_tokens` tokens.
pub fn lead_utterance(dialog: &Dialog, role: SpeakerRole, min_tokens: usize) -> Option<&Utterance> {
    dialog.turns(role).find(|u| u.token_count >= min_tokens)
}

/// Utterance of `role` with the most tokens; the earliest one wins ties.
pub fn long_utterance(dialog: &Dialog, role: SpeakerRole) -> Option<&Utterance> {
    dialog
        .turns(role)
        .fold(None, |best: Option<&Utterance>, u| match best {
            Some(b) if b.token_count >= u.token_count => Some(b),
            _ => Some(u),
        })
}

/// `role: text` with internal whitespace collapsed, so every utterance
/// occupies exactly one line.
pub fn source_line(role: SpeakerRole, text: &str) -> String {
    let mut line = String::with_capacity(text.len() + 10);
    line.push_str(role.as_str());
    line.push(':');
    for tok in text.split_whitespace() {
        line.push(' ');
        line.push_str(tok);
    }
    line
}

/// Flattens a dialog into newline-joined `role: text` lines, leaving out any
/// line equal to `masked_line`.
pub fn serialize_source(dialog: &Dialog, masked_line: Option<&str>) -> String {
    dialog
        .utterances
        .iter()
        .map(|u| source_line(u.role, &u.text))
        .filter(|line| Some(line.as_str()) != masked_line)
        .collect::<Vec<_>>()
        .join("\n")
}

/// Inverse of [`serialize_source`]: lines starting with `customer:`,
/// `agent:` or `user:` open a new utterance, other non-blank lines continue
/// the previous one.
pub fn parse_transcript(id: &str, text: &str) -> Result<Dialog> {
    let mut turns: Vec<(SpeakerRole, String)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let tagged = line
            .split_once(':')
            .and_then(|(tag, rest)| tag.parse::<SpeakerRole>().ok().map(|r| (r, rest.trim())));
        match (tagged, turns.last_mut()) {
            (Some((role, rest)), _) => turns.push((role, rest.to_string())),
            (None, Some((_, prev))) => {
                prev.push(' ');
                prev.push_str(line);
            }
            (None, None) => {
                return Err(Error::parse(
                    i + 1,
                    "expected a line starting with `customer:` or `agent:`",
                ))
            }
        }
    }
    Dialog::new(id, turns)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeakPair {
    pub dialog_id: String,
    pub perspective: SpeakerRole,
    pub heuristic: HeuristicKind,
    pub masked: bool,
    #[serde(rename = "source")]
    pub source_text: String,
    #[serde(rename = "target")]
    pub target_summary: String,
}

/// What to label: one side, one heuristic, masked or not.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LabelSpec {
    pub role: SpeakerRole,
    pub heuristic: HeuristicKind,
    pub masked: bool,
    pub min_tokens: usize,
}

impl LabelSpec {
    pub fn new(role: SpeakerRole, heuristic: HeuristicKind, masked: bool) -> Self {
        LabelSpec {
            role,
            heuristic,
            masked,
            min_tokens: DEFAULT_MIN_TOKENS,
        }
    }
}

/// Builds the weak pair for one dialog, or `None` when the heuristic finds
/// no target. Masking removes every line identical to the target line.
pub fn make_weak_pair(dialog: &Dialog, spec: LabelSpec) -> Option<WeakPair> {
    let target = spec.heuristic.select(dialog, spec.role, spec.min_tokens)?;
    let target_line = source_line(target.role, &target.text);
    let masked_line = spec.masked.then_some(target_line.as_str());
    Some(WeakPair {
        dialog_id: dialog.id.clone(),
        perspective: spec.role,
        heuristic: spec.heuristic,
        masked: spec.masked,
        source_text: serialize_source(dialog, masked_line),
        target_summary: target.text.clone(),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coverage {
    pub total: usize,
    pub excluded: usize,
    pub labeled: usize,
    pub skipped: usize,
}

/// Labels every dialog not in `exclude`. Pairs come out in corpus order.
pub fn weaklabel_corpus(
    corpus: &Corpus,
    spec: LabelSpec,
    exclude: &HashSet<String>,
) -> (Vec<WeakPair>, Coverage) {
    let label = |d: &Dialog| -> Option<Option<WeakPair>> {
        if exclude.contains(&d.id) {
            None
        } else {
            Some(make_weak_pair(d, spec))
        }
    };

    #[cfg(feature = "parallel")]
    let outcomes: Vec<Option<Option<WeakPair>>> = {
        use rayon::prelude::*;
        corpus.dialogs().par_iter().map(label).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<Option<Option<WeakPair>>> = corpus.dialogs().iter().map(label).collect();

    let mut coverage = Coverage {
        total: corpus.len(),
        ..Default::default()
    };
    let mut pairs = Vec::new();
    for outcome in outcomes {
        match outcome {
            None => coverage.excluded += 1,
            Some(None) => coverage.skipped += 1,
            Some(Some(pair)) => {
                coverage.labeled += 1;
                pairs.push(pair);
            }
        }
    }
    (pairs, coverage)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use SpeakerRole::{Agent, Customer};

    fn dialog(turns: &[(SpeakerRole, &str)]) -> Dialog {
        Dialog::new("d", turns.iter().map(|(r, t)| (*r, *t))).unwrap()
    }

    fn four_turns() -> Dialog {
        dialog(&[
            (Customer, "hi"),
            (Agent, "hello how can I help you today"),
            (Customer, "my laptop will not boot at all"),
            (Agent, "please hold the power button"),
        ])
    }

    #[test]
    fn lead_skips_short_turns() {
        let d = dialog(&[
            (Customer, "Thank you"),
            (Agent, "ok"),
            (Customer, "the app crashes every time I open it"),
        ]);
        assert_eq!(lead_utterance(&d, Customer, 5).unwrap().index, 2);
        assert!(lead_utterance(&dialog(&[(Customer, "too short")]), Customer, 5).is_none());
    }

    #[test]
    fn long_breaks_ties_early() {
        let d = dialog(&[
            (Customer, "x"),
            (Agent, "one two three four five six seven"),
            (Customer, "y"),
            (Agent, "a b c d e f g"),
        ]);
        assert_eq!(long_utterance(&d, Agent).unwrap().index, 1);
        assert!(long_utterance(&dialog(&[(Customer, "only me")]), Agent).is_none());
    }

    #[test]
    fn unmasked_pair_keeps_all_lines() {
        let p = make_weak_pair(
            &four_turns(),
            LabelSpec::new(Customer, HeuristicKind::Lead, false),
        )
        .unwrap();
        assert_eq!(p.source_text.lines().count(), 4);
        assert_eq!(p.target_summary, "my laptop will not boot at all");
    }

    #[test]
    fn masked_pair_drops_target() {
        let p = make_weak_pair(
            &four_turns(),
            LabelSpec::new(Customer, HeuristicKind::Lead, true),
        )
        .unwrap();
        assert_eq!(p.source_text.lines().count(), 3);
        assert!(!p.source_text.contains(&p.target_summary));
    }

    #[test]
    fn no_target_no_pair() {
        let d = dialog(&[(Customer, "hi"), (Agent, "hello there friend")]);
        assert!(make_weak_pair(&d, LabelSpec::new(Customer, HeuristicKind::Lead, false)).is_none());
    }

    fn corpus(dialogs: Vec<Dialog>) -> Corpus {
        Corpus::new(dialogs).unwrap()
    }

    fn named(id: &str, turns: &[(SpeakerRole, &str)]) -> Dialog {
        Dialog::new(id, turns.iter().map(|(r, t)| (*r, *t))).unwrap()
    }

    #[test]
    fn coverage_counts() {
        let good = [(Customer, "one two three four five"), (Agent, "ok")];
        let c = corpus(vec![
            named("a", &good),
            named("b", &good),
            named("c", &good),
        ]);
        let exclude: HashSet<String> = ["b".to_string()].into();
        let spec = LabelSpec::new(Customer, HeuristicKind::Lead, false);
        let (pairs, cov) = weaklabel_corpus(&c, spec, &exclude);
        assert_eq!(pairs.len(), 2);
        assert_eq!(
            cov,
            Coverage {
                total: 3,
                excluded: 1,
                labeled: 2,
                skipped: 0
            }
        );

        let c = corpus(vec![
            named("a", &good),
            named("b", &[(Customer, "short"), (Agent, "x")]),
        ]);
        let (pairs, cov) = weaklabel_corpus(&c, spec, &HashSet::new());
        assert_eq!(pairs.len(), 1);
        assert_eq!(
            cov,
            Coverage {
                total: 2,
                excluded: 0,
                labeled: 1,
                skipped: 1
            }
        );

        let (pairs, cov) = weaklabel_corpus(&corpus(vec![]), spec, &HashSet::new());
        assert!(pairs.is_empty());
        assert_eq!(cov, Coverage::default());
    }

    #[test]
    fn weak_pair_json_shape() {
        let p = make_weak_pair(
            &four_turns(),
            LabelSpec::new(Agent, HeuristicKind::Long, true),
        )
        .unwrap();
        let v: serde_json::Value = serde_json::to_value(&p).unwrap();
        assert_eq!(v["perspective"], "agent");
        assert_eq!(v["heuristic"], "long");
        assert_eq!(v["masked"], true);
        assert_eq!(v["target"], "hello how can I help you today");
        assert!(v["source"].as_str().unwrap().starts_with("customer: hi\n"));
    }

    #[test]
    fn transcript_round_trip() {
        let d = four_turns();
        let back = parse_transcript("d", &serialize_source(&d, None)).unwrap();
        assert_eq!(back, d);
        assert!(parse_transcript("x", "no tag here").is_err());
    }

    fn arb_dialog() -> impl Strategy<Value = Dialog> {
        proptest::collection::vec((any::<bool>(), 1usize..9, 0usize..3), 1..12).prop_map(|turns| {
            Dialog::new(
                "p",
                turns.into_iter().map(|(cust, len, word)| {
                    let role = if cust { Customer } else { Agent };
                    let w = ["ok", "hi", "yes"][word];
                    (role, vec![w; len].join(" "))
                }),
            )
            .unwrap()
        })
    }

    proptest! {
        #[test]
        fn masked_source_never_contains_target_line(d in arb_dialog(), lead in any::<bool>(), cust in any::<bool>()) {
            let heuristic = if lead { HeuristicKind::Lead } else { HeuristicKind::Long };
            let role = if cust { Customer } else { Agent };
            if let Some(p) = make_weak_pair(&d, LabelSpec::new(role, heuristic, true)) {
                let target_line = source_line(role, &p.target_summary);
                prop_assert!(p.source_text.lines().all(|l| l != target_line));
            }
            if let Some(p) = make_weak_pair(&d, LabelSpec::new(role, heuristic, false)) {
                let target_line = source_line(role, &p.target_summary);
                let expected = d.turns(role).filter(|u| source_line(role, &u.text) == target_line).count();
                let present = p.source_text.lines().filter(|l| *l == target_line).count();
                prop_assert!(expected >= 1);
                prop_assert_eq!(present, expected);
                prop_assert!(d.turns(role).any(|u| u.text == p.target_summary));
            }
        }

        #[test]
        fn labeling_is_repeatable(ds in proptest::collection::vec(arb_dialog(), 0..20)) {
            let ds: Vec<Dialog> = ds.into_iter().enumerate().map(|(i, mut d)| { d.id = format!("d{i}"); d }).collect();
            let c = corpus(ds);
            let spec = LabelSpec::new(Agent, HeuristicKind::Long, false);
            prop_assert_eq!(
                weaklabel_corpus(&c, spec, &HashSet::new()),
                weaklabel_corpus(&c, spec, &HashSet::new())
            );
        }
    }
}
