//! Browser bindings: ROUGE between two texts, Lead/Long summaries of a pasted
//! transcript, and the perspective post-processing step. Every export takes
//! and returns plain strings (JSON for structured results).

use dialsum_core::rouge::{self, RougeScore};
use dialsum_core::summarize::{self, PostProcessor};
use dialsum_core::weaklabel::{self, LabelSpec};
use dialsum_core::{HeuristicKind, SpeakerRole, TokenizerConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct Prf {
    precision: f64,
    recall: f64,
    f: f64,
}

impl From<&RougeScore> for Prf {
    fn from(s: &RougeScore) -> Self {
        Prf {
            precision: s.precision,
            recall: s.recall,
            f: s.f_measure,
        }
    }
}

#[derive(Serialize)]
struct ScoreView {
    rouge1: Prf,
    rouge2: Prf,
    rouge_l: Prf,
    candidate_tokens: Vec<String>,
    reference_tokens: Vec<String>,
    /// (candidate index, reference index) of one longest common subsequence.
    alignment: Vec<(usize, usize)>,
}

fn score_view(candidate: &str, reference: &str, stemming: bool) -> ScoreView {
    let config = TokenizerConfig {
        stemming,
        ..TokenizerConfig::default()
    };
    let cand = rouge::tokenize(candidate, &config);
    let refr = rouge::tokenize(reference, &config);
    let scores = rouge::score_tokens(&cand, &refr);
    ScoreView {
        rouge1: (&scores.r1).into(),
        rouge2: (&scores.r2).into(),
        rouge_l: (&scores.rl).into(),
        alignment: rouge::lcs_alignment(&cand, &refr),
        candidate_tokens: cand,
        reference_tokens: refr,
    }
}

#[derive(Serialize)]
struct SidePick {
    lead: Option<String>,
    long: Option<String>,
    lead_post_processed: Option<String>,
    long_post_processed: Option<String>,
}

#[derive(Serialize)]
struct WeakPairView {
    source: String,
    target: String,
}

#[derive(Serialize)]
struct DialogView {
    utterances: usize,
    customer: SidePick,
    agent: SidePick,
    /// Customer Lead then agent Long, both post-processed.
    full: Option<String>,
    /// Masked customer Lead pair, as used for weak supervision.
    weak_pair: Option<WeakPairView>,
}

fn side(
    dialog: &dialsum_core::Dialog,
    role: SpeakerRole,
    min_tokens: usize,
    post: &PostProcessor,
) -> SidePick {
    let pick = |h: HeuristicKind| h.select(dialog, role, min_tokens).map(|u| u.text.clone());
    let lead = pick(HeuristicKind::Lead);
    let long = pick(HeuristicKind::Long);
    SidePick {
        lead_post_processed: lead.as_deref().map(|t| post.apply(t, role).0),
        long_post_processed: long.as_deref().map(|t| post.apply(t, role).0),
        lead,
        long,
    }
}

fn dialog_view(transcript: &str, min_tokens: usize) -> Result<DialogView, String> {
    if min_tokens == 0 {
        return Err("min_tokens must be at least 1".into());
    }
    let dialog = weaklabel::parse_transcript("demo", transcript).map_err(|e| e.to_string())?;
    let post = PostProcessor::default();
    let customer = side(&dialog, SpeakerRole::Customer, min_tokens, &post);
    let agent = side(&dialog, SpeakerRole::Agent, min_tokens, &post);
    let full = match (&customer.lead_post_processed, &agent.long_post_processed) {
        (Some(c), Some(a)) => Some(format!("{c} {a}")),
        _ => None,
    };
    let spec = LabelSpec {
        min_tokens,
        ..LabelSpec::new(SpeakerRole::Customer, HeuristicKind::Lead, true)
    };
    let weak_pair = weaklabel::make_weak_pair(&dialog, spec).map(|p| WeakPairView {
        source: p.source_text,
        target: p.target_summary,
    });
    Ok(DialogView {
        utterances: dialog.utterances.len(),
        customer,
        agent,
        full,
        weak_pair,
    })
}

#[derive(Serialize)]
struct PostView {
    text: String,
    prefixed: bool,
}

fn post_view(text: &str, role: &str) -> Result<PostView, String> {
    let role: SpeakerRole = role
        .parse()
        .map_err(|e: dialsum_core::Error| e.to_string())?;
    let (text, prefixed) = summarize::post_process(text, role);
    Ok(PostView { text, prefixed })
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("view types serialize")
}

/// ROUGE-1/2/L of `candidate` against `reference`, plus tokens and the LCS
/// alignment for highlighting.
#[wasm_bindgen]
pub fn score_texts(candidate: &str, reference: &str, stemming: bool) -> String {
    to_json(&score_view(candidate, reference, stemming))
}

/// Lead and Long picks for both sides of a `customer:` / `agent:` transcript.
#[wasm_bindgen]
pub fn summarize_dialog(transcript: &str, min_tokens: usize) -> Result<String, JsError> {
    dialog_view(transcript, min_tokens)
        .map(|v| to_json(&v))
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn post_process(text: &str, role: &str) -> Result<String, JsError> {
    post_view(text, role)
        .map(|v| to_json(&v))
        .map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_view_matches_core() {
        let v = score_view("the cat sat on the mat", "the cat is on the mat", false);
        assert!((v.rouge1.f - 5.0 / 6.0).abs() < 1e-12);
        assert_eq!(v.alignment.len(), 5);
        for (i, j) in &v.alignment {
            assert_eq!(v.candidate_tokens[*i], v.reference_tokens[*j]);
        }
    }

    #[test]
    fn stemming_flag_reaches_tokenizer() {
        let plain = score_view("running", "runs", false);
        let stemmed = score_view("running", "runs", true);
        assert_eq!(plain.rouge1.f, 0.0);
        assert_eq!(stemmed.rouge1.f, 1.0);
    }

    const TRANSCRIPT: &str = "\
customer: hi
customer: my package never arrived and the tracking page is blank
agent: sorry about that
agent: could you send us the order number in a direct message so we can look into it
customer: ok sent";

    #[test]
    fn dialog_view_picks() {
        let v = dialog_view(TRANSCRIPT, 5).unwrap();
        assert_eq!(v.utterances, 5);
        assert_eq!(
            v.customer.lead.as_deref(),
            Some("my package never arrived and the tracking page is blank")
        );
        assert_eq!(
            v.agent.lead.as_deref(),
            Some("could you send us the order number in a direct message so we can look into it")
        );
        assert_eq!(
            v.customer.lead_post_processed.as_deref(),
            Some("The customer says: my package never arrived and the tracking page is blank")
        );
        let full = v.full.unwrap();
        assert!(full.starts_with("The customer says: my package"));
        assert!(full.contains(" The agent says: could you"));
        let pair = v.weak_pair.unwrap();
        assert!(!pair.source.contains("tracking page"));
        assert!(pair.source.contains("agent: sorry about that"));
    }

    #[test]
    fn dialog_view_errors() {
        assert!(dialog_view("hello there", 5).is_err());
        assert!(dialog_view(TRANSCRIPT, 0).is_err());
    }

    #[test]
    fn post_view_roles() {
        let v = post_view("asks for a refund", "customer").unwrap();
        assert_eq!(v.text, "The customer says: asks for a refund");
        assert!(v.prefixed);
        let v = post_view("Agent explains the policy", "agent").unwrap();
        assert!(!v.prefixed);
        assert!(post_view("x", "bot").is_err());
    }
}
