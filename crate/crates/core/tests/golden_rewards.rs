//! Golden corpus for the reward listings.
//!
//! `data/reward_golden.json` freezes the four signal values for 42 completion
//! / reference pairs covering valid and invalid formats, modality variants,
//! exact-match short-circuits, empty and one-character answers, and pinned
//! embedding similarities on both sides of the threshold.
//!
//! Two layers of checking:
//! 1. the engine must reproduce every frozen value exactly, and
//! 2. a deliberately independent re-derivation of the scoring rules (local to
//!    this test, sharing no code with the engine) must agree with the engine
//!    on format, modality, and every judge-free accuracy path.
//!
//! Judge-dependent values follow the scripted mock rule (exact → YES,
//! reference-substring-of-candidate → YES, placeholder → NO, else NO);
//! embedding-dependent values use similarities pinned per pair.

use once_cell::sync::Lazy;
use regex::Regex;
use serde::Deserialize;

use medrl_core::embed::MockEmbedder;
use medrl_core::judge::MockJudge;
use medrl_core::reward::{
    embedding_reward, format_reward, llm_accuracy_reward, modality_reward, GatingPolicy,
};
use medrl_core::structured::{parse_completion, ReferenceAnswer};

#[derive(Debug, Deserialize)]
struct GoldenFile {
    cases: Vec<GoldenCase>,
}

#[derive(Debug, Deserialize)]
struct GoldenCase {
    name: String,
    predict: String,
    ground_truth: String,
    fmt: f64,
    modality: f64,
    llm: f64,
    emb: f64,
    #[serde(default)]
    pin: Option<PinnedPair>,
}

#[derive(Debug, Deserialize)]
struct PinnedPair {
    candidate: String,
    reference: String,
    sim: f64,
}

fn load_corpus() -> GoldenFile {
    let raw = include_str!("data/reward_golden.json");
    serde_json::from_str(raw).expect("golden corpus parses")
}

/// The same preprocessing the engine applies before embedding, re-derived
/// here so pinned vectors land on the exact strings the embedder receives.
fn embed_key(text: &str) -> String {
    text.chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect::<String>()
        .trim()
        .to_string()
}

fn pinned_embedder(corpus: &GoldenFile) -> MockEmbedder {
    let dim = 256;
    let mut mock = MockEmbedder::new(dim, 42, 1.5);
    for (pair_idx, case) in corpus
        .cases
        .iter()
        .filter_map(|c| c.pin.as_ref())
        .enumerate()
    {
        let (a_axis, b_axis) = (2 * pair_idx, 2 * pair_idx + 1);
        assert!(b_axis < dim, "too many pinned pairs for the plane layout");
        let mut a = vec![0.0; dim];
        a[a_axis] = 1.0;
        let mut b = vec![0.0; dim];
        b[a_axis] = case.sim;
        b[b_axis] = (1.0 - case.sim * case.sim).sqrt();
        mock.pin(embed_key(&case.candidate), a);
        mock.pin(embed_key(&case.reference), b);
    }
    mock
}

// --- independent re-derivation of the scoring rules (no engine code) ---

static REF_FORMAT: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?s)^<think>.*?</think>\s*<answer>.*?</answer>$").unwrap());
static REF_ANSWER: Lazy<Regex> = Lazy::new(|| Regex::new(r"(?s)<answer>(.*?)</answer>").unwrap());

fn ref_format(predict: &str) -> f64 {
    let Some(idx) = predict.find("<think>") else {
        return 0.0;
    };
    if REF_FORMAT.is_match(predict[idx..].trim()) {
        1.0
    } else {
        0.0
    }
}

fn ref_modality(predict: &str, ground_truth: &str) -> f64 {
    let Some(idx) = predict.find("<think>") else {
        return 0.0;
    };
    let prefix = predict[..idx].trim();
    let tag_end = ground_truth.find('>').expect("reference carries a tag");
    let tag = &ground_truth[..=tag_end];
    if prefix.to_uppercase() == tag.to_uppercase() {
        1.0
    } else {
        0.0
    }
}

fn ref_extracted_answer(predict: &str) -> String {
    let span = match REF_ANSWER.captures(predict) {
        Some(caps) => caps.get(1).unwrap().as_str(),
        None => predict,
    };
    span.trim().trim_matches('.').to_string()
}

fn ref_ground_truth(ground_truth: &str) -> String {
    let after = &ground_truth[ground_truth.find('>').unwrap() + 1..];
    after.trim().trim_matches('.').to_string()
}

/// Accuracy rules up to (but not including) the gateway call. `None` means
/// the listing would consult the judge / embedding model.
fn ref_accuracy_short_circuit(predict: &str, ground_truth: &str) -> Option<f64> {
    let given = ref_extracted_answer(predict);
    let truth = ref_ground_truth(ground_truth);
    if given.is_empty() || given.chars().count() == 1 {
        return Some(0.0);
    }
    if given == truth {
        return Some(1.0);
    }
    None
}

#[test]
fn corpus_has_full_coverage() {
    let corpus = load_corpus();
    assert!(corpus.cases.len() >= 40, "got {}", corpus.cases.len());
    // Every signal must be exercised in both polarities.
    let polarity = |f: &dyn Fn(&GoldenCase) -> f64| {
        let values: Vec<f64> = corpus.cases.iter().map(f).collect();
        values.contains(&0.0) && values.contains(&1.0)
    };
    assert!(polarity(&|c| c.fmt));
    assert!(polarity(&|c| c.modality));
    assert!(polarity(&|c| c.llm));
    assert!(polarity(&|c| c.emb));
}

#[test]
fn engine_reproduces_every_frozen_signal_exactly() {
    let started = std::time::Instant::now();
    let corpus = load_corpus();
    let judge = MockJudge::new();
    let embedder = pinned_embedder(&corpus);
    let gate = GatingPolicy::default();

    for case in &corpus.cases {
        let completion = parse_completion(&case.predict);
        let reference = ReferenceAnswer::parse(&case.ground_truth)
            .unwrap_or_else(|e| panic!("{}: bad reference: {e}", case.name));

        let fmt = format_reward(&completion);
        let modality = modality_reward(&completion, &reference);
        let llm = llm_accuracy_reward(&completion, &reference, &judge)
            .unwrap_or_else(|e| panic!("{}: llm reward failed: {e}", case.name));
        let (emb, _gated) = embedding_reward(&completion, &reference, &embedder, 0.8, Some(&gate))
            .unwrap_or_else(|e| panic!("{}: embedding reward failed: {e}", case.name));

        assert_eq!(fmt, case.fmt, "{}: format", case.name);
        assert_eq!(modality, case.modality, "{}: modality", case.name);
        assert_eq!(llm, case.llm, "{}: llm accuracy", case.name);
        assert_eq!(emb, case.emb, "{}: embedding", case.name);
    }
    assert!(
        started.elapsed() < std::time::Duration::from_secs(1),
        "corpus scoring took {:?}",
        started.elapsed()
    );
}

#[test]
fn independent_rederivation_agrees_with_the_engine() {
    let corpus = load_corpus();
    let judge = MockJudge::new();
    for case in &corpus.cases {
        let completion = parse_completion(&case.predict);
        let reference = ReferenceAnswer::parse(&case.ground_truth).unwrap();

        assert_eq!(
            format_reward(&completion),
            ref_format(&case.predict),
            "{}: format disagreement",
            case.name
        );
        assert_eq!(
            modality_reward(&completion, &reference),
            ref_modality(&case.predict, &case.ground_truth),
            "{}: modality disagreement",
            case.name
        );
        if let Some(expected) = ref_accuracy_short_circuit(&case.predict, &case.ground_truth) {
            assert_eq!(
                llm_accuracy_reward(&completion, &reference, &judge).unwrap(),
                expected,
                "{}: judge-free accuracy disagreement",
                case.name
            );
        }
    }
}
