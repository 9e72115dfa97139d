//! LLM-as-judge gateway: prompt templates, verdict parsing, and the
//! [`JudgeGateway`] trait with HTTP and deterministic mock backends.
//!
//! Three prompt families exist. `RlYesNo` is the compact reward-time prompt
//! that demands a bare YES/NO. `Base` grades short-form QA/MCQ answers with a
//! binary JSON verdict, and `Mimic` grades long-form reports on a 0–5 rubric.
//! Verdict extraction tolerates judges that think out loud before answering:
//! the *last* JSON object in the response wins, fenced or not.

mod http;
mod mock;

pub use http::{query_judge, HttpJudge};
pub use mock::{MockJudge, MockJudgeEntry};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::TransportError;

/// Endpoint settings for a judge served over the chat-completions protocol.
pub type JudgeEndpointConfig = crate::net::ChatEndpointConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeTemplate {
    RlYesNo,
    Base,
    Mimic,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JudgeRequest {
    pub template: JudgeTemplate,
    pub question: String,
    pub reference: String,
    pub candidate: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    Binary,
    Rubric,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub kind: VerdictKind,
    /// Binary verdicts are 0/1; rubric verdicts are integers 0–5.
    pub score: u8,
    /// Raw response text the verdict was parsed from.
    pub raw: String,
}

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("template slot `{0}` must be non-empty")]
    EmptySlot(&'static str),
    #[error("judge unavailable after {attempts} attempts: {source}")]
    Unavailable {
        attempts: u32,
        source: TransportError,
    },
    #[error("no JSON object with an integer `score` in response: {raw:?}")]
    NoVerdict { raw: String },
    #[error("verdict score {score} out of range for {kind:?}")]
    ScoreOutOfRange { score: i64, kind: VerdictKind },
    #[error("verdict `score` must be an integer, got {0}")]
    NonIntegerScore(String),
    #[error("no YES/NO decision in response: {raw:?}")]
    NoYesNo { raw: String },
    #[error("judge fixture error: {0}")]
    Fixture(String),
}

const RL_YESNO_TEMPLATE: &str = r#"You are a medical expert. Decide whether the Candidate Answer is semantically correct given the Reference Answer.

Reference Answer:
{reference}

Candidate Answer:
{candidate}

Reply with exactly one word: YES if the candidate conveys the same answer as the reference, NO otherwise."#;

const BASE_TEMPLATE: &str = r#"You are a medical expert.

Your task is to evaluate whether the Predicted Answer correctly answers the Medical Question, based on the Ground Truth (Correct Answer) provided.

Question:
{question}

Correct Answer:
{correct_answer}

Predicted Answer:
{predicted_answer}

Score 1 if the predicted answer matches the correct answer either fully in text or by indicating the correct option label (e.g., "B", "Option B", or a paraphrased version that clearly identifies the correct choice). Score 0 if the predicted answer is incorrect or points to the wrong option.

Respond strictly in the following JSON format:

```json
{
"score": <score>
}
```"#;

const MIMIC_TEMPLATE: &str = r#"You are a medical expert evaluating the clinical accuracy, completeness, and relevance of a generated medical report or summary.

Your task is to compare an AI-generated report or summary to a reference (gold standard) report or summary, based on a clinical instruction or question. Assess the generated output on how well it preserves key clinical information, factual correctness, and clinical reasoning relevant to the task.

Assign a score between 0 and 5 using the following scale:

0 - Completely incorrect: Clinically irrelevant, misleading, or factually wrong. No meaningful alignment with the instruction or reference.

1 - Poor match: Barely relevant or mostly incorrect. Contains significant clinical misinformation or omits nearly all critical details.

2 - Weak match: Some fragments of relevant content are present, but major clinical errors or omissions exist. Clinical utility is low.

3 - Fair match: Contains several relevant points, but includes notable errors, missing findings, or misinterpretations that affect clinical reliability.

4 - Good match: Mostly accurate and clinically sound. Minor issues or missing details, but the overall meaning and purpose are preserved.

5 - Perfect or near-perfect match: Clinically accurate, complete, and faithful to the instruction and reference. No significant omissions or errors.

Respond only in the following example JSON format:

Example JSON format:
```json
{
"score": <score between 0 and 5>
}
```

Now, evaluate the following:

### Clinical Instruction or Question::
{question}

### Reference Report or Summary:
{correct_answer}

### AI-Generated Report or Summary:
{predicted_answer}"#;

/// Instantiate the template for a request. Slot texts are inserted verbatim;
/// `Base`/`Mimic` require all three slots, `RlYesNo` needs only reference and
/// candidate.
pub fn render_prompt(req: &JudgeRequest) -> Result<String, JudgeError> {
    if req.candidate.is_empty() {
        return Err(JudgeError::EmptySlot("candidate"));
    }
    if req.reference.is_empty() {
        return Err(JudgeError::EmptySlot("reference"));
    }
    match req.template {
        JudgeTemplate::RlYesNo => Ok(fill_slots(
            RL_YESNO_TEMPLATE,
            &[
                ("{reference}", &req.reference),
                ("{candidate}", &req.candidate),
            ],
        )),
        JudgeTemplate::Base | JudgeTemplate::Mimic => {
            if req.question.is_empty() {
                return Err(JudgeError::EmptySlot("question"));
            }
            let template = match req.template {
                JudgeTemplate::Base => BASE_TEMPLATE,
                _ => MIMIC_TEMPLATE,
            };
            Ok(fill_slots(
                template,
                &[
                    ("{question}", &req.question),
                    ("{correct_answer}", &req.reference),
                    ("{predicted_answer}", &req.candidate),
                ],
            ))
        }
    }
}

/// Substitute each placeholder exactly once, left to right, without rescanning
/// inserted text (slot values may themselves contain placeholder-shaped text).
fn fill_slots(template: &str, slots: &[(&str, &str)]) -> String {
    let mut positions: Vec<(usize, &str, &str)> = slots
        .iter()
        .map(|(ph, value)| {
            let pos = template
                .find(ph)
                .unwrap_or_else(|| panic!("template missing placeholder {ph}"));
            (pos, *ph, *value)
        })
        .collect();
    positions.sort_by_key(|(pos, _, _)| *pos);
    let mut out = String::with_capacity(template.len());
    let mut cursor = 0;
    for (pos, ph, value) in positions {
        out.push_str(&template[cursor..pos]);
        out.push_str(value);
        cursor = pos + ph.len();
    }
    out.push_str(&template[cursor..]);
    out
}

/// Extract a verdict from raw judge output: take the last JSON object in the
/// text (fenced blocks included), read its integer `score`, and validate the
/// range for the requested kind.
pub fn parse_verdict(raw: &str, kind: VerdictKind) -> Result<JudgeVerdict, JudgeError> {
    let object = last_json_object(raw).ok_or_else(|| JudgeError::NoVerdict {
        raw: raw.to_string(),
    })?;
    let score_value = object.get("score").ok_or_else(|| JudgeError::NoVerdict {
        raw: raw.to_string(),
    })?;
    let score = match score_value {
        serde_json::Value::Number(n) => n
            .as_i64()
            .ok_or_else(|| JudgeError::NonIntegerScore(n.to_string()))?,
        other => return Err(JudgeError::NonIntegerScore(other.to_string())),
    };
    let in_range = match kind {
        VerdictKind::Binary => (0..=1).contains(&score),
        VerdictKind::Rubric => (0..=5).contains(&score),
    };
    if !in_range {
        return Err(JudgeError::ScoreOutOfRange { score, kind });
    }
    Ok(JudgeVerdict {
        kind,
        score: score as u8,
        raw: raw.to_string(),
    })
}

/// Map a bare YES/NO reply (the reward-time protocol) to a binary verdict.
/// The first standalone YES or NO decides; punctuation and case are ignored.
pub fn parse_yes_no(raw: &str) -> Result<JudgeVerdict, JudgeError> {
    for word in raw.split(|c: char| !c.is_ascii_alphabetic()) {
        if word.eq_ignore_ascii_case("yes") {
            return Ok(JudgeVerdict {
                kind: VerdictKind::Binary,
                score: 1,
                raw: raw.to_string(),
            });
        }
        if word.eq_ignore_ascii_case("no") {
            return Ok(JudgeVerdict {
                kind: VerdictKind::Binary,
                score: 0,
                raw: raw.to_string(),
            });
        }
    }
    Err(JudgeError::NoYesNo {
        raw: raw.to_string(),
    })
}

fn last_json_object(raw: &str) -> Option<serde_json::Map<String, serde_json::Value>> {
    let opens: Vec<usize> = raw
        .char_indices()
        .filter(|(_, c)| *c == '{')
        .map(|(i, _)| i)
        .collect();
    for idx in opens.into_iter().rev() {
        let mut stream =
            serde_json::Deserializer::from_str(&raw[idx..]).into_iter::<serde_json::Value>();
        if let Some(Ok(serde_json::Value::Object(map))) = stream.next() {
            return Some(map);
        }
    }
    None
}

fn verdict_from_response(template: JudgeTemplate, raw: &str) -> Result<JudgeVerdict, JudgeError> {
    match template {
        JudgeTemplate::RlYesNo => parse_yes_no(raw),
        JudgeTemplate::Base => parse_verdict(raw, VerdictKind::Binary),
        JudgeTemplate::Mimic => parse_verdict(raw, VerdictKind::Rubric),
    }
}

/// Shared fetch-parse-retry loop: on transport *or* parse failure the full
/// request is reissued, up to `max_retries` extra attempts.
fn run_query<F>(
    template: JudgeTemplate,
    max_retries: u32,
    mut fetch: F,
) -> Result<JudgeVerdict, JudgeError>
where
    F: FnMut() -> Result<String, TransportError>,
{
    let attempts = max_retries + 1;
    let mut last_transport: Option<TransportError> = None;
    let mut last_parse: Option<JudgeError> = None;
    for _ in 0..attempts {
        match fetch() {
            Ok(raw) => match verdict_from_response(template, &raw) {
                Ok(verdict) => return Ok(verdict),
                Err(e) => {
                    last_transport = None;
                    last_parse = Some(e);
                }
            },
            Err(e) => last_transport = Some(e),
        }
    }
    match (last_transport, last_parse) {
        (Some(source), _) => Err(JudgeError::Unavailable { attempts, source }),
        (None, Some(parse)) => Err(parse),
        (None, None) => unreachable!("at least one attempt runs"),
    }
}

/// A judge reachable through some backend. Implementations must be
/// deterministic for identical requests when backed by the scripted mock.
pub trait JudgeGateway: Send + Sync {
    fn query(&self, req: &JudgeRequest) -> Result<JudgeVerdict, JudgeError>;
}
