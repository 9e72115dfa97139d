//! Deterministic scripted judge.
//!
//! Rule, applied to (candidate, reference) after normalization (trim, strip
//! leading/trailing dots, lowercase):
//!
//! 1. exact match → YES
//! 2. reference is a substring of the candidate → YES
//! 3. candidate contains a bracketed placeholder (`[insert` / `[your answer`) → NO
//! 4. otherwise → NO
//!
//! For the rubric template the same outcomes map to scores 5 / 4 / 0 / 1.
//! Scripted fixture entries override the rule per (template, candidate,
//! reference); entries carry *raw response text*, which goes through the same
//! verdict-parsing path as real endpoint output, so malformed scripted
//! responses exercise the retry/parse-error machinery.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::judge::{
    run_query, JudgeError, JudgeGateway, JudgeRequest, JudgeTemplate, JudgeVerdict,
};
use crate::structured::normalize_answer;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockJudgeEntry {
    /// Restrict the entry to one template; `None` matches all.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<JudgeTemplate>,
    /// Exact candidate text to match.
    pub candidate: String,
    /// Exact reference text to match; `None` matches any reference.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    /// Raw response text returned in place of a real completion.
    pub response: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct MockJudgeFixture {
    #[serde(default)]
    entries: Vec<MockJudgeEntry>,
}

#[derive(Default)]
pub struct MockJudge {
    entries: Vec<MockJudgeEntry>,
    max_retries: u32,
    calls: AtomicUsize,
}

impl MockJudge {
    pub fn new() -> Self {
        MockJudge {
            entries: Vec::new(),
            max_retries: 2,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn with_entries(entries: Vec<MockJudgeEntry>) -> Self {
        MockJudge {
            entries,
            ..Self::new()
        }
    }

    pub fn from_fixture_file(path: &Path) -> Result<Self, JudgeError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| JudgeError::Fixture(format!("{}: {e}", path.display())))?;
        let fixture: MockJudgeFixture =
            serde_json::from_str(&text).map_err(|e| JudgeError::Fixture(e.to_string()))?;
        Ok(Self::with_entries(fixture.entries))
    }

    /// Number of judge queries served so far.
    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn scripted_response(&self, req: &JudgeRequest) -> Option<String> {
        self.entries
            .iter()
            .find(|e| {
                e.template.is_none_or(|t| t == req.template)
                    && e.candidate == req.candidate
                    && e.reference.as_ref().is_none_or(|r| *r == req.reference)
            })
            .map(|e| e.response.clone())
    }

    fn rule_response(&self, req: &JudgeRequest) -> String {
        let outcome = rule_outcome(&req.candidate, &req.reference);
        match req.template {
            JudgeTemplate::RlYesNo => match outcome {
                RuleOutcome::Exact | RuleOutcome::Substring => "YES".to_string(),
                RuleOutcome::Placeholder | RuleOutcome::Other => "NO".to_string(),
            },
            JudgeTemplate::Base => {
                let score = match outcome {
                    RuleOutcome::Exact | RuleOutcome::Substring => 1,
                    RuleOutcome::Placeholder | RuleOutcome::Other => 0,
                };
                format!("```json\n{{\"score\": {score}}}\n```")
            }
            JudgeTemplate::Mimic => {
                let score = match outcome {
                    RuleOutcome::Exact => 5,
                    RuleOutcome::Substring => 4,
                    RuleOutcome::Placeholder => 0,
                    RuleOutcome::Other => 1,
                };
                format!("```json\n{{\"score\": {score}}}\n```")
            }
        }
    }
}

enum RuleOutcome {
    Exact,
    Substring,
    Placeholder,
    Other,
}

fn rule_outcome(candidate: &str, reference: &str) -> RuleOutcome {
    let c = normalize_answer(candidate).to_lowercase();
    let r = normalize_answer(reference).to_lowercase();
    if c == r {
        RuleOutcome::Exact
    } else if !r.is_empty() && c.contains(&r) {
        RuleOutcome::Substring
    } else if c.contains("[insert") || c.contains("[your answer") {
        RuleOutcome::Placeholder
    } else {
        RuleOutcome::Other
    }
}

impl JudgeGateway for MockJudge {
    fn query(&self, req: &JudgeRequest) -> Result<JudgeVerdict, JudgeError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let raw = self
            .scripted_response(req)
            .unwrap_or_else(|| self.rule_response(req));
        run_query(req.template, self.max_retries, || Ok(raw.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::judge::VerdictKind;

    fn req(template: JudgeTemplate, candidate: &str, reference: &str) -> JudgeRequest {
        JudgeRequest {
            template,
            question: "q".into(),
            reference: reference.into(),
            candidate: candidate.into(),
        }
    }

    #[test]
    fn rule_maps_outcomes() {
        let judge = MockJudge::new();
        let yes = judge
            .query(&req(
                JudgeTemplate::RlYesNo,
                "Low perfusion",
                "low perfusion.",
            ))
            .unwrap();
        assert_eq!(yes.score, 1);
        let sub = judge
            .query(&req(
                JudgeTemplate::Base,
                "<answer>Low blood flow or less perfusion</answer>",
                "less perfusion",
            ))
            .unwrap();
        assert_eq!((sub.kind, sub.score), (VerdictKind::Binary, 1));
        let no = judge
            .query(&req(JudgeTemplate::RlYesNo, "larger", "smaller"))
            .unwrap();
        assert_eq!(no.score, 0);
        let rubric = judge
            .query(&req(
                JudgeTemplate::Mimic,
                "bilateral effusions",
                "bilateral effusions",
            ))
            .unwrap();
        assert_eq!((rubric.kind, rubric.score), (VerdictKind::Rubric, 5));
    }

    #[test]
    fn placeholder_candidates_score_zero() {
        let judge = MockJudge::new();
        let v = judge
            .query(&req(
                JudgeTemplate::RlYesNo,
                "The largest organ in the picture is [insert your answer here based on the medical reasoning provided above]",
                "Lung",
            ))
            .unwrap();
        assert_eq!(v.score, 0);
    }

    #[test]
    fn scripted_entries_take_precedence_and_flow_through_parsing() {
        let judge = MockJudge::with_entries(vec![
            MockJudgeEntry {
                template: Some(JudgeTemplate::Mimic),
                candidate: "report text".into(),
                reference: None,
                response: "```json\n{\"score\": 4}\n```".into(),
            },
            MockJudgeEntry {
                template: None,
                candidate: "garbled".into(),
                reference: None,
                response: "prose with no json".into(),
            },
        ]);
        let v = judge
            .query(&req(JudgeTemplate::Mimic, "report text", "whatever"))
            .unwrap();
        assert_eq!((v.kind, v.score), (VerdictKind::Rubric, 4));
        // Scripted garbage exhausts retries and surfaces as a parse error.
        let err = judge
            .query(&req(JudgeTemplate::Base, "garbled", "x"))
            .unwrap_err();
        assert!(matches!(err, JudgeError::NoVerdict { .. }));
    }

    #[test]
    fn identical_requests_yield_identical_verdicts() {
        let judge = MockJudge::new();
        let request = req(JudgeTemplate::Base, "mitral stenosis", "mitral stenosis");
        let first = judge.query(&request).unwrap();
        for _ in 0..2 {
            assert_eq!(judge.query(&request).unwrap(), first);
        }
    }
}
