//! Three-stage benchmark pipeline: Generation → Evaluation → Scoring.
//!
//! Benchmarks are line-delimited JSON keyed by record id. Each stage persists
//! its output as a JSONL artifact in the run directory, so a completed stage
//! can be reloaded instead of recomputed (resume), audited after the fact, or
//! consumed by another implementation. Binary benchmarks are judged with the
//! `Base` template, rubric benchmarks with `Mimic`; rubric scores normalize
//! to [0,1] as `score/5` so both kinds macro-average together.
//!
//! Judge failures are per-record: the record is flagged, excluded from the
//! mean, and counted in the report rather than silently scored zero.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::judge::{JudgeGateway, JudgeRequest, JudgeTemplate, JudgeVerdict, VerdictKind};
use crate::net::{ChatCompletionsClient, ChatEndpointConfig};
use crate::structured::strip_reasoning;
use crate::util::fnv1a64;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("duplicate record id `{0}`")]
    DuplicateId(String),
    #[error("benchmark `{0}` has zero successfully judged records")]
    NoScoredRecords(String),
    #[error("run directory was produced by a different configuration (expected fingerprint {expected}, found {found}); refusing to resume")]
    ConfigMismatch { expected: String, found: String },
    #[error("generation endpoint error: {0}")]
    Endpoint(#[from] crate::net::TransportError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkKind {
    Binary,
    Rubric,
}

impl BenchmarkKind {
    pub fn template(self) -> JudgeTemplate {
        match self {
            BenchmarkKind::Binary => JudgeTemplate::Base,
            BenchmarkKind::Rubric => JudgeTemplate::Mimic,
        }
    }
}

/// Where raw responses come from in the generation stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum GenerationSource {
    /// JSONL file of `{id, response}` rows.
    Precomputed { path: PathBuf },
    /// Model endpoint speaking the chat-completions protocol.
    Endpoint { config: ChatEndpointConfig },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSpec {
    pub name: String,
    pub kind: BenchmarkKind,
    /// JSONL benchmark input: `{id, question, reference, image_path?}`.
    pub input: PathBuf,
    pub generation: GenerationSource,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSuite {
    pub benchmarks: Vec<BenchmarkSpec>,
}

impl EvalSuite {
    /// Load a suite spec; relative data paths resolve against the spec
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut suite: EvalSuite =
            serde_json::from_str(&text).map_err(|e| EvalError::Malformed {
                path: path.to_path_buf(),
                line: e.line(),
                message: e.to_string(),
            })?;
        if let Some(base) = path.parent() {
            for bench in &mut suite.benchmarks {
                if bench.input.is_relative() {
                    bench.input = base.join(&bench.input);
                }
                if let GenerationSource::Precomputed { path } = &mut bench.generation {
                    if path.is_relative() {
                        *path = base.join(&*path);
                    }
                }
            }
        }
        for bench in &suite.benchmarks {
            if !bench.input.exists() {
                return Err(EvalError::Io {
                    path: bench.input.clone(),
                    source: std::io::Error::new(
                        std::io::ErrorKind::NotFound,
                        format!("benchmark `{}` input not found", bench.name),
                    ),
                });
            }
        }
        Ok(suite)
    }

    /// Stable fingerprint of the suite definition, used to refuse resuming a
    /// run directory under a different configuration.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_string(self).expect("suite serializes");
        format!("{:016x}", fnv1a64(canonical.as_bytes()))
    }
}

/// One benchmark item flowing through the three stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    pub benchmark: String,
    pub question: String,
    pub reference: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stripped_response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<JudgeVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InputRow {
    id: String,
    question: String,
    reference: String,
    #[serde(default)]
    image_path: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResponseRow {
    id: String,
    response: String,
}

/// Load benchmark input rows into fresh records.
pub fn load_records(spec: &BenchmarkSpec) -> Result<Vec<EvalRecord>, EvalError> {
    let rows: Vec<InputRow> = read_jsonl(&spec.input)?;
    let mut seen = HashMap::new();
    let mut records = Vec::with_capacity(rows.len());
    for row in rows {
        if seen.insert(row.id.clone(), ()).is_some() {
            return Err(EvalError::DuplicateId(row.id));
        }
        records.push(EvalRecord {
            id: row.id,
            benchmark: spec.name.clone(),
            question: row.question,
            reference: row.reference,
            image_path: row.image_path,
            raw_response: None,
            stripped_response: None,
            verdict: None,
            score: None,
            error: None,
        });
    }
    Ok(records)
}

/// Stage 1: attach raw and reasoning-stripped responses. Per-record failures
/// (missing precomputed id, endpoint error) are recorded on the record, not
/// raised.
pub fn stage_generate(
    spec: &BenchmarkSpec,
    mut records: Vec<EvalRecord>,
) -> Result<Vec<EvalRecord>, EvalError> {
    match &spec.generation {
        GenerationSource::Precomputed { path } => {
            let rows: Vec<ResponseRow> = read_jsonl(path)?;
            let by_id: HashMap<String, String> =
                rows.into_iter().map(|r| (r.id, r.response)).collect();
            for record in &mut records {
                match by_id.get(&record.id) {
                    Some(response) => attach_response(record, response.clone()),
                    None => {
                        record.error =
                            Some(format!("no precomputed response for id `{}`", record.id));
                    }
                }
            }
        }
        GenerationSource::Endpoint { config } => {
            let client = ChatCompletionsClient::new(config.clone())?;
            for record in &mut records {
                let prompt = match &record.image_path {
                    Some(image) => format!("<image>{image}</image>\n{}", record.question),
                    None => record.question.clone(),
                };
                match client.complete(&prompt) {
                    Ok(response) => attach_response(record, response),
                    Err(e) => record.error = Some(format!("generation failed: {e}")),
                }
            }
        }
    }
    Ok(records)
}

fn attach_response(record: &mut EvalRecord, response: String) {
    record.stripped_response = Some(strip_reasoning(&response).to_string());
    record.raw_response = Some(response);
}

/// Stage 2: obtain one verdict per generated record. Judge failures are
/// flagged per record and never abort the stage.
pub fn stage_judge(
    mut records: Vec<EvalRecord>,
    spec: &BenchmarkSpec,
    judge: &dyn JudgeGateway,
) -> Vec<EvalRecord> {
    for record in &mut records {
        if record.error.is_some() {
            continue;
        }
        let Some(candidate) = record.stripped_response.clone() else {
            record.error = Some("record was never generated".to_string());
            continue;
        };
        let request = JudgeRequest {
            template: spec.kind.template(),
            question: record.question.clone(),
            reference: record.reference.clone(),
            candidate,
        };
        match judge.query(&request) {
            Ok(verdict) => {
                record.score = Some(normalized_score(&verdict));
                record.verdict = Some(verdict);
            }
            Err(e) => record.error = Some(format!("judge failed: {e}")),
        }
    }
    records
}

fn normalized_score(verdict: &JudgeVerdict) -> f64 {
    match verdict.kind {
        VerdictKind::Binary => f64::from(verdict.score),
        VerdictKind::Rubric => f64::from(verdict.score) / 5.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkScore {
    pub name: String,
    pub kind: BenchmarkKind,
    pub mean: f64,
    pub scored: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub benchmarks: Vec<BenchmarkScore>,
    /// Unweighted mean of per-benchmark means.
    pub macro_avg: f64,
}

impl ScoreReport {
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| benchmark | kind | mean | scored | failed |\n");
        out.push_str("|---|---|---|---|---|\n");
        for b in &self.benchmarks {
            let kind = match b.kind {
                BenchmarkKind::Binary => "binary",
                BenchmarkKind::Rubric => "rubric",
            };
            out.push_str(&format!(
                "| {} | {} | {:.6} | {} | {} |\n",
                b.name, kind, b.mean, b.scored, b.failed
            ));
        }
        out.push_str(&format!(
            "| **macro avg** | | {:.6} | | |\n",
            self.macro_avg
        ));
        out
    }
}

/// Stage 3 for one benchmark: mean over successfully judged records.
/// Binary means are `ones/n`; rubric means are `Σscore/(5n)` so the division
/// happens once (exact for fixture arithmetic).
pub fn stage_score(
    records: &[EvalRecord],
    spec: &BenchmarkSpec,
) -> Result<BenchmarkScore, EvalError> {
    let mut scored = 0usize;
    let mut failed = 0usize;
    let mut raw_sum = 0u64;
    for record in records {
        match (&record.verdict, &record.error) {
            (Some(verdict), None) => {
                scored += 1;
                raw_sum += u64::from(verdict.score);
            }
            _ => failed += 1,
        }
    }
    if scored == 0 {
        return Err(EvalError::NoScoredRecords(spec.name.clone()));
    }
    let denominator = match spec.kind {
        BenchmarkKind::Binary => scored as f64,
        BenchmarkKind::Rubric => scored as f64 * 5.0,
    };
    Ok(BenchmarkScore {
        name: spec.name.clone(),
        kind: spec.kind,
        mean: raw_sum as f64 / denominator,
        scored,
        failed,
    })
}

/// Aggregate per-benchmark scores into the report.
pub fn build_report(scores: Vec<BenchmarkScore>) -> ScoreReport {
    let macro_avg = scores.iter().map(|b| b.mean).sum::<f64>() / scores.len() as f64;
    ScoreReport {
        benchmarks: scores,
        macro_avg,
    }
}

/// Orchestrates the three stages over a suite with persisted JSONL artifacts
/// per stage and a JSON + Markdown report.
pub struct EvalPipeline<'a> {
    pub suite: EvalSuite,
    pub judge: &'a dyn JudgeGateway,
    pub out_dir: PathBuf,
    /// Reuse completed stage artifacts instead of recomputing them. Refuses
    /// to touch a run directory whose fingerprint differs.
    pub resume: bool,
}

impl<'a> EvalPipeline<'a> {
    pub fn run(&self) -> Result<ScoreReport, EvalError> {
        std::fs::create_dir_all(&self.out_dir).map_err(io_err(&self.out_dir))?;
        self.check_fingerprint()?;
        let mut scores = Vec::with_capacity(self.suite.benchmarks.len());
        for spec in &self.suite.benchmarks {
            let bench_dir = self.out_dir.join(&spec.name);
            std::fs::create_dir_all(&bench_dir).map_err(io_err(&bench_dir))?;

            let generation_path = bench_dir.join("01_generation.jsonl");
            let generated: Vec<EvalRecord> = if self.resume && generation_path.exists() {
                read_jsonl(&generation_path)?
            } else {
                let records = load_records(spec)?;
                let generated = stage_generate(spec, records)?;
                write_jsonl(&generation_path, &generated)?;
                generated
            };

            let judgment_path = bench_dir.join("02_judgment.jsonl");
            let judged: Vec<EvalRecord> = if self.resume && judgment_path.exists() {
                read_jsonl(&judgment_path)?
            } else {
                let judged = stage_judge(generated, spec, self.judge);
                write_jsonl(&judgment_path, &judged)?;
                judged
            };

            scores.push(stage_score(&judged, spec)?);
        }
        let report = build_report(scores);
        let report_json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
        let json_path = self.out_dir.join("report.json");
        std::fs::write(&json_path, report_json).map_err(io_err(&json_path))?;
        let md_path = self.out_dir.join("report.md");
        std::fs::write(&md_path, report.to_markdown()).map_err(io_err(&md_path))?;
        Ok(report)
    }

    fn check_fingerprint(&self) -> Result<(), EvalError> {
        let meta_path = self.out_dir.join("meta.json");
        let expected = self.suite.fingerprint();
        if meta_path.exists() {
            let meta: BTreeMap<String, String> = serde_json::from_str(
                &std::fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?,
            )
            .map_err(|e| EvalError::Malformed {
                path: meta_path.clone(),
                line: e.line(),
                message: e.to_string(),
            })?;
            let found = meta.get("suite_fingerprint").cloned().unwrap_or_default();
            if found != expected {
                return Err(EvalError::ConfigMismatch { expected, found });
            }
        } else {
            let mut meta = BTreeMap::new();
            meta.insert("suite_fingerprint".to_string(), expected);
            let body = serde_json::to_string_pretty(&meta).expect("meta serializes") + "\n";
            std::fs::write(&meta_path, body).map_err(io_err(&meta_path))?;
        }
        Ok(())
    }
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(line).map_err(|e| EvalError::Malformed {
            path: path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        rows.push(row);
    }
    Ok(rows)
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), EvalError> {
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(row).expect("rows serialize"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::judge::MockJudge;
    use std::fs;

    fn write_lines(path: &Path, lines: &[String]) {
        fs::write(path, lines.join("\n") + "\n").unwrap();
    }

    fn binary_fixture(dir: &Path, correct: usize, total: usize) -> BenchmarkSpec {
        let input_path = dir.join("bench.jsonl");
        let responses_path = dir.join("responses.jsonl");
        let mut inputs = Vec::new();
        let mut responses = Vec::new();
        for i in 0..total {
            let id = format!("r{i}");
            inputs.push(
                serde_json::json!({
                    "id": id,
                    "question": format!("question {i}"),
                    "reference": format!("answer {i}"),
                })
                .to_string(),
            );
            // First `correct` records answer exactly; the rest answer wrongly.
            let answer = if i < correct {
                format!("<think>reasoning {i}</think><answer>answer {i}</answer>")
            } else {
                format!("<think>reasoning {i}</think><answer>entirely different</answer>")
            };
            responses.push(serde_json::json!({"id": id, "response": answer}).to_string());
        }
        write_lines(&input_path, &inputs);
        write_lines(&responses_path, &responses);
        BenchmarkSpec {
            name: "toy-binary".to_string(),
            kind: BenchmarkKind::Binary,
            input: input_path,
            generation: GenerationSource::Precomputed {
                path: responses_path,
            },
        }
    }

    #[test]
    fn generation_strips_reasoning_and_keeps_raw() {
        let dir = tempfile::tempdir().unwrap();
        let spec = binary_fixture(dir.path(), 1, 1);
        let records = stage_generate(&spec, load_records(&spec).unwrap()).unwrap();
        assert_eq!(
            records[0].raw_response.as_deref(),
            Some("<think>reasoning 0</think><answer>answer 0</answer>")
        );
        assert_eq!(
            records[0].stripped_response.as_deref(),
            Some("<answer>answer 0</answer>")
        );
    }

    #[test]
    fn missing_precomputed_id_flags_the_record() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = binary_fixture(dir.path(), 2, 2);
        // Rewrite responses with one id missing.
        let responses_path = dir.path().join("partial.jsonl");
        write_lines(
            &responses_path,
            &[
                serde_json::json!({"id": "r0", "response": "<answer>answer 0</answer>"})
                    .to_string(),
            ],
        );
        spec.generation = GenerationSource::Precomputed {
            path: responses_path,
        };
        let records = stage_generate(&spec, load_records(&spec).unwrap()).unwrap();
        assert!(records[0].error.is_none());
        assert!(records[1].error.as_deref().unwrap().contains("r1"));
        let judge = MockJudge::new();
        let judged = stage_judge(records, &spec, &judge);
        let score = stage_score(&judged, &spec).unwrap();
        assert_eq!((score.scored, score.failed), (1, 1));
    }

    #[test]
    fn binary_benchmark_means_are_exact() {
        let dir = tempfile::tempdir().unwrap();
        let spec = binary_fixture(dir.path(), 13, 20);
        let judge = MockJudge::new();
        let judged = stage_judge(
            stage_generate(&spec, load_records(&spec).unwrap()).unwrap(),
            &spec,
            &judge,
        );
        let score = stage_score(&judged, &spec).unwrap();
        assert_eq!(score.mean, 0.65);
        assert_eq!(score.scored, 20);
    }

    #[test]
    fn rubric_scores_normalize_before_averaging() {
        let dir = tempfile::tempdir().unwrap();
        let input_path = dir.path().join("rubric.jsonl");
        let responses_path = dir.path().join("rubric_responses.jsonl");
        let scores = [5u8, 4, 3];
        let mut inputs = Vec::new();
        let mut responses = Vec::new();
        for (i, _) in scores.iter().enumerate() {
            let id = format!("rep{i}");
            inputs.push(
                serde_json::json!({
                    "id": id,
                    "question": format!("summarize case {i}"),
                    "reference": format!("reference report {i}"),
                })
                .to_string(),
            );
            responses.push(
                serde_json::json!({"id": id, "response": format!("generated report {i}")})
                    .to_string(),
            );
        }
        write_lines(&input_path, &inputs);
        write_lines(&responses_path, &responses);
        let spec = BenchmarkSpec {
            name: "toy-rubric".to_string(),
            kind: BenchmarkKind::Rubric,
            input: input_path,
            generation: GenerationSource::Precomputed {
                path: responses_path,
            },
        };
        let entries = scores
            .iter()
            .enumerate()
            .map(|(i, s)| crate::judge::MockJudgeEntry {
                template: Some(JudgeTemplate::Mimic),
                candidate: format!("generated report {i}"),
                reference: None,
                response: format!("{{\"score\": {s}}}"),
            })
            .collect();
        let judge = MockJudge::with_entries(entries);
        let judged = stage_judge(
            stage_generate(&spec, load_records(&spec).unwrap()).unwrap(),
            &spec,
            &judge,
        );
        assert_eq!(
            judged.iter().map(|r| r.score.unwrap()).collect::<Vec<_>>(),
            vec![1.0, 0.8, 0.6]
        );
        let score = stage_score(&judged, &spec).unwrap();
        assert_eq!(score.mean, 0.8);
    }

    #[test]
    fn judge_failures_are_flagged_counted_and_excluded() {
        let dir = tempfile::tempdir().unwrap();
        let spec = binary_fixture(dir.path(), 2, 3);
        // Script a malformed response for the last record's candidate so the
        // judge errors after retries.
        let judge = MockJudge::with_entries(vec![crate::judge::MockJudgeEntry {
            template: None,
            candidate: "<answer>entirely different</answer>".into(),
            reference: None,
            response: "no verdict here, not even a decision word".into(),
        }]);
        let judged = stage_judge(
            stage_generate(&spec, load_records(&spec).unwrap()).unwrap(),
            &spec,
            &judge,
        );
        let failed: Vec<&EvalRecord> = judged.iter().filter(|r| r.error.is_some()).collect();
        assert_eq!(failed.len(), 1);
        assert!(failed[0].error.as_deref().unwrap().contains("judge failed"));
        assert!(failed[0].verdict.is_none() && failed[0].score.is_none());
        let score = stage_score(&judged, &spec).unwrap();
        assert_eq!((score.scored, score.failed), (2, 1));
        assert_eq!(score.mean, 1.0);
    }

    #[test]
    fn zero_scored_records_is_an_error_naming_the_benchmark() {
        let dir = tempfile::tempdir().unwrap();
        let spec = binary_fixture(dir.path(), 1, 2);
        let records = load_records(&spec).unwrap();
        // Nothing was generated or judged.
        let err = stage_score(&records, &spec).unwrap_err();
        assert!(matches!(err, EvalError::NoScoredRecords(name) if name == "toy-binary"));
    }

    #[test]
    fn macro_average_ignores_benchmark_sizes() {
        let report = build_report(vec![
            BenchmarkScore {
                name: "a".into(),
                kind: BenchmarkKind::Binary,
                mean: 0.4,
                scored: 100,
                failed: 0,
            },
            BenchmarkScore {
                name: "b".into(),
                kind: BenchmarkKind::Binary,
                mean: 0.6,
                scored: 3,
                failed: 0,
            },
        ]);
        assert_eq!(report.macro_avg, 0.5);
    }

    #[test]
    fn judge_order_independence() {
        let dir = tempfile::tempdir().unwrap();
        let spec = binary_fixture(dir.path(), 7, 12);
        let judge = MockJudge::new();
        let mut records = stage_generate(&spec, load_records(&spec).unwrap()).unwrap();
        let forward = stage_score(&stage_judge(records.clone(), &spec, &judge), &spec).unwrap();
        records.reverse();
        let backward = stage_score(&stage_judge(records, &spec, &judge), &spec).unwrap();
        assert_eq!(forward.mean, backward.mean);
    }

    #[test]
    fn pipeline_is_idempotent_under_resume() {
        let dir = tempfile::tempdir().unwrap();
        let spec = binary_fixture(dir.path(), 13, 20);
        let suite = EvalSuite {
            benchmarks: vec![spec],
        };
        let judge = MockJudge::new();
        let out_dir = dir.path().join("run");
        let pipeline = EvalPipeline {
            suite,
            judge: &judge,
            out_dir: out_dir.clone(),
            resume: false,
        };
        let first = pipeline.run().unwrap();
        assert_eq!(first.macro_avg, 0.65);
        let calls_after_first = judge.call_count();
        let snapshot = |p: &Path| {
            let mut files: Vec<(PathBuf, Vec<u8>)> = walk(p);
            files.sort();
            files
        };
        let before = snapshot(&out_dir);
        let resumed = EvalPipeline {
            resume: true,
            ..pipeline
        };
        let second = resumed.run().unwrap();
        assert_eq!(second, first);
        // No stage re-executed: the judge was never called again.
        assert_eq!(judge.call_count(), calls_after_first);
        assert_eq!(snapshot(&out_dir), before);
    }

    #[test]
    fn resume_refuses_on_fingerprint_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let spec = binary_fixture(dir.path(), 2, 4);
        let judge = MockJudge::new();
        let out_dir = dir.path().join("run");
        EvalPipeline {
            suite: EvalSuite {
                benchmarks: vec![spec.clone()],
            },
            judge: &judge,
            out_dir: out_dir.clone(),
            resume: false,
        }
        .run()
        .unwrap();
        let mut changed = spec;
        changed.name = "renamed".into();
        let err = EvalPipeline {
            suite: EvalSuite {
                benchmarks: vec![changed],
            },
            judge: &judge,
            out_dir,
            resume: true,
        }
        .run()
        .unwrap_err();
        assert!(matches!(err, EvalError::ConfigMismatch { .. }));
    }

    fn walk(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
        let mut files = Vec::new();
        for entry in fs::read_dir(dir).unwrap() {
            let entry = entry.unwrap();
            let path = entry.path();
            if path.is_dir() {
                files.extend(walk(&path));
            } else {
                files.push((path.clone(), fs::read(&path).unwrap()));
            }
        }
        files
    }
}
