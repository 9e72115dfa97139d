//! Parsing, validation, and normalization of the structured output contract.
//!
//! Every completion is expected to look like
//! `[modality tag]<think>reasoning</think><answer>final answer</answer>`.
//! [`parse_completion`] is total: malformed input never fails, it yields a
//! [`StructuredCompletion`] with `format_valid = false` and absent spans.
//!
//! Format validity is decided by anchoring at the first `<think>` occurrence
//! and matching `<think>…</think>` + optional whitespace + `<answer>…</answer>`
//! against the whole remaining (trimmed) text, dot-all. Note that the lazy
//! wildcards expand when the end anchor forces them to, so inputs such as
//! `<think>a</think>mid<think>b</think><answer>c</answer>` are valid with the
//! think span covering everything up to the last `</think>`.

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The sixteen canonical imaging-modality tags a completion may open with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ModalityTag {
    XRay,
    Microscopy,
    ClinicalPhotography,
    CtScan,
    Graphics,
    Angiography,
    PetScan,
    Ultrasound,
    MriScan,
    FundusPhotography,
    OctScan,
    Endoscopy,
    Mammography,
    Fluoroscopy,
    Other,
    Spect,
}

impl ModalityTag {
    pub const ALL: [ModalityTag; 16] = [
        ModalityTag::XRay,
        ModalityTag::Microscopy,
        ModalityTag::ClinicalPhotography,
        ModalityTag::CtScan,
        ModalityTag::Graphics,
        ModalityTag::Angiography,
        ModalityTag::PetScan,
        ModalityTag::Ultrasound,
        ModalityTag::MriScan,
        ModalityTag::FundusPhotography,
        ModalityTag::OctScan,
        ModalityTag::Endoscopy,
        ModalityTag::Mammography,
        ModalityTag::Fluoroscopy,
        ModalityTag::Other,
        ModalityTag::Spect,
    ];

    /// Upper-case tag name without angle brackets, e.g. `X_RAY`.
    pub fn name(self) -> &'static str {
        match self {
            ModalityTag::XRay => "X_RAY",
            ModalityTag::Microscopy => "MICROSCOPY",
            ModalityTag::ClinicalPhotography => "CLINICAL_PHOTOGRAPHY",
            ModalityTag::CtScan => "CT_SCAN",
            ModalityTag::Graphics => "GRAPHICS",
            ModalityTag::Angiography => "ANGIOGRAPHY",
            ModalityTag::PetScan => "PET_SCAN",
            ModalityTag::Ultrasound => "ULTRASOUND",
            ModalityTag::MriScan => "MRI_SCAN",
            ModalityTag::FundusPhotography => "FUNDUS_PHOTOGRAPHY",
            ModalityTag::OctScan => "OCT_SCAN",
            ModalityTag::Endoscopy => "ENDOSCOPY",
            ModalityTag::Mammography => "MAMMOGRAPHY",
            ModalityTag::Fluoroscopy => "FLUOROSCOPY",
            ModalityTag::Other => "OTHER",
            ModalityTag::Spect => "SPECT",
        }
    }

    /// Canonical surface form: `<NAME>` in upper case.
    pub fn surface(self) -> String {
        format!("<{}>", self.name())
    }

    /// Parse a surface form such as `<x_ray>`.
    ///
    /// Requires the angle brackets; matching is case-insensitive after
    /// trimming. Bare names (`X_RAY`) and unknown tags (`<XRAY>`) yield
    /// `None` — completions carrying them score no modality reward rather
    /// than being coerced to a fallback tag.
    pub fn from_surface(s: &str) -> Option<Self> {
        let s = s.trim();
        let inner = s.strip_prefix('<')?.strip_suffix('>')?;
        Self::ALL
            .iter()
            .copied()
            .find(|tag| tag.name().eq_ignore_ascii_case(inner))
    }
}

impl std::fmt::Display for ModalityTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A parsed model output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredCompletion {
    /// Original text, kept verbatim for reward scoring.
    pub raw: String,
    /// Canonicalized tag preceding the first `<think>`, if it is a known tag.
    pub modality: Option<ModalityTag>,
    /// Inner span of the think block (only when `format_valid`).
    pub think: Option<String>,
    /// Inner span of the answer block (only when `format_valid`).
    pub answer: Option<String>,
    pub format_valid: bool,
}

/// A ground-truth reference of the form `<TAG> answer-text`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceAnswer {
    pub raw: String,
    pub modality: ModalityTag,
    /// Normalized answer text (trimmed, leading/trailing dots stripped).
    pub answer: String,
}

#[derive(Debug, Error)]
pub enum ReferenceParseError {
    #[error("reference `{0}` has no `>` tag delimiter")]
    MissingTagDelimiter(String),
    #[error("reference `{raw}` carries unknown modality tag `{tag}`")]
    UnknownModalityTag { raw: String, tag: String },
}

impl ReferenceAnswer {
    /// Split `<TAG> answer` at the first `>`; the tag must be one of the
    /// sixteen known modalities.
    pub fn parse(raw: &str) -> Result<Self, ReferenceParseError> {
        let pos = raw
            .find('>')
            .ok_or_else(|| ReferenceParseError::MissingTagDelimiter(raw.to_string()))?;
        let tag = raw[..=pos].trim();
        let modality = ModalityTag::from_surface(tag).ok_or_else(|| {
            ReferenceParseError::UnknownModalityTag {
                raw: raw.to_string(),
                tag: tag.to_string(),
            }
        })?;
        Ok(ReferenceAnswer {
            raw: raw.to_string(),
            modality,
            answer: normalize_answer(&raw[pos + 1..]).to_string(),
        })
    }
}

static TAG_WHITESPACE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"<\s*(/?)\s*(think|answer)\s*>").unwrap());
static FORMAT_PATTERN: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?s)^<think>(.*?)</think>\s*<answer>(.*?)</answer>$").unwrap());
static ANSWER_BLOCK: Lazy<Regex> = Lazy::new(|| Regex::new(r"(?s)<answer>(.*?)</answer>").unwrap());

/// Collapse stray whitespace immediately inside tag delimiters
/// (`< think >` → `<think>`) so sloppy but unambiguous tags parse.
pub fn normalize_tag_whitespace(raw: &str) -> std::borrow::Cow<'_, str> {
    TAG_WHITESPACE.replace_all(raw, "<${1}${2}>")
}

/// Parse arbitrary text into a [`StructuredCompletion`]. Total: never fails.
pub fn parse_completion(raw: &str) -> StructuredCompletion {
    let normalized = normalize_tag_whitespace(raw);
    let Some(idx) = normalized.find("<think>") else {
        return StructuredCompletion {
            raw: raw.to_string(),
            modality: None,
            think: None,
            answer: None,
            format_valid: false,
        };
    };
    let modality = ModalityTag::from_surface(normalized[..idx].trim());
    let tail = normalized[idx..].trim();
    match FORMAT_PATTERN.captures(tail) {
        Some(caps) => StructuredCompletion {
            raw: raw.to_string(),
            modality,
            think: Some(caps[1].to_string()),
            answer: Some(caps[2].to_string()),
            format_valid: true,
        },
        None => StructuredCompletion {
            raw: raw.to_string(),
            modality,
            think: None,
            answer: None,
            format_valid: false,
        },
    }
}

/// Trim whitespace, then strip leading/trailing `.` characters.
pub fn normalize_answer(span: &str) -> &str {
    span.trim().trim_matches('.')
}

/// The answer text accuracy rewards operate on: the first `<answer>…</answer>`
/// block if one exists anywhere in the text, otherwise the whole text.
/// Deliberately independent of format validity, and already normalized.
pub fn scoring_answer(raw: &str) -> String {
    let normalized = normalize_tag_whitespace(raw);
    match ANSWER_BLOCK.captures(&normalized) {
        Some(caps) => normalize_answer(&caps[1]).to_string(),
        None => normalize_answer(&normalized).to_string(),
    }
}

/// Drop everything up to and including the last `</think>`. Identity when the
/// tag is absent. Used by the evaluation pipeline only, never by rewards.
pub fn strip_reasoning(raw: &str) -> &str {
    match raw.rfind("</think>") {
        Some(idx) => &raw[idx + "</think>".len()..],
        None => raw,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_canonical_completion() {
        let c = parse_completion(
            "<X_RAY><think>PA view reduces magnification</think> <answer>smaller</answer>",
        );
        assert!(c.format_valid);
        assert_eq!(c.modality, Some(ModalityTag::XRay));
        assert_eq!(c.think.as_deref(), Some("PA view reduces magnification"));
        assert_eq!(c.answer.as_deref(), Some("smaller"));
    }

    #[test]
    fn empty_input_is_invalid() {
        let c = parse_completion("");
        assert!(!c.format_valid);
        assert!(c.modality.is_none() && c.think.is_none() && c.answer.is_none());
    }

    #[test]
    fn trailing_text_breaks_format() {
        let c = parse_completion("<think>a</think><answer>b</answer> trailing");
        assert!(!c.format_valid);
        assert!(c.answer.is_none());
    }

    #[test]
    fn lazy_spans_expand_under_end_anchor() {
        // The end anchor forces the think span across the intermediate close.
        let c = parse_completion("<think>a</think>mid<think>b</think><answer>c</answer>");
        assert!(c.format_valid);
        assert_eq!(c.think.as_deref(), Some("a</think>mid<think>b"));
        assert_eq!(c.answer.as_deref(), Some("c"));
    }

    #[test]
    fn unknown_modality_is_absent_not_other() {
        let c = parse_completion("<XRAY><think>r</think><answer>a</answer>");
        assert!(c.format_valid);
        assert_eq!(c.modality, None);
    }

    #[test]
    fn modality_parse_is_case_insensitive_and_idempotent() {
        for tag in ModalityTag::ALL {
            assert_eq!(ModalityTag::from_surface(&tag.surface()), Some(tag));
            assert_eq!(
                ModalityTag::from_surface(&tag.surface().to_lowercase()),
                Some(tag)
            );
        }
        assert_eq!(ModalityTag::from_surface("X_RAY"), None); // brackets required
        assert_eq!(ModalityTag::from_surface("<XRAY>"), None);
    }

    #[test]
    fn tag_whitespace_is_collapsed_before_matching() {
        let c = parse_completion("<x_ray>< think >r</ think ><answer>a</answer>");
        assert!(c.format_valid);
        assert_eq!(c.modality, Some(ModalityTag::XRay));
        assert_eq!(c.answer.as_deref(), Some("a"));
    }

    #[test]
    fn normalize_answer_examples() {
        assert_eq!(normalize_answer(" Low perfusion. "), "Low perfusion");
        assert_eq!(normalize_answer(""), "");
        assert_eq!(normalize_answer("B."), "B");
        assert_eq!(normalize_answer("..x .."), "x ");
    }

    #[test]
    fn strip_reasoning_examples() {
        assert_eq!(
            strip_reasoning("<think>x</think><answer>y</answer>"),
            "<answer>y</answer>"
        );
        assert_eq!(strip_reasoning("no tags here"), "no tags here");
        assert_eq!(
            strip_reasoning("<think>a</think>mid<think>b</think>tail"),
            "tail"
        );
    }

    #[test]
    fn scoring_answer_falls_back_to_whole_text() {
        assert_eq!(scoring_answer("<answer> B. </answer> junk"), "B");
        assert_eq!(scoring_answer("plain text."), "plain text");
        assert_eq!(
            scoring_answer("<think>t</think><answer>first</answer><answer>second</answer>"),
            "first"
        );
    }

    #[test]
    fn reference_answer_parsing() {
        let r = ReferenceAnswer::parse("<X_RAY> smaller.").unwrap();
        assert_eq!(r.modality, ModalityTag::XRay);
        assert_eq!(r.answer, "smaller");
        assert!(ReferenceAnswer::parse("no delimiter").is_err());
        assert!(ReferenceAnswer::parse("<BOGUS> x").is_err());
    }

    #[test]
    fn answer_before_think_never_valid() {
        let c = parse_completion("<answer>b</answer><think>a</think>");
        assert!(!c.format_valid);
    }

    fn tagless() -> impl Strategy<Value = String> {
        // Arbitrary-ish text that cannot fabricate think/answer tags.
        proptest::string::string_regex("[ -;=?-~\n]{0,40}").unwrap()
    }

    proptest! {
        #[test]
        fn roundtrip_on_valid_outputs(
            think in tagless(),
            answer in tagless(),
            tag_idx in 0usize..16,
            with_tag in proptest::bool::ANY,
        ) {
            let tag = ModalityTag::ALL[tag_idx];
            let prefix = if with_tag { tag.surface() } else { String::new() };
            let raw = format!("{prefix}<think>{think}</think><answer>{answer}</answer>");
            let parsed = parse_completion(&raw);
            prop_assert!(parsed.format_valid);
            let reser = format!(
                "{}<think>{}</think><answer>{}</answer>",
                parsed.modality.map(ModalityTag::surface).unwrap_or_default(),
                parsed.think.as_deref().unwrap(),
                parsed.answer.as_deref().unwrap()
            );
            let reparsed = parse_completion(&reser);
            prop_assert!(reparsed.format_valid);
            prop_assert_eq!(reparsed.modality, parsed.modality);
            prop_assert_eq!(reparsed.think, parsed.think);
            prop_assert_eq!(reparsed.answer, parsed.answer);
        }

        #[test]
        fn parse_is_total(raw in ".{0,120}") {
            let _ = parse_completion(&raw);
        }

        #[test]
        fn strip_reasoning_idempotent(raw in ".{0,120}") {
            let once = strip_reasoning(&raw);
            prop_assert_eq!(strip_reasoning(once), once);
        }

        #[test]
        fn answer_block_before_think_rejected(a in tagless(), b in tagless()) {
            let raw = format!("<answer>{a}</answer><think>{b}</think>");
            prop_assert!(!parse_completion(&raw).format_valid);
        }
    }
}
