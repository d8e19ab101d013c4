//! Biased-feature definitions and their per-sample extractors.
//!
//! Every extractor maps a sample onto one member of its spec's discrete
//! value space. Continuous measurements (the overlap rate) are binned;
//! open-ended values (who a QA answer names) are regularized by asking a
//! classifier backend for a coarse verdict.

mod text;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{Backend, BackendError, ClassifyRequest};
use crate::corpus::{Dataset, Sample, Task};

pub use text::{lexical_overlap_rate, tokenize, NegationLexicon};

const DEFAULT_FEATURES: &str = include_str!("../../config/features.toml");

pub const ABSENT: &str = "absent";
pub const PRESENT: &str = "present";
pub const HIGH: &str = "high";
pub const LOW: &str = "low";

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("text has no tokens")]
    EmptyText,
    #[error("feature `{0}` has no bins")]
    NoBins(String),
    #[error("raw value {0} is outside [0, 1]")]
    OutOfRange(f64),
    #[error("invalid feature spec `{name}`: {reason}")]
    InvalidSpec { name: String, reason: String },
    #[error("invalid feature config: {0}")]
    InvalidConfig(String),
    #[error("invalid negation lexicon: {0}")]
    InvalidLexicon(String),
    #[error("could not locate segments `{first}` / `{second}` in the instruction")]
    MissingSegments { first: String, second: String },
    #[error("answer `{answer}` matches none of the answer classes of `{feature}`")]
    UnmatchedAnswer { feature: String, answer: String },
    #[error("classifier unavailable: {0}")]
    OracleUnavailable(#[source] BackendError),
    #[error("classifier returned an unparsable verdict: {0:?}")]
    UnparsableVerdict(String),
    #[error("sample `{id}`: {source}")]
    Sample {
        id: String,
        #[source]
        source: Box<FeatureError>,
    },
}

impl FeatureError {
    fn for_sample(self, id: &str) -> Self {
        FeatureError::Sample {
            id: id.to_string(),
            source: Box::new(self),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractorKind {
    LexicalOverlap,
    NegationPresence,
    Popularity,
    CustomClassifier,
}

/// Whether intervening on the feature necessarily moves the answer class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    #[default]
    Independent,
    AnswerEqualsFeature,
}

/// Which side of a sentence pair the overlap rate is normalized by.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapSide {
    First,
    #[default]
    Second,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bin {
    /// Inclusive upper bound.
    pub upper: f64,
    pub label: String,
}

/// Markers that delimit the two sentences of a pair task inside the
/// instruction text. The second segment runs to `end`, the next newline,
/// or the end of the text, whichever comes first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentMarkers {
    pub first: String,
    pub second: String,
    #[serde(default)]
    pub end: Option<String>,
}

/// Byte ranges of the two sentences within an instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentSpans {
    pub first: (usize, usize),
    pub second: (usize, usize),
}

impl SegmentMarkers {
    pub fn locate(&self, text: &str) -> Option<SegmentSpans> {
        let a_marker = text.find(&self.first)?;
        let a_start = a_marker + self.first.len();
        let b_marker = a_start + text[a_start..].find(&self.second)?;
        let b_start = b_marker + self.second.len();
        let rest = &text[b_start..];
        let mut b_len = rest.find('\n').unwrap_or(rest.len());
        if let Some(end) = self.end.as_deref() {
            if let Some(pos) = rest.find(end) {
                b_len = b_len.min(pos);
            }
        }
        Some(SegmentSpans {
            first: (a_start, b_marker),
            second: (b_start, b_start + b_len),
        })
    }

    pub fn split<'t>(&self, text: &'t str) -> Option<(&'t str, &'t str)> {
        let spans = self.locate(text)?;
        Some((
            text[spans.first.0..spans.first.1].trim(),
            text[spans.second.0..spans.second.1].trim(),
        ))
    }
}

/// A few-shot demonstration for rewriting from `from` to `to`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exemplar {
    pub from: String,
    pub to: String,
    pub before: String,
    pub after: String,
}

/// Definition of one biased feature for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpec {
    pub name: String,
    pub task: Task,
    pub extractor: ExtractorKind,
    pub value_space: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bins: Vec<Bin>,
    pub answer_classes: Vec<String>,
    /// Extra answer spellings mapped onto a class, e.g. `yes -> entailment`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub answer_aliases: BTreeMap<String, String>,
    #[serde(default)]
    pub coupling: Coupling,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segments: Option<SegmentMarkers>,
    #[serde(default)]
    pub overlap_denominator: OverlapSide,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exemplars: Vec<Exemplar>,
}

impl FeatureSpec {
    pub fn validate(&self) -> Result<(), FeatureError> {
        let fail = |reason: &str| FeatureError::InvalidSpec {
            name: self.name.clone(),
            reason: reason.to_string(),
        };
        if self.name.trim().is_empty() {
            return Err(fail("name is empty"));
        }
        if self.value_space.is_empty() || !distinct(&self.value_space) {
            return Err(fail("value_space must be non-empty with distinct values"));
        }
        if self.answer_classes.is_empty() || !distinct(&self.answer_classes) {
            return Err(fail("answer_classes must be non-empty with distinct values"));
        }
        if !self.bins.is_empty() {
            if self.bins.windows(2).any(|w| w[0].upper >= w[1].upper) {
                return Err(fail("bin upper bounds must be strictly increasing"));
            }
            if self.bins[0].upper < 0.0 || self.bins[self.bins.len() - 1].upper < 1.0 {
                return Err(fail("bins must cover [0, 1]"));
            }
            if let Some(b) = self.bins.iter().find(|b| !self.value_space.contains(&b.label)) {
                return Err(fail(&format!("bin label `{}` is not in value_space", b.label)));
            }
        }
        if self.coupling == Coupling::AnswerEqualsFeature && self.answer_classes.len() != self.value_space.len() {
            return Err(fail("coupled specs need as many answer classes as feature values"));
        }
        for class in self.answer_aliases.values() {
            if !self.answer_classes.contains(class) {
                return Err(fail(&format!("alias target `{class}` is not an answer class")));
            }
        }
        for ex in &self.exemplars {
            if !self.value_space.contains(&ex.from) || !self.value_space.contains(&ex.to) {
                return Err(fail("exemplar direction uses values outside value_space"));
            }
        }
        let has = |v: &str| self.value_space.iter().any(|x| x == v);
        match self.extractor {
            ExtractorKind::LexicalOverlap => {
                if self.bins.is_empty() {
                    return Err(fail("lexical_overlap needs bins"));
                }
                if self.segments.is_none() {
                    return Err(fail("lexical_overlap needs segment markers"));
                }
            }
            ExtractorKind::NegationPresence => {
                if self.value_space.len() != 2 || !has(ABSENT) || !has(PRESENT) {
                    return Err(fail("negation_presence values must be {absent, present}"));
                }
            }
            ExtractorKind::Popularity => {
                if self.value_space.len() != 2 || !has(HIGH) || !has(LOW) {
                    return Err(fail("popularity values must be {high, low}"));
                }
            }
            ExtractorKind::CustomClassifier => {}
        }
        Ok(())
    }

    pub fn value_index(&self, value: &str) -> Option<usize> {
        self.value_space.iter().position(|v| v == value)
    }

    pub fn class_index(&self, class: &str) -> Option<usize> {
        self.answer_classes.iter().position(|c| c == class)
    }

    /// The answer class tied to a feature value under coupling.
    pub fn coupled_class(&self, value: &str) -> Option<&str> {
        self.value_index(value).map(|i| self.answer_classes[i].as_str())
    }

    /// Answer class of a sample whose feature value is `value`.
    pub fn answer_class(&self, sample: &Sample, value: &str) -> Result<String, FeatureError> {
        if self.coupling == Coupling::AnswerEqualsFeature {
            return self
                .coupled_class(value)
                .map(str::to_string)
                .ok_or_else(|| FeatureError::InvalidSpec {
                    name: self.name.clone(),
                    reason: format!("value `{value}` is not in value_space"),
                });
        }
        let answer = normalize_label(&sample.answer);
        if let Some(class) = self.answer_classes.iter().find(|c| normalize_label(c) == answer) {
            return Ok(class.clone());
        }
        if let Some((_, class)) = self
            .answer_aliases
            .iter()
            .find(|(alias, _)| normalize_label(alias) == answer)
        {
            return Ok(class.clone());
        }
        Err(FeatureError::UnmatchedAnswer {
            feature: self.name.clone(),
            answer: sample.answer.clone(),
        })
    }

    /// Closed interval of raw values that bin to `label`.
    pub fn bin_range(&self, label: &str) -> Option<(f64, f64)> {
        let idx = self.bins.iter().position(|b| b.label == label)?;
        let lower = if idx == 0 { 0.0 } else { self.bins[idx - 1].upper };
        Some((lower, self.bins[idx].upper.min(1.0)))
    }

    pub fn exemplars_for(&self, from: &str, to: &str) -> Vec<Exemplar> {
        self.exemplars
            .iter()
            .filter(|e| e.from == from && e.to == to)
            .cloned()
            .collect()
    }
}

fn distinct(values: &[String]) -> bool {
    values.iter().collect::<BTreeSet<_>>().len() == values.len()
}

fn normalize_label(s: &str) -> String {
    s.trim().trim_end_matches('.').trim().to_lowercase()
}

/// One extracted feature value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureValue {
    pub value: String,
    /// Pre-binning measurement, when the extractor has one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<f64>,
    /// Raw classifier response, kept for audit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<String>,
}

impl FeatureValue {
    pub fn new(value: impl Into<String>) -> Self {
        Self {
            value: value.into(),
            raw: None,
            verdict: None,
        }
    }
}

impl fmt::Display for FeatureValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.value)
    }
}

/// A validated set of feature specs, at most one name per task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureConfig {
    #[serde(rename = "feature", default)]
    features: Vec<FeatureSpec>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self::parse(DEFAULT_FEATURES).expect("bundled feature config is valid")
    }
}

impl FeatureConfig {
    pub fn new(features: Vec<FeatureSpec>) -> Result<Self, FeatureError> {
        let config = Self { features };
        config.validate()?;
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self, FeatureError> {
        let config: Self = toml::from_str(text).map_err(|e| FeatureError::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, FeatureError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| FeatureError::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn validate(&self) -> Result<(), FeatureError> {
        let mut names = BTreeSet::new();
        for spec in &self.features {
            spec.validate()?;
            if !names.insert((spec.task, spec.name.as_str())) {
                return Err(FeatureError::InvalidConfig(format!(
                    "feature `{}` is defined twice for {}",
                    spec.name, spec.task
                )));
            }
        }
        Ok(())
    }

    pub fn specs(&self) -> &[FeatureSpec] {
        &self.features
    }

    pub fn for_task(&self, task: Task) -> impl Iterator<Item = &FeatureSpec> + '_ {
        self.features.iter().filter(move |s| s.task == task)
    }

    pub fn get(&self, task: Task, name: &str) -> Option<&FeatureSpec> {
        self.features.iter().find(|s| s.task == task && s.name == name)
    }

    pub fn covers(&self, task: Task) -> bool {
        self.features.iter().any(|s| s.task == task)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("feature config serializes")
    }
}

/// Returns the label of the first bin whose upper bound is at least `raw`.
pub fn bin_feature(raw: f64, spec: &FeatureSpec) -> Result<FeatureValue, FeatureError> {
    if spec.bins.is_empty() {
        return Err(FeatureError::NoBins(spec.name.clone()));
    }
    if !(0.0..=1.0).contains(&raw) {
        return Err(FeatureError::OutOfRange(raw));
    }
    let bin = spec
        .bins
        .iter()
        .find(|b| raw <= b.upper)
        .expect("validated bins cover [0, 1]");
    Ok(FeatureValue {
        value: bin.label.clone(),
        raw: Some(raw),
        verdict: None,
    })
}

pub fn detect_negation(text: &str, lexicon: &NegationLexicon) -> FeatureValue {
    FeatureValue::new(if lexicon.matches(text) { PRESENT } else { ABSENT })
}

/// Parses a classifier response into one of `choices`.
///
/// Accepts an exact match after trimming quotes and punctuation, or a
/// response in which exactly one choice appears as a whole phrase.
pub fn parse_verdict(response: &str, choices: &[String]) -> Option<String> {
    let cleaned = response
        .trim()
        .trim_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace())
        .to_lowercase();
    if let Some(c) = choices.iter().find(|c| c.to_lowercase() == cleaned) {
        return Some(c.clone());
    }
    let tokens = tokenize(&cleaned);
    let hits: Vec<&String> = choices
        .iter()
        .filter(|c| {
            let needle = tokenize(c);
            !needle.is_empty() && tokens.windows(needle.len()).any(|w| w == needle.as_slice())
        })
        .collect();
    match hits.as_slice() {
        [one] => Some((*one).clone()),
        _ => None,
    }
}

fn query_verdict(oracle: &dyn Backend, request: &ClassifyRequest) -> Result<FeatureValue, FeatureError> {
    let mut last = String::new();
    // one re-query on a malformed answer, then give up
    for _ in 0..2 {
        let response = match oracle.classify(request) {
            Ok(r) => r,
            Err(BackendError::EmptyCompletion) => String::new(),
            Err(e) => return Err(FeatureError::OracleUnavailable(e)),
        };
        if let Some(value) = parse_verdict(&response, &request.choices) {
            return Ok(FeatureValue {
                value,
                raw: None,
                verdict: Some(response),
            });
        }
        last = response;
    }
    Err(FeatureError::UnparsableVerdict(last))
}

/// Asks the classifier whether the entity in `entity_context` is popular.
pub fn classify_popularity(entity_context: &str, oracle: &dyn Backend) -> Result<FeatureValue, FeatureError> {
    query_verdict(oracle, &ClassifyRequest::popularity(entity_context))
}

/// Per-sample extraction with access to the lexicon and the classifier.
#[derive(Clone, Copy)]
pub struct Extractor<'a> {
    lexicon: &'a NegationLexicon,
    oracle: &'a dyn Backend,
}

impl<'a> Extractor<'a> {
    pub fn new(lexicon: &'a NegationLexicon, oracle: &'a dyn Backend) -> Self {
        Self { lexicon, oracle }
    }

    pub fn lexicon(&self) -> &NegationLexicon {
        self.lexicon
    }

    pub fn extract(&self, sample: &Sample, spec: &FeatureSpec) -> Result<FeatureValue, FeatureError> {
        match spec.extractor {
            ExtractorKind::NegationPresence => Ok(detect_negation(&sample.instruction, self.lexicon)),
            ExtractorKind::LexicalOverlap => {
                let markers = spec.segments.as_ref().ok_or_else(|| FeatureError::InvalidSpec {
                    name: spec.name.clone(),
                    reason: "lexical_overlap needs segment markers".into(),
                })?;
                let (first, second) =
                    markers
                        .split(&sample.instruction)
                        .ok_or_else(|| FeatureError::MissingSegments {
                            first: markers.first.clone(),
                            second: markers.second.clone(),
                        })?;
                let rate = match spec.overlap_denominator {
                    OverlapSide::Second => lexical_overlap_rate(first, second)?,
                    OverlapSide::First => lexical_overlap_rate(second, first)?,
                };
                bin_feature(rate, spec)
            }
            ExtractorKind::Popularity => classify_popularity(&sample.answer, self.oracle),
            ExtractorKind::CustomClassifier => {
                let context = format!("{}\n{}", sample.instruction, sample.answer);
                let request = ClassifyRequest::custom(&spec.name, &context, &spec.value_space);
                query_verdict(self.oracle, &request)
            }
        }
    }

    /// Extracts every spec of the sample's task and checks its answer
    /// class, returning the sample with a fresh `feature_values` map.
    pub fn extract_sample(&self, sample: &Sample, specs: &[FeatureSpec]) -> Result<Sample, FeatureError> {
        let mut values = BTreeMap::new();
        for spec in specs.iter().filter(|s| s.task == sample.task) {
            let value = self.extract(sample, spec)?;
            spec.answer_class(sample, &value.value)?;
            values.insert(spec.name.clone(), value);
        }
        let mut out = sample.clone();
        out.feature_values = values;
        Ok(out)
    }
}

/// Re-extracts every configured feature on every sample.
///
/// Samples of tasks without specs come back with an empty map.
pub fn extract_all(ds: &Dataset, config: &FeatureConfig, extractor: &Extractor<'_>) -> Result<Dataset, FeatureError> {
    let samples = ds
        .samples()
        .iter()
        .map(|s| {
            extractor
                .extract_sample(s, config.specs())
                .map_err(|e| e.for_sample(&s.id))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Dataset::new(samples).expect("ids are unchanged"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::MockBackend;

    fn config() -> FeatureConfig {
        FeatureConfig::default()
    }

    fn spec(task: Task) -> FeatureSpec {
        config().for_task(task).next().unwrap().clone()
    }

    #[test]
    fn default_config_has_one_feature_per_task() {
        let cfg = config();
        for (task, kind) in [
            (Task::Qa, ExtractorKind::Popularity),
            (Task::Nli, ExtractorKind::LexicalOverlap),
            (Task::Pi, ExtractorKind::LexicalOverlap),
            (Task::Sa, ExtractorKind::NegationPresence),
        ] {
            let specs: Vec<_> = cfg.for_task(task).collect();
            assert_eq!(specs.len(), 1, "{task}");
            assert_eq!(specs[0].extractor, kind);
        }
        assert_eq!(spec(Task::Qa).coupling, Coupling::AnswerEqualsFeature);
    }

    #[test]
    fn overlap_bins_are_upper_inclusive() {
        let nli = spec(Task::Nli);
        let label = |raw| bin_feature(raw, &nli).unwrap().value;
        assert_eq!(label(0.35), "low");
        assert_eq!(label(0.4), "low");
        assert_eq!(label(0.5), "medium");
        assert_eq!(label(0.6), "medium");
        assert_eq!(label(0.7), "high");
        assert_eq!(label(0.0), "low");
        assert_eq!(label(1.0), "high");
        assert!(matches!(bin_feature(1.2, &nli), Err(FeatureError::OutOfRange(_))));
        assert!(matches!(
            bin_feature(0.5, &spec(Task::Sa)),
            Err(FeatureError::NoBins(_))
        ));
    }

    #[test]
    fn negation_detection() {
        let lex = NegationLexicon::default();
        assert_eq!(detect_negation("this movie is not good", &lex).value, PRESENT);
        assert_eq!(detect_negation("a sunshine state", &lex).value, ABSENT);
        assert_eq!(detect_negation("you cannot forget this visit", &lex).value, PRESENT);
        assert_eq!(detect_negation("  NEVER again  ", &lex).value, PRESENT);
    }

    #[test]
    fn popularity_via_mock_oracle() {
        let mock = MockBackend::default();
        assert_eq!(classify_popularity("James", &mock).unwrap().value, HIGH);
        assert_eq!(classify_popularity("MORGAN Moses", &mock).unwrap().value, LOW);
    }

    #[test]
    fn unparsable_verdict_after_one_requery() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        struct Banana(AtomicUsize);
        impl Backend for Banana {
            fn rewrite(&self, _: &crate::intervene::RewriteRequest, _: u32) -> Result<String, BackendError> {
                unreachable!()
            }
            fn classify(&self, _: &ClassifyRequest) -> Result<String, BackendError> {
                self.0.fetch_add(1, Ordering::SeqCst);
                Ok("banana".into())
            }
        }
        let oracle = Banana(AtomicUsize::new(0));
        let err = classify_popularity("James", &oracle).unwrap_err();
        assert!(matches!(err, FeatureError::UnparsableVerdict(ref r) if r == "banana"));
        assert_eq!(oracle.0.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn verdict_parsing() {
        let choices = vec![HIGH.to_string(), LOW.to_string()];
        assert_eq!(parse_verdict(" High.", &choices).as_deref(), Some(HIGH));
        assert_eq!(parse_verdict("The popularity is low", &choices).as_deref(), Some(LOW));
        assert_eq!(parse_verdict("high or low", &choices), None);
        assert_eq!(parse_verdict("banana", &choices), None);
    }

    #[test]
    fn answer_classes_exact_match_and_aliases() {
        let sa = spec(Task::Sa);
        let s = Sample::new("1", Task::Sa, "fine", " Positive. ");
        assert_eq!(sa.answer_class(&s, ABSENT).unwrap(), "positive");
        let bad = Sample::new("2", Task::Sa, "fine", "great");
        assert!(matches!(
            sa.answer_class(&bad, ABSENT),
            Err(FeatureError::UnmatchedAnswer { .. })
        ));

        let nli = spec(Task::Nli);
        let yes = Sample::new("3", Task::Nli, "", "yes");
        assert_eq!(nli.answer_class(&yes, "low").unwrap(), "entailment");

        let qa = spec(Task::Qa);
        let q = Sample::new("4", Task::Qa, "who?", "anyone");
        assert_eq!(qa.answer_class(&q, LOW).unwrap(), LOW);
    }

    #[test]
    fn segments_split_pair_instructions() {
        let m = SegmentMarkers {
            first: "Sentence 1:".into(),
            second: "Sentence 2:".into(),
            end: None,
        };
        let text = "Sentence 1: the cat sat.\nSentence 2: a cat sat\nDoes 1 entail 2?";
        assert_eq!(m.split(text), Some(("the cat sat.", "a cat sat")));
        assert_eq!(m.split("no markers"), None);
    }

    #[test]
    fn spec_validation_rejects_bad_definitions() {
        let mut s = spec(Task::Nli);
        s.bins.swap(0, 1);
        assert!(s.validate().is_err());

        let mut s = spec(Task::Nli);
        s.bins.pop();
        assert!(s.validate().is_err(), "bins must reach 1.0");

        let mut s = spec(Task::Qa);
        s.answer_classes.push("medium".into());
        assert!(s.validate().is_err(), "coupling needs a bijection");

        let mut s = spec(Task::Sa);
        s.value_space = vec!["absent".into(), "absent".into()];
        assert!(s.validate().is_err());
    }

    #[test]
    fn extract_all_covers_and_is_idempotent() {
        let ds = Dataset::new(vec![
            Sample::new("a", Task::Sa, "this movie is not good", "negative"),
            Sample::new("b", Task::Sa, "a sunshine state", "positive"),
            Sample::new("c", Task::Qa, "Who wrote it?", "James"),
            Sample::new(
                "d",
                Task::Nli,
                "Sentence 1: the doctor met the lawyer\nSentence 2: the lawyer met the doctor",
                "yes",
            ),
            Sample::new("e", Task::Other, "chat", "hello"),
        ])
        .unwrap();
        let lex = NegationLexicon::default();
        let mock = MockBackend::default();
        let ex = Extractor::new(&lex, &mock);
        let cfg = config();
        let once = extract_all(&ds, &cfg, &ex).unwrap();
        assert_eq!(once.samples()[0].feature_value("negation"), Some(PRESENT));
        assert_eq!(once.samples()[1].feature_value("negation"), Some(ABSENT));
        assert_eq!(once.samples()[2].feature_value("popularity"), Some(HIGH));
        assert_eq!(once.samples()[3].feature_value("lexical_overlap"), Some("high"));
        assert!(once.samples()[4].feature_values.is_empty());
        let twice = extract_all(&once, &cfg, &ex).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn extraction_errors_name_the_sample() {
        let ds = Dataset::new(vec![Sample::new("zz", Task::Sa, "fine", "meh")]).unwrap();
        let lex = NegationLexicon::default();
        let mock = MockBackend::default();
        let err = extract_all(&ds, &config(), &Extractor::new(&lex, &mock)).unwrap_err();
        assert!(matches!(err, FeatureError::Sample { ref id, .. } if id == "zz"));
    }
}
