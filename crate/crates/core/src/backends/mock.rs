//! Deterministic rule-based backend.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Backend, BackendError, ClassifyKind, ClassifyRequest};
use crate::features::{tokenize, ExtractorKind, NegationLexicon, OverlapSide, HIGH, LOW, PRESENT};
use crate::intervene::RewriteRequest;

/// Names the mock classifier considers widely known.
pub const POPULAR_NAMES: &[&str] = &[
    "James",
    "Barack Obama",
    "Taylor Swift",
    "Lionel Messi",
    "Albert Einstein",
    "William Shakespeare",
    "Paris",
    "London",
    "Tokyo",
    "New York",
];

/// Replacement names for rewrites toward low popularity.
pub const OBSCURE_NAMES: &[&str] = &[
    "MORGAN Moses",
    "Piero Landi",
    "Harold Tenney",
    "Ada Whitcombe",
    "Tomas Brandl",
    "Elsbeth Marr",
    "Oberwil",
    "Villeneuve-sur-Lot",
];

/// Phrase swaps that add a negation while keeping the sentiment.
const NEGATING_SWAPS: &[(&str, &str)] = &[
    ("remembering", "cannot forget"),
    ("remember", "never forget"),
    ("always", "never fails to"),
    ("love", "cannot stop loving"),
];

/// Negated phrases with a plain equivalent, tried before single words.
const DENEGATING_PHRASES: &[(&str, &str)] = &[
    ("not bad at all", "quite good"),
    ("not good at all", "quite bad"),
    ("not bad", "good"),
    ("not good", "bad"),
];

/// Whole-word replacements that remove a negation word.
const DENEGATING_WORDS: &[(&str, &str)] = &[
    ("can't", "can"),
    ("won't", "will"),
    ("cannot", "can"),
    ("never", "always"),
    ("nothing", "something"),
    ("nobody", "somebody"),
    ("none", "some"),
    ("without", "with"),
    ("no", "some"),
];

const FILLER_WORDS: &[&str] = &[
    "zebra", "quartz", "violet", "harbor", "meadow", "copper", "lantern", "orchid", "summit", "willow", "glacier",
    "saffron", "tundra", "falcon", "pebble", "ember", "thicket", "marble", "cobalt", "juniper",
];

const OVERLAP_LENGTH: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockConfig {
    pub seed: u64,
    /// Samples whose rewrites always come back unchanged.
    pub fail_ids: BTreeSet<String>,
    /// Chance that any single rewrite attempt comes back unchanged, decided
    /// by a hash of (seed, sample id, attempt).
    pub failure_rate: f64,
    /// Every call fails with a transport error.
    pub unavailable: bool,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            fail_ids: BTreeSet::new(),
            failure_rate: 0.0,
            unavailable: false,
        }
    }
}

impl MockConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        if !(0.0..=1.0).contains(&self.failure_rate) {
            return Err(BackendError::InvalidConfig(format!(
                "mock failure rate {} is outside [0, 1]",
                self.failure_rate
            )));
        }
        Ok(())
    }
}

/// Stateless rule-based rewriter and classifier: the output is a function
/// of the request, the attempt number and the config alone.
#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    config: MockConfig,
    lexicon: NegationLexicon,
}

impl MockBackend {
    pub fn new(config: MockConfig) -> Self {
        Self {
            config,
            lexicon: NegationLexicon::default(),
        }
    }

    /// Mock that never manages to rewrite the given samples.
    pub fn failing_on<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(MockConfig {
            fail_ids: ids.into_iter().map(Into::into).collect(),
            ..MockConfig::default()
        })
    }

    pub fn config(&self) -> &MockConfig {
        &self.config
    }

    fn hash(&self, parts: &[&[u8]]) -> u64 {
        let mut h = Sha256::new();
        h.update(self.config.seed.to_le_bytes());
        for p in parts {
            h.update((p.len() as u64).to_le_bytes());
            h.update(p);
        }
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }

    fn attempt_fails(&self, id: &str, attempt: u32) -> bool {
        if self.config.fail_ids.contains(id) {
            return true;
        }
        if self.config.failure_rate <= 0.0 {
            return false;
        }
        let draw = self.hash(&[id.as_bytes(), &attempt.to_le_bytes()]) as f64 / (u64::MAX as f64 + 1.0);
        draw < self.config.failure_rate
    }

    fn negate(&self, text: &str, target_class: &str) -> String {
        for (from, to) in NEGATING_SWAPS {
            if let Some(out) = replace_word(text, from, to) {
                return out;
            }
        }
        let clause = if target_class.eq_ignore_ascii_case("negative") {
            "It is not good at all."
        } else {
            "It is not bad at all."
        };
        let trimmed = text.trim_end();
        if trimmed.ends_with(['.', '!', '?']) || trimmed.is_empty() {
            format!("{trimmed} {clause}").trim_start().to_string()
        } else {
            format!("{trimmed}. {clause}")
        }
    }

    fn denegate(&self, text: &str) -> String {
        let mut out = text.to_string();
        for (from, to) in NEGATING_SWAPS {
            if let Some(swapped) = replace_word(&out, to, from) {
                out = swapped;
            }
        }
        for (from, to) in DENEGATING_PHRASES {
            while let Some(swapped) = replace_word(&out, from, to) {
                out = swapped;
            }
        }
        let words: Vec<String> = out.split(' ').filter_map(|w| self.denegate_word(w)).collect();
        words.join(" ")
    }

    fn denegate_word(&self, word: &str) -> Option<String> {
        let start = word.find(|c: char| c.is_alphanumeric()).unwrap_or(word.len());
        let end = word
            .rfind(|c: char| c.is_alphanumeric())
            .map_or(start, |i| i + word[i..].chars().next().map_or(1, char::len_utf8));
        let (lead, core, tail) = (&word[..start], &word[start..end.max(start)], &word[end.max(start)..]);
        let lower = core.replace('\u{2019}', "'").to_lowercase();
        if let Some((_, to)) = DENEGATING_WORDS.iter().find(|(from, _)| *from == lower) {
            return Some(format!("{lead}{}{tail}", match_case(core, to)));
        }
        if let Some(stem) = lower.strip_suffix("n't") {
            return Some(format!("{lead}{}{tail}", match_case(core, stem)));
        }
        if self.lexicon.contains(&lower) {
            // drop the word but keep its punctuation
            return (!tail.is_empty()).then(|| format!("{lead}{tail}"));
        }
        Some(word.to_string())
    }

    fn rewrite_overlap(&self, req: &RewriteRequest) -> Option<String> {
        let markers = req.segments.as_ref()?;
        let (lo, hi) = req.target_range?;
        let spans = markers.locate(&req.sample.instruction)?;
        let text = &req.sample.instruction;
        let first = &text[spans.first.0..spans.first.1];
        let mut premise: Vec<String> = Vec::new();
        for t in tokenize(first) {
            if t.chars().all(char::is_alphanumeric) && !premise.contains(&t) {
                premise.push(t);
            }
        }
        if premise.is_empty() {
            return None;
        }
        let fillers: Vec<&str> = FILLER_WORDS
            .iter()
            .copied()
            .filter(|w| !premise.iter().any(|p| p == w))
            .collect();
        let mid = (lo + hi) / 2.0;
        let mut best: Option<(f64, String)> = None;
        for k in 0..=OVERLAP_LENGTH.max(premise.len()) {
            let n_fill = OVERLAP_LENGTH.saturating_sub(k);
            let mut words: Vec<&str> = (0..k).map(|i| premise[i % premise.len()].as_str()).collect();
            words.extend(fillers.iter().cycle().take(n_fill));
            let sentence = sentence_case(&words);
            let rate = match req.overlap_denominator {
                OverlapSide::Second => crate::features::lexical_overlap_rate(first, &sentence),
                OverlapSide::First => crate::features::lexical_overlap_rate(&sentence, first),
            }
            .ok()?;
            let in_range = rate <= hi && (rate > lo || (lo == 0.0 && rate >= 0.0));
            let dist = (rate - mid).abs();
            if in_range && best.as_ref().is_none_or(|(d, _)| dist < *d) {
                best = Some((dist, sentence));
            }
        }
        let (_, sentence) = best?;
        Some(format!(
            "{} {}{}",
            text[..spans.second.0].trim_end(),
            sentence,
            &text[spans.second.1..]
        ))
    }

    fn pick_name(&self, id: &str, pool: &[&'static str], avoid: &str) -> &'static str {
        let start = (self.hash(&[b"name", id.as_bytes()]) % pool.len() as u64) as usize;
        (0..pool.len())
            .map(|i| pool[(start + i) % pool.len()])
            .find(|n| !n.eq_ignore_ascii_case(avoid.trim()))
            .unwrap_or(pool[start])
    }

    fn is_popular(context: &str) -> bool {
        let tokens = tokenize(context);
        POPULAR_NAMES.iter().any(|name| {
            let needle = tokenize(name);
            tokens.windows(needle.len()).any(|w| w == needle.as_slice())
        })
    }
}

/// Replaces the first whole-word, case-insensitive match of `from`.
fn replace_word(text: &str, from: &str, to: &str) -> Option<String> {
    let lower = text.to_lowercase();
    if lower.len() != text.len() {
        return None;
    }
    let mut search = 0;
    while let Some(pos) = lower[search..].find(from) {
        let start = search + pos;
        let end = start + from.len();
        let boundary_before = lower[..start].chars().next_back().is_none_or(|c| !c.is_alphanumeric());
        let boundary_after = lower[end..].chars().next().is_none_or(|c| !c.is_alphanumeric());
        if boundary_before && boundary_after {
            return Some(format!(
                "{}{}{}",
                &text[..start],
                match_case(&text[start..end], to),
                &text[end..]
            ));
        }
        search = end;
    }
    None
}

fn match_case(original: &str, replacement: &str) -> String {
    if original.chars().next().is_some_and(char::is_uppercase) {
        let mut chars = replacement.chars();
        chars
            .next()
            .map(|c| c.to_uppercase().chain(chars).collect())
            .unwrap_or_default()
    } else {
        replacement.to_string()
    }
}

fn sentence_case(words: &[&str]) -> String {
    let joined = words.join(" ");
    format!("{}.", match_case("X", &joined))
}

fn as_json(instruction: &str, answer: &str) -> String {
    serde_json::json!({ "instruction": instruction, "answer": answer }).to_string()
}

impl Backend for MockBackend {
    fn rewrite(&self, req: &RewriteRequest, attempt: u32) -> Result<String, BackendError> {
        if self.config.unavailable {
            return Err(BackendError::TransportFailure("mock backend is unavailable".into()));
        }
        let sample = &req.sample;
        if self.attempt_fails(&sample.id, attempt) {
            return Ok(as_json(&sample.instruction, &sample.answer));
        }
        let (instruction, answer) = match req.extractor {
            ExtractorKind::NegationPresence if req.target_value == PRESENT => (
                self.negate(&sample.instruction, &req.target_answer_class),
                sample.answer.clone(),
            ),
            ExtractorKind::NegationPresence => (self.denegate(&sample.instruction), sample.answer.clone()),
            ExtractorKind::LexicalOverlap => (
                self.rewrite_overlap(req).unwrap_or_else(|| sample.instruction.clone()),
                sample.answer.clone(),
            ),
            ExtractorKind::Popularity => {
                let pool = if req.target_value == LOW {
                    OBSCURE_NAMES
                } else {
                    POPULAR_NAMES
                };
                let name = self.pick_name(&sample.id, pool, &sample.answer);
                let old = sample.answer.trim();
                let instruction = if old.is_empty() {
                    sample.instruction.clone()
                } else {
                    sample.instruction.replace(old, name)
                };
                (instruction, name.to_string())
            }
            ExtractorKind::CustomClassifier => {
                let old_tag = format!("[{}]", req.source_value);
                let new_tag = format!("[{}]", req.target_value);
                let instruction = if sample.instruction.contains(&old_tag) {
                    sample.instruction.replace(&old_tag, &new_tag)
                } else {
                    format!("{} {new_tag}", sample.instruction.trim_end())
                };
                (instruction, sample.answer.clone())
            }
        };
        Ok(as_json(&instruction, &answer))
    }

    fn classify(&self, req: &ClassifyRequest) -> Result<String, BackendError> {
        if self.config.unavailable {
            return Err(BackendError::TransportFailure("mock backend is unavailable".into()));
        }
        Ok(match req.kind {
            ClassifyKind::Popularity => if Self::is_popular(&req.context) { HIGH } else { LOW }.to_string(),
            ClassifyKind::Custom => req
                .choices
                .iter()
                .find(|c| req.context.contains(&format!("[{c}]")))
                .or(req.choices.first())
                .cloned()
                .unwrap_or_default(),
        })
    }
}
