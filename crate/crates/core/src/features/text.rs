//! Tokenization and the two lexical checkers: overlap rate and negation.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use super::FeatureError;

const DEFAULT_LEXICON: &str = include_str!("../../config/negation.txt");

const CLITICS: [&str; 6] = ["'s", "'re", "'ve", "'ll", "'d", "'m"];

/// Lowercased word tokens with punctuation stripped.
///
/// Contractions are split the way treebank tokenizers do it, so `don't`
/// becomes `do` + `n't` and `it's` becomes `it` + `'s`.
pub fn tokenize(text: &str) -> Vec<String> {
    let normalized = text.replace(['\u{2019}', '\u{2018}'], "'").to_lowercase();
    let mut out = Vec::new();
    for raw in normalized.split(|c: char| !(c.is_alphanumeric() || c == '\'')) {
        let word = raw.trim_matches('\'');
        if word.is_empty() {
            continue;
        }
        if let Some(stem) = word.strip_suffix("n't") {
            if !stem.is_empty() {
                out.push(stem.to_string());
            }
            out.push("n't".to_string());
        } else if let Some(clitic) = CLITICS.iter().find(|c| word.len() > c.len() && word.ends_with(*c)) {
            out.push(word[..word.len() - clitic.len()].to_string());
            out.push(clitic.to_string());
        } else {
            out.push(word.to_string());
        }
    }
    out
}

/// Share of `hypothesis` tokens that also occur in `premise`.
///
/// Counts token occurrences on the hypothesis side against the premise's
/// token set, so a hypothesis that only reuses premise words scores 1 no
/// matter how it reorders them.
pub fn lexical_overlap_rate(premise: &str, hypothesis: &str) -> Result<f64, FeatureError> {
    let premise_tokens = tokenize(premise);
    let hypothesis_tokens = tokenize(hypothesis);
    if premise_tokens.is_empty() || hypothesis_tokens.is_empty() {
        return Err(FeatureError::EmptyText);
    }
    let vocab: HashSet<&str> = premise_tokens.iter().map(String::as_str).collect();
    let shared = hypothesis_tokens.iter().filter(|t| vocab.contains(t.as_str())).count();
    Ok(shared as f64 / hypothesis_tokens.len() as f64)
}

/// Whole-token negation words, matched case-insensitively.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegationLexicon {
    words: BTreeSet<String>,
}

impl Default for NegationLexicon {
    fn default() -> Self {
        Self::parse(DEFAULT_LEXICON).expect("bundled lexicon is non-empty")
    }
}

impl NegationLexicon {
    /// One word per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, FeatureError> {
        let words: BTreeSet<String> = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(|l| l.replace('\u{2019}', "'").to_lowercase())
            .collect();
        if words.is_empty() {
            return Err(FeatureError::InvalidLexicon("lexicon has no words".into()));
        }
        Ok(Self { words })
    }

    pub fn load(path: &Path) -> Result<Self, FeatureError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| FeatureError::InvalidLexicon(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn from_words<I, S>(words: I) -> Result<Self, FeatureError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let joined: Vec<String> = words.into_iter().map(|w| w.as_ref().to_string()).collect();
        Self::parse(&joined.join("\n"))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.words.contains(token)
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }

    /// True iff any token of `text` is a lexicon word.
    pub fn matches(&self, text: &str) -> bool {
        tokenize(text).iter().any(|t| self.words.contains(t))
    }
}
