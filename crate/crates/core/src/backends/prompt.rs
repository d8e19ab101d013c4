//! Prompt assembly and response parsing for prompt-based backends.

use std::fmt::Write as _;

use serde::Deserialize;

use crate::features::ExtractorKind;
use crate::intervene::RewriteRequest;

/// Rewritten fields parsed out of a completion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RewriteText {
    pub instruction: String,
    pub answer: String,
}

fn direction_hint(req: &RewriteRequest) -> String {
    match req.extractor {
        ExtractorKind::NegationPresence if req.target_value == crate::features::PRESENT => {
            "Express the same sentiment using at least one negation word (not, never, no, cannot, ...).".into()
        }
        ExtractorKind::NegationPresence => {
            "Express the same sentiment without any negation words.".into()
        }
        ExtractorKind::LexicalOverlap => match req.target_range {
            Some((lo, hi)) => format!(
                "Rewrite only the second sentence so that between {:.0}% and {:.0}% of its words also appear in the first sentence, keeping the label unchanged.",
                lo * 100.0,
                hi * 100.0
            ),
            None => format!("Change the word overlap between the sentences to `{}`.", req.target_value),
        },
        ExtractorKind::Popularity if req.target_value == crate::features::LOW => {
            "Replace the answer entity with a little-known person or place, adjusting the question so the new answer is correct.".into()
        }
        ExtractorKind::Popularity => {
            "Replace the answer entity with a widely known person or place, adjusting the question so the new answer is correct.".into()
        }
        ExtractorKind::CustomClassifier => format!(
            "Change the sample so that its `{}` is `{}`.",
            req.feature, req.target_value
        ),
    }
}

/// The few-shot rewrite prompt. Contains the sample id, so distinct
/// samples never share a prompt.
pub fn rewrite_prompt(req: &RewriteRequest) -> String {
    let mut p = String::new();
    let _ = writeln!(
        p,
        "You rewrite {} training samples to change one property while keeping everything else intact.",
        req.sample.task
    );
    let _ = writeln!(
        p,
        "Property `{}`: change it from `{}` to `{}`.",
        req.feature, req.source_value, req.target_value
    );
    let _ = writeln!(p, "{}", direction_hint(req));
    if req.target_answer_class != req.source_answer_class {
        let _ = writeln!(p, "The answer must become: {}.", req.target_answer_class);
    } else {
        let _ = writeln!(p, "The answer must stay: {}.", req.target_answer_class);
    }
    if !req.exemplars.is_empty() {
        p.push_str("\nExamples:\n");
        for ex in &req.exemplars {
            let _ = writeln!(p, "Before: {}\nAfter: {}\n", ex.before, ex.after);
        }
    }
    let _ = writeln!(p, "\nSample id: {}", req.sample.id);
    let _ = writeln!(p, "Instruction: {}", req.sample.instruction);
    let _ = writeln!(p, "Answer: {}", req.sample.answer);
    p.push_str("\nReply with a single JSON object {\"instruction\": ..., \"answer\": ...} and nothing else.");
    p
}

pub fn classify_prompt(question: &str, context: &str, choices: &[String]) -> String {
    format!(
        "{question}\n\n{context}\n\nAnswer with exactly one of: {}.",
        choices.join(", ")
    )
}

#[derive(Deserialize)]
struct RewriteJson {
    instruction: String,
    #[serde(default)]
    answer: Option<String>,
}

/// Reads a completion as `{"instruction", "answer"}` JSON, possibly
/// wrapped in prose or a code fence. Anything else is taken as the new
/// instruction with the answer left as it was.
pub fn parse_rewrite(completion: &str, original_answer: &str) -> RewriteText {
    let json = completion
        .find('{')
        .zip(completion.rfind('}'))
        .filter(|(a, b)| a < b)
        .and_then(|(a, b)| serde_json::from_str::<RewriteJson>(&completion[a..=b]).ok());
    match json {
        Some(j) => RewriteText {
            instruction: j.instruction,
            answer: j.answer.unwrap_or_else(|| original_answer.to_string()),
        },
        None => RewriteText {
            instruction: completion.trim().to_string(),
            answer: original_answer.to_string(),
        },
    }
}
