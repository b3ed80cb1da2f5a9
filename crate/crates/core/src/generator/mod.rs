//! Generator gateway: initial algorithms, correction batches and credit
//! summaries, each reported with its token cost.

pub mod live;
pub mod scripted;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use live::{LiveConfig, LiveGenerator};
pub use scripted::{Fixture, FixtureKind, ScriptedGenerator};

const INITIAL_TEMPLATE: &str = include_str!("../../assets/prompts/initial.txt");
const UPGRADE_TEMPLATE: &str = include_str!("../../assets/prompts/upgrade.txt");
const CORRECTION_TEMPLATE: &str = include_str!("../../assets/prompts/correction.txt");
const SUMMARY_TEMPLATE: &str = include_str!("../../assets/prompts/summary.txt");

pub const SUMMARY_HEADERS: [&str; 3] = [
    "### Strongly Discouraged",
    "### Highly Encouraged",
    "### Needs Careful Implementation",
];

/// Default word cap of the credit summary.
pub const SUMMARY_WORD_CAP: usize = 500;

/// Token cost of one query. `total` is never below the configured minimum
/// cost, so every query makes progress towards exhausting the budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct QueryCost {
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub total: u64,
}

impl QueryCost {
    pub fn new(input_tokens: u64, output_tokens: u64, min_cost: u64) -> Self {
        Self {
            input_tokens,
            output_tokens,
            total: (input_tokens + output_tokens).max(min_cost),
        }
    }

    pub fn add(self, other: QueryCost) -> QueryCost {
        QueryCost {
            input_tokens: self.input_tokens + other.input_tokens,
            output_tokens: self.output_tokens + other.output_tokens,
            total: self.total + other.total,
        }
    }
}

/// Deterministic token estimate: one token per four characters, rounded up.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorResponse {
    pub payload: String,
    /// Everything spent on the call, failed attempts included.
    pub cost: QueryCost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorErrorKind {
    /// Network or server failure that persisted through every retry.
    Transport,
    /// A scripted generator ran out of fixtures.
    Exhausted,
    /// The endpoint answered but the answer was unusable.
    BadResponse,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{message}")]
pub struct GeneratorError {
    pub kind: GeneratorErrorKind,
    pub message: String,
    /// Cost already incurred and still to be charged.
    pub cost: QueryCost,
}

/// The problem statement shared by all prompts.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ProblemContext {
    pub description: String,
    #[serde(default)]
    pub input_template: String,
    #[serde(default)]
    pub output_template: String,
}

/// What one correction contributed, as fed to the summary update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreditLine {
    pub description: String,
    pub outcome: CreditOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CreditOutcome {
    Delta(f64),
    Failed(String),
}

impl CreditLine {
    pub fn render(&self) -> String {
        match &self.outcome {
            CreditOutcome::Delta(d) => format!("* {}: \\Delta = {d:+.6}", self.description),
            CreditOutcome::Failed(reason) => format!("* {}: failed ({reason})", self.description),
        }
    }
}

/// Source of new algorithms, corrections and summaries.
pub trait Generator {
    fn generate_initial(&mut self, ctx: &ProblemContext) -> Result<GeneratorResponse, GeneratorError>;

    /// `reference` is plain program text; line numbers are added to the
    /// prompt here. `summary` is present only in the context-guided variant.
    fn generate_corrections(
        &mut self,
        ctx: &ProblemContext,
        reference: &str,
        summary: Option<&str>,
    ) -> Result<GeneratorResponse, GeneratorError>;

    fn update_summary(
        &mut self,
        ctx: &ProblemContext,
        previous: &str,
        credits: &[CreditLine],
    ) -> Result<GeneratorResponse, GeneratorError>;
}

impl<G: Generator + ?Sized> Generator for Box<G> {
    fn generate_initial(&mut self, ctx: &ProblemContext) -> Result<GeneratorResponse, GeneratorError> {
        (**self).generate_initial(ctx)
    }

    fn generate_corrections(
        &mut self,
        ctx: &ProblemContext,
        reference: &str,
        summary: Option<&str>,
    ) -> Result<GeneratorResponse, GeneratorError> {
        (**self).generate_corrections(ctx, reference, summary)
    }

    fn update_summary(
        &mut self,
        ctx: &ProblemContext,
        previous: &str,
        credits: &[CreditLine],
    ) -> Result<GeneratorResponse, GeneratorError> {
        (**self).update_summary(ctx, previous, credits)
    }
}

/// Prefixes every line with `#<n> `, numbering from 1, so that an anchor `n`
/// in a reply denotes line `n` of the sent text.
pub fn lined_code(program: &str) -> String {
    program
        .split_inclusive('\n')
        .enumerate()
        .map(|(i, line)| format!("#{} {line}", i + 1))
        .collect()
}

fn fill(template: &str, pairs: &[(&str, &str)]) -> String {
    let mut out = template.to_owned();
    for (key, value) in pairs {
        out = out.replace(&format!("{{{key}}}"), value);
    }
    out
}

fn problem_pairs(ctx: &ProblemContext) -> [(&'static str, &str); 3] {
    [
        ("problem_description", ctx.description.as_str()),
        ("input_template", ctx.input_template.as_str()),
        ("output_template", ctx.output_template.as_str()),
    ]
}

pub fn initial_prompt(ctx: &ProblemContext) -> String {
    fill(INITIAL_TEMPLATE, &problem_pairs(ctx))
}

pub fn upgrade_prompt(ctx: &ProblemContext, code: &str, description: &str) -> String {
    let mut pairs = problem_pairs(ctx).to_vec();
    pairs.extend([("code", code), ("description", description)]);
    fill(UPGRADE_TEMPLATE, &pairs)
}

/// Correction prompt; the summary section is omitted entirely when
/// `summary` is `None`.
pub fn correction_prompt(ctx: &ProblemContext, reference: &str, summary: Option<&str>) -> String {
    let section = summary
        .map(|s| format!("Summary of previous corrections:\n{s}\n\n--------------------\n\n"))
        .unwrap_or_default();
    let lined = lined_code(reference);
    let mut pairs = problem_pairs(ctx).to_vec();
    pairs.extend([("lined_code", lined.as_str()), ("summary_section", section.as_str())]);
    fill(CORRECTION_TEMPLATE, &pairs)
}

pub fn summary_prompt(ctx: &ProblemContext, previous: &str, credits: &[CreditLine], word_cap: usize) -> String {
    let lines: Vec<String> = credits.iter().map(CreditLine::render).collect();
    let joined = lines.join("\n");
    let cap = word_cap.to_string();
    let previous = if previous.trim().is_empty() { "(none yet)" } else { previous };
    let mut pairs = problem_pairs(ctx).to_vec();
    pairs.extend([
        ("corrections_and_delta", joined.as_str()),
        ("summary", previous),
        ("word_cap", cap.as_str()),
    ]);
    fill(SUMMARY_TEMPLATE, &pairs)
}

/// Extracts program text from an initial-generation reply: the `code` field
/// of a JSON object, else the first fenced block, else the whole reply.
pub fn extract_program(reply: &str) -> String {
    let trimmed = reply.trim();
    let json = serde_json::from_str::<serde_json::Value>(trimmed).ok().or_else(|| {
        let a = trimmed.find('{')?;
        let b = trimmed.rfind('}')?;
        serde_json::from_str(&trimmed[a..=b]).ok()
    });
    if let Some(code) = json.as_ref().and_then(|v| v.get("code")).and_then(|c| c.as_str()) {
        return terminate(code);
    }
    if let Some(start) = reply.find("```") {
        let body = &reply[start + 3..];
        let body = body.find('\n').map(|i| &body[i + 1..]).unwrap_or("");
        if let Some(end) = body.find("```") {
            return terminate(&body[..end]);
        }
    }
    terminate(reply)
}

/// Extracts the summary text from a summary-update reply (`summary` field
/// of a JSON object, else the reply itself).
pub fn extract_summary(reply: &str) -> String {
    let trimmed = reply.trim();
    let json = serde_json::from_str::<serde_json::Value>(trimmed).ok().or_else(|| {
        let a = trimmed.find('{')?;
        let b = trimmed.rfind('}')?;
        serde_json::from_str(&trimmed[a..=b]).ok()
    });
    json.as_ref()
        .and_then(|v| v.get("summary"))
        .and_then(|s| s.as_str())
        .map(|s| s.trim().to_owned())
        .unwrap_or_else(|| trimmed.to_owned())
}

fn terminate(code: &str) -> String {
    let mut s = code.to_owned();
    if !s.is_empty() && !s.ends_with('\n') {
        s.push('\n');
    }
    s
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Keeps the first `cap` words, preserving line structure.
pub fn truncate_words(text: &str, cap: usize) -> String {
    if word_count(text) <= cap {
        return text.to_owned();
    }
    let mut out = String::new();
    let mut used = 0;
    for line in text.lines() {
        let words: Vec<&str> = line.split_whitespace().collect();
        if used + words.len() <= cap {
            out.push_str(line);
            out.push('\n');
            used += words.len();
        } else {
            let keep = cap - used;
            if keep > 0 {
                out.push_str(&words[..keep].join(" "));
                out.push('\n');
            }
            break;
        }
    }
    out.trim_end().to_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> ProblemContext {
        ProblemContext {
            description: "Minimize tour length.".into(),
            input_template: "coords".into(),
            output_template: "route".into(),
        }
    }

    #[test]
    fn lined_code_numbers_from_one() {
        let text = "a = 1\n  b = 2\nc\n";
        let lined = lined_code(text);
        assert_eq!(lined, "#1 a = 1\n#2   b = 2\n#3 c\n");
        // line L of the sent text is line L of the program
        for (l, line) in lined.lines().enumerate() {
            let original = text.lines().nth(l).unwrap();
            assert_eq!(line, format!("#{} {original}", l + 1));
        }
    }

    #[test]
    fn summary_section_only_when_guided() {
        let guided = correction_prompt(&ctx(), "x\n", Some("### Highly Encouraged\n* caching - faster"));
        assert!(guided.contains("### Highly Encouraged\n* caching - faster"));
        assert!(guided.contains("Summary of previous corrections:"));
        let agnostic = correction_prompt(&ctx(), "x\n", None);
        assert!(!agnostic.contains("Summary of previous corrections:"));
        assert!(!agnostic.contains('{') || !agnostic.contains("{summary"));
        for p in [&guided, &agnostic] {
            assert!(p.contains("#1 x\n"));
            assert!(p.contains("Minimize tour length."));
            assert!(!p.contains("{lined_code}"));
        }
    }

    #[test]
    fn templates_have_no_unfilled_placeholders() {
        let prompts = [
            initial_prompt(&ctx()),
            upgrade_prompt(&ctx(), "code", "desc"),
            summary_prompt(&ctx(), "", &[], 500),
        ];
        for p in prompts {
            for key in ["{problem_description}", "{input_template}", "{output_template}", "{code}", "{summary}", "{word_cap}"] {
                assert!(!p.contains(key), "{key} left in prompt");
            }
        }
    }

    #[test]
    fn program_extraction() {
        assert_eq!(extract_program("{\"thoughts\": \"t\", \"code\": \"x = 1\"}"), "x = 1\n");
        assert_eq!(extract_program("Sure:\n```python\ny = 2\n```\n"), "y = 2\n");
        assert_eq!(extract_program("z = 3\n"), "z = 3\n");
    }

    #[test]
    fn word_truncation() {
        let text = "one two\nthree four five\nsix";
        assert_eq!(truncate_words(text, 4), "one two\nthree four");
        assert_eq!(truncate_words(text, 10), text);
        assert_eq!(word_count(&truncate_words(text, 5)), 5);
    }

    #[test]
    fn cost_has_a_floor() {
        assert_eq!(QueryCost::new(0, 0, 5).total, 5);
        assert_eq!(QueryCost::new(10, 3, 5).total, 13);
        assert_eq!(estimate_tokens("abcde"), 2);
        assert_eq!(estimate_tokens(""), 0);
    }
}
