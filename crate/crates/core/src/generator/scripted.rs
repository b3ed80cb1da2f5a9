//! Fixture-driven generator for tests and reproducible runs.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{
    correction_prompt, estimate_tokens, initial_prompt, summary_prompt, word_count, CreditLine,
    CreditOutcome, Generator, GeneratorError, GeneratorErrorKind, GeneratorResponse,
    ProblemContext, QueryCost, SUMMARY_HEADERS, SUMMARY_WORD_CAP,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixtureKind {
    Initial,
    Corrections,
    Summary,
}

/// One canned reply. Token counts default to the four-characters-per-token
/// estimate of the prompt and of the payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fixture {
    pub kind: FixtureKind,
    pub payload: String,
    #[serde(default)]
    pub input_tokens: Option<u64>,
    #[serde(default)]
    pub output_tokens: Option<u64>,
}

/// Replays fixtures in order, one queue per kind. Summaries without a
/// fixture are produced by a fixed rule: positive credit goes under "Highly
/// Encouraged", negative under "Strongly Discouraged", failures and zero
/// credit under "Needs Careful Implementation"; over the word cap the
/// entry with the smallest |Δ| is dropped first.
#[derive(Debug, Clone)]
pub struct ScriptedGenerator {
    initial: VecDeque<Fixture>,
    corrections: VecDeque<Fixture>,
    summaries: VecDeque<Fixture>,
    min_cost: u64,
    word_cap: usize,
    /// Prompts sent so far, in call order.
    pub prompts: Vec<String>,
}

impl ScriptedGenerator {
    pub fn new(fixtures: Vec<Fixture>, min_cost: u64) -> Self {
        let mut g = Self {
            initial: VecDeque::new(),
            corrections: VecDeque::new(),
            summaries: VecDeque::new(),
            min_cost,
            word_cap: SUMMARY_WORD_CAP,
            prompts: Vec::new(),
        };
        for f in fixtures {
            match f.kind {
                FixtureKind::Initial => g.initial.push_back(f),
                FixtureKind::Corrections => g.corrections.push_back(f),
                FixtureKind::Summary => g.summaries.push_back(f),
            }
        }
        g
    }

    pub fn with_word_cap(mut self, cap: usize) -> Self {
        self.word_cap = cap;
        self
    }

    fn cost(&self, prompt: &str, fixture: &Fixture) -> QueryCost {
        QueryCost::new(
            fixture.input_tokens.unwrap_or_else(|| estimate_tokens(prompt)),
            fixture.output_tokens.unwrap_or_else(|| estimate_tokens(&fixture.payload)),
            self.min_cost,
        )
    }

    fn replay(&mut self, kind: FixtureKind, prompt: String) -> Result<GeneratorResponse, GeneratorError> {
        let queue = match kind {
            FixtureKind::Initial => &mut self.initial,
            FixtureKind::Corrections => &mut self.corrections,
            FixtureKind::Summary => &mut self.summaries,
        };
        let Some(fixture) = queue.pop_front() else {
            return Err(GeneratorError {
                kind: GeneratorErrorKind::Exhausted,
                message: "fixtures exhausted".into(),
                cost: QueryCost::default(),
            });
        };
        let cost = self.cost(&prompt, &fixture);
        self.prompts.push(prompt);
        Ok(GeneratorResponse {
            payload: fixture.payload,
            cost,
        })
    }
}

impl Generator for ScriptedGenerator {
    fn generate_initial(&mut self, ctx: &ProblemContext) -> Result<GeneratorResponse, GeneratorError> {
        self.replay(FixtureKind::Initial, initial_prompt(ctx))
    }

    fn generate_corrections(
        &mut self,
        ctx: &ProblemContext,
        reference: &str,
        summary: Option<&str>,
    ) -> Result<GeneratorResponse, GeneratorError> {
        self.replay(FixtureKind::Corrections, correction_prompt(ctx, reference, summary))
    }

    fn update_summary(
        &mut self,
        ctx: &ProblemContext,
        previous: &str,
        credits: &[CreditLine],
    ) -> Result<GeneratorResponse, GeneratorError> {
        let prompt = summary_prompt(ctx, previous, credits, self.word_cap);
        if !self.summaries.is_empty() {
            return self.replay(FixtureKind::Summary, prompt);
        }
        let payload = rule_summary(previous, credits, self.word_cap);
        let cost = QueryCost::new(estimate_tokens(&prompt), estimate_tokens(&payload), self.min_cost);
        self.prompts.push(prompt);
        Ok(GeneratorResponse { payload, cost })
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    section: usize,
    text: String,
    /// |Δ|; failures carry no evidence.
    evidence: f64,
}

fn entry_line(e: &Entry) -> String {
    format!("* {}", e.text)
}

fn parse_summary(text: &str) -> Vec<Entry> {
    let mut section = None;
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if let Some(k) = SUMMARY_HEADERS.iter().position(|h| *h == line) {
            section = Some(k);
            continue;
        }
        let (Some(section), Some(item)) = (section, line.strip_prefix("* ")) else {
            continue;
        };
        if item == "None" {
            continue;
        }
        let evidence = item
            .rsplit_once("Δ = ")
            .and_then(|(_, d)| d.trim_end_matches(')').parse::<f64>().ok())
            .map(f64::abs)
            .unwrap_or(0.0);
        out.push(Entry {
            section,
            text: item.to_owned(),
            evidence,
        });
    }
    out
}

fn render_summary(entries: &[Entry]) -> String {
    let mut out = String::new();
    for (k, header) in SUMMARY_HEADERS.iter().enumerate() {
        out.push_str(header);
        out.push('\n');
        let items: Vec<&Entry> = entries.iter().filter(|e| e.section == k).collect();
        if items.is_empty() {
            out.push_str("* None\n");
        }
        for e in items {
            out.push_str(&entry_line(e));
            out.push('\n');
        }
    }
    out
}

/// The deterministic summary rule used when no summary fixture is queued.
pub fn rule_summary(previous: &str, credits: &[CreditLine], word_cap: usize) -> String {
    let mut entries = parse_summary(previous);
    for c in credits {
        let entry = match &c.outcome {
            CreditOutcome::Delta(d) if *d > 0.0 => Entry {
                section: 1,
                text: format!("{} - improved fitness (Δ = {d:+.6})", c.description),
                evidence: d.abs(),
            },
            CreditOutcome::Delta(d) if *d < 0.0 => Entry {
                section: 0,
                text: format!("{} - degraded fitness (Δ = {d:+.6})", c.description),
                evidence: d.abs(),
            },
            CreditOutcome::Delta(_) => Entry {
                section: 2,
                text: format!("{} - no measurable effect (Δ = +0.000000)", c.description),
                evidence: 0.0,
            },
            CreditOutcome::Failed(reason) => Entry {
                section: 2,
                text: format!("{} - failed: {reason}", c.description),
                evidence: 0.0,
            },
        };
        // a newer verdict on the same concept replaces the older one
        let concept = c.description.as_str();
        entries.retain(|e| !e.text.starts_with(&format!("{concept} - ")));
        entries.push(entry);
    }
    let mut text = render_summary(&entries);
    while word_count(&text) > word_cap && !entries.is_empty() {
        // weakest evidence first; among equals the oldest entry goes
        let weakest = entries
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.evidence.total_cmp(&b.1.evidence).then(a.0.cmp(&b.0)))
            .map(|(i, _)| i)
            .unwrap();
        entries.remove(weakest);
        text = render_summary(&entries);
    }
    text
}
