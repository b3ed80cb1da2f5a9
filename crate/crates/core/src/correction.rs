//! Corrections: anchored edit batches proposed against a reference program.
//!
//! Payloads are JSON lists of `{description, edits: [{op, first, last,
//! new_lines}]}`. Line numbers are 1-based; `first` is inclusive and `last`
//! exclusive for replace and delete. For inserts the anchor is the single line
//! `first` (`last` may repeat it or point one past it). Every edit of a
//! correction refers to the same unmodified reference text.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::graph::{Application, CodeGraph, CorrectionId, GraphError, LineSplice, NodeId, Path};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditOp {
    InsertBefore,
    InsertAfter,
    Replace,
    Delete,
}

impl EditOp {
    fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().replace(['-', ' '], "_").as_str() {
            "insert_before" => Some(Self::InsertBefore),
            "insert_after" => Some(Self::InsertAfter),
            "replace" => Some(Self::Replace),
            "delete" => Some(Self::Delete),
            _ => None,
        }
    }

    pub fn is_insert(self) -> bool {
        matches!(self, Self::InsertBefore | Self::InsertAfter)
    }
}

/// One anchored edit, in payload form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edit {
    pub op: EditOp,
    pub first: usize,
    pub last: usize,
    pub new_lines: String,
}

impl Edit {
    /// 0-based half-open range of reference lines the edit rewrites; inserts
    /// give an empty range at the insertion point.
    pub fn range(&self) -> (usize, usize) {
        match self.op {
            EditOp::InsertBefore => (self.first - 1, self.first - 1),
            EditOp::InsertAfter => (self.first, self.first),
            EditOp::Replace | EditOp::Delete => (self.first - 1, self.last - 1),
        }
    }

    fn lines(&self) -> Vec<String> {
        crate::graph::split_lines(&self.new_lines)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum CorrectionStatus {
    Pending,
    Applied,
    Rejected(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correction {
    pub id: CorrectionId,
    pub description: String,
    pub edits: Vec<Edit>,
    pub delta: Option<f64>,
    pub status: CorrectionStatus,
    /// Where the correction landed in the graph, once applied.
    #[serde(skip)]
    pub application: Option<Application>,
}

impl Correction {
    pub fn new(id: CorrectionId, description: impl Into<String>, edits: Vec<Edit>) -> Self {
        Self {
            id,
            description: description.into(),
            edits,
            delta: None,
            status: CorrectionStatus::Pending,
            application: None,
        }
    }

    fn rejected(id: CorrectionId, description: String, reason: impl Into<String>) -> Self {
        Self {
            status: CorrectionStatus::Rejected(reason.into()),
            ..Self::new(id, description, Vec::new())
        }
    }

    pub fn is_applied(&self) -> bool {
        self.status == CorrectionStatus::Applied
    }

    pub fn rejection(&self) -> Option<&str> {
        match &self.status {
            CorrectionStatus::Rejected(r) => Some(r),
            _ => None,
        }
    }

    /// The payload entry this correction was parsed from (after
    /// normalization).
    pub fn to_payload(&self) -> Value {
        serde_json::json!({
            "description": self.description,
            "edits": self.edits,
        })
    }
}

/// Serializes corrections back into the payload schema.
pub fn to_payload(corrections: &[Correction]) -> String {
    let list: Vec<Value> = corrections.iter().map(Correction::to_payload).collect();
    serde_json::to_string_pretty(&list).expect("payload serializes")
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("correction batch unparseable: {0}")]
pub struct BatchParseError(pub String);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ApplyError {
    #[error("correction {0} is not pending")]
    NotPending(CorrectionId),
    #[error("{0}")]
    Anchor(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Pulls the JSON document out of generator output, which may be wrapped in
/// prose or a fenced block.
fn extract_json(payload: &str) -> Option<Value> {
    if let Ok(v) = serde_json::from_str(payload.trim()) {
        return Some(v);
    }
    let mut text = payload;
    if let Some(start) = text.find("```") {
        let body = &text[start + 3..];
        let body = body.find('\n').map(|i| &body[i + 1..]).unwrap_or(body);
        if let Some(end) = body.find("```") {
            text = &body[..end];
            if let Ok(v) = serde_json::from_str(text.trim()) {
                return Some(v);
            }
        }
    }
    for (open, close) in [('[', ']'), ('{', '}')] {
        if let (Some(a), Some(b)) = (text.find(open), text.rfind(close)) {
            if a < b {
                if let Ok(v) = serde_json::from_str(&text[a..=b]) {
                    return Some(v);
                }
            }
        }
    }
    None
}

/// Parses a correction batch. Ids are assigned consecutively from `first_id`
/// in payload order; malformed entries come back rejected with a reason.
pub fn parse_corrections(payload: &str, first_id: u32) -> Result<Vec<Correction>, BatchParseError> {
    let doc = extract_json(payload).ok_or_else(|| BatchParseError("no JSON document found".into()))?;
    let entries = match doc {
        Value::Array(items) => items,
        Value::Object(mut map) => match map.remove("corrections") {
            Some(Value::Array(items)) => items,
            _ => return Err(BatchParseError("expected a list of corrections".into())),
        },
        _ => return Err(BatchParseError("expected a list of corrections".into())),
    };
    Ok(entries
        .iter()
        .enumerate()
        .map(|(i, entry)| parse_entry(entry, CorrectionId(first_id + i as u32)))
        .collect())
}

fn parse_entry(entry: &Value, id: CorrectionId) -> Correction {
    let Some(obj) = entry.as_object() else {
        return Correction::rejected(id, String::new(), "entry is not an object");
    };
    let description = obj
        .get("description")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .trim()
        .to_owned();
    let Some(raw_edits) = obj.get("edits").and_then(Value::as_array) else {
        return Correction::rejected(id, description, "missing edits");
    };
    let mut edits = Vec::with_capacity(raw_edits.len());
    for (k, raw) in raw_edits.iter().enumerate() {
        match parse_edit(raw) {
            Ok(Some(edit)) => edits.push(edit),
            Ok(None) => {}
            Err(reason) => return Correction::rejected(id, description, format!("edit {}: {reason}", k + 1)),
        }
    }
    if edits.is_empty() {
        return Correction::rejected(id, description, "no effective edits");
    }
    if let Err(reason) = check_disjoint(&edits) {
        return Correction::rejected(id, description, reason);
    }
    Correction::new(id, description, edits)
}

fn as_line_number(v: Option<&Value>, field: &str) -> Result<i64, String> {
    let v = v.ok_or_else(|| format!("missing {field}"))?;
    v.as_i64()
        .or_else(|| v.as_f64().filter(|f| f.fract() == 0.0).map(|f| f as i64))
        .or_else(|| v.as_str().and_then(|s| s.trim().parse().ok()))
        .ok_or_else(|| format!("{field} is not an integer"))
}

/// Parses and normalizes one edit. `Ok(None)` marks an edit with no effect.
fn parse_edit(raw: &Value) -> Result<Option<Edit>, String> {
    let obj = raw.as_object().ok_or("edit is not an object")?;
    let op_name = obj.get("op").and_then(Value::as_str).ok_or("missing op")?;
    let mut op = EditOp::parse(op_name).ok_or_else(|| format!("unknown op {op_name:?}"))?;
    let first = as_line_number(obj.get("first"), "first")?;
    let last = match obj.get("last") {
        None if op.is_insert() => first,
        other => as_line_number(other, "last")?,
    };
    if first < 1 {
        return Err("anchor before line 1".into());
    }
    if last < first {
        return Err("inverted anchor".into());
    }
    let (first, mut last) = (first as usize, last as usize);
    let new_lines = match obj.get("new_lines") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(Value::Array(items)) => items
            .iter()
            .map(|l| l.as_str().map(|s| format!("{}\n", s.trim_end_matches('\n'))))
            .collect::<Option<String>>()
            .ok_or("new_lines must be text")?,
        Some(_) => return Err("new_lines must be text".into()),
    };
    let mut new_lines = normalize_lines(&new_lines);
    let blank = new_lines.trim().is_empty();
    if op.is_insert() {
        if last > first + 1 {
            return Err("insert anchor spans several lines".into());
        }
        last = first;
        if blank {
            return Ok(None);
        }
    } else {
        if op == EditOp::Replace && blank {
            op = EditOp::Delete;
        }
        if op == EditOp::Delete {
            new_lines.clear();
            if first == last {
                return Ok(None);
            }
        }
    }
    Ok(Some(Edit {
        op,
        first,
        last,
        new_lines,
    }))
}

/// Strips line-number prefixes copied from the numbered prompt (only when
/// every non-blank line carries one) and terminates the last line.
pub fn normalize_lines(text: &str) -> String {
    // accepted prefixes: "#12 " (the prompt format) and "12 | "
    fn strip(line: &str) -> Option<&str> {
        let t = line.trim_start();
        let (hashed, t) = match t.strip_prefix('#') {
            Some(rest) => (true, rest),
            None => (false, t),
        };
        let digits = t.len() - t.trim_start_matches(|c: char| c.is_ascii_digit()).len();
        if digits == 0 {
            return None;
        }
        let rest = &t[digits..];
        if hashed {
            return match rest.chars().next() {
                Some(' ' | '\t') => Some(&rest[1..]),
                None | Some('\n' | '\r') => Some(rest),
                _ => None,
            };
        }
        let rest = rest.trim_start_matches(' ').strip_prefix('|')?;
        Some(rest.strip_prefix(' ').unwrap_or(rest))
    }
    if text.is_empty() {
        return String::new();
    }
    let lines = crate::graph::split_lines(text);
    let numbered = lines
        .iter()
        .filter(|l| !l.trim().is_empty())
        .all(|l| strip(l).is_some());
    let mut out: String = if numbered {
        lines.iter().map(|l| strip(l).unwrap_or(l)).collect()
    } else {
        text.to_owned()
    };
    if !out.ends_with('\n') {
        out.push('\n');
    }
    out
}

/// Edits must not rewrite the same line, and an insertion point must not sit
/// strictly inside another edit's range.
fn check_disjoint(edits: &[Edit]) -> Result<(), String> {
    for (i, a) in edits.iter().enumerate() {
        for b in &edits[i + 1..] {
            let (a0, a1) = a.range();
            let (b0, b1) = b.range();
            let clash = if a0 == a1 {
                b0 < a0 && a0 < b1
            } else if b0 == b1 {
                a0 < b0 && b0 < a1
            } else {
                a0 < b1 && b0 < a1
            };
            if clash {
                return Err("overlapping edits".into());
            }
        }
    }
    Ok(())
}

/// Turns a correction's edits into sorted, disjoint, non-empty line splices
/// over `reference`. Insertions absorb a neighbouring line (the anchor
/// side) because a splice needs at least one reference line to replace.
pub fn line_splices(edits: &[Edit], reference: &[&str]) -> Result<Vec<LineSplice>, ApplyError> {
    let total = reference.len();
    let mut items: Vec<(usize, usize, Vec<String>)> = Vec::with_capacity(edits.len());
    let mut ranks: Vec<u8> = Vec::with_capacity(edits.len());
    for e in edits {
        let in_range = if e.op.is_insert() {
            e.first >= 1 && e.first <= total
        } else {
            e.first >= 1 && e.last <= total + 1
        };
        if !in_range {
            return Err(ApplyError::Anchor(format!(
                "anchor {}..{} outside reference of {total} lines",
                e.first, e.last
            )));
        }
        let (s, t) = e.range();
        items.push((s, t, e.lines()));
        ranks.push(match e.op {
            EditOp::InsertAfter => 0,
            _ if s == t => 1,
            _ => 2,
        });
    }
    // within one gap: text attached to the line above, then text attached to
    // the line below, then the rewrite starting there; ties keep payload order
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by_key(|&k| (items[k].0, ranks[k], items[k].1));
    let items: Vec<_> = order.into_iter().map(|k| items[k].clone()).collect();
    let claim = |s: usize, t: usize| -> (usize, usize) {
        if s < t {
            (s, t)
        } else if s < total {
            (s, s + 1)
        } else {
            (s - 1, s)
        }
    };
    let mut clusters: Vec<(usize, usize, Vec<usize>)> = Vec::new();
    for (k, &(s, t, _)) in items.iter().enumerate() {
        let (c0, c1) = claim(s, t);
        match clusters.last_mut() {
            Some(last) if c0 < last.1 => {
                last.0 = last.0.min(c0);
                last.1 = last.1.max(c1);
                last.2.push(k);
            }
            _ => clusters.push((c0, c1, vec![k])),
        }
    }
    let mut out = Vec::with_capacity(clusters.len());
    let mut kept = 0usize;
    let mut removed = 0usize;
    for (c0, c1, members) in clusters {
        let mut lines: Vec<String> = Vec::new();
        let mut pos = c0;
        for k in members {
            let (s, t, ref new) = items[k];
            lines.extend(reference[pos..s.max(pos)].iter().map(|l| l.to_string()));
            lines.extend(new.iter().cloned());
            pos = pos.max(t);
        }
        lines.extend(reference[pos..c1].iter().map(|l| l.to_string()));
        terminate_inner_lines(&mut lines);
        removed += c1 - c0;
        kept += lines.len();
        out.push(LineSplice {
            start: c0,
            end: c1,
            lines,
        });
    }
    if total - removed + kept == 0 {
        return Err(ApplyError::Anchor("degenerate: empty algorithm".into()));
    }
    Ok(out)
}

/// A reference line without a terminator gains one when code follows it.
fn terminate_inner_lines(lines: &mut [String]) {
    let n = lines.len();
    for l in lines.iter_mut().take(n.saturating_sub(1)) {
        if !l.ends_with('\n') {
            l.push('\n');
        }
    }
}

/// Maps the correction's anchors onto graph nodes along `reference`,
/// splitting blocks at mid-block anchors. Rendering of every path is
/// unchanged by the splits.
pub fn resolve_anchors(
    graph: &mut CodeGraph,
    correction: &Correction,
    reference: &Path,
) -> Result<(Path, Vec<crate::graph::ResolvedSplice>), ApplyError> {
    let reference = graph.refresh(reference);
    graph.validate_path(&reference)?;
    let text_lines = graph.render_lines(&reference);
    let splices = line_splices(&correction.edits, &text_lines)?;
    Ok(graph.resolve_splices(&reference, &splices)?)
}

/// Result of a successful application.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Applied {
    /// Paths gained by the graph, at least one.
    pub new_paths_lower_bound: u128,
    /// The reference with the correction switched on.
    pub edited_reference: Path,
}

/// Inserts a pending correction's sub-paths. On failure the correction is
/// marked rejected and the graph is left exactly as it was.
pub fn apply_correction(
    graph: &mut CodeGraph,
    correction: &mut Correction,
    reference: &Path,
) -> Result<Applied, ApplyError> {
    if correction.status != CorrectionStatus::Pending {
        return Err(ApplyError::NotPending(correction.id));
    }
    let result = try_apply(graph, correction, reference);
    match &result {
        Ok(_) => correction.status = CorrectionStatus::Applied,
        Err(e) => correction.status = CorrectionStatus::Rejected(e.to_string()),
    }
    result
}

fn try_apply(
    graph: &mut CodeGraph,
    correction: &mut Correction,
    reference: &Path,
) -> Result<Applied, ApplyError> {
    let reference = graph.refresh(reference);
    graph.validate_path(&reference)?;
    // all checks happen before the first mutation
    let splices = line_splices(&correction.edits, &graph.render_lines(&reference))?;
    let before = graph.count_paths();
    let application = graph.insert_correction(correction.id, &reference, &splices)?;
    let after = graph.count_paths();
    let edited_reference = application
        .apply_to(graph, &reference)
        .expect("reference lies in the new correction's domain");
    correction.application = Some(application);
    Ok(Applied {
        new_paths_lower_bound: after.saturating_sub(before).max(1),
        edited_reference,
    })
}

/// Membership test for the algorithms a correction can be applied to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomainPredicate {
    application: Application,
}

impl DomainPredicate {
    pub fn contains(&self, graph: &CodeGraph, path: &Path) -> bool {
        self.application.applies_to(graph, path)
    }

    /// The path with the correction switched on, if `path` is in the domain.
    pub fn apply(&self, graph: &CodeGraph, path: &Path) -> Option<Path> {
        self.application.apply_to(graph, path)
    }

    /// For each place the correction was inserted, the node pairs a path
    /// must pass through (one pair per splice), as recorded at insertion.
    pub fn required_node_spans(&self, graph: &CodeGraph) -> Vec<Vec<(NodeId, NodeId)>> {
        self.application
            .occurrences
            .iter()
            .map(|occ| {
                occ.spans
                    .iter()
                    .map(|span| {
                        let first = graph.edge(span[0]).from;
                        let last = graph.edge(*span.last().unwrap()).to;
                        (first, last)
                    })
                    .collect()
            })
            .collect()
    }
}

/// Domain of an applied correction; `None` while it is pending or rejected.
pub fn domain_of(correction: &Correction) -> Option<DomainPredicate> {
    correction.application.clone().map(|application| DomainPredicate { application })
}

impl fmt::Display for Correction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({} edits): {}", self.id, self.edits.len(), self.description)
    }
}
