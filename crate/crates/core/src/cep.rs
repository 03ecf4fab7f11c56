//! Sequence-pattern matching and count queries over event streams.
//!
//! Match selection policy: scan each day's events in timestamp order and, at
//! every event that can complete the pattern, bind the lexicographically
//! smallest feasible index tuple among not-yet-consumed events. Matched events
//! are consumed, so matches never overlap, and each day yields the same
//! matches a greedy earliest-completion reading of the stream produces.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::event::{Event, EventStream, FieldDecl, FieldType, Timestamp, Value};
use crate::query::{
    CmpOp, Comparison, Literal, Predicate, QueryAst, SelectExpr, SelectItem,
};

/// Ordered list of step predicates plus an optional window in slots.
#[derive(Clone, Debug, PartialEq)]
pub struct SequencePattern {
    pub steps: Vec<Predicate>,
    /// Maximum allowed `last.slot - first.slot`; `None` means unconstrained.
    pub within_slots: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PatternError {
    Empty,
    /// A window shorter than `steps - 1` slots can never be satisfied on
    /// distinct slots; flagged at construction.
    WithinTooSmall { steps: usize, within: u32 },
}

impl fmt::Display for PatternError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatternError::Empty => write!(f, "pattern needs at least one step"),
            PatternError::WithinTooSmall { steps, within } => {
                write!(f, "within {within} slots cannot fit {steps} ordered steps")
            }
        }
    }
}

impl core::error::Error for PatternError {}

impl SequencePattern {
    pub fn new(steps: Vec<Predicate>, within_slots: Option<u32>) -> Result<Self, PatternError> {
        if steps.is_empty() {
            return Err(PatternError::Empty);
        }
        if let Some(w) = within_slots {
            if (w as usize) < steps.len() - 1 {
                return Err(PatternError::WithinTooSmall { steps: steps.len(), within: w });
            }
        }
        Ok(SequencePattern { steps, within_slots })
    }

    /// Convenience constructor: one `user_activity == label` step per label.
    pub fn from_activities(labels: &[&str], within_slots: Option<u32>) -> Result<Self, PatternError> {
        let steps = labels
            .iter()
            .map(|l| Predicate {
                comparisons: alloc::vec![Comparison {
                    field: "user_activity".to_owned(),
                    op: CmpOp::Eq,
                    literal: Literal::Str((*l).to_owned()),
                }],
            })
            .collect();
        SequencePattern::new(steps, within_slots)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// One non-overlapping pattern occurrence within a day.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatternMatch {
    pub day: u32,
    /// Indices into the day's event slice, strictly increasing.
    pub event_indices: Vec<usize>,
    pub completion_slot: u32,
}

impl PatternMatch {
    /// Re-check ordering, predicate, and window constraints against the
    /// stream; used by tests to assert soundness of every produced match.
    pub fn verify(&self, stream: &EventStream, pattern: &SequencePattern) -> bool {
        let evs = stream.day_events(self.day);
        if self.event_indices.len() != pattern.len() {
            return false;
        }
        if self.event_indices.windows(2).any(|w| w[0] >= w[1]) {
            return false;
        }
        if self.event_indices.iter().any(|&i| i >= evs.len()) {
            return false;
        }
        for (step, &i) in pattern.steps.iter().zip(&self.event_indices) {
            if !eval_predicate(&evs[i], step) {
                return false;
            }
        }
        let first = evs[self.event_indices[0]].ts.slot;
        let last = evs[*self.event_indices.last().unwrap()].ts.slot;
        if last != self.completion_slot {
            return false;
        }
        match pattern.within_slots {
            Some(w) => last - first <= w,
            None => true,
        }
    }
}

/// Per-slot pattern-completion counts across days. Slots before the pattern
/// length are undefined (a k-step pattern cannot complete earlier when each
/// slot holds one event), mirroring how count tables print a dash there.
#[derive(Clone, Debug, PartialEq)]
pub struct CountSeries {
    /// Index 0 is slot 1; `None` marks an undefined slot.
    pub values: Vec<Option<u64>>,
    pub n_days: u32,
    pub pattern: SequencePattern,
}

impl CountSeries {
    pub fn horizon(&self) -> u32 {
        self.values.len() as u32
    }

    /// Slots (1-based) with defined counts.
    pub fn defined_slots(&self) -> impl Iterator<Item = u32> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|_| i as u32 + 1))
    }

    pub fn value_at(&self, slot: u32) -> Option<u64> {
        self.values.get(slot as usize - 1).copied().flatten()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CepError {
    UnknownStream(String),
    UnknownField { binding: String, field: String },
    /// All bindings of a query must read from the same stream.
    MixedStreams,
    Pattern(PatternError),
    UnknownLabel(String),
    DuplicateLabel(String),
}

impl fmt::Display for CepError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CepError::UnknownStream(s) => write!(f, "unknown stream '{s}'"),
            CepError::UnknownField { binding, field } => {
                write!(f, "field '{field}' of binding '{binding}' cannot be resolved")
            }
            CepError::MixedStreams => write!(f, "pattern bindings reference different streams"),
            CepError::Pattern(e) => e.fmt(f),
            CepError::UnknownLabel(l) => write!(f, "label '{l}' never occurs in the stream"),
            CepError::DuplicateLabel(l) => write!(f, "label '{l}' listed twice"),
        }
    }
}

impl core::error::Error for CepError {}

impl From<PatternError> for CepError {
    fn from(e: PatternError) -> Self {
        CepError::Pattern(e)
    }
}

/// Evaluate one comparison against an event. Unresolvable fields and
/// incomparable types make the comparison false rather than failing: pattern
/// matching is total, and parse-time validation already rejects typos.
pub fn eval_comparison(event: &Event, cmp: &Comparison) -> bool {
    let Some(value) = event.field(&cmp.field) else {
        return false;
    };
    let ord = match (&value, &cmp.literal) {
        (Value::Int(a), Literal::Int(b)) => a.partial_cmp(b),
        (Value::Int(a), Literal::Float(b)) => (*a as f64).partial_cmp(b),
        (Value::Float(a), Literal::Int(b)) => a.partial_cmp(&(*b as f64)),
        (Value::Float(a), Literal::Float(b)) => a.partial_cmp(b),
        (Value::Str(a), Literal::Str(b)) => Some(a.as_str().cmp(b.as_str())),
        _ => None,
    };
    let Some(ord) = ord else {
        return false;
    };
    match cmp.op {
        CmpOp::Eq => ord == core::cmp::Ordering::Equal,
        CmpOp::Ne => ord != core::cmp::Ordering::Equal,
        CmpOp::Lt => ord == core::cmp::Ordering::Less,
        CmpOp::Le => ord != core::cmp::Ordering::Greater,
        CmpOp::Gt => ord == core::cmp::Ordering::Greater,
        CmpOp::Ge => ord != core::cmp::Ordering::Less,
    }
}

pub fn eval_predicate(event: &Event, pred: &Predicate) -> bool {
    pred.comparisons.iter().all(|c| eval_comparison(event, c))
}

/// All greedy non-overlapping matches of `pattern` on one day of the stream.
pub fn match_sequence(
    stream: &EventStream,
    pattern: &SequencePattern,
    day: u32,
) -> Vec<PatternMatch> {
    let evs = stream.day_events(day);
    let k = pattern.len();
    let mut consumed = alloc::vec![false; evs.len()];
    let mut out = Vec::new();
    for j in 0..evs.len() {
        if consumed[j] || !eval_predicate(&evs[j], &pattern.steps[k - 1]) {
            continue;
        }
        let mut prefix = Vec::with_capacity(k);
        if find_prefix(evs, &consumed, pattern, j, 0, &mut prefix) {
            prefix.push(j);
            for &i in &prefix {
                consumed[i] = true;
            }
            out.push(PatternMatch {
                day,
                event_indices: prefix,
                completion_slot: evs[j].ts.slot,
            });
        }
    }
    out
}

/// Depth-first search for the lexicographically smallest tuple of unconsumed
/// indices for steps `0..k-1`, all below the fixed completion index `j`.
/// Returns true with the tuple in `acc` on success.
fn find_prefix(
    evs: &[Event],
    consumed: &[bool],
    pattern: &SequencePattern,
    j: usize,
    step: usize,
    acc: &mut Vec<usize>,
) -> bool {
    let k = pattern.len();
    if step == k - 1 {
        // prefix complete; the window constraint is anchored at the first event
        let first = acc.first().copied().unwrap_or(j);
        return match pattern.within_slots {
            Some(w) => evs[j].ts.slot - evs[first].ts.slot <= w,
            None => true,
        };
    }
    let lo = acc.last().map_or(0, |&p| p + 1);
    // enough room left for the remaining prefix steps before j
    let remaining = (k - 1) - step;
    for i in lo..j {
        if j - i < remaining {
            break;
        }
        if consumed[i] || !eval_predicate(&evs[i], &pattern.steps[step]) {
            continue;
        }
        if let Some(w) = pattern.within_slots {
            if evs[j].ts.slot - evs[i].ts.slot > w {
                continue;
            }
        }
        acc.push(i);
        if find_prefix(evs, consumed, pattern, j, step + 1, acc) {
            return true;
        }
        acc.pop();
    }
    false
}

/// Count, per slot, on how many days the pattern completes at that slot.
/// Slots `1..k-1` are undefined; completions landing there (possible only
/// when several events share a slot) are not representable and are dropped,
/// by the same rule the brute-force oracle applies.
pub fn count_pattern_completions(stream: &EventStream, pattern: &SequencePattern) -> CountSeries {
    let horizon = stream.max_slot() as usize;
    let k = pattern.len();
    let mut values: Vec<Option<u64>> = (1..=horizon)
        .map(|slot| if slot < k { None } else { Some(0) })
        .collect();
    let days = stream.days();
    for &day in &days {
        let mut slots_hit = BTreeSet::new();
        for m in match_sequence(stream, pattern, day) {
            slots_hit.insert(m.completion_slot);
        }
        for slot in slots_hit {
            if let Some(Some(v)) = values.get_mut(slot as usize - 1) {
                *v += 1;
            }
        }
    }
    CountSeries { values, n_days: days.len() as u32, pattern: pattern.clone() }
}

/// Multiplicity of each listed activity label at exactly `ts`, in list order.
/// Labels must be distinct and occur somewhere in the stream.
pub fn count_events(
    stream: &EventStream,
    event_set: &[&str],
    ts: Timestamp,
) -> Result<Vec<u64>, CepError> {
    let alphabet = stream.alphabet();
    let mut seen = BTreeSet::new();
    for label in event_set {
        if !seen.insert(*label) {
            return Err(CepError::DuplicateLabel((*label).to_owned()));
        }
        if !alphabet.contains(*label) {
            return Err(CepError::UnknownLabel((*label).to_owned()));
        }
    }
    Ok(event_set
        .iter()
        .map(|label| {
            stream
                .day_events(ts.day)
                .iter()
                .filter(|e| e.ts == ts && e.activity == *label)
                .count() as u64
        })
        .collect())
}

/// Build the runtime pattern of a parsed query.
pub fn pattern_of_query(ast: &QueryAst, slot_seconds: u32) -> Result<SequencePattern, CepError> {
    let steps: Vec<Predicate> =
        ast.pattern.bindings.iter().map(|b| b.predicate.clone()).collect();
    let within = ast.pattern.within.as_ref().map(|w| w.slots(slot_seconds));
    Ok(SequencePattern::new(steps, within)?)
}

/// Evaluate a query over named streams: one output event per pattern match,
/// carrying the select-list values, inserted into the target stream.
/// `slot_seconds` converts the `within` clause into slots.
pub fn evaluate_query(
    ast: &QueryAst,
    streams: &BTreeMap<String, EventStream>,
    slot_seconds: u32,
) -> Result<EventStream, CepError> {
    let mut names = ast.pattern.bindings.iter().map(|b| b.stream.as_str());
    let stream_name = names.next().expect("parser guarantees at least one binding");
    if names.any(|n| n != stream_name) {
        return Err(CepError::MixedStreams);
    }
    let stream = streams
        .get(stream_name)
        .ok_or_else(|| CepError::UnknownStream(stream_name.to_owned()))?;
    let pattern = pattern_of_query(ast, slot_seconds)?;

    let schema = derived_schema(ast)?;
    let mut events = Vec::new();
    for day in stream.days() {
        for m in match_sequence(stream, &pattern, day) {
            let evs = stream.day_events(day);
            let mut attrs = BTreeMap::new();
            for item in &ast.select {
                let name = derived_field_name(item);
                let value = select_value(ast, item, evs, &m)?;
                attrs.insert(name, value);
            }
            events.push(Event {
                stream_name: ast.insert_into.clone(),
                ts: Timestamp::new(day, m.completion_slot),
                activity: ast.insert_into.clone(),
                attrs,
            });
        }
    }
    let records = events
        .iter()
        .map(|e| crate::event::RawRecord {
            stream: e.stream_name.clone(),
            day: i64::from(e.ts.day),
            slot: i64::from(e.ts.slot),
            activity: e.activity.clone(),
            attrs: e.attrs.clone(),
        })
        .collect();
    let derived = crate::event::ingest_events(&ast.insert_into, &schema, records)
        .expect("derived records conform to the derived schema by construction");
    Ok(derived)
}

fn derived_field_name(item: &SelectItem) -> String {
    item.alias
        .clone()
        .unwrap_or_else(|| crate::query::print_select_expr(&item.expr))
}

/// Static type of each select item, resolvable because validation pinned
/// every field to the bound stream's schema or a reserved intrinsic.
fn derived_schema(ast: &QueryAst) -> Result<Vec<FieldDecl>, CepError> {
    let mut fields = Vec::new();
    for item in &ast.select {
        let name = derived_field_name(item);
        let ty = match &item.expr {
            SelectExpr::Count(_) => FieldType::Long,
            SelectExpr::Field(fr) => {
                let binding = ast.binding(&fr.binding).ok_or_else(|| CepError::UnknownField {
                    binding: fr.binding.clone(),
                    field: fr.field.clone(),
                })?;
                match fr.field.as_str() {
                    "ts" | "slot" | "day" => FieldType::Long,
                    "user_activity" => FieldType::String,
                    other => ast
                        .stream_def(&binding.stream)
                        .and_then(|d| d.fields.iter().find(|f| f.name == other))
                        .map(|f| f.ty)
                        .ok_or_else(|| CepError::UnknownField {
                            binding: fr.binding.clone(),
                            field: fr.field.clone(),
                        })?,
                }
            }
        };
        fields.push(FieldDecl { name, ty });
    }
    Ok(fields)
}

fn select_value(
    ast: &QueryAst,
    item: &SelectItem,
    day_events: &[Event],
    m: &PatternMatch,
) -> Result<Value, CepError> {
    let binding_index = |name: &str| -> Option<usize> {
        ast.pattern.bindings.iter().position(|b| b.name == name)
    };
    match &item.expr {
        SelectExpr::Field(fr) => {
            let idx = binding_index(&fr.binding).ok_or_else(|| CepError::UnknownField {
                binding: fr.binding.clone(),
                field: fr.field.clone(),
            })?;
            let event = &day_events[m.event_indices[idx]];
            event.field(&fr.field).ok_or_else(|| CepError::UnknownField {
                binding: fr.binding.clone(),
                field: fr.field.clone(),
            })
        }
        SelectExpr::Count(fr) => {
            // count over the match's bound events for this binding: 1 when the
            // field resolves (non-null), 0 otherwise
            let idx = binding_index(&fr.binding).ok_or_else(|| CepError::UnknownField {
                binding: fr.binding.clone(),
                field: fr.field.clone(),
            })?;
            let event = &day_events[m.event_indices[idx]];
            Ok(Value::Int(i64::from(event.field(&fr.field).is_some())))
        }
    }
}
