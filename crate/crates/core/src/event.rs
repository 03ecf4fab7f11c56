//! Event and stream data model shared by every other module.
//!
//! Time is discrete: a timestamp is a (day, slot) pair, both 1-based, ordered
//! lexicographically. Wall-clock duration per slot is a scenario-level
//! configuration (default one minute) and only matters when converting query
//! window clauses into slot counts.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

/// Discrete time point: day index and slot within the day, both starting at 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Timestamp {
    pub day: u32,
    pub slot: u32,
}

impl Timestamp {
    pub fn new(day: u32, slot: u32) -> Self {
        Timestamp { day, slot }
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "d{}t{}", self.day, self.slot)
    }
}

/// Scalar attribute value carried by an event.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Float(f64),
    Str(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Float(v) => write!(f, "{v:?}"),
            Value::Str(v) => write!(f, "{v}"),
        }
    }
}

/// Declared type of a stream field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldType {
    Long,
    Int,
    Float,
    String,
}

impl FieldType {
    pub fn name(self) -> &'static str {
        match self {
            FieldType::Long => "long",
            FieldType::Int => "int",
            FieldType::Float => "float",
            FieldType::String => "string",
        }
    }

    pub fn parse(name: &str) -> Option<FieldType> {
        match name {
            "long" => Some(FieldType::Long),
            "int" => Some(FieldType::Int),
            "float" => Some(FieldType::Float),
            "string" => Some(FieldType::String),
            _ => None,
        }
    }

    fn accepts(self, value: &Value) -> bool {
        matches!(
            (self, value),
            (FieldType::Long, Value::Int(_))
                | (FieldType::Int, Value::Int(_))
                | (FieldType::Float, Value::Float(_))
                | (FieldType::Float, Value::Int(_))
                | (FieldType::String, Value::Str(_))
        )
    }
}

/// One declared field of a stream schema.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldDecl {
    pub name: String,
    pub ty: FieldType,
}

impl FieldDecl {
    pub fn new(name: &str, ty: FieldType) -> Self {
        FieldDecl { name: name.to_string(), ty }
    }
}

/// Field names that resolve to intrinsic event data instead of attributes:
/// `user_activity` is the activity label, `ts` and `slot` the slot index,
/// `day` the day index. Queries may reference them without declaring them.
pub const RESERVED_FIELDS: [&str; 4] = ["user_activity", "ts", "day", "slot"];

pub fn is_reserved_field(name: &str) -> bool {
    RESERVED_FIELDS.contains(&name)
}

/// A timestamped simple event.
#[derive(Clone, Debug, PartialEq)]
pub struct Event {
    pub stream_name: String,
    pub ts: Timestamp,
    pub activity: String,
    pub attrs: BTreeMap<String, Value>,
}

impl Event {
    /// Resolve a field name on this event: reserved names map to intrinsic
    /// data, everything else is looked up among the attributes.
    pub fn field(&self, name: &str) -> Option<Value> {
        match name {
            "user_activity" => Some(Value::Str(self.activity.clone())),
            "ts" | "slot" => Some(Value::Int(i64::from(self.ts.slot))),
            "day" => Some(Value::Int(i64::from(self.ts.day))),
            other => self.attrs.get(other).cloned(),
        }
    }
}

/// Unvalidated event record as read from an input file. Day and slot are kept
/// signed so out-of-range values surface as [`IngestError::InvalidTimestamp`]
/// rather than a deserialization failure.
#[derive(Clone, Debug, PartialEq)]
pub struct RawRecord {
    pub stream: String,
    pub day: i64,
    pub slot: i64,
    pub activity: String,
    pub attrs: BTreeMap<String, Value>,
}

/// A named, schema-typed sequence of events sorted by timestamp.
#[derive(Clone, Debug, PartialEq)]
pub struct EventStream {
    pub name: String,
    pub schema: Vec<FieldDecl>,
    events: Vec<Event>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum IngestError {
    /// A record does not conform to the stream schema (missing field, wrong
    /// type, wrong stream, or empty activity).
    SchemaMismatch { record_index: usize, reason: String },
    /// Day or slot below 1.
    InvalidTimestamp { record_index: usize, day: i64, slot: i64 },
}

impl fmt::Display for IngestError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IngestError::SchemaMismatch { record_index, reason } => {
                write!(f, "record {record_index}: schema mismatch: {reason}")
            }
            IngestError::InvalidTimestamp { record_index, day, slot } => {
                write!(f, "record {record_index}: invalid timestamp day={day} slot={slot}")
            }
        }
    }
}

impl core::error::Error for IngestError {}

/// Validate raw records against a schema and build a stream sorted by
/// (day, slot). The sort is stable, so records sharing a timestamp keep their
/// input order. Attributes beyond the declared schema are allowed.
pub fn ingest_events(
    name: &str,
    schema: &[FieldDecl],
    records: Vec<RawRecord>,
) -> Result<EventStream, IngestError> {
    let mut events = Vec::with_capacity(records.len());
    for (record_index, rec) in records.into_iter().enumerate() {
        if rec.stream != name {
            return Err(IngestError::SchemaMismatch {
                record_index,
                reason: alloc::format!("stream '{}' does not match '{}'", rec.stream, name),
            });
        }
        if rec.day < 1 || rec.slot < 1 || rec.day > i64::from(u32::MAX) || rec.slot > i64::from(u32::MAX)
        {
            return Err(IngestError::InvalidTimestamp { record_index, day: rec.day, slot: rec.slot });
        }
        if rec.activity.is_empty() {
            return Err(IngestError::SchemaMismatch {
                record_index,
                reason: "empty activity label".to_string(),
            });
        }
        for decl in schema {
            if is_reserved_field(&decl.name) {
                continue;
            }
            match rec.attrs.get(&decl.name) {
                None => {
                    return Err(IngestError::SchemaMismatch {
                        record_index,
                        reason: alloc::format!("missing field '{}'", decl.name),
                    })
                }
                Some(v) if !decl.ty.accepts(v) => {
                    return Err(IngestError::SchemaMismatch {
                        record_index,
                        reason: alloc::format!(
                            "field '{}' is not of type {}",
                            decl.name,
                            decl.ty.name()
                        ),
                    })
                }
                Some(_) => {}
            }
        }
        events.push(Event {
            stream_name: rec.stream,
            ts: Timestamp::new(rec.day as u32, rec.slot as u32),
            activity: rec.activity,
            attrs: rec.attrs,
        });
    }
    events.sort_by_key(|e| e.ts); // stable: ties keep ingestion order
    Ok(EventStream { name: name.to_string(), schema: schema.to_vec(), events })
}

impl EventStream {
    /// An empty stream of the given schema.
    pub fn empty(name: &str, schema: &[FieldDecl]) -> Self {
        EventStream { name: name.to_string(), schema: schema.to_vec(), events: Vec::new() }
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Distinct days present, ascending.
    pub fn days(&self) -> Vec<u32> {
        let mut days: Vec<u32> = self.events.iter().map(|e| e.ts.day).collect();
        days.dedup(); // already sorted by (day, slot)
        days
    }

    /// Events of one day, in timestamp order (empty slice for absent days).
    pub fn day_events(&self, day: u32) -> &[Event] {
        let start = self.events.partition_point(|e| e.ts.day < day);
        let end = self.events.partition_point(|e| e.ts.day <= day);
        &self.events[start..end]
    }

    /// Highest slot index observed on any day (0 for an empty stream).
    pub fn max_slot(&self) -> u32 {
        self.events.iter().map(|e| e.ts.slot).max().unwrap_or(0)
    }

    /// Distinct activity labels, sorted.
    pub fn alphabet(&self) -> BTreeSet<String> {
        self.events.iter().map(|e| e.activity.clone()).collect()
    }

    /// Turn the stream back into raw records (inverse of ingestion up to
    /// ordering, which ingestion normalizes).
    pub fn to_records(&self) -> Vec<RawRecord> {
        self.events
            .iter()
            .map(|e| RawRecord {
                stream: e.stream_name.clone(),
                day: i64::from(e.ts.day),
                slot: i64::from(e.ts.slot),
                activity: e.activity.clone(),
                attrs: e.attrs.clone(),
            })
            .collect()
    }
}
