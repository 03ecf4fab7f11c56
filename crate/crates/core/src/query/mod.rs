//! Sequence-query language: stream definitions, a `from every` sequence
//! pattern with bracketed conjunctive filters, an optional `within` window,
//! `select` with field projections and `count()` aggregates, `insert into`,
//! and `@name(key='value')` annotations.
//!
//! Queries are first-class rewritable values: `parse_query` and `print_query`
//! round-trip (`parse(print(ast)) == ast`), and the printer emits a canonical
//! one-clause-per-line layout so rewrites can be diffed line by line.

mod lex;
mod parse;
pub mod print;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::event::FieldDecl;

pub use parse::parse_query;
pub use print::{print_query, print_select_expr};

/// A parsed query.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryAst {
    pub stream_defs: Vec<StreamDef>,
    pub annotations: Vec<Annotation>,
    pub pattern: PatternClause,
    pub select: Vec<SelectItem>,
    pub insert_into: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StreamDef {
    pub name: String,
    pub fields: Vec<FieldDecl>,
}

/// `@name(key='value', ...)` attached to the query.
#[derive(Clone, Debug, PartialEq)]
pub struct Annotation {
    pub name: String,
    pub params: Vec<(String, String)>,
}

impl Annotation {
    pub fn param(&self, key: &str) -> Option<&str> {
        self.params.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

/// Well-known annotation names used by the rewriting and placement stages.
pub const SINK_ANNOTATION: &str = "sink";
pub const RESTRICT_ANNOTATION: &str = "restrict";

#[derive(Clone, Debug, PartialEq)]
pub struct PatternClause {
    pub bindings: Vec<Binding>,
    pub within: Option<WithinClause>,
}

/// One step of the sequence pattern: `name=Stream[predicate]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Binding {
    pub name: String,
    pub stream: String,
    pub predicate: Predicate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimeUnit {
    Min,
    Sec,
}

impl TimeUnit {
    pub fn name(self) -> &'static str {
        match self {
            TimeUnit::Min => "min",
            TimeUnit::Sec => "sec",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WithinClause {
    pub amount: u64,
    pub unit: TimeUnit,
}

impl WithinClause {
    pub fn seconds(&self) -> u64 {
        match self.unit {
            TimeUnit::Min => self.amount * 60,
            TimeUnit::Sec => self.amount,
        }
    }

    /// Window length in slots, rounding up when the duration is not a whole
    /// number of slots.
    pub fn slots(&self, slot_seconds: u32) -> u32 {
        let secs = self.seconds();
        let per = u64::from(slot_seconds.max(1));
        let slots = secs.div_ceil(per);
        u32::try_from(slots).unwrap_or(u32::MAX)
    }
}

/// Conjunction of comparisons; always at least one.
#[derive(Clone, Debug, PartialEq)]
pub struct Predicate {
    pub comparisons: Vec<Comparison>,
}

impl Predicate {
    pub fn new(comparisons: Vec<Comparison>) -> Result<Self, SemanticError> {
        if comparisons.is_empty() {
            return Err(SemanticError::EmptyPredicate);
        }
        Ok(Predicate { comparisons })
    }

    /// Activity labels this predicate pins with `user_activity == '...'`.
    pub fn activity_equalities(&self) -> Vec<&str> {
        self.comparisons
            .iter()
            .filter_map(|c| match (&c.op, &c.literal) {
                (CmpOp::Eq, Literal::Str(s)) if c.field == "user_activity" => Some(s.as_str()),
                _ => None,
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub field: String,
    pub op: CmpOp,
    pub literal: Literal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Literal {
    Int(i64),
    Float(f64),
    Str(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldRef {
    pub binding: String,
    pub field: String,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SelectExpr {
    Field(FieldRef),
    Count(FieldRef),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelectItem {
    pub expr: SelectExpr,
    pub alias: Option<String>,
}

/// Syntax error with position and the token set that would have been valid.
#[derive(Clone, Debug, PartialEq)]
pub struct ParseError {
    pub line: u32,
    pub col: u32,
    pub expected: Vec<String>,
    pub found: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "parse error at {}:{}: found {}, expected ", self.line, self.col, self.found)?;
        for (i, e) in self.expected.iter().enumerate() {
            if i > 0 {
                write!(f, " | ")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl core::error::Error for ParseError {}

#[derive(Clone, Debug, PartialEq)]
pub enum SemanticError {
    UnknownStream { binding: String, stream: String },
    UnknownField { location: String, field: String },
    UnknownBinding { name: String },
    DuplicateBinding { name: String },
    DuplicateStreamDef { name: String },
    EmptyPredicate,
    InvalidWithin,
}

impl fmt::Display for SemanticError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SemanticError::UnknownStream { binding, stream } => {
                write!(f, "binding '{binding}' references unknown stream '{stream}'")
            }
            SemanticError::UnknownField { location, field } => {
                write!(f, "unknown field '{field}' in {location}")
            }
            SemanticError::UnknownBinding { name } => write!(f, "unknown binding '{name}'"),
            SemanticError::DuplicateBinding { name } => write!(f, "duplicate binding '{name}'"),
            SemanticError::DuplicateStreamDef { name } => {
                write!(f, "duplicate stream definition '{name}'")
            }
            SemanticError::EmptyPredicate => write!(f, "predicate must have at least one comparison"),
            SemanticError::InvalidWithin => write!(f, "within duration must be positive"),
        }
    }
}

impl core::error::Error for SemanticError {}

#[derive(Clone, Debug, PartialEq)]
pub enum QueryError {
    Parse(ParseError),
    Semantic(SemanticError),
}

impl fmt::Display for QueryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QueryError::Parse(e) => e.fmt(f),
            QueryError::Semantic(e) => e.fmt(f),
        }
    }
}

impl core::error::Error for QueryError {}

impl From<ParseError> for QueryError {
    fn from(e: ParseError) -> Self {
        QueryError::Parse(e)
    }
}

impl From<SemanticError> for QueryError {
    fn from(e: SemanticError) -> Self {
        QueryError::Semantic(e)
    }
}

impl QueryAst {
    pub fn stream_def(&self, name: &str) -> Option<&StreamDef> {
        self.stream_defs.iter().find(|d| d.name == name)
    }

    pub fn binding(&self, name: &str) -> Option<&Binding> {
        self.pattern.bindings.iter().find(|b| b.name == name)
    }

    pub fn annotation(&self, name: &str) -> Option<&Annotation> {
        self.annotations.iter().find(|a| a.name == name)
    }

    /// Replace the parameters of the named annotation, or append it if absent.
    pub fn set_annotation(&mut self, name: &str, params: Vec<(String, String)>) {
        if let Some(existing) = self.annotations.iter_mut().find(|a| a.name == name) {
            existing.params = params;
        } else {
            self.annotations.push(Annotation { name: String::from(name), params });
        }
    }

    /// Whether `field` is resolvable on the stream bound by `binding`:
    /// either a reserved intrinsic name or declared in the stream's schema.
    pub fn field_is_known(&self, stream: &str, field: &str) -> bool {
        if crate::event::is_reserved_field(field) {
            return true;
        }
        self.stream_def(stream)
            .map(|d| d.fields.iter().any(|f| f.name == field))
            .unwrap_or(false)
    }
}
