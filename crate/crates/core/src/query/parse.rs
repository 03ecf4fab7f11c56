//! Recursive-descent parser plus post-parse semantic validation.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::lex::{lex, Spanned, Tok};
use super::*;
use crate::event::FieldType;

/// Words with grammatical meaning; rejected as identifiers everywhere.
/// (`AND` is accepted as a conjunction spelling alongside `and`; type names
/// like `long` stay contextual and remain valid identifiers.)
pub(super) const KEYWORDS: [&str; 14] = [
    "define", "stream", "from", "every", "within", "select", "count", "as", "insert", "into",
    "min", "sec", "and", "AND",
];

pub(super) fn is_keyword(word: &str) -> bool {
    KEYWORDS.contains(&word)
}

/// Parse a query and validate stream/binding/field references.
pub fn parse_query(text: &str) -> Result<QueryAst, QueryError> {
    let tokens = lex(text)?;
    let mut p = Parser { tokens, pos: 0 };
    let ast = p.query()?;
    validate(&ast)?;
    Ok(ast)
}

struct Parser {
    tokens: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_is_kw(&self, word: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == word)
    }

    fn advance(&mut self) -> Tok {
        let tok = self.tokens[self.pos].tok.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        tok
    }

    fn err(&self, expected: &[&str]) -> ParseError {
        let at = &self.tokens[self.pos];
        ParseError {
            line: at.line,
            col: at.col,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: at.tok.describe(),
        }
    }

    fn expect_kw(&mut self, word: &str) -> Result<(), ParseError> {
        if self.peek_is_kw(word) {
            self.advance();
            Ok(())
        } else {
            Err(self.err(&[&alloc::format!("'{word}'")]))
        }
    }

    fn expect_tok(&mut self, tok: Tok, name: &str) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.advance();
            Ok(())
        } else {
            Err(self.err(&[name]))
        }
    }

    fn expect_ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek() {
            Tok::Ident(s) if !is_keyword(s) => {
                let s = s.clone();
                self.advance();
                Ok(s)
            }
            _ => Err(self.err(&[what])),
        }
    }

    fn query(&mut self) -> Result<QueryAst, ParseError> {
        let mut stream_defs = Vec::new();
        while self.peek_is_kw("define") {
            stream_defs.push(self.stream_def()?);
        }
        let mut annotations = Vec::new();
        while *self.peek() == Tok::At {
            annotations.push(self.annotation()?);
        }
        if !self.peek_is_kw("from") {
            return Err(self.err(&["'define'", "'@'", "'from'"]));
        }
        let pattern = self.pattern_clause()?;
        let select = self.select_clause()?;
        let insert_into = self.insert_clause()?;
        self.expect_tok(Tok::Semi, "';'")?;
        if *self.peek() != Tok::Eof {
            return Err(self.err(&["end of input"]));
        }
        Ok(QueryAst { stream_defs, annotations, pattern, select, insert_into })
    }

    fn stream_def(&mut self) -> Result<StreamDef, ParseError> {
        self.expect_kw("define")?;
        self.expect_kw("stream")?;
        let name = self.expect_ident("stream name")?;
        self.expect_tok(Tok::LParen, "'('")?;
        let mut fields = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                let fname = self.expect_ident("field name")?;
                let ty = match self.peek() {
                    Tok::Ident(s) => match FieldType::parse(s) {
                        Some(ty) => {
                            self.advance();
                            ty
                        }
                        None => {
                            return Err(self.err(&["'long'", "'int'", "'float'", "'string'"]))
                        }
                    },
                    _ => return Err(self.err(&["'long'", "'int'", "'float'", "'string'"])),
                };
                fields.push(crate::event::FieldDecl { name: fname, ty });
                if *self.peek() == Tok::Comma {
                    self.advance();
                } else {
                    break;
                }
            }
        }
        self.expect_tok(Tok::RParen, "')'")?;
        self.expect_tok(Tok::Semi, "';'")?;
        Ok(StreamDef { name, fields })
    }

    fn annotation(&mut self) -> Result<Annotation, ParseError> {
        self.expect_tok(Tok::At, "'@'")?;
        let name = self.expect_ident("annotation name")?;
        self.expect_tok(Tok::LParen, "'('")?;
        let mut params = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                let key = self.expect_ident("parameter name")?;
                self.expect_tok(Tok::Assign, "'='")?;
                let value = match self.peek() {
                    Tok::Str(s) => {
                        let s = s.clone();
                        self.advance();
                        s
                    }
                    _ => return Err(self.err(&["a quoted string"])),
                };
                params.push((key, value));
                if *self.peek() == Tok::Comma {
                    self.advance();
                } else {
                    break;
                }
            }
        }
        self.expect_tok(Tok::RParen, "')'")?;
        Ok(Annotation { name, params })
    }

    fn pattern_clause(&mut self) -> Result<PatternClause, ParseError> {
        self.expect_kw("from")?;
        self.expect_kw("every")?;
        let mut bindings = alloc::vec![self.binding()?];
        while *self.peek() == Tok::Arrow {
            self.advance();
            bindings.push(self.binding()?);
        }
        let within = if self.peek_is_kw("within") {
            self.advance();
            let amount = match self.peek() {
                Tok::Int(v) => {
                    let v = *v;
                    self.advance();
                    v
                }
                _ => return Err(self.err(&["an integer duration"])),
            };
            let unit = if self.peek_is_kw("min") {
                self.advance();
                TimeUnit::Min
            } else if self.peek_is_kw("sec") {
                self.advance();
                TimeUnit::Sec
            } else {
                return Err(self.err(&["'min'", "'sec'"]));
            };
            Some(WithinClause { amount, unit })
        } else {
            None
        };
        Ok(PatternClause { bindings, within })
    }

    fn binding(&mut self) -> Result<Binding, ParseError> {
        let name = self.expect_ident("binding name")?;
        self.expect_tok(Tok::Assign, "'='")?;
        let stream = self.expect_ident("stream name")?;
        self.expect_tok(Tok::LBracket, "'['")?;
        let mut comparisons = alloc::vec![self.comparison()?];
        while self.peek_is_kw("and") || self.peek_is_kw("AND") {
            self.advance();
            comparisons.push(self.comparison()?);
        }
        self.expect_tok(Tok::RBracket, "']'")?;
        // non-empty by construction
        Ok(Binding { name, stream, predicate: Predicate { comparisons } })
    }

    fn comparison(&mut self) -> Result<Comparison, ParseError> {
        let field = self.expect_ident("field name")?;
        let op = match self.peek() {
            Tok::EqEq => CmpOp::Eq,
            Tok::Ne => CmpOp::Ne,
            Tok::Lt => CmpOp::Lt,
            Tok::Le => CmpOp::Le,
            Tok::Gt => CmpOp::Gt,
            Tok::Ge => CmpOp::Ge,
            _ => return Err(self.err(&["'=='", "'!='", "'<'", "'<='", "'>'", "'>='"])),
        };
        self.advance();
        let literal = self.literal()?;
        Ok(Comparison { field, op, literal })
    }

    fn literal(&mut self) -> Result<Literal, ParseError> {
        let negative = if *self.peek() == Tok::Minus {
            self.advance();
            true
        } else {
            false
        };
        match self.peek().clone() {
            Tok::Str(s) => {
                if negative {
                    return Err(self.err(&["a number after '-'"]));
                }
                self.advance();
                Ok(Literal::Str(s))
            }
            Tok::Int(magnitude) => {
                self.advance();
                let value = if negative {
                    if magnitude > (i64::MAX as u64) + 1 {
                        return Err(self.err(&["an integer within i64 range"]));
                    }
                    (magnitude as i128).wrapping_neg() as i64
                } else {
                    i64::try_from(magnitude)
                        .map_err(|_| self.err(&["an integer within i64 range"]))?
                };
                Ok(Literal::Int(value))
            }
            Tok::Float(v) => {
                self.advance();
                Ok(Literal::Float(if negative { -v } else { v }))
            }
            _ => Err(self.err(&["a string, integer, or float literal"])),
        }
    }

    fn select_clause(&mut self) -> Result<Vec<SelectItem>, ParseError> {
        self.expect_kw("select")?;
        let mut items = alloc::vec![self.select_item()?];
        while *self.peek() == Tok::Comma {
            self.advance();
            items.push(self.select_item()?);
        }
        Ok(items)
    }

    fn select_item(&mut self) -> Result<SelectItem, ParseError> {
        let expr = if self.peek_is_kw("count") {
            self.advance();
            self.expect_tok(Tok::LParen, "'('")?;
            let fr = self.field_ref()?;
            self.expect_tok(Tok::RParen, "')'")?;
            SelectExpr::Count(fr)
        } else {
            SelectExpr::Field(self.field_ref()?)
        };
        let alias = if self.peek_is_kw("as") {
            self.advance();
            Some(self.expect_ident("alias name")?)
        } else {
            None
        };
        Ok(SelectItem { expr, alias })
    }

    fn field_ref(&mut self) -> Result<FieldRef, ParseError> {
        let binding = self.expect_ident("binding reference")?;
        self.expect_tok(Tok::Dot, "'.'")?;
        let field = self.expect_ident("field name")?;
        Ok(FieldRef { binding, field })
    }

    fn insert_clause(&mut self) -> Result<String, ParseError> {
        self.expect_kw("insert")?;
        self.expect_kw("into")?;
        self.expect_ident("target stream name")
    }
}

fn validate(ast: &QueryAst) -> Result<(), SemanticError> {
    for (i, def) in ast.stream_defs.iter().enumerate() {
        if ast.stream_defs[..i].iter().any(|d| d.name == def.name) {
            return Err(SemanticError::DuplicateStreamDef { name: def.name.clone() });
        }
    }
    for (i, b) in ast.pattern.bindings.iter().enumerate() {
        if ast.pattern.bindings[..i].iter().any(|p| p.name == b.name) {
            return Err(SemanticError::DuplicateBinding { name: b.name.clone() });
        }
        if ast.stream_def(&b.stream).is_none() {
            return Err(SemanticError::UnknownStream {
                binding: b.name.clone(),
                stream: b.stream.clone(),
            });
        }
        for cmp in &b.predicate.comparisons {
            if !ast.field_is_known(&b.stream, &cmp.field) {
                return Err(SemanticError::UnknownField {
                    location: alloc::format!("binding '{}'", b.name),
                    field: cmp.field.clone(),
                });
            }
        }
    }
    if let Some(w) = &ast.pattern.within {
        if w.amount == 0 {
            return Err(SemanticError::InvalidWithin);
        }
    }
    for item in &ast.select {
        let fr = match &item.expr {
            SelectExpr::Field(fr) | SelectExpr::Count(fr) => fr,
        };
        let binding = ast
            .binding(&fr.binding)
            .ok_or_else(|| SemanticError::UnknownBinding { name: fr.binding.clone() })?;
        if !ast.field_is_known(&binding.stream, &fr.field) {
            return Err(SemanticError::UnknownField {
                location: "select list".to_string(),
                field: fr.field.clone(),
            });
        }
    }
    Ok(())
}
