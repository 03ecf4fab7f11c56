//! Tokenizer for the query subset. Tracks line/column for every token so the
//! parser can report precise positions.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::ParseError;

#[derive(Clone, Debug, PartialEq)]
pub(super) enum Tok {
    Ident(String),
    /// Single-quoted string (no escape sequences).
    Str(String),
    /// Unsigned integer magnitude; the parser applies any leading minus.
    Int(u64),
    Float(f64),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Dot,
    At,
    Assign,
    Arrow,
    Minus,
    EqEq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Eof,
}

impl Tok {
    pub(super) fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => alloc::format!("identifier '{s}'"),
            Tok::Str(s) => alloc::format!("string '{s}'"),
            Tok::Int(v) => alloc::format!("integer {v}"),
            Tok::Float(v) => alloc::format!("number {v:?}"),
            Tok::LParen => "'('".to_string(),
            Tok::RParen => "')'".to_string(),
            Tok::LBracket => "'['".to_string(),
            Tok::RBracket => "']'".to_string(),
            Tok::Comma => "','".to_string(),
            Tok::Semi => "';'".to_string(),
            Tok::Dot => "'.'".to_string(),
            Tok::At => "'@'".to_string(),
            Tok::Assign => "'='".to_string(),
            Tok::Arrow => "'->'".to_string(),
            Tok::Minus => "'-'".to_string(),
            Tok::EqEq => "'=='".to_string(),
            Tok::Ne => "'!='".to_string(),
            Tok::Lt => "'<'".to_string(),
            Tok::Le => "'<='".to_string(),
            Tok::Gt => "'>'".to_string(),
            Tok::Ge => "'>='".to_string(),
            Tok::Eof => "end of input".to_string(),
        }
    }
}

#[derive(Clone, Debug)]
pub(super) struct Spanned {
    pub tok: Tok,
    pub line: u32,
    pub col: u32,
}

pub(super) fn lex(text: &str) -> Result<Vec<Spanned>, ParseError> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0usize;
    let mut line = 1u32;
    let mut col = 1u32;

    macro_rules! push {
        ($tok:expr, $l:expr, $c:expr) => {
            out.push(Spanned { tok: $tok, line: $l, col: $c })
        };
    }

    while i < chars.len() {
        let c = chars[i];
        let (tline, tcol) = (line, col);
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => {
                i += 1;
                col += 1;
            }
            '(' => { push!(Tok::LParen, tline, tcol); i += 1; col += 1; }
            ')' => { push!(Tok::RParen, tline, tcol); i += 1; col += 1; }
            '[' => { push!(Tok::LBracket, tline, tcol); i += 1; col += 1; }
            ']' => { push!(Tok::RBracket, tline, tcol); i += 1; col += 1; }
            ',' => { push!(Tok::Comma, tline, tcol); i += 1; col += 1; }
            ';' => { push!(Tok::Semi, tline, tcol); i += 1; col += 1; }
            '.' => { push!(Tok::Dot, tline, tcol); i += 1; col += 1; }
            '@' => { push!(Tok::At, tline, tcol); i += 1; col += 1; }
            '-' => {
                if chars.get(i + 1) == Some(&'>') {
                    push!(Tok::Arrow, tline, tcol);
                    i += 2;
                    col += 2;
                } else {
                    push!(Tok::Minus, tline, tcol);
                    i += 1;
                    col += 1;
                }
            }
            '=' => {
                if chars.get(i + 1) == Some(&'=') {
                    push!(Tok::EqEq, tline, tcol);
                    i += 2;
                    col += 2;
                } else {
                    push!(Tok::Assign, tline, tcol);
                    i += 1;
                    col += 1;
                }
            }
            '!' => {
                if chars.get(i + 1) == Some(&'=') {
                    push!(Tok::Ne, tline, tcol);
                    i += 2;
                    col += 2;
                } else {
                    return Err(unexpected_char(c, tline, tcol));
                }
            }
            '<' => {
                if chars.get(i + 1) == Some(&'=') {
                    push!(Tok::Le, tline, tcol);
                    i += 2;
                    col += 2;
                } else {
                    push!(Tok::Lt, tline, tcol);
                    i += 1;
                    col += 1;
                }
            }
            '>' => {
                if chars.get(i + 1) == Some(&'=') {
                    push!(Tok::Ge, tline, tcol);
                    i += 2;
                    col += 2;
                } else {
                    push!(Tok::Gt, tline, tcol);
                    i += 1;
                    col += 1;
                }
            }
            '\'' => {
                let mut s = String::new();
                let mut j = i + 1;
                let mut scol = col + 1;
                let mut sline = line;
                loop {
                    match chars.get(j) {
                        None => {
                            return Err(ParseError {
                                line: tline,
                                col: tcol,
                                expected: alloc::vec!["closing '''".to_string()],
                                found: "end of input".to_string(),
                            })
                        }
                        Some('\'') => {
                            j += 1;
                            scol += 1;
                            break;
                        }
                        Some('\n') => {
                            s.push('\n');
                            j += 1;
                            sline += 1;
                            scol = 1;
                        }
                        Some(&ch) => {
                            s.push(ch);
                            j += 1;
                            scol += 1;
                        }
                    }
                }
                push!(Tok::Str(s), tline, tcol);
                i = j;
                line = sline;
                col = scol;
            }
            c if c.is_ascii_digit() => {
                let start = i;
                let mut j = i;
                while chars.get(j).is_some_and(|c| c.is_ascii_digit()) {
                    j += 1;
                }
                let mut is_float = false;
                if chars.get(j) == Some(&'.') && chars.get(j + 1).is_some_and(|c| c.is_ascii_digit())
                {
                    is_float = true;
                    j += 1;
                    while chars.get(j).is_some_and(|c| c.is_ascii_digit()) {
                        j += 1;
                    }
                }
                if matches!(chars.get(j), Some('e') | Some('E')) {
                    let mut k = j + 1;
                    if matches!(chars.get(k), Some('+') | Some('-')) {
                        k += 1;
                    }
                    if chars.get(k).is_some_and(|c| c.is_ascii_digit()) {
                        is_float = true;
                        j = k;
                        while chars.get(j).is_some_and(|c| c.is_ascii_digit()) {
                            j += 1;
                        }
                    }
                }
                let text: String = chars[start..j].iter().collect();
                let tok = if is_float {
                    match text.parse::<f64>() {
                        Ok(v) => Tok::Float(v),
                        Err(_) => return Err(bad_number(&text, tline, tcol)),
                    }
                } else {
                    match text.parse::<u64>() {
                        Ok(v) => Tok::Int(v),
                        Err(_) => return Err(bad_number(&text, tline, tcol)),
                    }
                };
                push!(tok, tline, tcol);
                col += (j - i) as u32;
                i = j;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                let mut j = i;
                while chars
                    .get(j)
                    .is_some_and(|c| c.is_ascii_alphanumeric() || *c == '_')
                {
                    j += 1;
                }
                let text: String = chars[start..j].iter().collect();
                push!(Tok::Ident(text), tline, tcol);
                col += (j - i) as u32;
                i = j;
            }
            other => return Err(unexpected_char(other, tline, tcol)),
        }
    }
    out.push(Spanned { tok: Tok::Eof, line, col });
    Ok(out)
}

fn unexpected_char(c: char, line: u32, col: u32) -> ParseError {
    ParseError {
        line,
        col,
        expected: alloc::vec!["a token".to_string()],
        found: alloc::format!("character '{c}'"),
    }
}

fn bad_number(text: &str, line: u32, col: u32) -> ParseError {
    ParseError {
        line,
        col,
        expected: alloc::vec!["a numeric literal in range".to_string()],
        found: alloc::format!("'{text}'"),
    }
}
