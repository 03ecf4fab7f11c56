//! Canonical printer: one clause per line, sequence steps indented, string
//! literals single-quoted. `parse_query(print_query(ast)) == ast` for every
//! valid AST.

use alloc::string::String;
use core::fmt::Write;

use super::*;

pub fn print_query(ast: &QueryAst) -> String {
    let mut out = String::new();
    for def in &ast.stream_defs {
        let _ = write!(out, "define stream {} (", def.name);
        for (i, f) in def.fields.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            let _ = write!(out, "{} {}", f.name, f.ty.name());
        }
        out.push_str(");\n");
    }
    for ann in &ast.annotations {
        let _ = write!(out, "@{}(", ann.name);
        for (i, (k, v)) in ann.params.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            let _ = write!(out, "{k}='{v}'");
        }
        out.push_str(")\n");
    }
    for (i, b) in ast.pattern.bindings.iter().enumerate() {
        if i == 0 {
            out.push_str("from every ");
        } else {
            out.push_str("    -> ");
        }
        let _ = write!(out, "{}={}[", b.name, b.stream);
        print_predicate(&mut out, &b.predicate);
        out.push_str("]\n");
    }
    if let Some(w) = &ast.pattern.within {
        let _ = writeln!(out, "within {} {}", w.amount, w.unit.name());
    }
    out.push_str("select ");
    for (i, item) in ast.select.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(&print_select_expr(&item.expr));
        if let Some(alias) = &item.alias {
            let _ = write!(out, " as {alias}");
        }
    }
    out.push('\n');
    let _ = writeln!(out, "insert into {};", ast.insert_into);
    out
}

fn print_predicate(out: &mut String, p: &Predicate) {
    for (i, c) in p.comparisons.iter().enumerate() {
        if i > 0 {
            out.push_str(" and ");
        }
        let _ = write!(out, "{} {} {}", c.field, c.op.symbol(), print_literal(&c.literal));
    }
}

pub(crate) fn print_literal(lit: &Literal) -> String {
    match lit {
        Literal::Int(v) => alloc::format!("{v}"),
        // Debug formatting of f64 is the shortest representation that parses
        // back to the same value, which the round-trip property relies on.
        Literal::Float(v) => alloc::format!("{v:?}"),
        Literal::Str(s) => alloc::format!("'{s}'"),
    }
}

/// Canonical text of a select expression; doubles as the derived field name
/// when no alias is given.
pub fn print_select_expr(expr: &SelectExpr) -> String {
    match expr {
        SelectExpr::Field(fr) => alloc::format!("{}.{}", fr.binding, fr.field),
        SelectExpr::Count(fr) => alloc::format!("count({}.{})", fr.binding, fr.field),
    }
}
