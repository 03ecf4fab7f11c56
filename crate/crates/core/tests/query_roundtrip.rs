//! Property tests for the query text format: printing any semantically valid
//! AST and parsing the result must reproduce the AST exactly, and the printed
//! form must be a fixed point of print ∘ parse.

use proptest::prelude::*;
use proptest::sample::Index;

use prisps_core::event::{FieldDecl, FieldType, RESERVED_FIELDS};
use prisps_core::query::{
    parse_query, print_query, Annotation, Binding, CmpOp, Comparison, FieldRef, Literal,
    PatternClause, Predicate, QueryAst, SelectExpr, SelectItem, StreamDef, TimeUnit, WithinClause,
};

/// Mirrors the parser's reserved-word list; identifiers must avoid these.
const KEYWORDS: [&str; 14] = [
    "define", "stream", "from", "every", "within", "select", "count", "as", "insert", "into",
    "min", "sec", "and", "AND",
];

fn ident() -> impl Strategy<Value = String> {
    "[a-z_][a-z0-9_]{0,8}".prop_filter("keywords are not identifiers", |s| {
        !KEYWORDS.contains(&s.as_str())
    })
}

fn field_type() -> impl Strategy<Value = FieldType> {
    prop::sample::select(vec![
        FieldType::Long,
        FieldType::Int,
        FieldType::Float,
        FieldType::String,
    ])
}

fn cmp_op() -> impl Strategy<Value = CmpOp> {
    prop::sample::select(vec![
        CmpOp::Eq,
        CmpOp::Ne,
        CmpOp::Lt,
        CmpOp::Le,
        CmpOp::Gt,
        CmpOp::Ge,
    ])
}

fn literal() -> impl Strategy<Value = Literal> {
    prop_oneof![
        any::<i64>().prop_map(Literal::Int),
        any::<f64>()
            .prop_filter("printable literals are finite", |v| v.is_finite())
            .prop_map(Literal::Float),
        "[a-zA-Z0-9 _.,-]{0,12}".prop_map(Literal::Str),
    ]
}

fn time_unit() -> impl Strategy<Value = TimeUnit> {
    prop::sample::select(vec![TimeUnit::Min, TimeUnit::Sec])
}

/// Fields that resolve on a stream: the reserved intrinsics plus whatever the
/// definition declares.
fn field_pool(def: &StreamDef) -> Vec<String> {
    let mut pool: Vec<String> = RESERVED_FIELDS.iter().map(|s| s.to_string()).collect();
    pool.extend(def.fields.iter().map(|f| f.name.clone()));
    pool
}

type RawComparison = (Index, CmpOp, Literal);
type RawBinding = (Index, Vec<RawComparison>);
type RawSelect = (Index, Index, bool, Option<String>);
type RawAnnotation = (String, Vec<(String, String)>);

#[allow(clippy::type_complexity)] // the tuple mirrors the strategy stack one-to-one
fn arb_query() -> impl Strategy<Value = QueryAst> {
    (
        prop::collection::btree_set(ident(), 1..=3),
        prop::collection::vec(prop::collection::vec((ident(), field_type()), 0..=4), 3),
        prop::collection::btree_set(ident(), 1..=4),
        prop::collection::vec((any::<Index>(), prop::collection::vec((any::<Index>(), cmp_op(), literal()), 1..=3)), 4),
        prop::option::of((1u64..=10_000u64, time_unit())),
        prop::collection::vec((any::<Index>(), any::<Index>(), any::<bool>(), prop::option::of(ident())), 1..=4),
        ident(),
        prop::collection::vec((ident(), prop::collection::vec((ident(), "[a-zA-Z0-9 _]{0,10}"), 0..=2)), 0..=2),
    )
        .prop_map(
            |(stream_names, field_lists, binding_names, raw_bindings, within, raw_select, insert_into, raw_annotations): (
                std::collections::BTreeSet<String>,
                Vec<Vec<(String, FieldType)>>,
                std::collections::BTreeSet<String>,
                Vec<RawBinding>,
                Option<(u64, TimeUnit)>,
                Vec<RawSelect>,
                String,
                Vec<RawAnnotation>,
            )| {
                let stream_defs: Vec<StreamDef> = stream_names
                    .into_iter()
                    .zip(field_lists)
                    .map(|(name, fields)| StreamDef {
                        name,
                        fields: fields
                            .into_iter()
                            .map(|(name, ty)| FieldDecl { name, ty })
                            .collect(),
                    })
                    .collect();

                let bindings: Vec<Binding> = binding_names
                    .into_iter()
                    .zip(raw_bindings)
                    .map(|(name, (stream_ix, raw_cmps))| {
                        let def = &stream_defs[stream_ix.index(stream_defs.len())];
                        let pool = field_pool(def);
                        let comparisons = raw_cmps
                            .into_iter()
                            .map(|(field_ix, op, literal)| Comparison {
                                field: pool[field_ix.index(pool.len())].clone(),
                                op,
                                literal,
                            })
                            .collect();
                        Binding {
                            name,
                            stream: def.name.clone(),
                            predicate: Predicate { comparisons },
                        }
                    })
                    .collect();

                let select: Vec<SelectItem> = raw_select
                    .into_iter()
                    .map(|(binding_ix, field_ix, counted, alias)| {
                        let b = &bindings[binding_ix.index(bindings.len())];
                        let def = stream_defs.iter().find(|d| d.name == b.stream).unwrap();
                        let pool = field_pool(def);
                        let fr = FieldRef {
                            binding: b.name.clone(),
                            field: pool[field_ix.index(pool.len())].clone(),
                        };
                        SelectItem {
                            expr: if counted { SelectExpr::Count(fr) } else { SelectExpr::Field(fr) },
                            alias,
                        }
                    })
                    .collect();

                QueryAst {
                    stream_defs,
                    annotations: raw_annotations
                        .into_iter()
                        .map(|(name, params)| Annotation { name, params })
                        .collect(),
                    pattern: PatternClause {
                        bindings,
                        within: within.map(|(amount, unit)| WithinClause { amount, unit }),
                    },
                    select,
                    insert_into,
                }
            },
        )
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 500, ..ProptestConfig::default() })]

    #[test]
    fn printing_then_parsing_reproduces_the_ast(ast in arb_query()) {
        let printed = print_query(&ast);
        let reparsed = parse_query(&printed)
            .unwrap_or_else(|e| panic!("printed query failed to parse: {e}\n---\n{printed}"));
        prop_assert_eq!(&reparsed, &ast);
    }

    #[test]
    fn printed_text_is_a_fixed_point(ast in arb_query()) {
        let once = print_query(&ast);
        let twice = print_query(&parse_query(&once).unwrap());
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn parse_never_panics_on_arbitrary_text(text in "\\PC{0,120}") {
        let _ = parse_query(&text);
    }
}
