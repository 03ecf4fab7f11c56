//! Access control for pattern queries: detect when a query can observe a
//! private activity sequence, and rewrite, deny, or constrain it before it
//! reaches the engine.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::query::{QueryAst, RESTRICT_ANNOTATION, SINK_ANNOTATION};

/// An activity sequence a user considers private, e.g. the steps of taking
/// medicine. A query is deemed capable of observing the pattern when the
/// steps appear, in order, among the activities its bindings match.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PrivatePatternSignature {
    pub id: String,
    /// Ordered activity labels; meaningful signatures have at least two.
    pub steps: Vec<String>,
    /// Longest slot span in which the sequence still counts as the pattern;
    /// drives the evaluation window when measuring occurrences.
    pub max_within: u32,
}

/// What to do with a query that matches a signature.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    /// Redirect the query's output to the pattern owner's publisher.
    RewriteSink { publisher: String },
    /// Reject the query outright.
    Deny,
    /// Restrict operator placement for this query to the named nodes.
    RestrictNodes { nodes: Vec<String> },
}

impl Action {
    pub fn kind(&self) -> ActionKind {
        match self {
            Action::RewriteSink { .. } => ActionKind::RewriteSink,
            Action::Deny => ActionKind::Deny,
            Action::RestrictNodes { .. } => ActionKind::RestrictNodes,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    RewriteSink,
    Deny,
    RestrictNodes,
}

impl ActionKind {
    pub fn name(self) -> &'static str {
        match self {
            ActionKind::RewriteSink => "rewrite_sink",
            ActionKind::Deny => "deny",
            ActionKind::RestrictNodes => "restrict_nodes",
        }
    }
}

/// Binds an action to a signature. Rules are applied in the order given;
/// for each action kind the first rule whose signature matches wins.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ActionRule {
    pub id: String,
    /// Id of the [`PrivatePatternSignature`] this rule guards.
    pub signature: String,
    pub action: Action,
    /// Id of the policy rule this action was derived from, if any.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub provenance: String,
}

/// One rule application, for the audit trail.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize)]
pub struct AppliedAction {
    pub rule_id: String,
    pub signature_id: String,
    pub action: ActionKind,
}

/// Result of pushing a query through the rule set.
#[derive(Clone, Debug, PartialEq)]
pub enum RewriteOutcome {
    /// The (possibly annotated) query to run, plus the audit log. A query
    /// matching no rule comes back unchanged with an empty log.
    Rewritten { query: QueryAst, log: Vec<AppliedAction> },
    /// The query was rejected; the log names the rule that denied it.
    Denied { log: Vec<AppliedAction> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AccessError {
    /// A rule references a signature id that was not supplied.
    UnknownSignature { rule: String, signature: String },
    /// Two rules would redirect the same matched signature to different
    /// publishers; there is no defensible winner.
    ConflictingRules { signature: String, rule_a: String, rule_b: String },
}

impl fmt::Display for AccessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AccessError::UnknownSignature { rule, signature } => {
                write!(f, "rule '{rule}' references unknown signature '{signature}'")
            }
            AccessError::ConflictingRules { signature, rule_a, rule_b } => write!(
                f,
                "rules '{rule_a}' and '{rule_b}' redirect signature '{signature}' to different publishers"
            ),
        }
    }
}

impl core::error::Error for AccessError {}

/// Ids of the signatures a query can observe, in signature order.
///
/// A signature matches when its steps form an order-preserving subsequence
/// of the query bindings' `user_activity` equality labels (each binding can
/// satisfy at most one step) and the query's `within` bound, converted to
/// slots, leaves room for the sequence (at least one slot advance per step
/// after the first). A query without a `within` clause is unbounded and
/// passes the time check trivially.
pub fn detect_private_pattern_query(
    ast: &QueryAst,
    signatures: &[PrivatePatternSignature],
    slot_seconds: u32,
) -> Vec<String> {
    let binding_labels: Vec<Vec<&str>> = ast
        .pattern
        .bindings
        .iter()
        .map(|b| b.predicate.activity_equalities())
        .collect();
    signatures
        .iter()
        .filter(|sig| {
            if sig.steps.is_empty() {
                return false;
            }
            let span_ok = match &ast.pattern.within {
                None => true,
                Some(w) => w.slots(slot_seconds) as usize >= sig.steps.len() - 1,
            };
            span_ok && is_subsequence(&sig.steps, &binding_labels)
        })
        .map(|sig| sig.id.clone())
        .collect()
}

fn is_subsequence(steps: &[String], binding_labels: &[Vec<&str>]) -> bool {
    let mut next = 0usize;
    for labels in binding_labels {
        if next == steps.len() {
            break;
        }
        if labels.iter().any(|l| *l == steps[next]) {
            next += 1;
        }
    }
    next == steps.len()
}

/// Apply the rule set to a query.
///
/// Matching rules are gathered in order; the first `Deny` rejects the query,
/// otherwise the first `RewriteSink` sets the sink annotation and the first
/// `RestrictNodes` sets the placement-restriction annotation. Annotations are
/// replaced rather than stacked, so rewriting is idempotent.
pub fn rewrite_query(
    ast: &QueryAst,
    rules: &[ActionRule],
    signatures: &[PrivatePatternSignature],
    slot_seconds: u32,
) -> Result<RewriteOutcome, AccessError> {
    for rule in rules {
        if !signatures.iter().any(|s| s.id == rule.signature) {
            return Err(AccessError::UnknownSignature {
                rule: rule.id.clone(),
                signature: rule.signature.clone(),
            });
        }
    }
    let matched = detect_private_pattern_query(ast, signatures, slot_seconds);
    let applicable: Vec<&ActionRule> =
        rules.iter().filter(|r| matched.contains(&r.signature)).collect();

    // surface contradictory sink redirects before acting on anything
    for (i, a) in applicable.iter().enumerate() {
        let Action::RewriteSink { publisher: pa } = &a.action else { continue };
        for b in &applicable[i + 1..] {
            let Action::RewriteSink { publisher: pb } = &b.action else { continue };
            if a.signature == b.signature && pa != pb {
                return Err(AccessError::ConflictingRules {
                    signature: a.signature.clone(),
                    rule_a: a.id.clone(),
                    rule_b: b.id.clone(),
                });
            }
        }
    }

    let entry = |rule: &ActionRule| AppliedAction {
        rule_id: rule.id.clone(),
        signature_id: rule.signature.clone(),
        action: rule.action.kind(),
    };

    if let Some(deny) = applicable.iter().find(|r| r.action == Action::Deny) {
        return Ok(RewriteOutcome::Denied { log: alloc::vec![entry(deny)] });
    }

    let mut query = ast.clone();
    let mut log = Vec::new();
    if let Some(rule) =
        applicable.iter().find(|r| matches!(r.action, Action::RewriteSink { .. }))
    {
        let Action::RewriteSink { publisher } = &rule.action else { unreachable!() };
        query.set_annotation(
            SINK_ANNOTATION,
            alloc::vec![("publisher".into(), publisher.clone())],
        );
        log.push(entry(rule));
    }
    if let Some(rule) =
        applicable.iter().find(|r| matches!(r.action, Action::RestrictNodes { .. }))
    {
        let Action::RestrictNodes { nodes } = &rule.action else { unreachable!() };
        let mut sorted: Vec<String> = nodes.clone();
        sorted.sort();
        sorted.dedup();
        query.set_annotation(
            RESTRICT_ANNOTATION,
            alloc::vec![("nodes".into(), sorted.join(","))],
        );
        log.push(entry(rule));
    }
    Ok(RewriteOutcome::Rewritten { query, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::parse_query;
    use crate::query::print::print_query;

    const MEDICINE_QUERY: &str = "\
define stream TakeMedicineStr (ts long, cnt_swallow int, cnt_drink int, cnt_layd int);
from every e1=TakeMedicineStr[user_activity == 'swallow']
    -> e2=TakeMedicineStr[user_activity == 'drink']
    -> e3=TakeMedicineStr[user_activity == 'lay down']
within 2 min
select e3.ts, count(e1.user_activity) as cnt_swallow, count(e2.user_activity) as cnt_drink, count(e3.user_activity) as cnt_layd
insert into TakeMedicinePattern;
";

    fn medicine_signature() -> PrivatePatternSignature {
        PrivatePatternSignature {
            id: "taking-medicine".into(),
            steps: alloc::vec!["swallow".into(), "drink".into(), "lay down".into()],
            max_within: 3,
        }
    }

    fn sink_rule(id: &str, publisher: &str) -> ActionRule {
        ActionRule {
            id: id.into(),
            signature: "taking-medicine".into(),
            action: Action::RewriteSink { publisher: publisher.into() },
            provenance: String::new(),
        }
    }

    #[test]
    fn detects_ordered_subsequence_within_time_bound() {
        let ast = parse_query(MEDICINE_QUERY).unwrap();
        let sigs = [medicine_signature()];
        assert_eq!(
            detect_private_pattern_query(&ast, &sigs, 60),
            alloc::vec![String::from("taking-medicine")]
        );
    }

    #[test]
    fn order_matters() {
        let ast = parse_query(MEDICINE_QUERY).unwrap();
        let mut sig = medicine_signature();
        sig.steps = alloc::vec!["drink".into(), "swallow".into()];
        assert!(detect_private_pattern_query(&ast, &[sig], 60).is_empty());
    }

    #[test]
    fn signature_longer_than_query_never_matches() {
        let ast = parse_query(MEDICINE_QUERY).unwrap();
        let mut sig = medicine_signature();
        sig.steps.push("walk".into());
        assert!(detect_private_pattern_query(&ast, &[sig], 60).is_empty());
    }

    #[test]
    fn too_tight_within_rules_out_the_pattern() {
        let ast = parse_query(MEDICINE_QUERY).unwrap();
        let sigs = [medicine_signature()];
        // 2 min over 120 s slots is a single slot: a three-step sequence
        // cannot advance twice inside it
        assert!(detect_private_pattern_query(&ast, &sigs, 120).is_empty());
        // over 60 s slots the bound is two slots: enough
        assert_eq!(detect_private_pattern_query(&ast, &sigs, 60).len(), 1);
    }

    #[test]
    fn query_without_within_is_unbounded() {
        let text = MEDICINE_QUERY.replace("within 2 min\n", "");
        let ast = parse_query(&text).unwrap();
        let sigs = [medicine_signature()];
        assert_eq!(detect_private_pattern_query(&ast, &sigs, 3600).len(), 1);
    }

    #[test]
    fn each_binding_satisfies_at_most_one_step() {
        // two bindings cannot cover a three-step signature even though the
        // first binding's labels mention two steps
        let text = "\
define stream S ();
from every e1=S[user_activity == 'swallow' and user_activity == 'drink']
    -> e2=S[user_activity == 'lay down']
select e2.ts
insert into Out;
";
        let ast = parse_query(text).unwrap();
        assert!(detect_private_pattern_query(&ast, &[medicine_signature()], 60).is_empty());
    }

    #[test]
    fn rewrite_sets_sink_annotation_and_is_idempotent() {
        let ast = parse_query(MEDICINE_QUERY).unwrap();
        let sigs = [medicine_signature()];
        let rules = [sink_rule("r1", "Bob")];
        let RewriteOutcome::Rewritten { query, log } =
            rewrite_query(&ast, &rules, &sigs, 60).unwrap()
        else {
            panic!("expected rewrite");
        };
        let printed = print_query(&query);
        assert!(printed.contains("@sink(publisher='Bob')"), "{printed}");
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].action, ActionKind::RewriteSink);
        // applying the rules again changes nothing
        let RewriteOutcome::Rewritten { query: again, .. } =
            rewrite_query(&query, &rules, &sigs, 60).unwrap()
        else {
            panic!("expected rewrite");
        };
        assert_eq!(print_query(&again), printed);
    }

    #[test]
    fn rewrite_preserves_every_other_clause() {
        let ast = parse_query(MEDICINE_QUERY).unwrap();
        let before = print_query(&ast);
        let sigs = [medicine_signature()];
        let RewriteOutcome::Rewritten { query, .. } =
            rewrite_query(&ast, &[sink_rule("r1", "Bob")], &sigs, 60).unwrap()
        else {
            panic!("expected rewrite");
        };
        let after = print_query(&query);
        let without_annotation: String = after
            .lines()
            .filter(|l| !l.starts_with('@'))
            .map(|l| alloc::format!("{l}\n"))
            .collect();
        assert_eq!(without_annotation, before);
    }

    #[test]
    fn deny_wins_over_rewrites() {
        let ast = parse_query(MEDICINE_QUERY).unwrap();
        let sigs = [medicine_signature()];
        let rules = [
            sink_rule("r1", "Bob"),
            ActionRule {
                id: "r2".into(),
                signature: "taking-medicine".into(),
                action: Action::Deny,
                provenance: String::new(),
            },
        ];
        let outcome = rewrite_query(&ast, &rules, &sigs, 60).unwrap();
        let RewriteOutcome::Denied { log } = outcome else {
            panic!("expected denial");
        };
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].rule_id, "r2");
    }

    #[test]
    fn restrict_nodes_annotation_is_sorted_and_deduped() {
        let ast = parse_query(MEDICINE_QUERY).unwrap();
        let sigs = [medicine_signature()];
        let rules = [ActionRule {
            id: "r1".into(),
            signature: "taking-medicine".into(),
            action: Action::RestrictNodes {
                nodes: alloc::vec!["fog_b".into(), "fog_a".into(), "fog_b".into()],
            },
            provenance: String::new(),
        }];
        let RewriteOutcome::Rewritten { query, .. } =
            rewrite_query(&ast, &rules, &sigs, 60).unwrap()
        else {
            panic!("expected rewrite");
        };
        let ann = query.annotation(RESTRICT_ANNOTATION).unwrap();
        assert_eq!(ann.param("nodes"), Some("fog_a,fog_b"));
    }

    #[test]
    fn first_matching_rule_of_each_kind_wins() {
        let ast = parse_query(MEDICINE_QUERY).unwrap();
        let mut second = medicine_signature();
        second.id = "medicine-alt".into();
        let sigs = [medicine_signature(), second];
        let mut other = sink_rule("r2", "Carol");
        other.signature = "medicine-alt".into();
        let rules = [sink_rule("r1", "Bob"), other];
        let RewriteOutcome::Rewritten { query, log } =
            rewrite_query(&ast, &rules, &sigs, 60).unwrap()
        else {
            panic!("expected rewrite");
        };
        assert_eq!(
            query.annotation(SINK_ANNOTATION).unwrap().param("publisher"),
            Some("Bob")
        );
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].rule_id, "r1");
    }

    #[test]
    fn conflicting_publishers_on_one_signature_error() {
        let ast = parse_query(MEDICINE_QUERY).unwrap();
        let sigs = [medicine_signature()];
        let rules = [sink_rule("r1", "Bob"), sink_rule("r2", "Carol")];
        assert_eq!(
            rewrite_query(&ast, &rules, &sigs, 60),
            Err(AccessError::ConflictingRules {
                signature: "taking-medicine".into(),
                rule_a: "r1".into(),
                rule_b: "r2".into(),
            })
        );
        // same publisher twice is merely redundant
        let rules = [sink_rule("r1", "Bob"), sink_rule("r2", "Bob")];
        assert!(rewrite_query(&ast, &rules, &sigs, 60).is_ok());
    }

    #[test]
    fn dangling_signature_reference_errors() {
        let ast = parse_query(MEDICINE_QUERY).unwrap();
        let rules = [sink_rule("r1", "Bob")];
        assert_eq!(
            rewrite_query(&ast, &rules, &[], 60),
            Err(AccessError::UnknownSignature {
                rule: "r1".into(),
                signature: "taking-medicine".into(),
            })
        );
    }

    #[test]
    fn unmatched_query_passes_through_unchanged() {
        let text = "\
define stream S ();
from every e1=S[user_activity == 'walk']
select e1.ts
insert into Out;
";
        let ast = parse_query(text).unwrap();
        let sigs = [medicine_signature()];
        let rules = [sink_rule("r1", "Bob")];
        let RewriteOutcome::Rewritten { query, log } =
            rewrite_query(&ast, &rules, &sigs, 60).unwrap()
        else {
            panic!("expected rewrite");
        };
        assert!(log.is_empty());
        assert_eq!(print_query(&query), print_query(&ast));
    }
}
