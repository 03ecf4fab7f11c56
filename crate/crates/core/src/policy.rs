//! User privacy policies and their translation into concrete mechanism
//! configurations.
//!
//! A policy is a set of static protection rules — conceal an attribute,
//! protect an activity sequence, restrict who may subscribe to a pattern,
//! restrict which nodes are trusted — plus dynamic rules that override a
//! static rule while a context condition holds (location, time of day,
//! present peers). Each rule carries a privacy–utility knob in [0, 1] that
//! maps linearly onto the studied ε range: 0 buys the most privacy, 1 the
//! most utility.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::access::{Action, ActionRule, PrivatePatternSignature};
use crate::dp::{ScheduleConfig, TaperMode};

/// What a static rule protects.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Trigger {
    /// Hide one feature-vector attribute from downstream consumers.
    ConcealAttribute { attribute: String },
    /// Sanitize counts of this activity sequence before release.
    ProtectPattern { signature: PrivatePatternSignature },
    /// Route results of queries observing this pattern to one publisher.
    RestrictSink { pattern: String, publisher: String },
    /// Only these nodes may host operators over the user's data.
    TrustNodes { nodes: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StaticRule {
    pub id: String,
    pub trigger: Trigger,
    /// Privacy–utility preference: 0 = strongest protection, 1 = most
    /// utility. Missing values default to 0.
    #[serde(default)]
    pub put_knob: f64,
}

/// Conjunction of optional context conditions; an empty predicate always
/// holds. A condition on a field the evaluation context does not provide
/// cannot be verified and therefore does not hold.
#[derive(Clone, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ContextPredicate {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<String>,
    /// Inclusive 1-based slot range within the day.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot_range: Option<(u32, u32)>,
    /// Someone who must be present, e.g. a visitor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peer: Option<String>,
}

impl ContextPredicate {
    pub fn satisfied(&self, ctx: &EvaluationContext) -> bool {
        let location_ok = match &self.location {
            None => true,
            Some(want) => ctx.location.as_deref() == Some(want.as_str()),
        };
        let slot_ok = match self.slot_range {
            None => true,
            Some((lo, hi)) => ctx.slot.is_some_and(|s| s >= lo && s <= hi),
        };
        let peer_ok = match &self.peer {
            None => true,
            Some(want) => ctx.peers.iter().any(|p| p == want),
        };
        location_ok && slot_ok && peer_ok
    }
}

/// The situation a policy is evaluated in.
#[derive(Clone, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EvaluationContext {
    #[serde(default)]
    pub location: Option<String>,
    #[serde(default)]
    pub slot: Option<u32>,
    #[serde(default)]
    pub peers: Vec<String>,
}

/// What a dynamic rule does to its static rule while the context holds.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Replacement {
    /// Drop the static rule entirely.
    Suspend,
    /// Swap in a different trigger and knob, keeping the rule's identity.
    Replace {
        trigger: Trigger,
        #[serde(default)]
        put_knob: f64,
    },
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DynamicRule {
    pub id: String,
    /// Id of the static rule this one overrides.
    pub overrides: String,
    pub context: ContextPredicate,
    pub replacement: Replacement,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PrivacyPolicy {
    pub user: String,
    pub static_rules: Vec<StaticRule>,
    #[serde(default)]
    pub dynamic_rules: Vec<DynamicRule>,
    /// Human-readable reasons the data is processed at all; consumers can
    /// show these to the user.
    #[serde(default)]
    pub purpose_statements: Vec<String>,
}

/// Deployment facts a policy is checked and instantiated against.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioKnobs {
    /// Relevance windows (inclusive 1-based slot ranges) per protected
    /// pattern id: when during the day the pattern can occur.
    pub pattern_windows: BTreeMap<String, Vec<(u32, u32)>>,
    /// ε endpoints the knob interpolates between.
    pub eps_range: (f64, f64),
    /// Node ids present in the topology; empty disables node validation.
    pub known_nodes: BTreeSet<String>,
    /// Feature attributes present in the data; empty disables validation.
    pub known_attributes: BTreeSet<String>,
    pub taper_mode: TaperMode,
    pub sensitivity: f64,
    pub n_days: u32,
    /// Whether a feature obfuscator backs ConcealAttribute rules.
    pub obfuscator_enabled: bool,
}

impl Default for ScenarioKnobs {
    fn default() -> Self {
        ScenarioKnobs {
            pattern_windows: BTreeMap::new(),
            eps_range: (0.1, 10.0),
            known_nodes: BTreeSet::new(),
            known_attributes: BTreeSet::new(),
            taper_mode: TaperMode::Table,
            sensitivity: 1.0,
            n_days: 1,
            obfuscator_enabled: false,
        }
    }
}

/// Map a knob position onto the ε range; out-of-range knobs are clamped.
pub fn knob_epsilon(knob: f64, eps_range: (f64, f64)) -> f64 {
    let k = knob.clamp(0.0, 1.0);
    let k = if k.is_nan() { 0.0 } else { k };
    eps_range.0 + k * (eps_range.1 - eps_range.0)
}

/// Everything the mechanisms need, derived from one user's effective rules.
#[derive(Clone, Debug, PartialEq)]
pub struct PpmCustomization {
    pub signatures: Vec<PrivatePatternSignature>,
    /// Merged relevance windows across all protected patterns.
    pub relevance_intervals: Vec<(u32, u32)>,
    /// Sanitizer configuration; present iff some pattern is protected.
    pub schedule: Option<ScheduleConfig>,
    /// Per-window ε chosen by the most protective knob; present iff some
    /// pattern is protected.
    pub epsilon: Option<f64>,
    pub action_rules: Vec<ActionRule>,
    /// Present iff the policy names trusted nodes.
    pub trusted_nodes: Option<BTreeSet<String>>,
    pub concealed_attributes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PolicyError {
    UnknownNode(String),
    UnknownPattern(String),
}

impl fmt::Display for PolicyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyError::UnknownNode(n) => write!(f, "policy names unknown node '{n}'"),
            PolicyError::UnknownPattern(p) => {
                write!(f, "policy references pattern '{p}' with no known definition")
            }
        }
    }
}

impl core::error::Error for PolicyError {}

/// Resolve dynamic overrides against a context: for each static rule the
/// first dynamic rule (in declaration order) that targets it and whose
/// context holds wins — suspension drops the rule, replacement swaps its
/// trigger and knob while keeping its id.
pub fn evaluate_policy(policy: &PrivacyPolicy, ctx: &EvaluationContext) -> Vec<StaticRule> {
    policy
        .static_rules
        .iter()
        .filter_map(|rule| {
            let active = policy
                .dynamic_rules
                .iter()
                .find(|d| d.overrides == rule.id && d.context.satisfied(ctx));
            match active {
                None => Some(rule.clone()),
                Some(d) => match &d.replacement {
                    Replacement::Suspend => None,
                    Replacement::Replace { trigger, put_knob } => Some(StaticRule {
                        id: rule.id.clone(),
                        trigger: trigger.clone(),
                        put_knob: *put_knob,
                    }),
                },
            }
        })
        .collect()
}

/// Instantiate effective rules into mechanism configurations.
pub fn derive_ppm_config(
    effective: &[StaticRule],
    knobs: &ScenarioKnobs,
) -> Result<PpmCustomization, PolicyError> {
    let mut signatures: Vec<PrivatePatternSignature> = Vec::new();
    let mut epsilon: Option<f64> = None;
    let mut intervals: Vec<(u32, u32)> = Vec::new();

    // protected patterns first: sink restrictions below refer to them
    for rule in effective {
        let Trigger::ProtectPattern { signature } = &rule.trigger else { continue };
        let windows = knobs
            .pattern_windows
            .get(&signature.id)
            .ok_or_else(|| PolicyError::UnknownPattern(signature.id.clone()))?;
        intervals.extend_from_slice(windows);
        let eps = knob_epsilon(rule.put_knob, knobs.eps_range);
        epsilon = Some(match epsilon {
            None => eps,
            Some(cur) => cur.min(eps),
        });
        if !signatures.iter().any(|s| s.id == signature.id) {
            signatures.push(signature.clone());
        }
    }
    let relevance_intervals = merge_intervals(intervals);

    let mut action_rules = Vec::new();
    let mut trusted: Option<BTreeSet<String>> = None;
    let mut concealed: Vec<String> = Vec::new();
    for rule in effective {
        match &rule.trigger {
            Trigger::ProtectPattern { .. } => {}
            Trigger::RestrictSink { pattern, publisher } => {
                if !signatures.iter().any(|s| s.id == *pattern) {
                    return Err(PolicyError::UnknownPattern(pattern.clone()));
                }
                action_rules.push(ActionRule {
                    id: alloc::format!("{}-action", rule.id),
                    signature: pattern.clone(),
                    action: Action::RewriteSink { publisher: publisher.clone() },
                    provenance: rule.id.clone(),
                });
            }
            Trigger::TrustNodes { nodes } => {
                let set = trusted.get_or_insert_with(BTreeSet::new);
                for node in nodes {
                    if !knobs.known_nodes.is_empty() && !knobs.known_nodes.contains(node) {
                        return Err(PolicyError::UnknownNode(node.clone()));
                    }
                    set.insert(node.clone());
                }
            }
            Trigger::ConcealAttribute { attribute } => {
                concealed.push(attribute.clone());
            }
        }
    }
    concealed.sort();
    concealed.dedup();

    let schedule = epsilon.map(|eps| ScheduleConfig {
        epsilon: eps,
        w: signatures.iter().map(|s| s.steps.len() as u32).max().unwrap_or(1).max(1),
        sensitivity: knobs.sensitivity,
        relevance_intervals: relevance_intervals.clone(),
        n_days: knobs.n_days,
        taper_mode: knobs.taper_mode,
    });

    Ok(PpmCustomization {
        signatures,
        relevance_intervals,
        schedule,
        epsilon,
        action_rules,
        trusted_nodes: trusted,
        concealed_attributes: concealed,
    })
}

/// Sort windows and merge the ones that truly overlap; adjacent windows are
/// kept apart so the budget allocator can still taper between them.
fn merge_intervals(mut intervals: Vec<(u32, u32)>) -> Vec<(u32, u32)> {
    intervals.sort();
    let mut merged: Vec<(u32, u32)> = Vec::with_capacity(intervals.len());
    for (start, end) in intervals {
        match merged.last_mut() {
            Some(last) if start <= last.1 => last.1 = last.1.max(end),
            _ => merged.push((start, end)),
        }
    }
    merged
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    /// The policy cannot be deployed as written.
    Error,
    /// Deployable, but the user should know about a gap.
    Advisory,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticCode {
    DuplicateRuleId,
    DanglingOverride,
    KnobOutOfRange,
    InvalidSignature,
    InvalidContextPredicate,
    UnknownPattern,
    UnknownNode,
    UnknownAttribute,
    /// Concealing an attribute without an obfuscator leaves it inferable
    /// from the remaining features.
    InferenceStillFeasible,
    MissingPurposeStatement,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: DiagnosticCode,
    pub rule_id: Option<String>,
    pub message: String,
}

impl Diagnostic {
    fn error(code: DiagnosticCode, rule_id: Option<&str>, message: String) -> Self {
        Diagnostic {
            severity: Severity::Error,
            code,
            rule_id: rule_id.map(String::from),
            message,
        }
    }

    fn advisory(code: DiagnosticCode, rule_id: Option<&str>, message: String) -> Self {
        Diagnostic {
            severity: Severity::Advisory,
            code,
            rule_id: rule_id.map(String::from),
            message,
        }
    }
}

fn knob_diagnostic(knob: f64, rule_id: &str, out: &mut Vec<Diagnostic>) {
    if !(0.0..=1.0).contains(&knob) || knob.is_nan() {
        out.push(Diagnostic::error(
            DiagnosticCode::KnobOutOfRange,
            Some(rule_id),
            alloc::format!("put_knob {knob} is outside [0, 1]"),
        ));
    }
}

/// Check a policy against the deployment without instantiating it. Errors
/// block deployment; advisories flag protection gaps worth surfacing.
pub fn validate_policy(policy: &PrivacyPolicy, knobs: &ScenarioKnobs) -> Vec<Diagnostic> {
    let mut out = Vec::new();

    let mut seen: BTreeSet<&str> = BTreeSet::new();
    for id in policy
        .static_rules
        .iter()
        .map(|r| r.id.as_str())
        .chain(policy.dynamic_rules.iter().map(|r| r.id.as_str()))
    {
        if !seen.insert(id) {
            out.push(Diagnostic::error(
                DiagnosticCode::DuplicateRuleId,
                Some(id),
                alloc::format!("rule id '{id}' is declared more than once"),
            ));
        }
    }

    let mut protected: BTreeSet<&str> = BTreeSet::new();
    for rule in &policy.static_rules {
        if let Trigger::ProtectPattern { signature } = &rule.trigger {
            protected.insert(signature.id.as_str());
        }
    }

    let check_trigger = |trigger: &Trigger, rule_id: &str, out: &mut Vec<Diagnostic>| {
        match trigger {
            Trigger::ProtectPattern { signature } => {
                if signature.steps.len() < 2 || signature.steps.iter().any(String::is_empty) {
                    out.push(Diagnostic::error(
                        DiagnosticCode::InvalidSignature,
                        Some(rule_id),
                        alloc::format!(
                            "signature '{}' needs at least two non-empty steps",
                            signature.id
                        ),
                    ));
                } else if (signature.max_within as usize) < signature.steps.len() - 1 {
                    out.push(Diagnostic::error(
                        DiagnosticCode::InvalidSignature,
                        Some(rule_id),
                        alloc::format!(
                            "signature '{}' can never occur within {} slots",
                            signature.id, signature.max_within
                        ),
                    ));
                }
                if !knobs.pattern_windows.contains_key(&signature.id) {
                    out.push(Diagnostic::error(
                        DiagnosticCode::UnknownPattern,
                        Some(rule_id),
                        alloc::format!(
                            "no relevance windows configured for pattern '{}'",
                            signature.id
                        ),
                    ));
                }
            }
            Trigger::RestrictSink { pattern, .. } => {
                if !protected.contains(pattern.as_str()) {
                    out.push(Diagnostic::error(
                        DiagnosticCode::UnknownPattern,
                        Some(rule_id),
                        alloc::format!(
                            "sink restriction references pattern '{pattern}' that no rule protects"
                        ),
                    ));
                }
            }
            Trigger::TrustNodes { nodes } => {
                for node in nodes {
                    if !knobs.known_nodes.is_empty() && !knobs.known_nodes.contains(node) {
                        out.push(Diagnostic::error(
                            DiagnosticCode::UnknownNode,
                            Some(rule_id),
                            alloc::format!("trusted node '{node}' is not in the topology"),
                        ));
                    }
                }
            }
            Trigger::ConcealAttribute { attribute } => {
                if !knobs.known_attributes.is_empty()
                    && !knobs.known_attributes.contains(attribute)
                {
                    out.push(Diagnostic::error(
                        DiagnosticCode::UnknownAttribute,
                        Some(rule_id),
                        alloc::format!("concealed attribute '{attribute}' is not in the data"),
                    ));
                }
                if !knobs.obfuscator_enabled {
                    out.push(Diagnostic::advisory(
                        DiagnosticCode::InferenceStillFeasible,
                        Some(rule_id),
                        alloc::format!(
                            "'{attribute}' is concealed but no obfuscator runs; it remains inferable from correlated features"
                        ),
                    ));
                }
            }
        }
    };

    for rule in &policy.static_rules {
        knob_diagnostic(rule.put_knob, &rule.id, &mut out);
        check_trigger(&rule.trigger, &rule.id, &mut out);
    }

    for dynamic in &policy.dynamic_rules {
        if !policy.static_rules.iter().any(|r| r.id == dynamic.overrides) {
            out.push(Diagnostic::error(
                DiagnosticCode::DanglingOverride,
                Some(&dynamic.id),
                alloc::format!("override target '{}' does not exist", dynamic.overrides),
            ));
        }
        if let Some((lo, hi)) = dynamic.context.slot_range {
            if lo < 1 || hi < lo {
                out.push(Diagnostic::error(
                    DiagnosticCode::InvalidContextPredicate,
                    Some(&dynamic.id),
                    alloc::format!("slot range [{lo}, {hi}] is empty or not 1-based"),
                ));
            }
        }
        if let Replacement::Replace { trigger, put_knob } = &dynamic.replacement {
            knob_diagnostic(*put_knob, &dynamic.id, &mut out);
            check_trigger(trigger, &dynamic.id, &mut out);
        }
    }

    if policy.purpose_statements.is_empty() {
        out.push(Diagnostic::advisory(
            DiagnosticCode::MissingPurposeStatement,
            None,
            "policy states no purpose for processing the data".into(),
        ));
    }

    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn medicine_signature() -> PrivatePatternSignature {
        PrivatePatternSignature {
            id: "taking-medicine".into(),
            steps: alloc::vec!["swallow".into(), "drink".into(), "lay down".into()],
            max_within: 3,
        }
    }

    fn bob_policy() -> PrivacyPolicy {
        PrivacyPolicy {
            user: "Bob".into(),
            static_rules: alloc::vec![
                StaticRule {
                    id: "protect-medicine".into(),
                    trigger: Trigger::ProtectPattern { signature: medicine_signature() },
                    put_knob: 0.0,
                },
                StaticRule {
                    id: "medicine-to-bob".into(),
                    trigger: Trigger::RestrictSink {
                        pattern: "taking-medicine".into(),
                        publisher: "Bob".into(),
                    },
                    put_knob: 0.0,
                },
            ],
            dynamic_rules: alloc::vec![],
            purpose_statements: alloc::vec!["medication adherence monitoring".into()],
        }
    }

    fn bob_knobs() -> ScenarioKnobs {
        let mut knobs = ScenarioKnobs::default();
        knobs
            .pattern_windows
            .insert("taking-medicine".into(), alloc::vec![(1, 4)]);
        knobs.n_days = 3;
        knobs
    }

    #[test]
    fn knob_maps_linearly_onto_the_eps_range() {
        assert_eq!(knob_epsilon(0.0, (0.1, 10.0)), 0.1);
        assert_eq!(knob_epsilon(1.0, (0.1, 10.0)), 10.0);
        assert!((knob_epsilon(0.5, (0.1, 10.0)) - 5.05).abs() < 1e-12);
        // clamped
        assert_eq!(knob_epsilon(-3.0, (0.1, 10.0)), 0.1);
        assert_eq!(knob_epsilon(7.0, (0.1, 10.0)), 10.0);
    }

    #[test]
    fn derive_builds_schedule_and_sink_action() {
        let effective = evaluate_policy(&bob_policy(), &EvaluationContext::default());
        let cfg = derive_ppm_config(&effective, &bob_knobs()).unwrap();
        assert_eq!(cfg.signatures.len(), 1);
        assert_eq!(cfg.epsilon, Some(0.1));
        assert_eq!(cfg.relevance_intervals, alloc::vec![(1, 4)]);
        let schedule = cfg.schedule.unwrap();
        assert_eq!(schedule.w, 3);
        assert_eq!(schedule.n_days, 3);
        assert_eq!(cfg.action_rules.len(), 1);
        let action = &cfg.action_rules[0];
        assert_eq!(action.id, "medicine-to-bob-action");
        assert_eq!(action.provenance, "medicine-to-bob");
        assert_eq!(
            action.action,
            Action::RewriteSink { publisher: "Bob".into() }
        );
        assert_eq!(cfg.trusted_nodes, None);
        assert!(cfg.concealed_attributes.is_empty());
    }

    #[test]
    fn most_protective_knob_wins() {
        let mut policy = bob_policy();
        let mut second = medicine_signature();
        second.id = "medicine-evening".into();
        policy.static_rules.push(StaticRule {
            id: "protect-evening".into(),
            trigger: Trigger::ProtectPattern { signature: second },
            put_knob: 1.0,
        });
        let mut knobs = bob_knobs();
        knobs
            .pattern_windows
            .insert("medicine-evening".into(), alloc::vec![(6, 7)]);
        let cfg =
            derive_ppm_config(&evaluate_policy(&policy, &EvaluationContext::default()), &knobs)
                .unwrap();
        assert_eq!(cfg.epsilon, Some(0.1));
        assert_eq!(cfg.relevance_intervals, alloc::vec![(1, 4), (6, 7)]);
    }

    #[test]
    fn overlapping_windows_merge_adjacent_stay_apart() {
        assert_eq!(
            merge_intervals(alloc::vec![(3, 6), (1, 4)]),
            alloc::vec![(1, 6)]
        );
        assert_eq!(
            merge_intervals(alloc::vec![(1, 2), (3, 4)]),
            alloc::vec![(1, 2), (3, 4)]
        );
        assert_eq!(
            merge_intervals(alloc::vec![(1, 10), (2, 3), (4, 12)]),
            alloc::vec![(1, 12)]
        );
    }

    #[test]
    fn missing_pattern_windows_is_an_error() {
        let effective = evaluate_policy(&bob_policy(), &EvaluationContext::default());
        let err = derive_ppm_config(&effective, &ScenarioKnobs::default()).unwrap_err();
        assert_eq!(err, PolicyError::UnknownPattern("taking-medicine".into()));
    }

    #[test]
    fn sink_restriction_needs_a_protected_pattern() {
        let mut policy = bob_policy();
        policy.static_rules.remove(0);
        let effective = evaluate_policy(&policy, &EvaluationContext::default());
        assert_eq!(
            derive_ppm_config(&effective, &bob_knobs()).unwrap_err(),
            PolicyError::UnknownPattern("taking-medicine".into())
        );
    }

    #[test]
    fn trusted_nodes_validated_against_topology() {
        let mut policy = bob_policy();
        policy.static_rules.push(StaticRule {
            id: "trusted".into(),
            trigger: Trigger::TrustNodes {
                nodes: alloc::vec!["fog_a".into(), "basement".into()],
            },
            put_knob: 0.0,
        });
        let mut knobs = bob_knobs();
        knobs.known_nodes = ["fog_a", "cloud_a"].iter().map(|s| String::from(*s)).collect();
        let effective = evaluate_policy(&policy, &EvaluationContext::default());
        assert_eq!(
            derive_ppm_config(&effective, &knobs).unwrap_err(),
            PolicyError::UnknownNode("basement".into())
        );
        // with validation disabled (no known nodes) the set passes through
        let open = derive_ppm_config(&effective, &bob_knobs()).unwrap();
        assert_eq!(
            open.trusted_nodes.unwrap().into_iter().collect::<Vec<_>>(),
            alloc::vec![String::from("basement"), String::from("fog_a")]
        );
    }

    #[test]
    fn suspension_drops_the_rule_while_context_holds() {
        let mut policy = bob_policy();
        policy.dynamic_rules.push(DynamicRule {
            id: "visitor-pause".into(),
            overrides: "protect-medicine".into(),
            context: ContextPredicate {
                peer: Some("nurse".into()),
                ..ContextPredicate::default()
            },
            replacement: Replacement::Suspend,
        });
        let quiet = evaluate_policy(&policy, &EvaluationContext::default());
        assert_eq!(quiet.len(), 2);
        let ctx = EvaluationContext {
            peers: alloc::vec!["nurse".into()],
            ..EvaluationContext::default()
        };
        let with_nurse = evaluate_policy(&policy, &ctx);
        assert_eq!(with_nurse.len(), 1);
        assert_eq!(with_nurse[0].id, "medicine-to-bob");
    }

    #[test]
    fn replacement_swaps_trigger_but_keeps_identity() {
        let mut policy = bob_policy();
        policy.dynamic_rules.push(DynamicRule {
            id: "daytime-relax".into(),
            overrides: "protect-medicine".into(),
            context: ContextPredicate {
                slot_range: Some((2, 5)),
                ..ContextPredicate::default()
            },
            replacement: Replacement::Replace {
                trigger: Trigger::ProtectPattern { signature: medicine_signature() },
                put_knob: 1.0,
            },
        });
        let ctx = EvaluationContext { slot: Some(3), ..EvaluationContext::default() };
        let effective = evaluate_policy(&policy, &ctx);
        let replaced = effective.iter().find(|r| r.id == "protect-medicine").unwrap();
        assert_eq!(replaced.put_knob, 1.0);
        // outside the slot range the original knob applies
        let ctx = EvaluationContext { slot: Some(7), ..EvaluationContext::default() };
        let effective = evaluate_policy(&policy, &ctx);
        assert_eq!(
            effective.iter().find(|r| r.id == "protect-medicine").unwrap().put_knob,
            0.0
        );
    }

    #[test]
    fn first_satisfied_override_wins() {
        let mut policy = bob_policy();
        for (id, knob) in [("first", 0.25), ("second", 0.75)] {
            policy.dynamic_rules.push(DynamicRule {
                id: id.into(),
                overrides: "protect-medicine".into(),
                context: ContextPredicate::default(),
                replacement: Replacement::Replace {
                    trigger: Trigger::ProtectPattern { signature: medicine_signature() },
                    put_knob: knob,
                },
            });
        }
        let effective = evaluate_policy(&policy, &EvaluationContext::default());
        assert_eq!(
            effective.iter().find(|r| r.id == "protect-medicine").unwrap().put_knob,
            0.25
        );
    }

    #[test]
    fn predicate_on_absent_context_field_does_not_hold() {
        let pred = ContextPredicate {
            location: Some("home".into()),
            ..ContextPredicate::default()
        };
        assert!(!pred.satisfied(&EvaluationContext::default()));
        let ctx = EvaluationContext {
            location: Some("home".into()),
            ..EvaluationContext::default()
        };
        assert!(pred.satisfied(&ctx));
        assert!(ContextPredicate::default().satisfied(&EvaluationContext::default()));
    }

    #[test]
    fn clean_policy_validates_without_errors() {
        let diags = validate_policy(&bob_policy(), &bob_knobs());
        assert!(
            diags.iter().all(|d| d.severity != Severity::Error),
            "{diags:?}"
        );
    }

    #[test]
    fn validation_flags_structural_problems() {
        let mut policy = bob_policy();
        policy.static_rules.push(StaticRule {
            id: "protect-medicine".into(), // duplicate
            trigger: Trigger::ProtectPattern {
                signature: PrivatePatternSignature {
                    id: "solo".into(),
                    steps: alloc::vec!["walk".into()], // too short
                    max_within: 0,
                },
            },
            put_knob: 1.5, // out of range
        });
        policy.dynamic_rules.push(DynamicRule {
            id: "dangling".into(),
            overrides: "no-such-rule".into(),
            context: ContextPredicate {
                slot_range: Some((5, 2)), // empty range
                ..ContextPredicate::default()
            },
            replacement: Replacement::Suspend,
        });
        policy.purpose_statements.clear();
        let diags = validate_policy(&policy, &bob_knobs());
        let codes: Vec<DiagnosticCode> = diags.iter().map(|d| d.code).collect();
        for expected in [
            DiagnosticCode::DuplicateRuleId,
            DiagnosticCode::KnobOutOfRange,
            DiagnosticCode::InvalidSignature,
            DiagnosticCode::UnknownPattern, // 'solo' has no windows
            DiagnosticCode::DanglingOverride,
            DiagnosticCode::InvalidContextPredicate,
            DiagnosticCode::MissingPurposeStatement,
        ] {
            assert!(codes.contains(&expected), "missing {expected:?} in {codes:?}");
        }
    }

    #[test]
    fn concealment_without_obfuscator_warns_about_inference() {
        let mut policy = bob_policy();
        policy.static_rules.push(StaticRule {
            id: "hide-group".into(),
            trigger: Trigger::ConcealAttribute { attribute: "group".into() },
            put_knob: 0.0,
        });
        let knobs = bob_knobs();
        let diags = validate_policy(&policy, &knobs);
        assert!(diags
            .iter()
            .any(|d| d.code == DiagnosticCode::InferenceStillFeasible
                && d.severity == Severity::Advisory));
        let mut with_obf = knobs.clone();
        with_obf.obfuscator_enabled = true;
        let diags = validate_policy(&policy, &with_obf);
        assert!(!diags.iter().any(|d| d.code == DiagnosticCode::InferenceStillFeasible));
        // unknown attribute is an error once the attribute set is known
        let mut strict = with_obf;
        strict.known_attributes.insert("age".into());
        let diags = validate_policy(&policy, &strict);
        assert!(diags
            .iter()
            .any(|d| d.code == DiagnosticCode::UnknownAttribute
                && d.severity == Severity::Error));
    }

    #[test]
    fn policy_round_trips_through_json() {
        let mut policy = bob_policy();
        policy.dynamic_rules.push(DynamicRule {
            id: "visitor-pause".into(),
            overrides: "protect-medicine".into(),
            context: ContextPredicate {
                peer: Some("nurse".into()),
                ..ContextPredicate::default()
            },
            replacement: Replacement::Suspend,
        });
        let json = serde_json::to_string_pretty(&policy).unwrap();
        let back: PrivacyPolicy = serde_json::from_str(&json).unwrap();
        assert_eq!(back, policy);
    }
}
