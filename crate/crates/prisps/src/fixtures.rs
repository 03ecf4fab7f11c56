//! Built-in demo scenario: Bob's medication-intake pattern, observed over
//! three days on a five-node sensor/fog/cloud topology, protected by a
//! two-rule privacy policy. Every generator here is deterministic so the
//! files it writes can be committed as goldens and byte-compared forever.

use std::collections::BTreeMap;
use std::path::Path;

use prisps_core::access::PrivatePatternSignature;
use prisps_core::adversary::{AdvError, FeatureWindow};
use prisps_core::dp::TaperMode;
use prisps_core::event::{RawRecord, Value};
use prisps_core::placement::{Layer, LinkDef, NodeDef, Topology};
use prisps_core::policy::{EvaluationContext, PrivacyPolicy, StaticRule, Trigger};
use prisps_core::rng::DetRng;
use prisps_core::synth::{generate_synthetic_attributes, SyntheticAttributeSpec};

use crate::formats::{self, FormatError};
use crate::scenario::ScenarioSpec;

/// Canonical text of the demo query: a three-step sequence (swallow, drink,
/// lay down) within two minutes, publishing per-step counts.
pub const BOB_QUERY: &str = "define stream TakeMedicineStr (ts long, cnt_swallow int, cnt_drink int, cnt_layd int);
from every e1=TakeMedicineStr[user_activity == 'swallow']
    -> e2=TakeMedicineStr[user_activity == 'drink']
    -> e3=TakeMedicineStr[user_activity == 'lay down']
within 2 min
select e3.ts, count(e1.user_activity) as cnt_swallow, count(e2.user_activity) as cnt_drink, count(e3.user_activity) as cnt_layd
insert into TakeMedicinePattern;
";

/// Activity log: three days, seven one-minute slots each.
const BOB_DAYS: [[&str; 7]; 3] = [
    ["swallow", "drink", "lay down", "drink", "swallow", "lay down", "walk"],
    ["walk", "swallow", "drink", "lay down", "walk", "lay down", "drink"],
    ["swallow", "drink", "lay down", "walk", "swallow", "drink", "lay down"],
];

/// The protected sequence the policy conceals.
pub fn medicine_signature() -> PrivatePatternSignature {
    PrivatePatternSignature {
        id: "taking-medicine".into(),
        steps: vec!["swallow".into(), "drink".into(), "lay down".into()],
        max_within: 3,
    }
}

/// One event per slot; the count attributes ride along as schema payload.
pub fn bob_events() -> Vec<RawRecord> {
    let mut records = Vec::with_capacity(21);
    for (d, day) in BOB_DAYS.iter().enumerate() {
        for (s, activity) in day.iter().enumerate() {
            let mut attrs = BTreeMap::new();
            attrs.insert("cnt_swallow".to_string(), Value::Int(0));
            attrs.insert("cnt_drink".to_string(), Value::Int(0));
            attrs.insert("cnt_layd".to_string(), Value::Int(0));
            records.push(RawRecord {
                stream: "TakeMedicineStr".into(),
                day: d as i64 + 1,
                slot: s as i64 + 1,
                activity: (*activity).into(),
                attrs,
            });
        }
    }
    records
}

/// Bob conceals the medication pattern entirely (knob 0 ⇒ the strictest
/// budget) and routes any query for it back to his own sink.
pub fn bob_policy() -> PrivacyPolicy {
    PrivacyPolicy {
        user: "Bob".into(),
        static_rules: vec![
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
        dynamic_rules: vec![],
        purpose_statements: vec!["medication adherence monitoring".into()],
    }
}

/// One sensor, two fog nodes, two cloud nodes. Only Bob's own device and the
/// `hub` fog node are trusted. The node id matches the policy's publisher
/// string so a redirected sink resolves onto the topology.
pub fn bob_topology() -> Topology {
    let node = |id: &str, layer, trusted, capacity| NodeDef {
        id: id.into(),
        layer,
        trusted,
        capacity,
    };
    let link = |from: &str, to: &str, latency_ms: f64| LinkDef {
        from: from.into(),
        to: to.into(),
        latency_ms,
    };
    Topology {
        nodes: vec![
            node("Bob", Layer::Sensor, true, 2),
            node("gateway", Layer::Fog, false, 4),
            node("hub", Layer::Fog, true, 4),
            node("cloud_a", Layer::Cloud, false, 8),
            node("cloud_b", Layer::Cloud, false, 8),
        ],
        links: vec![
            link("Bob", "gateway", 2.0),
            link("gateway", "hub", 3.0),
            link("gateway", "cloud_a", 5.0),
            link("hub", "cloud_a", 4.0),
            link("cloud_a", "cloud_b", 1.0),
        ],
        source_node: "Bob".into(),
        consumer_node: "cloud_a".into(),
    }
}

/// Scenario wiring for the files [`write_bob_fixture`] lays out.
pub fn bob_scenario() -> ScenarioSpec {
    ScenarioSpec {
        events: "events.jsonl".into(),
        topology: "topology.json".into(),
        policy: "policy.json".into(),
        queries: vec!["query.txt".into()],
        seed: 42,
        epsilon_sweep: vec![0.1, 1.0, 10.0],
        taper: TaperMode::Table,
        slot_seconds: 60,
        adversary_trials: 10_000,
        pattern_windows: BTreeMap::from([("taking-medicine".to_string(), vec![(1, 4)])]),
        context: EvaluationContext::default(),
        out_dir: None,
    }
}

/// Write the complete demo scenario into `dir`: events.jsonl, query.txt,
/// policy.json, topology.json, and scenario.json.
pub fn write_bob_fixture(dir: &Path) -> Result<(), FormatError> {
    formats::write_file(&dir.join("events.jsonl"), &formats::events_to_jsonl(&bob_events()))?;
    formats::write_file(&dir.join("query.txt"), BOB_QUERY)?;
    formats::write_file(&dir.join("policy.json"), &formats::to_pretty_json(&bob_policy()))?;
    formats::write_file(&dir.join("topology.json"), &formats::to_pretty_json(&bob_topology()))?;
    formats::write_file(&dir.join("scenario.json"), &formats::to_pretty_json(&bob_scenario()))?;
    Ok(())
}

/// Deterministic labeled feature windows for the attribute-inference
/// experiments; same spec and seed, same windows.
pub fn synthetic_windows(
    spec: &SyntheticAttributeSpec,
    seed: u64,
) -> Result<Vec<FeatureWindow>, AdvError> {
    generate_synthetic_attributes(spec, &mut DetRng::new(seed))
}

/// Write a labeled feature-window corpus as features.jsonl.
pub fn write_synthetic_fixture(
    dir: &Path,
    spec: &SyntheticAttributeSpec,
    seed: u64,
) -> Result<(), FormatError> {
    let windows = synthetic_windows(spec, seed).map_err(|e| FormatError::Malformed {
        path: dir.join("features.jsonl"),
        line: 0,
        message: e.to_string(),
    })?;
    formats::write_file(&dir.join("features.jsonl"), &formats::feature_windows_to_jsonl(&windows))
}
