//! The end-to-end pipeline: evaluate the policy, rewrite the queries, place
//! operators, count pattern completions, sanitize the counts over an ε sweep,
//! and score every mechanism configuration against the honest-but-curious
//! adversary. One run is a pure function of the scenario files and the seed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use prisps_core::access::{ActionKind, AppliedAction, RewriteOutcome};
use prisps_core::adversary::{
    compute_put, detect_pattern_from_sanitized, select_ppm, AdvError, Criteria, PpmCandidate,
    PutReport, ScenarioResults, Threat,
};
use prisps_core::cep::{count_pattern_completions, pattern_of_query, CountSeries};
use prisps_core::dp::{allocate_budget, sanitize, NoiseSchedule, TaperMode};
use prisps_core::event::{ingest_events, RawRecord};
use prisps_core::placement::{
    build_operator_graph, place_operators, Placement, PlacementError, Topology,
};
use prisps_core::policy::{
    derive_ppm_config, evaluate_policy, validate_policy, EvaluationContext, PrivacyPolicy,
    ScenarioKnobs, Severity,
};
use prisps_core::query::{parse_query, print_query, QueryAst};
use prisps_core::rng::{epsilon_label, DetRng};

use crate::formats::{
    self, FormatError, MetricsRow, PlacementFile, PutReportFile, RankingFile,
};

/// A scenario file: inputs, seed, and sweep configuration. Paths are resolved
/// relative to the scenario file's directory.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub events: PathBuf,
    pub topology: PathBuf,
    pub policy: PathBuf,
    pub queries: Vec<PathBuf>,
    /// Mandatory: runs never seed from the clock.
    pub seed: u64,
    #[serde(default)]
    pub epsilon_sweep: Vec<f64>,
    #[serde(default = "default_taper")]
    pub taper: TaperMode,
    #[serde(default = "default_slot_seconds")]
    pub slot_seconds: u32,
    #[serde(default = "default_trials")]
    pub adversary_trials: u32,
    /// Relevance windows per protected pattern id.
    #[serde(default)]
    pub pattern_windows: BTreeMap<String, Vec<(u32, u32)>>,
    /// Context the dynamic policy rules are evaluated in.
    #[serde(default)]
    pub context: EvaluationContext,
    /// Default output directory; the CLI flag overrides it.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn default_taper() -> TaperMode {
    TaperMode::Table
}

fn default_slot_seconds() -> u32 {
    60
}

fn default_trials() -> u32 {
    10_000
}

impl ScenarioSpec {
    pub fn read(path: &Path) -> Result<ScenarioSpec, ScenarioError> {
        let text = formats::read_text(path)?;
        serde_json::from_str(&text).map_err(|e| {
            ScenarioError::Format(FormatError::Malformed {
                path: path.to_path_buf(),
                line: 0,
                message: e.to_string(),
            })
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("{path}: {message}")]
    Query { path: PathBuf, message: String },
    #[error("{0}")]
    Data(String),
    #[error("policy rejected: {0}")]
    Policy(String),
    #[error("placement failed: {0}")]
    Placement(PlacementError),
}

impl ScenarioError {
    /// Process exit code: 1 for I/O and data problems, 2 for policy
    /// validation failures, 3 for infeasible placement.
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::Format(_) | ScenarioError::Query { .. } | ScenarioError::Data(_) => 1,
            ScenarioError::Policy(_) => 2,
            ScenarioError::Placement(_) => 3,
        }
    }
}

/// Canonical stage order; every run must log exactly this sequence.
pub const PIPELINE_STAGES: [&str; 6] =
    ["policy", "rewrite", "place", "evaluate", "sanitize", "report"];

#[derive(Debug)]
pub struct RunSummary {
    pub stages: Vec<&'static str>,
    pub metrics: Vec<MetricsRow>,
    pub placement: Placement,
    pub artifacts: Vec<PathBuf>,
}

pub(crate) fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn taper_name(mode: TaperMode) -> &'static str {
    match mode {
        TaperMode::Table => "table",
        TaperMode::Strict => "strict",
        TaperMode::None => "none",
    }
}

fn data_err(e: impl std::fmt::Display) -> ScenarioError {
    ScenarioError::Data(e.to_string())
}

/// Default candidate mechanisms the ranking compares. Scores are illustrative
/// deployment-effort estimates on the six criteria, fixed here so reports are
/// reproducible.
pub fn default_candidates() -> Vec<PpmCandidate> {
    vec![
        PpmCandidate {
            id: "dp_sanitizer".into(),
            threat: Threat::PrivatePatterns,
            scores: Criteria {
                privacy_guarantees: 0.9,
                runtime: 0.8,
                utility: 0.6,
                resources: 0.9,
                scalability: 0.8,
                setup: 0.7,
            },
        },
        PpmCandidate {
            id: "ac_rewrite".into(),
            threat: Threat::PrivatePatterns,
            scores: Criteria {
                privacy_guarantees: 0.7,
                runtime: 0.95,
                utility: 0.9,
                resources: 0.95,
                scalability: 0.9,
                setup: 0.8,
            },
        },
        PpmCandidate {
            id: "placement_trusted".into(),
            threat: Threat::InvasiveQueries,
            scores: Criteria {
                privacy_guarantees: 0.6,
                runtime: 0.9,
                utility: 1.0,
                resources: 0.7,
                scalability: 0.6,
                setup: 0.5,
            },
        },
        PpmCandidate {
            id: "attribute_obfuscator".into(),
            threat: Threat::SensitiveAttributes,
            scores: Criteria {
                privacy_guarantees: 0.8,
                runtime: 0.6,
                utility: 0.7,
                resources: 0.4,
                scalability: 0.7,
                setup: 0.3,
            },
        },
    ]
}

/// Seed for one labeled sub-experiment, derived from the scenario seed so
/// sweep points are independent but reproducible.
fn derived_seed(seed: u64, label: &str) -> u64 {
    DetRng::new(seed).derive(label).next_below(u64::MAX)
}

struct DpPoint {
    epsilon: f64,
    advantage: f64,
    released: Vec<Option<f64>>,
}

/// Attacker advantage for distinguishing "pattern completed" from "pattern
/// absent" at the most informative slot of the true series.
fn advantage_at_best_slot(
    truth: &CountSeries,
    schedule: &NoiseSchedule,
    trials: u32,
    rng: &mut DetRng,
) -> Result<Option<f64>, AdvError> {
    let occupied = truth
        .values
        .iter()
        .position(|v| matches!(v, Some(c) if *c >= 1));
    let (world_with, world_without) = match occupied {
        Some(i) => {
            let mut without = truth.clone();
            without.values[i] = Some(without.values[i].unwrap() - 1);
            (truth.clone(), without)
        }
        None => {
            // the pattern never completes; plant one at the first defined slot
            let Some(i) = truth.values.iter().position(Option::is_some) else {
                return Ok(None);
            };
            let mut with = truth.clone();
            with.values[i] = Some(with.values[i].unwrap() + 1);
            (with, truth.clone())
        }
    };
    detect_pattern_from_sanitized(&world_with, &world_without, schedule, trials, rng).map(Some)
}

fn metric_value(report: &PutReport, name: &str) -> f64 {
    report
        .utility_metrics
        .iter()
        .find(|m| m.name == name)
        .map(|m| m.value)
        .unwrap_or(f64::NAN)
}

fn row_of(report: &PutReport, epsilon: Option<f64>) -> MetricsRow {
    MetricsRow {
        ppm: report.ppm_id.clone(),
        epsilon,
        privacy_metric: report.privacy_metric.value,
        count_mae: metric_value(report, "count_mae"),
        public_event_accuracy: metric_value(report, "public_event_accuracy"),
        latency_ms: metric_value(report, "latency_ms"),
    }
}

fn describe_actions(log: &[AppliedAction]) -> String {
    log.iter()
        .map(|a| format!("rule '{}' applied {} on '{}'", a.rule_id, a.action.name(), a.signature_id))
        .collect::<Vec<_>>()
        .join("; ")
}

pub fn run_scenario(
    spec: &ScenarioSpec,
    base_dir: &Path,
    out_dir: &Path,
) -> Result<RunSummary, ScenarioError> {
    let mut stages: Vec<&'static str> = Vec::new();
    let stage = |name: &'static str, stages: &mut Vec<&'static str>| {
        log::info!("stage {name}");
        stages.push(name);
    };

    // ---- load inputs -------------------------------------------------
    let events = formats::read_events(&resolve(base_dir, &spec.events))?;
    let topo: Topology = formats::read_topology(&resolve(base_dir, &spec.topology))?;
    let policy: PrivacyPolicy = formats::read_policy(&resolve(base_dir, &spec.policy))?;
    if spec.queries.is_empty() {
        return Err(ScenarioError::Data("scenario lists no query files".into()));
    }
    let mut queries: Vec<(PathBuf, QueryAst)> = Vec::new();
    for q in &spec.queries {
        let path = resolve(base_dir, q);
        let text = formats::read_text(&path)?;
        let ast = parse_query(&text)
            .map_err(|e| ScenarioError::Query { path: path.clone(), message: e.to_string() })?;
        queries.push((path, ast));
    }
    let mut days: Vec<i64> = events.iter().map(|r| r.day).collect();
    days.sort_unstable();
    days.dedup();
    let n_days = days.len() as u32;

    // ---- stage: policy ------------------------------------------------
    stage("policy", &mut stages);
    let knobs = ScenarioKnobs {
        pattern_windows: spec.pattern_windows.clone(),
        taper_mode: spec.taper,
        known_nodes: topo.nodes.iter().map(|n| n.id.clone()).collect(),
        n_days: n_days.max(1),
        ..ScenarioKnobs::default()
    };
    let diagnostics = validate_policy(&policy, &knobs);
    let mut errors = Vec::new();
    for d in &diagnostics {
        match d.severity {
            Severity::Error => errors.push(d.message.clone()),
            Severity::Advisory => log::warn!("policy advisory: {}", d.message),
        }
    }
    if !errors.is_empty() {
        return Err(ScenarioError::Policy(errors.join("; ")));
    }
    let effective = evaluate_policy(&policy, &spec.context);
    let cfg = derive_ppm_config(&effective, &knobs)
        .map_err(|e| ScenarioError::Policy(e.to_string()))?;

    // ---- stage: rewrite -----------------------------------------------
    stage("rewrite", &mut stages);
    let mut rewritten: Vec<(PathBuf, RewriteOutcome)> = Vec::new();
    for (path, ast) in &queries {
        let outcome = prisps_core::access::rewrite_query(
            ast,
            &cfg.action_rules,
            &cfg.signatures,
            spec.slot_seconds,
        )
        .map_err(|e| ScenarioError::Policy(e.to_string()))?;
        rewritten.push((path.clone(), outcome));
    }
    let primary_original = &queries[0].1;
    let primary_effective: &QueryAst = match &rewritten[0].1 {
        RewriteOutcome::Rewritten { query, .. } => query,
        RewriteOutcome::Denied { .. } => primary_original,
    };

    // ---- stage: place ---------------------------------------------------
    stage("place", &mut stages);
    let effective_topo = match &cfg.trusted_nodes {
        None => topo.clone(),
        Some(set) => {
            let mut t = topo.clone();
            for node in &mut t.nodes {
                node.trusted = node.trusted && set.contains(&node.id);
            }
            t
        }
    };
    let graph_original =
        build_operator_graph(primary_original).map_err(ScenarioError::Placement)?;
    let graph_effective =
        build_operator_graph(primary_effective).map_err(ScenarioError::Placement)?;
    let placement_baseline =
        place_operators(&graph_original, &topo, false).map_err(ScenarioError::Placement)?;
    let placement_main =
        place_operators(&graph_effective, &effective_topo, cfg.trusted_nodes.is_some())
            .map_err(ScenarioError::Placement)?;
    let placement_trusted = match place_operators(&graph_effective, &effective_topo, true) {
        Ok(p) => Some(p),
        Err(PlacementError::NoFeasiblePlacement(_)) => None,
        Err(e) => return Err(ScenarioError::Placement(e)),
    };

    // ---- stage: evaluate ------------------------------------------------
    stage("evaluate", &mut stages);
    let stream_name = primary_original.pattern.bindings[0].stream.clone();
    let schema = primary_original
        .stream_def(&stream_name)
        .expect("parser validated the stream reference")
        .fields
        .clone();
    let records: Vec<RawRecord> =
        events.iter().filter(|r| r.stream == stream_name).cloned().collect();
    let stream = ingest_events(&stream_name, &schema, records).map_err(data_err)?;
    let pattern = pattern_of_query(primary_original, spec.slot_seconds).map_err(data_err)?;
    let truth = count_pattern_completions(&stream, &pattern);
    let horizon = stream.max_slot();
    let truth_f: Vec<Option<f64>> =
        truth.values.iter().map(|v| v.map(|c| c as f64)).collect();

    // ---- stage: sanitize --------------------------------------------------
    stage("sanitize", &mut stages);
    let mut schedule_csv = String::from("slot,epsilon_t,scale\n");
    let mut dp_points: Vec<DpPoint> = Vec::new();
    if let Some(base_schedule) = &cfg.schedule {
        let allocate_at = |eps: f64| -> Result<NoiseSchedule, ScenarioError> {
            let mut c = base_schedule.clone();
            c.epsilon = eps;
            allocate_budget(&c, horizon).map_err(data_err)
        };
        let derived_eps = cfg.epsilon.expect("a schedule always carries its ε");
        schedule_csv = formats::schedule_to_csv(&allocate_at(derived_eps)?);
        let sweep = if spec.epsilon_sweep.is_empty() {
            vec![derived_eps]
        } else {
            spec.epsilon_sweep.clone()
        };
        for &epsilon in &sweep {
            let schedule = allocate_at(epsilon)?;
            let sanitized = sanitize(
                &truth,
                &schedule,
                derived_seed(spec.seed, &epsilon_label("sanitize", epsilon)),
            )
            .map_err(data_err)?;
            let mut rng = DetRng::new(spec.seed).derive(&epsilon_label("advantage", epsilon));
            let advantage =
                advantage_at_best_slot(&truth, &schedule, spec.adversary_trials, &mut rng)
                    .map_err(data_err)?
                    .unwrap_or(0.0);
            dp_points.push(DpPoint { epsilon, advantage, released: sanitized.values });
        }
    }

    // ---- stage: report -------------------------------------------------
    stage("report", &mut stages);
    let mut reports: Vec<PutReport> = Vec::new();
    let mut rows: Vec<MetricsRow> = Vec::new();
    let add = |results: ScenarioResults, eps: Option<f64>,
                   reports: &mut Vec<PutReport>, rows: &mut Vec<MetricsRow>|
     -> Result<(), ScenarioError> {
        let report = compute_put(&results).map_err(data_err)?;
        rows.push(row_of(&report, eps));
        reports.push(report);
        Ok(())
    };

    add(
        ScenarioResults {
            ppm_id: "none".into(),
            privacy_metric_name: "pattern_presence_advantage".into(),
            privacy_value: 1.0,
            true_counts: Some(truth.values.clone()),
            released: truth_f.clone(),
            latency_ms: placement_baseline.total_latency_ms,
            config: "no mechanism active".into(),
        },
        None,
        &mut reports,
        &mut rows,
    )?;

    for point in &dp_points {
        add(
            ScenarioResults {
                ppm_id: "dp_sanitizer".into(),
                privacy_metric_name: "pattern_presence_advantage".into(),
                privacy_value: point.advantage,
                true_counts: Some(truth.values.clone()),
                released: point.released.clone(),
                latency_ms: placement_baseline.total_latency_ms,
                config: format!(
                    "epsilon={}, taper={}, w={}",
                    point.epsilon,
                    taper_name(spec.taper),
                    cfg.schedule.as_ref().map(|s| s.w).unwrap_or(0),
                ),
            },
            Some(point.epsilon),
            &mut reports,
            &mut rows,
        )?;
    }

    let (denied, action_log): (bool, &[AppliedAction]) = match &rewritten[0].1 {
        RewriteOutcome::Rewritten { log, .. } => (false, log),
        RewriteOutcome::Denied { log } => (true, log),
    };
    if denied || !action_log.is_empty() {
        let sink_moved = denied
            || action_log.iter().any(|a| a.action == ActionKind::RewriteSink);
        add(
            ScenarioResults {
                ppm_id: "ac_rewrite".into(),
                privacy_metric_name: "pattern_presence_advantage".into(),
                // a redirected or denied query delivers nothing to the
                // original consumer; node restrictions alone do not block it
                privacy_value: if sink_moved { 0.0 } else { 1.0 },
                true_counts: Some(truth.values.clone()),
                released: truth_f.clone(),
                latency_ms: placement_main.total_latency_ms,
                config: describe_actions(action_log),
            },
            None,
            &mut reports,
            &mut rows,
        )?;
    }

    if let Some(trusted) = &placement_trusted {
        add(
            ScenarioResults {
                ppm_id: "placement_trusted".into(),
                privacy_metric_name: "pattern_presence_advantage".into(),
                privacy_value: 0.0,
                true_counts: Some(truth.values.clone()),
                released: truth_f.clone(),
                latency_ms: trusted.total_latency_ms,
                config: "free operators restricted to trusted nodes".into(),
            },
            None,
            &mut reports,
            &mut rows,
        )?;
    }

    let weights = Criteria::uniform(1.0);
    let ranked = select_ppm(&default_candidates(), Threat::PrivatePatterns, &weights)
        .map_err(data_err)?;

    // ---- write artifacts -------------------------------------------------
    let mut artifacts = Vec::new();
    let emit = |rel: &str, contents: &str, artifacts: &mut Vec<PathBuf>|
     -> Result<(), ScenarioError> {
        let path = out_dir.join(rel);
        formats::write_file(&path, contents)?;
        artifacts.push(path);
        Ok(())
    };
    emit("metrics.csv", &formats::metrics_to_csv(&rows), &mut artifacts)?;
    emit("schedule.csv", &schedule_csv, &mut artifacts)?;
    emit(
        "placement.json",
        &formats::to_pretty_json(&PlacementFile::new(&placement_main)),
        &mut artifacts,
    )?;
    emit(
        "put_report.json",
        &formats::to_pretty_json(&PutReportFile {
            reports,
            ranking: RankingFile { threat: Threat::PrivatePatterns, weights, ranked },
        }),
        &mut artifacts,
    )?;
    let mut used_names: BTreeMap<String, u32> = BTreeMap::new();
    for (path, outcome) in &rewritten {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "query".into());
        let n = used_names.entry(stem.clone()).or_insert(0);
        let name = if *n == 0 { format!("{stem}.txt") } else { format!("{stem}-{n}.txt") };
        *n += 1;
        let contents = match outcome {
            RewriteOutcome::Rewritten { query, .. } => print_query(query),
            RewriteOutcome::Denied { log } => {
                let rule = log.first().map(|a| a.rule_id.as_str()).unwrap_or("unknown");
                format!("denied: rule '{rule}'\n")
            }
        };
        emit(&format!("rewritten-queries/{name}"), &contents, &mut artifacts)?;
    }

    // The stage log is part of the contract: rewriting must precede
    // placement, which must precede evaluation.
    assert_eq!(stages, PIPELINE_STAGES, "pipeline ran out of order");

    Ok(RunSummary { stages, metrics: rows, placement: placement_main, artifacts })
}
