//! Command-line front end. `run` drives the whole pipeline from a scenario
//! file; the other subcommands expose each mechanism on its own. Logging is
//! controlled by the `PRISPS_LOG` environment variable.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use prisps_core::access::{rewrite_query, RewriteOutcome};
use prisps_core::adversary::{obfuscate_features, LabelKind, ObfuscationConfig};
use prisps_core::cep::{CountSeries, SequencePattern};
use prisps_core::dp::{allocate_budget, sanitize, TaperMode};
use prisps_core::event::ingest_events;
use prisps_core::placement::{build_operator_graph, place_operators};
use prisps_core::policy::{
    derive_ppm_config, evaluate_policy, validate_policy, EvaluationContext, ScenarioKnobs,
    Severity, Trigger,
};
use prisps_core::query::{parse_query, print_query, Predicate};

use crate::formats::{self, PlacementFile, ScheduleConfigFile};
use crate::scenario::{resolve, run_scenario, ScenarioError, ScenarioSpec};
use crate::fixtures;

#[derive(Parser)]
#[command(
    name = "prisps",
    version,
    about = "Privacy-aware stream processing simulator",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario end to end and write its report artifacts.
    Run {
        /// Scenario description file (JSON).
        #[arg(long)]
        scenario: PathBuf,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: the scenario's out_dir, then ./out).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the budget taper: table, strict, or none.
        #[arg(long, value_parser = parse_taper)]
        taper: Option<TaperMode>,
        /// Override the ε sweep, comma separated (e.g. 0.1,1,10).
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
    },
    /// Rewrite a query under a privacy policy and print the result.
    Rewrite {
        #[arg(long)]
        query: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        /// Seconds represented by one stream slot.
        #[arg(long, default_value_t = 60)]
        slot_seconds: u32,
    },
    /// Sanitize per-slot event counts under a noise schedule and print them.
    Sanitize {
        /// Event log (JSONL).
        #[arg(long)]
        events: PathBuf,
        /// Schedule configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Place a query's operators onto a topology and print the placement.
    Place {
        #[arg(long)]
        query: PathBuf,
        #[arg(long)]
        topology: PathBuf,
        /// Privacy policy whose trust rules shrink the trusted node set.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Keep free operators on trusted nodes only.
        #[arg(long)]
        trusted_only: bool,
    },
    /// Write the built-in demo scenario files into a directory.
    Fixture {
        #[arg(long)]
        out: PathBuf,
        /// Also write a synthetic labeled feature corpus (features.jsonl).
        #[arg(long)]
        synthetic: bool,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Align group feature moments in a labeled window corpus.
    Obfuscate {
        /// Feature windows (JSONL).
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Label to conceal: group or activity.
        #[arg(long, value_parser = parse_label, default_value = "group")]
        conceal: LabelKind,
        /// 0 leaves features untouched, 1 fully aligns moments.
        #[arg(long, default_value_t = 1.0)]
        strength: f64,
    },
}

fn parse_taper(s: &str) -> Result<TaperMode, String> {
    match s {
        "table" => Ok(TaperMode::Table),
        "strict" => Ok(TaperMode::Strict),
        "none" => Ok(TaperMode::None),
        other => Err(format!("unknown taper '{other}' (expected table, strict, or none)")),
    }
}

fn parse_label(s: &str) -> Result<LabelKind, String> {
    match s {
        "group" => Ok(LabelKind::Group),
        "activity" => Ok(LabelKind::Activity),
        other => Err(format!("unknown label '{other}' (expected group or activity)")),
    }
}

fn data_err(e: impl std::fmt::Display) -> ScenarioError {
    ScenarioError::Data(e.to_string())
}

/// Parse arguments, dispatch, and return the process exit code.
pub fn run() -> i32 {
    env_logger::Builder::from_env(
        env_logger::Env::new().filter_or("PRISPS_LOG", "warn"),
    )
    .format_timestamp(None)
    .try_init()
    .ok();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<(), ScenarioError> {
    match command {
        Command::Run { scenario, seed, out, taper, eps } => {
            let mut spec = ScenarioSpec::read(&scenario)?;
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            if let Some(taper) = taper {
                spec.taper = taper;
            }
            if let Some(eps) = eps {
                spec.epsilon_sweep = eps;
            }
            let base = scenario.parent().unwrap_or_else(|| Path::new("."));
            let out_dir = out
                .or_else(|| spec.out_dir.clone().map(|p| resolve(base, &p)))
                .unwrap_or_else(|| PathBuf::from("out"));
            let summary = run_scenario(&spec, base, &out_dir)?;
            println!("pipeline: {}", summary.stages.join(" -> "));
            for artifact in &summary.artifacts {
                println!("wrote {}", artifact.display());
            }
            Ok(())
        }
        Command::Rewrite { query, policy, slot_seconds } => {
            let text = formats::read_text(&query)?;
            let ast = parse_query(&text)
                .map_err(|e| ScenarioError::Query { path: query, message: e.to_string() })?;
            let policy = formats::read_policy(&policy)?;
            // rewriting only consumes signatures and actions, so protected
            // patterns get placeholder relevance windows here
            let effective = evaluate_policy(&policy, &EvaluationContext::default());
            let mut windows = BTreeMap::new();
            for rule in &effective {
                if let Trigger::ProtectPattern { signature } = &rule.trigger {
                    windows.insert(signature.id.clone(), vec![(1, 1)]);
                }
            }
            let knobs = ScenarioKnobs { pattern_windows: windows, ..ScenarioKnobs::default() };
            let errors: Vec<String> = validate_policy(&policy, &knobs)
                .into_iter()
                .filter(|d| d.severity == Severity::Error)
                .map(|d| d.message)
                .collect();
            if !errors.is_empty() {
                return Err(ScenarioError::Policy(errors.join("; ")));
            }
            let cfg = derive_ppm_config(&effective, &knobs)
                .map_err(|e| ScenarioError::Policy(e.to_string()))?;
            let outcome = rewrite_query(&ast, &cfg.action_rules, &cfg.signatures, slot_seconds)
                .map_err(|e| ScenarioError::Policy(e.to_string()))?;
            match outcome {
                RewriteOutcome::Rewritten { query, .. } => print!("{}", print_query(&query)),
                RewriteOutcome::Denied { log } => {
                    let rule = log.first().map(|a| a.rule_id.as_str()).unwrap_or("unknown");
                    println!("denied: rule '{rule}'");
                }
            }
            Ok(())
        }
        Command::Sanitize { events, config, seed } => {
            let records = formats::read_events(&events)?;
            let config = ScheduleConfigFile::read(&config)?.to_config();
            let mut days: Vec<i64> = records.iter().map(|r| r.day).collect();
            days.sort_unstable();
            days.dedup();
            let n_days = days.len().max(1) as u32;
            let stream_name =
                records.first().map(|r| r.stream.clone()).unwrap_or_else(|| "events".into());
            let stream = ingest_events(&stream_name, &[], records).map_err(data_err)?;
            let horizon = stream.max_slot();
            let mut values: Vec<Option<u64>> = vec![Some(0); horizon as usize];
            for day in stream.days() {
                for event in stream.day_events(day) {
                    let slot = event.ts.slot as usize;
                    if slot >= 1 {
                        values[slot - 1] = Some(values[slot - 1].unwrap_or(0) + 1);
                    }
                }
            }
            let counts = CountSeries {
                values,
                n_days,
                // one unconditional step: the "pattern" is plain per-slot counting
                pattern: SequencePattern::new(vec![Predicate { comparisons: vec![] }], None)
                    .expect("a one-step pattern is always valid"),
            };
            let schedule = allocate_budget(&config, horizon).map_err(data_err)?;
            let released = sanitize(&counts, &schedule, seed).map_err(data_err)?;
            println!("slot,count,released");
            for (i, (count, noisy)) in
                counts.values.iter().zip(released.values.iter()).enumerate()
            {
                let count = count.map(|c| c.to_string()).unwrap_or_default();
                let noisy = noisy.map(formats::fixed6).unwrap_or_default();
                println!("{},{count},{noisy}", i + 1);
            }
            Ok(())
        }
        Command::Place { query, topology, policy, trusted_only } => {
            let text = formats::read_text(&query)?;
            let ast = parse_query(&text)
                .map_err(|e| ScenarioError::Query { path: query, message: e.to_string() })?;
            let mut topo = formats::read_topology(&topology)?;
            if let Some(policy) = policy {
                let policy = formats::read_policy(&policy)?;
                let effective = evaluate_policy(&policy, &EvaluationContext::default());
                let knobs = ScenarioKnobs {
                    known_nodes: topo.nodes.iter().map(|n| n.id.clone()).collect(),
                    ..ScenarioKnobs::default()
                };
                let cfg = derive_ppm_config(&effective, &knobs)
                    .map_err(|e| ScenarioError::Policy(e.to_string()))?;
                if let Some(set) = cfg.trusted_nodes {
                    for node in &mut topo.nodes {
                        node.trusted = node.trusted && set.contains(&node.id);
                    }
                }
            }
            let graph = build_operator_graph(&ast).map_err(ScenarioError::Placement)?;
            let placement =
                place_operators(&graph, &topo, trusted_only).map_err(ScenarioError::Placement)?;
            print!("{}", formats::to_pretty_json(&PlacementFile::new(&placement)));
            Ok(())
        }
        Command::Fixture { out, synthetic, seed } => {
            fixtures::write_bob_fixture(&out)?;
            for name in ["events.jsonl", "query.txt", "policy.json", "topology.json", "scenario.json"]
            {
                println!("wrote {}", out.join(name).display());
            }
            if synthetic {
                let spec = prisps_core::synth::SyntheticAttributeSpec::default();
                fixtures::write_synthetic_fixture(&out, &spec, seed)?;
                println!("wrote {}", out.join("features.jsonl").display());
            }
            Ok(())
        }
        Command::Obfuscate { input, output, conceal, strength } => {
            let windows = formats::read_feature_windows(&input)?;
            let cfg = ObfuscationConfig { concealed: conceal, strength };
            let obfuscated = obfuscate_features(&windows, &cfg).map_err(data_err)?;
            formats::write_file(&output, &formats::feature_windows_to_jsonl(&obfuscated))?;
            println!("wrote {}", output.display());
            Ok(())
        }
    }
}
