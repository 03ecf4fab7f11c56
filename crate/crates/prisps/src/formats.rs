//! On-disk formats. Events travel as JSON Lines, structured configs as JSON,
//! and metric tables as CSV with fixed column order and 6-decimal fixed-point
//! values so runs can be diffed byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use prisps_core::adversary::{Criteria, FeatureWindow, PutReport, RankedPpm, Threat};
use prisps_core::dp::{NoiseSchedule, ScheduleConfig, TaperMode};
use prisps_core::event::{RawRecord, Value};
use prisps_core::placement::{Operator, Placement, Topology};
use prisps_core::policy::PrivacyPolicy;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        /// 1-based line for JSONL inputs; 0 for whole-file formats.
        line: usize,
        message: String,
    },
}

impl FormatError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        FormatError::Io { path: path.to_path_buf(), source }
    }

    fn malformed(path: &Path, line: usize, message: impl Into<String>) -> Self {
        FormatError::Malformed { path: path.to_path_buf(), line, message: message.into() }
    }
}

/// One event on the wire: `{"day":1,"slot":3,"stream":"S","activity":"walk","attrs":{...}}`.
#[derive(Debug, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct EventLine {
    day: i64,
    slot: i64,
    stream: String,
    activity: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    attrs: BTreeMap<String, AttrValue>,
}

/// Attribute values keep their JSON type: integers, floats, or strings.
#[derive(Debug, serde::Serialize, serde::Deserialize)]
#[serde(untagged)]
enum AttrValue {
    Int(i64),
    Float(f64),
    Str(String),
}

impl From<AttrValue> for Value {
    fn from(v: AttrValue) -> Value {
        match v {
            AttrValue::Int(i) => Value::Int(i),
            AttrValue::Float(f) => Value::Float(f),
            AttrValue::Str(s) => Value::Str(s),
        }
    }
}

impl From<&Value> for AttrValue {
    fn from(v: &Value) -> AttrValue {
        match v {
            Value::Int(i) => AttrValue::Int(*i),
            Value::Float(f) => AttrValue::Float(*f),
            Value::Str(s) => AttrValue::Str(s.clone()),
        }
    }
}

pub fn read_events(path: &Path) -> Result<Vec<RawRecord>, FormatError> {
    let text = fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: EventLine = serde_json::from_str(line)
            .map_err(|e| FormatError::malformed(path, i + 1, e.to_string()))?;
        records.push(RawRecord {
            stream: parsed.stream,
            day: parsed.day,
            slot: parsed.slot,
            activity: parsed.activity,
            attrs: parsed.attrs.into_iter().map(|(k, v)| (k, v.into())).collect(),
        });
    }
    Ok(records)
}

pub fn events_to_jsonl(records: &[RawRecord]) -> String {
    let mut out = String::new();
    for rec in records {
        let line = EventLine {
            day: rec.day,
            slot: rec.slot,
            stream: rec.stream.clone(),
            activity: rec.activity.clone(),
            attrs: rec.attrs.iter().map(|(k, v)| (k.clone(), v.into())).collect(),
        };
        out.push_str(&serde_json::to_string(&line).expect("event lines always serialize"));
        out.push('\n');
    }
    out
}

pub fn read_topology(path: &Path) -> Result<Topology, FormatError> {
    read_json(path)
}

pub fn read_policy(path: &Path) -> Result<PrivacyPolicy, FormatError> {
    read_json(path)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, FormatError> {
    let text = fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| FormatError::malformed(path, 0, e.to_string()))
}

pub fn read_text(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path).map_err(|e| FormatError::io(path, e))
}

/// Create parent directories as needed and write the file in one shot.
pub fn write_file(path: &Path, contents: &str) -> Result<(), FormatError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| FormatError::io(path, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| FormatError::io(path, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| FormatError::io(path, e))
}

pub fn to_pretty_json<T: serde::Serialize>(value: &T) -> String {
    let mut out = serde_json::to_string_pretty(value).expect("report types always serialize");
    out.push('\n');
    out
}

/// Sanitizer configuration file for the standalone `sanitize` subcommand.
#[derive(Debug, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfigFile {
    pub epsilon: f64,
    pub w: u32,
    #[serde(default = "default_sensitivity")]
    pub sensitivity: f64,
    #[serde(default)]
    pub relevance_intervals: Vec<(u32, u32)>,
    #[serde(default = "default_n_days")]
    pub n_days: u32,
    #[serde(default = "default_taper")]
    pub taper_mode: TaperMode,
}

fn default_sensitivity() -> f64 {
    1.0
}

fn default_n_days() -> u32 {
    1
}

fn default_taper() -> TaperMode {
    TaperMode::Table
}

impl ScheduleConfigFile {
    pub fn read(path: &Path) -> Result<Self, FormatError> {
        read_json(path)
    }

    pub fn to_config(&self) -> ScheduleConfig {
        let mut config =
            ScheduleConfig::new(self.epsilon, self.w, self.relevance_intervals.clone());
        config.sensitivity = self.sensitivity;
        config.n_days = self.n_days;
        config.taper_mode = self.taper_mode;
        config
    }
}

pub fn fixed6(v: f64) -> String {
    format!("{v:.6}")
}

/// One row of metrics.csv.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub ppm: String,
    /// Present only for budget-sweep rows.
    pub epsilon: Option<f64>,
    pub privacy_metric: f64,
    pub count_mae: f64,
    pub public_event_accuracy: f64,
    pub latency_ms: f64,
}

pub fn metrics_to_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from("ppm,epsilon,privacy_metric,count_mae,public_event_accuracy,latency_ms\n");
    for row in rows {
        let eps = row.epsilon.map(fixed6).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.ppm,
            eps,
            fixed6(row.privacy_metric),
            fixed6(row.count_mae),
            fixed6(row.public_event_accuracy),
            fixed6(row.latency_ms),
        ));
    }
    out
}

/// slot,epsilon_t,scale — budget columns empty on no-noise slots.
pub fn schedule_to_csv(schedule: &NoiseSchedule) -> String {
    let mut out = String::from("slot,epsilon_t,scale\n");
    for slot in 1..=schedule.horizon() {
        match (schedule.epsilon_at(slot), schedule.scale_at(slot)) {
            (Some(eps), Some(scale)) => {
                out.push_str(&format!("{slot},{},{}\n", fixed6(eps), fixed6(scale)));
            }
            _ => out.push_str(&format!("{slot},,\n")),
        }
    }
    out
}

/// placement.json wire shape: the operator chain as labeled objects.
#[derive(Debug, serde::Serialize)]
pub struct PlacementFile<'a> {
    pub assignment: Vec<PlacedOperator<'a>>,
    pub total_latency_ms: f64,
    pub optimal: bool,
}

#[derive(Debug, serde::Serialize)]
pub struct PlacedOperator<'a> {
    pub operator: Operator,
    pub node: &'a str,
}

impl<'a> PlacementFile<'a> {
    pub fn new(placement: &'a Placement) -> Self {
        PlacementFile {
            assignment: placement
                .assignment
                .iter()
                .map(|(operator, node)| PlacedOperator { operator: *operator, node })
                .collect(),
            total_latency_ms: placement.total_latency_ms,
            optimal: placement.optimal,
        }
    }
}

/// put_report.json wire shape: per-configuration reports plus the ranking.
#[derive(Debug, serde::Serialize)]
pub struct PutReportFile {
    pub reports: Vec<PutReport>,
    pub ranking: RankingFile,
}

#[derive(Debug, serde::Serialize)]
pub struct RankingFile {
    pub threat: Threat,
    pub weights: Criteria,
    pub ranked: Vec<RankedPpm>,
}

pub fn read_feature_windows(path: &Path) -> Result<Vec<FeatureWindow>, FormatError> {
    let text = fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    let mut windows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let w: FeatureWindow = serde_json::from_str(line)
            .map_err(|e| FormatError::malformed(path, i + 1, e.to_string()))?;
        windows.push(w);
    }
    Ok(windows)
}

pub fn feature_windows_to_jsonl(windows: &[FeatureWindow]) -> String {
    let mut out = String::new();
    for w in windows {
        out.push_str(&serde_json::to_string(w).expect("feature windows always serialize"));
        out.push('\n');
    }
    out
}
