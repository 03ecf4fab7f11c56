//! Honest-but-curious adversary harness and privacy–utility accounting.
//!
//! The adversary models here quantify what a mechanism actually hides:
//! a two-world distinguishing experiment against sanitized count series,
//! invasive query construction, attribute inference from feature windows
//! (with a moment-aligning obfuscator as the countermeasure), and a
//! weighted multi-criteria ranking for picking a mechanism per threat.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::cep::CountSeries;
use crate::dp::{sample_laplace, BudgetEntry, NoiseSchedule};
use crate::query::{Predicate, QueryAst};
use crate::rng::DetRng;

#[derive(Clone, Debug, PartialEq)]
pub enum AdvError {
    /// The two hypothetical worlds release identical series; there is
    /// nothing to distinguish.
    DegenerateWorlds,
    /// The two worlds are not a valid neighboring pair for the experiment.
    WorldsMismatch(String),
    /// Obfuscation needs at least two label groups to align.
    SingleGroup,
    InsufficientData(String),
    /// Utility cannot be scored without the true series.
    MissingBaseline,
    NoCandidateForThreat,
    InvalidWeights(String),
    InvalidMetric(String),
    InvalidStrength(f64),
    InvalidSpec(String),
    UnknownField(String),
}

impl fmt::Display for AdvError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdvError::DegenerateWorlds => write!(f, "the two worlds are indistinguishable"),
            AdvError::WorldsMismatch(m) => write!(f, "worlds are not a neighboring pair: {m}"),
            AdvError::SingleGroup => write!(f, "need at least two groups to obfuscate"),
            AdvError::InsufficientData(m) => write!(f, "insufficient data: {m}"),
            AdvError::MissingBaseline => write!(f, "no true series to score utility against"),
            AdvError::NoCandidateForThreat => {
                write!(f, "no candidate mechanism addresses the threat")
            }
            AdvError::InvalidWeights(m) => write!(f, "invalid criteria weights: {m}"),
            AdvError::InvalidMetric(m) => write!(f, "invalid metric: {m}"),
            AdvError::InvalidStrength(s) => {
                write!(f, "obfuscation strength must be in [0, 1], got {s}")
            }
            AdvError::InvalidSpec(m) => write!(f, "invalid specification: {m}"),
            AdvError::UnknownField(name) => write!(f, "unknown field '{name}'"),
        }
    }
}

impl core::error::Error for AdvError {}

/// Measure how well a threshold adversary distinguishes two neighboring
/// worlds (count series differing in exactly one defined slot by the
/// schedule's sensitivity) from their sanitized releases.
///
/// Each trial samples one release per world and classifies it against the
/// midpoint threshold; the returned advantage is `2·(success − 1/2)`,
/// clamped to [0, 1]. For a Laplace release with per-slot budget ε_t the
/// expected advantage is `1 − exp(−ε_t/2)`; a slot released without noise
/// yields advantage 1 outright.
pub fn detect_pattern_from_sanitized(
    world_with: &CountSeries,
    world_without: &CountSeries,
    schedule: &NoiseSchedule,
    trials: u32,
    rng: &mut DetRng,
) -> Result<f64, AdvError> {
    if trials == 0 {
        return Err(AdvError::InvalidSpec("trials must be positive".into()));
    }
    if world_with.values == world_without.values {
        return Err(AdvError::DegenerateWorlds);
    }
    if world_with.values.len() != world_without.values.len() {
        return Err(AdvError::WorldsMismatch(alloc::format!(
            "horizons differ: {} vs {}",
            world_with.values.len(),
            world_without.values.len()
        )));
    }
    let mut differing: Option<(u32, u64, u64)> = None;
    for (i, (a, b)) in world_with.values.iter().zip(&world_without.values).enumerate() {
        let slot = i as u32 + 1;
        match (a, b) {
            (None, None) => {}
            (Some(x), Some(y)) if x == y => {}
            (Some(x), Some(y)) => {
                if differing.is_some() {
                    return Err(AdvError::WorldsMismatch(
                        "worlds differ in more than one slot".into(),
                    ));
                }
                differing = Some((slot, *x, *y));
            }
            _ => {
                return Err(AdvError::WorldsMismatch(alloc::format!(
                    "slot {slot} is defined in only one world"
                )));
            }
        }
    }
    let (slot, with_count, without_count) =
        differing.expect("unequal series with no mismatch must have a differing slot");
    let gap = if with_count >= without_count {
        (with_count - without_count) as f64
    } else {
        (without_count - with_count) as f64
    };
    if gap != schedule.sensitivity {
        return Err(AdvError::WorldsMismatch(alloc::format!(
            "worlds differ by {gap} at slot {slot}, not by the sensitivity {}",
            schedule.sensitivity
        )));
    }
    match schedule.entry(slot) {
        None => {
            return Err(AdvError::WorldsMismatch(alloc::format!(
                "schedule does not cover slot {slot}"
            )))
        }
        Some(BudgetEntry::NoNoise) => return Ok(1.0),
        Some(BudgetEntry::Budget(_)) => {}
    }
    let scale = schedule.scale_at(slot).expect("budget entry has a scale");

    let hi = with_count.max(without_count) as f64;
    let lo = with_count.min(without_count) as f64;
    let threshold = (hi + lo) / 2.0;
    let mut successes: u64 = 0;
    for _ in 0..trials {
        let release_hi = hi + sample_laplace(scale, rng).map_err(reseed_err)?;
        let release_lo = lo + sample_laplace(scale, rng).map_err(reseed_err)?;
        if release_hi >= threshold {
            successes += 1;
        }
        if release_lo < threshold {
            successes += 1;
        }
    }
    let success_rate = successes as f64 / (2.0 * trials as f64);
    Ok((2.0 * (success_rate - 0.5)).clamp(0.0, 1.0))
}

fn reseed_err(e: crate::dp::DpError) -> AdvError {
    AdvError::InvalidSpec(alloc::format!("sampling failed: {e}"))
}

/// Extend a query with extra filter conjuncts on its first binding — the
/// move a curious consumer makes to sharpen what a subscription reveals.
/// Every filtered field must exist on the bound stream.
pub fn craft_invasive_query(base: &QueryAst, filter: &Predicate) -> Result<QueryAst, AdvError> {
    let mut query = base.clone();
    let Some(first) = query.pattern.bindings.first_mut() else {
        return Err(AdvError::InvalidSpec("query has no bindings".into()));
    };
    for cmp in &filter.comparisons {
        if !base.field_is_known(&first.stream, &cmp.field) {
            return Err(AdvError::UnknownField(cmp.field.clone()));
        }
        first.predicate.comparisons.push(cmp.clone());
    }
    Ok(query)
}

/// One windowed feature vector with its labels, the exchange unit between
/// the feature pipeline, the obfuscator, and the inference attacker.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureWindow {
    pub window_id: u64,
    pub features: Vec<f64>,
    pub group: String,
    pub activity: String,
}

/// Which label a window carries for grouping or inference.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    Group,
    Activity,
}

impl LabelKind {
    pub fn of(self, window: &FeatureWindow) -> &str {
        match self {
            LabelKind::Group => &window.group,
            LabelKind::Activity => &window.activity,
        }
    }

    pub fn parse(name: &str) -> Option<LabelKind> {
        match name {
            "group" => Some(LabelKind::Group),
            "activity" => Some(LabelKind::Activity),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObfuscationConfig {
    /// Label whose per-group feature moments should become indistinguishable.
    pub concealed: LabelKind,
    /// 0 leaves the data untouched; 1 aligns every group's per-dimension
    /// mean and variance with the pooled ones.
    pub strength: f64,
}

/// Per-dimension mean and population variance.
fn moments(rows: &[&FeatureWindow], dims: usize) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let mut mean = alloc::vec![0.0; dims];
    for row in rows {
        for (m, x) in mean.iter_mut().zip(&row.features) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = alloc::vec![0.0; dims];
    for row in rows {
        for ((v, m), x) in var.iter_mut().zip(&mean).zip(&row.features) {
            let d = x - m;
            *v += d * d;
        }
    }
    for v in &mut var {
        *v /= n;
    }
    (mean, var)
}

fn check_rectangular(windows: &[FeatureWindow]) -> Result<usize, AdvError> {
    let dims = windows.first().map_or(0, |w| w.features.len());
    if windows.iter().any(|w| w.features.len() != dims) {
        return Err(AdvError::InsufficientData(
            "feature vectors have inconsistent dimensions".into(),
        ));
    }
    Ok(dims)
}

/// Pull every group's per-dimension mean and variance toward the pooled
/// moments: with strength s each value becomes
/// `m_g + (x − μ_g)·sqrt(v_g/σ²_g)` where `m_g = μ_g + s(μ − μ_g)` and
/// `v_g = σ²_g + s(σ² − σ²_g)`. Strength 0 returns the input bit-exactly;
/// strength 1 makes group-conditional moments match the pooled ones, so a
/// moment-based attacker on the concealed label is reduced to guessing.
/// The transform is deterministic — no noise is injected.
pub fn obfuscate_features(
    windows: &[FeatureWindow],
    cfg: &ObfuscationConfig,
) -> Result<Vec<FeatureWindow>, AdvError> {
    if !(0.0..=1.0).contains(&cfg.strength) || cfg.strength.is_nan() {
        return Err(AdvError::InvalidStrength(cfg.strength));
    }
    if cfg.strength == 0.0 {
        return Ok(windows.to_vec());
    }
    let dims = check_rectangular(windows)?;
    let mut groups: BTreeMap<&str, Vec<&FeatureWindow>> = BTreeMap::new();
    for window in windows {
        groups.entry(cfg.concealed.of(window)).or_default().push(window);
    }
    if groups.len() < 2 {
        return Err(AdvError::SingleGroup);
    }

    let all: Vec<&FeatureWindow> = windows.iter().collect();
    let (pooled_mean, pooled_var) = moments(&all, dims);
    let group_moments: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = groups
        .iter()
        .map(|(label, rows)| (*label, moments(rows, dims)))
        .collect();

    let s = cfg.strength;
    Ok(windows
        .iter()
        .map(|window| {
            let (g_mean, g_var) = &group_moments[cfg.concealed.of(window)];
            let features = window
                .features
                .iter()
                .enumerate()
                .map(|(d, &x)| {
                    let target_mean = g_mean[d] + s * (pooled_mean[d] - g_mean[d]);
                    let target_var = g_var[d] + s * (pooled_var[d] - g_var[d]);
                    let factor = if g_var[d] > 0.0 {
                        libm::sqrt(target_var / g_var[d])
                    } else {
                        1.0
                    };
                    target_mean + (x - g_mean[d]) * factor
                })
                .collect();
            FeatureWindow { features, ..window.clone() }
        })
        .collect())
}

/// Minimum windows each label needs before inference is attempted.
pub const MIN_WINDOWS_PER_LABEL: usize = 10;

/// Nearest-centroid attribute inference: stratified train/test split per
/// label, centroids from the training part, squared-Euclidean
/// classification of the rest. Returns test accuracy in [0, 1]; distance
/// ties resolve to the lexicographically smallest label.
pub fn infer_attribute(
    windows: &[FeatureWindow],
    target: LabelKind,
    train_fraction: f64,
    rng: &mut DetRng,
) -> Result<f64, AdvError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(AdvError::InvalidSpec(alloc::format!(
            "train fraction must lie strictly between 0 and 1, got {train_fraction}"
        )));
    }
    let dims = check_rectangular(windows)?;
    let mut by_label: BTreeMap<&str, Vec<&FeatureWindow>> = BTreeMap::new();
    for window in windows {
        by_label.entry(target.of(window)).or_default().push(window);
    }
    if by_label.len() < 2 {
        return Err(AdvError::InsufficientData(
            "need at least two labels to infer anything".into(),
        ));
    }
    for (label, rows) in &by_label {
        if rows.len() < MIN_WINDOWS_PER_LABEL {
            return Err(AdvError::InsufficientData(alloc::format!(
                "label '{label}' has {} windows, need {MIN_WINDOWS_PER_LABEL}",
                rows.len()
            )));
        }
    }

    let mut centroids: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut test: Vec<(&str, &FeatureWindow)> = Vec::new();
    for (label, rows) in &by_label {
        let mut order: Vec<usize> = (0..rows.len()).collect();
        rng.shuffle(&mut order);
        let raw = libm::ceil(train_fraction * rows.len() as f64) as usize;
        let train_n = raw.clamp(1, rows.len() - 1);
        let train_rows: Vec<&FeatureWindow> =
            order[..train_n].iter().map(|&i| rows[i]).collect();
        let (mean, _) = moments(&train_rows, dims);
        centroids.insert(label, mean);
        test.extend(order[train_n..].iter().map(|&i| (*label, rows[i])));
    }

    let mut correct = 0usize;
    for (truth, window) in &test {
        let mut best: Option<(&str, f64)> = None;
        for (label, centroid) in &centroids {
            let dist: f64 = window
                .features
                .iter()
                .zip(centroid)
                .map(|(x, c)| (x - c) * (x - c))
                .sum();
            // BTreeMap iterates labels in order, so strict improvement keeps
            // the lexicographically smallest label on ties
            if best.is_none_or(|(_, d)| dist < d) {
                best = Some((label, dist));
            }
        }
        if best.expect("at least two centroids").0 == *truth {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.len() as f64)
}

/// One mechanism configuration's raw outcome on a scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioResults {
    pub ppm_id: String,
    pub privacy_metric_name: String,
    /// Residual disclosure in [0, 1] (e.g. adversary advantage); lower is
    /// more private.
    pub privacy_value: f64,
    /// Ground-truth counts; required to score utility.
    pub true_counts: Option<Vec<Option<u64>>>,
    /// What consumers actually saw.
    pub released: Vec<Option<f64>>,
    pub latency_ms: f64,
    /// Free-form description of the configuration (ε, mode, …).
    pub config: String,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct MetricValue {
    pub name: String,
    pub value: f64,
}

/// Privacy–utility tradeoff summary for one mechanism configuration.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct PutReport {
    pub ppm_id: String,
    pub privacy_metric: MetricValue,
    pub utility_metrics: Vec<MetricValue>,
    pub config: String,
}

/// Score a scenario outcome: utility is the mean absolute error of the
/// released counts plus the fraction of slots a consumer still reads
/// correctly after rounding, alongside the end-to-end latency.
pub fn compute_put(results: &ScenarioResults) -> Result<PutReport, AdvError> {
    let truth = results.true_counts.as_ref().ok_or(AdvError::MissingBaseline)?;
    if truth.len() != results.released.len() {
        return Err(AdvError::InvalidMetric(alloc::format!(
            "true series has {} slots, released has {}",
            truth.len(),
            results.released.len()
        )));
    }
    if !(0.0..=1.0).contains(&results.privacy_value) || results.privacy_value.is_nan() {
        return Err(AdvError::InvalidMetric(alloc::format!(
            "privacy value {} is outside [0, 1]",
            results.privacy_value
        )));
    }
    let mut defined = 0usize;
    let mut exact = 0usize;
    let mut abs_err = 0.0;
    for (slot, (t, r)) in truth.iter().zip(&results.released).enumerate() {
        match (t, r) {
            (None, None) => {}
            (Some(t), Some(r)) => {
                defined += 1;
                if libm::round(*r) == *t as f64 {
                    exact += 1;
                }
                abs_err += libm::fabs(r - *t as f64);
            }
            _ => {
                return Err(AdvError::InvalidMetric(alloc::format!(
                    "slot {} is defined on only one side",
                    slot + 1
                )));
            }
        }
    }
    let (accuracy, mae) = if defined == 0 {
        (1.0, 0.0)
    } else {
        (exact as f64 / defined as f64, abs_err / defined as f64)
    };
    Ok(PutReport {
        ppm_id: results.ppm_id.clone(),
        privacy_metric: MetricValue {
            name: results.privacy_metric_name.clone(),
            value: results.privacy_value,
        },
        utility_metrics: alloc::vec![
            MetricValue { name: "count_mae".into(), value: mae },
            MetricValue { name: "public_event_accuracy".into(), value: accuracy },
            MetricValue { name: "latency_ms".into(), value: results.latency_ms },
        ],
        config: results.config.clone(),
    })
}

/// Threat model a mechanism is meant to counter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threat {
    SensitiveAttributes,
    PrivatePatterns,
    InvasiveQueries,
}

/// The six comparison criteria, each scored (or weighted) in [0, 1] — higher
/// is better on every axis.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Criteria {
    pub privacy_guarantees: f64,
    pub runtime: f64,
    pub utility: f64,
    pub resources: f64,
    pub scalability: f64,
    pub setup: f64,
}

impl Criteria {
    pub fn values(&self) -> [f64; 6] {
        [
            self.privacy_guarantees,
            self.runtime,
            self.utility,
            self.resources,
            self.scalability,
            self.setup,
        ]
    }

    pub fn uniform(value: f64) -> Criteria {
        Criteria {
            privacy_guarantees: value,
            runtime: value,
            utility: value,
            resources: value,
            scalability: value,
            setup: value,
        }
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PpmCandidate {
    pub id: String,
    pub threat: Threat,
    pub scores: Criteria,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct RankedPpm {
    pub candidate: PpmCandidate,
    /// Weighted mean of the six criteria, in [0, 1].
    pub score: f64,
}

/// Rank the candidates addressing a threat by weighted criteria score,
/// highest first; equal scores order by id. Weights must be non-negative
/// with a positive sum, and scores are normalized by the weight sum, so any
/// positive rescaling of the weights leaves the ranking (and scores)
/// unchanged.
pub fn select_ppm(
    candidates: &[PpmCandidate],
    threat: Threat,
    weights: &Criteria,
) -> Result<Vec<RankedPpm>, AdvError> {
    let wv = weights.values();
    if wv.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(AdvError::InvalidWeights(
            "weights must be non-negative and finite".into(),
        ));
    }
    let total: f64 = wv.iter().sum();
    if total <= 0.0 {
        return Err(AdvError::InvalidWeights("at least one weight must be positive".into()));
    }
    for candidate in candidates {
        if candidate
            .scores
            .values()
            .iter()
            .any(|s| !(0.0..=1.0).contains(s) || s.is_nan())
        {
            return Err(AdvError::InvalidMetric(alloc::format!(
                "candidate '{}' has a score outside [0, 1]",
                candidate.id
            )));
        }
    }
    let mut ranked: Vec<RankedPpm> = candidates
        .iter()
        .filter(|c| c.threat == threat)
        .map(|c| {
            let dot: f64 = c.scores.values().iter().zip(&wv).map(|(s, w)| s * w).sum();
            RankedPpm { candidate: c.clone(), score: dot / total }
        })
        .collect();
    if ranked.is_empty() {
        return Err(AdvError::NoCandidateForThreat);
    }
    ranked.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .expect("scores are finite")
            .then_with(|| a.candidate.id.cmp(&b.candidate.id))
    });
    Ok(ranked)
}
