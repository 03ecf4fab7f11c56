//! Relevance-interval w-event differential-privacy sanitization of count
//! series: per-slot budget allocation and Laplace noise injection,
//! `M(t) = Q(t) + Lap(Δ/ε_t)`.
//!
//! Budgets are stored as exact rational coefficients of the configured ε
//! (e.g. 1/3 for ε/3), so window sums and schedule shapes can be checked
//! without floating-point slack. The cross-day sequential-composition factor
//! n is carried separately in the schedule instead of being multiplied into
//! the per-slot scales: over n days the spent budget is n times the per-day
//! sum, while each day's noise is calibrated to the per-day budget.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use num_rational::Ratio;

use crate::cep::CountSeries;
use crate::rng::DetRng;

/// Exact budget coefficient: the per-slot budget is `coeff * epsilon`.
pub type Coeff = Ratio<i64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaperMode {
    /// Reproduce the published schedule shape: ε/w inside each relevance
    /// interval, then ε/2 and ε on the two slots after it, then no noise.
    /// Violates sliding-window sums by design; `window_budget_check` reports
    /// the overruns instead of hiding them.
    Table,
    /// Keep every sliding w-window sum within ε: ε/w inside intervals, then
    /// the largest feasible budget on the w-1 slots after each interval,
    /// no noise beyond.
    Strict,
    /// ε/w inside intervals, no noise anywhere else.
    None,
}

/// Budget-allocation parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleConfig {
    /// Per-window privacy budget ε (the studied sweep range is 0.1–10).
    pub epsilon: f64,
    /// Window length in slots.
    pub w: u32,
    /// Global query sensitivity Δ.
    pub sensitivity: f64,
    /// Inclusive 1-based slot ranges in which the protected pattern can occur;
    /// must be sorted and non-overlapping.
    pub relevance_intervals: Vec<(u32, u32)>,
    /// Number of days, recorded for cross-day composition accounting.
    pub n_days: u32,
    pub taper_mode: TaperMode,
}

impl ScheduleConfig {
    pub fn new(epsilon: f64, w: u32, relevance_intervals: Vec<(u32, u32)>) -> Self {
        ScheduleConfig {
            epsilon,
            w,
            sensitivity: 1.0,
            relevance_intervals,
            n_days: 1,
            taper_mode: TaperMode::Table,
        }
    }

    fn validate(&self, horizon: u32) -> Result<(), DpError> {
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return Err(DpError::InvalidConfig(alloc::format!(
                "epsilon must be positive and finite, got {}",
                self.epsilon
            )));
        }
        if !self.sensitivity.is_finite() || self.sensitivity <= 0.0 {
            return Err(DpError::InvalidConfig(alloc::format!(
                "sensitivity must be positive and finite, got {}",
                self.sensitivity
            )));
        }
        if self.w < 1 {
            return Err(DpError::InvalidConfig("w must be at least 1".into()));
        }
        let mut prev_end = 0u32;
        for &(start, end) in &self.relevance_intervals {
            if start < 1 || end < start {
                return Err(DpError::InvalidConfig(alloc::format!(
                    "malformed interval [{start}, {end}]"
                )));
            }
            if start <= prev_end {
                let msg = alloc::format!(
                    "intervals overlap or are unsorted near [{start}, {end}]"
                );
                return Err(match self.taper_mode {
                    TaperMode::Strict => DpError::InfeasibleSchedule(msg),
                    _ => DpError::InvalidConfig(msg),
                });
            }
            if end > horizon {
                return Err(DpError::InvalidConfig(alloc::format!(
                    "interval [{start}, {end}] exceeds horizon {horizon}"
                )));
            }
            prev_end = end;
        }
        Ok(())
    }
}

/// Per-slot budget entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BudgetEntry {
    /// Raw release: the value passes through exactly.
    NoNoise,
    /// Noisy release with per-slot budget `coeff * epsilon`.
    Budget(Coeff),
}

/// Budget schedule over a horizon of slots.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    /// Index 0 is slot 1.
    pub entries: Vec<BudgetEntry>,
    pub epsilon: f64,
    pub sensitivity: f64,
    /// Cross-day sequential-composition factor (the number of days n): total
    /// budget spent over all days is n times the per-day window budget.
    pub composition_factor: u32,
}

impl NoiseSchedule {
    pub fn horizon(&self) -> u32 {
        self.entries.len() as u32
    }

    pub fn entry(&self, slot: u32) -> Option<BudgetEntry> {
        self.entries.get(slot as usize - 1).copied()
    }

    /// Exact budget coefficient at a slot; `None` for no-noise slots.
    pub fn coeff_at(&self, slot: u32) -> Option<Coeff> {
        match self.entry(slot) {
            Some(BudgetEntry::Budget(c)) => Some(c),
            _ => None,
        }
    }

    /// Per-slot budget ε_t; `None` for no-noise slots.
    pub fn epsilon_at(&self, slot: u32) -> Option<f64> {
        self.coeff_at(slot).map(|c| coeff_to_f64(c) * self.epsilon)
    }

    /// Laplace scale b_t = Δ / ε_t; `None` for no-noise slots.
    pub fn scale_at(&self, slot: u32) -> Option<f64> {
        self.epsilon_at(slot).map(|e| self.sensitivity / e)
    }
}

pub fn coeff_to_f64(c: Coeff) -> f64 {
    *c.numer() as f64 / *c.denom() as f64
}

/// Sanitized counts: noisy where the schedule spends budget, exact where it
/// does not, undefined slots carried through.
#[derive(Clone, Debug, PartialEq)]
pub struct SanitizedSeries {
    pub values: Vec<Option<f64>>,
    pub schedule: NoiseSchedule,
    pub seed: u64,
}

impl SanitizedSeries {
    pub fn value_at(&self, slot: u32) -> Option<f64> {
        self.values.get(slot as usize - 1).copied().flatten()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DpError {
    InvalidConfig(String),
    InfeasibleSchedule(String),
    HorizonMismatch { schedule_slots: u32, series_slots: u32 },
    InvalidScale(f64),
}

impl fmt::Display for DpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DpError::InvalidConfig(m) => write!(f, "invalid schedule config: {m}"),
            DpError::InfeasibleSchedule(m) => write!(f, "infeasible schedule: {m}"),
            DpError::HorizonMismatch { schedule_slots, series_slots } => write!(
                f,
                "schedule covers {schedule_slots} slots but the series has {series_slots}"
            ),
            DpError::InvalidScale(s) => write!(f, "Laplace scale must be positive, got {s}"),
        }
    }
}

impl core::error::Error for DpError {}

/// Allocate per-slot budgets over `horizon` slots according to the taper mode.
pub fn allocate_budget(config: &ScheduleConfig, horizon: u32) -> Result<NoiseSchedule, DpError> {
    config.validate(horizon)?;
    let w = i64::from(config.w);
    let interval_coeff = Ratio::new(1, w);
    let in_interval =
        |slot: u32| config.relevance_intervals.iter().any(|&(s, e)| slot >= s && slot <= e);

    let entries: Vec<BudgetEntry> = match config.taper_mode {
        TaperMode::None => (1..=horizon)
            .map(|slot| {
                if in_interval(slot) {
                    BudgetEntry::Budget(interval_coeff)
                } else {
                    BudgetEntry::NoNoise
                }
            })
            .collect(),
        TaperMode::Table => (1..=horizon)
            .map(|slot| {
                if in_interval(slot) {
                    return BudgetEntry::Budget(interval_coeff);
                }
                // taper: first slot after an interval gets ε/2, the second ε;
                // where tapers of two intervals overlap the smaller (noisier)
                // coefficient wins
                let taper = config
                    .relevance_intervals
                    .iter()
                    .filter_map(|&(_, end)| {
                        if slot == end + 1 {
                            Some(Ratio::new(1, 2))
                        } else if slot == end + 2 {
                            Some(Ratio::new(1, 1))
                        } else {
                            None
                        }
                    })
                    .min();
                match taper {
                    Some(c) => BudgetEntry::Budget(c),
                    None => BudgetEntry::NoNoise,
                }
            })
            .collect(),
        TaperMode::Strict => allocate_strict(config, horizon, interval_coeff, &in_interval)?,
    };

    Ok(NoiseSchedule {
        entries,
        epsilon: config.epsilon,
        sensitivity: config.sensitivity,
        composition_factor: config.n_days,
    })
}

/// Strict mode: fix ε/w on interval slots, then walk the w-1 taper slots after
/// each interval left to right, giving each the largest coefficient that keeps
/// every sliding window sum at or below 1 (in units of ε), accounting for both
/// already-assigned slots and upcoming interval slots.
fn allocate_strict(
    config: &ScheduleConfig,
    horizon: u32,
    interval_coeff: Coeff,
    in_interval: &dyn Fn(u32) -> bool,
) -> Result<Vec<BudgetEntry>, DpError> {
    let w = config.w;
    let n = horizon as usize;
    let mut coeffs: Vec<Option<Coeff>> = alloc::vec![None; n];
    for slot in 1..=horizon {
        if in_interval(slot) {
            coeffs[slot as usize - 1] = Some(interval_coeff);
        }
    }
    let in_taper_zone = |slot: u32| {
        config
            .relevance_intervals
            .iter()
            .any(|&(_, end)| slot > end && slot <= end.saturating_add(w - 1))
    };
    // sliding windows, clamped to the horizon (a horizon shorter than w is a
    // single window covering everything)
    let window_starts = 1..=horizon.saturating_sub(w).wrapping_add(1).max(1);
    let windows: Vec<(u32, u32)> = window_starts
        .map(|start| (start, (start + w - 1).min(horizon)))
        .collect();
    let window_sum = |coeffs: &[Option<Coeff>], (start, end): (u32, u32)| -> Coeff {
        (start..=end)
            .filter_map(|s| coeffs[s as usize - 1])
            .fold(Ratio::new(0, 1), |acc, c| acc + c)
    };

    for slot in 1..=horizon {
        if coeffs[slot as usize - 1].is_some() || !in_taper_zone(slot) {
            continue;
        }
        let committed = windows
            .iter()
            .filter(|&&(s, e)| slot >= s && slot <= e)
            .map(|&win| window_sum(&coeffs, win))
            .max()
            .unwrap_or_else(|| Ratio::new(0, 1));
        let free = Ratio::new(1, 1) - committed;
        if free > Ratio::new(0, 1) {
            coeffs[slot as usize - 1] = Some(free);
        }
    }

    // defensive re-check of the construction invariant
    for &win in &windows {
        if window_sum(&coeffs, win) > Ratio::new(1, 1) {
            return Err(DpError::InfeasibleSchedule(alloc::format!(
                "window starting at slot {} exceeds the budget",
                win.0
            )));
        }
    }

    Ok(coeffs
        .into_iter()
        .map(|c| match c {
            Some(c) => BudgetEntry::Budget(c),
            None => BudgetEntry::NoNoise,
        })
        .collect())
}

/// Pure inverse-CDF transform of one uniform draw into a Laplace(0, scale)
/// sample; u = 0.5 maps to exactly 0.
pub fn laplace_from_uniform(u: f64, scale: f64) -> f64 {
    let x = u - 0.5;
    let sign = if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    };
    -scale * sign * libm::log(1.0 - 2.0 * libm::fabs(x))
}

/// One Laplace(0, scale) sample from the generator.
pub fn sample_laplace(scale: f64, rng: &mut DetRng) -> Result<f64, DpError> {
    if !scale.is_finite() || scale <= 0.0 {
        return Err(DpError::InvalidScale(scale));
    }
    Ok(laplace_from_uniform(rng.open_f64(), scale))
}

/// Apply the schedule to a count series. Draws are consumed in slot order at
/// noisy defined slots only, so a fixed seed reproduces the series exactly.
pub fn sanitize(
    q: &CountSeries,
    schedule: &NoiseSchedule,
    seed: u64,
) -> Result<SanitizedSeries, DpError> {
    if schedule.horizon() < q.horizon() {
        return Err(DpError::HorizonMismatch {
            schedule_slots: schedule.horizon(),
            series_slots: q.horizon(),
        });
    }
    let mut rng = DetRng::new(seed);
    let mut values = Vec::with_capacity(q.values.len());
    for (i, v) in q.values.iter().enumerate() {
        let slot = i as u32 + 1;
        let out = match v {
            None => None,
            Some(count) => {
                let exact = *count as f64;
                match schedule.entry(slot).expect("slot within schedule horizon") {
                    BudgetEntry::NoNoise => Some(exact),
                    BudgetEntry::Budget(_) => {
                        let scale = schedule.scale_at(slot).expect("budget entry has a scale");
                        Some(exact + sample_laplace(scale, &mut rng)?)
                    }
                }
            }
        };
        values.push(out);
    }
    Ok(SanitizedSeries { values, schedule: schedule.clone(), seed })
}

/// A sliding window whose spent budget exceeds the allowance.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowViolation {
    /// First slot of the window (1-based).
    pub start: u32,
    /// Last slot (inclusive, clamped to the horizon).
    pub end: u32,
    /// Exact spent budget in units of the schedule's ε.
    pub spent_coeff: Coeff,
    pub spent_epsilon: f64,
}

/// Both readings of window budget accounting (no-noise slots as zero spend
/// vs. as unbounded spend); which one the taper formally satisfies is an open
/// point, so the check reports both.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowCheckReport {
    /// Windows whose sum of per-slot budgets exceeds ε, counting no-noise
    /// slots as spending nothing.
    pub violations: Vec<WindowViolation>,
    /// Starts of windows containing at least one no-noise slot: under the
    /// alternative reading a raw release spends unbounded budget, breaking
    /// every window that contains one.
    pub unbounded_windows: Vec<u32>,
}

/// Scan every length-w window of the schedule against a budget of `epsilon`.
/// When `epsilon` equals the schedule's own ε the comparison is exact
/// (rational); otherwise it falls back to floating point.
pub fn window_budget_check(schedule: &NoiseSchedule, w: u32, epsilon: f64) -> WindowCheckReport {
    let horizon = schedule.horizon();
    let mut violations = Vec::new();
    let mut unbounded = Vec::new();
    if horizon == 0 || w == 0 {
        return WindowCheckReport { violations, unbounded_windows: unbounded };
    }
    let exact_mode = epsilon == schedule.epsilon;
    let last_start = horizon.saturating_sub(w).wrapping_add(1).max(1);
    for start in 1..=last_start {
        let end = (start + w - 1).min(horizon);
        let mut spent = Ratio::new(0, 1);
        let mut has_no_noise = false;
        for slot in start..=end {
            match schedule.entry(slot).expect("slot within horizon") {
                BudgetEntry::NoNoise => has_no_noise = true,
                BudgetEntry::Budget(c) => spent += c,
            }
        }
        if has_no_noise {
            unbounded.push(start);
        }
        let over = if exact_mode {
            spent > Ratio::new(1, 1)
        } else {
            coeff_to_f64(spent) * schedule.epsilon > epsilon
        };
        if over {
            violations.push(WindowViolation {
                start,
                end,
                spent_coeff: spent,
                spent_epsilon: coeff_to_f64(spent) * schedule.epsilon,
            });
        }
    }
    WindowCheckReport { violations, unbounded_windows: unbounded }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cep::SequencePattern;

    fn table_config(epsilon: f64) -> ScheduleConfig {
        ScheduleConfig::new(epsilon, 3, alloc::vec![(1, 4)])
    }

    fn coeffs(schedule: &NoiseSchedule) -> Vec<Option<Coeff>> {
        (1..=schedule.horizon()).map(|s| schedule.coeff_at(s)).collect()
    }

    #[test]
    fn table_mode_reproduces_the_published_shape() {
        for epsilon in [0.1, 1.0, 10.0] {
            let schedule = allocate_budget(&table_config(epsilon), 7).unwrap();
            assert_eq!(
                coeffs(&schedule),
                alloc::vec![
                    Some(Ratio::new(1, 3)),
                    Some(Ratio::new(1, 3)),
                    Some(Ratio::new(1, 3)),
                    Some(Ratio::new(1, 3)),
                    Some(Ratio::new(1, 2)),
                    Some(Ratio::new(1, 1)),
                    None,
                ]
            );
            // per-slot budgets and scales follow (ε/3 only up to rounding of
            // the 1/3 coefficient)
            let eps_1 = schedule.epsilon_at(1).unwrap();
            assert!((eps_1 - epsilon / 3.0).abs() <= f64::EPSILON * epsilon);
            assert_eq!(schedule.epsilon_at(5), Some(epsilon / 2.0));
            assert_eq!(schedule.epsilon_at(6), Some(epsilon));
            assert_eq!(schedule.epsilon_at(7), None);
            assert_eq!(schedule.scale_at(6), Some(1.0 / epsilon));
        }
    }

    #[test]
    fn no_intervals_means_no_noise_anywhere() {
        for mode in [TaperMode::Table, TaperMode::Strict, TaperMode::None] {
            let mut cfg = ScheduleConfig::new(1.0, 3, alloc::vec![]);
            cfg.taper_mode = mode;
            let schedule = allocate_budget(&cfg, 7).unwrap();
            assert!(schedule.entries.iter().all(|e| *e == BudgetEntry::NoNoise));
        }
    }

    #[test]
    fn strict_mode_on_the_table_config() {
        let mut cfg = table_config(1.0);
        cfg.taper_mode = TaperMode::Strict;
        let schedule = allocate_budget(&cfg, 7).unwrap();
        let third = Some(Ratio::new(1, 3));
        assert_eq!(
            coeffs(&schedule),
            alloc::vec![third, third, third, third, third, third, None]
        );
        assert!(window_budget_check(&schedule, 3, 1.0).violations.is_empty());
    }

    #[test]
    fn strict_mode_respects_upcoming_intervals() {
        // two intervals with a two-slot gap: the taper between them must
        // leave room for the second interval's fixed ε/3 slots
        let mut cfg = ScheduleConfig::new(1.0, 3, alloc::vec![(1, 2), (5, 6)]);
        cfg.taper_mode = TaperMode::Strict;
        let schedule = allocate_budget(&cfg, 8).unwrap();
        let report = window_budget_check(&schedule, 3, 1.0);
        assert!(report.violations.is_empty(), "{report:?}");
        // taper slots 3 and 4 got something, slot 8 (beyond both zones) did not
        assert!(schedule.coeff_at(3).is_some());
        assert!(schedule.coeff_at(4).is_some());
        assert_eq!(schedule.coeff_at(8), Some(Ratio::new(1, 3))); // zone of [5,6]
    }

    #[test]
    fn none_mode_confines_noise_to_intervals() {
        let mut cfg = table_config(1.0);
        cfg.taper_mode = TaperMode::None;
        let schedule = allocate_budget(&cfg, 7).unwrap();
        assert_eq!(schedule.coeff_at(4), Some(Ratio::new(1, 3)));
        assert_eq!(schedule.coeff_at(5), None);
    }

    #[test]
    fn overlapping_intervals_rejected() {
        let cfg = ScheduleConfig::new(1.0, 3, alloc::vec![(1, 4), (4, 6)]);
        assert!(matches!(
            allocate_budget(&cfg, 7),
            Err(DpError::InvalidConfig(_))
        ));
        let mut strict = cfg;
        strict.taper_mode = TaperMode::Strict;
        assert!(matches!(
            allocate_budget(&strict, 7),
            Err(DpError::InfeasibleSchedule(_))
        ));
    }

    #[test]
    fn interval_beyond_horizon_rejected() {
        let cfg = ScheduleConfig::new(1.0, 3, alloc::vec![(1, 9)]);
        assert!(matches!(allocate_budget(&cfg, 7), Err(DpError::InvalidConfig(_))));
    }

    #[test]
    fn median_uniform_maps_to_zero() {
        assert_eq!(laplace_from_uniform(0.5, 3.0), 0.0);
        assert!(laplace_from_uniform(0.9, 1.0) > 0.0);
        assert!(laplace_from_uniform(0.1, 1.0) < 0.0);
    }

    #[test]
    fn invalid_scale_rejected() {
        let mut rng = DetRng::new(1);
        assert!(matches!(sample_laplace(0.0, &mut rng), Err(DpError::InvalidScale(_))));
        assert!(matches!(sample_laplace(-1.0, &mut rng), Err(DpError::InvalidScale(_))));
        assert!(matches!(
            sample_laplace(f64::INFINITY, &mut rng),
            Err(DpError::InvalidScale(_))
        ));
    }

    #[test]
    fn fixed_seed_reproduces_samples() {
        let mut a = DetRng::new(42);
        let mut b = DetRng::new(42);
        for _ in 0..100 {
            assert_eq!(
                sample_laplace(2.0, &mut a).unwrap().to_bits(),
                sample_laplace(2.0, &mut b).unwrap().to_bits()
            );
        }
    }

    fn table_series() -> CountSeries {
        CountSeries {
            values: alloc::vec![None, None, Some(2), Some(1), Some(0), Some(0), Some(1)],
            n_days: 3,
            pattern: SequencePattern::from_activities(&["swallow", "drink", "lay down"], Some(3))
                .unwrap(),
        }
    }

    #[test]
    fn sanitize_noises_scheduled_slots_and_passes_the_rest() {
        let schedule = allocate_budget(&table_config(1.0), 7).unwrap();
        let q = table_series();
        let m = sanitize(&q, &schedule, 42).unwrap();
        assert_eq!(m.values[0], None);
        assert_eq!(m.values[1], None);
        for slot in [3u32, 4, 5, 6] {
            let noisy = m.value_at(slot).unwrap();
            let exact = q.value_at(slot).unwrap() as f64;
            assert_ne!(noisy, exact, "slot {slot} should be perturbed");
        }
        // outside the relevance interval and taper: exact release
        assert_eq!(m.value_at(7), Some(1.0));
        assert_eq!(m.seed, 42);
    }

    #[test]
    fn all_no_noise_schedule_is_identity() {
        let cfg = ScheduleConfig::new(1.0, 3, alloc::vec![]);
        let schedule = allocate_budget(&cfg, 7).unwrap();
        let q = table_series();
        let m = sanitize(&q, &schedule, 7).unwrap();
        let expect: Vec<Option<f64>> =
            q.values.iter().map(|v| v.map(|c| c as f64)).collect();
        assert_eq!(m.values, expect);
    }

    #[test]
    fn horizon_mismatch_rejected() {
        let schedule = allocate_budget(&table_config(1.0), 5).unwrap();
        let q = table_series();
        assert!(matches!(
            sanitize(&q, &schedule, 1),
            Err(DpError::HorizonMismatch { schedule_slots: 5, series_slots: 7 })
        ));
    }

    #[test]
    fn window_check_reports_the_table_mode_overruns_exactly() {
        let schedule = allocate_budget(&table_config(1.0), 7).unwrap();
        let report = window_budget_check(&schedule, 3, 1.0);
        let spent: Vec<(u32, Coeff)> =
            report.violations.iter().map(|v| (v.start, v.spent_coeff)).collect();
        assert_eq!(
            spent,
            alloc::vec![
                (3, Ratio::new(7, 6)),
                (4, Ratio::new(11, 6)),
                (5, Ratio::new(3, 2)),
            ]
        );
        // the [t4, t6] window spends exactly 11ε/6
        let v = &report.violations[1];
        assert_eq!((v.start, v.end), (4, 6));
        assert_eq!(v.spent_coeff, Ratio::new(11, 6));
        // windows touching the raw slot t7 appear in the unbounded tally
        assert_eq!(report.unbounded_windows, alloc::vec![5]);
    }

    #[test]
    fn all_no_noise_schedule_has_no_violations() {
        let cfg = ScheduleConfig::new(1.0, 3, alloc::vec![]);
        let schedule = allocate_budget(&cfg, 7).unwrap();
        let report = window_budget_check(&schedule, 3, 1.0);
        assert!(report.violations.is_empty());
        assert_eq!(report.unbounded_windows.len(), 5);
    }
}
