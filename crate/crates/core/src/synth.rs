//! Synthetic feature-window generation for exercising attribute inference
//! and obfuscation end to end without real sensor data.
//!
//! Windows are unit-Gaussian feature vectors with two planted signals: a
//! one-hot group shift of configurable size (in pooled-σ units) on the first
//! `groups` dimensions, and a fixed one-hot activity shift on the next
//! `activity_classes` dimensions. Group and activity signals live in
//! disjoint dimensions, so concealing the group leaves activity
//! recognition intact.

use alloc::vec::Vec;

use crate::adversary::{AdvError, FeatureWindow};
use crate::rng::DetRng;

/// Mean shift planted for the activity signal, in σ units.
pub const ACTIVITY_AMPLITUDE: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SyntheticAttributeSpec {
    pub groups: u32,
    /// Total feature dimensions; must cover the group and activity one-hots.
    pub dims: u32,
    /// Distance each group's one-hot dimension is shifted, in σ units.
    pub mean_shift_sigmas: f64,
    pub windows_per_group: u32,
    pub activity_classes: u32,
}

impl Default for SyntheticAttributeSpec {
    fn default() -> Self {
        SyntheticAttributeSpec {
            groups: 2,
            dims: 8,
            mean_shift_sigmas: 2.0,
            windows_per_group: 200,
            activity_classes: 4,
        }
    }
}

impl SyntheticAttributeSpec {
    fn validate(&self) -> Result<(), AdvError> {
        if self.groups < 2 {
            return Err(AdvError::InvalidSpec("need at least two groups".into()));
        }
        if self.windows_per_group == 0 {
            return Err(AdvError::InvalidSpec("windows_per_group must be positive".into()));
        }
        if self.activity_classes == 0 {
            return Err(AdvError::InvalidSpec("activity_classes must be positive".into()));
        }
        if self.dims < self.groups + self.activity_classes {
            return Err(AdvError::InvalidSpec(alloc::format!(
                "{} dims cannot hold {} group and {} activity one-hots",
                self.dims, self.groups, self.activity_classes
            )));
        }
        if !self.mean_shift_sigmas.is_finite() || self.mean_shift_sigmas < 0.0 {
            return Err(AdvError::InvalidSpec(alloc::format!(
                "mean shift {} must be non-negative and finite",
                self.mean_shift_sigmas
            )));
        }
        Ok(())
    }
}

/// Deterministically generate labeled feature windows. Activities cycle
/// within each group so every (group, activity) cell is equally populated;
/// window ids are sequential.
pub fn generate_synthetic_attributes(
    spec: &SyntheticAttributeSpec,
    rng: &mut DetRng,
) -> Result<Vec<FeatureWindow>, AdvError> {
    spec.validate()?;
    let dims = spec.dims as usize;
    let mut out = Vec::with_capacity((spec.groups as usize) * (spec.windows_per_group as usize));
    let mut id = 0u64;
    for g in 0..spec.groups {
        for i in 0..spec.windows_per_group {
            let a = i % spec.activity_classes;
            let mut features: Vec<f64> = (0..dims).map(|_| rng.gaussian()).collect();
            features[g as usize] += spec.mean_shift_sigmas;
            features[(spec.groups + a) as usize] += ACTIVITY_AMPLITUDE;
            out.push(FeatureWindow {
                window_id: id,
                features,
                group: alloc::format!("group{g}"),
                activity: alloc::format!("activity{a}"),
            });
            id += 1;
        }
    }
    Ok(out)
}
