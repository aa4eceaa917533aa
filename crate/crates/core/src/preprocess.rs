//! Cleaning of raw click logs before estimation.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::serp::ClickEvent;

pub const DAY_MS: i64 = 86_400_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PreprocessConfig {
    /// Days after a participant's first event during which clicks are ignored.
    pub burn_in_days: u32,
    /// Drop generic-result clicks whose original rank is unknown.
    pub drop_invalid_classification: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            burn_in_days: 4,
            drop_invalid_classification: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DropReport {
    pub input: usize,
    pub kept: usize,
    pub burn_in: usize,
    pub unclassifiable: usize,
}

impl DropReport {
    pub fn dropped(&self) -> usize {
        self.burn_in + self.unclassifiable
    }
}

/// Applies the per-participant burn-in and drops unclassifiable clicks.
///
/// The burn-in window starts at each user's earliest event of any kind. An
/// event inside the window counts as a burn-in drop even if it is also
/// unclassifiable, so each dropped event has exactly one reason. Input order
/// is preserved.
pub fn preprocess(events: Vec<ClickEvent>, config: &PreprocessConfig) -> (Vec<ClickEvent>, DropReport) {
    let mut first_seen: HashMap<&str, i64> = HashMap::new();
    for e in &events {
        first_seen
            .entry(e.user_id.as_str())
            .and_modify(|t| *t = (*t).min(e.timestamp))
            .or_insert(e.timestamp);
    }
    let window = i64::from(config.burn_in_days) * DAY_MS;
    let cutoffs: Vec<i64> = events
        .iter()
        .map(|e| first_seen[e.user_id.as_str()].saturating_add(window))
        .collect();

    let mut report = DropReport {
        input: events.len(),
        ..DropReport::default()
    };
    let kept: Vec<ClickEvent> = events
        .into_iter()
        .zip(cutoffs)
        .filter(|(e, cutoff)| {
            if e.timestamp < *cutoff {
                report.burn_in += 1;
                false
            } else if config.drop_invalid_classification && e.is_unclassifiable() {
                report.unclassifiable += 1;
                false
            } else {
                true
            }
        })
        .map(|(e, _)| e)
        .collect();
    report.kept = kept.len();
    (kept, report)
}
