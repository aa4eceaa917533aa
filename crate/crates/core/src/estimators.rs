//! Click-through-rate estimates and the causal quantities built on them.
//!
//! `CTR^i(a)` is the share of all clicks in treatment group `a` that land on
//! `c_i`, the result ranked `i` on the unmodified page. The performativity
//! gap compares two groups at one position; algorithmic distortion divides
//! the gap magnitude by the reference share.

use std::borrow::Borrow;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::serp::{ArrangementId, ClickEvent, ElementKind};
use crate::sim::item_rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("no events in group {0}")]
    EmptyGroup(ArrangementId),
    #[error("distortion undefined: reference share of c_{position} under {reference} is zero")]
    UndefinedDistortion {
        reference: ArrangementId,
        position: usize,
    },
    #[error("statistic undefined on {skipped} of {resamples} bootstrap resamples")]
    UnstableStatistic { skipped: usize, resamples: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CtrEstimate {
    pub ctr: f64,
    /// Clicks on `c_i`.
    pub hits: usize,
    /// All clicks in the group.
    pub clicks: usize,
}

/// Estimated click share of `c_i` within `group`.
pub fn ctr_hat<E: Borrow<ClickEvent>>(
    events: &[E],
    group: ArrangementId,
    i: usize,
) -> Result<CtrEstimate, EstimatorError> {
    let mut hits = 0usize;
    let mut clicks = 0usize;
    for e in events.iter().map(Borrow::borrow) {
        if e.group != group {
            continue;
        }
        clicks += 1;
        if e.original_rank == Some(i as u32) {
            hits += 1;
        }
    }
    if clicks == 0 {
        return Err(EstimatorError::EmptyGroup(group));
    }
    Ok(CtrEstimate {
        ctr: hits as f64 / clicks as f64,
        hits,
        clicks,
    })
}

/// Where a click landed, for click-share tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClickTarget {
    Generic(u32),
    /// Generic click without a known original rank.
    UnrankedGeneric,
    Kind(ElementKind),
}

impl ClickTarget {
    pub fn of(event: &ClickEvent) -> ClickTarget {
        match (event.element_kind, event.original_rank) {
            (ElementKind::GenericResult, Some(r)) => ClickTarget::Generic(r),
            (ElementKind::GenericResult, None) => ClickTarget::UnrankedGeneric,
            (kind, _) => ClickTarget::Kind(kind),
        }
    }
}

impl fmt::Display for ClickTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClickTarget::Generic(r) => write!(f, "c{r}"),
            ClickTarget::UnrankedGeneric => f.write_str("unranked"),
            ClickTarget::Kind(k) => write!(f, "{k:?}"),
        }
    }
}

/// Click share of every target within `group`. Shares sum to one.
pub fn click_shares<E: Borrow<ClickEvent>>(
    events: &[E],
    group: ArrangementId,
) -> Result<BTreeMap<ClickTarget, f64>, EstimatorError> {
    let mut counts: BTreeMap<ClickTarget, usize> = BTreeMap::new();
    let mut total = 0usize;
    for e in events.iter().map(Borrow::borrow).filter(|e| e.group == group) {
        *counts.entry(ClickTarget::of(e)).or_default() += 1;
        total += 1;
    }
    if total == 0 {
        return Err(EstimatorError::EmptyGroup(group));
    }
    Ok(counts
        .into_iter()
        .map(|(t, c)| (t, c as f64 / total as f64))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            resamples: 200,
            level: 0.95,
            seed: 0,
        }
    }
}

impl BootstrapConfig {
    pub fn with_seed(self, seed: u64) -> Self {
        BootstrapConfig { seed, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct BootstrapInterval {
    pub low: f64,
    pub high: f64,
    /// Resamples on which the statistic was undefined.
    pub skipped: usize,
}

const BOOTSTRAP_STREAM: u64 = 3;
const MAX_SKIPPED_FRACTION: f64 = 0.1;

/// Linear-interpolation percentile of sorted data, `q` in `[0, 1]`.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = q * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

/// Percentile bootstrap interval of `statistic`.
///
/// Events are resampled with replacement separately within each treatment
/// group, so every resample keeps the group sizes of the original data.
/// Resample `r` draws from its own RNG stream, which makes the interval a
/// function of `(events, config)` alone.
pub fn bootstrap_ci<E, F>(
    events: &[E],
    statistic: F,
    config: &BootstrapConfig,
) -> Result<BootstrapInterval, EstimatorError>
where
    E: Borrow<ClickEvent> + Sync,
    F: Fn(&[&ClickEvent]) -> Option<f64> + Sync,
{
    if config.resamples == 0 {
        return Err(EstimatorError::InvalidArgument(
            "at least one resample is required".into(),
        ));
    }
    if !(config.level > 0.0 && config.level < 1.0) {
        return Err(EstimatorError::InvalidArgument(format!(
            "confidence level {} outside (0, 1)",
            config.level
        )));
    }
    let mut strata: BTreeMap<ArrangementId, Vec<&ClickEvent>> = BTreeMap::new();
    for e in events.iter().map(Borrow::borrow) {
        strata.entry(e.group).or_default().push(e);
    }
    let strata: Vec<Vec<&ClickEvent>> = strata.into_values().collect();

    let values: Vec<Option<f64>> = (0..config.resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = item_rng(config.seed, BOOTSTRAP_STREAM, r as u64);
            let mut sample = Vec::with_capacity(events.len());
            for stratum in &strata {
                for _ in 0..stratum.len() {
                    sample.push(stratum[rng.random_range(0..stratum.len())]);
                }
            }
            statistic(&sample).filter(|v| v.is_finite())
        })
        .collect();

    let mut defined: Vec<f64> = values.iter().flatten().copied().collect();
    let skipped = config.resamples - defined.len();
    if defined.is_empty() || skipped as f64 > MAX_SKIPPED_FRACTION * config.resamples as f64 {
        return Err(EstimatorError::UnstableStatistic {
            skipped,
            resamples: config.resamples,
        });
    }
    defined.sort_by(f64::total_cmp);
    let alpha = 1.0 - config.level;
    Ok(BootstrapInterval {
        low: percentile(&defined, alpha / 2.0),
        high: percentile(&defined, 1.0 - alpha / 2.0),
        skipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GapEstimate {
    pub position: usize,
    pub a_ref: ArrangementId,
    pub a_alt: ArrangementId,
    pub ctr_ref: f64,
    pub ctr_alt: f64,
    pub gap: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_ref: usize,
    pub n_alt: usize,
}

impl GapEstimate {
    /// Gap from known group aggregates, without a confidence interval.
    pub fn from_aggregates(
        position: usize,
        a_ref: ArrangementId,
        ctr_ref: f64,
        n_ref: usize,
        a_alt: ArrangementId,
        ctr_alt: f64,
        n_alt: usize,
    ) -> Self {
        let gap = ctr_alt - ctr_ref;
        GapEstimate {
            position,
            a_ref,
            a_alt,
            ctr_ref,
            ctr_alt,
            gap,
            ci_low: gap,
            ci_high: gap,
            n_ref,
            n_alt,
        }
    }
}

fn two_groups<E: Borrow<ClickEvent>>(
    events: &[E],
    a: ArrangementId,
    b: ArrangementId,
) -> Vec<&ClickEvent> {
    events
        .iter()
        .map(Borrow::borrow)
        .filter(|e| e.group == a || e.group == b)
        .collect()
}

/// Performativity gap `CTR^i(alt) - CTR^i(ref)` with a stratified bootstrap
/// interval. The interval is widened if needed so that it contains the point
/// estimate.
pub fn gap_hat<E: Borrow<ClickEvent>>(
    events: &[E],
    alt: ArrangementId,
    reference: ArrangementId,
    i: usize,
    bootstrap: &BootstrapConfig,
) -> Result<GapEstimate, EstimatorError> {
    let subset = two_groups(events, alt, reference);
    let r = ctr_hat(&subset, reference, i)?;
    let a = ctr_hat(&subset, alt, i)?;
    let gap = a.ctr - r.ctr;
    let ci = bootstrap_ci(
        &subset,
        |s| Some(ctr_hat(s, alt, i).ok()?.ctr - ctr_hat(s, reference, i).ok()?.ctr),
        bootstrap,
    )?;
    Ok(GapEstimate {
        position: i,
        a_ref: reference,
        a_alt: alt,
        ctr_ref: r.ctr,
        ctr_alt: a.ctr,
        gap,
        ci_low: ci.low.min(gap),
        ci_high: ci.high.max(gap),
        n_ref: r.clicks,
        n_alt: a.clicks,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    Loss,
    Gain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DistortionEstimate {
    #[serde(flatten)]
    pub gap: GapEstimate,
    pub beta: f64,
    pub direction: Direction,
    pub beta_ci_low: f64,
    pub beta_ci_high: f64,
}

/// `beta = |gap| / ctrRef`: the fraction of the reference traffic moved.
pub fn distortion_of(gap: &GapEstimate) -> Result<(f64, Direction), EstimatorError> {
    if !(gap.ctr_ref > 0.0) {
        return Err(EstimatorError::UndefinedDistortion {
            reference: gap.a_ref,
            position: gap.position,
        });
    }
    let direction = if gap.gap < 0.0 {
        Direction::Loss
    } else {
        Direction::Gain
    };
    Ok((gap.gap.abs() / gap.ctr_ref, direction))
}

/// Algorithmic distortion of `c_i` when `reference` is replaced by `alt`.
///
/// Any ordered pair is accepted, so "adding" an element is expressed by
/// taking the arrangement that hides it as the reference.
pub fn distortion_hat<E: Borrow<ClickEvent>>(
    events: &[E],
    alt: ArrangementId,
    reference: ArrangementId,
    i: usize,
    bootstrap: &BootstrapConfig,
) -> Result<DistortionEstimate, EstimatorError> {
    let subset = two_groups(events, alt, reference);
    let reference_ctr = ctr_hat(&subset, reference, i)?;
    if reference_ctr.ctr == 0.0 {
        ctr_hat(&subset, alt, i)?;
        return Err(EstimatorError::UndefinedDistortion {
            reference,
            position: i,
        });
    }
    let gap = gap_hat(&subset, alt, reference, i, bootstrap)?;
    let (beta, direction) = distortion_of(&gap)?;
    let beta_ci = bootstrap_ci(
        &subset,
        |s| {
            let r = ctr_hat(s, reference, i).ok()?.ctr;
            let a = ctr_hat(s, alt, i).ok()?.ctr;
            (r > 0.0).then(|| (a - r).abs() / r)
        },
        bootstrap,
    )?;
    Ok(DistortionEstimate {
        gap,
        beta,
        direction,
        beta_ci_low: beta_ci.low.min(beta),
        beta_ci_high: beta_ci.high.max(beta),
    })
}

/// Lower bound on performative power: the largest gap magnitude at `c_1`
/// against the control arrangement.
pub fn pp_lower_bound(gaps: &[GapEstimate]) -> Result<f64, EstimatorError> {
    if gaps.is_empty() {
        return Err(EstimatorError::InvalidArgument("no gaps given".into()));
    }
    if let Some(g) = gaps
        .iter()
        .find(|g| g.a_ref != ArrangementId::A0 || g.position != 1)
    {
        return Err(EstimatorError::InvalidArgument(format!(
            "bound needs gaps at position 1 against a0, got position {} against {}",
            g.position, g.a_ref
        )));
    }
    Ok(gaps.iter().map(|g| g.gap.abs()).fold(0.0, f64::max))
}

/// Share of traffic to a site that the platform can redirect: the share
/// mediated by the platform times the share arriving through the affected
/// position times the distortion at that position.
pub fn compose_power(
    mediated_share: f64,
    position_share: f64,
    beta: f64,
) -> Result<f64, EstimatorError> {
    for (name, v) in [("mediatedShare", mediated_share), ("positionShare", position_share)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(EstimatorError::InvalidArgument(format!(
                "{name} = {v} outside [0, 1]"
            )));
        }
    }
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(EstimatorError::InvalidArgument(format!(
            "beta = {beta} must be finite and nonnegative"
        )));
    }
    let product = mediated_share * position_share * beta;
    if product > 1.0 {
        return Err(EstimatorError::InvalidArgument(format!(
            "composed share {product} exceeds 1"
        )));
    }
    Ok(product)
}

/// True iff a specialized result sits strictly between `c_1` and `c_2`.
///
/// `ssrPositions` index the Main-column content list (Ads and boxes left
/// out), so the content positions not listed are the generic results in
/// rank order.
pub fn ssr_between_top_two(event: &ClickEvent) -> bool {
    if event.num_results < 2 || event.ssr_positions.is_empty() {
        return false;
    }
    let ssr: BTreeSet<u32> = event.ssr_positions.iter().copied().collect();
    let mut generic = (0u32..).filter(|p| !ssr.contains(p));
    let first = generic.next().expect("unbounded range");
    let second = generic.next().expect("unbounded range");
    ssr.range(first + 1..second).next().is_some()
}

type EventFilter = Arc<dyn Fn(&ClickEvent) -> bool + Send + Sync>;

/// Named event filters for subgroup analyses.
#[derive(Clone)]
pub enum SplitPredicate {
    AdsOrBoxPresent,
    SsrBetweenTopTwo,
    Custom { name: String, filter: EventFilter },
}

impl fmt::Debug for SplitPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl SplitPredicate {
    pub fn from_name(name: &str) -> Result<Self, EstimatorError> {
        match name {
            "adsOrBoxPresent" => Ok(SplitPredicate::AdsOrBoxPresent),
            "ssrBetweenTopTwo" => Ok(SplitPredicate::SsrBetweenTopTwo),
            other => Err(EstimatorError::InvalidArgument(format!(
                "unknown split predicate `{other}`"
            ))),
        }
    }

    pub fn custom(
        name: impl Into<String>,
        filter: impl Fn(&ClickEvent) -> bool + Send + Sync + 'static,
    ) -> Self {
        SplitPredicate::Custom {
            name: name.into(),
            filter: Arc::new(filter),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            SplitPredicate::AdsOrBoxPresent => "adsOrBoxPresent",
            SplitPredicate::SsrBetweenTopTwo => "ssrBetweenTopTwo",
            SplitPredicate::Custom { name, .. } => name,
        }
    }

    pub fn matches(&self, event: &ClickEvent) -> bool {
        match self {
            SplitPredicate::AdsOrBoxPresent => event.ads_present || event.box_present,
            SplitPredicate::SsrBetweenTopTwo => ssr_between_top_two(event),
            SplitPredicate::Custom { filter, .. } => filter(event),
        }
    }
}

/// Partitions events into `(matching, rest)`.
pub fn split_by(
    events: &[ClickEvent],
    predicate: &SplitPredicate,
) -> (Vec<ClickEvent>, Vec<ClickEvent>) {
    events.iter().cloned().partition(|e| predicate.matches(e))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PercentileBin {
    pub bin: usize,
    pub key_min: u64,
    pub key_max: u64,
    pub n_events: usize,
    pub estimate: Option<DistortionEstimate>,
    /// Why `estimate` is missing.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PercentileBins {
    pub bins: Vec<PercentileBin>,
    /// Events without a candidate count.
    pub excluded: usize,
}

const MIN_KEY_COVERAGE: f64 = 0.9;

/// Equal-frequency bins of events by candidate count, with the distortion of
/// `c_1` under swap 1-2 in each bin.
pub fn percentile_bins(
    events: &[ClickEvent],
    n_bins: usize,
    bootstrap: &BootstrapConfig,
) -> Result<PercentileBins, EstimatorError> {
    let mut keyed: Vec<(u64, &ClickEvent)> = events
        .iter()
        .filter_map(|e| e.candidate_count.map(|c| (c, e)))
        .collect();
    let excluded = events.len() - keyed.len();
    if !events.is_empty() && (keyed.len() as f64) < MIN_KEY_COVERAGE * events.len() as f64 {
        return Err(EstimatorError::InvalidArgument(format!(
            "candidate count present on only {} of {} events",
            keyed.len(),
            events.len()
        )));
    }
    let distinct = keyed.iter().map(|(c, _)| *c).collect::<BTreeSet<_>>().len();
    if n_bins == 0 || n_bins > distinct {
        return Err(EstimatorError::InvalidArgument(format!(
            "{n_bins} bins requested for {distinct} distinct candidate counts"
        )));
    }
    keyed.sort_by_key(|(c, _)| *c);

    let base = keyed.len() / n_bins;
    let extra = keyed.len() % n_bins;
    let mut bins = Vec::with_capacity(n_bins);
    let mut start = 0;
    for bin in 0..n_bins {
        let len = base + usize::from(bin < extra);
        let chunk = &keyed[start..start + len];
        start += len;
        let members: Vec<&ClickEvent> = chunk.iter().map(|(_, e)| *e).collect();
        let (estimate, note) = match distortion_hat(
            &members,
            ArrangementId::A1,
            ArrangementId::A0,
            1,
            &bootstrap.with_seed(bootstrap.seed.wrapping_add(bin as u64)),
        ) {
            Ok(d) => (Some(d), None),
            Err(e) => (None, Some(e.to_string())),
        };
        bins.push(PercentileBin {
            bin,
            key_min: chunk.first().map_or(0, |(c, _)| *c),
            key_max: chunk.last().map_or(0, |(c, _)| *c),
            n_events: chunk.len(),
            estimate,
            note,
        });
    }
    Ok(PercentileBins { bins, excluded })
}
