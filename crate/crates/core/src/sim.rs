//! Synthetic query population and a position-based click model.
//!
//! The model assigns each displayed element the weight
//! `examination(slot) * attractiveness(element)`; a click lands on an element
//! with probability proportional to its weight, with `noClickWeight` as the
//! weight of abandoning the page. Because these probabilities are exact,
//! the model doubles as a brute-force oracle for click-through rates,
//! performativity gaps and performative power, and as an event generator.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::arrangement::{self, ArrangementError};
use crate::assignment::ExperimentConfig;
use crate::config::{ConfigError, KvConfig};
use crate::serp::{
    ArrangementId, ClickEvent, Column, ElementId, ElementKind, Engine, SerpSnapshot, Slot,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate click model: {0}")]
    DegenerateModel(String),
    #[error(transparent)]
    Arrangement(#[from] ArrangementError),
}

/// Parameters of the examination x attractiveness click model.
#[derive(Debug, Clone, PartialEq)]
pub struct ClickModelParams {
    /// Examination weight by Main-column index; indices past the end get 0.
    pub main_examination: Vec<f64>,
    /// Examination weight by Sidebar index; indices past the end get 0.
    pub sidebar_examination: Vec<f64>,
    pub ad_attractiveness: f64,
    pub box_attractiveness: f64,
    pub no_click_weight: f64,
    /// Raises examination weights to the power
    /// `1 + candidate_sensitivity * log10(candidateCount)`, which makes the
    /// position decay steeper on pages with more candidate results.
    /// Zero disables the dependence.
    pub candidate_sensitivity: f64,
}

impl Default for ClickModelParams {
    fn default() -> Self {
        ClickModelParams {
            main_examination: vec![
                1.0, 0.7, 0.5, 0.38, 0.3, 0.25, 0.21, 0.18, 0.16, 0.14, 0.12, 0.11, 0.1, 0.09,
                0.08, 0.07,
            ],
            sidebar_examination: vec![0.3, 0.2, 0.1],
            ad_attractiveness: 0.4,
            box_attractiveness: 0.8,
            no_click_weight: 0.5,
            candidate_sensitivity: 0.0,
        }
    }
}

impl ClickModelParams {
    /// Reads `clickModel.*` keys, falling back to defaults.
    pub fn from_kv(cfg: &KvConfig) -> Result<Self, ConfigError> {
        let d = ClickModelParams::default();
        let params = ClickModelParams {
            main_examination: cfg
                .f64_list("clickModel.examination.main")?
                .unwrap_or(d.main_examination),
            sidebar_examination: cfg
                .f64_list("clickModel.examination.sidebar")?
                .unwrap_or(d.sidebar_examination),
            ad_attractiveness: cfg.parsed_or("clickModel.adAttractiveness", d.ad_attractiveness)?,
            box_attractiveness: cfg
                .parsed_or("clickModel.boxAttractiveness", d.box_attractiveness)?,
            no_click_weight: cfg.parsed_or("clickModel.noClickWeight", d.no_click_weight)?,
            candidate_sensitivity: cfg
                .parsed_or("clickModel.candidateSensitivity", d.candidate_sensitivity)?,
        };
        params
            .validate()
            .map_err(|e| ConfigError::invalid("clickModel", e.to_string()))?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let scalars = [
            ("adAttractiveness", self.ad_attractiveness),
            ("boxAttractiveness", self.box_attractiveness),
            ("noClickWeight", self.no_click_weight),
            ("candidateSensitivity", self.candidate_sensitivity),
        ];
        let lists = self
            .main_examination
            .iter()
            .chain(&self.sidebar_examination)
            .map(|&w| ("examination", w));
        for (name, w) in scalars.into_iter().chain(lists) {
            if !w.is_finite() || w < 0.0 {
                return Err(SimError::InvalidArgument(format!(
                    "{name} must be finite and nonnegative, got {w}"
                )));
            }
        }
        Ok(())
    }

    pub fn examination(&self, slot: Slot, candidate_count: Option<u64>) -> f64 {
        let table = match slot.column {
            Column::Main => &self.main_examination,
            Column::Sidebar => &self.sidebar_examination,
        };
        let base = table.get(slot.index as usize).copied().unwrap_or(0.0);
        if self.candidate_sensitivity == 0.0 {
            return base;
        }
        let magnitude = candidate_count.map_or(0.0, |c| (c.max(1) as f64).log10());
        base.powf(1.0 + self.candidate_sensitivity * magnitude)
    }
}

/// One query of the synthetic population: its unmodified page plus the
/// relevance of each result.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticQuery {
    pub query_id: String,
    pub engine: Engine,
    pub snapshot: SerpSnapshot,
    /// Attractiveness of generic (and specialized) results.
    pub relevance: BTreeMap<ElementId, f64>,
}

impl SyntheticQuery {
    /// Query whose page is `relevance.len()` generic results and nothing else.
    pub fn generic_only(query_id: impl Into<String>, relevance: &[f64]) -> Self {
        let mut builder = SerpSnapshot::builder(Engine::Google);
        let mut map = BTreeMap::new();
        for (k, &r) in relevance.iter().enumerate() {
            let id = format!("g{}", k + 1);
            map.insert(ElementId::new(id.clone()), r);
            builder = builder.main(id, ElementKind::GenericResult);
        }
        SyntheticQuery {
            query_id: query_id.into(),
            engine: Engine::Google,
            snapshot: builder.build(),
            relevance: map,
        }
    }

    fn attractiveness(&self, params: &ClickModelParams, id: &ElementId, kind: ElementKind) -> f64 {
        match kind {
            ElementKind::Ad => params.ad_attractiveness,
            ElementKind::ShoppingBox => params.box_attractiveness,
            _ => self.relevance.get(id).copied().unwrap_or(0.0),
        }
    }
}

/// Click probabilities over the elements of one displayed page.
#[derive(Debug, Clone, PartialEq)]
pub struct ClickDistribution {
    /// Aligned with `snapshot.elements`.
    pub probabilities: Vec<f64>,
    pub no_click: f64,
    weights: Vec<f64>,
}

impl ClickDistribution {
    /// Unnormalized element weights `e_slot * attr`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Probabilities conditioned on a click happening, aligned with the
    /// snapshot's elements. `None` when no element can be clicked.
    pub fn conditional(&self) -> Option<Vec<f64>> {
        let total: f64 = self.weights.iter().sum();
        if total <= 0.0 {
            return None;
        }
        Some(self.weights.iter().map(|w| w / total).collect())
    }
}

/// Exact click distribution of `query` when its page is displayed as
/// `displayed` (the output of some arrangement of `query.snapshot`).
pub fn click_distribution(
    params: &ClickModelParams,
    query: &SyntheticQuery,
    displayed: &SerpSnapshot,
) -> Result<ClickDistribution, SimError> {
    let weights: Vec<f64> = displayed
        .elements
        .iter()
        .map(|e| {
            params.examination(e.slot, displayed.candidate_count)
                * query.attractiveness(params, &e.element_id, e.kind)
        })
        .collect();
    let total = weights.iter().sum::<f64>() + params.no_click_weight;
    if !(total > 0.0) {
        return Err(SimError::DegenerateModel(format!(
            "query {} has zero total click weight",
            query.query_id
        )));
    }
    Ok(ClickDistribution {
        probabilities: weights.iter().map(|w| w / total).collect(),
        no_click: params.no_click_weight / total,
        weights,
    })
}

fn ctr_or_zero(
    params: &ClickModelParams,
    query: &SyntheticQuery,
    arrangement: ArrangementId,
    i: usize,
) -> Result<f64, SimError> {
    let Some(target) = query.snapshot.at_generic_rank(i) else {
        return Ok(0.0);
    };
    let target = target.element_id.clone();
    let displayed = arrangement::apply(arrangement, &query.snapshot)?.snapshot;
    let conditional = click_distribution(params, query, &displayed)?
        .conditional()
        .ok_or_else(|| {
            SimError::DegenerateModel(format!("query {} can never be clicked", query.query_id))
        })?;
    Ok(displayed
        .elements
        .iter()
        .position(|e| e.element_id == target)
        .map_or(0.0, |p| conditional[p]))
}

/// Probability that a click on `query`'s page under `arrangement` lands on
/// `c_i`, the result shown at rank `i` on the unmodified page.
pub fn true_ctr(
    params: &ClickModelParams,
    query: &SyntheticQuery,
    arrangement: ArrangementId,
    i: usize,
) -> Result<f64, SimError> {
    let n = query.snapshot.num_results();
    if i == 0 || i > n {
        return Err(SimError::InvalidArgument(format!(
            "rank {i} outside 1..={n} for query {}",
            query.query_id
        )));
    }
    ctr_or_zero(params, query, arrangement, i)
}

fn require_population(population: &[SyntheticQuery]) -> Result<(), SimError> {
    if population.is_empty() {
        Err(SimError::InvalidArgument("empty population".into()))
    } else {
        Ok(())
    }
}

fn mean_over<F>(population: &[SyntheticQuery], f: F) -> Result<f64, SimError>
where
    F: Fn(&SyntheticQuery) -> Result<f64, SimError> + Sync + Send,
{
    require_population(population)?;
    let values = population
        .par_iter()
        .map(f)
        .collect::<Result<Vec<f64>, SimError>>()?;
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Exact performativity gap `mean_q CTR_q^i(alt) - CTR_q^i(ref)`. Queries
/// with fewer than `i` results contribute zero click share on both sides.
pub fn true_gap(
    params: &ClickModelParams,
    population: &[SyntheticQuery],
    alt: ArrangementId,
    reference: ArrangementId,
    i: usize,
) -> Result<f64, SimError> {
    if i == 0 {
        return Err(SimError::InvalidArgument("ranks are 1-based".into()));
    }
    mean_over(population, |q| {
        Ok(ctr_or_zero(params, q, alt, i)? - ctr_or_zero(params, q, reference, i)?)
    })
}

/// `mean_q |CTR_q^i(a0) - CTR_q^i(a)|`, the middle term between the gap and
/// performative power.
pub fn mean_abs_gap(
    params: &ClickModelParams,
    population: &[SyntheticQuery],
    arrangement: ArrangementId,
    i: usize,
) -> Result<f64, SimError> {
    mean_over(population, |q| {
        Ok((ctr_or_zero(params, q, ArrangementId::A0, i)?
            - ctr_or_zero(params, q, arrangement, i)?)
        .abs())
    })
}

/// Joint law assumed for the potential outcomes of one query under two
/// arrangements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Coupling {
    /// Outcomes drawn independently.
    Independent,
    /// Both outcomes driven by one shared uniform draw with nested intervals.
    #[default]
    CommonRandomness,
}

/// `E|z_0 - z_a|` for Bernoulli outcomes with success probabilities `p0`, `pa`.
pub fn expected_abs_difference(p0: f64, pa: f64, coupling: Coupling) -> f64 {
    match coupling {
        Coupling::Independent => p0 * (1.0 - pa) + pa * (1.0 - p0),
        Coupling::CommonRandomness => (p0 - pa).abs(),
    }
}

/// Performative power over `arrangements` for the outcome "click lands on
/// c_1", computed exactly from the click model.
pub fn true_pp(
    params: &ClickModelParams,
    population: &[SyntheticQuery],
    arrangements: &[ArrangementId],
    coupling: Coupling,
) -> Result<f64, SimError> {
    if arrangements.is_empty() {
        return Err(SimError::InvalidArgument("no arrangements".into()));
    }
    let mut best = 0.0f64;
    for &a in arrangements {
        let value = mean_over(population, |q| {
            let p0 = ctr_or_zero(params, q, ArrangementId::A0, 1)?;
            let pa = ctr_or_zero(params, q, a, 1)?;
            Ok(expected_abs_difference(p0, pa, coupling))
        })?;
        best = best.max(value);
    }
    Ok(best)
}

/// Distribution of synthetic pages and relevances.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSpec {
    pub n_queries: usize,
    pub seed: u64,
    /// Probability that a query is issued on Google rather than Bing.
    pub google_share: f64,
    pub min_results: usize,
    pub max_results: usize,
    /// Probability of one or more Ads above the results.
    pub ads_probability: f64,
    pub max_top_ads: usize,
    pub bottom_ads_probability: f64,
    pub box_probability: f64,
    /// Probability that a present Shopping box sits in the sidebar.
    pub box_sidebar_probability: f64,
    /// Probability that a specialized result is interleaved with the results.
    pub ssr_probability: f64,
    /// Candidate count is log-uniform between these powers of ten.
    pub candidate_log10_min: f64,
    pub candidate_log10_max: f64,
    /// Relevance of rank k is `decay^(k-1) * exp(noise * N(0,1))`.
    pub relevance_decay: f64,
    pub relevance_noise: f64,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        PopulationSpec {
            n_queries: 1000,
            seed: 0,
            google_share: 0.989,
            min_results: 6,
            max_results: 10,
            ads_probability: 0.3,
            max_top_ads: 3,
            bottom_ads_probability: 0.2,
            box_probability: 0.032,
            box_sidebar_probability: 0.5,
            ssr_probability: 0.3,
            candidate_log10_min: 3.0,
            candidate_log10_max: 9.5,
            relevance_decay: 0.8,
            relevance_noise: 0.3,
        }
    }
}

impl PopulationSpec {
    /// Reads `population.*` keys, falling back to defaults.
    pub fn from_kv(cfg: &KvConfig) -> Result<Self, ConfigError> {
        let d = PopulationSpec::default();
        let spec = PopulationSpec {
            n_queries: cfg.parsed_or("population.queries", d.n_queries)?,
            seed: cfg.parsed_or("population.seed", d.seed)?,
            google_share: cfg.parsed_or("population.googleShare", d.google_share)?,
            min_results: cfg.parsed_or("population.minResults", d.min_results)?,
            max_results: cfg.parsed_or("population.maxResults", d.max_results)?,
            ads_probability: cfg.parsed_or("population.adsProbability", d.ads_probability)?,
            max_top_ads: cfg.parsed_or("population.maxTopAds", d.max_top_ads)?,
            bottom_ads_probability: cfg
                .parsed_or("population.bottomAdsProbability", d.bottom_ads_probability)?,
            box_probability: cfg.parsed_or("population.boxProbability", d.box_probability)?,
            box_sidebar_probability: cfg
                .parsed_or("population.boxSidebarProbability", d.box_sidebar_probability)?,
            ssr_probability: cfg.parsed_or("population.ssrProbability", d.ssr_probability)?,
            candidate_log10_min: cfg
                .parsed_or("population.candidateLog10Min", d.candidate_log10_min)?,
            candidate_log10_max: cfg
                .parsed_or("population.candidateLog10Max", d.candidate_log10_max)?,
            relevance_decay: cfg.parsed_or("population.relevanceDecay", d.relevance_decay)?,
            relevance_noise: cfg.parsed_or("population.relevanceNoise", d.relevance_noise)?,
        };
        spec.validate()
            .map_err(|e| ConfigError::invalid("population", e.to_string()))?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for (name, p) in [
            ("googleShare", self.google_share),
            ("adsProbability", self.ads_probability),
            ("bottomAdsProbability", self.bottom_ads_probability),
            ("boxProbability", self.box_probability),
            ("boxSidebarProbability", self.box_sidebar_probability),
            ("ssrProbability", self.ssr_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SimError::InvalidArgument(format!(
                    "{name} = {p} is not a probability"
                )));
            }
        }
        if self.min_results == 0 || self.min_results > self.max_results {
            return Err(SimError::InvalidArgument(
                "need 1 <= minResults <= maxResults".into(),
            ));
        }
        if !(self.candidate_log10_min <= self.candidate_log10_max)
            || self.candidate_log10_min < 0.0
            || self.candidate_log10_max > 18.0
        {
            return Err(SimError::InvalidArgument(
                "candidate count range must satisfy 0 <= min <= max <= 18".into(),
            ));
        }
        if !(self.relevance_decay > 0.0) || !(self.relevance_noise >= 0.0) {
            return Err(SimError::InvalidArgument(
                "relevanceDecay must be positive and relevanceNoise nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Independent RNG per work item, so results do not depend on scheduling.
pub(crate) fn item_rng(seed: u64, stream: u64, item: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(u128::from(item) << 20);
    rng
}

const POPULATION_STREAM: u64 = 1;
const EVENT_STREAM: u64 = 2;

pub fn generate_population(spec: &PopulationSpec) -> Result<Vec<SyntheticQuery>, SimError> {
    spec.validate()?;
    Ok((0..spec.n_queries)
        .into_par_iter()
        .map(|k| generate_query(spec, k))
        .collect())
}

fn generate_query(spec: &PopulationSpec, k: usize) -> SyntheticQuery {
    let mut rng = item_rng(spec.seed, POPULATION_STREAM, k as u64);
    let engine = if rng.random_bool(spec.google_share) {
        Engine::Google
    } else {
        Engine::Bing
    };
    let n_results = rng.random_range(spec.min_results..=spec.max_results);
    let top_ads = if spec.max_top_ads > 0 && rng.random_bool(spec.ads_probability) {
        rng.random_range(1..=spec.max_top_ads)
    } else {
        0
    };
    let bottom_ad = rng.random_bool(spec.bottom_ads_probability);
    let shopping_box = rng.random_bool(spec.box_probability);
    let box_in_sidebar = shopping_box && rng.random_bool(spec.box_sidebar_probability);
    // position among the results before which the specialized result sits
    let ssr_before = rng
        .random_bool(spec.ssr_probability)
        .then(|| rng.random_range(1..=n_results));
    let log10 = rng.random_range(spec.candidate_log10_min..=spec.candidate_log10_max);
    let candidate_count = 10f64.powf(log10).round() as u64;

    let mut relevance = BTreeMap::new();
    let draw_relevance = |rank: usize, rng: &mut ChaCha8Rng| {
        let noise: f64 = rng.sample(StandardNormal);
        spec.relevance_decay.powi(rank as i32 - 1) * (spec.relevance_noise * noise).exp()
    };

    let mut b = SerpSnapshot::builder(engine).candidate_count(Some(candidate_count));
    for a in 0..top_ads {
        b = b.main(format!("ad{}", a + 1), ElementKind::Ad);
    }
    if shopping_box && !box_in_sidebar {
        b = b.main("box", ElementKind::ShoppingBox);
    }
    for rank in 1..=n_results {
        if ssr_before == Some(rank) {
            relevance.insert(ElementId::new("ssr"), draw_relevance(rank, &mut rng));
            b = b.main("ssr", ElementKind::SpecializedResult);
        }
        let id = format!("g{rank}");
        relevance.insert(ElementId::new(id.clone()), draw_relevance(rank, &mut rng));
        b = b.main(id, ElementKind::GenericResult);
    }
    if bottom_ad {
        b = b.main("adb", ElementKind::Ad);
    }
    if box_in_sidebar {
        b = b.sidebar("box", ElementKind::ShoppingBox);
    }
    SyntheticQuery {
        query_id: format!("q{k:06}"),
        engine,
        snapshot: b.build(),
        relevance,
    }
}

/// How sampled events are spread over users and time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingPlan {
    pub n_events: usize,
    pub seed: u64,
    pub n_users: usize,
    pub start_ms: i64,
    pub span_ms: i64,
}

impl SamplingPlan {
    pub fn new(n_events: usize, seed: u64) -> Self {
        SamplingPlan {
            n_events,
            seed,
            n_users: 10_000,
            start_ms: 1_693_526_400_000, // 2023-09-01T00:00:00Z
            span_ms: 150 * 86_400_000,
        }
    }
}

/// A query/arrangement pair prepared for repeated sampling.
struct PreparedPage {
    cumulative: Vec<f64>,
    displayed: SerpSnapshot,
}

/// Samples click events: each event draws a query and a user, routes the
/// pair through hash assignment, applies the arrangement and draws the
/// clicked element conditioned on a click occurring.
pub fn sample_events(
    params: &ClickModelParams,
    population: &[SyntheticQuery],
    experiment: &ExperimentConfig,
    plan: &SamplingPlan,
) -> Result<Vec<ClickEvent>, SimError> {
    if plan.n_events == 0 {
        return Ok(Vec::new());
    }
    require_population(population)?;
    if plan.n_users == 0 {
        return Err(SimError::InvalidArgument("need at least one user".into()));
    }
    params.validate()?;

    let prepared: Vec<BTreeMap<ArrangementId, PreparedPage>> = population
        .par_iter()
        .map(|q| {
            let mut pages = BTreeMap::new();
            for &(group, w) in experiment.weights(q.engine).weights() {
                if w <= 0.0 {
                    continue;
                }
                let displayed = arrangement::apply(group, &q.snapshot)?.snapshot;
                let conditional = click_distribution(params, q, &displayed)?
                    .conditional()
                    .ok_or_else(|| {
                        SimError::DegenerateModel(format!("query {} can never be clicked", q.query_id))
                    })?;
                let cumulative = conditional
                    .iter()
                    .scan(0.0, |acc, p| {
                        *acc += p;
                        Some(*acc)
                    })
                    .collect();
                pages.insert(
                    group,
                    PreparedPage {
                        cumulative,
                        displayed,
                    },
                );
            }
            Ok(pages)
        })
        .collect::<Result<_, SimError>>()?;

    Ok((0..plan.n_events)
        .into_par_iter()
        .map(|k| {
            let mut rng = item_rng(plan.seed, EVENT_STREAM, k as u64);
            let qi = rng.random_range(0..population.len());
            let query = &population[qi];
            let user_id = format!("user-{:05}", rng.random_range(0..plan.n_users));
            let group = experiment.assign(&user_id, &query.query_id, query.engine);
            let page = &prepared[qi][&group];
            let u: f64 = rng.random();
            let clicked = page
                .cumulative
                .iter()
                .position(|&c| u < c)
                .unwrap_or_else(|| {
                    page.cumulative
                        .iter()
                        .rposition(|_| true)
                        .expect("page has elements")
                });
            let element = &page.displayed.elements[clicked];
            let original_rank = query
                .snapshot
                .generic_rank(&element.element_id)
                .expect("arrangements never add elements")
                .map(|r| r as u32);
            let displayed_rank = page
                .displayed
                .generic_rank(&element.element_id)
                .expect("element is displayed")
                .map(|r| r as u32);
            let a0 = &query.snapshot;
            let offset = (k as i128 * plan.span_ms as i128 / plan.n_events as i128) as i64;
            ClickEvent {
                event_id: uuid::Builder::from_random_bytes(rng.random())
                    .into_uuid()
                    .to_string(),
                user_id,
                timestamp: plan.start_ms + offset,
                engine: query.engine,
                group,
                original_rank,
                displayed_rank,
                element_kind: element.kind,
                page_index: a0.page_index,
                num_results: a0.num_results() as u32,
                ads_present: a0.ads_present(),
                box_present: a0.box_present(),
                box_column: a0.box_column(),
                ssr_positions: a0.ssr_positions(),
                candidate_count: a0.candidate_count,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::GroupWeights;

    fn three_result_params() -> ClickModelParams {
        ClickModelParams {
            main_examination: vec![1.0, 0.5, 0.25],
            sidebar_examination: vec![],
            ad_attractiveness: 0.0,
            box_attractiveness: 0.0,
            no_click_weight: 0.0,
            candidate_sensitivity: 0.0,
        }
    }

    fn close(a: f64, b: f64) {
        assert!((a - b).abs() < 1e-12, "{a} != {b}");
    }

    #[test]
    fn distribution_closed_form() {
        let q = SyntheticQuery::generic_only("q", &[1.0, 1.0, 1.0]);
        let d = click_distribution(&three_result_params(), &q, &q.snapshot).unwrap();
        close(d.probabilities[0], 4.0 / 7.0);
        close(d.probabilities[1], 2.0 / 7.0);
        close(d.probabilities[2], 1.0 / 7.0);
        close(d.no_click, 0.0);
    }

    #[test]
    fn distribution_single_result_and_symmetry() {
        let q = SyntheticQuery::generic_only("q", &[0.3]);
        let d = click_distribution(&three_result_params(), &q, &q.snapshot).unwrap();
        assert_eq!(d.probabilities, vec![1.0]);

        let mut params = three_result_params();
        params.main_examination = vec![0.4, 0.4];
        let q = SyntheticQuery::generic_only("q", &[1.0, 1.0]);
        let d = click_distribution(&params, &q, &q.snapshot).unwrap();
        assert_eq!(d.probabilities[0], d.probabilities[1]);
    }

    #[test]
    fn distribution_degenerate() {
        let q = SyntheticQuery::generic_only("q", &[0.0, 0.0]);
        assert!(matches!(
            click_distribution(&three_result_params(), &q, &q.snapshot),
            Err(SimError::DegenerateModel(_))
        ));
    }

    #[test]
    fn ctr_by_enumeration() {
        let params = three_result_params();
        let q = SyntheticQuery::generic_only("q", &[1.0, 1.0, 1.0]);
        close(true_ctr(&params, &q, ArrangementId::A0, 1).unwrap(), 4.0 / 7.0);
        close(true_ctr(&params, &q, ArrangementId::A1, 1).unwrap(), 2.0 / 7.0);
        close(true_ctr(&params, &q, ArrangementId::A2, 1).unwrap(), 1.0 / 7.0);
        assert_eq!(
            true_ctr(&params, &q, ArrangementId::A3, 1).unwrap(),
            true_ctr(&params, &q, ArrangementId::A0, 1).unwrap()
        );
        assert!(true_ctr(&params, &q, ArrangementId::A0, 4).is_err());
        assert!(true_ctr(&params, &q, ArrangementId::A0, 0).is_err());

        let single = SyntheticQuery::generic_only("q", &[1.0]);
        assert_eq!(true_ctr(&params, &single, ArrangementId::A0, 1).unwrap(), 1.0);
    }

    #[test]
    fn ctr_conditions_on_click() {
        let mut params = three_result_params();
        params.no_click_weight = 10.0;
        let q = SyntheticQuery::generic_only("q", &[1.0, 1.0, 1.0]);
        close(true_ctr(&params, &q, ArrangementId::A0, 1).unwrap(), 4.0 / 7.0);
    }

    #[test]
    fn gap_single_query() {
        let params = three_result_params();
        let pop = vec![SyntheticQuery::generic_only("q", &[1.0, 1.0, 1.0])];
        close(
            true_gap(&params, &pop, ArrangementId::A1, ArrangementId::A0, 1).unwrap(),
            -2.0 / 7.0,
        );
        assert_eq!(
            true_gap(&params, &pop, ArrangementId::A2, ArrangementId::A2, 1).unwrap(),
            0.0
        );
        let doubled = vec![pop[0].clone(), pop[0].clone()];
        close(
            true_gap(&params, &doubled, ArrangementId::A1, ArrangementId::A0, 1).unwrap(),
            -2.0 / 7.0,
        );
        assert!(true_gap(&params, &[], ArrangementId::A1, ArrangementId::A0, 1).is_err());
    }

    #[test]
    fn pp_couplings() {
        let params = three_result_params();
        let pop = vec![SyntheticQuery::generic_only("q", &[1.0, 1.0, 1.0])];
        assert_eq!(
            true_pp(&params, &pop, &[ArrangementId::A0], Coupling::CommonRandomness).unwrap(),
            0.0
        );
        close(
            true_pp(&params, &pop, &[ArrangementId::A1], Coupling::CommonRandomness).unwrap(),
            2.0 / 7.0,
        );
        close(
            true_pp(&params, &pop, &[ArrangementId::A1], Coupling::Independent).unwrap(),
            26.0 / 49.0,
        );
        // a0 against itself is not zero when outcomes are independent draws
        close(
            true_pp(&params, &pop, &[ArrangementId::A0], Coupling::Independent).unwrap(),
            2.0 * (4.0 / 7.0) * (3.0 / 7.0),
        );
    }

    #[test]
    fn candidate_sensitivity_steepens_decay() {
        let params = ClickModelParams {
            candidate_sensitivity: 0.2,
            ..three_result_params()
        };
        let few = params.examination(Slot::main(1), Some(1_000));
        let many = params.examination(Slot::main(1), Some(1_000_000_000));
        assert!(many < few);
        assert_eq!(params.examination(Slot::main(0), Some(1_000_000)), 1.0);
        assert_eq!(params.examination(Slot::main(7), None), 0.0);
    }

    #[test]
    fn population_basics() {
        let spec = PopulationSpec {
            n_queries: 0,
            ..Default::default()
        };
        assert!(generate_population(&spec).unwrap().is_empty());

        let spec = PopulationSpec {
            n_queries: 500,
            box_probability: 1.0,
            seed: 9,
            ..Default::default()
        };
        let pop = generate_population(&spec).unwrap();
        assert!(pop.iter().all(|q| q.snapshot.box_present()));
        assert!(pop.iter().all(|q| q.snapshot.validate().is_ok()));
        assert!(pop.iter().all(|q| q
            .snapshot
            .generic_results()
            .iter()
            .all(|g| q.relevance.contains_key(&g.element_id))));
        assert_eq!(pop, generate_population(&spec).unwrap());

        let bad = PopulationSpec {
            box_probability: 1.5,
            ..Default::default()
        };
        assert!(generate_population(&bad).is_err());
    }

    #[test]
    fn sampling_basics() {
        let params = three_result_params();
        let pop = vec![SyntheticQuery::generic_only("q", &[1.0, 1.0, 1.0])];
        let exp = ExperimentConfig::default();
        assert!(sample_events(&params, &pop, &exp, &SamplingPlan::new(0, 1))
            .unwrap()
            .is_empty());

        let control_only = ExperimentConfig {
            google: GroupWeights::single(Engine::Google, ArrangementId::A0).unwrap(),
            ..ExperimentConfig::default()
        };
        let events = sample_events(&params, &pop, &control_only, &SamplingPlan::new(500, 1)).unwrap();
        assert_eq!(events.len(), 500);
        assert!(events.iter().all(|e| e.group == ArrangementId::A0));
        assert!(events.iter().all(|e| e.validate().is_ok()));
    }

    #[test]
    fn sampled_ranks_follow_the_swap() {
        let params = three_result_params();
        let pop = vec![SyntheticQuery::generic_only("q", &[1.0, 1.0, 1.0])];
        let exp = ExperimentConfig {
            google: GroupWeights::single(Engine::Google, ArrangementId::A2).unwrap(),
            ..ExperimentConfig::default()
        };
        for e in sample_events(&params, &pop, &exp, &SamplingPlan::new(300, 4)).unwrap() {
            let expected = match e.original_rank.unwrap() {
                1 => 3,
                3 => 1,
                r => r,
            };
            assert_eq!(e.displayed_rank, Some(expected));
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let spec = PopulationSpec {
            n_queries: 50,
            seed: 3,
            ..Default::default()
        };
        let pop = generate_population(&spec).unwrap();
        let params = ClickModelParams::default();
        let exp = ExperimentConfig::default();
        let plan = SamplingPlan::new(2_000, 17);
        let a = sample_events(&params, &pop, &exp, &plan).unwrap();
        let b = sample_events(&params, &pop, &exp, &plan).unwrap();
        assert_eq!(a, b);
        let c = sample_events(&params, &pop, &exp, &SamplingPlan::new(2_000, 18)).unwrap();
        assert_ne!(a, c);
    }
}
