mod common;

use perfpower_core::estimators::{click_shares, Direction};
use perfpower_core::{
    build_report, ctr_hat, distortion_hat, gap_hat, generate_population, percentile_bins,
    pp_lower_bound, sample_events, split_by, true_ctr, true_gap, true_pp, ArrangementId,
    BootstrapConfig, ClickEvent, ClickModelParams, Coupling, ElementKind, Engine,
    ExperimentConfig, GapEstimate, GroupWeights, PopulationSpec, ReportConfig, SamplingPlan,
    SplitPredicate, SyntheticQuery,
};
use proptest::prelude::*;

fn google_only(weights: Vec<(ArrangementId, f64)>) -> ExperimentConfig {
    ExperimentConfig {
        google: GroupWeights::new(Engine::Google, weights).unwrap(),
        ..ExperimentConfig::default()
    }
}

fn fixture_events() -> Vec<ClickEvent> {
    perfpower_core::eventlog::read_events_file(common::fixture_path(common::SWAP_FIXTURE)).unwrap()
}

#[test]
fn consistent_with_oracle_at_200k() {
    let configs = common::oracle_configs();
    for (name, params, pop) in configs.iter().take(3) {
        let events = sample_events(
            params,
            pop,
            &ExperimentConfig::default(),
            &SamplingPlan::new(200_000, 41),
        )
        .unwrap();
        let cfg = BootstrapConfig { resamples: 20, ..Default::default() };
        for a in [ArrangementId::A1, ArrangementId::A2, ArrangementId::A4] {
            let est = gap_hat(&events, a, ArrangementId::A0, 1, &cfg).unwrap();
            let truth = true_gap(params, pop, a, ArrangementId::A0, 1).unwrap();
            assert!((est.gap - truth).abs() <= 0.01, "{name} {a}: {} vs {truth}", est.gap);
        }
    }
    let (_, params, pop) = &configs[0];
    let truth = true_gap(params, pop, ArrangementId::A1, ArrangementId::A0, 1).unwrap();
    assert!((truth + 2.0 / 7.0).abs() < 1e-12);
}

#[test]
fn bound_from_exact_gaps_never_exceeds_true_pp() {
    for (name, params, pop) in common::oracle_configs() {
        let gaps: Vec<GapEstimate> = ArrangementId::ALL
            .iter()
            .map(|&a| {
                let ctr_ref = pop.iter().map(|q| true_ctr(&params, q, ArrangementId::A0, 1).unwrap()).sum::<f64>()
                    / pop.len() as f64;
                let gap = true_gap(&params, &pop, a, ArrangementId::A0, 1).unwrap();
                GapEstimate::from_aggregates(1, ArrangementId::A0, ctr_ref, 1, a, ctr_ref + gap, 1)
            })
            .collect();
        let bound = pp_lower_bound(&gaps).unwrap();
        for coupling in [Coupling::CommonRandomness, Coupling::Independent] {
            let pp = true_pp(&params, &pop, &ArrangementId::ALL, coupling).unwrap();
            assert!(bound <= pp + 1e-12, "{name} {coupling:?}: {bound} > {pp}");
        }
    }
}

#[test]
fn swap_fixture_reproduces_reported_effects() {
    let events = fixture_events();
    let cfg = BootstrapConfig::default();
    let g1 = distortion_hat(&events, ArrangementId::A1, ArrangementId::A0, 1, &cfg).unwrap();
    assert!((g1.gap.ctr_ref - 0.43).abs() < 1e-12);
    assert!((g1.gap.ctr_alt - 0.24).abs() < 1e-12);
    assert!((g1.gap.gap + 0.19).abs() <= 0.005);
    assert!((g1.beta - 0.44).abs() <= 0.01);
    assert_eq!(g1.direction, Direction::Loss);
    assert!(g1.gap.ci_low <= g1.gap.gap && g1.gap.gap <= g1.gap.ci_high);

    let g2 = gap_hat(&events, ArrangementId::A2, ArrangementId::A0, 1, &cfg).unwrap();
    assert!((g2.gap + 0.27).abs() <= 0.005);
    let d3 = distortion_hat(&events, ArrangementId::A3, ArrangementId::A0, 2, &cfg).unwrap();
    assert!((d3.beta - 0.39).abs() <= 0.01, "{}", d3.beta);

    let swaps: Vec<_> = common::SWAP_ARRANGEMENTS
        .iter()
        .map(|&a| gap_hat(&events, a, ArrangementId::A0, 1, &cfg).unwrap())
        .collect();
    assert!((pp_lower_bound(&swaps).unwrap() - 0.27).abs() <= 0.005);
}

fn box_click(k: usize, group: ArrangementId, on_c1: bool) -> ClickEvent {
    let rank = if on_c1 { 1 } else { 2 + (k % 4) as u32 };
    ClickEvent {
        event_id: format!("{group}-{k}"),
        user_id: format!("u{}", k % 17),
        timestamp: k as i64,
        engine: Engine::Google,
        group,
        original_rank: Some(rank),
        displayed_rank: Some(rank),
        element_kind: ElementKind::GenericResult,
        page_index: 0,
        num_results: 8,
        ads_present: true,
        box_present: true,
        box_column: Some(perfpower_core::Column::Main),
        ssr_positions: vec![],
        candidate_count: Some(10_000),
    }
}

fn group_with(group: ArrangementId, on_c1: usize, total: usize) -> Vec<ClickEvent> {
    (0..total).map(|k| box_click(k, group, k < on_c1)).collect()
}

// Adding an element is measured by taking the arrangement that hides it as
// the reference. Counts chosen so the four conducts land on 0.23, 0.44,
// 0.53 and 0.66.
#[test]
fn reverse_framed_box_conducts() {
    let mut events = Vec::new();
    events.extend(group_with(ArrangementId::A0, 77, 200)); // 0.385
    events.extend(group_with(ArrangementId::A1, 47, 200)); // 0.235
    events.extend(group_with(ArrangementId::A4, 55, 80)); // 0.6875
    events.extend(group_with(ArrangementId::A6, 100, 200)); // 0.5
    let cfg = BootstrapConfig::default();
    let expected = [
        (ArrangementId::A6, ArrangementId::A0, 0.23),
        (ArrangementId::A4, ArrangementId::A0, 0.44),
        (ArrangementId::A6, ArrangementId::A1, 0.53),
        (ArrangementId::A4, ArrangementId::A1, 0.66),
    ];
    for (reference, alt, beta) in expected {
        let d = distortion_hat(&events, alt, reference, 1, &cfg).unwrap();
        assert!((d.beta - beta).abs() <= 0.01, "{reference}->{alt}: {}", d.beta);
        assert_eq!(d.direction, Direction::Loss);
    }
    let report = build_report(&events, &ReportConfig::default(), None);
    for (reference, alt, beta) in expected {
        let row = report.find("google/boxPresent", reference, alt, 1).unwrap();
        assert!((row.beta.unwrap() - beta).abs() <= 0.01, "{}", row.label);
    }
}

#[test]
fn split_sizes_follow_box_rate() {
    let spec = PopulationSpec {
        n_queries: 4_000,
        seed: 3,
        box_probability: 0.5,
        ads_probability: 0.0,
        bottom_ads_probability: 0.0,
        ..Default::default()
    };
    let pop = generate_population(&spec).unwrap();
    let n = 100_000;
    let events = sample_events(
        &ClickModelParams::default(),
        &pop,
        &ExperimentConfig::default(),
        &SamplingPlan::new(n, 8),
    )
    .unwrap();
    let (with, without) = split_by(&events, &SplitPredicate::from_name("adsOrBoxPresent").unwrap());
    assert_eq!(with.len() + without.len(), n);
    assert!(with.iter().all(|e| e.box_present) && without.iter().all(|e| !e.box_present));
    // two-stage binomial: queries then events
    let share = with.len() as f64 / n as f64;
    let sd = (0.25 / spec.n_queries as f64 + 0.25 / n as f64).sqrt();
    assert!((share - 0.5).abs() <= 4.0 * sd, "share {share}");
}

fn sensitive_population() -> (ClickModelParams, Vec<SyntheticQuery>) {
    let params = ClickModelParams {
        candidate_sensitivity: 0.25,
        ..Default::default()
    };
    let mut pop = generate_population(&PopulationSpec {
        n_queries: 2_000,
        seed: 21,
        relevance_noise: 0.1,
        ..Default::default()
    })
    .unwrap();
    for q in &mut pop {
        q.engine = Engine::Google;
        q.snapshot.engine = Engine::Google;
    }
    (params, pop)
}

#[test]
fn percentile_distortion_rises_with_candidate_count() {
    const BINS: usize = 4;
    let (params, mut pop) = sensitive_population();
    pop.sort_by_key(|q| q.snapshot.candidate_count);
    let oracle: Vec<f64> = pop
        .chunks(pop.len() / BINS)
        .map(|chunk| {
            let mean = |a| chunk.iter().map(|q| true_ctr(&params, q, a, 1).unwrap()).sum::<f64>() / chunk.len() as f64;
            let (c0, c1) = (mean(ArrangementId::A0), mean(ArrangementId::A1));
            (c1 - c0).abs() / c0
        })
        .collect();
    assert!(oracle.windows(2).all(|w| w[0] < w[1]), "oracle {oracle:?}");

    let experiment = google_only(vec![(ArrangementId::A0, 0.5), (ArrangementId::A1, 0.5)]);
    let events = sample_events(&params, &pop, &experiment, &SamplingPlan::new(200_000, 4)).unwrap();
    let bins = percentile_bins(&events, BINS, &BootstrapConfig { resamples: 50, ..Default::default() }).unwrap();
    let betas: Vec<f64> = bins.bins.iter().map(|b| b.estimate.unwrap().beta).collect();
    eprintln!("oracle {oracle:?} estimated {betas:?}");
    assert!(betas.windows(2).all(|w| w[0] < w[1]), "{betas:?}");
    for (b, o) in betas.iter().zip(&oracle) {
        assert!((b - o).abs() <= 0.03, "{betas:?} vs {oracle:?}");
    }
    let sizes: Vec<usize> = bins.bins.iter().map(|b| b.n_events).collect();
    assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
}

fn event_strategy() -> impl Strategy<Value = Vec<ClickEvent>> {
    let one = (0usize..7, prop_oneof![
        4 => (1u32..8).prop_map(Some),
        1 => Just(None),
    ], 0usize..5);
    prop::collection::vec(one, 1..120).prop_map(|raw| {
        raw.into_iter()
            .enumerate()
            .map(|(k, (g, rank, kind))| {
                let kind = match (rank, kind) {
                    (Some(_), _) => ElementKind::GenericResult,
                    (None, 0) => ElementKind::GenericResult,
                    (None, 1) => ElementKind::Ad,
                    (None, 2) => ElementKind::ShoppingBox,
                    (None, 3) => ElementKind::SpecializedResult,
                    _ => ElementKind::Other,
                };
                ClickEvent {
                    event_id: format!("e{k}"),
                    user_id: "u".into(),
                    timestamp: k as i64,
                    engine: Engine::Google,
                    group: ArrangementId::ALL[g],
                    original_rank: rank,
                    displayed_rank: rank,
                    element_kind: kind,
                    page_index: 0,
                    num_results: 8,
                    ads_present: false,
                    box_present: false,
                    box_column: None,
                    ssr_positions: vec![],
                    candidate_count: None,
                }
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn self_gap_is_exactly_zero(events in event_strategy(), i in 1usize..8) {
        let cfg = BootstrapConfig { resamples: 20, ..Default::default() };
        for a in ArrangementId::ALL {
            if events.iter().any(|e| e.group == a) {
                let g = gap_hat(&events, a, a, i, &cfg).unwrap();
                prop_assert_eq!(g.gap, 0.0);
                prop_assert_eq!((g.ci_low, g.ci_high), (0.0, 0.0));
            }
        }
    }

    #[test]
    fn shares_sum_to_one(events in event_strategy()) {
        for a in ArrangementId::ALL {
            if let Ok(shares) = click_shares(&events, a) {
                let total: f64 = shares.values().sum();
                prop_assert!((total - 1.0).abs() <= 1e-9);
                let per_rank: f64 = (1..8).map(|i| ctr_hat(&events, a, i).unwrap().ctr).sum();
                prop_assert!(per_rank <= total + 1e-12);
            }
        }
    }

    #[test]
    fn gap_invariants(events in event_strategy(), i in 1usize..4) {
        let cfg = BootstrapConfig { resamples: 30, ..Default::default() };
        if let Ok(g) = gap_hat(&events, ArrangementId::A1, ArrangementId::A0, i, &cfg) {
            prop_assert!((g.gap - (g.ctr_alt - g.ctr_ref)).abs() <= 1e-12);
            prop_assert!(g.ci_low <= g.gap && g.gap <= g.ci_high);
            prop_assert!(g.ci_low >= -1.0 && g.ci_high <= 1.0);
        }
    }
}

#[test]
fn bootstrap_is_deterministic() {
    let events = fixture_events();
    let cfg = BootstrapConfig::default().with_seed(99);
    let a = gap_hat(&events, ArrangementId::A1, ArrangementId::A0, 1, &cfg).unwrap();
    let b = gap_hat(&events, ArrangementId::A1, ArrangementId::A0, 1, &cfg).unwrap();
    assert_eq!(a, b);
}
