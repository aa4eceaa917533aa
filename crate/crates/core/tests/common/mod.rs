//! Test support shared by the integration suites (also pulled into the CLI
//! acceptance suite by path).
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use perfpower_core::arrangement::swap_generic;
use perfpower_core::preprocess::DAY_MS;
use perfpower_core::{
    apply, generate_population, ArrangementId, ClickEvent, ClickModelParams, ElementId,
    ElementKind, Engine, ExperimentConfig, PopulationSpec, SerpSnapshot, SyntheticQuery,
};
use proptest::prelude::*;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

/// Checked-in log with exact per-group click counts (500 clicks per group):
/// a0: c1 215, c2 100; a1: c1 120; a2: c1 80; a3: c1 215, c2 61.
pub const SWAP_FIXTURE: &str = "swap_aggregates.jsonl";

pub const FIELD_INPUT_EVENTS: usize = 56_971;
pub const FIELD_KEPT_EVENTS: usize = 45_625;

/// Counts the fixture is built from.
pub struct PreprocessFixture {
    pub events: Vec<ClickEvent>,
    pub burn_in: usize,
    pub unclassifiable: usize,
    /// Event ids that must survive preprocessing.
    pub expected_kept: Vec<String>,
}

fn split(total: usize, parts: usize, k: usize) -> usize {
    total / parts + usize::from(k < total % parts)
}

/// Log of 85 participants sized like the field study: 10,000 clicks inside
/// the participants' four-day burn-in windows and 1,346 later generic clicks
/// without a resolvable rank, so exactly 45,625 of 56,971 clicks survive.
///
/// Every participant has one kept click exactly at the end of the window
/// (the window is half-open) and one burn-in click 1 ms before it.
pub fn field_sized_preprocess_fixture() -> PreprocessFixture {
    const USERS: usize = 85;
    const BURN_IN: usize = 10_000;
    const UNCLASSIFIABLE: usize = 1_346;
    let late_total = FIELD_INPUT_EVENTS - BURN_IN;
    let start = 1_693_526_400_000i64; // 2023-09-01
    let window = 4 * DAY_MS;
    let experiment = ExperimentConfig::default();

    let mut events = Vec::with_capacity(FIELD_INPUT_EVENTS);
    let mut expected_kept = Vec::new();
    for u in 0..USERS {
        let user = format!("participant-{u:03}");
        let onboarding = start + (u as i64 % 30) * DAY_MS + (u as i64 * 7_919) % DAY_MS;
        let early = split(BURN_IN, USERS, u);
        let late = split(late_total, USERS, u);
        let broken = split(UNCLASSIFIABLE, USERS, u);
        let make = |k: usize, ts: i64, rank: Option<u32>| {
            let query = format!("{user} query {}", k % 40);
            let group = experiment.assign(&user, &query, Engine::Google);
            ClickEvent {
                event_id: format!("{user}-{k:04}"),
                user_id: user.clone(),
                timestamp: ts,
                engine: Engine::Google,
                group,
                original_rank: rank,
                displayed_rank: rank,
                element_kind: ElementKind::GenericResult,
                page_index: 0,
                num_results: 10,
                ads_present: false,
                box_present: false,
                box_column: None,
                ssr_positions: vec![],
                candidate_count: Some(1_000_000 + k as u64),
            }
        };
        for k in 0..early {
            // first click at onboarding, last one 1 ms before the window closes
            let ts = if k + 1 == early {
                onboarding + window - 1
            } else {
                onboarding + (k as i64 * (window - 1)) / early as i64
            };
            events.push(make(k, ts, Some(1 + (k % 10) as u32)));
        }
        for k in 0..late {
            let ts = onboarding + window + (k as i64 * 120 * DAY_MS) / late as i64;
            let rank = if k % (late / broken) == 1 && k / (late / broken) < broken {
                None
            } else {
                Some(1 + (k % 10) as u32)
            };
            let e = make(early + k, ts, rank);
            if rank.is_some() {
                expected_kept.push(e.event_id.clone());
            }
            events.push(e);
        }
    }
    // interleave users the way a server log would
    events.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then(a.event_id.cmp(&b.event_id)));
    PreprocessFixture {
        events,
        burn_in: BURN_IN,
        unclassifiable: UNCLASSIFIABLE,
        expected_kept,
    }
}

/// Simulator configurations used by the oracle-consistency suites.
pub fn oracle_configs() -> Vec<(String, ClickModelParams, Vec<SyntheticQuery>)> {
    let mut out = Vec::new();

    let steep = ClickModelParams {
        main_examination: vec![1.0, 0.5, 0.25],
        sidebar_examination: vec![],
        ad_attractiveness: 0.0,
        box_attractiveness: 0.0,
        no_click_weight: 0.0,
        candidate_sensitivity: 0.0,
    };
    out.push((
        "three equal results".to_owned(),
        steep,
        vec![SyntheticQuery::generic_only("q", &[1.0, 1.0, 1.0])],
    ));

    let specs = [
        ("default population", ClickModelParams::default(), PopulationSpec {
            n_queries: 400,
            seed: 11,
            ..Default::default()
        }),
        (
            "busy pages",
            ClickModelParams {
                ad_attractiveness: 0.9,
                box_attractiveness: 1.2,
                no_click_weight: 1.0,
                ..Default::default()
            },
            PopulationSpec {
                n_queries: 300,
                seed: 12,
                ads_probability: 0.8,
                box_probability: 0.5,
                ssr_probability: 0.6,
                ..Default::default()
            },
        ),
        (
            "flat examination",
            ClickModelParams {
                main_examination: vec![1.0, 0.9, 0.85, 0.8, 0.75, 0.7, 0.65, 0.6, 0.55, 0.5, 0.45, 0.4, 0.35, 0.3],
                ..Default::default()
            },
            PopulationSpec {
                n_queries: 250,
                seed: 13,
                relevance_decay: 0.6,
                relevance_noise: 0.8,
                ..Default::default()
            },
        ),
        (
            "candidate-sensitive",
            ClickModelParams {
                candidate_sensitivity: 0.15,
                ..Default::default()
            },
            PopulationSpec {
                n_queries: 350,
                seed: 14,
                min_results: 3,
                max_results: 8,
                ..Default::default()
            },
        ),
    ];
    for (name, params, spec) in specs {
        let mut pop = generate_population(&spec).expect("valid population");
        // Google-only keeps every arrangement live on every query
        for q in &mut pop {
            q.engine = Engine::Google;
            q.snapshot.engine = Engine::Google;
        }
        out.push((name.to_owned(), params, pop));
    }
    out
}

pub const SWAP_ARRANGEMENTS: [ArrangementId; 3] =
    [ArrangementId::A1, ArrangementId::A2, ArrangementId::A3];

fn arb_kind() -> impl Strategy<Value = ElementKind> {
    prop_oneof![
        6 => Just(ElementKind::GenericResult),
        2 => Just(ElementKind::Ad),
        1 => Just(ElementKind::ShoppingBox),
        1 => Just(ElementKind::SpecializedResult),
        1 => Just(ElementKind::Other),
    ]
}

/// Random pages: up to 13 Main elements of any kind and a short sidebar.
pub fn arb_snapshot() -> impl Strategy<Value = SerpSnapshot> {
    (
        prop::collection::vec(arb_kind(), 0..14),
        prop::collection::vec(
            prop_oneof![Just(ElementKind::Ad), Just(ElementKind::ShoppingBox), Just(ElementKind::Other)],
            0..3,
        ),
    )
        .prop_map(|(main, side)| {
            let mut b = SerpSnapshot::builder(Engine::Google);
            for (k, kind) in main.into_iter().enumerate() {
                b = b.main(format!("m{k}"), kind);
            }
            for (k, kind) in side.into_iter().enumerate() {
                b = b.sidebar(format!("s{k}"), kind);
            }
            b.build()
        })
}

pub fn multiset(s: &SerpSnapshot) -> BTreeMap<(ElementId, ElementKind), usize> {
    let mut m = BTreeMap::new();
    for e in &s.elements {
        *m.entry((e.element_id.clone(), e.kind)).or_insert(0) += 1;
    }
    m
}

/// Multiset preservation for swaps, subset-and-keep-generics for hides,
/// never-add for all, and identity whenever nothing was applied.
pub fn check_arrangement_invariants(s: &SerpSnapshot) -> Result<(), String> {
    let before = multiset(s);
    for a in ArrangementId::ALL {
        let r = apply(a, s).map_err(|e| format!("{a}: {e}"))?;
        r.snapshot.validate().map_err(|v| format!("{a}: invalid output {v:?}"))?;
        let after = multiset(&r.snapshot);
        if let Some(k) = after.keys().find(|k| !before.contains_key(*k)) {
            return Err(format!("{a} added {k:?}"));
        }
        match a {
            ArrangementId::A1 | ArrangementId::A2 | ArrangementId::A3 if after != before => {
                return Err(format!("{a} changed the element multiset"));
            }
            ArrangementId::A4 | ArrangementId::A5 | ArrangementId::A6
                if r.snapshot.num_results() != s.num_results() =>
            {
                return Err(format!("{a} dropped a generic result"));
            }
            _ => {}
        }
        if !r.applied && &r.snapshot != s {
            return Err(format!("{a} not applied but changed the page"));
        }
        if a == ArrangementId::A0 && &r.snapshot != s {
            return Err("a0 changed the page".into());
        }
        let degenerate = match a {
            ArrangementId::A1 => s.num_results() < 2,
            ArrangementId::A2 | ArrangementId::A3 => s.num_results() < 3,
            _ => false,
        };
        if degenerate && (r.applied || &r.snapshot != s) {
            return Err(format!("{a} should be the identity on this page"));
        }
    }
    Ok(())
}

pub fn check_swap_involution(s: &SerpSnapshot, i: usize, j: usize) -> Result<(), String> {
    let once = swap_generic(s, i, j).map_err(|e| e.to_string())?;
    let twice = swap_generic(&once.snapshot, i, j).map_err(|e| e.to_string())?;
    if &twice.snapshot != s {
        return Err(format!("swap({i},{j}) twice is not the identity"));
    }
    Ok(())
}
