//! Assembles every estimate for an event log into one report.
//!
//! The report holds per-group click-share tables, gap and distortion rows
//! for each arrangement against control, the box/ads conduct comparisons on
//! pages that show a Shopping box, subgroup splits, and the distortion curve
//! over candidate-count percentiles. Each row draws its bootstrap resamples
//! from a seed derived from the report seed and the row's identity, so the
//! whole report is a function of `(events, config)`.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::assignment::fnv1a64;
use crate::estimators::{
    click_shares, distortion_hat, gap_hat, percentile_bins, pp_lower_bound, split_by,
    BootstrapConfig, Direction, EstimatorError, GapEstimate, PercentileBins, SplitPredicate,
};
use crate::preprocess::DropReport;
use crate::serp::{ArrangementId, ClickEvent, Engine};

#[derive(Debug, Clone, PartialEq)]
pub struct ReportConfig {
    pub bootstrap: BootstrapConfig,
    /// Positions `1..=positions` in the swap analyses.
    pub positions: usize,
    /// Positions in the box/ads conduct and subgroup analyses.
    pub conduct_positions: usize,
    pub percentile_bins: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            bootstrap: BootstrapConfig::default(),
            positions: 6,
            conduct_positions: 3,
            percentile_bins: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ReportMetadata {
    pub seed: u64,
    pub resamples: usize,
    pub level: f64,
    pub input_events: usize,
    pub filters: Vec<String>,
    pub preprocessing: Option<DropReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ShareTable {
    pub scope: String,
    pub group: ArrangementId,
    pub clicks: usize,
    /// Click share by target (`c1`, `c2`, ..., `Ad`, `ShoppingBox`, ...).
    pub shares: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct EstimateRow {
    pub scope: String,
    pub label: String,
    pub position: usize,
    pub a_ref: ArrangementId,
    pub a_alt: ArrangementId,
    pub gap: Option<GapEstimate>,
    pub beta: Option<f64>,
    pub direction: Option<Direction>,
    pub beta_ci_low: Option<f64>,
    pub beta_ci_high: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PowerBound {
    pub engine: Engine,
    pub pp_lower_bound: f64,
    pub arrangements: Vec<ArrangementId>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PercentileCurve {
    pub engine: Engine,
    pub curve: Option<PercentileBins>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct EstimateReport {
    pub metadata: ReportMetadata,
    pub share_tables: Vec<ShareTable>,
    pub estimates: Vec<EstimateRow>,
    pub pp_lower_bounds: Vec<PowerBound>,
    pub percentile_curves: Vec<PercentileCurve>,
}

/// Box/ads conducts compared on pages where the box is shown by default.
/// Adding an element is the reverse of the arrangement that hides it.
const CONDUCTS: [(&str, ArrangementId, ArrangementId); 4] = [
    ("add Box", ArrangementId::A6, ArrangementId::A0),
    ("add Ads/Box", ArrangementId::A4, ArrangementId::A0),
    ("swap+add Box", ArrangementId::A6, ArrangementId::A1),
    ("swap+add Ads/Box", ArrangementId::A4, ArrangementId::A1),
];

struct RowBuilder<'a> {
    config: &'a ReportConfig,
}

impl RowBuilder<'_> {
    fn row(
        &self,
        events: &[&ClickEvent],
        scope: &str,
        label: &str,
        a_ref: ArrangementId,
        a_alt: ArrangementId,
        position: usize,
    ) -> EstimateRow {
        let identity = format!("{scope}|{label}|{a_ref}|{a_alt}|{position}");
        let bootstrap = self
            .config
            .bootstrap
            .with_seed(self.config.bootstrap.seed ^ fnv1a64(identity.as_bytes()));
        let mut row = EstimateRow {
            scope: scope.to_owned(),
            label: label.to_owned(),
            position,
            a_ref,
            a_alt,
            gap: None,
            beta: None,
            direction: None,
            beta_ci_low: None,
            beta_ci_high: None,
            note: None,
        };
        match distortion_hat(events, a_alt, a_ref, position, &bootstrap) {
            Ok(d) => {
                row.gap = Some(d.gap);
                row.beta = Some(d.beta);
                row.direction = Some(d.direction);
                row.beta_ci_low = Some(d.beta_ci_low);
                row.beta_ci_high = Some(d.beta_ci_high);
            }
            Err(EstimatorError::UndefinedDistortion { .. }) => {
                match gap_hat(events, a_alt, a_ref, position, &bootstrap) {
                    Ok(g) => row.gap = Some(g),
                    Err(e) => row.note = Some(format!("insufficient data: {e}")),
                }
                if row.gap.is_some() {
                    row.note = Some("distortion undefined: zero reference share".into());
                }
            }
            Err(e) => row.note = Some(format!("insufficient data: {e}")),
        }
        row
    }
}

fn share_tables(events: &[&ClickEvent], scope: &str) -> Vec<ShareTable> {
    let mut groups: Vec<ArrangementId> = events.iter().map(|e| e.group).collect();
    groups.sort_unstable();
    groups.dedup();
    groups
        .into_iter()
        .map(|group| {
            let shares = click_shares(events, group).expect("group has events");
            ShareTable {
                scope: scope.to_owned(),
                group,
                clicks: events.iter().filter(|e| e.group == group).count(),
                shares: shares
                    .into_iter()
                    .map(|(t, s)| (t.to_string(), s))
                    .collect(),
            }
        })
        .collect()
}

pub fn build_report(
    events: &[ClickEvent],
    config: &ReportConfig,
    preprocessing: Option<DropReport>,
) -> EstimateReport {
    let rows = RowBuilder { config };
    let mut report = EstimateReport {
        metadata: ReportMetadata {
            seed: config.bootstrap.seed,
            resamples: config.bootstrap.resamples,
            level: config.bootstrap.level,
            input_events: events.len(),
            filters: Vec::new(),
            preprocessing,
        },
        share_tables: Vec::new(),
        estimates: Vec::new(),
        pp_lower_bounds: Vec::new(),
        percentile_curves: Vec::new(),
    };
    if let Some(p) = preprocessing {
        report.metadata.filters.push("burn-in".into());
        if p.unclassifiable > 0 {
            report.metadata.filters.push("unclassifiable".into());
        }
    }

    for engine in Engine::ALL {
        let engine_events: Vec<ClickEvent> = events
            .iter()
            .filter(|e| e.engine == engine)
            .cloned()
            .collect();
        if engine_events.is_empty() {
            continue;
        }
        let all: Vec<&ClickEvent> = engine_events.iter().collect();
        let scope = format!("{engine}/all");
        report.share_tables.extend(share_tables(&all, &scope));

        let alternatives: Vec<ArrangementId> = engine
            .supported_arrangements()
            .iter()
            .copied()
            .filter(|a| *a != ArrangementId::A0)
            .collect();
        for &alt in &alternatives {
            for i in 1..=config.positions {
                report
                    .estimates
                    .push(rows.row(&all, &scope, alt.label(), ArrangementId::A0, alt, i));
            }
        }
        let first_position: Vec<GapEstimate> = report
            .estimates
            .iter()
            .filter(|r| r.scope == scope && r.position == 1 && r.a_ref == ArrangementId::A0)
            .filter_map(|r| r.gap)
            .collect();
        if let Ok(bound) = pp_lower_bound(&first_position) {
            report.pp_lower_bounds.push(PowerBound {
                engine,
                pp_lower_bound: bound,
                arrangements: first_position.iter().map(|g| g.a_alt).collect(),
            });
        }

        let boxed: Vec<&ClickEvent> = all.iter().copied().filter(|e| e.box_present).collect();
        if engine == Engine::Google && !boxed.is_empty() {
            let scope = format!("{engine}/boxPresent");
            report.share_tables.extend(share_tables(&boxed, &scope));
            for (label, a_ref, a_alt) in CONDUCTS {
                for i in 1..=config.conduct_positions {
                    report
                        .estimates
                        .push(rows.row(&boxed, &scope, label, a_ref, a_alt, i));
                }
            }
        }

        for predicate in [SplitPredicate::AdsOrBoxPresent, SplitPredicate::SsrBetweenTopTwo] {
            let (inside, outside) = split_by(&engine_events, &predicate);
            for (flag, subset) in [(true, inside), (false, outside)] {
                if subset.is_empty() {
                    continue;
                }
                let subset: Vec<&ClickEvent> = subset.iter().collect();
                let scope = format!("{engine}/{}={flag}", predicate.name());
                for i in 1..=config.conduct_positions {
                    report.estimates.push(rows.row(
                        &subset,
                        &scope,
                        ArrangementId::A1.label(),
                        ArrangementId::A0,
                        ArrangementId::A1,
                        i,
                    ));
                }
            }
        }

        let distinct = {
            let mut counts: Vec<u64> = engine_events.iter().filter_map(|e| e.candidate_count).collect();
            counts.sort_unstable();
            counts.dedup();
            counts.len()
        };
        let n_bins = config.percentile_bins.min(distinct);
        let seed = config.bootstrap.seed ^ fnv1a64(format!("{engine}/candidates").as_bytes());
        let curve = match percentile_bins(&engine_events, n_bins, &config.bootstrap.with_seed(seed)) {
            Ok(bins) => PercentileCurve {
                engine,
                curve: Some(bins),
                note: None,
            },
            Err(e) => PercentileCurve {
                engine,
                curve: None,
                note: Some(format!("insufficient data: {e}")),
            },
        };
        report.percentile_curves.push(curve);
    }
    report
}

fn fmt_f64(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

impl EstimateReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes infallibly")
    }

    /// One row per estimate, percentile bins included.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "scope", "label", "position", "aRef", "aAlt", "n", "ctrRef", "ctrAlt", "gap", "ciLow",
            "ciHigh", "beta", "note",
        ])
        .expect("in-memory write");
        let mut emit = |scope: &str, label: &str, position: usize, a_ref: ArrangementId, a_alt: ArrangementId, gap: Option<&GapEstimate>, beta: Option<f64>, note: Option<&str>| {
            w.write_record([
                scope.to_owned(),
                label.to_owned(),
                position.to_string(),
                a_ref.to_string(),
                a_alt.to_string(),
                gap.map(|g| (g.n_ref + g.n_alt).to_string()).unwrap_or_else(|| "0".into()),
                fmt_f64(gap.map(|g| g.ctr_ref)),
                fmt_f64(gap.map(|g| g.ctr_alt)),
                fmt_f64(gap.map(|g| g.gap)),
                fmt_f64(gap.map(|g| g.ci_low)),
                fmt_f64(gap.map(|g| g.ci_high)),
                fmt_f64(beta),
                note.unwrap_or_default().to_owned(),
            ])
            .expect("in-memory write");
        };
        for r in &self.estimates {
            emit(&r.scope, &r.label, r.position, r.a_ref, r.a_alt, r.gap.as_ref(), r.beta, r.note.as_deref());
        }
        for c in &self.percentile_curves {
            let Some(curve) = &c.curve else { continue };
            for b in &curve.bins {
                let scope = format!("{}/candidates/bin-{}", c.engine, b.bin);
                let label = format!("candidates {}..={}", b.key_min, b.key_max);
                emit(
                    &scope,
                    &label,
                    1,
                    ArrangementId::A0,
                    ArrangementId::A1,
                    b.estimate.as_ref().map(|d| &d.gap),
                    b.estimate.map(|d| d.beta),
                    b.note.as_deref(),
                );
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }

    /// First row matching scope, arrangements and position.
    pub fn find(&self, scope: &str, a_ref: ArrangementId, a_alt: ArrangementId, position: usize) -> Option<&EstimateRow> {
        self.estimates
            .iter()
            .find(|r| r.scope == scope && r.a_ref == a_ref && r.a_alt == a_alt && r.position == position)
    }
}
