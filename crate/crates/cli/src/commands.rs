use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use perfpower_core::eventlog::{read_events_file, write_events_file};
use perfpower_core::sim::SimError;
use perfpower_core::{
    build_report, generate_population, preprocess as run_preprocess, sample_events, true_gap,
    true_pp, ArrangementId, BootstrapConfig, ClickEvent, ClickModelParams, Coupling, DropReport,
    Engine, ExperimentConfig, KvConfig, PopulationSpec, PreprocessConfig, ReportConfig,
    SamplingPlan,
};
use serde::Serialize;
use serde_json::Value;

use crate::error::{io, CliError};
use crate::http::{self, PostOutcome};

pub const EVENTS_FILE: &str = "events.jsonl";
pub const DROP_REPORT_FILE: &str = "drop_report.json";

pub fn load_config(path: Option<&Path>) -> Result<KvConfig, CliError> {
    match path {
        Some(p) => Ok(KvConfig::load(p)?),
        None => Ok(KvConfig::default()),
    }
}

/// Accepts either an event log or a directory containing `events.jsonl`.
fn resolve_input(input: &Path) -> PathBuf {
    if input.is_dir() {
        input.join(EVENTS_FILE)
    } else {
        input.to_path_buf()
    }
}

fn read_input(input: &Path) -> Result<Vec<ClickEvent>, CliError> {
    let path = resolve_input(input);
    read_events_file(&path).map_err(|e| match e {
        perfpower_core::eventlog::EventLogError::Io(err) => CliError::Io(format!("{}: {err}", path.display())),
        other => CliError::Data(format!("{}: {other}", path.display())),
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(io(path.display()))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io(dir.display()))
}

fn sim_error(e: SimError) -> CliError {
    CliError::Config(e.to_string())
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct TrueGapRow {
    a_alt: ArrangementId,
    position: usize,
    true_gap: f64,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct EngineTruth {
    engine: Engine,
    queries: usize,
    gaps: Vec<TrueGapRow>,
    true_pp_common_randomness: f64,
    true_pp_independent: f64,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Truth {
    seed: u64,
    events: usize,
    engines: Vec<EngineTruth>,
}

const TRUTH_POSITIONS: usize = 3;

pub fn simulate(
    config: &KvConfig,
    output: &Path,
    seed: Option<u64>,
    events: Option<usize>,
) -> Result<(), CliError> {
    let params = ClickModelParams::from_kv(config)?;
    let mut spec = PopulationSpec::from_kv(config)?;
    let experiment = ExperimentConfig::from_kv(config)?;
    let seed = match seed {
        Some(s) => s,
        None => config.parsed_or("simulation.seed", 0u64)?,
    };
    if config.get("population.seed").is_none() {
        spec.seed = seed;
    }
    let n = match events {
        Some(n) => n,
        None => config.parsed_or("simulation.events", 10_000usize)?,
    };
    let mut plan = SamplingPlan::new(n, seed);
    plan.n_users = config.parsed_or("simulation.users", plan.n_users)?;
    if plan.n_users == 0 {
        return Err(CliError::Config("simulation.users: must be positive".into()));
    }

    let population = generate_population(&spec).map_err(sim_error)?;
    let sampled = sample_events(&params, &population, &experiment, &plan).map_err(sim_error)?;

    let mut engines = Vec::new();
    for engine in [Engine::Google, Engine::Bing] {
        let sub: Vec<_> = population.iter().filter(|q| q.engine == engine).cloned().collect();
        if sub.is_empty() {
            continue;
        }
        let arms = engine.supported_arrangements();
        let mut gaps = Vec::new();
        for &a in arms.iter().filter(|&&a| a != ArrangementId::A0) {
            for i in 1..=TRUTH_POSITIONS {
                let g = true_gap(&params, &sub, a, ArrangementId::A0, i).map_err(sim_error)?;
                gaps.push(TrueGapRow { a_alt: a, position: i, true_gap: g });
            }
        }
        engines.push(EngineTruth {
            engine,
            queries: sub.len(),
            gaps,
            true_pp_common_randomness: true_pp(&params, &sub, arms, Coupling::CommonRandomness).map_err(sim_error)?,
            true_pp_independent: true_pp(&params, &sub, arms, Coupling::Independent).map_err(sim_error)?,
        });
    }

    create_dir(output)?;
    let events_path = output.join(EVENTS_FILE);
    write_events_file(&events_path, &sampled).map_err(io(events_path.display()))?;
    let truth = Truth { seed, events: sampled.len(), engines };
    write_file(
        &output.join("truth.json"),
        &serde_json::to_string_pretty(&truth).expect("truth serializes"),
    )?;
    println!("wrote {} events to {}", sampled.len(), events_path.display());
    Ok(())
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct ReplaySummary {
    events: usize,
    stored: usize,
    duplicates: usize,
    rejected: usize,
    count_before: u64,
    count_after: u64,
}

pub fn ingest_replay(input: &Path, url: &str, concurrency: usize) -> Result<(), CliError> {
    let events = read_input(input)?;
    let bodies: Vec<String> = events.iter().map(ClickEvent::to_json_line).collect();
    let base = url.trim_end_matches('/');
    let client = http::client()?;
    let before = http::health_count(&client, base)?;

    let next = AtomicUsize::new(0);
    let stored = AtomicUsize::new(0);
    let duplicates = AtomicUsize::new(0);
    let rejections: Mutex<Vec<(usize, String)>> = Mutex::new(Vec::new());
    let failure: Mutex<Option<CliError>> = Mutex::new(None);
    std::thread::scope(|s| {
        for _ in 0..concurrency.max(1) {
            s.spawn(|| loop {
                if failure.lock().unwrap().is_some() {
                    return;
                }
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(body) = bodies.get(k) else { return };
                match http::post_event(&client, base, body) {
                    Ok(PostOutcome::Stored) => {
                        stored.fetch_add(1, Ordering::Relaxed);
                    }
                    Ok(PostOutcome::Duplicate) => {
                        duplicates.fetch_add(1, Ordering::Relaxed);
                    }
                    Ok(PostOutcome::Rejected(why)) => rejections.lock().unwrap().push((k + 1, why)),
                    Err(e) => {
                        failure.lock().unwrap().get_or_insert(e);
                        return;
                    }
                }
            });
        }
    });
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    let after = http::health_count(&client, base)?;
    let mut rejections = rejections.into_inner().unwrap();
    rejections.sort();
    let summary = ReplaySummary {
        events: events.len(),
        stored: stored.into_inner(),
        duplicates: duplicates.into_inner(),
        rejected: rejections.len(),
        count_before: before,
        count_after: after,
    };
    println!("{}", serde_json::to_string(&summary).expect("summary serializes"));
    for (line, why) in rejections.iter().take(10) {
        eprintln!("line {line} rejected: {why}");
    }
    if !rejections.is_empty() {
        return Err(CliError::Data(format!("{} events rejected by the service", rejections.len())));
    }
    let expected = before + summary.stored as u64;
    if after != expected {
        return Err(CliError::Data(format!(
            "health count is {after}, expected {expected} (another writer active?)"
        )));
    }
    Ok(())
}

pub fn fetch(
    config: &KvConfig,
    url: &str,
    output: &Path,
    api_key: Option<String>,
    since: Option<i64>,
    until: Option<i64>,
) -> Result<(), CliError> {
    let key = api_key
        .or_else(|| config.get("service.apiReadKey").map(str::to_owned))
        .ok_or_else(|| CliError::Config("no read key: pass --api-key or set service.apiReadKey".into()))?;
    let client = http::client()?;
    let body = http::fetch_events(&client, url.trim_end_matches('/'), &key, since, until)?;
    let mut events = Vec::new();
    for (n, line) in body.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let mut value: Value = serde_json::from_str(line)
            .map_err(|e| CliError::Io(format!("response line {}: {e}", n + 1)))?;
        if let Some(obj) = value.as_object_mut() {
            obj.remove("receivedAt");
        }
        let event: ClickEvent = serde_json::from_value(value)
            .map_err(|e| CliError::Io(format!("response line {}: {e}", n + 1)))?;
        events.push(event);
    }
    create_dir(output)?;
    let path = output.join(EVENTS_FILE);
    write_events_file(&path, &events).map_err(io(path.display()))?;
    println!("fetched {} events to {}", events.len(), path.display());
    Ok(())
}

pub fn preprocess(
    config: &KvConfig,
    input: &Path,
    output: &Path,
    burn_in_days: Option<u32>,
) -> Result<(), CliError> {
    let defaults = PreprocessConfig::default();
    let cfg = PreprocessConfig {
        burn_in_days: match burn_in_days {
            Some(d) => d,
            None => config.parsed_or("preprocess.burnInDays", defaults.burn_in_days)?,
        },
        drop_invalid_classification: config
            .parsed_or("preprocess.dropInvalidClassification", defaults.drop_invalid_classification)?,
    };
    let events = read_input(input)?;
    let (kept, report) = run_preprocess(events, &cfg);
    create_dir(output)?;
    let path = output.join(EVENTS_FILE);
    write_events_file(&path, &kept).map_err(io(path.display()))?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_file(&output.join(DROP_REPORT_FILE), &json)?;
    println!("{}", serde_json::to_string(&report).expect("report serializes"));
    Ok(())
}

fn report_config(config: &KvConfig, seed: Option<u64>, resamples: Option<usize>) -> Result<ReportConfig, CliError> {
    let d = ReportConfig::default();
    let cfg = ReportConfig {
        bootstrap: BootstrapConfig {
            resamples: match resamples {
                Some(r) => r,
                None => config.parsed_or("report.resamples", d.bootstrap.resamples)?,
            },
            level: config.parsed_or("report.level", d.bootstrap.level)?,
            seed: match seed {
                Some(s) => s,
                None => config.parsed_or("report.seed", d.bootstrap.seed)?,
            },
        },
        positions: config.parsed_or("report.positions", d.positions)?,
        conduct_positions: config.parsed_or("report.conductPositions", d.conduct_positions)?,
        percentile_bins: config.parsed_or("report.percentileBins", d.percentile_bins)?,
    };
    if cfg.bootstrap.resamples == 0 {
        return Err(CliError::Config("resamples must be positive".into()));
    }
    if !(cfg.bootstrap.level > 0.0 && cfg.bootstrap.level < 1.0) {
        return Err(CliError::Config("report.level must lie in (0, 1)".into()));
    }
    if cfg.positions == 0 || cfg.conduct_positions == 0 || cfg.percentile_bins == 0 {
        return Err(CliError::Config("report positions and bins must be positive".into()));
    }
    Ok(cfg)
}

/// Drop report written by `preprocess` next to its output, if any.
fn sibling_drop_report(input: &Path) -> Result<Option<DropReport>, CliError> {
    let Some(dir) = resolve_input(input).parent().map(Path::to_path_buf) else {
        return Ok(None);
    };
    let path = dir.join(DROP_REPORT_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(io(path.display()))?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn report(
    config: &KvConfig,
    input: &Path,
    output: &Path,
    seed: Option<u64>,
    resamples: Option<usize>,
) -> Result<(), CliError> {
    let cfg = report_config(config, seed, resamples)?;
    let events = read_input(input)?;
    let drops = sibling_drop_report(input)?;
    let report = build_report(&events, &cfg, drops);
    create_dir(output)?;
    write_file(&output.join("report.json"), &report.to_json())?;
    write_file(&output.join("report.csv"), &report.to_csv())?;
    for b in &report.pp_lower_bounds {
        println!("{}: performative power >= {:.4}", b.engine.as_str(), b.pp_lower_bound);
    }
    println!("wrote {} estimates to {}", report.estimates.len(), output.display());
    Ok(())
}

pub fn assign(config: &KvConfig, user: &str, query: &str, engine: Engine) -> Result<(), CliError> {
    let experiment = ExperimentConfig::from_kv(config)?;
    println!("{}", experiment.assign(user, query, engine));
    Ok(())
}
