//! `run` and `sweep`: episode execution and file outputs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::geometry::{SigmaPointSet, SIGMA_COUNT};
use crate::sim::{generate_scenario, run_episode, EpisodeMetrics, EpisodeOptions, EpisodeRun, Mode, SimError};
use crate::tasklogic::{AscScheduler, RewardBreakdown, TerminalStatus};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const AGGREGATE_FILE: &str = "aggregate.json";

#[derive(Debug, Error)]
pub enum AppError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid seed range `{0}`; expected A..B or A..=B")]
    SeedRange(String),
    #[error("{failed} of {total} seeds failed")]
    PartialFailure { failed: usize, total: usize },
}

pub type Result<T> = std::result::Result<T, AppError>;

#[derive(Debug, Clone, Copy, Default)]
pub struct RunFlags {
    pub mode: Mode,
    /// Negative control: the main filter ignores ego-motion.
    pub disable_ego_compensation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub config_path: String,
    pub seeds: Vec<u64>,
    pub mode: Mode,
    pub out_dir: String,
    pub files: Vec<String>,
    pub tool_version: String,
    pub config_hash: String,
}

/// Parses `A..B` (half-open) or `A..=B` (inclusive).
pub fn parse_seed_range(text: &str) -> Result<Vec<u64>> {
    let err = || AppError::SeedRange(text.to_owned());
    let (lo, hi, inclusive) = if let Some((a, b)) = text.split_once("..=") {
        (a, b, true)
    } else if let Some((a, b)) = text.split_once("..") {
        (a, b, false)
    } else {
        return Err(err());
    };
    let lo: u64 = lo.trim().parse().map_err(|_| err())?;
    let hi: u64 = hi.trim().parse().map_err(|_| err())?;
    let seeds: Vec<u64> = if inclusive { (lo..=hi).collect() } else { (lo..hi).collect() };
    if seeds.is_empty() {
        return Err(err());
    }
    Ok(seeds)
}

pub fn episode(cfg: &RunConfig, seed: u64, flags: RunFlags) -> Result<EpisodeRun> {
    let mut scenario = cfg.scenario.clone();
    scenario.seed = seed;
    let horizon = cfg.filter.history_horizon(scenario.control_period());
    let bundle = generate_scenario(&scenario, flags.mode, horizon)?;
    let opts = EpisodeOptions {
        filter: cfg.filter.clone(),
        drift: (flags.mode == Mode::Training).then_some(cfg.drift),
        task: cfg.task_setup(),
        disable_ego_compensation: flags.disable_ego_compensation,
    };
    Ok(run_episode(&bundle, &opts)?)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| AppError::Write {
        path: path.display().to_string(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|source| AppError::Write {
        path: path.display().to_string(),
        source,
    })
}

fn fmt_f64(out: &mut String, v: f64) {
    if v.is_nan() {
        out.push_str("NaN");
    } else {
        // 17 significant digits round-trip every finite double.
        write!(out, "{v:.16e}").expect("string write");
    }
}

const ESTIMATORS: [&str; 3] = ["filter", "zoh", "nocomp"];

pub fn metrics_header(with_reward: bool) -> String {
    let mut cols = vec!["tick".to_owned(), "stamp".to_owned()];
    for est in ESTIMATORS {
        for i in 0..SIGMA_COUNT {
            for axis in ["x", "y", "z"] {
                cols.push(format!("{est}_err_p{i}_{axis}"));
            }
        }
    }
    cols.push("drift_norm".to_owned());
    cols.push("visible".to_owned());
    if with_reward {
        for name in RewardBreakdown::TERM_NAMES {
            cols.push(format!("reward_{name}"));
        }
        cols.push("reward_total".to_owned());
    }
    cols.join(",")
}

/// Tick-level CSV: estimate minus reference per sigma point, NaN where
/// either is missing.
pub fn metrics_csv(run: &EpisodeRun, with_reward: bool) -> String {
    let mut out = metrics_header(with_reward);
    out.push('\n');
    for rec in &run.ticks {
        write!(out, "{}", rec.tick).expect("string write");
        out.push(',');
        fmt_f64(&mut out, rec.stamp);
        let errs = |est: Option<SigmaPointSet>| -> [f64; 3 * SIGMA_COUNT] {
            match (est, rec.reference) {
                (Some(e), Some(r)) => {
                    let (e, r) = (e.to_flat(), r.to_flat());
                    std::array::from_fn(|i| e[i] - r[i])
                }
                _ => [f64::NAN; 3 * SIGMA_COUNT],
            }
        };
        for est in [rec.filter, rec.zoh, rec.no_compensation] {
            for v in errs(est) {
                out.push(',');
                fmt_f64(&mut out, v);
            }
        }
        out.push(',');
        fmt_f64(&mut out, rec.drift.norm());
        write!(out, ",{}", u8::from(rec.visible)).expect("string write");
        if with_reward {
            let (terms, total) = match &rec.reward {
                Some(r) => (r.terms(), r.total),
                None => ([f64::NAN; 7], f64::NAN),
            };
            for v in terms.into_iter().chain([total]) {
                out.push(',');
                fmt_f64(&mut out, v);
            }
        }
        out.push('\n');
    }
    out
}

fn to_pretty_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// Writes metrics.csv and summary.json into `dir`; returns the file names.
fn write_episode(dir: &Path, run: &EpisodeRun, with_reward: bool) -> Result<Vec<String>> {
    create_dir(dir)?;
    write_file(&dir.join(METRICS_FILE), &metrics_csv(run, with_reward))?;
    write_file(&dir.join(SUMMARY_FILE), &to_pretty_json(&run.metrics))?;
    Ok(vec![METRICS_FILE.to_owned(), SUMMARY_FILE.to_owned()])
}

pub fn run(config_path: &Path, seed: Option<u64>, out_dir: &Path, flags: RunFlags) -> Result<RunManifest> {
    let cfg = RunConfig::load(config_path)?;
    let seed = seed.unwrap_or(cfg.scenario.seed);
    let result = episode(&cfg, seed, flags)?;
    let mut files = write_episode(out_dir, &result, cfg.task.is_some())?;
    files.push(MANIFEST_FILE.to_owned());
    let manifest = RunManifest {
        config_path: config_path.display().to_string(),
        seeds: vec![seed],
        mode: flags.mode,
        out_dir: out_dir.display().to_string(),
        files,
        tool_version: VERSION.to_owned(),
        config_hash: cfg.hash(),
    };
    write_file(&out_dir.join(MANIFEST_FILE), &to_pretty_json(&manifest))?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurriculumSummary {
    pub rho: f64,
    pub success_rate: f64,
    pub p_near_optimal: f64,
    pub p_failure_replay: f64,
    pub p_uniform: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateReport {
    pub seeds: Vec<u64>,
    pub completed: Vec<u64>,
    pub failures: Vec<SeedFailure>,
    /// Mean and std across completed seeds of every numeric summary field;
    /// array entries are keyed `name.index`.
    pub metrics: Map<String, Value>,
    /// Curriculum state after feeding outcomes in seed order, when a task
    /// is configured.
    pub curriculum: Option<CurriculumSummary>,
}

fn flatten_numeric(prefix: &str, v: &Value, out: &mut Vec<(String, f64)>) {
    match v {
        Value::Number(n) => out.push((prefix.to_owned(), n.as_f64().expect("finite"))),
        Value::Array(items) => {
            for (i, item) in items.iter().enumerate() {
                flatten_numeric(&format!("{prefix}.{i}"), item, out);
            }
        }
        Value::Object(map) => {
            for (k, item) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten_numeric(&key, item, out);
            }
        }
        _ => {}
    }
}

pub fn aggregate(metrics: &[EpisodeMetrics]) -> Map<String, Value> {
    let rows: Vec<Vec<(String, f64)>> = metrics
        .iter()
        .map(|m| {
            let mut row = Vec::new();
            flatten_numeric("", &serde_json::to_value(m).expect("serializable"), &mut row);
            row.retain(|(k, _)| k != "seed");
            row
        })
        .collect();
    let mut out = Map::new();
    let Some(first) = rows.first() else { return out };
    for (key, _) in first {
        let vals: Vec<f64> = rows
            .iter()
            .filter_map(|r| r.iter().find(|(k, _)| k == key).map(|(_, v)| *v))
            .collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        out.insert(
            key.clone(),
            serde_json::to_value(Stat { mean, std: var.sqrt() }).expect("serializable"),
        );
    }
    out
}

pub fn sweep(config_path: &Path, seeds: &[u64], out_dir: &Path, flags: RunFlags) -> Result<AggregateReport> {
    let cfg = RunConfig::load(config_path)?;
    create_dir(out_dir)?;
    let with_reward = cfg.task.is_some();
    let results: Vec<(u64, std::result::Result<EpisodeMetrics, String>)> = seeds
        .par_iter()
        .map(|&seed| {
            let outcome = episode(&cfg, seed, flags).and_then(|run| {
                write_episode(&seed_dir(out_dir, seed), &run, with_reward)?;
                Ok(run.metrics)
            });
            (seed, outcome.map_err(|e| e.to_string()))
        })
        .collect();

    let mut completed = Vec::new();
    let mut failures = Vec::new();
    let mut metrics = Vec::new();
    for (seed, r) in results {
        match r {
            Ok(m) => {
                completed.push(seed);
                metrics.push(m);
            }
            Err(error) => failures.push(SeedFailure { seed, error }),
        }
    }

    let curriculum = cfg.task.as_ref().map(|task| {
        let mut sched = AscScheduler::new(cfg.asc.clone());
        let outcomes = metrics
            .iter()
            .enumerate()
            .map(|(i, m)| (i, task.task_kind, m.terminal_status.unwrap_or(TerminalStatus::Running), None))
            .collect();
        sched.record_batch(outcomes);
        let state = sched.state(task.task_kind);
        let (near, fail, uniform) = state.init_probabilities(&cfg.asc);
        CurriculumSummary {
            rho: state.rho(),
            success_rate: state.success_rate(),
            p_near_optimal: near,
            p_failure_replay: fail,
            p_uniform: uniform,
        }
    });

    let report = AggregateReport {
        seeds: seeds.to_vec(),
        completed: completed.clone(),
        failures,
        metrics: aggregate(&metrics),
        curriculum,
    };
    write_file(&out_dir.join(AGGREGATE_FILE), &to_pretty_json(&report))?;

    let mut files: Vec<String> = completed
        .iter()
        .flat_map(|s| [METRICS_FILE, SUMMARY_FILE].map(|f| format!("seed_{s}/{f}")))
        .collect();
    files.push(AGGREGATE_FILE.to_owned());
    files.push(MANIFEST_FILE.to_owned());
    let manifest = RunManifest {
        config_path: config_path.display().to_string(),
        seeds: seeds.to_vec(),
        mode: flags.mode,
        out_dir: out_dir.display().to_string(),
        files,
        tool_version: VERSION.to_owned(),
        config_hash: cfg.hash(),
    };
    write_file(&out_dir.join(MANIFEST_FILE), &to_pretty_json(&manifest))?;
    if !report.failures.is_empty() {
        return Err(AppError::PartialFailure {
            failed: report.failures.len(),
            total: seeds.len(),
        });
    }
    Ok(report)
}

/// Per-seed output directory used by [`sweep`].
pub fn seed_dir(out_dir: &Path, seed: u64) -> PathBuf {
    out_dir.join(format!("seed_{seed}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_ranges() {
        assert_eq!(parse_seed_range("0..3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seed_range("4..=5").unwrap(), vec![4, 5]);
        assert!(parse_seed_range("3..3").is_err());
        assert!(parse_seed_range("a..b").is_err());
        assert!(parse_seed_range("7").is_err());
    }

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, 0.0] {
            let mut s = String::new();
            fmt_f64(&mut s, v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
        let mut s = String::new();
        fmt_f64(&mut s, f64::NAN);
        assert_eq!(s, "NaN");
    }

    #[test]
    fn header_width_is_fixed() {
        assert_eq!(metrics_header(false).split(',').count(), 2 + 63 + 2);
        assert_eq!(metrics_header(true).split(',').count(), 2 + 63 + 2 + 8);
    }

    #[test]
    fn aggregate_single_seed_has_zero_std() {
        let m: EpisodeMetrics = serde_json::from_value(serde_json::json!({
            "seed": 1, "mode": "deploy", "ticks": 3, "scored_ticks": 3,
            "filter_rmse": (vec![0.1; 7]), "zoh_rmse": (vec![0.2; 7]), "no_compensation_rmse": (vec![0.3; 7]),
            "filter_centroid_rmse": 0.1, "zoh_centroid_rmse": 0.2,
            "no_compensation_centroid_rmse": 0.3, "velocity_rmse": 0.0,
            "zoh_mean_lag_error": null, "zoh_mean_staleness": 0.3, "visible_fraction": 1.0,
            "max_drift": 0.0, "measurements_taken": 1, "measurements_delivered": 1,
            "measurements_not_visible": 0, "measurements_stale": 0, "reward_sums": null,
            "terminal_status": null, "randomization": null
        }))
        .unwrap();
        let agg = aggregate(&[m]);
        assert_eq!(agg["filter_centroid_rmse"]["std"], 0.0);
        assert_eq!(agg["filter_rmse.0"]["mean"], 0.1);
        assert!(!agg.contains_key("seed"));
    }
}
