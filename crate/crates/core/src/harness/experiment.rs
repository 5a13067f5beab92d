//! Multi-seed runs with on-disk outputs and a JSON summary.
//!
//! Everything is written to a staging directory next to the target and
//! renamed into place at the end, so a failed run leaves nothing behind.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use super::output::{AuditLog, FrameRecord, RunRecorder, ServedRow};
use crate::env::frame::frame_loop;
use crate::error::{Error, Result};
use crate::learn::Method;

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "config.txt";
pub const COMPARISON_FILE: &str = "comparison.csv";

/// JSON schema of `summary.json`.
pub const SUMMARY_SCHEMA: &str = include_str!("../../schema/summary.schema.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedSummary {
    pub seed: u64,
    pub frames: Vec<FrameRecord>,
    pub mean_served: f64,
    pub audit: AuditLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSummary {
    pub schema_version: u32,
    /// Method name, or `none` for mobility and clustering only.
    pub method: String,
    pub r_th: f64,
    /// SHA-256 of the resolved config without method, seeds and output path.
    pub config_hash: String,
    pub seeds: Vec<SeedSummary>,
    /// Served UEs per frame, averaged over frames and seeds.
    pub mean_served: f64,
    /// Wall-clock time per seed; never written, so outputs stay reproducible.
    #[serde(skip)]
    pub wall_clock: Vec<Duration>,
}

impl RunSummary {
    pub fn violations(&self) -> u64 {
        self.seeds.iter().map(|s| s.audit.violations).sum()
    }

    pub fn audited_steps(&self) -> u64 {
        self.seeds.iter().map(|s| s.audit.steps).sum()
    }

    /// Per-episode mean rewards of one seed, in run order.
    pub fn episode_rewards(&self, seed_index: usize) -> Vec<f64> {
        self.seeds[seed_index]
            .frames
            .iter()
            .flat_map(|f| f.episodes.iter().map(|e| e.mean_reward))
            .collect()
    }
}

pub fn config_hash(config: &ExperimentConfig) -> String {
    let digest = Sha256::digest(config.result_key().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn run_seed(
    config: &ExperimentConfig,
    method: Option<Method>,
    dir: &Path,
    seed: u64,
) -> Result<(SeedSummary, Duration)> {
    let scenario = &config.scenario;
    let started = Instant::now();
    let mut recorder = RunRecorder::create(
        &dir.join(format!("seed-{seed}")),
        scenario.grid.cell_size_m,
        scenario.env.r_th,
        method.is_some(),
    )?;
    frame_loop(scenario, method, &config.schedule, seed, config.frames, &mut recorder)?;
    let (audit, frames) = recorder.finish()?;
    let elapsed = started.elapsed();
    Ok((
        SeedSummary {
            seed,
            mean_served: mean(frames.iter().map(|f| f.served as f64)),
            frames,
            audit,
        },
        elapsed,
    ))
}

/// Run every seed into `dir` (no staging). Seeds are spread over worker
/// threads; each writes only its own `seed-<n>` directory.
fn run_into(config: &ExperimentConfig, method: Option<Method>, dir: &Path) -> Result<RunSummary> {
    config.validate()?;
    let scenario = &config.scenario;
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(config.seeds.len())
        .max(1);
    let next = AtomicUsize::new(0);
    let mut results: Vec<Option<Result<(SeedSummary, Duration)>>> = (0..config.seeds.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        let Some(&seed) = config.seeds.get(i) else { break };
                        done.push((i, run_seed(config, method, dir, seed)));
                    }
                    done
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("seed worker panicked") {
                results[i] = Some(r);
            }
        }
    });
    let mut seeds = Vec::with_capacity(results.len());
    let mut wall_clock = Vec::with_capacity(results.len());
    for r in results {
        let (s, t) = r.expect("every seed ran")?;
        seeds.push(s);
        wall_clock.push(t);
    }
    let summary = RunSummary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        method: method.map_or("none", Method::name).to_string(),
        r_th: scenario.env.r_th,
        config_hash: config_hash(config),
        mean_served: mean(seeds.iter().map(|s| s.mean_served)),
        seeds,
        wall_clock,
    };
    write_text(&dir.join(CONFIG_FILE), &config.dump())?;
    write_text(
        &dir.join(SUMMARY_FILE),
        &(serde_json::to_string_pretty(&summary)? + "\n"),
    )?;
    Ok(summary)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Run `body` against a fresh staging directory, then move it to `out`.
fn staged<T>(out: &Path, body: impl FnOnce(&Path) -> Result<T>) -> Result<T> {
    let name = out
        .file_name()
        .ok_or_else(|| Error::config("out_dir", format!("`{}` has no final component", out.display())))?;
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent).map_err(|e| Error::io(&parent, e))?;
    let staging = parent.join(format!(".{}.partial-{}", name.to_string_lossy(), std::process::id()));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    let result = body(&staging).and_then(|value| {
        replace_dir(&staging, out)?;
        Ok(value)
    });
    if result.is_err() {
        let _ = fs::remove_dir_all(&staging);
    }
    result
}

/// Replace `out` with `staging`. An existing `out` is only removed when it
/// is empty or holds a previous run (it has a config dump).
fn replace_dir(staging: &Path, out: &Path) -> Result<()> {
    if out.exists() {
        let empty = fs::read_dir(out).map_err(|e| Error::io(out, e))?.next().is_none();
        if !empty && !out.join(CONFIG_FILE).is_file() {
            return Err(Error::config(
                "out_dir",
                format!("`{}` exists and does not hold a previous run", out.display()),
            ));
        }
        fs::remove_dir_all(out).map_err(|e| Error::io(out, e))?;
    }
    fs::rename(staging, out).map_err(|e| Error::io(out, e))
}

/// Run the configured method over all seeds and write outputs to `out_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunSummary> {
    config.validate()?;
    staged(&config.out_dir, |dir| run_into(config, Some(config.method), dir))
}

/// Mobility and clustering only: trajectory and cluster CSVs.
pub fn run_simulation(config: &ExperimentConfig) -> Result<RunSummary> {
    config.validate()?;
    staged(&config.out_dir, |dir| run_into(config, None, dir))
}

pub fn run_baseline_static(config: &ExperimentConfig) -> Result<RunSummary> {
    run_experiment(&ExperimentConfig {
        method: Method::Static,
        ..config.clone()
    })
}

pub fn run_baseline_maddpg_only(config: &ExperimentConfig) -> Result<RunSummary> {
    run_experiment(&ExperimentConfig {
        method: Method::MaddpgOnly,
        ..config.clone()
    })
}

/// One row of the cross-method comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    pub seed: u64,
    pub frame: u64,
    pub r_th: f64,
    pub served: usize,
}

/// Every method at every rate threshold on the same seeds. Outputs go to
/// `out_dir/r_th-<bps>/<method>/`, plus a combined `comparison.csv`.
pub fn run_evaluation(config: &ExperimentConfig, methods: &[Method], thresholds: &[f64]) -> Result<Vec<RunSummary>> {
    config.validate()?;
    if methods.is_empty() || thresholds.is_empty() {
        return Err(Error::config("method", "nothing to evaluate"));
    }
    staged(&config.out_dir, |dir| {
        let mut summaries = Vec::new();
        let mut rows = Vec::new();
        for &r_th in thresholds {
            let mut c = config.clone();
            c.scenario.env.r_th = r_th;
            for &method in methods {
                c.method = method;
                let sub = dir.join(format!("r_th-{r_th}")).join(method.name());
                let summary = run_into(&c, Some(method), &sub)?;
                for s in &summary.seeds {
                    rows.extend(s.frames.iter().map(|f| ComparisonRow {
                        method: method.name().to_string(),
                        seed: s.seed,
                        frame: f.frame,
                        r_th,
                        served: f.served,
                    }));
                }
                summaries.push(summary);
            }
        }
        let path = dir.join(COMPARISON_FILE);
        let mut w = csv::Writer::from_path(&path)?;
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        write_text(&dir.join(CONFIG_FILE), &config.dump())?;
        Ok(summaries)
    })
}

/// Served counts per frame from a run directory's `served.csv` files.
pub fn read_served(dir: &Path, seed: u64) -> Result<Vec<ServedRow>> {
    super::output::read_rows(&dir.join(format!("seed-{seed}")).join(super::output::SERVED_FILE))
}
