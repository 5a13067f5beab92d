//! CSV emission for one seed's run, plus the per-step constraint audit.

use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::clustering::{cluster_rows, ClusterPlan, ClusterRow};
use crate::env::frame::{FrameSink, FrameSummary};
use crate::error::{Error, Result};
use crate::learn::{EpisodeStats, FrameReport, StepObserver, StepView};
use crate::mobility::{trajectory_rows, TrajectoryRow, UeState};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const CLUSTERS_FILE: &str = "clusters.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const K_STAR_FILE: &str = "k_star.csv";
pub const SERVED_FILE: &str = "served.csv";
pub const REWARDS_FILE: &str = "rewards.csv";
pub const SEARCH_FILE: &str = "search_steps.csv";

/// Per-UAV state after one timestep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub frame: u64,
    pub episode: u64,
    pub timestep: u64,
    pub uav_id: usize,
    pub served_count: usize,
    pub reward: f64,
    pub sum_power_w: f64,
    pub sum_blocks: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KStarRow {
    pub frame: u64,
    pub k_star: usize,
    pub mean_silhouette: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServedRow {
    pub frame: u64,
    pub r_th: f64,
    pub served: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardRow {
    pub frame: u64,
    pub episode: usize,
    pub mean_reward: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchRow {
    pub frame: u64,
    pub episode: usize,
    pub mean_search_steps: f64,
}

fn create(dir: &Path, name: &str) -> Result<csv::Writer<File>> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    Ok(csv::Writer::from_writer(file))
}

/// Parse a CSV file written by this module.
pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::io(path, e))?;
    parse_rows(&text)
}

pub fn parse_rows<T: DeserializeOwned>(text: &str) -> Result<Vec<T>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(Error::from)
}

pub fn emit_rows<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io("<memory>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output of numeric rows is UTF-8"))
}

/// Constraint violations seen over every logged step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditLog {
    pub steps: u64,
    pub violations: u64,
    /// The first few violation messages.
    pub examples: Vec<String>,
}

impl AuditLog {
    const KEEP: usize = 8;

    pub fn check(&mut self, view: &StepView<'_>) {
        self.steps += 1;
        if let Err(e) = view.world.audit(view.outcome) {
            self.violations += 1;
            if self.examples.len() < Self::KEEP {
                self.examples.push(format!(
                    "frame {} episode {} step {}: {e}",
                    view.frame, view.episode, view.step
                ));
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame: u64,
    pub k_star: usize,
    pub served: usize,
    pub episodes: Vec<EpisodeStats>,
}

struct LearnedFiles {
    metrics: csv::Writer<File>,
    k_star: csv::Writer<File>,
    served: csv::Writer<File>,
    rewards: csv::Writer<File>,
    search: csv::Writer<File>,
}

/// Streams one seed's outputs into `dir`.
pub struct RunRecorder {
    dir: PathBuf,
    cell_size_m: f64,
    r_th: f64,
    trajectory: csv::Writer<File>,
    clusters: csv::Writer<File>,
    learned: Option<LearnedFiles>,
    pub audit: AuditLog,
    pub frames: Vec<FrameRecord>,
}

impl RunRecorder {
    /// `with_metrics = false` writes trajectories and clusters only.
    pub fn create(dir: &Path, cell_size_m: f64, r_th: f64, with_metrics: bool) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let learned = if with_metrics {
            Some(LearnedFiles {
                metrics: create(dir, METRICS_FILE)?,
                k_star: create(dir, K_STAR_FILE)?,
                served: create(dir, SERVED_FILE)?,
                rewards: create(dir, REWARDS_FILE)?,
                search: create(dir, SEARCH_FILE)?,
            })
        } else {
            None
        };
        Ok(Self {
            dir: dir.to_path_buf(),
            cell_size_m,
            r_th,
            trajectory: create(dir, TRAJECTORY_FILE)?,
            clusters: create(dir, CLUSTERS_FILE)?,
            learned,
            audit: AuditLog::default(),
            frames: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn finish(mut self) -> Result<(AuditLog, Vec<FrameRecord>)> {
        self.trajectory.flush().map_err(|e| Error::io(&self.dir, e))?;
        self.clusters.flush().map_err(|e| Error::io(&self.dir, e))?;
        if let Some(l) = &mut self.learned {
            for w in [
                &mut l.metrics,
                &mut l.k_star,
                &mut l.served,
                &mut l.rewards,
                &mut l.search,
            ] {
                w.flush().map_err(|e| Error::io(&self.dir, e))?;
            }
        }
        Ok((self.audit, self.frames))
    }
}

impl StepObserver for RunRecorder {
    fn on_step(&mut self, view: &StepView<'_>) -> Result<()> {
        self.audit.check(view);
        if let Some(l) = &mut self.learned {
            for (uav_id, a) in view.world.agents.iter().enumerate().filter(|(_, a)| a.active) {
                l.metrics.serialize(MetricsRow {
                    frame: view.frame,
                    episode: view.episode,
                    timestep: view.step,
                    uav_id,
                    served_count: a.served_count(),
                    reward: view.outcome.agent_rewards[uav_id],
                    sum_power_w: a.sum_power(),
                    sum_blocks: a.sum_blocks(),
                })?;
            }
        }
        Ok(())
    }
}

impl FrameSink for RunRecorder {
    fn on_frame(
        &mut self,
        summary: &FrameSummary,
        ues: &UeState,
        plan: &ClusterPlan,
        report: Option<&FrameReport>,
    ) -> Result<()> {
        let frame = summary.frame as usize;
        for row in trajectory_rows(frame, ues, self.cell_size_m) {
            self.trajectory.serialize(row)?;
        }
        for row in cluster_rows(frame, plan) {
            self.clusters.serialize(row)?;
        }
        if let Some(l) = &mut self.learned {
            l.k_star.serialize(KStarRow {
                frame: summary.frame,
                k_star: plan.k_star,
                mean_silhouette: plan.silhouette_mean,
            })?;
            l.served.serialize(ServedRow {
                frame: summary.frame,
                r_th: self.r_th,
                served: summary.served_total,
            })?;
            for ep in report.map_or(&[][..], |r| &r.episodes) {
                l.rewards.serialize(RewardRow {
                    frame: summary.frame,
                    episode: ep.episode,
                    mean_reward: ep.mean_reward,
                })?;
                if let Some(s) = ep.mean_search_steps {
                    l.search.serialize(SearchRow {
                        frame: summary.frame,
                        episode: ep.episode,
                        mean_search_steps: s,
                    })?;
                }
            }
        }
        self.frames.push(FrameRecord {
            frame: summary.frame,
            k_star: plan.k_star,
            served: summary.served_total,
            episodes: report.map(|r| r.episodes.clone()).unwrap_or_default(),
        });
        Ok(())
    }
}

pub fn read_trajectory(path: &Path) -> Result<Vec<TrajectoryRow>> {
    read_rows(path)
}

pub fn read_clusters(path: &Path) -> Result<Vec<ClusterRow>> {
    read_rows(path)
}
