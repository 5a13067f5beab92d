//! Frame-by-frame driver: move UEs, recluster, place UAVs, optimize.
//!
//! Learners persist across frames; replay buffers and allocations are reset
//! at every frame. Mobility, clustering and fading draws depend only on the
//! master seed, so every method sees the same worlds.

use serde::{Deserialize, Serialize};

use super::{EnvConfig, World};
use crate::channel::{EnvConstants, FadingField};
use crate::clustering::{match_to_previous, select_k, ClusterPlan, Point};
use crate::error::{Error, Result};
use crate::learn::checkpoint::LearnerCheckpoint;
use crate::learn::{run_static_frame, FrameReport, Learner, Method, StepObserver, TrainSchedule};
use crate::mobility::{init_positions, step_frame, GridPos, GridWorld, UeState};
use crate::rng::{SeedTree, Stream};

/// Everything that defines the simulated world for one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub grid: GridWorld,
    /// Attraction points drawn per seed when `grid.attraction_points` is empty.
    pub attraction_count: usize,
    pub env: EnvConfig,
    pub constants: EnvConstants,
    pub kmeans_restarts: usize,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.constants.validate()?;
        if self.grid.attraction_points.is_empty() && self.attraction_count == 0 {
            return Err(Error::InvalidParameter {
                name: "attraction_points",
                reason: "need at least one attraction point".into(),
            });
        }
        if self.kmeans_restarts == 0 {
            return Err(Error::InvalidParameter {
                name: "kmeans_restarts",
                reason: "must be positive".into(),
            });
        }
        Ok(())
    }

    /// Upper corner of the field spanned by cell centers.
    pub fn field_max(&self) -> Point {
        [
            (self.grid.width - 1) as f64 * self.grid.cell_size_m,
            (self.grid.height - 1) as f64 * self.grid.cell_size_m,
        ]
    }

    fn grid_for(&self, seeds: &SeedTree) -> Result<GridWorld> {
        let mut grid = self.grid.clone();
        if grid.attraction_points.is_empty() {
            let mut rng = seeds.rng(Stream::Attraction, &[]);
            grid.attraction_points =
                GridWorld::random_attractions(grid.width, grid.height, self.attraction_count, &mut rng);
        }
        grid.validate()?;
        Ok(grid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSummary {
    pub frame: u64,
    pub k_star: usize,
    pub served_total: usize,
    pub method: String,
}

pub trait FrameSink: StepObserver {
    fn on_frame(
        &mut self,
        summary: &FrameSummary,
        ues: &UeState,
        plan: &ClusterPlan,
        report: Option<&FrameReport>,
    ) -> Result<()>;
}

/// Resumable state between frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunCheckpoint {
    pub next_frame: u64,
    pub ues: Option<UeState>,
    pub attraction_points: Vec<GridPos>,
    pub previous_centroids: Vec<Option<Point>>,
    pub learner: Option<LearnerCheckpoint>,
}

pub struct FrameRunner {
    scenario: Scenario,
    grid: GridWorld,
    seeds: SeedTree,
    method: Option<Method>,
    schedule: TrainSchedule,
    learner: Option<Learner>,
    ues: Option<UeState>,
    previous: Vec<Option<Point>>,
    next_frame: u64,
}

impl FrameRunner {
    /// `method = None` runs mobility and clustering only.
    pub fn new(scenario: Scenario, method: Option<Method>, schedule: TrainSchedule, seed: u64) -> Result<Self> {
        scenario.validate()?;
        schedule.validate()?;
        let seeds = SeedTree::new(seed);
        let grid = scenario.grid_for(&seeds)?;
        let learner = match method {
            Some(m @ (Method::Flare | Method::MaddpgOnly)) => {
                Some(Learner::new(m, schedule.clone(), scenario.env.clone(), seeds)?)
            }
            _ => None,
        };
        let k_max = scenario.env.k_max;
        Ok(Self {
            scenario,
            grid,
            seeds,
            method,
            schedule,
            learner,
            ues: None,
            previous: vec![None; k_max],
            next_frame: 0,
        })
    }

    pub fn grid(&self) -> &GridWorld {
        &self.grid
    }

    pub fn next_frame(&self) -> u64 {
        self.next_frame
    }

    pub fn learner(&self) -> Option<&Learner> {
        self.learner.as_ref()
    }

    pub fn checkpoint(&self) -> RunCheckpoint {
        RunCheckpoint {
            next_frame: self.next_frame,
            ues: self.ues.clone(),
            attraction_points: self.grid.attraction_points.clone(),
            previous_centroids: self.previous.clone(),
            learner: self.learner.as_ref().map(LearnerCheckpoint::capture),
        }
    }

    pub fn resume(&mut self, ckpt: &RunCheckpoint) -> Result<()> {
        if ckpt.previous_centroids.len() != self.scenario.env.k_max {
            return Err(Error::Checkpoint("UAV count does not match the scenario".into()));
        }
        if ckpt.learner.is_some() != self.learner.is_some() {
            return Err(Error::Checkpoint("learner presence does not match the method".into()));
        }
        if let Some(l) = &ckpt.learner {
            self.learner = Some(l.restore()?);
        }
        self.grid.attraction_points = ckpt.attraction_points.clone();
        self.ues = ckpt.ues.clone();
        self.previous = ckpt.previous_centroids.clone();
        self.next_frame = ckpt.next_frame;
        Ok(())
    }

    /// Advance one frame and report it to `sink`.
    pub fn step(&mut self, sink: &mut dyn FrameSink) -> Result<FrameSummary> {
        let frame = self.next_frame;
        let ues = match &self.ues {
            None => {
                let mut rng = self.seeds.rng(Stream::Mobility, &[u64::MAX]);
                init_positions(self.scenario.env.n_ues, &self.grid, &mut rng)?
            }
            Some(u) => u.clone(),
        };
        let ues = step_frame(&ues, &self.grid, &mut self.seeds.rng(Stream::Mobility, &[frame]))?;
        let points = ues.physical(self.grid.cell_size_m);
        let mut plan = select_k(
            &points,
            self.scenario.env.k_max,
            self.scenario.kmeans_restarts,
            &mut self.seeds.rng(Stream::Clustering, &[frame]),
        )?;
        match_to_previous(&mut plan, &self.previous);
        let mut previous = vec![None; self.scenario.env.k_max];
        for (c, &u) in plan.uav_of_cluster.iter().enumerate() {
            previous[u] = Some(plan.centroids[c]);
        }

        let report = match self.method {
            None => None,
            Some(method) => {
                let mut world = World::new(
                    self.scenario.env.clone(),
                    self.scenario.constants,
                    points,
                    &plan,
                    self.scenario.field_max(),
                )?;
                let fading = FadingField::new(self.seeds, self.scenario.constants);
                Some(match (&mut self.learner, method) {
                    (Some(learner), _) => learner.run_frame(&mut world, &fading, frame, sink)?,
                    (None, _) => run_static_frame(&mut world, &fading, frame, &self.schedule, sink)?,
                })
            }
        };
        let summary = FrameSummary {
            frame,
            k_star: plan.k_star,
            served_total: report.as_ref().map_or(0, FrameReport::served_total),
            method: self.method.map_or("none", Method::name).to_string(),
        };
        sink.on_frame(&summary, &ues, &plan, report.as_ref())?;
        self.ues = Some(ues);
        self.previous = previous;
        self.next_frame += 1;
        Ok(summary)
    }
}

/// Run `frames` frames from scratch.
pub fn frame_loop(
    scenario: &Scenario,
    method: Option<Method>,
    schedule: &TrainSchedule,
    seed: u64,
    frames: u64,
    sink: &mut dyn FrameSink,
) -> Result<Vec<FrameSummary>> {
    let mut runner = FrameRunner::new(scenario.clone(), method, schedule.clone(), seed)?;
    (0..frames).map(|_| runner.step(sink)).collect()
}
