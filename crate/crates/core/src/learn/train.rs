//! Episode/timestep loop on one frame snapshot.
//!
//! Per timestep: every active actor emits altitude and power, every occupied
//! slot that has not frozen yet gets a block action from its Q-network, the
//! joint action is applied and scored, transitions are stored (a slot's
//! freezing step is terminal for its Q-network), and (past warmup, every
//! `update_interval` steps) all networks take one gradient step.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::dqn::{self, DqnAgent, DqnParams, DqnTransition, SLOT_FEATURES};
use super::maddpg::{CriticMode, JointTransition, Maddpg, MaddpgConfig};
use super::replay::ReplayBuffer;
use super::schedule::LinearSchedule;
use crate::channel::{FadingIndex, FadingSource};
use crate::env::{apply_bw_action, map_altitude, map_power, BwAction, EnvConfig, StepOutcome, World};
use crate::error::{Error, Result};
use crate::rng::{SeedTree, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Actor-critic altitude/power plus per-UE block search.
    Flare,
    /// Actor-critic altitude/power with equally split blocks.
    MaddpgOnly,
    /// Fixed altitude, equal power and blocks; no learning.
    Static,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Flare, Method::MaddpgOnly, Method::Static];

    pub fn name(self) -> &'static str {
        match self {
            Method::Flare => "flare",
            Method::MaddpgOnly => "maddpg_only",
            Method::Static => "static",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

/// How the actor-critic-only baseline allocates blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineBandwidth {
    /// `floor(block_limit / |C|)` per member.
    EqualSplit,
    /// Actors emit a softmax bandwidth share per slot.
    Learned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub episodes: usize,
    pub steps: usize,
    pub hidden: Vec<usize>,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub lr_dqn: f64,
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub warmup: usize,
    pub update_interval: usize,
    pub sigma: LinearSchedule,
    pub epsilon: LinearSchedule,
    pub critic: CriticMode,
    pub baseline_bandwidth: BaselineBandwidth,
    pub actor_reg: f64,
    pub grad_clip: f64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            episodes: 100,
            steps: 500,
            hidden: vec![64, 64],
            lr_actor: 1e-4,
            lr_critic: 1e-4,
            lr_dqn: 1e-4,
            gamma: 0.99,
            tau: 0.01,
            batch_size: 512,
            replay_capacity: 100_000,
            warmup: 2500,
            update_interval: 1,
            sigma: LinearSchedule {
                start: 0.2,
                end: 0.02,
                fraction: 0.5,
            },
            epsilon: LinearSchedule {
                start: 1.0,
                end: 0.05,
                fraction: 0.3,
            },
            critic: CriticMode::Centralized,
            baseline_bandwidth: BaselineBandwidth::EqualSplit,
            actor_reg: 1.0,
            grad_clip: 0.5,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: &str| {
            Err(Error::InvalidParameter {
                name,
                reason: reason.to_string(),
            })
        };
        if self.episodes == 0 || self.steps == 0 {
            return bad("episodes", "episodes and steps must be positive");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau", "must lie in (0, 1]");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma", "must lie in (0, 1)");
        }
        if self.batch_size == 0 || self.batch_size > self.replay_capacity {
            return bad("batch_size", "must be positive and at most the replay capacity");
        }
        if self.warmup > self.replay_capacity {
            return bad("warmup", "must not exceed the replay capacity");
        }
        if self.update_interval == 0 {
            return bad("update_interval", "must be positive");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden", "need at least one non-empty hidden layer");
        }
        for (name, v) in [
            ("lr_actor", self.lr_actor),
            ("lr_critic", self.lr_critic),
            ("lr_dqn", self.lr_dqn),
            ("actor_reg", self.actor_reg),
            ("grad_clip", self.grad_clip),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(name, "must be a non-negative number");
            }
        }
        Ok(())
    }

    pub fn steps_per_frame(&self) -> u64 {
        (self.episodes * self.steps) as u64
    }

    /// Transitions needed in the replay buffer before any update.
    pub fn update_gate(&self) -> usize {
        self.batch_size.max(self.warmup)
    }
}

/// Everything a metrics sink may want to see after a step.
pub struct StepView<'a> {
    pub frame: u64,
    pub episode: u64,
    pub step: u64,
    pub world: &'a World,
    pub outcome: &'a StepOutcome,
}

pub trait StepObserver {
    fn on_step(&mut self, view: &StepView<'_>) -> Result<()>;
}

impl StepObserver for () {
    fn on_step(&mut self, _view: &StepView<'_>) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub episode: usize,
    /// Total reward over all agents, averaged over timesteps.
    pub mean_reward: f64,
    /// Steps until each occupied slot froze (`steps` if never), averaged
    /// over slots. `None` without a block search.
    pub mean_search_steps: Option<f64>,
    pub served_at_end: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameReport {
    /// Outcome of the last timestep of the last episode.
    pub final_outcome: StepOutcome,
    pub episodes: Vec<EpisodeStats>,
    pub updates: u64,
}

impl FrameReport {
    pub fn served_total(&self) -> usize {
        self.final_outcome.served_total()
    }
}

/// All trainable state of one run.
#[derive(Debug, Clone)]
pub struct Learner {
    pub method: Method,
    pub schedule: TrainSchedule,
    pub env: EnvConfig,
    pub seeds: SeedTree,
    pub maddpg: Maddpg,
    /// `[uav][slot]`; empty without a block search.
    pub dqn: Vec<Vec<Option<DqnAgent>>>,
    pub joint: ReplayBuffer<JointTransition>,
    /// Gradient rounds taken so far over the whole run.
    pub updates: u64,
}

impl Learner {
    pub fn new(method: Method, schedule: TrainSchedule, env: EnvConfig, seeds: SeedTree) -> Result<Self> {
        if method == Method::Static {
            return Err(Error::InvalidParameter {
                name: "method",
                reason: "the static scheme has nothing to train".into(),
            });
        }
        schedule.validate()?;
        env.validate()?;
        let config = MaddpgConfig {
            obs_dim: env.obs_dim(),
            slots: env.slots(),
            agents: env.k_max,
            hidden: schedule.hidden.clone(),
            lr_actor: schedule.lr_actor,
            lr_critic: schedule.lr_critic,
            gamma: schedule.gamma,
            tau: schedule.tau,
            critic: schedule.critic,
            bandwidth_head: method == Method::MaddpgOnly && schedule.baseline_bandwidth == BaselineBandwidth::Learned,
            actor_reg: schedule.actor_reg,
            grad_clip: schedule.grad_clip,
        };
        let maddpg = Maddpg::new(config, &mut seeds.rng(Stream::Init, &[0]))?;
        let dqn = if method == Method::Flare {
            (0..env.k_max)
                .map(|_| (0..env.slots()).map(|_| None).collect())
                .collect()
        } else {
            Vec::new()
        };
        let joint = ReplayBuffer::new(schedule.replay_capacity)?;
        Ok(Self {
            method,
            schedule,
            env,
            seeds,
            maddpg,
            dqn,
            joint,
            updates: 0,
        })
    }

    fn dqn_params(&self) -> DqnParams {
        DqnParams {
            lr: self.schedule.lr_dqn,
            gamma: self.schedule.gamma,
            tau: self.schedule.tau,
            capacity: self.schedule.replay_capacity,
        }
    }

    /// Make sure every occupied slot has a Q-network; clear all buffers.
    fn prepare_frame(&mut self, world: &World) -> Result<()> {
        self.joint.clear();
        if self.method != Method::Flare {
            return Ok(());
        }
        let params = self.dqn_params();
        let dim = self.env.dqn_obs_dim();
        for u in world.active_uavs() {
            for s in 0..world.agents[u].cluster_size() {
                if self.dqn[u][s].is_none() {
                    let mut rng = self.seeds.rng(Stream::Init, &[1, u as u64, s as u64]);
                    self.dqn[u][s] = Some(DqnAgent::new(dim, &self.schedule.hidden, params, &mut rng)?);
                }
            }
        }
        for agent in self.dqn.iter_mut().flatten().flatten() {
            agent.buffer.clear();
        }
        Ok(())
    }

    fn reset_allocation(&self, world: &mut World) {
        world.reset_episode();
        if self.method == Method::MaddpgOnly {
            let cfg = world.cfg.clone();
            for a in world.agents.iter_mut().filter(|a| a.active) {
                a.allocate_equal(&cfg);
            }
        }
    }

    /// Run all episodes of one frame. The world keeps the allocation of the
    /// final timestep.
    pub fn run_frame(
        &mut self,
        world: &mut World,
        fading: &dyn FadingSource,
        frame: u64,
        observer: &mut dyn StepObserver,
    ) -> Result<FrameReport> {
        if world.cfg != self.env {
            return Err(Error::InvalidParameter {
                name: "env",
                reason: "world and learner were built from different settings".into(),
            });
        }
        self.prepare_frame(world)?;
        let active: Vec<usize> = world.active_uavs().collect();
        let masks: Arc<Vec<bool>> = Arc::new(world.agents.iter().flat_map(|a| a.mask()).collect());
        let (obs_dim, slots, k_max) = (self.env.obs_dim(), self.env.slots(), self.env.k_max);
        let action_dim = self.maddpg.config.action_dim();
        let total = self.schedule.steps_per_frame();
        let (episodes, steps) = (self.schedule.episodes as u64, self.schedule.steps as u64);
        let learned_bw = self.maddpg.config.bandwidth_head;
        let start_updates = self.updates;

        let mut episode_stats = Vec::with_capacity(self.schedule.episodes);
        let mut last_outcome = None;
        let mut stored = 0usize;

        for episode in 0..episodes {
            self.reset_allocation(world);
            let mut search: Vec<Vec<Option<u64>>> = vec![vec![None; slots]; k_max];
            let mut reward_sum = 0.0;

            let mut obs: Vec<Arc<Vec<f64>>> = world.agents.iter().map(|a| Arc::new(a.observe(&self.env))).collect();
            let mut joint_obs = Arc::new(obs.iter().flat_map(|o| o.iter().copied()).collect::<Vec<f64>>());

            for step in 0..steps {
                let global = episode * steps + step;
                let sigma = self.schedule.sigma.value(global, total);
                let epsilon = self.schedule.epsilon.value(global, total);
                let mut rng = self.seeds.rng(Stream::Exploration, &[frame, episode, step]);

                let mut actions = vec![0.0; k_max * action_dim];
                for &j in &active {
                    let agent = &world.agents[j];
                    let mask = agent.mask();
                    let act = self.maddpg.select_action(j, &obs[j], &mask, sigma, &mut rng)?;
                    let h = map_altitude(act.raw[0], self.env.h_min, self.env.h_max)?;
                    let power = map_power(&act.raw[1..1 + slots], &mask, self.env.p_max)?;
                    let agent = &mut world.agents[j];
                    agent.h = h;
                    agent.power_alloc = power;
                    if learned_bw {
                        let shares = &act.repr[1 + slots..1 + 2 * slots];
                        for s in 0..slots {
                            agent.blocks[s] = (shares[s] * self.env.block_limit as f64).floor() as u32;
                        }
                    }
                    actions[j * action_dim..(j + 1) * action_dim].copy_from_slice(&act.repr);
                }

                // block actions, chosen on the post-actor state
                let mut bw_choices: Vec<(usize, usize, [f64; SLOT_FEATURES], BwAction)> = Vec::new();
                if self.method == Method::Flare {
                    for &j in &active {
                        for s in 0..world.agents[j].cluster_size() {
                            if world.agents[j].frozen[s] {
                                continue;
                            }
                            let state = world.agents[j].dqn_observe(&obs[j], s, &self.env);
                            let q = &self.dqn[j][s].as_ref().expect("prepared").q;
                            let a = dqn::select_action(q, &state, epsilon, &mut rng)?;
                            let mut extra = [0.0; SLOT_FEATURES];
                            extra.copy_from_slice(&state[obs_dim..]);
                            bw_choices.push((j, s, extra, a));
                        }
                    }
                    for &(j, s, _, a) in &bw_choices {
                        apply_bw_action(&mut world.agents[j], s, a, self.env.block_limit);
                    }
                }

                let at = FadingIndex { frame, episode, step };
                let outcome = world.evaluate_step(fading, at)?;
                observer.on_step(&StepView {
                    frame,
                    episode,
                    step,
                    world,
                    outcome: &outcome,
                })?;
                reward_sum += outcome.agent_rewards.iter().sum::<f64>();
                for &j in &active {
                    for s in 0..world.agents[j].cluster_size() {
                        if search[j][s].is_none() && world.agents[j].frozen[s] {
                            search[j][s] = Some(step + 1);
                        }
                    }
                }

                let done = step + 1 == steps;
                let next_obs: Vec<Arc<Vec<f64>>> =
                    world.agents.iter().map(|a| Arc::new(a.observe(&self.env))).collect();
                let next_joint = Arc::new(next_obs.iter().flat_map(|o| o.iter().copied()).collect::<Vec<f64>>());
                self.joint.push(JointTransition {
                    obs: joint_obs.clone(),
                    actions,
                    rewards: outcome.agent_rewards.clone(),
                    next_obs: next_joint.clone(),
                    masks: masks.clone(),
                    done,
                });
                for (j, s, extra, a) in bw_choices {
                    let agent = &world.agents[j];
                    let next_state = agent.dqn_observe(&next_obs[j], s, &self.env);
                    let mut next_extra = [0.0; SLOT_FEATURES];
                    next_extra.copy_from_slice(&next_state[obs_dim..]);
                    let reward = outcome.dqn_rewards[agent.members[s]];
                    // freezing ends the slot's search
                    let done = done || agent.frozen[s];
                    self.dqn[j][s].as_mut().expect("prepared").buffer.push(DqnTransition {
                        base: obs[j].clone(),
                        extra,
                        action: a,
                        reward,
                        next_base: next_obs[j].clone(),
                        next_extra,
                        done,
                    });
                }
                stored += 1;
                obs = next_obs;
                joint_obs = next_joint;

                if (global + 1) % self.schedule.update_interval as u64 == 0 && stored >= self.schedule.update_gate() {
                    self.update(frame, &active)?;
                }
                last_outcome = Some(outcome);
            }

            let (mut slots_seen, mut search_sum) = (0usize, 0u64);
            for &j in &active {
                for s in 0..world.agents[j].cluster_size() {
                    slots_seen += 1;
                    search_sum += search[j][s].unwrap_or(steps);
                }
            }
            episode_stats.push(EpisodeStats {
                episode: episode as usize,
                mean_reward: reward_sum / steps as f64,
                mean_search_steps: (self.method == Method::Flare && slots_seen > 0)
                    .then(|| search_sum as f64 / slots_seen as f64),
                served_at_end: last_outcome.as_ref().map_or(0, StepOutcome::served_total),
            });
        }

        Ok(FrameReport {
            final_outcome: last_outcome.expect("at least one step"),
            episodes: episode_stats,
            updates: self.updates - start_updates,
        })
    }

    /// One gradient round over all active agents and their slots.
    fn update(&mut self, frame: u64, active: &[usize]) -> Result<()> {
        let batch = self.schedule.batch_size;
        let round = self.updates;
        {
            let mut rng = self.seeds.rng(Stream::Replay, &[frame, round, 0]);
            let sample = self.joint.sample(batch, &mut rng)?;
            self.maddpg.update(&sample, active)?;
        }
        let (gamma, tau, slots) = (self.schedule.gamma, self.schedule.tau, self.env.slots());
        for &j in active {
            for (s, slot) in self.dqn.get_mut(j).into_iter().flatten().enumerate() {
                let Some(agent) = slot.as_mut() else { continue };
                if agent.buffer.len() < batch {
                    continue;
                }
                let mut rng = self
                    .seeds
                    .rng(Stream::Replay, &[frame, round, 1 + (j * slots + s) as u64]);
                let sample: Vec<DqnTransition> = agent.buffer.sample(batch, &mut rng)?.into_iter().cloned().collect();
                let refs: Vec<&DqnTransition> = sample.iter().collect();
                agent.update(&refs, gamma, tau)?;
            }
        }
        self.updates += 1;
        Ok(())
    }

    /// Greedy per-slot block action, for inspection.
    pub fn greedy_bw(&self, uav: usize, slot: usize, state: &[f64]) -> Result<Option<BwAction>> {
        match self.dqn.get(uav).and_then(|v| v.get(slot)).and_then(Option::as_ref) {
            Some(agent) => Ok(Some(dqn::greedy(&agent.q, state)?)),
            None => Ok(None),
        }
    }
}

/// The static scheme on one frame: mid altitude, equal power and blocks,
/// scored at the same fading index as the last learned step.
pub fn run_static_frame(
    world: &mut World,
    fading: &dyn FadingSource,
    frame: u64,
    schedule: &TrainSchedule,
    observer: &mut dyn StepObserver,
) -> Result<FrameReport> {
    let cfg = world.cfg.clone();
    for a in world.agents.iter_mut() {
        a.reset(&cfg);
        if a.active {
            a.allocate_equal(&cfg);
        }
    }
    let episode = schedule.episodes as u64 - 1;
    let step = schedule.steps as u64 - 1;
    let outcome = world.evaluate_step(fading, FadingIndex { frame, episode, step })?;
    observer.on_step(&StepView {
        frame,
        episode,
        step,
        world,
        outcome: &outcome,
    })?;
    Ok(FrameReport {
        final_outcome: outcome,
        episodes: Vec::new(),
        updates: 0,
    })
}
