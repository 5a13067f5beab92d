//! Block search on static single-UE links, checked against the oracle.
//!
//! Each link has a fixed UAV position, altitude, power and fading draw.
//! A fresh Q-network learns the ±1 block search from zero blocks, exactly
//! as one slot does inside a full run, with altitude and power held fixed.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::oracle::{oracle_min_blocks, OracleBlocks};
use crate::channel::{link_budget, EnvConstants, FadingDraw, FadingIndex, FixedFading, UavTx};
use crate::clustering::ClusterPlan;
use crate::env::{apply_bw_action, EnvConfig, World};
use crate::error::Result;
use crate::learn::dqn::{select_action, DqnAgent, DqnParams, DqnTransition, SLOT_FEATURES};
use crate::learn::LinearSchedule;
use crate::rng::{SeedTree, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkCase {
    /// Horizontal UE-UAV distance, meters.
    pub distance_m: f64,
    pub altitude_m: f64,
    pub power_w: f64,
    pub fading: FadingDraw,
    pub oracle: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSettings {
    pub episodes: usize,
    pub steps: usize,
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub warmup: usize,
    pub update_interval: usize,
    pub epsilon: LinearSchedule,
    /// Oracle minima are drawn from this inclusive range.
    pub min_oracle: u32,
    pub max_oracle: u32,
}

impl Default for BenchmarkSettings {
    fn default() -> Self {
        Self {
            episodes: 50,
            steps: 100,
            hidden: vec![64, 64],
            lr: 1e-3,
            gamma: 0.99,
            tau: 0.01,
            batch_size: 32,
            warmup: 100,
            update_interval: 1,
            epsilon: LinearSchedule {
                start: 1.0,
                end: 0.05,
                fraction: 0.3,
            },
            min_oracle: 1,
            max_oracle: 40,
        }
    }
}

fn single_link_env(r_th: f64) -> EnvConfig {
    EnvConfig {
        n_ues: 1,
        k_max: 1,
        max_cluster_size: 1,
        r_th,
        ..EnvConfig::default()
    }
}

/// Random links whose oracle minimum lies in the configured range.
pub fn random_links(count: usize, r_th: f64, settings: &BenchmarkSettings, seed: u64) -> Result<Vec<LinkCase>> {
    let env = single_link_env(r_th);
    let consts = EnvConstants::default();
    let seeds = SeedTree::new(seed);
    let mut out = Vec::with_capacity(count);
    let mut attempt = 0u64;
    while out.len() < count {
        let mut rng = seeds.rng(Stream::Benchmark, &[attempt]);
        attempt += 1;
        let distance_m = rng.random_range(0.0..3000.0);
        let altitude_m = rng.random_range(env.h_min..=env.h_max);
        let power_w = rng.random_range(0.01..=env.p_max);
        let fading = FadingDraw {
            g: crate::channel::sample_fading(crate::channel::FadingKind::Rician, &mut rng, &consts),
            k: crate::channel::sample_fading(crate::channel::FadingKind::Rayleigh, &mut rng, &consts),
        };
        let tx = [UavTx {
            xyz: [distance_m, 0.0, altitude_m],
            avg_power: power_w,
        }];
        let budget = link_budget([0.0, 0.0], 0, power_w, env.block_size, &tx, &[fading], &consts)?;
        let oracle = oracle_min_blocks(
            budget.power_eff,
            budget.interference,
            consts.noise_power,
            env.block_size,
            env.r_th,
            env.block_limit,
        )?;
        if let OracleBlocks::Blocks(n) = oracle {
            if (settings.min_oracle..=settings.max_oracle).contains(&n) {
                out.push(LinkCase {
                    distance_m,
                    altitude_m,
                    power_w,
                    fading,
                    oracle: n,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkResult {
    pub case: LinkCase,
    /// Block count of the frozen slot in the last episode, if it froze.
    pub frozen_blocks: Option<u32>,
    /// Steps to freeze per episode (`steps` when it never froze).
    pub search_steps: Vec<u64>,
}

impl LinkResult {
    pub fn matches_oracle(&self) -> bool {
        self.frozen_blocks == Some(self.case.oracle)
    }
}

/// Train a fresh Q-network on one link and report its search behavior.
pub fn run_link(case: &LinkCase, r_th: f64, settings: &BenchmarkSettings, seed: u64, index: u64) -> Result<LinkResult> {
    let env = single_link_env(r_th);
    let consts = EnvConstants::default();
    let seeds = SeedTree::new(seed);
    let plan = ClusterPlan {
        k_star: 1,
        assignment: vec![0],
        centroids: vec![[case.distance_m, 0.0]],
        silhouette_mean: 0.0,
        scores: Vec::new(),
        uav_of_cluster: vec![0],
    };
    let mut world = World::new(
        env.clone(),
        consts,
        vec![[0.0, 0.0]],
        &plan,
        [case.distance_m.max(1.0); 2],
    )?;
    let fading = FixedFading(case.fading);
    let params = DqnParams {
        lr: settings.lr,
        gamma: settings.gamma,
        tau: settings.tau,
        capacity: settings.episodes * settings.steps,
    };
    let mut agent = DqnAgent::new(
        env.dqn_obs_dim(),
        &settings.hidden,
        params,
        &mut seeds.rng(Stream::Init, &[2, index]),
    )?;
    let obs_dim = env.obs_dim();
    let total = (settings.episodes * settings.steps) as u64;
    let gate = settings.batch_size.max(settings.warmup);
    let mut search_steps = Vec::with_capacity(settings.episodes);
    let mut updates = 0u64;

    for episode in 0..settings.episodes as u64 {
        world.reset_episode();
        let a = &mut world.agents[0];
        a.h = case.altitude_m;
        a.power_alloc[0] = case.power_w;
        let mut frozen_at = None;
        for step in 0..settings.steps as u64 {
            let global = episode * settings.steps as u64 + step;
            let epsilon = settings.epsilon.value(global, total);
            let mut rng = seeds.rng(Stream::Exploration, &[index, episode, step]);
            let obs = world.agents[0].observe(&env);
            let state = world.agents[0].dqn_observe(&obs, 0, &env);
            let action = select_action(&agent.q, &state, epsilon, &mut rng)?;
            apply_bw_action(&mut world.agents[0], 0, action, env.block_limit);
            let outcome = world.evaluate_step(
                &fading,
                FadingIndex {
                    frame: 0,
                    episode,
                    step,
                },
            )?;
            let frozen = world.agents[0].frozen[0];
            let next_obs = world.agents[0].observe(&env);
            let next_state = world.agents[0].dqn_observe(&next_obs, 0, &env);
            let mut extra = [0.0; SLOT_FEATURES];
            extra.copy_from_slice(&state[obs_dim..]);
            let mut next_extra = [0.0; SLOT_FEATURES];
            next_extra.copy_from_slice(&next_state[obs_dim..]);
            agent.buffer.push(DqnTransition {
                base: obs.into(),
                extra,
                action,
                reward: outcome.dqn_rewards[0],
                next_base: next_obs.into(),
                next_extra,
                done: frozen || step + 1 == settings.steps as u64,
            });
            if agent.buffer.len() % settings.update_interval == 0 && agent.buffer.len() >= gate {
                let mut rng = seeds.rng(Stream::Replay, &[index, updates]);
                let batch: Vec<DqnTransition> = agent
                    .buffer
                    .sample(settings.batch_size, &mut rng)?
                    .into_iter()
                    .cloned()
                    .collect();
                let refs: Vec<&DqnTransition> = batch.iter().collect();
                agent.update(&refs, settings.gamma, settings.tau)?;
                updates += 1;
            }
            if frozen {
                // the search is over; nothing the agent does changes the slot
                frozen_at = Some(step + 1);
                break;
            }
        }
        search_steps.push(frozen_at.unwrap_or(settings.steps as u64));
    }
    let a = &world.agents[0];
    Ok(LinkResult {
        case: *case,
        frozen_blocks: a.frozen[0].then_some(a.blocks[0]),
        search_steps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub links: Vec<LinkResult>,
}

impl BenchmarkReport {
    pub fn oracle_matches(&self) -> usize {
        self.links.iter().filter(|l| l.matches_oracle()).count()
    }

    /// Mean search steps over the first and last `window` episodes, across links.
    pub fn search_trend(&self, window: usize) -> (f64, f64) {
        let mean = |pick: &dyn Fn(&[u64]) -> &[u64]| {
            let (mut sum, mut n) = (0.0, 0usize);
            for l in &self.links {
                for &s in pick(&l.search_steps) {
                    sum += s as f64;
                    n += 1;
                }
            }
            sum / n.max(1) as f64
        };
        let first = mean(&|s| &s[..window.min(s.len())]);
        let last = mean(&|s| &s[s.len().saturating_sub(window)..]);
        (first, last)
    }
}

pub fn run_benchmark(count: usize, r_th: f64, settings: &BenchmarkSettings, seed: u64) -> Result<BenchmarkReport> {
    let cases = random_links(count, r_th, settings, seed)?;
    let links = cases
        .iter()
        .enumerate()
        .map(|(i, c)| run_link(c, r_th, settings, seed, i as u64))
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchmarkReport { links })
}
