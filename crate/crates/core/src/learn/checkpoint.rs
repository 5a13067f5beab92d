//! Learner snapshots as JSON.
//!
//! Floats are written with round-trip precision, so a restored learner
//! continues bit-identically. Replay buffers are not stored: snapshots are
//! taken between frames, where buffers are empty by construction.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::dqn::DqnAgent;
use super::maddpg::{AgentNets, Maddpg};
use super::mlp::{Head, Mlp};
use super::replay::ReplayBuffer;
use super::train::{Learner, Method, TrainSchedule};
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::rng::SeedTree;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetState {
    pub shapes: Vec<(usize, usize)>,
    pub heads: Vec<Head>,
    pub tensors: Vec<Vec<f64>>,
}

impl NetState {
    fn capture(net: &Mlp) -> Self {
        Self {
            shapes: net.shapes(),
            heads: net.heads().to_vec(),
            tensors: net.tensors().map(<[f64]>::to_vec).collect(),
        }
    }

    fn restore(&self) -> Result<Mlp> {
        Mlp::from_tensors(&self.shapes, &self.tensors, self.heads.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub actor: NetState,
    pub actor_target: NetState,
    pub critic: NetState,
    pub critic_target: NetState,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotState {
    pub uav: usize,
    pub slot: usize,
    pub q: NetState,
    pub target: NetState,
    pub opt: Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerCheckpoint {
    pub version: u32,
    pub method: Method,
    pub schedule: TrainSchedule,
    pub env: EnvConfig,
    pub master_seed: u64,
    pub updates: u64,
    pub agents: Vec<AgentState>,
    pub slots: Vec<SlotState>,
}

impl LearnerCheckpoint {
    pub fn capture(learner: &Learner) -> Self {
        let agents = learner
            .maddpg
            .agents
            .iter()
            .map(|a| AgentState {
                actor: NetState::capture(&a.actor),
                actor_target: NetState::capture(&a.actor_target),
                critic: NetState::capture(&a.critic),
                critic_target: NetState::capture(&a.critic_target),
                actor_opt: a.actor_opt.clone(),
                critic_opt: a.critic_opt.clone(),
            })
            .collect();
        let mut slots = Vec::new();
        for (uav, row) in learner.dqn.iter().enumerate() {
            for (slot, agent) in row.iter().enumerate() {
                if let Some(a) = agent {
                    slots.push(SlotState {
                        uav,
                        slot,
                        q: NetState::capture(&a.q),
                        target: NetState::capture(&a.target),
                        opt: a.opt.clone(),
                    });
                }
            }
        }
        Self {
            version: CHECKPOINT_VERSION,
            method: learner.method,
            schedule: learner.schedule.clone(),
            env: learner.env.clone(),
            master_seed: learner.seeds.master(),
            updates: learner.updates,
            agents,
            slots,
        }
    }

    pub fn restore(&self) -> Result<Learner> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "version {} is not supported (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        let mut learner = Learner::new(
            self.method,
            self.schedule.clone(),
            self.env.clone(),
            SeedTree::new(self.master_seed),
        )?;
        if self.agents.len() != learner.maddpg.agents.len() {
            return Err(Error::Checkpoint(format!(
                "{} actor-critic agents stored, {} expected",
                self.agents.len(),
                learner.maddpg.agents.len()
            )));
        }
        let config = learner.maddpg.config.clone();
        let agents = self
            .agents
            .iter()
            .map(|a| {
                Ok(AgentNets {
                    actor: a.actor.restore()?,
                    actor_target: a.actor_target.restore()?,
                    critic: a.critic.restore()?,
                    critic_target: a.critic_target.restore()?,
                    actor_opt: a.actor_opt.clone(),
                    critic_opt: a.critic_opt.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        learner.maddpg = Maddpg { config, agents };
        for s in &self.slots {
            let cell = learner
                .dqn
                .get_mut(s.uav)
                .and_then(|row| row.get_mut(s.slot))
                .ok_or_else(|| Error::Checkpoint(format!("slot ({}, {}) out of range", s.uav, s.slot)))?;
            *cell = Some(DqnAgent {
                q: s.q.restore()?,
                target: s.target.restore()?,
                opt: s.opt.clone(),
                buffer: ReplayBuffer::new(self.schedule.replay_capacity)?,
            });
        }
        learner.updates = self.updates;
        Ok(learner)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
    }
}
