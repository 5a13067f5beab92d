//! Actor-critic agents for altitude and power.
//!
//! Actors have a `tanh` altitude unit followed by `S` identity power logits
//! (and `S` bandwidth logits in the learned-bandwidth variant). The masked
//! softmax that turns logits into the fractions fed to critics lives here,
//! together with its Jacobian for the policy gradient.

use std::sync::Arc;

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::mlp::{Head, Mlp};
use crate::env::masked_softmax_into;
use crate::error::{ensure_finite, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticMode {
    /// Critics see every agent slot's observation and action.
    Centralized,
    /// Critics see only their own agent.
    Local,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaddpgConfig {
    pub obs_dim: usize,
    pub slots: usize,
    pub agents: usize,
    pub hidden: Vec<usize>,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub gamma: f64,
    pub tau: f64,
    pub critic: CriticMode,
    /// Add a bandwidth logit group to the actor output.
    pub bandwidth_head: bool,
    /// Weight of the mean squared actor output added to the actor loss.
    /// Keeps the altitude unit and the logits out of saturation.
    pub actor_reg: f64,
    /// Global gradient-norm cap for actors and critics; 0 disables it.
    pub grad_clip: f64,
}

impl MaddpgConfig {
    pub fn groups(&self) -> usize {
        if self.bandwidth_head {
            2
        } else {
            1
        }
    }

    pub fn action_dim(&self) -> usize {
        1 + self.groups() * self.slots
    }

    fn critic_input_dim(&self) -> usize {
        match self.critic {
            CriticMode::Centralized => self.agents * (self.obs_dim + self.action_dim()),
            CriticMode::Local => self.obs_dim + self.action_dim(),
        }
    }
}

/// Action representation from activated actor outputs: the altitude unit
/// is copied, each logit group becomes masked softmax fractions.
pub fn to_repr(out: &[f64], mask: &[bool], repr: &mut [f64]) -> Result<()> {
    let slots = mask.len();
    repr[0] = out[0];
    let groups = (out.len() - 1) / slots;
    for g in 0..groups {
        let r = 1 + g * slots..1 + (g + 1) * slots;
        masked_softmax_into(&out[r.clone()], mask, &mut repr[r])?;
    }
    Ok(())
}

/// Back-propagate `grad` through [`to_repr`] given its output `repr`.
fn repr_backward(repr: &[f64], grad: &[f64], mask: &[bool], out: &mut [f64]) {
    let slots = mask.len();
    out[0] = grad[0];
    let groups = (repr.len() - 1) / slots;
    for g in 0..groups {
        let base = 1 + g * slots;
        let dot: f64 = (0..slots).map(|i| repr[base + i] * grad[base + i]).sum();
        for i in 0..slots {
            out[base + i] = if mask[i] {
                repr[base + i] * (grad[base + i] - dot)
            } else {
                0.0
            };
        }
    }
}

/// Exploratory action: pre-activation outputs with Gaussian noise, and the
/// resulting action representation.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorAction {
    pub raw: Vec<f64>,
    pub repr: Vec<f64>,
}

/// Joint experience of all agent slots for one timestep.
#[derive(Debug, Clone)]
pub struct JointTransition {
    /// `agents x obs_dim`, row-major.
    pub obs: Arc<Vec<f64>>,
    /// `agents x action_dim`; zeros for sleeping agents.
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub next_obs: Arc<Vec<f64>>,
    /// `agents x slots` occupancy.
    pub masks: Arc<Vec<bool>>,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct AgentNets {
    pub actor: Mlp,
    pub actor_target: Mlp,
    pub critic: Mlp,
    pub critic_target: Mlp,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_q: f64,
}

#[derive(Debug, Clone)]
pub struct Maddpg {
    pub config: MaddpgConfig,
    pub agents: Vec<AgentNets>,
}

impl Maddpg {
    pub fn new<R: Rng + ?Sized>(config: MaddpgConfig, rng: &mut R) -> Result<Self> {
        let mut agents = Vec::with_capacity(config.agents);
        for _ in 0..config.agents {
            let actor = Mlp::new(
                config.obs_dim,
                &config.hidden,
                vec![Head::Tanh(1), Head::Identity(config.action_dim() - 1)],
                rng,
            )?;
            let critic = Mlp::new(config.critic_input_dim(), &config.hidden, vec![Head::Identity(1)], rng)?;
            agents.push(AgentNets {
                actor_opt: Adam::new(AdamConfig::with_lr(config.lr_actor), &actor),
                critic_opt: Adam::new(AdamConfig::with_lr(config.lr_critic), &critic),
                actor_target: actor.clone(),
                critic_target: critic.clone(),
                actor,
                critic,
            });
        }
        Ok(Self { config, agents })
    }

    /// Actor output with `N(0, sigma^2)` noise added before the heads.
    pub fn select_action<R: Rng + ?Sized>(
        &self,
        agent: usize,
        obs: &[f64],
        mask: &[bool],
        sigma: f64,
        rng: &mut R,
    ) -> Result<ActorAction> {
        for &v in obs {
            ensure_finite("actor observation", v)?;
        }
        let actor = &self.agents[agent].actor;
        let mut raw = actor.forward_raw(obs)?;
        if sigma > 0.0 {
            for v in &mut raw {
                let z: f64 = StandardNormal.sample(rng);
                *v += sigma * z;
            }
        }
        let mut out = raw.clone();
        actor.activate(&mut out);
        let mut repr = vec![0.0; raw.len()];
        to_repr(&out, mask, &mut repr)?;
        Ok(ActorAction { raw, repr })
    }

    fn critic_input(&self, agent: usize, obs: &Array2<f64>, act: &Array2<f64>) -> Array2<f64> {
        match self.config.critic {
            CriticMode::Centralized => concatenate![Axis(1), *obs, *act],
            CriticMode::Local => {
                let (o, a) = (self.config.obs_dim, self.config.action_dim());
                concatenate![
                    Axis(1),
                    obs.slice(s![.., agent * o..(agent + 1) * o]),
                    act.slice(s![.., agent * a..(agent + 1) * a])
                ]
            }
        }
    }

    /// Column range of `agent`'s action inside its critic input.
    fn action_columns(&self, agent: usize) -> std::ops::Range<usize> {
        let (o, a) = (self.config.obs_dim, self.config.action_dim());
        match self.config.critic {
            CriticMode::Centralized => {
                let start = self.config.agents * o + agent * a;
                start..start + a
            }
            CriticMode::Local => o..o + a,
        }
    }

    fn target_actions(&self, next_obs: &Array2<f64>, masks: &[&[bool]], active: &[usize]) -> Result<Array2<f64>> {
        let (o, a, slots) = (self.config.obs_dim, self.config.action_dim(), self.config.slots);
        let mut out = Array2::zeros((next_obs.nrows(), self.config.agents * a));
        for &k in active {
            let raw = self.agents[k]
                .actor_target
                .predict_batch(next_obs.slice(s![.., k * o..(k + 1) * o]))?;
            for (r, row) in raw.outer_iter().enumerate() {
                let mut repr = vec![0.0; a];
                to_repr(
                    row.as_slice().expect("row"),
                    &masks[r][k * slots..(k + 1) * slots],
                    &mut repr,
                )?;
                out.slice_mut(s![r, k * a..(k + 1) * a]).assign(&ndarray::aview1(&repr));
            }
        }
        Ok(out)
    }

    /// One gradient step for every agent in `active` on a sampled batch.
    pub fn update(&mut self, batch: &[&JointTransition], active: &[usize]) -> Result<UpdateStats> {
        let b = batch.len();
        if b == 0 {
            return Err(Error::InsufficientSamples {
                available: 0,
                required: 1,
            });
        }
        let (o, a, slots, n) = (
            self.config.obs_dim,
            self.config.action_dim(),
            self.config.slots,
            self.config.agents,
        );
        let stack = |f: &dyn Fn(&JointTransition) -> &[f64], width: usize| -> Result<Array2<f64>> {
            let mut data = Vec::with_capacity(b * width);
            for t in batch {
                let row = f(t);
                if row.len() != width {
                    return Err(Error::Shape {
                        context: "replay transition",
                        expected: width,
                        actual: row.len(),
                    });
                }
                data.extend_from_slice(row);
            }
            Ok(Array2::from_shape_vec((b, width), data).expect("stacked batch"))
        };
        let obs = stack(&|t| t.obs.as_slice(), n * o)?;
        let next_obs = stack(&|t| t.next_obs.as_slice(), n * o)?;
        let act = stack(&|t| t.actions.as_slice(), n * a)?;
        let masks: Vec<&[bool]> = batch.iter().map(|t| t.masks.as_slice()).collect();
        let next_act = self.target_actions(&next_obs, &masks, active)?;

        let mut stats = UpdateStats::default();
        for &j in active {
            // critic
            let x_next = self.critic_input(j, &next_obs, &next_act);
            let q_next = self.agents[j].critic_target.predict_batch(x_next.view())?;
            let y: Vec<f64> = batch
                .iter()
                .enumerate()
                .map(|(r, t)| {
                    let boot = if t.done {
                        0.0
                    } else {
                        self.config.gamma * q_next[[r, 0]]
                    };
                    t.rewards[j] + boot
                })
                .collect();
            let x = self.critic_input(j, &obs, &act);
            let nets = &mut self.agents[j];
            let q = nets.critic.forward_batch(x.view())?;
            let mut grad = Array2::zeros((b, 1));
            let mut loss = 0.0;
            for r in 0..b {
                let e = q[[r, 0]] - y[r];
                loss += e * e;
                grad[[r, 0]] = 2.0 * e / b as f64;
            }
            let (mut g, _) = nets.critic.backward(grad.view())?;
            if self.config.grad_clip > 0.0 {
                g.clip_norm(self.config.grad_clip);
            }
            nets.critic_opt.step(&mut nets.critic, &g)?;
            stats.critic_loss += loss / b as f64;

            // actor
            let obs_j = obs.slice(s![.., j * o..(j + 1) * o]);
            let out = self.agents[j].actor.forward_batch(obs_j)?;
            let mut repr = Array2::zeros((b, a));
            for r in 0..b {
                let mut row = vec![0.0; a];
                to_repr(
                    out.row(r).as_slice().expect("row"),
                    &masks[r][j * slots..(j + 1) * slots],
                    &mut row,
                )?;
                repr.row_mut(r).assign(&ndarray::aview1(&row));
            }
            let mut act_pi = act.clone();
            act_pi.slice_mut(s![.., j * a..(j + 1) * a]).assign(&repr);
            let x_pi = self.critic_input(j, &obs, &act_pi);
            let cols = self.action_columns(j);
            let nets = &mut self.agents[j];
            let q_pi = nets.critic.forward_batch(x_pi.view())?;
            stats.actor_q += q_pi.mean().unwrap_or(0.0);
            let (_, g_in) = nets
                .critic
                .backward(Array2::from_elem((b, 1), -1.0 / b as f64).view())?;
            let g_act = g_in.slice(s![.., cols]);
            let mut g_raw = Array2::zeros((b, a));
            for r in 0..b {
                let mut row = vec![0.0; a];
                repr_backward(
                    repr.row(r).as_slice().expect("row"),
                    g_act.row(r).to_vec().as_slice(),
                    &masks[r][j * slots..(j + 1) * slots],
                    &mut row,
                );
                g_raw.row_mut(r).assign(&ndarray::aview1(&row));
            }
            g_raw.scaled_add(2.0 * self.config.actor_reg / (b * a) as f64, &out);
            let (mut g, _) = nets.actor.backward(g_raw.view())?;
            if self.config.grad_clip > 0.0 {
                g.clip_norm(self.config.grad_clip);
            }
            nets.actor_opt.step(&mut nets.actor, &g)?;
        }
        let tau = self.config.tau;
        for &j in active {
            let nets = &mut self.agents[j];
            nets.actor_target.soft_update_from(&nets.actor, tau)?;
            nets.critic_target.soft_update_from(&nets.critic, tau)?;
        }
        let k = active.len().max(1) as f64;
        stats.critic_loss /= k;
        stats.actor_q /= k;
        Ok(stats)
    }

    /// Critic value for one (observations, actions) sample.
    pub fn q_value(&self, agent: usize, obs: &[f64], actions: &[f64]) -> Result<f64> {
        let obs = ArrayView2::from_shape((1, obs.len()), obs).map_err(|_| Error::Shape {
            context: "critic observation",
            expected: self.config.agents * self.config.obs_dim,
            actual: obs.len(),
        })?;
        let act = ArrayView2::from_shape((1, actions.len()), actions).map_err(|_| Error::Shape {
            context: "critic action",
            expected: self.config.agents * self.config.action_dim(),
            actual: actions.len(),
        })?;
        let x = self.critic_input(agent, &obs.to_owned(), &act.to_owned());
        Ok(self.agents[agent].critic.predict_batch(x.view())?[[0, 0]])
    }
}
