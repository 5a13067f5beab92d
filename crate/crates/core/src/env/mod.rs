//! Multi-agent decision environment.
//!
//! One [`UavAgent`] per UAV index. Active agents own the UEs of one cluster,
//! laid out in fixed-size slots (ascending UE index). Actor outputs are mapped
//! onto feasible actions here: altitude through a scaled `tanh`, per-slot
//! power through a masked softmax, and bandwidth through clamped ±1 block
//! steps. Rates and service flags come from [`crate::channel`].

pub mod frame;

use serde::{Deserialize, Serialize};

use crate::channel::{link_budget, service_indicator, EnvConstants, FadingDraw, FadingIndex, FadingSource, UavTx};
use crate::clustering::{place_uavs, ClusterPlan, Point};
use crate::error::{ensure_finite, Error, Result};

/// How the average transmit power of an interfering UAV is defined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AvgPowerRule {
    /// `p_max / max(1, |C_s|)`.
    BudgetPerMember,
    /// Sum of the currently allocated slot powers over `max(1, |C_s|)`.
    MeanAllocated,
}

/// When a frozen slot's bandwidth is released again.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreezeRule {
    /// Held while the UE stays served; a step without service releases it.
    WhileServed,
    /// Held until the episode ends.
    Sticky,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub n_ues: usize,
    pub k_max: usize,
    /// Per-UAV power budget, watts.
    pub p_max: f64,
    /// Per-UAV bandwidth, Hz.
    pub b_max: f64,
    /// Width of one resource block, Hz.
    pub block_size: f64,
    pub block_limit: u32,
    pub h_min: f64,
    pub h_max: f64,
    /// Rate threshold, bits/s.
    pub r_th: f64,
    /// Slots per agent; clusters larger than this leave the excess unserved.
    pub max_cluster_size: usize,
    pub avg_power: AvgPowerRule,
    pub freeze: FreezeRule,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            n_ues: 30,
            k_max: 5,
            p_max: 1.0,
            b_max: 3.6e6,
            block_size: 1.8e4,
            block_limit: 200,
            h_min: 300.0,
            h_max: 1000.0,
            r_th: 5e6,
            max_cluster_size: 30,
            avg_power: AvgPowerRule::BudgetPerMember,
            freeze: FreezeRule::WhileServed,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: String| Err(Error::InvalidParameter { name, reason });
        if self.n_ues == 0 {
            return bad("n_ues", "must be positive".into());
        }
        if self.k_max == 0 {
            return bad("k_max", "must be positive".into());
        }
        if !(self.p_max > 0.0 && self.p_max.is_finite()) {
            return bad("p_max", "must be positive".into());
        }
        if !(self.block_size > 0.0) || self.block_limit == 0 {
            return bad("block_size", "blocks must be non-empty".into());
        }
        let total = self.block_limit as f64 * self.block_size;
        if (total - self.b_max).abs() > 1e-9 * self.b_max.abs() {
            return bad(
                "b_max",
                format!(
                    "{} blocks of {} Hz give {total} Hz, not {}",
                    self.block_limit, self.block_size, self.b_max
                ),
            );
        }
        if !(self.h_min > 0.0 && self.h_min < self.h_max && self.h_max.is_finite()) {
            return bad(
                "h_min",
                format!("need 0 < h_min < h_max, got {} and {}", self.h_min, self.h_max),
            );
        }
        if !(self.r_th > 0.0 && self.r_th.is_finite()) {
            return bad("r_th", "must be positive".into());
        }
        if self.max_cluster_size == 0 {
            return bad("max_cluster_size", "must be positive".into());
        }
        Ok(())
    }

    pub fn slots(&self) -> usize {
        self.max_cluster_size
    }

    pub fn mid_altitude(&self) -> f64 {
        0.5 * (self.h_min + self.h_max)
    }

    /// Length of an agent observation.
    pub fn obs_dim(&self) -> usize {
        3 + 2 * self.slots()
    }

    /// Length of a per-UE bandwidth-agent observation.
    pub fn dqn_obs_dim(&self) -> usize {
        self.obs_dim() + 4
    }

    fn normalized_altitude(&self, h: f64) -> f64 {
        2.0 * (h - self.h_min) / (self.h_max - self.h_min) - 1.0
    }
}

/// Altitude from an unbounded actor output.
pub fn map_altitude(raw: f64, h_min: f64, h_max: f64) -> Result<f64> {
    ensure_finite("altitude output", raw)?;
    let h = h_min + 0.5 * (raw.tanh() + 1.0) * (h_max - h_min);
    Ok(h.clamp(h_min, h_max))
}

/// Masked softmax of `logits` scaled to `p_max`; masked slots get 0.
pub fn map_power(logits: &[f64], mask: &[bool], p_max: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; logits.len()];
    masked_softmax_into(logits, mask, &mut out)?;
    for p in &mut out {
        *p *= p_max;
    }
    Ok(out)
}

/// Masked softmax written into `out`; errors if nothing is unmasked.
pub fn masked_softmax_into(logits: &[f64], mask: &[bool], out: &mut [f64]) -> Result<()> {
    if mask.len() != logits.len() || out.len() != logits.len() {
        return Err(Error::Shape {
            context: "softmax mask",
            expected: logits.len(),
            actual: mask.len(),
        });
    }
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|(l, _)| *l)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::Empty("active power slots"));
    }
    ensure_finite("power logit", max)?;
    let mut total = 0.0;
    for ((o, l), m) in out.iter_mut().zip(logits).zip(mask) {
        *o = if *m { (l - max).exp() } else { 0.0 };
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
    Ok(())
}

/// Bandwidth agent action: one resource block up or down.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BwAction {
    Inc,
    Dec,
}

impl BwAction {
    pub const ALL: [BwAction; 2] = [BwAction::Inc, BwAction::Dec];

    pub fn index(self) -> usize {
        match self {
            BwAction::Inc => 0,
            BwAction::Dec => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            BwAction::Inc
        } else {
            BwAction::Dec
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UavAgent {
    pub active: bool,
    pub xy: Point,
    pub h: f64,
    /// UE indices in slot order.
    pub members: Vec<usize>,
    pub power_alloc: Vec<f64>,
    pub blocks: Vec<u32>,
    pub served: Vec<bool>,
    pub frozen: Vec<bool>,
}

impl UavAgent {
    pub fn idle(slots: usize, h: f64) -> Self {
        Self {
            active: false,
            xy: [0.0, 0.0],
            h,
            members: Vec::new(),
            power_alloc: vec![0.0; slots],
            blocks: vec![0; slots],
            served: vec![false; slots],
            frozen: vec![false; slots],
        }
    }

    pub fn slots(&self) -> usize {
        self.power_alloc.len()
    }

    /// Occupied slot count.
    pub fn cluster_size(&self) -> usize {
        self.members.len()
    }

    pub fn mask(&self) -> Vec<bool> {
        (0..self.slots()).map(|s| s < self.members.len()).collect()
    }

    pub fn sum_power(&self) -> f64 {
        self.power_alloc.iter().sum()
    }

    pub fn sum_blocks(&self) -> u32 {
        self.blocks.iter().sum()
    }

    pub fn served_count(&self) -> usize {
        self.served.iter().filter(|s| **s).count()
    }

    /// Fresh allocation at the start of an episode: mid altitude, equal
    /// power, no blocks, nothing served or frozen.
    pub fn reset(&mut self, cfg: &EnvConfig) {
        let m = self.cluster_size();
        self.h = cfg.mid_altitude();
        for s in 0..self.slots() {
            self.power_alloc[s] = if s < m { cfg.p_max / m as f64 } else { 0.0 };
            self.blocks[s] = 0;
            self.served[s] = false;
            self.frozen[s] = false;
        }
    }

    /// Equal power and `floor(block_limit / m)` blocks per member.
    pub fn allocate_equal(&mut self, cfg: &EnvConfig) {
        self.reset(cfg);
        let m = self.cluster_size();
        if m == 0 {
            return;
        }
        let share = cfg.block_limit / m as u32;
        for s in 0..m {
            self.blocks[s] = share;
        }
    }

    /// Agent observation; all zeros for a sleeping UAV.
    pub fn observe(&self, cfg: &EnvConfig) -> Vec<f64> {
        let slots = self.slots();
        let mut obs = vec![0.0; 3 + 2 * slots];
        if !self.active {
            return obs;
        }
        obs[0] = cfg.normalized_altitude(self.h);
        for s in 0..self.members.len() {
            obs[1 + s] = self.power_alloc[s] / cfg.p_max;
            obs[1 + slots + s] = self.blocks[s] as f64 / cfg.block_limit as f64;
        }
        let m = self.members.len().max(1) as f64;
        obs[1 + 2 * slots] = self.served_count() as f64 / m;
        obs[2 + 2 * slots] = self.members.len() as f64 / cfg.n_ues as f64;
        obs
    }

    /// Bandwidth-agent observation for `slot`: the agent observation followed
    /// by this agent's altitude and the slot's power, blocks and service flag.
    pub fn dqn_observe(&self, base: &[f64], slot: usize, cfg: &EnvConfig) -> Vec<f64> {
        let mut obs = Vec::with_capacity(base.len() + 4);
        obs.extend_from_slice(base);
        obs.push(cfg.normalized_altitude(self.h));
        obs.push(self.power_alloc[slot] / cfg.p_max);
        obs.push(self.blocks[slot] as f64 / cfg.block_limit as f64);
        obs.push(if self.served[slot] { 1.0 } else { 0.0 });
        obs
    }
}

/// Step one slot's block count, respecting freezing and the block budget.
pub fn apply_bw_action(agent: &mut UavAgent, slot: usize, action: BwAction, block_limit: u32) {
    if slot >= agent.cluster_size() || agent.frozen[slot] {
        return;
    }
    let others: u32 = agent.sum_blocks() - agent.blocks[slot];
    let room = block_limit.saturating_sub(others);
    let current = agent.blocks[slot];
    agent.blocks[slot] = match action {
        BwAction::Inc => (current + 1).min(room),
        BwAction::Dec => current.saturating_sub(1).min(room),
    };
}

/// Snapshot of all UEs and UAVs for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub cfg: EnvConfig,
    pub consts: EnvConstants,
    pub ue_xy: Vec<Point>,
    pub agents: Vec<UavAgent>,
    /// Upper corner of the service field (the lower corner is the origin).
    pub field_max: Point,
    /// UAV serving each UE, if the UE holds a slot.
    pub serving: Vec<Option<(usize, usize)>>,
}

impl World {
    pub fn new(
        cfg: EnvConfig,
        consts: EnvConstants,
        ue_xy: Vec<Point>,
        plan: &ClusterPlan,
        field_max: Point,
    ) -> Result<Self> {
        cfg.validate()?;
        if ue_xy.len() != plan.assignment.len() {
            return Err(Error::Shape {
                context: "cluster assignment",
                expected: ue_xy.len(),
                actual: plan.assignment.len(),
            });
        }
        let slots = cfg.slots();
        let placements = place_uavs(plan, cfg.mid_altitude(), cfg.k_max);
        if placements.len() > cfg.k_max {
            return Err(Error::InvalidParameter {
                name: "k_max",
                reason: format!("plan uses {} UAVs", placements.len()),
            });
        }
        let mut agents: Vec<UavAgent> = (0..cfg.k_max)
            .map(|_| UavAgent::idle(slots, cfg.mid_altitude()))
            .collect();
        let mut serving = vec![None; ue_xy.len()];
        for (c, members) in plan.members().into_iter().enumerate() {
            let u = plan.uav_of_cluster[c];
            let agent = &mut agents[u];
            agent.active = true;
            agent.xy = [placements[u].xyz[0], placements[u].xyz[1]];
            agent.members = members.into_iter().take(slots).collect();
            for (s, &ue) in agent.members.iter().enumerate() {
                serving[ue] = Some((u, s));
            }
        }
        let mut world = Self {
            cfg,
            consts,
            ue_xy,
            agents,
            field_max,
            serving,
        };
        world.reset_episode();
        Ok(world)
    }

    pub fn reset_episode(&mut self) {
        for a in &mut self.agents {
            a.reset(&self.cfg);
        }
    }

    pub fn active_uavs(&self) -> impl Iterator<Item = usize> + '_ {
        self.agents.iter().enumerate().filter(|(_, a)| a.active).map(|(i, _)| i)
    }

    fn avg_power(&self, agent: &UavAgent) -> f64 {
        let m = agent.cluster_size().max(1) as f64;
        match self.cfg.avg_power {
            AvgPowerRule::BudgetPerMember => self.cfg.p_max / m,
            AvgPowerRule::MeanAllocated => agent.sum_power() / m,
        }
    }

    /// Rates, service flags and rewards under the current allocation.
    ///
    /// Newly served slots are frozen. Under [`FreezeRule::WhileServed`] a
    /// frozen slot that misses the threshold is released.
    pub fn evaluate_step(&mut self, fading: &dyn FadingSource, at: FadingIndex) -> Result<StepOutcome> {
        let active: Vec<usize> = self.active_uavs().collect();
        let txs: Vec<UavTx> = active
            .iter()
            .map(|&u| {
                let a = &self.agents[u];
                UavTx {
                    xyz: [a.xy[0], a.xy[1], a.h],
                    avg_power: self.avg_power(a),
                }
            })
            .collect();

        let n = self.ue_xy.len();
        let mut rates = vec![0.0; n];
        let mut served = vec![false; n];
        let mut agent_rewards = vec![0.0; self.agents.len()];
        let mut newly_frozen = 0;
        let mut draws: Vec<FadingDraw> = Vec::with_capacity(active.len());

        for (pos, &u) in active.iter().enumerate() {
            let m = self.agents[u].cluster_size();
            for s in 0..m {
                let ue = self.agents[u].members[s];
                draws.clear();
                draws.extend(active.iter().map(|&v| fading.draw(ue, v, at)));
                let agent = &self.agents[u];
                let bandwidth = agent.blocks[s] as f64 * self.cfg.block_size;
                let budget = link_budget(
                    self.ue_xy[ue],
                    pos,
                    agent.power_alloc[s],
                    bandwidth,
                    &txs,
                    &draws,
                    &self.consts,
                )?;
                let ok = service_indicator(budget.rate, self.cfg.r_th);
                rates[ue] = budget.rate;
                served[ue] = ok;
                let agent = &mut self.agents[u];
                agent.served[s] = ok;
                if ok && !agent.frozen[s] {
                    agent.frozen[s] = true;
                    newly_frozen += 1;
                }
                if !ok && self.cfg.freeze == FreezeRule::WhileServed {
                    agent.frozen[s] = false;
                }
                if ok {
                    agent_rewards[u] += 1.0;
                }
            }
        }
        let dqn_rewards = served.iter().map(|&s| if s { 1.0 } else { 0.0 }).collect();
        Ok(StepOutcome {
            rates,
            served,
            agent_rewards,
            dqn_rewards,
            newly_frozen,
        })
    }

    /// Check the per-step constraints of the allocation problem.
    pub fn audit(&self, outcome: &StepOutcome) -> Result<()> {
        let fail = |constraint, detail: String| Err(Error::Constraint { constraint, detail });
        for (ue, (&ok, &rate)) in outcome.served.iter().zip(&outcome.rates).enumerate() {
            if ok && rate < self.cfg.r_th {
                return fail("C1", format!("ue {ue} counted served at {rate} bit/s"));
            }
            if ok && self.serving[ue].is_none() {
                return fail("C2", format!("ue {ue} served without a serving UAV"));
            }
        }
        let total_served: usize = outcome.served.iter().filter(|s| **s).count();
        let rewarded: f64 = outcome.agent_rewards.iter().sum();
        if rewarded != total_served as f64 {
            return fail("C3", format!("agent rewards {rewarded} != served {total_served}"));
        }
        for (u, a) in self.agents.iter().enumerate().filter(|(_, a)| a.active) {
            let p = a.sum_power();
            let tight = a.cluster_size() > 0 && (p - self.cfg.p_max).abs() > 1e-9;
            if p > self.cfg.p_max + 1e-9 || tight {
                return fail("C4", format!("uav {u} allocates {p} W"));
            }
            if a.sum_blocks() > self.cfg.block_limit {
                return fail("C5", format!("uav {u} allocates {} blocks", a.sum_blocks()));
            }
            let [x, y] = a.xy;
            if !(0.0..=self.field_max[0]).contains(&x) || !(0.0..=self.field_max[1]).contains(&y) {
                return fail("C6", format!("uav {u} at ({x}, {y}) outside the field"));
            }
            if !(self.cfg.h_min..=self.cfg.h_max).contains(&a.h) {
                return fail("C7", format!("uav {u} at altitude {}", a.h));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Rate of every UE from its serving UAV; 0 for UEs without a slot.
    pub rates: Vec<f64>,
    pub served: Vec<bool>,
    /// Served count per UAV index.
    pub agent_rewards: Vec<f64>,
    /// 1 for a served UE, else 0.
    pub dqn_rewards: Vec<f64>,
    pub newly_frozen: usize,
}

impl StepOutcome {
    pub fn served_total(&self) -> usize {
        self.served.iter().filter(|s| **s).count()
    }
}
