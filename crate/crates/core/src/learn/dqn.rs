//! Per-slot Q-learning over the two block actions.

use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;

use super::adam::{Adam, AdamConfig};
use super::mlp::{Head, Mlp};
use super::replay::ReplayBuffer;
use crate::env::BwAction;
use crate::error::{ensure_finite, Error, Result};

/// Extra per-slot features appended to the shared agent observation.
pub const SLOT_FEATURES: usize = 4;

/// One bandwidth-agent transition. The agent part of the state is shared
/// with the other slots of the same UAV.
#[derive(Debug, Clone)]
pub struct DqnTransition {
    pub base: Arc<Vec<f64>>,
    pub extra: [f64; SLOT_FEATURES],
    pub action: BwAction,
    pub reward: f64,
    pub next_base: Arc<Vec<f64>>,
    pub next_extra: [f64; SLOT_FEATURES],
    pub done: bool,
}

impl DqnTransition {
    fn write_state(base: &[f64], extra: &[f64], out: &mut Vec<f64>) {
        out.extend_from_slice(base);
        out.extend_from_slice(extra);
    }
}

/// Epsilon-greedy choice; ties go to [`BwAction::Inc`].
pub fn select_action<R: Rng + ?Sized>(q: &Mlp, state: &[f64], epsilon: f64, rng: &mut R) -> Result<BwAction> {
    for &v in state {
        ensure_finite("bandwidth observation", v)?;
    }
    if rng.random::<f64>() < epsilon {
        return Ok(BwAction::from_index(rng.random_range(0..2)));
    }
    greedy(q, state)
}

pub fn greedy(q: &Mlp, state: &[f64]) -> Result<BwAction> {
    let values = q.forward(state)?;
    Ok(if values[1] > values[0] {
        BwAction::Dec
    } else {
        BwAction::Inc
    })
}

#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub q: Mlp,
    pub target: Mlp,
    pub opt: Adam,
    pub buffer: ReplayBuffer<DqnTransition>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DqnParams {
    pub lr: f64,
    pub gamma: f64,
    pub tau: f64,
    pub capacity: usize,
}

impl DqnAgent {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, hidden: &[usize], params: DqnParams, rng: &mut R) -> Result<Self> {
        let mut q = Mlp::new(state_dim, hidden, vec![Head::Identity(2)], rng)?;
        // A zero output layer makes both actions tie until the first reward
        // arrives, so the greedy policy keeps adding blocks instead of
        // following random initial preferences.
        let tensors = q.tensors_mut().count();
        for t in q.tensors_mut().skip(tensors - 2) {
            t.fill(0.0);
        }
        Ok(Self {
            opt: Adam::new(AdamConfig::with_lr(params.lr), &q),
            target: q.clone(),
            q,
            buffer: ReplayBuffer::new(params.capacity)?,
        })
    }

    /// One TD step on `batch`, then a soft target update. Returns the mean
    /// squared TD error before the step.
    pub fn update(&mut self, batch: &[&DqnTransition], gamma: f64, tau: f64) -> Result<f64> {
        let b = batch.len();
        if b == 0 {
            return Err(Error::InsufficientSamples {
                available: 0,
                required: 1,
            });
        }
        let dim = self.q.input_dim();
        let mut states = Vec::with_capacity(b * dim);
        let mut next = Vec::with_capacity(b * dim);
        for t in batch {
            DqnTransition::write_state(&t.base, &t.extra, &mut states);
            DqnTransition::write_state(&t.next_base, &t.next_extra, &mut next);
        }
        let shape_err = |len| Error::Shape {
            context: "bandwidth transition",
            expected: b * dim,
            actual: len,
        };
        let (sl, nl) = (states.len(), next.len());
        let states = Array2::from_shape_vec((b, dim), states).map_err(|_| shape_err(sl))?;
        let next = Array2::from_shape_vec((b, dim), next).map_err(|_| shape_err(nl))?;

        let q_next = self.target.predict_batch(next.view())?;
        let q = self.q.forward_batch(states.view())?;
        let mut grad = Array2::zeros((b, 2));
        let mut loss = 0.0;
        for (r, t) in batch.iter().enumerate() {
            let boot = if t.done {
                0.0
            } else {
                gamma * q_next[[r, 0]].max(q_next[[r, 1]])
            };
            let a = t.action.index();
            let e = q[[r, a]] - (t.reward + boot);
            loss += e * e;
            grad[[r, a]] = 2.0 * e / b as f64;
        }
        let (g, _) = self.q.backward(grad.view())?;
        self.opt.step(&mut self.q, &g)?;
        self.target.soft_update_from(&self.q, tau)?;
        Ok(loss / b as f64)
    }
}
