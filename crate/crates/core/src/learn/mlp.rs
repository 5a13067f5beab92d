//! Fully connected network with ReLU hidden layers and manual backprop.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Output activation applied to a contiguous group of output units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Identity(usize),
    Tanh(usize),
}

impl Head {
    fn width(self) -> usize {
        match self {
            Head::Identity(n) | Head::Tanh(n) => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `inputs x outputs`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    fn uniform<R: Rng + ?Sized>(inputs: usize, outputs: usize, bound: f64, rng: &mut R) -> Self {
        let weight = Array2::from_shape_fn((inputs, outputs), |_| rng.random_range(-bound..=bound));
        let bias = Array1::from_shape_fn(outputs, |_| rng.random_range(-bound..=bound));
        Self { weight, bias }
    }

    fn zeros_like(&self) -> Self {
        Self {
            weight: Array2::zeros(self.weight.raw_dim()),
            bias: Array1::zeros(self.bias.raw_dim()),
        }
    }
}

/// Parameter-shaped gradient (or moment) storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Linear>,
}

impl Gradients {
    pub fn tensors(&self) -> impl Iterator<Item = &[f64]> {
        self.layers.iter().flat_map(|l| {
            [
                l.weight.as_slice().expect("standard layout"),
                l.bias.as_slice().expect("standard layout"),
            ]
        })
    }

    pub fn norm(&self) -> f64 {
        self.tensors().flatten().map(|g| g * g).sum::<f64>().sqrt()
    }

    /// Rescale so the global L2 norm is at most `max_norm`.
    pub fn clip_norm(&mut self, max_norm: f64) {
        let norm = self.norm();
        if norm > max_norm && norm > 0.0 {
            let k = max_norm / norm;
            for l in &mut self.layers {
                l.weight *= k;
                l.bias *= k;
            }
        }
    }
}

#[derive(Debug, Clone)]
struct ForwardCache {
    /// Input to every layer; entry 0 is the network input.
    inputs: Vec<Array2<f64>>,
    output: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Linear>,
    heads: Vec<Head>,
    cache: Option<ForwardCache>,
}

/// Half-width of the uniform range used for the output layer.
pub const FINAL_LAYER_BOUND: f64 = 3e-3;

impl Mlp {
    /// Hidden layers get `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`; the output
    /// layer starts near zero.
    pub fn new<R: Rng + ?Sized>(inputs: usize, hidden: &[usize], heads: Vec<Head>, rng: &mut R) -> Result<Self> {
        let outputs: usize = heads.iter().map(|h| h.width()).sum();
        if inputs == 0 || outputs == 0 || hidden.contains(&0) {
            return Err(Error::InvalidParameter {
                name: "network shape",
                reason: format!("inputs {inputs}, hidden {hidden:?}, outputs {outputs}"),
            });
        }
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut fan_in = inputs;
        for &h in hidden {
            layers.push(Linear::uniform(fan_in, h, 1.0 / (fan_in as f64).sqrt(), rng));
            fan_in = h;
        }
        layers.push(Linear::uniform(fan_in, outputs, FINAL_LAYER_BOUND, rng));
        Ok(Self {
            layers,
            heads,
            cache: None,
        })
    }

    /// Rebuild from stored tensors (`w0, b0, w1, b1, ...`).
    pub fn from_tensors(shapes: &[(usize, usize)], tensors: &[Vec<f64>], heads: Vec<Head>) -> Result<Self> {
        if tensors.len() != 2 * shapes.len() || shapes.is_empty() {
            return Err(Error::Shape {
                context: "network tensors",
                expected: 2 * shapes.len(),
                actual: tensors.len(),
            });
        }
        let mut layers = Vec::with_capacity(shapes.len());
        for (i, &(r, c)) in shapes.iter().enumerate() {
            let weight = Array2::from_shape_vec((r, c), tensors[2 * i].clone()).map_err(|_| Error::Shape {
                context: "weight tensor",
                expected: r * c,
                actual: tensors[2 * i].len(),
            })?;
            if tensors[2 * i + 1].len() != c {
                return Err(Error::Shape {
                    context: "bias tensor",
                    expected: c,
                    actual: tensors[2 * i + 1].len(),
                });
            }
            layers.push(Linear {
                weight,
                bias: Array1::from(tensors[2 * i + 1].clone()),
            });
        }
        let net = Self {
            layers,
            heads,
            cache: None,
        };
        if net.output_dim() != net.layers.last().map(|l| l.bias.len()).unwrap_or(0) {
            return Err(Error::Shape {
                context: "output heads",
                expected: net.layers.last().map(|l| l.bias.len()).unwrap_or(0),
                actual: net.output_dim(),
            });
        }
        Ok(net)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.heads.iter().map(|h| h.width()).sum()
    }

    pub fn heads(&self) -> &[Head] {
        &self.heads
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| l.weight.dim()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn tensors(&self) -> impl Iterator<Item = &[f64]> {
        self.layers.iter().flat_map(|l| {
            [
                l.weight.as_slice().expect("standard layout"),
                l.bias.as_slice().expect("standard layout"),
            ]
        })
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers.iter_mut().flat_map(|l| {
            [
                l.weight.as_slice_mut().expect("standard layout"),
                l.bias.as_slice_mut().expect("standard layout"),
            ]
        })
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            layers: self.layers.iter().map(Linear::zeros_like).collect(),
        }
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(Error::Shape {
                context: "network input",
                expected: self.input_dim(),
                actual: cols,
            });
        }
        Ok(())
    }

    fn apply_heads(&self, out: &mut Array2<f64>) {
        let mut start = 0;
        for head in &self.heads {
            let end = start + head.width();
            if let Head::Tanh(_) = head {
                out.slice_mut(s![.., start..end]).mapv_inplace(f64::tanh);
            }
            start = end;
        }
    }

    fn run(&self, x: ArrayView2<f64>, keep: Option<&mut Vec<Array2<f64>>>) -> Array2<f64> {
        let mut a = self.run_raw(x, keep);
        self.apply_heads(&mut a);
        a
    }

    fn run_raw(&self, x: ArrayView2<f64>, mut keep: Option<&mut Vec<Array2<f64>>>) -> Array2<f64> {
        let mut a = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weight);
            z += &layer.bias;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            let prev = std::mem::replace(&mut a, z);
            if let Some(keep) = keep.as_deref_mut() {
                keep.push(prev);
            }
        }
        a
    }

    /// Output for one input row, without touching the backprop cache.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x.len())?;
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row shape");
        Ok(self.run(view, None).into_raw_vec_and_offset().0)
    }

    /// Output for one input row before the head activations.
    pub fn forward_raw(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x.len())?;
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row shape");
        Ok(self.run_raw(view, None).into_raw_vec_and_offset().0)
    }

    /// Apply the head activations to one raw output row in place.
    pub fn activate(&self, raw: &mut [f64]) {
        let mut start = 0;
        for head in &self.heads {
            let end = start + head.width();
            if let Head::Tanh(_) = head {
                for v in &mut raw[start..end] {
                    *v = v.tanh();
                }
            }
            start = end;
        }
    }

    /// Batched output (one row per sample) without caching.
    pub fn predict_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(x.ncols())?;
        Ok(self.run(x, None))
    }

    /// Batched output, caching activations for [`Mlp::backward`].
    pub fn forward_batch(&mut self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(x.ncols())?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let output = self.run(x, Some(&mut inputs));
        self.cache = Some(ForwardCache {
            inputs,
            output: output.clone(),
        });
        Ok(output)
    }

    /// Gradients of a loss given `d loss / d output` for the cached batch.
    /// Returns parameter gradients and `d loss / d input`. Consumes the cache.
    pub fn backward(&mut self, grad_output: ArrayView2<f64>) -> Result<(Gradients, Array2<f64>)> {
        let cache = self.cache.take().ok_or(Error::NoForwardCache)?;
        if grad_output.dim() != cache.output.dim() {
            return Err(Error::Shape {
                context: "output gradient",
                expected: cache.output.len(),
                actual: grad_output.len(),
            });
        }
        let mut g = grad_output.to_owned();
        let mut start = 0;
        for head in &self.heads {
            let end = start + head.width();
            if let Head::Tanh(_) = head {
                let y = cache.output.slice(s![.., start..end]);
                let mut gs = g.slice_mut(s![.., start..end]);
                gs.zip_mut_with(&y, |gv, yv| *gv *= 1.0 - yv * yv);
            }
            start = end;
        }

        let mut grads: Vec<Linear> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.inputs[i];
            let weight = input.t().dot(&g).as_standard_layout().into_owned();
            let bias = g.sum_axis(Axis(0));
            let mut g_in = g.dot(&layer.weight.t());
            if i > 0 {
                g_in.zip_mut_with(input, |gv, a| {
                    if *a <= 0.0 {
                        *gv = 0.0;
                    }
                });
            }
            grads.push(Linear { weight, bias });
            g = g_in;
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, g))
    }

    /// `self <- tau * source + (1 - tau) * self`.
    pub fn soft_update_from(&mut self, source: &Mlp, tau: f64) -> Result<()> {
        if self.shapes() != source.shapes() {
            return Err(Error::Shape {
                context: "soft update",
                expected: self.param_count(),
                actual: source.param_count(),
            });
        }
        for (t, s) in self.tensors_mut().zip(source.tensors()) {
            for (tv, sv) in t.iter_mut().zip(s) {
                *tv = tau * sv + (1.0 - tau) * *tv;
            }
        }
        Ok(())
    }
}

/// Polyak averaging of `target` toward `online`.
pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) -> Result<()> {
    target.soft_update_from(online, tau)
}
