use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ModelError, Samples};
use crate::synthetic::rng;

/// Single-hidden-layer network: sigmoid hidden units, linear output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub inputs: usize,
    pub hidden: usize,
    /// Hidden weights, one row of `inputs` per hidden unit.
    pub w_hidden: Vec<f64>,
    pub b_hidden: Vec<f64>,
    pub w_out: Vec<f64>,
    pub b_out: f64,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl Network {
    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        Network {
            inputs,
            hidden,
            w_hidden: vec![0.0; inputs * hidden],
            b_hidden: vec![0.0; hidden],
            w_out: vec![0.0; hidden],
            b_out: 0.0,
        }
    }

    /// Every parameter drawn uniformly from [−0.5, 0.5].
    pub fn random(inputs: usize, hidden: usize, seed: u64) -> Self {
        let mut net = Self::zeros(inputs, hidden);
        let mut r = rng(seed);
        let params: Vec<f64> = (0..net.n_params()).map(|_| r.random_range(-0.5..=0.5)).collect();
        net.set_params(&params);
        net
    }

    pub fn n_params(&self) -> usize {
        self.hidden * (self.inputs + 2) + 1
    }

    /// Flattened as hidden weights, hidden biases, output weights, output bias.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        p.extend_from_slice(&self.w_hidden);
        p.extend_from_slice(&self.b_hidden);
        p.extend_from_slice(&self.w_out);
        p.push(self.b_out);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let (wh, rest) = p.split_at(self.inputs * self.hidden);
        let (bh, rest) = rest.split_at(self.hidden);
        let (wo, rest) = rest.split_at(self.hidden);
        self.w_hidden.copy_from_slice(wh);
        self.b_hidden.copy_from_slice(bh);
        self.w_out.copy_from_slice(wo);
        self.b_out = rest[0];
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut out = self.b_out;
        for h in 0..self.hidden {
            let w = &self.w_hidden[h * self.inputs..(h + 1) * self.inputs];
            let z = w.iter().zip(x).fold(self.b_hidden[h], |a, (w, v)| a + w * v);
            out += self.w_out[h] * sigmoid(z);
        }
        out
    }

    fn penalty(&self) -> f64 {
        self.params().iter().map(|v| v * v).sum()
    }

    /// `(SSE + decay·Σθ²) / 2` over all parameters.
    pub fn loss(&self, data: &Samples, decay: f64) -> f64 {
        let sse: f64 = (0..data.len())
            .map(|i| {
                let e = self.predict(data.row(i)) - data.y[i];
                e * e
            })
            .sum();
        (sse + decay * self.penalty()) / 2.0
    }

    /// Loss and its gradient in [`Network::params`] order.
    pub fn loss_and_gradient(&self, data: &Samples, decay: f64) -> (f64, Vec<f64>) {
        let (ni, nh) = (self.inputs, self.hidden);
        let mut g_wh = vec![0.0; ni * nh];
        let mut g_bh = vec![0.0; nh];
        let mut g_wo = vec![0.0; nh];
        let mut g_bo = 0.0;
        let mut act = vec![0.0; nh];
        let mut sse = 0.0;
        for i in 0..data.len() {
            let x = data.row(i);
            let mut out = self.b_out;
            for h in 0..nh {
                let w = &self.w_hidden[h * ni..(h + 1) * ni];
                let z = w.iter().zip(x).fold(self.b_hidden[h], |a, (w, v)| a + w * v);
                act[h] = sigmoid(z);
                out += self.w_out[h] * act[h];
            }
            let e = out - data.y[i];
            sse += e * e;
            g_bo += e;
            for h in 0..nh {
                g_wo[h] += e * act[h];
                let back = e * self.w_out[h] * act[h] * (1.0 - act[h]);
                g_bh[h] += back;
                for (g, v) in g_wh[h * ni..(h + 1) * ni].iter_mut().zip(x) {
                    *g += back * v;
                }
            }
        }
        let mut grad = Vec::with_capacity(self.n_params());
        grad.extend(g_wh);
        grad.extend(g_bh);
        grad.extend(g_wo);
        grad.push(g_bo);
        let params = self.params();
        for (g, p) in grad.iter_mut().zip(&params) {
            *g += decay * p;
        }
        let penalty: f64 = params.iter().map(|v| v * v).sum();
        ((sse + decay * penalty) / 2.0, grad)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnSettings {
    pub hidden: usize,
    pub decay: f64,
    pub max_iter: usize,
    /// Training stops once the gradient's Euclidean norm falls below this.
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnModel {
    pub network: Network,
    pub iterations: usize,
    pub converged: bool,
}

impl AnnModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.network.predict(x)
    }
}

// Resilient-propagation step controls.
const STEP_INIT: f64 = 0.05;
const STEP_GROW: f64 = 1.2;
const STEP_SHRINK: f64 = 0.5;
const STEP_MAX: f64 = 1.0;
const STEP_MIN: f64 = 1e-8;

/// Full-batch training with per-parameter adaptive steps (sign-based
/// resilient propagation).
pub fn fit_ann(train: &Samples, settings: AnnSettings, seed: u64) -> Result<AnnModel, ModelError> {
    if !(1..=64).contains(&settings.hidden) {
        return Err(ModelError::InvalidParameter(format!("{} hidden units", settings.hidden)));
    }
    if train.is_empty() {
        return Err(ModelError::TooFewRows { needed: 1, got: 0 });
    }
    let mut net = Network::random(train.dim, settings.hidden, seed);
    let mut params = net.params();
    let mut steps = vec![STEP_INIT; params.len()];
    let mut prev = vec![0.0; params.len()];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < settings.max_iter {
        let (loss, grad) = net.loss_and_gradient(train, settings.decay);
        if !loss.is_finite() {
            return Err(ModelError::NonFiniteLoss);
        }
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm < settings.threshold {
            converged = true;
            break;
        }
        for j in 0..params.len() {
            let g = grad[j];
            let product = g * prev[j];
            if product > 0.0 {
                steps[j] = (steps[j] * STEP_GROW).min(STEP_MAX);
            } else if product < 0.0 {
                steps[j] = (steps[j] * STEP_SHRINK).max(STEP_MIN);
                prev[j] = 0.0;
                continue;
            }
            params[j] -= g.signum() * steps[j];
            prev[j] = g;
        }
        net.set_params(&params);
        iterations += 1;
    }
    Ok(AnnModel { network: net, iterations, converged })
}
