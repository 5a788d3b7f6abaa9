//! Minimal DQN: a small fully-connected Q-network with hand-written
//! forward/backward passes, a target network, epsilon-greedy action
//! selection, TD errors, and importance-weighted SGD steps.
//!
//! Everything is plain `f64` arithmetic with no external learning framework,
//! so gradients stay auditable against finite differences.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, RngExt};

use crate::replay_core::Transition;
use crate::{Error, Result};

/// Huber loss switches from quadratic to linear at this error magnitude.
pub const HUBER_THRESHOLD: f64 = 1.0;

/// Gradient-norm clip applied to every SGD step.
pub const GRAD_CLIP: f64 = 10.0;

const WEIGHT_MAGIC: &[u8; 4] = b"DQNW";
const WEIGHT_VERSION: u32 = 1;

/// DQN hyperparameters.
#[derive(Debug, Clone)]
pub struct AgentConfig {
    /// Discount factor, in `[0, 1)`.
    pub gamma: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Training steps between target-network syncs.
    pub target_sync_interval: u64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Environment steps over which epsilon decays linearly.
    pub epsilon_decay_steps: u64,
    /// Hidden layer widths.
    pub hidden: Vec<usize>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            learning_rate: 1e-3,
            batch_size: 32,
            target_sync_interval: 500,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_steps: 10_000,
            hidden: vec![64, 64],
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig(format!(
                "gamma must lie in [0, 1), got {}",
                self.gamma
            )));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig(
                "learning_rate must be positive".into(),
            ));
        }
        if self.batch_size == 0 || self.target_sync_interval == 0 {
            return Err(Error::InvalidConfig(
                "batch_size and target_sync_interval must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.epsilon_start)
            || !(0.0..=1.0).contains(&self.epsilon_end)
            || self.epsilon_end > self.epsilon_start
        {
            return Err(Error::InvalidConfig(
                "epsilon schedule needs 0 <= end <= start <= 1".into(),
            ));
        }
        Ok(())
    }

    /// Linearly decayed epsilon after `env_step` environment steps.
    pub fn epsilon_at(&self, env_step: u64) -> f64 {
        if self.epsilon_decay_steps == 0 || env_step >= self.epsilon_decay_steps {
            return self.epsilon_end;
        }
        let frac = env_step as f64 / self.epsilon_decay_steps as f64;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

struct Layer {
    /// Row-major `out x in`.
    w: Vec<f64>,
    b: Vec<f64>,
    inputs: usize,
    outputs: usize,
}

/// Fully-connected value network: ReLU hidden layers, identity output.
pub struct QNetwork {
    sizes: Vec<usize>,
    layers: Vec<Layer>,
}

impl Clone for QNetwork {
    fn clone(&self) -> Self {
        Self {
            sizes: self.sizes.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    w: l.w.clone(),
                    b: l.b.clone(),
                    inputs: l.inputs,
                    outputs: l.outputs,
                })
                .collect(),
        }
    }
}

impl QNetwork {
    /// Zero-initialized network with the given layer sizes
    /// (`[obs_dim, hidden.., action_count]`).
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        assert!(sizes.iter().all(|&s| s > 0), "layer sizes must be positive");
        let layers = sizes
            .windows(2)
            .map(|w| Layer {
                w: vec![0.0; w[0] * w[1]],
                b: vec![0.0; w[1]],
                inputs: w[0],
                outputs: w[1],
            })
            .collect();
        Self {
            sizes: sizes.to_vec(),
            layers,
        }
    }

    /// Seeded init, uniform in `[-1/sqrt(fan_in), +1/sqrt(fan_in)]`.
    pub fn new_seeded(sizes: &[usize], seed: u64) -> Self {
        let mut net = Self::zeros(sizes);
        let mut rng = crate::seeded_rng(seed);
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.inputs as f64).sqrt();
            for w in &mut layer.w {
                *w = rng.random_range(-bound..=bound);
            }
            for b in &mut layer.b {
                *b = rng.random_range(-bound..=bound);
            }
        }
        net
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn obs_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn action_count(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Flattened parameters: per layer, weights row-major then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend_from_slice(&layer.w);
            out.extend_from_slice(&layer.b);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.param_count(),
                got: flat.len(),
            });
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            let nw = layer.w.len();
            layer.w.copy_from_slice(&flat[offset..offset + nw]);
            offset += nw;
            let nb = layer.b.len();
            layer.b.copy_from_slice(&flat[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }

    /// Q-values for one state, one per action.
    pub fn forward(&self, state: &[f64]) -> Result<Vec<f64>> {
        if state.len() != self.obs_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.obs_dim(),
                got: state.len(),
            });
        }
        let mut x = state.to_vec();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            x = layer_forward(layer, &x, k < last);
        }
        Ok(x)
    }

    /// Forward pass keeping every activation; `acts[0]` is the input,
    /// `acts[k+1]` the output of layer `k`.
    fn forward_trace(&self, state: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(state.to_vec());
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let next = layer_forward(layer, acts.last().unwrap(), k < last);
            acts.push(next);
        }
        acts
    }

    /// Accumulate parameter gradients for one sample whose output gradient is
    /// `out_grad[action] = g` (zero elsewhere), into `grads` (flat layout).
    fn backprop_into(&self, acts: &[Vec<f64>], action: usize, g: f64, grads: &mut [f64]) {
        let mut delta = vec![0.0; self.action_count()];
        delta[action] = g;

        // Flat offsets of each layer's block.
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for layer in &self.layers {
            offsets.push(off);
            off += layer.w.len() + layer.b.len();
        }

        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let input = &acts[k];
            let base = offsets[k];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = base + o * layer.inputs;
                for (i, &x) in input.iter().enumerate() {
                    grads[row + i] += d * x;
                }
                grads[base + layer.w.len() + o] += d;
            }
            if k > 0 {
                let mut prev = vec![0.0; layer.inputs];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &layer.w[o * layer.inputs..(o + 1) * layer.inputs];
                    for (p, &w) in prev.iter_mut().zip(row) {
                        *p += w * d;
                    }
                }
                // ReLU mask: acts[k] is the post-activation of hidden layer k-1.
                for (p, &a) in prev.iter_mut().zip(input.iter()) {
                    if a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
    }

    /// Write the parameter snapshot: magic `DQNW`, version, layer-size count,
    /// the sizes as u32, then per layer the row-major weights and biases as
    /// little-endian f64.
    pub fn write_weights<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(WEIGHT_MAGIC)?;
        out.write_all(&WEIGHT_VERSION.to_le_bytes())?;
        out.write_all(&(self.sizes.len() as u32).to_le_bytes())?;
        for &s in &self.sizes {
            out.write_all(&(s as u32).to_le_bytes())?;
        }
        for layer in &self.layers {
            for v in layer.w.iter().chain(layer.b.iter()) {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_weights<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != WEIGHT_MAGIC {
            return Err(Error::InvalidWeightFile("bad magic".into()));
        }
        let version = read_u32(&mut input)?;
        if version != WEIGHT_VERSION {
            return Err(Error::InvalidWeightFile(format!(
                "unsupported version {version}"
            )));
        }
        let count = read_u32(&mut input)? as usize;
        if count < 2 {
            return Err(Error::InvalidWeightFile(format!(
                "need at least 2 layer sizes, got {count}"
            )));
        }
        let mut sizes = Vec::with_capacity(count);
        for _ in 0..count {
            let s = read_u32(&mut input)? as usize;
            if s == 0 {
                return Err(Error::InvalidWeightFile("zero layer size".into()));
            }
            sizes.push(s);
        }
        let mut net = Self::zeros(&sizes);
        for layer in &mut net.layers {
            for v in layer.w.iter_mut().chain(layer.b.iter_mut()) {
                let mut buf = [0u8; 8];
                input.read_exact(&mut buf)?;
                *v = f64::from_le_bytes(buf);
            }
        }
        let mut rest = [0u8; 1];
        if input.read(&mut rest)? != 0 {
            return Err(Error::InvalidWeightFile("trailing bytes".into()));
        }
        Ok(net)
    }

    pub fn save_to(&self, path: &Path) -> Result<()> {
        self.write_weights(BufWriter::new(File::create(path)?))
    }

    pub fn load_from(path: &Path) -> Result<Self> {
        Self::read_weights(BufReader::new(File::open(path)?))
    }
}

fn layer_forward(layer: &Layer, x: &[f64], relu: bool) -> Vec<f64> {
    let mut out = Vec::with_capacity(layer.outputs);
    for o in 0..layer.outputs {
        let row = &layer.w[o * layer.inputs..(o + 1) * layer.inputs];
        let mut z = layer.b[o];
        for (w, v) in row.iter().zip(x) {
            z += w * v;
        }
        out.push(if relu { z.max(0.0) } else { z });
    }
    out
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn huber(delta: f64) -> f64 {
    let a = delta.abs();
    if a <= HUBER_THRESHOLD {
        0.5 * delta * delta
    } else {
        HUBER_THRESHOLD * (a - 0.5 * HUBER_THRESHOLD)
    }
}

fn huber_grad(delta: f64) -> f64 {
    delta.clamp(-HUBER_THRESHOLD, HUBER_THRESHOLD)
}

/// Signed TD errors
/// `r + gamma * max_a Q_target(s', a) * (1 - terminal) - Q(s, a)`.
pub fn td_errors(
    online: &QNetwork,
    target: &QNetwork,
    batch: &[Transition],
    gamma: f64,
) -> Result<Vec<f64>> {
    batch
        .iter()
        .map(|tr| {
            let q = online.forward(&tr.state)?;
            assert!(tr.action < q.len(), "action index out of range");
            let bootstrap = if tr.terminal {
                0.0
            } else {
                let next = target.forward(&tr.next_state)?;
                gamma * next.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            };
            Ok(tr.reward + bootstrap - q[tr.action])
        })
        .collect()
}

/// Loss, flat parameter gradients, and pre-update TD errors for one batch.
pub struct LossGrads {
    pub loss: f64,
    pub grads: Vec<f64>,
    pub td_errors: Vec<f64>,
}

/// DQN agent: online network, periodically synced target network, and a
/// training-step counter.
pub struct DqnAgent {
    online: QNetwork,
    target: QNetwork,
    config: AgentConfig,
    train_steps: u64,
}

impl DqnAgent {
    pub fn new(
        obs_dim: usize,
        action_count: usize,
        config: AgentConfig,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let mut sizes = Vec::with_capacity(config.hidden.len() + 2);
        sizes.push(obs_dim);
        sizes.extend_from_slice(&config.hidden);
        sizes.push(action_count);
        let online = QNetwork::new_seeded(&sizes, seed);
        let target = online.clone();
        Ok(Self {
            online,
            target,
            config,
            train_steps: 0,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn network(&self) -> &QNetwork {
        &self.online
    }

    pub fn network_mut(&mut self) -> &mut QNetwork {
        &mut self.online
    }

    pub fn target_network(&self) -> &QNetwork {
        &self.target
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    /// Copy online parameters into the target network.
    pub fn sync_target(&mut self) {
        self.target = self.online.clone();
    }

    /// Epsilon-greedy action: uniform with probability `epsilon`, otherwise
    /// the argmax Q with lowest-index tie-breaking.
    pub fn act_epsilon_greedy<R: Rng>(&self, state: &[f64], epsilon: f64, rng: &mut R) -> usize {
        debug_assert!((0.0..=1.0).contains(&epsilon));
        if epsilon > 0.0 && rng.random_bool(epsilon) {
            return rng.random_range(0..self.online.action_count());
        }
        let q = self.online.forward(state).expect("state matches obs_dim");
        argmax(&q)
    }

    pub fn td_errors(&self, batch: &[Transition]) -> Result<Vec<f64>> {
        td_errors(&self.online, &self.target, batch, self.config.gamma)
    }

    /// Importance-weighted Huber loss over the batch, with gradients flowing
    /// only through `Q(s, a)`; bootstrap targets are constants.
    pub fn loss_and_grads(&self, batch: &[Transition], is_weights: &[f64]) -> Result<LossGrads> {
        assert_eq!(batch.len(), is_weights.len());
        let tds = self.td_errors(batch)?;
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        let mut grads = vec![0.0; self.online.param_count()];
        for ((tr, &w), &delta) in batch.iter().zip(is_weights).zip(&tds) {
            loss += w * huber(delta) * scale;
            // d loss / d Q(s,a) = -w * huber'(delta) / B
            let g = -w * huber_grad(delta) * scale;
            let acts = self.online.forward_trace(&tr.state);
            self.online.backprop_into(&acts, tr.action, g, &mut grads);
        }
        Ok(LossGrads {
            loss,
            grads,
            td_errors: tds,
        })
    }

    /// One clipped SGD step; returns the loss and pre-update TD errors for
    /// priority write-back. Syncs the target network every
    /// `target_sync_interval` training steps.
    pub fn train_step(
        &mut self,
        batch: &[Transition],
        is_weights: &[f64],
    ) -> Result<(f64, Vec<f64>)> {
        let LossGrads {
            loss,
            mut grads,
            td_errors,
        } = self.loss_and_grads(batch, is_weights)?;
        if !loss.is_finite() {
            return Err(Error::Diverged);
        }
        let norm: f64 = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm > GRAD_CLIP {
            let s = GRAD_CLIP / norm;
            for g in &mut grads {
                *g *= s;
            }
        }
        let mut params = self.online.params();
        for (p, g) in params.iter_mut().zip(&grads) {
            *p -= self.config.learning_rate * g;
        }
        self.online.set_params(&params)?;
        debug_assert!(self.online.all_finite());

        self.train_steps += 1;
        if self
            .train_steps
            .is_multiple_of(self.config.target_sync_interval)
        {
            self.sync_target();
        }
        Ok((loss, td_errors))
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
