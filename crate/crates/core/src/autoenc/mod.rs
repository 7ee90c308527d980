//! Autoencoder for CIR windows, trained by explicit backpropagation.
//!
//! Two architectures are available: a strided 1-D convolutional network (the
//! default) and a small dense network for debugging. Training minimizes the
//! mean over the batch of the squared reconstruction-error norm.

pub mod layers;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // required in pure no_std builds; std in the graph shadows these with inherent methods
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::CirWindow;
use crate::error::{ConfigError, ShapeError, TrainingError};
use crate::mat::Mat;
use layers::{
    shape_of, stack_backward, stack_forward, stack_infer, Activation, FeatureMap, Layer,
    LayerCache,
};

/// Encoder/decoder parameter set.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NetworkParams {
    pub encoder: Vec<Layer>,
    pub decoder: Vec<Layer>,
    /// Window width the network consumes.
    pub input_len: usize,
    /// Embedding dimension the encoder produces.
    pub latent_dim: usize,
}

/// Which network to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ArchKind {
    /// Strided convolutional encoder with an upsampling convolutional
    /// decoder.
    Conv,
    /// Single-hidden-layer dense network.
    Mlp,
}

impl NetworkParams {
    /// Convolutional autoencoder:
    /// encoder `conv(1→16, k5 s2) → conv(16→32, k5 s2) → dense(→ latent)`,
    /// decoder `dense → reshape(32, W/4) → ×2 upsample → conv(32→16) →
    /// ×2 upsample → conv(16→1, linear)`. Requires `input_len % 4 == 0`.
    pub fn conv(input_len: usize, latent_dim: usize, seed: u64) -> Result<Self, ConfigError> {
        if input_len < 8 || input_len % 4 != 0 {
            return Err(ConfigError(format!(
                "convolutional network needs a window width divisible by 4 and >= 8, got {input_len}"
            )));
        }
        if latent_dim == 0 {
            return Err(ConfigError("latent dimension must be positive".into()));
        }
        let quarter = input_len / 4;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = vec![
            init_conv(1, 16, 5, 2, 2, Activation::Relu, &mut rng),
            init_conv(16, 32, 5, 2, 2, Activation::Relu, &mut rng),
            init_dense(32 * quarter, latent_dim, Activation::Identity, &mut rng),
        ];
        let decoder = vec![
            init_dense(latent_dim, 32 * quarter, Activation::Relu, &mut rng),
            Layer::Reshape {
                channels: 32,
                len: quarter,
            },
            Layer::Upsample { factor: 2 },
            init_conv(32, 16, 5, 1, 2, Activation::Relu, &mut rng),
            Layer::Upsample { factor: 2 },
            init_conv(16, 1, 5, 1, 2, Activation::Identity, &mut rng),
        ];
        let net = Self {
            encoder,
            decoder,
            input_len,
            latent_dim,
        };
        net.check_shapes()?;
        Ok(net)
    }

    /// Dense autoencoder `W → hidden → latent → hidden → W`.
    pub fn mlp(
        input_len: usize,
        hidden: usize,
        latent_dim: usize,
        seed: u64,
    ) -> Result<Self, ConfigError> {
        if input_len == 0 || hidden == 0 || latent_dim == 0 {
            return Err(ConfigError("all layer widths must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = vec![
            init_dense(input_len, hidden, Activation::Relu, &mut rng),
            init_dense(hidden, latent_dim, Activation::Identity, &mut rng),
        ];
        let decoder = vec![
            init_dense(latent_dim, hidden, Activation::Relu, &mut rng),
            init_dense(hidden, input_len, Activation::Identity, &mut rng),
        ];
        let net = Self {
            encoder,
            decoder,
            input_len,
            latent_dim,
        };
        net.check_shapes()?;
        Ok(net)
    }

    fn check_shapes(&self) -> Result<(), ConfigError> {
        let latent = shape_of(&self.encoder, (1, self.input_len))
            .map_err(|e| ConfigError(format!("encoder shape error: {e}")))?;
        if latent != (1, self.latent_dim) {
            return Err(ConfigError(format!(
                "encoder produces {}x{}, expected 1x{}",
                latent.0, latent.1, self.latent_dim
            )));
        }
        let out = shape_of(&self.decoder, latent)
            .map_err(|e| ConfigError(format!("decoder shape error: {e}")))?;
        if out != (1, self.input_len) {
            return Err(ConfigError(format!(
                "decoder produces {}x{}, expected 1x{}",
                out.0, out.1, self.input_len
            )));
        }
        Ok(())
    }

    /// Flat views of every trainable tensor, in optimizer-slot order
    /// (encoder first, weight before bias).
    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        self.encoder
            .iter_mut()
            .chain(self.decoder.iter_mut())
            .flat_map(|layer| match layer {
                Layer::Conv1d { weights, bias, .. } | Layer::Dense { weights, bias, .. } => {
                    vec![weights, bias]
                }
                _ => vec![],
            })
            .collect()
    }

    /// Sizes of the trainable tensors, in slot order.
    pub fn tensor_sizes(&self) -> Vec<usize> {
        self.encoder
            .iter()
            .chain(self.decoder.iter())
            .flat_map(|l| l.tensor_sizes())
            .collect()
    }

    pub(crate) fn encoder_slot_count(&self) -> usize {
        self.encoder.iter().map(|l| l.tensor_sizes().len()).sum()
    }
}

/// Uniform `±1/sqrt(fan_in)` initialization.
fn init_uniform(n: usize, fan_in: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
}

fn init_conv(
    in_ch: usize,
    out_ch: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    activation: Activation,
    rng: &mut ChaCha8Rng,
) -> Layer {
    let fan_in = in_ch * kernel;
    Layer::Conv1d {
        in_ch,
        out_ch,
        kernel,
        stride,
        padding,
        weights: init_uniform(out_ch * in_ch * kernel, fan_in, rng),
        bias: init_uniform(out_ch, fan_in, rng),
        activation,
    }
}

fn init_dense(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut ChaCha8Rng) -> Layer {
    Layer::Dense {
        in_dim,
        out_dim,
        weights: init_uniform(out_dim * in_dim, in_dim, rng),
        bias: init_uniform(out_dim, in_dim, rng),
        activation,
    }
}

/// Embedding of one window.
pub fn encode(params: &NetworkParams, window: &[f64]) -> Result<Vec<f64>, ShapeError> {
    if window.len() != params.input_len {
        return Err(ShapeError {
            expected: params.input_len,
            got: window.len(),
        });
    }
    Ok(stack_infer(&params.encoder, FeatureMap::from_flat(window))?.data)
}

/// Reconstruction from one embedding.
pub fn decode(params: &NetworkParams, z: &[f64]) -> Result<Vec<f64>, ShapeError> {
    if z.len() != params.latent_dim {
        return Err(ShapeError {
            expected: params.latent_dim,
            got: z.len(),
        });
    }
    Ok(stack_infer(&params.decoder, FeatureMap::from_flat(z))?.data)
}

/// Embeddings of all windows as an `N x latent_dim` matrix, in window order.
pub fn encode_all(params: &NetworkParams, windows: &[CirWindow]) -> Result<Mat, ShapeError> {
    let mut m = Mat::zeros(windows.len(), params.latent_dim);
    for (i, w) in windows.iter().enumerate() {
        let z = encode(params, &w.values)?;
        m.row_mut(i).copy_from_slice(&z);
    }
    Ok(m)
}

/// Mean over the batch of the squared reconstruction-error norm.
pub fn reconstruction_loss(
    params: &NetworkParams,
    windows: &[&[f64]],
) -> Result<f64, ShapeError> {
    let mut total = 0.0;
    for x in windows {
        let z = encode(params, x)?;
        let xhat = decode(params, &z)?;
        total += x
            .iter()
            .zip(&xhat)
            .map(|(a, b)| {
                let d = a - b;
                d * d
            })
            .sum::<f64>();
    }
    Ok(total / windows.len().max(1) as f64)
}

/// Gradient accumulator with one flat buffer per trainable tensor.
pub(crate) struct GradBuffer {
    pub slots: Vec<Vec<f64>>,
}

impl GradBuffer {
    pub fn new(params: &NetworkParams) -> Self {
        Self {
            slots: params.tensor_sizes().iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn reset(&mut self) {
        for s in &mut self.slots {
            s.fill(0.0);
        }
    }
}

/// Forward pass of one sample with caches kept for backprop.
pub(crate) struct SampleForward {
    pub enc_caches: Vec<LayerCache>,
    pub dec_caches: Vec<LayerCache>,
    pub latent: FeatureMap,
    pub output: FeatureMap,
}

pub(crate) fn forward_sample(
    params: &NetworkParams,
    x: &[f64],
) -> Result<SampleForward, ShapeError> {
    let (enc_caches, latent) = stack_forward(&params.encoder, FeatureMap::from_flat(x))?;
    let (dec_caches, output) = stack_forward(&params.decoder, latent.clone())?;
    Ok(SampleForward {
        enc_caches,
        dec_caches,
        latent,
        output,
    })
}

/// Backpropagates one sample given the gradient at the reconstruction and an
/// extra gradient arriving directly at the embedding (for the clustering
/// objective); accumulates parameter gradients into `grads`.
pub(crate) fn backward_sample(
    params: &NetworkParams,
    fwd: &SampleForward,
    grad_output: FeatureMap,
    grad_latent_extra: Option<&[f64]>,
    grads: &mut GradBuffer,
) {
    let enc_slots = params.encoder_slot_count();
    let mut grad_latent = stack_backward(
        &params.decoder,
        &fwd.dec_caches,
        grad_output,
        &mut grads.slots,
        enc_slots,
    );
    if let Some(extra) = grad_latent_extra {
        for (g, e) in grad_latent.data.iter_mut().zip(extra) {
            *g += e;
        }
    }
    stack_backward(
        &params.encoder,
        &fwd.enc_caches,
        grad_latent,
        &mut grads.slots,
        0,
    );
}

/// Batch reconstruction loss and its parameter gradients.
///
/// Loss: `(1/B) * sum_i |x_i - xhat_i|^2`; gradients accumulate into `grads`
/// (call `reset` first for a fresh batch).
pub(crate) fn recon_loss_and_grads(
    params: &NetworkParams,
    batch: &[&[f64]],
    grads: &mut GradBuffer,
) -> Result<f64, ShapeError> {
    let scale = 1.0 / batch.len().max(1) as f64;
    let mut loss = 0.0;
    for x in batch {
        let fwd = forward_sample(params, x)?;
        let mut grad_out = FeatureMap::zeros(1, params.input_len);
        for ((g, xhat), xv) in grad_out.data.iter_mut().zip(&fwd.output.data).zip(*x) {
            let diff = xhat - xv;
            loss += diff * diff * scale;
            *g = 2.0 * diff * scale;
        }
        backward_sample(params, &fwd, grad_out, None, grads);
    }
    Ok(loss)
}

/// Gradient-descent flavour used for training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum OptimizerKind {
    Sgd,
    /// Adam with `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
    Adam,
}

impl OptimizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sgd" => Some(OptimizerKind::Sgd),
            "adam" => Some(OptimizerKind::Adam),
            _ => None,
        }
    }
}

/// Per-tensor first/second moment state shared by every training loop.
pub(crate) struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, slot_sizes: &[usize]) -> Self {
        Self {
            kind,
            lr,
            t: 0,
            m: slot_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: slot_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Starts one optimization step covering all slots.
    pub fn begin_step(&mut self) {
        self.t += 1;
    }

    pub fn apply(&mut self, slot: usize, param: &mut [f64], grad: &[f64]) {
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in param.iter_mut().zip(grad) {
                    *p -= self.lr * g;
                }
            }
            OptimizerKind::Adam => {
                const B1: f64 = 0.9;
                const B2: f64 = 0.999;
                const EPS: f64 = 1e-8;
                let bc1 = 1.0 - B1.powi(self.t);
                let bc2 = 1.0 - B2.powi(self.t);
                let m = &mut self.m[slot];
                let v = &mut self.v[slot];
                for (((p, g), mi), vi) in param.iter_mut().zip(grad).zip(m).zip(v) {
                    *mi = B1 * *mi + (1.0 - B1) * g;
                    *vi = B2 * *vi + (1.0 - B2) * g * g;
                    let mhat = *mi / bc1;
                    let vhat = *vi / bc2;
                    *p -= self.lr * mhat / (vhat.sqrt() + EPS);
                }
            }
        }
    }
}

/// Applies accumulated gradients to every network tensor.
pub(crate) fn apply_network_grads(
    params: &mut NetworkParams,
    grads: &GradBuffer,
    opt: &mut Optimizer,
) {
    for (slot, tensor) in params.tensors_mut().into_iter().enumerate() {
        opt.apply(slot, tensor, &grads.slots[slot]);
    }
}

/// Deterministic shuffled mini-batch order; reshuffles after each full pass.
pub(crate) struct BatchScheduler {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
}

impl BatchScheduler {
    pub fn new(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        Self {
            rng,
            order,
            cursor: 0,
        }
    }

    /// Next batch of up to `size` indices; a pass never spans a reshuffle.
    pub fn next_batch(&mut self, size: usize) -> &[usize] {
        if self.cursor >= self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let end = (self.cursor + size).min(self.order.len());
        let batch = &self.order[self.cursor..end];
        self.cursor = end;
        batch
    }

    /// Batches per full pass over the data.
    pub fn batches_per_pass(&self, size: usize) -> usize {
        self.order.len().div_ceil(size)
    }
}

/// Training settings for the reconstruction phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 50,
            optimizer: OptimizerKind::Adam,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AutoencError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Training(#[from] TrainingError),
}

/// Trained parameters plus the mean batch loss of every epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainOutcome {
    pub params: NetworkParams,
    pub epoch_losses: Vec<f64>,
}

/// Minimizes the reconstruction loss over shuffled mini-batches.
///
/// With `epochs = 0` the parameters come back untouched. A non-finite batch
/// loss aborts with the number of epochs that completed cleanly.
pub fn pretrain(
    params: NetworkParams,
    windows: &[CirWindow],
    cfg: &TrainConfig,
) -> Result<PretrainOutcome, AutoencError> {
    if cfg.epochs == 0 {
        return Ok(PretrainOutcome {
            params,
            epoch_losses: Vec::new(),
        });
    }
    if windows.is_empty() {
        return Err(ConfigError("cannot train on an empty window set".into()).into());
    }
    if cfg.batch_size == 0 {
        return Err(ConfigError("batch size must be positive".into()).into());
    }
    for w in windows {
        if w.values.len() != params.input_len {
            return Err(AutoencError::Shape(ShapeError {
                expected: params.input_len,
                got: w.values.len(),
            }));
        }
    }

    let mut params = params;
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, &params.tensor_sizes());
    let mut scheduler = BatchScheduler::new(windows.len(), cfg.seed);
    let batches_per_epoch = scheduler.batches_per_pass(cfg.batch_size);
    let mut grads = GradBuffer::new(&params);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut epoch_loss = 0.0;
        for _ in 0..batches_per_epoch {
            let idx = scheduler.next_batch(cfg.batch_size).to_vec();
            let batch: Vec<&[f64]> = idx.iter().map(|&i| windows[i].values.as_slice()).collect();
            grads.reset();
            let loss = recon_loss_and_grads(&params, &batch, &mut grads)?;
            if !loss.is_finite() {
                return Err(TrainingError { last_finite: epoch }.into());
            }
            opt.begin_step();
            apply_network_grads(&mut params, &grads, &mut opt);
            epoch_loss += loss;
        }
        epoch_losses.push(epoch_loss / batches_per_epoch as f64);
    }
    Ok(PretrainOutcome {
        params,
        epoch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SourceKey;

    fn toy_windows(n: usize, w: usize, seed: u64) -> Vec<CirWindow> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                // A bump at a random position, similar in spirit to a CIR.
                let centre = rng.random_range(3..(w - 3)) as f64;
                let values: Vec<f64> = (0..w)
                    .map(|t| {
                        let d = (t as f64 - centre) / 2.0;
                        (-0.5 * d * d).exp()
                    })
                    .collect();
                CirWindow {
                    values,
                    source_key: SourceKey::new(i as u64, 0),
                    window_start: 0,
                }
            })
            .collect()
    }

    #[test]
    fn architectures_produce_the_declared_shapes() {
        let net = NetworkParams::conv(16, 2, 1).unwrap();
        let z = encode(&net, &vec![0.5; 16]).unwrap();
        assert_eq!(z.len(), 2);
        let xhat = decode(&net, &z).unwrap();
        assert_eq!(xhat.len(), 16);

        let net = NetworkParams::conv(128, 10, 1).unwrap();
        let z = encode(&net, &vec![0.1; 128]).unwrap();
        assert_eq!(z.len(), 10);
        assert_eq!(decode(&net, &z).unwrap().len(), 128);

        let net = NetworkParams::mlp(32, 64, 4, 9).unwrap();
        let z = encode(&net, &vec![0.3; 32]).unwrap();
        assert_eq!(z.len(), 4);
        assert_eq!(decode(&net, &z).unwrap().len(), 32);
    }

    #[test]
    fn bad_widths_and_shapes_are_rejected() {
        assert!(NetworkParams::conv(18, 4, 0).is_err());
        assert!(NetworkParams::conv(4, 4, 0).is_err());
        assert!(NetworkParams::conv(16, 0, 0).is_err());
        let net = NetworkParams::conv(16, 2, 0).unwrap();
        assert!(encode(&net, &vec![0.0; 17]).is_err());
        assert!(decode(&net, &vec![0.0; 3]).is_err());
    }

    #[test]
    fn initialization_is_seeded_and_bounded() {
        let a = NetworkParams::conv(16, 2, 7).unwrap();
        let b = NetworkParams::conv(16, 2, 7).unwrap();
        let c = NetworkParams::conv(16, 2, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        // First conv has fan-in 5: weights within ±1/sqrt(5).
        if let Layer::Conv1d { weights, .. } = &a.encoder[0] {
            let bound = 1.0 / 5.0f64.sqrt();
            assert!(weights.iter().all(|w| w.abs() <= bound));
            assert!(weights.iter().any(|w| w.abs() > 0.01));
        } else {
            panic!("first encoder layer should be a convolution");
        }
    }

    #[test]
    fn reconstruction_gradients_match_finite_differences() {
        let mut net = NetworkParams::conv(16, 2, 3).unwrap();
        let windows = toy_windows(4, 16, 5);
        let batch: Vec<&[f64]> = windows.iter().map(|w| w.values.as_slice()).collect();
        let mut grads = GradBuffer::new(&net);
        let loss0 = recon_loss_and_grads(&net, &batch, &mut grads).unwrap();
        assert!(loss0.is_finite());

        let h = 1e-5;
        let sizes = net.tensor_sizes();
        for (slot, &size) in sizes.iter().enumerate() {
            // Spot-check a spread of coordinates in every tensor.
            for idx in (0..size).step_by((size / 5).max(1)) {
                let orig = net.tensors_mut()[slot][idx];
                net.tensors_mut()[slot][idx] = orig + h;
                let up = reconstruction_loss(&net, &batch).unwrap();
                net.tensors_mut()[slot][idx] = orig - h;
                let down = reconstruction_loss(&net, &batch).unwrap();
                net.tensors_mut()[slot][idx] = orig;
                let fd = (up - down) / (2.0 * h);
                let an = grads.slots[slot][idx];
                assert!(
                    (fd - an).abs() <= 1e-4 * (1.0 + fd.abs().max(an.abs())),
                    "slot {slot} idx {idx}: fd {fd} vs analytic {an}"
                );
            }
        }
    }

    #[test]
    fn zero_epochs_leaves_parameters_untouched() {
        let net = NetworkParams::conv(16, 2, 3).unwrap();
        let windows = toy_windows(8, 16, 1);
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let out = pretrain(net.clone(), &windows, &cfg).unwrap();
        assert_eq!(out.params, net);
        assert!(out.epoch_losses.is_empty());
    }

    #[test]
    fn pretraining_reduces_the_loss() {
        let net = NetworkParams::conv(16, 3, 11).unwrap();
        let windows = toy_windows(64, 16, 2);
        let cfg = TrainConfig {
            learning_rate: 1e-3,
            batch_size: 16,
            epochs: 40,
            optimizer: OptimizerKind::Adam,
            seed: 4,
        };
        let out = pretrain(net, &windows, &cfg).unwrap();
        assert_eq!(out.epoch_losses.len(), 40);
        let first = out.epoch_losses[0];
        let last = *out.epoch_losses.last().unwrap();
        assert!(
            last < 0.5 * first,
            "loss should at least halve: {first} -> {last}"
        );
    }

    #[test]
    fn pretraining_is_deterministic() {
        let windows = toy_windows(32, 16, 6);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let a = pretrain(NetworkParams::conv(16, 2, 1).unwrap(), &windows, &cfg).unwrap();
        let b = pretrain(NetworkParams::conv(16, 2, 1).unwrap(), &windows, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn divergence_reports_the_last_clean_epoch() {
        let net = NetworkParams::mlp(8, 8, 2, 0).unwrap();
        let windows = toy_windows(16, 8, 3);
        // An absurd SGD learning rate makes the dense net blow up quickly.
        let cfg = TrainConfig {
            learning_rate: 1e12,
            batch_size: 4,
            epochs: 50,
            optimizer: OptimizerKind::Sgd,
            seed: 0,
        };
        match pretrain(net, &windows, &cfg) {
            Err(AutoencError::Training(TrainingError { last_finite })) => {
                assert!(last_finite < 50);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn sgd_takes_plain_gradient_steps() {
        let mut opt = Optimizer::new(OptimizerKind::Sgd, 0.1, &[2]);
        let mut p = vec![1.0, -1.0];
        opt.begin_step();
        opt.apply(0, &mut p, &[0.5, -0.5]);
        assert_eq!(p, vec![0.95, -0.95]);
    }

    #[test]
    fn adam_minimizes_a_quadratic() {
        // f(p) = |p - target|^2.
        let target = [3.0, -2.0];
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.05, &[2]);
        let mut p = vec![0.0, 0.0];
        for _ in 0..2000 {
            let g: Vec<f64> = p.iter().zip(&target).map(|(pv, t)| 2.0 * (pv - t)).collect();
            opt.begin_step();
            opt.apply(0, &mut p, &g);
        }
        assert!((p[0] - 3.0).abs() < 1e-3 && (p[1] + 2.0).abs() < 1e-3, "{p:?}");
    }

    #[test]
    fn scheduler_visits_everything_each_pass() {
        let mut s = BatchScheduler::new(10, 3);
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..s.batches_per_pass(3) {
            for &i in s.next_batch(3) {
                assert!(seen.insert(i), "index repeated within a pass");
            }
        }
        assert_eq!(seen.len(), 10);
        // The next pass starts fresh.
        assert_eq!(s.next_batch(3).len(), 3);
    }

    #[test]
    fn encode_all_aligns_rows_with_windows() {
        let net = NetworkParams::conv(16, 2, 5).unwrap();
        let windows = toy_windows(6, 16, 9);
        let m = encode_all(&net, &windows).unwrap();
        assert_eq!((m.rows, m.cols), (6, 2));
        let z3 = encode(&net, &windows[3].values).unwrap();
        assert_eq!(m.row(3), z3.as_slice());
    }
}
