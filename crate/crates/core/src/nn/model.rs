//! Conv-block stack with attention pooling over time.
//!
//! ```text
//! input N x 1 x T x F
//!   -> blocks: conv3x3 (pad 1) -> batch norm -> ELU -> max-pool 1x2 (freq) -> dropout
//!   -> mean over the remaining frequency columns (a no-op once F == 1)
//!   -> per frame: attention score s_t and class logits z_{t,c}
//!   -> p_c = sum_t softmax(s)_t * sigmoid(z_{t,c})
//! ```

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::layers::{self, BatchNormCache, Tensor};
use crate::dataset::NUM_CLASSES;
use crate::error::{Error, Result};
use crate::features::LogMel;

pub const DEFAULT_DROPOUT: f64 = 0.1;
pub const PRED_CLAMP: f64 = 1e-7;
const BASE_CHANNELS: [usize; 4] = [8, 16, 32, 64];

/// Number of ceil-halvings that take `freq_bins` down to one column (at least
/// one block) and the matching channel plan `8, 16, 32, 64, 64, ...`.
pub fn derive_depth(freq_bins: usize) -> (usize, Vec<usize>) {
    let mut blocks = 0;
    let mut f = freq_bins.max(1);
    while f > 1 {
        f = f.div_ceil(2);
        blocks += 1;
    }
    let blocks = blocks.max(1);
    (blocks, channel_plan(blocks))
}

pub fn channel_plan(blocks: usize) -> Vec<usize> {
    (0..blocks).map(|i| BASE_CHANNELS[i.min(BASE_CHANNELS.len() - 1)]).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub freq_bins: usize,
    pub channels: Vec<usize>,
    pub dropout: f64,
}

impl ModelConfig {
    /// Depth derived from the input width.
    pub fn for_input(freq_bins: usize) -> Self {
        let (_, channels) = derive_depth(freq_bins);
        ModelConfig { freq_bins, channels, dropout: DEFAULT_DROPOUT }
    }

    /// Fixed block count; leftover frequency columns are averaged before the
    /// heads.
    pub fn with_blocks(freq_bins: usize, blocks: usize) -> Self {
        ModelConfig { freq_bins, channels: channel_plan(blocks.max(1)), dropout: DEFAULT_DROPOUT }
    }

    pub fn blocks(&self) -> usize {
        self.channels.len()
    }

    /// Frequency width after every block.
    pub fn freq_after_blocks(&self) -> usize {
        (0..self.blocks()).fold(self.freq_bins, |f, _| f.div_ceil(2))
    }

    pub fn embedding(&self) -> usize {
        *self.channels.last().expect("at least one block")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlockParams {
    pub in_channels: usize,
    pub out_channels: usize,
    /// `out x in x 3 x 3`
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl ConvBlockParams {
    fn zeros(in_channels: usize, out_channels: usize) -> Self {
        ConvBlockParams {
            in_channels,
            out_channels,
            kernel: vec![0.0; out_channels * in_channels * 9],
            bias: vec![0.0; out_channels],
            gamma: vec![1.0; out_channels],
            beta: vec![0.0; out_channels],
            running_mean: vec![0.0; out_channels],
            running_var: vec![1.0; out_channels],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub blocks: Vec<ConvBlockParams>,
    /// Per-frame attention score weights, length = embedding.
    pub att_weight: Vec<f64>,
    pub att_bias: Vec<f64>,
    /// `classes x embedding`
    pub cls_weight: Vec<f64>,
    pub cls_bias: Vec<f64>,
}

/// Shape of one named parameter tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorInfo {
    pub name: String,
    pub dims: Vec<usize>,
}

impl ModelParams {
    /// All weights zero, batch-norm scale 1, running variance 1.
    pub fn zeros(config: ModelConfig) -> Self {
        let mut blocks = Vec::new();
        let mut cin = 1;
        for &c in &config.channels {
            blocks.push(ConvBlockParams::zeros(cin, c));
            cin = c;
        }
        let e = config.embedding();
        ModelParams {
            config,
            blocks,
            att_weight: vec![0.0; e],
            att_bias: vec![0.0],
            cls_weight: vec![0.0; NUM_CLASSES * e],
            cls_bias: vec![0.0; NUM_CLASSES],
        }
    }

    /// He-normal conv kernels, Glorot-uniform heads.
    pub fn init(config: ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(config);
        for b in &mut p.blocks {
            let std = (2.0 / (b.in_channels * 9) as f64).sqrt();
            for w in &mut b.kernel {
                *w = std * rng.sample::<f64, _>(StandardNormal);
            }
        }
        let e = p.config.embedding();
        let lim_att = (6.0 / (e + 1) as f64).sqrt();
        for w in &mut p.att_weight {
            *w = rng.random_range(-lim_att..lim_att);
        }
        let lim_cls = (6.0 / (e + NUM_CLASSES) as f64).sqrt();
        for w in &mut p.cls_weight {
            *w = rng.random_range(-lim_cls..lim_cls);
        }
        p
    }

    /// Trainable tensors in declaration order.
    pub fn trainable(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for b in &self.blocks {
            out.extend([&b.kernel[..], &b.bias[..], &b.gamma[..], &b.beta[..]]);
        }
        out.extend([&self.att_weight[..], &self.att_bias[..], &self.cls_weight[..], &self.cls_bias[..]]);
        out
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out: Vec<&mut Vec<f64>> = Vec::new();
        for b in &mut self.blocks {
            out.push(&mut b.kernel);
            out.push(&mut b.bias);
            out.push(&mut b.gamma);
            out.push(&mut b.beta);
        }
        out.push(&mut self.att_weight);
        out.push(&mut self.att_bias);
        out.push(&mut self.cls_weight);
        out.push(&mut self.cls_bias);
        out
    }

    /// Names and shapes of the trainable tensors, same order as
    /// [`trainable`](Self::trainable).
    pub fn trainable_info(&self) -> Vec<TensorInfo> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            let c = b.out_channels;
            out.push(TensorInfo { name: format!("block{i}.kernel"), dims: vec![c, b.in_channels, 3, 3] });
            out.push(TensorInfo { name: format!("block{i}.bias"), dims: vec![c] });
            out.push(TensorInfo { name: format!("block{i}.gamma"), dims: vec![c] });
            out.push(TensorInfo { name: format!("block{i}.beta"), dims: vec![c] });
        }
        let e = self.config.embedding();
        out.push(TensorInfo { name: "attention.weight".into(), dims: vec![e] });
        out.push(TensorInfo { name: "attention.bias".into(), dims: vec![1] });
        out.push(TensorInfo { name: "classifier.weight".into(), dims: vec![NUM_CLASSES, e] });
        out.push(TensorInfo { name: "classifier.bias".into(), dims: vec![NUM_CLASSES] });
        out
    }

    /// Batch-norm running statistics, block by block (mean then variance).
    pub fn buffers(&self) -> Vec<&[f64]> {
        self.blocks.iter().flat_map(|b| [&b.running_mean[..], &b.running_var[..]]).collect()
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Vec<f64>> {
        self.blocks.iter_mut().flat_map(|b| [&mut b.running_mean, &mut b.running_var]).collect()
    }

    pub fn buffer_info(&self) -> Vec<TensorInfo> {
        self.blocks
            .iter()
            .enumerate()
            .flat_map(|(i, b)| {
                [
                    TensorInfo { name: format!("block{i}.running_mean"), dims: vec![b.out_channels] },
                    TensorInfo { name: format!("block{i}.running_var"), dims: vec![b.out_channels] },
                ]
            })
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.trainable().iter().map(|t| t.len()).sum()
    }

    /// Folds the batch statistics from a training forward pass into the
    /// running estimates.
    pub fn update_running_stats(&mut self, cache: &ForwardCache) {
        let count = cache.batch * cache.time;
        for (b, bc) in self.blocks.iter_mut().zip(&cache.blocks) {
            let per_channel = count * bc.conv_out_shape[3];
            layers::update_running_stats(&mut b.running_mean, &mut b.running_var, &bc.bn, per_channel);
        }
    }
}

/// Gradients aligned with [`ModelParams::trainable`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Gradients { tensors: params.trainable().iter().map(|t| vec![0.0; t.len()]).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// How dropout behaves in a training-mode pass.
pub enum Dropout<'a> {
    Disabled,
    Sample(&'a mut dyn RngCore),
    /// One mask per block, each the length of that block's pooled output.
    Fixed(&'a [Vec<f64>]),
}

pub enum Mode<'a> {
    /// Batch statistics and the given dropout behaviour.
    Train(Dropout<'a>),
    /// Running statistics, no dropout.
    Eval,
}

#[derive(Debug, Clone)]
pub struct BlockCache {
    pub(crate) input: Tensor,
    conv_out_shape: [usize; 4],
    bn: BatchNormCache,
    act: Tensor,
    pub(crate) pool_arg: Vec<usize>,
    pub dropout_mask: Option<Vec<f64>>,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub batch: usize,
    pub time: usize,
    pub blocks: Vec<BlockCache>,
    final_shape: [usize; 4],
    /// `N x T x E` frame embeddings
    embed: Vec<f64>,
    /// `N x T` attention weights
    pub attention: Vec<f64>,
    /// `N x T x C` frame probabilities
    pub frame_probs: Vec<f64>,
    pub probs: Vec<[f64; NUM_CLASSES]>,
}

/// Stacks features into an `N x 1 x T x F` tensor.
pub fn features_to_tensor(features: &[LogMel]) -> Result<Tensor> {
    let first = features.first().ok_or(Error::EmptyInput("no features"))?;
    let (t, f) = first.shape();
    let mut data = Vec::with_capacity(features.len() * t * f);
    for x in features {
        if x.shape() != (t, f) {
            return Err(Error::Shape(format!("mixed feature shapes {:?} and {:?}", (t, f), x.shape())));
        }
        data.extend_from_slice(&x.data);
    }
    Tensor::from_vec([features.len(), 1, t, f], data)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// `p_c = sum_t softmax(scores)_t * sigmoid(logits_{t,c})` for one example.
/// `logits` is `T x C` row-major.
pub fn attention_pool(scores: &[f64], logits: &[f64]) -> Result<[f64; NUM_CLASSES]> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("attention over zero frames"));
    }
    if logits.len() != scores.len() * NUM_CLASSES {
        return Err(Error::Shape(format!("{} logits for {} frames", logits.len(), scores.len())));
    }
    let a = softmax(scores);
    let mut out = [0.0; NUM_CLASSES];
    for (t, &w) in a.iter().enumerate() {
        for c in 0..NUM_CLASSES {
            out[c] += w * sigmoid(logits[t * NUM_CLASSES + c]);
        }
    }
    Ok(out)
}

/// Mean binary cross-entropy over classes and its gradient with respect to
/// the predictions. Predictions are clamped to `[1e-7, 1 - 1e-7]`; the
/// gradient is zero where the clamp is active.
pub fn bce_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Shape(format!("{} predictions vs {} targets", pred.len(), target.len())));
    }
    let c = pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &y) in pred.iter().zip(target) {
        let q = p.clamp(PRED_CLAMP, 1.0 - PRED_CLAMP);
        loss -= y * q.ln() + (1.0 - y) * (1.0 - q).ln();
        let inside = p > PRED_CLAMP && p < 1.0 - PRED_CLAMP;
        grad.push(if inside { (q - y) / (q * (1.0 - q)) / c } else { 0.0 });
    }
    Ok((loss / c, grad))
}

impl ModelParams {
    pub fn forward(&self, x: &Tensor, mut mode: Mode<'_>) -> Result<ForwardCache> {
        let [n, cin, t, f] = x.shape;
        if cin != 1 || f != self.config.freq_bins {
            return Err(Error::Shape(format!(
                "model expects N x 1 x T x {}, got {:?}",
                self.config.freq_bins, x.shape
            )));
        }
        if n == 0 || t == 0 {
            return Err(Error::EmptyInput("forward pass over an empty batch or zero frames"));
        }
        let training = matches!(mode, Mode::Train(_));
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for (bi, b) in self.blocks.iter().enumerate() {
            let conv = layers::conv3x3_forward(&h, &b.kernel, &b.bias)?;
            let conv_out_shape = conv.shape;
            let (bn_out, bn) =
                layers::batch_norm_forward(&conv, &b.gamma, &b.beta, &b.running_mean, &b.running_var, training);
            let act = layers::elu_forward(&bn_out);
            let (mut pooled, pool_arg) = layers::max_pool_freq_forward(&act);
            let dropout_mask = match &mut mode {
                Mode::Train(Dropout::Sample(rng)) if self.config.dropout > 0.0 => {
                    Some(layers::dropout_mask(pooled.data.len(), self.config.dropout, &mut **rng))
                }
                Mode::Train(Dropout::Fixed(masks)) => {
                    let m = masks.get(bi).ok_or_else(|| Error::Shape(format!("no dropout mask for block {bi}")))?;
                    if m.len() != pooled.data.len() {
                        return Err(Error::Shape(format!("dropout mask for block {bi} has wrong length")));
                    }
                    Some(m.clone())
                }
                _ => None,
            };
            if let Some(m) = &dropout_mask {
                for (v, k) in pooled.data.iter_mut().zip(m) {
                    *v *= k;
                }
            }
            caches.push(BlockCache { input: h, conv_out_shape, bn, act, pool_arg, dropout_mask });
            h = pooled;
        }

        let [_, e, _, fr] = h.shape;
        let mut embed = vec![0.0; n * t * e];
        for b in 0..n {
            for ch in 0..e {
                for ti in 0..t {
                    let row = &h.data[((b * e + ch) * t + ti) * fr..][..fr];
                    embed[(b * t + ti) * e + ch] = row.iter().sum::<f64>() / fr as f64;
                }
            }
        }

        let mut attention = vec![0.0; n * t];
        let mut frame_probs = vec![0.0; n * t * NUM_CLASSES];
        let mut probs = vec![[0.0; NUM_CLASSES]; n];
        for b in 0..n {
            let mut scores = vec![0.0; t];
            for ti in 0..t {
                let v = &embed[(b * t + ti) * e..][..e];
                scores[ti] = self.att_bias[0] + dot(&self.att_weight, v);
                for c in 0..NUM_CLASSES {
                    let z = self.cls_bias[c] + dot(&self.cls_weight[c * e..(c + 1) * e], v);
                    frame_probs[(b * t + ti) * NUM_CLASSES + c] = sigmoid(z);
                }
            }
            let a = softmax(&scores);
            for ti in 0..t {
                for c in 0..NUM_CLASSES {
                    probs[b][c] += a[ti] * frame_probs[(b * t + ti) * NUM_CLASSES + c];
                }
            }
            attention[b * t..(b + 1) * t].copy_from_slice(&a);
        }
        if probs.iter().flatten().any(|p| !p.is_finite()) {
            return Err(Error::NonFiniteGradient("forward output".into()));
        }
        Ok(ForwardCache {
            batch: n,
            time: t,
            blocks: caches,
            final_shape: h.shape,
            embed,
            attention,
            frame_probs,
            probs,
        })
    }

    /// Batch-mean BCE and its gradients for a cached forward pass.
    pub fn backward(&self, cache: &ForwardCache, targets: &[[f64; NUM_CLASSES]]) -> Result<(f64, Gradients)> {
        let (n, t) = (cache.batch, cache.time);
        if targets.len() != n {
            return Err(Error::Shape(format!("{} targets for a batch of {n}", targets.len())));
        }
        let e = self.config.embedding();
        let mut grads = Gradients::zeros_like(self);
        let nb = self.blocks.len();
        let (mut g_att_w, mut g_att_b) = (vec![0.0; e], 0.0);
        let (mut g_cls_w, mut g_cls_b) = (vec![0.0; NUM_CLASSES * e], vec![0.0; NUM_CLASSES]);
        let mut d_embed = vec![0.0; n * t * e];
        let mut total = 0.0;

        for b in 0..n {
            let (loss, dp) = bce_loss(&cache.probs[b], &targets[b])?;
            total += loss;
            let a = &cache.attention[b * t..(b + 1) * t];
            // d/d a_t and d/d z_{t,c}
            let mut da = vec![0.0; t];
            for ti in 0..t {
                let v = &cache.embed[(b * t + ti) * e..][..e];
                let dv = &mut d_embed[(b * t + ti) * e..][..e];
                for c in 0..NUM_CLASSES {
                    let s = cache.frame_probs[(b * t + ti) * NUM_CLASSES + c];
                    let g = dp[c] / n as f64;
                    da[ti] += g * s;
                    let dz = g * a[ti] * s * (1.0 - s);
                    g_cls_b[c] += dz;
                    let w = &self.cls_weight[c * e..(c + 1) * e];
                    for k in 0..e {
                        g_cls_w[c * e + k] += dz * v[k];
                        dv[k] += dz * w[k];
                    }
                }
            }
            let weighted: f64 = a.iter().zip(&da).map(|(x, y)| x * y).sum();
            for ti in 0..t {
                let ds = a[ti] * (da[ti] - weighted);
                g_att_b += ds;
                let v = &cache.embed[(b * t + ti) * e..][..e];
                let dv = &mut d_embed[(b * t + ti) * e..][..e];
                for k in 0..e {
                    g_att_w[k] += ds * v[k];
                    dv[k] += ds * self.att_weight[k];
                }
            }
        }

        // frequency mean
        let [_, _, _, fr] = cache.final_shape;
        let mut dh = Tensor::zeros(cache.final_shape);
        for b in 0..n {
            for ch in 0..e {
                for ti in 0..t {
                    let g = d_embed[(b * t + ti) * e + ch] / fr as f64;
                    dh.data[((b * e + ch) * t + ti) * fr..][..fr].fill(g);
                }
            }
        }

        for (bi, (p, c)) in self.blocks.iter().zip(&cache.blocks).enumerate().rev() {
            if let Some(mask) = &c.dropout_mask {
                for (g, m) in dh.data.iter_mut().zip(mask) {
                    *g *= m;
                }
            }
            let d_act = layers::max_pool_freq_backward(c.act.shape, &c.pool_arg, &dh);
            let d_bn = layers::elu_backward(&c.act, &d_act);
            let (d_conv, d_gamma, d_beta) = layers::batch_norm_backward(&d_bn, &p.gamma, &c.bn);
            let (dx, d_kernel, d_bias) = layers::conv3x3_backward(&c.input, &p.kernel, &d_conv, bi > 0);
            grads.tensors[4 * bi] = d_kernel;
            grads.tensors[4 * bi + 1] = d_bias;
            grads.tensors[4 * bi + 2] = d_gamma;
            grads.tensors[4 * bi + 3] = d_beta;
            if let Some(dx) = dx {
                dh = dx;
            }
        }
        grads.tensors[4 * nb] = g_att_w;
        grads.tensors[4 * nb + 1] = vec![g_att_b];
        grads.tensors[4 * nb + 2] = g_cls_w;
        grads.tensors[4 * nb + 3] = g_cls_b;
        Ok((total / n as f64, grads))
    }

    /// Inference-mode class probabilities.
    pub fn predict(&self, features: &[LogMel]) -> Result<Vec<[f64; NUM_CLASSES]>> {
        Ok(self.forward(&features_to_tensor(features)?, Mode::Eval)?.probs)
    }
}

/// Batch-mean BCE of predictions against targets.
pub fn mean_bce(probs: &[[f64; NUM_CLASSES]], targets: &[[f64; NUM_CLASSES]]) -> Result<f64> {
    if probs.len() != targets.len() || probs.is_empty() {
        return Err(Error::Shape(format!("{} predictions vs {} targets", probs.len(), targets.len())));
    }
    let mut total = 0.0;
    for (p, y) in probs.iter().zip(targets) {
        total += bce_loss(p, y)?.0;
    }
    Ok(total / probs.len() as f64)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
