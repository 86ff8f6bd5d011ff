//! Central-difference verification of the analytic gradients.
//!
//! Max pooling is only piecewise smooth. When a perturbation flips a pooling
//! decision the difference quotient straddles a kink and says nothing about
//! the derivative; such entries are retried with a 10x smaller step and, if
//! they still straddle, counted under `kinks` instead of being compared.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::layers::{self, Tensor};
use super::model::{Dropout, ForwardCache, Mode, ModelConfig, ModelParams};
use crate::dataset::NUM_CLASSES;
use crate::error::Result;

pub const DEFAULT_STEP: f64 = 1e-5;
/// Step for [`linear_check`]. The loss is quadratic along every coordinate,
/// so any step is exact in exact arithmetic; a unit step keeps cancellation
/// in `L(p + h) - L(p - h)` far below the tolerance.
pub const LINEAR_STEP: f64 = 1.0;
/// Denominator floor for the relative error of near-zero gradients.
pub const REL_FLOOR: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, REL_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropoutCheck {
    Disabled,
    /// Sample one mask set up front and reuse it for every evaluation.
    FrozenMask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckConfig {
    pub frames: usize,
    pub freq_bins: usize,
    pub blocks: usize,
    pub batch: usize,
    pub step: f64,
    pub dropout: DropoutCheck,
}

impl Default for GradCheckConfig {
    /// Two blocks on an 8x8 input, batch of 3.
    fn default() -> Self {
        GradCheckConfig {
            frames: 8,
            freq_bins: 8,
            blocks: 2,
            batch: 3,
            step: DEFAULT_STEP,
            dropout: DropoutCheck::Disabled,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupError {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
    pub kinks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub groups: Vec<GroupError>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max)
    }

    pub fn checked(&self) -> usize {
        self.groups.iter().map(|g| g.checked).sum()
    }

    pub fn kinks(&self) -> usize {
        self.groups.iter().map(|g| g.kinks).sum()
    }

    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_error() < tolerance
    }

    /// Group names whose error reaches `tolerance`.
    pub fn failures(&self, tolerance: f64) -> Vec<&str> {
        self.groups.iter().filter(|g| g.max_rel_error >= tolerance).map(|g| g.name.as_str()).collect()
    }
}

fn random_tensor(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor {
    let len = shape.iter().product();
    Tensor { shape, data: (0..len).map(|_| rng.sample(StandardNormal)).collect() }
}

fn pool_pattern(cache: &ForwardCache) -> Vec<&[usize]> {
    cache.blocks.iter().map(|b| &b.pool_arg[..]).collect()
}

/// Full-model check: random parameters, random input and random soft
/// targets, loss = batch-mean BCE in training mode.
pub fn grad_check(cfg: &GradCheckConfig, seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model_cfg = ModelConfig::with_blocks(cfg.freq_bins, cfg.blocks);
    model_cfg.dropout = match cfg.dropout {
        DropoutCheck::Disabled => 0.0,
        DropoutCheck::FrozenMask => 0.1,
    };
    let mut params = ModelParams::init(model_cfg, rng.random());
    // non-trivial batch-norm affine and biases
    for b in &mut params.blocks {
        for v in b.gamma.iter_mut().chain(&mut b.beta).chain(&mut b.bias) {
            *v += 0.3 * rng.sample::<f64, _>(StandardNormal);
        }
    }
    params.att_bias[0] = 0.1;
    for v in &mut params.cls_bias {
        *v = 0.2 * rng.sample::<f64, _>(StandardNormal);
    }
    let x = random_tensor([cfg.batch, 1, cfg.frames, cfg.freq_bins], &mut rng);
    let targets: Vec<[f64; NUM_CLASSES]> =
        (0..cfg.batch).map(|_| std::array::from_fn(|_| rng.random_range(0.0..1.0))).collect();

    let masks: Vec<Vec<f64>> = match cfg.dropout {
        DropoutCheck::Disabled => Vec::new(),
        DropoutCheck::FrozenMask => {
            let mut mask_rng = ChaCha8Rng::seed_from_u64(seed ^ 0xD50);
            let cache = params.forward(&x, Mode::Train(Dropout::Sample(&mut mask_rng)))?;
            cache.blocks.iter().map(|b| b.dropout_mask.clone().unwrap_or_default()).collect()
        }
    };
    let run = |p: &ModelParams| -> Result<ForwardCache> {
        let dropout = if masks.is_empty() { Dropout::Disabled } else { Dropout::Fixed(&masks) };
        p.forward(&x, Mode::Train(dropout))
    };

    let base = run(&params)?;
    let (_, grads) = params.backward(&base, &targets)?;
    let base_pattern: Vec<Vec<usize>> = pool_pattern(&base).into_iter().map(|p| p.to_vec()).collect();

    let info = params.trainable_info();
    let mut groups = Vec::with_capacity(info.len());
    for (ti, ti_info) in info.iter().enumerate() {
        let mut group = GroupError { name: ti_info.name.clone(), max_rel_error: 0.0, checked: 0, kinks: 0 };
        for ei in 0..grads.tensors[ti].len() {
            let mut numeric = None;
            for h in [cfg.step, cfg.step / 10.0] {
                let eval = |delta: f64| -> Result<(f64, bool)> {
                    let mut p = params.clone();
                    p.trainable_mut()[ti][ei] += delta;
                    let c = run(&p)?;
                    let same = pool_pattern(&c).iter().zip(&base_pattern).all(|(a, b)| *a == &b[..]);
                    Ok((p.backward(&c, &targets)?.0, same))
                };
                let (lp, same_p) = eval(h)?;
                let (lm, same_m) = eval(-h)?;
                if same_p && same_m {
                    numeric = Some((lp - lm) / (2.0 * h));
                    break;
                }
            }
            match numeric {
                Some(n) => {
                    group.max_rel_error = group.max_rel_error.max(relative_error(grads.tensors[ti][ei], n));
                    group.checked += 1;
                }
                None => group.kinks += 1,
            }
        }
        groups.push(group);
    }
    Ok(GradCheckReport { groups })
}

/// Check of a purely linear submodel: one 3x3 convolution feeding a dense
/// layer under squared error. The loss is quadratic in every single
/// parameter, so central differences are exact up to rounding.
pub fn linear_check(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, cin, cout, t, f, outputs) = (2, 2, 3, 5, 4, 3);
    let x = random_tensor([n, cin, t, f], &mut rng);
    let kernel = random_tensor([cout, cin, 3, 3], &mut rng).data;
    let bias = random_tensor([1, 1, 1, cout], &mut rng).data;
    let feat = cout * t * f;
    let dense_w = random_tensor([1, 1, outputs, feat], &mut rng).data;
    let dense_b = random_tensor([1, 1, 1, outputs], &mut rng).data;
    let target = random_tensor([1, 1, n, outputs], &mut rng).data;
    let mut tensors = vec![kernel, bias, dense_w, dense_b];
    let names = ["conv.kernel", "conv.bias", "dense.weight", "dense.bias"];

    let loss_and_grad = |p: &[Vec<f64>], want_grad: bool| -> Result<(f64, Vec<Vec<f64>>)> {
        let y = layers::conv3x3_forward(&x, &p[0], &p[1])?;
        let mut loss = 0.0;
        let mut dy = Tensor::zeros(y.shape);
        let mut dw = vec![0.0; p[2].len()];
        let mut db = vec![0.0; outputs];
        for b in 0..n {
            let v = &y.data[b * feat..(b + 1) * feat];
            for o in 0..outputs {
                let w = &p[2][o * feat..(o + 1) * feat];
                let z = p[3][o] + w.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
                let r = z - target[b * outputs + o];
                loss += 0.5 * r * r;
                if want_grad {
                    db[o] += r;
                    for k in 0..feat {
                        dw[o * feat + k] += r * v[k];
                        dy.data[b * feat + k] += r * w[k];
                    }
                }
            }
        }
        if !want_grad {
            return Ok((loss, Vec::new()));
        }
        let (_, dk, dbias) = layers::conv3x3_backward(&x, &p[0], &dy, false);
        Ok((loss, vec![dk, dbias, dw, db]))
    };

    let (_, grads) = loss_and_grad(&tensors, true)?;
    let h = LINEAR_STEP;
    let mut groups = Vec::new();
    for ti in 0..tensors.len() {
        let mut group = GroupError { name: names[ti].into(), max_rel_error: 0.0, checked: 0, kinks: 0 };
        for ei in 0..tensors[ti].len() {
            let orig = tensors[ti][ei];
            tensors[ti][ei] = orig + h;
            let lp = loss_and_grad(&tensors, false)?.0;
            tensors[ti][ei] = orig - h;
            let lm = loss_and_grad(&tensors, false)?.0;
            tensors[ti][ei] = orig;
            let numeric = (lp - lm) / (2.0 * h);
            group.max_rel_error = group.max_rel_error.max(relative_error(grads[ti][ei], numeric));
            group.checked += 1;
        }
        groups.push(group);
    }
    Ok(GradCheckReport { groups })
}
