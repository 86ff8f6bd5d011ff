//! Sample-mixed augmentation on minibatches of log-mel features.
//!
//! Every operator pairs each example `i` with a partner `j = perm(i)` taken
//! from a uniform random permutation of the same batch (fixed points
//! allowed) and combines features with a weight `lambda`:
//!
//! | policy          | features                          | labels                      |
//! |-----------------|-----------------------------------|-----------------------------|
//! | mixup           | `l*x_i + (1-l)*x_j`               | `l*y_i + (1-l)*y_j`         |
//! | SamplePairing   | `0.5*x_i + 0.5*x_j`               | `y_i`                       |
//! | mixup_lp        | `l*x_i + (1-l)*x_j`, `l >= 0.5`   | `y_i`                       |
//! | extrapolation   | `(1+l)*x_i - l*x_j`               | `y_i`                       |
//!
//! `lambda ~ Beta(alpha, alpha)`, one draw per batch unless
//! [`LambdaMode::PerExample`] is requested. `alpha == 0` is the identity.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::dataset::{LabelVector, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::features::LogMel;

/// Aligned features and (possibly soft) labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub features: Vec<LogMel>,
    pub labels: Vec<LabelVector>,
}

impl Batch {
    pub fn new(features: Vec<LogMel>, labels: Vec<LabelVector>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::Shape(format!("{} features but {} label vectors", features.len(), labels.len())));
        }
        if let Some(first) = features.first() {
            if let Some(bad) = features.iter().find(|f| f.shape() != first.shape()) {
                return Err(Error::Shape(format!("mixed feature shapes {:?} and {:?}", first.shape(), bad.shape())));
            }
        }
        Ok(Batch { features, labels })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

/// A draw of the mixing weight together with the shape it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixLambda {
    pub value: f64,
    pub alpha: f64,
}

/// ln of a Gamma(shape, 1) variate by Marsaglia and Tsang's squeeze method.
/// Shapes below 1 use the `G(a) = G(a + 1) * U^(1/a)` boost, kept in log
/// space so tiny shapes do not underflow.
pub fn sample_ln_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    debug_assert!(shape > 0.0);
    if shape < 1.0 {
        let u: f64 = 1.0 - rng.random::<f64>();
        return sample_ln_gamma(shape + 1.0, rng) + u.ln() / shape;
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x: f64 = rng.sample(StandardNormal);
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u: f64 = 1.0 - rng.random::<f64>();
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d.ln() + v.ln();
        }
    }
}

/// `lambda ~ Beta(alpha, alpha)` as `g1 / (g1 + g2)` with `g ~ Gamma(alpha, 1)`.
pub fn sample_beta<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> Result<MixLambda> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::BadAlpha(alpha));
    }
    let g1 = sample_ln_gamma(alpha, rng);
    let g2 = sample_ln_gamma(alpha, rng);
    // g1 / (g1 + g2) = 1 / (1 + exp(ln g2 - ln g1))
    let value = 1.0 / (1.0 + (g2 - g1).exp());
    Ok(MixLambda { value, alpha })
}

/// Uniform random permutation used to choose mixing partners.
pub fn shuffle_partners<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    perm
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LambdaMode {
    #[default]
    PerBatch,
    PerExample,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MixPolicy {
    None,
    Mixup(f64),
    SamplePairing,
    MixupLp(f64),
    Extrapolation(f64),
}

impl MixPolicy {
    /// Builds a policy from its command-line name. `alpha` is ignored by
    /// `none` and `samplepairing`.
    pub fn from_name(name: &str, alpha: f64) -> Result<Self> {
        let policy = match name.to_ascii_lowercase().as_str() {
            "none" => MixPolicy::None,
            "mixup" => MixPolicy::Mixup(alpha),
            "samplepairing" | "sample_pairing" => MixPolicy::SamplePairing,
            "mixup_lp" | "mixuplp" => MixPolicy::MixupLp(alpha),
            "extrapolation" => MixPolicy::Extrapolation(alpha),
            other => return Err(Error::Config(format!("unknown policy `{other}`"))),
        };
        policy.validate()?;
        Ok(policy)
    }

    pub fn name(&self) -> &'static str {
        match self {
            MixPolicy::None => "none",
            MixPolicy::Mixup(_) => "mixup",
            MixPolicy::SamplePairing => "samplepairing",
            MixPolicy::MixupLp(_) => "mixup_lp",
            MixPolicy::Extrapolation(_) => "extrapolation",
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match *self {
            MixPolicy::Mixup(a) | MixPolicy::MixupLp(a) | MixPolicy::Extrapolation(a) => Some(a),
            MixPolicy::None | MixPolicy::SamplePairing => None,
        }
    }

    /// Same policy kind with a different alpha.
    pub fn with_alpha(&self, alpha: f64) -> Self {
        match self {
            MixPolicy::Mixup(_) => MixPolicy::Mixup(alpha),
            MixPolicy::MixupLp(_) => MixPolicy::MixupLp(alpha),
            MixPolicy::Extrapolation(_) => MixPolicy::Extrapolation(alpha),
            other => *other,
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, MixPolicy::None) || self.alpha() == Some(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        match self.alpha() {
            Some(a) if !(a >= 0.0 && a.is_finite()) => Err(Error::BadAlpha(a)),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for MixPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.alpha() {
            Some(a) => write!(f, "{}(alpha={a})", self.name()),
            None => f.write_str(self.name()),
        }
    }
}

impl FromStr for MixPolicy {
    type Err = Error;

    /// Accepts `name` or `name:alpha`, e.g. `mixup:1.5`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, alpha) = match s.split_once(':') {
            Some((n, a)) => (n, a.trim().parse().map_err(|_| Error::Config(format!("bad alpha in `{s}`")))?),
            None => (s, 1.0),
        };
        MixPolicy::from_name(name.trim(), alpha)
    }
}

fn check_partners(batch: &Batch, partners: &[usize]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if partners.len() != batch.len() || partners.iter().any(|&j| j >= batch.len()) {
        return Err(Error::Shape(format!("partner table of length {} for batch of {}", partners.len(), batch.len())));
    }
    Ok(())
}

/// `lam*a + (1-lam)*b` for `lam` in [0, 1]. The exact value lies between `a`
/// and `b`; the clamp only removes rounding overshoot.
fn lerp(lam: f64, a: f64, b: f64) -> f64 {
    let v = lam * a + (1.0 - lam) * b;
    v.clamp(a.min(b), a.max(b))
}

fn combine_features(a: &LogMel, b: &LogMel, f: impl Fn(f64, f64) -> f64) -> LogMel {
    LogMel { frames: a.frames, bins: a.bins, data: a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect() }
}

/// Mixup with explicit per-example weights and partners.
pub fn mixup_with(batch: &Batch, partners: &[usize], lambdas: &[f64]) -> Result<Batch> {
    check_partners(batch, partners)?;
    let mut out = Batch { features: Vec::with_capacity(batch.len()), labels: Vec::with_capacity(batch.len()) };
    for (i, (&j, &lam)) in partners.iter().zip(lambdas.iter().cycle()).enumerate() {
        out.features.push(combine_features(&batch.features[i], &batch.features[j], |x, y| lerp(lam, x, y)));
        let (yi, yj) = (&batch.labels[i].0, &batch.labels[j].0);
        let mut y = [0.0; NUM_CLASSES];
        for c in 0..NUM_CLASSES {
            y[c] = lerp(lam, yi[c], yj[c]);
        }
        out.labels.push(LabelVector(y));
    }
    Ok(out)
}

/// Feature interpolation that keeps the first sample's labels.
pub fn interpolate_keep_labels(batch: &Batch, partners: &[usize], lambdas: &[f64]) -> Result<Batch> {
    check_partners(batch, partners)?;
    let features = partners
        .iter()
        .zip(lambdas.iter().cycle())
        .enumerate()
        .map(|(i, (&j, &lam))| combine_features(&batch.features[i], &batch.features[j], |x, y| lerp(lam, x, y)))
        .collect();
    Ok(Batch { features, labels: batch.labels.clone() })
}

/// `(1 + lam) x_i - lam x_j`, labels kept. Not clipped.
pub fn extrapolate_with(batch: &Batch, partners: &[usize], lambdas: &[f64]) -> Result<Batch> {
    check_partners(batch, partners)?;
    let features = partners
        .iter()
        .zip(lambdas.iter().cycle())
        .enumerate()
        .map(|(i, (&j, &lam))| {
            combine_features(&batch.features[i], &batch.features[j], |x, y| (1.0 + lam) * x - lam * y)
        })
        .collect();
    Ok(Batch { features, labels: batch.labels.clone() })
}

/// SamplePairing with explicit partners.
pub fn sample_pairing_with(batch: &Batch, partners: &[usize]) -> Result<Batch> {
    check_partners(batch, partners)?;
    let features = partners
        .iter()
        .enumerate()
        .map(|(i, &j)| combine_features(&batch.features[i], &batch.features[j], |x, y| 0.5 * x + 0.5 * y))
        .collect();
    Ok(Batch { features, labels: batch.labels.clone() })
}

fn draw_lambdas<R: Rng + ?Sized>(alpha: f64, n: usize, mode: LambdaMode, rng: &mut R) -> Result<Vec<f64>> {
    let count = match mode {
        LambdaMode::PerBatch => 1,
        LambdaMode::PerExample => n,
    };
    (0..count).map(|_| sample_beta(alpha, rng).map(|l| l.value)).collect()
}

pub fn mixup_batch<R: Rng + ?Sized>(batch: &Batch, alpha: f64, rng: &mut R) -> Result<Batch> {
    mixup_batch_with_mode(batch, alpha, LambdaMode::PerBatch, rng)
}

pub fn mixup_batch_with_mode<R: Rng + ?Sized>(
    batch: &Batch,
    alpha: f64,
    mode: LambdaMode,
    rng: &mut R,
) -> Result<Batch> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if alpha == 0.0 {
        return Ok(batch.clone());
    }
    let lambdas = draw_lambdas(alpha, batch.len(), mode, rng)?;
    let partners = shuffle_partners(batch.len(), rng);
    mixup_with(batch, &partners, &lambdas)
}

pub fn sample_pairing_batch<R: Rng + ?Sized>(batch: &Batch, rng: &mut R) -> Result<Batch> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let partners = shuffle_partners(batch.len(), rng);
    sample_pairing_with(batch, &partners)
}

/// Mixup-style interpolation, labels kept. `lambda` is folded into [0.5, 1] so
/// the sample that donates the label dominates the mixture.
pub fn mixup_lp_batch<R: Rng + ?Sized>(batch: &Batch, alpha: f64, rng: &mut R) -> Result<Batch> {
    mixup_lp_batch_with_mode(batch, alpha, LambdaMode::PerBatch, rng)
}

pub fn mixup_lp_batch_with_mode<R: Rng + ?Sized>(
    batch: &Batch,
    alpha: f64,
    mode: LambdaMode,
    rng: &mut R,
) -> Result<Batch> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let lambdas: Vec<f64> = draw_lambdas(alpha, batch.len(), mode, rng)?.into_iter().map(fold_lambda).collect();
    let partners = shuffle_partners(batch.len(), rng);
    interpolate_keep_labels(batch, &partners, &lambdas)
}

/// `max(lambda, 1 - lambda)`.
pub fn fold_lambda(lambda: f64) -> f64 {
    lambda.max(1.0 - lambda)
}

pub fn extrapolate_batch<R: Rng + ?Sized>(batch: &Batch, alpha: f64, rng: &mut R) -> Result<Batch> {
    extrapolate_batch_with_mode(batch, alpha, LambdaMode::PerBatch, rng)
}

pub fn extrapolate_batch_with_mode<R: Rng + ?Sized>(
    batch: &Batch,
    alpha: f64,
    mode: LambdaMode,
    rng: &mut R,
) -> Result<Batch> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let lambdas = draw_lambdas(alpha, batch.len(), mode, rng)?;
    let partners = shuffle_partners(batch.len(), rng);
    extrapolate_with(batch, &partners, &lambdas)
}

/// Dispatches to the operator for `policy`. `None` and any zero alpha return
/// the batch unchanged without touching `rng`.
pub fn apply_policy<R: Rng + ?Sized>(batch: &Batch, policy: MixPolicy, rng: &mut R) -> Result<Batch> {
    apply_policy_with_mode(batch, policy, LambdaMode::PerBatch, rng)
}

pub fn apply_policy_with_mode<R: Rng + ?Sized>(
    batch: &Batch,
    policy: MixPolicy,
    mode: LambdaMode,
    rng: &mut R,
) -> Result<Batch> {
    policy.validate()?;
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if policy.is_identity() {
        return Ok(batch.clone());
    }
    match policy {
        MixPolicy::None => unreachable!(),
        MixPolicy::Mixup(a) => mixup_batch_with_mode(batch, a, mode, rng),
        MixPolicy::SamplePairing => sample_pairing_batch(batch, rng),
        MixPolicy::MixupLp(a) => mixup_lp_batch_with_mode(batch, a, mode, rng),
        MixPolicy::Extrapolation(a) => extrapolate_batch_with_mode(batch, a, mode, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn row(v: &[f64]) -> LogMel {
        LogMel::new(1, v.len(), v.to_vec()).unwrap()
    }

    fn hot(c: usize) -> LabelVector {
        let mut y = [0.0; NUM_CLASSES];
        y[c] = 1.0;
        LabelVector(y)
    }

    fn pair(a: &[f64], b: &[f64]) -> Batch {
        Batch::new(vec![row(a), row(b)], vec![hot(0), hot(1)]).unwrap()
    }

    #[test]
    fn mixup_arithmetic() {
        let out = mixup_with(&pair(&[2.0, 0.0], &[0.0, 2.0]), &[1, 0], &[0.25]).unwrap();
        assert_eq!(out.features[0].data, vec![0.5, 1.5]);
        assert_eq!(out.labels[0].0, [0.25, 0.75, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn mixup_lambda_one_is_identity() {
        let b = pair(&[2.0, -3.0], &[0.5, 7.0]);
        assert_eq!(mixup_with(&b, &[1, 0], &[1.0]).unwrap(), b);
    }

    #[test]
    fn pairing_arithmetic() {
        let out = sample_pairing_with(&pair(&[2.0, 0.0], &[0.0, 2.0]), &[1, 0]).unwrap();
        assert_eq!(out.features[0].data, vec![1.0, 1.0]);
        assert_eq!(out.labels[0], hot(0));
        let b = pair(&[3.0, 1.0], &[0.0, 2.0]);
        assert_eq!(sample_pairing_with(&b, &[0, 1]).unwrap(), b);
    }

    #[test]
    fn mixup_lp_folds_lambda() {
        assert_eq!(fold_lambda(0.3), 0.7);
        assert_eq!(fold_lambda(1.0), 1.0);
        let b = pair(&[1.0, 0.0], &[0.0, 1.0]);
        let out = interpolate_keep_labels(&b, &[1, 0], &[fold_lambda(0.3)]).unwrap();
        let d = &out.features[0].data;
        assert!((d[0] - 0.7).abs() < 1e-15 && (d[1] - 0.3).abs() < 1e-15, "{d:?}");
        assert_eq!(out.labels, b.labels);
    }

    #[test]
    fn extrapolation_arithmetic() {
        let b = pair(&[1.0, 1.0], &[1.0, -1.0]);
        let out = extrapolate_with(&b, &[1, 0], &[0.5]).unwrap();
        assert_eq!(out.features[0].data, vec![1.0, 2.0]);
        assert_eq!(out.labels, b.labels);
        assert_eq!(extrapolate_with(&b, &[1, 0], &[0.0]).unwrap().features, b.features);
    }

    #[test]
    fn empty_batch_errors() {
        let empty = Batch::new(vec![], vec![]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(mixup_batch(&empty, 1.0, &mut rng), Err(Error::EmptyBatch)));
        assert!(matches!(sample_pairing_batch(&empty, &mut rng), Err(Error::EmptyBatch)));
        assert!(matches!(mixup_lp_batch(&empty, 1.0, &mut rng), Err(Error::EmptyBatch)));
        assert!(matches!(extrapolate_batch(&empty, 1.0, &mut rng), Err(Error::EmptyBatch)));
    }

    #[test]
    fn alpha_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(sample_beta(0.0, &mut rng), Err(Error::BadAlpha(_))));
        assert!(matches!(sample_beta(-1.0, &mut rng), Err(Error::BadAlpha(_))));
        let b = pair(&[1.0], &[2.0]);
        assert!(matches!(mixup_lp_batch(&b, 0.0, &mut rng), Err(Error::BadAlpha(_))));
        assert!(matches!(apply_policy(&b, MixPolicy::Mixup(-0.5), &mut rng), Err(Error::BadAlpha(_))));
        assert_eq!(apply_policy(&b, MixPolicy::MixupLp(0.0), &mut rng).unwrap(), b);
    }

    #[test]
    fn identity_policies_leave_rng_untouched() {
        let b = pair(&[1.0, 2.0], &[3.0, 4.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let before = rng.clone();
        assert_eq!(apply_policy(&b, MixPolicy::None, &mut rng).unwrap(), b);
        assert_eq!(apply_policy(&b, MixPolicy::Mixup(0.0), &mut rng).unwrap(), b);
        assert_eq!(rng, before);
    }

    #[test]
    fn dispatch_matches_direct_call() {
        let b = pair(&[1.0, 2.0], &[3.0, 4.0]);
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = r1.clone();
        assert_eq!(
            apply_policy(&b, MixPolicy::SamplePairing, &mut r1).unwrap(),
            sample_pairing_batch(&b, &mut r2).unwrap()
        );
    }

    #[test]
    fn tiny_alpha_beta_is_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let l = sample_beta(0.01, &mut rng).unwrap().value;
            assert!((0.0..=1.0).contains(&l));
        }
    }

    #[test]
    fn policy_names() {
        assert_eq!("mixup:1.5".parse::<MixPolicy>().unwrap(), MixPolicy::Mixup(1.5));
        assert_eq!("samplepairing".parse::<MixPolicy>().unwrap(), MixPolicy::SamplePairing);
        assert_eq!(MixPolicy::from_name("extrapolation", 2.0).unwrap(), MixPolicy::Extrapolation(2.0));
        assert!("cutout".parse::<MixPolicy>().is_err());
        assert_eq!(MixPolicy::MixupLp(1.5).to_string(), "mixup_lp(alpha=1.5)");
    }
}
