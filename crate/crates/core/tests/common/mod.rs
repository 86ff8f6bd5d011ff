//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

/// EER by brute force: a full confusion matrix at every candidate threshold,
/// then the crossing of FNR and FPR on the polyline through those points.
pub fn brute_force_eer(scores: &[f64], labels: &[bool]) -> f64 {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thresholds.dedup();
    thresholds.insert(0, f64::NEG_INFINITY);
    thresholds.push(f64::INFINITY);
    let curve: Vec<(f64, f64)> = thresholds
        .iter()
        .map(|&t| {
            let (mut tp, mut fp, mut tn, mut fn_) = (0.0, 0.0, 0.0, 0.0);
            for (&s, &l) in scores.iter().zip(labels) {
                match (s >= t, l) {
                    (true, true) => tp += 1.0,
                    (true, false) => fp += 1.0,
                    (false, false) => tn += 1.0,
                    (false, true) => fn_ += 1.0,
                }
            }
            (fp / (fp + tn), fn_ / (fn_ + tp))
        })
        .collect();
    for w in curve.windows(2) {
        let ((fpr0, fnr0), (fpr1, fnr1)) = (w[0], w[1]);
        if fnr0 == fpr0 {
            return fpr0;
        }
        if fnr0 < fpr0 && fnr1 >= fpr1 {
            // solve fnr(t) = fpr(t) on the segment
            let t = (fpr0 - fnr0) / ((fpr0 - fnr0) + (fnr1 - fpr1));
            return fpr0 + t * (fpr1 - fpr0);
        }
    }
    panic!("no crossing")
}

/// Power spectrum of one frame by the O(n^2) DFT definition.
pub fn naive_power_spectrum(frame: &[f64]) -> Vec<f64> {
    let n = frame.len();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &x) in frame.iter().enumerate() {
                let phase = -2.0 * std::f64::consts::PI * (k * t % n) as f64 / n as f64;
                re += x * phase.cos();
                im += x * phase.sin();
            }
            re * re + im * im
        })
        .collect()
}

/// Symmetric Hamming window from its textbook formula.
pub fn reference_hamming(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos()).collect()
}

/// Sample variance with the n - 1 denominator, computed two-pass.
pub fn sample_variance(v: &[f64]) -> f64 {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

/// Kolmogorov-Smirnov distance of a sample against Uniform(0, 1).
pub fn ks_uniform(sample: &[f64]) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len() as f64;
    s.iter().enumerate().map(|(i, &x)| (x - i as f64 / n).abs().max(((i + 1) as f64 / n - x).abs())).fold(0.0, f64::max)
}

/// Published per-class EERs of the rows whose printed summary is consistent
/// with the printed per-class values: (row, values, printed average,
/// printed variance x 1e3).
#[allow(clippy::approx_constant)] // 6.28 is a printed variance
pub const PUBLISHED_ROWS: [(&str, [f64; 7], f64, f64); 11] = [
    ("DAE-DNN", [0.21, 0.15, 0.21, 0.02, 0.18, 0.01, 0.26], 0.15, 9.45),
    ("CGRNN", [0.17, 0.16, 0.18, 0.03, 0.15, 0.00, 0.24], 0.13, 7.39),
    ("ATT-LOC", [0.09, 0.14, 0.17, 0.03, 0.12, 0.01, 0.24], 0.11, 6.36),
    ("mixup(alpha=0.1)", [0.10, 0.23, 0.15, 0.02, 0.15, 0.03, 0.23], 0.13, 7.30),
    ("mixup(alpha=0.5)", [0.09, 0.16, 0.11, 0.03, 0.14, 0.03, 0.24], 0.11, 5.56),
    ("mixup(alpha=1.0)", [0.09, 0.12, 0.11, 0.02, 0.12, 0.03, 0.26], 0.11, 6.25),
    ("mixup(alpha=1.5)", [0.10, 0.14, 0.11, 0.03, 0.10, 0.01, 0.20], 0.10, 4.11),
    ("mixup(alpha=2.0)", [0.10, 0.11, 0.11, 0.03, 0.11, 0.00, 0.25], 0.10, 6.28),
    ("SamplePairing", [0.10, 0.20, 0.15, 0.01, 0.16, 0.03, 0.24], 0.13, 7.26),
    ("mixup_lp(alpha=1.5)", [0.12, 0.13, 0.12, 0.02, 0.12, 0.00, 0.25], 0.11, 6.52),
    ("extrapolation(alpha=1.5)", [0.10, 0.16, 0.13, 0.03, 0.14, 0.02, 0.23], 0.12, 5.43),
];

pub mod augment_check {
    use mixtag::augment::{
        apply_policy, extrapolate_with, mixup_with, sample_beta, shuffle_partners, Batch, MixPolicy,
    };
    use mixtag::dataset::LabelVector;
    use mixtag::features::LogMel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const TOL: f64 = 1e-12;

    pub fn random_batch(rng: &mut impl Rng) -> Batch {
        let n = rng.random_range(1..=8);
        let (t, f) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let features = (0..n)
            .map(|_| LogMel::new(t, f, (0..t * f).map(|_| rng.random_range(-20.0..5.0)).collect()).unwrap())
            .collect();
        let labels = (0..n).map(|_| LabelVector(std::array::from_fn(|_| rng.random_range(0..2) as f64))).collect();
        Batch::new(features, labels).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= TOL * (1.0 + a.abs().max(b.abs()))
    }

    /// Checks every documented invariant of `policy` on `batch`, replaying the
    /// seeded rng to recover the mixing weight and partners.
    pub fn check(batch: &Batch, policy: MixPolicy, seed: u64) -> Result<(), String> {
        let run = || apply_policy(batch, policy, &mut ChaCha8Rng::seed_from_u64(seed)).map_err(|e| e.to_string());
        let out = run()?;
        if out != run()? {
            return Err("not deterministic".into());
        }
        if out.len() != batch.len() || out.features.iter().zip(&batch.features).any(|(a, b)| a.shape() != b.shape()) {
            return Err("shape changed".into());
        }
        if policy.is_identity() {
            return if &out == batch { Ok(()) } else { Err("identity policy changed the batch".into()) };
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lam = match policy.alpha() {
            Some(a) => sample_beta(a, &mut rng).map_err(|e| e.to_string())?.value,
            None => 0.5,
        };
        let partners = shuffle_partners(batch.len(), &mut rng);
        for (i, &j) in partners.iter().enumerate() {
            let (xi, xj, xn) = (&batch.features[i].data, &batch.features[j].data, &out.features[i].data);
            let (yi, yj, yn) = (&batch.labels[i].0, &batch.labels[j].0, &out.labels[i].0);
            let expect = |a: f64, b: f64| -> f64 {
                match policy {
                    MixPolicy::Mixup(_) => lam * a + (1.0 - lam) * b,
                    MixPolicy::SamplePairing => 0.5 * a + 0.5 * b,
                    MixPolicy::MixupLp(_) => {
                        let l = lam.max(1.0 - lam);
                        l * a + (1.0 - l) * b
                    }
                    MixPolicy::Extrapolation(_) => (1.0 + lam) * a - lam * b,
                    MixPolicy::None => a,
                }
            };
            for k in 0..xi.len() {
                if !close(xn[k], expect(xi[k], xj[k])) {
                    return Err(format!("row {i} entry {k}: {} vs {}", xn[k], expect(xi[k], xj[k])));
                }
                let convex = !matches!(policy, MixPolicy::Extrapolation(_));
                if convex && (xn[k] < xi[k].min(xj[k]) || xn[k] > xi[k].max(xj[k])) {
                    return Err(format!("row {i} entry {k} outside the convex hull"));
                }
            }
            if yn.iter().any(|&y| !(0.0..=1.0).contains(&y)) {
                return Err(format!("row {i}: label outside [0, 1]"));
            }
            match policy {
                MixPolicy::Mixup(_) => {
                    let want = lam * yi.iter().sum::<f64>() + (1.0 - lam) * yj.iter().sum::<f64>();
                    if !close(yn.iter().sum(), want) {
                        return Err(format!("row {i}: label mass not conserved"));
                    }
                }
                _ => {
                    if yn.iter().zip(yi).any(|(a, b)| a.to_bits() != b.to_bits()) {
                        return Err(format!("row {i}: labels changed"));
                    }
                }
            }
        }
        boundary_identities(batch, &partners)
    }

    /// Weight 1 for mixup and weight 0 for extrapolation reproduce the input;
    /// at weight 0.5 mixup is symmetric in the pair.
    fn boundary_identities(batch: &Batch, partners: &[usize]) -> Result<(), String> {
        let e = |r: mixtag::Result<Batch>| r.map_err(|e| e.to_string());
        if &e(mixup_with(batch, partners, &[1.0]))? != batch {
            return Err("mixup at lambda 1 is not the identity".into());
        }
        if &e(extrapolate_with(batch, partners, &[0.0]))? != batch {
            return Err("extrapolation at lambda 0 is not the identity".into());
        }
        let half = e(mixup_with(batch, partners, &[0.5]))?;
        for (i, &j) in partners.iter().enumerate() {
            let swapped = e(mixup_with(batch, &inverse_pair(batch.len(), i, j), &[0.5]))?;
            if half.features[i] != swapped.features[j] {
                return Err(format!("mixing ({i},{j}) and ({j},{i}) differ"));
            }
        }
        Ok(())
    }

    /// A partner table that pairs `j` with `i` (everything else self-paired).
    fn inverse_pair(n: usize, i: usize, j: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        p[j] = i;
        p
    }

    pub const POLICIES: [MixPolicy; 8] = [
        MixPolicy::None,
        MixPolicy::Mixup(0.0),
        MixPolicy::Mixup(0.2),
        MixPolicy::Mixup(1.5),
        MixPolicy::SamplePairing,
        MixPolicy::MixupLp(1.5),
        MixPolicy::Extrapolation(1.5),
        MixPolicy::Extrapolation(5.0),
    ];
}
