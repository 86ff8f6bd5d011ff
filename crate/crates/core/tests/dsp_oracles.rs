mod common;

use std::f64::consts::PI;

use mixtag::dataset::{AudioClip, CLIP_SAMPLES};
use mixtag::features::{
    compute_stats, hamming_window, log_mel, mel_energies, mel_filterbank, normalize, stft, FeatureExtractor, LogMel,
    FRAMES, LOG_FLOOR, N_MELS,
};
use mixtag::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sine(freq: f64, amp: f64) -> Vec<f64> {
    (0..CLIP_SAMPLES).map(|i| amp * (2.0 * PI * freq * i as f64 / 16_000.0).sin()).collect()
}

fn noise(seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..CLIP_SAMPLES).map(|_| rng.random_range(-0.5..0.5)).collect()
}

/// Triangular HTK filterbank written out from the textbook definition.
fn reference_filterbank(n_mels: usize) -> Vec<Vec<f64>> {
    let mel = |hz: f64| 2595.0 * (1.0 + hz / 700.0).log10();
    let inv = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let top = mel(8000.0);
    let edges: Vec<f64> = (0..n_mels + 2).map(|i| inv(top * i as f64 / (n_mels + 1) as f64)).collect();
    (0..n_mels)
        .map(|m| {
            let mut row: Vec<f64> = (0..513)
                .map(|k| {
                    let f = k as f64 * 15.625;
                    let up = (f - edges[m]) / (edges[m + 1] - edges[m]);
                    let down = (edges[m + 2] - f) / (edges[m + 2] - edges[m + 1]);
                    if f <= edges[m] || f >= edges[m + 2] {
                        0.0
                    } else {
                        up.min(down)
                    }
                })
                .collect();
            if row.iter().all(|&w| w == 0.0) {
                row[((edges[m + 1] / 15.625).round() as usize).min(512)] = 1.0;
            }
            row
        })
        .collect()
}

#[test]
fn stft_matches_naive_dft_for_1khz_tone() {
    let x = sine(1000.0, 0.5);
    let spec = stft(&x).unwrap();
    let w = common::reference_hamming(1024);
    for t in [0, 1, 61, 123] {
        let frame: Vec<f64> = x[t * 512..t * 512 + 1024].iter().zip(&w).map(|(a, b)| a * b).collect();
        let want = common::naive_power_spectrum(&frame);
        let peak = want.iter().cloned().fold(0.0, f64::max);
        for (k, (&got, &want)) in spec.frame(t).iter().zip(&want).enumerate() {
            let rel = (got - want).abs() / want.abs().max(peak * 1e-9);
            assert!(rel < 1e-6, "frame {t} bin {k}: {got} vs {want}");
        }
        // 1 kHz sits exactly on bin 64
        let argmax = spec.frame(t).iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(argmax, 64);
    }
}

#[test]
fn hamming_matches_formula_and_sum() {
    let w = hamming_window(1024).unwrap();
    let r = common::reference_hamming(1024);
    assert!(w.iter().zip(&r).all(|(a, b)| (a - b).abs() < 1e-15));
    // the cosine terms over a symmetric window sum to exactly one
    assert!((w.iter().sum::<f64>() - (0.54 * 1024.0 - 0.46)).abs() < 1e-9);
    assert_eq!(w[0], w[1023]);
    assert!(matches!(hamming_window(1), Err(Error::BadSize(_))));
}

#[test]
fn stft_shape_and_errors() {
    let spec = stft(&vec![0.0; CLIP_SAMPLES]).unwrap();
    assert_eq!((spec.frames, spec.bins), (FRAMES, 513));
    assert!(spec.power.iter().all(|&p| p == 0.0));
    assert!(matches!(stft(&vec![0.0; CLIP_SAMPLES - 1]), Err(Error::Shape(_))));
}

#[test]
fn filterbank_matches_reference() {
    let fb = mel_filterbank(N_MELS, 1024, 16_000, 0.0, 8000.0).unwrap();
    let reference = reference_filterbank(N_MELS);
    for (m, row) in reference.iter().enumerate() {
        for (k, &w) in row.iter().enumerate() {
            assert!((fb.filter(m)[k] - w).abs() < 1e-12, "filter {m} bin {k}");
        }
    }
}

#[test]
fn triangles_partition_unity_between_outer_centres() {
    let fb = mel_filterbank(40, 1024, 16_000, 0.0, 8000.0).unwrap();
    assert!(fb.repaired.is_empty());
    let first = fb.points_hz[1];
    let last = fb.points_hz[40];
    for k in 0..513 {
        let f = k as f64 * 15.625;
        if f >= first && f <= last {
            let sum: f64 = (0..40).map(|m| fb.filter(m)[k]).sum();
            assert!((sum - 1.0).abs() < 1e-12, "bin {k}: {sum}");
        }
    }
}

#[test]
fn white_noise_log_mel_matches_matrix_oracle() {
    let x = noise(3);
    let spec = stft(&x).unwrap();
    let fb = mel_filterbank(N_MELS, 1024, 16_000, 0.0, 8000.0).unwrap();
    let got = log_mel(&spec, &fb).unwrap();
    let reference = reference_filterbank(N_MELS);
    for t in 0..FRAMES {
        for (m, row) in reference.iter().enumerate() {
            let e: f64 = spec.frame(t).iter().zip(row).map(|(p, w)| p * w).sum();
            let want = e.max(LOG_FLOOR).ln();
            assert!((got.get(t, m) - want).abs() <= 1e-5 * want.abs().max(1.0), "({t},{m})");
        }
    }
}

#[test]
fn mel_energies_are_linear_in_power() {
    let spec = stft(&noise(4)).unwrap();
    let fb = mel_filterbank(N_MELS, 1024, 16_000, 0.0, 8000.0).unwrap();
    let once = mel_energies(&spec, &fb).unwrap();
    let twice = mel_energies(&spec.scaled(2.0), &fb).unwrap();
    assert!(once.iter().zip(&twice).all(|(a, b)| (2.0 * a - b).abs() <= 1e-12 * b.abs().max(1e-300)));
}

#[test]
fn silence_hits_the_log_floor() {
    let f = FeatureExtractor::default().extract(&AudioClip::silence()).unwrap();
    assert_eq!(f.shape(), (124, 128));
    assert!(f.data.iter().all(|&v| v == LOG_FLOOR.ln()));
}

#[test]
fn every_clip_gives_124_by_128_deterministically() {
    let fx = FeatureExtractor::default();
    for seed in 0..5 {
        let clip = AudioClip::from_samples(noise(seed));
        let a = fx.extract(&clip).unwrap();
        assert_eq!(a.shape(), (FRAMES, N_MELS));
        assert_eq!(a, fx.extract(&clip).unwrap());
        assert!(a.data.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn normalization_gives_zero_mean_unit_std() {
    let fx = FeatureExtractor::new(16).unwrap();
    let feats: Vec<LogMel> = (0..4).map(|s| fx.extract(&AudioClip::from_samples(noise(10 + s))).unwrap()).collect();
    let stats = compute_stats(&feats).unwrap();
    // oracle: per-bin mean and population std over all frames
    for b in 0..16 {
        let col: Vec<f64> = feats.iter().flat_map(|f| (0..f.frames).map(move |t| f.get(t, b))).collect();
        let n = col.len() as f64;
        let mean = col.iter().sum::<f64>() / n;
        let std = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((stats.mean[b] - mean).abs() < 1e-9 && (stats.std[b] - std).abs() < 1e-9);
    }
    let normed: Vec<LogMel> = feats.iter().map(|f| normalize(f, &stats).unwrap()).collect();
    let again = compute_stats(&normed).unwrap();
    assert!(again.mean.iter().all(|m| m.abs() < 1e-9));
    assert!(again.std.iter().all(|s| (s - 1.0).abs() < 1e-9));
}

#[test]
fn constant_bin_uses_std_floor() {
    let f = LogMel::new(3, 1, vec![2.0, 2.0, 2.0]).unwrap();
    let stats = compute_stats([&f]).unwrap();
    assert_eq!(stats.std[0], 0.0);
    assert!(normalize(&f, &stats).unwrap().data.iter().all(|&v| v == 0.0));
}
