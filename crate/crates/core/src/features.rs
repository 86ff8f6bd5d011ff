//! Log-mel front end: Hamming-windowed STFT power spectrogram projected onto
//! an HTK mel filterbank, then log-compressed.
//!
//! A 64000-sample clip with window 1024 and hop 512 yields 124 frames; with
//! 128 mel bands the network input is a 124x128 matrix.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::dataset::{AudioClip, CLIP_SAMPLES, SAMPLE_RATE};
use crate::error::{Error, Result};

pub const WINDOW_SIZE: usize = 1024;
pub const HOP: usize = 512;
pub const N_MELS: usize = 128;
pub const FRAMES: usize = 124;
pub const LOG_FLOOR: f64 = 1e-10;
pub const STD_FLOOR: f64 = 1e-5;

/// Symmetric Hamming window `0.54 - 0.46 cos(2 pi k / (n - 1))`.
pub fn hamming_window(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::BadSize(format!("window length must be >= 2, got {n}")));
    }
    let denom = (n - 1) as f64;
    Ok((0..n).map(|k| 0.54 - 0.46 * (2.0 * PI * k as f64 / denom).cos()).collect())
}

/// One-sided power spectrogram, frames x (window/2 + 1), row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub frames: usize,
    pub bins: usize,
    pub window_size: usize,
    pub hop: usize,
    pub power: Vec<f64>,
}

impl Spectrogram {
    pub fn frame(&self, t: usize) -> &[f64] {
        &self.power[t * self.bins..(t + 1) * self.bins]
    }

    pub fn scaled(&self, factor: f64) -> Spectrogram {
        Spectrogram { power: self.power.iter().map(|p| p * factor).collect(), ..self.clone() }
    }
}

/// Short-time Fourier transform without centre padding.
#[derive(Clone)]
pub struct Stft {
    window: Vec<f64>,
    hop: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Stft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Stft").field("window_size", &self.window.len()).field("hop", &self.hop).finish()
    }
}

impl Stft {
    pub fn new(window_size: usize, hop: usize) -> Result<Self> {
        if hop == 0 {
            return Err(Error::BadSize("hop must be positive".into()));
        }
        let window = hamming_window(window_size)?;
        let fft = FftPlanner::new().plan_fft_forward(window_size);
        Ok(Stft { window, hop, fft })
    }

    pub fn window_size(&self) -> usize {
        self.window.len()
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn bins(&self) -> usize {
        self.window.len() / 2 + 1
    }

    /// `floor((len - window) / hop) + 1`, or 0 when the signal is shorter than
    /// one window.
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.window.len() {
            0
        } else {
            (len - self.window.len()) / self.hop + 1
        }
    }

    pub fn process(&self, samples: &[f64]) -> Result<Spectrogram> {
        let n = self.window.len();
        let frames = self.frame_count(samples.len());
        if frames == 0 {
            return Err(Error::Shape(format!(
                "signal of {} samples is shorter than the {n}-sample window",
                samples.len()
            )));
        }
        let bins = self.bins();
        let mut power = Vec::with_capacity(frames * bins);
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for t in 0..frames {
            let seg = &samples[t * self.hop..t * self.hop + n];
            for ((b, &s), &w) in buf.iter_mut().zip(seg).zip(&self.window) {
                *b = Complex::new(s * w, 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            power.extend(buf[..bins].iter().map(|c| c.norm_sqr()));
        }
        Ok(Spectrogram { frames, bins, window_size: n, hop: self.hop, power })
    }
}

/// Power spectrogram of a full 4 s clip with the default window and hop.
pub fn stft(samples: &[f64]) -> Result<Spectrogram> {
    if samples.len() != CLIP_SAMPLES {
        return Err(Error::Shape(format!("expected {CLIP_SAMPLES} samples, got {}", samples.len())));
    }
    Stft::new(WINDOW_SIZE, HOP)?.process(samples)
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters with unit peak, `n_mels x (n_fft/2 + 1)` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    pub n_mels: usize,
    pub n_fft: usize,
    pub sample_rate: u32,
    pub f_lo: f64,
    pub f_hi: f64,
    pub weights: Vec<f64>,
    /// Filter edge/centre frequencies in Hz, `n_mels + 2` points.
    pub points_hz: Vec<f64>,
    /// Filters whose triangle covered no FFT bin centre and were replaced by a
    /// single unit weight at the nearest bin.
    pub repaired: Vec<usize>,
}

impl MelFilterbank {
    pub fn bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn filter(&self, m: usize) -> &[f64] {
        let b = self.bins();
        &self.weights[m * b..(m + 1) * b]
    }

    pub fn center_hz(&self, m: usize) -> f64 {
        self.points_hz[m + 1]
    }

    /// FFT bin nearest to the centre of filter `m`.
    pub fn center_bin(&self, m: usize) -> usize {
        let bin_hz = self.sample_rate as f64 / self.n_fft as f64;
        ((self.center_hz(m) / bin_hz).round() as usize).min(self.bins() - 1)
    }
}

pub fn mel_filterbank(n_mels: usize, n_fft: usize, sample_rate: u32, f_lo: f64, f_hi: f64) -> Result<MelFilterbank> {
    if n_mels == 0 || n_fft < 2 {
        return Err(Error::BadSize(format!("n_mels={n_mels}, n_fft={n_fft}")));
    }
    let nyquist = sample_rate as f64 / 2.0;
    if !(f_lo >= 0.0 && f_lo < f_hi && f_hi <= nyquist) {
        return Err(Error::BadRange(format!("need 0 <= f_lo < f_hi <= {nyquist}, got {f_lo}..{f_hi}")));
    }

    let (mel_lo, mel_hi) = (hz_to_mel(f_lo), hz_to_mel(f_hi));
    let step = (mel_hi - mel_lo) / (n_mels + 1) as f64;
    let points_hz: Vec<f64> = (0..n_mels + 2).map(|i| mel_to_hz(mel_lo + step * i as f64)).collect();

    let bins = n_fft / 2 + 1;
    let bin_hz = sample_rate as f64 / n_fft as f64;
    let mut weights = vec![0.0; n_mels * bins];
    let mut repaired = Vec::new();
    for m in 0..n_mels {
        let (lo, c, hi) = (points_hz[m], points_hz[m + 1], points_hz[m + 2]);
        let row = &mut weights[m * bins..(m + 1) * bins];
        for (k, w) in row.iter_mut().enumerate() {
            let f = k as f64 * bin_hz;
            *w = if f > lo && f <= c {
                (f - lo) / (c - lo)
            } else if f > c && f < hi {
                (hi - f) / (hi - c)
            } else {
                0.0
            };
        }
        if row.iter().all(|&w| w == 0.0) {
            let k = ((c / bin_hz).round() as usize).min(bins - 1);
            row[k] = 1.0;
            repaired.push(m);
        }
    }
    Ok(MelFilterbank { n_mels, n_fft, sample_rate, f_lo, f_hi, weights, points_hz, repaired })
}

/// Log-mel matrix, frames x bins, row-major (time-major).
#[derive(Debug, Clone, PartialEq)]
pub struct LogMel {
    pub frames: usize,
    pub bins: usize,
    pub data: Vec<f64>,
}

impl LogMel {
    pub fn new(frames: usize, bins: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != frames * bins {
            return Err(Error::Shape(format!("{} values for a {frames}x{bins} matrix", data.len())));
        }
        Ok(LogMel { frames, bins, data })
    }

    pub fn zeros(frames: usize, bins: usize) -> Self {
        LogMel { frames, bins, data: vec![0.0; frames * bins] }
    }

    pub fn get(&self, t: usize, b: usize) -> f64 {
        self.data[t * self.bins + b]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.frames, self.bins)
    }
}

/// Mel energies before the log, `power . weights^T`.
pub fn mel_energies(spec: &Spectrogram, fb: &MelFilterbank) -> Result<Vec<f64>> {
    if spec.bins != fb.bins() {
        return Err(Error::Shape(format!("spectrogram has {} bins, filterbank expects {}", spec.bins, fb.bins())));
    }
    let mut out = Vec::with_capacity(spec.frames * fb.n_mels);
    for t in 0..spec.frames {
        let frame = spec.frame(t);
        for m in 0..fb.n_mels {
            out.push(frame.iter().zip(fb.filter(m)).map(|(p, w)| p * w).sum());
        }
    }
    Ok(out)
}

pub fn log_mel(spec: &Spectrogram, fb: &MelFilterbank) -> Result<LogMel> {
    let data = mel_energies(spec, fb)?.into_iter().map(|e| e.max(LOG_FLOOR).ln()).collect();
    LogMel::new(spec.frames, fb.n_mels, data)
}

/// Clip to log-mel pipeline with a fixed STFT and filterbank.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    stft: Stft,
    filterbank: MelFilterbank,
}

impl FeatureExtractor {
    /// Window 1024, hop 512, HTK mel over 0..8000 Hz with `n_mels` bands.
    pub fn new(n_mels: usize) -> Result<Self> {
        Ok(FeatureExtractor {
            stft: Stft::new(WINDOW_SIZE, HOP)?,
            filterbank: mel_filterbank(n_mels, WINDOW_SIZE, SAMPLE_RATE, 0.0, SAMPLE_RATE as f64 / 2.0)?,
        })
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    pub fn extract(&self, clip: &AudioClip) -> Result<LogMel> {
        log_mel(&self.stft.process(clip.samples())?, &self.filterbank)
    }
}

impl Default for FeatureExtractor {
    fn default() -> Self {
        FeatureExtractor::new(N_MELS).expect("default front end is valid")
    }
}

/// Per-mel-bin mean and standard deviation over every frame of a feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub fn compute_stats<'a>(features: impl IntoIterator<Item = &'a LogMel>) -> Result<FeatureStats> {
    let mut iter = features.into_iter().peekable();
    let bins = iter.peek().ok_or(Error::EmptyInput("feature statistics need at least one feature"))?.bins;
    let mut sum = vec![0.0; bins];
    let mut count = 0usize;
    let mut seen = Vec::new();
    for f in iter {
        if f.bins != bins {
            return Err(Error::Shape(format!("mixed bin counts {} and {}", bins, f.bins)));
        }
        for row in f.data.chunks_exact(bins) {
            for (s, v) in sum.iter_mut().zip(row) {
                *s += v;
            }
        }
        count += f.frames;
        seen.push(f);
    }
    if count == 0 {
        return Err(Error::EmptyInput("features have no frames"));
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
    let mut sq = vec![0.0; bins];
    for f in seen {
        for row in f.data.chunks_exact(bins) {
            for ((s, v), m) in sq.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
    }
    let std = sq.iter().map(|s| (s / count as f64).sqrt()).collect();
    Ok(FeatureStats { mean, std })
}

/// `(x - mean) / max(std, 1e-5)` per mel bin.
pub fn normalize(f: &LogMel, stats: &FeatureStats) -> Result<LogMel> {
    if f.bins != stats.mean.len() {
        return Err(Error::Shape(format!("feature has {} bins, stats have {}", f.bins, stats.mean.len())));
    }
    let mut data = f.data.clone();
    for row in data.chunks_exact_mut(f.bins) {
        for ((v, m), s) in row.iter_mut().zip(&stats.mean).zip(&stats.std) {
            *v = (*v - m) / s.max(STD_FLOOR);
        }
    }
    LogMel::new(f.frames, f.bins, data)
}
