//! Audio ingestion, multi-hot label encoding, manifests, fold splits and a
//! synthetic stand-in dataset.
//!
//! Clips are fixed at 4 s of 16 kHz mono audio. Nothing is resampled: a file
//! with any other rate, channel count or encoding is rejected.

use std::collections::{BTreeMap, HashSet};
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::seed;

pub const SAMPLE_RATE: u32 = 16_000;
pub const CLIP_SAMPLES: usize = 64_000;
pub const NUM_CLASSES: usize = 7;
/// Class tags in label-vector order: child speech, adult male, adult female,
/// video game/TV, percussive, broadband noise, other.
pub const CLASS_TAGS: [char; NUM_CLASSES] = ['c', 'm', 'f', 'v', 'p', 'b', 'o'];

/// A 4 s mono clip with amplitudes in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
}

impl AudioClip {
    /// Zero-pads or truncates `samples` to exactly [`CLIP_SAMPLES`].
    pub fn from_samples(mut samples: Vec<f64>) -> Self {
        samples.resize(CLIP_SAMPLES, 0.0);
        for s in &mut samples {
            *s = s.clamp(-1.0, 1.0);
        }
        AudioClip { samples }
    }

    pub fn silence() -> Self {
        AudioClip { samples: vec![0.0; CLIP_SAMPLES] }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        SAMPLE_RATE
    }
}

/// Per-class targets in [`CLASS_TAGS`] order. Hard labels are 0/1; soft values
/// only appear after mixup.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LabelVector(pub [f64; NUM_CLASSES]);

impl LabelVector {
    pub fn values(&self) -> &[f64; NUM_CLASSES] {
        &self.0
    }

    pub fn is_hard(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Tag string of the classes whose value is at least 0.5.
    pub fn to_tags(&self) -> String {
        CLASS_TAGS.iter().zip(self.0.iter()).filter(|(_, &v)| v >= 0.5).map(|(c, _)| *c).collect()
    }
}

pub fn class_index(tag: char) -> Option<usize> {
    CLASS_TAGS.iter().position(|&c| c == tag)
}

/// Multi-hot encoding of a tag string such as `"cmf"`. Repeated tags are
/// harmless.
pub fn encode_labels(tags: &str) -> Result<LabelVector> {
    encode_labels_at(tags, 0)
}

fn encode_labels_at(tags: &str, row: usize) -> Result<LabelVector> {
    let mut out = [0.0; NUM_CLASSES];
    for ch in tags.chars() {
        let idx = class_index(ch).ok_or(Error::BadLabel { row, ch })?;
        out[idx] = 1.0;
    }
    Ok(LabelVector(out))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub chunk_id: String,
    pub path: String,
    pub labels: LabelVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub class_names: [String; NUM_CLASSES],
}

impl Default for DatasetManifest {
    fn default() -> Self {
        DatasetManifest { entries: Vec::new(), class_names: default_class_names() }
    }
}

fn default_class_names() -> [String; NUM_CLASSES] {
    CLASS_TAGS.map(|c| c.to_string())
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.chunk_id.as_str())
    }
}

/// Parses manifest CSV text with header `chunk_id,path,labels`.
///
/// Row numbers in errors are 1-based data rows; line numbers count the header.
pub fn parse_manifest(csv_text: &str) -> Result<DatasetManifest> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(csv_text.as_bytes());

    let header = reader.headers().map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?.clone();
    if header.iter().collect::<Vec<_>>() != ["chunk_id", "path", "labels"] {
        return Err(Error::Parse {
            line: 1,
            msg: format!(
                "expected header `chunk_id,path,labels`, got `{}`",
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }

    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let line = row + 1;
        let record = record.map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        if record.len() != 3 {
            return Err(Error::Parse { line, msg: format!("expected 3 fields, got {}", record.len()) });
        }
        let chunk_id = record[0].to_string();
        if chunk_id.is_empty() {
            return Err(Error::Parse { line, msg: "empty chunk_id".into() });
        }
        if !seen.insert(chunk_id.clone()) {
            return Err(Error::DuplicateId(chunk_id));
        }
        let labels = encode_labels_at(&record[2], row)?;
        entries.push(ManifestEntry { chunk_id, path: record[1].to_string(), labels });
    }
    Ok(DatasetManifest { entries, class_names: default_class_names() })
}

/// Inverse of [`parse_manifest`] for hard-labelled manifests.
pub fn serialize_manifest(manifest: &DatasetManifest) -> String {
    let mut out = String::from("chunk_id,path,labels\n");
    for e in &manifest.entries {
        out.push_str(&format!("{},{},{}\n", e.chunk_id, e.path, e.labels.to_tags()));
    }
    out
}

/// Reads a manifest file. Relative audio paths are resolved against the
/// manifest's directory and must exist.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut manifest = parse_manifest(&text)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    for e in &mut manifest.entries {
        let p = Path::new(&e.path);
        let resolved = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        if !resolved.exists() {
            return Err(Error::io(&resolved, std::io::Error::new(std::io::ErrorKind::NotFound, "audio file missing")));
        }
        e.path = resolved.to_string_lossy().into_owned();
    }
    Ok(manifest)
}

/// Reads a 16-bit PCM mono 16 kHz WAV file, padding or truncating to 4 s.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    let mismatch = |msg: String| Error::FormatMismatch { path: path.to_path_buf(), msg };
    if spec.channels != 1 {
        return Err(mismatch(format!("expected mono, got {} channels", spec.channels)));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(mismatch(format!("expected {} Hz, got {} Hz", SAMPLE_RATE, spec.sample_rate)));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(mismatch(format!(
            "expected 16-bit PCM, got {:?} {}-bit",
            spec.sample_format, spec.bits_per_sample
        )));
    }

    let mut samples = Vec::with_capacity(CLIP_SAMPLES);
    for s in reader.into_samples::<i16>().take(CLIP_SAMPLES) {
        let s = s.map_err(|e| wav_error(path, e))?;
        samples.push(s as f64 / 32768.0);
    }
    Ok(AudioClip::from_samples(samples))
}

pub fn write_wav(path: impl AsRef<Path>, clip: &AudioClip) -> Result<()> {
    write_pcm16(path.as_ref(), clip.samples(), 1, SAMPLE_RATE)
}

pub(crate) fn write_pcm16(path: &Path, samples: &[f64], channels: u16, sample_rate: u32) -> Result<()> {
    let spec = hound::WavSpec { channels, sample_rate, bits_per_sample: 16, sample_format: hound::SampleFormat::Int };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| wav_error(path, e))?;
    for &s in samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(v).map_err(|e| wav_error(path, e))?;
    }
    writer.finalize().map_err(|e| wav_error(path, e))
}

fn wav_error(path: &Path, err: hound::Error) -> Error {
    match err {
        hound::Error::IoError(e) => Error::io(path, e),
        other => Error::FormatMismatch { path: path.to_path_buf(), msg: other.to_string() },
    }
}

/// Fold assignment for every chunk id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub fold_count: usize,
    pub assignments: BTreeMap<String, usize>,
}

impl FoldSplit {
    pub fn fold_of(&self, chunk_id: &str) -> Option<usize> {
        self.assignments.get(chunk_id).copied()
    }

    /// Chunk ids per fold, sorted.
    pub fn folds(&self) -> Vec<Vec<String>> {
        let mut out = vec![Vec::new(); self.fold_count];
        for (id, &f) in &self.assignments {
            out[f].push(id.clone());
        }
        out
    }

    /// Checks that every manifest entry has exactly one fold and nothing else
    /// is assigned.
    pub fn validate(&self, manifest: &DatasetManifest) -> Result<()> {
        for id in manifest.ids() {
            if !self.assignments.contains_key(id) {
                return Err(Error::UnknownId(id.to_string()));
            }
        }
        if self.assignments.len() != manifest.len() {
            let known: HashSet<&str> = manifest.ids().collect();
            let extra = self.assignments.keys().find(|k| !known.contains(k.as_str())).cloned().unwrap_or_default();
            return Err(Error::UnknownId(extra));
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("chunk_id,fold\n");
        for (id, f) in &self.assignments {
            out.push_str(&format!("{id},{f}\n"));
        }
        out
    }
}

/// Shuffled round-robin assignment of manifest entries to `k` folds.
pub fn make_folds(manifest: &DatasetManifest, k: usize, seed: u64) -> Result<FoldSplit> {
    let ids: Vec<&str> = manifest.ids().collect();
    make_folds_for_ids(&ids, k, seed)
}

/// [`make_folds`] over a bare id list, in the given order.
pub fn make_folds_for_ids(ids: &[&str], k: usize, seed: u64) -> Result<FoldSplit> {
    if k < 2 {
        return Err(Error::BadSize(format!("fold count must be >= 2, got {k}")));
    }
    if ids.len() < k {
        return Err(Error::TooFewItems { items: ids.len(), folds: k });
    }
    let mut ids = ids.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, seed::Stream::Folds, 0));
    ids.shuffle(&mut rng);
    let assignments = ids.into_iter().enumerate().map(|(i, id)| (id.to_string(), i % k)).collect();
    Ok(FoldSplit { fold_count: k, assignments })
}

/// Loads an external `chunk_id,fold` table verbatim. Fold indices must be
/// dense from 0.
pub fn parse_fold_csv(csv_text: &str) -> Result<FoldSplit> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(csv_text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?.clone();
    if header.iter().collect::<Vec<_>>() != ["chunk_id", "fold"] {
        return Err(Error::Parse { line: 1, msg: "expected header `chunk_id,fold`".into() });
    }
    let mut assignments = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        let fold: usize =
            record[1].parse().map_err(|_| Error::Parse { line, msg: format!("bad fold index `{}`", &record[1]) })?;
        if assignments.insert(record[0].to_string(), fold).is_some() {
            return Err(Error::DuplicateId(record[0].to_string()));
        }
    }
    let fold_count = assignments.values().max().map_or(0, |m| m + 1);
    let used: HashSet<usize> = assignments.values().copied().collect();
    if fold_count < 2 || used.len() != fold_count {
        return Err(Error::Parse {
            line: 0,
            msg: format!("fold indices must cover 0..k with k >= 2, got {fold_count}"),
        });
    }
    Ok(FoldSplit { fold_count, assignments })
}

/// Sound event generators for the synthetic dataset. Frequencies in Hz.
#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    /// Sinusoid at a frequency drawn per event from `[lo, hi]`.
    Tone { lo: f64, hi: f64 },
    /// Band-limited noise built from random-phase partials in `[lo, hi]`.
    Noise { lo: f64, hi: f64 },
    /// Linear sweep from `from` to `to`.
    Chirp { from: f64, to: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub clips: usize,
    /// One generator per class, at most [`NUM_CLASSES`].
    pub events: Vec<EventKind>,
    /// Maximum number of distinct events in one clip (1..=3).
    pub max_events: usize,
    pub event_amplitude: f64,
    pub background_amplitude: f64,
}

impl SynthSpec {
    /// `clips` clips over the first `classes` default generators.
    pub fn new(clips: usize, classes: usize) -> Self {
        let mut events = default_events();
        events.truncate(classes.min(NUM_CLASSES));
        SynthSpec { clips, events, max_events: 3, event_amplitude: 0.25, background_amplitude: 0.01 }
    }

    pub fn classes(&self) -> usize {
        self.events.len()
    }

    fn validate(&self) -> Result<()> {
        if self.events.is_empty() || self.events.len() > NUM_CLASSES {
            return Err(Error::BadSize(format!("class count must be in 1..=7, got {}", self.events.len())));
        }
        if !(1..=3).contains(&self.max_events) {
            return Err(Error::BadSize(format!("max_events must be in 1..=3, got {}", self.max_events)));
        }
        Ok(())
    }
}

/// Frequency-separated generators. The first four sit under the four filters
/// of a 4-band mel front end (centres near 460, 1220, 2470 and 4550 Hz).
pub fn default_events() -> Vec<EventKind> {
    vec![
        EventKind::Tone { lo: 380.0, hi: 540.0 },
        EventKind::Noise { lo: 1050.0, hi: 1400.0 },
        EventKind::Chirp { from: 2200.0, to: 2800.0 },
        EventKind::Tone { lo: 4200.0, hi: 4900.0 },
        EventKind::Noise { lo: 6200.0, hi: 7400.0 },
        EventKind::Chirp { from: 150.0, to: 260.0 },
        EventKind::Tone { lo: 3300.0, hi: 3600.0 },
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthClip {
    pub chunk_id: String,
    pub clip: AudioClip,
    pub labels: LabelVector,
    /// Classes of the events mixed into the clip.
    pub classes: Vec<usize>,
}

/// Generates clips in memory. Deterministic for a given `(spec, seed)`.
pub fn synth_clips(spec: &SynthSpec, seed: u64) -> Result<Vec<SynthClip>> {
    if spec.clips == 0 {
        return Ok(Vec::new());
    }
    spec.validate()?;
    (0..spec.clips)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, seed::Stream::Synth, i as u64));
            let n_events = rng.random_range(1..=spec.max_events.min(spec.classes()));
            let mut classes: Vec<usize> = (0..spec.classes()).collect();
            classes.shuffle(&mut rng);
            classes.truncate(n_events);
            classes.sort_unstable();
            let clip = render_clip(spec, &classes, &mut rng);
            let mut labels = [0.0; NUM_CLASSES];
            for &c in &classes {
                labels[c] = 1.0;
            }
            Ok(SynthClip { chunk_id: format!("synth{i:05}"), clip, labels: LabelVector(labels), classes })
        })
        .collect()
}

/// Renders a clip containing exactly the events of `classes`.
pub fn render_clip(spec: &SynthSpec, classes: &[usize], rng: &mut impl Rng) -> AudioClip {
    let sr = SAMPLE_RATE as f64;
    let mut buf: Vec<f64> =
        (0..CLIP_SAMPLES).map(|_| spec.background_amplitude * rng.random_range(-1.0..1.0)).collect();

    for &class in classes {
        let len = rng.random_range((0.6 * sr) as usize..=(2.0 * sr) as usize);
        let start = rng.random_range(0..=CLIP_SAMPLES - len);
        let gain = spec.event_amplitude * rng.random_range(0.6..1.0);
        let mut event = vec![0.0; len];
        match spec.events[class] {
            EventKind::Tone { lo, hi } => {
                let f = rng.random_range(lo..=hi);
                let phase = rng.random_range(0.0..2.0 * PI);
                for (n, e) in event.iter_mut().enumerate() {
                    *e = (2.0 * PI * f * n as f64 / sr + phase).sin();
                }
            }
            EventKind::Noise { lo, hi } => {
                let partials = 24;
                let comps: Vec<(f64, f64)> =
                    (0..partials).map(|_| (rng.random_range(lo..=hi), rng.random_range(0.0..2.0 * PI))).collect();
                let norm = (2.0 / partials as f64).sqrt();
                for (n, e) in event.iter_mut().enumerate() {
                    let t = n as f64 / sr;
                    *e = norm * comps.iter().map(|&(f, p)| (2.0 * PI * f * t + p).sin()).sum::<f64>();
                }
            }
            EventKind::Chirp { from, to } => {
                let dur = len as f64 / sr;
                let rate = (to - from) / dur;
                for (n, e) in event.iter_mut().enumerate() {
                    let t = n as f64 / sr;
                    *e = (2.0 * PI * (from * t + 0.5 * rate * t * t)).sin();
                }
            }
        }
        // raised-cosine fades over 10% of the event at each end
        let fade = (len / 10).max(1);
        for n in 0..len {
            let edge = n.min(len - 1 - n);
            let env = if edge < fade { 0.5 - 0.5 * (PI * edge as f64 / fade as f64).cos() } else { 1.0 };
            buf[start + n] += gain * env * event[n];
        }
    }
    AudioClip::from_samples(buf)
}

/// Writes WAV files plus `manifest.csv` into `out_dir`.
pub fn synth_dataset(spec: &SynthSpec, seed: u64, out_dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    let out_dir = out_dir.as_ref();
    let clips = synth_clips(spec, seed)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut manifest = DatasetManifest::default();
    for c in clips {
        let file = format!("{}.wav", c.chunk_id);
        write_wav(out_dir.join(&file), &c.clip)?;
        manifest.entries.push(ManifestEntry { chunk_id: c.chunk_id, path: file, labels: c.labels });
    }
    let manifest_path: PathBuf = out_dir.join("manifest.csv");
    fs::write(&manifest_path, serialize_manifest(&manifest)).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest)
}
