//! Experiment driver: configuration, training, cross-validation and sweeps.

pub mod config;
pub mod cv;
pub mod desk;
pub mod train;

use std::fmt::Write as _;

pub use config::TrainConfig;
pub use cv::{
    alpha_sweep, cross_validate, fold_plans, run_fold, CvObserver, CvReport, Examples, FoldPlan, FoldResult, TableRow,
};
pub use train::{train_model, EarlyStopping, EpochRecord, TrainedModel, TrainingHistory};

use crate::container::{FeatureRecord, FeatureSet};
use crate::dataset::{read_wav, DatasetManifest, SynthClip};
use crate::error::{Error, Result};
use crate::features::{FeatureExtractor, FeatureStats, FRAMES};

/// Log-mel features for every manifest entry, in manifest order.
pub fn extract_manifest(manifest: &DatasetManifest, extractor: &FeatureExtractor) -> Result<FeatureSet> {
    let mut set = FeatureSet::new(FRAMES, extractor.filterbank().n_mels);
    for e in &manifest.entries {
        let clip = read_wav(&e.path)?;
        set.push(FeatureRecord { chunk_id: e.chunk_id.clone(), labels: e.labels, feature: extractor.extract(&clip)? })?;
    }
    Ok(set)
}

/// Same as [`extract_manifest`] for in-memory synthetic clips.
pub fn extract_clips(clips: &[SynthClip], extractor: &FeatureExtractor) -> Result<FeatureSet> {
    let mut set = FeatureSet::new(FRAMES, extractor.filterbank().n_mels);
    for c in clips {
        set.push(FeatureRecord {
            chunk_id: c.chunk_id.clone(),
            labels: c.labels,
            feature: extractor.extract(&c.clip)?,
        })?;
    }
    Ok(set)
}

/// `bin,mean,std` rows, shortest round-trip formatting.
pub fn stats_to_csv(stats: &FeatureStats) -> String {
    let mut out = String::from("bin,mean,std\n");
    for (i, (m, s)) in stats.mean.iter().zip(&stats.std).enumerate() {
        writeln!(out, "{i},{m},{s}").unwrap();
    }
    out
}

pub fn parse_stats_csv(text: &str) -> Result<FeatureStats> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut stats = FeatureStats { mean: Vec::new(), std: Vec::new() };
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        let num = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Parse { line, msg: "expected `bin,mean,std`".into() })
        };
        if num(0)? as usize != i {
            return Err(Error::Parse { line, msg: "bins out of order".into() });
        }
        stats.mean.push(num(1)?);
        stats.std.push(num(2)?);
    }
    if stats.mean.is_empty() {
        return Err(Error::EmptyInput("statistics file has no rows"));
    }
    Ok(stats)
}
