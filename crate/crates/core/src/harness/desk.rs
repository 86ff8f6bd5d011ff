//! Small synthetic experiment comparing mixup against no augmentation.

use super::config::TrainConfig;
use super::cv::{cross_validate, CvReport, Examples};
use super::extract_clips;
use crate::augment::MixPolicy;
use crate::dataset::{make_folds_for_ids, synth_clips, SynthSpec};
use crate::error::Result;
use crate::features::FeatureExtractor;

#[derive(Debug, Clone, PartialEq)]
pub struct DeskExperiment {
    pub clips: usize,
    pub classes: usize,
    pub n_mels: usize,
    pub data_seed: u64,
    pub config: TrainConfig,
}

impl Default for DeskExperiment {
    /// 600 clips of 4 classes, 4 mel bands, 2 blocks, 5 folds, at most 60
    /// epochs. With only about 11 updates per epoch the Adam default of 1e-3
    /// stays on the initial plateau for most of the budget, so the step is
    /// raised to 1e-2.
    fn default() -> Self {
        let config =
            TrainConfig { max_epochs: 60, blocks: Some(2), folds: 5, learning_rate: 1e-2, ..TrainConfig::default() };
        DeskExperiment { clips: 600, classes: 4, n_mels: 4, data_seed: 2018, config }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeskSummary {
    pub average_eer: f64,
    pub pooled_eer: f64,
    pub final_train_acc: f64,
}

impl DeskSummary {
    pub fn of(report: &CvReport) -> Self {
        DeskSummary {
            average_eer: report.average.average,
            pooled_eer: report.pooled.average,
            final_train_acc: report.final_train_acc(),
        }
    }
}

impl DeskExperiment {
    pub fn examples(&self) -> Result<Examples> {
        let clips = synth_clips(&SynthSpec::new(self.clips, self.classes), self.data_seed)?;
        Ok(Examples::from_feature_set(&extract_clips(&clips, &FeatureExtractor::new(self.n_mels)?)?))
    }

    /// One cross-validation run; `seed` drives the fold split and training.
    pub fn run(&self, examples: &Examples, policy: MixPolicy, seed: u64) -> Result<CvReport> {
        let cfg = TrainConfig { policy, seed, ..self.config.clone() };
        let ids: Vec<&str> = examples.ids.iter().map(String::as_str).collect();
        let split = make_folds_for_ids(&ids, cfg.folds, seed)?;
        cross_validate(&cfg, examples, &split, &mut ())
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
