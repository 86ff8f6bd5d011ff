// Three-fold cross-validation of a 2-block model on 60 synthetic clips,
// once without augmentation and once with mixup.
//
// `cargo run --release --example cross_validation`

use mixtag::augment::MixPolicy;
use mixtag::dataset::{make_folds_for_ids, synth_clips, SynthSpec};
use mixtag::features::{FeatureExtractor, FeatureStats};
use mixtag::harness::{cross_validate, extract_clips, CvObserver, Examples, FoldPlan, FoldResult, TrainConfig};

struct Log;

impl CvObserver for Log {
    fn fold_started(&mut self, plan: &FoldPlan, _stats: &FeatureStats) {
        println!("fold {}: {} train, {} val, {} test", plan.fold, plan.train.len(), plan.val.len(), plan.test.len());
    }

    fn fold_finished(&mut self, r: &FoldResult) {
        let last = r.model.history.last().expect("at least one epoch");
        println!(
            "  best epoch {} of {}, train acc {:.3}, eer {:.4}",
            r.model.best_epoch, last.epoch, last.train_acc, r.eer.average
        );
    }
}

pub fn run_example() -> mixtag::Result<()> {
    let clips = synth_clips(&SynthSpec::new(60, 4), 5)?;
    let examples = Examples::from_feature_set(&extract_clips(&clips, &FeatureExtractor::new(4)?)?);
    let ids: Vec<&str> = examples.ids.iter().map(String::as_str).collect();
    let split = make_folds_for_ids(&ids, 3, 0)?;

    for policy in [MixPolicy::None, MixPolicy::Mixup(1.5)] {
        let cfg = TrainConfig {
            policy,
            max_epochs: 4,
            blocks: Some(2),
            folds: 3,
            learning_rate: 1e-2,
            ..TrainConfig::default()
        };
        println!("{policy}");
        let report = cross_validate(&cfg, &examples, &split, &mut Log)?;
        println!("{}", report.average.summary_line());
    }
    Ok(())
}

fn main() -> mixtag::Result<()> {
    run_example()
}
