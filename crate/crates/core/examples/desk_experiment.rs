// Mixup versus no augmentation on the synthetic dataset.
//
// `cargo run --release --example desk_experiment -- [seeds]`

use std::time::Instant;

use mixtag::augment::MixPolicy;
use mixtag::harness::desk::{median, DeskExperiment, DeskSummary};

pub fn run_example(seeds: u64) -> mixtag::Result<()> {
    let exp = DeskExperiment::default();
    let examples = exp.examples()?;
    let mut none = Vec::new();
    let mut mixup = Vec::new();
    for seed in 0..seeds {
        for (policy, out) in [(MixPolicy::None, &mut none), (MixPolicy::Mixup(1.5), &mut mixup)] {
            let start = Instant::now();
            let report = exp.run(&examples, policy, seed)?;
            let s = DeskSummary::of(&report);
            let epochs: Vec<usize> = report.folds.iter().map(|f| f.model.history.epochs.len()).collect();
            println!(
                "seed {seed} {policy:<18} eer {:.4} pooled {:.4} train_acc {:.4} epochs {epochs:?} ({:.0?})",
                s.average_eer,
                s.pooled_eer,
                s.final_train_acc,
                start.elapsed()
            );
            out.push(s);
        }
    }
    let med = |v: &[DeskSummary], f: fn(&DeskSummary) -> f64| median(&v.iter().map(f).collect::<Vec<_>>());
    println!("median eer: none {:.4}, mixup {:.4}", med(&none, |s| s.average_eer), med(&mixup, |s| s.average_eer));
    println!(
        "median train acc: none {:.4}, mixup {:.4}",
        med(&none, |s| s.final_train_acc),
        med(&mixup, |s| s.final_train_acc)
    );
    Ok(())
}

fn main() -> mixtag::Result<()> {
    run_example(std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3))
}
