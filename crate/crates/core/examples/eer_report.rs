// Equal error rate of a toy detector, then a per-class report.
//
// `cargo run --example eer_report`

use mixtag::dataset::NUM_CLASSES;
use mixtag::metrics::{eer, per_class_report, roc_points, ScoreSet};

pub fn run_example() -> mixtag::Result<()> {
    let scores = ScoreSet::new(
        vec![0.9, 0.8, 0.7, 0.55, 0.5, 0.4, 0.3, 0.2],
        vec![true, true, false, true, false, true, false, false],
    )?;
    for p in roc_points(&scores)? {
        println!("threshold {:>5} fpr {:.2} fnr {:.2}", format!("{:.2}", p.threshold), p.fpr, p.fnr);
    }
    println!("eer {:.4}", eer(&scores)?);

    // class k is scored by a detector that gets noisier with k
    let n = 40;
    let mut probs = vec![[0.0; NUM_CLASSES]; n];
    let mut labels = vec![[0.0; NUM_CLASSES]; n];
    for i in 0..n {
        for k in 0..NUM_CLASSES {
            let positive = (i + 2 * k) % 4 < 2;
            let noise = ((i * 7 + k * 13) % 11) as f64 / 10.0 - 0.5;
            labels[i][k] = if positive { 1.0 } else { 0.0 };
            probs[i][k] = labels[i][k] * 0.5 + 0.25 + noise * (k as f64 + 1.0) / 7.0;
        }
    }
    let report = per_class_report(&probs, &labels)?;
    print!("{}", report.to_csv());
    println!("{}", report.summary_line());
    Ok(())
}

fn main() -> mixtag::Result<()> {
    run_example()
}
