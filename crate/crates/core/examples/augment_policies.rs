// Applies every mixing policy to the same small batch and prints the
// resulting label vectors.
//
// `cargo run --example augment_policies`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mixtag::augment::{apply_policy, Batch, MixPolicy};
use mixtag::dataset::encode_labels;
use mixtag::features::LogMel;

pub fn run_example() -> mixtag::Result<()> {
    let tags = ["c", "mv", "", "fpo"];
    let features = (0..tags.len()).map(|i| LogMel::new(2, 3, vec![i as f64; 6])).collect::<mixtag::Result<Vec<_>>>()?;
    let labels = tags.iter().map(|t| encode_labels(t)).collect::<mixtag::Result<Vec<_>>>()?;
    let batch = Batch::new(features, labels)?;

    let policies = [
        MixPolicy::None,
        MixPolicy::Mixup(0.0),
        MixPolicy::Mixup(1.5),
        MixPolicy::SamplePairing,
        MixPolicy::MixupLp(1.5),
        MixPolicy::Extrapolation(1.5),
    ];
    for policy in policies {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mixed = apply_policy(&batch, policy, &mut rng)?;
        println!("{policy}");
        for (f, l) in mixed.features.iter().zip(&mixed.labels) {
            let l: Vec<String> = l.0.iter().map(|v| format!("{v:.2}")).collect();
            println!("  feature {:6.3}  labels [{}]", f.get(0, 0), l.join(" "));
        }
    }
    Ok(())
}

fn main() -> mixtag::Result<()> {
    run_example()
}
