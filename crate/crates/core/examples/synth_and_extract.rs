// Writes a few synthetic clips to disk, reads them back through the manifest
// and prints where each clip's energy sits in a 4-band log-mel front end.
//
// `cargo run --example synth_and_extract`

use mixtag::dataset::{load_manifest, read_wav, synth_dataset, SynthSpec};
use mixtag::features::{FeatureExtractor, FRAMES};

pub fn run_example() -> mixtag::Result<()> {
    let dir = tempfile::tempdir().map_err(|e| mixtag::Error::io(std::env::temp_dir(), e))?;
    synth_dataset(&SynthSpec::new(6, 4), 3, dir.path())?;
    let manifest = load_manifest(dir.path().join("manifest.csv"))?;

    let coarse = FeatureExtractor::new(4)?;
    let full = FeatureExtractor::new(128)?;
    for entry in &manifest.entries {
        let clip = read_wav(&entry.path)?;
        let mel = coarse.extract(&clip)?;
        assert_eq!(full.extract(&clip)?.shape(), (FRAMES, 128));
        // loudest frame per band, in log units
        let peaks: Vec<String> = (0..4)
            .map(|b| (0..FRAMES).map(|t| mel.get(t, b)).fold(f64::NEG_INFINITY, f64::max))
            .map(|p| format!("{p:6.1}"))
            .collect();
        println!("{} labels {:<4} band peaks [{}]", entry.chunk_id, entry.labels.to_tags(), peaks.join(" "));
    }
    Ok(())
}

fn main() -> mixtag::Result<()> {
    run_example()
}
