//! Command-line front end. Exit codes: 0 success, 2 config error, 3 data
//! error, 4 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mixtag::augment::{apply_policy_with_mode, Batch, LambdaMode, MixPolicy};
use mixtag::container::{FeatureRecord, FeatureSet};
use mixtag::dataset::{load_manifest, make_folds_for_ids, parse_fold_csv, synth_dataset, FoldSplit, SynthSpec};
use mixtag::features::{normalize, FeatureExtractor};
use mixtag::harness::cv::{table_to_csv, TableRow};
use mixtag::harness::train::predict_all;
use mixtag::harness::{
    alpha_sweep, config::parse_alpha_list, cross_validate, extract_manifest, fold_plans, parse_stats_csv, run_fold,
    stats_to_csv, Examples, FoldResult, TrainConfig,
};
use mixtag::metrics::per_class_report_lenient;
use mixtag::nn::checkpoint;
use mixtag::seed::{self, Stream};
use mixtag::{Error, Result};

#[derive(Parser)]
#[command(name = "mixtag", version, about = "Audio tagging with sample-mixed augmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic WAV dataset and its manifest.
    SynthData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        clips: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        classes: usize,
    },
    /// Log-mel features for every manifest entry.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = mixtag::features::N_MELS)]
        mels: usize,
    },
    /// Mix the first batch of a feature file and write the result.
    Augment {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value = "mixup")]
        policy: String,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the unmixed batch here.
        #[arg(long)]
        before: Option<PathBuf>,
        #[arg(long, default_value_t = 44)]
        batch_size: usize,
        /// One mixing weight per example instead of per batch.
        #[arg(long)]
        per_example: bool,
    },
    /// Cross-validated training.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Train only this fold.
        #[arg(long)]
        fold: Option<usize>,
    },
    /// Score a feature file with a saved model.
    Eval {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Normalization statistics; defaults to the file saved next to the model.
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Cross-validation for each alpha of a grid.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        alphas: Option<String>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    policy: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Any other `key=value` config override; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl RunArgs {
    fn config(&self) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::load(&self.config)?;
        let mut set = |k: &str, v: String| cfg.set(k, &v);
        if let Some(s) = self.seed {
            set("seed", s.to_string())?;
        }
        if let Some(p) = &self.policy {
            set("policy", p.clone())?;
        }
        if let Some(a) = self.alpha {
            set("alpha", a.to_string())?;
        }
        if let Some(e) = self.max_epochs {
            set("max_epochs", e.to_string())?;
        }
        if let Some(f) = &self.features {
            set("features", f.display().to_string())?;
        }
        if let Some(o) = &self.out_dir {
            set("out_dir", o.display().to_string())?;
        }
        for kv in &self.overrides {
            let (k, v) =
                kv.split_once('=').ok_or_else(|| Error::Config(format!("`--set {kv}`: expected KEY=VALUE")))?;
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write(path: &Path, text: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_data(cfg: &TrainConfig) -> Result<(Examples, FoldSplit)> {
    let path = cfg.features.as_ref().ok_or_else(|| Error::Config("`features` is not set".into()))?;
    let examples = Examples::from_feature_set(&FeatureSet::load(path)?);
    let split = match &cfg.fold_file {
        Some(p) => parse_fold_csv(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?,
        None => {
            let ids: Vec<&str> = examples.ids.iter().map(String::as_str).collect();
            make_folds_for_ids(&ids, cfg.folds, cfg.seed)?
        }
    };
    Ok((examples, split))
}

fn save_fold(dir: &Path, fold: &FoldResult) -> Result<()> {
    let dir = dir.join(format!("fold{}", fold.fold));
    write(&dir.join("history.csv"), fold.model.history.to_csv())?;
    write(&dir.join("report.csv"), fold.eer.to_csv())?;
    write(&dir.join("model.stats.csv"), stats_to_csv(&fold.stats))?;
    checkpoint::save(dir.join("model.mtmd"), &fold.model.params, Some(&fold.model.optimizer))
}

fn warn_skipped(fold: &FoldResult) {
    for &c in &fold.skipped {
        eprintln!(
            "warning: fold {}: class `{}` has a single label value, skipped",
            fold.fold,
            mixtag::dataset::CLASS_TAGS[c]
        );
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SynthData { out, clips, seed, classes } => {
            if !(1..=mixtag::dataset::NUM_CLASSES).contains(&classes) {
                return Err(Error::Config(format!("classes must be in 1..=7, got {classes}")));
            }
            let manifest = synth_dataset(&SynthSpec::new(clips, classes), seed, &out)?;
            println!("wrote {} clips to {}", manifest.len(), out.display());
        }
        Command::Extract { manifest, out, mels } => {
            let extractor = FeatureExtractor::new(mels)?;
            let set = extract_manifest(&load_manifest(&manifest)?, &extractor)?;
            set.save(&out)?;
            println!("wrote {} feature matrices ({}x{}) to {}", set.len(), set.frames, set.bins, out.display());
        }
        Command::Augment { features, policy, alpha, seed, out, before, batch_size, per_example } => {
            let policy = MixPolicy::from_name(&policy, alpha)?;
            policy.validate()?;
            let set = FeatureSet::load(&features)?;
            let records: Vec<&FeatureRecord> = set.records.iter().take(batch_size).collect();
            let batch = Batch::new(
                records.iter().map(|r| r.feature.clone()).collect(),
                records.iter().map(|r| r.labels).collect(),
            )?;
            let mode = if per_example { LambdaMode::PerExample } else { LambdaMode::PerBatch };
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, Stream::Mixing, 0));
            let mixed = apply_policy_with_mode(&batch, policy, mode, &mut rng)?;
            let dump = |b: &Batch, path: &Path| -> Result<()> {
                let mut fs = FeatureSet::new(set.frames, set.bins);
                for ((r, f), l) in records.iter().zip(&b.features).zip(&b.labels) {
                    fs.push(FeatureRecord { chunk_id: r.chunk_id.clone(), labels: *l, feature: f.clone() })?;
                }
                fs.save(path)
            };
            dump(&mixed, &out)?;
            if let Some(path) = before {
                dump(&batch, &path)?;
            }
            println!("{policy}: mixed {} examples into {}", batch.len(), out.display());
        }
        Command::Train { run, fold } => {
            let cfg = run.config()?;
            let (examples, split) = load_data(&cfg)?;
            let start = Instant::now();
            match fold {
                Some(k) => {
                    let plans = fold_plans(&examples, &split)?;
                    let plan = plans
                        .get(k)
                        .ok_or_else(|| Error::Config(format!("fold {k} out of range 0..{}", plans.len())))?;
                    let result = run_fold(&cfg, &examples, plan, &mut ())?;
                    warn_skipped(&result);
                    save_fold(&cfg.out_dir, &result)?;
                    print!("{}", result.eer.to_csv());
                    println!("{}", result.eer.summary_line());
                }
                None => {
                    let report = cross_validate(&cfg, &examples, &split, &mut ())?;
                    for f in &report.folds {
                        warn_skipped(f);
                        save_fold(&cfg.out_dir, f)?;
                    }
                    write(&cfg.out_dir.join("report.csv"), report.average.to_csv())?;
                    write(&cfg.out_dir.join("pooled.csv"), report.pooled.to_csv())?;
                    print!("{}", report.average.to_csv());
                    println!("{}", report.average.summary_line());
                }
            }
            println!("wall_clock_s={:.1}", start.elapsed().as_secs_f64());
        }
        Command::Eval { features, model, stats } => {
            let (params, _) = checkpoint::load(&model)?;
            let set = FeatureSet::load(&features)?;
            let stats_path = stats.unwrap_or_else(|| model.with_extension("stats.csv"));
            let feats: Vec<_> = if stats_path.exists() {
                let stats = parse_stats_csv(&fs::read_to_string(&stats_path).map_err(|e| Error::io(&stats_path, e))?)?;
                set.records.iter().map(|r| normalize(&r.feature, &stats)).collect::<Result<_>>()?
            } else {
                eprintln!("warning: no statistics at {}, scoring unnormalized features", stats_path.display());
                set.records.iter().map(|r| r.feature.clone()).collect()
            };
            if set.bins != params.config.freq_bins {
                return Err(Error::Shape(format!(
                    "features have {} bins, model expects {}",
                    set.bins, params.config.freq_bins
                )));
            }
            let probs = predict_all(&params, &feats)?;
            let labels: Vec<_> = set.records.iter().map(|r| r.labels.0).collect();
            let (report, skipped) = per_class_report_lenient(&probs, &labels)?;
            for c in skipped {
                eprintln!("warning: class `{}` has a single label value, skipped", mixtag::dataset::CLASS_TAGS[c]);
            }
            print!("{}", report.to_csv());
            println!("{}", report.summary_line());
        }
        Command::Sweep { run, alphas } => {
            let mut cfg = run.config()?;
            if let Some(a) = alphas {
                cfg.alpha_grid = parse_alpha_list(&a)?;
            }
            let (examples, split) = load_data(&cfg)?;
            let start = Instant::now();
            let reports = alpha_sweep(&cfg, &examples, &split, &mut ())?;
            let rows: Vec<TableRow> = reports.iter().map(TableRow::from_report).collect();
            let table = table_to_csv(&rows);
            write(&cfg.out_dir.join("sweep.csv"), &table)?;
            print!("{table}");
            println!("wall_clock_s={:.1}", start.elapsed().as_secs_f64());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
