//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # comments start with '#'
//! features = data/features.mtft
//! policy = mixup
//! alpha = 1.5
//! alphas = 0, 0.1, 0.5, 1.0, 1.5, 2.0, 5.0
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::augment::{LambdaMode, MixPolicy};
use crate::error::{Error, Result};
use crate::nn::adam::AdamConfig;
use crate::nn::model::DEFAULT_DROPOUT;

/// The mixing weights explored for mixup: 0 (no augmentation) up to 5.
pub const DEFAULT_ALPHAS: [f64; 7] = [0.0, 0.1, 0.5, 1.0, 1.5, 2.0, 5.0];

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub policy: MixPolicy,
    pub lambda_mode: LambdaMode,
    pub alpha_grid: Vec<f64>,
    pub seed: u64,
    pub learning_rate: f64,
    pub dropout: f64,
    /// `None` derives the depth from the feature width.
    pub blocks: Option<usize>,
    pub folds: usize,
    pub features: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub fold_file: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 44,
            patience: 20,
            max_epochs: 200,
            policy: MixPolicy::None,
            lambda_mode: LambdaMode::PerBatch,
            alpha_grid: DEFAULT_ALPHAS.to_vec(),
            seed: 0,
            learning_rate: AdamConfig::default().lr,
            dropout: DEFAULT_DROPOUT,
            blocks: None,
            folds: 5,
            features: None,
            manifest: None,
            fold_file: None,
            out_dir: PathBuf::from("runs"),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

pub fn parse_alpha_list(value: &str) -> Result<Vec<f64>> {
    let alphas: Vec<f64> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num("alphas", s))
        .collect::<Result<_>>()?;
    if alphas.is_empty() {
        return Err(Error::Config("alpha list is empty".into()));
    }
    if let Some(bad) = alphas.iter().find(|a| !(**a >= 0.0 && a.is_finite())) {
        return Err(Error::BadAlpha(*bad));
    }
    Ok(alphas)
}

impl TrainConfig {
    /// Applies one `key = value` setting. Policy and alpha may arrive in any
    /// order.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "patience" => self.patience = parse_num(key, value)?,
            "max_epochs" => self.max_epochs = parse_num(key, value)?,
            "policy" => {
                let alpha = self.policy.alpha().unwrap_or(1.0);
                self.policy = MixPolicy::from_name(value, alpha)?;
            }
            "alpha" => {
                let alpha: f64 = parse_num(key, value)?;
                self.policy = self.policy.with_alpha(alpha);
                self.policy.validate()?;
            }
            "lambda_mode" => {
                self.lambda_mode = match value {
                    "per_batch" => LambdaMode::PerBatch,
                    "per_example" => LambdaMode::PerExample,
                    other => return Err(Error::Config(format!("unknown lambda_mode `{other}`"))),
                }
            }
            "alphas" | "alpha_grid" => self.alpha_grid = parse_alpha_list(value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "learning_rate" | "lr" => self.learning_rate = parse_num(key, value)?,
            "dropout" => self.dropout = parse_num(key, value)?,
            "blocks" => {
                self.blocks = if value == "auto" { None } else { Some(parse_num(key, value)?) };
            }
            "folds" => self.folds = parse_num(key, value)?,
            "features" => self.features = Some(PathBuf::from(value)),
            "manifest" => self.manifest = Some(PathBuf::from(value)),
            "fold_file" => self.fold_file = Some(PathBuf::from(value)),
            "out_dir" => self.out_dir = PathBuf::from(value),
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Parses config text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        // apply policy before alpha regardless of line order
        let mut deferred_alpha = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            if key.trim() == "alpha" {
                deferred_alpha = Some(value.trim().to_string());
                continue;
            }
            cfg.set(key, value).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("line {}: {msg}", i + 1)),
                other => other,
            })?;
        }
        if let Some(a) = deferred_alpha {
            cfg.set("alpha", &a)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. Relative paths inside it are resolved against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut cfg.features, &mut cfg.manifest, &mut cfg.fold_file].into_iter().flatten() {
            rebase(p);
        }
        rebase(&mut cfg.out_dir);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config(format!("batch_size must be >= 2, got {}", self.batch_size)));
        }
        if self.patience < 1 {
            return Err(Error::Config("patience must be >= 1".into()));
        }
        if self.max_epochs < 1 {
            return Err(Error::Config("max_epochs must be >= 1".into()));
        }
        if self.folds < 3 {
            return Err(Error::Config(format!("cross-validation needs at least 3 folds, got {}", self.folds)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.blocks == Some(0) {
            return Err(Error::Config("blocks must be positive".into()));
        }
        self.policy.validate()
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.learning_rate, ..AdamConfig::default() }
    }

    /// Serializes every field in the file format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        writeln!(out, "batch_size = {}", self.batch_size).unwrap();
        writeln!(out, "patience = {}", self.patience).unwrap();
        writeln!(out, "max_epochs = {}", self.max_epochs).unwrap();
        writeln!(out, "policy = {}", self.policy.name()).unwrap();
        if let Some(a) = self.policy.alpha() {
            writeln!(out, "alpha = {a}").unwrap();
        }
        let mode = match self.lambda_mode {
            LambdaMode::PerBatch => "per_batch",
            LambdaMode::PerExample => "per_example",
        };
        writeln!(out, "lambda_mode = {mode}").unwrap();
        let grid: Vec<String> = self.alpha_grid.iter().map(|a| a.to_string()).collect();
        writeln!(out, "alphas = {}", grid.join(",")).unwrap();
        writeln!(out, "seed = {}", self.seed).unwrap();
        writeln!(out, "learning_rate = {}", self.learning_rate).unwrap();
        writeln!(out, "dropout = {}", self.dropout).unwrap();
        match self.blocks {
            Some(b) => writeln!(out, "blocks = {b}").unwrap(),
            None => writeln!(out, "blocks = auto").unwrap(),
        }
        writeln!(out, "folds = {}", self.folds).unwrap();
        for (k, v) in [
            ("features", path(&self.features)),
            ("manifest", path(&self.manifest)),
            ("fold_file", path(&self.fold_file)),
        ] {
            if let Some(v) = v {
                writeln!(out, "{k} = {v}").unwrap();
            }
        }
        writeln!(out, "out_dir = {}", self.out_dir.display()).unwrap();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let cfg = TrainConfig::parse("").unwrap();
        assert_eq!(cfg.batch_size, 44);
        assert_eq!(cfg.patience, 20);
        assert_eq!(cfg.max_epochs, 200);
        assert_eq!(cfg.alpha_grid, DEFAULT_ALPHAS.to_vec());
    }

    #[test]
    fn parses_keys_and_comments() {
        let cfg = TrainConfig::parse(
            "# run\nalpha = 1.5   # before policy\npolicy = mixup\nseed=9\nblocks = 2\nalphas = 0, 1.5\nlambda_mode = per_example\n",
        )
        .unwrap();
        assert_eq!(cfg.policy, MixPolicy::Mixup(1.5));
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.blocks, Some(2));
        assert_eq!(cfg.alpha_grid, vec![0.0, 1.5]);
        assert_eq!(cfg.lambda_mode, LambdaMode::PerExample);
        assert_eq!(TrainConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(TrainConfig::parse("batch_size = 1"), Err(Error::Config(_))));
        assert!(matches!(TrainConfig::parse("patience = 0"), Err(Error::Config(_))));
        assert!(matches!(TrainConfig::parse("colour = blue"), Err(Error::Config(_))));
        assert!(matches!(TrainConfig::parse("just words"), Err(Error::Config(_))));
        assert!(TrainConfig::parse("policy = mixup\nalpha = -1").is_err());
        assert!(TrainConfig::parse("alphas = ").is_err());
    }
}
