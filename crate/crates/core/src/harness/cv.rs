//! k-fold cross-validation and alpha sweeps.
//!
//! For test fold `f` the validation set is fold `(f + 1) % k` and the model
//! trains on the remaining `k - 2` folds. Normalization statistics come from
//! those training folds only.

use std::collections::HashSet;
use std::fmt::Write as _;

use super::config::TrainConfig;
use super::train::{predict_all, train_model, TrainedModel};
use crate::augment::{Batch, MixPolicy};
use crate::container::FeatureSet;
use crate::dataset::{FoldSplit, LabelVector, CLASS_TAGS, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::features::{compute_stats, normalize, FeatureStats, LogMel};
use crate::metrics::{per_class_report_lenient, EerReport};

/// An indexed labelled feature collection.
#[derive(Debug, Clone, PartialEq)]
pub struct Examples {
    pub ids: Vec<String>,
    pub features: Vec<LogMel>,
    pub labels: Vec<LabelVector>,
}

impl Examples {
    pub fn from_feature_set(set: &FeatureSet) -> Self {
        Examples {
            ids: set.records.iter().map(|r| r.chunk_id.clone()).collect(),
            features: set.records.iter().map(|r| r.feature.clone()).collect(),
            labels: set.records.iter().map(|r| r.labels).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Normalized copy of the selected rows.
    pub fn batch(&self, rows: &[usize], stats: &FeatureStats) -> Result<Batch> {
        let features = rows.iter().map(|&i| normalize(&self.features[i], stats)).collect::<Result<_>>()?;
        Batch::new(features, rows.iter().map(|&i| self.labels[i]).collect())
    }

    pub fn stats_of(&self, rows: &[usize]) -> Result<FeatureStats> {
        compute_stats(rows.iter().map(|&i| &self.features[i]))
    }
}

/// Row indices of one cross-validation split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub fold: usize,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn fold_plans(examples: &Examples, split: &FoldSplit) -> Result<Vec<FoldPlan>> {
    let k = split.fold_count;
    if k < 3 {
        return Err(Error::Config(format!("cross-validation needs at least 3 folds, got {k}")));
    }
    let known: HashSet<&str> = examples.ids.iter().map(String::as_str).collect();
    if let Some(extra) = split.assignments.keys().find(|id| !known.contains(id.as_str())) {
        return Err(Error::UnknownId(extra.clone()));
    }
    let fold_of: Vec<usize> = examples
        .ids
        .iter()
        .map(|id| split.fold_of(id).ok_or_else(|| Error::UnknownId(id.clone())))
        .collect::<Result<_>>()?;
    let plans: Vec<FoldPlan> = (0..k)
        .map(|f| {
            let v = (f + 1) % k;
            let rows = |pred: &dyn Fn(usize) -> bool| (0..fold_of.len()).filter(|&i| pred(fold_of[i])).collect();
            FoldPlan { fold: f, train: rows(&|g| g != f && g != v), val: rows(&|g| g == v), test: rows(&|g| g == f) }
        })
        .collect();
    if let Some(p) = plans.iter().find(|p| p.train.is_empty() || p.val.is_empty() || p.test.is_empty()) {
        return Err(Error::TooFewItems { items: examples.len(), folds: p.fold + 1 });
    }
    Ok(plans)
}

/// Hooks into [`cross_validate`]; both default to no-ops.
pub trait CvObserver {
    /// Called with the normalization statistics before a fold trains.
    fn fold_started(&mut self, _plan: &FoldPlan, _stats: &FeatureStats) {}
    fn fold_finished(&mut self, _result: &FoldResult) {}
}

impl CvObserver for () {}

#[derive(Debug, Clone)]
pub struct FoldResult {
    pub fold: usize,
    pub test_rows: Vec<usize>,
    pub eer: EerReport,
    /// Classes without both positives and negatives in the test fold.
    pub skipped: Vec<usize>,
    pub stats: FeatureStats,
    pub model: TrainedModel,
    pub test_probs: Vec<[f64; NUM_CLASSES]>,
}

#[derive(Debug, Clone)]
pub struct CvReport {
    pub policy: MixPolicy,
    pub seed: u64,
    pub folds: Vec<FoldResult>,
    /// Class-wise mean of the per-fold reports.
    pub average: EerReport,
    /// Report over the concatenated test predictions of all folds.
    pub pooled: EerReport,
}

impl CvReport {
    /// Mean over folds of the final-epoch training accuracy.
    pub fn final_train_acc(&self) -> f64 {
        let accs: Vec<f64> = self.folds.iter().filter_map(|f| f.model.history.last()).map(|e| e.train_acc).collect();
        accs.iter().sum::<f64>() / accs.len() as f64
    }

    pub fn warnings(&self) -> Vec<String> {
        self.folds
            .iter()
            .flat_map(|f| f.skipped.iter().map(move |&c| format!("fold {}: class `{}` skipped", f.fold, CLASS_TAGS[c])))
            .collect()
    }
}

/// Normalizes with training-fold statistics, trains, and scores the test
/// fold.
pub fn run_fold(
    cfg: &TrainConfig,
    examples: &Examples,
    plan: &FoldPlan,
    observer: &mut dyn CvObserver,
) -> Result<FoldResult> {
    let stats = examples.stats_of(&plan.train)?;
    observer.fold_started(plan, &stats);
    let train = examples.batch(&plan.train, &stats)?;
    let val = examples.batch(&plan.val, &stats)?;
    let test = examples.batch(&plan.test, &stats)?;
    let model = train_model(cfg, plan.fold as u64, &train, &val)?;
    let test_probs = predict_all(&model.params, &test.features)?;
    let targets: Vec<[f64; NUM_CLASSES]> = test.labels.iter().map(|l| l.0).collect();
    let (eer, skipped) = per_class_report_lenient(&test_probs, &targets)?;
    let result = FoldResult { fold: plan.fold, test_rows: plan.test.clone(), eer, skipped, stats, model, test_probs };
    observer.fold_finished(&result);
    Ok(result)
}

pub fn cross_validate(
    cfg: &TrainConfig,
    examples: &Examples,
    split: &FoldSplit,
    observer: &mut dyn CvObserver,
) -> Result<CvReport> {
    cfg.validate()?;
    let plans = fold_plans(examples, split)?;
    let folds = plans.iter().map(|plan| run_fold(cfg, examples, plan, observer)).collect::<Result<Vec<_>>>()?;
    let mut pooled_probs = Vec::with_capacity(examples.len());
    let mut pooled_labels = Vec::with_capacity(examples.len());
    for f in &folds {
        pooled_probs.extend_from_slice(&f.test_probs);
        pooled_labels.extend(f.test_rows.iter().map(|&i| examples.labels[i].0));
    }
    let reports: Vec<EerReport> = folds.iter().map(|f| f.eer.clone()).collect();
    let average = EerReport::mean_of(&reports).ok_or(Error::EmptyInput("no folds"))?;
    let (pooled, _) = per_class_report_lenient(&pooled_probs, &pooled_labels)?;
    Ok(CvReport { policy: cfg.policy, seed: cfg.seed, folds, average, pooled })
}

/// Policy evaluated at `alpha` in a sweep: the configured policy if it takes
/// an alpha, mixup otherwise.
pub fn sweep_policy(base: MixPolicy, alpha: f64) -> MixPolicy {
    match base.alpha() {
        Some(_) => base.with_alpha(alpha),
        None => MixPolicy::Mixup(alpha),
    }
}

/// One cross-validation run per alpha in `cfg.alpha_grid`.
pub fn alpha_sweep(
    cfg: &TrainConfig,
    examples: &Examples,
    split: &FoldSplit,
    observer: &mut dyn CvObserver,
) -> Result<Vec<CvReport>> {
    cfg.alpha_grid
        .iter()
        .map(|&alpha| {
            let mut run = cfg.clone();
            run.policy = sweep_policy(cfg.policy, alpha);
            cross_validate(&run, examples, split, observer)
        })
        .collect()
}

/// One line of a results table: per-class EER, mean and sample variance.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub policy: String,
    pub alpha: Option<f64>,
    pub eer: EerReport,
}

impl TableRow {
    pub fn from_report(report: &CvReport) -> Self {
        TableRow { policy: report.policy.name().to_string(), alpha: report.policy.alpha(), eer: report.average.clone() }
    }
}

pub const TABLE_HEADER: &str = "policy,alpha,c,m,f,v,p,b,o,avg,var";

/// Fixed six-decimal formatting; empty cells for absent alpha or classes.
pub fn table_to_csv(rows: &[TableRow]) -> String {
    let mut out = format!("{TABLE_HEADER}\n");
    for r in rows {
        out.push_str(&r.policy);
        out.push(',');
        if let Some(a) = r.alpha {
            write!(out, "{a}").unwrap();
        }
        for v in &r.eer.per_class {
            out.push(',');
            if let Some(v) = v {
                write!(out, "{v:.6}").unwrap();
            }
        }
        writeln!(out, ",{:.6},{:.6}", r.eer.average, r.eer.variance).unwrap();
    }
    out
}

pub fn parse_table_csv(text: &str) -> Result<Vec<TableRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?;
    if header.iter().collect::<Vec<_>>().join(",") != TABLE_HEADER {
        return Err(Error::Parse { line: 1, msg: format!("expected header `{TABLE_HEADER}`") });
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        let opt = |k: usize| -> Result<Option<f64>> {
            if rec[k].is_empty() {
                return Ok(None);
            }
            rec[k].parse().map(Some).map_err(|_| Error::Parse { line, msg: format!("bad number `{}`", &rec[k]) })
        };
        let mut per_class = [None; NUM_CLASSES];
        for (c, slot) in per_class.iter_mut().enumerate() {
            *slot = opt(2 + c)?;
        }
        let need = |k: usize| opt(k)?.ok_or_else(|| Error::Parse { line, msg: "missing avg/var".into() });
        rows.push(TableRow {
            policy: rec[0].to_string(),
            alpha: opt(1)?,
            eer: EerReport { per_class, average: need(9)?, variance: need(10)? },
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn examples(n: usize) -> Examples {
        Examples {
            ids: (0..n).map(|i| format!("id{i}")).collect(),
            features: (0..n).map(|i| LogMel::new(2, 2, vec![i as f64; 4]).unwrap()).collect(),
            labels: vec![LabelVector::default(); n],
        }
    }

    #[test]
    fn plans_partition_rows() {
        let ex = examples(10);
        let assignments: BTreeMap<String, usize> =
            ex.ids.iter().enumerate().map(|(i, id)| (id.clone(), i % 5)).collect();
        let split = FoldSplit { fold_count: 5, assignments };
        let plans = fold_plans(&ex, &split).unwrap();
        for p in &plans {
            let mut all: Vec<usize> = p.train.iter().chain(&p.val).chain(&p.test).copied().collect();
            all.sort();
            assert_eq!(all, (0..10).collect::<Vec<_>>());
            assert_eq!(p.val, plans[(p.fold + 1) % 5].test);
        }
    }

    #[test]
    fn plans_reject_unknown_and_two_folds() {
        let ex = examples(4);
        let mut assignments: BTreeMap<String, usize> =
            ex.ids.iter().enumerate().map(|(i, id)| (id.clone(), i % 2)).collect();
        assert!(matches!(
            fold_plans(&ex, &FoldSplit { fold_count: 2, assignments: assignments.clone() }),
            Err(Error::Config(_))
        ));
        assignments.insert("ghost".into(), 0);
        assert!(matches!(fold_plans(&ex, &FoldSplit { fold_count: 3, assignments }), Err(Error::UnknownId(_))));
    }

    #[test]
    fn table_round_trip() {
        let mut per_class = [Some(0.125); NUM_CLASSES];
        per_class[5] = None;
        let rows = vec![
            TableRow { policy: "none".into(), alpha: None, eer: EerReport::from_per_class(per_class) },
            TableRow {
                policy: "mixup".into(),
                alpha: Some(1.5),
                eer: EerReport::from_values(&[0.1, 0.14, 0.11, 0.03, 0.1, 0.01, 0.2]),
            },
        ];
        let text = table_to_csv(&rows);
        let parsed = parse_table_csv(&text).unwrap();
        assert_eq!(table_to_csv(&parsed), text);
        assert_eq!(parsed[0].alpha, None);
        assert_eq!(parsed[0].eer.per_class[5], None);
        assert_eq!(parsed[1].eer.per_class[6], Some(0.2));
    }

    #[test]
    fn sweep_policy_kind() {
        assert_eq!(sweep_policy(MixPolicy::None, 0.5), MixPolicy::Mixup(0.5));
        assert_eq!(sweep_policy(MixPolicy::Extrapolation(1.0), 2.0), MixPolicy::Extrapolation(2.0));
    }
}
