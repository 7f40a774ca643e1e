//! Cross-validated benchmarking, win-draw-loss records and the fit-timing
//! harness.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{argmax, fit_design, train, Smoother, TrainConfig};
use crate::data::{apply_discretization, gen_synthetic, Dataset, DiscretizationModel, FoldPlan};
use crate::error::{Error, Result};
use crate::smoothing::additive_cpt;
use crate::tree::{aggregate_counts, build_design, expand_design, CptTree, DesignOptions};

/// Probability floor used when scoring a row whose true class got no mass.
const LOG_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    ZeroOne,
    LogLoss,
}

impl Loss {
    /// Exact ties for error rates; log losses only tie at rounding level.
    pub fn default_draw_tolerance(self) -> f64 {
        match self {
            Loss::ZeroOne => 0.0,
            Loss::LogLoss => 1e-12,
        }
    }
}

impl fmt::Display for Loss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Loss::ZeroOne => "zero_one",
            Loss::LogLoss => "log_loss",
        })
    }
}

impl FromStr for Loss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "zero_one" | "01" => Ok(Loss::ZeroOne),
            "log_loss" | "log" => Ok(Loss::LogLoss),
            _ => Err(Error::config(format!("unknown loss {s:?}"))),
        }
    }
}

/// Held-out score of one row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowScore {
    pub row: usize,
    pub truth: usize,
    pub predicted: usize,
    /// `−ln P(truth | x)`.
    pub log_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub zero_one: f64,
    pub log_loss: f64,
    pub fit_seconds: f64,
    pub rows: Vec<RowScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub dataset: String,
    pub model: String,
    pub n_rows: usize,
    /// Error rate pooled over every held-out row.
    pub zero_one: f64,
    /// Mean held-out log loss pooled over every row.
    pub log_loss: f64,
    /// Total wall-clock spent in training across folds.
    pub fit_seconds: f64,
    pub folds: Vec<FoldResult>,
}

impl EvalResult {
    pub fn loss(&self, loss: Loss) -> f64 {
        match loss {
            Loss::ZeroOne => self.zero_one,
            Loss::LogLoss => self.log_loss,
        }
    }

    pub fn n_errors(&self) -> usize {
        self.folds
            .iter()
            .flat_map(|f| &f.rows)
            .filter(|r| r.truth != r.predicted)
            .count()
    }

    /// Recomputes the pooled losses from the per-row scores.
    pub fn recompute(&mut self) {
        let rows = || self.folds.iter().flat_map(|f| &f.rows);
        let n = rows().count().max(1) as f64;
        self.zero_one = rows().filter(|r| r.truth != r.predicted).count() as f64 / n;
        self.log_loss = rows().map(|r| r.log_loss).sum::<f64>() / n;
    }
}

/// Scores a model's posteriors against the true labels.
pub fn score_rows(rows: &[usize], truth: &[usize], posteriors: &[Vec<f64>]) -> Vec<RowScore> {
    rows.iter()
        .zip(truth)
        .zip(posteriors)
        .map(|((&row, &y), p)| RowScore {
            row,
            truth: y,
            predicted: argmax(p),
            log_loss: -p[y].max(LOG_FLOOR).ln(),
        })
        .collect()
}

/// K-fold evaluation. Each fold fits its own discretization on the training
/// rows, trains with `cfg` (seed offset by the fold index) and scores the
/// held-out rows. Folds run in parallel.
pub fn run_cv(ds: &Dataset, dataset: &str, cfg: &TrainConfig, plan: &FoldPlan) -> Result<EvalResult> {
    if plan.assignment.len() != ds.n_rows() {
        return Err(Error::config(format!(
            "fold plan covers {} rows, dataset has {}",
            plan.assignment.len(),
            ds.n_rows()
        )));
    }
    let folds: Vec<FoldResult> = (0..plan.k)
        .into_par_iter()
        .map(|fold| run_fold(ds, cfg, plan, fold).map_err(|e| Error::Fold { fold, source: Box::new(e) }))
        .collect::<Result<_>>()?;
    let mut res = EvalResult {
        dataset: dataset.to_string(),
        model: format!("{}/{}", cfg.structure, cfg.smoother),
        n_rows: ds.n_rows(),
        zero_one: 0.0,
        log_loss: 0.0,
        fit_seconds: folds.iter().map(|f| f.fit_seconds).sum(),
        folds,
    };
    res.recompute();
    Ok(res)
}

fn run_fold(ds: &Dataset, cfg: &TrainConfig, plan: &FoldPlan, fold: usize) -> Result<FoldResult> {
    let train_rows = plan.train_rows(fold);
    let test_rows = plan.test_rows(fold);
    let (train_raw, test_raw) = (ds.subset(&train_rows), ds.subset(&test_rows));
    let disc = DiscretizationModel::fit(&train_raw);
    let train_ds = apply_discretization(&disc, &train_raw)?;
    let test_ds = apply_discretization(&disc, &test_raw)?;

    let fold_cfg = TrainConfig {
        seed: cfg.seed.wrapping_add(fold as u64),
        ..cfg.clone()
    };
    let start = Instant::now();
    let model = train(&train_ds, &fold_cfg)?;
    let fit_seconds = start.elapsed().as_secs_f64();

    let post = model.predict_dataset(&test_ds)?;
    let rows = score_rows(&test_rows, test_ds.class_codes(), &post);
    let n = rows.len().max(1) as f64;
    Ok(FoldResult {
        fold,
        zero_one: rows.iter().filter(|r| r.truth != r.predicted).count() as f64 / n,
        log_loss: rows.iter().map(|r| r.log_loss).sum::<f64>() / n,
        fit_seconds,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct WdlRecord {
    pub wins: usize,
    pub draws: usize,
    pub losses: usize,
}

impl WdlRecord {
    pub fn total(&self) -> usize {
        self.wins + self.draws + self.losses
    }

    pub fn transposed(&self) -> Self {
        WdlRecord {
            wins: self.losses,
            draws: self.draws,
            losses: self.wins,
        }
    }
}

impl fmt::Display for WdlRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}-{}", self.wins, self.draws, self.losses)
    }
}

/// Win-draw-loss of `a` against `b`, matched by dataset name. A win means a
/// strictly lower loss by more than `tolerance`.
pub fn wdl(a: &[EvalResult], b: &[EvalResult], loss: Loss, tolerance: f64) -> Result<WdlRecord> {
    let index = |rs: &[EvalResult]| -> Result<BTreeMap<String, f64>> {
        let mut m = BTreeMap::new();
        for r in rs {
            if m.insert(r.dataset.clone(), r.loss(loss)).is_some() {
                return Err(Error::config(format!("dataset {:?} appears twice", r.dataset)));
            }
        }
        Ok(m)
    };
    let (ma, mb) = (index(a)?, index(b)?);
    if ma.len() != mb.len() || ma.keys().any(|k| !mb.contains_key(k)) {
        return Err(Error::config("W-D-L needs results for the same datasets"));
    }
    let mut rec = WdlRecord::default();
    for (name, la) in &ma {
        let diff = la - mb[name];
        if diff.abs() <= tolerance {
            rec.draws += 1;
        } else if diff < 0.0 {
            rec.wins += 1;
        } else {
            rec.losses += 1;
        }
    }
    Ok(rec)
}

/// Synthetic data for timing one node's parameter learning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingConfig {
    pub cardinality: usize,
    pub n_samples: usize,
    pub n_parents: usize,
    pub seed: u64,
}

impl TimingConfig {
    pub fn new(cardinality: usize, n_samples: usize) -> Self {
        TimingConfig {
            cardinality,
            n_samples,
            n_parents: 4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitVariant {
    /// Fit on aggregated multinomial counts, one design row per leaf.
    Fast,
    /// Build a one-hot design with a row per sample and fit on that.
    Slow,
}

/// Minimum wall-clock (seconds) over `repetitions` of learning one CPT
/// whose parents are all other synthetic columns. The fast variant times
/// counting, design construction and the fit; the slow variant times the
/// duplicate-row design construction and the fit.
pub fn time_fit(gen: &TimingConfig, smoother: &Smoother, variant: FitVariant, repetitions: usize) -> Result<f64> {
    if repetitions == 0 {
        return Err(Error::config("need at least one timing repetition"));
    }
    let ds = gen_synthetic(gen.n_parents, gen.cardinality, gen.n_samples, gen.seed)?;
    let child = ds.class_index();
    let tree = CptTree::new(&ds, child, (0..gen.n_parents).collect())?;
    let opts = DesignOptions::default();
    let mut best = f64::INFINITY;
    for _ in 0..repetitions {
        let start = Instant::now();
        match (smoother, variant) {
            (Smoother::Additive { m }, _) => {
                additive_cpt(&aggregate_counts(&ds, &tree), &tree, *m)?;
            }
            (_, FitVariant::Fast) => {
                let design = build_design(&tree, opts).with_counts(aggregate_counts(&ds, &tree))?;
                fit_design(&design, smoother, gen.seed, 0)?;
            }
            (_, FitVariant::Slow) => {
                let design = expand_design(&ds, &tree, opts);
                fit_design(&design, smoother, gen.seed, 0)?;
            }
        }
        best = best.min(start.elapsed().as_secs_f64());
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_folds;
    use crate::structure::StructureKind;

    fn result(name: &str, zero_one: f64, log_loss: f64) -> EvalResult {
        EvalResult {
            dataset: name.into(),
            model: "m".into(),
            n_rows: 10,
            zero_one,
            log_loss,
            fit_seconds: 0.0,
            folds: vec![],
        }
    }

    /// The class is copied into the single attribute.
    fn copy_dataset(n: usize) -> Dataset {
        let y: Vec<usize> = (0..n).map(|i| i % 2).collect();
        Dataset::from_codes(vec![y.clone(), y], vec![2, 2], 1).unwrap()
    }

    #[test]
    fn perfect_classifier_scores_zero() {
        let ds = copy_dataset(40);
        let plan = make_folds(&ds, 4, 1).unwrap();
        let cfg = TrainConfig::new(StructureKind::Kdb(0), Smoother::Additive { m: 0.0 });
        let res = run_cv(&ds, "copy", &cfg, &plan).unwrap();
        assert_eq!(res.zero_one, 0.0);
        assert!(res.log_loss <= 1e-6);
        assert_eq!(res.folds.len(), 4);
    }

    #[test]
    fn uniform_posterior_scores_ln2() {
        let post = vec![vec![0.5, 0.5]; 3];
        let scores = score_rows(&[4, 5, 6], &[0, 1, 1], &post);
        for r in &scores {
            assert!((r.log_loss - 2f64.ln()).abs() < 1e-15);
            assert_eq!(r.predicted, 0);
        }
        assert_eq!(scores[2].row, 6);
    }

    #[test]
    fn pooled_losses_match_row_scores() {
        let ds = crate::data::gen_synthetic(3, 3, 300, 4).unwrap();
        let plan = make_folds(&ds, 5, 0).unwrap();
        let cfg = TrainConfig::new(StructureKind::Tan, Smoother::Ridge { tau: 1.0 });
        let res = run_cv(&ds, "syn", &cfg, &plan).unwrap();
        let mut again = res.clone();
        again.zero_one = f64::NAN;
        again.recompute();
        assert!((again.log_loss - res.log_loss).abs() < 1e-12);
        assert_eq!(again.zero_one, res.zero_one);
        let rows: usize = res.folds.iter().map(|f| f.rows.len()).sum();
        assert_eq!(rows, 300);
        assert_eq!(res.n_errors() as f64 / 300.0, res.zero_one);
        assert_eq!(run_cv(&ds, "syn", &cfg, &plan).unwrap().log_loss, res.log_loss);
    }

    #[test]
    fn mismatched_plan_is_rejected() {
        let ds = copy_dataset(20);
        let plan = make_folds(&copy_dataset(30), 3, 0).unwrap();
        let cfg = TrainConfig::new(StructureKind::Kdb(0), Smoother::Additive { m: 1.0 });
        assert!(matches!(run_cv(&ds, "x", &cfg, &plan), Err(Error::Config(_))));
    }

    #[test]
    fn wdl_rules() {
        let a: Vec<_> = (0..5).map(|i| result(&format!("d{i}"), 0.1, 0.2)).collect();
        assert_eq!(wdl(&a, &a, Loss::LogLoss, 1e-12).unwrap(), WdlRecord { wins: 0, draws: 5, losses: 0 });
        let b: Vec<_> = (0..5).map(|i| result(&format!("d{i}"), 0.2, 0.3)).collect();
        let rec = wdl(&a, &b, Loss::ZeroOne, 0.0).unwrap();
        assert_eq!(rec.to_string(), "5-0-0");
        assert_eq!(wdl(&b, &a, Loss::ZeroOne, 0.0).unwrap(), rec.transposed());
        let mut shuffled = b.clone();
        shuffled.reverse();
        assert_eq!(wdl(&a, &shuffled, Loss::LogLoss, 1e-12).unwrap(), rec);
        assert!(matches!(wdl(&a, &b[..4], Loss::LogLoss, 0.0), Err(Error::Config(_))));
    }

    #[test]
    fn loss_names_parse() {
        for l in [Loss::ZeroOne, Loss::LogLoss] {
            assert_eq!(l.to_string().parse::<Loss>().unwrap(), l);
        }
        assert_eq!(Loss::ZeroOne.default_draw_tolerance(), 0.0);
    }

    #[test]
    fn timing_runs_and_orders() {
        let sm = Smoother::Ridge { tau: 1.0 };
        let small = TimingConfig::new(2, 500);
        assert!(time_fit(&small, &sm, FitVariant::Fast, 1).unwrap() > 0.0);
        assert!(time_fit(&small, &sm, FitVariant::Fast, 0).is_err());
        let slow_n = time_fit(&TimingConfig::new(3, 2000), &sm, FitVariant::Slow, 3).unwrap();
        let slow_2n = time_fit(&TimingConfig::new(3, 8000), &sm, FitVariant::Slow, 3).unwrap();
        assert!(slow_2n >= slow_n);
    }
}
