use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{
    fit_lcda_from_stats, fit_lda_from_stats, fit_qda_from_stats, ClassifierModel, ModelParams,
};
use crate::em::{EMConfig, FitResult};
use crate::error::{Error, Result};
use crate::init::init_hierarchical;
use crate::stats::{compute_class_stats, ClassBlock, ClassStats, LabeledDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RefitMode {
    /// Rerun EM in every fold, warm-started from the full-data solution.
    #[default]
    PerFold,
    /// Keep the full-data mixture and τ, only the class means change.
    None,
}

impl std::str::FromStr for RefitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-fold" | "per_fold" => Ok(RefitMode::PerFold),
            "none" => Ok(RefitMode::None),
            other => Err(Error::Domain(format!("unknown refit mode `{other}`"))),
        }
    }
}

/// How to build a classifier from training data.
#[derive(Debug, Clone, PartialEq)]
pub enum Fitter {
    Lcda {
        k: usize,
        config: EMConfig,
        use_adjusted: bool,
        refit: RefitMode,
    },
    Lda,
    Qda,
}

impl Fitter {
    pub fn lcda(k: usize, use_adjusted: bool) -> Self {
        Fitter::Lcda {
            k,
            config: EMConfig::with_k(k),
            use_adjusted,
            refit: RefitMode::PerFold,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Fitter::Lcda { use_adjusted: true, .. } => "lcda_adjusted",
            Fitter::Lcda { .. } => "lcda",
            Fitter::Lda => "lda",
            Fitter::Qda => "qda",
        }
    }

    pub fn fit_stats(&self, stats: &[ClassStats]) -> Result<ClassifierModel> {
        Ok(self.fit_stats_full(stats)?.0)
    }

    fn fit_stats_full(&self, stats: &[ClassStats]) -> Result<(ClassifierModel, Option<FitResult>)> {
        match self {
            Fitter::Lcda {
                k,
                config,
                use_adjusted,
                ..
            } => {
                let cfg = EMConfig {
                    k: *k,
                    ..config.clone()
                };
                let init = init_hierarchical(stats, *k)?;
                let (m, fit) = fit_lcda_from_stats(stats, &init, &cfg, *use_adjusted)?;
                Ok((m, Some(fit)))
            }
            Fitter::Lda => Ok((fit_lda_from_stats(stats)?, None)),
            Fitter::Qda => Ok((fit_qda_from_stats(stats)?, None)),
        }
    }

    pub fn fit(&self, dataset: &LabeledDataset) -> Result<ClassifierModel> {
        self.fit_stats(&compute_class_stats(dataset)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassRate {
    pub class_id: String,
    pub correct: usize,
    pub total: usize,
}

impl ClassRate {
    pub fn rate(&self) -> f64 {
        if self.total == 0 {
            f64::NAN
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoocvResult {
    pub per_class: Vec<ClassRate>,
    pub overall: f64,
    /// Folds dropped because the held-out class would keep a single observation.
    pub skipped: usize,
    /// Folds whose refit failed; they are not scored.
    pub failed: usize,
}

impl LoocvResult {
    /// `(rate, number of classes)` pairs sorted by rate.
    pub fn histogram(&self) -> Vec<(f64, usize)> {
        let mut rates: Vec<f64> = self
            .per_class
            .iter()
            .filter(|c| c.total > 0)
            .map(ClassRate::rate)
            .collect();
        rates.sort_by(f64::total_cmp);
        let mut out: Vec<(f64, usize)> = Vec::new();
        for r in rates {
            match out.last_mut() {
                Some((v, c)) if (*v - r).abs() < 1e-12 => *c += 1,
                _ => out.push((r, 1)),
            }
        }
        out
    }
}

enum FoldOutcome {
    Correct(bool),
    Skipped,
    Failed,
}

fn without_row(obs: &DMatrix<f64>, j: usize) -> DMatrix<f64> {
    obs.clone().remove_row(j)
}

fn fold_model(
    fitter: &Fitter,
    full: &(ClassifierModel, Option<FitResult>),
    fold: &[ClassStats],
) -> Result<ClassifierModel> {
    match (fitter, full) {
        (
            Fitter::Lcda {
                k,
                config,
                use_adjusted,
                refit,
            },
            (model, Some(fit)),
        ) => match refit {
            RefitMode::PerFold => {
                let cfg = EMConfig {
                    k: *k,
                    ..config.clone()
                };
                Ok(fit_lcda_from_stats(fold, &fit.params, &cfg, *use_adjusted)?.0)
            }
            RefitMode::None => {
                let ModelParams::Lcda(p) = model.params() else {
                    unreachable!("lcda fitter builds lcda models")
                };
                ClassifierModel::lcda_from_parts(
                    model.class_ids().to_vec(),
                    fold.iter().map(|s| s.mean.clone()).collect(),
                    p.clone(),
                )
            }
        },
        _ => fitter.fit_stats(fold),
    }
}

/// Leave-one-out cross-validation over every observation.
pub fn evaluate_loocv(dataset: &LabeledDataset, fitter: &Fitter) -> Result<LoocvResult> {
    let stats = compute_class_stats(dataset)?;
    let full = fitter.fit_stats_full(&stats)?;
    let jobs: Vec<(usize, usize)> = dataset
        .classes()
        .iter()
        .enumerate()
        .flat_map(|(i, b)| (0..b.len()).map(move |j| (i, j)))
        .collect();
    let outcomes: Vec<(usize, FoldOutcome)> = jobs
        .par_iter()
        .map(|&(i, j)| {
            let block = &dataset.classes()[i];
            if block.len() < 3 {
                return (i, FoldOutcome::Skipped);
            }
            let obs = without_row(&block.observations, j);
            let mut fold = stats.clone();
            fold[i] = match ClassStats::from_observations(&block.class_id, &obs) {
                Ok(s) => s,
                Err(_) => return (i, FoldOutcome::Failed),
            };
            let y = dataset.observation(i, j);
            let outcome = match fold_model(fitter, &full, &fold).and_then(|m| m.predict(&y)) {
                Ok(pred) => FoldOutcome::Correct(pred.class_index == i),
                Err(_) => FoldOutcome::Failed,
            };
            (i, outcome)
        })
        .collect();

    let mut per_class: Vec<ClassRate> = dataset
        .classes()
        .iter()
        .map(|b| ClassRate {
            class_id: b.class_id.clone(),
            correct: 0,
            total: 0,
        })
        .collect();
    let (mut skipped, mut failed) = (0, 0);
    for (i, o) in outcomes {
        match o {
            FoldOutcome::Correct(c) => {
                per_class[i].total += 1;
                per_class[i].correct += c as usize;
            }
            FoldOutcome::Skipped => skipped += 1,
            FoldOutcome::Failed => failed += 1,
        }
    }
    let correct: usize = per_class.iter().map(|c| c.correct).sum();
    let total: usize = per_class.iter().map(|c| c.total).sum();
    Ok(LoocvResult {
        per_class,
        overall: if total == 0 {
            f64::NAN
        } else {
            correct as f64 / total as f64
        },
        skipped,
        failed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeldoutResult {
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

impl HeldoutResult {
    pub fn from_accuracies(accuracies: Vec<f64>) -> Self {
        let r = accuracies.len() as f64;
        let mean = accuracies.iter().sum::<f64>() / r;
        let half = if accuracies.len() > 1 {
            let var = accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (r - 1.0);
            1.96 * var.sqrt() / r.sqrt()
        } else {
            0.0
        };
        Self {
            accuracies,
            mean,
            lower: mean - half,
            upper: mean + half,
        }
    }
}

fn heldout_repeat(
    dataset: &LabeledDataset,
    g: usize,
    fitter: &Fitter,
    seed: u64,
    repeat: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(repeat);
    let mut train = Vec::with_capacity(dataset.n_classes());
    let mut test: Vec<(usize, DVector<f64>)> = Vec::new();
    for (i, b) in dataset.classes().iter().enumerate() {
        let mut held = sample(&mut rng, b.len(), g).into_vec();
        held.sort_unstable();
        let keep: Vec<usize> = (0..b.len()).filter(|j| held.binary_search(j).is_err()).collect();
        train.push(ClassBlock::new(b.class_id.clone(), b.observations.select_rows(&keep)));
        test.extend(held.iter().map(|&j| (i, dataset.observation(i, j))));
    }
    let model = fitter.fit(&LabeledDataset::new(dataset.dim(), train)?)?;
    let mut correct = 0usize;
    for (i, y) in &test {
        correct += (model.predict(y)?.class_index == *i) as usize;
    }
    Ok(correct as f64 / test.len() as f64)
}

/// Remove `g` random observations per class, fit on the rest and score the
/// held-out ones; repeated `repeats` times with independent RNG streams.
pub fn evaluate_heldout(
    dataset: &LabeledDataset,
    g: usize,
    repeats: usize,
    fitter: &Fitter,
    seed: u64,
) -> Result<HeldoutResult> {
    if g == 0 || repeats == 0 {
        return Err(Error::Domain("g and repeats must be positive".into()));
    }
    if let Some(b) = dataset.classes().iter().find(|b| b.len() < g + 2) {
        return Err(Error::Domain(format!(
            "class `{}` has {} observations; holding out {g} must leave at least 2",
            b.class_id,
            b.len()
        )));
    }
    let accuracies = (0..repeats as u64)
        .into_par_iter()
        .map(|r| heldout_repeat(dataset, g, fitter, seed, r))
        .collect::<Result<Vec<f64>>>()?;
    Ok(HeldoutResult::from_accuracies(accuracies))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_dataset(n: usize, ni: usize, spacing: f64) -> LabeledDataset {
        let mut blocks = Vec::new();
        for c in 0..n {
            let mut rows = Vec::new();
            for j in 0..ni {
                let a = j as f64;
                rows.extend([c as f64 * spacing + (a * 0.7).sin(), (a * 1.3).cos() + 0.1 * a]);
            }
            blocks.push(ClassBlock::new(format!("c{c}"), DMatrix::from_row_slice(ni, 2, &rows)));
        }
        LabeledDataset::new(2, blocks).unwrap()
    }

    #[test]
    fn separable_loocv_is_perfect() {
        let ds = grid_dataset(3, 6, 50.0);
        for f in [Fitter::Lda, Fitter::Qda, Fitter::lcda(2, false), Fitter::lcda(1, true)] {
            let r = evaluate_loocv(&ds, &f).unwrap();
            assert_eq!(r.overall, 1.0, "{}", f.name());
            assert_eq!(r.skipped + r.failed, 0);
        }
    }

    #[test]
    fn rates_lie_on_grid() {
        let ds = grid_dataset(5, 4, 1.0);
        let r = evaluate_loocv(&ds, &Fitter::Lda).unwrap();
        for c in &r.per_class {
            assert_eq!(c.total, 4);
            let scaled = c.rate() * 4.0;
            assert!((scaled - scaled.round()).abs() < 1e-12);
        }
        let h: usize = r.histogram().iter().map(|(_, c)| c).sum();
        assert_eq!(h, 5);
    }

    #[test]
    fn refit_none_runs() {
        let ds = grid_dataset(4, 5, 2.0);
        let f = Fitter::Lcda {
            k: 2,
            config: EMConfig::with_k(2),
            use_adjusted: false,
            refit: RefitMode::None,
        };
        let r = evaluate_loocv(&ds, &f).unwrap();
        assert!(r.overall.is_finite());
    }

    #[test]
    fn two_observation_classes_are_skipped() {
        let big = grid_dataset(3, 5, 40.0);
        let mut blocks = big.classes().to_vec();
        blocks.push(ClassBlock::new(
            "pair",
            DMatrix::from_row_slice(2, 2, &[-60.0, 0.0, -59.0, 0.5]),
        ));
        let ds = LabeledDataset::new(2, blocks).unwrap();
        let r = evaluate_loocv(&ds, &Fitter::Lda).unwrap();
        assert_eq!(r.skipped, 2);
        assert_eq!(r.per_class[3].total, 0);
        assert_eq!(r.overall, 1.0);
    }

    #[test]
    fn heldout_separable_has_zero_width_band() {
        let ds = grid_dataset(3, 8, 50.0);
        let r = evaluate_heldout(&ds, 2, 5, &Fitter::Lda, 7).unwrap();
        assert_eq!(r.accuracies.len(), 5);
        assert_eq!(r.mean, 1.0);
        assert_eq!(r.lower, r.upper);
    }

    #[test]
    fn heldout_single_repeat_is_a_point() {
        let ds = grid_dataset(3, 8, 1.0);
        let r = evaluate_heldout(&ds, 2, 1, &Fitter::Lda, 3).unwrap();
        assert_eq!(r.lower, r.mean);
        assert_eq!(r.upper, r.mean);
    }

    #[test]
    fn heldout_is_deterministic() {
        let ds = grid_dataset(4, 8, 0.8);
        let a = evaluate_heldout(&ds, 3, 4, &Fitter::Lda, 11).unwrap();
        let b = evaluate_heldout(&ds, 3, 4, &Fitter::Lda, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn heldout_rejects_large_g() {
        let ds = grid_dataset(2, 4, 1.0);
        assert!(matches!(
            evaluate_heldout(&ds, 3, 2, &Fitter::Lda, 0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn band_formula() {
        let r = HeldoutResult::from_accuracies(vec![0.5, 0.7]);
        let sd = (0.02f64).sqrt();
        assert!((r.upper - 0.6 - 1.96 * sd / 2f64.sqrt()).abs() < 1e-12);
    }
}
