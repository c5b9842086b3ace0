//! Simulation harness: random latent-covariance models, sampled datasets,
//! clustering and classification scores.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{fit_lda_from_stats, fit_qda_from_stats, lcda_from_fit, ClassifierModel};
use crate::em::{map_assign, run_em, EMConfig, FitResult};
use crate::error::{Error, Result};
use crate::init::init_hierarchical;
use crate::linalg::SpdFactor;
use crate::select::select_k;
use crate::stats::{compute_class_stats, ClassBlock, ClassStats, LabeledDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NiMode {
    /// `⌈p/2⌉` observations per class (at least 2).
    HalfP,
    /// Uniform integer on `[⌈p/2⌉, 2p]` per class.
    UniformHalfPTo2P,
    TwiceP,
    Fixed(usize),
}

impl NiMode {
    pub fn label(&self) -> String {
        match self {
            NiMode::HalfP => "half_p".into(),
            NiMode::UniformHalfPTo2P => "uniform_half_p_to_2p".into(),
            NiMode::TwiceP => "twice_p".into(),
            NiMode::Fixed(n) => format!("fixed_{n}"),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, p: usize, rng: &mut R) -> usize {
        let half = p.div_ceil(2).max(2);
        match *self {
            NiMode::HalfP => half,
            NiMode::UniformHalfPTo2P => rng.random_range(half..=(2 * p).max(half)),
            NiMode::TwiceP => 2 * p,
            NiMode::Fixed(n) => n,
        }
    }
}

impl std::str::FromStr for NiMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "half_p" => Ok(NiMode::HalfP),
            "uniform_half_p_to_2p" | "uniform" => Ok(NiMode::UniformHalfPTo2P),
            "twice_p" => Ok(NiMode::TwiceP),
            other => other
                .parse::<usize>()
                .map(NiMode::Fixed)
                .map_err(|_| Error::Domain(format!("unknown n_i mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimDesign {
    pub p: usize,
    pub k: usize,
    pub n: usize,
    pub ni_mode: NiMode,
    pub reps: usize,
    pub seed: u64,
    pub hypercube_side: f64,
    pub eig_range: (f64, f64),
    /// Largest `k` tried by the BIC experiment; defaults to `max(2k, k + 3)`.
    pub k_max: Option<usize>,
}

impl Default for SimDesign {
    fn default() -> Self {
        Self {
            p: 4,
            k: 2,
            n: 100,
            ni_mode: NiMode::TwiceP,
            reps: 10,
            seed: 0,
            hypercube_side: 10.0,
            eig_range: (0.5, 3.0),
            k_max: None,
        }
    }
}

impl SimDesign {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Domain(m));
        if self.p == 0 || self.k == 0 || self.reps == 0 {
            return bad("p, k and reps must be positive".into());
        }
        if self.k > self.n {
            return bad(format!("k = {} exceeds the class count {}", self.k, self.n));
        }
        let (lo, hi) = self.eig_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return bad(format!("invalid eigenvalue range ({lo}, {hi})"));
        }
        if !(self.hypercube_side >= 0.0 && self.hypercube_side.is_finite()) {
            return bad("hypercube side must be finite and non-negative".into());
        }
        if let NiMode::Fixed(m) = self.ni_mode {
            if m < 2 {
                return bad("every class needs at least 2 observations".into());
            }
        }
        Ok(())
    }

    pub fn k_max(&self) -> usize {
        self.k_max
            .unwrap_or((2 * self.k).max(self.k + 3))
            .min(self.n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimModel {
    pub means: Vec<DVector<f64>>,
    pub covariances: Vec<DMatrix<f64>>,
    /// Latent component of each class.
    pub labels: Vec<usize>,
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with the
/// signs of `R`'s diagonal folded into `Q`).
pub fn random_orthogonal<R: Rng + ?Sized>(p: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..p {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

fn log_uniform<R: Rng + ?Sized>((lo, hi): (f64, f64), rng: &mut R) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo.ln()..hi.ln()).exp()
    }
}

pub fn generate_model<R: Rng + ?Sized>(design: &SimDesign, rng: &mut R) -> Result<SimModel> {
    design.validate()?;
    let p = design.p;
    let side = design.hypercube_side;
    let covariances = (0..design.k)
        .map(|_| {
            let q = random_orthogonal(p, rng);
            let lambda = DVector::from_fn(p, |_, _| log_uniform(design.eig_range, rng));
            let mut s = &q * DMatrix::from_diagonal(&lambda) * q.transpose();
            crate::linalg::symmetrize(&mut s);
            s
        })
        .collect();
    // Means after covariances so a seed keeps its Σ_k when only n changes.
    let means = (0..design.n)
        .map(|_| DVector::from_fn(p, |_, _| rng.random::<f64>() * side))
        .collect();
    let labels = (0..design.n).map(|_| rng.random_range(0..design.k)).collect();
    Ok(SimModel {
        means,
        covariances,
        labels,
    })
}

/// One draw from `N(μ_i, Σ_{z_i})` per class, used as an independent test set.
pub fn sample_test_points<R: Rng + ?Sized>(model: &SimModel, rng: &mut R) -> Result<Vec<DVector<f64>>> {
    let lowers = lower_factors(model)?;
    Ok(model
        .means
        .iter()
        .zip(&model.labels)
        .map(|(mu, &z)| draw_normal(mu, &lowers[z], rng))
        .collect())
}

fn lower_factors(model: &SimModel) -> Result<Vec<DMatrix<f64>>> {
    model
        .covariances
        .iter()
        .map(|s| SpdFactor::new(s).map(|f| f.lower()))
        .collect()
}

fn draw_normal<R: Rng + ?Sized>(mu: &DVector<f64>, lower: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    let z = DVector::from_fn(mu.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    mu + lower * z
}

/// Sample every class's observations. Class ids are `"0"`, `"1"`, … in
/// model order.
pub fn sample_dataset<R: Rng + ?Sized>(
    model: &SimModel,
    design: &SimDesign,
    rng: &mut R,
) -> Result<LabeledDataset> {
    let lowers = lower_factors(model)?;
    let p = design.p;
    let blocks = model
        .means
        .iter()
        .zip(&model.labels)
        .enumerate()
        .map(|(i, (mu, &z))| {
            let ni = design.ni_mode.draw(p, rng);
            let mut obs = DMatrix::zeros(ni, p);
            for j in 0..ni {
                obs.set_row(j, &draw_normal(mu, &lowers[z], rng).transpose());
            }
            ClassBlock::new(i.to_string(), obs)
        })
        .collect();
    LabeledDataset::new(p, blocks)
}

fn choose2(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Pair-counting adjusted Rand index. Returns 1 when both partitions are
/// trivial in the same way (the index is otherwise undefined there).
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Domain(format!(
            "label vectors have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let mut table: HashMap<(usize, usize), usize> = HashMap::new();
    let mut rows: HashMap<usize, usize> = HashMap::new();
    let mut cols: HashMap<usize, usize> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sa: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sb: f64 = cols.values().map(|&c| choose2(c)).sum();
    let total = choose2(a.len());
    let expected = if total > 0.0 { sa * sb / total } else { 0.0 };
    let max = 0.5 * (sa + sb);
    if (max - expected).abs() < 1e-12 {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OddsRatio {
    pub value: f64,
    /// Whether either accuracy had to be pulled off 0 or 1.
    pub clamped: bool,
}

/// `[a₁/(1−a₁)] / [a₂/(1−a₂)]` after clamping both accuracies into
/// `[1/(2N), 1 − 1/(2N)]` for a test set of size `N`.
pub fn odds_ratio(acc1: f64, acc2: f64, n_test: usize) -> OddsRatio {
    let eps = 0.5 / n_test.max(1) as f64;
    let clamp = |a: f64| a.clamp(eps, 1.0 - eps);
    let (c1, c2) = (clamp(acc1), clamp(acc2));
    OddsRatio {
        value: (c1 / (1.0 - c1)) / (c2 / (1.0 - c2)),
        clamped: c1 != acc1 || c2 != acc2,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Ari,
    Bic,
    Accuracy,
    Bias,
}

impl Experiment {
    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::Ari => "ari",
            Experiment::Bic => "bic",
            Experiment::Accuracy => "accuracy",
            Experiment::Bias => "bias",
        }
    }
}

impl std::str::FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ari" => Ok(Experiment::Ari),
            "bic" => Ok(Experiment::Bic),
            "accuracy" => Ok(Experiment::Accuracy),
            "bias" => Ok(Experiment::Bias),
            other => Err(Error::Domain(format!("unknown experiment `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Accuracies {
    pub lcda: f64,
    pub lcda_adjusted: f64,
    pub lda: f64,
    /// `None` when some class has `n_i − 1 < p`.
    pub qda: Option<f64>,
    pub n_test: usize,
}

impl Accuracies {
    pub fn or_lcda_lda(&self) -> OddsRatio {
        odds_ratio(self.lcda, self.lda, self.n_test)
    }

    pub fn or_lcda_qda(&self) -> Option<OddsRatio> {
        self.qda.map(|q| odds_ratio(self.lcda, q, self.n_test))
    }

    pub fn or_adjusted_mle(&self) -> OddsRatio {
        odds_ratio(self.lcda_adjusted, self.lcda, self.n_test)
    }
}

/// Relative Frobenius errors per true component after matching.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BiasErrors {
    /// `‖Σ̂ − ((n_i−1)/n_i) Σ‖ / ‖Σ‖`.
    pub mle: Vec<f64>,
    /// `‖Σ̃ − Σ‖ / ‖Σ‖`.
    pub adjusted: Vec<f64>,
    /// `tr Σ̂ < tr Σ̃` for every component.
    pub trace_ordered: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub design_index: usize,
    pub rep: usize,
    pub experiment: Experiment,
    pub p: usize,
    pub k: usize,
    pub n: usize,
    pub ni_mode: String,
    pub k_hat: Option<usize>,
    pub ari: Option<f64>,
    pub n_iter: Option<usize>,
    pub accuracies: Option<Accuracies>,
    pub bias: Option<BiasErrors>,
    pub error: Option<String>,
}

impl TrialOutcome {
    pub fn k_error(&self) -> Option<i64> {
        self.k_hat.map(|h| self.k as i64 - h as i64)
    }
}

/// RNG for one trial, independent of scheduling.
pub fn trial_rng(seed: u64, design_index: usize, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((design_index as u64) << 32) | rep as u64);
    rng
}

/// Permutation `perm` with `estimated[perm[k]]` matched to `truth[k]`,
/// minimizing the summed relative Frobenius distance.
pub fn match_components(estimated: &[DMatrix<f64>], truth: &[DMatrix<f64>]) -> Vec<usize> {
    let k = truth.len();
    let cost: Vec<Vec<f64>> = truth
        .iter()
        .map(|t| estimated.iter().map(|e| (e - t).norm() / t.norm()).collect())
        .collect();
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = perm.clone();
    let mut best_cost = f64::INFINITY;
    permute(&mut perm, 0, &mut |p| {
        let c: f64 = p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        if c < best_cost {
            best_cost = c;
            best.copy_from_slice(p);
        }
    });
    best
}

fn permute(v: &mut [usize], start: usize, f: &mut impl FnMut(&[usize])) {
    if start == v.len() {
        f(v);
        return;
    }
    for i in start..v.len() {
        v.swap(start, i);
        permute(v, start + 1, f);
        v.swap(start, i);
    }
}

fn fit_true_k(stats: &[ClassStats], k: usize) -> Result<FitResult> {
    let init = init_hierarchical(stats, k)?;
    run_em(stats, &init, &EMConfig::with_k(k))
}

fn accuracy(model: &ClassifierModel, tests: &[DVector<f64>]) -> Result<f64> {
    let mut correct = 0usize;
    for (i, y) in tests.iter().enumerate() {
        correct += (model.predict(y)?.class_index == i) as usize;
    }
    Ok(correct as f64 / tests.len() as f64)
}

fn bias_errors(fit: &FitResult, model: &SimModel, stats: &[ClassStats]) -> BiasErrors {
    let truth = &model.covariances;
    let perm = match_components(&fit.adjusted_covariances, truth);
    let ni = stats[0].count as f64;
    let shrink = (ni - 1.0) / ni;
    let mut out = BiasErrors {
        trace_ordered: true,
        ..Default::default()
    };
    for (k, t) in truth.iter().enumerate() {
        let mle = &fit.params.covariances()[perm[k]];
        let adj = &fit.adjusted_covariances[perm[k]];
        out.mle.push((mle - t * shrink).norm() / t.norm());
        out.adjusted.push((adj - t).norm() / t.norm());
        out.trace_ordered &= mle.trace() < adj.trace();
    }
    out
}

fn run_trial(design: &SimDesign, design_index: usize, rep: usize, experiment: Experiment) -> TrialOutcome {
    let mut out = TrialOutcome {
        design_index,
        rep,
        experiment,
        p: design.p,
        k: design.k,
        n: design.n,
        ni_mode: design.ni_mode.label(),
        k_hat: None,
        ari: None,
        n_iter: None,
        accuracies: None,
        bias: None,
        error: None,
    };
    if let Err(e) = trial_body(design, design_index, rep, experiment, &mut out) {
        out.error = Some(e.to_string());
    }
    out
}

fn trial_body(
    design: &SimDesign,
    design_index: usize,
    rep: usize,
    experiment: Experiment,
    out: &mut TrialOutcome,
) -> Result<()> {
    let mut rng = trial_rng(design.seed, design_index, rep);
    let model = generate_model(design, &mut rng)?;
    let data = sample_dataset(&model, design, &mut rng)?;
    let stats = compute_class_stats(&data)?;
    match experiment {
        Experiment::Ari => {
            let fit = fit_true_k(&stats, design.k)?;
            out.n_iter = Some(fit.n_iter);
            out.ari = Some(adjusted_rand_index(&map_assign(&fit.tau), &model.labels)?);
        }
        Experiment::Bic => {
            let grid = select_k(&stats, 1..=design.k_max(), &EMConfig::default())?;
            let fit = grid.selected_fit();
            out.k_hat = Some(grid.selected_k);
            out.n_iter = Some(fit.n_iter);
            out.ari = Some(adjusted_rand_index(&map_assign(&fit.tau), &model.labels)?);
        }
        Experiment::Accuracy => {
            let tests = sample_test_points(&model, &mut rng)?;
            let fit = fit_true_k(&stats, design.k)?;
            out.n_iter = Some(fit.n_iter);
            out.ari = Some(adjusted_rand_index(&map_assign(&fit.tau), &model.labels)?);
            let mle = lcda_from_fit(&stats, fit.clone(), false)?;
            let adj = lcda_from_fit(&stats, fit, true)?;
            let lda = fit_lda_from_stats(&stats)?;
            let qda = match fit_qda_from_stats(&stats) {
                Ok(m) => Some(accuracy(&m, &tests)?),
                Err(Error::QdaInfeasible { .. }) => None,
                Err(e) => return Err(e),
            };
            out.accuracies = Some(Accuracies {
                lcda: accuracy(&mle, &tests)?,
                lcda_adjusted: accuracy(&adj, &tests)?,
                lda: accuracy(&lda, &tests)?,
                qda,
                n_test: tests.len(),
            });
        }
        Experiment::Bias => {
            let fit = fit_true_k(&stats, design.k)?;
            out.n_iter = Some(fit.n_iter);
            out.ari = Some(adjusted_rand_index(&map_assign(&fit.tau), &model.labels)?);
            out.bias = Some(bias_errors(&fit, &model, &stats));
        }
    }
    Ok(())
}

/// Run every `(design, rep)` trial of one experiment. Trials run in
/// parallel; the output is ordered by design then rep. Per-trial failures
/// become error tags on the row.
pub fn run_grid(designs: &[SimDesign], experiment: Experiment) -> Result<Vec<TrialOutcome>> {
    for d in designs {
        d.validate()?;
        if experiment == Experiment::Bias && !matches!(d.ni_mode, NiMode::Fixed(_) | NiMode::HalfP | NiMode::TwiceP) {
            return Err(Error::Domain("the bias experiment needs equal class sizes".into()));
        }
    }
    let jobs: Vec<(usize, usize)> = designs
        .iter()
        .enumerate()
        .flat_map(|(d, des)| (0..des.reps).map(move |r| (d, r)))
        .collect();
    Ok(jobs
        .par_iter()
        .map(|&(d, r)| run_trial(&designs[d], d, r, experiment))
        .collect())
}
