use std::fs;
use std::io::Write;
use std::ops::RangeInclusive;

use lcda::classify::{fit_lda_from_stats, fit_qda_from_stats, lcda_from_fit, RefitMode};
use lcda::select::{fit_k, select_k};
use lcda::sim::{run_grid, Experiment, NiMode, SimDesign, TrialOutcome};
use lcda::{
    compute_class_stats, evaluate_heldout, evaluate_loocv, ClassStats, DfMode, EMConfig, Error,
    FitResult, Fitter, Variant,
};
use serde::Deserialize;

use crate::error::CliError;
use crate::io::{self, fmt_f64, fmt_opt, fmt_opt_f64};
use crate::model_file::{FitSummary, ModelFile, Provenance};
use crate::{
    DfModeArg, EmArgs, EvaluateArgs, ExperimentArg, FitArgs, MethodArg, PredictArgs, Protocol,
    RefitArg, SimulateArgs, VariantArg,
};

fn tool() -> String {
    format!("lcda {}", env!("CARGO_PKG_VERSION"))
}

pub fn parse_range(s: &str) -> Result<RangeInclusive<usize>, CliError> {
    let bad = || CliError::Input(format!("invalid k range `{s}`, expected LO..HI"));
    let (lo, hi) = s
        .split_once("..=")
        .or_else(|| s.split_once(".."))
        .or_else(|| s.split_once('-'))
        .ok_or_else(bad)?;
    let lo: usize = lo.trim().parse().map_err(|_| bad())?;
    let hi: usize = hi.trim().parse().map_err(|_| bad())?;
    if lo == 0 || lo > hi {
        return Err(bad());
    }
    Ok(lo..=hi)
}

fn em_config(a: &EmArgs, k: usize) -> EMConfig {
    EMConfig {
        k,
        epsilon: a.epsilon,
        max_iter: a.max_iter,
        variant: match a.variant {
            VariantArg::Auto => Variant::Auto,
            VariantArg::Normal => Variant::Normal,
            VariantArg::Wishart => Variant::Wishart,
            VariantArg::SingularWishart => Variant::SingularWishart,
        },
        df_mode: a.df_mode.map(|d| match d {
            DfModeArg::N => DfMode::N,
            DfModeArg::NMinus1 => DfMode::NMinus1,
        }),
        ridge: a.ridge,
        seed: a.seed,
    }
}

fn summary(fit: &FitResult, k: usize) -> FitSummary {
    FitSummary {
        k,
        loglik: fit.loglik(),
        bic: fit.bic,
        n_iter: fit.n_iter,
        converged: fit.converged,
        variant: fit.variant,
    }
}

/// Fit at a fixed `k`, or select `k` by BIC printing the grid.
fn lcda_fit(
    stats: &[ClassStats],
    k: Option<usize>,
    select: Option<&str>,
    em: &EmArgs,
    out: &mut dyn Write,
) -> Result<(FitResult, usize), CliError> {
    match (k, select) {
        (Some(k), _) => {
            let fit = fit_k(stats, k, &em_config(em, k))?;
            Ok((fit, k))
        }
        (None, Some(range)) => {
            let range = parse_range(range)?;
            let grid = select_k(stats, range, &em_config(em, 1))?;
            writeln!(out, "k\tbic\tloglik\titerations\tstatus")?;
            for r in &grid.records {
                match (&r.fit, &r.error) {
                    (Some(f), _) => writeln!(
                        out,
                        "{}\t{:.4}\t{:.4}\t{}\t{}",
                        r.k,
                        r.bic,
                        f.loglik(),
                        f.n_iter,
                        if f.converged { "ok" } else { "max-iter" }
                    )?,
                    (None, e) => writeln!(out, "{}\tinf\tNA\tNA\tfailed: {}", r.k, fmt_opt(e.as_ref()))?,
                }
            }
            writeln!(out, "selected k = {}", grid.selected_k)?;
            let k = grid.selected_k;
            Ok((grid.selected_fit().clone(), k))
        }
        (None, None) => Err(CliError::Input("LCDA needs --k or --select-k".into())),
    }
}

pub fn fit(a: FitArgs) -> Result<(), CliError> {
    let data = io::read_labeled(&a.data, a.group_mean.as_deref())?;
    let stats = compute_class_stats(&data.dataset)?;
    let mut stdout = std::io::stdout().lock();
    let mut provenance = Provenance {
        tool: tool(),
        seed: a.em.seed,
        config: None,
        data_fingerprint: data.fingerprint.clone(),
        group_mean: a.group_mean.clone(),
    };
    writeln!(
        stdout,
        "data: {} classes, {} observations, p = {}",
        stats.len(),
        data.dataset.total_observations(),
        data.dataset.dim()
    )?;
    let (model, fit_summary) = match a.method {
        MethodArg::Lda => (fit_lda_from_stats(&stats)?, None),
        MethodArg::Qda => (fit_qda_from_stats(&stats)?, None),
        MethodArg::Lcda => {
            let (fit, k) = lcda_fit(&stats, a.k, a.select_k.as_deref(), &a.em, &mut stdout)?;
            provenance.config = Some(em_config(&a.em, k));
            let s = summary(&fit, k);
            writeln!(
                stdout,
                "k = {k}, loglik = {:.6}, BIC = {}, iterations = {}{}",
                s.loglik,
                fmt_opt(s.bic.map(|b| format!("{b:.6}"))),
                s.n_iter,
                if s.converged { "" } else { " (max-iter reached)" }
            )?;
            (lcda_from_fit(&stats, fit, a.use_adjusted)?, Some(s))
        }
    };
    let mut file = ModelFile::from_model(&model, fit_summary, provenance);
    file.feature_names = Some(data.feature_names);
    file.save(&a.out)?;
    writeln!(stdout, "wrote {}", a.out.display())?;
    Ok(())
}

pub fn predict(a: PredictArgs) -> Result<(), CliError> {
    let model = ModelFile::load(&a.model)?.to_model()?;
    let queries = io::read_queries(&a.queries, model.dim())?;
    let top = a.top.clamp(1, model.n_classes());
    let mut w = csv::Writer::from_writer(io::output(a.out.as_deref())?);
    let mut header = vec!["query_id".to_string(), "predicted_class".to_string()];
    header.extend((1..=top).map(|i| format!("log_score_top{i}")));
    w.write_record(&header)?;
    for (id, y) in &queries {
        let pred = model.predict(y)?;
        let mut row = vec![id.clone(), pred.class_id.clone()];
        row.extend(pred.ranking().into_iter().take(top).map(|i| fmt_f64(pred.scores[i])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn method_name(m: MethodArg, adjusted: bool) -> &'static str {
    match (m, adjusted) {
        (MethodArg::Lcda, true) => "lcda_adjusted",
        (MethodArg::Lcda, false) => "lcda",
        (MethodArg::Lda, _) => "lda",
        (MethodArg::Qda, _) => "qda",
    }
}

pub fn evaluate(a: EvaluateArgs) -> Result<(), CliError> {
    let data = io::read_labeled(&a.data, a.group_mean.as_deref())?;
    let ds = &data.dataset;
    let k = if a.methods.contains(&MethodArg::Lcda) {
        let stats = compute_class_stats(ds)?;
        let mut log = std::io::stderr().lock();
        Some(lcda_fit(&stats, a.k, a.select_k.as_deref(), &a.em, &mut log)?.1)
    } else {
        None
    };
    let mut w = csv::Writer::from_writer(io::output(a.out.as_deref())?);
    w.write_record(["record_type", "method", "item", "value"])?;
    for &m in &a.methods {
        let name = method_name(m, a.use_adjusted);
        let fitter = match m {
            MethodArg::Lda => Fitter::Lda,
            MethodArg::Qda => Fitter::Qda,
            MethodArg::Lcda => {
                let k = k.expect("k resolved for lcda");
                Fitter::Lcda {
                    k,
                    config: em_config(&a.em, k),
                    use_adjusted: a.use_adjusted,
                    refit: match a.refit {
                        RefitArg::PerFold => RefitMode::PerFold,
                        RefitArg::None => RefitMode::None,
                    },
                }
            }
        };
        match a.protocol {
            Protocol::Loocv => match evaluate_loocv(ds, &fitter) {
                Ok(r) => {
                    w.write_record(["overall", name, "accuracy", &fmt_f64(r.overall)])?;
                    w.write_record(["folds", name, "skipped", &r.skipped.to_string()])?;
                    w.write_record(["folds", name, "failed", &r.failed.to_string()])?;
                    for c in &r.per_class {
                        w.write_record(["class_rate", name, &c.class_id, &fmt_f64(c.rate())])?;
                    }
                    for (rate, count) in r.histogram() {
                        w.write_record(["rate_histogram", name, &fmt_f64(rate), &count.to_string()])?;
                    }
                    if r.skipped + r.failed > 0 {
                        eprintln!(
                            "warning: {name}: {} folds skipped, {} folds failed to fit",
                            r.skipped, r.failed
                        );
                    }
                }
                Err(e @ Error::QdaInfeasible { .. }) => {
                    eprintln!("warning: {name}: {e}; reported as NA");
                    w.write_record(["overall", name, "accuracy", "NA"])?;
                }
                Err(e) => return Err(e.into()),
            },
            Protocol::Heldout => match evaluate_heldout(ds, a.g, a.repeats, &fitter, a.em.seed) {
                Ok(r) => {
                    for (i, acc) in r.accuracies.iter().enumerate() {
                        w.write_record(["repeat", name, &(i + 1).to_string(), &fmt_f64(*acc)])?;
                    }
                    w.write_record(["overall", name, "mean", &fmt_f64(r.mean)])?;
                    w.write_record(["overall", name, "band_lower", &fmt_f64(r.lower)])?;
                    w.write_record(["overall", name, "band_upper", &fmt_f64(r.upper)])?;
                }
                Err(e @ Error::QdaInfeasible { .. }) => {
                    eprintln!("warning: {name}: {e}; reported as NA");
                    w.write_record(["overall", name, "mean", "NA"])?;
                }
                Err(e) => return Err(e.into()),
            },
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SimConfigFile {
    experiment: Option<Experiment>,
    #[serde(default)]
    design: Vec<SimDesign>,
}

fn designs_from_args(a: &SimulateArgs) -> Result<(Option<Experiment>, Vec<SimDesign>), CliError> {
    let (experiment, mut designs) = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            let cfg: SimConfigFile =
                toml::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            (cfg.experiment, cfg.design)
        }
        None => (None, vec![SimDesign::default()]),
    };
    if designs.is_empty() {
        return Err(CliError::Input("config holds no [[design]] tables".into()));
    }
    let ni_mode = match (&a.ni_mode, a.ni) {
        (Some(s), _) => Some(s.parse::<NiMode>()?),
        (None, Some(n)) => Some(NiMode::Fixed(n)),
        (None, None) => None,
    };
    for d in &mut designs {
        macro_rules! set {
            ($field:ident, $val:expr) => {
                if let Some(v) = $val {
                    d.$field = v;
                }
            };
        }
        set!(p, a.p);
        set!(k, a.k);
        set!(n, a.n);
        set!(ni_mode, ni_mode);
        set!(reps, a.reps);
        set!(seed, a.seed);
        set!(hypercube_side, a.hypercube_side);
        if let Some(r) = &a.eig_range {
            d.eig_range = (r[0], r[1]);
        }
        if a.k_max.is_some() {
            d.k_max = a.k_max;
        }
        d.validate()?;
    }
    Ok((experiment, designs))
}

/// Columns of the `simulate` table, in order. Fields that do not apply to
/// the chosen experiment are `NA`; `error` is empty unless the trial failed.
/// Accuracy columns are test-set rates over `n_test` draws per class and the
/// odds ratios compare error rates, clamped away from 0 and 1 when a rate
/// hits the boundary (`or_clamped`). Bias columns are relative Frobenius
/// errors of the matched MLE and adjusted covariances.
pub const SIM_COLUMNS: &[&str] = &[
    "design",
    "rep",
    "experiment",
    "p",
    "k",
    "n",
    "ni_mode",
    "k_hat",
    "k_true_minus_k_hat",
    "ari",
    "n_iter",
    "acc_lcda",
    "acc_lcda_adjusted",
    "acc_lda",
    "acc_qda",
    "n_test",
    "or_lcda_lda",
    "or_lcda_qda",
    "or_adjusted_mle",
    "or_clamped",
    "bias_mle_max",
    "bias_adjusted_max",
    "bias_mle_mean",
    "bias_adjusted_mean",
    "trace_ordered",
    "error",
];

fn sim_row(r: &TrialOutcome) -> Vec<String> {
    let acc = r.accuracies.as_ref();
    let bias = r.bias.as_ref();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let clamped = acc.map(|a| {
        a.or_lcda_lda().clamped || a.or_adjusted_mle().clamped || a.or_lcda_qda().is_some_and(|o| o.clamped)
    });
    vec![
        r.design_index.to_string(),
        r.rep.to_string(),
        r.experiment.as_str().to_string(),
        r.p.to_string(),
        r.k.to_string(),
        r.n.to_string(),
        r.ni_mode.clone(),
        fmt_opt(r.k_hat),
        fmt_opt(r.k_error()),
        fmt_opt_f64(r.ari),
        fmt_opt(r.n_iter),
        fmt_opt_f64(acc.map(|a| a.lcda)),
        fmt_opt_f64(acc.map(|a| a.lcda_adjusted)),
        fmt_opt_f64(acc.map(|a| a.lda)),
        fmt_opt_f64(acc.and_then(|a| a.qda)),
        fmt_opt(acc.map(|a| a.n_test)),
        fmt_opt_f64(acc.map(|a| a.or_lcda_lda().value)),
        fmt_opt_f64(acc.and_then(|a| a.or_lcda_qda()).map(|o| o.value)),
        fmt_opt_f64(acc.map(|a| a.or_adjusted_mle().value)),
        fmt_opt(clamped),
        fmt_opt_f64(bias.map(|b| max(&b.mle))),
        fmt_opt_f64(bias.map(|b| max(&b.adjusted))),
        fmt_opt_f64(bias.map(|b| mean(&b.mle))),
        fmt_opt_f64(bias.map(|b| mean(&b.adjusted))),
        fmt_opt(bias.map(|b| b.trace_ordered)),
        r.error.clone().unwrap_or_default(),
    ]
}

pub fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    let (from_file, designs) = designs_from_args(&a)?;
    let experiment = match (a.experiment, from_file) {
        (Some(e), _) => match e {
            ExperimentArg::Ari => Experiment::Ari,
            ExperimentArg::Bic => Experiment::Bic,
            ExperimentArg::Accuracy => Experiment::Accuracy,
            ExperimentArg::Bias => Experiment::Bias,
        },
        (None, Some(e)) => e,
        (None, None) => return Err(CliError::Input("choose an --experiment".into())),
    };
    let rows = run_grid(&designs, experiment)?;
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        eprintln!("warning: {failed} of {} trials failed; see the error column", rows.len());
    }
    let mut w = csv::Writer::from_writer(io::output(a.out.as_deref())?);
    w.write_record(SIM_COLUMNS)?;
    for r in &rows {
        w.write_record(sim_row(r))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(parse_range("1..8").unwrap(), 1..=8);
        assert_eq!(parse_range("2..=5").unwrap(), 2..=5);
        assert_eq!(parse_range("3-4").unwrap(), 3..=4);
        assert!(parse_range("0..3").is_err());
        assert!(parse_range("5..2").is_err());
        assert!(parse_range("x").is_err());
    }

    #[test]
    fn sim_columns_match_rows() {
        let d = SimDesign {
            p: 2,
            k: 1,
            n: 6,
            reps: 1,
            ..Default::default()
        };
        let rows = run_grid(&[d], Experiment::Accuracy).unwrap();
        assert_eq!(sim_row(&rows[0]).len(), SIM_COLUMNS.len());
    }
}
