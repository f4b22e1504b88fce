//! Jackknife+ intervals over pre-periods, placebo-in-time runs and
//! robustness variants.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ascm::{
    estimate_effects_with, estimate_pooled_with, AscmContext, AscmFit, EffectSeries, FitProblem, Interval,
};
use crate::config::{StudyConfig, Variant};
use crate::design::Design;
use crate::error::{Error, Result};
use crate::matcher::{match_nearest, MatchResult};
use crate::panel::PanelDataset;

/// Smallest pre-period count accepted by [`jackknife_plus`].
pub const MIN_JACKKNIFE_PRE: usize = 3;

/// Index (1-based, clamped to `n`) of the upper jackknife+ quantile.
pub fn upper_rank(level: u8, n: usize) -> usize {
    let r = (level as u64 * (n as u64 + 1)).div_ceil(100) as usize;
    r.clamp(1, n)
}

/// Leave-one-out quantities for one pre-period.
#[derive(Clone, Debug, PartialEq)]
pub struct LeaveOneOut {
    pub omitted_year: i32,
    pub residual: f64,
    /// Counterfactual predictions for each post-shock year.
    pub predictions: Vec<f64>,
}

/// Refit on every leave-one-pre-period-out subset.
pub fn leave_one_out(problem: &FitProblem) -> Result<Vec<LeaveOneOut>> {
    let pre = problem.pre_indices();
    if pre.len() < MIN_JACKKNIFE_PRE {
        return Err(Error::TooFewPrePeriods {
            required: MIN_JACKKNIFE_PRE,
            available: pre.len(),
        });
    }
    let post = problem.post_indices();
    pre.par_iter()
        .map(|&s| {
            let fit_set: Vec<usize> = pre.iter().copied().filter(|&t| t != s).collect();
            let mut eval = vec![s];
            eval.extend_from_slice(&post);
            let year = problem.first_year + s as i32;
            let core = problem.fit_periods(&fit_set, &eval).map_err(|e| Error::Refit {
                year,
                source: Box::new(e),
            })?;
            let cf = core.eval.counterfactual;
            Ok(LeaveOneOut {
                omitted_year: year,
                residual: problem.target[s] - cf[0],
                predictions: cf[1..].to_vec(),
            })
        })
        .collect()
}

/// Jackknife+ intervals in effect space from leave-one-out quantities.
///
/// For post year t the counterfactual interval is
/// `[q-{cf_-s,t - |r_s|}, q+{cf_-s,t + |r_s|}]` with the upper quantile at
/// rank `ceil(level (n + 1) / 100)` and the lower one symmetric; the effect
/// interval is `[Y_t - hi, Y_t - lo]`, widened if needed to contain the
/// point estimate.
pub fn jackknife_intervals(loo: &[LeaveOneOut], observed: &[f64], point: &[f64], levels: &[u8]) -> Vec<Interval> {
    let n = loo.len();
    let mut levels = levels.to_vec();
    levels.sort_unstable();
    levels.dedup();
    levels
        .iter()
        .map(|&level| {
            let r = upper_rank(level, n);
            let mut lower = Vec::with_capacity(observed.len());
            let mut upper = Vec::with_capacity(observed.len());
            for t in 0..observed.len() {
                let mut lo: Vec<f64> = loo.iter().map(|l| l.predictions[t] - l.residual.abs()).collect();
                let mut hi: Vec<f64> = loo.iter().map(|l| l.predictions[t] + l.residual.abs()).collect();
                lo.sort_by(|a, b| b.total_cmp(a));
                hi.sort_by(|a, b| a.total_cmp(b));
                let cf_lo = lo[r - 1];
                let cf_hi = hi[r - 1];
                lower.push((observed[t] - cf_hi).min(point[t]));
                upper.push((observed[t] - cf_lo).max(point[t]));
            }
            Interval { level, lower, upper }
        })
        .collect()
}

/// Jackknife+ effect intervals for a fitted target at the given levels.
pub fn jackknife_plus(problem: &FitProblem, fit: &AscmFit, levels: &[u8]) -> Result<Vec<Interval>> {
    if let Some(bad) = levels.iter().find(|l| **l == 0 || **l >= 100) {
        return Err(Error::Config(format!("interval level {bad} must be in 1..=99")));
    }
    let loo = leave_one_out(problem)?;
    Ok(jackknife_intervals(&loo, &fit.observed, &fit.effects, levels))
}

/// Pooled and cross-unit mean effects for one pseudo shock year.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaceboRun {
    pub pseudo_shock_year: i32,
    /// Years used in the run (post-shock years are cut at the true shock
    /// when the pseudo year precedes it).
    pub last_year: i32,
    pub pooled: EffectSeries,
    pub cross_unit_mean: EffectSeries,
    pub mean_se: Vec<Option<f64>>,
    /// For pseudo years before the true shock: whether every pre-shock
    /// cross-unit mean effect lies within two standard errors of zero.
    pub indistinguishable_from_zero: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaceboReport {
    pub pseudo_shock_years: Vec<i32>,
    pub runs: Vec<PlaceboRun>,
}

fn within_two_se(mean: &[f64], se: &[Option<f64>]) -> bool {
    mean.iter().zip(se).all(|(m, s)| matches!(s, Some(s) if m.abs() < 2.0 * s))
}

/// The panel a pseudo shock year is evaluated on: shock moved to `pseudo`
/// and, when it precedes the true shock, years from the true shock onward
/// dropped.
pub fn placebo_panel(panel: &PanelDataset, pseudo: i32) -> Result<PanelDataset> {
    let true_shock = panel.shock_year();
    if pseudo <= panel.first_year() + 1 || pseudo > panel.last_year() {
        return Err(Error::Config(format!(
            "pseudo shock year {pseudo} must leave at least 2 pre-periods inside {}..={}",
            panel.first_year(),
            panel.last_year()
        )));
    }
    let moved = panel.with_shock_year(pseudo)?;
    if pseudo < true_shock {
        moved.truncated(true_shock - 1)
    } else {
        Ok(moved)
    }
}

/// Re-run estimation with each pseudo shock year.
pub fn placebo_in_time(
    panel: &PanelDataset,
    design: &Design,
    matches: &MatchResult,
    config: &StudyConfig,
    pseudo_years: &[i32],
) -> Result<PlaceboReport> {
    let panels: Vec<PanelDataset> = pseudo_years
        .iter()
        .map(|&y| placebo_panel(panel, y))
        .collect::<Result<_>>()?;
    let true_shock = panel.shock_year();
    let runs = panels
        .par_iter()
        .zip(pseudo_years.par_iter())
        .map(|(p, &pseudo)| {
            let mut cfg = config.clone();
            cfg.shock_year = pseudo;
            cfg.ci_levels = vec![95];
            let ctx = AscmContext::new(p, design)?;
            let pooled = estimate_pooled_with(p, design, &ctx, matches, &cfg, true)?;
            let units = estimate_effects_with(p, &ctx, matches, (&cfg).into())?;
            let flag = (pseudo < true_shock).then(|| within_two_se(&units.mean.point, &units.mean_se));
            Ok(PlaceboRun {
                pseudo_shock_year: pseudo,
                last_year: p.last_year(),
                pooled: pooled.series,
                cross_unit_mean: units.mean,
                mean_se: units.mean_se,
                indistinguishable_from_zero: flag,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PlaceboReport {
        pseudo_shock_years: pseudo_years.to_vec(),
        runs,
    })
}

pub fn placebo_csv(report: &PlaceboReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["pseudo_shock_year", "year", "effect_pp", "ci95_lo", "ci95_hi"])?;
    for run in &report.runs {
        let s = &run.pooled;
        let ci = s.interval(95);
        for k in 0..s.years.len() {
            let (lo, hi) = match ci {
                Some(i) => (i.lower[k].to_string(), i.upper[k].to_string()),
                None => (String::new(), String::new()),
            };
            w.write_record([
                run.pseudo_shock_year.to_string(),
                s.years[k].to_string(),
                s.point[k].to_string(),
                lo,
                hi,
            ])?;
        }
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Outcome of one robustness variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub label: String,
    pub k: usize,
    pub audited: bool,
    pub eligible_donors: Vec<String>,
    pub retained_donors: Vec<String>,
    pub pooled: Option<EffectSeries>,
    pub cross_unit_mean: Option<EffectSeries>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    /// Year at which directional consistency is judged (shock + 2, or the
    /// last year if the panel is shorter).
    pub check_year: i32,
    /// First entry is the main configuration.
    pub variants: Vec<VariantResult>,
    /// Per variant (same order): pooled effect at the check year has the
    /// main run's sign. `None` when either estimate is missing.
    pub sign_agrees: Vec<Option<bool>>,
}

impl RobustnessReport {
    pub fn all_agree(&self) -> bool {
        self.sign_agrees.iter().all(|s| *s == Some(true))
    }
}

pub const MAIN_VARIANT: &str = "main";

pub fn apply_variant(config: &StudyConfig, v: &Variant) -> StudyConfig {
    let mut c = config.clone();
    if let Some(k) = v.k {
        c.k = k;
    }
    match v.audit {
        Some(false) => c.audit = None,
        Some(true) if c.audit.is_none() => c.audit = Some(Default::default()),
        _ => {}
    }
    c
}

fn run_variant(panel: &PanelDataset, design: &Design, ctx: &AscmContext, label: &str, cfg: &StudyConfig) -> VariantResult {
    let mut out = VariantResult {
        label: label.to_string(),
        k: cfg.k,
        audited: cfg.audit.is_some(),
        eligible_donors: Vec::new(),
        retained_donors: Vec::new(),
        pooled: None,
        cross_unit_mean: None,
        error: None,
    };
    let result = (|| {
        let m = match_nearest(panel, design, cfg.k, cfg.audit.as_ref(), cfg.metric)?;
        out.eligible_donors = m.eligible_donors.clone();
        out.retained_donors = m.retained_donors.clone();
        let pooled = estimate_pooled_with(panel, design, ctx, &m, cfg, false)?;
        let units = estimate_effects_with(panel, ctx, &m, cfg.into())?;
        out.pooled = Some(pooled.series);
        out.cross_unit_mean = Some(units.mean);
        Ok::<_, Error>(())
    })();
    if let Err(e) = result {
        out.error = Some(e.to_string());
    }
    out
}

/// Re-run matching and estimation under each variant. Failures are recorded
/// per variant and do not stop the suite.
pub fn robustness_suite(
    panel: &PanelDataset,
    design: &Design,
    config: &StudyConfig,
    variants: &[Variant],
) -> Result<RobustnessReport> {
    let ctx = AscmContext::new(panel, design)?;
    let mut jobs: Vec<(String, StudyConfig)> = vec![(MAIN_VARIANT.to_string(), config.clone())];
    jobs.extend(variants.iter().map(|v| (v.label.clone(), apply_variant(config, v))));
    let results: Vec<VariantResult> = jobs
        .par_iter()
        .map(|(label, cfg)| run_variant(panel, design, &ctx, label, cfg))
        .collect();
    let check_year = (panel.shock_year() + 2).min(panel.last_year());
    let sign = |r: &VariantResult| r.pooled.as_ref().and_then(|s| s.at(check_year)).map(f64::signum);
    let main_sign = sign(&results[0]);
    let sign_agrees = results
        .iter()
        .map(|r| match (main_sign, sign(r)) {
            (Some(a), Some(b)) => Some(a == b),
            _ => None,
        })
        .collect();
    Ok(RobustnessReport {
        check_year,
        variants: results,
        sign_agrees,
    })
}

pub fn robustness_csv(report: &RobustnessReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["variant", "year", "effect_pp", "sign_agrees_main"])?;
    let main = report.variants.first().and_then(|v| v.pooled.as_ref());
    for v in &report.variants {
        let Some(s) = &v.pooled else { continue };
        for k in 0..s.years.len() {
            let agrees = main
                .and_then(|m| m.at(s.years[k]))
                .map(|m| (m.signum() == s.point[k].signum()).to_string())
                .unwrap_or_default();
            w.write_record([v.label.clone(), s.years[k].to_string(), s.point[k].to_string(), agrees])?;
        }
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}
