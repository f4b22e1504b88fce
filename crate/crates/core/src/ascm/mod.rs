//! Ridge-augmented synthetic control.
//!
//! For a target unit with donor set `J`:
//!
//! 1. convex weights `w` fit the target's pre-shock outcome path
//!    ([`fit_sc_weights`]);
//! 2. per-period ridge models `m_t` are fit on the donors, with baseline
//!    covariates and recent pre-period outcomes as features
//!    ([`fit_ridge_models`]);
//! 3. the counterfactual is `sum_j w_j Y_jt + m_t(X_i) - sum_j w_j m_t(X_j)`
//!    and the effect is the observed outcome minus it.

mod ridge;
pub mod simplex;
mod weights;

pub use ridge::{fit_ridge_models, RidgeModel};
pub use weights::{fit_sc_weights, ScWeights};

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::StudyConfig;
use crate::design::Design;
use crate::error::{Error, Result};
use crate::matcher::{standardize, MatchResult, Standardized};
use crate::panel::{pool_treated, PanelDataset, PooledUnit};
use crate::stats;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    pub balance_tolerance: f64,
    pub ridge_lambda: f64,
    pub lag_count: usize,
}

impl From<&StudyConfig> for FitSettings {
    fn from(c: &StudyConfig) -> Self {
        FitSettings {
            balance_tolerance: c.balance_tolerance,
            ridge_lambda: c.ridge_lambda,
            lag_count: c.lag_count,
        }
    }
}

/// Synthetic-control term, bias correction and their sum over some periods.
#[derive(Clone, Debug, PartialEq)]
pub struct Counterfactual {
    pub synthetic: Vec<f64>,
    pub bias_correction: Vec<f64>,
    pub counterfactual: Vec<f64>,
}

/// Combine fitted weights and per-period outcome models into the augmented
/// counterfactual. `donors_eval[t][j]` is donor j's outcome in evaluation
/// period t, and `models[t]` the model for that period.
pub fn augmented_counterfactual(
    weight_donors: &[String],
    weights: &[f64],
    model_donors: &[String],
    models: &[RidgeModel],
    donors_eval: &[Vec<f64>],
    features_treated: &[f64],
    features_donors: &[Vec<f64>],
) -> Result<Counterfactual> {
    if weight_donors != model_donors {
        return Err(Error::DonorMismatch);
    }
    let n = weights.len();
    if weight_donors.len() != n || features_donors.len() != n {
        return Err(Error::Dimension("weights, donors and features must align".into()));
    }
    if models.len() != donors_eval.len() || donors_eval.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension("one model and one donor row per evaluation period".into()));
    }
    let mut out = Counterfactual {
        synthetic: Vec::with_capacity(models.len()),
        bias_correction: Vec::with_capacity(models.len()),
        counterfactual: Vec::with_capacity(models.len()),
    };
    for (m, row) in models.iter().zip(donors_eval) {
        let synthetic: f64 = weights.iter().zip(row).map(|(w, y)| w * y).sum();
        let synth_model: f64 = weights
            .iter()
            .zip(features_donors)
            .map(|(w, x)| w * m.predict(x))
            .sum();
        let bias = m.predict(features_treated) - synth_model;
        out.synthetic.push(synthetic);
        out.bias_correction.push(bias);
        out.counterfactual.push(synthetic + bias);
    }
    Ok(out)
}

/// One treated unit (or pooled pseudo-unit) with its donors, ready to fit.
#[derive(Clone, Debug)]
pub struct FitProblem {
    pub label: String,
    pub first_year: i32,
    /// Index of the first post-shock period.
    pub shock_index: usize,
    pub target: Vec<f64>,
    /// Standardized baseline covariates of the target.
    pub target_covariates: Vec<f64>,
    pub donor_ids: Vec<String>,
    /// `donor_outcomes[j][t]`.
    pub donor_outcomes: Vec<Vec<f64>>,
    pub donor_covariates: Vec<Vec<f64>>,
    /// Per-period centering and scale applied to lagged outcome features.
    pub lag_center: Vec<f64>,
    pub lag_scale: Vec<f64>,
    pub settings: FitSettings,
}

/// Result of fitting on an arbitrary set of periods and predicting others.
#[derive(Clone, Debug)]
pub struct CoreFit {
    pub weights: ScWeights,
    pub models: Vec<RidgeModel>,
    pub eval: Counterfactual,
}

impl FitProblem {
    pub fn n_periods(&self) -> usize {
        self.target.len()
    }

    pub fn pre_indices(&self) -> Vec<usize> {
        (0..self.shock_index).collect()
    }

    pub fn post_indices(&self) -> Vec<usize> {
        (self.shock_index..self.n_periods()).collect()
    }

    fn lag_periods(&self, fit_periods: &[usize]) -> Vec<usize> {
        let k = self.settings.lag_count.min(fit_periods.len());
        fit_periods[fit_periods.len() - k..].to_vec()
    }

    fn features(&self, covariates: &[f64], outcome: &[f64], lags: &[usize]) -> Vec<f64> {
        let mut f = covariates.to_vec();
        f.extend(lags.iter().map(|&t| (outcome[t] - self.lag_center[t]) / self.lag_scale[t]));
        f
    }

    /// Fit weights on `fit_periods`, ridge models for `eval_periods`, and
    /// return the counterfactual over `eval_periods`.
    pub fn fit_periods(&self, fit_periods: &[usize], eval_periods: &[usize]) -> Result<CoreFit> {
        let treated_pre: Vec<f64> = fit_periods.iter().map(|&t| self.target[t]).collect();
        let donors_pre: Vec<Vec<f64>> = self
            .donor_outcomes
            .iter()
            .map(|d| fit_periods.iter().map(|&t| d[t]).collect())
            .collect();
        let weights = fit_sc_weights(
            &treated_pre,
            &donors_pre,
            &self.target_covariates,
            &self.donor_covariates,
            self.settings.balance_tolerance,
        )?;

        let lags = self.lag_periods(fit_periods);
        let feat_target = self.features(&self.target_covariates, &self.target, &lags);
        let feat_donors: Vec<Vec<f64>> = self
            .donor_outcomes
            .iter()
            .zip(&self.donor_covariates)
            .map(|(y, x)| self.features(x, y, &lags))
            .collect();
        let donors_eval: Vec<Vec<f64>> = eval_periods
            .iter()
            .map(|&t| self.donor_outcomes.iter().map(|d| d[t]).collect())
            .collect();
        let models = fit_ridge_models(&feat_donors, &donors_eval, self.settings.ridge_lambda)?;
        let eval = augmented_counterfactual(
            &self.donor_ids,
            &weights.weights,
            &self.donor_ids,
            &models,
            &donors_eval,
            &feat_target,
            &feat_donors,
        )?;
        Ok(CoreFit { weights, models, eval })
    }

    /// Standard fit: weights on all pre-shock periods, effects for every
    /// post-shock period.
    pub fn fit(&self) -> Result<AscmFit> {
        let pre = self.pre_indices();
        let post = self.post_indices();
        let core = self.fit_periods(&pre, &post)?;
        let observed: Vec<f64> = post.iter().map(|&t| self.target[t]).collect();
        let effects = observed
            .iter()
            .zip(&core.eval.counterfactual)
            .map(|(y, c)| y - c)
            .collect();
        let w = &core.weights.weights;
        let pre_gaps = pre
            .iter()
            .map(|&t| {
                let s: f64 = self.donor_outcomes.iter().zip(w).map(|(d, w)| w * d[t]).sum();
                self.target[t] - s
            })
            .collect();
        Ok(AscmFit {
            unit: self.label.clone(),
            donors: self.donor_ids.clone(),
            weights: core.weights.weights.clone(),
            pre_rmspe: core.weights.pre_rmspe,
            balance_gap: core.weights.balance_gap,
            balance_met: core.weights.balance_met,
            degenerate: core.weights.degenerate,
            ridge_models: core.models,
            pre_years: pre.iter().map(|&t| self.first_year + t as i32).collect(),
            pre_gaps,
            years: post.iter().map(|&t| self.first_year + t as i32).collect(),
            observed,
            synthetic: core.eval.synthetic,
            bias_correction: core.eval.bias_correction,
            counterfactual: core.eval.counterfactual,
            effects,
        })
    }
}

/// Fitted augmented synthetic control for one target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AscmFit {
    pub unit: String,
    pub donors: Vec<String>,
    pub weights: Vec<f64>,
    pub pre_rmspe: f64,
    pub balance_gap: f64,
    pub balance_met: bool,
    pub degenerate: bool,
    /// One model per post-shock year.
    pub ridge_models: Vec<RidgeModel>,
    pub pre_years: Vec<i32>,
    /// Observed minus synthetic outcome over the pre-shock years.
    pub pre_gaps: Vec<f64>,
    /// Post-shock years.
    pub years: Vec<i32>,
    pub observed: Vec<f64>,
    pub synthetic: Vec<f64>,
    pub bias_correction: Vec<f64>,
    pub counterfactual: Vec<f64>,
    pub effects: Vec<f64>,
}

impl AscmFit {
    pub fn effect_in(&self, year: i32) -> Option<f64> {
        self.years.iter().position(|y| *y == year).map(|k| self.effects[k])
    }

    pub fn effects_by_year(&self) -> BTreeMap<i32, f64> {
        self.years.iter().copied().zip(self.effects.iter().copied()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesKind {
    Pooled,
    PerUnit,
    CrossUnitMean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub level: u8,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Effect estimates per post-shock year with optional intervals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectSeries {
    pub kind: SeriesKind,
    pub years: Vec<i32>,
    pub point: Vec<f64>,
    pub intervals: Vec<Interval>,
}

impl EffectSeries {
    pub fn interval(&self, level: u8) -> Option<&Interval> {
        self.intervals.iter().find(|i| i.level == level)
    }

    pub fn at(&self, year: i32) -> Option<f64> {
        self.years.iter().position(|y| *y == year).map(|k| self.point[k])
    }
}

/// Shared standardization for all fits on one panel.
#[derive(Clone, Debug)]
pub struct AscmContext {
    pub covariates: Standardized,
    pub lag_center: Vec<f64>,
    pub lag_scale: Vec<f64>,
}

impl AscmContext {
    /// Covariates are z-scored over all units; each period's outcome is
    /// centered and scaled by its cross-unit mean and sd for use as a lag.
    pub fn new(panel: &PanelDataset, design: &Design) -> Result<Self> {
        let covariates = standardize(&design.table)?;
        let t = panel.n_years();
        let mut lag_center = Vec::with_capacity(t);
        let mut lag_scale = Vec::with_capacity(t);
        for k in 0..t {
            let col: Vec<f64> = panel.outcomes().iter().map(|r| r[k]).collect();
            lag_center.push(stats::mean(&col));
            let sd = stats::sample_sd(&col);
            lag_scale.push(if sd > 0.0 { sd } else { 1.0 });
        }
        Ok(AscmContext {
            covariates,
            lag_center,
            lag_scale,
        })
    }

    pub fn problem(
        &self,
        panel: &PanelDataset,
        label: &str,
        target: Vec<f64>,
        target_covariates: Vec<f64>,
        donors: &[usize],
        settings: FitSettings,
    ) -> FitProblem {
        FitProblem {
            label: label.to_string(),
            first_year: panel.first_year(),
            shock_index: panel.pre_len(),
            target,
            target_covariates,
            donor_ids: donors.iter().map(|&j| panel.units()[j].clone()).collect(),
            donor_outcomes: donors.iter().map(|&j| panel.outcome(j).to_vec()).collect(),
            donor_covariates: donors.iter().map(|&j| self.covariates.rows[j].clone()).collect(),
            lag_center: self.lag_center.clone(),
            lag_scale: self.lag_scale.clone(),
            settings,
        }
    }

    /// Problem for treated unit `unit` with the given donors.
    pub fn unit_problem(&self, panel: &PanelDataset, unit: usize, donors: &[usize], settings: FitSettings) -> FitProblem {
        self.problem(
            panel,
            &panel.units()[unit],
            panel.outcome(unit).to_vec(),
            self.covariates.rows[unit].clone(),
            donors,
            settings,
        )
    }

    /// Problem for the pooled pseudo-unit against `donors`.
    pub fn pooled_problem(
        &self,
        panel: &PanelDataset,
        design: &Design,
        pooled: &PooledUnit,
        donors: &[usize],
        settings: FitSettings,
    ) -> FitProblem {
        let x = self.covariates.apply(&design.row_for(&pooled.covariates));
        self.problem(panel, POOLED_LABEL, pooled.outcome.clone(), x, donors, settings)
    }
}

pub const POOLED_LABEL: &str = "pooled";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitFailure {
    pub unit: String,
    pub reason: String,
}

/// Per-unit fits and their cross-unit mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitEffects {
    pub fits: Vec<AscmFit>,
    pub failures: Vec<UnitFailure>,
    pub mean: EffectSeries,
    /// Standard error of the cross-unit mean per year (sd / sqrt(n));
    /// undefined with fewer than two fitted units.
    pub mean_se: Vec<Option<f64>>,
}

/// Fit every treated unit against its matched donors.
pub fn estimate_effects(
    panel: &PanelDataset,
    design: &Design,
    matches: &MatchResult,
    config: &StudyConfig,
) -> Result<UnitEffects> {
    let ctx = AscmContext::new(panel, design)?;
    estimate_effects_with(panel, &ctx, matches, FitSettings::from(config))
}

pub fn estimate_effects_with(
    panel: &PanelDataset,
    ctx: &AscmContext,
    matches: &MatchResult,
    settings: FitSettings,
) -> Result<UnitEffects> {
    let sets = matches.donor_indices(panel)?;
    let results: Vec<std::result::Result<AscmFit, UnitFailure>> = sets
        .par_iter()
        .map(|(unit, donors)| {
            ctx.unit_problem(panel, *unit, donors, settings)
                .fit()
                .map_err(|e| UnitFailure {
                    unit: panel.units()[*unit].clone(),
                    reason: e.to_string(),
                })
        })
        .collect();
    let mut fits = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(f) => fits.push(f),
            Err(f) => failures.push(f),
        }
    }
    if fits.is_empty() {
        let reasons: Vec<String> = failures.iter().map(|f| format!("{}: {}", f.unit, f.reason)).collect();
        return Err(Error::AllUnitsFailed(reasons.join("; ")));
    }
    let years: Vec<i32> = panel.post_years().collect();
    let mut point = Vec::with_capacity(years.len());
    let mut se = Vec::with_capacity(years.len());
    for k in 0..years.len() {
        let vals: Vec<f64> = fits.iter().map(|f| f.effects[k]).collect();
        point.push(stats::mean(&vals));
        se.push((vals.len() > 1).then(|| stats::sample_sd(&vals) / (vals.len() as f64).sqrt()));
    }
    Ok(UnitEffects {
        fits,
        failures,
        mean: EffectSeries {
            kind: SeriesKind::CrossUnitMean,
            years,
            point,
            intervals: Vec::new(),
        },
        mean_se: se,
    })
}

/// Pooled fit: treated units averaged into one pseudo-unit, donors = every
/// matched donor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PooledEstimate {
    pub fit: AscmFit,
    pub series: EffectSeries,
    /// Normalized pooling weight of each treated unit.
    pub unit_weights: Vec<f64>,
}

/// Build the pooled problem (pseudo-unit plus donor union) for a panel.
pub fn pooled_problem(
    panel: &PanelDataset,
    design: &Design,
    ctx: &AscmContext,
    matches: &MatchResult,
    config: &StudyConfig,
) -> Result<(FitProblem, PooledUnit)> {
    let pooled = pool_treated(panel, config.pool_weight)?;
    let donors = matches.retained_indices(panel)?;
    let problem = ctx.pooled_problem(panel, design, &pooled, &donors, FitSettings::from(config));
    Ok((problem, pooled))
}

/// Pooled point estimate with jackknife+ intervals at the configured levels
/// (intervals are omitted when there are fewer than three pre-periods).
pub fn estimate_pooled(
    panel: &PanelDataset,
    design: &Design,
    matches: &MatchResult,
    config: &StudyConfig,
) -> Result<PooledEstimate> {
    let ctx = AscmContext::new(panel, design)?;
    estimate_pooled_with(panel, design, &ctx, matches, config, true)
}

pub fn estimate_pooled_with(
    panel: &PanelDataset,
    design: &Design,
    ctx: &AscmContext,
    matches: &MatchResult,
    config: &StudyConfig,
    with_intervals: bool,
) -> Result<PooledEstimate> {
    let (problem, pooled) = pooled_problem(panel, design, ctx, matches, config)?;
    let fit = problem.fit()?;
    let intervals = if with_intervals && panel.pre_len() >= 3 {
        crate::inference::jackknife_plus(&problem, &fit, &config.ci_levels)?
    } else {
        Vec::new()
    };
    Ok(PooledEstimate {
        series: EffectSeries {
            kind: SeriesKind::Pooled,
            years: fit.years.clone(),
            point: fit.effects.clone(),
            intervals,
        },
        fit,
        unit_weights: pooled.weights,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightRow {
    pub donor: String,
    pub weight: f64,
}

/// Mean donor weight across fits (a donor absent from a fit counts as 0).
/// For a single pooled fit this is just its weight vector.
pub fn weight_report(fits: &[AscmFit]) -> Vec<WeightRow> {
    let mut sums: BTreeMap<&str, f64> = BTreeMap::new();
    for f in fits {
        for (d, w) in f.donors.iter().zip(&f.weights) {
            *sums.entry(d.as_str()).or_insert(0.0) += w;
        }
    }
    let n = fits.len().max(1) as f64;
    sums.into_iter()
        .map(|(d, s)| WeightRow {
            donor: d.to_string(),
            weight: s / n,
        })
        .collect()
}

/// `treated_id,donor_id,weight` CSV covering every fit.
pub fn weights_csv(fits: &[&AscmFit]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["treated_id", "donor_id", "weight"])?;
    for f in fits {
        for (d, wt) in f.donors.iter().zip(&f.weights) {
            w.write_record([f.unit.as_str(), d.as_str(), &wt.to_string()])?;
        }
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub const EFFECT_HEADER: [&str; 6] = [
    "unit_id",
    "year",
    "effect_pp",
    "counterfactual_pp",
    "observed_pp",
    "bias_correction_pp",
];

/// Per-unit effects CSV.
pub fn effects_csv(fits: &[AscmFit]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(EFFECT_HEADER)?;
    for f in fits {
        for k in 0..f.years.len() {
            w.write_record([
                f.unit.clone(),
                f.years[k].to_string(),
                f.effects[k].to_string(),
                f.counterfactual[k].to_string(),
                f.observed[k].to_string(),
                f.bias_correction[k].to_string(),
            ])?;
        }
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Pooled effects CSV with `ciLL_lo,ciLL_hi` columns for 80/90/95 (empty
/// when a level was not computed).
pub fn pooled_effects_csv(est: &PooledEstimate) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = EFFECT_HEADER.iter().map(|s| s.to_string()).collect();
    for l in [80, 90, 95] {
        header.push(format!("ci{l}_lo"));
        header.push(format!("ci{l}_hi"));
    }
    w.write_record(&header)?;
    let f = &est.fit;
    for k in 0..f.years.len() {
        let mut rec = vec![
            f.unit.clone(),
            f.years[k].to_string(),
            f.effects[k].to_string(),
            f.counterfactual[k].to_string(),
            f.observed[k].to_string(),
            f.bias_correction[k].to_string(),
        ];
        for l in [80, 90, 95] {
            match est.series.interval(l) {
                Some(i) => {
                    rec.push(i.lower[k].to_string());
                    rec.push(i.upper[k].to_string());
                }
                None => {
                    rec.push(String::new());
                    rec.push(String::new());
                }
            }
        }
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Read per-unit effects back from an effects CSV: unit → year → effect.
pub fn read_effects_csv<R: std::io::Read>(reader: R) -> Result<BTreeMap<String, BTreeMap<i32, f64>>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out: BTreeMap<String, BTreeMap<i32, f64>> = BTreeMap::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = || Error::parse("effects", n + 2, "malformed row");
        let year: i32 = rec.get(1).ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let eff: f64 = rec.get(2).ok_or_else(bad)?.parse().map_err(|_| bad())?;
        out.entry(rec[0].to_string()).or_default().insert(year, eff);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|j| format!("d{j}")).collect()
    }

    #[test]
    fn balanced_covariates_give_zero_bias_correction() {
        let models = vec![
            RidgeModel { intercept: 0.3, coefficients: vec![1.5, -2.0] },
            RidgeModel { intercept: -1.0, coefficients: vec![0.1, 4.0] },
        ];
        let xd = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, 2.0]];
        let w = [0.2, 0.5, 0.3];
        let xt: Vec<f64> = (0..2).map(|c| xd.iter().zip(&w).map(|(x, w)| w * x[c]).sum()).collect();
        let eval = vec![vec![1.0, 2.0, 3.0], vec![0.0, 0.5, 1.0]];
        let cf = augmented_counterfactual(&ids(3), &w, &ids(3), &models, &eval, &xt, &xd).unwrap();
        for b in &cf.bias_correction {
            assert!(b.abs() < 1e-14);
        }
        assert!((cf.synthetic[0] - (0.2 + 1.0 + 0.9)).abs() < 1e-14);
    }

    #[test]
    fn mismatched_donor_order_is_rejected() {
        let models = vec![RidgeModel { intercept: 0.0, coefficients: vec![] }];
        let mut other = ids(2);
        other.reverse();
        let r = augmented_counterfactual(&ids(2), &[0.5, 0.5], &other, &models, &[vec![1.0, 2.0]], &[], &[vec![], vec![]]);
        assert!(matches!(r, Err(Error::DonorMismatch)));
    }

    #[test]
    fn three_donor_composition_matches_hand_assembly() {
        // weights from the simplex oracle case and a ridge fit, composed by hand
        let donors_pre = vec![vec![1.0, 2.0, 3.0], vec![2.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let target_pre = [1.2, 1.4, 1.8];
        let xd = vec![vec![0.5], vec![-1.0], vec![2.0]];
        let xt = [0.0];
        let w = fit_sc_weights(&target_pre, &donors_pre, &xt, &xd, f64::INFINITY).unwrap();
        let post = vec![vec![4.0, -1.0, 2.0]];
        let models = fit_ridge_models(&xd, &post, 1.0).unwrap();
        let cf = augmented_counterfactual(&ids(3), &w.weights, &ids(3), &models, &post, &xt, &xd).unwrap();
        let synth: f64 = (0..3).map(|j| w.weights[j] * post[0][j]).sum();
        let m = &models[0];
        let pred = |x: f64| m.intercept + m.coefficients[0] * x;
        let bias = pred(0.0) - (0..3).map(|j| w.weights[j] * pred(xd[j][0])).sum::<f64>();
        assert!((cf.counterfactual[0] - (synth + bias)).abs() < 1e-12);
        assert!((cf.bias_correction[0] - bias).abs() < 1e-12);
    }

    #[test]
    fn shrinkage_limit_leaves_pure_synthetic_control() {
        let xd = vec![vec![1.0], vec![3.0], vec![-2.0]];
        let post = vec![vec![1.0, 5.0, 2.0]];
        let models = fit_ridge_models(&xd, &post, 1e12).unwrap();
        let w = [0.2, 0.3, 0.5];
        let cf = augmented_counterfactual(&ids(3), &w, &ids(3), &models, &post, &[10.0], &xd).unwrap();
        assert!(cf.bias_correction[0].abs() < 1e-9);
        assert!((cf.counterfactual[0] - cf.synthetic[0]).abs() < 1e-9);
    }

    fn fit_with(unit: &str, donors: &[&str], weights: &[f64]) -> AscmFit {
        AscmFit {
            unit: unit.into(),
            donors: donors.iter().map(|d| d.to_string()).collect(),
            weights: weights.to_vec(),
            pre_rmspe: 0.0,
            balance_gap: 0.0,
            balance_met: true,
            degenerate: false,
            ridge_models: vec![],
            pre_years: vec![],
            pre_gaps: vec![],
            years: vec![],
            observed: vec![],
            synthetic: vec![],
            bias_correction: vec![],
            counterfactual: vec![],
            effects: vec![],
        }
    }

    #[test]
    fn weight_report_examples() {
        let single = weight_report(&[fit_with("t", &["a"], &[1.0])]);
        assert_eq!(single, vec![WeightRow { donor: "a".into(), weight: 1.0 }]);

        let fits = [
            fit_with("t1", &["a", "b"], &[0.25, 0.75]),
            fit_with("t2", &["b", "c"], &[0.5, 0.5]),
        ];
        let r = weight_report(&fits);
        let total: f64 = r.iter().map(|w| w.weight).sum();
        assert!((total - 1.0).abs() < 1e-15);
        // hand average: a = 0.25/2, b = (0.75 + 0.5)/2, c = 0.5/2
        let get = |d: &str| r.iter().find(|w| w.donor == d).unwrap().weight;
        assert_eq!(get("a"), 0.125);
        assert_eq!(get("b"), 0.625);
        assert_eq!(get("c"), 0.25);
    }
}
