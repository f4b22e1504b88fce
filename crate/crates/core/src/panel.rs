//! Unit × year panels, baseline covariates, and the outcome transforms that
//! feed the estimator.
//!
//! Outcomes are annual deforestation rates in percentage points with
//! positive values meaning forest loss:
//! `Y_t = -100 * (F_t - F_{t-1}) / F_{t-1}`.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::ops::RangeInclusive;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{PoolWeight, StudyConfig};
use crate::error::{Error, Result};

/// Baseline (time-invariant) covariates of one unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Covariates {
    pub elevation_m: f64,
    pub slope_deg: f64,
    pub pop_density: f64,
    pub road_density: f64,
    pub protected_share: f64,
    pub forest_pct_base: f64,
    pub forest_ha_base: f64,
    pub precip: [f64; 12],
}

impl Covariates {
    /// Land area implied by baseline forest hectares and forest percent.
    pub fn land_area_ha(&self) -> f64 {
        if self.forest_pct_base > 0.0 {
            self.forest_ha_base * 100.0 / self.forest_pct_base
        } else {
            0.0
        }
    }

    pub fn annual_precip(&self) -> f64 {
        self.precip.iter().sum()
    }

    /// Weighted average of several records; weights need not be normalized.
    pub fn weighted_mean(records: &[&Covariates], weights: &[f64]) -> Result<Covariates> {
        let total: f64 = weights.iter().sum();
        if records.is_empty() || total <= 0.0 {
            return Err(Error::ZeroWeight);
        }
        let avg = |f: &dyn Fn(&Covariates) -> f64| -> f64 {
            records
                .iter()
                .zip(weights)
                .map(|(r, w)| w * f(r))
                .sum::<f64>()
                / total
        };
        let mut precip = [0.0; 12];
        for (m, p) in precip.iter_mut().enumerate() {
            *p = avg(&|c| c.precip[m]);
        }
        Ok(Covariates {
            elevation_m: avg(&|c| c.elevation_m),
            slope_deg: avg(&|c| c.slope_deg),
            pop_density: avg(&|c| c.pop_density),
            road_density: avg(&|c| c.road_density),
            protected_share: avg(&|c| c.protected_share),
            forest_pct_base: avg(&|c| c.forest_pct_base),
            forest_ha_base: avg(&|c| c.forest_ha_base),
            precip,
        })
    }

    fn validate(&self, unit: &str) -> Result<()> {
        let scalars = [
            ("elevation_m", self.elevation_m),
            ("slope_deg", self.slope_deg),
            ("pop_density", self.pop_density),
            ("road_density", self.road_density),
            ("protected_share", self.protected_share),
            ("forest_pct_base", self.forest_pct_base),
            ("forest_ha_base", self.forest_ha_base),
        ];
        for (name, v) in scalars.iter().chain(
            self.precip
                .iter()
                .map(|v| ("precipitation", *v))
                .collect::<Vec<_>>()
                .iter(),
        ) {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("covariate {name} of unit {unit}")));
            }
        }
        if !(0.0..=1.0).contains(&self.protected_share) {
            return Err(Error::InvalidPanel(format!(
                "unit {unit}: protected_share {} outside [0, 1]",
                self.protected_share
            )));
        }
        if !(0.0..=100.0).contains(&self.forest_pct_base) {
            return Err(Error::InvalidPanel(format!(
                "unit {unit}: forest_pct_base {} outside [0, 100]",
                self.forest_pct_base
            )));
        }
        if self.forest_ha_base < 0.0 {
            return Err(Error::InvalidPanel(format!(
                "unit {unit}: negative forest_ha_base"
            )));
        }
        Ok(())
    }
}

/// Rectangular unit × year panel of deforestation rates with covariates
/// and exposure flags. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct PanelDataset {
    units: Vec<String>,
    first_year: i32,
    outcome: Vec<Vec<f64>>,
    forest_area: Option<Vec<Vec<f64>>>,
    covariates: Vec<Covariates>,
    exposure: Vec<bool>,
    shock_year: i32,
}

/// Raw ingredients for [`PanelDataset::new`].
#[derive(Clone, Debug)]
pub struct PanelParts {
    pub units: Vec<String>,
    pub first_year: i32,
    pub outcome: Vec<Vec<f64>>,
    pub forest_area: Option<Vec<Vec<f64>>>,
    pub covariates: Vec<Covariates>,
    pub exposure: Vec<bool>,
    pub shock_year: i32,
}

impl PanelDataset {
    pub fn new(parts: PanelParts) -> Result<Self> {
        let PanelParts {
            units,
            first_year,
            outcome,
            forest_area,
            covariates,
            exposure,
            shock_year,
        } = parts;
        let n = units.len();
        if outcome.len() != n || covariates.len() != n || exposure.len() != n {
            return Err(Error::Dimension(format!(
                "{n} units but {} outcome rows, {} covariate rows, {} exposure flags",
                outcome.len(),
                covariates.len(),
                exposure.len()
            )));
        }
        let mut seen = HashMap::new();
        for (i, u) in units.iter().enumerate() {
            if let Some(prev) = seen.insert(u.as_str(), i) {
                return Err(Error::InvalidPanel(format!(
                    "unit {u} appears twice (rows {prev} and {i})"
                )));
            }
        }
        let t = outcome.first().map_or(0, Vec::len);
        if t == 0 {
            return Err(Error::InvalidPanel("panel has no years".into()));
        }
        for (u, row) in units.iter().zip(&outcome) {
            if row.len() != t {
                return Err(Error::InvalidPanel(format!(
                    "unit {u} has {} years, expected {t}",
                    row.len()
                )));
            }
            if let Some(k) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "outcome of unit {u} in year {}",
                    first_year + k as i32
                )));
            }
        }
        if let Some(forest) = &forest_area {
            if forest.len() != n {
                return Err(Error::Dimension("forest area rows".into()));
            }
            for (i, (u, row)) in units.iter().zip(forest).enumerate() {
                if row.len() != t {
                    return Err(Error::InvalidPanel(format!(
                        "unit {u}: forest area length {} differs from outcome length {t}",
                        row.len()
                    )));
                }
                for k in 1..t {
                    let prev = row[k - 1];
                    if prev <= 0.0 {
                        return Err(Error::ZeroForest {
                            year: first_year + k as i32 - 1,
                        });
                    }
                    let rate = -100.0 * (row[k] - prev) / prev;
                    if (rate - outcome[i][k]).abs() > 1e-9 {
                        return Err(Error::InvalidPanel(format!(
                            "unit {u}, year {}: outcome {} disagrees with forest-area rate {rate}",
                            first_year + k as i32,
                            outcome[i][k]
                        )));
                    }
                }
            }
        }
        for (u, c) in units.iter().zip(&covariates) {
            c.validate(u)?;
        }
        let n1 = exposure.iter().filter(|&&v| v).count();
        if n1 == 0 || n1 == n {
            return Err(Error::InvalidPanel(format!(
                "need at least one treated and one donor unit, found {n1} treated of {n}"
            )));
        }
        let last_year = first_year + t as i32 - 1;
        if shock_year <= first_year || shock_year > last_year {
            return Err(Error::InvalidPanel(format!(
                "shock year {shock_year} outside ({first_year}, {last_year}]"
            )));
        }
        if shock_year - first_year < 2 {
            return Err(Error::TooFewPrePeriods {
                required: 2,
                available: (shock_year - first_year) as usize,
            });
        }
        Ok(PanelDataset {
            units,
            first_year,
            outcome,
            forest_area,
            covariates,
            exposure,
            shock_year,
        })
    }

    pub fn units(&self) -> &[String] {
        &self.units
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn first_year(&self) -> i32 {
        self.first_year
    }

    pub fn last_year(&self) -> i32 {
        self.first_year + self.n_years() as i32 - 1
    }

    pub fn n_years(&self) -> usize {
        self.outcome[0].len()
    }

    pub fn years(&self) -> RangeInclusive<i32> {
        self.first_year..=self.last_year()
    }

    pub fn shock_year(&self) -> i32 {
        self.shock_year
    }

    /// Number of pre-shock periods.
    pub fn pre_len(&self) -> usize {
        (self.shock_year - self.first_year) as usize
    }

    pub fn post_len(&self) -> usize {
        self.n_years() - self.pre_len()
    }

    pub fn pre_years(&self) -> RangeInclusive<i32> {
        self.first_year..=self.shock_year - 1
    }

    pub fn post_years(&self) -> RangeInclusive<i32> {
        self.shock_year..=self.last_year()
    }

    pub fn year_index(&self, year: i32) -> Option<usize> {
        self.years()
            .contains(&year)
            .then(|| (year - self.first_year) as usize)
    }

    pub fn outcome(&self, unit: usize) -> &[f64] {
        &self.outcome[unit]
    }

    pub fn outcomes(&self) -> &[Vec<f64>] {
        &self.outcome
    }

    pub fn forest_area(&self) -> Option<&[Vec<f64>]> {
        self.forest_area.as_deref()
    }

    pub fn covariates(&self, unit: usize) -> &Covariates {
        &self.covariates[unit]
    }

    pub fn all_covariates(&self) -> &[Covariates] {
        &self.covariates
    }

    pub fn is_treated(&self, unit: usize) -> bool {
        self.exposure[unit]
    }

    pub fn exposure(&self) -> &[bool] {
        &self.exposure
    }

    pub fn unit_index(&self, id: &str) -> Option<usize> {
        self.units.iter().position(|u| u == id)
    }

    pub fn treated(&self) -> Vec<usize> {
        (0..self.n_units()).filter(|&i| self.exposure[i]).collect()
    }

    pub fn donors(&self) -> Vec<usize> {
        (0..self.n_units()).filter(|&i| !self.exposure[i]).collect()
    }

    pub fn n_treated(&self) -> usize {
        self.exposure.iter().filter(|&&v| v).count()
    }

    pub fn n_donors(&self) -> usize {
        self.n_units() - self.n_treated()
    }

    /// Realized treatment indicator `D = V * 1{t >= t*}`.
    pub fn treatment(&self, unit: usize, year: i32) -> bool {
        self.exposure[unit] && year >= self.shock_year
    }

    /// Same data with a different shock year (placebo-in-time runs).
    pub fn with_shock_year(&self, shock_year: i32) -> Result<Self> {
        let mut parts = self.to_parts();
        parts.shock_year = shock_year;
        PanelDataset::new(parts)
    }

    /// Keep only years `<= last_year`.
    pub fn truncated(&self, last_year: i32) -> Result<Self> {
        let keep = self
            .year_index(last_year)
            .ok_or(Error::MissingYear(last_year))?
            + 1;
        let mut parts = self.to_parts();
        for row in &mut parts.outcome {
            row.truncate(keep);
        }
        if let Some(f) = &mut parts.forest_area {
            for row in f {
                row.truncate(keep);
            }
        }
        PanelDataset::new(parts)
    }

    /// Same panel with every outcome transformed by `f(unit, year_index, value)`.
    /// Forest areas are dropped since they no longer agree with the outcomes.
    pub fn map_outcomes(&self, f: impl Fn(usize, usize, f64) -> f64) -> Result<Self> {
        let mut parts = self.to_parts();
        parts.forest_area = None;
        for (i, row) in parts.outcome.iter_mut().enumerate() {
            for (k, v) in row.iter_mut().enumerate() {
                *v = f(i, k, *v);
            }
        }
        PanelDataset::new(parts)
    }

    pub fn to_parts(&self) -> PanelParts {
        PanelParts {
            units: self.units.clone(),
            first_year: self.first_year,
            outcome: self.outcome.clone(),
            forest_area: self.forest_area.clone(),
            covariates: self.covariates.clone(),
            exposure: self.exposure.clone(),
            shock_year: self.shock_year,
        }
    }
}

/// Annual deforestation rates (pp) from a forest-area series.
pub fn compute_outcome(forest: &[f64], first_year: i32) -> Result<Vec<f64>> {
    forest
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            if w[0] == 0.0 {
                Err(Error::ZeroForest {
                    year: first_year + k as i32,
                })
            } else {
                Ok(-100.0 * (w[1] - w[0]) / w[0])
            }
        })
        .collect()
}

/// Mean of a per-year covariate over `years` (default {2013, 2014}).
pub fn baseline_average(series: &BTreeMap<i32, f64>, years: &[i32]) -> Result<f64> {
    if years.is_empty() {
        return Err(Error::Config("empty baseline year set".into()));
    }
    let mut sum = 0.0;
    for y in years {
        sum += *series.get(y).ok_or(Error::MissingYear(*y))?;
    }
    Ok(sum / years.len() as f64)
}

pub const DEFAULT_BASELINE_YEARS: [i32; 2] = [2013, 2014];

/// Weight-normalized average outcome of the treated units, one value per year.
pub fn pool_outcomes(series: &[&[f64]], weights: &[f64]) -> Result<Vec<f64>> {
    if series.len() != weights.len() {
        return Err(Error::Dimension("one weight per pooled series".into()));
    }
    if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
        return Err(Error::InvalidPanel("pooling weights must be nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroWeight);
    }
    let len = series.first().map_or(0, |s| s.len());
    let mut out = vec![0.0; len];
    for (s, w) in series.iter().zip(weights) {
        for (o, v) in out.iter_mut().zip(s.iter()) {
            *o += w * v;
        }
    }
    out.iter_mut().for_each(|o| *o /= total);
    Ok(out)
}

/// A pooled treated pseudo-unit: weighted outcome path plus the covariates
/// averaged with the same weights.
#[derive(Clone, Debug)]
pub struct PooledUnit {
    pub outcome: Vec<f64>,
    pub covariates: Covariates,
    /// Normalized weight of each treated unit, in `panel.treated()` order.
    pub weights: Vec<f64>,
}

pub fn pooling_weights(panel: &PanelDataset, field: PoolWeight) -> Vec<f64> {
    panel
        .treated()
        .into_iter()
        .map(|i| {
            let c = panel.covariates(i);
            match field {
                PoolWeight::ForestHectares => c.forest_ha_base,
                PoolWeight::LandArea => c.land_area_ha(),
            }
        })
        .collect()
}

pub fn pool_treated(panel: &PanelDataset, field: PoolWeight) -> Result<PooledUnit> {
    pool_treated_with(panel, &pooling_weights(panel, field))
}

pub fn pool_treated_with(panel: &PanelDataset, weights: &[f64]) -> Result<PooledUnit> {
    let treated = panel.treated();
    let series: Vec<&[f64]> = treated.iter().map(|&i| panel.outcome(i)).collect();
    let outcome = pool_outcomes(&series, weights)?;
    let records: Vec<&Covariates> = treated.iter().map(|&i| panel.covariates(i)).collect();
    let covariates = Covariates::weighted_mean(&records, weights)?;
    let total: f64 = weights.iter().sum();
    Ok(PooledUnit {
        outcome,
        covariates,
        weights: weights.iter().map(|w| w / total).collect(),
    })
}

/// Hectares of avoided loss implied by an effect in percentage points
/// (positive = loss avoided).
pub fn avoided_hectares(effect_pp: f64, forest_ha: f64) -> f64 {
    -effect_pp / 100.0 * forest_ha
}

pub const PANEL_HEADER: [&str; 4] = ["unit_id", "year", "forest_ha", "outcome_pp"];
pub const COVARIATE_HEADER: [&str; 21] = [
    "unit_id",
    "exposure",
    "elevation_m",
    "slope_deg",
    "pop_density",
    "road_density",
    "protected_share",
    "forest_pct_base",
    "forest_ha_base",
    "prec_m01",
    "prec_m02",
    "prec_m03",
    "prec_m04",
    "prec_m05",
    "prec_m06",
    "prec_m07",
    "prec_m08",
    "prec_m09",
    "prec_m10",
    "prec_m11",
    "prec_m12",
];

fn parse_f64(source: &str, line: usize, column: &str, raw: &str) -> Result<f64> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Err(Error::parse(source, line, format!("missing value for {column}")));
    }
    let v: f64 = raw
        .parse()
        .map_err(|_| Error::parse(source, line, format!("{column}: cannot parse `{raw}`")))?;
    if !v.is_finite() {
        return Err(Error::parse(source, line, format!("{column}: non-finite value")));
    }
    Ok(v)
}

fn check_header(source: &str, found: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let found: Vec<&str> = found.iter().map(str::trim).collect();
    if found != expected {
        return Err(Error::parse(
            source,
            1,
            format!("expected header `{}`, found `{}`", expected.join(","), found.join(",")),
        ));
    }
    Ok(())
}

/// Covariate rows in file order: (unit id, exposure, covariates).
pub fn read_covariates<R: Read>(reader: R, source: &str) -> Result<Vec<(String, bool, Covariates)>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    check_header(source, rdr.headers()?, &COVARIATE_HEADER)?;
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Error::parse(source, line, e.to_string()))?;
        if rec.len() != COVARIATE_HEADER.len() {
            return Err(Error::parse(source, line, "wrong number of fields"));
        }
        let id = rec[0].trim().to_string();
        if id.is_empty() {
            return Err(Error::parse(source, line, "missing unit_id"));
        }
        let exposure = match rec[1].trim() {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::parse(
                    source,
                    line,
                    format!("exposure must be 0 or 1, found `{other}`"),
                ))
            }
        };
        let v = |c: usize| parse_f64(source, line, COVARIATE_HEADER[c], &rec[c]);
        let mut precip = [0.0; 12];
        for (m, p) in precip.iter_mut().enumerate() {
            *p = v(9 + m)?;
        }
        out.push((
            id,
            exposure,
            Covariates {
                elevation_m: v(2)?,
                slope_deg: v(3)?,
                pop_density: v(4)?,
                road_density: v(5)?,
                protected_share: v(6)?,
                forest_pct_base: v(7)?,
                forest_ha_base: v(8)?,
                precip,
            },
        ));
    }
    Ok(out)
}

struct PanelRow {
    forest: f64,
    outcome: Option<f64>,
}

/// Panel CSV contents aligned to a unit list, before panel-level validation.
#[derive(Clone, Debug)]
pub struct PanelTable {
    pub first_year: i32,
    pub outcome: Vec<Vec<f64>>,
    pub forest_area: Vec<Vec<f64>>,
}

/// Read the panel CSV for `units` (in that order). When the outcome column is
/// absent it is derived from forest area and the first year is dropped.
pub fn read_panel_table<R: Read>(reader: R, source: &str, units: &[String]) -> Result<PanelTable> {
    let index: HashMap<&str, usize> = units
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let has_outcome = match header.len() {
        3 => {
            check_header(source, &header, &PANEL_HEADER[..3])?;
            false
        }
        _ => {
            check_header(source, &header, &PANEL_HEADER)?;
            true
        }
    };
    let mut rows: Vec<BTreeMap<i32, PanelRow>> = (0..units.len()).map(|_| BTreeMap::new()).collect();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Error::parse(source, line, e.to_string()))?;
        if rec.len() != header.len() {
            return Err(Error::parse(source, line, "wrong number of fields"));
        }
        let id = rec[0].trim();
        let &unit = index
            .get(id)
            .ok_or_else(|| Error::parse(source, line, format!("unknown unit `{id}`")))?;
        let year: i32 = rec[1]
            .trim()
            .parse()
            .map_err(|_| Error::parse(source, line, format!("bad year `{}`", &rec[1])))?;
        let forest = parse_f64(source, line, "forest_ha", &rec[2])?;
        if forest < 0.0 {
            return Err(Error::parse(
                source,
                line,
                format!("negative forest area for unit {id} in {year}"),
            ));
        }
        let outcome = if has_outcome {
            Some(parse_f64(source, line, "outcome_pp", &rec[3])?)
        } else {
            None
        };
        if rows[unit].insert(year, PanelRow { forest, outcome }).is_some() {
            return Err(Error::parse(
                source,
                line,
                format!("duplicate row for unit {id}, year {year}"),
            ));
        }
    }

    let (mut lo, mut hi) = (i32::MAX, i32::MIN);
    for r in &rows {
        if let (Some((a, _)), Some((b, _))) = (r.first_key_value(), r.last_key_value()) {
            lo = lo.min(*a);
            hi = hi.max(*b);
        }
    }
    if lo > hi {
        return Err(Error::InvalidPanel(format!("{source}: no rows")));
    }
    let mut outcome = Vec::with_capacity(units.len());
    let mut forest = Vec::with_capacity(units.len());
    for (id, r) in units.iter().zip(&rows) {
        if r.is_empty() {
            return Err(Error::InvalidPanel(format!("unit {id} has no panel rows")));
        }
        if let Some(y) = (lo..=hi).find(|y| !r.contains_key(y)) {
            return Err(Error::InvalidPanel(format!(
                "unit {id} is missing year {y} (years must be contiguous {lo}-{hi})"
            )));
        }
        let f: Vec<f64> = r.values().map(|p| p.forest).collect();
        if has_outcome {
            outcome.push(r.values().map(|p| p.outcome.unwrap_or(f64::NAN)).collect());
            forest.push(f);
        } else {
            outcome.push(
                compute_outcome(&f, lo)
                    .map_err(|e| Error::InvalidPanel(format!("unit {id}: {e}")))?,
            );
            forest.push(f[1..].to_vec());
        }
    }
    Ok(PanelTable {
        first_year: if has_outcome { lo } else { lo + 1 },
        outcome,
        forest_area: forest,
    })
}

/// Build a validated panel from the two CSV sources.
pub fn load_panel<P: Read, C: Read>(
    panel_src: P,
    panel_name: &str,
    covariate_src: C,
    covariate_name: &str,
    config: &StudyConfig,
) -> Result<PanelDataset> {
    let covs = read_covariates(covariate_src, covariate_name)?;
    let units: Vec<String> = covs.iter().map(|(id, _, _)| id.clone()).collect();
    let mut distinct = units.clone();
    distinct.sort();
    distinct.dedup();
    if distinct.len() != units.len() {
        return Err(Error::InvalidPanel(format!(
            "{covariate_name}: duplicate unit identifiers"
        )));
    }
    let table = read_panel_table(panel_src, panel_name, &units)?;
    // With an explicit outcome column the first year has no predecessor, so
    // consistency with forest area is checked from the second year on.
    let (exposure, covariates): (Vec<bool>, Vec<Covariates>) =
        covs.into_iter().map(|(_, e, c)| (e, c)).unzip();
    PanelDataset::new(PanelParts {
        units,
        first_year: table.first_year,
        outcome: table.outcome,
        forest_area: Some(table.forest_area),
        covariates,
        exposure,
        shock_year: config.shock_year,
    })
}

pub fn load_panel_files(panel: &Path, covariates: &Path, config: &StudyConfig) -> Result<PanelDataset> {
    let p = std::fs::File::open(panel)?;
    let c = std::fs::File::open(covariates)?;
    load_panel(
        p,
        &panel.display().to_string(),
        c,
        &covariates.display().to_string(),
        config,
    )
}

/// CSV text of a panel in the ingest schema (with the outcome column).
pub fn write_panel_csv(panel: &PanelDataset) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(PANEL_HEADER)?;
    for (i, u) in panel.units().iter().enumerate() {
        for (k, year) in panel.years().enumerate() {
            let forest = panel
                .forest_area()
                .map(|f| f[i][k].to_string())
                .unwrap_or_default();
            w.write_record([
                u.clone(),
                year.to_string(),
                forest,
                panel.outcome(i)[k].to_string(),
            ])?;
        }
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn write_covariates_csv(panel: &PanelDataset) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(COVARIATE_HEADER)?;
    for (i, u) in panel.units().iter().enumerate() {
        let c = panel.covariates(i);
        let mut rec = vec![
            u.clone(),
            if panel.is_treated(i) { "1" } else { "0" }.to_string(),
            c.elevation_m.to_string(),
            c.slope_deg.to_string(),
            c.pop_density.to_string(),
            c.road_density.to_string(),
            c.protected_share.to_string(),
            c.forest_pct_base.to_string(),
            c.forest_ha_base.to_string(),
        ];
        rec.extend(c.precip.iter().map(|p| p.to_string()));
        w.write_record(rec)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn cov(elev: f64) -> Covariates {
        Covariates {
            elevation_m: elev,
            slope_deg: 5.0,
            pop_density: 30.0,
            road_density: 0.1,
            protected_share: 0.2,
            forest_pct_base: 40.0,
            forest_ha_base: 1000.0,
            precip: [100.0; 12],
        }
    }

    fn cov_csv(rows: &[(&str, u8)]) -> String {
        let mut s = COVARIATE_HEADER.join(",") + "\n";
        for (k, (id, e)) in rows.iter().enumerate() {
            s += &format!("{id},{e},{},5,30,0.1,0.2,40,1000", 100 + k);
            for m in 0..12 {
                s += &format!(",{}", 100 + m);
            }
            s += "\n";
        }
        s
    }

    fn config(shock: i32) -> StudyConfig {
        StudyConfig {
            shock_year: shock,
            ..StudyConfig::default()
        }
    }

    #[test]
    fn compute_outcome_examples() {
        assert_eq!(compute_outcome(&[100.0, 99.0], 2000).unwrap(), vec![1.0]);
        assert_eq!(compute_outcome(&[100.0, 100.0, 100.0], 2000).unwrap(), vec![0.0, 0.0]);
        assert_eq!(compute_outcome(&[200.0, 190.0, 190.0], 2000).unwrap(), vec![5.0, 0.0]);
        match compute_outcome(&[100.0, 0.0, 5.0], 2000) {
            Err(Error::ZeroForest { year }) => assert_eq!(year, 2001),
            other => panic!("expected zero-forest error, got {other:?}"),
        }
    }

    #[test]
    fn baseline_average_examples() {
        let s: BTreeMap<i32, f64> = [(2013, 10.0), (2014, 20.0)].into();
        assert_eq!(baseline_average(&s, &DEFAULT_BASELINE_YEARS).unwrap(), 15.0);
        assert_eq!(baseline_average(&s, &[2014]).unwrap(), 20.0);
        let z: BTreeMap<i32, f64> = [(2013, 0.0), (2014, 0.0)].into();
        assert_eq!(baseline_average(&z, &DEFAULT_BASELINE_YEARS).unwrap(), 0.0);
        assert!(matches!(
            baseline_average(&s, &[2012, 2013]),
            Err(Error::MissingYear(2012))
        ));
    }

    #[test]
    fn pooling_examples() {
        let a = [1.0, 3.0];
        let b = [3.0, 5.0];
        assert_eq!(pool_outcomes(&[&a, &b], &[1.0, 1.0]).unwrap(), vec![2.0, 4.0]);
        assert_eq!(pool_outcomes(&[&a, &b], &[1.0, 0.0]).unwrap(), a.to_vec());
        // (2*3 + 1*0) / 3
        let v = pool_outcomes(&[&[3.0], &[0.0]], &[2.0, 1.0]).unwrap();
        assert!((v[0] - 2.0).abs() < 1e-15);
        assert!(matches!(
            pool_outcomes(&[&a, &b], &[0.0, 0.0]),
            Err(Error::ZeroWeight)
        ));
    }

    #[test]
    fn avoided_hectares_examples() {
        let a = avoided_hectares(-1.7, 41233.0);
        assert!((a - 700.961).abs() < 1e-9);
        let b = avoided_hectares(-0.7, 41233.0);
        assert!((b - 288.631).abs() < 1e-9);
        assert_eq!(avoided_hectares(0.0, 41233.0), 0.0);
    }

    #[test]
    fn loads_forest_only_panel_and_drops_first_year() {
        let panel = "unit_id,year,forest_ha\na,2000,100\na,2001,99\na,2002,99\nb,2000,200\nb,2001,190\nb,2002,190\n";
        let covs = cov_csv(&[("a", 1), ("b", 0)]);
        let p = load_panel(panel.as_bytes(), "panel", covs.as_bytes(), "cov", &config(2002));
        // only 2 outcome years, shock 2002 leaves one pre-period
        assert!(matches!(p, Err(Error::TooFewPrePeriods { .. })));

        let panel4 = "unit_id,year,forest_ha\na,2000,100\na,2001,99\na,2002,99\na,2003,98\nb,2000,200\nb,2001,190\nb,2002,190\nb,2003,180\n";
        let p = load_panel(panel4.as_bytes(), "panel", covs.as_bytes(), "cov", &config(2003)).unwrap();
        assert_eq!(p.years(), 2001..=2003);
        assert_eq!(p.n_years(), 3);
        assert!((p.outcome(0)[0] - 1.0).abs() < 1e-12);
        assert!((p.outcome(1)[0] - 5.0).abs() < 1e-12);
        assert_eq!(p.n_treated(), 1);
    }

    #[test]
    fn two_unit_three_year_forest_file_gives_two_outcome_years() {
        let panel = "unit_id,year,forest_ha\na,2000,100\na,2001,99\na,2002,99\nb,2000,200\nb,2001,190\nb,2002,190\n";
        let units = vec!["a".to_string(), "b".to_string()];
        let t = read_panel_table(panel.as_bytes(), "p", &units).unwrap();
        assert_eq!(t.first_year, 2001);
        assert_eq!(t.outcome, vec![vec![1.0, 0.0], vec![5.0, 0.0]]);
        assert_eq!(t.forest_area[1], vec![190.0, 190.0]);
    }

    #[test]
    fn gap_year_is_rejected_with_unit_and_year() {
        let panel = "unit_id,year,forest_ha,outcome_pp\na,2000,100,1\na,2001,99,1\na,2002,98.01,1\na,2003,97.0299,1\nb,2000,100,0\nb,2002,100,0\nb,2003,100,0\n";
        let covs = cov_csv(&[("a", 1), ("b", 0)]);
        let err = load_panel(panel.as_bytes(), "p", covs.as_bytes(), "c", &config(2003)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("unit b") && msg.contains("2001"), "{msg}");
    }

    #[test]
    fn rejects_unknown_unit_negative_area_and_missing_cell() {
        let covs = cov_csv(&[("a", 1), ("b", 0)]);
        let unknown = "unit_id,year,forest_ha\nz,2000,1\n";
        let e = load_panel(unknown.as_bytes(), "p", covs.as_bytes(), "c", &config(2003)).unwrap_err();
        assert!(e.to_string().contains("line 2") && e.to_string().contains("unknown unit"));
        let neg = "unit_id,year,forest_ha\na,2000,-1\n";
        let e = load_panel(neg.as_bytes(), "p", covs.as_bytes(), "c", &config(2003)).unwrap_err();
        assert!(e.to_string().contains("negative forest"));
        let missing = "unit_id,year,forest_ha,outcome_pp\na,2000,10,\n";
        let e = load_panel(missing.as_bytes(), "p", covs.as_bytes(), "c", &config(2003)).unwrap_err();
        assert!(e.to_string().contains("missing value"));
    }

    #[test]
    fn outcome_column_must_agree_with_forest() {
        let covs = cov_csv(&[("a", 1), ("b", 0)]);
        let bad = "unit_id,year,forest_ha,outcome_pp\na,2000,100,0\na,2001,99,2\na,2002,99,0\nb,2000,1,0\nb,2001,1,0\nb,2002,1,0\n";
        let e = load_panel(bad.as_bytes(), "p", covs.as_bytes(), "c", &config(2002)).unwrap_err();
        assert!(e.to_string().contains("disagrees"), "{e}");
    }

    #[test]
    fn round_trips_through_csv_writers() {
        let units = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let outcome = vec![vec![1.0, 0.5, 0.25, 2.0], vec![0.0, 0.1, 0.2, 0.3], vec![3.0, 2.0, 1.0, 0.0]];
        let p = PanelDataset::new(PanelParts {
            units,
            first_year: 2010,
            outcome,
            forest_area: None,
            covariates: vec![cov(10.0), cov(20.0), cov(30.0)],
            exposure: vec![true, false, false],
            shock_year: 2012,
        })
        .unwrap();
        let pcsv = String::from_utf8(write_panel_csv(&p).unwrap()).unwrap();
        let ccsv = write_covariates_csv(&p).unwrap();
        // forest column is empty, so a reload fails on the missing cell
        assert!(load_panel(pcsv.as_bytes(), "p", ccsv.as_slice(), "c", &config(2012)).is_err());
    }

    #[test]
    fn study_design_shape_has_73_treated() {
        let n1 = 73;
        let n0 = 365;
        let mut units = Vec::new();
        let mut exposure = Vec::new();
        for i in 0..n1 + n0 {
            units.push(format!("u{i:03}"));
            exposure.push(i < n1);
        }
        let p = PanelDataset::new(PanelParts {
            units,
            first_year: 2004,
            outcome: vec![vec![0.5; 16]; n1 + n0],
            forest_area: None,
            covariates: (0..n1 + n0).map(|i| cov(i as f64)).collect(),
            exposure,
            shock_year: 2015,
        })
        .unwrap();
        assert_eq!(p.n_treated(), 73);
        assert_eq!(p.n_donors(), 365);
        assert_eq!(p.years(), 2004..=2019);
        assert_eq!(p.pre_len(), 11);
    }

    proptest::proptest! {
        #[test]
        fn outcome_then_reconstruction_recovers_forest(
            start in 10.0f64..1e6,
            steps in proptest::collection::vec(-0.2f64..0.2, 1..20),
        ) {
            let mut forest = vec![start];
            for s in &steps {
                let last = *forest.last().unwrap();
                forest.push(last * (1.0 + s));
            }
            let rates = compute_outcome(&forest, 2000).unwrap();
            proptest::prop_assert_eq!(rates.len(), forest.len() - 1);
            let mut f = forest[0];
            for (k, y) in rates.iter().enumerate() {
                f *= 1.0 - y / 100.0;
                proptest::prop_assert!(((f - forest[k + 1]) / forest[k + 1]).abs() < 1e-9);
            }
        }

        #[test]
        fn equal_weight_pooling_is_the_mean(
            a in proptest::collection::vec(-10.0f64..10.0, 5),
            b in proptest::collection::vec(-10.0f64..10.0, 5),
            w in 0.1f64..100.0,
        ) {
            let pooled = pool_outcomes(&[&a, &b], &[w, w]).unwrap();
            for k in 0..5 {
                proptest::prop_assert!((pooled[k] - (a[k] + b[k]) / 2.0).abs() < 1e-12);
            }
        }

        #[test]
        fn avoided_hectares_is_bilinear(e1 in -5.0f64..5.0, e2 in -5.0f64..5.0, f in 0.0f64..1e5, c in 0.0f64..10.0) {
            let lhs = avoided_hectares(e1 + e2, f);
            let rhs = avoided_hectares(e1, f) + avoided_hectares(e2, f);
            proptest::prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
            proptest::prop_assert!((avoided_hectares(e1, c * f) - c * avoided_hectares(e1, f)).abs() < 1e-9 * (1.0 + f));
        }
    }
}
