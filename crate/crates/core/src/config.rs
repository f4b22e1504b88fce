//! Study configuration and its flat `key=value` file format.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcher::{AuditRule, Metric};

/// Which treated-unit attribute weights the pooled pseudo-unit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolWeight {
    ForestHectares,
    LandArea,
}

impl FromStr for PoolWeight {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forest_ha" | "forest_ha_base" | "forest" => Ok(PoolWeight::ForestHectares),
            "land_area" | "land" => Ok(PoolWeight::LandArea),
            _ => Err(Error::Config(format!(
                "pool_weight must be forest_ha or land_area, found `{s}`"
            ))),
        }
    }
}

impl fmt::Display for PoolWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PoolWeight::ForestHectares => "forest_ha",
            PoolWeight::LandArea => "land_area",
        })
    }
}

/// One robustness variant: overrides applied on top of the main config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub label: String,
    pub k: Option<usize>,
    pub audit: Option<bool>,
}

impl Variant {
    /// Parse `k=1,audit=off`-style overrides.
    pub fn parse(text: &str) -> Result<Self> {
        let mut v = Variant {
            label: text.trim().to_string(),
            k: None,
            audit: None,
        };
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("robustness variant `{part}` is not key=value")))?;
            match key.trim() {
                "k" => {
                    let k: usize = value
                        .trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("bad k in variant `{text}`")))?;
                    if k == 0 {
                        return Err(Error::Config("variant k must be at least 1".into()));
                    }
                    v.k = Some(k);
                }
                "audit" => v.audit = Some(parse_switch(value.trim())?),
                other => {
                    return Err(Error::Config(format!(
                        "unknown robustness key `{other}` (expected k or audit)"
                    )))
                }
            }
        }
        if v.k.is_none() && v.audit.is_none() {
            return Err(Error::Config(format!("empty robustness variant `{text}`")));
        }
        Ok(v)
    }

    /// `k=1;audit=off` → two variants.
    pub fn parse_list(text: &str) -> Result<Vec<Self>> {
        text.split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(Variant::parse)
            .collect()
    }
}

fn parse_switch(v: &str) -> Result<bool> {
    match v {
        "on" | "true" | "1" | "yes" => Ok(true),
        "off" | "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("expected on/off, found `{v}`"))),
    }
}

pub fn parse_year_list(text: &str) -> Result<Vec<i32>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Error::Config(format!("bad year `{s}`")))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub shock_year: i32,
    /// Donors matched to each treated unit.
    pub k: usize,
    /// Allowed covariate imbalance `||X_i - sum_j w_j X_j||` on z-scored
    /// covariates; infinite disables the balance penalty.
    #[serde(with = "extended_f64")]
    pub balance_tolerance: f64,
    pub ridge_lambda: f64,
    /// Pre-period outcome lags added to the augmentation features.
    pub lag_count: usize,
    pub ci_levels: Vec<u8>,
    pub seed: u64,
    pub pool_weight: PoolWeight,
    pub metric: Metric,
    /// `None` disables auditing.
    pub audit: Option<AuditRule>,
    /// Scale precipitation before PCA (correlation matrix).
    pub pca_scale: bool,
    pub placebo_years: Vec<i32>,
    pub robustness: Vec<Variant>,
    /// Years averaged into the per-unit heterogeneity target; empty means
    /// the first two post-shock years.
    pub heterogeneity_years: Vec<i32>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            shock_year: 2015,
            k: 5,
            balance_tolerance: f64::INFINITY,
            ridge_lambda: 0.1,
            lag_count: 3,
            ci_levels: vec![80, 90, 95],
            seed: 0,
            pool_weight: PoolWeight::ForestHectares,
            metric: Metric::Euclidean,
            audit: Some(AuditRule::default()),
            pca_scale: true,
            placebo_years: Vec::new(),
            robustness: Vec::new(),
            heterogeneity_years: Vec::new(),
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if !(self.ridge_lambda >= 0.0) {
            return Err(Error::Config("ridge_lambda must be nonnegative".into()));
        }
        if !(self.balance_tolerance >= 0.0) {
            return Err(Error::Config("balance_tol must be nonnegative".into()));
        }
        if self.ci_levels.is_empty() {
            return Err(Error::Config("ci_levels must not be empty".into()));
        }
        if let Some(l) = self.ci_levels.iter().find(|l| ![80, 90, 95].contains(*l)) {
            return Err(Error::Config(format!("ci level {l} not in {{80, 90, 95}}")));
        }
        if let Some(a) = &self.audit {
            a.validate()?;
        }
        Ok(())
    }

    /// Parse the flat `key=value` format. Blank lines and `#` comments are
    /// ignored; unknown keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = StudyConfig::default();
        let mut seen = BTreeSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse("config", n + 1, format!("expected key=value, found `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::parse("config", n + 1, format!("duplicate key `{key}`")));
            }
            let bad = |what: &str| Error::parse("config", n + 1, format!("{key}: {what} `{value}`"));
            match key {
                "shock_year" => c.shock_year = value.parse().map_err(|_| bad("bad integer"))?,
                "k" => c.k = value.parse().map_err(|_| bad("bad integer"))?,
                "balance_tol" => c.balance_tolerance = value.parse().map_err(|_| bad("bad number"))?,
                "ridge_lambda" => c.ridge_lambda = value.parse().map_err(|_| bad("bad number"))?,
                "lag_count" => c.lag_count = value.parse().map_err(|_| bad("bad integer"))?,
                "ci_levels" => {
                    c.ci_levels = value
                        .split(',')
                        .map(|s| s.trim().parse::<u8>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad("bad level list"))?;
                    c.ci_levels.sort_unstable();
                    c.ci_levels.dedup();
                }
                "seed" => c.seed = value.parse().map_err(|_| bad("bad integer"))?,
                "pool_weight" => c.pool_weight = value.parse()?,
                "metric" => c.metric = value.parse()?,
                "audit" => {
                    if parse_switch(value)? {
                        c.audit.get_or_insert_with(AuditRule::default);
                    } else {
                        c.audit = None;
                    }
                }
                "audit_quantile" => {
                    let q: f64 = value.parse().map_err(|_| bad("bad number"))?;
                    c.audit.get_or_insert_with(AuditRule::default).wetness_quantile = Some(q);
                }
                "pca_scale" => c.pca_scale = parse_switch(value)?,
                "placebo_years" => c.placebo_years = parse_year_list(value)?,
                "robustness" => c.robustness = Variant::parse_list(value)?,
                "heterogeneity_years" => c.heterogeneity_years = parse_year_list(value)?,
                other => {
                    return Err(Error::parse("config", n + 1, format!("unknown key `{other}`")));
                }
            }
        }
        c.validate()?;
        Ok(c)
    }

    /// Serialize back to the `key=value` format. Explicit donor exclusions
    /// are not part of the file format and are omitted.
    pub fn to_text(&self) -> String {
        let join = |v: &[i32]| v.iter().map(i32::to_string).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        s += &format!("shock_year={}\n", self.shock_year);
        s += &format!("k={}\n", self.k);
        s += &format!("balance_tol={}\n", self.balance_tolerance);
        s += &format!("ridge_lambda={}\n", self.ridge_lambda);
        s += &format!("lag_count={}\n", self.lag_count);
        s += &format!(
            "ci_levels={}\n",
            self.ci_levels.iter().map(u8::to_string).collect::<Vec<_>>().join(",")
        );
        s += &format!("seed={}\n", self.seed);
        s += &format!("pool_weight={}\n", self.pool_weight);
        s += &format!("metric={}\n", self.metric);
        match &self.audit {
            Some(a) => {
                s += "audit=on\n";
                if let Some(q) = a.wetness_quantile {
                    s += &format!("audit_quantile={q}\n");
                }
            }
            None => s += "audit=off\n",
        }
        s += &format!("pca_scale={}\n", if self.pca_scale { "on" } else { "off" });
        if !self.placebo_years.is_empty() {
            s += &format!("placebo_years={}\n", join(&self.placebo_years));
        }
        if !self.robustness.is_empty() {
            s += &format!(
                "robustness={}\n",
                self.robustness.iter().map(|v| v.label.as_str()).collect::<Vec<_>>().join(";")
            );
        }
        if !self.heterogeneity_years.is_empty() {
            s += &format!("heterogeneity_years={}\n", join(&self.heterogeneity_years));
        }
        s
    }
}


/// JSON has no infinity; store non-finite values as strings.
mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&v.to_string())
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}
