//! The nine baseline covariates used for matching, augmentation and
//! heterogeneity, with precipitation summarized by its first two principal
//! components.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::heterogeneity::{pca_fit, PcaModel};
use crate::panel::Covariates;
use crate::stats;

pub const DESIGN_COVARIATES: [&str; 9] = [
    "forest_pct_base",
    "forest_ha_base",
    "pop_density",
    "elevation",
    "slope",
    "precPC1",
    "precPC2",
    "protected_share",
    "road_density",
];

/// Named covariate columns, one row per unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovariateTable {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CovariateTable {
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }
}

/// Covariate design for one set of units plus the precipitation PCA it was
/// derived from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub table: CovariateTable,
    pub pca: PcaModel,
}

fn seasonality(c: &Covariates) -> f64 {
    let m = stats::mean(&c.precip);
    if m > 0.0 {
        stats::sample_sd(&c.precip) / m
    } else {
        0.0
    }
}

impl Design {
    /// PC1 is oriented so higher scores are drier (negative association
    /// with annual precipitation) and PC2 so higher scores are less seasonal.
    pub fn build(covariates: &[Covariates], pca_scale: bool) -> Result<Self> {
        let precip: Vec<Vec<f64>> = covariates.iter().map(|c| c.precip.to_vec()).collect();
        let mut pca = pca_fit(&precip, pca_scale)?;
        let annual: Vec<f64> = covariates.iter().map(Covariates::annual_precip).collect();
        pca.orient_against(0, &annual);
        if pca.n_components() > 1 {
            let seas: Vec<f64> = covariates.iter().map(seasonality).collect();
            pca.orient_against(1, &seas);
        }
        let rows = covariates
            .iter()
            .zip(&pca.scores)
            .map(|(c, s)| row(c, s[0], s.get(1).copied().unwrap_or(0.0)))
            .collect();
        Ok(Design {
            table: CovariateTable {
                names: DESIGN_COVARIATES.iter().map(|s| s.to_string()).collect(),
                rows,
            },
            pca,
        })
    }

    /// Design row for a record outside the fitted sample (e.g. a pooled unit).
    pub fn row_for(&self, c: &Covariates) -> Vec<f64> {
        let s = self.pca.transform(&c.precip);
        row(c, s[0], s.get(1).copied().unwrap_or(0.0))
    }
}

fn row(c: &Covariates, pc1: f64, pc2: f64) -> Vec<f64> {
    vec![
        c.forest_pct_base,
        c.forest_ha_base,
        c.pop_density,
        c.elevation_m,
        c.slope_deg,
        pc1,
        pc2,
        c.protected_share,
        c.road_density,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(wet: f64, seas: f64) -> Covariates {
        let mut precip = [0.0; 12];
        for (m, p) in precip.iter_mut().enumerate() {
            *p = wet * (1.0 + seas * (std::f64::consts::TAU * m as f64 / 12.0).cos())
                + (m as f64 * wet).sin();
        }
        Covariates {
            elevation_m: 100.0 * wet,
            slope_deg: 3.0,
            pop_density: 20.0,
            road_density: 0.1,
            protected_share: 0.1,
            forest_pct_base: 50.0,
            forest_ha_base: 1e4,
            precip,
        }
    }

    #[test]
    fn pc1_is_higher_for_drier_units() {
        let covs: Vec<Covariates> = (0..20)
            .map(|i| record(50.0 + 10.0 * i as f64, 0.2 + 0.02 * (i % 7) as f64))
            .collect();
        let d = Design::build(&covs, true).unwrap();
        let pc1 = d.table.column(5);
        let annual: Vec<f64> = covs.iter().map(Covariates::annual_precip).collect();
        assert!(stats::covariance(&pc1, &annual) < 0.0);
        assert_eq!(d.table.names.len(), 9);
        assert_eq!(d.table.index_of("precPC1"), Some(5));
    }

    #[test]
    fn out_of_sample_rows_match_in_sample_rows() {
        let covs: Vec<Covariates> = (0..10).map(|i| record(60.0 + 7.0 * i as f64, 0.3)).collect();
        let d = Design::build(&covs, true).unwrap();
        for (c, r) in covs.iter().zip(&d.table.rows) {
            for (a, b) in d.row_for(c).iter().zip(r) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
