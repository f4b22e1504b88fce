//! Effect heterogeneity: precipitation PCA and regression trees over
//! unit-level effects.

mod pca;
mod tree;

pub use pca::{pca_fit, PcaModel};
pub use tree::{tree_fit, Split, TreeModel, TreeNode, TreeParams};

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Mean of a unit's effects over `years`.
pub fn effect_summary(effects: &BTreeMap<i32, f64>, years: &[i32]) -> Result<f64> {
    if years.is_empty() {
        return Err(Error::Config("empty summary year set".into()));
    }
    let mut sum = 0.0;
    for y in years {
        sum += effects.get(y).ok_or(Error::MissingYear(*y))?;
    }
    Ok(sum / years.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_examples() {
        let e: BTreeMap<i32, f64> = [(2016, -1.0), (2017, -3.0)].into();
        assert_eq!(effect_summary(&e, &[2016, 2017]).unwrap(), -2.0);
        assert_eq!(effect_summary(&e, &[2017]).unwrap(), -3.0);
        assert!(matches!(effect_summary(&e, &[2018]), Err(Error::MissingYear(2018))));
    }

    #[test]
    fn summaries_of_reported_range_stay_in_range() {
        // unit-level 2017 effects spanned -22.5 to +14.1 pp
        let lows: BTreeMap<i32, f64> = [(2016, -22.5), (2017, -22.5)].into();
        let highs: BTreeMap<i32, f64> = [(2016, 14.1), (2017, 14.1)].into();
        let mixed: BTreeMap<i32, f64> = [(2016, -3.0), (2017, 5.0)].into();
        let s: Vec<f64> = [lows, highs, mixed]
            .iter()
            .map(|e| effect_summary(e, &[2016, 2017]).unwrap())
            .collect();
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        assert!((-22.5..=14.1).contains(&mean));
        assert!(s.iter().all(|v| (-22.5..=14.1).contains(v)));
    }
}
