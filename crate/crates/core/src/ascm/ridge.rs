use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear outcome model `m(x) = intercept + coefficients . x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl RidgeModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }

    pub fn coefficient_norm(&self) -> f64 {
        self.coefficients.iter().map(|b| b * b).sum::<f64>().sqrt()
    }
}

/// Ridge regressions sharing one design matrix, one per target column.
///
/// `features[j]` is donor j's feature vector and `targets[t][j]` donor j's
/// outcome for target period t. The intercept is not penalized: features
/// and targets are centered on the donor means and the intercept absorbs
/// the level.
pub fn fit_ridge_models(features: &[Vec<f64>], targets: &[Vec<f64>], lambda: f64) -> Result<Vec<RidgeModel>> {
    let n = features.len();
    if n == 0 {
        return Err(Error::Dimension("ridge needs at least one donor".into()));
    }
    let p = features[0].len();
    if features.iter().any(|f| f.len() != p) {
        return Err(Error::Dimension("ragged feature matrix".into()));
    }
    if targets.iter().any(|t| t.len() != n) {
        return Err(Error::Dimension("one target value per donor".into()));
    }
    if features.iter().flatten().chain(targets.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ridge inputs".into()));
    }
    if !(lambda >= 0.0) {
        return Err(Error::Config("ridge penalty must be nonnegative".into()));
    }
    let x_mean: Vec<f64> = (0..p)
        .map(|c| features.iter().map(|f| f[c]).sum::<f64>() / n as f64)
        .collect();
    let xc = DMatrix::from_fn(n, p, |j, c| features[j][c] - x_mean[c]);

    let solve: Box<dyn Fn(&DVector<f64>) -> DVector<f64>> = if p == 0 {
        Box::new(|_| DVector::zeros(0))
    } else {
        let mut a = xc.transpose() * &xc;
        for d in 0..p {
            a[(d, d)] += lambda;
        }
        if lambda == 0.0 {
            let svd = a.clone().svd(true, true);
            let max_sv = svd.singular_values.max();
            if svd.rank(max_sv * 1e-10 + f64::MIN_POSITIVE) < p {
                return Err(Error::SingularRidge);
            }
            Box::new(move |rhs| svd.solve(rhs, 0.0).expect("svd has both factors"))
        } else {
            let chol = a.cholesky().ok_or(Error::SingularRidge)?;
            Box::new(move |rhs| chol.solve(rhs))
        }
    };

    Ok(targets
        .iter()
        .map(|y| {
            let y_mean = y.iter().sum::<f64>() / n as f64;
            let yc = DVector::from_fn(n, |j, _| y[j] - y_mean);
            let beta = solve(&(xc.transpose() * yc));
            let intercept = y_mean - beta.iter().zip(&x_mean).map(|(b, m)| b * m).sum::<f64>();
            RidgeModel {
                intercept,
                coefficients: beta.iter().copied().collect(),
            }
        })
        .collect())
}
