//! Principal components of the monthly precipitation block.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    /// Column means of the input.
    pub center: Vec<f64>,
    /// Column divisors (sample sd when scaled, 1 otherwise).
    pub scale: Vec<f64>,
    pub scaled: bool,
    /// Component × variable; rows are orthonormal.
    pub loadings: Vec<Vec<f64>>,
    /// Unit × component.
    pub scores: Vec<Vec<f64>>,
    /// Variance of each component's scores, nonincreasing.
    pub explained_variance: Vec<f64>,
}

/// Eigendecomposition of the sample covariance (or correlation, when
/// `scale`) matrix of `data` (rows = units). Each loading vector is signed so
/// its largest-magnitude entry is positive.
pub fn pca_fit(data: &[Vec<f64>], scale: bool) -> Result<PcaModel> {
    let n = data.len();
    if n < 2 {
        return Err(Error::Dimension(format!("PCA needs at least 2 rows, got {n}")));
    }
    let p = data[0].len();
    if p == 0 || data.iter().any(|r| r.len() != p) {
        return Err(Error::Dimension("PCA rows must share a nonzero width".into()));
    }
    if data.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("PCA input".into()));
    }
    let mut center = vec![0.0; p];
    let mut divisor = vec![1.0; p];
    for j in 0..p {
        let col: Vec<f64> = data.iter().map(|r| r[j]).collect();
        center[j] = stats::mean(&col);
        if scale {
            let sd = stats::sample_sd(&col);
            if sd <= 0.0 {
                return Err(Error::ConstantColumn(format!("column {j}")));
            }
            divisor[j] = sd;
        }
    }
    let z = DMatrix::from_fn(n, p, |i, j| (data[i][j] - center[j]) / divisor[j]);
    let cov = (z.transpose() * &z) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut loadings = Vec::with_capacity(p);
    let mut explained_variance = Vec::with_capacity(p);
    for &k in &order {
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let lead = v
            .iter()
            .enumerate()
            .fold(0, |best, (j, x)| if x.abs() > v[best].abs() { j } else { best });
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        loadings.push(v);
        explained_variance.push(eig.eigenvalues[k].max(0.0));
    }
    let scores = (0..n)
        .map(|i| {
            loadings
                .iter()
                .map(|l| (0..p).map(|j| z[(i, j)] * l[j]).sum())
                .collect()
        })
        .collect();
    Ok(PcaModel {
        center,
        scale: divisor,
        scaled: scale,
        loadings,
        scores,
        explained_variance,
    })
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.loadings.len()
    }

    /// Scores of a new observation.
    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        self.loadings
            .iter()
            .map(|l| {
                l.iter()
                    .enumerate()
                    .map(|(j, w)| w * (row[j] - self.center[j]) / self.scale[j])
                    .sum()
            })
            .collect()
    }

    /// Centered (and scaled) data recovered from all components.
    pub fn reconstruct(&self) -> Vec<Vec<f64>> {
        let p = self.center.len();
        self.scores
            .iter()
            .map(|s| {
                (0..p)
                    .map(|j| s.iter().zip(&self.loadings).map(|(sc, l)| sc * l[j]).sum())
                    .collect()
            })
            .collect()
    }

    pub fn explained_ratio(&self) -> Vec<f64> {
        let total: f64 = self.explained_variance.iter().sum();
        self.explained_variance.iter().map(|v| v / total).collect()
    }

    pub fn flip(&mut self, component: usize) {
        self.loadings[component].iter_mut().for_each(|x| *x = -*x);
        self.scores.iter_mut().for_each(|s| s[component] = -s[component]);
    }

    /// Flip `component` if needed so its scores correlate negatively with
    /// `reference` (e.g. annual precipitation, making higher scores drier).
    pub fn orient_against(&mut self, component: usize, reference: &[f64]) {
        let scores: Vec<f64> = self.scores.iter().map(|s| s[component]).collect();
        if stats::covariance(&scores, reference) > 0.0 {
            self.flip(component);
        }
    }
}
