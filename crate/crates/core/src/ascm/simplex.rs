//! Least squares over the probability simplex.
//!
//! Minimizes `||b - A w||^2` subject to `w >= 0, sum(w) = 1` with an
//! accelerated projected-gradient method (exact Euclidean projection onto
//! the simplex, monotone restarts), then polishes the result by solving the
//! equality-constrained problem on the detected support.

use nalgebra::{DMatrix, DVector};

/// Iteration cap of the projected-gradient phase.
pub const MAX_ITERATIONS: usize = 10_000;
/// Stop once an iteration improves the objective by less than this.
pub const IMPROVEMENT_TOL: f64 = 1e-12;

/// Euclidean projection of `v` onto `{w : w >= 0, sum(w) = 1}`.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    if n == 0 {
        return Vec::new();
    }
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cumulative += uk;
        let t = (cumulative - 1.0) / (k as f64 + 1.0);
        if uk - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Quadratic `w'Gw - 2c'w + s` built from the normal equations of
/// `||b - A w||^2`.
#[derive(Clone, Debug)]
pub struct SimplexQp {
    gram: DMatrix<f64>,
    linear: DVector<f64>,
    constant: f64,
}

#[derive(Clone, Debug)]
pub struct QpSolution {
    pub weights: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

impl SimplexQp {
    /// `columns[j]` is the j-th column of `A` (one per weight).
    pub fn from_columns(target: &[f64], columns: &[Vec<f64>]) -> Self {
        let n = columns.len();
        let gram = DMatrix::from_fn(n, n, |i, j| dot(&columns[i], &columns[j]));
        let linear = DVector::from_fn(n, |i, _| dot(&columns[i], target));
        SimplexQp {
            gram,
            linear,
            constant: dot(target, target),
        }
    }

    /// Sum of two problems over the same weights.
    pub fn add_scaled(&self, other: &SimplexQp, scale: f64) -> SimplexQp {
        SimplexQp {
            gram: &self.gram + &other.gram * scale,
            linear: &self.linear + &other.linear * scale,
            constant: self.constant + other.constant * scale,
        }
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn objective(&self, w: &[f64]) -> f64 {
        let w = DVector::from_column_slice(w);
        let quad = w.dot(&(&self.gram * &w));
        (quad - 2.0 * self.linear.dot(&w) + self.constant).max(0.0)
    }

    fn gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        (&self.gram * w - &self.linear) * 2.0
    }

    pub fn solve(&self) -> QpSolution {
        let n = self.dim();
        if n == 1 {
            return QpSolution {
                weights: vec![1.0],
                objective: self.objective(&[1.0]),
                iterations: 0,
            };
        }
        // Gershgorin bound on the largest eigenvalue of 2G
        let lipschitz = 2.0
            * (0..n)
                .map(|i| self.gram.row(i).iter().map(|v| v.abs()).sum::<f64>())
                .fold(0.0, f64::max);
        if lipschitz <= 0.0 {
            let w = vec![1.0 / n as f64; n];
            let objective = self.objective(&w);
            return QpSolution { weights: w, objective, iterations: 0 };
        }
        let step = 1.0 / lipschitz;
        let project = |v: &DVector<f64>| DVector::from_vec(project_simplex(v.as_slice()));

        let mut w = DVector::from_element(n, 1.0 / n as f64);
        let mut f = self.objective(w.as_slice());
        let mut y = w.clone();
        let mut t = 1.0f64;
        let mut iterations = 0;
        while iterations < MAX_ITERATIONS {
            iterations += 1;
            let candidate = project(&(&y - self.gradient(&y) * step));
            let fc = self.objective(candidate.as_slice());
            if fc > f {
                // momentum overshoot: restart from the last iterate
                t = 1.0;
                y = w.clone();
                let plain = project(&(&w - self.gradient(&w) * step));
                let fp = self.objective(plain.as_slice());
                let improvement = f - fp;
                w = plain;
                f = fp.min(f);
                if improvement < IMPROVEMENT_TOL {
                    break;
                }
                continue;
            }
            let improvement = f - fc;
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            y = &candidate + (&candidate - &w) * ((t - 1.0) / t_next);
            t = t_next;
            w = candidate;
            f = fc;
            if improvement < IMPROVEMENT_TOL && self.stationarity_gap(&w) < 1e-9 * (1.0 + f) {
                break;
            }
        }
        let mut weights: Vec<f64> = w.iter().copied().collect();
        let mut objective = f;
        if let Some(p) = self.polish(&weights) {
            // a KKT point is optimal; the tolerance only absorbs cancellation
            // in the expanded objective
            let fp = self.objective(&p);
            if fp <= objective + 1e-9 * (1.0 + objective.abs()) {
                weights = p;
                objective = fp;
            }
        }
        QpSolution { weights, objective, iterations }
    }

    /// Frank-Wolfe gap: an upper bound on `f(w) - min f` over the simplex.
    pub fn stationarity_gap(&self, w: &DVector<f64>) -> f64 {
        let g = self.gradient(w);
        let min = g.iter().copied().fold(f64::INFINITY, f64::min);
        (g.dot(w) - min).max(0.0)
    }

    /// Equality-constrained minimizer on `support` (weights summing to one)
    /// and the multiplier of the sum constraint.
    fn solve_on(&self, support: &[usize]) -> Option<(Vec<f64>, f64)> {
        let s = support.len();
        // KKT system [2G_SS 1; 1' 0] [w; nu] = [2c_S; 1]
        let mut kkt = DMatrix::zeros(s + 1, s + 1);
        let mut rhs = DVector::zeros(s + 1);
        for (a, &i) in support.iter().enumerate() {
            for (b, &j) in support.iter().enumerate() {
                kkt[(a, b)] = 2.0 * self.gram[(i, j)];
            }
            kkt[(a, s)] = 1.0;
            kkt[(s, a)] = 1.0;
            rhs[a] = 2.0 * self.linear[i];
        }
        rhs[s] = 1.0;
        let sol = kkt.svd(true, true).solve(&rhs, 1e-12).ok()?;
        if sol.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some((sol.iter().take(s).copied().collect(), sol[s]))
    }

    /// Active-set refinement from the support of `w`: drop indices whose
    /// weight turns negative, add the index that most violates the KKT
    /// conditions, until none remains. `None` if the loop does not settle.
    fn polish(&self, w: &[f64]) -> Option<Vec<f64>> {
        let n = w.len();
        let mut support: Vec<usize> = (0..n).filter(|&j| w[j] > 1e-10).collect();
        if support.is_empty() {
            return None;
        }
        for _ in 0..(4 * n + 4) {
            let (ws, nu) = self.solve_on(&support)?;
            if let Some((a, _)) = ws
                .iter()
                .enumerate()
                .filter(|(_, v)| **v < -1e-12)
                .min_by(|x, y| x.1.total_cmp(y.1))
            {
                support.remove(a);
                if support.is_empty() {
                    return None;
                }
                continue;
            }
            let mut full = vec![0.0; n];
            for (a, &i) in support.iter().enumerate() {
                full[i] = ws[a].max(0.0);
            }
            let total: f64 = full.iter().sum();
            if total <= 0.0 {
                return None;
            }
            full.iter_mut().for_each(|v| *v /= total);
            // off-support gradients must not fall below the multiplier level -nu
            let g = self.gradient(&DVector::from_column_slice(&full));
            let scale = 1.0 + g.amax() + nu.abs();
            let worst = (0..n)
                .filter(|j| !support.contains(j))
                .map(|j| (j, g[j] + nu))
                .filter(|(_, v)| *v < -1e-10 * scale)
                .min_by(|x, y| x.1.total_cmp(&y.1));
            match worst {
                Some((j, _)) => {
                    support.push(j);
                    support.sort_unstable();
                }
                None => return Some(full),
            }
        }
        None
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
