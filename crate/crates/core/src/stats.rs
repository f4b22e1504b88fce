//! Small descriptive-statistics helpers. Standard deviations use the
//! sample (n - 1) convention throughout the crate.

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance; 0 for fewer than two values.
pub fn sample_var(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

pub fn sample_sd(x: &[f64]) -> f64 {
    sample_var(x).sqrt()
}

/// Sample covariance.
pub fn covariance(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    if n < 2 {
        return 0.0;
    }
    let (mx, my) = (mean(&x[..n]), mean(&y[..n]));
    (0..n).map(|i| (x[i] - mx) * (y[i] - my)).sum::<f64>() / (n as f64 - 1.0)
}

/// Mean and sample variance with frequency weights (total weight - 1 in the
/// denominator).
pub fn weighted_mean_var(x: &[f64], w: &[f64]) -> (f64, f64) {
    let total: f64 = w.iter().sum();
    let m = x.iter().zip(w).map(|(v, w)| v * w).sum::<f64>() / total;
    let ss: f64 = x.iter().zip(w).map(|(v, w)| w * (v - m) * (v - m)).sum();
    let var = if total > 1.0 { ss / (total - 1.0) } else { 0.0 };
    (m, var)
}

/// Linear-interpolation quantile (the common "type 7" definition).
pub fn quantile(x: &[f64], p: f64) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n as f64 - 1.0) * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}
