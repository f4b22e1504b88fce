//! Simulated panels with known effects.
//!
//! Outcomes follow an interactive fixed-effects model
//!
//! ```text
//! Y_it = level + Lambda_t' Phi_i + gamma(X_i) delta(X_i) V_i 1{t >= t*} + gamma(X_i) nu_it + eps_it
//! W_it = rho' Lambda_t + delta(X_i) V_i 1{t >= t*} + nu_it
//! ```
//!
//! where `W` is latent income. Donor covariates come from a small set of
//! latent traits; each treated unit is a random convex combination of a
//! group of "hull" donors, in both covariates and loadings, so a synthetic
//! control exists by construction (unless hull violation is requested).
//!
//! Every random component draws from its own stream, so changing a surface
//! (gamma, delta) never changes the draws.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::design::{Design, DESIGN_COVARIATES};
use crate::error::{Error, Result};
use crate::panel::{Covariates, PanelDataset, PanelParts};

const LATENT_DIM: usize = 4;

/// Coefficient surface over the design covariates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Surface {
    Const(f64),
    /// `intercept + slope * x`.
    Linear { variable: String, slope: f64, intercept: f64 },
    /// `below` when `x < cut`, otherwise `above`.
    Threshold { variable: String, cut: f64, below: f64, above: f64 },
}

impl Surface {
    pub fn variable(&self) -> Option<&str> {
        match self {
            Surface::Const(_) => None,
            Surface::Linear { variable, .. } | Surface::Threshold { variable, .. } => Some(variable),
        }
    }

    /// Evaluate on a design row (ordered as [`DESIGN_COVARIATES`]).
    pub fn eval(&self, row: &[f64]) -> f64 {
        let x = |name: &str| row[DESIGN_COVARIATES.iter().position(|n| *n == name).expect("validated variable")];
        match self {
            Surface::Const(v) => *v,
            Surface::Linear { variable, slope, intercept } => intercept + slope * x(variable),
            Surface::Threshold { variable, cut, below, above } => {
                if x(variable) < *cut {
                    *below
                } else {
                    *above
                }
            }
        }
    }
}

fn num(s: &str) -> Result<f64> {
    s.trim()
        .trim_start_matches('+')
        .parse()
        .map_err(|_| Error::Spec(format!("`{s}` is not a number")))
}

fn check_variable(name: &str) -> Result<String> {
    if DESIGN_COVARIATES.contains(&name) {
        Ok(name.to_string())
    } else {
        Err(Error::Spec(format!(
            "unknown surface variable `{name}`; expected one of {}",
            DESIGN_COVARIATES.join(", ")
        )))
    }
}

impl FromStr for Surface {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        match parts.as_slice() {
            ["const", v] => Ok(Surface::Const(num(v)?)),
            ["linear", var, slope] => Ok(Surface::Linear {
                variable: check_variable(var)?,
                slope: num(slope)?,
                intercept: 0.0,
            }),
            ["linear", var, slope, intercept] => Ok(Surface::Linear {
                variable: check_variable(var)?,
                slope: num(slope)?,
                intercept: num(intercept)?,
            }),
            ["threshold", var, cut, below, above] => Ok(Surface::Threshold {
                variable: check_variable(var)?,
                cut: num(cut)?,
                below: num(below)?,
                above: num(above)?,
            }),
            _ => Err(Error::Spec(format!(
                "bad surface `{s}`; use const:v, linear:var:slope[:intercept] or threshold:var:cut:below:above"
            ))),
        }
    }
}

impl fmt::Display for Surface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Surface::Const(v) => write!(f, "const:{v}"),
            Surface::Linear { variable, slope, intercept } => write!(f, "linear:{variable}:{slope}:{intercept}"),
            Surface::Threshold { variable, cut, below, above } => {
                write!(f, "threshold:{variable}:{cut}:{below}:{above}")
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FactorMode {
    RandomWalk,
    WhiteNoise,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DonorLayout {
    /// Latent traits drawn independently per donor.
    Scattered,
    /// Donors come in tight groups of `hull_size` around distant centers;
    /// each treated unit is built from one group.
    Clustered,
}

macro_rules! keyword_enum {
    ($t:ty, $($name:literal => $v:expr),+) => {
        impl FromStr for $t {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.trim() {
                    $($name => Ok($v),)+
                    other => Err(Error::Spec(format!("unknown value `{other}`"))),
                }
            }
        }
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                $(if *self == $v { return f.write_str($name); })+
                unreachable!()
            }
        }
    };
}

keyword_enum!(FactorMode, "random_walk" => FactorMode::RandomWalk, "white_noise" => FactorMode::WhiteNoise);
keyword_enum!(DonorLayout, "scattered" => DonorLayout::Scattered, "clustered" => DonorLayout::Clustered);

/// Simulation parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub n_treated: usize,
    pub n_donors: usize,
    pub first_year: i32,
    pub last_year: i32,
    pub shock_year: i32,
    /// Number of latent factors.
    pub factors: usize,
    pub factor_mode: FactorMode,
    /// Largest absolute factor value.
    pub factor_scale: f64,
    /// Constant added to every outcome.
    pub level: f64,
    pub loading_noise: f64,
    pub layout: DonorLayout,
    /// Donors combined into each treated unit.
    pub hull_size: usize,
    /// Spread of donors around their group center (clustered layout).
    pub cluster_spread: f64,
    /// Added to every loading of treated units; 0 keeps them in the hull.
    pub hull_violation: f64,
    /// Tilts treated units toward wetter donors (covariate imbalance).
    pub treated_shift: f64,
    pub sigma_eps: f64,
    pub sigma_nu: f64,
    pub gamma: Surface,
    pub delta: Surface,
    /// First-stage factor loadings of income (same for every unit).
    pub rho: Vec<f64>,
}

impl Default for DgpSpec {
    fn default() -> Self {
        DgpSpec {
            n_treated: 20,
            n_donors: 100,
            first_year: 2004,
            last_year: 2019,
            shock_year: 2015,
            factors: 2,
            factor_mode: FactorMode::RandomWalk,
            factor_scale: 1.0,
            level: 1.0,
            loading_noise: 0.1,
            layout: DonorLayout::Scattered,
            hull_size: 5,
            cluster_spread: 0.05,
            hull_violation: 0.0,
            treated_shift: 0.5,
            sigma_eps: 0.1,
            sigma_nu: 0.0,
            gamma: Surface::Const(-2.0),
            delta: Surface::Const(0.5),
            rho: vec![0.5, 0.5],
        }
    }
}

impl DgpSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Spec(m));
        if self.n_treated == 0 || self.n_donors == 0 {
            return fail("need at least one treated and one donor unit".into());
        }
        if self.factors < 1 {
            return fail("factor count must be at least 1".into());
        }
        if !(self.shock_year - self.first_year >= 2 && self.shock_year <= self.last_year) {
            return fail(format!(
                "shock year {} needs 2 pre-periods and must lie in {}..={}",
                self.shock_year, self.first_year, self.last_year
            ));
        }
        for (name, v) in [
            ("sigma_eps", self.sigma_eps),
            ("sigma_nu", self.sigma_nu),
            ("loading_noise", self.loading_noise),
            ("cluster_spread", self.cluster_spread),
            ("factor_scale", self.factor_scale),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(format!("{name} must be finite and nonnegative"));
            }
        }
        if self.hull_size == 0 || self.hull_size > self.n_donors {
            return fail(format!("hull_size must be in 1..={}", self.n_donors));
        }
        if self.rho.len() != self.factors {
            return fail(format!("rho needs {} entries", self.factors));
        }
        Ok(())
    }

    pub fn n_years(&self) -> usize {
        (self.last_year - self.first_year + 1) as usize
    }

    /// Parse `key=value` lines; `#` starts a comment. Omitted keys keep
    /// their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut s = DgpSpec::default();
        let mut seen = std::collections::BTreeSet::new();
        let mut rho_set = false;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Spec(format!("line {}: expected key=value", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Spec(format!("line {}: duplicate key `{key}`", n + 1)));
            }
            let int = || value.parse::<i64>().map_err(|_| Error::Spec(format!("{key}: bad integer `{value}`")));
            let at = |e: Error| Error::Spec(format!("line {}: {key}: {e}", n + 1));
            match key {
                "n_treated" => s.n_treated = int()? as usize,
                "n_donors" => s.n_donors = int()? as usize,
                "first_year" => s.first_year = int()? as i32,
                "last_year" => s.last_year = int()? as i32,
                "shock_year" => s.shock_year = int()? as i32,
                "factors" => s.factors = int()?.max(0) as usize,
                "factor_mode" => s.factor_mode = value.parse().map_err(at)?,
                "factor_scale" => s.factor_scale = num(value)?,
                "level" => s.level = num(value)?,
                "loading_noise" => s.loading_noise = num(value)?,
                "layout" => s.layout = value.parse().map_err(at)?,
                "hull_size" => s.hull_size = int()? as usize,
                "cluster_spread" => s.cluster_spread = num(value)?,
                "hull_violation" => s.hull_violation = num(value)?,
                "treated_shift" => s.treated_shift = num(value)?,
                "sigma_eps" => s.sigma_eps = num(value)?,
                "sigma_nu" => s.sigma_nu = num(value)?,
                "sigma" => {
                    s.sigma_eps = num(value)?;
                    s.sigma_nu = 0.0;
                }
                "gamma" => s.gamma = value.parse().map_err(at)?,
                "delta" => s.delta = value.parse().map_err(at)?,
                "rho" => {
                    s.rho = value.split(',').map(num).collect::<Result<_>>()?;
                    rho_set = true;
                }
                other => return Err(Error::Spec(format!("line {}: unknown key `{other}`", n + 1))),
            }
        }
        if !rho_set {
            s.rho = vec![0.5; s.factors];
        }
        s.validate()?;
        Ok(s)
    }

    pub fn to_text(&self) -> String {
        let rho: Vec<String> = self.rho.iter().map(|v| v.to_string()).collect();
        format!(
            "n_treated={}\nn_donors={}\nfirst_year={}\nlast_year={}\nshock_year={}\nfactors={}\nfactor_mode={}\n\
             factor_scale={}\nlevel={}\nloading_noise={}\nlayout={}\nhull_size={}\ncluster_spread={}\n\
             hull_violation={}\ntreated_shift={}\nsigma_eps={}\nsigma_nu={}\ngamma={}\ndelta={}\nrho={}\n",
            self.n_treated,
            self.n_donors,
            self.first_year,
            self.last_year,
            self.shock_year,
            self.factors,
            self.factor_mode,
            self.factor_scale,
            self.level,
            self.loading_noise,
            self.layout,
            self.hull_size,
            self.cluster_spread,
            self.hull_violation,
            self.treated_shift,
            self.sigma_eps,
            self.sigma_nu,
            self.gamma,
            self.delta,
            rho.join(","),
        )
    }
}

/// Known quantities behind a simulated panel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Treated unit ids in panel order.
    pub treated: Vec<String>,
    pub gamma: Vec<f64>,
    pub delta: Vec<f64>,
    /// `tau_i = gamma_i delta_i`.
    pub tau: Vec<f64>,
    /// Donors combined into each treated unit and their weights.
    pub hull_donors: Vec<Vec<String>>,
    pub hull_weights: Vec<Vec<f64>>,
    /// Average effect on the treated per post-shock year.
    pub att: BTreeMap<i32, f64>,
    /// `factors[t][k]`.
    pub factors: Vec<Vec<f64>>,
    /// Composite loadings per unit in panel order.
    pub loadings: Vec<Vec<f64>>,
}

impl GroundTruth {
    pub fn tau_of(&self, unit: &str) -> Option<f64> {
        self.treated.iter().position(|u| u == unit).map(|k| self.tau[k])
    }

    /// Effect of a pooled unit built with (unnormalized) `weights`.
    pub fn pooled_att(&self, weights: &[f64]) -> f64 {
        let total: f64 = weights.iter().sum();
        self.tau.iter().zip(weights).map(|(t, w)| t * w).sum::<f64>() / total
    }

    /// `unit_id,tau_true` CSV.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["unit_id", "tau_true"])?;
        for (u, t) in self.treated.iter().zip(&self.tau) {
            w.write_record([u.clone(), t.to_string()])?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

#[derive(Clone, Debug)]
pub struct SimulatedPanel {
    pub panel: PanelDataset,
    pub truth: GroundTruth,
    /// Latent income `W[i][t]`.
    pub income: Vec<Vec<f64>>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Realistic covariates from latent traits: z0 wetness, z1 ruggedness,
/// z2 accessibility, z3 forest cover. `e` holds idiosyncratic draws.
fn covariates_from(z: &[f64; LATENT_DIM], e: &[f64; 4], month_noise: &[f64; 12]) -> Covariates {
    let wet_level = 150.0 * (0.3 * z[0]).exp();
    let seasonality = 0.6 * logistic(-z[0] + 0.3 * e[3]);
    let mut precip = [0.0; 12];
    for (m, p) in precip.iter_mut().enumerate() {
        let phase = 2.0 * std::f64::consts::PI * m as f64 / 12.0;
        *p = wet_level * (1.0 + seasonality * phase.cos()) * (0.03 * month_noise[m]).exp();
    }
    Covariates {
        elevation_m: 300.0 * (0.6 * z[1] + 0.1 * e[0]).exp(),
        slope_deg: 2.0 + 10.0 * logistic(z[1] + 0.2 * e[1]),
        pop_density: 30.0 * (0.5 * z[2] + 0.1 * e[2]).exp(),
        road_density: 0.2 * (0.4 * z[2] - 0.2 * z[0]).exp(),
        protected_share: 0.8 * logistic(z[3] - 1.0),
        forest_pct_base: 100.0 * logistic(z[3] + 0.3),
        forest_ha_base: 5000.0 * (0.5 * z[3] + 0.3 * e[0]).exp(),
        precip,
    }
}

fn convex<T: Copy + Default + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>>(
    values: &[T],
    weights: &[f64],
) -> T {
    values.iter().zip(weights).fold(T::default(), |acc, (v, w)| acc + *v * *w)
}

fn blend_covariates(records: &[&Covariates], weights: &[f64]) -> Covariates {
    let pick = |f: &dyn Fn(&Covariates) -> f64| -> f64 {
        convex(&records.iter().map(|c| f(c)).collect::<Vec<_>>(), weights)
    };
    let mut precip = [0.0; 12];
    for (m, p) in precip.iter_mut().enumerate() {
        *p = pick(&|c| c.precip[m]);
    }
    Covariates {
        elevation_m: pick(&|c| c.elevation_m),
        slope_deg: pick(&|c| c.slope_deg),
        pop_density: pick(&|c| c.pop_density),
        road_density: pick(&|c| c.road_density),
        protected_share: pick(&|c| c.protected_share),
        forest_pct_base: pick(&|c| c.forest_pct_base),
        forest_ha_base: pick(&|c| c.forest_ha_base),
        precip,
    }
}

fn dirichlet(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let g = Gamma::new(1.0, 1.0).expect("valid gamma");
    let draws: Vec<f64> = (0..n).map(|_| g.sample(rng) + 1e-3).collect();
    let total: f64 = draws.iter().sum();
    draws.iter().map(|d| d / total).collect()
}

fn factor_paths(spec: &DgpSpec, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let t = spec.n_years();
    let r = spec.factors;
    let mut f = vec![vec![0.0; r]; t];
    for k in 0..r {
        let mut path: Vec<f64> = Vec::with_capacity(t);
        let mut x = 0.0;
        for _ in 0..t {
            let step = normal(rng);
            x = match spec.factor_mode {
                FactorMode::RandomWalk => x + step,
                FactorMode::WhiteNoise => step,
            };
            path.push(x);
        }
        let m = path.iter().sum::<f64>() / t as f64;
        let peak = path.iter().map(|v| (v - m).abs()).fold(0.0, f64::max);
        let scale = if peak > 0.0 { spec.factor_scale / peak } else { 0.0 };
        for (row, v) in f.iter_mut().zip(&path) {
            row[k] = (v - m) * scale;
        }
    }
    f
}

/// Draw a panel from `spec`. Identical `(spec, seed)` give identical output.
pub fn simulate_panel(spec: &DgpSpec, seed: u64) -> Result<SimulatedPanel> {
    spec.validate()?;
    let n0 = spec.n_donors;
    let n1 = spec.n_treated;
    let r = spec.factors;
    let mut cov_rng = stream(seed, 1);
    let mut load_rng = stream(seed, 2);
    let mut factor_rng = stream(seed, 3);
    let mut noise_rng = stream(seed, 4);
    let mut assign_rng = stream(seed, 5);

    // donor latent traits
    let mut latent: Vec<[f64; LATENT_DIM]> = Vec::with_capacity(n0);
    let groups: Vec<Vec<usize>> = match spec.layout {
        DonorLayout::Scattered => {
            for _ in 0..n0 {
                latent.push(std::array::from_fn(|_| normal(&mut cov_rng)));
            }
            Vec::new()
        }
        DonorLayout::Clustered => {
            let size = spec.hull_size;
            let n_groups = n0 / size;
            if n_groups == 0 {
                return Err(Error::Spec("clustered layout needs n_donors >= hull_size".into()));
            }
            let centers: Vec<[f64; LATENT_DIM]> = (0..n_groups)
                .map(|_| std::array::from_fn(|_| 2.0 * normal(&mut cov_rng)))
                .collect();
            for j in 0..n0 {
                let c = centers[(j / size).min(n_groups - 1)];
                latent.push(std::array::from_fn(|d| c[d] + spec.cluster_spread * normal(&mut cov_rng)));
            }
            (0..n_groups).map(|g| (g * size..(g + 1) * size).collect()).collect()
        }
    };
    let donor_covs: Vec<Covariates> = latent
        .iter()
        .map(|z| {
            let e: [f64; 4] = std::array::from_fn(|_| normal(&mut cov_rng));
            let m: [f64; 12] = std::array::from_fn(|_| normal(&mut cov_rng));
            let scale = if spec.layout == DonorLayout::Clustered { spec.cluster_spread } else { 1.0 };
            covariates_from(z, &e.map(|v| v * scale), &m.map(|v| v * scale))
        })
        .collect();

    // donor loadings: linear in the latent traits plus noise
    let b: Vec<[f64; LATENT_DIM]> = (0..r)
        .map(|_| std::array::from_fn(|_| normal(&mut load_rng) / (LATENT_DIM as f64).sqrt()))
        .collect();
    let donor_load: Vec<Vec<f64>> = latent
        .iter()
        .map(|z| {
            (0..r)
                .map(|k| {
                    let base: f64 = b[k].iter().zip(z).map(|(a, v)| a * v).sum();
                    base + spec.loading_noise * normal(&mut load_rng)
                })
                .collect()
        })
        .collect();

    // treated units as convex combinations of donor groups
    let mut hull_idx = Vec::with_capacity(n1);
    let mut hull_w = Vec::with_capacity(n1);
    for i in 0..n1 {
        let members: Vec<usize> = match spec.layout {
            DonorLayout::Clustered => groups[i % groups.len()].clone(),
            DonorLayout::Scattered => {
                let tilt: Vec<f64> = latent.iter().map(|z| (spec.treated_shift * z[0]).exp()).collect();
                let total: f64 = tilt.iter().sum();
                let mut u = assign_rng.random::<f64>() * total;
                let mut anchor = n0 - 1;
                for (j, t) in tilt.iter().enumerate() {
                    if u < *t {
                        anchor = j;
                        break;
                    }
                    u -= t;
                }
                let mut by_dist: Vec<(f64, usize)> = latent
                    .iter()
                    .enumerate()
                    .map(|(j, z)| {
                        let d: f64 = z.iter().zip(&latent[anchor]).map(|(a, b)| (a - b) * (a - b)).sum();
                        (d, j)
                    })
                    .collect();
                by_dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                by_dist.iter().take(spec.hull_size).map(|(_, j)| *j).collect()
            }
        };
        hull_w.push(dirichlet(&mut assign_rng, members.len()));
        hull_idx.push(members);
    }
    let treated_covs: Vec<Covariates> = hull_idx
        .iter()
        .zip(&hull_w)
        .map(|(m, w)| blend_covariates(&m.iter().map(|&j| &donor_covs[j]).collect::<Vec<_>>(), w))
        .collect();
    let treated_load: Vec<Vec<f64>> = hull_idx
        .iter()
        .zip(&hull_w)
        .map(|(m, w)| {
            (0..r)
                .map(|k| convex(&m.iter().map(|&j| donor_load[j][k]).collect::<Vec<_>>(), w) + spec.hull_violation)
                .collect()
        })
        .collect();

    let units: Vec<String> = (1..=n1)
        .map(|i| format!("T{i:04}"))
        .chain((1..=n0).map(|j| format!("D{j:04}")))
        .collect();
    let covariates: Vec<Covariates> = treated_covs.iter().chain(&donor_covs).cloned().collect();
    let loadings: Vec<Vec<f64>> = treated_load.iter().chain(&donor_load).cloned().collect();
    let exposure: Vec<bool> = (0..n1 + n0).map(|i| i < n1).collect();

    let design = Design::build(&covariates, true)?;
    let gamma: Vec<f64> = design.table.rows.iter().map(|row| spec.gamma.eval(row)).collect();
    let delta: Vec<f64> = (0..n1 + n0)
        .map(|i| if exposure[i] { spec.delta.eval(&design.table.rows[i]) } else { 0.0 })
        .collect();
    let treated_delta = &delta[..n1];
    if treated_delta.iter().any(|d| *d < 0.0) {
        return Err(Error::Spec("delta must be nonnegative on every treated unit".into()));
    }
    if treated_delta.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Spec("delta must have a positive mean among treated units".into()));
    }

    let factors = factor_paths(spec, &mut factor_rng);
    let t_len = spec.n_years();
    let shock_k = (spec.shock_year - spec.first_year) as usize;
    let eps_dist = Normal::new(0.0, spec.sigma_eps).expect("validated sigma");
    let nu_dist = Normal::new(0.0, spec.sigma_nu).expect("validated sigma");
    let mut outcome = vec![vec![0.0; t_len]; n1 + n0];
    let mut income = vec![vec![0.0; t_len]; n1 + n0];
    for i in 0..n1 + n0 {
        for t in 0..t_len {
            let eps = eps_dist.sample(&mut noise_rng);
            let nu = nu_dist.sample(&mut noise_rng);
            let z = if t >= shock_k { 1.0 } else { 0.0 };
            let common: f64 = factors[t].iter().zip(&loadings[i]).map(|(l, p)| l * p).sum();
            let shock = delta[i] * z;
            outcome[i][t] = spec.level + common + gamma[i] * shock + gamma[i] * nu + eps;
            let rho_term: f64 = factors[t].iter().zip(&spec.rho).map(|(l, p)| l * p).sum();
            income[i][t] = rho_term + shock + nu;
        }
    }

    let mut forest = Vec::with_capacity(n1 + n0);
    for (i, row) in outcome.iter().enumerate() {
        let mut f = vec![covariates[i].forest_ha_base; t_len];
        for t in 1..t_len {
            f[t] = f[t - 1] * (1.0 - row[t] / 100.0);
        }
        forest.push(f);
    }

    let tau: Vec<f64> = (0..n1).map(|i| gamma[i] * delta[i]).collect();
    let att_value = tau.iter().sum::<f64>() / n1 as f64;
    let panel = PanelDataset::new(PanelParts {
        units: units.clone(),
        first_year: spec.first_year,
        outcome,
        forest_area: Some(forest),
        covariates,
        exposure,
        shock_year: spec.shock_year,
    })?;
    let truth = GroundTruth {
        treated: units[..n1].to_vec(),
        gamma: gamma[..n1].to_vec(),
        delta: treated_delta.to_vec(),
        tau,
        hull_donors: hull_idx
            .iter()
            .map(|m| m.iter().map(|&j| units[n1 + j].clone()).collect())
            .collect(),
        hull_weights: hull_w,
        att: (spec.shock_year..=spec.last_year).map(|y| (y, att_value)).collect(),
        factors,
        loadings,
    };
    Ok(SimulatedPanel { panel, truth, income })
}

/// Average effect on the treated per post-shock year: the mean of
/// `gamma(X_i) delta(X_i)` over treated covariates (constant over time).
pub fn true_att(spec: &DgpSpec, treated_design_rows: &[Vec<f64>]) -> BTreeMap<i32, f64> {
    let n = treated_design_rows.len().max(1) as f64;
    let v: f64 = treated_design_rows
        .iter()
        .map(|row| spec.gamma.eval(row) * spec.delta.eval(row))
        .sum::<f64>()
        / n;
    (spec.shock_year..=spec.last_year).map(|y| (y, v)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Pass,
    Fail,
    Uninformative,
}

/// Units grouped by the sign of their income effect.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellCheck {
    /// -1, 0 or +1.
    pub gamma_sign: i8,
    pub n_units: usize,
    /// `sign(tau_i) == sign(gamma_i)` for every informative unit.
    pub analytic: bool,
    pub estimated_mean: Option<f64>,
    pub status: CellStatus,
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Check that effect signs reveal income-effect signs, per cell of units
/// sharing `sign(gamma)`. `estimates` maps treated unit ids to estimated
/// effects. Cells where `delta` vanishes are uninformative; the zero-gamma
/// cell passes when its true effects are exactly zero.
pub fn sign_identification_check(truth: &GroundTruth, estimates: &BTreeMap<String, f64>) -> Vec<CellCheck> {
    [-1i8, 0, 1]
        .iter()
        .filter_map(|&s| {
            let members: Vec<usize> = (0..truth.treated.len()).filter(|&i| sign(truth.gamma[i]) == s).collect();
            if members.is_empty() {
                return None;
            }
            let informative: Vec<usize> = members.iter().copied().filter(|&i| truth.delta[i] > 0.0).collect();
            let analytic = informative.iter().all(|&i| sign(truth.tau[i]) == s);
            let est: Vec<f64> = informative
                .iter()
                .filter_map(|&i| estimates.get(&truth.treated[i]).copied())
                .collect();
            let estimated_mean = (!est.is_empty()).then(|| est.iter().sum::<f64>() / est.len() as f64);
            let status = if informative.is_empty() {
                CellStatus::Uninformative
            } else if s == 0 {
                if members.iter().all(|&i| truth.tau[i] == 0.0) {
                    CellStatus::Pass
                } else {
                    CellStatus::Fail
                }
            } else {
                match estimated_mean {
                    Some(m) if analytic && sign(m) == s => CellStatus::Pass,
                    Some(_) => CellStatus::Fail,
                    None if analytic => CellStatus::Uninformative,
                    None => CellStatus::Fail,
                }
            };
            Some(CellCheck {
                gamma_sign: s,
                n_units: members.len(),
                analytic,
                estimated_mean,
                status,
            })
        })
        .collect()
}
