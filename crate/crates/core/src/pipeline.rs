//! End-to-end study runs: ingest, match, estimate, infer, heterogeneity.
//!
//! Every artifact is built in memory and written only once all requested
//! stages have succeeded, so a failing run leaves no partial output behind.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ascm::{
    effects_csv, estimate_effects_with, estimate_pooled_with, pooled_effects_csv, read_effects_csv, weight_report,
    weights_csv, AscmContext, PooledEstimate, UnitEffects, WeightRow,
};
use crate::config::StudyConfig;
use crate::design::{Design, DESIGN_COVARIATES};
use crate::dgp::{simulate_panel, DgpSpec, GroundTruth};
use crate::error::{Error, Result};
use crate::heterogeneity::{effect_summary, tree_fit, PcaModel, TreeModel, TreeParams};
use crate::inference::{placebo_csv, placebo_in_time, robustness_csv, robustness_suite, PlaceboReport, RobustnessReport};
use crate::matcher::{balance_report, match_nearest, AuditRule, BalanceRow, MatchResult, Metric};
use crate::panel::{load_panel, pool_treated, write_covariates_csv, write_panel_csv, PanelDataset};
use crate::stats;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Match,
    Estimate,
    Infer,
    Heterogeneity,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Ingest, Stage::Match, Stage::Estimate, Stage::Infer, Stage::Heterogeneity];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Match => "match",
            Stage::Estimate => "estimate",
            Stage::Infer => "infer",
            Stage::Heterogeneity => "heterogeneity",
        }
    }

    /// Parse a comma-separated stage list.
    pub fn parse_list(text: &str) -> Result<BTreeSet<Stage>> {
        text.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect()
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Stage::ALL.iter().map(|s| s.name()).collect();
                Error::Config(format!("unknown stage `{s}`; valid stages: {}", names.join(", ")))
            })
    }
}

/// Everything a run needs. Paths are read once; digests are keyed by file
/// name so reports do not depend on where inputs live.
#[derive(Clone, Debug)]
pub struct RunRequest {
    pub config: StudyConfig,
    pub panel: PathBuf,
    pub covariates: PathBuf,
    pub price: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// `None` runs every stage.
    pub stages: Option<BTreeSet<Stage>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub seed: u64,
    /// File name → SHA-256 of its contents; the effective config is hashed
    /// under `config`.
    pub inputs: BTreeMap<String, String>,
    pub ridge_lambda: f64,
    pub lambda_selection: String,
    pub pca_scaled: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PanelSummary {
    pub n_units: usize,
    pub n_treated: usize,
    pub n_donors: usize,
    pub first_year: i32,
    pub last_year: i32,
    pub shock_year: i32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchSummary {
    pub k: usize,
    pub metric: Metric,
    pub audited: bool,
    pub eligible_donors: usize,
    pub retained_donors: Vec<String>,
    pub balance: Vec<BalanceRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneityReport {
    /// Years averaged into each unit's summary effect.
    pub years: Vec<i32>,
    pub units: Vec<String>,
    pub targets: Vec<f64>,
    pub tree: TreeModel,
    /// Precipitation PCA of every unit, PC1 oriented so higher is drier.
    pub pca: PcaModel,
    pub pca_units: Vec<String>,
    pub pca_exposure: Vec<bool>,
}

/// Pooled treated and mean donor outcome paths (deforestation overlay).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomePaths {
    pub years: Vec<i32>,
    pub treated: Vec<f64>,
    pub donors: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PricePoint {
    pub year: i32,
    pub price_usd_per_kg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub provenance: Provenance,
    pub stages: Vec<Stage>,
    pub config: StudyConfig,
    pub panel: PanelSummary,
    pub outcome_paths: OutcomePaths,
    pub matching: Option<MatchSummary>,
    pub pooled: Option<PooledEstimate>,
    pub unit_effects: Option<UnitEffects>,
    pub mean_weights: Option<Vec<WeightRow>>,
    pub placebo: Option<PlaceboReport>,
    pub robustness: Option<RobustnessReport>,
    pub heterogeneity: Option<HeterogeneityReport>,
    pub price: Option<Vec<PricePoint>>,
}

impl RunReport {
    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut v = serde_json::to_vec_pretty(self)?;
        v.push(b'\n');
        Ok(v)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        Ok(serde_json::from_slice(bytes)?)
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn file_key(p: &Path) -> String {
    p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn read_input(p: &Path) -> Result<Vec<u8>> {
    fs::read(p).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", p.display()))))
}

pub fn read_price_csv<R: std::io::Read>(reader: R, source: &str) -> Result<Vec<PricePoint>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != ["year", "price_usd_per_kg"] {
        return Err(Error::parse(source, 1, "expected header year,price_usd_per_kg"));
    }
    let mut out = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |m: &str| Error::parse(source, n + 2, m.to_string());
        let year = rec[0].trim().parse().map_err(|_| bad("bad year"))?;
        let price: f64 = rec[1].trim().parse().map_err(|_| bad("bad price"))?;
        if !price.is_finite() {
            return Err(bad("non-finite price"));
        }
        out.push(PricePoint { year, price_usd_per_kg: price });
    }
    Ok(out)
}

/// Output artifacts, keyed by file name.
type Artifacts = BTreeMap<&'static str, Vec<u8>>;

fn outcome_paths(panel: &PanelDataset, config: &StudyConfig) -> Result<OutcomePaths> {
    let pooled = pool_treated(panel, config.pool_weight)?;
    let donors = panel.donors();
    let donors_mean = (0..panel.n_years())
        .map(|t| stats::mean(&donors.iter().map(|&j| panel.outcome(j)[t]).collect::<Vec<_>>()))
        .collect();
    Ok(OutcomePaths {
        years: panel.years().collect(),
        treated: pooled.outcome,
        donors: donors_mean,
    })
}

fn with_balance(mut m: MatchResult, panel: &PanelDataset, design: &Design) -> Result<MatchResult> {
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for dm in &m.matches {
        for d in &dm.donors {
            let j = panel
                .unit_index(d)
                .ok_or_else(|| Error::InvalidPanel(format!("matched donor {d} is not in the panel")))?;
            *counts.entry(j).or_insert(0.0) += 1.0;
        }
    }
    let mult: Vec<(usize, f64)> = counts.into_iter().collect();
    m.balance = balance_report(&design.table, &panel.treated(), &panel.donors(), &mult);
    Ok(m)
}

fn load_artifact(out_dir: &Path, name: &str, stage: Stage) -> Result<Vec<u8>> {
    let p = out_dir.join(name);
    fs::read(&p).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{} not found; run the {stage} stage first ({e})", p.display()),
        ))
    })
}

/// Per-unit summary effects over the configured (or default) years.
fn heterogeneity(
    panel: &PanelDataset,
    design: &Design,
    effects: &BTreeMap<String, BTreeMap<i32, f64>>,
    config: &StudyConfig,
) -> Result<HeterogeneityReport> {
    let years = if config.heterogeneity_years.is_empty() {
        let s = panel.shock_year();
        let post: Vec<i32> = panel.post_years().collect();
        let wanted: Vec<i32> = [s + 1, s + 2].into_iter().filter(|y| post.contains(y)).collect();
        if wanted.is_empty() { post } else { wanted }
    } else {
        config.heterogeneity_years.clone()
    };
    let mut units = Vec::new();
    let mut targets = Vec::new();
    let mut rows = Vec::new();
    for i in panel.treated() {
        let id = &panel.units()[i];
        let Some(e) = effects.get(id) else { continue };
        targets.push(effect_summary(e, &years)?);
        units.push(id.clone());
        rows.push(design.table.rows[i].clone());
    }
    let variables: Vec<String> = DESIGN_COVARIATES.iter().map(|s| s.to_string()).collect();
    let tree = tree_fit(&targets, &rows, &variables, TreeParams::default())?;
    Ok(HeterogeneityReport {
        years,
        units,
        targets,
        tree,
        pca: design.pca.clone(),
        pca_units: panel.units().to_vec(),
        pca_exposure: panel.exposure().to_vec(),
    })
}

fn tree_csv(tree: &TreeModel) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["node_id", "parent", "split_var", "threshold", "n", "mean", "sse"])?;
    for row in tree.table() {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn pca_loadings_csv(pca: &PcaModel) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["component", "variable", "loading", "explained_variance", "explained_ratio"])?;
    let ratio = pca.explained_ratio();
    for (c, row) in pca.loadings.iter().enumerate() {
        for (m, v) in row.iter().enumerate() {
            w.write_record([
                format!("PC{}", c + 1),
                format!("prec_m{:02}", m + 1),
                v.to_string(),
                pca.explained_variance[c].to_string(),
                ratio[c].to_string(),
            ])?;
        }
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn pca_scores_csv(h: &HeterogeneityReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let n_comp = h.pca.n_components();
    let mut header = vec!["unit_id".to_string(), "exposure".to_string()];
    header.extend((1..=n_comp).map(|c| format!("pc{c}")));
    w.write_record(&header)?;
    for ((u, e), s) in h.pca_units.iter().zip(&h.pca_exposure).zip(&h.pca.scores) {
        let mut rec = vec![u.clone(), (*e as u8).to_string()];
        rec.extend(s.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Run the requested stages and write artifacts plus `report.json` into
/// `out_dir`. Skipped upstream stages are replaced by their artifacts from a
/// previous run in the same directory.
pub fn run_pipeline(req: &RunRequest) -> Result<RunReport> {
    let (report, artifacts) = run_in_memory(req)?;
    write_artifacts(&req.out_dir, &artifacts).map_err(|e| e.in_stage("report"))?;
    Ok(report)
}

fn run_in_memory(req: &RunRequest) -> Result<(RunReport, Artifacts)> {
    let config = &req.config;
    config.validate()?;
    let mut stages: BTreeSet<Stage> = req.stages.clone().unwrap_or_else(|| Stage::ALL.into_iter().collect());
    stages.insert(Stage::Ingest);
    let wants = |s: Stage| stages.contains(&s);

    // ingest
    let panel_bytes = read_input(&req.panel)?;
    let cov_bytes = read_input(&req.covariates)?;
    let mut inputs = BTreeMap::new();
    inputs.insert(file_key(&req.panel), sha256_hex(&panel_bytes));
    inputs.insert(file_key(&req.covariates), sha256_hex(&cov_bytes));
    inputs.insert("config".to_string(), sha256_hex(config.to_text().as_bytes()));
    let price = match &req.price {
        Some(p) => {
            let bytes = read_input(p)?;
            inputs.insert(file_key(p), sha256_hex(&bytes));
            Some(read_price_csv(bytes.as_slice(), &file_key(p))?)
        }
        None => None,
    };
    let panel = load_panel(
        panel_bytes.as_slice(),
        &file_key(&req.panel),
        cov_bytes.as_slice(),
        &file_key(&req.covariates),
        config,
    )?;
    let design = Design::build(panel.all_covariates(), config.pca_scale).map_err(|e| e.in_stage("ingest"))?;
    let paths = outcome_paths(&panel, config).map_err(|e| e.in_stage("ingest"))?;

    let mut artifacts = Artifacts::new();
    let mut report = RunReport {
        provenance: Provenance {
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            inputs,
            ridge_lambda: config.ridge_lambda,
            lambda_selection: "fixed".into(),
            pca_scaled: config.pca_scale,
        },
        stages: stages.iter().copied().collect(),
        config: config.clone(),
        panel: PanelSummary {
            n_units: panel.n_units(),
            n_treated: panel.n_treated(),
            n_donors: panel.n_donors(),
            first_year: panel.first_year(),
            last_year: panel.last_year(),
            shock_year: panel.shock_year(),
        },
        outcome_paths: paths,
        matching: None,
        pooled: None,
        unit_effects: None,
        mean_weights: None,
        placebo: None,
        robustness: None,
        heterogeneity: None,
        price,
    };

    // match
    let needs_matches = wants(Stage::Match) || wants(Stage::Estimate) || wants(Stage::Infer);
    let matches = if wants(Stage::Match) {
        let m = match_nearest(&panel, &design, config.k, config.audit.as_ref(), config.metric)
            .map_err(|e| e.in_stage("match"))?;
        artifacts.insert("matches.csv", m.to_csv()?);
        artifacts.insert("balance.csv", m.balance_csv()?);
        Some(m)
    } else if needs_matches {
        let bytes = load_artifact(&req.out_dir, "matches.csv", Stage::Match).map_err(|e| e.in_stage("match"))?;
        let m = MatchResult::from_csv(bytes.as_slice(), config.metric, config.audit.is_some())
            .and_then(|m| with_balance(m, &panel, &design))
            .map_err(|e| e.in_stage("match"))?;
        Some(m)
    } else {
        None
    };
    if let Some(m) = &matches {
        report.matching = Some(MatchSummary {
            k: m.k,
            metric: m.metric,
            audited: m.audited,
            eligible_donors: m.eligible_donors.len(),
            retained_donors: m.retained_donors.clone(),
            balance: m.balance.clone(),
        });
    }

    // estimate
    let mut unit_effect_map: Option<BTreeMap<String, BTreeMap<i32, f64>>> = None;
    if wants(Stage::Estimate) {
        let m = matches.as_ref().expect("matches loaded for estimation");
        let run = || -> Result<(PooledEstimate, UnitEffects)> {
            let ctx = AscmContext::new(&panel, &design)?;
            let pooled = estimate_pooled_with(&panel, &design, &ctx, m, config, true)?;
            let units = estimate_effects_with(&panel, &ctx, m, config.into())?;
            Ok((pooled, units))
        };
        let (pooled, units) = run().map_err(|e| e.in_stage("estimate"))?;
        artifacts.insert("effects.csv", effects_csv(&units.fits)?);
        artifacts.insert("pooled_effects.csv", pooled_effects_csv(&pooled)?);
        let mut all = vec![&pooled.fit];
        all.extend(units.fits.iter());
        artifacts.insert("weights.csv", weights_csv(&all)?);
        unit_effect_map = Some(units.fits.iter().map(|f| (f.unit.clone(), f.effects_by_year())).collect());
        report.mean_weights = Some(weight_report(&units.fits));
        report.pooled = Some(pooled);
        report.unit_effects = Some(units);
    }

    // infer
    if wants(Stage::Infer) {
        let m = matches.as_ref().expect("matches loaded for inference");
        if !config.placebo_years.is_empty() {
            let p = placebo_in_time(&panel, &design, m, config, &config.placebo_years).map_err(|e| e.in_stage("infer"))?;
            artifacts.insert("placebo.csv", placebo_csv(&p)?);
            report.placebo = Some(p);
        }
        if !config.robustness.is_empty() {
            let r = robustness_suite(&panel, &design, config, &config.robustness).map_err(|e| e.in_stage("infer"))?;
            artifacts.insert("robustness.csv", robustness_csv(&r)?);
            report.robustness = Some(r);
        }
    }

    // heterogeneity
    if wants(Stage::Heterogeneity) {
        let effects = match unit_effect_map {
            Some(e) => e,
            None => {
                let bytes = load_artifact(&req.out_dir, "effects.csv", Stage::Estimate)
                    .map_err(|e| e.in_stage("heterogeneity"))?;
                read_effects_csv(bytes.as_slice()).map_err(|e| e.in_stage("heterogeneity"))?
            }
        };
        let h = heterogeneity(&panel, &design, &effects, config).map_err(|e| e.in_stage("heterogeneity"))?;
        artifacts.insert("tree.txt", h.tree.dump().into_bytes());
        artifacts.insert("tree.csv", tree_csv(&h.tree)?);
        artifacts.insert("pca_loadings.csv", pca_loadings_csv(&h.pca)?);
        artifacts.insert("pca_scores.csv", pca_scores_csv(&h)?);
        report.heterogeneity = Some(h);
    }

    artifacts.insert("report.json", report.to_json()?);
    Ok((report, artifacts))
}

/// Write every artifact; on failure remove whatever was written.
fn write_artifacts(dir: &Path, artifacts: &Artifacts) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut written: Vec<PathBuf> = Vec::new();
    for (name, bytes) in artifacts {
        let p = dir.join(name);
        if let Err(e) = fs::write(&p, bytes) {
            for w in &written {
                let _ = fs::remove_file(w);
            }
            let _ = fs::remove_file(&p);
            return Err(e.into());
        }
        written.push(p);
    }
    Ok(())
}

/// Simulate a panel from a spec file and write `panel.csv`,
/// `covariates.csv` and `truth.csv` into `out_dir`.
pub fn simulate_command(spec_path: &Path, seed: u64, out_dir: &Path) -> Result<GroundTruth> {
    let text = fs::read_to_string(spec_path)?;
    let spec = DgpSpec::parse(&text)?;
    simulate_to_dir(&spec, seed, out_dir)
}

pub fn simulate_to_dir(spec: &DgpSpec, seed: u64, out_dir: &Path) -> Result<GroundTruth> {
    let sim = simulate_panel(spec, seed)?;
    let mut artifacts = Artifacts::new();
    artifacts.insert("panel.csv", write_panel_csv(&sim.panel)?);
    artifacts.insert("covariates.csv", write_covariates_csv(&sim.panel)?);
    artifacts.insert("truth.csv", sim.truth.to_csv()?);
    write_artifacts(out_dir, &artifacts)?;
    Ok(sim.truth)
}

/// Bounds used to truncate the per-unit effect plot.
pub const PER_UNIT_TRUNCATION: [f64; 2] = [-5.5, 3.5];

pub const FIGURE_KEYS: [&str; 9] = [
    "pooled",
    "per_unit",
    "balance",
    "price",
    "tree",
    "pca_loadings",
    "pca_scores",
    "weights",
    "placebo",
];

/// A figure-ready table plus optional metadata for the plotting side.
#[derive(Clone, Debug, PartialEq)]
pub struct PlotData {
    pub csv: Vec<u8>,
    pub meta: Option<serde_json::Value>,
}

fn missing(what: &str, stage: Stage) -> Error {
    Error::Config(format!("report has no {what}; run the {stage} stage"))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Long-format CSV for one figure.
pub fn emit_plot_data(report: &RunReport, key: &str) -> Result<PlotData> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut meta = None;
    match key {
        "pooled" => {
            let p = report.pooled.as_ref().ok_or_else(|| missing("pooled estimate", Stage::Estimate))?;
            w.write_record(["year", "effect", "lo80", "hi80", "lo90", "hi90", "lo95", "hi95"])?;
            let s = &p.series;
            for k in 0..s.years.len() {
                let mut rec = vec![s.years[k].to_string(), s.point[k].to_string()];
                for l in [80, 90, 95] {
                    let i = s.interval(l);
                    rec.push(opt(i.map(|i| i.lower[k])));
                    rec.push(opt(i.map(|i| i.upper[k])));
                }
                w.write_record(&rec)?;
            }
        }
        "per_unit" => {
            let u = report.unit_effects.as_ref().ok_or_else(|| missing("per-unit effects", Stage::Estimate))?;
            w.write_record(["unit_id", "year", "effect", "mean_effect"])?;
            let Some(first) = u.fits.first() else {
                return Err(missing("per-unit effects", Stage::Estimate));
            };
            let years: Vec<i32> = first.pre_years.iter().chain(&first.years).copied().collect();
            let value = |f: &crate::ascm::AscmFit, k: usize| {
                if k < f.pre_gaps.len() {
                    f.pre_gaps[k]
                } else {
                    f.effects[k - f.pre_gaps.len()]
                }
            };
            let means: Vec<f64> = (0..years.len())
                .map(|k| u.fits.iter().map(|f| value(f, k)).sum::<f64>() / u.fits.len() as f64)
                .collect();
            for f in &u.fits {
                for (k, y) in years.iter().enumerate() {
                    w.write_record([f.unit.clone(), y.to_string(), value(f, k).to_string(), means[k].to_string()])?;
                }
            }
            meta = Some(serde_json::json!({
                "figure": "per_unit",
                "truncate": PER_UNIT_TRUNCATION,
                "shock_year": report.panel.shock_year,
            }));
        }
        "balance" => {
            let m = report.matching.as_ref().ok_or_else(|| missing("matching", Stage::Match))?;
            w.write_record(["covariate", "smd_pre", "smd_post"])?;
            for r in &m.balance {
                w.write_record([r.covariate.clone(), opt(r.smd_pre), opt(r.smd_post)])?;
            }
        }
        "price" => {
            w.write_record(["year", "treated_pp", "donor_pp", "price_usd_per_kg"])?;
            let prices: BTreeMap<i32, f64> = report
                .price
                .iter()
                .flatten()
                .map(|p| (p.year, p.price_usd_per_kg))
                .collect();
            let o = &report.outcome_paths;
            let mut years: BTreeSet<i32> = o.years.iter().copied().collect();
            years.extend(prices.keys());
            for y in years {
                let k = o.years.iter().position(|v| *v == y);
                w.write_record([
                    y.to_string(),
                    opt(k.map(|k| o.treated[k])),
                    opt(k.map(|k| o.donors[k])),
                    opt(prices.get(&y).copied()),
                ])?;
            }
        }
        "tree" => {
            let h = report.heterogeneity.as_ref().ok_or_else(|| missing("tree", Stage::Heterogeneity))?;
            return Ok(PlotData { csv: tree_csv(&h.tree)?, meta: None });
        }
        "pca_loadings" => {
            let h = report.heterogeneity.as_ref().ok_or_else(|| missing("PCA", Stage::Heterogeneity))?;
            return Ok(PlotData { csv: pca_loadings_csv(&h.pca)?, meta: None });
        }
        "pca_scores" => {
            let h = report.heterogeneity.as_ref().ok_or_else(|| missing("PCA", Stage::Heterogeneity))?;
            return Ok(PlotData { csv: pca_scores_csv(h)?, meta: None });
        }
        "weights" => {
            let p = report.pooled.as_ref().ok_or_else(|| missing("pooled estimate", Stage::Estimate))?;
            let mean: BTreeMap<&str, f64> = report
                .mean_weights
                .iter()
                .flatten()
                .map(|r| (r.donor.as_str(), r.weight))
                .collect();
            let pooled: BTreeMap<&str, f64> =
                p.fit.donors.iter().map(String::as_str).zip(p.fit.weights.iter().copied()).collect();
            let donors: BTreeSet<&str> = mean.keys().chain(pooled.keys()).copied().collect();
            w.write_record(["donor_id", "pooled_weight", "mean_unit_weight"])?;
            for d in donors {
                w.write_record([
                    d.to_string(),
                    pooled.get(d).copied().unwrap_or(0.0).to_string(),
                    mean.get(d).copied().unwrap_or(0.0).to_string(),
                ])?;
            }
        }
        "placebo" => {
            let p = report.placebo.as_ref().ok_or_else(|| missing("placebo runs", Stage::Infer))?;
            return Ok(PlotData { csv: placebo_csv(p)?, meta: None });
        }
        other => {
            return Err(Error::UnknownFigure {
                key: other.to_string(),
                valid: FIGURE_KEYS.join(", "),
            })
        }
    }
    Ok(PlotData {
        csv: w.into_inner().map_err(|e| Error::Io(e.into_error()))?,
        meta,
    })
}

/// Read an exclusion list (one donor id per line) into an audit rule.
pub fn audit_with_exclusions(base: Option<AuditRule>, path: &Path) -> Result<AuditRule> {
    let bytes = read_input(path)?;
    let mut rule = base.unwrap_or(AuditRule { wetness_quantile: None, exclude: BTreeSet::new() });
    rule.exclude.extend(AuditRule::read_exclusions(bytes.as_slice())?);
    Ok(rule)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_list_parsing() {
        let s = Stage::parse_list("match, estimate").unwrap();
        assert_eq!(s.into_iter().collect::<Vec<_>>(), vec![Stage::Match, Stage::Estimate]);
        assert!(Stage::parse_list("match,plot").is_err());
    }

    #[test]
    fn unknown_figure_lists_keys() {
        let dir = tempfile::tempdir().unwrap();
        let spec = DgpSpec { n_treated: 4, n_donors: 30, ..DgpSpec::default() };
        simulate_to_dir(&spec, 1, dir.path()).unwrap();
        let req = RunRequest {
            config: StudyConfig::default(),
            panel: dir.path().join("panel.csv"),
            covariates: dir.path().join("covariates.csv"),
            price: None,
            out_dir: dir.path().join("out"),
            stages: Some([Stage::Match].into()),
        };
        let report = run_pipeline(&req).unwrap();
        match emit_plot_data(&report, "spaghetti") {
            Err(Error::UnknownFigure { valid, .. }) => {
                for k in FIGURE_KEYS {
                    assert!(valid.contains(k));
                }
            }
            other => panic!("{other:?}"),
        }
        assert!(emit_plot_data(&report, "balance").is_ok());
        assert!(matches!(emit_plot_data(&report, "pooled"), Err(Error::Config(_))));
    }

    #[test]
    fn price_file_parsing() {
        let p = read_price_csv("year,price_usd_per_kg\n2014,80\n2015,220.5\n".as_bytes(), "price").unwrap();
        assert_eq!(p[1], PricePoint { year: 2015, price_usd_per_kg: 220.5 });
        assert!(read_price_csv("yr,price\n".as_bytes(), "price").is_err());
        assert!(read_price_csv("year,price_usd_per_kg\n2014,abc\n".as_bytes(), "price").is_err());
    }

    #[test]
    fn sha_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }
}
