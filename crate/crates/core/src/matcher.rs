//! K:1 nearest-neighbor donor matching with replacement, donor auditing and
//! standardized-mean-difference balance diagnostics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{CovariateTable, Design};
use crate::error::{Error, Result};
use crate::panel::PanelDataset;
use crate::stats;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Euclidean distance on z-scored covariates.
    Euclidean,
    /// Mahalanobis distance using the full-sample covariance.
    Mahalanobis,
}

impl FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "mahalanobis" => Ok(Metric::Mahalanobis),
            _ => Err(Error::Config(format!(
                "metric must be euclidean or mahalanobis, found `{s}`"
            ))),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Euclidean => "euclidean",
            Metric::Mahalanobis => "mahalanobis",
        })
    }
}

/// Donor exclusion rule applied before matching.
///
/// A donor is dropped when its precipitation wetness (the negated PC1
/// score, since higher PC1 is drier) falls below the given quantile of the
/// treated units' wetness, or when its identifier is listed explicitly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditRule {
    pub wetness_quantile: Option<f64>,
    pub exclude: BTreeSet<String>,
}

impl Default for AuditRule {
    fn default() -> Self {
        AuditRule {
            wetness_quantile: Some(0.01),
            exclude: BTreeSet::new(),
        }
    }
}

impl AuditRule {
    pub fn validate(&self) -> Result<()> {
        if let Some(q) = self.wetness_quantile {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::Config(format!("audit quantile {q} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Donors (panel indices, ascending) that survive the audit.
    pub fn eligible_donors(&self, panel: &PanelDataset, design: &Design) -> Vec<usize> {
        let pc1 = design
            .table
            .index_of("precPC1")
            .expect("design table carries precPC1");
        let threshold = self.wetness_quantile.map(|q| {
            let wet: Vec<f64> = panel
                .treated()
                .iter()
                .map(|&i| -design.table.rows[i][pc1])
                .collect();
            stats::quantile(&wet, q)
        });
        panel
            .donors()
            .into_iter()
            .filter(|&j| !self.exclude.contains(&panel.units()[j]))
            .filter(|&j| threshold.is_none_or(|t| -design.table.rows[j][pc1] >= t))
            .collect()
    }

    /// Read an exclusion list: one unit identifier per line, `#` comments.
    pub fn read_exclusions<R: Read>(mut reader: R) -> Result<BTreeSet<String>> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        Ok(text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty() && *l != "unit_id")
            .map(str::to_string)
            .collect())
    }
}

/// Z-scored covariate table with the parameters used.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardized {
    pub rows: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardized {
    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.sd))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

/// Center and scale each column by its mean and sample sd.
pub fn standardize(table: &CovariateTable) -> Result<Standardized> {
    let p = table.names.len();
    let mut mean = Vec::with_capacity(p);
    let mut sd = Vec::with_capacity(p);
    for j in 0..p {
        let col = table.column(j);
        let s = stats::sample_sd(&col);
        if !(s > 0.0) {
            return Err(Error::ConstantColumn(table.names[j].clone()));
        }
        mean.push(stats::mean(&col));
        sd.push(s);
    }
    let rows = table
        .rows
        .iter()
        .map(|r| (0..p).map(|j| (r[j] - mean[j]) / sd[j]).collect())
        .collect();
    Ok(Standardized { rows, mean, sd })
}

/// Standardized mean difference `(mean_t - mean_c) / sqrt((sd_t^2 + sd_c^2) / 2)`.
/// Control values may carry frequency weights (match multiplicities).
/// Returns `None` when the pooled sd is zero.
pub fn smd(treated: &[f64], control: &[f64], control_weights: Option<&[f64]>) -> Option<f64> {
    if treated.is_empty() || control.is_empty() {
        return None;
    }
    let mt = stats::mean(treated);
    let vt = stats::sample_var(treated);
    let (mc, vc) = match control_weights {
        Some(w) => stats::weighted_mean_var(control, w),
        None => (stats::mean(control), stats::sample_var(control)),
    };
    let pooled = ((vt + vc) / 2.0).sqrt();
    (pooled > 0.0).then(|| (mt - mc) / pooled)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DonorMatch {
    pub treated: String,
    /// Donor identifiers, nearest first.
    pub donors: Vec<String>,
    pub distances: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub covariate: String,
    pub smd_pre: Option<f64>,
    pub smd_post: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub k: usize,
    pub metric: Metric,
    pub audited: bool,
    /// One entry per treated unit, in panel order.
    pub matches: Vec<DonorMatch>,
    pub balance: Vec<BalanceRow>,
    /// Union of matched donors, sorted by identifier.
    pub retained_donors: Vec<String>,
    /// Donors that passed the audit, sorted by identifier.
    pub eligible_donors: Vec<String>,
}

impl MatchResult {
    pub fn donor_set(&self, treated: &str) -> Option<&DonorMatch> {
        self.matches.iter().find(|m| m.treated == treated)
    }

    /// Panel indices of each treated unit's donors (panel treated order).
    pub fn donor_indices(&self, panel: &PanelDataset) -> Result<Vec<(usize, Vec<usize>)>> {
        self.matches
            .iter()
            .map(|m| {
                let t = panel.unit_index(&m.treated).ok_or_else(|| {
                    Error::InvalidPanel(format!("matched unit {} not in panel", m.treated))
                })?;
                let d = m
                    .donors
                    .iter()
                    .map(|d| {
                        panel.unit_index(d).ok_or_else(|| {
                            Error::InvalidPanel(format!("matched donor {d} not in panel"))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((t, d))
            })
            .collect()
    }

    pub fn retained_indices(&self, panel: &PanelDataset) -> Result<Vec<usize>> {
        let mut idx = self
            .retained_donors
            .iter()
            .map(|d| {
                panel
                    .unit_index(d)
                    .ok_or_else(|| Error::InvalidPanel(format!("donor {d} not in panel")))
            })
            .collect::<Result<Vec<_>>>()?;
        idx.sort_unstable();
        Ok(idx)
    }

    /// Donor → number of treated units it was matched to.
    pub fn multiplicity(&self) -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for dm in &self.matches {
            for d in &dm.donors {
                *m.entry(d.clone()).or_insert(0) += 1;
            }
        }
        m
    }

    /// `treated_id,donor_id,rank,distance` CSV.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["treated_id", "donor_id", "rank", "distance"])?;
        for m in &self.matches {
            for (r, (d, dist)) in m.donors.iter().zip(&m.distances).enumerate() {
                w.write_record([
                    m.treated.as_str(),
                    d.as_str(),
                    &(r + 1).to_string(),
                    &dist.to_string(),
                ])?;
            }
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    /// Rebuild donor sets from a match CSV (balance and eligibility are not
    /// stored there and come back empty).
    pub fn from_csv<R: Read>(reader: R, metric: Metric, audited: bool) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut sets: Vec<DonorMatch> = Vec::new();
        for (n, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = n + 2;
            if rec.len() != 4 {
                return Err(Error::parse("matches", line, "expected 4 fields"));
            }
            let rank: usize = rec[2]
                .parse()
                .map_err(|_| Error::parse("matches", line, "bad rank"))?;
            let dist: f64 = rec[3]
                .parse()
                .map_err(|_| Error::parse("matches", line, "bad distance"))?;
            if sets.last().is_none_or(|m| m.treated != rec[0]) {
                sets.push(DonorMatch {
                    treated: rec[0].to_string(),
                    donors: Vec::new(),
                    distances: Vec::new(),
                });
            }
            let m = sets.last_mut().expect("just pushed");
            if rank != m.donors.len() + 1 {
                return Err(Error::parse("matches", line, "ranks must be consecutive"));
            }
            m.donors.push(rec[1].to_string());
            m.distances.push(dist);
        }
        let k = sets.first().map_or(0, |m| m.donors.len());
        if k == 0 || sets.iter().any(|m| m.donors.len() != k) {
            return Err(Error::parse("matches", 1, "every treated unit needs the same number of donors"));
        }
        let retained: BTreeSet<String> = sets.iter().flat_map(|m| m.donors.iter().cloned()).collect();
        Ok(MatchResult {
            k,
            metric,
            audited,
            matches: sets,
            balance: Vec::new(),
            retained_donors: retained.into_iter().collect(),
            eligible_donors: Vec::new(),
        })
    }

    /// `covariate,smd_pre,smd_post` CSV; undefined SMDs are left empty.
    pub fn balance_csv(&self) -> Result<Vec<u8>> {
        balance_csv(&self.balance)
    }
}

pub fn balance_csv(rows: &[BalanceRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["covariate", "smd_pre", "smd_post"])?;
    let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([r.covariate.clone(), f(r.smd_pre), f(r.smd_post)])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Pre/post SMD per covariate. Pre compares treated with every donor; post
/// compares treated with matched donors weighted by how often each was used.
pub fn balance_report(
    table: &CovariateTable,
    treated: &[usize],
    donors: &[usize],
    multiplicity: &[(usize, f64)],
) -> Vec<BalanceRow> {
    let (post_idx, post_w): (Vec<usize>, Vec<f64>) = multiplicity.iter().copied().unzip();
    table
        .names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let t: Vec<f64> = treated.iter().map(|&i| table.rows[i][j]).collect();
            let c: Vec<f64> = donors.iter().map(|&i| table.rows[i][j]).collect();
            let m: Vec<f64> = post_idx.iter().map(|&i| table.rows[i][j]).collect();
            BalanceRow {
                covariate: name.clone(),
                smd_pre: smd(&t, &c, None),
                smd_post: smd(&t, &m, Some(&post_w)),
            }
        })
        .collect()
}

enum Distance {
    Euclidean,
    Mahalanobis(DMatrix<f64>),
}

impl Distance {
    /// Distance in z-score units. Raw differences are scaled directly so
    /// equal raw gaps give bitwise-equal distances (exact ties).
    fn between(&self, a: &[f64], b: &[f64], sd: &[f64]) -> f64 {
        let d: Vec<f64> = a.iter().zip(b).zip(sd).map(|((x, y), s)| (x - y) / s).collect();
        match self {
            Distance::Euclidean => d.iter().map(|v| v * v).sum::<f64>().sqrt(),
            Distance::Mahalanobis(inv) => {
                let p = d.len();
                let mut q = 0.0;
                for r in 0..p {
                    for c in 0..p {
                        q += d[r] * inv[(r, c)] * d[c];
                    }
                }
                q.max(0.0).sqrt()
            }
        }
    }
}

/// Match every treated unit to its `k` nearest audited donors.
///
/// Ties in distance are broken by donor identifier, so results are fully
/// determined by the inputs.
pub fn match_nearest(
    panel: &PanelDataset,
    design: &Design,
    k: usize,
    audit: Option<&AuditRule>,
    metric: Metric,
) -> Result<MatchResult> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let z = standardize(&design.table)?;
    let distance = match metric {
        Metric::Euclidean => Distance::Euclidean,
        Metric::Mahalanobis => {
            let n = z.rows.len();
            let p = z.mean.len();
            let x = DMatrix::from_fn(n, p, |i, j| z.rows[i][j]);
            let cov = (x.transpose() * &x) / (n as f64 - 1.0);
            let inv = cov
                .cholesky()
                .ok_or(Error::SingularCovariance)?
                .inverse();
            Distance::Mahalanobis(inv)
        }
    };
    let eligible = match audit {
        Some(rule) => rule.eligible_donors(panel, design),
        None => panel.donors(),
    };
    if eligible.len() < k {
        return Err(Error::TooFewDonors {
            available: eligible.len(),
            required: k,
        });
    }
    let ids = panel.units();
    let treated = panel.treated();
    let matches: Vec<DonorMatch> = treated
        .par_iter()
        .map(|&t| {
            // sorted (distance, id) list of at most k entries
            let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
            for &j in &eligible {
                let d = distance.between(&design.table.rows[t], &design.table.rows[j], &z.sd);
                let before = |a: &(f64, usize)| {
                    a.0.total_cmp(&d).then_with(|| ids[a.1].cmp(&ids[j])).is_lt()
                };
                let pos = best.partition_point(before);
                if pos < k {
                    best.insert(pos, (d, j));
                    best.truncate(k);
                }
            }
            DonorMatch {
                treated: ids[t].clone(),
                donors: best.iter().map(|(_, j)| ids[*j].clone()).collect(),
                distances: best.iter().map(|(d, _)| *d).collect(),
            }
        })
        .collect();

    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for m in &matches {
        for d in &m.donors {
            let j = panel.unit_index(d).expect("matched donor is a panel unit");
            *counts.entry(j).or_insert(0.0) += 1.0;
        }
    }
    let multiplicity: Vec<(usize, f64)> = counts.into_iter().collect();
    let balance = balance_report(&design.table, &treated, &panel.donors(), &multiplicity);
    let mut retained: Vec<String> = multiplicity.iter().map(|(j, _)| ids[*j].clone()).collect();
    retained.sort();
    let mut eligible_ids: Vec<String> = eligible.iter().map(|&j| ids[j].clone()).collect();
    eligible_ids.sort();
    Ok(MatchResult {
        k,
        metric,
        audited: audit.is_some(),
        matches,
        balance,
        retained_donors: retained,
        eligible_donors: eligible_ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{Covariates, PanelParts};

    fn panel_from(rows: &[(f64, f64, bool)]) -> (PanelDataset, Design) {
        // two informative covariates: elevation and slope; other columns vary mildly
        let covs: Vec<Covariates> = rows
            .iter()
            .enumerate()
            .map(|(i, &(a, b, _))| {
                let mut precip = [0.0; 12];
                for (m, p) in precip.iter_mut().enumerate() {
                    *p = 100.0 + ((i * 13 + m * 7) % 17) as f64;
                }
                Covariates {
                    elevation_m: a,
                    slope_deg: b,
                    pop_density: 10.0 + (i % 3) as f64,
                    road_density: 0.1 + 0.01 * (i % 4) as f64,
                    protected_share: 0.1 * (i % 5) as f64,
                    forest_pct_base: 30.0 + (i % 6) as f64,
                    forest_ha_base: 1000.0 + (i % 7) as f64,
                    precip,
                }
            })
            .collect();
        let n = rows.len();
        let panel = PanelDataset::new(PanelParts {
            units: (0..n).map(|i| format!("u{i:02}")).collect(),
            first_year: 2000,
            outcome: vec![vec![0.0; 4]; n],
            forest_area: None,
            covariates: covs.clone(),
            exposure: rows.iter().map(|r| r.2).collect(),
            shock_year: 2002,
        })
        .unwrap();
        let design = Design::build(&covs, true).unwrap();
        (panel, design)
    }

    #[test]
    fn standardize_uses_sample_sd() {
        let t = CovariateTable {
            names: vec!["a".into()],
            rows: vec![vec![1.0], vec![3.0]],
        };
        let z = standardize(&t).unwrap();
        // sample sd of {1, 3} is sqrt(2)
        let expect = 1.0 / 2f64.sqrt();
        assert!((z.rows[0][0] + expect).abs() < 1e-15);
        assert!((z.rows[1][0] - expect).abs() < 1e-15);
        let again = standardize(&CovariateTable { names: t.names.clone(), rows: z.rows.clone() }).unwrap();
        for (a, b) in again.rows.iter().zip(&z.rows) {
            assert!((a[0] - b[0]).abs() < 1e-12);
        }
        let c = CovariateTable { names: vec!["flat".into()], rows: vec![vec![2.0], vec![2.0]] };
        assert!(matches!(standardize(&c), Err(Error::ConstantColumn(n)) if n == "flat"));
    }

    #[test]
    fn smd_examples() {
        assert_eq!(smd(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], None), Some(0.0));
        assert_eq!(smd(&[1.0, 1.0], &[0.0, 0.0], None), None);
        // means 3 and 1; sample variances 2 and 2 -> pooled sd sqrt(2)
        let v = smd(&[2.0, 4.0], &[0.0, 2.0], None).unwrap();
        assert!((v - 2.0 / 2f64.sqrt()).abs() < 1e-15);
    }

    fn with_table(p: &PanelDataset, rows: Vec<Vec<f64>>) -> Design {
        let names = (0..rows[0].len()).map(|c| format!("x{c}")).collect();
        let pca = Design::build(p.all_covariates(), true).unwrap().pca;
        Design { table: CovariateTable { names, rows }, pca }
    }

    #[test]
    fn exact_duplicate_is_ranked_first() {
        let rows = [(0.0, 0.0, true), (0.0, 0.0, false), (0.0, 0.0, false), (0.0, 0.0, false), (0.0, 0.0, false)];
        let (p, _) = panel_from(&rows);
        let d = with_table(&p, vec![
            vec![10.0, 1.0],
            vec![12.0, 2.0],
            vec![10.0, 1.0],
            vec![30.0, 9.0],
            vec![5.0, 4.0],
        ]);
        let m = match_nearest(&p, &d, 2, None, Metric::Euclidean).unwrap();
        assert_eq!(m.matches[0].donors, vec!["u02".to_string(), "u01".to_string()]);
        assert_eq!(m.matches[0].distances[0], 0.0);
    }

    #[test]
    fn nearest_on_a_line() {
        let rows = [(0.0, 0.0, false), (0.0, 0.0, false), (0.0, 0.0, true), (0.0, 0.0, false), (0.0, 0.0, false)];
        let (p, _) = panel_from(&rows);
        let d = with_table(&p, vec![vec![0.0], vec![1.0], vec![2.2], vec![3.0], vec![7.0]]);
        let m = match_nearest(&p, &d, 3, None, Metric::Euclidean).unwrap();
        // gaps 0.8, 1.2, 2.2 (4.8 excluded)
        assert_eq!(m.matches[0].donors, vec!["u03", "u01", "u00"]);
        let sd = stats::sample_sd(&[0.0, 1.0, 2.2, 3.0, 7.0]);
        for (got, gap) in m.matches[0].distances.iter().zip([0.8, 1.2, 2.2]) {
            assert!((got - gap / sd).abs() < 1e-12);
        }
    }

    #[test]
    fn too_few_donors_after_audit() {
        let rows = [(10.0, 1.0, true), (11.0, 2.0, false), (12.0, 3.0, false)];
        let (p, d) = panel_from(&rows);
        let audit = AuditRule {
            wetness_quantile: None,
            exclude: ["u01".to_string()].into(),
        };
        match match_nearest(&p, &d, 2, Some(&audit), Metric::Euclidean) {
            Err(Error::TooFewDonors { available, required }) => assert_eq!((available, required), (1, 2)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ties_break_by_identifier() {
        let rows = [
            (10.0, 1.0, true),
            (12.0, 1.0, false),
            (8.0, 1.0, false),
            (30.0, 5.0, false),
        ];
        let (p, _) = panel_from(&rows);
        // design with a single covariate where both donors are equidistant
        let table = CovariateTable {
            names: vec!["x".into()],
            rows: vec![vec![10.0], vec![12.0], vec![8.0], vec![30.0]],
        };
        let pca = Design::build(p.all_covariates(), true).unwrap().pca;
        let d = Design { table, pca };
        let m = match_nearest(&p, &d, 1, None, Metric::Euclidean).unwrap();
        assert_eq!(m.matches[0].donors, vec!["u01".to_string()]);
    }

    #[test]
    fn audit_never_drops_treated_and_is_idempotent() {
        let rows: Vec<(f64, f64, bool)> = (0..30).map(|i| (i as f64, (i * 7 % 11) as f64, i % 4 == 0)).collect();
        let (p, d) = panel_from(&rows);
        let rule = AuditRule { wetness_quantile: Some(0.25), exclude: BTreeSet::new() };
        let once = rule.eligible_donors(&p, &d);
        assert!(once.iter().all(|&j| !p.is_treated(j)));
        let again: Vec<usize> = once
            .iter()
            .copied()
            .filter(|j| rule.eligible_donors(&p, &d).contains(j))
            .collect();
        assert_eq!(once, again);
        let m = match_nearest(&p, &d, 2, Some(&rule), Metric::Euclidean).unwrap();
        assert_eq!(m.matches.len(), p.n_treated());
    }

    #[test]
    fn match_csv_round_trip_and_balance_rows() {
        let rows: Vec<(f64, f64, bool)> = (0..20).map(|i| (i as f64, (i * 3 % 7) as f64, i % 5 == 0)).collect();
        let (p, d) = panel_from(&rows);
        let m = match_nearest(&p, &d, 3, None, Metric::Mahalanobis).unwrap();
        for dm in &m.matches {
            assert_eq!(dm.donors.len(), 3);
            assert!(dm.distances.windows(2).all(|w| w[0] <= w[1]));
            for donor in &dm.donors {
                assert!(!p.is_treated(p.unit_index(donor).unwrap()));
            }
        }
        let csv = m.to_csv().unwrap();
        let back = MatchResult::from_csv(csv.as_slice(), m.metric, m.audited).unwrap();
        assert_eq!(back.matches, m.matches);
        assert_eq!(back.retained_donors, m.retained_donors);
        assert_eq!(m.balance.len(), 9);
        let text = String::from_utf8(m.balance_csv().unwrap()).unwrap();
        assert!(text.starts_with("covariate,smd_pre,smd_post\n"));
    }

    #[test]
    fn empty_covariate_list_gives_empty_balance() {
        let t = CovariateTable { names: vec![], rows: vec![vec![]; 4] };
        assert!(balance_report(&t, &[0], &[1, 2, 3], &[(1, 1.0)]).is_empty());
    }

    proptest::proptest! {
        #[test]
        fn smd_is_affine_invariant(
            t in proptest::collection::vec(-5.0f64..5.0, 2..8),
            c in proptest::collection::vec(-5.0f64..5.0, 2..8),
            a in -10.0f64..10.0,
            b in 0.1f64..10.0,
        ) {
            let base = smd(&t, &c, None);
            let tt: Vec<f64> = t.iter().map(|v| a + b * v).collect();
            let cc: Vec<f64> = c.iter().map(|v| a + b * v).collect();
            match (base, smd(&tt, &cc, None)) {
                (Some(x), Some(y)) => proptest::prop_assert!((x - y).abs() < 1e-8 * (1.0 + x.abs())),
                (None, None) => {}
                (x, y) => proptest::prop_assert!(false, "{x:?} vs {y:?}"),
            }
        }
    }
}
