//! ANOVA regression tree grown by greedy binary partitioning.
//!
//! Splits maximize the reduction in node sum of squared errors over every
//! (variable, threshold) pair, with thresholds at midpoints between
//! consecutive distinct values. Observations with `value < threshold` go
//! left; values on the boundary go right.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// Smallest node that may be split.
    pub min_split: usize,
    /// Smallest allowed leaf.
    pub min_bucket: usize,
    pub max_depth: usize,
    /// A split is kept only if it lowers SSE by at least `cp * root SSE`.
    pub cp: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            min_split: 5,
            min_bucket: 4,
            max_depth: 6,
            cp: 0.001,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub variable: usize,
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
    /// SSE reduction achieved by this split.
    pub improvement: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    pub n: usize,
    pub mean: f64,
    pub sse: f64,
    pub split: Option<Split>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub variables: Vec<String>,
    pub params: TreeParams,
    /// Pre-order; node 0 is the root.
    pub nodes: Vec<TreeNode>,
}

fn sse_of(y: &[f64], idx: &[usize]) -> (f64, f64) {
    let n = idx.len() as f64;
    let mean = idx.iter().map(|&i| y[i]).sum::<f64>() / n;
    let sse = idx.iter().map(|&i| (y[i] - mean).powi(2)).sum();
    (mean, sse)
}

struct Candidate {
    variable: usize,
    threshold: f64,
    gain: f64,
}

/// Best split of `idx` over all variables, or `None` when no split satisfies
/// the bucket constraint.
fn best_split(
    y: &[f64],
    x: &[Vec<f64>],
    idx: &[usize],
    node_mean: f64,
    min_bucket: usize,
    tie_eps: f64,
) -> Option<Candidate> {
    let n = idx.len();
    let p = x.first().map_or(0, Vec::len);
    let mut best: Option<Candidate> = None;
    let mut order = idx.to_vec();
    for var in 0..p {
        order.sort_by(|&a, &b| x[a][var].total_cmp(&x[b][var]).then(a.cmp(&b)));
        // centered sums keep the cancellation small
        let total: f64 = order.iter().map(|&i| y[i] - node_mean).sum();
        let total_sq: f64 = order.iter().map(|&i| (y[i] - node_mean).powi(2)).sum();
        let (mut s, mut sq) = (0.0, 0.0);
        for k in 1..n {
            let d = y[order[k - 1]] - node_mean;
            s += d;
            sq += d * d;
            let (lo, hi) = (x[order[k - 1]][var], x[order[k]][var]);
            if lo == hi || k < min_bucket || n - k < min_bucket {
                continue;
            }
            let nl = k as f64;
            let nr = (n - k) as f64;
            let sse_l = sq - s * s / nl;
            let sse_r = (total_sq - sq) - (total - s).powi(2) / nr;
            let gain = total_sq - total * total / n as f64 - sse_l - sse_r;
            if best.as_ref().is_none_or(|b| gain > b.gain + tie_eps) {
                best = Some(Candidate {
                    variable: var,
                    threshold: 0.5 * (lo + hi),
                    gain,
                });
            }
        }
    }
    best
}

/// Fit a regression tree on `targets` with covariate rows `covariates`
/// (one row per unit, one column per entry of `variables`).
pub fn tree_fit(
    targets: &[f64],
    covariates: &[Vec<f64>],
    variables: &[String],
    params: TreeParams,
) -> Result<TreeModel> {
    let n = targets.len();
    if covariates.len() != n {
        return Err(Error::Dimension("one covariate row per target".into()));
    }
    if covariates.iter().any(|r| r.len() != variables.len()) {
        return Err(Error::Dimension("covariate rows must match the variable list".into()));
    }
    if n == 0 || n < params.min_split {
        return Err(Error::Dimension(format!(
            "tree needs at least min_split = {} units, got {n}",
            params.min_split
        )));
    }
    if targets.iter().chain(covariates.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("tree input".into()));
    }
    let all: Vec<usize> = (0..n).collect();
    let (_, root_sse) = sse_of(targets, &all);
    let mut model = TreeModel {
        variables: variables.to_vec(),
        params,
        nodes: Vec::new(),
    };
    grow(&mut model, targets, covariates, all, None, 0, root_sse);
    Ok(model)
}

fn grow(
    model: &mut TreeModel,
    y: &[f64],
    x: &[Vec<f64>],
    idx: Vec<usize>,
    parent: Option<usize>,
    depth: usize,
    root_sse: f64,
) -> usize {
    let (mean, sse) = sse_of(y, &idx);
    let id = model.nodes.len();
    model.nodes.push(TreeNode {
        id,
        parent,
        depth,
        n: idx.len(),
        mean,
        sse,
        split: None,
    });
    let p = model.params;
    if idx.len() < p.min_split || depth >= p.max_depth || sse <= 0.0 {
        return id;
    }
    let tie_eps = 1e-12 * root_sse.max(f64::MIN_POSITIVE);
    let Some(c) = best_split(y, x, &idx, mean, p.min_bucket, tie_eps) else {
        return id;
    };
    if c.gain <= 0.0 || c.gain < p.cp * root_sse {
        return id;
    }
    let (left, right): (Vec<usize>, Vec<usize>) =
        idx.iter().partition(|&&i| x[i][c.variable] < c.threshold);
    let l = grow(model, y, x, left, Some(id), depth + 1, root_sse);
    let r = grow(model, y, x, right, Some(id), depth + 1, root_sse);
    model.nodes[id].split = Some(Split {
        variable: c.variable,
        threshold: c.threshold,
        left: l,
        right: r,
        improvement: c.gain,
    });
    id
}

impl TreeModel {
    pub fn leaf_of_row(&self, row: &[f64]) -> usize {
        let mut node = 0;
        while let Some(s) = &self.nodes[node].split {
            node = if row[s.variable] < s.threshold { s.left } else { s.right };
        }
        node
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.nodes[self.leaf_of_row(row)].mean
    }

    /// Prediction for a named covariate record.
    pub fn predict(&self, record: &BTreeMap<String, f64>) -> Result<f64> {
        let mut node = 0;
        while let Some(s) = &self.nodes[node].split {
            let name = &self.variables[s.variable];
            let v = *record
                .get(name)
                .ok_or_else(|| Error::MissingVariable(name.clone()))?;
            node = if v < s.threshold { s.left } else { s.right };
        }
        Ok(self.nodes[node].mean)
    }

    pub fn leaves(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(|n| n.split.is_none())
    }

    /// Sum of leaf SSEs.
    pub fn training_sse(&self) -> f64 {
        self.leaves().map(|n| n.sse).sum()
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// Indented text rendering, one node per line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        self.dump_node(0, "root".to_string(), &mut out);
        out
    }

    fn dump_node(&self, id: usize, label: String, out: &mut String) {
        let node = &self.nodes[id];
        let leaf = if node.split.is_none() { " *" } else { "" };
        let _ = writeln!(
            out,
            "{}{}) {} n={} mean={:.4} sse={:.4}{}",
            "  ".repeat(node.depth),
            id,
            label,
            node.n,
            node.mean,
            node.sse,
            leaf
        );
        if let Some(s) = &node.split {
            let var = &self.variables[s.variable];
            self.dump_node(s.left, format!("{var} < {}", s.threshold), out);
            self.dump_node(s.right, format!("{var} >= {}", s.threshold), out);
        }
    }

    /// Rows of `node_id,parent,split_var,threshold,n,mean,sse`.
    pub fn table(&self) -> Vec<[String; 7]> {
        self.nodes
            .iter()
            .map(|n| {
                let (var, thr) = match &n.split {
                    Some(s) => (self.variables[s.variable].clone(), s.threshold.to_string()),
                    None => (String::new(), String::new()),
                };
                [
                    n.id.to_string(),
                    n.parent.map(|p| p.to_string()).unwrap_or_default(),
                    var,
                    thr,
                    n.n.to_string(),
                    n.mean.to_string(),
                    n.sse.to_string(),
                ]
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|j| format!("x{j}")).collect()
    }

    #[test]
    fn constant_target_is_a_single_leaf() {
        let y = vec![2.5; 12];
        let x: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64]).collect();
        let t = tree_fit(&y, &x, &names(1), TreeParams::default()).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.nodes[0].mean, 2.5);
        assert_eq!(t.predict_row(&[100.0]), 2.5);
    }

    #[test]
    fn perfect_separation_gives_depth_one() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, ((i * 7) % 10) as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| if i < 5 { -1.0 } else { 3.0 }).collect();
        let t = tree_fit(&y, &x, &names(2), TreeParams::default()).unwrap();
        assert_eq!(t.depth(), 1);
        let s = t.nodes[0].split.as_ref().unwrap();
        assert_eq!(s.variable, 0);
        assert_eq!(s.threshold, 4.5);
        assert_eq!(t.training_sse(), 0.0);
    }

    #[test]
    fn boundary_value_goes_right() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| if i < 5 { -1.0 } else { 3.0 }).collect();
        let t = tree_fit(&y, &x, &names(1), TreeParams::default()).unwrap();
        assert_eq!(t.predict_row(&[4.5]), 3.0);
        assert_eq!(t.predict_row(&[4.4999]), -1.0);
    }

    #[test]
    fn hand_built_tree_prediction() {
        let t = TreeModel {
            variables: vec!["a".into(), "b".into()],
            params: TreeParams::default(),
            nodes: vec![
                TreeNode { id: 0, parent: None, depth: 0, n: 20, mean: 0.0, sse: 10.0, split: Some(Split { variable: 0, threshold: 1.0, left: 1, right: 4, improvement: 5.0 }) },
                TreeNode { id: 1, parent: Some(0), depth: 1, n: 10, mean: -1.0, sse: 3.0, split: Some(Split { variable: 1, threshold: 0.0, left: 2, right: 3, improvement: 1.0 }) },
                TreeNode { id: 2, parent: Some(1), depth: 2, n: 5, mean: -2.0, sse: 1.0, split: None },
                TreeNode { id: 3, parent: Some(1), depth: 2, n: 5, mean: -0.5, sse: 1.0, split: None },
                TreeNode { id: 4, parent: Some(0), depth: 1, n: 10, mean: 1.0, sse: 2.0, split: None },
            ],
        };
        let rec = |a: f64, b: f64| -> BTreeMap<String, f64> { [("a".to_string(), a), ("b".to_string(), b)].into() };
        // a=0.5 < 1 -> node 1; b=-1 < 0 -> node 2
        assert_eq!(t.predict(&rec(0.5, -1.0)).unwrap(), -2.0);
        // a=0.5 -> node 1; b=0 on boundary -> node 3
        assert_eq!(t.predict(&rec(0.5, 0.0)).unwrap(), -0.5);
        assert_eq!(t.predict(&rec(1.0, -5.0)).unwrap(), 1.0);
        let only_a: BTreeMap<String, f64> = [("a".to_string(), 0.0)].into();
        assert!(matches!(t.predict(&only_a), Err(Error::MissingVariable(v)) if v == "b"));
    }

    #[test]
    fn root_only_tree_predicts_global_mean() {
        let y = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let x: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let p = TreeParams { max_depth: 0, ..TreeParams::default() };
        let t = tree_fit(&y, &x, &names(1), p).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.predict_row(&[-3.0]), 3.0);
    }

    #[test]
    fn too_few_units_is_rejected() {
        let y = vec![1.0, 2.0];
        let x = vec![vec![0.0], vec![1.0]];
        assert!(tree_fit(&y, &x, &names(1), TreeParams::default()).is_err());
    }

    #[test]
    fn dump_and_table_cover_every_node() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| if i < 5 { -1.0 } else { 3.0 }).collect();
        let t = tree_fit(&y, &x, &names(1), TreeParams::default()).unwrap();
        assert_eq!(t.dump().lines().count(), 3);
        let rows = t.table();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0][2], "x0");
        assert_eq!(rows[1][1], "0");
    }

    fn lcg(state: &mut u64) -> f64 {
        *state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (*state >> 11) as f64 / (1u64 << 53) as f64
    }

    fn random_instance(seed: u64, n: usize, p: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
        let mut s = seed;
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| lcg(&mut s)).collect()).collect();
        let y = x
            .iter()
            .map(|r| if r[0] < 0.5 { -1.0 } else { 1.0 } + r[1] + 0.3 * lcg(&mut s))
            .collect();
        (y, x)
    }

    #[test]
    fn invariants_hold_on_random_instances() {
        for seed in 0..20 {
            let (y, x) = random_instance(seed, 60, 3);
            let p = TreeParams::default();
            let t = tree_fit(&y, &x, &names(3), p).unwrap();
            let root = t.nodes[0].sse;
            for node in &t.nodes {
                assert!(node.depth <= p.max_depth);
                if let Some(s) = &node.split {
                    assert!(node.n >= p.min_split);
                    assert!(s.improvement >= p.cp * root);
                } else {
                    assert!(node.n >= p.min_bucket);
                }
            }
            // each training unit lands in a leaf whose mean is its leaf average
            let mut by_leaf: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
            for (r, v) in x.iter().zip(&y) {
                by_leaf.entry(t.leaf_of_row(r)).or_default().push(*v);
            }
            for (leaf, vals) in by_leaf {
                let m = vals.iter().sum::<f64>() / vals.len() as f64;
                assert!((t.nodes[leaf].mean - m).abs() <= 1e-12);
                assert_eq!(t.nodes[leaf].n, vals.len());
            }
        }
    }

    #[test]
    fn sse_is_nonincreasing_as_cp_decreases() {
        for seed in 0..10 {
            let (y, x) = random_instance(100 + seed, 50, 3);
            let mut last = f64::INFINITY;
            for cp in [0.5, 0.1, 0.05, 0.01, 0.001, 0.0] {
                let p = TreeParams { cp, ..TreeParams::default() };
                let sse = tree_fit(&y, &x, &names(3), p).unwrap().training_sse();
                assert!(sse <= last + 1e-12, "cp {cp}: {sse} > {last}");
                last = sse;
            }
        }
    }

    #[test]
    fn monotone_transform_gives_identical_partitions() {
        for seed in 0..10 {
            let (y, x) = random_instance(200 + seed, 40, 2);
            let xt: Vec<Vec<f64>> = x.iter().map(|r| vec![(3.0 * r[0]).exp(), r[1].powi(3) - 2.0]).collect();
            let a = tree_fit(&y, &x, &names(2), TreeParams::default()).unwrap();
            let b = tree_fit(&y, &xt, &names(2), TreeParams::default()).unwrap();
            assert_eq!(a.nodes.len(), b.nodes.len());
            for (ra, rb) in x.iter().zip(&xt) {
                assert_eq!(a.leaf_of_row(ra), b.leaf_of_row(rb));
            }
            for (na, nb) in a.nodes.iter().zip(&b.nodes) {
                assert_eq!(na.n, nb.n);
                assert_eq!(na.sse, nb.sse);
            }
        }
    }
}
