//! Data-driven subgroup discovery with an honest split.
//!
//! Per-record effect contrasts (DR-learner pseudo-outcomes) from an
//! auxiliary split are regressed on covariates with a depth-limited
//! variance-reduction tree. Its leaves become candidate subgroups, which are
//! approved explicitly and then estimated on the main split only.

use serde::{Deserialize, Serialize};

use crate::effects::{
    difference_test, subgroup_effects, DifferenceTest, GroupPredicate, Grouping, InfluenceEstimate, Scale,
    SubgroupReport, ALPHA,
};
use crate::effects::phi1_values;
use crate::error::{Error, Result};
use crate::ingest::{AnalyticSample, OutcomeKind};
use crate::nuisance::NuisanceBundle;
use crate::rng::{self, streams};
use crate::stats::weighted_mean;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitId {
    /// Discovery data.
    Auxiliary,
    /// Confirmation data.
    Main,
}

/// Per-record effect contrasts `φ_{1,1} − φ_{1,0}` on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoOutcomeSet {
    pub split: SplitId,
    pub values: Vec<f64>,
    pub weights: Option<Vec<f64>>,
    /// Fingerprint of the split's sample.
    pub fingerprint: String,
}

impl PseudoOutcomeSet {
    pub fn mean(&self) -> f64 {
        weighted_mean(&self.values, self.weights.as_deref())
    }
}

/// Pseudo-outcomes for `sample`. The bundle must have been fitted on this
/// very sample: nuisances trained on the other split would leak it.
pub fn pseudo_outcomes(sample: &AnalyticSample, bundle: &NuisanceBundle, split: SplitId) -> Result<PseudoOutcomeSet> {
    bundle.check_len(sample.len())?;
    let fingerprint = sample.fingerprint();
    if bundle.sample_fingerprint != fingerprint {
        return Err(Error::Data(format!(
            "nuisance bundle was fitted on different records than the {split:?} split; refit on this split to avoid leakage"
        )));
    }
    let f1 = phi1_values(sample, bundle, OutcomeKind::Y, 1)?;
    let f0 = phi1_values(sample, bundle, OutcomeKind::Y, 0)?;
    Ok(PseudoOutcomeSet {
        split,
        values: f1.iter().zip(&f0).map(|(a, b)| a - b).collect(),
        weights: sample.weights().map(<[f64]>::to_vec),
        fingerprint,
    })
}

/// Seeded 50/50 split into `(auxiliary, main)` samples.
pub fn split_sample(sample: &AnalyticSample, seed: u64) -> Result<(AnalyticSample, AnalyticSample)> {
    let mut r = rng::stream(seed, streams::SPLIT, 0);
    let perm = rng::permutation(&mut r, sample.len());
    let (a, m) = perm.split_at(sample.len() / 2);
    let mut a = a.to_vec();
    let mut m = m.to_vec();
    a.sort_unstable();
    m.sort_unstable();
    Ok((sample.subset(&a)?, sample.subset(&m)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeParams {
    pub max_depth: usize,
    /// Minimum records per child.
    pub min_leaf: usize,
    /// A split must reduce the sum of squares by this share of the root's.
    pub min_gain_fraction: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { max_depth: 4, min_leaf: 500, min_gain_fraction: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        mean: f64,
        n: usize,
    },
    Split {
        covariate: String,
        /// Levels sent left; all other levels go right.
        left_levels: Vec<String>,
        right_levels: Vec<String>,
        gain: f64,
        mean: f64,
        n: usize,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        matches!(self, TreeNode::Leaf { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub root: TreeNode,
    pub params: TreeParams,
    pub covariates: Vec<String>,
    /// Fingerprint of the discovery sample.
    pub discovery_fingerprint: String,
}

impl RegressionTree {
    /// Covariate of the root split, if any.
    pub fn first_split(&self) -> Option<&str> {
        match &self.root {
            TreeNode::Split { covariate, .. } => Some(covariate),
            TreeNode::Leaf { .. } => None,
        }
    }

    pub fn leaf_count(&self) -> usize {
        fn count(n: &TreeNode) -> usize {
            match n {
                TreeNode::Leaf { .. } => 1,
                TreeNode::Split { left, right, .. } => count(left) + count(right),
            }
        }
        count(&self.root)
    }

    /// Indented human-readable rendering.
    pub fn render(&self) -> String {
        fn walk(n: &TreeNode, depth: usize, label: &str, out: &mut String) {
            let pad = "  ".repeat(depth);
            match n {
                TreeNode::Leaf { mean, n } => out.push_str(&format!("{pad}{label}leaf: mean={mean:.5} n={n}\n")),
                TreeNode::Split { covariate, left_levels, right_levels, gain, mean, n, left, right } => {
                    out.push_str(&format!("{pad}{label}split on {covariate}: mean={mean:.5} n={n} gain={gain:.4}\n"));
                    walk(left, depth + 1, &format!("{covariate} in {{{}}} -> ", left_levels.join(",")), out);
                    walk(right, depth + 1, &format!("{covariate} in {{{}}} -> ", right_levels.join(",")), out);
                }
            }
        }
        let mut out = String::new();
        walk(&self.root, 0, "", &mut out);
        out
    }
}

/// A tree leaf offered for confirmation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSubgroup {
    pub id: usize,
    pub predicate: GroupPredicate,
    pub description: String,
    /// Mean pseudo-outcome in the leaf on the discovery split.
    pub discovery_mean: f64,
    pub discovery_n: usize,
    /// Set by the analyst before confirmation.
    #[serde(default)]
    pub approved: bool,
}

struct Node<'a> {
    idx: Vec<usize>,
    predicate: GroupPredicate,
    codes: &'a [Vec<usize>],
}

/// Fit a variance-reduction tree of the pseudo-outcomes on categorical
/// covariates (all by default) and list its leaves as candidates.
pub fn fit_tree(
    pseudo: &PseudoOutcomeSet,
    sample: &AnalyticSample,
    covariates: Option<&[String]>,
    params: &TreeParams,
) -> Result<(RegressionTree, Vec<CandidateSubgroup>)> {
    if pseudo.split != SplitId::Auxiliary {
        return Err(Error::Config("subgroup discovery must use the auxiliary split".into()));
    }
    if pseudo.fingerprint != sample.fingerprint() || pseudo.values.len() != sample.len() {
        return Err(Error::Data("pseudo-outcomes were computed on a different sample".into()));
    }
    if params.min_leaf == 0 || !(params.min_gain_fraction >= 0.0) {
        return Err(Error::Config("tree needs min_leaf >= 1 and a nonnegative gain fraction".into()));
    }
    let names: Vec<String> = match covariates {
        Some(c) => {
            let mut c = c.to_vec();
            c.sort();
            c.dedup();
            c
        }
        None => sample.encoding.names().map(str::to_string).collect(),
    };
    let mut levels = Vec::with_capacity(names.len());
    let mut codes = Vec::with_capacity(names.len());
    for name in &names {
        let l = sample
            .encoding
            .levels(name)
            .ok_or_else(|| Error::Config(format!("unknown covariate '{name}'")))?
            .to_vec();
        codes.push(sample.records.iter().map(|r| sample.encoding.code(r, name)).collect::<Result<Vec<_>>>()?);
        levels.push(l);
    }
    let y = &pseudo.values;
    let w: Vec<f64> = pseudo.weights.clone().unwrap_or_else(|| vec![1.0; y.len()]);
    let all: Vec<usize> = (0..y.len()).collect();
    let (sw, swy, swyy) = moments(&all, y, &w);
    let root_sse = swyy - swy * swy / sw.max(f64::MIN_POSITIVE);
    let threshold = params.min_gain_fraction * root_sse;

    let mut candidates = Vec::new();
    let root = grow(
        Node { idx: all, predicate: GroupPredicate::all(), codes: &codes },
        0,
        &names,
        &levels,
        y,
        &w,
        params,
        threshold,
        &mut candidates,
    );
    let tree = RegressionTree { root, params: params.clone(), covariates: names, discovery_fingerprint: pseudo.fingerprint.clone() };
    Ok((tree, candidates))
}

fn moments(idx: &[usize], y: &[f64], w: &[f64]) -> (f64, f64, f64) {
    idx.iter().fold((0.0, 0.0, 0.0), |(a, b, c), &i| (a + w[i], b + w[i] * y[i], c + w[i] * y[i] * y[i]))
}

#[allow(clippy::too_many_arguments)]
fn grow(
    node: Node<'_>,
    depth: usize,
    names: &[String],
    levels: &[Vec<String>],
    y: &[f64],
    w: &[f64],
    params: &TreeParams,
    threshold: f64,
    candidates: &mut Vec<CandidateSubgroup>,
) -> TreeNode {
    let (sw, swy, _) = moments(&node.idx, y, w);
    let mean = if sw > 0.0 { swy / sw } else { 0.0 };
    let n = node.idx.len();
    let leaf = |candidates: &mut Vec<CandidateSubgroup>, predicate: GroupPredicate| {
        candidates.push(CandidateSubgroup {
            id: candidates.len(),
            description: predicate.describe(),
            predicate,
            discovery_mean: mean,
            discovery_n: n,
            approved: false,
        });
        TreeNode::Leaf { mean, n }
    };
    if depth >= params.max_depth || n < 2 * params.min_leaf {
        return leaf(candidates, node.predicate);
    }

    // Best split: (gain, covariate, left level set).
    let mut best: Option<(f64, usize, Vec<usize>)> = None;
    for (c, lv) in levels.iter().enumerate() {
        let k = lv.len();
        let mut stats = vec![(0.0f64, 0.0f64, 0usize); k];
        for &i in &node.idx {
            let s = &mut stats[node.codes[c][i]];
            s.0 += w[i];
            s.1 += w[i] * y[i];
            s.2 += 1;
        }
        let mut present: Vec<usize> = (0..k).filter(|&l| stats[l].2 > 0).collect();
        if present.len() < 2 {
            continue;
        }
        present.sort_by(|&a, &b| {
            let ma = stats[a].1 / stats[a].0;
            let mb = stats[b].1 / stats[b].0;
            ma.total_cmp(&mb).then(a.cmp(&b))
        });
        let (mut lw, mut lwy, mut ln) = (0.0, 0.0, 0usize);
        for cut in 0..present.len() - 1 {
            let s = stats[present[cut]];
            lw += s.0;
            lwy += s.1;
            ln += s.2;
            let (rw, rwy, rn) = (sw - lw, swy - lwy, n - ln);
            if ln < params.min_leaf || rn < params.min_leaf || lw <= 0.0 || rw <= 0.0 {
                continue;
            }
            let gain = lwy * lwy / lw + rwy * rwy / rw - swy * swy / sw;
            if best.as_ref().is_none_or(|b| gain > b.0) {
                best = Some((gain, c, present[..=cut].to_vec()));
            }
        }
    }
    let Some((gain, c, mut left_codes)) = best else {
        return leaf(candidates, node.predicate);
    };
    if gain < threshold || gain <= 0.0 {
        return leaf(candidates, node.predicate);
    }
    left_codes.sort_unstable();
    let allowed: Vec<usize> = match node.predicate.conditions.iter().find(|cond| cond.covariate == names[c]) {
        Some(cond) => cond.levels.iter().filter_map(|l| levels[c].iter().position(|v| v == l)).collect(),
        None => (0..levels[c].len()).collect(),
    };
    let right_codes: Vec<usize> = allowed.iter().copied().filter(|l| !left_codes.contains(l)).collect();
    let to_names = |v: &[usize]| v.iter().map(|&l| levels[c][l].clone()).collect::<Vec<_>>();
    let (left_levels, right_levels) = (to_names(&left_codes), to_names(&right_codes));
    let (li, ri): (Vec<usize>, Vec<usize>) = node.idx.iter().partition(|&&i| left_codes.contains(&node.codes[c][i]));
    let child = |idx: Vec<usize>, lv: &[String]| Node { idx, predicate: restrict(&node.predicate, &names[c], lv), codes: node.codes };
    let left = grow(child(li, &left_levels), depth + 1, names, levels, y, w, params, threshold, candidates);
    let right = grow(child(ri, &right_levels), depth + 1, names, levels, y, w, params, threshold, candidates);
    TreeNode::Split {
        covariate: names[c].clone(),
        left_levels,
        right_levels,
        gain,
        mean,
        n,
        left: Box::new(left),
        right: Box::new(right),
    }
}

/// Add `covariate ∈ levels`, replacing an existing condition on the same
/// covariate (the new level set is always a subset of the old).
fn restrict(p: &GroupPredicate, covariate: &str, levels: &[String]) -> GroupPredicate {
    let mut out = p.clone();
    out.conditions.retain(|c| c.covariate != covariate);
    out.and(covariate, levels.to_vec())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub first: usize,
    pub second: usize,
    pub test: DifferenceTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confirmation {
    /// Candidate ids of the confirmed groups, in report order.
    pub ids: Vec<usize>,
    pub report: SubgroupReport,
    pub tests: Vec<PairTest>,
    pub overall: InfluenceEstimate,
}

/// Estimate approved candidates on the main split, with pairwise
/// difference tests between them.
pub fn confirm(
    candidates: &[CandidateSubgroup],
    tree: &RegressionTree,
    main: &AnalyticSample,
    bundle: &NuisanceBundle,
    min_n: usize,
) -> Result<Confirmation> {
    let pseudo = pseudo_outcomes(main, bundle, SplitId::Main)?;
    if pseudo.fingerprint == tree.discovery_fingerprint {
        return Err(Error::Data("confirmation sample is the discovery sample; estimates would not be honest".into()));
    }
    let overall = InfluenceEstimate::from_if("rd[y]", pseudo.values, pseudo.weights.as_deref(), Scale::RiskDifference, ALPHA);
    let approved: Vec<&CandidateSubgroup> = candidates.iter().filter(|c| c.approved).collect();
    let grouping = Grouping::Predicates { predicates: approved.iter().map(|c| c.predicate.clone()).collect(), allow_overlap: true };
    let report = subgroup_effects(&overall, main, &grouping, min_n)?;
    let ids: Vec<usize> = report
        .groups
        .iter()
        .map(|g| approved.iter().find(|c| c.predicate == g.group).map_or(usize::MAX, |c| c.id))
        .collect();
    let mut tests = Vec::new();
    for a in 0..report.groups.len() {
        for b in a + 1..report.groups.len() {
            if let Ok(test) = difference_test(&report.groups[a], &report.groups[b]) {
                tests.push(PairTest { first: ids[a], second: ids[b], test });
            }
        }
    }
    Ok(Confirmation { ids, report, tests, overall })
}

/// Range of group point estimates.
pub fn leaf_spread(points: &[f64]) -> f64 {
    let lo = points.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = points.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if points.is_empty() {
        0.0
    } else {
        hi - lo
    }
}
