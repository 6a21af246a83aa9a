//! Histogram-based gradient-boosted trees for Bernoulli and multinomial
//! log-loss.
//!
//! Trees grow depth-wise with second-order (Newton) split gains and leaf
//! values, L2 leaf regularization and seeded row subsampling. Feature values
//! are pre-binned at up to `max_bins` distinct cut points per column, which
//! for dummy-coded survey designs is exact.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::rng::{self, streams};
use crate::stats::{expit, logit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtParams {
    pub depth: usize,
    pub learning_rate: f64,
    /// Number of boosting rounds; zero yields the constant base-rate model.
    pub rounds: usize,
    /// Minimum hessian sum in each child of a split.
    pub min_leaf_weight: f64,
    /// Row fraction drawn (without replacement) for each round.
    pub subsample: f64,
    /// L2 penalty on leaf values.
    pub lambda: f64,
    pub max_bins: usize,
    pub seed: u64,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams {
            depth: 3,
            learning_rate: 0.1,
            rounds: 100,
            min_leaf_weight: 1.0,
            subsample: 1.0,
            lambda: 1.0,
            max_bins: 32,
            seed: 0,
        }
    }
}

impl GbtParams {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 1 {
            return Err(Error::Config("boosted trees need depth >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("boosting learning rate must be positive".into()));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::Config("boosting subsample fraction must lie in (0, 1]".into()));
        }
        if self.max_bins < 2 || self.max_bins > 256 {
            return Err(Error::Config("boosting max_bins must lie in 2..=256".into()));
        }
        if self.lambda < 0.0 || self.min_leaf_weight < 0.0 {
            return Err(Error::Config("boosting penalties must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split { feature, threshold, left, right } => {
                    at = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }
}

/// Boosted ensemble over `k` classes. A binary model (`k == 2`) keeps one
/// score; otherwise one score per supported class feeds a softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub k: usize,
    pub supported: Vec<usize>,
    base: Vec<f64>,
    /// `trees[round][score]`.
    trees: Vec<Vec<Tree>>,
}

impl GbtModel {
    fn n_scores(&self) -> usize {
        self.base.len()
    }

    fn raw_scores(&self, row: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.base);
        for round in &self.trees {
            for (s, t) in out.iter_mut().zip(round) {
                *s += t.predict(row);
            }
        }
    }

    /// Class probabilities, row-major `n × k`.
    pub fn predict(&self, x: &DesignMatrix) -> Vec<f64> {
        let mut out = vec![0.0; x.nrows() * self.k];
        let mut scores = vec![0.0; self.n_scores()];
        for i in 0..x.nrows() {
            self.raw_scores(x.row(i), &mut scores);
            let dst = &mut out[i * self.k..(i + 1) * self.k];
            write_probs(&self.supported, &scores, dst);
        }
        out
    }

    pub fn rounds(&self) -> usize {
        self.trees.len()
    }
}

fn write_probs(supported: &[usize], scores: &[f64], dst: &mut [f64]) {
    dst.iter_mut().for_each(|v| *v = 0.0);
    if supported.len() == 2 && scores.len() == 1 {
        let p = expit(scores[0]);
        dst[0] = 1.0 - p;
        dst[1] = p;
        return;
    }
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let denom: f64 = scores.iter().map(|s| (s - m).exp()).sum();
    for (c, s) in supported.iter().zip(scores) {
        dst[*c] = (s - m).exp() / denom;
    }
}

/// Per-column cut points and binned values.
struct Binned {
    cuts: Vec<Vec<f64>>,
    /// Column-major bin codes.
    codes: Vec<Vec<u8>>,
}

impl Binned {
    fn new(x: &DesignMatrix, max_bins: usize) -> Binned {
        let n = x.nrows();
        let mut cuts = Vec::with_capacity(x.ncols());
        let mut codes = Vec::with_capacity(x.ncols());
        for j in 0..x.ncols() {
            let mut vals: Vec<f64> = (0..n).map(|i| x.get(i, j)).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            let c: Vec<f64> = if vals.len() <= max_bins {
                vals.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
            } else {
                let mut c: Vec<f64> = (1..max_bins)
                    .map(|b| {
                        let pos = b * (vals.len() - 1) / max_bins;
                        0.5 * (vals[pos] + vals[pos + 1])
                    })
                    .collect();
                c.dedup();
                c
            };
            let code = (0..n)
                .map(|i| {
                    let v = x.get(i, j);
                    c.partition_point(|&t| t < v) as u8
                })
                .collect();
            cuts.push(c);
            codes.push(code);
        }
        Binned { cuts, codes }
    }
}

struct Grower<'a> {
    binned: &'a Binned,
    params: &'a GbtParams,
}

impl Grower<'_> {
    fn leaf_value(&self, g: f64, h: f64) -> f64 {
        -self.params.learning_rate * g / (h + self.params.lambda)
    }

    fn grow(&self, rows: Vec<usize>, grad: &[f64], hess: &[f64]) -> Tree {
        let mut nodes = Vec::new();
        self.grow_node(&mut nodes, rows, grad, hess, 0);
        Tree { nodes }
    }

    fn grow_node(&self, nodes: &mut Vec<Node>, rows: Vec<usize>, grad: &[f64], hess: &[f64], depth: usize) -> usize {
        let g: f64 = rows.iter().map(|&i| grad[i]).sum();
        let h: f64 = rows.iter().map(|&i| hess[i]).sum();
        let at = nodes.len();
        nodes.push(Node::Leaf(self.leaf_value(g, h)));
        if depth >= self.params.depth || rows.len() < 2 {
            return at;
        }
        let Some((feature, bin)) = self.best_split(&rows, grad, hess, g, h) else {
            return at;
        };
        let codes = &self.binned.codes[feature];
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&i| usize::from(codes[i]) <= bin);
        let left = self.grow_node(nodes, left_rows, grad, hess, depth + 1);
        let right = self.grow_node(nodes, right_rows, grad, hess, depth + 1);
        nodes[at] = Node::Split {
            feature,
            threshold: self.binned.cuts[feature][bin],
            left,
            right,
        };
        at
    }

    fn best_split(&self, rows: &[usize], grad: &[f64], hess: &[f64], g: f64, h: f64) -> Option<(usize, usize)> {
        let lambda = self.params.lambda;
        let parent = g * g / (h + lambda);
        let mut best: Option<(f64, usize, usize)> = None;
        for (j, cuts) in self.binned.cuts.iter().enumerate() {
            if cuts.is_empty() {
                continue;
            }
            let nb = cuts.len() + 1;
            let mut hg = vec![0.0; nb];
            let mut hh = vec![0.0; nb];
            let codes = &self.binned.codes[j];
            for &i in rows {
                let b = usize::from(codes[i]);
                hg[b] += grad[i];
                hh[b] += hess[i];
            }
            let (mut gl, mut hl) = (0.0, 0.0);
            for b in 0..nb - 1 {
                gl += hg[b];
                hl += hh[b];
                let (gr, hr) = (g - gl, h - hl);
                if hl < self.params.min_leaf_weight || hr < self.params.min_leaf_weight {
                    continue;
                }
                let gain = gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent;
                if gain > 1e-12 && best.is_none_or(|(bg, _, _)| gain > bg) {
                    best = Some((gain, j, b));
                }
            }
        }
        best.map(|(_, j, b)| (j, b))
    }
}

/// Fit a boosted ensemble on class targets in `0..k` (use `k = 2` for a
/// binary target). Classes listed in `structural_zeros` must be unobserved
/// and get probability 0; other unobserved classes are an error.
pub fn fit_gbt(
    x: &DesignMatrix,
    classes: &[usize],
    k: usize,
    w: Option<&[f64]>,
    structural_zeros: &[usize],
    params: &GbtParams,
) -> Result<GbtModel> {
    params.validate()?;
    let n = x.nrows();
    if classes.len() != n {
        return Err(Error::Mismatch { what: "boosting targets", expected: n, got: classes.len() });
    }
    if k < 2 {
        return Err(Error::Config("boosting needs at least two classes".into()));
    }
    let w: Vec<f64> = match w {
        Some(w) if w.len() == n => w.to_vec(),
        Some(w) => return Err(Error::Mismatch { what: "sample weights", expected: n, got: w.len() }),
        None => vec![1.0; n],
    };
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Data("boosting needs positive total weight".into()));
    }
    let mut class_weight = vec![0.0; k];
    for (&c, wi) in classes.iter().zip(&w) {
        if c >= k {
            return Err(Error::Data(format!("class {c} outside 0..{k}")));
        }
        class_weight[c] += wi;
    }
    let mut supported = Vec::new();
    for c in 0..k {
        match (class_weight[c] > 0.0, structural_zeros.contains(&c)) {
            (true, false) => supported.push(c),
            (false, true) => {}
            (true, true) => return Err(Error::Data(format!("class {c} is flagged structural zero but observed"))),
            (false, false) => {
                return Err(Error::Data(format!(
                    "class {c} has no observations and is not flagged as a structural zero"
                )))
            }
        }
    }

    let binary = k == 2 && supported.len() == 2;
    let base: Vec<f64> = if binary {
        vec![logit(class_weight[1] / total)]
    } else {
        supported.iter().map(|&c| (class_weight[c] / total).ln()).collect()
    };
    let mut model = GbtModel { k, supported, base, trees: Vec::new() };
    if model.supported.len() < 2 || params.rounds == 0 {
        return Ok(model);
    }

    let s = model.n_scores();
    let binned = Binned::new(x, params.max_bins);
    let grower = Grower { binned: &binned, params };
    let mut scores: Vec<f64> = (0..n).flat_map(|_| model.base.clone()).collect();
    let target_pos: Vec<usize> = classes
        .iter()
        .map(|c| model.supported.iter().position(|s| s == c).expect("supported class"))
        .collect();
    let mut grad = vec![vec![0.0; n]; s];
    let mut hess = vec![vec![0.0; n]; s];
    let n_sub = ((params.subsample * n as f64).round() as usize).clamp(1, n);
    let mut probs = vec![0.0; s.max(2)];

    for round in 0..params.rounds {
        for i in 0..n {
            let sc = &scores[i * s..(i + 1) * s];
            if binary {
                let p = expit(sc[0]);
                let y = if target_pos[i] == 1 { 1.0 } else { 0.0 };
                grad[0][i] = w[i] * (p - y);
                hess[0][i] = w[i] * (p * (1.0 - p)).max(1e-16);
            } else {
                let m = sc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut denom = 0.0;
                for (p, v) in probs.iter_mut().zip(sc) {
                    *p = (v - m).exp();
                    denom += *p;
                }
                for c in 0..s {
                    let p = probs[c] / denom;
                    let y = if target_pos[i] == c { 1.0 } else { 0.0 };
                    grad[c][i] = w[i] * (p - y);
                    hess[c][i] = w[i] * (p * (1.0 - p)).max(1e-16);
                }
            }
        }
        let rows: Vec<usize> = if n_sub < n {
            let mut r = rng::stream(params.seed, streams::BOOSTING, round as u64);
            let mut idx = rand::seq::index::sample(&mut r, n, n_sub).into_vec();
            idx.sort_unstable();
            idx
        } else {
            (0..n).collect()
        };
        let round_trees: Vec<Tree> = (0..s).map(|c| grower.grow(rows.clone(), &grad[c], &hess[c])).collect();
        for i in 0..n {
            let row = x.row(i);
            for (c, t) in round_trees.iter().enumerate() {
                scores[i * s + c] += t.predict(row);
            }
        }
        model.trees.push(round_trees);
    }
    Ok(model)
}

/// Random hyperparameter draws for a tuning grid: depth in 2..=6, learning
/// rate in {0.05, 0.1, 0.3}, rounds in 50..=400 (steps of 50).
pub fn hyperparameter_grid(size: usize, base: &GbtParams, seed: u64) -> Vec<GbtParams> {
    let mut r = rng::stream(seed, streams::GRID, 0);
    (0..size)
        .map(|g| GbtParams {
            depth: r.random_range(2..=6),
            learning_rate: [0.05, 0.1, 0.3][r.random_range(0..3)],
            rounds: 50 * r.random_range(1..=8),
            seed: base.seed.wrapping_add(g as u64),
            ..base.clone()
        })
        .collect()
}
