//! Nuisance models: propensity, outcome regressions, joint mediator laws and
//! the complete-case probability, fitted with GLMs, boosted trees or a
//! stacked ensemble, and cross-fitted into a [`NuisanceBundle`].

mod crossfit;
mod diagnostics;
pub mod gbt;
pub mod glm;
pub mod stack;

use serde::{Deserialize, Serialize};

use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::rng::{self, streams};

pub use crossfit::{
    clip_probability, crossfit, fold_assignment, CovariateSelection, FullSampleNuisance, NuisanceBundle,
    NuisanceSpec, OutcomeRegressions, BUNDLE_VERSION,
};
pub use diagnostics::{calibration_curve, diagnostics, CalibrationBin, CalibrationCurve, CalibrationReport, WeightQuantiles};
pub use gbt::{fit_gbt, GbtModel, GbtParams};
pub use glm::{fit_logistic, fit_multinomial, FitReport, GlmOptions, LogisticModel, MultinomialModel, MultinomialOptions};
pub use stack::{stack, StackWeights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerKind {
    /// Logistic regression for binary targets, multinomial logistic for
    /// mediator cells.
    #[default]
    Glm,
    GradientBoostedTrees,
    /// GLM plus a random grid of boosted-tree specifications, combined by
    /// validation log-loss stacking.
    Stacked,
}

/// Learner family and hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    pub glm: GlmOptions,
    pub gbt: GbtParams,
    /// Boosted-tree specifications drawn for stacking.
    pub grid_size: usize,
    /// Share of training rows held out to choose stacking weights.
    pub validation_fraction: f64,
}

impl Default for LearnerSpec {
    fn default() -> Self {
        LearnerSpec {
            kind: LearnerKind::Glm,
            glm: GlmOptions::default(),
            gbt: GbtParams::default(),
            grid_size: 20,
            validation_fraction: 0.2,
        }
    }
}

/// A fitted probabilistic classifier over `k` classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Learner {
    Logistic(LogisticModel),
    Multinomial(MultinomialModel),
    Gbt(GbtModel),
    Stacked { members: Vec<Learner>, stack: StackWeights },
}

impl Learner {
    pub fn classes(&self) -> usize {
        match self {
            Learner::Logistic(_) => 2,
            Learner::Multinomial(m) => m.k,
            Learner::Gbt(m) => m.k,
            Learner::Stacked { members, .. } => members[0].classes(),
        }
    }

    /// Class probabilities, row-major `n × k`.
    pub fn predict(&self, x: &DesignMatrix) -> Vec<f64> {
        match self {
            Learner::Logistic(m) => m.predict(x).into_iter().flat_map(|p| [1.0 - p, p]).collect(),
            Learner::Multinomial(m) => {
                let mut out = vec![0.0; x.nrows() * m.k];
                for i in 0..x.nrows() {
                    m.predict_row(x.row(i), &mut out[i * m.k..(i + 1) * m.k]);
                }
                out
            }
            Learner::Gbt(m) => m.predict(x),
            Learner::Stacked { members, stack } => {
                let mut out = vec![0.0; x.nrows() * self.classes()];
                for (member, &a) in members.iter().zip(&stack.weights) {
                    if a == 0.0 {
                        continue;
                    }
                    for (o, p) in out.iter_mut().zip(member.predict(x)) {
                        *o += a * p;
                    }
                }
                out
            }
        }
    }

    /// Probability of class 1 for a binary learner.
    pub fn predict_binary(&self, x: &DesignMatrix) -> Vec<f64> {
        match self {
            Learner::Logistic(m) => m.predict(x),
            _ => {
                let k = self.classes();
                self.predict(x).chunks(k).map(|r| r[1]).collect()
            }
        }
    }

    /// Fit-time warnings collected from this learner and its members.
    pub fn warnings(&self) -> Vec<String> {
        match self {
            Learner::Logistic(m) => m.report.warnings.clone(),
            Learner::Multinomial(m) => m.report.warnings.clone(),
            Learner::Gbt(_) => Vec::new(),
            Learner::Stacked { members, stack } => {
                let mut w = stack.warnings.clone();
                w.extend(members.iter().flat_map(Learner::warnings));
                w
            }
        }
    }
}

/// Fit a classifier on targets in `0..k`. For binary targets an unobserved
/// class yields a constant model; for `k > 2` unobserved classes must be
/// listed in `structural_zeros`.
pub fn fit_learner(
    spec: &LearnerSpec,
    x: &DesignMatrix,
    classes: &[usize],
    k: usize,
    w: Option<&[f64]>,
    structural_zeros: &[usize],
    seed: u64,
) -> Result<Learner> {
    if x.nrows() == 0 {
        return Err(Error::Data("cannot fit a nuisance model on zero rows".into()));
    }
    match spec.kind {
        LearnerKind::Glm => fit_glm(spec, x, classes, k, w, structural_zeros),
        LearnerKind::GradientBoostedTrees => {
            let params = GbtParams { seed, ..spec.gbt.clone() };
            let zeros = binary_zeros(classes, k, w, structural_zeros);
            fit_gbt(x, classes, k, w, &zeros, &params).map(Learner::Gbt)
        }
        LearnerKind::Stacked => fit_stacked(spec, x, classes, k, w, structural_zeros, seed),
    }
}

fn binary_zeros(classes: &[usize], k: usize, w: Option<&[f64]>, structural_zeros: &[usize]) -> Vec<usize> {
    let mut zeros = structural_zeros.to_vec();
    if k == 2 {
        for c in 0..2 {
            let seen = classes.iter().enumerate().any(|(i, &v)| v == c && w.is_none_or(|w| w[i] > 0.0));
            if !seen && !zeros.contains(&c) {
                zeros.push(c);
            }
        }
    }
    zeros
}

fn fit_glm(
    spec: &LearnerSpec,
    x: &DesignMatrix,
    classes: &[usize],
    k: usize,
    w: Option<&[f64]>,
    structural_zeros: &[usize],
) -> Result<Learner> {
    if k == 2 {
        let y: Vec<f64> = classes.iter().map(|&c| c as f64).collect();
        fit_logistic(x, &y, w, &spec.glm).map(Learner::Logistic)
    } else {
        let opts = MultinomialOptions { glm: spec.glm.clone(), structural_zeros: structural_zeros.to_vec() };
        fit_multinomial(x, classes, k, w, &opts).map(Learner::Multinomial)
    }
}

fn fit_stacked(
    spec: &LearnerSpec,
    x: &DesignMatrix,
    classes: &[usize],
    k: usize,
    w: Option<&[f64]>,
    structural_zeros: &[usize],
    seed: u64,
) -> Result<Learner> {
    let n = x.nrows();
    if !(spec.validation_fraction > 0.0 && spec.validation_fraction < 1.0) {
        return Err(Error::Config("stacking validation fraction must lie in (0, 1)".into()));
    }
    let n_val = ((spec.validation_fraction * n as f64).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    if n < 2 {
        return Err(Error::Data("stacking needs at least two rows".into()));
    }
    let mut r = rng::stream(seed, streams::STACKING, 0);
    let perm = rng::permutation(&mut r, n);
    let (val_idx, train_idx) = perm.split_at(n_val);
    let mut train_idx = train_idx.to_vec();
    let mut val_idx = val_idx.to_vec();
    train_idx.sort_unstable();
    val_idx.sort_unstable();

    let xt = x.select_rows(&train_idx);
    let ct: Vec<usize> = train_idx.iter().map(|&i| classes[i]).collect();
    let wt: Option<Vec<f64>> = w.map(|w| train_idx.iter().map(|&i| w[i]).collect());
    // Classes that vanish from the training part are treated as structural
    // zeros for the members; validation rows in such classes are penalized.
    let mut zeros = structural_zeros.to_vec();
    for c in 0..k {
        if !zeros.contains(&c) && !ct.iter().enumerate().any(|(j, &v)| v == c && wt.as_ref().is_none_or(|w| w[j] > 0.0)) {
            zeros.push(c);
        }
    }

    let mut members = vec![fit_glm(spec, &xt, &ct, k, wt.as_deref(), &zeros)?];
    for params in gbt::hyperparameter_grid(spec.grid_size, &spec.gbt, seed) {
        let zz = binary_zeros(&ct, k, wt.as_deref(), &zeros);
        members.push(Learner::Gbt(fit_gbt(&xt, &ct, k, wt.as_deref(), &zz, &params)?));
    }
    let xv = x.select_rows(&val_idx);
    let probs: Vec<Vec<f64>> = members
        .iter()
        .map(|m| {
            let p = m.predict(&xv);
            val_idx.iter().enumerate().map(|(j, &i)| p[j * k + classes[i]]).collect()
        })
        .collect();
    let wv: Option<Vec<f64>> = w.map(|w| val_idx.iter().map(|&i| w[i]).collect());
    let stack = stack(&probs, wv.as_deref())?;
    Ok(Learner::Stacked { members, stack })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (DesignMatrix, Vec<usize>) {
        let rows: Vec<Vec<f64>> = (0..400).map(|i| vec![1.0, f64::from(i % 2 == 0), f64::from(i % 3 == 0)]).collect();
        let y = (0..400).map(|i| usize::from((i % 2 == 0) ^ (i % 7 == 0))).collect();
        (DesignMatrix::from_rows(&rows), y)
    }

    #[test]
    fn predictions_are_probabilities_for_every_kind() {
        let (x, y) = fixture();
        for kind in [LearnerKind::Glm, LearnerKind::GradientBoostedTrees, LearnerKind::Stacked] {
            let spec = LearnerSpec { kind, grid_size: 3, gbt: GbtParams { rounds: 20, ..Default::default() }, ..Default::default() };
            let m = fit_learner(&spec, &x, &y, 2, None, &[], 9).unwrap();
            let p = m.predict(&x);
            assert_eq!(p.len(), 800);
            for r in p.chunks(2) {
                assert!(r.iter().all(|v| (0.0..=1.0).contains(v)));
                assert!((r[0] + r[1] - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_binary_target_gives_constant_model() {
        let (x, _) = fixture();
        let y = vec![1usize; 400];
        for kind in [LearnerKind::Glm, LearnerKind::GradientBoostedTrees] {
            let spec = LearnerSpec { kind, ..Default::default() };
            let m = fit_learner(&spec, &x, &y, 2, None, &[], 1).unwrap();
            assert!(m.predict_binary(&x).iter().all(|&p| p == 1.0));
        }
    }

    #[test]
    fn learner_round_trips_through_json() {
        let (x, y) = fixture();
        let spec = LearnerSpec { kind: LearnerKind::Stacked, grid_size: 2, gbt: GbtParams { rounds: 5, ..Default::default() }, ..Default::default() };
        let m = fit_learner(&spec, &x, &y, 2, None, &[], 4).unwrap();
        let back: Learner = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(m.predict(&x), back.predict(&x));
    }
}
