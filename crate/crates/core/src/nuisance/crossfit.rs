use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_learner, LearnerKind, LearnerSpec};
use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::ingest::{AnalyticSample, OutcomeKind, SurveyRecord};
use crate::rng::{self, streams};
use crate::MEDIATOR_CELLS;

/// Format version of serialized bundles.
pub const BUNDLE_VERSION: u32 = 1;

/// Covariates entering each nuisance model; `None` uses every encoded
/// covariate and an empty list fits an intercept-only model.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CovariateSelection {
    pub pi: Option<Vec<String>>,
    pub mu: Option<Vec<String>>,
    pub mediator: Option<Vec<String>>,
    pub eta: Option<Vec<String>>,
}

impl CovariateSelection {
    /// Remove `names` from every model's covariate set.
    pub fn without(&self, all: &[String], names: &[String]) -> CovariateSelection {
        let drop = |sel: &Option<Vec<String>>| {
            let base = sel.clone().unwrap_or_else(|| all.to_vec());
            Some(base.into_iter().filter(|c| !names.contains(c)).collect())
        };
        CovariateSelection {
            pi: drop(&self.pi),
            mu: drop(&self.mu),
            mediator: drop(&self.mediator),
            eta: drop(&self.eta),
        }
    }
}

/// What to fit and how.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NuisanceSpec {
    pub learner: LearnerSpec,
    /// Number of cross-fitting folds. Defaults to 1 (full-sample fit) for
    /// GLMs and 5 for tree learners.
    pub folds: Option<usize>,
    pub seed: u64,
    pub clip_epsilon: f64,
    /// Floor for joint mediator cells inside an arm's observed support.
    pub mediator_floor: f64,
    pub outcomes: Vec<OutcomeKind>,
    /// Fit mediator laws and mediator-conditional outcome regressions.
    pub mediation: bool,
    /// Fit the complete-case model and predict for incomplete records.
    pub full_sample: bool,
    pub covariates: CovariateSelection,
    /// Share of clipped predictions above which a positivity alarm is raised.
    pub alarm_fraction: f64,
}

impl Default for NuisanceSpec {
    fn default() -> Self {
        NuisanceSpec {
            learner: LearnerSpec::default(),
            folds: None,
            seed: 0,
            clip_epsilon: 0.01,
            mediator_floor: 1e-3,
            outcomes: vec![OutcomeKind::Y],
            mediation: true,
            full_sample: false,
            covariates: CovariateSelection::default(),
            alarm_fraction: 0.01,
        }
    }
}

impl NuisanceSpec {
    pub fn fold_count(&self) -> usize {
        self.folds.unwrap_or(match self.learner.kind {
            LearnerKind::Glm => 1,
            _ => 5,
        })
    }

    fn validate(&self) -> Result<()> {
        let k = self.fold_count();
        if k == 0 {
            return Err(Error::Config("fold count must be at least 1".into()));
        }
        if k == 1 && self.learner.kind != LearnerKind::Glm {
            return Err(Error::Config("tree learners need at least 2 cross-fitting folds".into()));
        }
        if !(self.clip_epsilon >= 0.0 && self.clip_epsilon < 0.5) {
            return Err(Error::Config("clip epsilon must lie in [0, 0.5)".into()));
        }
        if !(self.mediator_floor >= 0.0 && self.mediator_floor * MEDIATOR_CELLS as f64 <= 1.0) {
            return Err(Error::Config("mediator floor must lie in [0, 1/16]".into()));
        }
        if self.outcomes.is_empty() {
            return Err(Error::Config("at least one outcome regression is required".into()));
        }
        Ok(())
    }
}

/// Arm-specific outcome regressions `μ_0(X)`, `μ_1(X)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRegressions {
    pub mu0: Vec<f64>,
    pub mu1: Vec<f64>,
}

impl OutcomeRegressions {
    pub fn arm(&self, a: u8) -> &[f64] {
        if a == 1 {
            &self.mu1
        } else {
            &self.mu0
        }
    }
}

/// Predictions needed by estimators that use every accepting respondent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullSampleNuisance {
    /// `η(X)` for complete records.
    pub eta: Vec<f64>,
    pub folds_incomplete: Vec<usize>,
    pub eta_incomplete: Vec<f64>,
    pub pi_incomplete: Vec<f64>,
    pub mu_incomplete: BTreeMap<OutcomeKind, OutcomeRegressions>,
}

/// Cross-fitted per-record nuisance predictions for one analytic sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceBundle {
    pub version: u32,
    /// Hash of the run configuration that produced the bundle.
    pub config_hash: String,
    pub n: usize,
    /// Fingerprint of the sample the bundle was fitted on.
    pub sample_fingerprint: String,
    pub clip_epsilon: f64,
    pub mediator_floor: f64,
    pub folds: Vec<usize>,
    /// `π_1(X)`.
    pub pi: Vec<f64>,
    pub mu: BTreeMap<OutcomeKind, OutcomeRegressions>,
    /// `μ_a(m, X)` per arm, row-major `n × 16`.
    pub mu_m: Option<[Vec<f64>; 2]>,
    /// `p(m | a, X)` per arm, row-major `n × 16`.
    pub pmed: Option<[Vec<f64>; 2]>,
    pub full: Option<FullSampleNuisance>,
    /// Number of predictions moved by clipping, per model.
    pub clip_counts: BTreeMap<String, usize>,
    pub warnings: Vec<String>,
}

impl NuisanceBundle {
    /// `π_a(X_i)`.
    #[inline]
    pub fn pi_a(&self, i: usize, a: u8) -> f64 {
        if a == 1 {
            self.pi[i]
        } else {
            1.0 - self.pi[i]
        }
    }

    pub fn mu(&self, kind: OutcomeKind) -> Result<&OutcomeRegressions> {
        self.mu
            .get(&kind)
            .ok_or_else(|| Error::Config(format!("bundle has no outcome regression for '{}'", kind.label())))
    }

    pub fn mediation(&self) -> Result<(&[Vec<f64>; 2], &[Vec<f64>; 2])> {
        match (&self.mu_m, &self.pmed) {
            (Some(m), Some(p)) => Ok((m, p)),
            _ => Err(Error::Config("bundle was fitted without mediator models".into())),
        }
    }

    pub fn full_sample(&self) -> Result<&FullSampleNuisance> {
        self.full
            .as_ref()
            .ok_or_else(|| Error::Config("bundle was fitted without the complete-case model".into()))
    }

    /// Check that the bundle was fitted on a sample of `n` records.
    pub fn check_len(&self, n: usize) -> Result<()> {
        if self.n != n || self.pi.len() != n {
            return Err(Error::Mismatch { what: "bundle records", expected: n, got: self.n });
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<NuisanceBundle> {
        let b: NuisanceBundle = serde_json::from_str(s)?;
        if b.version != BUNDLE_VERSION {
            return Err(Error::Data(format!(
                "bundle format version {} is not supported (expected {BUNDLE_VERSION})",
                b.version
            )));
        }
        Ok(b)
    }
}

/// Clip `p` into `[eps, 1 - eps]`, reporting whether it moved.
#[inline]
pub fn clip_probability(p: f64, eps: f64) -> (f64, bool) {
    if p < eps {
        (eps, true)
    } else if p > 1.0 - eps {
        (1.0 - eps, true)
    } else {
        (p, false)
    }
}

/// Balanced seeded fold labels in `0..k` for `n` records.
pub fn fold_assignment(n: usize, k: usize, seed: u64, block: u64) -> Vec<usize> {
    let mut folds = vec![0; n];
    if k <= 1 {
        return folds;
    }
    let mut r = rng::stream(seed, streams::FOLDS, block);
    let perm = rng::permutation(&mut r, n);
    for (pos, i) in perm.into_iter().enumerate() {
        folds[i] = pos % k;
    }
    folds
}

struct Designs {
    pi: DesignMatrix,
    mu: DesignMatrix,
    mediator: DesignMatrix,
    eta: DesignMatrix,
}

impl Designs {
    fn build(sample: &AnalyticSample, records: &[SurveyRecord], sel: &CovariateSelection) -> Result<Designs> {
        let enc = &sample.encoding;
        Ok(Designs {
            pi: enc.design(records, sel.pi.as_deref())?,
            mu: enc.design(records, sel.mu.as_deref())?,
            mediator: enc.design(records, sel.mediator.as_deref())?,
            eta: enc.design(records, sel.eta.as_deref())?,
        })
    }
}

/// Per-fold predictions, scattered into full-length vectors afterwards.
#[derive(Default)]
struct FoldOutput {
    idx: Vec<usize>,
    idx_inc: Vec<usize>,
    pi: Vec<f64>,
    pi_inc: Vec<f64>,
    mu: Vec<[Vec<f64>; 2]>,
    mu_inc: Vec<[Vec<f64>; 2]>,
    mu_m: Option<[Vec<f64>; 2]>,
    pmed: Option<[Vec<f64>; 2]>,
    eta: Vec<f64>,
    eta_inc: Vec<f64>,
    warnings: Vec<String>,
}

fn seed_for(seed: u64, model: u64, fold: usize) -> u64 {
    seed ^ (model.wrapping_mul(0x9E37_79B9_7F4A_7C15)).wrapping_add(fold as u64)
}

fn subset_weights(w: Option<&[f64]>, idx: &[usize]) -> Option<Vec<f64>> {
    w.map(|w| idx.iter().map(|&i| w[i]).collect())
}

/// Cross-fit every requested nuisance function.
///
/// With `K` folds, the models trained on records outside fold `k` predict
/// the records of fold `k`; `K = 1` fits once on the full sample. Propensity
/// and outcome models train on complete records; the complete-case model
/// trains on every accepting respondent.
pub fn crossfit(sample: &AnalyticSample, spec: &NuisanceSpec) -> Result<NuisanceBundle> {
    spec.validate()?;
    let n = sample.len();
    let n_inc = if spec.full_sample { sample.incomplete.len() } else { 0 };
    let k = spec.fold_count();
    if k > n {
        return Err(Error::Config(format!("{k} folds requested for {n} records")));
    }
    let folds = fold_assignment(n, k, spec.seed, 0);
    let folds_inc = fold_assignment(n_inc, k, spec.seed, 1);

    let designs = Designs::build(sample, &sample.records, &spec.covariates)?;
    let designs_inc = if spec.full_sample {
        Some(Designs::build(sample, &sample.incomplete, &spec.covariates)?)
    } else {
        None
    };
    let a = sample.treatment();
    let w = sample.weights();
    let outcomes: Vec<Vec<f64>> = spec.outcomes.iter().map(|&o| sample.outcome(o)).collect();
    let med_codes: Vec<usize> = (0..n).map(|i| sample.mediator_code(i)).collect();

    // Mediator cells observed in each arm over the whole sample.
    let mut support = [[false; MEDIATOR_CELLS]; 2];
    for i in 0..n {
        support[a[i] as usize][med_codes[i]] = true;
    }

    let fit_fold = |fold: usize| -> Result<FoldOutput> {
        let (train, idx): (Vec<usize>, Vec<usize>) = if k == 1 {
            ((0..n).collect(), (0..n).collect())
        } else {
            ((0..n).filter(|&i| folds[i] != fold).collect(), (0..n).filter(|&i| folds[i] == fold).collect())
        };
        let idx_inc: Vec<usize> = (0..n_inc).filter(|&i| k == 1 || folds_inc[i] == fold).collect();
        let mut out = FoldOutput { idx, idx_inc, ..Default::default() };
        let arm_train: [Vec<usize>; 2] = [
            train.iter().copied().filter(|&i| a[i] == 0).collect(),
            train.iter().copied().filter(|&i| a[i] == 1).collect(),
        ];
        for (arm, rows) in arm_train.iter().enumerate() {
            if rows.is_empty() {
                return Err(Error::Data(format!(
                    "no training records with treatment {arm} outside fold {fold}"
                )));
            }
        }
        let seed = spec.seed;
        let learner = &spec.learner;

        // Propensity.
        let classes: Vec<usize> = train.iter().map(|&i| a[i] as usize).collect();
        let m = fit_learner(
            learner,
            &designs.pi.select_rows(&train),
            &classes,
            2,
            subset_weights(w, &train).as_deref(),
            &[],
            seed_for(seed, 1, fold),
        )?;
        out.warnings.extend(m.warnings().into_iter().map(|s| format!("propensity (fold {fold}): {s}")));
        out.pi = m.predict_binary(&designs.pi.select_rows(&out.idx));
        if let Some(d) = &designs_inc {
            out.pi_inc = m.predict_binary(&d.pi.select_rows(&out.idx_inc));
        }

        // Outcome regressions per arm.
        for (o, y) in spec.outcomes.iter().zip(&outcomes) {
            let mut per_arm: [Vec<f64>; 2] = Default::default();
            let mut per_arm_inc: [Vec<f64>; 2] = Default::default();
            for arm in 0..2 {
                let rows = &arm_train[arm];
                let classes: Vec<usize> = rows.iter().map(|&i| y[i] as usize).collect();
                let m = fit_learner(
                    learner,
                    &designs.mu.select_rows(rows),
                    &classes,
                    2,
                    subset_weights(w, rows).as_deref(),
                    &[],
                    seed_for(seed, 10 + 2 * (*o as u64) + arm as u64, fold),
                )?;
                out.warnings.extend(
                    m.warnings().into_iter().map(|s| format!("outcome {} arm {arm} (fold {fold}): {s}", o.label())),
                );
                per_arm[arm] = m.predict_binary(&designs.mu.select_rows(&out.idx));
                if let Some(d) = &designs_inc {
                    per_arm_inc[arm] = m.predict_binary(&d.mu.select_rows(&out.idx_inc));
                }
            }
            out.mu.push(per_arm);
            out.mu_inc.push(per_arm_inc);
        }

        if spec.mediation {
            let y = sample.outcome(OutcomeKind::Y);
            let mut mu_m: [Vec<f64>; 2] = Default::default();
            let mut pmed: [Vec<f64>; 2] = Default::default();
            let x_fold = designs.mediator.select_rows(&out.idx);
            let x_mu_fold = designs.mu.select_rows(&out.idx);
            for arm in 0..2 {
                let rows = &arm_train[arm];
                let wt = subset_weights(w, rows);
                // Joint mediator law within the arm.
                let classes: Vec<usize> = rows.iter().map(|&i| med_codes[i]).collect();
                let mut zeros: Vec<usize> = (0..MEDIATOR_CELLS).filter(|&c| !support[arm][c]).collect();
                for c in 0..MEDIATOR_CELLS {
                    if support[arm][c] && !classes.contains(&c) {
                        zeros.push(c);
                        out.warnings.push(format!(
                            "mediator cell {c} unobserved in arm {arm} training data for fold {fold}; floored"
                        ));
                    }
                }
                let m = fit_learner(
                    learner,
                    &designs.mediator.select_rows(rows),
                    &classes,
                    MEDIATOR_CELLS,
                    wt.as_deref(),
                    &zeros,
                    seed_for(seed, 20 + arm as u64, fold),
                )?;
                out.warnings.extend(m.warnings().into_iter().map(|s| format!("mediator arm {arm} (fold {fold}): {s}")));
                pmed[arm] = m.predict(&x_fold);

                // Outcome given mediators within the arm.
                let x_train = designs.mu.select_rows(rows).with_one_hot(MEDIATOR_CELLS, "m", |j| med_codes[rows[j]]);
                let classes: Vec<usize> = rows.iter().map(|&i| y[i] as usize).collect();
                let m = fit_learner(learner, &x_train, &classes, 2, wt.as_deref(), &[], seed_for(seed, 30 + arm as u64, fold))?;
                out.warnings.extend(
                    m.warnings().into_iter().map(|s| format!("mediator outcome arm {arm} (fold {fold}): {s}")),
                );
                let nf = out.idx.len();
                let x_all = x_mu_fold
                    .select_rows(&(0..nf).flat_map(|j| std::iter::repeat_n(j, MEDIATOR_CELLS)).collect::<Vec<_>>())
                    .with_one_hot(MEDIATOR_CELLS, "m", |r| r % MEDIATOR_CELLS);
                mu_m[arm] = m.predict_binary(&x_all);
            }
            out.mu_m = Some(mu_m);
            out.pmed = Some(pmed);
        }

        if let Some(d) = &designs_inc {
            let train_inc: Vec<usize> = (0..n_inc).filter(|&i| k == 1 || folds_inc[i] != fold).collect();
            let x = concat_rows(&designs.eta.select_rows(&train), &d.eta.select_rows(&train_inc));
            let mut classes = vec![1usize; train.len()];
            classes.extend(std::iter::repeat_n(0, train_inc.len()));
            let wt = w.map(|w| {
                let mut v: Vec<f64> = train.iter().map(|&i| w[i]).collect();
                v.extend(train_inc.iter().map(|&i| sample.incomplete[i].weight.unwrap_or(1.0)));
                v
            });
            let m = fit_learner(learner, &x, &classes, 2, wt.as_deref(), &[], seed_for(seed, 40, fold))?;
            out.warnings.extend(m.warnings().into_iter().map(|s| format!("complete-case (fold {fold}): {s}")));
            out.eta = m.predict_binary(&designs.eta.select_rows(&out.idx));
            out.eta_inc = m.predict_binary(&d.eta.select_rows(&out.idx_inc));
        }
        Ok(out)
    };

    let outputs: Vec<FoldOutput> = (0..k).into_par_iter().map(fit_fold).collect::<Result<Vec<_>>>()?;

    // Scatter fold predictions and clip.
    let eps = spec.clip_epsilon;
    let mut clip_counts = BTreeMap::new();
    let mut warnings = Vec::new();
    let mut pi = vec![0.0; n];
    let mut mu: Vec<[Vec<f64>; 2]> = spec.outcomes.iter().map(|_| [vec![0.0; n], vec![0.0; n]]).collect();
    let mut mu_inc: Vec<[Vec<f64>; 2]> = spec.outcomes.iter().map(|_| [vec![0.0; n_inc], vec![0.0; n_inc]]).collect();
    let mut pi_inc = vec![0.0; n_inc];
    let mut eta = vec![0.0; n];
    let mut eta_inc = vec![0.0; n_inc];
    let mut mu_m = [vec![0.0; n * MEDIATOR_CELLS], vec![0.0; n * MEDIATOR_CELLS]];
    let mut pmed = mu_m.clone();
    for out in outputs {
        warnings.extend(out.warnings);
        for (j, &i) in out.idx.iter().enumerate() {
            pi[i] = out.pi[j];
            for (dst, src) in mu.iter_mut().zip(&out.mu) {
                dst[0][i] = src[0][j];
                dst[1][i] = src[1][j];
            }
            if spec.full_sample {
                eta[i] = out.eta[j];
            }
            if let (Some(m), Some(p)) = (&out.mu_m, &out.pmed) {
                for arm in 0..2 {
                    let (s, d) = (j * MEDIATOR_CELLS..(j + 1) * MEDIATOR_CELLS, i * MEDIATOR_CELLS..(i + 1) * MEDIATOR_CELLS);
                    mu_m[arm][d.clone()].copy_from_slice(&m[arm][s.clone()]);
                    pmed[arm][d].copy_from_slice(&p[arm][s]);
                }
            }
        }
        for (j, &i) in out.idx_inc.iter().enumerate() {
            pi_inc[i] = out.pi_inc[j];
            eta_inc[i] = out.eta_inc[j];
            for (dst, src) in mu_inc.iter_mut().zip(&out.mu_inc) {
                dst[0][i] = src[0][j];
                dst[1][i] = src[1][j];
            }
        }
    }

    let mut clip_all = |name: &str, values: &mut [f64], alarm: bool| {
        let mut hits = 0;
        for v in values.iter_mut() {
            let (c, moved) = clip_probability(*v, eps);
            *v = c;
            hits += usize::from(moved);
        }
        if alarm && !values.is_empty() && hits as f64 > spec.alarm_fraction * values.len() as f64 {
            warnings.push(format!(
                "positivity alarm: {hits} of {} {name} predictions hit the clip bound {eps}",
                values.len()
            ));
        }
        *clip_counts.entry(name.to_string()).or_insert(0) += hits;
    };
    clip_all("pi", &mut pi, true);
    for (o, m) in spec.outcomes.iter().zip(mu.iter_mut()) {
        clip_all(&format!("mu_{}", o.label()), &mut m[0], false);
        clip_all(&format!("mu_{}", o.label()), &mut m[1], false);
    }
    let mut floored = 0;
    if spec.mediation {
        for arm in mu_m.iter_mut() {
            clip_all("mu_m", arm, false);
        }
        for (arm, table) in pmed.iter_mut().enumerate() {
            for row in table.chunks_mut(MEDIATOR_CELLS) {
                floored += floor_mediator_row(row, &support[arm], spec.mediator_floor);
            }
        }
    }
    let full = if spec.full_sample {
        clip_all("pi_incomplete", &mut pi_inc, false);
        for (o, m) in spec.outcomes.iter().zip(mu_inc.iter_mut()) {
            clip_all(&format!("mu_{}_incomplete", o.label()), &mut m[0], false);
            clip_all(&format!("mu_{}_incomplete", o.label()), &mut m[1], false);
        }
        // The complete-case probability may legitimately be 1; clip only
        // from below.
        let mut hits = 0;
        for v in eta.iter_mut().chain(eta_inc.iter_mut()) {
            if *v < eps.max(f64::MIN_POSITIVE) {
                *v = eps.max(f64::MIN_POSITIVE);
                hits += 1;
            }
        }
        let total = n + n_inc;
        if hits as f64 > spec.alarm_fraction * total as f64 {
            warnings.push(format!("positivity alarm: {hits} of {total} eta predictions hit the clip bound {eps}"));
        }
        clip_counts.insert("eta".into(), hits);
        Some(FullSampleNuisance {
            eta,
            folds_incomplete: folds_inc,
            eta_incomplete: eta_inc,
            pi_incomplete: pi_inc,
            mu_incomplete: spec
                .outcomes
                .iter()
                .zip(mu_inc)
                .map(|(&o, [mu0, mu1])| (o, OutcomeRegressions { mu0, mu1 }))
                .collect(),
        })
    } else {
        None
    };

    if spec.mediation {
        clip_counts.insert("pmed".into(), floored);
    }
    Ok(NuisanceBundle {
        version: BUNDLE_VERSION,
        config_hash: String::new(),
        n,
        sample_fingerprint: sample.fingerprint(),
        clip_epsilon: eps,
        mediator_floor: spec.mediator_floor,
        folds,
        pi,
        mu: spec
            .outcomes
            .iter()
            .zip(mu)
            .map(|(&o, [mu0, mu1])| (o, OutcomeRegressions { mu0, mu1 }))
            .collect(),
        mu_m: spec.mediation.then_some(mu_m),
        pmed: spec.mediation.then_some(pmed),
        full,
        clip_counts,
        warnings,
    })
}

/// Floor supported cells at `floor`, zero the rest and renormalize.
/// Returns the number of cells raised to the floor.
fn floor_mediator_row(row: &mut [f64], support: &[bool; MEDIATOR_CELLS], floor: f64) -> usize {
    let mut hits = 0;
    for (p, &s) in row.iter_mut().zip(support) {
        if !s {
            *p = 0.0;
        } else if *p < floor {
            *p = floor;
            hits += 1;
        }
    }
    let total: f64 = row.iter().sum();
    row.iter_mut().for_each(|p| *p /= total);
    hits
}

fn concat_rows(a: &DesignMatrix, b: &DesignMatrix) -> DesignMatrix {
    let p = a.ncols();
    let mut data = Vec::with_capacity((a.nrows() + b.nrows()) * p);
    for i in 0..a.nrows() {
        data.extend_from_slice(a.row(i));
    }
    for i in 0..b.nrows() {
        data.extend_from_slice(b.row(i));
    }
    DesignMatrix::new(a.nrows() + b.nrows(), p, data, a.names().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_are_balanced_and_seeded() {
        let f = fold_assignment(100, 2, 7, 0);
        assert_eq!(f.iter().filter(|&&k| k == 0).count(), 50);
        assert_eq!(f, fold_assignment(100, 2, 7, 0));
        assert_ne!(f, fold_assignment(100, 2, 8, 0));
        let f5 = fold_assignment(103, 5, 1, 0);
        for k in 0..5 {
            let c = f5.iter().filter(|&&v| v == k).count();
            assert!(c == 20 || c == 21);
        }
    }

    #[test]
    fn clipping_moves_boundary_values() {
        assert_eq!(clip_probability(0.001, 0.01), (0.01, true));
        assert_eq!(clip_probability(0.995, 0.01), (0.99, true));
        assert_eq!(clip_probability(0.5, 0.01), (0.5, false));
    }

    #[test]
    fn mediator_floor_keeps_rows_normalized() {
        let mut support = [false; MEDIATOR_CELLS];
        support[0] = true;
        support[3] = true;
        support[15] = true;
        let mut row = [0.0; MEDIATOR_CELLS];
        row[0] = 0.9999;
        row[3] = 0.0001;
        row[7] = 0.0;
        let hits = floor_mediator_row(&mut row, &support, 1e-3);
        assert_eq!(hits, 2);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(row[7], 0.0);
        assert!(row[15] > 0.0);
    }
}
