//! Discrete synthetic survey data-generating processes with exactly
//! enumerated ground truth.
//!
//! Draws follow `X → V → A → (M1, M2) → Y`, with the complete-case indicator
//! `R` drawn last. Every estimand is computed by summing over the finite
//! `(x, a, m1, m2)` support conditional on `V = 1, R = 1`, which is the
//! population the estimators target.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{AnalyticSample, CovariateValue, OutcomeKind, SurveyRecord, Thresholds};
use crate::nuisance::{FullSampleNuisance, NuisanceBundle, OutcomeRegressions, BUNDLE_VERSION};
use crate::rng::{self, streams};
use crate::stats::expit;
use crate::{decode_mediators, encode_mediators, MEDIATOR_CELLS};

/// Largest discrete covariate support accepted.
pub const MAX_CELLS: usize = 64;
/// Records per generation block; each block draws from its own stream.
const BLOCK: usize = 4096;
const TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovariateDef {
    pub name: String,
    pub levels: Vec<String>,
}

/// Treatment, mediator and outcome laws for one acceptance stratum. All
/// tables are indexed by covariate cell; mediator and outcome tables by arm
/// first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumLaw {
    /// `P(A = 1 | x)`.
    pub propensity: Vec<f64>,
    /// `p(m | a, x)` over the 16 joint mediator cells.
    pub mediator: [Vec<Vec<f64>>; 2],
    /// `P(Y = 1 | a, m, x)`.
    pub outcome: [Vec<Vec<f64>>; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpSpec {
    pub name: String,
    /// Discrete covariates; cells enumerate their product with the first
    /// covariate varying slowest.
    pub covariates: Vec<CovariateDef>,
    pub x_law: Vec<f64>,
    /// `P(V = 1 | x)`.
    pub acceptance: Vec<f64>,
    pub accepting: StratumLaw,
    /// Laws for the hesitant stratum; the accepting laws are reused if absent.
    #[serde(default)]
    pub hesitant: Option<StratumLaw>,
    /// `P(R = 1 | x, a)` per arm.
    pub response: [Vec<f64>; 2],
    /// Standard-normal covariates independent of everything else.
    #[serde(default)]
    pub continuous: Vec<String>,
    pub seed: u64,
}

fn check_prob(what: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("{what}: probability {p} outside [0, 1]")));
    }
    Ok(())
}

fn check_row(what: &str, row: &[f64], len: usize) -> Result<()> {
    if row.len() != len {
        return Err(Error::Config(format!("{what}: expected {len} entries, got {}", row.len())));
    }
    for &p in row {
        check_prob(what, p)?;
    }
    let s: f64 = row.iter().sum();
    if (s - 1.0).abs() > TOL {
        return Err(Error::Config(format!("{what}: probabilities sum to {s}, not 1")));
    }
    Ok(())
}

impl StratumLaw {
    fn validate(&self, cells: usize, label: &str) -> Result<()> {
        if self.propensity.len() != cells {
            return Err(Error::Config(format!("{label} propensity needs {cells} cells")));
        }
        for &p in &self.propensity {
            check_prob(&format!("{label} propensity"), p)?;
        }
        for a in 0..2 {
            if self.mediator[a].len() != cells || self.outcome[a].len() != cells {
                return Err(Error::Config(format!("{label} arm {a} tables need {cells} cells")));
            }
            for x in 0..cells {
                check_row(&format!("{label} mediator law (a={a}, cell {x})"), &self.mediator[a][x], MEDIATOR_CELLS)?;
                let out = &self.outcome[a][x];
                if out.len() != MEDIATOR_CELLS {
                    return Err(Error::Config(format!("{label} outcome table (a={a}, cell {x}) needs 16 entries")));
                }
                for &p in out {
                    check_prob(&format!("{label} outcome law"), p)?;
                }
            }
        }
        Ok(())
    }

    /// `μ_a(x) = Σ_m p(m | a, x) P(Y = 1 | a, m, x)`.
    pub fn mu(&self, a: usize, x: usize) -> f64 {
        self.mediator[a][x].iter().zip(&self.outcome[a][x]).map(|(p, y)| p * y).sum()
    }

    fn mediator_star(&self, a: usize, x: usize, thresholds: Thresholds, first: bool) -> f64 {
        (0..MEDIATOR_CELLS)
            .filter(|&c| {
                let (m1, m2) = decode_mediators(c);
                if first {
                    m1 >= thresholds.m1
                } else {
                    m2 >= thresholds.m2
                }
            })
            .map(|c| self.mediator[a][x][c])
            .sum()
    }
}

impl DgpSpec {
    pub fn cells(&self) -> usize {
        self.covariates.iter().map(|c| c.levels.len()).product()
    }

    pub fn validate(&self) -> Result<()> {
        let cells = self.cells();
        if self.covariates.is_empty() || cells == 0 || cells > MAX_CELLS {
            return Err(Error::Config(format!(
                "covariate support must have between 1 and {MAX_CELLS} cells (got {cells})"
            )));
        }
        check_row("covariate law", &self.x_law, cells)?;
        if self.acceptance.len() != cells || self.response.iter().any(|r| r.len() != cells) {
            return Err(Error::Config(format!("acceptance and response maps need {cells} cells")));
        }
        for &p in self.acceptance.iter().chain(self.response.iter().flatten()) {
            check_prob("acceptance/response map", p)?;
        }
        self.accepting.validate(cells, "accepting")?;
        if let Some(h) = &self.hesitant {
            h.validate(cells, "hesitant")?;
        }
        Ok(())
    }

    pub fn covariate_names(&self) -> Vec<String> {
        self.covariates.iter().map(|c| c.name.clone()).collect()
    }

    /// Level index of each covariate for cell `x`.
    pub fn cell_levels(&self, mut x: usize) -> Vec<usize> {
        let mut out = vec![0; self.covariates.len()];
        for (j, c) in self.covariates.iter().enumerate().rev() {
            out[j] = x % c.levels.len();
            x /= c.levels.len();
        }
        out
    }

    /// Covariate cell of a record.
    pub fn cell_of(&self, r: &SurveyRecord) -> Result<usize> {
        let mut x = 0;
        for c in &self.covariates {
            let idx = match r.covariate(&c.name) {
                CovariateValue::Level(l) => c.levels.iter().position(|v| v == l),
                _ => None,
            }
            .ok_or_else(|| Error::Data(format!("record has no valid level for covariate '{}'", c.name)))?;
            x = x * c.levels.len() + idx;
        }
        Ok(x)
    }

    /// Stratum-specific probabilities with `P(A = 1 | x, V = 1, R = 1)`.
    fn z_propensity(&self, x: usize) -> f64 {
        let p = self.accepting.propensity[x];
        let (r0, r1) = (self.response[0][x], self.response[1][x]);
        let denom = p * r1 + (1.0 - p) * r0;
        if denom > 0.0 {
            p * r1 / denom
        } else {
            p
        }
    }

    /// `P(x | V = 1, R = 1)`.
    fn z_covariate_law(&self) -> Result<Vec<f64>> {
        let mass: Vec<f64> = (0..self.cells())
            .map(|x| {
                let p = self.accepting.propensity[x];
                self.x_law[x] * self.acceptance[x] * (p * self.response[1][x] + (1.0 - p) * self.response[0][x])
            })
            .collect();
        let total: f64 = mass.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Config("the complete accepting population has zero probability".into()));
        }
        Ok(mass.into_iter().map(|m| m / total).collect())
    }

    /// `P(R = 1 | x, V = 1)`.
    fn eta(&self, x: usize) -> f64 {
        let p = self.accepting.propensity[x];
        p * self.response[1][x] + (1.0 - p) * self.response[0][x]
    }
}

fn draw_index(r: &mut impl Rng, probs: &[f64]) -> usize {
    let u: f64 = r.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Guard against round-off in the cumulative sum.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Draw `n` i.i.d. records; deterministic given the spec seed.
pub fn generate(spec: &DgpSpec, n: usize) -> Result<Vec<SurveyRecord>> {
    spec.validate()?;
    let blocks = n.div_ceil(BLOCK);
    let out: Vec<Vec<SurveyRecord>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut r = rng::stream(spec.seed, streams::SIMULATION, b as u64);
            let len = BLOCK.min(n - b * BLOCK);
            (0..len).map(|_| draw_record(spec, &mut r)).collect()
        })
        .collect();
    Ok(out.into_iter().flatten().collect())
}

fn draw_record(spec: &DgpSpec, r: &mut impl Rng) -> SurveyRecord {
    let x = draw_index(r, &spec.x_law);
    let v = r.random::<f64>() < spec.acceptance[x];
    let law = if v { &spec.accepting } else { spec.hesitant.as_ref().unwrap_or(&spec.accepting) };
    let a = usize::from(r.random::<f64>() < law.propensity[x]);
    let m = draw_index(r, &law.mediator[a][x]);
    let y = r.random::<f64>() < law.outcome[a][x][m];
    let complete = r.random::<f64>() < spec.response[a][x];
    let (m1, m2) = decode_mediators(m);
    let mut covariates = BTreeMap::new();
    for (c, l) in spec.covariates.iter().zip(spec.cell_levels(x)) {
        covariates.insert(c.name.clone(), CovariateValue::Level(c.levels[l].clone()));
    }
    for name in &spec.continuous {
        let z: f64 = r.sample(StandardNormal);
        covariates.insert(name.clone(), CovariateValue::Real(z));
    }
    SurveyRecord {
        outcome: complete.then_some(u8::from(y)),
        treatment: Some(a as u8),
        mediator1: complete.then_some(m1),
        mediator2: complete.then_some(m2),
        acceptance: Some(u8::from(v)),
        covariates,
        region: None,
        weight: None,
    }
}

/// Truth for one covariate cell of the target population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTruth {
    pub levels: Vec<String>,
    /// `P(x | V = 1, R = 1)`.
    pub p_x: f64,
    /// `P(A = 1 | x, V = 1, R = 1)`.
    pub pi: f64,
    pub mu0: f64,
    pub mu1: f64,
    pub effect: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionTruth {
    pub reference: u8,
    pub total: f64,
    pub ide: f64,
    pub iie_m1: f64,
    pub iie_m2: f64,
    pub cov: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementalTruth {
    pub deltas: Vec<f64>,
    pub values: Vec<f64>,
    /// Limit `δ → 0`: everyone untreated.
    pub at_zero: f64,
    /// Limit `δ → ∞`: everyone treated.
    pub at_infinity: f64,
}

/// Exactly enumerated estimands of a [`DgpSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleTruth {
    /// `E[μ_1(X)]`, `E[μ_0(X)]` per outcome.
    pub means: BTreeMap<OutcomeKind, [f64; 2]>,
    pub rd: f64,
    pub rr: f64,
    pub decomposition: [DecompositionTruth; 2],
    pub incremental: IncrementalTruth,
    pub observed: f64,
    /// Risk difference over the covariate law of all accepting respondents.
    pub full_sample_rd: f64,
    pub cells: Vec<CellTruth>,
}

impl OracleTruth {
    /// Population sensitivity bounds `(lower, upper)` at `tau`. The first
    /// variant bounds the sample effect; the generalization variant drops
    /// the arm-probability shrinkage.
    pub fn sensitivity_bounds(&self, tau: f64, generalization: bool) -> (f64, f64) {
        let c = tau / (1.0 - tau);
        let mut lo = 0.0;
        let mut hi = 0.0;
        for cell in &self.cells {
            let (s1, s0) = if generalization {
                (cell.mu1, cell.mu0)
            } else {
                (cell.mu1 * (1.0 - cell.pi), cell.mu0 * cell.pi)
            };
            hi += cell.p_x * (cell.effect + c * s1 + tau * s0);
            lo += cell.p_x * (cell.effect - tau * s1 - c * s0);
        }
        (lo, hi)
    }
}

/// Incremental-intervention mean at odds multiplier `delta` for one cell.
pub fn incremental_cell(delta: f64, pi: f64, mu0: f64, mu1: f64) -> f64 {
    (delta * pi * mu1 + (1.0 - pi) * mu0) / (delta * pi + 1.0 - pi)
}

/// `Σ_x p(x) Σ_m μ_b(m, x) G_x(m)` for a mediator law `G`.
fn theta(spec: &DgpSpec, p_x: &[f64], b: usize, law: impl Fn(usize, usize) -> f64) -> f64 {
    (0..spec.cells())
        .map(|x| {
            p_x[x]
                * (0..MEDIATOR_CELLS)
                    .map(|m| spec.accepting.outcome[b][x][m] * law(x, m))
                    .sum::<f64>()
        })
        .sum()
}

fn marginals(row: &[f64]) -> ([f64; 4], [f64; 4]) {
    let mut m1 = [0.0; 4];
    let mut m2 = [0.0; 4];
    for (c, p) in row.iter().enumerate() {
        let (a, b) = decode_mediators(c);
        m1[a as usize] += p;
        m2[b as usize] += p;
    }
    (m1, m2)
}

/// Enumerate every estimand of `spec` exactly; `deltas` are the finite
/// odds multipliers of the incremental curve.
pub fn enumerate_truth(spec: &DgpSpec, deltas: &[f64]) -> Result<OracleTruth> {
    spec.validate()?;
    if !spec.continuous.is_empty() {
        return Err(Error::Config("exact enumeration requires discrete covariates only".into()));
    }
    let law = &spec.accepting;
    let p_x = spec.z_covariate_law()?;
    let cells_n = spec.cells();
    let thresholds = default_thresholds();

    let mut cells = Vec::with_capacity(cells_n);
    for x in 0..cells_n {
        let (mu0, mu1) = (law.mu(0, x), law.mu(1, x));
        cells.push(CellTruth {
            levels: spec
                .covariates
                .iter()
                .zip(spec.cell_levels(x))
                .map(|(c, l)| c.levels[l].clone())
                .collect(),
            p_x: p_x[x],
            pi: spec.z_propensity(x),
            mu0,
            mu1,
            effect: mu1 - mu0,
        });
    }
    let mean = |f: &dyn Fn(&CellTruth, usize) -> f64| -> f64 { cells.iter().enumerate().map(|(x, c)| c.p_x * f(c, x)).sum() };
    let mut means = BTreeMap::new();
    means.insert(OutcomeKind::Y, [mean(&|c, _| c.mu0), mean(&|c, _| c.mu1)]);
    means.insert(
        OutcomeKind::M1Star,
        [mean(&|_, x| law.mediator_star(0, x, thresholds, true)), mean(&|_, x| law.mediator_star(1, x, thresholds, true))],
    );
    means.insert(
        OutcomeKind::M2Star,
        [mean(&|_, x| law.mediator_star(0, x, thresholds, false)), mean(&|_, x| law.mediator_star(1, x, thresholds, false))],
    );
    let [p0, p1] = means[&OutcomeKind::Y];
    let rd = p1 - p0;

    // Mediation building blocks.
    let joint = |c: usize| move |x: usize, m: usize| law.mediator[c][x][m];
    let product = |c1: usize, c2: usize| {
        move |x: usize, m: usize| {
            let (m1, m2) = decode_mediators(m);
            let (a1, _) = marginals(&law.mediator[c1][x]);
            let (_, a2) = marginals(&law.mediator[c2][x]);
            a1[m1 as usize] * a2[m2 as usize]
        }
    };
    let th = |b: usize, g: &dyn Fn(usize, usize) -> f64| theta(spec, &p_x, b, g);
    let decomposition = [0u8, 1].map(|reference| {
        let (ide, iie_m1, iie_m2) = if reference == 0 {
            (
                th(1, &joint(1)) - th(0, &joint(1)),
                th(0, &product(1, 0)) - th(0, &product(0, 0)),
                th(0, &product(1, 1)) - th(0, &product(1, 0)),
            )
        } else {
            (
                th(1, &joint(0)) - th(0, &joint(0)),
                th(1, &product(1, 1)) - th(1, &product(0, 1)),
                th(1, &product(0, 1)) - th(1, &product(0, 0)),
            )
        };
        DecompositionTruth { reference, total: rd, ide, iie_m1, iie_m2, cov: rd - ide - iie_m1 - iie_m2 }
    });

    let incremental = IncrementalTruth {
        deltas: deltas.to_vec(),
        values: deltas
            .iter()
            .map(|&d| mean(&|c, _| incremental_cell(d, c.pi, c.mu0, c.mu1)))
            .collect(),
        at_zero: p0,
        at_infinity: p1,
    };
    let observed = mean(&|c, _| c.pi * c.mu1 + (1.0 - c.pi) * c.mu0) - p0;

    let v_mass: Vec<f64> = (0..cells_n).map(|x| spec.x_law[x] * spec.acceptance[x]).collect();
    let v_total: f64 = v_mass.iter().sum();
    let full_sample_rd = cells.iter().zip(&v_mass).map(|(c, m)| m / v_total * c.effect).sum();

    Ok(OracleTruth {
        means,
        rd,
        rr: p1 / p0,
        decomposition,
        incremental,
        observed,
        full_sample_rd,
        cells,
    })
}

fn default_thresholds() -> Thresholds {
    Thresholds { m1: 2, m2: 3 }
}

/// One weighted record per `(x, a, m1, m2, y)` support point of the target
/// population, weighted by its exact probability. Averages over this sample
/// are population expectations.
pub fn exact_law_sample(spec: &DgpSpec) -> Result<AnalyticSample> {
    spec.validate()?;
    if !spec.continuous.is_empty() {
        return Err(Error::Config("exact-law samples require discrete covariates only".into()));
    }
    let p_x = spec.z_covariate_law()?;
    let law = &spec.accepting;
    let mut records = Vec::new();
    for x in 0..spec.cells() {
        let pi = spec.z_propensity(x);
        let mut covariates = BTreeMap::new();
        for (c, l) in spec.covariates.iter().zip(spec.cell_levels(x)) {
            covariates.insert(c.name.clone(), CovariateValue::Level(c.levels[l].clone()));
        }
        for a in 0..2 {
            let pa = if a == 1 { pi } else { 1.0 - pi };
            for m in 0..MEDIATOR_CELLS {
                let pm = law.mediator[a][x][m];
                for y in 0..2u8 {
                    let py = if y == 1 { law.outcome[a][x][m] } else { 1.0 - law.outcome[a][x][m] };
                    let w = p_x[x] * pa * pm * py;
                    if w <= 0.0 {
                        continue;
                    }
                    let (m1, m2) = decode_mediators(m);
                    records.push(SurveyRecord {
                        outcome: Some(y),
                        treatment: Some(a as u8),
                        mediator1: Some(m1),
                        mediator2: Some(m2),
                        acceptance: Some(1),
                        covariates: covariates.clone(),
                        region: None,
                        weight: Some(w),
                    });
                }
            }
        }
    }
    AnalyticSample::new(records, Vec::new(), default_thresholds(), true)
}

/// Bundle holding the true nuisance values for every record of `sample`
/// (no clipping, fold 0 everywhere).
pub fn true_bundle(spec: &DgpSpec, sample: &AnalyticSample) -> Result<NuisanceBundle> {
    spec.validate()?;
    let law = &spec.accepting;
    let thresholds = sample.thresholds;
    let n = sample.len();
    let cells: Vec<usize> = sample.records.iter().map(|r| spec.cell_of(r)).collect::<Result<_>>()?;
    let pi: Vec<f64> = cells.iter().map(|&x| spec.z_propensity(x)).collect();
    let regressions = |cells: &[usize]| -> BTreeMap<OutcomeKind, OutcomeRegressions> {
        let mut mu = BTreeMap::new();
        mu.insert(
            OutcomeKind::Y,
            OutcomeRegressions {
                mu0: cells.iter().map(|&x| law.mu(0, x)).collect(),
                mu1: cells.iter().map(|&x| law.mu(1, x)).collect(),
            },
        );
        for (kind, first) in [(OutcomeKind::M1Star, true), (OutcomeKind::M2Star, false)] {
            mu.insert(
                kind,
                OutcomeRegressions {
                    mu0: cells.iter().map(|&x| law.mediator_star(0, x, thresholds, first)).collect(),
                    mu1: cells.iter().map(|&x| law.mediator_star(1, x, thresholds, first)).collect(),
                },
            );
        }
        mu
    };
    let table = |f: &dyn Fn(usize, usize, usize) -> f64| -> [Vec<f64>; 2] {
        [0, 1].map(|a| cells.iter().flat_map(|&x| (0..MEDIATOR_CELLS).map(move |m| (x, m))).map(|(x, m)| f(a, x, m)).collect())
    };
    let mu_m = table(&|a, x, m| law.outcome[a][x][m]);
    let pmed = table(&|a, x, m| law.mediator[a][x][m]);

    let full = if sample.incomplete.is_empty() {
        None
    } else {
        let inc: Vec<usize> = sample.incomplete.iter().map(|r| spec.cell_of(r)).collect::<Result<_>>()?;
        Some(FullSampleNuisance {
            eta: cells.iter().map(|&x| spec.eta(x)).collect(),
            folds_incomplete: vec![0; inc.len()],
            eta_incomplete: inc.iter().map(|&x| spec.eta(x)).collect(),
            pi_incomplete: inc.iter().map(|&x| spec.z_propensity(x)).collect(),
            mu_incomplete: regressions(&inc),
        })
    };

    Ok(NuisanceBundle {
        version: BUNDLE_VERSION,
        config_hash: String::new(),
        n,
        sample_fingerprint: sample.fingerprint(),
        clip_epsilon: 0.0,
        mediator_floor: 0.0,
        folds: vec![0; n],
        pi,
        mu: regressions(&cells),
        mu_m: Some(mu_m),
        pmed: Some(pmed),
        full,
        clip_counts: BTreeMap::new(),
        warnings: Vec::new(),
    })
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

fn binary(name: &str) -> CovariateDef {
    CovariateDef { name: name.into(), levels: vec!["0".into(), "1".into()] }
}

fn point_mass(cell: usize) -> Vec<f64> {
    let mut v = vec![0.0; MEDIATOR_CELLS];
    v[cell] = 1.0;
    v
}

/// Law without a mediator pathway: mediators fixed at `(0, 0)` and the
/// outcome probability `mu(a, x)` regardless of mediator values.
fn mediator_free_law(cells: usize, propensity: impl Fn(usize) -> f64, mu: impl Fn(usize, usize) -> f64) -> StratumLaw {
    StratumLaw {
        propensity: (0..cells).map(&propensity).collect(),
        mediator: [0, 1].map(|_| vec![point_mass(0); cells]),
        outcome: [0, 1].map(|a| (0..cells).map(|x| vec![mu(a, x); MEDIATOR_CELLS]).collect()),
    }
}

/// Binary `X` with equal mass; `π_1 = 0.3 + 0.4x`, `μ_1 = 0.2 + 0.3x`,
/// `μ_0 = 0.1 + 0.2x`; no mediator pathway and full response.
pub fn dgp1() -> DgpSpec {
    DgpSpec {
        name: "dgp1".into(),
        covariates: vec![binary("x")],
        x_law: vec![0.5, 0.5],
        acceptance: vec![1.0, 1.0],
        accepting: mediator_free_law(
            2,
            |x| 0.3 + 0.4 * x as f64,
            |a, x| if a == 1 { 0.2 + 0.3 * x as f64 } else { 0.1 + 0.2 * x as f64 },
        ),
        hesitant: None,
        response: [vec![1.0, 1.0], vec![1.0, 1.0]],
        continuous: Vec::new(),
        seed: 1,
    }
}

/// Mediator cells used by the binary-coarsened presets: `M1, M2 ∈ {0, 3}`.
fn coarse_cell(b1: bool, b2: bool) -> usize {
    encode_mediators(if b1 { 3 } else { 0 }, if b2 { 3 } else { 0 })
}

/// Log-linear joint law of two binary mediators with main-effect logits
/// `t1`, `t2` and log odds ratio `rho`.
fn coarse_joint(t1: f64, t2: f64, rho: f64) -> Vec<f64> {
    let logits = [(false, false, 0.0), (true, false, t1), (false, true, t2), (true, true, t1 + t2 + rho)];
    let z: f64 = logits.iter().map(|l| l.2.exp()).sum();
    let mut v = vec![0.0; MEDIATOR_CELLS];
    for (b1, b2, l) in logits {
        v[coarse_cell(b1, b2)] = l.exp() / z;
    }
    v
}

/// Two binary covariates, binary-coarsened mediators with dependence knob
/// `rho` (log odds ratio of the mediators given `a, x`), logistic outcome,
/// and 80–90% acceptance.
pub fn dgp2(rho: f64) -> DgpSpec {
    let cells = 4;
    let xs = |x: usize| ((x / 2) as f64, (x % 2) as f64);
    let mediator = [0, 1].map(|a| {
        (0..cells)
            .map(|x| {
                let (x1, x2) = xs(x);
                let a = a as f64;
                coarse_joint(0.2 - 0.8 * a + 0.3 * x1, -0.4 - 0.5 * a + 0.4 * x2, rho)
            })
            .collect()
    });
    let outcome = [0, 1].map(|a| {
        (0..cells)
            .map(|x| {
                let (x1, x2) = xs(x);
                (0..MEDIATOR_CELLS)
                    .map(|m| {
                        let (m1, m2) = decode_mediators(m);
                        let b1 = f64::from(u8::from(m1 >= 2));
                        let b2 = f64::from(u8::from(m2 >= 3));
                        expit(-1.2 - 0.3 * a as f64 + 0.9 * b1 + 0.6 * b2 + 0.3 * x1 - 0.2 * x2)
                    })
                    .collect()
            })
            .collect()
    });
    DgpSpec {
        name: format!("dgp2(rho={rho})"),
        covariates: vec![binary("x1"), binary("x2")],
        x_law: vec![0.3, 0.2, 0.3, 0.2],
        acceptance: (0..cells).map(|x| 0.8 + 0.1 * xs(x).1).collect(),
        accepting: StratumLaw {
            propensity: (0..cells)
                .map(|x| {
                    let (x1, x2) = xs(x);
                    expit(-0.3 + 0.6 * x1 + 0.4 * x2)
                })
                .collect(),
            mediator,
            outcome,
        },
        hesitant: None,
        response: [vec![1.0; cells], vec![1.0; cells]],
        continuous: Vec::new(),
        seed: 2,
    }
}

/// Exchangeable mediators with an additive outcome: both indirect effects
/// are equal by construction.
pub fn symmetric() -> DgpSpec {
    let mut spec = dgp2(0.5);
    spec.name = "symmetric".into();
    spec.x_law = vec![0.25; 4];
    spec.acceptance = vec![0.85; 4];
    let xs = |x: usize| ((x / 2) as f64, (x % 2) as f64);
    spec.accepting.mediator = [0, 1].map(|a| {
        (0..4)
            .map(|x| {
                let (x1, x2) = xs(x);
                let a = a as f64;
                coarse_joint(-0.2 - 0.6 * a + 0.4 * x1, -0.2 - 0.6 * a + 0.4 * x2, 0.5)
            })
            .collect()
    });
    spec.accepting.outcome = [0, 1].map(|a| {
        (0..4)
            .map(|_| {
                (0..MEDIATOR_CELLS)
                    .map(|m| {
                        let (m1, m2) = decode_mediators(m);
                        0.15 + 0.05 * a as f64 + 0.2 * f64::from(u8::from(m1 >= 2)) + 0.2 * f64::from(u8::from(m2 >= 3))
                    })
                    .collect()
            })
            .collect()
    });
    spec
}

/// Four binary covariates, randomized treatment, and effect
/// `base + slope·x1` on top of `μ_0 = 0.2 + 0.1·x2`.
pub fn planted(base: f64, slope: f64) -> DgpSpec {
    let cells = 16;
    let bit = |x: usize, j: usize| ((x >> (3 - j)) & 1) as f64;
    DgpSpec {
        name: format!("planted(base={base}, slope={slope})"),
        covariates: vec![binary("x1"), binary("x2"), binary("x3"), binary("x4")],
        x_law: vec![1.0 / 16.0; cells],
        acceptance: vec![1.0; cells],
        accepting: mediator_free_law(
            cells,
            |x| 0.4 + 0.2 * bit(x, 2),
            |a, x| 0.2 + 0.1 * bit(x, 1) + if a == 1 { base + slope * bit(x, 0) } else { 0.0 },
        ),
        hesitant: None,
        response: [vec![1.0; cells], vec![1.0; cells]],
        continuous: Vec::new(),
        seed: 3,
    }
}

/// No effect of treatment or mediators on the outcome.
pub fn null() -> DgpSpec {
    let mut spec = dgp1();
    spec.name = "null".into();
    spec.accepting = mediator_free_law(2, |x| 0.3 + 0.4 * x as f64, |_, x| 0.2 + 0.1 * x as f64);
    spec
}

/// DGP-1 among acceptors plus a 30% hesitant stratum with zero effect.
pub fn hesitant() -> DgpSpec {
    let mut spec = dgp1();
    spec.name = "hesitant".into();
    spec.acceptance = vec![0.7, 0.7];
    spec.hesitant = Some(mediator_free_law(2, |_| 0.3, |_, x| 0.15 + 0.2 * x as f64));
    spec
}

/// DGP-1 with outcome and mediators missing completely at random.
pub fn with_mcar(mut spec: DgpSpec, missing: f64) -> DgpSpec {
    let cells = spec.cells();
    spec.response = [vec![1.0 - missing; cells], vec![1.0 - missing; cells]];
    spec.name = format!("{}+mcar({missing})", spec.name);
    spec
}

/// Names accepted by [`preset`].
pub const PRESETS: [&str; 8] = ["dgp1", "dgp2", "dgp2-independent", "symmetric", "planted", "null-effect", "null", "hesitant"];

/// Named preset specifications.
pub fn preset(name: &str) -> Result<DgpSpec> {
    Ok(match name {
        "dgp1" => dgp1(),
        "dgp2" => dgp2(1.0),
        "dgp2-independent" => dgp2(0.0),
        "symmetric" => symmetric(),
        "planted" => planted(0.05, 0.3),
        "null-effect" => planted(0.1, 0.0),
        "null" => null(),
        "hesitant" => hesitant(),
        other => {
            return Err(Error::Config(format!(
                "unknown preset '{other}' (expected one of {})",
                PRESETS.join(", ")
            )))
        }
    })
}
