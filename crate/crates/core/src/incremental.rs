//! Incremental propensity-score interventions: the mean outcome when every
//! respondent's odds of treatment are multiplied by `δ`, the effect of the
//! observed treatment distribution, and uniform bands over a `δ` grid.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::effects::{phi1_values, EstimateSummary, InfluenceEstimate, Scale, ALPHA};
use crate::error::{Error, Result};
use crate::ingest::{AnalyticSample, OutcomeKind};
use crate::nuisance::NuisanceBundle;
use crate::rng::{self, streams};
use crate::stats::{quantile_sorted, sorted, z_critical};

/// Default number of multiplier-bootstrap replicates.
pub const DEFAULT_REPLICATES: usize = 1000;
/// Fewer replicates than this trigger a warning.
pub const MIN_REPLICATES: usize = 100;

/// Assumption needed to read the curve as a population quantity.
pub const SELECTION_ASSUMPTION: &str =
    "survey participation and completion are independent of treatment and potential outcomes given covariates";

/// `count` log-spaced odds multipliers between `lo` and `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) || count == 0 {
        return Err(Error::Config(format!("invalid delta grid [{lo}, {hi}] with {count} points")));
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..count).map(|j| (a + (b - a) * j as f64 / (count - 1) as f64).exp()).collect())
}

/// Default grid: 50 log-spaced points in `[0.05, 5]`.
pub fn default_grid() -> Vec<f64> {
    log_grid(0.05, 5.0, 50).expect("static grid is valid")
}

/// Per-record uncentered influence values of the curve at `delta`. `δ = 0`
/// is the all-untreated mean; use [`phi1_values`] for the all-treated limit.
pub fn incremental_values(sample: &AnalyticSample, bundle: &NuisanceBundle, kind: OutcomeKind, delta: f64) -> Result<Vec<f64>> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::Config(format!("odds multiplier must be finite and nonnegative, got {delta}")));
    }
    let f0 = phi1_values(sample, bundle, kind, 0)?;
    if delta == 0.0 {
        return Ok(f0);
    }
    let f1 = phi1_values(sample, bundle, kind, 1)?;
    let mu = bundle.mu(kind)?;
    let a = sample.treatment();
    Ok((0..sample.len())
        .map(|i| {
            let p1 = bundle.pi[i];
            let p0 = 1.0 - p1;
            let denom = delta * p1 + p0;
            (delta * p1 * f1[i] + p0 * f0[i]) / denom
                + delta * (mu.mu1[i] - mu.mu0[i]) * (f64::from(a[i]) - p1) / (denom * denom)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub delta: f64,
    pub point: f64,
    pub se: f64,
    pub ci: (f64, f64),
    pub uniform: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementalCurve {
    pub outcome: OutcomeKind,
    pub points: Vec<CurvePoint>,
    /// `δ → 0`: everyone untreated.
    pub at_zero: EstimateSummary,
    /// `δ → ∞`: everyone treated.
    pub at_infinity: EstimateSummary,
    /// Curve at `δ = 1` minus curve at `δ = 0`.
    pub observed: InfluenceEstimate,
    pub replicates: usize,
    /// Simultaneous critical value of the uniform band.
    pub critical_value: f64,
    pub alpha: f64,
    pub assumption: String,
    pub warnings: Vec<String>,
}

impl IncrementalCurve {
    /// Plot data: `delta,estimate,lo_pt,hi_pt,lo_unif,hi_unif`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("delta,estimate,lo_pt,hi_pt,lo_unif,hi_unif\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{},{},{},{}\n", p.delta, p.point, p.ci.0, p.ci.1, p.uniform.0, p.uniform.1));
        }
        out
    }
}

/// Settings for [`incremental_curve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveSpec {
    pub deltas: Vec<f64>,
    pub replicates: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for CurveSpec {
    fn default() -> Self {
        CurveSpec { deltas: default_grid(), replicates: DEFAULT_REPLICATES, alpha: ALPHA, seed: 0 }
    }
}

/// Estimate the curve on a grid of positive odds multipliers with pointwise
/// intervals and a Gaussian-multiplier-bootstrap uniform band.
pub fn incremental_curve(
    sample: &AnalyticSample,
    bundle: &NuisanceBundle,
    kind: OutcomeKind,
    spec: &CurveSpec,
) -> Result<IncrementalCurve> {
    if spec.deltas.is_empty() {
        return Err(Error::Config("delta grid is empty".into()));
    }
    if let Some(d) = spec.deltas.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
        return Err(Error::Config(format!("grid odds multipliers must be positive and finite, got {d}")));
    }
    if spec.replicates == 0 {
        return Err(Error::Config("uniform bands need at least one bootstrap replicate".into()));
    }
    let mut warnings = Vec::new();
    if spec.replicates < MIN_REPLICATES {
        warnings.push(format!(
            "only {} bootstrap replicates; the uniform band is unstable below {MIN_REPLICATES}",
            spec.replicates
        ));
    }
    let w = sample.weights();
    let curves: Vec<InfluenceEstimate> = spec
        .deltas
        .iter()
        .map(|&d| {
            incremental_values(sample, bundle, kind, d)
                .map(|v| InfluenceEstimate::from_if(format!("delta={d}"), v, w, Scale::Mean, spec.alpha))
        })
        .collect::<Result<_>>()?;
    let f0 = phi1_values(sample, bundle, kind, 0)?;
    let f1 = phi1_values(sample, bundle, kind, 1)?;
    let at_one = incremental_values(sample, bundle, kind, 1.0)?;
    let observed = InfluenceEstimate::from_if(
        format!("observed[{}]", kind.label()),
        at_one.iter().zip(&f0).map(|(a, b)| a - b).collect(),
        w,
        Scale::RiskDifference,
        spec.alpha,
    );
    let at_zero = InfluenceEstimate::from_if("delta=0", f0, w, Scale::Mean, spec.alpha).summary();
    let at_infinity = InfluenceEstimate::from_if("delta=inf", f1, w, Scale::Mean, spec.alpha).summary();

    let critical_value = sup_critical_value(&curves, w, spec.replicates, spec.alpha, spec.seed).max(z_critical(spec.alpha));
    let points = spec
        .deltas
        .iter()
        .zip(&curves)
        .map(|(&delta, e)| {
            let half = critical_value * e.se();
            CurvePoint { delta, point: e.point, se: e.se(), ci: e.ci, uniform: (e.point - half, e.point + half) }
        })
        .collect();
    Ok(IncrementalCurve {
        outcome: kind,
        points,
        at_zero,
        at_infinity,
        observed,
        replicates: spec.replicates,
        critical_value,
        alpha: spec.alpha,
        assumption: SELECTION_ASSUMPTION.into(),
        warnings,
    })
}

/// `1 − α` quantile of `sup_δ |Σ ξ_i w_i (φ_i(δ) − ψ(δ))| / (Σ w · se(δ))`
/// over Gaussian multipliers `ξ`.
fn sup_critical_value(curves: &[InfluenceEstimate], w: Option<&[f64]>, replicates: usize, alpha: f64, seed: u64) -> f64 {
    let n = curves[0].if_values.len();
    let total: f64 = w.map_or(n as f64, |w| w.iter().sum());
    // Standardized centered contributions, grid-major per record.
    let j = curves.len();
    let mut z = vec![0.0; n * j];
    for (c, e) in curves.iter().enumerate() {
        let scale = if e.se() > 0.0 { 1.0 / (total * e.se()) } else { 0.0 };
        let mean = crate::stats::weighted_mean(&e.if_values, w);
        for i in 0..n {
            z[i * j + c] = w.map_or(1.0, |w| w[i]) * (e.if_values[i] - mean) * scale;
        }
    }
    let sups: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|b| {
            let mut r = rng::stream(seed, streams::BOOTSTRAP, b as u64);
            let mut acc = vec![0.0; j];
            for i in 0..n {
                let xi: f64 = StandardNormal.sample(&mut r);
                for (a, v) in acc.iter_mut().zip(&z[i * j..(i + 1) * j]) {
                    *a += xi * v;
                }
            }
            acc.iter().fold(0.0f64, |m, v| m.max(v.abs()))
        })
        .collect();
    quantile_sorted(&sorted(&sups), 1.0 - alpha)
}

/// The observed-distribution effect stored on a curve.
pub fn observed_effect(curve: &IncrementalCurve) -> &InfluenceEstimate {
    &curve.observed
}
