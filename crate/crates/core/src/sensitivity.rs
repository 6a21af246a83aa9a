//! Sensitivity of the risk difference to unmeasured confounding.
//!
//! The sensitivity parameter `τ ∈ [0, 1)` bounds the ratio of counterfactual
//! to observed arm-conditional outcome means within covariate strata to
//! `[1 − τ, 1/(1 − τ)]`. This yields observed-data bounds on the effect:
//!
//! * the sample variant shrinks the slack by the probability of the other
//!   arm, `upper = ψ(x) + c·μ_1(x)π_0(x) + τ·μ_0(x)π_1(x)` and
//!   `lower = ψ(x) − τ·μ_1(x)π_0(x) − c·μ_0(x)π_1(x)` with `c = τ/(1 − τ)`;
//! * the generalization variant drops that shrinkage,
//!   `upper = ψ(x) + c·μ_1(x) + τ·μ_0(x)` and analogously for the lower bound.
//!
//! Bounds are averaged with influence-function corrections, so each carries
//! a standard error. `τ*` is the smallest `τ` whose bounds reach zero.

use serde::{Deserialize, Serialize};

use crate::effects::{phi1_values, InfluenceEstimate, Scale, ALPHA};
use crate::error::{Error, Result};
use crate::ingest::{AnalyticSample, OutcomeKind};
use crate::nuisance::NuisanceBundle;
use crate::stats::weighted_mean;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundVariant {
    /// Bounds on the effect in the sampled population.
    Sample,
    /// Bounds without assuming random sample selection.
    Generalization,
}

/// Default grid `0, 0.005, …, 0.5`.
pub fn default_taus() -> Vec<f64> {
    (0..=100).map(|j| j as f64 * 0.005).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundPoint {
    pub tau: f64,
    pub lower: f64,
    pub upper: f64,
    pub lower_se: f64,
    pub upper_se: f64,
    /// Lower end of the lower bound's interval.
    pub lo_ci: f64,
    /// Upper end of the upper bound's interval.
    pub hi_ci: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityResult {
    pub variant: BoundVariant,
    pub outcome: OutcomeKind,
    /// Risk-difference point estimate (the bounds at `τ = 0`).
    pub estimate: f64,
    /// Estimated `E[μ_0(X)]` and `E[μ_1(X)]`.
    pub arm_means: [f64; 2],
    pub alpha: f64,
    pub points: Vec<BoundPoint>,
}

impl SensitivityResult {
    /// Plot data: `tau,lower,upper,lo_ci,hi_ci`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau,lower,upper,lo_ci,hi_ci\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{},{},{}\n", p.tau, p.lower, p.upper, p.lo_ci, p.hi_ci));
        }
        out
    }
}

/// Per-record slack terms `(S_1, S_0)` whose means are `E[μ_1 π_0]` and
/// `E[μ_0 π_1]` (sample) or `E[μ_1]` and `E[μ_0]` (generalization).
fn slack_values(
    sample: &AnalyticSample,
    bundle: &NuisanceBundle,
    kind: OutcomeKind,
    variant: BoundVariant,
) -> Result<(Vec<f64>, Vec<f64>)> {
    match variant {
        BoundVariant::Generalization => Ok((phi1_values(sample, bundle, kind, 1)?, phi1_values(sample, bundle, kind, 0)?)),
        BoundVariant::Sample => {
            let mu = bundle.mu(kind)?;
            let y = sample.outcome(kind);
            let a = sample.treatment();
            let mut s1 = Vec::with_capacity(sample.len());
            let mut s0 = Vec::with_capacity(sample.len());
            for i in 0..sample.len() {
                let (p1, p0) = (bundle.pi_a(i, 1), bundle.pi_a(i, 0));
                if a[i] == 1 {
                    s1.push(p0 / p1 * (y[i] - mu.mu1[i]));
                    s0.push(mu.mu0[i]);
                } else {
                    s1.push(mu.mu1[i]);
                    s0.push(p1 / p0 * (y[i] - mu.mu0[i]));
                }
            }
            Ok((s1, s0))
        }
    }
}

fn check_taus(taus: &[f64]) -> Result<()> {
    if taus.is_empty() {
        return Err(Error::Config("tau grid is empty".into()));
    }
    if let Some(t) = taus.iter().find(|t| !(**t >= 0.0 && **t < 1.0)) {
        return Err(Error::Config(format!("tau must lie in [0, 1), got {t}")));
    }
    if taus.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::Config("tau grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Influence-function bounds on the risk difference over a `τ` grid.
pub fn bounds(
    sample: &AnalyticSample,
    bundle: &NuisanceBundle,
    kind: OutcomeKind,
    variant: BoundVariant,
    taus: &[f64],
    alpha: f64,
) -> Result<SensitivityResult> {
    check_taus(taus)?;
    let w = sample.weights();
    let f1 = phi1_values(sample, bundle, kind, 1)?;
    let f0 = phi1_values(sample, bundle, kind, 0)?;
    let effect: Vec<f64> = f1.iter().zip(&f0).map(|(a, b)| a - b).collect();
    let (s1, s0) = slack_values(sample, bundle, kind, variant)?;
    let points = taus
        .iter()
        .map(|&tau| {
            let c = tau / (1.0 - tau);
            let up: Vec<f64> = (0..effect.len()).map(|i| effect[i] + c * s1[i] + tau * s0[i]).collect();
            let lo: Vec<f64> = (0..effect.len()).map(|i| effect[i] - tau * s1[i] - c * s0[i]).collect();
            let up = InfluenceEstimate::from_if("upper", up, w, Scale::RiskDifference, alpha);
            let lo = InfluenceEstimate::from_if("lower", lo, w, Scale::RiskDifference, alpha);
            BoundPoint {
                tau,
                lower: lo.point,
                upper: up.point,
                lower_se: lo.se(),
                upper_se: up.se(),
                lo_ci: lo.ci.0,
                hi_ci: up.ci.1,
            }
        })
        .collect();
    Ok(SensitivityResult {
        variant,
        outcome: kind,
        estimate: weighted_mean(&effect, w),
        arm_means: [weighted_mean(&f0, w), weighted_mean(&f1, w)],
        alpha,
        points,
    })
}

/// Sample-population bounds.
pub fn sample_bounds(sample: &AnalyticSample, bundle: &NuisanceBundle, kind: OutcomeKind, taus: &[f64]) -> Result<SensitivityResult> {
    bounds(sample, bundle, kind, BoundVariant::Sample, taus, ALPHA)
}

/// Generalization bounds.
pub fn generalization_bounds(sample: &AnalyticSample, bundle: &NuisanceBundle, kind: OutcomeKind, taus: &[f64]) -> Result<SensitivityResult> {
    bounds(sample, bundle, kind, BoundVariant::Generalization, taus, ALPHA)
}

/// Smallest `τ` on the grid at which the effect is explained away.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "tau", rename_all = "snake_case")]
pub enum TauStar {
    Found(f64),
    /// The bounds never reach zero on the grid.
    AboveGridMax(f64),
}

impl TauStar {
    pub fn value(&self) -> Option<f64> {
        match self {
            TauStar::Found(t) => Some(*t),
            TauStar::AboveGridMax(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplainAway {
    /// First `τ` at which the bound interval (with confidence limits)
    /// contains zero.
    pub tau_star_ci: TauStar,
    /// First `τ` at which the point bounds contain zero.
    pub tau_star_point: TauStar,
    /// `1 − √(min/max)` of the estimated arm means; exact for the
    /// generalization bounds.
    pub tau_star_closed_form: f64,
}

/// First grid `τ` at which `[lo(τ), hi(τ)]` contains `target`, linearly
/// interpolated on the crossing edge.
fn crossing(points: &[BoundPoint], target: f64, edges: impl Fn(&BoundPoint) -> (f64, f64)) -> TauStar {
    let mut prev: Option<&BoundPoint> = None;
    for p in points {
        let (lo, hi) = edges(p);
        if lo <= target && target <= hi {
            return TauStar::Found(match prev {
                None => p.tau,
                Some(q) => {
                    let (qlo, qhi) = edges(q);
                    // The previous interval lies entirely on one side.
                    let (a, b) = if qlo > target { (qlo, lo) } else { (qhi, hi) };
                    if a == b {
                        p.tau
                    } else {
                        q.tau + (p.tau - q.tau) * (a - target) / (a - b)
                    }
                }
            });
        }
        prev = Some(p);
    }
    TauStar::AboveGridMax(points.last().map_or(0.0, |p| p.tau))
}

/// Closed-form point `τ*` for the generalization bounds.
pub fn closed_form_tau_star(arm_means: [f64; 2]) -> f64 {
    let [p0, p1] = arm_means;
    let (lo, hi) = (p0.min(p1), p0.max(p1));
    if hi <= 0.0 || lo == hi {
        return 0.0;
    }
    1.0 - (lo.max(0.0) / hi).sqrt()
}

pub fn explain_away(result: &SensitivityResult) -> ExplainAway {
    ExplainAway {
        tau_star_ci: crossing(&result.points, 0.0, |p| (p.lo_ci, p.hi_ci)),
        tau_star_point: crossing(&result.points, 0.0, |p| (p.lower, p.upper)),
        tau_star_closed_form: closed_form_tau_star(result.arm_means),
    }
}

/// Benchmark `τ`: the smallest `τ` at which bounds computed without any
/// covariate adjustment contain the covariate-adjusted point estimate.
pub fn comparator_tau(unadjusted: &SensitivityResult, adjusted_estimate: f64) -> TauStar {
    crossing(&unadjusted.points, adjusted_estimate, |p| (p.lower, p.upper))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effects::risk_difference;
    use crate::sim;

    fn exact(spec: &sim::DgpSpec) -> (AnalyticSample, NuisanceBundle) {
        let s = sim::exact_law_sample(spec).unwrap();
        let b = sim::true_bundle(spec, &s).unwrap();
        (s, b)
    }

    #[test]
    fn tau_zero_bounds_equal_point() {
        let (s, b) = exact(&sim::dgp1());
        let rd = risk_difference(&s, &b, OutcomeKind::Y).unwrap();
        for v in [BoundVariant::Sample, BoundVariant::Generalization] {
            let r = bounds(&s, &b, OutcomeKind::Y, v, &[0.0, 0.1], ALPHA).unwrap();
            assert!((r.points[0].lower - rd.point).abs() < 1e-12);
            assert!((r.points[0].upper - rd.point).abs() < 1e-12);
        }
    }

    #[test]
    fn single_cell_arithmetic() {
        // μ_1 = 0.3, μ_0 = 0.2, π = 0.5, τ = 0.1.
        let c: f64 = 0.1 / 0.9;
        let upper = 0.1 + c * 0.3 * 0.5 + 0.1 * 0.2 * 0.5;
        assert!((upper - 0.126_666_666_666_666_7).abs() < 1e-12);
    }

    #[test]
    fn population_bounds_match_oracle() {
        let spec = sim::dgp1();
        let (s, b) = exact(&spec);
        let t = sim::enumerate_truth(&spec, &[]).unwrap();
        for (v, g) in [(BoundVariant::Sample, false), (BoundVariant::Generalization, true)] {
            let r = bounds(&s, &b, OutcomeKind::Y, v, &[0.0, 0.2, 0.4], ALPHA).unwrap();
            for p in &r.points {
                let (lo, hi) = t.sensitivity_bounds(p.tau, g);
                assert!((p.lower - lo).abs() < 1e-12 && (p.upper - hi).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn generalization_contains_sample_and_intervals_nest() {
        let (s, b) = exact(&sim::dgp1());
        let taus = default_taus();
        let p1 = sample_bounds(&s, &b, OutcomeKind::Y, &taus).unwrap();
        let p2 = generalization_bounds(&s, &b, OutcomeKind::Y, &taus).unwrap();
        for (a, g) in p1.points.iter().zip(&p2.points) {
            assert!(g.lower <= a.lower + 1e-15 && g.upper >= a.upper - 1e-15);
            assert!(a.lower <= p1.estimate && p1.estimate <= a.upper);
        }
        for r in [&p1, &p2] {
            for w in r.points.windows(2) {
                assert!(w[1].lower <= w[0].lower && w[1].upper >= w[0].upper);
                assert!(w[1].lo_ci <= w[0].lo_ci && w[1].hi_ci >= w[0].hi_ci);
            }
        }
    }

    #[test]
    fn grid_search_matches_closed_form() {
        let (s, b) = exact(&sim::dgp1());
        let r = generalization_bounds(&s, &b, OutcomeKind::Y, &default_taus()).unwrap();
        let e = explain_away(&r);
        let closed = 1.0 - (0.20f64 / 0.35).sqrt();
        assert!((e.tau_star_closed_form - closed).abs() < 1e-12);
        let found = e.tau_star_point.value().unwrap();
        assert!((found - closed).abs() <= 0.005);
        assert!(e.tau_star_ci.value().unwrap() <= found);
    }

    #[test]
    fn closed_form_arithmetic_and_null() {
        assert!((closed_form_tau_star([0.2, 0.1]) - (1.0 - 0.5f64.sqrt())).abs() < 1e-15);
        assert_eq!(closed_form_tau_star([0.2, 0.2]), 0.0);
        let (s, b) = exact(&sim::null());
        let r = sample_bounds(&s, &b, OutcomeKind::Y, &default_taus()).unwrap();
        assert_eq!(explain_away(&r).tau_star_point, TauStar::Found(0.0));
    }

    #[test]
    fn unreachable_crossing_is_reported() {
        let (s, b) = exact(&sim::dgp1());
        let r = sample_bounds(&s, &b, OutcomeKind::Y, &[0.0, 0.01]).unwrap();
        assert_eq!(explain_away(&r).tau_star_point, TauStar::AboveGridMax(0.01));
    }

    #[test]
    fn domain_errors() {
        let (s, b) = exact(&sim::dgp1());
        assert!(sample_bounds(&s, &b, OutcomeKind::Y, &[0.0, 1.0]).is_err());
        assert!(sample_bounds(&s, &b, OutcomeKind::Y, &[-0.1]).is_err());
        assert!(sample_bounds(&s, &b, OutcomeKind::Y, &[]).is_err());
    }

    #[test]
    fn flipping_treatment_labels_mirrors_bounds() {
        let spec = sim::dgp1();
        let (s, b) = exact(&spec);
        let mut flipped_records = s.records.clone();
        for r in &mut flipped_records {
            r.treatment = r.treatment.map(|a| 1 - a);
        }
        let fs = AnalyticSample::new(flipped_records, Vec::new(), s.thresholds, true).unwrap();
        let mut fb = b.clone();
        fb.pi = b.pi.iter().map(|p| 1.0 - p).collect();
        let mu = fb.mu.get_mut(&OutcomeKind::Y).unwrap();
        std::mem::swap(&mut mu.mu0, &mut mu.mu1);
        let taus = [0.0, 0.1, 0.3];
        let r = sample_bounds(&s, &b, OutcomeKind::Y, &taus).unwrap();
        let f = sample_bounds(&fs, &fb, OutcomeKind::Y, &taus).unwrap();
        for (a, z) in r.points.iter().zip(&f.points) {
            assert!((a.upper + z.lower).abs() < 1e-12);
            assert!((a.lower + z.upper).abs() < 1e-12);
        }
    }

    #[test]
    fn comparator_finds_containing_tau() {
        let (s, b) = exact(&sim::dgp1());
        let r = sample_bounds(&s, &b, OutcomeKind::Y, &default_taus()).unwrap();
        let t = comparator_tau(&r, 0.10).value().unwrap();
        assert!(t > 0.0 && t < 0.5);
        assert_eq!(comparator_tau(&r, r.estimate), TauStar::Found(0.0));
    }
}
