//! One-step (influence-function) estimators of mean potential outcomes,
//! risk differences and ratios, subgroup effects, complete-case-weighted
//! full-sample effects and the bounds derived from them.
//!
//! Every estimator returns per-record uncentered influence-function values.
//! With optional frequency weights `w`, the point estimate is
//! `Σ w φ / Σ w` and the variance `Σ w² (φ − ψ)² / (Σ w)²`, which reduces to
//! the empirical variance over `n` when all weights are one.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{AnalyticSample, CovariateValue, OutcomeKind, SurveyRecord};
use crate::nuisance::NuisanceBundle;
use crate::stats::{two_sided_p, weighted_mean, z_critical};

/// Default significance level.
pub const ALPHA: f64 = 0.05;
/// Default minimum subgroup size before suppression.
pub const MIN_SUBGROUP_N: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    RiskDifference,
    /// Influence values are on the log scale; point and interval are
    /// exponentiated.
    RiskRatio,
    Mean,
}

/// Point estimate with its per-record influence values and normal interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceEstimate {
    pub label: String,
    pub point: f64,
    pub if_values: Vec<f64>,
    /// Frequency weights the influence values were averaged with.
    pub weights: Option<Vec<f64>>,
    /// Variance of the estimate on the influence-value scale.
    pub variance: f64,
    pub ci: (f64, f64),
    pub n: usize,
    pub scale: Scale,
    pub alpha: f64,
}

/// Serializable summary without per-record values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSummary {
    pub label: String,
    pub point: f64,
    pub se: f64,
    pub ci: (f64, f64),
    pub n: usize,
    pub scale: Scale,
}

/// Weighted mean and variance of the mean of influence values.
pub fn if_moments(values: &[f64], weights: Option<&[f64]>) -> (f64, f64) {
    let mean = weighted_mean(values, weights);
    let var = match weights {
        None => {
            let n = values.len() as f64;
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n * n)
        }
        Some(w) => {
            let total: f64 = w.iter().sum();
            values.iter().zip(w).map(|(v, w)| w * w * (v - mean) * (v - mean)).sum::<f64>() / (total * total)
        }
    };
    (mean, var)
}

impl InfluenceEstimate {
    /// Estimate whose point is the (weighted) mean of `if_values`.
    pub fn from_if(label: impl Into<String>, if_values: Vec<f64>, weights: Option<&[f64]>, scale: Scale, alpha: f64) -> Self {
        let (mean, variance) = if_moments(&if_values, weights);
        Self::with_variance(label, if_values, weights, scale, alpha, mean, variance)
    }

    fn with_variance(
        label: impl Into<String>,
        if_values: Vec<f64>,
        weights: Option<&[f64]>,
        scale: Scale,
        alpha: f64,
        mean: f64,
        variance: f64,
    ) -> Self {
        let half = z_critical(alpha) * variance.max(0.0).sqrt();
        let (point, ci) = match scale {
            Scale::RiskRatio => (mean.exp(), ((mean - half).exp(), (mean + half).exp())),
            _ => (mean, (mean - half, mean + half)),
        };
        InfluenceEstimate {
            label: label.into(),
            point,
            n: if_values.len(),
            if_values,
            weights: weights.map(<[f64]>::to_vec),
            variance: variance.max(0.0),
            ci,
            scale,
            alpha,
        }
    }

    /// Standard error on the influence-value scale.
    pub fn se(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn summary(&self) -> EstimateSummary {
        EstimateSummary {
            label: self.label.clone(),
            point: self.point,
            se: self.se(),
            ci: self.ci,
            n: self.n,
            scale: self.scale,
        }
    }

    /// Record-wise difference `self − other` of two linear estimates.
    pub fn difference(&self, other: &InfluenceEstimate, label: impl Into<String>) -> Result<InfluenceEstimate> {
        if self.if_values.len() != other.if_values.len() {
            return Err(Error::Mismatch { what: "influence values", expected: self.if_values.len(), got: other.if_values.len() });
        }
        let values = self.if_values.iter().zip(&other.if_values).map(|(a, b)| a - b).collect();
        Ok(InfluenceEstimate::from_if(label, values, self.weights.as_deref(), Scale::RiskDifference, self.alpha))
    }
}

/// Per-record `φ_{1,a}` values.
pub fn phi1_values(sample: &AnalyticSample, bundle: &NuisanceBundle, kind: OutcomeKind, a: u8) -> Result<Vec<f64>> {
    bundle.check_len(sample.len())?;
    let mu = bundle.mu(kind)?.arm(a);
    let y = sample.outcome(kind);
    let treat = sample.treatment();
    Ok((0..sample.len())
        .map(|i| {
            let ind = if treat[i] == a { 1.0 } else { 0.0 };
            ind / bundle.pi_a(i, a) * (y[i] - mu[i]) + mu[i]
        })
        .collect())
}

/// Mean potential outcome under treatment level `a`.
pub fn phi1(sample: &AnalyticSample, bundle: &NuisanceBundle, kind: OutcomeKind, a: u8) -> Result<InfluenceEstimate> {
    let v = phi1_values(sample, bundle, kind, a)?;
    Ok(InfluenceEstimate::from_if(format!("E[{}^{a}]", kind.label()), v, sample.weights(), Scale::Mean, ALPHA))
}

/// `ψ = E[μ_1(X) − μ_0(X)]`.
pub fn risk_difference(sample: &AnalyticSample, bundle: &NuisanceBundle, kind: OutcomeKind) -> Result<InfluenceEstimate> {
    let p1 = phi1_values(sample, bundle, kind, 1)?;
    let p0 = phi1_values(sample, bundle, kind, 0)?;
    let v = p1.iter().zip(&p0).map(|(a, b)| a - b).collect();
    Ok(InfluenceEstimate::from_if(format!("rd[{}]", kind.label()), v, sample.weights(), Scale::RiskDifference, ALPHA))
}

/// `E[μ_1(X)] / E[μ_0(X)]` with a log-scale delta-method interval.
pub fn risk_ratio(sample: &AnalyticSample, bundle: &NuisanceBundle, kind: OutcomeKind) -> Result<InfluenceEstimate> {
    let w = sample.weights();
    let f1 = phi1_values(sample, bundle, kind, 1)?;
    let f0 = phi1_values(sample, bundle, kind, 0)?;
    let p1 = weighted_mean(&f1, w);
    let p0 = weighted_mean(&f0, w);
    if !(p0 > 0.0) || !(p1 > 0.0) {
        return Err(Error::Numerical(format!(
            "risk ratio undefined: estimated means are {p1} (treated) and {p0} (untreated)"
        )));
    }
    let log_rr = (p1 / p0).ln();
    let v = f1.iter().zip(&f0).map(|(a, b)| log_rr + (a - p1) / p1 - (b - p0) / p0).collect();
    Ok(InfluenceEstimate::from_if(format!("rr[{}]", kind.label()), v, w, Scale::RiskRatio, ALPHA))
}

/// `covariate ∈ levels`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Condition {
    pub covariate: String,
    pub levels: Vec<String>,
}

/// Conjunction of membership conditions; empty means everyone.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct GroupPredicate {
    pub conditions: Vec<Condition>,
}

impl GroupPredicate {
    pub fn all() -> Self {
        GroupPredicate::default()
    }

    /// Single condition `covariate = level`.
    pub fn equals(covariate: &str, level: &str) -> Self {
        GroupPredicate { conditions: vec![Condition { covariate: covariate.into(), levels: vec![level.into()] }] }
    }

    /// This predicate with one more condition.
    pub fn and(&self, covariate: &str, levels: Vec<String>) -> Self {
        let mut out = self.clone();
        out.conditions.push(Condition { covariate: covariate.into(), levels });
        out
    }

    pub fn matches(&self, r: &SurveyRecord) -> bool {
        self.conditions
            .iter()
            .all(|c| matches!(r.covariate(&c.covariate), CovariateValue::Level(v) if c.levels.contains(v)))
    }

    pub fn describe(&self) -> String {
        if self.conditions.is_empty() {
            return "all".into();
        }
        self.conditions
            .iter()
            .map(|c| match c.levels.as_slice() {
                [one] => format!("{}={one}", c.covariate),
                many => format!("{} in {{{}}}", c.covariate, many.join(",")),
            })
            .collect::<Vec<_>>()
            .join(" & ")
    }
}

/// How to form subgroups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// One group per level of a covariate.
    Covariate(String),
    /// Explicit predicates; overlapping groups are rejected unless allowed.
    Predicates { predicates: Vec<GroupPredicate>, allow_overlap: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupEstimate {
    pub group: GroupPredicate,
    pub estimate: InfluenceEstimate,
    /// Indices of member records in the sample.
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupReport {
    pub groups: Vec<SubgroupEstimate>,
    /// Groups below the minimum size, with their sizes.
    pub suppressed: Vec<(GroupPredicate, usize)>,
}

/// Average an estimate's influence values within subgroups.
pub fn subgroup_effects(
    estimate: &InfluenceEstimate,
    sample: &AnalyticSample,
    grouping: &Grouping,
    min_n: usize,
) -> Result<SubgroupReport> {
    if estimate.scale == Scale::RiskRatio {
        return Err(Error::Config("subgroup averaging needs a linear (risk-difference or mean) estimate".into()));
    }
    if estimate.if_values.len() != sample.len() {
        return Err(Error::Mismatch { what: "influence values", expected: sample.len(), got: estimate.if_values.len() });
    }
    let predicates: Vec<GroupPredicate> = match grouping {
        Grouping::Covariate(name) => sample
            .encoding
            .levels(name)
            .ok_or_else(|| Error::Config(format!("unknown grouping covariate '{name}'")))?
            .iter()
            .map(|l| GroupPredicate::equals(name, l))
            .collect(),
        Grouping::Predicates { predicates, .. } => predicates.clone(),
    };
    let membership: Vec<Vec<usize>> = predicates
        .iter()
        .map(|p| (0..sample.len()).filter(|&i| p.matches(&sample.records[i])).collect())
        .collect();
    if let Grouping::Predicates { allow_overlap: false, .. } = grouping {
        let mut seen = BTreeSet::new();
        for m in &membership {
            for &i in m {
                if !seen.insert(i) {
                    return Err(Error::Config("subgroup predicates overlap; set allow_overlap to permit".into()));
                }
            }
        }
    }
    let mut report = SubgroupReport { groups: Vec::new(), suppressed: Vec::new() };
    for (p, members) in predicates.into_iter().zip(membership) {
        if members.len() < min_n.max(1) {
            report.suppressed.push((p, members.len()));
            continue;
        }
        let values: Vec<f64> = members.iter().map(|&i| estimate.if_values[i]).collect();
        let w: Option<Vec<f64>> = estimate.weights.as_ref().map(|w| members.iter().map(|&i| w[i]).collect());
        let est = InfluenceEstimate::from_if(
            format!("{} | {}", estimate.label, p.describe()),
            values,
            w.as_deref(),
            estimate.scale,
            estimate.alpha,
        );
        report.groups.push(SubgroupEstimate { group: p, estimate: est, members });
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifferenceTest {
    pub difference: f64,
    pub z: f64,
    pub p_value: f64,
    /// The groups are treated as independent samples.
    pub independence_assumed: bool,
}

/// Two-sided z-test of equal effects in two disjoint subgroups.
pub fn difference_test(e1: &SubgroupEstimate, e2: &SubgroupEstimate) -> Result<DifferenceTest> {
    let a: BTreeSet<usize> = e1.members.iter().copied().collect();
    if e2.members.iter().any(|i| a.contains(i)) {
        return Err(Error::Config(format!(
            "subgroups '{}' and '{}' overlap; their covariance is not accounted for",
            e1.group.describe(),
            e2.group.describe()
        )));
    }
    let difference = e1.estimate.point - e2.estimate.point;
    let sd = (e1.estimate.variance + e2.estimate.variance).sqrt();
    let z = if sd > 0.0 { difference / sd } else if difference == 0.0 { 0.0 } else { f64::INFINITY * difference.signum() };
    Ok(DifferenceTest { difference, z, p_value: two_sided_p(z), independence_assumed: true })
}

/// Full-sample risk difference with complete-case weighting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullSampleEffect {
    /// Influence values over complete then incomplete records; the variance
    /// is normalized by the analytic (complete-case) sample size.
    pub estimate: InfluenceEstimate,
    /// Standard error normalized by the number of accepting respondents.
    pub efficient_se: f64,
    pub n_analytic: usize,
    pub n_total: usize,
    pub warnings: Vec<String>,
}

/// Risk difference over every accepting respondent: the bias-correction
/// terms carry an extra `1(R = 1) / η(X)` factor and the regression terms
/// are averaged over complete and incomplete records alike.
pub fn full_sample_effect(sample: &AnalyticSample, bundle: &NuisanceBundle, kind: OutcomeKind) -> Result<FullSampleEffect> {
    bundle.check_len(sample.len())?;
    let full = bundle.full_sample()?;
    if full.eta_incomplete.len() != sample.incomplete.len() {
        return Err(Error::Mismatch { what: "incomplete records", expected: sample.incomplete.len(), got: full.eta_incomplete.len() });
    }
    let mu = bundle.mu(kind)?;
    let mu_inc = full
        .mu_incomplete
        .get(&kind)
        .ok_or_else(|| Error::Config(format!("bundle has no incomplete-case regression for '{}'", kind.label())))?;
    let y = sample.outcome(kind);
    let a = sample.treatment();
    let n = sample.len();
    let mut values = Vec::with_capacity(n + sample.incomplete.len());
    for i in 0..n {
        let correction = if a[i] == 1 {
            (y[i] - mu.mu1[i]) / bundle.pi[i]
        } else {
            -(y[i] - mu.mu0[i]) / (1.0 - bundle.pi[i])
        };
        values.push(mu.mu1[i] - mu.mu0[i] + correction / full.eta[i]);
    }
    values.extend(mu_inc.mu1.iter().zip(&mu_inc.mu0).map(|(m1, m0)| m1 - m0));
    let weights: Option<Vec<f64>> = sample.weights().map(|w| {
        let mut all = w.to_vec();
        all.extend(sample.incomplete.iter().map(|r| r.weight.unwrap_or(1.0)));
        all
    });
    let (point, efficient_var) = if_moments(&values, weights.as_deref());
    let n_total = values.len();
    // Rescale from the full count to the analytic count.
    let (total_w, analytic_w) = match (&weights, sample.weights()) {
        (Some(all), Some(w)) => (all.iter().sum::<f64>(), w.iter().sum::<f64>()),
        _ => (n_total as f64, n as f64),
    };
    let variance = efficient_var * total_w / analytic_w;
    let mut warnings = Vec::new();
    let eps = bundle.clip_epsilon;
    let at_bound = full.eta.iter().chain(&full.eta_incomplete).filter(|&&e| e <= eps).count();
    if eps > 0.0 && at_bound as f64 > 0.01 * n_total as f64 {
        warnings.push(format!(
            "positivity warning: {at_bound} of {n_total} complete-case probabilities at the clip bound"
        ));
    }
    let estimate = InfluenceEstimate::with_variance(
        format!("rd_full[{}]", kind.label()),
        values,
        weights.as_deref(),
        Scale::RiskDifference,
        ALPHA,
        point,
        variance,
    );
    Ok(FullSampleEffect { estimate, efficient_se: efficient_var.sqrt(), n_analytic: n, n_total, warnings })
}

/// Scale a risk-difference estimate by the complete-case share `p_r`,
/// bounding the full-population effect when the excluded stratum's effects
/// are nonpositive.
pub fn pr_scaled_bound(estimate: &InfluenceEstimate, p_r: f64) -> Result<InfluenceEstimate> {
    if !(p_r > 0.0 && p_r <= 1.0) {
        return Err(Error::Config(format!("p_r must lie in (0, 1], got {p_r}")));
    }
    if estimate.scale == Scale::RiskRatio {
        return Err(Error::Config("p_r scaling applies to risk differences".into()));
    }
    let values = estimate.if_values.iter().map(|v| v * p_r).collect();
    let mut out = InfluenceEstimate::from_if(
        format!("{} x p_r", estimate.label),
        values,
        estimate.weights.as_deref(),
        estimate.scale,
        estimate.alpha,
    );
    // Keep the exact product for the point.
    out.point = estimate.point * p_r;
    Ok(out)
}

/// Assumption under which the sign-flipped effect bounds the pandemic effect.
pub const PANDEMIC_ASSUMPTION: &str =
    "outcomes under universal vaccination are no worse than outcomes absent the pandemic (pandemic-bound assumption)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PandemicBound {
    /// Lower bound on the pandemic effect on the risk-difference scale.
    pub rd_lower: f64,
    pub rd_ci: (f64, f64),
    /// Lower bound on the pandemic risk ratio.
    pub rr_lower: f64,
    pub rr_ci: (f64, f64),
    pub assumption: String,
}

pub fn pandemic_bound(rd: &InfluenceEstimate, rr: &InfluenceEstimate) -> PandemicBound {
    PandemicBound {
        rd_lower: -rd.point,
        rd_ci: (-rd.ci.1, -rd.ci.0),
        rr_lower: 1.0 / rr.point,
        rr_ci: (1.0 / rr.ci.1, 1.0 / rr.ci.0),
        assumption: PANDEMIC_ASSUMPTION.into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim;

    fn dgp1_exact() -> (AnalyticSample, NuisanceBundle) {
        let spec = sim::dgp1();
        let s = sim::exact_law_sample(&spec).unwrap();
        let b = sim::true_bundle(&spec, &s).unwrap();
        (s, b)
    }

    #[test]
    fn dgp1_true_nuisances_reproduce_truth() {
        let (s, b) = dgp1_exact();
        assert!((phi1(&s, &b, OutcomeKind::Y, 1).unwrap().point - 0.35).abs() < 1e-12);
        assert!((risk_difference(&s, &b, OutcomeKind::Y).unwrap().point - 0.15).abs() < 1e-12);
        assert!((risk_ratio(&s, &b, OutcomeKind::Y).unwrap().point - 1.75).abs() < 1e-12);
    }

    #[test]
    fn degenerate_constant_outcome_has_zero_variance() {
        let (s, mut b) = dgp1_exact();
        let y = s.outcome(OutcomeKind::Y);
        // Replace outcomes by the constant 1 via a sample with all-ones Y.
        let mut recs = s.records.clone();
        for r in &mut recs {
            r.outcome = Some(1);
        }
        let s1 = AnalyticSample::new(recs, Vec::new(), s.thresholds, true).unwrap();
        let m = b.mu.get_mut(&OutcomeKind::Y).unwrap();
        m.mu0 = vec![1.0; y.len()];
        m.mu1 = vec![1.0; y.len()];
        let e = phi1(&s1, &b, OutcomeKind::Y, 1).unwrap();
        assert!((e.point - 1.0).abs() < 1e-15);
        assert!(e.variance < 1e-30);
    }

    #[test]
    fn horvitz_thompson_reduction() {
        let spec = sim::dgp1();
        let recs = sim::generate(&spec, 400).unwrap();
        let s = AnalyticSample::new(recs, Vec::new(), crate::ingest::Thresholds { m1: 2, m2: 3 }, false).unwrap();
        let mut b = sim::true_bundle(&spec, &s).unwrap();
        b.pi = vec![0.5; s.len()];
        let m = b.mu.get_mut(&OutcomeKind::Y).unwrap();
        m.mu0 = vec![0.0; s.len()];
        m.mu1 = vec![0.0; s.len()];
        let e = phi1(&s, &b, OutcomeKind::Y, 1).unwrap();
        let ht = 2.0 * (0..s.len()).map(|i| f64::from(s.treatment()[i] * s.y()[i])).sum::<f64>() / s.len() as f64;
        assert!((e.point - ht).abs() < 1e-12);
    }

    #[test]
    fn equal_regressions_give_unit_ratio() {
        let spec = sim::null();
        let s = sim::exact_law_sample(&spec).unwrap();
        let b = sim::true_bundle(&spec, &s).unwrap();
        let rr = risk_ratio(&s, &b, OutcomeKind::Y).unwrap();
        assert!((rr.point - 1.0).abs() < 1e-12);
        let (mean, _) = if_moments(&rr.if_values, rr.weights.as_deref());
        assert!(mean.abs() < 1e-12);
    }

    #[test]
    fn partition_reconstructs_overall_point() {
        let spec = sim::planted(0.1, 0.1);
        let recs = sim::generate(&spec, 3000).unwrap();
        let s = AnalyticSample::new(recs, Vec::new(), crate::ingest::Thresholds { m1: 2, m2: 3 }, false).unwrap();
        let b = sim::true_bundle(&spec, &s).unwrap();
        let rd = risk_difference(&s, &b, OutcomeKind::Y).unwrap();
        let rep = subgroup_effects(&rd, &s, &Grouping::Covariate("x1".into()), 50).unwrap();
        let recon: f64 = rep.groups.iter().map(|g| g.members.len() as f64 / s.len() as f64 * g.estimate.point).sum();
        assert!((recon - rd.point).abs() < 1e-10);
        let whole = subgroup_effects(
            &rd,
            &s,
            &Grouping::Predicates { predicates: vec![GroupPredicate::all()], allow_overlap: false },
            50,
        )
        .unwrap();
        assert!((whole.groups[0].estimate.point - rd.point).abs() < 1e-15);
        assert!((whole.groups[0].estimate.variance - rd.variance).abs() < 1e-18);
    }

    #[test]
    fn small_groups_are_suppressed_and_overlap_rejected() {
        let (s, b) = dgp1_exact();
        let rd = risk_difference(&s, &b, OutcomeKind::Y).unwrap();
        let rep = subgroup_effects(&rd, &s, &Grouping::Covariate("x".into()), 50).unwrap();
        assert_eq!(rep.groups.len(), 0);
        assert_eq!(rep.suppressed.len(), 2);
        let overlap = Grouping::Predicates {
            predicates: vec![GroupPredicate::all(), GroupPredicate::equals("x", "1")],
            allow_overlap: false,
        };
        assert!(subgroup_effects(&rd, &s, &overlap, 1).is_err());
    }

    #[test]
    fn difference_test_arithmetic() {
        let mk = |point: f64, var: f64, members: Vec<usize>| SubgroupEstimate {
            group: GroupPredicate::all(),
            estimate: InfluenceEstimate { point, variance: var, ..InfluenceEstimate::from_if("g", vec![0.0], None, Scale::RiskDifference, ALPHA) },
            members,
        };
        let t = difference_test(&mk(0.1, 0.01, vec![0]), &mk(0.1, 0.02, vec![1])).unwrap();
        assert_eq!(t.z, 0.0);
        assert_eq!(t.p_value, 1.0);
        let sd = (0.01f64 + 0.02).sqrt();
        let t = difference_test(&mk(0.1 + 1.959963984540054 * sd, 0.01, vec![0]), &mk(0.1, 0.02, vec![1])).unwrap();
        assert!((t.p_value - 0.05).abs() < 1e-9);
        assert!(difference_test(&mk(0.1, 0.01, vec![0, 1]), &mk(0.1, 0.02, vec![1])).is_err());
    }

    #[test]
    fn full_response_full_sample_equals_complete_case() {
        let spec = sim::dgp1();
        let recs = sim::generate(&spec, 2000).unwrap();
        let s = AnalyticSample::new(recs, Vec::new(), crate::ingest::Thresholds { m1: 2, m2: 3 }, false).unwrap();
        let mut b = sim::true_bundle(&spec, &s).unwrap();
        b.full = Some(crate::nuisance::FullSampleNuisance {
            eta: vec![1.0; s.len()],
            folds_incomplete: Vec::new(),
            eta_incomplete: Vec::new(),
            pi_incomplete: Vec::new(),
            mu_incomplete: [(OutcomeKind::Y, crate::nuisance::OutcomeRegressions { mu0: vec![], mu1: vec![] })].into(),
        });
        let rd = risk_difference(&s, &b, OutcomeKind::Y).unwrap();
        let fs = full_sample_effect(&s, &b, OutcomeKind::Y).unwrap();
        assert!((fs.estimate.point - rd.point).abs() < 1e-15);
        assert!((fs.estimate.variance - rd.variance).abs() < 1e-18);
    }

    #[test]
    fn pr_scaling_and_pandemic_bounds() {
        let e = InfluenceEstimate::from_if("rd", vec![-0.037; 10], None, Scale::RiskDifference, ALPHA);
        let same = pr_scaled_bound(&e, 1.0).unwrap();
        assert_eq!(same.point, e.point);
        let scaled = pr_scaled_bound(&e, 0.861).unwrap();
        assert!((scaled.point - (-0.031857)).abs() < 1e-9);
        assert!(pr_scaled_bound(&e, 0.0).is_err());
        let rr = InfluenceEstimate::from_if("rr", vec![0.81f64.ln(); 10], None, Scale::RiskRatio, ALPHA);
        let pb = pandemic_bound(&e, &rr);
        assert!((pb.rd_lower - 0.037).abs() < 1e-15);
        assert!((pb.rr_lower - 1.0 / 0.81).abs() < 1e-12);
        assert!((pb.rr_lower - 1.2346).abs() < 1e-4);
        let null_rd = InfluenceEstimate::from_if("rd", vec![0.0; 3], None, Scale::RiskDifference, ALPHA);
        let null_rr = InfluenceEstimate::from_if("rr", vec![0.0; 3], None, Scale::RiskRatio, ALPHA);
        let pb = pandemic_bound(&null_rd, &null_rr);
        assert_eq!(pb.rd_lower, 0.0);
        assert_eq!(pb.rr_lower, 1.0);
    }

    #[test]
    fn bundle_length_mismatch_is_an_error() {
        let (s, mut b) = dgp1_exact();
        b.n += 1;
        assert!(matches!(phi1(&s, &b, OutcomeKind::Y, 1), Err(Error::Mismatch { .. })));
    }
}
