//! Interventional effect decomposition with two mediators.
//!
//! Every component is a contrast of blocks
//! `θ(b; G) = E[Σ_m μ_b(m, X) G(m | X)]`, where `μ_b(m, x)` is the outcome
//! regression given treatment `b` and mediator cell `m`, and `G` is either the
//! joint mediator law under treatment `c` or the product of the `M1` marginal
//! under `c1` and the `M2` marginal under `c2`. Each block has a closed-form
//! efficient influence function, so components inherit per-record influence
//! values and the covariant effect is the exact record-wise residual.

use serde::{Deserialize, Serialize};

use crate::effects::{if_moments, risk_difference, InfluenceEstimate, Scale, ALPHA};
use crate::error::{Error, Result};
use crate::ingest::{AnalyticSample, OutcomeKind};
use crate::nuisance::NuisanceBundle;
use crate::stats::two_sided_p;
use crate::{decode_mediators, MEDIATOR_CELLS, MEDIATOR_LEVELS};

/// Proportions are reported with intervals only when `|total| > 10·SE`.
pub const PROPORTION_SE_RATIO: f64 = 10.0;

/// Mediator law integrated against the outcome regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MediatorLaw {
    /// Joint law of `(M1, M2)` under treatment `c`.
    Joint(u8),
    /// `M1` marginal under the first level times `M2` marginal under the second.
    Product(u8, u8),
}

/// Per-record uncentered influence values of `θ(b; law)`.
pub fn theta_values(sample: &AnalyticSample, bundle: &NuisanceBundle, b: u8, law: MediatorLaw) -> Result<Vec<f64>> {
    bundle.check_len(sample.len())?;
    let (mu_m, pmed) = bundle.mediation()?;
    let a = sample.treatment();
    let y = sample.outcome(OutcomeKind::Y);
    let k = MEDIATOR_CELLS;
    let mut out = Vec::with_capacity(sample.len());
    for i in 0..sample.len() {
        let mu = &mu_m[b as usize][i * k..(i + 1) * k];
        let m = sample.mediator_code(i);
        let (m1, m2) = decode_mediators(m);
        let (m1, m2) = (m1 as usize, m2 as usize);
        let p_b = pmed[b as usize][i * k + m];
        let resid = y[i] - mu[m];
        let ind = |c: u8| if a[i] == c { 1.0 / bundle.pi_a(i, c) } else { 0.0 };
        let value = match law {
            MediatorLaw::Joint(c) => {
                let g = &pmed[c as usize][i * k..(i + 1) * k];
                let eta: f64 = mu.iter().zip(g).map(|(u, p)| u * p).sum();
                ind(b) * g[m] / p_b * resid + ind(c) * (mu[m] - eta) + eta
            }
            MediatorLaw::Product(c1, c2) => {
                let (g1, _) = marginals(&pmed[c1 as usize][i * k..(i + 1) * k]);
                let (_, g2) = marginals(&pmed[c2 as usize][i * k..(i + 1) * k]);
                let at = |x1: usize, x2: usize| mu[x1 * MEDIATOR_LEVELS + x2];
                let mut eta = 0.0;
                for x1 in 0..MEDIATOR_LEVELS {
                    for x2 in 0..MEDIATOR_LEVELS {
                        eta += at(x1, x2) * g1[x1] * g2[x2];
                    }
                }
                let over_m2: f64 = (0..MEDIATOR_LEVELS).map(|x2| at(m1, x2) * g2[x2]).sum();
                let over_m1: f64 = (0..MEDIATOR_LEVELS).map(|x1| at(x1, m2) * g1[x1]).sum();
                ind(b) * g1[m1] * g2[m2] / p_b * resid + ind(c1) * (over_m2 - eta) + ind(c2) * (over_m1 - eta) + eta
            }
        };
        out.push(value);
    }
    Ok(out)
}

fn marginals(row: &[f64]) -> ([f64; MEDIATOR_LEVELS], [f64; MEDIATOR_LEVELS]) {
    let mut m1 = [0.0; MEDIATOR_LEVELS];
    let mut m2 = [0.0; MEDIATOR_LEVELS];
    for (c, p) in row.iter().enumerate() {
        let (a, b) = decode_mediators(c);
        m1[a as usize] += p;
        m2[b as usize] += p;
    }
    (m1, m2)
}

/// Component share of the total effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub component: String,
    pub point: f64,
    /// Delta-method interval; absent when the total is too imprecise.
    pub ci: Option<(f64, f64)>,
    pub se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProportionReport {
    /// Empty when the total effect is numerically zero.
    pub proportions: Vec<Proportion>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EqualityTest {
    pub difference: f64,
    pub z: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediationDecomposition {
    pub reference: u8,
    pub total: InfluenceEstimate,
    pub ide: InfluenceEstimate,
    pub iie_m1: InfluenceEstimate,
    pub iie_m2: InfluenceEstimate,
    /// Residual `total − ide − iie_m1 − iie_m2`, record-wise.
    pub cov: InfluenceEstimate,
    pub warnings: Vec<String>,
}

impl MediationDecomposition {
    /// Build a decomposition from the total and three components; the
    /// covariant effect is their record-wise residual.
    pub fn from_components(
        reference: u8,
        total: InfluenceEstimate,
        ide: InfluenceEstimate,
        iie_m1: InfluenceEstimate,
        iie_m2: InfluenceEstimate,
    ) -> Result<Self> {
        let n = total.if_values.len();
        for e in [&ide, &iie_m1, &iie_m2] {
            if e.if_values.len() != n {
                return Err(Error::Mismatch { what: "influence values", expected: n, got: e.if_values.len() });
            }
        }
        let values: Vec<f64> = (0..n)
            .map(|i| total.if_values[i] - ide.if_values[i] - iie_m1.if_values[i] - iie_m2.if_values[i])
            .collect();
        let mut cov = InfluenceEstimate::from_if("cov", values, total.weights.as_deref(), Scale::RiskDifference, total.alpha);
        // Exact additivity of the points.
        cov.point = total.point - ide.point - iie_m1.point - iie_m2.point;
        Ok(MediationDecomposition { reference, total, ide, iie_m1, iie_m2, cov, warnings: Vec::new() })
    }

    pub fn components(&self) -> [&InfluenceEstimate; 4] {
        [&self.ide, &self.iie_m1, &self.iie_m2, &self.cov]
    }
}

/// Interventional decomposition of the risk difference on `Y` relative to
/// the given reference treatment level.
pub fn interventional_decomposition(
    sample: &AnalyticSample,
    bundle: &NuisanceBundle,
    reference: u8,
) -> Result<MediationDecomposition> {
    if reference > 1 {
        return Err(Error::Config(format!("reference must be 0 or 1, got {reference}")));
    }
    let w = sample.weights();
    let th = |b: u8, law: MediatorLaw| theta_values(sample, bundle, b, law);
    let diff = |label: &str, x: Vec<f64>, y: Vec<f64>| {
        let v = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        InfluenceEstimate::from_if(label, v, w, Scale::RiskDifference, ALPHA)
    };
    use MediatorLaw::{Joint, Product};
    let (ide, m1, m2) = if reference == 0 {
        (
            diff("ide", th(1, Joint(1))?, th(0, Joint(1))?),
            diff("iie_m1", th(0, Product(1, 0))?, th(0, Product(0, 0))?),
            diff("iie_m2", th(0, Product(1, 1))?, th(0, Product(1, 0))?),
        )
    } else {
        (
            diff("ide", th(1, Joint(0))?, th(0, Joint(0))?),
            diff("iie_m1", th(1, Product(1, 1))?, th(1, Product(0, 1))?),
            diff("iie_m2", th(1, Product(0, 1))?, th(1, Product(0, 0))?),
        )
    };
    let mut total = risk_difference(sample, bundle, OutcomeKind::Y)?;
    total.label = "total".into();
    let mut dec = MediationDecomposition::from_components(reference, total, ide, m1, m2)?;

    // Observed mediator cells whose denominator sits at the probability floor.
    let (_, pmed) = bundle.mediation()?;
    let a = sample.treatment();
    let at_floor = (0..sample.len())
        .filter(|&i| pmed[a[i] as usize][i * MEDIATOR_CELLS + sample.mediator_code(i)] <= bundle.mediator_floor * (1.0 + 1e-9))
        .count();
    if at_floor > 0 {
        dec.warnings.push(format!(
            "positivity warning: {at_floor} records have their observed mediator cell at the probability floor {}",
            bundle.mediator_floor
        ));
    }
    Ok(dec)
}

/// Each component divided by the total, with delta-method intervals from
/// the per-record influence values.
pub fn proportion_mediated(dec: &MediationDecomposition) -> ProportionReport {
    let total = &dec.total;
    let mut warnings = Vec::new();
    if total.point.abs() < 1e-12 {
        warnings.push("total effect is zero; proportions are not reported".into());
        return ProportionReport { proportions: Vec::new(), warnings };
    }
    let precise = total.point.abs() > PROPORTION_SE_RATIO * total.se();
    if !precise {
        warnings.push(format!(
            "|total| is below {PROPORTION_SE_RATIO} standard errors; proportion intervals are suppressed"
        ));
    }
    let w = total.weights.as_deref();
    let (t_mean, _) = if_moments(&total.if_values, w);
    let proportions = dec
        .components()
        .iter()
        .map(|c| {
            let r = c.point / total.point;
            let (c_mean, _) = if_moments(&c.if_values, w);
            let (ci, se) = if precise {
                let values = c
                    .if_values
                    .iter()
                    .zip(&total.if_values)
                    .map(|(ci, ti)| r + (ci - c_mean) / total.point - r * (ti - t_mean) / total.point)
                    .collect();
                let e = InfluenceEstimate::from_if("", values, w, Scale::Mean, total.alpha);
                (Some((r - (e.point - e.ci.0), r + (e.ci.1 - e.point))), Some(e.se()))
            } else {
                (None, None)
            };
            Proportion { component: c.label.clone(), point: r, ci, se }
        })
        .collect();
    ProportionReport { proportions, warnings }
}

/// Two-sided test that the indirect effects through `M1` and `M2` agree,
/// using the variance of the record-wise influence-value difference.
pub fn mediator_equality_test(dec: &MediationDecomposition) -> Result<EqualityTest> {
    let d = dec.iie_m1.difference(&dec.iie_m2, "iie_m1 - iie_m2")?;
    let difference = dec.iie_m1.point - dec.iie_m2.point;
    let se = d.se();
    let z = if se > 0.0 {
        difference / se
    } else if difference.abs() < 1e-15 {
        0.0
    } else {
        f64::INFINITY * difference.signum()
    };
    Ok(EqualityTest { difference, z, p_value: two_sided_p(z) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSummary {
    pub label: String,
    pub point: f64,
    pub se: f64,
    pub ci: (f64, f64),
}

/// Serializable decomposition report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub reference: u8,
    pub components: Vec<ComponentSummary>,
    pub proportions: ProportionReport,
    pub equality_test: EqualityTest,
    pub warnings: Vec<String>,
}

impl DecompositionReport {
    pub fn new(dec: &MediationDecomposition) -> Result<Self> {
        let components = std::iter::once(&dec.total)
            .chain(dec.components())
            .map(|e| ComponentSummary { label: e.label.clone(), point: e.point, se: e.se(), ci: e.ci })
            .collect();
        Ok(DecompositionReport {
            reference: dec.reference,
            components,
            proportions: proportion_mediated(dec),
            equality_test: mediator_equality_test(dec)?,
            warnings: dec.warnings.clone(),
        })
    }

    /// CSV rows `reference,component,point,lo,hi,proportion`.
    pub fn to_csv_rows(&self) -> String {
        let mut out = String::new();
        for c in &self.components {
            let prop = self
                .proportions
                .proportions
                .iter()
                .find(|p| p.component == c.label)
                .map(|p| p.point.to_string())
                .unwrap_or_default();
            out.push_str(&format!("{},{},{},{},{},{}\n", self.reference, c.label, c.point, c.ci.0, c.ci.1, prop));
        }
        out
    }
}
