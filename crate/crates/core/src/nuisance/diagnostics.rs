use serde::{Deserialize, Serialize};

use super::NuisanceBundle;
use crate::error::Result;
use crate::ingest::{AnalyticSample, OutcomeKind};
use crate::stats::{quantile_sorted, sorted};

/// Quantile levels reported in weight tables.
pub const WEIGHT_QUANTILES: [f64; 7] = [0.0, 0.01, 0.25, 0.5, 0.75, 0.99, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub mean_predicted: f64,
    pub mean_observed: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub model: String,
    pub bins: Vec<CalibrationBin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightQuantiles {
    pub weight: String,
    pub levels: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub curves: Vec<CalibrationCurve>,
    pub weights: Vec<WeightQuantiles>,
}

impl CalibrationReport {
    /// One CSV row per bin: `model,bin,mean_predicted,mean_observed,count`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,bin,mean_predicted,mean_observed,count\n");
        for c in &self.curves {
            for (b, bin) in c.bins.iter().enumerate() {
                out.push_str(&format!(
                    "{},{b},{},{},{}\n",
                    c.model, bin.mean_predicted, bin.mean_observed, bin.count
                ));
            }
        }
        out
    }

    /// Weight table as CSV: `weight,quantile,value`.
    pub fn weights_csv(&self) -> String {
        let mut out = String::from("weight,quantile,value\n");
        for w in &self.weights {
            for (q, v) in w.levels.iter().zip(&w.values) {
                out.push_str(&format!("{},{q},{v}\n", w.weight));
            }
        }
        out
    }
}

/// Calibration curve over `bins` quantile bins of the predictions. Ties
/// share a bin, so a constant model produces a single bin.
pub fn calibration_curve(model: &str, predicted: &[f64], observed: &[f64], bins: usize) -> CalibrationCurve {
    let s = sorted(predicted);
    let mut edges: Vec<f64> = (1..bins).map(|b| quantile_sorted(&s, b as f64 / bins as f64)).collect();
    edges.dedup();
    let mut sums = vec![(0.0, 0.0, 0usize); edges.len() + 1];
    for (p, o) in predicted.iter().zip(observed) {
        let b = edges.partition_point(|&e| e < *p);
        sums[b].0 += p;
        sums[b].1 += o;
        sums[b].2 += 1;
    }
    CalibrationCurve {
        model: model.to_string(),
        bins: sums
            .into_iter()
            .filter(|s| s.2 > 0)
            .map(|(p, o, c)| CalibrationBin {
                mean_predicted: p / c as f64,
                mean_observed: o / c as f64,
                count: c,
            })
            .collect(),
    }
}

fn weight_table(name: &str, values: &[f64]) -> WeightQuantiles {
    let s = sorted(values);
    WeightQuantiles {
        weight: name.to_string(),
        levels: WEIGHT_QUANTILES.to_vec(),
        values: WEIGHT_QUANTILES.iter().map(|&q| quantile_sorted(&s, q)).collect(),
    }
}

/// Decile calibration curves for every fitted binary model and quantile
/// tables of the inverse-probability weights.
pub fn diagnostics(bundle: &NuisanceBundle, sample: &AnalyticSample) -> Result<CalibrationReport> {
    bundle.check_len(sample.len())?;
    let a = sample.treatment();
    let n = sample.len();
    let mut curves = Vec::new();
    let a_obs: Vec<f64> = a.iter().map(|&v| f64::from(v)).collect();
    curves.push(calibration_curve("A", &bundle.pi, &a_obs, 10));
    for (&kind, mu) in &bundle.mu {
        let pred: Vec<f64> = (0..n).map(|i| mu.arm(a[i])[i]).collect();
        let name = match kind {
            OutcomeKind::Y => "Y",
            OutcomeKind::M1Star => "M1*",
            OutcomeKind::M2Star => "M2*",
        };
        curves.push(calibration_curve(name, &pred, &sample.outcome(kind), 10));
    }
    let inv_pi: Vec<f64> = (0..n).map(|i| 1.0 / bundle.pi_a(i, a[i])).collect();
    let mut weights = vec![weight_table("inverse_pi", &inv_pi)];

    if let Some(full) = &bundle.full {
        let mut eta = full.eta.clone();
        eta.extend_from_slice(&full.eta_incomplete);
        let mut r = vec![1.0; n];
        r.resize(eta.len(), 0.0);
        curves.push(calibration_curve("R", &eta, &r, 10));
        let mut ar_pred: Vec<f64> = bundle.pi.iter().zip(&full.eta).map(|(p, e)| p * e).collect();
        ar_pred.extend(full.pi_incomplete.iter().zip(&full.eta_incomplete).map(|(p, e)| p * e));
        let mut ar_obs = a_obs.clone();
        ar_obs.resize(ar_pred.len(), 0.0);
        curves.push(calibration_curve("A*R", &ar_pred, &ar_obs, 10));
        let inv_eta: Vec<f64> = full.eta.iter().map(|e| 1.0 / e).collect();
        weights.push(weight_table("inverse_eta", &inv_eta));
    }
    Ok(CalibrationReport { curves, weights })
}
