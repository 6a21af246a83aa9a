//! Convex stacking of probabilistic learners by exponentiated gradient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of exponentiated-gradient steps.
pub const STACK_STEPS: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackWeights {
    /// Simplex weights, one per member.
    pub weights: Vec<f64>,
    /// Validation log-loss of the weighted mixture.
    pub loss: f64,
    /// Validation log-loss of each member alone.
    pub member_losses: Vec<f64>,
    pub warnings: Vec<String>,
}

fn mixture_loss(probs: &[Vec<f64>], weights: &[f64], w: Option<&[f64]>) -> f64 {
    let n = probs[0].len();
    let mut loss = 0.0;
    let mut total = 0.0;
    for i in 0..n {
        let wi = w.map_or(1.0, |w| w[i]);
        let p: f64 = probs.iter().zip(weights).map(|(m, a)| a * m[i]).sum();
        loss -= wi * p.max(1e-300).ln();
        total += wi;
    }
    loss / total
}

/// Choose simplex weights minimizing validation log-loss.
///
/// `probs[m][i]` is member `m`'s predicted probability of the observed class
/// for validation row `i`. The result never has higher loss than the best
/// single member: if the mixture would, the best member gets all the weight.
pub fn stack(probs: &[Vec<f64>], w: Option<&[f64]>) -> Result<StackWeights> {
    let m = probs.len();
    if m == 0 {
        return Err(Error::Config("stacking needs at least one member".into()));
    }
    let n = probs[0].len();
    if n == 0 {
        return Err(Error::Data("stacking needs validation predictions".into()));
    }
    if let Some(bad) = probs.iter().find(|p| p.len() != n) {
        return Err(Error::Mismatch { what: "stacking validation predictions", expected: n, got: bad.len() });
    }
    let member_losses: Vec<f64> = (0..m)
        .map(|j| {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            mixture_loss(probs, &e, w)
        })
        .collect();
    if m == 1 {
        return Ok(StackWeights {
            weights: vec![1.0],
            loss: member_losses[0],
            member_losses,
            warnings: vec!["fewer than two stacking candidates; passing the single model through".into()],
        });
    }

    let total: f64 = w.map_or(n as f64, |w| w.iter().sum());
    let mut weights = vec![1.0 / m as f64; m];
    let mut grad = vec![0.0; m];
    for _ in 0..STACK_STEPS {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for i in 0..n {
            let wi = w.map_or(1.0, |w| w[i]);
            let p: f64 = probs.iter().zip(&weights).map(|(mm, a)| a * mm[i]).sum::<f64>().max(1e-300);
            for (g, mm) in grad.iter_mut().zip(probs) {
                *g -= wi * mm[i] / p;
            }
        }
        grad.iter_mut().for_each(|g| *g /= total);
        let scale = grad.iter().map(|g| g.abs()).fold(0.0, f64::max);
        if !(scale > 0.0 && scale.is_finite()) {
            break;
        }
        let eta = 1.0 / scale;
        for (a, g) in weights.iter_mut().zip(&grad) {
            *a *= (-eta * g).exp();
        }
        let s: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|a| *a /= s);
    }

    let mut loss = mixture_loss(probs, &weights, w);
    let (best, best_loss) = member_losses
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty");
    if !(loss <= best_loss) {
        weights = vec![0.0; m];
        weights[best] = 1.0;
        loss = best_loss;
    }
    Ok(StackWeights { weights, loss, member_losses, warnings: Vec::new() })
}
