//! Logistic and multinomial-logistic regression by Newton-Raphson (IRLS).
//!
//! Both fits work on a standardized copy of the design: constant columns
//! other than the intercept are dropped, the remaining columns are centered
//! (when an intercept is present) and scaled to unit variance. Ridge
//! penalties apply to standardized slopes only. Coefficients are reported on
//! the original scale.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::stats::expit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlmOptions {
    pub max_iter: usize,
    /// Convergence threshold on the max absolute (weight-normalized) score.
    pub tol: f64,
    /// Ridge penalty used from the start; 0 for plain maximum likelihood.
    pub ridge: f64,
    /// First penalty tried when the unpenalized fit is singular or separated.
    pub ridge_fallback: f64,
    /// Standardized-coefficient magnitude that signals separation.
    pub separation_bound: f64,
}

impl Default for GlmOptions {
    fn default() -> Self {
        GlmOptions {
            max_iter: 100,
            tol: 1e-8,
            ridge: 0.0,
            ridge_fallback: 1e-4,
            separation_bound: 15.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub iterations: usize,
    pub converged: bool,
    /// Ridge penalty of the accepted fit.
    pub ridge: f64,
    /// Max absolute penalized score at the returned coefficients.
    pub max_score: f64,
    pub warnings: Vec<String>,
}

/// Column standardization shared by both fits.
#[derive(Debug, Clone)]
struct Standardizer {
    /// Kept original columns.
    cols: Vec<usize>,
    /// Position in `cols` of the intercept column, if any.
    intercept: Option<usize>,
    intercept_value: f64,
    center: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn new(x: &DesignMatrix, w: &[f64]) -> Standardizer {
        let total: f64 = w.iter().sum();
        let p = x.ncols();
        let mut mean = vec![0.0; p];
        for i in 0..x.nrows() {
            if w[i] == 0.0 {
                continue;
            }
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += w[i] * v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= total);
        let mut var = vec![0.0; p];
        for i in 0..x.nrows() {
            if w[i] == 0.0 {
                continue;
            }
            for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                *s += w[i] * (v - m) * (v - m);
            }
        }
        var.iter_mut().for_each(|s| *s /= total);

        let mut cols = Vec::new();
        let mut intercept = None;
        let mut intercept_value = 1.0;
        let mut center = Vec::new();
        let mut scale = Vec::new();
        for j in 0..p {
            let sd = var[j].sqrt();
            if sd <= 1e-12 * mean[j].abs().max(1.0) {
                if intercept.is_none() && mean[j].abs() > 0.0 {
                    intercept = Some(cols.len());
                    intercept_value = mean[j];
                    cols.push(j);
                    center.push(0.0);
                    scale.push(1.0);
                }
                continue;
            }
            cols.push(j);
            center.push(mean[j]);
            scale.push(sd);
        }
        if intercept.is_none() {
            center.iter_mut().for_each(|c| *c = 0.0);
        }
        Standardizer {
            cols,
            intercept,
            intercept_value,
            center,
            scale,
        }
    }

    fn dim(&self) -> usize {
        self.cols.len()
    }

    fn transform_row(&self, row: &[f64], out: &mut [f64]) {
        for (k, &j) in self.cols.iter().enumerate() {
            out[k] = (row[j] - self.center[k]) / self.scale[k];
        }
    }

    fn matrix(&self, x: &DesignMatrix) -> Vec<f64> {
        let q = self.dim();
        let mut z = vec![0.0; x.nrows() * q];
        for i in 0..x.nrows() {
            self.transform_row(x.row(i), &mut z[i * q..(i + 1) * q]);
        }
        z
    }

    fn is_penalized(&self, k: usize) -> bool {
        Some(k) != self.intercept
    }

    /// Original-scale coefficients (length = original column count).
    fn to_original(&self, gamma: &[f64], p: usize) -> Vec<f64> {
        let mut beta = vec![0.0; p];
        let mut shift = 0.0;
        for (k, &j) in self.cols.iter().enumerate() {
            if Some(k) == self.intercept {
                continue;
            }
            beta[j] = gamma[k] / self.scale[k];
            shift += gamma[k] * self.center[k] / self.scale[k];
        }
        if let Some(k) = self.intercept {
            beta[self.cols[k]] = gamma[k] - shift / self.intercept_value;
        }
        beta
    }
}

fn unit_weights(n: usize, w: Option<&[f64]>) -> Result<Vec<f64>> {
    match w {
        None => Ok(vec![1.0; n]),
        Some(w) => {
            if w.len() != n {
                return Err(Error::Mismatch {
                    what: "sample weights",
                    expected: n,
                    got: w.len(),
                });
            }
            if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(Error::Data("sample weights must be finite and nonnegative".into()));
            }
            Ok(w.to_vec())
        }
    }
}

fn solve_spd(h: DMatrix<f64>, g: DVector<f64>) -> Option<DVector<f64>> {
    let chol = h.cholesky()?;
    let step = chol.solve(&g);
    step.iter().all(|v| v.is_finite()).then_some(step)
}

/// Fitted binary logistic model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    /// Coefficients on the original design columns.
    pub coef: Vec<f64>,
    /// Set when all targets share one value; predictions are this constant.
    pub constant: Option<f64>,
    pub report: FitReport,
}

impl LogisticModel {
    pub fn linear_predictor(&self, row: &[f64]) -> f64 {
        row.iter().zip(&self.coef).map(|(x, b)| x * b).sum()
    }

    pub fn predict(&self, x: &DesignMatrix) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| match self.constant {
                Some(c) => c,
                None => expit(self.linear_predictor(x.row(i))),
            })
            .collect()
    }
}

/// Weighted Bernoulli log-likelihood divided by the total weight.
pub fn logistic_loglik(x: &DesignMatrix, y: &[f64], w: Option<&[f64]>, beta: &[f64]) -> f64 {
    let mut ll = 0.0;
    let mut total = 0.0;
    for i in 0..x.nrows() {
        let wi = w.map_or(1.0, |w| w[i]);
        let eta: f64 = x.row(i).iter().zip(beta).map(|(a, b)| a * b).sum();
        // log(1 + e^eta) computed stably
        let log1pe = if eta > 0.0 {
            eta + (-eta).exp().ln_1p()
        } else {
            eta.exp().ln_1p()
        };
        ll += wi * (y[i] * eta - log1pe);
        total += wi;
    }
    ll / total
}

/// Gradient of [`logistic_loglik`] with respect to `beta`.
pub fn logistic_gradient(x: &DesignMatrix, y: &[f64], w: Option<&[f64]>, beta: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; x.ncols()];
    let mut total = 0.0;
    for i in 0..x.nrows() {
        let wi = w.map_or(1.0, |w| w[i]);
        let row = x.row(i);
        let eta: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
        let r = wi * (y[i] - expit(eta));
        for (gj, xj) in g.iter_mut().zip(row) {
            *gj += r * xj;
        }
        total += wi;
    }
    g.iter_mut().for_each(|v| *v /= total);
    g
}

struct NewtonResult {
    gamma: Vec<f64>,
    iterations: usize,
    converged: bool,
    max_score: f64,
    singular: bool,
}

fn logistic_newton(z: &[f64], q: usize, y: &[f64], w: &[f64], total: f64, std: &Standardizer, ridge: f64, opts: &GlmOptions) -> NewtonResult {
    let n = y.len();
    let mut gamma = vec![0.0; q];
    if let Some(k) = std.intercept {
        let ybar: f64 = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / total;
        gamma[k] = crate::stats::logit(ybar) / std.intercept_value;
    }

    let objective = |gamma: &[f64]| -> f64 {
        let mut ll = 0.0;
        for i in 0..n {
            if w[i] == 0.0 {
                continue;
            }
            let eta: f64 = z[i * q..(i + 1) * q].iter().zip(gamma).map(|(a, b)| a * b).sum();
            let log1pe = if eta > 0.0 { eta + (-eta).exp().ln_1p() } else { eta.exp().ln_1p() };
            ll += w[i] * (y[i] * eta - log1pe);
        }
        let pen: f64 = (0..q).filter(|&k| std.is_penalized(k)).map(|k| gamma[k] * gamma[k]).sum();
        ll / total - 0.5 * ridge * pen
    };

    let mut obj = objective(&gamma);
    let mut iterations = 0;
    loop {
        let mut g = DVector::<f64>::zeros(q);
        let mut h = DMatrix::<f64>::zeros(q, q);
        for i in 0..n {
            if w[i] == 0.0 {
                continue;
            }
            let row = &z[i * q..(i + 1) * q];
            let eta: f64 = row.iter().zip(&gamma).map(|(a, b)| a * b).sum();
            let p = expit(eta);
            let r = w[i] * (y[i] - p);
            let v = w[i] * p * (1.0 - p);
            for a in 0..q {
                g[a] += r * row[a];
                let va = v * row[a];
                if va != 0.0 {
                    for b in a..q {
                        h[(a, b)] += va * row[b];
                    }
                }
            }
        }
        for a in 0..q {
            g[a] /= total;
            for b in a..q {
                h[(a, b)] /= total;
                h[(b, a)] = h[(a, b)];
            }
            if std.is_penalized(a) {
                g[a] -= ridge * gamma[a];
                h[(a, a)] += ridge;
            }
        }
        let max_score = g.amax();
        if max_score < opts.tol {
            return NewtonResult { gamma, iterations, converged: true, max_score, singular: false };
        }
        if iterations >= opts.max_iter {
            return NewtonResult { gamma, iterations, converged: false, max_score, singular: false };
        }
        let Some(step) = solve_spd(h, g) else {
            return NewtonResult { gamma, iterations, converged: false, max_score, singular: true };
        };
        iterations += 1;
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = gamma.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
            let cand_obj = objective(&cand);
            if cand_obj >= obj - 1e-15 * obj.abs().max(1.0) || t < 1e-10 {
                gamma = cand;
                obj = cand_obj;
                break;
            }
            t *= 0.5;
        }
    }
}

/// Fit a (possibly ridge-penalized) weighted logistic regression.
///
/// A singular Hessian or standardized coefficients beyond
/// `separation_bound` trigger ridge escalation starting at
/// `ridge_fallback`, recorded as warnings on the report.
pub fn fit_logistic(x: &DesignMatrix, y: &[f64], w: Option<&[f64]>, opts: &GlmOptions) -> Result<LogisticModel> {
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::Mismatch { what: "logistic targets", expected: n, got: y.len() });
    }
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Data("logistic targets must be 0 or 1".into()));
    }
    let w = unit_weights(n, w)?;
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Data("logistic fit needs positive total weight".into()));
    }
    let ybar = y.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / total;
    if ybar <= 0.0 || ybar >= 1.0 {
        return Ok(LogisticModel {
            coef: vec![0.0; x.ncols()],
            constant: Some(ybar.round()),
            report: FitReport {
                converged: true,
                warnings: vec![format!("all targets equal {}; constant model", ybar.round())],
                ..FitReport::default()
            },
        });
    }

    let std = Standardizer::new(x, &w);
    let q = std.dim();
    let z = std.matrix(x);
    let mut ridge = opts.ridge;
    let mut warnings = Vec::new();
    loop {
        let res = logistic_newton(&z, q, y, &w, total, &std, ridge, opts);
        let max_coef = (0..q)
            .filter(|&k| std.is_penalized(k))
            .map(|k| res.gamma[k].abs())
            .fold(0.0, f64::max);
        let separated = max_coef > opts.separation_bound;
        if (res.singular || separated) && ridge < 1e3 {
            let next = if ridge <= 0.0 { opts.ridge_fallback } else { ridge * 10.0 };
            warnings.push(format!(
                "{} at ridge {ridge:e}; escalating ridge to {next:e}",
                if res.singular { "singular Hessian" } else { "separation detected" }
            ));
            ridge = next;
            continue;
        }
        if !res.converged {
            warnings.push(format!(
                "IRLS did not converge after {} iterations (max score {:e})",
                res.iterations, res.max_score
            ));
        }
        return Ok(LogisticModel {
            coef: std.to_original(&res.gamma, x.ncols()),
            constant: None,
            report: FitReport {
                iterations: res.iterations,
                converged: res.converged,
                ridge,
                max_score: res.max_score,
                warnings,
            },
        });
    }
}

/// Options for [`fit_multinomial`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MultinomialOptions {
    pub glm: GlmOptions,
    /// Classes known to have zero probability everywhere. Empty classes not
    /// flagged here are an error.
    pub structural_zeros: Vec<usize>,
}

/// Softmax model over `k` classes. Unsupported (structural-zero) classes
/// always receive probability 0; the first supported class is the reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultinomialModel {
    pub k: usize,
    pub supported: Vec<usize>,
    /// Original-scale coefficients for supported classes after the
    /// reference, each of design width.
    pub coef: Vec<Vec<f64>>,
    pub report: FitReport,
}

impl MultinomialModel {
    pub fn predict_row(&self, row: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut etas = Vec::with_capacity(self.supported.len());
        etas.push(0.0);
        for b in &self.coef {
            etas.push(row.iter().zip(b).map(|(x, c)| x * c).sum::<f64>());
        }
        let m = etas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = etas.iter().map(|e| (e - m).exp()).sum();
        for (c, e) in self.supported.iter().zip(&etas) {
            out[*c] = (e - m).exp() / denom;
        }
    }

    pub fn predict(&self, x: &DesignMatrix) -> Vec<Vec<f64>> {
        (0..x.nrows())
            .map(|i| {
                let mut out = vec![0.0; self.k];
                self.predict_row(x.row(i), &mut out);
                out
            })
            .collect()
    }
}

/// Fit a multinomial logistic regression on classes `0..k` by Newton's method.
pub fn fit_multinomial(
    x: &DesignMatrix,
    classes: &[usize],
    k: usize,
    w: Option<&[f64]>,
    opts: &MultinomialOptions,
) -> Result<MultinomialModel> {
    let n = x.nrows();
    if classes.len() != n {
        return Err(Error::Mismatch { what: "multinomial targets", expected: n, got: classes.len() });
    }
    if let Some(&c) = classes.iter().find(|&&c| c >= k) {
        return Err(Error::Data(format!("class {c} outside 0..{k}")));
    }
    let w = unit_weights(n, w)?;
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Data("multinomial fit needs positive total weight".into()));
    }
    let mut class_weight = vec![0.0; k];
    for (c, wi) in classes.iter().zip(&w) {
        class_weight[*c] += wi;
    }
    let mut supported = Vec::new();
    for c in 0..k {
        let flagged = opts.structural_zeros.contains(&c);
        if class_weight[c] > 0.0 {
            if !flagged {
                supported.push(c);
            } else {
                return Err(Error::Data(format!("class {c} is flagged structural zero but observed")));
            }
        } else if !flagged {
            return Err(Error::Data(format!(
                "class {c} has no observations and is not flagged as a structural zero"
            )));
        }
    }
    if supported.len() == 1 {
        return Ok(MultinomialModel {
            k,
            supported,
            coef: Vec::new(),
            report: FitReport { converged: true, ..FitReport::default() },
        });
    }

    let std = Standardizer::new(x, &w);
    let q = std.dim();
    let z = std.matrix(x);
    let kk = supported.len() - 1;
    let dim = kk * q;
    let mut pos = vec![usize::MAX; k];
    for (s, &c) in supported.iter().enumerate() {
        pos[c] = s;
    }
    let class_pos: Vec<usize> = classes.iter().map(|&c| pos[c]).collect();

    let softmax = |gamma: &[f64], row: &[f64], probs: &mut [f64]| {
        probs[0] = 0.0;
        for j in 0..kk {
            probs[j + 1] = row.iter().zip(&gamma[j * q..(j + 1) * q]).map(|(a, b)| a * b).sum();
        }
        let m = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for p in probs.iter_mut() {
            *p = (*p - m).exp();
            s += *p;
        }
        probs.iter_mut().for_each(|p| *p /= s);
    };

    let mut ridge = opts.glm.ridge;
    let mut warnings = Vec::new();
    loop {
        let mut gamma = vec![0.0; dim];
        if let Some(ic) = std.intercept {
            let ref_w = class_weight[supported[0]];
            for j in 0..kk {
                gamma[j * q + ic] = (class_weight[supported[j + 1]] / ref_w).ln() / std.intercept_value;
            }
        }
        let penalized = |idx: usize| std.is_penalized(idx % q);
        let objective = |gamma: &[f64]| -> f64 {
            let mut probs = vec![0.0; kk + 1];
            let mut ll = 0.0;
            for i in 0..n {
                if w[i] == 0.0 {
                    continue;
                }
                softmax(gamma, &z[i * q..(i + 1) * q], &mut probs);
                ll += w[i] * probs[class_pos[i]].max(1e-300).ln();
            }
            let pen: f64 = (0..dim).filter(|&d| penalized(d)).map(|d| gamma[d] * gamma[d]).sum();
            ll / total - 0.5 * ridge * pen
        };
        let mut obj = objective(&gamma);
        let mut iterations = 0;
        let mut probs = vec![0.0; kk + 1];
        let mut outer = vec![0.0; q * q];
        let (converged, singular, max_score) = loop {
            let mut g = DVector::<f64>::zeros(dim);
            let mut h = DMatrix::<f64>::zeros(dim, dim);
            for i in 0..n {
                if w[i] == 0.0 {
                    continue;
                }
                let row = &z[i * q..(i + 1) * q];
                softmax(&gamma, row, &mut probs);
                for a in 0..q {
                    for b in a..q {
                        outer[a * q + b] = w[i] * row[a] * row[b];
                    }
                }
                for j in 0..kk {
                    let yj = if class_pos[i] == j + 1 { 1.0 } else { 0.0 };
                    let r = w[i] * (yj - probs[j + 1]);
                    for a in 0..q {
                        g[j * q + a] += r * row[a];
                    }
                    for l in j..kk {
                        let c = probs[j + 1] * (if l == j { 1.0 } else { 0.0 } - probs[l + 1]);
                        if c == 0.0 {
                            continue;
                        }
                        for a in 0..q {
                            for b in a..q {
                                let v = c * outer[a * q + b];
                                h[(j * q + a, l * q + b)] += v;
                                if l != j && a != b {
                                    h[(j * q + b, l * q + a)] += v;
                                }
                            }
                        }
                    }
                }
            }
            // Complete the symmetric Hessian from the accumulated blocks.
            for j in 0..kk {
                for a in 0..q {
                    for b in (a + 1)..q {
                        h[(j * q + b, j * q + a)] = h[(j * q + a, j * q + b)];
                    }
                }
                for l in (j + 1)..kk {
                    for a in 0..q {
                        for b in 0..q {
                            h[(l * q + b, j * q + a)] = h[(j * q + a, l * q + b)];
                        }
                    }
                }
            }
            h /= total;
            g /= total;
            for d in 0..dim {
                if penalized(d) {
                    g[d] -= ridge * gamma[d];
                    h[(d, d)] += ridge;
                }
            }
            let max_score = g.amax();
            if max_score < opts.glm.tol {
                break (true, false, max_score);
            }
            if iterations >= opts.glm.max_iter {
                break (false, false, max_score);
            }
            let Some(step) = solve_spd(h, g) else {
                break (false, true, max_score);
            };
            iterations += 1;
            let mut t = 1.0;
            loop {
                let cand: Vec<f64> = gamma.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
                let cand_obj = objective(&cand);
                if cand_obj >= obj - 1e-15 * obj.abs().max(1.0) || t < 1e-10 {
                    gamma = cand;
                    obj = cand_obj;
                    break;
                }
                t *= 0.5;
            }
        };
        let max_coef = (0..dim).filter(|&d| penalized(d)).map(|d| gamma[d].abs()).fold(0.0, f64::max);
        let separated = max_coef > opts.glm.separation_bound;
        if (singular || separated) && ridge < 1e3 {
            let next = if ridge <= 0.0 { opts.glm.ridge_fallback } else { ridge * 10.0 };
            warnings.push(format!(
                "{} at ridge {ridge:e}; escalating ridge to {next:e}",
                if singular { "singular Hessian" } else { "separation detected" }
            ));
            ridge = next;
            continue;
        }
        if !converged {
            warnings.push(format!(
                "multinomial Newton did not converge after {iterations} iterations (max score {max_score:e})"
            ));
        }
        let coef = (0..kk)
            .map(|j| std.to_original(&gamma[j * q..(j + 1) * q], x.ncols()))
            .collect();
        return Ok(MultinomialModel {
            k,
            supported,
            coef,
            report: FitReport { iterations, converged, ridge, max_score, warnings },
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_design(n: usize, p: usize, seed: u64) -> (DesignMatrix, Vec<f64>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let mut r = vec![1.0];
                r.extend((1..p).map(|_| rng.random::<f64>() * 2.0 - 1.0));
                r
            })
            .collect();
        let x = DesignMatrix::from_rows(&rows);
        let y = (0..n)
            .map(|i| {
                let eta = 0.3 + x.row(i)[1..].iter().sum::<f64>();
                f64::from(rng.random::<f64>() < expit(eta))
            })
            .collect();
        (x, y)
    }

    #[test]
    fn intercept_only_matches_logit_of_mean() {
        let x = DesignMatrix::intercept(8);
        let y = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        let m = fit_logistic(&x, &y, None, &GlmOptions::default()).unwrap();
        assert!((m.coef[0] - (0.25f64 / 0.75).ln()).abs() < 1e-8);
        assert!((m.coef[0] + 1.0986122886681098).abs() < 1e-8);
        assert!(m.report.converged);
    }

    #[test]
    fn score_vanishes_at_convergence() {
        let (x, y) = random_design(500, 4, 3);
        let m = fit_logistic(&x, &y, None, &GlmOptions::default()).unwrap();
        assert!(m.report.converged);
        let g = logistic_gradient(&x, &y, None, &m.coef);
        assert!(g.iter().all(|v| v.abs() < 1e-8), "{g:?}");
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (x, y) = random_design(200, 4, 11);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let beta: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let g = logistic_gradient(&x, &y, None, &beta);
            for j in 0..4 {
                let h = 1e-5;
                let mut bp = beta.clone();
                let mut bm = beta.clone();
                bp[j] += h;
                bm[j] -= h;
                let fd = (logistic_loglik(&x, &y, None, &bp) - logistic_loglik(&x, &y, None, &bm)) / (2.0 * h);
                assert!((fd - g[j]).abs() <= 1e-6 * g[j].abs().max(1e-3), "{fd} vs {}", g[j]);
            }
        }
    }

    #[test]
    fn separated_data_escalates_ridge() {
        let x = DesignMatrix::from_rows(&[
            vec![1.0, -2.0],
            vec![1.0, -1.0],
            vec![1.0, 1.0],
            vec![1.0, 2.0],
        ]);
        let y = [0.0, 0.0, 1.0, 1.0];
        let m = fit_logistic(&x, &y, None, &GlmOptions::default()).unwrap();
        assert!(m.report.ridge >= 1e-4);
        assert!(m.report.warnings.iter().any(|w| w.contains("separation")));
        let p = m.predict(&x);
        assert!(p[0] < 0.5 && p[3] > 0.5);
    }

    #[test]
    fn constant_column_is_dropped() {
        let x = DesignMatrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0]]);
        let m = fit_logistic(&x, &[1.0, 0.0, 0.0, 1.0], None, &GlmOptions::default()).unwrap();
        assert!(m.coef[0].abs() < 1e-10);
        assert_eq!(m.coef[1], 0.0);
    }

    #[test]
    fn multinomial_intercept_only_matches_frequencies() {
        let classes: Vec<usize> = (0..10).map(|i| if i < 5 { 0 } else if i < 8 { 1 } else { 2 }).collect();
        let x = DesignMatrix::intercept(10);
        let m = fit_multinomial(&x, &classes, 3, None, &MultinomialOptions::default()).unwrap();
        let p = m.predict(&x);
        for (got, want) in p[0].iter().zip([0.5, 0.3, 0.2]) {
            assert!((got - want).abs() < 1e-8);
        }
    }

    #[test]
    fn multinomial_two_classes_equals_logistic() {
        let (x, y) = random_design(400, 3, 21);
        let classes: Vec<usize> = y.iter().map(|&v| v as usize).collect();
        let lm = fit_logistic(&x, &y, None, &GlmOptions::default()).unwrap();
        let mm = fit_multinomial(&x, &classes, 2, None, &MultinomialOptions::default()).unwrap();
        let pl = lm.predict(&x);
        let pm = mm.predict(&x);
        for (a, b) in pl.iter().zip(&pm) {
            assert!((a - b[1]).abs() < 1e-8);
        }
    }

    #[test]
    fn empty_class_needs_structural_flag() {
        let x = DesignMatrix::intercept(4);
        let classes = [0, 1, 0, 1];
        let err = fit_multinomial(&x, &classes, 3, None, &MultinomialOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
        let opts = MultinomialOptions { structural_zeros: vec![2], ..Default::default() };
        let m = fit_multinomial(&x, &classes, 3, None, &opts).unwrap();
        let p = m.predict(&x);
        assert_eq!(p[0][2], 0.0);
        assert!((p[0][0] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn multinomial_rows_sum_to_one() {
        let (x, y) = random_design(300, 3, 8);
        let classes: Vec<usize> = (0..300).map(|i| (y[i] as usize) * 2 + (i % 2)).collect();
        let m = fit_multinomial(&x, &classes, 4, None, &MultinomialOptions::default()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let mut out = vec![0.0; 4];
        for _ in 0..1000 {
            let row = [1.0, rng.random::<f64>() * 6.0 - 3.0, rng.random::<f64>() * 6.0 - 3.0];
            m.predict_row(&row, &mut out);
            assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
