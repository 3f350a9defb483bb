//! Soft-margin linear SVM trained by dual coordinate descent, plus
//! classification metrics.
//!
//! The bias is learned as the weight of a constant feature 1 appended to
//! every sample, so the objective is
//! `0.5 * (|w|^2 + b^2) + C * sum_i max(0, 1 - y_i (<w, x_i> + b))`.

mod metrics;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use metrics::{accuracy, confusion_matrix, MetricsError};

use crate::rng;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SvmError {
    #[error("invalid svm config: {0}")]
    Config(String),
    #[error("need at least two samples, got {0}")]
    TooFew(usize),
    #[error("only one class present in the labels")]
    SingleClass,
    #[error("class {0} has no samples")]
    MissingClass(usize),
    #[error("label {label} at row {row} is not -1 or +1")]
    BadLabel { row: usize, label: i8 },
    #[error("non-finite feature in row {0}")]
    NonFinite(usize),
    #[error("dimension mismatch: {0}")]
    Dim(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmConfig {
    pub c: f64,
    pub tol: f64,
    /// Maximum number of passes over the data.
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self { c: 1.0, tol: 1e-6, max_iter: 10_000, seed: 0 }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<(), SvmError> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(SvmError::Config(format!("c must be positive, got {}", self.c)));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(SvmError::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(SvmError::Config("max_iter must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub w: Vec<f64>,
    pub b: f64,
    pub c: f64,
    pub tol: f64,
    pub iters_run: usize,
    pub converged: bool,
}

impl LinearModel {
    pub fn decision(&self, x: &[f64]) -> Result<f64, SvmError> {
        if x.len() != self.w.len() {
            return Err(SvmError::Dim(format!("model has {} features, sample has {}", self.w.len(), x.len())));
        }
        Ok(dot(&self.w, x) + self.b)
    }

    /// `+1` or `-1`; points exactly on the hyperplane get `+1`.
    pub fn predict_one(&self, x: &[f64]) -> Result<i8, SvmError> {
        Ok(if self.decision(x)? >= 0.0 { 1 } else { -1 })
    }

    pub fn predict(&self, xs: &[Vec<f64>]) -> Result<Vec<i8>, SvmError> {
        xs.iter().map(|x| self.predict_one(x)).collect()
    }

    /// The objective the solver minimizes, evaluated at this model.
    pub fn primal_objective(&self, xs: &[Vec<f64>], ys: &[i8]) -> Result<f64, SvmError> {
        let mut hinge = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            hinge += (1.0 - y as f64 * self.decision(x)?).max(0.0);
        }
        Ok(0.5 * (dot(&self.w, &self.w) + self.b * self.b) + self.c * hinge)
    }
}

/// Result of [`fit`]: the model plus solver diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct SvmFit {
    pub model: LinearModel,
    /// Largest projected-gradient magnitude in the final pass.
    pub final_violation: f64,
    /// Dual objective after each pass.
    pub dual_objectives: Vec<f64>,
    /// Dual variables, one per sample.
    pub alpha: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

fn check_rows(xs: &[Vec<f64>]) -> Result<usize, SvmError> {
    let d = xs.first().map_or(0, Vec::len);
    for (i, x) in xs.iter().enumerate() {
        if x.len() != d {
            return Err(SvmError::Dim(format!("row {i} has {} features, row 0 has {d}", x.len())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SvmError::NonFinite(i));
        }
    }
    Ok(d)
}

/// Trains a binary classifier on labels in `{-1, +1}`.
pub fn fit(xs: &[Vec<f64>], ys: &[i8], cfg: &SvmConfig) -> Result<SvmFit, SvmError> {
    cfg.validate()?;
    if xs.len() != ys.len() {
        return Err(SvmError::Dim(format!("{} samples but {} labels", xs.len(), ys.len())));
    }
    if xs.len() < 2 {
        return Err(SvmError::TooFew(xs.len()));
    }
    if let Some((row, &label)) = ys.iter().enumerate().find(|(_, &y)| y != 1 && y != -1) {
        return Err(SvmError::BadLabel { row, label });
    }
    if ys.iter().all(|&y| y == ys[0]) {
        return Err(SvmError::SingleClass);
    }
    let d = check_rows(xs)?;
    let n = xs.len();
    let c = cfg.c;
    // Augmented weight vector: w followed by the bias.
    let mut w = vec![0.0; d + 1];
    let mut alpha = vec![0.0; n];
    let qii: Vec<f64> = xs.iter().map(|x| dot(x, x) + 1.0).collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut dual_objectives = Vec::new();
    let mut violation = f64::INFINITY;
    let mut iters = 0;
    let mut r = rng::stream(cfg.seed, &[rng::tag("svm")]);
    while iters < cfg.max_iter {
        iters += 1;
        order.shuffle(&mut r);
        violation = 0.0f64;
        for &i in &order {
            let (x, y) = (&xs[i], ys[i] as f64);
            let g = y * (dot(&w[..d], x) + w[d]) - 1.0;
            let pg = if alpha[i] == 0.0 {
                g.min(0.0)
            } else if alpha[i] == c {
                g.max(0.0)
            } else {
                g
            };
            violation = violation.max(pg.abs());
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / qii[i]).clamp(0.0, c);
                let step = (alpha[i] - old) * y;
                for (wj, xj) in w.iter_mut().zip(x) {
                    *wj += step * xj;
                }
                w[d] += step;
            }
        }
        dual_objectives.push(alpha.iter().sum::<f64>() - 0.5 * dot(&w, &w));
        if violation < cfg.tol {
            break;
        }
    }
    let b = w.pop().expect("bias slot");
    Ok(SvmFit {
        model: LinearModel {
            w,
            b,
            c,
            tol: cfg.tol,
            iters_run: iters,
            converged: violation < cfg.tol,
        },
        final_violation: violation,
        dual_objectives,
        alpha,
    })
}

/// One-vs-rest models, one per class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MulticlassModel {
    pub models: Vec<LinearModel>,
}

impl MulticlassModel {
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>, SvmError> {
        self.models.iter().map(|m| m.decision(x)).collect()
    }

    /// Class with the highest score; ties go to the lowest index.
    pub fn predict_one(&self, x: &[f64]) -> Result<usize, SvmError> {
        let s = self.scores(x)?;
        let mut best = 0;
        for (k, &v) in s.iter().enumerate() {
            if v > s[best] {
                best = k;
            }
        }
        Ok(best)
    }

    pub fn predict(&self, xs: &[Vec<f64>]) -> Result<Vec<usize>, SvmError> {
        xs.iter().map(|x| self.predict_one(x)).collect()
    }
}

/// Fits `k` one-vs-rest classifiers on labels `0..k`. All fits share the
/// same seed, so relabeling classes permutes the models exactly.
pub fn fit_multiclass(xs: &[Vec<f64>], ys: &[usize], k: usize, cfg: &SvmConfig) -> Result<MulticlassModel, SvmError> {
    if k < 2 {
        return Err(SvmError::Config(format!("need at least 2 classes, got {k}")));
    }
    if let Some(&bad) = ys.iter().find(|&&y| y >= k) {
        return Err(SvmError::Dim(format!("label {bad} out of range for {k} classes")));
    }
    if let Some(missing) = (0..k).find(|c| !ys.contains(c)) {
        return Err(SvmError::MissingClass(missing));
    }
    let models = (0..k)
        .into_par_iter()
        .map(|class| {
            let bin: Vec<i8> = ys.iter().map(|&y| if y == class { 1 } else { -1 }).collect();
            fit(xs, &bin, cfg).map(|f| f.model)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MulticlassModel { models })
}

/// Per-feature standardization fitted on a training set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(xs: &[Vec<f64>]) -> Result<Self, SvmError> {
        let d = check_rows(xs)?;
        if xs.is_empty() {
            return Err(SvmError::TooFew(0));
        }
        let n = xs.len() as f64;
        let mut mean = vec![0.0; d];
        for x in xs {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; d];
        for x in xs {
            for ((s, v), m) in var.iter_mut().zip(x).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let scale = var.into_iter().map(|v| if v > 0.0 { v.sqrt() } else { 1.0 }).collect();
        Ok(Self { mean, scale })
    }

    pub fn apply(&self, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        xs.iter()
            .map(|x| x.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s).collect())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d() -> (Vec<Vec<f64>>, Vec<i8>) {
        (vec![vec![-1.0], vec![1.0]], vec![-1, 1])
    }

    #[test]
    fn analytic_max_margin() {
        let (x, y) = one_d();
        let f = fit(&x, &y, &SvmConfig { c: 1e6, ..Default::default() }).unwrap();
        assert!((f.model.w[0] - 1.0).abs() < 1e-6);
        assert!(f.model.b.abs() < 1e-6);
        assert!(f.model.converged);
        assert_eq!(f.model.predict_one(&[3.0]).unwrap(), 1);
    }

    #[test]
    fn tie_goes_positive() {
        let m = LinearModel { w: vec![1.0], b: 0.0, c: 1.0, tol: 1e-6, iters_run: 0, converged: true };
        assert_eq!(m.predict_one(&[0.0]).unwrap(), 1);
        assert!(m.predict_one(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn rejects_bad_input() {
        let (x, _) = one_d();
        assert_eq!(fit(&x, &[1, 1], &SvmConfig::default()), Err(SvmError::SingleClass));
        assert!(matches!(fit(&[vec![f64::NAN], vec![1.0]], &[1, -1], &SvmConfig::default()), Err(SvmError::NonFinite(0))));
        assert!(matches!(fit(&x[..1], &[1], &SvmConfig::default()), Err(SvmError::TooFew(1))));
        assert!(matches!(fit(&x, &[1, 0], &SvmConfig::default()), Err(SvmError::BadLabel { .. })));
    }

    #[test]
    fn reports_non_convergence() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64).cos()]).collect();
        let y: Vec<i8> = (0..20).map(|i| if i % 3 == 0 { 1 } else { -1 }).collect();
        let f = fit(&x, &y, &SvmConfig { max_iter: 1, tol: 1e-12, ..Default::default() }).unwrap();
        assert!(!f.model.converged);
        assert_eq!(f.model.iters_run, 1);
        assert!(f.final_violation >= 1e-12);
    }

    #[test]
    fn json_fields() {
        let (x, y) = one_d();
        let m = fit(&x, &y, &SvmConfig::default()).unwrap().model;
        let v: serde_json::Value = serde_json::to_value(&m).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(keys, ["b", "c", "converged", "iters_run", "tol", "w"]);
    }

    #[test]
    fn multiclass_ties_lowest() {
        let m = LinearModel { w: vec![0.0], b: 0.0, c: 1.0, tol: 1e-6, iters_run: 0, converged: true };
        let mc = MulticlassModel { models: vec![m.clone(), m.clone(), m] };
        assert_eq!(mc.predict_one(&[1.0]).unwrap(), 0);
        assert_eq!(fit_multiclass(&[vec![0.0], vec![1.0]], &[0, 0], 2, &SvmConfig::default()), Err(SvmError::MissingClass(1)));
    }

    #[test]
    fn standardizer_centers() {
        let xs = vec![vec![1.0, 5.0], vec![3.0, 5.0]];
        let s = Standardizer::fit(&xs).unwrap();
        assert_eq!(s.apply(&xs), vec![vec![-1.0, 0.0], vec![1.0, 0.0]]);
    }
}
