//! Ordinary Kriging with an anisotropic Gaussian correlation.
//!
//! The model is `f(χ) = μ + ε(χ)` with `corr(ε(χ), ε(χ')) =
//! exp(-Σ_d θ_d (χ_d - χ'_d)²)` on inputs normalized to `[0, 1]`. The
//! correlation parameters maximize the concentrated log-likelihood over a
//! log-spaced coordinate grid search.
//!
//! When the samples form a full tensor grid (as the aerodynamic database
//! does) the correlation matrix is a Kronecker product of small per-axis
//! matrices. The likelihood search then works on the per-axis
//! eigendecompositions, and predictions contract the weight tensor axis by
//! axis instead of summing over every sample. The dense routes remain the
//! reference path and are used for scattered samples.
//!
//! The nugget is treated as a white-noise term of the correlation function,
//! so the predictor includes it at the sample sites and reproduces the
//! training data there.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_GRID_DIMS: usize = 4;
const MAX_GRID_LEVELS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KrigingSettings {
    pub log10_theta_min: f64,
    pub log10_theta_max: f64,
    /// Candidates per dimension in each coordinate sweep.
    pub grid_points: usize,
    /// Sweeps after the first, each on a grid three times finer around the
    /// incumbent.
    pub refinement_passes: usize,
    pub nugget: f64,
    pub max_nugget: f64,
}

impl Default for KrigingSettings {
    fn default() -> Self {
        Self {
            log10_theta_min: -2.0,
            log10_theta_max: 2.0,
            grid_points: 7,
            refinement_passes: 2,
            nugget: 1e-10,
            max_nugget: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrigingModel {
    /// Physical lower/upper bounds used for normalization.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Normalized training inputs, one row per sample.
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<f64>,
    pub theta: Vec<f64>,
    pub mean: f64,
    /// `R⁻¹ (y - μ̂ 1)`.
    pub weights: Vec<f64>,
    pub nugget: f64,
    pub log_likelihood: f64,
    /// Normalized per-axis levels when the samples form a row-major tensor grid.
    pub grid_levels: Option<Vec<Vec<f64>>>,
}

impl KrigingModel {
    pub fn fit(inputs: &[Vec<f64>], outputs: &[f64], settings: &KrigingSettings) -> Result<Self> {
        let n = inputs.len();
        if n == 0 || n != outputs.len() {
            return Err(Error::Kriging(format!(
                "need matching non-empty inputs/outputs, got {} and {}",
                n,
                outputs.len()
            )));
        }
        let dims = inputs[0].len();
        if dims == 0 || inputs.iter().any(|x| x.len() != dims) {
            return Err(Error::Kriging("inputs must share one non-zero dimension".into()));
        }
        if inputs.iter().flatten().chain(outputs).any(|v| !v.is_finite()) {
            return Err(Error::Kriging("non-finite training data".into()));
        }

        let mut lower = vec![f64::INFINITY; dims];
        let mut upper = vec![f64::NEG_INFINITY; dims];
        for x in inputs {
            for d in 0..dims {
                lower[d] = lower[d].min(x[d]);
                upper[d] = upper[d].max(x[d]);
            }
        }
        let norm: Vec<Vec<f64>> = inputs.iter().map(|x| normalize(x, &lower, &upper)).collect();
        let grid_levels = detect_tensor_grid(&norm);

        let evaluator = match &grid_levels {
            Some(levels) => Likelihood::Kronecker { levels },
            None => Likelihood::Dense { inputs: &norm },
        };
        let theta = search_theta(&evaluator, outputs, dims, settings);

        let mut nugget = settings.nugget;
        let (mut mean, mut weights, log_likelihood) = loop {
            match dense_solve(&norm, outputs, &theta, nugget) {
                Some(sol) => break sol,
                None if nugget * 10.0 <= settings.max_nugget * (1.0 + 1e-9) => {
                    log::warn!("kriging: correlation matrix singular at nugget {nugget:e}, retrying");
                    nugget *= 10.0;
                }
                None => {
                    return Err(Error::Kriging(format!(
                        "correlation matrix singular up to nugget {:e}",
                        settings.max_nugget
                    )))
                }
            }
        };

        // constant data is interpolated exactly by the mean alone
        if outputs.iter().all(|v| v.to_bits() == outputs[0].to_bits()) {
            mean = outputs[0];
            weights.iter_mut().for_each(|w| *w = 0.0);
        }

        Ok(Self {
            lower,
            upper,
            inputs: norm,
            outputs: outputs.to_vec(),
            theta,
            mean,
            weights,
            nugget,
            log_likelihood,
            grid_levels,
        })
    }

    pub fn dims(&self) -> usize {
        self.lower.len()
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        normalize(x, &self.lower, &self.upper)
    }

    /// Mean predictor at a physical input point.
    pub fn predict(&self, x: &[f64]) -> f64 {
        match &self.grid_levels {
            Some(levels) if levels.len() <= MAX_GRID_DIMS && levels.iter().all(|l| l.len() <= MAX_GRID_LEVELS) => {
                self.predict_separable(x, levels)
            }
            _ => self.predict_dense(x),
        }
    }

    /// Reference predictor summing the correlation with every sample.
    pub fn predict_dense(&self, x: &[f64]) -> f64 {
        let z = self.normalize(x);
        let mut sum = 0.0;
        for (xi, &w) in self.inputs.iter().zip(&self.weights) {
            sum += w * correlation(&z, xi, &self.theta);
            if *xi == z {
                sum += self.nugget * w;
            }
        }
        self.mean + sum
    }

    fn predict_separable(&self, x: &[f64], levels: &[Vec<f64>]) -> f64 {
        let mut r = [[0.0f64; MAX_GRID_LEVELS]; MAX_GRID_DIMS];
        // flat index of the sample this point coincides with, if any
        let mut site = Some(0usize);
        for (d, lv) in levels.iter().enumerate() {
            let span = self.upper[d] - self.lower[d];
            let z = if span > 0.0 { (x[d] - self.lower[d]) / span } else { 0.0 };
            let th = self.theta[d];
            let mut hit = None;
            for (k, &l) in lv.iter().enumerate() {
                let dz = z - l;
                r[d][k] = (-th * dz * dz).exp();
                if dz == 0.0 {
                    hit = Some(k);
                }
            }
            site = site.zip(hit).map(|(s, k)| s * lv.len() + k);
        }
        let jump = site.map_or(0.0, |i| self.nugget * self.weights[i]);
        let mut lens = [0usize; MAX_GRID_DIMS];
        for (l, lv) in lens.iter_mut().zip(levels) {
            *l = lv.len();
        }
        self.mean + contract(&self.weights, &r, &lens[..levels.len()]) + jump
    }

    /// Closed-form leave-one-out residuals `y_i - ŷ_{-i}` (with the mean
    /// re-estimated and θ held fixed).
    pub fn loo_residuals(&self) -> Result<Vec<f64>> {
        let n = self.inputs.len();
        let r = correlation_matrix(&self.inputs, &self.theta, self.nugget);
        let chol = r
            .cholesky()
            .ok_or_else(|| Error::Kriging("correlation matrix not positive definite".into()))?;
        let inv = chol.inverse();
        let ones = DVector::from_element(n, 1.0);
        let a = &inv * &ones;
        let denom = ones.dot(&a);
        Ok((0..n)
            .map(|i| {
                let diag = inv[(i, i)] - a[i] * a[i] / denom;
                self.weights[i] / diag
            })
            .collect())
    }
}

fn normalize(x: &[f64], lower: &[f64], upper: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(lower.iter().zip(upper))
        .map(|(&v, (&lo, &hi))| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 })
        .collect()
}

#[inline]
fn correlation(a: &[f64], b: &[f64], theta: &[f64]) -> f64 {
    let s: f64 = a
        .iter()
        .zip(b)
        .zip(theta)
        .map(|((&x, &y), &t)| t * (x - y) * (x - y))
        .sum();
    (-s).exp()
}

fn correlation_matrix(inputs: &[Vec<f64>], theta: &[f64], nugget: f64) -> DMatrix<f64> {
    let n = inputs.len();
    let mut r = DMatrix::zeros(n, n);
    for i in 0..n {
        r[(i, i)] = 1.0 + nugget;
        for j in 0..i {
            let c = correlation(&inputs[i], &inputs[j], theta);
            r[(i, j)] = c;
            r[(j, i)] = c;
        }
    }
    r
}

fn contract(w: &[f64], r: &[[f64; MAX_GRID_LEVELS]; MAX_GRID_DIMS], lens: &[usize]) -> f64 {
    fn rec(w: &[f64], r: &[[f64; MAX_GRID_LEVELS]], lens: &[usize]) -> f64 {
        let n = lens[0];
        if lens.len() == 1 {
            return w.iter().zip(&r[0][..n]).map(|(a, b)| a * b).sum();
        }
        let stride = w.len() / n;
        (0..n)
            .map(|i| r[0][i] * rec(&w[i * stride..(i + 1) * stride], &r[1..], &lens[1..]))
            .sum()
    }
    rec(w, &r[..lens.len()], lens)
}

/// Per-axis sorted unique levels if `inputs` enumerate their Cartesian
/// product in row-major order (last axis fastest).
fn detect_tensor_grid(inputs: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let dims = inputs.first()?.len();
    let mut levels = Vec::with_capacity(dims);
    for d in 0..dims {
        let mut lv: Vec<f64> = inputs.iter().map(|x| x[d]).collect();
        lv.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        lv.dedup();
        levels.push(lv);
    }
    let total: usize = levels.iter().map(Vec::len).product();
    if total != inputs.len() || dims < 2 {
        return None;
    }
    let mut idx = vec![0usize; dims];
    for x in inputs {
        if (0..dims).any(|d| x[d] != levels[d][idx[d]]) {
            return None;
        }
        for d in (0..dims).rev() {
            idx[d] += 1;
            if idx[d] < levels[d].len() {
                break;
            }
            idx[d] = 0;
        }
    }
    Some(levels)
}

enum Likelihood<'a> {
    Dense { inputs: &'a [Vec<f64>] },
    Kronecker { levels: &'a [Vec<f64>] },
}

impl Likelihood<'_> {
    /// Concentrated log-likelihood `-(n/2) ln σ̂² - ½ ln |R|`, or `None` when
    /// the regularized correlation matrix is not positive definite.
    fn eval(&self, y: &[f64], theta: &[f64], nugget: f64) -> Option<f64> {
        match self {
            Likelihood::Dense { inputs } => dense_solve(inputs, y, theta, nugget).map(|s| s.2),
            Likelihood::Kronecker { levels } => kron_likelihood(levels, y, theta, nugget),
        }
    }
}

fn concentrated(n: usize, sigma2: f64, log_det: f64) -> f64 {
    -0.5 * n as f64 * sigma2.max(1e-300).ln() - 0.5 * log_det
}

fn dense_solve(inputs: &[Vec<f64>], y: &[f64], theta: &[f64], nugget: f64) -> Option<(f64, Vec<f64>, f64)> {
    let n = inputs.len();
    let chol = correlation_matrix(inputs, theta, nugget).cholesky()?;
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let ones = DVector::from_element(n, 1.0);
    let yv = DVector::from_column_slice(y);
    let a = chol.solve(&ones);
    let b = chol.solve(&yv);
    let mean = ones.dot(&b) / ones.dot(&a);
    let w = b - a * mean;
    let resid = yv - ones * mean;
    let sigma2 = resid.dot(&w) / n as f64;
    if !(log_det.is_finite() && mean.is_finite()) {
        return None;
    }
    Some((mean, w.as_slice().to_vec(), concentrated(n, sigma2, log_det)))
}

fn kron_likelihood(levels: &[Vec<f64>], y: &[f64], theta: &[f64], nugget: f64) -> Option<f64> {
    let n = y.len();
    let mut vecs = Vec::with_capacity(levels.len());
    let mut vals = Vec::with_capacity(levels.len());
    for (lv, &th) in levels.iter().zip(theta) {
        let m = lv.len();
        let r = DMatrix::from_fn(m, m, |i, j| (-th * (lv[i] - lv[j]).powi(2)).exp());
        let eig = SymmetricEigen::new(r);
        vals.push(eig.eigenvalues.as_slice().to_vec());
        vecs.push(eig.eigenvectors);
    }
    let shape: Vec<usize> = levels.iter().map(Vec::len).collect();

    // eigenvalues of the Kronecker product, plus nugget
    let mut lambda = vec![1.0; n];
    let mut stride = n;
    for (d, v) in vals.iter().enumerate() {
        stride /= shape[d];
        for (idx, l) in lambda.iter_mut().enumerate() {
            *l *= v[(idx / stride) % shape[d]];
        }
    }
    let mut log_det = 0.0;
    for l in &mut lambda {
        *l += nugget;
        if !(*l > 0.0) {
            return None;
        }
        log_det += l.ln();
    }

    let solve = |v: &[f64]| -> Vec<f64> {
        let mut t = v.to_vec();
        for (d, q) in vecs.iter().enumerate() {
            t = mode_product(&t, &shape, d, q, true);
        }
        for (x, l) in t.iter_mut().zip(&lambda) {
            *x /= l;
        }
        for (d, q) in vecs.iter().enumerate() {
            t = mode_product(&t, &shape, d, q, false);
        }
        t
    };
    let ones = vec![1.0; n];
    let a = solve(&ones);
    let b = solve(y);
    let mean = b.iter().sum::<f64>() / a.iter().sum::<f64>();
    let sigma2 = y
        .iter()
        .zip(b.iter().zip(&a))
        .map(|(&yi, (&bi, &ai))| (yi - mean) * (bi - mean * ai))
        .sum::<f64>()
        / n as f64;
    if !mean.is_finite() {
        return None;
    }
    Some(concentrated(n, sigma2, log_det))
}

/// Multiplies a row-major tensor along `mode` by `q` (or `qᵀ`).
fn mode_product(t: &[f64], shape: &[usize], mode: usize, q: &DMatrix<f64>, transpose: bool) -> Vec<f64> {
    let m = shape[mode];
    let inner: usize = shape[mode + 1..].iter().product();
    let outer: usize = shape[..mode].iter().product();
    let mut out = vec![0.0; t.len()];
    for o in 0..outer {
        for i in 0..m {
            for k in 0..m {
                let c = if transpose { q[(k, i)] } else { q[(i, k)] };
                if c == 0.0 {
                    continue;
                }
                let src = (o * m + k) * inner;
                let dst = (o * m + i) * inner;
                for s in 0..inner {
                    out[dst + s] += c * t[src + s];
                }
            }
        }
    }
    out
}

fn search_theta(eval: &Likelihood<'_>, y: &[f64], dims: usize, s: &KrigingSettings) -> Vec<f64> {
    let points = s.grid_points.max(2);
    let mut step = (s.log10_theta_max - s.log10_theta_min) / (points - 1) as f64;
    let mut log_theta = vec![0.0f64.clamp(s.log10_theta_min, s.log10_theta_max); dims];
    let to_theta = |lt: &[f64]| lt.iter().map(|v| 10f64.powf(*v)).collect::<Vec<_>>();
    let score = |lt: &[f64]| eval.eval(y, &to_theta(lt), s.nugget);
    let mut best = score(&log_theta).unwrap_or(f64::NEG_INFINITY);

    for pass in 0..=s.refinement_passes {
        for d in 0..dims {
            let candidates: Vec<f64> = if pass == 0 {
                (0..points).map(|k| s.log10_theta_min + step * k as f64).collect()
            } else {
                let half = (points / 2) as f64;
                (0..points)
                    .map(|k| log_theta[d] + step * (k as f64 - half))
                    .filter(|v| *v >= s.log10_theta_min - 1e-12 && *v <= s.log10_theta_max + 1e-12)
                    .collect()
            };
            for c in candidates {
                let mut trial = log_theta.clone();
                trial[d] = c;
                if let Some(ll) = score(&trial) {
                    if ll > best {
                        best = ll;
                        log_theta = trial;
                    }
                }
            }
        }
        step /= 3.0;
    }
    to_theta(&log_theta)
}
