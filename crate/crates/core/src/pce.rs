//! Non-intrusive polynomial chaos for uniformly distributed parameters.
//!
//! Each uncertain parameter `ξ_j ~ U(a_j, b_j)` is mapped to a standard
//! variable on `[-1, 1]`, where the Legendre polynomials are orthogonal under
//! the density `ρ = 1/2`. Expansion coefficients are obtained by spectral
//! projection on a tensor-product Gauss–Legendre grid, and the mean and
//! standard deviation of a quantity follow directly from the coefficients.
//!
//! For more than one parameter the basis is the total-degree set of tensor
//! products `Π P_{α_j}(ξ_j)` with `|α| <= p`, ordered by total degree and then
//! lexicographically (descending in the first index). With `q = 1` this is the
//! natural order `P_0, …, P_p`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NEWTON_TOL: f64 = 1e-14;
const NEWTON_MAX_ITER: usize = 100;

/// Value of the Legendre polynomial `P_order(x)` by the three-term recurrence.
///
/// `x` is clamped to `[-1, 1]`.
pub fn legendre_eval(order: usize, x: f64) -> f64 {
    legendre_with_prev(order, x.clamp(-1.0, 1.0)).0
}

/// Returns `(P_n(x), P_{n-1}(x))`; `P_{-1}` is taken as 0.
fn legendre_with_prev(n: usize, x: f64) -> (f64, f64) {
    let mut p_prev = 0.0;
    let mut p = 1.0;
    for k in 1..=n {
        let kf = k as f64;
        let next = ((2.0 * kf - 1.0) * x * p - (kf - 1.0) * p_prev) / kf;
        p_prev = p;
        p = next;
    }
    (p, p_prev)
}

/// `⟨P_i²⟩ = 1/(2i+1)` under the probability density `1/2` on `[-1, 1]`.
pub fn basis_norm(degree: usize) -> f64 {
    1.0 / (2.0 * degree as f64 + 1.0)
}

/// One-dimensional univariate family of polynomials orthogonal under a
/// probability density on the standard interval.
pub trait OrthogonalFamily: Send + Sync {
    fn eval(&self, degree: usize, x: f64) -> f64;
    fn norm_sq(&self, degree: usize) -> f64;
}

/// Legendre polynomials, paired with the uniform distribution.
#[derive(Debug, Clone, Copy, Default)]
pub struct Legendre;

impl OrthogonalFamily for Legendre {
    fn eval(&self, degree: usize, x: f64) -> f64 {
        legendre_eval(degree, x)
    }

    fn norm_sq(&self, degree: usize) -> f64 {
        basis_norm(degree)
    }
}

/// Gauss–Legendre nodes and raw weights on `[-1, 1]` (weights sum to 2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `∫_{-1}^{1} f(x) dx` approximated by the rule.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// `l`-point Gauss–Legendre rule, exact for polynomials up to degree `2l-1`.
///
/// Nodes are the roots of `P_l`, found by Newton iteration from Chebyshev-type
/// initial guesses; the rule is symmetrized so that `nodes[i] == -nodes[l-1-i]`.
pub fn gauss_legendre_rule(l: usize) -> Result<QuadratureRule> {
    if l == 0 {
        return Err(Error::EmptyQuadrature);
    }
    let n = l as f64;
    let half = l.div_ceil(2);
    // positive roots, largest first
    let mut roots = Vec::with_capacity(half);
    for k in 1..=half {
        let mut x = (std::f64::consts::PI * (k as f64 - 0.25) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..NEWTON_MAX_ITER {
            let (p, p_prev) = legendre_with_prev(l, x);
            dp = n * (x * p - p_prev) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < NEWTON_TOL {
                break;
            }
        }
        // refresh the derivative at the converged root
        let (p, p_prev) = legendre_with_prev(l, x);
        if x.abs() < 1.0 {
            dp = n * (x * p - p_prev) / (x * x - 1.0);
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        roots.push((x, w));
    }

    let mut nodes = vec![0.0; l];
    let mut weights = vec![0.0; l];
    for (k, &(x, w)) in roots.iter().enumerate() {
        let hi = l - 1 - k;
        if hi == k {
            // middle node of an odd rule
            nodes[k] = 0.0;
            weights[k] = w;
        } else {
            nodes[hi] = x;
            nodes[k] = -x;
            weights[hi] = w;
            weights[k] = w;
        }
    }
    Ok(QuadratureRule { nodes, weights })
}

/// Distribution of the uncertain parameters and the quadrature configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySpec {
    /// Physical `[a_j, b_j]` bounds of each uniform parameter.
    pub bounds: Vec<(f64, f64)>,
    /// Gauss points per dimension (`l`).
    pub quad_points: usize,
    /// Highest retained basis degree (`p`).
    pub order: usize,
}

impl UncertaintySpec {
    pub fn uniform(bounds: Vec<(f64, f64)>, quad_points: usize, order: usize) -> Result<Self> {
        let spec = Self {
            bounds,
            quad_points,
            order,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn dims(&self) -> usize {
        self.bounds.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.bounds.is_empty() {
            return Err(Error::Uncertainty("at least one parameter required".into()));
        }
        if self.quad_points == 0 {
            return Err(Error::Uncertainty("quad_points must be >= 1".into()));
        }
        for (j, &(a, b)) in self.bounds.iter().enumerate() {
            if !(a.is_finite() && b.is_finite()) || a > b {
                return Err(Error::Uncertainty(format!(
                    "bounds of parameter {j} must satisfy a <= b, got [{a}, {b}]"
                )));
            }
        }
        if self.order > 2 * self.quad_points - 1 {
            return Err(Error::Uncertainty(format!(
                "order {} exceeds 2l-1 = {} for exact projection",
                self.order,
                2 * self.quad_points - 1
            )));
        }
        Ok(())
    }
}

/// Total-degree multivariate basis built from a univariate family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PceBasis {
    indices: Vec<Vec<usize>>,
}

impl PceBasis {
    pub fn total_degree(dims: usize, order: usize) -> Self {
        let mut indices = Vec::new();
        for degree in 0..=order {
            let mut current = vec![0; dims];
            push_compositions(degree, 0, &mut current, &mut indices);
        }
        Self { indices }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn multi_index(&self, i: usize) -> &[usize] {
        &self.indices[i]
    }

    pub fn eval(&self, i: usize, point: &[f64]) -> f64 {
        self.indices[i]
            .iter()
            .zip(point)
            .map(|(&d, &x)| Legendre.eval(d, x))
            .product()
    }

    pub fn norm_sq(&self, i: usize) -> f64 {
        self.indices[i].iter().map(|&d| Legendre.norm_sq(d)).product()
    }
}

fn push_compositions(remaining: usize, dim: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if dim + 1 == current.len() {
        current[dim] = remaining;
        out.push(current.clone());
        current[dim] = 0;
        return;
    }
    for d in (0..=remaining).rev() {
        current[dim] = d;
        push_compositions(remaining - d, dim + 1, current, out);
    }
    current[dim] = 0;
}

/// One quadrature realization of the uncertain parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub index: usize,
    /// Physical parameter values.
    pub values: Vec<f64>,
    /// Corresponding points on the standard interval `[-1, 1]`.
    pub std_point: Vec<f64>,
    /// `Π w_j` with raw Gauss weights.
    pub raw_weight: f64,
    /// Weight under the uniform density; all scaled weights sum to 1.
    pub weight: f64,
}

impl Scenario {
    /// A single deterministic realization with unit weight.
    pub fn nominal(values: Vec<f64>) -> Self {
        let std_point = vec![0.0; values.len()];
        Self {
            index: 0,
            values,
            std_point,
            raw_weight: 1.0,
            weight: 1.0,
        }
    }
}

/// Full tensor grid of `M = l^q` scenarios with its projection basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub spec: UncertaintySpec,
    pub rule: QuadratureRule,
    pub basis: PceBasis,
    pub scenarios: Vec<Scenario>,
}

/// Builds the tensor-product grid; the first parameter varies slowest.
pub fn tensor_grid(spec: &UncertaintySpec) -> Result<ScenarioSet> {
    spec.validate()?;
    let rule = gauss_legendre_rule(spec.quad_points)?;
    let q = spec.dims();
    let l = spec.quad_points;
    let m = l.pow(q as u32);
    let density_scale = 0.5f64.powi(q as i32);

    let mut scenarios = Vec::with_capacity(m);
    let mut digits = vec![0usize; q];
    for index in 0..m {
        let mut rem = index;
        for j in (0..q).rev() {
            digits[j] = rem % l;
            rem /= l;
        }
        let std_point: Vec<f64> = digits.iter().map(|&s| rule.nodes[s]).collect();
        let values = std_point
            .iter()
            .zip(&spec.bounds)
            .map(|(&x, &(a, b))| a + (b - a) * (x + 1.0) / 2.0)
            .collect();
        let raw_weight: f64 = digits.iter().map(|&s| rule.weights[s]).product();
        scenarios.push(Scenario {
            index,
            values,
            std_point,
            raw_weight,
            weight: raw_weight * density_scale,
        });
    }

    Ok(ScenarioSet {
        spec: spec.clone(),
        rule,
        basis: PceBasis::total_degree(q, spec.order),
        scenarios,
    })
}

impl ScenarioSet {
    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.scenarios.iter().map(|s| s.weight)
    }
}

/// Spectral projection coefficient `x̃_i` of the sampled quantity.
pub fn project(samples: &[f64], index: usize, grid: &ScenarioSet) -> Result<f64> {
    if samples.len() != grid.len() {
        return Err(Error::SampleLength {
            expected: grid.len(),
            got: samples.len(),
        });
    }
    if index >= grid.basis.len() {
        return Err(Error::BasisIndex {
            index,
            len: grid.basis.len(),
        });
    }
    let norm = grid.basis.norm_sq(index);
    Ok(samples
        .iter()
        .zip(&grid.scenarios)
        .map(|(&f, s)| f * grid.basis.eval(index, &s.std_point) * s.weight)
        .sum::<f64>()
        / norm)
}

/// Expansion coefficients of one scalar quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PceCoefficients {
    pub coeffs: Vec<f64>,
    pub basis_norms: Vec<f64>,
}

impl PceCoefficients {
    pub fn from_samples(samples: &[f64], grid: &ScenarioSet) -> Result<Self> {
        let coeffs = (0..grid.basis.len())
            .map(|i| project(samples, i, grid))
            .collect::<Result<Vec<_>>>()?;
        let basis_norms = (0..grid.basis.len()).map(|i| grid.basis.norm_sq(i)).collect();
        Ok(Self { coeffs, basis_norms })
    }

    /// Coefficients in a one-dimensional Legendre basis of degree `coeffs.len()-1`.
    pub fn univariate(coeffs: Vec<f64>) -> Self {
        let basis_norms = (0..coeffs.len()).map(basis_norm).collect();
        Self { coeffs, basis_norms }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub std: f64,
}

/// Mean is the zeroth coefficient; variance is `Σ_{i>=1} ⟨φ_i²⟩ x̃_i²`.
pub fn moments(pce: &PceCoefficients) -> Moments {
    let mean = pce.coeffs.first().copied().unwrap_or(0.0);
    let var: f64 = pce
        .coeffs
        .iter()
        .zip(&pce.basis_norms)
        .skip(1)
        .map(|(&c, &n)| n * c * c)
        .sum();
    debug_assert!(var >= 0.0 || var.is_nan());
    Moments {
        mean,
        std: var.max(0.0).sqrt(),
    }
}

/// Convenience: project the samples and return their moments.
///
/// Identical samples are a constant function, whose expansion is exact: the
/// mean is that value and the standard deviation is exactly zero.
pub fn sample_moments(samples: &[f64], grid: &ScenarioSet) -> Result<Moments> {
    if samples.len() == grid.len() && samples.windows(2).all(|w| w[0].to_bits() == w[1].to_bits()) {
        if let Some(&v) = samples.first() {
            return Ok(Moments { mean: v, std: 0.0 });
        }
    }
    Ok(moments(&PceCoefficients::from_samples(samples, grid)?))
}
