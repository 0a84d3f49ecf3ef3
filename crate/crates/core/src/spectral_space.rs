//! Diagonal model of the state space.
//!
//! A separable Hilbert space `B` is represented through an orthonormal basis
//! `(h_k)`; a vector is its list of coefficients `c_k = ⟨x, h_k⟩_B`. The compact
//! operator `J` and the linear part `A` of the dynamics are both diagonal in
//! that basis:
//!
//! ```text
//! J h_k = λ_k h_k,   A h_k = μ_k h_k,   S_t h_k = exp(μ_k t) h_k
//! ```
//!
//! The range space `K = J(B)` carries the norm `‖x‖_K = ‖J⁻¹x‖_B`, so that
//! `e_k = λ_k h_k` is an orthonormal basis of `K`.

use std::f64::consts::PI;
use std::ops::{Add, Index, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::gauss_legendre_on;

#[derive(Debug, Error, PartialEq)]
pub enum BasisError {
    #[error("basis needs at least one mode")]
    Empty,
    #[error("lambda has {lambda} entries but mu has {mu}")]
    LengthMismatch { lambda: usize, mu: usize },
    #[error("lambda_{index} = {value} must be positive and finite")]
    NonPositiveLambda { index: usize, value: f64 },
    #[error("mu_{index} = {value} must be finite and <= 0")]
    PositiveMu { index: usize, value: f64 },
}

/// Failure of the Hilbert–Schmidt integrability check for the semigroup.
#[derive(Debug, Error, PartialEq)]
pub enum A6Error {
    #[error("lambda exponent {0} must lie in (0, 1/2)")]
    BadExponent(f64),
    #[error("horizon eps = {0} must be positive")]
    BadHorizon(f64),
    #[error(
        "integral is not finite under mode refinement: per-mode terms decay like k^-{decay_exponent:.3} (truncated estimate {estimate:.6})"
    )]
    NonIntegrable { estimate: f64, decay_exponent: f64 },
}

/// Coefficient vector of an element of `B`, implicitly zero past its length.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HilbertVector(Vec<f64>);

impl HilbertVector {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self(coeffs)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    /// The basis vector `h_k` (1-based mode index) in an `n`-mode space.
    pub fn basis_vector(n: usize, k: usize) -> Self {
        assert!(k >= 1 && k <= n, "mode index {k} outside 1..={n}");
        let mut v = vec![0.0; n];
        v[k - 1] = 1.0;
        Self(v)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.0
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Coefficient `k` (0-based), zero beyond the stored length.
    pub fn get(&self, k: usize) -> f64 {
        self.0.get(k).copied().unwrap_or(0.0)
    }

    /// Zero-pads (or truncates) to exactly `n` coefficients.
    pub fn resized(&self, n: usize) -> Self {
        let mut v = self.0.clone();
        v.resize(n, 0.0);
        Self(v)
    }

    pub fn norm_b(&self) -> f64 {
        norm_b(&self.0)
    }

    pub fn dot(&self, other: &Self) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.0.iter().map(|c| s * c).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }
}

impl From<Vec<f64>> for HilbertVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl From<&[f64]> for HilbertVector {
    fn from(v: &[f64]) -> Self {
        Self(v.to_vec())
    }
}

impl Index<usize> for HilbertVector {
    type Output = f64;
    fn index(&self, k: usize) -> &f64 {
        &self.0[k]
    }
}

impl Add for &HilbertVector {
    type Output = HilbertVector;
    fn add(self, rhs: &HilbertVector) -> HilbertVector {
        let n = self.len().max(rhs.len());
        HilbertVector((0..n).map(|k| self.get(k) + rhs.get(k)).collect())
    }
}

impl Sub for &HilbertVector {
    type Output = HilbertVector;
    fn sub(self, rhs: &HilbertVector) -> HilbertVector {
        let n = self.len().max(rhs.len());
        HilbertVector((0..n).map(|k| self.get(k) - rhs.get(k)).collect())
    }
}

/// `‖x‖_B` by Parseval.
pub fn norm_b(coeffs: &[f64]) -> f64 {
    coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// Inner product of two coefficient slices; the shorter one is zero-extended.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `‖a - b‖_B` for coefficient slices of possibly different length.
pub fn dist_b(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().max(b.len());
    (0..n)
        .map(|k| {
            let d = a.get(k).copied().unwrap_or(0.0) - b.get(k).copied().unwrap_or(0.0);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Named generators for the eigenvalues of `J`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum LambdaPreset {
    /// `λ_k = 1/k`.
    Harmonic,
    /// `λ_k = value` for every mode.
    Constant { value: f64 },
    /// `λ_k = k^-power`.
    Power { power: f64 },
    Explicit { values: Vec<f64> },
}

/// Named generators for the eigenvalues of `A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum MuPreset {
    /// Dirichlet Laplacian on `(0, 1)`: `μ_k = -π²k²`, scaled by `diffusivity`.
    #[serde(rename = "heat-1d")]
    Heat1d { diffusivity: f64 },
    /// `A = 0`.
    Zero,
    Explicit { values: Vec<f64> },
}

impl LambdaPreset {
    pub fn values(&self, n: usize) -> Vec<f64> {
        match self {
            Self::Harmonic => (1..=n).map(|k| 1.0 / k as f64).collect(),
            Self::Constant { value } => vec![*value; n],
            Self::Power { power } => (1..=n).map(|k| (k as f64).powf(-power)).collect(),
            Self::Explicit { values } => values.clone(),
        }
    }
}

impl MuPreset {
    pub fn values(&self, n: usize) -> Vec<f64> {
        match self {
            Self::Heat1d { diffusivity } => (1..=n)
                .map(|k| -diffusivity * PI * PI * (k * k) as f64)
                .collect(),
            Self::Zero => vec![0.0; n],
            Self::Explicit { values } => values.clone(),
        }
    }
}

/// Result of the quadrature check of `∫_0^ε t^{-2λ} ‖S_t‖²_HS dt`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct A6Estimate {
    /// Quadrature value over the represented modes.
    pub estimate: f64,
    /// Extrapolated contribution of modes beyond the represented ones.
    pub tail_estimate: f64,
    /// Fitted power-law decay of the per-mode contributions (`None` with fewer than four modes).
    pub decay_exponent: Option<f64>,
    /// Largest relative change of a per-mode integral under quadrature doubling.
    pub refinement_error: f64,
    pub converged: bool,
    pub per_mode: Vec<f64>,
}

/// Eigen-data of `J` and `A` on a shared orthonormal basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralBasis {
    lambda: Vec<f64>,
    mu: Vec<f64>,
}

impl SpectralBasis {
    pub fn new(lambda: Vec<f64>, mu: Vec<f64>) -> Result<Self, BasisError> {
        if lambda.is_empty() {
            return Err(BasisError::Empty);
        }
        if lambda.len() != mu.len() {
            return Err(BasisError::LengthMismatch {
                lambda: lambda.len(),
                mu: mu.len(),
            });
        }
        for (i, &l) in lambda.iter().enumerate() {
            if !(l > 0.0 && l.is_finite()) {
                return Err(BasisError::NonPositiveLambda { index: i + 1, value: l });
            }
        }
        for (i, &m) in mu.iter().enumerate() {
            if !(m <= 0.0 && m.is_finite()) {
                return Err(BasisError::PositiveMu { index: i + 1, value: m });
            }
        }
        Ok(Self { lambda, mu })
    }

    pub fn from_presets(
        n_modes: usize,
        lambda: &LambdaPreset,
        mu: &MuPreset,
    ) -> Result<Self, BasisError> {
        Self::new(lambda.values(n_modes), mu.values(n_modes))
    }

    /// Harmonic `λ_k = 1/k` with the 1-d Dirichlet heat operator.
    pub fn harmonic_heat(n_modes: usize) -> Self {
        Self::from_presets(
            n_modes,
            &LambdaPreset::Harmonic,
            &MuPreset::Heat1d { diffusivity: 1.0 },
        )
        .expect("preset is valid")
    }

    pub fn n_modes(&self) -> usize {
        self.lambda.len()
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// `‖x‖_K = sqrt(Σ (c_k/λ_k)²)`.
    pub fn norm_k(&self, coeffs: &[f64]) -> f64 {
        assert!(
            coeffs.len() <= self.n_modes(),
            "vector has {} modes, basis {}",
            coeffs.len(),
            self.n_modes()
        );
        coeffs
            .iter()
            .zip(&self.lambda)
            .map(|(c, l)| (c / l) * (c / l))
            .sum::<f64>()
            .sqrt()
    }

    pub fn apply_j(&self, x: &HilbertVector) -> HilbertVector {
        HilbertVector(x.0.iter().zip(&self.lambda).map(|(c, l)| c * l).collect())
    }

    pub fn apply_j_inv(&self, x: &HilbertVector) -> HilbertVector {
        HilbertVector(x.0.iter().zip(&self.lambda).map(|(c, l)| c / l).collect())
    }

    /// `S_t x`, coefficientwise `c_k exp(μ_k t)`.
    pub fn semigroup_apply(&self, t: f64, x: &HilbertVector) -> HilbertVector {
        assert!(t >= 0.0, "semigroup time must be nonnegative, got {t}");
        HilbertVector(
            x.0.iter()
                .zip(&self.mu)
                .map(|(c, m)| c * (m * t).exp())
                .collect(),
        )
    }

    /// `⟨x, A y⟩_B`.
    pub fn generator_pairing(&self, x: &[f64], y: &[f64]) -> f64 {
        x.iter()
            .zip(y)
            .zip(&self.mu)
            .map(|((a, b), m)| a * m * b)
            .sum()
    }

    /// Operator norm of the embedding `K → B`; equals `max_k λ_k` in the diagonal model.
    pub fn iota_operator_norm(&self) -> f64 {
        self.lambda.iter().copied().fold(f64::MIN, f64::max)
    }

    pub fn lambda_max(&self) -> f64 {
        self.iota_operator_norm()
    }

    /// `‖S_t‖²_HS = Σ_k exp(2 μ_k t)` over the represented modes.
    pub fn semigroup_hs_norm_sq(&self, t: f64) -> f64 {
        self.mu.iter().map(|m| (2.0 * m * t).exp()).sum()
    }

    /// Quadrature check that `∫_0^ε t^{-2λ} ‖S_t‖²_HS dt` is finite.
    ///
    /// Each mode contributes `∫_0^ε t^{-2λ} e^{2μ_k t} dt`, evaluated after the
    /// substitution `u = t^{1-2λ}` (which removes the endpoint singularity) with
    /// Gauss–Legendre panels graded geometrically towards `u = 0`. The mode tail
    /// is judged from a log-log fit of the last half of the per-mode values:
    /// a decay exponent at or below one means the sum diverges as modes are
    /// added.
    pub fn check_a6(
        &self,
        lambda_exp: f64,
        eps: f64,
        quad_points: usize,
    ) -> Result<A6Estimate, A6Error> {
        if !(lambda_exp > 0.0 && lambda_exp < 0.5) {
            return Err(A6Error::BadExponent(lambda_exp));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(A6Error::BadHorizon(eps));
        }
        let quad_points = quad_points.max(2);
        let coarse: Vec<f64> = self
            .mu
            .iter()
            .map(|&m| singular_mode_integral(m, lambda_exp, eps, quad_points))
            .collect();
        let fine: Vec<f64> = self
            .mu
            .iter()
            .map(|&m| singular_mode_integral(m, lambda_exp, eps, 2 * quad_points))
            .collect();
        let refinement_error = coarse
            .iter()
            .zip(&fine)
            .map(|(a, b)| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);
        let estimate: f64 = fine.iter().sum();

        let n = fine.len();
        let (decay_exponent, tail_estimate) = if n >= 4 {
            let p = fitted_decay(&fine[n / 2..], n / 2 + 1);
            if p <= 1.0 + TAIL_MARGIN {
                return Err(A6Error::NonIntegrable {
                    estimate,
                    decay_exponent: p,
                });
            }
            (Some(p), fine[n - 1] * n as f64 / (p - 1.0))
        } else {
            (None, 0.0)
        };
        Ok(A6Estimate {
            estimate,
            tail_estimate,
            decay_exponent,
            refinement_error,
            converged: refinement_error < 1e-8,
            per_mode: fine,
        })
    }
}

const TAIL_MARGIN: f64 = 0.05;
const GRADED_PANELS: i32 = 64;

// ∫_0^eps t^{-2a} e^{2 mu t} dt = 1/(1-2a) ∫_0^{eps^{1-2a}} exp(2 mu u^{1/(1-2a)}) du
fn singular_mode_integral(mu: f64, a: f64, eps: f64, points: usize) -> f64 {
    let q = 1.0 - 2.0 * a;
    let p = 1.0 / q;
    let upper = eps.powf(q);
    let f = |u: f64| (2.0 * mu * u.powf(p)).exp();
    let mut total = 0.0;
    let mut hi = upper;
    for _ in 0..GRADED_PANELS {
        let lo = 0.5 * hi;
        total += gauss_legendre_on(points, lo, hi).integrate(f);
        hi = lo;
    }
    total += gauss_legendre_on(points, 0.0, hi).integrate(f);
    total / q
}

// Least-squares slope of log(v) against log(k) for k = first_k, first_k+1, ...
fn fitted_decay(values: &[f64], first_k: usize) -> f64 {
    let pts: Vec<(f64, f64)> = values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > 0.0)
        .map(|(i, v)| (((first_k + i) as f64).ln(), v.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::INFINITY;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    -sxy / sxx
}
