//! Drift, diffusion and jump coefficients, together with the mollified
//! Galerkin approximants and the radial truncations built from them.
//!
//! Coefficients act on coefficient vectors of the diagonal model. The jump
//! coefficient takes a mark `y ∈ ℝ^d` and the state; the diffusion coefficient
//! is a finite matrix from noise modes to state modes.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generator::TruncationSpec;
use crate::noise::JumpMeasureSpec;
use crate::quadrature::gauss_for_weight;
use crate::spectral_space::{dist_b, HilbertVector, SpectralBasis};

#[derive(Debug, Error, PartialEq)]
pub enum CoefficientError {
    #[error("approximation index {n} exceeds the {modes} represented modes")]
    IndexTooLarge { n: usize, modes: usize },
    #[error("approximation index must be at least 1")]
    ZeroIndex,
    #[error("quadrature rule has dimension {rule}, expected {expected}")]
    DimensionMismatch { rule: usize, expected: usize },
}

/// `σ(x)`: a linear map from noise modes into state coefficients.
#[derive(Debug, Clone, PartialEq)]
pub enum Diffusion {
    Zero { modes: usize, noise: usize },
    /// Noise mode `k` drives state mode `k` with the given gain.
    Diagonal(Vec<f64>),
    Dense(DMatrix<f64>),
}

impl Diffusion {
    pub fn modes(&self) -> usize {
        match self {
            Self::Zero { modes, .. } => *modes,
            Self::Diagonal(d) => d.len(),
            Self::Dense(m) => m.nrows(),
        }
    }

    pub fn noise_dim(&self) -> usize {
        match self {
            Self::Zero { noise, .. } => *noise,
            Self::Diagonal(d) => d.len(),
            Self::Dense(m) => m.ncols(),
        }
    }

    /// `out += σ dw`.
    pub fn apply_add(&self, dw: &[f64], out: &mut [f64]) {
        match self {
            Self::Zero { .. } => {}
            Self::Diagonal(d) => {
                for ((o, g), w) in out.iter_mut().zip(d).zip(dw) {
                    *o += g * w;
                }
            }
            Self::Dense(m) => {
                for (r, o) in out.iter_mut().enumerate().take(m.nrows()) {
                    *o += (0..m.ncols()).map(|c| m[(r, c)] * dw[c]).sum::<f64>();
                }
            }
        }
    }

    /// `⟨σσ* y, y⟩_B = ‖σ* y‖²`.
    pub fn quadratic_form(&self, y: &[f64]) -> f64 {
        match self {
            Self::Zero { .. } => 0.0,
            Self::Diagonal(d) => d.iter().zip(y).map(|(g, v)| (g * v) * (g * v)).sum(),
            Self::Dense(m) => (0..m.ncols())
                .map(|c| {
                    let s: f64 = (0..m.nrows().min(y.len())).map(|r| m[(r, c)] * y[r]).sum();
                    s * s
                })
                .sum(),
        }
    }

    /// `⟨σσ* y, z⟩_B`.
    pub fn bilinear_form(&self, y: &[f64], z: &[f64]) -> f64 {
        match self {
            Self::Zero { .. } => 0.0,
            Self::Diagonal(d) => d
                .iter()
                .zip(y)
                .zip(z)
                .map(|((g, a), b)| g * g * a * b)
                .sum(),
            Self::Dense(m) => (0..m.ncols())
                .map(|c| {
                    let sy: f64 = (0..m.nrows().min(y.len())).map(|r| m[(r, c)] * y[r]).sum();
                    let sz: f64 = (0..m.nrows().min(z.len())).map(|r| m[(r, c)] * z[r]).sum();
                    sy * sz
                })
                .sum(),
        }
    }

    /// Hilbert–Schmidt norm as a map into `K`: `sqrt(Σ_{k,j} (σ_kj/λ_k)²)`.
    pub fn hs_norm_k(&self, lambda: &[f64]) -> f64 {
        match self {
            Self::Zero { .. } => 0.0,
            Self::Diagonal(d) => d
                .iter()
                .zip(lambda)
                .map(|(g, l)| (g / l) * (g / l))
                .sum::<f64>()
                .sqrt(),
            Self::Dense(m) => {
                let mut s = 0.0;
                for r in 0..m.nrows() {
                    for c in 0..m.ncols() {
                        s += (m[(r, c)] / lambda[r]).powi(2);
                    }
                }
                s.sqrt()
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Self::Zero { modes, noise } => DMatrix::zeros(*modes, *noise),
            Self::Diagonal(d) => DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d)),
            Self::Dense(m) => m.clone(),
        }
    }

    /// Spectral norm `‖σ‖_{L(H,B)}`.
    pub fn operator_norm(&self) -> f64 {
        match self {
            Self::Zero { .. } => 0.0,
            Self::Diagonal(d) => d.iter().map(|g| g.abs()).fold(0.0, f64::max),
            Self::Dense(m) => m.singular_values().iter().copied().fold(0.0, f64::max),
        }
    }

    /// Spectral norm of `self - other`.
    pub fn operator_distance(&self, other: &Diffusion) -> f64 {
        match (self, other) {
            (Self::Diagonal(a), Self::Diagonal(b)) if a.len() == b.len() => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max),
            _ => {
                let diff = self.to_dense() - other.to_dense();
                diff.singular_values().iter().copied().fold(0.0, f64::max)
            }
        }
    }

    /// Weighted average `Σ w_i σ_i`.
    pub fn weighted_sum(parts: &[(f64, Diffusion)]) -> Diffusion {
        let Some((_, first)) = parts.first() else {
            return Diffusion::Zero { modes: 0, noise: 0 };
        };
        if parts.iter().all(|(_, d)| matches!(d, Diffusion::Zero { .. })) {
            return first.clone();
        }
        if parts.iter().all(|(_, d)| matches!(d, Diffusion::Diagonal(_) | Diffusion::Zero { .. })) {
            let mut acc = vec![0.0; first.modes()];
            for (w, d) in parts {
                if let Diffusion::Diagonal(g) = d {
                    for (a, v) in acc.iter_mut().zip(g) {
                        *a += w * v;
                    }
                }
            }
            return Diffusion::Diagonal(acc);
        }
        let mut acc = DMatrix::zeros(first.modes(), first.noise_dim());
        for (w, d) in parts {
            acc += d.to_dense() * *w;
        }
        Diffusion::Dense(acc)
    }
}

/// Declared linear-growth constant `L` of drift and diffusion on `K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthProfile {
    pub linear_growth: f64,
}

/// Evaluators for `b`, `σ` and `v`. Implementations must be pure.
pub trait CoefficientSet: Send + Sync {
    /// Number of state modes the evaluators write.
    fn n_modes(&self) -> usize;
    fn n_noise(&self) -> usize;
    /// Writes `b(x)` into `out` (length `n_modes`).
    fn drift(&self, x: &[f64], out: &mut [f64]);
    fn diffusion(&self, x: &[f64]) -> Diffusion;
    /// Writes `v(mark, x)` into `out`.
    fn jump(&self, mark: &[f64], x: &[f64], out: &mut [f64]);
    fn growth(&self) -> GrowthProfile;
    /// `γ(y)` with `‖v(y, x)‖_K ≤ γ(y)(1 + ‖x‖_K)`.
    fn jump_gamma(&self, mark: &[f64]) -> f64;
    /// `ζ_B(y)` with `sup_{‖x‖_B ≤ bound} ‖v(y, x)‖_B ≤ ζ_B(y)`.
    fn jump_zeta(&self, bound: f64, mark: &[f64]) -> f64;

    fn drift_vec(&self, x: &[f64]) -> HilbertVector {
        let mut out = vec![0.0; self.n_modes()];
        self.drift(x, &mut out);
        out.into()
    }

    fn jump_vec(&self, mark: &[f64], x: &[f64]) -> HilbertVector {
        let mut out = vec![0.0; self.n_modes()];
        self.jump(mark, x, &mut out);
        out.into()
    }
}

/// Built-in coefficient families, selectable by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum CatalogKind {
    /// `b = 0`, `σ = 0`, `v = 0`.
    Zero,
    /// Ornstein–Uhlenbeck noise: `b = 0`, `σ = noise_scale · Id`, `v = 0`.
    Ou { noise_scale: f64 },
    /// `b(x) = rate·x`, `σ(x) = noise_scale·diag(x)`, `v(y, x) = jump_scale·y₁·x`.
    Linear {
        rate: f64,
        noise_scale: f64,
        jump_scale: f64,
    },
    /// Smooth bounded coordinatewise maps:
    /// `b_k = amplitude·λ_k/k·tanh(x_k)`, `σ = noise_scale·Id`,
    /// `v_k(y, x) = jump_scale·y₁·λ_k/k·cos(x_k)`.
    BoundedNemytskii {
        amplitude: f64,
        noise_scale: f64,
        jump_scale: f64,
    },
    /// Bounded continuous drift on the first mode, `b = amplitude·sin(x₁)·h₁`,
    /// with cylindrical noise `σ = Id`.
    HeatDrift { amplitude: f64 },
}

/// A [`CatalogKind`] bound to a basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    kind: CatalogKind,
    lambda: Vec<f64>,
}

impl Catalog {
    pub fn new(kind: CatalogKind, basis: &SpectralBasis) -> Self {
        Self {
            kind,
            lambda: basis.lambda().to_vec(),
        }
    }

    pub fn kind(&self) -> &CatalogKind {
        &self.kind
    }

    fn inv_k_norm(&self) -> f64 {
        // sqrt(Σ 1/k²) over represented modes
        (1..=self.lambda.len())
            .map(|k| 1.0 / (k * k) as f64)
            .sum::<f64>()
            .sqrt()
    }

    fn identity_hs_k(&self) -> f64 {
        self.lambda.iter().map(|l| 1.0 / (l * l)).sum::<f64>().sqrt()
    }
}

impl CoefficientSet for Catalog {
    fn n_modes(&self) -> usize {
        self.lambda.len()
    }

    fn n_noise(&self) -> usize {
        self.lambda.len()
    }

    fn drift(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        match &self.kind {
            CatalogKind::Zero | CatalogKind::Ou { .. } => {}
            CatalogKind::Linear { rate, .. } => {
                for (o, c) in out.iter_mut().zip(x) {
                    *o = rate * c;
                }
            }
            CatalogKind::BoundedNemytskii { amplitude, .. } => {
                for (k, (o, l)) in out.iter_mut().zip(&self.lambda).enumerate() {
                    let c = x.get(k).copied().unwrap_or(0.0);
                    *o = amplitude * l / (k + 1) as f64 * c.tanh();
                }
            }
            CatalogKind::HeatDrift { amplitude } => {
                out[0] = amplitude * x.first().copied().unwrap_or(0.0).sin();
            }
        }
    }

    fn diffusion(&self, x: &[f64]) -> Diffusion {
        let n = self.lambda.len();
        match &self.kind {
            CatalogKind::Zero => Diffusion::Zero { modes: n, noise: n },
            CatalogKind::Ou { noise_scale }
            | CatalogKind::BoundedNemytskii { noise_scale, .. } => {
                Diffusion::Diagonal(vec![*noise_scale; n])
            }
            CatalogKind::Linear { noise_scale, .. } => Diffusion::Diagonal(
                (0..n)
                    .map(|k| noise_scale * x.get(k).copied().unwrap_or(0.0))
                    .collect(),
            ),
            CatalogKind::HeatDrift { .. } => Diffusion::Diagonal(vec![1.0; n]),
        }
    }

    fn jump(&self, mark: &[f64], x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let y = mark.first().copied().unwrap_or(0.0);
        match &self.kind {
            CatalogKind::Linear { jump_scale, .. } => {
                for (o, c) in out.iter_mut().zip(x) {
                    *o = jump_scale * y * c;
                }
            }
            CatalogKind::BoundedNemytskii { jump_scale, .. } => {
                for (k, (o, l)) in out.iter_mut().zip(&self.lambda).enumerate() {
                    let c = x.get(k).copied().unwrap_or(0.0);
                    *o = jump_scale * y * l / (k + 1) as f64 * c.cos();
                }
            }
            _ => {}
        }
    }

    fn growth(&self) -> GrowthProfile {
        let linear_growth = match &self.kind {
            CatalogKind::Zero => 0.0,
            CatalogKind::Ou { noise_scale } => noise_scale.abs() * self.identity_hs_k(),
            CatalogKind::Linear {
                rate, noise_scale, ..
            } => rate.abs() + noise_scale.abs(),
            CatalogKind::BoundedNemytskii {
                amplitude,
                noise_scale,
                ..
            } => amplitude.abs() * self.inv_k_norm() + noise_scale.abs() * self.identity_hs_k(),
            CatalogKind::HeatDrift { amplitude } => {
                amplitude.abs() / self.lambda[0] + self.identity_hs_k()
            }
        };
        GrowthProfile { linear_growth }
    }

    fn jump_gamma(&self, mark: &[f64]) -> f64 {
        let y = mark.first().copied().unwrap_or(0.0).abs();
        match &self.kind {
            CatalogKind::Linear { jump_scale, .. } => jump_scale.abs() * y,
            CatalogKind::BoundedNemytskii { jump_scale, .. } => {
                jump_scale.abs() * y * self.inv_k_norm()
            }
            _ => 0.0,
        }
    }

    fn jump_zeta(&self, bound: f64, mark: &[f64]) -> f64 {
        let y = mark.first().copied().unwrap_or(0.0).abs();
        match &self.kind {
            CatalogKind::Linear { jump_scale, .. } => jump_scale.abs() * y * bound,
            CatalogKind::BoundedNemytskii { jump_scale, .. } => {
                let s: f64 = self
                    .lambda
                    .iter()
                    .enumerate()
                    .map(|(k, l)| (l / (k + 1) as f64).powi(2))
                    .sum();
                jump_scale.abs() * y * s.sqrt()
            }
            _ => 0.0,
        }
    }
}

/// Adds a constant vector to the drift of another coefficient set.
pub struct ShiftedDrift<'a> {
    inner: &'a dyn CoefficientSet,
    shift: Vec<f64>,
}

impl<'a> ShiftedDrift<'a> {
    pub fn new(inner: &'a dyn CoefficientSet, shift: HilbertVector) -> Self {
        let shift = shift.resized(inner.n_modes()).into_coeffs();
        Self { inner, shift }
    }
}

impl CoefficientSet for ShiftedDrift<'_> {
    fn n_modes(&self) -> usize {
        self.inner.n_modes()
    }
    fn n_noise(&self) -> usize {
        self.inner.n_noise()
    }
    fn drift(&self, x: &[f64], out: &mut [f64]) {
        self.inner.drift(x, out);
        for (o, s) in out.iter_mut().zip(&self.shift) {
            *o += s;
        }
    }
    fn diffusion(&self, x: &[f64]) -> Diffusion {
        self.inner.diffusion(x)
    }
    fn jump(&self, mark: &[f64], x: &[f64], out: &mut [f64]) {
        self.inner.jump(mark, x, out)
    }
    fn growth(&self) -> GrowthProfile {
        let norm: f64 = self.shift.iter().map(|s| s * s).sum::<f64>().sqrt();
        GrowthProfile {
            linear_growth: self.inner.growth().linear_growth + norm,
        }
    }
    fn jump_gamma(&self, mark: &[f64]) -> f64 {
        self.inner.jump_gamma(mark)
    }
    fn jump_zeta(&self, bound: f64, mark: &[f64]) -> f64 {
        self.inner.jump_zeta(bound, mark)
    }
}

/// `ε_n = (1/n) · min_{k ≤ n} λ_k`.
pub fn epsilon_n(n: usize, basis: &SpectralBasis) -> Result<f64, CoefficientError> {
    check_index(n, basis.n_modes())?;
    let min = basis.lambda()[..n].iter().copied().fold(f64::INFINITY, f64::min);
    Ok(min / n as f64)
}

/// `θ_n x`: the first `n` coefficients.
pub fn project_theta(x: &HilbertVector, n: usize) -> Vec<f64> {
    (0..n).map(|k| x.get(k)).collect()
}

fn check_index(n: usize, modes: usize) -> Result<(), CoefficientError> {
    if n == 0 {
        return Err(CoefficientError::ZeroIndex);
    }
    if n > modes {
        return Err(CoefficientError::IndexTooLarge { n, modes });
    }
    Ok(())
}

/// Quadrature for `∫ φ(u) g(u) du` over the unit ball of `ℝ^n`, where `φ` is
/// the standard mollifier `φ(u) ∝ exp(-1/(1-|u|²))`.
///
/// Radii are the nodes of the Gauss rule for the weight `r^{n-1}φ(r)` on
/// `[0, 1]`; directions are the `2n` vertices `±e_i` of the cross-polytope, a spherical
/// 3-design. The rule is exact on constants and odd functions and reproduces
/// the isotropic second moments of `φ`.
#[derive(Debug, Clone, PartialEq)]
pub struct MollifierRule {
    dim: usize,
    /// Each node is stored as (axis, signed radius).
    nodes: Vec<(usize, f64)>,
    weights: Vec<f64>,
}

impl MollifierRule {
    pub fn new(dim: usize, radial_points: usize) -> Self {
        assert!(dim >= 1);
        let d = dim as i32;
        let radial = gauss_for_weight(radial_points.max(1), 0.0, 1.0, |r| {
            if r >= 1.0 {
                0.0
            } else {
                r.powi(d - 1) * (-1.0 / (1.0 - r * r)).exp()
            }
        });
        let raw = &radial.weights;
        let mut nodes = Vec::with_capacity(2 * dim * raw.len());
        let mut weights = Vec::with_capacity(nodes.capacity());
        for (&r, &w) in radial.nodes.iter().zip(raw) {
            for axis in 0..dim {
                for sign in [1.0, -1.0] {
                    nodes.push((axis, sign * r));
                    weights.push(w);
                }
            }
        }
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        Self {
            dim,
            nodes,
            weights,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Nodes as dense vectors in `ℝ^n`, with their weights.
    pub fn dense_nodes(&self) -> Vec<(Vec<f64>, f64)> {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&(axis, r), &w)| {
                let mut u = vec![0.0; self.dim];
                u[axis] = r;
                (u, w)
            })
            .collect()
    }
}

/// Default radial node count for mollifier rules.
pub const DEFAULT_RADIAL_POINTS: usize = 6;

/// The mollified approximants `b^n`, `σ^n`, `v^n` of a coefficient set.
///
/// `v^n(y, x) = ∫ φ(u) v(y, Σ_{i≤n} (⟨x, h_i⟩ + ε_n u_i) h_i) du`: the argument
/// keeps the first `n` coordinates of `x`, shifted by the mollifier node.
pub struct Mollified<'a> {
    inner: &'a dyn CoefficientSet,
    n: usize,
    eps_n: f64,
    rule: MollifierRule,
}

impl<'a> Mollified<'a> {
    pub fn new(
        inner: &'a dyn CoefficientSet,
        n: usize,
        basis: &SpectralBasis,
    ) -> Result<Self, CoefficientError> {
        let rule = MollifierRule::new(n.max(1), DEFAULT_RADIAL_POINTS);
        Self::with_rule(inner, n, basis, rule)
    }

    pub fn with_rule(
        inner: &'a dyn CoefficientSet,
        n: usize,
        basis: &SpectralBasis,
        rule: MollifierRule,
    ) -> Result<Self, CoefficientError> {
        let eps_n = epsilon_n(n, basis)?;
        if rule.dim() != n {
            return Err(CoefficientError::DimensionMismatch {
                rule: rule.dim(),
                expected: n,
            });
        }
        Ok(Self {
            inner,
            n,
            eps_n,
            rule,
        })
    }

    pub fn index(&self) -> usize {
        self.n
    }

    pub fn eps_n(&self) -> f64 {
        self.eps_n
    }

    pub fn rule(&self) -> &MollifierRule {
        &self.rule
    }

    fn base_point(&self, x: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.inner.n_modes()];
        for (zi, xi) in z.iter_mut().zip(x).take(self.n) {
            *zi = *xi;
        }
        z
    }

    fn for_each_node(&self, x: &[f64], mut f: impl FnMut(f64, &[f64])) {
        let mut z = self.base_point(x);
        for (&(axis, r), &w) in self.rule.nodes.iter().zip(&self.rule.weights) {
            let saved = z[axis];
            z[axis] = saved + self.eps_n * r;
            f(w, &z);
            z[axis] = saved;
        }
    }
}

impl CoefficientSet for Mollified<'_> {
    fn n_modes(&self) -> usize {
        self.inner.n_modes()
    }
    fn n_noise(&self) -> usize {
        self.inner.n_noise()
    }

    fn drift(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let mut buf = vec![0.0; out.len()];
        self.for_each_node(x, |w, z| {
            self.inner.drift(z, &mut buf);
            for (o, b) in out.iter_mut().zip(&buf) {
                *o += w * b;
            }
        });
    }

    fn diffusion(&self, x: &[f64]) -> Diffusion {
        let mut parts = Vec::with_capacity(self.rule.len());
        self.for_each_node(x, |w, z| parts.push((w, self.inner.diffusion(z))));
        Diffusion::weighted_sum(&parts)
    }

    fn jump(&self, mark: &[f64], x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let mut buf = vec![0.0; out.len()];
        self.for_each_node(x, |w, z| {
            self.inner.jump(mark, z, &mut buf);
            for (o, b) in out.iter_mut().zip(&buf) {
                *o += w * b;
            }
        });
    }

    fn growth(&self) -> GrowthProfile {
        self.inner.growth()
    }
    fn jump_gamma(&self, mark: &[f64]) -> f64 {
        self.inner.jump_gamma(mark)
    }
    fn jump_zeta(&self, bound: f64, mark: &[f64]) -> f64 {
        self.inner.jump_zeta(bound, mark)
    }
}

/// Radial truncation: evaluates the inner coefficients at `(1 ∧ m/‖x‖_K)·x`.
pub struct Truncated<'a> {
    inner: &'a dyn CoefficientSet,
    radius: f64,
    lambda: &'a [f64],
}

impl<'a> Truncated<'a> {
    pub fn new(inner: &'a dyn CoefficientSet, radius: f64, basis: &'a SpectralBasis) -> Self {
        assert!(radius > 0.0, "truncation radius must be positive");
        Self {
            inner,
            radius,
            lambda: basis.lambda(),
        }
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// `(1 ∧ m/‖x‖_K)`.
    pub fn scale(&self, x: &[f64]) -> f64 {
        let nk = x
            .iter()
            .zip(self.lambda)
            .map(|(c, l)| (c / l) * (c / l))
            .sum::<f64>()
            .sqrt();
        if nk <= self.radius {
            1.0
        } else {
            self.radius / nk
        }
    }

    fn with_scaled<R>(&self, x: &[f64], f: impl FnOnce(&[f64]) -> R) -> R {
        let s = self.scale(x);
        if s == 1.0 {
            f(x)
        } else {
            let z: Vec<f64> = x.iter().map(|c| s * c).collect();
            f(&z)
        }
    }
}

impl CoefficientSet for Truncated<'_> {
    fn n_modes(&self) -> usize {
        self.inner.n_modes()
    }
    fn n_noise(&self) -> usize {
        self.inner.n_noise()
    }
    fn drift(&self, x: &[f64], out: &mut [f64]) {
        self.with_scaled(x, |z| self.inner.drift(z, out))
    }
    fn diffusion(&self, x: &[f64]) -> Diffusion {
        self.with_scaled(x, |z| self.inner.diffusion(z))
    }
    fn jump(&self, mark: &[f64], x: &[f64], out: &mut [f64]) {
        self.with_scaled(x, |z| self.inner.jump(mark, z, out))
    }
    fn growth(&self) -> GrowthProfile {
        self.inner.growth()
    }
    fn jump_gamma(&self, mark: &[f64]) -> f64 {
        self.inner.jump_gamma(mark)
    }
    fn jump_zeta(&self, bound: f64, mark: &[f64]) -> f64 {
        self.inner.jump_zeta(bound, mark)
    }
}

/// `μ(x) = b(x) + ∫ (h(v(y,x)) − v(y,x)) F(dy)`, the drift seen by the
/// generator once small jumps are compensated through `h`.
pub fn compensated_drift(
    coeffs: &dyn CoefficientSet,
    x: &[f64],
    jumps: &JumpMeasureSpec,
    h: &TruncationSpec,
) -> HilbertVector {
    let mut mu = vec![0.0; coeffs.n_modes()];
    coeffs.drift(x, &mut mu);
    let mut v = vec![0.0; coeffs.n_modes()];
    for (mark, w) in jumps.quadrature() {
        coeffs.jump(mark, x, &mut v);
        if !h.is_identity_at(&v) {
            // h(v) - v = -v outside the threshold ball
            for (m, vi) in mu.iter_mut().zip(&v) {
                *m -= w * vi;
            }
        }
    }
    mu.into()
}

/// One row of [`convergence_scan`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanRow {
    pub n: usize,
    pub eps_n: f64,
    pub drift_distance: f64,
    pub diffusion_distance: f64,
    pub jump_distance: f64,
}

/// Sup-distances between the mollified approximants and the coefficients
/// over a finite grid of states (and marks, for the jump coefficient).
pub fn convergence_scan(
    coeffs: &dyn CoefficientSet,
    basis: &SpectralBasis,
    n_list: &[usize],
    grid: &[HilbertVector],
    marks: &[Vec<f64>],
) -> Result<Vec<ScanRow>, CoefficientError> {
    assert!(!grid.is_empty(), "convergence scan needs a nonempty grid");
    let modes = coeffs.n_modes();
    n_list
        .iter()
        .map(|&n| {
            let moll = Mollified::new(coeffs, n, basis)?;
            let mut row = ScanRow {
                n,
                eps_n: moll.eps_n(),
                drift_distance: 0.0,
                diffusion_distance: 0.0,
                jump_distance: 0.0,
            };
            for x in grid {
                let x = x.resized(modes);
                let xs = x.coeffs();
                let d = dist_b(moll.drift_vec(xs).coeffs(), coeffs.drift_vec(xs).coeffs());
                row.drift_distance = row.drift_distance.max(d);
                let s = moll.diffusion(xs).operator_distance(&coeffs.diffusion(xs));
                row.diffusion_distance = row.diffusion_distance.max(s);
                for y in marks {
                    let j = dist_b(moll.jump_vec(y, xs).coeffs(), coeffs.jump_vec(y, xs).coeffs());
                    row.jump_distance = row.jump_distance.max(j);
                }
            }
            Ok(row)
        })
        .collect()
}

/// Largest observed ratios of the mollified growth quantities to the bounds
/// `8γ²(y)(1+‖x‖²_K)` (jumps) and `8·max(L², 1)(1+‖x‖²_K)` (drift and
/// diffusion). Values at most one mean the bound held on every sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthAudit {
    pub n: usize,
    pub samples: usize,
    pub jump_violations: usize,
    pub drift_violations: usize,
    pub worst_jump_excess: f64,
    pub worst_drift_excess: f64,
}

pub fn audit_mollified_growth(
    coeffs: &dyn CoefficientSet,
    basis: &SpectralBasis,
    n: usize,
    samples: &[(Vec<f64>, HilbertVector)],
    tolerance: f64,
) -> Result<GrowthAudit, CoefficientError> {
    let moll = Mollified::new(coeffs, n, basis)?;
    let l = coeffs.growth().linear_growth;
    let mut audit = GrowthAudit {
        n,
        samples: samples.len(),
        jump_violations: 0,
        drift_violations: 0,
        worst_jump_excess: f64::NEG_INFINITY,
        worst_drift_excess: f64::NEG_INFINITY,
    };
    for (y, x) in samples {
        let x = x.resized(coeffs.n_modes());
        let xs = x.coeffs();
        let nk2 = basis.norm_k(xs).powi(2);

        let v = moll.jump_vec(y, xs);
        let lhs = basis.norm_k(v.coeffs()).powi(2);
        let rhs = 8.0 * coeffs.jump_gamma(y).powi(2) * (1.0 + nk2);
        audit.worst_jump_excess = audit.worst_jump_excess.max(lhs - rhs);
        if lhs > rhs + tolerance {
            audit.jump_violations += 1;
        }

        let b = moll.drift_vec(xs);
        let lhs = basis.norm_k(b.coeffs()).powi(2) + moll.diffusion(xs).hs_norm_k(basis.lambda()).powi(2);
        let rhs = 8.0 * (l * l).max(1.0) * (1.0 + nk2);
        audit.worst_drift_excess = audit.worst_drift_excess.max(lhs - rhs);
        if lhs > rhs + tolerance {
            audit.drift_violations += 1;
        }
    }
    Ok(audit)
}

/// Empirical Lipschitz constant of `b^n` in `K` over pairs inside the
/// `K`-ball of radius `m` (the constants exist but are not explicit).
pub fn estimate_drift_lipschitz(
    coeffs: &dyn CoefficientSet,
    basis: &SpectralBasis,
    n: usize,
    m: f64,
    pairs: &[(HilbertVector, HilbertVector)],
) -> Result<f64, CoefficientError> {
    let moll = Mollified::new(coeffs, n, basis)?;
    let trunc = Truncated::new(&moll, m, basis);
    let modes = coeffs.n_modes();
    let mut best: f64 = 0.0;
    for (a, b) in pairs {
        let (a, b) = (a.resized(modes), b.resized(modes));
        let dx = basis.norm_k((&a - &b).coeffs());
        if dx == 0.0 {
            continue;
        }
        let diff = &trunc.drift_vec(a.coeffs()) - &trunc.drift_vec(b.coeffs());
        best = best.max(basis.norm_k(diff.coeffs()) / dx);
    }
    Ok(best)
}
