//! Cylindrical test functions `f = g(⟨·, y*⟩)`, the generator `Kf`, and the
//! martingale process `M^f` along discretely observed paths.

use serde::{Deserialize, Serialize};

use crate::coefficients::{compensated_drift, CoefficientSet};
use crate::noise::{JumpMeasureSpec, RandomStream};
use crate::simulator::{NormKind, SamplePath};
use crate::spectral_space::{dot, norm_b, SpectralBasis};

/// `h(x) = x · 1{‖x‖_B ≤ threshold}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationSpec {
    pub threshold: f64,
}

impl Default for TruncationSpec {
    fn default() -> Self {
        Self { threshold: 1.0 }
    }
}

impl TruncationSpec {
    pub fn new(threshold: f64) -> Self {
        assert!(threshold > 0.0, "truncation threshold must be positive");
        Self { threshold }
    }

    pub fn is_identity_at(&self, v: &[f64]) -> bool {
        norm_b(v) <= self.threshold
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        if self.is_identity_at(v) {
            v.to_vec()
        } else {
            vec![0.0; v.len()]
        }
    }
}

/// Scalar profiles `g` with hand-coded derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum Profile {
    /// `exp(1 − 1/(1 − r²))` with `r = (u − center)/width`, zero for `|r| ≥ 1`.
    Bump { center: f64, width: f64 },
    /// `tanh(u/scale)`.
    Saturating { scale: f64 },
    /// `slope · u`; unbounded, used for pathwise identities.
    Linear { slope: f64 },
    /// `u²`; unbounded, used for hand-checked generator values.
    Quadratic,
}

impl Profile {
    /// `(g, g′, g″)` at `u`.
    pub fn eval(&self, u: f64) -> (f64, f64, f64) {
        match *self {
            Self::Bump { center, width } => {
                let r = (u - center) / width;
                let q = 1.0 - r * r;
                if q <= 0.0 {
                    return (0.0, 0.0, 0.0);
                }
                let phi = (1.0 - 1.0 / q).exp();
                let d1 = phi * (-2.0 * r / (q * q));
                let d2 = phi * (4.0 * r * r / q.powi(4) - 2.0 / (q * q) - 8.0 * r * r / q.powi(3));
                (phi, d1 / width, d2 / (width * width))
            }
            Self::Saturating { scale } => {
                let t = (u / scale).tanh();
                let s = 1.0 - t * t;
                (t, s / scale, -2.0 * t * s / (scale * scale))
            }
            Self::Linear { slope } => (slope * u, slope, 0.0),
            Self::Quadratic => (u * u, 2.0 * u, 2.0),
        }
    }

    pub fn value(&self, u: f64) -> f64 {
        self.eval(u).0
    }

    /// Whether `g ∈ C²_b`.
    pub fn is_bounded(&self) -> bool {
        matches!(self, Self::Bump { .. } | Self::Saturating { .. })
    }

    /// Sup norms of `g`, `g′`, `g″` (infinite for unbounded profiles).
    pub fn sup_norms(&self) -> [f64; 3] {
        match *self {
            Self::Bump { center, width } => {
                // fine sampling over the support; the bump is smooth so the
                // grid maximum is accurate to O(h²)
                let mut s = [0.0f64; 3];
                let n = 20_000;
                for i in 0..=n {
                    let u = center - width + 2.0 * width * i as f64 / n as f64;
                    let (a, b, c) = self.eval(u);
                    s[0] = s[0].max(a.abs());
                    s[1] = s[1].max(b.abs());
                    s[2] = s[2].max(c.abs());
                }
                s
            }
            Self::Saturating { scale } => {
                // |g″| peaks where tanh = 1/√3
                let t: f64 = 1.0 / 3f64.sqrt();
                [1.0, 1.0 / scale, 2.0 * t * (1.0 - t * t) / (scale * scale)]
            }
            Self::Linear { slope } => [f64::INFINITY, slope.abs(), 0.0],
            Self::Quadratic => [f64::INFINITY, f64::INFINITY, 2.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestFunction {
    pub profile: Profile,
    pub ystar: Vec<f64>,
}

impl TestFunction {
    pub fn new(profile: Profile, ystar: Vec<f64>) -> Self {
        Self { profile, ystar }
    }

    pub fn pairing(&self, x: &[f64]) -> f64 {
        dot(x, &self.ystar)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.profile.value(self.pairing(x))
    }
}

/// `Kf(x)`, with the drift term built from the compensated drift `μ`.
pub fn eval_generator(
    f: &TestFunction,
    x: &[f64],
    coeffs: &dyn CoefficientSet,
    basis: &SpectralBasis,
    spec: &JumpMeasureSpec,
    h: &TruncationSpec,
) -> f64 {
    let y = &f.ystar;
    let u = f.pairing(x);
    let (g, g1, g2) = f.profile.eval(u);
    let mu = compensated_drift(coeffs, x, spec, h);
    let drift = basis.generator_pairing(x, y) + dot(mu.coeffs(), y);
    let diffusion = coeffs.diffusion(x).quadratic_form(y);
    let mut jumps = 0.0;
    if !spec.is_empty() {
        let mut v = vec![0.0; coeffs.n_modes()];
        for (mark, w) in spec.quadrature() {
            coeffs.jump(mark, x, &mut v);
            let vy = dot(&v, y);
            let hy = if h.is_identity_at(&v) { vy } else { 0.0 };
            jumps += w * (f.profile.value(u + vy) - g - hy * g1);
        }
    }
    drift * g1 + 0.5 * diffusion * g2 + jumps
}

/// `f(X_t)` and the running left-endpoint integral of `Kf` along a path.
#[derive(Debug, Clone, PartialEq)]
pub struct MfTrack {
    pub values: Vec<f64>,
    /// `cumulative[i] = Σ_{j < i} Kf(X_j)(t_{j+1} − t_j)`.
    pub cumulative: Vec<f64>,
}

impl MfTrack {
    pub fn new(
        f: &TestFunction,
        path: &SamplePath,
        coeffs: &dyn CoefficientSet,
        basis: &SpectralBasis,
        spec: &JumpMeasureSpec,
        h: &TruncationSpec,
    ) -> Self {
        let n = path.len();
        let times = path.times();
        let mut values = Vec::with_capacity(n);
        let mut cumulative = Vec::with_capacity(n);
        let mut acc = 0.0;
        for i in 0..n {
            let x = path.state(i);
            values.push(f.value(x));
            cumulative.push(acc);
            if i + 1 < n {
                acc += eval_generator(f, x, coeffs, basis, spec, h) * (times[i + 1] - times[i]);
            }
        }
        Self { values, cumulative }
    }

    /// `M^f_{t∧τ} − M^f_{s∧τ}` for recorded indices and a stopping index.
    pub fn increment(&self, s: usize, t: usize, stop: Option<usize>) -> f64 {
        let cap = |i: usize| stop.map_or(i, |k| i.min(k));
        let (s, t) = (cap(s), cap(t));
        (self.values[t] - self.values[s]) - (self.cumulative[t] - self.cumulative[s])
    }
}

/// Stopped martingale increment `M^f_{t∧τ_m} − M^f_{s∧τ_m}` between recorded
/// indices `s ≤ t`, where `τ_m` is the first exit of the `norm`-ball of
/// radius `m`.
#[allow(clippy::too_many_arguments)]
pub fn mf_increment(
    f: &TestFunction,
    path: &SamplePath,
    s: usize,
    t: usize,
    m: f64,
    norm: NormKind,
    coeffs: &dyn CoefficientSet,
    basis: &SpectralBasis,
    spec: &JumpMeasureSpec,
    h: &TruncationSpec,
) -> f64 {
    assert!(s <= t && t < path.len(), "window ({s}, {t}) outside the path");
    let stop = path.tau_index(m, norm, basis);
    let cap = |i: usize| stop.map_or(i, |k| i.min(k));
    let (s, t) = (cap(s), cap(t));
    let times = path.times();
    let mut integral = 0.0;
    for j in s..t {
        integral += eval_generator(f, path.state(j), coeffs, basis, spec, h) * (times[j + 1] - times[j]);
    }
    f.value(path.state(t)) - f.value(path.state(s)) - integral
}

const PLANE_ANGLES: usize = 32;

/// Settings for [`generator_bound_scan`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundScan {
    pub directions: usize,
    pub seed: u64,
    /// Spacing of the radial ladder.
    pub spacing: f64,
}

impl Default for BoundScan {
    fn default() -> Self {
        Self {
            directions: 64,
            seed: 0,
            spacing: 0.05,
        }
    }
}

/// `max |Kf(x)|` over `x = r·d` for seeded unit directions `d` (together with
/// a fixed circle of directions in `span{y*, Ay*}`) and radii on the fixed ladder `{jδ} ∪ {δ2^{-k}}` inside the
/// ball of radius `radius`. Evaluation sets are nested in `radius`, so the
/// scan is nondecreasing in it.
pub fn generator_bound_scan(
    f: &TestFunction,
    radius: f64,
    coeffs: &dyn CoefficientSet,
    basis: &SpectralBasis,
    spec: &JumpMeasureSpec,
    h: &TruncationSpec,
    opts: &BoundScan,
) -> f64 {
    let n = basis.n_modes();
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(opts.directions + PLANE_ANGLES);
    // a fixed circle in span{y*, A y*}, where the drift pairing lives
    let mut e1 = f.ystar.clone();
    e1.resize(n, 0.0);
    let mut e2: Vec<f64> = e1.iter().zip(basis.mu()).map(|(y, m)| y * m).collect();
    let n1 = norm_b(&e1);
    if n1 > 0.0 {
        e1.iter_mut().for_each(|c| *c /= n1);
        let p = dot(&e1, &e2);
        e2.iter_mut().zip(&e1).for_each(|(c, u)| *c -= p * u);
        let n2 = norm_b(&e2);
        let plane = n2 > 1e-12 * n1;
        if plane {
            e2.iter_mut().for_each(|c| *c /= n2);
        }
        for a in 0..PLANE_ANGLES {
            let th = 2.0 * std::f64::consts::PI * a as f64 / PLANE_ANGLES as f64;
            let (s, c) = th.sin_cos();
            if !plane && a % (PLANE_ANGLES / 2) != 0 {
                continue;
            }
            dirs.push(e1.iter().zip(&e2).map(|(u, v)| c * u + if plane { s * v } else { 0.0 }).collect());
        }
    }
    let mut stream = RandomStream::new(opts.seed, 0);
    for _ in 0..opts.directions {
        let d: Vec<f64> = (0..n).map(|_| stream.normal()).collect();
        let nd = norm_b(&d);
        if nd > 0.0 {
            dirs.push(d.iter().map(|c| c / nd).collect());
        }
    }
    let mut radii = vec![0.0];
    for k in 1..=6 {
        let r = opts.spacing / f64::from(1u32 << k);
        if r <= radius {
            radii.push(r);
        }
    }
    let mut j = 1.0;
    while j * opts.spacing <= radius {
        radii.push(j * opts.spacing);
        j += 1.0;
    }
    let mut best: f64 = 0.0;
    let mut x = vec![0.0; n];
    for d in &dirs {
        for r in &radii {
            for (xi, di) in x.iter_mut().zip(d) {
                *xi = r * di;
            }
            best = best.max(eval_generator(f, &x, coeffs, basis, spec, h).abs());
        }
    }
    best
}
