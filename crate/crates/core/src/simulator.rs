//! Time stepping of the truncated, mollified SDE on the diagonal model, with
//! exit-time tracking, stitching across truncation levels and ensembles.
//!
//! The default scheme integrates the linear part exactly per mode:
//!
//! `x⁺_k = e^{μ_k dt} x_k + φ₁(μ_k dt) dt · d_k(x) + κ_k (σ(x) ΔW)_k + Σ v_k(y, x)`
//!
//! with `φ₁(z) = (e^z − 1)/z`, `κ_k = sqrt((1 − e^{2μ_k dt})/(−2μ_k dt))` and
//! `d = b − Σ_q w_q v(y_q, ·)` the fully compensated drift. For frozen
//! coefficients this reproduces the Ornstein–Uhlenbeck transition exactly;
//! at `μ_k = 0` it is Euler–Maruyama.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coefficients::{CoefficientError, CoefficientSet, Mollified, Truncated};
use crate::noise::{fill_bm_increments, poisson_events, JumpEvent, JumpMeasureSpec, RandomStream};
use crate::spectral_space::{norm_b, HilbertVector, SpectralBasis};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("non-finite state at t = {time}")]
    NonFinite { time: f64 },
    #[error(transparent)]
    Coefficients(#[from] CoefficientError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Euler,
    #[default]
    ExponentialEuler,
}

/// Initial law `η`, supported on `K` by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum InitialLaw {
    Point { coeffs: Vec<f64> },
    /// Independent normal coordinates: mode `k` is `mean[k] + std[k]·N(0,1)`.
    Gaussian { mean: Vec<f64>, std: Vec<f64> },
}

impl InitialLaw {
    pub fn point(x: &HilbertVector) -> Self {
        Self::Point {
            coeffs: x.coeffs().to_vec(),
        }
    }

    fn sample(&self, n_modes: usize, stream: &mut RandomStream) -> Vec<f64> {
        let mut x = vec![0.0; n_modes];
        match self {
            Self::Point { coeffs } => {
                for (xi, c) in x.iter_mut().zip(coeffs) {
                    *xi = *c;
                }
            }
            Self::Gaussian { mean, std } => {
                for (k, xi) in x.iter_mut().enumerate() {
                    let m = mean.get(k).copied().unwrap_or(0.0);
                    let s = std.get(k).copied().unwrap_or(0.0);
                    *xi = m + s * stream.normal();
                }
            }
        }
        x
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon: f64,
    pub dt: f64,
    /// Mollified approximation index `n`; `None` uses the coefficients as given.
    pub approximation: Option<usize>,
    /// Strictly increasing truncation radii in `K`; empty means no truncation.
    pub levels: Vec<f64>,
    pub initial: InitialLaw,
    pub scheme: Scheme,
    /// Keep every `record_stride`-th grid state (the final state is always kept).
    pub record_stride: usize,
}

impl SimConfig {
    pub fn new(horizon: f64, dt: f64, initial: InitialLaw) -> Self {
        Self {
            horizon,
            dt,
            approximation: None,
            levels: Vec::new(),
            initial,
            scheme: Scheme::ExponentialEuler,
            record_stride: 1,
        }
    }

    /// Number of time steps `T/dt`.
    pub fn n_steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn validate(&self, basis: &SpectralBasis) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if self.dt > self.horizon {
            return bad(format!("dt = {} exceeds horizon {}", self.dt, self.horizon));
        }
        let steps = self.horizon / self.dt;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return bad(format!("dt = {} does not divide horizon {}", self.dt, self.horizon));
        }
        if self.levels.iter().any(|m| !(*m > 0.0)) {
            return bad("truncation levels must be positive".into());
        }
        if self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return bad("truncation levels must be strictly increasing".into());
        }
        if self.record_stride == 0 {
            return bad("record_stride must be at least 1".into());
        }
        if let Some(n) = self.approximation {
            if n == 0 || n > basis.n_modes() {
                return Err(CoefficientError::IndexTooLarge {
                    n,
                    modes: basis.n_modes(),
                }
                .into());
            }
        }
        Ok(())
    }
}

/// Gaussian increments and jump events driving one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepNoise {
    pub dw: Vec<f64>,
    pub events: Vec<JumpEvent>,
}

/// Result of one step: the new state and the jump displacements applied.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: Vec<f64>,
    pub displacements: Vec<Vec<f64>>,
}

/// Per-mode factors of the exponential scheme for a fixed step.
#[derive(Debug, Clone)]
struct ModeFactors {
    decay: Vec<f64>,
    drift: Vec<f64>,
    noise: Vec<f64>,
}

impl ModeFactors {
    fn new(basis: &SpectralBasis, dt: f64, scheme: Scheme) -> Self {
        let mu = basis.mu();
        match scheme {
            Scheme::Euler => Self {
                decay: mu.iter().map(|m| 1.0 + m * dt).collect(),
                drift: vec![dt; mu.len()],
                noise: vec![1.0; mu.len()],
            },
            Scheme::ExponentialEuler => Self {
                decay: mu.iter().map(|m| (m * dt).exp()).collect(),
                drift: mu
                    .iter()
                    .map(|m| {
                        let z = m * dt;
                        if z == 0.0 {
                            dt
                        } else {
                            z.exp_m1() / z * dt
                        }
                    })
                    .collect(),
                noise: mu
                    .iter()
                    .map(|m| {
                        let z = 2.0 * m * dt;
                        if z == 0.0 {
                            1.0
                        } else {
                            (z.exp_m1() / z).sqrt()
                        }
                    })
                    .collect(),
            },
        }
    }
}

/// `b(x) − Σ_q w_q v(y_q, x)`.
fn compensated_sde_drift(
    coeffs: &dyn CoefficientSet,
    x: &[f64],
    spec: &JumpMeasureSpec,
    out: &mut [f64],
    buf: &mut [f64],
) {
    coeffs.drift(x, out);
    for (mark, w) in spec.quadrature() {
        coeffs.jump(mark, x, buf);
        for (o, v) in out.iter_mut().zip(buf.iter()) {
            *o -= w * v;
        }
    }
}

fn step_with(
    x: &[f64],
    time: f64,
    factors: &ModeFactors,
    coeffs: &dyn CoefficientSet,
    spec: &JumpMeasureSpec,
    noise: &StepNoise,
) -> Result<StepOutcome, SimError> {
    let n = x.len();
    let mut drift = vec![0.0; n];
    let mut buf = vec![0.0; n];
    compensated_sde_drift(coeffs, x, spec, &mut drift, &mut buf);
    let mut diff = vec![0.0; n];
    coeffs.diffusion(x).apply_add(&noise.dw, &mut diff);

    let mut state: Vec<f64> = (0..n)
        .map(|k| factors.decay[k] * x[k] + factors.drift[k] * drift[k] + factors.noise[k] * diff[k])
        .collect();
    let mut displacements = Vec::with_capacity(noise.events.len());
    for ev in &noise.events {
        let mut v = vec![0.0; n];
        coeffs.jump(&ev.mark, x, &mut v);
        for (s, d) in state.iter_mut().zip(&v) {
            *s += d;
        }
        displacements.push(v);
    }
    if state.iter().any(|c| !c.is_finite()) {
        return Err(SimError::NonFinite { time });
    }
    Ok(StepOutcome {
        state,
        displacements,
    })
}

/// One step from `state` at time `t` with the given noise.
#[allow(clippy::too_many_arguments)]
pub fn step(
    state: &HilbertVector,
    t: f64,
    dt: f64,
    coeffs: &dyn CoefficientSet,
    basis: &SpectralBasis,
    spec: &JumpMeasureSpec,
    scheme: Scheme,
    noise: &StepNoise,
) -> Result<StepOutcome, SimError> {
    let factors = ModeFactors::new(basis, dt, scheme);
    let x = state.resized(basis.n_modes());
    step_with(x.coeffs(), t + dt, &factors, coeffs, spec, noise)
}

/// A jump applied at grid step `step` (the state at grid index `step` already
/// includes `displacement`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpRecord {
    pub step: usize,
    pub event_time: f64,
    pub mark: Vec<f64>,
    pub displacement: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormKind {
    B,
    K,
}

/// A discretely observed path. States are stored flat, `n_modes` per row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplePath {
    pub path_index: u64,
    n_modes: usize,
    /// Grid steps of the recorded rows.
    steps: Vec<usize>,
    times: Vec<f64>,
    states: Vec<f64>,
    pub jump_log: Vec<JumpRecord>,
    pub exploded: bool,
    pub explosion_time: Option<f64>,
    /// Index into the level list active at the end of the run.
    pub final_level: usize,
}

impl SamplePath {
    /// Builds a path from explicit rows (no jumps recorded).
    pub fn from_rows(times: Vec<f64>, rows: &[Vec<f64>]) -> Self {
        assert_eq!(times.len(), rows.len());
        let n_modes = rows.first().map_or(0, Vec::len);
        let mut states = Vec::with_capacity(n_modes * rows.len());
        for r in rows {
            assert_eq!(r.len(), n_modes, "ragged rows");
            states.extend_from_slice(r);
        }
        Self {
            path_index: 0,
            n_modes,
            steps: (0..times.len()).collect(),
            times,
            states,
            jump_log: Vec::new(),
            exploded: false,
            explosion_time: None,
            final_level: 0,
        }
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.n_modes..(i + 1) * self.n_modes]
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.states.chunks_exact(self.n_modes.max(1))
    }

    /// State just before any jump applied at recorded index `i`.
    pub fn pre_jump_state(&self, i: usize) -> Vec<f64> {
        let mut x = self.state(i).to_vec();
        let step = self.steps[i];
        for j in self.jump_log.iter().filter(|j| j.step == step) {
            for (c, d) in x.iter_mut().zip(&j.displacement) {
                *c -= d;
            }
        }
        x
    }

    /// Recorded index of the first time `≥ t` (the grid time itself when `t`
    /// lies on the grid).
    pub fn index_at(&self, t: f64) -> Option<usize> {
        let tol = 1e-9 * self.times.last().copied().unwrap_or(1.0).abs().max(1.0);
        self.times.iter().position(|s| *s >= t - tol)
    }

    pub fn value_at(&self, i: usize, k: usize) -> f64 {
        self.states[i * self.n_modes + k]
    }

    /// First recorded time whose pre-jump or post-jump norm reaches `z`.
    pub fn tau_z(&self, z: f64, norm: NormKind, basis: &SpectralBasis) -> f64 {
        self.tau_index(z, norm, basis)
            .map_or(f64::INFINITY, |i| self.times[i])
    }

    pub fn tau_index(&self, z: f64, norm: NormKind, basis: &SpectralBasis) -> Option<usize> {
        let measure = |x: &[f64]| match norm {
            NormKind::B => norm_b(x),
            NormKind::K => basis.norm_k(x),
        };
        (0..self.len()).find(|&i| measure(self.state(i)) >= z || measure(&self.pre_jump_state(i)) >= z)
    }

    /// `X_{· ∧ τ}` for a recorded stopping index.
    pub fn stopped_at(&self, index: Option<usize>) -> SamplePath {
        let mut out = self.clone();
        let Some(i) = index else {
            return out;
        };
        let frozen = self.state(i).to_vec();
        for j in i + 1..self.len() {
            out.states[j * self.n_modes..(j + 1) * self.n_modes].copy_from_slice(&frozen);
        }
        let cut = self.steps[i];
        out.jump_log.retain(|j| j.step <= cut);
        out
    }

    /// CSV with a `time` column and one column per mode.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["time".to_string()];
        header.extend((1..=self.n_modes).map(|k| format!("c{k}")));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![fmt17(self.times[i])];
            row.extend(self.state(i).iter().map(|c| fmt17(*c)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Float with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Runs one path with the given coefficients, stitching truncation levels.
pub fn simulate_path(
    config: &SimConfig,
    coeffs: &dyn CoefficientSet,
    basis: &SpectralBasis,
    spec: &JumpMeasureSpec,
    stream: &mut RandomStream,
) -> Result<SamplePath, SimError> {
    config.validate(basis)?;
    let n_modes = basis.n_modes();
    let mollified;
    let base: &dyn CoefficientSet = match config.approximation {
        Some(n) => {
            mollified = Mollified::new(coeffs, n, basis)?;
            &mollified
        }
        None => coeffs,
    };
    let truncated: Vec<Truncated> = config
        .levels
        .iter()
        .map(|m| Truncated::new(base, *m, basis))
        .collect();

    let n_steps = config.n_steps();
    let dt = config.horizon / n_steps as f64;
    let factors = ModeFactors::new(basis, dt, config.scheme);
    let time_of = |j: usize| config.horizon * j as f64 / n_steps as f64;

    let mut x = config.initial.sample(n_modes, stream);
    let capacity = n_steps / config.record_stride + 2;
    let mut path = SamplePath {
        path_index: stream.path_index(),
        n_modes,
        steps: Vec::with_capacity(capacity),
        times: Vec::with_capacity(capacity),
        states: Vec::with_capacity(capacity * n_modes),
        jump_log: Vec::new(),
        exploded: false,
        explosion_time: None,
        final_level: 0,
    };
    let record = |path: &mut SamplePath, j: usize, x: &[f64]| {
        path.steps.push(j);
        path.times.push(time_of(j));
        path.states.extend_from_slice(x);
    };

    let mut level = 0usize;
    let raise = |level: &mut usize, x: &[f64]| -> bool {
        // returns false once every level is exhausted
        if truncated.is_empty() {
            return true;
        }
        let nk = basis.norm_k(x);
        while *level < truncated.len() && nk >= truncated[*level].radius() {
            *level += 1;
        }
        *level < truncated.len()
    };

    if !raise(&mut level, &x) {
        path.exploded = true;
        path.explosion_time = Some(0.0);
    }
    record(&mut path, 0, &x);

    let mut noise = StepNoise {
        dw: vec![0.0; base.n_noise()],
        events: Vec::new(),
    };
    for j in 1..=n_steps {
        if !path.exploded {
            let (t0, t1) = (time_of(j - 1), time_of(j));
            fill_bm_increments(dt, &mut noise.dw, stream);
            noise.events = if spec.is_empty() {
                Vec::new()
            } else {
                poisson_events(t0, t1, spec, stream)
            };
            let active: &dyn CoefficientSet = if truncated.is_empty() {
                base
            } else {
                &truncated[level]
            };
            let out = step_with(&x, t1, &factors, active, spec, &noise)?;
            for (ev, d) in noise.events.drain(..).zip(out.displacements) {
                path.jump_log.push(JumpRecord {
                    step: j,
                    event_time: ev.time,
                    mark: ev.mark,
                    displacement: d,
                });
            }
            x = out.state;
            let pre = {
                let mut p = x.clone();
                for r in path.jump_log.iter().rev().take_while(|r| r.step == j) {
                    for (c, d) in p.iter_mut().zip(&r.displacement) {
                        *c -= d;
                    }
                }
                p
            };
            if !(raise(&mut level, &pre) && raise(&mut level, &x)) {
                path.exploded = true;
                path.explosion_time = Some(t1);
            }
        }
        if j % config.record_stride == 0 || j == n_steps {
            record(&mut path, j, &x);
        }
    }
    path.final_level = level;
    Ok(path)
}

/// A seeded collection of independent paths on a common grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ensemble {
    pub seed: u64,
    pub config: SimConfig,
    pub paths: Vec<SamplePath>,
}

/// Ensemble metadata written next to exported paths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub seed: u64,
    pub n_paths: usize,
    pub n_modes: usize,
    pub grid_points: usize,
    pub exploded: usize,
    pub total_jumps: usize,
    pub config: SimConfig,
}

pub fn simulate_ensemble(
    config: &SimConfig,
    coeffs: &dyn CoefficientSet,
    basis: &SpectralBasis,
    spec: &JumpMeasureSpec,
    seed: u64,
    n_paths: usize,
) -> Result<Ensemble, SimError> {
    if n_paths == 0 {
        return Err(SimError::InvalidConfig("n_paths must be at least 1".into()));
    }
    config.validate(basis)?;
    let paths = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| simulate_path(config, coeffs, basis, spec, &mut RandomStream::new(seed, i)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Ensemble {
        seed,
        config: config.clone(),
        paths,
    })
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        self.paths[0].times()
    }

    pub fn n_modes(&self) -> usize {
        self.paths[0].n_modes()
    }

    pub fn exploded_count(&self) -> usize {
        self.paths.iter().filter(|p| p.exploded).count()
    }

    /// Coefficient `k` (0-based) of every path at recorded index `i`.
    pub fn mode_samples(&self, i: usize, k: usize) -> Vec<f64> {
        self.paths.iter().map(|p| p.value_at(i, k)).collect()
    }

    pub fn summary(&self) -> EnsembleSummary {
        EnsembleSummary {
            seed: self.seed,
            n_paths: self.len(),
            n_modes: self.n_modes(),
            grid_points: self.times().len(),
            exploded: self.exploded_count(),
            total_jumps: self.paths.iter().map(|p| p.jump_log.len()).sum(),
            config: self.config.clone(),
        }
    }

    /// Per recorded time: ensemble mean and variance of each mode.
    pub fn write_marginals_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let n = self.n_modes();
        let mut header = vec!["time".to_string()];
        for k in 1..=n {
            header.push(format!("mean_c{k}"));
            header.push(format!("var_c{k}"));
        }
        w.write_record(&header)?;
        for (i, t) in self.times().iter().enumerate() {
            let mut row = vec![fmt17(*t)];
            for k in 0..n {
                let (m, v) = mean_var(&self.mode_samples(i, k));
                row.push(fmt17(m));
                row.push(fmt17(v));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Sample mean and unbiased variance (variance 0 for a single sample).
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{Catalog, CatalogKind, Diffusion, GrowthProfile};

    fn heat(n: usize) -> SpectralBasis {
        SpectralBasis::harmonic_heat(n)
    }

    fn frozen_noise(n: usize) -> StepNoise {
        StepNoise {
            dw: vec![0.0; n],
            events: Vec::new(),
        }
    }

    #[test]
    fn frozen_dynamics_without_linearity() {
        let b = SpectralBasis::new(vec![1.0, 0.5], vec![0.0, 0.0]).unwrap();
        let zero = Catalog::new(CatalogKind::Zero, &b);
        let x = HilbertVector::new(vec![0.3, -0.2]);
        for scheme in [Scheme::Euler, Scheme::ExponentialEuler] {
            let out = step(&x, 0.0, 0.01, &zero, &b, &JumpMeasureSpec::none(), scheme, &frozen_noise(2)).unwrap();
            assert_eq!(out.state, x.coeffs());
        }
    }

    #[test]
    fn heat_step_is_semigroup() {
        let b = heat(3);
        let zero = Catalog::new(CatalogKind::Zero, &b);
        let x = HilbertVector::new(vec![1.0, 0.0, 0.0]);
        let dt = 1e-3;
        let out = step(&x, 0.0, dt, &zero, &b, &JumpMeasureSpec::none(), Scheme::ExponentialEuler, &frozen_noise(3)).unwrap();
        let expected = (-std::f64::consts::PI.powi(2) * dt).exp();
        assert!((out.state[0] - expected).abs() < 1e-15);
    }

    struct UnitJump;
    impl CoefficientSet for UnitJump {
        fn n_modes(&self) -> usize {
            2
        }
        fn n_noise(&self) -> usize {
            2
        }
        fn drift(&self, _x: &[f64], out: &mut [f64]) {
            out.fill(0.0);
        }
        fn diffusion(&self, _x: &[f64]) -> Diffusion {
            Diffusion::Zero { modes: 2, noise: 2 }
        }
        fn jump(&self, _m: &[f64], _x: &[f64], out: &mut [f64]) {
            out.fill(0.0);
            out[0] = 1.0;
        }
        fn growth(&self) -> GrowthProfile {
            GrowthProfile { linear_growth: 0.0 }
        }
        fn jump_gamma(&self, _m: &[f64]) -> f64 {
            1.0
        }
        fn jump_zeta(&self, _b: f64, _m: &[f64]) -> f64 {
            1.0
        }
    }

    #[test]
    fn single_jump_step() {
        let b = SpectralBasis::new(vec![1.0, 0.5], vec![0.0, 0.0]).unwrap();
        let spec = JumpMeasureSpec::single_atom(2.0, vec![1.0]);
        let dt = 0.01;
        let noise = StepNoise {
            dw: vec![0.0; 2],
            events: vec![JumpEvent {
                time: 0.005,
                mark: vec![1.0],
            }],
        };
        let x = HilbertVector::new(vec![0.1, 0.2]);
        let out = step(&x, 0.0, dt, &UnitJump, &b, &spec, Scheme::ExponentialEuler, &noise).unwrap();
        // x + h_1 − dt·F(E)·h_1
        assert!((out.state[0] - (0.1 + 1.0 - dt * 2.0)).abs() < 1e-15);
        assert_eq!(out.state[1], 0.2);
        assert_eq!(out.displacements, vec![vec![1.0, 0.0]]);
    }

    #[test]
    fn config_validation() {
        let b = heat(4);
        let init = InitialLaw::Point { coeffs: vec![0.0] };
        let mut c = SimConfig::new(1.0, 0.0, init.clone());
        assert!(c.validate(&b).is_err());
        c.dt = 2.0;
        assert!(c.validate(&b).is_err());
        c.dt = 0.3;
        assert!(c.validate(&b).is_err());
        c.dt = 0.25;
        assert!(c.validate(&b).is_ok());
        c.levels = vec![2.0, 1.0];
        assert!(c.validate(&b).is_err());
        c.levels = vec![1.0, 2.0];
        c.approximation = Some(5);
        assert!(c.validate(&b).is_err());
    }

    #[test]
    fn mild_solution_identity() {
        let b = heat(5);
        let zero = Catalog::new(CatalogKind::Zero, &b);
        let x0 = HilbertVector::new(vec![1.0, -0.5, 0.25, 0.1, 0.0]);
        let cfg = SimConfig::new(0.1, 0.01, InitialLaw::point(&x0));
        let p = simulate_path(&cfg, &zero, &b, &JumpMeasureSpec::none(), &mut RandomStream::new(1, 0)).unwrap();
        for (i, t) in p.times().iter().enumerate() {
            let exact = b.semigroup_apply(*t, &x0);
            for (a, e) in p.state(i).iter().zip(exact.coeffs()) {
                assert!((a - e).abs() <= 1e-14 * e.abs().max(1e-300), "{a} vs {e} at {t}");
            }
        }
    }

    #[test]
    fn ensemble_is_deterministic_and_matches_single_path() {
        let b = heat(4);
        let ou = Catalog::new(CatalogKind::Ou { noise_scale: 1.0 }, &b);
        let cfg = SimConfig::new(0.1, 0.01, InitialLaw::Point { coeffs: vec![0.2] });
        let spec = JumpMeasureSpec::none();
        let e1 = simulate_ensemble(&cfg, &ou, &b, &spec, 5, 8).unwrap();
        let e2 = simulate_ensemble(&cfg, &ou, &b, &spec, 5, 8).unwrap();
        assert_eq!(e1, e2);
        let single = simulate_ensemble(&cfg, &ou, &b, &spec, 5, 1).unwrap();
        let direct = simulate_path(&cfg, &ou, &b, &spec, &mut RandomStream::new(5, 0)).unwrap();
        assert_eq!(single.paths[0], direct);
        assert_eq!(e1.paths[0], direct);
    }

    #[test]
    fn tau_z_examples() {
        let b = heat(2);
        let p = SamplePath::from_rows(vec![0.0, 0.5, 1.0], &[vec![0.1, 0.0], vec![0.1, 0.0], vec![0.1, 0.0]]);
        assert_eq!(p.tau_z(1.0, NormKind::B, &b), f64::INFINITY);
        let mut q = SamplePath::from_rows(vec![0.0, 0.5, 1.0], &[vec![0.1, 0.0], vec![2.0, 0.0], vec![2.0, 0.0]]);
        assert_eq!(q.tau_z(1.0, NormKind::B, &b), 0.5);
        // a jump up then back: post-jump norm below z but pre-jump at or above it
        q.jump_log.push(JumpRecord {
            step: 2,
            event_time: 0.9,
            mark: vec![],
            displacement: vec![-1.95, 0.0],
        });
        q.states[4] = 0.05;
        assert_eq!(q.tau_z(1.0, NormKind::B, &b), 0.5);
        assert_eq!(q.pre_jump_state(2), vec![2.0, 0.0]);
    }

    #[test]
    fn stride_recording_keeps_endpoints() {
        let b = heat(2);
        let ou = Catalog::new(CatalogKind::Ou { noise_scale: 1.0 }, &b);
        let mut cfg = SimConfig::new(1.0, 0.01, InitialLaw::Point { coeffs: vec![] });
        let full = simulate_path(&cfg, &ou, &b, &JumpMeasureSpec::none(), &mut RandomStream::new(2, 3)).unwrap();
        cfg.record_stride = 25;
        let thin = simulate_path(&cfg, &ou, &b, &JumpMeasureSpec::none(), &mut RandomStream::new(2, 3)).unwrap();
        assert_eq!(thin.times(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(thin.state(4), full.state(100));
        assert_eq!(thin.state(2), full.state(50));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let p = SamplePath::from_rows(vec![0.0, 0.5], &[vec![1.0, 2.0], vec![0.1, 1.0 / 3.0]]);
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "time,c1,c2");
        assert_eq!(lines.len(), 3);
        let parsed: f64 = lines[2].split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(parsed, 1.0 / 3.0);
    }
}
