//! Statistical checks on ensembles: martingale residuals, tightness
//! statistics, moment growth, weak distances between ensembles, Feller and
//! Galerkin-limit probes, and the factorization identity for stochastic
//! convolutions.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coefficients::{CoefficientSet, Diffusion};
use crate::generator::{MfTrack, TestFunction, TruncationSpec};
use crate::noise::{JumpMeasureSpec, RandomStream};
use crate::simulator::{mean_var, simulate_ensemble, Ensemble, InitialLaw, NormKind, SamplePath, SimConfig, SimError};
use crate::spectral_space::{dist_b, norm_b, HilbertVector, SpectralBasis};

#[derive(Debug, Error, PartialEq)]
pub enum DiagnosticError {
    #[error("time {0} is not on the recorded grid")]
    OffGrid(f64),
    #[error("window ({s}, {t}) is not ordered")]
    BadWindow { s: f64, t: f64 },
    #[error("ensembles have different grids")]
    GridMismatch,
    #[error("initial points do not converge: gaps {0:?}")]
    NotConvergent(Vec<f64>),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Simulation(#[from] SimError),
}

fn grid_index(path: &SamplePath, t: f64) -> Result<usize, DiagnosticError> {
    let i = path.index_at(t).ok_or(DiagnosticError::OffGrid(t))?;
    let tol = 1e-9 * path.times().last().copied().unwrap_or(1.0).max(1.0);
    if (path.times()[i] - t).abs() > tol {
        return Err(DiagnosticError::OffGrid(t));
    }
    Ok(i)
}

/// One factor `g(⟨X_q, y*⟩)` of a product weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightFactor {
    pub time: f64,
    pub function: TestFunction,
}

/// `k = Π g_i(⟨X_{q_i}, y*_i⟩)`; the empty product is `k ≡ 1`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSpec {
    pub factors: Vec<WeightFactor>,
}

impl WeightSpec {
    pub fn one() -> Self {
        Self::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MartingaleSettings {
    /// Localization radius `m` of `τ_m`.
    pub radius: f64,
    pub norm: NormKind,
    pub z_threshold: f64,
    pub truncation: TruncationSpec,
}

impl Default for MartingaleSettings {
    fn default() -> Self {
        Self {
            radius: 1e6,
            norm: NormKind::B,
            z_threshold: 3.0,
            truncation: TruncationSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleEntry {
    pub function: usize,
    pub s: f64,
    pub t: f64,
    pub weight: usize,
    pub mean: f64,
    pub std_error: f64,
    pub z: f64,
    pub degenerate: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleReport {
    pub n_paths: usize,
    /// Combinations dropped because a weight looks past the window start.
    pub skipped: usize,
    pub entries: Vec<MartingaleEntry>,
    pub failures: usize,
    pub failure_fraction: f64,
    pub max_abs_z: f64,
}

impl MartingaleReport {
    /// Whether the share of failing entries is at most `max_fraction`.
    pub fn calibrated(&self, max_fraction: f64) -> bool {
        self.failure_fraction <= max_fraction
    }
}

/// Monte Carlo estimates of `E[k·(M^f_{t∧τ_m} − M^f_{s∧τ_m})]` for every
/// combination of test function, window and weight whose factors are
/// observed no later than the window start. The generator is built
/// from `coeffs`, which need not be the coefficients that produced the paths.
#[allow(clippy::too_many_arguments)]
pub fn martingale_test(
    ensemble: &Ensemble,
    coeffs: &dyn CoefficientSet,
    basis: &SpectralBasis,
    spec: &JumpMeasureSpec,
    functions: &[TestFunction],
    windows: &[(f64, f64)],
    weights: &[WeightSpec],
    settings: &MartingaleSettings,
) -> Result<MartingaleReport, DiagnosticError> {
    let first = &ensemble.paths[0];
    let mut win_idx = Vec::with_capacity(windows.len());
    for &(s, t) in windows {
        if s > t {
            return Err(DiagnosticError::BadWindow { s, t });
        }
        win_idx.push((grid_index(first, s)?, grid_index(first, t)?));
    }
    let mut weight_idx = Vec::with_capacity(weights.len());
    for w in weights {
        let mut idx = Vec::with_capacity(w.factors.len());
        for fac in &w.factors {
            idx.push(grid_index(first, fac.time)?);
        }
        weight_idx.push(idx);
    }
    // weights must be measurable at the window start: every q_i ≤ s
    let measurable = |w: usize, k: usize| weights[k].factors.iter().all(|f| f.time <= windows[w].0 + 1e-12);
    let all = functions.len() * windows.len() * weights.len();
    let combos: Vec<(usize, usize, usize)> = (0..functions.len())
        .flat_map(|f| (0..windows.len()).flat_map(move |w| (0..weights.len()).map(move |k| (f, w, k))))
        .filter(|&(_, w, k)| measurable(w, k))
        .collect();
    let per_path: Vec<Vec<f64>> = ensemble
        .paths
        .par_iter()
        .map(|path| {
            let stop = path.tau_index(settings.radius, settings.norm, basis);
            let tracks: Vec<MfTrack> = functions
                .iter()
                .map(|f| MfTrack::new(f, path, coeffs, basis, spec, &settings.truncation))
                .collect();
            let kvals: Vec<f64> = weights
                .iter()
                .zip(&weight_idx)
                .map(|(w, idx)| {
                    w.factors
                        .iter()
                        .zip(idx)
                        .map(|(fac, &i)| fac.function.value(path.state(i)))
                        .product()
                })
                .collect();
            combos
                .iter()
                .map(|&(f, w, k)| {
                    let (s, t) = win_idx[w];
                    kvals[k] * tracks[f].increment(s, t, stop)
                })
                .collect()
        })
        .collect();

    let n = per_path.len() as f64;
    let mut entries = Vec::with_capacity(combos.len());
    for (c, &(f, w, k)) in combos.iter().enumerate() {
        let xs: Vec<f64> = per_path.iter().map(|r| r[c]).collect();
        let (mean, var) = mean_var(&xs);
        let se = (var / n).sqrt();
        let degenerate = var == 0.0;
        let z = if degenerate {
            if mean == 0.0 {
                0.0
            } else {
                f64::INFINITY.copysign(mean)
            }
        } else {
            mean / se
        };
        entries.push(MartingaleEntry {
            function: f,
            s: windows[w].0,
            t: windows[w].1,
            weight: k,
            mean,
            std_error: se,
            z,
            degenerate,
            pass: z.abs() < settings.z_threshold,
        });
    }
    let failures = entries.iter().filter(|e| !e.pass).count();
    Ok(MartingaleReport {
        n_paths: per_path.len(),
        skipped: all - combos.len(),
        failure_fraction: if entries.is_empty() {
            0.0
        } else {
            failures as f64 / entries.len() as f64
        },
        max_abs_z: entries.iter().map(|e| e.z.abs()).fold(0.0, f64::max),
        failures,
        entries,
    })
}

/// Indices `0..=last` of recorded times not exceeding `horizon`.
fn horizon_len(path: &SamplePath, horizon: f64) -> usize {
    let tol = 1e-9 * horizon.abs().max(1.0);
    path.times().iter().take_while(|t| **t <= horizon + tol).count()
}

/// `osc[i][j]` = largest B-distance between states with indices in `[i, j)`.
fn oscillation_table(rows: &[&[f64]]) -> Vec<Vec<f64>> {
    let m = rows.len();
    let mut osc = vec![vec![0.0f64; m + 1]; m + 1];
    for j in 0..m {
        // column maxima of distances to row j, accumulated leftwards
        let mut col = 0.0f64;
        for i in (0..j).rev() {
            col = col.max(dist_b(rows[i], rows[j]));
            osc[i][j + 1] = osc[i][j].max(col);
        }
        osc[j][j + 1] = 0.0;
    }
    osc
}

fn spaced(times: &[f64], i: usize, j: usize, theta: f64) -> bool {
    times[j] - times[i] >= theta - 1e-12 * theta.abs().max(1.0)
}

/// `w′(α, θ, N)`: the infimum over grid partitions
/// `0 = t_0 < … < t_{n−1} < N ≤ t_n` with `t_i − t_{i−1} ≥ θ` of the largest
/// B-oscillation over the half-open cells `[t_{i−1}, t_i)`.
///
/// The last endpoint `t_n` may lie beyond the grid, in which case the final
/// cell contains `N` and its spacing is unconstrained; taking `t_n = N`
/// excludes `N` and needs `N − t_{n−1} ≥ θ`.
pub fn modulus_w_prime(path: &SamplePath, theta: f64, horizon: f64) -> f64 {
    let m = horizon_len(path, horizon);
    if m <= 1 {
        return 0.0;
    }
    let rows: Vec<&[f64]> = (0..m).map(|i| path.state(i)).collect();
    let times = &path.times()[..m];
    let osc = oscillation_table(&rows);
    let last = m - 1;
    // best[j]: optimal max oscillation with a breakpoint at index j
    let mut best = vec![f64::INFINITY; m];
    best[0] = 0.0;
    for j in 1..last {
        for i in 0..j {
            if best[i].is_finite() && spaced(times, i, j, theta) {
                best[j] = best[j].min(best[i].max(osc[i][j]));
            }
        }
    }
    let mut out = f64::INFINITY;
    for i in 0..last {
        if !best[i].is_finite() {
            continue;
        }
        out = out.min(best[i].max(osc[i][m]));
        if spaced(times, i, last, theta) {
            out = out.min(best[i].max(osc[i][last]));
        }
    }
    out
}

/// Exhaustive enumeration of the partitions in [`modulus_w_prime`]; for
/// short paths only.
pub fn modulus_w_prime_brute(path: &SamplePath, theta: f64, horizon: f64) -> f64 {
    let m = horizon_len(path, horizon);
    if m <= 1 {
        return 0.0;
    }
    assert!(m <= 20, "brute force limited to 20 points");
    let rows: Vec<&[f64]> = (0..m).map(|i| path.state(i)).collect();
    let times = &path.times()[..m];
    let cell = |a: usize, b: usize| {
        let mut o = 0.0f64;
        for p in a..b {
            for q in p + 1..b {
                o = o.max(dist_b(rows[p], rows[q]));
            }
        }
        o
    };
    let last = m - 1;
    let interior = last.saturating_sub(1);
    let mut out = f64::INFINITY;
    for mask in 0u32..(1 << interior) {
        let mut pts = vec![0];
        pts.extend((1..last).filter(|k| mask & (1 << (k - 1)) != 0));
        if pts.windows(2).any(|w| !spaced(times, w[0], w[1], theta)) {
            continue;
        }
        let inner = pts.windows(2).map(|w| cell(w[0], w[1])).fold(0.0, f64::max);
        let tail = *pts.last().unwrap();
        out = out.min(inner.max(cell(tail, m)));
        if spaced(times, tail, last, theta) {
            out = out.min(inner.max(cell(tail, last)));
        }
    }
    out
}

/// Largest B-distance between any two states up to `horizon`.
pub fn total_oscillation(path: &SamplePath, horizon: f64) -> f64 {
    let m = horizon_len(path, horizon);
    let mut o = 0.0f64;
    for p in 0..m {
        for q in p + 1..m {
            o = o.max(dist_b(path.state(p), path.state(q)));
        }
    }
    o
}

/// Summary of `w′` over an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WPrimeSummary {
    pub theta: f64,
    pub horizon: f64,
    pub mean: f64,
    pub median: f64,
    pub q90: f64,
    pub max: f64,
}

pub fn w_prime_summary(ensemble: &Ensemble, theta: f64, horizon: f64) -> WPrimeSummary {
    let mut vals: Vec<f64> = ensemble
        .paths
        .par_iter()
        .map(|p| modulus_w_prime(p, theta, horizon))
        .collect();
    vals.sort_by(f64::total_cmp);
    let q = |p: f64| vals[quantile_index(vals.len(), p)];
    WPrimeSummary {
        theta,
        horizon,
        mean: vals.iter().sum::<f64>() / vals.len() as f64,
        median: q(0.5),
        q90: q(0.9),
        max: *vals.last().unwrap(),
    }
}

/// Index of the empirical `p`-quantile in a sorted sample of size `n`.
fn quantile_index(n: usize, p: f64) -> usize {
    let k = (p * n as f64).ceil() as isize - 1;
    k.clamp(0, n as isize - 1) as usize
}

/// Grid stopping rules for the Aldous statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum StoppingRule {
    Deterministic { time: f64 },
    /// First recorded time with `‖X_t‖_B ≥ level`, capped at `cap`.
    FirstHitting { level: f64, cap: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbabilityEstimate {
    pub probability: f64,
    pub std_error: f64,
    pub n: usize,
}

impl ProbabilityEstimate {
    fn from_hits(hits: usize, n: usize) -> Self {
        let p = hits as f64 / n as f64;
        Self {
            probability: p,
            std_error: (p * (1.0 - p) / n as f64).sqrt(),
            n,
        }
    }
}

/// `P(‖X_{ρ+h} − X_ρ‖_B ≥ ε)`; `ρ + h` is clamped to the last grid time.
pub fn aldous_statistic(ensemble: &Ensemble, rho: StoppingRule, h: f64, eps: f64) -> ProbabilityEstimate {
    let hits = ensemble
        .paths
        .par_iter()
        .filter(|path| {
            let times = path.times();
            let last = path.len() - 1;
            let r = match rho {
                StoppingRule::Deterministic { time } => path.index_at(time).unwrap_or(last),
                StoppingRule::FirstHitting { level, cap } => {
                    let c = path.index_at(cap).unwrap_or(last);
                    (0..=c).find(|&i| norm_b(path.state(i)) >= level).unwrap_or(c)
                }
            };
            let j = path.index_at(times[r] + h).unwrap_or(last);
            dist_b(path.state(j), path.state(r)) >= eps
        })
        .count();
    ProbabilityEstimate::from_hits(hits, ensemble.len())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContainmentRow {
    pub time: f64,
    pub radius: f64,
    pub used: usize,
    pub excluded_exploded: usize,
}

/// Per time, the empirical `(1 − ε)`-quantile of `‖X_t‖_K` over
/// non-exploded paths.
pub fn compact_containment(
    ensemble: &Ensemble,
    times: &[f64],
    eps: f64,
    basis: &SpectralBasis,
) -> Result<Vec<ContainmentRow>, DiagnosticError> {
    let alive: Vec<&SamplePath> = ensemble.paths.iter().filter(|p| !p.exploded).collect();
    if alive.is_empty() {
        return Err(DiagnosticError::Invalid("every path exploded".into()));
    }
    times
        .iter()
        .map(|&t| {
            let i = grid_index(alive[0], t)?;
            let mut norms: Vec<f64> = alive.iter().map(|p| basis.norm_k(p.state(i))).collect();
            norms.sort_by(f64::total_cmp);
            Ok(ContainmentRow {
                time: t,
                radius: norms[quantile_index(norms.len(), 1.0 - eps)],
                used: norms.len(),
                excluded_exploded: ensemble.len() - alive.len(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentRow {
    pub horizon: f64,
    pub estimate: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub rows: Vec<MomentRow>,
    pub slope: f64,
    pub intercept: f64,
    /// Largest absolute residual of the affine fit of the log estimates.
    pub residual: f64,
    pub exploded: usize,
    pub outside_set: usize,
}

impl MomentReport {
    pub fn pass(&self, max_residual: f64) -> bool {
        self.slope.is_finite() && self.residual < max_residual
    }
}

/// Least-squares line through `(x, y)`: returns `(slope, intercept)`.
pub fn affine_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    (slope, my - slope * mx)
}

/// `E[sup_{t ≤ T} ‖X_t‖²_K · Z]` with `Z = 1{‖X_0‖_K ≤ set_radius}` for each
/// `T`, and an affine fit of its logarithm against `T`.
pub fn moment_bound_check(
    ensemble: &Ensemble,
    set_radius: f64,
    horizons: &[f64],
    basis: &SpectralBasis,
) -> Result<MomentReport, DiagnosticError> {
    if horizons.len() < 2 {
        return Err(DiagnosticError::Invalid("need at least two horizons".into()));
    }
    let alive: Vec<&SamplePath> = ensemble.paths.iter().filter(|p| !p.exploded).collect();
    let idx: Vec<usize> = horizons
        .iter()
        .map(|&t| grid_index(&ensemble.paths[0], t))
        .collect::<Result<_, _>>()?;
    let outside_set = alive
        .iter()
        .filter(|p| basis.norm_k(p.state(0)) > set_radius)
        .count();
    let samples: Vec<Vec<f64>> = alive
        .par_iter()
        .map(|p| {
            let z = if basis.norm_k(p.state(0)) <= set_radius { 1.0 } else { 0.0 };
            let mut sup = 0.0f64;
            let mut out = Vec::with_capacity(idx.len());
            let mut i = 0;
            for &target in &idx {
                while i <= target {
                    sup = sup.max(basis.norm_k(p.state(i)).powi(2));
                    i += 1;
                }
                out.push(sup * z);
            }
            out
        })
        .collect();
    let n = samples.len() as f64;
    let rows: Vec<MomentRow> = horizons
        .iter()
        .enumerate()
        .map(|(k, &h)| {
            let xs: Vec<f64> = samples.iter().map(|s| s[k]).collect();
            let (m, v) = mean_var(&xs);
            MomentRow {
                horizon: h,
                estimate: m,
                std_error: (v / n).sqrt(),
            }
        })
        .collect();
    let logs: Vec<f64> = rows.iter().map(|r| r.estimate.ln()).collect();
    let (slope, intercept) = affine_fit(horizons, &logs);
    let residual = horizons
        .iter()
        .zip(&logs)
        .map(|(t, l)| (l - (intercept + slope * t)).abs())
        .fold(0.0, f64::max);
    Ok(MomentReport {
        rows,
        slope,
        intercept,
        residual,
        exploded: ensemble.len() - alive.len(),
        outside_set,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakDistance {
    pub distance: f64,
    /// Pooled standard error of the difference attaining the maximum.
    pub std_error: f64,
    pub function: usize,
    pub time: f64,
}

/// `max_{f, t} |mean_A f(X_t) − mean_B f(X_t)|` over a test-function panel.
pub fn weak_distance(
    a: &Ensemble,
    b: &Ensemble,
    panel: &[TestFunction],
    times: &[f64],
) -> Result<WeakDistance, DiagnosticError> {
    let mut best = WeakDistance {
        distance: 0.0,
        std_error: 0.0,
        function: 0,
        time: times.first().copied().unwrap_or(0.0),
    };
    let mut first = true;
    for &t in times {
        let ia = grid_index(&a.paths[0], t)?;
        let ib = grid_index(&b.paths[0], t).map_err(|_| DiagnosticError::GridMismatch)?;
        for (fi, f) in panel.iter().enumerate() {
            let va: Vec<f64> = a.paths.iter().map(|p| f.value(p.state(ia))).collect();
            let vb: Vec<f64> = b.paths.iter().map(|p| f.value(p.state(ib))).collect();
            let (ma, sa) = mean_var(&va);
            let (mb, sb) = mean_var(&vb);
            let d = (ma - mb).abs();
            if first || d > best.distance {
                first = false;
                best = WeakDistance {
                    distance: d,
                    std_error: (sa / va.len() as f64 + sb / vb.len() as f64).sqrt(),
                    function: fi,
                    time: t,
                };
            }
        }
    }
    Ok(best)
}

/// Shared simulation settings for the ensemble probes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeSettings {
    pub config: SimConfig,
    pub seed: u64,
    pub n_paths: usize,
    pub panel: Vec<TestFunction>,
    pub times: Vec<f64>,
    /// Allowed increase, in pooled standard errors, between successive rows.
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendRow {
    /// Initial-point gap `‖x_k − x‖_B` (Feller) or the pair `(n, n′)` (Galerkin).
    pub label: String,
    pub parameter: f64,
    pub distance: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendReport {
    pub rows: Vec<TrendRow>,
    pub pass: bool,
}

/// Nonincreasing within `sigma` pooled standard errors of consecutive rows.
pub fn nonincreasing_within(rows: &[TrendRow], sigma: f64) -> bool {
    rows.windows(2).all(|w| {
        let tol = sigma * (w[0].std_error.powi(2) + w[1].std_error.powi(2)).sqrt();
        w[1].distance <= w[0].distance + tol
    })
}

/// Weak distance between ensembles started at `x_k` and at the limit `x`,
/// tabulated against `‖x_k − x‖_B`. All ensembles share one seed.
pub fn feller_probe(
    coeffs: &dyn CoefficientSet,
    basis: &SpectralBasis,
    spec: &JumpMeasureSpec,
    sequence: &[HilbertVector],
    limit: &HilbertVector,
    settings: &ProbeSettings,
) -> Result<TrendReport, DiagnosticError> {
    let gaps: Vec<f64> = sequence
        .iter()
        .map(|x| {
            let n = x.len().max(limit.len());
            dist_b(x.resized(n).coeffs(), limit.resized(n).coeffs())
        })
        .collect();
    if gaps.windows(2).any(|w| w[1] > w[0]) {
        return Err(DiagnosticError::NotConvergent(gaps));
    }
    let run = |x: &HilbertVector| {
        let mut cfg = settings.config.clone();
        cfg.initial = InitialLaw::point(x);
        simulate_ensemble(&cfg, coeffs, basis, spec, settings.seed, settings.n_paths)
    };
    let reference = run(limit)?;
    let mut rows = Vec::with_capacity(sequence.len());
    for (x, gap) in sequence.iter().zip(&gaps) {
        let e = run(x)?;
        let d = weak_distance(&e, &reference, &settings.panel, &settings.times)?;
        rows.push(TrendRow {
            label: format!("gap {gap:.6}"),
            parameter: *gap,
            distance: d.distance,
            std_error: d.std_error,
        });
    }
    Ok(TrendReport {
        pass: nonincreasing_within(&rows, settings.sigma),
        rows,
    })
}

/// Weak distances between ensembles of consecutive mollified approximants.
pub fn galerkin_limit_scan(
    coeffs: &dyn CoefficientSet,
    basis: &SpectralBasis,
    spec: &JumpMeasureSpec,
    n_list: &[usize],
    settings: &ProbeSettings,
) -> Result<TrendReport, DiagnosticError> {
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(DiagnosticError::Invalid("n_list must be increasing".into()));
    }
    let ensembles = n_list
        .iter()
        .map(|&n| {
            let mut cfg = settings.config.clone();
            cfg.approximation = Some(n);
            simulate_ensemble(&cfg, coeffs, basis, spec, settings.seed, settings.n_paths)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    for (k, pair) in ensembles.windows(2).enumerate() {
        let d = weak_distance(&pair[0], &pair[1], &settings.panel, &settings.times)?;
        rows.push(TrendRow {
            label: format!("{} -> {}", n_list[k], n_list[k + 1]),
            parameter: n_list[k] as f64,
            distance: d.distance,
            std_error: d.std_error,
        });
    }
    Ok(TrendReport {
        pass: nonincreasing_within(&rows, settings.sigma),
        rows,
    })
}

/// Exact cell weight `∫_{s_j}^{s_{j+1}} (t − s)^{ξ−1} ds`.
fn rl_weight(t: f64, s0: f64, s1: f64, xi: f64) -> f64 {
    ((t - s0).max(0.0).powf(xi) - (t - s1).max(0.0).powf(xi)) / xi
}

/// `(G_ξ f)(t_i) = Σ_{j<i} [∫_{s_j}^{s_{j+1}} (t_i − s)^{ξ−1} ds] · S_{t_i − s_j} f(s_j)`
/// on the grid `times`, with `values[j]` the coefficients of `f(s_j)`.
pub fn apply_g_xi(xi: f64, times: &[f64], values: &[Vec<f64>], basis: &SpectralBasis) -> Vec<Vec<f64>> {
    assert!(xi > 0.0, "ξ must be positive");
    assert_eq!(times.len(), values.len());
    let mu = basis.mu();
    (0..times.len())
        .map(|i| {
            let t = times[i];
            let n = values.first().map_or(0, Vec::len);
            let mut out = vec![0.0; n];
            for j in 0..i {
                let w = rl_weight(t, times[j], times[j + 1], xi);
                for (k, o) in out.iter_mut().enumerate() {
                    *o += w * (mu[k] * (t - times[j])).exp() * values[j][k];
                }
            }
            out
        })
        .collect()
}

/// Cell average of `(s − r)^{−θ}` over `r ∈ [r_0, r_1]`, `r_1 ≤ s`.
fn kernel_average(s: f64, r0: f64, r1: f64, theta: f64) -> f64 {
    let e = 1.0 - theta;
    ((s - r0).powf(e) - (s - r1).max(0.0).powf(e)) / (e * (r1 - r0))
}

/// `Σ_j [∫ (T − s)^{θ−1} ds over cell j] · (cell average of (s_j − r)^{−θ} over the
/// first r-cell)` on a uniform grid of `steps` cells on `[0, 1]`: the
/// discrete form of `∫_0^1 (1 − s)^{θ−1} s^{−θ} ds = π / sin(πθ)`.
pub fn beta_kernel_sum(theta: f64, steps: usize) -> f64 {
    let dt = 1.0 / steps as f64;
    (1..steps)
        .map(|j| {
            let s = j as f64 * dt;
            rl_weight(1.0, s, s + dt, theta) * kernel_average(s, 0.0, dt, theta)
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorizationRow {
    pub steps: usize,
    pub dt: f64,
    /// Mean over paths of the sup-in-time B-distance.
    pub discrepancy: f64,
    pub per_path: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorizationReport {
    pub theta: f64,
    pub rows: Vec<FactorizationRow>,
    /// Discrepancy strictly decreases as `dt` shrinks.
    pub monotone: bool,
    pub beta_steps: usize,
    pub beta_sum: f64,
    pub beta_target: f64,
    pub beta_relative_error: f64,
}

/// Direct discrete stochastic convolution `Σ_{l<i} S_{t_i − r_l} σ ΔW_l`.
fn direct_convolution(mu: &[f64], times: &[f64], xi: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..times.len())
        .map(|i| {
            let mut out = vec![0.0; mu.len()];
            for l in 0..i {
                for (k, o) in out.iter_mut().enumerate() {
                    *o += (mu[k] * (times[i] - times[l])).exp() * xi[l][k];
                }
            }
            out
        })
        .collect()
}

/// `Y^θ(s_j) = Σ_{l<j} avg(s_j − r)^{−θ} S_{s_j − r_l} σ ΔW_l`.
fn factor_process(theta: f64, mu: &[f64], times: &[f64], xi: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..times.len())
        .map(|j| {
            let mut out = vec![0.0; mu.len()];
            for l in 0..j {
                let c = kernel_average(times[j], times[l], times[l + 1], theta);
                for (k, o) in out.iter_mut().enumerate() {
                    *o += c * (mu[k] * (times[j] - times[l])).exp() * xi[l][k];
                }
            }
            out
        })
        .collect()
}

/// Compares the direct stochastic convolution with `sin(πθ)/π · G_θ Y^θ`
/// for constant `σ`, using one Brownian path per sample refined across the
/// step counts (coarse increments are sums of fine ones).
#[allow(clippy::too_many_arguments)]
pub fn factorization_check(
    theta: f64,
    sigma: &Diffusion,
    basis: &SpectralBasis,
    horizon: f64,
    step_counts: &[usize],
    n_paths: usize,
    seed: u64,
    beta_steps: usize,
) -> Result<FactorizationReport, DiagnosticError> {
    if !(theta > 0.0 && theta < 0.5) {
        return Err(DiagnosticError::Invalid(format!("θ = {theta} outside (0, 1/2)")));
    }
    let finest = *step_counts.iter().max().ok_or_else(|| DiagnosticError::Invalid("no step counts".into()))?;
    if step_counts.iter().any(|s| *s == 0 || finest % s != 0) {
        return Err(DiagnosticError::Invalid("step counts must divide the finest".into()));
    }
    let n_noise = sigma.noise_dim();
    let mu = basis.mu();
    let scale = (theta * PI).sin() / PI;
    let per_path: Vec<Vec<f64>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let mut stream = RandomStream::new(seed, p);
            let dt_f = horizon / finest as f64;
            let fine: Vec<Vec<f64>> = (0..finest)
                .map(|_| (0..n_noise).map(|_| dt_f.sqrt() * stream.normal()).collect())
                .collect();
            step_counts
                .iter()
                .map(|&steps| {
                    let r = finest / steps;
                    let times: Vec<f64> = (0..=steps).map(|i| horizon * i as f64 / steps as f64).collect();
                    let xi: Vec<Vec<f64>> = (0..steps)
                        .map(|l| {
                            let mut dw = vec![0.0; n_noise];
                            for row in &fine[l * r..(l + 1) * r] {
                                for (a, b) in dw.iter_mut().zip(row) {
                                    *a += b;
                                }
                            }
                            let mut out = vec![0.0; basis.n_modes()];
                            sigma.apply_add(&dw, &mut out);
                            out
                        })
                        .collect();
                    let direct = direct_convolution(mu, &times, &xi);
                    let y = factor_process(theta, mu, &times, &xi);
                    let fact = apply_g_xi(theta, &times, &y, basis);
                    direct
                        .iter()
                        .zip(&fact)
                        .map(|(d, f)| {
                            let g: Vec<f64> = f.iter().map(|c| scale * c).collect();
                            dist_b(d, &g)
                        })
                        .fold(0.0, f64::max)
                })
                .collect()
        })
        .collect();
    let mut rows: Vec<FactorizationRow> = step_counts
        .iter()
        .enumerate()
        .map(|(k, &steps)| {
            let vals: Vec<f64> = per_path.iter().map(|v| v[k]).collect();
            FactorizationRow {
                steps,
                dt: horizon / steps as f64,
                discrepancy: vals.iter().sum::<f64>() / vals.len().max(1) as f64,
                per_path: vals,
            }
        })
        .collect();
    rows.sort_by_key(|r| r.steps);
    let monotone = rows.windows(2).all(|w| w[1].discrepancy < w[0].discrepancy);
    let target = PI / (PI * theta).sin();
    let beta_sum = beta_kernel_sum(theta, beta_steps);
    Ok(FactorizationReport {
        theta,
        rows,
        monotone,
        beta_steps,
        beta_sum,
        beta_target: target,
        beta_relative_error: (beta_sum - target).abs() / target,
    })
}
