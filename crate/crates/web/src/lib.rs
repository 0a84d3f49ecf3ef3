//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export returns a flat `Float64Array`; the layout is given on each
//! function. The `*_impl` functions hold the logic and are what the native
//! tests call.

use spectral_mp::coefficients::{Catalog, CatalogKind, Diffusion};
use spectral_mp::diagnostics::factorization_check;
use spectral_mp::noise::{JumpMeasureSpec, RandomStream};
use spectral_mp::simulator::{mean_var, simulate_ensemble, simulate_path, InitialLaw, SimConfig};
use spectral_mp::spectral_space::SpectralBasis;
use wasm_bindgen::prelude::*;

const SHOWN_MODES: usize = 3;
const MAX_ROWS: usize = 200;

fn steps_for(horizon: f64, dt: f64) -> Result<f64, String> {
    if !(horizon > 0.0 && dt > 0.0 && dt <= horizon) {
        return Err(format!("need 0 < dt <= horizon, got dt = {dt}, horizon = {horizon}"));
    }
    // snap dt so that it divides the horizon
    Ok(horizon / (horizon / dt).round())
}

/// Rows `[t, var₁, exact₁, var₂, exact₂, var₃, exact₃]` for the
/// Ornstein–Uhlenbeck ensemble `dX = AX dt + dW` on the heat basis.
pub fn ou_variance_impl(n_modes: usize, n_paths: usize, horizon: f64, dt: f64, seed: u64) -> Result<Vec<f64>, String> {
    if n_modes < SHOWN_MODES || n_paths < 2 {
        return Err("need at least 3 modes and 2 paths".into());
    }
    let basis = SpectralBasis::harmonic_heat(n_modes);
    let ou = Catalog::new(CatalogKind::Ou { noise_scale: 1.0 }, &basis);
    let mut cfg = SimConfig::new(horizon, steps_for(horizon, dt)?, InitialLaw::Point { coeffs: vec![0.3, 0.1] });
    cfg.record_stride = (cfg.n_steps() / MAX_ROWS).max(1);
    let ens = simulate_ensemble(&cfg, &ou, &basis, &JumpMeasureSpec::none(), seed, n_paths).map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(ens.times().len() * (1 + 2 * SHOWN_MODES));
    for (i, &t) in ens.times().iter().enumerate() {
        out.push(t);
        for k in 0..SHOWN_MODES {
            let mu = basis.mu()[k];
            out.push(mean_var(&ens.mode_samples(i, k)).1);
            out.push((2.0 * mu * t).exp_m1() / (2.0 * mu));
        }
    }
    Ok(out)
}

/// `u(t, ξ) = Σ_k c_k(t) √2 sin(kπξ)` for one path of
/// `dY = (AY + a·sin(Y₁)e₁) dt + dW`, sampled on `nt × nx` points, row-major in `t`.
pub fn heat_field_impl(
    n_modes: usize,
    amplitude: f64,
    horizon: f64,
    nx: usize,
    nt: usize,
    seed: u64,
) -> Result<Vec<f64>, String> {
    if n_modes == 0 || nx < 2 || nt < 2 {
        return Err("need n_modes >= 1, nx >= 2 and nt >= 2".into());
    }
    let basis = SpectralBasis::harmonic_heat(n_modes);
    let drift = Catalog::new(CatalogKind::HeatDrift { amplitude }, &basis);
    let steps = 20 * (nt - 1);
    let mut cfg = SimConfig::new(horizon, horizon / steps as f64, InitialLaw::Point { coeffs: vec![1.0, 0.0, 0.5] });
    cfg.record_stride = 20;
    let path = simulate_path(&cfg, &drift, &basis, &JumpMeasureSpec::none(), &mut RandomStream::new(seed, 0))
        .map_err(|e| e.to_string())?;
    let sines: Vec<Vec<f64>> = (0..nx)
        .map(|j| {
            let xi = j as f64 / (nx - 1) as f64;
            (1..=n_modes)
                .map(|k| std::f64::consts::SQRT_2 * (k as f64 * std::f64::consts::PI * xi).sin())
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(nt * nx);
    for i in 0..path.len() {
        let c = path.state(i);
        out.extend(sines.iter().map(|s| s.iter().zip(c).map(|(a, b)| a * b).sum::<f64>()));
    }
    Ok(out)
}

/// Pairs `[dt, discrepancy]` for the factorized stochastic convolution on a
/// single mode with eigenvalue `mu ≤ 0`, followed by the relative error of
/// the discrete kernel identity.
pub fn factorization_impl(theta: f64, mu: f64, n_paths: usize, seed: u64) -> Result<Vec<f64>, String> {
    if mu > 0.0 {
        return Err("mu must be <= 0".into());
    }
    let basis = SpectralBasis::new(vec![1.0], vec![mu]).map_err(|e| e.to_string())?;
    let r = factorization_check(theta, &Diffusion::Diagonal(vec![1.0]), &basis, 1.0, &[32, 64, 128, 256], n_paths, seed, 2048)
        .map_err(|e| e.to_string())?;
    let mut out: Vec<f64> = r.rows.iter().flat_map(|row| [row.dt, row.discrepancy]).collect();
    out.push(r.beta_relative_error);
    Ok(out)
}

fn js<T>(r: Result<T, String>) -> Result<T, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn ou_variance(n_modes: usize, n_paths: usize, horizon: f64, dt: f64, seed: u64) -> Result<Vec<f64>, JsError> {
    js(ou_variance_impl(n_modes, n_paths, horizon, dt, seed))
}

#[wasm_bindgen]
pub fn heat_field(n_modes: usize, amplitude: f64, horizon: f64, nx: usize, nt: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    js(heat_field_impl(n_modes, amplitude, horizon, nx, nt, seed))
}

#[wasm_bindgen]
pub fn factorization(theta: f64, mu: f64, n_paths: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    js(factorization_impl(theta, mu, n_paths, seed))
}
