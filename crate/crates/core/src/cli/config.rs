//! Run configuration: TOML schema, scenario presets and validation.
//!
//! A config file has a top-level `scenario` key and the sections `[basis]`,
//! `[coefficients]`, `[noise]`, `[sim]`, `[diagnostics]` and `[output]`.
//! Every key is optional. Missing keys come from the scenario preset, and
//! keys the preset does not set fall back to the defaults below. Unknown keys
//! are errors.

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::{Table, Value};

use crate::coefficients::CatalogKind;
use crate::diagnostics::{StoppingRule, WeightFactor, WeightSpec};
use crate::generator::{Profile, TestFunction, TruncationSpec};
use crate::noise::JumpMeasureSpec;
use crate::simulator::{InitialLaw, NormKind, Scheme, SimConfig};
use crate::spectral_space::{LambdaPreset, MuPreset, SpectralBasis};

/// A schema violation, with the 1-based line it was found on when known.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[error("{}{message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
pub struct SchemaError {
    pub line: Option<usize>,
    pub message: String,
}

/// A well-typed value that violates a constraint, addressed by key path.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[error("{key}: {message}")]
pub struct ConstraintError {
    pub key: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "kind", content = "errors", rename_all = "kebab-case")]
pub enum ConfigError {
    #[error("schema error: {}", join(.0))]
    Schema(Vec<SchemaError>),
    #[error("constraint violation: {}", join(.0))]
    Constraint(Vec<ConstraintError>),
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Preset name; see [`SCENARIOS`].
    pub scenario: String,
    pub basis: BasisConfig,
    pub coefficients: CatalogKind,
    pub noise: NoiseConfig,
    pub sim: SimSection,
    pub diagnostics: DiagnosticsConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: "ou".into(),
            basis: BasisConfig::default(),
            coefficients: CatalogKind::Ou { noise_scale: 1.0 },
            noise: NoiseConfig::None,
            sim: SimSection::default(),
            diagnostics: DiagnosticsConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BasisConfig {
    pub n_modes: usize,
    pub lambda: LambdaPreset,
    pub mu: MuPreset,
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self {
            n_modes: 16,
            lambda: LambdaPreset::Harmonic,
            mu: MuPreset::Heat1d { diffusivity: 1.0 },
        }
    }
}

/// Lévy measure of the driving Poisson random measure.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum NoiseConfig {
    #[default]
    None,
    SingleAtom {
        rate: f64,
        mark: Vec<f64>,
    },
    CompoundGaussian {
        rate: f64,
        mean: Vec<f64>,
        std: f64,
        #[serde(default = "default_mark_points")]
        points: usize,
    },
}

fn default_mark_points() -> usize {
    8
}

impl NoiseConfig {
    pub fn build(&self) -> JumpMeasureSpec {
        match self {
            Self::None => JumpMeasureSpec::none(),
            Self::SingleAtom { rate, mark } => JumpMeasureSpec::single_atom(*rate, mark.clone()),
            Self::CompoundGaussian { rate, mean, std, points } => {
                JumpMeasureSpec::compound_gaussian(*rate, mean.clone(), *std, *points)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub horizon: f64,
    pub dt: f64,
    pub approximation: Option<usize>,
    pub levels: Vec<f64>,
    pub initial: InitialLaw,
    pub scheme: Scheme,
    pub record_stride: usize,
    pub n_paths: usize,
    pub seed: u64,
    /// Added to the drift of the simulated paths only; diagnostics keep the
    /// unshifted coefficients. Used as a negative control.
    pub drift_shift: Vec<f64>,
    /// Number of individual paths written as CSV by `simulate`.
    pub export_paths: usize,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            dt: 1e-3,
            approximation: None,
            levels: Vec::new(),
            initial: InitialLaw::Point { coeffs: vec![0.3, 0.1] },
            scheme: Scheme::ExponentialEuler,
            record_stride: 1,
            n_paths: 1000,
            seed: 2024,
            drift_shift: Vec::new(),
            export_paths: 4,
        }
    }
}

impl SimSection {
    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            horizon: self.horizon,
            dt: self.dt,
            approximation: self.approximation,
            levels: self.levels.clone(),
            initial: self.initial.clone(),
            scheme: self.scheme,
            record_stride: self.record_stride,
        }
    }
}

/// Diagnostic selections and thresholds. Empty time lists mean
/// `{T/4, T/2, T}` rounded to the recorded grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsConfig {
    pub z_threshold: f64,
    pub max_failure_fraction: f64,
    /// Tolerance, in standard errors, for trend and oracle checks.
    pub sigma: f64,
    pub truncation_threshold: f64,
    pub localization_radius: f64,
    pub localization_norm: NormKind,
    pub functions: Vec<TestFunction>,
    pub windows: Vec<[f64; 2]>,
    pub weights: Vec<WeightSpec>,
    pub variance_modes: Vec<usize>,
    pub variance_times: Vec<f64>,
    pub probe_times: Vec<f64>,
    pub theta: Vec<f64>,
    pub containment_eps: f64,
    pub containment_times: Vec<f64>,
    pub aldous_h: Vec<f64>,
    pub aldous_eps: f64,
    pub aldous_stop: StoppingRule,
    /// Empty skips the moment-bound check.
    pub moment_horizons: Vec<f64>,
    pub moment_radius: f64,
    pub moment_max_residual: f64,
    pub feller_steps: usize,
    pub feller_direction: Vec<f64>,
    pub galerkin_n: Vec<usize>,
    pub factorization_theta: f64,
    pub factorization_steps: Vec<usize>,
    pub factorization_paths: usize,
    pub beta_steps: usize,
    pub beta_tolerance: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        let sat = |scale: f64, y: Vec<f64>| TestFunction::new(Profile::Saturating { scale }, y);
        let bump = |center: f64, width: f64, y: Vec<f64>| TestFunction::new(Profile::Bump { center, width }, y);
        Self {
            z_threshold: 3.0,
            max_failure_fraction: 0.02,
            sigma: 3.0,
            truncation_threshold: 1.0,
            localization_radius: 1e6,
            localization_norm: NormKind::B,
            functions: vec![
                sat(1.0, vec![1.0]),
                sat(0.5, vec![0.0, 1.0]),
                bump(0.2, 1.5, vec![1.0]),
                bump(0.0, 1.0, vec![1.0, 1.0]),
                sat(1.0, vec![0.5, 0.0, -1.0]),
            ],
            windows: vec![
                [0.0, 0.5],
                [0.0, 1.0],
                [0.25, 0.5],
                [0.25, 1.0],
                [0.5, 0.75],
                [0.5, 1.0],
                [0.75, 1.0],
            ],
            weights: vec![
                WeightSpec::one(),
                WeightSpec {
                    factors: vec![WeightFactor {
                        time: 0.25,
                        function: bump(0.0, 2.0, vec![1.0]),
                    }],
                },
            ],
            variance_modes: vec![1, 2, 3],
            variance_times: vec![0.25, 1.0],
            probe_times: Vec::new(),
            theta: vec![0.05, 0.1, 0.2],
            containment_eps: 0.05,
            containment_times: Vec::new(),
            aldous_h: vec![0.2, 0.1, 0.05],
            aldous_eps: 0.5,
            aldous_stop: StoppingRule::Deterministic { time: 0.25 },
            moment_horizons: Vec::new(),
            moment_radius: 5.0,
            moment_max_residual: 0.2,
            feller_steps: 3,
            feller_direction: vec![1.0],
            galerkin_n: vec![2, 4, 8],
            factorization_theta: 0.25,
            factorization_steps: vec![256, 512, 1024],
            factorization_paths: 32,
            beta_steps: 2048,
            beta_tolerance: 0.02,
        }
    }
}

impl DiagnosticsConfig {
    pub fn truncation(&self) -> TruncationSpec {
        TruncationSpec { threshold: self.truncation_threshold }
    }

    pub fn windows(&self) -> Vec<(f64, f64)> {
        self.windows.iter().map(|w| (w[0], w[1])).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Output directory; the `--out` flag takes precedence.
    pub dir: Option<String>,
    pub plots: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: None, plots: true }
    }
}

/// Built-in scenarios and the TOML fragment each one layers over the defaults.
pub const SCENARIOS: &[(&str, &str)] = &[
    ("ou", ""),
    ("heat-demo", ""),
    (
        "corrupted-drift",
        r#"
[sim]
n_paths = 10000
seed = 2025
drift_shift = [1.0]

[diagnostics]
functions = [{ profile = { kind = "saturating", scale = 1.0 }, ystar = [1.0] }]
windows = [[0.0, 1.0]]
weights = [{ factors = [] }]
"#,
    ),
    (
        "jumps",
        r#"
[basis]
n_modes = 8
mu = { kind = "zero" }

[coefficients]
kind = "linear"
rate = 0.5
noise_scale = 1.0
jump_scale = 0.5

[noise]
kind = "compound-gaussian"
rate = 2.0
mean = [0.0]
std = 1.0
points = 6

[sim]
initial = { kind = "point", coeffs = [1.0, 0.5] }
levels = [3.0, 6.0, 12.0, 192.0]
"#,
    ),
    (
        "bounded",
        r#"
[basis]
n_modes = 8

[coefficients]
kind = "bounded-nemytskii"
amplitude = 1.0
noise_scale = 0.5
jump_scale = 1.0

[noise]
kind = "single-atom"
rate = 1.0
mark = [0.5]

[sim]
approximation = 4
levels = [5.0, 10.0, 1000.0]
"#,
    ),
    (
        "heat-drift",
        r#"
[basis]
n_modes = 8

[coefficients]
kind = "heat-drift"
amplitude = 1.0

[sim]
horizon = 0.1
n_paths = 4000
initial = { kind = "point", coeffs = [0.5, 0.2] }

[diagnostics]
probe_times = [0.02, 0.05, 0.1]
variance_times = [0.05, 0.1]
windows = [[0.0, 0.05], [0.0, 0.1], [0.05, 0.1]]
weights = [{ factors = [] }]
aldous_stop = { kind = "deterministic", time = 0.025 }
aldous_h = [0.04, 0.02, 0.01]
functions = [
  { profile = { kind = "saturating", scale = 1.0 }, ystar = [1.0] },
  { profile = { kind = "bump", center = 0.5, width = 1.0 }, ystar = [1.0, 1.0] },
  { profile = { kind = "saturating", scale = 0.5 }, ystar = [0.0, 1.0] },
]
"#,
    ),
];

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|b| *b == b'\n').count() + 1
}

fn schema_error(text: &str, e: toml::de::Error) -> ConfigError {
    ConfigError::Schema(vec![SchemaError {
        line: e.span().map(|s| line_of(text, s.start)),
        message: e.message().trim().to_string(),
    }])
}

/// Overlays `top` on `base`. A table carrying a `kind` tag replaces the
/// base table wholesale, since its fields depend on the tag.
fn merge(base: &mut Table, top: Table) {
    for (key, value) in top {
        match (base.get_mut(&key), value) {
            (Some(Value::Table(b)), Value::Table(t)) if !t.contains_key("kind") => merge(b, t),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

/// Parses and validates a config. Schema errors carry line numbers.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    // Typed pass over the user text alone, so that errors point at its lines.
    let user: RunConfig = toml::from_str(text).map_err(|e| schema_error(text, e))?;
    let user_table: Table = toml::from_str(text).map_err(|e| schema_error(text, e))?;
    let preset = SCENARIOS
        .iter()
        .find(|(name, _)| *name == user.scenario)
        .map(|(_, body)| *body)
        .ok_or_else(|| {
            let line = text
                .lines()
                .position(|l| l.trim_start().starts_with("scenario"))
                .map(|i| i + 1);
            let names: Vec<&str> = SCENARIOS.iter().map(|(n, _)| *n).collect();
            ConfigError::Schema(vec![SchemaError {
                line,
                message: format!("unknown scenario `{}`, expected one of {}", user.scenario, names.join(", ")),
            }])
        })?;
    let mut table: Table = toml::from_str(preset).expect("built-in scenario preset parses");
    merge(&mut table, user_table);
    let config: RunConfig = table
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Schema(vec![SchemaError { line: None, message: e.message().to_string() }]))?;
    config.validate()?;
    Ok(config)
}

impl RunConfig {
    /// Checks every constraint and reports all violations together.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        let mut bad = |key: &str, message: String| {
            errs.push(ConstraintError { key: key.into(), message })
        };
        let b = &self.basis;
        if b.n_modes == 0 {
            bad("basis.n_modes", "must be at least 1".into());
        }
        let basis = if b.n_modes > 0 {
            match SpectralBasis::from_presets(b.n_modes, &b.lambda, &b.mu) {
                Ok(basis) => Some(basis),
                Err(e) => {
                    bad("basis", e.to_string());
                    None
                }
            }
        } else {
            None
        };

        let s = &self.sim;
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(s.horizon) {
            bad("sim.horizon", format!("must be positive, got {}", s.horizon));
        }
        if !positive(s.dt) {
            bad("sim.dt", format!("must be positive, got {}", s.dt));
        } else if positive(s.horizon) && s.dt > s.horizon {
            bad("sim.dt", format!("dt = {} exceeds horizon {}", s.dt, s.horizon));
        }
        if s.n_paths == 0 {
            bad("sim.n_paths", "must be at least 1".into());
        }
        if let Some(basis) = &basis {
            if positive(s.horizon) && positive(s.dt) && s.dt <= s.horizon {
                if let Err(e) = s.sim_config().validate(basis) {
                    bad("sim", e.to_string());
                }
            }
            if s.drift_shift.len() > basis.n_modes() {
                bad("sim.drift_shift", "longer than basis.n_modes".into());
            }
            let init = match &s.initial {
                InitialLaw::Point { coeffs } => coeffs.len(),
                InitialLaw::Gaussian { mean, std } => {
                    if std.iter().any(|x| *x < 0.0) {
                        bad("sim.initial.std", "must be nonnegative".into());
                    }
                    mean.len().max(std.len())
                }
            };
            if init > basis.n_modes() {
                bad("sim.initial", format!("{init} coefficients for {} modes", basis.n_modes()));
            }
        }

        match &self.noise {
            NoiseConfig::None => {}
            NoiseConfig::SingleAtom { rate, mark } => {
                if !(*rate >= 0.0 && rate.is_finite()) {
                    bad("noise.rate", "must be finite and nonnegative".into());
                }
                if mark.is_empty() {
                    bad("noise.mark", "must be nonempty".into());
                }
            }
            NoiseConfig::CompoundGaussian { rate, mean, std, points } => {
                if !(*rate >= 0.0 && rate.is_finite()) {
                    bad("noise.rate", "must be finite and nonnegative".into());
                }
                if mean.is_empty() {
                    bad("noise.mean", "must be nonempty".into());
                }
                if !(*std >= 0.0) {
                    bad("noise.std", "must be nonnegative".into());
                }
                if *points == 0 || points.checked_pow(mean.len() as u32).is_none_or(|n| n > 1 << 16) {
                    bad("noise.points", "tensor rule must have between 1 and 65536 nodes".into());
                }
            }
        }

        let d = &self.diagnostics;
        for (key, v) in [
            ("diagnostics.z_threshold", d.z_threshold),
            ("diagnostics.sigma", d.sigma),
            ("diagnostics.truncation_threshold", d.truncation_threshold),
            ("diagnostics.localization_radius", d.localization_radius),
            ("diagnostics.aldous_eps", d.aldous_eps),
            ("diagnostics.moment_radius", d.moment_radius),
            ("diagnostics.moment_max_residual", d.moment_max_residual),
        ] {
            if !(v > 0.0) {
                bad(key, format!("must be positive, got {v}"));
            }
        }
        for (key, v) in [
            ("diagnostics.max_failure_fraction", d.max_failure_fraction),
            ("diagnostics.containment_eps", d.containment_eps),
            ("diagnostics.beta_tolerance", d.beta_tolerance),
        ] {
            if !(0.0..=1.0).contains(&v) {
                bad(key, format!("must lie in [0, 1], got {v}"));
            }
        }
        let in_horizon = |t: f64| (0.0..=s.horizon + 1e-12).contains(&t);
        for w in &d.windows {
            if !(w[0] <= w[1] && in_horizon(w[0]) && in_horizon(w[1])) {
                bad("diagnostics.windows", format!("window [{}, {}] not inside [0, T]", w[0], w[1]));
            }
        }
        for (key, times) in [
            ("diagnostics.variance_times", &d.variance_times),
            ("diagnostics.probe_times", &d.probe_times),
            ("diagnostics.containment_times", &d.containment_times),
            ("diagnostics.moment_horizons", &d.moment_horizons),
        ] {
            if let Some(t) = times.iter().find(|t| !in_horizon(**t)) {
                bad(key, format!("time {t} outside [0, T]"));
            }
        }
        if d.variance_modes.iter().any(|k| *k == 0 || *k > b.n_modes) {
            bad("diagnostics.variance_modes", "modes are 1-based and at most basis.n_modes".into());
        }
        if d.theta.iter().any(|t| !(*t > 0.0)) {
            bad("diagnostics.theta", "must be positive".into());
        }
        if d.aldous_h.iter().any(|h| !(*h >= 0.0)) {
            bad("diagnostics.aldous_h", "must be nonnegative".into());
        }
        if d.galerkin_n.windows(2).any(|w| w[0] >= w[1]) || d.galerkin_n.iter().any(|n| *n == 0 || *n > b.n_modes) {
            bad("diagnostics.galerkin_n", "must be increasing, in 1..=basis.n_modes".into());
        }
        if !(d.factorization_theta > 0.0 && d.factorization_theta < 0.5) {
            bad("diagnostics.factorization_theta", "must lie in (0, 1/2)".into());
        }
        if let Some(&finest) = d.factorization_steps.iter().max() {
            if d.factorization_steps.iter().any(|n| *n == 0 || finest % n != 0) {
                bad("diagnostics.factorization_steps", "each count must divide the finest".into());
            }
        } else {
            bad("diagnostics.factorization_steps", "must be nonempty".into());
        }
        if d.factorization_paths == 0 || d.beta_steps == 0 {
            bad("diagnostics", "factorization_paths and beta_steps must be at least 1".into());
        }
        if d.feller_direction.is_empty() || d.feller_direction.len() > b.n_modes {
            bad("diagnostics.feller_direction", "must have 1..=basis.n_modes entries".into());
        }

        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Constraint(errs))
        }
    }

    pub fn basis(&self) -> SpectralBasis {
        SpectralBasis::from_presets(self.basis.n_modes, &self.basis.lambda, &self.basis.mu)
            .expect("validated basis")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(parse_config("").unwrap(), RunConfig::default());
    }

    #[test]
    fn line_of_counts_newlines() {
        assert_eq!(line_of("a\nb\nc", 0), 1);
        assert_eq!(line_of("a\nb\nc", 2), 2);
        assert_eq!(line_of("a\nb\nc", 4), 3);
    }

    #[test]
    fn merge_replaces_tagged_tables() {
        let mut base: Table = toml::from_str("[c]\nkind = \"ou\"\nnoise_scale = 2.0\n[s]\na = 1\nb = 2").unwrap();
        let top: Table = toml::from_str("[c]\nkind = \"zero\"\n[s]\nb = 3").unwrap();
        merge(&mut base, top);
        assert!(!base["c"].as_table().unwrap().contains_key("noise_scale"));
        assert_eq!(base["s"]["a"].as_integer(), Some(1));
        assert_eq!(base["s"]["b"].as_integer(), Some(3));
    }

    #[test]
    fn every_preset_validates() {
        for (name, _) in SCENARIOS {
            let c = parse_config(&format!("scenario = \"{name}\"")).unwrap();
            assert_eq!(&c.scenario, name);
        }
    }
}
