//! Command runners behind the `spectral-mp` binary. Each command reads a
//! [`RunConfig`], writes CSV/JSON/SVG artifacts plus a `MANIFEST` of SHA-256
//! hashes into the output directory, and returns its pass flags.

pub mod config;
pub mod plot;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::coefficients::{convergence_scan, Catalog, CoefficientError, CatalogKind, CoefficientSet, ShiftedDrift};
use crate::diagnostics::{
    aldous_statistic, compact_containment, factorization_check, feller_probe, galerkin_limit_scan, martingale_test,
    moment_bound_check, nonincreasing_within, w_prime_summary, DiagnosticError, MartingaleEntry, MartingaleReport,
    MartingaleSettings, ProbeSettings, TrendRow,
};
use crate::noise::{JumpMeasureSpec, RandomStream};
use crate::simulator::{fmt17, mean_var, simulate_ensemble, Ensemble, InitialLaw, SimConfig, SimError};
use crate::spectral_space::{HilbertVector, SpectralBasis};

pub use config::{parse_config, ConfigError, ConstraintError, RunConfig, SchemaError};
use plot::{line_chart, Chart, Series};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Simulate an ensemble and export paths and marginal statistics.
    Simulate,
    /// Martingale-problem z-scores for the configured test functions.
    VerifyMp,
    /// Compact containment, w′ modulus, Aldous statistic and moment bound.
    Tightness,
    /// Weak distances for converging initial points.
    Feller,
    /// Weak distances between successive Galerkin approximants.
    GalerkinScan,
    /// Stochastic convolution against its factorization formula.
    Factorization,
    /// Ornstein–Uhlenbeck variance oracle plus martingale report.
    HeatDemo,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::VerifyMp => "verify-mp",
            Self::Tightness => "tightness",
            Self::Feller => "feller",
            Self::GalerkinScan => "galerkin-scan",
            Self::Factorization => "factorization",
            Self::HeatDemo => "heat-demo",
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Diagnostic(#[from] DiagnosticError),
    #[error(transparent)]
    Coefficients(#[from] CoefficientError),
    #[error("{0}")]
    Unsupported(String),
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl RunError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Unsupported(_) => 2,
            _ => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Config(ConfigError::Schema(_)) => "schema",
            Self::Config(ConfigError::Constraint(_)) => "constraint",
            Self::Simulation(_) => "simulation",
            Self::Diagnostic(_) | Self::Coefficients(_) => "diagnostic",
            Self::Unsupported(_) => "unsupported",
            Self::Io { .. } => "io",
        }
    }
}

/// One pass flag with a one-line explanation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &str, pass: bool, detail: String) -> Check {
    Check {
        name: name.into(),
        pass,
        detail,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Artifact {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutcome {
    pub command: Command,
    pub checks: Vec<Check>,
    pub artifacts: Vec<Artifact>,
}

impl RunOutcome {
    /// True iff every check passed.
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn exit_code(&self) -> i32 {
        if self.pass() {
            0
        } else {
            1
        }
    }
}

/// Collects artifacts and their hashes; `finish` writes the MANIFEST.
struct Artifacts {
    dir: PathBuf,
    files: BTreeMap<String, String>,
    plots: bool,
}

impl Artifacts {
    fn new(dir: &Path, plots: bool) -> Result<Self, RunError> {
        fs::create_dir_all(dir).map_err(|source| RunError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: BTreeMap::new(),
            plots,
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), RunError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|source| RunError::Io { path, source })?;
        self.files.insert(name.into(), hex::encode(Sha256::digest(bytes)));
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), RunError> {
        let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn csv(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<(), RunError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| RunError::Io {
            path: PathBuf::from(name),
            source: e.into(),
        };
        w.write_record(header).map_err(io)?;
        for row in rows {
            w.write_record(row).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| RunError::Io {
            path: PathBuf::from(name),
            source: e.into_error(),
        })?;
        self.write(name, &bytes)
    }

    fn plot(&mut self, name: &str, chart: &Chart) -> Result<(), RunError> {
        if self.plots {
            self.write(name, line_chart(chart).as_bytes())?;
        }
        Ok(())
    }

    fn finish(mut self) -> Result<Vec<Artifact>, RunError> {
        let mut manifest = String::new();
        for (name, hash) in &self.files {
            manifest.push_str(&format!("{hash}  {name}\n"));
        }
        let path = self.dir.join("MANIFEST");
        fs::write(&path, &manifest).map_err(|source| RunError::Io { path, source })?;
        Ok(std::mem::take(&mut self.files)
            .into_iter()
            .map(|(name, sha256)| Artifact { name, sha256 })
            .collect())
    }
}

/// JSON report envelope: report type, config echo, then the report body.
#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    report: &'a str,
    config: &'a RunConfig,
    pass: bool,
    #[serde(flatten)]
    body: T,
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|c| c.to_string()).collect()
}

/// Recorded grid times of a simulation config.
pub fn recorded_times(cfg: &SimConfig) -> Vec<f64> {
    let n = cfg.n_steps();
    (0..=n)
        .filter(|j| j % cfg.record_stride == 0 || *j == n)
        .map(|j| cfg.horizon * j as f64 / n as f64)
        .collect()
}

/// `times` if nonempty, otherwise the recorded times nearest `{T/4, T/2, T}`.
fn times_or_default(times: &[f64], cfg: &SimConfig) -> Vec<f64> {
    if !times.is_empty() {
        return times.to_vec();
    }
    let grid = recorded_times(cfg);
    let mut out: Vec<f64> = [0.25, 0.5, 1.0]
        .iter()
        .map(|f| {
            let t = f * cfg.horizon;
            *grid
                .iter()
                .min_by(|a, b| (*a - t).abs().total_cmp(&(*b - t).abs()))
                .expect("grid is nonempty")
        })
        .collect();
    out.dedup();
    out
}

/// Every `k`-th element plus the last, for plotting long series.
fn thin<T: Copy>(xs: &[T], max_points: usize) -> Vec<T> {
    let k = xs.len().div_ceil(max_points).max(1);
    let mut out: Vec<T> = xs.iter().step_by(k).copied().collect();
    if !(xs.len() - 1).is_multiple_of(k) {
        out.push(xs[xs.len() - 1]);
    }
    out
}

struct Setup {
    basis: SpectralBasis,
    catalog: Catalog,
    spec: JumpMeasureSpec,
    sim: SimConfig,
}

impl Setup {
    fn new(config: &RunConfig) -> Result<Self, RunError> {
        config.validate()?;
        let basis = config.basis();
        Ok(Self {
            catalog: Catalog::new(config.coefficients.clone(), &basis),
            spec: config.noise.build(),
            sim: config.sim.sim_config(),
            basis,
        })
    }

    /// Ensemble from the configured coefficients, with the drift shift applied.
    fn ensemble(&self, config: &RunConfig) -> Result<Ensemble, RunError> {
        let s = &config.sim;
        let e = if s.drift_shift.iter().any(|c| *c != 0.0) {
            let shift = HilbertVector::new(s.drift_shift.clone()).resized(self.basis.n_modes());
            let shifted = ShiftedDrift::new(&self.catalog, shift);
            simulate_ensemble(&self.sim, &shifted, &self.basis, &self.spec, s.seed, s.n_paths)?
        } else {
            simulate_ensemble(&self.sim, &self.catalog, &self.basis, &self.spec, s.seed, s.n_paths)?
        };
        Ok(e)
    }
}

/// Runs `command` and writes its artifacts to `out_dir`.
pub fn run(command: Command, config: &RunConfig, out_dir: &Path) -> Result<RunOutcome, RunError> {
    let setup = Setup::new(config)?;
    let mut art = Artifacts::new(out_dir, config.output.plots)?;
    let mut failures = serde_json::Map::new();
    let checks = match command {
        Command::Simulate => simulate(config, &setup, &mut art)?,
        Command::VerifyMp => {
            let ens = setup.ensemble(config)?;
            let (c, fails) = martingale(config, &setup, &ens, &mut art)?;
            failures.insert("martingale_failures".into(), serde_json::to_value(fails).unwrap());
            vec![c]
        }
        Command::HeatDemo => {
            let (checks, fails) = heat_demo(config, &setup, &mut art)?;
            failures.insert("martingale_failures".into(), serde_json::to_value(fails).unwrap());
            checks
        }
        Command::Tightness => tightness(config, &setup, &mut art)?,
        Command::Feller => feller(config, &setup, &mut art)?,
        Command::GalerkinScan => galerkin(config, &setup, &mut art)?,
        Command::Factorization => factorization(config, &setup, &mut art)?,
    };
    let pass = checks.iter().all(|c| c.pass);
    #[derive(Serialize)]
    struct Summary<'a> {
        command: Command,
        scenario: &'a str,
        checks: &'a [Check],
    }
    art.json(
        "summary.json",
        &Report {
            report: "summary",
            config,
            pass,
            body: Summary {
                command,
                scenario: &config.scenario,
                checks: &checks,
            },
        },
    )?;
    if !pass {
        let failed: Vec<&Check> = checks.iter().filter(|c| !c.pass).collect();
        let mut body = serde_json::Map::new();
        body.insert("report".into(), "failures".into());
        body.insert("command".into(), command.name().into());
        body.insert("failed_checks".into(), serde_json::to_value(failed).unwrap());
        for (k, v) in failures {
            if v.as_array().is_some_and(|a| !a.is_empty()) {
                body.insert(k, v);
            }
        }
        art.json("failures.json", &body)?;
    }
    Ok(RunOutcome {
        command,
        checks,
        artifacts: art.finish()?,
    })
}

fn simulate(config: &RunConfig, setup: &Setup, art: &mut Artifacts) -> Result<Vec<Check>, RunError> {
    let ens = setup.ensemble(config)?;
    art.json(
        "ensemble.json",
        &Report {
            report: "ensemble",
            config,
            pass: true,
            body: ens.summary(),
        },
    )?;
    let io = |name: &str| {
        let name = name.to_string();
        move |e: csv::Error| RunError::Io {
            path: PathBuf::from(name),
            source: e.into(),
        }
    };
    let mut buf = Vec::new();
    ens.write_marginals_csv(&mut buf).map_err(io("marginals.csv"))?;
    art.write("marginals.csv", &buf)?;
    for p in ens.paths.iter().take(config.sim.export_paths) {
        let name = format!("path_{:04}.csv", p.path_index);
        let mut buf = Vec::new();
        p.write_csv(&mut buf).map_err(io(&name))?;
        art.write(&name, &buf)?;
    }

    let idx: Vec<usize> = thin(&(0..ens.times().len()).collect::<Vec<_>>(), 400);
    let mut series = Vec::new();
    for k in 0..ens.n_modes().min(3) {
        let stats: Vec<(f64, (f64, f64))> = idx
            .iter()
            .map(|&i| (ens.times()[i], mean_var(&ens.mode_samples(i, k))))
            .collect();
        series.push(Series::new(format!("mean c{}", k + 1), stats.iter().map(|(t, s)| (*t, s.0)).collect()));
        series.push(Series::new(format!("var c{}", k + 1), stats.iter().map(|(t, s)| (*t, s.1)).collect()).dashed());
    }
    art.plot(
        "marginals.svg",
        &Chart {
            title: "Ensemble marginals".into(),
            x_label: "t".into(),
            y_label: "mean / variance".into(),
            series,
        },
    )?;
    Ok(Vec::new())
}

fn martingale(
    config: &RunConfig,
    setup: &Setup,
    ens: &Ensemble,
    art: &mut Artifacts,
) -> Result<(Check, Vec<MartingaleEntry>), RunError> {
    let d = &config.diagnostics;
    let settings = MartingaleSettings {
        radius: d.localization_radius,
        norm: d.localization_norm,
        z_threshold: d.z_threshold,
        truncation: d.truncation(),
    };
    let report: MartingaleReport = martingale_test(
        ens,
        &setup.catalog,
        &setup.basis,
        &setup.spec,
        &d.functions,
        &d.windows(),
        &d.weights,
        &settings,
    )?;
    let pass = !report.entries.is_empty() && report.calibrated(d.max_failure_fraction);
    art.json(
        "martingale.json",
        &Report {
            report: "martingale",
            config,
            pass,
            body: &report,
        },
    )?;
    let rows: Vec<Vec<String>> = report
        .entries
        .iter()
        .map(|e| {
            vec![
                fmt17(e.t),
                fmt17(e.s),
                e.function.to_string(),
                e.weight.to_string(),
                fmt17(e.mean),
                fmt17(e.std_error),
                fmt17(e.z),
                e.pass.to_string(),
            ]
        })
        .collect();
    art.csv(
        "martingale.csv",
        &header(&["time", "window_start", "function", "weight", "mean", "std_error", "z", "pass"]),
        &rows,
    )?;
    let detail = format!(
        "{} combinations ({} skipped), {} with |z| >= {} ({:.2}%, limit {:.2}%), max |z| {:.3}",
        report.entries.len(),
        report.skipped,
        report.failures,
        d.z_threshold,
        100.0 * report.failure_fraction,
        100.0 * d.max_failure_fraction,
        report.max_abs_z
    );
    let failing = report.entries.into_iter().filter(|e| !e.pass).collect();
    Ok((check("martingale", pass, detail), failing))
}

/// Closed-form variance of mode `k` (0-based) for the OU catalog.
fn ou_variance(noise_scale: f64, mu: f64, initial: &InitialLaw, k: usize, t: f64) -> f64 {
    let z = 2.0 * mu * t;
    let growth = if z == 0.0 { t } else { z.exp_m1() / (2.0 * mu) };
    let init = match initial {
        InitialLaw::Point { .. } => 0.0,
        InitialLaw::Gaussian { std, .. } => std.get(k).copied().unwrap_or(0.0).powi(2) * z.exp(),
    };
    noise_scale * noise_scale * growth + init
}

fn heat_demo(
    config: &RunConfig,
    setup: &Setup,
    art: &mut Artifacts,
) -> Result<(Vec<Check>, Vec<MartingaleEntry>), RunError> {
    let CatalogKind::Ou { noise_scale } = config.coefficients else {
        return Err(RunError::Unsupported("heat-demo needs coefficients.kind = \"ou\"".into()));
    };
    if !setup.spec.is_empty() || !config.sim.levels.is_empty() || config.sim.drift_shift.iter().any(|c| *c != 0.0) {
        return Err(RunError::Unsupported(
            "heat-demo needs noise.kind = \"none\", no truncation levels and no drift shift".into(),
        ));
    }
    let d = &config.diagnostics;
    let ens = setup.ensemble(config)?;
    let mu = setup.basis.mu();
    let modes: Vec<usize> = d.variance_modes.iter().map(|k| k - 1).collect();

    let times = ens.times();
    let mut head = vec!["time".to_string()];
    for k in &modes {
        head.push(format!("var_c{}", k + 1));
        head.push(format!("exact_c{}", k + 1));
    }
    let mut rows = Vec::new();
    let mut emp: Vec<Vec<(f64, f64)>> = vec![Vec::new(); modes.len()];
    let mut exact: Vec<Vec<(f64, f64)>> = vec![Vec::new(); modes.len()];
    for (i, &t) in times.iter().enumerate() {
        let mut row = vec![fmt17(t)];
        for (j, &k) in modes.iter().enumerate() {
            let (_, v) = mean_var(&ens.mode_samples(i, k));
            let e = ou_variance(noise_scale, mu[k], &config.sim.initial, k, t);
            row.push(fmt17(v));
            row.push(fmt17(e));
            emp[j].push((t, v));
            exact[j].push((t, e));
        }
        rows.push(row);
    }
    art.csv("variance.csv", &head, &rows)?;

    #[derive(Serialize)]
    struct VarianceRow {
        mode: usize,
        time: f64,
        empirical: f64,
        exact: f64,
        std_error: f64,
        z: f64,
    }
    let mut checks_rows = Vec::new();
    for &t in &d.variance_times {
        let i = ens.paths[0]
            .index_at(t)
            .filter(|i| (times[*i] - t).abs() <= 1e-9 * config.sim.horizon.max(1.0))
            .ok_or(DiagnosticError::OffGrid(t))?;
        for &k in &modes {
            let xs = ens.mode_samples(i, k);
            let (m, v) = mean_var(&xs);
            let dev: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
            let se = (mean_var(&dev).1 / xs.len() as f64).sqrt();
            let e = ou_variance(noise_scale, mu[k], &config.sim.initial, k, t);
            let z = if se > 0.0 {
                (v - e) / se
            } else if v == e {
                0.0
            } else {
                f64::INFINITY
            };
            checks_rows.push(VarianceRow {
                mode: k + 1,
                time: t,
                empirical: v,
                exact: e,
                std_error: se,
                z,
            });
        }
    }
    let worst = checks_rows.iter().map(|r| r.z.abs()).fold(0.0, f64::max);
    let var_pass = worst < d.sigma;
    #[derive(Serialize)]
    struct VarianceBody<'a> {
        sigma: f64,
        max_abs_z: f64,
        entries: &'a [VarianceRow],
    }
    art.json(
        "variance.json",
        &Report {
            report: "ou-variance",
            config,
            pass: var_pass,
            body: VarianceBody {
                sigma: d.sigma,
                max_abs_z: worst,
                entries: &checks_rows,
            },
        },
    )?;
    let mut series = Vec::new();
    for (j, &k) in modes.iter().enumerate() {
        series.push(Series::new(format!("empirical c{}", k + 1), thin(&emp[j], 400)));
        series.push(Series::new(format!("exact c{}", k + 1), thin(&exact[j], 400)).dashed());
    }
    art.plot(
        "variance.svg",
        &Chart {
            title: "Mode variances against the closed form".into(),
            x_label: "t".into(),
            y_label: "Var c_k(t)".into(),
            series,
        },
    )?;
    let var_check = check(
        "ou-variance",
        var_pass,
        format!("max |z| {worst:.3} over {} (mode, time) pairs, limit {}", checks_rows.len(), d.sigma),
    );
    let (mc, fails) = martingale(config, setup, &ens, art)?;
    Ok((vec![var_check, mc], fails))
}

fn trend_csv(art: &mut Artifacts, name: &str, first: &str, rows: &[TrendRow]) -> Result<(), RunError> {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![fmt17(r.parameter), r.label.clone(), fmt17(r.distance), fmt17(r.std_error)])
        .collect();
    art.csv(name, &header(&[first, "label", "distance", "std_error"]), &body)
}

fn trend_series(rows: &[TrendRow]) -> Vec<Series> {
    vec![
        Series::new("distance", rows.iter().map(|r| (r.parameter, r.distance)).collect()),
        Series::new("distance + 1 s.e.", rows.iter().map(|r| (r.parameter, r.distance + r.std_error)).collect()).dashed(),
    ]
}

fn tightness(config: &RunConfig, setup: &Setup, art: &mut Artifacts) -> Result<Vec<Check>, RunError> {
    let d = &config.diagnostics;
    let ens = setup.ensemble(config)?;
    let horizon = config.sim.horizon;
    let mut checks = Vec::new();

    let ctimes = times_or_default(&d.containment_times, &setup.sim);
    let containment = compact_containment(&ens, &ctimes, d.containment_eps, &setup.basis)?;
    let finite = containment.iter().all(|r| r.radius.is_finite());
    art.csv(
        "containment.csv",
        &header(&["time", "radius", "used", "excluded_exploded"]),
        &containment
            .iter()
            .map(|r| vec![fmt17(r.time), fmt17(r.radius), r.used.to_string(), r.excluded_exploded.to_string()])
            .collect::<Vec<_>>(),
    )?;
    art.plot(
        "containment.svg",
        &Chart {
            title: format!("K-norm {}-quantile", 1.0 - d.containment_eps),
            x_label: "t".into(),
            y_label: "radius".into(),
            series: vec![Series::new("radius", containment.iter().map(|r| (r.time, r.radius)).collect())],
        },
    )?;
    checks.push(check(
        "compact-containment",
        finite,
        format!(
            "radii {:?} at times {:?}",
            containment.iter().map(|r| r.radius).collect::<Vec<_>>(),
            ctimes
        ),
    ));

    let mut thetas = d.theta.clone();
    thetas.sort_by(f64::total_cmp);
    let wp: Vec<_> = thetas.iter().map(|&th| w_prime_summary(&ens, th, horizon)).collect();
    let w_ok = wp.iter().all(|w| w.max.is_finite()) && wp.windows(2).all(|w| w[0].mean <= w[1].mean);
    art.csv(
        "w_prime.csv",
        &header(&["theta", "mean", "median", "q90", "max"]),
        &wp.iter()
            .map(|w| vec![fmt17(w.theta), fmt17(w.mean), fmt17(w.median), fmt17(w.q90), fmt17(w.max)])
            .collect::<Vec<_>>(),
    )?;
    art.plot(
        "w_prime.svg",
        &Chart {
            title: "w′ modulus against θ".into(),
            x_label: "θ".into(),
            y_label: "w′".into(),
            series: vec![
                Series::new("mean", wp.iter().map(|w| (w.theta, w.mean)).collect()),
                Series::new("q90", wp.iter().map(|w| (w.theta, w.q90)).collect()).dashed(),
            ],
        },
    )?;
    checks.push(check(
        "w-prime",
        w_ok,
        format!("mean w′ {:?} for θ {:?}", wp.iter().map(|w| w.mean).collect::<Vec<_>>(), thetas),
    ));

    let mut hs = d.aldous_h.clone();
    hs.sort_by(|a, b| b.total_cmp(a));
    let aldous: Vec<TrendRow> = hs
        .iter()
        .map(|&h| {
            let p = aldous_statistic(&ens, d.aldous_stop, h, d.aldous_eps);
            TrendRow {
                label: format!("h {h}"),
                parameter: h,
                distance: p.probability,
                std_error: p.std_error,
            }
        })
        .collect();
    let a_ok = nonincreasing_within(&aldous, d.sigma);
    trend_csv(art, "aldous.csv", "h", &aldous)?;
    checks.push(check(
        "aldous",
        a_ok,
        format!(
            "P(|X(ρ+h) − X(ρ)| ≥ {}) = {:?} for h {:?}",
            d.aldous_eps,
            aldous.iter().map(|r| r.distance).collect::<Vec<_>>(),
            hs
        ),
    ));

    let moments = if d.moment_horizons.is_empty() {
        None
    } else {
        let r = moment_bound_check(&ens, d.moment_radius, &d.moment_horizons, &setup.basis)?;
        checks.push(check(
            "moment-bound",
            r.pass(d.moment_max_residual),
            format!("slope {:.4}, residual {:.3e}, limit {}", r.slope, r.residual, d.moment_max_residual),
        ));
        Some(r)
    };

    #[derive(Serialize)]
    struct Body<'a, W: Serialize, M: Serialize> {
        containment: &'a [crate::diagnostics::ContainmentRow],
        w_prime: &'a [W],
        aldous: &'a [TrendRow],
        moments: M,
    }
    art.json(
        "tightness.json",
        &Report {
            report: "tightness",
            config,
            pass: checks.iter().all(|c| c.pass),
            body: Body {
                containment: &containment,
                w_prime: &wp,
                aldous: &aldous,
                moments: &moments,
            },
        },
    )?;
    Ok(checks)
}

fn probe_settings(config: &RunConfig, setup: &Setup) -> ProbeSettings {
    let d = &config.diagnostics;
    ProbeSettings {
        config: setup.sim.clone(),
        seed: config.sim.seed,
        n_paths: config.sim.n_paths,
        panel: d.functions.clone(),
        times: times_or_default(&d.probe_times, &setup.sim),
        sigma: d.sigma,
    }
}

fn feller(config: &RunConfig, setup: &Setup, art: &mut Artifacts) -> Result<Vec<Check>, RunError> {
    let InitialLaw::Point { coeffs } = &config.sim.initial else {
        return Err(RunError::Unsupported("feller needs a point initial law".into()));
    };
    let d = &config.diagnostics;
    let n = setup.basis.n_modes();
    let x = HilbertVector::new(coeffs.clone()).resized(n);
    let dir = HilbertVector::new(d.feller_direction.clone()).resized(n);
    let seq: Vec<HilbertVector> = (1..=d.feller_steps as i32)
        .map(|k| &x + &dir.scaled(0.5f64.powi(k)))
        .collect();
    let report = feller_probe(&setup.catalog, &setup.basis, &setup.spec, &seq, &x, &probe_settings(config, setup))?;
    trend_csv(art, "feller.csv", "gap", &report.rows)?;
    art.plot(
        "feller.svg",
        &Chart {
            title: "Weak distance against initial gap".into(),
            x_label: "‖x_k − x‖_B".into(),
            y_label: "distance".into(),
            series: trend_series(&report.rows),
        },
    )?;
    art.json(
        "feller.json",
        &Report {
            report: "feller",
            config,
            pass: report.pass,
            body: &report,
        },
    )?;
    let d: Vec<f64> = report.rows.iter().map(|r| r.distance).collect();
    Ok(vec![check("feller", report.pass, format!("distances {d:?}"))])
}

fn galerkin(config: &RunConfig, setup: &Setup, art: &mut Artifacts) -> Result<Vec<Check>, RunError> {
    let d = &config.diagnostics;
    let n = setup.basis.n_modes();
    let mut rng = RandomStream::new(config.sim.seed, u64::MAX);
    let grid: Vec<HilbertVector> = (0..50)
        .map(|_| (1..=n).map(|k| 2.0 * rng.normal() / k as f64).collect::<Vec<_>>().into())
        .collect();
    let marks: Vec<Vec<f64>> = if setup.spec.is_empty() {
        vec![vec![1.0]]
    } else {
        setup.spec.quadrature().iter().take(16).map(|(m, _)| m.clone()).collect()
    };
    let scan = convergence_scan(&setup.catalog, &setup.basis, &d.galerkin_n, &grid, &marks)?;
    art.csv(
        "coefficient_scan.csv",
        &header(&["n", "eps_n", "drift_distance", "diffusion_distance", "jump_distance"]),
        &scan
            .iter()
            .map(|r| {
                vec![
                    r.n.to_string(),
                    fmt17(r.eps_n),
                    fmt17(r.drift_distance),
                    fmt17(r.diffusion_distance),
                    fmt17(r.jump_distance),
                ]
            })
            .collect::<Vec<_>>(),
    )?;
    let report = galerkin_limit_scan(&setup.catalog, &setup.basis, &setup.spec, &d.galerkin_n, &probe_settings(config, setup))?;
    trend_csv(art, "galerkin.csv", "n", &report.rows)?;
    art.plot(
        "galerkin.svg",
        &Chart {
            title: "Weak distance between successive approximants".into(),
            x_label: "n".into(),
            y_label: "distance".into(),
            series: trend_series(&report.rows),
        },
    )?;
    #[derive(Serialize)]
    struct Body<'a, S: Serialize> {
        coefficient_scan: &'a [S],
        rows: &'a [TrendRow],
    }
    art.json(
        "galerkin.json",
        &Report {
            report: "galerkin-scan",
            config,
            pass: report.pass,
            body: Body {
                coefficient_scan: &scan,
                rows: &report.rows,
            },
        },
    )?;
    let dist: Vec<f64> = report.rows.iter().map(|r| r.distance).collect();
    Ok(vec![check("galerkin-scan", report.pass, format!("distances {dist:?} for n {:?}", d.galerkin_n))])
}

fn factorization(config: &RunConfig, setup: &Setup, art: &mut Artifacts) -> Result<Vec<Check>, RunError> {
    let d = &config.diagnostics;
    let sigma = setup.catalog.diffusion(&vec![0.0; setup.basis.n_modes()]);
    let r = factorization_check(
        d.factorization_theta,
        &sigma,
        &setup.basis,
        config.sim.horizon,
        &d.factorization_steps,
        d.factorization_paths,
        config.sim.seed,
        d.beta_steps,
    )?;
    let pass = r.monotone && r.beta_relative_error < d.beta_tolerance;
    art.csv(
        "factorization.csv",
        &header(&["dt", "steps", "discrepancy"]),
        &r.rows
            .iter()
            .map(|row| vec![fmt17(row.dt), row.steps.to_string(), fmt17(row.discrepancy)])
            .collect::<Vec<_>>(),
    )?;
    art.plot(
        "factorization.svg",
        &Chart {
            title: "Factorization discrepancy against dt".into(),
            x_label: "dt".into(),
            y_label: "mean sup distance".into(),
            series: vec![Series::new("discrepancy", r.rows.iter().map(|row| (row.dt, row.discrepancy)).collect())],
        },
    )?;
    art.json(
        "factorization.json",
        &Report {
            report: "factorization",
            config,
            pass,
            body: &r,
        },
    )?;
    let disc: Vec<f64> = r.rows.iter().map(|row| row.discrepancy).collect();
    Ok(vec![check(
        "factorization",
        pass,
        format!(
            "discrepancies {disc:?}, monotone {}; kernel sum relative error {:.3e} (limit {})",
            r.monotone, r.beta_relative_error, d.beta_tolerance
        ),
    )])
}
