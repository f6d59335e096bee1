//! Concurrence series, parameter sweeps, figure presets, the randomized
//! validation harness, and their CSV/text renderings.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_4, PI};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::coefficients::{accumulated_decay, correlations, squeeze_moments, ParamError, ReservoirParams};
use crate::entanglement::{
    concurrence_full, concurrence_x, detect_esd, initial_state, joint_density, BellFamily,
    BellFamilyState, EntanglementError, EsdConfig, EsdSummary, TwoQubitDensity, VALIDITY_THRESHOLD,
    X_SHAPE_TOLERANCE,
};
use crate::ode::Tolerances;
use crate::oracle::{algebra, doubled_superoperators, joint_density_kron, propagator_direct};
use crate::propagator::{propagate_partial, PropagatorError, SingleQubitMap};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SweepError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    State(#[from] EntanglementError),
    #[error("t_max must be positive, got {0}")]
    TimeSpan(f64),
    #[error("n_times must be at least {needed} (twice the ESD window), got {got}")]
    TooFewTimes { needed: usize, got: usize },
    #[error("sweep range is empty or its step is not positive")]
    EmptyRange,
    #[error("unknown axis '{0}' (expected r, theta, beta_sq, omega0 or lambda)")]
    UnknownAxis(String),
    #[error("unknown figure preset '{0}'")]
    UnknownPreset(String),
    #[error("n_cases must be at least 1")]
    NoCases,
    #[error("could not build worker pool: {0}")]
    Workers(String),
}

/// Grid, integration and death-detection settings shared by every run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSettings {
    pub t_max: f64,
    pub n_times: usize,
    pub tol: Tolerances,
    pub esd: EsdConfig,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            t_max: 5.0,
            n_times: 2000,
            tol: Tolerances::default(),
            esd: EsdConfig::default(),
        }
    }
}

impl RunSettings {
    pub fn validate(&self) -> Result<(), SweepError> {
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(SweepError::TimeSpan(self.t_max));
        }
        let needed = 2 * self.esd.window;
        if self.n_times < needed.max(2) {
            return Err(SweepError::TooFewTimes {
                needed: needed.max(2),
                got: self.n_times,
            });
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        time_grid(self.t_max, self.n_times)
    }
}

/// `n` uniformly spaced times on `[0, t_max]`.
pub fn time_grid(t_max: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| t_max * i as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointFlag {
    Ok,
    /// The state has an eigenvalue below the validity threshold.
    Nonpositive,
    /// The disentangling system blew up at or before this time.
    Singular,
}

impl fmt::Display for PointFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Ok => "ok",
            Self::Nonpositive => "nonpositive",
            Self::Singular => "singular",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesPoint {
    pub t: f64,
    pub concurrence: f64,
    pub trace: f64,
    pub min_eig: f64,
    pub gamma_k: f64,
    pub flag: PointFlag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesRun {
    pub points: Vec<SeriesPoint>,
    /// Death/revival summary over the points computed before any singularity.
    pub summary: EsdSummary,
    pub singular: Option<PropagatorError>,
}

impl SeriesRun {
    /// Smallest and largest concurrence at or after the first death.
    pub fn extremes_after_death(&self) -> Option<(f64, f64)> {
        let t0 = self.summary.esd_time?;
        let after = self
            .points
            .iter()
            .filter(|p| p.t >= t0 && p.concurrence.is_finite())
            .map(|p| p.concurrence);
        let (lo, hi) = after.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
            (lo.min(c), hi.max(c))
        });
        (lo <= hi).then_some((lo, hi))
    }
}

/// Concurrence of `rho`, using the closed form whenever the state is X-shaped.
pub fn concurrence_of(rho: &TwoQubitDensity) -> f64 {
    if rho.off_x_magnitude() <= X_SHAPE_TOLERANCE {
        if let Ok(c) = concurrence_x(rho) {
            return c;
        }
    }
    concurrence_full(rho).value
}

fn series_from_maps(
    maps: &[SingleQubitMap],
    failure: Option<&PropagatorError>,
    grid: &[f64],
    rho0: &TwoQubitDensity,
    esd: EsdConfig,
) -> SeriesRun {
    let mut points: Vec<SeriesPoint> = maps
        .iter()
        .map(|m| {
            let rho = joint_density(m, rho0);
            let min_eig = rho.min_eigenvalue();
            SeriesPoint {
                t: m.t,
                concurrence: concurrence_of(&rho),
                trace: rho.trace().re,
                min_eig,
                gamma_k: m.gamma_k,
                flag: if min_eig < VALIDITY_THRESHOLD {
                    PointFlag::Nonpositive
                } else {
                    PointFlag::Ok
                },
            }
        })
        .collect();
    let computed = points.len();
    points.extend(grid[computed..].iter().map(|&t| SeriesPoint {
        t,
        concurrence: f64::NAN,
        trace: f64::NAN,
        min_eig: f64::NAN,
        gamma_k: f64::NAN,
        flag: PointFlag::Singular,
    }));

    let (t, c): (Vec<f64>, Vec<f64>) = points[..computed].iter().map(|p| (p.t, p.concurrence)).unzip();
    let summary = detect_esd(&t, &c, esd).unwrap_or_default();
    SeriesRun {
        points,
        summary,
        singular: failure.cloned(),
    }
}

/// Concurrence and state diagnostics on a uniform grid. A blow-up of the
/// disentangling system marks the remaining points singular instead of
/// aborting.
pub fn run_series(
    params: &ReservoirParams,
    initial: &BellFamilyState,
    settings: &RunSettings,
) -> Result<SeriesRun, SweepError> {
    params.validate()?;
    settings.validate()?;
    let rho0 = initial_state(initial)?;
    let grid = settings.grid();
    let (maps, err) = propagate_partial(params, &grid, settings.tol);
    Ok(series_from_maps(&maps, err.as_ref(), &grid, &rho0, settings.esd))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Axis {
    R,
    Theta,
    BetaSq,
    Omega0,
    Lambda,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::R => "r",
            Self::Theta => "theta",
            Self::BetaSq => "beta_sq",
            Self::Omega0 => "omega0",
            Self::Lambda => "lambda",
        })
    }
}

impl FromStr for Axis {
    type Err = SweepError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "r" => Ok(Self::R),
            "theta" => Ok(Self::Theta),
            "beta_sq" => Ok(Self::BetaSq),
            "omega0" => Ok(Self::Omega0),
            "lambda" => Ok(Self::Lambda),
            _ => Err(SweepError::UnknownAxis(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisRange {
    pub axis: Axis,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl AxisRange {
    /// `start, start + step, …` up to and including `stop` (to within a
    /// millionth of a step).
    pub fn values(&self) -> Result<Vec<f64>, SweepError> {
        let ok = [self.start, self.stop, self.step].iter().all(|v| v.is_finite());
        if !ok || self.step <= 0.0 || self.stop < self.start {
            return Err(SweepError::EmptyRange);
        }
        let count = ((self.stop - self.start) / self.step + 1e-6).floor() as usize + 1;
        Ok((0..count).map(|k| self.start + self.step * k as f64).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSpec {
    pub base: ReservoirParams,
    pub initial: BellFamilyState,
    pub range: AxisRange,
    pub settings: RunSettings,
}

fn bind(spec: &SweepSpec, value: f64) -> (ReservoirParams, BellFamilyState) {
    let (mut p, mut s) = (spec.base, spec.initial);
    match spec.range.axis {
        Axis::R => p.r = value,
        Axis::Theta => p.theta = value,
        Axis::Omega0 => p.omega0 = value,
        Axis::Lambda => p.lambda = value,
        Axis::BetaSq => s = BellFamilyState::from_beta_sq(s.family, value, s.phi),
    }
    (p, s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub series: Option<SeriesRun>,
    pub error: Option<String>,
}

impl SweepRow {
    fn from_result(value: f64, res: Result<SeriesRun, SweepError>) -> Self {
        match res {
            Ok(run) => {
                let error = run.singular.as_ref().map(|e| e.to_string());
                Self {
                    value,
                    series: Some(run),
                    error,
                }
            }
            Err(e) => Self {
                value,
                series: None,
                error: Some(e.to_string()),
            },
        }
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, SweepError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| SweepError::Workers(e.to_string()))
}

/// One row per axis value, in axis order. `workers = 0` uses one thread per
/// core. Invalid axis values and singular runs are reported per row.
pub fn run_sweep(spec: &SweepSpec, workers: usize) -> Result<Vec<SweepRow>, SweepError> {
    spec.settings.validate()?;
    let values = spec.range.values()?;
    let settings = spec.settings;
    let grid = settings.grid();

    // The map does not depend on the initial state, so a β² axis shares it.
    let shared = match spec.range.axis {
        Axis::BetaSq => {
            spec.base.validate()?;
            Some(propagate_partial(&spec.base, &grid, settings.tol))
        }
        _ => None,
    };

    let rows = pool(workers)?.install(|| {
        values
            .par_iter()
            .map(|&v| {
                let (p, s) = bind(spec, v);
                let res = match &shared {
                    Some((maps, err)) => initial_state(&s)
                        .map(|rho0| series_from_maps(maps, err.as_ref(), &grid, &rho0, settings.esd))
                        .map_err(SweepError::from),
                    None => run_series(&p, &s, &settings),
                };
                SweepRow::from_result(v, res)
            })
            .collect::<Vec<_>>()
    });
    Ok(rows)
}

/// Parameter binding of one published figure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FigurePreset {
    pub name: &'static str,
    pub description: &'static str,
    pub family: BellFamily,
    pub lambda: f64,
    pub omega0: f64,
    pub r: f64,
    pub theta: f64,
    pub beta_sq: f64,
    pub range: AxisRange,
}

impl FigurePreset {
    pub fn spec(&self, settings: RunSettings) -> SweepSpec {
        SweepSpec {
            base: ReservoirParams {
                lambda: self.lambda,
                omega0: self.omega0,
                r: self.r,
                theta: self.theta,
            },
            initial: BellFamilyState::from_beta_sq(self.family, self.beta_sq, 0.0),
            range: self.range,
            settings,
        }
    }
}

const THETA_AXIS: AxisRange = AxisRange {
    axis: Axis::Theta,
    start: 0.0,
    stop: 2.0 * PI,
    step: PI / 12.0,
};
const R_AXIS: AxisRange = AxisRange {
    axis: Axis::R,
    start: 0.0,
    stop: 1.5,
    step: 0.1,
};
const BETA_SQ_AXIS: AxisRange = AxisRange {
    axis: Axis::BetaSq,
    start: 0.05,
    stop: 0.95,
    step: 0.05,
};

const fn preset(
    name: &'static str,
    description: &'static str,
    family: BellFamily,
    (lambda, omega0): (f64, f64),
    range: AxisRange,
) -> FigurePreset {
    FigurePreset {
        name,
        description,
        family,
        lambda,
        omega0,
        r: 0.2,
        theta: FRAC_PI_4,
        beta_sq: 0.5,
        range,
    }
}

/// All figure presets. Where two bindings of one figure are plausible
/// both bindings are provided.
pub const PRESETS: [FigurePreset; 14] = [
    preset("fig1", "C_phi over gamma*t and theta; lambda=10, omega0=10, beta=sqrt(2)/2, r=0.2", BellFamily::Phi, (10.0, 10.0), THETA_AXIS),
    preset("fig2", "C_psi over gamma*t and beta^2; lambda=10, omega0=10, r=0.2, theta=pi/4", BellFamily::Psi, (10.0, 10.0), BETA_SQ_AXIS),
    preset("fig2b", "C_psi over gamma*t and theta; lambda=10, omega0=10, beta=sqrt(2)/2, r=0.2", BellFamily::Psi, (10.0, 10.0), THETA_AXIS),
    preset("fig3", "C_phi over gamma*t and r; lambda=10, omega0=10, beta=sqrt(2)/2, theta=pi/4", BellFamily::Phi, (10.0, 10.0), R_AXIS),
    preset("fig4", "C_psi over gamma*t and r; lambda=10, omega0=10, beta=sqrt(2)/2, theta=pi/4", BellFamily::Psi, (10.0, 10.0), R_AXIS),
    preset("fig5", "C_phi over gamma*t and beta^2; lambda=10, omega0=12, theta=pi/4, r=0.2", BellFamily::Phi, (10.0, 12.0), BETA_SQ_AXIS),
    preset("fig6", "C_phi over gamma*t and beta^2; lambda=10, omega0=10, theta=pi/4, r=0.2", BellFamily::Phi, (10.0, 10.0), BETA_SQ_AXIS),
    preset("fig7", "C_phi over gamma*t and beta^2; lambda=10, omega0=6.5, theta=pi/4, r=0.2", BellFamily::Phi, (10.0, 6.5), BETA_SQ_AXIS),
    preset("fig8a", "C_phi over gamma*t and beta^2; lambda=10, omega0=3, theta=pi/4, r=0.2", BellFamily::Phi, (10.0, 3.0), BETA_SQ_AXIS),
    preset("fig8b", "C_phi over gamma*t and beta^2; lambda=20, omega0=3, theta=pi/4, r=0.2", BellFamily::Phi, (20.0, 3.0), BETA_SQ_AXIS),
    preset("fig9", "C_psi over gamma*t and beta^2; lambda=10, omega0=12, theta=pi/4, r=0.2", BellFamily::Psi, (10.0, 12.0), BETA_SQ_AXIS),
    preset("fig10", "C_psi over gamma*t and beta^2; lambda=10, omega0=10, theta=pi/4, r=0.2", BellFamily::Psi, (10.0, 10.0), BETA_SQ_AXIS),
    preset("fig11", "C_psi over gamma*t and beta^2; lambda=10, omega0=6.5, theta=pi/4, r=0.2", BellFamily::Psi, (10.0, 6.5), BETA_SQ_AXIS),
    preset("psi_strong", "C_psi over gamma*t and beta^2; lambda=20, omega0=2, theta=pi/4, r=0.2", BellFamily::Psi, (20.0, 2.0), BETA_SQ_AXIS),
];

pub fn find_preset(name: &str) -> Result<FigurePreset, SweepError> {
    PRESETS
        .iter()
        .find(|p| p.name.eq_ignore_ascii_case(name))
        .copied()
        .ok_or_else(|| SweepError::UnknownPreset(name.to_string()))
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped, keys
/// are normalized to lower case with `-` in place of `_`.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected 'key = value'", no + 1))?;
        let key = k.trim().to_ascii_lowercase().replace('_', "-");
        if key.is_empty() {
            return Err(format!("line {}: empty key", no + 1));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

/// Floats with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

pub const CSV_HEADER: &str = "gamma_t,concurrence,trace,min_eig,gamma_k,flag";

fn write_binding(out: &mut String, params: &ReservoirParams, initial: &BellFamilyState, settings: &RunSettings) {
    let lines = [
        ("lambda", fmt17(params.lambda)),
        ("omega0", fmt17(params.omega0)),
        ("r", fmt17(params.r)),
        ("theta", fmt17(params.theta)),
        ("family", initial.family.to_string()),
        ("beta-sq", fmt17(initial.beta * initial.beta)),
        ("phi", fmt17(initial.phi)),
        ("t-max", fmt17(settings.t_max)),
        ("n-times", settings.n_times.to_string()),
        ("rel-tol", fmt17(settings.tol.rel)),
        ("abs-tol", fmt17(settings.tol.abs)),
        ("esd-threshold", fmt17(settings.esd.threshold)),
        ("esd-window", settings.esd.window.to_string()),
    ];
    for (k, v) in lines {
        let _ = writeln!(out, "# {k} = {v}");
    }
}

fn write_summary(out: &mut String, run: &SeriesRun) {
    let esd = run.summary.esd_time.map_or_else(|| "none".to_string(), fmt17);
    let _ = writeln!(out, "# esd_time = {esd}");
    let _ = writeln!(out, "# revival_count = {}", run.summary.revival_count);
    for (a, b) in &run.summary.dark_intervals {
        let _ = writeln!(out, "# dark_interval = {} {}", fmt17(*a), fmt17(*b));
    }
    if let Some(e) = &run.singular {
        let _ = writeln!(out, "# singular = {e}");
    }
}

fn write_points(out: &mut String, run: &SeriesRun) {
    for p in &run.points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt17(p.t),
            fmt17(p.concurrence),
            fmt17(p.trace),
            fmt17(p.min_eig),
            fmt17(p.gamma_k),
            p.flag
        );
    }
}

pub fn series_csv(params: &ReservoirParams, initial: &BellFamilyState, settings: &RunSettings, run: &SeriesRun) -> String {
    let mut out = String::new();
    write_binding(&mut out, params, initial, settings);
    write_summary(&mut out, run);
    out.push_str(CSV_HEADER);
    out.push('\n');
    write_points(&mut out, run);
    out
}

/// Summary table of a sweep.
pub fn sweep_csv(spec: &SweepSpec, rows: &[SweepRow]) -> String {
    let mut out = String::new();
    write_binding(&mut out, &spec.base, &spec.initial, &spec.settings);
    let r = spec.range;
    let _ = writeln!(out, "# axis = {} {} {} {}", r.axis, fmt17(r.start), fmt17(r.stop), fmt17(r.step));
    let _ = writeln!(out, "{},esd_time,revival_count,c_min_after_death,c_max_after_death,error", r.axis);
    for row in rows {
        let (esd, revivals, lo, hi) = match &row.series {
            Some(run) => {
                let ext = run.extremes_after_death();
                (
                    run.summary.esd_time.map(fmt17).unwrap_or_default(),
                    run.summary.revival_count.to_string(),
                    ext.map(|e| fmt17(e.0)).unwrap_or_default(),
                    ext.map(|e| fmt17(e.1)).unwrap_or_default(),
                )
            }
            None => Default::default(),
        };
        let err = row.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        let _ = writeln!(out, "{},{esd},{revivals},{lo},{hi},{err}", fmt17(row.value));
    }
    out
}

/// Full series of every sweep row, one block per axis value.
pub fn figure_csv(preset: &FigurePreset, spec: &SweepSpec, rows: &[SweepRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# figure = {}", preset.name);
    let _ = writeln!(out, "# description = {}", preset.description);
    write_binding(&mut out, &spec.base, &spec.initial, &spec.settings);
    let r = spec.range;
    let _ = writeln!(out, "# axis = {} {} {} {}", r.axis, fmt17(r.start), fmt17(r.stop), fmt17(r.step));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in rows {
        let _ = writeln!(out, "# series {}={}", r.axis, fmt17(row.value));
        match &row.series {
            Some(run) => {
                write_summary(&mut out, run);
                write_points(&mut out, run);
            }
            None => {
                let _ = writeln!(out, "# error = {}", row.error.as_deref().unwrap_or(""));
            }
        }
    }
    out
}

/// Tolerances applied by [`run_validate`].
pub mod limits {
    pub const DENSITY: f64 = 1e-6;
    pub const TRACE: f64 = 1e-9;
    pub const HERMITICITY: f64 = 1e-10;
    pub const CONCURRENCE: f64 = 1e-9;
    pub const VACUUM_DECAY: f64 = 1e-12;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationSettings {
    pub n_cases: usize,
    pub seed: u64,
    pub t_max: f64,
    pub n_times: usize,
    pub tol: Tolerances,
    pub workers: usize,
}

impl Default for ValidationSettings {
    fn default() -> Self {
        Self {
            n_cases: 200,
            seed: 1,
            t_max: 5.0,
            n_times: 101,
            tol: Tolerances::default(),
            workers: 0,
        }
    }
}

/// One randomized case of the validation harness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationCase {
    pub params: ReservoirParams,
    pub initial: BellFamilyState,
}

/// Draws cases with λ ∈ [0, 20], ω₀ ∈ [2, 15], r ∈ [0, 1.2], θ ∈ [0, 2π),
/// β² ∈ (0, 1), a random family and a random phase.
pub fn draw_cases(n: usize, seed: u64) -> Vec<ValidationCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let params = ReservoirParams {
                lambda: rng.random_range(0.0..=20.0),
                omega0: rng.random_range(2.0..=15.0),
                r: rng.random_range(0.0..=1.2),
                theta: rng.random_range(0.0..2.0 * PI),
            };
            let mut beta_sq: f64 = rng.random_range(0.0..1.0);
            while beta_sq == 0.0 {
                beta_sq = rng.random_range(0.0..1.0);
            }
            let family = if rng.random_bool(0.5) { BellFamily::Phi } else { BellFamily::Psi };
            let phi = rng.random_range(0.0..2.0 * PI);
            ValidationCase {
                params,
                initial: BellFamilyState::from_beta_sq(family, beta_sq, phi),
            }
        })
        .collect()
}

/// Worst deviations found in one case.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CaseDeviations {
    pub density: f64,
    pub superop: f64,
    pub trace: f64,
    pub hermiticity: f64,
    pub concurrence: f64,
    /// As `concurrence`, restricted to states without negative eigenvalues.
    pub concurrence_psd: f64,
    pub x_states: usize,
    pub psd_x_states: usize,
    pub nonpositive_states: usize,
    pub min_eigenvalue: f64,
    /// Largest entry magnitude of any evolved state.
    pub peak: f64,
}

impl CaseDeviations {
    /// Density deviation divided by `max(1, peak)`.
    pub fn scaled_density(&self) -> f64 {
        self.density / self.peak.max(1.0)
    }

    pub fn scaled_hermiticity(&self) -> f64 {
        self.hermiticity / self.peak.max(1.0)
    }
}

/// Compares the algebraic route with direct integration on one case.
pub fn validate_case(case: &ValidationCase, grid: &[f64], tol: Tolerances) -> Result<CaseDeviations, String> {
    let rho0 = initial_state(&case.initial).map_err(|e| e.to_string())?;
    let (maps, err) = propagate_partial(&case.params, grid, tol);
    if let Some(e) = err {
        return Err(format!("algebraic route: {e}"));
    }
    let direct = propagator_direct(&case.params, grid, tol).map_err(|e| format!("direct route: {e}"))?;

    let mut d = CaseDeviations {
        min_eigenvalue: f64::INFINITY,
        ..Default::default()
    };
    for (m, u) in maps.iter().zip(&direct) {
        let s = m.superoperator();
        for i in 0..4 {
            for j in 0..4 {
                d.superop = d.superop.max((s[i][j] - u[i][j]).norm());
            }
        }
        let rho = joint_density(m, &rho0);
        let rho_direct = joint_density_kron(u, &rho0);
        d.density = d.density.max(rho.max_abs_diff(&rho_direct));
        d.trace = d.trace.max((rho.trace() - 1.0).norm());
        d.hermiticity = d.hermiticity.max(rho.hermitian_defect());
        d.peak = rho.0.iter().flatten().fold(d.peak, |a, z| a.max(z.norm()));

        let min_eig = rho.min_eigenvalue();
        d.min_eigenvalue = d.min_eigenvalue.min(min_eig);
        let psd = min_eig >= VALIDITY_THRESHOLD;
        if !psd {
            d.nonpositive_states += 1;
        }
        if let Ok(cx) = concurrence_x(&rho) {
            let gap = (cx - concurrence_full(&rho).value).abs();
            d.x_states += 1;
            d.concurrence = d.concurrence.max(gap);
            if psd {
                d.psd_x_states += 1;
                d.concurrence_psd = d.concurrence_psd.max(gap);
            }
        }
    }
    Ok(d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub text: String,
    pub pass: bool,
}

/// Randomized comparison of both propagation routes plus the algebraic and
/// vacuum-limit checks. The report text is a pure function of the settings.
pub fn run_validate(settings: &ValidationSettings) -> Result<ValidationReport, SweepError> {
    if settings.n_cases == 0 {
        return Err(SweepError::NoCases);
    }
    let grid = time_grid(settings.t_max, settings.n_times);
    let cases = draw_cases(settings.n_cases, settings.seed);
    let results: Vec<Result<CaseDeviations, String>> = pool(settings.workers)?.install(|| {
        cases
            .par_iter()
            .map(|c| validate_case(c, &grid, settings.tol))
            .collect()
    });

    let mut worst = CaseDeviations {
        min_eigenvalue: f64::INFINITY,
        ..Default::default()
    };
    let mut failures = Vec::new();
    let (mut scaled_density, mut scaled_herm) = (0.0f64, 0.0f64);
    let mut bounded = CaseDeviations::default();
    let mut bounded_cases = 0usize;
    for (i, r) in results.iter().enumerate() {
        match r {
            Ok(d) => {
                scaled_density = scaled_density.max(d.scaled_density());
                scaled_herm = scaled_herm.max(d.scaled_hermiticity());
                if d.peak <= 1.0 {
                    bounded_cases += 1;
                    bounded.density = bounded.density.max(d.density);
                    bounded.hermiticity = bounded.hermiticity.max(d.hermiticity);
                    bounded.trace = bounded.trace.max(d.trace);
                }
                worst.peak = worst.peak.max(d.peak);
                worst.density = worst.density.max(d.density);
                worst.superop = worst.superop.max(d.superop);
                worst.trace = worst.trace.max(d.trace);
                worst.hermiticity = worst.hermiticity.max(d.hermiticity);
                worst.concurrence = worst.concurrence.max(d.concurrence);
                worst.concurrence_psd = worst.concurrence_psd.max(d.concurrence_psd);
                worst.x_states += d.x_states;
                worst.psd_x_states += d.psd_x_states;
                worst.nonpositive_states += d.nonpositive_states;
                worst.min_eigenvalue = worst.min_eigenvalue.min(d.min_eigenvalue);
            }
            Err(e) => failures.push((i, e.clone())),
        }
    }

    let relations = algebra::check_relations(&doubled_superoperators());
    let relations_ok = relations.iter().filter(|(_, ok)| *ok).count();

    // Vacuum limit on the same cases with r forced to zero.
    let mut vacuum_dev = 0.0f64;
    let mut vacuum_moments_exact = true;
    for c in &cases {
        let p = ReservoirParams { r: 0.0, ..c.params };
        let mom = squeeze_moments(&p);
        vacuum_moments_exact &= mom.n == 0.0 && mom.m.re == 0.0 && mom.m.im == 0.0;
        for &t in &grid {
            let cs = correlations(&p, t);
            let expected = cs.big_f + cs.alpha_tilde.re;
            vacuum_dev = vacuum_dev.max((accumulated_decay(&p, t).gamma_k - expected).abs());
        }
    }

    let total_points = settings.n_cases * grid.len();
    let mut text = String::new();
    let mut pass = true;
    let _ = writeln!(
        text,
        "validate cases={} seed={} t_max={} n_times={} rel_tol={:.0e} abs_tol={:.0e}",
        settings.n_cases, settings.seed, settings.t_max, settings.n_times, settings.tol.rel, settings.tol.abs
    );
    pass &= check(&mut text, "density_vs_direct", worst.density, limits::DENSITY);
    pass &= check(&mut text, "trace", worst.trace, limits::TRACE);
    pass &= check(&mut text, "hermiticity", worst.hermiticity, limits::HERMITICITY);
    pass &= check(&mut text, "concurrence_x_vs_full", worst.concurrence, limits::CONCURRENCE);
    let _ = writeln!(text, "info  superop_vs_direct        max={:.3e}", worst.superop);
    let _ = writeln!(text, "info  largest state entry      max={:.3e}", worst.peak);
    let _ = writeln!(
        text,
        "info  scaled by max(1, largest entry): density max={:.3e} hermiticity max={:.3e}",
        scaled_density, scaled_herm
    );
    let _ = writeln!(
        text,
        "info  cases with all entries <= 1: {} of {}; density max={:.3e} hermiticity max={:.3e} trace max={:.3e}",
        bounded_cases, settings.n_cases, bounded.density, bounded.hermiticity, bounded.trace
    );
    let _ = writeln!(
        text,
        "info  concurrence_x_vs_full on positive states max={:.3e} states={}",
        worst.concurrence_psd, worst.psd_x_states
    );
    let _ = writeln!(
        text,
        "info  nonpositive states {} of {} (x-shaped {}), lowest eigenvalue {:.3e}",
        worst.nonpositive_states, total_points, worst.x_states, worst.min_eigenvalue
    );
    let rel_ok = relations_ok == relations.len();
    pass &= rel_ok;
    let _ = writeln!(
        text,
        "check {:<24} satisfied={}/{} {}",
        "commutators",
        relations_ok,
        relations.len(),
        verdict(rel_ok)
    );
    let failed_ok = failures.is_empty();
    pass &= failed_ok;
    let _ = writeln!(text, "check {:<24} count={} {}", "failed_cases", failures.len(), verdict(failed_ok));
    for (i, e) in &failures {
        let _ = writeln!(text, "  case {i}: {e}");
    }
    let _ = writeln!(text, "limit r=0");
    pass &= check(&mut text, "gamma_k_vs_f_plus_re_at", vacuum_dev, limits::VACUUM_DECAY);
    pass &= vacuum_moments_exact;
    let _ = writeln!(
        text,
        "check {:<24} exact={} {}",
        "squeeze_moments_zero",
        vacuum_moments_exact,
        verdict(vacuum_moments_exact)
    );
    let _ = writeln!(text, "{}", verdict(pass));
    Ok(ValidationReport { text, pass })
}

fn check(text: &mut String, name: &str, value: f64, limit: f64) -> bool {
    let ok = value <= limit;
    let _ = writeln!(text, "check {name:<24} max={value:.3e} limit={limit:.0e} {}", verdict(ok));
    ok
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}
