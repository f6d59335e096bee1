use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_4;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use nmsq::entanglement::{BellFamily, BellFamilyState, EsdConfig};
use nmsq::sweep::{
    figure_csv, find_preset, parse_config, run_series, run_sweep, run_validate, series_csv, sweep_csv, Axis,
    AxisRange, RunSettings, SweepSpec, ValidationSettings,
};
use nmsq::{ReservoirParams, Tolerances};

/// Two-qubit entanglement dynamics in a non-Markovian squeezed reservoir.
#[derive(Parser, Debug)]
#[command(name = "nmsq", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Concurrence series for one parameter point.
    Series(Common),
    /// Death/revival summary over one swept parameter.
    Sweep {
        /// r, theta, beta_sq, omega0 or lambda.
        #[arg(long)]
        axis: Option<String>,
        #[arg(long)]
        start: Option<f64>,
        #[arg(long)]
        stop: Option<f64>,
        #[arg(long)]
        step: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Full series for a figure preset (fig1 … fig11, fig2b, fig8a, fig8b, psi_strong).
    Figure {
        preset: String,
        #[command(flatten)]
        common: Common,
    },
    /// Randomized comparison of the algebraic and direct routes.
    Validate {
        /// Number of random cases.
        #[arg(long)]
        cases: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug, Default)]
struct Common {
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    omega0: Option<f64>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    beta_sq: Option<f64>,
    #[arg(long)]
    phi: Option<f64>,
    /// phi or psi.
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    n_times: Option<usize>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    abs_tol: Option<f64>,
    #[arg(long)]
    esd_threshold: Option<f64>,
    #[arg(long)]
    esd_window: Option<usize>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, 0 for one per core.
    #[arg(long)]
    workers: Option<usize>,
    /// File of `key = value` lines; flags given on the command line win.
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Command-line values layered over config-file values.
struct Options {
    cli: BTreeMap<String, String>,
    file: BTreeMap<String, String>,
}

impl Options {
    fn new(common: &Common, extra: &[(&str, Option<String>)]) -> Result<Self> {
        let file = match &common.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                parse_config(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?
            }
            None => BTreeMap::new(),
        };
        let s = |v: Option<f64>| v.map(|x| x.to_string());
        let u = |v: Option<usize>| v.map(|x| x.to_string());
        let pairs = [
            ("lambda", s(common.lambda)),
            ("omega0", s(common.omega0)),
            ("r", s(common.r)),
            ("theta", s(common.theta)),
            ("beta-sq", s(common.beta_sq)),
            ("phi", s(common.phi)),
            ("family", common.family.clone()),
            ("t-max", s(common.t_max)),
            ("n-times", u(common.n_times)),
            ("rel-tol", s(common.rel_tol)),
            ("abs-tol", s(common.abs_tol)),
            ("esd-threshold", s(common.esd_threshold)),
            ("esd-window", u(common.esd_window)),
            ("out", common.out.as_ref().map(|p| p.display().to_string())),
            ("seed", common.seed.map(|x| x.to_string())),
            ("workers", u(common.workers)),
        ];
        let cli = pairs
            .into_iter()
            .chain(extra.iter().cloned())
            .filter_map(|(k, v)| v.map(|v| (k.to_string(), v)))
            .collect();
        Ok(Self { cli, file })
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.cli.get(key).or_else(|| self.file.get(key)).map(String::as_str)
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|v| v.parse::<T>().map_err(|e| anyhow::anyhow!("invalid value '{v}' for {key}: {e}")))
            .transpose()
    }

    fn or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn settings(&self) -> Result<RunSettings> {
        let d = RunSettings::default();
        Ok(RunSettings {
            t_max: self.or("t-max", d.t_max)?,
            n_times: self.or("n-times", d.n_times)?,
            tol: self.tolerances()?,
            esd: EsdConfig {
                threshold: self.or("esd-threshold", d.esd.threshold)?,
                window: self.or("esd-window", d.esd.window)?,
            },
        })
    }

    fn tolerances(&self) -> Result<Tolerances> {
        let d = Tolerances::default();
        Ok(Tolerances {
            rel: self.or("rel-tol", d.rel)?,
            abs: self.or("abs-tol", d.abs)?,
        })
    }

    fn params(&self, base: ReservoirParams) -> Result<ReservoirParams> {
        Ok(ReservoirParams {
            lambda: self.or("lambda", base.lambda)?,
            omega0: self.or("omega0", base.omega0)?,
            r: self.or("r", base.r)?,
            theta: self.or("theta", base.theta)?,
        })
    }

    fn initial(&self, family: BellFamily, beta_sq: f64) -> Result<BellFamilyState> {
        Ok(BellFamilyState::from_beta_sq(
            self.or("family", family)?,
            self.or("beta-sq", beta_sq)?,
            self.or("phi", 0.0)?,
        ))
    }

    fn emit(&self, text: &str) -> Result<()> {
        match self.raw("out") {
            Some(path) => fs::write(path, text).with_context(|| format!("writing {path}")),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

const DEFAULT_PARAMS: ReservoirParams = ReservoirParams {
    lambda: 10.0,
    omega0: 10.0,
    r: 0.2,
    theta: FRAC_PI_4,
};

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Series(common) => {
            let opts = Options::new(&common, &[])?;
            let params = opts.params(DEFAULT_PARAMS)?;
            let initial = opts.initial(BellFamily::Phi, 0.5)?;
            let settings = opts.settings()?;
            let series = run_series(&params, &initial, &settings)?;
            opts.emit(&series_csv(&params, &initial, &settings, &series))?;
        }
        Command::Sweep {
            axis,
            start,
            stop,
            step,
            common,
        } => {
            let f = |v: Option<f64>| v.map(|x| x.to_string());
            let opts = Options::new(
                &common,
                &[("axis", axis), ("start", f(start)), ("stop", f(stop)), ("step", f(step))],
            )?;
            let Some(axis) = opts.get::<Axis>("axis")? else {
                bail!("sweep needs --axis");
            };
            let need = |k: &str| -> Result<f64> {
                opts.get(k)?.with_context(|| format!("sweep needs --{k}"))
            };
            let spec = SweepSpec {
                base: opts.params(DEFAULT_PARAMS)?,
                initial: opts.initial(BellFamily::Phi, 0.5)?,
                range: AxisRange {
                    axis,
                    start: need("start")?,
                    stop: need("stop")?,
                    step: need("step")?,
                },
                settings: opts.settings()?,
            };
            let rows = run_sweep(&spec, opts.or("workers", 0)?)?;
            opts.emit(&sweep_csv(&spec, &rows))?;
        }
        Command::Figure { preset, common } => {
            let opts = Options::new(&common, &[])?;
            let preset = find_preset(&preset)?;
            let base = preset.spec(RunSettings::default());
            let spec = SweepSpec {
                base: opts.params(base.base)?,
                initial: opts.initial(preset.family, preset.beta_sq)?,
                settings: opts.settings()?,
                ..base
            };
            let rows = run_sweep(&spec, opts.or("workers", 0)?)?;
            opts.emit(&figure_csv(&preset, &spec, &rows))?;
        }
        Command::Validate { cases, common } => {
            let opts = Options::new(&common, &[("cases", cases.map(|c| c.to_string()))])?;
            let d = ValidationSettings::default();
            let settings = ValidationSettings {
                n_cases: opts.or("cases", d.n_cases)?,
                seed: opts.or("seed", d.seed)?,
                t_max: opts.or("t-max", d.t_max)?,
                n_times: opts.or("n-times", d.n_times)?,
                tol: opts.tolerances()?,
                workers: opts.or("workers", d.workers)?,
            };
            let report = run_validate(&settings)?;
            opts.emit(&report.text)?;
            return Ok(report.pass);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
