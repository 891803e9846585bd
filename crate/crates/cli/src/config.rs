//! Run configuration: command-line flags layered over an optional
//! `key = value` file.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand, ValueEnum};
use ramsey_core::{EngineConfig, Integrator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Maximised Fisher information and Cramér–Rao bounds for one N.
    Fisher,
    /// Quantum Fisher information and its bound for one N.
    Qfi,
    /// Fisher analysis plus all benchmark and improvement factors for one N.
    Benchmark,
    /// Benchmark rows over an even N range.
    Sweep,
    /// Ideal protocol at gamma*t = 5 over N.
    Fig2,
    /// Perfect versus imperfect gates and readout over N.
    Fig3,
    /// f_max with and without spontaneous emission over N.
    Fig4,
    /// Improvement factor versus evolution time with emission, and its optimum.
    Fig5,
    /// Linear fit of f_max against N.
    Fit,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Fisher => "fisher",
            Command::Qfi => "qfi",
            Command::Benchmark => "benchmark",
            Command::Sweep => "sweep",
            Command::Fig2 => "fig2",
            Command::Fig3 => "fig3",
            Command::Fig4 => "fig4",
            Command::Fig5 => "fig5",
            Command::Fit => "fit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum IntegratorChoice {
    /// RK4 for small N, the exact emission channel above.
    #[default]
    Auto,
    Rk4,
    Exact,
}

impl IntegratorChoice {
    pub fn engine_config(self, n_atoms: usize) -> EngineConfig {
        match self {
            IntegratorChoice::Auto => EngineConfig::auto(n_atoms),
            IntegratorChoice::Rk4 => EngineConfig::default(),
            IntegratorChoice::Exact => EngineConfig {
                integrator: Integrator::ExactChannel,
                ..EngineConfig::default()
            },
        }
    }
}

/// Flags shared by every command. All optional so a config file can fill gaps.
#[derive(Debug, Clone, Default, Args)]
pub struct Options {
    /// Read `key = value` defaults from this file; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Atom number (even).
    #[arg(long, global = true)]
    pub n: Option<usize>,
    #[arg(long, global = true)]
    pub n_min: Option<usize>,
    #[arg(long, global = true)]
    pub n_max: Option<usize>,
    /// Dephasing strength gamma*t; omit for the stationary limit.
    #[arg(long, global = true)]
    pub gamma_t: Option<f64>,
    /// Ratio gamma / Gamma of dephasing to emission rate; 0 disables emission.
    #[arg(long = "gamma-over-gamma", global = true)]
    pub gamma_over_emission: Option<f64>,
    /// Sets both gate and readout fidelity.
    #[arg(long, global = true)]
    pub eta: Option<f64>,
    #[arg(long, global = true)]
    pub eta_h: Option<f64>,
    #[arg(long, global = true)]
    pub eta_m: Option<f64>,
    /// Total time over evolution time, T/t.
    #[arg(long, global = true)]
    pub nu: Option<f64>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, global = true)]
    pub format: Option<Format>,
    #[arg(long, value_enum, global = true)]
    pub integrator: Option<IntegratorChoice>,
}

#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn usage<T>(msg: impl Into<String>) -> Result<T, UsageError> {
    Err(UsageError(msg.into()))
}

impl Options {
    /// Fills fields not set on the command line from the config file text.
    pub fn merge_file(mut self, text: &str, origin: &Path) -> Result<Self, UsageError> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return usage(format!("{}:{}: expected key = value", origin.display(), lineno + 1));
            };
            let (key, value) = (key.trim().replace('_', "-"), value.trim());
            let bad = |what: &str| UsageError(format!("{}:{}: invalid {what} '{value}'", origin.display(), lineno + 1));
            let float = || value.parse::<f64>().map_err(|_| bad(&key));
            let int = || value.parse::<usize>().map_err(|_| bad(&key));
            match key.as_str() {
                "n" => self.n = self.n.or(Some(int()?)),
                "n-min" => self.n_min = self.n_min.or(Some(int()?)),
                "n-max" => self.n_max = self.n_max.or(Some(int()?)),
                "gamma-t" => self.gamma_t = self.gamma_t.or(Some(float()?)),
                "gamma-over-gamma" => self.gamma_over_emission = self.gamma_over_emission.or(Some(float()?)),
                "eta" => self.eta = self.eta.or(Some(float()?)),
                "eta-h" => self.eta_h = self.eta_h.or(Some(float()?)),
                "eta-m" => self.eta_m = self.eta_m.or(Some(float()?)),
                "nu" => self.nu = self.nu.or(Some(float()?)),
                "output" => self.output = self.output.or(Some(PathBuf::from(value))),
                "format" => {
                    let f = Format::from_str(value, true).map_err(|_| bad("format"))?;
                    self.format = self.format.or(Some(f));
                }
                "integrator" => {
                    let i = IntegratorChoice::from_str(value, true).map_err(|_| bad("integrator"))?;
                    self.integrator = self.integrator.or(Some(i));
                }
                _ => return usage(format!("{}:{}: unknown key '{key}'", origin.display(), lineno + 1)),
            }
        }
        Ok(self)
    }
}

/// Validated parameters for one command.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub atoms: Vec<usize>,
    /// `None` is the stationary limit.
    pub gamma_t: Option<f64>,
    /// `None` means no emission.
    pub gamma_over_emission: Option<f64>,
    pub eta_h: f64,
    pub eta_m: f64,
    pub nu: f64,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub integrator: IntegratorChoice,
}

struct Defaults {
    n_range: Option<(usize, usize)>,
    gamma_t: Option<f64>,
    eta: f64,
}

fn defaults(command: Command) -> Defaults {
    let (n_range, gamma_t, eta) = match command {
        Command::Fisher | Command::Qfi | Command::Benchmark => (None, None, 1.0),
        Command::Sweep => (Some((2, 20)), Some(5.0), 1.0),
        Command::Fig2 | Command::Fig3 => (Some((2, 40)), Some(5.0), if command == Command::Fig3 { 0.99 } else { 1.0 }),
        Command::Fig4 => (Some((2, 10)), Some(5.0), 1.0),
        Command::Fig5 => (Some((2, 10)), None, 0.99),
        Command::Fit => (Some((8, 40)), None, 1.0),
    };
    Defaults { n_range, gamma_t, eta }
}

fn check_atoms(n: usize) -> Result<usize, UsageError> {
    if n >= 2 && n % 2 == 0 {
        Ok(n)
    } else {
        usage(format!("N = {n} must be even and at least 2"))
    }
}

fn check_fidelity(name: &str, v: f64) -> Result<f64, UsageError> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        usage(format!("{name} = {v} outside [0, 1]"))
    }
}

impl RunConfig {
    pub fn resolve(command: Command, opts: Options) -> Result<Self, UsageError> {
        let d = defaults(command);
        let atoms = match (opts.n, opts.n_min, opts.n_max, d.n_range) {
            (Some(n), None, None, _) => vec![check_atoms(n)?],
            (Some(_), _, _, _) => return usage("--n cannot be combined with --n-min/--n-max"),
            (None, lo, hi, Some((dlo, dhi))) => {
                let (lo, hi) = (check_atoms(lo.unwrap_or(dlo))?, check_atoms(hi.unwrap_or(dhi))?);
                if lo > hi {
                    return usage(format!("--n-min {lo} exceeds --n-max {hi}"));
                }
                (lo..=hi).step_by(2).collect()
            }
            (None, _, _, None) => return usage(format!("{} needs --n", command.name())),
        };
        if command == Command::Fit && atoms.len() < 3 {
            return usage("fit needs at least three atom numbers");
        }

        let gamma_t = opts.gamma_t.or(d.gamma_t);
        if let Some(g) = gamma_t {
            if !(g > 0.0) || !g.is_finite() {
                return usage(format!("gamma_t = {g} must be positive and finite"));
            }
        }
        let gamma_over_emission = match opts.gamma_over_emission {
            Some(r) if r < 0.0 || !r.is_finite() => return usage(format!("gamma/Gamma = {r} must be nonnegative")),
            Some(r) if r > 0.0 => Some(r),
            _ => None,
        };
        if command == Command::Fig5 {
            if gamma_over_emission.is_none() {
                return usage("fig5 needs --gamma-over-gamma > 0");
            }
            if opts.gamma_t.is_some() {
                return usage("fig5 scans gamma_t itself; drop --gamma-t");
            }
        } else if gamma_over_emission.is_some() && gamma_t.is_none() {
            return usage("emission needs a finite --gamma-t");
        }

        let eta_h = check_fidelity("eta_h", opts.eta_h.or(opts.eta).unwrap_or(d.eta))?;
        let eta_m = check_fidelity("eta_m", opts.eta_m.or(opts.eta).unwrap_or(d.eta))?;
        let nu = opts.nu.unwrap_or(1.0);
        if !(nu >= 1.0) || !nu.is_finite() {
            return usage(format!("T/t = {nu} must be at least 1"));
        }
        Ok(RunConfig {
            command,
            atoms,
            gamma_t,
            gamma_over_emission,
            eta_h,
            eta_m,
            nu,
            output: opts.output,
            format: opts.format.unwrap_or_default(),
            integrator: opts.integrator.unwrap_or_default(),
        })
    }
}
