use std::path::{Path, PathBuf};

use adabar::ProblemSpec;
use clap::{Args, ValueEnum};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    Ahba,
    Sahba,
    #[value(name = "ahba_restart")]
    AhbaRestart,
    #[value(name = "sahba_restart")]
    SahbaRestart,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Ahba => "ahba",
            Algo::Sahba => "sahba",
            Algo::AhbaRestart => "ahba_restart",
            Algo::SahbaRestart => "sahba_restart",
        }
    }

    pub fn is_second_order(self) -> bool {
        matches!(self, Algo::Sahba | Algo::SahbaRestart)
    }
}

/// Settings shared by flags and the TOML config file. Keys are identical in
/// both (`max-outer = 100` in the file, `--max-outer 100` on the command line).
#[derive(Debug, Clone, Default, PartialEq, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Settings {
    #[arg(long)]
    pub algo: Option<Algo>,
    /// Built-in problem: box_qp, poisson or lp_regression.
    #[arg(long)]
    pub problem: Option<String>,
    /// Problem dimension (unknowns `u` for poisson).
    #[arg(long)]
    pub n: Option<usize>,
    /// Rows of the Poisson forward operator.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub negative_curvature_fraction: Option<f64>,
    /// Adds `sum(x) = n/4` to the box QP.
    #[arg(long)]
    pub sum_constraint: Option<bool>,
    /// Regularization weight (alpha for poisson, lambda for lp_regression).
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// First restart tolerance.
    #[arg(long)]
    pub eps0: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub eps_list: Option<Vec<f64>>,
    #[arg(long)]
    pub l0: Option<f64>,
    #[arg(long)]
    pub m0: Option<f64>,
    #[arg(long)]
    pub max_outer: Option<usize>,
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Output table of the scaling command.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Sample points per verification suite.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, hide = true)]
    pub gradient_scale: Option<f64>,
}

macro_rules! prefer {
    ($a:ident, $b:ident, $($f:ident),*) => {
        Settings { $($f: $a.$f.or($b.$f)),* }
    };
}

impl Settings {
    /// Field-wise merge; values already set in `self` win.
    pub fn or(self, other: Settings) -> Settings {
        prefer!(
            self, other, algo, problem, n, m, seed, negative_curvature_fraction, sum_constraint, alpha, p, eps,
            eps0, eps_list, l0, m0, max_outer, trace, report, out, samples, gradient_scale
        )
    }

    pub fn from_file(path: &Path) -> Result<Settings, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| {
            let msg = e.to_string();
            CliError::Input(format!("bad config {}: {}", path.display(), msg.lines().next().unwrap_or("")))
        })
    }

    /// Flags merged over the optional config file.
    pub fn load(flags: Settings, config: Option<&Path>) -> Result<Settings, CliError> {
        match config {
            Some(path) => Ok(flags.or(Settings::from_file(path)?)),
            None => Ok(flags),
        }
    }

    pub fn problem_spec(&self) -> Result<ProblemSpec, CliError> {
        let name = self.problem.as_deref().ok_or_else(|| CliError::Input("missing problem name (--problem)".into()))?;
        let mut spec = ProblemSpec::new(name);
        if let Some(n) = self.n {
            spec.n = n;
        }
        if let Some(m) = self.m {
            spec.m = m;
        }
        if let Some(seed) = self.seed {
            spec.seed = seed;
        }
        if let Some(f) = self.negative_curvature_fraction {
            spec.negative_curvature_fraction = f;
        }
        if let Some(s) = self.sum_constraint {
            spec.sum_constraint = s;
        }
        if let Some(a) = self.alpha {
            spec.alpha = a;
        }
        if let Some(p) = self.p {
            spec.p = p;
        }
        Ok(spec)
    }
}

/// Fully resolved configuration of one solve.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub algo: Algo,
    pub problem: ProblemSpec,
    pub eps: f64,
    /// First tolerance of the restart schedule.
    pub eps0: f64,
    /// `L0` for the first-order method, `M0` for the second-order one.
    pub initial_estimate: Option<f64>,
    pub max_outer: Option<usize>,
    pub trace: PathBuf,
    pub report: PathBuf,
}

pub const DEFAULT_EPS: f64 = 1e-3;
pub const DEFAULT_EPS0: f64 = 1e-1;

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Input(format!("{name} = {v} must be positive and finite")))
    }
}

impl RunConfig {
    pub fn resolve(s: &Settings) -> Result<RunConfig, CliError> {
        let algo = s.algo.unwrap_or(Algo::Ahba);
        let problem = s.problem_spec()?;
        let eps = positive("eps", s.eps.unwrap_or(DEFAULT_EPS))?;
        let eps0 = positive("eps0", s.eps0.unwrap_or(DEFAULT_EPS0))?;
        if matches!(algo, Algo::AhbaRestart | Algo::SahbaRestart) && !(eps0 > eps) {
            return Err(CliError::Input(format!("restart needs eps0 > eps, got {eps0} <= {eps}")));
        }
        let initial_estimate = if algo.is_second_order() {
            if s.l0.is_some() {
                return Err(CliError::Input("--l0 applies to ahba; use --m0 for sahba".into()));
            }
            s.m0.map(|v| positive("m0", v)).transpose()?
        } else {
            if s.m0.is_some() {
                return Err(CliError::Input("--m0 applies to sahba; use --l0 for ahba".into()));
            }
            match s.l0 {
                Some(v) if !(v >= 0.0 && v.is_finite()) => {
                    return Err(CliError::Input(format!("l0 = {v} must be finite and nonnegative")))
                }
                other => other,
            }
        };
        if s.max_outer == Some(0) {
            return Err(CliError::Input("max-outer must be at least 1".into()));
        }
        Ok(RunConfig {
            algo,
            problem,
            eps,
            eps0,
            initial_estimate,
            max_outer: s.max_outer,
            trace: s.trace.clone().unwrap_or_else(|| PathBuf::from("trace.csv")),
            report: s.report.clone().unwrap_or_else(|| PathBuf::from("report.json")),
        })
    }
}
