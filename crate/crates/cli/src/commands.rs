use std::fs;
use std::path::{Path, PathBuf};

use adabar::{
    certify_output, restart_loop, run_ahba, run_sahba, verify_problem, with_scaled_gradient, AhbaConfig, Certificates,
    Problem, RestartConfig, SahbaConfig, SolveOutput, Status,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{Algo, RunConfig, Settings};
use crate::{CliError, EXIT_CHECK_FAILED, EXIT_CONVERGED, EXIT_MAX_ITERATIONS, EXIT_NUMERICAL};

/// A finished solve with its certificates.
#[derive(Debug, Clone)]
pub struct Solved {
    pub problem: Problem,
    pub output: SolveOutput,
    pub certificates: Certificates,
}

/// Builds the problem, starts at its analytic center (or `x_start` when the
/// barrier has no minimizer on the slice) and runs the configured method.
pub fn solve(cfg: &RunConfig) -> Result<Solved, CliError> {
    let problem = cfg.problem.build()?;
    let basis = problem.basis()?;
    let x0 = problem.initial_point(&basis)?;
    let pot = problem.potential(1.0)?;
    let mut ahba = AhbaConfig::new(cfg.eps);
    if let Some(l0) = cfg.initial_estimate {
        ahba.l0 = l0;
    }
    let mut sahba = SahbaConfig::new(cfg.eps);
    sahba.m0 = cfg.initial_estimate;
    if let Some(max_outer) = cfg.max_outer {
        ahba.max_outer = max_outer;
        sahba.max_outer = max_outer;
    }
    let output = match cfg.algo {
        Algo::Ahba => run_ahba(&pot, &basis, &x0, &ahba)?,
        Algo::Sahba => run_sahba(&pot, &basis, &x0, &sahba)?,
        Algo::AhbaRestart => restart_loop(&RestartConfig::Ahba(ahba), &pot, &basis, &x0, cfg.eps0, cfg.eps)?,
        Algo::SahbaRestart => restart_loop(&RestartConfig::Sahba(sahba), &pot, &basis, &x0, cfg.eps0, cfg.eps)?,
    };
    let certificates = certify_output(&output, &pot, &basis)?;
    Ok(Solved { problem, output, certificates })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateReport {
    pub xi: f64,
    pub eps_bound: Option<f64>,
    pub feasibility_residual: f64,
    pub eps2: Option<f64>,
    pub min_eig: Option<f64>,
    pub second_order_passed: Option<bool>,
}

/// JSON report of one solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub algo: String,
    pub problem: String,
    pub status: Status,
    pub iterations: usize,
    pub inner_trials: usize,
    pub epochs: usize,
    pub eps: f64,
    pub mu: f64,
    pub nu: f64,
    pub final_vnorm: f64,
    pub threshold: f64,
    pub l_initial: f64,
    pub l_final: f64,
    pub l_last: f64,
    pub l_max: f64,
    pub f_initial: f64,
    pub f_final: f64,
    pub f_best: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub s: Vec<f64>,
    pub certificates: CertificateReport,
    pub warnings: Vec<String>,
}

impl SolveReport {
    pub fn new(algo: Algo, solved: &Solved) -> Self {
        let out = &solved.output;
        let cert = &solved.certificates;
        let so = cert.second_order.as_ref();
        SolveReport {
            algo: algo.name().to_string(),
            problem: solved.problem.name.clone(),
            status: out.status.clone(),
            iterations: out.iterations,
            inner_trials: out.inner_trials,
            epochs: out.epochs,
            eps: out.eps,
            mu: out.mu,
            nu: out.nu,
            final_vnorm: out.final_vnorm,
            threshold: out.threshold,
            l_initial: out.l_initial,
            l_final: out.l_final,
            l_last: out.l_last,
            l_max: out.l_max,
            f_initial: out.f_initial,
            f_final: out.f_final,
            f_best: out.f_best,
            x: out.x.iter().copied().collect(),
            y: out.y.iter().copied().collect(),
            s: out.s.iter().copied().collect(),
            certificates: CertificateReport {
                xi: cert.kkt.xi,
                eps_bound: cert.kkt.eps_bound,
                feasibility_residual: cert.kkt.feasibility_residual,
                eps2: so.map(|c| c.eps2),
                min_eig: so.map(|c| c.min_eig),
                second_order_passed: so.map(|c| c.passed),
            },
            warnings: out.warnings.clone(),
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

fn status_code(status: &Status) -> i32 {
    match status {
        Status::Converged => EXIT_CONVERGED,
        Status::MaxIterations => EXIT_MAX_ITERATIONS,
        Status::Failure(_) => EXIT_NUMERICAL,
    }
}

/// `solve`: writes the trace and the report, returns the exit code.
pub fn run_solve(settings: &Settings) -> Result<i32, CliError> {
    let cfg = RunConfig::resolve(settings)?;
    let solved = solve(&cfg)?;
    write_file(&cfg.trace, &solved.output.trace.to_csv(true))?;
    let report = SolveReport::new(cfg.algo, &solved);
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Numerical(e.to_string()))?;
    write_file(&cfg.report, &(json + "\n"))?;
    let out = &solved.output;
    println!(
        "{} on {}: {:?} after {} outer / {} inner iterations, f = {:.6e}, ||v|| = {:.3e} (threshold {:.3e})",
        cfg.algo.name(),
        solved.problem.name,
        out.status,
        out.iterations,
        out.inner_trials,
        out.f_final,
        out.final_vnorm,
        out.threshold
    );
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    Ok(status_code(&out.status))
}

/// One row of the scaling table plus the data needed for iteration ceilings.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub eps: f64,
    pub outer: usize,
    pub inner: usize,
    pub status: Status,
    pub nu: f64,
    pub l_initial: f64,
    pub l_max: f64,
    pub f_initial: f64,
    pub f_best: f64,
}

/// Least-squares slope of `ln(outer)` against `ln(1/eps)`; `0` for fewer than
/// two tolerances. Outer counts below one are taken as one.
pub fn fit_exponent(rows: &[(f64, usize)]) -> f64 {
    if rows.len() < 2 {
        return 0.0;
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|&(eps, k)| ((1.0 / eps).ln(), (k.max(1) as f64).ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}

/// `ceil(36 (df + eps) nu^2 (max{M, L0} + eps/nu) / eps^2)`.
pub fn ceiling_first_order(delta_f: f64, eps: f64, nu: f64, m: f64, l0: f64) -> f64 {
    (36.0 * (delta_f + eps) * nu * nu * (m.max(l0) + eps / nu) / (eps * eps)).ceil()
}

/// `ceil(576 nu^{3/2} sqrt(6 max{M, M0}) (df + eps) / eps^{3/2})`.
pub fn ceiling_second_order(delta_f: f64, eps: f64, nu: f64, m: f64, m0: f64) -> f64 {
    (576.0 * nu.powf(1.5) * (6.0 * m.max(m0)).sqrt() * (delta_f + eps) / eps.powf(1.5)).ceil()
}

pub fn format_scaling(rows: &[ScalingRow], exponent: f64) -> String {
    let mut out = String::from("eps,outer,inner,fitted_exponent\n");
    for r in rows {
        out.push_str(&format!("{:.16e},{},{},{:.16e}\n", r.eps, r.outer, r.inner, exponent));
    }
    out
}

/// Runs one solve per tolerance in parallel threads. Returns the successful
/// rows in tolerance order, the fitted exponent and the first error, if any.
pub fn scaling(settings: &Settings) -> Result<(Vec<ScalingRow>, f64, Option<CliError>), CliError> {
    let eps_list = settings.eps_list.clone().ok_or_else(|| CliError::Input("missing --eps-list".into()))?;
    if eps_list.is_empty() {
        return Err(CliError::Input("--eps-list is empty".into()));
    }
    if eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(CliError::Input("--eps-list must be strictly decreasing".into()));
    }
    let configs = eps_list
        .iter()
        .map(|&eps| RunConfig::resolve(&Settings { eps: Some(eps), ..settings.clone() }))
        .collect::<Result<Vec<_>, _>>()?;
    let results: Vec<Result<Solved, CliError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = configs.iter().map(|cfg| scope.spawn(move || solve(cfg))).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(CliError::Numerical("solver thread panicked".into()))))
            .collect()
    });
    let mut rows = Vec::new();
    let mut first_error = None;
    for (eps, res) in eps_list.iter().zip(results) {
        match res {
            Ok(s) => {
                let o = s.output;
                rows.push(ScalingRow {
                    eps: *eps,
                    outer: o.iterations,
                    inner: o.inner_trials,
                    status: o.status,
                    nu: o.nu,
                    l_initial: o.l_initial,
                    l_max: o.l_max,
                    f_initial: o.f_initial,
                    f_best: o.f_best,
                });
            }
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    let pairs: Vec<(f64, usize)> = rows.iter().map(|r| (r.eps, r.outer)).collect();
    Ok((rows, fit_exponent(&pairs), first_error))
}

/// `scaling`: writes `eps,outer,inner,fitted_exponent` (partial on error).
pub fn run_scaling(settings: &Settings) -> Result<i32, CliError> {
    let (rows, exponent, error) = scaling(settings)?;
    let table = format_scaling(&rows, exponent);
    let path = settings.out.clone().unwrap_or_else(|| PathBuf::from("scaling.csv"));
    write_file(&path, &table)?;
    print!("{table}");
    if let Some(e) = error {
        return Err(e);
    }
    Ok(rows.iter().map(|r| status_code(&r.status)).max().unwrap_or(EXIT_CONVERGED))
}

/// Pass/fail table of the numeric self-checks.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyTable {
    pub problem: String,
    pub lines: Vec<adabar::CheckLine>,
}

impl VerifyTable {
    pub fn passed(&self) -> bool {
        self.lines.iter().all(|l| l.passed)
    }

    pub fn render(&self) -> String {
        let mut out = format!("{:<24} {:>12} {:>12}  result\n", "check", "value", "tol");
        for l in &self.lines {
            out.push_str(&format!(
                "{:<24} {:>12.4e} {:>12.4e}  {}\n",
                l.name,
                l.value,
                l.tol,
                if l.passed { "PASS" } else { "FAIL" }
            ));
        }
        out
    }
}

pub fn verify_table(settings: &Settings) -> Result<VerifyTable, CliError> {
    let spec = settings.problem_spec()?;
    let mut problem = spec.build()?;
    if let Some(scale) = settings.gradient_scale {
        problem = with_scaled_gradient(&problem, scale);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let lines = verify_problem(&problem, settings.samples.unwrap_or(100), &mut rng)?;
    Ok(VerifyTable { problem: problem.name, lines })
}

/// `verify`: prints the table; exit 0 if every check passes, 1 otherwise.
pub fn run_verify(settings: &Settings) -> Result<i32, CliError> {
    let table = verify_table(settings)?;
    print!("{}", table.render());
    Ok(if table.passed() { EXIT_CONVERGED } else { EXIT_CHECK_FAILED })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponent_of_power_law() {
        // outer = 5 eps^{-1.5}
        let rows: Vec<(f64, usize)> = [1e-1, 1e-2, 1e-3, 1e-4].iter().map(|&e: &f64| (e, (5.0 * e.powf(-1.5)).round() as usize)).collect();
        assert!((fit_exponent(&rows) - 1.5).abs() < 1e-3);
        assert_eq!(fit_exponent(&rows[..1]), 0.0);
        assert_eq!(fit_exponent(&[]), 0.0);
    }

    #[test]
    fn ceilings_by_hand() {
        // 36 * 1.1 * 4 * (2 + 0.05) / 0.01 = 32472
        assert_eq!(ceiling_first_order(1.0, 0.1, 2.0, 2.0, 1.0), 32472.0);
        // 576 * 8 * sqrt(6 * 3) * 2 / 1 = 39098.6... -> 39099
        let expect = (576.0 * 8.0 * 18f64.sqrt() * 2.0f64).ceil();
        assert_eq!(ceiling_second_order(1.0, 1.0, 4.0, 1.0, 3.0), expect);
    }
}
