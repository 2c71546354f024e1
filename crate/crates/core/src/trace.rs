//! Per-trial trace rows, step records and solver output.

use std::fmt::Write as _;

use nalgebra::DVector;
use serde::Serialize;

pub const TRACE_HEADER: &str = "k,inner,estimate,alpha,vnorm,Fmu,f,feas,accepted,ms";

/// One inner-loop trial. `fmu`, `f` and `feas` are evaluated at the trial point.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub inner: usize,
    pub estimate: f64,
    pub alpha: f64,
    pub vnorm: f64,
    pub fmu: f64,
    pub f: f64,
    pub feas: f64,
    pub accepted: bool,
    pub ms: f64,
}

impl TraceRow {
    /// CSV line with 17 significant digits; `with_time = false` blanks the
    /// wall-time column for byte comparisons.
    pub fn to_csv(&self, with_time: bool) -> String {
        let mut s = String::with_capacity(200);
        let _ = write!(
            s,
            "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            self.k,
            self.inner,
            self.estimate,
            self.alpha,
            self.vnorm,
            self.fmu,
            self.f,
            self.feas,
            u8::from(self.accepted)
        );
        if with_time {
            let _ = write!(s, ",{:.3}", self.ms);
        } else {
            s.push(',');
        }
        s
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub fn push(&mut self, row: TraceRow) {
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn accepted(&self) -> impl Iterator<Item = &TraceRow> {
        self.rows.iter().filter(|r| r.accepted)
    }

    pub fn to_csv(&self, with_time: bool) -> String {
        let mut out = String::with_capacity(TRACE_HEADER.len() + 1 + self.rows.len() * 200);
        out.push_str(TRACE_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.to_csv(with_time));
            out.push('\n');
        }
        out
    }

    /// Appends rows of a later epoch, shifting their outer counter.
    pub fn extend_shifted(&mut self, other: &Trace, k_offset: usize) {
        self.rows.extend(other.rows.iter().map(|r| TraceRow { k: r.k + k_offset, ..r.clone() }));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Ahba,
    Sahba,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Ahba => "ahba",
            Algorithm::Sahba => "sahba",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "reason", rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxIterations,
    Failure(String),
}

/// Data of one accepted outer step, kept for audits.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    pub inner_trials: usize,
    /// Accepted estimate: `2^i L_k` for the first-order method, `L_k` for the second-order one.
    pub estimate: f64,
    pub alpha: f64,
    pub vnorm: f64,
    pub fmu_before: f64,
    pub fmu_after: f64,
    /// Guaranteed decrease `-alpha ||v||^2 / 2` or `-||v||^3 L alpha^2 / 24`.
    pub decrease_bound: f64,
    /// Whether the guaranteed decrease applies to this step.
    pub bound_applies: bool,
    /// `||v||` threshold at this step (`eps/(3 nu)` or `Delta_k`).
    pub threshold: f64,
    /// Smallest eigenvalue of the projected curvature certificate (second-order method only).
    pub curvature_min_eig: Option<f64>,
    pub eps: f64,
    pub mu: f64,
}

#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub algorithm: Algorithm,
    pub status: Status,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    /// `grad f(x) - A^T y`.
    pub s: DVector<f64>,
    /// Estimate carried to the next iteration (`L_{k+1}` or `M_k`).
    pub l_final: f64,
    /// Estimate used at the last accepted step.
    pub l_last: f64,
    /// Largest accepted estimate.
    pub l_max: f64,
    pub l_initial: f64,
    pub iterations: usize,
    pub inner_trials: usize,
    pub eps: f64,
    pub mu: f64,
    pub nu: f64,
    pub final_vnorm: f64,
    pub threshold: f64,
    pub fmu_initial: f64,
    pub f_initial: f64,
    pub f_final: f64,
    /// Smallest objective value observed at an accepted point.
    pub f_best: f64,
    pub epochs: usize,
    pub trace: Trace,
    pub steps: Vec<StepRecord>,
    pub iterates: Vec<DVector<f64>>,
    pub warnings: Vec<String>,
}

impl SolveOutput {
    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }
}
