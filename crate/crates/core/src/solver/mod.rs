//! Backend-neutral MILP solving.
//!
//! A [`Backend`] takes a [`MilpModel`] and returns raw column values. The
//! in-process HiGHS backend is the default; [`LpFileBackend`] writes an LP
//! file and runs an external solver binary instead.

mod extract;
#[cfg(feature = "highs")]
mod highs_backend;
mod lp;
mod lp_file;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ilp::{Domain, MilpModel, VarKey};

pub use extract::extract_plan;
#[cfg(feature = "highs")]
pub use highs_backend::HighsBackend;
pub use lp::{export_lp, parse_lp, ParsedConstraint, ParsedLp};
pub use lp_file::{parse_solution_file, LpFileBackend, SOLVER_BIN_ENV};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    /// Wall-clock limit in seconds.
    pub time_limit: Option<f64>,
    /// Relative MIP gap at which the backend may stop.
    pub gap: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            time_limit: None,
            gap: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// Incumbent found but optimality not proven; carries the reported gap.
    Feasible(f64),
    Infeasible,
    TimeLimit,
    Error(String),
}

impl SolveStatus {
    pub fn has_solution(&self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::Feasible(_))
    }

    pub fn label(&self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Feasible(_) => "feasible",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::TimeLimit => "time_limit",
            SolveStatus::Error(_) => "error",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Column values indexed like the model's variables; present iff the
    /// status carries a solution.
    pub values: Option<Vec<f64>>,
    pub objective: Option<f64>,
    pub wall_time: f64,
}

impl SolveResult {
    pub fn failed(status: SolveStatus, wall_time: f64) -> Self {
        SolveResult {
            status,
            values: None,
            objective: None,
            wall_time,
        }
    }

    pub fn value(&self, model: &MilpModel, key: &VarKey) -> Option<f64> {
        let i = model.lookup(key)?;
        self.values.as_ref().map(|v| v[i])
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("backend `{0}` is not available")]
    Unavailable(String),
    #[error("backend failure: {0}")]
    Backend(String),
}

pub trait Backend: Send + Sync {
    fn name(&self) -> &str;

    /// Raw solve. Implementations need not round binaries.
    fn run(&self, model: &MilpModel, limits: &Limits) -> Result<SolveResult, SolverError>;
}

/// Backend by id: `highs` (in-process) or `lp-file` (external binary named
/// by the environment variable [`SOLVER_BIN_ENV`]).
pub fn backend(id: &str) -> Result<Box<dyn Backend>, SolverError> {
    match id {
        #[cfg(feature = "highs")]
        "highs" => Ok(Box::new(HighsBackend)),
        "lp-file" => Ok(Box::new(LpFileBackend::from_env()?)),
        other => Err(SolverError::Unavailable(other.to_string())),
    }
}

pub fn default_backend() -> Box<dyn Backend> {
    #[cfg(feature = "highs")]
    {
        Box::new(HighsBackend)
    }
    #[cfg(not(feature = "highs"))]
    {
        match LpFileBackend::from_env() {
            Ok(b) => Box::new(b),
            Err(_) => Box::new(LpFileBackend::new("highs")),
        }
    }
}

/// Solves `model` and cleans the assignment: binaries are rounded and tiny
/// negative continuous values clamped, after which the objective is
/// recomputed from the cleaned values.
pub fn solve(model: &MilpModel, backend: &dyn Backend, limits: &Limits) -> SolveResult {
    let start = Instant::now();
    let mut result = match backend.run(model, limits) {
        Ok(r) => r,
        Err(e) => SolveResult::failed(SolveStatus::Error(e.to_string()), 0.0),
    };
    result.wall_time = start.elapsed().as_secs_f64();
    if !result.status.has_solution() {
        result.values = None;
        result.objective = None;
        return result;
    }
    let Some(values) = result.values.as_mut() else {
        result.status = SolveStatus::Error("backend reported a solution without values".into());
        return result;
    };
    if values.len() != model.num_vars() {
        result.status = SolveStatus::Error(format!(
            "backend returned {} values for {} variables",
            values.len(),
            model.num_vars()
        ));
        result.values = None;
        return result;
    }
    for (v, var) in values.iter_mut().zip(model.variables()) {
        match var.domain {
            Domain::Binary => {
                if (*v - v.round()).abs() > 1e-6 {
                    log::warn!("binary {} has fractional value {v}", var.key.lp_name());
                }
                *v = v.round().clamp(0.0, 1.0);
            }
            Domain::Continuous => {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
    }
    let recomputed = model.objective_value(values);
    if let Some(reported) = result.objective {
        if (reported - recomputed).abs() > 1e-6 * reported.abs().max(1.0) {
            log::debug!("objective {reported} recomputed as {recomputed} after rounding");
        }
    }
    result.objective = Some(recomputed);
    result
}
