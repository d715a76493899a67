use std::collections::HashMap;
use std::path::PathBuf;
use std::process::Command;

use super::lp::export_lp;
use super::{Backend, Limits, SolveResult, SolveStatus, SolverError};
use crate::ilp::MilpModel;

/// Environment variable naming the external solver binary.
pub const SOLVER_BIN_ENV: &str = "ICONN_SOLVER_BIN";

/// Runs an external solver with the HiGHS command-line conventions
/// (`--model_file`, `--solution_file`, `--options_file`) and reads back a
/// HiGHS-style solution file.
#[derive(Clone, Debug)]
pub struct LpFileBackend {
    pub binary: PathBuf,
}

impl LpFileBackend {
    pub fn new(binary: impl Into<PathBuf>) -> Self {
        LpFileBackend {
            binary: binary.into(),
        }
    }

    pub fn from_env() -> Result<Self, SolverError> {
        std::env::var_os(SOLVER_BIN_ENV)
            .map(Self::new)
            .ok_or_else(|| SolverError::Unavailable(format!("lp-file (set {SOLVER_BIN_ENV})")))
    }
}

impl Backend for LpFileBackend {
    fn name(&self) -> &str {
        "lp-file"
    }

    fn run(&self, model: &MilpModel, limits: &Limits) -> Result<SolveResult, SolverError> {
        let io = |e: std::io::Error| SolverError::Backend(e.to_string());
        let dir = tempfile::tempdir().map_err(io)?;
        let model_path = dir.path().join("model.lp");
        let sol_path = dir.path().join("model.sol");
        let opt_path = dir.path().join("options.txt");
        std::fs::write(&model_path, export_lp(model)).map_err(io)?;
        let mut options = format!("threads = 1\nmip_rel_gap = {}\n", limits.gap);
        if let Some(tl) = limits.time_limit {
            options.push_str(&format!("time_limit = {tl}\n"));
        }
        std::fs::write(&opt_path, options).map_err(io)?;

        let output = Command::new(&self.binary)
            .arg("--model_file")
            .arg(&model_path)
            .arg("--solution_file")
            .arg(&sol_path)
            .arg("--options_file")
            .arg(&opt_path)
            .output()
            .map_err(|e| SolverError::Unavailable(format!("{}: {e}", self.binary.display())))?;
        if !sol_path.exists() {
            return Err(SolverError::Backend(format!(
                "solver exited with {} and wrote no solution file: {}",
                output.status,
                String::from_utf8_lossy(&output.stderr).trim()
            )));
        }
        let text = std::fs::read_to_string(&sol_path).map_err(io)?;
        let parsed = parse_solution_file(&text)?;

        let names: HashMap<String, usize> = model
            .variables()
            .iter()
            .enumerate()
            .map(|(i, v)| (v.key.lp_name(), i))
            .collect();
        let status = parsed.status;
        if !status.has_solution() {
            return Ok(SolveResult::failed(status, 0.0));
        }
        let mut values = vec![0.0; model.num_vars()];
        for (name, v) in parsed.columns {
            match names.get(&name) {
                Some(&i) => values[i] = v,
                None => {
                    return Err(SolverError::Backend(format!(
                        "solution mentions unknown column {name}"
                    )))
                }
            }
        }
        Ok(SolveResult {
            status,
            values: Some(values),
            objective: parsed.objective,
            wall_time: 0.0,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParsedSolution {
    pub status: SolveStatus,
    pub objective: Option<f64>,
    pub columns: Vec<(String, f64)>,
}

/// Parses the primal part of a HiGHS solution file.
pub fn parse_solution_file(text: &str) -> Result<ParsedSolution, SolverError> {
    let bad = |m: &str| SolverError::Backend(format!("solution file: {m}"));
    let mut lines = text.lines().map(str::trim);
    let mut status = None;
    let mut objective = None;
    let mut columns = Vec::new();
    while let Some(line) = lines.next() {
        if line == "Model status" {
            let s = lines
                .by_ref()
                .find(|l| !l.is_empty())
                .ok_or_else(|| bad("no status"))?;
            status = Some(match s.to_ascii_lowercase().as_str() {
                "optimal" => SolveStatus::Optimal,
                "infeasible" | "primal infeasible or unbounded" => SolveStatus::Infeasible,
                "time limit reached" => SolveStatus::TimeLimit,
                other => SolveStatus::Error(format!("external status `{other}`")),
            });
        } else if let Some(v) = line.strip_prefix("Objective ") {
            objective = Some(v.trim().parse::<f64>().map_err(|_| bad("bad objective"))?);
        } else if let Some(n) = line.strip_prefix("# Columns ") {
            let n: usize = n.trim().parse().map_err(|_| bad("bad column count"))?;
            for _ in 0..n {
                let l = lines.next().ok_or_else(|| bad("truncated column list"))?;
                let mut parts = l.split_whitespace();
                let (Some(name), Some(v)) = (parts.next(), parts.next()) else {
                    return Err(bad("bad column line"));
                };
                let v = v.parse::<f64>().map_err(|_| bad("bad column value"))?;
                columns.push((name.to_string(), v));
            }
            // only the primal block is needed
            break;
        }
    }
    let mut status = status.ok_or_else(|| bad("missing model status"))?;
    if status == SolveStatus::TimeLimit && !columns.is_empty() {
        status = SolveStatus::Feasible(f64::NAN);
    }
    Ok(ParsedSolution {
        status,
        objective,
        columns,
    })
}
