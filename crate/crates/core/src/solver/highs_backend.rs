use highs::{HighsModelStatus, HighsOptionValue, HighsSolutionStatus, Model, RowProblem, Sense};

use super::{Backend, Limits, SolveResult, SolveStatus, SolverError};
use crate::ilp::{Cmp, Domain, MilpModel};

fn set_option<V: HighsOptionValue>(m: &mut Model, name: &str, value: V) -> Result<(), SolverError> {
    m.try_set_option(name, value)
        .map_err(|_| SolverError::Backend(format!("cannot set HiGHS option {name}")))
}

/// In-process HiGHS, single-threaded for reproducibility.
#[derive(Clone, Copy, Debug, Default)]
pub struct HighsBackend;

impl Backend for HighsBackend {
    fn name(&self) -> &str {
        "highs"
    }

    fn run(&self, model: &MilpModel, limits: &Limits) -> Result<SolveResult, SolverError> {
        if model.num_vars() == 0 {
            let feasible = model.constraints.iter().all(|c| c.cmp.holds(0.0, c.rhs, 1e-9));
            return Ok(if feasible {
                SolveResult {
                    status: SolveStatus::Optimal,
                    values: Some(Vec::new()),
                    objective: Some(0.0),
                    wall_time: 0.0,
                }
            } else {
                SolveResult::failed(SolveStatus::Infeasible, 0.0)
            });
        }

        let mut costs = vec![0.0; model.num_vars()];
        for &(v, c) in &model.objective.terms {
            costs[v] += c;
        }
        let mut pb = RowProblem::new();
        let cols: Vec<_> = model
            .variables()
            .iter()
            .zip(&costs)
            .map(|(var, &cost)| match (var.domain, var.upper) {
                (Domain::Binary, _) => pb.add_integer_column(cost, 0.0..=1.0),
                (Domain::Continuous, Some(u)) => pb.add_column(cost, 0.0..=u),
                (Domain::Continuous, None) => pb.add_column(cost, 0.0..),
            })
            .collect();
        for c in &model.constraints {
            let row: Vec<_> = c
                .expr
                .normalized()
                .terms
                .into_iter()
                .map(|(v, coef)| (cols[v], coef))
                .collect();
            match c.cmp {
                Cmp::Le => pb.add_row(..=c.rhs, row),
                Cmp::Ge => pb.add_row(c.rhs.., row),
                Cmp::Eq => pb.add_row(c.rhs..=c.rhs, row),
            }
        }

        let mut m = pb
            .try_optimise(Sense::Maximise)
            .map_err(|e| SolverError::Backend(format!("{e:?}")))?;
        m.make_quiet();
        set_option(&mut m, "threads", 1)?;
        set_option(&mut m, "mip_rel_gap", limits.gap)?;
        set_option(&mut m, "random_seed", 0)?;
        if let Some(tl) = limits.time_limit {
            set_option(&mut m, "time_limit", tl)?;
        }
        let solved = m
            .try_solve()
            .map_err(|e| SolverError::Backend(format!("{e:?}")))?;

        let has_primal = solved.primal_solution_status() == HighsSolutionStatus::Feasible;
        let status = match solved.status() {
            HighsModelStatus::Optimal => SolveStatus::Optimal,
            HighsModelStatus::Infeasible | HighsModelStatus::UnboundedOrInfeasible => SolveStatus::Infeasible,
            HighsModelStatus::ReachedTimeLimit
            | HighsModelStatus::ReachedIterationLimit
            | HighsModelStatus::ReachedSolutionLimit
            | HighsModelStatus::ReachedInterrupt => {
                if has_primal {
                    SolveStatus::Feasible(solved.mip_gap())
                } else {
                    SolveStatus::TimeLimit
                }
            }
            other => SolveStatus::Error(format!("HiGHS status {other:?}")),
        };
        if !status.has_solution() {
            return Ok(SolveResult::failed(status, 0.0));
        }
        let values = solved.get_solution().columns().to_vec();
        Ok(SolveResult {
            status,
            values: Some(values),
            objective: Some(solved.objective_value()),
            wall_time: 0.0,
        })
    }
}
