use std::collections::BTreeMap;

use super::SolveResult;
use crate::ilp::{MilpModel, VarKey};
use crate::network::StateId;
use crate::problem::ProblemSpec;
use crate::scalar::Scalar;
use crate::verify::{FlowEvent, PlanSolution, FLOW_EPS};

/// Reads a plan out of a solved model. `None` when the result carries no
/// assignment or some agent has no position at some step.
pub fn extract_plan<W: Scalar>(
    spec: &ProblemSpec<W>,
    model: &MilpModel,
    result: &SolveResult,
) -> Option<PlanSolution> {
    let values = result.values.as_ref()?;
    let net = &spec.net;
    let mut paths = vec![vec![None; spec.horizon + 1]; spec.num_agents()];
    let mut comm_events = Vec::new();
    let mut flow_moves = Vec::new();
    let mut reward_flags = BTreeMap::new();
    for (var, &v) in model.variables().iter().zip(values) {
        match var.key {
            VarKey::Z { r, s, t } if v > 0.5 => paths[r][t] = Some(s),
            VarKey::Fbar { b, edge, t } if v > FLOW_EPS => {
                let e = &net.comm_edges()[edge];
                comm_events.push(FlowEvent {
                    t,
                    from: e.from,
                    to: e.to,
                    flow: b,
                    amount: v,
                });
            }
            VarKey::F { b, edge, t } if v > FLOW_EPS => {
                let e = &net.mobility_edges()[edge];
                flow_moves.push(FlowEvent {
                    t,
                    from: e.from,
                    to: e.to,
                    flow: b,
                    amount: v,
                });
            }
            VarKey::Y { s, k } => {
                reward_flags.insert((s, k), v > 0.5);
            }
            _ => {}
        }
    }
    let paths: Vec<Vec<StateId>> = paths
        .into_iter()
        .map(|p| p.into_iter().collect::<Option<Vec<_>>>())
        .collect::<Option<_>>()?;
    let key = |e: &FlowEvent| (e.t, e.flow, e.from, e.to);
    comm_events.sort_by_key(key);
    flow_moves.sort_by_key(key);
    Some(PlanSolution {
        paths,
        comm_events,
        flow_moves,
        objective: result.objective.unwrap_or(f64::NAN),
        reward_flags,
    })
}
