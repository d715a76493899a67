//! MILP encoding of the intermittent-connectivity problems on the
//! time-extended graph.
//!
//! Binary `z`/`x`/`y` variables describe agent positions, transitions and
//! collected rewards; continuous `f`/`fbar` variables carry one flow per
//! flow id over mobility and communication arcs. Every constraint carries a
//! tag naming its family so counts can be audited.

mod model;

pub use model::{Cmp, Constraint, Domain, FlowId, LinExpr, MilpModel, VarIndex, VarKey, Variable};

use crate::network::StateId;
use crate::problem::{FlowOrientation, ProblemError, ProblemSpec};
use crate::scalar::Scalar;

pub const TAG_DYN_IN: &str = "dynamics_in";
pub const TAG_DYN_OUT: &str = "dynamics_out";
pub const TAG_INITIAL: &str = "initial";
pub const TAG_FLOW: &str = "flow";
pub const TAG_BRIDGE: &str = "bridge";
pub const TAG_REWARD: &str = "reward_link";
pub const TAG_MASTER_FLOW: &str = "master_flow";
pub const TAG_MASTER_STATIC: &str = "master_static";
pub const TAG_MASTER_COMM: &str = "master_comm";
pub const TAG_STATIC: &str = "static";
pub const TAG_COLLISION_MOVE: &str = "collision_move";
pub const TAG_COLLISION_POS: &str = "collision_pos";
pub const TAG_AWARENESS: &str = "awareness";
pub const TAG_RETURN: &str = "return_to_base";

fn z(model: &mut MilpModel, r: usize, s: StateId, t: usize) -> VarIndex {
    model.var(VarKey::Z { r, s, t })
}

fn x(model: &mut MilpModel, r: usize, edge: usize, t: usize) -> VarIndex {
    model.var(VarKey::X { r, edge, t })
}

/// All flow ids present in the model for `spec`: data flows, then the master
/// flow when information consistency is requested.
pub fn all_flow_ids<W: Scalar>(spec: &ProblemSpec<W>) -> Vec<FlowId> {
    let mut ids: Vec<FlowId> = spec.flow_ids().into_iter().map(FlowId::Agent).collect();
    if spec.extensions.information_consistent {
        ids.push(FlowId::Master);
    }
    ids
}

/// Net inflow of flow `b` into `(s, t)`.
fn net_inflow<W: Scalar>(
    spec: &ProblemSpec<W>,
    model: &mut MilpModel,
    b: FlowId,
    s: StateId,
    t: usize,
) -> LinExpr {
    let net = &spec.net;
    let horizon = spec.horizon;
    let mut e = LinExpr::new();
    if t > 0 {
        for &edge in net.mobility_in(s) {
            e.add(model.var(VarKey::F { b, edge, t: t - 1 }), 1.0);
        }
    }
    for &edge in net.comm_in(s) {
        e.add(model.var(VarKey::Fbar { b, edge, t }), 1.0);
    }
    if t < horizon {
        for &edge in net.mobility_out(s) {
            e.add(model.var(VarKey::F { b, edge, t }), -1.0);
        }
    }
    for &edge in net.comm_out(s) {
        e.add(model.var(VarKey::Fbar { b, edge, t }), -1.0);
    }
    e
}

/// Transition coupling for every agent and step, plus initial positions.
pub fn build_dynamics<W: Scalar>(spec: &ProblemSpec<W>, model: &mut MilpModel) {
    let net = &spec.net;
    for r in 0..spec.num_agents() {
        for t in 0..spec.horizon {
            for s in net.states() {
                let mut into = LinExpr::new();
                into.add(z(model, r, s, t + 1), 1.0);
                for &edge in net.mobility_in(s) {
                    into.add(x(model, r, edge, t), -1.0);
                }
                model.add_constraint(into, Cmp::Eq, 0.0, TAG_DYN_IN);

                let mut out = LinExpr::new();
                out.add(z(model, r, s, t), 1.0);
                for &edge in net.mobility_out(s) {
                    out.add(x(model, r, edge, t), -1.0);
                }
                model.add_constraint(out, Cmp::Eq, 0.0, TAG_DYN_OUT);
            }
        }
        let start = spec.agents.initial[r];
        for s in net.states() {
            let mut e = LinExpr::new();
            e.add(z(model, r, s, 0), 1.0);
            let rhs = if s == start { 1.0 } else { 0.0 };
            model.add_constraint(e, Cmp::Eq, rhs, TAG_INITIAL);
        }
    }
    // make sure every position variable exists even when T = 0 with no
    // transitions touching it
    for r in 0..spec.num_agents() {
        for t in 0..=spec.horizon {
            for s in net.states() {
                z(model, r, s, t);
            }
        }
    }
}

/// Flow balance for the data flows. Skipped when `src` or `snk` is empty.
pub fn build_flow<W: Scalar>(spec: &ProblemSpec<W>, model: &mut MilpModel) {
    let horizon = spec.horizon;
    let orientation = spec.resolved_orientation();
    for b in spec.flow_ids() {
        for s in spec.net.states() {
            for t in 0..=horizon {
                let mut e = net_inflow(spec, model, FlowId::Agent(b), s, t);
                // move the right-hand side agent terms to the left
                match orientation {
                    FlowOrientation::ManyToOne => {
                        if t == 0 {
                            for &r in &spec.src {
                                e.add(z(model, r, s, 0), 1.0);
                            }
                        }
                        if t == horizon {
                            e.add(z(model, b, s, horizon), -(spec.src.len() as f64));
                        }
                    }
                    _ => {
                        if t == 0 {
                            e.add(z(model, b, s, 0), spec.snk.len() as f64);
                        }
                        if t == horizon {
                            for &r in &spec.snk {
                                e.add(z(model, r, s, horizon), -1.0);
                            }
                        }
                    }
                }
                model.add_constraint(e, Cmp::Eq, 0.0, TAG_FLOW);
            }
        }
    }
}

/// Big-M coupling of flow to agent presence (communication arcs) and agent
/// traversal (mobility arcs), for every flow id in the model.
pub fn build_bridge<W: Scalar>(spec: &ProblemSpec<W>, model: &mut MilpModel) {
    let big_m = spec.big_m() as f64;
    let net = &spec.net;
    let agents = spec.num_agents();
    for b in all_flow_ids(spec) {
        for t in 0..=spec.horizon {
            for (edge, ce) in net.comm_edges().iter().enumerate() {
                for end in [ce.from, ce.to] {
                    let mut e = LinExpr::new();
                    e.add(model.var(VarKey::Fbar { b, edge, t }), 1.0);
                    for r in 0..agents {
                        e.add(z(model, r, end, t), -big_m);
                    }
                    model.add_constraint(e, Cmp::Le, 0.0, TAG_BRIDGE);
                }
            }
            if t < spec.horizon {
                for edge in 0..net.mobility_edges().len() {
                    let mut e = LinExpr::new();
                    e.add(model.var(VarKey::F { b, edge, t }), 1.0);
                    for r in 0..agents {
                        e.add(x(model, r, edge, t), -big_m);
                    }
                    model.add_constraint(e, Cmp::Le, 0.0, TAG_BRIDGE);
                }
            }
        }
    }
}

/// `k * y_sk <= (number of reward-capable agents in s at T)`.
pub fn build_reward_link<W: Scalar>(spec: &ProblemSpec<W>, model: &mut MilpModel) {
    for (&(s, k), v) in &spec.rewards {
        if v.is_zero() {
            continue;
        }
        let mut e = LinExpr::new();
        e.add(model.var(VarKey::Y { s, k }), k as f64);
        for r in (0..spec.num_agents()).filter(|&r| spec.agents.can_collect(r)) {
            e.add(z(model, r, s, spec.horizon), -1.0);
        }
        model.add_constraint(e, Cmp::Le, 0.0, TAG_REWARD);
    }
}

/// Rewards minus mobility cost (steps `0..T`) minus communication cost
/// (steps `1..=T`, every flow id).
pub fn build_objective<W: Scalar>(spec: &ProblemSpec<W>, model: &mut MilpModel) {
    let net = &spec.net;
    for (&(s, k), v) in &spec.rewards {
        if !v.is_zero() {
            let y = model.var(VarKey::Y { s, k });
            model.add_objective(y, v.as_f64());
        }
    }
    for r in 0..spec.num_agents() {
        for t in 0..spec.horizon {
            for (edge, me) in net.mobility_edges().iter().enumerate() {
                let var = x(model, r, edge, t);
                model.add_objective(var, -me.weight.at(t).as_f64());
            }
        }
    }
    for b in all_flow_ids(spec) {
        for t in 1..=spec.horizon {
            for (edge, ce) in net.comm_edges().iter().enumerate() {
                let var = model.var(VarKey::Fbar { b, edge, t });
                model.add_objective(var, -ce.weight.at(t).as_f64());
            }
        }
    }
}

/// Master flow supply and the gating of motion and transmission at the
/// start state of every agent not starting with a master.
pub fn build_master<W: Scalar>(spec: &ProblemSpec<W>, model: &mut MilpModel) -> Result<(), ProblemError> {
    if spec.agents.masters.is_empty() {
        return Err(ProblemError::Config(
            "information_consistent requires at least one master".into(),
        ));
    }
    let net = &spec.net;
    let n_states = net.num_states() as f64;
    let big_m = spec.big_m() as f64;
    let master_starts = spec.agents.master_starts();
    let m = FlowId::Master;
    for s in net.states() {
        for t in 0..=spec.horizon {
            let e = net_inflow(spec, model, m, s, t);
            let rhs = if t == 0 && master_starts.contains(&s) {
                -n_states
            } else {
                0.0
            };
            model.add_constraint(e, Cmp::Ge, rhs, TAG_MASTER_FLOW);
        }
    }

    let gated = spec.agents.gated_agents();
    for &r in &gated {
        let s0 = spec.agents.initial[r];
        for t in 0..=spec.horizon {
            // z_{r,s0,t} + sum_{tau<t} F^m_{s0,tau} >= 1
            let mut e = LinExpr::new();
            e.add(z(model, r, s0, t), 1.0);
            for tau in 0..t {
                e.terms.extend(net_inflow(spec, model, m, s0, tau).terms);
            }
            model.add_constraint(e, Cmp::Ge, 1.0, TAG_MASTER_STATIC);
        }
    }
    let mut gated_states: Vec<StateId> = gated.iter().map(|&r| spec.agents.initial[r]).collect();
    gated_states.sort_unstable();
    gated_states.dedup();
    for &s0 in &gated_states {
        for b in all_flow_ids(spec) {
            for t in 0..=spec.horizon {
                // N * sum_{tau<=t} F^m_{s0,tau} - sum_j fbar^b_{s0,j,t} >= 0
                let mut e = LinExpr::new();
                for tau in 0..=t {
                    for (v, c) in net_inflow(spec, model, m, s0, tau).terms {
                        e.add(v, big_m * c);
                    }
                }
                for &edge in net.comm_out(s0) {
                    e.add(model.var(VarKey::Fbar { b, edge, t }), -1.0);
                }
                model.add_constraint(e, Cmp::Ge, 0.0, TAG_MASTER_COMM);
            }
        }
    }
    Ok(())
}

/// Static agents, collision avoidance, awareness-gated rewards and the
/// return-to-base requirement, each according to its flag.
pub fn build_extensions<W: Scalar>(spec: &ProblemSpec<W>, model: &mut MilpModel) -> Result<(), ProblemError> {
    let net = &spec.net;
    let horizon = spec.horizon;
    for &r in &spec.agents.static_agents {
        let s0 = spec.agents.initial[r];
        for t in 0..=horizon {
            for s in net.states() {
                let mut e = LinExpr::new();
                e.add(z(model, r, s, t), 1.0);
                model.add_constraint(e, Cmp::Eq, if s == s0 { 1.0 } else { 0.0 }, TAG_STATIC);
            }
        }
    }

    for (i, j) in spec.collision_pairs() {
        for t in 0..horizon {
            for (edge, me) in net.mobility_edges().iter().enumerate() {
                if me.is_loop() {
                    continue;
                }
                if let Some(rev) = net.mobility_edge(me.to, me.from) {
                    let mut e = LinExpr::new();
                    e.add(x(model, i, edge, t), 1.0);
                    e.add(x(model, j, rev, t), 1.0);
                    model.add_constraint(e, Cmp::Le, 1.0, TAG_COLLISION_MOVE);
                }
            }
        }
        for t in 0..=horizon {
            for s in net.states() {
                let mut e = LinExpr::new();
                e.add(z(model, i, s, t), 1.0);
                e.add(z(model, j, s, t), 1.0);
                model.add_constraint(e, Cmp::Le, 1.0, TAG_COLLISION_POS);
            }
        }
    }

    if spec.extensions.awareness_reward {
        if !spec.extensions.information_consistent {
            return Err(ProblemError::Config(
                "awareness_reward requires information_consistent".into(),
            ));
        }
        let master_starts = spec.agents.master_starts();
        for (&(s, k), v) in &spec.rewards {
            if v.is_zero() || master_starts.contains(&s) {
                continue;
            }
            let mut e = LinExpr::new();
            e.add(model.var(VarKey::Y { s, k }), 1.0);
            for tau in 0..=horizon {
                for (var, c) in net_inflow(spec, model, FlowId::Master, s, tau).terms {
                    e.add(var, -c);
                }
            }
            model.add_constraint(e, Cmp::Le, 0.0, TAG_AWARENESS);
        }
    }

    if spec.extensions.return_to_base {
        let region = spec.static_master_region();
        if region.is_empty() {
            return Err(ProblemError::Config(
                "return_to_base requires a static master".into(),
            ));
        }
        let mut e = LinExpr::new();
        for r in spec.agents.dynamic_agents() {
            for &s in &region {
                e.add(z(model, r, s, horizon), 1.0);
            }
        }
        if e.terms.is_empty() {
            return Err(ProblemError::Config(
                "return_to_base requires a dynamic agent".into(),
            ));
        }
        model.add_constraint(e, Cmp::Ge, 1.0, TAG_RETURN);
    }
    Ok(())
}

/// Full model for `spec` (Problem 1, or Problem 2 when information
/// consistency is requested).
pub fn assemble<W: Scalar>(spec: &ProblemSpec<W>) -> Result<MilpModel, ProblemError> {
    spec.validate()?;
    let mut model = MilpModel::new();
    build_dynamics(spec, &mut model);
    build_flow(spec, &mut model);
    build_bridge(spec, &mut model);
    build_reward_link(spec, &mut model);
    build_objective(spec, &mut model);
    if spec.extensions.information_consistent {
        build_master(spec, &mut model)?;
    }
    build_extensions(spec, &mut model)?;
    Ok(model)
}

/// Values that every constraint family count should equal, derived from the
/// instance dimensions alone.
pub fn expected_counts<W: Scalar>(spec: &ProblemSpec<W>) -> Vec<(&'static str, usize)> {
    let r = spec.num_agents();
    let n = spec.net.num_states();
    let t = spec.horizon;
    let ids = spec.flow_ids().len();
    let all_ids = all_flow_ids(spec).len();
    let comm = spec.net.comm_edges().len();
    let mob = spec.net.mobility_edges().len();
    vec![
        (TAG_DYN_IN, r * n * t),
        (TAG_DYN_OUT, r * n * t),
        (TAG_INITIAL, r * n),
        (TAG_FLOW, ids * n * (t + 1)),
        (TAG_BRIDGE, all_ids * (2 * comm * (t + 1) + mob * t)),
    ]
}
