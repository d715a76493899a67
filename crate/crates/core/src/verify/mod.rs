//! Solver-free checks of plans: motion feasibility, information
//! reachability, information consistency, flow decomposition, and an
//! exhaustive oracle for tiny instances.
//!
//! Information spreads per time layer: within a layer, data held at an
//! occupied state is shared by every agent there and can cross a
//! communication edge to another occupied state (repeatedly, until nothing
//! changes); between layers it rides with the agents that hold it.

mod corpus;
mod decompose;
mod oracle;
mod simplex;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ilp::FlowId;
use crate::network::{MobilityCommNetwork, StateId, TimeVertex};
use crate::problem::ProblemSpec;
use crate::scalar::Scalar;

pub use corpus::{random_instance, ProblemClass};
pub use decompose::{decompose_flows, DecomposeError, Decomposition, InfoPath};
pub use oracle::{brute_force_solve, OracleError, OracleOutcome, OracleStats, ORACLE_GUARD};
pub use simplex::{LinearProgram, LpOutcome};

/// Flow amounts at or below this are treated as absent.
pub const FLOW_EPS: f64 = 1e-6;

/// A unit of flow `flow` sent over `from -> to` at step `t` (within layer
/// `t` for communication, from layer `t` to `t + 1` for mobility).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowEvent {
    pub t: usize,
    pub from: StateId,
    pub to: StateId,
    pub flow: FlowId,
    pub amount: f64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct PlanSolution {
    /// One state sequence of length `T + 1` per agent.
    pub paths: Vec<Vec<StateId>>,
    pub comm_events: Vec<FlowEvent>,
    pub flow_moves: Vec<FlowEvent>,
    pub objective: f64,
    pub reward_flags: BTreeMap<(StateId, usize), bool>,
}

impl PlanSolution {
    pub fn horizon(&self) -> usize {
        self.paths.first().map_or(0, |p| p.len().saturating_sub(1))
    }

    /// Plan in which every agent holds position.
    pub fn stationary(initial: &[StateId], horizon: usize) -> Self {
        PlanSolution {
            paths: initial.iter().map(|&s| vec![s; horizon + 1]).collect(),
            ..Default::default()
        }
    }

    pub fn final_positions(&self) -> Vec<StateId> {
        self.paths
            .iter()
            .map(|p| *p.last().expect("non-empty path"))
            .collect()
    }

    /// Agents per state per layer.
    fn occupancy(&self, num_states: usize) -> Vec<Vec<usize>> {
        let horizon = self.horizon();
        let mut occ = vec![vec![0; num_states]; horizon + 1];
        for path in &self.paths {
            for (t, s) in path.iter().enumerate() {
                occ[t][s.0] += 1;
            }
        }
        occ
    }

    pub fn to_doc<W: Scalar>(&self, net: &MobilityCommNetwork<W>) -> SolutionDoc {
        let event = |e: &FlowEvent| EventDoc {
            t: e.t,
            from: net.name(e.from).to_string(),
            to: net.name(e.to).to_string(),
            flow: e.flow.to_string(),
            amount: e.amount,
        };
        SolutionDoc {
            paths: self
                .paths
                .iter()
                .map(|p| p.iter().map(|&s| net.name(s).to_string()).collect())
                .collect(),
            comm_events: self.comm_events.iter().map(event).collect(),
            flow_moves: self.flow_moves.iter().map(event).collect(),
            objective: self.objective,
            reward_flags: self
                .reward_flags
                .iter()
                .map(|(&(s, k), &v)| RewardFlagDoc {
                    state: net.name(s).to_string(),
                    k,
                    collected: v,
                })
                .collect(),
        }
    }

    pub fn from_doc<W: Scalar>(
        doc: &SolutionDoc,
        net: &MobilityCommNetwork<W>,
    ) -> Result<Self, crate::network::NetworkError> {
        let flow = |f: &str| -> Result<FlowId, crate::network::NetworkError> {
            if f == "m" {
                Ok(FlowId::Master)
            } else {
                f.parse()
                    .map(FlowId::Agent)
                    .map_err(|_| crate::network::NetworkError::Parse(format!("bad flow id `{f}`")))
            }
        };
        let event = |e: &EventDoc| -> Result<FlowEvent, crate::network::NetworkError> {
            Ok(FlowEvent {
                t: e.t,
                from: net.state_id(&e.from)?,
                to: net.state_id(&e.to)?,
                flow: flow(&e.flow)?,
                amount: e.amount,
            })
        };
        Ok(PlanSolution {
            paths: doc
                .paths
                .iter()
                .map(|p| p.iter().map(|n| net.state_id(n)).collect())
                .collect::<Result<_, _>>()?,
            comm_events: doc.comm_events.iter().map(event).collect::<Result<_, _>>()?,
            flow_moves: doc.flow_moves.iter().map(event).collect::<Result<_, _>>()?,
            objective: doc.objective,
            reward_flags: doc
                .reward_flags
                .iter()
                .map(|r| Ok(((net.state_id(&r.state)?, r.k), r.collected)))
                .collect::<Result<_, crate::network::NetworkError>>()?,
        })
    }
}

/// JSON form of a [`PlanSolution`], with states by name and flow ids as
/// agent numbers or `"m"` for the master flow.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionDoc {
    pub paths: Vec<Vec<String>>,
    #[serde(default)]
    pub comm_events: Vec<EventDoc>,
    #[serde(default)]
    pub flow_moves: Vec<EventDoc>,
    pub objective: f64,
    #[serde(default)]
    pub reward_flags: Vec<RewardFlagDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventDoc {
    pub t: usize,
    pub from: String,
    pub to: String,
    pub flow: String,
    pub amount: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardFlagDoc {
    pub state: String,
    pub k: usize,
    pub collected: bool,
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum Violation {
    #[error("expected {expected} paths, found {found}")]
    AgentCount { expected: usize, found: usize },
    #[error("agent {agent}: path has {found} states, expected {expected}")]
    Length {
        agent: usize,
        expected: usize,
        found: usize,
    },
    #[error("agent {agent}: starts at {found}, expected {expected}")]
    WrongStart {
        agent: usize,
        expected: StateId,
        found: StateId,
    },
    #[error("agent {agent}: step {t} uses {from} -> {to}, which is not a mobility edge")]
    NotAnEdge {
        agent: usize,
        t: usize,
        from: StateId,
        to: StateId,
    },
    #[error("static agent {agent} moves at step {t}")]
    StaticMoved { agent: usize, t: usize },
    #[error("agents {a} and {b} collide at step {t}")]
    Collision { a: usize, b: usize, t: usize },
    #[error("comm event {from} -> {to} at {t} is not usable: {reason}")]
    BadCommEvent {
        t: usize,
        from: StateId,
        to: StateId,
        reason: &'static str,
    },
    #[error("flow move {from} -> {to} at {t} is not usable: {reason}")]
    BadFlowMove {
        t: usize,
        from: StateId,
        to: StateId,
        reason: &'static str,
    },
    #[error("information from agent {from} does not reach agent {to}")]
    Unreachable { from: usize, to: usize },
    #[error("agent {agent} leaves its start at step {t} before holding the plan")]
    MovedBeforePlan { agent: usize, t: usize },
    #[error("state {state} transmits at step {t} before holding the plan")]
    TransmittedBeforePlan { state: StateId, t: usize },
    #[error("reward at {state} collected without the plan reaching it")]
    UnawareReward { state: StateId },
    #[error("no dynamic agent ends within reach of a static master")]
    NoReturnToBase,
}

/// Paths have the right count and length, start where the spec says, and
/// follow mobility edges.
pub fn check_dynamics<W: Scalar>(sol: &PlanSolution, spec: &ProblemSpec<W>) -> Result<(), Violation> {
    let r = spec.num_agents();
    if sol.paths.len() != r {
        return Err(Violation::AgentCount {
            expected: r,
            found: sol.paths.len(),
        });
    }
    for (agent, path) in sol.paths.iter().enumerate() {
        if path.len() != spec.horizon + 1 {
            return Err(Violation::Length {
                agent,
                expected: spec.horizon + 1,
                found: path.len(),
            });
        }
        let expected = spec.agents.initial[agent];
        if path[0] != expected {
            return Err(Violation::WrongStart {
                agent,
                expected,
                found: path[0],
            });
        }
        for (t, w) in path.windows(2).enumerate() {
            if !spec.net.contains(w[1]) || !spec.net.has_mobility(w[0], w[1]) {
                return Err(Violation::NotAnEdge {
                    agent,
                    t,
                    from: w[0],
                    to: w[1],
                });
            }
        }
    }
    Ok(())
}

/// Static agents never move; collision pairs never share a state or swap
/// along an edge; return-to-base holds when requested.
pub fn check_extensions<W: Scalar>(sol: &PlanSolution, spec: &ProblemSpec<W>) -> Result<(), Violation> {
    for &agent in &spec.agents.static_agents {
        let s0 = spec.agents.initial[agent];
        if let Some(t) = sol.paths[agent].iter().position(|&s| s != s0) {
            return Err(Violation::StaticMoved { agent, t });
        }
    }
    for (a, b) in spec.collision_pairs() {
        let (pa, pb) = (&sol.paths[a], &sol.paths[b]);
        for t in 0..pa.len() {
            if pa[t] == pb[t] {
                return Err(Violation::Collision { a, b, t });
            }
            if t + 1 < pa.len() && pa[t] != pa[t + 1] && pa[t] == pb[t + 1] && pa[t + 1] == pb[t] {
                return Err(Violation::Collision { a, b, t });
            }
        }
    }
    if spec.extensions.return_to_base {
        let region = spec.static_master_region();
        let ok = spec
            .agents
            .dynamic_agents()
            .any(|r| region.contains(sol.paths[r].last().expect("non-empty path")));
        if !ok {
            return Err(Violation::NoReturnToBase);
        }
    }
    Ok(())
}

/// Communication events lie on `⇝` between occupied states; flow moves lie
/// on `→` edges some agent traverses at that step; amounts are
/// non-negative.
pub fn check_events<W: Scalar>(sol: &PlanSolution, net: &MobilityCommNetwork<W>) -> Result<(), Violation> {
    let occ = sol.occupancy(net.num_states());
    let horizon = sol.horizon();
    for e in &sol.comm_events {
        let bad = |reason| Violation::BadCommEvent {
            t: e.t,
            from: e.from,
            to: e.to,
            reason,
        };
        if e.amount < -FLOW_EPS {
            return Err(bad("negative amount"));
        }
        if e.t > horizon || !net.contains(e.from) || !net.contains(e.to) {
            return Err(bad("out of range"));
        }
        if !net.has_comm(e.from, e.to) {
            return Err(bad("not a communication edge"));
        }
        if e.amount > FLOW_EPS && (occ[e.t][e.from.0] == 0 || occ[e.t][e.to.0] == 0) {
            return Err(bad("endpoint unoccupied"));
        }
    }
    for e in &sol.flow_moves {
        let bad = |reason| Violation::BadFlowMove {
            t: e.t,
            from: e.from,
            to: e.to,
            reason,
        };
        if e.amount < -FLOW_EPS {
            return Err(bad("negative amount"));
        }
        if e.t >= horizon || !net.contains(e.from) || !net.contains(e.to) {
            return Err(bad("out of range"));
        }
        if !net.has_mobility(e.from, e.to) {
            return Err(bad("not a mobility edge"));
        }
        let carried = sol.paths.iter().any(|p| p[e.t] == e.from && p[e.t + 1] == e.to);
        if e.amount > FLOW_EPS && !carried {
            return Err(bad("no agent traverses it"));
        }
    }
    Ok(())
}

/// Which communication edges may carry information.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Links<'a> {
    /// Only `(t, from, to)` links with a positive event in the list.
    Events(&'a [FlowEvent]),
    /// Every `⇝` edge between occupied states.
    Admissible,
}

/// How a state came to hold information in a layer.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Pred {
    Origin,
    Comm(StateId),
    Carry(StateId),
}

/// Token holdings per layer and state, with predecessor pointers.
struct Spread {
    holds: Vec<Vec<Option<Pred>>>,
}

impl Spread {
    fn has(&self, t: usize, s: StateId) -> bool {
        self.holds[t][s.0].is_some()
    }

    fn witness(&self, t: usize, s: StateId) -> Vec<TimeVertex> {
        let mut out = vec![TimeVertex::new(s, t)];
        let (mut t, mut s) = (t, s);
        while let Some(p) = self.holds[t][s.0] {
            match p {
                Pred::Origin => break,
                Pred::Comm(from) => s = from,
                Pred::Carry(from) => {
                    s = from;
                    t -= 1;
                }
            }
            out.push(TimeVertex::new(s, t));
        }
        out.reverse();
        out
    }
}

struct SpreadInput<'a, W> {
    sol: &'a PlanSolution,
    net: &'a MobilityCommNetwork<W>,
    links: Links<'a>,
    /// Layered master holdings; a state may transmit only while it holds the
    /// plan.
    gate: Option<&'a Spread>,
}

fn spread<W: Scalar>(input: &SpreadInput<'_, W>, origins: &[StateId]) -> Spread {
    let SpreadInput {
        sol,
        net,
        links,
        gate,
    } = *input;
    let n = net.num_states();
    let horizon = sol.horizon();
    let occ = sol.occupancy(n);
    let used: BTreeSet<(usize, StateId, StateId)> = match links {
        Links::Events(events) => events
            .iter()
            .filter(|e| e.amount > FLOW_EPS)
            .map(|e| (e.t, e.from, e.to))
            .collect(),
        Links::Admissible => BTreeSet::new(),
    };
    let usable = |t: usize, from: StateId, to: StateId| -> bool {
        occ[t][from.0] > 0
            && occ[t][to.0] > 0
            && gate.is_none_or(|g| g.has(t, from))
            && match links {
                Links::Events(_) => used.contains(&(t, from, to)),
                Links::Admissible => true,
            }
    };

    let mut holds = vec![vec![None; n]; horizon + 1];
    for t in 0..=horizon {
        let mut queue = VecDeque::new();
        if t == 0 {
            for &s in origins {
                if holds[0][s.0].is_none() {
                    holds[0][s.0] = Some(Pred::Origin);
                    queue.push_back(s);
                }
            }
        } else {
            for path in &sol.paths {
                let (from, to) = (path[t - 1], path[t]);
                if holds[t - 1][from.0].is_some() && holds[t][to.0].is_none() {
                    holds[t][to.0] = Some(Pred::Carry(from));
                    queue.push_back(to);
                }
            }
        }
        while let Some(s) = queue.pop_front() {
            for &ei in net.comm_out(s) {
                let to = net.comm_edges()[ei].to;
                if holds[t][to.0].is_none() && usable(t, s, to) {
                    holds[t][to.0] = Some(Pred::Comm(s));
                    queue.push_back(to);
                }
            }
        }
    }
    Spread { holds }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReachabilityReport {
    /// `pairs[i][j]`: information from agent `i` reaches agent `j`.
    pub pairs: Vec<Vec<bool>>,
    /// Information path per reachable pair: time-extended vertices from
    /// `(s0(i), 0)` to `(s_T(j), T)`.
    pub witness: BTreeMap<(usize, usize), Vec<TimeVertex>>,
}

impl ReachabilityReport {
    pub fn reachable(&self, i: usize, j: usize) -> bool {
        self.pairs[i][j]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReachOptions<'a> {
    pub links: Links<'a>,
    /// Master starts; when set, a state may only transmit once the plan
    /// has reached it in that layer.
    pub gated_by: Option<&'a BTreeSet<StateId>>,
}

/// Reachability over the plan's own communication events, ungated.
pub fn information_reachability<W: Scalar>(
    sol: &PlanSolution,
    net: &MobilityCommNetwork<W>,
) -> ReachabilityReport {
    reachability_with(
        sol,
        net,
        ReachOptions {
            links: Links::Events(&sol.comm_events),
            gated_by: None,
        },
    )
}

/// `holds[t][s]`: information from `origin` at step 0 is at `s` in layer
/// `t`, over the plan's own events, ungated.
pub fn information_holdings<W: Scalar>(
    sol: &PlanSolution,
    net: &MobilityCommNetwork<W>,
    origin: StateId,
) -> Vec<Vec<bool>> {
    let sp = spread(
        &SpreadInput {
            sol,
            net,
            links: Links::Events(&sol.comm_events),
            gate: None,
        },
        &[origin],
    );
    sp.holds
        .iter()
        .map(|layer| layer.iter().map(Option::is_some).collect())
        .collect()
}

pub fn reachability_with<W: Scalar>(
    sol: &PlanSolution,
    net: &MobilityCommNetwork<W>,
    opts: ReachOptions<'_>,
) -> ReachabilityReport {
    let r = sol.paths.len();
    let horizon = sol.horizon();
    let master = opts.gated_by.map(|starts| {
        let origins: Vec<StateId> = starts.iter().copied().collect();
        spread(
            &SpreadInput {
                sol,
                net,
                links: opts.links,
                gate: None,
            },
            &origins,
        )
    });
    let input = SpreadInput {
        sol,
        net,
        links: opts.links,
        gate: master.as_ref(),
    };
    let mut pairs = vec![vec![false; r]; r];
    let mut witness = BTreeMap::new();
    for i in 0..r {
        let sp = spread(&input, &[sol.paths[i][0]]);
        for j in 0..r {
            let end = sol.paths[j][horizon];
            if sp.has(horizon, end) {
                pairs[i][j] = true;
                witness.insert((i, j), sp.witness(horizon, end));
            }
        }
    }
    ReachabilityReport { pairs, witness }
}

/// Reachability as the spec requires it: over the plan's events, gated by
/// the master plan when information consistency is on.
pub fn plan_reachability<W: Scalar>(sol: &PlanSolution, spec: &ProblemSpec<W>) -> ReachabilityReport {
    let starts = spec.agents.master_starts();
    reachability_with(
        sol,
        &spec.net,
        ReachOptions {
            links: Links::Events(&sol.comm_events),
            gated_by: spec.extensions.information_consistent.then_some(&starts),
        },
    )
}

/// Every `src -> snk` pair is reachable in `report`.
pub fn check_requirements<W: Scalar>(
    report: &ReachabilityReport,
    spec: &ProblemSpec<W>,
) -> Result<(), Violation> {
    if spec.src.is_empty() || spec.snk.is_empty() {
        return Ok(());
    }
    for &i in &spec.src {
        for &j in &spec.snk {
            if !report.reachable(i, j) {
                return Err(Violation::Unreachable { from: i, to: j });
            }
        }
    }
    Ok(())
}

/// Layered master-plan holdings for `spec` under `links`.
fn master_spread<'a, W: Scalar>(sol: &'a PlanSolution, spec: &'a ProblemSpec<W>, links: Links<'a>) -> Spread {
    let origins: Vec<StateId> = spec.agents.master_starts().into_iter().collect();
    spread(
        &SpreadInput {
            sol,
            net: &spec.net,
            links,
            gate: None,
        },
        &origins,
    )
}

/// Information consistency over the plan's own events.
pub fn check_consistency<W: Scalar>(sol: &PlanSolution, spec: &ProblemSpec<W>) -> Result<(), Violation> {
    check_consistency_with(sol, spec, Links::Events(&sol.comm_events))
}

/// Agents leave their start, and states transmit, only once the master
/// plan is held there (arrival earlier in the same layer counts). Rewards
/// flagged as collected under awareness need the plan to have reached the
/// state.
pub fn check_consistency_with<W: Scalar>(
    sol: &PlanSolution,
    spec: &ProblemSpec<W>,
    links: Links<'_>,
) -> Result<(), Violation> {
    let master = master_spread(sol, spec, links);
    let horizon = sol.horizon();
    for (agent, path) in sol.paths.iter().enumerate() {
        let s0 = path[0];
        for t in 0..horizon {
            if path[t] == s0 && path[t + 1] != s0 && !master.has(t, s0) {
                return Err(Violation::MovedBeforePlan { agent, t });
            }
        }
    }
    for e in sol.comm_events.iter().filter(|e| e.amount > FLOW_EPS) {
        if !master.has(e.t, e.from) {
            return Err(Violation::TransmittedBeforePlan {
                state: e.from,
                t: e.t,
            });
        }
    }
    if spec.extensions.awareness_reward {
        let starts = spec.agents.master_starts();
        for (&(s, _), &collected) in &sol.reward_flags {
            if collected && !starts.contains(&s) && !(0..=horizon).any(|t| master.has(t, s)) {
                return Err(Violation::UnawareReward { state: s });
            }
        }
    }
    Ok(())
}

/// States the master plan reaches at any layer.
pub fn plan_aware_states<W: Scalar>(
    sol: &PlanSolution,
    spec: &ProblemSpec<W>,
    links: Links<'_>,
) -> BTreeSet<StateId> {
    let master = master_spread(sol, spec, links);
    spec.net
        .states()
        .filter(|&s| (0..=sol.horizon()).any(|t| master.has(t, s)))
        .collect()
}

/// Runs every check appropriate for `spec` on a solver or oracle plan.
pub fn verify_plan<W: Scalar>(sol: &PlanSolution, spec: &ProblemSpec<W>) -> Result<(), Violation> {
    check_dynamics(sol, spec)?;
    check_extensions(sol, spec)?;
    check_events(sol, &spec.net)?;
    check_requirements(&plan_reachability(sol, spec), spec)?;
    if spec.extensions.information_consistent {
        check_consistency(sol, spec)?;
    }
    Ok(())
}

impl fmt::Display for ReachabilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in &self.pairs {
            let line: String = row.iter().map(|&b| if b { '1' } else { '.' }).collect();
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}
