//! Exhaustive optimum for tiny instances: every joint mobility plan is
//! checked with the token-spread checkers, and the communication cost of a
//! feasible plan is priced exactly (shortest paths without a master, a small
//! LP with one).

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::simplex::{LinearProgram, LpOutcome};
use super::{
    check_consistency_with, check_extensions, check_requirements, reachability_with, FlowEvent, Links,
    PlanSolution, ReachOptions, FLOW_EPS,
};
use crate::ilp::{all_flow_ids, Cmp, FlowId};
use crate::network::StateId;
use crate::problem::{FlowOrientation, ProblemError, ProblemSpec};
use crate::scalar::Scalar;

/// Upper limit on `Π_r (max out-degree)^T` (static agents count once).
pub const ORACLE_GUARD: f64 = 1e6;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct OracleStats {
    /// Joint mobility plans enumerated.
    pub joint_plans: usize,
    /// Plans examined before the bound cut the search off.
    pub examined: usize,
    /// Plans that passed every check and could be priced.
    pub feasible: usize,
    /// Plans that passed the checkers but whose flow LP was infeasible.
    pub disagreements: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum OracleOutcome {
    Optimal {
        objective: f64,
        plan: PlanSolution,
        stats: OracleStats,
    },
    Infeasible {
        stats: OracleStats,
    },
}

impl OracleOutcome {
    pub fn objective(&self) -> Option<f64> {
        match self {
            OracleOutcome::Optimal { objective, .. } => Some(*objective),
            OracleOutcome::Infeasible { .. } => None,
        }
    }

    pub fn plan(&self) -> Option<&PlanSolution> {
        match self {
            OracleOutcome::Optimal { plan, .. } => Some(plan),
            OracleOutcome::Infeasible { .. } => None,
        }
    }

    pub fn stats(&self) -> &OracleStats {
        match self {
            OracleOutcome::Optimal { stats, .. } | OracleOutcome::Infeasible { stats } => stats,
        }
    }
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("instance too large for enumeration ({0:.0} joint plans, limit {ORACLE_GUARD})")]
    TooLarge(f64),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

struct Walk {
    states: Vec<StateId>,
    cost: f64,
}

fn walks<W: Scalar>(spec: &ProblemSpec<W>, r: usize) -> Vec<Walk> {
    let net = &spec.net;
    let s0 = spec.agents.initial[r];
    let pinned = spec.agents.is_static(r);
    let mut out = Vec::new();
    let mut stack = vec![(vec![s0], 0.0)];
    while let Some((states, cost)) = stack.pop() {
        let t = states.len() - 1;
        if t == spec.horizon {
            out.push(Walk { states, cost });
            continue;
        }
        let cur = states[t];
        // reversed so the pop order follows edge order
        for &ei in net.mobility_out(cur).iter().rev() {
            let e = &net.mobility_edges()[ei];
            if pinned && e.to != s0 {
                continue;
            }
            let mut next = states.clone();
            next.push(e.to);
            stack.push((next, cost + e.weight.at(t).as_f64()));
        }
    }
    out
}

/// Enumerated optimum of the spec's objective. Deterministic: ties keep the
/// first plan in (bound, enumeration) order.
pub fn brute_force_solve<W: Scalar>(spec: &ProblemSpec<W>) -> Result<OracleOutcome, OracleError> {
    spec.validate()?;
    let r_count = spec.num_agents();
    let deg = spec.net.max_mobility_out_degree() as f64;
    let guard: f64 = (0..r_count)
        .map(|r| {
            if spec.agents.is_static(r) {
                1.0
            } else {
                deg.powi(spec.horizon as i32)
            }
        })
        .product();
    if guard > ORACLE_GUARD {
        return Err(OracleError::TooLarge(guard));
    }

    let per_agent: Vec<Vec<Walk>> = (0..r_count).map(|r| walks(spec, r)).collect();
    let mut stats = OracleStats::default();
    if per_agent.iter().any(Vec::is_empty) {
        return Ok(OracleOutcome::Infeasible { stats });
    }
    let total: usize = per_agent.iter().map(Vec::len).product();
    stats.joint_plans = total;

    let decode = |mut idx: usize| -> Vec<usize> {
        per_agent
            .iter()
            .map(|w| {
                let i = idx % w.len();
                idx /= w.len();
                i
            })
            .collect()
    };
    let mut ranked: Vec<(f64, usize)> = (0..total)
        .map(|idx| {
            let choice = decode(idx);
            let paths: Vec<&[StateId]> = choice
                .iter()
                .zip(&per_agent)
                .map(|(&c, w)| w[c].states.as_slice())
                .collect();
            let mobility: f64 = choice.iter().zip(&per_agent).map(|(&c, w)| w[c].cost).sum();
            (terminal_reward(spec, &paths).total - mobility, idx)
        })
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let master_starts = spec.agents.master_starts();
    let consistent = spec.extensions.information_consistent;
    let mut best: Option<(f64, PlanSolution)> = None;
    for (bound, idx) in ranked {
        if best.as_ref().is_some_and(|(b, _)| bound <= *b + 1e-9) {
            break;
        }
        stats.examined += 1;
        let choice = decode(idx);
        let sol = PlanSolution {
            paths: choice
                .iter()
                .zip(&per_agent)
                .map(|(&c, w)| w[c].states.clone())
                .collect(),
            ..Default::default()
        };
        let mobility: f64 = choice.iter().zip(&per_agent).map(|(&c, w)| w[c].cost).sum();
        if check_extensions(&sol, spec).is_err() {
            continue;
        }
        let report = reachability_with(
            &sol,
            &spec.net,
            ReachOptions {
                links: Links::Admissible,
                gated_by: consistent.then_some(&master_starts),
            },
        );
        if check_requirements(&report, spec).is_err() {
            continue;
        }
        if consistent && check_consistency_with(&sol, spec, Links::Admissible).is_err() {
            continue;
        }

        let reward = {
            let refs: Vec<&[StateId]> = sol.paths.iter().map(Vec::as_slice).collect();
            terminal_reward(spec, &refs)
        };
        let priced = if consistent {
            best_aware_pricing(spec, &sol.paths, &reward, mobility, best.as_ref().map(|b| b.0))
        } else {
            shortest_path_pricing(spec, &sol.paths).map(|p| (p, BTreeSet::new()))
        };
        let Some((pricing, aware)) = priced else {
            // an aware subset search that found nothing better is not a
            // disagreement; only an LP failure on the empty subset is
            if !consistent || flow_lp_pricing(spec, &sol.paths, &BTreeSet::new()).is_none() {
                stats.disagreements += 1;
            }
            continue;
        };
        stats.feasible += 1;
        let collected = reward.collected_with(&aware);
        let objective = collected - mobility - pricing.cost;
        if best.as_ref().is_none_or(|(b, _)| objective > *b + 1e-9) {
            let refs: Vec<&[StateId]> = sol.paths.iter().map(Vec::as_slice).collect();
            let flags = reward_flags(spec, &refs, &aware);
            let mut plan = sol;
            plan.comm_events = pricing.comm_events;
            plan.flow_moves = pricing.flow_moves;
            plan.objective = objective;
            plan.reward_flags = flags;
            best = Some((objective, plan));
        }
    }
    Ok(match best {
        Some((objective, plan)) => OracleOutcome::Optimal {
            objective,
            plan,
            stats,
        },
        None => OracleOutcome::Infeasible { stats },
    })
}

/// Terminal rewards of a joint plan, split into the part that needs master
/// awareness and the part that does not.
struct TerminalReward {
    total: f64,
    free: f64,
    /// Awareness-gated value per state.
    gated: BTreeMap<StateId, f64>,
}

impl TerminalReward {
    fn collected_with(&self, aware: &BTreeSet<StateId>) -> f64 {
        self.free + aware.iter().filter_map(|s| self.gated.get(s)).sum::<f64>()
    }
}

fn capable_counts<W: Scalar>(spec: &ProblemSpec<W>, paths: &[&[StateId]]) -> BTreeMap<StateId, usize> {
    let mut counts = BTreeMap::new();
    for (r, p) in paths.iter().enumerate() {
        if spec.agents.can_collect(r) {
            *counts.entry(*p.last().expect("non-empty path")).or_default() += 1;
        }
    }
    counts
}

fn needs_awareness<W: Scalar>(spec: &ProblemSpec<W>, s: StateId) -> bool {
    spec.extensions.awareness_reward && !spec.agents.master_starts().contains(&s)
}

fn terminal_reward<W: Scalar>(spec: &ProblemSpec<W>, paths: &[&[StateId]]) -> TerminalReward {
    let mut out = TerminalReward {
        total: 0.0,
        free: 0.0,
        gated: BTreeMap::new(),
    };
    for (s, count) in capable_counts(spec, paths) {
        let v = spec.reward_for(s, count).as_f64();
        if v <= 0.0 {
            continue;
        }
        out.total += v;
        if needs_awareness(spec, s) {
            out.gated.insert(s, v);
        } else {
            out.free += v;
        }
    }
    out
}

fn reward_flags<W: Scalar>(
    spec: &ProblemSpec<W>,
    paths: &[&[StateId]],
    aware: &BTreeSet<StateId>,
) -> BTreeMap<(StateId, usize), bool> {
    let counts = capable_counts(spec, paths);
    spec.rewards
        .iter()
        .filter(|(_, v)| !v.is_zero())
        .map(|(&(s, k), v)| {
            let here = counts.get(&s).copied().unwrap_or(0);
            let ok = v.as_f64() > 0.0 && here >= k && (!needs_awareness(spec, s) || aware.contains(&s));
            ((s, k), ok)
        })
        .collect()
}

/// Cheapest flow routing for fixed paths.
#[derive(Clone, Debug, Default, PartialEq)]
pub(crate) struct Pricing {
    pub cost: f64,
    pub comm_events: Vec<FlowEvent>,
    pub flow_moves: Vec<FlowEvent>,
}

/// Unit demands `(flow, source state, sink state)` of the data flows.
fn demands<W: Scalar>(spec: &ProblemSpec<W>, paths: &[Vec<StateId>]) -> Vec<(FlowId, StateId, StateId)> {
    let horizon = spec.horizon;
    let mut out = Vec::new();
    for b in spec.flow_ids() {
        match spec.resolved_orientation() {
            FlowOrientation::ManyToOne => {
                for &i in &spec.src {
                    out.push((FlowId::Agent(b), paths[i][0], paths[b][horizon]));
                }
            }
            _ => {
                for &j in &spec.snk {
                    out.push((FlowId::Agent(b), paths[b][0], paths[j][horizon]));
                }
            }
        }
    }
    out
}

fn occupancy(n: usize, paths: &[Vec<StateId>]) -> Vec<Vec<usize>> {
    let horizon = paths[0].len() - 1;
    let mut occ = vec![vec![0; n]; horizon + 1];
    for p in paths {
        for (t, s) in p.iter().enumerate() {
            occ[t][s.0] += 1;
        }
    }
    occ
}

fn push_event(
    events: &mut BTreeMap<(usize, StateId, StateId, FlowId), f64>,
    key: (usize, StateId, StateId, FlowId),
    amount: f64,
) {
    *events.entry(key).or_default() += amount;
}

fn to_events(events: BTreeMap<(usize, StateId, StateId, FlowId), f64>) -> Vec<FlowEvent> {
    events
        .into_iter()
        .filter(|(_, a)| *a > FLOW_EPS)
        .map(|((t, from, to, flow), amount)| FlowEvent {
            t,
            from,
            to,
            flow,
            amount,
        })
        .collect()
}

/// Problem-1 pricing: with capacities that never bind, each unit of demand
/// takes a shortest path through the admissible time-extended graph.
pub(crate) fn shortest_path_pricing<W: Scalar>(
    spec: &ProblemSpec<W>,
    paths: &[Vec<StateId>],
) -> Option<Pricing> {
    let net = &spec.net;
    let n = net.num_states();
    let horizon = spec.horizon;
    let occ = occupancy(n, paths);
    let idx = |s: StateId, t: usize| t * n + s.0;
    let vcount = n * (horizon + 1);

    // arcs out of each time-extended vertex: (target, cost, is_comm)
    let mut out: Vec<Vec<(usize, f64, bool)>> = vec![Vec::new(); vcount];
    for t in 0..=horizon {
        for ce in net.comm_edges() {
            if ce.from != ce.to && occ[t][ce.from.0] > 0 && occ[t][ce.to.0] > 0 {
                let c = if t >= 1 { ce.weight.at(t).as_f64() } else { 0.0 };
                out[idx(ce.from, t)].push((idx(ce.to, t), c, true));
            }
        }
        if t < horizon {
            let mut seen = BTreeSet::new();
            for p in paths {
                if seen.insert((p[t], p[t + 1])) {
                    out[idx(p[t], t)].push((idx(p[t + 1], t + 1), 0.0, false));
                }
            }
        }
    }

    let mut cost = 0.0;
    let mut comm = BTreeMap::new();
    let mut moves = BTreeMap::new();
    let mut cache: BTreeMap<usize, (Vec<f64>, Vec<Option<usize>>)> = BTreeMap::new();
    for (flow, from, to) in demands(spec, paths) {
        let src = idx(from, 0);
        let (dist, pred) = cache.entry(src).or_insert_with(|| dijkstra(&out, src));
        let target = idx(to, horizon);
        if !dist[target].is_finite() {
            return None;
        }
        cost += dist[target];
        let mut v = target;
        while let Some(u) = pred[v] {
            let (su, tu) = (StateId(u % n), u / n);
            let (sv, tv) = (StateId(v % n), v / n);
            if tu == tv {
                push_event(&mut comm, (tu, su, sv, flow), 1.0);
            } else {
                push_event(&mut moves, (tu, su, sv, flow), 1.0);
            }
            v = u;
        }
    }
    Some(Pricing {
        cost,
        comm_events: to_events(comm),
        flow_moves: to_events(moves),
    })
}

fn dijkstra(out: &[Vec<(usize, f64, bool)>], src: usize) -> (Vec<f64>, Vec<Option<usize>>) {
    let n = out.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![None; n];
    let mut done = vec![false; n];
    dist[src] = 0.0;
    loop {
        let next = (0..n)
            .filter(|&v| !done[v] && dist[v].is_finite())
            .min_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
        let Some(u) = next else { break };
        done[u] = true;
        for &(v, c, _) in &out[u] {
            if dist[u] + c < dist[v] - 1e-12 {
                dist[v] = dist[u] + c;
                pred[v] = Some(u);
            }
        }
    }
    (dist, pred)
}

/// Exact pricing as an LP over the admissible arcs, mirroring the ILP's flow,
/// bridge, master and awareness rows for the fixed paths. `aware` lists the
/// states that must absorb a unit of master flow.
pub(crate) fn flow_lp_pricing<W: Scalar>(
    spec: &ProblemSpec<W>,
    paths: &[Vec<StateId>],
    aware: &BTreeSet<StateId>,
) -> Option<Pricing> {
    let net = &spec.net;
    let n = net.num_states();
    let horizon = spec.horizon;
    let big_m = spec.big_m() as f64;
    let occ = occupancy(n, paths);
    let ids = all_flow_ids(spec);

    let mut lp = LinearProgram::default();
    // (t, from, to, flow, is_comm) per LP column
    let mut columns: Vec<(usize, StateId, StateId, FlowId, bool)> = Vec::new();
    let mut netin: BTreeMap<(FlowId, StateId, usize), Vec<(usize, f64)>> = BTreeMap::new();
    let mut comm_out: BTreeMap<(FlowId, StateId, usize), Vec<usize>> = BTreeMap::new();
    let mut traversals: BTreeMap<(usize, StateId, StateId), usize> = BTreeMap::new();
    for p in paths {
        for t in 0..horizon {
            *traversals.entry((t, p[t], p[t + 1])).or_default() += 1;
        }
    }
    for &b in &ids {
        for t in 0..=horizon {
            for ce in net.comm_edges() {
                let (cf, ct) = (occ[t][ce.from.0], occ[t][ce.to.0]);
                if ce.from == ce.to || cf == 0 || ct == 0 {
                    continue;
                }
                let c = if t >= 1 { ce.weight.at(t).as_f64() } else { 0.0 };
                let v = lp.add_var(c, Some(big_m * cf.min(ct) as f64));
                columns.push((t, ce.from, ce.to, b, true));
                netin.entry((b, ce.to, t)).or_default().push((v, 1.0));
                netin.entry((b, ce.from, t)).or_default().push((v, -1.0));
                comm_out.entry((b, ce.from, t)).or_default().push(v);
            }
        }
        for (&(t, from, to), &k) in &traversals {
            let v = lp.add_var(0.0, Some(big_m * k as f64));
            columns.push((t, from, to, b, false));
            netin.entry((b, to, t + 1)).or_default().push((v, 1.0));
            netin.entry((b, from, t)).or_default().push((v, -1.0));
        }
    }
    let inflow = |b: FlowId, s: StateId, t: usize| -> Vec<(usize, f64)> {
        netin.get(&(b, s, t)).cloned().unwrap_or_default()
    };

    // data balance
    let orientation = spec.resolved_orientation();
    for b in spec.flow_ids() {
        for s in net.states() {
            for t in 0..=horizon {
                let mut rhs = 0.0;
                match orientation {
                    FlowOrientation::ManyToOne => {
                        if t == 0 {
                            rhs -= spec.src.iter().filter(|&&i| paths[i][0] == s).count() as f64;
                        }
                        if t == horizon && paths[b][horizon] == s {
                            rhs += spec.src.len() as f64;
                        }
                    }
                    _ => {
                        if t == 0 && paths[b][0] == s {
                            rhs -= spec.snk.len() as f64;
                        }
                        if t == horizon {
                            rhs += spec.snk.iter().filter(|&&j| paths[j][horizon] == s).count() as f64;
                        }
                    }
                }
                let terms = inflow(FlowId::Agent(b), s, t);
                if terms.is_empty() {
                    if rhs != 0.0 {
                        return None;
                    }
                    continue;
                }
                lp.add_row(terms, Cmp::Eq, rhs);
            }
        }
    }

    if spec.extensions.information_consistent {
        let m = FlowId::Master;
        let starts = spec.agents.master_starts();
        for s in net.states() {
            for t in 0..=horizon {
                let terms = inflow(m, s, t);
                if terms.is_empty() {
                    continue;
                }
                let rhs = if t == 0 && starts.contains(&s) {
                    -(n as f64)
                } else {
                    0.0
                };
                lp.add_row(terms, Cmp::Ge, rhs);
            }
        }
        let cumulative = |s: StateId, upto: usize| -> Vec<(usize, f64)> {
            (0..upto).flat_map(|tau| inflow(m, s, tau)).collect()
        };
        let gated = spec.agents.gated_agents();
        for &r in &gated {
            let s0 = spec.agents.initial[r];
            for t in 0..=horizon {
                if paths[r][t] != s0 {
                    let terms = cumulative(s0, t);
                    if terms.is_empty() {
                        return None;
                    }
                    lp.add_row(terms, Cmp::Ge, 1.0);
                }
            }
        }
        let gated_states: BTreeSet<StateId> = gated.iter().map(|&r| spec.agents.initial[r]).collect();
        for &s0 in &gated_states {
            for &b in &ids {
                for t in 0..=horizon {
                    let Some(outs) = comm_out.get(&(b, s0, t)) else {
                        continue;
                    };
                    let mut terms: Vec<(usize, f64)> = cumulative(s0, t + 1)
                        .into_iter()
                        .map(|(v, c)| (v, big_m * c))
                        .collect();
                    terms.extend(outs.iter().map(|&v| (v, -1.0)));
                    lp.add_row(terms, Cmp::Ge, 0.0);
                }
            }
        }
        for &s in aware {
            let terms = cumulative(s, horizon + 1);
            if terms.is_empty() {
                return None;
            }
            lp.add_row(terms, Cmp::Ge, 1.0);
        }
    }

    let LpOutcome::Optimal { value, x } = lp.minimize() else {
        return None;
    };
    let mut comm = BTreeMap::new();
    let mut moves = BTreeMap::new();
    for (&(t, from, to, flow, is_comm), &amount) in columns.iter().zip(&x) {
        let target = if is_comm { &mut comm } else { &mut moves };
        push_event(target, (t, from, to, flow), amount);
    }
    Some(Pricing {
        cost: value,
        comm_events: to_events(comm),
        flow_moves: to_events(moves),
    })
}

/// Best awareness subset for a joint plan: every subset of the
/// awareness-gated reward states is priced, largest reward first.
fn best_aware_pricing<W: Scalar>(
    spec: &ProblemSpec<W>,
    paths: &[Vec<StateId>],
    reward: &TerminalReward,
    mobility: f64,
    incumbent: Option<f64>,
) -> Option<(Pricing, BTreeSet<StateId>)> {
    let gated: Vec<StateId> = reward.gated.keys().copied().collect();
    let mut subsets: Vec<BTreeSet<StateId>> = (0..1usize << gated.len())
        .map(|mask| {
            gated
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, &s)| s)
                .collect()
        })
        .collect();
    subsets.sort_by(|a, b| reward.collected_with(b).total_cmp(&reward.collected_with(a)));
    let mut best: Option<(f64, Pricing, BTreeSet<StateId>)> = None;
    for aware in subsets {
        let ceiling = reward.collected_with(&aware) - mobility;
        let floor = best.as_ref().map(|b| b.0).or(incumbent);
        if floor.is_some_and(|f| ceiling <= f + 1e-9) {
            continue;
        }
        if let Some(p) = flow_lp_pricing(spec, paths, &aware) {
            let v = ceiling - p.cost;
            if best.as_ref().is_none_or(|b| v > b.0 + 1e-9) {
                best = Some((v, p, aware));
            }
        }
    }
    best.map(|(_, p, a)| (p, a))
}
