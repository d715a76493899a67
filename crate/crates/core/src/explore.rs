//! Frontier exploration driven by the cluster hierarchy. Every cycle
//! re-clusters the known map, plans pre-exploration moves cluster by
//! cluster, reveals the surroundings of reached frontiers and then plans the
//! delivery of what was seen back to the base.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{cluster_with_retry, prune_dead_states, ClusterError, Clustering};
use crate::ilp::{assemble, Cmp, LinExpr, VarKey};
use crate::network::{
    betweenness_centrality, hop_distances, MobilityCommNetwork, NetworkBuilder, NetworkDoc, StateId,
};
use crate::problem::ProblemSpec;
use crate::scalar::Scalar;
use crate::solver::{extract_plan, solve, Backend, Limits};
use crate::verify::{information_holdings, information_reachability, verify_plan, PlanSolution};

pub const FRONTIER_REWARD: f64 = 100.0;
pub const REWARD_DECAY: f64 = 0.5;
pub const K_MAX: usize = 2;
pub const CENTRALITY_WEIGHT: f64 = 1.0;
pub const EVACUATION_REWARD: f64 = 10.0;
pub const T_MAX: usize = 8;
pub const AGENTS_PER_CLUSTER: usize = 3;

const PIN_TAG: &str = "explore_pin";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExploreConfig {
    pub frontier_reward: f64,
    /// Reward factor for each further agent at the same frontier.
    pub decay: f64,
    /// Agents rewarded per frontier.
    pub k_max: usize,
    pub centrality_weight: f64,
    pub evacuation_reward: f64,
    pub t_max: usize,
    /// Cluster count is `ceil(R / agents_per_cluster)`.
    pub agents_per_cluster: usize,
    pub limits: Limits,
    pub max_cycles: usize,
    /// Cycles in a row that may reveal nothing before the run aborts. Each
    /// such cycle raises the horizon cap by another `t_max`.
    pub stall_retries: usize,
    /// Keep per-step DOT frames in the outcomes.
    pub frames: bool,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        ExploreConfig {
            frontier_reward: FRONTIER_REWARD,
            decay: REWARD_DECAY,
            k_max: K_MAX,
            centrality_weight: CENTRALITY_WEIGHT,
            evacuation_reward: EVACUATION_REWARD,
            t_max: T_MAX,
            agents_per_cluster: AGENTS_PER_CLUSTER,
            limits: Limits {
                time_limit: Some(30.0),
                gap: 0.01,
            },
            max_cycles: 100,
            stall_retries: 2,
            frames: false,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExploreError {
    #[error("invalid exploration setup: {0}")]
    Setup(String),
    #[error("cycle {cycle} revealed nothing while {remaining} frontiers remain")]
    Stall {
        cycle: usize,
        remaining: usize,
        log: Vec<CycleRecord>,
    },
    #[error("gave up after {cycles} cycles with {remaining} frontiers left")]
    CycleLimit {
        cycles: usize,
        remaining: usize,
        log: Vec<CycleRecord>,
    },
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pre,
    Post,
}

/// One solver call of a cycle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubproblemRecord {
    pub phase: Phase,
    pub cluster: usize,
    pub states: usize,
    pub agents: usize,
    pub horizon: usize,
    pub evacuation: bool,
    pub return_to_base: bool,
    pub status: String,
    pub objective: Option<f64>,
    pub wall_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle: usize,
    pub known: usize,
    pub frontiers: usize,
    pub clusters: usize,
    pub parents: Vec<Option<usize>>,
    pub inactive: Vec<usize>,
    pub subproblems: Vec<SubproblemRecord>,
    pub explorers: Vec<usize>,
    pub revealed: Vec<String>,
    pub info_delivered: bool,
    /// Agent positions at the end of the cycle.
    pub positions: Vec<String>,
}

/// Hidden truth plus what the team has seen so far.
#[derive(Clone, Debug)]
pub struct ExplorationWorld<W> {
    pub truth: MobilityCommNetwork<W>,
    pub known: BTreeSet<StateId>,
    pub frontiers: BTreeSet<StateId>,
    pub positions: Vec<StateId>,
    pub base: usize,
    pub cycle_log: Vec<CycleRecord>,
}

impl<W: Scalar> ExplorationWorld<W> {
    /// Agent starts are always known.
    pub fn new(
        truth: MobilityCommNetwork<W>,
        positions: Vec<StateId>,
        base: usize,
        initially_known: &[StateId],
    ) -> Result<Self, ExploreError> {
        if base >= positions.len() {
            return Err(ExploreError::Setup(format!("base agent {base} does not exist")));
        }
        if let Some(s) = positions
            .iter()
            .chain(initially_known)
            .find(|s| !truth.contains(**s))
        {
            return Err(ExploreError::Setup(format!("unknown state {s:?}")));
        }
        let known: BTreeSet<StateId> = initially_known.iter().chain(&positions).copied().collect();
        let mut world = ExplorationWorld {
            truth,
            known,
            frontiers: BTreeSet::new(),
            positions,
            base,
            cycle_log: Vec::new(),
        };
        world.frontiers = detect_frontiers(&world);
        Ok(world)
    }

    pub fn is_complete(&self) -> bool {
        self.known.len() == self.truth.num_states()
    }

    /// Reveals the truth neighbors of every frontier in `at`; returns the
    /// newly known states.
    pub fn reveal(&mut self, at: &[StateId]) -> BTreeSet<StateId> {
        let mut fresh = BTreeSet::new();
        for &f in at {
            if !self.frontiers.contains(&f) {
                continue;
            }
            for v in truth_neighbors(&self.truth, f) {
                if self.known.insert(v) {
                    fresh.insert(v);
                }
            }
        }
        self.frontiers = detect_frontiers(self);
        fresh
    }

    /// Known sub-network with the truth id of each of its states.
    pub fn known_network(&self) -> (MobilityCommNetwork<W>, Vec<StateId>) {
        let keep: Vec<StateId> = self.known.iter().copied().collect();
        self.truth.induced(&keep)
    }
}

fn truth_neighbors<W: Scalar>(net: &MobilityCommNetwork<W>, s: StateId) -> Vec<StateId> {
    let out = net.mobility_out(s).iter().map(|&e| net.mobility_edges()[e].to);
    let inn = net.mobility_in(s).iter().map(|&e| net.mobility_edges()[e].from);
    out.chain(inn).filter(|&v| v != s).collect()
}

/// Known states with a truth mobility edge to an unknown state.
pub fn detect_frontiers<W: Scalar>(world: &ExplorationWorld<W>) -> BTreeSet<StateId> {
    let net = &world.truth;
    world
        .known
        .iter()
        .copied()
        .filter(|&s| {
            net.mobility_out(s)
                .iter()
                .any(|&e| !world.known.contains(&net.mobility_edges()[e].to))
        })
        .collect()
}

/// Rewards for one cluster: frontier schedule, centrality at `k = 1` and the
/// cached child values at the child submaster states. Centrality is indexed
/// by truth state.
pub fn assign_rewards<W: Scalar>(
    states: &BTreeSet<StateId>,
    frontiers: &BTreeSet<StateId>,
    centrality: &BTreeMap<StateId, f64>,
    child_values: &BTreeMap<StateId, f64>,
    config: &ExploreConfig,
) -> BTreeMap<(StateId, usize), W> {
    let mut out: BTreeMap<(StateId, usize), f64> = BTreeMap::new();
    for f in frontiers.intersection(states) {
        let mut v = config.frontier_reward;
        for k in 1..=config.k_max {
            *out.entry((*f, k)).or_default() += v;
            v *= config.decay;
        }
    }
    for s in states {
        let c = config.centrality_weight * centrality.get(s).copied().unwrap_or(0.0);
        if c > 0.0 {
            *out.entry((*s, 1)).or_default() += c;
        }
    }
    for (&s, &v) in child_values {
        if v > 0.0 {
            *out.entry((s, 1)).or_default() += v;
        }
    }
    out.into_iter()
        .map(|(key, v)| (key, W::from_f64_lossy(v)))
        .collect()
}

/// Betweenness scaled into `[0, 1]` by the number of ordered pairs.
fn normalized_centrality<W: Scalar>(net: &MobilityCommNetwork<W>, map: &[StateId]) -> BTreeMap<StateId, f64> {
    let n = net.num_states() as f64;
    let pairs = ((n - 1.0) * (n - 2.0)).max(1.0);
    betweenness_centrality(net)
        .into_iter()
        .enumerate()
        .map(|(i, c)| (map[i], c.as_f64() / pairs))
        .collect()
}

/// A cluster's planning instance in its own numbering, with its plan.
#[derive(Clone, Debug)]
pub struct ClusterPlan<W> {
    pub cluster: usize,
    pub spec: ProblemSpec<W>,
    /// Truth id of each local state.
    pub states: Vec<StateId>,
    /// Global agent behind each local agent; the first `own` belong to the
    /// cluster, the rest are child submasters held in place.
    pub agents: Vec<usize>,
    pub own: usize,
    pub plan: PlanSolution,
    /// The plan was solved, verified and is executed.
    pub executed: bool,
}

impl<W: Scalar> ClusterPlan<W> {
    fn local_state(&self, s: StateId) -> StateId {
        StateId(
            self.states
                .iter()
                .position(|&x| x == s)
                .expect("state inside the cluster"),
        )
    }

    fn local_agent(&self, r: usize) -> Option<usize> {
        self.agents.iter().position(|&a| a == r)
    }

    /// Truth position of local agent `i` at step `t`, clamped to the horizon.
    pub fn position(&self, i: usize, t: usize) -> StateId {
        let path = &self.plan.paths[i];
        self.states[path[t.min(path.len() - 1)].0]
    }
}

#[derive(Clone, Debug)]
pub struct CycleOutcome<W> {
    pub pre_plan: BTreeMap<usize, ClusterPlan<W>>,
    pub post_plan: BTreeMap<usize, ClusterPlan<W>>,
    pub newly_revealed: BTreeSet<StateId>,
    /// Every explorer's data reaches the base, checked on the executed plans.
    pub info_delivered: bool,
    pub record: CycleRecord,
    /// Per-step DOT frames of both phases when requested.
    pub frames: Vec<String>,
}

/// Cluster layout of one cycle, in truth ids.
struct Layout {
    clustering: Clustering,
    clusters: Vec<BTreeSet<StateId>>,
    centrality: BTreeMap<StateId, f64>,
    /// Agent positions at the start of the cycle.
    starts: Vec<StateId>,
}

impl Layout {
    fn master_of(&self, c: usize, base: usize) -> usize {
        if c == 0 {
            base
        } else {
            self.clustering.submaster[c].expect("non-master cluster has a submaster")
        }
    }

    fn child_starts(&self, c: usize) -> Vec<(usize, StateId)> {
        self.clustering
            .children(c)
            .into_iter()
            .map(|d| {
                let sub = self.clustering.submaster[d].expect("child has a submaster");
                (d, self.starts[sub])
            })
            .collect()
    }
}

/// Sub-network over `members` plus `extras`, where extra states only carry
/// communication edges.
fn cluster_network<W: Scalar>(
    truth: &MobilityCommNetwork<W>,
    members: &BTreeSet<StateId>,
    extras: &[StateId],
) -> (MobilityCommNetwork<W>, Vec<StateId>) {
    let mut states: Vec<StateId> = members.iter().copied().collect();
    for &x in extras {
        if !states.contains(&x) {
            states.push(x);
        }
    }
    let all: BTreeSet<StateId> = states.iter().copied().collect();
    let mut b = NetworkBuilder::new().states(states.iter().map(|&s| truth.name(s).to_string()));
    for e in truth.mobility_edges() {
        if !e.is_loop() && members.contains(&e.from) && members.contains(&e.to) {
            b = b.mobility_weighted(truth.name(e.from), truth.name(e.to), e.weight.clone());
        }
    }
    for e in truth.comm_edges() {
        if all.contains(&e.from) && all.contains(&e.to) {
            b = b.comm_weighted(truth.name(e.from), truth.name(e.to), e.weight.clone());
        }
    }
    let net = b.build(true).expect("cluster sub-network is valid");
    (net, states)
}

/// Largest finite hop distance between member states of a sub-network.
fn diameter<W: Scalar>(net: &MobilityCommNetwork<W>, members: usize) -> usize {
    (0..members)
        .map(|i| {
            hop_distances(net, StateId(i))
                .into_iter()
                .take(members)
                .flatten()
                .max()
                .unwrap_or(0)
        })
        .max()
        .unwrap_or(0)
}

struct Solved {
    plan: Option<PlanSolution>,
    record: SubproblemRecord,
}

fn solve_cluster<W: Scalar>(
    spec: &ProblemSpec<W>,
    pin: Option<(usize, StateId)>,
    backend: &dyn Backend,
    limits: &Limits,
    phase: Phase,
    cluster: usize,
) -> Solved {
    let mut record = SubproblemRecord {
        phase,
        cluster,
        states: spec.net.num_states(),
        agents: spec.num_agents(),
        horizon: spec.horizon,
        evacuation: false,
        return_to_base: spec.extensions.return_to_base,
        status: String::new(),
        objective: None,
        wall_time: 0.0,
    };
    let mut model = match assemble(spec) {
        Ok(m) => m,
        Err(e) => {
            log::warn!("cluster {cluster}: {e}");
            record.status = "invalid".into();
            return Solved { plan: None, record };
        }
    };
    if let Some((r, s)) = pin {
        let z = model.var(VarKey::Z {
            r,
            s,
            t: spec.horizon,
        });
        let mut e = LinExpr::new();
        e.add(z, 1.0);
        model.add_constraint(e, Cmp::Eq, 1.0, PIN_TAG);
    }
    let res = solve(&model, backend, limits);
    record.status = res.status.label().to_string();
    record.objective = res.objective;
    record.wall_time = res.wall_time;
    let plan = extract_plan(spec, &model, &res).filter(|plan| {
        let pinned = pin.is_none_or(|(r, s)| plan.paths[r][spec.horizon] == s);
        match verify_plan(plan, spec) {
            Ok(()) if pinned => true,
            Ok(()) => {
                log::warn!("cluster {cluster}: plan ignores the submaster pin");
                false
            }
            Err(v) => {
                log::warn!("cluster {cluster}: plan rejected by the verifier: {v}");
                false
            }
        }
    });
    if plan.is_none() && res.status.has_solution() {
        record.status = "rejected".into();
    }
    Solved { plan, record }
}

/// Local agents of `plan` that held the plan at some step, per the plan's
/// own events.
fn plan_receivers<W: Scalar>(cp: &ClusterPlan<W>, master: usize) -> BTreeSet<usize> {
    if !cp.executed {
        return BTreeSet::new();
    }
    let holds = information_holdings(&cp.plan, &cp.spec.net, cp.spec.agents.initial[master]);
    (0..cp.agents.len())
        .filter(|&i| (0..holds.len()).any(|t| holds[t][cp.plan.paths[i][t].0]))
        .collect()
}

struct Cycle<'a, W> {
    world: &'a mut ExplorationWorld<W>,
    config: &'a ExploreConfig,
    backend: &'a dyn Backend,
    layout: Layout,
    records: Vec<SubproblemRecord>,
}

impl<W: Scalar> Cycle<'_, W> {
    fn horizon(&self, net: &MobilityCommNetwork<W>, members: usize) -> usize {
        self.config.t_max.min(diameter(net, members) + 2)
    }

    /// Solves every cluster leaves first and returns the plans with the
    /// activity of each cluster resolved top-down.
    fn pre_exploration(&mut self) -> BTreeMap<usize, ClusterPlan<W>> {
        let order = self.layout.clustering.top_down();
        let mut values: BTreeMap<usize, f64> = BTreeMap::new();
        let mut plans = BTreeMap::new();
        for &c in order.iter().rev() {
            let cp = self.pre_cluster(c, &values);
            values.insert(c, cp.plan.objective.max(0.0) * f64::from(u8::from(cp.executed)));
            plans.insert(c, cp);
        }
        for &c in &order {
            let active = match self.layout.clustering.parent[c] {
                None => plans[&c].executed,
                Some(p) => {
                    let sub = self.layout.clustering.submaster[c].expect("submaster");
                    let parent: &ClusterPlan<W> = &plans[&p];
                    let master = parent
                        .local_agent(self.layout.master_of(p, self.world.base))
                        .expect("master");
                    parent.executed
                        && parent
                            .local_agent(sub)
                            .is_some_and(|i| plan_receivers(parent, master).contains(&i))
                }
            };
            if !active {
                let cp = plans.get_mut(&c).expect("planned");
                if cp.executed {
                    log::debug!("cluster {c} never receives the plan");
                }
                cp.executed = false;
                cp.plan = PlanSolution::stationary(&cp.spec.agents.initial, cp.spec.horizon);
            }
        }
        plans
    }

    fn pre_cluster(&mut self, c: usize, values: &BTreeMap<usize, f64>) -> ClusterPlan<W> {
        let base = self.world.base;
        let layout = &self.layout;
        let members = &layout.clusters[c];
        let children = layout.child_starts(c);
        let extras: Vec<StateId> = children.iter().map(|&(_, s)| s).collect();
        let (net, states) = cluster_network(&self.world.truth, members, &extras);
        let own = layout.clustering.agents_of(c);
        let mut agents = own.clone();
        agents.extend(
            children
                .iter()
                .map(|&(d, _)| layout.clustering.submaster[d].expect("submaster")),
        );
        let local = |s: StateId| StateId(states.iter().position(|&x| x == s).expect("local state"));
        let initial: Vec<StateId> = agents.iter().map(|&r| local(layout.starts[r])).collect();
        let horizon = self.horizon(&net, members.len());
        let mut spec = ProblemSpec::new(net, initial, horizon);
        let master = layout.master_of(c, base);
        spec.agents
            .masters
            .insert(own.iter().position(|&r| r == master).expect("master is own"));
        spec.agents.static_agents = (own.len()..agents.len()).collect();
        if c == 0 {
            spec.agents
                .static_agents
                .insert(own.iter().position(|&r| r == base).expect("base"));
        }
        spec.extensions.information_consistent = true;
        spec.extensions.awareness_reward = true;
        let dead = c != 0 && children.is_empty() && self.world.frontiers.is_disjoint(members);
        if dead {
            // pull the cluster's agents toward the state facing the parent
            let face = local(layout.starts[master]);
            for k in 1..=own.len() {
                spec.rewards
                    .insert((face, k), W::from_f64_lossy(self.config.evacuation_reward));
            }
        } else {
            let child_values: BTreeMap<StateId, f64> = children
                .iter()
                .map(|&(d, s)| (s, values.get(&d).copied().unwrap_or(0.0)))
                .collect();
            let truth_rewards: BTreeMap<(StateId, usize), W> = assign_rewards(
                members,
                &self.world.frontiers,
                &layout.centrality,
                &child_values,
                self.config,
            );
            spec.rewards = truth_rewards
                .into_iter()
                .map(|((s, k), v)| ((local(s), k), v))
                .collect();
        }
        let solved = solve_cluster(&spec, None, self.backend, &self.config.limits, Phase::Pre, c);
        let mut record = solved.record;
        record.evacuation = dead;
        self.records.push(record);
        let executed = solved.plan.is_some();
        let plan = solved
            .plan
            .unwrap_or_else(|| PlanSolution::stationary(&spec.agents.initial, spec.horizon));
        ClusterPlan {
            cluster: c,
            spec,
            states,
            agents,
            own: own.len(),
            plan,
            executed,
        }
    }

    /// Solves delivery leaves first; `explorers` are global agent ids.
    fn post_exploration(
        &mut self,
        pre: &BTreeMap<usize, ClusterPlan<W>>,
        explorers: &BTreeSet<usize>,
    ) -> BTreeMap<usize, ClusterPlan<W>> {
        let base = self.world.base;
        let order = self.layout.clustering.top_down();
        let mut plans: BTreeMap<usize, ClusterPlan<W>> = BTreeMap::new();
        // clusters whose submaster holds data and is back at its start
        let mut carrying: BTreeSet<usize> = BTreeSet::new();
        for &c in order.iter().rev() {
            let pre_c = &pre[&c];
            if !pre_c.executed {
                continue;
            }
            let master = self.layout.master_of(c, base);
            let own: Vec<usize> = pre_c.agents[..pre_c.own].to_vec();
            let own_explorers: Vec<usize> = own.iter().copied().filter(|r| explorers.contains(r)).collect();
            let children: Vec<(usize, StateId)> = self
                .layout
                .child_starts(c)
                .into_iter()
                .filter(|(d, _)| carrying.contains(d))
                .collect();
            let start = self.layout.starts[master];
            let displaced = self.world.positions[master] != start;
            let has_data = !own_explorers.is_empty() || !children.is_empty();
            if c != 0 && !has_data && !displaced {
                continue;
            }
            let mut agents = own.clone();
            agents.extend(
                children
                    .iter()
                    .map(|&(d, _)| self.layout.clustering.submaster[d].expect("submaster")),
            );
            let initial: Vec<StateId> = own
                .iter()
                .map(|&r| pre_c.local_state(self.world.positions[r]))
                .chain(children.iter().map(|&(_, s)| pre_c.local_state(s)))
                .collect();
            let receivers = plan_receivers(pre_c, pre_c.local_agent(master).expect("master"));
            let mut spec = ProblemSpec::new(pre_c.spec.net.clone(), initial, pre_c.spec.horizon);
            let m_local = own.iter().position(|&r| r == master).expect("master is own");
            spec.agents.masters = receivers.into_iter().filter(|&i| i < own.len()).collect();
            spec.agents.masters.insert(m_local);
            spec.agents.masters.extend(own.len()..agents.len());
            spec.agents.static_agents = (own.len()..agents.len()).collect();
            if c == 0 {
                spec.agents
                    .static_agents
                    .insert(own.iter().position(|&r| r == base).expect("base"));
            }
            // gating is vacuous once every agent holds the plan
            spec.extensions.information_consistent = spec.agents.masters.len() < agents.len();
            if has_data {
                spec.src = own_explorers
                    .iter()
                    .map(|r| own.iter().position(|x| x == r).expect("own explorer"))
                    .chain(own.len()..agents.len())
                    .collect();
                spec.snk = [m_local].into();
            }
            let wants_return = c == 0 && spec.agents.dynamic_agents().next().is_some();
            let pin = (c != 0).then(|| (m_local, pre_c.local_state(start)));
            // shortest delivery first
            let cap = 2 * spec.horizon;
            let mut attempts: Vec<(usize, bool)> = (1..=cap).map(|h| (h, wants_return)).collect();
            if wants_return {
                attempts.push((cap, false));
            }
            let mut chosen = None;
            for (horizon, rtb) in attempts {
                spec.horizon = horizon;
                spec.extensions.return_to_base = rtb;
                let solved = solve_cluster(&spec, pin, self.backend, &self.config.limits, Phase::Post, c);
                self.records.push(solved.record);
                if let Some(plan) = solved.plan {
                    chosen = Some(plan);
                    break;
                }
            }
            if chosen.is_none() {
                log::warn!("cluster {c}: no delivery plan");
            }
            let executed = chosen.is_some();
            let plan = chosen.unwrap_or_else(|| PlanSolution::stationary(&spec.agents.initial, spec.horizon));
            if executed && has_data && c != 0 {
                carrying.insert(c);
            }
            plans.insert(
                c,
                ClusterPlan {
                    cluster: c,
                    spec,
                    states: pre_c.states.clone(),
                    agents,
                    own: own.len(),
                    plan,
                    executed,
                },
            );
        }
        plans
    }

    /// Every explorer's data reaches the base through the executed post
    /// plans, hop by hop up the cluster tree.
    fn delivered(&self, post: &BTreeMap<usize, ClusterPlan<W>>, explorers: &BTreeSet<usize>) -> bool {
        let base = self.world.base;
        let cl = &self.layout.clustering;
        let reach = |c: usize, from: usize| -> bool {
            let Some(cp) = post.get(&c).filter(|cp| cp.executed) else {
                return false;
            };
            let master = self.layout.master_of(c, base);
            let (Some(i), Some(j)) = (cp.local_agent(from), cp.local_agent(master)) else {
                return false;
            };
            i == j || information_reachability(&cp.plan, &cp.spec.net).reachable(i, j)
        };
        explorers.iter().all(|&e| {
            let mut c = cl.agent_assignment[e];
            if !reach(c, e) {
                return false;
            }
            while let Some(p) = cl.parent[c] {
                let sub = cl.submaster[c].expect("submaster");
                let back_home = post[&c].position(post[&c].local_agent(sub).expect("sub"), usize::MAX)
                    == self.layout.starts[sub];
                if !back_home || !reach(p, sub) {
                    return false;
                }
                c = p;
            }
            true
        })
    }
}

/// Moves every agent to its final position in its own cluster's plan.
fn execute<W: Scalar>(positions: &mut [StateId], plans: &BTreeMap<usize, ClusterPlan<W>>) {
    for cp in plans.values().filter(|cp| cp.executed) {
        for i in 0..cp.own {
            positions[cp.agents[i]] = cp.position(i, usize::MAX);
        }
    }
}

fn frames<W: Scalar>(
    world: &ExplorationWorld<W>,
    plans: &BTreeMap<usize, ClusterPlan<W>>,
    start: &[StateId],
) -> Vec<String> {
    let steps = plans.values().map(|cp| cp.plan.horizon()).max().unwrap_or(0);
    (0..=steps)
        .map(|t| {
            let mut at = start.to_vec();
            for cp in plans.values().filter(|cp| cp.executed) {
                for i in 0..cp.own {
                    at[cp.agents[i]] = cp.position(i, t);
                }
            }
            world.truth.to_dot_with(|s| {
                Some(
                    if at.contains(&s) {
                        "red"
                    } else if world.frontiers.contains(&s) {
                        "orange"
                    } else if world.known.contains(&s) {
                        "black"
                    } else {
                        "gray"
                    }
                    .to_string(),
                )
            })
        })
        .collect()
}

/// One full cycle on `world`; `None` once no frontier remains.
pub fn run_cycle<W: Scalar>(
    world: &mut ExplorationWorld<W>,
    config: &ExploreConfig,
    backend: &dyn Backend,
    seed: u64,
) -> Result<Option<CycleOutcome<W>>, ExploreError> {
    world.frontiers = detect_frontiers(world);
    if world.frontiers.is_empty() {
        return Ok(None);
    }
    let cycle = world.cycle_log.len();
    let (known_net, known_map) = world.known_network();
    let local_of = |s: StateId| StateId(known_map.iter().position(|&x| x == s).expect("known state"));
    let local_known: BTreeSet<StateId> = known_net.states().collect();
    let local_frontiers: BTreeSet<StateId> = world.frontiers.iter().map(|&s| local_of(s)).collect();
    let local_positions: Vec<StateId> = world.positions.iter().map(|&s| local_of(s)).collect();
    let kept = prune_dead_states(
        &known_net,
        &local_known,
        &local_frontiers,
        &local_positions,
        &BTreeSet::new(),
    );
    let keep: Vec<StateId> = kept.iter().copied().collect();
    let (plan_net, plan_map) = known_net.induced(&keep);
    let truth_of = |s: StateId| known_map[plan_map[s.0].0];
    let initial: Vec<StateId> = local_positions
        .iter()
        .map(|s| StateId(keep.iter().position(|x| x == s).expect("agents are kept")))
        .collect();
    let r = world.positions.len();
    let k = r.div_ceil(config.agents_per_cluster.max(1)).clamp(1, r);
    let clustering = cluster_with_retry(
        &plan_net,
        &initial,
        k,
        world.base,
        seed.wrapping_add(cycle as u64),
    )?;
    let clusters = clustering
        .clusters
        .iter()
        .map(|c| c.iter().map(|&s| truth_of(s)).collect())
        .collect();
    let truth_map: Vec<StateId> = plan_net.states().map(truth_of).collect();
    let layout = Layout {
        clustering,
        clusters,
        centrality: normalized_centrality(&plan_net, &truth_map),
        starts: world.positions.clone(),
    };
    let frontiers_before = world.frontiers.clone();
    let mut run = Cycle {
        world,
        config,
        backend,
        layout,
        records: Vec::new(),
    };

    let pre = run.pre_exploration();
    let start = run.world.positions.clone();
    execute(&mut run.world.positions, &pre);
    let mut frame_list = if config.frames {
        frames(run.world, &pre, &start)
    } else {
        Vec::new()
    };
    let mut explorers = BTreeSet::new();
    for cp in pre.values().filter(|cp| cp.executed) {
        let master = cp
            .local_agent(run.layout.master_of(cp.cluster, run.world.base))
            .expect("master");
        let got = plan_receivers(cp, master);
        for i in (0..cp.own).filter(|i| got.contains(i)) {
            if frontiers_before.contains(&cp.position(i, usize::MAX)) {
                explorers.insert(cp.agents[i]);
            }
        }
    }
    let sensed: Vec<StateId> = explorers.iter().map(|&e| run.world.positions[e]).collect();
    let revealed = run.world.reveal(&sensed);

    let post = run.post_exploration(&pre, &explorers);
    let mid = run.world.positions.clone();
    execute(&mut run.world.positions, &post);
    if config.frames {
        frame_list.extend(frames(run.world, &post, &mid));
    }
    let info_delivered = run.delivered(&post, &explorers);
    let inactive = pre
        .values()
        .filter(|cp| !cp.executed)
        .map(|cp| cp.cluster)
        .collect();
    let names = |set: &mut dyn Iterator<Item = StateId>| -> Vec<String> {
        set.map(|s| run.world.truth.name(s).to_string()).collect()
    };
    let record = CycleRecord {
        cycle,
        known: run.world.known.len() - revealed.len(),
        frontiers: frontiers_before.len(),
        clusters: run.layout.clusters.len(),
        parents: run.layout.clustering.parent.clone(),
        inactive,
        subproblems: std::mem::take(&mut run.records),
        explorers: explorers.iter().copied().collect(),
        revealed: names(&mut revealed.iter().copied()),
        info_delivered,
        positions: names(&mut run.world.positions.iter().copied()),
    };
    log::info!(
        "cycle {cycle}: {} clusters, {} explorers, {} revealed, delivered {info_delivered}",
        record.clusters,
        record.explorers.len(),
        record.revealed.len()
    );
    run.world.cycle_log.push(record.clone());
    Ok(Some(CycleOutcome {
        pre_plan: pre,
        post_plan: post,
        newly_revealed: revealed,
        info_delivered,
        record,
        frames: frame_list,
    }))
}

#[derive(Clone, Debug)]
pub struct ExplorationRun<W> {
    pub outcomes: Vec<CycleOutcome<W>>,
    pub world: ExplorationWorld<W>,
}

impl<W> ExplorationRun<W> {
    pub fn subproblems(&self) -> usize {
        count_subproblems(&self.world.cycle_log)
    }
}

/// Distinct (cycle, cluster, phase) solves; horizon retries count once.
pub fn count_subproblems(log: &[CycleRecord]) -> usize {
    log.iter()
        .map(|c| {
            c.subproblems
                .iter()
                .map(|s| (s.cluster, s.phase))
                .collect::<BTreeSet<_>>()
                .len()
        })
        .sum()
}

/// Cycles until no frontier remains. A cycle that reveals nothing is retried
/// with a longer horizon cap; after `stall_retries` such cycles the run aborts.
pub fn run_exploration<W: Scalar>(
    truth: MobilityCommNetwork<W>,
    agents: Vec<StateId>,
    base: usize,
    initially_known: &[StateId],
    config: &ExploreConfig,
    backend: &dyn Backend,
    seed: u64,
) -> Result<ExplorationRun<W>, ExploreError> {
    let mut world = ExplorationWorld::new(truth, agents, base, initially_known)?;
    let mut outcomes = Vec::new();
    let mut stalls = 0;
    let mut current = config.clone();
    while let Some(out) = run_cycle(&mut world, &current, backend, seed)? {
        let stalled = out.newly_revealed.is_empty() && !world.frontiers.is_empty();
        outcomes.push(out);
        if stalled {
            stalls += 1;
            if stalls > config.stall_retries {
                return Err(ExploreError::Stall {
                    cycle: outcomes.len() - 1,
                    remaining: world.frontiers.len(),
                    log: world.cycle_log,
                });
            }
            log::info!(
                "cycle {} revealed nothing, horizon cap {}",
                outcomes.len() - 1,
                config.t_max * (stalls + 1)
            );
        } else {
            stalls = 0;
        }
        current.t_max = config.t_max * (stalls + 1);
        if outcomes.len() >= config.max_cycles && !world.frontiers.is_empty() {
            return Err(ExploreError::CycleLimit {
                cycles: outcomes.len(),
                remaining: world.frontiers.len(),
                log: world.cycle_log,
            });
        }
    }
    Ok(ExplorationRun { outcomes, world })
}

/// On-disk exploration scenario: a network plus agent starts, the static
/// base agent and the states known at the outset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplorationInstance {
    #[serde(flatten)]
    pub network: NetworkDoc,
    pub agents: Vec<String>,
    pub base: usize,
    #[serde(default)]
    pub initially_known: Vec<String>,
}

impl ExplorationInstance {
    pub fn into_world<W: Scalar>(&self) -> Result<ExplorationWorld<W>, ExploreError> {
        let setup = |e: crate::network::NetworkError| ExploreError::Setup(e.to_string());
        let net: MobilityCommNetwork<W> = self.network.into_network().map_err(setup)?;
        let ids = |names: &[String]| -> Result<Vec<StateId>, ExploreError> {
            names.iter().map(|n| net.state_id(n).map_err(setup)).collect()
        };
        let agents = ids(&self.agents)?;
        let known = ids(&self.initially_known)?;
        ExplorationWorld::new(net, agents, self.base, &known)
    }
}

/// Seeded cave on a grid: `num_states` cells grown from the origin, unit
/// mobility between 4-neighbors, communication within Euclidean distance
/// `comm_radius` at cost 0.1. All agents start at the first cell; agent 0 is
/// the base and the cell with its neighbors is known.
pub fn generate_cave(
    num_states: usize,
    num_agents: usize,
    comm_radius: f64,
    seed: u64,
) -> ExplorationInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cells: Vec<(i32, i32)> = vec![(0, 0)];
    let mut taken: BTreeSet<(i32, i32)> = cells.iter().copied().collect();
    let steps = [(1, 0), (-1, 0), (0, 1), (0, -1)];
    let around = |c: (i32, i32), taken: &BTreeSet<(i32, i32)>| {
        steps
            .iter()
            .filter(|d| taken.contains(&(c.0 + d.0, c.1 + d.1)))
            .count()
    };
    while cells.len() < num_states.max(1) {
        // recent cells now and then, so rooms get corridors between them
        let from = if rng.gen_bool(0.3) {
            cells[cells.len() - 1 - rng.gen_range(0..cells.len().min(8))]
        } else {
            cells[rng.gen_range(0..cells.len())]
        };
        let d = steps[rng.gen_range(0..4)];
        let next = (from.0 + d.0, from.1 + d.1);
        if taken.contains(&next) || (around(next, &taken) > 1 && !rng.gen_bool(0.35)) {
            continue;
        }
        taken.insert(next);
        cells.push(next);
    }
    let (x0, y0) = (
        cells.iter().map(|c| c.0).min().unwrap_or(0),
        cells.iter().map(|c| c.1).min().unwrap_or(0),
    );
    let name = |c: (i32, i32)| format!("x{}y{}", c.0 - x0, c.1 - y0);
    let mut b: NetworkBuilder<f64> = NetworkBuilder::new().states(cells.iter().map(|&c| name(c)));
    for (i, &a) in cells.iter().enumerate() {
        for &c in &cells[i + 1..] {
            let (dx, dy) = (f64::from(a.0 - c.0), f64::from(a.1 - c.1));
            let dist = (dx * dx + dy * dy).sqrt();
            if dist == 1.0 {
                b = b.mobility_bidir(name(a), name(c), 1.0);
            }
            if dist <= comm_radius {
                b = b.comm_bidir(name(a), name(c), 0.1);
            }
        }
    }
    let net = b.build(true).expect("generated cave is valid");
    let origin = name(cells[0]);
    let mut known = vec![origin.clone()];
    known.extend(
        steps
            .iter()
            .map(|d| (cells[0].0 + d.0, cells[0].1 + d.1))
            .filter(|c| taken.contains(c))
            .map(name),
    );
    ExplorationInstance {
        network: NetworkDoc::from_network(&net),
        agents: vec![origin; num_agents],
        base: 0,
        initially_known: known,
    }
}

#[cfg(test)]
mod tests;
