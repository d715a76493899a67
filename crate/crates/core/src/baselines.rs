//! Subset-cut encodings of the connectivity requirement, for comparison with
//! the flow model.
//!
//! A cut for a set `A` of time-extended vertices that misses some source
//! start says: if a sink agent ends inside `A`, some active arc enters `A`.
//! The full model enumerates the sets up front; the adaptive loop adds them
//! only when the current solution breaks reachability.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use thiserror::Error;

use crate::ilp::{
    build_dynamics, build_extensions, build_reward_link, Cmp, FlowId, LinExpr, MilpModel, VarKey,
};
use crate::network::{hop_distances, NetworkBuilder, StateId, TimeVertex};
use crate::problem::{ProblemError, ProblemSpec};
use crate::scalar::Scalar;
use crate::solver::{extract_plan, solve, Backend, Limits, SolveResult, SolveStatus};
use crate::verify::{information_holdings, FlowEvent, PlanSolution};
use crate::Problem;

pub const TAG_COMM_ACTIVE: &str = "comm_active";
pub const TAG_CUT: &str = "cut";

/// Largest number of candidate time-extended vertices the full enumeration
/// accepts.
pub const POWERSET_GUARD: usize = 24;
pub const ADAPTIVE_ITERATION_CAP: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("{vertices} candidate vertices exceed the powerset guard of {guard}")]
    TooLarge { vertices: usize, guard: usize },
    #[error("no verified solution after {0} iterations")]
    IterationCap(usize),
    #[error("subset encodings do not cover information consistency")]
    Unsupported,
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CutMode {
    FullPowerset,
    Adaptive,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CutConstraintSet {
    pub mode: CutMode,
    pub subsets: Vec<Vec<TimeVertex>>,
}

/// Time-extended vertices an agent could occupy, indexed for bit masks.
struct Candidates {
    vertices: Vec<TimeVertex>,
    /// Mobility arcs `(from, to, edge)` between candidates; `from` is at `t`.
    mobility: Vec<(usize, usize, usize)>,
    comm: Vec<(usize, usize, usize)>,
    /// Terminal vertices some sink can end in.
    terminal: u64,
    sources: u64,
}

impl Candidates {
    fn new<W: Scalar>(spec: &ProblemSpec<W>) -> Self {
        let net = &spec.net;
        let horizon = spec.horizon;
        let hops: Vec<Vec<Option<usize>>> = spec
            .agents
            .initial
            .iter()
            .map(|&s0| hop_distances(net, s0))
            .collect();
        let within = |r: usize, s: StateId, t: usize| {
            if spec.agents.is_static(r) {
                spec.agents.initial[r] == s
            } else {
                hops[r][s.0].is_some_and(|d| d <= t)
            }
        };
        let mut vertices = Vec::new();
        let mut index = vec![vec![None; net.num_states()]; horizon + 1];
        for t in 0..=horizon {
            for s in net.states() {
                if (0..spec.num_agents()).any(|r| within(r, s, t)) {
                    index[t][s.0] = Some(vertices.len());
                    vertices.push(TimeVertex::new(s, t));
                }
            }
        }
        let mut mobility = Vec::new();
        let mut comm = Vec::new();
        for (i, v) in vertices.iter().enumerate() {
            if v.t < horizon {
                for &edge in net.mobility_out(v.state) {
                    let to = net.mobility_edges()[edge].to;
                    if let Some(j) = index[v.t + 1][to.0] {
                        mobility.push((i, j, edge));
                    }
                }
            }
            for &edge in net.comm_out(v.state) {
                let to = net.comm_edges()[edge].to;
                if let Some(j) = index[v.t][to.0] {
                    comm.push((i, j, edge));
                }
            }
        }
        let mut terminal = 0u64;
        for s in net.states() {
            if let Some(i) = index[horizon][s.0] {
                if spec.snk.iter().any(|&j| within(j, s, horizon)) {
                    terminal |= 1u64.checked_shl(i as u32).unwrap_or(0);
                }
            }
        }
        let mut sources = 0u64;
        for &i in &spec.src {
            if let Some(v) = index[0][spec.agents.initial[i].0] {
                sources |= 1u64.checked_shl(v as u32).unwrap_or(0);
            }
        }
        Candidates {
            vertices,
            mobility,
            comm,
            terminal,
            sources,
        }
    }

    fn len(&self) -> usize {
        self.vertices.len()
    }

    /// Sets whose cut is not implied by the cut of another set. A set is
    /// dropped when it contains every source start, when no sink can end in
    /// it, when it falls apart into pieces with no arc between them, when
    /// some member cannot reach a sink terminal inside it, or when an
    /// outside vertex fed only from inside could be added for a tighter cut.
    fn maximal_subsets(&self) -> Vec<u64> {
        let n = self.len();
        let mut out_arcs = vec![0u64; n];
        let mut in_arcs = vec![0u64; n];
        for &(a, b, _) in self.mobility.iter().chain(&self.comm) {
            if a != b {
                out_arcs[a] |= 1 << b;
                in_arcs[b] |= 1 << a;
            }
        }
        let both: Vec<u64> = (0..n).map(|i| out_arcs[i] | in_arcs[i]).collect();
        let full = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
        let mut keep = Vec::new();
        for a in 1..=full {
            if a & self.terminal == 0 || (self.sources != 0 && a & self.sources == self.sources) {
                continue;
            }
            if closure(a & self.terminal, a, &out_arcs) != a {
                continue;
            }
            let low = a & a.wrapping_neg();
            if closure(low, a, &both) != a {
                continue;
            }
            let mut rest = full & !a;
            let mut addable = false;
            while rest != 0 {
                let bit = rest & rest.wrapping_neg();
                rest ^= bit;
                let v = bit.trailing_zeros() as usize;
                if in_arcs[v] & !a != 0 {
                    continue;
                }
                if bit & self.terminal == 0 && out_arcs[v] & a == 0 {
                    continue;
                }
                if bit & self.sources != 0 && (a | bit) & self.sources == self.sources {
                    continue;
                }
                addable = true;
                break;
            }
            if !addable {
                keep.push(a);
            }
        }
        keep
    }

    fn subset_vertices(&self, mask: u64) -> Vec<TimeVertex> {
        (0..self.len())
            .filter(|&i| mask >> i & 1 == 1)
            .map(|i| self.vertices[i])
            .collect()
    }
}

/// Grows `seed` inside `within` along `step` (a per-vertex neighbor mask).
fn closure(seed: u64, within: u64, step: &[u64]) -> u64 {
    let mut reach = seed;
    loop {
        let mut next = reach;
        let mut rest = within & !reach;
        while rest != 0 {
            let bit = rest & rest.wrapping_neg();
            rest ^= bit;
            if step[bit.trailing_zeros() as usize] & reach != 0 {
                next |= bit;
            }
        }
        if next == reach {
            return reach;
        }
        reach = next;
    }
}

fn comm_active(model: &mut MilpModel, edge: usize, t: usize) -> usize {
    model.var(VarKey::CommActive { edge, t })
}

/// Dynamics, rewards, extensions and the link between active communication
/// arcs and occupancy, with no connectivity requirement.
fn relaxed_model<W: Scalar>(spec: &ProblemSpec<W>) -> Result<MilpModel, BaselineError> {
    if spec.extensions.information_consistent {
        return Err(BaselineError::Unsupported);
    }
    spec.validate()?;
    let net = &spec.net;
    let mut model = MilpModel::new();
    build_dynamics(spec, &mut model);
    build_reward_link(spec, &mut model);
    build_extensions(spec, &mut model)?;
    for (&(s, k), v) in &spec.rewards {
        if !v.is_zero() {
            let y = model.var(VarKey::Y { s, k });
            model.add_objective(y, v.as_f64());
        }
    }
    for r in 0..spec.num_agents() {
        for t in 0..spec.horizon {
            for (edge, me) in net.mobility_edges().iter().enumerate() {
                let x = model.var(VarKey::X { r, edge, t });
                model.add_objective(x, -me.weight.at(t).as_f64());
            }
        }
    }
    for t in 0..=spec.horizon {
        for (edge, ce) in net.comm_edges().iter().enumerate() {
            let ca = comm_active(&mut model, edge, t);
            if t > 0 {
                model.add_objective(ca, -ce.weight.at(t).as_f64());
            }
            for end in [ce.from, ce.to] {
                let mut e = LinExpr::new();
                e.add(ca, 1.0);
                for r in 0..spec.num_agents() {
                    e.add(model.var(VarKey::Z { r, s: end, t }), -1.0);
                }
                model.add_constraint(e, Cmp::Le, 0.0, TAG_COMM_ACTIVE);
            }
        }
    }
    Ok(model)
}

/// Adds the cut for `members` (a membership test over time-extended
/// vertices).
fn add_cut<W: Scalar>(spec: &ProblemSpec<W>, model: &mut MilpModel, members: impl Fn(TimeVertex) -> bool) {
    let net = &spec.net;
    let horizon = spec.horizon;
    let sinks = spec.snk.len() as f64;
    let mut e = LinExpr::new();
    for s in net.states() {
        if members(TimeVertex::new(s, horizon)) {
            for &j in &spec.snk {
                e.add(model.var(VarKey::Z { r: j, s, t: horizon }), 1.0);
            }
        }
    }
    for t in 0..=horizon {
        for (edge, me) in net.mobility_edges().iter().enumerate() {
            if t < horizon && !members(TimeVertex::new(me.from, t)) && members(TimeVertex::new(me.to, t + 1))
            {
                for r in 0..spec.num_agents() {
                    e.add(model.var(VarKey::X { r, edge, t }), -sinks);
                }
            }
        }
        for (edge, ce) in net.comm_edges().iter().enumerate() {
            if !members(TimeVertex::new(ce.from, t)) && members(TimeVertex::new(ce.to, t)) {
                e.add(comm_active(model, edge, t), -sinks);
            }
        }
    }
    model.add_constraint(e, Cmp::Le, 0.0, TAG_CUT);
}

fn needs_cuts<W>(spec: &ProblemSpec<W>) -> bool {
    !spec.src.is_empty() && !spec.snk.is_empty()
}

/// Number of candidate vertices the full enumeration would range over.
pub fn powerset_size<W: Scalar>(spec: &ProblemSpec<W>) -> usize {
    Candidates::new(spec).len()
}

/// Model with every non-redundant subset cut. Refused when more than
/// [`POWERSET_GUARD`] time-extended vertices can be occupied.
pub fn build_powerset_model<W: Scalar>(
    spec: &ProblemSpec<W>,
) -> Result<(MilpModel, CutConstraintSet), BaselineError> {
    let cand = Candidates::new(spec);
    if cand.len() > POWERSET_GUARD {
        return Err(BaselineError::TooLarge {
            vertices: cand.len(),
            guard: POWERSET_GUARD,
        });
    }
    let mut model = relaxed_model(spec)?;
    let mut set = CutConstraintSet {
        mode: CutMode::FullPowerset,
        subsets: Vec::new(),
    };
    if needs_cuts(spec) {
        for mask in cand.maximal_subsets() {
            let members: BTreeSet<TimeVertex> = cand.subset_vertices(mask).into_iter().collect();
            add_cut(spec, &mut model, |v| members.contains(&v));
            set.subsets.push(members.into_iter().collect());
        }
    }
    Ok((model, set))
}

/// Reads the relaxed model's plan; active communication arcs become events.
fn plan_of<W: Scalar>(spec: &ProblemSpec<W>, model: &MilpModel, res: &SolveResult) -> Option<PlanSolution> {
    let mut plan = extract_plan(spec, model, res)?;
    let values = res.values.as_ref()?;
    for (var, &v) in model.variables().iter().zip(values) {
        if let VarKey::CommActive { edge, t } = var.key {
            if v > 0.5 {
                let ce = &spec.net.comm_edges()[edge];
                plan.comm_events.push(FlowEvent {
                    t,
                    from: ce.from,
                    to: ce.to,
                    flow: FlowId::Agent(0),
                    amount: 1.0,
                });
            }
        }
    }
    Some(plan)
}

/// Sets of time-extended vertices that no source start reaches under `plan`,
/// one per source that misses some sink.
pub fn violated_subsets<W: Scalar>(spec: &ProblemSpec<W>, plan: &PlanSolution) -> Vec<Vec<TimeVertex>> {
    let horizon = spec.horizon;
    let mut found: BTreeSet<Vec<TimeVertex>> = BTreeSet::new();
    for &i in &spec.src {
        let holds = information_holdings(plan, &spec.net, plan.paths[i][0]);
        let missed = spec
            .snk
            .iter()
            .any(|&j| !holds[horizon][plan.paths[j][horizon].0]);
        if missed {
            let a: Vec<TimeVertex> = (0..=horizon)
                .flat_map(|t| spec.net.states().map(move |s| TimeVertex::new(s, t)))
                .filter(|v| !holds[v.t][v.state.0])
                .collect();
            found.insert(a);
        }
    }
    found.into_iter().collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdaptiveOutcome {
    pub result: SolveResult,
    pub plan: Option<PlanSolution>,
    pub iterations: usize,
    pub cuts: CutConstraintSet,
}

/// Solves without cuts, then repeatedly adds the cut of the unreached part of
/// the time-extended graph until every sink hears from every source.
pub fn solve_adaptive_powerset<W: Scalar>(
    spec: &ProblemSpec<W>,
    backend: &dyn Backend,
    limits: &Limits,
) -> Result<AdaptiveOutcome, BaselineError> {
    let start = Instant::now();
    let mut model = relaxed_model(spec)?;
    let mut cuts = CutConstraintSet {
        mode: CutMode::Adaptive,
        subsets: Vec::new(),
    };
    for iteration in 1..=ADAPTIVE_ITERATION_CAP {
        let mut step = *limits;
        if let Some(total) = limits.time_limit {
            let left = total - start.elapsed().as_secs_f64();
            if left <= 0.0 {
                let result = SolveResult::failed(SolveStatus::TimeLimit, start.elapsed().as_secs_f64());
                return Ok(AdaptiveOutcome {
                    result,
                    plan: None,
                    iterations: iteration - 1,
                    cuts,
                });
            }
            step.time_limit = Some(left);
        }
        let mut result = solve(&model, backend, &step);
        let plan = if result.status.has_solution() {
            plan_of(spec, &model, &result)
        } else {
            None
        };
        let Some(plan) = plan else {
            result.wall_time = start.elapsed().as_secs_f64();
            return Ok(AdaptiveOutcome {
                result,
                plan: None,
                iterations: iteration,
                cuts,
            });
        };
        let violated = if needs_cuts(spec) {
            violated_subsets(spec, &plan)
        } else {
            Vec::new()
        };
        if violated.is_empty() {
            result.wall_time = start.elapsed().as_secs_f64();
            return Ok(AdaptiveOutcome {
                result,
                plan: Some(plan),
                iterations: iteration,
                cuts,
            });
        }
        for a in violated {
            let members: BTreeSet<TimeVertex> = a.iter().copied().collect();
            add_cut(spec, &mut model, |v| members.contains(&v));
            cuts.subsets.push(a);
        }
    }
    Err(BaselineError::IterationCap(ADAPTIVE_ITERATION_CAP))
}

/// Solves the full powerset model and reads back its plan.
pub fn solve_powerset<W: Scalar>(
    spec: &ProblemSpec<W>,
    backend: &dyn Backend,
    limits: &Limits,
) -> Result<(SolveResult, Option<PlanSolution>, CutConstraintSet), BaselineError> {
    let start = Instant::now();
    let (model, cuts) = build_powerset_model(spec)?;
    let mut result = solve(&model, backend, limits);
    let plan = plan_of(spec, &model, &result);
    result.wall_time = start.elapsed().as_secs_f64();
    Ok((result, plan, cuts))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    Flow,
    Powerset,
    Adaptive,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Flow, Method::Powerset, Method::Adaptive];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Flow => "flow",
            Method::Powerset => "powerset",
            Method::Adaptive => "adaptive",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "flow" => Ok(Method::Flow),
            "powerset" => Ok(Method::Powerset),
            "adaptive" => Ok(Method::Adaptive),
            other => Err(format!("unknown method `{other}`")),
        }
    }
}

/// Line of `n` states, unit mobility cost, free communication between
/// neighbors, agents at `0`, `ceil(n/2)` and `n-1` sharing all-to-all over
/// `ceil(n/2)` steps.
pub fn line_instance(n: usize) -> Problem {
    assert!(n >= 2, "line instance needs two states");
    let names: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
    let mut b = NetworkBuilder::new().states(names.iter().cloned());
    for w in names.windows(2) {
        b = b
            .mobility_bidir(w[0].clone(), w[1].clone(), 1.0)
            .comm_bidir(w[0].clone(), w[1].clone(), 0.0);
    }
    let net = b.build(true).expect("line network is valid");
    let half = n.div_ceil(2);
    let agents = vec![StateId(0), StateId(half), StateId(n - 1)];
    let mut spec = ProblemSpec::new(net, agents, half);
    spec.src = [0, 1, 2].into();
    spec.snk = [0, 1, 2].into();
    spec
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub method: Method,
    pub n: usize,
    pub horizon: usize,
    pub status: String,
    pub wall_time: f64,
    pub objective: Option<f64>,
}

impl BenchRow {
    pub const HEADER: &'static str = "method,N,T,status,wall_time,objective";

    pub fn to_csv(&self) -> String {
        let objective = self.objective.map(|o| format!("{o}")).unwrap_or_default();
        format!(
            "{},{},{},{},{:.3},{}",
            self.method, self.n, self.horizon, self.status, self.wall_time, objective
        )
    }
}

/// Runs one method on the line instance of size `n`.
pub fn bench_one(method: Method, n: usize, backend: &dyn Backend, limits: &Limits) -> BenchRow {
    let spec = line_instance(n);
    let start = Instant::now();
    let (status, objective) = match method {
        Method::Flow => match crate::ilp::assemble(&spec) {
            Ok(model) => {
                let res = solve(&model, backend, limits);
                (res.status.label().to_string(), res.objective)
            }
            Err(e) => (format!("error: {e}"), None),
        },
        Method::Powerset => match solve_powerset(&spec, backend, limits) {
            Ok((res, _, _)) => (res.status.label().to_string(), res.objective),
            Err(BaselineError::TooLarge { .. }) => ("refused".to_string(), None),
            Err(e) => (format!("error: {e}"), None),
        },
        Method::Adaptive => match solve_adaptive_powerset(&spec, backend, limits) {
            Ok(out) => (out.result.status.label().to_string(), out.result.objective),
            Err(e) => (format!("error: {e}"), None),
        },
    };
    BenchRow {
        method,
        n,
        horizon: spec.horizon,
        status,
        wall_time: start.elapsed().as_secs_f64(),
        objective,
    }
}
