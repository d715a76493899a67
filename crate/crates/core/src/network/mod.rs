//! Mobility-communication network: states, directed mobility edges (`→`) and
//! directed communication edges (`⇝`), each with a time-indexed weight.

mod centrality;
mod io;
mod paths;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub use centrality::betweenness_centrality;
pub use io::{load_network, EdgeDoc, NetworkDoc};
pub use paths::{hop_distances, mobility_distances_from, mobility_distances_to};

/// Dense index of a state. Ordering follows the instance file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateId(pub usize);

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("duplicate state `{0}`")]
    DuplicateState(String),
    #[error("edge endpoint `{0}` is not a known state")]
    DanglingEndpoint(String),
    #[error("edge ({from}, {to}) has a negative or non-finite weight")]
    BadWeight { from: String, to: String },
    #[error("duplicate {kind} edge ({from}, {to})")]
    DuplicateEdge {
        kind: &'static str,
        from: String,
        to: String,
    },
    #[error("unknown state {0}")]
    UnknownState(String),
}

/// Weight `C(t, s, s')` of an edge: a constant default with optional per-step
/// overrides.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeWeight<W> {
    pub base: W,
    pub schedule: BTreeMap<usize, W>,
}

impl<W: Scalar> EdgeWeight<W> {
    pub fn constant(base: W) -> Self {
        EdgeWeight {
            base,
            schedule: BTreeMap::new(),
        }
    }

    pub fn at(&self, t: usize) -> W {
        self.schedule.get(&t).copied().unwrap_or(self.base)
    }

    fn is_valid(&self) -> bool {
        std::iter::once(&self.base)
            .chain(self.schedule.values())
            .all(|w| w.is_finite() && *w >= W::zero())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge<W> {
    pub from: StateId,
    pub to: StateId,
    pub weight: EdgeWeight<W>,
}

impl<W> Edge<W> {
    pub fn is_loop(&self) -> bool {
        self.from == self.to
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Pred,
    Succ,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Mobility,
    Comm,
    Both,
}

/// Validated, immutable network. Build one with [`NetworkBuilder`] or
/// [`load_network`].
#[derive(Clone, Debug, PartialEq)]
pub struct MobilityCommNetwork<W> {
    names: Vec<String>,
    index: HashMap<String, StateId>,
    mobility: Vec<Edge<W>>,
    comm: Vec<Edge<W>>,
    mob_out: Vec<Vec<usize>>,
    mob_in: Vec<Vec<usize>>,
    comm_out: Vec<Vec<usize>>,
    comm_in: Vec<Vec<usize>>,
    mob_lookup: HashMap<(StateId, StateId), usize>,
    comm_lookup: HashMap<(StateId, StateId), usize>,
    self_loops_added: bool,
}

#[derive(Clone, Debug, Default)]
pub struct NetworkBuilder<W> {
    states: Vec<String>,
    mobility: Vec<(String, String, EdgeWeight<W>)>,
    comm: Vec<(String, String, EdgeWeight<W>)>,
}

impl<W: Scalar> NetworkBuilder<W> {
    pub fn new() -> Self {
        NetworkBuilder {
            states: Vec::new(),
            mobility: Vec::new(),
            comm: Vec::new(),
        }
    }

    pub fn state(mut self, name: impl Into<String>) -> Self {
        self.states.push(name.into());
        self
    }

    pub fn states<I, S>(mut self, names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.states.extend(names.into_iter().map(Into::into));
        self
    }

    pub fn mobility(mut self, from: impl Into<String>, to: impl Into<String>, weight: W) -> Self {
        self.mobility
            .push((from.into(), to.into(), EdgeWeight::constant(weight)));
        self
    }

    pub fn mobility_weighted(
        mut self,
        from: impl Into<String>,
        to: impl Into<String>,
        weight: EdgeWeight<W>,
    ) -> Self {
        self.mobility.push((from.into(), to.into(), weight));
        self
    }

    /// Adds `a → b` and `b → a` with the same weight.
    pub fn mobility_bidir(self, a: impl Into<String>, b: impl Into<String>, weight: W) -> Self {
        let (a, b) = (a.into(), b.into());
        self.mobility(a.clone(), b.clone(), weight).mobility(b, a, weight)
    }

    pub fn comm(mut self, from: impl Into<String>, to: impl Into<String>, weight: W) -> Self {
        self.comm
            .push((from.into(), to.into(), EdgeWeight::constant(weight)));
        self
    }

    pub fn comm_weighted(
        mut self,
        from: impl Into<String>,
        to: impl Into<String>,
        weight: EdgeWeight<W>,
    ) -> Self {
        self.comm.push((from.into(), to.into(), weight));
        self
    }

    pub fn comm_bidir(self, a: impl Into<String>, b: impl Into<String>, weight: W) -> Self {
        let (a, b) = (a.into(), b.into());
        self.comm(a.clone(), b.clone(), weight).comm(b, a, weight)
    }

    /// Validates and freezes the network. With `self_loops` set, every state
    /// without a mobility self-loop gets a zero-cost one.
    pub fn build(self, self_loops: bool) -> Result<MobilityCommNetwork<W>, NetworkError> {
        if self.states.is_empty() {
            return Err(NetworkError::Parse("empty state list".into()));
        }
        let mut index = HashMap::with_capacity(self.states.len());
        for (i, name) in self.states.iter().enumerate() {
            if index.insert(name.clone(), StateId(i)).is_some() {
                return Err(NetworkError::DuplicateState(name.clone()));
            }
        }
        let resolve = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| NetworkError::DanglingEndpoint(name.to_string()))
        };

        let convert = |raw: Vec<(String, String, EdgeWeight<W>)>,
                       kind: &'static str|
         -> Result<(Vec<Edge<W>>, HashMap<(StateId, StateId), usize>), NetworkError> {
            let mut edges = Vec::with_capacity(raw.len());
            let mut lookup = HashMap::with_capacity(raw.len());
            for (from, to, weight) in raw {
                let (a, b) = (resolve(&from)?, resolve(&to)?);
                if !weight.is_valid() {
                    return Err(NetworkError::BadWeight { from, to });
                }
                if lookup.insert((a, b), edges.len()).is_some() {
                    return Err(NetworkError::DuplicateEdge { kind, from, to });
                }
                edges.push(Edge {
                    from: a,
                    to: b,
                    weight,
                });
            }
            Ok((edges, lookup))
        };

        let (mut mobility, mut mob_lookup) = convert(self.mobility, "mobility")?;
        let (comm, comm_lookup) = convert(self.comm, "communication")?;

        let n = self.states.len();
        let mut self_loops_added = false;
        if self_loops {
            for s in (0..n).map(StateId) {
                if !mob_lookup.contains_key(&(s, s)) {
                    mob_lookup.insert((s, s), mobility.len());
                    mobility.push(Edge {
                        from: s,
                        to: s,
                        weight: EdgeWeight::constant(W::zero()),
                    });
                    self_loops_added = true;
                }
            }
        }

        let adjacency = |edges: &[Edge<W>]| {
            let mut out = vec![Vec::new(); n];
            let mut inc = vec![Vec::new(); n];
            for (i, e) in edges.iter().enumerate() {
                out[e.from.0].push(i);
                inc[e.to.0].push(i);
            }
            (out, inc)
        };
        let (mob_out, mob_in) = adjacency(&mobility);
        let (comm_out, comm_in) = adjacency(&comm);

        Ok(MobilityCommNetwork {
            names: self.states,
            index,
            mobility,
            comm,
            mob_out,
            mob_in,
            comm_out,
            comm_in,
            mob_lookup,
            comm_lookup,
            self_loops_added,
        })
    }
}

impl<W: Scalar> MobilityCommNetwork<W> {
    pub fn num_states(&self) -> usize {
        self.names.len()
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> + '_ {
        (0..self.names.len()).map(StateId)
    }

    pub fn name(&self, s: StateId) -> &str {
        &self.names[s.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn state_id(&self, name: &str) -> Result<StateId, NetworkError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| NetworkError::UnknownState(name.to_string()))
    }

    pub fn contains(&self, s: StateId) -> bool {
        s.0 < self.names.len()
    }

    fn check(&self, s: StateId) -> Result<(), NetworkError> {
        if self.contains(s) {
            Ok(())
        } else {
            Err(NetworkError::UnknownState(s.to_string()))
        }
    }

    pub fn mobility_edges(&self) -> &[Edge<W>] {
        &self.mobility
    }

    pub fn comm_edges(&self) -> &[Edge<W>] {
        &self.comm
    }

    pub fn self_loops_added(&self) -> bool {
        self.self_loops_added
    }

    /// Indices (into [`Self::mobility_edges`]) of edges leaving `s`.
    pub fn mobility_out(&self, s: StateId) -> &[usize] {
        &self.mob_out[s.0]
    }

    pub fn mobility_in(&self, s: StateId) -> &[usize] {
        &self.mob_in[s.0]
    }

    pub fn comm_out(&self, s: StateId) -> &[usize] {
        &self.comm_out[s.0]
    }

    pub fn comm_in(&self, s: StateId) -> &[usize] {
        &self.comm_in[s.0]
    }

    pub fn mobility_edge(&self, from: StateId, to: StateId) -> Option<usize> {
        self.mob_lookup.get(&(from, to)).copied()
    }

    pub fn comm_edge(&self, from: StateId, to: StateId) -> Option<usize> {
        self.comm_lookup.get(&(from, to)).copied()
    }

    pub fn has_mobility(&self, from: StateId, to: StateId) -> bool {
        self.mob_lookup.contains_key(&(from, to))
    }

    pub fn has_comm(&self, from: StateId, to: StateId) -> bool {
        self.comm_lookup.contains_key(&(from, to))
    }

    /// `C→⁻`, `C⇝⁻`, `C→⁺`, `C⇝⁺` and their unions.
    pub fn neighbors(
        &self,
        s: StateId,
        direction: Direction,
        relation: Relation,
    ) -> Result<BTreeSet<StateId>, NetworkError> {
        self.check(s)?;
        let mut out = BTreeSet::new();
        let pick = |edges: &[Edge<W>], idx: &[usize], out: &mut BTreeSet<StateId>| {
            for &i in idx {
                out.insert(match direction {
                    Direction::Succ => edges[i].to,
                    Direction::Pred => edges[i].from,
                });
            }
        };
        if matches!(relation, Relation::Mobility | Relation::Both) {
            let idx = match direction {
                Direction::Succ => &self.mob_out[s.0],
                Direction::Pred => &self.mob_in[s.0],
            };
            pick(&self.mobility, idx, &mut out);
        }
        if matches!(relation, Relation::Comm | Relation::Both) {
            let idx = match direction {
                Direction::Succ => &self.comm_out[s.0],
                Direction::Pred => &self.comm_in[s.0],
            };
            pick(&self.comm, idx, &mut out);
        }
        Ok(out)
    }

    /// Largest out-degree over mobility edges (self-loops included).
    pub fn max_mobility_out_degree(&self) -> usize {
        self.mob_out.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn time_extended(&self, horizon: usize) -> TimeExtendedGraph {
        let mut mobility_arcs = Vec::with_capacity(horizon * self.mobility.len());
        for t in 0..horizon {
            for e in &self.mobility {
                mobility_arcs.push((TimeVertex::new(e.from, t), TimeVertex::new(e.to, t + 1)));
            }
        }
        let mut comm_arcs = Vec::with_capacity((horizon + 1) * self.comm.len());
        for t in 0..=horizon {
            for e in &self.comm {
                comm_arcs.push((TimeVertex::new(e.from, t), TimeVertex::new(e.to, t)));
            }
        }
        TimeExtendedGraph {
            horizon,
            num_states: self.num_states(),
            mobility_arcs,
            comm_arcs,
        }
    }

    /// Shortest weighted mobility distance using the `t = 0` weights.
    pub fn shortest_mobility_distance(&self, from: StateId, to: StateId) -> Result<Option<W>, NetworkError> {
        self.check(from)?;
        self.check(to)?;
        Ok(mobility_distances_from(self, from)[to.0])
    }

    /// Induced sub-network on `keep`, in the order given. Returns the new
    /// network and the map from sub-network ids back to ids in `self`.
    pub fn induced(&self, keep: &[StateId]) -> (MobilityCommNetwork<W>, Vec<StateId>) {
        let member: HashMap<StateId, ()> = keep.iter().map(|&s| (s, ())).collect();
        let mut b = NetworkBuilder::new().states(keep.iter().map(|&s| self.names[s.0].clone()));
        for e in &self.mobility {
            if member.contains_key(&e.from) && member.contains_key(&e.to) {
                b = b.mobility_weighted(
                    self.names[e.from.0].clone(),
                    self.names[e.to.0].clone(),
                    e.weight.clone(),
                );
            }
        }
        for e in &self.comm {
            if member.contains_key(&e.from) && member.contains_key(&e.to) {
                b = b.comm_weighted(
                    self.names[e.from.0].clone(),
                    self.names[e.to.0].clone(),
                    e.weight.clone(),
                );
            }
        }
        let net = b
            .build(false)
            .expect("induced sub-network of a valid network is valid");
        (net, keep.to_vec())
    }

    /// Graphviz rendering; mobility edges solid, communication edges dashed.
    pub fn to_dot(&self) -> String {
        self.to_dot_with(|_| None)
    }

    /// Like [`Self::to_dot`] with an optional fill color per state.
    pub fn to_dot_with(&self, color: impl Fn(StateId) -> Option<String>) -> String {
        let mut out = String::from("digraph network {\n");
        for s in self.states() {
            match color(s) {
                Some(c) => out.push_str(&format!(
                    "  \"{}\" [style=filled, fillcolor=\"{}\"];\n",
                    self.name(s),
                    c
                )),
                None => out.push_str(&format!("  \"{}\";\n", self.name(s))),
            }
        }
        for e in &self.mobility {
            out.push_str(&format!(
                "  \"{}\" -> \"{}\" [label=\"{}\"];\n",
                self.name(e.from),
                self.name(e.to),
                e.weight.base
            ));
        }
        for e in &self.comm {
            out.push_str(&format!(
                "  \"{}\" -> \"{}\" [style=dashed, label=\"{}\"];\n",
                self.name(e.from),
                self.name(e.to),
                e.weight.base
            ));
        }
        out.push_str("}\n");
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TimeVertex {
    pub state: StateId,
    pub t: usize,
}

impl TimeVertex {
    pub fn new(state: StateId, t: usize) -> Self {
        TimeVertex { state, t }
    }
}

/// Layered copy of a network: mobility arcs cross one layer, communication
/// arcs stay within a layer.
#[derive(Clone, Debug)]
pub struct TimeExtendedGraph {
    pub horizon: usize,
    pub num_states: usize,
    pub mobility_arcs: Vec<(TimeVertex, TimeVertex)>,
    pub comm_arcs: Vec<(TimeVertex, TimeVertex)>,
}

impl TimeExtendedGraph {
    pub fn num_vertices(&self) -> usize {
        self.num_states * (self.horizon + 1)
    }

    pub fn vertices(&self) -> impl Iterator<Item = TimeVertex> + '_ {
        (0..=self.horizon)
            .flat_map(move |t| (0..self.num_states).map(move |s| TimeVertex::new(StateId(s), t)))
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::Network;

    /// Four-state line with bidirectional mobility and communication between
    /// neighbours.
    pub(crate) fn line(n: usize) -> Network {
        let mut b = NetworkBuilder::new().states((0..n).map(|i| format!("s{i}")));
        for i in 0..n.saturating_sub(1) {
            b = b
                .mobility_bidir(format!("s{i}"), format!("s{}", i + 1), 1.0)
                .comm_bidir(format!("s{i}"), format!("s{}", i + 1), 0.0);
        }
        b.build(true).unwrap()
    }

    #[test]
    fn line_graph_counts() {
        let net = line(4);
        assert_eq!(net.num_states(), 4);
        assert_eq!(net.mobility_edges().len(), 10);
        assert_eq!(net.comm_edges().len(), 6);
        assert!(net.self_loops_added());
    }

    #[test]
    fn single_state_gets_self_loop() {
        let net: Network = NetworkBuilder::new().state("a").build(true).unwrap();
        assert_eq!(net.mobility_edges().len(), 1);
        assert!(net.mobility_edges()[0].is_loop());
    }

    #[test]
    fn opt_out_of_self_loops() {
        let net: Network = NetworkBuilder::new()
            .states(["a", "b"])
            .mobility("a", "b", 1.0)
            .build(false)
            .unwrap();
        assert_eq!(net.mobility_edges().len(), 1);
        assert!(!net.self_loops_added());
    }

    #[test]
    fn rejects_bad_input() {
        let empty: Result<Network, _> = NetworkBuilder::new().build(true);
        assert!(matches!(empty, Err(NetworkError::Parse(_))));
        let dangling: Result<Network, _> = NetworkBuilder::new()
            .state("a")
            .mobility("a", "b", 1.0)
            .build(true);
        assert_eq!(dangling.unwrap_err(), NetworkError::DanglingEndpoint("b".into()));
        let negative: Result<Network, _> = NetworkBuilder::new()
            .states(["a", "b"])
            .comm("a", "b", -1.0)
            .build(true);
        assert!(matches!(negative, Err(NetworkError::BadWeight { .. })));
        let dup: Result<Network, _> = NetworkBuilder::new().states(["a", "a"]).build(true);
        assert!(matches!(dup, Err(NetworkError::DuplicateState(_))));
    }

    #[test]
    fn neighbor_sets() {
        let net = line(4);
        let s1 = StateId(1);
        let succ = net.neighbors(s1, Direction::Succ, Relation::Mobility).unwrap();
        assert_eq!(succ, [0, 1, 2].map(StateId).into_iter().collect());
        let comm = net.neighbors(s1, Direction::Pred, Relation::Comm).unwrap();
        assert_eq!(comm, [0, 2].map(StateId).into_iter().collect());
        assert!(net
            .neighbors(StateId(9), Direction::Succ, Relation::Both)
            .is_err());

        let isolated: Network = NetworkBuilder::new().states(["a"]).build(true).unwrap();
        for d in [Direction::Pred, Direction::Succ] {
            assert!(isolated
                .neighbors(StateId(0), d, Relation::Comm)
                .unwrap()
                .is_empty());
        }

        // comm-only pair: both/pred picks up the comm predecessor only
        let pair: Network = NetworkBuilder::new()
            .states(["a", "b"])
            .comm_bidir("a", "b", 1.0)
            .build(false)
            .unwrap();
        let both = pair
            .neighbors(StateId(0), Direction::Pred, Relation::Both)
            .unwrap();
        assert_eq!(both, [StateId(1)].into_iter().collect());
    }

    #[test]
    fn time_extension_counts() {
        let net = line(4);
        let te = net.time_extended(2);
        assert_eq!(te.num_vertices(), 12);
        assert_eq!(te.vertices().count(), 12);
        assert_eq!(te.mobility_arcs.len(), 2 * 10);
        assert_eq!(te.comm_arcs.len(), 3 * 6);
        assert!(te.mobility_arcs.iter().all(|(a, b)| b.t == a.t + 1));
        assert!(te.comm_arcs.iter().all(|(a, b)| a.t == b.t));

        let flat = net.time_extended(0);
        assert!(flat.mobility_arcs.is_empty());
        assert!(flat.comm_arcs.iter().all(|(a, _)| a.t == 0));
    }

    #[test]
    fn time_indexed_weights() {
        let mut w = EdgeWeight::constant(1.0);
        w.schedule.insert(3, 5.0);
        assert_eq!(w.at(0), 1.0);
        assert_eq!(w.at(3), 5.0);
    }

    #[test]
    fn induced_subnetwork_keeps_internal_edges() {
        let net = line(4);
        let (sub, map) = net.induced(&[StateId(1), StateId(2)]);
        assert_eq!(sub.num_states(), 2);
        assert_eq!(map, vec![StateId(1), StateId(2)]);
        // two self-loops + s1<->s2
        assert_eq!(sub.mobility_edges().len(), 4);
        assert_eq!(sub.comm_edges().len(), 2);
    }

    #[test]
    fn dot_export_marks_comm_dashed() {
        let dot = line(2).to_dot();
        assert!(dot.starts_with("digraph"));
        assert_eq!(dot.matches("dashed").count(), 2);
    }
}
