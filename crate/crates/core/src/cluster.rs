//! Cluster hierarchy for large instances: agents are grouped spectrally,
//! state clusters grow around them, and each non-master cluster hangs off a
//! parent through a submaster reachable by one communication hop.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{mobility_distances_to, MobilityCommNetwork, StateId};
use crate::scalar::Scalar;

/// Similarity of co-located agents, as a multiple of the largest finite
/// entry.
pub const CAP_FACTOR: f64 = 10.0;
const KMEANS_ROUNDS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("cluster count {k} must be between 1 and the agent count {agents}")]
    BadClusterCount { k: usize, agents: usize },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClusterViolation {
    #[error("state {0:?} is in {1} clusters")]
    NotPartition(StateId, usize),
    #[error("cluster {0} is not connected by mobility edges")]
    Disconnected(usize),
    #[error("the master's start is outside the master cluster")]
    MasterOutside,
    #[error("cluster {0} has no parent or submaster")]
    Orphan(usize),
    #[error("submaster of cluster {0} does not start inside it")]
    SubmasterOutside(usize),
    #[error("no communication edge from the parent of cluster {0} to its submaster")]
    NoCommEdge(usize),
    #[error("parent links of cluster {0} do not lead to the master cluster")]
    ParentCycle(usize),
}

/// Cluster `0` is the master cluster.
#[derive(Clone, Debug, PartialEq)]
pub struct Clustering {
    pub clusters: Vec<BTreeSet<StateId>>,
    pub agent_assignment: Vec<usize>,
    pub parent: Vec<Option<usize>>,
    pub submaster: Vec<Option<usize>>,
    /// Free states assigned by the growth loop of the final pass.
    pub growth_iterations: usize,
    /// Split, merge and repair rounds taken by [`cluster_with_retry`].
    pub restarts: usize,
}

impl Clustering {
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn cluster_of(&self, s: StateId) -> Option<usize> {
        self.clusters.iter().position(|c| c.contains(&s))
    }

    pub fn agents_of(&self, c: usize) -> Vec<usize> {
        (0..self.agent_assignment.len())
            .filter(|&r| self.agent_assignment[r] == c)
            .collect()
    }

    pub fn children(&self, c: usize) -> Vec<usize> {
        (0..self.len()).filter(|&d| self.parent[d] == Some(c)).collect()
    }

    /// Clusters ordered so that every parent precedes its children.
    pub fn top_down(&self) -> Vec<usize> {
        let mut order = vec![0];
        let mut i = 0;
        while i < order.len() {
            order.extend(self.children(order[i]));
            i += 1;
        }
        order
    }

    pub fn depth(&self, c: usize) -> usize {
        let mut d = 0;
        let mut cur = c;
        while let Some(p) = self.parent[cur] {
            d += 1;
            cur = p;
            if d > self.len() {
                break;
            }
        }
        d
    }

    /// Checks the partition, connectivity, master placement and submaster
    /// requirements.
    pub fn check<W: Scalar>(
        &self,
        net: &MobilityCommNetwork<W>,
        initial: &[StateId],
        master: usize,
    ) -> Result<(), ClusterViolation> {
        for s in net.states() {
            let n = self.clusters.iter().filter(|c| c.contains(&s)).count();
            if n != 1 {
                return Err(ClusterViolation::NotPartition(s, n));
            }
        }
        for (c, states) in self.clusters.iter().enumerate() {
            if components(net, states).len() != 1 {
                return Err(ClusterViolation::Disconnected(c));
            }
        }
        if !self.clusters[0].contains(&initial[master]) {
            return Err(ClusterViolation::MasterOutside);
        }
        for c in 1..self.len() {
            let (Some(p), Some(r)) = (self.parent[c], self.submaster[c]) else {
                return Err(ClusterViolation::Orphan(c));
            };
            if !self.clusters[c].contains(&initial[r]) {
                return Err(ClusterViolation::SubmasterOutside(c));
            }
            if !self.clusters[p].iter().any(|&s| net.has_comm(s, initial[r])) {
                return Err(ClusterViolation::NoCommEdge(c));
            }
            if self.depth(c) > self.len() {
                return Err(ClusterViolation::ParentCycle(c));
            }
        }
        if self.parent[0].is_some() {
            return Err(ClusterViolation::ParentCycle(0));
        }
        Ok(())
    }

    pub fn to_doc<W: Scalar>(&self, net: &MobilityCommNetwork<W>, k_requested: usize) -> ClusteringDoc {
        ClusteringDoc {
            k_requested,
            spectral: "normalized".into(),
            cap_factor: CAP_FACTOR,
            clusters: (0..self.len())
                .map(|c| ClusterDoc {
                    id: c,
                    states: self.clusters[c]
                        .iter()
                        .map(|&s| net.name(s).to_string())
                        .collect(),
                    agents: self.agents_of(c),
                    parent: self.parent[c],
                    submaster: self.submaster[c],
                })
                .collect(),
        }
    }

    /// DOT drawing with states filled by cluster.
    pub fn to_dot<W: Scalar>(&self, net: &MobilityCommNetwork<W>) -> String {
        net.to_dot_with(|s| self.cluster_of(s).map(palette))
    }
}

const PALETTE: [&str; 12] = [
    "#e41a1c", "#377eb8", "#4daf4a", "#984ea3", "#ff7f00", "#ffff33", "#a65628", "#f781bf", "#999999",
    "#66c2a5", "#fc8d62", "#8da0cb",
];

pub(crate) fn palette(i: usize) -> String {
    PALETTE[i % PALETTE.len()].to_string()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusteringDoc {
    pub k_requested: usize,
    pub spectral: String,
    pub cap_factor: f64,
    pub clusters: Vec<ClusterDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterDoc {
    pub id: usize,
    pub states: Vec<String>,
    pub agents: Vec<usize>,
    pub parent: Option<usize>,
    pub submaster: Option<usize>,
}

/// Undirected mobility neighbors of `s` inside `within`.
fn neighbors_in<'a, W: Scalar>(
    net: &'a MobilityCommNetwork<W>,
    s: StateId,
    within: &'a BTreeSet<StateId>,
) -> impl Iterator<Item = StateId> + 'a {
    let out = net.mobility_out(s).iter().map(|&e| net.mobility_edges()[e].to);
    let inn = net.mobility_in(s).iter().map(|&e| net.mobility_edges()[e].from);
    out.chain(inn).filter(move |v| *v != s && within.contains(v))
}

/// Connected pieces of `states` under undirected mobility edges.
pub fn components<W: Scalar>(
    net: &MobilityCommNetwork<W>,
    states: &BTreeSet<StateId>,
) -> Vec<BTreeSet<StateId>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for &s in states {
        if !seen.insert(s) {
            continue;
        }
        let mut piece = BTreeSet::from([s]);
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for v in neighbors_in(net, u, states) {
                if seen.insert(v) {
                    piece.insert(v);
                    queue.push_back(v);
                }
            }
        }
        out.push(piece);
    }
    out
}

/// Inverse symmetrized shortest mobility distance between agent starts.
pub fn similarity_matrix<W: Scalar>(net: &MobilityCommNetwork<W>, initial: &[StateId]) -> Vec<Vec<f64>> {
    let r = initial.len();
    let to: Vec<Vec<Option<W>>> = initial.iter().map(|&s| mobility_distances_to(net, s)).collect();
    let mut a = vec![vec![0.0; r]; r];
    let mut colocated = Vec::new();
    let mut largest: f64 = 0.0;
    for i in 0..r {
        for j in (i + 1)..r {
            let d = match (to[j][initial[i].0], to[i][initial[j].0]) {
                (Some(x), Some(y)) => Some(x.min(y)),
                (x, y) => x.or(y),
            };
            match d.map(Scalar::as_f64) {
                Some(d) if d > 0.0 => {
                    a[i][j] = 1.0 / d;
                    a[j][i] = 1.0 / d;
                    largest = largest.max(1.0 / d);
                }
                Some(_) => colocated.push((i, j)),
                None => {}
            }
        }
    }
    let cap = if largest > 0.0 { CAP_FACTOR * largest } else { 1.0 };
    for (i, j) in colocated {
        a[i][j] = cap;
        a[j][i] = cap;
    }
    a
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd iterations from a farthest-first start whose first pick comes from
/// `seed`. Every label in `0..k` ends up used.
fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Vec<usize> {
    let n = points.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<Vec<f64>> = vec![points[rng.gen_range(0..n)].clone()];
    while centers.len() < k {
        let far = (0..n)
            .max_by(|&a, &b| {
                let da = centers
                    .iter()
                    .map(|c| dist2(&points[a], c))
                    .fold(f64::INFINITY, f64::min);
                let db = centers
                    .iter()
                    .map(|c| dist2(&points[b], c))
                    .fold(f64::INFINITY, f64::min);
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .expect("at least one point");
        centers.push(points[far].clone());
    }
    let nearest = |p: &[f64], centers: &[Vec<f64>]| {
        (0..centers.len())
            .min_by(|&a, &b| {
                dist2(p, &centers[a])
                    .total_cmp(&dist2(p, &centers[b]))
                    .then(a.cmp(&b))
            })
            .expect("k >= 1")
    };
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
    for _ in 0..KMEANS_ROUNDS {
        fill_empty(points, &centers, &mut labels, k);
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = (0..n).filter(|&i| labels[i] == c).map(|i| &points[i]).collect();
            for (d, x) in center.iter_mut().enumerate() {
                *x = members.iter().map(|p| p[d]).sum::<f64>() / members.len() as f64;
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    fill_empty(points, &centers, &mut labels, k);
    labels
}

/// Moves the point farthest from its center into each empty cluster.
fn fill_empty(points: &[Vec<f64>], centers: &[Vec<f64>], labels: &mut [usize], k: usize) {
    for c in 0..k {
        if labels.contains(&c) {
            continue;
        }
        let mut sizes = vec![0usize; k];
        for &l in labels.iter() {
            sizes[l] += 1;
        }
        let donor = (0..points.len())
            .filter(|&i| sizes[labels[i]] > 1)
            .max_by(|&a, &b| {
                dist2(&points[a], &centers[labels[a]])
                    .total_cmp(&dist2(&points[b], &centers[labels[b]]))
                    .then(b.cmp(&a))
            })
            .expect("more points than clusters");
        labels[donor] = c;
    }
}

/// Renumbers labels so the master's group is `0` and the rest follow in
/// order of their smallest agent.
fn canonical(labels: &[usize], master: usize) -> Vec<usize> {
    let mut map = BTreeMap::new();
    map.insert(labels[master], 0);
    for &l in labels {
        let next = map.len();
        map.entry(l).or_insert(next);
    }
    labels.iter().map(|l| map[l]).collect()
}

/// Normalized spectral clustering of agents: bottom-`k` eigenvectors of the
/// symmetric normalized Laplacian, rows scaled to unit length, then k-means.
/// The master's group is cluster `0`.
pub fn spectral_cluster_agents(
    a: &[Vec<f64>],
    k: usize,
    master: usize,
    seed: u64,
) -> Result<Vec<usize>, ClusterError> {
    let r = a.len();
    if k == 0 || k > r {
        return Err(ClusterError::BadClusterCount { k, agents: r });
    }
    if k == 1 {
        return Ok(vec![0; r]);
    }
    let inv_sqrt: Vec<f64> = a
        .iter()
        .map(|row| {
            let d: f64 = row.iter().sum();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let lap = DMatrix::from_fn(r, r, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - inv_sqrt[i] * a[i][j] * inv_sqrt[j]
    });
    let eig = SymmetricEigen::new(lap);
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]).then(x.cmp(&y)));
    let points: Vec<Vec<f64>> = (0..r)
        .map(|i| {
            let row: Vec<f64> = order[..k].iter().map(|&c| eig.eigenvectors[(i, c)]).collect();
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                row.iter().map(|x| x / norm).collect()
            } else {
                row
            }
        })
        .collect();
    Ok(canonical(&kmeans(&points, k, seed), master))
}

/// Result of one growth pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Growth {
    pub clustering: Clustering,
    /// Clusters whose states are not mobility-connected.
    pub split_request: Vec<usize>,
    /// Clusters never activated.
    pub dormant: Vec<usize>,
}

/// One pass of cluster growth. Each cluster starts from its agents' initial
/// states (a start shared by agents of several clusters goes to the lowest
/// cluster id, and those agents move with it). Only the master cluster is
/// active at first. Each step hands the free state nearest to an agent of an
/// active cluster to that cluster; a state with a communication edge to the
/// start of an agent in an inactive cluster activates that cluster with the
/// agent as submaster.
pub fn grow_state_clusters<W: Scalar>(
    net: &MobilityCommNetwork<W>,
    initial: &[StateId],
    labels: &[usize],
    master: usize,
) -> Growth {
    let n = net.num_states();
    let labels = merge_shared_starts(initial, &canonical(labels, master));
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let agents_of: Vec<Vec<usize>> = (0..k)
        .map(|c| (0..initial.len()).filter(|&r| labels[r] == c).collect())
        .collect();

    // nearest[c][s]: distance from s to the closest start of an agent in c
    let mut to_start: BTreeMap<StateId, Vec<Option<W>>> = BTreeMap::new();
    for &s0 in initial {
        to_start
            .entry(s0)
            .or_insert_with(|| mobility_distances_to(net, s0));
    }
    let nearest: Vec<Vec<Option<f64>>> = agents_of
        .iter()
        .map(|members| {
            (0..n)
                .map(|s| {
                    members
                        .iter()
                        .filter_map(|&r| to_start[&initial[r]][s].map(Scalar::as_f64))
                        .min_by(f64::total_cmp)
                })
                .collect()
        })
        .collect();

    let mut owner: Vec<Option<usize>> = vec![None; n];
    for (r, &s0) in initial.iter().enumerate() {
        owner[s0.0].get_or_insert(labels[r]);
    }
    let mut active = vec![false; k];
    let mut parent = vec![None; k];
    let mut submaster = vec![None; k];
    let mut pending: VecDeque<StateId> = VecDeque::new();

    let activate =
        |c: usize, active: &mut Vec<bool>, pending: &mut VecDeque<StateId>, owner: &[Option<usize>]| {
            active[c] = true;
            pending.extend((0..n).filter(|&s| owner[s] == Some(c)).map(StateId));
        };
    activate(0, &mut active, &mut pending, &owner);

    let mut iterations = 0;
    loop {
        // activations triggered by newly owned states
        while let Some(s) = pending.pop_front() {
            let c = owner[s.0].expect("pending states are owned");
            for &e in net.comm_out(s) {
                let to = net.comm_edges()[e].to;
                for d in 0..k {
                    if active[d] {
                        continue;
                    }
                    let qualifying: Vec<usize> = agents_of[d]
                        .iter()
                        .copied()
                        .filter(|&r| initial[r] == to)
                        .collect();
                    if qualifying.is_empty() {
                        continue;
                    }
                    let sub = pick_submaster(&qualifying, c, &owner, initial, &to_start);
                    parent[d] = Some(c);
                    submaster[d] = Some(sub);
                    activate(d, &mut active, &mut pending, &owner);
                }
            }
        }
        let free: Vec<usize> = (0..n).filter(|&s| owner[s].is_none()).collect();
        if free.is_empty() {
            break;
        }
        let mut best: Option<(f64, usize, usize)> = None;
        for &s in &free {
            for c in (0..k).filter(|&c| active[c]) {
                if let Some(d) = nearest[c][s] {
                    let key = (d, c, s);
                    if best.is_none_or(|b| (key.0, key.1, key.2) < b) {
                        best = Some(key);
                    }
                }
            }
        }
        let (s, c) = match best {
            Some((_, c, s)) => (s, c),
            None => {
                let s = free[0];
                let c = fallback_cluster(net, StateId(s), &owner).unwrap_or(0);
                log::warn!(
                    "state {} is unreachable from active clusters; assigned to cluster {c}",
                    net.name(StateId(s))
                );
                (s, c)
            }
        };
        owner[s] = Some(c);
        iterations += 1;
        if active[c] {
            pending.push_back(StateId(s));
        }
    }

    let mut clusters = vec![BTreeSet::new(); k];
    for s in 0..n {
        if let Some(c) = owner[s] {
            clusters[c].insert(StateId(s));
        }
    }
    let split_request = (0..k)
        .filter(|&c| components(net, &clusters[c]).len() > 1)
        .collect();
    let dormant = (1..k).filter(|&c| !active[c]).collect();
    Growth {
        clustering: Clustering {
            clusters,
            agent_assignment: labels,
            parent,
            submaster,
            growth_iterations: iterations,
            restarts: 0,
        },
        split_request,
        dormant,
    }
}

/// Agents sharing a start join the lowest cluster among them.
fn merge_shared_starts(initial: &[StateId], labels: &[usize]) -> Vec<usize> {
    let mut by_start: BTreeMap<StateId, usize> = BTreeMap::new();
    for (r, &s0) in initial.iter().enumerate() {
        let e = by_start.entry(s0).or_insert(labels[r]);
        *e = (*e).min(labels[r]);
    }
    let merged: Vec<usize> = initial.iter().map(|s0| by_start[s0]).collect();
    // keep labels dense
    let used: BTreeSet<usize> = merged.iter().copied().collect();
    let dense: BTreeMap<usize, usize> = used.into_iter().enumerate().map(|(i, l)| (l, i)).collect();
    merged.iter().map(|l| dense[l]).collect()
}

/// Agent among `qualifying` whose start is nearest to cluster `c`.
fn pick_submaster<W: Scalar>(
    qualifying: &[usize],
    c: usize,
    owner: &[Option<usize>],
    initial: &[StateId],
    to_start: &BTreeMap<StateId, Vec<Option<W>>>,
) -> usize {
    let dist = |r: usize| {
        (0..owner.len())
            .filter(|&s| owner[s] == Some(c))
            .filter_map(|s| to_start[&initial[r]][s].map(Scalar::as_f64))
            .fold(f64::INFINITY, f64::min)
    };
    *qualifying
        .iter()
        .min_by(|&&a, &&b| dist(a).total_cmp(&dist(b)).then(a.cmp(&b)))
        .expect("qualifying is non-empty")
}

/// Owner of the nearest owned state by undirected hop count.
fn fallback_cluster<W: Scalar>(
    net: &MobilityCommNetwork<W>,
    s: StateId,
    owner: &[Option<usize>],
) -> Option<usize> {
    let all: BTreeSet<StateId> = net.states().collect();
    let mut seen = BTreeSet::from([s]);
    let mut queue = VecDeque::from([s]);
    while let Some(u) = queue.pop_front() {
        if let Some(c) = owner[u.0] {
            return Some(c);
        }
        for v in neighbors_in(net, u, &all) {
            if seen.insert(v) {
                queue.push_back(v);
            }
        }
    }
    None
}

/// Parent links over a fixed partition. A recorded link is kept while it is
/// still valid; otherwise the lowest reached cluster with a communication
/// edge into the start of one of the cluster's agents becomes the parent.
/// Returns the clusters that no chain from the master reaches.
fn relink<W: Scalar>(net: &MobilityCommNetwork<W>, initial: &[StateId], cl: &mut Clustering) -> Vec<usize> {
    let k = cl.len();
    let valid =
        |p: usize, r: usize, cl: &Clustering| cl.clusters[p].iter().any(|&s| net.has_comm(s, initial[r]));
    let mut reached = vec![false; k];
    reached[0] = true;
    cl.parent[0] = None;
    cl.submaster[0] = None;
    let mut changed = true;
    while changed {
        changed = false;
        for c in 1..k {
            if reached[c] {
                continue;
            }
            let agents = cl.agents_of(c);
            let keep = match (cl.parent[c], cl.submaster[c]) {
                (Some(p), Some(r)) => reached[p] && agents.contains(&r) && valid(p, r, cl),
                _ => false,
            };
            if keep {
                reached[c] = true;
                changed = true;
                continue;
            }
            let found = (0..k)
                .filter(|&p| reached[p])
                .find_map(|p| agents.iter().copied().find(|&r| valid(p, r, cl)).map(|r| (p, r)));
            if let Some((p, r)) = found {
                cl.parent[c] = Some(p);
                cl.submaster[c] = Some(r);
                reached[c] = true;
                changed = true;
            }
        }
    }
    (1..k).filter(|&c| !reached[c]).collect()
}

/// Hands every piece of a cluster that holds none of its agents' starts to
/// the neighboring cluster sharing the most mobility edges with it.
fn absorb_orphan_pieces<W: Scalar>(net: &MobilityCommNetwork<W>, initial: &[StateId], cl: &mut Clustering) {
    let all: BTreeSet<StateId> = net.states().collect();
    loop {
        let mut moved = false;
        for c in 0..cl.len() {
            let starts: BTreeSet<StateId> = cl.agents_of(c).iter().map(|&r| initial[r]).collect();
            for piece in components(net, &cl.clusters[c]) {
                if piece.iter().any(|s| starts.contains(s)) {
                    continue;
                }
                let mut border: BTreeMap<usize, usize> = BTreeMap::new();
                for &s in &piece {
                    for v in neighbors_in(net, s, &all) {
                        if let Some(d) = cl.cluster_of(v).filter(|&d| d != c) {
                            *border.entry(d).or_default() += 1;
                        }
                    }
                }
                let Some((&d, _)) = border.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))) else {
                    continue;
                };
                for s in &piece {
                    cl.clusters[c].remove(s);
                }
                cl.clusters[d].extend(piece);
                moved = true;
            }
        }
        if !moved {
            return;
        }
    }
}

/// Relabels agents of each cluster in `split` by the piece of the cluster
/// holding their start. Returns whether any cluster was divided.
fn split_labels<W: Scalar>(
    net: &MobilityCommNetwork<W>,
    initial: &[StateId],
    growth: &Growth,
    labels: &mut Vec<usize>,
) -> bool {
    let cl = &growth.clustering;
    *labels = cl.agent_assignment.clone();
    let mut next = cl.len();
    let mut divided = false;
    for &c in &growth.split_request {
        let pieces = components(net, &cl.clusters[c]);
        let mut piece_label: BTreeMap<usize, usize> = BTreeMap::new();
        for r in cl.agents_of(c) {
            let piece = pieces
                .iter()
                .position(|p| p.contains(&initial[r]))
                .expect("starts are owned");
            let first = piece_label.is_empty();
            let l = *piece_label.entry(piece).or_insert_with(|| {
                if first {
                    c
                } else {
                    next += 1;
                    next - 1
                }
            });
            labels[r] = l;
        }
        divided |= piece_label.len() > 1;
    }
    divided
}

/// Agent clustering followed by growth, splitting disconnected clusters and
/// folding unreachable ones into a neighbor until the result is valid. Falls
/// back to a single cluster if that never happens within `4 R` rounds.
pub fn cluster_with_retry<W: Scalar>(
    net: &MobilityCommNetwork<W>,
    initial: &[StateId],
    k: usize,
    master: usize,
    seed: u64,
) -> Result<Clustering, ClusterError> {
    let a = similarity_matrix(net, initial);
    let labels = spectral_cluster_agents(&a, k, master, seed)?;
    Ok(cluster_from_labels(net, initial, labels, master))
}

/// The repair loop of [`cluster_with_retry`] from a given agent grouping.
pub fn cluster_from_labels<W: Scalar>(
    net: &MobilityCommNetwork<W>,
    initial: &[StateId],
    mut labels: Vec<usize>,
    master: usize,
) -> Clustering {
    let r = initial.len();
    let rounds = 4 * r + 4;
    for round in 0..rounds {
        let growth = grow_state_clusters(net, initial, &labels, master);
        if !growth.split_request.is_empty() && split_labels(net, initial, &growth, &mut labels) {
            log::debug!("round {round}: split clusters {:?}", growth.split_request);
            continue;
        }
        let mut cl = growth.clustering;
        cl.restarts = round;
        absorb_orphan_pieces(net, initial, &mut cl);
        let unreached = relink(net, initial, &mut cl);
        if let Some(&c) = unreached.first() {
            // fold the agents of an unreachable cluster into a neighbor
            let target = neighbor_cluster(net, &cl, c).unwrap_or(0);
            log::debug!("round {round}: cluster {c} unreachable, merged into {target}");
            labels = cl
                .agent_assignment
                .iter()
                .map(|&l| if l == c { target } else { l })
                .collect();
            continue;
        }
        if cl.check(net, initial, master).is_ok() {
            return cl;
        }
        labels = cl.agent_assignment.clone();
    }
    log::warn!("clustering did not settle; using a single cluster");
    let mut single = grow_state_clusters(net, initial, &vec![0; r], master).clustering;
    single.restarts = rounds;
    single
}

fn neighbor_cluster<W: Scalar>(net: &MobilityCommNetwork<W>, cl: &Clustering, c: usize) -> Option<usize> {
    let all: BTreeSet<StateId> = net.states().collect();
    cl.clusters[c]
        .iter()
        .flat_map(|&s| neighbors_in(net, s, &all).collect::<Vec<_>>())
        .filter_map(|v| cl.cluster_of(v))
        .filter(|&d| d != c)
        .min()
}

/// Removes leaf dead ends from `known`, repeatedly: a state goes when it is
/// not a frontier, not occupied, not rewarded and has exactly one mobility
/// neighbor among the surviving states.
pub fn prune_dead_states<W: Scalar>(
    net: &MobilityCommNetwork<W>,
    known: &BTreeSet<StateId>,
    frontiers: &BTreeSet<StateId>,
    agents: &[StateId],
    rewarded: &BTreeSet<StateId>,
) -> BTreeSet<StateId> {
    let mut keep = known.clone();
    let protected = |s: &StateId| frontiers.contains(s) || agents.contains(s) || rewarded.contains(s);
    loop {
        let dead: Vec<StateId> = keep
            .iter()
            .copied()
            .filter(|s| !protected(s))
            .filter(|&s| neighbors_in(net, s, &keep).collect::<BTreeSet<_>>().len() == 1)
            .collect();
        if dead.is_empty() {
            return keep;
        }
        for s in dead {
            // a two-state remnant would otherwise vanish in one sweep
            if neighbors_in(net, s, &keep).count() > 0 {
                keep.remove(&s);
            }
        }
    }
}

#[cfg(test)]
mod tests;
