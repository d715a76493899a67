use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use super::{MobilityCommNetwork, StateId};
use crate::scalar::Scalar;

#[derive(Clone, Copy)]
struct Entry<W> {
    dist: W,
    node: usize,
}

impl<W: Scalar> PartialEq for Entry<W> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<W: Scalar> Eq for Entry<W> {}

impl<W: Scalar> PartialOrd for Entry<W> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<W: Scalar> Ord for Entry<W> {
    // min-heap on distance, then node id
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .partial_cmp(&self.dist)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.node.cmp(&self.node))
    }
}

fn dijkstra<W: Scalar>(net: &MobilityCommNetwork<W>, source: StateId, reverse: bool) -> Vec<Option<W>> {
    let n = net.num_states();
    let mut dist: Vec<Option<W>> = vec![None; n];
    let mut heap = BinaryHeap::new();
    dist[source.0] = Some(W::zero());
    heap.push(Entry {
        dist: W::zero(),
        node: source.0,
    });
    while let Some(Entry { dist: d, node }) = heap.pop() {
        if dist[node].is_some_and(|best| d > best) {
            continue;
        }
        let edges = if reverse {
            net.mobility_in(StateId(node))
        } else {
            net.mobility_out(StateId(node))
        };
        for &ei in edges {
            let e = &net.mobility_edges()[ei];
            let next = if reverse { e.from.0 } else { e.to.0 };
            let nd = d + e.weight.at(0);
            if dist[next].is_none_or(|cur| nd < cur) {
                dist[next] = Some(nd);
                heap.push(Entry { dist: nd, node: next });
            }
        }
    }
    dist
}

/// Single-source shortest mobility distances (time-0 weights).
pub fn mobility_distances_from<W: Scalar>(net: &MobilityCommNetwork<W>, source: StateId) -> Vec<Option<W>> {
    dijkstra(net, source, false)
}

/// Shortest mobility distances from every state *to* `target`.
pub fn mobility_distances_to<W: Scalar>(net: &MobilityCommNetwork<W>, target: StateId) -> Vec<Option<W>> {
    dijkstra(net, target, true)
}

/// Unweighted mobility hop counts from `source`.
pub fn hop_distances<W: Scalar>(net: &MobilityCommNetwork<W>, source: StateId) -> Vec<Option<usize>> {
    let mut dist = vec![None; net.num_states()];
    dist[source.0] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(s) = queue.pop_front() {
        let d = dist[s.0].unwrap_or(0);
        for &ei in net.mobility_out(s) {
            let to = net.mobility_edges()[ei].to;
            if dist[to.0].is_none() {
                dist[to.0] = Some(d + 1);
                queue.push_back(to);
            }
        }
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::tests::line;
    use crate::network::NetworkBuilder;
    use crate::Network;
    use proptest::prelude::*;

    #[test]
    fn line_distances() {
        let net = line(4);
        assert_eq!(
            net.shortest_mobility_distance(StateId(0), StateId(3)).unwrap(),
            Some(3.0)
        );
        assert_eq!(
            net.shortest_mobility_distance(StateId(2), StateId(2)).unwrap(),
            Some(0.0)
        );
        assert!(net.shortest_mobility_distance(StateId(0), StateId(7)).is_err());
        assert_eq!(hop_distances(&net, StateId(3))[0], Some(3));
    }

    #[test]
    fn disconnected_is_unreachable() {
        let net: Network = NetworkBuilder::new()
            .states(["a", "b", "c", "d"])
            .mobility_bidir("a", "b", 1.0)
            .mobility_bidir("c", "d", 1.0)
            .build(true)
            .unwrap();
        assert_eq!(
            net.shortest_mobility_distance(StateId(0), StateId(3)).unwrap(),
            None
        );
    }

    #[test]
    fn reverse_distances_respect_direction() {
        let net: Network = NetworkBuilder::new()
            .states(["a", "b", "c"])
            .mobility("a", "b", 2.0)
            .mobility("b", "c", 3.0)
            .build(true)
            .unwrap();
        let to_c = mobility_distances_to(&net, StateId(2));
        assert_eq!(to_c, vec![Some(5.0), Some(3.0), Some(0.0)]);
        let from_c = mobility_distances_from(&net, StateId(2));
        assert_eq!(from_c, vec![None, None, Some(0.0)]);
    }

    fn arb_network() -> impl Strategy<Value = Network> {
        (2usize..7)
            .prop_flat_map(|n| {
                (
                    Just(n),
                    proptest::collection::vec((0..n, 0..n, 0u8..10), 0..(n * n)),
                )
            })
            .prop_map(|(n, edges)| {
                let mut b = NetworkBuilder::new().states((0..n).map(|i| i.to_string()));
                let mut seen = std::collections::HashSet::new();
                for (a, c, w) in edges {
                    if a != c && seen.insert((a, c)) {
                        b = b.mobility(a.to_string(), c.to_string(), w as f64);
                    }
                }
                b.build(true).unwrap()
            })
    }

    proptest! {
        #[test]
        fn triangle_inequality(net in arb_network()) {
            let n = net.num_states();
            let all: Vec<_> = (0..n).map(|s| mobility_distances_from(&net, StateId(s))).collect();
            for a in 0..n {
                prop_assert_eq!(all[a][a], Some(0.0));
                for b in 0..n {
                    for c in 0..n {
                        if let (Some(ab), Some(bc)) = (all[a][b], all[b][c]) {
                            let ac = all[a][c].expect("reachable via b");
                            prop_assert!(ac <= ab + bc + 1e-9);
                        }
                    }
                }
            }
        }

        #[test]
        fn adjoint_neighbors(net in arb_network()) {
            use crate::network::{Direction, Relation};
            for s in net.states() {
                for t in net.neighbors(s, Direction::Succ, Relation::Both).unwrap() {
                    prop_assert!(net.neighbors(t, Direction::Pred, Relation::Both).unwrap().contains(&s));
                }
            }
        }
    }
}
