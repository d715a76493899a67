use std::collections::BinaryHeap;

use super::{MobilityCommNetwork, StateId};
use crate::scalar::Scalar;

#[derive(Clone, Copy)]
struct Item<W> {
    dist: W,
    node: usize,
}

impl<W: Scalar> PartialEq for Item<W> {
    fn eq(&self, other: &Self) -> bool {
        self.dist == other.dist && self.node == other.node
    }
}
impl<W: Scalar> Eq for Item<W> {}
impl<W: Scalar> PartialOrd for Item<W> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<W: Scalar> Ord for Item<W> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other
            .dist
            .partial_cmp(&self.dist)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// Brandes betweenness over directed mobility edges, weights as lengths,
/// self-loops ignored. Scores are raw pair-dependency sums over ordered
/// pairs (no normalization).
pub fn betweenness_centrality<W: Scalar>(net: &MobilityCommNetwork<W>) -> Vec<W> {
    let n = net.num_states();
    let mut score = vec![W::zero(); n];
    let mut order = Vec::with_capacity(n);
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut sigma = vec![W::zero(); n];
    let mut dist: Vec<Option<W>> = vec![None; n];
    let mut delta = vec![W::zero(); n];
    let mut settled = vec![false; n];

    for source in 0..n {
        order.clear();
        for v in 0..n {
            preds[v].clear();
            sigma[v] = W::zero();
            dist[v] = None;
            delta[v] = W::zero();
            settled[v] = false;
        }
        sigma[source] = W::one();
        dist[source] = Some(W::zero());
        let mut heap = BinaryHeap::new();
        heap.push(Item {
            dist: W::zero(),
            node: source,
        });
        while let Some(Item { dist: d, node: v }) = heap.pop() {
            if settled[v] || dist[v].is_some_and(|best| d > best && !W::approx_eq(d, best)) {
                continue;
            }
            settled[v] = true;
            order.push(v);
            for &ei in net.mobility_out(StateId(v)) {
                let e = &net.mobility_edges()[ei];
                if e.is_loop() {
                    continue;
                }
                let w = e.to.0;
                let nd = d + e.weight.at(0);
                match dist[w] {
                    Some(cur) if W::approx_eq(nd, cur) => {
                        if !settled[w] {
                            sigma[w] = sigma[w] + sigma[v];
                            preds[w].push(v);
                        }
                    }
                    Some(cur) if nd > cur => {}
                    _ => {
                        if settled[w] {
                            continue;
                        }
                        dist[w] = Some(nd);
                        sigma[w] = sigma[v];
                        preds[w].clear();
                        preds[w].push(v);
                        heap.push(Item { dist: nd, node: w });
                    }
                }
            }
        }
        for &w in order.iter().rev() {
            for &v in &preds[w] {
                delta[v] = delta[v] + sigma[v] / sigma[w] * (W::one() + delta[w]);
            }
            if w != source {
                score[w] = score[w] + delta[w];
            }
        }
    }
    score
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::NetworkBuilder;
    use crate::Network;
    use proptest::prelude::*;

    /// Enumerates every shortest path explicitly (Floyd-Warshall distances,
    /// then DFS over tight edges) and counts interior visits.
    fn brute_force(net: &Network) -> Vec<f64> {
        let n = net.num_states();
        let inf = f64::INFINITY;
        let mut d = vec![vec![inf; n]; n];
        for (i, row) in d.iter_mut().enumerate() {
            row[i] = 0.0;
        }
        for e in net.mobility_edges().iter().filter(|e| !e.is_loop()) {
            let w = e.weight.at(0);
            if w < d[e.from.0][e.to.0] {
                d[e.from.0][e.to.0] = w;
            }
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if d[i][k] + d[k][j] < d[i][j] {
                        d[i][j] = d[i][k] + d[k][j];
                    }
                }
            }
        }
        fn walk(
            net: &Network,
            d: &[Vec<f64>],
            cur: usize,
            target: usize,
            path: &mut Vec<usize>,
            out: &mut Vec<Vec<usize>>,
        ) {
            if cur == target {
                out.push(path.clone());
                return;
            }
            for &ei in net.mobility_out(StateId(cur)) {
                let e = &net.mobility_edges()[ei];
                if e.is_loop() {
                    continue;
                }
                let w = e.weight.at(0);
                if (d[cur][e.to.0] - w).abs() < 1e-12 && (w + d[e.to.0][target] - d[cur][target]).abs() < 1e-9
                {
                    path.push(e.to.0);
                    walk(net, d, e.to.0, target, path, out);
                    path.pop();
                }
            }
        }
        let mut score = vec![0.0; n];
        for s in 0..n {
            for t in 0..n {
                if s == t || d[s][t] == inf {
                    continue;
                }
                let mut paths = Vec::new();
                walk(net, &d, s, t, &mut vec![s], &mut paths);
                let total = paths.len() as f64;
                for p in &paths {
                    for &v in &p[1..p.len() - 1] {
                        score[v] += 1.0 / total;
                    }
                }
            }
        }
        score
    }

    #[test]
    fn path_graph() {
        let net: Network = NetworkBuilder::new()
            .states(["a", "b", "c"])
            .mobility_bidir("a", "b", 1.0)
            .mobility_bidir("b", "c", 1.0)
            .build(true)
            .unwrap();
        assert_eq!(betweenness_centrality(&net), vec![0.0, 2.0, 0.0]);
        assert_eq!(brute_force(&net), vec![0.0, 2.0, 0.0]);
    }

    #[test]
    fn complete_graph_is_flat() {
        let mut b = NetworkBuilder::new().states(["a", "b", "c"]);
        for (x, y) in [("a", "b"), ("b", "c"), ("a", "c")] {
            b = b.mobility_bidir(x, y, 1.0);
        }
        let net: Network = b.build(true).unwrap();
        assert_eq!(betweenness_centrality(&net), vec![0.0; 3]);
    }

    #[test]
    fn split_shortest_paths_share_credit() {
        // a -> {b, c} -> d, two equal routes
        let net: Network = NetworkBuilder::new()
            .states(["a", "b", "c", "d"])
            .mobility("a", "b", 1.0)
            .mobility("a", "c", 1.0)
            .mobility("b", "d", 1.0)
            .mobility("c", "d", 1.0)
            .build(true)
            .unwrap();
        assert_eq!(betweenness_centrality(&net), vec![0.0, 0.5, 0.5, 0.0]);
    }

    fn arb_network() -> impl Strategy<Value = Network> {
        (2usize..=8)
            .prop_flat_map(|n| (Just(n), proptest::collection::vec((0..n, 0..n, 1u8..4), 0..20)))
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
        fn matches_enumeration(net in arb_network()) {
            let fast = betweenness_centrality(&net);
            let slow = brute_force(&net);
            for (a, b) in fast.iter().zip(&slow) {
                prop_assert!(*a >= 0.0);
                prop_assert!((a - b).abs() < 1e-9, "{fast:?} vs {slow:?}");
            }
        }
    }
}
