use proptest::prelude::*;

use rand::{Rng, SeedableRng};

use super::*;
use crate::network::tests::line;
use crate::network::NetworkBuilder;
use crate::Network;

fn s(i: usize) -> StateId {
    StateId(i)
}

fn starts(ids: &[usize]) -> Vec<StateId> {
    ids.iter().map(|&i| StateId(i)).collect()
}

/// Random tree plus extra edges, bidirectional mobility with weights 1..=3;
/// communication follows a random share of the mobility edges.
pub(crate) fn random_connected(n: usize, seed: u64, comm_share: f64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
    let mut b = NetworkBuilder::new().states(names.iter().cloned());
    let mut pairs = BTreeSet::new();
    for i in 1..n {
        pairs.insert((rng.gen_range(0..i), i));
    }
    for _ in 0..n / 3 {
        let (x, y) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if x != y {
            pairs.insert((x.min(y), x.max(y)));
        }
    }
    for &(x, y) in &pairs {
        b = b.mobility_bidir(names[x].clone(), names[y].clone(), rng.gen_range(1..=3) as f64);
        if rng.gen_bool(comm_share) {
            b = b.comm_bidir(names[x].clone(), names[y].clone(), 0.0);
        }
    }
    b.build(true).unwrap()
}

#[test]
fn similarity_examples() {
    let a = similarity_matrix(&line(5), &starts(&[0, 3]));
    assert_eq!(a[0][1], 1.0 / 3.0);
    assert_eq!(a[0][0], 0.0);

    let a = similarity_matrix(&line(5), &starts(&[0, 0, 2]));
    assert_eq!(a[0][2], 0.5);
    assert_eq!(a[0][1], CAP_FACTOR * 0.5);

    let net: Network = NetworkBuilder::new().states(["a", "b"]).build(true).unwrap();
    let a = similarity_matrix(&net, &starts(&[0, 1]));
    assert_eq!(a[0][1], 0.0);
}

#[test]
fn similarity_uses_the_shorter_direction() {
    let net: Network = NetworkBuilder::new()
        .states(["a", "b"])
        .mobility("a", "b", 2.0)
        .mobility("b", "a", 5.0)
        .build(true)
        .unwrap();
    let a = similarity_matrix(&net, &starts(&[0, 1]));
    assert_eq!(a[0][1], 0.5);
    assert_eq!(a[1][0], 0.5);
}

#[test]
fn spectral_edge_cases() {
    let a = vec![vec![0.0, 1.0, 0.5], vec![1.0, 0.0, 0.2], vec![0.5, 0.2, 0.0]];
    assert_eq!(spectral_cluster_agents(&a, 1, 0, 7).unwrap(), vec![0, 0, 0]);
    let mut single = spectral_cluster_agents(&a, 3, 2, 7).unwrap();
    assert_eq!(single[2], 0);
    single.sort();
    assert_eq!(single, vec![0, 1, 2]);
    assert!(spectral_cluster_agents(&a, 4, 0, 7).is_err());
    assert!(spectral_cluster_agents(&a, 0, 0, 7).is_err());
}

#[test]
fn spectral_recovers_blocks() {
    let (w, x) = (1.0, 0.01);
    let a = vec![
        vec![0.0, x, w, x],
        vec![x, 0.0, x, w],
        vec![w, x, 0.0, x],
        vec![x, w, x, 0.0],
    ];
    for seed in 0..5 {
        assert_eq!(spectral_cluster_agents(&a, 2, 1, seed).unwrap(), vec![1, 0, 1, 0]);
    }
}

#[test]
fn single_cluster_takes_everything() {
    let net = line(6);
    let g = grow_state_clusters(&net, &starts(&[2, 4]), &[0, 0], 0);
    assert_eq!(g.clustering.clusters[0].len(), 6);
    assert_eq!(g.clustering.parent, vec![None]);
    assert_eq!(g.clustering.growth_iterations, 4);
    assert!(g.split_request.is_empty() && g.dormant.is_empty());
}

#[test]
fn hierarchy_of_four() {
    // master at s5; cluster 1 at s2 hangs off it, cluster 3 at s0 off cluster 1
    let net = line(11);
    let initial = starts(&[5, 2, 8, 0]);
    let g = grow_state_clusters(&net, &initial, &[0, 1, 2, 3], 0);
    let cl = &g.clustering;
    assert_eq!(cl.parent, vec![None, Some(0), Some(0), Some(1)]);
    assert_eq!(cl.submaster, vec![None, Some(1), Some(2), Some(3)]);
    assert!(g.split_request.is_empty() && g.dormant.is_empty());
    assert_eq!(cl.check(&net, &initial, 0), Ok(()));
    assert_eq!(cl.top_down(), vec![0, 1, 2, 3]);
    assert_eq!(cl.depth(3), 2);
    assert_eq!(cl.growth_iterations, 11 - 4);
}

#[test]
fn submaster_is_nearest_qualifier() {
    // both agents of cluster 1 sit next to the master's state
    let net = line(5);
    let initial = starts(&[2, 3, 1]);
    let g = grow_state_clusters(&net, &initial, &[0, 1, 1], 0);
    assert_eq!(g.clustering.submaster[1], Some(2));
}

#[test]
fn dumbbell_requests_a_split() {
    let net = line(9);
    let initial = starts(&[4, 0, 8]);
    let g = grow_state_clusters(&net, &initial, &[0, 1, 1], 0);
    assert_eq!(g.split_request, vec![1]);
    let cl = cluster_from_labels(&net, &initial, vec![0, 1, 1], 0);
    assert_eq!(cl.check(&net, &initial, 0), Ok(()));
    assert_eq!(cl.len(), 3);
    assert!(cl.restarts >= 1);
}

#[test]
fn shared_start_moves_agents_together() {
    let net = line(4);
    let initial = starts(&[0, 3, 3]);
    let g = grow_state_clusters(&net, &initial, &[0, 1, 2], 0);
    assert_eq!(g.clustering.agent_assignment, vec![0, 1, 1]);
    assert_eq!(g.clustering.len(), 2);
}

#[test]
fn missing_comm_merges_clusters() {
    // no communication at all: nothing can be activated
    let net: Network = NetworkBuilder::new()
        .states(["a", "b", "c"])
        .mobility_bidir("a", "b", 1.0)
        .mobility_bidir("b", "c", 1.0)
        .build(true)
        .unwrap();
    let initial = starts(&[0, 2]);
    let g = grow_state_clusters(&net, &initial, &[0, 1], 0);
    assert_eq!(g.dormant, vec![1]);
    let cl = cluster_with_retry(&net, &initial, 2, 0, 3).unwrap();
    assert_eq!(cl.len(), 1);
    assert_eq!(cl.check(&net, &initial, 0), Ok(()));
}

#[test]
fn singletons_settle_at_once() {
    let net = line(6);
    let initial = starts(&[0, 2, 5]);
    let cl = cluster_with_retry(&net, &initial, 3, 1, 9).unwrap();
    assert_eq!(cl.len(), 3);
    assert_eq!(cl.restarts, 0);
    assert!(cl.clusters[0].contains(&s(2)));
    assert_eq!(cl.check(&net, &initial, 1), Ok(()));
}

#[test]
fn check_reports_each_violation() {
    let net = line(4);
    let initial = starts(&[0, 3]);
    let good = cluster_with_retry(&net, &initial, 2, 0, 0).unwrap();
    assert_eq!(good.check(&net, &initial, 0), Ok(()));

    let mut bad = good.clone();
    bad.clusters[0].insert(s(3));
    assert!(matches!(
        bad.check(&net, &initial, 0),
        Err(ClusterViolation::NotPartition(..))
    ));

    let mut bad = good.clone();
    bad.parent[1] = None;
    assert_eq!(bad.check(&net, &initial, 0), Err(ClusterViolation::Orphan(1)));

    assert_eq!(
        good.check(&net, &initial, 1),
        Err(ClusterViolation::MasterOutside)
    );

    let split = Clustering {
        clusters: vec![[s(0), s(2)].into(), [s(1), s(3)].into()],
        agent_assignment: vec![0, 1],
        parent: vec![None, Some(0)],
        submaster: vec![None, Some(1)],
        growth_iterations: 0,
        restarts: 0,
    };
    assert_eq!(
        split.check(&net, &initial, 0),
        Err(ClusterViolation::Disconnected(0))
    );
}

#[test]
fn doc_and_dot() {
    let net = line(4);
    let initial = starts(&[0, 3]);
    let cl = cluster_with_retry(&net, &initial, 2, 0, 0).unwrap();
    let doc = cl.to_doc(&net, 2);
    let text = serde_json::to_string(&doc).unwrap();
    let back: ClusteringDoc = serde_json::from_str(&text).unwrap();
    assert_eq!(back, doc);
    assert_eq!(doc.clusters.iter().map(|c| c.states.len()).sum::<usize>(), 4);
    let dot = cl.to_dot(&net);
    assert!(dot.contains("fillcolor=\"#e41a1c\""));
    assert!(dot.contains("fillcolor=\"#377eb8\""));
}

#[test]
fn prune_examples() {
    let net = line(6);
    let all: BTreeSet<StateId> = net.states().collect();
    let kept = prune_dead_states(&net, &all, &[s(5)].into(), &[s(0)], &BTreeSet::new());
    assert_eq!(kept, all);

    // tree: trunk 0-1-2-3, dead branch 1-4-5
    let tree: Network = NetworkBuilder::new()
        .states(["0", "1", "2", "3", "4", "5"])
        .mobility_bidir("0", "1", 1.0)
        .mobility_bidir("1", "2", 1.0)
        .mobility_bidir("2", "3", 1.0)
        .mobility_bidir("1", "4", 1.0)
        .mobility_bidir("4", "5", 1.0)
        .build(true)
        .unwrap();
    let all: BTreeSet<StateId> = tree.states().collect();
    let kept = prune_dead_states(&tree, &all, &[s(3)].into(), &[s(0)], &BTreeSet::new());
    assert_eq!(kept, [s(0), s(1), s(2), s(3)].into());
    let kept = prune_dead_states(&tree, &all, &all, &[], &BTreeSet::new());
    assert_eq!(kept, all);
    let kept = prune_dead_states(&tree, &all, &[s(3)].into(), &[s(0)], &[s(5)].into());
    assert_eq!(kept, all);
}

#[test]
fn prune_leaves_a_remnant() {
    let net = line(3);
    let all: BTreeSet<StateId> = net.states().collect();
    assert_eq!(
        prune_dead_states(&net, &all, &BTreeSet::new(), &[], &BTreeSet::new()).len(),
        1
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_graphs_cluster_validly(
        seed in any::<u64>(),
        n in 8usize..60,
        r in 2usize..8,
        comm_share in 0.3f64..1.0,
    ) {
        let net = random_connected(n, seed, comm_share);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let initial: Vec<StateId> = (0..r).map(|_| StateId(rng.gen_range(0..n))).collect();
        let k = rng.gen_range(1..=r);
        let master = rng.gen_range(0..r);
        let cl = cluster_with_retry(&net, &initial, k, master, seed).unwrap();
        prop_assert_eq!(cl.check(&net, &initial, master), Ok(()));
        prop_assert_eq!(cluster_with_retry(&net, &initial, k, master, seed).unwrap(), cl);
    }

    #[test]
    fn growth_assigns_one_state_per_iteration(seed in any::<u64>(), n in 5usize..40, r in 1usize..6) {
        let net = random_connected(n, seed, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let initial: Vec<StateId> = (0..r).map(|_| StateId(rng.gen_range(0..n))).collect();
        let labels: Vec<usize> = (0..r).map(|_| rng.gen_range(0..r)).collect();
        let g = grow_state_clusters(&net, &initial, &labels, 0);
        let seeds: BTreeSet<StateId> = initial.iter().copied().collect();
        prop_assert_eq!(g.clustering.growth_iterations, n - seeds.len());
        let total: usize = g.clustering.clusters.iter().map(BTreeSet::len).sum();
        prop_assert_eq!(total, n);
    }
}
