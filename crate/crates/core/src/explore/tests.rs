use super::*;
use crate::network::tests::line;
use crate::Network;

fn ids(v: &[usize]) -> Vec<StateId> {
    v.iter().map(|&i| StateId(i)).collect()
}

fn line_world(n: usize, agents: usize, known: &[usize]) -> ExplorationWorld<f64> {
    ExplorationWorld::new(line(n), vec![StateId(0); agents], 0, &ids(known)).unwrap()
}

#[test]
fn frontier_examples() {
    let full = line_world(4, 2, &[0, 1, 2, 3]);
    assert!(full.frontiers.is_empty());
    assert!(full.is_complete());

    let base_only = line_world(4, 2, &[]);
    assert_eq!(base_only.frontiers, [StateId(0)].into());

    let prefix = line_world(6, 2, &[0, 1, 2]);
    assert_eq!(prefix.frontiers, [StateId(2)].into());
}

#[test]
fn reveal_only_at_frontiers() {
    let mut w = line_world(6, 2, &[0, 1, 2]);
    assert!(w.reveal(&[StateId(1)]).is_empty());
    assert_eq!(w.reveal(&[StateId(2)]), [StateId(3)].into());
    assert_eq!(w.frontiers, [StateId(3)].into());
    let (net, map) = w.known_network();
    assert_eq!(net.num_states(), 4);
    assert_eq!(map, ids(&[0, 1, 2, 3]));
}

#[test]
fn setup_errors() {
    assert!(ExplorationWorld::<f64>::new(line(3), vec![StateId(0)], 1, &[]).is_err());
    assert!(ExplorationWorld::<f64>::new(line(3), vec![StateId(7)], 0, &[]).is_err());
}

#[test]
fn frontier_reward_schedule() {
    let config = ExploreConfig::default();
    let states: BTreeSet<_> = ids(&[0, 1, 2]).into_iter().collect();
    let frontiers: BTreeSet<_> = ids(&[2, 5]).into_iter().collect();
    let r: BTreeMap<(StateId, usize), f64> =
        assign_rewards(&states, &frontiers, &BTreeMap::new(), &BTreeMap::new(), &config);
    assert_eq!(r.len(), 2, "frontier outside the cluster earns nothing");
    assert_eq!(r[&(StateId(2), 1)], 100.0);
    assert_eq!(r[&(StateId(2), 2)], 50.0);
}

#[test]
fn centrality_and_child_rewards() {
    let config = ExploreConfig::default();
    let states: BTreeSet<_> = ids(&[0, 1, 2]).into_iter().collect();
    let centrality: BTreeMap<_, _> = [(StateId(1), 0.5), (StateId(0), 0.0)].into();
    let child: BTreeMap<_, _> = [(StateId(2), 37.0)].into();
    let r: BTreeMap<(StateId, usize), f64> =
        assign_rewards(&states, &BTreeSet::new(), &centrality, &child, &config);
    assert_eq!(r.len(), 2);
    assert_eq!(r[&(StateId(1), 1)], 0.5);
    assert_eq!(r[&(StateId(2), 1)], 37.0);
}

#[test]
fn normalized_centrality_of_line_middle() {
    let net: Network = line(3);
    let c = normalized_centrality(&net, &ids(&[4, 5, 6]));
    // middle state lies on both ordered pairs of the ends
    assert_eq!(c[&StateId(5)], 1.0);
    assert_eq!(c[&StateId(4)], 0.0);
}

#[test]
fn known_world_needs_no_cycle() {
    let truth = line(4);
    let run = run_exploration(
        truth,
        vec![StateId(0); 2],
        0,
        &ids(&[0, 1, 2, 3]),
        &ExploreConfig::default(),
        crate::solver::default_backend().as_ref(),
        0,
    )
    .unwrap();
    assert!(run.outcomes.is_empty());
    assert_eq!(run.subproblems(), 0);
}

#[cfg(feature = "highs")]
#[test]
fn line_world_is_explored() {
    let run = run_exploration(
        line(10),
        vec![StateId(0); 3],
        0,
        &[],
        &ExploreConfig::default(),
        &crate::solver::HighsBackend,
        3,
    )
    .unwrap();
    assert!(run.world.is_complete());
    assert!(!run.outcomes.is_empty());
    for c in &run.world.cycle_log {
        assert!(c.info_delivered, "cycle {}", c.cycle);
        assert!(!c.revealed.is_empty());
    }
    assert!(run.subproblems() >= run.outcomes.len());
    // the base never moves
    assert_eq!(run.world.positions[0], StateId(0));
}

#[test]
fn subproblem_count_ignores_retries() {
    let rec = |phase, cluster| SubproblemRecord {
        phase,
        cluster,
        states: 1,
        agents: 1,
        horizon: 1,
        evacuation: false,
        return_to_base: false,
        status: "infeasible".into(),
        objective: None,
        wall_time: 0.0,
    };
    let cycle = CycleRecord {
        cycle: 0,
        known: 1,
        frontiers: 0,
        clusters: 2,
        parents: vec![None, Some(0)],
        inactive: vec![],
        subproblems: vec![
            rec(Phase::Pre, 0),
            rec(Phase::Post, 0),
            rec(Phase::Post, 0),
            rec(Phase::Pre, 1),
        ],
        explorers: vec![],
        revealed: vec![],
        info_delivered: true,
        positions: vec![],
    };
    assert_eq!(count_subproblems(&[cycle.clone(), cycle]), 6);
}

#[test]
fn cave_generator_is_deterministic() {
    let a = generate_cave(40, 4, 2.0, 11);
    let b = generate_cave(40, 4, 2.0, 11);
    assert_eq!(a, b);
    assert_eq!(a.network.states.len(), 40);
    assert_eq!(a.agents.len(), 4);
    assert!(a.agents.iter().all(|s| s == &a.agents[0]));
    let world: ExplorationWorld<f64> = a.into_world().unwrap();
    assert!(world.known.len() >= 2);
    let c = generate_cave(40, 4, 2.0, 12);
    assert_ne!(c.network, generate_cave(40, 4, 2.0, 11).network);
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn caves_are_connected(n in 5usize..80, seed in 0u64..1000) {
            let inst = generate_cave(n, 3, 1.5, seed);
            let world: ExplorationWorld<f64> = inst.into_world().unwrap();
            let d = crate::network::hop_distances(&world.truth, StateId(0));
            prop_assert!(d.iter().all(|x| x.is_some()));
        }

        #[test]
        fn reveal_grows_known_and_keeps_frontiers_known(n in 3usize..30, steps in 1usize..10) {
            let mut w = line_world(n, 2, &[]);
            for _ in 0..steps {
                let before = w.known.len();
                let fr: Vec<_> = w.frontiers.iter().copied().collect();
                let fresh = w.reveal(&fr);
                prop_assert_eq!(w.known.len(), before + fresh.len());
                prop_assert!(w.frontiers.is_subset(&w.known));
                prop_assert_eq!(w.frontiers.is_empty(), w.is_complete());
            }
        }
    }
}
