//! Acceptance checks, one PASS/FAIL line per criterion. Exits non-zero if
//! any criterion fails.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use iconn_core::baselines::{bench_one, Method};
use iconn_core::cluster::cluster_with_retry;
use iconn_core::explore::{
    count_subproblems, generate_cave, run_exploration, ExplorationWorld, ExploreConfig,
};
use iconn_core::ilp::TAG_FLOW;
use iconn_core::solver::{default_backend, extract_plan};
use iconn_core::verify::{
    brute_force_solve, check_consistency, check_requirements, information_reachability, plan_reachability,
    random_instance, verify_plan, FlowEvent, ProblemClass, FLOW_EPS,
};
use iconn_core::{
    assemble, solve, Backend, FlowOrientation, Limits, NetworkBuilder, PlanSolution, ProblemSpec, StateId,
};

type Spec = ProblemSpec<f64>;
type Outcome = Result<String, String>;

const EXACT: Limits = Limits {
    time_limit: None,
    gap: 0.0,
};

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn solve_plan(spec: &Spec, backend: &dyn Backend) -> Result<Option<PlanSolution>, String> {
    let model = assemble(spec).map_err(|e| e.to_string())?;
    let res = solve(&model, backend, &EXACT);
    if !res.status.has_solution() {
        return Ok(None);
    }
    extract_plan(spec, &model, &res)
        .map(Some)
        .ok_or_else(|| "solution does not decode".to_string())
}

fn line_net(n: usize) -> iconn_core::MobilityCommNetwork<f64> {
    let mut b = NetworkBuilder::new().states((0..n).map(|i| format!("s{i}")));
    for i in 0..n - 1 {
        b = b
            .mobility_bidir(format!("s{i}"), format!("s{}", i + 1), 1.0)
            .comm_bidir(format!("s{i}"), format!("s{}", i + 1), 0.0);
    }
    b.build(true).unwrap()
}

fn ids(v: &[usize]) -> Vec<StateId> {
    v.iter().map(|&i| StateId(i)).collect()
}

fn oracle_equivalence(backend: &dyn Backend) -> Outcome {
    let start = Instant::now();
    let per_class = 50;
    let mut infeasible = 0;
    for class in ProblemClass::ALL {
        for seed in 0..per_class {
            let spec = random_instance(1000 + seed, class);
            let oracle =
                brute_force_solve(&spec).map_err(|e| format!("{} seed {seed}: {e}", class.label()))?;
            let model = assemble(&spec).map_err(|e| e.to_string())?;
            let res = solve(&model, backend, &EXACT);
            let ilp = res.status.has_solution().then_some(res.objective).flatten();
            match (oracle.objective(), ilp) {
                (None, None) => infeasible += 1,
                (Some(a), Some(b)) if (a - b).abs() <= 1e-6 => {}
                (a, b) => {
                    return Err(format!(
                        "{} seed {seed}: oracle {a:?} vs ilp {b:?}",
                        class.label()
                    ))
                }
            }
        }
    }
    let took = start.elapsed();
    ensure(took < Duration::from_secs(300), || format!("took {took:?}"))?;
    Ok(format!(
        "{} instances agree ({infeasible} infeasible) in {:.1}s",
        4 * per_class,
        took.as_secs_f64()
    ))
}

fn figures(backend: &dyn Backend) -> Outcome {
    let mut fig1 = Spec::new(line_net(4), ids(&[0, 1, 3]), 2);
    fig1.src = [0, 2].into();
    fig1.snk = [0, 2].into();
    let plan = solve_plan(&fig1, backend)?.ok_or("fig 1 infeasible at T=2")?;
    let report = information_reachability(&plan, &fig1.net);
    ensure(report.reachable(0, 2) && report.reachable(2, 0), || {
        "fig 1 pairs not reachable".into()
    })?;
    verify_plan(&plan, &fig1).map_err(|v| v.to_string())?;

    let mut fig2 = Spec::new(line_net(4), ids(&[0, 2, 3]), 1);
    fig2.src = [0].into();
    fig2.snk = [2].into();
    let plan = solve_plan(&fig2, backend)?.ok_or("fig 2 infeasible at T=1")?;
    verify_plan(&plan, &fig2).map_err(|v| v.to_string())?;
    let report = information_reachability(&plan, &fig2.net);
    let w = report.witness.get(&(0, 2)).ok_or("fig 2 pair not reachable")?;
    let hops_in_last_layer = w.iter().filter(|v| v.t == 1).count();
    ensure(hops_in_last_layer >= 3, || {
        format!("witness {w:?} does not hop within a layer")
    })?;
    Ok(format!(
        "fig 1 feasible at T=2, fig 2 relays through {} states in layer 1",
        hops_in_last_layer
    ))
}

fn dominance(backend: &dyn Backend) -> Outcome {
    let mut objectives = Vec::new();
    for horizon in 1..=5 {
        let mut p1 = Spec::new(line_net(4), ids(&[0, 1, 3, 0]), horizon);
        p1.src = (0..4).collect();
        p1.snk = (0..4).collect();
        let mut p2 = p1.clone();
        p2.extensions.information_consistent = true;
        p2.agents.masters = [0].into();
        let a = solve_plan(&p1, backend)?;
        let b = solve_plan(&p2, backend)?;
        if horizon == 2 {
            ensure(a.is_some(), || "P1 infeasible at T=2".into())?;
        }
        if let Some(b) = &b {
            check_consistency(b, &p2).map_err(|v| format!("T={horizon}: {v}"))?;
            let a = a
                .as_ref()
                .ok_or_else(|| format!("T={horizon}: P2 feasible but P1 not"))?;
            ensure(b.objective <= a.objective + 1e-6, || {
                format!("T={horizon}: P2 {} > P1 {}", b.objective, a.objective)
            })?;
        }
        objectives.push(format!(
            "T={horizon} P1 {} P2 {}",
            a.map_or("-".to_string(), |p| format!("{:.1}", p.objective)),
            b.map_or("-".to_string(), |p| format!("{:.1}", p.objective))
        ));
    }
    Ok(objectives.join(", "))
}

fn scalability(backend: &dyn Backend) -> Outcome {
    for n in 4..=6 {
        let rows: Vec<_> = [Method::Flow, Method::Powerset, Method::Adaptive]
            .into_iter()
            .map(|m| bench_one(m, n, backend, &EXACT))
            .collect();
        let objs: Vec<Option<f64>> = rows.iter().map(|r| r.objective).collect();
        ensure(objs.iter().all(|o| o.is_some()), || format!("N={n}: {rows:?}"))?;
        let first = objs[0].unwrap();
        ensure(objs.iter().all(|o| (o.unwrap() - first).abs() <= 1e-6), || {
            format!("N={n}: objectives {objs:?}")
        })?;
    }
    let limit = Limits {
        time_limit: Some(120.0),
        gap: 0.0,
    };
    let flow = bench_one(Method::Flow, 15, backend, &limit);
    ensure(flow.status == "optimal" && flow.wall_time <= 120.0, || {
        format!("flow N=15: {flow:?}")
    })?;
    let mut refused = Vec::new();
    for n in 8..=10 {
        let row = bench_one(Method::Powerset, n, backend, &limit);
        ensure(
            row.status == "refused" || row.wall_time > 120.0 || row.status == "time_limit",
            || format!("powerset N={n} finished: {row:?}"),
        )?;
        refused.push(format!("N={n} {}", row.status));
    }
    Ok(format!(
        "N=4..6 agree, flow N=15 {:.1}s, powerset {}",
        flow.wall_time,
        refused.join(", ")
    ))
}

fn random_spec(rng: &mut ChaCha8Rng) -> Spec {
    let n = rng.gen_range(3..=12);
    let names: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
    let mut b = NetworkBuilder::new().states(names.iter().cloned());
    for i in 1..n {
        let j = rng.gen_range(0..i);
        b = b
            .mobility_bidir(names[i].clone(), names[j].clone(), 1.0)
            .comm_bidir(names[i].clone(), names[j].clone(), 0.5);
    }
    let net = b.build(true).unwrap();
    let r = rng.gen_range(1..=6);
    let initial: Vec<StateId> = (0..r).map(|_| StateId(rng.gen_range(0..n))).collect();
    let mut spec = Spec::new(net, initial, rng.gen_range(0..=4));
    spec.src = (0..r).filter(|_| rng.gen_bool(0.5)).collect();
    spec.snk = (0..r).filter(|_| rng.gen_bool(0.5)).collect();
    spec.orientation = [
        FlowOrientation::Auto,
        FlowOrientation::OneToMany,
        FlowOrientation::ManyToOne,
    ][rng.gen_range(0..3)];
    spec
}

fn flow_rows() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut seen = Vec::new();
    let mut checked = 0;
    while checked < 10 {
        let spec = random_spec(&mut rng);
        let (src, snk) = (spec.src.len(), spec.snk.len());
        if src == 0 || snk == 0 {
            continue;
        }
        let ids = match spec.orientation {
            FlowOrientation::OneToMany => src,
            FlowOrientation::ManyToOne => snk,
            FlowOrientation::Auto => src.min(snk),
        };
        let expected = ids * spec.net.num_states() * (spec.horizon + 1);
        let model = assemble(&spec).map_err(|e| e.to_string())?;
        let got = model.count(TAG_FLOW);
        ensure(got == expected, || {
            format!(
                "{:?} src {src} snk {snk}: {got} rows, expected {expected}",
                spec.orientation
            )
        })?;
        seen.push(got);
        checked += 1;
    }
    Ok(format!("row counts {seen:?}"))
}

/// Connected random graph: a random tree plus a few chords, mobility and
/// communication on every edge, some extra long-range communication.
fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> iconn_core::MobilityCommNetwork<f64> {
    let names: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
    let mut b = NetworkBuilder::new().states(names.iter().cloned());
    let mut edges = BTreeSet::new();
    for i in 1..n {
        let lo = i.saturating_sub(6);
        edges.insert((rng.gen_range(lo..i), i));
    }
    for _ in 0..n / 4 {
        let a = rng.gen_range(0..n);
        let c = rng.gen_range(0..n);
        if a != c {
            edges.insert((a.min(c), a.max(c)));
        }
    }
    for &(a, c) in &edges {
        b = b
            .mobility_bidir(names[a].clone(), names[c].clone(), 1.0)
            .comm_bidir(names[a].clone(), names[c].clone(), 0.1);
    }
    for _ in 0..n / 5 {
        let a = rng.gen_range(0..n);
        let c = rng.gen_range(0..n);
        if a != c && edges.insert((a.min(c), a.max(c))) {
            b = b.comm(names[a].clone(), names[c].clone(), 0.2);
        }
    }
    b.build(true).unwrap()
}

fn connected_within(net: &iconn_core::MobilityCommNetwork<f64>, states: &BTreeSet<StateId>) -> bool {
    let Some(&first) = states.iter().next() else {
        return false;
    };
    let mut adj: BTreeMap<StateId, Vec<StateId>> = BTreeMap::new();
    for e in net.mobility_edges() {
        if states.contains(&e.from) && states.contains(&e.to) {
            adj.entry(e.from).or_default().push(e.to);
            adj.entry(e.to).or_default().push(e.from);
        }
    }
    let mut seen = BTreeSet::from([first]);
    let mut queue = VecDeque::from([first]);
    while let Some(s) = queue.pop_front() {
        for &v in adj.get(&s).into_iter().flatten() {
            if seen.insert(v) {
                queue.push_back(v);
            }
        }
    }
    seen.len() == states.len()
}

fn clustering() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut sizes = BTreeMap::new();
    for case in 0..100 {
        let n = rng.gen_range(20..=200);
        let r = rng.gen_range(4..=12);
        let k = rng.gen_range(1..=r);
        let net = random_graph(&mut rng, n);
        let mut starts: Vec<usize> = (0..n).collect();
        starts.shuffle(&mut rng);
        let initial: Vec<StateId> = (0..r).map(|i| StateId(starts[i % n])).collect();
        let master = rng.gen_range(0..r);
        let cl =
            cluster_with_retry(&net, &initial, k, master, case).map_err(|e| format!("case {case}: {e}"))?;
        let fail = |what: &str| format!("case {case} (n={n}, r={r}, k={k}): {what}");
        for s in net.states() {
            let owners = cl.clusters.iter().filter(|c| c.contains(&s)).count();
            ensure(owners == 1, || fail(&format!("state {s:?} in {owners} clusters")))?;
        }
        for (c, states) in cl.clusters.iter().enumerate() {
            ensure(connected_within(&net, states), || {
                fail(&format!("cluster {c} disconnected"))
            })?;
        }
        ensure(cl.clusters[0].contains(&initial[master]), || {
            fail("master outside cluster 0")
        })?;
        for c in 1..cl.clusters.len() {
            let (Some(p), Some(sub)) = (cl.parent[c], cl.submaster[c]) else {
                return Err(fail(&format!("cluster {c} has no parent")));
            };
            ensure(cl.clusters[c].contains(&initial[sub]), || {
                fail(&format!("submaster of {c} outside"))
            })?;
            let linked = net
                .comm_edges()
                .iter()
                .any(|e| e.to == initial[sub] && cl.clusters[p].contains(&e.from));
            ensure(linked, || {
                fail(&format!("no comm edge from cluster {p} to submaster of {c}"))
            })?;
        }
        *sizes.entry(cl.clusters.len()).or_insert(0) += 1;
    }
    let took = start.elapsed();
    ensure(took < Duration::from_secs(120), || format!("took {took:?}"))?;
    Ok(format!(
        "100 graphs, cluster counts {sizes:?}, {:.1}s",
        took.as_secs_f64()
    ))
}

fn exploration(backend: &dyn Backend) -> Outcome {
    let seed = 7;
    let instance = generate_cave(100, 10, 2.0, seed);
    let world: ExplorationWorld<f64> = instance.into_world().map_err(|e| e.to_string())?;
    let known: Vec<StateId> = world.known.iter().copied().collect();
    let config = ExploreConfig::default();
    let run = run_exploration(
        world.truth,
        world.positions,
        world.base,
        &known,
        &config,
        backend,
        seed,
    )
    .map_err(|e| e.to_string())?;
    let log = &run.world.cycle_log;
    let cycles = log.len();
    let subproblems = count_subproblems(log);
    let max_solve = log
        .iter()
        .flat_map(|c| &c.subproblems)
        .map(|s| s.wall_time)
        .fold(0.0, f64::max);
    println!("  exploration: {cycles} cycles, {subproblems} subproblems (reference 9 / 48), max solve {max_solve:.1}s");
    ensure(run.world.is_complete(), || {
        format!("{} of 100 states known", run.world.known.len())
    })?;
    ensure(log.iter().all(|c| c.info_delivered), || {
        "a delivery is not certified".into()
    })?;
    ensure(max_solve <= 60.0, || format!("a solve took {max_solve:.1}s"))?;
    ensure((3..=27).contains(&cycles), || {
        format!("{cycles} cycles outside 3..=27")
    })?;
    ensure((16..=144).contains(&subproblems), || {
        format!("{subproblems} subproblems outside 16..=144")
    })?;
    Ok(format!(
        "100% coverage in {cycles} cycles, {subproblems} subproblems"
    ))
}

/// Layered holdings computed by fixpoint relaxation: `h[t][s]` when
/// information from `origins` is at `s` in layer `t`.
fn holdings(
    plan: &PlanSolution,
    links: &BTreeSet<(usize, StateId, StateId)>,
    origins: &[StateId],
    n: usize,
    gate: Option<&[Vec<bool>]>,
) -> Vec<Vec<bool>> {
    let horizon = plan.horizon();
    let mut occ = vec![vec![false; n]; horizon + 1];
    for p in &plan.paths {
        for (t, s) in p.iter().enumerate() {
            occ[t][s.0] = true;
        }
    }
    let mut h = vec![vec![false; n]; horizon + 1];
    for &s in origins {
        h[0][s.0] = true;
    }
    for t in 0..=horizon {
        if t > 0 {
            for p in &plan.paths {
                if h[t - 1][p[t - 1].0] {
                    h[t][p[t].0] = true;
                }
            }
        }
        let mut changed = true;
        while changed {
            changed = false;
            for &(lt, a, b) in links.range((t, StateId(0), StateId(0))..(t + 1, StateId(0), StateId(0))) {
                debug_assert_eq!(lt, t);
                if h[t][a.0] && !h[t][b.0] && occ[t][a.0] && occ[t][b.0] && gate.is_none_or(|g| g[t][a.0]) {
                    h[t][b.0] = true;
                    changed = true;
                }
            }
        }
    }
    h
}

fn links_of(events: &[FlowEvent]) -> BTreeSet<(usize, StateId, StateId)> {
    events
        .iter()
        .filter(|e| e.amount > FLOW_EPS)
        .map(|e| (e.t, e.from, e.to))
        .collect()
}

fn master_holdings(plan: &PlanSolution, spec: &Spec) -> Vec<Vec<bool>> {
    let starts: Vec<StateId> = spec
        .agents
        .masters
        .iter()
        .map(|&m| spec.agents.initial[m])
        .collect();
    holdings(
        plan,
        &links_of(&plan.comm_events),
        &starts,
        spec.net.num_states(),
        None,
    )
}

/// Every required pair reachable, by the independent relaxation.
fn requirements_hold(plan: &PlanSolution, spec: &Spec) -> bool {
    let n = spec.net.num_states();
    let links = links_of(&plan.comm_events);
    let gate = spec
        .extensions
        .information_consistent
        .then(|| master_holdings(plan, spec));
    let horizon = plan.horizon();
    spec.src.iter().all(|&i| {
        let h = holdings(plan, &links, &[plan.paths[i][0]], n, gate.as_deref());
        spec.snk.iter().all(|&j| h[horizon][plan.paths[j][horizon].0])
    })
}

fn consistent(plan: &PlanSolution, spec: &Spec) -> bool {
    let m = master_holdings(plan, spec);
    let moves_ok = plan
        .paths
        .iter()
        .all(|p| (0..plan.horizon()).all(|t| !(p[t] == p[0] && p[t + 1] != p[0]) || m[t][p[0].0]));
    let sends_ok = plan
        .comm_events
        .iter()
        .filter(|e| e.amount > FLOW_EPS)
        .all(|e| m[e.t][e.from.0]);
    moves_ok && sends_ok
}

fn mutations(backend: &dyn Backend) -> Outcome {
    let (mut comm_flips, mut comm_kept, mut gate_flips, mut gate_kept) = (0, 0, 0, 0);
    for seed in 0..400u64 {
        let class = if seed % 2 == 0 {
            ProblemClass::P2
        } else {
            ProblemClass::P2Collision
        };
        let spec = random_instance(5000 + seed, class);
        let Some(plan) = solve_plan(&spec, backend)? else {
            continue;
        };
        verify_plan(&plan, &spec).map_err(|v| format!("seed {seed}: solver plan rejected: {v}"))?;

        // drop one used communication link
        for link in links_of(&plan.comm_events) {
            let mut m = plan.clone();
            m.comm_events.retain(|e| (e.t, e.from, e.to) != link);
            let expect_ok = requirements_hold(&m, &spec);
            let got_ok = check_requirements(&plan_reachability(&m, &spec), &spec).is_ok();
            ensure(expect_ok == got_ok, || {
                format!("seed {seed} link {link:?}: oracle {expect_ok}, verifier {got_ok}")
            })?;
            if expect_ok {
                comm_kept += 1;
            } else {
                comm_flips += 1;
            }
        }

        // a gated agent leaves one step earlier
        for (r, path) in plan.paths.iter().enumerate() {
            if spec.agents.masters.contains(&r) {
                continue;
            }
            let Some(t0) = (0..plan.horizon()).find(|&t| path[t + 1] != path[0]) else {
                continue;
            };
            if t0 == 0 {
                continue;
            }
            let mut m = plan.clone();
            let shifted: Vec<StateId> = (0..path.len())
                .map(|t| {
                    if t < t0 {
                        path[t]
                    } else {
                        path[(t + 1).min(path.len() - 1)]
                    }
                })
                .collect();
            m.paths[r] = shifted;
            let expect_ok = consistent(&m, &spec);
            let got_ok = check_consistency(&m, &spec).is_ok();
            ensure(expect_ok == got_ok, || {
                format!("seed {seed} agent {r}: oracle {expect_ok}, verifier {got_ok}")
            })?;
            if expect_ok {
                gate_kept += 1;
            } else {
                gate_flips += 1;
            }
        }
    }
    ensure(comm_flips + gate_flips >= 20, || {
        format!("only {} flipping mutations", comm_flips + gate_flips)
    })?;
    ensure(comm_flips > 0 && gate_flips > 0, || {
        format!("comm {comm_flips}, gate {gate_flips}")
    })?;
    Ok(format!(
        "{comm_flips} link deletions and {gate_flips} early departures flip the check ({comm_kept} and {gate_kept} harmless ones agree)"
    ))
}

fn main() -> ExitCode {
    let backend = default_backend();
    let b = backend.as_ref();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("oracle equivalence", Box::new(|| oracle_equivalence(b))),
        ("figure instances", Box::new(|| figures(b))),
        ("consistency dominance", Box::new(|| dominance(b))),
        ("line-graph scalability", Box::new(|| scalability(b))),
        ("flow row count", Box::new(flow_rows)),
        ("clustering invariants", Box::new(clustering)),
        ("end-to-end exploration", Box::new(|| exploration(b))),
        ("mutation detection", Box::new(|| mutations(b))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let took = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {} {name}: {detail} [{took:.1}s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name}: {why} [{took:.1}s]", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
