use std::collections::BTreeMap;

use thiserror::Error;

use super::{PlanSolution, FLOW_EPS};
use crate::ilp::FlowId;
use crate::network::{StateId, TimeVertex};

#[derive(Clone, Debug, PartialEq)]
pub struct InfoPath {
    pub flow: FlowId,
    pub amount: f64,
    pub vertices: Vec<TimeVertex>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Decomposition {
    pub paths: Vec<InfoPath>,
    /// Circulations stripped from the flow; they carry nothing between
    /// agents.
    pub cycles: Vec<InfoPath>,
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum DecomposeError {
    #[error("flow {flow} is unbalanced at {state} t={t} (net inflow {net})")]
    Unbalanced {
        flow: FlowId,
        state: StateId,
        t: usize,
        net: f64,
    },
}

type Arcs = BTreeMap<(TimeVertex, TimeVertex), f64>;

/// Greedy path stripping over the time-extended graph, one flow id at a
/// time. Supply may only sit at `t = 0`; data flows may only be absorbed at
/// `t = T`, the master flow anywhere.
pub fn decompose_flows(sol: &PlanSolution) -> Result<Decomposition, DecomposeError> {
    let horizon = sol.horizon();
    let mut per_flow: BTreeMap<FlowId, Arcs> = BTreeMap::new();
    for e in &sol.comm_events {
        if e.amount > FLOW_EPS && e.from != e.to {
            *per_flow
                .entry(e.flow)
                .or_default()
                .entry((TimeVertex::new(e.from, e.t), TimeVertex::new(e.to, e.t)))
                .or_default() += e.amount;
        }
    }
    for e in &sol.flow_moves {
        if e.amount > FLOW_EPS {
            *per_flow
                .entry(e.flow)
                .or_default()
                .entry((TimeVertex::new(e.from, e.t), TimeVertex::new(e.to, e.t + 1)))
                .or_default() += e.amount;
        }
    }

    let mut out = Decomposition::default();
    for (flow, mut arcs) in per_flow {
        let mut net: BTreeMap<TimeVertex, f64> = BTreeMap::new();
        for (&(u, v), &a) in &arcs {
            *net.entry(v).or_default() += a;
            *net.entry(u).or_default() -= a;
        }
        for (&v, &n) in &net {
            let supply_ok = v.t == 0;
            let sink_ok = flow == FlowId::Master || v.t == horizon;
            if (n < -FLOW_EPS && !supply_ok) || (n > FLOW_EPS && !sink_ok) {
                return Err(DecomposeError::Unbalanced {
                    flow,
                    state: v.state,
                    t: v.t,
                    net: n,
                });
            }
        }
        let mut supply: BTreeMap<TimeVertex, f64> = net
            .iter()
            .filter(|(_, &n)| n < -FLOW_EPS)
            .map(|(&v, &n)| (v, -n))
            .collect();
        let mut excess: BTreeMap<TimeVertex, f64> = net
            .iter()
            .filter(|(_, &n)| n > FLOW_EPS)
            .map(|(&v, &n)| (v, n))
            .collect();

        while let Some((&src, _)) = supply.iter().find(|(_, &a)| a > FLOW_EPS) {
            let mut walk = vec![src];
            loop {
                let cur = *walk.last().expect("non-empty walk");
                if walk.len() > 1 && excess.get(&cur).is_some_and(|&a| a > FLOW_EPS) {
                    let mut amount = supply[&src].min(excess[&cur]);
                    for w in walk.windows(2) {
                        amount = amount.min(arcs[&(w[0], w[1])]);
                    }
                    for w in walk.windows(2) {
                        consume(&mut arcs, (w[0], w[1]), amount);
                    }
                    *supply.get_mut(&src).expect("source") -= amount;
                    *excess.get_mut(&cur).expect("sink") -= amount;
                    out.paths.push(InfoPath {
                        flow,
                        amount,
                        vertices: walk,
                    });
                    break;
                }
                let next = arcs
                    .range((cur, TimeVertex::new(StateId(0), 0))..)
                    .take_while(|((u, _), _)| *u == cur)
                    .find(|(_, &a)| a > FLOW_EPS)
                    .map(|((_, v), _)| *v);
                let Some(next) = next else {
                    // numerically exhausted source
                    supply.insert(src, 0.0);
                    break;
                };
                if let Some(pos) = walk.iter().position(|&v| v == next) {
                    let cycle: Vec<TimeVertex> = walk[pos..].iter().copied().chain([next]).collect();
                    strip_cycle(&mut arcs, flow, cycle, &mut out);
                    walk.truncate(pos + 1);
                    continue;
                }
                walk.push(next);
            }
        }
        // leftover positive arcs form circulations
        while let Some((&(u, _), _)) = arcs.iter().find(|(_, &a)| a > FLOW_EPS) {
            let mut walk = vec![u];
            loop {
                let cur = *walk.last().expect("non-empty walk");
                let next = arcs
                    .range((cur, TimeVertex::new(StateId(0), 0))..)
                    .take_while(|((a, _), _)| *a == cur)
                    .find(|(_, &a)| a > FLOW_EPS)
                    .map(|((_, v), _)| *v);
                let Some(next) = next else {
                    // residue below tolerance; drop it
                    for (_, a) in arcs.iter_mut().filter(|((a, _), _)| *a == cur) {
                        *a = 0.0;
                    }
                    break;
                };
                if let Some(pos) = walk.iter().position(|&v| v == next) {
                    let cycle: Vec<TimeVertex> = walk[pos..].iter().copied().chain([next]).collect();
                    strip_cycle(&mut arcs, flow, cycle, &mut out);
                    break;
                }
                walk.push(next);
            }
        }
    }
    Ok(out)
}

fn consume(arcs: &mut Arcs, arc: (TimeVertex, TimeVertex), amount: f64) {
    let a = arcs.get_mut(&arc).expect("arc on walk");
    *a -= amount;
}

fn strip_cycle(arcs: &mut Arcs, flow: FlowId, cycle: Vec<TimeVertex>, out: &mut Decomposition) {
    let amount = cycle
        .windows(2)
        .map(|w| arcs[&(w[0], w[1])])
        .fold(f64::INFINITY, f64::min);
    for w in cycle.windows(2) {
        consume(arcs, (w[0], w[1]), amount);
    }
    log::warn!("discarding flow cycle of {amount} on flow {flow}");
    out.cycles.push(InfoPath {
        flow,
        amount,
        vertices: cycle,
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::FlowEvent;

    fn ev(t: usize, from: usize, to: usize, amount: f64) -> FlowEvent {
        FlowEvent {
            t,
            from: StateId(from),
            to: StateId(to),
            flow: FlowId::Agent(0),
            amount,
        }
    }

    fn plan(horizon: usize, comm: Vec<FlowEvent>, moves: Vec<FlowEvent>) -> PlanSolution {
        PlanSolution {
            paths: vec![vec![StateId(0); horizon + 1]],
            comm_events: comm,
            flow_moves: moves,
            ..Default::default()
        }
    }

    fn arc_totals(paths: &[InfoPath]) -> BTreeMap<(TimeVertex, TimeVertex), f64> {
        let mut m = BTreeMap::new();
        for p in paths {
            for w in p.vertices.windows(2) {
                *m.entry((w[0], w[1])).or_default() += p.amount;
            }
        }
        m
    }

    #[test]
    fn single_chain() {
        let sol = plan(1, vec![ev(0, 0, 1, 1.0)], vec![ev(0, 1, 2, 1.0)]);
        let d = decompose_flows(&sol).unwrap();
        assert_eq!(d.paths.len(), 1);
        assert_eq!(
            d.paths[0].vertices,
            vec![
                TimeVertex::new(StateId(0), 0),
                TimeVertex::new(StateId(1), 0),
                TimeVertex::new(StateId(2), 1)
            ]
        );
        assert!(d.cycles.is_empty());
    }

    #[test]
    fn split_to_two_sinks_shares_prefix() {
        // 0 -> 1 carries 2 units at t=0, then one unit each to 2 and 3 at t=1
        let sol = plan(
            1,
            vec![ev(0, 0, 1, 2.0), ev(1, 1, 2, 1.0), ev(1, 1, 3, 1.0)],
            vec![ev(0, 1, 1, 2.0)],
        );
        let d = decompose_flows(&sol).unwrap();
        assert_eq!(d.paths.len(), 2);
        for p in &d.paths {
            assert_eq!(p.amount, 1.0);
            assert_eq!(&p.vertices[..3], &d.paths[0].vertices[..3]);
        }
    }

    #[test]
    fn comm_cycle_is_stripped() {
        let base = plan(1, vec![ev(0, 0, 1, 1.0)], vec![ev(0, 1, 1, 1.0)]);
        let mut with_cycle = base.clone();
        with_cycle.comm_events.push(ev(1, 1, 2, 0.5));
        with_cycle.comm_events.push(ev(1, 2, 1, 0.5));
        let a = decompose_flows(&base).unwrap();
        let b = decompose_flows(&with_cycle).unwrap();
        assert_eq!(a.paths, b.paths);
        assert_eq!(b.cycles.len(), 1);
        assert_eq!(b.cycles[0].amount, 0.5);
    }

    #[test]
    fn unbalanced_interior_is_an_error() {
        let sol = plan(2, vec![ev(0, 0, 1, 1.0)], vec![]);
        assert!(matches!(
            decompose_flows(&sol),
            Err(DecomposeError::Unbalanced { t: 0, .. })
        ));
    }

    #[test]
    fn totals_are_conserved() {
        let sol = plan(
            2,
            vec![ev(0, 0, 1, 3.0), ev(1, 1, 2, 1.0), ev(2, 2, 3, 1.0)],
            vec![ev(0, 1, 1, 3.0), ev(1, 1, 1, 2.0), ev(1, 2, 2, 1.0)],
        );
        let d = decompose_flows(&sol).unwrap();
        let totals = arc_totals(&d.paths);
        let c = ev(0, 0, 1, 0.0);
        let key = (TimeVertex::new(c.from, 0), TimeVertex::new(c.to, 0));
        assert!((totals[&key] - 3.0).abs() < 1e-9);
        let sum: f64 = d.paths.iter().map(|p| p.amount).sum();
        assert!((sum - 3.0).abs() < 1e-9);
    }
}
