//! Seeded generator of tiny instances small enough for [`brute_force_solve`].
//!
//! [`brute_force_solve`]: super::brute_force_solve

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::network::{NetworkBuilder, StateId};
use crate::problem::{FlowOrientation, ProblemSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemClass {
    P1,
    P2,
    P2Collision,
    P2Awareness,
}

impl ProblemClass {
    pub const ALL: [ProblemClass; 4] = [
        ProblemClass::P1,
        ProblemClass::P2,
        ProblemClass::P2Collision,
        ProblemClass::P2Awareness,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ProblemClass::P1 => "P1",
            ProblemClass::P2 => "P2",
            ProblemClass::P2Collision => "P2+collision",
            ProblemClass::P2Awareness => "P2+awareness",
        }
    }
}

/// Random instance with `|S| <= 5`, `R <= 3`, `T <= 3` and at most two
/// non-loop mobility edges out of any state, so the joint plan count stays
/// below 3^9.
pub fn random_instance(seed: u64, class: ProblemClass) -> ProblemSpec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=5);
    let names: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let mut b = NetworkBuilder::new().states(names.iter().cloned());
    let mut out_deg = vec![0usize; n];
    let mut mob = std::collections::BTreeSet::new();
    for w in order.windows(2) {
        let (a, c) = (w[0], w[1]);
        let cost = rng.gen_range(0..=2) as f64;
        b = b.mobility_bidir(names[a].clone(), names[c].clone(), cost);
        out_deg[a] += 1;
        out_deg[c] += 1;
        mob.insert((a, c));
        mob.insert((c, a));
    }
    // an occasional one-way shortcut
    if n > 2 && rng.gen_bool(0.5) {
        let a = rng.gen_range(0..n);
        let c = rng.gen_range(0..n);
        if a != c && out_deg[a] < 2 && !mob.contains(&(a, c)) {
            b = b.mobility(names[a].clone(), names[c].clone(), rng.gen_range(0..=2) as f64);
        }
    }
    for a in 0..n {
        for c in 0..n {
            if a != c && rng.gen_bool(0.35) {
                let cost = [0.0, 0.5, 1.0][rng.gen_range(0..3)];
                b = b.comm(names[a].clone(), names[c].clone(), cost);
            }
        }
    }
    let net = b.build(true).expect("generated network is valid");

    let r = rng.gen_range(1..=3);
    let initial: Vec<StateId> = (0..r).map(|_| StateId(rng.gen_range(0..n))).collect();
    let horizon = rng.gen_range(0..=3);
    let mut spec = ProblemSpec::new(net, initial, horizon);
    let pick = |rng: &mut ChaCha8Rng| -> std::collections::BTreeSet<usize> {
        (0..r).filter(|_| rng.gen_bool(0.6)).collect()
    };
    if rng.gen_bool(0.85) {
        spec.src = pick(&mut rng);
        spec.snk = pick(&mut rng);
    }
    spec.orientation = [
        FlowOrientation::Auto,
        FlowOrientation::OneToMany,
        FlowOrientation::ManyToOne,
    ][rng.gen_range(0..3)];
    for _ in 0..rng.gen_range(1..=3) {
        let s = StateId(rng.gen_range(0..n));
        let k = rng.gen_range(1..=2);
        spec.rewards.insert((s, k), rng.gen_range(1..=10) as f64);
    }
    if class != ProblemClass::P1 {
        spec.extensions.information_consistent = true;
        spec.agents.masters.insert(rng.gen_range(0..r));
        if r > 1 && rng.gen_bool(0.2) {
            spec.agents.masters.insert(rng.gen_range(0..r));
        }
    }
    spec.extensions.collision_avoidance = class == ProblemClass::P2Collision;
    spec.extensions.awareness_reward = class == ProblemClass::P2Awareness;
    spec
}
