//! One planning instance: network, agents, horizon, information requirements,
//! rewards and extension toggles.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{MobilityCommNetwork, NetworkDoc, NetworkError, StateId};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("configuration error: {0}")]
    Config(String),
}

fn config(msg: impl Into<String>) -> ProblemError {
    ProblemError::Config(msg.into())
}

/// Agents are numbered `0..count()`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct AgentConfig {
    pub initial: Vec<StateId>,
    pub static_agents: BTreeSet<usize>,
    /// `None` means every agent may collect terminal rewards.
    pub frontier_capable: Option<BTreeSet<usize>>,
    pub masters: BTreeSet<usize>,
}

impl AgentConfig {
    pub fn new(initial: Vec<StateId>) -> Self {
        AgentConfig {
            initial,
            ..Default::default()
        }
    }

    pub fn count(&self) -> usize {
        self.initial.len()
    }

    pub fn is_static(&self, r: usize) -> bool {
        self.static_agents.contains(&r)
    }

    pub fn dynamic_agents(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.count()).filter(|r| !self.is_static(*r))
    }

    pub fn can_collect(&self, r: usize) -> bool {
        self.frontier_capable.as_ref().is_none_or(|set| set.contains(&r))
    }

    /// Initial states of the masters.
    pub fn master_starts(&self) -> BTreeSet<StateId> {
        self.masters.iter().map(|&m| self.initial[m]).collect()
    }

    /// Agents whose start is not a master start; these are the agents the
    /// master flow has to unlock.
    pub fn gated_agents(&self) -> Vec<usize> {
        let starts = self.master_starts();
        (0..self.count())
            .filter(|r| !starts.contains(&self.initial[*r]))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowOrientation {
    OneToMany,
    ManyToOne,
    #[default]
    Auto,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Extensions {
    pub information_consistent: bool,
    pub collision_avoidance: bool,
    /// Agent pairs that must avoid each other; `None` means all pairs.
    pub collision_pairs: Option<Vec<(usize, usize)>>,
    pub awareness_reward: bool,
    pub return_to_base: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec<W> {
    pub net: MobilityCommNetwork<W>,
    pub agents: AgentConfig,
    pub horizon: usize,
    pub src: BTreeSet<usize>,
    pub snk: BTreeSet<usize>,
    /// Terminal reward for having at least `k` agents in `s` at the horizon.
    pub rewards: BTreeMap<(StateId, usize), W>,
    pub orientation: FlowOrientation,
    pub extensions: Extensions,
    /// Big-M constant; `None` selects `max(R, |S|)`.
    pub big_m: Option<usize>,
}

impl<W: Scalar> ProblemSpec<W> {
    pub fn new(net: MobilityCommNetwork<W>, initial: Vec<StateId>, horizon: usize) -> Self {
        ProblemSpec {
            net,
            agents: AgentConfig::new(initial),
            horizon,
            src: BTreeSet::new(),
            snk: BTreeSet::new(),
            rewards: BTreeMap::new(),
            orientation: FlowOrientation::Auto,
            extensions: Extensions::default(),
            big_m: None,
        }
    }

    pub fn num_agents(&self) -> usize {
        self.agents.count()
    }

    pub fn big_m(&self) -> usize {
        self.big_m.unwrap_or_else(|| self.min_big_m())
    }

    fn min_big_m(&self) -> usize {
        self.num_agents().max(self.net.num_states())
    }

    /// Orientation actually used by the flow family. `Auto` picks the one
    /// with fewer balance constraints, preferring one-to-many on a tie.
    pub fn resolved_orientation(&self) -> FlowOrientation {
        match self.orientation {
            FlowOrientation::Auto if self.snk.len() < self.src.len() => FlowOrientation::ManyToOne,
            FlowOrientation::Auto => FlowOrientation::OneToMany,
            o => o,
        }
    }

    /// Identifiers of the data flows (sources for one-to-many, sinks for
    /// many-to-one). Empty when either side is empty.
    pub fn flow_ids(&self) -> Vec<usize> {
        if self.src.is_empty() || self.snk.is_empty() {
            return Vec::new();
        }
        match self.resolved_orientation() {
            FlowOrientation::ManyToOne => self.snk.iter().copied().collect(),
            _ => self.src.iter().copied().collect(),
        }
    }

    /// States from which a plan can be handed to a dynamic agent: the static
    /// masters' starts, extended through static relays in communication
    /// range, plus every state those can transmit to.
    pub fn static_master_region(&self) -> BTreeSet<StateId> {
        let a = &self.agents;
        let mut core: BTreeSet<StateId> = a
            .masters
            .iter()
            .filter(|m| a.is_static(**m))
            .map(|&m| a.initial[m])
            .collect();
        loop {
            let mut grew = false;
            for &r in &a.static_agents {
                let s = a.initial[r];
                if !core.contains(&s) && core.iter().any(|&c| self.net.has_comm(c, s)) {
                    core.insert(s);
                    grew = true;
                }
            }
            if !grew {
                break;
            }
        }
        let mut region = core.clone();
        for &c in &core {
            for &ei in self.net.comm_out(c) {
                region.insert(self.net.comm_edges()[ei].to);
            }
        }
        region
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        let r = self.num_agents();
        if r == 0 {
            return Err(config("no agents"));
        }
        for (i, s) in self.agents.initial.iter().enumerate() {
            if !self.net.contains(*s) {
                return Err(config(format!("agent {i} starts at unknown state {s}")));
            }
        }
        let check = |name: &str, set: &BTreeSet<usize>| -> Result<(), ProblemError> {
            match set.iter().find(|&&i| i >= r) {
                Some(i) => Err(config(format!("{name} names agent {i}, only {r} agents"))),
                None => Ok(()),
            }
        };
        check("src", &self.src)?;
        check("snk", &self.snk)?;
        check("masters", &self.agents.masters)?;
        check("static_agents", &self.agents.static_agents)?;
        if let Some(fc) = &self.agents.frontier_capable {
            check("frontier_capable", fc)?;
        }
        for &(s, k) in self.rewards.keys() {
            if k == 0 || !self.net.contains(s) {
                return Err(config(format!("reward entry ({s}, {k}) is out of range")));
            }
        }
        if self.rewards.values().any(|v| !v.is_finite()) {
            return Err(config("non-finite reward"));
        }
        if let Some(n) = self.big_m {
            if n < self.min_big_m() {
                return Err(config(format!(
                    "big_m {n} is below max(R, |S|) = {}",
                    self.min_big_m()
                )));
            }
        }
        let ext = &self.extensions;
        if ext.information_consistent && self.agents.masters.is_empty() {
            return Err(config("information_consistent requires at least one master"));
        }
        if ext.awareness_reward && !ext.information_consistent {
            return Err(config("awareness_reward requires information_consistent"));
        }
        if ext.return_to_base {
            let static_master = self.agents.masters.iter().any(|m| self.agents.is_static(*m));
            if !static_master {
                return Err(config("return_to_base requires a static master"));
            }
            if self.agents.dynamic_agents().next().is_none() {
                return Err(config("return_to_base requires a dynamic agent"));
            }
        }
        if let Some(pairs) = &ext.collision_pairs {
            if let Some((i, j)) = pairs.iter().find(|(i, j)| *i >= r || *j >= r || i == j) {
                return Err(config(format!("collision pair ({i}, {j}) is invalid")));
            }
        }
        Ok(())
    }

    /// Agent pairs subject to collision avoidance, each as `(i, j)` with `i < j`.
    pub fn collision_pairs(&self) -> Vec<(usize, usize)> {
        if !self.extensions.collision_avoidance {
            return Vec::new();
        }
        let mut pairs: Vec<(usize, usize)> = match &self.extensions.collision_pairs {
            Some(p) => p.iter().map(|&(i, j)| (i.min(j), i.max(j))).collect(),
            None => {
                let r = self.num_agents();
                (0..r).flat_map(|i| (i + 1..r).map(move |j| (i, j))).collect()
            }
        };
        pairs.sort_unstable();
        pairs.dedup();
        pairs
    }

    /// Value collected at the horizon when `count` reward-capable agents end
    /// in `s` (only positive entries are worth taking).
    pub fn reward_for(&self, s: StateId, count: usize) -> W {
        if count == 0 {
            return W::zero();
        }
        self.rewards
            .range((s, 1)..=(s, count))
            .map(|(_, v)| v.max(W::zero()))
            .fold(W::zero(), |a, b| a + b)
    }
}

/// JSON `problem` section of an instance file. Agent starts and reward
/// states are referenced by state name; agents by 0-based index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemDoc {
    pub agents: Vec<String>,
    pub horizon: usize,
    #[serde(default)]
    pub src: Vec<usize>,
    #[serde(default)]
    pub snk: Vec<usize>,
    #[serde(default)]
    pub masters: Vec<usize>,
    #[serde(default)]
    pub static_agents: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frontier_capable: Option<Vec<usize>>,
    #[serde(default)]
    pub rewards: Vec<RewardDoc>,
    #[serde(default)]
    pub orientation: FlowOrientation,
    #[serde(default)]
    pub information_consistent: bool,
    #[serde(default)]
    pub collision_avoidance: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collision_pairs: Option<Vec<(usize, usize)>>,
    #[serde(default)]
    pub awareness_reward: bool,
    #[serde(default)]
    pub return_to_base: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub big_m: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardDoc {
    pub state: String,
    #[serde(default = "one")]
    pub k: usize,
    pub value: f64,
}

fn one() -> usize {
    1
}

/// Instance file: the network document plus an optional `problem` section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceDoc {
    #[serde(flatten)]
    pub network: NetworkDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemDoc>,
}

impl ProblemDoc {
    pub fn into_spec<W: Scalar>(&self, net: MobilityCommNetwork<W>) -> Result<ProblemSpec<W>, ProblemError> {
        let initial = self
            .agents
            .iter()
            .map(|n| net.state_id(n))
            .collect::<Result<Vec<_>, _>>()?;
        let mut rewards = BTreeMap::new();
        for r in &self.rewards {
            let s = net.state_id(&r.state)?;
            rewards.insert((s, r.k), W::from_f64_lossy(r.value));
        }
        let spec = ProblemSpec {
            agents: AgentConfig {
                initial,
                static_agents: self.static_agents.iter().copied().collect(),
                frontier_capable: self
                    .frontier_capable
                    .as_ref()
                    .map(|v| v.iter().copied().collect()),
                masters: self.masters.iter().copied().collect(),
            },
            net,
            horizon: self.horizon,
            src: self.src.iter().copied().collect(),
            snk: self.snk.iter().copied().collect(),
            rewards,
            orientation: self.orientation,
            extensions: Extensions {
                information_consistent: self.information_consistent,
                collision_avoidance: self.collision_avoidance,
                collision_pairs: self.collision_pairs.clone(),
                awareness_reward: self.awareness_reward,
                return_to_base: self.return_to_base,
            },
            big_m: self.big_m,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_spec<W: Scalar>(spec: &ProblemSpec<W>) -> Self {
        let name = |s: StateId| spec.net.name(s).to_string();
        ProblemDoc {
            agents: spec.agents.initial.iter().map(|&s| name(s)).collect(),
            horizon: spec.horizon,
            src: spec.src.iter().copied().collect(),
            snk: spec.snk.iter().copied().collect(),
            masters: spec.agents.masters.iter().copied().collect(),
            static_agents: spec.agents.static_agents.iter().copied().collect(),
            frontier_capable: spec
                .agents
                .frontier_capable
                .as_ref()
                .map(|s| s.iter().copied().collect()),
            rewards: spec
                .rewards
                .iter()
                .map(|(&(s, k), v)| RewardDoc {
                    state: name(s),
                    k,
                    value: v.as_f64(),
                })
                .collect(),
            orientation: spec.orientation,
            information_consistent: spec.extensions.information_consistent,
            collision_avoidance: spec.extensions.collision_avoidance,
            collision_pairs: spec.extensions.collision_pairs.clone(),
            awareness_reward: spec.extensions.awareness_reward,
            return_to_base: spec.extensions.return_to_base,
            big_m: spec.big_m,
        }
    }
}

/// Parses an instance file that must carry a `problem` section.
pub fn load_problem<W: Scalar>(document: &str) -> Result<ProblemSpec<W>, ProblemError> {
    let doc: InstanceDoc = serde_json::from_str(document).map_err(|e| NetworkError::Parse(e.to_string()))?;
    let net = doc.network.into_network()?;
    let problem = doc
        .problem
        .ok_or_else(|| config("instance has no `problem` section"))?;
    problem.into_spec(net)
}

pub fn instance_document<W: Scalar>(spec: &ProblemSpec<W>) -> InstanceDoc {
    InstanceDoc {
        network: NetworkDoc::from_network(&spec.net),
        problem: Some(ProblemDoc::from_spec(spec)),
    }
}
