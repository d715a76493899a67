use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{EdgeWeight, MobilityCommNetwork, NetworkBuilder, NetworkError};
use crate::scalar::Scalar;

/// On-disk (JSON) form of a network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkDoc {
    pub states: Vec<String>,
    #[serde(default)]
    pub mobility_edges: Vec<EdgeDoc>,
    #[serde(default)]
    pub comm_edges: Vec<EdgeDoc>,
    #[serde(default = "default_true")]
    pub self_loops: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeDoc {
    pub from: String,
    pub to: String,
    #[serde(default)]
    pub weight: f64,
    /// Per-step overrides of `weight`, keyed by time step.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub schedule: BTreeMap<usize, f64>,
}

fn default_true() -> bool {
    true
}

impl EdgeDoc {
    fn weight<W: Scalar>(&self) -> EdgeWeight<W> {
        EdgeWeight {
            base: W::from_f64_lossy(self.weight),
            schedule: self
                .schedule
                .iter()
                .map(|(&t, &w)| (t, W::from_f64_lossy(w)))
                .collect(),
        }
    }
}

impl NetworkDoc {
    pub fn into_network<W: Scalar>(&self) -> Result<MobilityCommNetwork<W>, NetworkError> {
        let mut b = NetworkBuilder::new().states(self.states.iter().cloned());
        for e in &self.mobility_edges {
            b = b.mobility_weighted(e.from.clone(), e.to.clone(), e.weight());
        }
        for e in &self.comm_edges {
            b = b.comm_weighted(e.from.clone(), e.to.clone(), e.weight());
        }
        b.build(self.self_loops)
    }

    /// Document describing `net` exactly (auto-inserted loops are written out
    /// explicitly, so `self_loops` is false).
    pub fn from_network<W: Scalar>(net: &MobilityCommNetwork<W>) -> Self {
        let edge = |e: &super::Edge<W>| EdgeDoc {
            from: net.name(e.from).to_string(),
            to: net.name(e.to).to_string(),
            weight: e.weight.base.as_f64(),
            schedule: e.weight.schedule.iter().map(|(&t, w)| (t, w.as_f64())).collect(),
        };
        NetworkDoc {
            states: net.names().to_vec(),
            mobility_edges: net.mobility_edges().iter().map(edge).collect(),
            comm_edges: net.comm_edges().iter().map(edge).collect(),
            self_loops: false,
        }
    }
}

/// Parses and validates an instance document.
pub fn load_network<W: Scalar>(document: &str) -> Result<MobilityCommNetwork<W>, NetworkError> {
    let doc: NetworkDoc = serde_json::from_str(document).map_err(|e| NetworkError::Parse(e.to_string()))?;
    doc.into_network()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Network;

    const FIG1: &str = r#"{
        "states": ["s0", "s1", "s2", "s3"],
        "mobility_edges": [
            {"from": "s0", "to": "s1", "weight": 1}, {"from": "s1", "to": "s0", "weight": 1},
            {"from": "s1", "to": "s2", "weight": 1}, {"from": "s2", "to": "s1", "weight": 1},
            {"from": "s2", "to": "s3", "weight": 1}, {"from": "s3", "to": "s2", "weight": 1}
        ],
        "comm_edges": [
            {"from": "s0", "to": "s1"}, {"from": "s1", "to": "s0"},
            {"from": "s1", "to": "s2"}, {"from": "s2", "to": "s1"},
            {"from": "s2", "to": "s3"}, {"from": "s3", "to": "s2"}
        ]
    }"#;

    #[test]
    fn loads_line_instance() {
        let net: Network = load_network(FIG1).unwrap();
        assert_eq!(net.num_states(), 4);
        assert_eq!(net.mobility_edges().len(), 10);
        assert_eq!(net.comm_edges().len(), 6);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(
            load_network::<f64>(r#"{"states": []}"#),
            Err(NetworkError::Parse(_))
        ));
        assert!(matches!(
            load_network::<f64>("not json"),
            Err(NetworkError::Parse(_))
        ));
        let dangling = r#"{"states": ["a"], "comm_edges": [{"from": "a", "to": "zz"}]}"#;
        assert!(matches!(
            load_network::<f64>(dangling),
            Err(NetworkError::DanglingEndpoint(_))
        ));
        let negative =
            r#"{"states": ["a", "b"], "mobility_edges": [{"from": "a", "to": "b", "weight": -2}]}"#;
        assert!(matches!(
            load_network::<f64>(negative),
            Err(NetworkError::BadWeight { .. })
        ));
    }

    #[test]
    fn single_state_document() {
        let net: Network = load_network(r#"{"states": ["only"]}"#).unwrap();
        assert_eq!(net.mobility_edges().len(), 1);
        let no_loops: Network = load_network(r#"{"states": ["only"], "self_loops": false}"#).unwrap();
        assert!(no_loops.mobility_edges().is_empty());
    }

    #[test]
    fn schedules_survive_round_trip() {
        let doc = r#"{"states": ["a", "b"],
            "mobility_edges": [{"from": "a", "to": "b", "weight": 1, "schedule": {"2": 4.5}}]}"#;
        let net: Network = load_network(doc).unwrap();
        let e = net
            .mobility_edge(net.state_id("a").unwrap(), net.state_id("b").unwrap())
            .unwrap();
        assert_eq!(net.mobility_edges()[e].weight.at(2), 4.5);
        let back = NetworkDoc::from_network(&net);
        let again: Network = back.into_network().unwrap();
        assert_eq!(again.mobility_edges(), net.mobility_edges());
    }

    #[test]
    fn generic_over_f32() {
        let net: crate::Network32 = load_network(FIG1).unwrap();
        assert_eq!(net.mobility_edges()[0].weight.base, 1.0f32);
    }
}
