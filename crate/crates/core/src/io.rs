//! JSON file formats for instances and matchings.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{validate_graph, Caps, Chain, Cycle, EdgeId, EdgeSpec, ExchangeGraph, Matching, VertexKind};

pub const INSTANCE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexRecord {
    pub id: usize,
    pub kind: VertexKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub id: usize,
    pub src: usize,
    pub dst: usize,
    pub weight: f64,
    pub fail_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub version: u32,
    pub vertices: Vec<VertexRecord>,
    pub edges: Vec<EdgeRecord>,
}

impl InstanceFile {
    pub fn from_graph(graph: &ExchangeGraph) -> Self {
        Self {
            version: INSTANCE_VERSION,
            vertices: graph
                .vertices()
                .iter()
                .map(|v| VertexRecord { id: v.id, kind: v.kind })
                .collect(),
            edges: graph
                .edges()
                .iter()
                .map(|e| EdgeRecord {
                    id: e.id,
                    src: e.src,
                    dst: e.dst,
                    weight: e.weight,
                    fail_prob: e.fail_prob,
                })
                .collect(),
        }
    }

    /// Builds the graph, rejecting unknown versions, non-contiguous ids and
    /// anything [`validate_graph`] objects to (including duplicate arcs).
    pub fn to_graph(&self) -> Result<ExchangeGraph> {
        if self.version != INSTANCE_VERSION {
            return Err(Error::InvalidGraph(format!("unsupported instance version {}", self.version)));
        }
        for (i, v) in self.vertices.iter().enumerate() {
            if v.id != i {
                return Err(Error::InvalidGraph(format!("vertex at position {i} has id {}", v.id)));
            }
        }
        for (i, e) in self.edges.iter().enumerate() {
            if e.id != i {
                return Err(Error::InvalidGraph(format!("edge at position {i} has id {}", e.id)));
            }
        }
        let graph = ExchangeGraph::new(
            self.vertices.iter().map(|v| v.kind).collect(),
            self.edges
                .iter()
                .map(|e| EdgeSpec::new(e.src, e.dst, e.weight, e.fail_prob))
                .collect(),
        )?;
        let problems = validate_graph(&graph);
        if !problems.is_empty() {
            let msgs: Vec<String> = problems.iter().map(|p| p.to_string()).collect();
            return Err(Error::InvalidGraph(msgs.join("; ")));
        }
        Ok(graph)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// SHA-256 of the compact JSON encoding, hex encoded.
    pub fn content_hash(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }
}

pub fn instance_hash(graph: &ExchangeGraph) -> Result<String> {
    InstanceFile::from_graph(graph).content_hash()
}

pub fn write_instance(graph: &ExchangeGraph, path: &Path) -> Result<()> {
    let mut text = InstanceFile::from_graph(graph).to_json()?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_instance(path: &Path) -> Result<ExchangeGraph> {
    let text = fs::read_to_string(path)?;
    let file: InstanceFile = serde_json::from_str(&text)?;
    file.to_graph()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingFile {
    pub instance_hash: String,
    pub method: String,
    pub caps: Caps,
    /// Objective in the weight convention (larger is better).
    pub objective_value: f64,
    /// Minimized loss, for models solved in the loss convention.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective_loss: Option<f64>,
    pub cycles: Vec<Vec<EdgeId>>,
    pub chains: Vec<Vec<EdgeId>>,
    pub solve_seconds: f64,
    #[serde(default)]
    pub optimal: bool,
}

impl MatchingFile {
    pub fn matching(&self, graph: &ExchangeGraph) -> Result<Matching> {
        let mut m = Matching {
            cycles: self
                .cycles
                .iter()
                .map(|c| Cycle::from_edges(graph, c))
                .collect::<Result<_>>()?,
            chains: self
                .chains
                .iter()
                .map(|c| Chain::from_edges(graph, c))
                .collect::<Result<_>>()?,
        };
        m.normalize();
        Ok(m)
    }

    /// Checks the hash and that the structures form a feasible matching of
    /// `graph` under the recorded caps.
    pub fn validate_against(&self, graph: &ExchangeGraph) -> Result<Matching> {
        let hash = instance_hash(graph)?;
        if hash != self.instance_hash {
            return Err(Error::InvalidMatching(format!(
                "matching was computed for instance {}, not {hash}",
                self.instance_hash
            )));
        }
        let m = self.matching(graph)?;
        let problems = crate::graph::matching_problems(graph, &m, self.caps);
        if !problems.is_empty() {
            return Err(Error::InvalidMatching(problems.join("; ")));
        }
        Ok(m)
    }
}

pub fn edge_lists(matching: &Matching) -> (Vec<Vec<EdgeId>>, Vec<Vec<EdgeId>>) {
    (
        matching.cycles.iter().map(|c| c.edges.clone()).collect(),
        matching.chains.iter().map(|c| c.edges.clone()).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::*;

    #[test]
    fn instance_round_trip() {
        let g = figure1();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.json");
        write_instance(&g, &path).unwrap();
        assert_eq!(read_instance(&path).unwrap(), g);
        assert_eq!(instance_hash(&g).unwrap(), instance_hash(&read_instance(&path).unwrap()).unwrap());
    }

    #[test]
    fn duplicates_are_rejected_at_load() {
        let mut file = InstanceFile::from_graph(&figure1());
        let mut dup = file.edges[0].clone();
        dup.id = file.edges.len();
        file.edges.push(dup);
        assert!(matches!(file.to_graph(), Err(Error::InvalidGraph(_))));
    }

    #[test]
    fn bad_ids_and_versions_are_rejected() {
        let mut file = InstanceFile::from_graph(&figure1());
        file.version = 9;
        assert!(file.to_graph().is_err());
        let mut file = InstanceFile::from_graph(&figure1());
        file.vertices[1].id = 7;
        assert!(file.to_graph().is_err());
    }

    #[test]
    fn matching_file_checks_hash_and_feasibility() {
        let g = figure1();
        let caps = Caps::new(3, 2).unwrap();
        let mut mf = MatchingFile {
            instance_hash: instance_hash(&g).unwrap(),
            method: "KEP-NP".into(),
            caps,
            objective_value: 5.67,
            objective_loss: None,
            cycles: vec![vec![FIG1_E3, FIG1_E4]],
            chains: vec![],
            solve_seconds: 0.0,
            optimal: true,
        };
        assert!(mf.validate_against(&g).is_ok());
        mf.chains.push(vec![FIG1_E5]);
        assert!(mf.validate_against(&g).is_err());
        mf.chains.clear();
        mf.instance_hash = "00".into();
        assert!(mf.validate_against(&g).is_err());
    }
}
