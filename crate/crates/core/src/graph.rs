//! Per-round execution graph and level-order batch scheduling.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ArmId, CandidateId, CandidateSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Generation,
    Execution,
    Ranking,
    Reflection,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Payload {
    None,
    Arm { arm: ArmId },
    Candidate { index: usize, candidate_id: CandidateId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub payload: Payload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionGraph {
    pub round: u32,
    pub nodes: Vec<Node>,
    pub edges: Vec<(NodeId, NodeId)>,
}

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("round graph needs at least one candidate")]
    NoCandidates,
    #[error("candidate {candidate} does not belong to arm {arm}")]
    ForeignCandidate { candidate: CandidateId, arm: ArmId },
    #[error("cycle detected among nodes: {0:?}")]
    Cycle(Vec<NodeId>),
    #[error("edge references unknown node {0}")]
    UnknownNode(NodeId),
    #[error("duplicate node {0}")]
    DuplicateNode(NodeId),
    #[error("max_parallel must be at least 1")]
    ZeroParallel,
    #[error("round graph invariant violated: {0}")]
    Invariant(String),
}

impl ExecutionGraph {
    pub fn new(round: u32) -> Self {
        Self {
            round,
            nodes: Vec::new(),
            edges: Vec::new(),
        }
    }

    pub fn add_node(&mut self, id: impl Into<String>, kind: NodeKind, payload: Payload) -> NodeId {
        let id = NodeId(id.into());
        self.nodes.push(Node {
            id: id.clone(),
            kind,
            payload,
        });
        id
    }

    pub fn add_edge(&mut self, from: &NodeId, to: &NodeId) {
        self.edges.push((from.clone(), to.clone()));
    }

    pub fn node(&self, id: &NodeId) -> Option<&Node> {
        self.nodes.iter().find(|n| &n.id == id)
    }

    /// Checks the wiring rules of a round graph.
    pub fn check_round_invariants(&self) -> Result<(), GraphError> {
        let kind_of: BTreeMap<&NodeId, NodeKind> =
            self.nodes.iter().map(|n| (&n.id, n.kind)).collect();
        let preds = |id: &NodeId| -> Vec<NodeKind> {
            self.edges
                .iter()
                .filter(|(_, t)| t == id)
                .filter_map(|(f, _)| kind_of.get(f).copied())
                .collect()
        };
        let succs = |id: &NodeId| -> Vec<NodeKind> {
            self.edges
                .iter()
                .filter(|(f, _)| f == id)
                .filter_map(|(_, t)| kind_of.get(t).copied())
                .collect()
        };
        let execs: Vec<&Node> = self
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Execution)
            .collect();
        for n in &self.nodes {
            match n.kind {
                NodeKind::Generation if !preds(&n.id).is_empty() => {
                    return Err(GraphError::Invariant(format!("{} has predecessors", n.id)));
                }
                NodeKind::Reflection if !succs(&n.id).is_empty() => {
                    return Err(GraphError::Invariant(format!("{} has successors", n.id)));
                }
                NodeKind::Execution => {
                    let p = preds(&n.id);
                    if p.len() != 1 || p[0] != NodeKind::Generation {
                        return Err(GraphError::Invariant(format!(
                            "{} must depend on exactly one generation node",
                            n.id
                        )));
                    }
                }
                NodeKind::Ranking => {
                    let p = preds(&n.id);
                    let exec_preds = p.iter().filter(|k| **k == NodeKind::Execution).count();
                    if exec_preds != execs.len() {
                        return Err(GraphError::Invariant(format!(
                            "{} must depend on all execution nodes",
                            n.id
                        )));
                    }
                }
                NodeKind::Reflection if !preds(&n.id).contains(&NodeKind::Ranking) => {
                    return Err(GraphError::Invariant(format!(
                        "{} must depend on ranking",
                        n.id
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Builds generation -> execution x K -> ranking -> reflection for one round.
pub fn build_round_graph(
    selected_arm: &ArmId,
    candidates: &[CandidateSpec],
    round: u32,
) -> Result<ExecutionGraph, GraphError> {
    if candidates.is_empty() {
        return Err(GraphError::NoCandidates);
    }
    if let Some(c) = candidates.iter().find(|c| &c.arm_id != selected_arm) {
        return Err(GraphError::ForeignCandidate {
            candidate: c.candidate_id.clone(),
            arm: selected_arm.clone(),
        });
    }
    let mut g = ExecutionGraph::new(round);
    let gen = g.add_node(
        format!("r{round:03}/0-gen"),
        NodeKind::Generation,
        Payload::Arm {
            arm: selected_arm.clone(),
        },
    );
    let execs: Vec<NodeId> = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| {
            g.add_node(
                format!("r{round:03}/1-exec-{i:04}"),
                NodeKind::Execution,
                Payload::Candidate {
                    index: i,
                    candidate_id: c.candidate_id.clone(),
                },
            )
        })
        .collect();
    let rank = g.add_node(format!("r{round:03}/2-rank"), NodeKind::Ranking, Payload::None);
    let reflect = g.add_node(
        format!("r{round:03}/3-reflect"),
        NodeKind::Reflection,
        Payload::None,
    );
    for e in &execs {
        g.add_edge(&gen, e);
    }
    for e in &execs {
        g.add_edge(e, &rank);
    }
    g.add_edge(&rank, &reflect);
    Ok(g)
}

/// Level-order (Kahn wave) schedule. Each wave is sorted by node id and
/// split into batches of at most `max_parallel` nodes.
pub fn schedule(graph: &ExecutionGraph, max_parallel: usize) -> Result<Vec<Vec<NodeId>>, GraphError> {
    if max_parallel == 0 {
        return Err(GraphError::ZeroParallel);
    }
    let mut indegree: BTreeMap<&NodeId, usize> = BTreeMap::new();
    for n in &graph.nodes {
        if indegree.insert(&n.id, 0).is_some() {
            return Err(GraphError::DuplicateNode(n.id.clone()));
        }
    }
    let mut succ: BTreeMap<&NodeId, Vec<&NodeId>> = BTreeMap::new();
    for (from, to) in &graph.edges {
        if !indegree.contains_key(from) {
            return Err(GraphError::UnknownNode(from.clone()));
        }
        *indegree
            .get_mut(to)
            .ok_or_else(|| GraphError::UnknownNode(to.clone()))? += 1;
        succ.entry(from).or_default().push(to);
    }

    let mut wave: BTreeSet<&NodeId> = indegree
        .iter()
        .filter(|(_, d)| **d == 0)
        .map(|(id, _)| *id)
        .collect();
    let mut batches = Vec::new();
    let mut visited = 0usize;
    while !wave.is_empty() {
        visited += wave.len();
        let mut next = BTreeSet::new();
        for id in &wave {
            for s in succ.get(id).map(Vec::as_slice).unwrap_or_default() {
                let d = indegree.get_mut(s).expect("known node");
                *d -= 1;
                if *d == 0 {
                    next.insert(*s);
                }
            }
        }
        let ordered: Vec<NodeId> = wave.iter().map(|id| (*id).clone()).collect();
        batches.extend(ordered.chunks(max_parallel).map(<[NodeId]>::to_vec));
        wave = next;
    }
    if visited != graph.nodes.len() {
        let stuck = indegree
            .into_iter()
            .filter(|(_, d)| *d > 0)
            .map(|(id, _)| id.clone())
            .collect();
        return Err(GraphError::Cycle(stuck));
    }
    Ok(batches)
}

/// One record of the round trace written to the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeTrace {
    pub node_id: NodeId,
    pub kind: NodeKind,
    pub status: NodeStatus,
    pub start_ms: u64,
    pub end_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeStatus {
    Ok,
    Failed,
}
