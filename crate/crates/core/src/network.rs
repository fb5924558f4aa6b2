//! Initial trade graph and role assignment.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::ThreatModel;
use crate::trust::NodeId;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("degenerate graph: need more nodes than out-degree (n = {n}, k = {k})")]
    DegenerateGraph { n: usize, k: usize },
    #[error("invalid attachment weight {0}: must be positive")]
    InvalidAlpha(f64),
    #[error("degenerate scenario: attacker ratio {ratio} of {n} nodes yields no attackers")]
    DegenerateScenario { ratio: f64, n: usize },
    #[error("attacker count {attackers} exceeds node count {n}")]
    TooManyAttackers { attackers: usize, n: usize },
    #[error("insufficient normal nodes: {requested} pre-trusted requested, {available} normal")]
    InsufficientNormalNodes { requested: usize, available: usize },
    #[error("malformed dump line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Directed transaction-history graph. An edge `u -> v` means `u` has bought
/// from `v` at least once.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradeGraph {
    out_edges: Vec<BTreeSet<NodeId>>,
}

impl TradeGraph {
    pub fn empty(n: usize) -> Self {
        Self {
            out_edges: vec![BTreeSet::new(); n],
        }
    }

    pub fn node_count(&self) -> usize {
        self.out_edges.len()
    }

    pub fn out_neighbors(&self, u: NodeId) -> &BTreeSet<NodeId> {
        &self.out_edges[u]
    }

    pub fn out_degree(&self, u: NodeId) -> usize {
        self.out_edges[u].len()
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.out_edges[u].contains(&v)
    }

    /// Inserts `u -> v`; returns whether the edge is new. Self-loops are ignored.
    pub fn add_edge(&mut self, u: NodeId, v: NodeId) -> bool {
        u != v && self.out_edges[u].insert(v)
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.node_count()];
        for targets in &self.out_edges {
            for &v in targets {
                deg[v] += 1;
            }
        }
        deg
    }

    pub fn edge_count(&self) -> usize {
        self.out_edges.iter().map(BTreeSet::len).sum()
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.out_edges
            .iter()
            .enumerate()
            .flat_map(|(u, targets)| targets.iter().map(move |&v| (u, v)))
    }

    /// Writes one `u v` line per edge.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (u, v) in self.edges() {
            writeln!(out, "{u} {v}")?;
        }
        Ok(())
    }

    /// Reads the `u v` edge-list format for a graph of `n` nodes.
    pub fn read_edge_list<R: BufRead>(n: usize, input: R) -> Result<Self, NetworkError> {
        let mut graph = Self::empty(n);
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |reason: &str| NetworkError::Parse {
                line: idx + 1,
                reason: reason.to_string(),
            };
            let mut parts = line.split_whitespace();
            let (Some(u), Some(v), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(parse_err("expected two node ids"));
            };
            let u: NodeId = u.parse().map_err(|_| parse_err("bad source id"))?;
            let v: NodeId = v.parse().map_err(|_| parse_err("bad target id"))?;
            if u >= n || v >= n {
                return Err(parse_err("node id out of range"));
            }
            if u == v {
                return Err(parse_err("self-loop"));
            }
            graph.add_edge(u, v);
        }
        Ok(graph)
    }
}

/// Generates a directed graph where every node has exactly `k` distinct
/// out-neighbors.
///
/// Nodes draw their targets in id order, one at a time. A candidate `v` is
/// weighted by `alpha + indegree(v)` at the moment of the draw, so early hubs
/// keep attracting edges.
pub fn generate_k_out_graph<R: Rng + ?Sized>(
    n: usize,
    k: usize,
    alpha: f64,
    rng: &mut R,
) -> Result<TradeGraph, NetworkError> {
    if n <= k || k == 0 {
        return Err(NetworkError::DegenerateGraph { n, k });
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(NetworkError::InvalidAlpha(alpha));
    }
    let mut graph = TradeGraph::empty(n);
    let mut in_degree = vec![0usize; n];
    for u in 0..n {
        for _ in 0..k {
            let total: f64 = (0..n)
                .filter(|&v| v != u && !graph.has_edge(u, v))
                .map(|v| alpha + in_degree[v] as f64)
                .sum();
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = None;
            for v in (0..n).filter(|&v| v != u && !graph.has_edge(u, v)) {
                chosen = Some(v);
                let w = alpha + in_degree[v] as f64;
                if target < w {
                    break;
                }
                target -= w;
            }
            // At least n - 1 - k + 1 >= 1 candidates remain, so a choice exists.
            let v = chosen.expect("candidate pool is never empty while k < n");
            graph.add_edge(u, v);
            in_degree[v] += 1;
        }
    }
    Ok(graph)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Normal,
    Attacker,
    Spy,
}

impl Role {
    /// Attackers and spies together form the malicious cohort.
    pub fn is_malicious(self) -> bool {
        !matches!(self, Role::Normal)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Normal => "normal",
            Role::Attacker => "attacker",
            Role::Spy => "spy",
        })
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "normal" => Ok(Role::Normal),
            "attacker" => Ok(Role::Attacker),
            "spy" => Ok(Role::Spy),
            other => Err(format!("unknown role {other:?}")),
        }
    }
}

/// Node roles plus the pre-trusted flag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roster {
    roles: Vec<Role>,
    pretrusted: Vec<bool>,
}

impl Roster {
    /// Builds a roster from explicit roles. Panics on length mismatch.
    pub fn new(roles: Vec<Role>, pretrusted: Vec<bool>) -> Self {
        assert_eq!(roles.len(), pretrusted.len());
        Self { roles, pretrusted }
    }

    pub fn node_count(&self) -> usize {
        self.roles.len()
    }

    pub fn role(&self, id: NodeId) -> Role {
        self.roles[id]
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    pub fn is_pretrusted(&self, id: NodeId) -> bool {
        self.pretrusted[id]
    }

    pub fn pretrusted(&self) -> &[bool] {
        &self.pretrusted
    }

    /// Attackers and spies, in id order.
    pub fn malicious_ids(&self) -> Vec<NodeId> {
        self.ids_where(|r| r.is_malicious())
    }

    pub fn normal_ids(&self) -> Vec<NodeId> {
        self.ids_where(|r| !r.is_malicious())
    }

    pub fn count(&self, role: Role) -> usize {
        self.roles.iter().filter(|&&r| r == role).count()
    }

    fn ids_where(&self, pred: impl Fn(Role) -> bool) -> Vec<NodeId> {
        (0..self.roles.len())
            .filter(|&i| pred(self.roles[i]))
            .collect()
    }

    /// Writes one `id role pretrusted` line per node.
    pub fn write_roles<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (id, (role, pre)) in self.roles.iter().zip(&self.pretrusted).enumerate() {
            writeln!(out, "{id} {role} {pre}")?;
        }
        Ok(())
    }

    pub fn read_roles<R: BufRead>(input: R) -> Result<Self, NetworkError> {
        let mut roles = Vec::new();
        let mut pretrusted = Vec::new();
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |reason: String| NetworkError::Parse {
                line: idx + 1,
                reason,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [id, role, pre] = fields[..] else {
                return Err(parse_err("expected `id role pretrusted`".into()));
            };
            if id.parse::<usize>().ok() != Some(roles.len()) {
                return Err(parse_err(format!("expected id {}", roles.len())));
            }
            roles.push(role.parse().map_err(parse_err)?);
            pretrusted.push(
                pre.parse::<bool>()
                    .map_err(|_| parse_err(format!("bad pretrusted flag {pre:?}")))?,
            );
        }
        Ok(Self { roles, pretrusted })
    }
}

/// Rounds `ratio * total` half away from zero, guarding against float noise
/// just below the half (e.g. 0.1 * 45 = 4.5000000000000004 vs 4.4999...).
pub(crate) fn rounded_share(ratio: f64, total: usize) -> usize {
    let raw = ratio * total as f64;
    (raw + 1e-9).round().max(0.0) as usize
}

/// Places `round(attacker_ratio * n)` malicious nodes in one contiguous id
/// block at a random offset. Under spy-bearing models the first
/// `round(spy_ratio * block)` ids of the block are spies. Pre-trusted nodes
/// are drawn uniformly from the remaining normal nodes.
pub fn assign_roles<R: Rng + ?Sized>(
    n: usize,
    attacker_ratio: f64,
    spy_ratio: f64,
    pretrust_count: usize,
    model: ThreatModel,
    rng: &mut R,
) -> Result<Roster, NetworkError> {
    let attackers = rounded_share(attacker_ratio, n);
    if attackers == 0 {
        return Err(NetworkError::DegenerateScenario {
            ratio: attacker_ratio,
            n,
        });
    }
    if attackers > n {
        return Err(NetworkError::TooManyAttackers { attackers, n });
    }
    let normals = n - attackers;
    if pretrust_count > normals {
        return Err(NetworkError::InsufficientNormalNodes {
            requested: pretrust_count,
            available: normals,
        });
    }

    let offset = rng.gen_range(0..=normals);
    let spies = if model.has_spies() {
        rounded_share(spy_ratio, attackers)
    } else {
        0
    };
    let mut roles = vec![Role::Normal; n];
    for (pos, role) in roles[offset..offset + attackers].iter_mut().enumerate() {
        *role = if pos < spies {
            Role::Spy
        } else {
            Role::Attacker
        };
    }

    let normal_ids: Vec<NodeId> = (0..n).filter(|&i| roles[i] == Role::Normal).collect();
    let mut pretrusted = vec![false; n];
    let mut picks: Vec<usize> = sample(rng, normals, pretrust_count).into_vec();
    picks.sort_unstable();
    for idx in picks {
        pretrusted[normal_ids[idx]] = true;
    }
    Ok(Roster { roles, pretrusted })
}

/// Guarantees every malicious node has an out-edge to a fellow malicious node,
/// rewiring one randomly chosen out-edge when it has none. Out-degrees are
/// unchanged.
pub fn ensure_attacker_adjacency<R: Rng + ?Sized>(
    graph: &mut TradeGraph,
    roster: &Roster,
    rng: &mut R,
) {
    let malicious = roster.malicious_ids();
    if malicious.len() < 2 {
        return;
    }
    for &u in &malicious {
        if graph
            .out_neighbors(u)
            .iter()
            .any(|&v| roster.role(v).is_malicious())
        {
            continue;
        }
        let fellows: Vec<NodeId> = malicious.iter().copied().filter(|&v| v != u).collect();
        let new_target = fellows[rng.gen_range(0..fellows.len())];
        let current: Vec<NodeId> = graph.out_neighbors(u).iter().copied().collect();
        if current.is_empty() {
            graph.add_edge(u, new_target);
            continue;
        }
        let dropped = current[rng.gen_range(0..current.len())];
        graph.out_edges[u].remove(&dropped);
        graph.add_edge(u, new_target);
    }
}
