//! Discrete metric measure spaces: weighted graphs with a node measure,
//! shortest-path distance, and a partition into interior, boundary and
//! (optionally) exterior nodes.

mod capacity;
mod diagnostics;
mod json;

pub use capacity::{capacity_ball_bounds, fine_thinness_sum, relative_capacity, CapacityBounds, ThinnessReport};
pub use diagnostics::{
    check_density, check_perimeter_regularity, diagnose, dyadic_radii, estimate_doubling_constant,
    estimate_mass_exponent, estimate_poincare_constant, fit_mass_exponent, mass_ratio_pairs, poincare_ratio,
    DensityReport, DiagnoseOptions, MassExponent, MassPair, PerimeterRegularity, SpaceDiagnostics,
};
pub use json::{DomainFile, EdgeRecord, NodeRecord};

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of a node inside a [`MetricGraph`].
pub type NodeIdx = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Interior,
    Boundary,
    /// Part of the ambient space outside the closed domain.
    Exterior,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub id: String,
    pub mu: f64,
    pub coords: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub a: NodeIdx,
    pub b: NodeIdx,
    pub len: f64,
}

impl Edge {
    pub fn other(&self, i: NodeIdx) -> NodeIdx {
        if self.a == i {
            self.b
        } else {
            self.a
        }
    }
}

/// Weighted graph with node measure and edge lengths.
#[derive(Clone, Debug)]
pub struct MetricGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(NodeIdx, usize)>>,
    index: HashMap<String, NodeIdx>,
}

#[derive(PartialEq)]
struct HeapItem(f64, NodeIdx);

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed for a min-heap
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl MetricGraph {
    fn new(nodes: Vec<Node>, edges: Vec<Edge>) -> Self {
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for (k, e) in edges.iter().enumerate() {
            adjacency[e.a].push((e.b, k));
            adjacency[e.b].push((e.a, k));
        }
        let index = nodes.iter().enumerate().map(|(i, n)| (n.id.clone(), i)).collect();
        MetricGraph { nodes, edges, adjacency, index }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node(&self, i: NodeIdx) -> &Node {
        &self.nodes[i]
    }

    pub fn edge(&self, k: usize) -> &Edge {
        &self.edges[k]
    }

    pub fn mu(&self, i: NodeIdx) -> f64 {
        self.nodes[i].mu
    }

    pub fn id(&self, i: NodeIdx) -> &str {
        &self.nodes[i].id
    }

    /// Neighbors of `i` as `(neighbor, edge index)` pairs.
    pub fn neighbors(&self, i: NodeIdx) -> &[(NodeIdx, usize)] {
        &self.adjacency[i]
    }

    pub fn index_of(&self, id: &str) -> Result<NodeIdx> {
        self.index.get(id).copied().ok_or_else(|| Error::UnknownNode(id.to_string()))
    }

    pub fn check_index(&self, i: NodeIdx) -> Result<()> {
        if i < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::NodeIndex(i))
        }
    }

    /// Shortest-path distances from a single node.
    pub fn distances_from(&self, source: NodeIdx) -> Vec<f64> {
        self.distances_from_set(&[source])
    }

    /// Shortest-path distances to the nearest node of `sources`.
    pub fn distances_from_set(&self, sources: &[NodeIdx]) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.nodes.len()];
        let mut heap = BinaryHeap::new();
        for &s in sources {
            dist[s] = 0.0;
            heap.push(HeapItem(0.0, s));
        }
        while let Some(HeapItem(d, i)) = heap.pop() {
            if d > dist[i] {
                continue;
            }
            for &(j, k) in &self.adjacency[i] {
                let nd = d + self.edges[k].len;
                if nd < dist[j] {
                    dist[j] = nd;
                    heap.push(HeapItem(nd, j));
                }
            }
        }
        dist
    }

    pub fn min_edge_len(&self) -> f64 {
        self.edges.iter().map(|e| e.len).fold(f64::INFINITY, f64::min)
    }

    pub fn max_edge_len(&self) -> f64 {
        self.edges.iter().map(|e| e.len).fold(0.0, f64::max)
    }
}

/// A bounded domain inside a metric graph: interior nodes carry the measure,
/// boundary nodes carry the perimeter measure and have zero mass.
#[derive(Clone, Debug)]
pub struct Domain {
    graph: MetricGraph,
    roles: Vec<Role>,
    perimeter: Vec<f64>,
    interior: Vec<NodeIdx>,
    boundary: Vec<NodeIdx>,
    closure: Vec<NodeIdx>,
    energy_edges: Vec<usize>,
}

/// A detected violation of the domain invariants.
#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Violation {
    Node(usize, String),
    Edge(usize, String),
    Whole(String),
}

/// Node description used by [`DomainBuilder`].
#[derive(Clone, Debug)]
pub struct NodeSpec {
    pub id: String,
    pub mu: f64,
    pub coords: Option<Vec<f64>>,
    pub role: Role,
    pub perimeter: Option<f64>,
}

/// Programmatic construction of a [`Domain`], validated on `build`.
#[derive(Clone, Debug, Default)]
pub struct DomainBuilder {
    nodes: Vec<NodeSpec>,
    edges: Vec<(NodeIdx, NodeIdx, f64)>,
    index: HashMap<String, NodeIdx>,
}

impl DomainBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn interior(&mut self, id: impl Into<String>, mu: f64, coords: Option<Vec<f64>>) -> NodeIdx {
        self.push(NodeSpec { id: id.into(), mu, coords, role: Role::Interior, perimeter: None })
    }

    pub fn boundary(&mut self, id: impl Into<String>, perimeter: f64, coords: Option<Vec<f64>>) -> NodeIdx {
        self.push(NodeSpec { id: id.into(), mu: 0.0, coords, role: Role::Boundary, perimeter: Some(perimeter) })
    }

    pub fn exterior(&mut self, id: impl Into<String>, mu: f64, coords: Option<Vec<f64>>) -> NodeIdx {
        self.push(NodeSpec { id: id.into(), mu, coords, role: Role::Exterior, perimeter: None })
    }

    pub fn push(&mut self, spec: NodeSpec) -> NodeIdx {
        let i = self.nodes.len();
        self.index.entry(spec.id.clone()).or_insert(i);
        self.nodes.push(spec);
        i
    }

    pub fn edge(&mut self, a: NodeIdx, b: NodeIdx, len: f64) -> &mut Self {
        self.edges.push((a, b, len));
        self
    }

    pub fn index_of(&self, id: &str) -> Option<NodeIdx> {
        self.index.get(id).copied()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn build(self) -> Result<Domain> {
        self.build_located(|_| 0)
    }

    /// Builds the domain, mapping violations to source line numbers.
    pub(crate) fn build_located(self, line_of: impl Fn(&Violation) -> usize) -> Result<Domain> {
        match self.validate() {
            Some(v) => {
                let line = line_of(&v);
                let message = match v {
                    Violation::Node(i, m) => format!("node #{i} (`{}`): {m}", self.nodes[i].id),
                    Violation::Edge(k, m) => format!("edge #{k}: {m}"),
                    Violation::Whole(m) => m,
                };
                Err(Error::InvalidDomain { line, message })
            }
            None => Ok(self.assemble()),
        }
    }

    fn validate(&self) -> Option<Violation> {
        let n = self.nodes.len();
        if n == 0 {
            return Some(Violation::Whole("domain has no nodes".into()));
        }
        let mut seen = HashMap::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if let Some(j) = seen.insert(node.id.as_str(), i) {
                return Some(Violation::Node(i, format!("duplicate id (first used by node #{j})")));
            }
            if !node.mu.is_finite() || node.mu < 0.0 {
                return Some(Violation::Node(i, format!("measure must be finite and non-negative, got {}", node.mu)));
            }
            match node.role {
                Role::Boundary => {
                    if node.mu != 0.0 {
                        return Some(Violation::Node(i, "boundary node must carry zero measure".into()));
                    }
                    match node.perimeter {
                        Some(p) if p.is_finite() && p > 0.0 => {}
                        Some(p) => {
                            return Some(Violation::Node(i, format!("perimeter must be positive and finite, got {p}")))
                        }
                        None => return Some(Violation::Node(i, "boundary node requires a perimeter".into())),
                    }
                }
                Role::Interior | Role::Exterior => {
                    if node.perimeter.is_some() {
                        return Some(Violation::Node(i, "perimeter is only allowed on boundary nodes".into()));
                    }
                }
            }
        }
        let mut pairs = HashMap::new();
        for (k, &(a, b, len)) in self.edges.iter().enumerate() {
            if a >= n || b >= n {
                return Some(Violation::Edge(k, "references an unknown node".into()));
            }
            if a == b {
                return Some(Violation::Edge(k, "self loop".into()));
            }
            if !len.is_finite() || len <= 0.0 {
                return Some(Violation::Edge(k, format!("length must be positive and finite, got {len}")));
            }
            if let Some(j) = pairs.insert((a.min(b), a.max(b)), k) {
                return Some(Violation::Edge(k, format!("duplicates edge #{j}")));
            }
            let roles = (self.nodes[a].role, self.nodes[b].role);
            if matches!(roles, (Role::Interior, Role::Exterior) | (Role::Exterior, Role::Interior)) {
                return Some(Violation::Edge(k, "interior node adjacent to exterior node".into()));
            }
        }
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b, _) in &self.edges {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.role == Role::Boundary && !adjacency[i].iter().any(|&j| self.nodes[j].role == Role::Interior) {
                return Some(Violation::Node(i, "boundary node has no interior neighbor".into()));
            }
        }
        let interior_mass: f64 = self.nodes.iter().filter(|s| s.role == Role::Interior).map(|s| s.mu).sum();
        if interior_mass <= 0.0 {
            return Some(Violation::Whole("total interior measure must be positive".into()));
        }
        // closure connectivity
        let in_closure = |i: usize| self.nodes[i].role != Role::Exterior;
        if let Some(v) = self.check_connected(&adjacency, in_closure, "closed domain is not connected") {
            return Some(v);
        }
        let charged = |i: usize| self.nodes[i].mu > 0.0 || self.nodes[i].role == Role::Boundary;
        self.check_connected(&adjacency, charged, "positive-measure and boundary nodes are not connected")
    }

    fn check_connected(
        &self,
        adjacency: &[Vec<usize>],
        member: impl Fn(usize) -> bool,
        msg: &str,
    ) -> Option<Violation> {
        let n = self.nodes.len();
        let start = (0..n).find(|&i| member(i))?;
        let mut seen = vec![false; n];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            for &j in &adjacency[i] {
                if !seen[j] && member(j) {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        (0..n).find(|&i| member(i) && !seen[i]).map(|i| Violation::Node(i, msg.to_string()))
    }

    fn assemble(self) -> Domain {
        let roles: Vec<Role> = self.nodes.iter().map(|s| s.role).collect();
        let perimeter = self.nodes.iter().map(|s| s.perimeter.unwrap_or(0.0)).collect();
        let nodes = self.nodes.into_iter().map(|s| Node { id: s.id, mu: s.mu, coords: s.coords }).collect();
        let edges = self.edges.iter().map(|&(a, b, len)| Edge { a, b, len }).collect();
        Domain::from_parts(MetricGraph::new(nodes, edges), roles, perimeter)
    }
}

impl Domain {
    fn from_parts(graph: MetricGraph, roles: Vec<Role>, perimeter: Vec<f64>) -> Self {
        let pick = |r: Role| (0..roles.len()).filter(|&i| roles[i] == r).collect::<Vec<_>>();
        let interior = pick(Role::Interior);
        let boundary = pick(Role::Boundary);
        let closure = (0..roles.len()).filter(|&i| roles[i] != Role::Exterior).collect();
        let energy_edges = graph
            .edges()
            .iter()
            .enumerate()
            .filter(|(_, e)| {
                let (ra, rb) = (roles[e.a], roles[e.b]);
                ra != Role::Exterior && rb != Role::Exterior && (ra == Role::Interior || rb == Role::Interior)
            })
            .map(|(k, _)| k)
            .collect();
        Domain { graph, roles, perimeter, interior, boundary, closure, energy_edges }
    }

    pub fn graph(&self) -> &MetricGraph {
        &self.graph
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn role(&self, i: NodeIdx) -> Role {
        self.roles[i]
    }

    pub fn is_interior(&self, i: NodeIdx) -> bool {
        self.roles[i] == Role::Interior
    }

    pub fn is_boundary(&self, i: NodeIdx) -> bool {
        self.roles[i] == Role::Boundary
    }

    pub fn in_closure(&self, i: NodeIdx) -> bool {
        self.roles[i] != Role::Exterior
    }

    /// Interior nodes (Ω) in index order.
    pub fn interior(&self) -> &[NodeIdx] {
        &self.interior
    }

    /// Boundary nodes (∂Ω) in index order.
    pub fn boundary(&self) -> &[NodeIdx] {
        &self.boundary
    }

    /// Interior and boundary nodes in index order.
    pub fn closure(&self) -> &[NodeIdx] {
        &self.closure
    }

    pub fn perimeter(&self, i: NodeIdx) -> f64 {
        self.perimeter[i]
    }

    pub fn mu(&self, i: NodeIdx) -> f64 {
        self.graph.mu(i)
    }

    /// Position of a boundary node inside [`Domain::boundary`].
    pub fn boundary_position(&self, i: NodeIdx) -> Option<usize> {
        self.boundary.binary_search(&i).ok()
    }

    /// Energy weight ω_e = (μ(a) + μ(b)) / 2.
    pub fn edge_weight(&self, k: usize) -> f64 {
        let e = self.graph.edge(k);
        0.5 * (self.graph.mu(e.a) + self.graph.mu(e.b))
    }

    /// Edges with both ends in the closed domain and at least one in Ω.
    pub fn energy_edges(&self) -> &[usize] {
        &self.energy_edges
    }

    pub fn index_of(&self, id: &str) -> Result<NodeIdx> {
        self.graph.index_of(id)
    }

    pub fn id(&self, i: NodeIdx) -> &str {
        self.graph.id(i)
    }

    /// Open ball `{y : d(center, y) < radius}`, sorted by index.
    pub fn ball(&self, center: NodeIdx, radius: f64) -> Result<Vec<NodeIdx>> {
        self.graph.check_index(center)?;
        if !(radius > 0.0) {
            return Err(Error::arg(format!("ball radius must be positive, got {radius}")));
        }
        Ok(ball_from_distances(&self.graph.distances_from(center), radius))
    }

    pub fn measure(&self, nodes: &[NodeIdx]) -> f64 {
        nodes.iter().map(|&i| self.graph.mu(i)).sum()
    }

    /// μ(S ∩ Ω).
    pub fn interior_measure(&self, nodes: &[NodeIdx]) -> f64 {
        nodes.iter().filter(|&&i| self.is_interior(i)).map(|&i| self.graph.mu(i)).sum()
    }

    /// P_Ω(S ∩ ∂Ω).
    pub fn perimeter_measure(&self, nodes: &[NodeIdx]) -> f64 {
        nodes.iter().map(|&i| self.perimeter[i]).sum()
    }

    pub fn total_interior_measure(&self) -> f64 {
        self.interior_measure(&self.interior)
    }

    pub fn total_perimeter(&self) -> f64 {
        self.perimeter_measure(&self.boundary)
    }

    /// Largest shortest-path distance between two interior nodes.
    pub fn interior_diameter(&self) -> f64 {
        self.interior
            .iter()
            .map(|&i| {
                let d = self.graph.distances_from(i);
                self.interior.iter().map(|&j| d[j]).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// Largest shortest-path distance between two nodes of the closed domain.
    pub fn closure_diameter(&self) -> f64 {
        self.closure
            .iter()
            .map(|&i| {
                let d = self.graph.distances_from(i);
                self.closure.iter().map(|&j| d[j]).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}

/// Nodes whose distance is strictly below `radius`.
pub fn ball_from_distances(dist: &[f64], radius: f64) -> Vec<NodeIdx> {
    (0..dist.len()).filter(|&i| dist[i] < radius).collect()
}
