//! Labeled multigraphs without self-loops, their symmetry factors and the
//! propagator kind carried by each edge.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Role of a vertex in a diagram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VertexKind {
    /// A linear field of the observable, sitting at imaginary time zero on
    /// the time-ordered branch.
    External,
    /// Interaction vertex of the real-time expansion on branch 1 or 2.
    RealTime(u8),
    /// Interaction vertex coming from the KMS correction series. The index
    /// names the imaginary-time slot; vertices sharing an index share `u`.
    Kms(usize),
}

impl VertexKind {
    fn real_time_branch(self) -> Option<u8> {
        match self {
            VertexKind::External => Some(1),
            VertexKind::RealTime(b) => Some(b),
            VertexKind::Kms(_) => None,
        }
    }
}

impl fmt::Display for VertexKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VertexKind::External => write!(f, "external"),
            VertexKind::RealTime(b) => write!(f, "real_time_{b}"),
            VertexKind::Kms(i) => write!(f, "kms_{i}"),
        }
    }
}

impl std::str::FromStr for VertexKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown vertex kind `{s}`"));
        if s == "external" {
            return Ok(VertexKind::External);
        }
        if let Some(b) = s.strip_prefix("real_time_") {
            return match b {
                "1" => Ok(VertexKind::RealTime(1)),
                "2" => Ok(VertexKind::RealTime(2)),
                _ => Err(bad()),
            };
        }
        if let Some(i) = s.strip_prefix("kms_") {
            return i.parse().map(VertexKind::Kms).map_err(|_| bad());
        }
        Err(bad())
    }
}

impl Serialize for VertexKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for VertexKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Propagator carried by an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Wightman,
    Feynman,
    AntiFeynman,
    ThermalMixed,
}

/// Connected or not, a multigraph on vertices `0..n` given by its edge
/// multiplicities `l_ij` for `i < j`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiGraph {
    degrees: Vec<u32>,
    edges: BTreeMap<(usize, usize), u32>,
    kinds: Vec<VertexKind>,
}

impl MultiGraph {
    /// Build a graph from explicit `(i, j, l_ij)` triples; degrees are
    /// derived from the edges. Self-loops and repeated pairs are rejected.
    pub fn from_edges(n_vertices: usize, edges: &[(usize, usize, u32)]) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut degrees = vec![0u32; n_vertices];
        for &(a, b, l) in edges {
            if a == b {
                return Err(Error::Rejected(format!("self-loop at vertex {a}")));
            }
            if a >= n_vertices || b >= n_vertices {
                return Err(Error::Rejected(format!("edge ({a}, {b}) outside 0..{n_vertices}")));
            }
            if l == 0 {
                continue;
            }
            let key = (a.min(b), a.max(b));
            if map.insert(key, l).is_some() {
                return Err(Error::Rejected(format!("pair {key:?} listed twice")));
            }
            degrees[a] += l;
            degrees[b] += l;
        }
        Ok(MultiGraph {
            degrees,
            edges: map,
            kinds: Vec::new(),
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.degrees.len()
    }

    pub fn degrees(&self) -> &[u32] {
        &self.degrees
    }

    /// Multiplicity `l_ij`; symmetric in its arguments, zero on the diagonal.
    pub fn multiplicity(&self, i: usize, j: usize) -> u32 {
        self.edges.get(&(i.min(j), i.max(j))).copied().unwrap_or(0)
    }

    /// Edges with nonzero multiplicity as `(i, j, l_ij)` with `i < j`, in
    /// lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, u32)> + '_ {
        self.edges.iter().map(|(&(i, j), &l)| (i, j, l))
    }

    /// Number of lines counted with multiplicity.
    pub fn line_count(&self) -> u32 {
        self.edges.values().sum()
    }

    /// Vertex kinds, empty until [`MultiGraph::with_kinds`] is called.
    pub fn kinds(&self) -> &[VertexKind] {
        &self.kinds
    }

    pub fn with_kinds(mut self, kinds: Vec<VertexKind>) -> Result<Self> {
        if kinds.len() != self.n_vertices() {
            return Err(Error::Rejected(format!(
                "{} vertex kinds for {} vertices",
                kinds.len(),
                self.n_vertices()
            )));
        }
        self.kinds = kinds;
        Ok(self)
    }

    /// Whether the vertices in `subset` are connected using only edges
    /// inside the subset. The empty set counts as connected.
    pub fn is_connected_on(&self, subset: &[usize]) -> bool {
        let Some(&start) = subset.first() else {
            return true;
        };
        let mut seen = vec![false; self.n_vertices()];
        let inside: Vec<bool> = (0..self.n_vertices()).map(|v| subset.contains(&v)).collect();
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for w in 0..self.n_vertices() {
                if inside[w] && !seen[w] && self.multiplicity(v, w) > 0 {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == subset.len()
    }

    pub fn is_connected(&self) -> bool {
        let all: Vec<usize> = (0..self.n_vertices()).collect();
        self.is_connected_on(&all)
    }

    /// Relabel vertices: vertex `v` of `self` becomes `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> MultiGraph {
        let n = self.n_vertices();
        let mut degrees = vec![0; n];
        let mut kinds = vec![VertexKind::External; self.kinds.len()];
        for v in 0..n {
            degrees[perm[v]] = self.degrees[v];
            if !self.kinds.is_empty() {
                kinds[perm[v]] = self.kinds[v];
            }
        }
        let edges = self
            .edges()
            .map(|(i, j, l)| {
                let (a, b) = (perm[i], perm[j]);
                ((a.min(b), a.max(b)), l)
            })
            .collect();
        MultiGraph { degrees, edges, kinds }
    }

    pub fn to_json(&self) -> GraphJson {
        GraphJson {
            degrees: self.degrees.clone(),
            edges: self.edges().map(|(i, j, l)| [i, j, l as usize]).collect(),
            kinds: self.kinds.clone(),
        }
    }
}

/// Canonical serialized form of a graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphJson {
    pub degrees: Vec<u32>,
    pub edges: Vec<[usize; 3]>,
    pub kinds: Vec<VertexKind>,
}

impl TryFrom<GraphJson> for MultiGraph {
    type Error = Error;

    fn try_from(j: GraphJson) -> Result<Self> {
        let edges: Vec<(usize, usize, u32)> =
            j.edges.iter().map(|e| (e[0], e[1], e[2] as u32)).collect();
        let g = MultiGraph::from_edges(j.degrees.len(), &edges)?;
        if g.degrees != j.degrees {
            return Err(Error::Rejected("declared degrees disagree with the edges".into()));
        }
        if j.kinds.is_empty() {
            Ok(g)
        } else {
            g.with_kinds(j.kinds)
        }
    }
}

/// All connected multigraphs without self-loops on labeled vertices
/// `0..degrees.len()` whose vertex `i` has exactly `degrees[i]` legs.
///
/// Output order is deterministic: lexicographic in the multiplicity rows.
pub fn enumerate_connected(degrees: &[u32]) -> Result<Vec<MultiGraph>> {
    let total: u32 = degrees.iter().sum();
    if total % 2 == 1 {
        return Err(Error::NoGraph(format!("odd total degree {total}")));
    }
    if let Some(i) = degrees.iter().position(|&d| d == 0) {
        return Err(Error::NoGraph(format!("vertex {i} has no legs")));
    }
    let n = degrees.len();
    let mut out = Vec::new();
    let mut remaining = degrees.to_vec();
    let mut mult = vec![vec![0u32; n]; n];
    fill_row(0, 1, &mut remaining, &mut mult, total, &mut |m| {
        let edges: BTreeMap<(usize, usize), u32> = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .filter(|&(i, j)| m[i][j] > 0)
            .map(|(i, j)| ((i, j), m[i][j]))
            .collect();
        let g = MultiGraph {
            degrees: degrees.to_vec(),
            edges,
            kinds: Vec::new(),
        };
        if g.is_connected() {
            out.push(g);
        }
    });
    Ok(out)
}

// Distributes the remaining legs of vertex `i` over partners `j, j+1, ..`.
fn fill_row(
    i: usize,
    j: usize,
    remaining: &mut [u32],
    mult: &mut [Vec<u32>],
    cap: u32,
    emit: &mut dyn FnMut(&[Vec<u32>]),
) {
    let n = remaining.len();
    if i == n {
        emit(mult);
        return;
    }
    if j == n {
        if remaining[i] == 0 {
            fill_row(i + 1, i + 2, remaining, mult, cap, emit);
        }
        return;
    }
    // Legs still available to the right of j cannot absorb more than this.
    let rest: u32 = remaining[j + 1..].iter().sum();
    let need = remaining[i].saturating_sub(rest);
    let hi = remaining[i].min(remaining[j]).min(cap);
    if need > hi {
        return;
    }
    for l in need..=hi {
        remaining[i] -= l;
        remaining[j] -= l;
        mult[i][j] = l;
        fill_row(i, j + 1, remaining, mult, cap, emit);
        mult[i][j] = 0;
        remaining[i] += l;
        remaining[j] += l;
    }
}

/// Product of the factorials of all edge multiplicities.
pub fn symmetry_factor(g: &MultiGraph) -> u64 {
    g.edges()
        .map(|(_, _, l)| (1..=l as u64).product::<u64>())
        .product()
}

/// A graph whose vertices are tagged and whose edges carry propagator kinds.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedGraph {
    pub graph: MultiGraph,
    /// Parallel to `graph.edges()`.
    pub edge_kinds: Vec<EdgeKind>,
}

impl AnnotatedGraph {
    pub fn kinds(&self) -> &[VertexKind] {
        self.graph.kinds()
    }

    /// Edges with their kinds, `(i, j, l_ij, kind)`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, u32, EdgeKind)> + '_ {
        self.graph
            .edges()
            .zip(self.edge_kinds.iter())
            .map(|((i, j, l), &k)| (i, j, l, k))
    }

    pub fn to_json(&self) -> AnnotatedGraphJson {
        let g = self.graph.to_json();
        AnnotatedGraphJson {
            degrees: g.degrees,
            edges: g.edges,
            kinds: g.kinds,
            edge_kinds: self.edge_kinds.clone(),
            symmetry_factor: symmetry_factor(&self.graph),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedGraphJson {
    pub degrees: Vec<u32>,
    pub edges: Vec<[usize; 3]>,
    pub kinds: Vec<VertexKind>,
    pub edge_kinds: Vec<EdgeKind>,
    pub symmetry_factor: u64,
}

/// Propagator kind between two vertices.
///
/// External legs belong to the time-ordered product of the observable and
/// behave like branch-1 points. Anything touching a KMS vertex is a mixed
/// real/imaginary-time thermal propagator.
pub fn edge_kind(a: VertexKind, b: VertexKind) -> Result<EdgeKind> {
    if let (VertexKind::RealTime(x), _) | (_, VertexKind::RealTime(x)) = (a, b) {
        if x != 1 && x != 2 {
            return Err(Error::Rejected(format!("real-time branch {x} is not 1 or 2")));
        }
    }
    match (a.real_time_branch(), b.real_time_branch()) {
        (None, _) | (_, None) => Ok(EdgeKind::ThermalMixed),
        (Some(1), Some(1)) => Ok(EdgeKind::Feynman),
        (Some(2), Some(2)) => Ok(EdgeKind::AntiFeynman),
        _ => Ok(EdgeKind::Wightman),
    }
}

/// Tag the vertices of `g` and derive every edge kind.
///
/// Rejects kinds of the wrong length, KMS slot indices that skip a value,
/// and graphs in which some vertex cannot reach an external vertex.
pub fn assign_edge_kinds(g: &MultiGraph, kinds: &[VertexKind]) -> Result<AnnotatedGraph> {
    let graph = g.clone().with_kinds(kinds.to_vec())?;
    let mut slots: Vec<usize> = kinds
        .iter()
        .filter_map(|k| match k {
            VertexKind::Kms(i) => Some(*i),
            _ => None,
        })
        .collect();
    slots.sort_unstable();
    slots.dedup();
    if slots.iter().enumerate().any(|(pos, &s)| pos != s) {
        return Err(Error::Rejected(format!(
            "imaginary-time slots {slots:?} are not 0..{}",
            slots.len()
        )));
    }
    let externals: Vec<usize> = (0..kinds.len())
        .filter(|&v| kinds[v] == VertexKind::External)
        .collect();
    if !externals.is_empty() && !graph.is_connected() {
        return Err(Error::Rejected(
            "graph is not connected to the external block".into(),
        ));
    }
    let edge_kinds = graph
        .edges()
        .map(|(i, j, _)| edge_kind(kinds[i], kinds[j]))
        .collect::<Result<Vec<_>>>()?;
    Ok(AnnotatedGraph { graph, edge_kinds })
}
