//! Graph-state representation and the graph rewrite rules for Pauli
//! measurements and heralded, probabilistic fusion.
//!
//! A graph state on vertex set `V` is the joint +1 eigenstate of the
//! operators `X_i ∏_{j ∈ N(i)} Z_j`. Single-qubit Z and Y measurements map
//! graph states to (locally equivalent) smaller graph states, which is what
//! lets the growth protocols be simulated at the level of topology alone.
//! Outcome-dependent local corrections are not tracked as operators; each
//! one is charged as `+1` to the affected vertex's `error_weight`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use rand::Rng;
use thiserror::Error;

/// Identifier of a physical qubit within one [`GraphState`]. Ids are handed
/// out monotonically and never reused, so a reset qubit comes back with a
/// fresh id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QubitId(pub u64);

impl fmt::Display for QubitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "q{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    /// Degree 0: a product-state qubit available for new entanglement.
    Free,
    /// Degree 1.
    Leaf,
    /// Degree >= 2, marked as the fusion point of a snowflake.
    Root,
    /// Degree >= 2, unmarked.
    Internal,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VertexMeta {
    pub role: Role,
    pub birth_step: u64,
    pub error_weight: u32,
    root_mark: bool,
}

impl VertexMeta {
    pub fn is_root_marked(&self) -> bool {
        self.root_mark
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeMeta {
    pub birth_step: u64,
}

/// Undirected edge with endpoints stored in ascending order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge(QubitId, QubitId);

impl Edge {
    pub fn new(a: QubitId, b: QubitId) -> Self {
        if a <= b {
            Edge(a, b)
        } else {
            Edge(b, a)
        }
    }

    pub fn endpoints(&self) -> (QubitId, QubitId) {
        (self.0, self.1)
    }

    pub fn contains(&self, v: QubitId) -> bool {
        self.0 == v || self.1 == v
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("no such qubit: {0}")]
    NoSuchQubit(QubitId),
    #[error("self fusion on {0}")]
    SelfFusion(QubitId),
    #[error("self loop on {0}")]
    SelfLoop(QubitId),
    #[error("qubit id {0} is already in use")]
    DuplicateQubit(QubitId),
    #[error("{0} and {1} are already adjacent")]
    AlreadyAdjacent(QubitId, QubitId),
    #[error("probability {0} is outside [0, 1]")]
    InvalidProbability(f64),
}

/// Result of one entangling-operation attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FusionOutcome {
    pub success: bool,
    /// The two operands on failure, empty on success.
    pub consumed: Vec<QubitId>,
    pub new_edge: Option<Edge>,
}

#[derive(Debug, Clone, Default)]
pub struct GraphState {
    adjacency: BTreeMap<QubitId, BTreeSet<QubitId>>,
    vertex_meta: BTreeMap<QubitId, VertexMeta>,
    edge_meta: BTreeMap<Edge, EdgeMeta>,
    next_id: u64,
}

impl GraphState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Graph with `n` isolated vertices `q0..q{n-1}`, all born at step 0.
    pub fn with_vertices(n: usize) -> Self {
        let mut g = Self::new();
        for _ in 0..n {
            g.add_free_vertex(0);
        }
        g
    }

    /// Builds a graph on `q0..q{n-1}` with the given edges (by index).
    pub fn from_edges(n: usize, edges: &[(u64, u64)]) -> Result<Self, GraphError> {
        let mut g = Self::with_vertices(n);
        for &(a, b) in edges {
            g.add_edge(QubitId(a), QubitId(b), 0)?;
        }
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_meta.len()
    }

    pub fn contains(&self, v: QubitId) -> bool {
        self.adjacency.contains_key(&v)
    }

    pub fn vertices(&self) -> impl Iterator<Item = QubitId> + '_ {
        self.adjacency.keys().copied()
    }

    pub fn edges(&self) -> impl Iterator<Item = (Edge, EdgeMeta)> + '_ {
        self.edge_meta.iter().map(|(e, m)| (*e, *m))
    }

    pub fn neighbors(&self, v: QubitId) -> Result<&BTreeSet<QubitId>, GraphError> {
        self.adjacency.get(&v).ok_or(GraphError::NoSuchQubit(v))
    }

    pub fn degree(&self, v: QubitId) -> Result<usize, GraphError> {
        self.neighbors(v).map(BTreeSet::len)
    }

    pub fn has_edge(&self, a: QubitId, b: QubitId) -> bool {
        self.edge_meta.contains_key(&Edge::new(a, b))
    }

    pub fn vertex_meta(&self, v: QubitId) -> Result<&VertexMeta, GraphError> {
        self.vertex_meta.get(&v).ok_or(GraphError::NoSuchQubit(v))
    }

    pub fn edge_meta(&self, a: QubitId, b: QubitId) -> Option<EdgeMeta> {
        self.edge_meta.get(&Edge::new(a, b)).copied()
    }

    pub fn role(&self, v: QubitId) -> Result<Role, GraphError> {
        self.vertex_meta(v).map(|m| m.role)
    }

    pub fn error_weight(&self, v: QubitId) -> Result<u32, GraphError> {
        self.vertex_meta(v).map(|m| m.error_weight)
    }

    /// Largest error weight over all vertices, 0 for the empty graph.
    pub fn max_error_weight(&self) -> u32 {
        self.vertex_meta
            .values()
            .map(|m| m.error_weight)
            .max()
            .unwrap_or(0)
    }

    pub fn add_free_vertex(&mut self, step: u64) -> QubitId {
        let id = QubitId(self.next_id);
        self.next_id += 1;
        self.insert_vertex(id, step, 0, false);
        id
    }

    /// Inserts a vertex with a caller-chosen id. Later fresh ids are drawn
    /// above every id seen so far.
    pub fn add_vertex_with_id(&mut self, id: QubitId, step: u64) -> Result<(), GraphError> {
        if self.contains(id) {
            return Err(GraphError::DuplicateQubit(id));
        }
        self.next_id = self.next_id.max(id.0 + 1);
        self.insert_vertex(id, step, 0, false);
        Ok(())
    }

    fn insert_vertex(&mut self, id: QubitId, step: u64, error_weight: u32, root_mark: bool) {
        self.adjacency.insert(id, BTreeSet::new());
        self.vertex_meta.insert(
            id,
            VertexMeta {
                role: Role::Free,
                birth_step: step,
                error_weight,
                root_mark,
            },
        );
        self.refresh_role(id);
    }

    pub fn add_edge(&mut self, a: QubitId, b: QubitId, step: u64) -> Result<(), GraphError> {
        self.check(a)?;
        self.check(b)?;
        if a == b {
            return Err(GraphError::SelfLoop(a));
        }
        if self.has_edge(a, b) {
            return Err(GraphError::AlreadyAdjacent(a, b));
        }
        self.link(a, b, step);
        Ok(())
    }

    pub fn remove_edge(&mut self, a: QubitId, b: QubitId) -> bool {
        let removed = self.edge_meta.remove(&Edge::new(a, b)).is_some();
        if removed {
            self.unlink(a, b);
        }
        removed
    }

    /// Removes `v` and its edges without touching any error weight. This is
    /// a reset of the qubit, not a measurement.
    pub fn remove_vertex(&mut self, v: QubitId) -> Result<BTreeSet<QubitId>, GraphError> {
        let nbrs = self.adjacency.remove(&v).ok_or(GraphError::NoSuchQubit(v))?;
        self.vertex_meta.remove(&v);
        for &u in &nbrs {
            self.edge_meta.remove(&Edge::new(u, v));
            if let Some(set) = self.adjacency.get_mut(&u) {
                set.remove(&v);
            }
            self.refresh_role(u);
        }
        Ok(nbrs)
    }

    pub fn bump_error(&mut self, v: QubitId) -> Result<(), GraphError> {
        let meta = self.vertex_meta.get_mut(&v).ok_or(GraphError::NoSuchQubit(v))?;
        meta.error_weight += 1;
        Ok(())
    }

    pub fn mark_root(&mut self, v: QubitId, mark: bool) -> Result<(), GraphError> {
        let meta = self.vertex_meta.get_mut(&v).ok_or(GraphError::NoSuchQubit(v))?;
        meta.root_mark = mark;
        self.refresh_role(v);
        Ok(())
    }

    /// Z-basis measurement (+1 branch): deletes `v` and its edges. Each
    /// former neighbour picks up one byproduct correction.
    pub fn measure_z(&mut self, v: QubitId) -> Result<(), GraphError> {
        let nbrs = self.remove_vertex(v)?;
        for u in nbrs {
            self.bump_error(u)?;
        }
        Ok(())
    }

    /// Y-basis measurement (+1 branch): complements the edges inside the
    /// neighbourhood of `v`, then deletes `v`.
    pub fn measure_y(&mut self, v: QubitId) -> Result<(), GraphError> {
        self.complement_neighbourhood(v)?;
        self.measure_z(v)
    }

    /// Local complementation at `v`: complements the edges among the
    /// neighbours of `v`, leaving `v` and its own edges alone. An involution.
    pub fn local_complement(&mut self, v: QubitId) -> Result<(), GraphError> {
        self.complement_neighbourhood(v)
    }

    fn complement_neighbourhood(&mut self, v: QubitId) -> Result<(), GraphError> {
        let nbrs: Vec<QubitId> = self.neighbors(v)?.iter().copied().collect();
        for (i, &a) in nbrs.iter().enumerate() {
            for &b in &nbrs[i + 1..] {
                if !self.remove_edge(a, b) {
                    // a new a-b link carries the older of the two links it replaces
                    let birth = self.edge_birth(v, a).min(self.edge_birth(v, b));
                    self.link(a, b, birth);
                }
            }
        }
        Ok(())
    }

    fn edge_birth(&self, a: QubitId, b: QubitId) -> u64 {
        self.edge_meta(a, b).map_or(0, |m| m.birth_step)
    }

    /// One heralded entangling attempt between `a` and `b` succeeding with
    /// probability `p_s`.
    pub fn fuse<R: Rng + ?Sized>(
        &mut self,
        a: QubitId,
        b: QubitId,
        rng: &mut R,
        p_s: f64,
        step: u64,
    ) -> Result<FusionOutcome, GraphError> {
        self.check_fusion(a, b)?;
        if !(0.0..=1.0).contains(&p_s) {
            return Err(GraphError::InvalidProbability(p_s));
        }
        let success = rng.gen_bool(p_s);
        self.apply_fusion(a, b, success, step)
    }

    /// Applies a fusion with a predetermined outcome. On success the edge
    /// `a-b` is created and both operands are charged one error unit; on
    /// failure both operands are reset out of the graph and their former
    /// neighbours are left for the caller's pruning policy.
    pub fn apply_fusion(
        &mut self,
        a: QubitId,
        b: QubitId,
        success: bool,
        step: u64,
    ) -> Result<FusionOutcome, GraphError> {
        self.check_fusion(a, b)?;
        if success {
            self.link(a, b, step);
            self.bump_error(a)?;
            self.bump_error(b)?;
            Ok(FusionOutcome {
                success: true,
                consumed: Vec::new(),
                new_edge: Some(Edge::new(a, b)),
            })
        } else {
            self.remove_vertex(a)?;
            self.remove_vertex(b)?;
            Ok(FusionOutcome {
                success: false,
                consumed: vec![a, b],
                new_edge: None,
            })
        }
    }

    fn check_fusion(&self, a: QubitId, b: QubitId) -> Result<(), GraphError> {
        if a == b {
            return Err(GraphError::SelfFusion(a));
        }
        self.check(a)?;
        self.check(b)?;
        if self.has_edge(a, b) {
            return Err(GraphError::AlreadyAdjacent(a, b));
        }
        Ok(())
    }

    /// Shortest-path length in edges, `None` when `a` and `b` are in
    /// different components.
    pub fn path_length(&self, a: QubitId, b: QubitId) -> Result<Option<usize>, GraphError> {
        self.check(b)?;
        Ok(self.distances_from(a)?.get(&b).copied())
    }

    /// BFS distances from `src` to every vertex of its component.
    pub fn distances_from(&self, src: QubitId) -> Result<BTreeMap<QubitId, usize>, GraphError> {
        self.check(src)?;
        let mut dist = BTreeMap::new();
        dist.insert(src, 0);
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            let d = dist[&u];
            for &w in &self.adjacency[&u] {
                if let std::collections::btree_map::Entry::Vacant(e) = dist.entry(w) {
                    e.insert(d + 1);
                    queue.push_back(w);
                }
            }
        }
        Ok(dist)
    }

    /// Connected components, each sorted, listed by smallest member.
    pub fn components(&self) -> Vec<Vec<QubitId>> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for v in self.vertices() {
            if seen.contains(&v) {
                continue;
            }
            let comp: Vec<QubitId> = self.distances_from(v).expect("vertex exists").into_keys().collect();
            seen.extend(comp.iter().copied());
            out.push(comp);
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        match self.vertices().next() {
            None => true,
            Some(v) => self.distances_from(v).expect("vertex exists").len() == self.len(),
        }
    }

    /// True when the graph has no cycles.
    pub fn is_forest(&self) -> bool {
        self.edge_count() + self.components().len() == self.len()
    }

    /// Largest shortest-path distance between any two vertices; `None` if
    /// the graph is disconnected. The empty graph has diameter 0.
    pub fn diameter(&self) -> Option<usize> {
        if !self.is_connected() {
            return None;
        }
        if self.is_forest() {
            // in a tree the farthest vertex from anywhere ends a longest path
            let Some(start) = self.vertices().next() else { return Some(0) };
            let far = |from: QubitId| {
                self.distances_from(from)
                    .expect("vertex exists")
                    .into_iter()
                    .max_by_key(|&(_, d)| d)
                    .expect("source is reachable")
            };
            let (end, _) = far(start);
            return Some(far(end).1);
        }
        let mut best = 0;
        for v in self.vertices() {
            let ecc = self
                .distances_from(v)
                .expect("vertex exists")
                .into_values()
                .max()
                .unwrap_or(0);
            best = best.max(ecc);
        }
        Some(best)
    }

    /// Deletes, by Z measurement, every vertex that is not needed to keep
    /// the vertices in `keep` connected: components without a kept vertex
    /// go entirely, then unkept vertices of degree <= 1 are stripped until
    /// none remain. On a forest this leaves exactly the minimal subtrees
    /// spanning `keep`. Returns the number of Z measurements performed.
    pub fn prune_to_tree(&mut self, keep: &BTreeSet<QubitId>) -> Result<usize, GraphError> {
        for &k in keep {
            self.check(k)?;
        }
        let mut doomed: BTreeSet<QubitId> = BTreeSet::new();
        for comp in self.components() {
            if !comp.iter().any(|v| keep.contains(v)) {
                doomed.extend(comp);
            }
        }
        let mut degree: BTreeMap<QubitId, usize> = self
            .adjacency
            .iter()
            .filter(|(v, _)| !doomed.contains(v))
            .map(|(v, n)| (*v, n.len()))
            .collect();
        let mut queue: VecDeque<QubitId> = degree
            .iter()
            .filter(|(v, d)| **d <= 1 && !keep.contains(v))
            .map(|(v, _)| *v)
            .collect();
        while let Some(v) = queue.pop_front() {
            if !doomed.insert(v) {
                continue;
            }
            for &u in &self.adjacency[&v] {
                if doomed.contains(&u) {
                    continue;
                }
                let d = degree.get_mut(&u).expect("live vertex");
                *d -= 1;
                if *d <= 1 && !keep.contains(&u) {
                    queue.push_back(u);
                }
            }
        }
        for &v in &doomed {
            self.measure_z(v)?;
        }
        Ok(doomed.len())
    }

    /// Copies `other` into `self` under fresh ids, preserving all metadata.
    /// Returns the id map from `other` to `self`.
    pub fn absorb(&mut self, other: &GraphState) -> BTreeMap<QubitId, QubitId> {
        let mut map = BTreeMap::new();
        for (&v, meta) in &other.vertex_meta {
            let id = QubitId(self.next_id);
            self.next_id += 1;
            self.insert_vertex(id, meta.birth_step, meta.error_weight, meta.root_mark);
            map.insert(v, id);
        }
        for (e, m) in &other.edge_meta {
            let (a, b) = e.endpoints();
            self.link(map[&a], map[&b], m.birth_step);
        }
        map
    }

    /// Subgraph induced on the vertices accepted by `keep`, ids and metadata
    /// preserved.
    pub fn induced_subgraph(&self, keep: impl Fn(QubitId) -> bool) -> GraphState {
        let mut g = GraphState {
            next_id: self.next_id,
            ..GraphState::default()
        };
        for (&v, meta) in &self.vertex_meta {
            if keep(v) {
                g.insert_vertex(v, meta.birth_step, meta.error_weight, meta.root_mark);
            }
        }
        for (e, m) in &self.edge_meta {
            let (a, b) = e.endpoints();
            if g.contains(a) && g.contains(b) {
                g.link(a, b, m.birth_step);
            }
        }
        g
    }

    /// Same vertex ids and same edge set; metadata is ignored.
    pub fn same_topology(&self, other: &GraphState) -> bool {
        self.adjacency.keys().eq(other.adjacency.keys())
            && self.edge_meta.keys().eq(other.edge_meta.keys())
    }

    fn check(&self, v: QubitId) -> Result<(), GraphError> {
        if self.contains(v) {
            Ok(())
        } else {
            Err(GraphError::NoSuchQubit(v))
        }
    }

    fn link(&mut self, a: QubitId, b: QubitId, step: u64) {
        self.adjacency.get_mut(&a).expect("endpoint").insert(b);
        self.adjacency.get_mut(&b).expect("endpoint").insert(a);
        self.edge_meta.insert(Edge::new(a, b), EdgeMeta { birth_step: step });
        self.refresh_role(a);
        self.refresh_role(b);
    }

    fn unlink(&mut self, a: QubitId, b: QubitId) {
        if let Some(s) = self.adjacency.get_mut(&a) {
            s.remove(&b);
        }
        if let Some(s) = self.adjacency.get_mut(&b) {
            s.remove(&a);
        }
        self.refresh_role(a);
        self.refresh_role(b);
    }

    fn refresh_role(&mut self, v: QubitId) {
        let Some(deg) = self.adjacency.get(&v).map(BTreeSet::len) else {
            return;
        };
        let meta = self.vertex_meta.get_mut(&v).expect("meta for every vertex");
        meta.role = match deg {
            0 => Role::Free,
            1 => Role::Leaf,
            _ if meta.root_mark => Role::Root,
            _ => Role::Internal,
        };
    }
}
