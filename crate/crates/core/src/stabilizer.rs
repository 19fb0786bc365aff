//! Brute-force stabilizer tableau used as an independent check on the graph
//! rewrite rules in [`crate::graph`].
//!
//! Each generator is stored as `i^phase · ∏ X^x Z^z` over at most
//! [`MAX_QUBITS`] qubits, with bit `j` of `x`/`z` referring to column `j`.
//! Measurement follows the usual Gottesman update; the measured qubit is then
//! factored out so the tableau always describes the unmeasured qubits.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::graph::{GraphError, GraphState, QubitId};

pub const MAX_QUBITS: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("empty input")]
    EmptyInput,
    #[error("{0} qubits exceeds the oracle cap of {MAX_QUBITS}")]
    TooManyQubits(usize),
    #[error("qubit index {index} out of range for {n} qubits")]
    IndexOutOfRange { index: usize, n: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    Y,
    Z,
}

/// One Pauli string `i^phase · X^x · Z^z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PauliRow {
    pub x: u32,
    pub z: u32,
    /// Power of `i`, mod 4.
    pub phase: u8,
}

impl PauliRow {
    fn single(basis: Basis, index: usize) -> Self {
        let bit = 1u32 << index;
        match basis {
            Basis::Z => PauliRow { x: 0, z: bit, phase: 0 },
            // Y = i·X·Z
            Basis::Y => PauliRow { x: bit, z: bit, phase: 1 },
        }
    }

    pub fn commutes_with(&self, other: &PauliRow) -> bool {
        ((self.x & other.z).count_ones() + (self.z & other.x).count_ones()) % 2 == 0
    }

    /// `self · other`.
    pub fn mul(&self, other: &PauliRow) -> PauliRow {
        // Z^z1 X^x2 = (-1)^{|z1 & x2|} X^x2 Z^z1
        let sign = 2 * ((self.z & other.x).count_ones() % 2) as u8;
        PauliRow {
            x: self.x ^ other.x,
            z: self.z ^ other.z,
            phase: (self.phase + other.phase + sign) % 4,
        }
    }

    fn acts_on(&self, index: usize) -> bool {
        (self.x | self.z) >> index & 1 == 1
    }

    fn drop_column(&self, index: usize) -> PauliRow {
        let squeeze = |w: u32| {
            let low = w & ((1u32 << index) - 1);
            let high = (w >> (index + 1)) << index;
            low | high
        };
        PauliRow {
            x: squeeze(self.x),
            z: squeeze(self.z),
            phase: self.phase,
        }
    }
}

/// Stabilizer generators of an `n`-qubit state, with the [`QubitId`] each
/// column stands for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StabilizerTableau {
    labels: Vec<QubitId>,
    rows: Vec<PauliRow>,
}

impl StabilizerTableau {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[QubitId] {
        &self.labels
    }

    pub fn rows(&self) -> &[PauliRow] {
        &self.rows
    }

    pub fn x_bit(&self, row: usize, col: usize) -> bool {
        self.rows[row].x >> col & 1 == 1
    }

    pub fn z_bit(&self, row: usize, col: usize) -> bool {
        self.rows[row].z >> col & 1 == 1
    }

    pub fn column_of(&self, v: QubitId) -> Option<usize> {
        self.labels.iter().position(|&l| l == v)
    }

    /// All generators commute pairwise and are independent.
    pub fn is_valid(&self) -> bool {
        let n = self.n();
        if self.rows.len() != n {
            return false;
        }
        for (i, a) in self.rows.iter().enumerate() {
            if self.rows[i + 1..].iter().any(|b| !a.commutes_with(b)) {
                return false;
            }
        }
        let packed: Vec<u64> = self
            .rows
            .iter()
            .map(|r| r.x as u64 | (r.z as u64) << 32)
            .collect();
        gf2_rank(packed) == n
    }
}

fn gf2_rank(mut rows: Vec<u64>) -> usize {
    let mut rank = 0;
    for bit in 0..64 {
        let mask = 1u64 << bit;
        let Some(p) = (rank..rows.len()).find(|&r| rows[r] & mask != 0) else {
            continue;
        };
        rows.swap(rank, p);
        let pivot = rows[rank];
        for (r, row) in rows.iter_mut().enumerate() {
            if r != rank && *row & mask != 0 {
                *row ^= pivot;
            }
        }
        rank += 1;
    }
    rank
}

/// Generator `i` is `X_i ∏_{j ∈ N(i)} Z_j`; columns follow ascending ids.
pub fn tableau_from_graph(g: &GraphState) -> Result<StabilizerTableau, OracleError> {
    if g.is_empty() {
        return Err(OracleError::EmptyInput);
    }
    if g.len() > MAX_QUBITS {
        return Err(OracleError::TooManyQubits(g.len()));
    }
    let labels: Vec<QubitId> = g.vertices().collect();
    let col = |v: QubitId| labels.binary_search(&v).expect("vertex has a column");
    let mut rows = Vec::with_capacity(labels.len());
    for (i, &v) in labels.iter().enumerate() {
        let z = g.neighbors(v)?.iter().fold(0u32, |acc, &u| acc | 1 << col(u));
        rows.push(PauliRow { x: 1 << i, z, phase: 0 });
    }
    Ok(StabilizerTableau { labels, rows })
}

/// Measures `basis` on column `index`, post-selecting the +1 outcome, then
/// discards the measured qubit.
pub fn measure_pauli(
    t: &StabilizerTableau,
    index: usize,
    basis: Basis,
) -> Result<StabilizerTableau, OracleError> {
    let n = t.n();
    if index >= n {
        return Err(OracleError::IndexOutOfRange { index, n });
    }
    let op = PauliRow::single(basis, index);
    let mut rows = t.rows.clone();

    let anti: Vec<usize> = (0..n).filter(|&r| !rows[r].commutes_with(&op)).collect();
    if let Some((&pivot, rest)) = anti.split_first() {
        for &r in rest {
            rows[r] = rows[r].mul(&rows[pivot]);
        }
        rows[pivot] = op;
    }
    // Otherwise ±op already stabilizes the state and nothing changes.

    // The state is now |op=+1> ⊗ |rest>, so every generator acts on the
    // measured qubit as I or as op. Clear it from all but one generator.
    let pivot = (0..n)
        .find(|&r| rows[r].acts_on(index))
        .expect("a measured qubit is stabilized by some generator");
    let pivot_row = rows[pivot];
    for r in 0..n {
        if r != pivot && rows[r].acts_on(index) {
            rows[r] = rows[r].mul(&pivot_row);
            debug_assert!(!rows[r].acts_on(index));
        }
    }
    let rows = rows
        .iter()
        .enumerate()
        .filter(|&(r, _)| r != pivot)
        .map(|(_, row)| row.drop_column(index))
        .collect();
    let mut labels = t.labels.clone();
    labels.remove(index);
    Ok(StabilizerTableau { labels, rows })
}

/// Graph whose state is local-Clifford equivalent to the tableau's state.
///
/// Row-reduce the X block with lowest-column-first pivots; Hadamard every
/// non-pivot column so the X block becomes invertible; reduce it to the
/// identity. The Z block is then symmetric, its off-diagonal part is the
/// adjacency matrix, and its diagonal is removed by phase gates. States that
/// are already graph states up to diagonal Cliffords need no Hadamards, so
/// for those the result is the exact graph.
pub fn canonical_graph(t: &StabilizerTableau) -> Result<GraphState, OracleError> {
    let n = t.n();
    let mut x: Vec<u32> = t.rows.iter().map(|r| r.x).collect();
    let mut z: Vec<u32> = t.rows.iter().map(|r| r.z).collect();

    let pivots = reduce(&mut x, &mut z, n);
    let pivot_cols: BTreeSet<usize> = pivots.iter().map(|&(_, c)| c).collect();
    for col in (0..n).filter(|c| !pivot_cols.contains(c)) {
        let bit = 1u32 << col;
        for r in 0..n {
            let (xb, zb) = (x[r] & bit, z[r] & bit);
            x[r] = (x[r] & !bit) | zb;
            z[r] = (z[r] & !bit) | xb;
        }
    }
    let pivots = reduce(&mut x, &mut z, n);
    assert_eq!(pivots.len(), n, "X block must be invertible after Hadamards");

    // Row r now has its X pivot in column pivots[r].1 and X block is a
    // permutation of the identity.
    let mut adj = vec![0u32; n];
    for &(r, c) in &pivots {
        debug_assert_eq!(x[r], 1 << c);
        adj[c] = z[r] & !(1 << c);
    }
    let mut g = GraphState::new();
    for &label in &t.labels {
        g.add_vertex_with_id(label, 0)?;
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let a = adj[i] >> j & 1 == 1;
            debug_assert_eq!(a, adj[j] >> i & 1 == 1, "Z block must be symmetric");
            if a {
                g.add_edge(t.labels[i], t.labels[j], 0)?;
            }
        }
    }
    Ok(g)
}

/// Gauss-Jordan elimination on the X block (row ops applied to Z as well).
/// Returns `(row, column)` pivots in ascending column order; pivot rows are
/// moved to the top.
fn reduce(x: &mut [u32], z: &mut [u32], n: usize) -> Vec<(usize, usize)> {
    let mut pivots = Vec::new();
    let mut next = 0;
    for col in 0..n {
        let bit = 1u32 << col;
        let Some(p) = (next..x.len()).find(|&r| x[r] & bit != 0) else {
            continue;
        };
        x.swap(next, p);
        z.swap(next, p);
        for r in 0..x.len() {
            if r != next && x[r] & bit != 0 {
                x[r] ^= x[next];
                z[r] ^= z[next];
            }
        }
        pivots.push((next, col));
        next += 1;
    }
    pivots
}

/// Per-size tally of an exhaustive rewrite-rule check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleTally {
    pub n: usize,
    pub connected_graphs: usize,
    pub checks: usize,
    pub passed: usize,
}

/// All connected labeled graphs on `q0..q{n-1}`, in edge-mask order.
pub fn connected_labeled_graphs(n: usize) -> Vec<GraphState> {
    let pairs: Vec<(u64, u64)> = (0..n as u64)
        .flat_map(|i| ((i + 1)..n as u64).map(move |j| (i, j)))
        .collect();
    assert!(pairs.len() < 32, "enumeration limited to n <= 8");
    let mut out = Vec::new();
    for mask in 0u32..(1u32 << pairs.len()) {
        let edges: Vec<(u64, u64)> = pairs
            .iter()
            .enumerate()
            .filter(|(k, _)| mask >> k & 1 == 1)
            .map(|(_, &e)| e)
            .collect();
        let g = GraphState::from_edges(n, &edges).expect("valid edges");
        if g.is_connected() {
            out.push(g);
        }
    }
    out
}

/// Applies the graph rule and the tableau route for one vertex and basis
/// and reports whether the resulting graphs agree.
pub fn rewrite_matches_oracle(
    g: &GraphState,
    v: QubitId,
    basis: Basis,
) -> Result<bool, OracleError> {
    let mut by_rule = g.clone();
    match basis {
        Basis::Z => by_rule.measure_z(v)?,
        Basis::Y => by_rule.measure_y(v)?,
    }
    let t = tableau_from_graph(g)?;
    let col = t.column_of(v).ok_or(GraphError::NoSuchQubit(v))?;
    let by_oracle = canonical_graph(&measure_pauli(&t, col, basis)?)?;
    Ok(by_rule.same_topology(&by_oracle))
}

/// Checks both measurement rules on every vertex of every connected labeled
/// graph with `1 <= n <= max_n`.
pub fn verify_rewrite_rules(max_n: usize) -> Result<Vec<OracleTally>, OracleError> {
    let mut out = Vec::new();
    for n in 1..=max_n {
        let graphs = connected_labeled_graphs(n);
        let mut tally = OracleTally {
            n,
            connected_graphs: graphs.len(),
            checks: 0,
            passed: 0,
        };
        for g in &graphs {
            for v in g.vertices() {
                for basis in [Basis::Z, Basis::Y] {
                    tally.checks += 1;
                    if rewrite_matches_oracle(g, v, basis)? {
                        tally.passed += 1;
                    }
                }
            }
        }
        out.push(tally);
    }
    Ok(out)
}
