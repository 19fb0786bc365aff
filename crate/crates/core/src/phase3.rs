//! Phase III: snowballs on a square lattice, each committing a quarter of
//! its qubits to fusions with each of its four neighbours, followed by bond
//! percolation analysis of the resulting site graph.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use thiserror::Error;

use crate::graph::{GraphError, GraphState, QubitId};
use crate::phase2::Snowball;
use crate::union_find::UnionFind;

/// Largest grid side simulated at the level of individual qubits.
pub const FULL_GRAPH_MAX_SIDE: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Phase3Error {
    #[error("lattice must be at least 2x2, got {width}x{height}")]
    LatticeTooSmall { width: usize, height: usize },
    #[error("snowballs need at least 4 qubits, got {0}")]
    SnowballTooSmall(usize),
    #[error("probability {0} is outside [0, 1]")]
    InvalidProbability(f64),
    #[error("full-graph mode capped at {FULL_GRAPH_MAX_SIDE}x{FULL_GRAPH_MAX_SIDE}, got {width}x{height}")]
    FullGraphCapped { width: usize, height: usize },
    #[error("grid has {got} snowballs, expected {expected}")]
    GridShape { expected: usize, got: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    Right,
    Down,
    Left,
    Up,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Right, Direction::Down, Direction::Left, Direction::Up];

    pub fn opposite(self) -> Direction {
        match self {
            Direction::Right => Direction::Left,
            Direction::Down => Direction::Up,
            Direction::Left => Direction::Right,
            Direction::Up => Direction::Down,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeSpec {
    pub width: usize,
    pub height: usize,
    pub p_s: f64,
    pub snowball_size: usize,
}

impl LatticeSpec {
    pub fn validate(&self) -> Result<(), Phase3Error> {
        check_dims(self.width, self.height)?;
        if self.snowball_size < 4 {
            return Err(Phase3Error::SnowballTooSmall(self.snowball_size));
        }
        check_probability(self.p_s)
    }
}

fn check_dims(width: usize, height: usize) -> Result<(), Phase3Error> {
    if width < 2 || height < 2 {
        return Err(Phase3Error::LatticeTooSmall { width, height });
    }
    Ok(())
}

fn check_probability(p: f64) -> Result<(), Phase3Error> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Phase3Error::InvalidProbability(p))
    }
}

/// Chance that at least one of the `floor(size/4)` pairs between two
/// neighbouring snowballs fuses.
pub fn bond_probability(snowball_size: usize, p_s: f64) -> f64 {
    let m = (snowball_size / 4) as i32;
    1.0 - (1.0 - p_s).powi(m)
}

/// Presence of every interior bond of a `width x height` open lattice.
/// Sites are `(x, y)` with `x` growing right and `y` growing down.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BondMap {
    width: usize,
    height: usize,
    /// Bond from `(x, y)` to `(x+1, y)` at `y * (width-1) + x`.
    horizontal: Vec<bool>,
    /// Bond from `(x, y)` to `(x, y+1)` at `y * width + x`.
    vertical: Vec<bool>,
}

impl BondMap {
    pub fn new(width: usize, height: usize, present: bool) -> Self {
        BondMap {
            width,
            height,
            horizontal: vec![present; width.saturating_sub(1) * height],
            vertical: vec![present; width * height.saturating_sub(1)],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn site_count(&self) -> usize {
        self.width * self.height
    }

    pub fn bond_count(&self) -> usize {
        self.horizontal.len() + self.vertical.len()
    }

    pub fn present_count(&self) -> usize {
        self.horizontal.iter().chain(&self.vertical).filter(|&&b| b).count()
    }

    pub fn site_index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    /// Index of the bond leaving `(x, y)` in `dir`, normalized to its
    /// right/down representative; `None` on the boundary.
    fn slot(&self, x: usize, y: usize, dir: Direction) -> Option<(bool, usize)> {
        let (w, h) = (self.width, self.height);
        if x >= w || y >= h {
            return None;
        }
        match dir {
            Direction::Right if x + 1 < w => Some((true, y * (w - 1) + x)),
            Direction::Left if x > 0 => Some((true, y * (w - 1) + x - 1)),
            Direction::Down if y + 1 < h => Some((false, y * w + x)),
            Direction::Up if y > 0 => Some((false, (y - 1) * w + x)),
            _ => None,
        }
    }

    pub fn get(&self, x: usize, y: usize, dir: Direction) -> Option<bool> {
        self.slot(x, y, dir)
            .map(|(h, i)| if h { self.horizontal[i] } else { self.vertical[i] })
    }

    /// Sets a bond; returns false for a boundary position.
    pub fn set(&mut self, x: usize, y: usize, dir: Direction, present: bool) -> bool {
        match self.slot(x, y, dir) {
            Some((true, i)) => self.horizontal[i] = present,
            Some((false, i)) => self.vertical[i] = present,
            None => return false,
        }
        true
    }

    /// Every interior bond as `((x, y), Right | Down, present)`, horizontal
    /// bonds first, each group in row-major order.
    pub fn bonds(&self) -> impl Iterator<Item = ((usize, usize), Direction, bool)> + '_ {
        let w = self.width;
        let hz = self.horizontal.iter().enumerate().map(move |(i, &b)| {
            let wm = w - 1;
            ((i % wm, i / wm), Direction::Right, b)
        });
        let vt = self
            .vertical
            .iter()
            .enumerate()
            .map(move |(i, &b)| ((i % w, i / w), Direction::Down, b));
        hz.chain(vt)
    }
}

/// Bond map with every bond present independently with `probability`.
/// Exactly one uniform is drawn per bond, in [`BondMap::bonds`] order, so
/// maps drawn from identical streams at different probabilities are
/// coupled monotonically.
pub fn generate_bonds_with_probability<R: Rng + ?Sized>(
    width: usize,
    height: usize,
    probability: f64,
    rng: &mut R,
) -> Result<BondMap, Phase3Error> {
    check_dims(width, height)?;
    check_probability(probability)?;
    let mut map = BondMap::new(width, height, false);
    for b in map.horizontal.iter_mut().chain(map.vertical.iter_mut()) {
        *b = rng.gen::<f64>() < probability;
    }
    Ok(map)
}

pub fn generate_bonds<R: Rng + ?Sized>(spec: &LatticeSpec, rng: &mut R) -> Result<BondMap, Phase3Error> {
    spec.validate()?;
    generate_bonds_with_probability(
        spec.width,
        spec.height,
        bond_probability(spec.snowball_size, spec.p_s),
        rng,
    )
}

/// Union-find over sites joined by present bonds.
pub fn site_clusters(b: &BondMap) -> UnionFind {
    let mut uf = UnionFind::new(b.site_count());
    for ((x, y), dir, present) in b.bonds() {
        if present {
            let (nx, ny) = match dir {
                Direction::Right => (x + 1, y),
                _ => (x, y + 1),
            };
            uf.union(b.site_index(x, y), b.site_index(nx, ny));
        }
    }
    uf
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PercolationReport {
    pub largest_cluster_fraction: f64,
    pub largest_cluster_size: usize,
    pub crosses_left_right: bool,
    pub crosses_top_bottom: bool,
}

impl PercolationReport {
    /// Crossing in the left-right sense, the one used for statistics.
    pub fn crosses(&self) -> bool {
        self.crosses_left_right
    }
}

pub fn percolation_report(b: &BondMap) -> PercolationReport {
    let mut uf = site_clusters(b);
    let (w, h) = (b.width, b.height);
    let largest = (0..b.site_count()).map(|s| uf.set_size(s)).max().unwrap_or(0);
    let left: BTreeSet<usize> = (0..h).map(|y| uf.find(b.site_index(0, y))).collect();
    let crosses_left_right = (0..h).any(|y| left.contains(&uf.find(b.site_index(w - 1, y))));
    let top: BTreeSet<usize> = (0..w).map(|x| uf.find(b.site_index(x, 0))).collect();
    let crosses_top_bottom = (0..w).any(|x| top.contains(&uf.find(b.site_index(x, h - 1))));
    PercolationReport {
        largest_cluster_fraction: largest as f64 / b.site_count() as f64,
        largest_cluster_size: largest,
        crosses_left_right,
        crosses_top_bottom,
    }
}

/// Full-graph assembly of a small lattice.
#[derive(Debug, Clone)]
pub struct AssembledLattice {
    pub graph: GraphState,
    /// Site of every surviving qubit.
    pub site_of: BTreeMap<QubitId, (usize, usize)>,
    /// Largest intra-site component of every site, row-major.
    pub cores: Vec<BTreeSet<QubitId>>,
    /// Bonds with at least one successful fusion.
    pub raw_bonds: BondMap,
    /// Bonds with a successful fusion between the two sites' cores.
    pub bonds: BondMap,
    /// Successful inter-site edges.
    pub inter_edges: Vec<(QubitId, QubitId)>,
    pub eo_attempts: u64,
}

/// Vertices of a snowball in allocation order: perimeter first by id, then
/// the rest by decreasing degree, ties by id.
pub fn allocation_order(s: &Snowball) -> Vec<QubitId> {
    let g = s.graph();
    let mut order: Vec<(bool, std::cmp::Reverse<usize>, QubitId)> = g
        .vertices()
        .map(|v| {
            let d = g.degree(v).unwrap_or(0);
            let leaf = d <= 1;
            (!leaf, std::cmp::Reverse(if leaf { 0 } else { d }), v)
        })
        .collect();
    order.sort();
    order.into_iter().map(|(_, _, v)| v).collect()
}

/// Splits the allocation order round-robin over Right, Down, Left, Up;
/// each direction receives `floor(size/4)` qubits.
pub fn quarter_allocation(s: &Snowball) -> [Vec<QubitId>; 4] {
    let m = s.size() / 4;
    let mut out: [Vec<QubitId>; 4] = Default::default();
    for (i, v) in allocation_order(s).into_iter().take(4 * m).enumerate() {
        out[i % 4].push(v);
    }
    out
}

/// Places `balls` (row-major, `width * height`) on a lattice and fires all
/// inter-site attempt pairs at once. Failed pairs are reset out of the
/// graph, charging their neighbours a byproduct; successful pairs are
/// kept, including redundant ones.
pub fn assemble_small_lattice<R: Rng + ?Sized>(
    balls: &[Snowball],
    width: usize,
    height: usize,
    p_s: f64,
    rng: &mut R,
) -> Result<AssembledLattice, Phase3Error> {
    check_dims(width, height)?;
    check_probability(p_s)?;
    if width > FULL_GRAPH_MAX_SIDE || height > FULL_GRAPH_MAX_SIDE {
        return Err(Phase3Error::FullGraphCapped { width, height });
    }
    if balls.len() != width * height {
        return Err(Phase3Error::GridShape {
            expected: width * height,
            got: balls.len(),
        });
    }
    let mut graph = GraphState::new();
    let mut site_of = BTreeMap::new();
    let mut alloc = Vec::with_capacity(balls.len());
    for (i, ball) in balls.iter().enumerate() {
        let site = (i % width, i / width);
        let map = graph.absorb(ball.graph());
        for &v in map.values() {
            site_of.insert(v, site);
        }
        alloc.push(quarter_allocation(ball).map(|q| q.into_iter().map(|v| map[&v]).collect::<Vec<_>>()));
    }

    let mut raw_bonds = BondMap::new(width, height, false);
    let mut successes = Vec::new();
    let mut failures = Vec::new();
    let mut eo_attempts = 0;
    let positions: Vec<((usize, usize), Direction)> =
        raw_bonds.bonds().map(|(s, d, _)| (s, d)).collect();
    for ((x, y), dir) in positions {
        let (nx, ny) = if dir == Direction::Right { (x + 1, y) } else { (x, y + 1) };
        let from = &alloc[y * width + x][dir.index()];
        let to = &alloc[ny * width + nx][dir.opposite().index()];
        let mut any = false;
        for (&a, &b) in from.iter().zip(to) {
            eo_attempts += 1;
            if rng.gen_bool(p_s) {
                successes.push((a, b));
                any = true;
            } else {
                failures.push((a, b));
            }
        }
        raw_bonds.set(x, y, dir, any);
    }

    let failed: BTreeSet<QubitId> = failures.iter().flat_map(|&(a, b)| [a, b]).collect();
    for &v in &failed {
        for u in graph.remove_vertex(v)? {
            if !failed.contains(&u) {
                graph.bump_error(u)?;
            }
        }
        site_of.remove(&v);
    }
    for &(a, b) in &successes {
        graph.apply_fusion(a, b, true, 1)?;
    }

    let cores = site_cores(&graph, &site_of, width * height, width);
    let mut bonds = BondMap::new(width, height, false);
    for &(a, b) in &successes {
        let (sa, sb) = (site_of[&a], site_of[&b]);
        let (ia, ib) = (sa.1 * width + sa.0, sb.1 * width + sb.0);
        if cores[ia].contains(&a) && cores[ib].contains(&b) {
            let (lo, hi) = if ia < ib { (sa, sb) } else { (sb, sa) };
            let dir = if lo.1 == hi.1 { Direction::Right } else { Direction::Down };
            bonds.set(lo.0, lo.1, dir, true);
        }
    }
    Ok(AssembledLattice {
        graph,
        site_of,
        cores,
        raw_bonds,
        bonds,
        inter_edges: successes,
        eo_attempts,
    })
}

/// Largest connected piece of each site's own qubits, using only edges
/// inside the site; ties go to the piece holding the smallest id.
fn site_cores(
    g: &GraphState,
    site_of: &BTreeMap<QubitId, (usize, usize)>,
    sites: usize,
    width: usize,
) -> Vec<BTreeSet<QubitId>> {
    let mut best: Vec<BTreeSet<QubitId>> = vec![BTreeSet::new(); sites];
    let mut seen = BTreeSet::new();
    for (&start, &site) in site_of {
        if !seen.insert(start) {
            continue;
        }
        let mut piece = BTreeSet::from([start]);
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for &u in g.neighbors(v).into_iter().flatten() {
                if site_of.get(&u) == Some(&site) && seen.insert(u) {
                    piece.insert(u);
                    stack.push(u);
                }
            }
        }
        let idx = site.1 * width + site.0;
        // pieces are discovered in order of their smallest id
        if piece.len() > best[idx].len() {
            best[idx] = piece;
        }
    }
    best
}
