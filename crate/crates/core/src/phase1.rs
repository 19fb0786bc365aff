//! Phase I: growing snowflakes of `2^k >= 1/p_s` qubits out of product-state
//! qubits by fusing equal-size snowflakes at their roots, all pairs in
//! parallel each time step.
//!
//! A snowflake of level `k` is a binomial tree on `2^k` vertices. Joining two
//! level-`k` snowflakes adds one edge between their roots and keeps the first
//! operand's root, so a level-`k` root has one child subtree of every level
//! `0..k`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::graph::{GraphError, GraphState, QubitId};
use crate::metrics::{Phase, TrialReport};

pub const DEFAULT_MAX_STEPS: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// Every device qubit is destined for the target snowflake.
    NoBuffer,
    /// Spare capacity equal to the target size.
    Buffer,
    /// Buffered, and on a failed fusion the surviving subtrees are kept.
    Recycle,
}

impl Strategy {
    pub fn label(&self) -> &'static str {
        match self {
            Strategy::NoBuffer => "no-buffer",
            Strategy::Buffer => "buffer",
            Strategy::Recycle => "recycle",
        }
    }

    /// Smallest device the strategy is defined for.
    pub fn minimum_device(&self, target_level: u32) -> usize {
        let size = 1usize << target_level;
        match self {
            Strategy::NoBuffer => size,
            Strategy::Buffer | Strategy::Recycle => 2 * size,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "no-buffer" | "nobuffer" => Ok(Strategy::NoBuffer),
            "buffer" => Ok(Strategy::Buffer),
            "recycle" => Ok(Strategy::Recycle),
            other => Err(format!("unknown strategy '{other}' (expected no-buffer, buffer or recycle)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Phase1Error {
    #[error("success probability {0} is outside (0, 1]")]
    InvalidProbability(f64),
    #[error("{strategy} needs at least {need} qubits, device has {have}")]
    DeviceTooSmall {
        strategy: Strategy,
        need: usize,
        have: usize,
    },
    #[error("timeout after {} steps", partial.steps)]
    Timeout { partial: Box<TrialReport> },
    #[error("need at least 4 steps to separate burn-in from measurement, got {0}")]
    TooFewSteps(u64),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Level `k` of the smallest power of two not below `1/p_s`.
pub fn target_level(p_s: f64) -> Result<u32, Phase1Error> {
    if !(p_s > 0.0 && p_s <= 1.0) {
        return Err(Phase1Error::InvalidProbability(p_s));
    }
    let mut k = 0u32;
    // tolerate p_s that are a rounding error away from 2^-k
    while (2f64.powi(k as i32) * p_s) < 1.0 - 1e-9 {
        k += 1;
    }
    Ok(k)
}

/// Device size `(2/p_s)^k`, `k = target_level(p_s)`, rounded up. Saturates
/// at `u128::MAX`.
pub fn expected_device_size(p_s: f64) -> Result<u128, Phase1Error> {
    let k = target_level(p_s)?;
    let size = (2.0 / p_s).powi(k as i32);
    if size >= u128::MAX as f64 {
        return Ok(u128::MAX);
    }
    // (2/p)^k is usually an exact integer that floating point misses by a hair
    let nearest = size.round();
    if (size - nearest).abs() <= 1e-12 * size {
        return Ok(nearest.max(1.0) as u128);
    }
    Ok(size.ceil().max(1.0) as u128)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceConfig {
    pub p_s: f64,
    pub device_qubits: usize,
    pub strategy: Strategy,
    pub seed: u64,
    pub max_steps: u64,
}

impl DeviceConfig {
    /// Configuration with the strategy's minimum device size.
    pub fn new(p_s: f64, strategy: Strategy) -> Result<Self, Phase1Error> {
        let k = target_level(p_s)?;
        Ok(DeviceConfig {
            p_s,
            device_qubits: strategy.minimum_device(k),
            strategy,
            seed: 0,
            max_steps: DEFAULT_MAX_STEPS,
        })
    }

    pub fn with_device(mut self, device_qubits: usize) -> Self {
        self.device_qubits = device_qubits;
        self
    }

    pub fn with_max_steps(mut self, max_steps: u64) -> Self {
        self.max_steps = max_steps;
        self
    }

    pub fn target_level(&self) -> Result<u32, Phase1Error> {
        target_level(self.p_s)
    }

    pub fn validate(&self) -> Result<u32, Phase1Error> {
        let k = self.target_level()?;
        let need = self.strategy.minimum_device(k);
        if self.device_qubits < need {
            return Err(Phase1Error::DeviceTooSmall {
                strategy: self.strategy,
                need,
                have: self.device_qubits,
            });
        }
        Ok(k)
    }
}

/// A snowflake living inside the pool's shared graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snowflake {
    root: QubitId,
    level: u32,
    vertices: Vec<QubitId>,
    /// Step at which the snowflake reached its level.
    formed: u64,
    seq: u64,
}

impl Snowflake {
    pub fn root(&self) -> QubitId {
        self.root
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn vertices(&self) -> &[QubitId] {
        &self.vertices
    }

    pub fn formed(&self) -> u64 {
        self.formed
    }
}

/// Builds a perfect level-`level` snowflake in `g`, all edges born at
/// `step`, by repeated root joins.
pub fn build_snowflake(g: &mut GraphState, level: u32, step: u64) -> Snowflake {
    fn grow(g: &mut GraphState, level: u32, step: u64) -> (QubitId, Vec<QubitId>) {
        if level == 0 {
            let v = g.add_free_vertex(step);
            return (v, vec![v]);
        }
        let (ra, mut va) = grow(g, level - 1, step);
        let (rb, vb) = grow(g, level - 1, step);
        g.add_edge(ra, rb, step).expect("fresh roots");
        g.mark_root(ra, true).expect("root exists");
        g.mark_root(rb, false).expect("root exists");
        va.extend(vb);
        (ra, va)
    }
    let (root, vertices) = grow(g, level, step);
    Snowflake {
        root,
        level,
        vertices,
        formed: step,
        seq: 0,
    }
}

/// `now` minus the birth step of the oldest edge inside the snowflake; 0
/// for a snowflake without edges.
pub fn age_of_oldest_entanglement(g: &GraphState, flake: &Snowflake, now: u64) -> u64 {
    let oldest = flake
        .vertices
        .iter()
        .flat_map(|&v| {
            g.neighbors(v)
                .into_iter()
                .flatten()
                .filter_map(move |&u| g.edge_meta(v, u))
        })
        .map(|m| m.birth_step)
        .min();
    oldest.map_or(0, |b| now.saturating_sub(b))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StepReport {
    pub step: u64,
    /// Fusion attempts per level (index = level of the operands).
    pub attempted: Vec<usize>,
    pub succeeded: Vec<usize>,
    /// Root pairs that were fused this step.
    pub pairs: Vec<(QubitId, QubitId)>,
    /// Snowflakes that reached the target level this step.
    pub completed: usize,
}

#[derive(Debug, Clone)]
pub struct SnowflakePool {
    graph: GraphState,
    by_level: Vec<Vec<Snowflake>>,
    pending_free: usize,
    step: u64,
    target_level: u32,
    device_qubits: usize,
    next_seq: u64,
    eo_attempts: u64,
}

impl SnowflakePool {
    /// Device with every qubit free at step 0.
    pub fn new(cfg: &DeviceConfig) -> Result<Self, Phase1Error> {
        let target_level = cfg.validate()?;
        let mut pool = SnowflakePool {
            graph: GraphState::new(),
            by_level: vec![Vec::new(); target_level as usize + 1],
            pending_free: cfg.device_qubits,
            step: 0,
            target_level,
            device_qubits: cfg.device_qubits,
            next_seq: 0,
            eo_attempts: 0,
        };
        pool.materialize_free();
        Ok(pool)
    }

    pub fn graph(&self) -> &GraphState {
        &self.graph
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn device_qubits(&self) -> usize {
        self.device_qubits
    }

    pub fn target_level(&self) -> u32 {
        self.target_level
    }

    pub fn level(&self, level: u32) -> &[Snowflake] {
        self.by_level.get(level as usize).map_or(&[], Vec::as_slice)
    }

    pub fn free_count(&self) -> usize {
        self.by_level[0].len()
    }

    /// Target-level snowflakes currently in the pool, oldest first.
    pub fn completed(&self) -> &[Snowflake] {
        &self.by_level[self.target_level as usize]
    }

    pub fn eo_attempts(&self) -> u64 {
        self.eo_attempts
    }

    /// `(free, in snowflakes of level >= 1, waiting for reset)`; always sums
    /// to the device size.
    pub fn accounting(&self) -> (usize, usize, usize) {
        let in_flakes = self.by_level[1..]
            .iter()
            .enumerate()
            .map(|(i, l)| l.len() << (i + 1))
            .sum();
        (self.free_count(), in_flakes, self.pending_free)
    }

    pub fn age_of(&self, flake: &Snowflake) -> u64 {
        age_of_oldest_entanglement(&self.graph, flake, self.step)
    }

    fn materialize_free(&mut self) {
        for _ in 0..std::mem::take(&mut self.pending_free) {
            let v = self.graph.add_free_vertex(self.step);
            let flake = Snowflake {
                root: v,
                level: 0,
                vertices: vec![v],
                formed: self.step,
                seq: self.next_seq,
            };
            self.next_seq += 1;
            self.by_level[0].push(flake);
        }
    }

    /// One time step: pair equal-level snowflakes oldest first and fuse every
    /// pair at its roots simultaneously. Qubits reset by failures come back
    /// as free qubits at the start of the next step.
    pub fn pool_step<R: Rng + ?Sized>(
        &mut self,
        cfg: &DeviceConfig,
        rng: &mut R,
    ) -> Result<StepReport, Phase1Error> {
        if self.step >= cfg.max_steps {
            return Err(Phase1Error::Timeout {
                partial: Box::new(self.partial_report(cfg)),
            });
        }
        self.materialize_free();
        let now = self.step;
        let target = self.target_level as usize;
        let mut report = StepReport {
            step: now,
            attempted: vec![0; target],
            succeeded: vec![0; target],
            ..StepReport::default()
        };
        let mut born = Vec::new();
        for level in 0..target {
            let mut queue = std::mem::take(&mut self.by_level[level]).into_iter();
            while let Some(a) = queue.next() {
                let Some(b) = queue.next() else {
                    self.by_level[level].push(a);
                    break;
                };
                report.attempted[level] += 1;
                report.pairs.push((a.root, b.root));
                self.eo_attempts += 1;
                if rng.gen_bool(cfg.p_s) {
                    report.succeeded[level] += 1;
                    born.push(self.join(a, b, now)?);
                } else {
                    self.fail(a, b, cfg.strategy, now, &mut born)?;
                }
            }
        }
        for flake in born {
            if flake.level as usize == target {
                report.completed += 1;
            }
            self.by_level[flake.level as usize].push(flake);
        }
        for list in &mut self.by_level {
            list.sort_by_key(|f| (f.formed, f.seq));
        }
        self.step += 1;
        Ok(report)
    }

    fn join(&mut self, a: Snowflake, b: Snowflake, now: u64) -> Result<Snowflake, Phase1Error> {
        self.graph.apply_fusion(a.root, b.root, true, now)?;
        self.graph.mark_root(a.root, true)?;
        self.graph.mark_root(b.root, false)?;
        let mut vertices = a.vertices;
        vertices.extend(b.vertices);
        let flake = Snowflake {
            root: a.root,
            level: a.level + 1,
            vertices,
            formed: now,
            seq: self.next_seq,
        };
        self.next_seq += 1;
        Ok(flake)
    }

    fn fail(
        &mut self,
        a: Snowflake,
        b: Snowflake,
        strategy: Strategy,
        now: u64,
        born: &mut Vec<Snowflake>,
    ) -> Result<(), Phase1Error> {
        let children: Vec<QubitId> = match strategy {
            Strategy::Recycle => {
                let mut c: Vec<QubitId> = self.graph.neighbors(a.root)?.iter().copied().collect();
                c.extend(self.graph.neighbors(b.root)?.iter().copied());
                c
            }
            _ => Vec::new(),
        };
        self.graph.apply_fusion(a.root, b.root, false, now)?;
        match strategy {
            Strategy::NoBuffer | Strategy::Buffer => {
                for v in a.vertices.iter().chain(&b.vertices) {
                    if *v != a.root && *v != b.root {
                        self.graph.remove_vertex(*v)?;
                    }
                }
                self.pending_free += a.vertices.len() + b.vertices.len();
            }
            Strategy::Recycle => {
                self.pending_free += 2;
                for c in children {
                    // the failed root acted on c like a Z measurement
                    self.graph.bump_error(c)?;
                    self.graph.mark_root(c, true)?;
                    let vertices: Vec<QubitId> = self.graph.distances_from(c)?.into_keys().collect();
                    let level = vertices.len().trailing_zeros();
                    debug_assert!(vertices.len().is_power_of_two());
                    let formed = self.formed_at(&vertices);
                    born.push(Snowflake {
                        root: c,
                        level,
                        vertices,
                        formed,
                        seq: self.next_seq,
                    });
                    self.next_seq += 1;
                }
            }
        }
        debug_assert!(now == self.step);
        Ok(())
    }

    /// Last time the fragment changed: its newest edge, or the birth of a
    /// lone vertex.
    fn formed_at(&self, vertices: &[QubitId]) -> u64 {
        let newest_edge = vertices
            .iter()
            .flat_map(|&v| {
                let g = &self.graph;
                g.neighbors(v)
                    .into_iter()
                    .flatten()
                    .filter_map(move |&u| g.edge_meta(v, u))
            })
            .map(|m| m.birth_step)
            .max();
        newest_edge.unwrap_or_else(|| {
            self.graph
                .vertex_meta(vertices[0])
                .map_or(self.step, |m| m.birth_step)
        })
    }

    /// Removes every completed snowflake from the device; their qubits
    /// return as free qubits next step. Returns how many were removed.
    pub fn harvest(&mut self) -> Result<usize, Phase1Error> {
        let done = std::mem::take(&mut self.by_level[self.target_level as usize]);
        for flake in &done {
            for &v in &flake.vertices {
                self.graph.remove_vertex(v)?;
            }
            self.pending_free += flake.vertices.len();
        }
        Ok(done.len())
    }

    fn largest_size(&self) -> u64 {
        (0..self.by_level.len())
            .rev()
            .find(|&l| !self.by_level[l].is_empty())
            .map_or(0, |l| 1u64 << l)
    }

    fn partial_report(&self, cfg: &DeviceConfig) -> TrialReport {
        let mut r = TrialReport::new(Phase::Phase1, cfg.p_s, cfg.strategy.label());
        r.steps = self.step;
        r.final_size = self.largest_size();
        r.max_error_weight = self.graph.max_error_weight() as u64;
        r.eo_attempts = self.eo_attempts;
        r
    }

    /// Report for the first completed snowflake.
    pub fn completion_report(&self, cfg: &DeviceConfig) -> Option<TrialReport> {
        let flake = self.completed().first()?;
        let mut r = self.partial_report(cfg);
        r.final_size = flake.vertices.len() as u64;
        r.age_oldest = self.age_of(flake);
        r.max_error_weight = flake
            .vertices
            .iter()
            .map(|&v| self.graph.error_weight(v).unwrap_or(0) as u64)
            .max()
            .unwrap_or(0);
        r.diameter = flake
            .vertices
            .iter()
            .map(|&v| {
                self.graph
                    .distances_from(v)
                    .map_or(0, |d| d.into_values().max().unwrap_or(0) as u64)
            })
            .max()
            .unwrap_or(0);
        r.success = true;
        Some(r)
    }
}

/// Steps until the first target-level snowflake completes.
pub fn run_until_target<R: Rng + ?Sized>(
    cfg: &DeviceConfig,
    rng: &mut R,
) -> Result<TrialReport, Phase1Error> {
    let mut pool = SnowflakePool::new(cfg)?;
    while pool.completed().is_empty() {
        pool.pool_step(cfg, rng)?;
    }
    Ok(pool.completion_report(cfg).expect("a snowflake completed"))
}

/// Burn-in fraction discarded by [`estimate_production_rate`].
pub const RATE_BURN_IN_FRACTION: u64 = 4;

/// Mean number of target-level snowflakes completed per step in steady
/// state. Completed snowflakes are harvested every step; the first
/// `steps / 4` steps are discarded as burn-in. A target of level 0 is a
/// bare qubit and is reported as rate 1.
pub fn estimate_production_rate<R: Rng + ?Sized>(
    cfg: &DeviceConfig,
    steps: u64,
    rng: &mut R,
) -> Result<f64, Phase1Error> {
    let k = cfg.validate()?;
    if k == 0 {
        return Ok(1.0);
    }
    if steps < RATE_BURN_IN_FRACTION {
        return Err(Phase1Error::TooFewSteps(steps));
    }
    let burn_in = steps / RATE_BURN_IN_FRACTION;
    let mut pool = SnowflakePool::new(cfg)?;
    let mut produced = 0usize;
    for i in 0..steps {
        pool.pool_step(cfg, rng)?;
        let n = pool.harvest()?;
        if i >= burn_in {
            produced += n;
        }
    }
    Ok(produced as f64 / (steps - burn_in) as f64)
}
