//! Phase II: snowballs built from 16 snowflakes by fusing perimeter
//! (degree <= 1) vertices of paired objects, with several attempt pairs
//! committed to each fusion.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::{GraphError, GraphState, QubitId};
use crate::metrics::{Phase, TrialReport};
use crate::phase1::{build_snowflake, target_level};

/// Number of snowflakes combined into one snowball.
pub const FLAKES_PER_SNOWBALL: usize = 16;
/// Fusion rounds in the balanced 16 -> 1 tree.
pub const BUILD_LEVELS: usize = 4;

/// Published snowball and lattice figures, for side-by-side reporting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceTargets {
    pub snowball_size_per_p: f64,
    pub build_probability: f64,
    pub level_sizes_per_p: [f64; BUILD_LEVELS],
    pub bond_probability: f64,
    pub percolation_threshold: f64,
    pub path_bound_coefficient: f64,
}

pub const REFERENCE: ReferenceTargets = ReferenceTargets {
    snowball_size_per_p: 4.07,
    build_probability: 0.0231,
    level_sizes_per_p: [1.55, 2.27, 3.15, 4.07],
    bond_probability: 0.639,
    percolation_threshold: 0.5,
    path_bound_coefficient: 10.0,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AttemptModel {
    /// All allocated pairs fire at once.
    ParallelBurst,
    /// One pair at a time until the first success or the budget runs out.
    SequentialBudget,
}

impl AttemptModel {
    pub fn label(&self) -> &'static str {
        match self {
            AttemptModel::ParallelBurst => "burst",
            AttemptModel::SequentialBudget => "sequential",
        }
    }
}

impl fmt::Display for AttemptModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for AttemptModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "burst" | "parallel-burst" | "parallel" => Ok(AttemptModel::ParallelBurst),
            "sequential" | "sequential-budget" => Ok(AttemptModel::SequentialBudget),
            other => Err(format!("unknown attempt model '{other}' (expected burst or sequential)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AllocationSchedule {
    /// Attempt pairs per fusion at each build level.
    pub budgets: [usize; BUILD_LEVELS],
    pub model: AttemptModel,
}

impl AllocationSchedule {
    pub fn new(budgets: [usize; BUILD_LEVELS], model: AttemptModel) -> Self {
        AllocationSchedule { budgets, model }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Phase2Error {
    #[error("insufficient perimeter: budget {needed} but only {available} perimeter vertices")]
    InsufficientPerimeter { needed: usize, available: usize },
    #[error("budget must be at least 1")]
    ZeroBudget,
    #[error("success probability {0} is outside the supported range")]
    InvalidProbability(f64),
    #[error("expected {FLAKES_PER_SNOWBALL} snowflakes, got {0}")]
    WrongFlakeCount(usize),
    #[error("snowball is not connected")]
    NotConnected,
    #[error("no feasible schedule ({} frontier points evaluated)", frontier.len())]
    NoFeasibleSchedule { frontier: Vec<FrontierPoint> },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// A tree-shaped graph state grown from snowflakes.
#[derive(Debug, Clone)]
pub struct Snowball {
    graph: GraphState,
    p_s: f64,
    build_level: u32,
}

impl Snowball {
    /// A perfect level-`level` snowflake with every edge born at step 0.
    pub fn from_flake(level: u32, p_s: f64) -> Self {
        let mut graph = GraphState::new();
        build_snowflake(&mut graph, level, 0);
        Snowball {
            graph,
            p_s,
            build_level: 0,
        }
    }

    pub fn from_graph(graph: GraphState, p_s: f64, build_level: u32) -> Self {
        Snowball {
            graph,
            p_s,
            build_level,
        }
    }

    pub fn graph(&self) -> &GraphState {
        &self.graph
    }

    pub fn into_graph(self) -> GraphState {
        self.graph
    }

    pub fn size(&self) -> usize {
        self.graph.len()
    }

    pub fn size_per_p(&self) -> f64 {
        self.graph.len() as f64 * self.p_s
    }

    pub fn build_level(&self) -> u32 {
        self.build_level
    }

    /// Vertices of degree at most one, lowest ids first.
    pub fn perimeter(&self) -> Vec<QubitId> {
        self.graph
            .vertices()
            .filter(|&v| self.graph.degree(v).is_ok_and(|d| d <= 1))
            .collect()
    }
}

/// Longest shortest path in the snowball, in edges.
pub fn max_pairwise_path(s: &Snowball) -> Result<usize, Phase2Error> {
    s.graph.diameter().ok_or(Phase2Error::NotConnected)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FusionReport {
    pub success: bool,
    /// Pairs that actually fired.
    pub attempts: usize,
    pub failed_pairs: usize,
    /// Surplus successful edges removed by Z measurement.
    pub z_measurements: usize,
    /// Vertices lost by the two operands.
    pub removed: usize,
}

#[derive(Debug, Clone)]
pub enum FusionResult {
    Merged(Snowball),
    /// Both operands after losing their failed perimeter vertices.
    Split(Snowball, Snowball),
}

/// `budget` independent Bernoulli(`p_s`) outcomes, one per attempt pair.
pub fn draw_outcomes<R: Rng + ?Sized>(budget: usize, p_s: f64, rng: &mut R) -> Vec<bool> {
    (0..budget).map(|_| rng.gen_bool(p_s)).collect()
}

/// Outcomes conditioned on at least one success, by rejection.
pub fn draw_successful_outcomes<R: Rng + ?Sized>(
    budget: usize,
    p_s: f64,
    rng: &mut R,
) -> Result<Vec<bool>, Phase2Error> {
    if !(p_s > 0.0 && p_s <= 1.0) {
        return Err(Phase2Error::InvalidProbability(p_s));
    }
    if budget == 0 {
        return Err(Phase2Error::ZeroBudget);
    }
    loop {
        let o = draw_outcomes(budget, p_s, rng);
        if o.contains(&true) {
            return Ok(o);
        }
    }
}

/// Fuses `a` and `b` with predetermined pair outcomes; `outcomes.len()` is
/// the budget. Pair `i` joins the `i`-th lowest perimeter vertex of each
/// operand. Under the sequential model outcomes after the first success
/// are never used.
pub fn fuse_with_outcomes(
    a: &Snowball,
    b: &Snowball,
    outcomes: &[bool],
    model: AttemptModel,
    step: u64,
) -> Result<(FusionResult, FusionReport), Phase2Error> {
    let budget = outcomes.len();
    if budget == 0 {
        return Err(Phase2Error::ZeroBudget);
    }
    let pa = a.perimeter();
    let pb_orig = b.perimeter();
    let available = pa.len().min(pb_orig.len());
    if available < budget {
        return Err(Phase2Error::InsufficientPerimeter {
            needed: budget,
            available,
        });
    }
    let mut g = a.graph.clone();
    let map = g.absorb(&b.graph);
    let pb: Vec<QubitId> = pb_orig.iter().map(|v| map[v]).collect();
    let mut report = FusionReport::default();
    let mut kept = false;
    for (i, &ok) in outcomes.iter().enumerate() {
        if kept && model == AttemptModel::SequentialBudget {
            break;
        }
        let (x, y) = (pa[i], pb[i]);
        report.attempts += 1;
        if ok {
            g.apply_fusion(x, y, true, step)?;
            if kept {
                g.measure_z(y)?;
                report.z_measurements += 1;
                report.removed += 1;
            }
            kept = true;
        } else {
            let mut touched: BTreeSet<QubitId> = g.neighbors(x)?.clone();
            touched.extend(g.neighbors(y)?.iter().copied());
            g.apply_fusion(x, y, false, step)?;
            // the reset qubits leave a measurement byproduct on their neighbours
            for v in touched {
                if v != x && v != y {
                    g.bump_error(v)?;
                }
            }
            report.failed_pairs += 1;
            report.removed += 2;
        }
    }
    report.success = kept;
    let level = a.build_level.max(b.build_level) + 1;
    if kept {
        debug_assert!(g.is_connected() && g.is_forest());
        return Ok((
            FusionResult::Merged(Snowball::from_graph(g, a.p_s, level)),
            report,
        ));
    }
    let a_ids: BTreeSet<QubitId> = a.graph.vertices().collect();
    let left = g.induced_subgraph(|v| a_ids.contains(&v));
    let right = g.induced_subgraph(|v| !a_ids.contains(&v));
    Ok((
        FusionResult::Split(
            Snowball::from_graph(left, a.p_s, a.build_level),
            Snowball::from_graph(right, b.p_s, b.build_level),
        ),
        report,
    ))
}

/// One fusion attempt between two snowballs with `budget` pairs.
pub fn fuse_snowballs<R: Rng + ?Sized>(
    a: &Snowball,
    b: &Snowball,
    budget: usize,
    model: AttemptModel,
    p_s: f64,
    rng: &mut R,
) -> Result<(FusionResult, FusionReport), Phase2Error> {
    if !(0.0..=1.0).contains(&p_s) {
        return Err(Phase2Error::InvalidProbability(p_s));
    }
    let outcomes = draw_outcomes(budget, p_s, rng);
    fuse_with_outcomes(a, b, &outcomes, model, 0)
}

#[derive(Debug, Clone)]
pub struct SnowballBuild {
    /// The finished snowball when all 15 fusions succeeded.
    pub snowball: Option<Snowball>,
    /// Objects alive when the build stopped (the snowball alone on success).
    pub fragments: Vec<Snowball>,
    /// Mean object size per `1/p_s` after each completed level.
    pub level_sizes_per_p: Vec<f64>,
    pub fusions: Vec<FusionReport>,
}

/// Sixteen perfect snowflakes at the target level for `p_s`.
pub fn fresh_flakes(p_s: f64) -> Result<Vec<Snowball>, Phase2Error> {
    let k = target_level(p_s).map_err(|_| Phase2Error::InvalidProbability(p_s))?;
    Ok((0..FLAKES_PER_SNOWBALL)
        .map(|_| Snowball::from_flake(k, p_s))
        .collect())
}

fn build_with<R, D>(
    flakes: Vec<Snowball>,
    schedule: &AllocationSchedule,
    p_s: f64,
    rng: &mut R,
    mut draw: D,
) -> Result<(SnowballBuild, TrialReport), Phase2Error>
where
    R: Rng + ?Sized,
    D: FnMut(usize, f64, &mut R) -> Result<Vec<bool>, Phase2Error>,
{
    if flakes.len() != FLAKES_PER_SNOWBALL {
        return Err(Phase2Error::WrongFlakeCount(flakes.len()));
    }
    if !(p_s > 0.0 && p_s <= 1.0) {
        return Err(Phase2Error::InvalidProbability(p_s));
    }
    let mut objects = flakes;
    let mut fusions = Vec::new();
    let mut level_sizes = Vec::new();
    let mut failed = false;
    for (level, &budget) in schedule.budgets.iter().enumerate() {
        let mut next = Vec::with_capacity(objects.len() / 2);
        let mut queue = std::mem::take(&mut objects).into_iter();
        while let (Some(a), Some(b)) = (queue.next(), queue.next()) {
            if failed {
                next.push(a);
                next.push(b);
                continue;
            }
            let outcomes = draw(budget, p_s, rng)?;
            let (result, report) =
                fuse_with_outcomes(&a, &b, &outcomes, schedule.model, level as u64 + 1)?;
            fusions.push(report);
            match result {
                FusionResult::Merged(s) => next.push(s),
                FusionResult::Split(x, y) => {
                    failed = true;
                    next.push(x);
                    next.push(y);
                }
            }
        }
        objects = next;
        if failed {
            break;
        }
        let total: usize = objects.iter().map(Snowball::size).sum();
        level_sizes.push(total as f64 * p_s / objects.len() as f64);
    }

    let mut report = TrialReport::new(Phase::Snowball, p_s, schedule.model.label());
    report.steps = level_sizes.len() as u64;
    report.success = !failed;
    report.eo_attempts = fusions.iter().map(|f| f.attempts as u64).sum();
    report.z_measurements = fusions.iter().map(|f| f.z_measurements as u64).sum();
    report.max_error_weight = objects
        .iter()
        .map(|o| o.graph.max_error_weight() as u64)
        .max()
        .unwrap_or(0);
    if let Some(largest) = objects.iter().max_by_key(|o| o.size()) {
        report.final_size = largest.size() as u64;
        report.diameter = largest.graph.diameter().unwrap_or(0) as u64;
        let oldest = largest.graph.edges().map(|(_, m)| m.birth_step).min();
        report.age_oldest = oldest.map_or(0, |b| report.steps.saturating_sub(b));
    }
    let snowball = if failed { None } else { objects.first().cloned() };
    Ok((
        SnowballBuild {
            snowball,
            fragments: objects,
            level_sizes_per_p: level_sizes,
            fusions,
        },
        report,
    ))
}

/// Builds one snowball through the balanced 16 -> 8 -> 4 -> 2 -> 1 fusion
/// tree. The build stops at the first failed fusion.
pub fn build_snowball<R: Rng + ?Sized>(
    flakes: Vec<Snowball>,
    schedule: &AllocationSchedule,
    p_s: f64,
    rng: &mut R,
) -> Result<(SnowballBuild, TrialReport), Phase2Error> {
    build_with(flakes, schedule, p_s, rng, |b, p, r| Ok(draw_outcomes(b, p, r)))
}

/// Samples a build conditioned on success: every fusion's outcomes are
/// drawn conditioned on at least one successful pair. Since fusions are
/// independent, this is exactly the distribution of successful builds.
pub fn build_successful_snowball<R: Rng + ?Sized>(
    flakes: Vec<Snowball>,
    schedule: &AllocationSchedule,
    p_s: f64,
    rng: &mut R,
) -> Result<(SnowballBuild, TrialReport), Phase2Error> {
    build_with(flakes, schedule, p_s, rng, draw_successful_outcomes)
}

/// Probability that at least one of `budget` pairs succeeds.
pub fn fusion_success_probability(budget: usize, p_s: f64) -> f64 {
    1.0 - (1.0 - p_s).powi(budget as i32)
}

/// Expected vertices lost by a fusion, given that it succeeds.
pub fn expected_removed_given_success(budget: usize, p_s: f64, model: AttemptModel) -> f64 {
    let b = budget as f64;
    let q = fusion_success_probability(budget, p_s);
    if q <= 0.0 {
        return 0.0;
    }
    match model {
        // S ~ Bin(b, p) given S >= 1 loses 2(b - S) + (S - 1) vertices
        AttemptModel::ParallelBurst => 2.0 * b - b * p_s / q - 1.0,
        // failures before the first success, truncated to the budget
        AttemptModel::SequentialBudget => {
            let f = 1.0 - p_s;
            let mean_failures: f64 = (0..budget)
                .map(|j| j as f64 * f.powi(j as i32) * p_s)
                .sum::<f64>()
                / q;
            2.0 * mean_failures
        }
    }
}

/// Guaranteed perimeter of each object entering each level. A level-`k`
/// snowflake has `2^(k-1)` leaves; a merged object keeps at least all
/// unused perimeter of both operands, and any tree with two or more
/// vertices has two leaves.
pub fn perimeter_bounds(budgets: &[usize; BUILD_LEVELS], flake_level: u32) -> [usize; BUILD_LEVELS] {
    let mut bounds = [0; BUILD_LEVELS];
    let mut l = if flake_level == 0 { 1 } else { 1usize << (flake_level - 1) };
    for (j, &b) in budgets.iter().enumerate() {
        bounds[j] = l;
        l = (2 * l).saturating_sub(2 * b).max(2);
    }
    bounds
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleEstimate {
    pub success_probability: f64,
    /// Expected object size per `1/p_s` after each level, given success.
    pub level_sizes_per_p: [f64; BUILD_LEVELS],
}

impl ScheduleEstimate {
    pub fn final_size_per_p(&self) -> f64 {
        self.level_sizes_per_p[BUILD_LEVELS - 1]
    }
}

/// Closed-form success probability and expected sizes of a schedule.
pub fn estimate_schedule(schedule: &AllocationSchedule, p_s: f64) -> Result<ScheduleEstimate, Phase2Error> {
    let k = target_level(p_s).map_err(|_| Phase2Error::InvalidProbability(p_s))?;
    let bounds = perimeter_bounds(&schedule.budgets, k);
    let mut size = (1u64 << k) as f64;
    let mut prob = 1.0;
    let mut sizes = [0.0; BUILD_LEVELS];
    for (j, &b) in schedule.budgets.iter().enumerate() {
        if b == 0 {
            return Err(Phase2Error::ZeroBudget);
        }
        if b > bounds[j] {
            return Err(Phase2Error::InsufficientPerimeter {
                needed: b,
                available: bounds[j],
            });
        }
        let fusions = (FLAKES_PER_SNOWBALL >> (j + 1)) as i32;
        prob *= fusion_success_probability(b, p_s).powi(fusions);
        size = 2.0 * size - expected_removed_given_success(b, p_s, schedule.model);
        sizes[j] = size * p_s;
    }
    Ok(ScheduleEstimate {
        success_probability: prob,
        level_sizes_per_p: sizes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontierPoint {
    pub schedule: AllocationSchedule,
    pub final_size_per_p: f64,
    pub success_probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizedSchedule {
    pub schedule: AllocationSchedule,
    pub estimate: ScheduleEstimate,
    /// Non-dominated (size, probability) pairs among every schedule the
    /// search evaluated, by increasing size and non-increasing probability.
    pub frontier: Vec<FrontierPoint>,
}

/// Random starts used by [`optimize_schedule`] besides the all-ones and
/// all-maximal schedules.
pub const OPTIMIZER_RANDOM_STARTS: usize = 16;

/// Maximizes the closed-form build success probability subject to an
/// expected final size of at least `target_size_per_p / p_s`.
///
/// Coordinate descent over the four integer budgets: each sweep line-searches
/// every single level, then every pair of levels jointly, over all values
/// their perimeter bounds allow (other budgets held fixed, infeasible
/// combinations skipped), keeping strict improvements until a full sweep
/// changes nothing. Pair moves let the search follow the ridge of an active
/// size constraint. It is restarted from all-ones,
/// from greedily maximal budgets, and from [`OPTIMIZER_RANDOM_STARTS`]
/// random feasible schedules drawn from ChaCha8 seeded with `seed`.
pub fn optimize_schedule(
    p_s: f64,
    model: AttemptModel,
    target_size_per_p: f64,
    seed: u64,
) -> Result<OptimizedSchedule, Phase2Error> {
    if !(p_s > 0.0 && p_s <= 0.5) {
        return Err(Phase2Error::InvalidProbability(p_s));
    }
    let k = target_level(p_s).map_err(|_| Phase2Error::InvalidProbability(p_s))?;
    let mut evaluated: BTreeMap<[usize; BUILD_LEVELS], ScheduleEstimate> = BTreeMap::new();
    let mut evaluate = |budgets: [usize; BUILD_LEVELS]| -> Option<ScheduleEstimate> {
        if let Some(e) = evaluated.get(&budgets) {
            return Some(*e);
        }
        let e = estimate_schedule(&AllocationSchedule::new(budgets, model), p_s).ok()?;
        evaluated.insert(budgets, e);
        Some(e)
    };
    let score = |e: &ScheduleEstimate| {
        (e.final_size_per_p() >= target_size_per_p - 1e-12).then_some(e.success_probability)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts = vec![[1; BUILD_LEVELS]];
    let mut greedy = [1; BUILD_LEVELS];
    for j in 0..BUILD_LEVELS {
        greedy[j] = perimeter_bounds(&greedy, k)[j];
    }
    starts.push(greedy);
    for _ in 0..OPTIMIZER_RANDOM_STARTS {
        let mut s = [1; BUILD_LEVELS];
        for j in 0..BUILD_LEVELS {
            s[j] = rng.gen_range(1..=perimeter_bounds(&s, k)[j]);
        }
        starts.push(s);
    }

    let mut best: Option<([usize; BUILD_LEVELS], f64)> = None;
    for start in starts {
        let mut cur = start;
        let mut cur_score = evaluate(cur).as_ref().and_then(score);
        loop {
            let mut improved = false;
            let mut consider = |cand: [usize; BUILD_LEVELS], cur: &mut [usize; BUILD_LEVELS], cur_score: &mut Option<f64>| {
                if cand == *cur {
                    return;
                }
                let Some(s) = evaluate(cand).as_ref().and_then(score) else { return };
                if cur_score.map_or(true, |c| s > c) {
                    *cur = cand;
                    *cur_score = Some(s);
                    improved = true;
                }
            };
            for j in 0..BUILD_LEVELS {
                let cap = perimeter_bounds(&cur, k)[j];
                for v in 1..=cap {
                    let mut cand = cur;
                    cand[j] = v;
                    consider(cand, &mut cur, &mut cur_score);
                }
            }
            for i in 0..BUILD_LEVELS {
                for j in i + 1..BUILD_LEVELS {
                    let base = cur;
                    let cap_i = perimeter_bounds(&base, k)[i];
                    for vi in 1..=cap_i {
                        let mut cand = base;
                        cand[i] = vi;
                        let cap_j = perimeter_bounds(&cand, k)[j];
                        for vj in 1..=cap_j {
                            cand[j] = vj;
                            consider(cand, &mut cur, &mut cur_score);
                        }
                    }
                }
            }
            if !improved {
                break;
            }
        }
        if let Some(s) = cur_score {
            if best.map_or(true, |(_, b)| s > b) {
                best = Some((cur, s));
            }
        }
    }

    let frontier = pareto_frontier(&evaluated, model);
    match best {
        Some((budgets, _)) => Ok(OptimizedSchedule {
            schedule: AllocationSchedule::new(budgets, model),
            estimate: evaluated[&budgets],
            frontier,
        }),
        None => Err(Phase2Error::NoFeasibleSchedule { frontier }),
    }
}

fn pareto_frontier(
    evaluated: &BTreeMap<[usize; BUILD_LEVELS], ScheduleEstimate>,
    model: AttemptModel,
) -> Vec<FrontierPoint> {
    let mut points: Vec<FrontierPoint> = evaluated
        .iter()
        .map(|(b, e)| FrontierPoint {
            schedule: AllocationSchedule::new(*b, model),
            final_size_per_p: e.final_size_per_p(),
            success_probability: e.success_probability,
        })
        .collect();
    points.sort_by(|x, y| {
        y.final_size_per_p
            .total_cmp(&x.final_size_per_p)
            .then(y.success_probability.total_cmp(&x.success_probability))
            .then(x.schedule.cmp(&y.schedule))
    });
    let mut frontier = Vec::new();
    let mut best_prob = f64::NEG_INFINITY;
    for p in points {
        if p.success_probability > best_prob {
            best_prob = p.success_probability;
            frontier.push(p);
        }
    }
    frontier.reverse();
    frontier
}
