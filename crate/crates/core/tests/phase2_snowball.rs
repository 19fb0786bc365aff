use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use snowgrow_core::phase2::{
    build_snowball, draw_successful_outcomes, estimate_schedule, expected_removed_given_success,
    fresh_flakes, fuse_snowballs, fuse_with_outcomes, fusion_success_probability, max_pairwise_path,
    optimize_schedule, perimeter_bounds, AllocationSchedule, AttemptModel, FusionResult, Snowball,
    BUILD_LEVELS,
};
use snowgrow_core::phase1::target_level;
use snowgrow_core::trials::run_trials;

const MODELS: [AttemptModel; 2] = [AttemptModel::ParallelBurst, AttemptModel::SequentialBudget];

fn within_3se(hits: usize, trials: usize, p: f64) -> bool {
    let se = (p * (1.0 - p) / trials as f64).sqrt();
    (hits as f64 / trials as f64 - p).abs() <= 3.0 * se
}

/// Probability-weighted sum over every outcome vector of length `budget`.
fn enumerate(budget: usize, p: f64, mut f: impl FnMut(&[bool], f64)) {
    for mask in 0u32..(1 << budget) {
        let outcomes: Vec<bool> = (0..budget).map(|i| mask >> i & 1 == 1).collect();
        let s = outcomes.iter().filter(|&&o| o).count() as i32;
        f(&outcomes, p.powi(s) * (1.0 - p).powi(budget as i32 - s));
    }
}

#[test]
fn fusion_probability_and_losses_by_enumeration() {
    let (a, b) = (Snowball::from_flake(4, 0.3), Snowball::from_flake(4, 0.3));
    for model in MODELS {
        for budget in 1..=3 {
            for p in [0.1, 0.3, 0.7] {
                let (mut success, mut removed) = (0.0, 0.0);
                enumerate(budget, p, |o, w| {
                    let (result, rep) = fuse_with_outcomes(&a, &b, o, model, 1).unwrap();
                    if let FusionResult::Merged(s) = result {
                        success += w;
                        removed += w * rep.removed as f64;
                        assert_eq!(s.size(), 32 - rep.removed);
                    }
                });
                assert!((success - fusion_success_probability(budget, p)).abs() < 1e-12);
                let cond = removed / success;
                let closed = expected_removed_given_success(budget, p, model);
                assert!((cond - closed).abs() < 1e-12, "{model} b={budget} p={p}: {cond} vs {closed}");
            }
        }
    }
}

#[test]
fn burst_success_frequency() {
    let (a, b) = (Snowball::from_flake(6, 0.05), Snowball::from_flake(6, 0.05));
    let trials = 100_000;
    let hits: usize = run_trials(31, 0, trials as u64, |_, rng| {
        let (r, _) = fuse_snowballs(&a, &b, 20, AttemptModel::ParallelBurst, 0.05, rng).unwrap();
        usize::from(matches!(r, FusionResult::Merged(_)))
    })
    .into_iter()
    .sum();
    let q = 1.0 - 0.95f64.powi(20);
    assert!((q - 0.6415).abs() < 1e-4);
    assert!(within_3se(hits, trials, q), "{hits}");
}

#[test]
fn small_p_limit() {
    let p = 1e-3;
    let trials = 100_000;
    for x in [0.5, 1.0175, 1.5] {
        let budget = (x / p as f64).ceil() as usize;
        let hits: usize = run_trials(32, 0, trials, |_, rng| {
            usize::from(snowgrow_core::phase2::draw_outcomes(budget, p, rng).contains(&true))
        })
        .into_iter()
        .sum();
        let limit = 1.0 - (-x as f64).exp();
        assert!((hits as f64 / trials as f64 - limit).abs() <= 0.005, "x = {x}");
        assert!((fusion_success_probability(budget, p) - limit).abs() <= 0.001);
    }
}

#[test]
fn per_fusion_probability_is_nearly_p_independent() {
    for x in [0.5, 1.0175, 1.5] {
        let q: Vec<f64> = [8.0, 16.0, 32.0]
            .iter()
            .map(|&inv| fusion_success_probability((x * inv as f64).ceil() as usize, 1.0 / inv))
            .collect();
        let (lo, hi) = q.iter().fold((1.0f64, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
        assert!((hi - lo) / hi < 0.2, "x = {x}: {q:?}");
    }
}

#[test]
fn conditioned_outcomes_follow_truncated_geometric() {
    let (budget, p) = (4, 0.125);
    let q = fusion_success_probability(budget, p);
    let trials = 200_000;
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut first = [0usize; 4];
    for _ in 0..trials {
        let o = draw_successful_outcomes(budget, p, &mut rng).unwrap();
        first[o.iter().position(|&b| b).unwrap()] += 1;
    }
    for (i, &n) in first.iter().enumerate() {
        let exact = p * (1.0 - p).powi(i as i32) / q;
        assert!(within_3se(n, trials, exact), "index {i}: {n}");
    }
}

#[test]
fn build_survival_matches_product_of_fusions() {
    // p = 1/8: each level-0 fusion uses all four leaves of a snowflake
    let p = 0.125;
    let sched = AllocationSchedule::new([4, 2, 2, 2], AttemptModel::ParallelBurst);
    let trials = 100_000;
    let levels: Vec<u64> = run_trials(34, 0, trials, |_, rng| {
        build_snowball(fresh_flakes(p).unwrap(), &sched, p, rng).unwrap().1.steps
    });
    let q0 = fusion_success_probability(4, p).powi(8);
    let past_first = levels.iter().filter(|&&l| l >= 1).count();
    assert!(within_3se(past_first, trials as usize, q0), "{past_first}");

    // p = 1/2: whole builds succeed often enough to count
    let p = 0.5;
    let sched = AllocationSchedule::new([1, 2, 2, 2], AttemptModel::SequentialBudget);
    let exact = estimate_schedule(&sched, p).unwrap().success_probability;
    let trials = 400_000;
    let wins: usize = run_trials(35, 0, trials, |_, rng| {
        usize::from(build_snowball(fresh_flakes(p).unwrap(), &sched, p, rng).unwrap().1.success)
    })
    .into_iter()
    .sum();
    assert!(within_3se(wins, trials as usize, exact), "{wins} vs {}", exact * trials as f64);
}

#[test]
fn conditioned_builds_reproduce_expected_sizes() {
    let p = 1.0 / 16.0;
    for model in MODELS {
        let sched = AllocationSchedule::new([4, 5, 6, 2], model);
        let est = estimate_schedule(&sched, p).unwrap();
        let trials = 2000;
        let reports = run_trials(36, 0, trials, |_, rng| {
            snowgrow_core::phase2::build_successful_snowball(fresh_flakes(p).unwrap(), &sched, p, rng)
                .unwrap()
        });
        for level in 0..BUILD_LEVELS {
            let mean = reports.iter().map(|(b, _)| b.level_sizes_per_p[level]).sum::<f64>() / trials as f64;
            assert!(
                (mean - est.level_sizes_per_p[level]).abs() < 0.05 * est.level_sizes_per_p[level],
                "{model} level {level}: {mean} vs {}",
                est.level_sizes_per_p[level]
            );
        }
        assert!(reports.iter().all(|(b, r)| r.success && b.snowball.is_some()));
    }
}

fn exhaustive_best(p: f64, model: AttemptModel, target: f64) -> Option<f64> {
    let k = target_level(p).unwrap();
    let mut best: Option<f64> = None;
    let mut budgets = [1usize; BUILD_LEVELS];
    fn rec(
        j: usize,
        budgets: &mut [usize; BUILD_LEVELS],
        k: u32,
        p: f64,
        model: AttemptModel,
        target: f64,
        best: &mut Option<f64>,
    ) {
        if j == BUILD_LEVELS {
            let e = estimate_schedule(&AllocationSchedule::new(*budgets, model), p).unwrap();
            if e.final_size_per_p() >= target - 1e-12 && best.map_or(true, |b| e.success_probability > b) {
                *best = Some(e.success_probability);
            }
            return;
        }
        let cap = perimeter_bounds(budgets, k)[j];
        for b in 1..=cap {
            budgets[j] = b;
            rec(j + 1, budgets, k, p, model, target, best);
        }
        budgets[j] = 1;
    }
    rec(0, &mut budgets, k, p, model, target, &mut best);
    best
}

#[test]
fn optimizer_matches_exhaustive_search() {
    for p in [0.25, 0.125, 1.0 / 16.0] {
        for model in MODELS {
            for target in [4.07, 9.0, 12.0] {
                let opt = optimize_schedule(p, model, target, 7);
                match exhaustive_best(p, model, target) {
                    Some(best) => {
                        let got = opt.unwrap().estimate.success_probability;
                        assert!((got - best).abs() <= 1e-12 * best, "p={p} {model} t={target}: {got} vs {best}");
                    }
                    None => assert!(opt.is_err()),
                }
            }
        }
    }
}

#[test]
fn optimizer_is_deterministic_and_frontier_monotone() {
    for model in MODELS {
        let a = optimize_schedule(1.0 / 32.0, model, 4.07, 99).unwrap();
        let b = optimize_schedule(1.0 / 32.0, model, 4.07, 99).unwrap();
        assert_eq!(a, b);
        assert!(a.frontier.len() >= 2);
        for w in a.frontier.windows(2) {
            assert!(w[0].final_size_per_p < w[1].final_size_per_p);
            assert!(w[0].success_probability > w[1].success_probability);
        }
        // the chosen schedule is not dominated by any frontier point meeting the target
        for f in a.frontier.iter().filter(|f| f.final_size_per_p >= 4.07) {
            assert!(f.success_probability <= a.estimate.success_probability);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn fusion_keeps_trees_and_bounds_diameter(
        la in 1u32..=5,
        lb in 1u32..=5,
        outcomes in proptest::collection::vec(any::<bool>(), 1..=4),
        sequential in any::<bool>(),
    ) {
        let (a, b) = (Snowball::from_flake(la, 0.5), Snowball::from_flake(lb, 0.5));
        let budget = outcomes.len();
        prop_assume!(a.perimeter().len() >= budget && b.perimeter().len() >= budget);
        let model = if sequential { AttemptModel::SequentialBudget } else { AttemptModel::ParallelBurst };
        let (r, rep) = fuse_with_outcomes(&a, &b, &outcomes, model, 1).unwrap();
        match r {
            FusionResult::Merged(s) => {
                prop_assert!(s.graph().is_connected() && s.graph().is_forest());
                let bound = max_pairwise_path(&a).unwrap() + max_pairwise_path(&b).unwrap() + 1;
                prop_assert!(max_pairwise_path(&s).unwrap() <= bound);
                prop_assert_eq!(s.size() + rep.removed, a.size() + b.size());
            }
            FusionResult::Split(x, y) => {
                prop_assert!(!outcomes.contains(&true));
                prop_assert_eq!(x.size() + y.size(), a.size() + b.size() - 2 * budget);
                prop_assert!(x.graph().is_connected() && y.graph().is_connected());
            }
        }
    }
}

#[test]
fn snowflake_diameter_bound() {
    for k in 1..=7 {
        let s = Snowball::from_flake(k, 0.5);
        assert!(max_pairwise_path(&s).unwrap() <= 2 * k as usize);
    }
}
