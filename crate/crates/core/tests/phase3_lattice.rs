use std::collections::{BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use snowgrow_core::phase2::{build_successful_snowball, fresh_flakes, optimize_schedule, AttemptModel};
use snowgrow_core::phase3::{
    assemble_small_lattice, bond_probability, generate_bonds, generate_bonds_with_probability,
    percolation_report, site_clusters, BondMap, Direction, LatticeSpec,
};
use snowgrow_core::trials::{run_trials, trial_rng};

/// Site partition by breadth-first search, labeled by smallest member.
fn bfs_labels(b: &BondMap) -> Vec<usize> {
    let (w, h) = (b.width(), b.height());
    let mut label = vec![usize::MAX; w * h];
    for start in 0..w * h {
        if label[start] != usize::MAX {
            continue;
        }
        label[start] = start;
        let mut queue = VecDeque::from([start]);
        while let Some(s) = queue.pop_front() {
            let (x, y) = (s % w, s / w);
            for dir in Direction::ALL {
                if b.get(x, y, dir) != Some(true) {
                    continue;
                }
                let t = match dir {
                    Direction::Right => s + 1,
                    Direction::Left => s - 1,
                    Direction::Down => s + w,
                    Direction::Up => s - w,
                };
                if label[t] == usize::MAX {
                    label[t] = start;
                    queue.push_back(t);
                }
            }
        }
    }
    label
}

fn bfs_crosses_left_right(b: &BondMap) -> bool {
    let labels = bfs_labels(b);
    let w = b.width();
    let left: BTreeSet<usize> = (0..b.height()).map(|y| labels[y * w]).collect();
    (0..b.height()).any(|y| left.contains(&labels[y * w + w - 1]))
}

#[test]
fn union_find_matches_bfs_up_to_ten_by_ten() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for w in 2..=10 {
        for h in 2..=10 {
            for _ in 0..20 {
                let prob = rng.gen_range(0.0..1.0);
                let b = generate_bonds_with_probability(w, h, prob, &mut rng).unwrap();
                assert_eq!(site_clusters(&b).labels(), bfs_labels(&b));
                let largest = {
                    let labels = bfs_labels(&b);
                    (0..w * h).map(|l| labels.iter().filter(|&&x| x == l).count()).max().unwrap()
                };
                let report = percolation_report(&b);
                assert_eq!(report.largest_cluster_size, largest);
                assert_eq!(report.crosses_left_right, bfs_crosses_left_right(&b));
            }
        }
    }
}

#[test]
fn bond_frequency_matches_closed_form() {
    let spec = LatticeSpec { width: 101, height: 100, p_s: 0.01, snowball_size: 120 };
    let q = bond_probability(spec.snowball_size, spec.p_s);
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let (mut present, mut total) = (0usize, 0usize);
    while total < 1_000_000 {
        let b = generate_bonds(&spec, &mut rng).unwrap();
        present += b.present_count();
        total += b.bond_count();
    }
    let se = (q * (1.0 - q) / total as f64).sqrt();
    assert!((present as f64 / total as f64 - q).abs() <= 3.0 * se);
}

#[test]
fn crossing_is_monotone_under_common_random_numbers() {
    let probs = [0.3, 0.4, 0.5, 0.6, 0.7];
    let trials = 300;
    let rows: Vec<Vec<bool>> = run_trials(43, 0, trials, |i, _| {
        probs
            .iter()
            .map(|&p| {
                let b = generate_bonds_with_probability(30, 30, p, &mut trial_rng(43, i)).unwrap();
                percolation_report(&b).crosses()
            })
            .collect()
    });
    for row in &rows {
        for w in row.windows(2) {
            assert!(!w[0] || w[1], "coupled crossing lost at higher probability");
        }
    }
    let freq: Vec<usize> = (0..probs.len()).map(|j| rows.iter().filter(|r| r[j]).count()).collect();
    assert!(freq.windows(2).all(|w| w[0] <= w[1]), "{freq:?}");
    assert!(freq[0] < freq[4]);
}

#[test]
fn full_graph_raw_bonds_match_closed_form() {
    let p = 0.125;
    let opt = optimize_schedule(p, AttemptModel::ParallelBurst, 4.07, 0).unwrap();
    let ball = build_successful_snowball(fresh_flakes(p).unwrap(), &opt.schedule, p, &mut trial_rng(44, 0))
        .unwrap()
        .0
        .snowball
        .unwrap();
    let q = bond_probability(ball.size(), p);
    let balls = vec![ball; 9];
    let trials = 1000;
    let maps = run_trials(45, 0, trials, |_, rng| assemble_small_lattice(&balls, 3, 3, p, rng).unwrap());
    let bonds_per_grid = 12;
    let raw: usize = maps.iter().map(|m| m.raw_bonds.present_count()).sum();
    let n = bonds_per_grid * trials as usize;
    let se = (q * (1.0 - q) / n as f64).sqrt();
    assert!((raw as f64 / n as f64 - q).abs() <= 3.0 * se, "{raw} of {n} vs {q}");

    for m in &maps {
        assert_eq!(m.raw_bonds.bond_count(), bonds_per_grid);
        for ((x, y), dir, present) in m.bonds.bonds() {
            if !present {
                continue;
            }
            assert_eq!(m.raw_bonds.get(x, y, dir), Some(true));
            let there = if dir == Direction::Right { (x + 1, y) } else { (x, y + 1) };
            let survives = m.inter_edges.iter().any(|&(a, b)| {
                let sites = [m.site_of[&a], m.site_of[&b]];
                sites.contains(&(x, y)) && sites.contains(&there) && m.graph.has_edge(a, b)
            });
            assert!(survives);
        }
    }
}

#[test]
fn percolation_at_threshold_and_above() {
    let trials = 1000;
    let freq = |p: f64, seed: u64| {
        run_trials(seed, 0, trials, |_, rng| {
            let b = generate_bonds_with_probability(50, 50, p, rng).unwrap();
            percolation_report(&b).crosses()
        })
        .into_iter()
        .filter(|&c| c)
        .count() as f64
            / trials as f64
    };
    let above = freq(0.639, 46);
    let at = freq(0.5, 47);
    assert!(above >= 0.99, "{above}");
    assert!((0.35..=0.65).contains(&at), "{at}");
}
