//! Fixtures shared by the benchmarks.

use rand::Rng;
use snowgrow_core::graph::GraphState;
use snowgrow_core::phase1::build_snowflake;
use snowgrow_core::trials::trial_rng;

/// Erdos-Renyi graph on `n` vertices with edge probability `density`.
pub fn random_graph(n: usize, density: f64, seed: u64) -> GraphState {
    let mut rng = trial_rng(seed, 0);
    let edges: Vec<(u64, u64)> = (0..n as u64)
        .flat_map(|i| ((i + 1)..n as u64).map(move |j| (i, j)))
        .filter(|_| rng.gen_bool(density))
        .collect();
    GraphState::from_edges(n, &edges).expect("valid edges")
}

/// A perfect snowflake tree of the given level.
pub fn snowflake_graph(level: u32) -> GraphState {
    let mut g = GraphState::new();
    build_snowflake(&mut g, level, 0);
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_have_expected_sizes() {
        assert_eq!(random_graph(12, 0.5, 1).len(), 12);
        let flake = snowflake_graph(5);
        assert_eq!(flake.len(), 32);
        assert!(flake.is_forest() && flake.is_connected());
    }
}
