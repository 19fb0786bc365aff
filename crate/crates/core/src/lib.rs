//! Simulation of probabilistic graph-state growth: snowflakes grown from
//! single qubits by heralded fusions (phase I), snowballs fused from
//! snowflakes (phase II), and a percolated lattice of snowballs (phase III),
//! together with a stabilizer-tableau oracle for the graph rewrite rules.

pub mod graph;
pub mod metrics;
pub mod phase1;
pub mod phase2;
pub mod phase3;
pub mod stabilizer;
pub mod trials;
pub mod union_find;

pub use graph::{Edge, EdgeMeta, FusionOutcome, GraphError, GraphState, QubitId, Role, VertexMeta};
pub use metrics::{aggregate, scaling_fit, MetricsError, Phase, ScalingFit, SummaryRow, TrialReport};
pub use phase1::{DeviceConfig, Phase1Error, Snowflake, SnowflakePool, StepReport, Strategy};
pub use phase2::{AllocationSchedule, AttemptModel, Phase2Error, Snowball, REFERENCE};
pub use phase3::{BondMap, Direction, LatticeSpec, PercolationReport, Phase3Error};
pub use stabilizer::{Basis, OracleError, StabilizerTableau};
pub use trials::{run_trials, trial_rng, TrialRng};
pub use union_find::UnionFind;
