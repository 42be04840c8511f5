//! Shortest-path DAGs, second link weights and exponential splitting.
//!
//! Given first weights, each destination's equal-cost DAG fixes where traffic may go.
//! Second weights `v` then decide how much goes where: a node sends to next hop `j` in
//! proportion to `e^{-v_sj} Z(j)`, where `Z(j)` sums `e^{-v(path)}` over the DAG paths
//! from `j`. The second weights are the multipliers of an entropy-maximization problem
//! whose link loads are capped by the target distribution.

mod dag;
mod distribution;
mod second_weights;
mod split;
mod tables;

pub use dag::{build_ecmp_dag, DagTolerance, DestDag, EcmpDag};
pub use distribution::{distribute, traffic_distribution, SplitRule};
pub use second_weights::{
    nem_dual_objective, solve_second_weights, NemConfig, NemTraceRow, SecondWeights,
};
pub use split::{exponential_split, log_sum_exp, SubtreeMasses, LOG_SPACE_THRESHOLD};
pub use tables::{build_forwarding_tables, ForwardingTable, NextHop, TableRow};
