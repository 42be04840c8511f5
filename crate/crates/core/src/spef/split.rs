//! Exponential splitting: a next hop receives traffic in proportion to the summed
//! `e^{-v(path)}` of the DAG paths through it.

use crate::error::{Error, Result};
use crate::model::{LinkId, NodeId, Topology};

use super::dag::DestDag;

/// Weights above this switch the mass recursion to log space.
pub const LOG_SPACE_THRESHOLD: f64 = 30.0;

pub fn log_sum_exp(xs: impl IntoIterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Ratios from explicit per-next-hop path lengths:
/// `Γ_k = sum_j e^{-v_kj} / sum_i sum_j e^{-v_ij}`.
pub fn exponential_split(lengths: &[Vec<f64>]) -> Result<Vec<f64>> {
    if lengths.is_empty() || lengths.iter().any(Vec::is_empty) {
        return Err(Error::Structural("split needs at least one path per next hop".into()));
    }
    let logs: Vec<f64> = lengths
        .iter()
        .map(|ls| log_sum_exp(ls.iter().map(|v| -v)))
        .collect();
    Ok(normalize_logs(&logs))
}

/// `exp(l_k) / sum exp(l)`, with exactly `1/m` when all terms are equal.
fn normalize_logs(logs: &[f64]) -> Vec<f64> {
    let m = logs.len();
    if logs.iter().all(|&l| l == logs[0]) {
        return vec![1.0 / m as f64; m];
    }
    let total = log_sum_exp(logs.iter().copied());
    logs.iter().map(|l| (l - total).exp()).collect()
}

fn normalize_linear(terms: &[f64]) -> Vec<f64> {
    let m = terms.len();
    if terms.iter().all(|&x| x == terms[0]) {
        return vec![1.0 / m as f64; m];
    }
    let total: f64 = terms.iter().sum();
    terms.iter().map(|x| x / total).collect()
}

/// `Z(t) = 1`, `Z(s) = sum_{(s,j) in DAG} e^{-v_sj} Z(j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubtreeMasses {
    log_space: bool,
    /// `Z` or `log Z` per node; 0 (resp. `-inf`) off the DAG.
    values: Vec<f64>,
}

impl SubtreeMasses {
    pub fn compute(topo: &Topology, dag: &DestDag, v: &[f64]) -> Self {
        let log_space = dag
            .links()
            .any(|l| v[l.index()] > LOG_SPACE_THRESHOLD);
        let n = topo.num_nodes();
        let mut values = vec![if log_space { f64::NEG_INFINITY } else { 0.0 }; n];
        values[dag.dest.index()] = if log_space { 0.0 } else { 1.0 };
        for &node in dag.order.iter().rev() {
            let succ = &dag.succ[node.index()];
            if node == dag.dest || succ.is_empty() {
                continue;
            }
            values[node.index()] = if log_space {
                log_sum_exp(
                    succ.iter()
                        .map(|&l| -v[l.index()] + values[topo.link(l).dst.index()]),
                )
            } else {
                succ.iter()
                    .map(|&l| (-v[l.index()]).exp() * values[topo.link(l).dst.index()])
                    .sum()
            };
        }
        SubtreeMasses { log_space, values }
    }

    pub fn log_mass(&self, n: NodeId) -> f64 {
        let x = self.values[n.index()];
        if self.log_space {
            x
        } else {
            x.ln()
        }
    }

    pub fn mass(&self, n: NodeId) -> f64 {
        let x = self.values[n.index()];
        if self.log_space {
            x.exp()
        } else {
            x
        }
    }

    /// Split ratios of `node` over its DAG successors, in `dag.succ` order.
    pub fn ratios(&self, topo: &Topology, dag: &DestDag, v: &[f64], node: NodeId) -> Vec<(LinkId, f64)> {
        let succ = &dag.succ[node.index()];
        let ratios = if self.log_space {
            let logs: Vec<f64> = succ
                .iter()
                .map(|&l| -v[l.index()] + self.values[topo.link(l).dst.index()])
                .collect();
            normalize_logs(&logs)
        } else {
            let terms: Vec<f64> = succ
                .iter()
                .map(|&l| (-v[l.index()]).exp() * self.values[topo.link(l).dst.index()])
                .collect();
            normalize_linear(&terms)
        };
        succ.iter().copied().zip(ratios).collect()
    }
}
