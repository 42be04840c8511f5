use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DemandMatrix, Topology};

use super::dag::EcmpDag;
use super::distribution::traffic_distribution;
use super::split::SubtreeMasses;

/// Second weights beyond this value mean the iteration is chasing an unreachable target.
const DIVERGENCE_LIMIT: f64 = 700.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NemConfig {
    /// Step size; `None` means `1 / max f*`.
    pub gamma: Option<f64>,
    /// Stopping slack; `None` means `1e-3 * max f*`.
    pub epsilon: Option<f64>,
    pub max_iters: usize,
}

impl Default for NemConfig {
    fn default() -> Self {
        NemConfig {
            gamma: None,
            epsilon: None,
            max_iters: 100_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NemTraceRow {
    pub iteration: usize,
    /// `max (f - f*)` over links.
    pub max_excess: f64,
    pub dual_objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecondWeights {
    pub v: Vec<f64>,
    pub trace: Vec<NemTraceRow>,
    pub converged: bool,
    pub iterations: usize,
    /// `max |f - f*|` at the returned weights.
    pub max_abs_error: f64,
}

impl SecondWeights {
    pub fn trace_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.trace {
            w.serialize(row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
    }
}

/// `sum_(s,t) d_st log Z^t(s) + sum_ij v_ij f*_ij`, minimized by the second weights.
pub fn nem_dual_objective(
    topo: &Topology,
    dm: &DemandMatrix,
    dag: &EcmpDag,
    v: &[f64],
    target: &[f64],
) -> f64 {
    let mut total: f64 = v.iter().zip(target).map(|(v, f)| v * f).sum();
    for d in dag.dests() {
        let demands = dm.demands_to(d.dest);
        if demands.is_empty() {
            continue;
        }
        let m = SubtreeMasses::compute(topo, d, v);
        for (s, x) in demands {
            if x > 0.0 {
                total += x * m.log_mass(s);
            }
        }
    }
    total
}

/// Projected gradient on the entropy dual: `v <- (v - γ (f* - f(v)))_+`, from `v = 0`,
/// until `f(v) <= f* + ε` on every link.
pub fn solve_second_weights(
    topo: &Topology,
    dm: &DemandMatrix,
    dag: &EcmpDag,
    target: &[f64],
    cfg: &NemConfig,
) -> Result<SecondWeights> {
    let nl = topo.num_links();
    if target.len() != nl {
        return Err(Error::Structural(format!("{} target loads for {nl} links", target.len())));
    }
    if let Some(bad) = target.iter().find(|f| !(f.is_finite() && **f >= 0.0)) {
        return Err(Error::Domain(format!("target load {bad} is not >= 0")));
    }
    let fmax = target.iter().copied().fold(0.0, f64::max);
    let gamma = match cfg.gamma {
        Some(g) if g > 0.0 && g.is_finite() => g,
        Some(g) => return Err(Error::Config(format!("gamma must be positive, got {g}"))),
        None if fmax > 0.0 => 1.0 / fmax,
        None => 1.0,
    };
    let eps = match cfg.epsilon {
        Some(e) if e > 0.0 => e,
        Some(e) => return Err(Error::Config(format!("epsilon must be positive, got {e}"))),
        None if fmax > 0.0 => 1e-3 * fmax,
        None => 1e-12,
    };
    check_node_capacity(topo, dm, dag, target, eps)?;

    let mut v = vec![0.0; nl];
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut err = 0.0;
    let mut gamma = gamma;
    let mut dual = nem_dual_objective(topo, dm, dag, &v, target);
    for k in 0..=cfg.max_iters {
        let f = traffic_distribution(topo, dm, dag, &v)?.aggregate();
        let max_excess = f
            .iter()
            .zip(target)
            .map(|(f, t)| f - t)
            .fold(f64::NEG_INFINITY, f64::max);
        err = f
            .iter()
            .zip(target)
            .map(|(f, t)| (f - t).abs())
            .fold(0.0, f64::max);
        trace.push(NemTraceRow {
            iteration: k,
            max_excess: if nl == 0 { 0.0 } else { max_excess },
            dual_objective: dual,
        });
        iterations = k;
        if nl == 0 || max_excess <= eps {
            converged = true;
            break;
        }
        if k == cfg.max_iters {
            break;
        }
        // The fixed step can overshoot into a two-cycle when paths are long relative to
        // `max f*`; halve it whenever the dual objective would rise.
        let mut next = vec![0.0; nl];
        for _ in 0..60 {
            for l in 0..nl {
                next[l] = (v[l] - gamma * (target[l] - f[l])).max(0.0);
            }
            let d = nem_dual_objective(topo, dm, dag, &next, target);
            if d <= dual + 1e-12 * dual.abs().max(1.0) {
                dual = d;
                break;
            }
            gamma *= 0.5;
            log::debug!("second weights: step halved to {gamma:e} at iteration {k}");
        }
        v = next;
        if let Some(l) = v.iter().position(|x| *x > DIVERGENCE_LIMIT) {
            return Err(Error::Infeasible(format!(
                "second weight of link {} diverges; target loads are not realizable on the DAG",
                topo.links()[l].id
            )));
        }
    }
    log::debug!("second weights: {iterations} iterations, converged {converged}");
    Ok(SecondWeights {
        v,
        trace,
        converged,
        iterations,
        max_abs_error: err,
    })
}

/// Every node must be able to push out at least the traffic it originates.
fn check_node_capacity(
    topo: &Topology,
    dm: &DemandMatrix,
    dag: &EcmpDag,
    target: &[f64],
    eps: f64,
) -> Result<()> {
    let on = dag.union_links(topo.num_links());
    for n in topo.node_ids() {
        let originating: f64 = dm
            .positive_pairs()
            .filter(|&(s, _, _)| s == n)
            .map(|(_, _, d)| d)
            .sum();
        if originating == 0.0 {
            continue;
        }
        let room: f64 = topo
            .out_links(n)
            .iter()
            .filter(|l| on[l.index()])
            .map(|l| target[l.index()])
            .sum();
        if room + eps < originating {
            return Err(Error::Infeasible(format!(
                "node {} originates {originating} but its DAG links only admit {room}",
                topo.node_name(n)
            )));
        }
    }
    Ok(())
}
