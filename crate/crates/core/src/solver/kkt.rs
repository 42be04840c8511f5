//! Optimality diagnostics: KKT residuals and the proportional load-balance inequality.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::distances_to;
use crate::model::{DemandMatrix, FlowAssignment, LinkId, NodeId, Topology};
use crate::utility::UtilitySpec;

/// Worst residual per condition family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KktReport {
    /// `|c - sum_t f^t - s|`.
    pub capacity: f64,
    /// `|V'(s) - w|` where `s > 0`, `(V'(s) - w)_+` where `s = 0`.
    pub marginal: f64,
    /// Potential differences: `|d_i - d_j - w_ij|` on links carrying flow toward `t`,
    /// `(d_i - d_j - w_ij)_+` elsewhere, with `d` the distance to `t` under `w`.
    pub potential: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        self.capacity.max(self.marginal).max(self.potential)
    }

    pub fn within(&self, tol: f64) -> bool {
        self.max() < tol
    }
}

/// Computes KKT residuals of `(w, s, fa)`. A link carries flow toward `t` when
/// `f^t > tol`; spare below `tol` counts as zero. Never fails.
pub fn verify_kkt(
    topo: &Topology,
    dm: &DemandMatrix,
    spec: &UtilitySpec,
    w: &[f64],
    s: &[f64],
    fa: &FlowAssignment,
    tol: f64,
) -> KktReport {
    let agg = fa.aggregate();
    let mut capacity: f64 = 0.0;
    let mut marginal: f64 = 0.0;
    for (l, link) in topo.links().iter().enumerate() {
        capacity = capacity.max((link.capacity - agg[l] - s[l]).abs());
        let lid = LinkId(l);
        let r = if s[l] > tol {
            spec.marginal_utility(lid, s[l])
                .map(|v| (v - w[l]).abs())
                .unwrap_or(f64::INFINITY)
        } else {
            match spec.marginal_utility(lid, s[l]) {
                Ok(v) => (v - w[l]).max(0.0),
                Err(_) => f64::INFINITY,
            }
        };
        marginal = marginal.max(r);
    }

    let mut potential: f64 = 0.0;
    let mut dests: Vec<NodeId> = dm.destinations();
    for (t, _) in fa.destinations() {
        if !dests.contains(&t) {
            dests.push(t);
        }
    }
    for t in dests {
        let dist = distances_to(topo, w, t);
        let flows = fa.dest(t);
        for (l, link) in topo.links().iter().enumerate() {
            let (di, dj) = (dist[link.src.index()], dist[link.dst.index()]);
            let carrying = flows.map(|f| f[l] > tol).unwrap_or(false);
            if !di.is_finite() || !dj.is_finite() {
                if carrying {
                    potential = f64::INFINITY;
                }
                continue;
            }
            let slack = di - dj - w[l];
            let r = if carrying { slack.abs() } else { slack.max(0.0) };
            potential = potential.max(r);
        }
    }
    KktReport {
        capacity,
        marginal,
        potential,
    }
}

/// `sum_ij q_ij (s_ij - s*_ij) / (s*_ij)^β`, non-positive for every feasible `s` when
/// `s*` is optimal.
pub fn balance_sum(spec: &UtilitySpec, s_star: &[f64], s: &[f64]) -> f64 {
    s.iter()
        .zip(s_star)
        .enumerate()
        .map(|(l, (s, ss))| spec.q(LinkId(l)) * (s - ss) / ss.powf(spec.beta()))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalanceReport {
    pub passed: bool,
    /// Largest scaled balance sum over all samples.
    pub worst: f64,
    pub worst_sample: usize,
    pub samples: usize,
}

/// Absolute tolerance of the balance inequality, relative to `sum |w* (s - s*)|`.
const BALANCE_TOL: f64 = 1e-7;

/// Compares `fa_star` against `samples` random feasible assignments built by mixing
/// `fa_star` with a random simple path per demand, scaled back into capacity.
pub fn verify_balance(
    topo: &Topology,
    dm: &DemandMatrix,
    spec: &UtilitySpec,
    fa_star: &FlowAssignment,
    samples: usize,
    seed: u64,
) -> Result<BalanceReport> {
    let caps = topo.capacities();
    let f_star = fa_star.aggregate();
    let s_star: Vec<f64> = caps.iter().zip(&f_star).map(|(c, f)| c - f).collect();
    if let Some(l) = s_star.iter().position(|s| !(*s > 0.0)) {
        return Err(Error::Sampling(format!(
            "link {} has no spare capacity",
            topo.links()[l].id
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    let mut worst_sample = 0;
    for k in 0..samples {
        let mut f_rand = vec![0.0; topo.num_links()];
        for (src, dst, d) in dm.positive_pairs() {
            let path = random_simple_path(topo, src, dst, &mut rng).ok_or_else(|| {
                Error::Sampling(format!(
                    "no path from {} to {}",
                    topo.node_name(src),
                    topo.node_name(dst)
                ))
            })?;
            for l in path {
                f_rand[l.index()] += d;
            }
        }
        let mut lambda: f64 = 1.0;
        for l in 0..caps.len() {
            let rise = f_rand[l] - f_star[l];
            if rise > 0.0 {
                lambda = lambda.min(s_star[l] / rise);
            }
        }
        lambda *= rng.gen_range(0.5..=1.0);
        if !(lambda > 0.0) {
            return Err(Error::Sampling("could not scale a sample into capacity".into()));
        }
        let s: Vec<f64> = (0..caps.len())
            .map(|l| caps[l] - (f_star[l] + lambda * (f_rand[l] - f_star[l])))
            .collect();
        let raw = balance_sum(spec, &s_star, &s);
        let scale: f64 = (0..caps.len())
            .map(|l| {
                (spec.q(LinkId(l)) * (s[l] - s_star[l]) / s_star[l].powf(spec.beta())).abs()
            })
            .sum();
        let scaled = raw / scale.max(1.0);
        if scaled > worst {
            worst = scaled;
            worst_sample = k;
        }
    }
    Ok(BalanceReport {
        passed: samples == 0 || worst <= BALANCE_TOL,
        worst: if samples == 0 { 0.0 } else { worst },
        worst_sample,
        samples,
    })
}

/// Randomized depth-first search with backtracking.
fn random_simple_path(
    topo: &Topology,
    src: NodeId,
    dst: NodeId,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<LinkId>> {
    let mut visited = vec![false; topo.num_nodes()];
    let mut path: Vec<LinkId> = Vec::new();
    let mut stack: Vec<Vec<LinkId>> = Vec::new();
    visited[src.index()] = true;
    let shuffled = |n: NodeId, rng: &mut ChaCha8Rng| {
        let mut v = topo.out_links(n).to_vec();
        v.shuffle(rng);
        v
    };
    stack.push(shuffled(src, rng));
    while let Some(options) = stack.last_mut() {
        match options.pop() {
            Some(l) => {
                let next = topo.link(l).dst;
                if visited[next.index()] {
                    continue;
                }
                path.push(l);
                if next == dst {
                    return Some(path);
                }
                visited[next.index()] = true;
                let opts = shuffled(next, rng);
                stack.push(opts);
            }
            None => {
                // Dead ends stay marked visited; they cannot reach `dst` from any other
                // prefix that avoids the nodes still on the path either.
                stack.pop();
                path.pop();
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;

    fn fig1_optimum() -> (Topology, DemandMatrix, UtilitySpec, FlowAssignment) {
        let (topo, dm) = builtin::fig1();
        let spec = UtilitySpec::uniform(&topo, 1.0).unwrap();
        let fa = FlowAssignment::from_named(
            &topo,
            [
                ("3", "1-3", 2.0 / 3.0),
                ("3", "1-2", 1.0 / 3.0),
                ("3", "2-3", 1.0 / 3.0),
                ("4", "3-4", 0.9),
            ],
        )
        .unwrap();
        (topo, dm, spec, fa)
    }

    #[test]
    fn optimum_passes() {
        let (topo, dm, spec, fa) = fig1_optimum();
        let w = [3.0, 10.0, 1.5, 1.5];
        let s = [1.0 / 3.0, 0.1, 2.0 / 3.0, 2.0 / 3.0];
        let r = verify_kkt(&topo, &dm, &spec, &w, &s, &fa, 1e-12);
        assert!(r.within(1e-6), "{r:?}");
    }

    #[test]
    fn zero_demand_residuals_vanish() {
        let (topo, _) = builtin::fig1();
        let spec = UtilitySpec::uniform(&topo, 1.0).unwrap();
        let r = verify_kkt(
            &topo,
            &DemandMatrix::empty(),
            &spec,
            &[1.0; 4],
            &[1.0; 4],
            &FlowAssignment::zero(&topo),
            1e-12,
        );
        assert_eq!(r.max(), 0.0);
    }

    #[test]
    fn wrong_weights_flagged() {
        let (topo, dm, spec, fa) = fig1_optimum();
        let s = [1.0 / 3.0, 0.1, 2.0 / 3.0, 2.0 / 3.0];
        let r = verify_kkt(&topo, &dm, &spec, &[1.0; 4], &s, &fa, 1e-12);
        assert!(r.marginal >= 9.0 - 1e-9);
    }

    #[test]
    fn balance_hand_values() {
        let (_, _, spec, _) = fig1_optimum();
        let s_star = [1.0 / 3.0, 0.1, 2.0 / 3.0, 2.0 / 3.0];
        let minmax = [0.5, 0.1, 0.5, 0.5];
        assert!(balance_sum(&spec, &s_star, &minmax).abs() < 1e-12);
        assert_eq!(balance_sum(&spec, &s_star, &s_star), 0.0);
        // Both routes of pair (1,3) cost 3 under the optimal weights, so moving all of
        // it onto the direct link leaves the sum at zero rather than below it.
        let direct = [0.0, 0.1, 1.0, 1.0];
        assert!(balance_sum(&spec, &s_star, &direct).abs() < 1e-12);
        let detour = [1.0, 0.1, 0.0, 0.0];
        assert!(balance_sum(&spec, &s_star, &detour).abs() < 1e-12);
    }

    #[test]
    fn balance_samples_pass_at_optimum() {
        let (topo, dm, spec, fa) = fig1_optimum();
        let rep = verify_balance(&topo, &dm, &spec, &fa, 50, 7).unwrap();
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn balance_detects_suboptimal_point() {
        let (topo, dm, spec, _) = fig1_optimum();
        let fa = FlowAssignment::from_named(
            &topo,
            [
                ("3", "1-3", 0.9),
                ("3", "1-2", 0.1),
                ("3", "2-3", 0.1),
                ("4", "3-4", 0.9),
            ],
        )
        .unwrap();
        let rep = verify_balance(&topo, &dm, &spec, &fa, 50, 7).unwrap();
        assert!(!rep.passed);
    }
}
