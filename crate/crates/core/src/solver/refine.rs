//! Path-flow projected Newton refinement of the first-weight solution.
//!
//! Dual subgradient iterates chatter around the optimal weights. Starting from the
//! paths discovered by the dual iteration, this stage shifts flow between paths of the
//! same demand pair using diagonal second-derivative scaling until every loaded path is
//! shortest under `w = V'(c - f)`. Below a small spare floor the utility is continued
//! quadratically so overloaded starting points remain well defined.

use std::collections::BTreeMap;

use crate::graph::shortest_paths_to;
use crate::model::{FlowAssignment, LinkId, NodeId, Topology};
use crate::utility::UtilitySpec;

#[derive(Debug, Clone)]
pub(crate) struct PairPaths {
    pub src: NodeId,
    pub dest: NodeId,
    /// Columns as `(links, flow)`.
    pub paths: Vec<(Vec<LinkId>, f64)>,
}

#[derive(Debug, Clone)]
pub(crate) struct RefineOutcome {
    pub pairs: Vec<PairPaths>,
    pub load: Vec<f64>,
    pub converged: bool,
    pub sweeps: usize,
    /// Worst relative excess of a loaded path over the shortest path.
    pub max_rel_excess: f64,
}

/// Spare capacity below which the utility is continued quadratically.
pub(crate) fn extension_floor(spec: &UtilitySpec, cap: f64) -> f64 {
    let rel = 10f64.powf(-280.0 / (spec.beta() + 1.0)).max(1e-9);
    rel * cap
}

struct Extended<'a> {
    spec: &'a UtilitySpec,
    caps: Vec<f64>,
    floors: Vec<f64>,
}

impl<'a> Extended<'a> {
    fn new(topo: &Topology, spec: &'a UtilitySpec) -> Self {
        let caps = topo.capacities();
        let floors = caps.iter().map(|&c| extension_floor(spec, c)).collect();
        Extended { spec, caps, floors }
    }

    /// `(V'(s), -V''(s))` of the extended utility on link `l` at load `f`.
    fn derivs(&self, l: usize, f: f64) -> (f64, f64) {
        let lid = LinkId(l);
        let s = self.caps[l] - f;
        let floor = self.floors[l];
        let at = s.max(floor);
        let w = self.spec.marginal_utility(lid, at).unwrap_or(f64::MAX);
        let h = -self.spec.curvature(lid, at);
        if s >= floor {
            (w, h)
        } else {
            (w + h * (floor - s), h)
        }
    }

    fn value(&self, l: usize, f: f64) -> f64 {
        let lid = LinkId(l);
        let s = self.caps[l] - f;
        let floor = self.floors[l];
        if s >= floor {
            self.spec.utility(lid, s).unwrap_or(f64::NEG_INFINITY)
        } else {
            let v = self.spec.utility(lid, floor).unwrap_or(f64::NEG_INFINITY);
            let w = self.spec.marginal_utility(lid, floor).unwrap_or(f64::MAX);
            let h = -self.spec.curvature(lid, floor);
            let ds = s - floor;
            v + w * ds - 0.5 * h * ds * ds
        }
    }

    fn objective(&self, load: &[f64]) -> f64 {
        load.iter().enumerate().map(|(l, &f)| self.value(l, f)).sum()
    }
}

fn path_cost(path: &[LinkId], w: &[f64]) -> f64 {
    path.iter().map(|l| w[l.index()]).sum()
}

/// Refines `pairs` in place. Requires `spec.beta() > 0`.
pub(crate) fn refine(
    topo: &Topology,
    spec: &UtilitySpec,
    mut pairs: Vec<PairPaths>,
    rel_tol: f64,
    max_sweeps: usize,
) -> RefineOutcome {
    debug_assert!(spec.is_strict());
    let ext = Extended::new(topo, spec);
    let nl = topo.num_links();
    let mut load = vec![0.0; nl];
    for p in &pairs {
        for (links, x) in &p.paths {
            for l in links {
                load[l.index()] += x;
            }
        }
    }

    let mut by_dest: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
    for (i, p) in pairs.iter().enumerate() {
        by_dest.entry(p.dest).or_default().push(i);
    }

    let mut step = 1.0;
    let mut prev_obj = ext.objective(&load);
    let mut max_rel_excess = f64::INFINITY;
    let mut sweeps = 0;
    let mut w = vec![0.0; nl];
    let mut h = vec![0.0; nl];

    let refresh = |load: &[f64], w: &mut [f64], h: &mut [f64]| {
        for l in 0..nl {
            let (a, b) = ext.derivs(l, load[l]);
            w[l] = a;
            h[l] = b;
        }
    };

    while sweeps < max_sweeps {
        refresh(&load, &mut w, &mut h);
        max_rel_excess = optimality_gap(topo, &pairs, &by_dest, &w);
        if max_rel_excess <= rel_tol {
            return RefineOutcome {
                pairs,
                load,
                converged: true,
                sweeps,
                max_rel_excess,
            };
        }
        sweeps += 1;

        for (&t, members) in &by_dest {
            refresh(&load, &mut w, &mut h);
            let tree = shortest_paths_to(topo, &w, t);
            for &pi in members {
                // Current prices for this pair's turn.
                let pair = &mut pairs[pi];
                let tree_path = tree_path(topo, &tree, &w, pair.src, t);
                if let Some(tp) = tree_path {
                    if !pair.paths.iter().any(|(p, _)| *p == tp) {
                        pair.paths.push((tp, 0.0));
                    }
                }
                let costs: Vec<f64> = pair.paths.iter().map(|(p, _)| path_cost(p, &w)).collect();
                let best = costs
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(i, _)| i)
                    .expect("pair has at least one path");
                let mut moved = 0.0;
                let best_path = pair.paths[best].0.clone();
                for k in 0..pair.paths.len() {
                    let x = pair.paths[k].1;
                    if k == best || x <= 0.0 {
                        continue;
                    }
                    let diff = costs[k] - costs[best];
                    if diff <= 0.0 {
                        continue;
                    }
                    let curv: f64 = symmetric_difference(&pair.paths[k].0, &best_path)
                        .map(|l| h[l.index()])
                        .sum();
                    let delta = if curv > 0.0 && curv.is_finite() {
                        (step * diff / curv).min(x)
                    } else {
                        x
                    };
                    pair.paths[k].1 = if delta >= x { 0.0 } else { x - delta };
                    for l in &pair.paths[k].0 {
                        load[l.index()] -= delta;
                    }
                    moved += delta;
                }
                pair.paths[best].1 += moved;
                for l in &best_path {
                    load[l.index()] += moved;
                }
                // Keep the load vector consistent with the columns it was built from.
                for (x, c) in load.iter_mut().zip(&ext.caps) {
                    if x.abs() < 1e-15 * c {
                        *x = 0.0;
                    }
                }
            }
        }

        let obj = ext.objective(&load);
        if obj < prev_obj - 1e-14 * prev_obj.abs().max(1.0) {
            step = (step * 0.5).max(1e-3);
        }
        prev_obj = obj;
        rebuild_load(&pairs, &mut load);
    }

    refresh(&load, &mut w, &mut h);
    max_rel_excess = max_rel_excess.min(optimality_gap(topo, &pairs, &by_dest, &w));
    RefineOutcome {
        converged: max_rel_excess <= rel_tol,
        pairs,
        load,
        sweeps,
        max_rel_excess,
    }
}

fn rebuild_load(pairs: &[PairPaths], load: &mut [f64]) {
    load.iter_mut().for_each(|f| *f = 0.0);
    for p in pairs {
        for (links, x) in &p.paths {
            if *x > 0.0 {
                for l in links {
                    load[l.index()] += x;
                }
            }
        }
    }
}

fn symmetric_difference<'a>(a: &'a [LinkId], b: &'a [LinkId]) -> impl Iterator<Item = LinkId> + 'a {
    a.iter()
        .filter(move |l| !b.contains(l))
        .chain(b.iter().filter(move |l| !a.contains(l)))
        .copied()
}

fn tree_path(
    topo: &Topology,
    tree: &crate::graph::SpTree,
    w: &[f64],
    src: NodeId,
    dest: NodeId,
) -> Option<Vec<LinkId>> {
    let mut path = Vec::new();
    let mut at = src;
    while at != dest {
        let l = tree.next_hop(topo, w, at)?;
        path.push(l);
        at = topo.link(l).dst;
    }
    Some(path)
}

/// Largest `(d_p - d_min) / d_min` over loaded paths, where `d_min` is the true shortest
/// distance under `w`.
fn optimality_gap(
    topo: &Topology,
    pairs: &[PairPaths],
    by_dest: &BTreeMap<NodeId, Vec<usize>>,
    w: &[f64],
) -> f64 {
    let mut worst: f64 = 0.0;
    for (&t, members) in by_dest {
        let dist = shortest_paths_to(topo, w, t).dist;
        for &pi in members {
            let pair = &pairs[pi];
            let dmin = dist[pair.src.index()];
            for (p, x) in &pair.paths {
                if *x > 0.0 {
                    let rel = (path_cost(p, w) - dmin) / dmin.abs().max(f64::MIN_POSITIVE);
                    worst = worst.max(rel);
                }
            }
        }
    }
    worst
}

/// Per-destination link flows of the refined columns.
pub(crate) fn to_assignment(topo: &Topology, pairs: &[PairPaths]) -> FlowAssignment {
    let mut fa = FlowAssignment::zero(topo);
    for p in pairs {
        let flows = fa.dest_mut(p.dest);
        for (links, x) in &p.paths {
            if *x > 0.0 {
                for l in links {
                    flows[l.index()] += x;
                }
            }
        }
    }
    fa
}
