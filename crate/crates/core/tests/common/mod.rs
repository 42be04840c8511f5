//! Independent oracles and instance generators shared by the integration tests.
//!
//! Everything here works on explicitly enumerated paths and never calls the solver,
//! DAG builder or DP code it is used to check.
#![allow(dead_code)]

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spef_core::{DemandMatrix, LinkId, NodeId, Topology, UtilitySpec};

pub const PATH_CAP: usize = 10_000;

pub type Path = Vec<LinkId>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Simple paths `s -> t` using only links accepted by `allowed`, up to [`PATH_CAP`].
pub fn enumerate_paths(
    topo: &Topology,
    s: NodeId,
    t: NodeId,
    allowed: &dyn Fn(LinkId) -> bool,
) -> Vec<Path> {
    fn go(
        topo: &Topology,
        at: NodeId,
        t: NodeId,
        allowed: &dyn Fn(LinkId) -> bool,
        seen: &mut Vec<bool>,
        cur: &mut Path,
        out: &mut Vec<Path>,
    ) {
        if out.len() >= PATH_CAP {
            return;
        }
        if at == t {
            out.push(cur.clone());
            return;
        }
        for &l in topo.out_links(at) {
            let next = topo.link(l).dst;
            if seen[next.index()] || !allowed(l) {
                continue;
            }
            seen[next.index()] = true;
            cur.push(l);
            go(topo, next, t, allowed, seen, cur, out);
            cur.pop();
            seen[next.index()] = false;
        }
    }
    let mut seen = vec![false; topo.num_nodes()];
    seen[s.index()] = true;
    let mut out = Vec::new();
    go(topo, s, t, allowed, &mut seen, &mut Vec::new(), &mut out);
    out
}

pub fn all_paths(topo: &Topology, s: NodeId, t: NodeId) -> Vec<Path> {
    enumerate_paths(topo, s, t, &|_| true)
}

pub fn path_len(p: &[LinkId], w: &[f64]) -> f64 {
    p.iter().map(|l| w[l.index()]).sum()
}

/// All minimum-length simple paths under `w`, ties within `tol`.
pub fn shortest_paths(topo: &Topology, s: NodeId, t: NodeId, w: &[f64], tol: f64) -> Vec<Path> {
    let paths = all_paths(topo, s, t);
    let best = paths.iter().map(|p| path_len(p, w)).fold(f64::INFINITY, f64::min);
    paths
        .into_iter()
        .filter(|p| path_len(p, w) <= best + tol)
        .collect()
}

/// Minimum-hop path by breadth-first search.
pub fn min_hop_path(topo: &Topology, s: NodeId, t: NodeId) -> Option<Path> {
    let mut via: Vec<Option<LinkId>> = vec![None; topo.num_nodes()];
    let mut seen = vec![false; topo.num_nodes()];
    seen[s.index()] = true;
    let mut q = VecDeque::from([s]);
    while let Some(n) = q.pop_front() {
        if n == t {
            let mut p = Vec::new();
            let mut at = t;
            while at != s {
                let l = via[at.index()].unwrap();
                p.push(l);
                at = topo.link(l).src;
            }
            p.reverse();
            return Some(p);
        }
        for &l in topo.out_links(n) {
            let d = topo.link(l).dst;
            if !seen[d.index()] {
                seen[d.index()] = true;
                via[d.index()] = Some(l);
                q.push_back(d);
            }
        }
    }
    None
}

fn link(i: usize, j: usize, c: f64) -> (String, String, String, f64) {
    (format!("{i}-{j}"), i.to_string(), j.to_string(), c)
}

/// Directed ring over `n` nodes plus `extra` random chords; capacities in `[1, 3]`.
pub fn random_topology(r: &mut ChaCha8Rng, n: usize, extra: usize) -> Topology {
    let mut pairs: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    let mut candidates: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j && !pairs.contains(&(i, j)))
        .collect();
    candidates.shuffle(r);
    pairs.extend(candidates.into_iter().take(extra));
    Topology::new(
        (0..n).map(|i| i.to_string()),
        pairs.into_iter().map(|(i, j)| link(i, j, r.gen_range(1.0..=3.0))),
    )
    .unwrap()
}

/// Up to `k` distinct pairs, scaled so min-hop routing peaks at `mlu` utilization.
pub fn random_demands(r: &mut ChaCha8Rng, topo: &Topology, k: usize, mlu: f64) -> DemandMatrix {
    let n = topo.num_nodes();
    let mut pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|(i, j)| i != j)
        .collect();
    pairs.shuffle(r);
    let chosen: Vec<((NodeId, NodeId), f64)> = pairs
        .into_iter()
        .take(k)
        .map(|(i, j)| ((NodeId(i), NodeId(j)), r.gen_range(0.2..1.0)))
        .collect();
    let mut load = vec![0.0; topo.num_links()];
    for &((s, t), d) in &chosen {
        for l in min_hop_path(topo, s, t).unwrap() {
            load[l.index()] += d;
        }
    }
    let peak = topo
        .links()
        .iter()
        .zip(&load)
        .map(|(l, f)| f / l.capacity)
        .fold(0.0, f64::max);
    let k = mlu / peak;
    DemandMatrix::new(chosen.into_iter().map(|(p, d)| (p, d * k))).unwrap()
}

/// Random strongly connected instance with at most `max_nodes` nodes.
pub fn random_instance(seed: u64, max_nodes: usize, demands: usize) -> (Topology, DemandMatrix) {
    let mut r = rng(seed);
    let n = r.gen_range(4..=max_nodes);
    let extra = r.gen_range(n / 2..=n);
    let topo = random_topology(&mut r, n, extra);
    let dm = random_demands(&mut r, &topo, demands, 0.6);
    (topo, dm)
}

/// Enumerated paths and path flows of one demand.
#[derive(Debug, Clone)]
pub struct PairFlow {
    pub src: NodeId,
    pub dest: NodeId,
    pub demand: f64,
    pub paths: Vec<Path>,
    pub flow: Vec<f64>,
}

fn loads(nl: usize, pairs: &[PairFlow]) -> Vec<f64> {
    let mut f = vec![0.0; nl];
    for p in pairs {
        for (path, x) in p.paths.iter().zip(&p.flow) {
            for l in path {
                f[l.index()] += x;
            }
        }
    }
    f
}

/// Utility optimum over all simple paths by path equilibration: repeatedly moves flow
/// from the costliest used path of a pair to its cheapest path, with an exact line search
/// on the derivative. Path cost is `sum V'(s)` over its links. Returns the spare
/// capacity.
pub fn brute_force_te(topo: &Topology, dm: &DemandMatrix, spec: &UtilitySpec) -> Vec<f64> {
    let nl = topo.num_links();
    let caps = topo.capacities();
    let mut pairs: Vec<PairFlow> = dm
        .positive_pairs()
        .map(|(s, t, d)| {
            let paths = all_paths(topo, s, t);
            let start = min_hop_path(topo, s, t).unwrap();
            let flow = paths.iter().map(|p| if *p == start { d } else { 0.0 }).collect();
            PairFlow { src: s, dest: t, demand: d, paths, flow }
        })
        .collect();
    let marginal = |l: usize, s: f64| spec.marginal_utility(LinkId(l), s).unwrap();
    let cost = |p: &Path, spare: &[f64]| -> f64 {
        p.iter().map(|l| marginal(l.index(), spare[l.index()])).sum()
    };
    for _sweep in 0..20_000 {
        let mut worst: f64 = 0.0;
        for k in 0..pairs.len() {
            let f = loads(nl, &pairs);
            let spare: Vec<f64> = caps.iter().zip(&f).map(|(c, f)| c - f).collect();
            let pair = &pairs[k];
            let costs: Vec<f64> = pair.paths.iter().map(|p| cost(p, &spare)).collect();
            let lo = (0..costs.len())
                .min_by(|&a, &b| costs[a].total_cmp(&costs[b]))
                .unwrap();
            let hi = (0..costs.len())
                .filter(|&i| pair.flow[i] > 0.0)
                .max_by(|&a, &b| costs[a].total_cmp(&costs[b]))
                .unwrap();
            let excess = (costs[hi] - costs[lo]) / costs[lo];
            worst = worst.max(excess);
            if hi == lo || excess < 1e-13 {
                continue;
            }
            let (p_hi, p_lo) = (pair.paths[hi].clone(), pair.paths[lo].clone());
            let only_lo: Vec<usize> = p_lo
                .iter()
                .filter(|l| !p_hi.contains(l))
                .map(|l| l.index())
                .collect();
            let only_hi: Vec<usize> = p_hi
                .iter()
                .filter(|l| !p_lo.contains(l))
                .map(|l| l.index())
                .collect();
            let room = only_lo.iter().map(|&l| spare[l]).fold(f64::INFINITY, f64::min);
            let mut a = 0.0;
            let mut b = pair.flow[hi].min(room * (1.0 - 1e-12));
            let slope = |d: f64| -> f64 {
                only_hi.iter().map(|&l| marginal(l, spare[l] + d)).sum::<f64>()
                    - only_lo.iter().map(|&l| marginal(l, spare[l] - d)).sum::<f64>()
            };
            if slope(b) >= 0.0 {
                a = b;
            } else {
                for _ in 0..100 {
                    let m = 0.5 * (a + b);
                    if slope(m) > 0.0 {
                        a = m;
                    } else {
                        b = m;
                    }
                }
            }
            let pair = &mut pairs[k];
            pair.flow[hi] -= a;
            pair.flow[lo] += a;
        }
        if worst < 1e-11 {
            break;
        }
    }
    let f = loads(nl, &pairs);
    caps.iter().zip(&f).map(|(c, f)| c - f).collect()
}

/// Softmax over `-length(p)` under second weights `v`.
pub fn path_probabilities(paths: &[Path], v: &[f64]) -> Vec<f64> {
    let logits: Vec<f64> = paths.iter().map(|p| -path_len(p, v)).collect();
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// Link loads when every pair splits over its paths by [`path_probabilities`].
pub fn entropy_loads(nl: usize, pairs: &[(f64, Vec<Path>)], v: &[f64]) -> Vec<f64> {
    let mut f = vec![0.0; nl];
    for (d, paths) in pairs {
        for (p, x) in paths.iter().zip(path_probabilities(paths, v)) {
            for l in p {
                f[l.index()] += d * x;
            }
        }
    }
    f
}

/// Maximizes the demand-weighted path entropy subject to `load <= target` by exact
/// cyclic coordinate minimization of the dual `sum d log sum exp(-len) + v . target`
/// over `v >= 0`. Each coordinate step solves `load_l(v) = target_l` by bisection.
/// Returns the multipliers.
pub fn entropy_oracle(nl: usize, pairs: &[(f64, Vec<Path>)], target: &[f64]) -> Vec<f64> {
    let used: Vec<usize> = (0..nl)
        .filter(|&l| {
            pairs
                .iter()
                .any(|(_, ps)| ps.iter().any(|p| p.iter().any(|x| x.index() == l)))
        })
        .collect();
    let mut v = vec![0.0; nl];
    for _sweep in 0..50_000 {
        let mut moved: f64 = 0.0;
        for &l in &used {
            let old = v[l];
            let load_at = |x: f64, v: &mut Vec<f64>| {
                v[l] = x;
                entropy_loads(nl, pairs, v)[l]
            };
            let new = if load_at(0.0, &mut v) <= target[l] {
                0.0
            } else {
                let (mut a, mut b) = (0.0, 1.0);
                while load_at(b, &mut v) > target[l] && b < 200.0 {
                    a = b;
                    b *= 2.0;
                }
                for _ in 0..200 {
                    let m = 0.5 * (a + b);
                    if load_at(m, &mut v) > target[l] {
                        a = m;
                    } else {
                        b = m;
                    }
                    if b - a < 1e-15 {
                        break;
                    }
                }
                0.5 * (a + b)
            };
            v[l] = new;
            moved = moved.max((new - old).abs());
        }
        if moved < 1e-13 {
            break;
        }
    }
    v
}

pub fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
    assert!((a - b).abs() <= tol, "{what}: {a} vs {b} (tol {tol})");
}
