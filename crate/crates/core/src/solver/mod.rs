//! First link weights by dual decomposition.
//!
//! Each iteration solves the per-link spare subproblems, routes every destination on a
//! shortest-path tree, and takes a projected subgradient step on the weights. The
//! constant-step iterates oscillate, so the answer is read off the running average of
//! the spare iterates over the most recent doubling epoch and then polished by
//! [`refine`] on the paths the dual iteration visited.

mod kkt;
mod refine;
mod rounding;
mod routing;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DemandMatrix, FlowAssignment, LinkId, NodeId, Topology};
use crate::utility::UtilitySpec;

pub use kkt::{balance_sum, verify_balance, verify_kkt, BalanceReport, KktReport};
pub use rounding::round_weights;
pub use routing::{route_to_destination, Routing};

/// Step-size rule for the weight update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "gamma")]
pub enum StepSchedule {
    /// `w <- (w - γ g)_+`. `None` means `1 / max c`.
    Constant(Option<f64>),
    /// `w <- (w - γ0/k g)_+`. `None` means `1 / max c`.
    Diminishing(Option<f64>),
    /// Step taken on the spare capacity instead of the weight:
    /// `s <- clamp(s + γ g)`, `w = V'(s)`. Equivalent to a per-link weight step of
    /// `γ |V''(s)|`, which keeps pace with weights spanning many orders of magnitude
    /// (large `β`). `γ` is dimensionless in `(0, 1]`; `None` means 0.5.
    SpareScaled(Option<f64>),
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule::Constant(None)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", content = "weights")]
pub enum InitialWeights {
    /// `w_ij = 1 / c_ij`.
    #[default]
    Invcap,
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub step_schedule: StepSchedule,
    pub max_iters: usize,
    /// Iterations before the stopping rule is consulted.
    pub min_iters: usize,
    pub gap_tol: f64,
    pub initial_weights: InitialWeights,
    /// Polish the averaged solution with path-flow Newton steps (`β > 0` only).
    pub refine: bool,
    /// Relative path-cost tolerance of the refinement.
    pub refine_tol: f64,
    pub refine_max_sweeps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            step_schedule: StepSchedule::default(),
            max_iters: 5000,
            min_iters: 50,
            gap_tol: 1e-3,
            initial_weights: InitialWeights::Invcap,
            refine: true,
            refine_tol: 1e-10,
            refine_max_sweeps: 20_000,
        }
    }
}

impl SolverConfig {
    /// Defaults adjusted to `spec`: spare-scaled steps once `β > 2`, where marginal
    /// utilities span too many orders of magnitude for a single additive step.
    pub fn for_spec(spec: &UtilitySpec) -> Self {
        let mut cfg = Self::default();
        if spec.beta() > 2.0 {
            cfg.step_schedule = StepSchedule::SpareScaled(None);
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let gamma = match self.step_schedule {
            StepSchedule::Constant(g) | StepSchedule::Diminishing(g) => g,
            StepSchedule::SpareScaled(g) => {
                if let Some(g) = g {
                    if g > 1.0 {
                        return Err(Error::Config(format!(
                            "spare-scaled step must lie in (0, 1], got {g}"
                        )));
                    }
                }
                g
            }
        };
        if let Some(g) = gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::Config(format!("gamma must be positive, got {g}")));
            }
        }
        if !(self.gap_tol > 0.0) {
            return Err(Error::Config(format!("gap_tol must be positive, got {}", self.gap_tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if !(self.refine_tol > 0.0) {
            return Err(Error::Config("refine_tol must be positive".into()));
        }
        Ok(())
    }
}

/// One iteration of the dual method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub gap: f64,
    pub dual_objective: f64,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub first_weights: Vec<f64>,
    pub spare: Vec<f64>,
    /// Target loads `f* = c - s*`.
    pub optimal_flow: Vec<f64>,
    /// Per-destination flows realizing `f*`, when the refinement produced them.
    pub flows: Option<FlowAssignment>,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
    /// Whether the dual iteration met its own stopping rule.
    pub dual_converged: bool,
    pub iterations: usize,
    pub refine_sweeps: usize,
    /// `false` for `β = 0` or when some link is saturated.
    pub unique: bool,
    pub warnings: Vec<String>,
}

#[derive(Serialize)]
struct ResultJson<'a> {
    weights: BTreeMap<&'a str, f64>,
    spare: BTreeMap<&'a str, f64>,
    target_loads: BTreeMap<&'a str, f64>,
    converged: bool,
    iterations: usize,
    unique: bool,
    warnings: &'a [String],
}

impl SolveResult {
    pub fn to_json(&self, topo: &Topology) -> Result<String> {
        let keyed = |v: &[f64]| -> BTreeMap<&str, f64> {
            topo.links().iter().map(|l| l.id.as_str()).zip(v.iter().copied()).collect()
        };
        let doc = ResultJson {
            weights: keyed(&self.first_weights),
            spare: keyed(&self.spare),
            target_loads: keyed(&self.optimal_flow),
            converged: self.converged,
            iterations: self.iterations,
            unique: self.unique,
            warnings: &self.warnings,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn trace_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.trace {
            w.serialize(row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
    }

    /// Link utilizations `f* / c`.
    pub fn utilizations(&self, topo: &Topology) -> Vec<f64> {
        self.optimal_flow
            .iter()
            .zip(topo.links())
            .map(|(f, l)| f / l.capacity)
            .collect()
    }
}

/// `sum_ij w_ij (f_ij + s_ij - c_ij)`.
pub fn dual_gap(topo: &Topology, w: &[f64], s: &[f64], f: &[f64]) -> f64 {
    topo.links()
        .iter()
        .enumerate()
        .map(|(l, link)| w[l] * (f[l] + s[l] - link.capacity))
        .sum()
}

/// Running sums over one doubling epoch of iterates.
#[derive(Debug, Clone)]
struct Window {
    n: usize,
    s: Vec<f64>,
    f: Vec<f64>,
    w: Vec<f64>,
    paths: BTreeMap<(NodeId, NodeId), BTreeMap<Vec<LinkId>, u64>>,
}

impl Window {
    fn new(nl: usize) -> Self {
        Window {
            n: 0,
            s: vec![0.0; nl],
            f: vec![0.0; nl],
            w: vec![0.0; nl],
            paths: BTreeMap::new(),
        }
    }

    fn add(&mut self, s: &[f64], f: &[f64], w: &[f64]) {
        self.n += 1;
        for l in 0..s.len() {
            self.s[l] += s[l];
            self.f[l] += f[l];
            self.w[l] += w[l];
        }
    }
}

struct Averages {
    s: Vec<f64>,
    f: Vec<f64>,
    w: Vec<f64>,
}

fn averages(a: &Window, b: &Window) -> Averages {
    let n = (a.n + b.n).max(1) as f64;
    let mean = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(x, y)| (x + y) / n).collect();
    Averages {
        s: mean(&a.s, &b.s),
        f: mean(&a.f, &b.f),
        w: mean(&a.w, &b.w),
    }
}

/// Runs the dual iteration for the first link weights.
pub fn solve_first_weights(
    topo: &Topology,
    dm: &DemandMatrix,
    spec: &UtilitySpec,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    cfg.validate()?;
    if spec.num_links() != topo.num_links() {
        return Err(Error::Config(format!(
            "utility has {} links, topology {}",
            spec.num_links(),
            topo.num_links()
        )));
    }
    let nl = topo.num_links();
    let caps = topo.capacities();
    let cmax = topo.max_capacity();

    let mut w = match &cfg.initial_weights {
        InitialWeights::Invcap => caps.iter().map(|c| 1.0 / c).collect::<Vec<_>>(),
        InitialWeights::Explicit(v) => {
            if v.len() != nl {
                return Err(Error::Config(format!(
                    "{} initial weights for {} links",
                    v.len(),
                    nl
                )));
            }
            if let Some(bad) = v.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
                return Err(Error::Config(format!("initial weight {bad} is not >= 0")));
            }
            v.clone()
        }
    };
    let (additive_gamma, spare_gamma) = match cfg.step_schedule {
        StepSchedule::Constant(g) | StepSchedule::Diminishing(g) => {
            (g.unwrap_or(1.0 / cmax), 0.0)
        }
        StepSchedule::SpareScaled(g) => {
            if !spec.is_strict() {
                return Err(Error::Config("spare-scaled steps need beta > 0".into()));
            }
            (0.0, g.unwrap_or(0.5))
        }
    };

    let dests = dm.destinations();
    let demands: Vec<Vec<(NodeId, f64)>> = dests.iter().map(|&t| dm.demands_to(t)).collect();
    let collect_paths = cfg.refine && spec.is_strict();

    let mut trace = Vec::new();
    let mut prev = Window::new(nl);
    let mut cur = Window::new(nl);
    let mut s = vec![0.0; nl];
    // Spare iterate driven directly by the spare-scaled schedule.
    let mut s_state: Vec<f64> = (0..nl)
        .map(|l| spec.spare_at_price(LinkId(l), w[l], caps[l]))
        .collect();
    let mut last_f = vec![0.0; nl];
    let mut dual_converged = false;
    let mut iterations = 0;

    for k in 0..cfg.max_iters {
        iterations = k + 1;
        for l in 0..nl {
            s[l] = match cfg.step_schedule {
                StepSchedule::SpareScaled(_) => s_state[l],
                _ => spec.spare_at_price(LinkId(l), w[l], caps[l]),
            };
        }

        let route = |i: usize| route_to_destination(topo, &w, dests[i], &demands[i]);
        let routings: Vec<Routing> = if dests.len() >= 8 {
            (0..dests.len()).into_par_iter().map(route).collect::<Result<_>>()?
        } else {
            (0..dests.len()).map(route).collect::<Result<_>>()?
        };

        let mut f = vec![0.0; nl];
        let mut route_cost = 0.0;
        for r in &routings {
            for (a, x) in f.iter_mut().zip(&r.flows) {
                *a += x;
            }
            route_cost += r.cost;
        }

        let gap = dual_gap(topo, &w, &s, &f);
        let mut dual = -route_cost;
        for l in 0..nl {
            let v = spec.utility(LinkId(l), s[l]).unwrap_or(f64::NEG_INFINITY);
            dual += v - w[l] * s[l] + w[l] * caps[l];
        }
        trace.push(TraceRow {
            iteration: k,
            gap,
            dual_objective: dual,
        });

        if iterations.is_power_of_two() {
            prev = std::mem::replace(&mut cur, Window::new(nl));
        }
        cur.add(&s, &f, &w);
        if collect_paths {
            for (i, r) in routings.iter().enumerate() {
                for &(src, d) in &demands[i] {
                    if d > 0.0 {
                        *cur.paths
                            .entry((src, dests[i]))
                            .or_default()
                            .entry(r.path(topo, src))
                            .or_insert(0) += 1;
                    }
                }
            }
        }
        last_f.clone_from(&f);

        if iterations >= cfg.min_iters {
            let avg = averages(&prev, &cur);
            let avg_gap = dual_gap(topo, &avg.w, &avg.s, &avg.f).abs();
            let resid = (0..nl)
                .map(|l| (caps[l] - avg.f[l] - avg.s[l]).abs())
                .fold(0.0, f64::max);
            if avg_gap < cfg.gap_tol && resid <= cfg.gap_tol * cmax {
                dual_converged = true;
                break;
            }
        }

        match cfg.step_schedule {
            StepSchedule::Constant(_) => {
                for l in 0..nl {
                    w[l] = (w[l] - additive_gamma * (caps[l] - f[l] - s[l])).max(0.0);
                }
            }
            StepSchedule::Diminishing(_) => {
                let g = additive_gamma / (k + 1) as f64;
                for l in 0..nl {
                    w[l] = (w[l] - g * (caps[l] - f[l] - s[l])).max(0.0);
                }
            }
            StepSchedule::SpareScaled(_) => {
                for l in 0..nl {
                    let lo = crate::utility::SPARE_FLOOR * caps[l];
                    let next = s[l] + spare_gamma * (caps[l] - f[l] - s[l]);
                    s_state[l] = next.clamp(lo, caps[l]);
                    w[l] = spec
                        .marginal_utility(LinkId(l), s_state[l])
                        .expect("spare iterate is positive");
                }
            }
        }
    }

    log::debug!(
        "dual iteration stopped after {iterations} iterations (converged: {dual_converged})"
    );
    let avg = averages(&prev, &cur);
    let mut warnings = Vec::new();
    if !dual_converged {
        warnings.push(format!(
            "dual iteration did not meet the gap tolerance within {} iterations",
            cfg.max_iters
        ));
    }

    if !spec.is_strict() {
        return finish_linear(topo, spec, dm, avg, trace, dual_converged, iterations, warnings);
    }

    if collect_paths {
        let mut paths = prev.paths;
        for (pair, counts) in cur.paths {
            let slot = paths.entry(pair).or_default();
            for (p, n) in counts {
                *slot.entry(p).or_insert(0) += n;
            }
        }
        let pairs: Vec<refine::PairPaths> = paths
            .into_iter()
            .map(|((src, dest), counts)| {
                let demand = dm.get(src, dest);
                let total: u64 = counts.values().sum();
                refine::PairPaths {
                    src,
                    dest,
                    paths: counts
                        .into_iter()
                        .map(|(p, n)| (p, demand * n as f64 / total as f64))
                        .collect(),
                }
            })
            .collect();
        let out = refine::refine(topo, spec, pairs, cfg.refine_tol, cfg.refine_max_sweeps);
        log::debug!(
            "refinement: {} sweeps, worst relative path excess {:.3e}",
            out.sweeps,
            out.max_rel_excess
        );
        if !out.converged {
            warnings.push(format!(
                "refinement stopped after {} sweeps with relative path excess {:.3e}",
                out.sweeps, out.max_rel_excess
            ));
        }
        let mut spare = vec![0.0; nl];
        let mut flow = vec![0.0; nl];
        let mut saturated = Vec::new();
        for l in 0..nl {
            let load = out.load[l].max(0.0);
            let sp = caps[l] - load;
            if sp < -1e-9 * caps[l] {
                return Err(Error::Infeasible(format!(
                    "link {} needs load {load} above capacity {}",
                    topo.links()[l].id,
                    caps[l]
                )));
            }
            if sp < refine::extension_floor(spec, caps[l]) {
                saturated.push(topo.links()[l].id.clone());
            }
            flow[l] = load.min(caps[l]);
            spare[l] = caps[l] - flow[l];
        }
        let floor: Vec<f64> = caps.iter().map(|&c| refine::extension_floor(spec, c)).collect();
        let weights = (0..nl)
            .map(|l| {
                spec.marginal_utility(LinkId(l), spare[l].max(floor[l]))
                    .expect("positive spare")
            })
            .collect();
        let unique = saturated.is_empty();
        if !unique {
            warnings.push(format!("saturated links: {}", saturated.join(", ")));
        }
        return Ok(SolveResult {
            first_weights: weights,
            spare,
            optimal_flow: flow,
            flows: Some(refine::to_assignment(topo, &out.pairs)),
            trace,
            converged: out.converged,
            dual_converged,
            iterations,
            refine_sweeps: out.sweeps,
            unique,
            warnings,
        });
    }

    let mut spare = Vec::with_capacity(nl);
    let mut saturated = Vec::new();
    #[allow(clippy::needless_range_loop)]
    for l in 0..nl {
        let sp = avg.s[l].clamp(0.0, caps[l]);
        if avg.f[l] > caps[l] * (1.0 + 1e-3) && sp <= 1e-9 * caps[l] {
            return Err(Error::Infeasible(format!(
                "link {} keeps an average load of {} over capacity {}",
                topo.links()[l].id,
                avg.f[l],
                caps[l]
            )));
        }
        if sp < 1e-9 * caps[l] {
            saturated.push(l);
        }
        spare.push(sp);
    }
    let unique = saturated.is_empty();
    let (spare, flow) = if unique {
        let flow = (0..nl).map(|l| caps[l] - spare[l]).collect();
        (spare, flow)
    } else {
        warnings.push(format!(
            "saturated links: {}; returning the last routing iterate",
            saturated
                .iter()
                .map(|&l| topo.links()[l].id.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        ));
        let flow: Vec<f64> = (0..nl).map(|l| last_f[l].min(caps[l])).collect();
        let spare = (0..nl).map(|l| caps[l] - flow[l]).collect();
        (spare, flow)
    };
    let weights = (0..nl)
        .map(|l| {
            let at = spare[l].max(crate::utility::SPARE_FLOOR * caps[l]);
            spec.marginal_utility(LinkId(l), at).expect("positive spare")
        })
        .collect();
    Ok(SolveResult {
        first_weights: weights,
        spare,
        optimal_flow: flow,
        flows: None,
        trace,
        converged: dual_converged,
        dual_converged,
        iterations,
        refine_sweeps: 0,
        unique,
        warnings,
    })
}

/// `β = 0`: the spare optimum is not unique, so the averaged weights are kept and the
/// demand is routed once on shortest paths under them.
#[allow(clippy::too_many_arguments)]
fn finish_linear(
    topo: &Topology,
    spec: &UtilitySpec,
    dm: &DemandMatrix,
    avg: Averages,
    trace: Vec<TraceRow>,
    dual_converged: bool,
    iterations: usize,
    mut warnings: Vec<String>,
) -> Result<SolveResult> {
    let caps = topo.capacities();
    let w = avg.w;
    let mut fa = FlowAssignment::zero(topo);
    for t in dm.destinations() {
        let r = route_to_destination(topo, &w, t, &dm.demands_to(t))?;
        fa.set_dest(t, r.flows);
    }
    let flow = fa.aggregate();
    for (l, link) in topo.links().iter().enumerate() {
        if flow[l] > caps[l] * (1.0 + 1e-9) {
            return Err(Error::Infeasible(format!(
                "shortest-path routing puts {} on link {} of capacity {}",
                flow[l], link.id, caps[l]
            )));
        }
    }
    let spare = (0..caps.len()).map(|l| (caps[l] - flow[l]).max(0.0)).collect();
    warnings.push("beta = 0: optimum is not unique".into());
    debug_assert!(!spec.is_strict());
    Ok(SolveResult {
        first_weights: w,
        spare,
        optimal_flow: flow,
        flows: Some(fa),
        trace,
        converged: dual_converged,
        dual_converged,
        iterations,
        refine_sweeps: 0,
        unique: false,
        warnings,
    })
}
