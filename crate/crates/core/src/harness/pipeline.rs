use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::metrics::{compute_metrics, ospf_invcap, MetricsReport};
use crate::model::{DemandMatrix, FlowAssignment, Topology};
use crate::solver::{
    round_weights, solve_first_weights, verify_balance, verify_kkt, BalanceReport, KktReport,
    SolveResult, SolverConfig,
};
use crate::spef::{
    build_ecmp_dag, build_forwarding_tables, solve_second_weights, traffic_distribution,
    DagTolerance, EcmpDag, ForwardingTable, NemConfig, SecondWeights,
};
use crate::utility::UtilitySpec;

#[derive(Debug, Clone)]
pub struct PipelineSettings {
    pub spec: UtilitySpec,
    pub solver: SolverConfig,
    pub nem: NemConfig,
    pub dag_tol: DagTolerance,
    pub integer_weights: bool,
    pub seed: u64,
    pub balance_samples: usize,
}

impl PipelineSettings {
    /// Absorbs the rounding left in first weights by the solver.
    pub const DEFAULT_DAG_TOLERANCE: DagTolerance = DagTolerance { abs: 1e-9, rel: 1e-8 };
    pub const DEFAULT_BALANCE_SAMPLES: usize = 20;

    pub fn new(spec: UtilitySpec) -> Self {
        PipelineSettings {
            solver: SolverConfig::for_spec(&spec),
            spec,
            nem: NemConfig::default(),
            dag_tol: Self::DEFAULT_DAG_TOLERANCE,
            integer_weights: false,
            seed: 0,
            balance_samples: Self::DEFAULT_BALANCE_SAMPLES,
        }
    }
}

/// Second weights, tables and realized flows for given first weights and targets.
#[derive(Debug, Clone)]
pub struct SplitRun {
    pub dag_weights: Vec<f64>,
    pub dag: EcmpDag,
    pub second: SecondWeights,
    pub tables: ForwardingTable,
    pub flows: FlowAssignment,
    pub metrics: MetricsReport,
    /// `max |f - f*|` of the realized flows.
    pub realization_error: f64,
}

#[derive(Debug, Clone)]
pub struct OspfRun {
    pub dag: EcmpDag,
    pub tables: ForwardingTable,
    pub flows: FlowAssignment,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub solve: SolveResult,
    pub rounded: Option<Vec<u64>>,
    pub split: SplitRun,
    pub ospf: OspfRun,
    pub kkt: Option<KktReport>,
    pub balance: Option<BalanceReport>,
}

impl PipelineRun {
    pub fn converged(&self) -> bool {
        self.solve.converged && self.split.second.converged
    }
}

pub fn run_split(
    topo: &Topology,
    dm: &DemandMatrix,
    first_weights: &[f64],
    target: &[f64],
    dag_tol: DagTolerance,
    nem: &NemConfig,
) -> Result<SplitRun> {
    let dag = build_ecmp_dag(topo, first_weights, &dm.destinations(), dag_tol)
        .map_err(|e| e.in_stage("build_ecmp_dag"))?;
    let second = solve_second_weights(topo, dm, &dag, target, nem)
        .map_err(|e| e.in_stage("solve_second_weights"))?;
    let tables = build_forwarding_tables(topo, &dag, Some(&second.v));
    let flows = traffic_distribution(topo, dm, &dag, &second.v)
        .map_err(|e| e.in_stage("traffic_distribution"))?;
    let agg = flows.aggregate();
    let realization_error = agg
        .iter()
        .zip(target)
        .map(|(f, t)| (f - t).abs())
        .fold(0.0, f64::max);
    let metrics = compute_metrics(topo, dm, &flows, Some(&dag)).map_err(|e| e.in_stage("compute_metrics"))?;
    Ok(SplitRun {
        dag_weights: first_weights.to_vec(),
        dag,
        second,
        tables,
        flows,
        metrics,
        realization_error,
    })
}

pub fn run_ospf(topo: &Topology, dm: &DemandMatrix) -> Result<OspfRun> {
    let (flows, dag) = ospf_invcap(topo, dm, DagTolerance::EXACT).map_err(|e| e.in_stage("ospf_invcap"))?;
    let tables = build_forwarding_tables(topo, &dag, None);
    let metrics = compute_metrics(topo, dm, &flows, Some(&dag)).map_err(|e| e.in_stage("compute_metrics"))?;
    Ok(OspfRun {
        dag,
        tables,
        flows,
        metrics,
    })
}

/// First weights, then second weights and tables, then the OSPF baseline.
pub fn run_pipeline(topo: &Topology, dm: &DemandMatrix, s: &PipelineSettings) -> Result<PipelineRun> {
    run_pipeline_to(topo, dm, s, None)
}

/// Like [`run_pipeline`], writing each artifact into `out` as soon as its stage
/// finishes. On failure the artifacts written so far stay in place and `summary.json`
/// records the error.
pub fn run_pipeline_to(
    topo: &Topology,
    dm: &DemandMatrix,
    s: &PipelineSettings,
    out: Option<&Path>,
) -> Result<PipelineRun> {
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
    }
    let result = stages(topo, dm, s, out);
    if let (Some(dir), Err(e)) = (out, &result) {
        let summary = json!({
            "status": "error",
            "error": e.to_string(),
        });
        write(dir, "summary.json", &serde_json::to_string_pretty(&summary)?)?;
    }
    result
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    std::fs::write(dir.join(name), text)?;
    Ok(())
}

fn stages(
    topo: &Topology,
    dm: &DemandMatrix,
    s: &PipelineSettings,
    out: Option<&Path>,
) -> Result<PipelineRun> {
    let solve = solve_first_weights(topo, dm, &s.spec, &s.solver)
        .map_err(|e| e.in_stage("solve_first_weights"))?;
    if let Some(dir) = out {
        write(dir, "trace_alg1.csv", &solve.trace_csv()?)?;
    }
    let rounded = s
        .integer_weights
        .then(|| round_weights(&solve.first_weights, &solve.spare));
    let dag_weights: Vec<f64> = match &rounded {
        Some(r) => r.iter().map(|&x| x as f64).collect(),
        None => solve.first_weights.clone(),
    };

    let split = run_split(topo, dm, &dag_weights, &solve.optimal_flow, s.dag_tol, &s.nem);
    if let (Some(dir), Err(_)) = (out, &split) {
        write(dir, "weights.json", &weights_json(topo, &solve, rounded.as_deref(), None)?)?;
    }
    let split = split?;
    let kkt = solve.flows.as_ref().map(|fa| {
        verify_kkt(
            topo,
            dm,
            &s.spec,
            &solve.first_weights,
            &solve.spare,
            fa,
            1e-9 * topo.max_capacity(),
        )
    });
    let balance = match &solve.flows {
        Some(fa) if s.spec.is_strict() && solve.unique && s.balance_samples > 0 => {
            verify_balance(topo, dm, &s.spec, fa, s.balance_samples, s.seed).ok()
        }
        _ => None,
    };
    if let Some(dir) = out {
        write(dir, "weights.json", &weights_json(topo, &solve, rounded.as_deref(), Some(&split.second.v))?)?;
        write(dir, "trace_alg2.csv", &split.second.trace_csv()?)?;
        write(dir, "spef_tables.json", &split.tables.to_json()?)?;
        write(dir, "metrics_spef.json", &split.metrics.to_json()?)?;
        write(dir, "sorted_util_spef.csv", &split.metrics.sorted_csv()?)?;
    }

    let ospf = run_ospf(topo, dm)?;
    if let Some(dir) = out {
        write(dir, "metrics_ospf.json", &ospf.metrics.to_json()?)?;
        write(dir, "sorted_util_ospf.csv", &ospf.metrics.sorted_csv()?)?;
    }
    let run = PipelineRun {
        solve,
        rounded,
        split,
        ospf,
        kkt,
        balance,
    };
    if let Some(dir) = out {
        write(dir, "summary.json", &summary_json(topo, dm, s, &run)?)?;
    }
    Ok(run)
}

/// Weight document shared by `solve`, `split` and `eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsFile {
    pub first: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounded: Option<BTreeMap<String, u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub second: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spare: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_loads: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
}

pub fn parse_weights(text: &str) -> Result<WeightsFile> {
    let w: WeightsFile = serde_json::from_str(text)?;
    for (id, x) in w
        .first
        .iter()
        .chain(w.second.iter().flatten())
        .chain(w.spare.iter().flatten())
        .chain(w.target_loads.iter().flatten())
    {
        if !x.is_finite() {
            return Err(Error::Domain(format!("non-finite value {x} for link {id}")));
        }
    }
    Ok(w)
}

fn keyed(topo: &Topology, v: &[f64]) -> BTreeMap<String, f64> {
    topo.links().iter().map(|l| l.id.clone()).zip(v.iter().copied()).collect()
}

impl WeightsFile {
    /// Values of `map` in topology link order; every link must be present.
    pub fn vector(topo: &Topology, map: &BTreeMap<String, f64>) -> Result<Vec<f64>> {
        let mut v = vec![f64::NAN; topo.num_links()];
        for (id, &x) in map {
            v[topo.link_by_id(id)?.index()] = x;
        }
        if let Some(l) = v.iter().position(|x| x.is_nan()) {
            return Err(Error::UnknownLink(format!("{} missing from weights", topo.links()[l].id)));
        }
        Ok(v)
    }

    pub fn from_solve(topo: &Topology, solve: &SolveResult, rounded: Option<&[u64]>, second: Option<&[f64]>) -> Self {
        WeightsFile {
            first: keyed(topo, &solve.first_weights),
            rounded: rounded.map(|r| topo.links().iter().map(|l| l.id.clone()).zip(r.iter().copied()).collect()),
            second: second.map(|v| keyed(topo, v)),
            spare: Some(keyed(topo, &solve.spare)),
            target_loads: Some(keyed(topo, &solve.optimal_flow)),
            converged: Some(solve.converged),
        }
    }
}

fn weights_json(topo: &Topology, solve: &SolveResult, rounded: Option<&[u64]>, second: Option<&[f64]>) -> Result<String> {
    Ok(serde_json::to_string_pretty(&WeightsFile::from_solve(topo, solve, rounded, second))?)
}

fn finite(x: f64) -> serde_json::Value {
    if x.is_finite() {
        json!(x)
    } else {
        serde_json::Value::Null
    }
}

pub fn summary_json(topo: &Topology, dm: &DemandMatrix, s: &PipelineSettings, run: &PipelineRun) -> Result<String> {
    let status = if run.converged() { "ok" } else { "nonconverged" };
    let doc = json!({
        "status": status,
        "instance": {
            "nodes": topo.num_nodes(),
            "links": topo.num_links(),
            "demand_pairs": dm.positive_pairs().count(),
            "total_demand": dm.total(),
            "network_load": run.split.metrics.network_load,
        },
        "utility": { "beta": s.spec.beta(), "q": s.spec.q_values() },
        "first_weights": {
            "converged": run.solve.converged,
            "dual_converged": run.solve.dual_converged,
            "iterations": run.solve.iterations,
            "refine_sweeps": run.solve.refine_sweeps,
            "unique": run.solve.unique,
            "integer": run.rounded.is_some(),
            "warnings": run.solve.warnings,
        },
        "second_weights": {
            "converged": run.split.second.converged,
            "iterations": run.split.second.iterations,
            "max_abs_error": run.split.second.max_abs_error,
        },
        "dag_tolerance": s.dag_tol,
        "realization_error": run.split.realization_error,
        "target_utilization": keyed(topo, &run.solve.utilizations(topo)),
        "spef": {
            "mlu": run.split.metrics.mlu,
            "normalized_utility": finite(run.split.metrics.normalized_utility),
            "utilization": run.split.metrics.utilization,
        },
        "ospf": {
            "mlu": run.ospf.metrics.mlu,
            "normalized_utility": finite(run.ospf.metrics.normalized_utility),
            "utilization": run.ospf.metrics.utilization,
        },
        "kkt": run.kkt,
        "balance": run.balance,
    });
    Ok(serde_json::to_string_pretty(&doc)?)
}
