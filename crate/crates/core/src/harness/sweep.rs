use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{DemandMatrix, Topology};
use crate::solver::solve_first_weights;

use super::pipeline::{run_pipeline, PipelineSettings};

/// Every entry multiplied by `k > 0`.
pub fn scale_demands(dm: &DemandMatrix, k: f64) -> Result<DemandMatrix> {
    dm.scaled(k)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub scale: f64,
    pub network_load: f64,
    pub spef_mlu: Option<f64>,
    /// `None` when the point failed or the utility is `-inf`.
    pub spef_utility: Option<f64>,
    pub ospf_mlu: Option<f64>,
    pub ospf_utility: Option<f64>,
    pub converged: bool,
    pub error: Option<String>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Runs the pipeline at every multiplier, in parallel; results keep the input order.
/// Failures at a point (for example infeasible demand) are recorded, not raised.
pub fn run_sweep(topo: &Topology, dm: &DemandMatrix, s: &PipelineSettings, scales: &[f64]) -> Vec<SweepPoint> {
    scales
        .par_iter()
        .map(|&k| {
            let base = SweepPoint {
                scale: k,
                network_load: dm.total() * k / topo.total_capacity(),
                spef_mlu: None,
                spef_utility: None,
                ospf_mlu: None,
                ospf_utility: None,
                converged: false,
                error: None,
            };
            let scaled = match scale_demands(dm, k) {
                Ok(d) => d,
                Err(e) => return SweepPoint { error: Some(e.to_string()), ..base },
            };
            let ospf = super::pipeline::run_ospf(topo, &scaled).ok();
            let (ospf_mlu, ospf_utility) = match &ospf {
                Some(o) => (Some(o.metrics.mlu), finite(o.metrics.normalized_utility)),
                None => (None, None),
            };
            match run_pipeline(topo, &scaled, s) {
                Ok(run) => SweepPoint {
                    spef_mlu: Some(run.split.metrics.mlu),
                    spef_utility: finite(run.split.metrics.normalized_utility),
                    ospf_mlu,
                    ospf_utility,
                    converged: run.converged(),
                    ..base
                },
                Err(e) => SweepPoint {
                    ospf_mlu,
                    ospf_utility,
                    error: Some(e.to_string()),
                    ..base
                },
            }
        })
        .collect()
}

pub fn sweep_csv(points: &[SweepPoint]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "scale",
        "network_load",
        "spef_mlu",
        "spef_utility",
        "ospf_mlu",
        "ospf_utility",
        "converged",
    ])?;
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for p in points {
        w.write_record([
            p.scale.to_string(),
            p.network_load.to_string(),
            opt(p.spef_mlu),
            opt(p.spef_utility),
            opt(p.ospf_mlu),
            opt(p.ospf_utility),
            p.converged.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
}

/// Target MLU of the optimal distribution at multiplier `k`; infinite when infeasible.
fn target_mlu(topo: &Topology, dm: &DemandMatrix, s: &PipelineSettings, k: f64) -> Result<f64> {
    let scaled = dm.scaled(k)?;
    match solve_first_weights(topo, &scaled, &s.spec, &s.solver) {
        Ok(r) => Ok(r.utilizations(topo).into_iter().fold(0.0, f64::max)),
        Err(e) if matches!(e.root(), Error::Infeasible(_)) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// Bisects for a multiplier whose optimal MLU lies in `[lo_mlu, 1)`.
pub fn find_operating_point(
    topo: &Topology,
    dm: &DemandMatrix,
    s: &PipelineSettings,
    lo_mlu: f64,
) -> Result<(f64, f64)> {
    if dm.is_zero() {
        return Err(Error::Config("cannot scale an all-zero demand matrix".into()));
    }
    let in_band = |m: f64| m >= lo_mlu && m < 1.0;
    let mut lo = 0.0;
    let mut hi = 1.0;
    loop {
        let m = target_mlu(topo, dm, s, hi)?;
        if in_band(m) {
            return Ok((hi, m));
        }
        if m >= 1.0 {
            break;
        }
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Config("load never saturates the network".into()));
        }
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let m = target_mlu(topo, dm, s, mid)?;
        if in_band(m) {
            return Ok((mid, m));
        }
        if m >= 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Err(Error::Config("bisection did not reach the target utilization band".into()))
}
