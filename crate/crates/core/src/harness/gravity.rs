use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DemandMatrix, Topology};

/// Node masses for the gravity model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Masses {
    /// Every node weighs 1.
    Uniform,
    /// Outgoing (resp. incoming) link capacity of each node.
    Capacity,
    /// Explicit masses by node name; unlisted nodes weigh 0.
    Explicit(BTreeMap<String, f64>),
}

impl Masses {
    fn resolve(&self, topo: &Topology, outgoing: bool) -> Result<Vec<f64>> {
        let v = match self {
            Masses::Uniform => vec![1.0; topo.num_nodes()],
            Masses::Capacity => topo
                .node_ids()
                .map(|n| {
                    let ls = if outgoing { topo.out_links(n) } else { topo.in_links(n) };
                    ls.iter().map(|&l| topo.capacity(l)).sum()
                })
                .collect(),
            Masses::Explicit(m) => {
                let mut v = vec![0.0; topo.num_nodes()];
                for (name, &x) in m {
                    if !(x.is_finite() && x >= 0.0) {
                        return Err(Error::Config(format!("mass of {name} must be >= 0, got {x}")));
                    }
                    v[topo.node(name)?.index()] = x;
                }
                v
            }
        };
        Ok(v)
    }
}

/// `d_st = total * (out_s / sum out) * (in_t / sum in)` for `s != t`, rescaled so the
/// off-diagonal entries sum to `total`.
pub fn gravity_demands(topo: &Topology, out_mass: &Masses, in_mass: &Masses, total: f64) -> Result<DemandMatrix> {
    if !(total.is_finite() && total >= 0.0) {
        return Err(Error::Config(format!("total demand must be >= 0, got {total}")));
    }
    let out = out_mass.resolve(topo, true)?;
    let inn = in_mass.resolve(topo, false)?;
    let (so, si): (f64, f64) = (out.iter().sum(), inn.iter().sum());
    if !(so > 0.0 && si > 0.0) {
        return Err(Error::Config("gravity masses must not all be zero".into()));
    }
    let mut raw = Vec::new();
    let mut sum = 0.0;
    for s in topo.node_ids() {
        for t in topo.node_ids() {
            if s != t {
                let x = (out[s.index()] / so) * (inn[t.index()] / si);
                if x > 0.0 {
                    raw.push(((s, t), x));
                    sum += x;
                }
            }
        }
    }
    if !(sum > 0.0) {
        return Err(Error::Config("gravity masses produce no off-diagonal demand".into()));
    }
    DemandMatrix::new(raw.into_iter().map(|(p, x)| (p, total * x / sum)))
}
