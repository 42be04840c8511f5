use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::builtin::Builtin;
use crate::error::{Error, Result};
use crate::io::{parse_topology, read_demands};
use crate::model::{DemandMatrix, Topology};
use crate::solver::SolverConfig;
use crate::spef::{DagTolerance, NemConfig};
use crate::utility::{NamedObjective, UtilitySpec};

use super::gravity::{gravity_demands, Masses};
use super::pipeline::PipelineSettings;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DemandSource {
    File { path: PathBuf },
    Gravity { out_mass: Masses, in_mass: Masses, total: f64 },
    Builtin { name: Builtin },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QKind {
    Unit,
    Capacity,
    Delay,
}

/// Per-link `q`: a rule or explicit values by link id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QSource {
    Kind(QKind),
    PerLink(BTreeMap<String, f64>),
}

impl Default for QSource {
    fn default() -> Self {
        QSource::Kind(QKind::Unit)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct UtilityConfig {
    /// Named objective; takes precedence over `beta` and `q`.
    pub objective: Option<NamedObjective>,
    pub beta: Option<f64>,
    pub q: QSource,
    /// Per-link delays by link id, used by `q = "delay"` and the `d0` objective.
    pub delays: Option<BTreeMap<String, f64>>,
}

impl UtilityConfig {
    pub fn resolve(&self, topo: &Topology) -> Result<UtilitySpec> {
        let delays = match &self.delays {
            Some(m) => Some(per_link(topo, m)?),
            None => None,
        };
        if let Some(obj) = self.objective {
            return UtilitySpec::named(topo, obj, delays.as_deref());
        }
        let beta = self.beta.unwrap_or(1.0);
        let q = match &self.q {
            QSource::Kind(QKind::Unit) => vec![1.0; topo.num_links()],
            QSource::Kind(QKind::Capacity) => topo.capacities(),
            QSource::Kind(QKind::Delay) => delays
                .ok_or_else(|| Error::Config("q = \"delay\" needs a `delays` map".into()))?,
            QSource::PerLink(m) => per_link(topo, m)?,
        };
        UtilitySpec::new(beta, q)
    }
}

fn per_link(topo: &Topology, m: &BTreeMap<String, f64>) -> Result<Vec<f64>> {
    let mut v = vec![f64::NAN; topo.num_links()];
    for (id, &x) in m {
        v[topo.link_by_id(id)?.index()] = x;
    }
    if let Some(l) = v.iter().position(|x| x.is_nan()) {
        return Err(Error::Config(format!("no value given for link {}", topo.links()[l].id)));
    }
    Ok(v)
}

/// Experiment description as read from JSON. Every field is optional so a file can be
/// layered over command-line flags with [`ExperimentConfig::overlay`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub topology: Option<PathBuf>,
    pub demands: Option<DemandSource>,
    pub utility: Option<UtilityConfig>,
    pub solver: Option<SolverConfig>,
    pub nem: Option<NemConfig>,
    pub dag_tolerance: Option<DagTolerance>,
    /// Round the first weights to integers and build DAGs with tolerance 1.
    pub integer_weights: Option<bool>,
    pub load_scales: Option<Vec<f64>>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// A fully loaded experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub topo: Topology,
    pub dm: DemandMatrix,
    pub settings: PipelineSettings,
    pub load_scales: Vec<f64>,
    pub output_dir: Option<PathBuf>,
    /// `false` for reconstructed builtin instances.
    pub authoritative: bool,
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        parse_config(&read(path)?)
    }

    /// Fields set in `top` replace those in `self`.
    pub fn overlay(self, top: ExperimentConfig) -> ExperimentConfig {
        ExperimentConfig {
            topology: top.topology.or(self.topology),
            demands: top.demands.or(self.demands),
            utility: top.utility.or(self.utility),
            solver: top.solver.or(self.solver),
            nem: top.nem.or(self.nem),
            dag_tolerance: top.dag_tolerance.or(self.dag_tolerance),
            integer_weights: top.integer_weights.or(self.integer_weights),
            load_scales: top.load_scales.or(self.load_scales),
            output_dir: top.output_dir.or(self.output_dir),
            seed: top.seed.or(self.seed),
        }
    }

    /// Loads files and fills defaults. Relative paths resolve against the working
    /// directory.
    pub fn load(&self) -> Result<Experiment> {
        let (topo, dm, authoritative) = match (&self.demands, &self.topology) {
            (Some(DemandSource::Builtin { name }), None) => {
                let (t, d) = name.instance();
                (t, d, name.authoritative())
            }
            (Some(DemandSource::Builtin { .. }), Some(_)) => {
                return Err(Error::Config(
                    "builtin instances bring their own topology; drop `topology`".into(),
                ))
            }
            (_, None) => return Err(Error::Config("no topology given".into())),
            (src, Some(path)) => {
                let topo = parse_topology(&read(path)?)?;
                let dm = match src {
                    Some(DemandSource::File { path }) => read_demands(&topo, &read(path)?)?,
                    Some(DemandSource::Gravity {
                        out_mass,
                        in_mass,
                        total,
                    }) => gravity_demands(&topo, out_mass, in_mass, *total)?,
                    Some(DemandSource::Builtin { .. }) => unreachable!("handled above"),
                    None => return Err(Error::Config("no demand source given".into())),
                };
                (topo, dm, true)
            }
        };
        let spec = self.utility.clone().unwrap_or_default().resolve(&topo)?;
        let solver = self
            .solver
            .clone()
            .unwrap_or_else(|| SolverConfig::for_spec(&spec));
        solver.validate()?;
        let integer_weights = self.integer_weights.unwrap_or(false);
        let dag_tol = self.dag_tolerance.unwrap_or(if integer_weights {
            DagTolerance::INTEGER
        } else {
            PipelineSettings::DEFAULT_DAG_TOLERANCE
        });
        let load_scales = self.load_scales.clone().unwrap_or_else(|| vec![1.0]);
        if let Some(k) = load_scales.iter().find(|k| !(k.is_finite() && **k > 0.0)) {
            return Err(Error::Config(format!("load multipliers must be positive, got {k}")));
        }
        Ok(Experiment {
            topo,
            dm,
            settings: PipelineSettings {
                spec,
                solver,
                nem: self.nem.clone().unwrap_or_default(),
                dag_tol,
                integer_weights,
                seed: self.seed.unwrap_or(0),
                balance_samples: PipelineSettings::DEFAULT_BALANCE_SAMPLES,
            },
            load_scales,
            output_dir: self.output_dir.clone(),
            authoritative,
        })
    }
}
