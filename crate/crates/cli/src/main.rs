use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use spef_core::builtin::Builtin;
use spef_core::harness::{
    find_operating_point, parse_weights, run_ospf, run_pipeline_to, run_split, run_sweep,
    sweep_csv, DemandSource, Experiment, ExperimentConfig, Masses, QKind, QSource, UtilityConfig,
    WeightsFile,
};
use spef_core::metrics::compute_metrics;
use spef_core::solver::{round_weights, solve_first_weights, StepSchedule};
use spef_core::spef::{build_ecmp_dag, traffic_distribution, DagTolerance, NemConfig};
use spef_core::{Error, NamedObjective};

const EXIT_NONCONVERGED: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_CONFIG: u8 = 4;

#[derive(Parser)]
#[command(name = "spef", version, about = "Link-weight traffic engineering with exponential ECMP splits")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute first link weights and the optimal traffic distribution.
    Solve(InstanceArgs),
    /// Compute second weights, forwarding tables and realized flows from a weights file.
    Split {
        #[command(flatten)]
        inst: InstanceArgs,
        /// weights.json written by `solve`.
        #[arg(long)]
        weights: PathBuf,
    },
    /// Report metrics for OSPF and, given a weights file with second weights, SPEF.
    Eval {
        #[command(flatten)]
        inst: InstanceArgs,
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Run the pipeline at several demand multipliers.
    Sweep {
        #[command(flatten)]
        inst: InstanceArgs,
        /// Comma-separated multipliers.
        #[arg(long, value_delimiter = ',')]
        scales: Option<Vec<f64>>,
        /// Instead of sweeping, bisect for a multiplier with optimal MLU in [0.95, 1).
        #[arg(long)]
        find_operating_point: bool,
    },
    /// Run the full pipeline on a builtin instance.
    Demo {
        #[command(flatten)]
        inst: InstanceArgs,
    },
    /// Run the full pipeline.
    Run(InstanceArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum BuiltinArg {
    Fig1,
    Toy,
}

#[derive(Clone, Copy, ValueEnum)]
enum MassArg {
    Uniform,
    Capacity,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Proportional,
    C2,
    D0,
}

#[derive(Clone, Copy, ValueEnum)]
enum QArg {
    Unit,
    Capacity,
}

#[derive(Clone, Copy, ValueEnum)]
enum StepArg {
    Constant,
    Diminishing,
    SpareScaled,
}

#[derive(Args, Clone)]
struct InstanceArgs {
    /// JSON experiment config; its fields override the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Topology JSON.
    #[arg(long)]
    topology: Option<PathBuf>,
    /// Demand CSV (`src,dst,demand`).
    #[arg(long, conflicts_with_all = ["builtin", "gravity"])]
    demands: Option<PathBuf>,
    /// Builtin instance (brings its own topology).
    #[arg(long)]
    builtin: Option<BuiltinArg>,
    /// Gravity-model demands with the given node masses.
    #[arg(long, requires = "total")]
    gravity: Option<MassArg>,
    /// Total demand of the gravity model.
    #[arg(long)]
    total: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, conflicts_with_all = ["beta", "q"])]
    objective: Option<ObjectiveArg>,
    #[arg(long)]
    q: Option<QArg>,
    #[arg(long)]
    step: Option<StepArg>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    gap_tol: Option<f64>,
    /// Skip the path-flow refinement of the first weights.
    #[arg(long)]
    no_refine: bool,
    #[arg(long)]
    nem_epsilon: Option<f64>,
    #[arg(long)]
    nem_gamma: Option<f64>,
    #[arg(long)]
    nem_max_iters: Option<usize>,
    /// Absolute path-equality tolerance of the shortest-path DAGs.
    #[arg(long)]
    dag_tol: Option<f64>,
    /// Round first weights to integers and use DAG tolerance 1.
    #[arg(long)]
    integer_weights: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl InstanceArgs {
    fn flags_config(&self, default_builtin: Option<Builtin>) -> ExperimentConfig {
        let demands = if let Some(p) = &self.demands {
            Some(DemandSource::File { path: p.clone() })
        } else if let Some(b) = self.builtin {
            Some(DemandSource::Builtin {
                name: match b {
                    BuiltinArg::Fig1 => Builtin::Fig1,
                    BuiltinArg::Toy => Builtin::Toy,
                },
            })
        } else if let Some(m) = self.gravity {
            let masses = match m {
                MassArg::Uniform => Masses::Uniform,
                MassArg::Capacity => Masses::Capacity,
            };
            Some(DemandSource::Gravity {
                out_mass: masses.clone(),
                in_mass: masses,
                total: self.total.unwrap_or(1.0),
            })
        } else if self.topology.is_none() {
            default_builtin.map(|name| DemandSource::Builtin { name })
        } else {
            None
        };
        let utility = if self.beta.is_some() || self.objective.is_some() || self.q.is_some() {
            Some(UtilityConfig {
                objective: self.objective.map(|o| match o {
                    ObjectiveArg::Proportional => NamedObjective::Proportional,
                    ObjectiveArg::C2 => NamedObjective::C2,
                    ObjectiveArg::D0 => NamedObjective::D0,
                }),
                beta: self.beta,
                q: match self.q {
                    Some(QArg::Capacity) => QSource::Kind(QKind::Capacity),
                    _ => QSource::Kind(QKind::Unit),
                },
                delays: None,
            })
        } else {
            None
        };
        let nem = if self.nem_epsilon.is_some() || self.nem_gamma.is_some() || self.nem_max_iters.is_some() {
            let d = NemConfig::default();
            Some(NemConfig {
                gamma: self.nem_gamma,
                epsilon: self.nem_epsilon,
                max_iters: self.nem_max_iters.unwrap_or(d.max_iters),
            })
        } else {
            None
        };
        ExperimentConfig {
            topology: self.topology.clone(),
            demands,
            utility,
            solver: None,
            nem,
            dag_tolerance: self.dag_tol.map(DagTolerance::absolute),
            integer_weights: self.integer_weights.then_some(true),
            load_scales: None,
            output_dir: self.out.clone(),
            seed: self.seed,
        }
    }

    /// Flags, then the config file on top, then solver flags where the file is silent.
    fn load(&self, default_builtin: Option<Builtin>) -> Result<Experiment, Error> {
        let file = match &self.config {
            Some(p) => Some(ExperimentConfig::from_file(p)?),
            None => None,
        };
        let file_has_solver = file.as_ref().is_some_and(|f| f.solver.is_some());
        let merged = match file {
            Some(f) => self.flags_config(default_builtin).overlay(f),
            None => self.flags_config(default_builtin),
        };
        let mut exp = merged.load()?;
        if !file_has_solver {
            let s = &mut exp.settings.solver;
            if let Some(step) = self.step {
                s.step_schedule = match step {
                    StepArg::Constant => StepSchedule::Constant(self.gamma),
                    StepArg::Diminishing => StepSchedule::Diminishing(self.gamma),
                    StepArg::SpareScaled => StepSchedule::SpareScaled(self.gamma),
                };
            } else if let Some(g) = self.gamma {
                s.step_schedule = match s.step_schedule {
                    StepSchedule::Constant(_) => StepSchedule::Constant(Some(g)),
                    StepSchedule::Diminishing(_) => StepSchedule::Diminishing(Some(g)),
                    StepSchedule::SpareScaled(_) => StepSchedule::SpareScaled(Some(g)),
                };
            }
            if let Some(n) = self.max_iters {
                s.max_iters = n;
            }
            if let Some(t) = self.gap_tol {
                s.gap_tol = t;
            }
            if self.no_refine {
                s.refine = false;
            }
            s.validate()?;
        }
        Ok(exp)
    }
}

fn exit_for(e: &Error) -> u8 {
    match e.root() {
        Error::Infeasible(_) => EXIT_INFEASIBLE,
        _ => EXIT_CONFIG,
    }
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<(), Error> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), text)?;
    Ok(())
}

fn status(converged: bool) -> u8 {
    if converged {
        0
    } else {
        EXIT_NONCONVERGED
    }
}

fn solve(inst: &InstanceArgs) -> Result<u8, Error> {
    let exp = inst.load(None)?;
    let s = &exp.settings;
    let res = solve_first_weights(&exp.topo, &exp.dm, &s.spec, &s.solver)?;
    for w in &res.warnings {
        log::warn!("{w}");
    }
    let rounded = s.integer_weights.then(|| round_weights(&res.first_weights, &res.spare));
    let doc = serde_json::to_string_pretty(&WeightsFile::from_solve(&exp.topo, &res, rounded.as_deref(), None))?;
    match &exp.output_dir {
        Some(dir) => {
            write_file(dir, "weights.json", &doc)?;
            write_file(dir, "trace_alg1.csv", &res.trace_csv()?)?;
        }
        None => println!("{doc}"),
    }
    Ok(status(res.converged))
}

fn split(inst: &InstanceArgs, weights: &Path) -> Result<u8, Error> {
    let exp = inst.load(None)?;
    let wf = parse_weights(&std::fs::read_to_string(weights)?)?;
    let first = match (&wf.rounded, exp.settings.integer_weights) {
        (Some(r), true) => exp
            .topo
            .links()
            .iter()
            .map(|l| {
                r.get(&l.id)
                    .map(|&x| x as f64)
                    .ok_or_else(|| Error::UnknownLink(format!("{} missing from rounded weights", l.id)))
            })
            .collect::<Result<Vec<_>, _>>()?,
        _ => WeightsFile::vector(&exp.topo, &wf.first)?,
    };
    let target = wf
        .target_loads
        .as_ref()
        .ok_or_else(|| Error::Config("weights file has no target_loads".into()))?;
    let target = WeightsFile::vector(&exp.topo, target)?;
    let run = run_split(&exp.topo, &exp.dm, &first, &target, exp.settings.dag_tol, &exp.settings.nem)?;
    let mut out = wf.clone();
    out.second = Some(
        exp.topo
            .links()
            .iter()
            .map(|l| l.id.clone())
            .zip(run.second.v.iter().copied())
            .collect(),
    );
    match &exp.output_dir {
        Some(dir) => {
            write_file(dir, "weights.json", &serde_json::to_string_pretty(&out)?)?;
            write_file(dir, "spef_tables.json", &run.tables.to_json()?)?;
            write_file(dir, "trace_alg2.csv", &run.second.trace_csv()?)?;
            write_file(dir, "metrics_spef.json", &run.metrics.to_json()?)?;
            write_file(dir, "sorted_util_spef.csv", &run.metrics.sorted_csv()?)?;
        }
        None => println!("{}", run.tables.to_json()?),
    }
    Ok(status(run.second.converged))
}

fn eval(inst: &InstanceArgs, weights: Option<&Path>) -> Result<u8, Error> {
    let exp = inst.load(None)?;
    let ospf = run_ospf(&exp.topo, &exp.dm)?;
    let mut doc = serde_json::json!({ "ospf": ospf.metrics });
    if let Some(p) = weights {
        let wf = parse_weights(&std::fs::read_to_string(p)?)?;
        let first = WeightsFile::vector(&exp.topo, &wf.first)?;
        let second = match &wf.second {
            Some(m) => WeightsFile::vector(&exp.topo, m)?,
            None => vec![0.0; exp.topo.num_links()],
        };
        let dag = build_ecmp_dag(&exp.topo, &first, &exp.dm.destinations(), exp.settings.dag_tol)?;
        let fa = traffic_distribution(&exp.topo, &exp.dm, &dag, &second)?;
        doc["spef"] = serde_json::to_value(compute_metrics(&exp.topo, &exp.dm, &fa, Some(&dag))?)?;
    }
    let text = serde_json::to_string_pretty(&doc)?;
    match &exp.output_dir {
        Some(dir) => {
            write_file(dir, "metrics_ospf.json", &ospf.metrics.to_json()?)?;
            write_file(dir, "sorted_util_ospf.csv", &ospf.metrics.sorted_csv()?)?;
            write_file(dir, "eval.json", &text)?;
        }
        None => println!("{text}"),
    }
    Ok(0)
}

fn sweep(inst: &InstanceArgs, scales: Option<&[f64]>, find: bool) -> Result<u8, Error> {
    let exp = inst.load(None)?;
    if find {
        let (k, mlu) = find_operating_point(&exp.topo, &exp.dm, &exp.settings, 0.95)?;
        println!("{}", serde_json::json!({ "scale": k, "mlu": mlu }));
        return Ok(0);
    }
    let scales = scales.map(<[f64]>::to_vec).unwrap_or(exp.load_scales.clone());
    if let Some(k) = scales.iter().find(|k| !(k.is_finite() && **k > 0.0)) {
        return Err(Error::Config(format!("load multipliers must be positive, got {k}")));
    }
    let points = run_sweep(&exp.topo, &exp.dm, &exp.settings, &scales);
    let csv = sweep_csv(&points)?;
    match &exp.output_dir {
        Some(dir) => write_file(dir, "sweep.csv", &csv)?,
        None => print!("{csv}"),
    }
    let all_ok = points.iter().all(|p| p.converged || p.error.is_some());
    Ok(status(all_ok))
}

fn run(inst: &InstanceArgs, default_builtin: Option<Builtin>) -> Result<u8, Error> {
    let exp = inst.load(default_builtin)?;
    if !exp.authoritative {
        log::warn!("instance is a best-effort reconstruction, not a reference instance");
    }
    let run = run_pipeline_to(&exp.topo, &exp.dm, &exp.settings, exp.output_dir.as_deref())?;
    for w in &run.solve.warnings {
        log::warn!("{w}");
    }
    if exp.output_dir.is_none() {
        println!(
            "{}",
            spef_core::harness::summary_json(&exp.topo, &exp.dm, &exp.settings, &run)?
        );
    }
    Ok(status(run.converged()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match &cli.command {
        Command::Solve(inst) => solve(inst),
        Command::Split { inst, weights } => split(inst, weights),
        Command::Eval { inst, weights } => eval(inst, weights.as_deref()),
        Command::Sweep {
            inst,
            scales,
            find_operating_point,
        } => sweep(inst, scales.as_deref(), *find_operating_point),
        Command::Demo { inst } => run(inst, Some(Builtin::Fig1)),
        Command::Run(inst) => run(inst, None),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}
