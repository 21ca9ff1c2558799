//! One entry point per CLI subcommand, plus the run summary that makes any
//! run reproducible from its own output.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    collect_target_set, default_cmaes, default_iters, evaluate_policy, finetune_gait, identify,
    report, spring_mask_joint, AdaptedSim, EvalReport, FinetuneOptions, FinetuneResult,
    GapCostKind, IdentResult, ScenarioConfig, LBL_COLLECT_CMD,
};
use crate::error::{Error, Result};
use crate::mods::{HistNorm, ModificationInstance, ModificationSpec};
use crate::plant::{rollout, SimSetup, Workspace};
use crate::rngstream::stream;
use crate::trajdata::{Manifest, TrajectorySet, SCHEMA_VERSION};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    Simulate,
    Collect,
    Identify,
    Finetune,
    Evaluate,
    Report,
}

impl std::fmt::Display for CommandKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            CommandKind::Simulate => "simulate",
            CommandKind::Collect => "collect",
            CommandKind::Identify => "identify",
            CommandKind::Finetune => "finetune",
            CommandKind::Evaluate => "evaluate",
            CommandKind::Report => "report",
        };
        write!(f, "{s}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModChoice {
    Static,
    ActionDelta,
    ResidAct,
}

impl Default for ModChoice {
    fn default() -> Self {
        ModChoice::Static
    }
}

impl ModChoice {
    pub fn slug(self) -> &'static str {
        match self {
            ModChoice::Static => "static",
            ModChoice::ActionDelta => "action_delta",
            ModChoice::ResidAct => "resid_act",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(ModChoice::Static),
            "action_delta" => Ok(ModChoice::ActionDelta),
            "resid_act" => Ok(ModChoice::ResidAct),
            _ => Err(Error::invalid(format!(
                "unknown modification {s:?}; expected static, action_delta or resid_act"
            ))),
        }
    }

    /// Builds the modification family for a scenario. Network families on a
    /// spring scenario mask only the joint the spring is attached to; the
    /// static family always covers all three joint groups.
    pub fn to_spec(self, scenario: &ScenarioConfig) -> ModificationSpec {
        match self {
            ModChoice::Static => ModificationSpec::static_params(vec![0, 1, 2]),
            kind => {
                let joints: Vec<usize> = match spring_mask_joint(scenario) {
                    Some(j) => vec![j],
                    None => (0..scenario.model.n_hinges().min(crate::trajdata::N_JOINTS))
                        .collect(),
                };
                match kind {
                    ModChoice::ActionDelta => ModificationSpec::action_delta(joints),
                    _ => ModificationSpec::residual_actuator(joints, scenario.model.torque_limit),
                }
            }
        }
    }
}

/// Per-invocation knobs that are not part of the scenario itself.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunOptions {
    pub cost: GapCostKind,
    pub modification: ModChoice,
    /// Optimizer generations; `None` selects the per-family default.
    pub iters: Option<usize>,
    pub lambda: usize,
    pub jobs: usize,
    /// Evaluation trials; `None` selects the default of 500.
    pub n_trials: Option<usize>,
    /// Overrides the scenario seed before anything runs.
    pub seed: Option<u64>,
    /// Path to a stored identification result consumed by `finetune`.
    pub ident_result: Option<String>,
    /// Path to a stored finetune result whose gait `evaluate` should score.
    pub gait_result: Option<String>,
    /// Finetune directly on the target parameters instead of an adapted sim.
    pub on_target: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            cost: GapCostKind::Wass,
            modification: ModChoice::Static,
            iters: None,
            lambda: 0,
            jobs: 1,
            n_trials: None,
            seed: None,
            ident_result: None,
            gait_result: None,
            on_target: false,
        }
    }
}

/// Written to `report/summary.json` by every run. Feeding this file back as
/// `--config` reproduces the run (CSV and JSONL outputs byte-identically;
/// the summary itself differs only in wall time).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub version: String,
    pub command: CommandKind,
    pub master_seed: u64,
    pub config_sha256: String,
    pub invocation: Vec<String>,
    pub config: ScenarioConfig,
    pub options: RunOptions,
    pub outputs: Vec<String>,
    pub wall_time_s: f64,
}

/// Reads either a scenario config or a previous run summary. A summary also
/// returns its recorded command and options so the caller can replay it.
pub fn load_run_input(path: &Path) -> Result<(ScenarioConfig, Option<(CommandKind, RunOptions)>)> {
    let body = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::invalid(format!("config file not found: {}", path.display()))
        } else {
            Error::io(path.display().to_string(), e)
        }
    })?;
    let value: serde_json::Value = serde_json::from_str(&body).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    let parse_ctx = |e: serde_json::Error| Error::Parse {
        path: path.display().to_string(),
        line: e.line(),
        msg: e.to_string(),
    };
    if value.get("config").is_some() && value.get("command").is_some() {
        let summary: RunSummary = serde_json::from_value(value).map_err(parse_ctx)?;
        Ok((summary.config, Some((summary.command, summary.options))))
    } else {
        let cfg: ScenarioConfig = serde_json::from_value(value).map_err(parse_ctx)?;
        Ok((cfg, None))
    }
}

fn rel_path(out_dir: &Path, p: &Path) -> String {
    p.strip_prefix(out_dir).unwrap_or(p).display().to_string()
}

/// Runs one command against a resolved scenario and writes its artifacts
/// under `out_dir` (`data/`, `traces/`, `results/`, `report/`). The summary
/// lands at `report/summary.json`.
pub fn execute(
    command: CommandKind,
    mut scenario: ScenarioConfig,
    options: RunOptions,
    invocation: Vec<String>,
    out_dir: &Path,
) -> Result<RunSummary> {
    let start = std::time::Instant::now();
    if let Some(seed) = options.seed {
        scenario.seed = seed;
    }
    match command {
        CommandKind::Simulate | CommandKind::Report => scenario.validate_structure()?,
        _ => scenario.validate()?,
    }

    let mut outputs: Vec<PathBuf> = Vec::new();
    match command {
        CommandKind::Simulate => {
            let set = simulate_source(&scenario)?;
            let path = out_dir.join("data").join("rollouts.jsonl");
            set.save(&path)?;
            outputs.push(path);
        }
        CommandKind::Collect => {
            let set = collect_target_set(&scenario)?;
            let path = out_dir.join("data").join("targets.jsonl");
            set.save(&path)?;
            outputs.push(path);
        }
        CommandKind::Identify => {
            let set = collect_target_set(&scenario)?;
            let data_path = out_dir.join("data").join("targets.jsonl");
            set.save(&data_path)?;
            outputs.push(data_path);

            let spec = options.modification.to_spec(&scenario);
            let iters = options.iters.unwrap_or_else(|| default_iters(&spec));
            let mut cma = default_cmaes(&spec, scenario.seed, iters)?;
            cma.lambda = options.lambda;
            let res = identify(&spec, options.cost, &set, cma, &scenario, options.jobs)?;

            let tag = format!("ident_{}_{}", options.cost.slug(), options.modification.slug());
            let trace_path = out_dir.join("traces").join(format!("{tag}.csv"));
            report::trace_csv(&trace_path, &res.trace)?;
            outputs.push(trace_path);
            let result_path = out_dir.join("results").join(format!("{tag}.json"));
            report::save_json(&result_path, &res)?;
            outputs.push(result_path);
            outputs.extend(report::write_report(&[res], &[], out_dir)?);
        }
        CommandKind::Finetune => {
            let (label, ft) = run_finetune(&scenario, &options)?;
            let trace_path = out_dir
                .join("traces")
                .join(format!("finetune_{label}.csv"));
            report::trace_csv(&trace_path, &ft.trace)?;
            outputs.push(trace_path);
            let result_path = out_dir
                .join("results")
                .join(format!("finetune_{label}.json"));
            report::save_json(&result_path, &ft)?;
            outputs.push(result_path);
        }
        CommandKind::Evaluate => {
            let (label, gait) = match &options.gait_result {
                Some(p) => {
                    let path = Path::new(p);
                    let ft: FinetuneResult = report::load_json(path)?;
                    (ft.label.clone(), ft.gait)
                }
                None => ("default_gait".to_string(), scenario.gait),
            };
            let identity = ModificationInstance::Identity;
            let hist_norm = HistNorm::identity();
            let sim = AdaptedSim {
                model: &scenario.model,
                params: &scenario.target_params,
                modification: &identity,
                hist_norm: &hist_norm,
            };
            let n_trials = options.n_trials.unwrap_or(500);
            let rep = evaluate_policy(
                &sim,
                &gait,
                &scenario.protocol,
                n_trials,
                scenario.seed,
                options.jobs,
                &label,
            )?;
            let result_path = out_dir
                .join("results")
                .join(format!("eval_{label}.json"));
            report::save_json(&result_path, &rep)?;
            outputs.push(result_path);
            outputs.extend(report::write_report(&[], &[rep], out_dir)?);
        }
        CommandKind::Report => {
            let (idents, evals) = load_results(&out_dir.join("results"))?;
            outputs.extend(report::write_report(&idents, &evals, out_dir)?);
        }
    }

    let summary = RunSummary {
        version: env!("CARGO_PKG_VERSION").to_string(),
        command,
        master_seed: scenario.seed,
        config_sha256: report::config_sha256(&scenario)?,
        invocation,
        config: scenario,
        options,
        outputs: outputs.iter().map(|p| rel_path(out_dir, p)).collect(),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    report::save_json(&out_dir.join("report").join("summary.json"), &summary)?;
    Ok(summary)
}

/// Noiseless source-simulator rollouts under the scenario's command
/// distribution; the smoke-test counterpart of `collect`.
fn simulate_source(cfg: &ScenarioConfig) -> Result<TrajectorySet> {
    let model = &cfg.model;
    let mut ws = Workspace::new(model);
    let identity = ModificationInstance::Identity;
    let hist_norm = HistNorm::identity();
    let setup = SimSetup {
        model,
        params: &cfg.source_params,
        gait: &cfg.gait,
        modification: &identity,
        hist_norm: &hist_norm,
    };
    let commands = super::stratified_commands(
        cfg.protocol.count,
        cfg.protocol.command_max,
        &mut stream(cfg.seed, &[LBL_COLLECT_CMD]),
    );
    let mut trajectories = Vec::with_capacity(commands.len());
    for &command in &commands {
        let mut rng = stream(0, &[]);
        let out = rollout(
            &setup,
            &mut ws,
            command,
            cfg.protocol.horizon_s,
            0.0,
            &mut rng,
        )?;
        trajectories.push(out.trajectory);
    }
    let set = TrajectorySet {
        manifest: Manifest {
            schema_version: SCHEMA_VERSION,
            scenario: format!("{}_source", cfg.name),
            master_seed: cfg.seed,
            count: trajectories.len(),
            horizon_s: cfg.protocol.horizon_s,
            dt_control: model.dt_control(),
            params_hash: report::config_sha256(cfg)?,
            privileged: true,
        },
        trajectories,
    };
    set.validate()?;
    Ok(set)
}

fn run_finetune(
    scenario: &ScenarioConfig,
    options: &RunOptions,
) -> Result<(String, FinetuneResult)> {
    let opts = FinetuneOptions {
        iters: options.iters.unwrap_or(40),
        rollouts: scenario.protocol.eval_rollouts,
        jobs: options.jobs,
        seed: scenario.seed,
        lambda: options.lambda,
    };
    let identity = ModificationInstance::Identity;
    let identity_norm = HistNorm::identity();

    if options.on_target {
        let sim = AdaptedSim {
            model: &scenario.model,
            params: &scenario.target_params,
            modification: &identity,
            hist_norm: &identity_norm,
        };
        let ft = finetune_gait(&sim, &scenario.gait, &scenario.protocol, &opts, "target")?;
        return Ok(("target".into(), ft));
    }
    if let Some(p) = &options.ident_result {
        let ident: IdentResult = report::load_json(Path::new(p))?;
        let (instance, _) = ident.spec.decode(&ident.theta_hat)?;
        let hist_norm = HistNorm::from_normalizer(&ident.normalizer);
        let label = format!("adapted_{}_{}", ident.cost_kind.slug(), ident.spec.kind.slug());
        let sim = AdaptedSim {
            model: &scenario.model,
            params: &scenario.source_params,
            modification: &instance,
            hist_norm: &hist_norm,
        };
        let ft = finetune_gait(&sim, &scenario.gait, &scenario.protocol, &opts, &label)?;
        return Ok((label, ft));
    }
    let sim = AdaptedSim {
        model: &scenario.model,
        params: &scenario.source_params,
        modification: &identity,
        hist_norm: &identity_norm,
    };
    let ft = finetune_gait(&sim, &scenario.gait, &scenario.protocol, &opts, "nominal")?;
    Ok(("nominal".into(), ft))
}

/// Loads stored results by filename convention (`ident_*`, `eval_*`), in
/// sorted order so rendering is deterministic.
fn load_results(dir: &Path) -> Result<(Vec<IdentResult>, Vec<EvalReport>)> {
    let mut idents = Vec::new();
    let mut evals = Vec::new();
    let entries = match std::fs::read_dir(dir) {
        Ok(e) => e,
        Err(ref e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((idents, evals)),
        Err(e) => return Err(Error::io(dir.display().to_string(), e)),
    };
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    for path in paths {
        let name = path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        if name.starts_with("ident_") {
            idents.push(report::load_json(&path)?);
        } else if name.starts_with("eval_") {
            evals.push(report::load_json(&path)?);
        }
    }
    Ok((idents, evals))
}
