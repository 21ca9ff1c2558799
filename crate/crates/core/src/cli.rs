//! Single-binary command-line front end. Thin orchestration over
//! [`crate::pipeline::execute`]: parse arguments, load the config (or a
//! previous run's summary for an exact replay), and map errors onto exit
//! codes. Exit 0 on success, 1 for bad input, 2 for runtime failures.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::pipeline::{self, CommandKind, GapCostKind, ModChoice, RunOptions};

#[derive(Parser)]
#[command(
    name = "simgap",
    version,
    about = "Simulator gap measurement, identification and gait adaptation for a planar biped"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario config JSON, or a previous run's summary.json to replay.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for candidate and trial evaluation (0 = all cores).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Roll the source simulator and store the trajectory set.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Generate the noisy target data set.
    Collect {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Fit modification parameters against the target data.
    Identify {
        #[command(flatten)]
        common: CommonArgs,
        /// Gap cost: wass, match_s:H or match_o.
        #[arg(long, default_value = "wass")]
        cost: String,
        /// Modification family: static, action_delta or resid_act.
        #[arg(long = "mod", default_value = "static")]
        modification: String,
        /// Optimizer generations (default 200 static, 1500 networks).
        #[arg(long)]
        iters: Option<usize>,
        /// Population size (0 = dimension default).
        #[arg(long, default_value_t = 0)]
        lambda: usize,
    },
    /// Fine-tune the gait in a nominal, adapted, or target simulator.
    Finetune {
        #[command(flatten)]
        common: CommonArgs,
        /// Stored identification result defining the adapted simulator.
        #[arg(long)]
        ident: Option<PathBuf>,
        /// Tune directly on the target parameters instead.
        #[arg(long, conflicts_with = "ident")]
        on_target: bool,
        /// Optimizer generations.
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long, default_value_t = 0)]
        lambda: usize,
    },
    /// Score a gait on the target simulator with confidence intervals.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        /// Stored finetune result whose gait to score (default: config gait).
        #[arg(long)]
        gait: Option<PathBuf>,
        /// Evaluation episodes.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Re-render the report tables from stored results.
    Report {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the invariant suite and print one line per property.
    Selftest,
}

/// Entry point; returns the process exit code.
pub fn run(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = i32::from(e.use_stderr());
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli, argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

fn dispatch(cli: Cli, argv: Vec<String>) -> Result<()> {
    if let Command::Selftest = cli.command {
        return selftest();
    }
    let (kind, common, overrides) = decompose(cli.command)?;
    let (scenario, stored) = pipeline::load_run_input(&common.config)?;

    // Replaying a summary reuses its recorded options verbatim; thread count
    // and an explicit seed are the only knobs callers may change, and
    // neither alters the written artifacts (the map is order-preserving).
    let mut options = match stored {
        Some((stored_kind, stored_options)) => {
            if stored_kind != kind {
                return Err(Error::invalid(format!(
                    "summary records a {stored_kind} run; rerun it with that subcommand"
                )));
            }
            stored_options
        }
        None => overrides,
    };
    options.jobs = effective_jobs(common.jobs);
    if common.seed.is_some() {
        options.seed = common.seed;
    }

    pipeline::execute(kind, scenario, options, argv, &common.out)?;
    Ok(())
}

fn effective_jobs(requested: usize) -> usize {
    if requested == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        requested
    }
}

fn decompose(command: Command) -> Result<(CommandKind, CommonArgs, RunOptions)> {
    let mut options = RunOptions::default();
    let (kind, common) = match command {
        Command::Simulate { common } => (CommandKind::Simulate, common),
        Command::Collect { common } => (CommandKind::Collect, common),
        Command::Identify {
            common,
            cost,
            modification,
            iters,
            lambda,
        } => {
            options.cost = GapCostKind::parse(&cost)?;
            options.modification = ModChoice::parse(&modification)?;
            options.iters = iters;
            options.lambda = lambda;
            (CommandKind::Identify, common)
        }
        Command::Finetune {
            common,
            ident,
            on_target,
            iters,
            lambda,
        } => {
            options.ident_result = ident.map(|p| p.display().to_string());
            options.on_target = on_target;
            options.iters = iters;
            options.lambda = lambda;
            (CommandKind::Finetune, common)
        }
        Command::Evaluate {
            common,
            gait,
            trials,
        } => {
            options.gait_result = gait.map(|p| p.display().to_string());
            options.n_trials = trials;
            (CommandKind::Evaluate, common)
        }
        Command::Report { common } => (CommandKind::Report, common),
        Command::Selftest => unreachable!("handled by the caller"),
    };
    Ok((kind, common, options))
}

fn selftest() -> Result<()> {
    let results = pipeline::selftest::run_all();
    let mut failures = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(()) => println!("PASS {name}"),
            Err(e) => {
                failures += 1;
                println!("FAIL {name}: {e}");
            }
        }
    }
    if failures > 0 {
        return Err(Error::invalid(format!(
            "{failures} of {} selftest properties failed",
            results.len()
        )));
    }
    println!("all {} properties passed", results.len());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_flags_exit_one() {
        let code = run(vec!["simgap".into(), "identify".into(), "--bogus".into()]);
        assert_eq!(code, 1);
    }

    #[test]
    fn missing_config_exits_one() {
        let code = run(vec![
            "simgap".into(),
            "collect".into(),
            "--config".into(),
            "/does/not/exist.json".into(),
        ]);
        assert_eq!(code, 1);
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(run(vec!["simgap".into(), "--help".into()]), 0);
    }

    #[test]
    fn collect_writes_summary_and_exits_zero() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = pipeline::ScenarioConfig::param_shift(3);
        cfg.protocol.count = 2;
        cfg.protocol.eval_rollouts = 1;
        cfg.protocol.horizon_s = 0.3;
        let cfg_path = dir.path().join("scenario.json");
        pipeline::save_json(&cfg_path, &cfg).unwrap();
        let out = dir.path().join("run");
        let code = run(vec![
            "simgap".into(),
            "collect".into(),
            "--config".into(),
            cfg_path.display().to_string(),
            "--out".into(),
            out.display().to_string(),
        ]);
        assert_eq!(code, 0);
        assert!(out.join("report/summary.json").exists());
        assert!(out.join("data/targets.jsonl").exists());
    }

    #[test]
    fn nominal_scenario_is_rejected_for_identify_but_not_simulate() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = pipeline::ScenarioConfig::nominal(3);
        cfg.protocol.count = 2;
        cfg.protocol.eval_rollouts = 1;
        cfg.protocol.horizon_s = 0.2;
        let cfg_path = dir.path().join("scenario.json");
        pipeline::save_json(&cfg_path, &cfg).unwrap();
        let base = vec![
            "simgap".to_string(),
            "identify".to_string(),
            "--config".to_string(),
            cfg_path.display().to_string(),
            "--out".to_string(),
            dir.path().join("a").display().to_string(),
            "--iters".to_string(),
            "1".to_string(),
        ];
        assert_eq!(run(base), 1);
        let sim = vec![
            "simgap".to_string(),
            "simulate".to_string(),
            "--config".to_string(),
            cfg_path.display().to_string(),
            "--out".to_string(),
            dir.path().join("b").display().to_string(),
        ];
        assert_eq!(run(sim), 0);
    }
}
