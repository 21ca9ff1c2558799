//! Gap-cost identification: black-box search over modification parameters
//! that makes source rollouts match the target data.

use serde::{Deserialize, Serialize};

use super::{GapCostKind, ScenarioConfig, ScenarioKind, FAIL_COST, LBL_IDENT_CMD};
use crate::cmaes::{self, CmaesConfig, TraceRow};
use crate::error::{Error, Result};
use crate::gapmetrics::{match_o_cost, match_s_cost, wass_cost_prepared, PreparedWassTarget};
use crate::mods::{HistNorm, ModKind, ModificationSpec};
use crate::parallel;
use crate::plant::{rollout, SimSetup, Workspace};
use crate::rngstream::stream;
use crate::trajdata::{MarginalSamples, Normalizer, Trajectory, TrajectorySet};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IdentResult {
    pub scenario: String,
    pub kind: ScenarioKind,
    pub cost_kind: GapCostKind,
    pub spec: ModificationSpec,
    pub theta_hat: Vec<f64>,
    /// Cost of `theta_hat` on the held-out final evaluation stream.
    pub final_cost: f64,
    /// Cost of the zero modification on the same stream; the nominal gap.
    pub baseline_cost: f64,
    /// Best single-candidate cost seen by the optimizer.
    pub best_sample_cost: f64,
    pub eval_rollouts: usize,
    pub iterations: usize,
    pub evaluations: usize,
    pub seed: u64,
    pub torque_sigma: f64,
    pub sigma_frac_of_limit: f64,
    pub wall_time_s: f64,
    pub degenerate: bool,
    /// Normalizer fitted once on the target set and frozen; downstream
    /// consumers (fine-tuning in the adapted sim) need the identical one.
    pub normalizer: Normalizer,
    pub param_names: Vec<String>,
    pub true_values: Option<Vec<f64>>,
    pub rel_errors: Option<Vec<f64>>,
    pub mean_rel_error: Option<f64>,
    pub trace: Vec<TraceRow>,
}

/// The standard optimizer setup for a modification family: zero start,
/// family-specific step sizes and bounds.
pub fn default_cmaes(spec: &ModificationSpec, seed: u64, iters: usize) -> Result<CmaesConfig> {
    let dim = spec.param_dim()?;
    let (lower, upper) = spec.bounds()?;
    let mut cfg = CmaesConfig::new(vec![0.0; dim], spec.init_sigma()?, lower, upper);
    cfg.seed = seed;
    cfg.max_generations = iters;
    Ok(cfg)
}

/// Default generation budget per modification family: short for the
/// six-dimensional static family, the desk-scale cap for networks.
pub fn default_iters(spec: &ModificationSpec) -> usize {
    match spec.kind {
        ModKind::StaticParams(_) => 200,
        _ => 1500,
    }
}

pub fn identify(
    spec: &ModificationSpec,
    cost_kind: GapCostKind,
    target_set: &TrajectorySet,
    cma_cfg: CmaesConfig,
    scenario: &ScenarioConfig,
    jobs: usize,
) -> Result<IdentResult> {
    let start = std::time::Instant::now();
    spec.validate()?;
    target_set.validate()?;
    if cma_cfg.init_mean.len() != spec.param_dim()? {
        return Err(Error::invalid(
            "optimizer dimension does not match the modification parameter count",
        ));
    }
    if matches!(cost_kind, GapCostKind::MatchS { .. })
        && !target_set.trajectories.iter().all(Trajectory::has_privileged)
    {
        return Err(Error::invalid(
            "reset-based matching needs privileged base state in the target data",
        ));
    }
    if target_set.trajectories.len() < scenario.protocol.eval_rollouts {
        return Err(Error::invalid(
            "target set is smaller than the evaluation budget",
        ));
    }

    let model = &scenario.model;
    model.validate()?;
    scenario.source_params.validate(model)?;

    // Fit the channel normalizer once on the target data and freeze it. It
    // defines both the Wasserstein normalization and the network input
    // scaling, so every candidate sees the same representation.
    let target_samples = MarginalSamples::from_set(target_set);
    let normalizer = Normalizer::fit(&target_samples)?;
    let prepared = PreparedWassTarget::new(&target_samples, &normalizer)?;
    let hist_norm = HistNorm::from_normalizer(&normalizer);

    let eval_n = scenario.protocol.eval_rollouts;
    let replay_targets: Vec<Trajectory> = target_set.trajectories[..eval_n].to_vec();
    let horizon = scenario.protocol.horizon_s;
    let seed = cma_cfg.seed;
    let iters = cma_cfg.max_generations;

    // Candidate evaluation. The source simulator is noiseless; for the
    // distribution cost the per-generation command set is shared across
    // candidates (common random numbers), for the matching costs the replay
    // targets already pin everything down.
    let eval_theta = |ws: &mut Workspace, theta: &[f64], commands: &[f64]| -> f64 {
        let (instance, _) = match spec.decode(theta) {
            Ok(v) => v,
            Err(_) => return FAIL_COST,
        };
        let setup = SimSetup {
            model,
            params: &scenario.source_params,
            gait: &scenario.gait,
            modification: &instance,
            hist_norm: &hist_norm,
        };
        let cost = match cost_kind {
            GapCostKind::Wass => {
                let mut rollouts = Vec::with_capacity(commands.len());
                for &command in commands {
                    let mut rng = stream(seed, &[]);
                    match rollout(&setup, ws, command, horizon, 0.0, &mut rng) {
                        Ok(out) => rollouts.push(out.trajectory),
                        Err(_) => return FAIL_COST,
                    }
                }
                let sim = MarginalSamples::from_trajectories(&rollouts);
                match wass_cost_prepared(&sim, &prepared) {
                    Ok(c) => c,
                    Err(_) => return FAIL_COST,
                }
            }
            GapCostKind::MatchS { h } => match match_s_cost(h, &setup, ws, &replay_targets) {
                Ok(c) => c,
                Err(_) => return FAIL_COST,
            },
            GapCostKind::MatchO => match match_o_cost(&setup, ws, &replay_targets) {
                Ok(c) => c,
                Err(_) => return FAIL_COST,
            },
        };
        if cost.is_finite() {
            cost
        } else {
            FAIL_COST
        }
    };

    let commands_for_gen = |generation: usize| -> Vec<f64> {
        match cost_kind {
            GapCostKind::Wass => super::stratified_commands(
                eval_n,
                scenario.protocol.command_max,
                &mut stream(seed, &[LBL_IDENT_CMD, generation as u64]),
            ),
            _ => Vec::new(),
        }
    };

    let result = cmaes::minimize(cma_cfg, |generation, candidates| {
        let commands = commands_for_gen(generation);
        let costs = parallel::map_indexed(
            jobs,
            candidates.len(),
            || Workspace::new(model),
            |ws, i| eval_theta(ws, &candidates[i].x, &commands),
        );
        Ok(costs)
    })?;

    // Held-out evaluation stream one past the last generation: final and
    // baseline costs are comparable to each other and across runs.
    let final_commands = commands_for_gen(iters);
    let theta_hat = result.final_mean.clone();
    let mut ws = Workspace::new(model);
    let final_cost = eval_theta(&mut ws, &theta_hat, &final_commands);
    let baseline_cost = eval_theta(&mut ws, &vec![0.0; theta_hat.len()], &final_commands);

    let param_names = spec.param_names()?;
    let (true_values, rel_errors, mean_rel_error) =
        match (&spec.kind, scenario.kind, &scenario.target_params.spring) {
            (ModKind::StaticParams(groups), ScenarioKind::ParamShift, None) => {
                let mut truth = Vec::with_capacity(2 * groups.len());
                for &g in groups {
                    truth.push(scenario.target_params.joint_friction[g]);
                }
                for &g in groups {
                    truth.push(scenario.target_params.joint_armature[g]);
                }
                let errs: Vec<f64> = theta_hat
                    .iter()
                    .zip(&truth)
                    .map(|(got, want)| (got - want).abs() / want.abs().max(1e-12))
                    .collect();
                let mean = errs.iter().sum::<f64>() / errs.len() as f64;
                (Some(truth), Some(errs), Some(mean))
            }
            _ => (None, None, None),
        };

    Ok(IdentResult {
        scenario: scenario.name.clone(),
        kind: scenario.kind,
        cost_kind,
        spec: spec.clone(),
        theta_hat,
        final_cost,
        baseline_cost,
        best_sample_cost: result.best_cost,
        eval_rollouts: eval_n,
        iterations: result.generations,
        evaluations: result.evaluations,
        seed,
        torque_sigma: scenario.noise.torque_sigma,
        sigma_frac_of_limit: scenario.torque_sigma_frac(),
        wall_time_s: start.elapsed().as_secs_f64(),
        degenerate: result.degenerate,
        normalizer,
        param_names,
        true_values,
        rel_errors,
        mean_rel_error,
        trace: result.trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mods::ModificationSpec;
    use crate::pipeline::collect_target_set;

    fn tiny_scenario(seed: u64) -> ScenarioConfig {
        let mut cfg = ScenarioConfig::param_shift(seed);
        cfg.protocol.count = 6;
        cfg.protocol.eval_rollouts = 3;
        cfg.protocol.horizon_s = 0.6;
        cfg
    }

    #[test]
    fn rejects_dimension_mismatch_and_stripped_targets() {
        let cfg = tiny_scenario(3);
        let set = collect_target_set(&cfg).unwrap();
        let spec = ModificationSpec::static_params(vec![0, 1, 2]);
        let mut cma = default_cmaes(&spec, 1, 1).unwrap();
        cma.init_mean.pop();
        cma.init_sigma.pop();
        cma.lower.pop();
        cma.upper.pop();
        assert!(identify(&spec, GapCostKind::Wass, &set, cma, &cfg, 1).is_err());

        let mut stripped = set.clone();
        stripped.strip_privileged();
        let cma = default_cmaes(&spec, 1, 1).unwrap();
        let err = identify(
            &spec,
            GapCostKind::MatchS { h: 1 },
            &stripped,
            cma,
            &cfg,
            1,
        )
        .unwrap_err();
        assert!(err.is_validation(), "{err}");
    }

    #[test]
    fn zero_iteration_identify_reports_the_baseline() {
        let cfg = tiny_scenario(4);
        let set = collect_target_set(&cfg).unwrap();
        let spec = ModificationSpec::static_params(vec![0, 1, 2]);
        let cma = default_cmaes(&spec, 11, 0).unwrap();
        let res = identify(&spec, GapCostKind::Wass, &set, cma, &cfg, 1).unwrap();
        assert_eq!(res.theta_hat, vec![0.0; 6]);
        assert_eq!(res.iterations, 0);
        // theta_hat is the zero vector, so both held-out costs coincide.
        assert_eq!(res.final_cost, res.baseline_cost);
        assert!(res.final_cost > 0.0, "a parameter gap must show a cost");
        assert!(res.true_values.is_some());
    }

    #[test]
    fn short_run_reduces_the_match_cost() {
        let cfg = tiny_scenario(5);
        let set = collect_target_set(&cfg).unwrap();
        let spec = ModificationSpec::static_params(vec![0, 1, 2]);
        let mut cma = default_cmaes(&spec, 9, 12).unwrap();
        cma.lambda = 6;
        let res = identify(&spec, GapCostKind::MatchO, &set, cma, &cfg, 1).unwrap();
        assert!(
            res.final_cost < res.baseline_cost,
            "optimized {} vs baseline {}",
            res.final_cost,
            res.baseline_cost
        );
        assert_eq!(res.trace.len(), 12);
        assert!(res.rel_errors.is_some());
        let body = serde_json::to_string(&res).unwrap();
        let round: IdentResult = serde_json::from_str(&body).unwrap();
        assert_eq!(round.theta_hat, res.theta_hat);
    }
}
