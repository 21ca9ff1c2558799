//! Gait fine-tuning inside a (possibly adapted) simulator, and policy
//! evaluation with confidence intervals.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    mean_forward_speed, rollout_return, stratified_commands, ProtocolConfig, FAIL_COST,
    LBL_EVAL, LBL_FT_CMD, LBL_FT_INIT,
};
use crate::cmaes::{self, CmaesConfig, TraceRow};
use crate::controller::GaitParams;
use crate::error::{Error, Result};
use crate::mods::{HistNorm, ModificationInstance};
use crate::parallel;
use crate::plant::{rollout, PlantModel, PlantParams, RolloutOut, SimSetup, Workspace};
use crate::rngstream::stream;

/// A simulator variant: base plant, parameter set, and an optional learned
/// modification with its frozen input normalizer. Pairs with a gait to form
/// a complete rollout setup.
#[derive(Clone, Copy)]
pub struct AdaptedSim<'a> {
    pub model: &'a PlantModel,
    pub params: &'a PlantParams,
    pub modification: &'a ModificationInstance,
    pub hist_norm: &'a HistNorm,
}

impl<'a> AdaptedSim<'a> {
    pub fn setup<'b>(&'b self, gait: &'b GaitParams) -> SimSetup<'b>
    where
        'a: 'b,
    {
        SimSetup {
            model: self.model,
            params: self.params,
            gait,
            modification: self.modification,
            hist_norm: self.hist_norm,
        }
    }

    fn roll(
        &self,
        ws: &mut Workspace,
        gait: &GaitParams,
        command: f64,
        horizon_s: f64,
    ) -> Result<RolloutOut> {
        // Reward rollouts are noiseless; stochasticity enters only through
        // the command draw.
        let mut rng = stream(0, &[]);
        rollout(&self.setup(gait), ws, command, horizon_s, 0.0, &mut rng)
    }
}

// Search box and per-coordinate step sizes over
// (frequency, duty, stride_gain, clearance, stance_height, pitch_gain,
// phase_offset). The box keeps every candidate kinematically feasible for
// the 0.22 + 0.22 m leg.
const GAIT_LOWER: [f64; 7] = [0.8, 0.40, 0.0, 0.005, 0.24, -2.5, 2.0];
const GAIT_UPPER: [f64; 7] = [3.0, 0.80, 0.8, 0.160, 0.42, 0.5, 4.3];
const GAIT_SIGMA: [f64; 7] = [0.15, 0.04, 0.05, 0.012, 0.012, 0.15, 0.12];

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FinetuneOptions {
    /// Optimizer generations; 0 returns the initial gait unchanged.
    pub iters: usize,
    /// Rollouts averaged per candidate evaluation (common random numbers).
    pub rollouts: usize,
    pub jobs: usize,
    pub seed: u64,
    /// 0 selects the dimension default.
    pub lambda: usize,
}

impl Default for FinetuneOptions {
    fn default() -> Self {
        FinetuneOptions {
            iters: 40,
            rollouts: 16,
            jobs: 1,
            seed: 0,
            lambda: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FinetuneResult {
    pub label: String,
    pub init_gait: GaitParams,
    pub gait: GaitParams,
    /// Mean returns of the initial and the tuned gait on the held-out final
    /// command stream, directly comparable.
    pub init_return: f64,
    pub final_return: f64,
    pub rollouts_per_eval: usize,
    pub iterations: usize,
    pub evaluations: usize,
    pub seed: u64,
    pub wall_time_s: f64,
    pub trace: Vec<TraceRow>,
}

/// Maximizes mean episodic return of the gait inside `sim` with CMA-ES over
/// the seven gait parameters. Fails up front when every rollout of the
/// initial gait falls; a simulator nobody can stand in is not tunable.
pub fn finetune_gait(
    sim: &AdaptedSim,
    init: &GaitParams,
    protocol: &ProtocolConfig,
    opts: &FinetuneOptions,
    label: &str,
) -> Result<FinetuneResult> {
    let start = std::time::Instant::now();
    protocol.validate()?;
    let legs = sim.model.leg_geometry();
    init.validate(&legs)?;
    if opts.rollouts == 0 {
        return Err(Error::invalid("finetune needs at least one rollout per evaluation"));
    }

    let horizon = protocol.horizon_s;
    let mean_return = |ws: &mut Workspace, gait: &GaitParams, commands: &[f64]| -> Result<f64> {
        let mut total = 0.0;
        for &command in commands {
            let out = sim.roll(ws, gait, command, horizon)?;
            total += rollout_return(&out, command);
        }
        Ok(total / commands.len() as f64)
    };

    // Infeasible-start check on a dedicated stream.
    {
        let commands = stratified_commands(
            opts.rollouts,
            protocol.command_max,
            &mut stream(opts.seed, &[LBL_FT_INIT]),
        );
        let mut ws = Workspace::new(sim.model);
        let mut all_failed = true;
        for &command in &commands {
            let out = sim.roll(&mut ws, init, command, horizon)?;
            if !out.trajectory.failed {
                all_failed = false;
                break;
            }
        }
        if all_failed {
            return Err(Error::runtime(
                "infeasible start: every rollout of the initial gait fell",
            ));
        }
    }

    let init_vec: Vec<f64> = init
        .to_vec()
        .iter()
        .enumerate()
        .map(|(i, &v)| v.clamp(GAIT_LOWER[i], GAIT_UPPER[i]))
        .collect();
    let mut cfg = CmaesConfig::new(
        init_vec,
        GAIT_SIGMA.to_vec(),
        GAIT_LOWER.to_vec(),
        GAIT_UPPER.to_vec(),
    );
    cfg.seed = opts.seed;
    cfg.lambda = opts.lambda;
    cfg.max_generations = opts.iters;

    let eval_gait = |ws: &mut Workspace, theta: &[f64], commands: &[f64]| -> f64 {
        let gait = match GaitParams::from_vec(theta) {
            Ok(g) => g,
            Err(_) => return FAIL_COST,
        };
        if gait.validate(&legs).is_err() {
            return FAIL_COST;
        }
        match mean_return(ws, &gait, commands) {
            Ok(r) if r.is_finite() => -r,
            _ => FAIL_COST,
        }
    };

    let result = cmaes::minimize(cfg, |generation, candidates| {
        let commands = stratified_commands(
            opts.rollouts,
            protocol.command_max,
            &mut stream(opts.seed, &[LBL_FT_CMD, generation as u64]),
        );
        Ok(parallel::map_indexed(
            opts.jobs,
            candidates.len(),
            || Workspace::new(sim.model),
            |ws, i| eval_gait(ws, &candidates[i].x, &commands),
        ))
    })?;

    let gait = GaitParams::from_vec(&result.final_mean)?;
    gait.validate(&legs)?;

    // Held-out comparison of initial and tuned gait on one fresh stream.
    let final_commands = stratified_commands(
        opts.rollouts,
        protocol.command_max,
        &mut stream(opts.seed, &[LBL_FT_CMD, opts.iters as u64]),
    );
    let mut ws = Workspace::new(sim.model);
    let final_return = mean_return(&mut ws, &gait, &final_commands)?;
    let init_return = mean_return(&mut ws, init, &final_commands)?;

    Ok(FinetuneResult {
        label: label.to_string(),
        init_gait: *init,
        gait,
        init_return,
        final_return,
        rollouts_per_eval: opts.rollouts,
        iterations: result.generations,
        evaluations: result.evaluations,
        seed: opts.seed,
        wall_time_s: start.elapsed().as_secs_f64(),
        trace: result.trace,
    })
}

// ---------------------------------------------------------------------------
// Policy evaluation
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    pub n_trials: usize,
    /// Mean absolute gap between commanded and achieved mean forward speed.
    pub mean_tracking_err: f64,
    pub ci95_tracking_err: f64,
    pub mean_return: f64,
    pub ci95_return: f64,
    pub failure_rate: f64,
    pub ci95_failure_rate: f64,
    /// Set when n_trials is too small for a meaningful interval.
    pub degenerate_ci: bool,
}

fn mean_and_ci95(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}

/// Rolls `n_trials` episodes with i.i.d. uniform commands and reports
/// velocity-tracking error, return, and failure rate with 95%
/// normal-approximation confidence intervals.
pub fn evaluate_policy(
    sim: &AdaptedSim,
    gait: &GaitParams,
    protocol: &ProtocolConfig,
    n_trials: usize,
    seed: u64,
    jobs: usize,
    label: &str,
) -> Result<EvalReport> {
    if n_trials == 0 {
        return Err(Error::invalid("evaluation needs at least one trial"));
    }
    protocol.validate()?;
    gait.validate(&sim.model.leg_geometry())?;

    let trials: Vec<Result<(f64, f64, bool)>> = parallel::map_indexed(
        jobs,
        n_trials,
        || Workspace::new(sim.model),
        |ws, i| {
            let command = stream(seed, &[LBL_EVAL, i as u64])
                .random_range(-protocol.command_max..protocol.command_max);
            let out = sim.roll(ws, gait, command, protocol.horizon_s)?;
            let tracking = (mean_forward_speed(&out) - command).abs();
            Ok((tracking, rollout_return(&out, command), out.trajectory.failed))
        },
    );

    let mut tracking = Vec::with_capacity(n_trials);
    let mut returns = Vec::with_capacity(n_trials);
    let mut failures = Vec::with_capacity(n_trials);
    for t in trials {
        let (e, r, failed) = t?;
        tracking.push(e);
        returns.push(r);
        failures.push(f64::from(u8::from(failed)));
    }
    let (mean_tracking_err, ci95_tracking_err) = mean_and_ci95(&tracking);
    let (mean_return, ci95_return) = mean_and_ci95(&returns);
    let (failure_rate, ci95_failure_rate) = mean_and_ci95(&failures);

    Ok(EvalReport {
        label: label.to_string(),
        n_trials,
        mean_tracking_err,
        ci95_tracking_err,
        mean_return,
        ci95_return,
        failure_rate,
        ci95_failure_rate,
        degenerate_ci: n_trials < 2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::PlantModel;

    fn nominal_sim(model: &PlantModel, params: &PlantParams) -> (ModificationInstance, HistNorm) {
        let _ = (model, params);
        (ModificationInstance::Identity, HistNorm::identity())
    }

    #[test]
    fn zero_iteration_finetune_returns_init() {
        let model = PlantModel::default_biped();
        let params = PlantParams::zero();
        let (inst, norm) = nominal_sim(&model, &params);
        let sim = AdaptedSim {
            model: &model,
            params: &params,
            modification: &inst,
            hist_norm: &norm,
        };
        let mut protocol = ProtocolConfig::default();
        protocol.horizon_s = 1.0;
        let opts = FinetuneOptions {
            iters: 0,
            rollouts: 3,
            ..FinetuneOptions::default()
        };
        let init = GaitParams::default();
        let res = finetune_gait(&sim, &init, &protocol, &opts, "noop").unwrap();
        assert_eq!(res.gait.to_vec(), init.to_vec());
        assert_eq!(res.iterations, 0);
    }

    #[test]
    fn infeasible_start_is_an_error() {
        let model = PlantModel::default_biped();
        let params = PlantParams::zero();
        let (inst, norm) = nominal_sim(&model, &params);
        let sim = AdaptedSim {
            model: &model,
            params: &params,
            modification: &inst,
            hist_norm: &norm,
        };
        // A gait that collapses immediately: stance at the knee-lock limit
        // with zero clearance and wild frequency.
        let mut bad = GaitParams::default();
        bad.stance_height = 0.16;
        bad.clearance = 0.001;
        bad.frequency = 6.0;
        bad.stride_gain = 1.5;
        let protocol = ProtocolConfig {
            horizon_s: 2.0,
            ..ProtocolConfig::default()
        };
        let opts = FinetuneOptions {
            iters: 1,
            rollouts: 4,
            ..FinetuneOptions::default()
        };
        let err = finetune_gait(&sim, &bad, &protocol, &opts, "bad");
        assert!(err.is_err(), "a free-falling start must be rejected");
    }

    #[test]
    fn evaluation_reports_cis_and_flags_single_trial() {
        let model = PlantModel::default_biped();
        let params = PlantParams::zero();
        let (inst, norm) = nominal_sim(&model, &params);
        let sim = AdaptedSim {
            model: &model,
            params: &params,
            modification: &inst,
            hist_norm: &norm,
        };
        let protocol = ProtocolConfig {
            horizon_s: 1.0,
            ..ProtocolConfig::default()
        };
        let gait = GaitParams::default();
        let rep = evaluate_policy(&sim, &gait, &protocol, 8, 3, 1, "smoke").unwrap();
        assert_eq!(rep.n_trials, 8);
        assert!(rep.mean_tracking_err.is_finite());
        assert!(rep.ci95_tracking_err.is_finite());
        assert!(!rep.degenerate_ci);
        assert!((0.0..=1.0).contains(&rep.failure_rate));

        let single = evaluate_policy(&sim, &gait, &protocol, 1, 3, 1, "one").unwrap();
        assert!(single.degenerate_ci);
        assert!(single.ci95_return.is_nan());
    }

    #[test]
    fn destabilized_gait_fails_most_trials() {
        let model = PlantModel::default_biped();
        let params = PlantParams::zero();
        let (inst, norm) = nominal_sim(&model, &params);
        let sim = AdaptedSim {
            model: &model,
            params: &params,
            modification: &inst,
            hist_norm: &norm,
        };
        let protocol = ProtocolConfig::default();
        // Zero clearance alone only trips the fast forward commands (the
        // placement channel keeps a scooting, foot-dragging robot upright),
        // so the stride is quadrupled too: overreached dragging steps topple
        // the robot on most of the command range.
        let mut bad = GaitParams::default();
        bad.clearance = 0.0;
        bad.stride_gain *= 4.0;
        let rep = evaluate_policy(&sim, &bad, &protocol, 40, 5, 1, "destab").unwrap();
        assert!(rep.failure_rate > 0.5, "failure rate {}", rep.failure_rate);

        let good = evaluate_policy(&sim, &GaitParams::default(), &protocol, 40, 5, 1, "nom").unwrap();
        assert!(good.failure_rate < 0.1, "nominal failure rate {}", good.failure_rate);
    }

    #[test]
    fn disjoint_seed_blocks_agree_within_cis() {
        let model = PlantModel::default_biped();
        let params = PlantParams::zero();
        let (inst, norm) = nominal_sim(&model, &params);
        let sim = AdaptedSim {
            model: &model,
            params: &params,
            modification: &inst,
            hist_norm: &norm,
        };
        let protocol = ProtocolConfig::default();
        let gait = GaitParams::default();
        let a = evaluate_policy(&sim, &gait, &protocol, 60, 21, 1, "a").unwrap();
        let b = evaluate_policy(&sim, &gait, &protocol, 60, 22, 1, "b").unwrap();
        let diff = (a.mean_tracking_err - b.mean_tracking_err).abs();
        assert!(
            diff <= a.ci95_tracking_err + b.ci95_tracking_err,
            "blocks disagree: {} vs {} (CIs {} + {})",
            a.mean_tracking_err,
            b.mean_tracking_err,
            a.ci95_tracking_err,
            b.ci95_tracking_err
        );
    }

    #[test]
    fn evaluation_is_deterministic_given_seed() {
        let model = PlantModel::default_biped();
        let params = PlantParams::zero();
        let (inst, norm) = nominal_sim(&model, &params);
        let sim = AdaptedSim {
            model: &model,
            params: &params,
            modification: &inst,
            hist_norm: &norm,
        };
        let protocol = ProtocolConfig {
            horizon_s: 0.6,
            ..ProtocolConfig::default()
        };
        let gait = GaitParams::default();
        let a = evaluate_policy(&sim, &gait, &protocol, 5, 9, 1, "a").unwrap();
        let b = evaluate_policy(&sim, &gait, &protocol, 5, 9, 2, "b").unwrap();
        assert_eq!(a.mean_return, b.mean_return);
        assert_eq!(a.mean_tracking_err, b.mean_tracking_err);
    }
}
