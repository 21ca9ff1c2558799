//! Target-side data generation: noisy rollouts of the target simulator plus
//! the temporal-shift logging artifact.

use rand::Rng;

use super::{
    ScenarioConfig, LBL_COLLECT_CMD, LBL_COLLECT_NOISE, LBL_COLLECT_SHIFT,
};
use crate::error::{Error, Result};
use crate::mods::{HistNorm, ModificationInstance};
use crate::plant::{rollout, SimSetup, Workspace};
use crate::rngstream::stream;
use crate::trajdata::{Manifest, TrajectorySet, SCHEMA_VERSION};

/// Rolls the target simulator under the nominal gait with per-physics-step
/// torque noise, then drops a random 1..=k leading control rows per
/// trajectory when the temporal shift is enabled. Privileged base fields are
/// kept (this is sim-side ground truth), so reset-based baselines stay
/// runnable; callers emulating proprioception-only logs strip them.
pub fn collect_target_set(cfg: &ScenarioConfig) -> Result<TrajectorySet> {
    let model = &cfg.model;
    model.validate()?;
    cfg.target_params.validate(model)?;
    cfg.protocol.validate()?;
    cfg.noise.validate(cfg.protocol.horizon_s)?;

    let mut ws = Workspace::new(model);
    let identity = ModificationInstance::Identity;
    let hist_norm = HistNorm::identity();
    let setup = SimSetup {
        model,
        params: &cfg.target_params,
        gait: &cfg.gait,
        modification: &identity,
        hist_norm: &hist_norm,
    };

    let commands = super::stratified_commands(
        cfg.protocol.count,
        cfg.protocol.command_max,
        &mut stream(cfg.seed, &[LBL_COLLECT_CMD]),
    );

    let dt = model.dt_control();
    let mut trajectories = Vec::with_capacity(cfg.protocol.count);
    let mut all_failed = true;
    for (i, &command) in commands.iter().enumerate() {
        let mut noise_rng = stream(cfg.seed, &[LBL_COLLECT_NOISE, i as u64]);
        let out = rollout(
            &setup,
            &mut ws,
            command,
            cfg.protocol.horizon_s,
            cfg.noise.torque_sigma,
            &mut noise_rng,
        )?;
        let mut traj = out.trajectory;
        if let Some([lo, hi]) = cfg.noise.temporal_shift_range {
            let k_lo = (lo / dt).ceil() as usize;
            let k_hi = (hi / dt).floor() as usize;
            if k_hi >= k_lo.max(1) {
                let mut shift_rng = stream(cfg.seed, &[LBL_COLLECT_SHIFT, i as u64]);
                let k = shift_rng.random_range(k_lo.max(1)..=k_hi);
                // A failed rollout may hold fewer rows than the shift; keep
                // at least one row rather than erasing the evidence.
                let k = k.min(traj.rows().saturating_sub(1));
                if k > 0 {
                    traj.apply_temporal_shift(k)?;
                }
            }
        }
        if !traj.failed {
            all_failed = false;
        }
        trajectories.push(traj);
    }
    if all_failed {
        return Err(Error::runtime(format!(
            "scenario {:?} is infeasible: every target rollout fell",
            cfg.name
        )));
    }

    let set = TrajectorySet {
        manifest: Manifest {
            schema_version: SCHEMA_VERSION,
            scenario: cfg.name.clone(),
            master_seed: cfg.seed,
            count: trajectories.len(),
            horizon_s: cfg.protocol.horizon_s,
            dt_control: dt,
            params_hash: super::report::config_sha256(cfg)?,
            privileged: true,
        },
        trajectories,
    };
    set.validate()?;
    Ok(set)
}
