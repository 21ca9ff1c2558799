//! Time-aligned trajectory-matching baselines.
//!
//! Both costs replay target commands through the (possibly modified) source
//! simulator and compare rows pointwise, unlike the Wasserstein cost, which
//! never aligns time. `match_s_cost` needs privileged base state to reset
//! against; `match_o_cost` works from proprioception alone and therefore
//! pays for any desynchronization in the target data.

use crate::controller::{gait_targets, GaitObs};
use crate::error::{Error, Result};
use crate::plant::{nominal_stance_state, step, History, SimSetup, SimState, Workspace};
use crate::trajdata::{Trajectory, N_JOINTS};

/// Squared L2 distance over (joint q, joint qd, base pose, base vel).
fn full_state_sq(
    state: &SimState,
    base: usize,
    tq: &[f64; N_JOINTS],
    tqd: &[f64; N_JOINTS],
    tpose: &[f64; 3],
    tvel: &[f64; 3],
) -> f64 {
    let mut sq = 0.0;
    for j in 0..N_JOINTS {
        let dq = state.q[base + j] - tq[j];
        let dqd = state.qd[base + j] - tqd[j];
        sq += dq * dq + dqd * dqd;
    }
    for i in 0..3 {
        let dp = state.q[i] - tpose[i];
        let dv = state.qd[i] - tvel[i];
        sq += dp * dp + dv * dv;
    }
    sq
}

/// Reset-and-replay cost: the source simulator is reset to the target's full
/// recorded state every `h` control steps, rolled forward replaying the
/// target's command, and charged the mean squared full-state L2 error at
/// every compared row. Requires privileged base fields on every target
/// trajectory. A numeric blow-up inside a block freezes the last healthy
/// prediction for the block's remaining rows.
pub fn match_s_cost(
    h: usize,
    setup: &SimSetup,
    ws: &mut Workspace,
    targets: &[Trajectory],
) -> Result<f64> {
    if h == 0 {
        return Err(Error::invalid("match_s horizon must be at least 1"));
    }
    if targets.is_empty() {
        return Err(Error::invalid("match_s needs at least one target trajectory"));
    }
    let model = setup.model;
    let params = setup.modification.plant_params(setup.params);
    let residual = setup.modification.residual_net().map(|b| (b, setup.hist_norm));
    let legs = model.leg_geometry();
    let base = model.base_dof();
    let decimation = model.control_decimation as usize;
    let mut rng = crate::rngstream::stream(0, &[]);

    let mut total = 0.0;
    let mut count = 0usize;
    for traj in targets {
        let (Some(pose), Some(vel)) = (&traj.base_pose, &traj.base_vel) else {
            return Err(Error::invalid(
                "match_s requires privileged base fields on target trajectories",
            ));
        };
        let n = traj.rows();
        let mut i = 0;
        while i + 1 < n {
            let mut q = vec![0.0; model.nq()];
            let mut qd = vec![0.0; model.nq()];
            q[..3].copy_from_slice(&pose[i]);
            qd[..3].copy_from_slice(&vel[i]);
            q[base..base + N_JOINTS].copy_from_slice(&traj.joint_q[i]);
            qd[base..base + N_JOINTS].copy_from_slice(&traj.joint_qd[i]);
            let mut state = SimState::new(model, q, qd);
            let mut ctrl_hist = History::filled(traj.joint_q[i], traj.joint_qd[i]);
            let mut frozen = false;

            for row in i..(i + h).min(n - 1) {
                if !frozen {
                    state.t = traj.t[row];
                    let mut obs = GaitObs::still(state.q[2]);
                    obs.joint_q.copy_from_slice(&state.q[base..base + N_JOINTS]);
                    obs.joint_qd.copy_from_slice(&state.qd[base..base + N_JOINTS]);
                    let (act, _) = gait_targets(traj.t[row], traj.command, setup.gait, &obs, &legs);
                    let mut delta_a = [0.0; N_JOINTS];
                    if let Some(bank) = setup.modification.action_net() {
                        bank.eval(ctrl_hist.q(), ctrl_hist.qd(), setup.hist_norm, &mut delta_a);
                    }
                    let before = state.clone();
                    for _ in 0..decimation {
                        if step(
                            model, &params, ws, &mut state, &act, &delta_a, residual, 0.0,
                            &mut rng,
                        )
                        .is_err()
                        {
                            state = before.clone();
                            frozen = true;
                            break;
                        }
                    }
                    if !frozen {
                        let mut aq = [0.0; N_JOINTS];
                        let mut aqd = [0.0; N_JOINTS];
                        aq.copy_from_slice(&state.q[base..base + N_JOINTS]);
                        aqd.copy_from_slice(&state.qd[base..base + N_JOINTS]);
                        ctrl_hist.push(aq, aqd);
                    }
                }
                total += full_state_sq(
                    &state,
                    base,
                    &traj.joint_q[row + 1],
                    &traj.joint_qd[row + 1],
                    &pose[row + 1],
                    &vel[row + 1],
                );
                count += 1;
            }
            i += h;
        }
    }
    if count == 0 {
        return Err(Error::invalid("match_s targets have too few rows to compare"));
    }
    Ok(total / count as f64)
}

/// Full-horizon proprioceptive replay cost: the source simulator rolls from
/// its own nominal stance replaying the target's command, with no resets;
/// rows are compared time-aligned over (joint q, joint qd, action). If the
/// source falls or blows up, its last healthy row is held for the remainder,
/// so diverging simulators pay a sustained penalty instead of aborting.
pub fn match_o_cost(setup: &SimSetup, ws: &mut Workspace, targets: &[Trajectory]) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::invalid("match_o needs at least one target trajectory"));
    }
    let model = setup.model;
    let params = setup.modification.plant_params(setup.params);
    let residual = setup.modification.residual_net().map(|b| (b, setup.hist_norm));
    let legs = model.leg_geometry();
    let base = model.base_dof();
    let dt_control = model.dt_control();
    let decimation = model.control_decimation as usize;
    let mut rng = crate::rngstream::stream(0, &[]);

    let mut total = 0.0;
    let mut count = 0usize;
    for traj in targets {
        let n = traj.rows();
        if n == 0 {
            return Err(Error::invalid("match_o target trajectory has no rows"));
        }
        let mut state = nominal_stance_state(model, setup.gait);
        let mut aq = [0.0; N_JOINTS];
        let mut aqd = [0.0; N_JOINTS];
        aq.copy_from_slice(&state.q[base..base + N_JOINTS]);
        aqd.copy_from_slice(&state.qd[base..base + N_JOINTS]);
        let mut ctrl_hist = History::filled(aq, aqd);
        let mut frozen: Option<([f64; N_JOINTS], [f64; N_JOINTS], [f64; N_JOINTS])> = None;

        for k in 0..n {
            let (sq_row, act_row);
            if let Some((fq, fqd, fact)) = frozen {
                sq_row = (fq, fqd);
                act_row = fact;
            } else {
                let t = k as f64 * dt_control;
                state.t = t;
                if state.q[2].abs() > crate::plant::TERMINATE_PITCH
                    || state.q[1] < crate::plant::TERMINATE_HEIGHT
                {
                    let mut cq = [0.0; N_JOINTS];
                    let mut cqd = [0.0; N_JOINTS];
                    cq.copy_from_slice(&state.q[base..base + N_JOINTS]);
                    cqd.copy_from_slice(&state.qd[base..base + N_JOINTS]);
                    let obs = GaitObs {
                        joint_q: cq,
                        joint_qd: cqd,
                        pitch: state.q[2],
                    };
                    let (act, _) = gait_targets(t, traj.command, setup.gait, &obs, &legs);
                    frozen = Some((cq, cqd, act));
                    sq_row = (cq, cqd);
                    act_row = act;
                } else {
                    let mut cq = [0.0; N_JOINTS];
                    let mut cqd = [0.0; N_JOINTS];
                    cq.copy_from_slice(&state.q[base..base + N_JOINTS]);
                    cqd.copy_from_slice(&state.qd[base..base + N_JOINTS]);
                    let obs = GaitObs {
                        joint_q: cq,
                        joint_qd: cqd,
                        pitch: state.q[2],
                    };
                    let (act, _) = gait_targets(t, traj.command, setup.gait, &obs, &legs);
                    sq_row = (cq, cqd);
                    act_row = act;

                    let mut delta_a = [0.0; N_JOINTS];
                    if let Some(bank) = setup.modification.action_net() {
                        bank.eval(ctrl_hist.q(), ctrl_hist.qd(), setup.hist_norm, &mut delta_a);
                    }
                    let mut broke = false;
                    for _ in 0..decimation {
                        if step(
                            model, &params, ws, &mut state, &act, &delta_a, residual, 0.0,
                            &mut rng,
                        )
                        .is_err()
                        {
                            broke = true;
                            break;
                        }
                    }
                    if broke {
                        frozen = Some((cq, cqd, act));
                    } else {
                        let mut nq_ = [0.0; N_JOINTS];
                        let mut nqd = [0.0; N_JOINTS];
                        nq_.copy_from_slice(&state.q[base..base + N_JOINTS]);
                        nqd.copy_from_slice(&state.qd[base..base + N_JOINTS]);
                        ctrl_hist.push(nq_, nqd);
                    }
                }
            }
            let (cq, cqd) = sq_row;
            let mut sq = 0.0;
            for j in 0..N_JOINTS {
                let dq = cq[j] - traj.joint_q[k][j];
                let dqd = cqd[j] - traj.joint_qd[k][j];
                let da = act_row[j] - traj.action[k][j];
                sq += dq * dq + dqd * dqd + da * da;
            }
            total += sq;
            count += 1;
        }
    }
    Ok(total / count as f64)
}
