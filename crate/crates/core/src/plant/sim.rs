//! Stepping, actuation, and rollouts.
//!
//! Physics advance at `dt_physics` with semi-implicit Euler; the controller
//! and the action-offset network run every `control_decimation` steps, the
//! torque-residual network every physics step. One trajectory row is
//! recorded per control step, before the physics window it commands.

use rand::Rng;
use rand_distr::StandardNormal;

use super::contact;
use super::dynamics::Workspace;
use super::model::{PlantModel, PlantParams};
use crate::controller::{gait_targets, GaitObs, GaitParams};
use crate::error::{Error, Result};
use crate::mods::{HistNorm, ModificationInstance, NetBank};
use crate::trajdata::{Trajectory, N_JOINTS};

/// Velocity scale of the smoothed dry-friction torque (rad/s).
pub const JOINT_FRICTION_VEL_EPS: f64 = 0.1;

/// Early-termination thresholds: a fall is flagged, not simulated through.
pub const TERMINATE_PITCH: f64 = 1.2;
pub const TERMINATE_HEIGHT: f64 = 0.15;

/// Ring of the last three per-joint (q, qd) samples, oldest first. Fresh
/// states pad all slots with the initial sample.
#[derive(Clone, Debug)]
pub struct History {
    q: [[f64; N_JOINTS]; 3],
    qd: [[f64; N_JOINTS]; 3],
}

impl History {
    pub fn filled(q: [f64; N_JOINTS], qd: [f64; N_JOINTS]) -> Self {
        History { q: [q; 3], qd: [qd; 3] }
    }

    pub fn push(&mut self, q: [f64; N_JOINTS], qd: [f64; N_JOINTS]) {
        self.q.rotate_left(1);
        self.qd.rotate_left(1);
        self.q[2] = q;
        self.qd[2] = qd;
    }

    pub fn q(&self) -> &[[f64; N_JOINTS]; 3] {
        &self.q
    }

    pub fn qd(&self) -> &[[f64; N_JOINTS]; 3] {
        &self.qd
    }
}

/// Full simulator state. `history` holds physics-rate samples and feeds the
/// torque-residual network; the control-rate history lives in the rollout
/// loop.
#[derive(Clone, Debug)]
pub struct SimState {
    pub t: f64,
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
    pub history: History,
}

impl SimState {
    pub fn new(model: &PlantModel, q: Vec<f64>, qd: Vec<f64>) -> Self {
        let (aq, aqd) = actuated(model, &q, &qd);
        SimState {
            t: 0.0,
            q,
            qd,
            history: History::filled(aq, aqd),
        }
    }
}

/// Actuated-joint slices of the generalized vectors, zero-padded past the
/// model's hinge count (test fixtures have fewer than six).
fn actuated(model: &PlantModel, q: &[f64], qd: &[f64]) -> ([f64; N_JOINTS], [f64; N_JOINTS]) {
    let base = model.base_dof();
    let n = model.n_hinges().min(N_JOINTS);
    let mut aq = [0.0; N_JOINTS];
    let mut aqd = [0.0; N_JOINTS];
    aq[..n].copy_from_slice(&q[base..base + n]);
    aqd[..n].copy_from_slice(&qd[base..base + n]);
    (aq, aqd)
}

/// PD torque with spring, smoothed dry friction, and modification terms,
/// clamped to the torque limit. `delta_a` shifts the position targets;
/// `delta_tau` is added directly.
pub fn actuation_torque(
    model: &PlantModel,
    params: &PlantParams,
    targets: &[f64; N_JOINTS],
    delta_a: &[f64; N_JOINTS],
    delta_tau: &[f64; N_JOINTS],
    q_act: &[f64; N_JOINTS],
    qd_act: &[f64; N_JOINTS],
    out: &mut [f64; N_JOINTS],
) {
    for j in 0..model.n_hinges().min(N_JOINTS) {
        let group = model.links[model.link_of_hinge(j)].group.index();
        let mut tau = model.kp * (targets[j] + delta_a[j] - q_act[j]) - model.kd * qd_act[j];
        tau += delta_tau[j];
        if let Some(s) = &params.spring {
            if s.joint == j {
                tau += s.torque(q_act[j], qd_act[j]);
            }
        }
        tau -= params.joint_friction[group] * (qd_act[j] / JOINT_FRICTION_VEL_EPS).tanh();
        out[j] = tau.clamp(-model.torque_limit, model.torque_limit);
    }
}

/// One physics step: actuation (residual network at this rate), dynamics,
/// contact, semi-implicit Euler. Returns the squared norm of the applied
/// actuated torques. Gaussian torque noise, when enabled, lands after the
/// limit clamp, modeling disturbances past the actuator.
#[allow(clippy::too_many_arguments)]
pub fn step(
    model: &PlantModel,
    params: &PlantParams,
    ws: &mut Workspace,
    state: &mut SimState,
    targets: &[f64; N_JOINTS],
    delta_a: &[f64; N_JOINTS],
    residual: Option<(&NetBank, &HistNorm)>,
    torque_sigma: f64,
    rng: &mut impl Rng,
) -> Result<f64> {
    let (aq, aqd) = actuated(model, &state.q, &state.qd);
    let mut delta_tau = [0.0; N_JOINTS];
    if let Some((bank, norm)) = residual {
        bank.eval(state.history.q(), state.history.qd(), norm, &mut delta_tau);
    }
    let mut tau = [0.0; N_JOINTS];
    actuation_torque(model, params, targets, delta_a, &delta_tau, &aq, &aqd, &mut tau);
    let n_hinges = model.n_hinges().min(N_JOINTS);
    if torque_sigma > 0.0 {
        for t in tau.iter_mut().take(n_hinges) {
            *t += torque_sigma * rng.sample::<f64, _>(StandardNormal);
        }
    }
    let sq_torque: f64 = tau.iter().map(|v| v * v).sum();

    ws.fk(model, &state.q, &state.qd);
    ws.mass_matrix(model, params);
    ws.bias_forces(model, params, &state.qd);
    let nq = ws.nq();
    let base = model.base_dof();
    let mut rhs = std::mem::take(&mut ws.rhs);
    for i in 0..nq {
        rhs[i] = -ws.bias[i];
    }
    for j in 0..n_hinges {
        rhs[base + j] += tau[j];
    }
    contact::accumulate(model, ws, &mut rhs);
    ws.rhs = rhs;
    ws.solve_mass()?;

    let dt = model.dt_physics;
    for i in 0..nq {
        state.qd[i] += ws.qdd[i] * dt;
        state.q[i] += state.qd[i] * dt;
    }
    state.t += dt;
    if !state.q.iter().chain(state.qd.iter()).all(|v| v.is_finite()) {
        return Err(Error::runtime("state diverged to non-finite values"));
    }
    let (aq, aqd) = actuated(model, &state.q, &state.qd);
    state.history.push(aq, aqd);
    Ok(sq_torque)
}

/// Everything a rollout needs besides the command and noise level. The
/// modification is decoded once and shared read-only.
#[derive(Clone, Copy)]
pub struct SimSetup<'a> {
    pub model: &'a PlantModel,
    pub params: &'a PlantParams,
    pub gait: &'a GaitParams,
    pub modification: &'a ModificationInstance,
    pub hist_norm: &'a HistNorm,
}

pub struct RolloutOut {
    pub trajectory: Trajectory,
    /// Mean squared torque norm over each recorded control window.
    pub sq_torque: Vec<f64>,
}

/// Initial state: base at stance height (less the static contact
/// compression), hinges at the standing-pose targets, everything at rest.
pub fn nominal_stance_state(model: &PlantModel, gait: &GaitParams) -> SimState {
    debug_assert!(model.floating_base);
    let legs = model.leg_geometry();
    let (targets, _) = gait_targets(0.0, 0.0, gait, &GaitObs::still(0.0), &legs);
    let n_contacts: usize = model.links.iter().map(|l| l.contact_along.len()).sum();
    let total_mass: f64 = model.links.iter().map(|l| l.mass).sum();
    let compression = if n_contacts > 0 {
        total_mass * model.gravity / (model.contact.stiffness * n_contacts as f64)
    } else {
        0.0
    };
    let mut q = vec![0.0; model.nq()];
    q[1] = gait.stance_height - compression;
    for j in 0..model.n_hinges().min(N_JOINTS) {
        q[model.base_dof() + j] = targets[j];
    }
    let qd = vec![0.0; model.nq()];
    SimState::new(model, q, qd)
}

/// Rolls the walking controller for `horizon_s`, recording one row per
/// control step. Terminates early on a fall or numeric blow-up, flagging the
/// trajectory failed and keeping the rows recorded so far. Recorded actions
/// are the controller's own targets, before any modification.
pub fn rollout(
    setup: &SimSetup,
    ws: &mut Workspace,
    command: f64,
    horizon_s: f64,
    torque_sigma: f64,
    rng: &mut impl Rng,
) -> Result<RolloutOut> {
    let model = setup.model;
    let params = setup.modification.plant_params(setup.params);
    let residual = setup.modification.residual_net().map(|b| (b, setup.hist_norm));
    let legs = model.leg_geometry();
    let dt_control = model.dt_control();
    let n_rows = (horizon_s / dt_control).round() as usize;
    let decimation = model.control_decimation as usize;

    let mut state = nominal_stance_state(model, setup.gait);
    let (aq0, aqd0) = actuated(model, &state.q, &state.qd);
    let mut ctrl_hist = History::filled(aq0, aqd0);

    let mut traj = Trajectory {
        dt_control,
        command,
        failed: false,
        shift_rows: 0,
        t: Vec::with_capacity(n_rows),
        joint_q: Vec::with_capacity(n_rows),
        joint_qd: Vec::with_capacity(n_rows),
        action: Vec::with_capacity(n_rows),
        base_pose: Some(Vec::with_capacity(n_rows)),
        base_vel: Some(Vec::with_capacity(n_rows)),
    };
    let mut sq_torque = Vec::with_capacity(n_rows);

    'control: for k in 0..n_rows {
        let t = k as f64 * dt_control;
        state.t = t;
        let pitch = state.q[2];
        if pitch.abs() > TERMINATE_PITCH || state.q[1] < TERMINATE_HEIGHT {
            traj.failed = true;
            break;
        }
        let (aq, aqd) = actuated(model, &state.q, &state.qd);
        let obs = GaitObs {
            joint_q: aq,
            joint_qd: aqd,
            pitch,
        };
        let (targets, _) = gait_targets(t, command, setup.gait, &obs, &legs);
        if !targets.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("controller produced non-finite targets"));
        }
        let mut delta_a = [0.0; N_JOINTS];
        if let Some(bank) = setup.modification.action_net() {
            bank.eval(ctrl_hist.q(), ctrl_hist.qd(), setup.hist_norm, &mut delta_a);
        }

        traj.t.push(t);
        traj.joint_q.push(aq);
        traj.joint_qd.push(aqd);
        traj.action.push(targets);
        traj.base_pose
            .as_mut()
            .unwrap()
            .push([state.q[0], state.q[1], state.q[2]]);
        traj.base_vel
            .as_mut()
            .unwrap()
            .push([state.qd[0], state.qd[1], state.qd[2]]);

        let mut window_sq = 0.0;
        for _ in 0..decimation {
            match step(
                model,
                &params,
                ws,
                &mut state,
                &targets,
                &delta_a,
                residual,
                torque_sigma,
                rng,
            ) {
                Ok(sq) => window_sq += sq,
                Err(_) => {
                    // Candidate modifications can blow the dynamics up; that
                    // is a failed trajectory, not a caller error.
                    traj.failed = true;
                    sq_torque.push(window_sq / decimation as f64);
                    break 'control;
                }
            }
        }
        sq_torque.push(window_sq / decimation as f64);
        let (aq, aqd) = actuated(model, &state.q, &state.qd);
        ctrl_hist.push(aq, aqd);
    }

    Ok(RolloutOut {
        trajectory: traj,
        sq_torque,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mods::ModificationSpec;
    use crate::rngstream::stream;

    fn plain_setup<'a>(
        model: &'a PlantModel,
        params: &'a PlantParams,
        gait: &'a GaitParams,
        m: &'a ModificationInstance,
        norm: &'a HistNorm,
    ) -> SimSetup<'a> {
        SimSetup {
            model,
            params,
            gait,
            modification: m,
            hist_norm: norm,
        }
    }

    #[test]
    fn history_ring_order() {
        let mut h = History::filled([1.0; N_JOINTS], [0.0; N_JOINTS]);
        h.push([2.0; N_JOINTS], [0.5; N_JOINTS]);
        assert_eq!(h.q()[0][0], 1.0);
        assert_eq!(h.q()[1][0], 1.0);
        assert_eq!(h.q()[2][0], 2.0);
        h.push([3.0; N_JOINTS], [0.7; N_JOINTS]);
        assert_eq!(h.q()[0][0], 1.0);
        assert_eq!(h.q()[2][0], 3.0);
        assert_eq!(h.qd()[2][0], 0.7);
    }

    #[test]
    fn actuation_worked_examples() {
        let model = PlantModel::default_biped();
        let params = PlantParams::zero();
        let zero = [0.0; N_JOINTS];
        let mut out = [0.0; N_JOINTS];

        let mut targets = zero;
        targets[0] = 0.5;
        let mut qd = zero;
        qd[0] = 1.0;
        actuation_torque(&model, &params, &targets, &zero, &zero, &zero, &qd, &mut out);
        assert!((out[0] - 14.5).abs() < 1e-12, "kp/kd example: {}", out[0]);

        // kd damping (-0.5 * 10) plus fully saturated friction (-0.2).
        let mut fric = PlantParams::zero();
        fric.joint_friction = [0.2; 3];
        let mut qd = zero;
        qd[1] = 10.0;
        actuation_torque(&model, &fric, &zero, &zero, &zero, &zero, &qd, &mut out);
        assert!((out[1] + 5.2).abs() < 1e-9, "friction example: {}", out[1]);

        let mut sprung = PlantParams::zero();
        sprung.spring = Some(crate::plant::SpringAttachment {
            joint: 2,
            stiffness: 15.0,
            setpoint: 0.3,
            damping: 0.0,
        });
        let mut q = zero;
        q[2] = 0.5;
        let mut targets = zero;
        targets[2] = 0.5;
        actuation_torque(&model, &sprung, &targets, &zero, &zero, &q, &zero, &mut out);
        assert!((out[2] + 3.0).abs() < 1e-12, "spring example: {}", out[2]);

        let mut targets = zero;
        targets[3] = 10.0;
        actuation_torque(&model, &params, &targets, &zero, &zero, &zero, &zero, &mut out);
        assert_eq!(out[3], model.torque_limit, "clamp example");
    }

    #[test]
    fn pendulum_rests_at_equilibrium() {
        let model = PlantModel::pendulum(1.0, 1.0);
        let params = PlantParams::zero();
        let mut ws = Workspace::new(&model);
        let mut state = SimState::new(&model, vec![0.0], vec![0.0]);
        let zero = [0.0; N_JOINTS];
        let mut rng = stream(7, &[0]);
        for _ in 0..100 {
            step(&model, &params, &mut ws, &mut state, &zero, &zero, None, 0.0, &mut rng).unwrap();
        }
        assert_eq!(state.q[0], 0.0);
        assert_eq!(state.qd[0], 0.0);
        assert!((state.t - 0.1).abs() < 1e-12);
    }

    #[test]
    fn pendulum_energy_drift_is_small() {
        let model = PlantModel::pendulum(1.0, 1.0);
        let params = PlantParams::zero();
        let mut ws = Workspace::new(&model);
        let mut state = SimState::new(&model, vec![std::f64::consts::FRAC_PI_2], vec![0.0]);
        ws.fk(&model, &state.q, &state.qd);
        let (k0, v0) = ws.energy(&model, &params, &state.qd);
        let scale = 1.0 * 9.81 * 0.5;
        let zero = [0.0; N_JOINTS];
        let mut rng = stream(7, &[1]);
        let mut worst: f64 = 0.0;
        for _ in 0..2000 {
            step(&model, &params, &mut ws, &mut state, &zero, &zero, None, 0.0, &mut rng).unwrap();
            ws.fk(&model, &state.q, &state.qd);
            let (k, v) = ws.energy(&model, &params, &state.qd);
            worst = worst.max(((k + v) - (k0 + v0)).abs());
        }
        assert!(worst < 0.02 * scale, "energy drift {worst} vs scale {scale}");
    }

    #[test]
    fn double_pendulum_energy_drift_is_small() {
        let model = PlantModel::double_pendulum();
        let params = PlantParams::zero();
        let mut ws = Workspace::new(&model);
        let mut state = SimState::new(&model, vec![std::f64::consts::FRAC_PI_2, 0.3], vec![0.0, 0.0]);
        ws.fk(&model, &state.q, &state.qd);
        let (k0, v0) = ws.energy(&model, &params, &state.qd);
        let scale = 1.2 * 9.81 * 0.45 + 0.7 * 9.81 * (0.9 + 0.3);
        let zero = [0.0; N_JOINTS];
        let mut rng = stream(7, &[2]);
        let mut worst: f64 = 0.0;
        for _ in 0..2000 {
            step(&model, &params, &mut ws, &mut state, &zero, &zero, None, 0.0, &mut rng).unwrap();
            ws.fk(&model, &state.q, &state.qd);
            let (k, v) = ws.energy(&model, &params, &state.qd);
            worst = worst.max(((k + v) - (k0 + v0)).abs());
        }
        assert!(worst < 0.02 * scale, "energy drift {worst} vs scale {scale}");
    }

    #[test]
    fn biped_stands_still_under_zero_command() {
        let model = PlantModel::default_biped();
        let params = PlantParams::zero();
        let gait = GaitParams::default();
        let m = ModificationInstance::Identity;
        let norm = HistNorm::identity();
        let setup = plain_setup(&model, &params, &gait, &m, &norm);
        let mut ws = Workspace::new(&model);
        let mut rng = stream(8, &[0]);
        let out = rollout(&setup, &mut ws, 0.0, 4.0, 0.0, &mut rng).unwrap();
        let traj = &out.trajectory;
        assert!(!traj.failed, "standing must not fall");
        assert_eq!(traj.rows(), 200);
        // The crouched stand rattles on the stiff penalty contact (the PD sag
        // re-excites an underdamped bounce), so the robot never comes fully to
        // rest; it must still stay put and upright.
        for pose in traj.base_pose.as_ref().unwrap() {
            assert!(pose[0].abs() < 0.08, "wandered {} m while standing", pose[0]);
            assert!((pose[1] - gait.stance_height).abs() < 0.05, "height {}", pose[1]);
            assert!(pose[2].abs() < 0.15, "pitch {}", pose[2]);
        }
    }

    #[test]
    fn standing_contact_carries_the_weight() {
        let model = PlantModel::default_biped();
        let params = PlantParams::zero();
        let gait = GaitParams::default();
        let mut ws = Workspace::new(&model);
        let mut rng = stream(8, &[1]);
        // The stand never settles (the contact bounce is underdamped), so an
        // instantaneous force probe is meaningless: sample every physics step
        // over a window instead. Impulse balance says the mean vertical
        // contact force equals the weight while the robot stays put.
        let mut state = nominal_stance_state(&model, &gait);
        let legs = model.leg_geometry();
        let mut sum_normal = 0.0;
        let mut samples = 0usize;
        for k in 0..150 {
            state.t = k as f64 * model.dt_control();
            let (aq, aqd) = actuated(&model, &state.q, &state.qd);
            let obs = GaitObs {
                joint_q: aq,
                joint_qd: aqd,
                pitch: state.q[2],
            };
            let (targets, _) = gait_targets(state.t, 0.0, &gait, &obs, &legs);
            for _ in 0..model.control_decimation {
                step(&model, &params, &mut ws, &mut state, &targets, &[0.0; 6], None, 0.0, &mut rng)
                    .unwrap();
                if k >= 50 {
                    ws.fk(&model, &state.q, &state.qd);
                    let forces = crate::plant::contact_probe(&model, &ws);
                    assert_eq!(forces.len(), 4);
                    sum_normal += forces.iter().map(|f| f.normal).sum::<f64>();
                    samples += 1;
                }
            }
        }
        let mean_normal = sum_normal / samples as f64;
        let weight = 7.2 * 9.81;
        assert!(
            (mean_normal - weight).abs() < 0.05 * weight,
            "mean normal {mean_normal} vs weight {weight}"
        );
    }

    #[test]
    fn rollouts_are_deterministic_and_full_length() {
        let model = PlantModel::default_biped();
        let params = PlantParams::zero();
        let gait = GaitParams::default();
        let m = ModificationInstance::Identity;
        let norm = HistNorm::identity();
        let setup = plain_setup(&model, &params, &gait, &m, &norm);
        let mut ws = Workspace::new(&model);
        let a = rollout(&setup, &mut ws, 0.3, 4.0, 0.5, &mut stream(9, &[0])).unwrap();
        let b = rollout(&setup, &mut ws, 0.3, 4.0, 0.5, &mut stream(9, &[0])).unwrap();
        assert_eq!(a.trajectory.rows(), 200);
        assert_eq!(a.trajectory.t, b.trajectory.t);
        assert_eq!(a.trajectory.joint_q, b.trajectory.joint_q);
        assert_eq!(a.trajectory.joint_qd, b.trajectory.joint_qd);
        assert_eq!(a.trajectory.action, b.trajectory.action);
        assert_eq!(a.sq_torque, b.sq_torque);
        let c = rollout(&setup, &mut ws, 0.3, 4.0, 0.5, &mut stream(9, &[1])).unwrap();
        assert_ne!(a.trajectory.joint_q, c.trajectory.joint_q);
    }

    #[test]
    fn zero_weight_networks_change_nothing() {
        let model = PlantModel::default_biped();
        let params = PlantParams::zero();
        let gait = GaitParams::default();
        let norm = HistNorm::identity();
        let identity = ModificationInstance::Identity;
        let setup = plain_setup(&model, &params, &gait, &identity, &norm);
        let mut ws = Workspace::new(&model);
        let base = rollout(&setup, &mut ws, 0.4, 2.0, 0.25, &mut stream(10, &[0])).unwrap();

        for spec in [
            ModificationSpec::action_delta(vec![0, 1, 2, 3, 4, 5]),
            ModificationSpec::residual_actuator(vec![0, 1, 2, 3, 4, 5], model.torque_limit),
        ] {
            let dim = spec.param_dim().unwrap();
            let (inst, _) = spec.decode(&vec![0.0; dim]).unwrap();
            let setup = plain_setup(&model, &params, &gait, &inst, &norm);
            let out = rollout(&setup, &mut ws, 0.4, 2.0, 0.25, &mut stream(10, &[0])).unwrap();
            assert_eq!(out.trajectory.joint_q, base.trajectory.joint_q);
            assert_eq!(out.trajectory.joint_qd, base.trajectory.joint_qd);
            assert_eq!(out.trajectory.action, base.trajectory.action);
        }

        let static_zero = ModificationSpec::static_params(vec![0, 1, 2]);
        let (inst, _) = static_zero.decode(&[0.0; 6]).unwrap();
        let setup = plain_setup(&model, &params, &gait, &inst, &norm);
        let out = rollout(&setup, &mut ws, 0.4, 2.0, 0.25, &mut stream(10, &[0])).unwrap();
        assert_eq!(out.trajectory.joint_q, base.trajectory.joint_q);
    }

    #[test]
    fn nominal_stance_is_reachable_and_level() {
        let model = PlantModel::default_biped();
        let gait = GaitParams::default();
        let state = nominal_stance_state(&model, &gait);
        assert_eq!(state.q.len(), 9);
        assert!((state.q[1] - gait.stance_height).abs() < 0.005);
        assert_eq!(state.q[2], 0.0);
        // Legs identical.
        for j in 0..3 {
            assert!((state.q[3 + j] - state.q[6 + j]).abs() < 1e-12);
        }
        // Feet contacts sit essentially at ground level.
        let mut ws = Workspace::new(&model);
        ws.fk(&model, &state.q, &state.qd);
        for (i, link) in model.links.iter().enumerate() {
            for &along in &link.contact_along {
                let (p, _) = ws.link_point(i, along);
                assert!(p[1].abs() < 0.005, "contact height {}", p[1]);
            }
        }
    }
}
