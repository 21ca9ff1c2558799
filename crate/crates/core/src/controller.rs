//! Velocity-commanded walking controller: an open-loop gait clock per leg,
//! cycloidal swing and linear stance foot trajectories, and closed-form leg
//! inverse kinematics producing PD position targets for the six hinges.
//!
//! The controller is deliberately simple and shared verbatim by every
//! simulator variant; behavioral differences between variants come from the
//! plant, never from here.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Commanded speed below which the gait blends into a fixed standing pose.
pub const STAND_BLEND_SPEED: f64 = 0.05;

/// Foot-placement shift per radian of base lean (m/rad). Feet land ahead of
/// neutral when the trunk leans forward and behind when it leans back, which
/// is what keeps an otherwise open-loop clocked gait from toppling: the hip
/// PD already rights the trunk against the planted stance leg, but only a
/// placement response moves the support point back under the mass.
/// Calibrated together with the default [`GaitParams`].
pub const CAPTURE_GAIN: f64 = 0.35;

/// Commanded forward lean per unit speed command (rad per m/s). Walking
/// needs a sustained lean into the direction of travel; biasing the capture
/// equilibrium rather than the hip targets lets the placement channel both
/// build the lean and defend it.
pub const LEAN_PER_SPEED: f64 = 0.12;

/// Cap on the feedback placement shift (m), inside the reachable annulus.
pub const PLACEMENT_LIMIT: f64 = 0.10;

/// Walking pattern parameters. These are the knobs the gait search tunes;
/// defaults were tuned once on the unmodified plant and frozen.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaitParams {
    /// Gait cycles per second.
    pub frequency: f64,
    /// Fraction of the cycle each foot spends on the ground.
    pub duty: f64,
    /// Stride length per unit commanded speed (m per m/s).
    pub stride_gain: f64,
    /// Peak swing foot lift (m).
    pub clearance: f64,
    /// Hip height over the stance foot (m).
    pub stance_height: f64,
    /// Hip target correction per radian of base pitch.
    pub pitch_gain: f64,
    /// Gait-clock offset of the left leg relative to the right (rad).
    pub phase_offset: f64,
}

impl Default for GaitParams {
    fn default() -> Self {
        // Fixed by a search over the gait box on the unmodified plant (random
        // scan plus CMA-ES polish, cost = speed-tracking error, peak pitch
        // and early-termination penalties over commands in [-0.6, 0.6]).
        // The nominal gait walks every command in that range for the full
        // horizon and tracks +0.4 m/s within 0.09 m/s.
        GaitParams {
            frequency: 1.9258,
            duty: 0.5758,
            stride_gain: 0.1655,
            clearance: 0.1025,
            stance_height: 0.27,
            pitch_gain: -0.8714,
            phase_offset: 2.9143,
        }
    }
}

impl GaitParams {
    pub fn validate(&self, legs: &LegGeometry) -> Result<()> {
        if !(self.frequency > 0.0 && self.frequency.is_finite()) {
            return Err(Error::invalid("gait frequency must be positive"));
        }
        if !(self.duty > 0.0 && self.duty < 1.0) {
            return Err(Error::invalid("gait duty must lie in (0, 1)"));
        }
        if !(self.stride_gain >= 0.0 && self.clearance >= 0.0) {
            return Err(Error::invalid("stride gain and clearance must be nonnegative"));
        }
        if !(self.stance_height > 0.0 && self.stance_height < legs.l_thigh + legs.l_shank) {
            return Err(Error::invalid("stance height must leave the leg some knee bend"));
        }
        if !(self.pitch_gain.is_finite() && self.phase_offset.is_finite()) {
            return Err(Error::invalid("gait parameters must be finite"));
        }
        Ok(())
    }

    /// Flat parameter vector, the layout the gait search operates on.
    pub fn to_vec(&self) -> [f64; 7] {
        [
            self.frequency,
            self.duty,
            self.stride_gain,
            self.clearance,
            self.stance_height,
            self.pitch_gain,
            self.phase_offset,
        ]
    }

    pub fn from_vec(v: &[f64]) -> Result<Self> {
        if v.len() != 7 {
            return Err(Error::invalid("gait parameter vector must have 7 entries"));
        }
        Ok(GaitParams {
            frequency: v[0],
            duty: v[1],
            stride_gain: v[2],
            clearance: v[3],
            stance_height: v[4],
            pitch_gain: v[5],
            phase_offset: v[6],
        })
    }

    pub const PARAM_NAMES: [&'static str; 7] = [
        "frequency",
        "duty",
        "stride_gain",
        "clearance",
        "stance_height",
        "pitch_gain",
        "phase_offset",
    ];
}

/// Two-segment leg used by the closed-form inverse kinematics.
#[derive(Clone, Copy, Debug)]
pub struct LegGeometry {
    pub l_thigh: f64,
    pub l_shank: f64,
}

/// Feedback available to the controller at a control step: proprioceptive
/// joint state plus base pitch. Deliberately excludes world-frame pose and
/// velocity, which onboard sensing would not provide.
#[derive(Clone, Copy, Debug, Default)]
pub struct GaitObs {
    /// Hinge angles, right hip/knee/ankle then left.
    pub joint_q: [f64; 6],
    pub joint_qd: [f64; 6],
    pub pitch: f64,
}

impl GaitObs {
    /// Observation at rest with the given pitch; joint feedback zeroed.
    pub fn still(pitch: f64) -> Self {
        GaitObs {
            pitch,
            ..Default::default()
        }
    }
}

/// Hinge angles for one leg. `clamped` reports that the requested point was
/// outside the reachable annulus and was projected onto its boundary.
#[derive(Clone, Copy, Debug)]
pub struct IkSolution {
    pub hip: f64,
    pub knee: f64,
    pub ankle: f64,
    pub clamped: bool,
}

/// Places the ankle at (tx, tz) relative to the hip, x forward, z up (so
/// targets below the hip have tz < 0). Uses the branch with nonpositive knee
/// angle. The ankle angle levels the foot against the leg so that with zero
/// base pitch the sole stays horizontal.
pub fn leg_ik(legs: &LegGeometry, tx: f64, tz: f64) -> IkSolution {
    let (l1, l2) = (legs.l_thigh, legs.l_shank);
    let d_raw = (tx * tx + tz * tz).sqrt();
    let d = d_raw.clamp((l1 - l2).abs(), l1 + l2);
    let clamped = (d - d_raw).abs() > 1e-12;

    let cos_knee_interior = ((l1 * l1 + l2 * l2 - d * d) / (2.0 * l1 * l2)).clamp(-1.0, 1.0);
    let knee = cos_knee_interior.acos() - std::f64::consts::PI;
    let cos_hip_offset = if d > 1e-9 {
        ((l1 * l1 + d * d - l2 * l2) / (2.0 * l1 * d)).clamp(-1.0, 1.0)
    } else {
        // Degenerate fold (only reachable when l1 == l2): direction is free.
        0.0
    };
    let phi = tx.atan2(-tz);
    let hip = phi + cos_hip_offset.acos();
    let ankle = -(hip + knee);
    IkSolution {
        hip,
        knee,
        ankle,
        clamped,
    }
}

/// Forward check used by tests: ankle position for given hip and knee angles.
pub fn leg_fk(legs: &LegGeometry, hip: f64, knee: f64) -> [f64; 2] {
    let a1 = hip;
    let a2 = hip + knee;
    [
        legs.l_thigh * a1.sin() + legs.l_shank * a2.sin(),
        -(legs.l_thigh * a1.cos() + legs.l_shank * a2.cos()),
    ]
}

/// Foot target relative to the hip for one leg at cycle phase `s` in [0, 1).
/// Stance feet sweep backward linearly; swing feet return along a cycloid,
/// which leaves the ground with zero relative velocity at both ends.
fn foot_target(gait: &GaitParams, s: f64, stride: f64, lift: f64) -> [f64; 2] {
    let (x, z_lift) = if s < gait.duty {
        let u = s / gait.duty;
        (stride * (0.5 - u), 0.0)
    } else {
        let u = (s - gait.duty) / (1.0 - gait.duty);
        let two_pi_u = std::f64::consts::TAU * u;
        (
            stride * (u - two_pi_u.sin() / std::f64::consts::TAU - 0.5),
            gait.clearance * lift * (1.0 - two_pi_u.cos()) / 2.0,
        )
    };
    [x, -gait.stance_height + z_lift]
}

/// PD position targets for all six hinges (right hip, knee, ankle, then
/// left). Legs run half a cycle apart. As |vx_cmd| drops below
/// [`STAND_BLEND_SPEED`] the stride, lift and feedback terms fade out, so a
/// zero command yields a constant standing pose. Returns the targets and
/// whether any foot target needed reach clamping.
///
/// Two feedback paths act on the observations: hip targets receive a
/// `-pitch_gain * pitch` correction, and foot targets shift forward by
/// [`CAPTURE_GAIN`] times the forward lean (capped at [`PLACEMENT_LIMIT`]).
/// The shift ramps in over the swing so the foot lands displaced, then ramps
/// back out over stance; the weight is continuous at both hand-offs, so the
/// placement never steps the target of a planted foot.
pub fn gait_targets(
    t: f64,
    vx_cmd: f64,
    gait: &GaitParams,
    obs: &GaitObs,
    legs: &LegGeometry,
) -> ([f64; 6], bool) {
    let lift = (vx_cmd.abs() / STAND_BLEND_SPEED).clamp(0.0, 1.0);
    let stride = gait.stride_gain * vx_cmd;
    let phase = t * gait.frequency;
    let left_offset = gait.phase_offset / std::f64::consts::TAU;

    // Forward lean is negative pitch, so the shift is forward when leaning
    // forward past the commanded lean and backward short of it.
    let lean_error = obs.pitch + LEAN_PER_SPEED * vx_cmd;
    let placement = (-CAPTURE_GAIN * lean_error).clamp(-PLACEMENT_LIMIT, PLACEMENT_LIMIT) * lift;

    let mut out = [0.0; 6];
    let mut clamped = false;
    for (leg, offset) in [(0usize, 0.0), (1usize, left_offset)] {
        let s = (phase + offset).rem_euclid(1.0);
        let w = if s < gait.duty {
            1.0 - s / gait.duty
        } else {
            (s - gait.duty) / (1.0 - gait.duty)
        };
        let target = foot_target(gait, s, stride, lift);
        let ik = leg_ik(legs, target[0] + placement * w, target[1]);
        clamped |= ik.clamped;
        out[3 * leg] = ik.hip - gait.pitch_gain * obs.pitch;
        out[3 * leg + 1] = ik.knee;
        out[3 * leg + 2] = ik.ankle;
    }
    (out, clamped)
}

#[cfg(test)]
mod tests {
    use super::*;

    const LEGS: LegGeometry = LegGeometry {
        l_thigh: 0.22,
        l_shank: 0.22,
    };

    #[test]
    fn ik_right_angle_case() {
        // Equal segments, target straight down at l * sqrt(2): interior knee
        // angle is 90 degrees, hip offset 45 degrees.
        let d = 0.22 * std::f64::consts::SQRT_2;
        let ik = leg_ik(&LEGS, 0.0, -d);
        assert!(!ik.clamped);
        assert!((ik.hip - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
        assert!((ik.knee + std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert!((ik.ankle - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
    }

    #[test]
    fn ik_round_trips_through_fk() {
        for &(tx, tz) in &[
            (0.0, -0.40),
            (0.12, -0.35),
            (-0.1, -0.30),
            (0.2, -0.2),
            (0.05, -0.435),
        ] {
            let ik = leg_ik(&LEGS, tx, tz);
            assert!(!ik.clamped, "({tx}, {tz}) should be reachable");
            assert!(ik.knee <= 1e-12, "knee branch must bend backward");
            let p = leg_fk(&LEGS, ik.hip, ik.knee);
            assert!((p[0] - tx).abs() < 1e-12 && (p[1] - tz).abs() < 1e-12);
        }
    }

    #[test]
    fn ik_clamps_out_of_reach() {
        let ik = leg_ik(&LEGS, 0.0, -0.5);
        assert!(ik.clamped);
        assert!(ik.hip.abs() < 1e-12 && ik.knee.abs() < 1e-12);
        let p = leg_fk(&LEGS, ik.hip, ik.knee);
        assert!((p[1] + 0.44).abs() < 1e-12);
    }

    #[test]
    fn zero_command_is_a_constant_stand() {
        let gait = GaitParams::default();
        // Nonzero joint feedback must not leak into a standing pose.
        let mut obs = GaitObs::still(0.0);
        obs.joint_qd = [0.3, -0.2, 0.1, 0.05, 0.0, -0.4];
        let (ref_targets, _) = gait_targets(0.0, 0.0, &gait, &obs, &LEGS);
        for k in 0..50 {
            let t = 0.037 * k as f64;
            let (targets, clamped) = gait_targets(t, 0.0, &gait, &obs, &LEGS);
            assert!(!clamped);
            for j in 0..6 {
                assert!((targets[j] - ref_targets[j]).abs() < 1e-12);
            }
        }
        // Both legs identical when standing.
        assert!((ref_targets[0] - ref_targets[3]).abs() < 1e-12);
    }

    #[test]
    fn stance_sweeps_back_and_swing_returns() {
        let gait = GaitParams::default();
        let stride = gait.stride_gain * 0.4;
        // Stance endpoints.
        let start = foot_target(&gait, 0.0, stride, 1.0);
        let end = foot_target(&gait, gait.duty - 1e-12, stride, 1.0);
        assert!((start[0] - stride / 2.0).abs() < 1e-9);
        assert!((end[0] + stride / 2.0).abs() < 1e-9);
        assert_eq!(start[1], -gait.stance_height);
        // Swing is continuous at both hand-offs and lifts mid-flight.
        let swing_start = foot_target(&gait, gait.duty, stride, 1.0);
        assert!((swing_start[0] - end[0]).abs() < 1e-9);
        assert!((swing_start[1] - end[1]).abs() < 1e-9);
        let mid = foot_target(&gait, gait.duty + (1.0 - gait.duty) / 2.0, stride, 1.0);
        assert!((mid[1] - (-gait.stance_height + gait.clearance)).abs() < 1e-12);
        let swing_end = foot_target(&gait, 1.0 - 1e-12, stride, 1.0);
        assert!((swing_end[0] - start[0]).abs() < 1e-6);
    }

    #[test]
    fn legs_run_half_a_cycle_apart() {
        // With the offset pinned at pi the legs mirror each other half a
        // period apart (the calibrated default offset is deliberately not pi).
        let mut gait = GaitParams::default();
        gait.phase_offset = std::f64::consts::PI;
        let obs = GaitObs::still(0.0);
        let t = 0.3;
        let (a, _) = gait_targets(t, 0.4, &gait, &obs, &LEGS);
        let (b, _) = gait_targets(t + 0.5 / gait.frequency, 0.4, &gait, &obs, &LEGS);
        for j in 0..3 {
            assert!((a[j] - b[3 + j]).abs() < 1e-9);
            assert!((a[3 + j] - b[j]).abs() < 1e-9);
        }
    }

    #[test]
    fn targets_are_periodic_in_the_gait_cycle() {
        let gait = GaitParams::default();
        let obs = GaitObs::still(0.02);
        for k in 0..7 {
            let t = 0.11 + 0.13 * k as f64;
            let (a, _) = gait_targets(t, 0.35, &gait, &obs, &LEGS);
            let (b, _) = gait_targets(t + 1.0 / gait.frequency, 0.35, &gait, &obs, &LEGS);
            for j in 0..6 {
                assert!((a[j] - b[j]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn hip_correction_channel_moves_only_hips() {
        // Isolate the -pitch_gain * pitch term by differencing two gains at
        // the same observation; the placement channel cancels exactly.
        let mut with_gain = GaitParams::default();
        with_gain.pitch_gain = -0.7;
        let mut no_gain = with_gain;
        no_gain.pitch_gain = 0.0;
        let obs = GaitObs::still(0.1);
        let (a, _) = gait_targets(0.2, 0.4, &with_gain, &obs, &LEGS);
        let (b, _) = gait_targets(0.2, 0.4, &no_gain, &obs, &LEGS);
        for leg in 0..2 {
            let dh = a[3 * leg] - b[3 * leg];
            assert!((dh + with_gain.pitch_gain * 0.1).abs() < 1e-12);
            assert_eq!(a[3 * leg + 1], b[3 * leg + 1]);
            assert_eq!(a[3 * leg + 2], b[3 * leg + 2]);
        }
    }

    #[test]
    fn forward_lean_lands_feet_forward() {
        let mut gait = GaitParams::default();
        gait.pitch_gain = 0.0;
        let level = GaitObs::still(0.0);
        let leaning = GaitObs::still(-0.1);
        // Late in the right leg's swing the placement weight is near one, so
        // a forward lean must pull that foot target forward (larger hip
        // angle) before it lands.
        let t_late_swing = (gait.duty + 0.95 * (1.0 - gait.duty)) / gait.frequency;
        let (neutral, _) = gait_targets(t_late_swing, 0.3, &gait, &level, &LEGS);
        let (caught, _) = gait_targets(t_late_swing, 0.3, &gait, &leaning, &LEGS);
        assert!(
            caught[0] > neutral[0] + 1e-3,
            "swing hip must reach forward under a forward lean: {} vs {}",
            caught[0],
            neutral[0]
        );
        // An extreme lean saturates the shift instead of blowing up.
        let (capped, clamped) = gait_targets(t_late_swing, 0.3, &gait, &GaitObs::still(-2.0), &LEGS);
        assert!(!clamped && capped[0].is_finite());
        // Standing blends the placement channel away entirely.
        let (standing, _) = gait_targets(0.05, 0.0, &gait, &leaning, &LEGS);
        let (standing_ref, _) = gait_targets(0.05, 0.0, &gait, &level, &LEGS);
        for j in 0..6 {
            assert!((standing[j] - standing_ref[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn placement_weight_is_continuous_at_handoffs() {
        let mut gait = GaitParams::default();
        gait.pitch_gain = 0.0;
        let obs = GaitObs::still(-0.15);
        let eps = 1e-9;
        // Just before and after touchdown (phase wrap) and liftoff (s =
        // duty) the shifted targets must agree.
        for s0 in [0.0, gait.duty] {
            let t_before = (s0 - eps).rem_euclid(1.0) / gait.frequency;
            let t_after = (s0 + eps) / gait.frequency;
            let (a, _) = gait_targets(t_before, 0.4, &gait, &obs, &LEGS);
            let (b, _) = gait_targets(t_after, 0.4, &gait, &obs, &LEGS);
            for j in 0..6 {
                assert!(
                    (a[j] - b[j]).abs() < 1e-6,
                    "target {j} jumps across s = {s0}: {} vs {}",
                    a[j],
                    b[j]
                );
            }
        }
    }

    #[test]
    fn default_gait_validates() {
        GaitParams::default().validate(&LEGS).unwrap();
        let mut g = GaitParams::default();
        g.duty = 1.0;
        assert!(g.validate(&LEGS).is_err());
        g = GaitParams::default();
        g.stance_height = 0.5;
        assert!(g.validate(&LEGS).is_err());
    }

    #[test]
    fn roundtrip_vec() {
        let g = GaitParams::default();
        let v = g.to_vec();
        let g2 = GaitParams::from_vec(&v).unwrap();
        assert_eq!(g.to_vec(), g2.to_vec());
        assert!(GaitParams::from_vec(&v[..5]).is_err());
    }
}
