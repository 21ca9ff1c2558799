//! Ground contact: one-sided spring-damper normal force with regularized
//! Coulomb friction, applied at fixed points on the feet.

use serde::{Deserialize, Serialize};

use super::dynamics::Workspace;
use super::model::PlantModel;
use crate::error::{Error, Result};

/// Compliant ground parameters. The tangential force is smooth in slip
/// velocity, so slow creep under load is expected and bounded by `v_eps_t`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactParams {
    pub stiffness: f64,
    pub damping: f64,
    pub friction_mu: f64,
    pub slip_vel_scale: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        ContactParams {
            stiffness: 1.0e4,
            damping: 100.0,
            friction_mu: 0.8,
            slip_vel_scale: 0.01,
        }
    }
}

impl ContactParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.stiffness > 0.0 && self.damping >= 0.0) {
            return Err(Error::invalid("contact stiffness/damping out of range"));
        }
        if !(self.friction_mu >= 0.0 && self.slip_vel_scale > 0.0) {
            return Err(Error::invalid("contact friction parameters out of range"));
        }
        Ok(())
    }
}

/// Force at a single contact point, world frame.
#[derive(Clone, Copy, Debug, Default)]
pub struct ContactForce {
    pub point: [f64; 2],
    pub normal: f64,
    pub tangential: f64,
}

/// Force law for a point at height `z` with velocity `(vx, vz)`.
#[inline]
pub(super) fn point_force(p: &ContactParams, z: f64, vx: f64, vz: f64) -> (f64, f64) {
    if z >= 0.0 {
        return (0.0, 0.0);
    }
    let normal = (p.stiffness * (-z) - p.damping * vz).max(0.0);
    let tangential = -p.friction_mu * normal * (vx / p.slip_vel_scale).tanh();
    (normal, tangential)
}

/// Accumulates generalized contact forces into `out` for every contact point
/// of the model at the workspace's current kinematic state. Point forces map
/// through the same joint axes the dynamics use: the column of dof `d` for a
/// world force (fx, fz) at point p is fx*(s1 - s0*p_y) + fz*(s2 + s0*p_x).
pub(super) fn accumulate(
    model: &PlantModel,
    ws: &Workspace,
    out: &mut [f64],
) -> ([f64; 2], usize) {
    let params = &model.contact;
    let mut total = [0.0, 0.0];
    let mut active = 0;
    for (i, link) in model.links.iter().enumerate() {
        for &along in &link.contact_along {
            let (p, v) = ws.link_point(i, along);
            let (fn_, ft) = point_force(params, p[1], v[0], v[1]);
            if fn_ == 0.0 {
                continue;
            }
            active += 1;
            total[0] += ft;
            total[1] += fn_;
            for &d in &ws.chain[i] {
                let s = ws.s[d];
                out[d] += ft * (s[1] - s[0] * p[1]) + fn_ * (s[2] + s[0] * p[0]);
            }
        }
    }
    (total, active)
}

/// Reports per-point contact forces at the current kinematic state; test and
/// inspection helper, not used by the stepping loop.
pub fn contact_probe(model: &PlantModel, ws: &Workspace) -> Vec<ContactForce> {
    let mut forces = Vec::new();
    for (i, link) in model.links.iter().enumerate() {
        for &along in &link.contact_along {
            let (p, v) = ws.link_point(i, along);
            let (normal, tangential) = point_force(&model.contact, p[1], v[0], v[1]);
            forces.push(ContactForce {
                point: p,
                normal,
                tangential,
            });
        }
    }
    forces
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_force_above_ground() {
        let p = ContactParams::default();
        assert_eq!(point_force(&p, 0.001, 1.0, -1.0), (0.0, 0.0));
        assert_eq!(point_force(&p, 0.0, 1.0, -1.0), (0.0, 0.0));
    }

    #[test]
    fn static_penetration_force() {
        // 1 mm penetration at rest: 1e4 * 1e-3 = 10 N, no tangential force.
        let p = ContactParams::default();
        let (n, t) = point_force(&p, -1.0e-3, 0.0, 0.0);
        assert!((n - 10.0).abs() < 1e-12);
        assert_eq!(t, 0.0);
    }

    #[test]
    fn damping_adds_on_approach_and_never_pulls() {
        let p = ContactParams::default();
        let (n, _) = point_force(&p, -1.0e-3, 0.0, -0.05);
        assert!((n - 15.0).abs() < 1e-12);
        // Fast separation would make the spring-damper negative; clamped.
        let (n, t) = point_force(&p, -1.0e-3, 0.3, 0.5);
        assert_eq!(n, 0.0);
        assert_eq!(t, 0.0);
    }

    #[test]
    fn friction_saturates_and_opposes_slip() {
        let p = ContactParams::default();
        let (n, t) = point_force(&p, -1.0e-3, 0.5, 0.0);
        // At 50x the slip scale, tanh is saturated: |ft| ~ mu * fn.
        assert!((t + p.friction_mu * n).abs() < 1e-6);
        let (_, t_back) = point_force(&p, -1.0e-3, -0.5, 0.0);
        assert!((t_back - p.friction_mu * n).abs() < 1e-6);
        // Slow slip stays well inside the cone.
        let (_, t_slow) = point_force(&p, -1.0e-3, 1.0e-3, 0.0);
        assert!(t_slow.abs() < 0.11 * p.friction_mu * n);
    }
}
