use serde::{Deserialize, Serialize};

use super::contact::ContactParams;
use crate::error::{Error, Result};
use crate::trajdata::N_JOINTS;

/// Actuation group of a hinge. Friction and armature are shared per group
/// across both legs, mirroring identical actuators at matching joints.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointGroup {
    Hip,
    Knee,
    Ankle,
}

pub const N_GROUPS: usize = 3;

impl JointGroup {
    pub fn index(self) -> usize {
        match self {
            JointGroup::Hip => 0,
            JointGroup::Knee => 1,
            JointGroup::Ankle => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            JointGroup::Hip => "hip",
            JointGroup::Knee => "knee",
            JointGroup::Ankle => "ankle",
        }
    }

    pub const ALL: [JointGroup; N_GROUPS] = [JointGroup::Hip, JointGroup::Knee, JointGroup::Ankle];
}

/// One link together with the hinge that attaches it to its parent.
///
/// A link is a segment along a unit axis. With all angles zero the axis
/// points straight down; `mount_angle` rotates it (the torso mounts pointing
/// up, feet mount pointing forward so they lie flat). The hinge sits at
/// `anchor_along` on the parent's axis. The root link's hinge fields are
/// ignored when the base floats.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkJoint {
    pub name: String,
    pub parent: Option<usize>,
    #[serde(default)]
    pub anchor_along: f64,
    pub group: JointGroup,
    pub mass: f64,
    /// Rotational inertia about the center of mass (kg m^2).
    pub inertia_com: f64,
    pub length: f64,
    pub com_along: f64,
    #[serde(default)]
    pub mount_angle: f64,
    /// Contact point offsets along the link axis (feet carry heel and toe).
    #[serde(default)]
    pub contact_along: Vec<f64>,
}

/// Fixed morphology plus simulation constants. Everything that the gap
/// search may vary lives in [`PlantParams`] instead.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantModel {
    /// Free planar base (x, z, pitch) ahead of the hinge coordinates. When
    /// false the root link attaches to the world origin by its own hinge.
    pub floating_base: bool,
    pub links: Vec<LinkJoint>,
    /// PD gains shared by all actuated hinges.
    pub kp: f64,
    pub kd: f64,
    pub torque_limit: f64,
    pub dt_physics: f64,
    /// Physics steps per control step.
    pub control_decimation: u32,
    pub gravity: f64,
    pub contact: ContactParams,
}

impl PlantModel {
    pub fn base_dof(&self) -> usize {
        if self.floating_base {
            3
        } else {
            0
        }
    }

    pub fn n_hinges(&self) -> usize {
        self.links.len() - usize::from(self.floating_base)
    }

    pub fn nq(&self) -> usize {
        self.base_dof() + self.n_hinges()
    }

    pub fn dt_control(&self) -> f64 {
        self.dt_physics * self.control_decimation as f64
    }

    /// Generalized-coordinate index of link `i`'s hinge, if it has one.
    pub fn hinge_dof(&self, link: usize) -> Option<usize> {
        if self.floating_base {
            if link == 0 {
                None
            } else {
                Some(2 + link)
            }
        } else {
            Some(link)
        }
    }

    /// Link moved by hinge number `h` (hinges are numbered in link order).
    pub fn link_of_hinge(&self, h: usize) -> usize {
        h + usize::from(self.floating_base)
    }

    pub fn validate(&self) -> Result<()> {
        if self.links.is_empty() {
            return Err(Error::invalid("model has no links"));
        }
        if self.links[0].parent.is_some() {
            return Err(Error::invalid("links[0] must be the root (parent = none)"));
        }
        for (i, l) in self.links.iter().enumerate() {
            match l.parent {
                None if i > 0 => {
                    return Err(Error::invalid(format!(
                        "link {i} ({}) has no parent but is not the root",
                        l.name
                    )))
                }
                Some(p) if p >= i => {
                    return Err(Error::invalid(format!(
                        "link {i} ({}) must come after its parent {p}",
                        l.name
                    )))
                }
                _ => {}
            }
            if !(l.mass > 0.0) || !l.mass.is_finite() {
                return Err(Error::invalid(format!("link {} needs positive mass", l.name)));
            }
            if l.inertia_com < 0.0 || !l.inertia_com.is_finite() {
                return Err(Error::invalid(format!(
                    "link {} needs nonnegative com inertia",
                    l.name
                )));
            }
            if !(l.length >= 0.0) {
                return Err(Error::invalid(format!("link {} has negative length", l.name)));
            }
        }
        if !(self.dt_physics > 0.0) {
            return Err(Error::invalid("dt_physics must be positive"));
        }
        if self.control_decimation == 0 {
            return Err(Error::invalid("control_decimation must be at least 1"));
        }
        if self.kp < 0.0 || self.kd < 0.0 || !(self.torque_limit > 0.0) {
            return Err(Error::invalid("PD gains must be nonnegative, torque limit positive"));
        }
        self.contact.validate()?;
        Ok(())
    }

    /// Thigh and shank lengths, assumed equal across legs (validated by the
    /// default morphology).
    pub fn leg_geometry(&self) -> crate::controller::LegGeometry {
        // Links 1 and 2 are the first leg's thigh and shank by construction.
        crate::controller::LegGeometry {
            l_thigh: self.links[1].length,
            l_shank: self.links[2].length,
        }
    }

    /// Default morphology: torso plus two identical legs (hip, knee, ankle),
    /// six actuated hinges, nine generalized coordinates.
    pub fn default_biped() -> Self {
        fn leg(side: &str, torso: usize) -> [LinkJoint; 3] {
            let thigh = LinkJoint {
                name: format!("thigh_{side}"),
                parent: Some(torso),
                anchor_along: 0.0,
                group: JointGroup::Hip,
                mass: 0.8,
                inertia_com: 0.8 * 0.22 * 0.22 / 12.0,
                length: 0.22,
                com_along: 0.11,
                mount_angle: 0.0,
                contact_along: Vec::new(),
            };
            let shank = LinkJoint {
                name: format!("shank_{side}"),
                parent: None, // patched by caller
                anchor_along: 0.22,
                group: JointGroup::Knee,
                mass: 0.6,
                inertia_com: 0.6 * 0.22 * 0.22 / 12.0,
                length: 0.22,
                com_along: 0.11,
                mount_angle: 0.0,
                contact_along: Vec::new(),
            };
            let foot = LinkJoint {
                name: format!("foot_{side}"),
                parent: None, // patched by caller
                anchor_along: 0.22,
                group: JointGroup::Ankle,
                mass: 0.2,
                inertia_com: 0.2 * 0.12 * 0.12 / 12.0,
                length: 0.12,
                com_along: 0.02,
                // Points forward when the leg chain is at zero angles.
                mount_angle: std::f64::consts::FRAC_PI_2,
                contact_along: vec![-0.04, 0.08],
            };
            [thigh, shank, foot]
        }

        let torso = LinkJoint {
            name: "torso".into(),
            parent: None,
            anchor_along: 0.0,
            group: JointGroup::Hip, // unused: floating root has no hinge
            mass: 4.0,
            inertia_com: 4.0 * 0.40 * 0.40 / 12.0,
            length: 0.40,
            com_along: 0.18,
            // Axis points up from the hip.
            mount_angle: std::f64::consts::PI,
            contact_along: Vec::new(),
        };

        let mut links = vec![torso];
        for side in ["r", "l"] {
            let base = links.len();
            let [mut thigh, mut shank, mut foot] = leg(side, 0);
            thigh.parent = Some(0);
            shank.parent = Some(base);
            foot.parent = Some(base + 1);
            links.extend([thigh, shank, foot]);
        }

        let model = PlantModel {
            floating_base: true,
            links,
            kp: 30.0,
            kd: 0.5,
            torque_limit: 20.0,
            dt_physics: 1e-3,
            control_decimation: 20,
            gravity: 9.81,
            contact: ContactParams::default(),
        };
        debug_assert_eq!(model.n_hinges(), N_JOINTS);
        model
    }

    /// Single link pinned at the world origin; the classic sanity fixture.
    pub fn pendulum(mass: f64, length: f64) -> Self {
        PlantModel {
            floating_base: false,
            links: vec![LinkJoint {
                name: "rod".into(),
                parent: None,
                anchor_along: 0.0,
                group: JointGroup::Hip,
                mass,
                inertia_com: mass * length * length / 12.0,
                length,
                com_along: length / 2.0,
                mount_angle: 0.0,
                contact_along: Vec::new(),
            }],
            kp: 0.0,
            kd: 0.0,
            torque_limit: 1.0,
            dt_physics: 1e-3,
            control_decimation: 20,
            gravity: 9.81,
            contact: ContactParams::default(),
        }
    }

    /// Two-link chain pinned at the world origin.
    pub fn double_pendulum() -> Self {
        let mut m = Self::pendulum(1.2, 0.9);
        m.links[0].name = "upper".into();
        m.links.push(LinkJoint {
            name: "lower".into(),
            parent: Some(0),
            anchor_along: 0.9,
            group: JointGroup::Knee,
            mass: 0.7,
            inertia_com: 0.7 * 0.6 * 0.6 / 12.0,
            length: 0.6,
            com_along: 0.3,
            mount_angle: 0.0,
            contact_along: Vec::new(),
        });
        m
    }
}

/// Spring attached in parallel to one hinge, pulling it toward a setpoint.
/// Used by scenarios that emulate a mechanical change on the target robot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpringAttachment {
    /// Hinge index (0..n_hinges).
    pub joint: usize,
    pub stiffness: f64,
    pub setpoint: f64,
    #[serde(default)]
    pub damping: f64,
}

impl SpringAttachment {
    pub fn torque(&self, q: f64, qd: f64) -> f64 {
        -self.stiffness * (q - self.setpoint) - self.damping * qd
    }
}

/// The physical parameters the identification search may change, separated
/// from the fixed model. Friction and armature are per [`JointGroup`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantParams {
    /// Dry friction magnitude per group (N m), applied as a smoothed Coulomb
    /// torque opposing joint velocity.
    pub joint_friction: [f64; N_GROUPS],
    /// Reflected rotor inertia per group (kg m^2), added to the mass-matrix
    /// diagonal of actuated hinges.
    pub joint_armature: [f64; N_GROUPS],
    #[serde(default)]
    pub spring: Option<SpringAttachment>,
}

impl PlantParams {
    pub fn zero() -> Self {
        PlantParams {
            joint_friction: [0.0; N_GROUPS],
            joint_armature: [0.0; N_GROUPS],
            spring: None,
        }
    }

    pub fn validate(&self, model: &PlantModel) -> Result<()> {
        for v in self.joint_friction.iter().chain(self.joint_armature.iter()) {
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::invalid(
                    "friction and armature must be finite and nonnegative",
                ));
            }
        }
        if let Some(s) = &self.spring {
            if s.joint >= model.n_hinges() {
                return Err(Error::invalid(format!(
                    "spring joint {} out of range ({} hinges)",
                    s.joint,
                    model.n_hinges()
                )));
            }
            if !s.stiffness.is_finite() || s.stiffness < 0.0 || s.damping < 0.0 {
                return Err(Error::invalid("spring stiffness/damping must be nonnegative"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_biped_shape() {
        let m = PlantModel::default_biped();
        m.validate().unwrap();
        assert_eq!(m.links.len(), 7);
        assert_eq!(m.n_hinges(), 6);
        assert_eq!(m.nq(), 9);
        assert_eq!(m.base_dof(), 3);
        assert_eq!(m.hinge_dof(0), None);
        assert_eq!(m.hinge_dof(1), Some(3));
        assert_eq!(m.hinge_dof(6), Some(8));
        assert_eq!(m.link_of_hinge(0), 1);
        // Hinge order is right hip/knee/ankle then left hip/knee/ankle.
        let groups: Vec<JointGroup> = (0..6)
            .map(|h| m.links[m.link_of_hinge(h)].group)
            .collect();
        assert_eq!(
            groups,
            [
                JointGroup::Hip,
                JointGroup::Knee,
                JointGroup::Ankle,
                JointGroup::Hip,
                JointGroup::Knee,
                JointGroup::Ankle
            ]
        );
        assert!((m.dt_control() - 0.02).abs() < 1e-15);
    }

    #[test]
    fn pendulum_shape() {
        let m = PlantModel::pendulum(1.0, 1.0);
        m.validate().unwrap();
        assert_eq!(m.nq(), 1);
        assert_eq!(m.hinge_dof(0), Some(0));
    }

    #[test]
    fn validation_rejects_misordered_tree() {
        let mut m = PlantModel::double_pendulum();
        m.links[1].parent = Some(1);
        assert!(m.validate().is_err());
    }

    #[test]
    fn spring_torque_worked_example() {
        let s = SpringAttachment {
            joint: 2,
            stiffness: 15.0,
            setpoint: 0.3,
            damping: 0.0,
        };
        assert!((s.torque(0.5, 0.0) - (-3.0)).abs() < 1e-12);
    }

    #[test]
    fn params_validation() {
        let m = PlantModel::default_biped();
        let mut p = PlantParams::zero();
        p.validate(&m).unwrap();
        p.joint_friction[1] = -0.1;
        assert!(p.validate(&m).is_err());
        p.joint_friction[1] = 0.1;
        p.spring = Some(SpringAttachment {
            joint: 6,
            stiffness: 1.0,
            setpoint: 0.0,
            damping: 0.0,
        });
        assert!(p.validate(&m).is_err());
    }
}
