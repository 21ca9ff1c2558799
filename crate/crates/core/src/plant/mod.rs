//! Planar rigid-body simulator for a torso-plus-two-legs robot.
//!
//! Bodies form a tree of links connected by hinge joints in the x-z plane;
//! the root link is either free (planar floating base: x, z, pitch) or
//! attached to the world by its own hinge (test fixtures such as pendulums).
//! Dynamics are exact rigid-body equations assembled by a planar
//! composite-rigid-body pass for the mass matrix and a recursive
//! Newton-Euler pass for bias forces, integrated semi-implicitly at 1 kHz,
//! with spring-damper ground contact and PD joint actuation.

mod contact;
mod dynamics;
mod model;
mod sim;

pub use contact::{contact_probe, ContactForce, ContactParams};
pub use dynamics::Workspace;
pub use model::{JointGroup, LinkJoint, PlantModel, PlantParams, SpringAttachment, N_GROUPS};
pub use sim::{
    actuation_torque, nominal_stance_state, rollout, step, History, RolloutOut, SimSetup, SimState,
    JOINT_FRICTION_VEL_EPS, TERMINATE_HEIGHT, TERMINATE_PITCH,
};
