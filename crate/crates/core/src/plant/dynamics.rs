//! Rigid-body kinematics and dynamics in planar absolute coordinates.
//!
//! All spatial quantities live in a single fixed world frame about the world
//! origin O. A planar motion vector is (omega, vx, vy) where (vx, vy) is the
//! velocity of the body-fixed point currently at O; a force vector is
//! (moment about O, fx, fy). In this formulation no frame transforms are
//! needed: a hinge at world anchor `a` has axis s = (1, a_y, -a_x), and
//! subtree inertias simply add.
//!
//! The mass matrix comes from a composite-rigid-body pass; bias forces and
//! inverse dynamics from a Newton-Euler pass using the momentum-derivative
//! form f = I(c) a + dI/dt v, which carries all Coriolis and centrifugal
//! terms. The two routes are independent enough that tests reconstruct M
//! column-by-column from the Newton-Euler pass and cross-check.

use super::model::{PlantModel, PlantParams};
use crate::error::{Error, Result};

#[inline]
fn perp(v: [f64; 2]) -> [f64; 2] {
    [-v[1], v[0]]
}

/// 3x3 symmetric planar spatial inertia about the world origin.
#[derive(Clone, Copy, Default)]
struct SpatialInertia {
    ww: f64,
    wx: f64,
    wy: f64,
    m: f64,
}

impl SpatialInertia {
    /// Inertia of a body with mass m, com inertia ic, world com position c.
    #[inline]
    fn about_origin(m: f64, ic: f64, c: [f64; 2]) -> Self {
        SpatialInertia {
            ww: ic + m * (c[0] * c[0] + c[1] * c[1]),
            wx: -m * c[1],
            wy: m * c[0],
            m,
        }
    }

    #[inline]
    fn add(&mut self, o: &SpatialInertia) {
        self.ww += o.ww;
        self.wx += o.wx;
        self.wy += o.wy;
        self.m += o.m;
    }

    /// I * v for a motion vector v = (omega, vx, vy).
    #[inline]
    fn mul(&self, v: [f64; 3]) -> [f64; 3] {
        [
            self.ww * v[0] + self.wx * v[1] + self.wy * v[2],
            self.wx * v[0] + self.m * v[1],
            self.wy * v[0] + self.m * v[2],
        ]
    }
}

#[inline]
fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Preallocated scratch for one simulated system. Holds the topology derived
/// from the model plus every per-step buffer, so stepping allocates nothing.
pub struct Workspace {
    nq: usize,
    nl: usize,
    base_dof: usize,
    parent: Vec<Option<usize>>,
    hinge_dof: Vec<Option<usize>>,
    /// Supporting dofs of each link, root-to-leaf order, own hinge last.
    pub(super) chain: Vec<Vec<usize>>,
    group_idx: Vec<usize>,

    // Kinematics, filled by `fk`.
    pub(super) theta: Vec<f64>,
    pub(super) dir: Vec<[f64; 2]>,
    pub(super) origin: Vec<[f64; 2]>,
    pub(super) com: Vec<[f64; 2]>,
    pub(super) omega: Vec<f64>,
    pub(super) v_origin: Vec<[f64; 2]>,
    pub(super) v_com: Vec<[f64; 2]>,
    /// Motion axis per dof.
    pub(super) s: Vec<[f64; 3]>,
    /// Time derivative of the motion axis per dof.
    sdot: Vec<[f64; 3]>,

    inertia: Vec<SpatialInertia>,
    composite: Vec<SpatialInertia>,
    accel: Vec<[f64; 3]>,
    force: Vec<[f64; 3]>,

    pub(super) m: Vec<f64>,
    chol: Vec<f64>,
    pub(super) bias: Vec<f64>,
    pub(super) rhs: Vec<f64>,
    pub(super) qdd: Vec<f64>,
    pub(super) tau: Vec<f64>,
}

impl Workspace {
    pub fn new(model: &PlantModel) -> Self {
        let nl = model.links.len();
        let nq = model.nq();
        let base_dof = model.base_dof();
        let parent: Vec<Option<usize>> = model.links.iter().map(|l| l.parent).collect();
        let hinge_dof: Vec<Option<usize>> = (0..nl).map(|i| model.hinge_dof(i)).collect();
        let mut chain: Vec<Vec<usize>> = Vec::with_capacity(nl);
        for i in 0..nl {
            let mut c = match parent[i] {
                Some(p) => chain[p].clone(),
                None => Vec::new(),
            };
            if i == 0 && model.floating_base {
                c.extend([0, 1, 2]);
            }
            if let Some(d) = hinge_dof[i] {
                c.push(d);
            }
            chain.push(c);
        }
        let group_idx = model.links.iter().map(|l| l.group.index()).collect();
        Workspace {
            nq,
            nl,
            base_dof,
            parent,
            hinge_dof,
            chain,
            group_idx,
            theta: vec![0.0; nl],
            dir: vec![[0.0; 2]; nl],
            origin: vec![[0.0; 2]; nl],
            com: vec![[0.0; 2]; nl],
            omega: vec![0.0; nl],
            v_origin: vec![[0.0; 2]; nl],
            v_com: vec![[0.0; 2]; nl],
            s: vec![[0.0; 3]; nq],
            sdot: vec![[0.0; 3]; nq],
            inertia: vec![SpatialInertia::default(); nl],
            composite: vec![SpatialInertia::default(); nl],
            accel: vec![[0.0; 3]; nl],
            force: vec![[0.0; 3]; nl],
            m: vec![0.0; nq * nq],
            chol: vec![0.0; nq * nq],
            bias: vec![0.0; nq],
            rhs: vec![0.0; nq],
            qdd: vec![0.0; nq],
            tau: vec![0.0; nq],
        }
    }

    pub fn nq(&self) -> usize {
        self.nq
    }

    /// Forward kinematics: positions, orientations, velocities, joint axes
    /// and their time derivatives.
    pub fn fk(&mut self, model: &PlantModel, q: &[f64], qd: &[f64]) {
        debug_assert_eq!(q.len(), self.nq);
        debug_assert_eq!(qd.len(), self.nq);
        if model.floating_base {
            self.s[0] = [0.0, 1.0, 0.0];
            self.s[1] = [0.0, 0.0, 1.0];
            self.sdot[0] = [0.0; 3];
            self.sdot[1] = [0.0; 3];
            // Pitch hinge rides at the base point, which translates with the
            // two prismatic dofs.
            self.s[2] = [1.0, q[1], -q[0]];
            self.sdot[2] = [0.0, qd[1], -qd[0]];
        }
        for i in 0..self.nl {
            let link = &model.links[i];
            let (p_theta, p_omega, anchor, v_anchor) = match self.parent[i] {
                Some(p) => {
                    let a = [
                        self.origin[p][0] + link.anchor_along * self.dir[p][0],
                        self.origin[p][1] + link.anchor_along * self.dir[p][1],
                    ];
                    let r = [a[0] - self.origin[p][0], a[1] - self.origin[p][1]];
                    let va = [
                        self.v_origin[p][0] - self.omega[p] * r[1],
                        self.v_origin[p][1] + self.omega[p] * r[0],
                    ];
                    (self.theta[p] - model.links[p].mount_angle, self.omega[p], a, va)
                }
                None => {
                    if model.floating_base {
                        (q[2], qd[2], [q[0], q[1]], [qd[0], qd[1]])
                    } else {
                        (0.0, 0.0, [0.0, 0.0], [0.0, 0.0])
                    }
                }
            };
            let (hq, hqd) = match self.hinge_dof[i] {
                Some(d) => {
                    self.s[d] = [1.0, anchor[1], -anchor[0]];
                    self.sdot[d] = [0.0, v_anchor[1], -v_anchor[0]];
                    (q[d], qd[d])
                }
                None => (0.0, 0.0),
            };
            let theta = p_theta + hq + link.mount_angle;
            let omega = p_omega + hqd;
            let dir = [theta.sin(), -theta.cos()];
            let com = [
                anchor[0] + link.com_along * dir[0],
                anchor[1] + link.com_along * dir[1],
            ];
            let rc = [com[0] - anchor[0], com[1] - anchor[1]];
            self.theta[i] = theta;
            self.dir[i] = dir;
            self.origin[i] = anchor;
            self.com[i] = com;
            self.omega[i] = omega;
            self.v_origin[i] = v_anchor;
            self.v_com[i] = [v_anchor[0] - omega * rc[1], v_anchor[1] + omega * rc[0]];
        }
    }

    /// Mass matrix by the planar composite-rigid-body pass, armature added on
    /// actuated hinge diagonals. Requires `fk` for the same `q` first.
    pub fn mass_matrix(&mut self, model: &PlantModel, params: &PlantParams) -> &[f64] {
        let nq = self.nq;
        self.m.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.nl {
            let l = &model.links[i];
            self.inertia[i] = SpatialInertia::about_origin(l.mass, l.inertia_com, self.com[i]);
            self.composite[i] = self.inertia[i];
        }
        for i in (1..self.nl).rev() {
            let c = self.composite[i];
            if let Some(p) = self.parent[i] {
                self.composite[p].add(&c);
            }
        }
        for i in 0..self.nl {
            let Some(d) = self.hinge_dof[i] else { continue };
            let f = self.composite[i].mul(self.s[d]);
            for &a in &self.chain[i] {
                let v = dot3(self.s[a], f);
                self.m[a * nq + d] = v;
                self.m[d * nq + a] = v;
            }
            self.m[d * nq + d] += params.joint_armature[self.group_idx[i]];
        }
        if model.floating_base {
            let total = self.composite[0];
            for a in 0..3 {
                let f = total.mul(self.s[a]);
                for b in a..3 {
                    let v = dot3(self.s[b], f);
                    self.m[a * nq + b] = v;
                    self.m[b * nq + a] = v;
                }
            }
        }
        &self.m
    }

    /// Inverse dynamics by the recursive Newton-Euler pass: generalized
    /// forces realizing `qdd` at state (q, qd), gravity optional, armature
    /// included. Requires `fk` for the same state first. Results land in
    /// `self.tau`.
    pub fn rnea(
        &mut self,
        model: &PlantModel,
        params: &PlantParams,
        qd: &[f64],
        qdd: &[f64],
        with_gravity: bool,
    ) -> &[f64] {
        let g = if with_gravity { model.gravity } else { 0.0 };
        for i in 0..self.nl {
            let l = &model.links[i];
            // Spatial velocity and acceleration about the world origin.
            let mut a = match self.parent[i] {
                Some(p) => self.accel[p],
                None => [0.0; 3],
            };
            if i == 0 && model.floating_base {
                for d in 0..3 {
                    for k in 0..3 {
                        a[k] += self.s[d][k] * qdd[d] + self.sdot[d][k] * qd[d];
                    }
                }
            }
            if let Some(d) = self.hinge_dof[i] {
                for k in 0..3 {
                    a[k] += self.s[d][k] * qdd[d] + self.sdot[d][k] * qd[d];
                }
            }
            self.accel[i] = a;

            let om = self.omega[i];
            let vo = [
                self.v_origin[i][0] + om * self.origin[i][1],
                self.v_origin[i][1] - om * self.origin[i][0],
            ];
            let v = [om, vo[0], vo[1]];
            let inertia = SpatialInertia::about_origin(l.mass, l.inertia_com, self.com[i]);
            let mut f = inertia.mul(a);
            // dI/dt * v: only the com position moves.
            let c = self.com[i];
            let cd = self.v_com[i];
            let m = l.mass;
            f[0] += 2.0 * m * (c[0] * cd[0] + c[1] * cd[1]) * v[0] - m * cd[1] * v[1]
                + m * cd[0] * v[2];
            f[1] += -m * cd[1] * v[0];
            f[2] += m * cd[0] * v[0];
            // Gravity wrench about the origin, subtracted from the demand.
            f[0] += m * g * c[0];
            f[2] += m * g;
            self.force[i] = f;
        }
        for i in (1..self.nl).rev() {
            let f = self.force[i];
            if let Some(p) = self.parent[i] {
                for k in 0..3 {
                    self.force[p][k] += f[k];
                }
            }
        }
        for d in 0..self.base_dof {
            self.tau[d] = dot3(self.s[d], self.force[0]);
        }
        for i in 0..self.nl {
            if let Some(d) = self.hinge_dof[i] {
                self.tau[d] =
                    dot3(self.s[d], self.force[i]) + params.joint_armature[self.group_idx[i]] * qdd[d];
            }
        }
        &self.tau
    }

    /// Velocity-dependent and gravity forces: `rnea` with zero acceleration.
    /// Results land in `self.bias`.
    pub fn bias_forces(&mut self, model: &PlantModel, params: &PlantParams, qd: &[f64]) -> &[f64] {
        self.qdd.iter_mut().for_each(|v| *v = 0.0);
        let zeros = std::mem::take(&mut self.qdd);
        self.rnea(model, params, qd, &zeros, true);
        self.qdd = zeros;
        self.bias.copy_from_slice(&self.tau);
        &self.bias
    }

    /// Kinetic and potential energy at the state of the last `fk`, armature
    /// included in the kinetic term.
    pub fn energy(&self, model: &PlantModel, params: &PlantParams, qd: &[f64]) -> (f64, f64) {
        let mut kin = 0.0;
        let mut pot = 0.0;
        for i in 0..self.nl {
            let l = &model.links[i];
            let vc = self.v_com[i];
            kin += 0.5 * l.mass * (vc[0] * vc[0] + vc[1] * vc[1])
                + 0.5 * l.inertia_com * self.omega[i] * self.omega[i];
            pot += l.mass * model.gravity * self.com[i][1];
            if let Some(d) = self.hinge_dof[i] {
                kin += 0.5 * params.joint_armature[self.group_idx[i]] * qd[d] * qd[d];
            }
        }
        (kin, pot)
    }

    /// Solves `M x = rhs` with the mass matrix from the last `mass_matrix`
    /// call, by in-place Cholesky. `rhs` is `self.rhs`; the solution lands in
    /// `self.qdd`.
    pub(super) fn solve_mass(&mut self) -> Result<()> {
        let n = self.nq;
        self.chol.copy_from_slice(&self.m);
        let a = &mut self.chol;
        for j in 0..n {
            let mut d = a[j * n + j];
            for k in 0..j {
                d -= a[j * n + k] * a[j * n + k];
            }
            if !(d > 1e-12) {
                return Err(Error::runtime("mass matrix lost positive definiteness"));
            }
            let d = d.sqrt();
            a[j * n + j] = d;
            for i in j + 1..n {
                let mut v = a[i * n + j];
                for k in 0..j {
                    v -= a[i * n + k] * a[j * n + k];
                }
                a[i * n + j] = v / d;
            }
        }
        // Forward then backward substitution.
        let x = &mut self.qdd;
        x.copy_from_slice(&self.rhs);
        for i in 0..n {
            for k in 0..i {
                x[i] = x[i] - a[i * n + k] * x[k];
            }
            x[i] /= a[i * n + i];
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                x[i] = x[i] - a[k * n + i] * x[k];
            }
            x[i] /= a[i * n + i];
        }
        Ok(())
    }

    /// World position and velocity of a point at `along` on link `i`'s axis.
    pub fn link_point(&self, i: usize, along: f64) -> ([f64; 2], [f64; 2]) {
        let p = [
            self.origin[i][0] + along * self.dir[i][0],
            self.origin[i][1] + along * self.dir[i][1],
        ];
        let r = [p[0] - self.origin[i][0], p[1] - self.origin[i][1]];
        let pv = perp(r);
        let v = [
            self.v_origin[i][0] + self.omega[i] * pv[0],
            self.v_origin[i][1] + self.omega[i] * pv[1],
        ];
        (p, v)
    }
}
