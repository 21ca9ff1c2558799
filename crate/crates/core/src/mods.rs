//! Simulator modification families and their encoding as flat parameter
//! vectors for black-box search.
//!
//! Three kinds: direct friction/armature overrides, per-joint networks that
//! offset the PD position targets once per control step, and per-joint
//! networks that add a torque residual every physics step. Network weights
//! are searched directly; a zero vector is always the identity modification.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{PlantParams, N_GROUPS};
use crate::trajdata::{Normalizer, N_JOINTS};

/// Weight count of one per-joint network: 6 inputs, hidden layers of 8 and
/// 4, scalar output; tanh everywhere.
pub const NET_WEIGHTS: usize = 6 * 8 + 8 + 8 * 4 + 4 + 4 + 1;

/// Default offset bound for position-target networks (rad).
pub const DEFAULT_ACTION_SCALE: f64 = 0.2;

/// Default torque-residual bound as a fraction of the torque limit.
pub const DEFAULT_RESIDUAL_SCALE_FRAC: f64 = 0.3;

/// Which simulator aspect a modification changes, plus the mask of joint
/// groups or joints it may touch.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "mask")]
pub enum ModKind {
    /// Friction and armature values per masked joint group.
    StaticParams(Vec<usize>),
    /// One network per masked joint, shifting that joint's PD target.
    ActionDelta(Vec<usize>),
    /// One network per masked joint, adding torque at the physics rate.
    ResidualActuator(Vec<usize>),
}

impl ModKind {
    /// Filesystem-safe family tag used in output names.
    pub fn slug(&self) -> &'static str {
        match self {
            ModKind::StaticParams(_) => "static",
            ModKind::ActionDelta(_) => "action_delta",
            ModKind::ResidualActuator(_) => "resid_act",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModificationSpec {
    pub kind: ModKind,
    /// Network output bound: rad for target offsets, N m for residual
    /// torque. Ignored by static overrides.
    pub output_scale: f64,
}

fn check_mask(mask: &[usize], limit: usize, what: &str) -> Result<()> {
    if mask.is_empty() {
        return Err(Error::invalid(format!("{what} mask is empty")));
    }
    for (i, &v) in mask.iter().enumerate() {
        if v >= limit {
            return Err(Error::invalid(format!("{what} index {v} out of range")));
        }
        if i > 0 && mask[i - 1] >= v {
            return Err(Error::invalid(format!("{what} mask must be strictly increasing")));
        }
    }
    Ok(())
}

impl ModificationSpec {
    pub fn static_params(groups: Vec<usize>) -> Self {
        ModificationSpec {
            kind: ModKind::StaticParams(groups),
            output_scale: 0.0,
        }
    }

    pub fn action_delta(joints: Vec<usize>) -> Self {
        ModificationSpec {
            kind: ModKind::ActionDelta(joints),
            output_scale: DEFAULT_ACTION_SCALE,
        }
    }

    pub fn residual_actuator(joints: Vec<usize>, torque_limit: f64) -> Self {
        ModificationSpec {
            kind: ModKind::ResidualActuator(joints),
            output_scale: DEFAULT_RESIDUAL_SCALE_FRAC * torque_limit,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            ModKind::StaticParams(groups) => check_mask(groups, N_GROUPS, "group")?,
            ModKind::ActionDelta(joints) => {
                check_mask(joints, N_JOINTS, "joint")?;
                if !(self.output_scale > 0.0) {
                    return Err(Error::invalid("network output scale must be positive"));
                }
            }
            ModKind::ResidualActuator(joints) => {
                check_mask(joints, N_JOINTS, "joint")?;
                if !(self.output_scale > 0.0) {
                    return Err(Error::invalid("network output scale must be positive"));
                }
            }
        }
        Ok(())
    }

    /// Flat search-space dimension.
    pub fn param_dim(&self) -> Result<usize> {
        self.validate()?;
        Ok(match &self.kind {
            ModKind::StaticParams(groups) => 2 * groups.len(),
            ModKind::ActionDelta(joints) | ModKind::ResidualActuator(joints) => {
                NET_WEIGHTS * joints.len()
            }
        })
    }

    /// Per-coordinate search bounds.
    pub fn bounds(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let dim = self.param_dim()?;
        Ok(match self.kind {
            ModKind::StaticParams(_) => (vec![0.0; dim], vec![0.5; dim]),
            _ => (vec![-1.0; dim], vec![1.0; dim]),
        })
    }

    /// Per-coordinate initial search scale.
    pub fn init_sigma(&self) -> Result<Vec<f64>> {
        let dim = self.param_dim()?;
        Ok(match &self.kind {
            ModKind::StaticParams(groups) => {
                let g = groups.len();
                let mut s = vec![0.1; dim];
                s[g..].iter_mut().for_each(|v| *v = 0.05);
                s
            }
            _ => vec![0.25; dim],
        })
    }

    /// Human-readable coordinate names for reports.
    pub fn param_names(&self) -> Result<Vec<String>> {
        self.validate()?;
        Ok(match &self.kind {
            ModKind::StaticParams(groups) => {
                let group_name = |g: usize| ["hip", "knee", "ankle"][g];
                groups
                    .iter()
                    .map(|&g| format!("friction_{}", group_name(g)))
                    .chain(groups.iter().map(|&g| format!("armature_{}", group_name(g))))
                    .collect()
            }
            ModKind::ActionDelta(joints) | ModKind::ResidualActuator(joints) => joints
                .iter()
                .flat_map(|&j| (0..NET_WEIGHTS).map(move |w| format!("joint{j}_w{w}")))
                .collect(),
        })
    }

    /// Decodes a flat vector into a runtime modification. Out-of-bounds
    /// coordinates are clamped; the flag reports whether any were.
    pub fn decode(&self, theta: &[f64]) -> Result<(ModificationInstance, bool)> {
        let dim = self.param_dim()?;
        if theta.len() != dim {
            return Err(Error::invalid(format!(
                "parameter vector has {} entries, modification needs {dim}",
                theta.len()
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("parameter vector must be finite"));
        }
        let (lo, hi) = self.bounds()?;
        let mut clamped = false;
        let mut x = theta.to_vec();
        for (i, v) in x.iter_mut().enumerate() {
            let c = v.clamp(lo[i], hi[i]);
            if c != *v {
                clamped = true;
                *v = c;
            }
        }
        let instance = match &self.kind {
            ModKind::StaticParams(groups) => {
                let g = groups.len();
                ModificationInstance::Static(StaticOverride {
                    groups: groups.clone(),
                    friction: x[..g].to_vec(),
                    armature: x[g..].to_vec(),
                })
            }
            ModKind::ActionDelta(joints) => {
                ModificationInstance::ActionDelta(NetBank::from_flat(joints, &x, self.output_scale))
            }
            ModKind::ResidualActuator(joints) => ModificationInstance::ResidualActuator(
                NetBank::from_flat(joints, &x, self.output_scale),
            ),
        };
        Ok((instance, clamped))
    }
}

/// Friction/armature values for a subset of joint groups.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StaticOverride {
    pub groups: Vec<usize>,
    pub friction: Vec<f64>,
    pub armature: Vec<f64>,
}

impl StaticOverride {
    /// Base parameters with the masked groups replaced.
    pub fn apply(&self, base: &PlantParams) -> PlantParams {
        let mut p = base.clone();
        for (k, &g) in self.groups.iter().enumerate() {
            p.joint_friction[g] = self.friction[k];
            p.joint_armature[g] = self.armature[k];
        }
        p
    }
}

/// One network per masked joint, weights in the documented flat order:
/// first-layer rows, first-layer biases, second-layer rows, second-layer
/// biases, output row, output bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetBank {
    pub joints: Vec<usize>,
    pub nets: Vec<Vec<f64>>,
    pub output_scale: f64,
}

impl NetBank {
    fn from_flat(joints: &[usize], x: &[f64], output_scale: f64) -> Self {
        let nets = joints
            .iter()
            .enumerate()
            .map(|(k, _)| x[k * NET_WEIGHTS..(k + 1) * NET_WEIGHTS].to_vec())
            .collect();
        NetBank {
            joints: joints.to_vec(),
            nets,
            output_scale,
        }
    }

    /// Scaled network outputs accumulated into `out[joint]`. `hist` rows are
    /// the three most recent (q, qd) samples of all joints, oldest first.
    pub fn eval(
        &self,
        hist_q: &[[f64; N_JOINTS]; 3],
        hist_qd: &[[f64; N_JOINTS]; 3],
        norm: &HistNorm,
        out: &mut [f64; N_JOINTS],
    ) {
        for (net, &j) in self.nets.iter().zip(&self.joints) {
            let input = [
                (hist_q[0][j] - norm.q_shift[j]) / norm.q_scale[j],
                (hist_q[1][j] - norm.q_shift[j]) / norm.q_scale[j],
                (hist_q[2][j] - norm.q_shift[j]) / norm.q_scale[j],
                (hist_qd[0][j] - norm.qd_shift[j]) / norm.qd_scale[j],
                (hist_qd[1][j] - norm.qd_shift[j]) / norm.qd_scale[j],
                (hist_qd[2][j] - norm.qd_shift[j]) / norm.qd_scale[j],
            ];
            out[j] += self.output_scale * mlp_forward(net, &input);
        }
    }
}

/// Decoded runtime form of a modification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModificationInstance {
    /// Unmodified simulator.
    Identity,
    Static(StaticOverride),
    ActionDelta(NetBank),
    ResidualActuator(NetBank),
}

impl ModificationInstance {
    /// Plant parameters after any static override.
    pub fn plant_params(&self, base: &PlantParams) -> PlantParams {
        match self {
            ModificationInstance::Static(s) => s.apply(base),
            _ => base.clone(),
        }
    }

    pub fn action_net(&self) -> Option<&NetBank> {
        match self {
            ModificationInstance::ActionDelta(b) => Some(b),
            _ => None,
        }
    }

    pub fn residual_net(&self) -> Option<&NetBank> {
        match self {
            ModificationInstance::ResidualActuator(b) => Some(b),
            _ => None,
        }
    }

    /// Inverse of [`ModificationSpec::decode`] on in-bounds instances.
    pub fn encode(&self) -> Vec<f64> {
        match self {
            ModificationInstance::Identity => Vec::new(),
            ModificationInstance::Static(s) => {
                s.friction.iter().chain(s.armature.iter()).copied().collect()
            }
            ModificationInstance::ActionDelta(b) | ModificationInstance::ResidualActuator(b) => {
                b.nets.concat()
            }
        }
    }
}

/// Joint-history normalization for network inputs, frozen from the target
/// set's channel normalizer so weight bounds of one correspond to a usable
/// function class.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HistNorm {
    pub q_shift: [f64; N_JOINTS],
    pub q_scale: [f64; N_JOINTS],
    pub qd_shift: [f64; N_JOINTS],
    pub qd_scale: [f64; N_JOINTS],
}

impl HistNorm {
    pub fn identity() -> Self {
        HistNorm {
            q_shift: [0.0; N_JOINTS],
            q_scale: [1.0; N_JOINTS],
            qd_shift: [0.0; N_JOINTS],
            qd_scale: [1.0; N_JOINTS],
        }
    }

    /// Pulls the joint position/velocity channels out of a fitted channel
    /// normalizer (channels 0..6 are q, 6..12 are qd).
    pub fn from_normalizer(n: &Normalizer) -> Self {
        let mut h = HistNorm::identity();
        for j in 0..N_JOINTS {
            h.q_shift[j] = n.shift[j];
            h.q_scale[j] = n.scale[j];
            h.qd_shift[j] = n.shift[N_JOINTS + j];
            h.qd_scale[j] = n.scale[N_JOINTS + j];
        }
        h
    }
}

/// Forward pass of one per-joint network: tanh on both hidden layers and the
/// output, so the result lies in (-1, 1).
pub fn mlp_forward(w: &[f64], input: &[f64; 6]) -> f64 {
    debug_assert_eq!(w.len(), NET_WEIGHTS);
    let (w1, rest) = w.split_at(48);
    let (b1, rest) = rest.split_at(8);
    let (w2, rest) = rest.split_at(32);
    let (b2, rest) = rest.split_at(4);
    let (w3, b3) = rest.split_at(4);
    let mut h1 = [0.0; 8];
    for o in 0..8 {
        let mut acc = b1[o];
        for i in 0..6 {
            acc += w1[o * 6 + i] * input[i];
        }
        h1[o] = acc.tanh();
    }
    let mut h2 = [0.0; 4];
    for o in 0..4 {
        let mut acc = b2[o];
        for i in 0..8 {
            acc += w2[o * 8 + i] * h1[i];
        }
        h2[o] = acc.tanh();
    }
    let mut y = b3[0];
    for i in 0..4 {
        y += w3[i] * h2[i];
    }
    y.tanh()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rngstream::stream;
    use rand::Rng;

    #[test]
    fn dimensions() {
        assert_eq!(NET_WEIGHTS, 97);
        let s = ModificationSpec::static_params(vec![0, 1, 2]);
        assert_eq!(s.param_dim().unwrap(), 6);
        let a = ModificationSpec::action_delta(vec![2]);
        assert_eq!(a.param_dim().unwrap(), 97);
        let r = ModificationSpec::residual_actuator(vec![0, 1, 2, 3, 4, 5], 20.0);
        assert_eq!(r.param_dim().unwrap(), 582);
        assert!((r.output_scale - 6.0).abs() < 1e-12);
    }

    #[test]
    fn masks_are_validated() {
        assert!(ModificationSpec::static_params(vec![]).param_dim().is_err());
        assert!(ModificationSpec::static_params(vec![3]).param_dim().is_err());
        assert!(ModificationSpec::action_delta(vec![1, 1]).param_dim().is_err());
        assert!(ModificationSpec::action_delta(vec![6]).param_dim().is_err());
    }

    #[test]
    fn static_decode_layout() {
        let spec = ModificationSpec::static_params(vec![0, 1, 2]);
        let theta = [0.2, 0.15, 0.1, 0.1, 0.05, 0.075];
        let (inst, clamped) = spec.decode(&theta).unwrap();
        assert!(!clamped);
        let ModificationInstance::Static(s) = &inst else {
            panic!("wrong kind")
        };
        assert_eq!(s.friction, vec![0.2, 0.15, 0.1]);
        assert_eq!(s.armature, vec![0.1, 0.05, 0.075]);
        let p = s.apply(&PlantParams::zero());
        assert_eq!(p.joint_friction, [0.2, 0.15, 0.1]);
        assert_eq!(p.joint_armature, [0.1, 0.05, 0.075]);
        assert_eq!(inst.encode(), theta.to_vec());
    }

    #[test]
    fn partial_group_mask_touches_only_masked_groups() {
        let spec = ModificationSpec::static_params(vec![2]);
        let (inst, _) = spec.decode(&[0.3, 0.2]).unwrap();
        let mut base = PlantParams::zero();
        base.joint_friction = [0.9, 0.9, 0.9];
        let p = inst.plant_params(&base);
        assert_eq!(p.joint_friction, [0.9, 0.9, 0.3]);
        assert_eq!(p.joint_armature, [0.0, 0.0, 0.2]);
    }

    #[test]
    fn decode_clamps_and_flags() {
        let spec = ModificationSpec::static_params(vec![0]);
        let (inst, clamped) = spec.decode(&[0.7, -0.2]).unwrap();
        assert!(clamped);
        let ModificationInstance::Static(s) = inst else {
            panic!()
        };
        assert_eq!(s.friction[0], 0.5);
        assert_eq!(s.armature[0], 0.0);
    }

    #[test]
    fn decode_rejects_bad_vectors() {
        let spec = ModificationSpec::action_delta(vec![0]);
        assert!(spec.decode(&[0.0; 96]).is_err());
        let mut theta = vec![0.0; 97];
        theta[5] = f64::NAN;
        assert!(spec.decode(&theta).is_err());
    }

    #[test]
    fn zero_weights_are_identity() {
        let spec = ModificationSpec::action_delta(vec![0, 3, 5]);
        let (inst, _) = spec.decode(&vec![0.0; 291]).unwrap();
        let bank = inst.action_net().unwrap();
        let mut rng = stream(41, &[0]);
        for _ in 0..10 {
            let q = std::array::from_fn(|_| std::array::from_fn(|_| rng.random_range(-2.0..2.0)));
            let qd = std::array::from_fn(|_| std::array::from_fn(|_| rng.random_range(-9.0..9.0)));
            let mut out = [0.0; N_JOINTS];
            bank.eval(&q, &qd, &HistNorm::identity(), &mut out);
            assert_eq!(out, [0.0; N_JOINTS]);
        }
    }

    #[test]
    fn encode_decode_round_trip() {
        let mut rng = stream(42, &[0]);
        for spec in [
            ModificationSpec::static_params(vec![0, 2]),
            ModificationSpec::action_delta(vec![1, 4]),
            ModificationSpec::residual_actuator(vec![2], 20.0),
        ] {
            let dim = spec.param_dim().unwrap();
            let (lo, hi) = spec.bounds().unwrap();
            for _ in 0..5 {
                let theta: Vec<f64> = (0..dim)
                    .map(|i| rng.random_range(lo[i]..hi[i]))
                    .collect();
                let (inst, clamped) = spec.decode(&theta).unwrap();
                assert!(!clamped);
                assert_eq!(inst.encode(), theta);
                let (inst2, _) = spec.decode(&inst.encode()).unwrap();
                assert_eq!(inst, inst2);
            }
        }
    }

    /// Second forward-pass implementation with explicit matrix arithmetic,
    /// kept independent of the production indexing.
    fn mlp_oracle(w: &[f64], input: &[f64; 6]) -> f64 {
        use nalgebra::{DMatrix, DVector};
        let w1 = DMatrix::from_row_slice(8, 6, &w[0..48]);
        let b1 = DVector::from_column_slice(&w[48..56]);
        let w2 = DMatrix::from_row_slice(4, 8, &w[56..88]);
        let b2 = DVector::from_column_slice(&w[88..92]);
        let w3 = DMatrix::from_row_slice(1, 4, &w[92..96]);
        let b3 = w[96];
        let x = DVector::from_column_slice(input);
        let h1 = (w1 * x + b1).map(f64::tanh);
        let h2 = (w2 * h1 + b2).map(f64::tanh);
        ((w3 * h2)[(0, 0)] + b3).tanh()
    }

    #[test]
    fn forward_pass_matches_matrix_oracle() {
        let mut rng = stream(43, &[0]);
        for _ in 0..50 {
            let w: Vec<f64> = (0..NET_WEIGHTS).map(|_| rng.random_range(-1.0..1.0)).collect();
            let input = std::array::from_fn(|_| rng.random_range(-3.0..3.0));
            let got = mlp_forward(&w, &input);
            let want = mlp_oracle(&w, &input);
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
            assert!(got.abs() < 1.0);
        }
    }

    #[test]
    fn output_is_bounded_by_scale() {
        let mut rng = stream(44, &[0]);
        let spec = ModificationSpec::residual_actuator(vec![0, 1, 2, 3, 4, 5], 20.0);
        let dim = spec.param_dim().unwrap();
        let theta: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (inst, _) = spec.decode(&theta).unwrap();
        let bank = inst.residual_net().unwrap();
        for _ in 0..20 {
            let q = std::array::from_fn(|_| std::array::from_fn(|_| rng.random_range(-50.0..50.0)));
            let qd = std::array::from_fn(|_| std::array::from_fn(|_| rng.random_range(-50.0..50.0)));
            let mut out = [0.0; N_JOINTS];
            bank.eval(&q, &qd, &HistNorm::identity(), &mut out);
            for v in out {
                assert!(v.abs() <= 6.0);
            }
        }
    }

    #[test]
    fn hist_norm_from_channel_normalizer() {
        let mut n = Normalizer::identity();
        n.shift[2] = 0.4;
        n.scale[2] = 2.0;
        n.shift[8] = -1.0;
        n.scale[8] = 5.0;
        let h = HistNorm::from_normalizer(&n);
        assert_eq!(h.q_shift[2], 0.4);
        assert_eq!(h.q_scale[2], 2.0);
        assert_eq!(h.qd_shift[2], -1.0);
        assert_eq!(h.qd_scale[2], 5.0);
    }
}
