//! Rollout trajectories, on-disk trajectory sets, marginal sample extraction,
//! and the frozen channel normalizer.
//!
//! A trajectory set is stored as a JSONL file (one trajectory per line) plus
//! a `<name>.manifest.json` sidecar carrying schema version, provenance and
//! integrity fields. Loading re-validates everything; a set that fails
//! validation is rejected rather than repaired.

use std::io::{BufRead, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Actuated joints of the default morphology (two legs, hip/knee/ankle).
pub const N_JOINTS: usize = 6;
/// Scalar marginal channels: 6 joint positions, 6 velocities, 6 actions.
pub const N_CHANNELS: usize = 3 * N_JOINTS;
/// Channel ranges of the three groups (positions, velocities, actions).
pub const ACT_GROUPS: [Range<usize>; 3] = [0..6, 6..12, 12..18];

pub const SCHEMA_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// Trajectory
// ---------------------------------------------------------------------------

/// One rollout at the control rate. `base_pose`/`base_vel` are privileged
/// fields ((x, z, pitch) and their rates); they are present for sim-side data
/// and may be stripped to emulate proprioception-only recordings.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trajectory {
    pub dt_control: f64,
    /// Commanded forward velocity, constant over the trajectory (m/s).
    pub command: f64,
    /// Set when the rollout terminated early (fall); such trajectories keep
    /// the rows recorded up to termination.
    pub failed: bool,
    /// Leading control rows dropped by a temporal shift (target-side noise).
    pub shift_rows: u32,
    pub t: Vec<f64>,
    pub joint_q: Vec<[f64; N_JOINTS]>,
    pub joint_qd: Vec<[f64; N_JOINTS]>,
    pub action: Vec<[f64; N_JOINTS]>,
    pub base_pose: Option<Vec<[f64; 3]>>,
    pub base_vel: Option<Vec<[f64; 3]>>,
}

impl Trajectory {
    pub fn rows(&self) -> usize {
        self.t.len()
    }

    pub fn has_privileged(&self) -> bool {
        self.base_pose.is_some() && self.base_vel.is_some()
    }

    /// Structural validation: consistent row counts across fields, re-zeroed
    /// uniform timestamps, finite values, and row count consistent with the
    /// expected horizon unless the trajectory failed early.
    pub fn validate(&self, expected_rows: usize, dt_control: f64) -> Result<()> {
        let n = self.rows();
        if n == 0 {
            return Err(Error::invalid("trajectory has no rows"));
        }
        if (self.dt_control - dt_control).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "trajectory dt_control {} does not match set dt_control {}",
                self.dt_control, dt_control
            )));
        }
        if self.joint_q.len() != n || self.joint_qd.len() != n || self.action.len() != n {
            return Err(Error::invalid(
                "trajectory field lengths disagree with timestamp count",
            ));
        }
        for (name, col) in [("base_pose", &self.base_pose), ("base_vel", &self.base_vel)] {
            if let Some(col) = col {
                if col.len() != n {
                    return Err(Error::invalid(format!("{name} length disagrees")));
                }
            }
        }
        let full = n + self.shift_rows as usize;
        if full > expected_rows || (full < expected_rows && !self.failed) {
            return Err(Error::invalid(format!(
                "trajectory has {n} rows (+{} shifted) for an expected {expected_rows} and is not flagged failed",
                self.shift_rows
            )));
        }
        for (i, &t) in self.t.iter().enumerate() {
            if (t - i as f64 * dt_control).abs() > 1e-9 {
                return Err(Error::invalid(format!(
                    "timestamp {i} is {t}, expected {}",
                    i as f64 * dt_control
                )));
            }
        }
        let finite_rows = |rows: &[[f64; N_JOINTS]]| rows.iter().flatten().all(|v| v.is_finite());
        if !self.t.iter().all(|v| v.is_finite())
            || !finite_rows(&self.joint_q)
            || !finite_rows(&self.joint_qd)
            || !finite_rows(&self.action)
        {
            return Err(Error::invalid("trajectory contains non-finite values"));
        }
        Ok(())
    }

    /// Drops `k` leading control rows and re-zeroes the timestamps. Models
    /// the target-side temporal desynchronization.
    pub fn apply_temporal_shift(&mut self, k: usize) -> Result<()> {
        if k == 0 {
            return Ok(());
        }
        if k >= self.rows() {
            return Err(Error::invalid(format!(
                "temporal shift of {k} rows would empty a {}-row trajectory",
                self.rows()
            )));
        }
        self.t.drain(..k);
        let t0 = self.t[0];
        for t in &mut self.t {
            *t -= t0;
        }
        self.joint_q.drain(..k);
        self.joint_qd.drain(..k);
        self.action.drain(..k);
        if let Some(p) = &mut self.base_pose {
            p.drain(..k);
        }
        if let Some(v) = &mut self.base_vel {
            v.drain(..k);
        }
        self.shift_rows += k as u32;
        Ok(())
    }

    pub fn strip_privileged(&mut self) {
        self.base_pose = None;
        self.base_vel = None;
    }
}

// ---------------------------------------------------------------------------
// Manifest and set
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub scenario: String,
    pub master_seed: u64,
    pub count: usize,
    pub horizon_s: f64,
    pub dt_control: f64,
    /// Hex hash of the generating configuration, for provenance.
    pub params_hash: String,
    pub privileged: bool,
}

#[derive(Clone, Debug)]
pub struct TrajectorySet {
    pub manifest: Manifest,
    pub trajectories: Vec<Trajectory>,
}

impl TrajectorySet {
    pub fn expected_rows(&self) -> usize {
        (self.manifest.horizon_s / self.manifest.dt_control).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.manifest.schema_version != SCHEMA_VERSION {
            return Err(Error::Integrity(format!(
                "unsupported schema version {} (expected {})",
                self.manifest.schema_version, SCHEMA_VERSION
            )));
        }
        if self.manifest.count != self.trajectories.len() {
            return Err(Error::Integrity(format!(
                "manifest count {} does not match {} trajectories",
                self.manifest.count,
                self.trajectories.len()
            )));
        }
        let rows = self.expected_rows();
        for (i, traj) in self.trajectories.iter().enumerate() {
            traj.validate(rows, self.manifest.dt_control)
                .map_err(|e| Error::Integrity(format!("trajectory {i}: {e}")))?;
            if self.manifest.privileged && !traj.has_privileged() {
                return Err(Error::Integrity(format!(
                    "trajectory {i} lacks privileged fields claimed by the manifest"
                )));
            }
        }
        Ok(())
    }

    pub fn strip_privileged(&mut self) {
        for t in &mut self.trajectories {
            t.strip_privileged();
        }
        self.manifest.privileged = false;
    }

    fn manifest_path(jsonl: &Path) -> std::path::PathBuf {
        let stem = jsonl
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "set".to_string());
        jsonl.with_file_name(format!("{stem}.manifest.json"))
    }

    /// Writes `<path>` (JSONL, one trajectory per line) and the manifest
    /// sidecar. Output bytes are a pure function of the data.
    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        }
        let ctx = |e| Error::io(path.display().to_string(), e);
        let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(ctx)?);
        for traj in &self.trajectories {
            let line = serde_json::to_string(traj)
                .map_err(|e| Error::runtime(format!("serializing trajectory: {e}")))?;
            file.write_all(line.as_bytes()).map_err(ctx)?;
            file.write_all(b"\n").map_err(ctx)?;
        }
        file.flush().map_err(ctx)?;
        let mpath = Self::manifest_path(path);
        let body = serde_json::to_string_pretty(&self.manifest)
            .map_err(|e| Error::runtime(format!("serializing manifest: {e}")))?;
        std::fs::write(&mpath, body + "\n").map_err(|e| Error::io(mpath.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mpath = Self::manifest_path(path);
        let mbody = std::fs::read_to_string(&mpath)
            .map_err(|e| Error::io(mpath.display().to_string(), e))?;
        let manifest: Manifest = serde_json::from_str(&mbody).map_err(|e| Error::Parse {
            path: mpath.display().to_string(),
            line: e.line(),
            msg: e.to_string(),
        })?;
        let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let reader = std::io::BufReader::new(file);
        let mut trajectories = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
            if line.trim().is_empty() {
                continue;
            }
            let traj: Trajectory = serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: idx + 1,
                msg: e.to_string(),
            })?;
            trajectories.push(traj);
        }
        let set = TrajectorySet {
            manifest,
            trajectories,
        };
        set.validate()?;
        Ok(set)
    }
}

// ---------------------------------------------------------------------------
// Marginal samples and normalizer
// ---------------------------------------------------------------------------

/// Flattened per-channel samples pooled over all rows of all trajectories
/// (failed trajectories included: their rows are real data).
#[derive(Clone, Debug)]
pub struct MarginalSamples {
    channels: Vec<Vec<f64>>,
}

impl MarginalSamples {
    pub fn empty() -> Self {
        MarginalSamples {
            channels: vec![Vec::new(); N_CHANNELS],
        }
    }

    pub fn from_set(set: &TrajectorySet) -> Self {
        Self::from_trajectories(&set.trajectories)
    }

    pub fn from_trajectories(trajs: &[Trajectory]) -> Self {
        let total: usize = trajs.iter().map(|t| t.rows()).sum();
        let mut channels = vec![Vec::with_capacity(total); N_CHANNELS];
        for traj in trajs {
            for r in 0..traj.rows() {
                for j in 0..N_JOINTS {
                    channels[j].push(traj.joint_q[r][j]);
                    channels[N_JOINTS + j].push(traj.joint_qd[r][j]);
                    channels[2 * N_JOINTS + j].push(traj.action[r][j]);
                }
            }
        }
        MarginalSamples { channels }
    }

    /// Sample count per channel.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.channels[c]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut Vec<f64> {
        &mut self.channels[c]
    }

    pub fn check_finite(&self) -> Result<()> {
        for (c, ch) in self.channels.iter().enumerate() {
            if ch.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("channel {c} has non-finite samples")));
            }
        }
        Ok(())
    }
}

/// Per-channel affine map `(x - shift) / scale` fitted on target data so that
/// target samples land in [-1, 1]. Fitted once per identification and then
/// frozen; the same joint q / q̇ entries normalize network history inputs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Normalizer {
    pub shift: [f64; N_CHANNELS],
    pub scale: [f64; N_CHANNELS],
}

impl Normalizer {
    pub fn identity() -> Self {
        Normalizer {
            shift: [0.0; N_CHANNELS],
            scale: [1.0; N_CHANNELS],
        }
    }

    /// Fits shift to the channel midpoint and scale to the half-range.
    /// Degenerate (constant) channels get scale 1 so they map to exactly 0.
    pub fn fit(samples: &MarginalSamples) -> Result<Self> {
        samples.check_finite()?;
        if samples.is_empty() {
            return Err(Error::invalid("cannot fit a normalizer on empty samples"));
        }
        let mut shift = [0.0; N_CHANNELS];
        let mut scale = [1.0; N_CHANNELS];
        for c in 0..N_CHANNELS {
            let ch = samples.channel(c);
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &v in ch {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            shift[c] = 0.5 * (lo + hi);
            let half = 0.5 * (hi - lo);
            scale[c] = if half > 1e-12 { half } else { 1.0 };
        }
        Ok(Normalizer { shift, scale })
    }

    pub fn apply_scalar(&self, c: usize, x: f64) -> f64 {
        (x - self.shift[c]) / self.scale[c]
    }

    pub fn apply_channel(&self, c: usize, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.apply_scalar(c, x)).collect()
    }
}

// ---------------------------------------------------------------------------
