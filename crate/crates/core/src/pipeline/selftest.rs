//! Fast self-contained invariant checks behind the `selftest` subcommand.
//! Each check is independent and reports pass/fail; together they cover the
//! metric oracles, physics sanity, modification identities, the optimizer,
//! and end-to-end determinism in a few seconds.

use rand::Rng;

use crate::cmaes::{self, CmaesConfig};
use crate::controller::GaitParams;
use crate::error::{Error, Result};
use crate::gapmetrics::{exact_ot_oracle, wasserstein_1d, GroundMetric};
use crate::mods::{HistNorm, ModificationInstance, ModificationSpec};
use crate::pipeline::{collect_target_set, ScenarioConfig};
use crate::plant::{rollout, PlantModel, PlantParams, SimSetup, Workspace};
use crate::rngstream::stream;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::runtime(msg.into()))
    }
}

fn random_points(rng: &mut impl Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect()
}

fn ot_oracle_agreement() -> Result<()> {
    let mut rng = stream(101, &[1]);
    for _ in 0..20 {
        let n = rng.random_range(1..=32);
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..4.0)).collect();
        let fast = wasserstein_1d(&xs, &ys)?;
        let xs2: Vec<Vec<f64>> = xs.iter().map(|&v| vec![v]).collect();
        let ys2: Vec<Vec<f64>> = ys.iter().map(|&v| vec![v]).collect();
        let exact = exact_ot_oracle(&xs2, &ys2, GroundMetric::L1)?;
        ensure(
            (fast - exact).abs() <= 1e-9,
            format!("closed form {fast} vs assignment {exact}"),
        )?;
    }
    Ok(())
}

fn metric_axioms() -> Result<()> {
    let mut rng = stream(102, &[1]);
    for _ in 0..100 {
        let sets: Vec<Vec<f64>> = (0..3)
            .map(|_| {
                let n = rng.random_range(1..=24);
                (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
            })
            .collect();
        let dxy = wasserstein_1d(&sets[0], &sets[1])?;
        let dyx = wasserstein_1d(&sets[1], &sets[0])?;
        let dxz = wasserstein_1d(&sets[0], &sets[2])?;
        let dzy = wasserstein_1d(&sets[2], &sets[1])?;
        ensure(dxy == dyx, "symmetry")?;
        ensure(wasserstein_1d(&sets[0], &sets[0])? <= 1e-12, "identity")?;
        ensure(dxy <= dxz + dzy + 1e-9, "triangle inequality")?;
    }
    Ok(())
}

fn marginal_lower_bound() -> Result<()> {
    let mut rng = stream(103, &[1]);
    for _ in 0..10 {
        let n = rng.random_range(2..=24);
        let xs = random_points(&mut rng, n, 6);
        let ys = random_points(&mut rng, n, 6);
        let mut marginal_sum = 0.0;
        for d in 0..6 {
            let xd: Vec<f64> = xs.iter().map(|p| p[d]).collect();
            let yd: Vec<f64> = ys.iter().map(|p| p[d]).collect();
            marginal_sum += wasserstein_1d(&xd, &yd)?;
        }
        let joint = exact_ot_oracle(&xs, &ys, GroundMetric::L1)?;
        ensure(
            marginal_sum <= joint + 1e-9,
            format!("marginal sum {marginal_sum} exceeds joint OT {joint}"),
        )?;
    }
    Ok(())
}

fn mass_matrix_spd() -> Result<()> {
    let model = PlantModel::default_biped();
    let mut params = PlantParams::zero();
    params.joint_armature = [0.1, 0.05, 0.075];
    let mut ws = Workspace::new(&model);
    let mut rng = stream(104, &[1]);
    let nq = model.nq();
    for _ in 0..10 {
        let q: Vec<f64> = (0..nq).map(|_| rng.random_range(-1.0..1.0)).collect();
        let qd: Vec<f64> = (0..nq).map(|_| rng.random_range(-3.0..3.0)).collect();
        ws.fk(&model, &q, &qd);
        let m = ws.mass_matrix(&model, &params).to_vec();
        for a in 0..nq {
            for b in 0..nq {
                ensure(
                    (m[a * nq + b] - m[b * nq + a]).abs() <= 1e-12,
                    "mass matrix symmetry",
                )?;
            }
        }
        let x: Vec<f64> = (0..nq).map(|_| rng.random_range(-1.0..1.0)).collect();
        let quad: f64 = (0..nq)
            .map(|a| (0..nq).map(|b| x[a] * m[a * nq + b] * x[b]).sum::<f64>())
            .sum();
        ensure(quad > 0.0, "mass matrix positive definiteness")?;
    }
    Ok(())
}

fn crba_matches_rnea() -> Result<()> {
    let model = PlantModel::default_biped();
    let mut params = PlantParams::zero();
    params.joint_armature = [0.02, 0.01, 0.03];
    let mut ws = Workspace::new(&model);
    let mut rng = stream(105, &[1]);
    let nq = model.nq();
    for _ in 0..5 {
        let q: Vec<f64> = (0..nq).map(|_| rng.random_range(-1.0..1.0)).collect();
        let zero = vec![0.0; nq];
        ws.fk(&model, &q, &zero);
        let m = ws.mass_matrix(&model, &params).to_vec();
        for col in 0..nq {
            let mut e = vec![0.0; nq];
            e[col] = 1.0;
            ws.fk(&model, &q, &zero);
            let tau = ws.rnea(&model, &params, &zero, &e, false).to_vec();
            for row in 0..nq {
                ensure(
                    (m[row * nq + col] - tau[row]).abs() <= 1e-10,
                    format!("mass-matrix column {col} disagrees with inverse dynamics"),
                )?;
            }
        }
    }
    Ok(())
}

fn energy_conservation() -> Result<()> {
    let model = PlantModel::pendulum(2.0, 1.0);
    let params = PlantParams::zero();
    let mut ws = Workspace::new(&model);
    let q = vec![std::f64::consts::FRAC_PI_2];
    let qd = vec![0.0];
    ws.fk(&model, &q, &qd);
    let (k0, p0) = ws.energy(&model, &params, &qd);
    let e0 = k0 + p0;
    let mut state = crate::plant::SimState::new(&model, q, qd);
    let targets = [0.0; 6];
    let mut rng = stream(0, &[]);
    for _ in 0..2000 {
        crate::plant::step(
            &model, &params, &mut ws, &mut state, &targets, &[0.0; 6], None, 0.0, &mut rng,
        )?;
    }
    ws.fk(&model, &state.q, &state.qd);
    let (k1, p1) = ws.energy(&model, &params, &state.qd);
    let scale = 2.0 * 9.81 * 0.5;
    ensure(
        ((k1 + p1) - e0).abs() <= 0.02 * scale,
        format!("pendulum energy drifted by {}", (k1 + p1) - e0),
    )
}

fn zero_modification_identity() -> Result<()> {
    let model = PlantModel::default_biped();
    let params = PlantParams::zero();
    let gait = GaitParams::default();
    let hist_norm = HistNorm::identity();
    let mut ws = Workspace::new(&model);

    let run = |ws: &mut Workspace, instance: &ModificationInstance| -> Result<Vec<[f64; 6]>> {
        let setup = SimSetup {
            model: &model,
            params: &params,
            gait: &gait,
            modification: instance,
            hist_norm: &hist_norm,
        };
        let mut rng = stream(0, &[]);
        Ok(rollout(&setup, ws, 0.3, 0.5, 0.0, &mut rng)?.trajectory.joint_q)
    };

    let reference = run(&mut ws, &ModificationInstance::Identity)?;
    for spec in [
        ModificationSpec::static_params(vec![0, 1, 2]),
        ModificationSpec::action_delta(vec![0, 1, 2, 3, 4, 5]),
        ModificationSpec::residual_actuator(vec![0, 1, 2, 3, 4, 5], model.torque_limit),
    ] {
        let dim = spec.param_dim()?;
        let (instance, _) = spec.decode(&vec![0.0; dim])?;
        let got = run(&mut ws, &instance)?;
        ensure(
            got == reference,
            "zero-valued modification changed the rollout",
        )?;
    }
    Ok(())
}

fn optimizer_sphere() -> Result<()> {
    let mut cfg = CmaesConfig::new(
        vec![0.4; 4],
        vec![0.3; 4],
        vec![-2.0; 4],
        vec![2.0; 4],
    );
    cfg.seed = 7;
    cfg.max_generations = 120;
    let res = cmaes::minimize_fn(cfg, |x| x.iter().map(|v| v * v).sum())?;
    ensure(
        res.best_cost < 1e-8,
        format!("sphere optimum {} not reached", res.best_cost),
    )
}

fn pipeline_determinism() -> Result<()> {
    let mut cfg = ScenarioConfig::param_shift(31);
    cfg.protocol.count = 2;
    cfg.protocol.eval_rollouts = 2;
    cfg.protocol.horizon_s = 0.3;
    cfg.noise.torque_sigma = 0.5;
    let a = collect_target_set(&cfg)?;
    let b = collect_target_set(&cfg)?;
    for (ta, tb) in a.trajectories.iter().zip(&b.trajectories) {
        ensure(ta.joint_q == tb.joint_q, "collection is not deterministic")?;
    }
    Ok(())
}

/// All checks with stable names, in execution order.
pub fn run_all() -> Vec<(&'static str, Result<()>)> {
    vec![
        ("ot_oracle_agreement", ot_oracle_agreement()),
        ("metric_axioms", metric_axioms()),
        ("marginal_lower_bound", marginal_lower_bound()),
        ("mass_matrix_spd", mass_matrix_spd()),
        ("crba_matches_rnea", crba_matches_rnea()),
        ("energy_conservation", energy_conservation()),
        ("zero_modification_identity", zero_modification_identity()),
        ("optimizer_sphere", optimizer_sphere()),
        ("pipeline_determinism", pipeline_determinism()),
    ]
}
