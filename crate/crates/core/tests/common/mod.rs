#![allow(dead_code)]

use std::time::Instant;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use quadmpc::dynamics::{rot_z, BodyParams, ContactSet, Leg};
use quadmpc::linearization::{build_continuous, discretize, LinearModel, INPUT_DIM, NUM_LEGS, STATE_DIM};
use quadmpc::mpc::{build_mpc, MpcConfig, MpcProblem, ReferenceTrajectory, Twist};
use quadmpc::qp::{QpProblem, QpSettings, QpSolution, QpSolver, QpStatus};
use quadmpc::RobotState;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

// ---------------------------------------------------------------------------
// Nonlinear model in Euler-angle coordinates

fn rx(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn ry(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn rz(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// `ẋ = f(x, u)` for the 13-entry state `(Θ, p, ω, ṗ, 1)` with ZYX Euler
/// angles, world-frame `ω`, and foot vectors `rᵢ` held as parameters.
pub fn nonlinear_rates(x: &DVector<f64>, u: &DVector<f64>, params: &BodyParams, r: &[Vector3<f64>; 4]) -> DVector<f64> {
    let (roll, pitch, yaw) = (x[0], x[1], x[2]);
    let rot = rz(yaw) * ry(pitch) * rx(roll);
    // ω = E(Θ) Θ̇
    let e = Matrix3::from_columns(&[
        rz(yaw) * ry(pitch) * Vector3::x(),
        rz(yaw) * Vector3::y(),
        Vector3::z(),
    ]);
    let omega = Vector3::new(x[6], x[7], x[8]);
    let theta_dot = e.try_inverse().expect("away from gimbal lock") * omega;
    let inertia = rot * params.inertia * rot.transpose();
    let mut moment = Vector3::zeros();
    let mut force = Vector3::zeros();
    for (i, ri) in r.iter().enumerate() {
        let f = Vector3::new(u[3 * i], u[3 * i + 1], u[3 * i + 2]);
        moment += ri.cross(&f);
        force += f;
    }
    let omega_dot = inertia.try_inverse().unwrap() * (moment - omega.cross(&(inertia * omega)));
    let v_dot = force / params.mass - params.gravity * x[12];
    let mut out = DVector::zeros(13);
    out.rows_mut(0, 3).copy_from(&theta_dot);
    out.rows_mut(3, 3).copy_from(&x.rows(9, 3));
    out.rows_mut(6, 3).copy_from(&omega_dot);
    out.rows_mut(9, 3).copy_from(&v_dot);
    out
}

/// Random footholds near the hips at a random yaw, with the CoM over their
/// centroid.
pub fn random_stance(rng: &mut ChaCha8Rng, params: &BodyParams) -> (f64, [Vector3<f64>; 4], Vector3<f64>) {
    let yaw = rng.random_range(-3.0..3.0);
    let base = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0);
    let feet = Leg::ALL.map(|leg| {
        let h = params.hip_offsets[leg.index()];
        let jitter = Vector3::new(
            rng.random_range(-0.05..0.05),
            rng.random_range(-0.05..0.05),
            rng.random_range(-0.02..0.02),
        );
        base + rot_z(yaw) * Vector3::new(h.x, h.y, 0.0) + jitter
    });
    let centroid = feet.iter().sum::<Vector3<f64>>() / 4.0;
    let com = Vector3::new(centroid.x, centroid.y, centroid.z + rng.random_range(0.25..0.35));
    (yaw, feet, com)
}

/// Largest |FD − model| over the A and B blocks of `samples` random stances.
pub fn linearization_error(samples: usize, seed: u64) -> f64 {
    let params = BodyParams::default();
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let (yaw, feet, com) = random_stance(&mut rng, &params);
        let contacts = ContactSet::new(feet, [true; 4], [Vector3::zeros(); 4]);
        let model = build_continuous(&params, yaw, &com, &contacts).unwrap();
        let r = feet.map(|f| f - com);

        let mut x = DVector::zeros(13);
        x[2] = yaw;
        x.rows_mut(3, 3).copy_from(&com);
        for i in 9..12 {
            x[i] = rng.random_range(-1.0..1.0);
        }
        x[12] = 1.0;
        let mut u = DVector::zeros(12);
        for i in 0..4 {
            u[3 * i + 2] = params.weight() / 4.0;
        }

        let h = 1e-6;
        for j in 0..13 {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[j] += h;
            xm[j] -= h;
            let col = (nonlinear_rates(&xp, &u, &params, &r) - nonlinear_rates(&xm, &u, &params, &r)) / (2.0 * h);
            worst = worst.max((col - model.a_c.column(j)).amax());
        }
        for j in 0..12 {
            let (mut up, mut um) = (u.clone(), u.clone());
            up[j] += h;
            um[j] -= h;
            let col = (nonlinear_rates(&x, &up, &params, &r) - nonlinear_rates(&x, &um, &params, &r)) / (2.0 * h);
            worst = worst.max((col - model.b_c.column(j)).amax());
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// Discretization oracle

/// `(Â, B̂)` by RK4 on `d/dt [Φ Γ] = A [Φ Γ] + [0 B]` from `[I 0]`.
pub fn rk4_discretize(a: &DMatrix<f64>, b: &DMatrix<f64>, dt: f64, steps: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, m) = (a.nrows(), b.ncols());
    let mut y = DMatrix::zeros(n, n + m);
    y.view_mut((0, 0), (n, n)).fill_with_identity();
    let mut forcing = DMatrix::zeros(n, n + m);
    forcing.view_mut((0, n), (n, m)).copy_from(b);
    let f = |y: &DMatrix<f64>| a * y + &forcing;
    let h = dt / steps as f64;
    for _ in 0..steps {
        let k1 = f(&y);
        let k2 = f(&(&y + &k1 * (h / 2.0)));
        let k3 = f(&(&y + &k2 * (h / 2.0)));
        let k4 = f(&(&y + &k3 * h));
        y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    (y.view((0, 0), (n, n)).into_owned(), y.view((0, n), (n, m)).into_owned())
}

pub fn random_model(rng: &mut ChaCha8Rng, params: &BodyParams) -> LinearModel {
    let (yaw, feet, com) = random_stance(rng, params);
    let mut contact = [false; 4];
    while !contact.iter().any(|c| *c) {
        contact = std::array::from_fn(|_| rng.random_bool(0.6));
    }
    let contacts = ContactSet::new(feet, contact, [Vector3::zeros(); 4]);
    build_continuous(params, yaw, &com, &contacts).unwrap()
}

/// Largest |ZOH − RK4| over `models` random models and the three steps.
pub fn discretization_error(models: usize, seed: u64) -> f64 {
    let params = BodyParams::default();
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..models {
        let model = random_model(&mut rng, &params);
        for dt in [0.001, 0.010, 0.025] {
            let (a_ref, b_ref) = rk4_discretize(&model.a_c, &model.b_c, dt, 500);
            let d = discretize(model.clone(), dt).unwrap();
            worst = worst
                .max((d.a_d.unwrap() - a_ref).amax())
                .max((d.b_d.unwrap() - b_ref).amax());
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// QP oracles

/// Random convex QP with `n ≤ 60` variables: PSD (possibly singular) Hessian,
/// a bounding box and random extra rows, all feasible at a known point.
pub fn random_psd_qp(rng: &mut ChaCha8Rng) -> (QpProblem, DVector<f64>) {
    let n = rng.random_range(1..=60);
    let rank = rng.random_range(1..=n);
    let extra = rng.random_range(0..=n);
    let mut gauss = |r: usize, c: usize, s: f64| DMatrix::from_fn(r, c, |_, _| s * rng.random_range(-1.0..1.0));
    let m = gauss(rank, n, 1.0);
    let h = m.transpose() * &m;
    let g = gauss(n, 1, 3.0).column(0).into_owned();
    let x0 = gauss(n, 1, 1.0).column(0).into_owned();
    let c_extra = gauss(extra, n, 1.0);
    let mut c = DMatrix::zeros(n + extra, n);
    c.view_mut((0, 0), (n, n)).fill_with_identity();
    c.view_mut((n, 0), (extra, n)).copy_from(&c_extra);
    let cx = &c * &x0;
    let mut lower = DVector::zeros(n + extra);
    let mut upper = DVector::zeros(n + extra);
    for i in 0..n + extra {
        let kind = if i < n { 0 } else { rng.random_range(0..4) };
        let (lo, hi) = (rng.random_range(0.05..1.5), rng.random_range(0.05..1.5));
        (lower[i], upper[i]) = match kind {
            1 => (cx[i], cx[i]),
            2 => (f64::NEG_INFINITY, cx[i] + hi),
            3 => (cx[i] - lo, f64::INFINITY),
            _ => (cx[i] - lo, cx[i] + hi),
        };
    }
    (QpProblem { h, g, c, lower, upper }, x0)
}

pub struct Kkt {
    pub primal: f64,
    pub stationarity: f64,
    pub complementarity: f64,
}

/// Residuals computed from the problem data alone.
pub fn kkt(p: &QpProblem, u: &DVector<f64>, y: &DVector<f64>) -> Kkt {
    let cu = &p.c * u;
    let primal = (0..cu.len())
        .map(|i| (p.lower[i] - cu[i]).max(cu[i] - p.upper[i]).max(0.0))
        .fold(0.0, f64::max);
    let stationarity = (&p.h * u + &p.g + p.c.transpose() * y).amax();
    let complementarity = (0..cu.len())
        .map(|i| {
            let yi = y[i];
            let gap = if yi > 0.0 { p.upper[i] - cu[i] } else { cu[i] - p.lower[i] };
            if yi == 0.0 {
                0.0
            } else if gap.is_finite() {
                (yi * gap).abs()
            } else {
                yi.abs()
            }
        })
        .fold(0.0, f64::max);
    Kkt {
        primal,
        stationarity,
        complementarity,
    }
}

pub struct RandomQpReport {
    pub worst_primal: f64,
    pub worst_stationarity: f64,
    pub worst_complementarity: f64,
    pub unsolved: usize,
    /// Random feasible points that beat the returned solution.
    pub beaten: usize,
}

pub fn random_qp_suite(instances: usize, seed: u64) -> RandomQpReport {
    let mut rng = rng(seed);
    let mut report = RandomQpReport {
        worst_primal: 0.0,
        worst_stationarity: 0.0,
        worst_complementarity: 0.0,
        unsolved: 0,
        beaten: 0,
    };
    for _ in 0..instances {
        let (p, x0) = random_psd_qp(&mut rng);
        let sol = QpSolver::new(QpSettings::default()).solve(&p, None).unwrap();
        if sol.status != QpStatus::Solved {
            report.unsolved += 1;
        }
        let k = kkt(&p, &sol.u, &sol.multipliers);
        report.worst_primal = report.worst_primal.max(k.primal);
        report.worst_stationarity = report.worst_stationarity.max(k.stationarity);
        report.worst_complementarity = report.worst_complementarity.max(k.complementarity);
        let best = p.objective(&sol.u);
        for _ in 0..20 {
            // segment from the known feasible point towards a random point,
            // shortened until feasible
            let dir = DVector::from_fn(p.num_vars(), |_, _| rng.random_range(-1.0..1.0));
            let mut t = 1.0;
            let mut candidate = &x0 + &dir * t;
            while p.constraint_violation(&candidate) > 0.0 && t > 1e-6 {
                t *= 0.5;
                candidate = &x0 + &dir * t;
            }
            if p.constraint_violation(&candidate) == 0.0 && p.objective(&candidate) < best - 1e-6 * (1.0 + best.abs()) {
                report.beaten += 1;
            }
        }
    }
    report
}

// ---------------------------------------------------------------------------
// Sparse MPC oracle

pub struct MpcInstance {
    pub problem: MpcProblem,
    pub model: LinearModel,
    pub reference: ReferenceTrajectory,
    pub config: MpcConfig,
    pub x0: DVector<f64>,
}

pub fn random_mpc_instance(rng: &mut ChaCha8Rng, params: &BodyParams) -> MpcInstance {
    let horizon = rng.random_range(1..=3);
    let config = MpcConfig {
        horizon,
        // keeps every stance leg off the degenerate apex of its pyramid
        f_min: rng.random_range(1.0..10.0),
        ..MpcConfig::default()
    };
    let (yaw, feet, com) = random_stance(rng, params);
    let contacts = ContactSet::new(feet, [true; 4], [Vector3::zeros(); 4]);
    let model = discretize(build_continuous(params, yaw, &com, &contacts).unwrap(), config.dt).unwrap();
    let table: Vec<[bool; NUM_LEGS]> = (0..horizon)
        .map(|_| {
            let mut c = [false; 4];
            while !c.iter().any(|x| *x) {
                c = std::array::from_fn(|_| rng.random_bool(0.7));
            }
            c
        })
        .collect();
    let mut state = RobotState::from_euler(
        Vector3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), yaw),
        com + Vector3::new(rng.random_range(-0.03..0.03), rng.random_range(-0.03..0.03), rng.random_range(-0.03..0.03)),
    );
    state.angular_velocity = Vector3::from_fn(|_, _| rng.random_range(-0.5..0.5));
    state.linear_velocity = Vector3::from_fn(|_, _| rng.random_range(-0.5..0.5));
    let x0 = quadmpc::linearization::state_vector(&state);
    let cmd = Twist::new(rng.random_range(-0.5..0.5), rng.random_range(-0.3..0.3), rng.random_range(-0.5..0.5));
    let reference = ReferenceTrajectory::constant_twist(&state, &cmd, com.z, horizon, config.dt);
    let problem = build_mpc(&model, &table, &reference, &config, &x0).unwrap();
    MpcInstance {
        problem,
        model,
        reference,
        config,
        x0,
    }
}

pub struct SparseSolution {
    pub u: DVector<f64>,
    /// The KKT point is primal feasible and its multipliers carry the right
    /// signs, which certifies optimality for the convex problem.
    pub certified: bool,
}

/// Solves the uncondensed problem over `(x(1..N), u(0..N−1))` with the
/// dynamics as equality rows. Inequality rows in `active` (with the side,
/// `true` for upper) are enforced as equalities; swing legs are pinned by
/// identity rows.
pub fn sparse_kkt_oracle(inst: &MpcInstance, active: &[(usize, bool)]) -> SparseSolution {
    let n = inst.config.horizon;
    let (nx, nu) = (STATE_DIM, INPUT_DIM);
    let nz = n * (nx + nu);
    let ux = |k: usize| n * nx + k * nu;
    let a = inst.model.a_d.as_ref().unwrap();
    let b = inst.model.b_d.as_ref().unwrap();
    let qp = &inst.problem.qp;

    let mut p = DMatrix::zeros(nz, nz);
    let mut q = DVector::zeros(nz);
    for k in 0..n {
        for i in 0..nx {
            let w = inst.config.state_weights[i];
            p[(k * nx + i, k * nx + i)] = 2.0 * w;
            q[k * nx + i] = -2.0 * w * inst.reference.states[k][i];
        }
        for i in 0..nu {
            p[(ux(k) + i, ux(k) + i)] = 2.0 * inst.config.input_weights[i % 3];
        }
    }

    let mut rows: Vec<(DVector<f64>, f64, Option<(usize, bool)>)> = Vec::new();
    // x(k+1) − Â x(k) − B̂ u(k) = 0, with x(0) given
    for k in 0..n {
        for i in 0..nx {
            let mut r = DVector::zeros(nz);
            r[k * nx + i] = 1.0;
            if k > 0 {
                for j in 0..nx {
                    r[(k - 1) * nx + j] -= a[(i, j)];
                }
            }
            for j in 0..nu {
                r[ux(k) + j] -= b[(i, j)];
            }
            let rhs = if k == 0 { (a.row(i) * &inst.x0)[0] } else { 0.0 };
            rows.push((r, rhs, None));
        }
    }
    for (k, step) in inst.problem.contacts.iter().enumerate() {
        for (leg, stance) in step.iter().enumerate() {
            if !stance {
                for axis in 0..3 {
                    let mut r = DVector::zeros(nz);
                    r[ux(k) + 3 * leg + axis] = 1.0;
                    rows.push((r, 0.0, None));
                }
            }
        }
    }
    let is_swing_row = |row: usize| {
        let (k, leg) = (row / (NUM_LEGS * 5), (row / 5) % NUM_LEGS);
        !inst.problem.contacts[k][leg]
    };
    for &(row, upper) in active {
        if is_swing_row(row) {
            continue;
        }
        let mut r = DVector::zeros(nz);
        r.rows_mut(n * nx, n * nu).copy_from(&qp.c.row(row).transpose());
        let bound = if upper { qp.upper[row] } else { qp.lower[row] };
        rows.push((r, bound, Some((row, upper))));
    }

    let me = rows.len();
    let mut kkt = DMatrix::zeros(nz + me, nz + me);
    let mut rhs = DVector::zeros(nz + me);
    kkt.view_mut((0, 0), (nz, nz)).copy_from(&p);
    rhs.rows_mut(0, nz).copy_from(&(-&q));
    for (i, (r, v, _)) in rows.iter().enumerate() {
        kkt.view_mut((nz + i, 0), (1, nz)).copy_from(&r.transpose());
        kkt.view_mut((0, nz + i), (nz, 1)).copy_from(r);
        rhs[nz + i] = *v;
    }
    let sol = kkt.full_piv_lu().solve(&rhs).expect("nonsingular sparse KKT");
    let z = sol.rows(0, nz).into_owned();
    let nu_mult = sol.rows(nz, me).into_owned();
    let u = z.rows(n * nx, n * nu).into_owned();

    let scale = nu_mult.amax().max(1.0);
    let mut certified = true;
    for (i, (_, _, tag)) in rows.iter().enumerate() {
        if let Some((_, upper)) = tag {
            let m = nu_mult[i];
            if (*upper && m < -1e-7 * scale) || (!*upper && m > 1e-7 * scale) {
                certified = false;
            }
        }
    }
    let cu = &qp.c * &u;
    for row in 0..cu.len() {
        if is_swing_row(row) {
            continue;
        }
        let tol = 1e-8 * (1.0 + cu[row].abs());
        if cu[row] < qp.lower[row] - tol || cu[row] > qp.upper[row] + tol {
            certified = false;
        }
    }
    SparseSolution { u, certified }
}

/// Rows the condensed solution holds at a bound, judged by its multipliers.
pub fn active_rows(p: &QpProblem, sol: &QpSolution) -> Vec<(usize, bool)> {
    let cu = &p.c * &sol.u;
    (0..p.num_constraints())
        .filter_map(|i| {
            let y = sol.multipliers[i];
            let near_upper = (cu[i] - p.upper[i]).abs() <= 1e-7 * (1.0 + p.upper[i].abs());
            let near_lower = (cu[i] - p.lower[i]).abs() <= 1e-7 * (1.0 + p.lower[i].abs());
            if y > 1e-9 && near_upper {
                Some((i, true))
            } else if y < -1e-9 && near_lower {
                Some((i, false))
            } else {
                None
            }
        })
        .collect()
}

pub struct CondensationReport {
    pub worst_difference: f64,
    pub uncertified: usize,
    pub unsolved: usize,
    /// Instances with at least one stance row at a bound.
    pub with_active_rows: usize,
}

pub fn condensation_suite(instances: usize, seed: u64) -> CondensationReport {
    let params = BodyParams::default();
    let mut rng = rng(seed);
    let settings = QpSettings {
        tol: 1e-9,
        max_iters: 20_000,
        ..QpSettings::default()
    };
    let mut report = CondensationReport {
        worst_difference: 0.0,
        uncertified: 0,
        unsolved: 0,
        with_active_rows: 0,
    };
    for _ in 0..instances {
        let inst = random_mpc_instance(&mut rng, &params);
        let sol = QpSolver::new(settings).solve(&inst.problem.qp, None).unwrap();
        if sol.status != QpStatus::Solved {
            report.unsolved += 1;
        }
        let active = active_rows(&inst.problem.qp, &sol);
        let stance_active = active.iter().any(|&(row, _)| {
            let (k, leg) = (row / (NUM_LEGS * 5), (row / 5) % NUM_LEGS);
            inst.problem.contacts[k][leg]
        });
        report.with_active_rows += usize::from(stance_active);
        let oracle = sparse_kkt_oracle(&inst, &active);
        if !oracle.certified {
            report.uncertified += 1;
        }
        report.worst_difference = report.worst_difference.max((&sol.u - &oracle.u).amax());
    }
    report
}

// ---------------------------------------------------------------------------
// Closed-loop scenarios

use quadmpc::locomotion::GaitKind;
use quadmpc::sim::{run_scenario, Disturbance, Perturbation, RunOutput, Scenario, SimConfig};

pub fn stand(duration: f64) -> Scenario {
    Scenario::constant(GaitKind::Stand, duration, Twist::default())
}

pub fn trot(vx: f64, duration: f64) -> Scenario {
    Scenario::constant(GaitKind::Trot, duration, Twist::new(vx, 0.0, 0.0))
}

pub fn heavy_trot() -> Scenario {
    let mut s = trot(0.5, 10.0);
    s.name = "heavy_trot".into();
    s.perturbation = Perturbation {
        mass_scale: 1.15,
        inertia_scale: 1.15,
    };
    s
}

/// Lateral push of `0.5·m` N·s at the CoM, five seconds into a trot.
pub fn pushed_trot(params: &BodyParams) -> Scenario {
    let mut s = trot(0.5, 10.0);
    s.name = "pushed_trot".into();
    s.disturbances.push(Disturbance {
        time: 5.0,
        impulse: [0.0, 0.5 * params.mass, 0.0],
        point: [0.0; 3],
    });
    s
}

pub fn simulate(s: &Scenario) -> RunOutput {
    run_scenario(s, &SimConfig::default()).unwrap_or_else(|e| panic!("{}: {e}", s.name))
}
