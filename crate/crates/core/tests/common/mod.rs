//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector3, Vector4};
use nrhdg::controllers::{NmpcProblem, NrhdgProblem};
use nrhdg::demo::Excursion;
use nrhdg::dynamics::DroneParams;
use nrhdg::objectives::{potential, potential_gradient, CostWeights, PotentialParams};
use nrhdg::path::{AugmentedState, ParametricPath, SineTerm, SinusoidPath};
use nrhdg::solver::lq::LinearQuadratic;
use nrhdg::solver::{initialize_solver, OcpProblem, SolverSettings};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Course used by the projection tests, with a domain covering every
/// randomized trajectory.
pub fn projection_course() -> SinusoidPath {
    SinusoidPath::race_course(-2.0, 20.0)
}

/// Brute-force projection: the path sampled on a uniform grid, searched for
/// the nearest sample within a window around a tracked parameter.
pub struct GridProjection {
    theta0: f64,
    spacing: f64,
    points: Vec<Vector3<f64>>,
}

impl GridProjection {
    pub fn new(path: &dyn ParametricPath, samples: usize) -> Self {
        let (lo, hi) = path.domain();
        let spacing = (hi - lo) / (samples - 1) as f64;
        let points = (0..samples).map(|i| path.point(lo + i as f64 * spacing)).collect();
        Self {
            theta0: lo,
            spacing,
            points,
        }
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Grid argmin of `‖r(θ) − p‖` over `|θ − near| ≤ half_width`, or `None`
    /// when the minimum sits on the window edge (a different branch).
    pub fn argmin_near(&self, p: &Vector3<f64>, near: f64, half_width: f64) -> Option<f64> {
        let idx = |t: f64| (((t - self.theta0) / self.spacing).round().max(0.0) as usize).min(self.points.len() - 1);
        let (i0, i1) = (idx(near - half_width), idx(near + half_width));
        let mut best = (f64::INFINITY, i0);
        for i in i0..=i1 {
            let d = (self.points[i] - p).norm_squared();
            if d < best.0 {
                best = (d, i);
            }
        }
        (best.1 > i0 && best.1 < i1).then(|| self.theta0 + best.1 as f64 * self.spacing)
    }
}

/// Smooth trajectory near the course: constant parameter speed plus a small
/// sinusoidal excursion per axis.
pub fn random_excursion(rng: &mut ChaCha8Rng) -> Excursion {
    let mut term = || SineTerm {
        amplitude: rng.gen_range(0.0..0.3),
        frequency: rng.gen_range(0.2..3.0),
        phase: rng.gen_range(0.0..std::f64::consts::TAU),
    };
    let terms = [term(), term(), term()];
    Excursion {
        theta0: rng.gen_range(0.0..2.0),
        speed: rng.gen_range(0.5..1.5),
        terms,
    }
}

/// Central-difference gradient with a relative step.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = 1e-6 * x[i].abs().max(1.0);
            y[i] = x[i] + h;
            let fp = f(&y);
            y[i] = x[i] - h;
            let fm = f(&y);
            y[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖ ≤ tol · max(‖b‖, floor)`.
pub fn rel_close(a: &[f64], b: &[f64], tol: f64, floor: f64) -> bool {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff <= tol * scale.max(floor)
}

/// Continuous LQ data `(A, B, Q, R, P_f)`.
#[derive(Clone)]
pub struct LqData {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub pf: DMatrix<f64>,
}

impl LqData {
    /// Scalar double integrator `ṗ = v, v̇ = u`.
    pub fn double_integrator() -> Self {
        Self {
            a: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            b: DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            q: DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0])),
            r: DMatrix::from_element(1, 1, 1.0),
            pf: DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0])),
        }
    }

    /// Scalar zero-sum game `ẋ = u + v`, `L = ½(x² + u² − r_v v²)`.
    pub fn scalar_game(r_v: f64) -> Self {
        Self {
            a: DMatrix::from_element(1, 1, 0.0),
            b: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            q: DMatrix::from_element(1, 1, 1.0),
            r: DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -r_v])),
            pf: DMatrix::from_element(1, 1, 1.0),
        }
    }

    pub fn problem(&self) -> LinearQuadratic {
        LinearQuadratic::new(self.a.clone(), self.b.clone(), self.q.clone(), self.r.clone(), self.pf.clone())
            .unwrap()
    }

    /// Gains `K_0..K_{N−1}` of the Euler-discretized problem from the
    /// backward Riccati recursion; stage costs carry the step `Δτ`.
    pub fn riccati_gains(&self, horizon: f64, stages: usize) -> Vec<DMatrix<f64>> {
        let dt = horizon / stages as f64;
        let n = self.a.nrows();
        let ad = DMatrix::identity(n, n) + &self.a * dt;
        let bd = &self.b * dt;
        let qd = &self.q * dt;
        let rd = &self.r * dt;
        let mut p = self.pf.clone();
        let mut gains = vec![DMatrix::zeros(self.b.ncols(), n); stages];
        for k in (0..stages).rev() {
            let s = &rd + bd.transpose() * &p * &bd;
            let k_gain = s.lu().solve(&(bd.transpose() * &p * &ad)).unwrap();
            let acl = &ad - &bd * &k_gain;
            p = &qd + ad.transpose() * &p * &acl;
            gains[k] = k_gain;
        }
        gains
    }

    /// Open-loop optimal inputs over the horizon from `x0`.
    pub fn open_loop(&self, x0: &DVector<f64>, horizon: f64, stages: usize) -> Vec<f64> {
        let dt = horizon / stages as f64;
        let gains = self.riccati_gains(horizon, stages);
        let mut x = x0.clone();
        let mut us = Vec::new();
        for k_gain in gains {
            let u = -(&k_gain * &x);
            us.extend(u.iter());
            x = &x + (&self.a * &x + &self.b * &u) * dt;
        }
        us
    }

    fn rk4(&self, x: &DVector<f64>, u: &DVector<f64>, dt: f64) -> DVector<f64> {
        let f = |x: &DVector<f64>| &self.a * x + &self.b * u;
        let k1 = f(x);
        let k2 = f(&(x + &k1 * (0.5 * dt)));
        let k3 = f(&(x + &k2 * (0.5 * dt)));
        let k4 = f(&(x + &k3 * dt));
        x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
    }

    /// Closed loop under the receding-horizon Riccati law `u = −K₀ x`.
    pub fn riccati_closed_loop(&self, x0: &DVector<f64>, settings: &SolverSettings, dt: f64, duration: f64) -> Vec<DVector<f64>> {
        let k0 = self.riccati_gains(settings.horizon, settings.stages).remove(0);
        let steps = (duration / dt).round() as usize;
        let mut x = x0.clone();
        let mut traj = vec![x.clone()];
        for _ in 0..steps {
            let u = -(&k0 * &x);
            x = self.rk4(&x, &u, dt);
            traj.push(x.clone());
        }
        traj
    }

    /// Closed loop under the continuation solver.
    pub fn solver_closed_loop(&self, x0: &DVector<f64>, settings: &SolverSettings, dt: f64, duration: f64) -> Vec<DVector<f64>> {
        let mut solver = initialize_solver(self.problem(), x0.as_slice(), 0.0, *settings).unwrap();
        let steps = (duration / dt).round() as usize;
        let mut x = x0.clone();
        let mut traj = vec![x.clone()];
        for k in 0..steps {
            let out = solver.continuation_update(x.as_slice(), k as f64 * dt, dt).unwrap();
            let u = DVector::from_vec(out.input);
            x = self.rk4(&x, &u, dt);
            traj.push(x.clone());
        }
        traj
    }
}

/// `RMS(a − b) / RMS(b)` over whole trajectories.
pub fn relative_rms(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_squared()).sum();
    let den: f64 = b.iter().map(|y| y.norm_squared()).sum();
    (num / den).sqrt()
}

pub struct GradientProblems {
    pub path: Arc<dyn ParametricPath>,
    pub potential: PotentialParams,
    pub nmpc: NmpcProblem,
    pub game: NrhdgProblem,
}

impl GradientProblems {
    pub fn standard() -> Self {
        let params = DroneParams::default();
        let path: Arc<dyn ParametricPath> = Arc::new(SinusoidPath::race_course(-2.0, 30.0));
        let pp = PotentialParams::default();
        Self {
            nmpc: NmpcProblem {
                path: path.clone(),
                params,
                weights: CostWeights::with_input_weight(20.0, &params),
                potential: pp,
                opponent_speed: 1.0,
            },
            game: NrhdgProblem {
                path: path.clone(),
                params,
                ego_weights: CostWeights::with_input_weight(20.0, &params),
                opponent_weights: CostWeights::with_input_weight(40.0, &params),
                potential: pp,
            },
            path,
            potential: pp,
        }
    }
}

fn random_drone(r: &mut ChaCha8Rng, path: &dyn ParametricPath) -> AugmentedState {
    let theta = r.gen_range(0.0..10.0);
    let mut s = AugmentedState::at_rest_on_path(path, theta);
    let mut v3 = |a: f64| Vector3::new(r.gen_range(-a..a), r.gen_range(-a..a), r.gen_range(-a..a));
    s.drone.position += v3(0.3);
    s.drone.velocity = v3(2.0);
    s.drone.body_rates = v3(1.0);
    s.drone.attitude = Vector4::new(1.0, r.gen_range(-0.3..0.3), r.gen_range(-0.3..0.3), r.gen_range(-0.3..0.3)).normalize();
    s.theta += r.gen_range(-0.02..0.02);
    s.sigma = r.gen_range(-1.0..5.0);
    s
}

fn random_vec(r: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| r.gen_range(lo..hi)).collect()
}

/// `H = L + λᵀ f` through the trait's primal functions only.
fn hamiltonian<P: OcpProblem>(p: &P, x: &[f64], u: &[f64], lambda: &[f64]) -> f64 {
    let mut f = vec![0.0; x.len()];
    p.dynamics(x, u, &mut f).unwrap();
    p.stage_cost(x, u) + f.iter().zip(lambda).map(|(a, b)| a * b).sum::<f64>()
}

fn check_problem<P: OcpProblem>(name: &str, p: &P, x: &[f64], u: &[f64], lambda: &[f64]) -> Result<(), String> {
    let mut hx = vec![0.0; x.len()];
    let mut hu = vec![0.0; u.len()];
    p.hamiltonian_gradients(x, u, lambda, &mut hx, &mut hu).map_err(|e| e.to_string())?;
    let fx = fd_gradient(|y| hamiltonian(p, y, u, lambda), x);
    let fu = fd_gradient(|v| hamiltonian(p, x, v, lambda), u);
    if !rel_close(&hx, &fx, 1e-4, 1e-6) {
        return Err(format!("{name} H_x\n{hx:?}\n{fx:?}"));
    }
    if !rel_close(&hu, &fu, 1e-4, 1e-6) {
        return Err(format!("{name} H_u\n{hu:?}\n{fu:?}"));
    }
    let mut gx = vec![0.0; x.len()];
    p.terminal_cost_gradient(x, &mut gx).map_err(|e| e.to_string())?;
    let fg = fd_gradient(|y| p.terminal_cost(y), x);
    if !rel_close(&gx, &fg, 1e-4, 1e-6) {
        return Err(format!("{name} phi_x\n{gx:?}\n{fg:?}"));
    }
    Ok(())
}

/// One randomized state pair: NMPC and game Hamiltonian and terminal
/// gradients, and the potential gradient.
pub fn gradient_case(g: &GradientProblems, r: &mut ChaCha8Rng) -> Result<(), String> {
    let path = g.path.as_ref();
    let pp = &g.potential;
    let ego = random_drone(r, path);
    let mut opp = random_drone(r, path);
    // Keep the pair within the potential's range.
    opp.theta = ego.theta + r.gen_range(-1.5..1.5);
    opp.drone.position = path.point(opp.theta) + (opp.drone.position - path.point(opp.theta)).map(|c| c.clamp(-0.3, 0.3));

    let x = NmpcProblem::pack(&ego, &opp.drone.position, opp.theta);
    let (u, l) = (random_vec(r, 4, 0.05, 0.3), random_vec(r, x.len(), -1.0, 1.0));
    check_problem("NMPC", &g.nmpc, &x, &u, &l)?;

    let x = NrhdgProblem::pack(&ego, &opp);
    let (u, l) = (random_vec(r, 8, 0.05, 0.3), random_vec(r, x.len(), -1.0, 1.0));
    check_problem("NRHDG", &g.game, &x, &u, &l)?;

    let grad = potential_gradient(&ego.drone.position, ego.theta, &opp.drone.position, opp.theta, pp, path);
    let z = [ego.drone.position.as_slice(), &[ego.theta], opp.drone.position.as_slice(), &[opp.theta]].concat();
    let f = |z: &[f64]| {
        let mut e = ego;
        e.drone.position = Vector3::new(z[0], z[1], z[2]);
        e.theta = z[3];
        potential(&e, &Vector3::new(z[4], z[5], z[6]), z[7], pp, path)
    };
    let analytic = [grad.ego_position.as_slice(), &[grad.ego_theta], grad.opponent_position.as_slice(), &[grad.opponent_theta]].concat();
    let numeric = fd_gradient(f, &z);
    if !rel_close(&analytic, &numeric, 1e-4, 1e-6) {
        return Err(format!("potential\n{analytic:?}\n{numeric:?}"));
    }
    Ok(())
}
