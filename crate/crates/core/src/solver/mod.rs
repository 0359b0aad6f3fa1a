//! Continuation/GMRES real-time solver for receding-horizon problems.
//!
//! The horizon `[t, t+T]` is split into `N` explicit-Euler stages. The
//! unknowns are the stage inputs `U`; for a two-player zero-sum game both
//! players' inputs are stacked per stage. Optimality (or the saddle-point
//! condition) is the root of
//!
//! ```text
//! F(U, x, t) = (Δτ ∂H/∂u (x_k, u_k, λ_{k+1}))_{k=0..N-1},   H = L + λᵀ f
//! ```
//!
//! where `λ` comes from the backward costate recursion. `F` is exactly the
//! gradient of the discretized objective with respect to `U`. Instead of
//! re-solving `F = 0` every control cycle, the solution is tracked by
//! integrating `Ḟ = −ζ F`, which needs one matrix-free GMRES solve per cycle
//! and no line search, so the same solver serves minimization and games.

pub mod gmres;
pub mod lq;

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use gmres::{gmres, GmresOutcome};

/// A receding-horizon problem in the form the solver needs.
///
/// For games, `input_dim` counts every player's inputs and
/// [`OcpProblem::hamiltonian_gradients`] returns the stacked partials.
pub trait OcpProblem {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn dynamics(&self, x: &[f64], u: &[f64], dx: &mut [f64]) -> Result<()>;
    fn stage_cost(&self, x: &[f64], u: &[f64]) -> f64;
    fn terminal_cost(&self, x: &[f64]) -> f64;
    fn terminal_cost_gradient(&self, x: &[f64], out: &mut [f64]) -> Result<()>;
    /// Writes `∂H/∂x` and `∂H/∂u` for `H = L(x, u) + λᵀ f(x, u)`.
    fn hamiltonian_gradients(
        &self,
        x: &[f64],
        u: &[f64],
        lambda: &[f64],
        hx: &mut [f64],
        hu: &mut [f64],
    ) -> Result<()>;
    /// Input used to seed every stage before Newton initialization.
    fn nominal_input(&self) -> Vec<f64>;
}

/// Fixed-length horizon split into equal stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonDiscretization {
    pub horizon: f64,
    pub stages: usize,
}

impl HorizonDiscretization {
    pub fn new(horizon: f64, stages: usize) -> Result<Self> {
        let d = Self { horizon, stages };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) || self.stages == 0 {
            return Err(Error::InvalidParameter(format!(
                "horizon {} with {} stages is invalid",
                self.horizon, self.stages
            )));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.stages as f64
    }
}

/// Tuning of the continuation update and of Newton initialization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    pub horizon: f64,
    pub stages: usize,
    /// Continuation gain `ζ` (1/s).
    pub zeta: f64,
    /// Forward-difference step for directional derivatives.
    pub fd_step: f64,
    /// Krylov subspace size per GMRES cycle.
    pub krylov_dim: usize,
    pub restarts: usize,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            horizon: 0.4,
            stages: 20,
            zeta: 1000.0,
            fd_step: 1e-6,
            krylov_dim: 10,
            restarts: 1,
            newton_tol: 1e-6,
            newton_max_iter: 50,
        }
    }
}

impl SolverSettings {
    pub fn discretization(&self) -> HorizonDiscretization {
        HorizonDiscretization {
            horizon: self.horizon,
            stages: self.stages,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.discretization().validate()?;
        if !(self.zeta > 0.0 && self.fd_step > 0.0 && self.newton_tol > 0.0) || self.krylov_dim == 0 {
            return Err(Error::InvalidParameter(
                "zeta, fd_step, newton_tol and krylov_dim must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Scratch buffers for residual evaluation.
#[derive(Debug, Clone)]
pub struct Workspace {
    nx: usize,
    states: Vec<f64>,
    lambda: Vec<f64>,
    dx: Vec<f64>,
    hx: Vec<f64>,
    hu: Vec<f64>,
}

impl Workspace {
    pub fn new(nx: usize, nu: usize, stages: usize) -> Self {
        Self {
            nx,
            states: vec![0.0; nx * (stages + 1)],
            lambda: vec![0.0; nx],
            dx: vec![0.0; nx],
            hx: vec![0.0; nx],
            hu: vec![0.0; nu],
        }
    }

    /// Predicted states from the last residual or prediction call.
    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.states.chunks(self.nx)
    }
}

fn euler_rollout<P: OcpProblem + ?Sized>(
    problem: &P,
    x0: &[f64],
    u: &[f64],
    disc: &HorizonDiscretization,
    ws: &mut Workspace,
) -> Result<()> {
    let nx = problem.state_dim();
    let nu = problem.input_dim();
    let dt = disc.step();
    ws.states[..nx].copy_from_slice(x0);
    for k in 0..disc.stages {
        let (done, rest) = ws.states.split_at_mut((k + 1) * nx);
        let xk = &done[k * nx..];
        problem.dynamics(xk, &u[k * nu..(k + 1) * nu], &mut ws.dx)?;
        for i in 0..nx {
            rest[i] = xk[i] + dt * ws.dx[i];
        }
    }
    Ok(())
}

/// Forward Euler prediction `x_{k+1} = x_k + Δτ f(x_k, u_k)`; returns the
/// `N + 1` stage states.
pub fn predict_states<P: OcpProblem + ?Sized>(
    problem: &P,
    x0: &[f64],
    u: &[f64],
    disc: &HorizonDiscretization,
) -> Result<Vec<Vec<f64>>> {
    let mut ws = Workspace::new(problem.state_dim(), problem.input_dim(), disc.stages);
    euler_rollout(problem, x0, u, disc, &mut ws)?;
    Ok(ws.states().map(<[f64]>::to_vec).collect())
}

/// Evaluates the stacked stationarity residual `F(U, x0)` into `out`.
pub fn stationarity_residual_ocp<P: OcpProblem + ?Sized>(
    problem: &P,
    x0: &[f64],
    u: &[f64],
    disc: &HorizonDiscretization,
    ws: &mut Workspace,
    out: &mut [f64],
) -> Result<()> {
    let nx = problem.state_dim();
    let nu = problem.input_dim();
    let dt = disc.step();
    euler_rollout(problem, x0, u, disc, ws)?;
    let n = disc.stages;
    problem.terminal_cost_gradient(&ws.states[n * nx..], &mut ws.lambda)?;
    for k in (0..n).rev() {
        problem.hamiltonian_gradients(
            &ws.states[k * nx..(k + 1) * nx],
            &u[k * nu..(k + 1) * nu],
            &ws.lambda,
            &mut ws.hx,
            &mut ws.hu,
        )?;
        for i in 0..nu {
            out[k * nu + i] = dt * ws.hu[i];
        }
        for i in 0..nx {
            ws.lambda[i] += dt * ws.hx[i];
        }
    }
    Ok(())
}

/// Discretized objective `φ(x_N) + Σ Δτ L(x_k, u_k)`.
pub fn discrete_objective<P: OcpProblem + ?Sized>(
    problem: &P,
    x0: &[f64],
    u: &[f64],
    disc: &HorizonDiscretization,
) -> Result<f64> {
    let states = predict_states(problem, x0, u, disc)?;
    let nu = problem.input_dim();
    let dt = disc.step();
    let running: f64 = (0..disc.stages)
        .map(|k| dt * problem.stage_cost(&states[k], &u[k * nu..(k + 1) * nu]))
        .sum();
    Ok(running + problem.terminal_cost(&states[disc.stages]))
}

/// Result of one controller update.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerOutput {
    /// First-stage input of every player, stacked.
    pub input: Vec<f64>,
    /// All stage inputs after the update.
    pub trajectory: Vec<f64>,
    /// `‖F‖` at the start of the update.
    pub residual_norm: f64,
    /// Wall-clock time of the update in seconds.
    pub solve_time: f64,
    pub krylov_breakdown: bool,
}

/// Solver state for one controller: unknowns, warm start and workspace.
pub struct SolverProblem<P: OcpProblem> {
    problem: P,
    settings: SolverSettings,
    disc: HorizonDiscretization,
    u: Vec<f64>,
    u_dot: Vec<f64>,
    newton_iterations: usize,
    ws: Workspace,
    f0: Vec<f64>,
    f1: Vec<f64>,
    f2: Vec<f64>,
    rhs: Vec<f64>,
    x_dot: Vec<f64>,
    x_shift: Vec<f64>,
    u_shift: Vec<f64>,
}

impl<P: OcpProblem> SolverProblem<P> {
    fn new(problem: P, settings: SolverSettings) -> Result<Self> {
        settings.validate()?;
        let nx = problem.state_dim();
        let nu = problem.input_dim();
        let disc = settings.discretization();
        let dim = nu * disc.stages;
        let nominal = problem.nominal_input();
        if nominal.len() != nu {
            return Err(Error::InvalidParameter("nominal input has wrong length".into()));
        }
        let u = nominal.iter().copied().cycle().take(dim).collect();
        Ok(Self {
            problem,
            settings,
            disc,
            u,
            u_dot: vec![0.0; dim],
            newton_iterations: 0,
            ws: Workspace::new(nx, nu, disc.stages),
            f0: vec![0.0; dim],
            f1: vec![0.0; dim],
            f2: vec![0.0; dim],
            rhs: vec![0.0; dim],
            x_dot: vec![0.0; nx],
            x_shift: vec![0.0; nx],
            u_shift: vec![0.0; dim],
        })
    }

    pub fn problem(&self) -> &P {
        &self.problem
    }

    pub fn problem_mut(&mut self) -> &mut P {
        &mut self.problem
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    pub fn discretization(&self) -> &HorizonDiscretization {
        &self.disc
    }

    /// Current stacked stage inputs.
    pub fn inputs(&self) -> &[f64] {
        &self.u
    }

    pub fn first_input(&self) -> &[f64] {
        &self.u[..self.problem.input_dim()]
    }

    /// Newton iterations spent by the last (re-)initialization.
    pub fn newton_iterations(&self) -> usize {
        self.newton_iterations
    }

    pub fn residual(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.u.len()];
        stationarity_residual_ocp(&self.problem, x, &self.u, &self.disc, &mut self.ws, &mut out)?;
        Ok(out)
    }

    /// Damped Newton on `F(U, x0) = 0` with a central-difference Jacobian.
    pub fn reinitialize(&mut self, x0: &[f64]) -> Result<f64> {
        let dim = self.u.len();
        let mut f = self.residual(x0)?;
        let mut fnorm = norm(&f);
        let mut iterations = 0;
        while fnorm >= self.settings.newton_tol && iterations < self.settings.newton_max_iter {
            if !fnorm.is_finite() {
                return Err(Error::NonFiniteResidual);
            }
            iterations += 1;
            let h = 1e-6;
            let mut jac = DMatrix::<f64>::zeros(dim, dim);
            let mut fp = vec![0.0; dim];
            let mut fm = vec![0.0; dim];
            for j in 0..dim {
                let keep = self.u[j];
                let step = h * keep.abs().max(1.0);
                self.u[j] = keep + step;
                stationarity_residual_ocp(&self.problem, x0, &self.u, &self.disc, &mut self.ws, &mut fp)?;
                self.u[j] = keep - step;
                stationarity_residual_ocp(&self.problem, x0, &self.u, &self.disc, &mut self.ws, &mut fm)?;
                self.u[j] = keep;
                for i in 0..dim {
                    jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * step);
                }
            }
            let step = match jac.lu().solve(&DVector::from_column_slice(&f)) {
                Some(s) => s,
                None => break,
            };
            let base = self.u.clone();
            let mut alpha = 1.0;
            loop {
                for i in 0..dim {
                    self.u[i] = base[i] - alpha * step[i];
                }
                let trial = self.residual(x0);
                if let Ok(trial) = trial {
                    let tn = norm(&trial);
                    if tn.is_finite() && (tn <= (1.0 - 1e-4 * alpha) * fnorm || alpha < 1e-3) {
                        f = trial;
                        fnorm = tn;
                        break;
                    }
                }
                if alpha < 1e-3 {
                    self.u.copy_from_slice(&base);
                    break;
                }
                alpha *= 0.5;
            }
        }
        self.newton_iterations = iterations;
        self.u_dot.iter_mut().for_each(|v| *v = 0.0);
        if !(fnorm < 1e-2) {
            return Err(Error::InitializationFailed { residual: fnorm });
        }
        Ok(fnorm)
    }

    /// One continuation step: solve `(∂F/∂U) U̇ = −ζF − (∂F/∂x) ẋ` by
    /// matrix-free GMRES and advance `U ← U + Δt U̇`.
    pub fn continuation_update(&mut self, x: &[f64], _t: f64, dt: f64) -> Result<ControllerOutput> {
        let started = Instant::now();
        let nu = self.problem.input_dim();
        let h = self.settings.fd_step;
        let zeta = self.settings.zeta;

        self.problem.dynamics(x, &self.u[..nu], &mut self.x_dot)?;
        for i in 0..x.len() {
            self.x_shift[i] = x[i] + h * self.x_dot[i];
        }
        stationarity_residual_ocp(&self.problem, x, &self.u, &self.disc, &mut self.ws, &mut self.f0)?;
        stationarity_residual_ocp(&self.problem, &self.x_shift, &self.u, &self.disc, &mut self.ws, &mut self.f1)?;
        let residual_norm = norm(&self.f0);
        if !residual_norm.is_finite() || self.f1.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteResidual);
        }
        for i in 0..self.rhs.len() {
            self.rhs[i] = -zeta * self.f0[i] - (self.f1[i] - self.f0[i]) / h;
        }

        let Self {
            problem,
            disc,
            u,
            u_dot,
            ws,
            f1,
            f2,
            rhs,
            x_shift,
            u_shift,
            settings,
            ..
        } = self;
        let outcome = gmres(
            |v, out| {
                for i in 0..u.len() {
                    u_shift[i] = u[i] + h * v[i];
                }
                stationarity_residual_ocp(problem, x_shift, u_shift, disc, ws, f2)?;
                for i in 0..out.len() {
                    out[i] = (f2[i] - f1[i]) / h;
                }
                Ok(())
            },
            rhs,
            u_dot,
            settings.krylov_dim,
            settings.restarts,
            1e-12,
        )?;

        for (ui, di) in self.u.iter_mut().zip(&self.u_dot) {
            *ui += dt * di;
        }
        if self.u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteResidual);
        }
        Ok(ControllerOutput {
            input: self.u[..nu].to_vec(),
            trajectory: self.u.clone(),
            residual_norm,
            solve_time: started.elapsed().as_secs_f64(),
            krylov_breakdown: outcome.stalled(),
        })
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Builds a solver seeded with the nominal input at every stage and refines
/// it by damped Newton at `(x0, t0)`.
pub fn initialize_solver<P: OcpProblem>(
    problem: P,
    x0: &[f64],
    _t0: f64,
    settings: SolverSettings,
) -> Result<SolverProblem<P>> {
    let mut solver = SolverProblem::new(problem, settings)?;
    solver.reinitialize(x0)?;
    Ok(solver)
}
