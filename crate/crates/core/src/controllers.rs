//! NMPC and NRHDG racing problems and the controllers built on them.
//!
//! NMPC predicts the opponent with the constant-speed model and minimizes
//! over its own thrusts. NRHDG models the opponent with the full augmented
//! dynamics and solves for a saddle point: the ego minimizes the zero-sum
//! cost while the opponent's thrusts maximize it.

use std::sync::Arc;

use nalgebra::{Vector3, Vector4};

use crate::dynamics::{ControlInput, DroneParams};
use crate::error::Result;
use crate::objectives::{
    nmpc_stage_cost, nmpc_terminal_cost, nrhdg_stage_cost, nrhdg_terminal_cost,
    opponent_prediction_derivative, potential_gradient, stage_cost_pf_input_gradient,
    terminal_cost_pf_gradient, CostWeights, GameState, NmpcState, OpponentPrediction,
    PotentialParams,
};
use crate::path::{
    augmented_derivative, augmented_derivative_vjp, solve_initial_projection, AugmentedState,
    AugmentedVector, ParametricPath, AUGMENTED_DIM,
};
use crate::solver::{initialize_solver, ControllerOutput, OcpProblem, SolverProblem, SolverSettings};

pub const NMPC_STATE_DIM: usize = AUGMENTED_DIM + 4;
pub const GAME_STATE_DIM: usize = 2 * AUGMENTED_DIM;

fn aug(x: &[f64]) -> AugmentedState {
    AugmentedState::from_slice(x)
}

fn input(u: &[f64]) -> ControlInput {
    ControlInput([u[0], u[1], u[2], u[3]])
}

/// Ego-side NMPC problem over `x_M = (x̄_d, p_op, θ_op)`.
#[derive(Clone)]
pub struct NmpcProblem {
    pub path: Arc<dyn ParametricPath>,
    pub params: DroneParams,
    pub weights: CostWeights,
    pub potential: PotentialParams,
    /// `λ` of the opponent model.
    pub opponent_speed: f64,
}

impl NmpcProblem {
    pub fn state(&self, x: &[f64]) -> NmpcState {
        NmpcState {
            ego: aug(&x[..AUGMENTED_DIM]),
            opponent: OpponentPrediction::from_slice(&x[AUGMENTED_DIM..], self.opponent_speed),
        }
    }

    pub fn pack(ego: &AugmentedState, opponent_position: &Vector3<f64>, opponent_theta: f64) -> Vec<f64> {
        let mut x = vec![0.0; NMPC_STATE_DIM];
        ego.write_to(&mut x[..AUGMENTED_DIM]);
        x[15..18].copy_from_slice(opponent_position.as_slice());
        x[18] = opponent_theta;
        x
    }

    /// State gradient of `φ_PF + G_O`, shared by the stage and terminal costs.
    fn cost_state_gradient(&self, s: &NmpcState, out: &mut [f64]) {
        let g_pf = terminal_cost_pf_gradient(&s.ego, &self.weights, self.path.as_ref());
        let g = potential_gradient(
            &s.ego.drone.position,
            s.ego.theta,
            &s.opponent.position,
            s.opponent.theta,
            &self.potential,
            self.path.as_ref(),
        );
        out[..AUGMENTED_DIM].copy_from_slice(g_pf.as_slice());
        for i in 0..3 {
            out[i] += g.ego_position[i];
            out[15 + i] = g.opponent_position[i];
        }
        out[13] += g.ego_theta;
        out[18] = g.opponent_theta;
    }
}

impl OcpProblem for NmpcProblem {
    fn state_dim(&self) -> usize {
        NMPC_STATE_DIM
    }

    fn input_dim(&self) -> usize {
        4
    }

    fn dynamics(&self, x: &[f64], u: &[f64], dx: &mut [f64]) -> Result<()> {
        let s = self.state(x);
        let f = augmented_derivative(&s.ego, &input(u), self.path.as_ref(), &self.params)?;
        dx[..AUGMENTED_DIM].copy_from_slice(f.as_slice());
        let fo = opponent_prediction_derivative(&s.opponent, self.path.as_ref());
        dx[AUGMENTED_DIM..].copy_from_slice(fo.as_slice());
        Ok(())
    }

    fn stage_cost(&self, x: &[f64], u: &[f64]) -> f64 {
        nmpc_stage_cost(&self.state(x), &input(u), &self.weights, &self.potential, self.path.as_ref())
    }

    fn terminal_cost(&self, x: &[f64]) -> f64 {
        nmpc_terminal_cost(&self.state(x), &self.weights, &self.potential, self.path.as_ref())
    }

    fn terminal_cost_gradient(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.cost_state_gradient(&self.state(x), out);
        Ok(())
    }

    fn hamiltonian_gradients(
        &self,
        x: &[f64],
        u: &[f64],
        lambda: &[f64],
        hx: &mut [f64],
        hu: &mut [f64],
    ) -> Result<()> {
        let s = self.state(x);
        let u = input(u);
        self.cost_state_gradient(&s, hx);
        let adj = AugmentedVector::from_column_slice(&lambda[..AUGMENTED_DIM]);
        let (gx, gu) = augmented_derivative_vjp(&s.ego, &u, self.path.as_ref(), &self.params, &adj)?;
        for i in 0..AUGMENTED_DIM {
            hx[i] += gx[i];
        }
        // ṗ_op = λ r'(θ_op) depends on θ_op only.
        let d2 = self.path.eval(s.opponent.theta).d2;
        let lp = Vector3::new(lambda[15], lambda[16], lambda[17]);
        hx[18] += self.opponent_speed * lp.dot(&d2);
        let gu_cost = stage_cost_pf_input_gradient(&u, &self.weights);
        for i in 0..4 {
            hu[i] = gu_cost[i] + gu[i];
        }
        Ok(())
    }

    fn nominal_input(&self) -> Vec<f64> {
        vec![self.params.hover_thrust(); 4]
    }
}

/// Zero-sum game over `x_D = (x̄_d, x̄_op)` with inputs `(u_d, u_op)`.
#[derive(Clone)]
pub struct NrhdgProblem {
    pub path: Arc<dyn ParametricPath>,
    pub params: DroneParams,
    pub ego_weights: CostWeights,
    pub opponent_weights: CostWeights,
    pub potential: PotentialParams,
}

impl NrhdgProblem {
    pub fn state(&self, x: &[f64]) -> GameState {
        GameState {
            ego: aug(&x[..AUGMENTED_DIM]),
            opponent: aug(&x[AUGMENTED_DIM..]),
        }
    }

    pub fn pack(ego: &AugmentedState, opponent: &AugmentedState) -> Vec<f64> {
        let mut x = vec![0.0; GAME_STATE_DIM];
        ego.write_to(&mut x[..AUGMENTED_DIM]);
        opponent.write_to(&mut x[AUGMENTED_DIM..]);
        x
    }

    fn cost_state_gradient(&self, s: &GameState, out: &mut [f64]) {
        let path = self.path.as_ref();
        let ge = terminal_cost_pf_gradient(&s.ego, &self.ego_weights, path);
        let go = terminal_cost_pf_gradient(&s.opponent, &self.opponent_weights, path);
        let (pe, te) = (&s.ego.drone.position, s.ego.theta);
        let (po, to) = (&s.opponent.drone.position, s.opponent.theta);
        // G_O(ego vs opp) − G_O(opp vs ego)
        let g1 = potential_gradient(pe, te, po, to, &self.potential, path);
        let g2 = potential_gradient(po, to, pe, te, &self.potential, path);
        for i in 0..AUGMENTED_DIM {
            out[i] = ge[i];
            out[AUGMENTED_DIM + i] = -go[i];
        }
        for i in 0..3 {
            out[i] += g1.ego_position[i] - g2.opponent_position[i];
            out[AUGMENTED_DIM + i] += g1.opponent_position[i] - g2.ego_position[i];
        }
        out[13] += g1.ego_theta - g2.opponent_theta;
        out[AUGMENTED_DIM + 13] += g1.opponent_theta - g2.ego_theta;
    }
}

impl OcpProblem for NrhdgProblem {
    fn state_dim(&self) -> usize {
        GAME_STATE_DIM
    }

    fn input_dim(&self) -> usize {
        8
    }

    fn dynamics(&self, x: &[f64], u: &[f64], dx: &mut [f64]) -> Result<()> {
        let s = self.state(x);
        let path = self.path.as_ref();
        let fe = augmented_derivative(&s.ego, &input(&u[..4]), path, &self.params)?;
        let fo = augmented_derivative(&s.opponent, &input(&u[4..]), path, &self.params)?;
        dx[..AUGMENTED_DIM].copy_from_slice(fe.as_slice());
        dx[AUGMENTED_DIM..].copy_from_slice(fo.as_slice());
        Ok(())
    }

    fn stage_cost(&self, x: &[f64], u: &[f64]) -> f64 {
        nrhdg_stage_cost(
            &self.state(x),
            &input(&u[..4]),
            &input(&u[4..]),
            &self.ego_weights,
            &self.opponent_weights,
            &self.potential,
            self.path.as_ref(),
        )
    }

    fn terminal_cost(&self, x: &[f64]) -> f64 {
        nrhdg_terminal_cost(
            &self.state(x),
            &self.ego_weights,
            &self.opponent_weights,
            &self.potential,
            self.path.as_ref(),
        )
    }

    fn terminal_cost_gradient(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.cost_state_gradient(&self.state(x), out);
        Ok(())
    }

    fn hamiltonian_gradients(
        &self,
        x: &[f64],
        u: &[f64],
        lambda: &[f64],
        hx: &mut [f64],
        hu: &mut [f64],
    ) -> Result<()> {
        let s = self.state(x);
        let path = self.path.as_ref();
        let (ue, uo) = (input(&u[..4]), input(&u[4..]));
        self.cost_state_gradient(&s, hx);
        let le = AugmentedVector::from_column_slice(&lambda[..AUGMENTED_DIM]);
        let lo = AugmentedVector::from_column_slice(&lambda[AUGMENTED_DIM..]);
        let (gxe, gue) = augmented_derivative_vjp(&s.ego, &ue, path, &self.params, &le)?;
        let (gxo, guo) = augmented_derivative_vjp(&s.opponent, &uo, path, &self.params, &lo)?;
        for i in 0..AUGMENTED_DIM {
            hx[i] += gxe[i];
            hx[AUGMENTED_DIM + i] += gxo[i];
        }
        let ce: Vector4<f64> = stage_cost_pf_input_gradient(&ue, &self.ego_weights);
        let co: Vector4<f64> = stage_cost_pf_input_gradient(&uo, &self.opponent_weights);
        for i in 0..4 {
            hu[i] = ce[i] + gue[i];
            hu[4 + i] = -co[i] + guo[i];
        }
        Ok(())
    }

    fn nominal_input(&self) -> Vec<f64> {
        vec![self.params.hover_thrust(); 8]
    }
}

/// Controller identity in a race.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ControllerKind {
    /// NMPC with the constant-speed opponent model (`M`).
    Nmpc,
    /// Nonlinear receding-horizon differential game (`D`).
    Nrhdg,
    /// Constant hover thrust; no optimization.
    Hover,
}

impl ControllerKind {
    pub fn letter(self) -> char {
        match self {
            ControllerKind::Nmpc => 'M',
            ControllerKind::Nrhdg => 'D',
            ControllerKind::Hover => 'H',
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'M' => Some(ControllerKind::Nmpc),
            'D' => Some(ControllerKind::Nrhdg),
            'H' => Some(ControllerKind::Hover),
            _ => None,
        }
    }
}

/// Everything one drone knows when building its controller.
#[derive(Clone)]
pub struct ControllerSetup {
    pub path: Arc<dyn ParametricPath>,
    pub params: DroneParams,
    pub own_weights: CostWeights,
    pub opponent_weights: CostWeights,
    pub potential: PotentialParams,
    pub opponent_speed: f64,
    pub solver: SolverSettings,
}

enum Inner {
    Nmpc(Box<SolverProblem<NmpcProblem>>),
    Nrhdg(Box<SolverProblem<NrhdgProblem>>),
    Hover(ControlInput),
}

/// A drone's feedback controller.
pub struct RaceController {
    kind: ControllerKind,
    inner: Inner,
}

/// Input applied by a controller in one cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerStep {
    pub input: ControlInput,
    pub output: ControllerOutput,
}

impl RaceController {
    pub fn new(
        kind: ControllerKind,
        setup: &ControllerSetup,
        own: &AugmentedState,
        other: &AugmentedState,
    ) -> Result<Self> {
        let inner = match kind {
            ControllerKind::Nmpc => {
                let problem = NmpcProblem {
                    path: setup.path.clone(),
                    params: setup.params,
                    weights: setup.own_weights,
                    potential: setup.potential,
                    opponent_speed: setup.opponent_speed,
                };
                let x0 = nmpc_measurement(setup.path.as_ref(), own, other)?;
                Inner::Nmpc(Box::new(initialize_solver(problem, &x0, 0.0, setup.solver)?))
            }
            ControllerKind::Nrhdg => {
                let problem = NrhdgProblem {
                    path: setup.path.clone(),
                    params: setup.params,
                    ego_weights: setup.own_weights,
                    opponent_weights: setup.opponent_weights,
                    potential: setup.potential,
                };
                let x0 = NrhdgProblem::pack(own, other);
                Inner::Nrhdg(Box::new(initialize_solver(problem, &x0, 0.0, setup.solver)?))
            }
            ControllerKind::Hover => Inner::Hover(ControlInput::hover(&setup.params)),
        };
        Ok(Self { kind, inner })
    }

    pub fn kind(&self) -> ControllerKind {
        self.kind
    }

    /// Computes this cycle's thrusts from the measured states of both drones.
    pub fn update(
        &mut self,
        own: &AugmentedState,
        other: &AugmentedState,
        t: f64,
        dt: f64,
    ) -> Result<ControllerStep> {
        match &mut self.inner {
            Inner::Nmpc(solver) => {
                let x = nmpc_measurement(solver.problem().path.as_ref(), own, other)?;
                let out = solver.continuation_update(&x, t, dt)?;
                Ok(ControllerStep {
                    input: input(&out.input),
                    output: out,
                })
            }
            Inner::Nrhdg(solver) => {
                let x = NrhdgProblem::pack(own, other);
                let out = solver.continuation_update(&x, t, dt)?;
                Ok(ControllerStep {
                    input: input(&out.input[..4]),
                    output: out,
                })
            }
            Inner::Hover(u) => Ok(ControllerStep {
                input: *u,
                output: ControllerOutput {
                    input: u.0.to_vec(),
                    trajectory: u.0.to_vec(),
                    residual_norm: 0.0,
                    solve_time: 0.0,
                    krylov_breakdown: false,
                },
            }),
        }
    }
}

/// NMPC's combined state: the opponent prediction is re-seeded every cycle
/// from the measured opponent position.
fn nmpc_measurement(
    path: &dyn ParametricPath,
    own: &AugmentedState,
    other: &AugmentedState,
) -> Result<Vec<f64>> {
    let theta = solve_initial_projection(path, &other.drone.position, Some(other.theta))?;
    Ok(NmpcProblem::pack(own, &other.drone.position, theta))
}
