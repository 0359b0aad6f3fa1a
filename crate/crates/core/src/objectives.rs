//! Cost functions for racing.
//!
//! Path following rewards arc length and penalizes deviation from the
//! projection point, body rates, and thrust away from hover. The potential
//! `G_O` shapes interaction with the other drone in `(θ_Δ, R)` coordinates:
//! a positive hump when the opponent is ahead (`θ_Δ > δ₂`, avoid and pass)
//! and a negative well when it is behind (block).

use nalgebra::{Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlInput, DroneParams};
use crate::error::{Error, Result};
use crate::path::{AugmentedState, AugmentedVector, ParametricPath};

/// Weights of the path-following cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostWeights {
    /// `a₁..a₃`
    pub position: [f64; 3],
    /// `a₄..a₆`
    pub body_rate: [f64; 3],
    /// `a₇`
    pub progress: f64,
    /// `b`
    pub input: f64,
    /// `u_ref`, normally `m g / 4`.
    pub hover_thrust: f64,
}

impl CostWeights {
    /// Default weights with input weight `b` and hover reference from `params`.
    pub fn with_input_weight(input: f64, params: &DroneParams) -> Self {
        Self {
            position: [1.0; 3],
            body_rate: [0.1; 3],
            progress: 0.5,
            input,
            hover_thrust: params.hover_thrust(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = self.position.iter().chain(&self.body_rate).chain([&self.progress]);
        for &a in nonneg {
            if !(a.is_finite() && a >= 0.0) {
                return Err(Error::InvalidParameter(format!("state weight {a} must be >= 0")));
            }
        }
        if !(self.input.is_finite() && self.input > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "input weight {} must be > 0",
                self.input
            )));
        }
        if !self.hover_thrust.is_finite() {
            return Err(Error::InvalidParameter("hover thrust must be finite".into()));
        }
        Ok(())
    }
}

/// Shape constants of the overtaking/obstructing potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta1: f64,
    pub delta2: f64,
}

impl Default for PotentialParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 4.0,
            gamma: 5.0,
            delta1: -0.5,
            delta2: -1.0,
        }
    }
}

impl PotentialParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("potential {name} must be > 0")));
            }
        }
        if !(self.delta1.is_finite() && self.delta2.is_finite()) {
            return Err(Error::InvalidParameter("potential offsets must be finite".into()));
        }
        Ok(())
    }
}

fn tracking_terms(x: &AugmentedState, w: &CostWeights, path: &dyn ParametricPath) -> f64 {
    let dev = x.deviation(path);
    let rates = &x.drone.body_rates;
    let mut cost = -w.progress * x.sigma;
    for i in 0..3 {
        cost += w.position[i] * dev[i] * dev[i] + w.body_rate[i] * rates[i] * rates[i];
    }
    cost
}

fn input_term(u: &ControlInput, w: &CostWeights) -> f64 {
    u.0.iter()
        .map(|&f| {
            let d = f - w.hover_thrust;
            w.input * d * d
        })
        .sum()
}

/// Path-following stage cost `L_PF`.
pub fn stage_cost_pf(
    x: &AugmentedState,
    u: &ControlInput,
    w: &CostWeights,
    path: &dyn ParametricPath,
) -> f64 {
    tracking_terms(x, w, path) + input_term(u, w)
}

/// Path-following terminal cost `φ_PF`: the stage cost without the input term.
pub fn terminal_cost_pf(x: &AugmentedState, w: &CostWeights, path: &dyn ParametricPath) -> f64 {
    tracking_terms(x, w, path)
}

/// Gradient of [`terminal_cost_pf`] with respect to the augmented state.
pub fn terminal_cost_pf_gradient(
    x: &AugmentedState,
    w: &CostWeights,
    path: &dyn ParametricPath,
) -> AugmentedVector {
    let e = path.eval(x.theta);
    let dev = x.drone.position - e.r;
    let mut g = AugmentedVector::zeros();
    let mut d_theta = 0.0;
    for i in 0..3 {
        let a = 2.0 * w.position[i] * dev[i];
        g[i] = a;
        d_theta -= a * e.d1[i];
        g[6 + i] = 2.0 * w.body_rate[i] * x.drone.body_rates[i];
    }
    g[13] = d_theta;
    g[14] = -w.progress;
    g
}

/// Gradient of the input term of [`stage_cost_pf`].
pub fn stage_cost_pf_input_gradient(u: &ControlInput, w: &CostWeights) -> Vector4<f64> {
    Vector4::from_fn(|i, _| 2.0 * w.input * (u.0[i] - w.hover_thrust))
}

/// Constant-speed opponent model used by NMPC: the opponent slides along
/// the path, keeping its lateral offset, with `θ̇ = λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpponentPrediction {
    pub position: Vector3<f64>,
    pub theta: f64,
    pub speed: f64,
}

impl OpponentPrediction {
    pub fn from_slice(x: &[f64], speed: f64) -> Self {
        Self {
            position: Vector3::new(x[0], x[1], x[2]),
            theta: x[3],
            speed,
        }
    }

    pub fn write_to(&self, out: &mut [f64]) {
        out[..3].copy_from_slice(self.position.as_slice());
        out[3] = self.theta;
    }
}

/// `(λ r'(θ_op), λ)`.
pub fn opponent_prediction_derivative(pred: &OpponentPrediction, path: &dyn ParametricPath) -> Vector4<f64> {
    let d1 = path.eval(pred.theta).d1 * pred.speed;
    Vector4::new(d1[0], d1[1], d1[2], pred.speed)
}

/// Gradient of the potential with respect to both drones' positions and
/// path parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialGradient {
    pub value: f64,
    pub ego_position: Vector3<f64>,
    pub ego_theta: f64,
    pub opponent_position: Vector3<f64>,
    pub opponent_theta: f64,
}

/// Gap `θ_Δ = θ_op − θ_d` and squared deviation difference `R²`.
pub fn potential_coordinates(
    ego_position: &Vector3<f64>,
    ego_theta: f64,
    opponent_position: &Vector3<f64>,
    opponent_theta: f64,
    path: &dyn ParametricPath,
) -> (f64, f64) {
    let w = (opponent_position - path.point(opponent_theta)) - (ego_position - path.point(ego_theta));
    (opponent_theta - ego_theta, w.norm_squared())
}

/// `G_O` evaluated directly in `(θ_Δ, R²)`.
pub fn potential_profile(gap: f64, r2: f64, pp: &PotentialParams) -> f64 {
    let z = (gap - pp.delta1) / pp.alpha;
    (-z * z).exp() * (gap - pp.delta2).tanh() * pp.beta / (1.0 + pp.gamma * r2)
}

/// Overtaking/obstructing potential of the ego drone against an opponent at
/// `(p_op, θ_op)`.
pub fn potential(
    ego: &AugmentedState,
    opponent_position: &Vector3<f64>,
    opponent_theta: f64,
    pp: &PotentialParams,
    path: &dyn ParametricPath,
) -> f64 {
    let (gap, r2) = potential_coordinates(
        &ego.drone.position,
        ego.theta,
        opponent_position,
        opponent_theta,
        path,
    );
    potential_profile(gap, r2, pp)
}

pub fn potential_gradient(
    ego_position: &Vector3<f64>,
    ego_theta: f64,
    opponent_position: &Vector3<f64>,
    opponent_theta: f64,
    pp: &PotentialParams,
    path: &dyn ParametricPath,
) -> PotentialGradient {
    let eo = path.eval(opponent_theta);
    let ed = path.eval(ego_theta);
    let w = (opponent_position - eo.r) - (ego_position - ed.r);
    let r2 = w.norm_squared();
    let gap = opponent_theta - ego_theta;
    let z = (gap - pp.delta1) / pp.alpha;
    let gauss = (-z * z).exp();
    let th = (gap - pp.delta2).tanh();
    let den = 1.0 + pp.gamma * r2;
    let value = gauss * th * pp.beta / den;
    let d_gap = pp.beta / den * gauss * (-2.0 * z / pp.alpha * th + (1.0 - th * th));
    let d_r2 = -pp.beta * pp.gamma * gauss * th / (den * den);
    PotentialGradient {
        value,
        ego_position: -2.0 * d_r2 * w,
        ego_theta: -d_gap + 2.0 * d_r2 * w.dot(&ed.d1),
        opponent_position: 2.0 * d_r2 * w,
        opponent_theta: d_gap - 2.0 * d_r2 * w.dot(&eo.d1),
    }
}

/// NMPC combined state: the ego's augmented state plus the predicted
/// opponent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmpcState {
    pub ego: AugmentedState,
    pub opponent: OpponentPrediction,
}

/// NRHDG combined state: both drones' augmented states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GameState {
    pub ego: AugmentedState,
    pub opponent: AugmentedState,
}

impl GameState {
    pub fn swapped(&self) -> Self {
        Self {
            ego: self.opponent,
            opponent: self.ego,
        }
    }
}

/// `L_M = L_PF + G_O`.
pub fn nmpc_stage_cost(
    x: &NmpcState,
    u: &ControlInput,
    w: &CostWeights,
    pp: &PotentialParams,
    path: &dyn ParametricPath,
) -> f64 {
    stage_cost_pf(&x.ego, u, w, path)
        + potential(&x.ego, &x.opponent.position, x.opponent.theta, pp, path)
}

/// `φ_M = φ_PF + G_O`.
pub fn nmpc_terminal_cost(
    x: &NmpcState,
    w: &CostWeights,
    pp: &PotentialParams,
    path: &dyn ParametricPath,
) -> f64 {
    terminal_cost_pf(&x.ego, w, path)
        + potential(&x.ego, &x.opponent.position, x.opponent.theta, pp, path)
}

fn mutual_potential(x: &GameState, pp: &PotentialParams, path: &dyn ParametricPath) -> f64 {
    potential(&x.ego, &x.opponent.drone.position, x.opponent.theta, pp, path)
        - potential(&x.opponent, &x.ego.drone.position, x.ego.theta, pp, path)
}

/// Zero-sum stage cost `L_D`: the ego's racing cost minus the opponent's.
pub fn nrhdg_stage_cost(
    x: &GameState,
    u_ego: &ControlInput,
    u_opponent: &ControlInput,
    w_ego: &CostWeights,
    w_opponent: &CostWeights,
    pp: &PotentialParams,
    path: &dyn ParametricPath,
) -> f64 {
    stage_cost_pf(&x.ego, u_ego, w_ego, path) - stage_cost_pf(&x.opponent, u_opponent, w_opponent, path)
        + mutual_potential(x, pp, path)
}

/// Zero-sum terminal cost `φ_D`.
pub fn nrhdg_terminal_cost(
    x: &GameState,
    w_ego: &CostWeights,
    w_opponent: &CostWeights,
    pp: &PotentialParams,
    path: &dyn ParametricPath,
) -> f64 {
    terminal_cost_pf(&x.ego, w_ego, path) - terminal_cost_pf(&x.opponent, w_opponent, path)
        + mutual_potential(x, pp, path)
}
