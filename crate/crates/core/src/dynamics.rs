//! Rigid-body quadrotor model.
//!
//! The state is `(p, ṗ, ω, q)`: inertial position and velocity, body rates and
//! a scalar-first attitude quaternion. Four rotor thrusts act along the body
//! z axis; each rotor also produces a reaction torque proportional to its
//! thrust. Rotors are numbered so that the torque map is
//!
//! ```text
//!     [  0   l   0  -l ]
//! T = [ -l   0   l   0 ]
//!     [  k  -k   k  -k ]
//! ```

use nalgebra::{Matrix3, SVector, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DRONE_STATE_DIM: usize = 13;
pub const INPUT_DIM: usize = 4;

pub type DroneVector = SVector<f64, DRONE_STATE_DIM>;

/// Physical constants of one airframe. Defaults are the MamboFly values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DroneParams {
    pub mass: f64,
    pub gravity: f64,
    pub arm_length: f64,
    /// Diagonal of the inertia matrix `(J_xx, J_yy, J_zz)`.
    pub inertia: [f64; 3],
    /// Reaction-torque to thrust ratio.
    pub torque_constant: f64,
}

impl Default for DroneParams {
    fn default() -> Self {
        Self {
            mass: 0.063,
            gravity: 9.81,
            arm_length: 0.0624,
            inertia: [5.82857e-5, 7.16914e-5, 1e-4],
            torque_constant: 0.0024,
        }
    }
}

impl DroneParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("mass", self.mass),
            ("gravity", self.gravity),
            ("arm_length", self.arm_length),
            ("inertia[0]", self.inertia[0]),
            ("inertia[1]", self.inertia[1]),
            ("inertia[2]", self.inertia[2]),
            ("torque_constant", self.torque_constant),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "drone {name} must be strictly positive, got {value}"
                )));
            }
        }
        Ok(())
    }

    /// Per-rotor thrust that balances gravity, `m g / 4`.
    pub fn hover_thrust(&self) -> f64 {
        self.mass * self.gravity / 4.0
    }

    /// Body torque `T u` produced by the rotor thrusts.
    pub fn torque(&self, u: &ControlInput) -> Vector3<f64> {
        let l = self.arm_length;
        let k = self.torque_constant;
        let f = &u.0;
        Vector3::new(
            l * (f[1] - f[3]),
            l * (f[2] - f[0]),
            k * (f[0] - f[1] + f[2] - f[3]),
        )
    }
}

/// Rotor thrusts `(F1, F2, F3, F4)` in newtons. Unconstrained in sign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlInput(pub [f64; INPUT_DIM]);

impl ControlInput {
    pub fn uniform(thrust: f64) -> Self {
        Self([thrust; INPUT_DIM])
    }

    pub fn hover(params: &DroneParams) -> Self {
        Self::uniform(params.hover_thrust())
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DroneState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub body_rates: Vector3<f64>,
    /// Scalar-first unit quaternion `(q0, q1, q2, q3)`.
    pub attitude: Vector4<f64>,
}

impl DroneState {
    /// At rest at `position` with level attitude.
    pub fn at_rest(position: Vector3<f64>) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            body_rates: Vector3::zeros(),
            attitude: Vector4::new(1.0, 0.0, 0.0, 0.0),
        }
    }

    pub fn to_vector(&self) -> DroneVector {
        let mut x = DroneVector::zeros();
        self.write_to(x.as_mut_slice());
        x
    }

    pub fn write_to(&self, out: &mut [f64]) {
        out[0..3].copy_from_slice(self.position.as_slice());
        out[3..6].copy_from_slice(self.velocity.as_slice());
        out[6..9].copy_from_slice(self.body_rates.as_slice());
        out[9..13].copy_from_slice(self.attitude.as_slice());
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Self {
            position: Vector3::new(x[0], x[1], x[2]),
            velocity: Vector3::new(x[3], x[4], x[5]),
            body_rates: Vector3::new(x[6], x[7], x[8]),
            attitude: Vector4::new(x[9], x[10], x[11], x[12]),
        }
    }

    pub fn normalize_attitude(&mut self) {
        let n = self.attitude.norm();
        if n > 0.0 {
            self.attitude /= n;
        }
    }
}

/// Body-to-inertial rotation matrix of a unit quaternion.
pub fn rotation_matrix(q: &Vector4<f64>) -> Matrix3<f64> {
    let (q0, q1, q2, q3) = (q[0], q[1], q[2], q[3]);
    Matrix3::new(
        q0 * q0 + q1 * q1 - q2 * q2 - q3 * q3,
        2.0 * (q1 * q2 - q0 * q3),
        2.0 * (q0 * q2 + q1 * q3),
        2.0 * (q1 * q2 + q0 * q3),
        q0 * q0 - q1 * q1 + q2 * q2 - q3 * q3,
        2.0 * (q2 * q3 - q0 * q1),
        2.0 * (q1 * q3 - q0 * q2),
        2.0 * (q0 * q1 + q2 * q3),
        q0 * q0 - q1 * q1 - q2 * q2 + q3 * q3,
    )
}

/// Third column of [`rotation_matrix`]: the body z axis in the inertial frame.
pub fn thrust_axis(q: &Vector4<f64>) -> Vector3<f64> {
    let (q0, q1, q2, q3) = (q[0], q[1], q[2], q[3]);
    Vector3::new(
        2.0 * (q0 * q2 + q1 * q3),
        2.0 * (q2 * q3 - q0 * q1),
        q0 * q0 - q1 * q1 - q2 * q2 + q3 * q3,
    )
}

/// `½ Ω(ω) q`.
pub fn quaternion_rate(q: &Vector4<f64>, w: &Vector3<f64>) -> Vector4<f64> {
    let (q0, q1, q2, q3) = (q[0], q[1], q[2], q[3]);
    let (w1, w2, w3) = (w[0], w[1], w[2]);
    0.5 * Vector4::new(
        -w1 * q1 - w2 * q2 - w3 * q3,
        w1 * q0 + w3 * q2 - w2 * q3,
        w2 * q0 - w3 * q1 + w1 * q3,
        w3 * q0 + w2 * q1 - w1 * q2,
    )
}

/// Euler's rotation equations for a diagonal inertia: `-J⁻¹(ω × Jω − T u)`.
pub fn body_acceleration(w: &Vector3<f64>, u: &ControlInput, params: &DroneParams) -> Vector3<f64> {
    let [jx, jy, jz] = params.inertia;
    let tau = params.torque(u);
    Vector3::new(
        ((jy - jz) * w[1] * w[2] + tau[0]) / jx,
        ((jz - jx) * w[2] * w[0] + tau[1]) / jy,
        ((jx - jy) * w[0] * w[1] + tau[2]) / jz,
    )
}

/// Time derivative of the 13-dimensional drone state.
pub fn drone_derivative(x: &DroneState, u: &ControlInput, params: &DroneParams) -> DroneVector {
    let mut dx = DroneVector::zeros();
    let acc = thrust_axis(&x.attitude) * (u.total() / params.mass)
        - Vector3::new(0.0, 0.0, params.gravity);
    dx.fixed_rows_mut::<3>(0).copy_from(&x.velocity);
    dx.fixed_rows_mut::<3>(3).copy_from(&acc);
    dx.fixed_rows_mut::<3>(6)
        .copy_from(&body_acceleration(&x.body_rates, u, params));
    dx.fixed_rows_mut::<4>(9)
        .copy_from(&quaternion_rate(&x.attitude, &x.body_rates));
    dx
}

/// Vector-Jacobian product of [`drone_derivative`].
///
/// Returns `(adjᵀ ∂f/∂x, adjᵀ ∂f/∂u)`.
pub fn drone_derivative_vjp(
    x: &DroneState,
    u: &ControlInput,
    params: &DroneParams,
    adj: &DroneVector,
) -> (DroneVector, Vector4<f64>) {
    let mut gx = DroneVector::zeros();
    let (q0, q1, q2, q3) = (x.attitude[0], x.attitude[1], x.attitude[2], x.attitude[3]);
    let (w1, w2, w3) = (x.body_rates[0], x.body_rates[1], x.body_rates[2]);
    let [jx, jy, jz] = params.inertia;
    let lv = adj.fixed_rows::<3>(3);
    let lw = adj.fixed_rows::<3>(6);
    let lq = adj.fixed_rows::<4>(9);

    // ṗ = v
    gx.fixed_rows_mut::<3>(3).copy_from(&adj.fixed_rows::<3>(0));

    // v̇ = Q₃(q) S / m - g e₃
    let s = u.total() / params.mass;
    let (ax, ay, az) = (lv[0] * s, lv[1] * s, lv[2] * s);
    gx[9] += 2.0 * (ax * q2 - ay * q1 + az * q0);
    gx[10] += 2.0 * (ax * q3 - ay * q0 - az * q1);
    gx[11] += 2.0 * (ax * q0 + ay * q3 - az * q2);
    gx[12] += 2.0 * (ax * q1 + ay * q2 + az * q3);

    // ω̇ gyroscopic coupling
    let c1 = (jy - jz) / jx;
    let c2 = (jz - jx) / jy;
    let c3 = (jx - jy) / jz;
    gx[6] += lw[1] * c2 * w3 + lw[2] * c3 * w2;
    gx[7] += lw[0] * c1 * w3 + lw[2] * c3 * w1;
    gx[8] += lw[0] * c1 * w2 + lw[1] * c2 * w1;

    // q̇ = ½ Ω(ω) q = ½ Ξ(q) ω
    gx[6] += 0.5 * (-q1 * lq[0] + q0 * lq[1] + q3 * lq[2] - q2 * lq[3]);
    gx[7] += 0.5 * (-q2 * lq[0] - q3 * lq[1] + q0 * lq[2] + q1 * lq[3]);
    gx[8] += 0.5 * (-q3 * lq[0] + q2 * lq[1] - q1 * lq[2] + q0 * lq[3]);
    // Ω is skew-symmetric, so Ωᵀ λ = -Ω λ.
    let om = quaternion_rate(&Vector4::new(lq[0], lq[1], lq[2], lq[3]), &x.body_rates);
    gx[9] -= om[0];
    gx[10] -= om[1];
    gx[11] -= om[2];
    gx[12] -= om[3];

    let axis = thrust_axis(&x.attitude);
    let common = axis.dot(&lv) / params.mass;
    let l = params.arm_length;
    let k = params.torque_constant;
    let (t1, t2, t3) = (lw[0] / jx, lw[1] / jy, lw[2] / jz);
    let gu = Vector4::new(
        common - l * t2 + k * t3,
        common + l * t1 - k * t3,
        common + l * t2 + k * t3,
        common - l * t1 - k * t3,
    );
    (gx, gu)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn random_quaternion(seed: u64) -> Vector4<f64> {
        // Small deterministic LCG; good enough to spread samples over S³.
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let q = Vector4::new(next(), next(), next(), next());
        q / q.norm()
    }

    #[test]
    fn identity_quaternion_gives_identity_rotation() {
        let r = rotation_matrix(&Vector4::new(1.0, 0.0, 0.0, 0.0));
        assert_eq!(r, Matrix3::identity());
    }

    #[test]
    fn quarter_turn_about_body_x() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let r = rotation_matrix(&Vector4::new(h, h, 0.0, 0.0));
        let col = r.column(2);
        assert!(close(col[0], 0.0, 1e-15));
        assert!(close(col[1], -1.0, 1e-15));
        assert!(close(col[2], 0.0, 1e-15));
    }

    #[test]
    fn rotation_is_orthonormal_and_matches_thrust_axis() {
        for seed in 0..200 {
            let q = random_quaternion(seed);
            let r = rotation_matrix(&q);
            let err = (r.transpose() * r - Matrix3::identity()).abs().max();
            assert!(err < 1e-12, "seed {seed}: {err}");
            assert!((r.determinant() - 1.0).abs() < 1e-12);
            assert!((r.column(2) - thrust_axis(&q)).norm() < 1e-15);
        }
    }

    #[test]
    fn quaternion_rate_examples() {
        let q = Vector4::new(1.0, 0.0, 0.0, 0.0);
        assert_eq!(quaternion_rate(&q, &Vector3::zeros()), Vector4::zeros());
        let qd = quaternion_rate(&q, &Vector3::new(0.0, 0.0, 2.0));
        assert_eq!(qd, Vector4::new(0.0, 0.0, 0.0, 1.0));
        for seed in 0..100 {
            let q = random_quaternion(seed) * 1.7;
            let w = random_quaternion(seed + 1000).xyz() * 5.0;
            assert!(q.dot(&quaternion_rate(&q, &w)).abs() < 1e-12);
        }
    }

    #[test]
    fn hover_is_an_equilibrium() {
        let p = DroneParams::default();
        let x = DroneState::at_rest(Vector3::new(0.3, -1.0, 2.0));
        let dx = drone_derivative(&x, &ControlInput::hover(&p), &p);
        assert!(dx.norm() < 1e-12, "{}", dx.norm());
        assert!(close(p.hover_thrust(), 0.154_507_5, 1e-9));
    }

    #[test]
    fn equal_thrusts_produce_no_torque() {
        let p = DroneParams::default();
        let mut x = DroneState::at_rest(Vector3::zeros());
        x.attitude = random_quaternion(7);
        let dx = drone_derivative(&x, &ControlInput::uniform(0.31), &p);
        assert_eq!(dx.fixed_rows::<3>(6).norm(), 0.0);
    }

    #[test]
    fn translational_force_depends_only_on_total_thrust() {
        let p = DroneParams::default();
        let mut x = DroneState::at_rest(Vector3::zeros());
        x.attitude = random_quaternion(3);
        let a = drone_derivative(&x, &ControlInput([0.1, 0.2, 0.3, 0.4]), &p);
        let b = drone_derivative(&x, &ControlInput([0.25; 4]), &p);
        assert!((a.fixed_rows::<3>(3) - b.fixed_rows::<3>(3)).norm() < 1e-14);
    }

    #[test]
    fn rejects_non_positive_parameters() {
        let mut p = DroneParams::default();
        assert!(p.validate().is_ok());
        p.inertia[1] = 0.0;
        assert!(matches!(p.validate(), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn vjp_matches_central_differences() {
        let p = DroneParams::default();
        for seed in 0..50u64 {
            let q = random_quaternion(seed);
            let r = random_quaternion(seed + 77);
            let x = DroneState {
                position: r.xyz(),
                velocity: Vector3::new(r[1], r[2], r[3]) * 3.0,
                body_rates: Vector3::new(q[1], q[2], q[3]) * 4.0,
                attitude: q,
            };
            let u = ControlInput([0.1 + r[0] * 0.05, 0.2, 0.15 - r[1] * 0.1, 0.12]);
            let adj = DroneVector::from_fn(|i, _| ((i as f64 + 1.0) * 0.37 + seed as f64).sin());
            let (gx, gu) = drone_derivative_vjp(&x, &u, &p, &adj);
            let h = 1e-6;
            let xv = x.to_vector();
            for i in 0..DRONE_STATE_DIM {
                let mut xp = xv;
                let mut xm = xv;
                xp[i] += h;
                xm[i] -= h;
                let fp = drone_derivative(&DroneState::from_slice(xp.as_slice()), &u, &p);
                let fm = drone_derivative(&DroneState::from_slice(xm.as_slice()), &u, &p);
                let fd = adj.dot(&(fp - fm)) / (2.0 * h);
                assert!(
                    (fd - gx[i]).abs() <= 1e-4 * fd.abs().max(1.0),
                    "x[{i}] seed {seed}: {fd} vs {}",
                    gx[i]
                );
            }
            for i in 0..INPUT_DIM {
                let mut up = u;
                let mut um = u;
                up.0[i] += h;
                um.0[i] -= h;
                let fd = adj.dot(&(drone_derivative(&x, &up, &p) - drone_derivative(&x, &um, &p)))
                    / (2.0 * h);
                assert!((fd - gu[i]).abs() <= 1e-4 * fd.abs().max(1.0), "u[{i}]");
            }
        }
    }
}
