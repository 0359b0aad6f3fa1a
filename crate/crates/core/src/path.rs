//! Parametric curves and the dynamics of a drone's projection point on them.
//!
//! The projection parameter `θ_d` is not found by minimizing distance at each
//! instant. It is integrated alongside the drone state: differentiating the
//! orthogonality condition `(r(θ) − p)ᵀ r'(θ) = 0` in time gives
//!
//! ```text
//! θ̇ = ṗᵀ r' / (‖r'‖² + (r − p)ᵀ r'')
//! σ̇ = ‖r'‖ θ̇
//! ```
//!
//! which keeps the condition satisfied as long as the denominator stays
//! positive. A global search is only needed once, to seed `θ_d(0)`.

use nalgebra::{SVector, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    drone_derivative, drone_derivative_vjp, ControlInput, DroneParams, DroneState, DroneVector,
};
use crate::error::{Error, Result};

pub const AUGMENTED_DIM: usize = 15;
pub type AugmentedVector = SVector<f64, AUGMENTED_DIM>;

/// Relative singularity guard: the projection denominator must exceed this
/// fraction of `‖r'‖²`.
pub const SINGULARITY_GUARD: f64 = 1e-6;

/// Samples used by the global scan in [`solve_initial_projection`].
pub const PROJECTION_GRID: usize = 1000;

const NEWTON_MAX_ITER: usize = 100;
const STATIONARITY_TOL: f64 = 1e-10;

/// A curve point with its first three parameter derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPoint {
    pub r: Vector3<f64>,
    pub d1: Vector3<f64>,
    pub d2: Vector3<f64>,
    pub d3: Vector3<f64>,
}

/// A regular, twice-differentiable curve `r : Θ → ℝ³` with analytic
/// derivatives.
///
/// The third derivative is only used for exact gradients of the projection
/// dynamics.
pub trait ParametricPath: Send + Sync {
    fn eval(&self, theta: f64) -> PathPoint;

    /// Parameter interval `[θ_min, θ_max]`.
    fn domain(&self) -> (f64, f64);

    fn point(&self, theta: f64) -> Vector3<f64> {
        self.eval(theta).r
    }
}

/// One `A sin(ω θ + φ)` term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SineTerm {
    pub amplitude: f64,
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
}

/// `offset + slope θ + Σ A sin(ω θ + φ)` along one axis.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSeries {
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub slope: f64,
    #[serde(default)]
    pub terms: Vec<SineTerm>,
}

impl AxisSeries {
    fn eval(&self, theta: f64) -> [f64; 4] {
        let mut out = [self.offset + self.slope * theta, self.slope, 0.0, 0.0];
        for t in &self.terms {
            let (s, c) = (t.frequency * theta + t.phase).sin_cos();
            let a = t.amplitude;
            let w = t.frequency;
            out[0] += a * s;
            out[1] += a * w * c;
            out[2] -= a * w * w * s;
            out[3] -= a * w * w * w * c;
        }
        out
    }
}

/// Sinusoid-family curve, one [`AxisSeries`] per coordinate.
///
/// Lines, circles, helices and the benchmark race course are all members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinusoidPath {
    pub axes: [AxisSeries; 3],
    pub theta_min: f64,
    pub theta_max: f64,
}

impl SinusoidPath {
    /// The race course `r(θ) = (6 sin θ, 3 sin 2θ, 6 sin(θ/2))`.
    pub fn race_course(theta_min: f64, theta_max: f64) -> Self {
        let sine = |a: f64, w: f64| AxisSeries {
            terms: vec![SineTerm {
                amplitude: a,
                frequency: w,
                phase: 0.0,
            }],
            ..Default::default()
        };
        Self {
            axes: [sine(6.0, 1.0), sine(3.0, 2.0), sine(6.0, 0.5)],
            theta_min,
            theta_max,
        }
    }

    /// `r(θ) = origin + θ · direction`.
    pub fn line(origin: Vector3<f64>, direction: Vector3<f64>, theta_min: f64, theta_max: f64) -> Self {
        let axis = |i: usize| AxisSeries {
            offset: origin[i],
            slope: direction[i],
            terms: vec![],
        };
        Self {
            axes: [axis(0), axis(1), axis(2)],
            theta_min,
            theta_max,
        }
    }

    /// `r(θ) = (ρ cos θ, ρ sin θ, pitch · θ)`; a circle when `pitch = 0`.
    pub fn helix(radius: f64, pitch: f64, theta_min: f64, theta_max: f64) -> Self {
        let term = |phase: f64| SineTerm {
            amplitude: radius,
            frequency: 1.0,
            phase,
        };
        Self {
            axes: [
                AxisSeries {
                    terms: vec![term(std::f64::consts::FRAC_PI_2)],
                    ..Default::default()
                },
                AxisSeries {
                    terms: vec![term(0.0)],
                    ..Default::default()
                },
                AxisSeries {
                    slope: pitch,
                    ..Default::default()
                },
            ],
            theta_min,
            theta_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta_min.is_finite() && self.theta_max.is_finite() && self.theta_min < self.theta_max) {
            return Err(Error::InvalidParameter(format!(
                "path interval [{}, {}] is empty",
                self.theta_min, self.theta_max
            )));
        }
        // Regularity is checked on the projection grid.
        let n = PROJECTION_GRID * 10;
        for i in 0..=n {
            let th = self.theta_min + (self.theta_max - self.theta_min) * i as f64 / n as f64;
            if self.eval(th).d1.norm() <= 1e-9 {
                return Err(Error::InvalidParameter(format!(
                    "path tangent vanishes near theta = {th}"
                )));
            }
        }
        Ok(())
    }
}

impl ParametricPath for SinusoidPath {
    fn eval(&self, theta: f64) -> PathPoint {
        let [x, y, z] = [
            self.axes[0].eval(theta),
            self.axes[1].eval(theta),
            self.axes[2].eval(theta),
        ];
        PathPoint {
            r: Vector3::new(x[0], y[0], z[0]),
            d1: Vector3::new(x[1], y[1], z[1]),
            d2: Vector3::new(x[2], y[2], z[2]),
            d3: Vector3::new(x[3], y[3], z[3]),
        }
    }

    fn domain(&self) -> (f64, f64) {
        (self.theta_min, self.theta_max)
    }
}

/// `(r(θ) − p)ᵀ r'(θ)`; zero exactly at stationary points of the distance.
pub fn stationarity_residual(path: &dyn ParametricPath, theta: f64, p: &Vector3<f64>) -> f64 {
    let e = path.eval(theta);
    (e.r - p).dot(&e.d1)
}

/// Denominator of the projection ODE, `‖r'‖² + (r − p)ᵀ r''`.
///
/// Equals `½ d²/dθ² ‖r(θ) − p‖²`, so positivity certifies a local minimum.
pub fn projection_denominator(path: &dyn ParametricPath, theta: f64, p: &Vector3<f64>) -> f64 {
    let e = path.eval(theta);
    e.d1.norm_squared() + (e.r - p).dot(&e.d2)
}

/// `‖r'‖² − ‖r − p‖ ‖r''‖`. Positive values rule out a singular projection.
pub fn singularity_margin(path: &dyn ParametricPath, theta: f64, p: &Vector3<f64>) -> f64 {
    let e = path.eval(theta);
    e.d1.norm_squared() - (e.r - p).norm() * e.d2.norm()
}

fn guarded_denominator(e: &PathPoint, theta: f64, p: &Vector3<f64>) -> Result<f64> {
    let speed2 = e.d1.norm_squared();
    let den = speed2 + (e.r - p).dot(&e.d2);
    let guard = SINGULARITY_GUARD * speed2;
    if den.is_nan() || den <= guard {
        return Err(Error::SingularProjection {
            theta,
            denominator: den,
            guard,
        });
    }
    Ok(den)
}

/// Rate of the projection parameter.
pub fn projection_rate(
    path: &dyn ParametricPath,
    theta: f64,
    p: &Vector3<f64>,
    p_dot: &Vector3<f64>,
) -> Result<f64> {
    let e = path.eval(theta);
    let den = guarded_denominator(&e, theta, p)?;
    Ok(p_dot.dot(&e.d1) / den)
}

/// Rate of arc length travelled by the projection point.
pub fn arc_length_rate(path: &dyn ParametricPath, theta: f64, theta_dot: f64) -> f64 {
    path.eval(theta).d1.norm() * theta_dot
}

/// Signed arc length `∫_{θ0}^{θ1} ‖r'‖ dθ`, negative when `θ1 < θ0`.
pub fn signed_arc_length(path: &dyn ParametricPath, theta0: f64, theta1: f64) -> f64 {
    if theta0 == theta1 {
        return 0.0;
    }
    let speed = |t: f64| path.eval(t).d1.norm();
    let (a, b, sign) = if theta1 > theta0 {
        (theta0, theta1, 1.0)
    } else {
        (theta1, theta0, -1.0)
    };
    // Panels of at most one unit of θ keep the recursion shallow on long spans.
    let panels = ((b - a).ceil() as usize).max(1);
    let width = (b - a) / panels as f64;
    let tol = 1e-10 / panels as f64;
    let mut total = 0.0;
    for i in 0..panels {
        let lo = a + width * i as f64;
        let hi = if i + 1 == panels { b } else { lo + width };
        total += adaptive_simpson(&speed, lo, hi, tol);
    }
    sign * total
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Safeguarded Newton on the stationarity residual inside `[lo, hi]`, where
/// the residual changes sign from non-positive to non-negative.
fn bracketed_newton(path: &dyn ParametricPath, p: &Vector3<f64>, mut lo: f64, mut hi: f64) -> Option<f64> {
    let mut theta = 0.5 * (lo + hi);
    for _ in 0..NEWTON_MAX_ITER {
        let e = path.eval(theta);
        let g = (e.r - p).dot(&e.d1);
        if g.abs() < 1e-14 * e.d1.norm_squared().max(1.0) {
            break;
        }
        if g < 0.0 {
            lo = theta;
        } else {
            hi = theta;
        }
        let dg = e.d1.norm_squared() + (e.r - p).dot(&e.d2);
        let mut next = theta - g / dg;
        if !(dg > 0.0) || !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - theta).abs() <= 1e-15 * theta.abs().max(1.0) {
            theta = next;
            break;
        }
        theta = next;
    }
    is_local_minimum(path, theta, p).then_some(theta)
}

fn is_local_minimum(path: &dyn ParametricPath, theta: f64, p: &Vector3<f64>) -> bool {
    let (lo, hi) = path.domain();
    theta >= lo
        && theta <= hi
        && stationarity_residual(path, theta, p).abs() < STATIONARITY_TOL
        && projection_denominator(path, theta, p) > 0.0
}

fn newton_from(path: &dyn ParametricPath, p: &Vector3<f64>, start: f64) -> Option<f64> {
    let mut theta = start;
    for _ in 0..NEWTON_MAX_ITER {
        let e = path.eval(theta);
        let g = (e.r - p).dot(&e.d1);
        let dg = e.d1.norm_squared() + (e.r - p).dot(&e.d2);
        if !(dg > 0.0) {
            return None;
        }
        let step = g / dg;
        theta -= step;
        if !theta.is_finite() {
            return None;
        }
        if step.abs() <= 1e-14 * theta.abs().max(1.0) {
            break;
        }
    }
    is_local_minimum(path, theta, p).then_some(theta)
}

/// All interior local minimizers of `‖r(θ) − p‖` bracketed by the grid scan.
fn projection_candidates(path: &dyn ParametricPath, p: &Vector3<f64>) -> Vec<(f64, f64)> {
    let (lo, hi) = path.domain();
    let n = PROJECTION_GRID;
    let grid: Vec<f64> = (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect();
    let resid: Vec<f64> = grid
        .iter()
        .map(|&t| stationarity_residual(path, t, p))
        .collect();
    let mut out = Vec::new();
    for i in 0..n - 1 {
        // Distance decreasing then increasing across the cell.
        if resid[i] <= 0.0 && resid[i + 1] >= 0.0 {
            let theta = if resid[i] == 0.0 {
                Some(grid[i])
            } else if resid[i + 1] == 0.0 {
                Some(grid[i + 1])
            } else {
                bracketed_newton(path, p, grid[i], grid[i + 1])
            };
            if let Some(t) = theta {
                if is_local_minimum(path, t, p) && out.iter().all(|&(c, _)| c != t) {
                    out.push((t, (path.point(t) - p).norm()));
                }
            }
        }
    }
    out
}

/// Finds a projection parameter `θ_d` of `p`.
///
/// Without a hint, returns the global minimizer of `‖r(θ) − p‖` among the
/// interior stationary points bracketed by a [`PROJECTION_GRID`]-sample scan.
/// With a hint, Newton is first run from the hint and its result is kept if it
/// converges to a local minimum within two grid cells; otherwise the scan
/// candidate nearest the hint is returned.
pub fn solve_initial_projection(
    path: &dyn ParametricPath,
    p: &Vector3<f64>,
    hint: Option<f64>,
) -> Result<f64> {
    let (lo, hi) = path.domain();
    let cell = (hi - lo) / (PROJECTION_GRID - 1) as f64;
    if let Some(h) = hint {
        if let Some(t) = newton_from(path, p, h.clamp(lo, hi)) {
            if (t - h).abs() <= 2.0 * cell {
                return Ok(t);
            }
        }
    }
    let candidates = projection_candidates(path, p);
    let best = match hint {
        Some(h) => candidates
            .iter()
            .min_by(|a, b| (a.0 - h).abs().total_cmp(&(b.0 - h).abs())),
        None => candidates.iter().min_by(|a, b| a.1.total_cmp(&b.1)),
    };
    best.map(|c| c.0).ok_or(Error::NoProjectionFound)
}

/// Drone state augmented with its projection parameter and arc length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentedState {
    pub drone: DroneState,
    pub theta: f64,
    pub sigma: f64,
}

impl AugmentedState {
    /// Places a drone at rest at `r(θ)` with `σ = 0`.
    pub fn at_rest_on_path(path: &dyn ParametricPath, theta: f64) -> Self {
        Self {
            drone: DroneState::at_rest(path.point(theta)),
            theta,
            sigma: 0.0,
        }
    }

    pub fn to_vector(&self) -> AugmentedVector {
        let mut x = AugmentedVector::zeros();
        self.write_to(x.as_mut_slice());
        x
    }

    pub fn write_to(&self, out: &mut [f64]) {
        self.drone.write_to(&mut out[..13]);
        out[13] = self.theta;
        out[14] = self.sigma;
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Self {
            drone: DroneState::from_slice(&x[..13]),
            theta: x[13],
            sigma: x[14],
        }
    }

    /// Deviation of the drone from its projection point, `p − r(θ)`.
    pub fn deviation(&self, path: &dyn ParametricPath) -> Vector3<f64> {
        self.drone.position - path.point(self.theta)
    }
}

/// Time derivative of the 15-dimensional augmented state.
pub fn augmented_derivative(
    x: &AugmentedState,
    u: &ControlInput,
    path: &dyn ParametricPath,
    params: &DroneParams,
) -> Result<AugmentedVector> {
    let e = path.eval(x.theta);
    let den = guarded_denominator(&e, x.theta, &x.drone.position)?;
    let theta_dot = x.drone.velocity.dot(&e.d1) / den;
    let mut dx = AugmentedVector::zeros();
    dx.fixed_rows_mut::<13>(0)
        .copy_from(&drone_derivative(&x.drone, u, params));
    dx[13] = theta_dot;
    dx[14] = e.d1.norm() * theta_dot;
    Ok(dx)
}

/// Vector-Jacobian product of [`augmented_derivative`]:
/// `(adjᵀ ∂f/∂x̄, adjᵀ ∂f/∂u)`.
pub fn augmented_derivative_vjp(
    x: &AugmentedState,
    u: &ControlInput,
    path: &dyn ParametricPath,
    params: &DroneParams,
    adj: &AugmentedVector,
) -> Result<(AugmentedVector, Vector4<f64>)> {
    let drone_adj: DroneVector = adj.fixed_rows::<13>(0).into_owned();
    let (gd, gu) = drone_derivative_vjp(&x.drone, u, params, &drone_adj);
    let mut gx = AugmentedVector::zeros();
    gx.fixed_rows_mut::<13>(0).copy_from(&gd);

    let e = path.eval(x.theta);
    let p = &x.drone.position;
    let v = &x.drone.velocity;
    let den = guarded_denominator(&e, x.theta, p)?;
    let speed = e.d1.norm();
    let num = v.dot(&e.d1);
    let theta_dot = num / den;
    // σ̇ = ‖r'‖ θ̇, so the θ̇ sensitivities enter with weight λ_θ + ‖r'‖ λ_σ.
    let c = adj[13] + speed * adj[14];

    let d_num_d_theta = v.dot(&e.d2);
    let dev = e.r - p;
    let d_den_d_theta = 3.0 * e.d1.dot(&e.d2) + dev.dot(&e.d3);
    let d_rate_d_theta = (d_num_d_theta * den - num * d_den_d_theta) / (den * den);

    let d_rate_d_p = e.d2 * (num / (den * den));
    let d_rate_d_v = e.d1 / den;
    for i in 0..3 {
        gx[i] += c * d_rate_d_p[i];
        gx[3 + i] += c * d_rate_d_v[i];
    }
    gx[13] += c * d_rate_d_theta + adj[14] * theta_dot * e.d1.dot(&e.d2) / speed;
    Ok((gx, gu))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x_axis() -> SinusoidPath {
        SinusoidPath::line(Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0), -10.0, 10.0)
    }

    fn course() -> SinusoidPath {
        SinusoidPath::race_course(-2.0, 20.0)
    }

    #[test]
    fn course_matches_closed_form() {
        let path = course();
        for &t in &[-1.3, 0.0, 0.7, 2.9, 11.0] {
            let e = path.eval(t);
            let r = Vector3::new(6.0 * f64::sin(t), 3.0 * f64::sin(2.0 * t), 6.0 * f64::sin(t / 2.0));
            let d1 = Vector3::new(6.0 * f64::cos(t), 6.0 * f64::cos(2.0 * t), 3.0 * f64::cos(t / 2.0));
            assert!((e.r - r).norm() < 1e-14);
            assert!((e.d1 - d1).norm() < 1e-14);
        }
    }

    #[test]
    fn analytic_derivatives_match_differences() {
        let path = course();
        let h = 1e-5;
        for &t in &[-1.0, 0.3, 4.2, 9.9] {
            let e = path.eval(t);
            let ep = path.eval(t + h);
            let em = path.eval(t - h);
            assert!(((ep.r - em.r) / (2.0 * h) - e.d1).norm() < 1e-8);
            assert!(((ep.d1 - em.d1) / (2.0 * h) - e.d2).norm() < 1e-8);
            assert!(((ep.d2 - em.d2) / (2.0 * h) - e.d3).norm() < 1e-7);
        }
    }

    #[test]
    fn stationarity_on_a_line() {
        let path = x_axis();
        let p = Vector3::new(2.0, 1.0, 0.0);
        assert_eq!(stationarity_residual(&path, 2.0, &p), 0.0);
        assert_eq!(stationarity_residual(&path, 3.0, &p), 1.0);
        assert_eq!(stationarity_residual(&course(), 0.8, &course().point(0.8)), 0.0);
    }

    #[test]
    fn initial_projection_on_a_line() {
        let path = x_axis();
        let t = solve_initial_projection(&path, &Vector3::new(2.0, 1.0, 0.0), None).unwrap();
        assert!((t - 2.0).abs() < 1e-12);
    }

    #[test]
    fn initial_projection_of_a_point_on_the_course() {
        let path = course();
        let t = solve_initial_projection(&path, &path.point(1.0), None).unwrap();
        assert!((t - 1.0).abs() < 1e-8, "{t}");
        let t = solve_initial_projection(&path, &path.point(1.0), Some(0.9)).unwrap();
        assert!((t - 1.0).abs() < 1e-8, "{t}");
    }

    #[test]
    fn hint_selects_the_nearest_branch() {
        // r(θ + 4π) = r(θ): both copies are global minimizers.
        let path = SinusoidPath::race_course(-2.0, 30.0);
        let p = path.point(1.0) + Vector3::new(0.0, 0.0, 0.05);
        let far = 1.0 + 4.0 * std::f64::consts::PI;
        let near = solve_initial_projection(&path, &p, Some(0.8)).unwrap();
        assert!((near - 1.0).abs() < 0.05, "{near}");
        let t = solve_initial_projection(&path, &p, Some(far + 0.3)).unwrap();
        assert!((t - near - 4.0 * std::f64::consts::PI).abs() < 1e-9, "{t}");
    }

    #[test]
    fn no_projection_when_every_minimum_is_at_the_boundary() {
        let path = SinusoidPath::line(Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0), 0.0, 1.0);
        let r = solve_initial_projection(&path, &Vector3::new(5.0, 1.0, 0.0), None);
        assert_eq!(r, Err(Error::NoProjectionFound));
    }

    #[test]
    fn projection_rate_examples() {
        let path = x_axis();
        let p = Vector3::new(0.5, -2.0, 3.0);
        let r = projection_rate(&path, 0.5, &p, &Vector3::new(1.7, 0.0, 0.0)).unwrap();
        assert_eq!(r, 1.7);
        let r = projection_rate(&path, 0.5, &p, &Vector3::new(0.0, 2.5, 0.0)).unwrap();
        assert_eq!(r, 0.0);

        let circle = SinusoidPath::helix(2.0, 0.0, -10.0, 10.0);
        let err = projection_rate(&circle, 0.4, &Vector3::zeros(), &Vector3::new(1.0, 0.0, 0.0));
        assert!(matches!(err, Err(Error::SingularProjection { .. })));
    }

    #[test]
    fn arc_length_rate_examples() {
        let path = SinusoidPath::line(Vector3::zeros(), Vector3::new(2.0, 0.0, 0.0), -1.0, 1.0);
        assert_eq!(arc_length_rate(&path, 0.3, 1.0), 2.0);
        assert_eq!(arc_length_rate(&path, 0.3, 0.0), 0.0);
        let unit = SinusoidPath::helix(1.0, 0.0, -10.0, 10.0);
        assert!((arc_length_rate(&unit, 0.7, 0.25) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn signed_arc_length_examples() {
        let helix = SinusoidPath::helix(1.0, 1.0, -10.0, 10.0);
        for &t1 in &[0.5, 3.0, 7.25] {
            let s = signed_arc_length(&helix, 0.0, t1);
            assert!((s - std::f64::consts::SQRT_2 * t1).abs() < 1e-10, "{t1}: {s}");
        }
        assert_eq!(signed_arc_length(&helix, 1.3, 1.3), 0.0);
        let path = course();
        let a = signed_arc_length(&path, 0.2, 5.1);
        let b = signed_arc_length(&path, 5.1, 0.2);
        assert_eq!(a, -b);
        // Composite trapezoid reference on a fine grid.
        let n = 200_000;
        let h = (5.1 - 0.2) / n as f64;
        let mut reference = 0.0;
        for i in 0..=n {
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            reference += w * path.eval(0.2 + h * i as f64).d1.norm();
        }
        reference *= h;
        assert!((a - reference).abs() < 1e-8, "{a} vs {reference}");
    }

    #[test]
    fn singularity_margin_examples() {
        let line = x_axis();
        assert_eq!(singularity_margin(&line, 0.0, &Vector3::new(0.0, 7.0, 0.0)), 1.0);
        let circle = SinusoidPath::helix(3.0, 0.0, -10.0, 10.0);
        assert!(singularity_margin(&circle, 1.1, &Vector3::zeros()).abs() < 1e-12);
        let path = course();
        assert!((singularity_margin(&path, 0.0, &path.point(0.0)) - 81.0).abs() < 1e-12);
    }

    #[test]
    fn augmented_derivative_examples() {
        let params = DroneParams::default();
        let path = course();
        let x = AugmentedState::at_rest_on_path(&path, 0.6);
        let u = ControlInput::hover(&params);
        let dx = augmented_derivative(&x, &u, &path, &params).unwrap();
        assert_eq!(dx[13], 0.0);
        assert_eq!(dx[14], 0.0);
        assert_eq!(
            dx.fixed_rows::<13>(0).into_owned(),
            drone_derivative(&x.drone, &u, &params)
        );

        let dir = Vector3::new(0.0, 3.0, 4.0);
        let line = SinusoidPath::line(Vector3::zeros(), dir, -10.0, 10.0);
        let mut x = AugmentedState::at_rest_on_path(&line, 0.2);
        let speed = 1.5;
        x.drone.velocity = dir.normalize() * speed;
        let dx = augmented_derivative(&x, &u, &line, &params).unwrap();
        assert!((dx[13] - speed / 5.0).abs() < 1e-15);
        assert!((dx[14] - speed).abs() < 1e-15);
    }

    #[test]
    fn augmented_vjp_matches_central_differences() {
        let params = DroneParams::default();
        let path = course();
        for k in 0..20 {
            let kf = k as f64;
            let theta = 0.3 * kf - 1.0;
            let mut x = AugmentedState::at_rest_on_path(&path, theta);
            x.drone.position += Vector3::new(0.1 * (kf).sin(), 0.2 * (2.0 * kf).cos(), -0.15);
            x.drone.velocity = Vector3::new(1.0 + kf.cos(), -2.0, 0.5 * kf.sin());
            x.drone.body_rates = Vector3::new(0.3, -1.2, 2.0 * kf.sin());
            let q = Vector4::new(1.0, 0.1 * kf.sin(), -0.2, 0.05 * kf);
            x.drone.attitude = q / q.norm();
            x.sigma = 0.4 * kf;
            let u = ControlInput([0.12, 0.2, 0.1 + 0.01 * kf, 0.17]);
            let adj = AugmentedVector::from_fn(|i, _| ((i as f64 + 0.5) * 1.3 + kf).cos());
            let (gx, gu) = augmented_derivative_vjp(&x, &u, &path, &params, &adj).unwrap();
            let xv = x.to_vector();
            let h = 1e-6;
            for i in 0..AUGMENTED_DIM {
                let mut xp = xv;
                let mut xm = xv;
                xp[i] += h;
                xm[i] -= h;
                let fp = augmented_derivative(&AugmentedState::from_slice(xp.as_slice()), &u, &path, &params).unwrap();
                let fm = augmented_derivative(&AugmentedState::from_slice(xm.as_slice()), &u, &path, &params).unwrap();
                let fd = adj.dot(&(fp - fm)) / (2.0 * h);
                assert!(
                    (fd - gx[i]).abs() <= 1e-4 * fd.abs().max(1.0),
                    "k {k} x[{i}]: {fd} vs {}",
                    gx[i]
                );
            }
            for i in 0..4 {
                let mut up = u;
                let mut um = u;
                up.0[i] += h;
                um.0[i] -= h;
                let fd = adj.dot(
                    &(augmented_derivative(&x, &up, &path, &params).unwrap()
                        - augmented_derivative(&x, &um, &path, &params).unwrap()),
                ) / (2.0 * h);
                assert!((fd - gu[i]).abs() <= 1e-4 * fd.abs().max(1.0));
            }
        }
    }
}
