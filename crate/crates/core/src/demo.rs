//! Projection-point tracking along a prescribed trajectory.
//!
//! The trajectory follows the path at constant parameter speed with a
//! sinusoidal excursion per axis; the projection parameter is integrated from
//! its rate equation rather than re-solved, so the stationarity residual
//! measures how well the rate equation keeps the projection point exact.

use std::io::Write;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::path::{
    arc_length_rate, projection_rate, singularity_margin, solve_initial_projection, stationarity_residual,
    ParametricPath, SineTerm,
};

/// `p(t) = r(θ₀ + v t) + Σ aᵢ sin(ωᵢ t + φᵢ) eᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Excursion {
    pub theta0: f64,
    pub speed: f64,
    pub terms: [SineTerm; 3],
}

impl Excursion {
    pub fn position(&self, path: &dyn ParametricPath, t: f64) -> Vector3<f64> {
        let mut p = path.point(self.theta0 + self.speed * t);
        for (i, s) in self.terms.iter().enumerate() {
            p[i] += s.amplitude * (s.frequency * t + s.phase).sin();
        }
        p
    }

    pub fn velocity(&self, path: &dyn ParametricPath, t: f64) -> Vector3<f64> {
        let mut v = path.eval(self.theta0 + self.speed * t).d1 * self.speed;
        for (i, s) in self.terms.iter().enumerate() {
            v[i] += s.amplitude * s.frequency * (s.frequency * t + s.phase).cos();
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionSample {
    pub t: f64,
    pub theta: f64,
    pub sigma: f64,
    pub stationarity: f64,
    pub margin: f64,
    pub position: Vector3<f64>,
}

/// Integrates `(θ, σ)` with classical RK4 at `step`, sampling every
/// `sample_every` steps (the first sample is at `t = 0`).
pub fn track_projection(
    path: &dyn ParametricPath,
    trajectory: &Excursion,
    duration: f64,
    step: f64,
    sample_every: usize,
) -> Result<Vec<ProjectionSample>> {
    if !(duration > 0.0 && step > 0.0 && sample_every > 0) {
        return Err(Error::InvalidParameter("duration, step and sample_every must be positive".into()));
    }
    let rate = |t: f64, theta: f64| -> Result<(f64, f64)> {
        let p = trajectory.position(path, t);
        let v = trajectory.velocity(path, t);
        let th = projection_rate(path, theta, &p, &v)?;
        Ok((th, arc_length_rate(path, theta, th)))
    };
    let sample = |t: f64, theta: f64, sigma: f64| {
        let p = trajectory.position(path, t);
        ProjectionSample {
            t,
            theta,
            sigma,
            stationarity: stationarity_residual(path, theta, &p),
            margin: singularity_margin(path, theta, &p),
            position: p,
        }
    };

    let p0 = trajectory.position(path, 0.0);
    let mut theta = solve_initial_projection(path, &p0, Some(trajectory.theta0))?;
    let mut sigma = 0.0;
    let steps = (duration / step).round() as usize;
    let mut out = vec![sample(0.0, theta, sigma)];
    for k in 0..steps {
        let t = k as f64 * step;
        let k1 = rate(t, theta)?;
        let k2 = rate(t + 0.5 * step, theta + 0.5 * step * k1.0)?;
        let k3 = rate(t + 0.5 * step, theta + 0.5 * step * k2.0)?;
        let k4 = rate(t + step, theta + step * k3.0)?;
        theta += step / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        sigma += step / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        if (k + 1) % sample_every == 0 {
            out.push(sample((k + 1) as f64 * step, theta, sigma));
        }
    }
    Ok(out)
}

pub fn write_samples<W: Write>(out: W, samples: &[ProjectionSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(["t", "x", "y", "z", "theta", "sigma", "stationarity", "margin"]).map_err(io)?;
    for s in samples {
        let row = [s.t, s.position[0], s.position[1], s.position[2], s.theta, s.sigma, s.stationarity, s.margin];
        w.write_record(row.iter().map(|v| format!("{v:.16e}"))).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
