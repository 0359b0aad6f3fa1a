//! Closed-loop two-drone races and the overtaking/obstructing comparison.
//!
//! In `Race(B, A)` controller `B` starts in front and `A` behind. Progress of
//! the rear drone is its path parameter; comparing the rear progress across
//! races that share one controller isolates the other controller's overtaking
//! (or obstructing) ability.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::Vector3;
use serde::Serialize;

use crate::controllers::{ControllerKind, ControllerSetup, RaceController};
use crate::dynamics::{ControlInput, DroneParams};
use crate::error::{Error, Result};
use crate::objectives::{potential, CostWeights, PotentialParams};
use crate::path::{
    augmented_derivative, signed_arc_length, solve_initial_projection, AugmentedState,
    AugmentedVector, ParametricPath, SinusoidPath,
};
use crate::solver::SolverSettings;

/// How "ahead" is decided when detecting an overtake.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProgressMeasure {
    /// Path parameter θ.
    #[default]
    Theta,
    /// Arc length from the rear drone's start.
    ArcLength,
}

#[derive(Debug, Clone)]
pub struct RaceConfig {
    pub front: ControllerKind,
    pub rear: ControllerKind,
    pub front_theta0: f64,
    pub rear_theta0: f64,
    pub front_weights: CostWeights,
    pub rear_weights: CostWeights,
    pub potential: PotentialParams,
    pub params: DroneParams,
    pub path: SinusoidPath,
    pub duration: f64,
    pub control_cycle: f64,
    /// `λ` of NMPC's opponent model.
    pub opponent_speed: f64,
    pub solver: SolverSettings,
    /// Record wall-clock solve times. Off makes logs a pure function of the
    /// configuration.
    pub record_timing: bool,
}

impl RaceConfig {
    /// Number of control cycles simulated; the log has one more record.
    pub fn cycles(&self) -> usize {
        (self.duration / self.control_cycle).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.front_theta0 > self.rear_theta0) {
            return Err(Error::InvalidParameter(
                "front drone must start ahead of the rear drone".into(),
            ));
        }
        if !(self.duration > 0.0 && self.control_cycle > 0.0) {
            return Err(Error::InvalidParameter(
                "duration and control cycle must be positive".into(),
            ));
        }
        self.params.validate()?;
        self.front_weights.validate()?;
        self.rear_weights.validate()?;
        self.potential.validate()?;
        self.solver.validate()?;
        self.path.validate()
    }

    pub fn label(&self) -> String {
        format!("Race({},{})", self.front.letter(), self.rear.letter())
    }
}

/// One drone's slice of a log record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DroneRecord {
    pub state: AugmentedState,
    pub input: ControlInput,
    pub residual: f64,
    pub solve_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RaceRecord {
    pub t: f64,
    pub rear: DroneRecord,
    pub front: DroneRecord,
    /// Potential of the rear drone against the front drone.
    pub potential_ego: f64,
    /// Potential of the front drone against the rear drone.
    pub potential_opp: f64,
    /// Smallest inter-drone distance seen so far.
    pub min_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RaceLog {
    pub records: Vec<RaceRecord>,
}

/// A finished race with solver diagnostics that are not part of the log.
#[derive(Debug, Clone)]
pub struct RaceRun {
    pub front: ControllerKind,
    pub rear: ControllerKind,
    pub log: RaceLog,
    /// Continuation updates whose GMRES solve did not reduce the residual,
    /// `[rear, front]`.
    pub krylov_breakdowns: [usize; 2],
    /// Wall-clock solve times, `[rear, front]`, collected whether or not
    /// they are written to the log.
    pub timing: [TimingStats; 2],
}

/// Per-update solve-time statistics in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, serde::Deserialize)]
pub struct TimingStats {
    pub updates: usize,
    pub mean_ms: f64,
    pub max_ms: f64,
}

impl TimingStats {
    pub fn push(&mut self, ms: f64) {
        self.updates += 1;
        self.mean_ms += (ms - self.mean_ms) / self.updates as f64;
        self.max_ms = self.max_ms.max(ms);
    }

    /// Pools two sets of statistics.
    pub fn merge(&self, other: &TimingStats) -> TimingStats {
        let updates = self.updates + other.updates;
        if updates == 0 {
            return TimingStats::default();
        }
        TimingStats {
            updates,
            mean_ms: (self.mean_ms * self.updates as f64 + other.mean_ms * other.updates as f64)
                / updates as f64,
            max_ms: self.max_ms.max(other.max_ms),
        }
    }
}

fn rk4(
    x: &AugmentedState,
    u: &ControlInput,
    dt: f64,
    path: &dyn ParametricPath,
    params: &DroneParams,
) -> Result<AugmentedState> {
    let x0 = x.to_vector();
    let f = |v: &AugmentedVector| augmented_derivative(&AugmentedState::from_slice(v.as_slice()), u, path, params);
    let k1 = f(&x0)?;
    let k2 = f(&(x0 + k1 * (0.5 * dt)))?;
    let k3 = f(&(x0 + k2 * (0.5 * dt)))?;
    let k4 = f(&(x0 + k3 * dt))?;
    let next = x0 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    let mut out = AugmentedState::from_slice(next.as_slice());
    out.drone.normalize_attitude();
    Ok(out)
}

/// Advances both drones by one RK4 step with inputs held, then renormalizes
/// their quaternions.
pub fn step_plant(
    rear: &AugmentedState,
    front: &AugmentedState,
    u_rear: &ControlInput,
    u_front: &ControlInput,
    dt: f64,
    path: &dyn ParametricPath,
    params: &DroneParams,
) -> Result<(AugmentedState, AugmentedState)> {
    Ok((
        rk4(rear, u_rear, dt, path, params)?,
        rk4(front, u_front, dt, path, params)?,
    ))
}

fn start_state(path: &dyn ParametricPath, theta: f64) -> Result<AugmentedState> {
    let p = path.point(theta);
    let theta = solve_initial_projection(path, &p, Some(theta))?;
    Ok(AugmentedState::at_rest_on_path(path, theta))
}

/// Simulates one race from rest at `r(θ_rear)` and `r(θ_front)`.
pub fn run_race(config: &RaceConfig) -> Result<RaceRun> {
    config.validate()?;
    let path: Arc<dyn ParametricPath> = Arc::new(config.path.clone());
    let dt = config.control_cycle;
    let fail = |time: f64| move |e: Error| Error::RaceFailed { time, source: Box::new(e) };

    let mut rear = start_state(path.as_ref(), config.rear_theta0).map_err(fail(0.0))?;
    let mut front = start_state(path.as_ref(), config.front_theta0).map_err(fail(0.0))?;

    let setup = |own: CostWeights, other: CostWeights| ControllerSetup {
        path: path.clone(),
        params: config.params,
        own_weights: own,
        opponent_weights: other,
        potential: config.potential,
        opponent_speed: config.opponent_speed,
        solver: config.solver,
    };
    let mut rear_ctl = RaceController::new(
        config.rear,
        &setup(config.rear_weights, config.front_weights),
        &rear,
        &front,
    )
    .map_err(fail(0.0))?;
    let mut front_ctl = RaceController::new(
        config.front,
        &setup(config.front_weights, config.rear_weights),
        &front,
        &rear,
    )
    .map_err(fail(0.0))?;

    let cycles = config.cycles();
    let mut records = Vec::with_capacity(cycles + 1);
    let mut breakdowns = [0usize; 2];
    let mut timing = [TimingStats::default(); 2];
    let mut min_distance = f64::INFINITY;
    for k in 0..=cycles {
        let t = k as f64 * dt;
        let rs = rear_ctl.update(&rear, &front, t, dt).map_err(fail(t))?;
        let fs = front_ctl.update(&front, &rear, t, dt).map_err(fail(t))?;
        breakdowns[0] += rs.output.krylov_breakdown as usize;
        breakdowns[1] += fs.output.krylov_breakdown as usize;
        if config.rear != ControllerKind::Hover {
            timing[0].push(rs.output.solve_time * 1e3);
        }
        if config.front != ControllerKind::Hover {
            timing[1].push(fs.output.solve_time * 1e3);
        }
        min_distance = min_distance.min((rear.drone.position - front.drone.position).norm());
        let ms = |s: f64| if config.record_timing { s * 1e3 } else { 0.0 };
        records.push(RaceRecord {
            t,
            rear: DroneRecord {
                state: rear,
                input: rs.input,
                residual: rs.output.residual_norm,
                solve_ms: ms(rs.output.solve_time),
            },
            front: DroneRecord {
                state: front,
                input: fs.input,
                residual: fs.output.residual_norm,
                solve_ms: ms(fs.output.solve_time),
            },
            potential_ego: potential(&rear, &front.drone.position, front.theta, &config.potential, path.as_ref()),
            potential_opp: potential(&front, &rear.drone.position, rear.theta, &config.potential, path.as_ref()),
            min_distance,
        });
        if k < cycles {
            let (r, f) = step_plant(&rear, &front, &rs.input, &fs.input, dt, path.as_ref(), &config.params)
                .map_err(fail(t))?;
            rear = r;
            front = f;
        }
    }
    Ok(RaceRun {
        front: config.front,
        rear: config.rear,
        log: RaceLog { records },
        krylov_breakdowns: breakdowns,
        timing,
    })
}

/// Runs independent races on up to `jobs` threads; results keep the input
/// order.
pub fn run_races(configs: &[RaceConfig], jobs: usize) -> Vec<Result<RaceRun>> {
    let jobs = jobs.clamp(1, configs.len().max(1));
    if jobs == 1 {
        return configs.iter().map(run_race).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<Option<Result<RaceRun>>>> =
        configs.iter().map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                let Some(cfg) = configs.get(i) else { break };
                *slots[i].lock().unwrap() = Some(run_race(cfg));
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every race ran"))
        .collect()
}

/// Rear-drone progress over a race.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgressSeries {
    pub times: Vec<f64>,
    /// Path parameter of the drone that started behind.
    pub rear_theta: Vec<f64>,
    /// First sample time at which the rear drone is level with or ahead of
    /// the front drone.
    pub overtake_time: Option<f64>,
    /// Sample times where the rear progress decreased.
    pub non_monotone: Vec<f64>,
}

impl ProgressSeries {
    pub fn overtake_index(&self) -> Option<usize> {
        self.overtake_time
            .and_then(|t| self.times.iter().position(|&s| s == t))
    }
}

/// Progress series with overtakes decided on the path parameter.
pub fn extract_progress(log: &RaceLog) -> ProgressSeries {
    extract_progress_with(log, |r| (r.rear.state.theta, r.front.state.theta))
}

/// Progress series with overtakes decided on arc length measured from the
/// rear drone's start; `front_offset` is the arc length from the rear start
/// to the front start.
pub fn extract_progress_by_arc_length(log: &RaceLog, front_offset: f64) -> ProgressSeries {
    extract_progress_with(log, |r| (r.rear.state.sigma, front_offset + r.front.state.sigma))
}

/// Dispatches on the configured measure.
pub fn extract_progress_measured(
    log: &RaceLog,
    measure: ProgressMeasure,
    path: &dyn ParametricPath,
    rear_theta0: f64,
    front_theta0: f64,
) -> ProgressSeries {
    match measure {
        ProgressMeasure::Theta => extract_progress(log),
        ProgressMeasure::ArcLength => {
            extract_progress_by_arc_length(log, signed_arc_length(path, rear_theta0, front_theta0))
        }
    }
}

fn extract_progress_with(log: &RaceLog, ahead: impl Fn(&RaceRecord) -> (f64, f64)) -> ProgressSeries {
    let times: Vec<f64> = log.records.iter().map(|r| r.t).collect();
    let rear_theta: Vec<f64> = log.records.iter().map(|r| r.rear.state.theta).collect();
    let overtake_time = log.records.iter().find_map(|r| {
        let (rear, front) = ahead(r);
        (rear >= front).then_some(r.t)
    });
    let non_monotone = rear_theta
        .windows(2)
        .zip(&times[1..])
        .filter(|(w, _)| w[1] < w[0])
        .map(|(_, &t)| t)
        .collect();
    ProgressSeries {
        times,
        rear_theta,
        overtake_time,
        non_monotone,
    }
}

/// `(front, rear)` controller pairing.
pub type Pairing = (ControllerKind, ControllerKind);

pub const PAIRINGS: [Pairing; 4] = [
    (ControllerKind::Nmpc, ControllerKind::Nmpc),
    (ControllerKind::Nmpc, ControllerKind::Nrhdg),
    (ControllerKind::Nrhdg, ControllerKind::Nmpc),
    (ControllerKind::Nrhdg, ControllerKind::Nrhdg),
];

/// Pass thresholds for the comparison report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonThresholds {
    /// Start of the comparison window (s), excluding the launch transient.
    pub window_start: f64,
    pub overtaking: f64,
    pub obstructing: f64,
    pub chains: f64,
}

impl Default for ComparisonThresholds {
    fn default() -> Self {
        Self {
            window_start: 1.0,
            overtaking: 0.9,
            obstructing: 0.8,
            chains: 0.8,
        }
    }
}

/// One inequality checked over a comparison window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityCheck {
    pub name: String,
    pub statement: String,
    pub window: (f64, f64),
    pub samples: usize,
    pub satisfied: usize,
    pub fraction: f64,
    pub threshold: f64,
    pub pass: bool,
    /// `(t, margin)` where a positive margin means the inequality holds.
    #[serde(skip)]
    pub margin: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EndpointCheck {
    pub statement: String,
    pub time: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub overtake_times: BTreeMap<String, f64>,
    pub checks: Vec<InequalityCheck>,
    pub endpoint: EndpointCheck,
    pub pass: bool,
}

impl ComparisonReport {
    pub fn check(&self, name: &str) -> Option<&InequalityCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Plain-text summary, one line per check.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (race, t) in &self.overtake_times {
            s.push_str(&format!("overtake {race}: t = {t:.3} s\n"));
        }
        for c in &self.checks {
            s.push_str(&format!(
                "{} {:<18} {:>6.1}% of {:>5} samples in [{:.3}, {:.3}] s (threshold {:.0}%)  {}\n",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                100.0 * c.fraction,
                c.samples,
                c.window.0,
                c.window.1,
                100.0 * c.threshold,
                c.statement
            ));
        }
        let e = &self.endpoint;
        s.push_str(&format!(
            "{} endpoint           {} at t = {:.3} s: {:.6} vs {:.6}\n",
            if e.pass { "PASS" } else { "FAIL" },
            e.statement,
            e.time,
            e.lhs,
            e.rhs
        ));
        s
    }
}

fn race_name(p: Pairing) -> String {
    format!("Race({},{})", p.0.letter(), p.1.letter())
}

fn prog_name(p: Pairing) -> String {
    format!("Prog_rear({},{})", p.0.letter(), p.1.letter())
}

/// Evaluates the overtaking and obstructing inequalities over the four
/// races keyed by `(front, rear)`.
///
/// Each comparison uses samples in `[window_start, t_end]` where `t_end` is
/// the earliest overtake among the races involved.
pub fn compare_races(
    races: &BTreeMap<Pairing, RaceLog>,
    thresholds: &ComparisonThresholds,
) -> Result<ComparisonReport> {
    use ControllerKind::{Nmpc as M, Nrhdg as D};
    let mut progress = BTreeMap::new();
    let mut missing = Vec::new();
    for p in PAIRINGS {
        let Some(log) = races.get(&p) else {
            missing.push(format!("{} not run", race_name(p)));
            continue;
        };
        let series = extract_progress(log);
        if series.overtake_time.is_none() {
            missing.push(format!("{} has no overtake", race_name(p)));
        }
        progress.insert(p, series);
    }
    if !missing.is_empty() {
        return Err(Error::IncompleteRaces(missing.join("; ")));
    }
    let len = progress.values().map(|s| s.times.len()).min().unwrap_or(0);
    let times = progress[&(M, M)].times[..len].to_vec();

    // Strictly increasing chain `seq[0] < seq[1] < ...` of rear progress.
    let chain = |name: &str, seq: &[Pairing], threshold: f64| -> InequalityCheck {
        let t_end = seq
            .iter()
            .map(|p| progress[p].overtake_time.unwrap())
            .fold(f64::INFINITY, f64::min);
        let mut margin = Vec::new();
        for (i, &t) in times.iter().enumerate() {
            if t < thresholds.window_start || t > t_end {
                continue;
            }
            let m = seq
                .windows(2)
                .map(|w| progress[&w[1]].rear_theta[i] - progress[&w[0]].rear_theta[i])
                .fold(f64::INFINITY, f64::min);
            margin.push((t, m));
        }
        let satisfied = margin.iter().filter(|(_, m)| *m > 0.0).count();
        let samples = margin.len();
        let fraction = if samples == 0 { 0.0 } else { satisfied as f64 / samples as f64 };
        InequalityCheck {
            name: name.to_string(),
            statement: seq.iter().map(|&p| prog_name(p)).collect::<Vec<_>>().join(" < "),
            window: (thresholds.window_start, t_end),
            samples,
            satisfied,
            fraction,
            threshold,
            pass: samples > 0 && fraction >= threshold,
            margin,
        }
    };

    let checks = vec![
        chain("overtaking(A=M)", &[(M, M), (M, D)], thresholds.overtaking),
        chain("overtaking(A=D)", &[(D, M), (D, D)], thresholds.overtaking),
        chain("obstructing(A=M)", &[(D, M), (M, M)], thresholds.obstructing),
        chain("obstructing(A=D)", &[(D, D), (M, D)], thresholds.obstructing),
        chain("chain(D,D)", &[(D, M), (D, D), (M, D)], thresholds.chains),
        chain("chain(M,M)", &[(D, M), (M, M), (M, D)], thresholds.chains),
    ];

    let t_end = progress[&(D, M)]
        .overtake_time
        .unwrap()
        .min(progress[&(M, D)].overtake_time.unwrap());
    let idx = times.iter().rposition(|&t| t <= t_end).unwrap_or(0);
    let lhs = progress[&(D, M)].rear_theta[idx];
    let rhs = progress[&(M, D)].rear_theta[idx];
    let endpoint = EndpointCheck {
        statement: format!("{} < {}", prog_name((D, M)), prog_name((M, D))),
        time: times[idx],
        lhs,
        rhs,
        pass: lhs < rhs,
    };
    let pass = checks.iter().take(4).all(|c| c.pass) && endpoint.pass;
    Ok(ComparisonReport {
        overtake_times: progress
            .iter()
            .map(|(&p, s)| (race_name(p), s.overtake_time.unwrap()))
            .collect(),
        checks,
        endpoint,
        pass,
    })
}

/// Distance between the two drones at a record.
pub fn separation(record: &RaceRecord) -> f64 {
    (record.rear.state.drone.position - record.front.state.drone.position).norm()
}

/// Deviation of a drone from its projection point.
pub fn lateral_deviation(state: &AugmentedState, path: &dyn ParametricPath) -> Vector3<f64> {
    state.deviation(path)
}
