//! Fixed-step closed-loop race simulation.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use mpcc_core::arc_path::ArcSpline;
use mpcc_core::dynamics::integrate_step;
use mpcc_core::minsnap::{self, MinSnapConfig};
use mpcc_core::mpc::{MpcConfig, MpcController, MpcProblem, TimedReference};
use mpcc_core::mpcc::{contour_lag_errors, MpccConfig, MpccController, MpccProblem, ThrustCommand};
use mpcc_core::pmm::{self, PlannerConfig};
use mpcc_core::track::TrackConfig;
use mpcc_core::trajectory::{Trajectory, TrajectorySample};
use mpcc_core::{QuadParams, QuadState, RotorThrusts};
use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::delay::DelayBuffer;
use crate::gates::{detect_crossing, lap_times, Event};
use crate::log::{LogRow, SimLog};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("reference: {0}")]
    Reference(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Mpcc,
    Mpc,
}

impl FromStr for ControllerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mpcc" => Ok(Self::Mpcc),
            "mpc" => Ok(Self::Mpc),
            _ => Err(format!("unknown controller '{s}', expected mpcc or mpc")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReferenceSource {
    Pmm,
    MinSnap,
    /// Either a trajectory CSV (`t,x,y,z[,vx,vy,vz,ax,ay,az]`) or a full-state
    /// CSV such as a race log.
    File(PathBuf),
}

impl FromStr for ReferenceSource {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pmm" => Ok(Self::Pmm),
            "minsnap" => Ok(Self::MinSnap),
            _ => match s.strip_prefix("file:") {
                Some(p) if !p.is_empty() => Ok(Self::File(PathBuf::from(p))),
                _ => Err(format!("unknown reference '{s}', expected pmm, minsnap or file:PATH")),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RaceConfig {
    pub sim_dt: f64,
    pub control_dt: f64,
    pub delay_ms: f64,
    /// Defaults to twice the reference duration plus 10 s.
    pub timeout: Option<f64>,
    /// Crash when farther than this from the reference (m).
    pub max_path_distance: f64,
    /// Plane crossings farther than this from a gate center are not counted
    /// as attempts at that gate (m).
    pub capture_radius: f64,
    /// Arc-length spacing of the contouring spline (m).
    pub segment_len: f64,
    /// Constant-velocity run-out appended to timed references (s).
    pub run_out: f64,
    pub seed: u64,
    pub params: QuadParams,
    pub mpcc: MpccConfig,
    pub mpc: MpcConfig,
    pub pmm: PlannerConfig,
    pub minsnap: MinSnapConfig,
}

impl Default for RaceConfig {
    fn default() -> Self {
        Self {
            sim_dt: 1e-3,
            control_dt: 0.01,
            delay_ms: 0.0,
            timeout: None,
            max_path_distance: 10.0,
            capture_radius: 2.0,
            segment_len: 0.25,
            run_out: 3.0,
            seed: 0,
            params: QuadParams::default(),
            mpcc: MpccConfig::default(),
            mpc: MpcConfig::default(),
            pmm: PlannerConfig::default(),
            minsnap: MinSnapConfig::default(),
        }
    }
}

impl RaceConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Config(m.to_string()));
        if !(self.sim_dt > 0.0) || !(self.control_dt >= self.sim_dt) {
            return bad("need 0 < sim_dt <= control_dt");
        }
        let ratio = self.control_dt / self.sim_dt;
        if (ratio - ratio.round()).abs() > 1e-6 {
            return bad("control_dt must be a multiple of sim_dt");
        }
        if !(self.delay_ms >= 0.0) || !(self.max_path_distance > 0.0) || !(self.segment_len > 0.0) {
            return bad("delay, path distance and segment length must be non-negative");
        }
        self.params.validate().map_err(|e| SimError::Config(e.to_string()))?;
        self.mpcc.validate().map_err(|e| SimError::Config(e.to_string()))?;
        self.mpc.validate().map_err(|e| SimError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self, SimError> {
        let c: Self = serde_json::from_str(s).map_err(|e| SimError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, SimError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}

/// Geometric reference plus, when available, the full timed state.
#[derive(Debug, Clone)]
pub struct Reference {
    pub trajectory: Trajectory,
    pub timed: Option<TimedReference>,
}

fn trajectory_from_timed(r: &TimedReference) -> Trajectory {
    let n = r.states.len();
    let samples = (0..n)
        .map(|i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            let acc = (r.states[b].velocity - r.states[a].velocity) / ((b - a).max(1) as f64 * r.dt);
            TrajectorySample { t: r.t0 + i as f64 * r.dt, position: r.states[i].position, velocity: r.states[i].velocity, acceleration: acc }
        })
        .collect();
    Trajectory { samples }
}

pub fn load_reference_file(path: &Path) -> Result<Reference, SimError> {
    let text = std::fs::read_to_string(path)?;
    let header = text.lines().next().unwrap_or_default();
    if header.split(',').any(|c| c.trim() == "qw") {
        let timed = TimedReference::read_csv(text.as_bytes()).map_err(|e| SimError::Reference(e.to_string()))?;
        Ok(Reference { trajectory: trajectory_from_timed(&timed), timed: Some(timed) })
    } else {
        let trajectory = Trajectory::read_csv(text.as_bytes()).map_err(|e| SimError::Reference(e.to_string()))?;
        Ok(Reference { trajectory, timed: None })
    }
}

pub fn build_reference(track: &TrackConfig, source: &ReferenceSource, cfg: &RaceConfig) -> Result<Reference, SimError> {
    let trajectory = match source {
        ReferenceSource::Pmm => pmm::plan(track, &cfg.pmm, cfg.seed).map_err(|e| SimError::Reference(e.to_string()))?.trajectory,
        ReferenceSource::MinSnap => minsnap::plan_track(track, &cfg.minsnap).map_err(|e| SimError::Reference(e.to_string()))?.1,
        ReferenceSource::File(p) => return load_reference_file(p),
    };
    Ok(Reference { trajectory, timed: None })
}

/// Appends `seconds` of level constant-velocity flight at hover thrust.
pub fn extend_reference(r: &TimedReference, seconds: f64, params: &QuadParams) -> TimedReference {
    let last = *r.states.last().expect("non-empty reference");
    let mut states = r.states.clone();
    let mut inputs = r.inputs.clone();
    let n = (seconds / r.dt).ceil() as usize;
    for k in 1..=n {
        states.push(QuadState {
            position: last.position + last.velocity * (k as f64 * r.dt),
            attitude: UnitQuaternion::identity(),
            velocity: last.velocity,
            body_rates: Vector3::zeros(),
        });
        inputs.push(RotorThrusts::uniform(params.hover_thrust()));
    }
    TimedReference { t0: r.t0, dt: r.dt, states, inputs }
}

struct Tick {
    command: ThrustCommand,
    solve_time: f64,
    theta: Option<f64>,
    v_theta: Option<f64>,
    track_error: f64,
}

enum Active {
    Mpcc(Box<MpccController>),
    Mpc(Box<MpcController>),
}

impl Active {
    fn build(kind: ControllerKind, track: &TrackConfig, reference: &Reference, cfg: &RaceConfig) -> Result<Self, SimError> {
        match kind {
            ControllerKind::Mpcc => {
                cfg.mpcc.check_sigma(track).map_err(|e| SimError::Config(e.to_string()))?;
                let spline = reference.trajectory.to_spline(cfg.segment_len).map_err(|e| SimError::Reference(e.to_string()))?;
                let gates = track.gates.iter().map(|g| g.position).collect();
                let problem = MpccProblem::new(spline, gates, cfg.mpcc.clone(), cfg.params.clone()).map_err(|e| SimError::Config(e.to_string()))?;
                Ok(Active::Mpcc(Box::new(MpccController::new(problem))))
            }
            ControllerKind::Mpc => {
                let timed = match &reference.timed {
                    Some(t) => t.clone(),
                    None => TimedReference::from_trajectory(&reference.trajectory, &cfg.params, cfg.control_dt)
                        .map_err(|e| SimError::Reference(e.to_string()))?,
                };
                let timed = extend_reference(&timed, cfg.run_out, &cfg.params);
                let problem = MpcProblem::new(cfg.mpc.clone(), cfg.params.clone()).map_err(|e| SimError::Config(e.to_string()))?;
                Ok(Active::Mpc(Box::new(MpcController::new(problem, timed))))
            }
        }
    }

    fn step(&mut self, t: f64, measured: &QuadState) -> Result<Tick, String> {
        match self {
            Active::Mpcc(c) => {
                let r = c.step(t, measured).map_err(|e| e.to_string())?;
                Ok(Tick { command: r.command, solve_time: r.stats.solve_time, theta: Some(r.theta), v_theta: Some(r.v_theta), track_error: r.contour_error })
            }
            Active::Mpc(c) => {
                let (command, stats) = c.step(t, measured).map_err(|e| e.to_string())?;
                let err = (measured.position - c.reference.at(t).0.position).norm();
                Ok(Tick { command, solve_time: stats.solve_time, theta: None, v_theta: None, track_error: err })
            }
        }
    }

    /// Distance of the true state from the reference.
    fn path_distance(&self, t: f64, x: &QuadState) -> f64 {
        match self {
            Active::Mpcc(c) => {
                let (e_c, e_l) = contour_lag_errors(&x.position, c.theta(), &c.problem.spline);
                (e_c + e_l).norm()
            }
            Active::Mpc(c) => (x.position - c.reference.at(t).0.position).norm(),
        }
    }
}

pub fn run_race(track: &TrackConfig, kind: ControllerKind, source: &ReferenceSource, cfg: &RaceConfig) -> Result<SimLog, SimError> {
    track.validate().map_err(|e| SimError::Config(e.to_string()))?;
    cfg.validate()?;
    let mut log = SimLog::default();
    let seq = track.gate_sequence();
    let mut next = 0;
    let mut x = QuadState { velocity: track.start_velocity, ..QuadState::at_rest(track.start_position) };

    // Gates whose plane already contains the start position count as passed.
    while next < seq.len() {
        let g = &track.gates[seq[next]];
        let on_plane = g.exit_direction.dot(&(x.position - g.position)).abs() < 1e-9;
        let distance = (x.position - g.position).norm();
        if !(on_plane && distance <= g.radius) || (next > 0 && seq[next] == seq[next - 1]) {
            break;
        }
        log.events.push(Event::GatePass { t: 0.0, gate: seq[next], index: Some(next), distance });
        next += 1;
    }
    if next == seq.len() {
        log.rows.push(LogRow {
            t: 0.0,
            state: x,
            thrust: RotorThrusts::uniform(cfg.params.hover_thrust()),
            theta: None,
            v_theta: None,
            track_error: 0.0,
            solve_time: None,
        });
        push_laps(&mut log, track);
        return Ok(log);
    }

    let reference = build_reference(track, source, cfg)?;
    let mut ctrl = Active::build(kind, track, &reference, cfg)?;
    let ticks_per_control = (cfg.control_dt / cfg.sim_dt).round() as usize;
    let timeout = cfg.timeout.unwrap_or(2.0 * reference.trajectory.duration() + 10.0);
    let max_steps = (timeout / cfg.sim_dt).ceil() as usize;
    let mut buffer = DelayBuffer::new(cfg.delay_ms * 1e-3);
    buffer.push(0.0, x);
    let (lo, hi) = (cfg.params.thrust_min, cfg.params.thrust_max);
    let mut tick: Option<(f64, Tick)> = None;
    let mut closest = f64::INFINITY;

    for step in 0..max_steps {
        let t = step as f64 * cfg.sim_dt;
        let mut solve_time = None;
        if step % ticks_per_control == 0 {
            let (_, observed) = buffer.observe(t).expect("buffer holds the initial state");
            match ctrl.step(t, &observed) {
                Ok(r) => {
                    solve_time = Some(r.solve_time);
                    tick = Some((t, r));
                }
                Err(e) => {
                    log.events.push(Event::Fault { t, reason: format!("controller: {e}") });
                    break;
                }
            }
            let d = ctrl.path_distance(t, &x);
            if d > cfg.max_path_distance {
                log.events.push(Event::Fault { t, reason: format!("left the track ({d:.2} m from the reference)") });
                break;
            }
        }
        let (t_cmd, r) = tick.as_ref().expect("controller ran at step 0");
        let f = r.command.at(t - t_cmd, lo, hi);
        log.rows.push(LogRow { t, state: x, thrust: f, theta: r.theta, v_theta: r.v_theta, track_error: r.track_error, solve_time });

        let t1 = (step + 1) as f64 * cfg.sim_dt;
        let x1 = match integrate_step(&x, &f, cfg.sim_dt, &cfg.params) {
            Ok(s) if s.is_finite() => s,
            _ => {
                log.events.push(Event::Fault { t: t1, reason: "non-finite state".into() });
                break;
            }
        };
        if let Some(fault) = check_gates(&mut log, track, &seq, &mut next, &mut closest, &x, &x1, t, t1, cfg.capture_radius) {
            log.events.push(Event::Fault { t: t1, reason: fault });
            break;
        }
        x = x1;
        buffer.push(t1, x);
        if next == seq.len() {
            break;
        }
        if x.position.z < 0.0 {
            log.events.push(Event::Fault { t: t1, reason: "ground contact".into() });
            break;
        }
        if step + 1 == max_steps {
            log.events.push(Event::Fault { t: t1, reason: "timeout".into() });
        }
    }
    push_laps(&mut log, track);
    Ok(log)
}

#[allow(clippy::too_many_arguments)]
fn check_gates(
    log: &mut SimLog,
    track: &TrackConfig,
    seq: &[usize],
    next: &mut usize,
    closest: &mut f64,
    x0: &QuadState,
    x1: &QuadState,
    t0: f64,
    t1: f64,
    capture: f64,
) -> Option<String> {
    if *next >= seq.len() {
        return None;
    }
    let expected = seq[*next];
    *closest = closest.min((x1.position - track.gates[expected].position).norm());
    for (i, g) in track.gates.iter().enumerate() {
        let Some(c) = detect_crossing(&x0.position, &x1.position, t0, t1, g) else { continue };
        if i == expected {
            if c.distance <= g.radius {
                log.events.push(Event::GatePass { t: c.t, gate: i, index: Some(*next), distance: c.distance });
                *next += 1;
                *closest = f64::INFINITY;
                return None;
            }
            if c.distance <= capture.max(g.radius) {
                log.events.push(Event::GateMiss { t: c.t, gate: i, index: *next, distance: c.distance });
                return Some(format!("missed gate {i} by {:.3} m", c.distance));
            }
        } else if c.distance <= g.radius {
            log.events.push(Event::GatePass { t: c.t, gate: i, index: None, distance: c.distance });
            if seq[*next..].contains(&i) {
                log.events.push(Event::GateMiss { t: c.t, gate: expected, index: *next, distance: *closest });
                return Some(format!("skipped gate {expected}"));
            }
        }
    }
    None
}

fn push_laps(log: &mut SimLog, track: &TrackConfig) {
    for (k, lap) in lap_times(&log.events, track).into_iter().enumerate() {
        log.events.push(Event::Lap { t: lap.end, lap: k, duration: lap.duration, valid: lap.valid });
    }
    log.events.sort_by(|a, b| a.time().total_cmp(&b.time()));
}

/// Timed reference recorded from a run: the logged states and thrusts
/// resampled at `dt`.
pub fn recorded_reference(log: &SimLog, dt: f64) -> Result<TimedReference, SimError> {
    let rows = &log.rows;
    if rows.len() < 2 {
        return Err(SimError::Reference("log too short".into()));
    }
    let step = rows[1].t - rows[0].t;
    let stride = ((dt / step).round() as usize).max(1);
    let picked: Vec<&LogRow> = rows.iter().step_by(stride).collect();
    TimedReference::new(
        picked[0].t,
        step * stride as f64,
        picked.iter().map(|r| r.state).collect(),
        picked.iter().map(|r| r.thrust).collect(),
    )
    .map_err(|e| SimError::Reference(e.to_string()))
}

/// Contouring spline of a reference, as the MPCC controller would use it.
pub fn reference_spline(reference: &Reference, cfg: &RaceConfig) -> Result<ArcSpline, SimError> {
    reference.trajectory.to_spline(cfg.segment_len).map_err(|e| SimError::Reference(e.to_string()))
}
