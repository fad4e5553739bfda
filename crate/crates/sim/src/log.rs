//! Per-step simulation log, events and run summary.

use std::io::Write;

use mpcc_core::track::TrackConfig;
use mpcc_core::{QuadState, RotorThrusts};
use serde::{Deserialize, Serialize};

use crate::gates::{lap_times, Event, Lap};

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub state: QuadState,
    /// Thrusts applied over `[t, t + sim_dt)`.
    pub thrust: RotorThrusts,
    pub theta: Option<f64>,
    pub v_theta: Option<f64>,
    /// Contour error (MPCC) or distance to the timed reference (MPC).
    pub track_error: f64,
    /// Wall-clock controller time, only on rows where the controller ran.
    pub solve_time: Option<f64>,
}

pub const CSV_HEADER: [&str; 23] = [
    "t", "x", "y", "z", "qw", "qx", "qy", "qz", "vx", "vy", "vz", "wx", "wy", "wz", "f1", "f2", "f3", "f4", "theta",
    "v_theta", "track_error", "solve_ms", "speed",
];

/// Index of the wall-clock column in the CSV.
pub const TIMING_COLUMN: usize = 21;

#[derive(Debug, Clone, Default)]
pub struct SimLog {
    pub rows: Vec<LogRow>,
    pub events: Vec<Event>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl SimLog {
    /// The first 18 columns match the timed-reference CSV layout, so a log can
    /// be replayed as a reference.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(CSV_HEADER)?;
        for r in &self.rows {
            let mut rec: Vec<String> = Vec::with_capacity(CSV_HEADER.len());
            rec.push(r.t.to_string());
            rec.extend(r.state.to_vector().iter().map(|v| v.to_string()));
            rec.extend(r.thrust.0.iter().map(|v| v.to_string()));
            rec.push(opt(r.theta));
            rec.push(opt(r.v_theta));
            rec.push(r.track_error.to_string());
            rec.push(opt(r.solve_time.map(|s| s * 1e3)));
            rec.push(r.state.velocity.norm().to_string());
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn gate_passes(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.events.iter().filter_map(|e| match e {
            Event::GatePass { gate, index: Some(_), distance, .. } => Some((*gate, *distance)),
            _ => None,
        })
    }

    pub fn fault(&self) -> Option<&str> {
        self.events.iter().find_map(|e| match e {
            Event::Fault { reason, .. } => Some(reason.as_str()),
            _ => None,
        })
    }

    pub fn solve_times(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.solve_time).collect()
    }

    pub fn summary(&self, track: &TrackConfig) -> Summary {
        let laps = lap_times(&self.events, track);
        let speeds: Vec<f64> = self.rows.iter().map(|r| r.state.velocity.norm()).collect();
        let peak_speed = speeds.iter().copied().fold(0.0, f64::max);
        let mean_speed = if speeds.is_empty() { 0.0 } else { speeds.iter().sum::<f64>() / speeds.len() as f64 };
        let gate_misses = self.events.iter().filter(|e| matches!(e, Event::GateMiss { .. })).count();
        let expected = track.gate_sequence().len();
        let gates_passed = self.gate_passes().count();
        let max_gate_distance = self
            .events
            .iter()
            .filter_map(|e| match e {
                Event::GatePass { index: Some(_), distance, .. } | Event::GateMiss { distance, .. } => Some(*distance),
                _ => None,
            })
            .fold(0.0, f64::max);
        let mut times = self.solve_times();
        times.sort_by(f64::total_cmp);
        let median = times.get(times.len() / 2).map(|s| s * 1e3);
        let fault = self.fault().map(str::to_string);
        let completed = fault.is_none() && gates_passed == expected;
        let all_laps_valid = completed && laps.len() == track.laps && laps.iter().all(|l| l.valid);
        Summary {
            completed,
            all_laps_valid,
            fault,
            lap_times: laps.iter().map(|l| l.duration).collect(),
            laps,
            gates_passed,
            gates_expected: expected,
            gate_misses,
            max_gate_distance,
            peak_speed,
            mean_speed,
            final_time: self.rows.last().map(|r| r.t).unwrap_or(0.0),
            solve_time_median_ms: median,
            solve_time_max_ms: times.last().map(|s| s * 1e3),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub completed: bool,
    pub all_laps_valid: bool,
    pub fault: Option<String>,
    pub lap_times: Vec<f64>,
    pub laps: Vec<Lap>,
    pub gates_passed: usize,
    pub gates_expected: usize,
    pub gate_misses: usize,
    /// Largest center distance over the expected gate crossings.
    pub max_gate_distance: f64,
    pub peak_speed: f64,
    pub mean_speed: f64,
    pub final_time: f64,
    pub solve_time_median_ms: Option<f64>,
    pub solve_time_max_ms: Option<f64>,
}
