//! Gate crossing detection and lap timing.

use mpcc_core::track::{Gate, TrackConfig};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

/// Crossing of a gate plane along the exit direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub t: f64,
    /// Distance from the gate center at the crossing point.
    pub distance: f64,
}

/// Crossing of the gate plane between two samples in the exit direction,
/// regardless of how far from the center.
pub fn detect_crossing(p0: &Vector3<f64>, p1: &Vector3<f64>, t0: f64, t1: f64, gate: &Gate) -> Option<Crossing> {
    let n = gate.exit_direction;
    let s0 = n.dot(&(p0 - gate.position));
    let s1 = n.dot(&(p1 - gate.position));
    if !(s0 < 0.0 && s1 >= 0.0) {
        return None;
    }
    let a = s0 / (s0 - s1);
    let p = p0 + (p1 - p0) * a;
    Some(Crossing { t: t0 + (t1 - t0) * a, distance: (p - gate.position).norm() })
}

/// Crossing within the pass radius.
pub fn detect_gate_pass(p0: &Vector3<f64>, p1: &Vector3<f64>, t0: f64, t1: f64, gate: &Gate) -> Option<Crossing> {
    detect_crossing(p0, p1, t0, t1, gate).filter(|c| c.distance <= gate.radius)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    /// `index` is the position in the track's gate sequence when the pass was
    /// the expected one.
    GatePass { t: f64, gate: usize, index: Option<usize>, distance: f64 },
    GateMiss { t: f64, gate: usize, index: usize, distance: f64 },
    Lap { t: f64, lap: usize, duration: f64, valid: bool },
    Fault { t: f64, reason: String },
}

impl Event {
    pub fn time(&self) -> f64 {
        match self {
            Event::GatePass { t, .. } | Event::GateMiss { t, .. } | Event::Lap { t, .. } | Event::Fault { t, .. } => *t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lap {
    pub start: f64,
    pub end: f64,
    pub duration: f64,
    pub valid: bool,
}

/// Laps from the gate events of a run.
///
/// Closed tracks: intervals between consecutive passes of gate 0, valid when
/// exactly gates `1..n` were passed in order in between with no miss. Open
/// tracks: intervals ending at each pass of the last gate, starting at
/// `t = 0` for the first lap.
pub fn lap_times(events: &[Event], track: &TrackConfig) -> Vec<Lap> {
    let n = track.gates.len();
    let mut laps = Vec::new();
    let closing_gate = if track.closed { 0 } else { n - 1 };
    let mut start: Option<f64> = if track.closed { None } else { Some(0.0) };
    let mut between: Vec<usize> = Vec::new();
    let mut missed = false;
    for e in events {
        match e {
            Event::GatePass { t, gate, .. } => {
                if *gate == closing_gate {
                    if !track.closed {
                        between.push(*gate);
                    }
                    if let Some(s) = start {
                        let expected: Vec<usize> = if track.closed { (1..n).collect() } else { (0..n).collect() };
                        laps.push(Lap { start: s, end: *t, duration: t - s, valid: !missed && between == expected });
                    }
                    start = Some(*t);
                    between.clear();
                    missed = false;
                } else {
                    between.push(*gate);
                }
            }
            Event::GateMiss { .. } => missed = true,
            _ => {}
        }
    }
    laps
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gate_at_origin() -> Gate {
        Gate { position: Vector3::new(0.0, 0.0, 1.0), exit_direction: Vector3::x(), radius: 0.5 }
    }

    #[test]
    fn straight_crossing_passes() {
        let g = gate_at_origin();
        let c = detect_gate_pass(&Vector3::new(-0.1, 0.0, 1.0), &Vector3::new(0.1, 0.0, 1.0), 0.0, 1.0, &g).unwrap();
        assert!(c.distance.abs() < 1e-12);
        assert!((c.t - 0.5).abs() < 1e-12);
    }

    #[test]
    fn lateral_offset_misses() {
        let g = gate_at_origin();
        let (a, b) = (Vector3::new(-0.1, 0.6, 1.0), Vector3::new(0.1, 0.6, 1.0));
        assert!(detect_gate_pass(&a, &b, 0.0, 1.0, &g).is_none());
        assert!((detect_crossing(&a, &b, 0.0, 1.0, &g).unwrap().distance - 0.6).abs() < 1e-12);
    }

    #[test]
    fn wrong_direction_ignored() {
        let g = gate_at_origin();
        assert!(detect_crossing(&Vector3::new(0.1, 0.0, 1.0), &Vector3::new(-0.1, 0.0, 1.0), 0.0, 1.0, &g).is_none());
    }

    fn closed_track(n: usize) -> TrackConfig {
        TrackConfig {
            name: "loop".into(),
            gates: (0..n).map(|i| Gate { position: Vector3::new(i as f64, 0.0, 1.0), exit_direction: Vector3::x(), radius: 0.5 }).collect(),
            laps: 2,
            closed: true,
            start_position: Vector3::new(-1.0, 0.0, 1.0),
            start_velocity: Vector3::zeros(),
        }
    }

    fn pass(t: f64, gate: usize) -> Event {
        Event::GatePass { t, gate, index: None, distance: 0.0 }
    }

    #[test]
    fn laps_between_start_crossings() {
        let track = closed_track(3);
        let ev = vec![pass(0.0, 0), pass(3.0, 1), pass(6.0, 2), pass(10.0, 0), pass(13.0, 1), pass(16.0, 2), pass(20.1, 0)];
        let laps = lap_times(&ev, &track);
        assert_eq!(laps.len(), 2);
        assert!((laps[0].duration - 10.0).abs() < 1e-12);
        assert!((laps[1].duration - 10.1).abs() < 1e-12);
        assert!(laps.iter().all(|l| l.valid));
    }

    #[test]
    fn missing_gate_invalidates_lap() {
        let track = closed_track(3);
        let ev = vec![pass(0.0, 0), pass(3.0, 1), pass(6.0, 2), pass(10.0, 0), pass(16.0, 2), pass(20.1, 0)];
        let laps = lap_times(&ev, &track);
        assert!(laps[0].valid);
        assert!(!laps[1].valid);
    }

    #[test]
    fn single_lap() {
        let track = closed_track(3);
        let laps = lap_times(&[pass(0.5, 0), pass(3.0, 1), pass(6.0, 2), pass(9.5, 0)], &track);
        assert_eq!(laps.len(), 1);
        assert!((laps[0].duration - 9.0).abs() < 1e-12);
    }

    #[test]
    fn open_track_lap_starts_at_zero() {
        let mut track = closed_track(3);
        track.closed = false;
        track.laps = 1;
        let laps = lap_times(&[pass(1.0, 0), pass(2.0, 1), pass(3.5, 2)], &track);
        assert_eq!(laps.len(), 1);
        assert!(laps[0].valid);
        assert!((laps[0].duration - 3.5).abs() < 1e-12);
    }
}
