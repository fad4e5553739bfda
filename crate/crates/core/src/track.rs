//! Gate sequences that define a race track.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrackError {
    #[error("track has no gates")]
    Empty,
    #[error("gate {0}: exit direction is not unit length")]
    ExitDirection(usize),
    #[error("gate {0}: pass radius must be positive")]
    Radius(usize),
    #[error("lap count must be at least 1")]
    Laps,
    #[error("track file: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub position: Vector3<f64>,
    /// Unit vector; the gate is passed when crossing its plane along this direction.
    pub exit_direction: Vector3<f64>,
    #[serde(default = "default_radius")]
    pub radius: f64,
}

fn default_radius() -> f64 {
    0.5
}

fn default_laps() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackConfig {
    #[serde(default)]
    pub name: String,
    pub gates: Vec<Gate>,
    #[serde(default = "default_laps")]
    pub laps: usize,
    /// Closed tracks return to gate 0, which doubles as the start/finish line.
    #[serde(default)]
    pub closed: bool,
    pub start_position: Vector3<f64>,
    #[serde(default)]
    pub start_velocity: Vector3<f64>,
}

impl TrackConfig {
    pub fn validate(&self) -> Result<(), TrackError> {
        if self.gates.is_empty() {
            return Err(TrackError::Empty);
        }
        if self.laps == 0 {
            return Err(TrackError::Laps);
        }
        for (i, g) in self.gates.iter().enumerate() {
            if (g.exit_direction.norm() - 1.0).abs() > 1e-6 {
                return Err(TrackError::ExitDirection(i));
            }
            if !(g.radius > 0.0) {
                return Err(TrackError::Radius(i));
            }
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self, TrackError> {
        let t: Self = serde_json::from_str(s).map_err(|e| TrackError::Io(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, TrackError> {
        let s = std::fs::read_to_string(path).map_err(|e| TrackError::Io(e.to_string()))?;
        Self::from_json_str(&s)
    }

    /// Gate indices in the order they must be passed over all laps. Closed
    /// tracks end with a final pass through gate 0.
    pub fn gate_sequence(&self) -> Vec<usize> {
        let n = self.gates.len();
        let mut seq: Vec<usize> = (0..self.laps).flat_map(|_| 0..n).collect();
        if self.closed {
            seq.push(0);
        }
        seq
    }

    /// Minimum pairwise distance between gate centers.
    pub fn min_gate_spacing(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, a) in self.gates.iter().enumerate() {
            for b in &self.gates[i + 1..] {
                best = best.min((a.position - b.position).norm());
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gate(x: f64) -> Gate {
        Gate { position: Vector3::new(x, 0.0, 1.0), exit_direction: Vector3::x(), radius: 0.5 }
    }

    #[test]
    fn sequence_open_and_closed() {
        let mut t = TrackConfig {
            name: "t".into(),
            gates: vec![gate(1.0), gate(2.0), gate(3.0)],
            laps: 2,
            closed: false,
            start_position: Vector3::zeros(),
            start_velocity: Vector3::zeros(),
        };
        assert_eq!(t.gate_sequence(), vec![0, 1, 2, 0, 1, 2]);
        t.closed = true;
        assert_eq!(t.gate_sequence(), vec![0, 1, 2, 0, 1, 2, 0]);
        assert!((t.min_gate_spacing() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        let json = r#"{"gates": [{"position": [1,0,1], "exit_direction": [1,0,0]}], "start_position": [0,0,1]}"#;
        let t = TrackConfig::from_json_str(json).unwrap();
        assert_eq!(t.laps, 1);
        assert_eq!(t.gates[0].radius, 0.5);
        let bad = r#"{"gates": [{"position": [1,0,1], "exit_direction": [2,0,0]}], "start_position": [0,0,1]}"#;
        assert!(matches!(TrackConfig::from_json_str(bad), Err(TrackError::ExitDirection(0))));
        let empty = r#"{"gates": [], "start_position": [0,0,1]}"#;
        assert!(matches!(TrackConfig::from_json_str(empty), Err(TrackError::Empty)));
    }
}
