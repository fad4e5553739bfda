//! Densely sampled time-stamped trajectories as produced by the planners.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

use crate::arc_path::{ArcSpline, PathError, PathInput};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
}

impl Trajectory {
    pub fn duration(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.samples.iter().map(|s| s.position).collect()
    }

    pub fn peak_speed(&self) -> f64 {
        self.samples.iter().map(|s| s.velocity.norm()).fold(0.0, f64::max)
    }

    /// Arc-length spline through the sampled positions, using the sampled
    /// velocities as tangents.
    pub fn to_spline(&self, segment_len: f64) -> Result<ArcSpline, PathError> {
        let points = self.positions();
        let velocities: Vec<_> = self.samples.iter().map(|s| s.velocity).collect();
        ArcSpline::from_input(PathInput::Points { points: &points, velocities: Some(&velocities) }, segment_len)
    }

    /// CSV with header `t,x,y,z,vx,vy,vz,ax,ay,az`. The first four columns are
    /// what the path importer consumes.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), PathError> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "x", "y", "z", "vx", "vy", "vz", "ax", "ay", "az"])?;
        for s in &self.samples {
            let row = [
                s.t,
                s.position.x,
                s.position.y,
                s.position.z,
                s.velocity.x,
                s.velocity.y,
                s.velocity.z,
                s.acceleration.x,
                s.acceleration.y,
                s.acceleration.z,
            ];
            wr.write_record(row.iter().map(|v| v.to_string()))?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, PathError> {
        let mut rd = csv::ReaderBuilder::new().flexible(true).from_reader(r);
        let mut samples = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let vals: Vec<f64> =
                rec.iter().map(|s| s.trim().parse::<f64>().map_err(|_| PathError::NonFinite)).collect::<Result<_, _>>()?;
            if vals.len() < 4 {
                return Err(PathError::NonFinite);
            }
            let get = |i: usize| vals.get(i).copied().unwrap_or(0.0);
            samples.push(TrajectorySample {
                t: vals[0],
                position: Vector3::new(vals[1], vals[2], vals[3]),
                velocity: Vector3::new(get(4), get(5), get(6)),
                acceleration: Vector3::new(get(7), get(8), get(9)),
            });
        }
        Ok(Self { samples })
    }
}
