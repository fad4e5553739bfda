//! Receding-horizon minimum-snap polynomials through upcoming waypoints.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qp::{solve_equality_qp, QpError};
use crate::track::TrackConfig;
use crate::trajectory::{Trajectory, TrajectorySample};

pub const DEGREE: usize = 7;
const NC: usize = DEGREE + 1;

#[derive(Debug, Error)]
pub enum MinSnapError {
    #[error("need at least one waypoint")]
    NoWaypoints,
    #[error("segment {0} has non-positive duration")]
    Duration(usize),
    #[error("singular constraint system")]
    Singular,
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl From<QpError> for MinSnapError {
    fn from(_: QpError) -> Self {
        MinSnapError::Singular
    }
}

/// Degree-7 polynomial per axis in local time `τ ∈ [0, duration]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolySegment {
    pub coeffs: [[f64; NC]; 3],
    pub duration: f64,
}

fn falling(k: usize, d: usize) -> f64 {
    (0..d).map(|i| (k - i) as f64).product()
}

/// Row vector mapping coefficients to the `d`-th derivative at `tau`.
fn basis(tau: f64, d: usize) -> [f64; NC] {
    let mut row = [0.0; NC];
    for (k, r) in row.iter_mut().enumerate().skip(d) {
        *r = falling(k, d) * tau.powi((k - d) as i32);
    }
    row
}

/// Hessian of `∫₀ᵀ (p⁗)² dτ` in the coefficients.
fn snap_hessian(t: f64) -> [[f64; NC]; NC] {
    let mut q = [[0.0; NC]; NC];
    for j in 4..NC {
        for k in 4..NC {
            let pw = (j + k - 7) as i32;
            q[j][k] = falling(j, 4) * falling(k, 4) * t.powi(pw) / pw as f64;
        }
    }
    q
}

impl PolySegment {
    /// `d`-th time derivative at local time `tau`.
    pub fn derivative(&self, tau: f64, d: usize) -> Vector3<f64> {
        let b = basis(tau, d);
        let mut out = Vector3::zeros();
        for (axis, c) in self.coeffs.iter().enumerate() {
            out[axis] = b.iter().zip(c).map(|(x, y)| x * y).sum();
        }
        out
    }

    pub fn position(&self, tau: f64) -> Vector3<f64> {
        self.derivative(tau, 0)
    }

    pub fn snap_cost(&self) -> f64 {
        let q = snap_hessian(self.duration);
        self.coeffs
            .iter()
            .map(|c| (0..NC).map(|j| (0..NC).map(|k| c[j] * q[j][k] * c[k]).sum::<f64>()).sum::<f64>())
            .sum()
    }
}

/// Start state for a plan: position, velocity, acceleration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
}

impl MotionState {
    pub fn at_rest(position: Vector3<f64>) -> Self {
        Self { position, velocity: Vector3::zeros(), acceleration: Vector3::zeros() }
    }
}

/// Boundary condition at the last waypoint of a plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Terminal {
    /// Velocity, acceleration and jerk left free.
    Free,
    /// Velocity, acceleration and jerk fixed to zero.
    Rest,
}

/// Jointly optimal segments through `waypoints` from `start`: position
/// interpolation at every waypoint, C⁴ continuity at interior joints, full
/// start state, free end derivatives.
pub fn plan_minsnap(start: &MotionState, waypoints: &[Vector3<f64>], durations: &[f64]) -> Result<Vec<PolySegment>, MinSnapError> {
    plan_minsnap_with(start, waypoints, durations, Terminal::Free)
}

pub fn plan_minsnap_with(
    start: &MotionState,
    waypoints: &[Vector3<f64>],
    durations: &[f64],
    terminal: Terminal,
) -> Result<Vec<PolySegment>, MinSnapError> {
    let ns = waypoints.len();
    if ns == 0 {
        return Err(MinSnapError::NoWaypoints);
    }
    if durations.len() != ns {
        return Err(MinSnapError::Config(format!("{} durations for {} waypoints", durations.len(), ns)));
    }
    for (i, &t) in durations.iter().enumerate() {
        if !(t > 0.0 && t.is_finite()) {
            return Err(MinSnapError::Duration(i));
        }
    }
    let nv = NC * ns;
    let mut h = DMatrix::zeros(nv, nv);
    for (s, &t) in durations.iter().enumerate() {
        let q = snap_hessian(t);
        for j in 0..NC {
            for k in 0..NC {
                h[(s * NC + j, s * NC + k)] = q[j][k];
            }
        }
    }
    let rest_rows = if terminal == Terminal::Rest { 3 } else { 0 };
    let m = 3 + ns + 5 * (ns - 1) + rest_rows;
    let mut a = DMatrix::zeros(m, nv);
    let mut b = DMatrix::zeros(m, 3);
    let mut row = 0;
    let start_vals = [start.position, start.velocity, start.acceleration];
    for (d, val) in start_vals.iter().enumerate() {
        for (k, x) in basis(0.0, d).iter().enumerate() {
            a[(row, k)] = *x;
        }
        b.row_mut(row).copy_from(&val.transpose());
        row += 1;
    }
    for s in 0..ns {
        for (k, x) in basis(durations[s], 0).iter().enumerate() {
            a[(row, s * NC + k)] = *x;
        }
        b.row_mut(row).copy_from(&waypoints[s].transpose());
        row += 1;
        if s + 1 < ns {
            for (k, x) in basis(0.0, 0).iter().enumerate() {
                a[(row, (s + 1) * NC + k)] = *x;
            }
            b.row_mut(row).copy_from(&waypoints[s].transpose());
            row += 1;
            for d in 1..=4 {
                let end = basis(durations[s], d);
                let begin = basis(0.0, d);
                for k in 0..NC {
                    a[(row, s * NC + k)] = end[k];
                    a[(row, (s + 1) * NC + k)] = -begin[k];
                }
                row += 1;
            }
        }
    }
    if terminal == Terminal::Rest {
        let last = ns - 1;
        for d in 1..=3 {
            for (k, x) in basis(durations[last], d).iter().enumerate() {
                a[(row, last * NC + k)] = *x;
            }
            row += 1;
        }
    }
    debug_assert_eq!(row, m);
    let zero = DVector::zeros(nv);
    let mut segs = vec![PolySegment { coeffs: [[0.0; NC]; 3], duration: 0.0 }; ns];
    for axis in 0..3 {
        let c = solve_equality_qp(&h, &zero, &a, &b.column(axis).into_owned())?;
        for (s, seg) in segs.iter_mut().enumerate() {
            seg.duration = durations[s];
            for k in 0..NC {
                seg.coeffs[axis][k] = c[s * NC + k];
            }
        }
    }
    Ok(segs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MinSnapConfig {
    /// Waypoints optimized per replan.
    pub horizon: usize,
    /// Segment duration is distance / nominal_speed.
    pub nominal_speed: f64,
    pub sample_dt: f64,
    /// Condition at the end of each receding plan.
    pub terminal: Terminal,
}

impl Default for MinSnapConfig {
    fn default() -> Self {
        Self { horizon: 3, nominal_speed: 4.0, sample_dt: 0.01, terminal: Terminal::Rest }
    }
}

/// Segment durations at the nominal speed.
pub fn allocate_durations(from: &Vector3<f64>, waypoints: &[Vector3<f64>], speed: f64) -> Vec<f64> {
    let mut prev = *from;
    waypoints
        .iter()
        .map(|w| {
            let d = (w - prev).norm();
            prev = *w;
            d / speed
        })
        .collect()
}

/// Receding execution over the whole gate sequence: plan through the next
/// `horizon` gates, keep the first segment, continue from its end state.
pub fn plan_track(track: &TrackConfig, cfg: &MinSnapConfig) -> Result<(Vec<PolySegment>, Trajectory), MinSnapError> {
    if cfg.horizon == 0 || !(cfg.nominal_speed > 0.0) || !(cfg.sample_dt > 0.0) {
        return Err(MinSnapError::Config("horizon, nominal_speed and sample_dt must be positive".into()));
    }
    let seq = track.gate_sequence();
    let mut state = MotionState { position: track.start_position, velocity: track.start_velocity, acceleration: Vector3::zeros() };
    let mut kept = Vec::with_capacity(seq.len());
    for k in 0..seq.len() {
        let end = (k + cfg.horizon).min(seq.len());
        let wps: Vec<Vector3<f64>> = seq[k..end].iter().map(|&g| track.gates[g].position).collect();
        let durations = allocate_durations(&state.position, &wps, cfg.nominal_speed);
        let segs = plan_minsnap_with(&state, &wps, &durations, cfg.terminal)?;
        let first = segs[0];
        state = MotionState {
            position: first.position(first.duration),
            velocity: first.derivative(first.duration, 1),
            acceleration: first.derivative(first.duration, 2),
        };
        kept.push(first);
    }
    let traj = sample_polys(&kept, cfg.sample_dt);
    Ok((kept, traj))
}

pub fn sample_polys(segments: &[PolySegment], dt: f64) -> Trajectory {
    let total: f64 = segments.iter().map(|s| s.duration).sum();
    let n = (total / dt).floor() as usize;
    let mut times: Vec<f64> = (0..=n).map(|i| i as f64 * dt).collect();
    if total - n as f64 * dt > 1e-9 {
        times.push(total);
    }
    let mut samples = Vec::with_capacity(times.len());
    let mut seg = 0;
    let mut seg_start = 0.0;
    for t in times {
        while seg + 1 < segments.len() && t > seg_start + segments[seg].duration {
            seg_start += segments[seg].duration;
            seg += 1;
        }
        let s = &segments[seg];
        let tau = (t - seg_start).min(s.duration);
        samples.push(TrajectorySample {
            t,
            position: s.position(tau),
            velocity: s.derivative(tau, 1),
            acceleration: s.derivative(tau, 2),
        });
    }
    Trajectory { samples }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn collinear_waypoints_stay_on_line() {
        let start = MotionState::at_rest(Vector3::zeros());
        let dir = Vector3::new(1.0, 2.0, -0.5).normalize();
        let wps = [dir * 3.0, dir * 7.0];
        let segs = plan_minsnap(&start, &wps, &[1.0, 1.2]).unwrap();
        for s in &segs {
            for k in 0..=50 {
                let p = s.position(s.duration * k as f64 / 50.0);
                let lateral = p - dir * p.dot(&dir);
                assert!(lateral.norm() < 1e-8);
            }
        }
    }

    #[test]
    fn interpolates_waypoints_and_is_c4() {
        let start = MotionState {
            position: Vector3::new(0.0, 0.0, 1.0),
            velocity: Vector3::new(1.0, 0.0, 0.0),
            acceleration: Vector3::new(0.0, 0.5, 0.0),
        };
        let wps = [Vector3::new(3.0, 0.0, 1.0), Vector3::new(3.0, 4.0, 2.0), Vector3::new(0.0, 4.0, 1.0)];
        let segs = plan_minsnap(&start, &wps, &[1.0, 1.5, 1.0]).unwrap();
        assert_relative_eq!(segs[0].position(0.0), start.position, epsilon = 1e-8);
        assert_relative_eq!(segs[0].derivative(0.0, 1), start.velocity, epsilon = 1e-8);
        assert_relative_eq!(segs[0].derivative(0.0, 2), start.acceleration, epsilon = 1e-8);
        for (s, w) in segs.iter().zip(&wps) {
            assert_relative_eq!(s.position(s.duration), *w, epsilon = 1e-8);
        }
        for pair in segs.windows(2) {
            for d in 0..=4 {
                let diff = pair[0].derivative(pair[0].duration, d) - pair[1].derivative(0.0, d);
                assert!(diff.norm() < 1e-7, "derivative {d}: {diff}");
            }
        }
    }

    #[test]
    fn zero_duration_rejected() {
        let start = MotionState::at_rest(Vector3::zeros());
        let r = plan_minsnap(&start, &[Vector3::x(), Vector3::x()], &[1.0, 0.0]);
        assert!(matches!(r, Err(MinSnapError::Duration(1))));
    }
}
