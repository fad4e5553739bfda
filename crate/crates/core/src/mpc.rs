//! Trajectory-tracking MPC baseline on the same dynamics, linearization and
//! QP machinery as the contouring controller.

use std::io::{Read, Write};
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, SVector, UnitQuaternion, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{self, QuadParams, QuadState, RotorThrusts};
use crate::mpcc::{SolveStats, ThrustCommand};
use crate::ocp::{self, InputCost, LinearStage, Model, StageCost};
use crate::qp::{QpProblem, QpSettings, QpSolver, QpStatus};
use crate::trajectory::Trajectory;

const NR: usize = 13;
const NX: usize = 12;
const NU: usize = 4;

pub type RawState = SVector<f64, NR>;

#[derive(Debug, Error)]
pub enum MpcError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("reference: {0}")]
    Reference(String),
    #[error("non-finite linearization at stage {stage}")]
    NonFinite { stage: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// State and input reference on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedReference {
    pub t0: f64,
    pub dt: f64,
    pub states: Vec<QuadState>,
    pub inputs: Vec<RotorThrusts>,
}

fn slerp(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>, s: f64) -> UnitQuaternion<f64> {
    a.try_slerp(b, s, 1e-12).unwrap_or(if s < 0.5 { *a } else { *b })
}

fn quat_vec(q: &UnitQuaternion<f64>) -> Vector4<f64> {
    Vector4::new(q.w, q.i, q.j, q.k)
}

impl TimedReference {
    pub fn new(t0: f64, dt: f64, states: Vec<QuadState>, inputs: Vec<RotorThrusts>) -> Result<Self, MpcError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(MpcError::Reference("time step must be positive".into()));
        }
        if states.is_empty() || states.len() != inputs.len() {
            return Err(MpcError::Reference("need matching, non-empty state and input sequences".into()));
        }
        if states.iter().any(|s| !s.is_finite()) {
            return Err(MpcError::Reference("non-finite state".into()));
        }
        Ok(Self { t0, dt, states, inputs })
    }

    pub fn duration(&self) -> f64 {
        (self.states.len() - 1) as f64 * self.dt
    }

    /// Interpolated reference at `t`, clamped to the ends.
    pub fn at(&self, t: f64) -> (QuadState, RotorThrusts) {
        let n = self.states.len() - 1;
        let s = ((t - self.t0) / self.dt).clamp(0.0, n as f64);
        let i = (s.floor() as usize).min(n);
        if i == n {
            return (self.states[n], self.inputs[n]);
        }
        let a = s - i as f64;
        let (x0, x1) = (&self.states[i], &self.states[i + 1]);
        let lerp = |p: &Vector3<f64>, q: &Vector3<f64>| p * (1.0 - a) + q * a;
        let state = QuadState {
            position: lerp(&x0.position, &x1.position),
            attitude: slerp(&x0.attitude, &x1.attitude, a),
            velocity: lerp(&x0.velocity, &x1.velocity),
            body_rates: lerp(&x0.body_rates, &x1.body_rates),
        };
        let f = self.inputs[i].as_vector() * (1.0 - a) + self.inputs[i + 1].as_vector() * a;
        (state, RotorThrusts::from_vector(&f))
    }

    /// Full-state reference from a position/velocity/acceleration trajectory
    /// by differential flatness at zero yaw. Thrusts are clamped to the
    /// vehicle limits, so aggressive trajectories stay dynamically infeasible.
    pub fn from_trajectory(traj: &Trajectory, params: &QuadParams, dt: f64) -> Result<Self, MpcError> {
        if traj.samples.len() < 2 {
            return Err(MpcError::Reference("trajectory needs at least two samples".into()));
        }
        let t0 = traj.samples[0].t;
        let n = (traj.duration() / dt).round().max(1.0) as usize;
        let g = params.gravity_vector();
        let mut pva = Vec::with_capacity(n + 1);
        let mut j = 0;
        for k in 0..=n {
            let t = t0 + k as f64 * dt;
            while j + 2 < traj.samples.len() && traj.samples[j + 1].t < t {
                j += 1;
            }
            let (a, b) = (&traj.samples[j], &traj.samples[j + 1]);
            let s = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
            pva.push((
                a.position * (1.0 - s) + b.position * s,
                a.velocity * (1.0 - s) + b.velocity * s,
                a.acceleration * (1.0 - s) + b.acceleration * s,
            ));
        }
        let mut states = Vec::with_capacity(n + 1);
        let mut inputs = Vec::with_capacity(n + 1);
        for (p, v, acc) in &pva {
            let thrust = (acc - g) * params.mass;
            let zb = if thrust.norm() > 1e-9 { thrust.normalize() } else { Vector3::z() };
            let yb = zb.cross(&Vector3::x());
            let yb = if yb.norm() > 1e-9 { yb.normalize() } else { Vector3::y() };
            let xb = yb.cross(&zb);
            let r = Matrix3::from_columns(&[xb, yb, zb]);
            let mut q = UnitQuaternion::from_matrix(&r);
            if let Some(prev) = states.last().map(|s: &QuadState| s.attitude) {
                if q.coords.dot(&prev.coords) < 0.0 {
                    q = UnitQuaternion::new_unchecked(-q.into_inner());
                }
            }
            states.push(QuadState { position: *p, attitude: q, velocity: *v, body_rates: Vector3::zeros() });
            let f = (thrust.norm() / 4.0).clamp(params.thrust_min, params.thrust_max);
            inputs.push(RotorThrusts::uniform(f));
        }
        for k in 0..n {
            let w = ocp::quat_boxminus(&quat_vec(&states[k + 1].attitude), &quat_vec(&states[k].attitude)) / dt;
            states[k].body_rates = w;
        }
        states[n].body_rates = states[n.saturating_sub(1)].body_rates;
        Self::new(t0, dt, states, inputs)
    }

    /// Columns: t, position (3), quaternion w x y z, velocity (3), body
    /// rates (3), rotor thrusts (4).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), MpcError> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "x", "y", "z", "qw", "qx", "qy", "qz", "vx", "vy", "vz", "wx", "wy", "wz", "f1", "f2", "f3", "f4"])?;
        for (k, (s, f)) in self.states.iter().zip(&self.inputs).enumerate() {
            let mut row = vec![self.t0 + k as f64 * self.dt];
            row.extend(s.to_vector().iter());
            row.extend(f.0.iter());
            wr.write_record(row.iter().map(|v| format!("{v:.12e}")))?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, MpcError> {
        let mut rd = csv::Reader::from_reader(r);
        let mut times = Vec::new();
        let mut states = Vec::new();
        let mut inputs = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            if rec.len() < 18 {
                return Err(MpcError::Reference(format!("expected 18 columns, found {}", rec.len())));
            }
            let v: Vec<f64> = rec
                .iter()
                .take(18)
                .map(|s| s.trim().parse::<f64>().map_err(|_| MpcError::Reference(format!("bad number '{s}'"))))
                .collect::<Result<_, _>>()?;
            times.push(v[0]);
            states.push(QuadState::from_vector(&RawState::from_column_slice(&v[1..14])));
            inputs.push(RotorThrusts([v[14], v[15], v[16], v[17]]));
        }
        if times.len() < 2 {
            return Err(MpcError::Reference("need at least two rows".into()));
        }
        let dt = times[1] - times[0];
        for w in times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(MpcError::Reference("timestamps must increase".into()));
            }
            if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt.max(1.0) {
                return Err(MpcError::Reference("timestamps must be uniformly spaced".into()));
            }
        }
        Self::new(times[0], dt, states, inputs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcConfig {
    pub horizon: usize,
    pub dt: f64,
    pub q_position: [f64; 3],
    pub q_attitude: [f64; 3],
    pub q_velocity: [f64; 3],
    pub q_omega: [f64; 3],
    pub r_thrust: [f64; 4],
    /// Terminal weight `P = terminal_scale · Q`.
    pub terminal_scale: f64,
    pub omega_max: f64,
    pub thrust_min: f64,
    pub thrust_max: f64,
    pub max_qp_iter: usize,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 20,
            dt: 0.05,
            q_position: [200.0; 3],
            q_attitude: [5.0; 3],
            q_velocity: [10.0; 3],
            q_omega: [1.0; 3],
            r_thrust: [1.0; 4],
            terminal_scale: 1.0,
            omega_max: 10.0,
            thrust_min: 0.0,
            thrust_max: 7.0,
            max_qp_iter: 1000,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<(), MpcError> {
        let bad = |m: &str| Err(MpcError::Config(m.to_string()));
        if self.horizon < 1 || !(self.dt > 0.0) {
            return bad("horizon and dt must be positive");
        }
        let q = self.q_position.iter().chain(&self.q_attitude).chain(&self.q_velocity).chain(&self.q_omega);
        if q.into_iter().any(|w| !(*w >= 0.0)) || !(self.terminal_scale >= 0.0) {
            return bad("state weights must be non-negative");
        }
        if self.r_thrust.iter().any(|w| !(*w > 0.0)) {
            return bad("input weights must be positive");
        }
        if !(self.thrust_min < self.thrust_max) || !(self.omega_max > 0.0) {
            return bad("bounds must be ordered");
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self, MpcError> {
        let c: Self = serde_json::from_str(s).map_err(|e| MpcError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    fn state_weights(&self) -> SVector<f64, NX> {
        let mut w = SVector::<f64, NX>::zeros();
        for i in 0..3 {
            w[i] = self.q_position[i];
            w[3 + i] = self.q_attitude[i];
            w[6 + i] = self.q_velocity[i];
            w[9 + i] = self.q_omega[i];
        }
        w
    }
}

#[derive(Debug, Clone)]
pub struct QuadModel {
    pub params: QuadParams,
}

impl Model<NR, NU> for QuadModel {
    fn rhs(&self, x: &RawState, u: &Vector4<f64>) -> RawState {
        dynamics::rhs(x, u, &self.params)
    }

    fn jacobians(&self, x: &RawState, u: &Vector4<f64>) -> (SMatrix<f64, NR, NR>, SMatrix<f64, NR, NU>) {
        dynamics::rhs_jacobians(x, u, &self.params)
    }
}

/// Weighted tracking residual `W^{1/2} (x ⊟ x_ref)` and its Jacobian in the
/// error state about `x`.
pub fn tracking_residual(x: &RawState, xref: &RawState, weights: &SVector<f64, NX>) -> (SVector<f64, NX>, SMatrix<f64, NX, NX>) {
    let e = ocp::boxminus::<NR, NX>(x, xref);
    let j = ocp::contract_jacobian::<NR, NX>(x, xref) * ocp::expand_jacobian::<NR, NX>(x);
    let s = weights.map(f64::sqrt);
    let mut r = e;
    let mut jw = j;
    for i in 0..NX {
        r[i] *= s[i];
        for c in 0..NX {
            jw[(i, c)] *= s[i];
        }
    }
    (r, jw)
}

#[derive(Debug, Clone)]
pub struct MpcPrediction {
    pub t0: f64,
    pub dt: f64,
    pub states: Vec<RawState>,
    pub inputs: Vec<Vector4<f64>>,
}

impl MpcPrediction {
    fn state_at(&self, t: f64) -> RawState {
        let n = self.states.len() - 1;
        let s = ((t - self.t0) / self.dt).clamp(0.0, n as f64);
        let i = (s.floor() as usize).min(n);
        if i == n {
            return self.states[n];
        }
        let a = s - i as f64;
        let mut x = self.states[i] * (1.0 - a) + self.states[i + 1] * a;
        let q = x.fixed_rows::<4>(3).normalize();
        x.fixed_rows_mut::<4>(3).copy_from(&q);
        x
    }

    fn input_at(&self, t: f64) -> Vector4<f64> {
        let s = ((t - self.t0) / self.dt).max(0.0);
        self.inputs[(s.floor() as usize).min(self.inputs.len() - 1)]
    }

    pub fn shifted(&self, t: f64) -> Self {
        let n = self.inputs.len();
        Self {
            t0: t,
            dt: self.dt,
            states: (0..=n).map(|k| self.state_at(t + k as f64 * self.dt)).collect(),
            inputs: (0..n).map(|k| self.input_at(t + k as f64 * self.dt)).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MpcResult {
    pub input: RotorThrusts,
    pub prediction: MpcPrediction,
    pub stats: SolveStats,
}

#[derive(Debug, Clone)]
pub struct MpcProblem {
    pub cfg: MpcConfig,
    pub model: QuadModel,
    pub solver: QpSolver,
}

impl MpcProblem {
    pub fn new(cfg: MpcConfig, params: QuadParams) -> Result<Self, MpcError> {
        cfg.validate()?;
        params.validate().map_err(|e| MpcError::Config(e.to_string()))?;
        let solver = QpSolver::new(QpSettings { max_iter: cfg.max_qp_iter, ..Default::default() });
        Ok(Self { cfg, model: QuadModel { params }, solver })
    }

    /// Linearization guess from the reference itself.
    pub fn reference_guess(&self, x0: &RawState, reference: &TimedReference, t: f64) -> MpcPrediction {
        let n = self.cfg.horizon;
        let mut states: Vec<RawState> = (0..=n).map(|k| reference.at(t + k as f64 * self.cfg.dt).0.to_vector()).collect();
        states[0] = *x0;
        let inputs = (0..n).map(|k| reference.at(t + k as f64 * self.cfg.dt).1.as_vector()).collect();
        MpcPrediction { t0: t, dt: self.cfg.dt, states, inputs }
    }

    /// One real-time iteration of the tracking problem from `x0` at `t`.
    pub fn mpc_step(&self, x0: &RawState, reference: &TimedReference, t: f64, guess: &MpcPrediction) -> Result<MpcResult, MpcError> {
        let start = Instant::now();
        let cfg = &self.cfg;
        let n = cfg.horizon;
        let h = cfg.dt;
        let mut guess = guess.clone();
        guess.states[0] = *x0;
        for u in guess.inputs.iter_mut() {
            for i in 0..4 {
                u[i] = u[i].clamp(cfg.thrust_min, cfg.thrust_max);
            }
        }

        let mut stages: Vec<LinearStage<NX, NU>> = Vec::with_capacity(n);
        for k in 0..n {
            let st = ocp::linearize_stage::<_, NR, NX, NU>(&self.model, &guess.states[k], &guess.inputs[k], &guess.states[k + 1], h);
            if !(st.a.iter().chain(st.b.iter()).chain(st.d.iter()).all(|v| v.is_finite())) {
                return Err(MpcError::NonFinite { stage: k });
            }
            stages.push(st);
        }
        let w = cfg.state_weights();
        let mut costs = Vec::with_capacity(n);
        for k in 1..=n {
            let xref = reference.at(t + k as f64 * h).0.to_vector();
            let wk = if k == n { w * cfg.terminal_scale } else { w };
            let (r, j) = tracking_residual(&guess.states[k], &xref, &wk);
            costs.push(StageCost {
                residual: DVector::from_column_slice(r.as_slice()),
                jacobian: DMatrix::from_column_slice(NX, NX, j.as_slice()),
                linear: SVector::zeros(),
            });
        }
        let r = SMatrix::<f64, NU, NU>::from_diagonal(&Vector4::from(cfg.r_thrust)) * 2.0;
        let inputs: Vec<InputCost<NU>> = (0..n)
            .map(|k| {
                let uref = reference.at(t + k as f64 * h).1.as_vector();
                InputCost { r, q: -(r * uref) }
            })
            .collect();
        let cond = ocp::condense(&stages, &SVector::zeros(), &costs, &inputs, &guess.inputs);

        let nz = n * NU;
        let mut lb = DVector::zeros(nz);
        let mut ub = DVector::zeros(nz);
        for k in 0..n {
            for i in 0..NU {
                lb[k * NU + i] = cfg.thrust_min - guess.inputs[k][i];
                ub[k * NU + i] = cfg.thrust_max - guess.inputs[k][i];
            }
        }
        let mut a = DMatrix::zeros(3 * n, nz);
        let mut lba = DVector::zeros(3 * n);
        let mut uba = DVector::zeros(3 * n);
        for k in 1..=n {
            for i in 0..3 {
                let r = (k - 1) * 3 + i;
                a.set_row(r, &cond.state_row(k, 9 + i).transpose());
                let off = guess.states[k][10 + i] + cond.offsets[k][9 + i];
                lba[r] = -cfg.omega_max - off;
                uba[r] = cfg.omega_max - off;
            }
        }
        let qp_start = Instant::now();
        let box_only = QpProblem::new(cond.h.clone(), cond.g.clone(), lb.clone(), ub.clone());
        let full = box_only.clone().with_rows(a, lba, uba);
        let warm = DVector::zeros(nz);
        let mut sol = self.solver.solve(&full, Some(&warm));
        let mut iterations = sol.iterations;
        let mut relaxed = false;
        if sol.status == QpStatus::Infeasible {
            relaxed = true;
            sol = self.solver.solve(&box_only, Some(&warm));
            iterations += sol.iterations;
        }
        let qp_time = qp_start.elapsed().as_secs_f64();
        let degraded = sol.status != QpStatus::Optimal;
        let du = if sol.status == QpStatus::Infeasible { DVector::zeros(nz) } else { sol.z.clone() };
        let dxs = cond.states(&du);
        let mut states: Vec<RawState> = guess.states.iter().zip(&dxs).map(|(xb, dx)| ocp::boxplus::<NR, NX>(xb, dx)).collect();
        states[0] = *x0;
        let inputs: Vec<Vector4<f64>> = (0..n).map(|k| guess.inputs[k] + du.fixed_rows::<NU>(k * NU)).collect();
        let input = if degraded { guess.inputs[0] } else { inputs[0] };
        Ok(MpcResult {
            input: RotorThrusts::from_vector(&input).clamped(cfg.thrust_min, cfg.thrust_max),
            prediction: MpcPrediction { t0: t, dt: h, states, inputs },
            stats: SolveStats { solve_time: start.elapsed().as_secs_f64(), qp_time, qp_iterations: iterations, objective: sol.objective, degraded, relaxed },
        })
    }
}

#[derive(Debug, Clone)]
pub struct MpcController {
    pub problem: MpcProblem,
    pub reference: TimedReference,
    last: Option<MpcPrediction>,
}

impl MpcController {
    pub fn new(problem: MpcProblem, reference: TimedReference) -> Self {
        Self { problem, reference, last: None }
    }

    pub fn step(&mut self, t: f64, measured: &QuadState) -> Result<(ThrustCommand, SolveStats), MpcError> {
        let x0 = measured.to_vector();
        let guess = match &self.last {
            Some(p) => p.shifted(t),
            None => self.problem.reference_guess(&x0, &self.reference, t),
        };
        let res = self.problem.mpc_step(&x0, &self.reference, t, &guess)?;
        self.last = Some(res.prediction);
        Ok((ThrustCommand::constant(res.input), res.stats))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn hover_reference(p: Vector3<f64>, params: &QuadParams) -> TimedReference {
        let n = 200;
        TimedReference::new(
            0.0,
            0.01,
            vec![QuadState::at_rest(p); n],
            vec![RotorThrusts::uniform(params.hover_thrust()); n],
        )
        .unwrap()
    }

    #[test]
    fn on_reference_gives_hover_thrust() {
        let params = QuadParams::default();
        let pb = MpcProblem::new(MpcConfig::default(), params.clone()).unwrap();
        let r = hover_reference(Vector3::new(0.0, 0.0, 1.0), &params);
        let x0 = QuadState::at_rest(Vector3::new(0.0, 0.0, 1.0)).to_vector();
        let res = pb.mpc_step(&x0, &r, 0.0, &pb.reference_guess(&x0, &r, 0.0)).unwrap();
        for f in res.input.0 {
            assert_relative_eq!(f, params.hover_thrust(), epsilon = 1e-6);
        }
        assert!(res.stats.objective.abs() < 1e-9);
    }

    #[test]
    fn displaced_above_descends() {
        let params = QuadParams::default();
        let pb = MpcProblem::new(MpcConfig::default(), params.clone()).unwrap();
        let r = hover_reference(Vector3::new(0.0, 0.0, 1.0), &params);
        let x0 = QuadState::at_rest(Vector3::new(0.0, 0.0, 1.5)).to_vector();
        let res = pb.mpc_step(&x0, &r, 0.0, &pb.reference_guess(&x0, &r, 0.0)).unwrap();
        assert!(res.input.collective() < 4.0 * params.hover_thrust());
    }

    #[test]
    fn residual_jacobian_matches_differences() {
        let mut x = QuadState::at_rest(Vector3::new(0.3, -0.2, 1.1));
        x.attitude = UnitQuaternion::from_euler_angles(0.3, -0.5, 0.2);
        x.velocity = Vector3::new(1.0, 2.0, -0.5);
        x.body_rates = Vector3::new(0.4, -1.0, 0.2);
        let mut xr = QuadState::at_rest(Vector3::new(0.0, 0.1, 1.0));
        xr.attitude = UnitQuaternion::from_euler_angles(-0.1, 0.2, 0.4);
        let (x, xr) = (x.to_vector(), xr.to_vector());
        let w = SVector::<f64, NX>::from_fn(|i, _| 1.0 + i as f64);
        let (_, j) = tracking_residual(&x, &xr, &w);
        let h = 1e-6;
        for c in 0..NX {
            let mut d = SVector::<f64, NX>::zeros();
            d[c] = h;
            let rp = tracking_residual(&ocp::boxplus::<NR, NX>(&x, &d), &xr, &w).0;
            let rm = tracking_residual(&ocp::boxplus::<NR, NX>(&x, &(-d)), &xr, &w).0;
            let fd = (rp - rm) / (2.0 * h);
            for r in 0..NX {
                assert!((fd[r] - j[(r, c)]).abs() < 1e-6 * (1.0 + fd[r].abs()));
            }
        }
    }

    #[test]
    fn interpolation_is_slerp_and_lerp() {
        let a = QuadState::at_rest(Vector3::zeros());
        let mut b = QuadState::at_rest(Vector3::new(2.0, 0.0, 0.0));
        let half = std::f64::consts::FRAC_PI_4;
        b.attitude = UnitQuaternion::from_euler_angles(0.0, 0.0, 2.0 * half);
        let r = TimedReference::new(0.0, 1.0, vec![a, b], vec![RotorThrusts::uniform(1.0), RotorThrusts::uniform(3.0)]).unwrap();
        let (s, f) = r.at(0.5);
        assert_relative_eq!(s.position.x, 1.0, epsilon = 1e-12);
        let q = half / 2.0;
        assert_relative_eq!(quat_vec(&s.attitude), Vector4::new(q.cos(), 0.0, 0.0, q.sin()), epsilon = 1e-12);
        assert_relative_eq!(f.0[0], 2.0, epsilon = 1e-12);
        assert_eq!(r.at(5.0).0, b);
    }

    #[test]
    fn csv_roundtrip() {
        let params = QuadParams::default();
        let r = hover_reference(Vector3::new(1.0, 2.0, 3.0), &params);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let back = TimedReference::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.states.len(), r.states.len());
        assert_relative_eq!(back.dt, r.dt, epsilon = 1e-12);
        assert_relative_eq!(back.states[10].position, r.states[10].position, epsilon = 1e-10);
    }

    #[test]
    fn nonuniform_csv_rejected() {
        let csv = "t,x,y,z,qw,qx,qy,qz,vx,vy,vz,wx,wy,wz,f1,f2,f3,f4\n\
                   0,0,0,1,1,0,0,0,0,0,0,0,0,0,2,2,2,2\n\
                   0.1,0,0,1,1,0,0,0,0,0,0,0,0,0,2,2,2,2\n\
                   0.3,0,0,1,1,0,0,0,0,0,0,0,0,0,2,2,2,2\n";
        assert!(TimedReference::read_csv(csv.as_bytes()).is_err());
    }
}
