//! Model predictive contouring control with real-time iterations.
//!
//! The augmented state carries the rotor thrusts and the path progress
//! `(θ, v_θ)`; inputs are the thrust rates and the progress acceleration.
//! Every call linearizes about the shifted previous prediction, condenses the
//! multiple-shooting problem and solves one QP.
//!
//! The QP is written in `z_k = (v_θ, f)` at stage `k + 1`, which turns the
//! thrust and progress-speed limits into variable bounds and the rate limits
//! into difference rows.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, SVector, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arc_path::ArcSpline;
use crate::dynamics::{self, QuadParams, QuadState, RotorThrusts};
use crate::ocp::{self, InputCost, LinearStage, Model, StageCost};
use crate::qp::{QpProblem, QpSettings, QpSolver, QpStatus};
use crate::track::TrackConfig;

/// Raw augmented state: p(3), q(4), v(3), ω(3), f(4), θ, v_θ.
pub const NR: usize = 19;
/// Error-state dimension.
pub const NX: usize = 18;
/// Inputs: Δv_θ, Δf(4).
pub const NU: usize = 5;
/// Stage residual: lag (3), contour (3), body rate (3).
pub const NRES: usize = 9;

pub type AugVector = SVector<f64, NR>;
pub type InputVector = SVector<f64, NU>;

const IX_OMEGA: usize = 9;
const IX_THETA: usize = 16;
const IX_VTHETA: usize = 17;

#[derive(Debug, Error)]
pub enum MpccError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite linearization at stage {stage}")]
    NonFinite { stage: usize },
    #[error("config file: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpccConfig {
    pub horizon: usize,
    pub dt: f64,
    pub q_lag: f64,
    pub q_nom: f64,
    pub q_wp: f64,
    pub sigma: f64,
    pub mu: f64,
    pub q_omega: [f64; 3],
    pub r_dv: f64,
    pub r_df: [f64; 4],
    pub omega_max: f64,
    pub thrust_min: f64,
    pub thrust_max: f64,
    pub v_theta_max: f64,
    pub dv_theta_max: f64,
    pub df_max: f64,
    pub omega_z_ref: f64,
    /// Keep θ below the path length (open paths that end at rest).
    pub stop_at_end: bool,
    pub max_qp_iter: usize,
    /// Grid spacing of the initial progress projection (m).
    pub projection_grid: f64,
}

impl Default for MpccConfig {
    fn default() -> Self {
        Self {
            horizon: 20,
            dt: 0.05,
            q_lag: 5e4,
            q_nom: 5000.0,
            q_wp: 2e5,
            sigma: 0.5,
            mu: 500.0,
            q_omega: [50.0; 3],
            r_dv: 0.01,
            r_df: [1.0; 4],
            omega_max: 10.0,
            thrust_min: 0.0,
            thrust_max: 7.0,
            v_theta_max: 30.0,
            dv_theta_max: 50.0,
            df_max: 100.0,
            omega_z_ref: 0.0,
            stop_at_end: false,
            max_qp_iter: 1000,
            projection_grid: 1e-3,
        }
    }
}

impl MpccConfig {
    pub fn validate(&self) -> Result<(), MpccError> {
        let bad = |m: &str| Err(MpccError::Config(m.to_string()));
        if self.horizon < 2 {
            return bad("horizon must be at least 2");
        }
        if !(self.dt > 0.0) {
            return bad("dt must be positive");
        }
        let weights = [self.q_nom, self.q_wp, self.r_dv, self.q_omega[0], self.q_omega[1], self.q_omega[2]];
        if weights.iter().chain(&self.r_df).any(|w| !(*w >= 0.0)) {
            return bad("weights must be non-negative");
        }
        if !(self.q_lag > 0.0) || !(self.mu > 0.0) {
            return bad("q_lag and mu must be positive");
        }
        if !(self.sigma > 0.0) {
            return bad("sigma must be positive");
        }
        if !(self.thrust_min < self.thrust_max) || !(self.v_theta_max > 0.0) {
            return bad("thrust and progress bounds must be ordered");
        }
        if !(self.omega_max > 0.0 && self.dv_theta_max > 0.0 && self.df_max > 0.0) {
            return bad("rate bounds must be positive");
        }
        Ok(())
    }

    /// Gaussian bumps of neighbouring gates must not overlap at 3σ.
    pub fn check_sigma(&self, track: &TrackConfig) -> Result<(), MpccError> {
        if track.gates.len() > 1 && track.min_gate_spacing() < 6.0 * self.sigma {
            return Err(MpccError::Config(format!(
                "sigma {} too wide for gate spacing {:.3}",
                self.sigma,
                track.min_gate_spacing()
            )));
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self, MpccError> {
        let c: Self = serde_json::from_str(s).map_err(|e| MpccError::Io(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_json_file(path: impl AsRef<std::path::Path>) -> Result<Self, MpccError> {
        let s = std::fs::read_to_string(path).map_err(|e| MpccError::Io(e.to_string()))?;
        Self::from_json_str(&s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentedState {
    pub quad: QuadState,
    pub thrusts: RotorThrusts,
    pub theta: f64,
    pub v_theta: f64,
}

impl AugmentedState {
    pub fn to_vector(&self) -> AugVector {
        let mut x = AugVector::zeros();
        x.fixed_rows_mut::<13>(0).copy_from(&self.quad.to_vector());
        x.fixed_rows_mut::<4>(13).copy_from(&self.thrusts.as_vector());
        x[17] = self.theta;
        x[18] = self.v_theta;
        x
    }

    pub fn from_vector(x: &AugVector) -> Self {
        Self {
            quad: QuadState::from_vector(&x.fixed_rows::<13>(0).into_owned()),
            thrusts: RotorThrusts::from_vector(&x.fixed_rows::<4>(13).into_owned()),
            theta: x[17],
            v_theta: x[18],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MpccInput {
    pub dv_theta: f64,
    pub df: [f64; 4],
}

impl MpccInput {
    pub fn to_vector(&self) -> InputVector {
        InputVector::new(self.dv_theta, self.df[0], self.df[1], self.df[2], self.df[3])
    }

    pub fn from_vector(u: &InputVector) -> Self {
        Self { dv_theta: u[0], df: [u[1], u[2], u[3], u[4]] }
    }
}

/// Augmented continuous-time model.
#[derive(Debug, Clone)]
pub struct AugmentedModel {
    pub params: QuadParams,
}

impl Model<NR, NU> for AugmentedModel {
    fn rhs(&self, x: &AugVector, u: &InputVector) -> AugVector {
        let quad = x.fixed_rows::<13>(0).into_owned();
        let f = x.fixed_rows::<4>(13).into_owned();
        let mut d = AugVector::zeros();
        d.fixed_rows_mut::<13>(0).copy_from(&dynamics::rhs(&quad, &f, &self.params));
        d.fixed_rows_mut::<4>(13).copy_from(&u.fixed_rows::<4>(1));
        d[17] = x[18];
        d[18] = u[0];
        d
    }

    fn jacobians(&self, x: &AugVector, _u: &InputVector) -> (SMatrix<f64, NR, NR>, SMatrix<f64, NR, NU>) {
        let quad = x.fixed_rows::<13>(0).into_owned();
        let f = x.fixed_rows::<4>(13).into_owned();
        let (aq, bq) = dynamics::rhs_jacobians(&quad, &f, &self.params);
        let mut a = SMatrix::<f64, NR, NR>::zeros();
        a.fixed_view_mut::<13, 13>(0, 0).copy_from(&aq);
        a.fixed_view_mut::<13, 4>(0, 13).copy_from(&bq);
        a[(17, 18)] = 1.0;
        let mut b = SMatrix::<f64, NR, NU>::zeros();
        for i in 0..4 {
            b[(13 + i, 1 + i)] = 1.0;
        }
        b[(18, 0)] = 1.0;
        (a, b)
    }
}

/// Position and first two θ-derivatives of the reference, extended linearly
/// beyond the ends of an open path.
pub fn path_frame(spline: &ArcSpline, theta: f64) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
    let l = spline.length();
    if !spline.is_closed() && (theta < 0.0 || theta > l) {
        let end = if theta < 0.0 { 0.0 } else { l };
        let e = spline.eval(end);
        return (e.position + e.tangent * (theta - end), e.tangent, Vector3::zeros());
    }
    let d = spline.derivatives(theta);
    (d.position, d.first, d.second)
}

/// Contour and lag error vectors of `p` at progress `theta`.
pub fn contour_lag_errors(p: &Vector3<f64>, theta: f64, spline: &ArcSpline) -> (Vector3<f64>, Vector3<f64>) {
    let (s, ds, _) = path_frame(spline, theta);
    let t = ds.normalize();
    let e = p - s;
    let e_l = t * t.dot(&e);
    (e - e_l, e_l)
}

/// Contour weight from the max-of-Gaussians blend around the gates.
pub fn dynamic_qc(theta: f64, spline: &ArcSpline, gates: &[Vector3<f64>], cfg: &MpccConfig) -> f64 {
    let p = path_frame(spline, theta).0;
    qc_at(&p, gates, cfg)
}

fn qc_at(p: &Vector3<f64>, gates: &[Vector3<f64>], cfg: &MpccConfig) -> f64 {
    let s2 = 2.0 * cfg.sigma * cfg.sigma;
    let bump = gates.iter().map(|g| (-(p - g).norm_squared() / s2).exp()).fold(0.0, f64::max);
    cfg.q_nom + (cfg.q_wp - cfg.q_nom) * bump
}

/// Running cost of one stage.
pub fn stage_cost(x: &AugmentedState, u: &MpccInput, spline: &ArcSpline, gates: &[Vector3<f64>], cfg: &MpccConfig) -> f64 {
    let (e_c, e_l) = contour_lag_errors(&x.quad.position, x.theta, spline);
    let qc = dynamic_qc(x.theta, spline, gates, cfg);
    let w = x.quad.body_rates - Vector3::new(0.0, 0.0, cfg.omega_z_ref);
    let rate: f64 = (0..3).map(|i| cfg.q_omega[i] * w[i] * w[i]).sum();
    let df: f64 = (0..4).map(|i| cfg.r_df[i] * u.df[i] * u.df[i]).sum();
    cfg.q_lag * e_l.norm_squared() + qc * e_c.norm_squared() + rate + cfg.r_dv * u.dv_theta * u.dv_theta + df
        - cfg.mu * x.v_theta
}

/// Weighted residual `r` and its Jacobian with respect to the error state
/// at `x`, with the contour weight `qc` held fixed.
pub fn stage_residual(x: &AugVector, spline: &ArcSpline, qc: f64, cfg: &MpccConfig) -> (SVector<f64, NRES>, SMatrix<f64, NRES, NX>) {
    let p = Vector3::new(x[0], x[1], x[2]);
    let w = Vector3::new(x[10], x[11], x[12]);
    let theta = x[17];
    let (s, ds, dds) = path_frame(spline, theta);
    let n = ds.norm().max(1e-9);
    let t = ds / n;
    let dt = (Matrix3::identity() - t * t.transpose()) * dds / n;
    let e = p - s;
    let lag = t.dot(&e);
    let e_l = t * lag;
    let e_c = e - e_l;
    // ∂e_l/∂θ with ∂e/∂θ = −s′
    let de_l = dt * lag + t * (dt.dot(&e) - t.dot(&ds));
    let de_c = -ds - de_l;
    let tt = t * t.transpose();

    let (sl, sc) = (cfg.q_lag.sqrt(), qc.max(0.0).sqrt());
    let mut r = SVector::<f64, NRES>::zeros();
    let mut j = SMatrix::<f64, NRES, NX>::zeros();
    r.fixed_rows_mut::<3>(0).copy_from(&(e_l * sl));
    r.fixed_rows_mut::<3>(3).copy_from(&(e_c * sc));
    j.fixed_view_mut::<3, 3>(0, 0).copy_from(&(tt * sl));
    j.fixed_view_mut::<3, 3>(3, 0).copy_from(&((Matrix3::identity() - tt) * sc));
    j.fixed_view_mut::<3, 1>(0, IX_THETA).copy_from(&(de_l * sl));
    j.fixed_view_mut::<3, 1>(3, IX_THETA).copy_from(&(de_c * sc));
    for i in 0..3 {
        let sw = cfg.q_omega[i].sqrt();
        let wref = if i == 2 { cfg.omega_z_ref } else { 0.0 };
        r[6 + i] = sw * (w[i] - wref);
        j[(6 + i, IX_OMEGA + i)] = sw;
    }
    (r, j)
}

/// Predicted trajectory on the stage grid `t0 + k dt`.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub t0: f64,
    pub dt: f64,
    pub states: Vec<AugVector>,
    pub inputs: Vec<InputVector>,
}

impl Prediction {
    pub fn horizon(&self) -> usize {
        self.inputs.len()
    }

    /// State at absolute time `t`, linearly interpolated (quaternion
    /// renormalized), holding the last stage beyond the end.
    pub fn state_at(&self, t: f64) -> AugVector {
        let s = ((t - self.t0) / self.dt).max(0.0);
        let n = self.states.len() - 1;
        let i = (s.floor() as usize).min(n);
        if i >= n {
            return self.states[n];
        }
        let a = s - i as f64;
        let mut x = self.states[i] * (1.0 - a) + self.states[i + 1] * a;
        let q = x.fixed_rows::<4>(3).normalize();
        x.fixed_rows_mut::<4>(3).copy_from(&q);
        x
    }

    pub fn input_at(&self, t: f64) -> InputVector {
        let s = ((t - self.t0) / self.dt).max(0.0);
        let i = (s.floor() as usize).min(self.inputs.len() - 1);
        self.inputs[i]
    }

    /// QP warm start `z_k = (v_θ, f)` at stage `k + 1` for a solve at `t`,
    /// shifted by whole stages so that active bounds stay exactly active.
    pub fn warm_start(&self, t: f64) -> DVector<f64> {
        let n = self.horizon();
        let shift = ((t - self.t0) / self.dt).round().max(0.0) as usize;
        let mut z = DVector::zeros(n * NU);
        for k in 0..n {
            let x = &self.states[(k + 1 + shift).min(n)];
            z[k * NU] = x[18];
            for i in 0..4 {
                z[k * NU + 1 + i] = x[13 + i];
            }
        }
        z
    }

    /// Resample onto the grid starting at `t`, duplicating the last stage.
    pub fn shifted(&self, t: f64) -> Prediction {
        let n = self.horizon();
        let states = (0..=n).map(|k| self.state_at(t + k as f64 * self.dt)).collect();
        let inputs = (0..n).map(|k| self.input_at(t + k as f64 * self.dt)).collect();
        Prediction { t0: t, dt: self.dt, states, inputs }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    /// Wall-clock seconds for linearization, condensing and the QP.
    pub solve_time: f64,
    pub qp_time: f64,
    pub qp_iterations: usize,
    pub objective: f64,
    pub degraded: bool,
    /// State rows were dropped to recover feasibility.
    pub relaxed: bool,
}

#[derive(Debug, Clone)]
pub struct RtiResult {
    pub input: MpccInput,
    pub prediction: Prediction,
    pub stats: SolveStats,
}

/// Everything fixed across the iterations of one run.
#[derive(Debug, Clone)]
pub struct MpccProblem {
    pub spline: ArcSpline,
    pub gates: Vec<Vector3<f64>>,
    pub cfg: MpccConfig,
    pub model: AugmentedModel,
    pub solver: QpSolver,
}

impl MpccProblem {
    pub fn new(spline: ArcSpline, gates: Vec<Vector3<f64>>, cfg: MpccConfig, params: QuadParams) -> Result<Self, MpccError> {
        cfg.validate()?;
        params.validate().map_err(|e| MpccError::Config(e.to_string()))?;
        let solver = QpSolver::new(QpSettings { max_iter: cfg.max_qp_iter, ..Default::default() });
        Ok(Self { spline, gates, cfg, model: AugmentedModel { params }, solver })
    }

    /// Linearization guess for a first call: the measured state held over the
    /// horizon with constant thrust and no progress.
    pub fn initial_guess(&self, t: f64, x0: &AugVector) -> Prediction {
        let n = self.cfg.horizon;
        let mut x = *x0;
        x[18] = 0.0;
        Prediction { t0: t, dt: self.cfg.dt, states: vec![x; n + 1], inputs: vec![InputVector::zeros(); n] }
    }

    fn clamp_guess(&self, guess: &mut Prediction) {
        let c = &self.cfg;
        for x in guess.states.iter_mut() {
            for i in 13..17 {
                x[i] = x[i].clamp(c.thrust_min, c.thrust_max);
            }
            x[18] = x[18].clamp(0.0, c.v_theta_max);
        }
        for u in guess.inputs.iter_mut() {
            u[0] = u[0].clamp(-c.dv_theta_max, c.dv_theta_max);
            for i in 1..5 {
                u[i] = u[i].clamp(-c.df_max, c.df_max);
            }
        }
    }

    /// One Gauss–Newton real-time iteration from the exact current state `x0`
    /// (including the controller's own thrust and progress memory) about the
    /// linearization guess `guess` (already shifted to the current time).
    pub fn rti_step(&self, x0: &AugVector, guess: &Prediction, warm: Option<&DVector<f64>>) -> Result<RtiResult, MpccError> {
        let start = Instant::now();
        let cfg = &self.cfg;
        let n = cfg.horizon;
        let h = cfg.dt;
        let mut guess = guess.clone();
        guess.states[0] = *x0;
        self.clamp_guess(&mut guess);
        // Stage states must advance along the path for the frozen spline
        // coefficients to be meaningful.
        for k in 1..=n {
            if guess.states[k][17] < guess.states[k - 1][17] {
                guess.states[k][17] = guess.states[k - 1][17];
            }
        }

        // inputs consistent with the guessed thrust and progress-speed channels
        for k in 0..n {
            let (a, b) = (guess.states[k], guess.states[k + 1]);
            guess.inputs[k][0] = ((b[18] - a[18]) / h).clamp(-cfg.dv_theta_max, cfg.dv_theta_max);
            for i in 0..4 {
                guess.inputs[k][1 + i] = ((b[13 + i] - a[13 + i]) / h).clamp(-cfg.df_max, cfg.df_max);
            }
        }

        let mut stages: Vec<LinearStage<NX, NU>> = Vec::with_capacity(n);
        for k in 0..n {
            let st = ocp::linearize_stage::<_, NR, NX, NU>(&self.model, &guess.states[k], &guess.inputs[k], &guess.states[k + 1], h);
            if !(st.a.iter().chain(st.b.iter()).chain(st.d.iter()).all(|v| v.is_finite())) {
                return Err(MpccError::NonFinite { stage: k });
            }
            stages.push(st);
        }

        let stop = cfg.stop_at_end && !self.spline.is_closed();
        let mut costs = Vec::with_capacity(n);
        for k in 1..=n {
            let x = &guess.states[k];
            let qc = qc_at(&path_frame(&self.spline, x[17]).0, &self.gates, cfg);
            let (r, j) = stage_residual(x, &self.spline, qc, cfg);
            let mut linear = SVector::<f64, NX>::zeros();
            linear[IX_VTHETA] = -cfg.mu;
            if stop {
                // capped progress makes the v_θ reward flat; prefer early arrival
                linear[IX_THETA] = -cfg.mu / (n as f64 * h);
            }
            costs.push(StageCost {
                residual: DVector::from_column_slice(r.as_slice()),
                jacobian: DMatrix::from_column_slice(NRES, NX, j.as_slice()),
                linear,
            });
        }
        let mut rdiag = InputVector::zeros();
        rdiag[0] = 2.0 * cfg.r_dv;
        for i in 0..4 {
            rdiag[1 + i] = 2.0 * cfg.r_df[i];
        }
        let input_cost = InputCost { r: SMatrix::<f64, NU, NU>::from_diagonal(&rdiag), q: InputVector::zeros() };
        let inputs = vec![input_cost; n];
        let dx0 = SVector::<f64, NX>::zeros();
        let cond = ocp::condense(&stages, &dx0, &costs, &inputs, &guess.inputs);

        // δu = D z + e − ū with u_k = (z_k − z_{k−1}) / h and z_{−1} = s0
        let nz = n * NU;
        let s0 = InputVector::new(x0[18], x0[13], x0[14], x0[15], x0[16]);
        let mut shift = DVector::zeros(nz);
        for k in 0..n {
            for i in 0..NU {
                shift[k * NU + i] = -guess.inputs[k][i];
            }
        }
        for i in 0..NU {
            shift[i] -= s0[i] / h;
        }
        let apply_dt = |w: &DVector<f64>| -> DVector<f64> {
            // Dᵀ w
            let mut out = DVector::zeros(nz);
            for k in 0..n {
                for i in 0..NU {
                    let next = if k + 1 < n { w[(k + 1) * NU + i] } else { 0.0 };
                    out[k * NU + i] = (w[k * NU + i] - next) / h;
                }
            }
            out
        };
        // H_z = Dᵀ H D, g_z = Dᵀ (H shift + g)
        let mut hd = DMatrix::zeros(nz, nz);
        for c in 0..nz {
            let col = if c + NU < nz { (cond.h.column(c) - cond.h.column(c + NU)) / h } else { cond.h.column(c) / h };
            hd.set_column(c, &col);
        }
        let mut hz = DMatrix::zeros(nz, nz);
        for r in 0..nz {
            let row = if r + NU < nz { (hd.row(r) - hd.row(r + NU)) / h } else { hd.row(r) / h };
            hz.set_row(r, &row);
        }
        let hz = (&hz + hz.transpose()) * 0.5;
        let gz = apply_dt(&(&cond.h * &shift + &cond.g));
        if !hz.iter().chain(gz.iter()).all(|v| v.is_finite()) {
            return Err(MpccError::NonFinite { stage: n });
        }

        // boxes on z
        let mut lb = DVector::zeros(nz);
        let mut ub = DVector::zeros(nz);
        for k in 0..n {
            lb[k * NU] = 0.0;
            ub[k * NU] = cfg.v_theta_max;
            for i in 1..NU {
                lb[k * NU + i] = cfg.thrust_min;
                ub[k * NU + i] = cfg.thrust_max;
            }
        }
        let rate = |i: usize| if i == 0 { cfg.dv_theta_max } else { cfg.df_max };
        // first stage rate limit is a box
        for i in 0..NU {
            lb[i] = lb[i].max(s0[i] - rate(i) * h);
            ub[i] = ub[i].min(s0[i] + rate(i) * h);
            if lb[i] > ub[i] {
                let m = 0.5 * (lb[i] + ub[i]);
                lb[i] = m;
                ub[i] = m;
            }
        }

        let mut rows: Vec<(DVector<f64>, f64, f64)> = Vec::new();
        for k in 1..n {
            for i in 0..NU {
                let mut a = DVector::zeros(nz);
                a[k * NU + i] = 1.0;
                a[(k - 1) * NU + i] = -1.0;
                rows.push((a, -rate(i) * h, rate(i) * h));
            }
        }
        let n_rate_rows = rows.len();
        // state rows: a_δu · δu = a_δu · (D z + shift)
        let state_row = |k: usize, idx: usize, lo: f64, hi: f64, base: f64, rows: &mut Vec<(DVector<f64>, f64, f64)>| {
            let a = cond.state_row(k, idx);
            let off = base + cond.offsets[k][idx] + a.dot(&shift);
            rows.push((apply_dt(&a), lo - off, hi - off));
        };
        if stop {
            // never tighter than the shortest stop from the current progress speed
            let v = x0[18].max(0.0);
            let l = self.spline.length().max(x0[17] + v * h + v * v / (2.0 * cfg.dv_theta_max));
            for k in 1..=n {
                state_row(k, IX_THETA, f64::NEG_INFINITY, l, guess.states[k][17], &mut rows);
            }
        }
        let n_core_rows = rows.len();
        for k in 1..=n {
            for i in 0..3 {
                state_row(k, IX_OMEGA + i, -cfg.omega_max, cfg.omega_max, guess.states[k][10 + i], &mut rows);
            }
        }

        let build = |count: usize| {
            let mut a = DMatrix::zeros(count, nz);
            let mut lba = DVector::zeros(count);
            let mut uba = DVector::zeros(count);
            for (r, (row, lo, hi)) in rows.iter().take(count).enumerate() {
                a.set_row(r, &row.transpose());
                lba[r] = *lo;
                uba[r] = *hi;
            }
            QpProblem::new(hz.clone(), gz.clone(), lb.clone(), ub.clone()).with_rows(a, lba, uba)
        };

        let z0 = match warm {
            Some(w) if w.len() == nz => w.clone(),
            _ => guess.warm_start(guess.t0),
        };
        let qp_start = Instant::now();
        let mut qp = build(rows.len());
        let mut sol = self.solver.solve(&qp, Some(&z0));
        let mut relaxed = false;
        let mut iterations = sol.iterations;
        for count in [n_core_rows, n_rate_rows] {
            if sol.status != QpStatus::Infeasible {
                break;
            }
            relaxed = true;
            qp = build(count);
            sol = self.solver.solve(&qp, Some(&z0));
            iterations += sol.iterations;
        }
        let qp_time = qp_start.elapsed().as_secs_f64();
        let degraded = sol.status != QpStatus::Optimal;

        // a capped solve still improves the guess for the next call
        let z = if sol.status == QpStatus::Infeasible { z0.clone() } else { sol.z.clone() };
        // recover inputs and states
        let mut u_abs = Vec::with_capacity(n);
        let mut prev = s0;
        for k in 0..n {
            let zk = z.fixed_rows::<NU>(k * NU).into_owned();
            u_abs.push((zk - prev) / h);
            prev = zk;
        }
        let mut du = DVector::zeros(nz);
        for k in 0..n {
            for i in 0..NU {
                du[k * NU + i] = u_abs[k][i] - guess.inputs[k][i];
            }
        }
        let dxs = cond.states(&du);
        let mut states: Vec<AugVector> = guess.states.iter().zip(&dxs).map(|(xb, dx)| ocp::boxplus::<NR, NX>(xb, dx)).collect();
        states[0] = *x0;
        // the thrust and progress channels are linear and known exactly
        for k in 0..n {
            let zk = z.fixed_rows::<NU>(k * NU);
            states[k + 1][18] = zk[0];
            for i in 0..4 {
                states[k + 1][13 + i] = zk[1 + i];
            }
            states[k + 1][17] = states[k][17] + 0.5 * h * (states[k][18] + states[k + 1][18]);
        }
        let input = if degraded { MpccInput::from_vector(&guess.inputs[0]) } else { MpccInput::from_vector(&u_abs[0]) };
        let prediction = Prediction { t0: guess.t0, dt: h, states, inputs: u_abs };
        let stats = SolveStats {
            solve_time: start.elapsed().as_secs_f64(),
            qp_time,
            qp_iterations: iterations,
            objective: sol.objective,
            degraded,
            relaxed,
        };
        Ok(RtiResult { input, prediction, stats })
    }
}

/// Command for the time until the next controller call: thrust ramp
/// `f(τ) = clamp(thrust + rate τ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThrustCommand {
    pub thrust: [f64; 4],
    pub rate: [f64; 4],
}

impl ThrustCommand {
    pub fn constant(f: RotorThrusts) -> Self {
        Self { thrust: f.0, rate: [0.0; 4] }
    }

    pub fn at(&self, tau: f64, lo: f64, hi: f64) -> RotorThrusts {
        let mut f = [0.0; 4];
        for i in 0..4 {
            f[i] = (self.thrust[i] + self.rate[i] * tau).clamp(lo, hi);
        }
        RotorThrusts(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerReport {
    pub command: ThrustCommand,
    pub stats: SolveStats,
    pub theta: f64,
    pub v_theta: f64,
    /// Norm of the contour error of the measured position.
    pub contour_error: f64,
}

/// Closed-loop MPCC: keeps thrust, progress and the last prediction as
/// internal memory between calls.
#[derive(Debug, Clone)]
pub struct MpccController {
    pub problem: MpccProblem,
    thrust: Vector4<f64>,
    theta: f64,
    v_theta: f64,
    last: Option<(f64, Prediction)>,
    last_time: Option<f64>,
}

impl MpccController {
    pub fn new(problem: MpccProblem) -> Self {
        let hover = problem.model.params.hover_thrust();
        Self { problem, thrust: Vector4::repeat(hover), theta: 0.0, v_theta: 0.0, last: None, last_time: None }
    }

    pub fn set_initial_thrust(&mut self, f: RotorThrusts) {
        self.thrust = f.as_vector();
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn prediction(&self) -> Option<&Prediction> {
        self.last.as_ref().map(|(_, p)| p)
    }

    /// Advance the internal memory to `t`, then solve from the measured state.
    pub fn step(&mut self, t: f64, measured: &QuadState) -> Result<ControllerReport, MpccError> {
        let cfg = self.problem.cfg.clone();
        if let (Some((t_prev, pred)), Some(_)) = (&self.last, self.last_time) {
            let tau = t - t_prev;
            let u = pred.inputs[0];
            let a = u[0];
            self.theta += self.v_theta * tau + 0.5 * a * tau * tau;
            self.v_theta = (self.v_theta + a * tau).clamp(0.0, cfg.v_theta_max);
            for i in 0..4 {
                self.thrust[i] = (self.thrust[i] + u[1 + i] * tau).clamp(cfg.thrust_min, cfg.thrust_max);
            }
        } else {
            self.theta = self.problem.spline.project(&measured.position, cfg.projection_grid);
            self.v_theta = 0.0;
        }
        let mut x0 = AugVector::zeros();
        x0.fixed_rows_mut::<13>(0).copy_from(&measured.to_vector());
        x0.fixed_rows_mut::<4>(13).copy_from(&self.thrust);
        x0[17] = self.theta;
        x0[18] = self.v_theta;
        let res = match &self.last {
            Some((_, pred)) => match self.problem.rti_step(&x0, &pred.shifted(t), None) {
                // a diverged prediction is discarded rather than relinearized
                Err(MpccError::NonFinite { .. }) => self.problem.rti_step(&x0, &self.problem.initial_guess(t, &x0), None)?,
                other => other?,
            },
            None => self.problem.rti_step(&x0, &self.problem.initial_guess(t, &x0), None)?,
        };
        let u = res.input;
        self.last = Some((t, res.prediction));
        self.last_time = Some(t);
        let (e_c, _) = contour_lag_errors(&measured.position, self.theta, &self.problem.spline);
        Ok(ControllerReport {
            command: ThrustCommand { thrust: [self.thrust[0], self.thrust[1], self.thrust[2], self.thrust[3]], rate: u.df },
            stats: res.stats,
            theta: self.theta,
            v_theta: self.v_theta,
            contour_error: e_c.norm(),
        })
    }
}
