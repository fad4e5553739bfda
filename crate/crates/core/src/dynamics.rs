//! Rigid-body quadrotor model driven by single-rotor thrusts.
//!
//! Conventions: world frame z points up and gravity is `(0, 0, gravity)` with
//! `gravity < 0`. The attitude is a Hamilton quaternion, scalar first, rotating
//! body-frame vectors into the world frame, so `q̇ = ½ q ⊗ (0, ω)` with `ω` in
//! the body frame. Rotor order follows the X configuration used by the torque
//! map in [`wrench_from_rotors`].

use nalgebra::{Matrix3, Quaternion, SMatrix, SVector, UnitQuaternion, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Raw state dimension: position, quaternion (w, x, y, z), velocity, body rates.
pub const STATE_DIM: usize = 13;

pub type StateVector = SVector<f64, STATE_DIM>;
pub type StateJacobian = SMatrix<f64, STATE_DIM, STATE_DIM>;
pub type ThrustJacobian = SMatrix<f64, STATE_DIM, 4>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("non-finite value in {field}")]
    NonFinite { field: &'static str },
    #[error("quaternion norm {norm} deviates from 1")]
    NonUnitQuaternion { norm: f64 },
    #[error("integration step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("invalid vehicle parameters: {0}")]
    InvalidParams(String),
    #[error("failed to read parameters: {0}")]
    Io(String),
}

/// Vehicle parameters. Defaults are the "RPG Quad" values (inertia converted
/// from g·m² to kg·m²) with drag disabled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadParams {
    /// Mass [kg].
    pub mass: f64,
    /// Arm length [m].
    pub arm_length: f64,
    /// Diagonal of the inertia tensor [kg·m²].
    pub inertia: [f64; 3],
    /// Rotor torque constant [-].
    pub torque_constant: f64,
    /// Per-rotor thrust lower bound [N].
    pub thrust_min: f64,
    /// Per-rotor thrust upper bound [N].
    pub thrust_max: f64,
    /// Body-rate bound [rad/s].
    pub rate_max: f64,
    /// Linear drag coefficients along body x, y, z [1/s].
    pub drag: [f64; 3],
    /// Gravity along world z [m/s²].
    pub gravity: f64,
}

impl Default for QuadParams {
    fn default() -> Self {
        Self {
            mass: 0.85,
            arm_length: 0.15,
            inertia: [2.5e-3, 2.1e-3, 4.3e-3],
            torque_constant: 0.022,
            thrust_min: 0.0,
            thrust_max: 7.0,
            rate_max: 10.0,
            drag: [0.0; 3],
            gravity: -9.81,
        }
    }
}

impl QuadParams {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let bad = |msg: &str| Err(DynamicsError::InvalidParams(msg.to_string()));
        let all = [
            self.mass,
            self.arm_length,
            self.torque_constant,
            self.thrust_min,
            self.thrust_max,
            self.rate_max,
            self.gravity,
        ];
        if all.iter().chain(&self.inertia).chain(&self.drag).any(|v| !v.is_finite()) {
            return bad("non-finite entry");
        }
        if self.mass <= 0.0 {
            return bad("mass must be positive");
        }
        if self.arm_length <= 0.0 {
            return bad("arm length must be positive");
        }
        if self.inertia.iter().any(|&j| j <= 0.0) {
            return bad("inertia entries must be positive");
        }
        if !(0.0 <= self.thrust_min && self.thrust_min < self.thrust_max) {
            return bad("need 0 <= thrust_min < thrust_max");
        }
        if self.rate_max <= 0.0 {
            return bad("rate_max must be positive");
        }
        if self.drag.iter().any(|&d| d < 0.0) {
            return bad("drag coefficients must be non-negative");
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self, DynamicsError> {
        let p: Self = serde_json::from_str(s).map_err(|e| DynamicsError::Io(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, DynamicsError> {
        let s = std::fs::read_to_string(path).map_err(|e| DynamicsError::Io(e.to_string()))?;
        Self::from_json_str(&s)
    }

    /// Per-rotor thrust that balances gravity.
    pub fn hover_thrust(&self) -> f64 {
        self.mass * self.gravity.abs() / 4.0
    }

    pub fn gravity_vector(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, self.gravity)
    }

    pub fn inertia_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::from(self.inertia))
    }

    /// Linear map from rotor thrusts to body torques.
    pub fn torque_map(&self) -> SMatrix<f64, 3, 4> {
        let k = self.arm_length / std::f64::consts::SQRT_2;
        let c = self.torque_constant;
        SMatrix::<f64, 3, 4>::new(k, k, -k, -k, -k, k, k, -k, c, -c, c, -c)
    }
}

/// Rigid-body state. `attitude` rotates body vectors into the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadState {
    pub position: Vector3<f64>,
    pub attitude: UnitQuaternion<f64>,
    pub velocity: Vector3<f64>,
    pub body_rates: Vector3<f64>,
}

impl Default for QuadState {
    fn default() -> Self {
        Self::at_rest(Vector3::zeros())
    }
}

impl QuadState {
    pub fn at_rest(position: Vector3<f64>) -> Self {
        Self {
            position,
            attitude: UnitQuaternion::identity(),
            velocity: Vector3::zeros(),
            body_rates: Vector3::zeros(),
        }
    }

    pub fn to_vector(&self) -> StateVector {
        let q = self.attitude.quaternion();
        let mut x = StateVector::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&self.position);
        x[3] = q.w;
        x[4] = q.i;
        x[5] = q.j;
        x[6] = q.k;
        x.fixed_rows_mut::<3>(7).copy_from(&self.velocity);
        x.fixed_rows_mut::<3>(10).copy_from(&self.body_rates);
        x
    }

    /// Builds a state from a raw vector, renormalizing the quaternion.
    pub fn from_vector(x: &StateVector) -> Self {
        Self {
            position: x.fixed_rows::<3>(0).into_owned(),
            attitude: UnitQuaternion::from_quaternion(Quaternion::new(x[3], x[4], x[5], x[6])),
            velocity: x.fixed_rows::<3>(7).into_owned(),
            body_rates: x.fixed_rows::<3>(10).into_owned(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite())
    }
}

/// Single-rotor thrusts [N].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct RotorThrusts(pub [f64; 4]);

impl RotorThrusts {
    pub fn uniform(f: f64) -> Self {
        Self([f; 4])
    }

    pub fn as_vector(&self) -> Vector4<f64> {
        Vector4::from(self.0)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self([v[0], v[1], v[2], v[3]])
    }

    pub fn collective(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn clamped(&self, lo: f64, hi: f64) -> Self {
        Self(self.0.map(|f| f.clamp(lo, hi)))
    }
}

/// Collective thrust along body z and body torques.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wrench {
    pub thrust: f64,
    pub torque: Vector3<f64>,
}

pub fn wrench_from_rotors(f: &RotorThrusts, params: &QuadParams) -> Result<Wrench, DynamicsError> {
    if f.0.iter().any(|v| !v.is_finite()) {
        return Err(DynamicsError::NonFinite { field: "rotor thrusts" });
    }
    let fv = f.as_vector();
    Ok(Wrench { thrust: fv.sum(), torque: params.torque_map() * fv })
}

/// Time derivative of a [`QuadState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    pub position: Vector3<f64>,
    pub attitude: Quaternion<f64>,
    pub velocity: Vector3<f64>,
    pub body_rates: Vector3<f64>,
}

pub fn state_derivative(
    x: &QuadState,
    f: &RotorThrusts,
    params: &QuadParams,
) -> Result<StateDerivative, DynamicsError> {
    let norm = x.attitude.quaternion().norm();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(DynamicsError::NonUnitQuaternion { norm });
    }
    check_finite(&x.to_vector())?;
    if f.0.iter().any(|v| !v.is_finite()) {
        return Err(DynamicsError::NonFinite { field: "rotor thrusts" });
    }
    let d = rhs(&x.to_vector(), &f.as_vector(), params);
    Ok(StateDerivative {
        position: d.fixed_rows::<3>(0).into_owned(),
        attitude: Quaternion::new(d[3], d[4], d[5], d[6]),
        velocity: d.fixed_rows::<3>(7).into_owned(),
        body_rates: d.fixed_rows::<3>(10).into_owned(),
    })
}

/// One classic Runge–Kutta step with thrusts held constant, followed by
/// quaternion renormalization.
pub fn integrate_step(
    x: &QuadState,
    f: &RotorThrusts,
    dt: f64,
    params: &QuadParams,
) -> Result<QuadState, DynamicsError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(DynamicsError::NonPositiveStep(dt));
    }
    if f.0.iter().any(|v| !v.is_finite()) {
        return Err(DynamicsError::NonFinite { field: "rotor thrusts" });
    }
    let x0 = x.to_vector();
    check_finite(&x0)?;
    let fv = f.as_vector();
    let x1 = rk4(&x0, dt, |s| rhs(s, &fv, params));
    check_finite(&x1)?;
    let qn = x1.fixed_rows::<4>(3).norm();
    if qn < 1e-12 {
        return Err(DynamicsError::NonUnitQuaternion { norm: qn });
    }
    Ok(QuadState::from_vector(&x1))
}

fn check_finite(x: &StateVector) -> Result<(), DynamicsError> {
    const FIELDS: [&str; 4] = ["position", "attitude", "velocity", "body_rates"];
    const SPANS: [(usize, usize); 4] = [(0, 3), (3, 7), (7, 10), (10, 13)];
    for (name, (a, b)) in FIELDS.iter().zip(SPANS) {
        if x.rows(a, b - a).iter().any(|v| !v.is_finite()) {
            return Err(DynamicsError::NonFinite { field: name });
        }
    }
    Ok(())
}

/// Classic RK4 for a time-invariant vector field.
pub fn rk4<const D: usize>(
    x: &SVector<f64, D>,
    h: f64,
    field: impl Fn(&SVector<f64, D>) -> SVector<f64, D>,
) -> SVector<f64, D> {
    let k1 = field(x);
    let k2 = field(&(x + k1 * (0.5 * h)));
    let k3 = field(&(x + k2 * (0.5 * h)));
    let k4 = field(&(x + k3 * h));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Rotation matrix of a (not necessarily unit) quaternion `(w, x, y, z)`,
/// homogeneous of degree two so its derivatives stay polynomial.
pub fn rotation_matrix(q: &Vector4<f64>) -> Matrix3<f64> {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    Matrix3::new(
        w * w + x * x - y * y - z * z,
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        w * w - x * x + y * y - z * z,
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        w * w - x * x - y * y + z * z,
    )
}

/// Partial derivatives of [`rotation_matrix`] with respect to w, x, y, z.
pub fn rotation_partials(q: &Vector4<f64>) -> [Matrix3<f64>; 4] {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    [
        Matrix3::new(w, -z, y, z, w, -x, -y, x, w) * 2.0,
        Matrix3::new(x, y, z, y, -x, -w, z, w, -x) * 2.0,
        Matrix3::new(-y, x, w, x, y, z, -w, z, -y) * 2.0,
        Matrix3::new(-z, -w, x, w, -z, y, x, y, z) * 2.0,
    ]
}

/// Continuous-time vector field on the raw 13-vector.
pub fn rhs(x: &StateVector, f: &Vector4<f64>, params: &QuadParams) -> StateVector {
    let q = x.fixed_rows::<4>(3).into_owned();
    let v = x.fixed_rows::<3>(7).into_owned();
    let w = x.fixed_rows::<3>(10).into_owned();
    let rot = rotation_matrix(&q);
    let drag = Matrix3::from_diagonal(&Vector3::from(params.drag));
    let thrust = f.sum();

    let mut dx = StateVector::zeros();
    dx.fixed_rows_mut::<3>(0).copy_from(&v);
    dx.fixed_rows_mut::<4>(3).copy_from(&(quat_right_rate(&w) * q * 0.5));
    let accel = params.gravity_vector() + rot.column(2) * (thrust / params.mass)
        - rot * drag * rot.transpose() * v;
    dx.fixed_rows_mut::<3>(7).copy_from(&accel);
    let inertia = Vector3::from(params.inertia);
    let jw = inertia.component_mul(&w);
    let tau = params.torque_map() * f;
    dx.fixed_rows_mut::<3>(10).copy_from(&(tau - w.cross(&jw)).component_div(&inertia));
    dx
}

/// Jacobians of [`rhs`] with respect to the raw state and the rotor thrusts.
pub fn rhs_jacobians(
    x: &StateVector,
    f: &Vector4<f64>,
    params: &QuadParams,
) -> (StateJacobian, ThrustJacobian) {
    let q = x.fixed_rows::<4>(3).into_owned();
    let v = x.fixed_rows::<3>(7).into_owned();
    let w = x.fixed_rows::<3>(10).into_owned();
    let rot = rotation_matrix(&q);
    let parts = rotation_partials(&q);
    let drag = Matrix3::from_diagonal(&Vector3::from(params.drag));
    let thrust = f.sum();
    let inertia = Vector3::from(params.inertia);
    let inv_j = Matrix3::from_diagonal(&inertia.map(|j| 1.0 / j));

    let mut a = StateJacobian::zeros();
    a.fixed_view_mut::<3, 3>(0, 7).copy_from(&Matrix3::identity());

    // quaternion kinematics
    a.fixed_view_mut::<4, 4>(3, 3).copy_from(&(quat_right_rate(&w) * 0.5));
    a.fixed_view_mut::<4, 3>(3, 10).copy_from(&(quat_rate_wrt_omega(&q) * 0.5));

    // translational dynamics
    for (i, dr) in parts.iter().enumerate() {
        let col = dr.column(2) * (thrust / params.mass)
            - (dr * drag * rot.transpose() + rot * drag * dr.transpose()) * v;
        a.fixed_view_mut::<3, 1>(7, 3 + i).copy_from(&col);
    }
    a.fixed_view_mut::<3, 3>(7, 7).copy_from(&(-(rot * drag * rot.transpose())));

    // rotational dynamics
    let jm = Matrix3::from_diagonal(&inertia);
    let jw = jm * w;
    let d_gyro = skew(&w) * jm - skew(&jw);
    a.fixed_view_mut::<3, 3>(10, 10).copy_from(&(-(inv_j * d_gyro)));

    let mut b = ThrustJacobian::zeros();
    let z_axis = rot.column(2) / params.mass;
    for i in 0..4 {
        b.fixed_view_mut::<3, 1>(7, i).copy_from(&z_axis);
    }
    b.fixed_view_mut::<3, 4>(10, 0).copy_from(&(inv_j * params.torque_map()));
    (a, b)
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Matrix `M(ω)` with `q ⊗ (0, ω) = M(ω) q`.
fn quat_right_rate(w: &Vector3<f64>) -> SMatrix<f64, 4, 4> {
    SMatrix::<f64, 4, 4>::new(
        0.0, -w.x, -w.y, -w.z, //
        w.x, 0.0, w.z, -w.y, //
        w.y, -w.z, 0.0, w.x, //
        w.z, w.y, -w.x, 0.0,
    )
}

/// Matrix `N(q)` with `q ⊗ (0, ω) = N(q) ω`.
fn quat_rate_wrt_omega(q: &Vector4<f64>) -> SMatrix<f64, 4, 3> {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    SMatrix::<f64, 4, 3>::new(-x, -y, -z, w, -z, y, z, w, -x, -y, x, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn hover() -> (QuadParams, RotorThrusts) {
        let p = QuadParams::default();
        let f = RotorThrusts::uniform(p.hover_thrust());
        (p, f)
    }

    #[test]
    fn table_one_defaults_validate() {
        let p = QuadParams::default();
        p.validate().unwrap();
        assert_relative_eq!(p.hover_thrust(), 2.0846, epsilon = 1e-4);
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = QuadParams::default();
        p.thrust_min = 8.0;
        assert!(p.validate().is_err());
        let mut p = QuadParams::default();
        p.drag[1] = -0.1;
        assert!(p.validate().is_err());
        assert!(QuadParams::from_json_str(r#"{"mass": -1.0}"#).is_err());
    }

    #[test]
    fn json_defaults_fill_missing_fields() {
        let p = QuadParams::from_json_str(r#"{"mass": 1.0}"#).unwrap();
        assert_eq!(p.mass, 1.0);
        assert_eq!(p.thrust_max, 7.0);
    }

    #[test]
    fn symmetric_thrusts_cancel_torques() {
        let (p, f) = hover();
        let w = wrench_from_rotors(&RotorThrusts::uniform(2.0846), &p).unwrap();
        assert_relative_eq!(w.thrust, 8.3384, epsilon = 1e-9);
        assert_relative_eq!(w.torque.norm(), 0.0, epsilon = 1e-15);
        let w = wrench_from_rotors(&f, &p).unwrap();
        assert_relative_eq!(w.torque.norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn roll_torque_hand_evaluation() {
        let p = QuadParams::default();
        let w = wrench_from_rotors(&RotorThrusts([3.0, 3.0, 1.0, 1.0]), &p).unwrap();
        // (0.15 / √2) · (3 + 3 − 1 − 1)
        assert_relative_eq!(w.torque.x, 0.42426406871192845, epsilon = 1e-12);
        assert_relative_eq!(w.torque.y, 0.0, epsilon = 1e-15);
        assert_relative_eq!(w.torque.z, 0.0, epsilon = 1e-15);
        assert_relative_eq!(w.thrust, 8.0);
    }

    #[test]
    fn zero_thrust_zero_wrench() {
        let w = wrench_from_rotors(&RotorThrusts::default(), &QuadParams::default()).unwrap();
        assert_eq!(w.thrust, 0.0);
        assert_eq!(w.torque, Vector3::zeros());
    }

    #[test]
    fn non_finite_thrust_rejected() {
        let p = QuadParams::default();
        let f = RotorThrusts([1.0, f64::NAN, 1.0, 1.0]);
        assert!(wrench_from_rotors(&f, &p).is_err());
        assert!(integrate_step(&QuadState::default(), &f, 0.01, &p).is_err());
    }

    #[test]
    fn hover_is_equilibrium() {
        let (p, f) = hover();
        let d = state_derivative(&QuadState::default(), &f, &p).unwrap();
        assert_relative_eq!(d.velocity.norm(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(d.body_rates.norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn free_fall_acceleration() {
        let p = QuadParams::default();
        let d = state_derivative(&QuadState::default(), &RotorThrusts::default(), &p).unwrap();
        assert_eq!(d.velocity, Vector3::new(0.0, 0.0, -9.81));
    }

    #[test]
    fn linear_drag_decelerates() {
        let (mut p, f) = hover();
        p.drag = [0.3, 0.0, 0.0];
        let mut x = QuadState::default();
        x.velocity = Vector3::new(1.0, 0.0, 0.0);
        let d = state_derivative(&x, &f, &p).unwrap();
        assert_relative_eq!(d.velocity, Vector3::new(-0.3, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn non_unit_quaternion_rejected() {
        let (p, f) = hover();
        let mut x = QuadState::default();
        x.attitude = UnitQuaternion::new_unchecked(Quaternion::new(1.1, 0.0, 0.0, 0.0));
        assert!(matches!(
            state_derivative(&x, &f, &p),
            Err(DynamicsError::NonUnitQuaternion { .. })
        ));
    }

    #[test]
    fn hover_step_is_stationary() {
        let (p, f) = hover();
        let x = QuadState::at_rest(Vector3::new(1.0, 2.0, 3.0));
        let y = integrate_step(&x, &f, 0.01, &p).unwrap();
        assert_relative_eq!(y.to_vector(), x.to_vector(), epsilon = 1e-10);
    }

    #[test]
    fn ballistic_drop_matches_closed_form() {
        let p = QuadParams::default();
        let y = integrate_step(&QuadState::default(), &RotorThrusts::default(), 0.1, &p).unwrap();
        assert_relative_eq!(y.position.z, -0.5 * 9.81 * 0.01, epsilon = 1e-6);
    }

    #[test]
    fn yaw_torque_only_moves_yaw_rate() {
        let p = QuadParams::default();
        let f = RotorThrusts([2.5, 1.5, 2.5, 1.5]);
        let y = integrate_step(&QuadState::default(), &f, 1e-3, &p).unwrap();
        assert!(y.body_rates.z.abs() > 1e-3);
        assert_relative_eq!(y.body_rates.x, 0.0, epsilon = 1e-14);
        assert_relative_eq!(y.body_rates.y, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn rejects_bad_step() {
        let (p, f) = hover();
        assert!(integrate_step(&QuadState::default(), &f, 0.0, &p).is_err());
        assert!(integrate_step(&QuadState::default(), &f, -1.0, &p).is_err());
    }

    fn random_state(seed: u64) -> (StateVector, Vector4<f64>) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut x = StateVector::zeros();
        for i in 0..13 {
            x[i] = rng.gen_range(-2.0..2.0);
        }
        let qn = x.fixed_rows::<4>(3).norm();
        for i in 3..7 {
            x[i] /= qn;
        }
        let f = Vector4::from_fn(|_, _| rng.gen_range(0.0..7.0));
        (x, f)
    }

    #[test]
    fn jacobians_match_central_differences() {
        let mut p = QuadParams::default();
        p.drag = [0.3, 0.2, 0.1];
        for seed in 0..20 {
            let (x, f) = random_state(seed);
            let (a, b) = rhs_jacobians(&x, &f, &p);
            let h = 1e-6;
            for j in 0..13 {
                let mut xp = x;
                let mut xm = x;
                xp[j] += h;
                xm[j] -= h;
                let fd = (rhs(&xp, &f, &p) - rhs(&xm, &f, &p)) / (2.0 * h);
                for i in 0..13 {
                    assert!((fd[i] - a[(i, j)]).abs() <= 1e-4 * (1.0 + fd[i].abs()), "A[{i},{j}]");
                }
            }
            for j in 0..4 {
                let mut fp = f;
                let mut fm = f;
                fp[j] += h;
                fm[j] -= h;
                let fd = (rhs(&x, &fp, &p) - rhs(&x, &fm, &p)) / (2.0 * h);
                for i in 0..13 {
                    assert!((fd[i] - b[(i, j)]).abs() <= 1e-4 * (1.0 + fd[i].abs()), "B[{i},{j}]");
                }
            }
        }
    }

    #[test]
    fn rotation_matrix_matches_nalgebra() {
        let q = UnitQuaternion::from_euler_angles(0.3, -0.2, 1.1);
        let v = Vector4::new(q.w, q.i, q.j, q.k);
        assert_relative_eq!(rotation_matrix(&v), *q.to_rotation_matrix().matrix(), epsilon = 1e-12);
    }
}
