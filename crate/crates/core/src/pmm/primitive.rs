//! Closed-form time-optimal motion primitives for a point mass with bounded
//! acceleration and velocity, and their three-axis synchronization.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::PmmError;

const EPS: f64 = 1e-12;
const SYNC_TOL: f64 = 1e-9;
const SYNC_MAX_ITER: usize = 200;
const ALPHA_MIN: f64 = 1e-9;

/// Per-axis acceleration and velocity limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisBounds {
    pub u_lo: f64,
    pub u_hi: f64,
    pub v_lo: f64,
    pub v_hi: f64,
}

impl AxisBounds {
    pub fn symmetric(u: f64, v: f64) -> Self {
        Self { u_lo: -u, u_hi: u, v_lo: -v, v_hi: v }
    }

    pub fn unlimited_velocity(u: f64) -> Self {
        Self::symmetric(u, f64::INFINITY)
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self { u_lo: self.u_lo * alpha, u_hi: self.u_hi * alpha, ..*self }
    }
}

/// One axis of a bang-singular-bang profile: acceleration `first_accel` on
/// `[0, t1]`, zero on `[t1, t2]`, `last_accel` on `[t2, total]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PmmAxisPrimitive {
    pub p0: f64,
    pub v0: f64,
    pub p1: f64,
    pub v1: f64,
    pub bounds: AxisBounds,
    pub first_accel: f64,
    pub last_accel: f64,
    pub t1: f64,
    pub t2: f64,
    pub total: f64,
    /// Acceleration scale applied to `bounds` (1 for the unscaled optimum).
    pub alpha: f64,
    /// Set when the duration had to be matched with the time-constrained
    /// fallback instead of scaled bounds.
    pub fallback: bool,
}

impl PmmAxisPrimitive {
    pub fn starts_with_upper(&self) -> bool {
        self.first_accel > 0.0
    }

    /// Position, velocity and acceleration at time `t` (clamped to `[0, total]`,
    /// constant velocity after the end).
    pub fn state(&self, t: f64) -> (f64, f64, f64) {
        let t = t.max(0.0);
        let (a1, a3) = (self.first_accel, self.last_accel);
        let t1 = self.t1.min(t);
        let mut p = self.p0 + self.v0 * t1 + 0.5 * a1 * t1 * t1;
        let mut v = self.v0 + a1 * t1;
        if t <= self.t1 {
            return (p, v, a1);
        }
        let tc = self.t2.min(t) - self.t1;
        p += v * tc;
        if t <= self.t2 {
            return (p, v, 0.0);
        }
        let t3 = self.total.min(t) - self.t2;
        p += v * t3 + 0.5 * a3 * t3 * t3;
        v += a3 * t3;
        if t <= self.total {
            return (p, v, a3);
        }
        (p + v * (t - self.total), v, 0.0)
    }

    fn resting(p: f64, bounds: AxisBounds, total: f64) -> Self {
        Self {
            p0: p,
            v0: 0.0,
            p1: p,
            v1: 0.0,
            bounds,
            first_accel: 0.0,
            last_accel: 0.0,
            t1: 0.0,
            t2: total,
            total,
            alpha: 0.0,
            fallback: false,
        }
    }
}

fn check_bounds(b: &AxisBounds) -> Result<(), PmmError> {
    let ok = b.u_lo < 0.0 && b.u_hi > 0.0 && b.v_lo < 0.0 && b.v_hi > 0.0 && b.u_lo.is_finite() && b.u_hi.is_finite();
    if ok { Ok(()) } else { Err(PmmError::BadBounds) }
}

/// Switching structure of a bang-(cruise)-bang profile.
#[derive(Debug, Clone, Copy)]
struct Profile {
    a: f64,
    b: f64,
    t1: f64,
    tc: f64,
    t3: f64,
}

impl Profile {
    fn total(&self) -> f64 {
        self.t1 + self.tc + self.t3
    }
}

fn check_inputs(p0: f64, v0: f64, p1: f64, v1: f64, bounds: &AxisBounds) -> Result<(), PmmError> {
    check_bounds(bounds)?;
    if ![p0, v0, p1, v1].iter().all(|x| x.is_finite()) {
        return Err(PmmError::NonFinite);
    }
    for v in [v0, v1] {
        if v < bounds.v_lo - EPS || v > bounds.v_hi + EPS {
            return Err(PmmError::InfeasibleVelocity { velocity: v });
        }
    }
    Ok(())
}

/// Both switching orders (upper bound first / lower bound first) in closed
/// form; the fastest feasible candidate wins.
fn fastest_profile(dp: f64, v0: f64, v1: f64, bounds: &AxisBounds) -> Option<Profile> {
    let mut best: Option<Profile> = None;
    for (a, b) in [(bounds.u_hi, bounds.u_lo), (bounds.u_lo, bounds.u_hi)] {
        let (ia, ib) = (1.0 / a, 1.0 / b);
        // peak (or valley) velocity of the pure bang-bang profile
        let sq = (dp + 0.5 * (v0 * v0 * ia - v1 * v1 * ib)) / (0.5 * (ia - ib));
        if sq < -1e-9 {
            continue;
        }
        let root = sq.max(0.0).sqrt();
        for vp in [root, -root] {
            let t1 = (vp - v0) * ia;
            let t3 = (v1 - vp) * ib;
            if t1 < -1e-9 || t3 < -1e-9 {
                continue;
            }
            let limit = if a > 0.0 { bounds.v_hi } else { bounds.v_lo };
            let exceeds = if a > 0.0 { vp > limit } else { vp < limit };
            let cand = if exceeds {
                // clip at the velocity limit and cruise
                let t1 = (limit - v0) * ia;
                let t3 = (v1 - limit) * ib;
                let d1 = (limit * limit - v0 * v0) * 0.5 * ia;
                let d3 = (v1 * v1 - limit * limit) * 0.5 * ib;
                let tc = (dp - d1 - d3) / limit;
                if t1 < -1e-9 || t3 < -1e-9 || tc < -1e-9 {
                    continue;
                }
                Profile { a, b, t1: t1.max(0.0), tc: tc.max(0.0), t3: t3.max(0.0) }
            } else {
                Profile { a, b, t1: t1.max(0.0), tc: 0.0, t3: t3.max(0.0) }
            };
            if best.is_none_or(|bst| cand.total() < bst.total()) {
                best = Some(cand);
            }
        }
    }
    best
}

/// [`axis_min_time`] from one start state to many end velocities, written
/// without data-dependent branches so it vectorizes. Infeasible entries are
/// `INFINITY`. Inputs are assumed valid (checked by the caller).
pub(crate) fn axis_min_times_row(dp: f64, v0: f64, v1s: &[f64], bounds: &AxisBounds, out: &mut [f64]) {
    const TOL: f64 = -1e-9;
    for (o, &v1) in out.iter_mut().zip(v1s) {
        let mut best = f64::INFINITY;
        for (a, b, limit) in [(bounds.u_hi, bounds.u_lo, bounds.v_hi), (bounds.u_lo, bounds.u_hi, bounds.v_lo)] {
            let (ia, ib) = (1.0 / a, 1.0 / b);
            let sq = (dp + 0.5 * (v0 * v0 * ia - v1 * v1 * ib)) / (0.5 * (ia - ib));
            let root = sq.max(0.0).sqrt();
            let t1c = (limit - v0) * ia;
            let t3c = (v1 - limit) * ib;
            let d1 = (limit * limit - v0 * v0) * 0.5 * ia;
            let d3 = (v1 * v1 - limit * limit) * 0.5 * ib;
            let tc = (dp - d1 - d3) / limit;
            let clipped_ok = t1c >= TOL && t3c >= TOL && tc >= TOL;
            let clipped = if clipped_ok { t1c.max(0.0) + tc.max(0.0) + t3c.max(0.0) } else { f64::INFINITY };
            for vp in [root, -root] {
                let t1 = (vp - v0) * ia;
                let t3 = (v1 - vp) * ib;
                let ok = sq >= TOL && t1 >= TOL && t3 >= TOL;
                let exceeds = if a > 0.0 { vp > limit } else { vp < limit };
                let plain = t1.max(0.0) + t3.max(0.0);
                let t = if !ok { f64::INFINITY } else if exceeds { clipped } else { plain };
                best = best.min(t);
            }
        }
        *o = if dp == 0.0 && v0 == v1 { 0.0 } else { best };
    }
}

/// Minimum-time profile from `(p0, v0)` to `(p1, v1)`.
pub fn axis_primitive(p0: f64, v0: f64, p1: f64, v1: f64, bounds: AxisBounds) -> Result<PmmAxisPrimitive, PmmError> {
    check_inputs(p0, v0, p1, v1, &bounds)?;
    let base = PmmAxisPrimitive {
        p0,
        v0,
        p1,
        v1,
        bounds,
        first_accel: 0.0,
        last_accel: 0.0,
        t1: 0.0,
        t2: 0.0,
        total: 0.0,
        alpha: 1.0,
        fallback: false,
    };
    let dp = p1 - p0;
    if dp == 0.0 && v0 == v1 {
        return Ok(base);
    }
    let f = fastest_profile(dp, v0, v1, &bounds).ok_or(PmmError::NoSolution)?;
    Ok(PmmAxisPrimitive { first_accel: f.a, last_accel: f.b, t1: f.t1, t2: f.t1 + f.tc, total: f.total(), ..base })
}

/// Duration of the optimal profile, or `None` when infeasible.
pub fn axis_min_time(p0: f64, v0: f64, p1: f64, v1: f64, bounds: AxisBounds) -> Option<f64> {
    check_inputs(p0, v0, p1, v1, &bounds).ok()?;
    let dp = p1 - p0;
    if dp == 0.0 && v0 == v1 {
        return Some(0.0);
    }
    fastest_profile(dp, v0, v1, &bounds).map(|f| f.total())
}

/// Profile of exactly duration `duration` using a symmetric bang-bang with
/// signed acceleration `a` (first phase `a`, second `-a`), solved in closed
/// form. Velocity limits are not enforced.
pub fn time_constrained_primitive(p0: f64, v0: f64, p1: f64, v1: f64, duration: f64, bounds: AxisBounds) -> PmmAxisPrimitive {
    let t = duration;
    let dv = v1 - v0;
    let d = p1 - p0 - v0 * t;
    // a² T² + a (2 Δv T − 4 D) − Δv² = 0
    let qa = t * t;
    let qb = 2.0 * dv * t - 4.0 * d;
    let qc = -dv * dv;
    let disc = (qb * qb - 4.0 * qa * qc).max(0.0).sqrt();
    let roots = [(-qb + disc) / (2.0 * qa), (-qb - disc) / (2.0 * qa)];
    let mut chosen = None;
    for a in roots {
        if a.abs() < EPS {
            continue;
        }
        let s = dv / a;
        if s.abs() <= t + 1e-9 {
            chosen = Some((a, 0.5 * (t + s)));
            break;
        }
    }
    let (a, t1) = match chosen {
        Some((a, t1)) => (a, t1.clamp(0.0, t)),
        None => (0.0, t), // constant velocity exactly fits
    };
    let umax = bounds.u_hi.min(-bounds.u_lo);
    PmmAxisPrimitive {
        p0,
        v0,
        p1,
        v1,
        bounds,
        first_accel: a,
        last_accel: -a,
        t1,
        t2: t1,
        total: t,
        alpha: a.abs() / umax,
        fallback: true,
    }
}

/// Stretch a single axis to `duration >= its optimum` by scaling its
/// acceleration bounds with `alpha ∈ (0, 1]`, found by bisection.
pub fn stretch_axis(p0: f64, v0: f64, p1: f64, v1: f64, bounds: AxisBounds, duration: f64) -> Result<PmmAxisPrimitive, PmmError> {
    let fastest = axis_primitive(p0, v0, p1, v1, bounds)?;
    if fastest.total >= duration - SYNC_TOL {
        return Ok(fastest);
    }
    if p0 == p1 && v0 == 0.0 && v1 == 0.0 {
        return Ok(PmmAxisPrimitive::resting(p0, bounds, duration));
    }
    let time_at = |alpha: f64| axis_primitive(p0, v0, p1, v1, bounds.scaled(alpha)).map(|p| p.total).unwrap_or(f64::INFINITY);
    if time_at(ALPHA_MIN) < duration {
        return Ok(time_constrained_primitive(p0, v0, p1, v1, duration, bounds));
    }
    // T(alpha) is non-increasing: smaller bounds shrink the feasible set.
    let (mut lo, mut hi) = (ALPHA_MIN, 1.0);
    for _ in 0..SYNC_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if time_at(mid) > duration {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    let prim = axis_primitive(p0, v0, p1, v1, bounds.scaled(hi))?;
    if (prim.total - duration).abs() > 1e-7 {
        return Ok(time_constrained_primitive(p0, v0, p1, v1, duration, bounds));
    }
    Ok(PmmAxisPrimitive { bounds, alpha: hi, ..prim })
}

/// Three synchronized axes sharing one duration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PmmPrimitive3 {
    pub axes: [PmmAxisPrimitive; 3],
    pub duration: f64,
}

impl PmmPrimitive3 {
    pub fn state(&self, t: f64) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        let mut p = Vector3::zeros();
        let mut v = Vector3::zeros();
        let mut a = Vector3::zeros();
        for (i, ax) in self.axes.iter().enumerate() {
            let (pi, vi, ai) = ax.state(t);
            p[i] = pi;
            v[i] = vi;
            a[i] = ai;
        }
        (p, v, a)
    }

    pub fn end_state(&self) -> (Vector3<f64>, Vector3<f64>) {
        let (p, v, _) = self.state(self.duration);
        (p, v)
    }

    pub fn any_fallback(&self) -> bool {
        self.axes.iter().any(|a| a.fallback)
    }
}

/// Unsynchronized minimum duration `max(T_x, T_y, T_z)`.
pub fn min_duration(
    p0: &Vector3<f64>,
    v0: &Vector3<f64>,
    p1: &Vector3<f64>,
    v1: &Vector3<f64>,
    bounds: &[AxisBounds; 3],
) -> Option<f64> {
    let mut t = 0.0f64;
    for i in 0..3 {
        t = t.max(axis_min_time(p0[i], v0[i], p1[i], v1[i], bounds[i])?);
    }
    Some(t)
}

/// Point-to-point primitive with all axes ending together at the slowest
/// axis' optimal time.
pub fn synchronize_axes(
    p0: &Vector3<f64>,
    v0: &Vector3<f64>,
    p1: &Vector3<f64>,
    v1: &Vector3<f64>,
    bounds: &[AxisBounds; 3],
) -> Result<PmmPrimitive3, PmmError> {
    let mut fastest = Vec::with_capacity(3);
    for i in 0..3 {
        fastest.push(axis_primitive(p0[i], v0[i], p1[i], v1[i], bounds[i])?);
    }
    let duration = fastest.iter().map(|a| a.total).fold(0.0, f64::max);
    let mut axes = [fastest[0], fastest[1], fastest[2]];
    for i in 0..3 {
        if fastest[i].total < duration - SYNC_TOL {
            axes[i] = stretch_axis(p0[i], v0[i], p1[i], v1[i], bounds[i], duration)?;
        }
    }
    Ok(PmmPrimitive3 { axes, duration })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rest_to_rest_bang_bang() {
        let p = axis_primitive(0.0, 0.0, 15.0, 0.0, AxisBounds::unlimited_velocity(20.0)).unwrap();
        assert_relative_eq!(p.total, 2.0 * (15.0f64 / 20.0).sqrt(), epsilon = 1e-12);
        assert_relative_eq!(p.t1, 0.8660254037844386, epsilon = 1e-12);
        assert_relative_eq!(p.t2, 0.8660254037844386, epsilon = 1e-12);
        assert!(p.starts_with_upper());
        let (pe, ve, _) = p.state(p.total);
        assert_relative_eq!(pe, 15.0, epsilon = 1e-9);
        assert_relative_eq!(ve, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn rest_to_rest_with_cruise() {
        let p = axis_primitive(0.0, 0.0, 15.0, 0.0, AxisBounds::symmetric(20.0, 5.0)).unwrap();
        assert_relative_eq!(p.t1, 0.25, epsilon = 1e-12);
        assert_relative_eq!(p.t2, 3.0, epsilon = 1e-12);
        assert_relative_eq!(p.total, 3.25, epsilon = 1e-12);
        assert_relative_eq!(p.state(p.t1).0, 0.625, epsilon = 1e-12);
    }

    #[test]
    fn zero_motion_zero_time() {
        let p = axis_primitive(2.0, 0.0, 2.0, 0.0, AxisBounds::symmetric(20.0, 5.0)).unwrap();
        assert_eq!(p.total, 0.0);
    }

    #[test]
    fn boundary_velocity_outside_bounds() {
        let r = axis_primitive(0.0, 6.0, 1.0, 0.0, AxisBounds::symmetric(20.0, 5.0));
        assert!(matches!(r, Err(PmmError::InfeasibleVelocity { .. })));
    }

    #[test]
    fn negative_direction_starts_with_lower() {
        let p = axis_primitive(0.0, 0.0, -4.0, 0.0, AxisBounds::unlimited_velocity(10.0)).unwrap();
        assert!(!p.starts_with_upper());
        assert_relative_eq!(p.total, 2.0 * (4.0f64 / 10.0).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn overshoot_requires_reversal() {
        // moving fast towards a close target with zero end velocity
        let b = AxisBounds::unlimited_velocity(10.0);
        let p = axis_primitive(0.0, 10.0, 1.0, 0.0, b).unwrap();
        let (pe, ve, _) = p.state(p.total);
        assert_relative_eq!(pe, 1.0, epsilon = 1e-9);
        assert_relative_eq!(ve, 0.0, epsilon = 1e-9);
        // braking takes 1 s and covers 5 m, so the profile must come back
        assert!(p.total > 1.0);
    }

    #[test]
    fn stretch_rest_to_rest_alpha_quarter() {
        // 1 s optimum: Δp = u / 4 with u = 20
        let b = AxisBounds::unlimited_velocity(20.0);
        let base = axis_primitive(0.0, 0.0, 5.0, 0.0, b).unwrap();
        assert_relative_eq!(base.total, 1.0, epsilon = 1e-12);
        let s = stretch_axis(0.0, 0.0, 5.0, 0.0, b, 2.0).unwrap();
        assert!(!s.fallback);
        assert_relative_eq!(s.alpha, 0.25, epsilon = 1e-6);
        assert_relative_eq!(s.total, 2.0, epsilon = 1e-6);
    }

    #[test]
    fn equal_axes_keep_alpha_one() {
        let b = [AxisBounds::unlimited_velocity(20.0); 3];
        let p = synchronize_axes(&Vector3::zeros(), &Vector3::zeros(), &Vector3::new(5.0, 5.0, -5.0), &Vector3::zeros(), &b)
            .unwrap();
        for a in &p.axes {
            assert_eq!(a.alpha, 1.0);
            assert_relative_eq!(a.total, p.duration, epsilon = 1e-12);
        }
    }

    #[test]
    fn resting_axis_stays_put() {
        let b = [AxisBounds::unlimited_velocity(20.0); 3];
        let p = synchronize_axes(&Vector3::zeros(), &Vector3::zeros(), &Vector3::new(5.0, 0.0, 0.0), &Vector3::zeros(), &b)
            .unwrap();
        for k in 0..=10 {
            let (pos, vel, _) = p.state(p.duration * k as f64 / 10.0);
            assert_eq!(pos.y, 0.0);
            assert_eq!(vel.z, 0.0);
        }
    }

    #[test]
    fn coasting_axis_uses_fallback() {
        // y must move 1 m at 1 m/s in and out; natural time 1 s with zero
        // accel, and scaled bounds cannot make it slower than that.
        let b = [AxisBounds::unlimited_velocity(20.0); 3];
        let p = synchronize_axes(
            &Vector3::zeros(),
            &Vector3::new(0.0, 1.0, 0.0),
            &Vector3::new(20.0, 1.0, 0.0),
            &Vector3::new(0.0, 1.0, 0.0),
            &b,
        )
        .unwrap();
        let (pe, ve) = p.end_state();
        assert_relative_eq!(pe, Vector3::new(20.0, 1.0, 0.0), epsilon = 1e-7);
        assert_relative_eq!(ve, Vector3::new(0.0, 1.0, 0.0), epsilon = 1e-7);
        assert!(p.axes[1].fallback);
    }

    #[test]
    fn time_constrained_closed_form_hits_target() {
        let b = AxisBounds::unlimited_velocity(20.0);
        let p = time_constrained_primitive(1.0, 3.0, 4.0, -2.0, 2.5, b);
        let (pe, ve, _) = p.state(2.5);
        assert_relative_eq!(pe, 4.0, epsilon = 1e-9);
        assert_relative_eq!(ve, -2.0, epsilon = 1e-9);
    }

    #[test]
    fn row_times_match_scalar() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let b = AxisBounds { u_lo: -rng.gen_range(2.0..30.0), u_hi: rng.gen_range(2.0..30.0), v_lo: -rng.gen_range(1.0..20.0), v_hi: rng.gen_range(1.0..20.0) };
            let dp = if rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(-20.0..20.0) };
            let v0 = rng.gen_range(b.v_lo..b.v_hi);
            let mut v1s: Vec<f64> = (0..40).map(|_| rng.gen_range(b.v_lo..b.v_hi)).collect();
            v1s.push(v0);
            let mut out = vec![0.0; v1s.len()];
            axis_min_times_row(dp, v0, &v1s, &b, &mut out);
            for (&v1, &t) in v1s.iter().zip(&out) {
                match axis_min_time(0.0, v0, dp, v1, b) {
                    Some(s) => assert!((s - t).abs() <= 1e-12 * (1.0 + s), "{s} vs {t}"),
                    None => assert!(t.is_infinite()),
                }
            }
        }
    }
}
