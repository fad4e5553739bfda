//! Arc-length parameterized 3D paths.
//!
//! A path given either as a continuous curve or as a sequence of points is
//! resampled at (approximately) constant arc-length spacing. Every sample
//! stores its arc length, position and unit tangent, and consecutive samples
//! are joined by cubic Hermite segments, so the resulting [`ArcSpline`] is C¹
//! and has `‖dp/dθ‖ ≈ 1` everywhere.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use thiserror::Error;

pub const DEFAULT_SEGMENT_LEN: f64 = 0.25;

const BISECTION_TOL: f64 = 1e-6;
const BISECTION_MAX_ITER: usize = 60;
const DUPLICATE_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum PathError {
    #[error("segment length must be positive, got {0}")]
    BadSegmentLength(f64),
    #[error("path length {length} is shorter than the segment length {segment_len}")]
    Degenerate { length: f64, segment_len: f64 },
    #[error("need at least two distinct points, got {0}")]
    TooFewPoints(usize),
    #[error("arc lengths must be strictly increasing (sample {index})")]
    NonMonotone { index: usize },
    #[error("non-finite value in path input")]
    NonFinite,
    #[error("velocity list length {got} does not match point count {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// A smooth curve `p(t)` on a bounded parameter interval.
pub trait ParametricCurve {
    fn domain(&self) -> (f64, f64);
    fn position(&self, t: f64) -> Vector3<f64>;
    fn velocity(&self, t: f64) -> Vector3<f64>;
}

/// One resampled point: arc length, position and unit tangent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub theta: f64,
    pub position: Vector3<f64>,
    pub tangent: Vector3<f64>,
}

/// Path to be reparameterized by arc length.
pub enum PathInput<'a> {
    Curve(&'a dyn ParametricCurve),
    /// Points in traversal order, optionally with velocities whose directions
    /// become the tangents.
    Points { points: &'a [Vector3<f64>], velocities: Option<&'a [Vector3<f64>]> },
}

pub fn resample_equidistant(input: PathInput<'_>, segment_len: f64) -> Result<Vec<PathSample>, PathError> {
    if !(segment_len > 0.0) || !segment_len.is_finite() {
        return Err(PathError::BadSegmentLength(segment_len));
    }
    match input {
        PathInput::Curve(c) => resample_curve(c, segment_len),
        PathInput::Points { points, velocities } => resample_points(points, velocities, segment_len),
    }
}

/// Gauss–Legendre 5-point nodes and weights on [-1, 1].
const GL_NODES: [f64; 5] = [
    0.0,
    -0.538_469_310_105_683_1,
    0.538_469_310_105_683_1,
    -0.906_179_845_938_664,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
    0.236_926_885_056_189_1,
];

/// Numerical arc length of `curve` over `[a, b]` with composite 5-point
/// Gauss–Legendre on panels no wider than `panel`.
pub fn arc_length(curve: &dyn ParametricCurve, a: f64, b: f64, panel: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let n = ((b - a) / panel).ceil().max(1.0) as usize;
    let w = (b - a) / n as f64;
    let mut total = 0.0;
    for i in 0..n {
        let mid = a + (i as f64 + 0.5) * w;
        for (x, wt) in GL_NODES.iter().zip(GL_WEIGHTS) {
            total += wt * curve.velocity(mid + 0.5 * w * x).norm();
        }
    }
    total * 0.5 * w
}

fn resample_curve(curve: &dyn ParametricCurve, segment_len: f64) -> Result<Vec<PathSample>, PathError> {
    let (t0, t1) = curve.domain();
    if !(t0.is_finite() && t1.is_finite()) || t1 <= t0 {
        return Err(PathError::NonFinite);
    }
    let panel = (t1 - t0) / 1024.0;
    let length = arc_length(curve, t0, t1, panel);
    if !length.is_finite() {
        return Err(PathError::NonFinite);
    }
    if length < segment_len {
        return Err(PathError::Degenerate { length, segment_len });
    }

    let tangent_at = |t: f64, fallback: Vector3<f64>| {
        let v = curve.velocity(t);
        let n = v.norm();
        if n > 1e-12 {
            v / n
        } else {
            // Zero speed (e.g. starting from rest): look slightly ahead.
            let h = 1e-4 * (t1 - t0);
            let ta = (t + h).min(t1);
            let tb = (t - h).max(t0);
            let d = curve.position(ta) - curve.position(tb);
            if d.norm() > 1e-15 {
                d.normalize()
            } else {
                fallback
            }
        }
    };

    let mut samples = Vec::new();
    let mut t = t0;
    let mut theta = 0.0;
    let mut last_tangent = Vector3::x();
    let first_tangent = tangent_at(t0, last_tangent);
    samples.push(PathSample { theta, position: curve.position(t0), tangent: first_tangent });
    last_tangent = first_tangent;

    loop {
        let remaining = arc_length(curve, t, t1, panel);
        if remaining < segment_len + BISECTION_TOL {
            if remaining > 1e-9 {
                let tan = tangent_at(t1, last_tangent);
                samples.push(PathSample { theta: theta + remaining, position: curve.position(t1), tangent: tan });
            }
            break;
        }
        // bracket [t, hi] with arc(t, hi) >= segment_len
        let speed = curve.velocity(t).norm();
        let mut step = if speed > 1e-9 { segment_len / speed } else { (t1 - t0) / 100.0 };
        let mut hi = (t + step).min(t1);
        while arc_length(curve, t, hi, panel) < segment_len && hi < t1 {
            step *= 2.0;
            hi = (t + step).min(t1);
        }
        let mut lo = t;
        let mut mid = hi;
        for _ in 0..BISECTION_MAX_ITER {
            mid = 0.5 * (lo + hi);
            let s = arc_length(curve, t, mid, panel);
            if (s - segment_len).abs() < BISECTION_TOL {
                break;
            }
            if s < segment_len {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        t = mid;
        theta += segment_len;
        last_tangent = tangent_at(t, last_tangent);
        samples.push(PathSample { theta, position: curve.position(t), tangent: last_tangent });
    }
    Ok(samples)
}

fn resample_points(
    points: &[Vector3<f64>],
    velocities: Option<&[Vector3<f64>]>,
    segment_len: f64,
) -> Result<Vec<PathSample>, PathError> {
    if let Some(v) = velocities {
        if v.len() != points.len() {
            return Err(PathError::LengthMismatch { expected: points.len(), got: v.len() });
        }
    }
    if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
        return Err(PathError::NonFinite);
    }
    // drop repeated consecutive points
    let mut pts: Vec<Vector3<f64>> = Vec::with_capacity(points.len());
    let mut vels: Vec<Vector3<f64>> = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        if pts.last().is_some_and(|q| (p - q).norm() <= DUPLICATE_EPS) {
            continue;
        }
        pts.push(*p);
        if let Some(v) = velocities {
            vels.push(v[i]);
        }
    }
    if pts.len() < 2 {
        return Err(PathError::TooFewPoints(pts.len()));
    }
    let mut cum = Vec::with_capacity(pts.len());
    cum.push(0.0);
    for w in pts.windows(2) {
        cum.push(cum.last().unwrap() + (w[1] - w[0]).norm());
    }
    let length = *cum.last().unwrap();
    if length < segment_len {
        return Err(PathError::Degenerate { length, segment_len });
    }

    let mut thetas: Vec<f64> = Vec::new();
    let count = (length / segment_len + 1e-9).floor() as usize;
    for k in 0..=count {
        thetas.push((k as f64 * segment_len).min(length));
    }
    if length - thetas.last().unwrap() > 1e-9 {
        thetas.push(length);
    }

    let interp = |s: f64| -> (Vector3<f64>, Option<Vector3<f64>>) {
        let i = cum.partition_point(|&c| c <= s).clamp(1, pts.len() - 1) - 1;
        let span = cum[i + 1] - cum[i];
        let a = if span > 0.0 { ((s - cum[i]) / span).clamp(0.0, 1.0) } else { 0.0 };
        let p = pts[i] + (pts[i + 1] - pts[i]) * a;
        let v = (!vels.is_empty()).then(|| vels[i] + (vels[i + 1] - vels[i]) * a);
        (p, v)
    };

    let raw: Vec<(Vector3<f64>, Option<Vector3<f64>>)> = thetas.iter().map(|&s| interp(s)).collect();
    let n = raw.len();
    let mut samples = Vec::with_capacity(n);
    for k in 0..n {
        let chord = {
            let (a, b) = match k {
                0 => (0, 1),
                k if k == n - 1 => (n - 2, n - 1),
                k => (k - 1, k + 1),
            };
            raw[b].0 - raw[a].0
        };
        let tangent = match raw[k].1 {
            Some(v) if v.norm() > 1e-9 => v.normalize(),
            _ => chord.normalize(),
        };
        samples.push(PathSample { theta: thetas[k], position: raw[k].0, tangent });
    }
    Ok(samples)
}

/// Cubic `a + b s + c s² + d s³` in the local arc length `s = θ - θ_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubicSegment {
    pub coeffs: [Vector3<f64>; 4],
}

impl CubicSegment {
    fn hermite(p0: Vector3<f64>, t0: Vector3<f64>, p1: Vector3<f64>, t1: Vector3<f64>, h: f64) -> Self {
        let c = ((p1 - p0) * (3.0 / h) - t0 * 2.0 - t1) / h;
        let d = ((p0 - p1) * (2.0 / h) + t0 + t1) / (h * h);
        Self { coeffs: [p0, t0, c, d] }
    }

    pub fn position(&self, s: f64) -> Vector3<f64> {
        let [a, b, c, d] = self.coeffs;
        a + (b + (c + d * s) * s) * s
    }

    pub fn first(&self, s: f64) -> Vector3<f64> {
        let [_, b, c, d] = self.coeffs;
        b + (c * 2.0 + d * (3.0 * s)) * s
    }

    pub fn second(&self, s: f64) -> Vector3<f64> {
        let [_, _, c, d] = self.coeffs;
        c * 2.0 + d * (6.0 * s)
    }
}

/// Result of evaluating the spline at some arc length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPoint {
    pub position: Vector3<f64>,
    /// Exactly unit length.
    pub tangent: Vector3<f64>,
    /// `θ` was outside `[0, L]` on an open path and got clamped.
    pub clamped: bool,
}

/// Raw derivatives with respect to `θ` (zero beyond the ends of an open path).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathDerivatives {
    pub position: Vector3<f64>,
    pub first: Vector3<f64>,
    pub second: Vector3<f64>,
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcSpline {
    knots: Vec<f64>,
    segments: Vec<CubicSegment>,
    samples: Vec<PathSample>,
    closed: bool,
}

pub fn fit_splines(samples: &[PathSample]) -> Result<ArcSpline, PathError> {
    if samples.len() < 2 {
        return Err(PathError::TooFewPoints(samples.len()));
    }
    for (i, s) in samples.iter().enumerate() {
        let finite = s.theta.is_finite() && s.position.iter().chain(s.tangent.iter()).all(|c| c.is_finite());
        if !finite {
            return Err(PathError::NonFinite);
        }
        if i > 0 && s.theta <= samples[i - 1].theta {
            return Err(PathError::NonMonotone { index: i });
        }
    }
    let theta0 = samples[0].theta;
    let samples: Vec<PathSample> = samples
        .iter()
        .map(|s| PathSample { theta: s.theta - theta0, position: s.position, tangent: s.tangent.normalize() })
        .collect();
    let segments = samples
        .windows(2)
        .map(|w| CubicSegment::hermite(w[0].position, w[0].tangent, w[1].position, w[1].tangent, w[1].theta - w[0].theta))
        .collect();
    let first = &samples[0];
    let last = samples.last().unwrap();
    let length = last.theta;
    let closed = (last.position - first.position).norm() < 1e-6 * length.max(1.0)
        && last.tangent.dot(&first.tangent) > 1.0 - 1e-6;
    Ok(ArcSpline { knots: samples.iter().map(|s| s.theta).collect(), segments, samples, closed })
}

impl ArcSpline {
    pub fn from_input(input: PathInput<'_>, segment_len: f64) -> Result<Self, PathError> {
        fit_splines(&resample_equidistant(input, segment_len)?)
    }

    /// Straight segment from `a` to `b`.
    pub fn line(a: Vector3<f64>, b: Vector3<f64>, segment_len: f64) -> Result<Self, PathError> {
        Self::from_input(PathInput::Points { points: &[a, b], velocities: None }, segment_len)
    }

    pub fn length(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn with_closed(mut self, closed: bool) -> Self {
        self.closed = closed;
        self
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn samples(&self) -> &[PathSample] {
        &self.samples
    }

    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    /// Wraps (closed) or clamps (open) `θ` into `[0, L]`.
    pub fn normalize_theta(&self, theta: f64) -> (f64, bool) {
        let l = self.length();
        if self.closed {
            (theta.rem_euclid(l), false)
        } else if theta < 0.0 {
            (0.0, true)
        } else if theta > l {
            (l, true)
        } else {
            (theta, false)
        }
    }

    /// Segment index and local offset for an in-range `θ`.
    pub fn locate(&self, theta: f64) -> (usize, f64) {
        let i = self.knots.partition_point(|&k| k <= theta).clamp(1, self.knots.len() - 1) - 1;
        (i, theta - self.knots[i])
    }

    pub fn segment(&self, index: usize) -> &CubicSegment {
        &self.segments[index]
    }

    pub fn eval(&self, theta: f64) -> PathPoint {
        let (th, clamped) = self.normalize_theta(theta);
        let (i, s) = self.locate(th);
        let seg = &self.segments[i];
        let d = seg.first(s);
        let n = d.norm();
        let tangent = if n > 1e-12 { d / n } else { self.samples[i].tangent };
        PathPoint { position: seg.position(s), tangent, clamped }
    }

    pub fn position(&self, theta: f64) -> Vector3<f64> {
        self.eval(theta).position
    }

    pub fn derivatives(&self, theta: f64) -> PathDerivatives {
        let (th, clamped) = self.normalize_theta(theta);
        let (i, s) = self.locate(th);
        let seg = &self.segments[i];
        if clamped {
            PathDerivatives { position: seg.position(s), first: Vector3::zeros(), second: Vector3::zeros(), clamped }
        } else {
            PathDerivatives { position: seg.position(s), first: seg.first(s), second: seg.second(s), clamped }
        }
    }

    /// Arc length of the closest point on the spline, by a dense grid search
    /// followed by golden-section refinement.
    pub fn project(&self, p: &Vector3<f64>, grid: f64) -> f64 {
        let l = self.length();
        let n = (l / grid).ceil().max(1.0) as usize;
        let dist = |th: f64| (self.position(th) - p).norm_squared();
        let mut best = (0.0, dist(0.0));
        for k in 1..=n {
            let th = (k as f64 * grid).min(l);
            let d = dist(th);
            if d < best.1 {
                best = (th, d);
            }
        }
        let (mut a, mut b) = ((best.0 - grid).max(0.0), (best.0 + grid).min(l));
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..60 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if dist(c) < dist(d) {
                b = d;
            } else {
                a = c;
            }
        }
        let th = 0.5 * (a + b);
        if dist(th) <= best.1 { th } else { best.0 }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), PathError> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["theta", "x", "y", "z", "tx", "ty", "tz"])?;
        for s in &self.samples {
            let row = [s.theta, s.position.x, s.position.y, s.position.z, s.tangent.x, s.tangent.y, s.tangent.z];
            wr.write_record(row.iter().map(|v| format!("{v:.12}")))?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, PathError> {
        let mut rd = csv::Reader::from_reader(r);
        let mut samples = Vec::new();
        for rec in rd.deserialize() {
            let (theta, x, y, z, tx, ty, tz): (f64, f64, f64, f64, f64, f64, f64) = rec?;
            samples.push(PathSample {
                theta,
                position: Vector3::new(x, y, z),
                tangent: Vector3::new(tx, ty, tz),
            });
        }
        fit_splines(&samples)
    }
}

impl ParametricCurve for ArcSpline {
    fn domain(&self) -> (f64, f64) {
        (0.0, self.length())
    }
    fn position(&self, t: f64) -> Vector3<f64> {
        self.eval(t).position
    }
    fn velocity(&self, t: f64) -> Vector3<f64> {
        let (th, _) = self.normalize_theta(t);
        let (i, s) = self.locate(th);
        self.segments[i].first(s)
    }
}

/// Time-stamped positions `(t, x, y, z)`, e.g. an externally generated
/// reference trajectory.
pub fn read_timed_points_csv<R: Read>(r: R) -> Result<Vec<(f64, Vector3<f64>)>, PathError> {
    let mut rd = csv::ReaderBuilder::new().flexible(true).from_reader(r);
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let vals: Vec<f64> = rec
            .iter()
            .take(4)
            .map(|s| s.trim().parse::<f64>().map_err(|_| PathError::NonFinite))
            .collect::<Result<_, _>>()?;
        if vals.len() < 4 {
            return Err(PathError::NonFinite);
        }
        out.push((vals[0], Vector3::new(vals[1], vals[2], vals[3])));
    }
    Ok(out)
}
