//! Time-optimal point-mass planning through a gate sequence.
//!
//! Each gate gets `M` sampled pass velocities. Edges between consecutive
//! layers cost the synchronized primitive duration, and Dijkstra picks the
//! fastest chain over the next `H_g` gates. Only the first segment is kept
//! before replanning from its end state.

mod primitive;

use primitive::axis_min_times_row;

pub use primitive::{
    axis_min_time, axis_primitive, min_duration, stretch_axis, synchronize_axes, time_constrained_primitive,
    AxisBounds, PmmAxisPrimitive, PmmPrimitive3,
};

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::track::TrackConfig;
use crate::trajectory::{Trajectory, TrajectorySample};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PmmError {
    #[error("acceleration bounds must satisfy lo < 0 < hi and velocity bounds be positive")]
    BadBounds,
    #[error("non-finite boundary condition")]
    NonFinite,
    #[error("boundary velocity {velocity} violates the velocity bounds")]
    InfeasibleVelocity { velocity: f64 },
    #[error("no feasible switching structure")]
    NoSolution,
    #[error("no feasible edge reaches gate {gate}")]
    NoFeasibleEdge { gate: usize },
    #[error("invalid planner configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    /// Velocity samples per gate (M).
    pub samples_per_gate: usize,
    /// Gates optimized per replan (H_g).
    pub gate_horizon: usize,
    pub speed_range: [f64; 2],
    /// Cone half angle around the gate exit direction (rad).
    pub cone_half_angle: f64,
    /// Symmetric per-axis acceleration bound (m/s²).
    pub accel_max: f64,
    /// Symmetric per-axis velocity bound (m/s).
    pub vel_max: f64,
    /// Edges slower than `prune_factor * d / vel_max + 2 vel_max / accel_max` are dropped.
    pub prune_factor: f64,
    /// Spacing of the output samples (s).
    pub sample_dt: f64,
    /// Forces the velocity at the last gate of the sequence.
    pub final_velocity: Option<Vector3<f64>>,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            samples_per_gate: 150,
            gate_horizon: 3,
            speed_range: [3.0, 18.0],
            cone_half_angle: 30f64.to_radians(),
            accel_max: 20.0,
            vel_max: 20.0,
            prune_factor: 3.0,
            sample_dt: 0.01,
            final_velocity: None,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), PmmError> {
        let bad = |m: &str| Err(PmmError::Config(m.to_string()));
        if self.samples_per_gate == 0 {
            return bad("samples_per_gate must be at least 1");
        }
        if self.gate_horizon == 0 {
            return bad("gate_horizon must be at least 1");
        }
        if !(self.speed_range[0] >= 0.0 && self.speed_range[0] <= self.speed_range[1]) {
            return bad("speed_range must be ordered and non-negative");
        }
        if self.speed_range[1] > self.vel_max {
            return bad("speed_range exceeds vel_max");
        }
        if !(self.cone_half_angle >= 0.0 && self.cone_half_angle <= std::f64::consts::FRAC_PI_2) {
            return bad("cone_half_angle must lie in [0, pi/2]");
        }
        if !(self.accel_max > 0.0 && self.vel_max > 0.0 && self.sample_dt > 0.0) {
            return bad("bounds and sample_dt must be positive");
        }
        Ok(())
    }

    pub fn bounds(&self) -> [AxisBounds; 3] {
        [AxisBounds::symmetric(self.accel_max, self.vel_max); 3]
    }
}

/// `m` velocities with magnitude uniform in `speed_range` and direction
/// uniform on the spherical cap of half angle `cone_half_angle` around
/// `exit_direction`. Sample `i` depends only on `(seed, stream, i)`, so a
/// larger `m` extends a smaller set.
pub fn sample_gate_velocities(
    exit_direction: &Vector3<f64>,
    m: usize,
    speed_range: [f64; 2],
    cone_half_angle: f64,
    seed: u64,
    stream: u64,
) -> Vec<Vector3<f64>> {
    let axis = exit_direction.normalize();
    let helper = if axis.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let e1 = axis.cross(&helper).normalize();
    let e2 = axis.cross(&e1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let cos_min = cone_half_angle.cos();
    (0..m)
        .map(|_| {
            let c: f64 = rng.gen_range(0.0..=1.0);
            let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let s: f64 = rng.gen_range(0.0..=1.0);
            let cos_t = 1.0 - c * (1.0 - cos_min);
            let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
            let dir = axis * cos_t + (e1 * phi.cos() + e2 * phi.sin()) * sin_t;
            dir * (speed_range[0] + s * (speed_range[1] - speed_range[0]))
        })
        .collect()
}

/// One layer of the gate graph: a gate position and its candidate velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct GateLayer {
    pub gate: usize,
    pub position: Vector3<f64>,
    pub velocities: Vec<Vector3<f64>>,
}

/// Layered graph from a start state through consecutive gate layers.
/// `costs[l][i][j]` is the edge from node `i` of layer `l` (layer 0 is the
/// start node) to node `j` of layer `l + 1`; `None` marks pruned or
/// infeasible edges.
#[derive(Debug, Clone)]
pub struct GateGraph {
    pub start_position: Vector3<f64>,
    pub start_velocity: Vector3<f64>,
    pub layers: Vec<GateLayer>,
    pub costs: Vec<Vec<Vec<Option<f64>>>>,
}

type CostMatrix = Vec<Vec<Option<f64>>>;

/// Edge durations from every start velocity to every layer velocity; `None`
/// marks infeasible edges and edges slower than the prune limit.
fn layer_costs(from_p: &Vector3<f64>, from_v: &[Vector3<f64>], to: &GateLayer, bounds: &[AxisBounds; 3], cfg: &PlannerConfig) -> CostMatrix {
    let dp = to.position - from_p;
    let limit = cfg.prune_factor * dp.norm() / cfg.vel_max + 2.0 * cfg.vel_max / cfg.accel_max;
    let admissible = |v: &Vector3<f64>| (0..3).all(|i| v[i].is_finite() && v[i] >= bounds[i].v_lo - 1e-12 && v[i] <= bounds[i].v_hi + 1e-12);
    let valid_bounds = bounds.iter().all(|b| b.u_lo < 0.0 && b.u_hi > 0.0 && b.v_lo < 0.0 && b.v_hi > 0.0 && b.u_lo.is_finite() && b.u_hi.is_finite());
    let cols: [Vec<f64>; 3] = std::array::from_fn(|i| to.velocities.iter().map(|v| v[i]).collect());
    let col_ok: Vec<bool> = to.velocities.iter().map(admissible).collect();
    let n = to.velocities.len();
    from_v
        .par_iter()
        .map(|v0| {
            if !valid_bounds || !dp.iter().all(|x| x.is_finite()) || !admissible(v0) {
                return vec![None; n];
            }
            let mut t = vec![0.0f64; n];
            let mut axis = vec![0.0f64; n];
            for i in 0..3 {
                axis_min_times_row(dp[i], v0[i], &cols[i], &bounds[i], &mut axis);
                for (a, b) in t.iter_mut().zip(&axis) {
                    *a = a.max(*b);
                }
            }
            t.iter().zip(&col_ok).map(|(&t, &ok)| (ok && t > 0.0 && t.is_finite() && t <= limit).then_some(t)).collect()
        })
        .collect()
}

impl GateGraph {
    pub fn build(start_position: Vector3<f64>, start_velocity: Vector3<f64>, layers: Vec<GateLayer>, cfg: &PlannerConfig) -> Self {
        Self::build_reusing(start_position, start_velocity, layers, cfg, Vec::new())
    }

    /// As [`GateGraph::build`], taking `known[j]` as the costs from layer `j`
    /// to layer `j + 1` where available.
    fn build_reusing(
        start_position: Vector3<f64>,
        start_velocity: Vector3<f64>,
        layers: Vec<GateLayer>,
        cfg: &PlannerConfig,
        known: Vec<CostMatrix>,
    ) -> Self {
        let bounds = cfg.bounds();
        let mut known = known.into_iter();
        let mut costs = Vec::with_capacity(layers.len());
        costs.push(layer_costs(&start_position, &[start_velocity], &layers[0], &bounds, cfg));
        for l in 1..layers.len() {
            let c = match known.next() {
                Some(c) => c,
                None => layer_costs(&layers[l - 1].position, &layers[l - 1].velocities, &layers[l], &bounds, cfg),
            };
            costs.push(c);
        }
        Self { start_position, start_velocity, layers, costs }
    }

    /// Node chosen in each layer along the fastest chain, and its total cost.
    pub fn shortest_path(&self) -> Result<(Vec<usize>, f64), PmmError> {
        #[derive(PartialEq)]
        struct Entry {
            cost: f64,
            layer: usize,
            node: usize,
        }
        impl Eq for Entry {}
        impl Ord for Entry {
            fn cmp(&self, other: &Self) -> Ordering {
                // min-heap on cost, then lowest (layer, node)
                other
                    .cost
                    .total_cmp(&self.cost)
                    .then_with(|| other.layer.cmp(&self.layer))
                    .then_with(|| other.node.cmp(&self.node))
            }
        }
        impl PartialOrd for Entry {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }

        let nl = self.layers.len();
        if nl == 0 {
            return Ok((Vec::new(), 0.0));
        }
        // dist[l][i]: best cost to node i of layer l (layer 0 = start)
        let mut dist: Vec<Vec<f64>> = std::iter::once(vec![0.0])
            .chain(self.layers.iter().map(|g| vec![f64::INFINITY; g.velocities.len()]))
            .collect();
        let mut prev: Vec<Vec<usize>> = dist.iter().map(|d| vec![usize::MAX; d.len()]).collect();
        let mut done: Vec<Vec<bool>> = dist.iter().map(|d| vec![false; d.len()]).collect();
        let mut heap = BinaryHeap::new();
        heap.push(Entry { cost: 0.0, layer: 0, node: 0 });
        let mut reached = None;
        while let Some(Entry { cost, layer, node }) = heap.pop() {
            if done[layer][node] {
                continue;
            }
            done[layer][node] = true;
            if layer == nl {
                reached = Some((node, cost));
                break;
            }
            for (j, c) in self.costs[layer][node].iter().enumerate() {
                let Some(c) = c else { continue };
                let nc = cost + c;
                if nc < dist[layer + 1][j] {
                    dist[layer + 1][j] = nc;
                    prev[layer + 1][j] = node;
                    heap.push(Entry { cost: nc, layer: layer + 1, node: j });
                }
            }
        }
        let Some((mut node, total)) = reached else {
            let deepest = (1..=nl).rev().find(|&l| done[l].iter().any(|&d| d)).unwrap_or(0);
            return Err(PmmError::NoFeasibleEdge { gate: self.layers[deepest.min(nl - 1)].gate });
        };
        let mut chain = vec![0; nl];
        for l in (1..=nl).rev() {
            chain[l - 1] = node;
            node = prev[l][node];
        }
        Ok((chain, total))
    }
}

/// Result of a (receding) plan through the whole gate sequence.
#[derive(Debug, Clone)]
pub struct PmmPlan {
    pub segments: Vec<PmmPrimitive3>,
    /// Gate index reached at the end of each segment.
    pub gates: Vec<usize>,
    pub total_time: f64,
    pub trajectory: Trajectory,
    /// Wall-clock seconds spent in each replan.
    pub replan_times: Vec<f64>,
}

impl PmmPlan {
    /// Time at which each segment ends.
    pub fn gate_times(&self) -> Vec<f64> {
        self.segments
            .iter()
            .scan(0.0, |t, s| {
                *t += s.duration;
                Some(*t)
            })
            .collect()
    }
}

fn layer_for(track: &TrackConfig, seq: &[usize], k: usize, cfg: &PlannerConfig, seed: u64) -> GateLayer {
    let gate = seq[k];
    let g = &track.gates[gate];
    let velocities = match cfg.final_velocity {
        Some(v) if k + 1 == seq.len() => vec![v],
        _ => sample_gate_velocities(
            &g.exit_direction,
            cfg.samples_per_gate,
            cfg.speed_range,
            cfg.cone_half_angle,
            seed,
            k as u64,
        ),
    };
    GateLayer { gate, position: g.position, velocities }
}

/// Receding-horizon plan: optimize over the next `gate_horizon` gates, keep
/// the segment to the first of them, then replan from its end state.
pub fn plan(track: &TrackConfig, cfg: &PlannerConfig, seed: u64) -> Result<PmmPlan, PmmError> {
    plan_from(track, track.start_position, track.start_velocity, cfg, seed)
}

pub fn plan_from(
    track: &TrackConfig,
    start_position: Vector3<f64>,
    start_velocity: Vector3<f64>,
    cfg: &PlannerConfig,
    seed: u64,
) -> Result<PmmPlan, PmmError> {
    cfg.validate()?;
    track.validate().map_err(|e| PmmError::Config(e.to_string()))?;
    let seq = track.gate_sequence();
    let bounds = cfg.bounds();
    let mut p = start_position;
    let mut v = start_velocity;
    let mut segments = Vec::with_capacity(seq.len());
    let mut replan_times = Vec::with_capacity(seq.len());
    let mut carried = Vec::new();
    for k in 0..seq.len() {
        let t0 = Instant::now();
        let end = (k + cfg.gate_horizon).min(seq.len());
        let layers: Vec<GateLayer> = (k..end).map(|i| layer_for(track, &seq, i, cfg, seed)).collect();
        // gate samples depend only on (seed, sequence index), so the
        // gate-to-gate costs of the previous window are still valid
        let graph = GateGraph::build_reusing(p, v, layers, cfg, carried);
        let (chain, _) = graph.shortest_path()?;
        let target = &graph.layers[0];
        let v1 = target.velocities[chain[0]];
        let seg = synchronize_axes(&p, &v, &target.position, &v1, &bounds)?;
        p = target.position;
        v = v1;
        carried = graph.costs.into_iter().skip(2).collect();
        replan_times.push(t0.elapsed().as_secs_f64());
        segments.push(seg);
    }
    let total_time = segments.iter().map(|s| s.duration).sum();
    let trajectory = sample_segments(&segments, cfg.sample_dt);
    Ok(PmmPlan { segments, gates: seq, total_time, trajectory, replan_times })
}

/// Single graph solve over the whole gate sequence (no receding).
pub fn plan_full(track: &TrackConfig, cfg: &PlannerConfig, seed: u64) -> Result<PmmPlan, PmmError> {
    let cfg = PlannerConfig { gate_horizon: track.gate_sequence().len(), ..cfg.clone() };
    let t0 = Instant::now();
    cfg.validate()?;
    let seq = track.gate_sequence();
    let layers: Vec<GateLayer> = (0..seq.len()).map(|i| layer_for(track, &seq, i, &cfg, seed)).collect();
    let graph = GateGraph::build(track.start_position, track.start_velocity, layers, &cfg);
    let (chain, _) = graph.shortest_path()?;
    let bounds = cfg.bounds();
    let mut p = track.start_position;
    let mut v = track.start_velocity;
    let mut segments = Vec::with_capacity(seq.len());
    for (layer, &node) in graph.layers.iter().zip(&chain) {
        let v1 = layer.velocities[node];
        segments.push(synchronize_axes(&p, &v, &layer.position, &v1, &bounds)?);
        p = layer.position;
        v = v1;
    }
    let total_time = segments.iter().map(|s| s.duration).sum();
    let trajectory = sample_segments(&segments, cfg.sample_dt);
    Ok(PmmPlan { segments, gates: seq, total_time, trajectory, replan_times: vec![t0.elapsed().as_secs_f64()] })
}

/// Samples every `dt` seconds along the concatenated segments, always
/// including the final instant.
pub fn sample_segments(segments: &[PmmPrimitive3], dt: f64) -> Trajectory {
    let total: f64 = segments.iter().map(|s| s.duration).sum();
    let mut samples = Vec::new();
    let n = (total / dt).floor() as usize;
    let mut seg = 0;
    let mut seg_start = 0.0;
    let mut push = |t: f64, samples: &mut Vec<TrajectorySample>| {
        while seg + 1 < segments.len() && t > seg_start + segments[seg].duration {
            seg_start += segments[seg].duration;
            seg += 1;
        }
        if let Some(s) = segments.get(seg) {
            let (p, v, a) = s.state(t - seg_start);
            samples.push(TrajectorySample { t, position: p, velocity: v, acceleration: a });
        }
    };
    for i in 0..=n {
        push(i as f64 * dt, &mut samples);
    }
    if total - n as f64 * dt > 1e-9 {
        push(total, &mut samples);
    }
    Trajectory { samples }
}
