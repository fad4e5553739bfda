//! Controller timing over a recorded state corpus.

use mpcc_core::mpcc::{MpccController, MpccProblem};
use mpcc_core::track::TrackConfig;
use mpcc_core::QuadState;
use serde::{Deserialize, Serialize};

use crate::race::{build_reference, run_race, ControllerKind, RaceConfig, ReferenceSource, SimError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub horizon: usize,
    pub samples: usize,
    pub median_ms: f64,
    pub p90_ms: f64,
    pub max_ms: f64,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let i = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[i]
}

/// States seen by the controller in a closed-loop run with the default
/// horizon, one per control tick.
pub fn record_corpus(track: &TrackConfig, source: &ReferenceSource, cfg: &RaceConfig) -> Result<Vec<(f64, QuadState)>, SimError> {
    let log = run_race(track, ControllerKind::Mpcc, source, cfg)?;
    Ok(log.rows.iter().filter(|r| r.solve_time.is_some()).map(|r| (r.t, r.state)).collect())
}

/// Replays the corpus through a fresh controller per horizon and repetition
/// and reports wall-clock statistics of each step.
pub fn bench_solver(
    track: &TrackConfig,
    source: &ReferenceSource,
    cfg: &RaceConfig,
    horizons: &[usize],
    repetitions: usize,
) -> Result<Vec<BenchRow>, SimError> {
    let corpus = record_corpus(track, source, cfg)?;
    let reference = build_reference(track, source, cfg)?;
    let spline = reference.trajectory.to_spline(cfg.segment_len).map_err(|e| SimError::Reference(e.to_string()))?;
    let gates: Vec<_> = track.gates.iter().map(|g| g.position).collect();
    let mut rows = Vec::with_capacity(horizons.len());
    for &n in horizons {
        let mcfg = mpcc_core::mpcc::MpccConfig { horizon: n, ..cfg.mpcc.clone() };
        let problem = MpccProblem::new(spline.clone(), gates.clone(), mcfg, cfg.params.clone()).map_err(|e| SimError::Config(e.to_string()))?;
        let mut times = Vec::with_capacity(corpus.len() * repetitions);
        for _ in 0..repetitions.max(1) {
            let mut ctrl = MpccController::new(problem.clone());
            for (t, x) in &corpus {
                let r = ctrl.step(*t, x).map_err(|e| SimError::Config(e.to_string()))?;
                times.push(r.stats.solve_time * 1e3);
            }
        }
        times.sort_by(f64::total_cmp);
        rows.push(BenchRow {
            horizon: n,
            samples: times.len(),
            median_ms: percentile(&times, 0.5),
            p90_ms: percentile(&times, 0.9),
            max_ms: *times.last().unwrap_or(&0.0),
        });
    }
    Ok(rows)
}
