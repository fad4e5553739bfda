use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mpcc_core::minsnap;
use mpcc_core::pmm;
use mpcc_core::track::TrackConfig;
use mpcc_sim::bench::bench_solver;
use mpcc_sim::race::{run_race, ControllerKind, RaceConfig, ReferenceSource};
use mpcc_sim::{SimLog, Summary};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "mpcc", about = "Closed-loop quadrotor racing with contouring and tracking MPC")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Track JSON file.
    #[arg(long)]
    track: PathBuf,
    /// Race configuration JSON; missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override the lap count of the track.
    #[arg(long)]
    laps: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Fly one race and write log.csv, events.json and summary.json.
    Race {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "mpcc")]
        controller: ControllerKind,
        /// pmm, minsnap or file:PATH
        #[arg(long = "ref", default_value = "pmm")]
        reference: ReferenceSource,
        #[arg(long, default_value_t = 0.0)]
        delay_ms: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep the measurement delay for both controllers.
    AblateDelay {
        #[command(flatten)]
        common: Common,
        #[arg(long = "ref", default_value = "pmm")]
        reference: ReferenceSource,
        #[arg(long, value_delimiter = ',', default_value = "0,10,20,30,40,50,60")]
        delays: Vec<f64>,
        /// First fly the contouring controller without delay and use its log
        /// as the reference for every run.
        #[arg(long)]
        self_record: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Plan a reference trajectory and write it as CSV.
    Plan {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "pmm")]
        planner: String,
        #[arg(long)]
        gate_horizon: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time the contouring controller over a range of horizons.
    BenchSolver {
        #[command(flatten)]
        common: Common,
        #[arg(long = "ref", default_value = "pmm")]
        reference: ReferenceSource,
        #[arg(long, value_delimiter = ',', default_value = "10,20,30,40,50")]
        horizons: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        reps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

type Result<T> = std::result::Result<T, Box<dyn std::error::Error>>;

fn load(common: &Common) -> Result<(TrackConfig, RaceConfig)> {
    let mut track = TrackConfig::from_json_file(&common.track)?;
    if let Some(l) = common.laps {
        track.laps = l;
        track.validate()?;
    }
    let mut cfg = match &common.config {
        Some(p) => RaceConfig::from_json_file(p)?,
        None => RaceConfig::default(),
    };
    cfg.seed = common.seed;
    Ok((track, cfg))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn write_run(dir: &Path, log: &SimLog, summary: &Summary) -> Result<()> {
    fs::create_dir_all(dir)?;
    log.write_csv(fs::File::create(dir.join("log.csv"))?)?;
    write_json(&dir.join("events.json"), &log.events)?;
    write_json(&dir.join("summary.json"), summary)?;
    Ok(())
}

fn describe(s: &Summary) -> String {
    let laps: Vec<String> = s.lap_times.iter().map(|t| format!("{t:.3}")).collect();
    format!(
        "gates {}/{} misses {} laps [{}] peak {:.2} m/s{}",
        s.gates_passed,
        s.gates_expected,
        s.gate_misses,
        laps.join(", "),
        s.peak_speed,
        s.fault.as_ref().map(|f| format!(" fault: {f}")).unwrap_or_default()
    )
}

#[derive(Serialize)]
struct AblationRow {
    controller: ControllerKind,
    delay_ms: f64,
    completed: bool,
    summary: Summary,
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Race { common, controller, reference, delay_ms, out } => {
            let (track, mut cfg) = load(&common)?;
            cfg.delay_ms = delay_ms;
            let log = run_race(&track, controller, &reference, &cfg)?;
            let summary = log.summary(&track);
            write_run(&out, &log, &summary)?;
            println!("{}", describe(&summary));
            Ok(summary.all_laps_valid)
        }
        Command::AblateDelay { common, reference, delays, self_record, out } => {
            let (track, cfg) = load(&common)?;
            fs::create_dir_all(&out)?;
            let reference = if self_record {
                let log = run_race(&track, ControllerKind::Mpcc, &reference, &cfg)?;
                let summary = log.summary(&track);
                write_run(&out.join("recorded"), &log, &summary)?;
                if !summary.completed {
                    return Err(format!("recording run failed: {}", describe(&summary)).into());
                }
                ReferenceSource::File(out.join("recorded").join("log.csv"))
            } else {
                reference
            };
            let jobs: Vec<(ControllerKind, f64)> =
                delays.iter().flat_map(|&d| [(ControllerKind::Mpcc, d), (ControllerKind::Mpc, d)]).collect();
            let results: Vec<_> = std::thread::scope(|s| {
                let handles: Vec<_> = jobs
                    .iter()
                    .map(|&(kind, d)| {
                        let (track, reference) = (&track, &reference);
                        let cfg = RaceConfig { delay_ms: d, ..cfg.clone() };
                        s.spawn(move || run_race(track, kind, reference, &cfg).map(|log| (kind, d, log)))
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("race thread panicked")).collect()
            });
            let mut rows = Vec::new();
            for r in results {
                let (kind, d, log) = r?;
                let summary = log.summary(&track);
                let name = format!("{}_{}ms", if kind == ControllerKind::Mpcc { "mpcc" } else { "mpc" }, d);
                write_run(&out.join(name), &log, &summary)?;
                println!("{:>4} {:>5.1} ms  {}", format!("{kind:?}").to_lowercase(), d, describe(&summary));
                rows.push(AblationRow { controller: kind, delay_ms: d, completed: summary.completed, summary });
            }
            write_json(&out.join("ablation.json"), &rows)?;
            Ok(true)
        }
        Command::Plan { common, planner, gate_horizon, samples, out } => {
            let (track, mut cfg) = load(&common)?;
            let traj = match planner.as_str() {
                "pmm" => {
                    if let Some(h) = gate_horizon {
                        cfg.pmm.gate_horizon = h;
                    }
                    if let Some(m) = samples {
                        cfg.pmm.samples_per_gate = m;
                    }
                    let plan = pmm::plan(&track, &cfg.pmm, cfg.seed)?;
                    let mut times = plan.replan_times.clone();
                    times.sort_by(f64::total_cmp);
                    println!(
                        "total time {:.4} s, median replan {:.3} ms",
                        plan.total_time,
                        times.get(times.len() / 2).copied().unwrap_or(0.0) * 1e3
                    );
                    plan.trajectory
                }
                "minsnap" => {
                    if let Some(h) = gate_horizon {
                        cfg.minsnap.horizon = h;
                    }
                    let (_, traj) = minsnap::plan_track(&track, &cfg.minsnap)?;
                    println!("total time {:.4} s", traj.duration());
                    traj
                }
                other => return Err(format!("unknown planner '{other}', expected pmm or minsnap").into()),
            };
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            traj.write_csv(fs::File::create(&out)?)?;
            Ok(true)
        }
        Command::BenchSolver { common, reference, horizons, reps, out } => {
            let (track, cfg) = load(&common)?;
            let rows = bench_solver(&track, &reference, &cfg, &horizons, reps)?;
            println!("{:>4} {:>8} {:>10} {:>10} {:>10}", "N", "samples", "median ms", "p90 ms", "max ms");
            for r in &rows {
                println!("{:>4} {:>8} {:>10.3} {:>10.3} {:>10.3}", r.horizon, r.samples, r.median_ms, r.p90_ms, r.max_ms);
            }
            if let Some(p) = out {
                write_json(&p, &rows)?;
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
