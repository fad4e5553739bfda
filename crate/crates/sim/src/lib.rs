//! Closed-loop simulation harness for the contouring and tracking
//! controllers: measurement delay, gate detection, lap timing and logging.

pub mod bench;
pub mod delay;
pub mod gates;
pub mod log;
pub mod race;

pub use delay::DelayBuffer;
pub use gates::{detect_gate_pass, lap_times, Event, Lap};
pub use log::{SimLog, Summary};
pub use race::{run_race, ControllerKind, RaceConfig, ReferenceSource, SimError};
