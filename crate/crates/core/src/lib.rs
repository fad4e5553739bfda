//! Model predictive contouring control (MPCC) for near time-optimal quadrotor
//! flight through waypoint sequences.
//!
//! The crate is organised bottom-up:
//!
//! - [`dynamics`]: rigid-body quadrotor model with single-rotor thrust inputs.
//! - [`arc_path`]: arc-length parameterized cubic splines.
//! - [`track`]: gate sequences.
//! - [`pmm`]: time-optimal point-mass planner (closed-form primitives + Dijkstra).
//! - [`minsnap`]: receding-horizon minimum-snap polynomials.
//! - [`qp`]: dense primal active-set QP solver.
//! - [`ocp`]: linearization and condensing shared by both controllers.
//! - [`mpcc`]: the contouring controller (real-time iterations).
//! - [`mpc`]: time-indexed tracking MPC baseline.

pub mod arc_path;
pub mod dynamics;
pub mod minsnap;
pub mod mpc;
pub mod mpcc;
pub mod ocp;
pub mod pmm;
pub mod qp;
pub mod track;
pub mod trajectory;

pub use dynamics::{QuadParams, QuadState, RotorThrusts};



