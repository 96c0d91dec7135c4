//! Slot-stepped simulator for multihop TSCH / 6TiSCH networks running over the
//! four Bluetooth 5 PHYs and the 2.4 GHz IEEE 802.15.4 O-QPSK PHY.
//!
//! The crate is organised bottom-up:
//!
//! - [`config`]: built-in PHY and environment profiles, airtime arithmetic and
//!   scenario files.
//! - [`topology`] and [`medium`]: random connected meshes and per-slot
//!   reception resolution under a unit-disk model with capture.
//! - [`schedule`]: Orchestra and 6TiSCH-minimal cell selection.
//! - [`rpl`]: hop-count DODAG with non-storing downward source routes.
//! - [`engine`]: the TSCH MAC, one world per run.
//! - [`metrics`]: PDR, latency and radio duty cycle, plus aggregation.
//! - [`sweep`]: seeded repetitions, parallel sweeps and CSV/JSON output.

pub mod config;
pub mod engine;
pub mod error;
pub mod medium;
pub mod metrics;
pub mod rpl;
pub mod schedule;
pub mod seeding;
pub mod sweep;
pub mod topology;

pub use config::{
    ack_airtime_us, frame_airtime_us, load_scenario, phy_profile, EnvId, EnvironmentProfile, PhyId,
    PhyProfile, ScenarioConfig, SchedulerId,
};
pub use engine::{run_scenario, Frame, FrameKind, RunOptions, World};
pub use error::{ConfigError, Error, SimError, TopologyError};
pub use metrics::{
    aggregate, compute_latency_stats, compute_pdr, compute_rdc, AggregateResult, RunResult,
};
pub use sweep::{run_sweep, SweepSpec};
pub use topology::{generate_topology, NodeId, Topology};
