//! PHY and environment constants, frame timing, and scenario files.

mod environment;
mod phy;
pub(crate) mod scenario;

pub use environment::{EnvId, EnvironmentProfile};
pub use phy::{ack_airtime_us, frame_airtime_us, phy_profile, PhyId, PhyProfile};
pub use scenario::{
    load_scenario, InFlightPolicy, MinimalConfig, OrchestraConfig, PhyOverrides, RplConfig,
    ScenarioConfig, SchedulerId,
};
