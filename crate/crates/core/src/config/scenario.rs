use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::environment::EnvId;
use super::phy::{frame_airtime_us, phy_profile, PhyId, PhyProfile};
use crate::error::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SchedulerId {
    Orchestra,
    Minimal,
}

impl SchedulerId {
    pub const ALL: [SchedulerId; 2] = [SchedulerId::Orchestra, SchedulerId::Minimal];

    pub fn name(self) -> &'static str {
        match self {
            SchedulerId::Orchestra => "orchestra",
            SchedulerId::Minimal => "minimal",
        }
    }
}

impl fmt::Display for SchedulerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchedulerId {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SchedulerId::ALL
            .into_iter()
            .find(|x| x.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| ConfigError::UnknownScheduler(s.to_string()))
    }
}

impl TryFrom<String> for SchedulerId {
    type Error = ConfigError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<SchedulerId> for String {
    fn from(s: SchedulerId) -> String {
        s.name().to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OrchestraConfig {
    pub eb_sf_len: u32,
    pub common_sf_len: u32,
    pub unicast_sf_len: u32,
}

impl Default for OrchestraConfig {
    fn default() -> Self {
        OrchestraConfig {
            eb_sf_len: 397,
            common_sf_len: 31,
            unicast_sf_len: 17,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MinimalConfig {
    pub slotframe_len: u32,
    pub shared_slot_offset: u32,
    pub shared_channel_offset: u32,
}

impl Default for MinimalConfig {
    fn default() -> Self {
        MinimalConfig {
            slotframe_len: 5,
            shared_slot_offset: 0,
            shared_channel_offset: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RplConfig {
    pub i_min_s: f64,
    pub doublings: u32,
    pub dio_payload_bytes: u32,
}

impl Default for RplConfig {
    fn default() -> Self {
        RplConfig {
            i_min_s: 4.0,
            doublings: 8,
            dio_payload_bytes: 30,
        }
    }
}

/// How frames still queued when the run ends enter the PDR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InFlightPolicy {
    /// In-flight frames count as not delivered.
    #[default]
    Count,
    /// Frames generated in the last 2x mean latency are left out of both
    /// numerator and denominator.
    ExcludeTail,
}

/// Per-field replacements for a built-in PHY profile.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhyOverrides {
    pub byte_duration_us: Option<u32>,
    pub phy_overhead_bytes: Option<f64>,
    pub mac_header_bytes: Option<u32>,
    pub ack_size_bytes: Option<u32>,
    pub ack_wait_us: Option<u32>,
    pub rx_wait_us: Option<u32>,
    pub slot_duration_us: Option<u32>,
    pub app_packet_bytes: Option<u32>,
    pub cochannel_rejection_db: Option<f64>,
    pub range_m: Option<f64>,
}

impl PhyOverrides {
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    fn apply(&self, base: &mut PhyProfile, env: EnvId) -> Result<(), ConfigError> {
        macro_rules! set {
            ($($f:ident),*) => {$( if let Some(v) = self.$f { base.$f = v; } )*};
        }
        set!(
            byte_duration_us,
            mac_header_bytes,
            ack_size_bytes,
            ack_wait_us,
            rx_wait_us,
            slot_duration_us,
            app_packet_bytes,
            cochannel_rejection_db
        );
        if let Some(bytes) = self.phy_overhead_bytes {
            let bits = bytes * 8.0;
            if bits < 0.0 || bits.fract() != 0.0 {
                return Err(ConfigError::invalid(
                    "phy_override.phy_overhead_bytes",
                    format!("{bytes} is not a non-negative multiple of 1/8 byte"),
                ));
            }
            base.phy_overhead_bits = bits as u32;
        }
        if let Some(r) = self.range_m {
            if !(r > 0.0) {
                return Err(ConfigError::invalid(
                    "phy_override.range_m",
                    "must be positive",
                ));
            }
            base.range_m[env.index()] = r;
        }
        Ok(())
    }
}

/// A fully resolved, validated scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub phy_id: PhyId,
    pub scheduler_id: SchedulerId,
    pub env_id: EnvId,
    pub node_count: usize,
    pub sim_duration_s: f64,
    pub repetitions: u32,
    pub app_period_s: f64,
    pub seed: u64,
    pub queue_capacity: usize,
    pub max_retries: u32,
    pub backoff_min_be: u32,
    pub backoff_max_be: u32,
    pub eb_period_s: f64,
    pub eb_payload_bytes: u32,
    /// Keep-alive period; `None` disables KA frames.
    pub ka_period_s: Option<f64>,
    pub orchestra: OrchestraConfig,
    pub minimal: MinimalConfig,
    pub rpl: RplConfig,
    pub hopping_sequence: Vec<u8>,
    pub in_flight_policy: InFlightPolicy,
    pub phy_overrides: PhyOverrides,
    /// Optional positions CSV replacing the generated layout.
    pub topology_file: Option<PathBuf>,
}

impl ScenarioConfig {
    /// Scenario with every optional field at its default.
    pub fn new(phy_id: PhyId, scheduler_id: SchedulerId, env_id: EnvId, node_count: usize) -> Self {
        ScenarioConfig {
            phy_id,
            scheduler_id,
            env_id,
            node_count,
            sim_duration_s: 300.0,
            repetitions: 100,
            app_period_s: 160.0,
            seed: 1,
            queue_capacity: 16,
            max_retries: 8,
            backoff_min_be: 1,
            backoff_max_be: 7,
            eb_period_s: 16.0,
            eb_payload_bytes: 30,
            ka_period_s: None,
            orchestra: OrchestraConfig::default(),
            minimal: MinimalConfig::default(),
            rpl: RplConfig::default(),
            hopping_sequence: (0..16).collect(),
            in_flight_policy: InFlightPolicy::Count,
            phy_overrides: PhyOverrides::default(),
            topology_file: None,
        }
    }

    /// The PHY profile with any overrides applied.
    pub fn phy(&self) -> PhyProfile {
        let mut p = phy_profile(self.phy_id);
        // Overrides were checked in validate().
        let _ = self.phy_overrides.apply(&mut p, self.env_id);
        p
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), ConfigError> {
        fn bad(field: &'static str, reason: impl Into<String>) -> ConfigError {
            ConfigError::invalid(field, reason)
        }
        if self.node_count < 2 {
            return Err(bad(
                "nodes",
                format!("need at least 2 nodes, got {}", self.node_count),
            ));
        }
        if !(self.sim_duration_s > 0.0) {
            return Err(bad("duration_s", "must be positive"));
        }
        if self.repetitions == 0 {
            return Err(bad("repetitions", "must be at least 1"));
        }
        if !(self.app_period_s > 0.0) {
            return Err(bad("app_period_s", "must be positive"));
        }
        if self.queue_capacity == 0 {
            return Err(bad("queue_capacity", "must be at least 1"));
        }
        if self.backoff_min_be > self.backoff_max_be || self.backoff_max_be > 15 {
            return Err(bad(
                "backoff_max_be",
                format!(
                    "need backoff_min_be <= backoff_max_be <= 15, got {}..{}",
                    self.backoff_min_be, self.backoff_max_be
                ),
            ));
        }
        if !(self.eb_period_s > 0.0) {
            return Err(bad("eb_period_s", "must be positive"));
        }
        if let Some(ka) = self.ka_period_s {
            if !(ka > 0.0) {
                return Err(bad("ka_period_s", "must be positive"));
            }
        }
        let o = &self.orchestra;
        for (field, len) in [
            ("orchestra_eb_sf_len", o.eb_sf_len),
            ("orchestra_common_sf_len", o.common_sf_len),
            ("orchestra_unicast_sf_len", o.unicast_sf_len),
            ("minimal_sf_len", self.minimal.slotframe_len),
        ] {
            if len == 0 {
                return Err(bad(field, "slotframe length must be at least 1"));
            }
        }
        if self.minimal.shared_slot_offset >= self.minimal.slotframe_len {
            return Err(bad("minimal_slot_offset", "must be below minimal_sf_len"));
        }
        if self.hopping_sequence.is_empty() {
            return Err(bad("hopping_sequence", "must not be empty"));
        }
        if let Some(c) = self.hopping_sequence.iter().find(|&&c| c > 15) {
            return Err(bad(
                "hopping_sequence",
                format!("channel {c} outside 0..=15"),
            ));
        }
        if !(self.rpl.i_min_s > 0.0) {
            return Err(bad("rpl_imin_s", "must be positive"));
        }
        if self.rpl.doublings > 24 {
            return Err(bad("rpl_doublings", "at most 24"));
        }

        let mut p = phy_profile(self.phy_id);
        self.phy_overrides.apply(&mut p, self.env_id)?;
        if p.byte_duration_us == 0 {
            return Err(bad("phy_override.byte_duration_us", "must be positive"));
        }
        let air = frame_airtime_us(&p, p.app_packet_bytes);
        if p.slot_duration_us < air {
            return Err(bad(
                "phy_override.slot_duration_us",
                format!(
                    "slot {} us shorter than app frame airtime {} us",
                    p.slot_duration_us, air
                ),
            ));
        }
        Ok(())
    }

    /// Non-fatal remarks, e.g. slotframe lengths sharing a factor.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.scheduler_id == SchedulerId::Orchestra {
            let o = &self.orchestra;
            let lens = [
                ("eb", o.eb_sf_len),
                ("common", o.common_sf_len),
                ("unicast", o.unicast_sf_len),
            ];
            for i in 0..lens.len() {
                for j in i + 1..lens.len() {
                    if gcd(lens[i].1, lens[j].1) != 1 {
                        out.push(format!(
                            "orchestra {} ({}) and {} ({}) slotframe lengths are not coprime",
                            lens[i].0, lens[i].1, lens[j].0, lens[j].1
                        ));
                    }
                }
            }
        }
        out
    }

    pub fn slot_duration_us(&self) -> u64 {
        u64::from(self.phy().slot_duration_us)
    }
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// On-disk scenario layout. Every key except the first four is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct RawScenario {
    pub phy: Option<String>,
    pub scheduler: Option<String>,
    pub env: Option<String>,
    pub nodes: Option<usize>,
    pub duration_s: Option<f64>,
    pub repetitions: Option<u32>,
    pub app_period_s: Option<f64>,
    pub seed: Option<u64>,
    pub queue_capacity: Option<usize>,
    pub max_retries: Option<u32>,
    pub backoff_min_be: Option<u32>,
    pub backoff_max_be: Option<u32>,
    pub eb_period_s: Option<f64>,
    pub eb_payload_bytes: Option<u32>,
    pub ka_period_s: Option<f64>,
    pub orchestra_eb_sf_len: Option<u32>,
    pub orchestra_common_sf_len: Option<u32>,
    pub orchestra_unicast_sf_len: Option<u32>,
    pub minimal_sf_len: Option<u32>,
    pub minimal_slot_offset: Option<u32>,
    pub minimal_channel_offset: Option<u32>,
    pub hopping_sequence: Option<Vec<u8>>,
    pub rpl_imin_s: Option<f64>,
    pub rpl_doublings: Option<u32>,
    pub dio_payload_bytes: Option<u32>,
    pub in_flight_policy: Option<InFlightPolicy>,
    pub topology_file: Option<PathBuf>,
    pub phy_override: Option<PhyOverrides>,
}

impl RawScenario {
    /// Applies every key that is present on top of `cfg`.
    pub(crate) fn apply_to(&self, cfg: &mut ScenarioConfig) -> Result<(), ConfigError> {
        if let Some(s) = &self.phy {
            cfg.phy_id = s.parse()?;
        }
        if let Some(s) = &self.scheduler {
            cfg.scheduler_id = s.parse()?;
        }
        if let Some(s) = &self.env {
            cfg.env_id = s.parse()?;
        }
        macro_rules! copy {
            ($($raw:ident => $($dst:ident).+),* $(,)?) => {$(
                if let Some(v) = self.$raw.clone() { cfg.$($dst).+ = v; }
            )*};
        }
        copy!(
            nodes => node_count,
            duration_s => sim_duration_s,
            repetitions => repetitions,
            app_period_s => app_period_s,
            seed => seed,
            queue_capacity => queue_capacity,
            max_retries => max_retries,
            backoff_min_be => backoff_min_be,
            backoff_max_be => backoff_max_be,
            eb_period_s => eb_period_s,
            eb_payload_bytes => eb_payload_bytes,
            orchestra_eb_sf_len => orchestra.eb_sf_len,
            orchestra_common_sf_len => orchestra.common_sf_len,
            orchestra_unicast_sf_len => orchestra.unicast_sf_len,
            minimal_sf_len => minimal.slotframe_len,
            minimal_slot_offset => minimal.shared_slot_offset,
            minimal_channel_offset => minimal.shared_channel_offset,
            hopping_sequence => hopping_sequence,
            rpl_imin_s => rpl.i_min_s,
            rpl_doublings => rpl.doublings,
            dio_payload_bytes => rpl.dio_payload_bytes,
            in_flight_policy => in_flight_policy,
            phy_override => phy_overrides,
        );
        if self.ka_period_s.is_some() {
            cfg.ka_period_s = self.ka_period_s;
        }
        if self.topology_file.is_some() {
            cfg.topology_file = self.topology_file.clone();
        }
        Ok(())
    }
}

pub(crate) fn parse_toml<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
}

/// Parses and validates a scenario document.
pub fn load_scenario(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let raw: RawScenario = parse_toml(text)?;
    let phy = raw
        .phy
        .as_deref()
        .ok_or_else(|| ConfigError::Parse("missing field `phy`".into()))?;
    let scheduler = raw
        .scheduler
        .as_deref()
        .ok_or_else(|| ConfigError::Parse("missing field `scheduler`".into()))?;
    let env = raw
        .env
        .as_deref()
        .ok_or_else(|| ConfigError::Parse("missing field `env`".into()))?;
    let nodes = raw
        .nodes
        .ok_or_else(|| ConfigError::Parse("missing field `nodes`".into()))?;
    let mut cfg = ScenarioConfig::new(phy.parse()?, scheduler.parse()?, env.parse()?, nodes);
    raw.apply_to(&mut cfg)?;
    cfg.validate()?;
    Ok(cfg)
}
