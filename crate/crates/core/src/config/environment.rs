use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum EnvId {
    Home,
    Industrial,
    Outdoor,
}

impl EnvId {
    pub const ALL: [EnvId; 3] = [EnvId::Home, EnvId::Industrial, EnvId::Outdoor];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            EnvId::Home => "home",
            EnvId::Industrial => "industrial",
            EnvId::Outdoor => "outdoor",
        }
    }

    pub fn profile(self) -> EnvironmentProfile {
        EnvironmentProfile::builtin(self)
    }

    /// Node counts conventionally simulated in this environment.
    pub fn node_count_range(self) -> std::ops::RangeInclusive<usize> {
        match self {
            EnvId::Home => 10..=50,
            EnvId::Industrial | EnvId::Outdoor => 50..=250,
        }
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvId {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EnvId::ALL
            .into_iter()
            .find(|e| e.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| ConfigError::UnknownEnv(s.to_string()))
    }
}

impl TryFrom<String> for EnvId {
    type Error = ConfigError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<EnvId> for String {
    fn from(e: EnvId) -> String {
        e.name().to_string()
    }
}

/// Log-distance propagation parameters. Only used to arbitrate capture
/// between senders that are already inside the communication disk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvironmentProfile {
    pub env_id: EnvId,
    pub tx_power_dbm: f64,
    pub path_loss_exponent: f64,
    /// Loss at the 1 m reference distance.
    pub reference_loss_db: f64,
}

impl EnvironmentProfile {
    pub fn builtin(env: EnvId) -> Self {
        let (tx_power_dbm, path_loss_exponent) = match env {
            EnvId::Home => (0.0, 3.0),
            EnvId::Industrial => (10.0, 2.2),
            EnvId::Outdoor => (10.0, 2.0),
        };
        EnvironmentProfile {
            env_id: env,
            tx_power_dbm,
            path_loss_exponent,
            reference_loss_db: 40.0,
        }
    }
}
