use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::environment::EnvId;
use crate::error::ConfigError;

/// The five 2.4 GHz PHY options.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PhyId {
    Bt2M,
    Bt1M,
    Bt500K,
    Bt125K,
    Ieee802154,
}

impl PhyId {
    pub const ALL: [PhyId; 5] = [
        PhyId::Bt2M,
        PhyId::Bt1M,
        PhyId::Bt500K,
        PhyId::Bt125K,
        PhyId::Ieee802154,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PhyId::Bt2M => "bt5_2m",
            PhyId::Bt1M => "bt5_1m",
            PhyId::Bt500K => "bt5_500k",
            PhyId::Bt125K => "bt5_125k",
            PhyId::Ieee802154 => "ieee802154",
        }
    }
}

impl fmt::Display for PhyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PhyId {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PhyId::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| ConfigError::UnknownPhy(s.to_string()))
    }
}

impl TryFrom<String> for PhyId {
    type Error = ConfigError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<PhyId> for String {
    fn from(p: PhyId) -> String {
        p.name().to_string()
    }
}

/// Timing and size constants of one PHY running TSCH.
///
/// The PHY overhead is kept in bits because BT5 500K carries a fractional
/// byte count (26.875 B = 215 bits); airtime is then exact integer arithmetic
/// rounded up to the next microsecond.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhyProfile {
    pub phy_id: PhyId,
    pub byte_duration_us: u32,
    pub phy_overhead_bits: u32,
    pub mac_header_bytes: u32,
    pub ack_size_bytes: u32,
    pub ack_wait_us: u32,
    pub rx_wait_us: u32,
    pub slot_duration_us: u32,
    pub app_packet_bytes: u32,
    /// Datasheet-style co-channel rejection, dB: -8 means interference up to
    /// 8 dB below the wanted signal is rejected (decoding needs SIR >= 8 dB).
    pub cochannel_rejection_db: f64,
    /// Disk radius per environment, indexed by [`EnvId::index`].
    pub range_m: [f64; 3],
}

impl PhyProfile {
    pub fn phy_overhead_bytes(&self) -> f64 {
        f64::from(self.phy_overhead_bits) / 8.0
    }

    pub fn range_m(&self, env: EnvId) -> f64 {
        self.range_m[env.index()]
    }
}

/// Built-in profile for `phy`.
pub fn phy_profile(phy: PhyId) -> PhyProfile {
    // Values shared by the four BT5 PHYs.
    let bt = |phy_id, byte_duration_us, phy_overhead_bits, slot_duration_us, range_m| PhyProfile {
        phy_id,
        byte_duration_us,
        phy_overhead_bits,
        mac_header_bytes: 6,
        ack_size_bytes: 2,
        ack_wait_us: 150,
        rx_wait_us: 150,
        slot_duration_us,
        app_packet_bytes: 251,
        cochannel_rejection_db: -8.0,
        range_m,
    };
    match phy {
        PhyId::Bt2M => bt(phy, 4, 9 * 8, 1_064, [23.0, 73.6, 170.0]),
        PhyId::Bt1M => bt(phy, 8, 8 * 8, 2_120, [26.0, 92.0, 212.0]),
        PhyId::Bt500K => bt(phy, 16, 215, 4_542, [40.0, 184.0, 413.0]),
        PhyId::Bt125K => bt(phy, 64, 9 * 8, 17_040, [43.0, 368.0, 473.0]),
        PhyId::Ieee802154 => PhyProfile {
            phy_id: phy,
            byte_duration_us: 32,
            phy_overhead_bits: 8 * 8,
            mac_header_bytes: 23,
            ack_size_bytes: 17,
            ack_wait_us: 400,
            rx_wait_us: 2_200,
            slot_duration_us: 4_256,
            app_packet_bytes: 102,
            cochannel_rejection_db: -3.0,
            range_m: [30.5, 175.0, 346.0],
        },
    }
}

fn bits_to_us(bits: u64, byte_duration_us: u32) -> u32 {
    let numerator = bits * u64::from(byte_duration_us);
    numerator.div_ceil(8) as u32
}

/// On-air time of a MAC frame carrying `payload_bytes`, in whole microseconds.
pub fn frame_airtime_us(phy: &PhyProfile, payload_bytes: u32) -> u32 {
    let bits = u64::from(phy.phy_overhead_bits)
        + 8 * (u64::from(phy.mac_header_bytes) + u64::from(payload_bytes));
    bits_to_us(bits, phy.byte_duration_us)
}

/// On-air time of an ACK. ACK sizes already include their MAC fields.
pub fn ack_airtime_us(phy: &PhyProfile) -> u32 {
    let bits = u64::from(phy.phy_overhead_bits) + 8 * u64::from(phy.ack_size_bytes);
    bits_to_us(bits, phy.byte_duration_us)
}
