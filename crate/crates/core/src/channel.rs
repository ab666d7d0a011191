//! Geometry, path-loss channel, Shannon rates, hop latencies and BPSK bit error rate.
//!
//! Links see thermal noise only; there is no interference, fading or
//! shadowing term.

use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::scenario::{GroundUser, Point, RadioUnit, UavRelay};

/// Path-loss and noise constants shared by every link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    /// Channel gain at 1 m.
    pub pathloss_ref: f64,
    pub pathloss_exp: f64,
    /// Noise power in W.
    pub noise_power: f64,
}

impl ChannelParams {
    pub fn from_config(c: &ScenarioConfig) -> Self {
        Self {
            pathloss_ref: c.pathloss_ref,
            pathloss_exp: c.pathloss_exp,
            noise_power: c.noise_power,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub distance: f64,
    pub gain: f64,
    pub snr: f64,
    /// bits/s
    pub rate: f64,
    pub ber: f64,
}

pub fn distance_gu_oru(gu: Point, oru: Point, oru_height: f64) -> f64 {
    oru_height.hypot(oru.distance(gu))
}

pub fn distance_gu_uav(gu: Point, uav: Point, altitude: f64) -> f64 {
    altitude.hypot(uav.distance(gu))
}

pub fn distance_uav_oru(uav: Point, oru: Point, altitude: f64, oru_height: f64) -> f64 {
    (oru_height - altitude).hypot(oru.distance(uav))
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// BPSK bit error rate, `0.5 * erfc(sqrt(snr))`.
pub fn bpsk_ber(snr: f64) -> f64 {
    0.5 * erfc(snr.max(0.0).sqrt())
}

pub fn link_budget(distance: f64, power: f64, bandwidth: f64, ch: &ChannelParams) -> LinkBudget {
    let gain = ch.pathloss_ref / distance.powf(ch.pathloss_exp);
    let snr = power * gain / ch.noise_power;
    LinkBudget {
        distance,
        gain,
        snr,
        rate: bandwidth * (1.0 + snr).log2(),
        ber: bpsk_ber(snr),
    }
}

/// Seconds to push `data_bits` over a link; infinite when the link carries nothing.
pub fn hop_latency(data_bits: u64, rate: f64) -> f64 {
    if rate > 0.0 {
        data_bits as f64 / rate
    } else {
        f64::INFINITY
    }
}

pub fn direct_link(gu: &GroundUser, oru: &RadioUnit, cfg: &ScenarioConfig) -> LinkBudget {
    let d = distance_gu_oru(gu.position, oru.position, oru.height);
    link_budget(d, cfg.power_ug, cfg.bandwidth_ug, &ChannelParams::from_config(cfg))
}

/// GU to UAV hop, with the UAV at `uav_pos`.
pub fn access_link(gu: &GroundUser, uav_pos: Point, altitude: f64, cfg: &ScenarioConfig) -> LinkBudget {
    let d = distance_gu_uav(gu.position, uav_pos, altitude);
    link_budget(d, cfg.power_ua, cfg.bandwidth_ua, &ChannelParams::from_config(cfg))
}

/// UAV to O-RU backhaul hop.
pub fn backhaul_link(uav_pos: Point, altitude: f64, oru: &RadioUnit, cfg: &ScenarioConfig) -> LinkBudget {
    let d = distance_uav_oru(uav_pos, oru.position, altitude, oru.height);
    link_budget(d, cfg.power_ag, cfg.bandwidth_ag, &ChannelParams::from_config(cfg))
}

pub fn direct_latency(data_bits: u64, gu: &GroundUser, oru: &RadioUnit, cfg: &ScenarioConfig) -> f64 {
    hop_latency(data_bits, direct_link(gu, oru, cfg).rate)
}

/// `(gu -> uav, uav -> oru)` latencies; each GU's data crosses the backhaul separately.
pub fn relay_latency(data_bits: u64, gu: &GroundUser, uav: &UavRelay, oru: &RadioUnit, cfg: &ScenarioConfig) -> (f64, f64) {
    let up = access_link(gu, uav.position, uav.altitude, cfg);
    let back = backhaul_link(uav.position, uav.altitude, oru, cfg);
    (hop_latency(data_bits, up.rate), hop_latency(data_bits, back.rate))
}

/// First hop a GU transmits on.
#[derive(Debug, Clone, Copy)]
pub enum FirstHop<'a> {
    Oru(&'a RadioUnit),
    Uav(&'a UavRelay),
}

/// BER of the GU's first hop, which is what the BER constraint bounds.
pub fn link_ber(gu: &GroundUser, target: FirstHop<'_>, cfg: &ScenarioConfig) -> f64 {
    match target {
        FirstHop::Oru(o) => direct_link(gu, o, cfg).ber,
        FirstHop::Uav(u) => access_link(gu, u.position, u.altitude, cfg).ber,
    }
}
