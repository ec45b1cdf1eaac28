//! Scenario description and its `key = value` file format.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::adversary::{AttackConfig, DetectConfig};
use crate::baselines::{LeachConfig, PegasisConfig};
use crate::error::{Error, Result};
use crate::esrpsdc::EsrpsdcConfig;
use crate::model::Position;
use crate::radio::{EnergyModel, RadioConfig};
use crate::traffic::TrafficConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ProtocolKind {
    Esrpsdc,
    Leach,
    Pegasis,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 3] = [
        ProtocolKind::Esrpsdc,
        ProtocolKind::Leach,
        ProtocolKind::Pegasis,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::Esrpsdc => "esrpsdc",
            ProtocolKind::Leach => "leach",
            ProtocolKind::Pegasis => "pegasis",
        }
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProtocolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProtocolKind::ALL
            .into_iter()
            .find(|p| p.name() == s.trim())
            .ok_or_else(|| Error::Validation {
                key: "protocol".into(),
                msg: format!(
                    "unknown protocol `{}`; allowed: esrpsdc, leach, pegasis",
                    s.trim()
                ),
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub field_m: f64,
    pub n_nodes: usize,
    pub n_clusters: usize,
    pub sim_time_s: f64,
    pub bs_pos: Position,
    pub init_energy_j: f64,
    pub protocol: ProtocolKind,
    pub seed: u64,
    /// Redraw deployments until every node reaches the BS over links of this length.
    pub connected_range_m: Option<f64>,
    /// When set, only the sensor whose BS distance is closest to this value generates readings.
    pub source_distance_m: Option<f64>,
    pub processing_delay_s: f64,
    pub jitter_max_s: f64,
    pub traffic: TrafficConfig,
    pub radio: RadioConfig,
    pub energy: EnergyModel,
    pub attack: AttackConfig,
    pub detect: DetectConfig,
    pub esrpsdc: EsrpsdcConfig,
    pub leach: LeachConfig,
    pub pegasis: PegasisConfig,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            field_m: 1000.0,
            n_nodes: 500,
            n_clusters: 20,
            sim_time_s: 600.0,
            bs_pos: Position::new(50.0, 75.0),
            init_energy_j: 0.5,
            protocol: ProtocolKind::Esrpsdc,
            seed: 1,
            connected_range_m: None,
            source_distance_m: None,
            processing_delay_s: 0.001,
            jitter_max_s: 0.010,
            traffic: TrafficConfig::default(),
            radio: RadioConfig::default(),
            energy: EnergyModel::default(),
            attack: AttackConfig::default(),
            detect: DetectConfig::default(),
            esrpsdc: EsrpsdcConfig::default(),
            leach: LeachConfig::default(),
            pegasis: PegasisConfig::default(),
        }
    }
}

fn invalid(key: &str, msg: impl Into<String>) -> Error {
    Error::Validation {
        key: key.into(),
        msg: msg.into(),
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if !(self.field_m > 0.0) {
            return Err(invalid("field_m", "must be positive"));
        }
        if self.n_clusters == 0 {
            return Err(invalid("n_clusters", "must be >= 1"));
        }
        if self.n_nodes < self.n_clusters {
            return Err(invalid(
                "n_nodes",
                format!(
                    "{} nodes cannot form {} clusters (n_nodes >= n_clusters)",
                    self.n_nodes, self.n_clusters
                ),
            ));
        }
        if !(self.sim_time_s > 0.0) {
            return Err(invalid("sim_time_s", "must be positive"));
        }
        if !(self.init_energy_j > 0.0) {
            return Err(invalid("init_energy_j", "must be positive"));
        }
        let t = &self.traffic;
        if t.load_packets == 0 {
            return Err(invalid("load_packets", "must be >= 1"));
        }
        if t.payload_min == 0 || t.payload_min > t.payload_max {
            return Err(invalid("payload_bytes", "need 0 < min <= max"));
        }
        if !(t.send_interval_s > 0.0) {
            return Err(invalid("send_interval_s", "must be positive"));
        }
        if t.queue_cap == 0 || t.readings_per_frame == 0 {
            return Err(invalid(
                "queue_cap",
                "queue_cap and readings_per_frame must be >= 1",
            ));
        }
        if self.processing_delay_s < 0.0 || self.jitter_max_s < 0.0 {
            return Err(invalid("processing_delay_s", "delays must be >= 0"));
        }
        self.radio.validate()?;
        self.energy.validate()?;
        self.attack.validate()?;
        if self.detect.window_rounds == 0 || !(0.0..=1.0).contains(&self.detect.fraction) {
            return Err(invalid(
                "detect.window_rounds",
                "window >= 1 and fraction in [0,1]",
            ));
        }
        self.esrpsdc.validate()?;
        self.leach.validate()?;
        self.pegasis.validate()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Scenario::parse(&text)
    }

    /// Parses scenario text over the defaults, then validates.
    pub fn parse(text: &str) -> Result<Scenario> {
        let mut s = Scenario::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((k, v)) = body.split_once('=') else {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected `key = value`, got `{body}`"),
                });
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(Error::Parse {
                    line,
                    msg: "empty key".into(),
                });
            }
            s.set(k, v).map_err(|e| match e {
                Error::Parse { msg, .. } => Error::Parse { line, msg },
                other => other,
            })?;
        }
        s.finish();
        s.validate()?;
        Ok(s)
    }

    /// Re-derives values that depend on other keys.
    pub fn finish(&mut self) {
        self.radio.levels = self.radio.derive_bands();
        self.esrpsdc.n_clusters = self.n_clusters;
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let f = || parse_num::<f64>(key, v);
        let u = || parse_num::<u32>(key, v);
        let z = || parse_num::<usize>(key, v);
        let b = || parse_bool(key, v);
        match key {
            "field_m" => self.field_m = f()?,
            "n_nodes" => self.n_nodes = z()?,
            "n_clusters" => self.n_clusters = z()?,
            "sim_time_s" => self.sim_time_s = f()?,
            "bs_pos" => {
                let xy = parse_list(key, v)?;
                if xy.len() != 2 {
                    return Err(Error::Parse {
                        line: 0,
                        msg: format!("{key}: expected `x, y`"),
                    });
                }
                self.bs_pos = Position::new(xy[0], xy[1]);
            }
            "init_energy_j" => self.init_energy_j = f()?,
            "protocol" => self.protocol = v.parse()?,
            "seed" => self.seed = parse_num(key, v)?,
            "connected_range_m" => self.connected_range_m = Some(f()?),
            "source_distance_m" => self.source_distance_m = Some(f()?),
            "processing_delay_s" => self.processing_delay_s = f()?,
            "jitter_max_s" => self.jitter_max_s = f()?,
            "load_packets" => self.traffic.load_packets = u()?,
            "send_interval_s" => self.traffic.send_interval_s = f()?,
            "payload_bytes" => {
                let (lo, hi) = match v.split_once("..") {
                    Some((a, b)) => (parse_num::<u32>(key, a)?, parse_num::<u32>(key, b)?),
                    None => {
                        let x = u()?;
                        (x, x)
                    }
                };
                self.traffic.payload_min = lo;
                self.traffic.payload_max = hi;
            }
            "queue_cap" => self.traffic.queue_cap = z()?,
            "readings_per_frame" => self.traffic.readings_per_frame = z()?,

            "radio.tx_power_dbm" => self.radio.tx_power_dbm = parse_list(key, v)?,
            "radio.bs_power_dbm" => self.radio.bs_power_dbm = parse_list(key, v)?,
            "radio.gain_tx" => self.radio.antenna_gain_tx = f()?,
            "radio.gain_rx" => self.radio.antenna_gain_rx = f()?,
            "radio.height_m" => self.radio.antenna_height_m = f()?,
            "radio.noise_floor_dbm" => self.radio.noise_floor_dbm = f()?,
            "radio.rx_threshold_dbm" => self.radio.rx_threshold_dbm = f()?,
            "radio.bandwidth_bps" => self.radio.bandwidth_bps = f()?,
            "radio.margin_db" => self.radio.margin_db = f()?,
            "radio.packet_error_prob" => self.radio.packet_error_prob = f()?,

            "energy.e_elec" => self.energy.e_elec_j_per_bit = f()?,
            "energy.eps_fs" => {
                self.energy.eps_fs_j_per_bit_m2 = f()?;
                self.energy.crossover_d_m =
                    (self.energy.eps_fs_j_per_bit_m2 / self.energy.eps_mp_j_per_bit_m4).sqrt();
            }
            "energy.eps_mp" => {
                self.energy.eps_mp_j_per_bit_m4 = f()?;
                self.energy.crossover_d_m =
                    (self.energy.eps_fs_j_per_bit_m2 / self.energy.eps_mp_j_per_bit_m4).sqrt();
            }
            "energy.crossover_m" => self.energy.crossover_d_m = f()?,
            "energy.e_aggregate" => self.energy.e_aggregate_j_per_bit = f()?,

            "attack.fraction" => self.attack.malicious_fraction = f()?,
            "attack.single" => self.attack.single = b()?,
            "attack.false_advert" => self.attack.false_advert = b()?,
            "attack.drop_prob" => self.attack.drop_prob = f()?,
            "attack.divert" => self.attack.divert = b()?,
            "attack.activation_s" => self.attack.activation_s = f()?,
            "attack.snr_bonus_db" => self.attack.snr_bonus_db = f()?,

            "detect.enabled" => self.detect.enabled = b()?,
            "detect.window_rounds" => self.detect.window_rounds = u()?,
            "detect.fraction" => self.detect.fraction = f()?,
            "detect.min_attempts" => self.detect.min_attempts = u()?,

            "esrpsdc.p" => self.esrpsdc.threshold.p = f()?,
            "esrpsdc.c" => self.esrpsdc.threshold.c = f()?,
            "esrpsdc.k" => self.esrpsdc.threshold.k = f()?,
            "esrpsdc.m" => self.esrpsdc.suffix_bytes = z()?,
            "esrpsdc.epoch_rounds" => self.esrpsdc.rounds_per_epoch = u()?,
            "esrpsdc.abdicate_fraction" => self.esrpsdc.abdicate_fraction = f()?,
            "esrpsdc.round_s" => self.esrpsdc.round_s = f()?,
            "esrpsdc.slot_s" => self.esrpsdc.slot_s = f()?,
            "esrpsdc.stage_s" => self.esrpsdc.stage_s = f()?,
            "esrpsdc.setup_s" => self.esrpsdc.setup_s = f()?,
            "esrpsdc.advert_power_dbm" => self.esrpsdc.advert_power_dbm = f()?,
            "esrpsdc.state_power_dbm" => self.esrpsdc.state_power_dbm = f()?,
            "esrpsdc.route_power_dbm" => self.esrpsdc.route_power_dbm = f()?,
            "esrpsdc.flood_power_dbm" => self.esrpsdc.flood_power_dbm = f()?,
            "esrpsdc.control_bytes" => self.esrpsdc.control_bytes = u()?,
            "esrpsdc.aggregate_bytes" => self.esrpsdc.aggregate_bytes = u()?,
            "esrpsdc.collect_timeout_s" => self.esrpsdc.collect_timeout_s = f()?,

            "leach.p" => self.leach.p = Some(f()?),
            "leach.advert_power_dbm" => self.leach.advert_power_dbm = f()?,
            "leach.round_s" => self.leach.round_s = f()?,
            "leach.slot_s" => self.leach.slot_s = f()?,

            "pegasis.hop_time_s" => self.pegasis.hop_time_s = f()?,
            "pegasis.round_s" => self.pegasis.round_s = f()?,
            _ => {
                return Err(Error::Parse {
                    line: 0,
                    msg: format!("unknown key `{key}`"),
                })
            }
        }
        Ok(())
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse::<T>().map_err(|_| Error::Parse {
        line: 0,
        msg: format!("{key}: cannot parse `{}`", v.trim()),
    })
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(Error::Parse {
            line: 0,
            msg: format!("{key}: expected true/false, got `{other}`"),
        }),
    }
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|x| parse_num::<f64>(key, x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_is_defaults() {
        let s = Scenario::parse("").unwrap();
        assert_eq!(s.n_nodes, 500);
        assert_eq!(s.n_clusters, 20);
        assert_eq!(s.sim_time_s, 600.0);
        assert_eq!(s.bs_pos, Position::new(50.0, 75.0));
        assert_eq!(s.init_energy_j, 0.5);
        assert_eq!(s.field_m, 1000.0);
        assert_eq!((s.traffic.payload_min, s.traffic.payload_max), (30, 70));
        assert_eq!(s.radio.bandwidth_bps, 20_000.0);
        assert_eq!(s.radio.rx_threshold_dbm, -111.0);
    }

    #[test]
    fn overrides_and_comments() {
        let s = Scenario::parse("# header\nn_nodes = 50  # small\nattack.fraction = 0.30\nbs_pos = 0, 0\npayload_bytes = 40..60\nprotocol = leach\n").unwrap();
        assert_eq!(s.n_nodes, 50);
        assert_eq!(s.attack.malicious_fraction, 0.30);
        assert_eq!(s.bs_pos, Position::new(0.0, 0.0));
        assert_eq!((s.traffic.payload_min, s.traffic.payload_max), (40, 60));
        assert_eq!(s.protocol, ProtocolKind::Leach);
    }

    #[test]
    fn errors() {
        match Scenario::parse("n_nodes = 10\nn_clusters = 20\n") {
            Err(Error::Validation { key, .. }) => assert_eq!(key, "n_nodes"),
            other => panic!("{other:?}"),
        }
        match Scenario::parse("protocol = pegasus") {
            Err(Error::Validation { key, msg }) => {
                assert_eq!(key, "protocol");
                assert!(
                    msg.contains("esrpsdc") && msg.contains("leach") && msg.contains("pegasis")
                );
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            Scenario::parse("\n\nbogus = 1"),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(matches!(
            Scenario::parse("n_nodes = lots"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            Scenario::parse("just words"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            Scenario::parse("attack.drop_prob = 2"),
            Err(Error::Validation { .. })
        ));
    }
}
