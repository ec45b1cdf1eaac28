//! Two-ray link budget and first-order radio energy model.

use crate::error::{Error, Result};
use crate::model::{distance, LevelBand, NodeState};

#[derive(Debug, Clone, PartialEq)]
pub struct RadioConfig {
    /// Sensor transmit power levels, strictly increasing.
    pub tx_power_dbm: Vec<f64>,
    /// Base-station sweep powers; one level band per entry.
    pub bs_power_dbm: Vec<f64>,
    pub antenna_gain_tx: f64,
    pub antenna_gain_rx: f64,
    pub antenna_height_m: f64,
    pub noise_floor_dbm: f64,
    pub rx_threshold_dbm: f64,
    pub bandwidth_bps: f64,
    pub margin_db: f64,
    /// Independent per-reception loss probability. Off by default.
    pub packet_error_prob: f64,
    pub levels: Vec<LevelBand>,
}

impl Default for RadioConfig {
    fn default() -> Self {
        let mut cfg = RadioConfig {
            tx_power_dbm: (0..11).map(|i| -40.0 + 5.0 * i as f64).collect(),
            bs_power_dbm: vec![-17.0, -5.0, 2.0, 7.0],
            antenna_gain_tx: 1.0,
            antenna_gain_rx: 1.0,
            antenna_height_m: 1.5,
            noise_floor_dbm: -111.0,
            rx_threshold_dbm: -111.0,
            bandwidth_bps: 20_000.0,
            margin_db: 3.0,
            packet_error_prob: 0.0,
            levels: Vec::new(),
        };
        cfg.levels = cfg.derive_bands();
        cfg
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |k: &str, m: &str| {
            Err(Error::Validation {
                key: k.into(),
                msg: m.into(),
            })
        };
        if self.tx_power_dbm.is_empty() || self.tx_power_dbm.windows(2).any(|w| w[0] >= w[1]) {
            return bad(
                "radio.tx_power_dbm",
                "must be non-empty and strictly increasing",
            );
        }
        if self.bs_power_dbm.is_empty() || self.bs_power_dbm.windows(2).any(|w| w[0] >= w[1]) {
            return bad(
                "radio.bs_power_dbm",
                "must be non-empty and strictly increasing",
            );
        }
        if self.noise_floor_dbm > self.rx_threshold_dbm {
            return bad(
                "radio.noise_floor_dbm",
                "must not exceed radio.rx_threshold_dbm",
            );
        }
        if !(self.bandwidth_bps > 0.0) {
            return bad("radio.bandwidth_bps", "must be positive");
        }
        if !(0.0..=1.0).contains(&self.packet_error_prob) {
            return bad("radio.packet_error_prob", "must be in [0,1]");
        }
        if self.antenna_gain_tx <= 0.0
            || self.antenna_gain_rx <= 0.0
            || self.antenna_height_m <= 0.0
        {
            return bad("radio.antenna", "gains and height must be positive");
        }
        Ok(())
    }

    fn geometry_db(&self) -> f64 {
        let h2 = self.antenna_height_m * self.antenna_height_m;
        10.0 * (self.antenna_gain_tx * self.antenna_gain_rx * h2 * h2).log10()
    }

    /// Largest distance at which `power_dbm` still meets the reception threshold.
    pub fn range_m(&self, power_dbm: f64) -> f64 {
        10f64.powf((power_dbm + self.geometry_db() - self.rx_threshold_dbm) / 40.0)
    }

    /// One band per BS sweep power, contiguous from 0 and upper-inclusive.
    pub fn derive_bands(&self) -> Vec<LevelBand> {
        let mut lower = 0.0;
        self.bs_power_dbm
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let upper = self.range_m(p);
                let b = LevelBand {
                    level: i as u32 + 1,
                    lower_m: lower,
                    upper_m: upper,
                };
                lower = upper;
                b
            })
            .collect()
    }

    pub fn max_power(&self) -> f64 {
        *self.tx_power_dbm.last().expect("validated non-empty")
    }

    pub fn min_power(&self) -> f64 {
        self.tx_power_dbm[0]
    }

    /// Smallest sensor level whose coverage reaches `d` meters, or the maximum level if none does.
    pub fn power_for_distance(&self, d: f64) -> f64 {
        self.tx_power_dbm
            .iter()
            .copied()
            .find(|&p| self.range_m(p) >= d)
            .unwrap_or_else(|| self.max_power())
    }

    pub fn serialization_s(&self, bits: u64) -> f64 {
        bits as f64 / self.bandwidth_bps
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub rx_power_dbm: f64,
    pub snr_db: f64,
    pub receivable: bool,
}

/// Pr = Pt + 10·log10(Gt·Gr·ht²·hr² / d⁴).
pub fn two_ray_rx_power(tx_power_dbm: f64, d: f64, cfg: &RadioConfig) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::InvalidDistance(d));
    }
    Ok(tx_power_dbm + cfg.geometry_db() - 40.0 * d.log10())
}

pub fn link_budget(tx_power_dbm: f64, d: f64, cfg: &RadioConfig) -> Result<LinkBudget> {
    let rx = two_ray_rx_power(tx_power_dbm, d, cfg)?;
    Ok(LinkBudget {
        rx_power_dbm: rx,
        snr_db: rx - cfg.noise_floor_dbm,
        receivable: rx >= cfg.rx_threshold_dbm,
    })
}

pub fn snr(
    tx: &NodeState,
    rx: &NodeState,
    tx_power_dbm: f64,
    cfg: &RadioConfig,
) -> Result<LinkBudget> {
    let d = distance(tx.pos, rx.pos);
    if d == 0.0 {
        return Err(Error::CoincidentNodes(tx.id, rx.id));
    }
    link_budget(tx_power_dbm, d, cfg)
}

/// Smallest configured level that reaches the advertiser with `margin_db` to spare, given
/// the path loss implied by the advert's received strength.
pub fn min_tx_power_for(
    rssi_of_advert_dbm: f64,
    advert_tx_power_dbm: f64,
    cfg: &RadioConfig,
) -> Result<f64> {
    let loss = advert_tx_power_dbm - rssi_of_advert_dbm;
    let need = cfg.rx_threshold_dbm + cfg.margin_db;
    cfg.tx_power_dbm
        .iter()
        .copied()
        .find(|&p| p - loss >= need)
        .ok_or(Error::Unreachable)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyModel {
    pub e_elec_j_per_bit: f64,
    pub eps_fs_j_per_bit_m2: f64,
    pub eps_mp_j_per_bit_m4: f64,
    pub crossover_d_m: f64,
    pub e_aggregate_j_per_bit: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        let fs = 10e-12;
        let mp = 0.0013e-12;
        EnergyModel {
            e_elec_j_per_bit: 50e-9,
            eps_fs_j_per_bit_m2: fs,
            eps_mp_j_per_bit_m4: mp,
            crossover_d_m: (fs / mp).sqrt(),
            e_aggregate_j_per_bit: 5e-9,
        }
    }
}

impl EnergyModel {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.e_elec_j_per_bit,
            self.eps_fs_j_per_bit_m2,
            self.eps_mp_j_per_bit_m4,
            self.crossover_d_m,
            self.e_aggregate_j_per_bit,
        ];
        if all.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Validation {
                key: "energy".into(),
                msg: "all coefficients must be positive".into(),
            });
        }
        Ok(())
    }
}

pub fn tx_energy(bits: u64, d: f64, em: &EnergyModel) -> f64 {
    let b = bits as f64;
    if d < em.crossover_d_m {
        em.e_elec_j_per_bit * b + em.eps_fs_j_per_bit_m2 * b * d * d
    } else {
        em.e_elec_j_per_bit * b + em.eps_mp_j_per_bit_m4 * b * d * d * d * d
    }
}

pub fn rx_energy(bits: u64, em: &EnergyModel) -> f64 {
    em.e_elec_j_per_bit * bits as f64
}
