//! System parameters shared by every stage of the simulator.
//!
//! Field names in serialized form follow the conventional symbols (`M`, `N`,
//! `T`, `tau`, ...) so configuration files read like the parameter tables of
//! the literature. Defaults reproduce the reference scenario: 50 resource
//! blocks, 10% activity, path-loss exponent 3.76 inside a 1 km cell, 20 dB
//! transmit power and a 10 dB cell-edge SNR.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Convert decibels to a linear power ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

macro_rules! string_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(format!(
                        "unknown {} `{}` (expected one of: {})",
                        stringify!($name),
                        other,
                        [$($text),+].join(", ")
                    )),
                }
            }
        }
    };
}

string_enum! {
    /// Pilot sequence family.
    PilotType {
        Gaussian => "gaussian",
        Bpsk => "bpsk",
        Qpsk => "qpsk",
        ZadoffChu => "zadoff_chu",
        HadamardOpr => "hadamard_opr",
        DftOpr => "dft_opr",
    }
}

string_enum! {
    /// How decoded packets are removed from the residual pilot signal.
    SicMode {
        Perfect => "perfect",
        Imperfect => "imperfect",
    }
}

string_enum! {
    /// Source of the activity estimate handed to the decoder.
    UadMode {
        Estimated => "estimated",
        Perfect => "perfect",
    }
}

string_enum! {
    /// Whether every user above threshold is decoded per SIC iteration, or
    /// only the strongest one.
    DecodeOrder {
        Batch => "batch",
        Sequential => "sequential",
    }
}

/// All scalar parameters of one simulated system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    /// Total user count. When absent it is derived from `load`.
    #[serde(rename = "M", skip_serializing_if = "Option::is_none")]
    pub users: Option<usize>,
    /// Average number of active users per resource block.
    #[serde(rename = "L", skip_serializing_if = "Option::is_none")]
    pub load: Option<f64>,
    #[serde(rename = "N")]
    pub antennas: usize,
    #[serde(rename = "T")]
    pub rbs: usize,
    #[serde(rename = "tau")]
    pub pilot_len: usize,
    #[serde(rename = "p_a")]
    pub activity_prob: f64,
    #[serde(rename = "P_db")]
    pub data_power_db: f64,
    #[serde(rename = "Pp_db")]
    pub pilot_power_db: f64,
    pub cell_edge_snr_db: f64,
    #[serde(rename = "alpha")]
    pub path_loss_exp: f64,
    pub r_max: f64,
    pub r0: f64,
    #[serde(rename = "sigma_h2")]
    pub fading_var: f64,
    #[serde(rename = "k_s")]
    pub soliton_max_degree: usize,
    /// Accepted for compatibility with published parameter sets; unused by
    /// the truncated ideal soliton.
    #[serde(rename = "a_s")]
    pub soliton_a_s: f64,
    #[serde(rename = "gamma_th")]
    pub sinr_threshold: f64,
    #[serde(rename = "lambda")]
    pub rzf_reg: f64,
    pub j_max: usize,
    #[serde(rename = "gamma_pr")]
    pub activity_threshold: f64,
    pub pilot_type: PilotType,
    pub sic_mode: SicMode,
    pub uad_mode: UadMode,
    pub decode_order: DecodeOrder,
    pub runs: usize,
    pub seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            users: None,
            load: None,
            antennas: 16,
            rbs: 50,
            pilot_len: 20,
            activity_prob: 0.1,
            data_power_db: 20.0,
            pilot_power_db: 20.0,
            cell_edge_snr_db: 10.0,
            path_loss_exp: 3.76,
            r_max: 1000.0,
            r0: 100.0,
            fading_var: 1.0,
            soliton_max_degree: 27,
            soliton_a_s: 0.02,
            sinr_threshold: 10.0,
            rzf_reg: 1e-2,
            j_max: 100,
            activity_threshold: 1e-4,
            pilot_type: PilotType::Gaussian,
            sic_mode: SicMode::Perfect,
            uad_mode: UadMode::Estimated,
            decode_order: DecodeOrder::Batch,
            runs: 1000,
            seed: 1,
        }
    }
}

/// Load used when neither `M` nor `L` is given.
pub const DEFAULT_LOAD: f64 = 1.0;

fn invalid(key: &'static str, value: impl fmt::Display, accepted: &'static str) -> Error {
    Error::InvalidConfig {
        key,
        value: value.to_string(),
        accepted,
    }
}

impl SystemConfig {
    /// Default configuration at load `load` (so `M = round(L·T/p_a)`).
    pub fn with_load(load: f64) -> Self {
        SystemConfig {
            load: Some(load),
            ..Default::default()
        }
    }

    /// Number of users, derived from the load when `M` is not set.
    pub fn num_users(&self) -> usize {
        match self.users {
            Some(m) => m,
            None => {
                let load = self.load.unwrap_or(DEFAULT_LOAD);
                (load * self.rbs as f64 / self.activity_prob).round() as usize
            }
        }
    }

    /// Effective load `M·p_a/T`.
    pub fn effective_load(&self) -> f64 {
        self.num_users() as f64 * self.activity_prob / self.rbs as f64
    }

    pub fn data_power(&self) -> f64 {
        db_to_linear(self.data_power_db)
    }

    pub fn pilot_power(&self) -> f64 {
        db_to_linear(self.pilot_power_db)
    }

    /// Path-loss coefficient of a user at the cell edge.
    pub fn edge_path_loss(&self) -> f64 {
        (self.r_max / self.r0).powf(-self.path_loss_exp)
    }

    /// Noise variance placing the cell-edge user at the configured SNR.
    pub fn noise_variance(&self) -> f64 {
        crate::scenario::noise_variance(
            self.data_power(),
            self.fading_var,
            self.edge_path_loss(),
            self.cell_edge_snr_db,
        )
    }

    /// Check every range constraint, naming the first offending key.
    pub fn validate(&self) -> Result<()> {
        if let (Some(_), Some(_)) = (self.users, self.load) {
            return Err(invalid("M", "set together with L", "exactly one of M or L"));
        }
        if let Some(m) = self.users {
            if m == 0 {
                return Err(invalid("M", m, "integer >= 1"));
            }
        }
        if let Some(l) = self.load {
            if !(l > 0.0 && l.is_finite()) {
                return Err(invalid("L", l, "finite real > 0"));
            }
        }
        if self.antennas == 0 {
            return Err(invalid("N", self.antennas, "integer >= 1"));
        }
        if self.rbs == 0 {
            return Err(invalid("T", self.rbs, "integer >= 1"));
        }
        if self.pilot_len == 0 {
            return Err(invalid("tau", self.pilot_len, "integer >= 1"));
        }
        if !(self.activity_prob > 0.0 && self.activity_prob <= 1.0) {
            return Err(invalid("p_a", self.activity_prob, "0 < p_a <= 1"));
        }
        if self.num_users() == 0 {
            return Err(invalid("L", self.load.unwrap_or(DEFAULT_LOAD), "load giving M >= 1"));
        }
        for (key, v) in [
            ("P_db", self.data_power_db),
            ("Pp_db", self.pilot_power_db),
            ("cell_edge_snr_db", self.cell_edge_snr_db),
        ] {
            if !v.is_finite() {
                return Err(invalid(key, v, "finite dB value"));
            }
        }
        if !(self.path_loss_exp > 0.0 && self.path_loss_exp.is_finite()) {
            return Err(invalid("alpha", self.path_loss_exp, "finite real > 0"));
        }
        if !(self.r0 > 0.0 && self.r0 < self.r_max && self.r_max.is_finite()) {
            return Err(invalid("r0", self.r0, "0 < r0 < r_max"));
        }
        if !(self.fading_var > 0.0 && self.fading_var.is_finite()) {
            return Err(invalid("sigma_h2", self.fading_var, "finite real > 0"));
        }
        if self.soliton_max_degree == 0 || self.soliton_max_degree > self.rbs {
            return Err(invalid("k_s", self.soliton_max_degree, "1 <= k_s <= T"));
        }
        if !(self.sinr_threshold > 0.0 && self.sinr_threshold.is_finite()) {
            return Err(invalid("gamma_th", self.sinr_threshold, "finite real > 0"));
        }
        if !(self.rzf_reg >= 0.0 && self.rzf_reg.is_finite()) {
            return Err(invalid("lambda", self.rzf_reg, "finite real >= 0"));
        }
        if self.j_max == 0 {
            return Err(invalid("j_max", self.j_max, "integer >= 1"));
        }
        if !(self.activity_threshold >= 0.0) {
            return Err(invalid("gamma_pr", self.activity_threshold, "real >= 0"));
        }
        match self.pilot_type {
            PilotType::ZadoffChu if !crate::scenario::is_prime(self.pilot_len) => {
                return Err(invalid("tau", self.pilot_len, "prime length for zadoff_chu pilots"));
            }
            PilotType::HadamardOpr if !self.pilot_len.is_power_of_two() => {
                return Err(invalid(
                    "tau",
                    self.pilot_len,
                    "power-of-two length for hadamard_opr pilots",
                ));
            }
            _ => {}
        }
        Ok(())
    }
}
