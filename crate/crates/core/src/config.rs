//! Scenario configuration.
//!
//! Configurations are TOML documents with four sections. Every key has a
//! default, so a file only needs to list what it overrides:
//!
//! ```toml
//! [scenario]
//! num_rrh = 10
//! antennas_per_rrh = 64
//! num_ue = 100
//! pilot_dim = 40
//!
//! [schemes]
//! combining = ["gzf", "lmmse"]
//! ```
//!
//! Unknown keys are rejected, and validation errors name the offending key.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CsiMode {
    /// Perfect knowledge of the channels on the association edges.
    Ideal,
    /// Subspace-projection estimates from contaminated UL pilots.
    Estimated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combining {
    Gzf,
    Lmmse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CentralPower {
    Duality,
    Epa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LocalPrecoding {
    Lpzf,
    Lzf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LocalPower {
    Epa,
    Ppa,
}

/// How `||v_{l,k}||^2` enters the isotropic interference term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaNorm {
    /// `1 / |C_k|`, the equal-block-norm approximation.
    ClusterSize,
    /// The actual squared block norm.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateUnit {
    Bits,
    Nats,
}

impl RateUnit {
    pub fn log1p(self, sinr: f64) -> f64 {
        match self {
            RateUnit::Bits => (1.0 + sinr).log2(),
            RateUnit::Nats => sinr.ln_1p(),
        }
    }
}

/// One DL transmission scheme of the evaluation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    /// UL combiners reused as DL precoders with a centralized power vector.
    Central(Combining, CentralPower),
    /// Per-RRH precoders with per-RRH power budgets.
    Local(LocalPrecoding, LocalPower),
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        use CentralPower as C;
        use Combining::*;
        use LocalPower as P;
        use LocalPrecoding::*;
        match self {
            Scheme::Central(Gzf, C::Duality) => "gzf-duality",
            Scheme::Central(Gzf, C::Epa) => "gzf-epa",
            Scheme::Central(Lmmse, C::Duality) => "lmmse-duality",
            Scheme::Central(Lmmse, C::Epa) => "lmmse-epa",
            Scheme::Local(Lpzf, P::Epa) => "lpzf-epa",
            Scheme::Local(Lpzf, P::Ppa) => "lpzf-ppa",
            Scheme::Local(Lzf, P::Epa) => "lzf-epa",
            Scheme::Local(Lzf, P::Ppa) => "lzf-ppa",
        }
    }

    /// Centralized schemes also have an UL rate (the combiner's).
    pub fn has_uplink(&self) -> bool {
        matches!(self, Scheme::Central(..))
    }

    pub fn all() -> Vec<Scheme> {
        SchemeSelection::default().schemes()
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::all()
            .into_iter()
            .find(|sch| sch.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::invalid("scheme", format!("unknown scheme `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub num_rrh: usize,
    pub antennas_per_rrh: usize,
    pub num_ue: usize,
    pub pilot_dim: usize,
    pub coherence_symbols: usize,
    pub side_m: f64,
    pub angular_spread_deg: f64,
    pub max_cluster_size: usize,
    /// Association SNR threshold, linear.
    pub snr_threshold: f64,
    pub noise_dbm: f64,
    pub n_layouts: usize,
    pub n_fading: usize,
    pub seed: u64,
    pub csi: CsiMode,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            num_rrh: 10,
            antennas_per_rrh: 64,
            num_ue: 100,
            pilot_dim: 40,
            coherence_symbols: 200,
            side_m: 225.0,
            angular_spread_deg: 22.5,
            max_cluster_size: 10,
            snr_threshold: 1.0,
            noise_dbm: -96.0,
            n_layouts: 50,
            n_fading: 100,
            seed: 1,
            csi: CsiMode::Estimated,
        }
    }
}

/// UMi street-canyon pathloss parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathlossParams {
    pub carrier_ghz: f64,
    pub h_bs_m: f64,
    pub h_ut_m: f64,
    pub shadow_sigma_los_db: f64,
    pub shadow_sigma_nlos_db: f64,
}

impl Default for PathlossParams {
    fn default() -> Self {
        Self {
            carrier_ghz: 3.7,
            h_bs_m: 10.0,
            h_ut_m: 1.5,
            shadow_sigma_los_db: 4.0,
            shadow_sigma_nlos_db: 7.82,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeSelection {
    pub combining: Vec<Combining>,
    pub central_power: Vec<CentralPower>,
    pub local_precoding: Vec<LocalPrecoding>,
    pub local_power: Vec<LocalPower>,
}

impl Default for SchemeSelection {
    fn default() -> Self {
        Self {
            combining: vec![Combining::Gzf, Combining::Lmmse],
            central_power: vec![CentralPower::Duality, CentralPower::Epa],
            local_precoding: vec![LocalPrecoding::Lpzf, LocalPrecoding::Lzf],
            local_power: vec![LocalPower::Epa, LocalPower::Ppa],
        }
    }
}

impl SchemeSelection {
    /// Full cross of the selected centralized and local options.
    pub fn schemes(&self) -> Vec<Scheme> {
        let mut out = Vec::new();
        for &c in &self.combining {
            for &p in &self.central_power {
                out.push(Scheme::Central(c, p));
            }
        }
        for &c in &self.local_precoding {
            for &p in &self.local_power {
                out.push(Scheme::Local(c, p));
            }
        }
        out.sort();
        out.dedup();
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    /// Singular values at or below `eps_rank * sigma_max` count as zero.
    pub eps_rank: f64,
    /// GZF outage threshold on `||P h|| / ||h||`.
    pub eps_zf: f64,
    pub theta_norm: ThetaNorm,
    pub rate_unit: RateUnit,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            eps_rank: 1e-9,
            eps_zf: 1e-6,
            theta_norm: ThetaNorm::ClusterSize,
            rate_unit: RateUnit::Bits,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub scenario: Scenario,
    pub pathloss: PathlossParams,
    pub schemes: SchemeSelection,
    pub numerics: Numerics,
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration is always serializable")
    }

    /// A small scenario that runs in well under a second per layout.
    pub fn desk_scale() -> Self {
        let mut cfg = SimConfig::default();
        cfg.scenario.num_rrh = 4;
        cfg.scenario.antennas_per_rrh = 8;
        cfg.scenario.num_ue = 12;
        cfg.scenario.pilot_dim = 6;
        cfg.scenario.n_layouts = 3;
        cfg.scenario.n_fading = 20;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.scenario;
        let positive = [
            ("scenario.num_rrh", s.num_rrh),
            ("scenario.antennas_per_rrh", s.antennas_per_rrh),
            ("scenario.num_ue", s.num_ue),
            ("scenario.pilot_dim", s.pilot_dim),
            ("scenario.coherence_symbols", s.coherence_symbols),
            ("scenario.max_cluster_size", s.max_cluster_size),
            ("scenario.n_layouts", s.n_layouts),
            ("scenario.n_fading", s.n_fading),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::invalid(key, "must be at least 1"));
            }
        }
        if s.pilot_dim >= s.coherence_symbols {
            return Err(Error::invalid(
                "scenario.pilot_dim",
                format!("must be smaller than coherence_symbols ({})", s.coherence_symbols),
            ));
        }
        if !(s.side_m > 0.0 && s.side_m.is_finite()) {
            return Err(Error::invalid("scenario.side_m", "must be positive"));
        }
        if !(s.angular_spread_deg > 0.0 && s.angular_spread_deg <= 360.0) {
            return Err(Error::invalid("scenario.angular_spread_deg", "must lie in (0, 360]"));
        }
        if !(s.snr_threshold > 0.0 && s.snr_threshold.is_finite()) {
            return Err(Error::invalid("scenario.snr_threshold", "must be positive"));
        }
        if !s.noise_dbm.is_finite() {
            return Err(Error::invalid("scenario.noise_dbm", "must be finite"));
        }
        let p = &self.pathloss;
        for (key, v) in [
            ("pathloss.carrier_ghz", p.carrier_ghz),
            ("pathloss.h_bs_m", p.h_bs_m),
            ("pathloss.h_ut_m", p.h_ut_m),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(key, "must be positive"));
            }
        }
        for (key, v) in [
            ("pathloss.shadow_sigma_los_db", p.shadow_sigma_los_db),
            ("pathloss.shadow_sigma_nlos_db", p.shadow_sigma_nlos_db),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(key, "must be non-negative"));
            }
        }
        let n = &self.numerics;
        if !(n.eps_rank > 0.0 && n.eps_rank < 1.0) {
            return Err(Error::invalid("numerics.eps_rank", "must lie in (0, 1)"));
        }
        if !(n.eps_zf > 0.0 && n.eps_zf < 1.0) {
            return Err(Error::invalid("numerics.eps_zf", "must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn angular_spread_rad(&self) -> f64 {
        self.scenario.angular_spread_deg.to_radians()
    }

    /// Pre-log factor `1 - tau_p / T`.
    pub fn prelog(&self) -> f64 {
        1.0 - self.scenario.pilot_dim as f64 / self.scenario.coherence_symbols as f64
    }

    /// Per-RRH DL budget `K / L`.
    pub fn rrh_power_budget(&self) -> f64 {
        self.scenario.num_ue as f64 / self.scenario.num_rrh as f64
    }
}
