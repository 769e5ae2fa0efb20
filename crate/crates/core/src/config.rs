//! System configuration: all scalar system parameters plus RNG seed.
//!
//! Configs load from a sectioned key-value text file (TOML) with sections
//! `[system]`, `[geometry]`, `[scatterers]`, `[training]`. Unknown keys are
//! hard errors.

use crate::error::{CoreError, CoreResult};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// RIS architecture selector. `Ideal` (per-subcarrier free phases) is a
/// test-only relaxation used by the perfect-CSI benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RisArch {
    Classic,
    TtdRis,
    SaRis,
    Ideal,
}

impl RisArch {
    pub fn as_str(&self) -> &'static str {
        match self {
            RisArch::Classic => "classic",
            RisArch::TtdRis => "ttd-ris",
            RisArch::SaRis => "sa-ris",
            RisArch::Ideal => "ideal",
        }
    }
}

impl std::str::FromStr for RisArch {
    type Err = CoreError;
    fn from_str(s: &str) -> CoreResult<Self> {
        match s {
            "classic" => Ok(RisArch::Classic),
            "ttd-ris" => Ok(RisArch::TtdRis),
            "sa-ris" => Ok(RisArch::SaRis),
            "ideal" => Ok(RisArch::Ideal),
            other => Err(CoreError::config(format!(
                "unknown architecture `{other}` (expected classic | ttd-ris | sa-ris | ideal)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    /// BS transmit antennas (ULA).
    pub m: usize,
    /// UE receive antennas (ULA).
    pub u: usize,
    /// RIS grid rows (x axis).
    pub n1: usize,
    /// RIS grid columns (z axis).
    pub n2: usize,
    /// RF chains at the BS.
    pub m_rf: usize,
    /// Transmit data streams.
    pub n_s: usize,
    /// TTDs per RF chain; each TTD feeds p = m/k phase shifters.
    pub k_ttd: usize,
    /// TTD-RIS subarray grid.
    pub s1: usize,
    pub s2: usize,
    /// OFDM subcarriers.
    pub b: usize,
    /// System bandwidth, Hz.
    pub bandwidth_hz: f64,
    /// Carrier frequency, Hz.
    pub carrier_hz: f64,
    /// Maximum TTD delay, s.
    pub t_max_s: f64,
    /// Cyclic prefix length.
    pub l_cp: usize,
    /// Coherence-block symbols.
    pub q_block: usize,
    /// Training symbols within the block.
    pub q_tr: usize,
    /// Transmit power per stream, W.
    pub p_t_w: f64,
    /// Noise power, W (equal across subcarriers).
    pub sigma0_sq_w: f64,
    /// Antenna/element gains, dBi.
    pub gain_bs_dbi: f64,
    pub gain_ue_dbi: f64,
    pub gain_ris_dbi: f64,
    /// Master RNG seed.
    pub rng_seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    /// BS array center, m.
    pub bs_center: [f64; 3],
    /// RIS panel center, m.
    pub ris_center: [f64; 3],
    /// UE sampling disk radius, m. The disk is centered on the RIS ground
    /// projection at `ue_height_m`.
    pub ue_radius_m: f64,
    pub ue_height_m: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScattererSection {
    /// Number of clusters.
    pub clusters: usize,
    /// Scatterers per cluster.
    pub per_cluster: usize,
    /// Isotropic Gaussian spread of scatterers around their cluster center, m.
    #[serde(default = "default_spread")]
    pub spread_m: f64,
    /// Axis-aligned box for cluster centers.
    pub box_min: [f64; 3],
    pub box_max: [f64; 3],
    /// Minimum clearance between a cluster center and the BS/RIS centers, m.
    #[serde(default = "default_clearance")]
    pub min_clearance_m: f64,
    /// Per-bounce reflection loss, dB.
    #[serde(default = "default_reflection_loss")]
    pub reflection_loss_db: f64,
    /// Whether the BS->RIS and RIS->UE LOS paths are present.
    #[serde(default = "default_true")]
    pub los_paths: bool,
}

fn default_spread() -> f64 {
    1.0
}
fn default_clearance() -> f64 {
    0.5
}
fn default_reflection_loss() -> f64 {
    6.0
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    /// Adam base learning rate.
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub epsilon: f64,
    /// Scenarios per mini-batch.
    #[serde(default = "default_batch")]
    pub batch: usize,
    /// Total training iterations.
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    /// Dataset sizes for `gen`.
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    #[serde(default = "default_n_val")]
    pub n_val: usize,
    /// Downlink transmit SNR, dB (fixes sigma0 relative to p_t during eval).
    #[serde(default = "default_snr_t")]
    pub snr_t_db: f64,
    /// Fixed uplink receive SNR, dB. When absent, training draws from
    /// `snr_r_set_db` each iteration.
    #[serde(default)]
    pub snr_r_db: Option<f64>,
    #[serde(default = "default_snr_r_set")]
    pub snr_r_set_db: Vec<f64>,
    /// MLP expansion factor in the shared network.
    #[serde(default = "default_upsilon")]
    pub upsilon: usize,
    /// Per-subcarrier precoder power target; defaults to n_s when absent.
    #[serde(default)]
    pub rho: Option<f64>,
    /// Halve the learning rate every this many iterations (0 disables).
    #[serde(default)]
    pub lr_decay_every: usize,
    /// Perfect-CSI projected-gradient benchmark controls.
    #[serde(default = "default_pgd_steps")]
    pub pgd_steps: usize,
    #[serde(default = "default_pgd_step_size")]
    pub pgd_step_size: f64,
}

fn default_lr() -> f64 {
    1e-3
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}
fn default_batch() -> usize {
    8
}
fn default_iterations() -> usize {
    400
}
fn default_n_train() -> usize {
    32
}
fn default_n_val() -> usize {
    8
}
fn default_snr_t() -> f64 {
    20.0
}
fn default_snr_r_set() -> Vec<f64> {
    vec![0.0, 5.0, 10.0, 15.0, 20.0]
}
fn default_upsilon() -> usize {
    2
}
fn default_pgd_steps() -> usize {
    150
}
fn default_pgd_step_size() -> f64 {
    1e-2
}

impl Default for TrainingSection {
    fn default() -> Self {
        TrainingSection {
            lr: default_lr(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_eps(),
            batch: default_batch(),
            iterations: default_iterations(),
            n_train: default_n_train(),
            n_val: default_n_val(),
            snr_t_db: default_snr_t(),
            snr_r_db: None,
            snr_r_set_db: default_snr_r_set(),
            upsilon: default_upsilon(),
            rho: None,
            lr_decay_every: 0,
            pgd_steps: default_pgd_steps(),
            pgd_step_size: default_pgd_step_size(),
        }
    }
}

/// Full system configuration: everything needed to regenerate a scenario,
/// train and evaluate from a seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub system: SystemSection,
    pub geometry: GeometrySection,
    pub scatterers: ScattererSection,
    #[serde(default)]
    pub training: TrainingSection,
}

impl SystemConfig {
    /// Element spacing d = c/(2 f_c), m. Derived, never stored.
    pub fn spacing(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.system.carrier_hz)
    }

    /// Carrier wavelength, m.
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.system.carrier_hz
    }

    /// Total RIS elements N = N1*N2.
    pub fn n_ris(&self) -> usize {
        self.system.n1 * self.system.n2
    }

    /// Phase shifters per TTD, P = M/K.
    pub fn p_per_ttd(&self) -> usize {
        self.system.m / self.system.k_ttd
    }

    /// TTD-RIS subarrays S = S1*S2.
    pub fn s_subarrays(&self) -> usize {
        self.system.s1 * self.system.s2
    }

    /// Elements per TTD-RIS subarray along each axis.
    pub fn sbar(&self) -> (usize, usize) {
        (self.system.n1 / self.system.s1, self.system.n2 / self.system.s2)
    }

    /// Subcarrier frequency f_b = f_c + W(2b-1-B)/(2B) for 1-based b.
    pub fn subcarrier_hz(&self, b: usize) -> f64 {
        let bb = self.system.b as f64;
        self.system.carrier_hz
            + self.system.bandwidth_hz * (2.0 * b as f64 - 1.0 - bb) / (2.0 * bb)
    }

    /// Per-subcarrier precoder power target rho (defaults to n_s).
    pub fn rho(&self) -> f64 {
        self.training.rho.unwrap_or(self.system.n_s as f64)
    }

    /// Downlink transmit SNR in dB implied by (p_t, sigma0).
    pub fn snr_t_db(&self) -> f64 {
        10.0 * (self.system.p_t_w / self.system.sigma0_sq_w).log10()
    }

    pub fn validate(&self) -> CoreResult<()> {
        let s = &self.system;
        let counts = [
            ("m", s.m),
            ("u", s.u),
            ("n1", s.n1),
            ("n2", s.n2),
            ("m_rf", s.m_rf),
            ("n_s", s.n_s),
            ("k_ttd", s.k_ttd),
            ("s1", s.s1),
            ("s2", s.s2),
            ("b", s.b),
            ("q_block", s.q_block),
        ];
        for (name, v) in counts {
            if v < 1 {
                return Err(CoreError::config(format!("{name} must be >= 1, got {v}")));
            }
        }
        if s.m % s.k_ttd != 0 {
            return Err(CoreError::dim(format!(
                "k_ttd ({}) must divide m ({})",
                s.k_ttd, s.m
            )));
        }
        if s.n1 % s.s1 != 0 || s.n2 % s.s2 != 0 {
            return Err(CoreError::dim(format!(
                "subarray grid ({}, {}) must divide RIS grid ({}, {})",
                s.s1, s.s2, s.n1, s.n2
            )));
        }
        if s.q_tr > s.q_block {
            return Err(CoreError::config(format!(
                "q_tr ({}) must not exceed q_block ({})",
                s.q_tr, s.q_block
            )));
        }
        if s.q_tr % 2 != 0 {
            return Err(CoreError::config(format!(
                "q_tr must be even, got {}",
                s.q_tr
            )));
        }
        if !(s.t_max_s > 0.0) {
            return Err(CoreError::config("t_max_s must be > 0"));
        }
        if !(s.bandwidth_hz > 0.0) {
            return Err(CoreError::config("bandwidth_hz must be > 0"));
        }
        if !(s.carrier_hz > s.bandwidth_hz / 2.0) {
            return Err(CoreError::config(
                "carrier_hz must exceed bandwidth_hz / 2",
            ));
        }
        if !(s.p_t_w > 0.0) || !(s.sigma0_sq_w > 0.0) {
            return Err(CoreError::config("p_t_w and sigma0_sq_w must be > 0"));
        }
        if !(self.geometry.ue_radius_m >= 0.0) {
            return Err(CoreError::config("ue_radius_m must be >= 0"));
        }
        let sc = &self.scatterers;
        for ax in 0..3 {
            if !(sc.box_max[ax] >= sc.box_min[ax]) {
                return Err(CoreError::config("scatterer box_max must be >= box_min"));
            }
        }
        Ok(())
    }

    /// Extra divisibility requirement of the virtual-subarray RIS.
    pub fn validate_arch(&self, arch: RisArch) -> CoreResult<()> {
        self.validate()?;
        if arch == RisArch::SaRis && self.n_ris() % self.system.b != 0 {
            return Err(CoreError::dim(format!(
                "sa-ris requires b ({}) to divide n ({})",
                self.system.b,
                self.n_ris()
            )));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> CoreResult<Self> {
        let cfg: SystemConfig =
            toml::from_str(text).map_err(|e| CoreError::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> CoreResult<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML serialization. Identifies datasets,
    /// checkpoints and result files produced from this config.
    pub fn hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.to_toml_string().as_bytes());
        h.finalize().into()
    }

    pub fn hash_hex(&self) -> String {
        self.hash().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Desk-scale default: small enough for laptop-class runs while keeping
    /// every architectural feature active.
    pub fn desk_default() -> Self {
        SystemConfig {
            system: SystemSection {
                m: 16,
                u: 2,
                n1: 8,
                n2: 8,
                m_rf: 2,
                n_s: 2,
                k_ttd: 4,
                s1: 2,
                s2: 2,
                b: 4,
                bandwidth_hz: 1e9,
                carrier_hz: 73e9,
                t_max_s: 5e-9,
                l_cp: 4,
                q_block: 512,
                q_tr: 32,
                p_t_w: 1.0,
                sigma0_sq_w: 0.01,
                // desk-scale element gains absorb the aperture gain that a
                // full-scale array would provide, keeping the operating
                // SINR in a meaningful range at M = 16, N = 64
                gain_bs_dbi: 55.0,
                gain_ue_dbi: 45.0,
                gain_ris_dbi: 30.0,
                rng_seed: 1234,
            },
            geometry: GeometrySection {
                bs_center: [0.0, 0.0, 5.0],
                ris_center: [0.0, 20.0, 5.0],
                ue_radius_m: 5.0,
                ue_height_m: 1.0,
            },
            scatterers: ScattererSection {
                clusters: 3,
                per_cluster: 4,
                spread_m: 1.0,
                box_min: [-10.0, 2.0, 0.5],
                box_max: [10.0, 18.0, 9.5],
                min_clearance_m: 0.5,
                reflection_loss_db: 6.0,
                los_paths: true,
            },
            training: TrainingSection::default(),
        }
    }

    /// Full-scale reference configuration. Supported by the code paths but
    /// far too heavy for the test suite.
    pub fn full_scale() -> Self {
        let mut cfg = Self::desk_default();
        cfg.system.m = 128;
        cfg.system.u = 4;
        cfg.system.n1 = 16;
        cfg.system.n2 = 32;
        cfg.system.m_rf = 4;
        cfg.system.n_s = 4;
        cfg.system.k_ttd = 16;
        cfg.system.s1 = 8;
        cfg.system.s2 = 8;
        cfg.system.b = 16;
        cfg.system.bandwidth_hz = 7e9;
        cfg.system.q_block = 2048;
        cfg.system.q_tr = 16 * 32 * 4 / 8; // N*U/8
        cfg.system.gain_bs_dbi = 25.0;
        cfg.system.gain_ue_dbi = 20.0;
        cfg.system.gain_ris_dbi = 5.0;
        cfg
    }
}
