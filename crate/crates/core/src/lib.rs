//! Near-field wideband RIS-assisted MIMO-OFDM simulator and optimizer.
//!
//! The crate synthesizes spherical-wavefront frequency-selective channels,
//! models frequency-dependent beamforming architectures (TTD hybrid precoder,
//! TTD-RIS, SA-RIS), and jointly optimizes pilot-based implicit-CSI learning
//! and downlink beamforming for effective spectral efficiency.

pub mod channel;
pub mod config;
pub mod container;
pub mod autodiff;
pub mod baseline;
pub mod beamform;
pub mod e2enet;
pub mod error;
pub mod rate;
pub mod scenario;

pub use config::{RisArch, SystemConfig, SPEED_OF_LIGHT};
pub use error::{CoreError, CoreResult};
