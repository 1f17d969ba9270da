//! Link-level simulation of over-the-air phase synchronization between two
//! multi-antenna access points driven by independent free-running oscillators.
//!
//! The chain is: Wiener phase noise ([`phase_noise`]) on both APs, a TDD frame
//! in which AP 2 breaks its first slot so the APs exchange one synchronization
//! sample in each direction ([`timeline`], [`sync`]), tracking of the inter-AP
//! phase difference ([`tracker`]), phase compensation at the APs and UEs
//! ([`compensation`]), and the closed-form downlink rate with conjugate
//! beamforming ([`rate`]). [`experiment`] ties it together into reproducible
//! sweeps over the frame length.

pub mod channel;
pub mod compensation;
pub mod config;
pub mod error;
pub mod experiment;
mod par;
pub mod phase_noise;
pub mod rate;
pub mod rng;
pub mod sync;
pub mod timeline;
pub mod tracker;

pub use num_complex::Complex64 as C64;

pub use config::{PilotErrorModel, SlotLayout, SystemParams};
pub use error::{Error, Result};
pub use experiment::{ResultRow, Scheme, SweepSpec};
