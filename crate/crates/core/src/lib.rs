//! Waveform-level simulator and DSP library for FDMA-parallel UHF RFID.
//!
//! The 902-928 MHz span is split into narrow working bands. Each band runs
//! an independent EPC Gen-2 session against frequency-selective tags, and a
//! single reader merges/splits the bands with digital up/down conversion.
//!
//! Modules, bottom up:
//! - [`band`]: band plans, FIR design, DDC/DUC, the IQ stream type.
//! - [`phy`]: PIE/FM0 codecs, CRCs, Gen-2 frames.
//! - [`impairments`]: path loss, noise, CFO, memory-polynomial PA and DPD.
//! - [`tag`]: SAW response, envelope-detector sensitivity, tag state machine.
//! - [`reader`]: demodulation chain, session MAC, duplicate suppression.
//! - [`baseline`]: IQ-cluster collision decoder used for comparison.
//! - [`harness`]: scenario config, simulation loop, metrics and reports.

pub mod band;
pub mod baseline;
pub mod error;
pub mod harness;
pub mod impairments;
pub mod phy;
pub mod reader;
pub mod seed;
pub mod tag;

pub use error::{Error, Result};
pub use num_complex::Complex64;
