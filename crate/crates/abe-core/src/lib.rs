//! Artificial bandwidth extension of narrowband (0-4 kHz) speech to wideband
//! (0-8 kHz).
//!
//! Each wideband training frame is described by a pole-zero production model.
//! A causal reconstruction filter is designed for it by solving a sampled-data
//! H-infinity problem on the 2-fold lifted error system; its high-band part,
//! truncated to 21 taps, becomes a regression target. At extension time a
//! regressor maps the narrowband LPC vector to that filter and a log gain, and
//! the estimated high band is spliced onto the narrowband signal in the DFT
//! domain.
//!
//! The crate is organized bottom-up:
//!
//! * [`signal`] framing, fixed filters, rate conversion and linear prediction
//! * [`sysid`] Prony pole-zero fitting and voicing classification
//! * [`mrss`] state-space algebra, lifting and the generalized plant
//! * [`hinf`] H-infinity norm and controller synthesis
//! * [`hbfilter`] de-lifting and high-band FIR extraction
//! * [`features`], [`regressor`] training features, MVN, MLP and GMM mapping
//! * [`pipeline`], [`metrics`] the extension block and objective scores
//! * [`synth`] a synthetic speech-like corpus generator

pub mod error;
pub mod features;
pub mod hbfilter;
pub mod hinf;
pub mod linalg;
pub mod metrics;
pub mod mrss;
pub mod pipeline;
pub mod poly;
pub mod regressor;
pub mod signal;
pub mod synth;
pub mod sysid;

pub use error::{AbeError, Result};
