//! Link-level simulation and analysis for RIS-aided MIMO links in which the
//! transmitter and the surface both carry data.
//!
//! The receiver treats the received block as a bilinear model in the Tx
//! symbols `X` and the surface phases `S`, split through auxiliary variables
//! into two linear mixing stages and one entry-wise product. The crate
//! provides the channel and frame synthesis, the message-passing detector,
//! its scalar state-evolution predictor, and transfer-curve based rate
//! analysis, together with brute-force references in [`oracle`].

pub mod channel;
pub mod coding;
pub mod constellation;
pub mod error;
pub mod frame;
pub mod oracle;
pub mod quadrature;
pub mod rate;
pub mod receiver;
pub mod rng;
pub mod se;
pub mod units;

pub use error::{Error, Result};

pub use num_complex::Complex64;

/// Complex matrix type used throughout the crate.
pub type CMatrix = ndarray::Array2<Complex64>;
