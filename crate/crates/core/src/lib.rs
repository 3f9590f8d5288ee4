//! Modelling toolkit for entanglement-based quantum key distribution links
//! that encode multiple qubits per photon in temporal slots.
//!
//! The crate is organised around a closed-form rate model for detection and
//! error events (signal-signal, signal-background, background-background and
//! double-pair coincidences), from which per-basis QBER, secret key fraction
//! and photon key efficiency (PKE, secret bits per received photon pair) are
//! derived. On top of that sit:
//!
//! - [`optimizer`]: numeric maximization of PKE over source intensity and
//!   coding order, plus parameter sweeps with CSV emission,
//! - [`asymptotics`]: weak-noise closed forms built on the Lambert W
//!   function,
//! - [`simulator`]: a deterministic Monte Carlo frame simulator used as an
//!   independent cross-check of the rate model and the protocol sifting
//!   logic.

#![forbid(unsafe_code)]

pub mod asymptotics;
pub mod channels;
pub mod link;
pub mod numerics;
pub mod optimizer;
pub mod protocols;
pub mod simulator;
pub mod validation;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{name} out of range: {value} (expected {expected})")]
    OutOfRange {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("probability vector not normalized: sum = {sum}")]
    Normalization { sum: f64 },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },

    #[error("infeasible QBER triple (e_X={e_x}, e_Y={e_y}, e_Z={e_z}): negative Bell weight")]
    InfeasibleQber { e_x: f64, e_y: f64, e_z: f64 },

    #[error("QBER set does not match protocol {protocol}: {detail}")]
    BasisMismatch {
        protocol: &'static str,
        detail: &'static str,
    },

    #[error("degenerate denominator in disturbance functional: Alice never observes the reference state")]
    DegenerateDenominator,

    #[error("matrix is not a valid density operator: {detail}")]
    InvalidDensity { detail: String },

    #[error("asymptotic regime inapplicable: {reason}")]
    AsymptoticRegime { reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub use channels::{
    apply_two_sided, bell_projections, bell_weights, disturbance, disturbance_profile,
    measurement_joint, qber_from_bell, BellDiagonal, BellState, ChannelKind, DisturbanceProfile,
    KrausSet, Matrix2, Matrix4, MeasBasis,
};
pub use link::{
    absolute_key_rate, error_rate, event_rate, pke, qber, qber_set, ChannelParams, LinkPoint,
    PkeReport, RateBreakdown,
};
pub use numerics::{
    binary_entropy, lambert_w, maximize_scalar, shannon_entropy4, BracketedInterval, Probability,
};
pub use optimizer::{
    optimize_p, optimize_pm, sweep, write_csv, AxisSpec, LinkTemplate, OptimizationResult,
    OptimizerSettings, SweepGrid, SweepKind, SweepResult,
};
pub use protocols::{
    key_fraction_bbm92_4, key_fraction_bell, key_fraction_biterr, key_fraction_minimized,
    ProtocolId, ProtocolSpec, QberSet,
};
pub use simulator::{
    compare_to_analytic, simulate, ComparisonReport, FrameTally, PairModel, SimConfig,
};
