//! Link-level simulation and detection for two-user uplink NOMA.
//!
//! The crate covers the whole receive chain used to compare pilot framings:
//!
//! * [`baseband`]: complex samples, BPSK/QPSK constellations, hard demapping.
//! * [`channel`]: quasi-static Rayleigh draws, AWGN and the superposition model.
//! * [`framing`]: three-slot (per-user pilots) and two-slot (superposed pilot)
//!   frames and the feature layout fed to the recurrent detector.
//! * [`classical`]: perfect-CSI joint ML for the near user, SIC-ML for the far
//!   user, and least-squares channel estimation.
//! * [`neural`]: a from-scratch LSTM(80) -> LSTM(60) -> FC regression network
//!   with BPTT, Adam and a finite-difference gradient checker.
//! * [`training`]: offline batch generation, training loop, model files.
//! * [`evaluation`]: BER counting, SNR sweeps with common random numbers and
//!   achievable-rate formulas.

pub mod baseband;
pub mod channel;
pub mod classical;
pub mod error;
pub mod evaluation;
pub mod framing;
pub mod neural;
pub mod rng;
pub mod training;

pub use baseband::{demap_nearest, modulate, Bit, Constellation, Cx, Modulation};
pub use channel::{awgn, draw_channel, pilot_slot, superpose, ChannelPair, PowerConfig};
pub use classical::{
    detect_frame_classical, ls_estimate, ml_detect_near, sic_detect_far, CsiMode, DetectionResult,
};
pub use error::{Error, Result};
pub use evaluation::{
    ber, dl_detect_frame, rates, sweep, ArtifactSet, BerCurve, BerPoint, Detector, RateReport,
    SweepConfig, UserDetection,
};
pub use framing::{
    assemble_frame, build_frame, features, FeatureSequence, Frame, Scheme, User, PILOT_SYMBOL,
};
pub use neural::{adam_step, grad_check, hmse, AdamState, Gradients, LstmLayer, Network, Tensor};
pub use training::{generate_batch, load, save, train, Batch, ModelArtifact, TrainConfig};
