//! Link-level Monte-Carlo simulator and library for the single-user massive
//! MIMO uplink with 1-bit ADCs.
//!
//! With 1-bit quantization at the base station the symbol error rate is no
//! longer monotone in the UE transmit power: AWGN dominates at low SNR,
//! quantization distortion at high SNR. This crate implements the receive
//! chain that exhibits the effect, a composite-pilot MSE statistic that
//! measures which regime the link is in, and two closed-loop power-control
//! methods built on it — a one-shot multi-bit offset correction and a
//! differential controller with 1-bit feedback — together with the
//! simulation harness that reproduces the associated experiments as CSV.
//!
//! Module map:
//! - [`numerics`]: complex grids, the 1-bit quantizer, seeded RNG streams
//! - [`waveforms`]: Zadoff-Chu pilots, QAM, power ladders, composite pairs
//! - [`channel`]: Rayleigh fading, AWGN, pathloss / shadowing / mobility
//! - [`receiver`]: channel estimation, soft detection, SER, PMSE
//! - [`reftables`]: offline reference curves, persistence, branch maps
//! - [`powerctl`]: single-shot, differential, conventional, fixed policies
//! - [`simharness`]: experiment runners, config, CSV output, CLI
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod channel;
pub mod powerctl;
pub mod reftables;
pub mod numerics;
pub mod receiver;
pub mod simharness;
pub mod waveforms;
