//! Closed-loop power-control policies.
//!
//! The single-shot method fits measured composite-pilot MSE values against
//! a shifted stored reference curve to recover the UE's pathloss
//! compensation error in one pilot transmission, answered with one
//! multi-bit power message. The differential (DPC) method compares the
//! PMSE of the upper and lower composite pairs every interval and steers
//! the UE with a single feedback bit: down whenever quantization
//! distortion dominates, otherwise up or down against the SER target. The
//! conventional and fixed-power baselines complete the set.

use crate::reftables::{ReferenceTable, TableError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PowerCtlError {
    #[error("need at least two composite-power fit points, got {0}")]
    TooFewPoints(usize),
    #[error("{est} PMSE estimates but {powers} composite powers")]
    LengthMismatch { est: usize, powers: usize },
    #[error("search span {span_db} dB and step {step_db} dB must be positive")]
    BadSearch { span_db: f64, step_db: f64 },
    #[error("candidate offset {candidate_db} dB leaves the reference hull: {source}")]
    QueryOutOfHull {
        candidate_db: f64,
        source: TableError,
    },
    #[error("feedback kind does not match policy {0:?}")]
    MismatchedFeedback(Policy),
}

/// Direction of a 1-bit power adjustment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Up,
    Down,
}

impl Step {
    pub fn sign(self) -> f64 {
        match self {
            Step::Up => 1.0,
            Step::Down => -1.0,
        }
    }
}

/// What the BS sends down the control channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeedbackMessage {
    /// One-time multi-bit power command, quantized to 0.1 dB.
    PowerLevel { db: f64 },
    /// Continuous 1-bit feedback: adjust by the configured step.
    StepDirection(Step),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Policy {
    SingleShot,
    Dpc,
    Conventional,
    Fixed,
}

/// One feedback event as recorded by the UE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryEntry {
    pub t_s: f64,
    /// Transmit power after applying the message.
    pub tx_power_db: f64,
    pub feedback: FeedbackMessage,
}

/// UE-side controller state: current power plus the feedback history.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub policy: Policy,
    pub tx_power_db: f64,
    pub target_ser: f64,
    /// Step size eta for 1-bit feedback, dB.
    pub step_db: f64,
    pub history: Vec<HistoryEntry>,
}

impl ControllerState {
    pub fn new(policy: Policy, tx_power_db: f64, target_ser: f64, step_db: f64) -> Self {
        ControllerState {
            policy,
            tx_power_db,
            target_ser,
            step_db,
            history: Vec::new(),
        }
    }

    /// Applies one feedback message: step policies move by exactly
    /// +/- step_db, the single-shot policy jumps to the commanded level,
    /// and the fixed policy records the message but never moves.
    pub fn apply_feedback(
        &mut self,
        t_s: f64,
        msg: FeedbackMessage,
    ) -> Result<(), PowerCtlError> {
        match (self.policy, msg) {
            (Policy::Dpc | Policy::Conventional, FeedbackMessage::StepDirection(step)) => {
                self.tx_power_db += step.sign() * self.step_db;
            }
            (Policy::SingleShot, FeedbackMessage::PowerLevel { db }) => {
                self.tx_power_db = db;
            }
            (Policy::Fixed, _) => {}
            _ => return Err(PowerCtlError::MismatchedFeedback(self.policy)),
        }
        self.history.push(HistoryEntry {
            t_s,
            tx_power_db: self.tx_power_db,
            feedback: msg,
        });
        Ok(())
    }
}

/// Nearest 0.1 dB, ties toward minus infinity.
pub fn quantize_feedback_db(db: f64) -> f64 {
    (db * 10.0 - 0.5).ceil() / 10.0
}

/// Recovers the UE power offset by exhaustive search: the candidate shift
/// whose shifted reference PMSE values best match the measured ones in
/// least squares. Ties break toward the smallest |offset|.
pub fn single_shot_offset(
    pmse_est: &[f64],
    composite_powers_db: &[f64],
    table: &ReferenceTable,
    search_span_db: f64,
    search_step_db: f64,
) -> Result<f64, PowerCtlError> {
    if pmse_est.len() != composite_powers_db.len() {
        return Err(PowerCtlError::LengthMismatch {
            est: pmse_est.len(),
            powers: composite_powers_db.len(),
        });
    }
    if pmse_est.len() < 2 {
        return Err(PowerCtlError::TooFewPoints(pmse_est.len()));
    }
    if !(search_span_db > 0.0) || !(search_step_db > 0.0) {
        return Err(PowerCtlError::BadSearch {
            span_db: search_span_db,
            step_db: search_step_db,
        });
    }
    let n = (search_span_db / search_step_db).round() as i64;
    let mut best_offset = 0.0f64;
    let mut best_sse = f64::INFINITY;
    for k in -n..=n {
        let candidate = k as f64 * search_step_db;
        let mut sse = 0.0;
        for (&comp_db, &est) in composite_powers_db.iter().zip(pmse_est) {
            let reference = table
                .interp_pmse(comp_db + candidate)
                .map_err(|source| PowerCtlError::QueryOutOfHull {
                    candidate_db: candidate,
                    source,
                })?;
            let diff = reference - est;
            sse += diff * diff;
        }
        if sse < best_sse || (sse == best_sse && candidate.abs() < best_offset.abs()) {
            best_sse = sse;
            best_offset = candidate;
        }
    }
    Ok(best_offset)
}

/// Power command answering a single-shot estimate: the table's
/// target-achieving power corrected by the estimated offset.
pub fn single_shot_feedback(offset_db: f64, target_rho_db: f64) -> FeedbackMessage {
    FeedbackMessage::PowerLevel {
        db: quantize_feedback_db(target_rho_db - offset_db),
    }
}

/// DPC decision rule. A positive differential PMSE flags the
/// quantization-limited regime and always commands a decrease; otherwise
/// the mapped SER is compared against the target, backing off once the
/// target is met.
pub fn dpc_step(delta: f64, mapped_ser: f64, target_ser: f64) -> FeedbackMessage {
    let step = if delta > 0.0 {
        Step::Down
    } else if mapped_ser > target_ser {
        Step::Up
    } else {
        Step::Down
    };
    FeedbackMessage::StepDirection(step)
}

/// Conventional closed-loop rule: up if the target is not met, down
/// otherwise. Blind to the quantization region by construction.
pub fn conventional_step(observed_ser: f64, target_ser: f64) -> FeedbackMessage {
    let step = if observed_ser > target_ser {
        Step::Up
    } else {
        Step::Down
    };
    FeedbackMessage::StepDirection(step)
}
