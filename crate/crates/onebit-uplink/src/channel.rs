//! Uplink propagation: i.i.d. Rayleigh block fading, AWGN, and the link
//! budget (log-distance pathloss, Gauss-Markov shadowing, straight-line
//! mobility) that maps UE transmit power onto the effective receive SNR.
//!
//! Noise is always unit variance; every large-scale effect acts on the
//! effective power `rho` of the normalized system model. The scenario's
//! `noise_floor_db` is the single calibration constant tying physical dB
//! quantities to that normalized scale.

use crate::numerics::{cgauss, db_to_amp, sample_cgauss, ComplexGrid};
use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("distance {0} m must be positive")]
    BadDistance(f64),
    #[error("time step {0} s must be positive")]
    BadStep(f64),
    #[error("duration {0} s must be positive")]
    BadDuration(f64),
    #[error("shadowing correlation distance {0} m must be positive")]
    BadCorrDistance(f64),
    #[error("mobility trace reaches d = {d} m <= 0 at t = {t} s")]
    TraceCrossesBs { t: f64, d: f64 },
}

/// Reference pathloss at 1 m, dB.
pub const PATHLOSS_OFFSET_DB: f64 = -61.0;
/// Pathloss slope, dB per decade of distance.
pub const PATHLOSS_DB_PER_DECADE: f64 = 30.0;

/// Log-distance pathloss -61 - 30 log10(d) dB.
pub fn pathloss_db(d_m: f64) -> Result<f64, ChannelError> {
    if !(d_m > 0.0) {
        return Err(ChannelError::BadDistance(d_m));
    }
    Ok(PATHLOSS_OFFSET_DB - PATHLOSS_DB_PER_DECADE * d_m.log10())
}

/// Scenario parameters for a closed-loop mobility run.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkScenario {
    /// Pathloss at 1 m, dB.
    pub pathloss_offset_db: f64,
    /// Pathloss slope, dB per decade.
    pub pathloss_db_per_decade: f64,
    /// Shadow fading standard deviation, dB.
    pub shadow_sigma_db: f64,
    /// Distance over which shadowing autocorrelation falls to 1/e, m.
    pub shadow_corr_distance_m: f64,
    /// Calibration constant: effective rho = tx + pathloss + shadow - floor.
    pub noise_floor_db: f64,
    /// UE-BS distance at t = 0, m.
    pub d0_m: f64,
    /// Speed toward the BS, m/s.
    pub velocity_mps: f64,
    /// Simulated time span, s.
    pub duration_s: f64,
    /// Feedback interval, s.
    pub step_s: f64,
}

impl LinkScenario {
    pub fn pathloss_db(&self, d_m: f64) -> Result<f64, ChannelError> {
        if !(d_m > 0.0) {
            return Err(ChannelError::BadDistance(d_m));
        }
        Ok(self.pathloss_offset_db - self.pathloss_db_per_decade * d_m.log10())
    }

    /// Large-scale gain from UE transmit power to effective rho at one
    /// point of the trace. Purely additive in dB, so the result minus
    /// `tx_power_db` does not depend on the transmit power.
    pub fn effective_rho_db(
        &self,
        tx_power_db: f64,
        d_m: f64,
        shadow_db: f64,
    ) -> Result<f64, ChannelError> {
        Ok(tx_power_db + self.pathloss_db(d_m)? + shadow_db - self.noise_floor_db)
    }
}

/// Link-budget snapshot for one feedback interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkState {
    pub t_s: f64,
    pub d_m: f64,
    pub shadow_db: f64,
    pub effective_rho_db: f64,
}

/// I.i.d. Rayleigh channel h ~ CN(0, I_M), one column.
pub fn rayleigh_channel<R: Rng>(m: usize, rng: &mut R) -> ComplexGrid {
    sample_cgauss(m, 1, rng)
}

/// Received signal prior to the ADCs: Y = sqrt(rho) h s^H + Z with unit
/// variance AWGN. Column t carries conj(s[t]).
pub fn apply_uplink<R: Rng>(
    h: &ComplexGrid,
    s: &[Complex64],
    rho_db: f64,
    rng: &mut R,
) -> ComplexGrid {
    let amp = db_to_amp(rho_db);
    let hv = h.col(0);
    ComplexGrid::from_fn(h.rows(), s.len(), |r, c| {
        amp * hv[r] * s[c].conj() + cgauss(rng)
    })
}

/// Noise-free variant of [`apply_uplink`] (test hook): Y = sqrt(rho) h s^H.
pub fn apply_uplink_noiseless(h: &ComplexGrid, s: &[Complex64], rho_db: f64) -> ComplexGrid {
    let amp = db_to_amp(rho_db);
    let hv = h.col(0);
    ComplexGrid::from_fn(h.rows(), s.len(), |r, c| amp * hv[r] * s[c].conj())
}

/// Straight-line approach d(t) = d0 - v t sampled every `step_s`, covering
/// [0, duration). Rejects traces that reach the BS.
pub fn mobility_trace(scenario: &LinkScenario) -> Result<Vec<(f64, f64)>, ChannelError> {
    if !(scenario.step_s > 0.0) {
        return Err(ChannelError::BadStep(scenario.step_s));
    }
    if !(scenario.duration_s > 0.0) {
        return Err(ChannelError::BadDuration(scenario.duration_s));
    }
    if !(scenario.d0_m > 0.0) {
        return Err(ChannelError::BadDistance(scenario.d0_m));
    }
    let steps = (scenario.duration_s / scenario.step_s).round() as usize;
    let mut trace = Vec::with_capacity(steps);
    for k in 0..steps {
        let t = k as f64 * scenario.step_s;
        let d = scenario.d0_m - scenario.velocity_mps * t;
        if d <= 0.0 {
            return Err(ChannelError::TraceCrossesBs { t, d });
        }
        trace.push((t, d));
    }
    Ok(trace)
}

/// Zero-mean Gaussian-in-dB shadowing along the mobility path, one value
/// per time step.
///
/// Gauss-Markov (AR(1)) over traveled distance: consecutive samples a step
/// `delta_d` apart correlate as exp(-delta_d / corr_distance), which gives
/// the exponential spatial autocorrelation and keeps the marginal exactly
/// N(0, sigma^2). Zero velocity degenerates to a single draw held constant.
pub fn shadowing_trace<R: Rng>(
    scenario: &LinkScenario,
    rng: &mut R,
) -> Result<Vec<f64>, ChannelError> {
    if !(scenario.shadow_corr_distance_m > 0.0) {
        return Err(ChannelError::BadCorrDistance(scenario.shadow_corr_distance_m));
    }
    let steps = mobility_trace(scenario)?.len();
    let sigma = scenario.shadow_sigma_db;
    let delta_d = (scenario.velocity_mps * scenario.step_s).abs();
    let a = (-delta_d / scenario.shadow_corr_distance_m).exp();
    let innovation = sigma * (1.0 - a * a).sqrt();
    let mut trace = Vec::with_capacity(steps);
    let mut current = sigma * normal(rng);
    trace.push(current);
    for _ in 1..steps {
        current = a * current + innovation * normal(rng);
        trace.push(current);
    }
    Ok(trace)
}

#[inline]
fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample::<f64, _>(rand_distr::StandardNormal)
}
