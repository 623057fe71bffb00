//! The 1-bit base-station receive chain.
//!
//! Least-squares channel estimation by pilot correlation, linear-combining
//! soft detection with unit-energy normalization, minimum-distance demapping
//! against expected soft-symbol centroids, class-averaged SER measurement,
//! and the composite-pilot estimation MSE (PMSE) that drives both power
//! control methods.
//!
//! The quantizer discards every positive scale factor before any arithmetic
//! happens here, so the whole chain is exactly invariant to scaling the
//! pre-quantization received signal by c > 0.

use crate::channel::{apply_uplink, rayleigh_channel};
use crate::numerics::{db_to_amp, lin_to_db, quantize_1bit, ComplexGrid, QuantizedGrid, RngStream};
use crate::waveforms::{CompositePairing, Constellation, PilotSpec};
use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ReceiverError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("linear combiner output is identically zero")]
    DegenerateCombiner,
    #[error("pilot correlation vanished; normalized estimate undefined")]
    DegenerateEstimate,
    #[error("empty input")]
    EmptyInput,
    #[error("centroid count {got} does not match constellation order {want}")]
    CentroidMismatch { got: usize, want: usize },
}

/// Whether the receive chain sees 1-bit ADC outputs or the unquantized
/// signal (reference baseline).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantization {
    OneBit,
    None,
}

/// Soft symbol estimates normalized so their total energy equals the block
/// length.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftSymbols {
    values: Vec<Complex64>,
}

impl SoftSymbols {
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Expected soft-estimate value per transmit symbol, estimated offline at
/// one (M, rho, constellation) operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidSet {
    centroids: Vec<Complex64>,
}

impl CentroidSet {
    pub fn new(centroids: Vec<Complex64>) -> Self {
        CentroidSet { centroids }
    }

    pub fn order(&self) -> usize {
        self.centroids.len()
    }

    pub fn centroids(&self) -> &[Complex64] {
        &self.centroids
    }
}

/// One-realization (or averaged) composite pilot estimation MSE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PmseEstimate {
    /// Composite pilot power (rho1 + rho2) / 2 in dB, recovered from the
    /// transmitted pilot energy.
    pub composite_power_db: f64,
    /// Squared distance between the two unit vectors; always in [0, 4].
    pub value: f64,
    /// Number of realizations averaged into `value`.
    pub n_samples: u64,
}

/// Class-averaged and pooled symbol error rates over one decision record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SerEstimate {
    /// Per-class error rates averaged uniformly over the classes that
    /// actually occurred (the Eq.-style conditional average).
    pub class_averaged: f64,
    /// Plain error count over symbol count, as a cross-check statistic.
    pub pooled: f64,
    /// Classes that never occurred in the transmit record.
    pub absent_classes: usize,
}

/// Least-squares channel estimate (up to scale): h_hat = R_p * p.
pub fn estimate_channel(
    r_p: &QuantizedGrid,
    pilot: &[Complex64],
) -> Result<ComplexGrid, ReceiverError> {
    correlate_pilot(r_p.as_grid(), pilot)
}

/// Same correlation applied to the unquantized received signal.
pub fn estimate_channel_unquantized(
    y_p: &ComplexGrid,
    pilot: &[Complex64],
) -> Result<ComplexGrid, ReceiverError> {
    correlate_pilot(y_p, pilot)
}

fn correlate_pilot(r_p: &ComplexGrid, pilot: &[Complex64]) -> Result<ComplexGrid, ReceiverError> {
    if r_p.cols() != pilot.len() {
        return Err(ReceiverError::DimensionMismatch(format!(
            "received pilot has {} columns, pilot length is {}",
            r_p.cols(),
            pilot.len()
        )));
    }
    Ok(ComplexGrid::from_column(r_p.mul_vec(pilot)))
}

/// Soft symbol estimates x_hat = psi R^H h_hat with psi > 0 chosen so
/// ||x_hat||^2 equals the number of symbols.
pub fn soft_detect(r: &QuantizedGrid, h_hat: &ComplexGrid) -> Result<SoftSymbols, ReceiverError> {
    combine(r.as_grid(), h_hat)
}

/// Unquantized-baseline variant of [`soft_detect`].
pub fn soft_detect_unquantized(
    y: &ComplexGrid,
    h_hat: &ComplexGrid,
) -> Result<SoftSymbols, ReceiverError> {
    combine(y, h_hat)
}

fn combine(r: &ComplexGrid, h_hat: &ComplexGrid) -> Result<SoftSymbols, ReceiverError> {
    if r.rows() != h_hat.rows() || h_hat.cols() != 1 {
        return Err(ReceiverError::DimensionMismatch(format!(
            "received block is {}x{}, channel estimate is {}x{}",
            r.rows(),
            r.cols(),
            h_hat.rows(),
            h_hat.cols()
        )));
    }
    let v = r.herm_mul_vec(h_hat.col(0));
    let norm_sqr: f64 = v.iter().map(|z| z.norm_sqr()).sum();
    if norm_sqr == 0.0 {
        return Err(ReceiverError::DegenerateCombiner);
    }
    let psi = (v.len() as f64 / norm_sqr).sqrt();
    Ok(SoftSymbols {
        values: v.into_iter().map(|z| z * psi).collect(),
    })
}

/// Maps each soft symbol to the index of the nearest centroid; ties break
/// toward the lowest index.
pub fn min_distance_detect(soft: &SoftSymbols, centroids: &CentroidSet) -> Vec<usize> {
    soft.values()
        .iter()
        .map(|x| {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (k, c) in centroids.centroids().iter().enumerate() {
                let d = (x - c).norm_sqr();
                if d < best_d {
                    best_d = d;
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Symbol error rate conditioned per transmit class and averaged uniformly
/// over the classes present, plus the pooled rate as a cross-check.
pub fn measure_ser(
    tx_indices: &[usize],
    rx_indices: &[usize],
    order: usize,
) -> Result<SerEstimate, ReceiverError> {
    if tx_indices.is_empty() {
        return Err(ReceiverError::EmptyInput);
    }
    if tx_indices.len() != rx_indices.len() {
        return Err(ReceiverError::DimensionMismatch(format!(
            "tx record has {} symbols, rx record has {}",
            tx_indices.len(),
            rx_indices.len()
        )));
    }
    let mut counts = vec![0u64; order];
    let mut errors = vec![0u64; order];
    for (&tx, &rx) in tx_indices.iter().zip(rx_indices) {
        counts[tx] += 1;
        if tx != rx {
            errors[tx] += 1;
        }
    }
    let present = counts.iter().filter(|&&c| c > 0).count();
    let class_averaged = counts
        .iter()
        .zip(&errors)
        .filter(|(&c, _)| c > 0)
        .map(|(&c, &e)| e as f64 / c as f64)
        .sum::<f64>()
        / present as f64;
    let pooled = errors.iter().sum::<u64>() as f64 / tx_indices.len() as f64;
    Ok(SerEstimate {
        class_averaged,
        pooled,
        absent_classes: order - present,
    })
}

/// Composite pilot estimation MSE for one realization:
/// || R^H R q / ||R^H R q|| - q / ||q|| ||^2.
pub fn estimate_pmse(r_q: &QuantizedGrid, q: &[Complex64]) -> Result<PmseEstimate, ReceiverError> {
    if r_q.cols() != q.len() {
        return Err(ReceiverError::DimensionMismatch(format!(
            "received pilot has {} columns, composite pilot length is {}",
            r_q.cols(),
            q.len()
        )));
    }
    let v = r_q.mul_vec(q);
    let u = r_q.herm_mul_vec(&v);
    let u_norm: f64 = u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if u_norm == 0.0 {
        return Err(ReceiverError::DegenerateEstimate);
    }
    let q_norm_sqr: f64 = q.iter().map(|z| z.norm_sqr()).sum();
    let q_norm = q_norm_sqr.sqrt();
    let value: f64 = u
        .iter()
        .zip(q)
        .map(|(ue, qe)| (ue / u_norm - qe / q_norm).norm_sqr())
        .sum();
    Ok(PmseEstimate {
        composite_power_db: lin_to_db(q_norm_sqr / q.len() as f64),
        value,
        n_samples: 1,
    })
}

/// Differential PMSE: estimate at the upper composite power minus estimate
/// at the lower one. Positive means quantization-distortion limited.
pub fn differential_pmse(pmse_hi: &PmseEstimate, pmse_lo: &PmseEstimate) -> f64 {
    pmse_hi.value - pmse_lo.value
}

/// PMSE estimate for every composite pair of one multi-amplitude pilot
/// reception. The pair sub-blocks are cut out of the full quantized
/// reception; the reference q uses the nominal (configured) levels, which
/// matches what the base station knows.
pub fn pair_pmse_estimates(
    r_q: &QuantizedGrid,
    spec: &PilotSpec,
    pairing: &CompositePairing,
) -> Result<Vec<PmseEstimate>, ReceiverError> {
    let tau = spec.tau();
    if r_q.cols() != tau * spec.num_levels() {
        return Err(ReceiverError::DimensionMismatch(format!(
            "received pilot has {} columns, expected {} levels x {} symbols",
            r_q.cols(),
            spec.num_levels(),
            tau
        )));
    }
    pairing
        .pairs
        .iter()
        .map(|&(i, j)| {
            let sub = r_q.columns_subset(&[i * tau..(i + 1) * tau, j * tau..(j + 1) * tau]);
            let amp_i = db_to_amp(spec.levels_db()[i]);
            let amp_j = db_to_amp(spec.levels_db()[j]);
            let mut q_pair = Vec::with_capacity(2 * tau);
            q_pair.extend(spec.base().iter().map(|p| p * amp_i));
            q_pair.extend(spec.base().iter().map(|p| p * amp_j));
            estimate_pmse(&sub, &q_pair)
        })
        .collect()
}

/// One coherence block through the full chain: pilot reception, channel
/// estimation, data reception, combining, minimum-distance demapping.
/// Returns the detected symbol indices.
pub fn block_detect<R: Rng>(
    h: &ComplexGrid,
    pilot_shape: &[Complex64],
    data: &[Complex64],
    rho_db: f64,
    centroids: &CentroidSet,
    quant: Quantization,
    rng: &mut R,
) -> Result<Vec<usize>, ReceiverError> {
    let y_p = apply_uplink(h, pilot_shape, rho_db, rng);
    let y = apply_uplink(h, data, rho_db, rng);
    let soft = match quant {
        Quantization::OneBit => {
            let h_hat = estimate_channel(&quantize_1bit(&y_p), pilot_shape)?;
            soft_detect(&quantize_1bit(&y), &h_hat)?
        }
        Quantization::None => {
            let h_hat = estimate_channel_unquantized(&y_p, pilot_shape)?;
            soft_detect_unquantized(&y, &h_hat)?
        }
    };
    Ok(min_distance_detect(&soft, centroids))
}

/// Data block length targeted when estimating centroids: every symbol is
/// repeated so the balanced block has roughly this many entries.
const CENTROID_BLOCK_TARGET: usize = 64;

/// Expected soft-estimate value per transmit symbol at one operating point,
/// averaged over fresh channel, pilot-noise, and data-noise realizations.
///
/// Each trial transmits a balanced block (every constellation point the
/// same number of times) through the same chain used for detection, so the
/// centroids include the effect of the normalization factor psi.
pub fn estimate_centroids(
    m: usize,
    rho_db: f64,
    constellation: &Constellation,
    pilot_shape: &[Complex64],
    quant: Quantization,
    trials: u64,
    stream: RngStream,
) -> Result<CentroidSet, ReceiverError> {
    let order = constellation.order();
    let reps = (CENTROID_BLOCK_TARGET / order).max(1);
    let block: Vec<Complex64> = (0..order * reps)
        .map(|k| constellation.point(k % order))
        .collect();

    let mut sums = vec![Complex64::new(0.0, 0.0); order];
    let mut counts = vec![0u64; order];
    for trial in 0..trials {
        let mut rng = stream.substream(trial).rng();
        let h = rayleigh_channel(m, &mut rng);
        let y_p = apply_uplink(&h, pilot_shape, rho_db, &mut rng);
        let y = apply_uplink(&h, &block, rho_db, &mut rng);
        let soft = match quant {
            Quantization::OneBit => {
                let h_hat = estimate_channel(&quantize_1bit(&y_p), pilot_shape)?;
                match soft_detect(&quantize_1bit(&y), &h_hat) {
                    Ok(s) => s,
                    Err(ReceiverError::DegenerateCombiner) => continue,
                    Err(e) => return Err(e),
                }
            }
            Quantization::None => {
                let h_hat = estimate_channel_unquantized(&y_p, pilot_shape)?;
                match soft_detect_unquantized(&y, &h_hat) {
                    Ok(s) => s,
                    Err(ReceiverError::DegenerateCombiner) => continue,
                    Err(e) => return Err(e),
                }
            }
        };
        for (k, x) in soft.values().iter().enumerate() {
            sums[k % order] += x;
            counts[k % order] += 1;
        }
    }
    if counts.iter().any(|&c| c == 0) {
        return Err(ReceiverError::EmptyInput);
    }
    Ok(CentroidSet {
        centroids: sums
            .into_iter()
            .zip(counts)
            .map(|(s, c)| s / c as f64)
            .collect(),
    })
}
