//! Pilot and data waveform construction.
//!
//! Zadoff-Chu base sequences, square QAM constellations, the arithmetic
//! power ladder in dB, the pairing of ladder levels into two-level composite
//! pilots, and the concatenated multi-amplitude pilot itself.

use crate::numerics::{db_to_amp, db_to_lin, lin_to_db};
use num_complex::Complex64;
use rand::Rng;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum WaveformError {
    #[error("sequence length {0} is not an odd prime")]
    NotOddPrime(usize),
    #[error("root {root} is not valid for length {tau} (need 1 <= root < tau, coprime)")]
    BadRoot { root: usize, tau: usize },
    #[error("unsupported constellation order {0} (need a square power of 4)")]
    UnsupportedOrder(usize),
    #[error("level count {0} must be odd and >= 3")]
    BadLevelCount(usize),
    #[error("power gap {0} dB must be positive")]
    BadGap(f64),
    #[error("levels do not form a uniform dB ladder")]
    NotAUniformLadder,
    #[error("pilot base must be unit modulus")]
    BaseNotUnitModulus,
    #[error("pilot needs at least one amplitude level")]
    EmptyLevels,
}

/// Base unit-modulus sequence plus the amplitude levels applied to it.
///
/// `rho_start_db` and `gap_db` record the ladder parameters when the spec
/// was built from one; for ad-hoc level sets they hold the linear-mean power
/// and the max-min span.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotSpec {
    base: Vec<Complex64>,
    levels_db: Vec<f64>,
    rho_start_db: f64,
    gap_db: f64,
}

impl PilotSpec {
    /// Multi-amplitude ladder with an odd number of levels spanning
    /// `rho_start_db ± gap_db`.
    pub fn ladder(
        base: Vec<Complex64>,
        num_levels: usize,
        rho_start_db: f64,
        gap_db: f64,
    ) -> Result<Self, WaveformError> {
        check_unit_modulus(&base)?;
        let levels_db = power_levels(num_levels, rho_start_db, gap_db)?;
        Ok(PilotSpec {
            base,
            levels_db,
            rho_start_db,
            gap_db,
        })
    }

    /// Two-level composite pilot with powers `lo_db` and `hi_db`.
    pub fn composite(base: Vec<Complex64>, lo_db: f64, hi_db: f64) -> Result<Self, WaveformError> {
        check_unit_modulus(&base)?;
        if hi_db <= lo_db {
            return Err(WaveformError::BadGap(hi_db - lo_db));
        }
        let mean = (db_to_lin(lo_db) + db_to_lin(hi_db)) / 2.0;
        Ok(PilotSpec {
            base,
            levels_db: vec![lo_db, hi_db],
            rho_start_db: lin_to_db(mean),
            gap_db: hi_db - lo_db,
        })
    }

    /// Degenerate single-amplitude pilot at `rho_db`.
    pub fn single(base: Vec<Complex64>, rho_db: f64) -> Result<Self, WaveformError> {
        check_unit_modulus(&base)?;
        Ok(PilotSpec {
            base,
            levels_db: vec![rho_db],
            rho_start_db: rho_db,
            gap_db: 0.0,
        })
    }

    pub fn base(&self) -> &[Complex64] {
        &self.base
    }

    pub fn tau(&self) -> usize {
        self.base.len()
    }

    pub fn levels_db(&self) -> &[f64] {
        &self.levels_db
    }

    pub fn num_levels(&self) -> usize {
        self.levels_db.len()
    }

    pub fn rho_start_db(&self) -> f64 {
        self.rho_start_db
    }

    pub fn gap_db(&self) -> f64 {
        self.gap_db
    }

    /// Average transmit power over all blocks, in dB. For a two-level
    /// composite this is the composite pilot power (rho1 + rho2) / 2.
    pub fn mean_power_db(&self) -> f64 {
        let mean =
            self.levels_db.iter().map(|&l| db_to_lin(l)).sum::<f64>() / self.levels_db.len() as f64;
        lin_to_db(mean)
    }
}

fn check_unit_modulus(base: &[Complex64]) -> Result<(), WaveformError> {
    if base.is_empty() {
        return Err(WaveformError::BaseNotUnitModulus);
    }
    for z in base {
        if (z.norm_sqr() - 1.0).abs() > 1e-9 {
            return Err(WaveformError::BaseNotUnitModulus);
        }
    }
    Ok(())
}

/// Unit-energy constellation points; symbol indices are positions in `points`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    points: Vec<Complex64>,
}

impl Constellation {
    pub fn order(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn point(&self, index: usize) -> Complex64 {
        self.points[index]
    }
}

/// Ladder level `i` paired with level `i + (L-1)/2`, plus the resulting
/// composite powers (linear average of each pair, reported in dB).
#[derive(Debug, Clone, PartialEq)]
pub struct CompositePairing {
    pub pairs: Vec<(usize, usize)>,
    pub composite_powers_db: Vec<f64>,
}

fn is_odd_prime(n: usize) -> bool {
    if n < 3 || n % 2 == 0 {
        return false;
    }
    let mut d = 3;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 2;
    }
    true
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Zadoff-Chu sequence p[n] = exp(-j pi root n(n+1) / tau) for odd prime tau.
///
/// Constant modulus with zero periodic autocorrelation at every nonzero lag.
pub fn zadoff_chu(tau: usize, root: usize) -> Result<Vec<Complex64>, WaveformError> {
    if !is_odd_prime(tau) {
        return Err(WaveformError::NotOddPrime(tau));
    }
    if root == 0 || root >= tau || gcd(root, tau) != 1 {
        return Err(WaveformError::BadRoot { root, tau });
    }
    // phases are multiples of pi/tau; reduce mod 2*tau to keep sin/cos exact
    let modulus = 2 * tau as u64;
    let seq = (0..tau)
        .map(|n| {
            let units = (root as u64 * n as u64 % modulus) * ((n + 1) as u64 % modulus) % modulus;
            let angle = -PI * units as f64 / tau as f64;
            Complex64::new(angle.cos(), angle.sin())
        })
        .collect();
    Ok(seq)
}

/// Square Gray-labeled QAM with unit average symbol energy.
///
/// Orders 4, 16, and 64. The per-axis coordinates are the odd integers
/// scaled by sqrt(3 / (2 (m^2 - 1))) with m points per axis; bits map to
/// coordinates through a reflected Gray code so adjacent points differ in
/// one bit per axis.
pub fn qam_constellation(order: usize) -> Result<Constellation, WaveformError> {
    let m = match order {
        4 => 2usize,
        16 => 4,
        64 => 8,
        _ => return Err(WaveformError::UnsupportedOrder(order)),
    };
    let bits_per_axis = m.trailing_zeros();
    let norm = (2.0 * (m * m - 1) as f64 / 3.0).sqrt();
    let coord = |bits: usize| -> f64 {
        let idx = gray_decode(bits);
        (2.0 * idx as f64 - (m - 1) as f64) / norm
    };
    let points = (0..order)
        .map(|s| {
            let i_bits = s >> bits_per_axis;
            let q_bits = s & (m - 1);
            Complex64::new(coord(i_bits), coord(q_bits))
        })
        .collect();
    Ok(Constellation { points })
}

fn gray_decode(mut g: usize) -> usize {
    let mut n = g;
    while g > 1 {
        g >>= 1;
        n ^= g;
    }
    n
}

/// Arithmetic dB ladder rho_l = rho_start - gap + 2 (l-1) gap / (L-1) for
/// l = 1..L, i.e. from rho_start - gap to rho_start + gap.
pub fn power_levels(
    num_levels: usize,
    rho_start_db: f64,
    gap_db: f64,
) -> Result<Vec<f64>, WaveformError> {
    if num_levels < 3 || num_levels % 2 == 0 {
        return Err(WaveformError::BadLevelCount(num_levels));
    }
    if !(gap_db > 0.0) {
        return Err(WaveformError::BadGap(gap_db));
    }
    Ok((0..num_levels)
        .map(|l| rho_start_db - gap_db + 2.0 * l as f64 * gap_db / (num_levels - 1) as f64)
        .collect())
}

/// Pairs ladder level i with level i + (L-1)/2, giving (L+1)/2 composite
/// pilots whose internal power difference is exactly the ladder gap.
pub fn composite_pairs(levels_db: &[f64]) -> Result<CompositePairing, WaveformError> {
    let l = levels_db.len();
    if l < 3 || l % 2 == 0 {
        return Err(WaveformError::BadLevelCount(l));
    }
    let step = levels_db[1] - levels_db[0];
    if !(step > 0.0) {
        return Err(WaveformError::NotAUniformLadder);
    }
    for w in levels_db.windows(2) {
        if ((w[1] - w[0]) - step).abs() > 1e-9 {
            return Err(WaveformError::NotAUniformLadder);
        }
    }
    let half = (l - 1) / 2;
    let pairs: Vec<(usize, usize)> = (0..(l + 1) / 2).map(|i| (i, i + half)).collect();
    let composite_powers_db = pairs
        .iter()
        .map(|&(i, j)| lin_to_db((db_to_lin(levels_db[i]) + db_to_lin(levels_db[j])) / 2.0))
        .collect();
    Ok(CompositePairing {
        pairs,
        composite_powers_db,
    })
}

/// Concatenation of sqrt(rho_l) * p blocks: the transmitted multi-amplitude
/// pilot of length L * tau.
pub fn build_multiamp_pilot(spec: &PilotSpec) -> Vec<Complex64> {
    let mut q = Vec::with_capacity(spec.num_levels() * spec.tau());
    for &level_db in spec.levels_db() {
        let amp = db_to_amp(level_db);
        q.extend(spec.base().iter().map(|p| p * amp));
    }
    q
}

/// I.i.d. uniform symbol indices and their constellation points.
pub fn draw_data_symbols<R: Rng>(
    constellation: &Constellation,
    n: usize,
    rng: &mut R,
) -> (Vec<usize>, Vec<Complex64>) {
    let order = constellation.order();
    let indices: Vec<usize> = (0..n).map(|_| rng.gen_range(0..order)).collect();
    let symbols = indices.iter().map(|&i| constellation.point(i)).collect();
    (indices, symbols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    #[test]
    fn zadoff_chu_starts_at_one() {
        for (tau, root) in [(7usize, 1usize), (127, 1), (127, 5), (41, 3)] {
            let p = zadoff_chu(tau, root).unwrap();
            assert!((p[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn zadoff_chu_rejects_bad_inputs() {
        assert_eq!(zadoff_chu(8, 1), Err(WaveformError::NotOddPrime(8)));
        assert_eq!(zadoff_chu(9, 1), Err(WaveformError::NotOddPrime(9)));
        assert_eq!(zadoff_chu(7, 0), Err(WaveformError::BadRoot { root: 0, tau: 7 }));
        assert_eq!(zadoff_chu(7, 7), Err(WaveformError::BadRoot { root: 7, tau: 7 }));
    }

    #[test]
    fn zadoff_chu_cazac_property() {
        // brute-force periodic autocorrelation at every nonzero lag
        for (tau, root) in [(7usize, 1usize), (127, 1), (127, 3)] {
            let p = zadoff_chu(tau, root).unwrap();
            for lag in 1..tau {
                let mut acc = Complex64::new(0.0, 0.0);
                for n in 0..tau {
                    acc += p[n] * p[(n + lag) % tau].conj();
                }
                assert!(
                    acc.norm() < 1e-10 * tau as f64,
                    "tau={tau} root={root} lag={lag}: |r|={}",
                    acc.norm()
                );
            }
        }
    }

    #[test]
    fn zadoff_chu_norm_is_tau() {
        let p = zadoff_chu(127, 1).unwrap();
        let norm2: f64 = p.iter().map(|z| z.norm_sqr()).sum();
        assert!((norm2 - 127.0).abs() < 1e-9);
    }

    #[test]
    fn qpsk_points_and_power() {
        let c = qam_constellation(4).unwrap();
        let mean_pow: f64 = c.points().iter().map(|z| z.norm_sqr()).sum::<f64>() / 4.0;
        assert!((mean_pow - 1.0).abs() < 1e-12);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for &(re, im) in &[(s, s), (s, -s), (-s, s), (-s, -s)] {
            assert!(
                c.points().iter().any(|z| (z - Complex64::new(re, im)).norm() < 1e-12),
                "missing QPSK point ({re},{im})"
            );
        }
    }

    #[test]
    fn qam16_power_and_magnitudes() {
        let c = qam_constellation(16).unwrap();
        let mean_pow: f64 = c.points().iter().map(|z| z.norm_sqr()).sum::<f64>() / 16.0;
        assert!((mean_pow - 1.0).abs() < 1e-12);

        // enumerate the grid: magnitudes sqrt(2/10), sqrt(10/10), sqrt(18/10)
        // with multiplicities 4, 8, 4
        let expected = [(0.2f64, 4usize), (1.0, 8), (1.8, 4)];
        for &(m2, count) in &expected {
            let hits = c
                .points()
                .iter()
                .filter(|z| (z.norm_sqr() - m2).abs() < 1e-9)
                .count();
            assert_eq!(hits, count, "|z|^2 = {m2}");
        }
    }

    #[test]
    fn qam_rejects_unsupported_order() {
        assert!(qam_constellation(8).is_err());
        assert!(qam_constellation(32).is_err());
        assert!(qam_constellation(256).is_err());
    }

    #[test]
    fn power_levels_examples() {
        assert_eq!(power_levels(3, 0.0, 5.0).unwrap(), vec![-5.0, 0.0, 5.0]);
        assert_eq!(
            power_levels(5, 0.0, 5.0).unwrap(),
            vec![-5.0, -2.5, 0.0, 2.5, 5.0]
        );
        assert_eq!(power_levels(3, -7.0, 5.0).unwrap(), vec![-12.0, -7.0, -2.0]);
        assert!(power_levels(4, 0.0, 5.0).is_err());
        assert!(power_levels(1, 0.0, 5.0).is_err());
        assert!(power_levels(3, 0.0, 0.0).is_err());
    }

    #[test]
    fn power_levels_symmetric_about_center() {
        let mut rng = RngStream::new(21, 0).rng();
        for _ in 0..100 {
            let l = 2 * rng.gen_range(1..6usize) + 1;
            let center: f64 = rng.gen_range(-20.0..20.0);
            let gap: f64 = rng.gen_range(0.1..10.0);
            let levels = power_levels(l, center, gap).unwrap();
            for i in 0..l {
                assert!((levels[i] + levels[l - 1 - i] - 2.0 * center).abs() < 1e-9);
            }
            assert!((levels[l - 1] - levels[0] - 2.0 * gap).abs() < 1e-9);
        }
    }

    #[test]
    fn composite_pairs_paper_values() {
        let pairing = composite_pairs(&[-5.0, 0.0, 5.0]).unwrap();
        assert_eq!(pairing.pairs, vec![(0, 1), (1, 2)]);
        assert!((pairing.composite_powers_db[0] - (-1.8170)).abs() < 1e-3);
        assert!((pairing.composite_powers_db[1] - 3.1830).abs() < 1e-3);
    }

    #[test]
    fn composite_pairs_counts_and_gap() {
        for l in [3usize, 5, 7, 9] {
            let levels = power_levels(l, 0.0, 5.0).unwrap();
            let pairing = composite_pairs(&levels).unwrap();
            assert_eq!(pairing.pairs.len(), (l + 1) / 2);
            for &(i, j) in &pairing.pairs {
                assert!((levels[j] - levels[i] - 5.0).abs() < 1e-9, "L={l}");
            }
        }
        assert!(composite_pairs(&[0.0, 1.0, 3.0]).is_err());
        assert!(composite_pairs(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn multiamp_pilot_norms() {
        let base = zadoff_chu(127, 1).unwrap();

        // degenerate single level: q = sqrt(rho) p
        let spec = PilotSpec::single(base.clone(), 3.0).unwrap();
        let q = build_multiamp_pilot(&spec);
        let norm2: f64 = q.iter().map(|z| z.norm_sqr()).sum();
        assert!((norm2 - db_to_lin(3.0) * 127.0).abs() / norm2 < 1e-12);

        // two-level composite {0, 5} dB: ||q||^2 / (2 tau) = (1 + 10^0.5) / 2
        let spec = PilotSpec::composite(base.clone(), 0.0, 5.0).unwrap();
        let q = build_multiamp_pilot(&spec);
        assert_eq!(q.len(), 2 * 127);
        let norm2: f64 = q.iter().map(|z| z.norm_sqr()).sum();
        let composite = norm2 / (2.0 * 127.0);
        assert!((composite - 2.081138830084190).abs() < 1e-9);
        assert!((spec.mean_power_db() - lin_to_db(composite)).abs() < 1e-9);

        // three-level ladder: block amplitude ratios 1 : 10^(5/20) : 10^(10/20)
        let spec = PilotSpec::ladder(base, 3, 0.0, 5.0).unwrap();
        let q = build_multiamp_pilot(&spec);
        let b0 = q[0].norm();
        let b1 = q[127].norm();
        let b2 = q[254].norm();
        assert!((b1 / b0 - db_to_amp(5.0)).abs() < 1e-12);
        assert!((b2 / b0 - db_to_amp(10.0)).abs() < 1e-12);
    }

    #[test]
    fn multiamp_pilot_norm_identity() {
        let mut rng = RngStream::new(22, 0).rng();
        for _ in 0..20 {
            let l = 2 * rng.gen_range(1..5usize) + 1;
            let center: f64 = rng.gen_range(-10.0..10.0);
            let gap: f64 = rng.gen_range(0.5..8.0);
            let base = zadoff_chu(31, 1).unwrap();
            let spec = PilotSpec::ladder(base, l, center, gap).unwrap();
            let q = build_multiamp_pilot(&spec);
            let norm2: f64 = q.iter().map(|z| z.norm_sqr()).sum();
            let expected: f64 = spec.levels_db().iter().map(|&x| db_to_lin(x)).sum::<f64>() * 31.0;
            assert!((norm2 - expected).abs() / expected < 1e-12);
        }
    }

    #[test]
    fn data_symbols_uniform_and_unit_power() {
        let c = qam_constellation(16).unwrap();
        let n = 1_000_000usize;
        let (indices, symbols) = draw_data_symbols(&c, n, &mut RngStream::new(23, 0).rng());

        let mut counts = [0usize; 16];
        for &i in &indices {
            counts[i] += 1;
        }
        // 4 sigma multinomial bound per class
        let p = 1.0 / 16.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for (k, &cnt) in counts.iter().enumerate() {
            assert!(
                (cnt as f64 - n as f64 * p).abs() < 4.0 * sigma,
                "class {k}: {cnt}"
            );
        }

        let pow: f64 = symbols.iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64;
        assert!((pow - 1.0).abs() < 0.01);

        // determinism
        let (again, _) = draw_data_symbols(&c, 100, &mut RngStream::new(23, 0).rng());
        assert_eq!(&indices[..100], &again[..]);
    }
}
