//! Complex matrix primitives, seeded random streams, and the 1-bit quantizer.
//!
//! Everything downstream (waveforms, channel, receiver) is built on three
//! pieces: a dense complex matrix in column-major order, its 1-bit quantized
//! counterpart with entries restricted to `{±1±j}`, and counter-based RNG
//! streams that make Monte-Carlo trials reproducible and order-independent.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::FRAC_1_SQRT_2;

/// Dense matrix of complex baseband samples, column-major.
///
/// Columns are symbol times, rows are antennas, so both `A * v` (pilot
/// correlation) and `A^H * v` (linear combining) stream through memory in
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGrid {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexGrid {
    /// Builds a grid from a function of (row, col).
    pub fn from_fn<F: FnMut(usize, usize) -> Complex64>(
        rows: usize,
        cols: usize,
        mut f: F,
    ) -> Self {
        assert!(rows >= 1 && cols >= 1, "grid dimensions must be >= 1");
        let mut data = Vec::with_capacity(rows * cols);
        for c in 0..cols {
            for r in 0..rows {
                data.push(f(r, c));
            }
        }
        ComplexGrid { rows, cols, data }
    }

    /// Builds a single-column grid from a vector.
    pub fn from_column(v: Vec<Complex64>) -> Self {
        assert!(!v.is_empty(), "grid dimensions must be >= 1");
        ComplexGrid {
            rows: v.len(),
            cols: 1,
            data: v,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[c * self.rows + r]
    }

    /// One symbol time across all antennas.
    pub fn col(&self, c: usize) -> &[Complex64] {
        &self.data[c * self.rows..(c + 1) * self.rows]
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.data
    }

    /// `A * v`, length `rows`. Panics on dimension mismatch.
    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.cols, "mul_vec dimension mismatch");
        let mut out = vec![Complex64::new(0.0, 0.0); self.rows];
        for c in 0..self.cols {
            let vc = v[c];
            let col = self.col(c);
            for (o, a) in out.iter_mut().zip(col) {
                *o += a * vc;
            }
        }
        out
    }

    /// `A^H * v`, length `cols`. Panics on dimension mismatch.
    pub fn herm_mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.rows, "herm_mul_vec dimension mismatch");
        let mut out = Vec::with_capacity(self.cols);
        for c in 0..self.cols {
            let mut acc = Complex64::new(0.0, 0.0);
            for (a, x) in self.col(c).iter().zip(v) {
                acc += a.conj() * x;
            }
            out.push(acc);
        }
        out
    }

    /// New grid from the given column ranges, concatenated left to right.
    pub fn columns_subset(&self, ranges: &[std::ops::Range<usize>]) -> ComplexGrid {
        let cols: usize = ranges.iter().map(|r| r.len()).sum();
        assert!(cols >= 1, "column subset must be non-empty");
        let mut data = Vec::with_capacity(self.rows * cols);
        for range in ranges {
            assert!(range.end <= self.cols, "column range out of bounds");
            data.extend_from_slice(&self.data[range.start * self.rows..range.end * self.rows]);
        }
        ComplexGrid {
            rows: self.rows,
            cols,
            data,
        }
    }

    /// Entrywise scaling by a real factor (pre-quantization scale test hook).
    pub fn scaled(&self, factor: f64) -> ComplexGrid {
        ComplexGrid {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }

    /// True if every entry is finite.
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Matrix with entries restricted to the 1-bit ADC output alphabet `{±1±j}`.
///
/// Constructed only through [`quantize_1bit`], which makes the alphabet
/// invariant impossible to violate from outside this module.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedGrid {
    grid: ComplexGrid,
}

impl QuantizedGrid {
    pub fn rows(&self) -> usize {
        self.grid.rows
    }

    pub fn cols(&self) -> usize {
        self.grid.cols
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.grid.get(r, c)
    }

    /// The underlying ±1±j entries as a plain grid.
    pub fn as_grid(&self) -> &ComplexGrid {
        &self.grid
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        self.grid.mul_vec(v)
    }

    pub fn herm_mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        self.grid.herm_mul_vec(v)
    }

    /// Column subset; entries stay in the quantized alphabet by construction.
    pub fn columns_subset(&self, ranges: &[std::ops::Range<usize>]) -> QuantizedGrid {
        QuantizedGrid {
            grid: self.grid.columns_subset(ranges),
        }
    }
}

/// Sign with the convention sgn(0) = +1, so the quantizer is total.
#[inline]
fn sgn(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Elementwise 1-bit quantization: each entry maps to sgn(Re) + j·sgn(Im).
///
/// Total for finite input, idempotent on its codomain, and invariant under
/// any positive real scaling of the input.
pub fn quantize_1bit(y: &ComplexGrid) -> QuantizedGrid {
    debug_assert!(y.is_finite(), "quantizer input must be finite");
    let grid = ComplexGrid {
        rows: y.rows,
        cols: y.cols,
        data: y
            .data
            .iter()
            .map(|z| Complex64::new(sgn(z.re), sgn(z.im)))
            .collect(),
    };
    QuantizedGrid { grid }
}

/// One independent, reproducible random stream per Monte-Carlo trial.
///
/// The same `(master_seed, stream_id)` always yields the same sample
/// sequence; distinct stream ids are statistically independent. Trials can
/// therefore run in any order (or in parallel) and reduce deterministically
/// by stream index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        RngStream {
            master_seed,
            stream_id,
        }
    }

    /// Instantiates the generator for this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// A derived stream under the same master seed. Callers partition the
    /// 64-bit id space (e.g. `trial * PURPOSES + purpose`) so no two live
    /// streams collide.
    pub fn substream(&self, offset: u64) -> RngStream {
        RngStream {
            master_seed: self.master_seed,
            stream_id: self.stream_id.wrapping_add(offset),
        }
    }
}

/// Power dB to linear: 10^(db/10).
#[inline]
pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Linear power to dB.
#[inline]
pub fn lin_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// Power dB to amplitude scale: 10^(db/20).
#[inline]
pub fn db_to_amp(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

/// One draw from CN(0, 1): independent real and imaginary parts with
/// variance 1/2 each.
#[inline]
pub fn cgauss<R: Rng>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
}

/// Grid of i.i.d. CN(0, 1) entries.
pub fn sample_cgauss<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> ComplexGrid {
    ComplexGrid::from_fn(rows, cols, |_, _| cgauss(rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantize_sign_extraction() {
        let y = ComplexGrid::from_fn(1, 1, |_, _| Complex64::new(0.3, -0.7));
        let r = quantize_1bit(&y);
        assert_eq!(r.get(0, 0), Complex64::new(1.0, -1.0));
    }

    #[test]
    fn quantize_zero_maps_to_plus_one() {
        let y = ComplexGrid::from_fn(1, 2, |_, c| {
            if c == 0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(-0.0, -0.0)
            }
        });
        let r = quantize_1bit(&y);
        assert_eq!(r.get(0, 0), Complex64::new(1.0, 1.0));
        assert_eq!(r.get(0, 1), Complex64::new(1.0, 1.0));
    }

    #[test]
    fn quantize_idempotent_and_in_alphabet() {
        let mut rng = RngStream::new(11, 0).rng();
        let y = sample_cgauss(16, 24, &mut rng);
        let r = quantize_1bit(&y);
        for z in r.as_grid().entries() {
            assert!(z.re.abs() == 1.0 && z.im.abs() == 1.0, "entry {z} not in ±1±j");
            assert!((z.norm_sqr() - 2.0).abs() == 0.0);
        }
        let rr = quantize_1bit(r.as_grid());
        assert_eq!(r, rr);
    }

    #[test]
    fn quantize_positive_scale_invariant() {
        let mut rng = RngStream::new(12, 0).rng();
        for _ in 0..50 {
            let y = sample_cgauss(8, 8, &mut rng);
            let c: f64 = rng.gen_range(1e-6..1e6);
            assert_eq!(quantize_1bit(&y), quantize_1bit(&y.scaled(c)));
        }
    }

    #[test]
    fn cgauss_mean_and_variance() {
        let mut rng = RngStream::new(13, 0).rng();
        let n = 1_000_000usize;
        let mut sum = Complex64::new(0.0, 0.0);
        let mut pow = 0.0;
        for _ in 0..n {
            let z = cgauss(&mut rng);
            sum += z;
            pow += z.norm_sqr();
        }
        let mean = sum / n as f64;
        // per-component sigma = 1/sqrt(2n); allow 4 sigma
        let bound = 4.0 / (2.0 * n as f64).sqrt();
        assert!(mean.re.abs() < bound, "mean re {} vs bound {}", mean.re, bound);
        assert!(mean.im.abs() < bound, "mean im {} vs bound {}", mean.im, bound);
        let avg_pow = pow / n as f64;
        assert!((avg_pow - 1.0).abs() < 0.01, "E|z|^2 = {avg_pow}");
    }

    #[test]
    fn streams_reproducible_and_independent() {
        let a1 = sample_cgauss(100, 10, &mut RngStream::new(7, 3).rng());
        let a2 = sample_cgauss(100, 10, &mut RngStream::new(7, 3).rng());
        assert_eq!(a1, a2);

        // sample correlation between distinct streams stays below 1%
        let n = 100_000usize;
        let mut r1 = RngStream::new(7, 0).rng();
        let mut r2 = RngStream::new(7, 1).rng();
        let mut sum_xy = 0.0;
        let mut sum_xx = 0.0;
        let mut sum_yy = 0.0;
        for _ in 0..n {
            let x: f64 = r1.sample(StandardNormal);
            let y: f64 = r2.sample(StandardNormal);
            sum_xy += x * y;
            sum_xx += x * x;
            sum_yy += y * y;
        }
        let corr = sum_xy / (sum_xx * sum_yy).sqrt();
        assert!(corr.abs() < 0.01, "cross-stream correlation {corr}");
    }

    #[test]
    fn mul_vec_and_herm_mul_vec_agree_with_naive() {
        let mut rng = RngStream::new(14, 0).rng();
        let a = sample_cgauss(5, 7, &mut rng);
        let v: Vec<Complex64> = (0..7).map(|_| cgauss(&mut rng)).collect();
        let w: Vec<Complex64> = (0..5).map(|_| cgauss(&mut rng)).collect();

        let av = a.mul_vec(&v);
        for r in 0..5 {
            let mut acc = Complex64::new(0.0, 0.0);
            for c in 0..7 {
                acc += a.get(r, c) * v[c];
            }
            assert!((av[r] - acc).norm() < 1e-12);
        }

        let ahw = a.herm_mul_vec(&w);
        for c in 0..7 {
            let mut acc = Complex64::new(0.0, 0.0);
            for r in 0..5 {
                acc += a.get(r, c).conj() * w[r];
            }
            assert!((ahw[c] - acc).norm() < 1e-12);
        }
    }
}
