//! Offline reference curves stored at the base station.
//!
//! For each (M, tau, gap, L, constellation) operating point a table holds,
//! per transmit-power grid point, the mean composite-pilot MSE, the mean
//! SER through the full detection chain, and the soft-symbol centroids the
//! detector needs. Tables persist as self-describing text (diff-able,
//! bit-exact round trip) and turn into the two-branch PMSE-to-SER map used
//! by the differential controller.

use crate::numerics::{db_to_lin, lin_to_db, quantize_1bit, RngStream};
use crate::receiver::{
    block_detect, estimate_centroids, estimate_pmse, CentroidSet, Quantization, ReceiverError,
};
use crate::waveforms::{
    build_multiamp_pilot, draw_data_symbols, qam_constellation, zadoff_chu, PilotSpec,
    WaveformError,
};
use crate::channel::rayleigh_channel;
use crate::channel::apply_uplink;
use num_complex::Complex64;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("power grid must be non-empty and strictly ascending")]
    BadGrid,
    #[error("need at least 1000 trials per grid point, got {0}")]
    TooFewTrials(u64),
    #[error("query {query} dB outside table hull [{lo}, {hi}] dB")]
    OutOfHull { query: f64, lo: f64, hi: f64 },
    #[error("SER curve has no interior minimum; table grid too narrow")]
    NoInteriorMinimum,
    #[error(
        "table was generated for (M={table_m}, tau={table_tau}, gap={table_gap} dB) but the \
         experiment needs (M={want_m}, tau={want_tau}, gap={want_gap} dB)"
    )]
    Incompatible {
        table_m: usize,
        table_tau: usize,
        table_gap: f64,
        want_m: usize,
        want_tau: usize,
        want_gap: f64,
    },
    #[error("malformed table file: {0}")]
    Format(String),
    #[error("table checksum mismatch (file corrupted or hand-edited)")]
    Checksum,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Receiver(#[from] ReceiverError),
    #[error(transparent)]
    Waveform(#[from] WaveformError),
}

const TABLE_MAGIC: &str = "# onebit-uplink-reftable v1";

/// Everything needed to regenerate the table from scratch.
#[derive(Debug, Clone, PartialEq)]
pub struct TableMeta {
    pub m: usize,
    pub tau: usize,
    pub gap_db: f64,
    /// Pilot amplitude levels of the experiment chain (1 = plain pilot).
    pub num_levels: usize,
    pub constellation_order: usize,
    pub trials: u64,
    pub seed: u64,
}

/// Reference curves over an ascending transmit-power grid.
///
/// `pmse[i]` is the mean composite-pilot MSE of a two-level pilot whose
/// composite power sits at `grid_db[i]`; `ser[i]` and `centroids[i]` come
/// from the full detection chain operating at `grid_db[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTable {
    pub meta: TableMeta,
    grid_db: Vec<f64>,
    pmse: Vec<f64>,
    ser: Vec<f64>,
    centroids: Vec<Vec<Complex64>>,
}

/// Data symbols simulated per coherence block when measuring table SER;
/// matches the harness default block length.
pub const SER_BLOCK_LEN: usize = 100;

impl ReferenceTable {
    /// Assembles a table from pre-computed curves, validating the grid and
    /// value-range invariants.
    pub fn from_parts(
        meta: TableMeta,
        grid_db: Vec<f64>,
        pmse: Vec<f64>,
        ser: Vec<f64>,
        centroids: Vec<Vec<Complex64>>,
    ) -> Result<Self, TableError> {
        if grid_db.is_empty() || grid_db.windows(2).any(|w| w[1] <= w[0]) {
            return Err(TableError::BadGrid);
        }
        if pmse.len() != grid_db.len() || ser.len() != grid_db.len() || centroids.len() != grid_db.len()
        {
            return Err(TableError::Format(format!(
                "curve lengths {}/{}/{} do not match grid length {}",
                pmse.len(),
                ser.len(),
                centroids.len(),
                grid_db.len()
            )));
        }
        if pmse.iter().any(|&v| !(0.0..=4.0).contains(&v)) {
            return Err(TableError::Format("PMSE values outside [0, 4]".into()));
        }
        if ser.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(TableError::Format("SER values outside [0, 1]".into()));
        }
        Ok(ReferenceTable {
            meta,
            grid_db,
            pmse,
            ser,
            centroids,
        })
    }

    pub fn grid_db(&self) -> &[f64] {
        &self.grid_db
    }

    pub fn pmse(&self) -> &[f64] {
        &self.pmse
    }

    pub fn ser(&self) -> &[f64] {
        &self.ser
    }

    pub fn hull(&self) -> (f64, f64) {
        (self.grid_db[0], *self.grid_db.last().unwrap())
    }

    /// Index of the grid point closest to `rho_db`.
    pub fn nearest_index(&self, rho_db: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, &g) in self.grid_db.iter().enumerate() {
            let d = (g - rho_db).abs();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Centroid set stored at the grid point nearest to `rho_db`.
    pub fn centroids_near(&self, rho_db: f64) -> CentroidSet {
        CentroidSet::new(self.centroids[self.nearest_index(rho_db)].clone())
    }

    pub fn centroids_at(&self, index: usize) -> &[Complex64] {
        &self.centroids[index]
    }

    /// Piecewise-linear PMSE lookup in (dB, value) coordinates.
    pub fn interp_pmse(&self, rho_db: f64) -> Result<f64, TableError> {
        interp(&self.grid_db, &self.pmse, rho_db)
    }

    /// Piecewise-linear SER lookup in (dB, value) coordinates.
    pub fn interp_ser(&self, rho_db: f64) -> Result<f64, TableError> {
        interp(&self.grid_db, &self.ser, rho_db)
    }

    /// SER lookup that saturates at the hull edges instead of failing;
    /// used for genie evaluation where traces may leave the grid.
    pub fn interp_ser_clamped(&self, rho_db: f64) -> f64 {
        let (lo, hi) = self.hull();
        self.interp_ser(rho_db.clamp(lo, hi)).expect("clamped query inside hull")
    }

    /// Rejects use of this table with a mismatched experiment (M, tau, gap)
    /// triple. Callers that also depend on the stored pilot ladder or
    /// constellation check those via `meta`.
    pub fn check_compat(&self, m: usize, tau: usize, gap_db: f64) -> Result<(), TableError> {
        let meta = &self.meta;
        if meta.m != m || meta.tau != tau || (meta.gap_db - gap_db).abs() > 1e-12 {
            return Err(TableError::Incompatible {
                table_m: meta.m,
                table_tau: meta.tau,
                table_gap: meta.gap_db,
                want_m: m,
                want_tau: tau,
                want_gap: gap_db,
            });
        }
        Ok(())
    }
}

/// Exact-at-grid-points linear interpolation; no extrapolation.
pub fn interp(grid_db: &[f64], values: &[f64], x: f64) -> Result<f64, TableError> {
    let lo = grid_db[0];
    let hi = *grid_db.last().unwrap();
    if x < lo || x > hi {
        return Err(TableError::OutOfHull { query: x, lo, hi });
    }
    match grid_db.binary_search_by(|g| g.partial_cmp(&x).unwrap()) {
        Ok(i) => Ok(values[i]),
        Err(i) => {
            let (x0, x1) = (grid_db[i - 1], grid_db[i]);
            let t = (x - x0) / (x1 - x0);
            Ok(values[i - 1] + t * (values[i] - values[i - 1]))
        }
    }
}

/// Pool-adjacent-violators isotonic regression, nondecreasing.
pub fn isotonic_increasing(ys: &[f64]) -> Vec<f64> {
    let n = ys.len();
    let mut level: Vec<f64> = Vec::with_capacity(n);
    let mut weight: Vec<f64> = Vec::with_capacity(n);
    for &y in ys {
        level.push(y);
        weight.push(1.0);
        while level.len() > 1 {
            let k = level.len();
            if level[k - 2] <= level[k - 1] {
                break;
            }
            let w = weight[k - 2] + weight[k - 1];
            let v = (level[k - 2] * weight[k - 2] + level[k - 1] * weight[k - 1]) / w;
            level.truncate(k - 1);
            weight.truncate(k - 1);
            level[k - 2] = v;
            weight[k - 2] = w;
        }
    }
    let mut out = Vec::with_capacity(n);
    for (v, w) in level.into_iter().zip(weight) {
        for _ in 0..w as usize {
            out.push(v);
        }
    }
    out
}

/// Pool-adjacent-violators isotonic regression, nonincreasing.
pub fn isotonic_decreasing(ys: &[f64]) -> Vec<f64> {
    let negated: Vec<f64> = ys.iter().map(|y| -y).collect();
    isotonic_increasing(&negated).into_iter().map(|y| -y).collect()
}

/// Two-level composite pilot whose average (composite) power lands exactly
/// on `composite_db` with the given internal gap.
pub fn composite_spec_at(
    base: Vec<Complex64>,
    composite_db: f64,
    gap_db: f64,
) -> Result<PilotSpec, WaveformError> {
    let ratio = db_to_lin(gap_db);
    let rho1 = 2.0 * db_to_lin(composite_db) / (1.0 + ratio);
    let lo_db = lin_to_db(rho1);
    PilotSpec::composite(base, lo_db, lo_db + gap_db)
}

/// Nominal pilot shape of the experiment chain: plain base sequence for
/// L = 1, the multi-amplitude ladder centered at 0 dB otherwise. The grid
/// power is applied on reception.
fn chain_pilot_shape(
    tau: usize,
    num_levels: usize,
    gap_db: f64,
) -> Result<Vec<Complex64>, TableError> {
    let base = zadoff_chu(tau, 1)?;
    let spec = if num_levels == 1 {
        PilotSpec::single(base, 0.0)?
    } else {
        PilotSpec::ladder(base, num_levels, 0.0, gap_db)?
    };
    Ok(build_multiamp_pilot(&spec))
}

// stream-id layout: purpose-major, then grid point, then trial
fn stream_base(purpose: u64, grid_index: usize, n_grid: usize, trials: u64) -> u64 {
    (purpose * n_grid as u64 + grid_index as u64) * trials
}

/// Generates the reference table by Monte-Carlo: per grid point, `trials`
/// fresh (channel, noise) realizations each for the PMSE average, the
/// centroid estimates, and the SER of the full chain. Deterministic for a
/// fixed seed regardless of thread count.
#[allow(clippy::too_many_arguments)]
pub fn gen_tables(
    m: usize,
    tau: usize,
    num_levels: usize,
    gap_db: f64,
    grid_db: &[f64],
    trials: u64,
    constellation_order: usize,
    master_seed: u64,
) -> Result<ReferenceTable, TableError> {
    if grid_db.is_empty() || grid_db.windows(2).any(|w| w[1] <= w[0]) {
        return Err(TableError::BadGrid);
    }
    if trials < 1000 {
        return Err(TableError::TooFewTrials(trials));
    }
    let constellation = qam_constellation(constellation_order)?;
    let base = zadoff_chu(tau, 1)?;
    let pilot_shape = chain_pilot_shape(tau, num_levels, gap_db)?;
    let n_grid = grid_db.len();

    let points: Result<Vec<(f64, f64, Vec<Complex64>)>, TableError> = grid_db
        .par_iter()
        .enumerate()
        .map(|(gi, &rho_db)| {
            // mean PMSE of the two-level composite at this composite power
            let spec = composite_spec_at(base.clone(), rho_db, gap_db)?;
            let q = build_multiamp_pilot(&spec);
            let mut pmse_sum = 0.0;
            let mut pmse_n = 0u64;
            for t in 0..trials {
                let mut rng = RngStream::new(
                    master_seed,
                    stream_base(0, gi, n_grid, trials) + t,
                )
                .rng();
                let h = rayleigh_channel(m, &mut rng);
                let y = apply_uplink(&h, &q, 0.0, &mut rng);
                match estimate_pmse(&quantize_1bit(&y), &q) {
                    Ok(est) => {
                        pmse_sum += est.value;
                        pmse_n += 1;
                    }
                    Err(ReceiverError::DegenerateEstimate) => continue,
                    Err(e) => return Err(e.into()),
                }
            }

            // detector centroids at this operating point
            let centroids = estimate_centroids(
                m,
                rho_db,
                &constellation,
                &pilot_shape,
                Quantization::OneBit,
                trials,
                RngStream::new(master_seed, stream_base(1, gi, n_grid, trials)),
            )?;

            // SER through the full chain
            let mut class_errors = vec![0u64; constellation_order];
            let mut class_counts = vec![0u64; constellation_order];
            for t in 0..trials {
                let mut rng = RngStream::new(
                    master_seed,
                    stream_base(2, gi, n_grid, trials) + t,
                )
                .rng();
                let h = rayleigh_channel(m, &mut rng);
                let (tx, data) = draw_data_symbols(&constellation, SER_BLOCK_LEN, &mut rng);
                let rx = match block_detect(
                    &h,
                    &pilot_shape,
                    &data,
                    rho_db,
                    &centroids,
                    Quantization::OneBit,
                    &mut rng,
                ) {
                    Ok(rx) => rx,
                    Err(ReceiverError::DegenerateCombiner) => continue,
                    Err(e) => return Err(e.into()),
                };
                for (s, d) in tx.iter().zip(&rx) {
                    class_counts[*s] += 1;
                    if s != d {
                        class_errors[*s] += 1;
                    }
                }
            }
            let present = class_counts.iter().filter(|&&c| c > 0).count();
            let ser = class_counts
                .iter()
                .zip(&class_errors)
                .filter(|(&c, _)| c > 0)
                .map(|(&c, &e)| e as f64 / c as f64)
                .sum::<f64>()
                / present as f64;

            Ok((pmse_sum / pmse_n as f64, ser, centroids.centroids().to_vec()))
        })
        .collect();
    let points = points?;

    let mut pmse = Vec::with_capacity(n_grid);
    let mut ser = Vec::with_capacity(n_grid);
    let mut centroids = Vec::with_capacity(n_grid);
    for (p, s, c) in points {
        pmse.push(p);
        ser.push(s);
        centroids.push(c);
    }
    Ok(ReferenceTable {
        meta: TableMeta {
            m,
            tau,
            gap_db,
            num_levels,
            constellation_order,
            trials,
            seed: master_seed,
        },
        grid_db: grid_db.to_vec(),
        pmse,
        ser,
        centroids,
    })
}

/// Which side of the SER minimum the link is operating on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    AwgnLimited,
    QuantizationLimited,
}

struct Branch {
    // rho values of the branch, in pmse-ascending order
    rho: Vec<f64>,
    // strictly ascending after cleanup (it is the lookup key)
    pmse: Vec<f64>,
    // isotonic in rho, weakly monotone along the branch
    ser: Vec<f64>,
}

impl Branch {
    /// SER at the given PMSE level, clamped to the branch range.
    fn map(&self, pmse: f64) -> f64 {
        let n = self.pmse.len();
        let x = pmse.clamp(self.pmse[0], self.pmse[n - 1]);
        interp(&self.pmse, &self.ser, x).expect("clamped query inside branch range")
    }
}

/// One-to-one PMSE-to-SER maps on the two sides of the SER minimum.
///
/// Monte-Carlo noise makes raw curves locally non-monotone, so each side
/// is cleaned with isotonic regression (decreasing-in-rho left of the
/// minimum, increasing right of it) before the map is built; exact ties
/// left by the pooling are separated by a vanishing ramp so both branches
/// are strictly monotone and invertible.
pub struct BranchMap {
    /// Transmit power at the SER minimum, dB.
    pub rho_min_db: f64,
    awgn: Branch,
    qd: Branch,
}

impl BranchMap {
    /// SER for an observed PMSE value, given the region identified by the
    /// sign of the differential PMSE. Queries saturate at the branch ends.
    pub fn map_ser(&self, region: Region, pmse: f64) -> f64 {
        match region {
            Region::AwgnLimited => self.awgn.map(pmse),
            Region::QuantizationLimited => self.qd.map(pmse),
        }
    }

    /// Smallest rho on the AWGN branch whose cleaned SER meets the target,
    /// interpolated in log-SER where possible. None if the branch never
    /// reaches the target.
    pub fn awgn_target_rho_db(&self, target_ser: f64) -> Option<f64> {
        // awgn branch arrays are pmse-ascending = rho-descending; walk in
        // rho-ascending order
        let n = self.awgn.rho.len();
        let rho_asc: Vec<f64> = self.awgn.rho.iter().rev().copied().collect();
        let ser_asc: Vec<f64> = self.awgn.ser.iter().rev().copied().collect();
        let hit = (0..n).find(|&i| ser_asc[i] <= target_ser)?;
        if hit == 0 {
            return Some(rho_asc[0]);
        }
        let (r0, r1) = (rho_asc[hit - 1], rho_asc[hit]);
        let (s0, s1) = (ser_asc[hit - 1], ser_asc[hit]);
        let t = if s0 > 0.0 && s1 > 0.0 && s0 != s1 {
            (target_ser.log10() - s0.log10()) / (s1.log10() - s0.log10())
        } else if s0 != s1 {
            (target_ser - s0) / (s1 - s0)
        } else {
            1.0
        };
        Some(r0 + t.clamp(0.0, 1.0) * (r1 - r0))
    }

    /// PMSE range covered by a branch.
    pub fn pmse_range(&self, region: Region) -> (f64, f64) {
        let b = match region {
            Region::AwgnLimited => &self.awgn,
            Region::QuantizationLimited => &self.qd,
        };
        (b.pmse[0], *b.pmse.last().unwrap())
    }
}

fn strictify(ys: &mut [f64], ascending: bool) {
    let span = (ys[ys.len() - 1] - ys[0]).abs().max(1e-9);
    let eps = span * 1e-12;
    for i in 1..ys.len() {
        if ascending {
            if ys[i] <= ys[i - 1] {
                ys[i] = ys[i - 1] + eps;
            }
        } else if ys[i] >= ys[i - 1] {
            ys[i] = ys[i - 1] - eps;
        }
    }
}

/// Splits the table at the SER argmin and builds the two monotone
/// PMSE-to-SER branches.
pub fn build_branch_map(table: &ReferenceTable) -> Result<BranchMap, TableError> {
    let n = table.grid_db.len();
    let k_min = table
        .ser
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    if k_min == 0 || k_min == n - 1 {
        return Err(TableError::NoInteriorMinimum);
    }

    // left of the minimum: SER and PMSE both decrease as rho rises; only
    // the PMSE (the lookup key) needs strictness
    let mut ser_left = isotonic_decreasing(&table.ser[..=k_min]);
    let mut pmse_left = isotonic_decreasing(&table.pmse[..=k_min]);
    strictify(&mut pmse_left, false);
    ser_left.reverse();
    pmse_left.reverse();
    let rho_left: Vec<f64> = table.grid_db[..=k_min].iter().rev().copied().collect();

    // right of the minimum: both increase with rho
    let ser_right = isotonic_increasing(&table.ser[k_min..]);
    let mut pmse_right = isotonic_increasing(&table.pmse[k_min..]);
    strictify(&mut pmse_right, true);
    let rho_right = table.grid_db[k_min..].to_vec();

    Ok(BranchMap {
        rho_min_db: table.grid_db[k_min],
        awgn: Branch {
            rho: rho_left,
            pmse: pmse_left,
            ser: ser_left,
        },
        qd: Branch {
            rho: rho_right,
            pmse: pmse_right,
            ser: ser_right,
        },
    })
}

fn fmt_f64(x: f64) -> String {
    // 17 significant digits: round-trips every f64 exactly
    format!("{x:.16e}")
}

/// Serializes the table to the self-describing text format.
pub fn table_to_string(table: &ReferenceTable) -> String {
    let meta = &table.meta;
    let order = meta.constellation_order;
    let mut body = String::new();
    body.push_str("rho_db,pmse,ser");
    for k in 1..=order {
        let _ = write!(body, ",centroid_re_{k},centroid_im_{k}");
    }
    body.push('\n');
    for i in 0..table.grid_db.len() {
        let _ = write!(
            body,
            "{},{},{}",
            fmt_f64(table.grid_db[i]),
            fmt_f64(table.pmse[i]),
            fmt_f64(table.ser[i])
        );
        for c in &table.centroids[i] {
            let _ = write!(body, ",{},{}", fmt_f64(c.re), fmt_f64(c.im));
        }
        body.push('\n');
    }

    let digest = Sha256::digest(body.as_bytes());
    let mut out = String::new();
    let _ = writeln!(out, "{TABLE_MAGIC}");
    let _ = writeln!(out, "# m={}", meta.m);
    let _ = writeln!(out, "# tau={}", meta.tau);
    let _ = writeln!(out, "# gap_db={}", fmt_f64(meta.gap_db));
    let _ = writeln!(out, "# num_levels={}", meta.num_levels);
    let _ = writeln!(out, "# constellation_order={}", meta.constellation_order);
    let _ = writeln!(out, "# trials={}", meta.trials);
    let _ = writeln!(out, "# seed={}", meta.seed);
    let _ = writeln!(out, "# grid_points={}", table.grid_db.len());
    let _ = writeln!(out, "# sha256={digest:x}");
    out.push_str(&body);
    out
}

/// Writes the table to `path`.
pub fn save(table: &ReferenceTable, path: &Path) -> Result<(), TableError> {
    fs::write(path, table_to_string(table))?;
    Ok(())
}

/// Reads a table back; verifies magic, version, and checksum, and that the
/// payload round-trips bit-exactly.
pub fn load(path: &Path) -> Result<ReferenceTable, TableError> {
    let text = fs::read_to_string(path)?;
    table_from_str(&text)
}

/// Parses the text format produced by [`table_to_string`].
pub fn table_from_str(text: &str) -> Result<ReferenceTable, TableError> {
    let mut lines = text.lines();
    let magic = lines
        .next()
        .ok_or_else(|| TableError::Format("empty file".into()))?;
    if magic.trim_end() != TABLE_MAGIC {
        return Err(TableError::Format(format!(
            "bad magic line {magic:?}, expected {TABLE_MAGIC:?}"
        )));
    }

    let mut meta_pairs = std::collections::HashMap::new();
    let mut body_start = magic.len() + 1;
    for line in lines {
        if let Some(rest) = line.strip_prefix("# ") {
            body_start += line.len() + 1;
            let (key, value) = rest
                .split_once('=')
                .ok_or_else(|| TableError::Format(format!("bad header line {line:?}")))?;
            meta_pairs.insert(key.to_string(), value.to_string());
        } else {
            break;
        }
    }

    let get = |key: &str| -> Result<&String, TableError> {
        meta_pairs
            .get(key)
            .ok_or_else(|| TableError::Format(format!("missing header key {key}")))
    };
    let parse_usize = |key: &str| -> Result<usize, TableError> {
        get(key)?
            .parse()
            .map_err(|_| TableError::Format(format!("bad integer for {key}")))
    };
    let parse_u64 = |key: &str| -> Result<u64, TableError> {
        get(key)?
            .parse()
            .map_err(|_| TableError::Format(format!("bad integer for {key}")))
    };
    let parse_f64 = |key: &str| -> Result<f64, TableError> {
        get(key)?
            .parse()
            .map_err(|_| TableError::Format(format!("bad float for {key}")))
    };

    let meta = TableMeta {
        m: parse_usize("m")?,
        tau: parse_usize("tau")?,
        gap_db: parse_f64("gap_db")?,
        num_levels: parse_usize("num_levels")?,
        constellation_order: parse_usize("constellation_order")?,
        trials: parse_u64("trials")?,
        seed: parse_u64("seed")?,
    };
    let grid_points = parse_usize("grid_points")?;
    let sha_expected = get("sha256")?.clone();

    let body = &text[body_start..];
    let digest = Sha256::digest(body.as_bytes());
    if format!("{digest:x}") != sha_expected {
        return Err(TableError::Checksum);
    }

    let mut body_lines = body.lines();
    let header = body_lines
        .next()
        .ok_or_else(|| TableError::Format("missing column header".into()))?;
    let expected_cols = 3 + 2 * meta.constellation_order;
    if header.split(',').count() != expected_cols {
        return Err(TableError::Format(format!(
            "column header has {} fields, expected {expected_cols}",
            header.split(',').count()
        )));
    }

    let mut grid_db = Vec::with_capacity(grid_points);
    let mut pmse = Vec::with_capacity(grid_points);
    let mut ser = Vec::with_capacity(grid_points);
    let mut centroids = Vec::with_capacity(grid_points);
    for line in body_lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected_cols {
            return Err(TableError::Format(format!(
                "row has {} fields, expected {expected_cols}",
                fields.len()
            )));
        }
        let parse = |s: &str| -> Result<f64, TableError> {
            s.parse()
                .map_err(|_| TableError::Format(format!("bad float {s:?}")))
        };
        grid_db.push(parse(fields[0])?);
        pmse.push(parse(fields[1])?);
        ser.push(parse(fields[2])?);
        let mut row = Vec::with_capacity(meta.constellation_order);
        for k in 0..meta.constellation_order {
            row.push(Complex64::new(
                parse(fields[3 + 2 * k])?,
                parse(fields[4 + 2 * k])?,
            ));
        }
        centroids.push(row);
    }
    if grid_db.len() != grid_points {
        return Err(TableError::Format(format!(
            "found {} rows, header promised {grid_points}",
            grid_db.len()
        )));
    }
    if grid_db.is_empty() || grid_db.windows(2).any(|w| w[1] <= w[0]) {
        return Err(TableError::BadGrid);
    }
    Ok(ReferenceTable {
        meta,
        grid_db,
        pmse,
        ser,
        centroids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_table() -> ReferenceTable {
        gen_tables(8, 7, 1, 5.0, &[-6.0, 0.0, 6.0], 1000, 4, 99).unwrap()
    }

    #[test]
    fn gen_is_deterministic() {
        let a = gen_tables(8, 7, 1, 5.0, &[-3.0, 3.0], 1000, 4, 7).unwrap();
        let b = gen_tables(8, 7, 1, 5.0, &[-3.0, 3.0], 1000, 4, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gen_rejects_bad_inputs() {
        assert!(matches!(
            gen_tables(8, 7, 1, 5.0, &[0.0, 0.0], 1000, 4, 7),
            Err(TableError::BadGrid)
        ));
        assert!(matches!(
            gen_tables(8, 7, 1, 5.0, &[0.0, 1.0], 999, 4, 7),
            Err(TableError::TooFewTrials(999))
        ));
    }

    #[test]
    fn interp_exact_midpoint_and_hull() {
        let grid = [0.0, 1.0, 3.0];
        let vals = [10.0, 20.0, 40.0];
        assert_eq!(interp(&grid, &vals, 1.0).unwrap(), 20.0);
        assert_eq!(interp(&grid, &vals, 0.5).unwrap(), 15.0);
        assert_eq!(interp(&grid, &vals, 2.0).unwrap(), 30.0);
        assert!(matches!(
            interp(&grid, &vals, 3.5),
            Err(TableError::OutOfHull { .. })
        ));
        assert!(matches!(
            interp(&grid, &vals, -0.1),
            Err(TableError::OutOfHull { .. })
        ));
    }

    #[test]
    fn isotonic_pav_pools_violators() {
        let ys = [1.0, 3.0, 2.0, 4.0, 3.5, 5.0];
        let fit = isotonic_increasing(&ys);
        for w in fit.windows(2) {
            assert!(w[1] >= w[0]);
        }
        assert_eq!(fit[1], fit[2]); // 3,2 pooled to 2.5
        assert!((fit[1] - 2.5).abs() < 1e-12);
        // idempotent on already-sorted input
        let sorted = [1.0, 2.0, 3.0];
        assert_eq!(isotonic_increasing(&sorted), sorted.to_vec());
        // decreasing variant mirrors
        let dec = isotonic_decreasing(&[5.0, 3.0, 4.0, 1.0]);
        for w in dec.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn composite_spec_hits_requested_power() {
        let base = zadoff_chu(7, 1).unwrap();
        for target in [-10.0, 0.0, 17.5] {
            let spec = composite_spec_at(base.clone(), target, 5.0).unwrap();
            assert!((spec.mean_power_db() - target).abs() < 1e-9);
            assert!((spec.gap_db() - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let table = tiny_table();
        let dir = std::env::temp_dir().join("onebit_uplink_test_roundtrip");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("table.csv");
        save(&table, &path).unwrap();
        let back = load(&path).unwrap();
        assert_eq!(table, back);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn load_rejects_bad_magic_and_checksum() {
        let table = tiny_table();
        let text = table_to_string(&table);

        let bad_magic = text.replacen("reftable v1", "reftable v9", 1);
        assert!(matches!(
            table_from_str(&bad_magic),
            Err(TableError::Format(_))
        ));

        // flip one payload digit: checksum must catch it
        let idx = text.rfind('7').or_else(|| text.rfind('3')).unwrap();
        let mut corrupted = text.clone();
        corrupted.replace_range(idx..idx + 1, "8");
        assert!(matches!(
            table_from_str(&corrupted),
            Err(TableError::Checksum)
        ));
    }

    #[test]
    fn compat_check_reports_both_tuples() {
        let table = tiny_table();
        assert!(table.check_compat(8, 7, 5.0).is_ok());
        let err = table.check_compat(16, 7, 5.0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("M=8") && msg.contains("M=16"), "{msg}");
    }

    #[test]
    fn branch_map_from_synthetic_curves() {
        // analytic U-shaped curves with aligned minima at rho = 0 and an
        // asymmetric SER (steep AWGN waterfall, shallower distortion side)
        let grid: Vec<f64> = (0..41).map(|i| -20.0 + i as f64).collect();
        let ser: Vec<f64> = grid
            .iter()
            .map(|&g| {
                let exponent = if g <= 0.0 {
                    -4.0 + (g / 7.0) * (g / 7.0)
                } else {
                    -4.0 + (g / 4.0) * (g / 4.0)
                };
                10f64.powf(exponent).min(0.75)
            })
            .collect();
        let pmse: Vec<f64> = grid.iter().map(|&g| 0.2 + 0.003 * (g / 2.0) * (g / 2.0)).collect();
        let table = ReferenceTable::from_parts(
            TableMeta {
                m: 1,
                tau: 1,
                gap_db: 5.0,
                num_levels: 1,
                constellation_order: 4,
                trials: 1000,
                seed: 0,
            },
            grid.clone(),
            pmse.clone(),
            ser.clone(),
            vec![vec![Complex64::new(0.0, 0.0); 4]; grid.len()],
        )
        .unwrap();
        let map = build_branch_map(&table).unwrap();
        assert_eq!(map.rho_min_db, 0.0);

        // parameterization consistency: querying a branch at a stored PMSE
        // value returns that grid point's SER
        for (i, &g) in grid.iter().enumerate() {
            let region = if g <= map.rho_min_db {
                Region::AwgnLimited
            } else {
                Region::QuantizationLimited
            };
            let mapped = map.map_ser(region, pmse[i]);
            assert!(
                (mapped - ser[i]).abs() / ser[i] < 0.1,
                "rho {g}: mapped {mapped} vs {}",
                ser[i]
            );
        }

        // the same PMSE level on the two branches gives different SER
        let probe = 0.25;
        let a = map.map_ser(Region::AwgnLimited, probe);
        let q = map.map_ser(Region::QuantizationLimited, probe);
        assert!((a - q).abs() / a.min(q) > 0.05, "awgn {a} vs qd {q}");
    }

    #[test]
    fn branch_map_requires_interior_minimum() {
        let grid: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ser: Vec<f64> = grid.iter().map(|&g| 1.0 / (1.0 + g)).collect();
        let table = ReferenceTable::from_parts(
            TableMeta {
                m: 1,
                tau: 1,
                gap_db: 5.0,
                num_levels: 1,
                constellation_order: 4,
                trials: 1000,
                seed: 0,
            },
            grid.clone(),
            ser.clone(),
            ser,
            vec![vec![Complex64::new(0.0, 0.0); 4]; grid.len()],
        )
        .unwrap();
        assert!(matches!(
            build_branch_map(&table),
            Err(TableError::NoInteriorMinimum)
        ));
    }

    #[test]
    fn pmse_stderr_scales_with_trials() {
        // std of the per-point PMSE mean over seed replicates should drop
        // by sqrt(2) when trials double
        let base = zadoff_chu(7, 1).unwrap();
        let spec = composite_spec_at(base, 0.0, 5.0).unwrap();
        let q = build_multiamp_pilot(&spec);
        let mean_pmse = |seed: u64, trials: u64| -> f64 {
            let mut acc = 0.0;
            for t in 0..trials {
                let mut rng = RngStream::new(seed, t).rng();
                let h = rayleigh_channel(8, &mut rng);
                let y = apply_uplink(&h, &q, 0.0, &mut rng);
                acc += estimate_pmse(&quantize_1bit(&y), &q).unwrap().value;
            }
            acc / trials as f64
        };
        let reps = 100u64;
        let std_of = |trials: u64| -> f64 {
            let means: Vec<f64> = (0..reps).map(|r| mean_pmse(1000 + r, trials)).collect();
            let mu = means.iter().sum::<f64>() / reps as f64;
            (means.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (reps - 1) as f64).sqrt()
        };
        let ratio = std_of(150) / std_of(300);
        let target = 2f64.sqrt();
        assert!(
            (ratio - target).abs() / target < 0.2,
            "stderr ratio {ratio} vs sqrt(2)"
        );
    }
}
