//! Experiment configuration: defaults, flat key=value config files, and
//! validation. Flags parsed by the CLI override file values, which
//! override the defaults below.

use crate::simharness::HarnessError;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    GenTables,
    SerSweep,
    PmseSweep,
    ConstelDump,
    SingleShotEval,
    DpcRun,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::GenTables => "gen-tables",
            Experiment::SerSweep => "ser-sweep",
            Experiment::PmseSweep => "pmse-sweep",
            Experiment::ConstelDump => "constel-dump",
            Experiment::SingleShotEval => "single-shot-eval",
            Experiment::DpcRun => "dpc-run",
        }
    }
}

/// Where the conventional baseline's SER observation comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SerSource {
    /// Table lookup at the true effective power.
    Genie,
    /// Measured over the step's data symbols.
    Estimated,
}

/// Fully resolved run configuration. Every field is echoed into output
/// headers so a run can be reproduced from its own artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub m: usize,
    pub tau: usize,
    /// Pilot amplitude levels L (1 = plain single-amplitude pilot).
    pub num_levels: usize,
    pub gap_db: f64,
    pub rho_start_db: f64,
    pub constellation_order: usize,
    /// Sweep grid in dB: either "lo:hi:step" or an explicit comma list.
    pub grid: GridSpec,
    pub trials: u64,
    pub seed: u64,
    pub data_symbols: usize,
    /// Fig.-2 style dump: composite power and realization count.
    pub dump_rho_db: f64,
    pub realizations: u64,
    /// Offset search window for the single-shot fit.
    pub search_span_db: f64,
    pub search_step_db: f64,
    /// (L, tau) combinations evaluated by single-shot-eval.
    pub combos: Vec<(usize, usize)>,
    // closed-loop scenario
    pub target_ser: f64,
    pub eta_db: f64,
    pub feedback_rate_hz: f64,
    pub d0_m: f64,
    pub velocity_mps: f64,
    pub distance_m: f64,
    pub shadow_sigma_db: f64,
    pub shadow_corr_m: f64,
    pub epsilon_db: f64,
    pub ser_source: SerSource,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            m: 256,
            tau: 127,
            num_levels: 1,
            gap_db: 5.0,
            rho_start_db: 0.0,
            constellation_order: 16,
            grid: GridSpec::Range {
                lo: -30.0,
                hi: 30.0,
                step: 0.5,
            },
            trials: 10_000,
            seed: 0,
            data_symbols: 100,
            dump_rho_db: -2.0,
            realizations: 10,
            search_span_db: 10.0,
            search_step_db: 0.1,
            combos: vec![(3, 7), (3, 127)],
            target_ser: 5e-5,
            eta_db: 0.5,
            feedback_rate_hz: 100.0,
            d0_m: 63.73,
            velocity_mps: 20.0,
            distance_m: 50.0,
            shadow_sigma_db: 4.0,
            shadow_corr_m: 10.0,
            epsilon_db: -5.0,
            ser_source: SerSource::Genie,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    Range { lo: f64, hi: f64, step: f64 },
    List(Vec<f64>),
}

impl GridSpec {
    /// Expands to the ascending list of grid points.
    pub fn points(&self) -> Result<Vec<f64>, HarnessError> {
        let pts = match self {
            GridSpec::Range { lo, hi, step } => {
                if !(step > &0.0) || hi < lo {
                    return Err(HarnessError::Config(format!(
                        "bad grid range {lo}:{hi}:{step}"
                    )));
                }
                let n = ((hi - lo) / step).round() as usize;
                (0..=n).map(|k| lo + k as f64 * step).collect()
            }
            GridSpec::List(pts) => pts.clone(),
        };
        if pts.is_empty() || pts.windows(2).any(|w| w[1] <= w[0]) {
            return Err(HarnessError::Config(
                "grid must be non-empty and strictly ascending".into(),
            ));
        }
        Ok(pts)
    }

    pub fn parse(s: &str) -> Result<GridSpec, HarnessError> {
        let bad = |what: &str| HarnessError::Config(format!("bad grid {s:?}: {what}"));
        if s.contains(':') {
            let parts: Vec<&str> = s.split(':').collect();
            if parts.len() != 3 {
                return Err(bad("expected lo:hi:step"));
            }
            let nums: Result<Vec<f64>, _> = parts.iter().map(|p| p.trim().parse()).collect();
            let nums = nums.map_err(|_| bad("non-numeric bound"))?;
            Ok(GridSpec::Range {
                lo: nums[0],
                hi: nums[1],
                step: nums[2],
            })
        } else {
            let nums: Result<Vec<f64>, _> = s.split(',').map(|p| p.trim().parse()).collect();
            Ok(GridSpec::List(nums.map_err(|_| bad("non-numeric entry"))?))
        }
    }

    fn to_config_string(&self) -> String {
        match self {
            GridSpec::Range { lo, hi, step } => format!("{lo}:{hi}:{step}"),
            GridSpec::List(pts) => pts
                .iter()
                .map(|p| p.to_string())
                .collect::<Vec<_>>()
                .join(","),
        }
    }
}

pub fn parse_combos(s: &str) -> Result<Vec<(usize, usize)>, HarnessError> {
    s.split(',')
        .map(|part| {
            let (l, tau) = part
                .trim()
                .split_once('x')
                .ok_or_else(|| HarnessError::Config(format!("bad combo {part:?}: want LxTAU")))?;
            let l = l
                .trim()
                .parse()
                .map_err(|_| HarnessError::Config(format!("bad combo level count {l:?}")))?;
            let tau = tau
                .trim()
                .parse()
                .map_err(|_| HarnessError::Config(format!("bad combo tau {tau:?}")))?;
            Ok((l, tau))
        })
        .collect()
}

fn combos_to_string(combos: &[(usize, usize)]) -> String {
    combos
        .iter()
        .map(|(l, t)| format!("{l}x{t}"))
        .collect::<Vec<_>>()
        .join(",")
}

impl ExperimentConfig {
    /// Applies `key=value` pairs from a flat config file and returns the
    /// keys that were set. Unknown keys are rejected so typos fail loudly.
    pub fn apply_file(&mut self, text: &str) -> Result<Vec<String>, HarnessError> {
        let mut keys = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                HarnessError::Config(format!("config line {}: expected key=value", lineno + 1))
            })?;
            self.apply_pair(key.trim(), value.trim())?;
            keys.push(key.trim().to_string());
        }
        Ok(keys)
    }

    pub fn apply_pair(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        let bad =
            |what: &str| HarnessError::Config(format!("config key {key}: bad value {value:?} ({what})"));
        macro_rules! num {
            () => {
                value.parse().map_err(|_| bad("not a number"))?
            };
        }
        match key {
            "m" => self.m = num!(),
            "tau" => self.tau = num!(),
            "levels" => self.num_levels = num!(),
            "gap_db" => self.gap_db = num!(),
            "rho_start_db" => self.rho_start_db = num!(),
            "order" => self.constellation_order = num!(),
            "grid" => self.grid = GridSpec::parse(value)?,
            "trials" => self.trials = num!(),
            "seed" => self.seed = num!(),
            "data_symbols" => self.data_symbols = num!(),
            "dump_rho_db" => self.dump_rho_db = num!(),
            "realizations" => self.realizations = num!(),
            "search_span_db" => self.search_span_db = num!(),
            "search_step_db" => self.search_step_db = num!(),
            "combos" => self.combos = parse_combos(value)?,
            "target_ser" => self.target_ser = num!(),
            "eta_db" => self.eta_db = num!(),
            "feedback_rate_hz" => self.feedback_rate_hz = num!(),
            "d0_m" => self.d0_m = num!(),
            "velocity_mps" => self.velocity_mps = num!(),
            "distance_m" => self.distance_m = num!(),
            "shadow_sigma_db" => self.shadow_sigma_db = num!(),
            "shadow_corr_m" => self.shadow_corr_m = num!(),
            "epsilon_db" => self.epsilon_db = num!(),
            "ser_source" => {
                self.ser_source = match value {
                    "genie" => SerSource::Genie,
                    "estimated" => SerSource::Estimated,
                    _ => return Err(bad("want genie or estimated")),
                }
            }
            _ => return Err(HarnessError::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Validates fields that every experiment relies on.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |what: String| Err(HarnessError::Config(what));
        if self.m == 0 {
            return fail("m must be >= 1".into());
        }
        if self.num_levels == 0 {
            return fail("levels must be >= 1".into());
        }
        if !(self.gap_db > 0.0) {
            return fail(format!("gap_db must be positive, got {}", self.gap_db));
        }
        if self.data_symbols == 0 {
            return fail("data_symbols must be >= 1".into());
        }
        if !(self.target_ser > 0.0 && self.target_ser < 1.0) {
            return fail(format!("target_ser must be in (0,1), got {}", self.target_ser));
        }
        if !(self.eta_db > 0.0) {
            return fail(format!("eta_db must be positive, got {}", self.eta_db));
        }
        if !(self.feedback_rate_hz > 0.0) {
            return fail("feedback_rate_hz must be positive".into());
        }
        if !(self.velocity_mps >= 0.0) {
            return fail("velocity_mps must be nonnegative".into());
        }
        Ok(())
    }

    /// Key=value echo of the resolved configuration, in fixed order, for
    /// output headers. Re-running from these pairs reproduces the run.
    pub fn echo_pairs(&self) -> Vec<(String, String)> {
        let mut pairs: BTreeMap<&str, String> = BTreeMap::new();
        pairs.insert("m", self.m.to_string());
        pairs.insert("tau", self.tau.to_string());
        pairs.insert("levels", self.num_levels.to_string());
        pairs.insert("gap_db", self.gap_db.to_string());
        pairs.insert("rho_start_db", self.rho_start_db.to_string());
        pairs.insert("order", self.constellation_order.to_string());
        pairs.insert("grid", self.grid.to_config_string());
        pairs.insert("trials", self.trials.to_string());
        pairs.insert("seed", self.seed.to_string());
        pairs.insert("data_symbols", self.data_symbols.to_string());
        pairs.insert("dump_rho_db", self.dump_rho_db.to_string());
        pairs.insert("realizations", self.realizations.to_string());
        pairs.insert("search_span_db", self.search_span_db.to_string());
        pairs.insert("search_step_db", self.search_step_db.to_string());
        pairs.insert("combos", combos_to_string(&self.combos));
        pairs.insert("target_ser", self.target_ser.to_string());
        pairs.insert("eta_db", self.eta_db.to_string());
        pairs.insert("feedback_rate_hz", self.feedback_rate_hz.to_string());
        pairs.insert("d0_m", self.d0_m.to_string());
        pairs.insert("velocity_mps", self.velocity_mps.to_string());
        pairs.insert("distance_m", self.distance_m.to_string());
        pairs.insert("shadow_sigma_db", self.shadow_sigma_db.to_string());
        pairs.insert("shadow_corr_m", self.shadow_corr_m.to_string());
        pairs.insert("epsilon_db", self.epsilon_db.to_string());
        pairs.insert(
            "ser_source",
            match self.ser_source {
                SerSource::Genie => "genie".to_string(),
                SerSource::Estimated => "estimated".to_string(),
            },
        );
        pairs
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect()
    }
}

/// 17 significant digits: round-trips every f64 exactly.
pub fn fmt_full(x: f64) -> String {
    format!("{x:.16e}")
}

/// Assembles a CSV artifact: `#`-prefixed header with the format version,
/// experiment name, and the full resolved config, then the column row and
/// data rows.
pub struct CsvArtifact {
    header: String,
    body: String,
}

impl CsvArtifact {
    pub fn new(
        experiment: Experiment,
        cfg: &ExperimentConfig,
        extra: &[(String, String)],
        columns: &[&str],
    ) -> Self {
        let mut header = String::new();
        let _ = writeln!(header, "# onebit-uplink {} v1", experiment.name());
        for (k, v) in cfg.echo_pairs() {
            let _ = writeln!(header, "# {k}={v}");
        }
        for (k, v) in extra {
            let _ = writeln!(header, "# {k}={v}");
        }
        let mut body = String::new();
        let _ = writeln!(body, "{}", columns.join(","));
        CsvArtifact { header, body }
    }

    pub fn push_comment(&mut self, key: &str, value: &str) {
        let _ = writeln!(self.header, "# {key}={value}");
    }

    pub fn push_row(&mut self, fields: &[String]) {
        let _ = writeln!(self.body, "{}", fields.join(","));
    }

    pub fn finish(self) -> String {
        format!("{}{}", self.header, self.body)
    }
}

/// Optional output target: a path or stdout.
#[derive(Debug, Clone)]
pub struct OutputTarget(pub Option<PathBuf>);
