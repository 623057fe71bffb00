//! Command-line interface. Flags override the config file, which overrides
//! the defaults; an omitted seed is drawn from entropy and echoed in the
//! output header so every run stays reproducible from its artifact.

use crate::reftables::{self, ReferenceTable};
use crate::simharness::config::{parse_combos, ExperimentConfig, GridSpec};
use crate::simharness::{
    run_constel_dump, run_dpc_scenario, run_pmse_sweep, run_ser_sweep, run_single_shot_eval,
    HarnessError,
};
use clap::{Args, Parser, Subcommand};
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(
    name = "onebit-uplink",
    version,
    about = "Link-level simulator for the 1-bit massive MIMO uplink: reference tables, \
             SER/PMSE sweeps, and closed-loop power control experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate PMSE/SER/centroid reference tables and save them to --out
    GenTables(RunArgs),
    /// SER versus transmit power, 1-bit chain and unquantized baseline
    SerSweep(RunArgs),
    /// Composite-pilot MSE versus composite power
    PmseSweep(RunArgs),
    /// Dump normalized received pilot estimates at one power (scatter data)
    ConstelDump(RunArgs),
    /// Offset-estimation error of the single-shot method over (L, tau)
    SingleShotEval(RunArgs),
    /// Closed-loop mobility scenario: DPC, conventional, and fixed power
    DpcRun(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Flat key=value config file; flags given here override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base station antennas
    #[arg(long)]
    m: Option<usize>,
    /// Pilot sequence length (odd prime)
    #[arg(long)]
    tau: Option<usize>,
    /// Pilot amplitude levels L (odd; 1 = single-amplitude pilot)
    #[arg(long)]
    levels: Option<usize>,
    /// Composite pilot power gap, dB
    #[arg(long = "gap-db", allow_negative_numbers = true)]
    gap_db: Option<f64>,
    /// Ladder center power shift, dB
    #[arg(long = "rho-start-db", allow_negative_numbers = true)]
    rho_start_db: Option<f64>,
    /// Constellation order (4, 16, 64)
    #[arg(long)]
    order: Option<usize>,
    /// Power grid: "lo:hi:step" or comma-separated dB values
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    /// Monte-Carlo trials per grid point
    #[arg(long)]
    trials: Option<u64>,
    /// Master seed; omitted = drawn from entropy (echoed in the header)
    #[arg(long)]
    seed: Option<u64>,
    /// Reference table file (repeat for single-shot-eval with several tau)
    #[arg(long)]
    table: Vec<PathBuf>,
    /// Output file; stdout when omitted (gen-tables requires it)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Data symbols per coherence block
    #[arg(long = "data-symbols")]
    data_symbols: Option<usize>,
    /// Composite power for constel-dump, dB
    #[arg(long = "dump-rho-db", allow_negative_numbers = true)]
    dump_rho_db: Option<f64>,
    /// Realizations for constel-dump
    #[arg(long)]
    realizations: Option<u64>,
    /// Single-shot search span, dB (offsets searched in +-span)
    #[arg(long = "span-db", allow_negative_numbers = true)]
    search_span_db: Option<f64>,
    /// Single-shot search resolution, dB
    #[arg(long = "step-db", allow_negative_numbers = true)]
    search_step_db: Option<f64>,
    /// (L, tau) combos for single-shot-eval, e.g. "3x7,3x127,7x7"
    #[arg(long)]
    combos: Option<String>,
    /// Closed-loop SER target
    #[arg(long = "target-ser", allow_negative_numbers = true)]
    target_ser: Option<f64>,
    /// Feedback step size eta, dB
    #[arg(long = "eta-db", allow_negative_numbers = true)]
    eta_db: Option<f64>,
    /// Power-control feedback rate, Hz
    #[arg(long = "feedback-rate-hz", allow_negative_numbers = true)]
    feedback_rate_hz: Option<f64>,
    /// Initial UE-BS distance, m
    #[arg(long = "d0-m", allow_negative_numbers = true)]
    d0_m: Option<f64>,
    /// UE speed toward the BS, m/s
    #[arg(long = "velocity-mps", allow_negative_numbers = true)]
    velocity_mps: Option<f64>,
    /// Distance traveled, m
    #[arg(long = "distance-m", allow_negative_numbers = true)]
    distance_m: Option<f64>,
    /// Shadow fading standard deviation, dB
    #[arg(long = "shadow-sigma-db", allow_negative_numbers = true)]
    shadow_sigma_db: Option<f64>,
    /// Shadowing decorrelation distance, m
    #[arg(long = "shadow-corr-m", allow_negative_numbers = true)]
    shadow_corr_m: Option<f64>,
    /// Open-loop pathloss compensation error, dB
    #[arg(long = "epsilon-db", allow_negative_numbers = true)]
    epsilon_db: Option<f64>,
    /// SER observation driving the conventional baseline: genie|estimated
    #[arg(long = "ser-source")]
    ser_source: Option<String>,
}

impl RunArgs {
    /// defaults -> config file -> flags
    fn resolve(&self) -> Result<ExperimentConfig, HarnessError> {
        let mut cfg = ExperimentConfig::default();
        let mut seed_given = false;
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
                path: path.display().to_string(),
                source,
            })?;
            seed_given |= cfg.apply_file(&text)?.iter().any(|k| k == "seed");
        }
        macro_rules! set {
            ($field:ident, $value:expr) => {
                if let Some(v) = $value {
                    cfg.$field = v;
                }
            };
        }
        set!(m, self.m);
        set!(tau, self.tau);
        set!(num_levels, self.levels);
        set!(gap_db, self.gap_db);
        set!(rho_start_db, self.rho_start_db);
        set!(constellation_order, self.order);
        if let Some(g) = &self.grid {
            cfg.grid = GridSpec::parse(g)?;
        }
        set!(trials, self.trials);
        set!(data_symbols, self.data_symbols);
        set!(dump_rho_db, self.dump_rho_db);
        set!(realizations, self.realizations);
        set!(search_span_db, self.search_span_db);
        set!(search_step_db, self.search_step_db);
        if let Some(c) = &self.combos {
            cfg.combos = parse_combos(c)?;
        }
        set!(target_ser, self.target_ser);
        set!(eta_db, self.eta_db);
        set!(feedback_rate_hz, self.feedback_rate_hz);
        set!(d0_m, self.d0_m);
        set!(velocity_mps, self.velocity_mps);
        set!(distance_m, self.distance_m);
        set!(shadow_sigma_db, self.shadow_sigma_db);
        set!(shadow_corr_m, self.shadow_corr_m);
        set!(epsilon_db, self.epsilon_db);
        if let Some(s) = &self.ser_source {
            cfg.apply_pair("ser_source", s)?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
            seed_given = true;
        }
        if !seed_given {
            cfg.seed = rand::random();
        }
        Ok(cfg)
    }

    fn load_tables(&self) -> Result<Vec<ReferenceTable>, HarnessError> {
        self.table.iter().map(|p| Ok(reftables::load(p)?)).collect()
    }
}

fn write_output(out: &Option<PathBuf>, text: &str) -> Result<(), HarnessError> {
    match out {
        Some(path) => fs::write(path, text).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn require_out(out: &Option<PathBuf>) -> Result<&Path, HarnessError> {
    out.as_deref()
        .ok_or_else(|| HarnessError::Config("this subcommand requires --out".into()))
}

fn run(command: &Command) -> Result<(), HarnessError> {
    match command {
        Command::GenTables(args) => {
            let cfg = args.resolve()?;
            cfg.validate()?;
            let out = require_out(&args.out)?;
            let table = reftables::gen_tables(
                cfg.m,
                cfg.tau,
                cfg.num_levels,
                cfg.gap_db,
                &cfg.grid.points()?,
                cfg.trials,
                cfg.constellation_order,
                cfg.seed,
            )?;
            reftables::save(&table, out)?;
            eprintln!(
                "wrote reference table ({} grid points, seed {}) to {}",
                table.grid_db().len(),
                cfg.seed,
                out.display()
            );
            Ok(())
        }
        Command::SerSweep(args) => {
            let cfg = args.resolve()?;
            let tables = args.load_tables()?;
            let csv = run_ser_sweep(&cfg, tables.first())?;
            write_output(&args.out, &csv)
        }
        Command::PmseSweep(args) => {
            let cfg = args.resolve()?;
            let csv = run_pmse_sweep(&cfg)?;
            write_output(&args.out, &csv)
        }
        Command::ConstelDump(args) => {
            let cfg = args.resolve()?;
            let csv = run_constel_dump(&cfg)?;
            write_output(&args.out, &csv)
        }
        Command::SingleShotEval(args) => {
            let cfg = args.resolve()?;
            let tables = args.load_tables()?;
            let csv = run_single_shot_eval(&cfg, &tables)?;
            write_output(&args.out, &csv)
        }
        Command::DpcRun(args) => {
            let cfg = args.resolve()?;
            if args.table.len() != 1 {
                return Err(HarnessError::Config(
                    "dpc-run requires exactly one --table".into(),
                ));
            }
            let table = reftables::load(&args.table[0])?;
            let csv = run_dpc_scenario(&cfg, &table)?;
            write_output(&args.out, &csv)
        }
    }
}

/// Parses argv and runs the selected experiment. Returns the process exit
/// code: 0 on success, 2 on usage or configuration errors, 1 otherwise.
pub fn main_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own help/usage text
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli.command) {
        Ok(()) => 0,
        Err(e @ HarnessError::Config(_)) => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
