use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ris_chanest::harness::{run_sweep, run_trial_detail, ExperimentSpec, MethodSpec, RunOptions, SweepResult};
use ris_chanest::training::validate_config;

const SPEC_ERROR: u8 = 1;
const RUN_FAILURE: u8 = 2;

/// Monte-Carlo channel-estimation experiments for RIS-aided MIMO links.
#[derive(Debug, Parser)]
#[command(name = "ris-chanest", version)]
struct Cli {
    /// More log output (-v warnings, -vv info, -vvv debug). RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment and write the CSV.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Output CSV path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run one trial and print the true and estimated parameters.
    Single {
        #[command(flatten)]
        common: Common,
        /// Trial index.
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Print the identifiability report of every method and configuration.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment spec (TOML). Desk-scale defaults when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Master seed, overriding the spec.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated methods, e.g. `ls,trice-bes,trice-cs:c2,joint-cs`.
    #[arg(long, value_delimiter = ',')]
    method: Option<Vec<String>>,
    /// Comma-separated SNRs in dB (`inf` for noiseless).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr: Option<Vec<f64>>,
}

fn default_methods() -> Vec<MethodSpec> {
    ["ls", "trice-bes", "trice-cs", "trice-cs:c2", "joint-cs"]
        .iter()
        .map(|m| m.parse().expect("built-in method names parse"))
        .collect()
}

fn load_spec(c: &Common) -> Result<ExperimentSpec, String> {
    let mut spec = match &c.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            ExperimentSpec::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => ExperimentSpec::new(default_methods()),
    };
    if let Some(seed) = c.seed {
        spec.master_seed = seed;
    }
    if let Some(list) = &c.method {
        spec.methods = list
            .iter()
            .map(|m| m.parse::<MethodSpec>())
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
    }
    if let Some(snr) = &c.snr {
        spec.snr_db = snr.clone();
    }
    spec.validate().map_err(|e| e.to_string())?;
    Ok(spec)
}

fn summary_table(res: &SweepResult) -> String {
    let mut out = format!(
        "{:<22} {:>7} {:>4} {:>6} {:>11} {:>11} {:>8}\n",
        "method", "snr_db", "k_t", "k_s", "median", "mean", "failed"
    );
    for s in &res.summaries {
        let _ = writeln!(
            out,
            "{:<22} {:>7} {:>4} {:>6} {:>11.4e} {:>11.4e} {:>8}",
            s.method,
            s.point.snr_db,
            s.point.cfg.k_t,
            format!("{}x{}", s.point.cfg.k_s_v, s.point.cfg.k_s_h),
            s.median_nmse,
            s.mean_nmse,
            format!("{}/{}", s.failures, s.trials)
        );
    }
    out
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), String> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| format!("{}: {e}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn sweep(common: &Common, out: Option<&Path>, threads: Option<usize>) -> Result<u8, (u8, String)> {
    let spec = load_spec(common).map_err(|e| (SPEC_ERROR, e))?;
    let res = run_sweep(&spec, &RunOptions { threads }).map_err(|e| (RUN_FAILURE, e.to_string()))?;
    write_output(out, &res.to_csv()).map_err(|e| (RUN_FAILURE, e))?;
    eprint!("{}", summary_table(&res));
    if res.any_cell_failed() {
        eprintln!("error: every trial failed in at least one cell");
        return Ok(RUN_FAILURE);
    }
    Ok(0)
}

fn fmt_path(p: &[f64; 4]) -> String {
    format!("psi_t {:.5}  psi_r {:.5}  mu_v {:.5}  mu_h {:.5}", p[0], p[1], p[2], p[3])
}

fn single(common: &Common, trial: usize) -> Result<u8, (u8, String)> {
    let spec = load_spec(common).map_err(|e| (SPEC_ERROR, e))?;
    let mut all_failed = false;
    for point in spec.points() {
        let d = run_trial_detail(&spec, &point, trial).map_err(|e| (RUN_FAILURE, e.to_string()))?;
        println!("trial {trial}  seed {}  snr {} dB", d.seed, point.snr_db);
        println!("config {:?}", point.cfg);
        println!("true paths (psi_t, psi_r, effective RIS mu_v, mu_h, gain):");
        for (n, (p, alpha)) in d.truth.iter().zip(&d.gains).enumerate() {
            println!("  [{n}] {}  alpha {alpha:.4}", fmt_path(p));
        }
        let mut failures = 0;
        for ((label, outcome), row) in d.outcomes.iter().zip(&d.rows) {
            match outcome {
                Ok(rep) => {
                    println!(
                        "{label}: nmse {:.4e}  psi_rmse {:.3e}  mu_rmse {:.3e}  ({:.2?})",
                        row.nmse, row.psi_rmse, row.mu_rmse, rep.elapsed
                    );
                    for (n, p) in rep.paths.iter().enumerate() {
                        println!("  [{n}] {}  alpha {:.4}", fmt_path(&p.freqs()), p.alpha);
                    }
                }
                Err(e) => {
                    failures += 1;
                    println!("{label}: failed: {e}");
                }
            }
        }
        all_failed |= failures == d.outcomes.len();
        println!();
    }
    Ok(if all_failed { RUN_FAILURE } else { 0 })
}

fn validate(common: &Common) -> Result<u8, (u8, String)> {
    let spec = load_spec(common).map_err(|e| (SPEC_ERROR, e))?;
    let mut configs: Vec<_> = spec.points().iter().map(|p| p.cfg).collect();
    configs.dedup();
    let mut ok = true;
    for cfg in configs {
        println!("config {cfg:?}");
        for m in &spec.methods {
            let report = validate_config(&cfg, &m.method());
            ok &= report.is_valid();
            // the report header names the method kind only; use the spec label
            let body = report.to_string();
            println!("{}:", m.label());
            print!("{}", body.split_once('\n').map_or("", |(_, rest)| rest));
        }
    }
    Ok(if ok { 0 } else { RUN_FAILURE })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { SPEC_ERROR } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = ["error", "warn", "info", "debug"][usize::from(cli.verbose.min(3))];
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match &cli.command {
        Command::Sweep { common, out, threads } => sweep(common, out.as_deref(), *threads),
        Command::Single { common, trial } => single(common, *trial),
        Command::Validate { common } => validate(common),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
