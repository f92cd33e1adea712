//! Command-line front end: run experiments from config files, execute the
//! analytical verification suite, and recompute summaries from raw logs.
//!
//! Exit codes: 0 on success, 2 when a config fails validation, 1 on any
//! runtime failure (including a failed verification).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mbec::harness::{render_summary, run_experiment, summarize_dir};
use mbec::oracles::verify_all;
use mbec::util::par::ExecMode;

#[derive(Parser)]
#[command(name = "mbec", version, about = "Episodic-control experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of an experiment described by a TOML config file
    Run {
        config: PathBuf,
        /// Artifact root; defaults to $MBEC_OUT_ROOT, then the config's directory
        #[arg(long)]
        out_root: Option<PathBuf>,
        /// Run seeds one at a time instead of across threads
        #[arg(long)]
        sequential: bool,
    },
    /// Run the analytical oracles and write per-oracle artifacts
    Verify {
        /// Artifact directory; defaults to "verify" under $MBEC_OUT_ROOT or "."
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed for every oracle's random draws
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        sequential: bool,
    },
    /// Recompute a finished run's summary from its raw CSV logs
    Summarize { dir: PathBuf },
}

fn out_root_from_env() -> Option<PathBuf> {
    std::env::var_os("MBEC_OUT_ROOT").map(PathBuf::from)
}

fn exec_mode(sequential: bool) -> ExecMode {
    if sequential {
        ExecMode::Sequential
    } else {
        ExecMode::default()
    }
}

fn run(config: PathBuf, out_root: Option<PathBuf>, sequential: bool) -> u8 {
    let root = out_root.or_else(out_root_from_env);
    match run_experiment(&config, exec_mode(sequential), root.as_deref()) {
        Ok(dir) => {
            println!("run complete: {}", dir.display());
            match summarize_dir(&dir) {
                Ok(report) => print!("{}", render_summary(&report.recomputed)),
                Err(e) => eprintln!("warning: could not summarize fresh run: {e}"),
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code() as u8
        }
    }
}

fn verify(out: Option<PathBuf>, seed: u64, sequential: bool) -> u8 {
    let dir = out.unwrap_or_else(|| {
        out_root_from_env()
            .unwrap_or_else(|| PathBuf::from("."))
            .join("verify")
    });
    match verify_all(&dir, seed, exec_mode(sequential)) {
        Ok(report) => {
            for o in &report.outcomes {
                let tag = if o.passed { "PASS" } else { "FAIL" };
                println!("{tag} {:<22} {}", o.name, o.details);
            }
            println!("report: {}", dir.join("verify.json").display());
            if report.all_passed { 0 } else { 1 }
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn summarize(dir: PathBuf) -> u8 {
    match summarize_dir(&dir) {
        Ok(report) => {
            print!("{}", render_summary(&report.recomputed));
            match report.emitted_deviation {
                Some(dev) => println!("emitted summary deviation: {dev:.2e}"),
                None => println!("no emitted summary.json to compare against"),
            }
            if !report.complete {
                println!("note: manifest marks this run incomplete");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code() as u8
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run {
            config,
            out_root,
            sequential,
        } => run(config, out_root, sequential),
        Command::Verify {
            out,
            seed,
            sequential,
        } => verify(out, seed, sequential),
        Command::Summarize { dir } => summarize(dir),
    };
    ExitCode::from(code)
}
