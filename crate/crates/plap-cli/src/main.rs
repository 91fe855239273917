//! `plap` — p-Laplace experiment runner.
//!
//! Exit codes: 0 ok, 2 configuration error, 3 solver failure, 4 verification
//! mismatch.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use plap_core::record::Action;
use plap_core::{parse_config, Error, Mode};

#[derive(Parser)]
#[command(name = "plap", version, about = "Relaxed Kacanov solver for the p-Laplacian")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file
    Run {
        /// path to the key=value config file
        config: PathBuf,
        /// output directory (overrides the config's output_dir)
        #[arg(long)]
        out: Option<PathBuf>,
        /// worker threads; the solver is deterministic and currently ignores
        /// values above 1
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run the invariant checks relevant to a config and report pass/fail
    Verify {
        /// path to the key=value config file
        config: PathBuf,
    },
}

fn exit_code_for(err: &Error) -> ExitCode {
    match err {
        Error::Config(_) | Error::Domain(_) => ExitCode::from(2),
        _ => ExitCode::from(3),
    }
}

fn run(config: PathBuf, out: Option<PathBuf>, threads: Option<usize>) -> ExitCode {
    if let Some(t) = threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
    }
    let cfg = match parse_config(&config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let out_dir = out.unwrap_or_else(|| cfg.output_dir.clone());
    match plap_core::driver::run_experiment(&cfg, &out_dir) {
        Ok(outcome) => {
            let last = outcome.history.records.last();
            println!(
                "{}: {} iterations, converged = {}, gap = {}",
                cfg.mode.label(),
                outcome.history.records.len(),
                outcome.history.converged,
                last.map_or(f64::NAN, |r| r.gap),
            );
            println!("wrote {}", out_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn verify(config: PathBuf) -> ExitCode {
    let cfg = match parse_config(&config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let scratch = std::env::temp_dir().join(format!("plap-verify-{}", std::process::id()));
    let outcome = match plap_core::driver::run_experiment(&cfg, &scratch) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            std::fs::remove_dir_all(&scratch).ok();
            return exit_code_for(&e);
        }
    };
    std::fs::remove_dir_all(&scratch).ok();
    let mut ok = true;
    let mut check = |name: &str, pass: bool| {
        println!("{} {name}", if pass { "PASS" } else { "FAIL" });
        ok &= pass;
    };
    let records = &outcome.history.records;
    check("history is nonempty", !records.is_empty());
    check(
        "iterations strictly increase",
        records.windows(2).all(|w| w[1].iteration > w[0].iteration),
    );
    let mut acc = 0;
    check(
        "accumulated ndofs are a running sum",
        records.iter().all(|r| {
            acc += r.ndof;
            r.ndof_accumulated == acc
        }),
    );
    check(
        "indicators are nonnegative",
        records.iter().all(|r| {
            let scale = r.gap.abs().max(1.0) * 1e-12;
            r.eta_eps_plus_sq >= -scale
                && r.eta_eps_minus_sq >= -scale
                && r.eta_h_sq >= -scale
                && r.gap >= -scale
        }),
    );
    match cfg.mode {
        Mode::FixedInterval => {
            check(
                "gap history is monotone",
                records.windows(2).all(|w| w[1].gap <= w[0].gap + 1e-13),
            );
            if outcome.history.converged {
                check(
                    "final gap within tolerance",
                    records.last().is_some_and(|r| r.gap <= cfg.gap_tolerance),
                );
            }
        }
        Mode::Schedule => {
            let sched = cfg.schedule_config().expect("validated");
            check(
                "relaxation interval follows the schedule",
                records.iter().enumerate().all(|(n, r)| {
                    let e = sched.eps_at(n);
                    (r.eps_minus - e.eps_minus()).abs() <= 1e-12 * e.eps_minus()
                        && (r.eps_plus - e.eps_plus()).abs() <= 1e-12 * e.eps_plus()
                }),
            );
        }
        Mode::Adaptive => {
            check(
                "interval evolution is monotone",
                records.windows(2).all(|w| {
                    w[1].eps_minus <= w[0].eps_minus && w[1].eps_plus >= w[0].eps_plus
                }),
            );
            check(
                "actions replay the largest indicator",
                records.iter().all(|r| {
                    let mut cand = vec![
                        (r.eta_eps_plus_sq, Action::EpsPlus),
                        (r.eta_eps_minus_sq, Action::EpsMinus),
                    ];
                    if cfg.refine_mesh {
                        cand.push((r.eta_h_sq, Action::Refine));
                    }
                    cand.push((r.gap, Action::Kacanov));
                    let mut best = cand[0];
                    for &c in &cand[1..] {
                        if c.0 > best.0 {
                            best = c;
                        }
                    }
                    best.1 == r.action
                }),
            );
        }
        Mode::SteepestCompare => {
            let energies = outcome.descent_energies.as_deref().unwrap_or(&[]);
            check(
                "descent energy history is monotone",
                energies.windows(2).all(|w| w[1] <= w[0] + 1e-13),
            );
        }
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(4)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, threads } => run(config, out, threads),
        Command::Verify { config } => verify(config),
    }
}
