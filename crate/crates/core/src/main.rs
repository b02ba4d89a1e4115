//! `qcircuit` command-line interface.
//!
//! Exit codes: 0 success, 1 verification failure, 2 input error (parse,
//! schema, topology, I/O, usage), 3 nonhomogeneous constraint, 4 numerical
//! non-convergence.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use qcircuit::report::{
    cmd_bath, cmd_couplings, cmd_reduce, cmd_spectrum, cmd_topology, cmd_verify, load_netlist, render_checks,
    write_artifacts, Artifact, BathConfig, Format, RunConfig, SpectralConfig, Suite,
};
use qcircuit::Result;

#[derive(Parser, Debug)]
#[command(
    name = "qcircuit",
    version,
    about = "Netlist-to-Hamiltonian engine for nonreciprocal superconducting circuits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Lower end of the Ω-grid (default: 1e-3 × smallest cutoff, or the config's evaluation grid).
    #[arg(long, global = true)]
    omega_min: Option<f64>,
    /// Upper end of the Ω-grid (default: 1e3 × largest cutoff, or the config's evaluation grid).
    #[arg(long, global = true)]
    omega_max: Option<f64>,
    /// Number of Ω-grid points (default: 4096, or the config's evaluation grid).
    #[arg(long, global = true)]
    omega_points: Option<usize>,
    /// Tolerance for numerical decisions such as the Darboux correction.
    #[arg(long, global = true, default_value_t = 1e-8)]
    tol: f64,
    /// Seed for randomized checks; recorded in every report.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for spectral sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Format of tabular output.
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SuiteArg {
    All,
    Structural,
    Eom,
    SumRules,
    Duality,
    Bath,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Reduce a netlist to a canonical Hamiltonian.
    Reduce {
        netlist: PathBuf,
        /// Output directory; the report goes to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify compact and extended directions of a netlist.
    Topology {
        netlist: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep the transmission-line boundary spectrum and check the sum rules.
    Spectrum {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Compute junction–line coupling strengths and the coupling report.
    Couplings {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Discretize a dissipative immittance into an oscillator bath.
    Bath {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run a verification suite and print a pass/fail summary.
    Verify {
        #[arg(value_enum)]
        suite: SuiteArg,
        /// Directory of netlist fixtures.
        #[arg(long, default_value = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures"))]
        fixtures: PathBuf,
    },
}

fn emit(out: Option<&Path>, artifacts: &[Artifact]) -> Result<()> {
    match out {
        Some(dir) => {
            for p in write_artifacts(dir, artifacts)? {
                eprintln!("wrote {}", p.display());
            }
        }
        None => {
            for a in artifacts {
                print!("{}", a.contents);
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    let run = RunConfig {
        omega_min: cli.omega_min,
        omega_max: cli.omega_max,
        omega_points: cli.omega_points,
        tol: cli.tol,
        seed: cli.seed,
        threads: cli.threads.max(1),
        format: match cli.format {
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
        },
    };
    run.validate()?;
    match cli.command {
        Command::Reduce { netlist, out } => emit(out.as_deref(), &cmd_reduce(&load_netlist(&netlist)?, &run)?)?,
        Command::Topology { netlist, out } => emit(out.as_deref(), &cmd_topology(&load_netlist(&netlist)?, &run)?)?,
        Command::Spectrum { config, out } => emit(Some(&out), &cmd_spectrum(&SpectralConfig::load(&config)?, &run)?)?,
        Command::Couplings { config, out } => emit(Some(&out), &cmd_couplings(&SpectralConfig::load(&config)?, &run)?)?,
        Command::Bath { config, out } => emit(Some(&out), &cmd_bath(&BathConfig::load(&config)?, &run)?)?,
        Command::Verify { suite, fixtures } => {
            let suite = match suite {
                SuiteArg::All => Suite::All,
                SuiteArg::Structural => Suite::Structural,
                SuiteArg::Eom => Suite::Eom,
                SuiteArg::SumRules => Suite::SumRules,
                SuiteArg::Duality => Suite::Duality,
                SuiteArg::Bath => Suite::Bath,
            };
            let checks = cmd_verify(suite, &fixtures, &run)?;
            print!("{}", render_checks(&checks, &run));
            let failed = checks.iter().filter(|c| !c.pass).count();
            eprintln!("{} checks, {} failed", checks.len(), failed);
            return Ok(failed == 0);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
