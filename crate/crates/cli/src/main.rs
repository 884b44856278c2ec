use clap::{Args, Parser, Subcommand};
use pamlab_cli::config::Experiment;
use pamlab_cli::{output_root, prepare, run, run_dir, Overrides};
use std::path::PathBuf;
use std::process::ExitCode;

/// Parabolic Anderson model experiments.
#[derive(Parser)]
#[command(name = "pamlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Top eigenpairs of the Anderson Hamiltonian on one box.
    Spectrum(Common),
    /// Survival function of the principal eigenvalue and its tail slope.
    Tails(Common),
    /// Mean principal eigenvalue against box size.
    Growth(Common),
    /// Spectral, Crank-Nicolson and Krylov solutions side by side.
    EvolveCompare(Common),
    /// Feynman-Kac estimates against the deterministic solution.
    FkCompare(Common),
    /// Macroscopic dimension of a fixture or of PAM peak sets.
    FractalDim(Common),
    /// Variational constant and predicted dimensions.
    Constants(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run config; unset keys take the experiment defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output root; overrides PAMLAB_OUT_ROOT.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Print the resolved config and exit.
    #[arg(long)]
    dry_run: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (exp, c) = match cli.command {
        Command::Spectrum(c) => (Experiment::Spectrum, c),
        Command::Tails(c) => (Experiment::Tails, c),
        Command::Growth(c) => (Experiment::Growth, c),
        Command::EvolveCompare(c) => (Experiment::EvolveCompare, c),
        Command::FkCompare(c) => (Experiment::FkCompare, c),
        Command::FractalDim(c) => (Experiment::FractalDim, c),
        Command::Constants(c) => (Experiment::Constants, c),
    };
    let ov = Overrides {
        config: c.config,
        seed: c.seed,
        out: c.out,
        threads: c.threads,
    };
    let cfg = match prepare(exp, &ov) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if c.dry_run {
        print!("{}", cfg.to_toml());
        return ExitCode::SUCCESS;
    }
    let dir = run_dir(&output_root(&cfg, &ov), &cfg);
    match run(&cfg, dir, ov.threads) {
        Ok(rec) => {
            for ch in &rec.checks {
                let verdict = if ch.pass { "pass" } else { "FAIL" };
                println!("{verdict:4}  {}  value {:.6e}  limit {:.6e}", ch.name, ch.value, ch.limit);
            }
            if let Some(e) = &rec.error {
                eprintln!("error: {e}");
            }
            println!("{} -> {} ({:.1} s)", rec.experiment, rec.run_dir.display(), rec.wall_time_s);
            ExitCode::from(rec.status.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
