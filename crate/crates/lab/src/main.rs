use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dlangevin::config::KdeRule;
use dlangevin::error::{EXIT_CONFIG, EXIT_IO};
use dlangevin::{run, Command, LabError, RunConfig};

/// Density-dependent Langevin dynamics: invariant measures, Fokker-Planck,
/// minimizing movements and interacting particles.
///
/// Exit codes: 0 ok, 1 io, 2 config or hypothesis, 3 numerical failure, 4 tolerance.
/// Threads follow RAYON_NUM_THREADS; results do not depend on it.
#[derive(Parser)]
#[command(name = "dlangevin", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Probe the potential for the growth, Laplacian and radial conditions.
    Audit(Common),
    /// Solve for C* and write ρ_∞.
    Invariant(Common),
    /// Finite-volume Fokker-Planck run.
    Fpe(Common),
    /// Minimizing-movement (JKO) run.
    Jko(Common),
    /// Interacting-particle run.
    Particles {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        opts: ParticleOpts,
    },
    /// Run several methods and check them against the first.
    Compare(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output_dir`; default `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Reject runs outside the hypotheses of the theory before computing.
    #[arg(long)]
    theorem_mode: bool,
}

/// Overrides for the `[particles]` section.
#[derive(Args, Default)]
struct ParticleOpts {
    /// Number of particles.
    #[arg(long)]
    n: Option<usize>,
    /// Fixed time step.
    #[arg(long)]
    dt: Option<f64>,
    /// Final time.
    #[arg(long)]
    t_end: Option<f64>,
    /// Bandwidth rule: silverman or fixed.
    #[arg(long, value_parser = parse_kde)]
    kde: Option<KdeRule>,
    /// Bandwidth for `--kde fixed`.
    #[arg(long)]
    bandwidth: Option<f64>,
}

fn parse_kde(s: &str) -> Result<KdeRule, String> {
    match s {
        "silverman" => Ok(KdeRule::Silverman),
        "fixed" => Ok(KdeRule::Fixed),
        _ => Err(format!("unknown bandwidth rule `{s}` (silverman | fixed)")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, common, opts) = match cli.cmd {
        Cmd::Audit(c) => (Command::Audit, c, ParticleOpts::default()),
        Cmd::Invariant(c) => (Command::Invariant, c, ParticleOpts::default()),
        Cmd::Fpe(c) => (Command::Fpe, c, ParticleOpts::default()),
        Cmd::Jko(c) => (Command::Jko, c, ParticleOpts::default()),
        Cmd::Particles { common, opts } => (Command::Particles, common, opts),
        Cmd::Compare(c) => (Command::Compare, c, ParticleOpts::default()),
    };
    let text = match std::fs::read_to_string(&common.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", common.config.display());
            return ExitCode::from(EXIT_IO);
        }
    };
    let mut cfg = match RunConfig::from_toml(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.theorem_mode |= common.theorem_mode;
    let p = &mut cfg.particles;
    p.n = opts.n.unwrap_or(p.n);
    p.dt = opts.dt.unwrap_or(p.dt);
    p.t_end = opts.t_end.unwrap_or(p.t_end);
    p.kde = opts.kde.unwrap_or(p.kde);
    p.bandwidth = opts.bandwidth.or(p.bandwidth);
    if let Some(o) = common.out {
        cfg.output_dir = Some(o);
    }
    let out = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    match run(cmd, &cfg, &out) {
        Ok(files) => {
            for f in files {
                println!("{}", out.join(f).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => report(e),
    }
}

fn report(e: LabError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code())
}
