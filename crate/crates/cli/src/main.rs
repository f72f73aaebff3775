//! `ftl`: weights, certificates, balls, kernels and PSH constructions on model domains.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod report;
mod spec;

use report::Format;

pub const DEFAULT_SEED: u64 = 7;

#[derive(Parser, Debug)]
#[command(name = "ftl", version, about = "Finite-type weight and kernel experiments on model domains")]
struct Cli {
    /// RNG seed; falls back to FTL_SEED, then 7.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "json")]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

/// Domain and base point shared by most subcommands.
#[derive(Args, Debug, Clone)]
pub struct Target {
    /// Catalog name (siegel, decoupled, herbort, mixed, diagonal) or a JSON domain file.
    #[arg(long)]
    pub domain: String,
    /// Comma-separated complex coordinates in input order; the normal real part is recomputed.
    #[arg(long)]
    pub point: Option<String>,
    /// List length M (default: the domain's).
    #[arg(long)]
    pub m: Option<usize>,
    /// canonical or levi.
    #[arg(long, default_value = "canonical")]
    pub frame: String,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Weights F(L, p, δ) along directions over a δ grid.
    Weights {
        #[command(flatten)]
        target: Target,
        /// `v` or `min:max:count`.
        #[arg(long, default_value = "1e-6:1e-2:9")]
        delta: String,
        /// Direction such as `e2+e3`; repeatable. Default: every tangent variable.
        #[arg(long = "dir")]
        dirs: Vec<String>,
        /// Add EB₁, EB₂ and B_α estimates to each row.
        #[arg(long)]
        certify: bool,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        /// Write the per-direction slope summary as JSON here.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Extremality estimates; exit 2 when one exceeds --max-k.
    EbCheck {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value = "1e-6:1e-2:5")]
        delta: String,
        /// eb1, eb2, balpha or all.
        #[arg(long, default_value = "all")]
        kind: String,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        #[arg(long)]
        max_k: Option<f64>,
    },
    /// B_α constant; exit 2 when it exceeds --max-alpha.
    Balpha {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value = "1e-6:1e-2:5")]
        delta: String,
        #[arg(long)]
        max_alpha: Option<f64>,
    },
    /// Adapted coordinates and their derivative constant K′.
    Coords {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value = "1e-4")]
        delta: String,
        #[arg(long)]
        max_k_prime: Option<f64>,
    },
    /// Polydisc or exp ball: equivalence constants and volume.
    Ball {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value_t = 1e-4)]
        delta: f64,
        #[arg(long, default_value_t = 0.5)]
        c: f64,
        /// polydisc or exp.
        #[arg(long, default_value = "polydisc")]
        kind: String,
        #[arg(long, default_value_t = 400)]
        samples: usize,
        #[arg(long, default_value_t = 20000)]
        mc: usize,
    },
    /// Pseudo-distance γ(p, q).
    Gamma {
        #[command(flatten)]
        target: Target,
        /// Second boundary point, same format as --point.
        #[arg(long)]
        q: String,
        #[arg(long, default_value_t = 0.5)]
        c: f64,
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
    },
    /// Doubling and engulfing constants of the ball family.
    Doubling {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value = "1e-4:1e-2:3")]
        delta: String,
        #[arg(long, default_value_t = 0.5)]
        c: f64,
        #[arg(long, default_value_t = 20000)]
        mc: usize,
        /// Also measure the engulfing constant with this many centers.
        #[arg(long)]
        engulfing: Option<usize>,
        #[arg(long)]
        max_ratio: Option<f64>,
    },
    /// Bergman kernel on the inner normal: estimate, oracle and star volumes.
    Bergman {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value = "1e-6:1e-3:7")]
        delta: String,
        /// Per-δ rows with slopes (default).
        #[arg(long)]
        sweep: bool,
        /// Decide between the two readings of the log-corrected volume law.
        #[arg(long, conflicts_with = "sweep")]
        reading: bool,
        #[arg(long, default_value_t = 0.5)]
        c: f64,
        #[arg(long, default_value_t = 4000)]
        star_samples: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Star-ball volume, or the volume of an isotropic weight.
    StarVolume {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value_t = 1e-4)]
        delta: f64,
        #[arg(long, default_value_t = 0.5)]
        c: f64,
        #[arg(long, default_value_t = 20000)]
        samples: usize,
        /// Constant weight F₀ in every direction instead of the domain's weight.
        #[arg(long)]
        isotropic: Option<f64>,
    },
    /// Two-direction obstruction statistic and separation verdict.
    HerbortCert {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value = "1e-200:1e-2:40")]
        delta: String,
        /// Candidate extremality constant K.
        #[arg(long, default_value_t = 100.0)]
        k: f64,
        /// Exit 2 unless the verdict is "no obstruction found".
        #[arg(long)]
        assert_separable: bool,
    },
    /// Assemble the PSH function and print its schedule and constants.
    PshBuild {
        #[command(flatten)]
        target: Target,
        #[command(flatten)]
        psh: PshArgs,
    },
    /// Assemble and measure β on a strip grid; exit 2 above --beta-max.
    PshVerify {
        #[command(flatten)]
        target: Target,
        #[command(flatten)]
        psh: PshArgs,
        #[arg(long, default_value_t = 200)]
        points: usize,
        #[arg(long, default_value_t = 16)]
        directions: usize,
        #[arg(long)]
        beta_max: Option<f64>,
    },
    /// Bumped domain: localized weight comparison and EB₁ re-certification.
    Localize {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value_t = 0.2)]
        d: f64,
        /// The bump is centered at −origin·e_n.
        #[arg(long, default_value_t = 0.0)]
        origin: f64,
        #[arg(long, default_value = "1e-4:1e-2:3")]
        delta: String,
        /// Radii |z − O|/μ of the test points, comma-separated.
        #[arg(long, default_value = "0.5,0.9,1.1,1.3,1.6,1.8")]
        factors: String,
        #[arg(long, default_value_t = 4)]
        combos: usize,
        /// Re-certify EB₁ on this many lifted frames at the smallest δ.
        #[arg(long)]
        eb1: Option<usize>,
        #[arg(long, default_value_t = 200)]
        levi_samples: usize,
        #[arg(long)]
        max_ratio: Option<f64>,
    },
    /// Laplacian domination search over random nonnegative polynomials; exit 2 on a violation.
    Appendix {
        #[arg(long, default_value_t = 200)]
        count: usize,
        #[arg(long, default_value_t = 4)]
        max_order: usize,
        /// Also print the worked examples.
        #[arg(long)]
        examples: bool,
    },
}

#[derive(Args, Debug, Clone)]
pub struct PshArgs {
    #[arg(long, default_value_t = 1e-2)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.5)]
    pub c: f64,
    #[arg(long, default_value_t = 8.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 5.0)]
    pub a: f64,
    #[arg(long, default_value_t = 3)]
    pub lattice: usize,
    #[arg(long, default_value_t = 1024)]
    pub cover_cap: usize,
}

fn resolve_seed(flag: Option<u64>) -> anyhow::Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("FTL_SEED") {
        Ok(v) => v.trim().parse().map_err(|_| anyhow::anyhow!("FTL_SEED is not an integer: {v:?}")),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let seed = match resolve_seed(cli.seed) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    if let Some(j) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let name = commands::name(&cli.command);
    let outcome = match commands::run(&cli.command, seed) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    if let Err(e) = report::write(&outcome, name, seed, cli.format, cli.out.as_deref()) {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    if outcome.certified {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}
