use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qlhl::{Error, SecurityLevel};

mod commands;

/// Randomness extraction, entropy bounds, key combining and hybrid handshake
/// simulation with modified Toeplitz hashing.
#[derive(Parser, Debug)]
#[command(name = "qlhl", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Write a key=value report to this path.
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
    /// Seed for every random choice made by the command.
    #[arg(long, global = true, default_value_t = 0)]
    pub rng_seed: u64,
    /// Print bound term breakdowns on stderr.
    #[arg(long, short, global = true)]
    pub verbose: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Apply a seeded Toeplitz hash to a bit file.
    Extract(ExtractArgs),
    /// Evaluate an output-length bound.
    #[command(subcommand)]
    Bound(BoundCmd),
    /// Seed/input split of two keys for private-seed combining.
    Alpha {
        #[arg(long)]
        len1: u64,
        #[arg(long)]
        len2: u64,
    },
    /// Two weak sources, one seeding extraction from the other.
    #[command(subcommand)]
    Bootstrap(BootstrapCmd),
    /// Combine two keys into one.
    Combine(CombineArgs),
    /// QKD key needed by the handshake key schedule.
    Budget {
        /// Length of each of the nine derived keys.
        #[arg(long)]
        n: Option<u64>,
        #[arg(long)]
        eps: SecurityLevel,
        /// Nine comma-separated lengths: IATS,RATS,SecState',fk_I,fk_R,IAHTS,RAHTS,IHTS,RHTS.
        #[arg(long, value_delimiter = ',')]
        lengths: Option<Vec<u64>>,
    },
    /// Hybrid handshake simulation.
    #[command(subcommand)]
    Handshake(HandshakeCmd),
    /// One-time Toeplitz MAC.
    #[command(subcommand)]
    Mac(MacCmd),
    /// Run the built-in exhaustive checks.
    Selftest,
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    #[arg(long, default_value = "modified-toeplitz")]
    pub family: qlhl::Family,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub seed: PathBuf,
    /// Output length in bits.
    #[arg(long)]
    pub m: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print the hash matrix (inputs up to 64 bits).
    #[arg(long)]
    pub dump_matrix: bool,
}

#[derive(Subcommand, Debug)]
pub enum BoundCmd {
    /// Uniform seed: `H_min - 2 log2(1/eps) + 2`.
    Qlhl {
        #[arg(long)]
        hmin: f64,
        #[arg(long)]
        eps: SecurityLevel,
        #[arg(long, default_value = "0")]
        eps_smooth: SecurityLevel,
    },
    /// Weak seed paid for by a `2^lambda` larger hash epsilon.
    WeakSeed {
        #[arg(long)]
        hmin: f64,
        #[arg(long)]
        seed_len: f64,
        #[arg(long)]
        seed_hmin: f64,
        #[arg(long)]
        eps: SecurityLevel,
        #[arg(long, default_value = "0")]
        eps_smooth: SecurityLevel,
    },
    /// Weak seed counted once: `H_min + H_seed - |seed| - 2 log2(1/eps) + 2`.
    General {
        #[arg(long)]
        hmin: f64,
        #[arg(long)]
        seed_hmin: f64,
        #[arg(long)]
        seed_len: f64,
        #[arg(long)]
        eps: SecurityLevel,
        #[arg(long, default_value = "0")]
        eps_input: SecurityLevel,
        #[arg(long, default_value = "0")]
        eps_seed: SecurityLevel,
    },
    /// Private-seed combining under a threat case.
    Case {
        /// no-reveal, controlled, revealed-key, reveal-output or reveal-both.
        #[arg(long)]
        case: qlhl::bounds::ThreatCase,
        #[arg(long)]
        len1: u64,
        #[arg(long)]
        len2: u64,
        #[arg(long)]
        eps: SecurityLevel,
        #[arg(long, default_value = "0")]
        eps1: SecurityLevel,
        #[arg(long, default_value = "0")]
        eps2: SecurityLevel,
        #[arg(long, default_value_t = 0.0)]
        lambda1: f64,
        #[arg(long, default_value_t = 0.0)]
        lambda2: f64,
    },
    /// Public-seed combining; `--reveal` applies the per-key minimum.
    Public {
        #[arg(long)]
        len1: f64,
        #[arg(long)]
        len2: f64,
        #[arg(long)]
        eps: SecurityLevel,
        #[arg(long)]
        reveal: bool,
        #[arg(long, default_value = "0")]
        eps1: SecurityLevel,
        #[arg(long, default_value = "0")]
        eps2: SecurityLevel,
        #[arg(long, default_value = "0")]
        eps_seed: SecurityLevel,
    },
}

#[derive(Subcommand, Debug)]
pub enum BootstrapCmd {
    /// Check feasibility and fix seed role and truncation.
    Plan {
        #[arg(long)]
        x1: PathBuf,
        #[arg(long)]
        x2: PathBuf,
        #[arg(long)]
        out_len: u64,
        #[arg(long)]
        eps: SecurityLevel,
        /// Which source seeds the extraction: auto, x1 or x2.
        #[arg(long, default_value = "auto")]
        seed_choice: qlhl::bootstrap::SeedChoice,
        /// Assert that the two sources are independent.
        #[arg(long)]
        independent: bool,
        /// Where to write the plan; also printed to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Execute a plan on sampled bits.
    Run {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        x1_bits: PathBuf,
        #[arg(long)]
        x2_bits: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample a simulated flat weak source.
    Sample {
        #[arg(long)]
        length: usize,
        /// Min-entropy (support size 2^k).
        #[arg(long)]
        k: usize,
        #[arg(long)]
        label: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        spec_out: PathBuf,
    },
}

#[derive(Args, Debug)]
pub struct CombineArgs {
    #[arg(long, value_parser = ["private", "public"])]
    pub mode: String,
    #[arg(long)]
    pub key1: PathBuf,
    #[arg(long)]
    pub spec1: PathBuf,
    #[arg(long)]
    pub key2: PathBuf,
    #[arg(long)]
    pub spec2: PathBuf,
    /// Public seed (public mode only).
    #[arg(long)]
    pub seed: Option<PathBuf>,
    #[arg(long, default_value = "0")]
    pub eps_seed: SecurityLevel,
    /// The public seed existed before the keys (rejected).
    #[arg(long)]
    pub seed_predates_keys: bool,
    /// no-reveal, controlled, revealed-key, reveal-output or reveal-both.
    #[arg(long)]
    pub threat: qlhl::bounds::ThreatCase,
    /// Key exposed under revealed-key and reveal-both.
    #[arg(long, value_parser = ["key1", "key2"], default_value = "key2")]
    pub revealed: String,
    #[arg(long)]
    pub eps: SecurityLevel,
    #[arg(long, default_value_t = 0.0)]
    pub lambda1: f64,
    #[arg(long, default_value_t = 0.0)]
    pub lambda2: f64,
    /// Output length; defaults to the bound.
    #[arg(long)]
    pub out_len: Option<u64>,
    /// Bytes appended to the public-mode input.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
    /// Keep an even total length instead of dropping a bit (private mode).
    #[arg(long)]
    pub no_auto_truncate: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum HandshakeCmd {
    /// Run both parties over an in-memory channel and report the outcome.
    Simulate {
        #[arg(long, default_value_t = 256)]
        n: u64,
        #[arg(long, default_value = "2^-64")]
        eps: SecurityLevel,
        #[arg(long, default_value = "2^-64")]
        eps_qkd: SecurityLevel,
        #[arg(long, default_value_t = 32)]
        tag_len: usize,
        /// `mN:bitK` flips wire bit K of message N; `mN:drop` drops it.
        #[arg(long)]
        tamper: Option<qlhl::handshake::Tamper>,
        /// Write the delivered records as hex lines.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
pub enum MacCmd {
    /// Random key sized for a message and tag length.
    Keygen {
        #[arg(long)]
        msg_len: usize,
        #[arg(long)]
        tag_len: usize,
        #[arg(long)]
        out: PathBuf,
    },
    Auth {
        #[arg(long)]
        key: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        tag_len: usize,
        #[arg(long)]
        out: PathBuf,
    },
    Verify {
        #[arg(long)]
        key: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        tag: PathBuf,
    },
}

/// Exit status: success, infeasible request, or any other failure.
pub enum Status {
    Ok,
    Infeasible,
    Failed,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::dispatch(&cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Infeasible) => ExitCode::from(2),
        Ok(Status::Failed) => ExitCode::from(1),
        Err(e @ (Error::Infeasible { .. } | Error::BudgetExceeded { .. })) => {
            eprintln!("infeasible: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
