use std::net::{IpAddr, Ipv4Addr};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;

#[derive(Parser, Debug)]
#[command(
    name = "muats",
    version,
    about = "Multi-user adaptive test service over SMS"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
pub struct StateArgs {
    /// Question bank file.
    #[arg(long, env = "MUATS_BANK")]
    pub bank: PathBuf,
    /// Directory holding the persisted tables.
    #[arg(long, env = "MUATS_STATE")]
    pub state: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the SMS gateway and session engine until Ctrl-C.
    Serve {
        #[command(flatten)]
        store: StateArgs,
        #[arg(long, env = "MUATS_HOST", default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
        host: IpAddr,
        #[arg(long, env = "MUATS_PORT", default_value_t = muats_core::gateway::DEFAULT_PORT)]
        port: u16,
        /// Outbound messages per second.
        #[arg(long, env = "MUATS_DRAIN_RATE", default_value_t = muats_core::gateway::DEFAULT_DRAIN_RATE)]
        drain_rate: f64,
        /// Fuzzy system TOML; the built-in system when omitted.
        #[arg(long)]
        fuzzy: Option<PathBuf>,
        /// Seed for question selection; OS entropy when omitted.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 600)]
        idle_timeout: u64,
        #[arg(long, default_value_t = 100)]
        tick_ms: u64,
    },
    /// Validate a question bank and print question counts per topic and level.
    LoadBank { file: PathBuf },
    /// Print per-level statistics, optionally for one phone and/or player.
    Stats {
        #[command(flatten)]
        store: StateArgs,
        #[arg(long)]
        phone: Option<String>,
        #[arg(long)]
        player: Option<String>,
    },
    /// Replay a transcript against a fresh engine on a simulated clock.
    Replay {
        file: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the transcript's `! bank` directive.
        #[arg(long)]
        bank: Option<PathBuf>,
    },
    /// Run simulated learners from a TOML profiles file.
    Simulate {
        file: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Overrides the profiles file's `bank`.
        #[arg(long)]
        bank: Option<PathBuf>,
        /// Print one row per block instead of one per learner.
        #[arg(long)]
        blocks: bool,
        /// Save the resulting tables to this directory.
        #[arg(long)]
        save: Option<PathBuf>,
    },
    /// Print a player's learning curve as `block,pct_correct`.
    Curve {
        #[command(flatten)]
        store: StateArgs,
        #[arg(long)]
        phone: String,
        #[arg(long)]
        player: String,
        #[arg(long)]
        topic: u32,
        #[arg(long, default_value_t = 10)]
        window: usize,
    },
    /// Print the control surface with one input fixed, as `x1,x2,crisp`.
    ExportSurface {
        /// `<input>=<value>`, input one of education_years, age_years, standing_pct
        /// (or edu, age, standing).
        #[arg(long)]
        fix: String,
        #[arg(long, default_value_t = 41)]
        resolution: usize,
        #[arg(long)]
        fuzzy: Option<PathBuf>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Serve {
            store,
            host,
            port,
            drain_rate,
            fuzzy,
            seed,
            idle_timeout,
            tick_ms,
        } => commands::serve(commands::ServeArgs {
            store,
            addr: (host, port).into(),
            drain_rate,
            fuzzy,
            seed,
            idle_timeout,
            tick_ms,
        }),
        Command::LoadBank { file } => commands::load_bank(&file),
        Command::Stats {
            store,
            phone,
            player,
        } => commands::stats(&store, phone.as_deref(), player.as_deref()),
        Command::Replay { file, seed, bank } => commands::replay(&file, seed, bank.as_deref()),
        Command::Simulate {
            file,
            seed,
            bank,
            blocks,
            save,
        } => commands::simulate(&file, seed, bank.as_deref(), blocks, save.as_deref()),
        Command::Curve {
            store,
            phone,
            player,
            topic,
            window,
        } => commands::curve(&store, &phone, &player, topic, window),
        Command::ExportSurface {
            fix,
            resolution,
            fuzzy,
            output,
        } => commands::export_surface(&fix, resolution, fuzzy.as_deref(), output.as_deref()),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
