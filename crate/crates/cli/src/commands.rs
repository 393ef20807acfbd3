use std::io::{self, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};

use muats_core::clock::SystemClock;
use muats_core::fuzzy::{write_surface_csv, FuzzySystem, InputVar};
use muats_core::gateway::{http, Gateway, GatewayConfig};
use muats_core::session::{Engine, SessionConfig};
use muats_core::simulate::{ProfilesFile, SimOptions, Simulation};
use muats_core::tables::{read_bank, Phone, Store};
use muats_core::transcript::{self, Transcript, TranscriptError};

use crate::StateArgs;

pub struct ServeArgs {
    pub store: StateArgs,
    pub addr: SocketAddr,
    pub drain_rate: f64,
    pub fuzzy: Option<PathBuf>,
    pub seed: Option<u64>,
    pub idle_timeout: u64,
    pub tick_ms: u64,
}

fn load_fuzzy(path: Option<&Path>) -> Result<FuzzySystem> {
    match path {
        Some(p) => FuzzySystem::from_file(p).context("loading fuzzy system"),
        None => Ok(FuzzySystem::normative()),
    }
}

fn load_store(args: &StateArgs) -> Result<Store> {
    std::fs::create_dir_all(&args.state)
        .with_context(|| format!("creating state directory {}", args.state.display()))?;
    Store::load(&args.state, &args.bank).context("loading tables")
}

fn parse_phone(s: &str) -> Result<Phone> {
    Phone::parse(s).ok_or_else(|| anyhow!("`{s}` is not a phone number"))
}

pub fn serve(args: ServeArgs) -> Result<ExitCode> {
    let gw_config = GatewayConfig {
        listen: args.addr,
        drain_rate: args.drain_rate,
        tick_millis: args.tick_ms,
    };
    gw_config.validate()?;
    let session = SessionConfig {
        idle_timeout_seconds: args.idle_timeout,
        rng_seed: args.seed,
        ..SessionConfig::default()
    };
    let store = load_store(&args.store)?;
    let engine = Engine::new(store, load_fuzzy(args.fuzzy.as_deref())?, session)?;
    let gateway = Gateway::new(engine, gw_config.drain_rate, Arc::new(SystemClock))?;

    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(gw_config.listen)
            .await
            .with_context(|| format!("binding {}", gw_config.listen))?;
        log::info!(
            "listening on http://{} (drain rate {}/s, state in {})",
            listener.local_addr()?,
            gw_config.drain_rate,
            args.store.state.display()
        );
        let gateway = http::serve(
            gateway,
            listener,
            Duration::from_millis(gw_config.tick_millis),
            shutdown_signal(),
        )
        .await?;
        log::info!(
            "stopped; {} sessions and {} queued messages checkpointed",
            gateway.engine().store().active_rows().count(),
            gateway.engine().store().outbox_len()
        );
        Ok(ExitCode::SUCCESS)
    })
}

async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        match signal(SignalKind::terminate()) {
            Ok(mut term) => {
                tokio::select! {
                    _ = tokio::signal::ctrl_c() => {}
                    _ = term.recv() => {}
                }
            }
            Err(_) => {
                let _ = tokio::signal::ctrl_c().await;
            }
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
    log::info!("shutting down");
}

pub fn load_bank(file: &Path) -> Result<ExitCode> {
    let store = Store::from_bank(read_bank(file)?);
    let mut out = BufWriter::new(io::stdout().lock());
    writeln!(out, "topic_id,topic,level,questions")?;
    for s in store.top_level_stats() {
        let topic = store.topic(s.topic_id)?;
        writeln!(
            out,
            "{},{},{},{}",
            s.topic_id, topic.name, s.level, s.question_count
        )?;
    }
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

pub fn stats(args: &StateArgs, phone: Option<&str>, player: Option<&str>) -> Result<ExitCode> {
    let store = load_store(args)?;
    let phone = phone.map(parse_phone).transpose()?;
    let player = player.map(str::to_uppercase);
    let mut out = BufWriter::new(io::stdout().lock());
    writeln!(out, "phone,player,topic_id,level,asked,correct,pct_correct")?;
    for s in store.level_stats() {
        if phone.as_ref().is_some_and(|p| *p != s.phone_no)
            || player.as_ref().is_some_and(|p| *p != s.player_id)
        {
            continue;
        }
        let pct = if s.total_asked == 0 {
            String::new()
        } else {
            format!(
                "{:.1}",
                100.0 * s.total_correct as f64 / s.total_asked as f64
            )
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.phone_no, s.player_id, s.topic_id, s.level, s.total_asked, s.total_correct, pct
        )?;
    }
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

pub fn replay(file: &Path, seed: Option<u64>, bank: Option<&Path>) -> Result<ExitCode> {
    let t = Transcript::from_file(file)?;
    match transcript::replay(&t, bank, seed) {
        Ok(r) => {
            println!(
                "PASS {}: {} steps, {} sent, {} matched",
                file.display(),
                r.steps,
                r.sent,
                r.matched
            );
            Ok(ExitCode::SUCCESS)
        }
        Err(TranscriptError::Mismatch(m)) => {
            println!("FAIL {}: {m}", file.display());
            Ok(ExitCode::FAILURE)
        }
        Err(e) => Err(e.into()),
    }
}

pub fn simulate(
    file: &Path,
    seed: u64,
    bank: Option<&Path>,
    blocks: bool,
    save: Option<&Path>,
) -> Result<ExitCode> {
    let profiles = ProfilesFile::from_file(file)?;
    let bank_path = bank
        .map(Path::to_path_buf)
        .or(profiles.bank.clone())
        .ok_or_else(|| {
            anyhow!(
                "no question bank: pass --bank or set `bank` in {}",
                file.display()
            )
        })?;
    let config = SessionConfig {
        rng_seed: Some(seed),
        ..SessionConfig::default()
    };
    let engine = Engine::new(
        Store::from_bank(read_bank(&bank_path)?),
        FuzzySystem::normative(),
        config,
    )?;
    let mut sim = Simulation::new(
        engine,
        &SimOptions {
            seed,
            ..SimOptions::default()
        },
    );
    let summaries = sim.run(&profiles.learners)?;

    let mut out = BufWriter::new(io::stdout().lock());
    if blocks {
        writeln!(out, "learner,phone,block,level,asked,correct")?;
        for s in &summaries {
            for (i, b) in s.blocks.iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    s.name,
                    s.phone,
                    i + 1,
                    b.level,
                    b.asked,
                    b.correct
                )?;
            }
        }
    } else {
        writeln!(out, "learner,phone,asked,correct,final_level,trajectory")?;
        for s in &summaries {
            let traj: Vec<String> = s.trajectory().iter().map(u8::to_string).collect();
            writeln!(
                out,
                "{},{},{},{},{},{}",
                s.name,
                s.phone,
                s.asked,
                s.correct,
                s.final_level,
                traj.join(" ")
            )?;
        }
    }
    out.flush()?;
    if let Some(dir) = save {
        std::fs::create_dir_all(dir)?;
        sim.into_engine().into_store().save_to(dir)?;
    }
    Ok(ExitCode::SUCCESS)
}

pub fn curve(
    args: &StateArgs,
    phone: &str,
    player: &str,
    topic: u32,
    window: usize,
) -> Result<ExitCode> {
    if window == 0 {
        bail!("--window must be at least 1");
    }
    let store = load_store(args)?;
    let phone = parse_phone(phone)?;
    let player = player.to_uppercase();
    store.player(&phone, &player)?;
    store.topic(topic)?;
    let mut out = BufWriter::new(io::stdout().lock());
    writeln!(out, "block,pct_correct")?;
    for (i, pct) in store.learning_curve(&phone, &player, topic, window) {
        writeln!(out, "{},{pct:.1}", i + 1)?;
    }
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

pub fn export_surface(
    fix: &str,
    resolution: usize,
    fuzzy: Option<&Path>,
    output: Option<&Path>,
) -> Result<ExitCode> {
    let (name, value) = fix
        .split_once('=')
        .ok_or_else(|| anyhow!("--fix expects <input>=<value>, got `{fix}`"))?;
    let var: InputVar = name.trim().parse().map_err(|e| anyhow!("{e}"))?;
    let value: f64 = value
        .trim()
        .parse()
        .with_context(|| format!("`{value}` is not a number"))?;
    let grid = load_fuzzy(fuzzy)?.surface_grid(var, value, resolution)?;
    match output {
        Some(path) => {
            let f = std::fs::File::create(path)
                .with_context(|| format!("creating {}", path.display()))?;
            let mut w = BufWriter::new(f);
            write_surface_csv(&mut w, &grid)?;
            w.flush()?;
        }
        None => {
            let mut w = BufWriter::new(io::stdout().lock());
            write_surface_csv(&mut w, &grid)?;
            w.flush()?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
