// Copyright 2026 The m2cs-emu Authors
// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::process::{Command, ExitCode};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::{env, fs};

use clap::{Parser, Subcommand};
use m2cs_cli::bench::{self, ALL};
use m2cs_cli::config::{parse_file, parse_overrides, ConfigError, Kind};
use m2cs_cli::error::CliError;
use m2cs_cli::serve::{Server, DEFAULT_BASE_PORT};

const DEFAULT_SEED: u64 = 7044;

#[derive(Parser)]
#[command(
    name = "m2cs",
    version,
    about = "Emulated modular control system: benchmarks and UDP service"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one benchmark and write <out>/<name>.json and .csv.
    Run {
        benchmark: String,
        /// Flat `key = value` file; command-line overrides win.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Defaults to $M2CS_SEED, then 7044.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "m2cs-reports")]
        out: PathBuf,
        /// host:port of a served chassis instead of an in-process one.
        #[arg(long)]
        remote: Option<String>,
        #[arg(long, default_value_t = 1)]
        chassis: u8,
        /// Render the report with scripts/plot_report.py.
        #[arg(long)]
        plot: bool,
        /// Benchmark parameters as `--key value`.
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        params: Vec<String>,
    },
    /// Serve chassis 1..=N on UDP ports base+1..=base+N until interrupted.
    Serve {
        #[arg(long, default_value_t = DEFAULT_BASE_PORT)]
        port: u16,
        #[arg(long, default_value_t = 1)]
        chassis: u8,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List benchmarks and their parameters.
    List,
}

fn seed(flag: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match env::var("M2CS_SEED") {
        Ok(v) => v.trim().parse().map_err(|_| {
            CliError::ConfigInvalid(ConfigError::BadValue {
                key: "M2CS_SEED".into(),
                reason: format!("{v:?} is not an unsigned integer"),
            })
        }),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

fn list() {
    for b in ALL {
        println!("{}{}: {}", b.name, if b.remote { " [remote]" } else { "" }, b.about);
        for k in b.schema {
            let range = match k.kind {
                Kind::Float {
                    min,
                    max,
                    exclusive_min,
                } => format!("{}{min}, {max}]", if exclusive_min { "(" } else { "[" }),
                Kind::Int { min, max } => format!("[{min}, {max}]"),
                Kind::Bool => "bool".into(),
                Kind::Choice(of) => of.join("|"),
            };
            println!("    --{:<22} {:<10} {:<18} {}", k.name, k.default, range, k.doc);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run(
    benchmark: &str,
    config: Option<PathBuf>,
    seed_flag: Option<u64>,
    out: PathBuf,
    remote: Option<String>,
    chassis: u8,
    plot: bool,
    params: &[String],
) -> Result<bool, CliError> {
    // Harness options given after the first benchmark parameter land in
    // `params`; take them back out.
    let (mut config, mut seed_flag, mut out, mut remote, mut chassis, mut plot) =
        (config, seed_flag, out, remote, chassis, plot);
    let mut overrides = Vec::new();
    for (k, v) in parse_overrides(params)? {
        let bad = |reason: &str| ConfigError::BadValue {
            key: k.clone(),
            reason: format!("{v:?} {reason}"),
        };
        match k.as_str() {
            "config" => config = Some(PathBuf::from(&v)),
            "seed" => seed_flag = Some(v.parse().map_err(|_| bad("is not an unsigned integer"))?),
            "out" => out = PathBuf::from(&v),
            "remote" => remote = Some(v.clone()),
            "chassis" => chassis = v.parse().map_err(|_| bad("is not a chassis id"))?,
            "plot" => plot = v != "false",
            _ => overrides.push((k, v)),
        }
    }
    let file = match &config {
        Some(p) => parse_file(&fs::read_to_string(p)?)?,
        None => Vec::new(),
    };
    let report = bench::run(benchmark, &file, &overrides, seed(seed_flag)?, remote, chassis)?;
    let json = report.write(&out)?;
    print!("{}", report.summary());
    println!("report: {}", json.display());
    if plot {
        let status = Command::new("python3")
            .arg("scripts/plot_report.py")
            .arg(&json)
            .status();
        match status {
            Ok(s) if s.success() => {}
            Ok(s) => eprintln!("plot script exited with {s}"),
            Err(e) => eprintln!("could not run the plot script: {e}"),
        }
    }
    Ok(report.passed)
}

fn serve(host: &str, port: u16, chassis: u8, seed_flag: Option<u64>) -> Result<(), CliError> {
    let server = Server::bind(host, port, chassis, seed(seed_flag)?)?;
    for (id, a) in (1..).zip(server.addrs()) {
        println!("chassis {id} listening on udp://{a}");
    }
    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    ctrlc::set_handler(move || flag.store(true, Ordering::Relaxed))
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    let stats = server.run(stop, |id, peer| println!("chassis {id}: client {peer} connected"))?;
    for (id, s) in (1..).zip(stats) {
        println!("chassis {id}: {} datagrams, {} answered", s.received, s.answered);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run {
            benchmark,
            config,
            seed,
            out,
            remote,
            chassis,
            plot,
            params,
        } => run(&benchmark, config, seed, out, remote, chassis, plot, &params),
        Cmd::Serve {
            port,
            chassis,
            host,
            seed,
        } => serve(&host, port, chassis, seed).map(|()| true),
        Cmd::List => {
            list();
            Ok(true)
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
