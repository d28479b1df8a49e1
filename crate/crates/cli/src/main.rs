use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dispatch_core::io::{self, RunConfig, TraceSource};
use dispatch_core::synth::{self, REFERENCE_SOC_BACKOFF};
use dispatch_core::{run_comparison, run_day, AdmmConfig, Forecaster, Mode};

/// Battery and PV dispatch: day playback of the 10 s tracker and the
/// 5 min ADMM coordinator.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Play back one day and write slots.csv, summary.csv and admm_trace.csv.
    Run {
        /// Scenario file (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the mode from the config: no_dispatch, dispatch_only or dispatch_admm.
        #[arg(long)]
        mode: Option<Mode>,
    },
    /// Write the synthetic reference day as trace CSVs plus a scenario.toml.
    Gen {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run all three modes on one scenario and print the comparison table.
    Compare {
        /// Scenario file (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Also write every mode's result files into <OUT>/<mode>/.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Six decimals without a stray sign on values that round to zero.
fn cell(v: f64) -> f64 {
    if v.abs() < 5e-7 {
        0.0
    } else {
        v
    }
}

fn run(config: &Path, out: &Path, mode: Option<Mode>) -> dispatch_core::Result<()> {
    let mut scenario = io::load_scenario(config)?;
    if let Some(m) = mode {
        scenario.mode = m;
    }
    let day = run_day(&scenario)?;
    io::write_results(&day, out)?;
    println!("mode {}", day.mode);
    for (name, value) in day.summary().rows() {
        println!("{name:<28} {:>14.6}", cell(value));
    }
    println!("results written to {}", out.display());
    Ok(())
}

fn gen(seed: u64, out: &Path) -> dispatch_core::Result<()> {
    let day = synth::generate(seed)?;
    let files = io::write_traces(&day.trace, &day.battery, out)?;
    let cfg = RunConfig {
        energy_kwh: day.battery.energy_kwh,
        p_min_kw: day.battery.p_min_kw,
        p_max_kw: day.battery.p_max_kw,
        soc_init_pct: 100.0 * day.battery.soc,
        admm: AdmmConfig::default(),
        soc_backoff_pct: 100.0 * REFERENCE_SOC_BACKOFF,
        mode: Mode::DispatchWithAdmm,
        forecaster: Forecaster::TraceProvided,
        source: TraceSource::Files(files),
    };
    let path = out.join("scenario.toml");
    fs::write(&path, cfg.to_toml()).map_err(|source| dispatch_core::Error::Io {
        path: path.clone(),
        source,
    })?;
    println!("synthetic day (seed {seed}) written to {}", out.display());
    println!("scenario: {}", path.display());
    Ok(())
}

fn compare(config: &Path, out: Option<&Path>) -> dispatch_core::Result<()> {
    let scenario = io::load_scenario(config)?;
    let days = run_comparison(&scenario)?;
    if let Some(dir) = out {
        for day in &days {
            io::write_results(day, &dir.join(day.mode.as_str()))?;
        }
    }
    let summaries: Vec<_> = days.iter().map(|d| (d.mode, d.summary())).collect();
    print!("{:<28}", "metric");
    for (mode, _) in &summaries {
        print!(" {:>14}", mode.as_str());
    }
    println!();
    for (name, values) in io::comparison_rows(&summaries) {
        print!("{name:<28}");
        for v in values {
            print!(" {:>14.6}", cell(v));
        }
        println!();
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, out, mode } => run(config, out, *mode),
        Command::Gen { seed, out } => gen(*seed, out),
        Command::Compare { config, out } => compare(config, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::debug!("{e:?}");
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
