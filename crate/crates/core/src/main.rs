use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use cuelab::cds::CdsState;
use cuelab::config::ExperimentConfig;
use cuelab::metrics::{self, MetricRow};
use cuelab::record::Direction;
use cuelab::runner;
use cuelab::signal_io::{fmt_num, fmt_opt, load_trace};
use cuelab::{Error, StrategyKind};

#[derive(Parser)]
#[command(name = "cuelab", version, about = "Adaptive rhythmic cueing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Batch experiments.
    Experiment {
        #[command(subcommand)]
        action: ExperimentAction,
    },
    /// Run the cadence estimator over a recorded gyroscope CSV (t_s,gyro_y).
    Estimate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 285.0)]
        rate: f64,
        /// Print every n-th estimate.
        #[arg(long, default_value_t = 1)]
        every: usize,
    },
    /// Run one session and print its log.
    Simulate {
        #[arg(long, default_value = "baseline-puller")]
        persona: String,
        #[arg(long, default_value = "adaptive")]
        strategy: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Dir::Up)]
        direction: Dir,
        /// Optional TOML config for everything but persona and strategy.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the cue log instead of the sample log.
        #[arg(long)]
        cues: bool,
    },
}

#[derive(Subcommand)]
enum ExperimentAction {
    /// Run a suite and write logs plus metric tables to a directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute metric tables from the logs of an earlier run.
    Report {
        #[arg(long)]
        logs: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Dir {
    Up,
    Down,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        e if e.is_numerical() => 3,
        _ => 1,
    }
}

fn print_rows(rows: &[MetricRow]) {
    println!(
        "{:<13} {:<5} {:<4} {:>6} {:>12} {:>12} {:>10} {:>10}",
        "strategy", "dir", "ph", "trials", "target_mae", "interm_mae", "decay", "pct_on"
    );
    for r in rows {
        println!(
            "{:<13} {:<5} {:<4} {:>6} {:>12} {:>12} {:>10} {:>10}",
            r.strategy,
            r.direction.as_str(),
            r.phase,
            r.trials,
            fmt_opt(r.target_mae.mean),
            fmt_opt(r.intermediate_mae.mean),
            fmt_opt(r.decay_rate.mean),
            fmt_opt(r.percent_on.mean),
        );
    }
}

fn run(cli: Cli) -> cuelab::Result<()> {
    match cli.command {
        Command::Experiment { action: ExperimentAction::Run { config, out } } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = runner::run_suite(&cfg, &out)?;
            print_rows(&report.rows);
            let failed: Vec<_> = report.failures().collect();
            for f in &failed {
                eprintln!("trial failed: seed {} {} {}: {}", f.seed, f.strategy, f.direction, f.error);
            }
            if !failed.is_empty() {
                eprintln!("{} of {} trials failed", failed.len(), report.manifest.len());
            }
            Ok(())
        }
        Command::Experiment { action: ExperimentAction::Report { logs } } => {
            let report = runner::report(&logs)?;
            print_rows(&report.rows);
            Ok(())
        }
        Command::Estimate { input, rate, every } => {
            let (trace, _) = load_trace(&input, rate)?;
            let cds_config = cuelab::CdsConfig::with_sample_rate(rate);
            cds_config.validate()?;
            let mut state = CdsState::new(&cds_config);
            println!("t_s,phase_rad,cadence_hz,prediction,strides");
            for (i, (&t, &y)) in trace.timestamps.iter().zip(&trace.values).enumerate() {
                state.update(y, &cds_config)?;
                if i % every.max(1) == 0 {
                    println!(
                        "{},{},{},{},{}",
                        fmt_num(t),
                        fmt_num(state.phase),
                        fmt_num(state.cadence()),
                        fmt_num(state.last_prediction),
                        state.stride_count
                    );
                }
            }
            Ok(())
        }
        Command::Simulate { persona, strategy, seed, direction, config, cues } => {
            let mut cfg = match config {
                Some(p) => ExperimentConfig::load(&p)?,
                None => ExperimentConfig::default(),
            };
            cfg.walker.persona = persona;
            let kind = StrategyKind::parse_with_gain(&strategy, cfg.strategies.p_gain)?;
            let baseline = runner::run_control(&cfg, seed)?;
            let record = if kind == StrategyKind::Control {
                runner::run_control_trial(&cfg, seed)?.1.record
            } else {
                let dir = match direction {
                    Dir::Up => Direction::Up,
                    Dir::Down => Direction::Down,
                };
                runner::run_condition(&cfg, kind, dir, baseline, seed)?.record
            };
            let stdout = std::io::stdout().lock();
            if cues {
                record.write_cues_csv(stdout)?;
            } else {
                record.write_samples_csv(stdout)?;
            }
            if let Ok(rows) = metrics::trial_metrics(&record) {
                for r in rows {
                    eprintln!(
                        "{} {} {}: target MAE {} Hz, percent on {}",
                        r.strategy,
                        r.direction,
                        r.phase.map_or("all", |p| p.as_str()),
                        fmt_num(r.target_mae),
                        fmt_num(r.percent_on)
                    );
                }
            }
            Ok(())
        }
    }
}
