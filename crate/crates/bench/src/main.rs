use std::fs::File;
use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use streamfarm_bench::{
    sweep, write_csv, AllocKind, BenchError, Engine, SweepConfig, DEFAULT_CAPACITY, DEFAULT_REPETITIONS, DEFAULT_TASKS,
};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EngineArg {
    Lockfree,
    Mutex,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AllocArg {
    Pool,
    System,
}

/// Speedup of the lock-free farm over a sequential loop, swept over grain
/// size and worker count.
#[derive(Debug, Parser)]
#[command(name = "bench", version)]
struct Args {
    /// Grain sizes in microseconds.
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 5.0, 50.0])]
    grains: Vec<f64>,
    /// Worker counts.
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 4, 8])]
    workers: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_TASKS)]
    tasks: u64,
    #[arg(long, value_enum, default_value = "lockfree")]
    engine: EngineArg,
    #[arg(long, value_enum, default_value = "pool")]
    alloc: AllocArg,
    /// Measured repetitions per point, after one discarded warm-up.
    #[arg(long, default_value_t = DEFAULT_REPETITIONS)]
    reps: usize,
    /// Per-link ring capacity.
    #[arg(long, default_value_t = DEFAULT_CAPACITY)]
    capacity: usize,
    /// Output file; stdout when absent.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn exit_code(e: &BenchError) -> u8 {
    match e {
        BenchError::Integrity(_) => 2,
        BenchError::Calibration { .. } => 3,
        _ => 1,
    }
}

fn emit(path: &Option<PathBuf>, records: &[streamfarm_bench::SpeedupRecord], note: Option<&str>) -> Result<(), BenchError> {
    match path {
        Some(p) => write_csv(File::create(p)?, records, note),
        None => write_csv(io::stdout().lock(), records, note),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let cfg = SweepConfig {
        grains: args.grains,
        workers: args.workers,
        engines: match args.engine {
            EngineArg::Lockfree => vec![Engine::LockFree],
            EngineArg::Mutex => vec![Engine::Mutex],
            EngineArg::Both => vec![Engine::LockFree, Engine::Mutex],
        },
        n_tasks: args.tasks,
        channel_capacity: args.capacity,
        allocator: match args.alloc {
            AllocArg::Pool => AllocKind::Pool,
            AllocArg::System => AllocKind::System,
        },
        repetitions: args.reps,
    };
    match sweep(&cfg) {
        Ok(records) => match emit(&args.csv, &records, None) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("bench: {e}");
                ExitCode::from(1)
            }
        },
        Err(failure) => {
            eprintln!("bench: {}", failure.error);
            let note = failure.error.to_string();
            if let Err(e) = emit(&args.csv, &failure.completed, Some(&note)) {
                eprintln!("bench: {e}");
            }
            ExitCode::from(exit_code(&failure.error))
        }
    }
}
