//! Speedup benchmark for the lock-free farm.
//!
//! Each task is a small record the emitter stamps, a worker updates and
//! then burns a calibrated grain `tc` on, and the collector verifies. The
//! lock-free engine runs it through a farm; the mutex engine through the
//! same topology built from locked queues. Speedup is measured against one
//! thread doing the same work.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

pub mod engine;
pub mod locked;
pub mod spin;
pub mod task;

pub use task::AllocKind;

pub const DEFAULT_GRAINS: [f64; 3] = [0.5, 5.0, 50.0];
pub const DEFAULT_WORKERS: [usize; 4] = [1, 2, 4, 8];
pub const DEFAULT_TASKS: u64 = 100_000;
pub const DEFAULT_CAPACITY: usize = 512;
pub const DEFAULT_REPETITIONS: usize = 5;

pub const CSV_HEADER: [&str; 7] = [
    "engine",
    "tc_micros",
    "n_workers",
    "n_tasks",
    "median_seconds",
    "speedup",
    "tasks_per_second",
];

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("could not calibrate {target_micros} us of work (best {best_micros:.3} us at {iterations} iterations)")]
    Calibration {
        target_micros: f64,
        best_micros: f64,
        iterations: u64,
    },
    #[error("integrity check failed: {0}")]
    Integrity(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Runtime(#[from] streamfarm::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    LockFree,
    Mutex,
}

impl Engine {
    pub fn as_str(self) -> &'static str {
        match self {
            Engine::LockFree => "lockfree",
            Engine::Mutex => "mutex",
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Engine {
    type Err = BenchError;
    fn from_str(s: &str) -> Result<Self, BenchError> {
        match s {
            "lockfree" => Ok(Engine::LockFree),
            "mutex" => Ok(Engine::Mutex),
            _ => Err(BenchError::Config(format!("unknown engine {s:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub tc_micros: f64,
    pub n_workers: usize,
    pub n_tasks: u64,
    pub channel_capacity: usize,
    pub allocator: AllocKind,
    pub engine: Engine,
    pub repetitions: usize,
}

impl BenchConfig {
    pub fn new(engine: Engine, tc_micros: f64, n_workers: usize) -> Self {
        BenchConfig {
            tc_micros,
            n_workers,
            n_tasks: DEFAULT_TASKS,
            channel_capacity: DEFAULT_CAPACITY,
            allocator: AllocKind::Pool,
            engine,
            repetitions: DEFAULT_REPETITIONS,
        }
    }

    fn validate(&self) -> Result<(), BenchError> {
        if self.n_tasks == 0 {
            return Err(BenchError::Config("n_tasks must be positive".into()));
        }
        if self.channel_capacity == 0 {
            return Err(BenchError::Config("channel capacity must be positive".into()));
        }
        if self.repetitions == 0 {
            return Err(BenchError::Config("repetitions must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SpeedupRecord {
    pub engine: String,
    pub tc_micros: f64,
    pub n_workers: usize,
    pub n_tasks: u64,
    pub median_seconds: f64,
    pub speedup: f64,
    pub tasks_per_second: f64,
}

pub fn median(samples: &mut [f64]) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len();
    if n % 2 == 1 {
        samples[n / 2]
    } else {
        (samples[n / 2 - 1] + samples[n / 2]) / 2.0
    }
}

fn in_flight(cfg: &BenchConfig) -> usize {
    2 * cfg.n_workers * cfg.channel_capacity + cfg.n_workers + 16
}

/// One timed pass of the sequential reference, in seconds.
pub fn sequential_seconds(allocator: AllocKind, n_tasks: u64, spin_iterations: u64) -> Result<f64, BenchError> {
    let d = match allocator {
        AllocKind::Pool => {
            let (a, f) = task::pool_pair(16)?;
            engine::run_sequential(a, f, n_tasks, spin_iterations)?
        }
        AllocKind::System => engine::run_sequential(task::SystemAlloc, task::SystemFree, n_tasks, spin_iterations)?,
    };
    Ok(d.as_secs_f64())
}

/// One timed pass of the configured engine, in seconds.
pub fn parallel_seconds(cfg: &BenchConfig, spin_iterations: u64) -> Result<f64, BenchError> {
    let (n, cap, tasks) = (cfg.n_workers, cfg.channel_capacity, cfg.n_tasks);
    let d = match (cfg.allocator, cfg.engine) {
        (AllocKind::Pool, Engine::LockFree) => {
            let (a, f) = task::pool_pair(in_flight(cfg))?;
            engine::run_lockfree(a, f, tasks, n, cap, spin_iterations)?
        }
        (AllocKind::Pool, Engine::Mutex) => {
            let (a, f) = task::pool_pair(in_flight(cfg))?;
            engine::run_mutex(a, f, tasks, n, cap, spin_iterations)?
        }
        (AllocKind::System, Engine::LockFree) => {
            engine::run_lockfree(task::SystemAlloc, task::SystemFree, tasks, n, cap, spin_iterations)?
        }
        (AllocKind::System, Engine::Mutex) => {
            engine::run_mutex(task::SystemAlloc, task::SystemFree, tasks, n, cap, spin_iterations)?
        }
    };
    Ok(d.as_secs_f64())
}

/// Warm-up pass, then the median of `repetitions` measured passes.
fn median_of<F>(repetitions: usize, mut pass: F) -> Result<f64, BenchError>
where
    F: FnMut() -> Result<f64, BenchError>,
{
    pass()?;
    let mut samples = (0..repetitions).map(|_| pass()).collect::<Result<Vec<_>, _>>()?;
    Ok(median(&mut samples))
}

/// Median sequential time for a grain already calibrated to
/// `spin_iterations`.
pub fn sequential_median(cfg: &BenchConfig, spin_iterations: u64) -> Result<f64, BenchError> {
    median_of(cfg.repetitions, || {
        sequential_seconds(cfg.allocator, cfg.n_tasks, spin_iterations)
    })
}

fn record(cfg: &BenchConfig, t_par: f64, t_seq: f64) -> SpeedupRecord {
    SpeedupRecord {
        engine: cfg.engine.to_string(),
        tc_micros: cfg.tc_micros,
        n_workers: cfg.n_workers,
        n_tasks: cfg.n_tasks,
        median_seconds: t_par,
        speedup: t_seq / t_par,
        tasks_per_second: cfg.n_tasks as f64 / t_par,
    }
}

/// Measures one configuration against a known sequential time.
pub fn run_with(cfg: &BenchConfig, spin_iterations: u64, t_seq: f64) -> Result<SpeedupRecord, BenchError> {
    cfg.validate()?;
    if cfg.n_workers == 0 {
        // No workers: the reference itself, speedup 1 by definition.
        return Ok(record(cfg, t_seq, t_seq));
    }
    let t_par = median_of(cfg.repetitions, || parallel_seconds(cfg, spin_iterations))?;
    Ok(record(cfg, t_par, t_seq))
}

/// Calibrates the grain, measures the sequential reference and then the
/// configured engine.
pub fn run_bench(cfg: &BenchConfig) -> Result<SpeedupRecord, BenchError> {
    cfg.validate()?;
    let iters = spin::calibrate_spin(cfg.tc_micros)?;
    let t_seq = sequential_median(cfg, iters)?;
    run_with(cfg, iters, t_seq)
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub grains: Vec<f64>,
    pub workers: Vec<usize>,
    pub engines: Vec<Engine>,
    pub n_tasks: u64,
    pub channel_capacity: usize,
    pub allocator: AllocKind,
    pub repetitions: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            grains: DEFAULT_GRAINS.to_vec(),
            workers: DEFAULT_WORKERS.to_vec(),
            engines: vec![Engine::LockFree],
            n_tasks: DEFAULT_TASKS,
            channel_capacity: DEFAULT_CAPACITY,
            allocator: AllocKind::Pool,
            repetitions: DEFAULT_REPETITIONS,
        }
    }
}

/// A sweep that stopped early keeps what it measured.
#[derive(Debug)]
pub struct SweepFailure {
    pub completed: Vec<SpeedupRecord>,
    pub error: BenchError,
}

/// Every (engine, grain, workers) combination, engine outermost. The grain
/// is calibrated and the sequential reference measured once per grain.
pub fn sweep(cfg: &SweepConfig) -> Result<Vec<SpeedupRecord>, SweepFailure> {
    let mut out = Vec::with_capacity(cfg.engines.len() * cfg.grains.len() * cfg.workers.len());
    let mut calibrated: Vec<(u64, f64)> = Vec::with_capacity(cfg.grains.len());
    let fail = |completed: Vec<SpeedupRecord>, error| SweepFailure { completed, error };

    for &tc in &cfg.grains {
        let base = BenchConfig {
            tc_micros: tc,
            n_workers: 0,
            n_tasks: cfg.n_tasks,
            channel_capacity: cfg.channel_capacity,
            allocator: cfg.allocator,
            engine: Engine::LockFree,
            repetitions: cfg.repetitions,
        };
        let step = base
            .validate()
            .and_then(|_| spin::calibrate_spin(tc))
            .and_then(|iters| Ok((iters, sequential_median(&base, iters)?)));
        match step {
            Ok(c) => calibrated.push(c),
            Err(e) => return Err(fail(out, e)),
        }
    }
    for &engine in &cfg.engines {
        for (&tc, &(iters, t_seq)) in cfg.grains.iter().zip(&calibrated) {
            for &n in &cfg.workers {
                let bc = BenchConfig {
                    tc_micros: tc,
                    n_workers: n,
                    n_tasks: cfg.n_tasks,
                    channel_capacity: cfg.channel_capacity,
                    allocator: cfg.allocator,
                    engine,
                    repetitions: cfg.repetitions,
                };
                match run_with(&bc, iters, t_seq) {
                    Ok(r) => {
                        log::info!(
                            "{engine} tc={tc}us n={n}: {:.4}s speedup {:.2}",
                            r.median_seconds,
                            r.speedup
                        );
                        out.push(r)
                    }
                    Err(e) => return Err(fail(out, e)),
                }
            }
        }
    }
    Ok(out)
}

/// Writes the header and one row per record. A trailing comment line marks
/// an incomplete sweep.
pub fn write_csv<W: Write>(w: W, records: &[SpeedupRecord], incomplete: Option<&str>) -> Result<(), BenchError> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wtr.write_record(CSV_HEADER)?;
    for r in records {
        wtr.serialize(r)?;
    }
    let mut w = wtr.into_inner().map_err(|e| e.into_error())?;
    if let Some(reason) = incomplete {
        writeln!(w, "# incomplete: {}", reason.replace('\n', " "))?;
    }
    w.flush()?;
    Ok(())
}
