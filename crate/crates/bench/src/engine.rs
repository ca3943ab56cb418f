//! One timed pass of each engine over `n_tasks` synthetic tasks.

use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use streamfarm::farm::{build_farm, FarmConfig};
use streamfarm::graph::{RuntimeConfig, Svc};

use crate::locked::LockedQueue;
use crate::task::{init_task, work_task, Checker, TaskAlloc, TaskFree};
use crate::BenchError;

#[derive(Debug, Clone, Copy)]
struct Tally {
    received: u64,
    bad: u64,
}

/// Emitter, workers and collector on one thread, in that order per task.
pub fn run_sequential<A, F>(mut alloc: A, mut free: F, n_tasks: u64, spin_iterations: u64) -> Result<Duration, BenchError>
where
    A: TaskAlloc,
    F: TaskFree<Buf = A::Buf>,
{
    let mut checker = Checker::new(n_tasks);
    let start = Instant::now();
    for seq in 0..n_tasks {
        let mut t = alloc.acquire();
        init_task(&mut t, seq);
        work_task(&mut t, spin_iterations);
        checker.check(&t);
        free.release(t);
    }
    alloc.finish();
    let elapsed = start.elapsed();
    checker.verdict()?;
    Ok(elapsed)
}

/// Lock-free farm: emitter, `n_workers` workers and a collector, each on
/// its own thread, linked by SPSC rings.
pub fn run_lockfree<A, F>(
    mut alloc: A,
    mut free: F,
    n_tasks: u64,
    n_workers: usize,
    capacity: usize,
    spin_iterations: u64,
) -> Result<Duration, BenchError>
where
    A: TaskAlloc,
    F: TaskFree<Buf = A::Buf>,
{
    let mut next = 0u64;
    let emitter = move || {
        if next == n_tasks {
            alloc.finish();
            return Svc::End;
        }
        let mut t = alloc.acquire();
        init_task(&mut t, next);
        next += 1;
        Svc::Emit(t)
    };
    let worker = move |mut t: A::Buf| {
        work_task(&mut t, spin_iterations);
        Svc::Emit(t)
    };
    let mut checker = Checker::new(n_tasks);
    let collector = move |t: A::Buf| {
        checker.check(&t);
        free.release(t);
        if checker.is_complete() {
            Svc::Emit(Tally {
                received: checker.received,
                bad: checker.bad,
            })
        } else {
            Svc::Absorb
        }
    };
    let cfg = FarmConfig::new(n_workers)
        .capacity(capacity)
        .runtime(RuntimeConfig::from_env()?);
    let mut farm = build_farm(emitter, worker, Some(collector), cfg)?;
    let mut outlet = farm.outlet(1)?;

    let start = Instant::now();
    let running = farm.run()?;
    let tally = outlet.recv();
    running.wait()?;
    let elapsed = start.elapsed();

    match tally {
        Some(Tally { received, bad: 0 }) if received == n_tasks => Ok(elapsed),
        Some(t) => Err(BenchError::Integrity(format!(
            "collector received {} of {n_tasks} tasks, {} failed verification",
            t.received, t.bad
        ))),
        None => Err(BenchError::Integrity(format!(
            "collector never saw all {n_tasks} tasks"
        ))),
    }
}

/// The same topology with every link a mutex-guarded bounded queue.
pub fn run_mutex<A, F>(
    mut alloc: A,
    mut free: F,
    n_tasks: u64,
    n_workers: usize,
    capacity: usize,
    spin_iterations: u64,
) -> Result<Duration, BenchError>
where
    A: TaskAlloc,
    F: TaskFree<Buf = A::Buf>,
{
    let queue_cap = (n_workers * capacity).max(1);
    let tasks = Arc::new(LockedQueue::<A::Buf>::new(queue_cap));
    let results = Arc::new(LockedQueue::<A::Buf>::new(queue_cap));

    let start = Instant::now();
    let emitter = {
        let tasks = Arc::clone(&tasks);
        thread::Builder::new().name("emitter".into()).spawn(move || {
            for seq in 0..n_tasks {
                let mut t = alloc.acquire();
                init_task(&mut t, seq);
                tasks.push(t);
            }
            tasks.close();
            alloc.finish();
        })?
    };
    let workers = (0..n_workers)
        .map(|i| {
            let tasks = Arc::clone(&tasks);
            let results = Arc::clone(&results);
            thread::Builder::new().name(format!("worker-{i}")).spawn(move || {
                while let Some(mut t) = tasks.pop() {
                    work_task(&mut t, spin_iterations);
                    results.push(t);
                }
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let collector = {
        let results = Arc::clone(&results);
        thread::Builder::new().name("collector".into()).spawn(move || {
            let mut checker = Checker::new(n_tasks);
            while let Some(t) = results.pop() {
                checker.check(&t);
                free.release(t);
            }
            checker
        })?
    };

    let joined = |h: thread::JoinHandle<()>| {
        h.join()
            .map_err(|_| BenchError::Integrity("baseline thread panicked".into()))
    };
    joined(emitter)?;
    for w in workers {
        joined(w)?;
    }
    results.close();
    let checker = collector
        .join()
        .map_err(|_| BenchError::Integrity("baseline collector panicked".into()))?;
    let elapsed = start.elapsed();
    checker.verdict()?;
    Ok(elapsed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::{pool_pair, SystemAlloc, SystemFree};

    #[test]
    fn all_engines_verify_with_both_allocators() {
        for n in [1, 3] {
            run_lockfree(SystemAlloc, SystemFree, 5000, n, 8, 5).unwrap();
            run_mutex(SystemAlloc, SystemFree, 5000, n, 8, 5).unwrap();
            let (a, f) = pool_pair(2 * n * 8 + n + 16).unwrap();
            run_lockfree(a, f, 5000, n, 8, 5).unwrap();
            let (a, f) = pool_pair(2 * n * 8 + n + 16).unwrap();
            run_mutex(a, f, 5000, n, 8, 5).unwrap();
        }
        run_sequential(SystemAlloc, SystemFree, 100, 5).unwrap();
    }
}
