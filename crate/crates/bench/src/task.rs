//! The synthetic task: ten words the worker reads and updates once, plus
//! the emission index, allocated from either the slab pool or the system
//! allocator.

use std::time::{Duration, Instant};

use streamfarm::backoff::Backoff;
use streamfarm::graph::default_spin_budget;
use streamfarm::pool::{Buffer, Releaser, SlabPool};

use crate::spin::spin;
use crate::BenchError;

pub const TASK_WORDS: usize = 10;
const SEQ: usize = TASK_WORDS;
pub const TASK_BYTES: usize = (TASK_WORDS + 1) * 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AllocKind {
    Pool,
    System,
}

pub trait TaskBuf: Send + 'static {
    fn words(&self) -> &[u64];
    fn words_mut(&mut self) -> &mut [u64];
}

impl TaskBuf for Buffer {
    fn words(&self) -> &[u64] {
        Buffer::words(self)
    }
    fn words_mut(&mut self) -> &mut [u64] {
        Buffer::words_mut(self)
    }
}

impl TaskBuf for Box<[u64; TASK_WORDS + 1]> {
    fn words(&self) -> &[u64] {
        &self[..]
    }
    fn words_mut(&mut self) -> &mut [u64] {
        &mut self[..]
    }
}

/// The emitter's allocator.
pub trait TaskAlloc: Send + 'static {
    type Buf: TaskBuf;
    fn acquire(&mut self) -> Self::Buf;
    /// Called once after the last acquire, before the allocator is dropped.
    fn finish(&mut self) {}
}

/// The collector's deallocator.
pub trait TaskFree: Send + 'static {
    type Buf: TaskBuf;
    fn release(&mut self, buf: Self::Buf);
}

pub struct PoolAlloc {
    pool: SlabPool,
    backoff: Backoff,
}

impl TaskAlloc for PoolAlloc {
    type Buf = Buffer;
    fn acquire(&mut self) -> Buffer {
        loop {
            match self.pool.acquire() {
                Ok(b) => {
                    self.backoff.reset();
                    return b;
                }
                Err(_) => self.backoff.snooze(),
            }
        }
    }

    /// Waits for the consumer to hand every buffer back so the pool is not
    /// dropped with buffers on loan. Gives up after [`RETURN_GRACE`].
    fn finish(&mut self) {
        let deadline = Instant::now() + RETURN_GRACE;
        self.backoff.reset();
        while self.pool.stats().in_flight > 0 && Instant::now() < deadline {
            if self.pool.drain() == 0 {
                self.backoff.snooze();
            }
        }
    }
}

pub const RETURN_GRACE: Duration = Duration::from_secs(30);

pub struct PoolFree(Releaser);

impl TaskFree for PoolFree {
    type Buf = Buffer;
    fn release(&mut self, buf: Buffer) {
        self.0.release(buf)
    }
}

/// Pool sized for `in_flight` simultaneously live tasks.
pub fn pool_pair(in_flight: usize) -> Result<(PoolAlloc, PoolFree), BenchError> {
    let (pool, mut rel) = SlabPool::new(TASK_BYTES, in_flight.max(1), 1)?;
    Ok((
        PoolAlloc {
            pool,
            backoff: Backoff::new(default_spin_budget()),
        },
        PoolFree(rel.pop().expect("one releaser")),
    ))
}

pub struct SystemAlloc;

impl TaskAlloc for SystemAlloc {
    type Buf = Box<[u64; TASK_WORDS + 1]>;
    fn acquire(&mut self) -> Self::Buf {
        Box::new([0; TASK_WORDS + 1])
    }
}

pub struct SystemFree;

impl TaskFree for SystemFree {
    type Buf = Box<[u64; TASK_WORDS + 1]>;
    fn release(&mut self, buf: Self::Buf) {
        drop(buf)
    }
}

/// Emitter side: stamp a fresh task.
#[inline]
pub fn init_task<B: TaskBuf>(buf: &mut B, seq: u64) {
    let w = buf.words_mut();
    for (i, word) in w[..TASK_WORDS].iter_mut().enumerate() {
        *word = seq.wrapping_add(i as u64);
    }
    w[SEQ] = seq;
}

/// Worker side: read and update every word once, then burn the grain.
#[inline]
pub fn work_task<B: TaskBuf>(buf: &mut B, spin_iterations: u64) {
    for word in &mut buf.words_mut()[..TASK_WORDS] {
        *word = word.wrapping_add(1);
    }
    if spin_iterations > 0 {
        std::hint::black_box(spin(spin_iterations));
    }
}

/// Collector-side bookkeeping: every sequence number exactly once, every
/// word updated exactly once.
#[derive(Debug, Clone)]
pub struct Checker {
    seen: Vec<bool>,
    pub received: u64,
    pub bad: u64,
}

impl Checker {
    pub fn new(n_tasks: u64) -> Self {
        Checker {
            seen: vec![false; n_tasks as usize],
            received: 0,
            bad: 0,
        }
    }

    #[inline]
    pub fn check<B: TaskBuf>(&mut self, buf: &B) {
        self.received += 1;
        let w = buf.words();
        let seq = w[SEQ];
        let words_ok = w[..TASK_WORDS]
            .iter()
            .enumerate()
            .all(|(i, &x)| x == seq.wrapping_add(i as u64 + 1));
        match self.seen.get_mut(seq as usize) {
            Some(s) if !*s && words_ok => *s = true,
            _ => self.bad += 1,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.received == self.seen.len() as u64
    }

    pub fn verdict(&self) -> Result<(), BenchError> {
        let expected = self.seen.len() as u64;
        if self.bad > 0 || self.received != expected {
            return Err(BenchError::Integrity(format!(
                "collector received {} of {expected} tasks, {} failed verification",
                self.received, self.bad
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checker_accepts_a_processed_task_once() {
        let mut c = Checker::new(2);
        let mut t = SystemAlloc.acquire();
        init_task(&mut t, 1);
        work_task(&mut t, 0);
        c.check(&t);
        assert!(!c.is_complete());
        c.check(&t);
        assert_eq!(c.bad, 1);
        assert!(c.verdict().is_err());
    }

    #[test]
    fn checker_rejects_unprocessed_or_double_processed() {
        let mut c = Checker::new(2);
        let mut t = SystemAlloc.acquire();
        init_task(&mut t, 0);
        c.check(&t);
        init_task(&mut t, 1);
        work_task(&mut t, 0);
        work_task(&mut t, 0);
        c.check(&t);
        assert_eq!(c.bad, 2);
    }

    #[test]
    fn pool_tasks_round_trip() {
        let (mut a, mut f) = pool_pair(2).unwrap();
        let mut c = Checker::new(3);
        for seq in 0..3 {
            let mut t = a.acquire();
            init_task(&mut t, seq);
            work_task(&mut t, 10);
            c.check(&t);
            f.release(t);
        }
        assert!(c.verdict().is_ok());
    }
}
