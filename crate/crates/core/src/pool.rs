//! Fixed-size buffer recycler for the one-allocator / many-releasers pattern.
//!
//! A [`SlabPool`] owns an arena of equally sized buffers. Exactly one thread
//! (whoever holds the pool) acquires; each releasing thread owns a
//! [`Releaser`] whose dedicated SPSC ring carries buffers back. Nothing here
//! takes a lock or needs a read-modify-write.
//!
//! In [`DrainMode::Lazy`] the return rings are emptied by `acquire` itself
//! when the free list runs dry. [`DrainMode::Background`] adds a drainer
//! thread that merges the return rings into one refill ring.

use std::alloc::{self, Layout};
use std::fmt;
use std::ptr::NonNull;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use crate::backoff::Backoff;
use crate::error::{Error, Result};
use crate::graph::default_spin_budget;
use crate::spsc::{Consumer, Producer, RingBuffer};

const SLAB_ALIGN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DrainMode {
    #[default]
    Lazy,
    Background,
}

/// A buffer on loan from a [`SlabPool`]. Its address never changes across
/// recycles.
pub struct Buffer {
    ptr: NonNull<u8>,
    len: usize,
    index: u32,
    /// Arena base of the owning pool, for misuse checks.
    pool: usize,
}

// SAFETY: a Buffer is a unique handle to its slab; ownership moves with it.
unsafe impl Send for Buffer {}

impl Buffer {
    pub fn index(&self) -> usize {
        self.index as usize
    }

    pub fn addr(&self) -> usize {
        self.ptr.as_ptr() as usize
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// The buffer viewed as 64-bit words (slabs are 64-byte aligned).
    pub fn words(&self) -> &[u64] {
        // SAFETY: aligned, in bounds, uniquely owned.
        unsafe { std::slice::from_raw_parts(self.ptr.as_ptr().cast(), self.len / 8) }
    }

    pub fn words_mut(&mut self) -> &mut [u64] {
        // SAFETY: as above, and `&mut self` guarantees exclusivity.
        unsafe { std::slice::from_raw_parts_mut(self.ptr.as_ptr().cast(), self.len / 8) }
    }
}

impl std::ops::Deref for Buffer {
    type Target = [u8];
    fn deref(&self) -> &[u8] {
        // SAFETY: the slab is `len` bytes and owned by this handle.
        unsafe { std::slice::from_raw_parts(self.ptr.as_ptr(), self.len) }
    }
}

impl std::ops::DerefMut for Buffer {
    fn deref_mut(&mut self) -> &mut [u8] {
        // SAFETY: as above.
        unsafe { std::slice::from_raw_parts_mut(self.ptr.as_ptr(), self.len) }
    }
}

impl fmt::Debug for Buffer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Buffer")
            .field("index", &self.index)
            .field("len", &self.len)
            .finish()
    }
}

/// Returned by [`SlabPool::acquire`] when every buffer is out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Exhausted;

impl fmt::Display for Exhausted {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("buffer pool exhausted")
    }
}

impl std::error::Error for Exhausted {}

struct Arena {
    base: NonNull<u8>,
    layout: Layout,
    stride: usize,
}

/// Where released buffers come back from.
enum Returns {
    Lazy(Vec<Consumer<Buffer>>),
    Background {
        refill: Consumer<Buffer>,
        stop: Arc<AtomicBool>,
        drainer: Option<JoinHandle<()>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolStats {
    pub total: usize,
    pub free: usize,
    /// Acquired and not yet seen back by the pool. Buffers sitting in a
    /// return ring still count.
    pub in_flight: usize,
    pub acquired: u64,
    pub recovered: u64,
}

/// The acquiring side of a buffer pool.
pub struct SlabPool {
    arena: Arena,
    buffer_size: usize,
    total: usize,
    id: usize,
    free: Vec<u32>,
    returns: Returns,
    acquired: u64,
    recovered: u64,
    /// Debug-build record of which buffers are on loan.
    loaned: Vec<bool>,
}

// SAFETY: the arena pointer is owned by the pool; buffers handed out are
// disjoint slabs.
unsafe impl Send for SlabPool {}

/// The releasing side bound to one thread.
pub struct Releaser {
    id: usize,
    tx: Producer<Buffer>,
    spin_budget: u32,
}

impl Releaser {
    pub fn id(&self) -> usize {
        self.id
    }

    /// Sends `buffer` back to its pool. Waits (spin, then yield) if the
    /// return ring is full; never drops the buffer.
    pub fn release(&mut self, buffer: Buffer) {
        let mut backoff = Backoff::new(self.spin_budget);
        let mut buffer = buffer;
        loop {
            match self.tx.push(buffer) {
                Ok(()) => return,
                Err(full) => {
                    buffer = full.into_inner();
                    if self.tx.is_abandoned() {
                        // Pool is gone; its arena was leaked or the buffer
                        // was never returned, either way nothing to do.
                        return;
                    }
                    backoff.snooze();
                }
            }
        }
    }
}

impl fmt::Debug for Releaser {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Releaser").field("id", &self.id).finish()
    }
}

impl SlabPool {
    /// Pre-allocates `total_buffers` buffers of `buffer_size` bytes in one
    /// arena and returns the pool with `n_releasers` release handles.
    pub fn new(buffer_size: usize, total_buffers: usize, n_releasers: usize) -> Result<(SlabPool, Vec<Releaser>)> {
        Self::with_mode(buffer_size, total_buffers, n_releasers, DrainMode::Lazy)
    }

    pub fn with_mode(
        buffer_size: usize,
        total_buffers: usize,
        n_releasers: usize,
        mode: DrainMode,
    ) -> Result<(SlabPool, Vec<Releaser>)> {
        for (v, what) in [
            (buffer_size, "buffer_size"),
            (total_buffers, "total_buffers"),
            (n_releasers, "n_releasers"),
        ] {
            if v == 0 {
                return Err(Error::ZeroCount { what });
            }
        }
        if total_buffers > u32::MAX as usize {
            return Err(Error::Config("too many buffers".into()));
        }
        let stride = buffer_size.div_ceil(SLAB_ALIGN) * SLAB_ALIGN;
        let size = stride
            .checked_mul(total_buffers)
            .ok_or_else(|| Error::Config("arena size overflows".into()))?;
        let layout = Layout::from_size_align(size, SLAB_ALIGN)
            .map_err(|e| Error::Config(format!("arena layout: {e}")))?;
        // SAFETY: layout has non-zero size.
        let base = NonNull::new(unsafe { alloc::alloc_zeroed(layout) })
            .ok_or_else(|| Error::Config(format!("arena allocation of {size} bytes failed")))?;

        let spin_budget = default_spin_budget();
        let mut releasers = Vec::with_capacity(n_releasers);
        let mut consumers = Vec::with_capacity(n_releasers);
        for id in 0..n_releasers {
            // One slot per buffer, so a release can never wait forever.
            let (tx, rx) = RingBuffer::new(total_buffers)?;
            releasers.push(Releaser { id, tx, spin_budget });
            consumers.push(rx);
        }
        let returns = match mode {
            DrainMode::Lazy => Returns::Lazy(consumers),
            DrainMode::Background => {
                let (refill_tx, refill) = RingBuffer::new(total_buffers)?;
                let stop = Arc::new(AtomicBool::new(false));
                let drainer = spawn_drainer(consumers, refill_tx, Arc::clone(&stop), spin_budget)?;
                Returns::Background {
                    refill,
                    stop,
                    drainer: Some(drainer),
                }
            }
        };
        let pool = SlabPool {
            arena: Arena { base, layout, stride },
            buffer_size,
            total: total_buffers,
            id: base.as_ptr() as usize,
            // Popped from the back, so buffer 0 is handed out first.
            free: (0..total_buffers as u32).rev().collect(),
            returns,
            acquired: 0,
            recovered: 0,
            loaned: if cfg!(debug_assertions) {
                vec![false; total_buffers]
            } else {
                Vec::new()
            },
        };
        Ok((pool, releasers))
    }

    pub fn buffer_size(&self) -> usize {
        self.buffer_size
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// Hands out a free buffer, draining the return rings first if the free
    /// list is empty.
    pub fn acquire(&mut self) -> Result<Buffer, Exhausted> {
        if self.free.is_empty() {
            self.drain();
        }
        let index = self.free.pop().ok_or(Exhausted)?;
        self.acquired += 1;
        if cfg!(debug_assertions) {
            self.loaned[index as usize] = true;
        }
        // SAFETY: index < total, so the slab lies inside the arena.
        let ptr = unsafe { self.arena.base.add(index as usize * self.arena.stride) };
        Ok(Buffer {
            ptr,
            len: self.buffer_size,
            index,
            pool: self.id,
        })
    }

    /// Moves every buffer waiting in a return ring onto the free list.
    pub fn drain(&mut self) -> usize {
        let mut got = Vec::new();
        match &mut self.returns {
            Returns::Lazy(rings) => {
                for rx in rings.iter_mut() {
                    while let Some(b) = rx.pop() {
                        got.push(b);
                    }
                }
            }
            Returns::Background { refill, .. } => {
                while let Some(b) = refill.pop() {
                    got.push(b);
                }
            }
        }
        let n = got.len();
        for b in got {
            self.take_back(b);
        }
        n
    }

    fn take_back(&mut self, b: Buffer) {
        if cfg!(debug_assertions) {
            assert_eq!(b.pool, self.id, "buffer {} released to a foreign pool", b.index);
            let slot = &mut self.loaned[b.index as usize];
            assert!(*slot, "buffer {} released twice", b.index);
            *slot = false;
        }
        self.free.push(b.index);
        self.recovered += 1;
    }

    pub fn stats(&self) -> PoolStats {
        PoolStats {
            total: self.total,
            free: self.free.len(),
            in_flight: (self.acquired - self.recovered) as usize,
            acquired: self.acquired,
            recovered: self.recovered,
        }
    }
}

fn spawn_drainer(
    mut rings: Vec<Consumer<Buffer>>,
    mut refill: Producer<Buffer>,
    stop: Arc<AtomicBool>,
    spin_budget: u32,
) -> Result<JoinHandle<()>> {
    let handle = thread::Builder::new()
        .name("pool-drainer".into())
        .spawn(move || {
            let mut backoff = Backoff::new(spin_budget);
            loop {
                let mut moved = false;
                for rx in rings.iter_mut() {
                    while let Some(b) = rx.pop() {
                        moved = true;
                        // The refill ring has one slot per buffer.
                        let mut b = b;
                        while let Err(full) = refill.push(b) {
                            b = full.into_inner();
                            backoff.snooze();
                        }
                    }
                }
                if moved {
                    backoff.reset();
                } else if stop.load(Ordering::Acquire) {
                    return;
                } else {
                    backoff.snooze();
                }
            }
        })?;
    Ok(handle)
}

impl Drop for SlabPool {
    fn drop(&mut self) {
        if let Returns::Background { stop, drainer, .. } = &mut self.returns {
            stop.store(true, Ordering::Release);
            if let Some(h) = drainer.take() {
                let _ = h.join();
            }
        }
        self.drain();
        let outstanding = self.acquired - self.recovered;
        if outstanding > 0 {
            // Live buffers still point into the arena.
            log::warn!("dropping buffer pool with {outstanding} buffer(s) on loan; leaking its arena");
            return;
        }
        // SAFETY: allocated in `with_mode` with this layout; no buffer is out.
        unsafe { alloc::dealloc(self.arena.base.as_ptr(), self.arena.layout) };
    }
}

impl fmt::Debug for SlabPool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SlabPool")
            .field("buffer_size", &self.buffer_size)
            .field("stats", &self.stats())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn fresh_pool_is_all_free() {
        let (pool, rel) = SlabPool::new(64, 16, 2).unwrap();
        assert_eq!(rel.len(), 2);
        let s = pool.stats();
        assert_eq!((s.total, s.free, s.in_flight), (16, 16, 0));
    }

    #[test]
    fn zero_parameters_are_rejected() {
        assert!(SlabPool::new(0, 1, 1).is_err());
        assert!(SlabPool::new(1, 0, 1).is_err());
        assert!(SlabPool::new(1, 1, 0).is_err());
    }

    #[test]
    fn minimal_pool_exhausts() {
        let (mut pool, mut rel) = SlabPool::new(64, 1, 1).unwrap();
        let b = pool.acquire().unwrap();
        assert_eq!(pool.acquire().unwrap_err(), Exhausted);
        rel[0].release(b);
        assert!(pool.acquire().is_ok());
    }

    #[test]
    fn sixteen_then_exhausted() {
        let (mut pool, _rel) = SlabPool::new(64, 16, 2).unwrap();
        let bufs: Vec<_> = (0..16).map(|_| pool.acquire().unwrap()).collect();
        assert!(pool.acquire().is_err());
        let addrs: HashSet<_> = bufs.iter().map(Buffer::addr).collect();
        assert_eq!(addrs.len(), 16);
        assert!(bufs.iter().all(|b| b.addr() % SLAB_ALIGN == 0 && b.len() == 64));
        assert_eq!(pool.stats().in_flight, 16);
        std::mem::forget(bufs);
    }

    #[test]
    fn recycled_buffer_keeps_its_address() {
        let (mut pool, mut rel) = SlabPool::new(80, 1, 1).unwrap();
        let mut b = pool.acquire().unwrap();
        let addr = b.addr();
        b.words_mut()[9] = 42;
        rel[0].release(b);
        let b = pool.acquire().unwrap();
        assert_eq!(b.addr(), addr);
        assert_eq!(b.words()[9], 42);
        rel[0].release(b);
        pool.drain();
        assert_eq!(pool.stats().free, 1);
    }

    #[test]
    fn background_drain_recovers_buffers() {
        let (mut pool, mut rel) = SlabPool::with_mode(32, 4, 2, DrainMode::Background).unwrap();
        for _ in 0..1000 {
            let b = pool.acquire();
            let b = match b {
                Ok(b) => b,
                Err(Exhausted) => {
                    std::thread::yield_now();
                    continue;
                }
            };
            rel[b.index() % 2].release(b);
        }
        let deadline = std::time::Instant::now() + std::time::Duration::from_secs(5);
        while pool.stats().in_flight > 0 && std::time::Instant::now() < deadline {
            pool.drain();
            std::thread::yield_now();
        }
        assert_eq!(pool.stats().free, 4);
    }

    #[cfg(debug_assertions)]
    #[test]
    #[should_panic(expected = "released twice")]
    fn double_release_is_caught() {
        let (mut pool, mut rel) = SlabPool::new(64, 2, 1).unwrap();
        let b = pool.acquire().unwrap();
        let forged = Buffer {
            ptr: b.ptr,
            len: b.len,
            index: b.index,
            pool: b.pool,
        };
        rel[0].release(b);
        rel[0].release(forged);
        pool.drain();
    }

    #[cfg(debug_assertions)]
    #[test]
    #[should_panic(expected = "foreign pool")]
    fn foreign_buffer_is_caught() {
        let (mut a, _ra) = SlabPool::new(64, 1, 1).unwrap();
        let (mut b, mut rb) = SlabPool::new(64, 1, 1).unwrap();
        let _mine = b.acquire().unwrap();
        let theirs = a.acquire().unwrap();
        rb[0].release(theirs);
        b.drain();
    }
}
