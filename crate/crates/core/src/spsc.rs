//! Bounded wait-free single-producer/single-consumer ring buffer.
//!
//! This is the only primitive channel in the crate. Every other queue shape
//! (fan-out, fan-in, many-to-many) is a composition of these rings with an
//! active thread in the middle.
//!
//! The layout follows the FastForward idea: every slot carries its own
//! full/empty flag, so the producer only ever looks at the slot it is about
//! to write and the consumer only at the slot it is about to read. Neither
//! side reads the other side's index on the hot path. `head` and `tail` are
//! still published (plain stores, one writer each) so that [`approx_len`]
//! can be answered from either role.
//!
//! There are no atomic read-modify-write operations anywhere in this file.
//!
//! [`approx_len`]: Producer::approx_len

use std::cell::UnsafeCell;
use std::fmt;
use std::mem::MaybeUninit;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;

use crate::error::Error;

/// Pads and aligns a value to a cache line.
#[cfg_attr(not(feature = "cache-line-128"), repr(align(64)))]
#[cfg_attr(feature = "cache-line-128", repr(align(128)))]
#[derive(Default)]
pub struct CachePadded<T>(pub T);

impl<T> std::ops::Deref for CachePadded<T> {
    type Target = T;
    fn deref(&self) -> &T {
        &self.0
    }
}

struct Slot<T> {
    full: AtomicBool,
    value: UnsafeCell<MaybeUninit<T>>,
}

struct Ring<T> {
    /// Items popped so far. Written by the consumer only.
    head: CachePadded<AtomicUsize>,
    /// Items pushed so far. Written by the producer only.
    tail: CachePadded<AtomicUsize>,
    slots: Box<[Slot<T>]>,
    producer_gone: AtomicBool,
    consumer_gone: AtomicBool,
}

// SAFETY: a slot's value is written only by the producer while `full` is
// false and read only by the consumer while `full` is true; the flag's
// release/acquire pair hands the value across threads.
unsafe impl<T: Send> Send for Ring<T> {}
unsafe impl<T: Send> Sync for Ring<T> {}

impl<T> Ring<T> {
    fn occupancy(&self) -> usize {
        let cap = self.slots.len();
        // A stable head around the tail read gives an exact snapshot of the
        // occupancy at the instant tail was loaded.
        for _ in 0..4 {
            let h1 = self.head.load(Ordering::Acquire);
            let t = self.tail.load(Ordering::Acquire);
            let h2 = self.head.load(Ordering::Acquire);
            if h1 == h2 {
                return t.wrapping_sub(h1).min(cap);
            }
        }
        let t = self.tail.load(Ordering::Acquire);
        let h = self.head.load(Ordering::Acquire);
        t.saturating_sub(h).min(cap)
    }
}

impl<T> Drop for Ring<T> {
    fn drop(&mut self) {
        for slot in self.slots.iter_mut() {
            if *slot.full.get_mut() {
                // SAFETY: full slots hold an initialized value nobody popped.
                unsafe { slot.value.get_mut().assume_init_drop() };
            }
        }
    }
}

/// Constructor namespace for SPSC rings.
pub struct RingBuffer;

impl RingBuffer {
    /// Creates a ring holding at most `capacity` un-popped items and returns
    /// its two endpoints.
    #[allow(clippy::new_ret_no_self)]
    pub fn new<T: Send>(capacity: usize) -> Result<(Producer<T>, Consumer<T>), Error> {
        if capacity == 0 {
            return Err(Error::ZeroCapacity);
        }
        let slots = (0..capacity)
            .map(|_| Slot {
                full: AtomicBool::new(false),
                value: UnsafeCell::new(MaybeUninit::uninit()),
            })
            .collect::<Vec<_>>()
            .into_boxed_slice();
        let ring = Arc::new(Ring {
            head: CachePadded(AtomicUsize::new(0)),
            tail: CachePadded(AtomicUsize::new(0)),
            slots,
            producer_gone: AtomicBool::new(false),
            consumer_gone: AtomicBool::new(false),
        });
        let producer = Producer {
            ring: Arc::clone(&ring),
            pos: 0,
            pushed: 0,
        };
        let consumer = Consumer {
            ring,
            pos: 0,
            popped: 0,
        };
        Ok((producer, consumer))
    }
}

/// The write end of a ring. There is exactly one per ring.
pub struct Producer<T> {
    ring: Arc<Ring<T>>,
    pos: usize,
    pushed: usize,
}

/// The read end of a ring. There is exactly one per ring.
pub struct Consumer<T> {
    ring: Arc<Ring<T>>,
    pos: usize,
    popped: usize,
}

impl<T: Send> Producer<T> {
    /// Enqueues `item`, or hands it back if the ring is full.
    #[inline]
    pub fn push(&mut self, item: T) -> Result<(), Full<T>> {
        let slot = &self.ring.slots[self.pos];
        if slot.full.load(Ordering::Acquire) {
            return Err(Full(item));
        }
        // SAFETY: the slot is empty, so the consumer will not touch it until
        // the flag below is published.
        unsafe { (*slot.value.get()).write(item) };
        slot.full.store(true, Ordering::Release);
        self.pos += 1;
        if self.pos == self.ring.slots.len() {
            self.pos = 0;
        }
        self.pushed += 1;
        self.ring.tail.store(self.pushed, Ordering::Release);
        Ok(())
    }

    /// Whether the next push would report `Full`.
    #[inline]
    pub fn is_full(&self) -> bool {
        self.ring.slots[self.pos].full.load(Ordering::Acquire)
    }

    pub fn capacity(&self) -> usize {
        self.ring.slots.len()
    }

    /// Occupancy as last observed; exact when the ring is quiescent.
    #[inline]
    pub fn approx_len(&self) -> usize {
        self.ring.occupancy()
    }

    /// True once the consumer endpoint has been dropped.
    pub fn is_abandoned(&self) -> bool {
        self.ring.consumer_gone.load(Ordering::Acquire)
    }

    /// A handle that can read the occupancy from any thread.
    pub fn observer(&self) -> Observer<T> {
        Observer {
            ring: Arc::clone(&self.ring),
        }
    }
}

impl<T: Send> Consumer<T> {
    /// Dequeues the oldest item, or `None` when the ring is empty.
    #[inline]
    pub fn pop(&mut self) -> Option<T> {
        let slot = &self.ring.slots[self.pos];
        if !slot.full.load(Ordering::Acquire) {
            return None;
        }
        // SAFETY: the acquire load above observed the producer's release
        // store, so the value is initialized and no longer written.
        let item = unsafe { (*slot.value.get()).assume_init_read() };
        slot.full.store(false, Ordering::Release);
        self.pos += 1;
        if self.pos == self.ring.slots.len() {
            self.pos = 0;
        }
        self.popped += 1;
        self.ring.head.store(self.popped, Ordering::Release);
        Some(item)
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        !self.ring.slots[self.pos].full.load(Ordering::Acquire)
    }

    pub fn capacity(&self) -> usize {
        self.ring.slots.len()
    }

    #[inline]
    pub fn approx_len(&self) -> usize {
        self.ring.occupancy()
    }

    /// True once the producer endpoint has been dropped. Items it pushed
    /// before that are still delivered.
    pub fn is_abandoned(&self) -> bool {
        self.ring.producer_gone.load(Ordering::Acquire)
    }

    pub fn observer(&self) -> Observer<T> {
        Observer {
            ring: Arc::clone(&self.ring),
        }
    }
}

impl<T> Drop for Producer<T> {
    fn drop(&mut self) {
        self.ring.producer_gone.store(true, Ordering::Release);
    }
}

impl<T> Drop for Consumer<T> {
    fn drop(&mut self) {
        self.ring.consumer_gone.store(true, Ordering::Release);
    }
}

/// Read-only occupancy view of a ring, usable from any thread.
pub struct Observer<T> {
    ring: Arc<Ring<T>>,
}

impl<T> Clone for Observer<T> {
    fn clone(&self) -> Self {
        Observer {
            ring: Arc::clone(&self.ring),
        }
    }
}

impl<T> Observer<T> {
    pub fn approx_len(&self) -> usize {
        self.ring.occupancy()
    }

    pub fn capacity(&self) -> usize {
        self.ring.slots.len()
    }
}

/// Returned by [`Producer::push`] when the ring has no free slot.
pub struct Full<T>(pub T);

impl<T> Full<T> {
    pub fn into_inner(self) -> T {
        self.0
    }
}

impl<T> fmt::Debug for Full<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Full(..)")
    }
}

impl<T> fmt::Debug for Producer<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Producer")
            .field("capacity", &self.ring.slots.len())
            .field("pushed", &self.pushed)
            .finish()
    }
}

impl<T> fmt::Debug for Consumer<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Consumer")
            .field("capacity", &self.ring.slots.len())
            .field("popped", &self.popped)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::VecDeque;

    #[test]
    fn zero_capacity_is_rejected() {
        assert!(matches!(RingBuffer::new::<u32>(0), Err(Error::ZeroCapacity)));
    }

    #[test]
    fn new_ring_is_empty() {
        let (p, mut c) = RingBuffer::new::<u32>(8).unwrap();
        assert_eq!(p.approx_len(), 0);
        assert_eq!(c.approx_len(), 0);
        assert!(c.pop().is_none());
    }

    #[test]
    fn capacity_one_takes_exactly_one() {
        let (mut p, mut c) = RingBuffer::new(1).unwrap();
        assert!(p.push(1u32).is_ok());
        assert_eq!(p.push(2).unwrap_err().into_inner(), 2);
        assert_eq!(c.pop(), Some(1));
        assert!(p.push(3).is_ok());
        assert_eq!(c.pop(), Some(3));
    }

    #[test]
    fn saturation_reports_full_at_requested_capacity() {
        for cap in [1, 3, 5, 8, 100] {
            let (mut p, mut c) = RingBuffer::new(cap).unwrap();
            for i in 0..cap {
                p.push(i).unwrap();
            }
            assert!(p.is_full());
            assert!(p.push(cap).is_err());
            assert_eq!(p.approx_len(), cap);
            assert_eq!(c.pop(), Some(0));
            assert!(p.push(cap).is_ok());
        }
    }

    #[test]
    fn fifo_and_drain() {
        let (mut p, mut c) = RingBuffer::new(4).unwrap();
        p.push(1).unwrap();
        p.push(2).unwrap();
        p.push(3).unwrap();
        assert_eq!(c.approx_len(), 3);
        assert_eq!(c.pop(), Some(1));
        assert_eq!(c.pop(), Some(2));
        assert_eq!(c.pop(), Some(3));
        assert_eq!(c.pop(), None);
        assert_eq!(p.approx_len(), 0);
    }

    #[test]
    fn unpopped_items_are_dropped_with_the_ring() {
        let marker = Arc::new(());
        {
            let (mut p, _c) = RingBuffer::new(4).unwrap();
            p.push(Arc::clone(&marker)).unwrap();
            p.push(Arc::clone(&marker)).unwrap();
            assert_eq!(Arc::strong_count(&marker), 3);
        }
        assert_eq!(Arc::strong_count(&marker), 1);
    }

    #[derive(Debug, Clone)]
    enum Op {
        Push(u16),
        Pop,
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![any::<u16>().prop_map(Op::Push), Just(Op::Pop)]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn matches_a_sequential_fifo(cap in 1usize..16, ops in prop::collection::vec(op(), 0..64)) {
            let (mut p, mut c) = RingBuffer::new(cap).unwrap();
            let mut model = VecDeque::new();
            for op in ops {
                match op {
                    Op::Push(v) => {
                        let r = p.push(v);
                        if model.len() == cap {
                            prop_assert!(r.is_err());
                        } else {
                            prop_assert!(r.is_ok());
                            model.push_back(v);
                        }
                    }
                    Op::Pop => prop_assert_eq!(c.pop(), model.pop_front()),
                }
                prop_assert_eq!(p.approx_len(), model.len());
                prop_assert_eq!(c.approx_len(), model.len());
            }
        }
    }
}
