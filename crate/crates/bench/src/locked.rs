//! Bounded FIFO guarded by one mutex and two condition variables; the
//! baseline the lock-free farm is measured against.

use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};

pub struct LockedQueue<T> {
    state: Mutex<State<T>>,
    not_empty: Condvar,
    not_full: Condvar,
    capacity: usize,
}

struct State<T> {
    items: VecDeque<T>,
    closed: bool,
}

impl<T> LockedQueue<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "capacity must be positive");
        LockedQueue {
            state: Mutex::new(State {
                items: VecDeque::with_capacity(capacity),
                closed: false,
            }),
            not_empty: Condvar::new(),
            not_full: Condvar::new(),
            capacity,
        }
    }

    /// Blocks while full.
    pub fn push(&self, item: T) {
        let mut s = self.state.lock().unwrap();
        while s.items.len() == self.capacity {
            s = self.not_full.wait(s).unwrap();
        }
        s.items.push_back(item);
        drop(s);
        self.not_empty.notify_one();
    }

    /// Blocks while empty; `None` once closed and drained.
    pub fn pop(&self) -> Option<T> {
        let mut s = self.state.lock().unwrap();
        loop {
            if let Some(item) = s.items.pop_front() {
                drop(s);
                self.not_full.notify_one();
                return Some(item);
            }
            if s.closed {
                return None;
            }
            s = self.not_empty.wait(s).unwrap();
        }
    }

    pub fn close(&self) {
        self.state.lock().unwrap().closed = true;
        self.not_empty.notify_all();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn fifo_and_close() {
        let q = LockedQueue::new(2);
        q.push(1);
        q.push(2);
        q.close();
        assert_eq!(q.pop(), Some(1));
        assert_eq!(q.pop(), Some(2));
        assert_eq!(q.pop(), None);
    }

    #[test]
    fn blocking_producer_consumer() {
        let q = Arc::new(LockedQueue::new(1));
        let p = Arc::clone(&q);
        let h = std::thread::spawn(move || {
            for i in 0..10_000u32 {
                p.push(i);
            }
            p.close();
        });
        let mut expect = 0;
        while let Some(x) = q.pop() {
            assert_eq!(x, expect);
            expect += 1;
        }
        h.join().unwrap();
        assert_eq!(expect, 10_000);
    }
}
