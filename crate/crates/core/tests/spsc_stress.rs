use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use streamfarm::backoff::Backoff;
use streamfarm::graph::default_spin_budget;
use streamfarm::spsc::RingBuffer;

fn transfer(n: usize, capacity: usize) {
    let (mut tx, mut rx) = RingBuffer::new::<usize>(capacity).unwrap();
    let producer = thread::spawn(move || {
        let mut backoff = Backoff::new(default_spin_budget());
        for i in 0..n {
            let mut item = i;
            while let Err(full) = tx.push(item) {
                item = full.into_inner();
                backoff.snooze();
            }
            backoff.reset();
        }
    });
    let mut backoff = Backoff::new(default_spin_budget());
    let mut expect = 0;
    let mut slowest_wait = Duration::ZERO;
    let mut since = Instant::now();
    while expect < n {
        match rx.pop() {
            Some(v) => {
                assert_eq!(v, expect, "out of order or lost item");
                expect += 1;
                backoff.reset();
                slowest_wait = slowest_wait.max(since.elapsed());
                since = Instant::now();
            }
            None => backoff.snooze(),
        }
    }
    producer.join().unwrap();
    assert!(rx.pop().is_none());
    // Watchdog on progress: no single item should take anywhere near this.
    assert!(slowest_wait < Duration::from_secs(5), "stalled for {slowest_wait:?}");
}

#[test]
fn million_tokens_in_order() {
    for cap in [1, 2, 512] {
        transfer(1_000_000, cap);
    }
}

#[test]
fn items_published_before_push_are_visible_after_pop() {
    let (mut tx, mut rx) = RingBuffer::new::<Box<[u64; 10]>>(8).unwrap();
    let h = thread::spawn(move || {
        for i in 0..100_000u64 {
            let mut item = Box::new([i; 10]);
            while let Err(full) = tx.push(item) {
                item = full.into_inner();
                thread::yield_now();
            }
        }
    });
    let mut got = 0u64;
    while got < 100_000 {
        if let Some(b) = rx.pop() {
            assert!(b.iter().all(|&w| w == got));
            got += 1;
        } else {
            thread::yield_now();
        }
    }
    h.join().unwrap();
}

// With one side paused the true occupancy moves monotonically, so the
// test can bracket it with counters read before and after the call.
#[test]
fn approx_len_is_bracketed_while_producing() {
    let cap = 100_000;
    let (mut tx, rx) = RingBuffer::new::<u32>(cap).unwrap();
    let pushed = Arc::new(AtomicUsize::new(0));
    let done = Arc::new(AtomicBool::new(false));
    let obs = tx.observer();
    let (p, d) = (Arc::clone(&pushed), Arc::clone(&done));
    let producer = thread::spawn(move || {
        for i in 0..cap {
            tx.push(i as u32).unwrap();
            p.store(i + 1, Ordering::Release);
        }
        d.store(true, Ordering::Release);
        tx
    });
    let mut checks = 0;
    while !done.load(Ordering::Acquire) {
        let lo = pushed.load(Ordering::Acquire);
        let v = obs.approx_len();
        let hi = pushed.load(Ordering::Acquire);
        // `pushed` trails the real tail by at most one item.
        assert!(lo <= v && v <= hi + 1, "{lo} <= {v} <= {hi}+1");
        checks += 1;
        thread::yield_now();
    }
    let _tx = producer.join().unwrap();
    assert!(checks > 0);
    assert_eq!(rx.approx_len(), cap);
}

#[test]
fn approx_len_is_bracketed_while_consuming() {
    let cap = 100_000;
    let (mut tx, mut rx) = RingBuffer::new::<u32>(cap).unwrap();
    for i in 0..cap {
        tx.push(i as u32).unwrap();
    }
    let popped = Arc::new(AtomicUsize::new(0));
    let done = Arc::new(AtomicBool::new(false));
    let (p, d) = (Arc::clone(&popped), Arc::clone(&done));
    let consumer = thread::spawn(move || {
        for i in 0..cap {
            assert_eq!(rx.pop(), Some(i as u32));
            p.store(i + 1, Ordering::Release);
        }
        d.store(true, Ordering::Release);
    });
    while !done.load(Ordering::Acquire) {
        let before = popped.load(Ordering::Acquire);
        let v = tx.approx_len();
        let after = popped.load(Ordering::Acquire);
        assert!(cap - (after + 1).min(cap) <= v && v <= cap - before);
        thread::yield_now();
    }
    consumer.join().unwrap();
    assert_eq!(tx.approx_len(), 0);
}
