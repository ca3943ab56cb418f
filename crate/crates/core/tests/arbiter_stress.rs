use std::collections::VecDeque;
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use streamfarm::arbiter::{make_mpmc, make_mpsc, make_spmc, GatherPolicy, MpmcQueue, MpscQueue, SchedulingPolicy, SpmcQueue};
use streamfarm::graph::Endpoint;

fn spin_for(d: Duration) {
    let t = Instant::now();
    while t.elapsed() < d {
        std::hint::spin_loop();
    }
}

#[test]
fn on_demand_starves_the_slow_consumer() {
    const N: u64 = 100_000;
    let SpmcQueue {
        mut input,
        outputs,
        running,
    } = make_spmc(4, 64, SchedulingPolicy::OnDemand).unwrap();
    let consumers: Vec<_> = outputs
        .into_iter()
        .enumerate()
        .map(|(i, out)| {
            thread::spawn(move || {
                let mut n = 0u64;
                for _ in out {
                    if i == 0 {
                        spin_for(Duration::from_micros(50));
                    }
                    n += 1;
                }
                n
            })
        })
        .collect();
    for i in 0..N {
        input.send(i).unwrap();
    }
    input.close();
    let counts: Vec<u64> = consumers.into_iter().map(|h| h.join().unwrap()).collect();
    running.wait().unwrap();
    assert_eq!(counts.iter().sum::<u64>(), N);
    for &fast in &counts[1..] {
        assert!(counts[0] < fast, "slow consumer got {counts:?}");
    }
}

#[test]
fn mpsc_preserves_union_and_per_origin_order() {
    const PER: u64 = 100_000;
    let MpscQueue {
        inputs,
        output,
        running,
    } = make_mpsc(4, 128, GatherPolicy::FirstAvailable).unwrap();
    let producers: Vec<_> = inputs
        .into_iter()
        .enumerate()
        .map(|(origin, mut inlet)| {
            thread::spawn(move || {
                for seq in 0..PER {
                    inlet.send((origin as u64, seq)).unwrap();
                }
            })
        })
        .collect();
    let mut next = [0u64; 4];
    let mut total = 0;
    for (origin, seq) in output {
        assert_eq!(seq, next[origin as usize], "origin {origin} reordered");
        next[origin as usize] += 1;
        total += 1;
    }
    for p in producers {
        p.join().unwrap();
    }
    running.wait().unwrap();
    assert_eq!(total, 4 * PER);
    assert_eq!(next, [PER; 4]);
}

#[test]
fn mpmc_one_by_one_is_an_ordered_relay() {
    let MpmcQueue {
        mut inputs,
        mut outputs,
        running,
    } = make_mpmc(1, 1, 4, SchedulingPolicy::RoundRobin).unwrap();
    let mut inlet = inputs.pop().unwrap();
    let feeder = thread::spawn(move || {
        for i in 0..10_000u32 {
            inlet.send(i).unwrap();
        }
    });
    let got: Vec<u32> = outputs.pop().unwrap().collect();
    feeder.join().unwrap();
    running.wait().unwrap();
    assert_eq!(got, (0..10_000).collect::<Vec<_>>());
}

/// Runs `producers x consumers` composed MPMC traffic and checks the
/// multiset and per-origin order at every consumer.
fn mpmc_roundtrip(producers: usize, consumers: usize, per_producer: u64, policy: SchedulingPolicy<(u32, u64)>) {
    let MpmcQueue {
        inputs,
        outputs,
        running,
    } = make_mpmc(producers, consumers, 256, policy).unwrap();
    let feeders: Vec<_> = inputs
        .into_iter()
        .enumerate()
        .map(|(origin, mut inlet)| {
            thread::spawn(move || {
                for seq in 0..per_producer {
                    inlet.send((origin as u32, seq)).unwrap();
                }
            })
        })
        .collect();
    let drains: Vec<_> = outputs
        .into_iter()
        .map(|out| {
            thread::spawn(move || {
                let mut last = vec![None::<u64>; producers];
                let mut seen = Vec::new();
                for (origin, seq) in out {
                    let o = origin as usize;
                    assert!(last[o].is_none_or(|l| l < seq), "origin {o} reordered at a consumer");
                    last[o] = Some(seq);
                    seen.push((origin, seq));
                }
                seen
            })
        })
        .collect();
    for f in feeders {
        f.join().unwrap();
    }
    let mut all: Vec<(u32, u64)> = drains.into_iter().flat_map(|d| d.join().unwrap()).collect();
    running.wait().unwrap();
    all.sort_unstable();
    let expect: Vec<(u32, u64)> = (0..producers as u32)
        .flat_map(|o| (0..per_producer).map(move |s| (o, s)))
        .collect();
    assert_eq!(all.len(), expect.len(), "lost or duplicated items");
    assert!(all == expect, "multiset mismatch");
}

#[test]
fn mpmc_four_by_four_million_items() {
    mpmc_roundtrip(4, 4, 250_000, SchedulingPolicy::RoundRobin);
}

#[test]
fn mpmc_randomized_shapes() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand::rngs::StdRng::seed_from_u64(11);
    for _ in 0..6 {
        let p = rng.random_range(1..=8);
        let c = rng.random_range(1..=8);
        let policy = if rng.random_bool(0.5) {
            SchedulingPolicy::RoundRobin
        } else {
            SchedulingPolicy::OnDemand
        };
        mpmc_roundtrip(p, c, 1_000_000 / p as u64 / 6, policy);
    }
}

#[test]
fn every_internal_ring_has_one_producer_and_one_consumer() {
    let (net, inputs, outputs) = streamfarm::arbiter::mpmc_network::<u64>(
        3,
        5,
        16,
        GatherPolicy::FirstAvailable,
        SchedulingPolicy::RoundRobin,
        Default::default(),
    )
    .unwrap();
    let edges = net.edges();
    assert_eq!(edges.len(), 1 + 3 + 5);
    let internal: Vec<_> = edges
        .iter()
        .filter(|e| e.from != Endpoint::External && e.to != Endpoint::External)
        .collect();
    assert_eq!(internal.len(), 1);
    assert_ne!(internal[0].from, internal[0].to);
    assert_eq!(edges.iter().filter(|e| e.from == Endpoint::External).count(), inputs.len());
    assert_eq!(edges.iter().filter(|e| e.to == Endpoint::External).count(), outputs.len());
    drop((inputs, outputs));
}

/// Bounded blocking queue under one mutex, the baseline the composed queue
/// is compared against.
struct LockedQueue<T> {
    state: Mutex<(VecDeque<T>, usize)>,
    not_empty: Condvar,
    not_full: Condvar,
    cap: usize,
}

impl<T> LockedQueue<T> {
    fn new(cap: usize, producers: usize) -> Self {
        LockedQueue {
            state: Mutex::new((VecDeque::with_capacity(cap), producers)),
            not_empty: Condvar::new(),
            not_full: Condvar::new(),
            cap,
        }
    }
    fn push(&self, v: T) {
        let mut g = self.state.lock().unwrap();
        while g.0.len() == self.cap {
            g = self.not_full.wait(g).unwrap();
        }
        g.0.push_back(v);
        self.not_empty.notify_one();
    }
    fn close(&self) {
        let mut g = self.state.lock().unwrap();
        g.1 -= 1;
        self.not_empty.notify_all();
    }
    fn pop(&self) -> Option<T> {
        let mut g = self.state.lock().unwrap();
        loop {
            if let Some(v) = g.0.pop_front() {
                self.not_full.notify_one();
                return Some(v);
            }
            if g.1 == 0 {
                return None;
            }
            g = self.not_empty.wait(g).unwrap();
        }
    }
}

fn locked_throughput(p: usize, c: usize, per: u64) -> f64 {
    let q = Arc::new(LockedQueue::new(256, p));
    let t = Instant::now();
    let feeders: Vec<_> = (0..p)
        .map(|_| {
            let q = Arc::clone(&q);
            thread::spawn(move || {
                for i in 0..per {
                    q.push(i);
                }
                q.close();
            })
        })
        .collect();
    let drains: Vec<_> = (0..c)
        .map(|_| {
            let q = Arc::clone(&q);
            thread::spawn(move || {
                let mut n = 0u64;
                while q.pop().is_some() {
                    n += 1;
                }
                n
            })
        })
        .collect();
    feeders.into_iter().for_each(|f| f.join().unwrap());
    let n: u64 = drains.into_iter().map(|d| d.join().unwrap()).sum();
    assert_eq!(n, p as u64 * per);
    n as f64 / t.elapsed().as_secs_f64()
}

fn composed_throughput(p: usize, c: usize, per: u64) -> f64 {
    let MpmcQueue {
        inputs,
        outputs,
        running,
    } = make_mpmc::<u64>(p, c, 256, SchedulingPolicy::RoundRobin).unwrap();
    let t = Instant::now();
    let feeders: Vec<_> = inputs
        .into_iter()
        .map(|mut inlet| {
            thread::spawn(move || {
                for i in 0..per {
                    inlet.send(i).unwrap();
                }
            })
        })
        .collect();
    let drains: Vec<_> = outputs
        .into_iter()
        .map(|out| thread::spawn(move || out.count() as u64))
        .collect();
    feeders.into_iter().for_each(|f| f.join().unwrap());
    let n: u64 = drains.into_iter().map(|d| d.join().unwrap()).sum();
    running.wait().unwrap();
    assert_eq!(n, p as u64 * per);
    n as f64 / t.elapsed().as_secs_f64()
}

#[test]
fn composed_mpmc_outpaces_a_locked_queue_on_word_messages() {
    let (p, c, per) = (2, 2, 500_000);
    let mut composed = Vec::new();
    let mut locked = Vec::new();
    for _ in 0..3 {
        composed.push(composed_throughput(p, c, per));
        locked.push(locked_throughput(p, c, per));
    }
    composed.sort_by(f64::total_cmp);
    locked.sort_by(f64::total_cmp);
    eprintln!("composed {composed:?} items/s, locked {locked:?} items/s");
    assert!(composed[1] >= locked[1], "composed median {} < locked median {}", composed[1], locked[1]);
}
