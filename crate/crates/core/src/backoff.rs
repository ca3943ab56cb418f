use std::hint;
use std::thread;

/// Spin-then-yield waiting used whenever a ring reports `Full` or `Empty`.
///
/// The first `spin_budget` calls to [`snooze`](Backoff::snooze) busy-wait
/// with a CPU relax hint; every call after that yields the time slice.
#[derive(Debug, Clone)]
pub struct Backoff {
    spins: u32,
    budget: u32,
}

impl Backoff {
    pub fn new(spin_budget: u32) -> Self {
        Backoff {
            spins: 0,
            budget: spin_budget,
        }
    }

    #[inline]
    pub fn snooze(&mut self) {
        if self.spins < self.budget {
            self.spins += 1;
            hint::spin_loop();
        } else {
            thread::yield_now();
        }
    }

    #[inline]
    pub fn reset(&mut self) {
        self.spins = 0;
    }

    /// True once the spin budget is used up and waits are yielding.
    pub fn is_yielding(&self) -> bool {
        self.spins >= self.budget
    }
}
