use std::env;
use std::thread;
use std::time::Duration;

use crate::error::{Error, Result};

pub const ENV_SPIN: &str = "STREAMFARM_SPIN";
pub const ENV_WATCHDOG: &str = "STREAMFARM_WATCHDOG_SECS";
pub const ENV_PIN: &str = "STREAMFARM_PIN";

/// Runtime knobs shared by every node of a network.
#[derive(Debug, Clone)]
pub struct RuntimeConfig {
    /// Relax-hint spins before a blocked node starts yielding.
    pub spin_budget: u32,
    /// `wait` fails with [`Error::Watchdog`] after this long.
    pub watchdog: Option<Duration>,
    /// Core for the i-th node (in insertion order). Nodes past the end of
    /// the list are not pinned.
    pub pinning: Vec<usize>,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        RuntimeConfig {
            spin_budget: default_spin_budget(),
            watchdog: None,
            pinning: Vec::new(),
        }
    }
}

/// 1024 spins on a multi-core host. On a single CPU the peer cannot make
/// progress while we spin, so yield straight away.
pub fn default_spin_budget() -> u32 {
    match thread::available_parallelism() {
        Ok(n) if n.get() > 1 => 1024,
        _ => 0,
    }
}

impl RuntimeConfig {
    /// Defaults overridden by `STREAMFARM_SPIN`, `STREAMFARM_WATCHDOG_SECS`
    /// and `STREAMFARM_PIN` (comma-separated core ids).
    pub fn from_env() -> Result<Self> {
        let mut cfg = RuntimeConfig::default();
        if let Ok(v) = env::var(ENV_SPIN) {
            cfg.spin_budget = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{ENV_SPIN}={v:?} is not an integer")))?;
        }
        if let Ok(v) = env::var(ENV_WATCHDOG) {
            let secs: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{ENV_WATCHDOG}={v:?} is not a number")))?;
            if !(secs > 0.0 && secs.is_finite()) {
                return Err(Error::Config(format!("{ENV_WATCHDOG} must be positive")));
            }
            cfg.watchdog = Some(Duration::from_secs_f64(secs));
        }
        if let Ok(v) = env::var(ENV_PIN) {
            cfg.pinning = parse_core_list(&v)?;
        }
        Ok(cfg)
    }

    pub fn with_watchdog(mut self, timeout: Duration) -> Self {
        self.watchdog = Some(timeout);
        self
    }

    pub fn with_spin_budget(mut self, spins: u32) -> Self {
        self.spin_budget = spins;
        self
    }
}

fn parse_core_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse()
                .map_err(|_| Error::Config(format!("bad core id {t:?} in {ENV_PIN}")))
        })
        .collect()
}

#[cfg(target_os = "linux")]
pub(crate) fn pin_current_thread(core: usize) {
    // SAFETY: cpu_set_t is plain data; sched_setaffinity only reads it.
    unsafe {
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        libc::CPU_SET(core, &mut set);
        if libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &set) != 0 {
            log::warn!("could not pin thread to core {core}");
        }
    }
}

#[cfg(not(target_os = "linux"))]
pub(crate) fn pin_current_thread(core: usize) {
    log::warn!("core pinning is not supported on this platform (core {core})");
}
