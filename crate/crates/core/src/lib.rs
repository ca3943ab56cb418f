//! Streaming parallelism from wait-free SPSC rings.
//!
//! The building blocks, bottom up:
//!
//! * [`spsc`]: the bounded wait-free single-producer/single-consumer ring,
//!   the only channel primitive.
//! * [`graph`]: thread-per-node networks with end-of-stream propagation.
//! * [`arbiter`]: fan-out, fan-in and many-to-many queues composed from
//!   rings and an active emitter or collector thread.
//! * [`farm`]: the task-farm skeleton, plain and order preserving.
//! * [`pool`]: a fixed-size buffer recycler whose releases travel back over
//!   per-releaser rings.
//!
//! ```
//! use streamfarm::farm::{build_farm, FarmConfig};
//! use streamfarm::graph::Svc;
//!
//! let mut next = 0u64;
//! let mut farm = build_farm(
//!     move || {
//!         next += 1;
//!         if next <= 100 { Svc::Emit(next) } else { Svc::End }
//!     },
//!     |x: u64| Svc::Emit(x * x),
//!     Some(|x: u64| Svc::Emit(x)),
//!     FarmConfig::new(4).ordered(true),
//! )
//! .unwrap();
//! let out = farm.outlet(64).unwrap();
//! let running = farm.run().unwrap();
//! let squares: Vec<u64> = out.collect();
//! running.wait().unwrap();
//! assert_eq!(squares, (1..=100).map(|x| x * x).collect::<Vec<_>>());
//! ```

pub mod arbiter;
pub mod backoff;
pub mod error;
pub mod farm;
pub mod graph;
pub mod pool;
pub mod spsc;

pub use error::{Error, Result};
