//! Fan-out, fan-in and many-to-many queues built from SPSC rings.
//!
//! None of these queues is a passive shared structure. An active node (an
//! emitter for fan-out, a collector for fan-in) owns one end of every ring on
//! its side and moves item handles across by copying them, so every ring
//! keeps exactly one producer thread and one consumer thread and nothing on
//! the data path needs an atomic read-modify-write.

use std::fmt;

use crate::error::{Error, Result};
use crate::graph::{Filter, Inlet, Network, NodeId, Outlet, Running, RuntimeConfig, Svc};

/// How a node with several outputs picks the destination of each item.
pub enum SchedulingPolicy<T> {
    /// Cyclic 0, 1, .., n-1, 0, .. A full destination is waited on.
    RoundRobin,
    /// The output with the smallest observed occupancy; ties go to the
    /// lowest index.
    OnDemand,
    /// `selector(item, occupancies)` returns the output index. Occupancies
    /// are `approx_len` snapshots, one per output.
    UserDefined(Box<dyn FnMut(&T, &[usize]) -> usize + Send>),
}

impl<T> SchedulingPolicy<T> {
    pub fn user_defined(f: impl FnMut(&T, &[usize]) -> usize + Send + 'static) -> Self {
        SchedulingPolicy::UserDefined(Box::new(f))
    }
}

impl<T> Default for SchedulingPolicy<T> {
    fn default() -> Self {
        SchedulingPolicy::RoundRobin
    }
}

impl<T> fmt::Debug for SchedulingPolicy<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchedulingPolicy::RoundRobin => f.write_str("RoundRobin"),
            SchedulingPolicy::OnDemand => f.write_str("OnDemand"),
            SchedulingPolicy::UserDefined(_) => f.write_str("UserDefined(..)"),
        }
    }
}

/// How a node with several inputs merges them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GatherPolicy {
    /// Strict rotation: wait on input i until it yields, then move to i+1.
    RoundRobin,
    /// Take from the first non-empty input, starting the scan just after the
    /// input served last.
    #[default]
    FirstAvailable,
}

fn relay<T: Send + 'static>() -> Filter<T, impl FnMut(T) -> Svc<T> + Send + 'static> {
    Filter::new(Svc::Emit)
}

fn nonzero(n: usize, what: &'static str) -> Result<()> {
    if n == 0 {
        Err(Error::ZeroCount { what })
    } else {
        Ok(())
    }
}

/// Adds an emitter relay to `net` and returns it; connect its input and
/// `n_consumers` outputs to finish the fan-out.
pub fn add_emitter<T: Send + 'static>(
    net: &mut Network,
    name: &str,
    policy: SchedulingPolicy<T>,
) -> NodeId {
    net.add_with(name, relay::<T>(), GatherPolicy::FirstAvailable, policy)
}

/// Adds a collector relay merging its inputs with `gather`.
pub fn add_collector<T: Send + 'static>(net: &mut Network, name: &str, gather: GatherPolicy) -> NodeId {
    net.add_with(name, relay::<T>(), gather, SchedulingPolicy::RoundRobin)
}

/// Single-producer, multi-consumer queue: one inlet, `n` outlets, an emitter
/// thread in between.
pub struct SpmcQueue<T: Send> {
    pub input: Inlet<T>,
    pub outputs: Vec<Outlet<T>>,
    pub running: Running,
}

/// Multi-producer, single-consumer queue: `n` inlets, one outlet, a
/// collector thread in between.
pub struct MpscQueue<T: Send> {
    pub inputs: Vec<Inlet<T>>,
    pub output: Outlet<T>,
    pub running: Running,
}

/// Collector feeding an emitter through one SPSC link.
pub struct MpmcQueue<T: Send> {
    pub inputs: Vec<Inlet<T>>,
    pub outputs: Vec<Outlet<T>>,
    pub running: Running,
}

/// Builds the fan-out network without starting it.
pub fn spmc_network<T: Send + 'static>(
    n_consumers: usize,
    capacity: usize,
    policy: SchedulingPolicy<T>,
    config: RuntimeConfig,
) -> Result<(Network, Inlet<T>, Vec<Outlet<T>>)> {
    nonzero(n_consumers, "n_consumers")?;
    let mut net = Network::new(config);
    let e = add_emitter(&mut net, "emitter", policy);
    let input = net.inlet(e, capacity)?;
    let outputs = (0..n_consumers)
        .map(|_| net.outlet(e, capacity))
        .collect::<Result<Vec<_>>>()?;
    Ok((net, input, outputs))
}

pub fn mpsc_network<T: Send + 'static>(
    n_producers: usize,
    capacity: usize,
    gather: GatherPolicy,
    config: RuntimeConfig,
) -> Result<(Network, Vec<Inlet<T>>, Outlet<T>)> {
    nonzero(n_producers, "n_producers")?;
    let mut net = Network::new(config);
    let c = add_collector::<T>(&mut net, "collector", gather);
    let inputs = (0..n_producers)
        .map(|_| net.inlet(c, capacity))
        .collect::<Result<Vec<_>>>()?;
    let output = net.outlet(c, capacity)?;
    Ok((net, inputs, output))
}

pub fn mpmc_network<T: Send + 'static>(
    n_producers: usize,
    n_consumers: usize,
    capacity: usize,
    gather: GatherPolicy,
    policy: SchedulingPolicy<T>,
    config: RuntimeConfig,
) -> Result<(Network, Vec<Inlet<T>>, Vec<Outlet<T>>)> {
    nonzero(n_producers, "n_producers")?;
    nonzero(n_consumers, "n_consumers")?;
    let mut net = Network::new(config);
    let c = add_collector::<T>(&mut net, "collector", gather);
    let e = add_emitter(&mut net, "emitter", policy);
    net.connect(c, e, capacity)?;
    let inputs = (0..n_producers)
        .map(|_| net.inlet(c, capacity))
        .collect::<Result<Vec<_>>>()?;
    let outputs = (0..n_consumers)
        .map(|_| net.outlet(e, capacity))
        .collect::<Result<Vec<_>>>()?;
    Ok((net, inputs, outputs))
}

/// Starts a fan-out queue.
pub fn make_spmc<T: Send + 'static>(
    n_consumers: usize,
    capacity: usize,
    policy: SchedulingPolicy<T>,
) -> Result<SpmcQueue<T>> {
    let (net, input, outputs) = spmc_network(n_consumers, capacity, policy, RuntimeConfig::default())?;
    Ok(SpmcQueue {
        input,
        outputs,
        running: net.run()?,
    })
}

/// Starts a fan-in queue.
pub fn make_mpsc<T: Send + 'static>(
    n_producers: usize,
    capacity: usize,
    gather: GatherPolicy,
) -> Result<MpscQueue<T>> {
    let (net, inputs, output) = mpsc_network(n_producers, capacity, gather, RuntimeConfig::default())?;
    Ok(MpscQueue {
        inputs,
        output,
        running: net.run()?,
    })
}

/// Starts a many-to-many queue; gathering is FirstAvailable.
pub fn make_mpmc<T: Send + 'static>(
    n_producers: usize,
    n_consumers: usize,
    capacity: usize,
    policy: SchedulingPolicy<T>,
) -> Result<MpmcQueue<T>> {
    let (net, inputs, outputs) = mpmc_network(
        n_producers,
        n_consumers,
        capacity,
        GatherPolicy::FirstAvailable,
        policy,
        RuntimeConfig::default(),
    )?;
    Ok(MpmcQueue {
        inputs,
        outputs,
        running: net.run()?,
    })
}
