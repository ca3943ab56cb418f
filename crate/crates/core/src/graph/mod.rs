//! Thread-per-node streaming networks.
//!
//! A [`Network`] is built single-threaded: add nodes, [`connect`] them with
//! SPSC rings, optionally attach external [`Inlet`]s and [`Outlet`]s, then
//! [`run`] it. Every node gets a dedicated thread running the
//! read / service / write loop until end-of-stream has reached it on every
//! input; it then forwards end-of-stream on all of its outputs and exits.
//!
//! [`connect`]: Network::connect
//! [`run`]: Network::run

mod config;
mod node;

use std::any::{Any, TypeId};
use std::fmt;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

pub use config::{default_spin_budget, RuntimeConfig, ENV_PIN, ENV_SPIN, ENV_WATCHDOG};
pub use node::{Filter, Flow, Msg, Node, NodeStats, Outbox, Sink, Source, Svc};

use crate::arbiter::{GatherPolicy, SchedulingPolicy};
use crate::backoff::Backoff;
use crate::error::{Error, Result};
use crate::spsc::{Consumer, Producer, RingBuffer};
use node::Runner;

/// Handle to a node inside one [`Network`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// One end of a channel, for topology inspection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Node(NodeId),
    /// An [`Inlet`] or [`Outlet`] held outside the network.
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeInfo {
    pub from: Endpoint,
    pub to: Endpoint,
    pub capacity: usize,
}

/// Options for [`Network::connect_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct EdgeOptions {
    /// Permit a self-loop or back-edge. No termination guarantee is made for
    /// cyclic networks.
    pub allow_cycle: bool,
}

type Endpoints = Vec<Box<dyn Any + Send>>;
type Thunk = Box<dyn FnOnce() -> std::result::Result<NodeStats, String> + Send>;
type Factory = Box<dyn FnOnce(Endpoints, Endpoints, u32) -> Thunk>;
type EdgeMaker = fn(usize) -> Result<(Box<dyn Any + Send>, Box<dyn Any + Send>)>;

struct NodeSlot {
    name: String,
    in_type: TypeId,
    in_type_name: &'static str,
    out_type: TypeId,
    out_type_name: &'static str,
    is_source: bool,
    make_edge: EdgeMaker,
    inputs: Endpoints,
    outputs: Endpoints,
    factory: Factory,
}

/// A streaming network under construction.
pub struct Network {
    nodes: Vec<NodeSlot>,
    edges: Vec<EdgeInfo>,
    config: RuntimeConfig,
}

impl Default for Network {
    fn default() -> Self {
        Network::new(RuntimeConfig::default())
    }
}

fn make_edge<T: Send + 'static>(capacity: usize) -> Result<(Box<dyn Any + Send>, Box<dyn Any + Send>)> {
    let (p, c) = RingBuffer::new::<Msg<T>>(capacity)?;
    Ok((Box::new(p), Box::new(c)))
}

fn downcast_all<E: 'static>(ends: Endpoints) -> Vec<E> {
    ends.into_iter()
        .map(|e| *e.downcast::<E>().expect("edge type checked at connect"))
        .collect()
}

impl Network {
    pub fn new(config: RuntimeConfig) -> Self {
        Network {
            nodes: Vec::new(),
            edges: Vec::new(),
            config,
        }
    }

    pub fn config(&self) -> &RuntimeConfig {
        &self.config
    }

    /// Adds a node that reads its inputs round-robin and distributes its
    /// outputs round-robin.
    pub fn add<N: Node>(&mut self, name: impl Into<String>, node: N) -> NodeId {
        self.add_with(name, node, GatherPolicy::RoundRobin, SchedulingPolicy::RoundRobin)
    }

    /// Adds a node with explicit fan-in and fan-out policies.
    pub fn add_with<N: Node>(
        &mut self,
        name: impl Into<String>,
        node: N,
        gather: GatherPolicy,
        policy: SchedulingPolicy<N::Out>,
    ) -> NodeId {
        let name = name.into();
        let thread_name = name.clone();
        let factory: Factory = Box::new(move |inputs, outputs, spin_budget| {
            let runner = Runner {
                node,
                name: thread_name,
                inputs: downcast_all::<Consumer<Msg<N::In>>>(inputs),
                outputs: downcast_all::<Producer<Msg<N::Out>>>(outputs),
                gather,
                policy,
                spin_budget,
            };
            Box::new(move || runner.run())
        });
        let id = NodeId(self.nodes.len());
        self.nodes.push(NodeSlot {
            name,
            in_type: TypeId::of::<N::In>(),
            in_type_name: std::any::type_name::<N::In>(),
            out_type: TypeId::of::<N::Out>(),
            out_type_name: std::any::type_name::<N::Out>(),
            is_source: TypeId::of::<N::In>() == TypeId::of::<()>(),
            make_edge: make_edge::<N::Out>,
            inputs: Vec::new(),
            outputs: Vec::new(),
            factory,
        });
        id
    }

    fn slot(&self, id: NodeId) -> Result<&NodeSlot> {
        self.nodes.get(id.0).ok_or(Error::UnknownNode(id.0))
    }

    /// Links `from` to `to` with a ring of `capacity` slots.
    pub fn connect(&mut self, from: NodeId, to: NodeId, capacity: usize) -> Result<usize> {
        self.connect_with(from, to, capacity, EdgeOptions::default())
    }

    pub fn connect_with(
        &mut self,
        from: NodeId,
        to: NodeId,
        capacity: usize,
        opts: EdgeOptions,
    ) -> Result<usize> {
        let producer = self.slot(from)?;
        let consumer = self.slot(to)?;
        if from == to && !opts.allow_cycle {
            return Err(Error::GuardedSelfLoop(from.0));
        }
        if consumer.is_source {
            return Err(Error::Topology(format!(
                "node `{}` is a source and takes no input",
                consumer.name
            )));
        }
        if producer.out_type != consumer.in_type {
            return Err(Error::Topology(format!(
                "`{}` emits {} but `{}` reads {}",
                producer.name, producer.out_type_name, consumer.name, consumer.in_type_name
            )));
        }
        let (p, c) = (producer.make_edge)(capacity)?;
        self.nodes[from.0].outputs.push(p);
        self.nodes[to.0].inputs.push(c);
        self.edges.push(EdgeInfo {
            from: Endpoint::Node(from),
            to: Endpoint::Node(to),
            capacity,
        });
        Ok(self.edges.len() - 1)
    }

    /// Creates a channel from the calling thread into `to`.
    pub fn inlet<T: Send + 'static>(&mut self, to: NodeId, capacity: usize) -> Result<Inlet<T>> {
        let consumer = self.slot(to)?;
        if consumer.in_type != TypeId::of::<T>() || consumer.is_source {
            return Err(Error::Topology(format!(
                "inlet of {} cannot feed `{}` which reads {}",
                std::any::type_name::<T>(),
                consumer.name,
                consumer.in_type_name
            )));
        }
        let (p, c) = RingBuffer::new::<Msg<T>>(capacity)?;
        self.nodes[to.0].inputs.push(Box::new(c));
        self.edges.push(EdgeInfo {
            from: Endpoint::External,
            to: Endpoint::Node(to),
            capacity,
        });
        Ok(Inlet {
            tx: p,
            spin_budget: self.config.spin_budget,
            closed: false,
        })
    }

    /// Creates a channel from `from` out to the calling thread.
    pub fn outlet<T: Send + 'static>(&mut self, from: NodeId, capacity: usize) -> Result<Outlet<T>> {
        let producer = self.slot(from)?;
        if producer.out_type != TypeId::of::<T>() {
            return Err(Error::Topology(format!(
                "outlet of {} cannot drain `{}` which emits {}",
                std::any::type_name::<T>(),
                producer.name,
                producer.out_type_name
            )));
        }
        let (p, c) = RingBuffer::new::<Msg<T>>(capacity)?;
        self.nodes[from.0].outputs.push(Box::new(p));
        self.edges.push(EdgeInfo {
            from: Endpoint::Node(from),
            to: Endpoint::External,
            capacity,
        });
        Ok(Outlet {
            rx: c,
            spin_budget: self.config.spin_budget,
            done: false,
        })
    }

    pub fn edges(&self) -> &[EdgeInfo] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_name(&self, id: NodeId) -> Option<&str> {
        self.nodes.get(id.0).map(|n| n.name.as_str())
    }

    /// Validates the topology and starts one thread per node.
    pub fn run(self) -> Result<Running> {
        for n in &self.nodes {
            if !n.is_source && n.inputs.is_empty() {
                return Err(Error::Topology(format!("node `{}` has no input", n.name)));
            }
        }
        let Network { nodes, config, .. } = self;
        let thunks: Vec<(String, Thunk)> = nodes
            .into_iter()
            .map(|n| {
                let thunk = (n.factory)(n.inputs, n.outputs, config.spin_budget);
                (n.name, thunk)
            })
            .collect();

        let start = Instant::now();
        let mut threads = Vec::with_capacity(thunks.len());
        for (i, (name, thunk)) in thunks.into_iter().enumerate() {
            let core = config.pinning.get(i).copied();
            let handle = thread::Builder::new().name(name.clone()).spawn(move || {
                if let Some(core) = core {
                    config::pin_current_thread(core);
                }
                thunk()
            })?;
            threads.push((name, handle));
        }
        Ok(Running {
            threads,
            start,
            watchdog: config.watchdog,
        })
    }
}

/// Aggregate statistics of a terminated network.
#[derive(Debug, Clone)]
pub struct NetworkStats {
    /// In node insertion order.
    pub nodes: Vec<NodeStats>,
    /// From `run` until the last node thread finished.
    pub wall: Duration,
}

impl NetworkStats {
    pub fn node(&self, name: &str) -> Option<&NodeStats> {
        self.nodes.iter().find(|n| n.name == name)
    }
}

/// A network whose node threads are running.
pub struct Running {
    threads: Vec<(String, JoinHandle<std::result::Result<NodeStats, String>>)>,
    start: Instant,
    watchdog: Option<Duration>,
}

impl Running {
    /// Blocks until every node thread has terminated.
    ///
    /// With a watchdog configured, gives up after the timeout and reports
    /// the nodes still running; their threads are left detached.
    pub fn wait(self) -> Result<NetworkStats> {
        if let Some(limit) = self.watchdog {
            let deadline = self.start + limit;
            loop {
                if self.threads.iter().all(|(_, h)| h.is_finished()) {
                    break;
                }
                let now = Instant::now();
                if now >= deadline {
                    let stuck = self
                        .threads
                        .iter()
                        .filter(|(_, h)| !h.is_finished())
                        .map(|(n, _)| n.clone())
                        .collect();
                    return Err(Error::Watchdog {
                        elapsed: now - self.start,
                        stuck,
                    });
                }
                thread::sleep(Duration::from_millis(1).min(deadline - now));
            }
        }
        let mut nodes = Vec::with_capacity(self.threads.len());
        let mut first_err = None;
        for (name, handle) in self.threads {
            match handle.join() {
                Ok(Ok(stats)) => nodes.push(stats),
                Ok(Err(reason)) => {
                    first_err.get_or_insert(Error::Node {
                        node: name.clone(),
                        reason,
                    });
                }
                Err(_) => {
                    first_err.get_or_insert(Error::Panicked(name));
                }
            }
        }
        if let Some(e) = first_err {
            return Err(e);
        }
        let last = nodes
            .iter()
            .filter_map(|n| n.finished)
            .max()
            .unwrap_or(self.start);
        Ok(NetworkStats {
            nodes,
            wall: last.saturating_duration_since(self.start),
        })
    }
}

/// Sending end held outside the network. Dropping it closes the stream.
pub struct Inlet<T: Send> {
    tx: Producer<Msg<T>>,
    spin_budget: u32,
    closed: bool,
}

impl<T: Send> Inlet<T> {
    /// Pushes one item, waiting while the channel is full. Hands the item
    /// back if the receiving node has gone away.
    pub fn send(&mut self, item: T) -> std::result::Result<(), T> {
        let mut backoff = Backoff::new(self.spin_budget);
        let mut msg = Msg::Data(item);
        loop {
            match self.tx.push(msg) {
                Ok(()) => return Ok(()),
                Err(full) => {
                    msg = full.into_inner();
                    if self.tx.is_abandoned() {
                        let Msg::Data(item) = msg else { unreachable!() };
                        return Err(item);
                    }
                    backoff.snooze();
                }
            }
        }
    }

    /// Non-blocking push.
    pub fn try_send(&mut self, item: T) -> std::result::Result<(), T> {
        self.tx.push(Msg::Data(item)).map_err(|full| match full.into_inner() {
            Msg::Data(item) => item,
            Msg::Eos => unreachable!(),
        })
    }

    pub fn approx_len(&self) -> usize {
        self.tx.approx_len()
    }

    /// Sends end-of-stream.
    pub fn close(mut self) {
        self.finish();
    }

    fn finish(&mut self) {
        if self.closed {
            return;
        }
        self.closed = true;
        let mut backoff = Backoff::new(self.spin_budget);
        let mut msg = Msg::Eos;
        while let Err(full) = self.tx.push(msg) {
            if self.tx.is_abandoned() {
                return;
            }
            msg = full.into_inner();
            backoff.snooze();
        }
    }
}

impl<T: Send> Drop for Inlet<T> {
    fn drop(&mut self) {
        self.finish();
    }
}

/// Receiving end held outside the network.
pub struct Outlet<T: Send> {
    rx: Consumer<Msg<T>>,
    spin_budget: u32,
    done: bool,
}

impl<T: Send> Outlet<T> {
    /// Waits for the next item; `None` once end-of-stream has arrived.
    pub fn recv(&mut self) -> Option<T> {
        let mut backoff = Backoff::new(self.spin_budget);
        loop {
            if self.done {
                return None;
            }
            match self.rx.pop() {
                Some(Msg::Data(item)) => return Some(item),
                Some(Msg::Eos) => self.done = true,
                None if self.rx.is_abandoned() => {
                    if let Some(Msg::Data(item)) = self.rx.pop() {
                        return Some(item);
                    }
                    self.done = true;
                }
                None => backoff.snooze(),
            }
        }
    }

    /// Non-blocking receive: `Some(Msg::Eos)` signals the end of the stream.
    pub fn try_recv(&mut self) -> Option<Msg<T>> {
        if self.done {
            return Some(Msg::Eos);
        }
        let m = self.rx.pop();
        if matches!(m, Some(Msg::Eos)) {
            self.done = true;
        }
        m
    }

    pub fn approx_len(&self) -> usize {
        self.rx.approx_len()
    }
}

impl<T: Send> Iterator for Outlet<T> {
    type Item = T;

    fn next(&mut self) -> Option<T> {
        self.recv()
    }
}
