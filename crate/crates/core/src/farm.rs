//! Task farm: an emitter, `n` replicated workers and an optional collector.
//!
//! ```text
//!             +-> worker-0 --+
//!  emitter ---+-> worker-1 --+--> collector
//!             +-> worker-n --+
//! ```
//!
//! Every arrow is an SPSC ring. The emitter is the fan-out arbiter and the
//! collector the fan-in arbiter, so the farm needs `n + 2` threads.
//!
//! Each item is wrapped in a [`Tagged`] envelope carrying its emission index.
//! User services never see it. In ordered mode the collector runs a
//! [`ReorderBuffer`] keyed on the tag and hands results to its service in
//! emission order whatever order the workers finish in.

use std::collections::BTreeMap;

use crate::arbiter::{GatherPolicy, SchedulingPolicy};
use crate::error::{Error, Result};
use crate::graph::{Flow, Network, Node, NodeId, Outbox, Outlet, Running, RuntimeConfig, Svc};

pub struct FarmConfig<T> {
    pub n_workers: usize,
    pub channel_capacity: usize,
    /// Emitter-side scheduling. The selector of a user-defined policy sees
    /// the untagged item.
    pub policy: SchedulingPolicy<T>,
    pub ordered: bool,
    pub collector_present: bool,
    /// Held results above which the collector logs a warning once. Defaults
    /// to `4 * n_workers * channel_capacity`.
    pub reorder_watermark: Option<usize>,
    pub runtime: RuntimeConfig,
}

impl<T> FarmConfig<T> {
    pub fn new(n_workers: usize) -> Self {
        FarmConfig {
            n_workers,
            channel_capacity: 512,
            policy: SchedulingPolicy::RoundRobin,
            ordered: false,
            collector_present: true,
            reorder_watermark: None,
            runtime: RuntimeConfig::default(),
        }
    }

    pub fn ordered(mut self, ordered: bool) -> Self {
        self.ordered = ordered;
        self
    }

    pub fn capacity(mut self, capacity: usize) -> Self {
        self.channel_capacity = capacity;
        self
    }

    pub fn policy(mut self, policy: SchedulingPolicy<T>) -> Self {
        self.policy = policy;
        self
    }

    pub fn without_collector(mut self) -> Self {
        self.collector_present = false;
        self
    }

    pub fn runtime(mut self, runtime: RuntimeConfig) -> Self {
        self.runtime = runtime;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_workers == 0 {
            return Err(Error::ZeroCount { what: "n_workers" });
        }
        if self.channel_capacity == 0 {
            return Err(Error::ZeroCapacity);
        }
        if self.ordered && !self.collector_present {
            return Err(Error::Config("an ordered farm needs a collector".into()));
        }
        Ok(())
    }
}

/// An item plus its emission index.
#[derive(Debug)]
pub struct Tagged<T> {
    pub tag: u64,
    pub item: T,
}

/// Releases items in tag order, holding early arrivals.
#[derive(Debug)]
pub struct ReorderBuffer<T> {
    next_expected: u64,
    held: BTreeMap<u64, T>,
    peak: usize,
}

impl<T> Default for ReorderBuffer<T> {
    fn default() -> Self {
        ReorderBuffer {
            next_expected: 0,
            held: BTreeMap::new(),
            peak: 0,
        }
    }
}

impl<T> ReorderBuffer<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Accepts `item` with `tag` and passes every item that became
    /// releasable, in order, to `release`.
    pub fn insert(&mut self, tag: u64, item: T, mut release: impl FnMut(u64, T)) -> Result<(), String> {
        if tag < self.next_expected || self.held.contains_key(&tag) {
            return Err(format!("duplicate tag {tag}"));
        }
        if tag != self.next_expected {
            self.held.insert(tag, item);
            self.peak = self.peak.max(self.held.len());
            return Ok(());
        }
        release(tag, item);
        self.next_expected += 1;
        while let Some(item) = self.held.remove(&self.next_expected) {
            release(self.next_expected, item);
            self.next_expected += 1;
        }
        Ok(())
    }

    pub fn next_expected(&self) -> u64 {
        self.next_expected
    }

    pub fn held(&self) -> usize {
        self.held.len()
    }

    /// Largest number of items held at once.
    pub fn peak(&self) -> usize {
        self.peak
    }

    /// Fails if anything is still waiting for a predecessor.
    pub fn finish(&self) -> Result<(), String> {
        match self.held.keys().next() {
            None => Ok(()),
            Some(first) => Err(format!(
                "tag gap: expected {} but holding {} item(s) from tag {first}",
                self.next_expected,
                self.held.len()
            )),
        }
    }
}

struct EmitterNode<E> {
    svc: E,
    next_tag: u64,
}

impl<I, E> Node for EmitterNode<E>
where
    I: Send + 'static,
    E: FnMut() -> Svc<I> + Send + 'static,
{
    type In = ();
    type Out = Tagged<I>;

    fn svc(&mut self, _: Option<()>, out: &mut Outbox<'_, Tagged<I>>) -> Result<Flow, String> {
        match (self.svc)() {
            Svc::Emit(item) => {
                out.emit(Tagged {
                    tag: self.next_tag,
                    item,
                });
                self.next_tag += 1;
                Ok(Flow::Continue)
            }
            Svc::Absorb => Ok(Flow::Continue),
            Svc::End => Ok(Flow::End),
        }
    }

    fn metrics(&self, m: &mut BTreeMap<&'static str, u64>) {
        m.insert("emitted", self.next_tag);
    }
}

struct WorkerNode<I, O, W> {
    svc: W,
    ordered: bool,
    _types: std::marker::PhantomData<fn(I) -> O>,
}

impl<I, O, W> Node for WorkerNode<I, O, W>
where
    I: Send + 'static,
    O: Send + 'static,
    W: FnMut(I) -> Svc<O> + Send + 'static,
{
    type In = Tagged<I>;
    // `None` marks an absorbed task so the ordered collector can skip its tag.
    type Out = Tagged<Option<O>>;

    fn svc(
        &mut self,
        input: Option<Tagged<I>>,
        out: &mut Outbox<'_, Tagged<Option<O>>>,
    ) -> Result<Flow, String> {
        let Some(Tagged { tag, item }) = input else {
            return Err("worker invoked without input".into());
        };
        match (self.svc)(item) {
            Svc::Emit(r) => {
                out.emit(Tagged { tag, item: Some(r) });
                Ok(Flow::Continue)
            }
            Svc::Absorb => {
                if self.ordered {
                    out.emit(Tagged { tag, item: None });
                }
                Ok(Flow::Continue)
            }
            Svc::End => Ok(Flow::End),
        }
    }
}

struct CollectorNode<O, C> {
    svc: C,
    reorder: Option<ReorderBuffer<Option<O>>>,
    watermark: usize,
    warned: bool,
    collected: u64,
}

impl<O, R, C> CollectorNode<O, C>
where
    O: Send + 'static,
    R: Send + 'static,
    C: FnMut(O) -> Svc<R> + Send + 'static,
{
    fn deliver(svc: &mut C, collected: &mut u64, item: Option<O>, out: &mut Outbox<'_, R>) {
        if let Some(o) = item {
            *collected += 1;
            if let Svc::Emit(r) = svc(o) {
                out.emit(r);
            }
        }
    }
}

impl<O, R, C> Node for CollectorNode<O, C>
where
    O: Send + 'static,
    R: Send + 'static,
    C: FnMut(O) -> Svc<R> + Send + 'static,
{
    type In = Tagged<Option<O>>;
    type Out = R;

    fn svc(&mut self, input: Option<Tagged<Option<O>>>, out: &mut Outbox<'_, R>) -> Result<Flow, String> {
        let Some(Tagged { tag, item }) = input else {
            return Err("collector invoked without input".into());
        };
        let svc = &mut self.svc;
        let collected = &mut self.collected;
        match &mut self.reorder {
            None => Self::deliver(svc, collected, item, out),
            Some(rob) => {
                rob.insert(tag, item, |_, item| Self::deliver(svc, collected, item, out))?;
                if !self.warned && rob.held() > self.watermark {
                    self.warned = true;
                    log::warn!(
                        "reorder buffer holds {} results waiting for tag {}; a worker may be stuck",
                        rob.held(),
                        rob.next_expected()
                    );
                }
            }
        }
        Ok(Flow::Continue)
    }

    fn on_eos(&mut self, _out: &mut Outbox<'_, R>) -> Result<(), String> {
        match &self.reorder {
            Some(rob) => rob.finish(),
            None => Ok(()),
        }
    }

    fn metrics(&self, m: &mut BTreeMap<&'static str, u64>) {
        m.insert("collected", self.collected);
        if let Some(rob) = &self.reorder {
            m.insert("reorder_peak", rob.peak() as u64);
        }
    }
}

/// A farm wired into a network, not yet running.
pub struct Farm<R> {
    net: Network,
    emitter: NodeId,
    workers: Vec<NodeId>,
    collector: Option<NodeId>,
    ordered: bool,
    _out: std::marker::PhantomData<fn() -> R>,
}

/// Wires emitter, replicated workers and (if configured) collector.
///
/// The worker closure is cloned once per worker; clones must not share
/// mutable state unless they synchronize it themselves.
pub fn build_farm<I, O, R, E, W, C>(emitter: E, worker: W, collector: Option<C>, cfg: FarmConfig<I>) -> Result<Farm<R>>
where
    I: Send + 'static,
    O: Send + 'static,
    R: Send + 'static,
    E: FnMut() -> Svc<I> + Send + 'static,
    W: FnMut(I) -> Svc<O> + Clone + Send + 'static,
    C: FnMut(O) -> Svc<R> + Send + 'static,
{
    cfg.validate()?;
    if cfg.collector_present != collector.is_some() {
        return Err(Error::Config(
            "collector service must be supplied exactly when collector_present is set".into(),
        ));
    }
    let n = cfg.n_workers;
    let cap = cfg.channel_capacity;
    let watermark = cfg.reorder_watermark.unwrap_or(4 * n * cap);
    let policy: SchedulingPolicy<Tagged<I>> = match cfg.policy {
        SchedulingPolicy::RoundRobin => SchedulingPolicy::RoundRobin,
        SchedulingPolicy::OnDemand => SchedulingPolicy::OnDemand,
        SchedulingPolicy::UserDefined(mut f) => {
            SchedulingPolicy::user_defined(move |t: &Tagged<I>, occ: &[usize]| f(&t.item, occ))
        }
    };

    let mut net = Network::new(cfg.runtime);
    let emitter = net.add_with(
        "emitter",
        EmitterNode {
            svc: emitter,
            next_tag: 0,
        },
        GatherPolicy::FirstAvailable,
        policy,
    );
    let workers: Vec<NodeId> = (0..n)
        .map(|i| {
            net.add(
                format!("worker-{i}"),
                WorkerNode {
                    svc: worker.clone(),
                    ordered: cfg.ordered,
                    _types: std::marker::PhantomData,
                },
            )
        })
        .collect();
    for &w in &workers {
        net.connect(emitter, w, cap)?;
    }
    let collector = match collector {
        Some(svc) => {
            let c = net.add_with(
                "collector",
                CollectorNode {
                    svc,
                    reorder: cfg.ordered.then(ReorderBuffer::new),
                    watermark,
                    warned: false,
                    collected: 0,
                },
                GatherPolicy::FirstAvailable,
                SchedulingPolicy::RoundRobin,
            );
            for &w in &workers {
                net.connect(w, c, cap)?;
            }
            Some(c)
        }
        None => None,
    };
    Ok(Farm {
        net,
        emitter,
        workers,
        collector,
        ordered: cfg.ordered,
        _out: std::marker::PhantomData,
    })
}

impl<R: Send + 'static> Farm<R> {
    /// Routes whatever the collector emits to the calling thread.
    pub fn outlet(&mut self, capacity: usize) -> Result<Outlet<R>> {
        let c = self
            .collector
            .ok_or_else(|| Error::Topology("farm has no collector to drain".into()))?;
        self.net.outlet(c, capacity)
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn emitter(&self) -> NodeId {
        self.emitter
    }

    pub fn workers(&self) -> &[NodeId] {
        &self.workers
    }

    pub fn collector(&self) -> Option<NodeId> {
        self.collector
    }

    pub fn is_ordered(&self) -> bool {
        self.ordered
    }

    pub fn run(self) -> Result<Running> {
        self.net.run()
    }

    /// Like [`run`](Self::run) but refuses a farm built without ordering.
    pub fn run_ordered(self) -> Result<Running> {
        if !self.ordered {
            return Err(Error::Config("farm was not built with ordered = true".into()));
        }
        self.net.run()
    }
}
