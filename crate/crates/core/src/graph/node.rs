//! The per-thread read / service / write loop.

use std::collections::BTreeMap;
use std::time::Instant;

use crate::arbiter::{GatherPolicy, SchedulingPolicy};
use crate::backoff::Backoff;
use crate::spsc::{Consumer, Producer};

/// What a service asks the runtime to do after handling one input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Svc<T> {
    /// Forward this item downstream.
    Emit(T),
    /// Consume the input without forwarding anything.
    Absorb,
    /// The source is exhausted. From a non-source node: stop servicing and
    /// discard the remaining input until end-of-stream.
    End,
}

/// Unit of flow on every channel. `Eos` is placed by the runtime only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Msg<T> {
    Data(T),
    Eos,
}

/// Whether a node wants more input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    End,
}

/// A stage of a streaming network. Runs on its own thread once the network
/// starts.
///
/// Most users reach for [`Source`], [`Filter`] or [`Sink`]; implementing the
/// trait directly is for nodes that emit a variable number of items per
/// input (the ordered farm collector, for instance).
pub trait Node: Send + 'static {
    type In: Send + 'static;
    type Out: Send + 'static;

    /// Services one input item. Sources are called with `None` until they
    /// return [`Flow::End`].
    fn svc(&mut self, input: Option<Self::In>, out: &mut Outbox<'_, Self::Out>) -> Result<Flow, String>;

    /// Called once, after end-of-stream arrived on every input and before it
    /// is forwarded.
    fn on_eos(&mut self, _out: &mut Outbox<'_, Self::Out>) -> Result<(), String> {
        Ok(())
    }

    /// Extra counters to report alongside the standard node statistics.
    fn metrics(&self, _metrics: &mut BTreeMap<&'static str, u64>) {}
}

/// Node with no inputs, driven by a closure returning [`Svc`].
pub struct Source<F>(pub F);

/// One-in one-out node driven by a closure returning [`Svc`].
pub struct Filter<I, F> {
    f: F,
    _in: std::marker::PhantomData<fn(I)>,
}

impl<I, F> Filter<I, F> {
    pub fn new(f: F) -> Self {
        Filter {
            f,
            _in: std::marker::PhantomData,
        }
    }
}

/// Terminal node handing every item to a closure.
pub struct Sink<I, F> {
    f: F,
    _in: std::marker::PhantomData<fn(I)>,
}

impl<I, F> Sink<I, F> {
    pub fn new(f: F) -> Self {
        Sink {
            f,
            _in: std::marker::PhantomData,
        }
    }
}

impl<O, F> Node for Source<F>
where
    O: Send + 'static,
    F: FnMut() -> Svc<O> + Send + 'static,
{
    type In = ();
    type Out = O;

    fn svc(&mut self, _input: Option<()>, out: &mut Outbox<'_, O>) -> Result<Flow, String> {
        match (self.0)() {
            Svc::Emit(item) => {
                out.emit(item);
                Ok(Flow::Continue)
            }
            Svc::Absorb => Ok(Flow::Continue),
            Svc::End => Ok(Flow::End),
        }
    }
}

impl<I, O, F> Node for Filter<I, F>
where
    I: Send + 'static,
    O: Send + 'static,
    F: FnMut(I) -> Svc<O> + Send + 'static,
{
    type In = I;
    type Out = O;

    fn svc(&mut self, input: Option<I>, out: &mut Outbox<'_, O>) -> Result<Flow, String> {
        let Some(item) = input else {
            return Err("filter invoked without input".into());
        };
        match (self.f)(item) {
            Svc::Emit(item) => {
                out.emit(item);
                Ok(Flow::Continue)
            }
            Svc::Absorb => Ok(Flow::Continue),
            Svc::End => Ok(Flow::End),
        }
    }
}

impl<I, F> Node for Sink<I, F>
where
    I: Send + 'static,
    F: FnMut(I) + Send + 'static,
{
    type In = I;
    type Out = ();

    fn svc(&mut self, input: Option<I>, _out: &mut Outbox<'_, ()>) -> Result<Flow, String> {
        if let Some(item) = input {
            (self.f)(item);
        }
        Ok(Flow::Continue)
    }
}

/// Per-node counters returned by [`Running::wait`](super::Running::wait).
#[derive(Debug, Clone, Default)]
pub struct NodeStats {
    pub name: String,
    /// Data items popped from inputs.
    pub items_in: u64,
    /// Data items emitted, including those emitted by a node without
    /// outputs (which are dropped).
    pub items_out: u64,
    pub invocations: u64,
    pub metrics: BTreeMap<&'static str, u64>,
    pub(crate) finished: Option<Instant>,
}

/// Output side handed to [`Node::svc`].
pub struct Outbox<'a, T> {
    outputs: &'a mut [Producer<Msg<T>>],
    policy: &'a mut SchedulingPolicy<T>,
    next: &'a mut usize,
    occupancy: &'a mut Vec<usize>,
    spin_budget: u32,
    emitted: &'a mut u64,
    fault: &'a mut Option<String>,
}

impl<T: Send> Outbox<'_, T> {
    /// Number of downstream channels.
    pub fn width(&self) -> usize {
        self.outputs.len()
    }

    /// Sends `item` to the output chosen by the node's scheduling policy,
    /// waiting while that output is full.
    pub fn emit(&mut self, item: T) {
        *self.emitted += 1;
        if self.outputs.is_empty() || self.fault.is_some() {
            return;
        }
        let mut backoff = Backoff::new(self.spin_budget);
        let mut item = item;
        loop {
            let idx = match self.select(&item) {
                Ok(i) => i,
                Err(e) => {
                    *self.fault = Some(e);
                    return;
                }
            };
            let out = &mut self.outputs[idx];
            match out.push(Msg::Data(item)) {
                Ok(()) => {
                    if matches!(self.policy, SchedulingPolicy::RoundRobin) {
                        *self.next = (idx + 1) % self.outputs.len();
                    }
                    return;
                }
                Err(full) => {
                    if out.is_abandoned() {
                        return;
                    }
                    item = match full.into_inner() {
                        Msg::Data(v) => v,
                        Msg::Eos => unreachable!(),
                    };
                    backoff.snooze();
                }
            }
        }
    }

    fn select(&mut self, item: &T) -> Result<usize, String> {
        let n = self.outputs.len();
        match self.policy {
            SchedulingPolicy::RoundRobin => Ok(*self.next),
            SchedulingPolicy::OnDemand => {
                // Lowest occupancy wins, ties to the lowest index.
                let mut best = 0;
                let mut best_len = usize::MAX;
                for (i, out) in self.outputs.iter().enumerate() {
                    let len = out.approx_len();
                    if len < best_len {
                        best = i;
                        best_len = len;
                    }
                }
                Ok(best)
            }
            SchedulingPolicy::UserDefined(ref mut selector) => {
                self.occupancy.clear();
                self.occupancy
                    .extend(self.outputs.iter().map(|o| o.approx_len()));
                let idx = selector(item, self.occupancy);
                if idx < n {
                    Ok(idx)
                } else {
                    Err(format!("selector returned output {idx} of {n}"))
                }
            }
        }
    }
}

pub(crate) struct Runner<N: Node> {
    pub node: N,
    pub name: String,
    pub inputs: Vec<Consumer<Msg<N::In>>>,
    pub outputs: Vec<Producer<Msg<N::Out>>>,
    pub gather: GatherPolicy,
    pub policy: SchedulingPolicy<N::Out>,
    pub spin_budget: u32,
}

impl<N: Node> Runner<N> {
    pub fn run(mut self) -> Result<NodeStats, String> {
        let mut stats = NodeStats {
            name: self.name.clone(),
            ..NodeStats::default()
        };
        let mut next_out = 0usize;
        let mut occupancy = Vec::with_capacity(self.outputs.len());
        let mut fault = None;
        let mut backoff = Backoff::new(self.spin_budget);

        macro_rules! outbox {
            () => {
                Outbox {
                    outputs: &mut self.outputs,
                    policy: &mut self.policy,
                    next: &mut next_out,
                    occupancy: &mut occupancy,
                    spin_budget: self.spin_budget,
                    emitted: &mut stats.items_out,
                    fault: &mut fault,
                }
            };
        }

        if self.inputs.is_empty() {
            loop {
                stats.invocations += 1;
                let flow = self.node.svc(None, &mut outbox!())?;
                if let Some(e) = fault.take() {
                    return Err(e);
                }
                if flow == Flow::End {
                    break;
                }
            }
        } else {
            let n = self.inputs.len();
            let mut live = vec![true; n];
            let mut live_count = n;
            let mut cursor = 0usize;
            let mut servicing = true;
            while live_count > 0 {
                let polled = match self.gather {
                    GatherPolicy::RoundRobin => {
                        while !live[cursor] {
                            cursor = (cursor + 1) % n;
                        }
                        poll(&mut self.inputs[cursor]).map(|m| (cursor, m))
                    }
                    GatherPolicy::FirstAvailable => {
                        let mut found = None;
                        for k in 0..n {
                            let i = (cursor + k) % n;
                            if live[i] {
                                if let Some(m) = poll(&mut self.inputs[i]) {
                                    found = Some((i, m));
                                    break;
                                }
                            }
                        }
                        found
                    }
                };
                let Some((i, msg)) = polled else {
                    backoff.snooze();
                    continue;
                };
                backoff.reset();
                cursor = (i + 1) % n;
                match msg {
                    Msg::Data(item) => {
                        stats.items_in += 1;
                        if servicing {
                            stats.invocations += 1;
                            let flow = self.node.svc(Some(item), &mut outbox!())?;
                            if let Some(e) = fault.take() {
                                return Err(e);
                            }
                            servicing = flow == Flow::Continue;
                        }
                    }
                    Msg::Eos => {
                        live[i] = false;
                        live_count -= 1;
                    }
                }
            }
        }

        self.node.on_eos(&mut outbox!())?;
        if let Some(e) = fault.take() {
            return Err(e);
        }
        for out in &mut self.outputs {
            let mut msg = Msg::Eos;
            loop {
                match out.push(msg) {
                    Ok(()) => break,
                    Err(full) if !out.is_abandoned() => {
                        msg = full.into_inner();
                        backoff.snooze();
                    }
                    Err(_) => break,
                }
            }
        }
        self.node.metrics(&mut stats.metrics);
        stats.finished = Some(Instant::now());
        Ok(stats)
    }
}

/// Pops one message. An input whose producer vanished without sending
/// end-of-stream (it panicked) reads as ended once drained.
fn poll<T: Send>(input: &mut Consumer<Msg<T>>) -> Option<Msg<T>> {
    match input.pop() {
        Some(m) => Some(m),
        None if input.is_abandoned() => Some(input.pop().unwrap_or(Msg::Eos)),
        None => None,
    }
}
