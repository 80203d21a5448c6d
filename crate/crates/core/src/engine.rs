//! Discrete-event clock and the cache/memory bus.
//!
//! Events fire in `(fire_cycle, seq)` order, where `seq` is the insertion
//! sequence number, so events scheduled for the same cycle run FIFO.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

pub type Cycle = u64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event<A> {
    pub fire_cycle: Cycle,
    pub seq: u64,
    pub action: A,
}

impl<A: Eq> Ord for Event<A> {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap: invert to pop the earliest event first.
        (other.fire_cycle, other.seq).cmp(&(self.fire_cycle, self.seq))
    }
}

impl<A: Eq> PartialOrd for Event<A> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// The timing wheel: a priority queue of pending events plus the current cycle.
#[derive(Debug)]
pub struct EventQueue<A> {
    heap: BinaryHeap<Event<A>>,
    now: Cycle,
    next_seq: u64,
}

impl<A: Eq> Default for EventQueue<A> {
    fn default() -> Self {
        Self::new()
    }
}

impl<A: Eq> EventQueue<A> {
    pub fn new() -> Self {
        EventQueue { heap: BinaryHeap::new(), now: 0, next_seq: 0 }
    }

    #[inline]
    pub fn now(&self) -> Cycle {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Enqueues `action` to fire at `fire_cycle`.
    ///
    /// # Panics
    ///
    /// Scheduling into the past is a simulator bug and panics.
    pub fn schedule(&mut self, fire_cycle: Cycle, action: A) {
        assert!(fire_cycle >= self.now, "event scheduled in the past: {fire_cycle} < now {}", self.now);
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Event { fire_cycle, seq, action });
    }

    /// Cycle of the earliest pending event.
    #[inline]
    pub fn peek_cycle(&self) -> Option<Cycle> {
        self.heap.peek().map(|e| e.fire_cycle)
    }

    /// Pops the next event and moves the clock to its cycle. `None` means the
    /// simulation has nothing left to do.
    pub fn advance(&mut self) -> Option<Event<A>> {
        let ev = self.heap.pop()?;
        debug_assert!(ev.fire_cycle >= self.now);
        self.now = ev.fire_cycle;
        Some(ev)
    }

    /// True when an action scheduled now for `cycle` would be the next thing
    /// to run, i.e. no pending event fires at or before `cycle`.
    #[inline]
    pub fn is_next(&self, cycle: Cycle) -> bool {
        self.peek_cycle().is_none_or(|c| c > cycle)
    }

    /// Moves the clock forward without popping. Only legal when nothing is
    /// pending at or before `cycle` (see [`EventQueue::is_next`]); this is the
    /// inline equivalent of scheduling an action at `cycle` and popping it.
    pub fn jump_to(&mut self, cycle: Cycle) {
        assert!(cycle >= self.now, "clock cannot move backwards");
        debug_assert!(self.is_next(cycle));
        self.now = cycle;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BusDirection {
    ToMemory,
    ToCache,
}

/// Bi-directional sector-wide bus. Each direction moves one sector per cycle
/// and the two directions are independent.
#[derive(Clone, Debug, Default)]
pub struct Bus {
    busy_until: [Cycle; 2],
    transfers: [u64; 2],
}

impl Bus {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    fn slot(dir: BusDirection) -> usize {
        match dir {
            BusDirection::ToMemory => 0,
            BusDirection::ToCache => 1,
        }
    }

    /// Reserves the next free transfer slot at or after `earliest` and returns
    /// the grant cycle. The sector is on the other side at `grant + 1`.
    pub fn acquire(&mut self, dir: BusDirection, earliest: Cycle) -> Cycle {
        let s = Self::slot(dir);
        let grant = earliest.max(self.busy_until[s]);
        self.busy_until[s] = grant + 1;
        self.transfers[s] += 1;
        grant
    }

    pub fn busy_until(&self, dir: BusDirection) -> Cycle {
        self.busy_until[Self::slot(dir)]
    }

    pub fn transfers(&self, dir: BusDirection) -> u64 {
        self.transfers[Self::slot(dir)]
    }
}
