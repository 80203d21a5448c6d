//! The timing simulator: an in-order core replaying a trace against either
//! the split scalar/vector hierarchy or the unified baseline cache, backed by
//! the banked DRAM model.
//!
//! The core blocks on every sector access. Write-back drains and prefetches
//! run in the background as events. Memory contents are tracked as sector
//! fingerprints so the run can be checked against a flat shadow memory.

use rustc_hash::FxHashMap;

use crate::address::PhysAddr;
use crate::config::{ConfigError, Hierarchy, PrefetchMode, SimConfig};
use crate::dram::{Dest, Dram, LineGeometry, MemoryRequest, RequestKind, Timing};
use crate::engine::{Bus, BusDirection, Cycle, EventQueue};
use crate::oracle::{Content, OracleMemory, SectorStore, SectorWrite};
use crate::scalar_cache::{Lookup, SetAssocCache};
use crate::trace::{coalesce, Origin, SectorAccess, TraceEvent};
use crate::vector_cache::{FillResult, VcLookup, VectorCache};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AccessKind {
    NativeHit,
    WbRestore,
    CrossHit,
    Miss,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AccessOutcome {
    pub kind: AccessKind,
    pub latency: Cycle,
    /// The demand read sent to memory, if any.
    pub demand: Option<MemoryRequest>,
    /// Write-backs started by this access (eager or compulsory drains).
    pub writebacks: u32,
}

/// Per-run counters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Stats {
    pub total_cycles: u64,
    pub compute_cycles: u64,
    pub accesses: u64,
    pub scalar_accesses: u64,
    pub vector_accesses: u64,
    pub native_hits: u64,
    pub cross_hits: u64,
    pub wb_restores: u64,
    pub misses: u64,
    pub latency_sum: u64,
    pub demand_reads: u64,
    pub ras: u64,
    pub cas: u64,
    pub pre: u64,
    pub writebacks: u64,
    pub flushed: u64,
    pub pf_issued: u64,
    pub pf_filled: u64,
    pub pf_rejected: u64,
    pub pf_useful: u64,
    pub migrations: u64,
    pub compulsory_stalls: u64,
}

impl Stats {
    /// Mean sector-access latency; 0 for an empty run.
    pub fn amat(&self) -> f64 {
        if self.accesses == 0 {
            0.0
        } else {
            self.latency_sum as f64 / self.accesses as f64
        }
    }
}

/// First point where the simulated data disagreed with the shadow memory.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleFailure {
    pub sector: PhysAddr,
    pub cycle: Cycle,
    pub expected: Content,
    pub found: Option<Content>,
}

impl std::fmt::Display for OracleFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "sector {} diverged at cycle {}: expected {:#018x}, ", self.sector, self.cycle, self.expected.0)?;
        match self.found {
            Some(c) => write!(f, "found {:#018x}", c.0),
            None => write!(f, "sector not cached"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub stats: Stats,
    pub failure: Option<OracleFailure>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Action {
    BankComplete(usize),
    Deliver { req: MemoryRequest, content: Content },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Wait {
    /// The scalar (or white) cache needs a write-buffer slot for its victim.
    ScalarSlot,
    /// The vector cache cannot allocate a line until a write-buffer line drains.
    VectorLine,
}

enum Step {
    Done(AccessKind, Cycle),
    Blocked(Wait),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum DrainSource {
    Scalar,
    Vector,
}

pub struct Simulator {
    cfg: SimConfig,
    /// Scalar Cache, or the white cache in the baseline hierarchy.
    sc: SetAssocCache,
    vc: VectorCache,
    dram: Dram,
    bus: Bus,
    queue: EventQueue<Action>,
    line: LineGeometry,
    memory: SectorStore,
    oracle: Option<OracleMemory>,
    stats: Stats,
    core_time: Cycle,
    next_id: u64,
    write_stamp: u64,
    demand: Option<MemoryRequest>,
    /// Prefetches enqueued but not yet delivered, by sector.
    prefetches: FxHashMap<PhysAddr, MemoryRequest>,
    demand_result: Option<(Cycle, Content)>,
    vc_freed: u64,
    ending: bool,
    failure: Option<OracleFailure>,
    spawned_writebacks: u32,
    scratch: Vec<SectorAccess>,
}

impl Simulator {
    pub fn new(cfg: &SimConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let cap = cfg.wb_capacity as usize;
        let sc = match cfg.hierarchy {
            Hierarchy::Bicameral => SetAssocCache::new(cfg.sc_sets, cfg.sc_ways, cfg.sector_bytes, cap),
            Hierarchy::White => SetAssocCache::new(cfg.wc_sets, cfg.wc_ways, cfg.sector_bytes, cap),
        };
        Ok(Simulator {
            cfg: cfg.clone(),
            sc,
            vc: VectorCache::new(cfg.vc_lines, cfg.vc_sectors_per_line, cfg.sector_bytes, cap),
            dram: Dram::new(Timing { ras: cfg.lat_ras, cas: cfg.lat_cas, pre: cfg.lat_pre }),
            bus: Bus::new(),
            queue: EventQueue::new(),
            line: LineGeometry { sector_bytes: cfg.sector_bytes, sectors_per_line: cfg.vc_sectors_per_line },
            memory: SectorStore::new(),
            oracle: Some(OracleMemory::new()),
            stats: Stats::default(),
            core_time: 0,
            next_id: 0,
            write_stamp: 0,
            demand: None,
            prefetches: FxHashMap::default(),
            demand_result: None,
            vc_freed: 0,
            ending: false,
            failure: None,
            spawned_writebacks: 0,
            scratch: Vec::new(),
        })
    }

    /// Turns the shadow-memory checks on or off (on by default).
    pub fn with_oracle(mut self, on: bool) -> Self {
        self.oracle = on.then(OracleMemory::new);
        self
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn now(&self) -> Cycle {
        self.core_time
    }

    pub fn stats(&self) -> Stats {
        let mut s = self.stats;
        let c = self.dram.counters();
        s.ras = c.ras;
        s.cas = c.cas;
        s.pre = c.pre;
        s
    }

    pub fn failure(&self) -> Option<OracleFailure> {
        self.failure
    }

    pub fn scalar_cache(&self) -> &SetAssocCache {
        &self.sc
    }

    pub fn vector_cache(&self) -> &VectorCache {
        &self.vc
    }

    pub fn dram(&self) -> &Dram {
        &self.dram
    }

    pub fn memory(&self) -> &SectorStore {
        &self.memory
    }

    fn fresh_id(&mut self) -> u64 {
        self.next_id += 1;
        self.next_id
    }

    fn bicameral(&self) -> bool {
        self.cfg.hierarchy == Hierarchy::Bicameral
    }

    /// Runs a whole trace, flushes, and compares against the shadow memory.
    /// Stops early at the first divergence.
    pub fn run(mut self, trace: impl IntoIterator<Item = TraceEvent>) -> RunReport {
        for ev in trace {
            self.step(&ev);
            if self.failure.is_some() {
                break;
            }
        }
        self.finish()
    }

    /// Executes one trace event.
    pub fn step(&mut self, ev: &TraceEvent) {
        match ev {
            TraceEvent::Compute { cycles } => {
                self.core_time += cycles;
                self.stats.compute_cycles += cycles;
            }
            _ => {
                let mut accs = std::mem::take(&mut self.scratch);
                accs.clear();
                coalesce(ev, self.cfg.sector_bytes, &mut accs);
                for a in &accs {
                    self.access(a);
                }
                self.scratch = accs;
            }
        }
    }

    /// Processes every event due at or before `t`.
    fn settle(&mut self, t: Cycle) {
        while matches!(self.queue.peek_cycle(), Some(c) if c <= t) {
            let ev = self.queue.advance().unwrap();
            self.handle(ev.action);
        }
    }

    /// Runs events until `done` holds, then moves the core to that point.
    fn wait_until(&mut self, mut done: impl FnMut(&Self) -> bool) {
        while !done(self) {
            let ev = self.queue.advance().expect("core waiting with no events pending");
            self.handle(ev.action);
        }
        self.core_time = self.core_time.max(self.queue.now());
    }

    /// Performs one sector access with the core blocked until it completes.
    pub fn access(&mut self, a: &SectorAccess) -> AccessOutcome {
        self.settle(self.core_time);
        let start = self.core_time;
        let write = a.write.then(|| {
            self.write_stamp += 1;
            SectorWrite { mask: a.mask, stamp: self.write_stamp, full: a.full_sector_write }
        });
        if let (Some(o), Some(w)) = (self.oracle.as_mut(), write.as_ref()) {
            o.write(a.sector, w);
        }
        self.spawned_writebacks = 0;
        let mut demand = None;
        let (kind, done) = loop {
            let step = if self.bicameral() {
                self.bicameral_step(a, write.as_ref(), &mut demand)
            } else {
                self.white_step(a, write.as_ref(), &mut demand)
            };
            match step {
                Step::Done(kind, at) => break (kind, at),
                Step::Blocked(w) => self.stall(w, a.sector),
            }
        };
        let latency = done - start;
        self.core_time = done;
        let s = &mut self.stats;
        s.accesses += 1;
        match a.origin {
            Origin::Scalar => s.scalar_accesses += 1,
            Origin::Vector => s.vector_accesses += 1,
        }
        match kind {
            AccessKind::NativeHit => s.native_hits += 1,
            AccessKind::WbRestore => s.wb_restores += 1,
            AccessKind::CrossHit => s.cross_hits += 1,
            AccessKind::Miss => s.misses += 1,
        }
        s.latency_sum += latency;
        debug_assert!(self.exclusive(a.sector), "{} held by both caches", a.sector);
        self.check_against_oracle(a.sector);
        AccessOutcome { kind, latency, demand, writebacks: self.spawned_writebacks }
    }

    fn check_against_oracle(&mut self, sector: PhysAddr) {
        if self.failure.is_some() {
            return;
        }
        let Some(o) = &self.oracle else { return };
        let expected = o.read(sector);
        let found = self.cached_content(sector);
        if found != Some(expected) {
            self.failure = Some(OracleFailure { sector, cycle: self.core_time, expected, found });
        }
    }

    /// Current contents of `sector` in whichever cache structure holds it.
    pub fn cached_content(&self, sector: PhysAddr) -> Option<Content> {
        self.sc.content_of(sector).or_else(|| if self.bicameral() { self.vc.content_of(sector) } else { None })
    }

    /// The sector is not held by both halves at once.
    pub fn exclusive(&self, sector: PhysAddr) -> bool {
        !(self.bicameral() && self.sc.holds(sector) && self.vc.holds(sector))
    }

    /// Full exclusivity and structure check.
    pub fn check_invariants(&self) -> Result<(), String> {
        self.sc.check_invariants()?;
        if self.bicameral() {
            self.vc.check_invariants()?;
            for s in self.sc.resident().chain(self.sc.wb.iter().map(|e| e.sector)) {
                if self.vc.holds(s) {
                    return Err(format!("{s} held by both caches"));
                }
            }
        }
        Ok(())
    }

    fn stall(&mut self, wait: Wait, sector: PhysAddr) {
        self.stats.compulsory_stalls += 1;
        let at = self.core_time;
        match wait {
            Wait::ScalarSlot => {
                if !self.sc.wb.is_draining() {
                    self.drain(DrainSource::Scalar, at);
                }
                self.wait_until(|s| !s.sc.needs_wb_slot(sector));
            }
            Wait::VectorLine => {
                let before = self.vc_freed;
                if !self.vc.is_draining() {
                    self.drain(DrainSource::Vector, at);
                }
                self.wait_until(|s| s.vc_freed != before);
            }
        }
    }

    fn bicameral_step(
        &mut self,
        a: &SectorAccess,
        w: Option<&SectorWrite>,
        demand: &mut Option<MemoryRequest>,
    ) -> Step {
        let t = self.core_time;
        let lk = self.cfg.lat_lookup;
        let s = a.sector;
        match a.origin {
            Origin::Scalar => match self.sc.lookup(s, w) {
                Lookup::Hit => Step::Done(AccessKind::NativeHit, t + lk),
                Lookup::WbHit => {
                    self.sc.restore(s);
                    if let Some(w) = w {
                        self.sc.write(s, w);
                    }
                    Step::Done(AccessKind::WbRestore, t + lk)
                }
                Lookup::Miss => match self.vc.lookup(s, w) {
                    VcLookup::SectorHit { prefetched } => {
                        self.stats.pf_useful += prefetched as u64;
                        Step::Done(AccessKind::CrossHit, t + 2 * lk)
                    }
                    VcLookup::WbHit => {
                        let (tag, _) = self.vc.split(s);
                        self.vc.restore(tag);
                        let prefetched = self.vc.access_sector(s, w);
                        self.stats.pf_useful += prefetched as u64;
                        Step::Done(AccessKind::CrossHit, t + 2 * lk)
                    }
                    _ => {
                        if self.sc.needs_wb_slot(s) {
                            return Step::Blocked(Wait::ScalarSlot);
                        }
                        let ready = t + 2 * lk;
                        let (done, content) = self.fetch(s, Dest::Scalar, ready, demand);
                        self.sc.install_with_writeback(s, false, content);
                        if let Some(w) = w {
                            self.sc.write(s, w);
                        }
                        Step::Done(AccessKind::Miss, done)
                    }
                },
            },
            Origin::Vector => {
                let (tag, idx) = self.vc.split(s);
                let found = self.vc.lookup(s, w);
                match found {
                    VcLookup::SectorHit { prefetched } => {
                        self.stats.pf_useful += prefetched as u64;
                        return Step::Done(AccessKind::NativeHit, t + lk);
                    }
                    VcLookup::WbHit => {
                        self.vc.restore(tag);
                        let prefetched = self.vc.access_sector(s, w);
                        self.stats.pf_useful += prefetched as u64;
                        return Step::Done(AccessKind::WbRestore, t + lk);
                    }
                    VcLookup::WbLineSectorMiss => self.vc.restore(tag),
                    VcLookup::LineHitSectorMiss | VcLookup::Miss => {}
                }
                if found == VcLookup::Miss && self.vc.allocate(tag).is_err() {
                    return Step::Blocked(Wait::VectorLine);
                }
                let ready = t + 2 * lk;
                // Cross lookup: a vector reference found in the scalar half
                // moves over, dirty state and all.
                let migrated = match self.sc.invalidate(s) {
                    Some(l) => Some((l.content, l.dirty)),
                    None => self.sc.wb.take(s).map(|e| (e.content, e.dirty)),
                };
                if let Some((content, dirty)) = migrated {
                    self.vc.install_sector(tag, idx, dirty, content);
                    if let Some(w) = w {
                        self.vc.write_sector(tag, idx, w);
                    }
                    self.stats.migrations += 1;
                    return Step::Done(AccessKind::CrossHit, ready);
                }
                match w {
                    Some(w) if w.full && !self.cfg.fetch_on_full_write => {
                        self.vc.install_sector(tag, idx, true, Content::initial(s).apply(w));
                        self.eager_drain(ready);
                        Step::Done(AccessKind::Miss, ready)
                    }
                    _ => {
                        let (done, content) = self.fetch(s, Dest::VectorLine, ready, demand);
                        self.vc.install_sector(tag, idx, false, content);
                        if let Some(w) = w {
                            self.vc.write_sector(tag, idx, w);
                        }
                        if self.cfg.prefetch == PrefetchMode::Ideal {
                            self.ideal_fill(tag, idx);
                        }
                        Step::Done(AccessKind::Miss, done)
                    }
                }
            }
        }
    }

    fn white_step(&mut self, a: &SectorAccess, w: Option<&SectorWrite>, demand: &mut Option<MemoryRequest>) -> Step {
        let t = self.core_time;
        let lk = self.cfg.lat_lookup;
        let s = a.sector;
        match self.sc.lookup(s, w) {
            Lookup::Hit => Step::Done(AccessKind::NativeHit, t + lk),
            Lookup::WbHit => {
                self.sc.restore(s);
                if let Some(w) = w {
                    self.sc.write(s, w);
                }
                Step::Done(AccessKind::WbRestore, t + lk)
            }
            Lookup::Miss => {
                if self.sc.needs_wb_slot(s) {
                    return Step::Blocked(Wait::ScalarSlot);
                }
                let (done, content) = self.fetch(s, Dest::White, t + lk, demand);
                self.sc.install_with_writeback(s, false, content);
                if let Some(w) = w {
                    self.sc.write(s, w);
                }
                Step::Done(AccessKind::Miss, done)
            }
        }
    }

    /// Sends a demand read, runs the eager-drain check, and waits for the
    /// data. Returns the delivery cycle and the sector contents.
    /// A vector-line demand for a sector already being prefetched waits for
    /// the prefetch instead of reading it again.
    fn fetch(
        &mut self,
        sector: PhysAddr,
        dest: Dest,
        ready: Cycle,
        out: &mut Option<MemoryRequest>,
    ) -> (Cycle, Content) {
        if let Some(&pf) = self.prefetches.get(&sector).filter(|_| dest == Dest::VectorLine) {
            *out = Some(pf);
            self.demand = Some(pf);
            self.demand_result = None;
            self.eager_drain(ready);
            self.wait_until(|s| s.demand_result.is_some());
            self.demand = None;
            let (at, content) = self.demand_result.take().unwrap();
            return (at.max(ready), content);
        }
        let req = MemoryRequest {
            kind: RequestKind::DemandRead,
            sector,
            dest,
            issue_cycle: self.core_time,
            ready_at: ready,
            token: self.fresh_id(),
        };
        *out = Some(req);
        self.stats.demand_reads += 1;
        self.demand = Some(req);
        self.demand_result = None;
        self.enqueue(req);
        self.eager_drain(ready);
        self.wait_until(|s| s.demand_result.is_some());
        self.demand = None;
        self.demand_result.take().unwrap()
    }

    fn enqueue(&mut self, req: MemoryRequest) {
        if let Some(st) = self.dram.enqueue(req, self.core_time) {
            self.queue.schedule(st.completes_at, Action::BankComplete(st.bank));
        }
    }

    fn eager_drain(&mut self, at: Cycle) {
        if self.sc.wb.len() >= self.cfg.drain_threshold_sc as usize {
            self.drain(DrainSource::Scalar, at);
        }
        if self.bicameral() && self.vc.wb_count() >= self.cfg.drain_threshold_vc as usize {
            self.drain(DrainSource::Vector, at);
        }
    }

    /// Starts writing back the oldest idle write-buffer entry of `src`.
    fn drain(&mut self, src: DrainSource, at: Cycle) {
        let id = self.fresh_id();
        let job = match src {
            DrainSource::Scalar => self.sc.wb.start_drain(id),
            DrainSource::Vector => self.vc.start_drain(id),
        };
        let Some(job) = job else { return };
        if job.freed_now {
            if src == DrainSource::Vector {
                self.vc_freed += 1;
            }
            return;
        }
        let dest = match (src, self.cfg.hierarchy) {
            (DrainSource::Vector, _) => Dest::VectorLine,
            (DrainSource::Scalar, Hierarchy::Bicameral) => Dest::Scalar,
            (DrainSource::Scalar, Hierarchy::White) => Dest::White,
        };
        for (sector, content) in job.writes {
            self.memory.write(sector, content);
            let grant = self.bus.acquire(BusDirection::ToMemory, at);
            let req = MemoryRequest {
                kind: RequestKind::WriteBack,
                sector,
                dest,
                issue_cycle: at,
                ready_at: grant + 1,
                token: id,
            };
            self.enqueue(req);
            self.stats.writebacks += 1;
            self.spawned_writebacks += 1;
        }
    }

    fn handle(&mut self, action: Action) {
        let now = self.queue.now();
        match action {
            Action::BankComplete(bank) => {
                let (req, next) = self.dram.complete(bank, now, self.line);
                if let Some(st) = next {
                    self.queue.schedule(st.completes_at, Action::BankComplete(st.bank));
                }
                if req.kind.is_read() {
                    let content = self.memory.read(req.sector);
                    let grant = self.bus.acquire(BusDirection::ToCache, now);
                    self.queue.schedule(grant + 1, Action::Deliver { req, content });
                } else {
                    match req.dest {
                        Dest::VectorLine => {
                            if self.vc.drain_done(req.token) {
                                self.vc_freed += 1;
                            }
                        }
                        _ => {
                            self.sc.wb.drain_done(req.token);
                        }
                    }
                }
                if self.dram.bank(bank).is_idle() {
                    self.consider_prefetch();
                }
            }
            Action::Deliver { req, content } => match req.kind {
                RequestKind::DemandRead => {
                    if self.demand.is_some_and(|d| d.token == req.token) {
                        self.demand_result = Some((now, content));
                    }
                }
                RequestKind::PrefetchRead => {
                    self.prefetches.remove(&req.sector);
                    if self.demand.is_some_and(|d| d.token == req.token) {
                        self.stats.pf_filled += 1;
                        self.stats.pf_useful += 1;
                        self.demand_result = Some((now, content));
                    } else {
                        self.prefetch_fill(req.sector, content);
                    }
                }
                RequestKind::WriteBack => unreachable!("write-backs deliver nothing"),
            },
        }
    }

    /// A prefetch must not place a sector that the scalar half holds or that
    /// the core is about to receive.
    fn prefetch_blocked(&self, sector: PhysAddr) -> bool {
        self.sc.holds(sector) || self.demand.is_some_and(|d| d.sector == sector)
    }

    /// Issues a prefetch on every idle bank whose last vector-line read has
    /// a following missing sector in a line still resident.
    fn consider_prefetch(&mut self) {
        if self.ending || self.cfg.prefetch != PrefetchMode::On || !self.bicameral() {
            return;
        }
        let candidates: Vec<_> = self.dram.prefetch_candidates().collect();
        for (_, lr) in candidates {
            let mut from = lr.sector_idx;
            let target = loop {
                let Some(idx) = self.vc.next_missing_sector(lr.vc_tag, from) else { break None };
                let addr = self.vc.sector_addr(lr.vc_tag, idx);
                if !self.prefetch_blocked(addr) && !self.prefetches.contains_key(&addr) {
                    break Some(addr);
                }
                from = idx;
            };
            let Some(sector) = target else { continue };
            let req = MemoryRequest {
                kind: RequestKind::PrefetchRead,
                sector,
                dest: Dest::VectorLine,
                issue_cycle: self.queue.now(),
                ready_at: self.queue.now(),
                token: self.fresh_id(),
            };
            self.stats.pf_issued += 1;
            self.prefetches.insert(sector, req);
            if let Some(st) = self.dram.enqueue(req, self.queue.now()) {
                self.queue.schedule(st.completes_at, Action::BankComplete(st.bank));
            }
        }
    }

    fn prefetch_fill(&mut self, sector: PhysAddr, content: Content) {
        let (tag, idx) = self.vc.split(sector);
        #[cfg(debug_assertions)]
        let resident = self.vc.tag_modes();
        let filled = !self.prefetch_blocked(sector) && self.vc.prefetch_fill(tag, idx, content) == FillResult::Filled;
        #[cfg(debug_assertions)]
        debug_assert_eq!(resident, self.vc.tag_modes(), "prefetch fill changed the resident lines");
        if filled {
            self.stats.pf_filled += 1;
        } else {
            self.stats.pf_rejected += 1;
        }
    }

    /// Fills every other missing sector of the line for free.
    fn ideal_fill(&mut self, tag: u32, demanded: u32) {
        for idx in 0..self.vc.sectors_per_line() {
            if idx == demanded {
                continue;
            }
            let addr = self.vc.sector_addr(tag, idx);
            let valid = self.vc.line(tag).is_some_and(|l| l.sector_valid(idx));
            if !valid && !self.sc.holds(addr) {
                let content = self.memory.read(addr);
                self.vc.install_sector(tag, idx, false, content);
            }
        }
    }

    /// Ends the run: lets background traffic finish, writes back everything
    /// still dirty and compares memory with the shadow image.
    pub fn finish(mut self) -> RunReport {
        self.settle(self.core_time);
        self.stats.total_cycles = self.core_time;
        self.ending = true;
        while let Some(ev) = self.queue.advance() {
            self.handle(ev.action);
        }
        let mut dirty = self.sc.flush();
        if self.bicameral() {
            dirty.extend(self.vc.flush());
        }
        self.stats.flushed = dirty.len() as u64;
        for (sector, content) in dirty {
            self.memory.write(sector, content);
        }
        if self.failure.is_none() {
            if let Some(o) = &self.oracle {
                if let Some(d) = o.image().first_divergence(&self.memory) {
                    self.failure = Some(OracleFailure {
                        sector: d.sector,
                        cycle: self.stats.total_cycles,
                        expected: d.expected,
                        found: Some(d.found),
                    });
                }
            }
        }
        RunReport { stats: self.stats(), failure: self.failure }
    }
}
