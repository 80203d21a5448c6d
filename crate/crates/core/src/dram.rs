//! Banked DRAM with one open row per bank, FCFS bank queues and
//! RAS/CAS/PRE timing.

use std::collections::VecDeque;

use crate::address::{dram_layout, DramCoord, PhysAddr};
use crate::engine::Cycle;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RequestKind {
    DemandRead,
    WriteBack,
    PrefetchRead,
}

impl RequestKind {
    pub fn is_read(self) -> bool {
        !matches!(self, RequestKind::WriteBack)
    }
}

/// Where the data of a read goes, or who owns a write-back.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Dest {
    VectorLine,
    Scalar,
    White,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MemoryRequest {
    pub kind: RequestKind,
    pub sector: PhysAddr,
    pub dest: Dest,
    pub issue_cycle: Cycle,
    /// Earliest cycle the bank may start serving it (the request is still
    /// crossing the bus or the cache pipeline before that).
    pub ready_at: Cycle,
    /// Caller-defined tag, echoed back on completion.
    pub token: u64,
}

/// Most recent vector-line read served by a bank; the prefetcher continues
/// from it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LastRead {
    pub vc_tag: u32,
    pub sector_idx: u32,
    pub row: u16,
}

/// Vector-line shape, used to turn a sector address into (tag, sector index).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LineGeometry {
    pub sector_bytes: u32,
    pub sectors_per_line: u32,
}

impl LineGeometry {
    pub fn split(&self, sector: PhysAddr) -> (u32, u32) {
        let off = self.sector_bytes.trailing_zeros();
        let idx = (sector.0 >> off) & (self.sectors_per_line - 1);
        (sector.0 >> (off + self.sectors_per_line.trailing_zeros()), idx)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowOutcome {
    Hit,
    Closed,
    Conflict,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Timing {
    pub ras: u64,
    pub cas: u64,
    pub pre: u64,
}

impl Timing {
    pub fn latency(&self, outcome: RowOutcome) -> u64 {
        match outcome {
            RowOutcome::Hit => self.cas,
            RowOutcome::Closed => self.ras + self.cas,
            RowOutcome::Conflict => self.pre + self.ras + self.cas,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DramCounters {
    pub ras: u64,
    pub cas: u64,
    pub pre: u64,
    pub reads: u64,
    pub writes: u64,
    pub prefetches: u64,
}

#[derive(Clone, Debug, Default)]
pub struct Bank {
    pub open_row: Option<u16>,
    /// Head is in service.
    queue: VecDeque<MemoryRequest>,
    pub busy_until: Cycle,
    pub last_read: Option<LastRead>,
}

impl Bank {
    pub fn is_idle(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn has_prefetch(&self) -> bool {
        self.queue.iter().any(|r| r.kind == RequestKind::PrefetchRead)
    }

    pub fn row_outcome(&self, row: u16) -> RowOutcome {
        match self.open_row {
            Some(r) if r == row => RowOutcome::Hit,
            None => RowOutcome::Closed,
            Some(_) => RowOutcome::Conflict,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Dram {
    banks: Vec<Bank>,
    timing: Timing,
    counters: DramCounters,
}

/// A bank started serving a request; its completion must be scheduled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Started {
    pub bank: usize,
    pub completes_at: Cycle,
}

impl Dram {
    pub fn new(timing: Timing) -> Self {
        Dram { banks: vec![Bank::default(); dram_layout::BANKS], timing, counters: DramCounters::default() }
    }

    pub fn timing(&self) -> Timing {
        self.timing
    }

    pub fn counters(&self) -> DramCounters {
        self.counters
    }

    pub fn banks(&self) -> &[Bank] {
        &self.banks
    }

    pub fn bank(&self, i: usize) -> &Bank {
        &self.banks[i]
    }

    pub fn bank_of(sector: PhysAddr) -> usize {
        DramCoord::decompose(sector).bank as usize
    }

    /// Cost of serving `row` on `bank` right now.
    pub fn service_latency(&self, bank: usize, row: u16) -> u64 {
        self.timing.latency(self.banks[bank].row_outcome(row))
    }

    pub fn all_idle(&self) -> bool {
        self.banks.iter().all(Bank::is_idle)
    }

    /// Appends `req` to its bank queue. If the bank was idle service starts
    /// at once and the completion cycle is returned.
    pub fn enqueue(&mut self, req: MemoryRequest, now: Cycle) -> Option<Started> {
        let b = Self::bank_of(req.sector);
        let bank = &mut self.banks[b];
        bank.queue.push_back(req);
        if bank.queue.len() == 1 {
            Some(self.start_head(b, now))
        } else {
            None
        }
    }

    fn start_head(&mut self, b: usize, now: Cycle) -> Started {
        let timing = self.timing;
        let bank = &mut self.banks[b];
        let req = *bank.queue.front().expect("starting an empty bank");
        let coord = DramCoord::decompose(req.sector);
        let outcome = bank.row_outcome(coord.row);
        match outcome {
            RowOutcome::Hit => {}
            RowOutcome::Closed => self.counters.ras += 1,
            RowOutcome::Conflict => {
                self.counters.pre += 1;
                self.counters.ras += 1;
            }
        }
        self.counters.cas += 1;
        match req.kind {
            RequestKind::DemandRead => self.counters.reads += 1,
            RequestKind::WriteBack => self.counters.writes += 1,
            RequestKind::PrefetchRead => self.counters.prefetches += 1,
        }
        bank.open_row = Some(coord.row);
        let start = now.max(bank.busy_until).max(req.ready_at);
        let done = start + timing.latency(outcome);
        bank.busy_until = done;
        Started { bank: b, completes_at: done }
    }

    /// Retires the request in service on `bank`. Returns it together with the
    /// next request's start, if any. Vector-line reads update the bank's
    /// last-read record.
    pub fn complete(&mut self, bank: usize, now: Cycle, line: LineGeometry) -> (MemoryRequest, Option<Started>) {
        let req = self.banks[bank].queue.pop_front().expect("completion on an empty bank");
        if req.kind.is_read() && req.dest == Dest::VectorLine {
            let (vc_tag, sector_idx) = line.split(req.sector);
            let row = DramCoord::decompose(req.sector).row;
            self.banks[bank].last_read = Some(LastRead { vc_tag, sector_idx, row });
        }
        let next = (!self.banks[bank].queue.is_empty()).then(|| self.start_head(bank, now));
        (req, next)
    }

    /// Banks that may receive a prefetch: idle, with a last read whose row is
    /// still open. Index order.
    pub fn prefetch_candidates(&self) -> impl Iterator<Item = (usize, LastRead)> + '_ {
        self.banks.iter().enumerate().filter_map(|(i, b)| {
            let lr = b.last_read?;
            (b.is_idle() && b.open_row == Some(lr.row)).then_some((i, lr))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: LineGeometry = LineGeometry { sector_bytes: 64, sectors_per_line: 16 };

    fn timing() -> Timing {
        Timing { ras: 28, cas: 11, pre: 11 }
    }

    fn read(sector: u32, at: Cycle) -> MemoryRequest {
        MemoryRequest {
            kind: RequestKind::DemandRead,
            sector: PhysAddr(sector),
            dest: Dest::Scalar,
            issue_cycle: at,
            ready_at: at,
            token: 0,
        }
    }

    /// Sector in `bank`, `row`, `column`.
    fn at(row: u32, bank: u32, column: u32) -> u32 {
        DramCoord { row: row as u16, bank: bank as u8, column: column as u8, offset: 0 }.recompose().0
    }

    #[test]
    fn latencies() {
        let t = timing();
        assert_eq!(t.latency(RowOutcome::Hit), 11);
        assert_eq!(t.latency(RowOutcome::Closed), 28 + 11);
        assert_eq!(t.latency(RowOutcome::Conflict), 11 + 28 + 11);
    }

    #[test]
    fn closed_then_open_then_conflict() {
        let mut d = Dram::new(timing());
        assert_eq!(d.service_latency(0, 5), 39);
        let s = d.enqueue(read(at(5, 0, 0), 0), 0).unwrap();
        assert_eq!(s.completes_at, 39);
        d.complete(0, 39, LINE);
        assert_eq!(d.service_latency(0, 5), 11);
        assert_eq!(d.service_latency(0, 6), 50);
        let s = d.enqueue(read(at(6, 0, 0), 39), 39).unwrap();
        assert_eq!(s.completes_at, 89);
        let c = d.counters();
        assert_eq!((c.ras, c.cas, c.pre), (2, 2, 1));
    }

    #[test]
    fn same_bank_same_row_serializes() {
        let mut d = Dram::new(timing());
        let first = d.enqueue(read(at(1, 2, 0), 100), 100).unwrap();
        assert!(d.enqueue(read(at(1, 2, 1), 100), 100).is_none());
        assert_eq!(first.completes_at, 139);
        let (_, next) = d.complete(2, 139, LINE);
        assert_eq!(next.unwrap().completes_at, 150);
    }

    #[test]
    fn different_banks_overlap() {
        let mut d = Dram::new(timing());
        let a = d.enqueue(read(at(1, 0, 0), 10), 10).unwrap();
        let b = d.enqueue(read(at(1, 1, 0), 10), 10).unwrap();
        assert_eq!((a.completes_at, b.completes_at), (49, 49));
    }

    #[test]
    fn write_then_read_is_fcfs() {
        let mut d = Dram::new(timing());
        let mut w = read(at(3, 4, 0), 0);
        w.kind = RequestKind::WriteBack;
        w.token = 7;
        d.enqueue(w, 0).unwrap();
        d.enqueue(read(at(9, 4, 0), 0), 0);
        let (done, next) = d.complete(4, 39, LINE);
        assert_eq!(done.token, 7);
        assert_eq!(next.unwrap().completes_at, 39 + 50);
    }

    #[test]
    fn ready_at_delays_start() {
        let mut d = Dram::new(timing());
        let mut r = read(at(0, 3, 0), 0);
        r.ready_at = 2;
        assert_eq!(d.enqueue(r, 0).unwrap().completes_at, 41);
    }

    #[test]
    fn vector_reads_set_last_read() {
        let mut d = Dram::new(timing());
        let mut r = read(at(7, 5, 3), 0);
        r.dest = Dest::VectorLine;
        d.enqueue(r, 0);
        d.complete(5, 39, LINE);
        let lr = d.bank(5).last_read.unwrap();
        assert_eq!((lr.sector_idx, lr.row), (3, 7));
        assert_eq!(lr.vc_tag, at(7, 5, 3) >> 10);
        assert_eq!(d.prefetch_candidates().count(), 1);
        // Scalar reads leave it alone.
        d.enqueue(read(at(7, 5, 9), 39), 39);
        d.complete(5, 50, LINE);
        assert_eq!(d.bank(5).last_read.unwrap().sector_idx, 3);
    }

    #[test]
    fn randomized_fcfs_per_bank() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut d = Dram::new(timing());
        let mut pending: Vec<(Cycle, usize)> = Vec::new();
        let mut order: Vec<Vec<u64>> = vec![Vec::new(); 8];
        let mut seen: Vec<Vec<u64>> = vec![Vec::new(); 8];
        let mut now = 0;
        for token in 0..2000u64 {
            now += rng.gen_range(0..20);
            while let Some(p) = pending.iter().position(|&(c, _)| c <= now) {
                let (c, b) = pending.remove(p);
                let (req, next) = d.complete(b, c, LINE);
                seen[b].push(req.token);
                if let Some(s) = next {
                    pending.push((s.completes_at, s.bank));
                }
            }
            let sector = rng.gen::<u32>() & !63;
            let mut r = read(sector, now);
            r.token = token;
            order[Dram::bank_of(r.sector)].push(token);
            if let Some(s) = d.enqueue(r, now) {
                pending.push((s.completes_at, s.bank));
            }
        }
        while let Some(&(c, b)) = pending.iter().min() {
            pending.retain(|&p| p != (c, b));
            let (req, next) = d.complete(b, c, LINE);
            seen[b].push(req.token);
            if let Some(s) = next {
                pending.push((s.completes_at, s.bank));
            }
        }
        assert_eq!(seen, order);
        let c = d.counters();
        assert_eq!(c.cas, 2000);
    }
}
