//! Fully associative Vector Cache with long sectored lines and an embedded
//! write buffer.
//!
//! Each line carries per-sector valid and dirty bits. A dirty line chosen for
//! eviction is not copied anywhere: it is flagged as a write-buffer line in
//! place, so the number of lines available for regular data shrinks while the
//! buffer is occupied. Write-buffer lines leave either by being referenced
//! again (restored to regular, masks intact) or by completing their drain.

use crate::address::PhysAddr;
use crate::oracle::{Content, SectorWrite};
use crate::write_buffer::{DrainId, DrainJob, InFlightDrain};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LineMode {
    Regular,
    WriteBuffer { order: u64, drain: Option<InFlightDrain> },
}

#[derive(Clone, Debug)]
pub struct VectorLine {
    pub tag: u32,
    /// Line slot is allocated.
    pub valid: bool,
    pub valid_mask: u64,
    pub dirty_mask: u64,
    /// Sectors brought in by the prefetcher and not referenced since.
    pub prefetched_mask: u64,
    pub mode: LineMode,
    last_use: u64,
    contents: Box<[Content]>,
}

impl VectorLine {
    fn empty(sectors: usize) -> Self {
        VectorLine {
            tag: 0,
            valid: false,
            valid_mask: 0,
            dirty_mask: 0,
            prefetched_mask: 0,
            mode: LineMode::Regular,
            last_use: 0,
            contents: vec![Content(0); sectors].into_boxed_slice(),
        }
    }

    pub fn is_wb(&self) -> bool {
        matches!(self.mode, LineMode::WriteBuffer { .. })
    }

    pub fn is_regular(&self) -> bool {
        self.valid && !self.is_wb()
    }

    #[inline]
    pub fn sector_valid(&self, s: u32) -> bool {
        self.valid_mask >> s & 1 == 1
    }

    #[inline]
    pub fn sector_dirty(&self, s: u32) -> bool {
        self.dirty_mask >> s & 1 == 1
    }

    pub fn content(&self, s: u32) -> Content {
        self.contents[s as usize]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VcLookup {
    /// Sector valid in a regular line; `prefetched` is set when this is the
    /// first reference to a prefetched sector.
    SectorHit {
        prefetched: bool,
    },
    /// Regular line present, sector not valid.
    LineHitSectorMiss,
    /// Sector valid in a write-buffer line.
    WbHit,
    /// Write-buffer line with this tag exists but the sector is not valid.
    WbLineSectorMiss,
    Miss,
}

/// What an allocation displaced.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Allocation {
    /// Clean line dropped to make room.
    pub dropped: Option<u32>,
    /// Dirty lines flagged as write-buffer lines on the way.
    pub flagged: Vec<u32>,
}

/// Allocation must wait for a write-buffer line to drain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Blocked;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FillResult {
    Filled,
    Rejected,
}

#[derive(Clone, Debug)]
pub struct VectorCache {
    lines: Vec<VectorLine>,
    sectors_per_line: u32,
    offset_bits: u32,
    sector_bits: u32,
    wb_capacity: usize,
    tick: u64,
    wb_order: u64,
}

impl VectorCache {
    pub fn new(lines: u32, sectors_per_line: u32, sector_bytes: u32, wb_capacity: usize) -> Self {
        assert!(sectors_per_line.is_power_of_two() && sectors_per_line <= 64);
        assert!((lines as usize) > wb_capacity, "vector cache needs more lines than write-buffer slots");
        VectorCache {
            lines: (0..lines).map(|_| VectorLine::empty(sectors_per_line as usize)).collect(),
            sectors_per_line,
            offset_bits: sector_bytes.trailing_zeros(),
            sector_bits: sectors_per_line.trailing_zeros(),
            wb_capacity,
            tick: 0,
            wb_order: 0,
        }
    }

    pub fn sectors_per_line(&self) -> u32 {
        self.sectors_per_line
    }

    /// Splits a sector address into (tag, sector index).
    #[inline]
    pub fn split(&self, sector: PhysAddr) -> (u32, u32) {
        let s = (sector.0 >> self.offset_bits) & (self.sectors_per_line - 1);
        let tag = ((sector.0 as u64) >> (self.offset_bits + self.sector_bits)) as u32;
        (tag, s)
    }

    #[inline]
    pub fn sector_addr(&self, tag: u32, s: u32) -> PhysAddr {
        PhysAddr(((tag as u64) << (self.offset_bits + self.sector_bits) | (s as u64) << self.offset_bits) as u32)
    }

    #[inline]
    fn find(&self, tag: u32) -> Option<usize> {
        self.lines.iter().position(|l| l.valid && l.tag == tag)
    }

    pub fn line(&self, tag: u32) -> Option<&VectorLine> {
        self.find(tag).map(|i| &self.lines[i])
    }

    pub fn lines(&self) -> impl Iterator<Item = &VectorLine> {
        self.lines.iter().filter(|l| l.valid)
    }

    #[inline]
    fn bump(&mut self) -> u64 {
        self.tick += 1;
        self.tick
    }

    pub fn wb_count(&self) -> usize {
        self.lines.iter().filter(|l| l.valid && l.is_wb()).count()
    }

    pub fn regular_count(&self) -> usize {
        self.lines.iter().filter(|l| l.is_regular()).count()
    }

    /// Sector is valid in any line, regular or write-buffer.
    #[inline]
    pub fn holds(&self, sector: PhysAddr) -> bool {
        let (tag, s) = self.split(sector);
        self.find(tag).is_some_and(|i| self.lines[i].sector_valid(s))
    }

    pub fn content_of(&self, sector: PhysAddr) -> Option<Content> {
        let (tag, s) = self.split(sector);
        let l = &self.lines[self.find(tag)?];
        l.sector_valid(s).then(|| l.content(s))
    }

    /// Native lookup. A sector hit makes the line MRU and applies `write`.
    pub fn lookup(&mut self, sector: PhysAddr, write: Option<&SectorWrite>) -> VcLookup {
        let (tag, s) = self.split(sector);
        let Some(i) = self.find(tag) else {
            return VcLookup::Miss;
        };
        let valid = self.lines[i].sector_valid(s);
        match (self.lines[i].mode, valid) {
            (LineMode::Regular, true) => {
                let prefetched = self.touch(i, s, write);
                VcLookup::SectorHit { prefetched }
            }
            (LineMode::Regular, false) => VcLookup::LineHitSectorMiss,
            (LineMode::WriteBuffer { .. }, true) => VcLookup::WbHit,
            (LineMode::WriteBuffer { .. }, false) => VcLookup::WbLineSectorMiss,
        }
    }

    /// References a valid sector of a regular line: MRU, optional write,
    /// prefetch-usefulness bookkeeping. Returns true if the sector had been
    /// prefetched and not referenced before.
    fn touch(&mut self, i: usize, s: u32, write: Option<&SectorWrite>) -> bool {
        let t = self.bump();
        let line = &mut self.lines[i];
        line.last_use = t;
        let bit = 1u64 << s;
        let prefetched = line.prefetched_mask & bit != 0;
        line.prefetched_mask &= !bit;
        if let Some(w) = write {
            line.contents[s as usize] = line.contents[s as usize].apply(w);
            line.dirty_mask |= bit;
        }
        prefetched
    }

    /// Serves a reference to a valid sector of the line with `tag` (used for
    /// scalar references found here by cross lookup). Returns the
    /// prefetch-usefulness flag.
    pub fn access_sector(&mut self, sector: PhysAddr, write: Option<&SectorWrite>) -> bool {
        let (tag, s) = self.split(sector);
        let i = self.find(tag).expect("access to a missing vector line");
        assert!(self.lines[i].is_regular() && self.lines[i].sector_valid(s));
        self.touch(i, s, write)
    }

    /// Reverts a write-buffer line to a regular MRU line, keeping its masks.
    /// A drain in flight for it is orphaned.
    pub fn restore(&mut self, tag: u32) {
        let i = self.find(tag).expect("restoring a missing vector line");
        assert!(self.lines[i].is_wb(), "restoring a regular line");
        let t = self.bump();
        let line = &mut self.lines[i];
        line.mode = LineMode::Regular;
        line.last_use = t;
    }

    /// Allocates an empty MRU line for `tag`.
    ///
    /// Uses a free slot when one exists. Otherwise the LRU regular line is
    /// displaced: a clean one is dropped and its slot reused; a dirty one is
    /// flagged as a write-buffer line in place and the search continues. When
    /// the next victim is dirty and the write buffer is full, allocation is
    /// blocked until a write-buffer line drains; lines flagged so far stay
    /// flagged.
    pub fn allocate(&mut self, tag: u32) -> Result<Allocation, Blocked> {
        assert!(self.find(tag).is_none(), "tag {tag:#x} already present");
        let mut alloc = Allocation::default();
        loop {
            if let Some(i) = self.lines.iter().position(|l| !l.valid) {
                self.place(i, tag);
                return Ok(alloc);
            }
            let i = self
                .lines
                .iter()
                .enumerate()
                .filter(|(_, l)| l.is_regular())
                .min_by_key(|(_, l)| l.last_use)
                .map(|(i, _)| i)
                .expect("no regular line to evict");
            if self.lines[i].dirty_mask == 0 {
                alloc.dropped = Some(self.lines[i].tag);
                self.place(i, tag);
                return Ok(alloc);
            }
            if self.wb_count() >= self.wb_capacity {
                return Err(Blocked);
            }
            let order = self.wb_order;
            self.wb_order += 1;
            let line = &mut self.lines[i];
            line.mode = LineMode::WriteBuffer { order, drain: None };
            line.prefetched_mask = 0;
            alloc.flagged.push(line.tag);
        }
    }

    /// True when [`VectorCache::allocate`] would block right now.
    pub fn allocation_blocked(&self) -> bool {
        if self.lines.iter().any(|l| !l.valid) {
            return false;
        }
        let mut regular: Vec<&VectorLine> = self.lines.iter().filter(|l| l.is_regular()).collect();
        regular.sort_by_key(|l| l.last_use);
        let dirty_prefix = regular.iter().take_while(|l| l.dirty_mask != 0).count();
        let room = self.wb_capacity.saturating_sub(self.wb_count());
        dirty_prefix > room || (dirty_prefix == regular.len() && dirty_prefix >= room)
    }

    fn place(&mut self, i: usize, tag: u32) {
        let t = self.bump();
        let line = &mut self.lines[i];
        line.tag = tag;
        line.valid = true;
        line.valid_mask = 0;
        line.dirty_mask = 0;
        line.prefetched_mask = 0;
        line.mode = LineMode::Regular;
        line.last_use = t;
    }

    /// Validates sector `s` of an existing line (demand fill or migration).
    pub fn install_sector(&mut self, tag: u32, s: u32, dirty: bool, content: Content) {
        let i = self.find(tag).expect("installing into a missing vector line");
        let line = &mut self.lines[i];
        let bit = 1u64 << s;
        line.valid_mask |= bit;
        line.prefetched_mask &= !bit;
        if dirty {
            line.dirty_mask |= bit;
        } else {
            line.dirty_mask &= !bit;
        }
        line.contents[s as usize] = content;
    }

    /// Applies a write to a valid sector.
    pub fn write_sector(&mut self, tag: u32, s: u32, w: &SectorWrite) {
        let i = self.find(tag).expect("writing a missing vector line");
        let line = &mut self.lines[i];
        debug_assert!(line.sector_valid(s));
        line.contents[s as usize] = line.contents[s as usize].apply(w);
        line.dirty_mask |= 1 << s;
    }

    /// Fills a prefetched sector. Only an invalid sector of an existing
    /// regular line is filled; recency is not touched and nothing is ever
    /// allocated or evicted.
    pub fn prefetch_fill(&mut self, tag: u32, s: u32, content: Content) -> FillResult {
        match self.find(tag) {
            Some(i) if self.lines[i].is_regular() && !self.lines[i].sector_valid(s) => {
                let line = &mut self.lines[i];
                let bit = 1u64 << s;
                line.valid_mask |= bit;
                line.dirty_mask &= !bit;
                line.prefetched_mask |= bit;
                line.contents[s as usize] = content;
                FillResult::Filled
            }
            _ => FillResult::Rejected,
        }
    }

    /// First sector after `after` that is not valid in the regular line `tag`.
    pub fn next_missing_sector(&self, tag: u32, after: u32) -> Option<u32> {
        let l = &self.lines[self.find(tag)?];
        if !l.is_regular() {
            return None;
        }
        (after + 1..self.sectors_per_line).find(|&s| !l.sector_valid(s))
    }

    /// Oldest write-buffer line.
    pub fn wb_oldest(&self) -> Option<u32> {
        self.lines
            .iter()
            .filter_map(|l| match l.mode {
                LineMode::WriteBuffer { order, .. } if l.valid => Some((order, l.tag)),
                _ => None,
            })
            .min()
            .map(|(_, t)| t)
    }

    pub fn is_draining(&self) -> bool {
        self.lines.iter().any(|l| matches!(l.mode, LineMode::WriteBuffer { drain: Some(_), .. }) && l.valid)
    }

    /// Starts writing back the oldest write-buffer line not already draining:
    /// one write per valid and dirty sector. A line with nothing dirty is
    /// released immediately.
    pub fn start_drain(&mut self, id: DrainId) -> Option<DrainJob> {
        let i = self
            .lines
            .iter()
            .enumerate()
            .filter_map(|(i, l)| match l.mode {
                LineMode::WriteBuffer { order, drain: None } if l.valid => Some((order, i)),
                _ => None,
            })
            .min()
            .map(|(_, i)| i)?;
        let sector_addr = |s: u32| self.sector_addr(self.lines[i].tag, s);
        let line = &self.lines[i];
        let dirty = line.dirty_mask & line.valid_mask;
        let writes: Vec<(PhysAddr, Content)> = (0..self.sectors_per_line)
            .filter(|s| dirty >> s & 1 == 1)
            .map(|s| (sector_addr(s), line.content(s)))
            .collect();
        let line = &mut self.lines[i];
        if writes.is_empty() {
            *line = VectorLine::empty(self.sectors_per_line as usize);
            return Some(DrainJob { id, writes, freed_now: true });
        }
        line.dirty_mask = 0;
        if let LineMode::WriteBuffer { drain, .. } = &mut line.mode {
            *drain = Some(InFlightDrain { id, outstanding: writes.len() as u32 });
        }
        Some(DrainJob { id, writes, freed_now: false })
    }

    /// One write of drain `id` completed. Returns true when the line was freed.
    pub fn drain_done(&mut self, id: DrainId) -> bool {
        let hit = self
            .lines
            .iter()
            .position(|l| l.valid && matches!(l.mode, LineMode::WriteBuffer { drain: Some(d), .. } if d.id == id));
        let Some(i) = hit else { return false };
        let n = self.sectors_per_line as usize;
        let line = &mut self.lines[i];
        if let LineMode::WriteBuffer { drain: Some(d), .. } = &mut line.mode {
            d.outstanding -= 1;
            if d.outstanding == 0 {
                *line = VectorLine::empty(n);
                return true;
            }
        }
        false
    }

    /// Writes back every dirty sector and releases write-buffer lines.
    pub fn flush(&mut self) -> Vec<(PhysAddr, Content)> {
        let mut out = Vec::new();
        for i in 0..self.lines.len() {
            let l = &self.lines[i];
            if !l.valid {
                continue;
            }
            let dirty = l.dirty_mask & l.valid_mask;
            for s in 0..self.sectors_per_line {
                if dirty >> s & 1 == 1 {
                    out.push((self.sector_addr(l.tag, s), l.content(s)));
                }
            }
            let l = &mut self.lines[i];
            l.dirty_mask = 0;
            if l.is_wb() {
                *l = VectorLine::empty(self.sectors_per_line as usize);
            }
        }
        out
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        let valid: Vec<&VectorLine> = self.lines.iter().filter(|l| l.valid).collect();
        for (a, la) in valid.iter().enumerate() {
            if la.dirty_mask & !la.valid_mask != 0 {
                return Err(format!("line {:#x}: dirty sector not valid", la.tag));
            }
            if la.prefetched_mask & !la.valid_mask != 0 {
                return Err(format!("line {:#x}: prefetched sector not valid", la.tag));
            }
            for lb in &valid[a + 1..] {
                if la.tag == lb.tag {
                    return Err(format!("duplicate vector tag {:#x}", la.tag));
                }
                if la.is_regular() && lb.is_regular() && la.last_use == lb.last_use {
                    return Err("duplicate LRU rank among regular lines".into());
                }
            }
        }
        if self.wb_count() > self.wb_capacity {
            return Err(format!("{} write-buffer lines exceed capacity {}", self.wb_count(), self.wb_capacity));
        }
        Ok(())
    }

    /// Multiset of (tag, is_wb) pairs, for non-pollution checks.
    pub fn tag_modes(&self) -> Vec<(u32, bool)> {
        let mut v: Vec<(u32, bool)> = self.lines().map(|l| (l.tag, l.is_wb())).collect();
        v.sort_unstable();
        v
    }
}
