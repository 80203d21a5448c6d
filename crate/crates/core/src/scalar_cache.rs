//! Set-associative cache with one-sector lines, LRU replacement, write-back
//! and a disjoint write buffer.
//!
//! The Scalar Cache of the bicameral hierarchy and the white baseline cache
//! share this structure and differ only in geometry.

use crate::address::PhysAddr;
use crate::oracle::{Content, SectorWrite};
use crate::write_buffer::{WbEntry, WriteBuffer};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Line {
    pub tag: u32,
    pub valid: bool,
    pub dirty: bool,
    last_use: u64,
    pub content: Content,
}

impl Line {
    const EMPTY: Line = Line { tag: 0, valid: false, dirty: false, last_use: 0, content: Content(0) };
}

/// A line pushed out of the array.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Evicted {
    pub sector: PhysAddr,
    pub dirty: bool,
    pub content: Content,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Lookup {
    Hit,
    /// The sector sits in the write buffer and can be restored.
    WbHit,
    Miss,
}

#[derive(Clone, Debug)]
pub struct SetAssocCache {
    sets: u32,
    ways: u32,
    offset_bits: u32,
    set_bits: u32,
    lines: Vec<Line>,
    tick: u64,
    pub wb: WriteBuffer,
}

impl SetAssocCache {
    pub fn new(sets: u32, ways: u32, sector_bytes: u32, wb_capacity: usize) -> Self {
        assert!(sets.is_power_of_two() && ways > 0 && sector_bytes.is_power_of_two());
        SetAssocCache {
            sets,
            ways,
            offset_bits: sector_bytes.trailing_zeros(),
            set_bits: sets.trailing_zeros(),
            lines: vec![Line::EMPTY; (sets * ways) as usize],
            tick: 0,
            wb: WriteBuffer::new(wb_capacity),
        }
    }

    pub fn sets(&self) -> u32 {
        self.sets
    }

    pub fn ways(&self) -> u32 {
        self.ways
    }

    #[inline]
    fn split(&self, sector: PhysAddr) -> (usize, u32) {
        let set = (sector.0 >> self.offset_bits) & (self.sets - 1);
        let tag = ((sector.0 as u64) >> (self.offset_bits + self.set_bits)) as u32;
        (set as usize, tag)
    }

    #[inline]
    fn addr_of(&self, set: usize, tag: u32) -> PhysAddr {
        PhysAddr(((tag as u64) << (self.offset_bits + self.set_bits) | (set as u64) << self.offset_bits) as u32)
    }

    #[inline]
    fn set_range(&self, set: usize) -> std::ops::Range<usize> {
        let w = self.ways as usize;
        set * w..set * w + w
    }

    #[inline]
    fn find(&self, sector: PhysAddr) -> Option<usize> {
        let (set, tag) = self.split(sector);
        self.set_range(set).find(|&i| self.lines[i].valid && self.lines[i].tag == tag)
    }

    #[inline]
    fn bump(&mut self) -> u64 {
        self.tick += 1;
        self.tick
    }

    /// Sector is valid in the array (write buffer not included).
    #[inline]
    pub fn contains(&self, sector: PhysAddr) -> bool {
        self.find(sector).is_some()
    }

    /// Sector is held anywhere: array or write buffer.
    #[inline]
    pub fn holds(&self, sector: PhysAddr) -> bool {
        self.contains(sector) || self.wb.contains(sector)
    }

    pub fn line(&self, sector: PhysAddr) -> Option<&Line> {
        self.find(sector).map(|i| &self.lines[i])
    }

    /// Native lookup. A hit makes the line MRU and applies `write`; the other
    /// outcomes leave the state untouched.
    pub fn lookup(&mut self, sector: PhysAddr, write: Option<&SectorWrite>) -> Lookup {
        if let Some(i) = self.find(sector) {
            let t = self.bump();
            let line = &mut self.lines[i];
            line.last_use = t;
            if let Some(w) = write {
                line.content = line.content.apply(w);
                line.dirty = true;
            }
            Lookup::Hit
        } else if self.wb.contains(sector) {
            Lookup::WbHit
        } else {
            Lookup::Miss
        }
    }

    /// Line that installing `sector` would evict, if its set is full.
    pub fn victim(&self, sector: PhysAddr) -> Option<Evicted> {
        let (set, _) = self.split(sector);
        let range = self.set_range(set);
        if range.clone().any(|i| !self.lines[i].valid) {
            return None;
        }
        let i = range.min_by_key(|&i| self.lines[i].last_use).unwrap();
        let l = &self.lines[i];
        Some(Evicted { sector: self.addr_of(set, l.tag), dirty: l.dirty, content: l.content })
    }

    /// Places `sector` as the MRU line of its set. When the set is full the
    /// LRU line is removed and returned; the caller routes dirty victims to
    /// the write buffer.
    pub fn install(&mut self, sector: PhysAddr, dirty: bool, content: Content) -> Option<Evicted> {
        debug_assert!(self.find(sector).is_none(), "{sector:?} already cached");
        let (set, tag) = self.split(sector);
        let range = self.set_range(set);
        let slot = range
            .clone()
            .find(|&i| !self.lines[i].valid)
            .unwrap_or_else(|| range.min_by_key(|&i| self.lines[i].last_use).unwrap());
        let old = self.lines[slot];
        let victim =
            old.valid.then(|| Evicted { sector: self.addr_of(set, old.tag), dirty: old.dirty, content: old.content });
        let t = self.bump();
        self.lines[slot] = Line { tag, valid: true, dirty, last_use: t, content };
        victim
    }

    /// Installs and sends a dirty victim to the write buffer. The caller must
    /// have checked that the buffer has room when the victim is dirty.
    pub fn install_with_writeback(&mut self, sector: PhysAddr, dirty: bool, content: Content) -> Option<Evicted> {
        let victim = self.install(sector, dirty, content);
        if let Some(v) = victim {
            if v.dirty {
                self.wb.insert(v.sector, v.content);
            }
        }
        victim
    }

    /// True when installing `sector` needs a write buffer slot that is not
    /// available.
    pub fn needs_wb_slot(&self, sector: PhysAddr) -> bool {
        matches!(self.victim(sector), Some(v) if v.dirty) && self.wb.is_full()
    }

    /// Moves a buffered sector back into the array as a dirty MRU line.
    /// Returns the entry restored and the line displaced by it, if any.
    pub fn restore(&mut self, sector: PhysAddr) -> Option<(WbEntry, Option<Evicted>)> {
        let entry = self.wb.take(sector)?;
        let victim = self.install_with_writeback(sector, entry.dirty, entry.content);
        Some((entry, victim))
    }

    pub fn invalidate(&mut self, sector: PhysAddr) -> Option<Line> {
        let i = self.find(sector)?;
        let line = self.lines[i];
        self.lines[i] = Line::EMPTY;
        Some(line)
    }

    pub fn set_content(&mut self, sector: PhysAddr, content: Content) {
        let i = self.find(sector).expect("filling a sector that is not allocated");
        self.lines[i].content = content;
    }

    /// Applies a write to a resident line, marking it dirty.
    pub fn write(&mut self, sector: PhysAddr, w: &SectorWrite) {
        let i = self.find(sector).expect("writing a sector that is not allocated");
        self.lines[i].content = self.lines[i].content.apply(w);
        self.lines[i].dirty = true;
    }

    /// Current contents of `sector` if resident anywhere in this cache.
    pub fn content_of(&self, sector: PhysAddr) -> Option<Content> {
        self.line(sector).map(|l| l.content).or_else(|| self.wb.find(sector).map(|e| e.content))
    }

    /// Position of the line in its set's recency order, 0 = MRU.
    pub fn lru_rank(&self, sector: PhysAddr) -> Option<u32> {
        let i = self.find(sector)?;
        let (set, _) = self.split(sector);
        let me = self.lines[i].last_use;
        Some(self.set_range(set).filter(|&j| self.lines[j].valid && self.lines[j].last_use > me).count() as u32)
    }

    pub fn resident(&self) -> impl Iterator<Item = PhysAddr> + '_ {
        self.lines.iter().enumerate().filter(|(_, l)| l.valid).map(move |(i, l)| {
            let set = i / self.ways as usize;
            self.addr_of(set, l.tag)
        })
    }

    /// Writes back everything dirty and leaves the cache clean.
    pub fn flush(&mut self) -> Vec<(PhysAddr, Content)> {
        let mut out = self.wb.flush();
        for i in 0..self.lines.len() {
            let l = self.lines[i];
            if l.valid && l.dirty {
                out.push((self.addr_of(i / self.ways as usize, l.tag), l.content));
                self.lines[i].dirty = false;
            }
        }
        out
    }

    /// Checks per-set invariants: distinct tags and distinct recency stamps.
    pub fn check_invariants(&self) -> Result<(), String> {
        for set in 0..self.sets as usize {
            let valid: Vec<&Line> = self.set_range(set).map(|i| &self.lines[i]).filter(|l| l.valid).collect();
            for (a, la) in valid.iter().enumerate() {
                for lb in &valid[a + 1..] {
                    if la.tag == lb.tag {
                        return Err(format!("set {set}: duplicate tag {:#x}", la.tag));
                    }
                    if la.last_use == lb.last_use {
                        return Err(format!("set {set}: duplicate LRU rank"));
                    }
                }
            }
        }
        for e in self.wb.iter() {
            if self.contains(e.sector) {
                return Err(format!("{:?} both in array and write buffer", e.sector));
            }
        }
        if self.wb.len() > self.wb.capacity() {
            return Err("write buffer over capacity".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sc() -> SetAssocCache {
        SetAssocCache::new(256, 4, 64, 8)
    }

    /// Addresses mapping to set 0 of the default scalar cache.
    fn same_set(i: u32) -> PhysAddr {
        PhysAddr(i << 14)
    }

    fn c(v: u64) -> Content {
        Content(v)
    }

    #[test]
    fn cold_cache_misses() {
        assert_eq!(sc().lookup(PhysAddr(0x1234_5640), None), Lookup::Miss);
    }

    #[test]
    fn install_then_hit_is_mru() {
        let mut s = sc();
        for i in 0..3 {
            s.install(same_set(i), false, c(0));
        }
        assert_eq!(s.lookup(same_set(0), None), Lookup::Hit);
        assert_eq!(s.lru_rank(same_set(0)), Some(0));
        assert_eq!(s.lru_rank(same_set(1)), Some(2));
    }

    #[test]
    fn empty_set_has_no_victim() {
        assert_eq!(sc().install(same_set(0), false, c(0)), None);
    }

    #[test]
    fn fifth_install_evicts_first() {
        let mut s = sc();
        for i in 0..4 {
            assert!(s.install(same_set(i), false, c(0)).is_none());
        }
        let v = s.install(same_set(4), false, c(0)).unwrap();
        assert_eq!(v.sector, same_set(0));
    }

    #[test]
    fn touched_line_survives() {
        let mut s = sc();
        for i in 0..4 {
            s.install(same_set(i), false, c(0));
        }
        s.lookup(same_set(0), None);
        assert_eq!(s.install(same_set(4), false, c(0)).unwrap().sector, same_set(1));
    }

    #[test]
    fn dirty_victim_goes_to_wb_and_is_restorable() {
        let mut s = sc();
        for i in 0..4 {
            s.install(same_set(i), i == 0, c(i as u64));
        }
        let v = s.install_with_writeback(same_set(4), false, c(9)).unwrap();
        assert!(v.dirty);
        assert_eq!(s.lookup(same_set(0), None), Lookup::WbHit);
        assert!(!s.contains(same_set(0)));
        let (entry, displaced) = s.restore(same_set(0)).unwrap();
        assert_eq!(entry.content, c(0));
        // Restoration displaced the LRU line (clean, so it vanishes).
        assert_eq!(displaced.unwrap().sector, same_set(1));
        assert!(s.wb.is_empty());
        let l = s.line(same_set(0)).unwrap();
        assert!(l.valid && l.dirty);
    }

    #[test]
    fn write_hit_dirties() {
        let mut s = sc();
        s.install(PhysAddr(0x40), false, c(1));
        let w = SectorWrite { mask: 0xFF, stamp: 1, full: false };
        s.lookup(PhysAddr(0x40), Some(&w));
        assert!(s.line(PhysAddr(0x40)).unwrap().dirty);
        assert_eq!(s.flush().len(), 1);
        assert!(!s.line(PhysAddr(0x40)).unwrap().dirty);
    }

    /// Reference list-based LRU: front = MRU.
    fn oracle_victim(list: &mut Vec<u32>, ways: usize, tag: u32) -> Option<u32> {
        if let Some(p) = list.iter().position(|&t| t == tag) {
            list.remove(p);
            list.insert(0, tag);
            return None;
        }
        let v = (list.len() == ways).then(|| list.pop().unwrap());
        list.insert(0, tag);
        v
    }

    proptest! {
        #[test]
        fn lru_matches_list_oracle(seq in prop::collection::vec(0u32..9, 1..200)) {
            let mut s = sc();
            let mut list = Vec::new();
            for t in seq {
                let a = same_set(t);
                let expect = oracle_victim(&mut list, 4, t);
                let got = match s.lookup(a, None) {
                    Lookup::Hit => None,
                    _ => s.install(a, false, c(0)).map(|v| v.sector.0 >> 14),
                };
                prop_assert_eq!(got, expect);
            }
            prop_assert!(s.check_invariants().is_ok());
        }
    }
}
