//! Disjoint FIFO write buffer used by the Scalar Cache and the white cache.

use std::collections::VecDeque;

use crate::address::PhysAddr;
use crate::oracle::Content;

/// Identifies one write-back drain so that completions can be matched to the
/// buffer entry (or vector line) they free.
pub type DrainId = u64;

/// Write-backs issued to empty one buffer entry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DrainJob {
    pub id: DrainId,
    pub writes: Vec<(PhysAddr, Content)>,
    /// Nothing was dirty; the entry was released without memory traffic.
    pub freed_now: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InFlightDrain {
    pub id: DrainId,
    pub outstanding: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WbEntry {
    pub sector: PhysAddr,
    pub content: Content,
    pub dirty: bool,
    pub order: u64,
    pub drain: Option<InFlightDrain>,
}

#[derive(Clone, Debug)]
pub struct WriteBuffer {
    capacity: usize,
    entries: VecDeque<WbEntry>,
    next_order: u64,
}

impl WriteBuffer {
    pub fn new(capacity: usize) -> Self {
        WriteBuffer { capacity, entries: VecDeque::with_capacity(capacity), next_order: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() >= self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &WbEntry> {
        self.entries.iter()
    }

    pub fn is_draining(&self) -> bool {
        self.entries.iter().any(|e| e.drain.is_some())
    }

    /// Appends an evicted dirty sector.
    ///
    /// # Panics
    ///
    /// The controller must drain before inserting into a full buffer.
    pub fn insert(&mut self, sector: PhysAddr, content: Content) {
        assert!(!self.is_full(), "write buffer overflow inserting {sector:?}");
        debug_assert!(self.find(sector).is_none());
        self.entries.push_back(WbEntry { sector, content, dirty: true, order: self.next_order, drain: None });
        self.next_order += 1;
    }

    pub fn find(&self, sector: PhysAddr) -> Option<&WbEntry> {
        self.entries.iter().find(|e| e.sector == sector)
    }

    #[inline]
    pub fn contains(&self, sector: PhysAddr) -> bool {
        self.entries.iter().any(|e| e.sector == sector)
    }

    /// Removes the entry for `sector` (restoration or migration). Any drain
    /// still in flight for it is orphaned: its completion frees nothing.
    pub fn take(&mut self, sector: PhysAddr) -> Option<WbEntry> {
        let pos = self.entries.iter().position(|e| e.sector == sector)?;
        self.entries.remove(pos)
    }

    pub fn remove_oldest(&mut self) -> Option<WbEntry> {
        self.entries.pop_front()
    }

    /// Starts writing back the oldest entry that is not already draining.
    pub fn start_drain(&mut self, id: DrainId) -> Option<DrainJob> {
        let pos = self.entries.iter().position(|e| e.drain.is_none())?;
        let entry = &mut self.entries[pos];
        if !entry.dirty {
            self.entries.remove(pos);
            return Some(DrainJob { id, writes: Vec::new(), freed_now: true });
        }
        // The data is in flight; the entry stays (and can still be restored)
        // until the write lands.
        entry.dirty = false;
        entry.drain = Some(InFlightDrain { id, outstanding: 1 });
        Some(DrainJob { id, writes: vec![(entry.sector, entry.content)], freed_now: false })
    }

    /// A write-back belonging to drain `id` completed. Returns true when this
    /// freed a slot.
    pub fn drain_done(&mut self, id: DrainId) -> bool {
        let Some(pos) = self.entries.iter().position(|e| e.drain.map(|d| d.id) == Some(id)) else {
            return false;
        };
        let d = self.entries[pos].drain.as_mut().unwrap();
        d.outstanding -= 1;
        if d.outstanding == 0 {
            self.entries.remove(pos);
            true
        } else {
            false
        }
    }

    /// Empties the buffer, returning the sectors that still need writing.
    pub fn flush(&mut self) -> Vec<(PhysAddr, Content)> {
        self.entries.drain(..).filter(|e| e.dirty).map(|e| (e.sector, e.content)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(v: u64) -> Content {
        Content(v)
    }

    #[test]
    fn fifo_order() {
        let mut wb = WriteBuffer::new(8);
        for s in [0x40, 0x80, 0xC0] {
            wb.insert(PhysAddr(s), c(s as u64));
        }
        assert_eq!(wb.remove_oldest().unwrap().sector, PhysAddr(0x40));
        assert_eq!(wb.len(), 2);
    }

    #[test]
    #[should_panic(expected = "overflow")]
    fn ninth_insert_forbidden() {
        let mut wb = WriteBuffer::new(8);
        for i in 0..9u32 {
            wb.insert(PhysAddr(i * 64), c(i as u64));
        }
    }

    #[test]
    fn drain_frees_on_completion() {
        let mut wb = WriteBuffer::new(8);
        for i in 0..8u32 {
            wb.insert(PhysAddr(i * 64), c(i as u64));
        }
        let job = wb.start_drain(42).unwrap();
        assert_eq!(job.writes, vec![(PhysAddr(0), c(0))]);
        assert!(wb.is_full());
        // A second drain picks the next oldest.
        let job2 = wb.start_drain(43).unwrap();
        assert_eq!(job2.writes[0].0, PhysAddr(64));
        assert!(wb.drain_done(42));
        assert_eq!(wb.len(), 7);
        assert!(!wb.drain_done(42));
    }

    #[test]
    fn restoring_a_draining_entry_orphans_the_drain() {
        let mut wb = WriteBuffer::new(2);
        wb.insert(PhysAddr(0), c(1));
        wb.start_drain(1).unwrap();
        let e = wb.take(PhysAddr(0)).unwrap();
        assert!(!e.dirty);
        assert!(!wb.drain_done(1));
        assert!(wb.is_empty());
    }
}
