//! Functional data model used to check the timing simulator.
//!
//! Sector payloads are not stored. Each sector instead carries a 64-bit
//! [`Content`] fingerprint that evolves deterministically with every write.
//! A partial write mixes in the previous fingerprint while a full-sector write
//! does not, so a partial store applied to a stale or never-fetched copy
//! produces a fingerprint that disagrees with the flat shadow memory.

use rustc_hash::FxHashMap;

use crate::address::PhysAddr;

/// Fingerprint of one sector's bytes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Content(pub u64);

/// A write landing in one sector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SectorWrite {
    /// Bit `i` set when byte `i` of the sector is written.
    pub mask: u64,
    /// Unique per dynamic write; stands in for the stored bytes.
    pub stamp: u64,
    /// The write covers every byte of the sector.
    pub full: bool,
}

#[inline]
fn mix(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Content {
    /// Contents of a sector that was never written.
    #[inline]
    pub fn initial(sector: PhysAddr) -> Content {
        Content(mix(sector.0 as u64 ^ 0x5EC7_0000_0000_0000))
    }

    #[inline]
    pub fn apply(self, w: &SectorWrite) -> Content {
        if w.full {
            Content(mix(w.stamp ^ 0xF011_F011_F011_F011))
        } else {
            Content(mix(self.0 ^ mix(w.mask) ^ w.stamp.rotate_left(17)))
        }
    }
}

/// Sparse sector-granular memory image. Untouched sectors read as
/// [`Content::initial`].
#[derive(Clone, Debug, Default)]
pub struct SectorStore {
    sectors: FxHashMap<u32, Content>,
}

impl SectorStore {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn read(&self, sector: PhysAddr) -> Content {
        self.sectors.get(&sector.0).copied().unwrap_or_else(|| Content::initial(sector))
    }

    #[inline]
    pub fn write(&mut self, sector: PhysAddr, content: Content) {
        self.sectors.insert(sector.0, content);
    }

    #[inline]
    pub fn apply(&mut self, sector: PhysAddr, w: &SectorWrite) -> Content {
        let c = self.read(sector).apply(w);
        self.write(sector, c);
        c
    }

    pub fn len(&self) -> usize {
        self.sectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sectors.is_empty()
    }

    /// Lowest-addressed sector whose contents differ between the two images.
    pub fn first_divergence(&self, other: &SectorStore) -> Option<Divergence> {
        let mut keys: Vec<u32> = self.sectors.keys().chain(other.sectors.keys()).copied().collect();
        keys.sort_unstable();
        keys.dedup();
        keys.into_iter().map(PhysAddr).find_map(|s| {
            let (a, b) = (self.read(s), other.read(s));
            (a != b).then_some(Divergence { sector: s, expected: a, found: b })
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Divergence {
    pub sector: PhysAddr,
    pub expected: Content,
    pub found: Content,
}

/// Flat shadow memory replaying every access functionally, with no caches.
#[derive(Clone, Debug, Default)]
pub struct OracleMemory {
    store: SectorStore,
}

impl OracleMemory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records a write and returns the sector's new contents.
    pub fn write(&mut self, sector: PhysAddr, w: &SectorWrite) -> Content {
        self.store.apply(sector, w)
    }

    pub fn read(&self, sector: PhysAddr) -> Content {
        self.store.read(sector)
    }

    pub fn image(&self) -> &SectorStore {
        &self.store
    }
}
