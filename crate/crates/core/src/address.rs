//! Physical addresses and the bit-field decompositions used by every cache and
//! by the DRAM controller.
//!
//! The modeled DRAM is 4 GB, so physical addresses are 32 bits wide. From the
//! least significant bit upwards the DRAM layout is
//!
//! ```text
//!  31            17 16  14 13        6 5      0
//! +----------------+------+-----------+--------+
//! |   row (15)     | bank | column(8) | off(6) |
//! +----------------+------+-----------+--------+
//! ```
//!
//! One column is one 64 B sector, so a single CAS moves exactly one sector and
//! a row of one bank spans 16 KB of contiguous address space. Consecutive 16 KB
//! chunks rotate through the eight banks.

use std::fmt;

/// Number of bits in a physical address.
pub const ADDR_BITS: u32 = 32;

/// Bit positions of the DRAM row/bank/column layout.
pub mod dram_layout {
    pub const OFFSET_BITS: u32 = 6;
    pub const COLUMN_BITS: u32 = 8;
    pub const BANK_BITS: u32 = 3;
    pub const ROW_BITS: u32 = 15;

    pub const COLUMN_SHIFT: u32 = OFFSET_BITS;
    pub const BANK_SHIFT: u32 = COLUMN_SHIFT + COLUMN_BITS;
    pub const ROW_SHIFT: u32 = BANK_SHIFT + BANK_BITS;

    pub const BANKS: usize = 1 << BANK_BITS;
    pub const ROWS: u32 = 1 << ROW_BITS;
    pub const COLUMNS: u32 = 1 << COLUMN_BITS;
}

/// A byte address in the 4 GB physical space.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct PhysAddr(pub u32);

impl PhysAddr {
    /// Checked conversion from a wider integer; `None` when the value does not
    /// fit in the 4 GB space.
    pub fn new(value: u64) -> Option<Self> {
        u32::try_from(value).ok().map(PhysAddr)
    }

    #[inline]
    pub fn value(self) -> u32 {
        self.0
    }

    /// Base address of the sector containing this byte.
    #[inline]
    pub fn sector_base(self, sector_bytes: u32) -> PhysAddr {
        PhysAddr(self.0 & !(sector_bytes - 1))
    }

    #[inline]
    pub fn is_aligned(self, bytes: u32) -> bool {
        self.0 & (bytes - 1) == 0
    }
}

impl fmt::Debug for PhysAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#010x}", self.0)
    }
}

impl fmt::Display for PhysAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#x}", self.0)
    }
}

/// Location of an address inside the DRAM.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DramCoord {
    pub row: u16,
    pub bank: u8,
    pub column: u8,
    pub offset: u8,
}

impl DramCoord {
    pub fn decompose(addr: PhysAddr) -> Self {
        use dram_layout::*;
        let a = addr.0;
        DramCoord {
            offset: (a & ((1 << OFFSET_BITS) - 1)) as u8,
            column: ((a >> COLUMN_SHIFT) & ((1 << COLUMN_BITS) - 1)) as u8,
            bank: ((a >> BANK_SHIFT) & ((1 << BANK_BITS) - 1)) as u8,
            row: (a >> ROW_SHIFT) as u16,
        }
    }

    pub fn recompose(&self) -> PhysAddr {
        use dram_layout::*;
        PhysAddr(
            (self.row as u32) << ROW_SHIFT
                | (self.bank as u32) << BANK_SHIFT
                | (self.column as u32) << COLUMN_SHIFT
                | self.offset as u32,
        )
    }
}

/// Scalar Cache fields: tag, set, offset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ScalarIndex {
    pub tag: u32,
    pub set: u32,
    pub offset: u32,
}

/// Vector Cache fields: tag (the line), sector within the line, offset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct VectorIndex {
    pub tag: u32,
    pub sector: u32,
    pub offset: u32,
}

/// White (baseline) cache fields.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct WhiteIndex {
    pub tag: u32,
    pub set: u32,
    pub offset: u32,
}

/// Shift/mask tables derived from a validated cache geometry.
///
/// All sizes are powers of two (enforced by config validation), so every
/// decomposition is a pair of shifts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AddressMap {
    offset_bits: u32,
    sc_set_bits: u32,
    vc_sector_bits: u32,
    wc_set_bits: u32,
}

impl AddressMap {
    pub fn new(sector_bytes: u32, sc_sets: u32, vc_sectors_per_line: u32, wc_sets: u32) -> Self {
        debug_assert!(sector_bytes.is_power_of_two());
        debug_assert!(sc_sets.is_power_of_two());
        debug_assert!(vc_sectors_per_line.is_power_of_two());
        debug_assert!(wc_sets.is_power_of_two());
        AddressMap {
            offset_bits: sector_bytes.trailing_zeros(),
            sc_set_bits: sc_sets.trailing_zeros(),
            vc_sector_bits: vc_sectors_per_line.trailing_zeros(),
            wc_set_bits: wc_sets.trailing_zeros(),
        }
    }

    #[inline]
    pub fn sector_bytes(&self) -> u32 {
        1 << self.offset_bits
    }

    /// Bytes covered by one Vector Cache line.
    #[inline]
    pub fn vc_line_bytes(&self) -> u32 {
        1 << (self.offset_bits + self.vc_sector_bits)
    }

    #[inline]
    pub fn sector_base(&self, addr: PhysAddr) -> PhysAddr {
        addr.sector_base(self.sector_bytes())
    }

    #[inline]
    pub fn dram(&self, addr: PhysAddr) -> DramCoord {
        DramCoord::decompose(addr)
    }

    #[inline]
    pub fn scalar(&self, addr: PhysAddr) -> ScalarIndex {
        let a = addr.0 as u64;
        let set_shift = self.offset_bits;
        let tag_shift = set_shift + self.sc_set_bits;
        ScalarIndex {
            offset: (a & mask(self.offset_bits)) as u32,
            set: ((a >> set_shift) & mask(self.sc_set_bits)) as u32,
            tag: (a >> tag_shift) as u32,
        }
    }

    #[inline]
    pub fn scalar_addr(&self, idx: ScalarIndex) -> PhysAddr {
        let tag_shift = self.offset_bits + self.sc_set_bits;
        PhysAddr(((idx.tag as u64) << tag_shift | (idx.set as u64) << self.offset_bits | idx.offset as u64) as u32)
    }

    #[inline]
    pub fn vector(&self, addr: PhysAddr) -> VectorIndex {
        let a = addr.0 as u64;
        let tag_shift = self.offset_bits + self.vc_sector_bits;
        VectorIndex {
            offset: (a & mask(self.offset_bits)) as u32,
            sector: ((a >> self.offset_bits) & mask(self.vc_sector_bits)) as u32,
            tag: (a >> tag_shift) as u32,
        }
    }

    #[inline]
    pub fn vector_addr(&self, idx: VectorIndex) -> PhysAddr {
        let tag_shift = self.offset_bits + self.vc_sector_bits;
        PhysAddr(((idx.tag as u64) << tag_shift | (idx.sector as u64) << self.offset_bits | idx.offset as u64) as u32)
    }

    /// Base address of the Vector Cache line with the given tag.
    #[inline]
    pub fn vc_line_base(&self, tag: u32) -> PhysAddr {
        self.vector_addr(VectorIndex { tag, sector: 0, offset: 0 })
    }

    #[inline]
    pub fn white(&self, addr: PhysAddr) -> WhiteIndex {
        let a = addr.0 as u64;
        let tag_shift = self.offset_bits + self.wc_set_bits;
        WhiteIndex {
            offset: (a & mask(self.offset_bits)) as u32,
            set: ((a >> self.offset_bits) & mask(self.wc_set_bits)) as u32,
            tag: (a >> tag_shift) as u32,
        }
    }

    #[inline]
    pub fn white_addr(&self, idx: WhiteIndex) -> PhysAddr {
        let tag_shift = self.offset_bits + self.wc_set_bits;
        PhysAddr(((idx.tag as u64) << tag_shift | (idx.set as u64) << self.offset_bits | idx.offset as u64) as u32)
    }
}

impl Default for AddressMap {
    fn default() -> Self {
        AddressMap::new(64, 256, 16, 512)
    }
}

#[inline]
fn mask(bits: u32) -> u64 {
    (1u64 << bits) - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dram_decomposition_examples() {
        assert_eq!(DramCoord::decompose(PhysAddr(0)), DramCoord { row: 0, bank: 0, column: 0, offset: 0 });
        assert_eq!(
            DramCoord::decompose(PhysAddr(0x1234_5678)),
            DramCoord { row: 2330, bank: 1, column: 89, offset: 56 }
        );
        assert_eq!(
            DramCoord::decompose(PhysAddr(0xFFFF_FFFF)),
            DramCoord { row: 32767, bank: 7, column: 255, offset: 63 }
        );
    }

    #[test]
    fn cache_decomposition_examples() {
        let map = AddressMap::default();
        let s = map.scalar(PhysAddr(0x1234_5678));
        assert_eq!((s.tag, s.set, s.offset), (0x48D1, 89, 56));
        let v = map.vector(PhysAddr(0x1234_5678));
        assert_eq!((v.tag, v.sector, v.offset), (0x48D15, 9, 56));
        let w = map.white(PhysAddr(0x1234_5678));
        assert_eq!((w.tag, w.set, w.offset), (0x2468, 345, 56));

        let z = PhysAddr(0);
        assert_eq!(map.scalar(z), ScalarIndex { tag: 0, set: 0, offset: 0 });
        assert_eq!(map.vector(z), VectorIndex { tag: 0, sector: 0, offset: 0 });
        assert_eq!(map.white(z), WhiteIndex { tag: 0, set: 0, offset: 0 });
    }

    #[test]
    fn field_widths_match_geometry() {
        let map = AddressMap::default();
        let top = PhysAddr(u32::MAX);
        assert_eq!(map.scalar(top).tag, (1 << 18) - 1);
        assert_eq!(map.vector(top).tag, (1 << 22) - 1);
        assert_eq!(map.white(top).tag, (1 << 17) - 1);
        assert_eq!(map.vc_line_bytes(), 1024);
    }

    #[test]
    fn recompose_identity_bulk() {
        // Fixed-seed sweep of 10^5 addresses over all four decompositions.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xB1CA);
        let map = AddressMap::default();
        for _ in 0..100_000 {
            let a = PhysAddr(rng.gen());
            assert_eq!(DramCoord::decompose(a).recompose(), a);
            assert_eq!(map.scalar_addr(map.scalar(a)), a);
            assert_eq!(map.vector_addr(map.vector(a)), a);
            assert_eq!(map.white_addr(map.white(a)), a);
        }
    }

    proptest! {
        #[test]
        fn offsets_agree(a in any::<u32>()) {
            let map = AddressMap::default();
            let a = PhysAddr(a);
            let off = DramCoord::decompose(a).offset as u32;
            prop_assert_eq!(off, map.scalar(a).offset);
            prop_assert_eq!(off, map.vector(a).offset);
            prop_assert_eq!(off, map.white(a).offset);
        }

        #[test]
        fn recompose_non_default_geometry(a in any::<u32>()) {
            let map = AddressMap::new(32, 1024, 8, 256);
            let a = PhysAddr(a);
            prop_assert_eq!(map.scalar_addr(map.scalar(a)), a);
            prop_assert_eq!(map.vector_addr(map.vector(a)), a);
            prop_assert_eq!(map.white_addr(map.white(a)), a);
        }

        #[test]
        fn all_sectors_of_a_vc_line_share_bank_and_row(a in any::<u32>()) {
            let map = AddressMap::default();
            let base = map.vc_line_base(map.vector(PhysAddr(a)).tag);
            let first = DramCoord::decompose(base);
            for s in 0..16u32 {
                let c = DramCoord::decompose(PhysAddr(base.0 + s * 64));
                prop_assert_eq!((c.bank, c.row), (first.bank, first.row));
            }
        }
    }
}
