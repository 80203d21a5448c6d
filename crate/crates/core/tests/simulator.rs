use bicameral::address::{DramCoord, PhysAddr};
use bicameral::config::{Hierarchy, PrefetchMode, SimConfig};
use bicameral::dram::RequestKind;
use bicameral::sim::{AccessKind, Simulator};
use bicameral::trace::{Origin, SectorAccess, TraceEvent};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cfg(h: Hierarchy, p: PrefetchMode) -> SimConfig {
    SimConfig::default().with_hierarchy(h).with_prefetch(p)
}

fn bc() -> Simulator {
    Simulator::new(&cfg(Hierarchy::Bicameral, PrefetchMode::Off)).unwrap()
}

fn read(origin: Origin, sector: u32) -> SectorAccess {
    SectorAccess { sector: PhysAddr(sector), write: false, origin, mask: u64::MAX, full_sector_write: false }
}

fn write(origin: Origin, sector: u32, mask: u64) -> SectorAccess {
    SectorAccess { sector: PhysAddr(sector), write: true, origin, mask, full_sector_write: mask == u64::MAX }
}

#[test]
fn cold_scalar_read_bicameral() {
    let mut s = bc();
    let o = s.access(&read(Origin::Scalar, 0x4000));
    assert_eq!(o.kind, AccessKind::Miss);
    // native + cross lookup, closed bank, one bus cycle
    assert_eq!(o.latency, 2 + 39 + 1);
    assert!(o.demand.is_some());
}

#[test]
fn cold_read_white() {
    let mut s = Simulator::new(&cfg(Hierarchy::White, PrefetchMode::Off)).unwrap();
    let o = s.access(&read(Origin::Vector, 0x4000));
    assert_eq!((o.kind, o.latency), (AccessKind::Miss, 1 + 39 + 1));
    let o = s.access(&read(Origin::Scalar, 0x4000));
    assert_eq!((o.kind, o.latency), (AccessKind::NativeHit, 1));
}

#[test]
fn white_stride_one_misses_every_sector() {
    let mut s = Simulator::new(&cfg(Hierarchy::White, PrefetchMode::Off)).unwrap();
    let misses = (0..16).filter(|i| s.access(&read(Origin::Vector, 0x8000 + i * 64)).kind == AccessKind::Miss).count();
    assert_eq!(misses, 16);
}

#[test]
fn native_hit_is_one_cycle() {
    let mut s = bc();
    s.access(&read(Origin::Scalar, 0x40));
    let o = s.access(&read(Origin::Scalar, 0x40));
    assert_eq!((o.kind, o.latency), (AccessKind::NativeHit, 1));
}

#[test]
fn row_hit_after_open() {
    let mut s = bc();
    s.access(&read(Origin::Scalar, 0x0));
    let o = s.access(&read(Origin::Scalar, 0x40));
    assert_eq!(o.latency, 2 + 11 + 1);
    let far = DramCoord { row: 9, bank: 0, column: 0, offset: 0 }.recompose().0;
    let o = s.access(&read(Origin::Scalar, far));
    assert_eq!(o.latency, 2 + 50 + 1);
    let st = s.stats();
    assert_eq!((st.ras, st.cas, st.pre), (2, 3, 1));
}

#[test]
fn vector_cross_hit_migrates() {
    let mut s = bc();
    s.access(&write(Origin::Scalar, 0x1000, 0xFF));
    let o = s.access(&read(Origin::Vector, 0x1000));
    assert_eq!((o.kind, o.latency), (AccessKind::CrossHit, 2));
    assert!(!s.scalar_cache().holds(PhysAddr(0x1000)));
    assert!(s.vector_cache().holds(PhysAddr(0x1000)));
    let (tag, idx) = s.vector_cache().split(PhysAddr(0x1000));
    assert!(s.vector_cache().line(tag).unwrap().sector_dirty(idx));
    assert_eq!(s.stats().migrations, 1);
}

#[test]
fn scalar_cross_hit_stays_in_vector_cache() {
    let mut s = bc();
    s.access(&read(Origin::Vector, 0x2000));
    let o = s.access(&write(Origin::Scalar, 0x2000, 0xF));
    assert_eq!((o.kind, o.latency), (AccessKind::CrossHit, 2));
    assert!(!s.scalar_cache().holds(PhysAddr(0x2000)));
    assert!(s.vector_cache().holds(PhysAddr(0x2000)));
    assert_eq!(s.stats().migrations, 0);
}

#[test]
fn full_vector_store_skips_fetch() {
    let mut s = bc();
    let o = s.access(&write(Origin::Vector, 0x3000, u64::MAX));
    assert_eq!((o.kind, o.latency), (AccessKind::Miss, 2));
    assert!(o.demand.is_none());
    let mut c = cfg(Hierarchy::Bicameral, PrefetchMode::Off);
    c.fetch_on_full_write = true;
    let mut s = Simulator::new(&c).unwrap();
    assert!(s.access(&write(Origin::Vector, 0x3000, u64::MAX)).demand.is_some());
}

#[test]
fn ideal_mode_fills_line_on_first_miss() {
    let mut s = Simulator::new(&cfg(Hierarchy::Bicameral, PrefetchMode::Ideal)).unwrap();
    let kinds: Vec<_> = (0..16).map(|i| s.access(&read(Origin::Vector, 0x10000 + i * 64)).kind).collect();
    assert_eq!(kinds[0], AccessKind::Miss);
    assert!(kinds[1..].iter().all(|&k| k == AccessKind::NativeHit));
    let (tag, _) = s.vector_cache().split(PhysAddr(0x10000));
    assert_eq!(s.vector_cache().line(tag).unwrap().valid_mask, 0xFFFF);
}

#[test]
fn ideal_fill_keeps_existing_dirty_sector() {
    let mut s = Simulator::new(&cfg(Hierarchy::Bicameral, PrefetchMode::Ideal)).unwrap();
    s.access(&write(Origin::Vector, 0x10000 + 2 * 64, u64::MAX));
    s.access(&read(Origin::Vector, 0x10000 + 7 * 64));
    let (tag, _) = s.vector_cache().split(PhysAddr(0x10000));
    let l = s.vector_cache().line(tag).unwrap();
    assert_eq!(l.valid_mask, 0xFFFF);
    assert_eq!(l.dirty_mask, 1 << 2);
}

#[test]
fn prefetch_runs_ahead_on_idle_bank() {
    let mut s = Simulator::new(&cfg(Hierarchy::Bicameral, PrefetchMode::On)).unwrap();
    s.access(&read(Origin::Vector, 0x20000 + 3 * 64));
    s.step(&TraceEvent::compute(200));
    let o = s.access(&read(Origin::Vector, 0x20000 + 4 * 64));
    assert_eq!(o.kind, AccessKind::NativeHit);
    let st = s.stats();
    assert!(st.pf_issued >= 1 && st.pf_filled >= 1);
    assert_eq!(st.pf_useful, 1);
}

#[test]
fn demand_waits_on_inflight_prefetch() {
    let mut s = Simulator::new(&cfg(Hierarchy::Bicameral, PrefetchMode::On)).unwrap();
    s.access(&read(Origin::Vector, 0x20000 + 3 * 64));
    assert_eq!(s.stats().pf_issued, 1);
    let o = s.access(&read(Origin::Vector, 0x20000 + 4 * 64));
    assert_eq!(o.kind, AccessKind::Miss);
    assert_eq!(o.demand.map(|r| r.kind), Some(RequestKind::PrefetchRead));
    // row hit behind the first read, never a second trip to memory
    assert!(o.latency <= 2 + 11 + 1);
    let st = s.stats();
    assert_eq!((st.demand_reads, st.pf_filled, st.pf_useful, st.pf_rejected), (1, 1, 1, 0));
}

#[test]
fn no_prefetch_when_off() {
    let mut s = bc();
    for i in 0..64 {
        s.access(&read(Origin::Vector, i * 64));
    }
    assert_eq!(s.stats().pf_issued, 0);
}

#[test]
fn scalar_write_buffer_restore() {
    let mut s = bc();
    // Five dirty lines in one scalar set.
    for i in 0..5u32 {
        s.access(&write(Origin::Scalar, i << 14, 0xFF));
    }
    assert_eq!(s.scalar_cache().wb.len(), 1);
    let o = s.access(&read(Origin::Scalar, 0));
    assert_eq!((o.kind, o.latency), (AccessKind::WbRestore, 1));
}

#[test]
fn white_compulsory_drain_when_buffer_full() {
    let mut s = Simulator::new(&cfg(Hierarchy::White, PrefetchMode::Off)).unwrap();
    // 13 dirty lines into one set of the white cache: 4 resident, 8 buffered,
    // and the 13th eviction needs a slot.
    let set_stride = 1 << 15;
    for i in 0..13u32 {
        s.access(&write(Origin::Scalar, i * set_stride, 0xFF));
    }
    assert!(s.stats().writebacks >= 1);
    assert!(s.scalar_cache().wb.len() <= 8);
    s.check_invariants().unwrap();
}

#[test]
fn empty_trace() {
    let r = bc().run(Vec::new());
    assert_eq!(r.stats.total_cycles, 0);
    assert_eq!(r.stats.accesses, 0);
    assert_eq!(r.stats.amat(), 0.0);
    assert!(r.failure.is_none());
}

#[test]
fn cold_scalar_trace_amat() {
    let r = bc().run(vec![TraceEvent::scalar(false, 0x100, 8)]);
    assert_eq!(r.stats.amat(), 42.0);
    assert_eq!(r.stats.total_cycles, 42);
}

fn random_trace(seed: u64, n: usize, span: u32) -> Vec<TraceEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| match rng.gen_range(0..10) {
            0 => TraceEvent::compute(rng.gen_range(1..8)),
            1..=4 => {
                let a = rng.gen_range(0..span) & !7;
                TraceEvent::scalar(rng.gen_bool(0.4), a, 8)
            }
            _ => {
                let base = rng.gen_range(0..span) & !7;
                let len = rng.gen_range(1..16);
                if rng.gen_bool(0.2) {
                    let addrs = (0..len).map(|_| PhysAddr(rng.gen_range(0..span) & !7)).collect();
                    TraceEvent::VectorMem { write: rng.gen_bool(0.3), elem_size: 8, addrs }
                } else {
                    TraceEvent::unit_stride(rng.gen_bool(0.4), 8, base, len)
                }
            }
        })
        .collect()
}

#[test]
fn random_traces_match_shadow_memory() {
    for (i, (h, p)) in [
        (Hierarchy::Bicameral, PrefetchMode::Off),
        (Hierarchy::Bicameral, PrefetchMode::On),
        (Hierarchy::Bicameral, PrefetchMode::Ideal),
        (Hierarchy::White, PrefetchMode::Off),
    ]
    .into_iter()
    .enumerate()
    {
        for seed in 0..3 {
            let trace = random_trace(seed * 10 + i as u64, 20_000, 1 << 19);
            let r = Simulator::new(&cfg(h, p)).unwrap().run(trace);
            assert!(r.failure.is_none(), "{h:?}/{p:?} seed {seed}: {}", r.failure.unwrap());
            let s = r.stats;
            assert_eq!(s.accesses, s.native_hits + s.cross_hits + s.wb_restores + s.misses);
            assert!(s.pf_useful <= s.pf_filled && s.pf_filled <= s.pf_issued);
            if h == Hierarchy::White {
                assert_eq!(s.cross_hits, 0);
            }
        }
    }
}

#[test]
fn deterministic_stats() {
    let trace = random_trace(99, 5000, 1 << 18);
    let c = cfg(Hierarchy::Bicameral, PrefetchMode::On);
    let a = Simulator::new(&c).unwrap().run(trace.clone());
    let b = Simulator::new(&c).unwrap().run(trace);
    assert_eq!(a, b);
}

#[test]
fn invariants_hold_throughout() {
    let mut s = Simulator::new(&cfg(Hierarchy::Bicameral, PrefetchMode::On)).unwrap();
    for (i, ev) in random_trace(5, 20_000, 1 << 18).iter().enumerate() {
        s.step(ev);
        if i % 97 == 0 {
            s.check_invariants().unwrap();
        }
    }
    assert!(s.failure().is_none());
}
