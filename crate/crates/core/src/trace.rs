//! Instruction-level trace events, their text format, and coalescing of
//! vector element lists into sector accesses.
//!
//! Text format, one event per line:
//!
//! ```text
//! C <cycles>
//! SL|SS <hexaddr> <size>
//! VL|VS <elem_size> <hexaddr>...
//! ```
//!
//! `#` starts a comment; blank lines are ignored.

use std::fmt::Write as _;
use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::address::PhysAddr;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TraceEvent {
    Compute { cycles: u64 },
    ScalarMem { write: bool, addr: PhysAddr, size: u8 },
    VectorMem { write: bool, elem_size: u8, addrs: Vec<PhysAddr> },
}

impl TraceEvent {
    pub fn compute(cycles: u64) -> Self {
        TraceEvent::Compute { cycles }
    }

    pub fn scalar(write: bool, addr: u32, size: u8) -> Self {
        TraceEvent::ScalarMem { write, addr: PhysAddr(addr), size }
    }

    /// Unit-stride vector access of `n` elements starting at `base`.
    pub fn unit_stride(write: bool, elem_size: u8, base: u32, n: u32) -> Self {
        let addrs = (0..n).map(|i| PhysAddr(base + i * elem_size as u32)).collect();
        TraceEvent::VectorMem { write, elem_size, addrs }
    }

    /// Bytes moved by a memory event, 0 for compute.
    pub fn bytes(&self) -> u64 {
        match self {
            TraceEvent::Compute { .. } => 0,
            TraceEvent::ScalarMem { size, .. } => *size as u64,
            TraceEvent::VectorMem { elem_size, addrs, .. } => *elem_size as u64 * addrs.len() as u64,
        }
    }

    pub fn is_write(&self) -> bool {
        matches!(self, TraceEvent::ScalarMem { write: true, .. } | TraceEvent::VectorMem { write: true, .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Origin {
    Scalar,
    Vector,
}

/// One reference to one sector, the unit the caches work on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SectorAccess {
    pub sector: PhysAddr,
    pub write: bool,
    pub origin: Origin,
    /// Bit `i` set when byte `i` of the sector is touched.
    pub mask: u64,
    /// A store covering every byte of the sector.
    pub full_sector_write: bool,
}

fn full_mask(sector_bytes: u32) -> u64 {
    if sector_bytes >= 64 {
        u64::MAX
    } else {
        (1u64 << sector_bytes) - 1
    }
}

fn byte_range_mask(lo: u32, len: u32) -> u64 {
    full_mask(len) << lo
}

/// Breaks a memory event into sector accesses in program order. Consecutive
/// elements in the same sector merge; an element crossing a sector boundary
/// is split. Compute events yield nothing.
pub fn coalesce(ev: &TraceEvent, sector_bytes: u32, out: &mut Vec<SectorAccess>) {
    let (write, origin, size, addrs): (bool, Origin, u32, &[PhysAddr]) = match ev {
        TraceEvent::Compute { .. } => return,
        TraceEvent::ScalarMem { write, addr, size } => {
            (*write, Origin::Scalar, *size as u32, std::slice::from_ref(addr))
        }
        TraceEvent::VectorMem { write, elem_size, addrs } => (*write, Origin::Vector, *elem_size as u32, addrs),
    };
    let full = full_mask(sector_bytes);
    let start = out.len();
    for &a in addrs {
        let mut addr = a.0 as u64;
        let mut left = size as u64;
        while left > 0 {
            let sector = addr & !(sector_bytes as u64 - 1);
            let lo = (addr - sector) as u32;
            let len = left.min(sector_bytes as u64 - lo as u64) as u32;
            let mask = byte_range_mask(lo, len);
            match out[start..].last_mut() {
                Some(last) if last.sector.0 as u64 == sector => last.mask |= mask,
                _ => out.push(SectorAccess {
                    sector: PhysAddr(sector as u32),
                    write,
                    origin,
                    mask,
                    full_sector_write: false,
                }),
            }
            addr += len as u64;
            left -= len as u64;
        }
    }
    if write {
        for acc in &mut out[start..] {
            acc.full_sector_write = acc.mask == full;
        }
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn parse_addr(tok: &str) -> Result<PhysAddr, String> {
    let hex = tok
        .strip_prefix("0x")
        .or_else(|| tok.strip_prefix("0X"))
        .ok_or_else(|| format!("address `{tok}` is not 0x-prefixed hex"))?;
    let v = u64::from_str_radix(hex, 16).map_err(|_| format!("bad address `{tok}`"))?;
    PhysAddr::new(v).ok_or_else(|| format!("address {tok} is outside the 32-bit space"))
}

/// Parses one line. `Ok(None)` for blank and comment lines.
pub fn parse_line(text: &str) -> Result<Option<TraceEvent>, String> {
    let body = text.split('#').next().unwrap_or("").trim();
    if body.is_empty() {
        return Ok(None);
    }
    let mut toks = body.split_whitespace();
    let op = toks.next().unwrap();
    let ev = match op {
        "C" => {
            let n = toks.next().ok_or("missing cycle count")?;
            let cycles = n.parse::<u64>().map_err(|_| format!("bad cycle count `{n}`"))?;
            TraceEvent::Compute { cycles }
        }
        "SL" | "SS" => {
            let addr = parse_addr(toks.next().ok_or("missing address")?)?;
            let s = toks.next().ok_or("missing size")?;
            let size = s.parse::<u8>().map_err(|_| format!("bad size `{s}`"))?;
            if !(1..=8).contains(&size) {
                return Err(format!("scalar size {size} not in 1..=8"));
            }
            TraceEvent::ScalarMem { write: op == "SS", addr, size }
        }
        "VL" | "VS" => {
            let s = toks.next().ok_or("missing element size")?;
            let elem_size = s.parse::<u8>().map_err(|_| format!("bad element size `{s}`"))?;
            if !matches!(elem_size, 1 | 2 | 4 | 8) {
                return Err(format!("element size {elem_size} not in {{1,2,4,8}}"));
            }
            let addrs = toks.by_ref().map(parse_addr).collect::<Result<Vec<_>, _>>()?;
            if addrs.is_empty() {
                return Err("vector access without addresses".into());
            }
            return Ok(Some(TraceEvent::VectorMem { write: op == "VS", elem_size, addrs }));
        }
        other => return Err(format!("unknown opcode `{other}`")),
    };
    if let Some(extra) = toks.next() {
        return Err(format!("unexpected token `{extra}`"));
    }
    Ok(Some(ev))
}

pub fn format_event(ev: &TraceEvent, out: &mut String) {
    match ev {
        TraceEvent::Compute { cycles } => {
            let _ = write!(out, "C {cycles}");
        }
        TraceEvent::ScalarMem { write, addr, size } => {
            let _ = write!(out, "{} {:#x} {size}", if *write { "SS" } else { "SL" }, addr.0);
        }
        TraceEvent::VectorMem { write, elem_size, addrs } => {
            let _ = write!(out, "{} {elem_size}", if *write { "VS" } else { "VL" });
            for a in addrs {
                let _ = write!(out, " {:#x}", a.0);
            }
        }
    }
    out.push('\n');
}

/// Streaming reader over the text format.
pub struct TraceReader<R> {
    input: R,
    line_no: usize,
    buf: String,
}

impl<R: BufRead> TraceReader<R> {
    pub fn new(input: R) -> Self {
        TraceReader { input, line_no: 0, buf: String::new() }
    }
}

impl<R: BufRead> Iterator for TraceReader<R> {
    type Item = Result<TraceEvent, TraceError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.input.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(e.into())),
            }
            self.line_no += 1;
            match parse_line(&self.buf) {
                Ok(Some(ev)) => return Some(Ok(ev)),
                Ok(None) => continue,
                Err(msg) => return Some(Err(TraceError::Parse { line: self.line_no, msg })),
            }
        }
    }
}

pub fn read_trace<R: BufRead>(input: R) -> Result<Vec<TraceEvent>, TraceError> {
    TraceReader::new(input).collect()
}

pub fn write_trace<W: Write>(mut out: W, events: impl IntoIterator<Item = TraceEvent>) -> io::Result<()> {
    let mut line = String::new();
    for ev in events {
        line.clear();
        format_event(&ev, &mut line);
        out.write_all(line.as_bytes())?;
    }
    out.flush()
}
