//! Synthetic traces for the evaluated kernels.
//!
//! Every kernel is strip-mined at the vector length, with arrays row-major
//! and placed one after another from a base address. Traces are produced
//! lazily; the largest presets describe billions of events.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use crate::address::PhysAddr;
use crate::matrix::CsrMatrix;
use crate::trace::TraceEvent;

/// Compute latencies of the modeled vector unit, in cycles.
pub mod latency {
    /// Adds, moves, integer ops, shifts.
    pub const SIMPLE: u64 = 4;
    /// Fused multiply-add.
    pub const FMA: u64 = 6;
    pub const MIN: u64 = 7;
    /// Reductions and slides.
    pub const SLIDE: u64 = 8;
    pub const REDUCE: u64 = 8;
    /// Scalar bookkeeping instruction.
    pub const SCALAR: u64 = 1;
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WorkloadError {
    #[error("unknown workload `{0}`")]
    Unknown(String),
    #[error("workload needs {needed:#x} bytes from {base:#x}, beyond the 4 GB address space")]
    TooLarge { base: u32, needed: u64 },
    #[error("vector length {0} bits holds no element")]
    BadVl(u32),
    #[error("invalid workload parameter: {0}")]
    Param(String),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Kernel {
    /// y = a*x + y over `n` elements.
    Axpy { n: u32 },
    /// y = A*x with A `rows` x `cols`.
    Mv { rows: u32, cols: u32 },
    /// C += A*B, all `n` x `n`, i-k-j order.
    Mm { n: u32 },
    /// Five-point stencil on an `n` x `n` grid, ping-ponging between two
    /// arrays; each step sweeps both directions.
    Jacobi2d { n: u32, steps: u32 },
    /// Row-by-row min-path dynamic program over a `rows` x `cols` grid of
    /// 4-byte integers.
    Pathfinder { rows: u32, cols: u32, repeat: u32 },
    /// y = A*x with A in CSR form; x accesses are gathers.
    Spmv { matrix: Arc<CsrMatrix>, repeat: u32 },
}

pub const KERNEL_NAMES: [&str; 6] = ["axpy", "mv", "mm", "jacobi2d", "pathfinder", "spmv"];

/// Input size families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SizePreset {
    /// The published benchmark sizes.
    Full,
    /// Reduced inputs that still overflow the caches; used by tests.
    Small,
}

impl FromStr for SizePreset {
    type Err = WorkloadError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(SizePreset::Full),
            "small" => Ok(SizePreset::Small),
            other => Err(WorkloadError::Param(format!("size preset `{other}` (expected full|small)"))),
        }
    }
}

/// Dimension and density of the synthetic sparse matrix.
pub const SPMV_DIM: u32 = 4096;
pub const SPMV_DENSITY: f64 = 0.001;

impl Kernel {
    pub fn name(&self) -> &'static str {
        match self {
            Kernel::Axpy { .. } => "axpy",
            Kernel::Mv { .. } => "mv",
            Kernel::Mm { .. } => "mm",
            Kernel::Jacobi2d { .. } => "jacobi2d",
            Kernel::Pathfinder { .. } => "pathfinder",
            Kernel::Spmv { .. } => "spmv",
        }
    }

    /// Unit-stride kernels (everything except spmv).
    pub fn is_stride_one(&self) -> bool {
        !matches!(self, Kernel::Spmv { .. })
    }

    /// Kernel `name` at a preset size. `seed` drives the random sparse
    /// matrix.
    pub fn preset(name: &str, size: SizePreset, seed: u64) -> Result<Kernel, WorkloadError> {
        use SizePreset::*;
        Ok(match (name, size) {
            // 2048 KB across x and y.
            ("axpy", Full) => Kernel::Axpy { n: 131_072 },
            ("axpy", Small) => Kernel::Axpy { n: 32_768 },
            ("mv", Full) => Kernel::Mv { rows: 4096, cols: 4096 },
            ("mv", Small) => Kernel::Mv { rows: 256, cols: 512 },
            ("mm", Full) => Kernel::Mm { n: 256 },
            ("mm", Small) => Kernel::Mm { n: 64 },
            ("jacobi2d" | "jacobi-2d", Full) => Kernel::Jacobi2d { n: 256, steps: 10 },
            ("jacobi2d" | "jacobi-2d", Small) => Kernel::Jacobi2d { n: 256, steps: 1 },
            ("pathfinder", Full) => Kernel::Pathfinder { rows: 4096, cols: 4096, repeat: 100 },
            ("pathfinder", Small) => Kernel::Pathfinder { rows: 64, cols: 2048, repeat: 1 },
            ("spmv", Full) => Kernel::Spmv {
                matrix: Arc::new(CsrMatrix::random(SPMV_DIM, SPMV_DIM, SPMV_DENSITY, seed)),
                repeat: 100,
            },
            ("spmv", Small) => {
                Kernel::Spmv { matrix: Arc::new(CsrMatrix::random(SPMV_DIM, SPMV_DIM, SPMV_DENSITY, seed)), repeat: 1 }
            }
            (other, _) => return Err(WorkloadError::Unknown(other.to_string())),
        })
    }

    /// Array sizes in bytes, in placement order.
    fn arrays(&self, elem: u64) -> Vec<u64> {
        match self {
            Kernel::Axpy { n } => vec![*n as u64 * elem; 2],
            Kernel::Mv { rows, cols } => {
                vec![*rows as u64 * *cols as u64 * elem, *cols as u64 * elem, *rows as u64 * elem]
            }
            Kernel::Mm { n } => vec![(*n as u64).pow(2) * elem; 3],
            Kernel::Jacobi2d { n, .. } => vec![(*n as u64).pow(2) * elem; 2],
            Kernel::Pathfinder { rows, cols, .. } => {
                vec![*rows as u64 * *cols as u64 * 4, *cols as u64 * 4, *cols as u64 * 4]
            }
            Kernel::Spmv { matrix: m, .. } => vec![
                (m.rows as u64 + 1) * 4,
                m.nnz() as u64 * 4,
                m.nnz() as u64 * elem,
                m.cols as u64 * elem,
                m.rows as u64 * elem,
            ],
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Where arrays go in memory.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub base: u32,
    /// Every array starts on a multiple of this (power of two, at least a
    /// sector).
    pub align: u32,
    /// Extra bytes inserted before every array after the first.
    pub skew: u32,
}

impl Default for Layout {
    fn default() -> Self {
        Layout { base: 0x1000_0000, align: 4096, skew: 0 }
    }
}

impl Layout {
    /// Start address of each array.
    pub fn place(&self, sizes: &[u64]) -> Result<Vec<u32>, WorkloadError> {
        if !self.align.is_power_of_two() {
            return Err(WorkloadError::Param(format!("alignment {} is not a power of two", self.align)));
        }
        let a = self.align as u64;
        let mut at = (self.base as u64).div_ceil(a) * a;
        let mut out = Vec::with_capacity(sizes.len());
        for (i, &sz) in sizes.iter().enumerate() {
            if i > 0 {
                at = (at + self.skew as u64).div_ceil(a) * a + self.skew as u64 % a;
            }
            out.push(at);
            at += sz;
        }
        if at > 1 << 32 {
            return Err(WorkloadError::TooLarge { base: self.base, needed: at - self.base as u64 });
        }
        Ok(out.into_iter().map(|x| x as u32).collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorkloadSpec {
    pub kernel: Kernel,
    pub vl_bits: u32,
    /// Element size of the floating-point arrays (4 or 8).
    pub elem_size: u8,
    pub layout: Layout,
}

impl WorkloadSpec {
    pub fn new(kernel: Kernel, vl_bits: u32) -> Self {
        WorkloadSpec { kernel, vl_bits, elem_size: 8, layout: Layout::default() }
    }

    pub fn elems_per_vector(&self, elem_size: u8) -> u32 {
        self.vl_bits / (8 * elem_size as u32)
    }

    /// Base address of each array in placement order.
    pub fn array_bases(&self) -> Result<Vec<u32>, WorkloadError> {
        self.layout.place(&self.kernel.arrays(self.elem_size as u64))
    }
}

pub type TraceStream = Box<dyn Iterator<Item = TraceEvent> + Send>;

/// `(start, len)` chunks of `0..n` of at most `vl` elements.
fn strips(from: u32, to: u32, vl: u32) -> impl Iterator<Item = (u32, u32)> + Clone {
    (from..to).step_by(vl as usize).map(move |j| (j, vl.min(to - j)))
}

fn vload(elem: u8, addr: u32, n: u32) -> TraceEvent {
    TraceEvent::unit_stride(false, elem, addr, n)
}

fn vstore(elem: u8, addr: u32, n: u32) -> TraceEvent {
    TraceEvent::unit_stride(true, elem, addr, n)
}

fn c(cycles: u64) -> TraceEvent {
    TraceEvent::compute(cycles)
}

/// Lazily generates the trace for `spec`.
pub fn generate(spec: &WorkloadSpec) -> Result<TraceStream, WorkloadError> {
    if !matches!(spec.elem_size, 4 | 8) {
        return Err(WorkloadError::Param(format!("element size {} (expected 4 or 8)", spec.elem_size)));
    }
    let e = spec.elem_size;
    let eb = e as u32;
    let vl = spec.elems_per_vector(e);
    if vl == 0 || spec.elems_per_vector(4) == 0 {
        return Err(WorkloadError::BadVl(spec.vl_bits));
    }
    let bases = spec.array_bases()?;
    use latency::*;
    Ok(match spec.kernel.clone() {
        Kernel::Axpy { n } => {
            let (x, y) = (bases[0], bases[1]);
            Box::new(strips(0, n, vl).flat_map(move |(j, k)| {
                [vload(e, x + j * eb, k), vload(e, y + j * eb, k), c(FMA), vstore(e, y + j * eb, k)]
            }))
        }
        Kernel::Mv { rows, cols } => {
            let (a, x, y) = (bases[0], bases[1], bases[2]);
            Box::new((0..rows).flat_map(move |i| {
                let row = a + i * cols * eb;
                std::iter::once(c(SIMPLE))
                    .chain(
                        strips(0, cols, vl)
                            .flat_map(move |(j, k)| [vload(e, row + j * eb, k), vload(e, x + j * eb, k), c(FMA)]),
                    )
                    .chain([c(REDUCE), TraceEvent::scalar(true, y + i * eb, e), c(SCALAR)])
            }))
        }
        Kernel::Mm { n } => {
            let (a, b, cc) = (bases[0], bases[1], bases[2]);
            Box::new((0..n).flat_map(move |i| {
                (0..n).flat_map(move |k| {
                    let brow = b + k * n * eb;
                    let crow = cc + i * n * eb;
                    std::iter::once(TraceEvent::scalar(false, a + (i * n + k) * eb, e)).chain(
                        strips(0, n, vl).flat_map(move |(j, len)| {
                            [
                                vload(e, brow + j * eb, len),
                                vload(e, crow + j * eb, len),
                                c(FMA),
                                vstore(e, crow + j * eb, len),
                            ]
                        }),
                    )
                })
            }))
        }
        Kernel::Jacobi2d { n, steps } => {
            if n < 3 {
                return Err(WorkloadError::Param("jacobi grid must be at least 3x3".into()));
            }
            let (a, b) = (bases[0], bases[1]);
            let sweeps = (0..steps).flat_map(move |_| [(a, b), (b, a)]);
            Box::new(sweeps.flat_map(move |(src, dst)| {
                (1..n - 1).flat_map(move |i| {
                    let at = move |arr: u32, r: u32, col: u32| arr + (r * n + col) * eb;
                    strips(1, n - 1, vl).flat_map(move |(j, k)| {
                        [
                            vload(e, at(src, i, j), k),
                            vload(e, at(src, i, j - 1), k),
                            vload(e, at(src, i, j + 1), k),
                            vload(e, at(src, i - 1, j), k),
                            vload(e, at(src, i + 1, j), k),
                            c(SIMPLE),
                            c(SIMPLE),
                            c(SIMPLE),
                            c(SIMPLE),
                            c(SIMPLE),
                            vstore(e, at(dst, i, j), k),
                        ]
                    })
                })
            }))
        }
        Kernel::Pathfinder { rows, cols, repeat } => {
            if rows < 2 || cols < 2 {
                return Err(WorkloadError::Param("pathfinder grid must be at least 2x2".into()));
            }
            let (wall, s0, s1) = (bases[0], bases[1], bases[2]);
            let vl = spec.elems_per_vector(4);
            Box::new((0..repeat).flat_map(move |_| {
                (0..rows - 1).flat_map(move |t| {
                    let (src, dst) = if t % 2 == 0 { (s0, s1) } else { (s1, s0) };
                    let wrow = wall + (t + 1) * cols * 4;
                    strips(0, cols, vl).flat_map(move |(j, k)| {
                        let left = j.saturating_sub(1);
                        let right = (j + k).min(cols - 1);
                        [
                            vload(4, src + j * 4, k),
                            TraceEvent::scalar(false, src + left * 4, 4),
                            TraceEvent::scalar(false, src + right * 4, 4),
                            c(SLIDE),
                            c(SLIDE),
                            c(MIN),
                            c(MIN),
                            vload(4, wrow + j * 4, k),
                            c(SIMPLE),
                            vstore(4, dst + j * 4, k),
                        ]
                    })
                })
            }))
        }
        Kernel::Spmv { matrix, repeat } => {
            let (rp, ci, vals, x, y) = (bases[0], bases[1], bases[2], bases[3], bases[4]);
            let rows = matrix.rows;
            Box::new((0..repeat).flat_map(move |_| {
                let m = Arc::clone(&matrix);
                (0..rows).flat_map(move |i| {
                    let m = Arc::clone(&m);
                    let range = m.row(i);
                    let head = [
                        TraceEvent::scalar(false, rp + i * 4, 4),
                        TraceEvent::scalar(false, rp + (i + 1) * 4, 4),
                        c(SIMPLE),
                    ];
                    let body = strips(range.start as u32, range.end as u32, vl).flat_map(move |(k0, len)| {
                        let gather = m.col_idx[k0 as usize..(k0 + len) as usize]
                            .iter()
                            .map(|&col| PhysAddr(x + col * eb))
                            .collect();
                        [
                            vload(e, vals + k0 * eb, len),
                            vload(4, ci + k0 * 4, len),
                            c(SIMPLE),
                            TraceEvent::VectorMem { write: false, elem_size: e, addrs: gather },
                            c(FMA),
                        ]
                    });
                    head.into_iter().chain(body).chain([c(REDUCE), TraceEvent::scalar(true, y + i * eb, e)])
                })
            }))
        }
    })
}
