//! Single runs, parameter sweeps and their CSV form.

use std::io::{self, Write};
use std::path::PathBuf;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, Hierarchy, PrefetchMode, SimConfig};
use crate::sim::{OracleFailure, Simulator, Stats};
use crate::trace::{read_trace, TraceError, TraceEvent};
use crate::workload::{generate, Kernel, Layout, WorkloadError, WorkloadSpec};

/// Where a run's trace comes from.
#[derive(Clone, Debug)]
pub enum Workload {
    Kernel(Kernel),
    /// A recorded trace, replayed unchanged at every vector length.
    File {
        name: String,
        events: Arc<Vec<TraceEvent>>,
    },
}

impl Workload {
    pub fn name(&self) -> &str {
        match self {
            Workload::Kernel(k) => k.name(),
            Workload::File { name, .. } => name,
        }
    }

    pub fn from_trace_file(path: impl Into<PathBuf>) -> Result<Self, RunError> {
        let path = path.into();
        let file = std::fs::File::open(&path).map_err(|e| RunError::Trace(TraceError::Io(e)))?;
        let events = read_trace(io::BufReader::new(file))?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "trace".into());
        Ok(Workload::File { name, events: Arc::new(events) })
    }

    pub fn events(
        &self,
        vl_bits: u32,
        layout: Layout,
    ) -> Result<Box<dyn Iterator<Item = TraceEvent> + Send>, RunError> {
        match self {
            Workload::Kernel(k) => {
                let spec = WorkloadSpec { layout, ..WorkloadSpec::new(k.clone(), vl_bits) };
                Ok(generate(&spec)?)
            }
            Workload::File { events, .. } => {
                let events = Arc::clone(events);
                Ok(Box::new((0..events.len()).map(move |i| events[i].clone())))
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("memory image diverged from the shadow copy: {0}")]
    Divergence(OracleFailure),
}

/// One configuration point of a sweep.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Point {
    pub workload: String,
    pub vl_bits: u32,
    pub hierarchy: Hierarchy,
    pub prefetch: PrefetchMode,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StatsRecord {
    pub point: Point,
    pub stats: Stats,
}

/// Runs `workload` under `cfg` (whose vector length, hierarchy and prefetch
/// mode select the point) to completion, flush included.
pub fn run(workload: &Workload, cfg: &SimConfig, layout: Layout, oracle: bool) -> Result<StatsRecord, RunError> {
    let sim = Simulator::new(cfg)?.with_oracle(oracle);
    let events = workload.events(cfg.vl_bits, layout)?;
    let report = sim.run(events);
    if let Some(f) = report.failure {
        return Err(RunError::Divergence(f));
    }
    Ok(StatsRecord {
        point: Point {
            workload: workload.name().to_string(),
            vl_bits: cfg.vl_bits,
            hierarchy: cfg.hierarchy,
            prefetch: cfg.prefetch,
        },
        stats: report.stats,
    })
}

#[derive(Debug, Error, PartialEq)]
#[error("cannot compare {base:?} with {test:?}")]
pub struct KeyMismatch {
    pub base: (String, u32),
    pub test: (String, u32),
}

/// `base` cycles over `test` cycles, for two runs of the same workload and
/// vector length.
pub fn speedup(base: &StatsRecord, test: &StatsRecord) -> Result<f64, KeyMismatch> {
    let key = |r: &StatsRecord| (r.point.workload.clone(), r.point.vl_bits);
    if key(base) != key(test) {
        return Err(KeyMismatch { base: key(base), test: key(test) });
    }
    Ok(base.stats.total_cycles as f64 / test.stats.total_cycles as f64)
}

/// Axes of a sweep. The baseline hierarchy has no prefetcher, so it runs
/// once per workload and vector length with prefetching off.
#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub workloads: Vec<Workload>,
    pub vls: Vec<u32>,
    pub hierarchies: Vec<Hierarchy>,
    pub prefetch: Vec<PrefetchMode>,
    pub base: SimConfig,
    pub layout: Layout,
    pub oracle: bool,
}

impl SweepSpec {
    pub fn points(&self) -> Vec<(usize, SimConfig)> {
        let mut out = Vec::new();
        for (wi, _) in self.workloads.iter().enumerate() {
            for &vl in &self.vls {
                for &h in &self.hierarchies {
                    let modes: &[PrefetchMode] = match h {
                        Hierarchy::White => &[PrefetchMode::Off],
                        Hierarchy::Bicameral => &self.prefetch,
                    };
                    for &p in modes {
                        out.push((wi, self.base.clone().with_vl(vl).with_hierarchy(h).with_prefetch(p)));
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug)]
pub struct PointFailure {
    pub point: Point,
    pub error: RunError,
}

#[derive(Debug, Default)]
pub struct SweepResult {
    /// Successful points in sweep order.
    pub records: Vec<StatsRecord>,
    pub failures: Vec<PointFailure>,
}

impl SweepResult {
    pub fn find(&self, workload: &str, vl_bits: u32, h: Hierarchy, p: PrefetchMode) -> Option<&StatsRecord> {
        self.records.iter().find(|r| {
            let k = &r.point;
            k.workload == workload && k.vl_bits == vl_bits && k.hierarchy == h && k.prefetch == p
        })
    }

    /// The vector length at which `workload` runs fastest on the split
    /// hierarchy without prefetching. Ties go to the shorter length.
    pub fn best_vl(&self, workload: &str) -> Option<u32> {
        self.records
            .iter()
            .filter(|r| {
                r.point.workload == workload
                    && r.point.hierarchy == Hierarchy::Bicameral
                    && r.point.prefetch == PrefetchMode::Off
            })
            .min_by_key(|r| (r.stats.total_cycles, r.point.vl_bits))
            .map(|r| r.point.vl_bits)
    }
}

/// Runs every point, in parallel, and keeps going past failures.
pub fn sweep(spec: &SweepSpec) -> SweepResult {
    let outcomes: Vec<_> = spec
        .points()
        .into_par_iter()
        .map(|(wi, cfg)| {
            let w = &spec.workloads[wi];
            run(w, &cfg, spec.layout, spec.oracle).map_err(|error| PointFailure {
                point: Point {
                    workload: w.name().to_string(),
                    vl_bits: cfg.vl_bits,
                    hierarchy: cfg.hierarchy,
                    prefetch: cfg.prefetch,
                },
                error,
            })
        })
        .collect();
    let mut res = SweepResult::default();
    for o in outcomes {
        match o {
            Ok(r) => res.records.push(r),
            Err(f) => res.failures.push(f),
        }
    }
    res
}

pub const CSV_HEADER: &str = "workload,vl_bits,hierarchy,prefetch,cycles,accesses,native_hits,cross_hits,wb_restores,misses,amat,ras,cas,pre,writebacks,pf_issued,pf_filled,pf_useful";

pub fn csv_row(r: &StatsRecord) -> String {
    let (p, s) = (&r.point, &r.stats);
    format!(
        "{},{},{},{},{},{},{},{},{},{},{:.4},{},{},{},{},{},{},{}",
        p.workload,
        p.vl_bits,
        p.hierarchy,
        p.prefetch,
        s.total_cycles,
        s.accesses,
        s.native_hits,
        s.cross_hits,
        s.wb_restores,
        s.misses,
        s.amat(),
        s.ras,
        s.cas,
        s.pre,
        s.writebacks,
        s.pf_issued,
        s.pf_filled,
        s.pf_useful,
    )
}

pub fn write_csv<W: Write>(mut out: W, records: &[StatsRecord]) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in records {
        writeln!(out, "{}", csv_row(r))?;
    }
    out.flush()
}
