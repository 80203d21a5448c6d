use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use bicameral::config::{Hierarchy, PrefetchMode, SimConfig};
use bicameral::matrix::load_matrix_market;
use bicameral::metrics::{self, RunError, StatsRecord, SweepSpec, Workload};
use bicameral::trace::write_trace;
use bicameral::workload::{Kernel, Layout, SizePreset, KERNEL_NAMES};

/// Cycle-level simulator of a split scalar/vector cache for vector processors.
#[derive(Parser)]
#[command(name = "bicameral", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one workload at one configuration point.
    Run(RunArgs),
    /// Simulate the cartesian product of comma-separated axes.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct Common {
    /// Configuration file of `key = value` lines; defaults apply otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV output path; standard output when omitted.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Check every access and the final memory image against a flat shadow memory.
    #[arg(long, default_value = "on", value_parser = on_off, action = clap::ArgAction::Set)]
    oracle: bool,
    /// Seed for generated inputs (the random sparse matrix).
    #[arg(long)]
    seed: Option<u64>,
    /// Input size family for the built-in kernels.
    #[arg(long, default_value = "full")]
    size: SizePreset,
    /// Matrix Market file used by spmv instead of the random matrix.
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Alignment of every array, in bytes.
    #[arg(long, default_value_t = Layout::default().align)]
    align: u32,
}

#[derive(Args)]
struct RunArgs {
    /// Built-in kernel name or path of a trace file.
    #[arg(long)]
    workload: String,
    /// Vector length in bits.
    #[arg(long)]
    vl: Option<u32>,
    #[arg(long)]
    hierarchy: Option<Hierarchy>,
    #[arg(long)]
    prefetch: Option<PrefetchMode>,
    /// Also write the replayed trace to this path.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    workload: Vec<String>,
    #[arg(long, value_delimiter = ',', required = true)]
    vl: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "wc,bc")]
    hierarchy: Vec<Hierarchy>,
    #[arg(long, value_delimiter = ',', default_value = "off")]
    prefetch: Vec<PrefetchMode>,
    #[command(flatten)]
    common: Common,
}

fn on_off(s: &str) -> Result<bool, String> {
    match s {
        "on" => Ok(true),
        "off" => Ok(false),
        other => Err(format!("expected on|off, got `{other}`")),
    }
}

/// A simulated memory image that disagreed with the shadow memory; exits
/// with status 2 rather than 1.
#[derive(Debug)]
struct Diverged(String);

impl std::fmt::Display for Diverged {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "oracle divergence: {}", self.0)
    }
}

impl std::error::Error for Diverged {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_status(&e))
        }
    }
}

fn exit_status(e: &anyhow::Error) -> u8 {
    if e.is::<Diverged>() {
        2
    } else {
        1
    }
}

fn base_config(c: &Common) -> Result<SimConfig> {
    let mut cfg = match &c.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            SimConfig::parse(&text).with_context(|| format!("in {}", p.display()))?
        }
        None => SimConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.rng_seed = s;
    }
    Ok(cfg)
}

fn workload(name: &str, c: &Common, seed: u64) -> Result<Workload> {
    if KERNEL_NAMES.contains(&name) || name == "jacobi-2d" {
        let mut kernel = Kernel::preset(name, c.size, seed)?;
        if let (Kernel::Spmv { matrix, .. }, Some(path)) = (&mut kernel, &c.matrix) {
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let m = load_matrix_market(BufReader::new(file)).with_context(|| format!("in {}", path.display()))?;
            *matrix = Arc::new(m);
        }
        return Ok(Workload::Kernel(kernel));
    }
    if !Path::new(name).is_file() {
        bail!("`{name}` is neither a built-in workload ({}) nor a trace file", KERNEL_NAMES.join(", "));
    }
    Ok(Workload::from_trace_file(name)?)
}

fn layout(c: &Common) -> Layout {
    Layout { align: c.align, ..Layout::default() }
}

fn emit_csv(path: Option<&Path>, records: &[StatsRecord]) -> Result<()> {
    match path {
        Some(p) => {
            let f = File::create(p).with_context(|| format!("creating {}", p.display()))?;
            metrics::write_csv(BufWriter::new(f), records)?;
        }
        None => metrics::write_csv(io::stdout().lock(), records)?,
    }
    Ok(())
}

fn run(a: RunArgs) -> Result<()> {
    let mut cfg = base_config(&a.common)?;
    if let Some(vl) = a.vl {
        cfg = cfg.with_vl(vl);
    }
    if let Some(h) = a.hierarchy {
        cfg = cfg.with_hierarchy(h);
    }
    if let Some(p) = a.prefetch {
        cfg = cfg.with_prefetch(p);
    }
    cfg.validate()?;
    let w = workload(&a.workload, &a.common, cfg.rng_seed)?;
    let layout = layout(&a.common);
    if let Some(path) = &a.trace_out {
        let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_trace(BufWriter::new(f), w.events(cfg.vl_bits, layout)?)?;
    }
    let record = match metrics::run(&w, &cfg, layout, a.common.oracle) {
        Ok(r) => r,
        Err(RunError::Divergence(f)) => bail!(Diverged(f.to_string())),
        Err(e) => return Err(e.into()),
    };
    emit_csv(a.common.csv.as_deref(), std::slice::from_ref(&record))?;
    if a.common.csv.is_some() {
        let s = &record.stats;
        println!(
            "{} vl={} {} prefetch={}: {} cycles, {} accesses, AMAT {:.3}, {} row openings",
            record.point.workload,
            record.point.vl_bits,
            record.point.hierarchy,
            record.point.prefetch,
            s.total_cycles,
            s.accesses,
            s.amat(),
            s.ras
        );
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let cfg = base_config(&a.common)?;
    for &vl in &a.vl {
        cfg.clone().with_vl(vl).validate()?;
    }
    let workloads = a.workload.iter().map(|n| workload(n, &a.common, cfg.rng_seed)).collect::<Result<Vec<_>>>()?;
    let spec = SweepSpec {
        workloads,
        vls: a.vl,
        hierarchies: a.hierarchy,
        prefetch: a.prefetch,
        base: cfg,
        layout: layout(&a.common),
        oracle: a.common.oracle,
    };
    let result = metrics::sweep(&spec);
    emit_csv(a.common.csv.as_deref(), &result.records)?;
    let mut diverged = false;
    let mut stderr = io::stderr().lock();
    for f in &result.failures {
        let p = &f.point;
        let _ = writeln!(
            stderr,
            "{} vl={} {} prefetch={} failed: {}",
            p.workload, p.vl_bits, p.hierarchy, p.prefetch, f.error
        );
        diverged |= matches!(f.error, RunError::Divergence(_));
    }
    let failed =
        format!("{} of {} point(s) failed", result.failures.len(), result.failures.len() + result.records.len());
    match (result.failures.is_empty(), diverged) {
        (true, _) => Ok(()),
        (false, true) => bail!(Diverged(failed)),
        (false, false) => bail!(failed),
    }
}
