//! Simulation configuration: geometry, latencies and run mode.
//!
//! Configurations come from flat `key = value` files (`#` starts a comment).
//! Unknown keys are rejected so that a typo can never silently fall back to a
//! default.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::address::{dram_layout, AddressMap};

/// Architectural vector lengths, in bits, accepted by the simulator.
pub const ALLOWED_VL_BITS: [u32; 6] = [128, 256, 512, 1024, 2048, 4096];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Hierarchy {
    /// Split scalar/vector cache.
    Bicameral,
    /// Conventional unified baseline cache.
    White,
}

impl Hierarchy {
    pub fn as_str(self) -> &'static str {
        match self {
            Hierarchy::Bicameral => "bc",
            Hierarchy::White => "wc",
        }
    }
}

impl FromStr for Hierarchy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bc" | "bicameral" => Ok(Hierarchy::Bicameral),
            "wc" | "white" => Ok(Hierarchy::White),
            other => Err(format!("unknown hierarchy `{other}` (expected bc|wc)")),
        }
    }
}

impl fmt::Display for Hierarchy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PrefetchMode {
    Off,
    /// Memory-side next-sector prefetching into open rows.
    On,
    /// Whole-line fill at the cost of the demanded sector.
    Ideal,
}

impl PrefetchMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PrefetchMode::Off => "off",
            PrefetchMode::On => "on",
            PrefetchMode::Ideal => "ideal",
        }
    }
}

impl FromStr for PrefetchMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "off" | "none" => Ok(PrefetchMode::Off),
            "on" | "pf" => Ok(PrefetchMode::On),
            "ideal" | "idl" => Ok(PrefetchMode::Ideal),
            other => Err(format!("unknown prefetch mode `{other}` (expected off|on|ideal)")),
        }
    }
}

impl fmt::Display for PrefetchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A validated simulation configuration. Construct it with
/// [`SimConfig::default`], [`SimConfig::parse`] or [`SimConfig::from_pairs`];
/// the latter two run [`SimConfig::validate`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimConfig {
    pub sector_bytes: u32,
    pub sc_sets: u32,
    pub sc_ways: u32,
    pub vc_lines: u32,
    pub vc_sectors_per_line: u32,
    /// Write buffer entries, shared figure for SC, VC and WC.
    pub wb_capacity: u32,
    pub wc_sets: u32,
    pub wc_ways: u32,
    pub drain_threshold_sc: u32,
    pub drain_threshold_vc: u32,
    pub lat_lookup: u64,
    pub lat_ras: u64,
    pub lat_cas: u64,
    pub lat_pre: u64,
    pub bus_bits: u32,
    pub hierarchy: Hierarchy,
    pub prefetch: PrefetchMode,
    pub vl_bits: u32,
    /// Fetch a sector from memory even when a vector store overwrites all of it.
    pub fetch_on_full_write: bool,
    pub rng_seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            sector_bytes: 64,
            sc_sets: 256,
            sc_ways: 4,
            vc_lines: 64,
            vc_sectors_per_line: 16,
            wb_capacity: 8,
            wc_sets: 512,
            wc_ways: 4,
            drain_threshold_sc: 8,
            drain_threshold_vc: 5,
            lat_lookup: 1,
            lat_ras: 28,
            lat_cas: 11,
            lat_pre: 11,
            bus_bits: 512,
            hierarchy: Hierarchy::Bicameral,
            prefetch: PrefetchMode::Off,
            vl_bits: 512,
            fetch_on_full_write: false,
            rng_seed: 0,
        }
    }
}

/// One violated constraint.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ConfigProblem {
    Syntax { line: usize, text: String },
    UnknownKey(String),
    DuplicateKey(String),
    BadValue { key: String, value: String, reason: String },
    Zero(&'static str),
    NotPowerOfTwo(&'static str, u64),
    OutOfRange { key: &'static str, value: u64, min: u64, max: u64 },
    CapacityMismatch { scalar: u64, vector: u64, white: u64 },
    VlNotAllowed(u32),
    BusWidth { bus_bits: u32, sector_bits: u32 },
}

impl fmt::Display for ConfigProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigProblem::Syntax { line, text } => {
                write!(f, "line {line}: expected `key = value`, got `{text}`")
            }
            ConfigProblem::UnknownKey(k) => write!(f, "unknown key `{k}`"),
            ConfigProblem::DuplicateKey(k) => write!(f, "key `{k}` given more than once"),
            ConfigProblem::BadValue { key, value, reason } => {
                write!(f, "bad value `{value}` for `{key}`: {reason}")
            }
            ConfigProblem::Zero(k) => write!(f, "`{k}` must be non-zero"),
            ConfigProblem::NotPowerOfTwo(k, v) => write!(f, "`{k}` = {v} is not a power of two"),
            ConfigProblem::OutOfRange { key, value, min, max } => {
                write!(f, "`{key}` = {value} outside [{min}, {max}]")
            }
            ConfigProblem::CapacityMismatch { scalar, vector, white } => write!(
                f,
                "capacity mismatch: scalar {scalar} B and vector {vector} B must be equal and sum to white {white} B"
            ),
            ConfigProblem::VlNotAllowed(v) => {
                write!(f, "vl_bits = {v} not in {:?}", ALLOWED_VL_BITS)
            }
            ConfigProblem::BusWidth { bus_bits, sector_bits } => {
                write!(f, "bus_bits = {bus_bits} must equal the sector size ({sector_bits} bits)")
            }
        }
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub struct ConfigError {
    pub problems: Vec<ConfigProblem>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration:")?;
        for p in &self.problems {
            write!(f, "\n  - {p}")?;
        }
        Ok(())
    }
}

impl ConfigError {
    pub fn contains(&self, pred: impl Fn(&ConfigProblem) -> bool) -> bool {
        self.problems.iter().any(pred)
    }
}

impl SimConfig {
    /// Parses a `key = value` file and validates the result.
    pub fn parse(text: &str) -> Result<SimConfig, ConfigError> {
        let mut pairs = Vec::new();
        let mut problems = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) if !k.trim().is_empty() => pairs.push((k.trim().to_string(), v.trim().to_string())),
                _ => problems.push(ConfigProblem::Syntax { line: i + 1, text: raw.to_string() }),
            }
        }
        match SimConfig::from_pairs(pairs) {
            Ok(cfg) if problems.is_empty() => Ok(cfg),
            Ok(_) => Err(ConfigError { problems }),
            Err(mut e) => {
                problems.append(&mut e.problems);
                Err(ConfigError { problems })
            }
        }
    }

    /// Applies `key = value` overrides on top of the defaults and validates.
    ///
    /// When `wb_capacity` is overridden without explicit drain thresholds, the
    /// thresholds follow it: full capacity for the scalar buffer and half plus
    /// one for the vector buffer.
    pub fn from_pairs<K, V>(pairs: impl IntoIterator<Item = (K, V)>) -> Result<SimConfig, ConfigError>
    where
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut cfg = SimConfig::default();
        let mut problems = Vec::new();
        let mut seen: Vec<String> = Vec::new();

        for (k, v) in pairs {
            let key = k.as_ref().trim().to_string();
            let value = v.as_ref().trim();
            if seen.contains(&key) {
                problems.push(ConfigProblem::DuplicateKey(key));
                continue;
            }
            seen.push(key.clone());
            if let Err(p) = cfg.set(&key, value) {
                problems.push(p);
            }
        }

        let has = |k: &str| seen.iter().any(|s| s == k);
        if has("wb_capacity") {
            if !has("drain_threshold_sc") {
                cfg.drain_threshold_sc = cfg.wb_capacity;
            }
            if !has("drain_threshold_vc") {
                cfg.drain_threshold_vc = cfg.wb_capacity / 2 + 1;
            }
        }

        if let Err(mut e) = cfg.validate() {
            problems.append(&mut e.problems);
        }
        if problems.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigError { problems })
        }
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigProblem> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigProblem> {
            let parsed = if let Some(hex) = value.strip_prefix("0x") {
                u64::from_str_radix(hex, 16).ok().and_then(|v| v.to_string().parse().ok())
            } else {
                value.parse().ok()
            };
            parsed.ok_or_else(|| ConfigProblem::BadValue {
                key: key.to_string(),
                value: value.to_string(),
                reason: "not an unsigned integer in range".into(),
            })
        }
        fn parsed<T: FromStr<Err = String>>(key: &str, value: &str) -> Result<T, ConfigProblem> {
            value.parse().map_err(|reason| ConfigProblem::BadValue {
                key: key.to_string(),
                value: value.to_string(),
                reason,
            })
        }

        match key {
            "sector_bytes" => self.sector_bytes = num(key, value)?,
            "sc_sets" => self.sc_sets = num(key, value)?,
            "sc_ways" => self.sc_ways = num(key, value)?,
            "vc_lines" => self.vc_lines = num(key, value)?,
            "vc_sectors_per_line" => self.vc_sectors_per_line = num(key, value)?,
            "wb_capacity" => self.wb_capacity = num(key, value)?,
            "wc_sets" => self.wc_sets = num(key, value)?,
            "wc_ways" => self.wc_ways = num(key, value)?,
            "drain_threshold_sc" => self.drain_threshold_sc = num(key, value)?,
            "drain_threshold_vc" => self.drain_threshold_vc = num(key, value)?,
            "lat_lookup" => self.lat_lookup = num(key, value)?,
            "lat_ras" => self.lat_ras = num(key, value)?,
            "lat_cas" => self.lat_cas = num(key, value)?,
            "lat_pre" => self.lat_pre = num(key, value)?,
            "bus_bits" => self.bus_bits = num(key, value)?,
            "vl_bits" => self.vl_bits = num(key, value)?,
            "rng_seed" => self.rng_seed = num(key, value)?,
            "hierarchy" => self.hierarchy = parsed(key, value)?,
            "prefetch" => self.prefetch = parsed(key, value)?,
            "fetch_on_full_write" => {
                self.fetch_on_full_write = match value.to_ascii_lowercase().as_str() {
                    "true" | "1" | "yes" | "on" => true,
                    "false" | "0" | "no" | "off" => false,
                    _ => {
                        return Err(ConfigProblem::BadValue {
                            key: key.into(),
                            value: value.into(),
                            reason: "expected a boolean".into(),
                        })
                    }
                }
            }
            other => return Err(ConfigProblem::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Checks every structural constraint and reports all violations at once.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut p = Vec::new();

        let sizes: [(&'static str, u64); 9] = [
            ("sector_bytes", self.sector_bytes as u64),
            ("sc_sets", self.sc_sets as u64),
            ("sc_ways", self.sc_ways as u64),
            ("vc_lines", self.vc_lines as u64),
            ("vc_sectors_per_line", self.vc_sectors_per_line as u64),
            ("wb_capacity", self.wb_capacity as u64),
            ("wc_sets", self.wc_sets as u64),
            ("wc_ways", self.wc_ways as u64),
            ("bus_bits", self.bus_bits as u64),
        ];
        let mut any_zero = false;
        for (k, v) in sizes {
            if v == 0 {
                p.push(ConfigProblem::Zero(k));
                any_zero = true;
            }
        }
        for (k, v) in [
            ("lat_lookup", self.lat_lookup),
            ("lat_ras", self.lat_ras),
            ("lat_cas", self.lat_cas),
            ("lat_pre", self.lat_pre),
        ] {
            if v == 0 {
                p.push(ConfigProblem::Zero(k));
            }
        }

        for (k, v) in [
            ("sector_bytes", self.sector_bytes),
            ("sc_sets", self.sc_sets),
            ("vc_sectors_per_line", self.vc_sectors_per_line),
            ("wc_sets", self.wc_sets),
        ] {
            if v != 0 && !v.is_power_of_two() {
                p.push(ConfigProblem::NotPowerOfTwo(k, v as u64));
            }
        }

        // Byte masks and sector masks are 64-bit words.
        if self.sector_bytes != 0 && !(8..=64).contains(&self.sector_bytes) {
            p.push(ConfigProblem::OutOfRange { key: "sector_bytes", value: self.sector_bytes as u64, min: 8, max: 64 });
        }
        if self.vc_sectors_per_line > 64 {
            p.push(ConfigProblem::OutOfRange {
                key: "vc_sectors_per_line",
                value: self.vc_sectors_per_line as u64,
                min: 1,
                max: 64,
            });
        }
        // A vector line must sit inside one row of one bank.
        let bank_row_bytes = (dram_layout::COLUMNS as u64) << dram_layout::OFFSET_BITS;
        let line_bytes = self.sector_bytes as u64 * self.vc_sectors_per_line as u64;
        if line_bytes > bank_row_bytes {
            p.push(ConfigProblem::OutOfRange {
                key: "vc_sectors_per_line",
                value: self.vc_sectors_per_line as u64,
                min: 1,
                max: bank_row_bytes / self.sector_bytes.max(1) as u64,
            });
        }

        if !any_zero {
            let sb = self.sector_bytes as u64;
            let scalar = self.sc_sets as u64 * self.sc_ways as u64 * sb;
            let vector = self.vc_lines as u64 * self.vc_sectors_per_line as u64 * sb;
            let white = self.wc_sets as u64 * self.wc_ways as u64 * sb;
            if scalar != vector || scalar + vector != white {
                p.push(ConfigProblem::CapacityMismatch { scalar, vector, white });
            }
            if self.bus_bits != self.sector_bytes * 8 {
                p.push(ConfigProblem::BusWidth { bus_bits: self.bus_bits, sector_bits: self.sector_bytes * 8 });
            }
        }

        if self.wb_capacity != 0 {
            for (k, v) in
                [("drain_threshold_sc", self.drain_threshold_sc), ("drain_threshold_vc", self.drain_threshold_vc)]
            {
                if v == 0 || v > self.wb_capacity {
                    p.push(ConfigProblem::OutOfRange { key: k, value: v as u64, min: 1, max: self.wb_capacity as u64 });
                }
            }
        }

        if !ALLOWED_VL_BITS.contains(&self.vl_bits) {
            p.push(ConfigProblem::VlNotAllowed(self.vl_bits));
        }

        if p.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { problems: p })
        }
    }

    pub fn address_map(&self) -> AddressMap {
        AddressMap::new(self.sector_bytes, self.sc_sets, self.vc_sectors_per_line, self.wc_sets)
    }

    pub fn with_hierarchy(mut self, h: Hierarchy) -> Self {
        self.hierarchy = h;
        self
    }

    pub fn with_prefetch(mut self, p: PrefetchMode) -> Self {
        self.prefetch = p;
        self
    }

    pub fn with_vl(mut self, vl_bits: u32) -> Self {
        self.vl_bits = vl_bits;
        self
    }

    /// Renders the configuration back into the file format, one key per line.
    pub fn to_text(&self) -> String {
        format!(
            "sector_bytes = {}\nsc_sets = {}\nsc_ways = {}\nvc_lines = {}\nvc_sectors_per_line = {}\n\
             wb_capacity = {}\nwc_sets = {}\nwc_ways = {}\ndrain_threshold_sc = {}\ndrain_threshold_vc = {}\n\
             lat_lookup = {}\nlat_ras = {}\nlat_cas = {}\nlat_pre = {}\nbus_bits = {}\nhierarchy = {}\n\
             prefetch = {}\nvl_bits = {}\nfetch_on_full_write = {}\nrng_seed = {}\n",
            self.sector_bytes,
            self.sc_sets,
            self.sc_ways,
            self.vc_lines,
            self.vc_sectors_per_line,
            self.wb_capacity,
            self.wc_sets,
            self.wc_ways,
            self.drain_threshold_sc,
            self.drain_threshold_vc,
            self.lat_lookup,
            self.lat_ras,
            self.lat_cas,
            self.lat_pre,
            self.bus_bits,
            self.hierarchy,
            self.prefetch,
            self.vl_bits,
            self.fetch_on_full_write,
            self.rng_seed,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_gives_defaults() {
        let cfg = SimConfig::parse("").unwrap();
        assert_eq!(cfg, SimConfig::default());
        assert_eq!((cfg.lat_lookup, cfg.lat_ras, cfg.lat_cas, cfg.lat_pre), (1, 28, 11, 11));
        assert_eq!((cfg.sc_sets, cfg.sc_ways, cfg.vc_lines, cfg.vc_sectors_per_line), (256, 4, 64, 16));
        assert_eq!((cfg.wc_sets, cfg.wc_ways, cfg.wb_capacity), (512, 4, 8));
        assert_eq!(cfg.drain_threshold_vc, cfg.wb_capacity / 2 + 1);
        assert_eq!(cfg.drain_threshold_sc, cfg.wb_capacity);
    }

    #[test]
    fn default_capacities() {
        let c = SimConfig::default();
        assert_eq!(c.sc_sets * c.sc_ways * c.sector_bytes, 64 * 1024);
        assert_eq!(c.vc_lines * c.vc_sectors_per_line * c.sector_bytes, 64 * 1024);
        assert_eq!(c.wc_sets * c.wc_ways * c.sector_bytes, 128 * 1024);
    }

    #[test]
    fn half_scalar_cache_is_capacity_mismatch() {
        let e = SimConfig::parse("sc_sets = 128").unwrap_err();
        assert!(e.contains(|p| matches!(p, ConfigProblem::CapacityMismatch { scalar: 32768, .. })));
    }

    #[test]
    fn vl_outside_allowed_set() {
        let e = SimConfig::parse("vl_bits = 384").unwrap_err();
        assert_eq!(e.problems, vec![ConfigProblem::VlNotAllowed(384)]);
    }

    #[test]
    fn zero_sized_structures() {
        let e = SimConfig::parse("vc_lines = 0\nwb_capacity = 0").unwrap_err();
        assert!(e.contains(|p| *p == ConfigProblem::Zero("vc_lines")));
        assert!(e.contains(|p| *p == ConfigProblem::Zero("wb_capacity")));
    }

    #[test]
    fn every_violation_is_listed() {
        let e = SimConfig::parse("sc_sets = 100\nvl_bits = 100\nbogus = 1\nnot a pair").unwrap_err();
        assert!(e.contains(|p| matches!(p, ConfigProblem::Syntax { line: 4, .. })));
        assert!(e.contains(|p| matches!(p, ConfigProblem::UnknownKey(k) if k == "bogus")));
        assert!(e.contains(|p| matches!(p, ConfigProblem::NotPowerOfTwo("sc_sets", 100))));
        assert!(e.contains(|p| matches!(p, ConfigProblem::VlNotAllowed(100))));
        assert!(e.contains(|p| matches!(p, ConfigProblem::CapacityMismatch { .. })));
        let msg = e.to_string();
        assert!(msg.lines().count() >= 6, "{msg}");
    }

    #[test]
    fn comments_and_modes() {
        let cfg = SimConfig::parse(
            "# run mode\nhierarchy = wc   # baseline\nprefetch = ideal\nvl_bits = 4096\nfetch_on_full_write = true\n",
        )
        .unwrap();
        assert_eq!(cfg.hierarchy, Hierarchy::White);
        assert_eq!(cfg.prefetch, PrefetchMode::Ideal);
        assert_eq!(cfg.vl_bits, 4096);
        assert!(cfg.fetch_on_full_write);
    }

    #[test]
    fn thresholds_follow_wb_capacity() {
        let cfg = SimConfig::parse("wb_capacity = 12").unwrap();
        assert_eq!(cfg.drain_threshold_sc, 12);
        assert_eq!(cfg.drain_threshold_vc, 7);
        let e = SimConfig::parse("drain_threshold_vc = 9").unwrap_err();
        assert!(e.contains(|p| matches!(p, ConfigProblem::OutOfRange { key: "drain_threshold_vc", .. })));
    }

    #[test]
    fn alternative_geometry_validates() {
        let cfg = SimConfig::parse("sc_sets = 512\nsc_ways = 2\nvc_lines = 128\nvc_sectors_per_line = 8").unwrap();
        assert_eq!(cfg.address_map().vc_line_bytes(), 512);
    }

    #[test]
    fn text_round_trip() {
        let cfg = SimConfig::default().with_hierarchy(Hierarchy::White).with_vl(2048);
        assert_eq!(SimConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn duplicate_key_rejected() {
        let e = SimConfig::parse("vl_bits = 128\nvl_bits = 256").unwrap_err();
        assert!(e.contains(|p| matches!(p, ConfigProblem::DuplicateKey(k) if k == "vl_bits")));
    }
}
