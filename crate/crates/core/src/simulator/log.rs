//! Event logs: storage, counting queries and CSV persistence.

use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;

/// Parameters a log was generated with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimMeta {
    pub n: usize,
    pub horizon: f64,
    pub mu: f64,
    pub kernel: KernelSpec,
    pub p: f64,
    pub graph_seed: u64,
    pub sim_seed: u64,
    /// When set, only the ancestors of individuals `0..observed` were simulated.
    pub observed: Option<usize>,
    pub total_events: u64,
}

/// Jump times of `n` individuals on `(0, horizon]`, each list sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    n: usize,
    horizon: f64,
    events: Vec<Vec<f64>>,
    meta: Option<SimMeta>,
}

const TIME_DECIMALS: usize = 9;

impl EventLog {
    /// Builds a log, checking that each list is strictly increasing inside
    /// `(0, horizon]`.
    pub fn new(horizon: f64, events: Vec<Vec<f64>>) -> Result<Self> {
        Self::checked(horizon, events, true)
    }

    pub fn empty(n: usize, horizon: f64) -> Result<Self> {
        Self::new(horizon, vec![Vec::new(); n])
    }

    fn checked(horizon: f64, events: Vec<Vec<f64>>, strict: bool) -> Result<Self> {
        if events.is_empty() {
            return Err(Error::Domain("an event log needs at least one individual".into()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
        }
        for (i, times) in events.iter().enumerate() {
            let mut prev = if strict { 0.0 } else { f64::NEG_INFINITY };
            for &s in times {
                let ordered = if strict { s > prev } else { s >= prev };
                if !ordered || s > horizon || s < 0.0 || s.is_nan() {
                    return Err(Error::Domain(format!(
                        "individual {i}: time {s} breaks the ordering or leaves [0, {horizon}]"
                    )));
                }
                prev = s;
            }
        }
        Ok(EventLog {
            n: events.len(),
            horizon,
            events,
            meta: None,
        })
    }

    pub(crate) fn from_parts_unchecked(horizon: f64, events: Vec<Vec<f64>>, meta: Option<SimMeta>) -> Self {
        EventLog {
            n: events.len(),
            horizon,
            events,
            meta,
        }
    }

    pub fn with_meta(mut self, meta: SimMeta) -> Self {
        self.meta = Some(meta);
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn meta(&self) -> Option<&SimMeta> {
        self.meta.as_ref()
    }

    pub fn times(&self, i: usize) -> &[f64] {
        &self.events[i]
    }

    pub fn total_events(&self) -> u64 {
        self.events.iter().map(|e| e.len() as u64).sum()
    }

    /// `Z^i(t)`, the number of jumps of `i` in `[0, t]`.
    pub fn count_at(&self, i: usize, t: f64) -> Result<u64> {
        if i >= self.n {
            return Err(Error::Domain(format!("individual {i} out of range 0..{}", self.n)));
        }
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::Domain(format!("time {t} outside [0, {}]", self.horizon)));
        }
        Ok(self.count_unchecked(i, t))
    }

    pub(crate) fn count_unchecked(&self, i: usize, t: f64) -> u64 {
        self.events[i].partition_point(|&s| s <= t) as u64
    }

    /// `Σ_{i < k} Z^i(t)` at each grid time.
    pub fn block_counts(&self, k: usize, grid: &[f64]) -> Vec<u64> {
        let mut out = vec![0u64; grid.len()];
        for times in &self.events[..k] {
            for (o, &t) in out.iter_mut().zip(grid) {
                *o += times.partition_point(|&s| s <= t) as u64;
            }
        }
        out
    }

    /// Rounds every time to the CSV resolution so that a log and its CSV
    /// round-trip compare equal.
    pub fn quantize(&mut self) {
        let h = self.horizon;
        for times in &mut self.events {
            for s in times.iter_mut() {
                let r: f64 = format!("{:.*}", TIME_DECIMALS, *s).parse().expect("formatted float");
                *s = r.clamp(0.0, h);
            }
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut w = BufWriter::new(w);
        writeln!(w, "individual,time")?;
        for (i, times) in self.events.iter().enumerate() {
            for s in times {
                writeln!(w, "{i},{:.*}", TIME_DECIMALS, s)?;
            }
        }
        w.flush()
    }

    /// Reads rows `individual,time` for a population of `n` over `horizon`.
    ///
    /// Times must be nondecreasing per individual: rounding to the CSV
    /// resolution can merge two close jumps into a tie.
    pub fn read_csv<R: BufRead>(r: R, n: usize, horizon: f64) -> Result<Self> {
        let mut events = vec![Vec::new(); n];
        let mut last: Option<(usize, f64)> = None;
        for (lineno, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<event stream>", e))?;
            let line = line.trim();
            if lineno == 0 {
                if line != "individual,time" {
                    return Err(Error::parse("event csv", format!("bad header {line:?}")));
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let ctx = || format!("event csv line {}", lineno + 1);
            let (a, b) = line
                .split_once(',')
                .ok_or_else(|| Error::parse(ctx(), "expected two fields"))?;
            let i: usize = a.trim().parse().map_err(|e| Error::parse(ctx(), format!("individual: {e}")))?;
            let s: f64 = b.trim().parse().map_err(|e| Error::parse(ctx(), format!("time: {e}")))?;
            if i >= n {
                return Err(Error::parse(ctx(), format!("individual {i} not below N = {n}")));
            }
            if let Some((pi, ps)) = last {
                if i < pi || (i == pi && s < ps) {
                    return Err(Error::parse(ctx(), "rows must be sorted by (individual, time)"));
                }
            }
            last = Some((i, s));
            events[i].push(s);
        }
        Self::checked(horizon, events, false).map_err(|e| Error::parse("event csv", e.to_string()))
    }

    /// Path of the metadata sidecar belonging to an event CSV.
    pub fn meta_path(csv: &Path) -> PathBuf {
        csv.with_extension("meta.json")
    }

    /// Writes the CSV and, when available, its metadata sidecar.
    pub fn save(&self, csv: &Path) -> Result<()> {
        let file = std::fs::File::create(csv).map_err(|e| Error::io(csv, e))?;
        self.write_csv(file).map_err(|e| Error::io(csv, e))?;
        if let Some(meta) = &self.meta {
            let mp = Self::meta_path(csv);
            let json = serde_json::to_string_pretty(meta)?;
            std::fs::write(&mp, json + "\n").map_err(|e| Error::io(&mp, e))?;
        }
        Ok(())
    }

    /// Loads a CSV, taking `n` and the horizon from the sidecar unless given.
    pub fn load(csv: &Path, n: Option<usize>, horizon: Option<f64>) -> Result<Self> {
        let mp = Self::meta_path(csv);
        let meta: Option<SimMeta> = if mp.exists() {
            let text = std::fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
            Some(serde_json::from_str(&text)?)
        } else {
            None
        };
        let n = n
            .or(meta.as_ref().map(|m| m.n))
            .ok_or_else(|| Error::Config(format!("no sidecar at {}; pass N explicitly", mp.display())))?;
        let horizon = horizon
            .or(meta.as_ref().map(|m| m.horizon))
            .ok_or_else(|| Error::Config(format!("no sidecar at {}; pass the horizon explicitly", mp.display())))?;
        let file = std::fs::File::open(csv).map_err(|e| Error::io(csv, e))?;
        let mut log = Self::read_csv(std::io::BufReader::new(file), n, horizon)?;
        log.meta = meta;
        Ok(log)
    }
}
