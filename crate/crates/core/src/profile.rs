//! Per-flip-flop, per-benchmark injection outcome counts.
//!
//! Profile file format:
//!
//! ```text
//! # benchmark=matmul golden_cycles=9214 seed=1 count=10000 hang_multiplier=2 detectors=
//! ff_id,benchmark,vanished,omm,ut,hang,ed,total
//! 17,matmul,30,2,1,0,0,33
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::design::FfId;

pub const PROFILE_HEADER: &str = "ff_id,benchmark,vanished,omm,ut,hang,ed,total";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("flip-flop {ff}, benchmark {benchmark}: class counts sum to {sum}, total column says {total}")]
    TotalMismatch { ff: FfId, benchmark: String, sum: u64, total: u64 },
    #[error("flip-flop {ff}, benchmark {benchmark}: ED count {ed} without an active detector")]
    EdWithoutDetector { ff: FfId, benchmark: String, ed: u64 },
    #[error("record for undeclared benchmark `{0}`")]
    UnknownBenchmark(String),
    #[error("duplicate record for flip-flop {ff}, benchmark {benchmark}")]
    DuplicateRecord { ff: FfId, benchmark: String },
    #[error("benchmark `{0}` declared twice")]
    DuplicateBenchmark(String),
    #[error("missing column header `{PROFILE_HEADER}`")]
    MissingHeader,
    #[error("profile is empty")]
    Empty,
}

/// Outcome of one injected error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OutcomeClass {
    Vanished,
    /// Output mismatch: normal termination, wrong output (SDC).
    Omm,
    /// Unexpected termination (trap).
    Ut,
    Hang,
    /// An active detector flagged the error and nothing recovered it.
    Ed,
}

impl OutcomeClass {
    pub const ALL: [OutcomeClass; 5] = [
        OutcomeClass::Vanished,
        OutcomeClass::Omm,
        OutcomeClass::Ut,
        OutcomeClass::Hang,
        OutcomeClass::Ed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeClass::Vanished => "vanished",
            OutcomeClass::Omm => "omm",
            OutcomeClass::Ut => "ut",
            OutcomeClass::Hang => "hang",
            OutcomeClass::Ed => "ed",
        }
    }

    pub fn is_sdc(self) -> bool {
        self == OutcomeClass::Omm
    }

    pub fn is_due(self) -> bool {
        matches!(self, OutcomeClass::Ut | OutcomeClass::Hang | OutcomeClass::Ed)
    }
}

impl fmt::Display for OutcomeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OutcomeCounts {
    pub vanished: u64,
    pub omm: u64,
    pub ut: u64,
    pub hang: u64,
    pub ed: u64,
}

impl OutcomeCounts {
    pub fn record(&mut self, class: OutcomeClass) {
        *self.get_mut(class) += 1;
    }

    pub fn get(&self, class: OutcomeClass) -> u64 {
        match class {
            OutcomeClass::Vanished => self.vanished,
            OutcomeClass::Omm => self.omm,
            OutcomeClass::Ut => self.ut,
            OutcomeClass::Hang => self.hang,
            OutcomeClass::Ed => self.ed,
        }
    }

    fn get_mut(&mut self, class: OutcomeClass) -> &mut u64 {
        match class {
            OutcomeClass::Vanished => &mut self.vanished,
            OutcomeClass::Omm => &mut self.omm,
            OutcomeClass::Ut => &mut self.ut,
            OutcomeClass::Hang => &mut self.hang,
            OutcomeClass::Ed => &mut self.ed,
        }
    }

    pub fn total(&self) -> u64 {
        self.vanished + self.omm + self.ut + self.hang + self.ed
    }

    pub fn sdc(&self) -> u64 {
        self.omm
    }

    pub fn due(&self) -> u64 {
        self.ut + self.hang + self.ed
    }

    pub fn merge(&mut self, other: &OutcomeCounts) {
        self.vanished += other.vanished;
        self.omm += other.omm;
        self.ut += other.ut;
        self.hang += other.hang;
        self.ed += other.ed;
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchmarkMeta {
    pub name: String,
    pub golden_cycles: u64,
    pub seed: Option<u64>,
    pub injections: Option<u64>,
    pub hang_multiplier: Option<f64>,
    /// Detection hooks active during the campaign; empty means ED must be 0.
    pub detectors: Vec<String>,
}

impl BenchmarkMeta {
    pub fn new(name: impl Into<String>, golden_cycles: u64) -> Self {
        BenchmarkMeta { name: name.into(), golden_cycles, ..Default::default() }
    }

    fn to_line(&self) -> String {
        let mut s = format!("# benchmark={} golden_cycles={}", self.name, self.golden_cycles);
        if let Some(seed) = self.seed {
            s.push_str(&format!(" seed={seed}"));
        }
        if let Some(count) = self.injections {
            s.push_str(&format!(" count={count}"));
        }
        if let Some(m) = self.hang_multiplier {
            s.push_str(&format!(" hang_multiplier={m}"));
        }
        s.push_str(&format!(" detectors={}", self.detectors.join(";")));
        s
    }

    fn parse_line(body: &str, line: usize) -> Result<Self, ProfileError> {
        let err = |msg: String| ProfileError::Parse { line, msg };
        let mut meta = BenchmarkMeta::default();
        let mut has_name = false;
        for token in body.split_whitespace() {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got `{token}`")))?;
            let int = |v: &str| v.parse::<u64>().map_err(|e| err(format!("bad {key} `{v}`: {e}")));
            match key {
                "benchmark" => {
                    meta.name = value.to_string();
                    has_name = true;
                }
                "golden_cycles" => meta.golden_cycles = int(value)?,
                "seed" => meta.seed = Some(int(value)?),
                "count" => meta.injections = Some(int(value)?),
                "hang_multiplier" => {
                    meta.hang_multiplier = Some(
                        value.parse().map_err(|e| err(format!("bad hang_multiplier: {e}")))?,
                    )
                }
                "detectors" => {
                    meta.detectors = value
                        .split(';')
                        .filter(|s| !s.is_empty())
                        .map(str::to_string)
                        .collect()
                }
                _ => {}
            }
        }
        if !has_name {
            return Err(err("benchmark metadata without a name".into()));
        }
        Ok(meta)
    }
}

/// Error counts for one flip-flop across all benchmarks of a profile.
#[derive(Debug, Clone, PartialEq)]
pub struct VulnerabilityProfile {
    benchmarks: BTreeMap<String, BenchmarkMeta>,
    records: BTreeMap<FfId, BTreeMap<String, OutcomeCounts>>,
}

impl VulnerabilityProfile {
    pub fn new(benchmarks: Vec<BenchmarkMeta>) -> Result<Self, ProfileError> {
        let mut map = BTreeMap::new();
        for b in benchmarks {
            if map.contains_key(&b.name) {
                return Err(ProfileError::DuplicateBenchmark(b.name));
            }
            map.insert(b.name.clone(), b);
        }
        Ok(VulnerabilityProfile { benchmarks: map, records: BTreeMap::new() })
    }

    pub fn insert(
        &mut self,
        ff: FfId,
        benchmark: &str,
        counts: OutcomeCounts,
    ) -> Result<(), ProfileError> {
        let meta = self
            .benchmarks
            .get(benchmark)
            .ok_or_else(|| ProfileError::UnknownBenchmark(benchmark.to_string()))?;
        if meta.detectors.is_empty() && counts.ed > 0 {
            return Err(ProfileError::EdWithoutDetector {
                ff,
                benchmark: benchmark.to_string(),
                ed: counts.ed,
            });
        }
        let slot = self.records.entry(ff).or_default();
        if slot.contains_key(benchmark) {
            return Err(ProfileError::DuplicateRecord { ff, benchmark: benchmark.to_string() });
        }
        slot.insert(benchmark.to_string(), counts);
        Ok(())
    }

    pub fn benchmarks(&self) -> impl Iterator<Item = &BenchmarkMeta> {
        self.benchmarks.values()
    }

    pub fn benchmark_names(&self) -> Vec<String> {
        self.benchmarks.keys().cloned().collect()
    }

    pub fn benchmark(&self, name: &str) -> Option<&BenchmarkMeta> {
        self.benchmarks.get(name)
    }

    pub fn ff_ids(&self) -> impl Iterator<Item = FfId> + '_ {
        self.records.keys().copied()
    }

    pub fn ff_count(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn counts(&self, ff: FfId, benchmark: &str) -> Option<&OutcomeCounts> {
        self.records.get(&ff).and_then(|m| m.get(benchmark))
    }

    /// All (benchmark, counts) entries for one flip-flop.
    pub fn ff_records(&self, ff: FfId) -> impl Iterator<Item = (&str, &OutcomeCounts)> {
        self.records
            .get(&ff)
            .into_iter()
            .flat_map(|m| m.iter().map(|(b, c)| (b.as_str(), c)))
    }

    pub fn records(&self) -> impl Iterator<Item = (FfId, &str, &OutcomeCounts)> {
        self.records
            .iter()
            .flat_map(|(&ff, m)| m.iter().map(move |(b, c)| (ff, b.as_str(), c)))
    }

    /// Sum of counts for one flip-flop over all benchmarks.
    pub fn ff_total(&self, ff: FfId) -> OutcomeCounts {
        let mut acc = OutcomeCounts::default();
        for (_, c) in self.ff_records(ff) {
            acc.merge(c);
        }
        acc
    }

    pub fn totals(&self) -> OutcomeCounts {
        let mut acc = OutcomeCounts::default();
        for (_, _, c) in self.records() {
            acc.merge(c);
        }
        acc
    }

    /// Sub-profile over the named benchmarks only.
    pub fn restrict<S: AsRef<str>>(&self, names: &[S]) -> Result<Self, ProfileError> {
        let keep: BTreeSet<&str> = names.iter().map(AsRef::as_ref).collect();
        for name in &keep {
            if !self.benchmarks.contains_key(*name) {
                return Err(ProfileError::UnknownBenchmark(name.to_string()));
            }
        }
        let benchmarks = self
            .benchmarks
            .iter()
            .filter(|(k, _)| keep.contains(k.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let records = self
            .records
            .iter()
            .map(|(&ff, m)| {
                let sub = m
                    .iter()
                    .filter(|(b, _)| keep.contains(b.as_str()))
                    .map(|(b, c)| (b.clone(), *c))
                    .collect();
                (ff, sub)
            })
            .collect();
        Ok(VulnerabilityProfile { benchmarks, records })
    }

    /// Combine profiles of disjoint benchmark sets.
    pub fn merge(&mut self, other: &VulnerabilityProfile) -> Result<(), ProfileError> {
        for (name, meta) in &other.benchmarks {
            if self.benchmarks.contains_key(name) {
                return Err(ProfileError::DuplicateBenchmark(name.clone()));
            }
            self.benchmarks.insert(name.clone(), meta.clone());
        }
        for (ff, bench, counts) in other.records() {
            self.records.entry(ff).or_default().insert(bench.to_string(), *counts);
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, ProfileError> {
        let mut metas = Vec::new();
        let mut header_seen = false;
        let mut rows = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                let body = comment.trim();
                if body.starts_with("benchmark=") {
                    metas.push(BenchmarkMeta::parse_line(body, line_no)?);
                }
                continue;
            }
            if !header_seen {
                if line.replace(' ', "") == PROFILE_HEADER {
                    header_seen = true;
                    continue;
                }
                return Err(ProfileError::MissingHeader);
            }
            rows.push((line_no, line));
        }
        if !header_seen {
            return Err(ProfileError::MissingHeader);
        }
        let mut profile = VulnerabilityProfile::new(metas)?;
        for (line_no, line) in rows {
            let err = |msg: String| ProfileError::Parse { line: line_no, msg };
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 8 {
                return Err(err(format!("expected 8 fields, got {}", f.len())));
            }
            let ff = f[0].parse::<FfId>().map_err(|e| err(format!("bad ff_id: {e}")))?;
            let mut nums = [0u64; 6];
            for (k, slot) in nums.iter_mut().enumerate() {
                *slot = f[k + 2]
                    .parse::<u64>()
                    .map_err(|e| err(format!("bad count `{}`: {e}", f[k + 2])))?;
            }
            let counts = OutcomeCounts {
                vanished: nums[0],
                omm: nums[1],
                ut: nums[2],
                hang: nums[3],
                ed: nums[4],
            };
            if counts.total() != nums[5] {
                return Err(ProfileError::TotalMismatch {
                    ff,
                    benchmark: f[1].to_string(),
                    sum: counts.total(),
                    total: nums[5],
                });
            }
            profile.insert(ff, f[1], counts)?;
        }
        Ok(profile)
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for meta in self.benchmarks.values() {
            out.push_str(&meta.to_line());
            out.push('\n');
        }
        out.push_str(PROFILE_HEADER);
        out.push('\n');
        for (ff, bench, c) in self.records() {
            out.push_str(&format!(
                "{ff},{bench},{},{},{},{},{},{}\n",
                c.vanished,
                c.omm,
                c.ut,
                c.hang,
                c.ed,
                c.total()
            ));
        }
        out
    }
}

/// Fractions of flip-flops with at least one SDC-/DUE-causing error over all benchmarks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileStats {
    pub sdc: f64,
    pub due: f64,
    pub either: f64,
    pub both: f64,
    pub always_vanish: f64,
}

pub fn profile_stats(profile: &VulnerabilityProfile) -> Result<ProfileStats, ProfileError> {
    let n = profile.ff_count();
    if n == 0 {
        return Err(ProfileError::Empty);
    }
    let (mut sdc, mut due, mut either, mut both) = (0usize, 0usize, 0usize, 0usize);
    for ff in profile.ff_ids() {
        let t = profile.ff_total(ff);
        let s = t.sdc() > 0;
        let d = t.due() > 0;
        sdc += s as usize;
        due += d as usize;
        either += (s || d) as usize;
        both += (s && d) as usize;
    }
    let frac = |k: usize| k as f64 / n as f64;
    Ok(ProfileStats {
        sdc: frac(sdc),
        due: frac(due),
        either: frac(either),
        both: frac(both),
        always_vanish: frac(n - either),
    })
}

impl FromStr for VulnerabilityProfile {
    type Err = ProfileError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VulnerabilityProfile::parse(s)
    }
}
