use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::design::{CoreKind, FfId};
use crate::library::{ErrorKind, LibraryError, Mode, RecoveryId, TechniqueId, TechniqueLibrary};

use super::{Assignment, Layered, SelectError};

/// Flip-flops a checker watches, per error kind.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CoveredSet {
    pub sdc: BTreeSet<FfId>,
    pub due: BTreeSet<FfId>,
}

impl CoveredSet {
    pub fn contains(&self, ff: FfId, kind: ErrorKind) -> bool {
        match kind {
            ErrorKind::Sdc => self.sdc.contains(&ff),
            ErrorKind::Due => self.due.contains(&ff),
        }
    }

    pub fn any(&self) -> BTreeSet<FfId> {
        self.sdc.union(&self.due).copied().collect()
    }
}

/// Checker coverage, either uniform over benchmarks or only in the benchmarks
/// that run the protected algorithm.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CoverageMap {
    pub everywhere: Option<CoveredSet>,
    pub per_benchmark: BTreeMap<String, CoveredSet>,
}

impl CoverageMap {
    pub fn is_empty(&self) -> bool {
        let empty = |s: &CoveredSet| s.sdc.is_empty() && s.due.is_empty();
        self.everywhere.as_ref().is_none_or(empty) && self.per_benchmark.values().all(empty)
    }

    pub fn covers(&self, ff: FfId, benchmark: &str, kind: ErrorKind) -> bool {
        self.per_benchmark
            .get(benchmark)
            .or(self.everywhere.as_ref())
            .is_some_and(|s| s.contains(ff, kind))
    }

    /// Whether the checker runs at all in `benchmark`.
    pub fn active_in(&self, benchmark: &str) -> bool {
        self.everywhere.is_some() || self.per_benchmark.contains_key(benchmark)
    }

    pub fn covers_anywhere(&self, ff: FfId) -> bool {
        self.everywhere.iter().chain(self.per_benchmark.values()).any(|s| s.sdc.contains(&ff) || s.due.contains(&ff))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AbftMode {
    Correction,
    Detection,
}

impl AbftMode {
    pub fn technique(self) -> TechniqueId {
        match self {
            AbftMode::Correction => TechniqueId::AbftCorrection,
            AbftMode::Detection => TechniqueId::AbftDetection,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AbftMode::Correction => "correction",
            AbftMode::Detection => "detection",
        }
    }
}

fn sub_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

fn draw_set(ffs: &[FfId], sdc_fraction: f64, due_fraction: f64, seed: u64) -> CoveredSet {
    let mut order: Vec<FfId> = ffs.to_vec();
    order.sort_unstable();
    order.dedup();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let take = |f: f64| (f * order.len() as f64).round() as usize;
    CoveredSet {
        sdc: order[..take(sdc_fraction)].iter().copied().collect(),
        due: order[..take(due_fraction)].iter().copied().collect(),
    }
}

/// Seeded draw of which flip-flops a layered checker watches, sized by the
/// library's covered-flip-flop fractions. Benchmark-conditional techniques get
/// an independent draw per algorithm in `lib.abft_benchmarks`; both ABFT modes
/// share the same draws.
pub fn draw_coverage(
    lib: &TechniqueLibrary,
    tech: TechniqueId,
    core: CoreKind,
    ffs: &[FfId],
    seed: u64,
) -> Result<CoverageMap, SelectError> {
    let spec = lib.technique(tech)?;
    let cov = spec
        .coverage_on(core)
        .ok_or(SelectError::Library(LibraryError::Inapplicable { tech, core }))?;
    let mut map = CoverageMap::default();
    if spec.benchmark_conditional {
        for b in &lib.abft_benchmarks {
            let s = sub_seed(seed, &format!("abft/{b}"));
            map.per_benchmark.insert(b.clone(), draw_set(ffs, cov.ff_fraction_sdc, cov.ff_fraction_due, s));
        }
    } else {
        let s = sub_seed(seed, tech.as_str());
        map.everywhere = Some(draw_set(ffs, cov.ff_fraction_sdc, cov.ff_fraction_due, s));
    }
    Ok(map)
}

/// Adds a layered technique. Detect-only techniques must accept the
/// assignment's recovery (if any).
pub fn layer_technique(
    assignment: &Assignment,
    lib: &TechniqueLibrary,
    core: CoreKind,
    tech: TechniqueId,
    coverage: CoverageMap,
) -> Result<Assignment, SelectError> {
    if tech.is_low_level() {
        return Err(SelectError::NotHighLevel(tech));
    }
    let spec = lib.technique(tech)?;
    if !spec.applies_to(core) {
        return Err(LibraryError::Inapplicable { tech, core }.into());
    }
    if assignment.layer(tech).is_some() {
        return Err(SelectError::DuplicateLayer(tech));
    }
    if tech.is_abft() && assignment.abft_mode().is_some() {
        return Err(SelectError::AbftExclusive);
    }
    if assignment.recovery != RecoveryId::None
        && spec.mode == Mode::Detect
        && !spec.allowed_recoveries.contains(&assignment.recovery)
    {
        return Err(SelectError::RecoveryPairing { tech, recovery: assignment.recovery });
    }
    let mut out = assignment.clone();
    out.layered.push(Layered { id: tech, coverage });
    out.layered.sort_by_key(|l| (lib.technique(l.id).map(|s| s.layer.stack_order()).unwrap_or(0), l.id));
    Ok(out)
}

/// Layers ABFT correction or detection. In correction mode LEAP-ctrl flip-flops
/// switch to economy mode in the benchmarks of `benchmarks` that run an
/// ABFT-protected algorithm; the duty records that fraction for costing.
pub fn layer_abft(
    assignment: &Assignment,
    lib: &TechniqueLibrary,
    core: CoreKind,
    coverage: CoverageMap,
    mode: AbftMode,
    benchmarks: &[String],
) -> Result<Assignment, SelectError> {
    if assignment.abft_mode().is_some_and(|m| m != mode) {
        return Err(SelectError::AbftExclusive);
    }
    if coverage.is_empty() {
        return Ok(assignment.clone());
    }
    let mut out = layer_technique(assignment, lib, core, mode.technique(), coverage)?;
    if mode == AbftMode::Correction && !benchmarks.is_empty() {
        let layer = out.layer(TechniqueId::AbftCorrection).expect("just layered");
        let running = benchmarks.iter().filter(|b| layer.coverage.active_in(b)).count();
        out.leap_ctrl_duty = running as f64 / benchmarks.len() as f64;
    }
    Ok(out)
}

/// Union and intersection of the per-benchmark covered flip-flop sets, as
/// fractions of `ff_count`.
pub fn abft_coverage_stats(coverage: &CoverageMap, ff_count: usize) -> (f64, f64) {
    let sets: Vec<BTreeSet<FfId>> = coverage
        .per_benchmark
        .values()
        .chain(coverage.everywhere.iter())
        .map(CoveredSet::any)
        .collect();
    if sets.is_empty() || ff_count == 0 {
        return (0.0, 0.0);
    }
    let union: BTreeSet<FfId> = sets.iter().flatten().copied().collect();
    let inter = sets[0].iter().filter(|f| sets[1..].iter().all(|s| s.contains(f))).count();
    (union.len() as f64 / ff_count as f64, inter as f64 / ff_count as f64)
}
