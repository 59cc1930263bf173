//! Golden runs, single injections, and parallel injection campaigns.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::design::{Design, FfId, Stage};
use crate::profile::{BenchmarkMeta, OutcomeClass, OutcomeCounts, VulnerabilityProfile};

use super::isa::NUM_REGS;
use super::machine::{Machine, StepEvent, LATCHES};
use super::{ToyError, ToyProgram};

pub const GOLDEN_CYCLE_CEILING: u64 = 5_000_000;
pub const DEFAULT_MAX_INJECTIONS: u64 = 20_000_000;
const CHECKPOINT_INTERVAL: u64 = 128;

/// Detectors that can be armed during simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DetectionHook {
    /// Stores to the detect port by the checksum-protected benchmark.
    Abft,
}

impl DetectionHook {
    pub fn as_str(self) -> &'static str {
        match self {
            DetectionHook::Abft => "abft",
        }
    }
}

impl fmt::Display for DetectionHook {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DetectionHook {
    type Err = ToyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "abft" => Ok(DetectionHook::Abft),
            _ => Err(ToyError::InvalidConfig(format!("unknown detection hook `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Latch(usize),
    Reg(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Element {
    pub name: String,
    pub width: u32,
    pub stage: Stage,
    /// Global index of bit 0.
    pub offset: usize,
    slot: Slot,
}

/// Enumeration of every injectable state bit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateMap {
    elements: Vec<Element>,
    total_bits: usize,
}

impl StateMap {
    /// Pipeline latches, plus r1..r15 when `include_regfile` is set (r0 is hardwired).
    pub fn new(include_regfile: bool) -> Self {
        let mut elements = Vec::new();
        let mut offset = 0;
        for (i, spec) in LATCHES.iter().enumerate() {
            elements.push(Element {
                name: spec.name.to_string(),
                width: spec.width,
                stage: spec.stage,
                offset,
                slot: Slot::Latch(i),
            });
            offset += spec.width as usize;
        }
        if include_regfile {
            for r in 1..NUM_REGS {
                elements.push(Element {
                    name: format!("regfile.r{r}"),
                    width: 32,
                    stage: Stage::Writeback,
                    offset,
                    slot: Slot::Reg(r),
                });
                offset += 32;
            }
        }
        StateMap { elements, total_bits: offset }
    }

    pub fn total_bits(&self) -> usize {
        self.total_bits
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn find(&self, name: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.name == name)
    }

    pub fn bit_index(&self, name: &str, bit: u32) -> Option<usize> {
        self.find(name).filter(|e| bit < e.width).map(|e| e.offset + bit as usize)
    }

    pub fn locate(&self, bit: usize) -> Option<(&Element, u32)> {
        if bit >= self.total_bits {
            return None;
        }
        let idx = self.elements.partition_point(|e| e.offset <= bit) - 1;
        let e = &self.elements[idx];
        Some((e, (bit - e.offset) as u32))
    }

    fn flip(&self, m: &mut Machine, bit: usize) -> Result<(), ToyError> {
        let (e, b) = self
            .locate(bit)
            .ok_or_else(|| ToyError::BadInjectionPoint(format!("bit {bit} of {}", self.total_bits)))?;
        match e.slot {
            Slot::Latch(i) => m.flip_latch(i, b),
            Slot::Reg(r) => m.flip_reg(r, b),
        }
        Ok(())
    }

    /// Flip-flop id for each global bit: a design's flip-flops whose structure
    /// names an element, taken in ascending id order, are bits 0..width of it.
    pub fn ff_mapping(&self, design: &Design) -> Result<Vec<FfId>, ToyError> {
        let mut ids = Vec::with_capacity(self.total_bits);
        for e in &self.elements {
            let mut mine: Vec<FfId> = design
                .flip_flops()
                .iter()
                .filter(|f| f.structure == e.name)
                .map(|f| f.id)
                .collect();
            if mine.len() != e.width as usize {
                return Err(ToyError::DesignMismatch(format!(
                    "element `{}` has {} bits but the design has {} flip-flops for it",
                    e.name,
                    e.width,
                    mine.len()
                )));
            }
            mine.sort_unstable();
            ids.extend(mine);
        }
        Ok(ids)
    }
}

/// Reference execution with periodic checkpoints for fast-forwarding.
#[derive(Debug, Clone)]
pub struct Golden {
    program: ToyProgram,
    output: Vec<u32>,
    cycles: u64,
    detect_hook: bool,
    checkpoints: Vec<Machine>,
}

impl Golden {
    pub fn program(&self) -> &ToyProgram {
        &self.program
    }

    pub fn output(&self) -> &[u32] {
        &self.output
    }

    pub fn detect_hook(&self) -> bool {
        self.detect_hook
    }

    /// Number of cycles up to and including the one retiring `halt`.
    pub fn cycles(&self) -> u64 {
        self.cycles
    }

    /// Error-free machine state after `cycle` steps.
    pub fn machine_at(&self, cycle: u64) -> Machine {
        let cp = ((cycle / CHECKPOINT_INTERVAL) as usize).min(self.checkpoints.len() - 1);
        let mut m = self.checkpoints[cp].clone();
        while m.cycle() < cycle {
            m.step(&self.program);
        }
        m
    }
}

pub fn run_golden(program: &ToyProgram) -> Result<Golden, ToyError> {
    run_golden_with(program, false, GOLDEN_CYCLE_CEILING)
}

pub fn run_golden_with(
    program: &ToyProgram,
    detect_hook: bool,
    ceiling: u64,
) -> Result<Golden, ToyError> {
    let mut m = Machine::new(program, detect_hook);
    let mut checkpoints = vec![m.clone()];
    loop {
        if m.cycle() >= ceiling {
            return Err(ToyError::GoldenDoesNotTerminate { ceiling });
        }
        let ev = m.step(program);
        match ev {
            StepEvent::Running => {
                if m.cycle().is_multiple_of(CHECKPOINT_INTERVAL) {
                    checkpoints.push(m.clone());
                }
            }
            StepEvent::Halted => {
                return Ok(Golden {
                    program: program.clone(),
                    output: m.output().to_vec(),
                    cycles: m.cycle(),
                    detect_hook,
                    checkpoints,
                })
            }
            other => return Err(ToyError::GoldenAbnormal(format!("{other:?} at cycle {}", m.cycle()))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InjectionPoint {
    /// Global state-bit index.
    pub bit: usize,
    /// The bit is flipped after this many error-free cycles.
    pub cycle: u64,
}

impl InjectionPoint {
    /// Counter-based draw: depends only on `(seed, index)`.
    pub fn draw(seed: u64, index: u64, total_bits: usize, golden_cycles: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let bit = rng.gen_range(0..total_bits);
        let cycle = rng.gen_range(0..golden_cycles);
        InjectionPoint { bit, cycle }
    }
}

/// Run one injected execution to a terminal condition and classify it.
///
/// The error-free machine is stepped in lockstep; once pipeline, registers,
/// memory and output all match it again the error has been masked and the run
/// stops early as Vanished.
pub fn inject_one(
    golden: &Golden,
    map: &StateMap,
    point: InjectionPoint,
    hang_multiplier: f64,
) -> Result<OutcomeClass, ToyError> {
    if point.bit >= map.total_bits() {
        return Err(ToyError::BadInjectionPoint(format!(
            "bit {} of {}",
            point.bit,
            map.total_bits()
        )));
    }
    if point.cycle >= golden.cycles {
        return Ok(OutcomeClass::Vanished);
    }
    let limit = (hang_multiplier * golden.cycles as f64).ceil() as u64;
    let program = &golden.program;
    let mut reference = golden.machine_at(point.cycle);
    let mut m = reference.clone();
    map.flip(&mut m, point.bit)?;
    let mut reference_live = true;
    let mut mem_diff: Vec<u32> = Vec::new();
    loop {
        if m.cycle() >= limit {
            return Ok(OutcomeClass::Hang);
        }
        match m.step(program) {
            StepEvent::Running => {}
            StepEvent::Halted => {
                return Ok(if m.output() == golden.output.as_slice() {
                    OutcomeClass::Vanished
                } else {
                    OutcomeClass::Omm
                })
            }
            StepEvent::Trap(_) => return Ok(OutcomeClass::Ut),
            StepEvent::Detected => return Ok(OutcomeClass::Ed),
        }
        if !reference_live {
            continue;
        }
        if reference.step(program) != StepEvent::Running {
            reference_live = false;
            continue;
        }
        for addr in [m.last_store(), reference.last_store()].into_iter().flatten() {
            let differs = m.memory()[addr as usize] != reference.memory()[addr as usize];
            match (differs, mem_diff.iter().position(|&a| a == addr)) {
                (true, None) => mem_diff.push(addr),
                (false, Some(i)) => {
                    mem_diff.swap_remove(i);
                }
                _ => {}
            }
        }
        if mem_diff.is_empty() && m.core_state_eq(&reference) && m.output() == reference.output() {
            return Ok(OutcomeClass::Vanished);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignConfig {
    pub seed: u64,
    pub injections: u64,
    pub hang_multiplier: f64,
    pub hooks: BTreeSet<DetectionHook>,
    pub include_regfile: bool,
    /// Worker threads; 0 uses all available cores.
    pub workers: usize,
    pub max_injections: u64,
}

impl CampaignConfig {
    pub fn new(seed: u64, injections: u64) -> Self {
        CampaignConfig {
            seed,
            injections,
            hang_multiplier: 2.0,
            hooks: BTreeSet::new(),
            include_regfile: false,
            workers: 0,
            max_injections: DEFAULT_MAX_INJECTIONS,
        }
    }

    pub fn validate(&self) -> Result<(), ToyError> {
        if self.injections == 0 {
            return Err(ToyError::InvalidConfig("injection count must be at least 1".into()));
        }
        if self.injections > self.max_injections {
            return Err(ToyError::TooManyInjections {
                count: self.injections,
                ceiling: self.max_injections,
            });
        }
        if !self.hang_multiplier.is_finite() || self.hang_multiplier <= 1.0 {
            return Err(ToyError::InvalidConfig(format!(
                "hang multiplier must be a finite number > 1, got {}",
                self.hang_multiplier
            )));
        }
        Ok(())
    }
}

fn class_index(c: OutcomeClass) -> usize {
    OutcomeClass::ALL.iter().position(|&x| x == c).unwrap_or(0)
}

/// Per-bit outcome counts of a campaign, indexed by global bit.
pub fn campaign_counts(
    golden: &Golden,
    map: &StateMap,
    config: &CampaignConfig,
) -> Result<Vec<OutcomeCounts>, ToyError> {
    config.validate()?;
    let nbits = map.total_bits();
    let work = |acc: Result<Vec<[u64; 5]>, ToyError>, i: u64| {
        let mut acc = acc?;
        let point = InjectionPoint::draw(config.seed, i, nbits, golden.cycles);
        let class = inject_one(golden, map, point, config.hang_multiplier)?;
        acc[point.bit][class_index(class)] += 1;
        Ok(acc)
    };
    let merge = |a: Result<Vec<[u64; 5]>, ToyError>, b: Result<Vec<[u64; 5]>, ToyError>| {
        let (mut a, b) = (a?, b?);
        for (x, y) in a.iter_mut().zip(&b) {
            for k in 0..5 {
                x[k] += y[k];
            }
        }
        Ok(a)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| ToyError::InvalidConfig(format!("cannot start workers: {e}")))?;
    let raw = pool.install(|| {
        (0..config.injections)
            .into_par_iter()
            .fold(|| Ok(vec![[0u64; 5]; nbits]), work)
            .reduce(|| Ok(vec![[0u64; 5]; nbits]), merge)
    })?;
    Ok(raw
        .into_iter()
        .map(|c| OutcomeCounts { vanished: c[0], omm: c[1], ut: c[2], hang: c[3], ed: c[4] })
        .collect())
}

/// Inject `config.injections` single-bit errors, uniformly over
/// (state bit x golden cycle), and aggregate outcomes per flip-flop.
pub fn run_campaign(
    program: &ToyProgram,
    config: &CampaignConfig,
    design: &Design,
) -> Result<VulnerabilityProfile, ToyError> {
    config.validate()?;
    let map = StateMap::new(config.include_regfile);
    let ff_ids = map.ff_mapping(design)?;
    let hook = config.hooks.contains(&DetectionHook::Abft);
    let golden = run_golden_with(program, hook, GOLDEN_CYCLE_CEILING)?;
    let counts = campaign_counts(&golden, &map, config)?;
    let meta = BenchmarkMeta {
        name: program.name().to_string(),
        golden_cycles: golden.cycles,
        seed: Some(config.seed),
        injections: Some(config.injections),
        hang_multiplier: Some(config.hang_multiplier),
        detectors: config.hooks.iter().map(|h| h.as_str().to_string()).collect(),
    };
    let to_err = |e: crate::profile::ProfileError| ToyError::InvalidConfig(e.to_string());
    let mut profile = VulnerabilityProfile::new(vec![meta]).map_err(to_err)?;
    for (bit, c) in counts.into_iter().enumerate() {
        profile.insert(ff_ids[bit], program.name(), c).map_err(to_err)?;
    }
    Ok(profile)
}

/// Campaigns over several benchmarks with one configuration, merged into a
/// single profile.
pub fn run_campaigns(
    benchmarks: &[&str],
    config: &CampaignConfig,
    design: &Design,
) -> Result<VulnerabilityProfile, ToyError> {
    let mut merged: Option<VulnerabilityProfile> = None;
    for name in benchmarks {
        let p = run_campaign(&super::bench::by_name(name)?, config, design)?;
        match merged.as_mut() {
            None => merged = Some(p),
            Some(m) => m.merge(&p).map_err(|e| ToyError::InvalidConfig(e.to_string()))?,
        }
    }
    merged.ok_or_else(|| ToyError::InvalidConfig("no benchmarks given".into()))
}

#[cfg(test)]
mod tests {
    use super::super::asm::Asm;
    use super::super::bench;
    use super::super::layout::toy_design;
    use super::*;

    fn program(build: impl FnOnce(&mut Asm)) -> ToyProgram {
        let mut a = Asm::new();
        build(&mut a);
        a.assemble("t", vec![]).unwrap()
    }

    #[test]
    fn out_seven_halt() {
        let p = program(|a| {
            a.li(1, 7).out(1).halt();
        });
        let g = run_golden(&p).unwrap();
        assert_eq!(g.output(), &[7]);
        let again = run_golden(&p).unwrap();
        assert_eq!((g.output(), g.cycles()), (again.output(), again.cycles()));
    }

    #[test]
    fn golden_ceiling() {
        let p = program(|a| {
            a.label("l").jump("l").halt();
        });
        assert_eq!(
            run_golden_with(&p, false, 1000).unwrap_err(),
            ToyError::GoldenDoesNotTerminate { ceiling: 1000 }
        );
    }

    #[test]
    fn status_bits_always_vanish() {
        let p = bench::dot_product().unwrap();
        let g = run_golden(&p).unwrap();
        let map = StateMap::new(false);
        for name in ["status.flags", "status.retired"] {
            let e = map.find(name).unwrap();
            for bit in 0..e.width {
                for cycle in [0, g.cycles() / 2, g.cycles() - 1] {
                    let point = InjectionPoint { bit: e.offset + bit as usize, cycle };
                    assert_eq!(inject_one(&g, &map, point, 2.0).unwrap(), OutcomeClass::Vanished);
                }
            }
        }
    }

    #[test]
    fn draws_stay_in_range() {
        for i in 0..1000 {
            let p = InjectionPoint::draw(3, i, 274, 97);
            assert!(p.bit < 274 && p.cycle < 97);
        }
        assert_eq!(InjectionPoint::draw(3, 5, 274, 97), InjectionPoint::draw(3, 5, 274, 97));
    }

    #[test]
    fn config_validation() {
        let d = toy_design(false);
        let p = bench::dot_product().unwrap();
        let zero = CampaignConfig::new(1, 0);
        assert!(matches!(run_campaign(&p, &zero, &d), Err(ToyError::InvalidConfig(_))));
        let mut big = CampaignConfig::new(1, 100);
        big.max_injections = 10;
        assert_eq!(
            run_campaign(&p, &big, &d).unwrap_err(),
            ToyError::TooManyInjections { count: 100, ceiling: 10 }
        );
        let mut hang = CampaignConfig::new(1, 10);
        hang.hang_multiplier = 1.0;
        assert!(run_campaign(&p, &hang, &d).is_err());
    }

    #[test]
    fn single_injection_campaign() {
        let d = toy_design(false);
        let p = bench::dot_product().unwrap();
        let prof = run_campaign(&p, &CampaignConfig::new(9, 1), &d).unwrap();
        assert_eq!(prof.totals().total(), 1);
        assert_eq!(prof.ff_count(), 274);
    }

    #[test]
    fn campaign_matches_sequential_oracle() {
        let d = toy_design(false);
        let p = bench::checksum_sort().unwrap();
        let mut cfg = CampaignConfig::new(42, 2000);
        cfg.workers = 3;
        let prof = run_campaign(&p, &cfg, &d).unwrap();
        let g = run_golden(&p).unwrap();
        let map = StateMap::new(false);
        let mut expect = vec![OutcomeCounts::default(); map.total_bits()];
        for i in 0..cfg.injections {
            let pt = InjectionPoint::draw(cfg.seed, i, map.total_bits(), g.cycles());
            expect[pt.bit].record(inject_one(&g, &map, pt, cfg.hang_multiplier).unwrap());
        }
        for (bit, c) in expect.iter().enumerate() {
            assert_eq!(prof.counts(bit as u32, "checksum_sort"), Some(c));
        }
        assert_eq!(prof.totals().ed, 0);
    }

    #[test]
    fn regfile_flag_extends_the_target_set() {
        let d = toy_design(true);
        let p = bench::dot_product().unwrap();
        let mut cfg = CampaignConfig::new(4, 500);
        cfg.include_regfile = true;
        let prof = run_campaign(&p, &cfg, &d).unwrap();
        assert_eq!(prof.ff_count(), 274 + 15 * 32);
        assert!(run_campaign(&p, &cfg, &toy_design(false)).is_err());
    }
}
