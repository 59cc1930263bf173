use crate::design::{Design, FlipFlop};
use crate::library::{ErrorKind, RecoveryId, TechniqueId, TechniqueLibrary};
use crate::parity::{MAX_PIPELINED, MAX_UNPIPELINED, per_ff_units};
use crate::profile::VulnerabilityProfile;

use super::predict::{Model, cost_terms, evaluate_with, ff_units};
use super::{AbftMode, Assignment, CostReport, ExpectedCounts, SelectError, Target, gamma, improvement};

/// What to select: improvement goals, the circuit/logic techniques that may be
/// placed on flip-flops, and a base assignment carrying the recovery mechanism
/// and any layered techniques.
#[derive(Debug, Clone)]
pub struct SelectRequest {
    pub sdc: Option<Target>,
    pub due: Option<Target>,
    pub techniques: Vec<TechniqueId>,
    pub base: Assignment,
}

impl SelectRequest {
    pub fn new(sdc: Option<Target>, due: Option<Target>, techniques: &[TechniqueId], recovery: RecoveryId) -> Self {
        SelectRequest { sdc, due, techniques: techniques.to_vec(), base: Assignment::new(recovery) }
    }

    fn goals(&self) -> Vec<(ErrorKind, Target)> {
        let mut g = Vec::new();
        if let Some(t) = self.sdc {
            g.push((ErrorKind::Sdc, t));
        }
        if let Some(t) = self.due {
            g.push((ErrorKind::Due, t));
        }
        g
    }
}

/// A target the library cannot reach, with the best improvement available.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shortfall {
    pub kind: ErrorKind,
    pub target: Target,
    pub max_achievable: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub assignment: Assignment,
    pub report: CostReport,
    pub shortfalls: Vec<Shortfall>,
}

impl Selection {
    pub fn feasible(&self) -> bool {
        self.shortfalls.is_empty()
    }
}

/// Per-flip-flop technique choice among `allowed`. Under flush/RoB recovery a
/// flip-flop past the recovery boundary is hardened with LEAP-DICE whenever
/// detection is on offer; otherwise parity goes where an unpipelined 32-input
/// tree fits in the slack, then a hardened flip-flop, then EDS, then pipelined
/// parity. `allow_detect = false` rules out detection (no recovery for a DUE
/// goal).
pub fn choose_technique(
    ff: &FlipFlop,
    design: &Design,
    recovery: RecoveryId,
    allowed: &[TechniqueId],
    allow_detect: bool,
) -> Option<TechniqueId> {
    use TechniqueId::*;
    let has = |t| allowed.contains(&t);
    let detect_offered = has(Eds) || has(Parity);
    if detect_offered
        && matches!(recovery, RecoveryId::Flush | RecoveryId::Rob)
        && design.beyond_recovery_boundary(ff.stage)
    {
        return Some(LeapDice);
    }
    if allow_detect && has(Parity) && ff.slack_ps > design.xor_tree_delay_ps(MAX_UNPIPELINED) {
        return Some(Parity);
    }
    for t in [LeapDice, LeapCtrl, Lhl] {
        if has(t) {
            return Some(t);
        }
    }
    if allow_detect && has(Eds) {
        return Some(Eds);
    }
    if allow_detect && has(Parity) {
        return Some(Parity);
    }
    None
}

struct Progress {
    taken: Vec<bool>,
    order: Vec<usize>,
    after: ExpectedCounts,
    any_detect: bool,
}

impl Progress {
    fn take(&mut self, k: usize, candidates: &[Candidate], lib: &TechniqueLibrary) -> Result<(), SelectError> {
        self.taken[k] = true;
        self.order.push(k);
        self.after.sub(&candidates[k].before);
        self.after.add(&candidates[k].after);
        self.any_detect |= lib.technique(candidates[k].tech)?.detects();
        Ok(())
    }
}

struct Candidate {
    index: usize,
    tech: TechniqueId,
    /// Σ over benchmarks of counts before / after the technique.
    before: ExpectedCounts,
    after: ExpectedCounts,
    energy: f64,
}

impl Candidate {
    fn benefit(&self, kind: ErrorKind) -> f64 {
        match kind {
            ErrorKind::Sdc => self.before.sdc() - self.after.sdc(),
            ErrorKind::Due => self.before.due() - self.after.due(),
        }
    }
}

/// Greedy selective protection: flip-flops are ranked by the errors a
/// technique removes per unit of added energy and protected in that order
/// until the goal is met. With two goals the SDC goal is met first, then the
/// remaining flip-flops are ranked for DUE. A `max` goal protects every
/// flip-flop. Unreachable goals come back as shortfalls naming the best
/// improvement the allowed techniques achieve.
pub fn select_to_target(
    design: &Design,
    profile: &VulnerabilityProfile,
    lib: &TechniqueLibrary,
    req: &SelectRequest,
) -> Result<Selection, SelectError> {
    let goals = req.goals();
    if goals.is_empty() {
        return Err(SelectError::NoTarget);
    }
    let core = design.core_kind();
    for &t in &req.techniques {
        if !t.is_low_level() {
            return Err(SelectError::NotLowLevel(t));
        }
        lib.technique(t)?.core(core)?;
    }
    let model = Model::new(design, profile, lib)?;
    let base = &req.base;
    let rec = lib.recovery(base.recovery, core)?;
    let baseline = model.baseline();
    for &(kind, _) in &goals {
        improvement(&baseline, &baseline, 1.0, kind)?;
    }

    let allow_detect = !(req.due.is_some() && base.recovery == RecoveryId::None);
    let abft_correction = base.abft_mode() == Some(AbftMode::Correction);
    let shares = lib.shares(core)?;
    let n = design.len().max(1) as f64;
    let unpiped = per_ff_units(MAX_UNPIPELINED, false, lib).1;
    let piped = per_ff_units(MAX_PIPELINED, true, lib).1;

    let mut after = ExpectedCounts::default();
    let mut candidates = Vec::new();
    for (i, ff) in model.ffs.iter().enumerate() {
        let mut layered = Vec::with_capacity(model.benches.len());
        let mut before = ExpectedCounts::default();
        for j in 0..model.benches.len() {
            let c = model.layered(base, rec, i, j)?;
            before.add(&c);
            layered.push(c);
        }
        after.add(&before);
        let Some(mut tech) = choose_technique(ff, design, base.recovery, &req.techniques, allow_detect) else {
            continue;
        };
        if tech == TechniqueId::LeapDice
            && abft_correction
            && base.layer(TechniqueId::AbftCorrection).is_some_and(|l| l.coverage.covers_anywhere(ff.id))
            && lib.technique(TechniqueId::LeapCtrl)?.applies_to(core)
        {
            tech = TechniqueId::LeapCtrl;
        }
        let mut protected = ExpectedCounts::default();
        for (j, c) in layered.into_iter().enumerate() {
            protected.add(&model.low_level(base, rec, i, j, tech, c)?);
        }
        let power_units = if tech == TechniqueId::Parity {
            if ff.slack_ps > design.xor_tree_delay_ps(MAX_UNPIPELINED) { unpiped } else { piped }
        } else {
            ff_units(lib, design, tech, base.leap_ctrl_duty)?.1
        };
        candidates.push(Candidate {
            index: i,
            tech,
            before,
            after: protected,
            energy: power_units * shares.ff_power_share / n,
        });
    }

    let (_, _, exec0, ff_inc0) = cost_terms(design, lib, base)?;
    let gamma_base = gamma(ff_inc0, exec0);
    let gamma_detect = match (rec, super::predict::recovery_used(lib, base)?) {
        (Some(r), false) => gamma(ff_inc0 + r.ff_increase, exec0),
        _ => gamma_base,
    };

    let mut st = Progress { taken: vec![false; candidates.len()], order: Vec::new(), after, any_detect: false };

    let wants_all = goals.iter().any(|&(_, t)| t == Target::Max);
    let mut rankings: Vec<Vec<usize>> = Vec::new();
    let mut estimated_met = vec![true; goals.len()];
    if wants_all {
        let all: Vec<usize> = (0..candidates.len()).collect();
        for &k in &all {
            st.take(k, &candidates, lib)?;
        }
        rankings.push(all);
    } else {
        for (gi, &(kind, target)) in goals.iter().enumerate() {
            let mut rank: Vec<usize> = (0..candidates.len()).filter(|&k| !st.taken[k]).collect();
            rank.sort_by(|&a, &b| {
                let ra = candidates[a].benefit(kind) / candidates[a].energy;
                let rb = candidates[b].benefit(kind) / candidates[b].energy;
                rb.total_cmp(&ra).then(candidates[a].index.cmp(&candidates[b].index))
            });
            let estimate = |st: &Progress| {
                let g = if st.any_detect { gamma_detect } else { gamma_base };
                improvement(&baseline, &st.after, g, kind)
            };
            for &k in &rank {
                if target.is_met_by(estimate(&st)?) {
                    break;
                }
                st.take(k, &candidates, lib)?;
            }
            estimated_met[gi] = target.is_met_by(estimate(&st)?);
            rankings.push(rank);
        }
    }
    let Progress { mut taken, order: mut order_taken, .. } = st;

    let build = |ks: &[usize]| {
        let mut a = base.clone();
        for &k in ks {
            a.per_ff.insert(model.ffs[candidates[k].index].id, candidates[k].tech);
        }
        a
    };
    let mut assignment = build(&order_taken);
    let (mut report, _) = evaluate_with(&model, &assignment)?;

    // Incremental sums can round differently from a full re-prediction; top up
    // along the same rankings until the re-predicted goals hold.
    if !wants_all {
        for ((&(kind, target), rank), _) in goals.iter().zip(&rankings).zip(&estimated_met).filter(|(_, m)| **m) {
            for &k in rank {
                if target.is_met_by(report.improvement(kind)) {
                    break;
                }
                if taken[k] {
                    continue;
                }
                taken[k] = true;
                order_taken.push(k);
                assignment = build(&order_taken);
                report = evaluate_with(&model, &assignment)?.0;
            }
        }
    }

    let abft_detection = base.abft_mode() == Some(AbftMode::Detection);
    let mut shortfalls = Vec::new();
    let mut full: Option<CostReport> = None;
    for &(kind, target) in &goals {
        let missed = match target {
            Target::Factor(t) => report.improvement(kind) < t,
            Target::Max => candidates.is_empty() && !req.techniques.is_empty(),
        };
        if missed || (abft_detection && kind == ErrorKind::Due) {
            if full.is_none() {
                let all: Vec<usize> = (0..candidates.len()).collect();
                full = Some(if wants_all { report } else { evaluate_with(&model, &build(&all))?.0 });
            }
            let max_achievable = full.as_ref().expect("computed").improvement(kind);
            shortfalls.push(Shortfall { kind, target, max_achievable });
        }
    }
    Ok(Selection { assignment, report, shortfalls })
}

/// Gives every unprotected flip-flop an LHL flip-flop.
pub fn lhl_fallback(
    assignment: &Assignment,
    design: &Design,
    lib: &TechniqueLibrary,
) -> Result<Assignment, SelectError> {
    lib.technique(TechniqueId::Lhl)?.core(design.core_kind())?;
    let mut out = assignment.clone();
    for ff in design.flip_flops() {
        out.per_ff.entry(ff.id).or_insert(TechniqueId::Lhl);
    }
    Ok(out)
}
