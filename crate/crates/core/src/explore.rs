//! Enumeration and evaluation of cross-layer technique combinations, with
//! Pareto frontiers over (energy, improvement).

use std::collections::BTreeSet;
use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::design::{CoreKind, Design, FfId};
use crate::library::{ErrorKind, RecoveryId, TechniqueId, TechniqueLibrary};
use crate::profile::VulnerabilityProfile;
use crate::select::{
    AbftMode, Assignment, CostReport, SelectError, SelectRequest, Target, draw_coverage, evaluate, fmt_improvement,
    layer_abft, layer_technique, select_to_target,
};

#[derive(Debug, Error)]
pub enum ExploreError {
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error("combination {combo} does not apply to the {core} core")]
    WrongCore { combo: String, core: CoreKind },
    #[error("no points to build a frontier from")]
    Empty,
}

/// A set of techniques with a recovery mechanism and optional ABFT.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Combination {
    pub core: CoreKind,
    pub techniques: BTreeSet<TechniqueId>,
    pub recovery: RecoveryId,
    pub abft: Option<AbftMode>,
}

impl Combination {
    pub fn low_level(&self) -> Vec<TechniqueId> {
        self.techniques.iter().copied().filter(|t| t.is_low_level()).collect()
    }

    pub fn layered(&self) -> Vec<TechniqueId> {
        self.techniques.iter().copied().filter(|t| !t.is_low_level()).collect()
    }

    /// `+`-joined technique names, ABFT first.
    pub fn name(&self) -> String {
        let mut parts: Vec<&str> = self.abft.iter().map(|m| m.technique().as_str()).collect();
        parts.extend(self.techniques.iter().map(|t| t.as_str()));
        parts.join("+")
    }
}

impl fmt::Display for Combination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.name(), self.recovery)
    }
}

fn subsets(items: &[TechniqueId]) -> Vec<BTreeSet<TechniqueId>> {
    (1u32..1 << items.len())
        .map(|mask| items.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, t)| *t).collect())
        .collect()
}

/// Rows of the combination table for one core: (label, combinations).
pub fn enumerate_rows(core: CoreKind) -> Vec<(&'static str, Vec<Combination>)> {
    use TechniqueId::*;
    let (free, bounded, bounded_rec, replay): (&[TechniqueId], &[TechniqueId], RecoveryId, &[TechniqueId]) = match core
    {
        CoreKind::InO => (
            &[LeapDice, Eds, Parity, Dfc, Assertions, Cfcss, Eddi],
            &[Eds, Parity],
            RecoveryId::Flush,
            &[Eds, Parity, Dfc],
        ),
        CoreKind::OoO => {
            (&[LeapDice, Eds, Parity, Dfc, Monitor], &[Eds, Parity, Monitor], RecoveryId::Rob, &[Eds, Parity, Dfc, Monitor])
        }
    };
    let combo = |techniques: BTreeSet<TechniqueId>, recovery, abft| Combination { core, techniques, recovery, abft };
    let none: Vec<Combination> = subsets(free).into_iter().map(|s| combo(s, RecoveryId::None, None)).collect();
    let bounded: Vec<Combination> = subsets(bounded).into_iter().map(|s| combo(s, bounded_rec, None)).collect();
    let replay: Vec<Combination> = [RecoveryId::Ir, RecoveryId::Eir]
        .into_iter()
        .flat_map(|r| subsets(replay).into_iter().map(move |s| (s, r)))
        .map(|(s, r)| combo(s, r, None))
        .collect();
    let alone = vec![
        combo(BTreeSet::new(), RecoveryId::None, Some(AbftMode::Correction)),
        combo(BTreeSet::new(), RecoveryId::None, Some(AbftMode::Detection)),
    ];
    let with = |mode, cs: &[&Vec<Combination>]| -> Vec<Combination> {
        cs.iter().flat_map(|v| v.iter()).map(|c| Combination { abft: Some(mode), ..c.clone() }).collect()
    };
    let corr = with(AbftMode::Correction, &[&none, &bounded, &replay]);
    let det = with(AbftMode::Detection, &[&none]);
    vec![
        ("no recovery", none),
        ("bounded-latency recovery", bounded),
        ("instruction replay recovery", replay),
        ("ABFT alone", alone),
        ("ABFT correction +", corr),
        ("ABFT detection +", det),
    ]
}

/// Every valid combination for `core`, in table order.
pub fn enumerate_combinations(core: CoreKind) -> Vec<Combination> {
    enumerate_rows(core).into_iter().flat_map(|(_, v)| v).collect()
}

/// One combination evaluated at one improvement goal.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatedPoint {
    pub combination: Combination,
    pub kind: ErrorKind,
    pub target: Target,
    pub report: CostReport,
    pub feasible: bool,
    /// Best improvement the combination reaches when the goal is missed.
    pub max_achievable: Option<f64>,
}

impl EvaluatedPoint {
    pub const CSV_HEADER: &'static str =
        "combination,recovery,target,area_pct,power_pct,energy_pct,exec_pct,gamma,sdc_x,due_x,feasible";

    pub fn improvement(&self) -> f64 {
        self.report.improvement(self.kind)
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{}:{},{},{}",
            self.combination.name(),
            self.combination.recovery,
            self.kind,
            self.target,
            self.report.csv_fields(),
            self.feasible
        )
    }
}

/// The base assignment for a combination: recovery plus layered techniques
/// with seeded coverage draws.
pub fn combination_base(
    combo: &Combination,
    design: &Design,
    profile: &VulnerabilityProfile,
    lib: &TechniqueLibrary,
    seed: u64,
) -> Result<Assignment, ExploreError> {
    let core = design.core_kind();
    if combo.core != core {
        return Err(ExploreError::WrongCore { combo: combo.to_string(), core });
    }
    let ffs: Vec<FfId> = design.flip_flops().iter().map(|f| f.id).collect();
    let mut a = Assignment::new(combo.recovery);
    for t in combo.layered() {
        let cov = draw_coverage(lib, t, core, &ffs, seed)?;
        a = layer_technique(&a, lib, core, t, cov)?;
    }
    if let Some(mode) = combo.abft {
        let cov = draw_coverage(lib, mode.technique(), core, &ffs, seed)?;
        a = layer_abft(&a, lib, core, cov, mode, &profile.benchmark_names())?;
    }
    Ok(a)
}

/// Layers the combination's high-level techniques, then runs the selector
/// restricted to its circuit/logic techniques for every (kind, target).
/// Combinations without circuit/logic techniques are evaluated as layered.
pub fn evaluate_combination(
    combo: &Combination,
    design: &Design,
    profile: &VulnerabilityProfile,
    lib: &TechniqueLibrary,
    goals: &[(ErrorKind, Target)],
    seed: u64,
) -> Result<Vec<EvaluatedPoint>, ExploreError> {
    let base = combination_base(combo, design, profile, lib, seed)?;
    let techniques = combo.low_level();
    let fixed = if techniques.is_empty() { Some(evaluate(design, profile, lib, &base)?.0) } else { None };
    goals
        .iter()
        .map(|&(kind, target)| {
            let (report, shortfall) = match fixed {
                Some(report) => {
                    let x = report.improvement(kind);
                    let abft_due = combo.abft == Some(AbftMode::Detection) && kind == ErrorKind::Due;
                    let met = target.is_met_by(x) || target == Target::Max;
                    (report, if met && !abft_due { None } else { Some(x) })
                }
                None => {
                    let mut req = match kind {
                        ErrorKind::Sdc => SelectRequest::new(Some(target), None, &techniques, combo.recovery),
                        ErrorKind::Due => SelectRequest::new(None, Some(target), &techniques, combo.recovery),
                    };
                    req.base = base.clone();
                    let s = select_to_target(design, profile, lib, &req)?;
                    (s.report, s.shortfalls.first().map(|f| f.max_achievable))
                }
            };
            Ok(EvaluatedPoint {
                combination: combo.clone(),
                kind,
                target,
                report,
                feasible: shortfall.is_none(),
                max_achievable: shortfall,
            })
        })
        .collect()
}

/// Evaluates every combination (in parallel) and returns points in
/// combination order, goals in the given order within each.
pub fn explore(
    combos: &[Combination],
    design: &Design,
    profile: &VulnerabilityProfile,
    lib: &TechniqueLibrary,
    goals: &[(ErrorKind, Target)],
    seed: u64,
) -> Result<Vec<EvaluatedPoint>, ExploreError> {
    let per: Vec<Vec<EvaluatedPoint>> = combos
        .par_iter()
        .map(|c| evaluate_combination(c, design, profile, lib, goals, seed))
        .collect::<Result<_, _>>()?;
    Ok(per.into_iter().flatten().collect())
}

/// The default sweep: every grid target, for SDC then DUE.
pub fn default_goals() -> Vec<(ErrorKind, Target)> {
    [ErrorKind::Sdc, ErrorKind::Due]
        .into_iter()
        .flat_map(|k| Target::GRID.into_iter().map(move |t| (k, t)))
        .collect()
}

fn dominates(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 <= b.0 && a.1 >= b.1 && (a.0 < b.0 || a.1 > b.1)
}

/// Indices of the non-dominated `(energy, improvement)` points (lower energy
/// and higher improvement are better), sorted by improvement then energy.
/// Exact duplicates are all kept.
pub fn pareto_frontier(points: &[(f64, f64)]) -> Result<Vec<usize>, ExploreError> {
    if points.is_empty() {
        return Err(ExploreError::Empty);
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    // Energy ascending, improvement descending: a point is on the frontier iff
    // its improvement beats everything cheaper.
    order.sort_by(|&a, &b| {
        points[a].0.total_cmp(&points[b].0).then(points[b].1.total_cmp(&points[a].1)).then(a.cmp(&b))
    });
    let mut out = Vec::new();
    let mut best: Option<(f64, f64)> = None;
    for i in order {
        let p = points[i];
        match best {
            Some(b) if dominates(b, p) => continue,
            Some(b) if b == p => out.push(i),
            _ => {
                out.push(i);
                best = Some(p);
            }
        }
    }
    out.sort_by(|&a, &b| {
        points[a].1.total_cmp(&points[b].1).then(points[a].0.total_cmp(&points[b].0)).then(a.cmp(&b))
    });
    Ok(out)
}

/// Step curve `(improvement, minimum energy)`: reaching at least the step's
/// improvement costs at least its energy.
pub fn bound_region(frontier: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut steps: Vec<(f64, f64)> = Vec::with_capacity(frontier.len());
    for &(e, x) in frontier {
        match steps.last_mut() {
            Some(last) if last.0 == x => last.1 = last.1.min(e),
            _ => steps.push((x, e)),
        }
    }
    steps
}

/// Minimum energy on the step curve for reaching improvement `x`, if any step does.
pub fn bound_at(steps: &[(f64, f64)], x: f64) -> Option<f64> {
    steps.iter().find(|s| s.0 >= x).map(|s| s.1)
}

/// Frontier of the feasible points of `kind`.
pub fn frontier_of(points: &[EvaluatedPoint], kind: ErrorKind) -> Vec<&EvaluatedPoint> {
    let pts: Vec<&EvaluatedPoint> = points.iter().filter(|p| p.kind == kind && p.feasible).collect();
    let xy: Vec<(f64, f64)> = pts.iter().map(|p| (p.report.energy, p.improvement())).collect();
    match pareto_frontier(&xy) {
        Ok(idx) => idx.into_iter().map(|i| pts[i]).collect(),
        Err(_) => Vec::new(),
    }
}

/// Two-column plot data `improvement energy_pct`, one step per line.
pub fn plot_data(steps: &[(f64, f64)]) -> String {
    let mut out = String::from("# improvement energy_pct\n");
    for (x, e) in steps {
        let x = if x.is_infinite() { "inf".to_string() } else { fmt_improvement(*x) };
        out.push_str(&format!("{x} {:.4}\n", e * 100.0));
    }
    out
}
