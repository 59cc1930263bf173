//! Parity-group planning: grouping heuristics, minimum-spacing repair,
//! pipelined/unpipelined tree choice and cost estimation.
//!
//! Plan file format:
//!
//! ```text
//! # heuristic: optimized
//! group_id,pipelined,ff_ids
//! 0,false,3;17;42
//! # cost: area_units=33 power_units=17.05 area_pct=0.1 power_pct=0.2 energy_pct=0.2
//! ```

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::design::{Design, FfId, SpacingHistogram, nearest_neighbor_distances};
use crate::library::TechniqueLibrary;
use crate::profile::VulnerabilityProfile;

/// Members closer than this (in flip-flop lengths) can be hit by one strike.
pub const MIN_SPACING: f64 = 1.0;
pub const MAX_PIPELINED: usize = 16;
pub const MAX_UNPIPELINED: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParityError {
    #[error("no flip-flops to protect")]
    Empty,
    #[error("group size must be a power of two in 1..=32, got {0}")]
    BadGroupSize(usize),
    #[error("flip-flop {0} is not in the design")]
    UnknownFf(FfId),
    #[error("flip-flop {0} listed twice")]
    DuplicateFf(FfId),
    #[error("unknown heuristic `{0}`")]
    UnknownHeuristic(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Heuristic {
    /// Input (id) order.
    Size,
    /// Decreasing SDC+DUE count.
    Vulnerability,
    /// Clustered by placement.
    Locality,
    /// Decreasing slack.
    Timing,
    /// Slack-split pools of unpipelined 32-bit and pipelined 16-bit groups.
    Optimized,
}

impl Heuristic {
    pub const FIXED: [Heuristic; 4] =
        [Heuristic::Size, Heuristic::Vulnerability, Heuristic::Locality, Heuristic::Timing];

    pub fn as_str(self) -> &'static str {
        match self {
            Heuristic::Size => "size",
            Heuristic::Vulnerability => "vulnerability",
            Heuristic::Locality => "locality",
            Heuristic::Timing => "timing",
            Heuristic::Optimized => "optimized",
        }
    }
}

impl fmt::Display for Heuristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Heuristic {
    type Err = ParityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Heuristic::Optimized]
            .into_iter()
            .chain(Heuristic::FIXED)
            .find(|h| h.as_str() == s)
            .ok_or_else(|| ParityError::UnknownHeuristic(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParityGroup {
    /// Sorted ascending.
    pub members: Vec<FfId>,
    pub pipelined: bool,
}

impl ParityGroup {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Predictor (g-1) plus checker (g, including the compare) XOR gates.
    pub fn xor_count(&self) -> usize {
        (2 * self.len()).saturating_sub(1)
    }

    pub fn staging_registers(&self) -> usize {
        if self.pipelined {
            staging_registers(self.len())
        } else {
            0
        }
    }
}

/// Staging flip-flops of a pipelined tree over `g` inputs: both the predictor
/// and the checker tree get a register stage every two XOR levels (every level
/// for trees of at most two levels).
pub fn staging_registers(g: usize) -> usize {
    let levels = crate::design::xor_tree_levels(g);
    if levels <= 1 {
        return 0;
    }
    let step = if levels <= 2 { 1 } else { 2 };
    let per_tree: usize = (step..levels)
        .step_by(step as usize)
        .map(|j| g.div_ceil(1usize << j))
        .sum();
    2 * per_tree
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParityPlan {
    pub heuristic: Heuristic,
    pub groups: Vec<ParityGroup>,
}

/// Plan cost in flip-flop units and as fractions of the baseline core.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ParityCost {
    pub area_units: f64,
    pub power_units: f64,
    pub area: f64,
    pub power: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpacingReport {
    /// Same-group pairs closer than [`MIN_SPACING`], as `(a, b, distance)` with `a < b`.
    pub violations: Vec<(FfId, FfId, f64)>,
    /// Nearest same-group distance of every member of a group with ≥ 2 members.
    pub histogram: SpacingHistogram,
}

impl ParityPlan {
    pub fn member_count(&self) -> usize {
        self.groups.iter().map(ParityGroup::len).sum()
    }

    pub fn members(&self) -> impl Iterator<Item = FfId> + '_ {
        self.groups.iter().flat_map(|g| g.members.iter().copied())
    }

    pub fn to_file_string(&self, cost: &ParityCost) -> String {
        let mut out = format!("# heuristic: {}\ngroup_id,pipelined,ff_ids\n", self.heuristic);
        for (i, g) in self.groups.iter().enumerate() {
            let ids: Vec<String> = g.members.iter().map(u32::to_string).collect();
            out.push_str(&format!("{i},{},{}\n", g.pipelined, ids.join(";")));
        }
        out.push_str(&format!(
            "# cost: area_units={} power_units={} area_pct={:.4} power_pct={:.4} energy_pct={:.4}\n",
            cost.area_units,
            cost.power_units,
            cost.area * 100.0,
            cost.power * 100.0,
            cost.energy * 100.0
        ));
        out
    }

    /// Reads the group lines of a plan file; the cost footer is ignored.
    pub fn parse(text: &str) -> Result<Self, ParityError> {
        let mut heuristic = Heuristic::Optimized;
        let mut groups = Vec::new();
        let mut seen = HashMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.trim();
            if line.is_empty() || line == "group_id,pipelined,ff_ids" {
                continue;
            }
            if let Some(c) = line.strip_prefix('#') {
                if let Some(h) = c.trim().strip_prefix("heuristic:") {
                    heuristic = h.trim().parse()?;
                }
                continue;
            }
            let err = |msg: String| ParityError::Parse { line: line_no, msg };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(err(format!("expected 3 fields, got {}", fields.len())));
            }
            let pipelined = fields[1]
                .trim()
                .parse::<bool>()
                .map_err(|e| err(format!("bad pipelined flag: {e}")))?;
            let mut members = Vec::new();
            for id in fields[2].split(';').filter(|s| !s.trim().is_empty()) {
                let id = id.trim().parse::<FfId>().map_err(|e| err(format!("bad id `{id}`: {e}")))?;
                if seen.insert(id, line_no).is_some() {
                    return Err(ParityError::DuplicateFf(id));
                }
                members.push(id);
            }
            members.sort_unstable();
            groups.push(ParityGroup { members, pipelined });
        }
        Ok(ParityPlan { heuristic, groups })
    }
}

fn validate_subset(design: &Design, ffs: &[FfId]) -> Result<(), ParityError> {
    if ffs.is_empty() {
        return Err(ParityError::Empty);
    }
    let mut seen = std::collections::HashSet::with_capacity(ffs.len());
    for &id in ffs {
        if design.get(id).is_none() {
            return Err(ParityError::UnknownFf(id));
        }
        if !seen.insert(id) {
            return Err(ParityError::DuplicateFf(id));
        }
    }
    Ok(())
}

fn vulnerability(profile: Option<&VulnerabilityProfile>, id: FfId) -> u64 {
    profile.map_or(0, |p| {
        let t = p.ff_total(id);
        t.sdc() + t.due()
    })
}

/// Groups `ffs` into constant-size groups ordered by a fixed heuristic; the
/// last group holds the remainder. Groups whose slowest member cannot absorb
/// the tree delay are pipelined (and halved if larger than 16).
pub fn plan_parity(
    design: &Design,
    ffs: &[FfId],
    profile: Option<&VulnerabilityProfile>,
    heuristic: Heuristic,
    group_size: usize,
) -> Result<ParityPlan, ParityError> {
    if heuristic == Heuristic::Optimized {
        return optimized_plan(design, ffs);
    }
    if !group_size.is_power_of_two() || group_size > MAX_UNPIPELINED {
        return Err(ParityError::BadGroupSize(group_size));
    }
    validate_subset(design, ffs)?;
    let slack = |id: FfId| design.get(id).expect("validated").slack_ps;

    let mut order: Vec<FfId> = ffs.to_vec();
    match heuristic {
        Heuristic::Size => {}
        Heuristic::Vulnerability => {
            order.sort_by(|&a, &b| {
                vulnerability(profile, b).cmp(&vulnerability(profile, a)).then(a.cmp(&b))
            });
        }
        Heuristic::Timing => {
            order.sort_by(|&a, &b| slack(b).total_cmp(&slack(a)).then(a.cmp(&b)));
        }
        Heuristic::Locality => order = locality_order(design, &order, group_size),
        Heuristic::Optimized => unreachable!(),
    }

    let mut groups = Vec::new();
    for chunk in order.chunks(group_size) {
        let min_slack = chunk.iter().map(|&id| slack(id)).fold(f64::INFINITY, f64::min);
        let needs_pipeline = min_slack < design.xor_tree_delay_ps(chunk.len());
        if needs_pipeline && chunk.len() > MAX_PIPELINED {
            let halves = round_robin(chunk, chunk.len().div_ceil(MAX_PIPELINED));
            groups.extend(halves.into_iter().map(|m| Work { members: m, pipelined: true, cap: MAX_PIPELINED }));
        } else {
            let cap = if needs_pipeline { group_size.min(MAX_PIPELINED) } else { group_size };
            groups.push(Work { members: chunk.to_vec(), pipelined: needs_pipeline, cap });
        }
    }
    Ok(finish(design, heuristic, groups))
}

/// Flip-flops with enough slack for a 32-input tree go to unpipelined 32-bit
/// groups, the rest to pipelined 16-bit groups. Within each pool, id-adjacent
/// flip-flops are dealt round-robin so physical neighbours land apart.
pub fn optimized_plan(design: &Design, ffs: &[FfId]) -> Result<ParityPlan, ParityError> {
    validate_subset(design, ffs)?;
    let threshold = design.xor_tree_delay_ps(MAX_UNPIPELINED);
    let mut sorted = ffs.to_vec();
    sorted.sort_unstable();
    let (fast, slow): (Vec<FfId>, Vec<FfId>) =
        sorted.iter().partition(|&&id| design.get(id).expect("validated").slack_ps > threshold);

    let mut groups = Vec::new();
    for (pool, pipelined, cap) in [(fast, false, MAX_UNPIPELINED), (slow, true, MAX_PIPELINED)] {
        if pool.is_empty() {
            continue;
        }
        let k = pool.len().div_ceil(cap);
        groups.extend(round_robin(&pool, k).into_iter().map(|m| Work { members: m, pipelined, cap }));
    }
    Ok(finish(design, Heuristic::Optimized, groups))
}

fn round_robin(ids: &[FfId], k: usize) -> Vec<Vec<FfId>> {
    let mut out = vec![Vec::new(); k];
    for (i, &id) in ids.iter().enumerate() {
        out[i % k].push(id);
    }
    out
}

/// k-means (Lloyd) on placement with k = ceil(n / group size); clusters are
/// emitted in centroid order, members by id.
fn locality_order(design: &Design, ids: &[FfId], group_size: usize) -> Vec<FfId> {
    let pts: Vec<(f64, f64)> = ids
        .iter()
        .map(|&id| {
            let f = design.get(id).expect("validated");
            (f.x, f.y)
        })
        .collect();
    let n = ids.len();
    let k = n.div_ceil(group_size).max(1);
    let mut by_pos: Vec<usize> = (0..n).collect();
    by_pos.sort_by(|&a, &b| {
        pts[a].0.total_cmp(&pts[b].0).then(pts[a].1.total_cmp(&pts[b].1)).then(ids[a].cmp(&ids[b]))
    });
    let mut centroids: Vec<(f64, f64)> =
        (0..k).map(|c| pts[by_pos[((2 * c + 1) * n) / (2 * k)]]).collect();
    let mut assign = vec![0usize; n];
    for _ in 0..50 {
        let mut changed = false;
        for (i, p) in pts.iter().enumerate() {
            let mut best = (f64::INFINITY, 0);
            for (c, q) in centroids.iter().enumerate() {
                let d = (p.0 - q.0).hypot(p.1 - q.1);
                if d < best.0 {
                    best = (d, c);
                }
            }
            if assign[i] != best.1 {
                assign[i] = best.1;
                changed = true;
            }
        }
        let mut sums = vec![(0.0, 0.0, 0usize); k];
        for (i, p) in pts.iter().enumerate() {
            let s = &mut sums[assign[i]];
            s.0 += p.0;
            s.1 += p.1;
            s.2 += 1;
        }
        for (c, s) in sums.iter().enumerate() {
            if s.2 > 0 {
                centroids[c] = (s.0 / s.2 as f64, s.1 / s.2 as f64);
            }
        }
        if !changed {
            break;
        }
    }
    let mut clusters: Vec<usize> = (0..k).collect();
    clusters.sort_by(|&a, &b| {
        centroids[a]
            .0
            .total_cmp(&centroids[b].0)
            .then(centroids[a].1.total_cmp(&centroids[b].1))
            .then(a.cmp(&b))
    });
    let mut out = Vec::with_capacity(n);
    for c in clusters {
        let mut members: Vec<FfId> = (0..n).filter(|&i| assign[i] == c).map(|i| ids[i]).collect();
        members.sort_unstable();
        out.extend(members);
    }
    out
}

struct Work {
    members: Vec<FfId>,
    pipelined: bool,
    cap: usize,
}

fn finish(design: &Design, heuristic: Heuristic, mut groups: Vec<Work>) -> ParityPlan {
    repair_spacing(design, &mut groups);
    let groups = groups
        .into_iter()
        .filter(|g| !g.members.is_empty())
        .map(|mut g| {
            g.members.sort_unstable();
            let min_slack = g
                .members
                .iter()
                .map(|&id| design.get(id).expect("validated").slack_ps)
                .fold(f64::INFINITY, f64::min);
            let pipelined = g.pipelined && min_slack < design.xor_tree_delay_ps(g.members.len());
            ParityGroup { members: g.members, pipelined }
        })
        .collect();
    ParityPlan { heuristic, groups }
}

fn dist(design: &Design, a: FfId, b: FfId) -> f64 {
    design.get(a).expect("validated").distance(design.get(b).expect("validated"))
}

/// Whether `x` can join `members` (minus `without`) in a group with the given
/// pipelining and capacity.
fn fits(design: &Design, g: &Work, x: FfId, without: Option<FfId>) -> bool {
    let len_after = g.members.len() + 1 - usize::from(without.is_some());
    if len_after > g.cap {
        return false;
    }
    if !g.pipelined {
        let delay = design.xor_tree_delay_ps(len_after);
        let slack = |id: FfId| design.get(id).expect("validated").slack_ps;
        if slack(x) < delay || g.members.iter().any(|&m| Some(m) != without && slack(m) < delay) {
            return false;
        }
    }
    g.members
        .iter()
        .filter(|&&m| Some(m) != without && m != x)
        .all(|&m| dist(design, m, x) >= MIN_SPACING)
}

fn violations(design: &Design, groups: &[Work]) -> Vec<(f64, FfId, FfId, usize)> {
    let mut out = Vec::new();
    for (gi, g) in groups.iter().enumerate() {
        for (i, &a) in g.members.iter().enumerate() {
            for &b in &g.members[i + 1..] {
                let d = dist(design, a, b);
                if d < MIN_SPACING {
                    let (a, b) = if a < b { (a, b) } else { (b, a) };
                    out.push((d, a, b, gi));
                }
            }
        }
    }
    out.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    out
}

/// Greedy nearest-violation-first repair. The later member of the closest
/// violating pair is swapped with a compatible member of another group, else
/// moved into a group with room, else split off into a new group. Each step
/// strictly reduces the number of violating pairs.
fn repair_spacing(design: &Design, groups: &mut Vec<Work>) {
    loop {
        let v = violations(design, groups);
        let Some(&(_, _, mover, gi)) = v.first() else {
            return;
        };

        let mut done = false;
        'swap: for hi in 0..groups.len() {
            if hi == gi {
                continue;
            }
            let mut candidates = groups[hi].members.clone();
            candidates.sort_unstable();
            for c in candidates {
                if fits(design, &groups[gi], c, Some(mover)) && fits(design, &groups[hi], mover, Some(c)) {
                    let pos = groups[gi].members.iter().position(|&m| m == mover).expect("member");
                    groups[gi].members[pos] = c;
                    let pos = groups[hi].members.iter().position(|&m| m == c).expect("member");
                    groups[hi].members[pos] = mover;
                    done = true;
                    break 'swap;
                }
            }
        }
        if done {
            continue;
        }
        for hi in 0..groups.len() {
            if hi != gi && fits(design, &groups[hi], mover, None) {
                groups[gi].members.retain(|&m| m != mover);
                groups[hi].members.push(mover);
                done = true;
                break;
            }
        }
        if done {
            continue;
        }
        groups[gi].members.retain(|&m| m != mover);
        let cap = groups[gi].cap;
        groups.push(Work { members: vec![mover], pipelined: groups[gi].pipelined, cap });
    }
}

pub fn check_spacing(plan: &ParityPlan, design: &Design) -> Result<SpacingReport, ParityError> {
    let mut violations = Vec::new();
    let mut nearest = Vec::new();
    for g in &plan.groups {
        let mut pts = Vec::with_capacity(g.len());
        for &id in &g.members {
            let f = design.get(id).ok_or(ParityError::UnknownFf(id))?;
            pts.push((f.x, f.y));
        }
        for (i, &a) in g.members.iter().enumerate() {
            for (j, &b) in g.members.iter().enumerate().skip(i + 1) {
                let d = (pts[i].0 - pts[j].0).hypot(pts[i].1 - pts[j].1);
                if d < MIN_SPACING {
                    violations.push((a.min(b), a.max(b), d));
                }
            }
        }
        if pts.len() >= 2 {
            nearest.extend(nearest_neighbor_distances(&pts));
        }
    }
    violations.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.cmp(&y.1)));
    Ok(SpacingReport { violations, histogram: SpacingHistogram::from_distances(&nearest) })
}

/// Area/power of one group in flip-flop units.
pub fn group_units(group: &ParityGroup, lib: &TechniqueLibrary) -> (f64, f64) {
    if group.is_empty() {
        return (0.0, 0.0);
    }
    let p = &lib.parity;
    let xors = group.xor_count() as f64;
    let staging = group.staging_registers() as f64;
    (
        xors * p.xor_area + p.parity_ff_area + p.group_area + staging * p.staging_ff_area,
        xors * p.xor_power + p.parity_ff_power + p.group_power + staging * p.staging_ff_power,
    )
}

/// Plan cost normalized to the baseline design (all of `design`'s flip-flops
/// make up the core's flip-flop share).
pub fn parity_cost(
    plan: &ParityPlan,
    design: &Design,
    lib: &TechniqueLibrary,
) -> Result<ParityCost, crate::library::LibraryError> {
    let shares = lib.shares(design.core_kind())?;
    let (area_units, power_units) = plan
        .groups
        .iter()
        .map(|g| group_units(g, lib))
        .fold((0.0, 0.0), |acc, u| (acc.0 + u.0, acc.1 + u.1));
    let n = design.len().max(1) as f64;
    let area = area_units * shares.ff_area_share / n;
    let power = power_units * shares.ff_power_share / n;
    Ok(ParityCost { area_units, power_units, area, power, energy: power })
}

/// Per-flip-flop (area, power) units of a full group of `size` bits.
pub fn per_ff_units(size: usize, pipelined: bool, lib: &TechniqueLibrary) -> (f64, f64) {
    let g = ParityGroup { members: (0..size as FfId).collect(), pipelined };
    let (a, p) = group_units(&g, lib);
    (a / size as f64, p / size as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{CoreKind, FlipFlop, Stage};
    use proptest::prelude::*;

    fn grid(n: usize, pitch: f64, slack: impl Fn(usize) -> f64) -> Design {
        let ffs = (0..n)
            .map(|i| FlipFlop {
                id: i as FfId,
                structure: "s".into(),
                stage: Stage::Execute,
                x: (i % 20) as f64 * pitch,
                y: (i / 20) as f64 * pitch,
                slack_ps: slack(i),
            })
            .collect();
        Design::new(CoreKind::InO, ffs, 25.0).unwrap()
    }

    fn ids(n: usize) -> Vec<FfId> {
        (0..n as FfId).collect()
    }

    #[test]
    fn remainder_group() {
        let d = grid(33, 2.0, |_| 500.0);
        let plan = plan_parity(&d, &ids(33), None, Heuristic::Size, 32).unwrap();
        let sizes: Vec<usize> = plan.groups.iter().map(ParityGroup::len).collect();
        assert_eq!(sizes, vec![32, 1]);
        let d = grid(16, 2.0, |_| 0.0);
        let plan = plan_parity(&d, &ids(16), None, Heuristic::Size, 16).unwrap();
        assert_eq!(plan.groups.len(), 1);
        assert!(plan.groups[0].pipelined);
    }

    #[test]
    fn errors() {
        let d = grid(4, 2.0, |_| 0.0);
        assert_eq!(plan_parity(&d, &[], None, Heuristic::Size, 4), Err(ParityError::Empty));
        assert_eq!(plan_parity(&d, &[0], None, Heuristic::Size, 6), Err(ParityError::BadGroupSize(6)));
        assert_eq!(plan_parity(&d, &[9], None, Heuristic::Size, 4), Err(ParityError::UnknownFf(9)));
    }

    #[test]
    fn vulnerability_order_matches_sort_oracle() {
        use crate::profile::{BenchmarkMeta, OutcomeCounts};
        let d = grid(80, 2.0, |_| 500.0);
        let mut prof = VulnerabilityProfile::new(vec![BenchmarkMeta::new("b", 100)]).unwrap();
        for i in 0..80u32 {
            let omm = (i * 37) % 23;
            let c = OutcomeCounts { vanished: 10, omm: omm as u64, ut: (i % 3) as u64, hang: 0, ed: 0 };
            prof.insert(i, "b", c).unwrap();
        }
        let plan = plan_parity(&d, &ids(80), Some(&prof), Heuristic::Vulnerability, 32).unwrap();
        let mut oracle: Vec<(u64, FfId)> =
            (0..80u32).map(|i| (((i * 37) % 23 + i % 3) as u64, i)).collect();
        oracle.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut top: Vec<FfId> = oracle[..32].iter().map(|x| x.1).collect();
        top.sort_unstable();
        assert_eq!(plan.groups[0].members, top);
    }

    #[test]
    fn optimized_extremes() {
        let d = grid(100, 2.0, |_| 1e6);
        let plan = optimized_plan(&d, &ids(100)).unwrap();
        assert!(plan.groups.iter().all(|g| !g.pipelined && g.len() <= 32));
        let d = grid(100, 2.0, |_| 0.0);
        let plan = optimized_plan(&d, &ids(100)).unwrap();
        assert!(plan.groups.iter().all(|g| g.pipelined && g.len() <= 16));
    }

    #[test]
    fn hand_built_violation() {
        let d = grid(3, 0.5, |_| 0.0);
        let plan = ParityPlan {
            heuristic: Heuristic::Size,
            groups: vec![ParityGroup { members: vec![0, 1], pipelined: false }, ParityGroup {
                members: vec![2],
                pipelined: false,
            }],
        };
        let r = check_spacing(&plan, &d).unwrap();
        assert_eq!(r.violations.len(), 1);
        assert_eq!((r.violations[0].0, r.violations[0].1), (0, 1));
        assert_eq!(r.histogram.counts, [2, 0, 0, 0, 0]);
    }

    #[test]
    fn staging_counts() {
        assert_eq!(staging_registers(1), 0);
        assert_eq!(staging_registers(2), 0);
        assert_eq!(staging_registers(4), 4);
        assert_eq!(staging_registers(8), 4);
        assert_eq!(staging_registers(16), 8);
        assert_eq!(staging_registers(32), 20);
    }

    #[test]
    fn per_ff_ranking() {
        let lib = TechniqueLibrary::bundled();
        let area = |g, p| per_ff_units(g, p, &lib).0;
        assert!((area(4, true) - 2.25).abs() < 1e-12);
        assert!((area(16, true) - 1.5625).abs() < 1e-12);
        assert!((area(32, false) - 33.0 / 32.0).abs() < 1e-12);
        assert!(area(4, true) > area(32, true));
        assert!(area(32, true) > area(8, true));
        assert!(area(8, true) > area(16, true));
    }

    #[test]
    fn one_unpipelined_beats_two_pipelined() {
        let lib = TechniqueLibrary::bundled();
        let d = grid(32, 2.0, |_| 500.0);
        let one = ParityPlan {
            heuristic: Heuristic::Size,
            groups: vec![ParityGroup { members: ids(32), pipelined: false }],
        };
        let two = ParityPlan {
            heuristic: Heuristic::Size,
            groups: vec![
                ParityGroup { members: (0..16).collect(), pipelined: true },
                ParityGroup { members: (16..32).collect(), pipelined: true },
            ],
        };
        let c1 = parity_cost(&one, &d, &lib).unwrap();
        let c2 = parity_cost(&two, &d, &lib).unwrap();
        assert!(c1.area < c2.area && c1.power < c2.power);
        let empty = ParityPlan { heuristic: Heuristic::Size, groups: vec![] };
        assert_eq!(parity_cost(&empty, &d, &lib).unwrap(), ParityCost::default());
    }

    #[test]
    fn plan_file_round_trip() {
        let lib = TechniqueLibrary::bundled();
        let d = grid(50, 0.8, |i| (i * 13 % 200) as f64);
        let plan = optimized_plan(&d, &ids(50)).unwrap();
        let text = plan.to_file_string(&parity_cost(&plan, &d, &lib).unwrap());
        assert_eq!(ParityPlan::parse(&text).unwrap(), plan);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn partition_caps_and_spacing(
            n in 2usize..200,
            pitch in 0.3f64..2.0,
            seed in any::<u64>(),
            h in 0usize..5,
            gs in prop::sample::select(vec![4usize, 8, 16, 32]),
        ) {
            let d = grid(n, pitch, |i| ((i as u64).wrapping_mul(seed | 1) % 300) as f64);
            let heuristic = [Heuristic::Optimized, Heuristic::Size, Heuristic::Vulnerability, Heuristic::Locality, Heuristic::Timing][h];
            let plan = plan_parity(&d, &ids(n), None, heuristic, gs).unwrap();
            let mut all: Vec<FfId> = plan.members().collect();
            all.sort_unstable();
            prop_assert_eq!(all, ids(n));
            for g in &plan.groups {
                prop_assert!(!g.is_empty());
                let cap = if g.pipelined { MAX_PIPELINED } else { MAX_UNPIPELINED };
                prop_assert!(g.len() <= cap);
                if !g.pipelined {
                    let min = g.members.iter().map(|&i| d.get(i).unwrap().slack_ps).fold(f64::INFINITY, f64::min);
                    prop_assert!(min >= d.xor_tree_delay_ps(g.len()));
                }
            }
            prop_assert!(check_spacing(&plan, &d).unwrap().violations.is_empty());
        }

        #[test]
        fn adding_a_member_costs_more(g in 1usize..32, pipelined in any::<bool>()) {
            let lib = TechniqueLibrary::bundled();
            let pipelined = pipelined && g < MAX_PIPELINED;
            let small = ParityGroup { members: (0..g as FfId).collect(), pipelined };
            let big = ParityGroup { members: (0..=g as FfId).collect(), pipelined };
            let (a0, p0) = group_units(&small, &lib);
            let (a1, p1) = group_units(&big, &lib);
            prop_assert!(a1 > a0 && p1 > p0);
        }
    }
}
