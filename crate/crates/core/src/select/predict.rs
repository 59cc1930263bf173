use std::collections::{BTreeMap, HashMap};

use crate::design::{Design, FfId, FlipFlop};
use crate::library::{
    ErrorKind, Mode, RecoveryId, RecoverySpec, TechniqueId, TechniqueLibrary, TechniqueSpec,
    compose_energy, recovery_reach,
};
use crate::parity::{optimized_plan, parity_cost};
use crate::profile::VulnerabilityProfile;

use super::{Assignment, CostReport, ExpectedCounts, SelectError, gamma, improvement};

/// Baseline and predicted outcome counts, in total and per benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub baseline: ExpectedCounts,
    pub predicted: ExpectedCounts,
    pub per_benchmark: BTreeMap<String, (ExpectedCounts, ExpectedCounts)>,
}

impl Prediction {
    pub fn improvement(&self, gamma: f64, kind: ErrorKind) -> Result<f64, SelectError> {
        improvement(&self.baseline, &self.predicted, gamma, kind)
    }
}

/// Profile counts laid out densely per (flip-flop, benchmark) for repeated
/// prediction.
pub(crate) struct Model<'a> {
    pub design: &'a Design,
    pub lib: &'a TechniqueLibrary,
    pub benches: Vec<String>,
    /// All design flip-flops, ascending id.
    pub ffs: Vec<&'a FlipFlop>,
    pub base: Vec<Vec<ExpectedCounts>>,
}

impl<'a> Model<'a> {
    pub fn new(
        design: &'a Design,
        profile: &VulnerabilityProfile,
        lib: &'a TechniqueLibrary,
    ) -> Result<Self, SelectError> {
        let mut ffs: Vec<&FlipFlop> = design.flip_flops().iter().collect();
        ffs.sort_by_key(|f| f.id);
        let index: HashMap<FfId, usize> = ffs.iter().enumerate().map(|(i, f)| (f.id, i)).collect();
        let benches = profile.benchmark_names();
        let bidx: HashMap<&str, usize> = benches.iter().enumerate().map(|(i, b)| (b.as_str(), i)).collect();
        let mut base = vec![vec![ExpectedCounts::default(); benches.len()]; ffs.len()];
        for (ff, bench, counts) in profile.records() {
            let i = *index.get(&ff).ok_or(SelectError::UnknownFf(ff))?;
            base[i][bidx[bench]] = counts.into();
        }
        Ok(Model { design, lib, benches, ffs, base })
    }

    pub fn baseline(&self) -> ExpectedCounts {
        let mut t = ExpectedCounts::default();
        for row in &self.base {
            for c in row {
                t.add(c);
            }
        }
        t
    }

    /// Counts of flip-flop `i` in benchmark `j` after the layered techniques.
    pub fn layered(&self, a: &Assignment, rec: Option<&RecoverySpec>, i: usize, j: usize) -> Result<ExpectedCounts, SelectError> {
        let mut c = self.base[i][j];
        let ff = self.ffs[i];
        let bench = self.benches[j].as_str();
        let core = self.design.core_kind();
        for layer in &a.layered {
            let spec = self.lib.technique(layer.id)?;
            let Some(cov) = spec.coverage_on(core) else { continue };
            let recovered = spec.corrects()
                || (spec.allowed_recoveries.contains(&a.recovery) && recovery_reach(rec, ff.stage));
            let detect = |x: &mut f64, p: f64, c_van: &mut f64, c_ed: &mut f64| {
                let d = *x * p;
                *x -= d;
                if recovered {
                    *c_van += d;
                } else {
                    *c_ed += d;
                }
            };
            let (mut van, mut ed) = (c.vanished, c.ed);
            if layer.coverage.covers(ff.id, bench, ErrorKind::Sdc) {
                detect(&mut c.omm, cov.firing_sdc, &mut van, &mut ed);
            }
            if layer.coverage.covers(ff.id, bench, ErrorKind::Due) {
                detect(&mut c.ut, cov.firing_due, &mut van, &mut ed);
                detect(&mut c.hang, cov.firing_due, &mut van, &mut ed);
            }
            c.vanished = van;
            c.ed = ed;
        }
        Ok(c)
    }

    /// Applies circuit/logic technique `tech` to the counts `c` of flip-flop `i`
    /// in benchmark `j`.
    pub fn low_level(
        &self,
        a: &Assignment,
        rec: Option<&RecoverySpec>,
        i: usize,
        j: usize,
        tech: TechniqueId,
        mut c: ExpectedCounts,
    ) -> Result<ExpectedCounts, SelectError> {
        let spec = self.lib.technique(tech)?;
        let ff = self.ffs[i];
        match spec.mode {
            Mode::Harden => {
                let s = harden_scale(spec, a, &self.benches[j], ff.id);
                let before = c.omm + c.ut + c.hang + c.ed;
                c.omm *= s;
                c.ut *= s;
                c.hang *= s;
                c.ed *= s;
                c.vanished += before * (1.0 - s);
            }
            Mode::Detect | Mode::DetectAndCorrect => {
                let paired = spec.allowed_recoveries.contains(&a.recovery);
                if spec.corrects() || (paired && recovery_reach(rec, ff.stage)) {
                    c.vanished += c.omm + c.ut + c.hang + c.ed;
                    c.omm = 0.0;
                    c.ut = 0.0;
                    c.hang = 0.0;
                    c.ed = 0.0;
                } else if paired && matches!(a.recovery, RecoveryId::Flush | RecoveryId::Rob) {
                    return Err(SelectError::Unrecoverable {
                        ff: ff.id,
                        stage: ff.stage,
                        tech,
                        recovery: a.recovery,
                    });
                } else {
                    c.ed += c.omm + c.ut + c.hang;
                    c.omm = 0.0;
                    c.ut = 0.0;
                    c.hang = 0.0;
                }
            }
        }
        Ok(c)
    }

    pub fn predict(&self, a: &Assignment) -> Result<Prediction, SelectError> {
        let core = self.design.core_kind();
        let rec = self.lib.recovery(a.recovery, core)?;
        let mut per_benchmark: BTreeMap<String, (ExpectedCounts, ExpectedCounts)> =
            self.benches.iter().map(|b| (b.clone(), Default::default())).collect();
        let mut baseline = ExpectedCounts::default();
        let mut predicted = ExpectedCounts::default();
        for (i, ff) in self.ffs.iter().enumerate() {
            let tech = a.per_ff.get(&ff.id).copied();
            for (j, b) in self.benches.iter().enumerate() {
                let mut c = self.layered(a, rec, i, j)?;
                if let Some(t) = tech {
                    c = self.low_level(a, rec, i, j, t, c)?;
                }
                let slot = per_benchmark.get_mut(b).expect("benchmark");
                slot.0.add(&self.base[i][j]);
                slot.1.add(&c);
                baseline.add(&self.base[i][j]);
                predicted.add(&c);
            }
        }
        Ok(Prediction { baseline, predicted, per_benchmark })
    }
}

/// Residual error fraction of a hardening technique on `ff` in `benchmark`;
/// LEAP-ctrl runs in economy mode where ABFT correction covers the flip-flop.
fn harden_scale(spec: &TechniqueSpec, a: &Assignment, benchmark: &str, ff: FfId) -> f64 {
    match &spec.economy {
        Some(e) if abft_corrects(a, benchmark, ff) => e.ser_scale,
        _ => spec.ser_scale,
    }
}

fn abft_corrects(a: &Assignment, benchmark: &str, ff: FfId) -> bool {
    a.layer(TechniqueId::AbftCorrection).is_some_and(|l| {
        l.coverage.covers(ff, benchmark, ErrorKind::Sdc) || l.coverage.covers(ff, benchmark, ErrorKind::Due)
    })
}

/// Post-protection outcome counts for `assignment`. Layered techniques act
/// first, outermost layer first; each flip-flop's circuit/logic technique then
/// acts on what remains.
pub fn predict_profile(
    design: &Design,
    profile: &VulnerabilityProfile,
    assignment: &Assignment,
    lib: &TechniqueLibrary,
) -> Result<Prediction, SelectError> {
    Model::new(design, profile, lib)?.predict(assignment)
}

/// Added area/power (flip-flop units) of one flip-flop protected by `spec`.
pub(crate) fn ff_units(
    lib: &TechniqueLibrary,
    design: &Design,
    tech: TechniqueId,
    duty: f64,
) -> Result<(f64, f64), SelectError> {
    let spec = lib.technique(tech)?;
    let entry = spec.core(design.core_kind())?;
    let Some(c) = spec.ff_cost else {
        return Err(SelectError::NotLowLevel(tech));
    };
    let power = match &spec.economy {
        Some(e) => duty * e.ff_cost.power + (1.0 - duty) * c.power,
        None => c.power,
    };
    Ok((c.area - 1.0 + entry.extra_ff_area, power - 1.0 + entry.extra_ff_power))
}

/// Whether the assignment's recovery hardware is exercised by any checker.
pub(crate) fn recovery_used(lib: &TechniqueLibrary, a: &Assignment) -> Result<bool, SelectError> {
    if a.recovery == RecoveryId::None {
        return Ok(false);
    }
    for t in a.per_ff.values() {
        if lib.technique(*t)?.detects() {
            return Ok(true);
        }
    }
    for l in &a.layered {
        if lib.technique(l.id)?.allowed_recoveries.contains(&a.recovery) {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Design-level cost of an assignment: (area, power, exec, ff_increase).
pub(crate) fn cost_terms(
    design: &Design,
    lib: &TechniqueLibrary,
    a: &Assignment,
) -> Result<(f64, f64, f64, f64), SelectError> {
    let core = design.core_kind();
    let shares = lib.shares(core)?;
    let n = design.len().max(1) as f64;
    let (mut area, mut power, mut exec_factor, mut ff_inc) = (0.0, 0.0, 1.0, 0.0);

    let mut units = (0.0, 0.0);
    let mut used: BTreeMap<TechniqueId, usize> = BTreeMap::new();
    let mut parity_ffs = Vec::new();
    for (&ff, &t) in &a.per_ff {
        if !t.is_low_level() {
            return Err(SelectError::NotLowLevel(t));
        }
        *used.entry(t).or_default() += 1;
        if t == TechniqueId::Parity {
            parity_ffs.push(ff);
        } else {
            let (ua, up) = ff_units(lib, design, t, a.leap_ctrl_duty)?;
            units.0 += ua;
            units.1 += up;
        }
    }
    area += units.0 * shares.ff_area_share / n;
    power += units.1 * shares.ff_power_share / n;
    if !parity_ffs.is_empty() {
        let plan = optimized_plan(design, &parity_ffs)?;
        let pc = parity_cost(&plan, design, lib)?;
        area += pc.area;
        power += pc.power;
    }
    for &t in used.keys() {
        let e = lib.technique(t)?.core(core)?;
        area += e.area;
        power += e.power;
    }
    for l in &a.layered {
        let e = lib.technique(l.id)?.core(core)?;
        area += e.area;
        power += e.power;
        exec_factor *= 1.0 + e.exec;
        ff_inc += e.ff_increase;
    }
    if recovery_used(lib, a)? {
        let r = lib.recovery(a.recovery, core)?.expect("recovery in use");
        area += r.area;
        power += r.power;
        ff_inc += r.ff_increase;
    }
    Ok((area, power, exec_factor - 1.0, ff_inc))
}

/// Predicts outcomes and prices `assignment`.
pub fn evaluate(
    design: &Design,
    profile: &VulnerabilityProfile,
    lib: &TechniqueLibrary,
    assignment: &Assignment,
) -> Result<(CostReport, Prediction), SelectError> {
    let model = Model::new(design, profile, lib)?;
    evaluate_with(&model, assignment)
}

pub(crate) fn evaluate_with(model: &Model<'_>, a: &Assignment) -> Result<(CostReport, Prediction), SelectError> {
    let prediction = model.predict(a)?;
    let (area, power, exec, ff_inc) = cost_terms(model.design, model.lib, a)?;
    let g = gamma(ff_inc, exec);
    let report = CostReport {
        area,
        power,
        energy: compose_energy(power, exec),
        exec,
        gamma: g,
        sdc_x: prediction.improvement(g, ErrorKind::Sdc)?,
        due_x: prediction.improvement(g, ErrorKind::Due)?,
    };
    Ok((report, prediction))
}
