//! Per-flip-flop protection selection, outcome prediction and cost accounting.

mod coverage;
mod greedy;
mod predict;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::design::{FfId, Stage};
use crate::library::{ErrorKind, LibraryError, RecoveryId, TechniqueId};
use crate::parity::ParityError;
use crate::profile::{OutcomeCounts, ProfileError};

pub use coverage::{
    AbftMode, CoverageMap, CoveredSet, abft_coverage_stats, draw_coverage, layer_abft, layer_technique,
};
pub use greedy::{
    SelectRequest, Selection, Shortfall, choose_technique, lhl_fallback, select_to_target,
};
pub use predict::{Prediction, evaluate, predict_profile};

#[derive(Debug, Error)]
pub enum SelectError {
    #[error(transparent)]
    Library(#[from] LibraryError),
    #[error(transparent)]
    Parity(#[from] ParityError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error("baseline has no {0} errors, so its improvement is undefined")]
    UndefinedImprovement(ErrorKind),
    #[error("target must be >= 1 or `max`, got `{0}`")]
    BadTarget(String),
    #[error("no improvement target given")]
    NoTarget,
    #[error("profile flip-flop {0} is not in the design")]
    UnknownFf(FfId),
    #[error("`{0}` is not a per-flip-flop technique")]
    NotLowLevel(TechniqueId),
    #[error("`{0}` is a per-flip-flop technique, not a layered one")]
    NotHighLevel(TechniqueId),
    #[error("technique `{0}` is layered twice")]
    DuplicateLayer(TechniqueId),
    #[error("ABFT correction and ABFT detection are mutually exclusive")]
    AbftExclusive,
    #[error("recovery `{recovery}` cannot be paired with `{tech}`")]
    RecoveryPairing { tech: TechniqueId, recovery: RecoveryId },
    #[error("flip-flop {ff} ({stage}) uses {tech} but {recovery} cannot recover that stage")]
    Unrecoverable { ff: FfId, stage: Stage, tech: TechniqueId, recovery: RecoveryId },
}

/// An improvement goal: a factor ≥ 1, or protect every flip-flop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Factor(f64),
    Max,
}

impl Target {
    pub fn factor(x: f64) -> Result<Self, SelectError> {
        if x.is_finite() && x >= 1.0 {
            Ok(Target::Factor(x))
        } else {
            Err(SelectError::BadTarget(x.to_string()))
        }
    }

    /// Default sweep of improvement goals.
    pub const GRID: [Target; 5] = [
        Target::Factor(2.0),
        Target::Factor(5.0),
        Target::Factor(50.0),
        Target::Factor(500.0),
        Target::Max,
    ];

    pub fn is_met_by(self, x: f64) -> bool {
        match self {
            Target::Factor(t) => x >= t,
            Target::Max => false,
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Factor(x) => write!(f, "{x}"),
            Target::Max => f.write_str("max"),
        }
    }
}

impl FromStr for Target {
    type Err = SelectError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("max") {
            return Ok(Target::Max);
        }
        let x: f64 = s.trim_end_matches(['x', 'X']).parse().map_err(|_| SelectError::BadTarget(s.into()))?;
        Target::factor(x)
    }
}

/// Outcome counts as expected (fractional) values.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ExpectedCounts {
    pub vanished: f64,
    pub omm: f64,
    pub ut: f64,
    pub hang: f64,
    pub ed: f64,
}

impl ExpectedCounts {
    pub fn total(&self) -> f64 {
        self.vanished + self.omm + self.ut + self.hang + self.ed
    }

    pub fn sdc(&self) -> f64 {
        self.omm
    }

    /// UT + Hang + ED.
    pub fn due(&self) -> f64 {
        self.ut + self.hang + self.ed
    }

    pub fn add(&mut self, o: &ExpectedCounts) {
        self.vanished += o.vanished;
        self.omm += o.omm;
        self.ut += o.ut;
        self.hang += o.hang;
        self.ed += o.ed;
    }

    pub fn sub(&mut self, o: &ExpectedCounts) {
        self.vanished -= o.vanished;
        self.omm -= o.omm;
        self.ut -= o.ut;
        self.hang -= o.hang;
        self.ed -= o.ed;
    }
}

impl From<&OutcomeCounts> for ExpectedCounts {
    fn from(c: &OutcomeCounts) -> Self {
        ExpectedCounts {
            vanished: c.vanished as f64,
            omm: c.omm as f64,
            ut: c.ut as f64,
            hang: c.hang as f64,
            ed: c.ed as f64,
        }
    }
}

/// `(1 + ff_increase)(1 + exec_increase)`.
pub fn gamma(ff_increase: f64, exec_increase: f64) -> f64 {
    (1.0 + ff_increase) * (1.0 + exec_increase)
}

/// SDC: `ΣOMM_before / ΣOMM_after / γ`. DUE: `Σ(UT+Hang)_before /
/// Σ(UT+Hang+ED)_after / γ`. A zero after-count gives `+inf`.
pub fn improvement(
    before: &ExpectedCounts,
    after: &ExpectedCounts,
    gamma: f64,
    kind: ErrorKind,
) -> Result<f64, SelectError> {
    let (b, a) = match kind {
        ErrorKind::Sdc => (before.omm, after.omm),
        ErrorKind::Due => (before.ut + before.hang, after.due()),
    };
    if b <= 0.0 {
        return Err(SelectError::UndefinedImprovement(kind));
    }
    if a <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(b / a / gamma)
}

/// Formats an improvement factor, writing `max` for an unbounded one.
pub fn fmt_improvement(x: f64) -> String {
    if x.is_infinite() {
        "max".to_string()
    } else {
        format!("{x:.4}")
    }
}

/// A layered (architecture, software or algorithm) technique with the
/// flip-flops its checker watches.
#[derive(Debug, Clone, PartialEq)]
pub struct Layered {
    pub id: TechniqueId,
    pub coverage: CoverageMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub recovery: RecoveryId,
    /// Circuit/logic technique per flip-flop; unlisted flip-flops are unprotected.
    pub per_ff: BTreeMap<FfId, TechniqueId>,
    pub layered: Vec<Layered>,
    /// Fraction of benchmarks in which LEAP-ctrl flip-flops run in economy mode.
    pub leap_ctrl_duty: f64,
}

impl Assignment {
    pub fn new(recovery: RecoveryId) -> Self {
        Assignment { recovery, per_ff: BTreeMap::new(), layered: Vec::new(), leap_ctrl_duty: 0.0 }
    }

    pub fn layer(&self, id: TechniqueId) -> Option<&Layered> {
        self.layered.iter().find(|l| l.id == id)
    }

    pub fn abft_mode(&self) -> Option<AbftMode> {
        self.layered.iter().find_map(|l| match l.id {
            TechniqueId::AbftCorrection => Some(AbftMode::Correction),
            TechniqueId::AbftDetection => Some(AbftMode::Detection),
            _ => None,
        })
    }

    pub fn count_of(&self, tech: TechniqueId) -> usize {
        self.per_ff.values().filter(|&&t| t == tech).count()
    }

    /// `ff_id,technique` lines under a header naming recovery and layers.
    pub fn to_file_string(&self) -> String {
        let layers: Vec<&str> = self.layered.iter().map(|l| l.id.as_str()).collect();
        let mut out = format!(
            "# recovery: {}\n# layered: {}\n# leap_ctrl_duty: {}\nff_id,technique\n",
            self.recovery,
            if layers.is_empty() { "none".to_string() } else { layers.join(";") },
            self.leap_ctrl_duty
        );
        for (ff, t) in &self.per_ff {
            out.push_str(&format!("{ff},{t}\n"));
        }
        out
    }
}

/// Costs as fractions of the unprotected core, with γ and predicted improvements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostReport {
    pub area: f64,
    pub power: f64,
    pub energy: f64,
    pub exec: f64,
    pub gamma: f64,
    pub sdc_x: f64,
    pub due_x: f64,
}

impl CostReport {
    pub const CSV_HEADER: &'static str = "area_pct,power_pct,energy_pct,exec_pct,gamma,sdc_x,due_x";

    pub fn csv_fields(&self) -> String {
        format!(
            "{:.4},{:.4},{:.4},{:.4},{:.4},{},{}",
            self.area * 100.0,
            self.power * 100.0,
            self.energy * 100.0,
            self.exec * 100.0,
            self.gamma,
            fmt_improvement(self.sdc_x),
            fmt_improvement(self.due_x)
        )
    }

    pub fn improvement(&self, kind: ErrorKind) -> f64 {
        match kind {
            ErrorKind::Sdc => self.sdc_x,
            ErrorKind::Due => self.due_x,
        }
    }
}

#[cfg(test)]
mod tests;
