//! Cost and coverage models of resilience techniques and recovery mechanisms.
//!
//! The bundled library lives in `data/library.toml`; see `docs/library.md` for
//! the schema.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::{CoreKind, Stage};

pub const BUNDLED_LIBRARY: &str = include_str!("../../data/library.toml");

#[derive(Debug, Error)]
pub enum LibraryError {
    #[error("cannot read library file {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("library parse error: {0}")]
    Parse(String),
    #[error("{entry}: {field} = {value} is outside {range}")]
    OutOfRange { entry: String, field: &'static str, value: f64, range: &'static str },
    #[error("{0}")]
    Invalid(String),
    #[error("technique `{tech}` is not applicable to the {core} core")]
    Inapplicable { tech: TechniqueId, core: CoreKind },
    #[error("technique `{0}` is not in the library")]
    MissingTechnique(TechniqueId),
    #[error("recovery `{recovery}` is not available for the {core} core")]
    MissingRecovery { recovery: RecoveryId, core: CoreKind },
}

macro_rules! named_enum {
    ($(#[$m:meta])* $name:ident { $($variant:ident => $s:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $s)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $s),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = LibraryError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                $name::ALL
                    .iter()
                    .copied()
                    .find(|v| v.as_str() == s)
                    .ok_or_else(|| LibraryError::Invalid(format!(
                        concat!("unknown ", stringify!($name), " `{}`"), s
                    )))
            }
        }
    };
}

named_enum!(TechniqueId {
    LeapDice => "leap_dice",
    Lhl => "lhl",
    LeapCtrl => "leap_ctrl",
    Eds => "eds",
    Parity => "parity",
    Dfc => "dfc",
    Monitor => "monitor",
    Assertions => "assertions",
    Cfcss => "cfcss",
    Eddi => "eddi",
    EddiNoReadback => "eddi_no_readback",
    AbftCorrection => "abft_correction",
    AbftDetection => "abft_detection",
});

named_enum!(RecoveryId {
    None => "none",
    Flush => "flush",
    Rob => "rob",
    Ir => "ir",
    Eir => "eir",
});

named_enum!(Layer {
    Circuit => "circuit",
    Logic => "logic",
    Architecture => "architecture",
    Software => "software",
    Algorithm => "algorithm",
});

named_enum!(Mode {
    Harden => "harden",
    Detect => "detect",
    DetectAndCorrect => "detect_and_correct",
});

impl TechniqueId {
    /// Circuit and logic techniques, applied per flip-flop.
    pub fn is_low_level(self) -> bool {
        matches!(
            self,
            TechniqueId::LeapDice
                | TechniqueId::Lhl
                | TechniqueId::LeapCtrl
                | TechniqueId::Eds
                | TechniqueId::Parity
        )
    }

    pub fn is_abft(self) -> bool {
        matches!(self, TechniqueId::AbftCorrection | TechniqueId::AbftDetection)
    }
}

impl Layer {
    /// Order in which layered techniques act on an error, outermost first.
    pub fn stack_order(self) -> u8 {
        match self {
            Layer::Algorithm => 0,
            Layer::Software => 1,
            Layer::Architecture => 2,
            Layer::Logic => 3,
            Layer::Circuit => 4,
        }
    }
}

/// Per-flip-flop multipliers relative to an unprotected flip-flop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FfCost {
    pub area: f64,
    pub power: f64,
    pub delay: f64,
    pub energy: f64,
}

/// Detection model of a checker: which flip-flops it watches and how often it
/// fires on an error in a watched flip-flop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    /// Fraction of SDC-prone flip-flops the checker watches.
    pub ff_fraction_sdc: f64,
    /// Fraction of DUE-prone flip-flops the checker watches.
    pub ff_fraction_due: f64,
    /// Probability of detecting an SDC-causing error in a watched flip-flop.
    pub firing_sdc: f64,
    /// Probability of detecting a DUE-causing error in a watched flip-flop.
    pub firing_due: f64,
}

impl Coverage {
    pub const FULL: Coverage =
        Coverage { ff_fraction_sdc: 1.0, ff_fraction_due: 1.0, firing_sdc: 1.0, firing_due: 1.0 };
}

/// Alternate operating point of a mode-switchable flip-flop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EconomyMode {
    pub ser_scale: f64,
    pub ff_cost: FfCost,
}

/// Core-specific data of a technique. Design-level fractions apply once when
/// the technique is used at all.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoreEntry {
    #[serde(default)]
    pub area: f64,
    #[serde(default)]
    pub power: f64,
    #[serde(default)]
    pub exec: f64,
    #[serde(default)]
    pub ff_increase: f64,
    /// Additional per-protected-flip-flop overhead in flip-flop units.
    #[serde(default)]
    pub extra_ff_area: f64,
    #[serde(default)]
    pub extra_ff_power: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<Coverage>,
    /// Published standalone figures, kept for reference and checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reported_gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reported_sdc_x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reported_due_x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reported_energy: Option<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TechniqueSpec {
    pub id: TechniqueId,
    pub name: String,
    pub layer: Layer,
    pub mode: Mode,
    /// Residual error-rate fraction (harden mode).
    #[serde(default = "one")]
    pub ser_scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ff_cost: Option<FfCost>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub economy: Option<EconomyMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<Coverage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection_latency_cycles: Option<f64>,
    #[serde(default)]
    pub false_positive_rate: f64,
    /// Only effective in benchmarks that run the protected algorithm.
    #[serde(default)]
    pub benchmark_conditional: bool,
    #[serde(default)]
    pub allowed_recoveries: Vec<RecoveryId>,
    pub cores: BTreeMap<CoreKind, CoreEntry>,
    pub provenance: String,
}

impl TechniqueSpec {
    pub fn applies_to(&self, core: CoreKind) -> bool {
        self.cores.contains_key(&core)
    }

    pub fn core(&self, core: CoreKind) -> Result<&CoreEntry, LibraryError> {
        self.cores.get(&core).ok_or(LibraryError::Inapplicable { tech: self.id, core })
    }

    /// Detection model on `core`, falling back to the technique default.
    pub fn coverage_on(&self, core: CoreKind) -> Option<Coverage> {
        self.cores.get(&core).and_then(|c| c.coverage).or(self.coverage)
    }

    pub fn detects(&self) -> bool {
        self.mode != Mode::Harden
    }

    pub fn corrects(&self) -> bool {
        self.mode == Mode::DetectAndCorrect
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoverySpec {
    pub id: RecoveryId,
    pub core: CoreKind,
    pub area: f64,
    pub power: f64,
    pub energy: f64,
    pub latency_cycles: f64,
    #[serde(default)]
    pub ff_increase: f64,
    /// Flip-flops at or past this pipeline stage cannot be recovered.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unrecoverable_from: Option<Stage>,
    pub provenance: String,
}

/// Flip-flop-area and flip-flop-power shares of a baseline core, used to turn
/// per-flip-flop overheads (in flip-flop units) into design-level fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoreShares {
    pub ff_area_share: f64,
    pub ff_power_share: f64,
    pub provenance: String,
}

/// Parity-checker building blocks in flip-flop units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParityConstants {
    pub xor_area: f64,
    pub xor_power: f64,
    pub parity_ff_area: f64,
    pub parity_ff_power: f64,
    pub staging_ff_area: f64,
    pub staging_ff_power: f64,
    /// Error-signal routing and compare logic per group.
    pub group_area: f64,
    pub group_power: f64,
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TechniqueLibrary {
    pub cores: BTreeMap<CoreKind, CoreShares>,
    pub parity: ParityConstants,
    /// Benchmarks whose algorithm has a checksum-protected variant.
    #[serde(default)]
    pub abft_benchmarks: Vec<String>,
    #[serde(rename = "technique")]
    pub techniques: Vec<TechniqueSpec>,
    #[serde(rename = "recovery")]
    pub recoveries: Vec<RecoverySpec>,
}

/// Outcome split of one error in a flip-flop protected by a technique.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    /// Fraction of errors that keep their original effect.
    pub residual: f64,
    /// Fraction flagged by the technique's checker.
    pub detected: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Sdc,
    Due,
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorKind::Sdc => "sdc",
            ErrorKind::Due => "due",
        })
    }
}

/// `(1 + power)(1 + exec) - 1`: energy grows with both power and runtime.
/// Expanded so that zero exec gives back `power` bit for bit.
pub fn compose_energy(power_delta: f64, exec_delta: f64) -> f64 {
    power_delta + exec_delta + power_delta * exec_delta
}

fn check(entry: &str, field: &'static str, v: f64, lo: f64, hi: f64) -> Result<(), LibraryError> {
    if v.is_finite() && v >= lo && v <= hi {
        Ok(())
    } else {
        let range = match (lo == 0.0, hi == 1.0) {
            (true, true) => "[0, 1]",
            (true, false) => "[0, inf)",
            _ => "[1, inf)",
        };
        Err(LibraryError::OutOfRange { entry: entry.to_string(), field, value: v, range })
    }
}

fn check_coverage(entry: &str, c: &Coverage) -> Result<(), LibraryError> {
    check(entry, "ff_fraction_sdc", c.ff_fraction_sdc, 0.0, 1.0)?;
    check(entry, "ff_fraction_due", c.ff_fraction_due, 0.0, 1.0)?;
    check(entry, "firing_sdc", c.firing_sdc, 0.0, 1.0)?;
    check(entry, "firing_due", c.firing_due, 0.0, 1.0)
}

fn check_ff_cost(entry: &str, c: &FfCost) -> Result<(), LibraryError> {
    check(entry, "ff_cost.area", c.area, 0.0, f64::INFINITY)?;
    check(entry, "ff_cost.power", c.power, 0.0, f64::INFINITY)?;
    check(entry, "ff_cost.delay", c.delay, 0.0, f64::INFINITY)?;
    check(entry, "ff_cost.energy", c.energy, 0.0, f64::INFINITY)
}

impl TechniqueLibrary {
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_LIBRARY).expect("bundled library is valid")
    }

    /// Load `path`, or the bundled library when `None`.
    pub fn load(path: Option<&Path>) -> Result<Self, LibraryError> {
        match path {
            None => Self::parse(BUNDLED_LIBRARY),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| LibraryError::Io {
                    path: p.display().to_string(),
                    source,
                })?;
                Self::parse(&text)
            }
        }
    }

    pub fn parse(text: &str) -> Result<Self, LibraryError> {
        let lib: TechniqueLibrary =
            toml::from_str(text).map_err(|e| LibraryError::Parse(e.to_string()))?;
        lib.validate()?;
        Ok(lib)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("library serializes")
    }

    pub fn validate(&self) -> Result<(), LibraryError> {
        for (core, s) in &self.cores {
            let entry = format!("core {core}");
            check(&entry, "ff_area_share", s.ff_area_share, 0.0, 1.0)?;
            check(&entry, "ff_power_share", s.ff_power_share, 0.0, 1.0)?;
        }
        let p = &self.parity;
        for (field, v) in [
            ("xor_area", p.xor_area),
            ("xor_power", p.xor_power),
            ("parity_ff_area", p.parity_ff_area),
            ("parity_ff_power", p.parity_ff_power),
            ("staging_ff_area", p.staging_ff_area),
            ("staging_ff_power", p.staging_ff_power),
            ("group_area", p.group_area),
            ("group_power", p.group_power),
        ] {
            check("parity", field, v, 0.0, f64::INFINITY)?;
        }
        let mut seen = BTreeSet::new();
        for t in &self.techniques {
            let entry = t.id.as_str();
            if !seen.insert(t.id) {
                return Err(LibraryError::Invalid(format!("technique `{entry}` listed twice")));
            }
            check(entry, "ser_scale", t.ser_scale, 0.0, 1.0)?;
            check(entry, "false_positive_rate", t.false_positive_rate, 0.0, 1.0)?;
            if let Some(c) = &t.ff_cost {
                check_ff_cost(entry, c)?;
            }
            if let Some(e) = &t.economy {
                check(entry, "economy.ser_scale", e.ser_scale, 0.0, 1.0)?;
                check_ff_cost(entry, &e.ff_cost)?;
            }
            if let Some(c) = &t.coverage {
                check_coverage(entry, c)?;
            }
            if t.cores.is_empty() {
                return Err(LibraryError::Invalid(format!("technique `{entry}` applies to no core")));
            }
            for c in t.cores.values() {
                check(entry, "area", c.area, 0.0, f64::INFINITY)?;
                check(entry, "power", c.power, 0.0, f64::INFINITY)?;
                check(entry, "exec", c.exec, 0.0, f64::INFINITY)?;
                check(entry, "ff_increase", c.ff_increase, 0.0, f64::INFINITY)?;
                check(entry, "extra_ff_area", c.extra_ff_area, 0.0, f64::INFINITY)?;
                check(entry, "extra_ff_power", c.extra_ff_power, 0.0, f64::INFINITY)?;
                if let Some(cov) = &c.coverage {
                    check_coverage(entry, cov)?;
                }
            }
            match t.mode {
                Mode::Harden => {
                    if !t.allowed_recoveries.is_empty() {
                        return Err(LibraryError::Invalid(format!(
                            "hardening technique `{entry}` cannot list recovery pairings"
                        )));
                    }
                }
                Mode::Detect | Mode::DetectAndCorrect => {
                    for &core in t.cores.keys() {
                        if t.coverage_on(core).is_none() {
                            return Err(LibraryError::Invalid(format!(
                                "detecting technique `{entry}` has no coverage model for {core}"
                            )));
                        }
                    }
                }
            }
            if t.id.is_low_level() && t.id != TechniqueId::Parity && t.ff_cost.is_none() {
                return Err(LibraryError::Invalid(format!(
                    "flip-flop technique `{entry}` needs ff_cost"
                )));
            }
        }
        let mut seen = BTreeSet::new();
        for r in &self.recoveries {
            let entry = format!("recovery {} ({})", r.id, r.core);
            if !seen.insert((r.id, r.core)) {
                return Err(LibraryError::Invalid(format!("{entry} listed twice")));
            }
            for (field, v) in [("area", r.area), ("power", r.power), ("energy", r.energy)] {
                check(&entry, field, v, 0.0, f64::INFINITY)?;
            }
            check(&entry, "latency_cycles", r.latency_cycles, 0.0, f64::INFINITY)?;
            check(&entry, "ff_increase", r.ff_increase, 0.0, f64::INFINITY)?;
            let flushes = matches!(r.id, RecoveryId::Flush | RecoveryId::Rob);
            match (flushes, r.unrecoverable_from) {
                (true, None) => {
                    return Err(LibraryError::Invalid(format!(
                        "{entry} must name the stage it cannot recover from"
                    )))
                }
                (false, Some(_)) => {
                    return Err(LibraryError::Invalid(format!(
                        "{entry} recovers every pipeline stage and takes no unrecoverable_from"
                    )))
                }
                _ => {}
            }
            if r.id == RecoveryId::None {
                return Err(LibraryError::Invalid("recovery `none` is implicit".into()));
            }
        }
        Ok(())
    }

    pub fn shares(&self, core: CoreKind) -> Result<&CoreShares, LibraryError> {
        self.cores
            .get(&core)
            .ok_or_else(|| LibraryError::Invalid(format!("no core data for {core}")))
    }

    pub fn technique(&self, id: TechniqueId) -> Result<&TechniqueSpec, LibraryError> {
        self.techniques.iter().find(|t| t.id == id).ok_or(LibraryError::MissingTechnique(id))
    }

    /// `Ok(None)` for `RecoveryId::None`.
    pub fn recovery(
        &self,
        id: RecoveryId,
        core: CoreKind,
    ) -> Result<Option<&RecoverySpec>, LibraryError> {
        if id == RecoveryId::None {
            return Ok(None);
        }
        self.recoveries
            .iter()
            .find(|r| r.id == id && r.core == core)
            .map(Some)
            .ok_or(LibraryError::MissingRecovery { recovery: id, core })
    }

    /// Residual/detected split of one `kind` error in a flip-flop protected by
    /// `tech`. `covered` says whether the technique's checker watches this
    /// flip-flop (always true for per-flip-flop techniques).
    pub fn residual_rates(
        &self,
        tech: TechniqueId,
        core: CoreKind,
        covered: bool,
        kind: ErrorKind,
    ) -> Result<Residual, LibraryError> {
        let t = self.technique(tech)?;
        if !t.applies_to(core) {
            return Err(LibraryError::Inapplicable { tech, core });
        }
        if t.mode == Mode::Harden {
            return Ok(Residual { residual: t.ser_scale, detected: 0.0 });
        }
        if !covered {
            return Ok(Residual { residual: 1.0, detected: 0.0 });
        }
        let cov = t.coverage_on(core).unwrap_or(Coverage::FULL);
        let p = match kind {
            ErrorKind::Sdc => cov.firing_sdc,
            ErrorKind::Due => cov.firing_due,
        };
        Ok(Residual { residual: 1.0 - p, detected: p })
    }
}

/// Whether `recovery` can undo a detected error in a flip-flop of `stage`.
pub fn recovery_reach(recovery: Option<&RecoverySpec>, stage: Stage) -> bool {
    let Some(r) = recovery else {
        return false;
    };
    match (r.unrecoverable_from.and_then(Stage::pipeline_rank), stage.pipeline_rank()) {
        (Some(limit), Some(s)) => s < limit,
        _ => true,
    }
}

#[cfg(test)]
mod tests;
