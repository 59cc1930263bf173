//! Protectable design: flip-flops with placement, pipeline stage and timing slack.
//!
//! Design file format (UTF-8, one record per line):
//!
//! ```text
//! # core_kind: ino
//! # xor2_delay_ps: 25
//! id,structure,stage,x,y,slack_ps
//! 0,pc,fetch,0,0,140.5
//! ```
//!
//! Lines starting with `#` are comments. The two `# key: value` directives above
//! are recognized and required; the column header line is required before the
//! first record.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type FfId = u32;

pub const DESIGN_HEADER: &str = "id,structure,stage,x,y,slack_ps";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: duplicate flip-flop id {id}")]
    DuplicateId { line: usize, id: FfId },
    #[error("duplicate flip-flop id {0}")]
    Duplicate(FfId),
    #[error("flip-flop {id}: {field} must be a non-negative finite number, got {value}")]
    Negative { id: FfId, field: &'static str, value: f64 },
    #[error("unknown stage tag `{0}`")]
    UnknownStage(String),
    #[error("unknown core kind `{0}`")]
    UnknownCoreKind(String),
    #[error("missing `{0}` directive")]
    MissingDirective(&'static str),
    #[error("missing column header `{DESIGN_HEADER}`")]
    MissingHeader,
    #[error("xor2 delay must be positive, got {0}")]
    BadXorDelay(f64),
    #[error("need at least 2 flip-flops, got {0}")]
    TooFewFlipFlops(usize),
}

/// Pipeline-stage tag of a flip-flop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Fetch,
    Decode,
    Execute,
    Memory,
    Exception,
    Writeback,
    PostCommit,
    Other,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Fetch,
        Stage::Decode,
        Stage::Execute,
        Stage::Memory,
        Stage::Exception,
        Stage::Writeback,
        Stage::PostCommit,
        Stage::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Fetch => "fetch",
            Stage::Decode => "decode",
            Stage::Execute => "execute",
            Stage::Memory => "memory",
            Stage::Exception => "exception",
            Stage::Writeback => "writeback",
            Stage::PostCommit => "post_commit",
            Stage::Other => "other",
        }
    }

    /// Position along the pipeline; `Other` (predictors, debug state) has none.
    pub fn pipeline_rank(self) -> Option<u8> {
        match self {
            Stage::Fetch => Some(0),
            Stage::Decode => Some(1),
            Stage::Execute => Some(2),
            Stage::Memory => Some(3),
            Stage::Exception => Some(4),
            Stage::Writeback => Some(5),
            Stage::PostCommit => Some(6),
            Stage::Other => None,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = DesignError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .iter()
            .copied()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| DesignError::UnknownStage(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoreKind {
    InO,
    OoO,
}

impl CoreKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CoreKind::InO => "ino",
            CoreKind::OoO => "ooo",
        }
    }

    /// First stage whose flip-flops flush/RoB recovery can no longer restore:
    /// the memory-write stage for an in-order core, past the reorder buffer
    /// for an out-of-order one.
    pub fn recovery_boundary(self) -> Stage {
        match self {
            CoreKind::InO => Stage::Memory,
            CoreKind::OoO => Stage::PostCommit,
        }
    }
}

impl fmt::Display for CoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CoreKind {
    type Err = DesignError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ino" => Ok(CoreKind::InO),
            "ooo" => Ok(CoreKind::OoO),
            _ => Err(DesignError::UnknownCoreKind(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlipFlop {
    pub id: FfId,
    pub structure: String,
    pub stage: Stage,
    pub x: f64,
    pub y: f64,
    pub slack_ps: f64,
}

impl FlipFlop {
    pub fn distance(&self, other: &FlipFlop) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    core_kind: CoreKind,
    flip_flops: Vec<FlipFlop>,
    xor2_delay_ps: f64,
    index: HashMap<FfId, usize>,
}

impl Design {
    pub fn new(
        core_kind: CoreKind,
        flip_flops: Vec<FlipFlop>,
        xor2_delay_ps: f64,
    ) -> Result<Self, DesignError> {
        if !(xor2_delay_ps.is_finite() && xor2_delay_ps > 0.0) {
            return Err(DesignError::BadXorDelay(xor2_delay_ps));
        }
        let mut index = HashMap::with_capacity(flip_flops.len());
        for (i, ff) in flip_flops.iter().enumerate() {
            for (field, value) in [("x", ff.x), ("y", ff.y), ("slack_ps", ff.slack_ps)] {
                if !(value.is_finite() && value >= 0.0) {
                    return Err(DesignError::Negative { id: ff.id, field, value });
                }
            }
            if index.insert(ff.id, i).is_some() {
                return Err(DesignError::Duplicate(ff.id));
            }
        }
        Ok(Design { core_kind, flip_flops, xor2_delay_ps, index })
    }

    pub fn core_kind(&self) -> CoreKind {
        self.core_kind
    }

    pub fn flip_flops(&self) -> &[FlipFlop] {
        &self.flip_flops
    }

    pub fn len(&self) -> usize {
        self.flip_flops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flip_flops.is_empty()
    }

    pub fn xor2_delay_ps(&self) -> f64 {
        self.xor2_delay_ps
    }

    pub fn recovery_boundary(&self) -> Stage {
        self.core_kind.recovery_boundary()
    }

    pub fn get(&self, id: FfId) -> Option<&FlipFlop> {
        self.index.get(&id).map(|&i| &self.flip_flops[i])
    }

    /// True when an error in a flip-flop of `stage` has already reached
    /// architecturally visible state before a flush could discard it.
    pub fn beyond_recovery_boundary(&self, stage: Stage) -> bool {
        match (stage.pipeline_rank(), self.recovery_boundary().pipeline_rank()) {
            (Some(s), Some(b)) => s >= b,
            _ => false,
        }
    }

    /// Delay of a balanced XOR tree over `inputs` signals.
    pub fn xor_tree_delay_ps(&self, inputs: usize) -> f64 {
        xor_tree_levels(inputs) as f64 * self.xor2_delay_ps
    }

    pub fn parse(text: &str) -> Result<Self, DesignError> {
        let mut core_kind = None;
        let mut xor2 = None;
        let mut header_seen = false;
        let mut ffs = Vec::new();
        let mut seen: HashMap<FfId, usize> = HashMap::new();

        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some((key, value)) = comment.split_once(':') {
                    let value = value.trim();
                    match key.trim() {
                        "core_kind" => {
                            core_kind = Some(value.parse::<CoreKind>().map_err(|e| {
                                DesignError::Parse { line: line_no, msg: e.to_string() }
                            })?)
                        }
                        "xor2_delay_ps" => {
                            xor2 = Some(value.parse::<f64>().map_err(|e| DesignError::Parse {
                                line: line_no,
                                msg: format!("bad xor2_delay_ps `{value}`: {e}"),
                            })?)
                        }
                        _ => {}
                    }
                }
                continue;
            }
            if !header_seen {
                if line.replace(' ', "") == DESIGN_HEADER {
                    header_seen = true;
                    continue;
                }
                return Err(DesignError::MissingHeader);
            }
            let ff = parse_record(line, line_no)?;
            if seen.insert(ff.id, line_no).is_some() {
                return Err(DesignError::DuplicateId { line: line_no, id: ff.id });
            }
            ffs.push(ff);
        }
        if !header_seen {
            return Err(DesignError::MissingHeader);
        }
        let core_kind = core_kind.ok_or(DesignError::MissingDirective("core_kind"))?;
        let xor2 = xor2.ok_or(DesignError::MissingDirective("xor2_delay_ps"))?;
        Design::new(core_kind, ffs, xor2)
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# core_kind: {}\n", self.core_kind));
        out.push_str(&format!("# xor2_delay_ps: {}\n", self.xor2_delay_ps));
        out.push_str(DESIGN_HEADER);
        out.push('\n');
        for ff in &self.flip_flops {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                ff.id, ff.structure, ff.stage, ff.x, ff.y, ff.slack_ps
            ));
        }
        out
    }
}

fn parse_record(line: &str, line_no: usize) -> Result<FlipFlop, DesignError> {
    let err = |msg: String| DesignError::Parse { line: line_no, msg };
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 6 {
        return Err(err(format!("expected 6 fields, got {}", fields.len())));
    }
    let id = fields[0]
        .parse::<FfId>()
        .map_err(|e| err(format!("bad id `{}`: {e}", fields[0])))?;
    let stage = fields[2]
        .parse::<Stage>()
        .map_err(|e| err(e.to_string()))?;
    let num = |i: usize, name: &'static str| -> Result<f64, DesignError> {
        let v = fields[i]
            .parse::<f64>()
            .map_err(|e| err(format!("bad {name} `{}`: {e}", fields[i])))?;
        if !(v.is_finite() && v >= 0.0) {
            return Err(err(format!("{name} must be non-negative, got {v}")));
        }
        Ok(v)
    };
    Ok(FlipFlop {
        id,
        structure: fields[1].to_string(),
        stage,
        x: num(3, "x")?,
        y: num(4, "y")?,
        slack_ps: num(5, "slack_ps")?,
    })
}

pub fn xor_tree_levels(inputs: usize) -> u32 {
    if inputs <= 1 {
        0
    } else {
        usize::BITS - (inputs - 1).leading_zeros()
    }
}

/// Nearest-neighbor distance histogram with buckets
/// `<1`, `[1,2)`, `[2,3)`, `[3,4)`, `>=4` flip-flop lengths.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SpacingHistogram {
    pub counts: [usize; 5],
    pub mean: f64,
}

impl SpacingHistogram {
    pub const LABELS: [&'static str; 5] = ["<1", "1-2", "2-3", "3-4", ">4"];

    pub fn bucket(distance: f64) -> usize {
        if distance < 1.0 {
            0
        } else if distance < 2.0 {
            1
        } else if distance < 3.0 {
            2
        } else if distance < 4.0 {
            3
        } else {
            4
        }
    }

    pub fn from_distances(distances: &[f64]) -> Self {
        let mut counts = [0usize; 5];
        for &d in distances {
            counts[Self::bucket(d)] += 1;
        }
        let mean = if distances.is_empty() {
            0.0
        } else {
            distances.iter().sum::<f64>() / distances.len() as f64
        };
        SpacingHistogram { counts, mean }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn fractions(&self) -> [f64; 5] {
        let total = self.total();
        if total == 0 {
            return [0.0; 5];
        }
        self.counts.map(|c| c as f64 / total as f64)
    }
}

/// Distance from each point to its nearest other point, via an x-sorted sweep.
pub(crate) fn nearest_neighbor_distances(points: &[(f64, f64)]) -> Vec<f64> {
    let n = points.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| points[a].0.total_cmp(&points[b].0).then(a.cmp(&b)));
    let mut best = vec![f64::INFINITY; n];
    for (pos, &i) in order.iter().enumerate() {
        let (xi, yi) = points[i];
        let mut nearest = f64::INFINITY;
        for &j in &order[pos + 1..] {
            let dx = points[j].0 - xi;
            if dx >= nearest {
                break;
            }
            nearest = nearest.min(dx.hypot(points[j].1 - yi));
        }
        for &j in order[..pos].iter().rev() {
            let dx = xi - points[j].0;
            if dx >= nearest {
                break;
            }
            nearest = nearest.min(dx.hypot(points[j].1 - yi));
        }
        best[i] = nearest;
    }
    best
}

pub fn neighbor_spacing_histogram(design: &Design) -> Result<SpacingHistogram, DesignError> {
    if design.len() < 2 {
        return Err(DesignError::TooFewFlipFlops(design.len()));
    }
    let points: Vec<(f64, f64)> = design.flip_flops().iter().map(|f| (f.x, f.y)).collect();
    Ok(SpacingHistogram::from_distances(&nearest_neighbor_distances(&points)))
}
