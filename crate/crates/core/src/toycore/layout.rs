//! Synthetic placement and timing for the toy core's flip-flops.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::design::{CoreKind, Design, FlipFlop};

use super::campaign::StateMap;

pub const TOY_XOR2_DELAY_PS: f64 = 25.0;
const LAYOUT_SEED: u64 = 0x5eed_1a70;
const ROW_BITS: u32 = 16;
const ROW_PITCH: f64 = 1.15;

/// Share of datapath bits on critical paths; every other bit has enough slack
/// for an unpipelined 32-input XOR tree.
const CRITICAL_FRACTION: f64 = 0.55;

/// Datapath-width fields hold the critical paths; narrow control fields have slack.
fn is_datapath(name: &str, width: u32) -> bool {
    width == 32 || name.starts_with("regfile")
}

/// Design descriptor for the toy core: one flip-flop per state bit, ids in
/// state-map order. Each element is laid out in rows of up to 16 bits with a
/// per-element pitch, stages placed left to right.
pub fn toy_design(include_regfile: bool) -> Design {
    let map = StateMap::new(include_regfile);
    let mut rng = ChaCha8Rng::seed_from_u64(LAYOUT_SEED);
    let pitches = [0.78, 0.85, 0.92, 1.3, 1.7, 2.6];
    let mut ffs = Vec::with_capacity(map.total_bits());
    let mut stage_x = 0.0;
    let mut cursor_y = 0.0;
    let mut current_stage = None;
    let mut stage_width: f64 = 0.0;
    for e in map.elements() {
        if current_stage != Some(e.stage) {
            stage_x += stage_width + if current_stage.is_some() { 3.0 } else { 0.0 };
            stage_width = 0.0;
            cursor_y = 0.0;
            current_stage = Some(e.stage);
        }
        let pitch = pitches[rng.gen_range(0..pitches.len())];
        for bit in 0..e.width {
            let col = (bit % ROW_BITS) as f64;
            let row = (bit / ROW_BITS) as f64;
            let x = stage_x + col * pitch + rng.gen_range(0.0..0.08);
            let y = cursor_y + row * ROW_PITCH + rng.gen_range(0.0..0.08);
            stage_width = stage_width.max(x - stage_x + 1.0);
            let slack = if is_datapath(&e.name, e.width) && rng.gen_bool(CRITICAL_FRACTION) {
                rng.gen_range(0.0..60.0)
            } else {
                rng.gen_range(130.0..400.0)
            };
            ffs.push(FlipFlop {
                id: (e.offset + bit as usize) as u32,
                structure: e.name.clone(),
                stage: e.stage,
                x: round3(x),
                y: round3(y),
                slack_ps: round3(slack),
            });
        }
        cursor_y += (e.width.div_ceil(ROW_BITS)) as f64 * ROW_PITCH + 0.5;
    }
    Design::new(CoreKind::InO, ffs, TOY_XOR2_DELAY_PS).expect("generated toy design is valid")
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_flip_flop_per_state_bit() {
        for regfile in [false, true] {
            let d = toy_design(regfile);
            let map = StateMap::new(regfile);
            assert_eq!(d.len(), map.total_bits());
            let ids = map.ff_mapping(&d).unwrap();
            assert!(ids.iter().enumerate().all(|(i, &id)| id as usize == i));
        }
    }
}
