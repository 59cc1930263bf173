//! Seeded synthetic designs and vulnerability profiles for tests and for cores
//! without a simulator (the out-of-order core).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::design::{CoreKind, Design, FfId, FlipFlop, Stage};
use crate::profile::{BenchmarkMeta, OutcomeCounts, VulnerabilityProfile};

fn stages(core: CoreKind) -> &'static [Stage] {
    match core {
        CoreKind::InO => &[
            Stage::Fetch,
            Stage::Decode,
            Stage::Execute,
            Stage::Memory,
            Stage::Exception,
            Stage::Writeback,
            Stage::Other,
        ],
        CoreKind::OoO => &[
            Stage::Fetch,
            Stage::Decode,
            Stage::Execute,
            Stage::Memory,
            Stage::Writeback,
            Stage::PostCommit,
            Stage::Other,
        ],
    }
}

/// `n` flip-flops on a jittered grid (pitch 0.6 to 1.6 flip-flop lengths, so
/// some neighbours violate minimum parity spacing), stages spread across the
/// pipeline, and bimodal slack: 40% on critical paths (0-60 ps), the rest
/// 130-400 ps.
pub fn synthetic_design(core: CoreKind, n: usize, seed: u64) -> Design {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let st = stages(core);
    let cols = (n as f64).sqrt().ceil().max(1.0) as usize;
    let pitch = rng.gen_range(0.6..1.6);
    let ffs = (0..n)
        .map(|i| {
            let stage = st[(i * st.len()) / n.max(1)];
            let slack = if rng.gen_bool(0.4) { rng.gen_range(0.0..60.0) } else { rng.gen_range(130.0..400.0) };
            FlipFlop {
                id: i as FfId,
                structure: format!("{}_{}", stage.as_str(), i / 16),
                stage,
                x: round3((i % cols) as f64 * pitch + rng.gen_range(0.0..0.3)),
                y: round3((i / cols) as f64 * pitch + rng.gen_range(0.0..0.3)),
                slack_ps: round3(slack),
            }
        })
        .collect();
    Design::new(core, ffs, 25.0).expect("synthetic design is valid")
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

/// Per-flip-flop outcome counts with `injections` errors per flip-flop and
/// benchmark. About 15% of flip-flops always vanish; the rest get a base
/// susceptibility shared across benchmarks, perturbed per benchmark so some
/// flip-flops are hot in one benchmark only.
pub fn synthetic_profile(design: &Design, benchmarks: &[&str], injections: u64, seed: u64) -> VulnerabilityProfile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let metas = benchmarks
        .iter()
        .map(|b| {
            let mut m = BenchmarkMeta::new(*b, 10_000);
            m.injections = Some(injections * design.len() as u64);
            m.seed = Some(seed);
            m
        })
        .collect();
    let mut profile = VulnerabilityProfile::new(metas).expect("distinct benchmark names");
    for ff in design.flip_flops() {
        let dead = rng.gen_bool(0.15);
        let base_sdc: f64 = rng.gen_range(0.0..0.35);
        let base_due: f64 = rng.gen_range(0.0..0.35);
        for b in benchmarks {
            let mut c = OutcomeCounts::default();
            if !dead {
                let hot = if rng.gen_bool(0.1) { 2.0 } else { rng.gen_range(0.3..1.2) };
                let p_sdc = (base_sdc * hot).min(0.45);
                let p_due = (base_due * hot).min(0.45);
                for _ in 0..injections {
                    let u: f64 = rng.r#gen();
                    if u < p_sdc {
                        c.omm += 1;
                    } else if u < p_sdc + p_due * 0.8 {
                        c.ut += 1;
                    } else if u < p_sdc + p_due {
                        c.hang += 1;
                    } else {
                        c.vanished += 1;
                    }
                }
            } else {
                c.vanished = injections;
            }
            profile.insert(ff.id, b, c).expect("fresh record");
        }
    }
    profile
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_sized() {
        let a = synthetic_design(CoreKind::OoO, 120, 3);
        assert_eq!(a, synthetic_design(CoreKind::OoO, 120, 3));
        assert_eq!(a.len(), 120);
        assert!(a.flip_flops().iter().any(|f| f.stage == Stage::PostCommit));
        let p = synthetic_profile(&a, &["x", "y"], 50, 9);
        assert_eq!(p, synthetic_profile(&a, &["x", "y"], 50, 9));
        assert_eq!(p.ff_total(0).total(), 100);
        assert!(p.totals().omm > 0 && p.totals().ut > 0);
    }
}
