use super::*;
use crate::design::FfId;
use crate::profile::OutcomeCounts;
use crate::design::{CoreKind, Design, FlipFlop, Stage};
use crate::library::TechniqueLibrary;
use crate::profile::{BenchmarkMeta, VulnerabilityProfile};
use crate::synth::{synthetic_design, synthetic_profile};
use TechniqueId::*;
use proptest::prelude::*;

fn counts(omm: f64, ut: f64, hang: f64, ed: f64) -> ExpectedCounts {
    ExpectedCounts { vanished: 0.0, omm, ut, hang, ed }
}

fn one_ff(stage: Stage, slack: f64, c: OutcomeCounts) -> (Design, VulnerabilityProfile) {
    let ffs = vec![
        FlipFlop { id: 0, structure: "a".into(), stage, x: 0.0, y: 0.0, slack_ps: slack },
        FlipFlop { id: 1, structure: "b".into(), stage: Stage::Fetch, x: 5.0, y: 0.0, slack_ps: slack },
    ];
    let d = Design::new(CoreKind::InO, ffs, 25.0).unwrap();
    let mut p = VulnerabilityProfile::new(vec![BenchmarkMeta::new("b", 100)]).unwrap();
    p.insert(0, "b", c).unwrap();
    p.insert(1, "b", OutcomeCounts { vanished: 0, omm: 1, ut: 1, hang: 0, ed: 0 }).unwrap();
    (d, p)
}

fn only(tech: TechniqueId, recovery: RecoveryId) -> Assignment {
    let mut a = Assignment::new(recovery);
    a.per_ff.insert(0, tech);
    a
}

fn ff0(p: &Prediction, base: &VulnerabilityProfile) -> ExpectedCounts {
    // Subtract the untouched second flip-flop.
    let mut c = p.predicted;
    c.sub(&(&base.ff_total(1)).into());
    c
}

#[test]
fn gamma_examples() {
    assert!((gamma(0.38, 0.0) - 1.38).abs() < 1e-12);
    assert!((gamma(0.0, 0.406) - 1.406).abs() < 1e-12);
    assert!((gamma(0.20, 0.062) - 1.2744).abs() < 1e-12);
}

#[test]
fn improvement_examples() {
    let x = improvement(&counts(1000.0, 0.0, 0.0, 0.0), &counts(100.0, 0.0, 0.0, 0.0), 1.0, ErrorKind::Sdc);
    assert!((x.unwrap() - 10.0).abs() < 1e-12);
    let x = improvement(&counts(0.0, 400.0, 100.0, 0.0), &counts(0.0, 500.0, 200.0, 300.0), 1.0, ErrorKind::Due);
    assert!((x.unwrap() - 0.5).abs() < 1e-12);
    let x = improvement(&counts(1000.0, 0.0, 0.0, 0.0), &counts(100.0, 0.0, 0.0, 0.0), 1.28, ErrorKind::Sdc);
    assert!((x.unwrap() - 7.8125).abs() < 1e-12);
    assert_eq!(
        improvement(&counts(5.0, 0.0, 0.0, 0.0), &counts(0.0, 0.0, 0.0, 0.0), 1.0, ErrorKind::Sdc).unwrap(),
        f64::INFINITY
    );
    assert!(matches!(
        improvement(&counts(0.0, 1.0, 0.0, 0.0), &counts(0.0, 1.0, 0.0, 0.0), 1.0, ErrorKind::Sdc),
        Err(SelectError::UndefinedImprovement(ErrorKind::Sdc))
    ));
}

#[test]
fn targets_parse() {
    assert_eq!("max".parse::<Target>().unwrap(), Target::Max);
    assert_eq!("50".parse::<Target>().unwrap(), Target::Factor(50.0));
    assert_eq!("50x".parse::<Target>().unwrap(), Target::Factor(50.0));
    assert!("0.5".parse::<Target>().is_err());
    assert!("lots".parse::<Target>().is_err());
}

#[test]
fn predict_examples() {
    let lib = TechniqueLibrary::bundled();
    let omm10 = OutcomeCounts { vanished: 0, omm: 10, ut: 0, hang: 0, ed: 0 };
    let (d, p) = one_ff(Stage::Decode, 500.0, omm10);

    let pr = predict_profile(&d, &p, &only(LeapDice, RecoveryId::None), &lib).unwrap();
    assert!((ff0(&pr, &p).omm - 0.002).abs() < 1e-12);

    let pr = predict_profile(&d, &p, &only(Parity, RecoveryId::Ir), &lib).unwrap();
    let c = ff0(&pr, &p);
    assert_eq!((c.omm, c.ed), (0.0, 0.0));

    let (d, p) = one_ff(Stage::Decode, 500.0, OutcomeCounts { vanished: 0, omm: 10, ut: 0, hang: 5, ed: 0 });
    let pr = predict_profile(&d, &p, &only(Parity, RecoveryId::None), &lib).unwrap();
    let c = ff0(&pr, &p);
    assert_eq!((c.omm, c.ed), (0.0, 15.0));
    assert!(pr.improvement(1.0, ErrorKind::Due).unwrap() < 1.0);
}

#[test]
fn detection_past_flush_boundary_is_rejected() {
    let lib = TechniqueLibrary::bundled();
    let (d, p) = one_ff(Stage::Writeback, 500.0, OutcomeCounts { vanished: 0, omm: 3, ut: 0, hang: 0, ed: 0 });
    let err = predict_profile(&d, &p, &only(Parity, RecoveryId::Flush), &lib).unwrap_err();
    assert!(matches!(err, SelectError::Unrecoverable { ff: 0, .. }), "{err}");
}

#[test]
fn heuristic_choices() {
    let d = synthetic_design(CoreKind::InO, 8, 1);
    let mk = |stage, slack| FlipFlop { id: 0, structure: "s".into(), stage, x: 0.0, y: 0.0, slack_ps: slack };
    let both = [LeapDice, Parity];
    assert_eq!(choose_technique(&mk(Stage::Writeback, 500.0), &d, RecoveryId::Flush, &both, true), Some(LeapDice));
    assert_eq!(choose_technique(&mk(Stage::Decode, 500.0), &d, RecoveryId::Flush, &both, true), Some(Parity));
    assert_eq!(choose_technique(&mk(Stage::Decode, 0.0), &d, RecoveryId::Flush, &both, true), Some(LeapDice));
    // Unconstrained recovery never forces hardening.
    assert_eq!(choose_technique(&mk(Stage::Writeback, 500.0), &d, RecoveryId::None, &both, true), Some(Parity));
    assert_eq!(choose_technique(&mk(Stage::Writeback, 500.0), &d, RecoveryId::Ir, &both, true), Some(Parity));
    assert_eq!(choose_technique(&mk(Stage::Decode, 0.0), &d, RecoveryId::Ir, &[Parity], true), Some(Parity));
    assert_eq!(choose_technique(&mk(Stage::Decode, 500.0), &d, RecoveryId::None, &both, false), Some(LeapDice));
    assert_eq!(choose_technique(&mk(Stage::Decode, 500.0), &d, RecoveryId::None, &[Parity], false), None);
    assert_eq!(choose_technique(&mk(Stage::Memory, 0.0), &d, RecoveryId::Flush, &[Eds], true), Some(LeapDice));
}

fn toy() -> (Design, VulnerabilityProfile) {
    let d = synthetic_design(CoreKind::InO, 200, 11);
    let p = synthetic_profile(&d, &["alpha", "beta", "gamma"], 40, 5);
    (d, p)
}

#[test]
fn unit_target_is_free_and_max_protects_everything() {
    let lib = TechniqueLibrary::bundled();
    let (d, p) = toy();
    let one = select_to_target(&d, &p, &lib, &SelectRequest::new(Some(Target::Factor(1.0)), None, &[LeapDice], RecoveryId::None)).unwrap();
    assert!(one.assignment.per_ff.is_empty());
    assert_eq!(one.report.energy, 0.0);
    let max = select_to_target(&d, &p, &lib, &SelectRequest::new(Some(Target::Max), None, &[LeapDice], RecoveryId::None)).unwrap();
    assert_eq!(max.assignment.per_ff.len(), d.len());
    assert!(max.feasible());
    let dice = lib.technique(LeapDice).unwrap().ff_cost.unwrap();
    let shares = lib.shares(CoreKind::InO).unwrap();
    assert!((max.report.power - (dice.power - 1.0) * shares.ff_power_share).abs() < 1e-12);
    assert!((max.report.sdc_x - 1.0 / 2.0e-4).abs() < 1e-6);
}

#[test]
fn joint_targets_recompute() {
    let lib = TechniqueLibrary::bundled();
    let (d, p) = toy();
    for rec in [RecoveryId::None, RecoveryId::Flush, RecoveryId::Eir] {
        let req = SelectRequest::new(Some(Target::Factor(50.0)), Some(Target::Factor(50.0)), &[LeapDice, Parity], rec);
        let s = select_to_target(&d, &p, &lib, &req).unwrap();
        assert!(s.feasible(), "{rec}");
        let (r, _) = evaluate(&d, &p, &lib, &s.assignment).unwrap();
        assert!(r.sdc_x >= 50.0 && r.due_x >= 50.0, "{rec}: {r:?}");
        assert_eq!(r, s.report);
    }
}

#[test]
fn infeasible_target_names_max() {
    let lib = TechniqueLibrary::bundled();
    let (d, p) = toy();
    let s = select_to_target(&d, &p, &lib, &SelectRequest::new(Some(Target::Factor(1e9)), None, &[LeapDice], RecoveryId::None)).unwrap();
    assert!(!s.feasible());
    assert!((s.shortfalls[0].max_achievable - 5000.0).abs() < 1e-6);
    assert_eq!(s.assignment.per_ff.len(), d.len());
}

#[test]
fn recovery_cost_only_with_detection() {
    let lib = TechniqueLibrary::bundled();
    let (d, p) = toy();
    let s = select_to_target(&d, &p, &lib, &SelectRequest::new(Some(Target::Factor(5.0)), None, &[LeapDice], RecoveryId::Ir)).unwrap();
    assert_eq!(s.report.gamma, 1.0);
    let s = select_to_target(&d, &p, &lib, &SelectRequest::new(Some(Target::Factor(5.0)), None, &[Parity], RecoveryId::Ir)).unwrap();
    assert!((s.report.gamma - 1.4).abs() < 1e-12);
    assert!(s.report.area > 0.16);
}

#[test]
fn energy_is_composed() {
    let lib = TechniqueLibrary::bundled();
    let (d, p) = toy();
    let mut base = Assignment::new(RecoveryId::Eir);
    let cov = draw_coverage(&lib, Dfc, CoreKind::InO, &d.flip_flops().iter().map(|f| f.id).collect::<Vec<_>>(), 3).unwrap();
    base = layer_technique(&base, &lib, CoreKind::InO, Dfc, cov).unwrap();
    let mut req = SelectRequest::new(Some(Target::Factor(20.0)), None, &[Parity], RecoveryId::Eir);
    req.base = base;
    let s = select_to_target(&d, &p, &lib, &req).unwrap();
    let r = s.report;
    assert!((r.energy - crate::library::compose_energy(r.power, r.exec)).abs() < 1e-9);
    assert!((r.exec - 0.062).abs() < 1e-12);
    assert!(r.gamma >= 1.0);
}

#[test]
fn abft_layering() {
    let lib = TechniqueLibrary::bundled();
    let (d, p) = toy();
    let ids: Vec<FfId> = d.flip_flops().iter().map(|f| f.id).collect();
    let benches = p.benchmark_names();
    let base = Assignment::new(RecoveryId::None);
    assert_eq!(layer_abft(&base, &lib, CoreKind::InO, CoverageMap::default(), AbftMode::Correction, &benches).unwrap(), base);

    let mut lib2 = lib.clone();
    lib2.abft_benchmarks = vec!["alpha".into(), "beta".into()];
    let cov = draw_coverage(&lib2, AbftCorrection, CoreKind::InO, &ids, 1).unwrap();
    let (union, inter) = abft_coverage_stats(&cov, ids.len());
    assert!(union >= 0.44 - 1e-9 && inter <= 0.44 + 1e-9 && inter > 0.0);
    let a = layer_abft(&base, &lib2, CoreKind::InO, cov.clone(), AbftMode::Correction, &benches).unwrap();
    assert!((a.leap_ctrl_duty - 2.0 / 3.0).abs() < 1e-12);
    assert!(matches!(
        layer_abft(&a, &lib2, CoreKind::InO, cov.clone(), AbftMode::Detection, &benches),
        Err(SelectError::AbftExclusive)
    ));

    let mut req = SelectRequest::new(Some(Target::Factor(10.0)), None, &[LeapDice], RecoveryId::None);
    req.base = a;
    let s = select_to_target(&d, &p, &lib2, &req).unwrap();
    assert!(s.feasible(), "{:?} {:?}", s.shortfalls, s.report);
    assert!(s.assignment.count_of(LeapCtrl) > 0);

    let det = layer_abft(&base, &lib2, CoreKind::InO, cov, AbftMode::Detection, &benches).unwrap();
    let mut req = SelectRequest::new(None, Some(Target::Factor(2.0)), &[LeapDice], RecoveryId::None);
    req.base = det;
    let s = select_to_target(&d, &p, &lib2, &req).unwrap();
    assert!(!s.feasible());
    assert_eq!(s.shortfalls[0].kind, ErrorKind::Due);
}

#[test]
fn lhl_fallback_fills_gaps() {
    let lib = TechniqueLibrary::bundled();
    let (d, p) = toy();
    let s = select_to_target(&d, &p, &lib, &SelectRequest::new(Some(Target::Factor(5.0)), None, &[LeapDice], RecoveryId::None)).unwrap();
    let f = lhl_fallback(&s.assignment, &d, &lib).unwrap();
    assert_eq!(f.per_ff.len(), d.len());
    for (ff, t) in &s.assignment.per_ff {
        assert_eq!(f.per_ff[ff], *t);
    }
    let (after, _) = evaluate(&d, &p, &lib, &f).unwrap();
    assert!(after.sdc_x >= s.report.sdc_x);
    assert_eq!(lhl_fallback(&f, &d, &lib).unwrap(), f);
}

#[test]
fn assignment_file_lists_every_protected_ff() {
    let a = only(Parity, RecoveryId::Flush);
    let text = a.to_file_string();
    assert!(text.starts_with("# recovery: flush\n"));
    assert!(text.ends_with("ff_id,technique\n0,parity\n"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gamma_scaling(b in 1.0f64..1e6, a in 0.0f64..1e6, g in 1.0f64..5.0, due in any::<bool>()) {
        let kind = if due { ErrorKind::Due } else { ErrorKind::Sdc };
        let before = counts(b, b / 2.0, b / 2.0, 0.0);
        let after = counts(a, a / 3.0, a / 3.0, a / 3.0);
        let x1 = improvement(&before, &after, 1.0, kind).unwrap();
        let xg = improvement(&before, &after, g, kind).unwrap();
        prop_assert!(x1.is_infinite() && xg.is_infinite() || (xg - x1 / g).abs() <= 1e-12 * x1);
    }

    #[test]
    fn raising_target_never_lowers_energy(seed in 0u64..1000, t1 in 1.0f64..200.0, t2 in 1.0f64..200.0) {
        let lib = TechniqueLibrary::bundled();
        let d = synthetic_design(CoreKind::InO, 60, seed);
        let p = synthetic_profile(&d, &["a", "b"], 20, seed);
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let run = |t| select_to_target(&d, &p, &lib, &SelectRequest::new(Some(Target::Factor(t)), None, &[LeapDice, Parity], RecoveryId::Ir)).unwrap();
        let (a, b) = (run(lo), run(hi));
        prop_assert!(b.report.energy >= a.report.energy - 1e-12);
    }

    #[test]
    fn superset_never_worse(seed in 0u64..1000, keep in 0usize..60) {
        let lib = TechniqueLibrary::bundled();
        let d = synthetic_design(CoreKind::InO, 60, seed);
        let p = synthetic_profile(&d, &["a"], 20, seed);
        let mut small = Assignment::new(RecoveryId::None);
        for id in 0..keep as FfId {
            small.per_ff.insert(id, LeapDice);
        }
        let mut big = small.clone();
        big.per_ff.insert(keep as FfId, LeapDice);
        let (rs, _) = evaluate(&d, &p, &lib, &small).unwrap();
        let (rb, _) = evaluate(&d, &p, &lib, &big).unwrap();
        prop_assert!(rb.sdc_x >= rs.sdc_x && rb.due_x >= rs.due_x);
    }

    #[test]
    fn flush_never_leaves_detection_past_boundary(seed in 0u64..1000, t in 1.0f64..1000.0) {
        let lib = TechniqueLibrary::bundled();
        let d = synthetic_design(CoreKind::InO, 80, seed);
        let p = synthetic_profile(&d, &["a"], 20, seed);
        let s = select_to_target(&d, &p, &lib, &SelectRequest::new(Some(Target::Factor(t)), None, &[LeapDice, Parity, Eds], RecoveryId::Flush)).unwrap();
        for (ff, tech) in &s.assignment.per_ff {
            if d.beyond_recovery_boundary(d.get(*ff).unwrap().stage) {
                prop_assert_eq!(*tech, LeapDice);
            }
        }
    }
}
