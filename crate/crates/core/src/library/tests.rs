use super::*;
use proptest::prelude::*;

fn lib() -> TechniqueLibrary {
    TechniqueLibrary::bundled()
}

#[test]
fn flip_flop_rows() {
    let l = lib();
    let dice = l.technique(TechniqueId::LeapDice).unwrap();
    assert_eq!(dice.ser_scale, 2.0e-4);
    assert_eq!(dice.ff_cost.unwrap().energy, 1.8);
    assert_eq!(dice.ff_cost.unwrap().area, 2.0);
    assert_eq!(l.technique(TechniqueId::Lhl).unwrap().ser_scale, 0.25);
    let ctrl = l.technique(TechniqueId::LeapCtrl).unwrap();
    assert_eq!(ctrl.economy.unwrap().ser_scale, 1.0);
    assert_eq!(ctrl.economy.unwrap().ff_cost.power, 1.2);
}

#[test]
fn every_technique_is_present() {
    let l = lib();
    for &id in TechniqueId::ALL {
        assert!(l.technique(id).is_ok(), "{id}");
    }
    assert!(!l.technique(TechniqueId::Monitor).unwrap().applies_to(CoreKind::InO));
    assert!(!l.technique(TechniqueId::Eddi).unwrap().applies_to(CoreKind::OoO));
    assert_eq!(l.abft_benchmarks, vec!["matmul".to_string(), "dot_product".to_string()]);
}

#[test]
fn out_of_range_coverage_rejected() {
    let text = BUNDLED_LIBRARY.replacen("firing_sdc = 0.30", "firing_sdc = 1.3", 1);
    let err = TechniqueLibrary::parse(&text).unwrap_err();
    assert!(matches!(err, LibraryError::OutOfRange { field: "firing_sdc", .. }), "{err}");
    assert!(err.to_string().contains("dfc"), "{err}");
}

#[test]
fn structural_rules() {
    let harden_with_recovery =
        BUNDLED_LIBRARY.replacen("ser_scale = 2.5e-1\n", "ser_scale = 2.5e-1\nallowed_recoveries = [\"ir\"]\n", 1);
    assert!(matches!(
        TechniqueLibrary::parse(&harden_with_recovery),
        Err(LibraryError::Invalid(_))
    ));
    let flush_without_limit = BUNDLED_LIBRARY.replacen("unrecoverable_from = \"memory\"\n", "", 1);
    assert!(matches!(
        TechniqueLibrary::parse(&flush_without_limit),
        Err(LibraryError::Invalid(_))
    ));
    let unknown_field = BUNDLED_LIBRARY.replacen("ser_scale = 2.0e-4\n", "ser_scale = 2.0e-4\nbogus = 1\n", 1);
    assert!(matches!(TechniqueLibrary::parse(&unknown_field), Err(LibraryError::Parse(_))));
}

#[test]
fn toml_round_trip() {
    let l = lib();
    let again = TechniqueLibrary::parse(&l.to_toml()).unwrap();
    assert_eq!(l, again);
}

#[test]
fn energy_composition() {
    assert!((compose_energy(0.01, 0.062) - 0.07262).abs() < 1e-12);
    assert!((compose_energy(0.0, 0.406) - 0.406).abs() < 1e-12);
    assert!((compose_energy(0.21, 0.0) - 0.21).abs() < 1e-12);
}

#[test]
fn zero_exec_rows_have_energy_equal_power() {
    let l = lib();
    for t in &l.techniques {
        for (core, c) in &t.cores {
            if c.exec == 0.0 && c.power > 0.0 {
                if let Some(e) = c.reported_energy {
                    assert!((e - c.power).abs() < 1e-9, "{} {core}", t.id);
                }
            }
        }
    }
    for r in &l.recoveries {
        if r.id != RecoveryId::Flush {
            assert!((r.energy - r.power).abs() < 1e-9, "{} {}", r.id, r.core);
        }
    }
}

#[test]
fn reported_energy_matches_composition() {
    let l = lib();
    for t in &l.techniques {
        for (core, c) in &t.cores {
            if let Some(e) = c.reported_energy {
                if t.id.is_low_level() {
                    continue;
                }
                let composed = compose_energy(c.power, c.exec);
                assert!((composed - e).abs() < 0.002, "{} {core}: {composed} vs {e}", t.id);
            }
        }
    }
}

#[test]
fn residual_examples() {
    let l = lib();
    let r = l.residual_rates(TechniqueId::Dfc, CoreKind::InO, true, ErrorKind::Sdc).unwrap();
    assert!((r.residual - 0.70).abs() < 1e-12 && (r.detected - 0.30).abs() < 1e-12);
    let r = l.residual_rates(TechniqueId::Parity, CoreKind::InO, true, ErrorKind::Due).unwrap();
    assert_eq!((r.residual, r.detected), (0.0, 1.0));
    let r = l.residual_rates(TechniqueId::Dfc, CoreKind::InO, false, ErrorKind::Sdc).unwrap();
    assert_eq!((r.residual, r.detected), (1.0, 0.0));
    let r = l.residual_rates(TechniqueId::LeapDice, CoreKind::OoO, true, ErrorKind::Sdc).unwrap();
    assert_eq!((r.residual, r.detected), (2.0e-4, 0.0));
    assert!(matches!(
        l.residual_rates(TechniqueId::Monitor, CoreKind::InO, true, ErrorKind::Sdc),
        Err(LibraryError::Inapplicable { .. })
    ));
}

#[test]
fn readback_detects_more() {
    let l = lib();
    for kind in [ErrorKind::Sdc, ErrorKind::Due] {
        let with = l.residual_rates(TechniqueId::Eddi, CoreKind::InO, true, kind).unwrap();
        let without =
            l.residual_rates(TechniqueId::EddiNoReadback, CoreKind::InO, true, kind).unwrap();
        assert!(with.detected > without.detected, "{kind}");
    }
}

#[test]
fn recovery_reach_examples() {
    let l = lib();
    let flush = l.recovery(RecoveryId::Flush, CoreKind::InO).unwrap();
    assert!(recovery_reach(flush, Stage::Execute));
    assert!(!recovery_reach(flush, Stage::Memory));
    assert!(!recovery_reach(flush, Stage::Writeback));
    assert!(recovery_reach(flush, Stage::Other));
    let ir = l.recovery(RecoveryId::Ir, CoreKind::InO).unwrap();
    assert!(recovery_reach(ir, Stage::Writeback));
    let rob = l.recovery(RecoveryId::Rob, CoreKind::OoO).unwrap();
    assert!(recovery_reach(rob, Stage::Writeback));
    assert!(!recovery_reach(rob, Stage::PostCommit));
    assert!(!recovery_reach(None, Stage::Fetch));
    assert_eq!(l.recovery(RecoveryId::None, CoreKind::InO).unwrap(), None);
    assert!(l.recovery(RecoveryId::Rob, CoreKind::InO).is_err());
}

#[test]
fn names_round_trip() {
    for &id in TechniqueId::ALL {
        assert_eq!(id.as_str().parse::<TechniqueId>().unwrap(), id);
    }
    for &id in RecoveryId::ALL {
        assert_eq!(id.to_string().parse::<RecoveryId>().unwrap(), id);
    }
    assert!("leap".parse::<TechniqueId>().is_err());
}

proptest! {
    #[test]
    fn compose_identity(x in 0.0f64..10.0) {
        prop_assert!((compose_energy(0.0, x) - x).abs() < 1e-12);
        prop_assert!((compose_energy(x, 0.0) - x).abs() < 1e-12);
    }

    #[test]
    fn compose_is_symmetric_and_superadditive(a in 0.0f64..5.0, b in 0.0f64..5.0) {
        let e = compose_energy(a, b);
        prop_assert!((e - compose_energy(b, a)).abs() < 1e-9);
        prop_assert!(e >= a + b - 1e-12);
    }

    #[test]
    fn residual_components_bounded(
        t in prop::sample::select(TechniqueId::ALL.to_vec()),
        ooo in any::<bool>(),
        covered in any::<bool>(),
        due in any::<bool>(),
    ) {
        let l = lib();
        let core = if ooo { CoreKind::OoO } else { CoreKind::InO };
        let kind = if due { ErrorKind::Due } else { ErrorKind::Sdc };
        if let Ok(r) = l.residual_rates(t, core, covered, kind) {
            prop_assert!(r.residual >= 0.0 && r.detected >= 0.0);
            prop_assert!(r.residual + r.detected <= 1.0 + 1e-12);
        }
    }
}
