//! Benchmark dependence of selective protection: protection trained on some
//! benchmarks and validated on the rest, and overlap of the most vulnerable
//! flip-flops across benchmarks.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::design::{Design, FfId};
use crate::library::{ErrorKind, RecoveryId, TechniqueId, TechniqueLibrary};
use crate::profile::{ProfileError, VulnerabilityProfile};
use crate::select::{
    SelectError, SelectRequest, Target, evaluate, fmt_improvement, lhl_fallback, predict_profile, select_to_target,
};

/// Sign-flip permutations in the trained-vs-validated test.
pub const PERMUTATIONS: usize = 10_000;

#[derive(Debug, Error)]
pub enum DependError {
    #[error("training set size {k} must be below the benchmark count {n}")]
    TrainTooLarge { k: usize, n: usize },
    #[error("training set must hold at least one benchmark")]
    EmptyTrain,
    #[error("at least one trial is required")]
    NoTrials,
    #[error("similarity needs at least two subsets")]
    TooFewSubsets,
    #[error("similarity of subsets with an empty union is undefined")]
    EmptyUnion,
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitTrial {
    pub train: Vec<String>,
    pub validate: Vec<String>,
    pub seed: u64,
}

/// `trials` seeded random splits: `train_k` benchmarks drawn without
/// replacement for training, the rest for validation.
pub fn make_splits(benchmarks: &[String], train_k: usize, trials: usize, seed: u64) -> Result<Vec<SplitTrial>, DependError> {
    let n = benchmarks.len();
    if train_k >= n {
        return Err(DependError::TrainTooLarge { k: train_k, n });
    }
    if train_k == 0 {
        return Err(DependError::EmptyTrain);
    }
    if trials == 0 {
        return Err(DependError::NoTrials);
    }
    let mut sorted = benchmarks.to_vec();
    sorted.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..trials)
        .map(|_| {
            let mut order = sorted.clone();
            order.shuffle(&mut rng);
            let mut validate = order.split_off(train_k);
            order.sort();
            validate.sort();
            SplitTrial { train: order, validate, seed }
        })
        .collect())
}

/// Techniques and recovery used to train protection.
#[derive(Debug, Clone)]
pub struct TrainSetup {
    pub techniques: Vec<TechniqueId>,
    pub recovery: RecoveryId,
}

impl Default for TrainSetup {
    fn default() -> Self {
        TrainSetup { techniques: vec![TechniqueId::LeapDice], recovery: RecoveryId::None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub split: SplitTrial,
    /// False when the target is out of reach on the training benchmarks.
    pub feasible: bool,
    pub train_x: f64,
    pub validate_x: f64,
    pub after_lhl_x: f64,
    /// Costs of the design after the LHL fallback.
    pub area: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DependenceReport {
    pub kind: ErrorKind,
    pub target: Target,
    pub trials: Vec<TrialResult>,
    pub train_x: f64,
    pub validate_x: f64,
    pub after_lhl_x: f64,
    pub area: f64,
    pub energy: f64,
    /// Mean of `(validated − trained) / trained` over feasible trials, as a fraction.
    pub underestimate: f64,
    /// Two-sided sign-flip permutation p-value on per-trial log ratios
    /// validated/trained; `None` without finite pairs.
    pub p_value: Option<f64>,
}

impl DependenceReport {
    pub const CSV_HEADER: &'static str = "target,train_x,validate_x,after_lhl_x,area_pct,energy_pct";
    pub const TRIAL_HEADER: &'static str = "trial,train,validate,feasible,train_x,validate_x,after_lhl_x";

    pub fn feasible_trials(&self) -> usize {
        self.trials.iter().filter(|t| t.feasible).count()
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{}:{},{},{},{},{:.4},{:.4}",
            self.kind,
            self.target,
            fmt_improvement(self.train_x),
            fmt_improvement(self.validate_x),
            fmt_improvement(self.after_lhl_x),
            self.area * 100.0,
            self.energy * 100.0
        )
    }

    /// `#` summary line with trial counts, underestimate and test result.
    pub fn summary_line(&self) -> String {
        format!(
            "# {}:{}: trials={} infeasible={} underestimate_pct={:.2} p_value={} (sign-flip permutation, {} draws)",
            self.kind,
            self.target,
            self.trials.len(),
            self.trials.len() - self.feasible_trials(),
            self.underestimate * 100.0,
            self.p_value.map_or("na".to_string(), |p| format!("{p:.4}")),
            PERMUTATIONS
        )
    }

    pub fn trial_rows(&self) -> Vec<String> {
        self.trials
            .iter()
            .enumerate()
            .map(|(i, t)| {
                format!(
                    "{i},{},{},{},{},{},{}",
                    t.split.train.join(";"),
                    t.split.validate.join(";"),
                    t.feasible,
                    fmt_improvement(t.train_x),
                    fmt_improvement(t.validate_x),
                    fmt_improvement(t.after_lhl_x)
                )
            })
            .collect()
    }
}

fn run_trial(
    design: &Design,
    profile: &VulnerabilityProfile,
    lib: &TechniqueLibrary,
    split: &SplitTrial,
    target: Target,
    kind: ErrorKind,
    setup: &TrainSetup,
) -> Result<TrialResult, DependError> {
    let train = profile.restrict(&split.train)?;
    let validate = profile.restrict(&split.validate)?;
    let (sdc, due) = match kind {
        ErrorKind::Sdc => (Some(target), None),
        ErrorKind::Due => (None, Some(target)),
    };
    let sel = select_to_target(design, &train, lib, &SelectRequest::new(sdc, due, &setup.techniques, setup.recovery))?;
    let gamma = sel.report.gamma;
    let validate_x = predict_profile(design, &validate, &sel.assignment, lib)?.improvement(gamma, kind)?;
    let lhl = lhl_fallback(&sel.assignment, design, lib)?;
    let (lhl_report, lhl_pred) = {
        let (r, _) = evaluate(design, &train, lib, &lhl)?;
        (r, predict_profile(design, &validate, &lhl, lib)?)
    };
    Ok(TrialResult {
        split: split.clone(),
        feasible: sel.feasible(),
        train_x: sel.report.improvement(kind),
        validate_x,
        after_lhl_x: lhl_pred.improvement(lhl_report.gamma, kind)?,
        area: lhl_report.area,
        energy: lhl_report.energy,
    })
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 { f64::NAN } else { s / n as f64 }
}

/// Two-sided sign-flip permutation test of mean(d) = 0.
pub fn permutation_p_value(d: &[f64], permutations: usize, seed: u64) -> Option<f64> {
    if d.is_empty() {
        return None;
    }
    let observed = mean(d.iter().copied()).abs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..permutations {
        let m = mean(d.iter().map(|&x| if rng.r#gen::<bool>() { x } else { -x })).abs();
        if m >= observed - 1e-12 {
            hits += 1;
        }
    }
    Some((hits + 1) as f64 / (permutations + 1) as f64)
}

/// Trains protection on each split's training benchmarks and measures it on
/// the validation benchmarks, with and without the LHL fallback. Trials whose
/// target is unreachable on the training set are kept in `trials` but left
/// out of the means.
#[allow(clippy::too_many_arguments)]
pub fn trained_vs_validated(
    design: &Design,
    profile: &VulnerabilityProfile,
    lib: &TechniqueLibrary,
    splits: &[SplitTrial],
    target: Target,
    kind: ErrorKind,
    setup: &TrainSetup,
    seed: u64,
) -> Result<DependenceReport, DependError> {
    if splits.is_empty() {
        return Err(DependError::NoTrials);
    }
    let trials: Vec<TrialResult> = splits
        .par_iter()
        .map(|s| run_trial(design, profile, lib, s, target, kind, setup))
        .collect::<Result<_, _>>()?;
    let ok = || trials.iter().filter(|t| t.feasible);
    let finite: Vec<&TrialResult> = ok().filter(|t| t.train_x.is_finite() && t.validate_x.is_finite()).collect();
    let d: Vec<f64> = finite.iter().map(|t| (t.validate_x / t.train_x).ln()).collect();
    Ok(DependenceReport {
        kind,
        target,
        train_x: mean(ok().map(|t| t.train_x)),
        validate_x: mean(ok().map(|t| t.validate_x)),
        after_lhl_x: mean(ok().map(|t| t.after_lhl_x)),
        area: mean(ok().map(|t| t.area)),
        energy: mean(ok().map(|t| t.energy)),
        underestimate: mean(finite.iter().map(|t| (t.validate_x - t.train_x) / t.train_x)),
        p_value: permutation_p_value(&d, PERMUTATIONS, seed),
        trials,
    })
}

/// `|∩ subsets| / |∪ subsets|`.
pub fn subset_similarity(subsets: &[BTreeSet<FfId>]) -> Result<f64, DependError> {
    if subsets.len() < 2 {
        return Err(DependError::TooFewSubsets);
    }
    let union: BTreeSet<FfId> = subsets.iter().flatten().copied().collect();
    if union.is_empty() {
        return Err(DependError::EmptyUnion);
    }
    let inter = subsets[0].iter().filter(|f| subsets[1..].iter().all(|s| s.contains(f))).count();
    Ok(inter as f64 / union.len() as f64)
}

/// The profile's flip-flops in ten groups of decreasing SDC+DUE count in
/// `benchmark`, ties by ascending id; earlier groups take the remainder.
pub fn decile_subsets(profile: &VulnerabilityProfile, benchmark: &str) -> Result<Vec<BTreeSet<FfId>>, DependError> {
    if profile.benchmark(benchmark).is_none() {
        return Err(ProfileError::UnknownBenchmark(benchmark.to_string()).into());
    }
    let mut ranked: Vec<(u64, FfId)> = profile
        .ff_ids()
        .map(|ff| (profile.counts(ff, benchmark).map_or(0, |c| c.sdc() + c.due()), ff))
        .collect();
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let n = ranked.len();
    let mut out = Vec::with_capacity(10);
    let mut it = ranked.into_iter();
    for d in 0..10 {
        let size = n / 10 + usize::from(d < n % 10);
        out.push(it.by_ref().take(size).map(|(_, ff)| ff).collect());
    }
    Ok(out)
}

/// Similarity of each decile across `benchmarks`; an empty decile scores 0.
pub fn decile_similarity(profile: &VulnerabilityProfile, benchmarks: &[String]) -> Result<Vec<f64>, DependError> {
    let per: Vec<Vec<BTreeSet<FfId>>> =
        benchmarks.iter().map(|b| decile_subsets(profile, b)).collect::<Result<_, _>>()?;
    (0..10)
        .map(|d| {
            let sets: Vec<BTreeSet<FfId>> = per.iter().map(|p| p[d].clone()).collect();
            match subset_similarity(&sets) {
                Err(DependError::EmptyUnion) => Ok(0.0),
                r => r,
            }
        })
        .collect()
}

/// `decile,similarity` rows, decile 1 most vulnerable.
pub fn decile_csv(similarity: &[f64]) -> String {
    let mut out = String::from("decile,similarity\n");
    for (i, s) in similarity.iter().enumerate() {
        out.push_str(&format!("{},{s:.4}\n", i + 1));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::CoreKind;
    use crate::profile::{BenchmarkMeta, OutcomeCounts};
    use crate::synth::{synthetic_design, synthetic_profile};
    use proptest::prelude::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("b{i:02}")).collect()
    }

    fn set(xs: &[FfId]) -> BTreeSet<FfId> {
        xs.iter().copied().collect()
    }

    #[test]
    fn splits() {
        let b = names(11);
        let s = make_splits(&b, 4, 50, 3).unwrap();
        assert_eq!(s.len(), 50);
        for t in &s {
            assert_eq!((t.train.len(), t.validate.len()), (4, 7));
            assert!(t.train.iter().all(|x| !t.validate.contains(x)));
        }
        assert!(s.windows(2).any(|w| w[0].train != w[1].train));
        assert_eq!(make_splits(&b, 4, 1, 7).unwrap(), make_splits(&b, 4, 1, 7).unwrap());
        assert!(matches!(make_splits(&b, 11, 1, 7), Err(DependError::TrainTooLarge { k: 11, n: 11 })));
        assert!(matches!(make_splits(&b, 0, 1, 7), Err(DependError::EmptyTrain)));
    }

    #[test]
    fn similarity_examples() {
        assert_eq!(subset_similarity(&[set(&[1, 2]), set(&[1, 2])]).unwrap(), 1.0);
        assert_eq!(subset_similarity(&[set(&[1]), set(&[2])]).unwrap(), 0.0);
        assert_eq!(subset_similarity(&[set(&[1, 2, 3]), set(&[2, 3, 4])]).unwrap(), 0.5);
        assert!(matches!(subset_similarity(&[set(&[1])]), Err(DependError::TooFewSubsets)));
        assert!(matches!(subset_similarity(&[set(&[]), set(&[])]), Err(DependError::EmptyUnion)));
    }

    fn flat_profile(n: usize) -> VulnerabilityProfile {
        let mut p = VulnerabilityProfile::new(vec![BenchmarkMeta::new("x", 10)]).unwrap();
        for ff in 0..n as FfId {
            p.insert(ff, "x", OutcomeCounts { vanished: 5, omm: 1, ut: 1, hang: 0, ed: 0 }).unwrap();
        }
        p
    }

    #[test]
    fn deciles() {
        let d = decile_subsets(&flat_profile(10), "x").unwrap();
        assert_eq!(d, (0..10).map(|i| set(&[i])).collect::<Vec<_>>());
        // Uniform vulnerability: ids in order, remainder to the first groups.
        let d = decile_subsets(&flat_profile(23), "x").unwrap();
        assert_eq!(d[0], set(&[0, 1, 2]));
        assert_eq!(d[1], set(&[3, 4, 5]));
        assert_eq!(d[2], set(&[6, 7, 8]));
        assert_eq!(d[3], set(&[9, 10]));
        assert!(decile_subsets(&flat_profile(3), "y").is_err());
    }

    #[test]
    fn identical_train_and_validate_do_not_underestimate() {
        let lib = TechniqueLibrary::bundled();
        let design = synthetic_design(CoreKind::InO, 80, 2);
        let one = synthetic_profile(&design, &["p"], 30, 2);
        // Two benchmarks with identical counts.
        let mut p = one.clone();
        let mut twin = VulnerabilityProfile::new(vec![BenchmarkMeta::new("q", 10_000)]).unwrap();
        for (ff, _, c) in one.records() {
            twin.insert(ff, "q", *c).unwrap();
        }
        p.merge(&twin).unwrap();
        let splits = vec![SplitTrial { train: vec!["p".into()], validate: vec!["q".into()], seed: 0 }];
        let r = trained_vs_validated(&design, &p, &lib, &splits, Target::Factor(20.0), ErrorKind::Sdc, &TrainSetup::default(), 1)
            .unwrap();
        assert!((r.train_x - r.validate_x).abs() < 1e-9 * r.train_x);
        assert!(r.underestimate.abs() < 1e-12);
    }

    #[test]
    fn disjoint_hot_sets_underestimate() {
        let lib = TechniqueLibrary::bundled();
        let design = synthetic_design(CoreKind::InO, 40, 5);
        let metas = vec![BenchmarkMeta::new("t", 10), BenchmarkMeta::new("v", 10)];
        let mut p = VulnerabilityProfile::new(metas).unwrap();
        for ff in 0..40 {
            let hot = OutcomeCounts { vanished: 0, omm: 10, ut: 10, hang: 0, ed: 0 };
            let cold = OutcomeCounts { vanished: 19, omm: 1, ut: 0, hang: 0, ed: 0 };
            let (t, v) = if ff < 20 { (hot, cold) } else { (cold, hot) };
            p.insert(ff, "t", t).unwrap();
            p.insert(ff, "v", v).unwrap();
        }
        let splits = vec![SplitTrial { train: vec!["t".into()], validate: vec!["v".into()], seed: 0 }];
        let r = trained_vs_validated(&design, &p, &lib, &splits, Target::Factor(5.0), ErrorKind::Sdc, &TrainSetup::default(), 1)
            .unwrap();
        let t = &r.trials[0];
        // Oracle: recompute validation OMM directly from the trained assignment.
        let train = p.restrict(&["t"]).unwrap();
        let sel = select_to_target(&design, &train, &lib, &SelectRequest::new(Some(Target::Factor(5.0)), None, &[TechniqueId::LeapDice], RecoveryId::None)).unwrap();
        let ser = lib.technique(TechniqueId::LeapDice).unwrap().ser_scale;
        let (mut before, mut after) = (0.0, 0.0);
        for ff in 0..40 {
            let omm = p.counts(ff, "v").unwrap().omm as f64;
            before += omm;
            after += if sel.assignment.per_ff.contains_key(&ff) { omm * ser } else { omm };
        }
        assert!((t.validate_x - before / after).abs() < 1e-9 * t.validate_x);
        assert!(t.train_x >= 5.0);
        assert!(t.validate_x < t.train_x);
        assert!(t.after_lhl_x >= t.validate_x);
        assert!(r.underestimate < 0.0);
    }

    #[test]
    fn permutation_test() {
        assert_eq!(permutation_p_value(&[], 100, 1), None);
        let strong = vec![1.0; 20];
        assert!(permutation_p_value(&strong, 2000, 1).unwrap() < 0.01);
        let noise = [0.3, -0.2, 0.1, -0.4, 0.25, -0.05];
        assert!(permutation_p_value(&noise, 2000, 1).unwrap() > 0.5);
        assert_eq!(permutation_p_value(&noise, 500, 9), permutation_p_value(&noise, 500, 9));
    }

    #[test]
    fn shared_hot_structures_raise_top_decile_similarity() {
        let design = synthetic_design(CoreKind::InO, 100, 1);
        let p = synthetic_profile(&design, &["a", "b", "c"], 60, 8);
        let s = decile_similarity(&p, &p.benchmark_names()).unwrap();
        assert_eq!(s.len(), 10);
        assert!(s[0] >= s[4] && s[0] >= s[5], "{s:?}");
        assert!(decile_csv(&s).starts_with("decile,similarity\n1,"));
    }

    proptest! {
        #[test]
        fn similarity_order_invariant(
            sets in proptest::collection::vec(proptest::collection::btree_set(0u32..30, 1..12), 2..6),
            rot in 0usize..6,
        ) {
            let a = subset_similarity(&sets).unwrap();
            let mut r = sets.clone();
            r.rotate_left(rot % sets.len());
            r.reverse();
            prop_assert_eq!(a, subset_similarity(&r).unwrap());
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert_eq!(a == 1.0, sets.iter().all(|s| s == &sets[0]));
        }

        #[test]
        fn deciles_partition(n in 0usize..200, seed in any::<u64>()) {
            let design = synthetic_design(CoreKind::InO, n.max(1), seed);
            let p = synthetic_profile(&design, &["a"], 5, seed);
            let d = decile_subsets(&p, "a").unwrap();
            let sizes: Vec<usize> = d.iter().map(BTreeSet::len).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            let all: BTreeSet<FfId> = d.iter().flatten().copied().collect();
            prop_assert_eq!(all.len(), p.ff_count());
            prop_assert_eq!(sizes.iter().sum::<usize>(), p.ff_count());
        }
    }
}
