//! Command-line front end: fault injection, parity planning, protection
//! selection, combination exploration and benchmark-dependence studies.
//!
//! Exit codes: 0 success, 1 a target is out of reach, 2 bad input.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result, bail};
use clap::{Args, Parser, Subcommand};

use xlres::depend::{TrainSetup, decile_csv, decile_similarity, make_splits, trained_vs_validated, DependenceReport};
use xlres::design::Design;
use xlres::explore::{
    EvaluatedPoint, bound_region, enumerate_combinations, explore, frontier_of, plot_data,
};
use xlres::library::{BUNDLED_LIBRARY, ErrorKind, RecoveryId, TechniqueId, TechniqueLibrary};
use xlres::parity::{Heuristic, check_spacing, optimized_plan, parity_cost, plan_parity};
use xlres::profile::VulnerabilityProfile;
use xlres::report::RunManifest;
use xlres::select::{
    AbftMode, Assignment, CostReport, SelectRequest, Target, draw_coverage, fmt_improvement, layer_abft,
    layer_technique, select_to_target,
};
use xlres::stats::required_sample_size;
use xlres::toycore::layout::toy_design;
use xlres::toycore::{CampaignConfig, DetectionHook, bench, run_campaigns};

#[derive(Parser, Debug)]
#[command(name = "xlres", version, about = "Cross-layer soft-error resilience explorer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a fault-injection campaign on the toy core and write a vulnerability profile.
    Inject(InjectArgs),
    /// Group flip-flops into parity groups.
    PlanParity(ParityArgs),
    /// Select per-flip-flop protection for SDC/DUE improvement targets.
    Select(SelectArgs),
    /// Evaluate every technique combination over a target grid.
    Explore(ExploreArgs),
    /// Train protection on some benchmarks and validate on the rest.
    Depend(DependArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// Flip-flop design file.
    #[arg(long)]
    design: PathBuf,
    /// Vulnerability profile file.
    #[arg(long)]
    profile: PathBuf,
    /// Technique library (TOML); the bundled library when omitted.
    #[arg(long)]
    library: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args, Debug)]
struct InjectArgs {
    /// Flip-flop design file; the built-in toy layout when omitted.
    #[arg(long)]
    design: Option<PathBuf>,
    /// Benchmarks to run; the default profile set when omitted.
    #[arg(long = "benchmark")]
    benchmarks: Vec<String>,
    /// Injections per benchmark.
    #[arg(long, conflicts_with = "margin")]
    count: Option<u64>,
    /// Error margin; the count comes from the sample-size formula.
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long, default_value_t = 0.95)]
    confidence: f64,
    /// Worst-case proportion in the sample-size formula.
    #[arg(long, default_value_t = 0.5)]
    worst_p: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Include register-file bits as injection targets.
    #[arg(long)]
    regfile: bool,
    /// Detectors to arm (`abft`).
    #[arg(long = "detector")]
    detectors: Vec<String>,
    #[arg(long, default_value_t = 2.0)]
    hang_multiplier: f64,
    /// Output profile; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ParityArgs {
    #[arg(long)]
    design: PathBuf,
    /// Needed by the vulnerability heuristic.
    #[arg(long)]
    profile: Option<PathBuf>,
    #[arg(long)]
    library: Option<PathBuf>,
    /// size | vulnerability | locality | timing | optimized
    #[arg(long, default_value = "optimized")]
    heuristic: String,
    /// Group size for the fixed heuristics.
    #[arg(long, default_value_t = 16)]
    group_size: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output plan; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Protection {
    /// Circuit/logic techniques the selector may place.
    #[arg(long = "technique", value_delimiter = ',', default_value = "leap_dice,eds,parity")]
    techniques: Vec<TechniqueId>,
    #[arg(long, default_value_t = RecoveryId::None)]
    recovery: RecoveryId,
}

#[derive(Args, Debug)]
struct SelectArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    protection: Protection,
    #[arg(long)]
    target_sdc: Option<Target>,
    #[arg(long)]
    target_due: Option<Target>,
    /// Layered architecture/software techniques (e.g. `dfc`).
    #[arg(long = "layer", value_delimiter = ',')]
    layers: Vec<TechniqueId>,
    /// `correction` or `detection`.
    #[arg(long)]
    abft: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ExploreArgs {
    #[command(flatten)]
    common: Common,
    /// Improvement targets, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "2,5,50,500,max")]
    targets: Vec<Target>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DependArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    protection: Protection,
    /// Training benchmarks per trial.
    #[arg(long, default_value_t = 2)]
    train_k: usize,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, value_delimiter = ',', default_value = "2,5,50,500,max")]
    targets: Vec<Target>,
    /// `sdc` or `due`.
    #[arg(long, default_value = "sdc")]
    kind: String,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

/// An error that maps to exit code 1 rather than 2.
#[derive(Debug)]
struct Infeasible(String);

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_workers() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(Infeasible(msg))) => {
            eprintln!("infeasible: {msg}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn workers() -> Result<usize> {
    match std::env::var("XLRES_WORKERS") {
        Ok(v) => v.trim().parse().with_context(|| format!("XLRES_WORKERS must be a non-negative integer, got `{v}`")),
        Err(_) => Ok(0),
    }
}

fn configure_workers() -> Result<()> {
    let n = workers()?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("starting worker pool")?;
    Ok(())
}

fn run(cli: Cli) -> Result<Option<Infeasible>> {
    match cli.command {
        Command::Inject(a) => cmd_inject(a).map(|_| None),
        Command::PlanParity(a) => cmd_plan_parity(a).map(|_| None),
        Command::Select(a) => cmd_select(a),
        Command::Explore(a) => cmd_explore(a).map(|_| None),
        Command::Depend(a) => cmd_depend(a),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load_design(path: &Path, m: &mut RunManifest) -> Result<Design> {
    let text = read(path)?;
    m.input("design", &path.display().to_string(), text.as_bytes());
    Design::parse(&text).with_context(|| format!("invalid design {}", path.display()))
}

fn load_profile(path: &Path, m: &mut RunManifest) -> Result<VulnerabilityProfile> {
    let text = read(path)?;
    m.input("profile", &path.display().to_string(), text.as_bytes());
    VulnerabilityProfile::parse(&text).with_context(|| format!("invalid profile {}", path.display()))
}

fn load_library(path: Option<&Path>, m: &mut RunManifest) -> Result<TechniqueLibrary> {
    match path {
        Some(p) => {
            let text = read(p)?;
            m.input("library", &p.display().to_string(), text.as_bytes());
            TechniqueLibrary::parse(&text).with_context(|| format!("invalid library {}", p.display()))
        }
        None => {
            m.input("library", "bundled", BUNDLED_LIBRARY.as_bytes());
            Ok(TechniqueLibrary::bundled())
        }
    }
}

fn load_common(c: &Common, m: &mut RunManifest) -> Result<(Design, VulnerabilityProfile, TechniqueLibrary)> {
    let design = load_design(&c.design, m)?;
    let profile = load_profile(&c.profile, m)?;
    let lib = load_library(c.library.as_deref(), m)?;
    m.seed("seed", c.seed);
    Ok((design, profile, lib))
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
            }
            fs::write(p, text).with_context(|| format!("cannot write {}", p.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn out_file(dir: &Path, name: &str, text: &str) -> Result<()> {
    write_out(Some(&dir.join(name)), text)
}

fn cmd_inject(a: InjectArgs) -> Result<()> {
    let mut m = RunManifest::new("inject");
    let design = match &a.design {
        Some(p) => load_design(p, &mut m)?,
        None => {
            let d = toy_design(a.regfile);
            m.input("design", "built-in", d.to_file_string().as_bytes());
            d
        }
    };
    let count = match (a.count, a.margin) {
        (Some(c), _) => c,
        (None, Some(margin)) => {
            m.flag("margin", margin).flag("confidence", a.confidence).flag("worst-p", a.worst_p);
            required_sample_size(margin, a.confidence, a.worst_p)?
        }
        (None, None) => bail!("give either --count or --margin"),
    };
    let benchmarks: Vec<String> = if a.benchmarks.is_empty() {
        bench::PROFILE_SET.iter().map(|s| s.to_string()).collect()
    } else {
        a.benchmarks.clone()
    };
    let mut config = CampaignConfig::new(a.seed, count);
    config.include_regfile = a.regfile;
    config.hang_multiplier = a.hang_multiplier;
    for d in &a.detectors {
        config.hooks.insert(d.parse::<DetectionHook>()?);
    }
    config.workers = workers()?;
    m.flag("count", count)
        .flag("benchmark", benchmarks.join(";"))
        .flag("regfile", a.regfile)
        .flag("hang-multiplier", a.hang_multiplier)
        .flag("detector", a.detectors.join(";"))
        .seed("seed", a.seed);
    let names: Vec<&str> = benchmarks.iter().map(String::as_str).collect();
    let profile = run_campaigns(&names, &config, &design)?;
    write_out(a.out.as_deref(), &m.embed(&profile.to_file_string()))
}

fn cmd_plan_parity(a: ParityArgs) -> Result<()> {
    let mut m = RunManifest::new("plan-parity");
    let design = load_design(&a.design, &mut m)?;
    let lib = load_library(a.library.as_deref(), &mut m)?;
    let profile = a.profile.as_deref().map(|p| load_profile(p, &mut m)).transpose()?;
    let heuristic: Heuristic = a.heuristic.parse()?;
    m.flag("heuristic", heuristic.as_str()).flag("group-size", a.group_size).seed("seed", a.seed);
    let ffs: Vec<_> = design.flip_flops().iter().map(|f| f.id).collect();
    let plan = if heuristic == Heuristic::Optimized {
        optimized_plan(&design, &ffs)?
    } else {
        plan_parity(&design, &ffs, profile.as_ref(), heuristic, a.group_size)?
    };
    let cost = parity_cost(&plan, &design, &lib)?;
    let spacing = check_spacing(&plan, &design)?;
    eprintln!(
        "{} groups, area {:.4}%, power {:.4}%, spacing violations {}",
        plan.groups.len(),
        cost.area * 100.0,
        cost.power * 100.0,
        spacing.violations.len()
    );
    write_out(a.out.as_deref(), &m.embed(&plan.to_file_string(&cost)))
}

fn parse_abft(s: Option<&str>) -> Result<Option<AbftMode>> {
    match s {
        None => Ok(None),
        Some("correction") => Ok(Some(AbftMode::Correction)),
        Some("detection") => Ok(Some(AbftMode::Detection)),
        Some(other) => bail!("--abft must be `correction` or `detection`, got `{other}`"),
    }
}

fn parse_kind(s: &str) -> Result<ErrorKind> {
    match s {
        "sdc" => Ok(ErrorKind::Sdc),
        "due" => Ok(ErrorKind::Due),
        _ => bail!("--kind must be `sdc` or `due`, got `{s}`"),
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(";")
}

fn cmd_select(a: SelectArgs) -> Result<Option<Infeasible>> {
    let mut m = RunManifest::new("select");
    let (design, profile, lib) = load_common(&a.common, &mut m)?;
    let abft = parse_abft(a.abft.as_deref())?;
    let opt = |t: Option<Target>| t.map_or("none".to_string(), |t| t.to_string());
    m.flag("target-sdc", opt(a.target_sdc))
        .flag("target-due", opt(a.target_due))
        .flag("technique", join(&a.protection.techniques))
        .flag("recovery", a.protection.recovery)
        .flag("layer", join(&a.layers))
        .flag("abft", a.abft.as_deref().unwrap_or("none"));

    let core = design.core_kind();
    let ffs: Vec<_> = design.flip_flops().iter().map(|f| f.id).collect();
    let mut base = Assignment::new(a.protection.recovery);
    for &t in &a.layers {
        base = layer_technique(&base, &lib, core, t, draw_coverage(&lib, t, core, &ffs, a.common.seed)?)?;
    }
    if let Some(mode) = abft {
        let cov = draw_coverage(&lib, mode.technique(), core, &ffs, a.common.seed)?;
        base = layer_abft(&base, &lib, core, cov, mode, &profile.benchmark_names())?;
    }
    let mut req = SelectRequest::new(a.target_sdc, a.target_due, &a.protection.techniques, a.protection.recovery);
    req.base = base;
    let s = select_to_target(&design, &profile, &lib, &req)?;

    out_file(&a.out, "assignment.csv", &m.embed(&s.assignment.to_file_string()))?;
    let cost = format!(
        "recovery,target_sdc,target_due,{},feasible\n{},{},{},{},{}\n",
        CostReport::CSV_HEADER,
        a.protection.recovery,
        opt(a.target_sdc),
        opt(a.target_due),
        s.report.csv_fields(),
        s.feasible()
    );
    out_file(&a.out, "cost.csv", &m.embed(&cost))?;
    println!(
        "protected {} of {} flip-flops; energy {:.4}%, SDC {}x, DUE {}x",
        s.assignment.per_ff.len(),
        design.len(),
        s.report.energy * 100.0,
        fmt_improvement(s.report.sdc_x),
        fmt_improvement(s.report.due_x)
    );
    if s.feasible() {
        return Ok(None);
    }
    let msg = s
        .shortfalls
        .iter()
        .map(|f| format!("{} target {}x, max achievable {}x", f.kind, f.target, fmt_improvement(f.max_achievable)))
        .collect::<Vec<_>>()
        .join("; ");
    Ok(Some(Infeasible(msg)))
}

fn cmd_explore(a: ExploreArgs) -> Result<()> {
    let mut m = RunManifest::new("explore");
    let (design, profile, lib) = load_common(&a.common, &mut m)?;
    m.flag("targets", join(&a.targets));
    let combos = enumerate_combinations(design.core_kind());
    let goals: Vec<(ErrorKind, Target)> = [ErrorKind::Sdc, ErrorKind::Due]
        .into_iter()
        .flat_map(|k| a.targets.iter().map(move |&t| (k, t)))
        .collect();
    let points = explore(&combos, &design, &profile, &lib, &goals, a.common.seed)?;
    let mut csv = format!("{}\n", EvaluatedPoint::CSV_HEADER);
    for p in &points {
        csv.push_str(&p.csv_row());
        csv.push('\n');
    }
    out_file(&a.out, "exploration.csv", &m.embed(&csv))?;
    for kind in [ErrorKind::Sdc, ErrorKind::Due] {
        let frontier: Vec<(f64, f64)> =
            frontier_of(&points, kind).iter().map(|p| (p.report.energy, p.improvement())).collect();
        out_file(&a.out, &format!("frontier_{kind}.dat"), &m.embed(&plot_data(&bound_region(&frontier))))?;
    }
    let feasible = points.iter().filter(|p| p.feasible).count();
    println!("{} combinations, {} points ({} feasible)", combos.len(), points.len(), feasible);
    Ok(())
}

fn cmd_depend(a: DependArgs) -> Result<Option<Infeasible>> {
    let mut m = RunManifest::new("depend");
    let (design, profile, lib) = load_common(&a.common, &mut m)?;
    let kind = parse_kind(&a.kind)?;
    m.flag("train-k", a.train_k)
        .flag("trials", a.trials)
        .flag("targets", join(&a.targets))
        .flag("kind", kind)
        .flag("technique", join(&a.protection.techniques))
        .flag("recovery", a.protection.recovery);
    let benchmarks = profile.benchmark_names();
    let splits = make_splits(&benchmarks, a.train_k, a.trials, a.common.seed)?;
    let setup = TrainSetup { techniques: a.protection.techniques.clone(), recovery: a.protection.recovery };
    let mut csv = format!("{}\n", DependenceReport::CSV_HEADER);
    let mut notes = String::new();
    let mut trials = format!("target,{}\n", DependenceReport::TRIAL_HEADER);
    let mut all_infeasible = Vec::new();
    for &t in &a.targets {
        let r = trained_vs_validated(&design, &profile, &lib, &splits, t, kind, &setup, a.common.seed)?;
        csv.push_str(&r.csv_row());
        csv.push('\n');
        notes.push_str(&r.summary_line());
        notes.push('\n');
        for row in r.trial_rows() {
            trials.push_str(&format!("{kind}:{t},{row}\n"));
        }
        if r.feasible_trials() == 0 {
            all_infeasible.push(format!("{kind} target {t}x"));
        }
    }
    out_file(&a.out, "dependence.csv", &m.embed(&format!("{notes}{csv}")))?;
    out_file(&a.out, "trials.csv", &m.embed(&trials))?;
    let sim = decile_similarity(&profile, &benchmarks)?;
    out_file(&a.out, "deciles.csv", &m.embed(&decile_csv(&sim)))?;
    print!("{notes}");
    if all_infeasible.is_empty() {
        Ok(None)
    } else {
        Ok(Some(Infeasible(format!("no training split reaches {}", all_infeasible.join(", ")))))
    }
}
