use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_xlres");

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env("SOURCE_DATE_EPOCH", "0")
        .output()
        .expect("binary runs")
}

fn toy_args<'a>(cmd: &'a str, design: &'a str, profile: &'a str) -> Vec<&'a str> {
    vec![cmd, "--design", design, "--profile", profile]
}

fn body(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

fn paths() -> (String, String) {
    (data("toy_design.csv").display().to_string(), data("toy_profile.csv").display().to_string())
}

#[test]
fn bundled_design_matches_generator() {
    let file = std::fs::read_to_string(data("toy_design.csv")).unwrap();
    assert_eq!(file, xlres::toycore::layout::toy_design(false).to_file_string());
}

#[test]
fn bundled_profile_parses() {
    let p = xlres::profile::VulnerabilityProfile::parse(&std::fs::read_to_string(data("toy_profile.csv")).unwrap())
        .unwrap();
    assert_eq!(p.benchmark_names().len(), 4);
}

#[test]
fn inject_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let outs: Vec<String> = (0..2)
        .map(|i| {
            let out = dir.path().join(format!("p{i}.csv"));
            let o = run(&[
                "inject", "--benchmark", "dot_product", "--count", "500", "--seed", "3", "--out",
                out.to_str().unwrap(),
            ]);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
            std::fs::read_to_string(out).unwrap()
        })
        .collect();
    assert_eq!(outs[0], outs[1]);
    assert!(outs[0].contains("# flag count=500\n"));
    assert!(outs[0].contains("timestamp=1970-01-01T00:00:00Z"));
}

#[test]
fn inject_margin_sets_count() {
    let o = run(&["inject", "--benchmark", "dot_product", "--margin", "0.01"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("# flag count=9604\n"));
}

#[test]
fn missing_input_exits_2() {
    let o = run(&["select", "--design", "/nonexistent.csv", "--profile", "/nonexistent.csv", "--target-sdc", "5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
}

fn cost_row(dir: &Path) -> Vec<String> {
    let text = std::fs::read_to_string(dir.join("cost.csv")).unwrap();
    let rows = body(&text);
    let header: Vec<&str> = rows[0].split(',').collect();
    let values: Vec<&str> = rows[1].split(',').collect();
    ["sdc_x", "feasible"]
        .iter()
        .map(|k| values[header.iter().position(|h| h == k).unwrap()].to_string())
        .collect()
}

#[test]
fn select_meets_target_with_flush() {
    let (d, p) = paths();
    let dir = tempfile::tempdir().unwrap();
    let mut args = toy_args("select", &d, &p);
    args.extend(["--target-sdc", "50", "--recovery", "flush", "--out", dir.path().to_str().unwrap()]);
    let o = run(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let row = cost_row(dir.path());
    assert!(row[0].parse::<f64>().unwrap() >= 50.0);
    assert_eq!(row[1], "true");
    let assignment = std::fs::read_to_string(dir.path().join("assignment.csv")).unwrap();
    assert!(body(&assignment).len() > 1);
}

#[test]
fn select_unit_target_is_empty() {
    let (d, p) = paths();
    let dir = tempfile::tempdir().unwrap();
    let mut args = toy_args("select", &d, &p);
    args.extend(["--target-sdc", "1", "--out", dir.path().to_str().unwrap()]);
    assert!(run(&args).status.success());
    let assignment = std::fs::read_to_string(dir.path().join("assignment.csv")).unwrap();
    assert_eq!(body(&assignment).len(), 1, "header only");
}

#[test]
fn select_unreachable_target_exits_1() {
    let (d, p) = paths();
    let dir = tempfile::tempdir().unwrap();
    let mut args = toy_args("select", &d, &p);
    args.extend(["--target-sdc", "1e9", "--out", dir.path().to_str().unwrap()]);
    let o = run(&args);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(cost_row(dir.path())[1], "false");
}

#[test]
fn explore_covers_all_combinations_and_repeats() {
    let (d, p) = paths();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        let mut args = toy_args("explore", &d, &p);
        args.extend(["--targets", "50", "--out", dir.path().to_str().unwrap()]);
        let o = run(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["exploration.csv", "frontier_sdc.dat", "frontier_due.dat"] {
        let a = std::fs::read(dirs[0].path().join(f)).unwrap();
        assert_eq!(a, std::fs::read(dirs[1].path().join(f)).unwrap(), "{f} differs");
    }
    let text = std::fs::read_to_string(dirs[0].path().join("exploration.csv")).unwrap();
    let rows = body(&text);
    for kind in ["sdc:50", "due:50"] {
        let n = rows.iter().filter(|r| r.split(',').nth(2) == Some(kind)).count();
        assert_eq!(n, 417, "{kind}");
    }
    let frontier = std::fs::read_to_string(dirs[0].path().join("frontier_sdc.dat")).unwrap();
    let pts: Vec<(f64, f64)> = body(&frontier)
        .iter()
        .map(|l| {
            let mut it = l.split_whitespace().map(|v| v.parse::<f64>().unwrap());
            (it.next().unwrap(), it.next().unwrap())
        })
        .collect();
    assert!(!pts.is_empty());
    assert!(pts.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
}

#[test]
fn depend_is_reproducible() {
    let (d, p) = paths();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        let mut args = toy_args("depend", &d, &p);
        args.extend(["--trials", "2", "--seed", "7", "--targets", "5,50", "--out", dir.path().to_str().unwrap()]);
        let o = run(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["dependence.csv", "trials.csv", "deciles.csv"] {
        let a = std::fs::read(dirs[0].path().join(f)).unwrap();
        assert_eq!(a, std::fs::read(dirs[1].path().join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn depend_rejects_oversized_training_set() {
    let (d, p) = paths();
    let mut args = toy_args("depend", &d, &p);
    args.extend(["--train-k", "4"]);
    assert_eq!(run(&args).status.code(), Some(2));
}
