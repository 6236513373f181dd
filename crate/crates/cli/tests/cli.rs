use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn wimcf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wimcf")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn golden() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let k = lines.next().unwrap().split(',').position(|c| c == name).unwrap();
    lines.map(|l| l.split(',').nth(k).unwrap().parse().unwrap()).collect()
}

const GAP_6PI: &str = r#"
schema_version = 1
name = "gap-6pi"
kind = "gap-check"

[parameters]
lambda = 1.5
a0 = 12.566370614359172
"#;

#[test]
fn flat_line_flow_has_constant_willmore() {
    let out = tempfile::tempdir().unwrap();
    let o = wimcf(&["run", golden().join("flat-line.toml").to_str().unwrap(), "--out", out.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let dir = out.path().join("flat-line");
    let trace = fs::read_to_string(dir.join("trace.csv")).unwrap();
    assert!(trace.starts_with("t,n_components,total_area,chi,willmore,min_R,hawking,jump\n"));
    for w in column(&trace, "willmore") {
        assert!((w - 16.0 * PI).abs() <= 1e-3);
    }
    assert!(dir.join("events.csv").exists());
    assert!(fs::read_to_string(dir.join("report.txt")).unwrap().contains("verdict = \"pass\""));
}

#[test]
fn gap_above_c_fails_and_names_the_bound() {
    let tmp = tempfile::tempdir().unwrap();
    let file = write(tmp.path(), "gap.toml", GAP_6PI);
    let out = tmp.path().join("out");
    let o = wimcf(&["run", file.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("FAIL gap_certificate"));
    assert!(stdout(&o).contains("against c = 5.436982*pi"));

    let o = wimcf(&["gap", "--lambda", "1.5", "--a0", "12.566370614359172", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let o = wimcf(&["gap", "--lambda", "1.25", "--a0", "12.566370614359172", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
}

#[test]
fn cyclic_tree_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let file = write(
        tmp.path(),
        "cycle.toml",
        r#"
schema_version = 1
name = "cycle"
kind = "tree-flow"

[inputs.tree]
vertices = [0, 1, 2]
root_edge = 0

[[inputs.tree.edges]]
tail = 0
head = 1
[inputs.tree.edges.profile]
kind = "flat"
r_min = 1.0
r_max = 2.0
intervals = 16

[[inputs.tree.edges]]
tail = 1
head = 1
[inputs.tree.edges.profile]
kind = "flat"
r_min = 2.0
r_max = 3.0
intervals = 16
"#,
    );
    let o = wimcf(&["run", file.to_str().unwrap(), "--out", tmp.path().join("out").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("not a tree"), "{}", stderr(&o));
}

#[test]
fn bad_configs_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let flat = std::fs::read_to_string(golden().join("flat-line.toml")).unwrap();
    for (k, text) in [
        flat.replace("schema_version = 1", "schema_version = 2"),
        flat.replace("intervals = 4096", "intervals = 4"),
        flat.replace("r_start = 1.0", "t_max = -1.0"),
        flat.replace("kind = \"line-flow\"", "kind = \"sideways-flow\""),
        flat.replace("[inputs.profile]", "[inputs.nonsense]"),
        "schema_version = 1\nname = \"g\"\nkind = \"gap-check\"\n".to_string(),
        flat.replace("quantity = \"max_abs_hawking\"", "quantity = \"no_such_quantity\""),
    ]
    .into_iter()
    .enumerate()
    {
        let file = write(tmp.path(), &format!("bad{k}.toml"), &text);
        let o = wimcf(&["run", file.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 2, "case {k}: {}", stderr(&o));
        assert!(stderr(&o).starts_with("error:"));
    }
    let o = wimcf(&["run", tmp.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn golden_suite_passes() {
    let out = tempfile::tempdir().unwrap();
    let o = wimcf(&["batch", golden().to_str().unwrap(), "--out", out.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains(" 0 failed"));
    // staging directories never survive a run
    for e in fs::read_dir(out.path()).unwrap() {
        assert!(!e.unwrap().file_name().to_string_lossy().starts_with('.'));
    }
}

#[test]
fn injected_fault_is_the_only_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let suite = tmp.path().join("suite");
    fs::create_dir_all(suite.join("data")).unwrap();
    for e in fs::read_dir(golden()).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "toml") {
            fs::copy(&p, suite.join(p.file_name().unwrap())).unwrap();
        }
    }
    for e in fs::read_dir(golden().join("data")).unwrap() {
        let p = e.unwrap().path();
        fs::copy(&p, suite.join("data").join(p.file_name().unwrap())).unwrap();
    }
    write(&suite, "zz-fault.toml", GAP_6PI);
    let o = wimcf(&["batch", suite.to_str().unwrap(), "--out", tmp.path().join("out").to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let table = stdout(&o);
    let failing: Vec<&str> = table.lines().filter(|l| l.contains(" FAIL ")).collect();
    assert_eq!(failing.len(), 1, "{table}");
    assert!(failing[0].starts_with("gap-6pi"));
}

#[test]
fn empty_directory_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let o = wimcf(&["batch", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn runs_are_reproducible_and_seeded() {
    let tmp = tempfile::tempdir().unwrap();
    let file = golden().join("psc-dumbbell-line.toml");
    let run = |dir: &str, extra: &[&str]| {
        let out = tmp.path().join(dir);
        let mut args = vec!["run", file.to_str().unwrap(), "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        assert_eq!(code(&wimcf(&args)), 0);
        let d = out.join("psc-dumbbell-line");
        (fs::read(d.join("trace.csv")).unwrap(), fs::read(d.join("events.csv")).unwrap())
    };
    let a = run("a", &[]);
    assert_eq!(a, run("b", &[]));
    assert_ne!(a.0, run("c", &["--seed", "4"]).0);
}

#[test]
fn emitted_traces_reaudit_clean() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    for scenario in ["dumbbell-tree", "psc-dumbbell-line", "star-tree-three"] {
        let file = golden().join(format!("{scenario}.toml"));
        assert_eq!(code(&wimcf(&["run", file.to_str().unwrap(), "--out", out.to_str().unwrap()])), 0);
        let trace = out.join(scenario).join("trace.csv");
        let o = wimcf(&["audit", trace.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{scenario}: {}", stdout(&o));
        // and as an audit-only scenario
        let text = format!(
            "schema_version = 1\nname = \"re-{scenario}\"\nkind = \"audit-only\"\n[inputs]\ntrace_file = {:?}\n",
            trace.to_str().unwrap()
        );
        let sc = write(tmp.path(), &format!("re-{scenario}.toml"), &text);
        assert_eq!(code(&wimcf(&["run", sc.to_str().unwrap(), "--out", out.to_str().unwrap()])), 0);
    }
}

#[test]
fn inflated_willmore_trace_fails_the_audit() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let file = golden().join("psc-dumbbell-line.toml");
    assert_eq!(code(&wimcf(&["run", file.to_str().unwrap(), "--out", out.to_str().unwrap()])), 0);
    let csv = fs::read_to_string(out.join("psc-dumbbell-line").join("trace.csv")).unwrap();
    let mut lines = csv.lines();
    let mut bad = String::from(lines.next().unwrap());
    bad.push('\n');
    for l in lines {
        let mut f: Vec<String> = l.split(',').map(String::from).collect();
        let w: f64 = f[4].parse().unwrap();
        f[4] = format!("{:.16e}", 1.01 * w);
        bad.push_str(&f.join(","));
        bad.push('\n');
    }
    let trace = write(tmp.path(), "bad.csv", &bad);
    let o = wimcf(&["audit", trace.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("FAIL geroch"));
}
