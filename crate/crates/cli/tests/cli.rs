use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gesopt::trainer::RunConfig;
use tempfile::TempDir;

fn gesopt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gesopt"))
        .args(args)
        .env_remove("GESOPT_SEED")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const PDE: &str = r#"
case = "pde-solve"
seed = 4

[problem]
bc = { kind = "dirichlet" }
source = { kind = "constant", value = 1.0 }

[fieldnet]
hidden = [8, 8]
lr = 5e-3

[train]
epochs = 50
points = 300

[eval]
boundary_points = 100
mc_points = 2000
test_functions = 50
field_points = 200
"#;

const SHAPE: &str = r#"
case = "shape-dirichlet"
seed = 2

[problem]
bc = { kind = "dirichlet" }

[fieldnet]
hidden = [6, 6]
lr = 5e-3

[sympnet]
modules = 2
width = 3
lr = 5e-3

[train]
epochs = 10
points = 200

[eval]
boundary_points = 100
mc_points = 1000
field_points = 100
"#;

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run_case(tmp: &TempDir, name: &str, text: &str) -> PathBuf {
    let cfg = write_config(tmp.path(), &format!("{name}.toml"), text);
    let out = tmp.path().join(name);
    let o = gesopt(&[
        "run",
        cfg.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

fn numeric_rows(path: &Path, header: &[&str]) -> usize {
    let mut r = csv::Reader::from_path(path).unwrap();
    assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), header);
    let mut n = 0;
    for rec in r.records() {
        let rec = rec.unwrap();
        assert_eq!(rec.len(), header.len());
        for (k, f) in rec.iter().enumerate() {
            if f.is_empty() && (header[k] == "mu" || header[k] == "err") {
                continue;
            }
            for part in f.split(' ') {
                part.parse::<f64>()
                    .unwrap_or_else(|_| panic!("{}: bad number {f:?}", path.display()));
            }
        }
        n += 1;
    }
    n
}

#[test]
fn pde_solve_writes_all_artifacts() {
    let tmp = TempDir::new().unwrap();
    let out = run_case(&tmp, "pde", PDE);
    for f in [
        "metrics.json",
        "loss_history.csv",
        "boundary_points.csv",
        "field.csv",
        "shapes.svg",
        "checkpoint.json",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    assert_eq!(
        numeric_rows(&out.join("loss_history.csv"), &["epoch", "loss"]),
        50
    );
    assert_eq!(
        numeric_rows(&out.join("boundary_points.csv"), &["mu", "t", "x1", "x2"]),
        100
    );
    assert_eq!(
        numeric_rows(&out.join("field.csv"), &["mu", "x1", "x2", "u", "err"]),
        200
    );
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m["case"], "pde-solve");
    for k in ["mean", "max", "min", "std"] {
        assert!(m["variational_residual"][k].is_f64());
    }
}

#[test]
fn svg_is_well_formed_with_colored_shapes() {
    let tmp = TempDir::new().unwrap();
    let out = run_case(&tmp, "shape", SHAPE);
    let text = fs::read_to_string(out.join("shapes.svg")).unwrap();
    let doc = roxmltree::Document::parse(&text).unwrap();
    let strokes: Vec<&str> = doc
        .descendants()
        .filter_map(|n| n.attribute("stroke"))
        .collect();
    assert!(strokes.contains(&"green") && strokes.contains(&"red"));
}

#[test]
fn eval_reproduces_training_metrics() {
    let tmp = TempDir::new().unwrap();
    let out = run_case(&tmp, "shape", SHAPE);
    let before = fs::read_to_string(out.join("metrics.json")).unwrap();
    let again = tmp.path().join("again");
    let o = gesopt(&[
        "eval",
        out.join("checkpoint.json").to_str().unwrap(),
        tmp.path().join("shape.toml").to_str().unwrap(),
        "--out-dir",
        again.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read_to_string(again.join("metrics.json")).unwrap(),
        before
    );
    assert_eq!(
        fs::read_to_string(again.join("boundary_points.csv")).unwrap(),
        fs::read_to_string(out.join("boundary_points.csv")).unwrap()
    );
}

#[test]
fn eval_case_infers_the_problem_from_the_checkpoint() {
    let tmp = TempDir::new().unwrap();
    let out = run_case(&tmp, "shape", SHAPE);
    let ckpt = out.join("checkpoint.json");
    let text = SHAPE.replace("case = \"shape-dirichlet\"", "case = \"eval\"")
        + &format!("checkpoint = {:?}\n", ckpt.to_str().unwrap());
    let again = run_case(&tmp, "evalcase", &text);
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(again.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m["case"], "shape-dirichlet");
}

#[test]
fn config_errors_exit_with_status_two() {
    let tmp = TempDir::new().unwrap();
    let bad = write_config(
        tmp.path(),
        "bad.toml",
        &PDE.replace("points = 300", "points = 300\nbogus = 1"),
    );
    let o = gesopt(&["run", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    assert!(msg.contains("bogus") && msg.contains("line"), "{msg}");
    let o = gesopt(&["run", tmp.path().join("absent.toml").to_str().unwrap()]);
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn training_abort_exits_with_status_three() {
    let tmp = TempDir::new().unwrap();
    let text = PDE.replace("lr = 5e-3", "lr = 1e300");
    let cfg = write_config(tmp.path(), "nan.toml", &text);
    let out = tmp.path().join("nan");
    let o = gesopt(&[
        "run",
        cfg.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("epoch"));
    assert!(out.join("loss_history.csv").is_file());
}

#[test]
fn seed_overrides_follow_precedence() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "s.toml", SHAPE);
    let seed_of = |out: &Path| -> u64 {
        let c: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join("checkpoint.json")).unwrap())
                .unwrap();
        c["seed"].as_u64().unwrap()
    };
    let a = tmp.path().join("a");
    let o = Command::new(env!("CARGO_BIN_EXE_gesopt"))
        .args([
            "run",
            cfg.to_str().unwrap(),
            "--out-dir",
            a.to_str().unwrap(),
        ])
        .env("GESOPT_SEED", "77")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(seed_of(&a), 77);
    let b = tmp.path().join("b");
    let o = Command::new(env!("CARGO_BIN_EXE_gesopt"))
        .args([
            "run",
            cfg.to_str().unwrap(),
            "--out-dir",
            b.to_str().unwrap(),
            "--seed",
            "5",
            "--workers",
            "2",
        ])
        .env("GESOPT_SEED", "77")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(seed_of(&b), 5);
}

#[test]
fn learn_map_writes_per_parameter_table() {
    let tmp = TempDir::new().unwrap();
    let text = r#"
case = "learn-map"

[problem]
mu_space = [[0.5, 2.0]]
transform = { kind = "benchmark", lambda = { mu = 0 } }

[sympnet]
modules = 2
width = 4
lr = 1e-2

[train]
epochs = 5
points = 200

[eval]
boundary_points = 64
mu_samples = 12
"#;
    let out = run_case(&tmp, "map", text);
    let header = [
        "mu",
        "hausdorff",
        "optimality_error",
        "l2_error",
        "energy",
        "exact_energy",
    ];
    let mut r = csv::Reader::from_path(out.join("per_mu.csv")).unwrap();
    assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), header);
    let rows: Vec<_> = r.records().map(|x| x.unwrap()).collect();
    assert_eq!(rows.len(), 12);
    for row in rows {
        let lambda: f64 = row[0].parse().unwrap();
        assert!((0.5..2.0).contains(&lambda));
        assert!(row[1].parse::<f64>().unwrap() >= 0.0);
    }
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    for k in ["mean", "max", "min", "std"] {
        assert!(m["hausdorff"][k].is_f64());
    }
}

#[test]
fn report_sorts_runs_by_case() {
    let tmp = TempDir::new().unwrap();
    let shape = run_case(&tmp, "shape", SHAPE);
    let pde = run_case(&tmp, "pde", PDE);
    let s = shape.join("metrics.json");
    let p = pde.join("metrics.json");
    let o = gesopt(&["report", s.to_str().unwrap(), p.to_str().unwrap()]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("case"));
    assert!(lines[1].starts_with("pde-solve"));
    assert!(lines[2].starts_with("shape-dirichlet"));

    let o = gesopt(&["report", s.to_str().unwrap()]);
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 2);

    let missing = tmp.path().join("nope.json");
    let o = gesopt(&["report", s.to_str().unwrap(), missing.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stderr(&o).contains("warning"));
    let o = gesopt(&["report", missing.to_str().unwrap()]);
    assert_ne!(o.status.code(), Some(0));
    let o = gesopt(&["report"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn shipped_configs_round_trip() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = RunConfig::parse(&fs::read_to_string(&path).unwrap())
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            let once = cfg.to_toml().unwrap();
            let twice = RunConfig::parse(&once).unwrap().to_toml().unwrap();
            assert_eq!(once, twice, "{}", path.display());
            n += 1;
        }
    }
    assert!(n >= 3);
}
