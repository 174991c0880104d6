use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mlprox::commands::solve;
use mlprox::spec::{parse_spec, prepare, Overrides};
use mlprox::trace_io::{read_trace, write_trace};
use multilevel_prox::{gallery, gallery_names, OracleSet};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mlprox"))
}

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(rel)
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin()
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn mlprox")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn malformed_fixtures_are_rejected_with_field_messages() {
    let cases = [
        ("not_json", "schema: EOF"),
        ("unknown_key", "unknown field `iterations`"),
        (
            "unknown_gallery",
            "gallery: unknown gallery entry \"nested5\"",
        ),
        ("both_sources", "gallery: give either"),
        ("missing_dimension", "dimension: required"),
        ("too_few_layers", "layers: need a selector"),
        ("missing_schedule", "schedule: required"),
        ("missing_x0", "x0: required"),
        ("x0_length", "x0: expected length 3, found 2"),
        (
            "bad_step_string",
            "layers[1].step: expected a number or \"auto\"",
        ),
        (
            "step_too_large",
            "layers[1].step: parameter prox-grad step = 1",
        ),
        (
            "selector_step",
            "layers[0].step: parameter contraction step = 3",
        ),
        (
            "selector_nonsmooth",
            "layers[0].nonsmooth: the selector layer must be smooth",
        ),
        ("q_shape", "layers[1].smooth.q[0]: expected 2 columns"),
        (
            "q_not_psd",
            "layers[1].smooth: invalid input: Q is not positive semidefinite",
        ),
        (
            "box_inverted",
            "layers[1].nonsmooth: invalid input: box lower bound",
        ),
        (
            "center_length",
            "layers[0].smooth.center: expected length 2",
        ),
        ("unknown_smooth_kind", "unknown variant `cubic`"),
        ("negative_lambda", "schedule: parameter lambda = -1"),
        (
            "rate_out_of_range",
            "schedule: parameter rate schedule r = 1.5",
        ),
        ("fractional_iters", "iters: must be a positive integer"),
        (
            "short_table",
            "schedule: schedule error: table schedule has 2 entries",
        ),
        ("map_with_step", "layers[1]: a map layer takes no"),
        ("negative_guard", "divergence_guard: must be positive"),
    ];
    let dir = tempfile::tempdir().unwrap();
    let listed = std::fs::read_dir(fixture("invalid")).unwrap().count();
    assert_eq!(
        listed,
        cases.len(),
        "every invalid fixture needs an expected message"
    );
    for (name, msg) in cases {
        let spec = fixture(&format!("invalid/{name}.json"));
        let o = run(&["run", spec.to_str().unwrap()], dir.path());
        assert_eq!(o.status.code(), Some(1), "{name}: {}", stderr(&o));
        assert!(stderr(&o).contains(msg), "{name}: {}", stderr(&o));
        assert!(
            !dir.path().join("trace.csv").exists(),
            "{name} wrote a trace"
        );
    }
}

#[test]
fn valid_fixtures_run() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["inline_trilevel", "full_rank", "lasso_box", "nested3_rate"] {
        let spec = fixture(&format!("valid/{name}.json"));
        let out = dir.path().join(format!("{name}.csv"));
        let o = run(
            &[
                "run",
                spec.to_str().unwrap(),
                "--iters",
                "300",
                "--out",
                out.to_str().unwrap(),
            ],
            dir.path(),
        );
        assert_eq!(o.status.code(), Some(0), "{name}: {}", stderr(&o));
        let meta = json(&dir.path().join(format!("{name}.meta.json")));
        assert_eq!(meta["iterations"], 300);
        assert_eq!(meta["status"]["status"], "max_iters");
    }
}

#[test]
fn inline_spec_matches_gallery_nested3() {
    let text = std::fs::read_to_string(fixture("valid/inline_trilevel.json")).unwrap();
    let inline = prepare(&parse_spec(&text).unwrap(), &Overrides::default()).unwrap();
    let from_gallery = prepare(
        &parse_spec(r#"{"gallery": "nested3", "schedule": {"kind": "rate"}, "iters": 5000}"#)
            .unwrap(),
        &Overrides::default(),
    )
    .unwrap();
    let a = solve(&inline).unwrap();
    let b = solve(&from_gallery).unwrap();
    assert_eq!(a.final_x, b.final_x);
}

fn round_trip(spec: &str, iters: usize) {
    let prep = prepare(
        &parse_spec(spec).unwrap(),
        &Overrides {
            iters: Some(iters),
            ..Default::default()
        },
    )
    .unwrap();
    let trace = solve(&prep).unwrap();
    let mut buf = Vec::new();
    write_trace(&mut buf, &trace, prep.problem.dim()).unwrap();
    let back = read_trace(buf.as_slice()).unwrap();
    assert_eq!(back.records.len(), trace.records.len());
    let bits = |v: Option<f64>| v.map(f64::to_bits);
    for (a, b) in trace.records.iter().zip(&back.records) {
        assert_eq!(a.k, b.k);
        assert_eq!(a.alpha.to_bits(), b.alpha.to_bits());
        assert_eq!(a.beta.to_bits(), b.beta.to_bits());
        assert_eq!(a.res_w.to_bits(), b.res_w.to_bits());
        assert_eq!(bits(a.res_t), bits(b.res_t));
        assert_eq!(a.step_norm.to_bits(), b.step_norm.to_bits());
        assert_eq!(bits(a.phi1_y), bits(b.phi1_y));
        assert_eq!(bits(a.phi2_z), bits(b.phi2_z));
        assert_eq!(bits(a.omega_x), bits(b.omega_x));
        let xa: Vec<u64> = a.x.as_ref().unwrap().iter().map(|v| v.to_bits()).collect();
        let xb: Vec<u64> = b.x.as_ref().unwrap().iter().map(|v| v.to_bits()).collect();
        assert_eq!(xa, xb);
    }
    assert_eq!(back.final_x, trace.final_x);
}

#[test]
fn trace_csv_round_trips_bitwise() {
    for name in gallery_names() {
        if *name == "unbounded" {
            continue;
        }
        round_trip(&format!(r#"{{"gallery": "{name}"}}"#), 400);
    }
    round_trip(
        &std::fs::read_to_string(fixture("valid/lasso_box.json")).unwrap(),
        100,
    );
}

#[test]
fn trace_reader_rejects_bad_headers_and_cells() {
    let bad_header = "k,alpha,beta\n1,0.5,0.5\n";
    assert!(read_trace(bad_header.as_bytes()).is_err());
    let header = "k,alpha,beta,res_W,res_T,step_norm,phi1_y,phi2_z,omega_x";
    let bad_cell = format!("{header}\n1,0.5,zz,0,,0,,,\n");
    let err = read_trace(bad_cell.as_bytes()).unwrap_err().to_string();
    assert!(err.contains("column beta"), "{err}");
}

#[test]
fn nested3_rate_run_reaches_rate_limit() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(
        dir.path(),
        "n3.json",
        r#"{"gallery": "nested3", "schedule": {"kind": "rate"}}"#,
    );
    let o = run(
        &[
            "run",
            spec.to_str().unwrap(),
            "--iters",
            "1e5",
            "--trace-every",
            "100",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let meta = json(&dir.path().join("trace.meta.json"));
    let x: Vec<f64> = serde_json::from_value(meta["final_x"].clone()).unwrap();
    let err = ((x[0] - 1.0).powi(2) + (x[1] - 3.0).powi(2) + (x[2] - 1.0).powi(2)).sqrt();
    assert!(err < 1e-3, "{x:?}");
    assert!(meta["final_res_w"].as_f64().unwrap() < 1e-4);
    assert_eq!(meta["bound_constants"]["j"], 6);
    assert_eq!(meta["regime"]["delta"]["kind"], "finite");
}

#[test]
fn unbounded_run_exits_diverged() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "u.json", r#"{"gallery": "unbounded"}"#);
    let o = run(
        &[
            "run",
            spec.to_str().unwrap(),
            "--iters",
            "1e6",
            "--trace-every",
            "1000",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let meta = json(&dir.path().join("trace.meta.json"));
    assert_eq!(meta["status"]["status"], "diverged");
}

#[test]
fn summable_alpha_warns_but_runs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(
        dir.path(),
        "p.json",
        r#"{"gallery": "nested3", "schedule": {"kind": "power", "lambda": 1.5, "gamma": 2}}"#,
    );
    let o = run(
        &["run", spec.to_str().unwrap(), "--iters", "50"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("lambda = 1.5 > 1"), "{}", stderr(&o));
    let meta = json(&dir.path().join("trace.meta.json"));
    assert_eq!(meta["regime"]["assumptions"]["vanishing_alpha"], false);
    assert_eq!(meta["warnings"].as_array().unwrap().len(), 1);
}

#[test]
fn run_refuses_to_overwrite_spec() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "t.json", r#"{"gallery": "nested3"}"#);
    let o = run(
        &["run", "t.json", "--iters", "5", "--report", "t.json"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(std::fs::read_to_string(spec).unwrap().contains("nested3"));
}

#[test]
fn oracle_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "n3.json", r#"{"gallery": "nested3"}"#);
    let o = run(
        &["oracle", spec.to_str().unwrap(), "--out", "o.json"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let v = json(&dir.path().join("o.json"));
    assert_eq!(v["x_star"], serde_json::json!([1.0, 2.0, 2.0]));
    assert_eq!(v["sets"].as_array().unwrap().len(), 2);

    let spec = write(dir.path(), "u.json", r#"{"gallery": "unbounded"}"#);
    let o = run(&["oracle", spec.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no finite solution"));

    // A = [[2, 1], [1, 3]], b = (1, 2): A^-1 b = (1/5, 3/5).
    let o = run(
        &["oracle", fixture("valid/full_rank.json").to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let x: Vec<f64> = serde_json::from_value(v["x_star"].clone()).unwrap();
    assert!(
        (x[0] - 0.2).abs() < 1e-12 && (x[1] - 0.6).abs() < 1e-12,
        "{x:?}"
    );

    let o = run(
        &["oracle", fixture("valid/lasso_box.json").to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oracle_sets_survive_json() {
    for name in gallery_names() {
        let e = gallery(name).unwrap();
        for s in &e.sets {
            let text = serde_json::to_string(&s.to_json()).unwrap();
            let back = OracleSet::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
            let probe = multilevel_prox::Vector::from_element(e.problem.dim(), 0.37);
            use multilevel_prox::oracle::Projector;
            assert!((back.distance(&probe) - s.distance(&probe)).abs() < 1e-12);
        }
    }
}

struct CheckRun {
    dir: tempfile::TempDir,
}

impl CheckRun {
    fn new(spec_text: &str, iters: &str, every: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let spec = write(dir.path(), "p.json", spec_text);
        let o = run(
            &[
                "run",
                spec.to_str().unwrap(),
                "--iters",
                iters,
                "--trace-every",
                every,
            ],
            dir.path(),
        );
        assert!(matches!(o.status.code(), Some(0)), "{}", stderr(&o));
        let o = run(&["oracle", "p.json", "--out", "o.json"], dir.path());
        assert_eq!(o.status.code(), Some(0));
        CheckRun { dir }
    }

    fn check(&self, trace: &str, extra: &[&str]) -> (Option<i32>, Value) {
        let mut args = vec![
            "check",
            trace,
            "--oracle",
            "o.json",
            "--problem",
            "p.json",
            "--report",
            "r.json",
        ];
        args.extend_from_slice(extra);
        let o = run(&args, self.dir.path());
        let report = json(&self.dir.path().join("r.json"));
        (o.status.code(), report)
    }
}

#[test]
fn check_nested3_rate_trace_passes() {
    let c = CheckRun::new(
        r#"{"gallery": "nested3", "schedule": {"kind": "rate"}}"#,
        "1e4",
        "1",
    );
    let (code, rep) = c.check("trace.csv", &[]);
    assert_eq!(code, Some(0), "{rep:#}");
    let slope = rep["checks"]["rate_fit"]["detail"]["phi2_gap"]["slope"]
        .as_f64()
        .unwrap();
    assert!(slope <= -0.9, "{slope}");
    for name in ["boundedness", "rate_bound", "step_bound", "distance"] {
        assert_eq!(rep["checks"][name]["passed"], true, "{name}");
    }
    assert_eq!(
        rep["checks"]["distance"]["detail"]["inequality_violations"],
        0
    );
}

#[test]
fn check_flags_tampered_phi2() {
    let c = CheckRun::new(
        r#"{"gallery": "nested3", "schedule": {"kind": "rate"}}"#,
        "2000",
        "1",
    );
    let text = std::fs::read_to_string(c.dir.path().join("trace.csv")).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    let col = header.split(',').position(|h| h == "phi2_z").unwrap();
    let mut out = vec![header.to_string()];
    for line in lines {
        let mut cells: Vec<String> = line.split(',').map(String::from).collect();
        let v: f64 = cells[col].parse().unwrap();
        cells[col] = format!("{:.16e}", v + 100.0);
        out.push(cells.join(","));
    }
    write(c.dir.path(), "bad.csv", &(out.join("\n") + "\n"));
    let (code, rep) = c.check("bad.csv", &["--checks", "rate_bound"]);
    assert_eq!(code, Some(4));
    assert_eq!(rep["checks"]["rate_bound"]["passed"], false);
    assert_eq!(rep["passed"], false);
}

#[test]
fn check_clamp_distance_to_zero() {
    let c = CheckRun::new(r#"{"gallery": "clamp"}"#, "1e5", "100");
    let (code, rep) = c.check("trace.csv", &["--checks", "distance", "--tol", "1e-3"]);
    assert_eq!(code, Some(0), "{rep:#}");
    let lim = &rep["checks"]["distance"]["detail"]["limit"];
    assert_eq!(lim, &serde_json::json!([0.0]));
}

#[test]
fn check_rejects_unknown_check_names() {
    let c = CheckRun::new(r#"{"gallery": "nested3"}"#, "100", "1");
    let o = run(
        &[
            "check",
            "trace.csv",
            "--oracle",
            "o.json",
            "--problem",
            "p.json",
            "--checks",
            "speed",
        ],
        c.dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unknown check \"speed\""));
}

#[test]
fn gallery_verbs() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["gallery", "list"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    for name in gallery_names() {
        assert!(text.contains(name));
    }
    let o = run(&["gallery", "describe", "nested4"], dir.path());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["levels"], 3);
    assert_eq!(v["weights"], "nested");
    let o = run(&["gallery", "describe", "nested9"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}
