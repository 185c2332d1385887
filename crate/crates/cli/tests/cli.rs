use std::path::Path;
use std::process::{Command, Output};

use regge_cli::{run_study, CliError, Command as Study, Overrides, StudyConfig};

fn regge(args: &[&str], config: &str, dir: &Path) -> Output {
    let path = dir.join("config.json");
    std::fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_regge"))
        .args(args)
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

const QUARTER: &str = r#""metric": {"graph": "1/2*(x^2+y^2) - 1/12*(x^4+y^4)"}"#;

fn config(body: &str) -> String {
    format!("{{\n  {QUARTER},\n  {body}\n}}\n")
}

#[test]
fn missing_neumann_data_is_a_config_error_naming_the_tag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        r#""mesh": {"n0": 2, "levels": 1},
  "degrees": [0],
  "boundary": {"dirichlet": {"right": "1", "bottom": "1"}, "neumann": {"left": "0"}}"#,
    );
    let out = regge(&["curvature"], &cfg, dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("\"top\""), "{err}");
}

#[test]
fn unknown_fields_are_reported_with_their_line() {
    let cfg = config(
        r#""mesh": {"n0": 2, "levels": 1},
  "degrees": [0],
  "degres": [1]"#,
    );
    let err = StudyConfig::from_json(&cfg).unwrap_err();
    assert!(matches!(err, CliError::Config(_)));
    let msg = err.to_string();
    assert!(msg.contains("degres") && msg.contains("line 5"), "{msg}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn invalid_values_are_rejected() {
    let bad = [
        r#""mesh": {"n0": 0, "levels": 1}, "degrees": [0]"#,
        r#""mesh": {"n0": 2, "levels": 1, "perturb_amplitude": 0.7}, "degrees": [0]"#,
        r#""mesh": {"n0": 2, "levels": 1}, "degrees": []"#,
        r#""mesh": {"n0": 2, "levels": 1}, "degrees": [0], "space": "lagrange""#,
        r#""mesh": {"n0": 2, "levels": 1}, "degrees": [0], "essential_tags": ["north"]"#,
        r#""mesh": {"n0": 2, "levels": 1}, "degrees": [0], "boundary": {"dirichlet": {"top": "1"}, "neumann": {"top": "0"}}"#,
        r#""mesh": {"n0": 2, "levels": 1}, "degrees": [0], "sigma": ["x +", "0", "1"]"#,
    ];
    for body in bad {
        assert!(matches!(StudyConfig::from_json(&config(body)), Err(CliError::Config(_))), "{body}");
    }
}

#[test]
fn flat_metric_gives_zero_errors() {
    let cfg = StudyConfig::from_json(
        r#"{
  "metric": {"entries": ["1", "0", "1"]},
  "mesh": {"n0": 2, "levels": 2},
  "degrees": [0, 1],
  "boundary": {"dirichlet": {"right": "0", "bottom": "0"}, "neumann": {"left": "0", "top": "0"}}
}"#,
    )
    .unwrap();
    for study in [Study::Interpolate, Study::Curvature, Study::Connection] {
        let out = run_study(study, &cfg).unwrap();
        for t in &out.tables {
            for r in &t.records {
                for (name, e) in &r.errors {
                    assert!(*e < 1e-12, "{study:?} {} {name}: {e}", t.name);
                }
                assert!(r.eoc.iter().all(Option::is_none), "{} {:?}", t.name, r.errors);
            }
        }
    }
}

#[test]
fn repeated_runs_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(r#""mesh": {"n0": 2, "levels": 3, "seed": 5}, "degrees": [1], "output": {"vtk": true}"#);
    let read = |sub: &str| {
        let out = regge(&["connection"], &cfg, &dir.path().join(sub));
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let base = dir.path().join(sub).join("out");
        (std::fs::read(base.join("connection_bdm1.csv")).unwrap(), std::fs::read(base.join("connection_bdm1.vtk")).unwrap())
    };
    std::fs::create_dir_all(dir.path().join("a")).unwrap();
    std::fs::create_dir_all(dir.path().join("b")).unwrap();
    let (a, b) = (read("a"), read("b"));
    assert_eq!(a, b);
    let csv = String::from_utf8(a.0).unwrap();
    assert!(csv.starts_with("level,n,h,ndof,l2,l2_eoc\n"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn overrides_take_precedence() {
    let mut cfg = StudyConfig::from_json(&config(r#""mesh": {"n0": 2, "levels": 2, "seed": 1}, "degrees": [0]"#)).unwrap();
    let base = run_study(Study::Interpolate, &cfg).unwrap();
    Overrides { seed: Some(2), quad_degree: Some(9) }.apply(&mut cfg);
    assert_eq!((cfg.mesh.seed, cfg.quad_degree), (2, Some(9)));
    let other = run_study(Study::Interpolate, &cfg).unwrap();
    assert_ne!(base.tables[0].records[1].errors, other.tables[0].records[1].errors);
}

#[test]
fn indefinite_metrics_are_numerical_failures() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"metric": {"entries": ["1", "2", "1"]}, "mesh": {"n0": 2, "levels": 1}, "degrees": [0]}"#;
    let out = regge(&["connection"], cfg, dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn ops_check_reports_every_property() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(r#""mesh": {"n0": 3, "levels": 1, "seed": 2}, "degrees": [0, 1]"#);
    let out = regge(&["ops-check"], &cfg, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = String::from_utf8(out.stdout).unwrap();
    assert!(report.lines().count() >= 15);
    assert!(report.lines().all(|l| l.starts_with("PASS ")));
    assert!(run_study(Study::OpsCheck, &StudyConfig::from_json(&cfg).unwrap()).is_err());
}

#[test]
fn studies_needing_sigma_say_so() {
    let cfg = StudyConfig::from_json(&config(r#""mesh": {"n0": 2, "levels": 1}, "degrees": [1]"#)).unwrap();
    let err = run_study(Study::Curl, &cfg).unwrap_err();
    assert!(err.to_string().contains("sigma"));
}
