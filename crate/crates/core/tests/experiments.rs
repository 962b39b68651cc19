use slabsolve::experiment::{self, ExperimentConfig, Kind};
use slabsolve::Error;

const SMALL: &str = r#"
[experiment]
name = "tiny"
kind = "solve_sweep"

[problem]
preset = "vc2d"

[decomp]
H = [0.25, 0.125]

[disc]
backend = "fd"
h = 0.03125

[hbs]
enabled = true
k = [6]

[gmres]
tol_scale = 1e-10
tol_power = 0
"#;

#[test]
fn reruns_are_identical_apart_from_timings() {
    let cfg = ExperimentConfig::parse(SMALL).unwrap();
    let a = experiment::run(&cfg).unwrap();
    let b = experiment::run(&cfg).unwrap();
    let t = a.table("solve").unwrap();
    assert_eq!(t.rows.len(), 2);
    assert_eq!(t.without_timings(), b.table("solve").unwrap().without_timings());
    assert!(t.floats("residual").unwrap().iter().all(|&r| r < 1e-9));
}

#[test]
fn tables_are_written_with_schema_line() {
    let cfg = ExperimentConfig::parse(SMALL).unwrap();
    let out = experiment::run(&cfg).unwrap();
    let dir = std::env::temp_dir().join(format!("slabsolve-exp-{}", std::process::id()));
    let paths = out.write(&dir).unwrap();
    let csv = std::fs::read_to_string(&paths[0]).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("# schema=1"));
    assert!(lines.next().unwrap().starts_with("problem,backend,H,"));
    assert_eq!(lines.count(), 2);
    assert!(dir.join("tiny_summary.txt").exists());
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn every_config_error_is_reported_at_once() {
    let text = SMALL.replace("h = 0.03125", "h = 0.3").replace("k = [6]", "k = [6]\nshape = 2").replace(
        "preset = \"vc2d\"",
        "preset = \"poisson\"",
    );
    match ExperimentConfig::parse(&text) {
        Err(Error::Config(errors)) => {
            assert!(errors.iter().any(|e| e.contains("unknown key hbs.shape")), "{errors:?}");
            assert!(errors.iter().any(|e| e.contains("problem.preset")), "{errors:?}");
            assert!(errors.iter().any(|e| e.contains("disc.h")), "{errors:?}");
        }
        other => panic!("expected config errors, got {other:?}"),
    }
}

#[test]
fn presets_accept_overrides() {
    let cfg = experiment::preset("gmres_scaling_laplace", &["decomp.H=[0.25]".into(), "disc.p=6".into()]).unwrap();
    assert_eq!(cfg.kind, Kind::SolveSweep);
    assert_eq!(cfg.decomp.widths, vec![0.25]);
    assert_eq!(cfg.disc.p, vec![6]);
    let back = ExperimentConfig::parse(&cfg.to_toml()).unwrap();
    assert_eq!(back, cfg);
    assert!(experiment::preset("no_such_preset", &[]).is_err());
}

#[test]
fn reduced_oracle_run_matches_schur_complement() {
    let cfg = experiment::preset("oracle_equivalence", &["disc.h=0.0625".into(), "disc.tiling=[4,4]".into()]).unwrap();
    let out = experiment::run(&cfg).unwrap();
    let diffs = out.table("blocks").unwrap().floats("rel_diff").unwrap();
    assert!(!diffs.is_empty());
    assert!(diffs.iter().all(|&d| d < 1e-10), "{diffs:?}");
}
