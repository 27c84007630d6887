use std::path::Path;
use std::process::{Command, Output};

use proptest::prelude::*;
use serde_json::Value;
use thermal_kms::cli::{RunConfig, SweepAxis, CSV_HEADER, EXIT_USAGE};
use thermal_kms::propagators::{bose_minus, bose_plus, MEASURE};

const BIN: &str = env!("CARGO_BIN_EXE_thermal-kms");

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).output().expect("binary runs")
}

fn run_ok(dir: &Path, args: &[&str]) -> Output {
    let out = run_in(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn golden(name: &str) -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)).unwrap()
}

fn f1_reference(beta: f64, m: f64, p: f64) -> f64 {
    let w = p.hypot(m);
    let (bp, bm) = (bose_plus(w, beta), bose_minus(w, beta));
    -MEASURE * (beta * bp * bm / (2.0 * w * w) + (bp + bm) / (4.0 * w * w * w))
}

#[test]
fn graphs_case_matches_golden_listing() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(dir.path(), &["run", "--case", "graphs", "--degrees", "1,1,3,3"]);
    let text = std::fs::read_to_string(dir.path().join("results.json")).unwrap();
    assert_eq!(text, golden("graphs_1_1_3_3.json"));
    let v: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["count"], 2);
    for g in v["graphs"].as_array().unwrap() {
        assert_eq!(g["symmetry_factor"], 2);
    }
    // the dedicated subcommand writes the same file
    let other = tempfile::tempdir().unwrap();
    run_ok(other.path(), &["graphs", "--degrees", "1,1,3,3"]);
    assert_eq!(std::fs::read_to_string(other.path().join("results.json")).unwrap(), text);
}

#[test]
fn phi2_f1_case_matches_golden_and_formula() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(dir.path(), &["run", "--case", "phi2-F1", "--beta", "1", "--mass", "1", "--p", "0.5"]);
    let got = read_json(&dir.path().join("results.json"));
    let want: Value = serde_json::from_str(&golden("phi2_f1.json")).unwrap();
    assert_eq!(got[0]["case"], want[0]["case"]);
    assert_eq!(got[0]["params"], want[0]["params"]);
    let re = got[0]["value"][0].as_f64().unwrap();
    assert!((re - want[0]["value"][0].as_f64().unwrap()).abs() <= 1e-15 * re.abs());
    assert!((re - f1_reference(1.0, 1.0, 0.5)).abs() <= 1e-14 * re.abs());
}

#[test]
fn thermal_mass_case_is_one_twelfth_when_nearly_massless() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(dir.path(), &["run", "--case", "thermal-mass", "--beta", "1", "--mass", "1e-4"]);
    let v = read_json(&dir.path().join("results.json"));
    let m2 = v[0]["value"][0].as_f64().unwrap();
    assert!((m2 - 1.0 / 12.0).abs() < 1e-3 / 12.0, "{m2}");
}

#[test]
fn sweep_csv_matches_golden_grid() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(
        dir.path(),
        &["sweep", "--case", "phi2-F1", "--axis", "beta=0.5:2:4:log", "--axis", "p=0:1:3"],
    );
    let got = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let want = golden("sweep_phi2_f1.csv");
    let (g, w): (Vec<&str>, Vec<&str>) = (got.lines().collect(), want.lines().collect());
    assert_eq!(g[0], CSV_HEADER);
    assert_eq!(g.len(), w.len());
    for (gl, wl) in g.iter().zip(&w).skip(1) {
        let gv: Vec<f64> = gl.split(',').map(|x| x.parse().unwrap()).collect();
        let wv: Vec<f64> = wl.split(',').map(|x| x.parse().unwrap()).collect();
        for (a, b) in gv.iter().zip(&wv) {
            assert!((a - b).abs() <= 1e-14 * b.abs(), "{gl} vs {wl}");
        }
        assert!((gv[4] - f1_reference(gv[0], gv[1], gv[2])).abs() <= 1e-13 * gv[4].abs());
    }
    // beta slowest, p fastest
    assert_eq!(&g[1][..6], "0.5,1,");
    assert!(g[4].starts_with("0.7937"));
    let json = read_json(&dir.path().join("results.json"));
    assert_eq!(json.as_array().unwrap().len(), 12);
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.cfg"),
        "# quadratic case\ncase = phi2-F1\nparams.beta = 2\nparams.mass = 1.5\npoint.p = 0.25\n",
    )
    .unwrap();
    run_ok(dir.path(), &["run", "--config", "run.cfg", "--params.mass", "1"]);
    let v = read_json(&dir.path().join("results.json"));
    assert_eq!(v[0]["params"]["beta"], 2.0);
    assert_eq!(v[0]["params"]["mass"], 1.0);
    let re = v[0]["value"][0].as_f64().unwrap();
    assert!((re - f1_reference(2.0, 1.0, 0.25)).abs() <= 1e-14 * re.abs());
}

#[test]
fn identical_config_gives_identical_files_for_any_thread_count() {
    let args = ["sweep", "--case", "phi3-F2-inf-00", "--axis", "beta=1:4:3", "--mass", "2"];
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let dir = tempfile::tempdir().unwrap();
        let out = Command::new(BIN)
            .current_dir(dir.path())
            .env("THERMAL_KMS_THREADS", threads)
            .args(args)
            .output()
            .unwrap();
        assert!(out.status.success());
        outputs.push((
            std::fs::read(dir.path().join("results.json")).unwrap(),
            std::fs::read(dir.path().join("results.csv")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn errors_exit_nonzero_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = run_in(dir.path(), &["run", "--case", "phi5-nothing"]);
    assert_eq!(unknown.status.code(), Some(EXIT_USAGE));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("unknown case"));

    let bad_key = run_in(dir.path(), &["run", "--case", "phi2-F1", "--set", "params.temperature=3"]);
    assert_eq!(bad_key.status.code(), Some(EXIT_USAGE));

    let massless = run_in(dir.path(), &["thermal-mass", "--mass", "0"]);
    assert_eq!(massless.status.code(), Some(EXIT_USAGE));
    assert!(String::from_utf8_lossy(&massless.stderr).contains("mass"));

    let singular = run_in(dir.path(), &["propagator", "--kind", "thermal", "--t", "0", "--u", "0"]);
    assert_eq!(singular.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&singular.stderr).contains("singular"));

    let early = run_in(dir.path(), &["phi2", "--term", "A1", "--t", "-5"]);
    assert_eq!(early.status.code(), Some(1));
    assert!(!dir.path().join("results.json").exists());
}

#[test]
fn subcommands_cover_the_case_registry() {
    let dir = tempfile::tempdir().unwrap();
    for (args, case) in [
        (vec!["phi2", "--term", "B1", "--t", "3"], "phi2-B1"),
        (vec!["phi3", "--term", "Bc", "--renorm-c", "1"], "phi3-Bc"),
        (vec!["phi3"], "phi3-F2-inf-00"),
        (vec!["thermal-mass"], "thermal-mass"),
        (vec!["propagator", "--kind", "matrix", "--a", "1", "--b", "2", "--t", "0.4"], "propagator-matrix"),
    ] {
        run_ok(dir.path(), &args);
        let v = read_json(&dir.path().join("results.json"));
        assert_eq!(v[0]["case"], case, "{args:?}");
    }
}

#[test]
fn matsubara_sum_is_within_its_tail_bound() {
    let dir = tempfile::tempdir().unwrap();
    let value = |args: &[&str]| {
        run_ok(dir.path(), args);
        let v = read_json(&dir.path().join("results.json"));
        (v[0]["value"][0].as_f64().unwrap(), v[0]["error_estimate"].as_f64().unwrap())
    };
    let (closed, _) = value(&["propagator", "--kind", "matsubara-closed", "--u", "0.3"]);
    for n in ["100", "1000"] {
        let (sum, tail) = value(&["propagator", "--kind", "matsubara-sum", "--u", "0.3", "--quad.matsubara_N", n]);
        assert!((sum - closed).abs() <= tail, "N = {n}: {sum} vs {closed}, tail {tail}");
    }
}

#[test]
fn sweep_axes_reject_unknown_parameters() {
    assert!(SweepAxis::parse("temperature=1:2:3").is_err());
    assert!(SweepAxis::parse("beta=1:2").is_err());
    assert!(SweepAxis::parse("beta=0:2:3:log").is_err());
    let a = SweepAxis::parse("scale_n=1:64:4:log").unwrap();
    for (v, want) in a.values().iter().zip([1.0, 4.0, 16.0, 64.0]) {
        assert!((v - want).abs() <= 1e-14 * want, "{v}");
    }
    assert_eq!(a.values()[3], 64.0);
}

proptest! {
    #[test]
    fn config_text_round_trips(
        beta in 0.01f64..50.0,
        mass in 1e-4f64..10.0,
        c in -3.0f64..3.0,
        eps in 0.1f64..5.0,
        n in 1.0f64..100.0,
        tol in 1e-12f64..1e-4,
        nmax in 0u64..5000,
        p in 0.0f64..10.0,
        bump in any::<bool>(),
    ) {
        let mut cfg = RunConfig::default();
        cfg.params.beta = beta;
        cfg.params.mass = mass;
        cfg.params.renorm_c = c;
        cfg.cutoff.epsilon = eps;
        cfg.cutoff.scale_n = n;
        if bump {
            cfg.cutoff.kind = thermal_kms::cutoff::CutoffKind::SmoothBump;
        }
        cfg.quad.tol_rel = tol;
        cfg.quad.matsubara_n = nmax;
        cfg.point.p = p;
        cfg.case = Some("phi3-C-inf".into());
        cfg.degrees = vec![1, 1, 3, 3];
        cfg.sweep = vec![SweepAxis::parse("beta=1:8:4:log").unwrap()];
        let back = RunConfig::from_text(&cfg.to_text()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
