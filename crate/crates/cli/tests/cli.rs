use std::path::{Path, PathBuf};

use birkhoff_lab_cli::config::ExperimentConfig;
use birkhoff_lab_cli::run_from;
use serde_json::Value;

fn run(dir: &Path, args: &[&str]) -> i32 {
    let mut argv = vec!["birkhoff-lab"];
    argv.extend_from_slice(args);
    argv.extend_from_slice(&["--out-dir", dir.to_str().unwrap()]);
    let out = run_from(argv);
    out.exit_code
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn json(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&read(dir, name)).unwrap()
}

const OSC: [&str; 4] = ["--set", "system.kind=doubling", "--set", "observable={kind = \"osc\", c = 0.2}"];

#[test]
fn conditions_for_osc_is_satisfied() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run(d.path(), &[&["conditions"], &OSC[..]].concat()), 0);
    let csv = read(d.path(), "conditions.csv");
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "theorem,a,b,theta,eta_minus,eta_plus,lhs,rhs,satisfied");
    let clt = lines.find(|l| l.starts_with("CLT,")).unwrap();
    assert!(clt.ends_with(",true"), "{clt}");
}

#[test]
fn constant_sums_are_n() {
    let d = tempfile::tempdir().unwrap();
    let args = [
        "simulate",
        "--set",
        "system.kind=doubling",
        "--set",
        "observable={kind = \"constant\", c = 1.0}",
        "--set",
        "stats.n=10",
        "--set",
        "stats.m=100",
    ];
    assert_eq!(run(d.path(), &args), 0);
    let csv = read(d.path(), "simulate.csv");
    let sums: Vec<f64> = csv.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(sums.len(), 100);
    assert!(sums.iter().all(|&s| s == 10.0));
}

#[test]
fn same_seed_gives_identical_csv() {
    let args = [&["clt", "--seed", "9", "--set", "stats.m=1000", "--set", "stats.n_grid=[100, 1000]"], &OSC[..]].concat();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(run(a.path(), &args), 0);
    assert_eq!(run(b.path(), &args), 0);
    for name in ["clt.csv", "clt_hist.csv"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
    let (ma, mb) = (json(a.path(), "manifest.json"), json(b.path(), "manifest.json"));
    assert_eq!(ma["config_hash"], mb["config_hash"]);
    assert_eq!(ma["seeds"], serde_json::json!([9]));

    // the manifest's resolved config reruns to the same tables
    let cfg = tempfile::NamedTempFile::new().unwrap();
    std::fs::write(cfg.path(), ma["resolved_config"].as_str().unwrap()).unwrap();
    let c = tempfile::tempdir().unwrap();
    assert_eq!(run(c.path(), &["clt", "--config", cfg.path().to_str().unwrap()]), 0);
    assert_eq!(read(a.path(), "clt.csv"), read(c.path(), "clt.csv"));
}

#[test]
fn inadmissible_observable_fails_before_sampling() {
    let d = tempfile::tempdir().unwrap();
    let args = ["clt", "--set", "system.kind=doubling", "--set", "observable={kind = \"osc\", c = 0.5}"];
    assert_eq!(run(d.path(), &args), 3);
    assert!(!d.path().join("clt.csv").exists());
    let s = json(d.path(), "summary.json");
    assert_eq!(s["error"]["exit_code"], 3);
    assert_eq!(s["error"]["kind"], "hypothesis");
    let m = json(d.path(), "manifest.json");
    assert!(m["diagnostics"].as_array().unwrap().iter().any(|d| d["status"] == "hypothesis"));
}

#[test]
fn config_errors_exit_2() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run(d.path(), &["simulate", "--set", "system.kind=doubling", "--set", "stats.nn=3"]), 2);
    assert_eq!(json(d.path(), "summary.json")["error"]["kind"], "config");
    assert_eq!(run(d.path(), &["simulate", "--set", "system.kind=doubling"]), 2);
    assert_eq!(run(d.path(), &["conditions", "--config", "/nonexistent/cfg.toml"]), 2);
}

#[test]
fn tail_bias_exits_4() {
    let d = tempfile::tempdir().unwrap();
    let args = [
        "simulate",
        "--set",
        "system.kind=boolean",
        "--set",
        "observable={kind = \"zeta_re\", t_max = 2.0}",
        "--set",
        "stats.n=200",
        "--set",
        "stats.m=200",
    ];
    assert_eq!(run(d.path(), &args), 4);
    assert_eq!(json(d.path(), "summary.json")["error"]["kind"], "numerical");
}

#[test]
fn lindelof_needs_zeta() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run(d.path(), &[&["lindelof"], &OSC[..]].concat()), 3);
}

#[test]
fn empty_s_grid_omits_the_plot() {
    let d = tempfile::tempdir().unwrap();
    let out = run_from([
        "birkhoff-lab",
        "spectrum",
        "--map",
        "{kind = \"doubling\"}",
        "--observable",
        "{kind = \"affine\"}",
        "--N",
        "64",
        "--set",
        "spectrum.s_grid=[]",
        "--plots",
        "--out-dir",
        d.path().to_str().unwrap(),
    ]);
    assert_eq!(out.exit_code, 0);
    assert_eq!(read(d.path(), "spectrum.csv"), "s,lambda_re,lambda_im,lambda_abs,gap\n");
    assert!(!d.path().join("plots.gp").exists());
    let warnings = json(d.path(), "summary.json")["warnings"].to_string();
    assert!(warnings.contains("empty s grid") && warnings.contains("omitted"), "{warnings}");
}

#[test]
fn spectrum_plot_and_unit_eigenvalue() {
    let d = tempfile::tempdir().unwrap();
    let out = run_from([
        "birkhoff-lab",
        "spectrum",
        "--map",
        "{kind = \"doubling\"}",
        "--observable",
        "{kind = \"affine\"}",
        "--N",
        "128",
        "--s-grid",
        "-0.1,0,0.1",
        "--plots",
        "--out-dir",
        d.path().to_str().unwrap(),
    ]);
    assert_eq!(out.exit_code, 0);
    let lambda0 = json(d.path(), "summary.json")["results"]["lambda0"].as_f64().unwrap();
    assert!((lambda0 - 1.0).abs() < 1e-8);
    assert!(read(d.path(), "plots.gp").contains("lambda.svg"));
}

#[test]
fn edgeworth_plot_overlays_both_curves() {
    let d = tempfile::tempdir().unwrap();
    let args = [
        "edgeworth",
        "--set",
        "system.kind=doubling",
        "--set",
        "observable={kind = \"exponential\", rate = 20.0}",
        "--set",
        "stats.n=200",
        "--set",
        "stats.m=2000",
        "--set",
        "stats.kappa3_orbits=2000",
        "--set",
        "stats.kappa3_grid=[128, 256, 512, 1024]",
        "--plots",
    ];
    assert_eq!(run(d.path(), &args), 0);
    let csv = read(d.path(), "edgeworth_cdf.csv");
    assert!(csv.starts_with("x,empirical,gaussian,edgeworth\n"));
    let script = read(d.path(), "plots.gp");
    assert!(script.contains("Edgeworth density") && script.contains("cdf.svg"));
    let s = json(d.path(), "summary.json");
    assert!(s["results"]["edgeworth"]["gaussian_sup"].is_number());
    assert!(s["results"]["moments"]["A"]["value"].is_number());
}

#[test]
fn json_only_embeds_tables() {
    let d = tempfile::tempdir().unwrap();
    let args = [&["coboundary", "--format", "json", "--set", "coboundary.max_period=6"], &OSC[..]].concat();
    assert_eq!(run(d.path(), &args), 0);
    assert!(!d.path().join("coboundary.csv").exists());
    let s = json(d.path(), "summary.json");
    assert!(s["tables"]["coboundary"].as_array().unwrap().len() > 5);
    assert_eq!(s["results"]["cohomology"], "not-cohomologous-to-constant");
    let outputs = json(d.path(), "manifest.json")["outputs"].clone();
    assert_eq!(outputs, serde_json::json!(["summary.json", "manifest.json"]));
}

#[test]
fn shipped_configs_parse() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut count = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let (cfg, _) = ExperimentConfig::load(&path).unwrap();
            let system = cfg.system().unwrap();
            cfg.observable(&system).unwrap();
            count += 1;
        }
    }
    assert!(count >= 4);
}
