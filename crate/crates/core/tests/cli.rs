use std::path::Path;
use std::process::{Command, Output};

use sinkhorn_bridge::cli::{EXIT_CONFIG, EXIT_IO, EXIT_NOT_CONVERGED, EXIT_NUMERICAL};
use sinkhorn_bridge::metrics::{energy_distance, read_ledger};
use sinkhorn_bridge::data::{generate, read_samples, DatasetName, DatasetSpec, Format};
use sinkhorn_bridge::PotentialPair;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sinkhorn-bridge"))
        .args(args)
        .env("SINKHORN_BRIDGE_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn single_point_fit_satisfies_the_cost_identity() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("x.csv"), "x0,x1\n0.5,1.0\n").unwrap();
    std::fs::write(dir.path().join("y.csv"), "x0,x1\n-1.0,2.0\n").unwrap();
    let out = dir.path().join("out");
    let stdout = ok(&["fit", "--source", p(&dir.path().join("x.csv")), "--target", p(&dir.path().join("y.csv")), "--out", p(&out)]);
    assert!(stdout.contains("iterations:") && stdout.contains("marginal_error:") && stdout.contains("dual_objective:"));
    let pair = PotentialPair::load(out.join("potentials.json")).unwrap();
    assert!((pair.f[0] + pair.g[0] - 0.5 * (1.5 * 1.5 + 1.0)).abs() <= 1e-12);
    assert!(out.join("bridge-model.json").exists() && out.join("config.json").exists());
}

#[test]
fn missing_input_is_an_io_error_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let res = run(&["fit", "--source", p(&dir.path().join("nope.csv")), "--target", "moons:10:1", "--out", p(&out)]);
    assert_eq!(res.status.code(), Some(EXIT_IO));
    assert!(!out.join("potentials.json").exists());
}

#[test]
fn non_convergence_has_its_own_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let res = run(&["fit", "--source", "moons:50:1", "--target", "circles:50:2", "--eps", "0.01", "--max-iter", "1", "--out", p(&out)]);
    assert_eq!(res.status.code(), Some(EXIT_NOT_CONVERGED));
    assert!(!out.join("potentials.json").exists());
}

#[test]
fn config_errors_are_reported_as_such() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"source": "moons:10:1", "target": "moons:10:2", "bogus": 1}"#).unwrap();
    assert_eq!(run(&["fit", "--config", p(&cfg)]).status.code(), Some(EXIT_CONFIG));
    assert_eq!(run(&["simulate", "--follmer", "--target", "moons:10:1", "--tau", "1.0"]).status.code(), Some(EXIT_CONFIG));
    assert_eq!(run(&["demo", "no-such-demo"]).status.code(), Some(EXIT_CONFIG));
    assert_eq!(run(&["fit", "--source", "moons:10:1", "--target", "moons:10:2", "--eps", "-1"]).status.code(), Some(EXIT_CONFIG));
}

#[test]
fn overflowing_model_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    std::fs::write(&model, r#"{"eps": 1.0, "atoms": [[1e300], [-1e300]], "potential": [0.0, 0.0]}"#).unwrap();
    let init = dir.path().join("i.csv");
    std::fs::write(&init, "x0\n0.0\n").unwrap();
    let res = run(&["simulate", "--model", p(&model), "--init", p(&init), "--out", p(&dir.path().join("o"))]);
    assert_eq!(res.status.code(), Some(EXIT_NUMERICAL), "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn echoed_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["fit", "--source", "moons:80:1", "--target", "circles:80:2", "--eps", "0.2", "--out", p(&a)]);
    ok(&["fit", "--config", p(&a.join("config.json")), "--out", p(&b)]);
    for f in ["potentials.json", "bridge-model.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let (c, d) = (dir.path().join("c"), dir.path().join("d"));
    ok(&["simulate", "--model", p(&a.join("bridge-model.json")), "--dataset", "moons:30:4", "--steps", "20", "--seed", "6", "--out", p(&c)]);
    ok(&["simulate", "--config", p(&c.join("config.json")), "--out", p(&d)]);
    assert_eq!(std::fs::read(c.join("endpoints.csv")).unwrap(), std::fs::read(d.join("endpoints.csv")).unwrap());
}

#[test]
fn simulate_reruns_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run_once = |name: &str| {
        let out = dir.path().join(name);
        ok(&["simulate", "--follmer", "--target", "gaussian-mixture:50:1", "--count", "1", "--seed", "3", "--trajectories", "--out", p(&out)]);
        (std::fs::read(out.join("endpoints.csv")).unwrap(), std::fs::read(out.join("trajectories.csv")).unwrap())
    };
    assert_eq!(run_once("r1"), run_once("r2"));
}

#[test]
fn toy_protocol_moves_points_onto_the_target() {
    let dir = tempfile::tempdir().unwrap();
    let fit_dir = dir.path().join("fit");
    ok(&["fit", "--source", "gaussian:500:1", "--target", "moons:500:2", "--eps", "0.1", "--out", p(&fit_dir)]);
    let sim = dir.path().join("sim");
    ok(&["simulate", "--model", p(&fit_dir.join("bridge-model.json")), "--dataset", "gaussian:500:3", "--tau", "0.9", "--steps", "50", "--out", p(&sim)]);
    let ends = read_samples(sim.join("endpoints.csv"), Format::Csv).unwrap();
    let start = generate(&DatasetSpec::new(DatasetName::Gaussian, 500, 3)).unwrap();
    let fresh = generate(&DatasetSpec::new(DatasetName::Moons, 500, 9)).unwrap();
    assert!(energy_distance(&ends, &fresh, 0).unwrap() < energy_distance(&start, &fresh, 0).unwrap());
}

#[test]
fn eval_appends_ledger_rows() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("s.csv");
    std::fs::write(&file, "x0,x1\n0.0,1.0\n2.0,3.0\n-1.0,0.5\n").unwrap();
    let out = dir.path().join("out");
    ok(&["eval", "--generated", p(&file), "--reference", p(&file), "--metrics", "bw-uvp", "--out", p(&out)]);
    ok(&["eval", "--generated", p(&file), "--reference", "moons:100:1", "--metrics", "bw-uvp,energy-distance", "--out", p(&out)]);
    let rows = read_ledger(out.join("metrics.csv")).unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0].metric, "bw-uvp");
    assert_eq!(rows[0].value, 0.0);
    let res = run(&["eval", "--generated", p(&file), "--reference", p(&file), "--metrics", "w2-1d", "--out", p(&out)]);
    assert_eq!(res.status.code(), Some(EXIT_CONFIG));
    let res = run(&["eval", "--generated", p(&file), "--reference", p(&file), "--metrics", "fid", "--out", p(&out)]);
    assert_eq!(res.status.code(), Some(EXIT_CONFIG));
}

#[test]
fn demos_write_their_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let toy = dir.path().join("toy");
    ok(&["demo", "toy-bridges", "--quick", "--out", p(&toy)]);
    for pair in ["gaussian-to-moons", "moons-to-circles", "gaussian-to-checkerboard"] {
        for t in ["0.00", "0.25", "0.50", "0.75", "0.90"] {
            assert!(toy.join(pair).join(format!("t{t}.csv")).exists(), "{pair} t{t}");
        }
    }
    let mse = dir.path().join("mse");
    ok(&["demo", "gaussian-mse", "--quick", "--out", p(&mse)]);
    let bench = dir.path().join("bench");
    ok(&["gaussian-bench", "--dims", "1", "--n-grid", "64,128", "--trials", "2", "--n-mc", "200", "--out", p(&bench)]);
    let header = |f: &Path| std::fs::read_to_string(f).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header(&mse.join("d1/mse.csv")), header(&bench.join("d1/mse.csv")));
    assert_eq!(header(&bench.join("d1/mse.csv")), "n,tau,trial,mse");
    let uvp = dir.path().join("uvp");
    ok(&["demo", "mixture-uvp", "--quick", "--out", p(&uvp)]);
    assert!(uvp.join("summary.json").exists());
    for d in [&toy, &mse, &uvp] {
        assert!(d.join("config.json").exists());
    }
}
