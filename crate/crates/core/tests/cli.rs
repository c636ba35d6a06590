use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ergocert(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ergocert")).current_dir(dir).args(args).output().expect("spawn ergocert")
}

fn json_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn gen(dir: &Path, scenario: &str, name: &str) {
    let out = ergocert(dir, &["gen", "--scenario", scenario, "--out", name]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn gen_then_certify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen(d, r#"{"id":"ou_grid"}"#, "ou");
    for f in ["chain.json", "measure.json", "lyapunov.json", "set.json", "rho.json", "inputs.json"] {
        assert!(d.join("ou").join(f).exists(), "{f}");
    }
    let ok = ergocert(d, &["certify", "--condition", "perturbed-kernel", "--inputs", "ou/inputs.json"]);
    assert_eq!(ok.status.code(), Some(0));
    assert_eq!(json_of(&ok)["verdict"], "holds");
    // l = 2 sits above (1 - b gamma)/(1 - a)
    let bad = ergocert(d, &["certify", "--condition", "perturbed-kernel", "--inputs", "ou/inputs.json", "--param", "l=2"]);
    assert_eq!(bad.status.code(), Some(2));
    assert_eq!(json_of(&bad)["verdict"], "fails");
}

#[test]
fn usage_and_io_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(ergocert(d, &["certify", "--condition", "almost-inv"]).status.code(), Some(1));
    assert_eq!(ergocert(d, &["certify", "--condition", "nope", "--kernel", "k.json"]).status.code(), Some(1));
    let missing = ergocert(d, &["harnack", "--kernel", "k.json", "--x", "a", "--y", "b"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("k.json"));
    assert_eq!(ergocert(d, &["--help"]).status.code(), Some(0));
}

#[test]
fn kernel_commands() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("k.json"), r#"{"states":["a","b"],"rows":[[0.9,0.1],[0.2,0.8]]}"#).unwrap();
    std::fs::write(d.join("m.json"), r#"{"states":["b","a"],"values":[0.5,0.5]}"#).unwrap();
    std::fs::write(d.join("inv.json"), r#"{"states":["a","b"],"values":[0.6666666666666666,0.3333333333333333]}"#).unwrap();

    let h = json_of(&ergocert(d, &["harnack", "--kernel", "k.json", "--x", "a", "--y", "b"]));
    // sum P(b,.)^2/P(a,.) = 0.04/0.9 + 0.64/0.1
    assert!((h["M"].as_f64().unwrap() - (0.04 / 0.9 + 6.4)).abs() < 1e-12);

    let inv = json_of(&ergocert(d, &["invariant", "--kernel", "k.json", "--method", "eigen"]));
    let nu = inv["results"][0]["nu"][0].as_f64().unwrap();
    assert!((nu - 2.0 / 3.0).abs() < 1e-12, "{inv}");

    let rv = json_of(&ergocert(d, &["resolvent", "--kernel", "k.json", "--alpha", "1", "--measure", "m.json"]));
    let aux: Vec<f64> = rv["auxiliary_measure"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert!((aux.iter().sum::<f64>() - 1.0).abs() < 1e-12);

    let out = ergocert(d, &["index-profile", "--kernel", "k.json", "--measure", "m.json", "--csv", "ip.csv"]);
    assert!(out.status.success());
    assert!(std::fs::read_to_string(d.join("ip.csv")).unwrap().starts_with("eps,crisp,fractional\n"));

    std::fs::write(d.join("rho.json"), r#"{"states":["a","b"],"values":[0.5,1.0]}"#).unwrap();
    let pk = json_of(&ergocert(d, &["perturb", "--kernel", "k.json", "--rho", "rho.json"]));
    assert!((pk["rows"][0][0].as_f64().unwrap() - 0.95).abs() < 1e-15);
    assert_eq!(pk["rows"][1], serde_json::json!([0.2, 0.8]));

    let out = ergocert(d, &["convergence", "--kernel", "k.json", "--measure", "inv.json", "--csv", "decay.csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!((json_of(&out)["fitted_gamma"].as_f64().unwrap() - 0.7).abs() < 1e-6);
    assert!(std::fs::read_to_string(d.join("decay.csv")).unwrap().starts_with("n,beta_n\n"));
}

#[test]
fn pipeline_from_generated_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen(d, r#"{"id":"birth_death","n":12,"p_down":0.7}"#, "bd");
    std::fs::write(
        d.join("cfg.json"),
        r#"{"inputs":"bd/inputs.json","steps":[{"step":"a2"},{"step":"solve"},{"step":"convergence"}]}"#,
    )
    .unwrap();
    let out = ergocert(d, &["pipeline", "--config", "cfg.json", "--csv-dir", "series"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = json_of(&out);
    assert_eq!(rep["agreement"]["consistent"], true);
    assert!(d.join("series/decay.csv").exists());

    // the generated Lyapunov function loads as an extended function with finite values
    // invariant law of the reflected walk: pi(x+1)/pi(x) = 0.3/0.7
    let w: Vec<f64> = (0..12).map(|x| (3.0f64 / 7.0).powi(x)).collect();
    let z: f64 = w.iter().sum();
    let states: Vec<String> = (0..12).map(|x| format!("s{x}")).collect();
    let pi = serde_json::json!({"states": states, "values": w.iter().map(|v| v / z).collect::<Vec<f64>>()});
    std::fs::write(d.join("pi.json"), pi.to_string()).unwrap();
    let conv = ergocert(d, &["convergence", "--kernel", "bd/chain.json", "--measure", "pi.json", "--lyapunov", "bd/lyapunov.json"]);
    assert!(conv.status.success(), "{}", String::from_utf8_lossy(&conv.stderr));
    assert!(json_of(&conv)["fitted_gamma"].as_f64().unwrap() < 1.0);
}

#[test]
fn thread_cap_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen(d, r#"{"id":"two_state","p":0.1,"q":0.2}"#, "ts");
    let out = Command::new(env!("CARGO_BIN_EXE_ergocert"))
        .current_dir(d)
        .env("ERGOCERT_THREADS", "1")
        .args(["certify", "--condition", "index-c", "--inputs", "ts/inputs.json"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let bad = Command::new(env!("CARGO_BIN_EXE_ergocert"))
        .current_dir(d)
        .env("ERGOCERT_THREADS", "many")
        .args(["certify", "--condition", "index-c", "--inputs", "ts/inputs.json"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}
