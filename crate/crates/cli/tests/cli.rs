use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subschro"))
        .args(args)
        .env_remove("SUBSCHRO_THREADS")
        .output()
        .expect("binary runs")
}

fn report(args: &[&str]) -> (i32, Value) {
    let out = run(args);
    let code = out.status.code().unwrap();
    let v = serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("bad JSON ({e}): {}", String::from_utf8_lossy(&out.stdout)));
    (code, v)
}

fn result<'a>(r: &'a Value, name: &str) -> &'a Value {
    r["results"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["name"] == name)
        .unwrap_or_else(|| panic!("no result {name}"))
}

fn value(r: &Value, name: &str) -> f64 {
    result(r, name)["value"].as_f64().unwrap()
}

#[test]
fn density_example() {
    let (code, r) = report(&["density", "--lambda", "0", "--delta", "1", "--t", "1", "--z", "1"]);
    assert_eq!(code, 0);
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["command"], "density");
    assert!(r["timestamp"].is_string() && r["tool_version"].is_string());
    let want = (-0.25f64).exp() / (2.0 * std::f64::consts::PI.sqrt());
    let e = result(&r, "density");
    assert!((e["value"].as_f64().unwrap() - want).abs() <= 1e-15);
    assert!(e["error_estimate"].as_f64().unwrap() >= 0.0);
}

#[test]
fn check_4g_example_passes() {
    let (code, r) = report(&["check-4g", "--a", "2", "--b", "3", "--samples", "10000", "--seed", "7"]);
    assert_eq!(code, 0);
    assert_eq!(r["pass_fail"], "pass");
    assert_eq!(value(&r, "violations"), 0.0);
    assert_eq!(value(&r, "samples"), 10_000.0);
    assert!(value(&r, "max_ratio") <= 1.0);
}

#[test]
fn constants_example() {
    let (code, r) = report(&["constants", "--a", "2", "--b", "3"]);
    assert_eq!(code, 0);
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b;
    assert!(close(value(&r, "D"), 27.0));
    assert!(close(value(&r, "D_prime"), 2f64.sqrt() * 27.0));
    assert!(close(value(&r, "M"), 3.0));
}

#[test]
fn results_do_not_depend_on_threads() {
    let base = ["check-4g", "--a", "1", "--b", "2", "--samples", "35000", "--seed", "11"];
    let (_, one) = report(&[&base[..], &["--threads", "1"]].concat());
    let (_, four) = report(&[&base[..], &["--threads", "4"]].concat());
    assert_eq!(one["results"], four["results"]);
    let env = Command::new(env!("CARGO_BIN_EXE_subschro"))
        .args(base)
        .env("SUBSCHRO_THREADS", "3")
        .output()
        .unwrap();
    let env: Value = serde_json::from_slice(&env.stdout).unwrap();
    assert_eq!(env["inputs"]["threads"], 3);
    assert_eq!(env["results"], one["results"]);
}

/// Turns an echoed `inputs.args` object back into flags.
fn flags(args: &Value, out: &mut Vec<String>) {
    for (k, v) in args.as_object().unwrap() {
        match v {
            Value::Null => {}
            Value::Object(_) => flags(v, out),
            Value::Array(items) => {
                out.push(format!("--{}", k.replace('_', "-")));
                out.push(items.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(","));
            }
            Value::String(s) => {
                out.push(format!("--{}", k.replace('_', "-")));
                out.push(s.clone());
            }
            other => {
                out.push(format!("--{}", k.replace('_', "-")));
                out.push(other.to_string());
            }
        }
    }
}

#[test]
fn reports_round_trip_through_echoed_inputs() {
    let cases: [&[&str]; 4] = [
        &["density", "--lambda", "0.3", "--delta", "0.7", "--t", "0.4", "--z", "0.1,0.5,2"],
        &["check-4g", "--a", "0.5", "--b", "3", "--lambda", "1", "--delta", "2", "--samples", "5000", "--seed", "5"],
        &["scan-3g", "--lambda", "1", "--delta", "1"],
        &["mc-oracle", "--potential", "const:beta=2", "--t", "1", "--y", "1", "--samples-per-stream", "500", "--seed", "9"],
    ];
    for args in cases {
        let (_, first) = report(args);
        let inputs = &first["inputs"];
        let mut again = vec![first["command"].as_str().unwrap().to_string()];
        flags(&inputs["args"], &mut again);
        again.push("--seed".into());
        again.push(inputs["seed"].to_string());
        let refs: Vec<&str> = again.iter().map(String::as_str).collect();
        let (_, second) = report(&refs);
        assert_eq!(first["results"], second["results"], "{args:?} vs {again:?}");
        assert_eq!(first["inputs"], second["inputs"]);
    }
}

#[test]
fn csv_columns_and_output_file() {
    let path = std::env::temp_dir().join(format!("subschro-cli-test-{}.csv", std::process::id()));
    let out = run(&[
        "density",
        "--t",
        "1",
        "--z",
        "0.5,1",
        "--format",
        "csv",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::remove_file(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("name,z,value,error_estimate,pass"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["density", "--t", "1"]).status.code(), Some(2));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(run(&["density", "--lambda", "-1", "--t", "1", "--z", "1"]).status.code(), Some(2));
    assert_eq!(run(&["kato", "--potential", "nonsense", "--functional", "n", "--h", "0.1"]).status.code(), Some(2));
    assert_eq!(run(&["kato", "--potential", "zero", "--functional", "n"]).status.code(), Some(2));
    // N = 2βh = 20 is far above η/D′.
    let (code, r) = report(&[
        "certify", "--method", "n", "--potential", "const:beta=10", "--a", "2", "--b", "3", "--h", "1",
    ]);
    assert_eq!(code, 1);
    assert_eq!(r["pass_fail"], "fail");
    assert!((value(&r, "measured") - 20.0).abs() < 1e-7);
}

#[test]
fn bridge_counterexample_and_fundsol_pass() {
    let (code, r) = report(&["bridge", "--mode", "counterexample"]);
    assert_eq!(code, 0);
    let rows = r["results"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    let slopes: Vec<f64> = rows.iter().map(|e| e["params"]["required_slope"].as_f64().unwrap()).collect();
    assert!(slopes.windows(2).all(|w| w[1] > w[0]));
    let (code, r) = report(&["fundsol"]);
    assert_eq!(code, 0);
    assert!(value(&r, "residual") <= 1e-4);
}
