use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

const BIN: &str = env!("CARGO_BIN_EXE_contraction-lab");

struct Scratch(PathBuf);

impl Scratch {
    fn new(tag: &str) -> Self {
        let dir = std::env::temp_dir().join(format!("contraction-lab-cli-{}-{tag}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        Scratch(dir)
    }

    fn write(&self, name: &str, v: &Value) -> PathBuf {
        let p = self.0.join(name);
        std::fs::write(&p, serde_json::to_vec(v).unwrap()).unwrap();
        p
    }

    fn write_raw(&self, name: &str, s: &str) -> PathBuf {
        let p = self.0.join(name);
        std::fs::write(&p, s).unwrap();
        p
    }
}

impl Drop for Scratch {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

fn mat(rows: usize, cols: usize, re: &[f64]) -> Value {
    json!({"rows": rows, "cols": cols, "re": re, "im": vec![0.0; re.len()]})
}

fn run(args: &[&str]) -> (i32, Value, Output) {
    let out = Command::new(BIN).args(args).output().unwrap();
    let code = out.status.code().unwrap();
    let v = serde_json::from_slice(&out.stdout).unwrap_or(Value::Null);
    (code, v, out)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn shmulyan_example_dominates() {
    let d = Scratch::new("shm");
    // J = 1 (+) 0 is a partial isometry; 1 (+) 0.5 sits in its part.
    let j = d.write("J.json", &mat(2, 2, &[1.0, 0.0, 0.0, 0.0]));
    let jz = d.write("JZ.json", &mat(2, 2, &[1.0, 0.0, 0.0, 0.5]));
    let (code, v, _) = run(&["dominate", "--order", "shmulyan", s(&j), s(&jz)]);
    assert_eq!(code, 0);
    assert_eq!(v["result"]["dominates"], json!(true));
    assert_eq!(v["result"]["route_agreement"], json!(true));
}

#[test]
fn harnack_example_not_dominated() {
    let d = Scratch::new("har");
    let one = d.write("one.json", &mat(1, 1, &[1.0]));
    let zero = d.write("zero.json", &mat(1, 1, &[0.0]));
    let (code, v, _) = run(&["dominate", "--order", "harnack", s(&one), s(&zero)]);
    assert_eq!(code, 1);
    assert_eq!(v["result"]["status"], json!("NotDominated"));

    // the constants grow without bound but no finite level certifies it
    let (code, v, _) = run(&["dominate", "--order", "harnack", s(&zero), s(&one)]);
    assert_eq!(code, 3);
    assert_eq!(v["result"]["status"], json!("Inconclusive"));
    let cs = v["result"]["constants"].as_array().unwrap();
    assert!(cs.last().unwrap().as_f64().unwrap() > 60.0);

    let half = d.write("half.json", &mat(1, 1, &[0.5]));
    let (code, v, _) = run(&["dominate", "--order", "harnack", "--max-level", "16", s(&zero), s(&half)]);
    assert_eq!(code, 0);
    assert_eq!(v["result"]["status"], json!("Dominated"));
    assert_eq!(v["tolerances"]["max_level"], json!(16));
}

#[test]
fn analyze_zero_matrix() {
    let d = Scratch::new("ana");
    let z = d.write("zero.json", &mat(3, 3, &[0.0; 9]));
    let (code, v, _) = run(&["analyze", s(&z)]);
    assert_eq!(code, 0);
    let r = &v["result"];
    assert_eq!(r["class"], json!("C00"));
    let labels: Vec<&str> = r["labels"].as_array().unwrap().iter().map(|l| l.as_str().unwrap()).collect();
    for want in ["strict", "pure", "quasi_normal"] {
        assert!(labels.contains(&want), "{labels:?}");
    }
    assert_eq!(r["parts"]["dim_h_i"], json!(0));
    assert_eq!(r["asymptotic"]["dims"]["stable"], json!(3));
    assert_eq!(v["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn analyze_rectangular_reports_classification_only() {
    let d = Scratch::new("rect");
    let m = d.write("m.json", &mat(2, 3, &[0.5, 0.0, 0.0, 0.0, 0.5, 0.0]));
    let (code, v, _) = run(&["analyze", s(&m)]);
    assert_eq!(code, 0);
    assert!(v["result"]["classification"].is_object());
    assert!(v["result"].get("asymptotic").is_none());
}

#[test]
fn malformed_json_is_input_error() {
    let d = Scratch::new("bad");
    let bad = d.write_raw("bad.json", "{\"rows\": 2, \"cols\": ");
    let (code, v, out) = run(&["analyze", s(&bad)]);
    assert_eq!(code, 2);
    assert_eq!(v["error"]["kind"], json!("input"));
    assert!(!out.stderr.is_empty());

    let short = d.write("short.json", &json!({"rows": 2, "cols": 2, "re": [1.0]}));
    assert_eq!(run(&["analyze", s(&short)]).0, 2);

    let (code, _, _) = run(&["analyze", "/nonexistent/path.json"]);
    assert_eq!(code, 2);
}

#[test]
fn non_contraction_and_shape_mismatch_are_input_errors() {
    let d = Scratch::new("shape");
    let big = d.write("big.json", &mat(1, 1, &[2.0]));
    assert_eq!(run(&["analyze", s(&big)]).0, 2);

    let a = d.write("a.json", &mat(1, 1, &[0.5]));
    let b = d.write("b.json", &mat(2, 2, &[0.5, 0.0, 0.0, 0.5]));
    for order in ["harnack", "shmulyan"] {
        assert_eq!(run(&["dominate", "--order", order, s(&a), s(&b)]).0, 2);
    }
    assert_eq!(run(&["part", s(&b), s(&a)]).0, 2);
}

#[test]
fn invalid_tolerance_is_input_error() {
    let d = Scratch::new("tol");
    let a = d.write("a.json", &mat(1, 1, &[0.5]));
    assert_eq!(run(&["--rank-rtol", "-1", "analyze", s(&a)]).0, 2);
    assert_eq!(run(&["analyze", s(&a), "--conv-tol", "0"]).0, 2);
}

#[test]
fn part_membership() {
    let d = Scratch::new("part");
    let w = d.write("w.json", &mat(2, 2, &[1.0, 0.0, 0.0, 0.0]));
    let inside = d.write("in.json", &mat(2, 2, &[1.0, 0.0, 0.0, 0.3]));
    let edge = d.write("edge.json", &mat(2, 2, &[1.0, 0.0, 0.0, 1.0]));
    let notpi = d.write("notpi.json", &mat(2, 2, &[0.5, 0.0, 0.0, 0.0]));

    let (code, v, _) = run(&["part", s(&w), s(&inside)]);
    assert_eq!(code, 0);
    assert!((v["result"]["z_norm"].as_f64().unwrap() - 0.3).abs() < 1e-12);
    assert_eq!(run(&["part", s(&w), s(&edge)]).0, 1);
    assert_eq!(run(&["part", s(&notpi), s(&inside)]).0, 2);
}

#[test]
fn arc_scalar_pair() {
    let d = Scratch::new("arc");
    let zero = d.write("zero.json", &mat(1, 1, &[0.0]));
    let half = d.write("half.json", &mat(1, 1, &[0.5]));
    let one = d.write("one.json", &mat(1, 1, &[1.0]));

    let (code, v, _) = run(&["arc", s(&zero), s(&half)]);
    assert_eq!(code, 0);
    assert_eq!(v["result"]["outcome"], json!("connected"));
    assert!(v["result"]["bound"].as_f64().unwrap() <= 0.5f64.atanh() + 1e-6);

    let (code, v, _) = run(&["arc", s(&zero), s(&one)]);
    assert_eq!(code, 1);
    assert_eq!(v["result"]["outcome"], json!("not_connected"));
}

#[test]
fn schur_member_verdicts() {
    let d = Scratch::new("schur");
    let w = d.write("w.json", &mat(1, 1, &[0.0]));
    let lambda = d.write("f.json", &json!([mat(1, 1, &[0.0]), mat(1, 1, &[1.0])]));
    let (code, v, _) = run(&["schur-member", s(&w), s(&lambda)]);
    assert_eq!(code, 1);
    assert_eq!(v["result"]["member"], json!(false));

    let inside = d.write("g.json", &json!({"coeffs": [mat(1, 1, &[0.0]), mat(1, 1, &[0.5])]}));
    let (code, v, _) = run(&["schur-member", s(&w), s(&inside)]);
    assert_eq!(code, 0);
    assert_eq!(v["result"]["member"], json!(true));

    let wrong = d.write("h.json", &json!([mat(2, 2, &[0.0; 4])]));
    assert_eq!(run(&["schur-member", s(&w), s(&wrong)]).0, 2);
}

#[test]
fn gen_output_parses_and_is_deterministic() {
    let d = Scratch::new("gen");
    let (code, a, out) = run(&["gen", "--kind", "strict", "--dim", "4", "--seed", "7"]);
    assert_eq!(code, 0, "{}", String::from_utf8_lossy(&out.stderr));
    let (_, b, _) = run(&["gen", "--kind", "strict", "--dim", "4", "--seed", "7"]);
    assert_eq!(a, b);
    assert_eq!(a["rows"], json!(4));

    // the generated matrix feeds straight back into analyze
    let p = d.write("g.json", &a);
    let (code, v, _) = run(&["analyze", s(&p)]);
    assert_eq!(code, 0);
    assert_eq!(v["result"]["class"], json!("C00"));

    // the file re-parses to the same bits
    let text = std::fs::read_to_string(&p).unwrap();
    let reparsed: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(serde_json::to_string(&reparsed).unwrap(), text);

    assert_eq!(run(&["gen", "--kind", "nope", "--dim", "2"]).0, 2);
    assert_eq!(run(&["gen", "--kind", "strict", "--dim", "0"]).0, 2);
}

#[test]
fn gen_pair_selection() {
    let (code, v, _) = run(&["gen", "--kind", "commuting_pair", "--dim", "3", "--seed", "1"]);
    assert_eq!(code, 0);
    assert!(v["first"].is_object() && v["second"].is_object());
    let (_, second, _) = run(&["gen", "--kind", "commuting_pair", "--dim", "3", "--seed", "1", "--select", "second"]);
    assert_eq!(second, v["second"]);
    assert_eq!(run(&["gen", "--kind", "strict", "--dim", "3", "--select", "second"]).0, 2);
}

#[test]
fn reports_reproduce_from_their_inputs() {
    let d = Scratch::new("rt");
    let (_, a, _) = run(&["gen", "--kind", "strict", "--dim", "3", "--seed", "11"]);
    let (_, b, _) = run(&["gen", "--kind", "strict", "--dim", "3", "--seed", "12"]);
    let pa = d.write("a.json", &a);
    let pb = d.write("b.json", &b);
    let args = ["dominate", "--order", "harnack", s(&pa), s(&pb)];
    let first = Command::new(BIN).args(args).output().unwrap();
    let v: Value = serde_json::from_slice(&first.stdout).unwrap();

    // rebuild the command from the echoed report and compare byte for byte
    let echoed: Vec<String> = v["command"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_str().unwrap().to_string())
        .collect();
    let again = Command::new(BIN).args(&echoed).output().unwrap();
    assert_eq!(first.stdout, again.stdout);
    assert_eq!(first.status.code(), again.status.code());

    let bytes = std::fs::read(&pa).unwrap();
    use sha2::Digest;
    let want = hex::encode(sha2::Sha256::digest(&bytes));
    assert_eq!(v["inputs"][0]["sha256"], json!(want));
}

#[test]
fn timing_is_opt_in() {
    let d = Scratch::new("time");
    let a = d.write("a.json", &mat(1, 1, &[0.5]));
    let (_, v, _) = run(&["analyze", s(&a)]);
    assert!(v.get("elapsed_ms").is_none());
    let (_, v, _) = run(&["--timing", "analyze", s(&a)]);
    assert!(v["elapsed_ms"].is_number());
}

#[test]
fn suite_small_run() {
    let (code, v, _) = run(&["suite", "--name", "route-agreement", "--cases", "20", "--seed", "3"]);
    assert_eq!(code, 0);
    assert_eq!(v["result"]["ok"], json!(true));
    assert_eq!(v["result"]["passed"], json!(20));
    assert_eq!(v["seed"], json!(3));
    assert_eq!(run(&["suite", "--name", "nope"]).0, 2);
}

#[test]
fn unknown_subcommand_is_usage_error() {
    assert_eq!(run(&["frobnicate"]).0, 2);
}
