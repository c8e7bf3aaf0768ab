use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn networks() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../networks")
}

fn systolic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_systolic"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn ok(args: &[&str]) -> String {
    let o = systolic(args);
    assert!(
        o.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    stdout(&o)
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn json(text: &str) -> serde_json::Value {
    serde_json::from_str(text).unwrap()
}

const EXACT_MATCH: &str =
    r#"{"input":{"h":16,"w":16,"c":128,"b":1},"layers":[{"kind":"conv","k":1,"f":128}]}"#;

#[test]
fn exact_match_conv_shows_full_utilization() {
    let dir = TempDir::new().unwrap();
    let net = write(&dir, "net.json", EXACT_MATCH);
    let out = ok(&["estimate", &net]);
    let row = out.lines().find(|l| l.starts_with('0')).unwrap();
    assert!(row.ends_with("100.0%"), "{row}");
}

#[test]
fn flops_never_slower_than_hard() {
    let net = networks().join("resnet_block.json");
    let net = net.to_str().unwrap();
    let hard = csv_rows(&ok(&[
        "--format", "csv", "estimate", net, "--model", "hard",
    ]));
    let flops = csv_rows(&ok(&[
        "--format", "csv", "estimate", net, "--model", "flops",
    ]));
    assert_eq!(hard.len(), flops.len());
    for (h, f) in hard.iter().zip(&flops) {
        let (hs, fs): (f64, f64) = (h[5].parse().unwrap(), f[5].parse().unwrap());
        assert!(fs <= hs, "{h:?} vs {f:?}");
    }
}

#[test]
fn malformed_network_exits_1_without_output() {
    let dir = TempDir::new().unwrap();
    let net = write(&dir, "bad.toml", "input = { h = 8 \nlayers = [");
    let o = systolic(&["estimate", &net]);
    assert_eq!(o.status.code(), Some(1));
    assert!(o.stdout.is_empty());
    assert!(!o.stderr.is_empty());

    let semantic = write(
        &dir,
        "semantic.json",
        r#"{"input":{"h":8,"w":8,"c":4,"b":1},"layers":[{"kind":"conv","k":3,"f":0}]}"#,
    );
    assert_eq!(systolic(&["estimate", &semantic]).status.code(), Some(1));
    assert_eq!(
        systolic(&["estimate", "/nonexistent/net.toml"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn bad_hardware_exits_1() {
    let dir = TempDir::new().unwrap();
    let net = write(&dir, "net.json", EXACT_MATCH);
    let hw = write(&dir, "hw.toml", "s1 = 0\n");
    assert_eq!(systolic(&["estimate", &net, &hw]).status.code(), Some(1));
}

#[test]
fn blackbox_without_lut_exits_2() {
    let dir = TempDir::new().unwrap();
    let net = write(&dir, "net.json", EXACT_MATCH);
    let o = systolic(&["estimate", &net, "--model", "blackbox"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());
}

#[test]
fn infeasible_simulation_exits_2() {
    let dir = TempDir::new().unwrap();
    let net = write(&dir, "net.json", EXACT_MATCH);
    let hw = write(&dir, "hw.toml", "onchip_bytes = 1000\n");
    assert_eq!(systolic(&["simulate", &net, &hw]).status.code(), Some(2));
}

#[test]
fn compute_bound_simulation_matches_hard_estimate() {
    let dir = TempDir::new().unwrap();
    let net = write(
        &dir,
        "net.json",
        r#"{"input":{"h":64,"w":64,"c":128,"b":1},"layers":[
            {"kind":"conv","k":3,"f":200},{"kind":"relu"},{"kind":"conv","k":3,"f":128}]}"#,
    );
    let est = json(&ok(&["--format", "json", "estimate", &net]));
    let sim = json(&ok(&["--format", "json", "simulate", &net]));
    assert_eq!(est["total_cycles"], sim["total_cycles"]);
    assert!(sim["layers"]
        .as_array()
        .unwrap()
        .iter()
        .all(|l| l["bound"] == "compute"));
}

#[test]
fn trace_has_one_record_per_tile() {
    let dir = TempDir::new().unwrap();
    let trace = dir.path().join("trace.csv");
    let net = networks().join("cifar_conv.toml");
    let sim = json(&ok(&[
        "--format",
        "json",
        "simulate",
        net.to_str().unwrap(),
        "--trace",
        trace.to_str().unwrap(),
    ]));
    let tiles: u64 = sim["layers"]
        .as_array()
        .unwrap()
        .iter()
        .map(|l| l["tiles"].as_u64().unwrap())
        .sum();
    let text = fs::read_to_string(&trace).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("layer_idx,tile_i,tile_j,start,end,bytes_in")
    );
    assert_eq!(lines.count() as u64, tiles);
    assert!(tiles > 0);
}

#[test]
fn empty_network_totals_zero() {
    let dir = TempDir::new().unwrap();
    let net = write(
        &dir,
        "empty.json",
        r#"{"input":{"h":8,"w":8,"c":4,"b":1},"layers":[]}"#,
    );
    let sim = json(&ok(&["--format", "json", "simulate", &net]));
    assert_eq!(sim["total_cycles"], 0);
    let est = json(&ok(&["--format", "json", "estimate", &net]));
    assert_eq!(est["total_cycles"], 0);
}

#[test]
fn csv_and_table_agree() {
    let net = networks().join("cifar_conv.toml");
    let net = net.to_str().unwrap();
    let csv = csv_rows(&ok(&["--format", "csv", "estimate", net]));
    let table = ok(&["estimate", net]);
    let total_csv = csv.last().unwrap();
    let total_table = table.lines().find(|l| l.starts_with("total")).unwrap();
    let fields: Vec<&str> = total_table.split_whitespace().collect();
    assert_eq!(fields[1], total_csv[3], "MACs");
    assert_eq!(fields[2], total_csv[4], "cycles");
}

#[test]
fn utilization_only_optimization_hits_array_multiples() {
    let dir = TempDir::new().unwrap();
    let net = write(
        &dir,
        "cell.toml",
        r#"
input = { h = 16, w = 16, c = 64, b = 1 }
stack = 1
widths = [160]
[cell]
nodes = [0, 1, 2]
edges = [{ src = 0, dst = 2, kind = "conv", k = 1 }, { src = 1, dst = 2, kind = "zero" }]
"#,
    );
    let out = json(&ok(&[
        "--format", "json", "optimize", &net, "--lambda", "0", "--beta", "1",
    ]));
    let c = out["result"]["channels"][0].as_u64().unwrap();
    assert!(c == 128 || c == 256, "{c}");
}

#[test]
fn seeded_report_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let net = networks().join("cifar_conv.toml");
    let net = net.to_str().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    ok(&[
        "optimize",
        net,
        "--seed",
        "7",
        "--report",
        a.to_str().unwrap(),
    ]);
    ok(&[
        "optimize",
        net,
        "--seed",
        "7",
        "--report",
        b.to_str().unwrap(),
    ]);
    let (ta, tb) = (fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert!(!ta.is_empty());
    assert_eq!(ta, tb);
    let doc = json(&String::from_utf8(ta).unwrap());
    assert!(doc["result"]["trajectory"].as_array().unwrap().len() > 1);
}

#[test]
fn heavier_latency_weight_never_slower() {
    let net = networks().join("two_cell.toml");
    let net = net.to_str().unwrap();
    for seed in ["1", "2", "3"] {
        let runtime = |lambda: &str| {
            let out = json(&ok(&[
                "--format", "json", "optimize", net, "--lambda", lambda, "--seed", seed,
            ]));
            out["result"]["final_cost"]["total_s"].as_f64().unwrap()
        };
        assert!(runtime("5") <= runtime("0.1"));
    }
}

#[test]
fn negative_weights_are_input_errors() {
    let net = networks().join("two_cell.toml");
    let o = systolic(&["optimize", net.to_str().unwrap(), "--lambda=-1"]);
    assert_eq!(o.status.code(), Some(1));
    let flat = networks().join("resnet_block.json");
    assert_eq!(
        systolic(&["optimize", flat.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn hypervolume_of_reported_front() {
    let dir = TempDir::new().unwrap();
    let pts = write(
        &dir,
        "pts.csv",
        "runtime_ms,accuracy_pct\n2.2,87.8\n1.05,87.9\n",
    );
    let out = json(&ok(&["--format", "json", "hypervolume", &pts]));
    assert!((out["hypervolume"].as_f64().unwrap() - 12.705).abs() < 1e-9);
    assert_eq!(out["front"].as_array().unwrap().len(), 1);
    assert!(ok(&["hypervolume", &pts]).contains("hypervolume: 12.705"));

    let headerless = write(&dir, "ref.csv", "0,100\n");
    let out = json(&ok(&["--format", "json", "hypervolume", &headerless]));
    assert_eq!(out["hypervolume"].as_f64().unwrap(), 0.0);
}

#[test]
fn bad_points_file_exits_1() {
    let dir = TempDir::new().unwrap();
    for (name, text) in [
        ("three.csv", "1,2,3\n"),
        ("text.csv", "runtime,acc\n1,abc\n"),
        ("range.csv", "1,120\n"),
        ("empty.csv", "runtime,acc\n"),
    ] {
        let p = write(&dir, name, text);
        assert_eq!(
            systolic(&["hypervolume", &p]).status.code(),
            Some(1),
            "{name}"
        );
    }
}

#[test]
fn lut_round_trip_through_blackbox_estimate() {
    let dir = TempDir::new().unwrap();
    let lut = dir.path().join("lut.json");
    let lut = lut.to_str().unwrap();
    let built = json(&ok(&[
        "--format",
        "json",
        "lut",
        "build",
        "--out",
        lut,
        "--spatial",
        "8,16",
        "--max-c",
        "160",
    ]));
    assert!(built["entries"].as_u64().unwrap() > 0);
    let net = write(
        &dir,
        "net.json",
        r#"{"input":{"h":16,"w":16,"c":96,"b":1},"layers":[{"kind":"conv","k":3,"f":128},{"kind":"maxpool"},{"kind":"conv","k":3,"f":130}]}"#,
    );
    let est = json(&ok(&[
        "--format", "json", "estimate", &net, "--model", "blackbox", "--lut", lut,
    ]));
    assert!(est["total_cycles"].as_u64().unwrap() > 0);
    let cmp = ok(&["compare", &net, "--lut", lut]);
    assert!(cmp.contains("blackbox") && cmp.contains("simulator"));
}
