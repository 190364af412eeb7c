use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cspscale"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    stdout(&out)
}

fn json(args: &[&str]) -> Value {
    serde_json::from_str(&ok(args)).expect("valid JSON")
}

fn code(args: &[&str]) -> i32 {
    run(args).status.code().unwrap()
}

#[test]
fn presets_list_names_every_preset() {
    let text = ok(&["presets", "list"]);
    for name in cspscale::PRESET_NAMES {
        assert!(text.contains(name), "{name} missing");
    }
    let list = json(&["presets", "list", "--format", "json"]);
    assert_eq!(list.as_array().unwrap().len(), cspscale::PRESET_NAMES.len());
}

#[test]
fn analyze_with_oracle_reports_zero_difference() {
    let doc = json(&["analyze", "yolov4-tiny", "--format", "json", "--oracle"]);
    for metric in ["flops", "params", "mac", "cio", "receptive_field"] {
        assert_eq!(doc["difference"][metric], 0, "{metric}");
        assert_eq!(doc["closed_form"][metric], doc["oracle"][metric]);
    }
}

#[test]
fn analyze_json_matches_library() {
    let doc = json(&["analyze", "cspdarknet53", "--format", "json"]);
    let lib = cspscale::analyze(&cspscale::preset("cspdarknet53").unwrap().spec).unwrap();
    let round: cspscale::CostReport = serde_json::from_value(doc["closed_form"].clone()).unwrap();
    assert_eq!(round, lib);
}

#[test]
fn analyze_input_override() {
    let doc = json(&["analyze", "cspdarknet53", "--input", "512", "--format", "json"]);
    assert_eq!(doc["input"]["width"], 512);
    let default = json(&["analyze", "cspdarknet53", "--format", "json"]);
    assert!(doc["closed_form"]["flops"].as_u64() < default["closed_form"]["flops"].as_u64());
}

#[test]
fn csv_columns_are_fixed() {
    let text = ok(&["analyze", "yolov4-tiny", "--format", "csv"]);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "stage,name,role,kind,flops,params,mac,cio,receptive_field"
    );
    let last = text.lines().last().unwrap();
    assert!(last.starts_with("total,"), "{last}");
}

#[test]
fn table_shows_raw_and_human_counts() {
    let text = ok(&["analyze", "yolov4-tiny"]);
    assert!(text.contains("3528698368"));
    assert!(text.contains("3.53G"));
}

#[test]
fn csp_detector_pair_cuts_about_a_third() {
    let a = json(&["analyze", "darknet53+fpnspp", "--format", "json"]);
    let b = json(&["analyze", "cd53s+cfpnspp", "--format", "json"]);
    for metric in ["params", "flops"] {
        let x = a["closed_form"][metric].as_f64().unwrap();
        let y = b["closed_form"][metric].as_f64().unwrap();
        let cut = 100.0 * (1.0 - y / x);
        assert!((cut - 32.0).abs() <= 4.0, "{metric} {cut}");
    }
}

#[test]
fn compare_matches_cspize_report() {
    let cmp = json(&["compare", "darknet53", "cspdarknet53", "--format", "json"]);
    let rewrite = json(&["cspize", "darknet53", "--scope", "all", "--format", "json"]);
    let a = cmp["metrics"]["flops"]["reduction"].as_f64().unwrap();
    let b = rewrite["flops_delta"].as_f64().unwrap();
    assert!((a - b).abs() < 1e-12, "{a} vs {b}");
}

#[test]
fn compare_with_pruned_matches_prune_report() {
    let cmp = json(&["compare", "yolov4-p7", "yolov4-p7\\P7", "--format", "json"]);
    let prune = json(&["prune", "yolov4-p7", "--remove", "P7", "--format", "json"]);
    assert_eq!(cmp["metrics"]["flops"]["b"], prune["after"]["flops"]);
    let a = cmp["metrics"]["flops"]["reduction"].as_f64().unwrap();
    assert!((a - prune["flops_delta"].as_f64().unwrap()).abs() < 1e-12);
}

#[test]
fn self_compare_is_zero() {
    let cmp = json(&["compare", "yolov4-csp", "yolov4-csp", "--format", "json", "--oracle"]);
    for (_, m) in cmp["metrics"].as_object().unwrap() {
        assert_eq!(m["reduction"].as_f64().unwrap(), 0.0);
    }
}

#[test]
fn cspize_neck_writes_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("neck.toml");
    let doc = json(&[
        "cspize",
        "pan-spp-neck",
        "--scope",
        "neck",
        "--format",
        "json",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert!(!doc["transform_log"].as_array().unwrap().is_empty());
    let written = cspscale::parse_spec(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let expected = cspscale::preset("csppan-spp-neck").unwrap().spec;
    assert_eq!(written.stages, expected.stages);
}

#[test]
fn cspize_without_candidates_warns() {
    let out = run(&["cspize", "yolov4-tiny", "--scope", "neck"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no rewritable stage"));
}

#[test]
fn prune_levels_and_errors() {
    let doc = json(&["prune", "yolov4-p7", "--remove", "P7", "--remove", "P6", "--format", "json"]);
    assert!(doc["flops_delta"].as_f64().unwrap() > 0.0);
    assert_eq!(code(&["prune", "yolov4-p7", "--remove", "P6"]), 3);
    assert_eq!(code(&["prune", "yolov4-p7", "--remove", "P9"]), 3);
    let err = run(&["prune", "yolov4-p7", "--remove", "P6"]);
    assert!(String::from_utf8_lossy(&err.stderr).contains("non-contiguous removal"));
}

#[test]
fn scale_p5_to_p6_and_p7() {
    for (name, input, width) in [("yolov4-p6", "1280", 1.0), ("yolov4-p7", "1536", 1.25)] {
        let target = cspscale::analyze(&cspscale::preset(name).unwrap().spec).unwrap();
        let budget = target.flops.to_string();
        let plan = json(&["scale", "yolov4-p5", "--input", input, "--budget-flops", &budget, "--format", "json"]);
        assert_eq!(plan["width_multiplier"].as_f64().unwrap(), width);
        assert_eq!(plan["cost"]["flops"].as_u64().map(u128::from), Some(target.flops));
        let spec = cspscale::parse_spec(plan["spec"].as_str().unwrap()).unwrap();
        assert_eq!(spec.stages, cspscale::preset(name).unwrap().spec.stages);
    }
}

#[test]
fn scale_identity_and_infeasible() {
    let plan = json(&["scale", "yolov4-p5", "--input", "896", "--budget-ratio", "1", "--format", "json"]);
    assert_eq!(plan["factors"]["delta_stages"], 0);
    assert_eq!(plan["factors"]["gamma_width"], 1.0);
    assert_eq!(code(&["scale", "yolov4-p5", "--input", "1280", "--budget-flops", "1"]), 3);
    assert_eq!(code(&["scale", "yolov4-p5", "--input", "1280"]), 1);
}

#[test]
fn check_tiny_reports() {
    let doc = json(&["check-tiny", "yolov4-tiny", "--tau", "32", "--format", "json"]);
    assert_eq!(doc["tau"], 32);
    for p in doc["principles"].as_array().unwrap() {
        assert_eq!(p["status"], "pass", "{p}");
    }
    let text = ok(&["check-tiny", "darknet53"]);
    assert!(text.contains("[FAIL] 1."));
}

#[test]
fn file_round_trip_through_presets_show() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiny.toml");
    std::fs::write(&path, ok(&["presets", "show", "yolov4-tiny"])).unwrap();
    let from_file = json(&["analyze", path.to_str().unwrap(), "--format", "json"]);
    let from_preset = json(&["analyze", "yolov4-tiny", "--format", "json"]);
    assert_eq!(from_file["closed_form"], from_preset["closed_form"]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let syntax = dir.path().join("syntax.toml");
    std::fs::write(&syntax, "name = \"x\"\n[input\n").unwrap();
    let semantic = dir.path().join("semantic.toml");
    std::fs::write(
        &semantic,
        "name = \"x\"\n[input]\nwidth = 32\nheight = 32\nchannels = 16\n\n[[stages]]\nkind = \"Dark\"\nrepeats = 1\nbase_channels = 16\ngrowth = 8\ndownsample = false\nrole = \"backbone\"\n",
    )
    .unwrap();
    let unknown_key = dir.path().join("unknown.toml");
    std::fs::write(
        &unknown_key,
        "name = \"x\"\nwidth_mult = 2\n[input]\nwidth = 32\nheight = 32\nchannels = 16\n",
    )
    .unwrap();

    assert_eq!(code(&["bogus"]), 1);
    assert_eq!(code(&["analyze"]), 1);
    assert_eq!(code(&["analyze", "no-such-preset"]), 1);
    assert_eq!(code(&["analyze", "missing/file.toml"]), 1);
    assert_eq!(code(&["analyze", "yolov4-tiny", "--input", "16"]), 1);
    assert_eq!(code(&["analyze", "yolov4-tiny", "--format", "xml"]), 1);
    assert_eq!(code(&["analyze", "yolov4-tiny", "--tau", "0"]), 1);
    assert_eq!(code(&["analyze", syntax.to_str().unwrap()]), 2);
    assert_eq!(code(&["analyze", unknown_key.to_str().unwrap()]), 2);
    assert_eq!(code(&["analyze", semantic.to_str().unwrap()]), 3);
    assert_eq!(code(&["analyze", "yolov4-csp", "--input", "600"]), 3);
    assert_eq!(code(&["--help"]), 0);

    let err = run(&["analyze", semantic.to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&err.stderr).contains("growth forbidden for kind Dark"));
    let err = run(&["analyze", syntax.to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&err.stderr).contains("line 2"));
}

#[test]
fn output_is_deterministic() {
    let a = ok(&["scale", "yolov4-p5", "--input", "1536", "--budget-ratio", "8", "--format", "json"]);
    let b = ok(&["scale", "yolov4-p5", "--input", "1536", "--budget-ratio", "8", "--format", "json"]);
    assert_eq!(a, b);
}
