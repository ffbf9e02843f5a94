use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn ctreport(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctreport"))
        .args(args)
        .env_remove("CTREPORT_LLM_API_KEY")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = ctreport(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(args: &[&str]) -> i32 {
    ctreport(args).status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn phantom(dir: &Path) -> PathBuf {
    let out = dir.join("phantom");
    ok(&["make-phantom", "--out", s(&out)]);
    out.join("manifest.json")
}

fn demo_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../demo/demo.json")
}

#[test]
fn demo_pipeline_emits_documented_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    ok(&["pipeline", "--config", s(&demo_config()), "--out", s(&out)]);
    let study = out.join("phantom");
    let summary = read_json(&study.join("summary.json"));
    assert_eq!(summary["vision_tokens"], 356);
    assert_eq!(summary["seg_tokens"], 12);
    assert_eq!(summary["prompts"], 6);
    for r in 1..=6 {
        assert!(study.join(format!("prompt_region_{r}.jsonl")).is_file());
    }
    let attrs = read_json(&study.join("attributes.json"));
    assert_eq!(attrs["lesions"]["lung_nodule"]["count"], 2);
    assert!(out.join("weights.json").is_file());
}

#[test]
fn toml_config_matches_json_config() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["pipeline", "--config", s(&demo_config()), "--out", s(&a)]);
    ok(&[
        "pipeline",
        "--config",
        s(&demo_config().with_extension("toml")),
        "--out",
        s(&b),
    ]);
    for f in ["tokens.json", "segtok.json", "prompt_region_3.jsonl", "attributes.json"] {
        assert_eq!(
            std::fs::read(a.join("phantom").join(f)).unwrap(),
            std::fs::read(b.join("phantom").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn step_by_step_chain_matches_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let manifest = phantom(d);
    let config = d.join("c.json");
    std::fs::write(
        &config,
        r#"{"manifests": ["phantom/manifest.json"], "output_dir": "piped"}"#,
    )
    .unwrap();
    ok(&["--seed", "11", "pipeline", "--config", s(&config)]);

    let pre = d.join("pre");
    ok(&["ingest", "--manifest", s(&manifest), "--out", s(&pre)]);
    let pre_manifest = pre.join("manifest.json");
    let features = d.join("feat.json");
    ok(&["encode", "--volume", s(&pre.join("ct.json")), "--out", s(&features)]);
    let tokens = d.join("tokens.json");
    ok(&[
        "pool",
        "--features",
        s(&features),
        "--manifest",
        s(&pre_manifest),
        "--out",
        s(&tokens),
    ]);
    let segtok = d.join("segtok.json");
    ok(&[
        "--seed",
        "11",
        "segtok",
        "--features",
        s(&features),
        "--manifest",
        s(&pre_manifest),
        "--out",
        s(&segtok),
    ]);
    let attrs = d.join("attrs.json");
    ok(&["attrs", "--manifest", s(&manifest), "--out", s(&attrs)]);
    let prompts = d.join("prompts");
    ok(&[
        "prompt",
        "--tokens",
        s(&tokens),
        "--segtok",
        s(&segtok),
        "--attrs",
        s(&attrs),
        "--out-dir",
        s(&prompts),
    ]);

    let piped = d.join("piped/phantom");
    assert_eq!(
        std::fs::read(&segtok).unwrap(),
        std::fs::read(piped.join("segtok.json")).unwrap()
    );
    assert_eq!(
        std::fs::read(&attrs).unwrap(),
        std::fs::read(piped.join("attributes.json")).unwrap()
    );
    for r in 1..=6 {
        let f = format!("prompt_region_{r}.jsonl");
        assert_eq!(
            std::fs::read(prompts.join(&f)).unwrap(),
            std::fs::read(piped.join(&f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn seed_changes_projection_weights_only() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["--seed", "1", "pipeline", "--config", s(&demo_config()), "--out", s(&a)]);
    ok(&["--seed", "2", "pipeline", "--config", s(&demo_config()), "--out", s(&b)]);
    let f = |root: &Path, name: &str| std::fs::read(root.join("phantom").join(name)).unwrap();
    assert_eq!(f(&a, "tokens.layout.json"), f(&b, "tokens.layout.json"));
    assert_eq!(f(&a, "attributes.json"), f(&b, "attributes.json"));
    assert_ne!(f(&a, "segtok.json"), f(&b, "segtok.json"));
}

#[test]
fn attrs_voxel_units() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = phantom(dir.path());
    let mm: Value = serde_json::from_slice(&ok(&["attrs", "--manifest", s(&manifest)]).stdout).unwrap();
    let vox: Value =
        serde_json::from_slice(&ok(&["attrs", "--manifest", s(&manifest), "--voxel-units"]).stdout).unwrap();
    assert!(mm.get("diameter_unit").is_none());
    assert_eq!(vox["diameter_unit"], "voxels");
    assert_eq!(mm["organ_volumes_ml"], vox["organ_volumes_ml"]);
    let d_mm = mm["lesions"]["cyst"]["diameters_mm"][0].as_f64().unwrap();
    let d_vox = vox["lesions"]["cyst"]["diameters_mm"][0].as_f64().unwrap();
    assert_eq!(d_vox.fract(), 0.0);
    assert!(d_vox < d_mm);
    let text = ctreport(&["attrs", "--manifest", s(&manifest), "--voxel-units", "--text"]);
    assert!(String::from_utf8_lossy(&text.stderr).contains("voxels, location"));
}

#[test]
fn eval_writes_metric_report_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = dir.path().join("p.jsonl");
    std::fs::write(
        &pairs,
        concat!(
            r#"{"candidate": "the lungs are clear", "reference": "the lungs are clear"}"#,
            "\n",
            r#"{"candidate": "alpha beta", "reference": "gamma delta"}"#,
            "\n"
        ),
    )
    .unwrap();
    let report: Value = serde_json::from_slice(&ok(&["eval", "--pairs", s(&pairs)]).stdout).unwrap();
    assert_eq!(report["n"], 2);
    assert_eq!(report["per_pair"][0]["rouge_l"], 1.0);
    assert_eq!(report["per_pair"][0]["meteor_lite"], 1.0);
    assert_eq!(report["per_pair"][1]["rouge_l"], 0.0);
    assert!((report["corpus"]["rouge_l"].as_f64().unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn split_then_merge_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.txt");
    std::fs::write(
        &report,
        "The heart is normal in size. No pleural effusion. Lungs are clear.",
    )
    .unwrap();
    let structured = dir.path().join("s.json");
    ok(&["split-report", "--report", s(&report), "--out", s(&structured)]);
    let v = read_json(&structured);
    assert_eq!(v["regions"].as_array().unwrap().len(), 6);
    let merged = String::from_utf8(ok(&["merge-report", "--input", s(&structured), "--complete"]).stdout).unwrap();
    assert_eq!(merged.lines().count(), 6);
    for sentence in [
        "The heart is normal in size.",
        "No pleural effusion.",
        "Lungs are clear.",
    ] {
        assert!(merged.contains(sentence), "{merged}");
    }
    assert!(merged.contains("Unremarkable."));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["--version"]), 0);
    assert_eq!(code(&["no-such-command"]), 1);
    assert_eq!(code(&["eval", "--pairs", s(&d.join("missing.jsonl"))]), 2);

    let bad = d.join("bad.json");
    std::fs::write(&bad, r#"{"phantoms": [{}], "slices": 4}"#).unwrap();
    assert_eq!(code(&["pipeline", "--config", s(&bad)]), 1);
    let unknown = d.join("unknown.json");
    std::fs::write(&unknown, r#"{"phantoms": [{}], "colour": "red"}"#).unwrap();
    assert_eq!(code(&["pipeline", "--config", s(&unknown)]), 1);
    let dangling = d.join("dangling.json");
    std::fs::write(&dangling, r#"{"manifests": ["nope.json"]}"#).unwrap();
    assert_eq!(code(&["pipeline", "--config", s(&dangling)]), 2);

    let pairs = d.join("p.jsonl");
    std::fs::write(&pairs, "{\"candidate\": 3}\n").unwrap();
    assert_eq!(code(&["eval", "--pairs", s(&pairs)]), 1);
    assert_eq!(
        code(&[
            "prompt",
            "--tokens",
            "a",
            "--segtok",
            "b",
            "--attrs",
            "c",
            "--region",
            "9",
            "--out-dir",
            s(d)
        ]),
        2
    );
}

#[test]
fn generate_failures_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = d.join("out");
    ok(&["pipeline", "--config", s(&demo_config()), "--out", s(&out)]);
    let prompts = out.join("phantom");

    let disabled = d.join("off.toml");
    std::fs::write(&disabled, "enabled = false\n").unwrap();
    let r = ctreport(&["generate", "--prompts", s(&prompts), "--endpoint", s(&disabled)]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("disabled"));

    // A port nothing listens on: transport failure after retries.
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let fast = d.join("fast.toml");
    std::fs::write(&fast, "retries = 0\ntimeout_secs = 2.0\n").unwrap();
    let url = format!("http://{addr}/generate");
    let r = ctreport(&[
        "generate",
        "--prompts",
        s(&prompts),
        "--endpoint",
        s(&fast),
        "--base-url",
        &url,
    ]);
    assert_eq!(r.status.code(), Some(2), "{}", String::from_utf8_lossy(&r.stderr));
}

/// One-request-per-connection HTTP server answering the minimal shape with
/// "Seen: <last prompt line>".
fn echo_server() -> std::net::SocketAddr {
    use std::io::{BufRead, BufReader, Read, Write};
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let mut stream = stream.unwrap();
            std::thread::spawn(move || {
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line.trim().is_empty() {
                        break;
                    }
                    if let Some((k, v)) = line.split_once(':') {
                        if k.eq_ignore_ascii_case("content-length") {
                            len = v.trim().parse().unwrap();
                        }
                    }
                }
                let mut body = vec![0; len];
                reader.read_exact(&mut body).unwrap();
                let req: Value = serde_json::from_slice(&body).unwrap();
                let last = req["prompt"].as_str().unwrap().lines().last().unwrap().to_owned();
                let reply = serde_json::json!({"text": format!("Seen: {last}")}).to_string();
                write!(
                    stream,
                    "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{reply}",
                    reply.len()
                )
                .unwrap();
            });
        }
    });
    addr
}

#[test]
fn generate_writes_structured_and_merged_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    ok(&["pipeline", "--config", s(&demo_config()), "--out", s(&out)]);
    let addr = echo_server();
    let reports = dir.path().join("reports");
    let url = format!("http://{addr}/generate");
    let r = ok(&[
        "generate",
        "--prompts",
        s(&out.join("phantom")),
        "--base-url",
        &url,
        "--out",
        s(&reports),
    ]);
    let merged = std::fs::read_to_string(reports.join("report.txt")).unwrap();
    assert_eq!(String::from_utf8(r.stdout).unwrap(), merged);
    assert_eq!(merged.lines().count(), 6);
    assert!(
        merged
            .lines()
            .next()
            .unwrap()
            .ends_with("Seen: Describe findings for lung."),
        "{merged}"
    );
    let structured = read_json(&reports.join("report.json"));
    assert_eq!(
        structured["regions"][5][0],
        "Seen: Describe findings for upper abdomen."
    );
}

#[test]
fn report_commands_read_config_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("lex.json"), r#"{"5": ["heart"]}"#).unwrap();
    std::fs::write(d.join("c.toml"), "lexicon = \"lex.json\"\ncompleteness = true\n").unwrap();
    std::fs::write(d.join("r.txt"), "The heart is normal.").unwrap();
    let structured = d.join("s.json");
    ok(&[
        "split-report",
        "--report",
        s(&d.join("r.txt")),
        "--config",
        s(&d.join("c.toml")),
        "--out",
        s(&structured),
    ]);
    assert_eq!(read_json(&structured)["regions"][4][0], "The heart is normal.");
    let merged = ok(&[
        "merge-report",
        "--input",
        s(&structured),
        "--config",
        s(&d.join("c.toml")),
    ])
    .stdout;
    assert_eq!(String::from_utf8(merged).unwrap().lines().count(), 6);
}
