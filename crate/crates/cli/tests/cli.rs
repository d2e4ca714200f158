use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bishop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bishop")).args(args).output().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    // The JSON payload starts on the first line that is a lone brace; chart
    // lines before it contain braces too.
    let start = if text.starts_with("{\n") {
        0
    } else {
        text.find("\n{\n").unwrap() + 1
    };
    serde_json::from_str(&text[start..]).unwrap()
}

fn scene_doc() -> Value {
    json!({
        "format": "bishop-scene v1",
        "seed": 4,
        "width": 512,
        "height": 512,
        "objects": [
            {"id": 0, "x": 0.20, "y": 0.60, "colour": "green"},
            {"id": 1, "x": 0.20, "y": 0.30, "colour": "purple"},
            {"id": 2, "x": 0.45, "y": 0.55, "colour": "purple"},
            {"id": 3, "x": 0.60, "y": 0.20, "colour": "green"},
            {"id": 4, "x": 0.80, "y": 0.80, "colour": "purple"}
        ]
    })
}

fn write_scene(dir: &Path) -> String {
    let path = dir.join("scene.json");
    std::fs::write(&path, scene_doc().to_string()).unwrap();
    path.to_str().unwrap().to_string()
}

fn write_corpus(dir: &Path, name: &str, records: &[(usize, &str, u32)]) -> String {
    let lines: Vec<String> = records
        .iter()
        .map(|&(index, utterance, target)| {
            let mut rec = json!({
                "session": "s",
                "index": index,
                "utterance": utterance,
                "target": target,
                "tags": ["anaphora"],
            });
            if index == 0 {
                rec["scene"] = scene_doc();
            }
            rec.to_string()
        })
        .collect();
    let path = dir.join(name);
    std::fs::write(&path, lines.join("\n")).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn chart_dump_shows_the_full_span_reading() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write_scene(dir.path());
    let out = bishop(&[
        "resolve",
        "--scene",
        &scene,
        "--utterance",
        "the purple one on the left",
        "--chart",
    ]);
    let text = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(
        text.lines()
            .any(|l| l.starts_with("span=[0,6) NP concept={") && !l.contains("concept={}")),
        "{text}"
    );
    let v = stdout_json(&out);
    assert_eq!(v["chosen"], 1);
    assert_eq!(v["consistency"], "Consistent");
}

#[test]
fn gibberish_has_no_referent() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write_scene(dir.path());
    let v = stdout_json(&bishop(&[
        "resolve",
        "--scene",
        &scene,
        "--utterance",
        "florp wibble zanth",
    ]));
    assert_eq!(v["chosen"], Value::Null);
    assert_eq!(v["consistency"], "NoReferent");
    assert_eq!(v["candidates"], json!([]));
}

#[test]
fn corpus_replay_follows_index_order() {
    let dir = tempfile::tempdir().unwrap();
    let ordered = write_corpus(
        dir.path(),
        "ordered.jsonl",
        &[(0, "the leftmost green one", 0), (1, "the one behind that one", 1)],
    );
    let out = bishop(&["eval", "--corpus", &ordered]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));

    // Same lines, but the anaphoric turn now comes first, before anything
    // has been removed, so it has no antecedent.
    let swapped = write_corpus(
        dir.path(),
        "swapped.jsonl",
        &[(1, "the leftmost green one", 0), (0, "the one behind that one", 1)],
    );
    let json_path = dir.path().join("report.json");
    let out = bishop(&["eval", "--corpus", &swapped, "--json", json_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(json_path).unwrap()).unwrap();
    let first = &report["outcomes"][0];
    assert_eq!(first["utterance"], "the one behind that one");
    assert_ne!(first["chosen"], first["target"]);
}

#[test]
fn eval_floor_is_configurable() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(
        dir.path(),
        "c.jsonl",
        &[(0, "the one behind that one", 1), (1, "the leftmost one", 0)],
    );
    assert_eq!(bishop(&["eval", "--corpus", &corpus]).status.code(), Some(1));
    assert_eq!(
        bishop(&["eval", "--corpus", &corpus, "--floor", "0.0"]).status.code(),
        Some(0)
    );
}

#[test]
fn strategies_report_the_same_accuracy() {
    let corpus = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/regression_corpus.jsonl");
    let corpus = corpus.to_str().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    assert!(bishop(&["eval", "--corpus", corpus, "--json", a.to_str().unwrap()])
        .status
        .success());
    assert!(bishop(&[
        "eval",
        "--corpus",
        corpus,
        "--sequential",
        "--json",
        b.to_str().unwrap()
    ])
    .status
    .success());
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn baseline_rejects_impossible_parameters() {
    let out = bishop(&["baseline", "--sessions", "10", "--trials", "31", "--objects", "30"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("trials"));
}

#[test]
fn baseline_is_seed_deterministic() {
    let a = stdout_json(&bishop(&["baseline", "--sessions", "500", "--seed", "3"]));
    let b = stdout_json(&bishop(&[
        "baseline",
        "--sessions",
        "500",
        "--seed",
        "3",
        "--sequential",
    ]));
    assert_eq!(a, b);
    assert_eq!(a["trials"], 30);
}

#[test]
fn missing_inputs_exit_with_code_two() {
    assert_eq!(
        bishop(&["resolve", "--scene", "/nonexistent.json", "--utterance", "x"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        bishop(&["eval", "--corpus", "/nonexistent.jsonl"]).status.code(),
        Some(2)
    );
}

#[test]
fn gen_writes_scene_and_png() {
    let dir = tempfile::tempdir().unwrap();
    let (scene, png) = (dir.path().join("s.json"), dir.path().join("s.png"));
    let out = bishop(&[
        "gen",
        "--seed",
        "2",
        "--objects",
        "12",
        "--out",
        scene.to_str().unwrap(),
        "--png",
        png.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&scene).unwrap()).unwrap();
    assert_eq!(doc["objects"].as_array().unwrap().len(), 12);
    assert_eq!(&std::fs::read(&png).unwrap()[1..4], b"PNG");
}

#[test]
fn features_lists_every_visible_object() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write_scene(dir.path());
    let out = bishop(&["features", "--scene", &scene]);
    let text = String::from_utf8_lossy(&out.stdout);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("id,r,g,b,cx,cy"));
    assert_eq!(lines.count(), 5);
}

#[test]
fn fit_colours_writes_a_loadable_lexicon() {
    let dir = tempfile::tempdir().unwrap();
    let lex = dir.path().join("lex.json");
    let out = bishop(&[
        "fit-colours",
        "--seed",
        "1",
        "--per-class",
        "40",
        "--out",
        lex.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let scene = write_scene(dir.path());
    let v = stdout_json(&bishop(&[
        "resolve",
        "--scene",
        &scene,
        "--lexicon",
        lex.to_str().unwrap(),
        "--utterance",
        "the rightmost green one",
    ]));
    assert_eq!(v["chosen"], 3);
}
