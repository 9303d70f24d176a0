use std::path::Path;
use std::process::{Command, Output};

use causal_core::annotation::serialize_standoff;
use causal_core::corpus::write_corpus;
use causal_core::dataset::annotation_path;
use causal_core::synthetic::generate;
use serde_json::Value;

fn causal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_causal"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json_out(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Synthetic corpus where annotators `a` and `b` both wrote the gold set.
fn annotated_corpus(dir: &Path, n: usize) {
    let texts = generate(n, 5, "t");
    let units: Vec<_> = texts.iter().map(|t| t.unit.clone()).collect();
    write_corpus(dir, &units).unwrap();
    for t in &texts {
        for who in ["a", "b"] {
            let path = annotation_path(dir, who, &t.unit.id);
            std::fs::create_dir_all(path.parent().unwrap()).unwrap();
            std::fs::write(path, serialize_standoff(&t.gold)).unwrap();
        }
    }
}

#[test]
fn help_exits_zero_and_bad_usage_exits_one() {
    assert_eq!(causal(&["--help"]).status.code(), Some(0));
    assert_eq!(causal(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(causal(&["report"]).status.code(), Some(1));
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.csv");
    let out = causal(&["ingest", "--fmea", s(&missing), "--out", s(&dir.path().join("c"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn ingest_reads_tables_and_slides() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("fmea.csv");
    std::fs::write(
        &table,
        "failure_mode,effect,cause\nDie crack,Yield loss,Saw blade wear\nScratch,,Handling\n",
    )
    .unwrap();
    let slides = dir.path().join("slides.json");
    std::fs::write(
        &slides,
        r#"[{"index": 1, "boxes": [{"text": "Voids due to outgassing", "bbox": [0.1, 0.1, 0.9, 0.2]}, {"text": "  ", "bbox": [0.1, 0.5, 0.9, 0.6]}]}]"#,
    )
    .unwrap();
    let corpus = dir.path().join("corpus");
    let v = json_out(&causal(&[
        "ingest",
        "--fmea",
        s(&table),
        "--slides",
        s(&slides),
        "--out",
        s(&corpus),
    ]));
    assert_eq!(v["units"], 6);
    assert_eq!(v["fmea"], 5);
    assert_eq!(v["slides"], 1);
    assert_eq!(v["skipped_empty"], 2);
    let units = causal_core::corpus::read_corpus(&corpus).unwrap();
    assert!(units.iter().any(|u| u.text == "Voids due to outgassing"));
}

#[test]
fn validate_flags_broken_annotations() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    annotated_corpus(&corpus, 12);
    let v = json_out(&causal(&["validate", "--corpus", s(&corpus)]));
    assert_eq!(v["violations"].as_array().unwrap().len(), 0);
    assert_eq!(v["checked"], 24);

    // A trigger with no relations breaks the complete-relation rule.
    let units = causal_core::corpus::read_corpus(&corpus).unwrap();
    let id = &units[0].id;
    let first = units[0].text.chars().next().unwrap();
    std::fs::write(annotation_path(&corpus, "a", id), format!("T1\tTrigger 0 1\t{first}\n")).unwrap();
    let out = causal(&["validate", "--corpus", s(&corpus)]);
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let found = v["violations"].as_array().unwrap();
    assert!(found.iter().all(|f| f["text_id"] == id.as_str() && f["annotator"] == "a"));
    assert!(!found.is_empty());
}

#[test]
fn identical_annotators_agree_fully() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    annotated_corpus(&corpus, 30);
    let v = json_out(&causal(&["iaa", "--corpus", s(&corpus)]));
    let table = v["table"].as_str().unwrap();
    let trigger = table.lines().find(|l| l.starts_with("Trigger")).unwrap();
    assert!(trigger.split_whitespace().skip(1).all(|c| c == "100"), "{trigger}");
}

#[test]
fn pipeline_from_corpus_to_graph() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    annotated_corpus(&p("corpus"), 60);

    let v = json_out(&causal(&["build-dataset", "--corpus", s(&p("corpus")), "--out", s(&p("data"))]));
    assert_eq!(v["records"], 60);
    assert_eq!(v["folds"].as_array().unwrap().len(), 5);

    let v = json_out(&causal(&["pmi-vocab", "--corpus", s(&p("corpus")), "--min-count", "2", "--out", s(&p("pmi.json"))]));
    assert!(v["entries"].as_u64().unwrap() > 0);

    for model in ["sst", "mst"] {
        let run = p(model);
        let v = json_out(&causal(&[
            "train",
            "--model",
            model,
            "--dataset",
            s(&p("data")),
            "--max-epochs",
            "2",
            "--out",
            s(&run),
        ]));
        assert!(v["report"].is_object());
        for f in ["config.json", "metrics.jsonl", "report.json", "table.txt", "fold-0/model/model.json"] {
            assert!(run.join(f).exists(), "{model} run lacks {f}");
        }
        let v = json_out(&causal(&[
            "evaluate",
            "--model",
            s(&run.join("fold-0/model")),
            "--dataset",
            s(&p("data")),
            "--folds",
            s(&p("data/folds.json")),
        ]));
        assert!(!v["records"].as_array().unwrap().is_empty());
        let v = json_out(&causal(&["report", "--run", s(&run)]));
        assert!(v["table"].as_str().unwrap().contains("Annotation Type"));
    }

    let v = json_out(&causal(&[
        "report",
        "--sst",
        s(&p("sst")),
        "--mst",
        s(&p("mst")),
        "--title",
        "tiny",
    ]));
    assert!(v["table"].as_str().unwrap().contains("Trigger Grouping"));

    let mst_model = p("mst").join("fold-0/model");
    let v = json_out(&causal(&["extract", "--model", s(&mst_model), "--corpus", s(&p("corpus")), "--out", s(&p("graph.json"))]));
    assert_eq!(v["texts"], 60);
    let graph: Value = serde_json::from_str(&std::fs::read_to_string(p("graph.json")).unwrap()).unwrap();
    assert_eq!(graph["texts"].as_array().unwrap().len(), 60);

    let v = json_out(&causal(&["split-cells", "--model", s(&mst_model), "--corpus", s(&p("corpus")), "--out", s(&p("splits.jsonl"))]));
    assert!(v["cells"].as_u64().unwrap() > 0);
    assert!(p("splits.jsonl").exists());

    let sst_model = p("sst").join("fold-0/model");
    let out = causal(&["split-cells", "--model", s(&sst_model), "--corpus", s(&p("corpus")), "--out", s(&p("x.jsonl"))]);
    assert_eq!(out.status.code(), Some(1));
}
