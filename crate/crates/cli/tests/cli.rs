mod common;

use std::collections::HashMap;

use common::{bin, p, run_ok, run_pipeline, snapshot, write_fixture};
use gtcurate_core::aggregate::{compute_finals, TestItem, TrainingPair};
use gtcurate_core::annoservice::{read_record_log, Label};
use gtcurate_core::manifest::{load_groups, read_jsonl};

#[test]
fn exit_codes() {
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));
    assert_eq!(bin().args(["degrade", "--help"]).output().unwrap().status.code(), Some(0));
    assert_eq!(bin().arg("--no-such-flag").output().unwrap().status.code(), Some(2));
    assert_eq!(bin().arg("frobnicate").output().unwrap().status.code(), Some(2));
    assert_eq!(bin().output().unwrap().status.code(), Some(2));
    let out = bin()
        .args(["aggregate", "--records", "/nonexistent/records.jsonl", "--report", "/tmp/x.jsonl"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn simulate_counts_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let one = dir.path().join("one.jsonl");
    run_ok(&["simulate-campaign", "--groups", "1", "--annotators", "3", "--seed", "1", "--out", p(&one)]);
    assert_eq!(read_record_log(&one).unwrap().len(), 12);

    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    for out in [&a, &b] {
        run_ok(&["simulate-campaign", "--groups", "50", "--annotators", "6", "--seed", "7", "--out", p(out)]);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let records = read_record_log(&a).unwrap();
    assert_eq!(records.len(), 600);
    let mut per_group: HashMap<&str, std::collections::HashSet<&str>> = HashMap::new();
    for r in &records {
        per_group.entry(&r.group_id).or_default().insert(&r.annotator_id);
    }
    assert_eq!(per_group.len(), 50);
    assert!(per_group.values().all(|s| s.len() == 3));

    let c = dir.path().join("c.jsonl");
    run_ok(&["simulate-campaign", "--groups", "50", "--annotators", "6", "--seed", "8", "--out", p(&c)]);
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());

    let err = bin()
        .args(["simulate-campaign", "--groups", "5", "--annotators", "2", "--out", p(&c)])
        .output()
        .unwrap();
    assert_eq!(err.status.code(), Some(1));
}

#[test]
fn all_positive_policy_gives_all_positive_finals() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("r.jsonl");
    run_ok(&[
        "simulate-campaign", "--groups", "30", "--annotators", "5", "--seed", "2", "--policy", "all-positive",
        "--out", p(&log),
    ]);
    let report = dir.path().join("report.jsonl");
    let finals = dir.path().join("finals.jsonl");
    run_ok(&["aggregate", "--records", p(&log), "--report", p(&report), "--finals", p(&finals)]);
    let rows: Vec<serde_json::Value> = read_jsonl(&report).unwrap();
    let total = rows
        .iter()
        .find(|r| r["table"] == "finals" && r["model"] == "total")
        .unwrap();
    assert_eq!(total["positive"], 120);
    assert_eq!(total["similar"], 0);
    assert_eq!(total["negative"], 0);
    let hist = rows
        .iter()
        .find(|r| r["table"] == "positive_histogram" && r["positives"] == 4)
        .unwrap();
    assert_eq!(hist["groups"], 30);
    let text = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(text.contains("Final labels per model"));
    assert_eq!(read_jsonl::<serde_json::Value>(&finals).unwrap().len(), 120);
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("pipeline.toml");
    std::fs::write(&cfg, "seed = 3\n[campaign]\nannotators = 4\nseed = 11\n").unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    let c = dir.path().join("c.jsonl");
    run_ok(&["--config", p(&cfg), "simulate-campaign", "--groups", "8", "--out", p(&a)]);
    run_ok(&["simulate-campaign", "--groups", "8", "--annotators", "4", "--seed", "11", "--out", p(&b)]);
    run_ok(&["--config", p(&cfg), "simulate-campaign", "--groups", "8", "--seed", "12", "--out", p(&c)]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
    let annotators: std::collections::BTreeSet<String> =
        read_record_log(&a).unwrap().into_iter().map(|r| r.annotator_id).collect();
    assert_eq!(annotators.len(), 4);

    std::fs::write(&cfg, "[loss]\nweights = [1.0, -1.0, 0.0, 0.0]\n").unwrap();
    let out = bin()
        .args(["--config", p(&cfg), "simulate-campaign", "--groups", "3", "--out", p(&c)])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn end_to_end_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let fx = write_fixture(&dir.path().join("fixture"), 6, 96);
    let run = dir.path().join("run");
    run_pipeline(&fx, &run, 48, 4, 4);

    // degrade: one LR per image at a quarter of the size
    let degraded: Vec<serde_json::Value> = read_jsonl(run.join("degrade.jsonl")).unwrap();
    assert_eq!(degraded.len(), 6);
    let lq = gtcurate_core::imgcore::ImageBuffer::load(run.join(degraded[0]["output"].as_str().unwrap())).unwrap();
    assert_eq!((lq.height(), lq.width()), (24, 24));

    // groups: patch files exist and manifest paths are relative
    let groups = load_groups(run.join("groups.jsonl")).unwrap();
    assert!(!groups.is_empty());
    for g in &groups {
        assert_eq!(g.model_ids, vec![1, 2, 3, 4]);
        assert!(std::path::Path::new(&g.original).is_file());
        assert!(g.variants.iter().all(|v| std::path::Path::new(v).is_file()));
    }
    let raw = std::fs::read_to_string(run.join("groups.jsonl")).unwrap();
    assert!(raw.contains("\"original\":\"groups/"));

    let records = read_record_log(run.join("records.jsonl")).unwrap();
    assert_eq!(records.len(), groups.len() * 12);
    let finals = compute_finals(&records).unwrap();

    // pairs: every Positive and Negative final, never a Similar one
    let pairs: Vec<TrainingPair> = read_jsonl(run.join("pairs.jsonl")).unwrap();
    let expected = finals.iter().filter(|f| f.label != Label::Similar).count();
    assert_eq!(pairs.len(), expected);
    for pair in &pairs {
        let lr = gtcurate_core::imgcore::ImageBuffer::load(run.join(&pair.lr)).unwrap();
        assert_eq!((lr.height(), lr.width()), (12, 12));
        assert!(run.join(&pair.gt).is_file());
    }

    // test set: the requested number of items, each with >= 2 positive GTs
    let items: Vec<TestItem> = read_jsonl(run.join("test.jsonl")).unwrap();
    assert_eq!(items.len(), 4);
    assert!(items.iter().all(|i| i.gts.len() >= 2));

    // eval: upsampled LR as SR output
    let sr_dir = run.join("sr");
    std::fs::create_dir_all(&sr_dir).unwrap();
    for item in &items {
        let lr = gtcurate_core::imgcore::ImageBuffer::load(run.join(&item.lr)).unwrap();
        let up = gtcurate_core::degrade::upsample_back(&lr, 48, 48).unwrap();
        up.save_png(sr_dir.join(format!("{}.png", item.item_id))).unwrap();
    }
    let report = run.join("eval.jsonl");
    run_ok(&["eval", "--testset", p(&run.join("test.jsonl")), "--sr", p(&sr_dir), "--metrics", "psnr,ssim", "--report", p(&report)]);
    let rows: Vec<serde_json::Value> = read_jsonl(&report).unwrap();
    assert_eq!(rows.len(), 4);
    for (row, item) in rows.iter().zip(&items) {
        let psnr = &row["scores"][0];
        assert_eq!(psnr["name"], "psnr");
        let per: Vec<f64> = serde_json::from_value(psnr["per_gt"].clone()).unwrap();
        assert_eq!(per.len(), item.gts.len());
        let mean = per.iter().sum::<f64>() / per.len() as f64;
        assert!((psnr["value"].as_f64().unwrap() - mean).abs() < 1e-9);
        assert!(mean > 10.0 && mean < 100.0);
    }

    // aggregate over the manifest
    run_ok(&["aggregate", "--records", p(&run.join("records.jsonl")), "--groups", p(&run.join("groups.jsonl")), "--report", p(&run.join("report.jsonl"))]);
    let text = std::fs::read_to_string(run.join("report.txt")).unwrap();
    assert!(text.contains("without complete final labels: 0"));

    // loss-check on one group
    let g = &groups[0];
    let dump = run.join("maps");
    let out = run_ok(&[
        "loss-check", "--pos", &g.variants[0], "--neg", &g.variants[2], "--hr", &g.original, "--sr", &g.variants[1],
        "--a", "0.75", "--weights", "1,1,0.1,300", "--dump", p(&dump),
    ]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let loss = &report["loss"];
    let total = loss["l1"].as_f64().unwrap() - 300.0 * loss["negative"].as_f64().unwrap();
    assert!((loss["total"].as_f64().unwrap() - total).abs() < 1e-9);
    for m in ["m_pos", "m_neg", "m_ind", "loss"] {
        let ext = if m == "loss" { "json" } else { "png" };
        assert!(dump.join(format!("{m}.{ext}")).is_file(), "{m}");
    }
}

#[test]
fn pipeline_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let fx = write_fixture(&dir.path().join("fixture"), 4, 80);
    run_pipeline(&fx, &dir.path().join("run1"), 40, 4, 2);
    run_pipeline(&fx, &dir.path().join("run2"), 40, 4, 2);
    let a = snapshot(&dir.path().join("run1"));
    let b = snapshot(&dir.path().join("run2"));
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (k, v) in &a {
        assert!(v == &b[k], "{k} differs");
    }
}

#[test]
fn serve_rejects_missing_campaign() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "serve-annotation", "--campaign", p(&dir.path().join("none.toml")), "--log", p(&dir.path().join("l.jsonl")),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
