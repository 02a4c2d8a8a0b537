mod common;

use std::fs;
use std::path::Path;

use nucsel::mask::save_mask;
use nucsel::pipeline::run::layout;
use nucsel::pipeline::{report, run, RunConfig, RunManifest};
use nucsel::Error;

fn corpus(dir: &Path) {
    let images: Vec<(String, image::RgbImage)> = (0..4)
        .map(|i| {
            (
                format!("img{i}"),
                common::texture(i % 2, 128, 128, i as u64),
            )
        })
        .collect();
    common::write_corpus(&dir.join("corpus"), &images);
    let gt = common::disk_mask(64, 64, 5, 16);
    save_mask(&gt, &dir.join("bank.png"), None, None).unwrap();
    fs::create_dir_all(dir.join("gt")).unwrap();
    fs::create_dir_all(dir.join("pred")).unwrap();
    for i in 0..3 {
        save_mask(&gt, &dir.join(format!("gt/m{i}.png")), None, None).unwrap();
        let pred = common::disk_mask(64, 64, 4 + i, 16);
        save_mask(&pred, &dir.join(format!("pred/m{i}.png")), None, None).unwrap();
    }
}

fn config(dir: &Path, out: &str, with_eval: bool) -> RunConfig {
    let mut v = serde_json::json!({
        "corpus": "corpus/manifest.json",
        "s": 32, "t": 16, "k1": 2, "k2": 3, "seed": 5,
        "synth": {"masks": ["bank.png"], "count": 3, "canvas": 64, "size": 48},
        "output": out
    });
    if with_eval {
        v["eval"] = serde_json::json!({"gt_dir": "gt", "pred_dir": "pred", "match": "jaccard"});
    }
    let p = dir.join(format!("{out}.json"));
    fs::write(&p, v.to_string()).unwrap();
    RunConfig::from_file(&p).unwrap()
}

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_str(&fs::read_to_string(dir.join(layout::MANIFEST)).unwrap()).unwrap()
}

#[test]
fn full_run_then_reuse() {
    let tmp = tempfile::tempdir().unwrap();
    corpus(tmp.path());
    let cfg = config(tmp.path(), "run", true);
    let first = run(&cfg).unwrap();
    assert_eq!(
        first.executed,
        ["crop", "features", "cluster", "select", "synth", "eval", "report"]
    );
    assert_eq!(first.selected.len(), 2);
    let out = tmp.path().join("run");
    for f in [
        layout::PATCHES,
        layout::FEATURES,
        layout::CLUSTERING,
        layout::SELECTION,
        layout::TERMS,
        layout::METRICS,
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert!(out.join("report/summary.md").exists());
    assert!(out.join("report/metrics.svg").exists());
    assert_eq!(
        fs::read_dir(out.join(layout::SELECTED_DIR))
            .unwrap()
            .count(),
        2
    );
    let synth: Vec<_> = fs::read_dir(out.join("synth/00_bank")).unwrap().collect();
    assert_eq!(synth.len(), 3 * 2 + 1);

    let m1 = manifest(&out);
    let second = run(&cfg).unwrap();
    assert!(second.executed.is_empty(), "{:?}", second.executed);
    assert_eq!(second.selected, first.selected);
    let m2 = manifest(&out);
    assert_eq!(m1, m2);
    assert!(!fs::read_to_string(out.join(layout::MANIFEST))
        .unwrap()
        .contains("time"));
}

#[test]
fn separate_runs_are_hash_identical() {
    let tmp = tempfile::tempdir().unwrap();
    corpus(tmp.path());
    run(&config(tmp.path(), "a", true)).unwrap();
    run(&config(tmp.path(), "b", true)).unwrap();
    let (a, b) = (
        manifest(&tmp.path().join("a")),
        manifest(&tmp.path().join("b")),
    );
    assert_eq!(a.config_hash, b.config_hash);
    assert_eq!(a.stages, b.stages);
}

#[test]
fn changed_seed_reruns_cluster_but_reuses_crop() {
    let tmp = tempfile::tempdir().unwrap();
    corpus(tmp.path());
    let mut cfg = config(tmp.path(), "run", false);
    run(&cfg).unwrap();
    cfg.seed = 6;
    let again = run(&cfg).unwrap();
    assert!(again.skipped.contains(&"crop".to_string()));
    assert!(again.skipped.contains(&"features".to_string()));
    assert!(again.executed.contains(&"cluster".to_string()));
}

#[test]
fn report_without_evaluation() {
    let tmp = tempfile::tempdir().unwrap();
    corpus(tmp.path());
    let cfg = config(tmp.path(), "run", false);
    run(&cfg).unwrap();
    let out = tmp.path().join("run");
    let summary = fs::read_to_string(out.join("report/summary.md")).unwrap();
    assert!(summary.contains("no evaluation performed"));
    assert!(!out.join("report/metrics.svg").exists());
    let files = report(&out).unwrap();
    assert!(files.iter().any(|f| f.ends_with("criterion_terms.svg")));
    let m = manifest(&out);
    let eval = m.stages.iter().find(|s| s.name == "eval").unwrap();
    assert!(eval.outputs.is_empty());
}

#[test]
fn report_on_incomplete_run_names_missing_stages() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join(layout::PATCHES), "{}").unwrap();
    let err = report(tmp.path()).unwrap_err().to_string();
    assert!(err.contains("features") && err.contains("select"), "{err}");
    assert!(!err.contains("crop"), "{err}");
}

#[test]
fn odd_side_is_rejected_before_any_write() {
    let tmp = tempfile::tempdir().unwrap();
    corpus(tmp.path());
    let mut cfg = config(tmp.path(), "run", false);
    cfg.s = 33;
    assert!(matches!(run(&cfg), Err(Error::InvalidConfig(_))));
    assert!(!tmp.path().join("run").exists());
}

#[test]
fn failing_stage_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    corpus(tmp.path());
    let mut cfg = config(tmp.path(), "run", false);
    cfg.k1 = 500;
    match run(&cfg) {
        Err(Error::Stage { stage, .. }) => assert_eq!(stage, "cluster"),
        other => panic!("{other:?}"),
    }
    let m = manifest(&tmp.path().join("run"));
    assert!(m
        .stages
        .iter()
        .any(|s| s.name == "cluster" && s.error.is_some()));
}
