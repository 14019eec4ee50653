use std::path::Path;
use std::process::{Command, Output};

use patchforge::ingest::save_png;
use patchforge::{read_manifest, Raster};

fn patchforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_patchforge"))
        .args(args)
        .arg("--quiet")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn toy(dir: &Path) {
    for i in 0..2usize {
        let img = Raster::from_fn(240, 240, 3, |y, x, c| {
            ((x * (i + 1) + 3 * y + 50 * c) % 256) as f64
        });
        save_png(&img, dir.join(format!("t{i}.png"))).unwrap();
    }
}

#[test]
fn version_is_stable_and_names_schema() {
    let a = patchforge(&["version"]);
    let b = patchforge(&["version"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).contains("patchforge/1"));
    let json: serde_json::Value =
        serde_json::from_slice(&patchforge(&["version", "--json"]).stdout).unwrap();
    assert_eq!(json["schema"], "patchforge/1");
}

#[test]
fn misordered_config_fails_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(
        &cfg,
        "input_dir = \"imgs\"\noutput_root = \"out\"\n[[stage]]\nkind = \"extract\"\n[[stage]]\nkind = \"select\"\nmetric = \"grad\"\ntop_k = 2\n[[stage]]\nkind = \"score\"\n",
    )
    .unwrap();
    let out = patchforge(&["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config error"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn stagewise_commands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let imgs = dir.path().join("imgs");
    std::fs::create_dir(&imgs).unwrap();
    toy(&imgs);
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let run = |args: &[&str]| {
        let o = patchforge(args);
        assert!(
            o.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        o
    };
    run(&[
        "extract",
        "--input-dir",
        &p("imgs"),
        "--out",
        &p("m1.jsonl"),
    ]);
    run(&[
        "score",
        "--manifest",
        &p("m1.jsonl"),
        "--metrics",
        "grad,std",
        "--out",
        &p("m2.jsonl"),
    ]);
    run(&[
        "select",
        "--manifest",
        &p("m2.jsonl"),
        "--metric",
        "std",
        "--top-k",
        "3",
        "--prune",
        "--out",
        &p("m3.jsonl"),
    ]);
    run(&[
        "augment",
        "--manifest",
        &p("m3.jsonl"),
        "--transforms",
        "0,4",
        "--assert-invariant",
        "--out",
        &p("m4.jsonl"),
    ]);
    let m = read_manifest(p("m4.jsonl")).unwrap();
    assert_eq!(m.len(), 6);
    assert_eq!(
        m.records
            .iter()
            .filter(|r| r.patch_id.ends_with("#t4"))
            .count(),
        3
    );

    run(&[
        "degrade",
        "--manifest",
        &p("m1.jsonl"),
        "--model",
        "bicubic",
        "--scale",
        "4",
        "--out-dir",
        &p("lr"),
        "--out",
        &p("d.jsonl"),
    ]);
    assert_eq!(std::fs::read_dir(p("lr")).unwrap().count(), 8);

    let refused = patchforge(&[
        "augment",
        "--manifest",
        &p("m3.jsonl"),
        "--dihedral8",
        "--out",
        &p("x.jsonl"),
    ]);
    assert_eq!(refused.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&refused.stderr).contains("--assert-invariant"));

    let csv = run(&["report", "--manifest", &p("m2.jsonl"), "--summary", "grad"]);
    assert!(stdout(&csv).starts_with("metric,count,mean"));

    let gap = patchforge(&[
        "select",
        "--manifest",
        &p("m1.jsonl"),
        "--top-k",
        "1",
        "--out",
        &p("y.jsonl"),
    ]);
    assert_eq!(gap.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&gap.stderr).contains("missing on 8 record"));
}

#[test]
fn rerun_requires_force_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let imgs = dir.path().join("imgs");
    std::fs::create_dir(&imgs).unwrap();
    toy(&imgs);
    let root = dir.path().join("run");
    let args = [
        "run",
        "--input-dir",
        imgs.to_str().unwrap(),
        "--out-root",
        root.to_str().unwrap(),
    ];
    assert!(patchforge(&args).status.success());
    let first = std::fs::read(root.join("stage_4.jsonl")).unwrap();
    assert_eq!(patchforge(&args).status.code(), Some(1));
    let mut forced = args.to_vec();
    forced.push("--force");
    assert!(patchforge(&forced).status.success());
    assert_eq!(std::fs::read(root.join("stage_4.jsonl")).unwrap(), first);
}
