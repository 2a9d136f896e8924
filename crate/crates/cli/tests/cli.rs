use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use outfitter_core::fixtures;
use outfitter_core::imaging::encode_png;
use outfitter_core::RasterImage;
use serde_json::Value;

fn outfitter(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_outfitter"))
        .args(args)
        .env_remove("TF_BACKEND_EMBED_URL")
        .env_remove("TF_BACKEND_EMBED_MODE")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = outfitter(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// The last stderr line, parsed as the machine-readable error.
fn failure(args: &[&str]) -> (i32, Value) {
    let out = outfitter(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let stderr = String::from_utf8(out.stderr).unwrap();
    let line = stderr.lines().last().unwrap();
    (
        out.status.code().unwrap(),
        serde_json::from_str(line).unwrap(),
    )
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn demo_catalog(dir: &Path) -> std::path::PathBuf {
    let demo = dir.join("demo");
    let catalog = dir.join("catalog");
    ok(&["fixtures", "--out", s(&demo)]);
    let summary: Value = serde_json::from_str(&ok(&[
        "ingest",
        "--images",
        s(&demo.join("garments")),
        "--captions",
        s(&demo.join("captions.tsv")),
        "--out",
        s(&catalog),
        "--mock",
    ]))
    .unwrap();
    assert_eq!(summary["records"], 8);
    catalog
}

#[test]
fn match_ranks_each_fixture_caption_first() {
    let dir = tempfile::tempdir().unwrap();
    let catalog = demo_catalog(dir.path());
    for g in fixtures::garments() {
        let table = ok(&[
            "match",
            "--catalog",
            s(&catalog),
            "--query",
            g.caption,
            "--k",
            "3",
        ]);
        let first = table.lines().nth(1).unwrap();
        assert_eq!(
            first.split('\t').nth(1),
            Some(g.garment_id),
            "{}: {table}",
            g.caption
        );
    }
    let v: Value = serde_json::from_str(&ok(&[
        "match",
        "--catalog",
        s(&catalog),
        "--query",
        "blue",
        "--category",
        "dress",
        "--json",
    ]))
    .unwrap();
    let results = v["results"].as_array().unwrap();
    assert_eq!(results.len(), 2);
    assert!(results.iter().all(|r| r["category"] == "dress"));
}

#[test]
fn mock_edit_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["fixtures", "--out", s(dir.path())]);
    let person = dir.path().join("person.png");
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let stdout = ok(&[
            "edit",
            "--person",
            s(&person),
            "--instruction",
            "change into the red floral top",
            "--out",
            s(&out),
            "--seed",
            seed,
            "--mock",
        ]);
        let v: Value = serde_json::from_str(&stdout).unwrap();
        assert_eq!(v["trace"]["outcome"]["kind"], "Edited");
        assert_eq!(v["trace"]["route"]["garment_id"], "top_red_floral");
        fs::read(out).unwrap()
    };
    let a = run("a.png", "11");
    let b = run("b.png", "11");
    assert_eq!(a, b);
    assert_ne!(a, fs::read(&person).unwrap());
}

#[test]
fn edit_failures_emit_error_lines() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["fixtures", "--out", s(dir.path())]);
    let person = dir.path().join("person.png");
    let out = dir.path().join("out.png");
    let edit = |instruction: &str| {
        failure(&[
            "edit",
            "--person",
            s(&person),
            "--instruction",
            instruction,
            "--out",
            s(&out),
            "--mock",
        ])
    };
    let (code, v) = edit("what's the weather");
    assert_eq!((code, v["error"].as_str()), (6, Some("RefusedNotTryOn")));
    let (code, v) = edit("add a pocket");
    assert_eq!((code, v["error"].as_str()), (6, Some("RegionNotFound")));
    assert!(!out.exists());

    let (code, v) = failure(&[
        "edit",
        "--person",
        "/nonexistent.png",
        "--instruction",
        "x",
        "--out",
        s(&out),
        "--mock",
    ]);
    assert_eq!((code, v["error"].as_str()), (3, Some("IoError")));
    assert_eq!(v["exit_code"], 3);
}

#[test]
fn corrupt_catalog_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let catalog = demo_catalog(dir.path());
    let vec_path = catalog.join("catalog.vec");
    let mut bytes = fs::read(&vec_path).unwrap();
    let n = bytes.len();
    bytes.truncate(n - 7);
    fs::write(&vec_path, bytes).unwrap();
    let (code, v) = failure(&["match", "--catalog", s(&catalog), "--query", "red top"]);
    assert_eq!((code, v["error"].as_str()), (4, Some("CorruptIndex")));
}

fn write(path: &Path, img: &RasterImage) {
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    fs::write(path, encode_png(img)).unwrap();
}

#[test]
fn eval_identical_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let a = fixtures::person_image();
    let b = fixtures::garments()[0].image.clone();
    for (name, img) in [("a.png", &a), ("b.png", &b)] {
        write(&dir.path().join("ref").join(name), img);
        write(&dir.path().join("out").join(name), img);
    }
    let table = ok(&["eval", "--pairs", s(dir.path())]);
    let rows: Vec<Vec<&str>> = table
        .lines()
        .skip(1)
        .map(|l| l.split('\t').collect())
        .collect();
    assert_eq!(rows.len(), 3);
    for row in &rows {
        assert_eq!(row[1], "Infinite", "{table}");
        assert_eq!(row[2], "1.000000", "{table}");
    }
    assert_eq!(rows[2][0], "mean");
}

#[test]
fn eval_reports_differences() {
    let dir = tempfile::tempdir().unwrap();
    let a = RasterImage::from_fn_gray(16, 16, |x, y| (x * 8 + y) as u8);
    let b = RasterImage::from_fn_gray(16, 16, |x, y| (x * 8 + y) as u8 ^ 4);
    write(&dir.path().join("ref/p.png"), &a);
    write(&dir.path().join("out/p.png"), &b);
    let v: Value =
        serde_json::from_str(&ok(&["eval", "--pairs", s(dir.path()), "--json"])).unwrap();
    let pair = &v["pairs"][0];
    // Every pixel differs by exactly 4, so MSE = 16.
    let expected = 10.0 * (255.0f64 * 255.0 / 16.0).log10();
    assert!((pair["psnr_db"].as_f64().unwrap() - expected).abs() < 1e-9);
    assert!(pair["ssim"].as_f64().unwrap() < 1.0);

    fs::remove_file(dir.path().join("out/p.png")).unwrap();
    let (code, v) = failure(&["eval", "--pairs", s(dir.path())]);
    assert_eq!((code, v["error"].as_str()), (3, Some("IoError")));
}

#[test]
fn bad_usage_exits_two() {
    let out = outfitter(&["match", "--catalog", "x"]);
    assert_eq!(out.status.code(), Some(2));
    let (code, v) = failure(&["match", "--catalog", "x", "--query", "red", "--k", "0"]);
    assert_eq!((code, v["error"].as_str()), (2, Some("InvalidArgument")));
}

#[test]
fn serve_rejects_invalid_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("service.toml");
    fs::write(&config, "tau = 3.0\n").unwrap();
    let (code, v) = failure(&["serve", "--config", s(&config)]);
    assert_eq!((code, v["error"].as_str()), (2, Some("ConfigError")));
}
