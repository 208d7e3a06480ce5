mod common;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use common::{erratlas, ok, predictions_glob};
use erratlas::assets::AssetManifest;
use erratlas::fixture::{generate, FixtureParams, EXPERT, MANIFEST, MODELS};

fn small(seed: u64, gaps: usize) -> FixtureParams {
    FixtureParams { seed, per_category: 8, gaps, background_refs: 100, ..FixtureParams::default() }
}

fn world_dir(params: FixtureParams) -> tempfile::TempDir {
    common::write_world(&generate(params))
}

fn manifest(dir: &Path) -> String {
    dir.join(MANIFEST).display().to_string()
}

fn stdout(out: &std::process::Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn validate_bundled_prints_catalogue() {
    let out = erratlas(&["validate", "--verify"]);
    ok(&out);
    let s = stdout(&out);
    assert!(s.contains("classes: 1000"), "{s}");
    assert!(s.contains("superclasses: 161"), "{s}");
    assert!(s.contains("classes in no superclass: 74"), "{s}");
}

#[test]
fn full_pipeline_on_a_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let world = dir.path().join("world");
    let w = world.display().to_string();
    ok(&erratlas(&["gen-fixture", "--seed", "3", "--per-category", "6", "--out", &w]));
    let m = manifest(&world);
    let out_dir = dir.path().join("run");
    let o = out_dir.display().to_string();
    ok(&erratlas(&["--manifest", &m, "--verify", "classify", "--predictions", &predictions_glob(&world), "--out", &o, "--audit"]));
    for f in ["records/model_0.csv", "records/model_1.csv", "records/model_2.csv", "errors.csv", "run.json"] {
        assert!(out_dir.join(f).is_file(), "{f} missing");
    }
    let records = format!("{o}/records/*.csv");
    let rep = dir.path().join("report").display().to_string();
    let models = world.join(MODELS).display().to_string();
    ok(&erratlas(&[
        "--manifest", &m, "report", "--records", &records, "--predictions", &predictions_glob(&world), "--models", &models,
        "--out", &rep,
    ]));
    for f in ["report.csv", "models.csv", "fits.csv", "fits.json"] {
        assert!(Path::new(&rep).join(f).is_file(), "{f} missing");
    }
    let expert = world.join(EXPERT).display().to_string();
    let cmp = erratlas(&["compare", "--records", &records, "--expert", &expert]);
    ok(&cmp);
    assert!(stdout(&cmp).contains("agreement: 42 of 42"), "{}", stdout(&cmp));
}

#[test]
fn extract_pairs_finds_the_planted_pairs() {
    let params = small(5, 0);
    let world = generate(params);
    let dir = common::write_world(&world);
    let out = dir.path().join("pairs.csv");
    ok(&erratlas(&["--manifest", &manifest(dir.path()), "extract-pairs", "--out", &out.display().to_string()]));
    let pairs = erratlas::formats::parse_pairs("pairs.csv", &fs::read(&out).unwrap()).unwrap();
    let got: BTreeSet<_> = pairs.iter().map(|(p, _)| (p.a.clone(), p.b.clone())).collect();
    assert_eq!(got, world.spurious_pairs);
}

#[test]
fn corrupted_file_fails_verification() {
    let dir = world_dir(small(1, 0));
    let m = manifest(dir.path());
    let problematic = dir.path().join("problematic.txt");
    let mut bytes = fs::read(&problematic).unwrap();
    bytes.extend_from_slice(b"\n");
    fs::write(&problematic, bytes).unwrap();

    let out = erratlas(&["--manifest", &m, "--verify", "validate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("checksum mismatch"));
    ok(&erratlas(&["--manifest", &m, "validate"]));
}

#[test]
fn imagenet_a_does_not_need_multilabel_verdicts() {
    let dir = world_dir(small(2, 0));
    let path = dir.path().join(MANIFEST);
    let mut man: AssetManifest = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
    man.multilabel = None;
    fs::write(&path, serde_json::to_vec_pretty(&man).unwrap()).unwrap();
    let m = path.display().to_string();

    let out = erratlas(&["--manifest", &m, "validate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("multilabel"));
    ok(&erratlas(&["--manifest", &m, "--mode", "imagenet-a", "validate"]));

    let o = dir.path().join("out");
    ok(&erratlas(&[
        "--manifest", &m, "--mode", "imagenet-a", "classify", "--predictions", &predictions_glob(dir.path()), "--out",
        &o.display().to_string(),
    ]));
    let records = fs::read_to_string(o.join("records/model_0.csv")).unwrap();
    assert!(!records.contains("multi_label_correct"));
}

#[test]
fn data_gaps_are_listed_not_fatal() {
    let dir = world_dir(small(4, 3));
    let o = dir.path().join("out");
    ok(&erratlas(&[
        "--manifest", &manifest(dir.path()), "classify", "--predictions", &predictions_glob(dir.path()), "--out",
        &o.display().to_string(),
    ]));
    let errors = fs::read_to_string(o.join("errors.csv")).unwrap();
    let model0 = errors.lines().filter(|l| l.starts_with("model_0,") && l.contains("no evaluation embedding")).count();
    assert_eq!(model0, 3, "{errors}");
    assert_eq!(errors.lines().filter(|l| l.ends_with("no prediction")).count(), 3, "{errors}");
}

#[test]
fn assets_directory_from_environment() {
    let dir = world_dir(small(6, 0));
    let out = std::process::Command::new(common::bin())
        .arg("validate")
        .env("ERRATLAS_ASSETS", dir.path())
        .output()
        .unwrap();
    ok(&out);
    assert!(stdout(&out).contains("superclasses: 8"));
}

#[test]
fn invalid_arguments_exit_nonzero() {
    let dir = world_dir(small(7, 0));
    let o = dir.path().join("out").display().to_string();
    let m = manifest(dir.path());
    let zero_k = erratlas(&["--manifest", &m, "classify", "--predictions", &predictions_glob(dir.path()), "--out", &o, "--k", "0"]);
    assert_eq!(zero_k.status.code(), Some(1));
    let nothing = erratlas(&["--manifest", &m, "classify", "--predictions", "/nonexistent/*.csv", "--out", &o]);
    assert_eq!(nothing.status.code(), Some(1));
    let missing = erratlas(&["--manifest", "/nonexistent/manifest.json", "validate"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn stage_subset_pushes_errors_down() {
    let dir = world_dir(small(8, 0));
    let o = dir.path().join("out");
    ok(&erratlas(&[
        "--manifest", &manifest(dir.path()), "classify", "--predictions", &predictions_glob(dir.path()), "--out",
        &o.display().to_string(), "--stages", "overlap,multi-label",
    ]));
    let records = fs::read_to_string(o.join("records/model_0.csv")).unwrap();
    assert!(!records.contains(",fine_grained,"));
    assert!(!records.contains(",spurious_correlation,"));
    assert!(records.contains(",model_failure,"));
}
