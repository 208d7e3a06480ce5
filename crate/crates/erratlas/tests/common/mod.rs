#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use erratlas::assets::{Assets, LoadOptions};
use erratlas::fixture::{PlantedWorld, MANIFEST, PREDICTIONS_DIR};
use erratlas::pipeline;
use erratlas_core::cascade::{CascadeConfig, ModelRun};
use erratlas_core::cooccurrence::PairMining;

pub struct WorldRun {
    pub runs: Vec<ModelRun>,
    pub audit_failures: Vec<String>,
    pub mined: PairMining,
}

pub fn write_world(world: &PlantedWorld) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    world.write_to(dir.path()).unwrap();
    dir
}

pub fn predictions_glob(dir: &Path) -> String {
    format!("{}/{PREDICTIONS_DIR}/*.csv", dir.display())
}

/// Loads a written world and runs the cascade with an audit of every record.
pub fn classify_world(dir: &Path, jobs: usize) -> WorldRun {
    let assets = Assets::load(Some(&dir.join(MANIFEST)), LoadOptions { verify: true, mode: None }).unwrap();
    let mined = assets.mine_pairs().unwrap();
    let config = CascadeConfig::with_mode(assets.mode.into());
    let ctx = pipeline::cascade_context(&assets, &mined.pairs, &config).unwrap();
    let models = pipeline::load_predictions(&predictions_glob(dir)).unwrap();
    let pool = pipeline::thread_pool(Some(jobs)).unwrap();
    let runs = pipeline::classify_all(&ctx, &models, &pool).unwrap();
    let audit_failures = runs
        .iter()
        .flat_map(|r| r.records.iter())
        .filter_map(|r| ctx.audit(r).err().map(|f| format!("{} {}: {:?}", r.model, f.image, f.reason)))
        .collect();
    WorldRun { runs, audit_failures, mined }
}

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_erratlas"))
}

pub fn erratlas(args: &[&str]) -> Output {
    Command::new(bin()).args(args).env_remove("ERRATLAS_ASSETS").output().unwrap()
}

pub fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}
