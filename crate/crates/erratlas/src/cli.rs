use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use erratlas_core::cascade::{CascadeConfig, Stage};
use erratlas_core::metrics::SizeThresholds;
use erratlas_core::Group;

use crate::assets::{Assets, LoadOptions, Mode};
use crate::fixture::{self, FixtureParams};
use crate::{formats, pipeline};

pub const ASSETS_ENV: &str = "ERRATLAS_ASSETS";

#[derive(Debug, Parser)]
#[command(name = "erratlas", version, about = "Categorize image-classifier errors by severity")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Asset manifest. Defaults to `$ERRATLAS_ASSETS/manifest.json`, then to
    /// the bundled ImageNet label space.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Check every file against the manifest checksums.
    #[arg(long, global = true)]
    pub verify: bool,
    /// Override the manifest's dataset mode.
    #[arg(long, global = true, value_enum)]
    pub mode: Option<Mode>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and cross-check all assets, print label-space statistics.
    Validate,
    /// Mine spurious-correlation pairs from the ReaL labels.
    ExtractPairs {
        #[arg(long)]
        out: PathBuf,
    },
    /// Categorize every error of every model.
    Classify {
        /// Glob of prediction CSVs, one per model (model name = file stem).
        #[arg(long)]
        predictions: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Comma-separated subset of stages to run, in severity order.
        #[arg(long, value_delimiter = ',')]
        stages: Option<Vec<StageArg>>,
        /// Re-check every record; fail if any is inconsistent.
        #[arg(long)]
        audit: bool,
    },
    /// Per-model portions, accuracies and trend fits.
    Report {
        #[arg(long)]
        records: String,
        #[arg(long)]
        predictions: String,
        /// JSON list of model metadata.
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Fit separate lines below and at/above this MLA.
        #[arg(long)]
        split_at: Option<f64>,
        #[arg(long, default_value_t = SizeThresholds::default().medium_from)]
        medium_from: u64,
        #[arg(long, default_value_t = SizeThresholds::default().large_from)]
        large_from: u64,
        #[arg(long, default_value_t = SizeThresholds::default().xlarge_above)]
        xlarge_above: u64,
    },
    /// Confusion matrix of expert against automatic categories.
    Compare {
        #[arg(long)]
        records: String,
        #[arg(long)]
        expert: PathBuf,
        /// Write the matrix here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic world with planted errors.
    GenFixture {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = FixtureParams::default().per_category)]
        per_category: usize,
        #[arg(long, default_value_t = FixtureParams::default().models)]
        models: usize,
        #[arg(long, default_value_t = 0)]
        gaps: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum StageArg {
    Overlap,
    MultiLabel,
    FineGrained,
    FineGrainedOov,
    NonPrototypical,
    Spurious,
}

impl From<StageArg> for Stage {
    fn from(s: StageArg) -> Stage {
        match s {
            StageArg::Overlap => Stage::Overlap,
            StageArg::MultiLabel => Stage::MultiLabel,
            StageArg::FineGrained => Stage::FineGrained,
            StageArg::FineGrainedOov => Stage::FineGrainedOov,
            StageArg::NonPrototypical => Stage::NonPrototypical,
            StageArg::Spurious => Stage::Spurious,
        }
    }
}

fn manifest_path(global: &Global) -> Option<PathBuf> {
    if let Some(p) = &global.manifest {
        return Some(p.clone());
    }
    let dir = std::env::var_os(ASSETS_ENV).filter(|v| !v.is_empty())?;
    Some(PathBuf::from(dir).join("manifest.json"))
}

fn load(global: &Global) -> anyhow::Result<Assets> {
    let path = manifest_path(global);
    let assets = Assets::load(path.as_deref(), LoadOptions { verify: global.verify, mode: global.mode })?;
    log::info!("assets from {}", assets.root.display("manifest.json"));
    Ok(assets)
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Validate => validate(g),
        Command::ExtractPairs { out } => {
            let assets = load(g)?;
            let mined = assets.mine_pairs()?;
            pipeline::write_bytes(&out, &formats::write_pairs(&mined.pairs))?;
            println!(
                "{} multi-label images, {} raw pairs, {} pairs kept",
                mined.multi_label_image_count,
                mined.raw_pair_count,
                mined.pairs.len()
            );
            if mined.excluded_missing > 0 {
                log::info!("{} excluded images have no multi-label row", mined.excluded_missing);
            }
            Ok(())
        }
        Command::Classify { predictions, out, k, stages, audit } => {
            if k == 0 {
                bail!("--k must be at least 1");
            }
            let assets = load(g)?;
            let pool = pipeline::thread_pool(g.jobs)?;
            let models = pipeline::load_predictions(&predictions)?;
            let pairs = assets.pairs()?;
            let mut config = CascadeConfig { k_neighbors: k, ..CascadeConfig::with_mode(assets.mode.into()) };
            if let Some(s) = stages {
                let mut s: Vec<Stage> = s.into_iter().map(Stage::from).collect();
                s.sort();
                s.dedup();
                config.stages = s;
            }
            let ctx = pipeline::cascade_context(&assets, &pairs, &config)?;
            let runs = pipeline::classify_all(&ctx, &models, &pool)?;
            if audit {
                let mut failures = 0;
                for run in &runs {
                    for r in &run.records {
                        if let Err(f) = ctx.audit(r) {
                            failures += 1;
                            eprintln!("audit: {} {}: {:?}", run.model, f.image, f.reason);
                        }
                    }
                }
                if failures > 0 {
                    bail!("{failures} records failed the audit");
                }
            }
            pipeline::write_runs(&out, &runs, &ctx, &assets.manifest_sha256)?;
            for run in &runs {
                println!(
                    "{}: {} evaluated, {} correct, {} errors, {} skipped",
                    run.model,
                    run.summary.evaluated,
                    run.summary.correct,
                    run.records.len(),
                    run.summary.skipped
                );
            }
            Ok(())
        }
        Command::Report { records, predictions, models, out, split_at, medium_from, large_from, xlarge_above } => {
            let assets = load(g)?;
            let pool = pipeline::thread_pool(g.jobs)?;
            let preds = pipeline::load_predictions(&predictions)?;
            let recs = pipeline::load_records(&records)?;
            let metas = pipeline::load_metas(&models)?;
            let thresholds = SizeThresholds { medium_from, large_from, xlarge_above };
            let report = pipeline::build_report(&assets, &preds, &recs, &metas, &thresholds, split_at, &pool)?;
            pipeline::write_report(&out, &report, split_at)?;
            for f in &report.fits {
                if let Err(e) = &f.result {
                    log::warn!("no fit for {}/{}: {e}", f.group.as_str(), f.category.as_str());
                }
            }
            Ok(())
        }
        Command::Compare { records, expert, out } => {
            let recs = pipeline::load_records(&records)?;
            let labels = pipeline::load_expert(&expert)?;
            let matrix = pipeline::compare(&recs, &labels)?;
            for (model, image) in &matrix.unmatched_expert {
                log::warn!("expert label for {model} {image} has no automatic record");
            }
            let bytes = pipeline::write_matrix(&matrix);
            match out {
                Some(p) => pipeline::write_bytes(&p, &bytes)?,
                None => print!("{}", String::from_utf8_lossy(&bytes)),
            }
            println!("agreement: {} of {}", matrix.total() - matrix.off_diagonal(), matrix.total());
            Ok(())
        }
        Command::GenFixture { seed, per_category, models, gaps, out } => {
            let params = FixtureParams { seed, per_category, models, gaps, ..FixtureParams::default() };
            let world = fixture::generate(params);
            world.write_to(&out).with_context(|| format!("writing {}", out.display()))?;
            println!("{} images, {} files in {}", world.plantings.len(), world.files.len(), out.display());
            Ok(())
        }
    }
}

fn validate(g: &Global) -> anyhow::Result<()> {
    let assets = load(g)?;
    let space = &assets.space;
    let s = space.superclass_stats();
    let mut per_class = [0usize; 3];
    for c in space.classes() {
        per_class[Group::ALL.iter().position(|x| *x == c.group).expect("known group")] += 1;
    }
    println!("classes: {}", space.len());
    for (g, n) in Group::ALL.iter().zip(per_class) {
        println!("  {}: {n}", g.as_str());
    }
    println!("superclasses: {}", s.count);
    println!("  size min {} max {} mean {:.2} median {}", s.min_size, s.max_size, s.mean_size, s.median_size);
    println!("  classes in no superclass: {}", s.unclassified);
    for (group, gs) in &s.per_group {
        println!("  with {} classes: {} (mean size {:.2})", group.as_str(), gs.count, gs.mean_size);
    }
    if let Some(store) = &assets.store {
        println!("evaluable images: {}", store.evaluable_count());
    }
    for (key, m) in [("reference", assets.reference.as_ref().map(|r| &r.matrix)), ("evaluation", assets.evaluation.as_ref()), ("text", assets.text.as_ref())] {
        if let Some(m) = m {
            println!("{key} embeddings: {} x {}", m.len(), m.dim());
        }
    }
    if assets.text.is_none() && assets.reference.is_some() {
        log::warn!("reference embeddings without text embeddings; the OOV stage cannot run");
    }
    println!("ok");
    Ok(())
}
