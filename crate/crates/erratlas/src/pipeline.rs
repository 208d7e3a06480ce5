//! Batch orchestration behind the CLI commands.
//!
//! Parallelism is over models and, within a model, over images. Results are
//! collected in input order, so every output is independent of the thread
//! count.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use erratlas_core::cascade::{CascadeConfig, CascadeContext, ErrorCategory, ModelRun, RunPlan};
use erratlas_core::metrics::{
    aggregate_model, compare_categorizations, ConfusionMatrix, ExpertLabel, ModelEvidence, ModelMeta, ModelReport,
    ReportGroup, SizeThresholds,
};
use erratlas_core::trend::{trend_fit, FitError, TrendFit};
use erratlas_core::{ErrorRecord, ImageId, SynsetId};
use rayon::prelude::*;
use serde_json::json;

use crate::assets::Assets;
use crate::error::{Error, Result};
use crate::formats;

pub type Predictions = BTreeMap<ImageId, SynsetId>;

pub fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        b = b.num_threads(n.max(1));
    }
    b.build().map_err(|e| Error::Validation(format!("cannot start worker threads: {e}")))
}

/// Files matching `pattern`, sorted by path.
pub fn glob_files(pattern: &str) -> Result<Vec<PathBuf>> {
    let paths = glob::glob(pattern).map_err(|e| Error::Validation(format!("bad glob {pattern:?}: {e}")))?;
    let mut out = Vec::new();
    for p in paths {
        let p = p.map_err(|e| Error::io(e.path().to_path_buf(), std::io::Error::other(e.to_string())))?;
        if p.is_file() {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn model_name(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_owned)
        .ok_or_else(|| Error::Validation(format!("cannot derive a model name from {}", path.display())))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Prediction files, one per model; the model name is the file stem.
pub fn load_predictions(pattern: &str) -> Result<Vec<(String, Predictions)>> {
    let files = glob_files(pattern)?;
    if files.is_empty() {
        return Err(Error::Validation(format!("no prediction files match {pattern:?}")));
    }
    let mut out: Vec<(String, Predictions)> = Vec::new();
    for f in files {
        let name = model_name(&f)?;
        if out.iter().any(|(n, _)| *n == name) {
            return Err(Error::Validation(format!("two prediction files for model {name:?}")));
        }
        out.push((name, formats::parse_predictions(&f.display().to_string(), &read(&f)?)?));
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

pub fn cascade_context<'a>(assets: &'a Assets, pairs: &'a erratlas_core::PairSet, config: &'a CascadeConfig) -> Result<CascadeContext<'a>> {
    Ok(CascadeContext {
        space: &assets.space,
        store: assets.store()?,
        reference: assets.reference.as_ref(),
        evaluation: assets.evaluation.as_ref(),
        text: assets.text.as_ref(),
        pairs,
        config,
    })
}

/// Runs the cascade for every model. Data gaps become skipped images;
/// structural errors abort.
pub fn classify_all(
    ctx: &CascadeContext<'_>,
    models: &[(String, Predictions)],
    pool: &rayon::ThreadPool,
) -> Result<Vec<ModelRun>> {
    pool.install(|| {
        models
            .par_iter()
            .map(|(name, preds)| {
                let plan = RunPlan::new(preds, ctx.store);
                let outcomes: Vec<_> =
                    plan.targets.par_iter().map(|(image, pred)| ctx.classify(name, image, pred)).collect();
                Ok(ModelRun::assemble(name, plan, outcomes, ctx.space, ctx.store)?)
            })
            .collect()
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes `records/<model>.csv`, `errors.csv` and `run.json` under `out`.
pub fn write_runs(out: &Path, runs: &[ModelRun], ctx: &CascadeContext<'_>, manifest_sha256: &str) -> Result<()> {
    let store = ctx.store;
    for run in runs {
        let bytes = formats::write_records(&run.records, |i| store.get(i).ok());
        write_file(&out.join("records").join(format!("{}.csv", run.model)), &bytes)?;
    }

    let mut w = formats::csv_writer();
    w.write_record(["model", "image_id", "predicted", "reason"]).expect("in-memory write");
    for run in runs {
        for s in &run.skipped {
            w.write_record([run.model.as_str(), s.image.as_str(), s.predicted.as_str(), &s.reason.to_string()])
                .expect("in-memory write");
        }
        for m in &run.missing_predictions {
            w.write_record([run.model.as_str(), m.as_str(), "", "no prediction"]).expect("in-memory write");
        }
    }
    write_file(&out.join("errors.csv"), &formats::finish(w))?;

    let models: serde_json::Map<String, serde_json::Value> = runs
        .iter()
        .map(|r| {
            let by_category: BTreeMap<&str, usize> =
                ErrorCategory::ALL.iter().map(|c| (c.as_str(), r.summary.by_category.get(c).copied().unwrap_or(0))).collect();
            let v = json!({
                "evaluated": r.summary.evaluated,
                "correct": r.summary.correct,
                "errors": r.records.len(),
                "skipped": r.summary.skipped,
                "missing_predictions": r.missing_predictions.len(),
                "ignored_predictions": r.ignored.len(),
                "by_category": by_category,
            });
            (r.model.clone(), v)
        })
        .collect();
    let meta = json!({
        "manifest_sha256": manifest_sha256,
        "mode": format!("{:?}", ctx.config.mode),
        "k_neighbors": ctx.config.k_neighbors,
        "anchors": "original label plus labels with a correct or unclear verdict",
        "models": models,
    });
    let mut bytes = serde_json::to_vec_pretty(&meta).expect("json value");
    bytes.push(b'\n');
    write_file(&out.join("run.json"), &bytes)
}

/// Record files, one per model, keyed by the model column.
pub fn load_records(pattern: &str) -> Result<BTreeMap<String, Vec<ErrorRecord>>> {
    let mut out: BTreeMap<String, Vec<ErrorRecord>> = BTreeMap::new();
    for f in glob_files(pattern)? {
        for r in formats::parse_records(&f.display().to_string(), &read(&f)?)? {
            out.entry(r.model.clone()).or_default().push(r);
        }
    }
    Ok(out)
}

pub fn load_metas(path: &Path) -> Result<BTreeMap<String, ModelMeta>> {
    let metas = formats::parse_models(&path.display().to_string(), &read(path)?)?;
    let mut out = BTreeMap::new();
    for m in metas {
        m.validate()?;
        if out.insert(m.name.clone(), m.clone()).is_some() {
            return Err(Error::Validation(format!("model {:?} listed twice in {}", m.name, path.display())));
        }
    }
    Ok(out)
}

/// One fitted series: a category's portion against MLA across models.
#[derive(Debug, Clone)]
pub struct SeriesFit {
    pub group: ReportGroup,
    pub category: ErrorCategory,
    pub result: std::result::Result<TrendFit, FitError>,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub models: Vec<ModelReport>,
    pub fits: Vec<SeriesFit>,
}

pub fn build_report(
    assets: &Assets,
    predictions: &[(String, Predictions)],
    records: &BTreeMap<String, Vec<ErrorRecord>>,
    metas: &BTreeMap<String, ModelMeta>,
    thresholds: &SizeThresholds,
    split_at: Option<f64>,
    pool: &rayon::ThreadPool,
) -> Result<Report> {
    let store = assets.store()?;
    for model in records.keys() {
        if !predictions.iter().any(|(n, _)| n == model) {
            return Err(Error::Validation(format!("records for model {model:?} but no prediction file")));
        }
    }
    let empty = Vec::new();
    let models = pool.install(|| {
        predictions
            .par_iter()
            .map(|(name, preds)| {
                let meta = metas.get(name).ok_or_else(|| erratlas_core::metrics::MetricsError::MissingMeta(name.clone()))?;
                let run = ModelEvidence { model: name, predictions: preds, records: records.get(name).unwrap_or(&empty) };
                Ok(aggregate_model(&run, meta, thresholds, &assets.space, store)?)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut fits = Vec::new();
    for group in ReportGroup::ALL {
        for category in ErrorCategory::ALL {
            let points: Vec<(f64, f64)> = models.iter().map(|m| (m.mla, m.group(group).portion(category).value())).collect();
            fits.push(SeriesFit { group, category, result: trend_fit(&points, split_at) });
        }
    }
    Ok(Report { models, fits })
}

pub const GRID_POINTS: usize = 21;

pub fn write_report(out: &Path, report: &Report, split_at: Option<f64>) -> Result<()> {
    let mut w = formats::csv_writer();
    w.write_record(["model", "group", "category", "count", "denominator", "portion", "zero_denominator"])
        .expect("in-memory write");
    for m in &report.models {
        for g in ReportGroup::ALL {
            for c in ErrorCategory::ALL {
                let p = m.group(g).portion(c);
                w.write_record([
                    m.model.as_str(),
                    g.as_str(),
                    c.as_str(),
                    &p.count.to_string(),
                    &p.denominator.to_string(),
                    &p.value().to_string(),
                    &p.zero_denominator().to_string(),
                ])
                .expect("in-memory write");
            }
        }
    }
    write_file(&out.join("report.csv"), &formats::finish(w))?;

    let mut w = formats::csv_writer();
    w.write_record([
        "model",
        "architecture_family",
        "param_count",
        "pretrain_dataset",
        "pretrain_size_images",
        "size_bucket",
        "top1_acc",
        "mla",
        "top1_errors",
        "multi_label_errors",
        "mlf_portion_of_mle",
        "mlf_portion_of_top1",
    ])
    .expect("in-memory write");
    for m in &report.models {
        let all = m.group(ReportGroup::All);
        w.write_record([
            m.model.as_str(),
            m.meta.architecture_family.as_str(),
            &m.meta.param_count.to_string(),
            &m.meta.pretrain_dataset,
            &m.meta.pretrain_size_images.to_string(),
            m.size_bucket.as_str(),
            &m.top1_acc.to_string(),
            &m.mla.to_string(),
            &all.top1_errors().to_string(),
            &all.multi_label_errors().to_string(),
            &m.mlf_portion_of_mle.value().to_string(),
            &m.mlf_portion_of_top1.value().to_string(),
        ])
        .expect("in-memory write");
    }
    write_file(&out.join("models.csv"), &formats::finish(w))?;

    let mut w = formats::csv_writer();
    w.write_record(["group", "category", "segment", "slope", "intercept", "x", "fit", "band_lo", "band_hi"])
        .expect("in-memory write");
    let mut skipped = serde_json::Map::new();
    for f in &report.fits {
        match &f.result {
            Ok(fit) => {
                for (i, seg) in fit.segments.iter().enumerate() {
                    for p in seg.grid(GRID_POINTS) {
                        w.write_record([
                            f.group.as_str(),
                            f.category.as_str(),
                            &i.to_string(),
                            &seg.slope.to_string(),
                            &seg.intercept.to_string(),
                            &p.x.to_string(),
                            &p.fit.to_string(),
                            &p.lo.to_string(),
                            &p.hi.to_string(),
                        ])
                        .expect("in-memory write");
                    }
                }
            }
            Err(e) => {
                skipped.insert(format!("{}/{}", f.group.as_str(), f.category.as_str()), e.to_string().into());
            }
        }
    }
    write_file(&out.join("fits.csv"), &formats::finish(w))?;
    let meta = json!({
        "x": "mla",
        "y": "portion",
        "weighting": "equal per model",
        "level": 0.95,
        "split_at": split_at,
        "skipped": skipped,
    });
    let mut bytes = serde_json::to_vec_pretty(&meta).expect("json value");
    bytes.push(b'\n');
    write_file(&out.join("fits.json"), &bytes)
}

pub fn load_expert(path: &Path) -> Result<Vec<ExpertLabel>> {
    formats::parse_expert(&path.display().to_string(), &read(path)?)
}

pub fn compare(records: &BTreeMap<String, Vec<ErrorRecord>>, expert: &[ExpertLabel]) -> Result<ConfusionMatrix> {
    let all: Vec<ErrorRecord> = records.values().flatten().cloned().collect();
    Ok(compare_categorizations(&all, expert)?)
}

/// Expert rows against automatic columns, with totals.
pub fn write_matrix(m: &ConfusionMatrix) -> Vec<u8> {
    let mut w = formats::csv_writer();
    let mut header = vec!["expert \\ auto"];
    header.extend(ErrorCategory::ALL.iter().map(|c| c.as_str()));
    header.push("total");
    w.write_record(&header).expect("in-memory write");
    for e in ErrorCategory::ALL {
        let mut row = vec![e.as_str().to_owned()];
        row.extend(ErrorCategory::ALL.iter().map(|a| m.get(e, *a).to_string()));
        row.push(m.row_total(e).to_string());
        w.write_record(&row).expect("in-memory write");
    }
    let mut row = vec!["total".to_owned()];
    row.extend(ErrorCategory::ALL.iter().map(|a| m.column_total(*a).to_string()));
    row.push(m.total().to_string());
    w.write_record(&row).expect("in-memory write");
    formats::finish(w)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    write_file(path, bytes)
}
