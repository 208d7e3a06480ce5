//! One PASS/FAIL line per acceptance criterion. Runs without the libtest
//! harness so the lines are always printed.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use erratlas::assets::{Assets, LoadOptions};
use erratlas::fixture::{self, generate, FixtureParams, PREDICTIONS_DIR};
use erratlas::pipeline;
use erratlas_core::annotations::{AnnotationParts, AnnotationStore, Verdict};
use erratlas_core::cascade::ErrorCategory;
use erratlas_core::cooccurrence::extract_pairs;
use erratlas_core::label_space::{ClassInfo, Group, LabelSpace, LabelSpaceParts, Strictness};
use erratlas_core::metrics::{multi_label_accuracy, top1_accuracy};
use erratlas_core::trend::trend_fit;
use erratlas_core::{EmbeddingMatrix, ImageId, SynsetId};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

enum Status {
    Pass(String),
    Fail(String),
    Skipped(String),
}

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration, what: &str) -> Result<(), String> {
    ensure(elapsed < limit, || format!("{what} took {elapsed:?}, limit {limit:?}"))
}

fn sid(n: usize) -> SynsetId {
    SynsetId::new(format!("n{n:08}")).unwrap()
}

fn img(n: usize) -> ImageId {
    ImageId::new(format!("img{n:05}")).unwrap()
}

// ---------------------------------------------------------------------------

fn superclass_catalogue() -> Check {
    let start = Instant::now();
    let assets = Assets::load(None, LoadOptions { verify: true, mode: None }).map_err(|e| e.to_string())?;
    let s = assets.space.superclass_stats();
    let elapsed = start.elapsed();
    let org = s.per_group[&Group::Organism];
    let art = s.per_group[&Group::Artifact];
    ensure(s.count == 161, || format!("count {}", s.count))?;
    ensure((s.min_size, s.max_size) == (2, 31), || format!("min/max {}/{}", s.min_size, s.max_size))?;
    ensure((s.mean_size - 6.7).abs() <= 0.05, || format!("mean {}", s.mean_size))?;
    ensure(s.median_size == 4.0, || format!("median {}", s.median_size))?;
    ensure(s.unclassified == 74, || format!("unclassified {}", s.unclassified))?;
    ensure(org.count == 50 && (org.mean_size - 9.8).abs() <= 0.05, || format!("organism {org:?}"))?;
    ensure(art.count == 101 && (art.mean_size - 5.3).abs() <= 0.05, || format!("artifact {art:?}"))?;
    within(elapsed, Duration::from_secs(1), "load")?;
    Ok(format!(
        "161 superclasses, sizes 2..31, mean {:.3}, median 4, 74 unclassified, organism 50 / {:.3}, artifact 101 / {:.3}, {elapsed:.0?}",
        s.mean_size, org.mean_size, art.mean_size
    ))
}

fn planted_end_to_end() -> Check {
    let mut slowest = Duration::ZERO;
    let mut checked = 0;
    for seed in 0..5 {
        let params = FixtureParams { seed, per_category: 24, gaps: 2, ..FixtureParams::default() };
        let world = generate(params);
        let m0 = &world.models[0];
        for c in ErrorCategory::ALL {
            let n = m0.count(fixture::Expected::Error(c));
            ensure(n >= 20, || format!("seed {seed}: only {n} plantings of {c:?}"))?;
        }
        let dir = common::write_world(&world);
        let start = Instant::now();
        let run = common::classify_world(dir.path(), 4);
        let elapsed = start.elapsed();
        slowest = slowest.max(elapsed);
        within(elapsed, Duration::from_secs(10), &format!("seed {seed}"))?;
        let wrong = fixture::mismatches(&world, &run.runs);
        ensure(wrong.is_empty(), || format!("seed {seed}: {} mismatches, first: {}", wrong.len(), wrong[0]))?;
        ensure(run.audit_failures.is_empty(), || format!("seed {seed}: audit {}", run.audit_failures[0]))?;
        let mined: BTreeSet<_> = run.mined.pairs.iter().map(|(p, _)| (p.a.clone(), p.b.clone())).collect();
        ensure(mined == world.spurious_pairs, || format!("seed {seed}: mined pairs differ from planted"))?;
        checked += world.models.iter().map(|m| m.expected.len()).sum::<usize>();
    }
    Ok(format!("5 worlds, {checked} (model, image) outcomes recovered, audit clean, slowest {slowest:.0?}"))
}

// ---------------------------------------------------------------------------

/// Values on a 1/256 grid so that multiplying by the scalings below is exact
/// in f32.
fn quantized(rng: &mut ChaCha8Rng) -> f32 {
    let g: f32 = rng.sample(StandardNormal);
    (g.clamp(-7.9, 7.9) * 256.0).round() / 256.0
}

fn knn_oracle(values: &[f32], dim: usize, q: &[f32], k: usize) -> Vec<(usize, f64)> {
    let norm = |v: &[f32]| v.iter().map(|x| (*x as f64) * (*x as f64)).sum::<f64>().sqrt();
    let qn = norm(q);
    let mut all: Vec<(usize, f64)> = values
        .chunks(dim)
        .enumerate()
        .map(|(i, row)| {
            let dot: f64 = row.iter().zip(q).map(|(a, b)| *a as f64 * *b as f64).sum();
            (i, dot / (norm(row) * qn))
        })
        .collect();
    // stable sort: equal similarities keep ascending row order
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    all.truncate(k);
    all
}

fn knn_oracle_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6b6e6e);
    let mut queries = 0;
    let mut ties = 0;
    for m in 0..10 {
        let (n, dim) = if m == 9 { (5000, 64) } else { (rng.random_range(50..=5000), rng.random_range(8..=64)) };
        let mut values: Vec<f32> = Vec::with_capacity(n * dim);
        for i in 0..n {
            if i > 0 && rng.random_bool(0.1) {
                let j = rng.random_range(0..i);
                let copy = values[j * dim..(j + 1) * dim].to_vec();
                values.extend(copy);
            } else {
                values.extend((0..dim).map(|_| quantized(&mut rng)));
            }
        }
        let ids: Vec<String> = (0..n).map(|i| format!("r{i}")).collect();
        let matrix = EmbeddingMatrix::new(ids.clone(), dim, &values).map_err(|e| e.to_string())?;
        let scalings: Vec<f32> =
            (0..3).map(|_| rng.random_range(1..2048) as f32 * 2f32.powi(rng.random_range(-6..=6))).collect();
        let scaled: Vec<EmbeddingMatrix> = scalings
            .iter()
            .map(|c| EmbeddingMatrix::new(ids.clone(), dim, &values.iter().map(|v| v * c).collect::<Vec<_>>()).unwrap())
            .collect();
        for qi in 0..20 {
            let k = rng.random_range(1..=25.min(n));
            let q: Vec<f32> = if qi % 2 == 0 {
                let r = rng.random_range(0..n);
                values[r * dim..(r + 1) * dim].to_vec()
            } else {
                (0..dim).map(|_| quantized(&mut rng)).collect()
            };
            let got = matrix.knn(&q, k).map_err(|e| e.to_string())?;
            let want = knn_oracle(&values, dim, &q, k);
            let rows: Vec<usize> = got.iter().map(|g| g.row).collect();
            let want_rows: Vec<usize> = want.iter().map(|w| w.0).collect();
            ensure(rows == want_rows, || format!("matrix {m} ({n}x{dim}) k={k}: {rows:?} vs {want_rows:?}"))?;
            for (g, w) in got.iter().zip(&want) {
                ensure((g.similarity - w.1).abs() <= 1e-12, || format!("similarity {} vs {}", g.similarity, w.1))?;
            }
            ties += got.windows(2).filter(|w| w[0].similarity == w[1].similarity).count();
            for (c, s) in scalings.iter().zip(&scaled) {
                let qs: Vec<f32> = q.iter().map(|v| v * c).collect();
                let again = s.knn(&qs, k).map_err(|e| e.to_string())?;
                ensure(again.iter().map(|g| g.row).collect::<Vec<_>>() == rows, || format!("scaling {c} changed neighbors"))?;
                for (a, b) in again.iter().zip(&got) {
                    ensure((a.similarity - b.similarity).abs() <= 1e-12, || format!("scaling {c} changed similarity"))?;
                }
            }
            queries += 1;
        }
    }
    ensure(ties > 0, || "no tied neighbors exercised".into())?;
    Ok(format!("10 matrices up to 5000x64, {queries} queries, {ties} tied neighbor pairs, 3 scalings each"))
}

// ---------------------------------------------------------------------------

fn small_space(n: usize, superclasses: BTreeMap<String, Vec<SynsetId>>) -> LabelSpace {
    LabelSpace::build(
        LabelSpaceParts {
            classes: (0..n).map(|i| ClassInfo { id: sid(i + 1), name: format!("c{i}"), group: Group::ALL[i % 3] }).collect(),
            hypernym_edges: (0..n).map(|i| (sid(i + 1), sid(99_999_999))).collect(),
            superclasses,
            ..Default::default()
        },
        Strictness::Lenient,
    )
    .unwrap()
}

struct Row {
    label: usize,
    pred: Option<usize>,
    problematic: bool,
    verdicts: BTreeMap<usize, Verdict>,
}

fn accepted(r: &Row, l: usize) -> bool {
    match r.verdicts.get(&l) {
        Some(v) => matches!(v, Verdict::Correct | Verdict::Unclear),
        None => l == r.label,
    }
}

fn metrics_from_rows(rows: &[Row], n_classes: usize) -> Result<(f64, f64), String> {
    let space = small_space(n_classes, BTreeMap::new());
    let parts = AnnotationParts {
        ground_truth: rows.iter().enumerate().map(|(i, r)| (img(i), sid(r.label + 1))).collect(),
        verdicts: rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.verdicts.iter().map(move |(l, v)| (img(i), sid(l + 1), *v)))
            .collect(),
        problematic: rows.iter().enumerate().filter(|(_, r)| r.problematic).map(|(i, _)| img(i)).collect(),
        ..Default::default()
    };
    let store = AnnotationStore::build(parts, &space).map_err(|e| e.to_string())?;
    let preds: BTreeMap<ImageId, SynsetId> =
        rows.iter().enumerate().filter_map(|(i, r)| r.pred.map(|p| (img(i), sid(p + 1)))).collect();
    let top1 = top1_accuracy(&preds, &store).map_err(|e| e.to_string())?;
    let mla = multi_label_accuracy(&preds, &store).map_err(|e| e.to_string())?;
    Ok((top1, mla))
}

fn oracle_metrics(rows: &[Row], n_classes: usize) -> (f64, f64) {
    let kept: Vec<&Row> = rows.iter().filter(|r| !r.problematic).collect();
    let top1 = kept.iter().filter(|r| r.pred == Some(r.label)).count() as f64 / kept.len() as f64;
    let mut per_class = Vec::new();
    for c in 0..n_classes {
        let of_c: Vec<&&Row> = kept.iter().filter(|r| r.label == c).collect();
        if !of_c.is_empty() {
            let hits = of_c.iter().filter(|r| r.pred.is_some_and(|p| accepted(r, p))).count();
            per_class.push(hits as f64 / of_c.len() as f64);
        }
    }
    (top1, per_class.iter().sum::<f64>() / per_class.len() as f64)
}

fn metric_oracle_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6d6c61);
    let verdicts = [Verdict::Correct, Verdict::Wrong, Verdict::Unclear];
    let mut images = 0;
    for f in 0..20 {
        let n_classes = rng.random_range(2..40);
        let n = rng.random_range(5..2000);
        let rows: Vec<Row> = (0..n)
            .map(|i| {
                let label = rng.random_range(0..n_classes);
                let pred = rng.random_bool(0.95).then(|| {
                    if rng.random_bool(0.5) { label } else { rng.random_range(0..n_classes) }
                });
                let mut v = BTreeMap::new();
                for _ in 0..rng.random_range(0..4) {
                    v.insert(rng.random_range(0..n_classes), *verdicts.choose(&mut rng).unwrap());
                }
                // keep at least one non-problematic image
                Row { label, pred, problematic: i > 0 && rng.random_bool(0.05), verdicts: v }
            })
            .collect();
        let (top1, mla) = metrics_from_rows(&rows, n_classes)?;
        let (want_top1, want_mla) = oracle_metrics(&rows, n_classes);
        ensure((top1 - want_top1).abs() <= 1e-12, || format!("fixture {f}: top1 {top1} vs {want_top1}"))?;
        ensure((mla - want_mla).abs() <= 1e-12, || format!("fixture {f}: mla {mla} vs {want_mla}"))?;
        images += n;
    }

    // problematic images do not count, whatever the prediction
    let row = |label, pred, problematic| Row { label, pred: Some(pred), problematic, verdicts: BTreeMap::new() };
    let rows = vec![row(0, 0, false), row(1, 1, false), row(0, 1, true)];
    let (top1, mla) = metrics_from_rows(&rows, 2)?;
    ensure(top1 == 1.0 && mla == 1.0, || format!("problematic exclusion: top1 {top1}, mla {mla}"))?;

    // an Unclear label counts for MLA but not for top-1
    let mut unclear = row(0, 1, false);
    unclear.verdicts.insert(1, Verdict::Unclear);
    let rows = vec![unclear, row(1, 0, false)];
    let (top1, mla) = metrics_from_rows(&rows, 2)?;
    ensure(top1 == 0.0 && mla == 0.5, || format!("unclear: top1 {top1}, mla {mla}"))?;

    // a Wrong verdict on the original label makes even the original wrong
    let mut wrong = row(0, 0, false);
    wrong.verdicts.insert(0, Verdict::Wrong);
    let (top1, mla) = metrics_from_rows(&[wrong], 1)?;
    ensure(top1 == 1.0 && mla == 0.0, || format!("wrong original: top1 {top1}, mla {mla}"))?;

    Ok(format!("20 random fixtures ({images} images) within 1e-12; problematic, unclear and wrong-verdict fixtures"))
}

// ---------------------------------------------------------------------------

fn pair_mining_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x70616972);
    let mut total_raw = 0;
    for f in 0..6 {
        let n_classes = rng.random_range(5..60);
        let mut superclasses = BTreeMap::new();
        for s in 0..n_classes / 5 {
            let members: BTreeSet<SynsetId> = (0..3).map(|_| sid(rng.random_range(0..n_classes) + 1)).collect();
            superclasses.insert(format!("s{s}"), members.into_iter().collect());
        }
        let space = small_space(n_classes, superclasses.clone());
        let n_images = if f == 0 { 10_000 } else { rng.random_range(10..10_000) };
        let mut real: BTreeMap<ImageId, BTreeSet<SynsetId>> = BTreeMap::new();
        for i in 0..n_images {
            let l = [0usize, 1, 1, 2, 2, 3, 5].choose(&mut rng).copied().unwrap();
            real.insert(img(i), (0..l).map(|_| sid(rng.random_range(0..n_classes) + 1)).collect());
        }
        let excluded: BTreeSet<ImageId> = (0..n_images).filter(|_| rng.random_bool(0.2)).map(img).collect();
        let mined = extract_pairs(&real, &excluded, &space).map_err(|e| e.to_string())?;

        // brute force over all index pairs of each label list
        let mut counts: BTreeMap<(SynsetId, SynsetId), u32> = BTreeMap::new();
        let mut raw = 0u64;
        let mut multi = 0;
        for (image, labels) in &real {
            if excluded.contains(image) {
                continue;
            }
            let l: Vec<&SynsetId> = labels.iter().collect();
            multi += usize::from(l.len() >= 2);
            raw += (l.len() * l.len().saturating_sub(1) / 2) as u64;
            for i in 0..l.len() {
                for j in 0..l.len() {
                    if l[i] < l[j] {
                        *counts.entry((l[i].clone(), l[j].clone())).or_default() += 1;
                    }
                }
            }
        }
        let same_superclass = |a: &SynsetId, b: &SynsetId| superclasses.values().any(|m| m.contains(a) && m.contains(b));
        let want: BTreeMap<(SynsetId, SynsetId), u32> =
            counts.iter().filter(|((a, b), c)| **c >= 2 && !same_superclass(a, b)).map(|(k, c)| (k.clone(), *c)).collect();
        let got: BTreeMap<(SynsetId, SynsetId), u32> = mined.pairs.iter().map(|(p, c)| ((p.a.clone(), p.b.clone()), c)).collect();
        ensure(mined.raw_pair_count == raw, || format!("fixture {f}: raw {} vs {raw}", mined.raw_pair_count))?;
        ensure(mined.multi_label_image_count == multi, || format!("fixture {f}: multi-label images"))?;
        ensure(got == want, || format!("fixture {f}: {} pairs vs {} expected", got.len(), want.len()))?;
        total_raw += raw;
    }

    // targeted filters
    let mut superclasses = BTreeMap::new();
    superclasses.insert("s".to_owned(), vec![sid(1), sid(2)]);
    let space = small_space(4, superclasses);
    let real: BTreeMap<ImageId, BTreeSet<SynsetId>> = [
        (img(0), [sid(1), sid(2)].into()),
        (img(1), [sid(1), sid(2)].into()),
        (img(2), [sid(3), sid(4)].into()),
        (img(3), [sid(1), sid(3)].into()),
        (img(4), [sid(1), sid(3)].into()),
        (img(5), [sid(1), sid(4)].into()),
        (img(6), [sid(1), sid(4)].into()),
    ]
    .into();
    let mined = extract_pairs(&real, &[img(6)].into(), &space).map_err(|e| e.to_string())?;
    let kept: Vec<_> = mined.pairs.iter().map(|(p, c)| (p.a.clone(), p.b.clone(), c)).collect();
    ensure(kept == vec![(sid(1), sid(3), 2)], || format!("filters kept {kept:?}"))?;
    Ok(format!("6 random fixtures up to 10000 images ({total_raw} raw pairs); singleton, same-superclass and exclusion filters"))
}

// ---------------------------------------------------------------------------

fn normal_equations(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let det = n * sxx - sx * sx;
    ((n * sxy - sx * sy) / det, (sxx * sy - sx * sxy) / det)
}

fn ols_fits() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6f6c73);
    let mut fits = 0;
    for f in 0..50 {
        let n = rng.random_range(3..200);
        let (a, b): (f64, f64) = (rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0));
        let points: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                let x: f64 = rng.random_range(0.0..1.0);
                (x, a * x + b + 0.1 * rng.sample::<f64, _>(StandardNormal))
            })
            .collect();
        let fit = trend_fit(&points, None).map_err(|e| e.to_string())?;
        let (slope, intercept) = normal_equations(&points);
        let s = &fit.segments[0];
        ensure((s.slope - slope).abs() <= 1e-9 && (s.intercept - intercept).abs() <= 1e-9, || {
            format!("fit {f}: ({}, {}) vs ({slope}, {intercept})", s.slope, s.intercept)
        })?;

        let exact: Vec<(f64, f64)> = points.iter().map(|p| (p.0, a * p.0 + b)).collect();
        let line = trend_fit(&exact, None).map_err(|e| e.to_string())?;
        for p in line.segments[0].grid(21) {
            ensure(p.hi - p.lo <= 2e-12, || format!("fit {f}: exact line band width {}", p.hi - p.lo))?;
        }

        let split = 0.5;
        let both = trend_fit(&points, Some(split));
        let lower: Vec<_> = points.iter().copied().filter(|p| p.0 < split).collect();
        let upper: Vec<_> = points.iter().copied().filter(|p| p.0 >= split).collect();
        if let (Ok(both), Ok(lo), Ok(hi)) = (both, trend_fit(&lower, None), trend_fit(&upper, None)) {
            ensure(both.segments == vec![lo.segments[0].clone(), hi.segments[0].clone()], || {
                format!("fit {f}: split segments differ from independent fits")
            })?;
            fits += 1;
        }
    }
    ensure(fits >= 25, || format!("only {fits} split fits exercised"))?;
    Ok(format!("50 random fits within 1e-9, exact lines have zero-width bands, {fits} split fits equal independent fits"))
}

// ---------------------------------------------------------------------------

fn classify_cli(world: &Path, out: &Path, jobs: &str) -> Result<(), String> {
    let manifest = world.join(fixture::MANIFEST).display().to_string();
    let preds = format!("{}/{PREDICTIONS_DIR}/*.csv", world.display());
    let o = common::erratlas(&["--manifest", &manifest, "--jobs", jobs, "classify", "--predictions", &preds, "--out", &out.display().to_string()]);
    ensure(o.status.success(), || format!("classify --jobs {jobs} failed: {}", String::from_utf8_lossy(&o.stderr)))
}

fn determinism() -> Check {
    let mut files = 0;
    for seed in [101, 202, 303] {
        let world = generate(FixtureParams { seed, gaps: 2, models: 4, ..FixtureParams::default() });
        let dir = common::write_world(&world);
        let one = dir.path().join("jobs1");
        let eight = dir.path().join("jobs8");
        classify_cli(dir.path(), &one, "1")?;
        classify_cli(dir.path(), &eight, "8")?;
        let mut names: Vec<String> = vec!["errors.csv".into(), "run.json".into()];
        names.extend(world.models.iter().map(|m| format!("records/{}.csv", m.model)));
        for n in names {
            let a = std::fs::read(one.join(&n)).map_err(|e| format!("{n}: {e}"))?;
            let b = std::fs::read(eight.join(&n)).map_err(|e| format!("{n}: {e}"))?;
            ensure(a == b, || format!("seed {seed}: {n} differs between --jobs 1 and --jobs 8"))?;
            files += 1;
        }
    }
    Ok(format!("3 worlds, {files} output files byte-identical for --jobs 1 and --jobs 8"))
}

// ---------------------------------------------------------------------------

/// Needs `ERRATLAS_REAL_MANIFEST` (ReaL labels plus the evaluation-subset
/// exclusion list) and, for the expert table, `ERRATLAS_REAL_RECORDS` (glob
/// of record files for the ViT-3B run) and `ERRATLAS_REAL_EXPERT`.
fn real_data() -> Status {
    let manifest = std::env::var_os("ERRATLAS_REAL_MANIFEST");
    let records = std::env::var("ERRATLAS_REAL_RECORDS").ok();
    let expert = std::env::var_os("ERRATLAS_REAL_EXPERT");
    if manifest.is_none() && (records.is_none() || expert.is_none()) {
        return Status::Skipped("ERRATLAS_REAL_MANIFEST / ERRATLAS_REAL_RECORDS + ERRATLAS_REAL_EXPERT not set".into());
    }
    let mut notes = Vec::new();
    if let Some(m) = manifest {
        let check = || -> Check {
            let assets = Assets::load(Some(Path::new(&m)), LoadOptions::default()).map_err(|e| e.to_string())?;
            let mined = assets.mine_pairs().map_err(|e| e.to_string())?;
            let got = (mined.raw_pair_count, mined.multi_label_image_count, mined.pairs.len());
            ensure(got == (13_090, 6_622, 1_019), || format!("pair mining gave {got:?}"))?;
            Ok("pair mining 13090 / 6622 / 1019".into())
        };
        match check() {
            Ok(s) => notes.push(s),
            Err(e) => return Status::Fail(e),
        }
    } else {
        notes.push("pair mining skipped".into());
    }
    if let (Some(r), Some(e)) = (records, expert) {
        let check = || -> Check {
            let recs = pipeline::load_records(&r).map_err(|e| e.to_string())?;
            let labels = pipeline::load_expert(Path::new(&e)).map_err(|e| e.to_string())?;
            let m = pipeline::compare(&recs, &labels).map_err(|e| e.to_string())?;
            let fg = m.get(ErrorCategory::FineGrained, ErrorCategory::FineGrained);
            let mf = m.column_total(ErrorCategory::ModelFailure);
            ensure((fg, mf) == (192, 62), || format!("FG/FG {fg}, model-failure column {mf}"))?;
            Ok("expert table FG/FG 192, model-failure column 62".into())
        };
        match check() {
            Ok(s) => notes.push(s),
            Err(e) => return Status::Fail(e),
        }
    } else {
        notes.push("expert table skipped".into());
    }
    Status::Pass(notes.join("; "))
}

fn main() -> ExitCode {
    let checks: [Criterion; 7] = [
        ("superclass catalogue statistics", superclass_catalogue),
        ("planted errors recovered end to end", planted_end_to_end),
        ("k-NN matches full-scan oracle", knn_oracle_equivalence),
        ("MLA and top-1 match enumeration oracles", metric_oracle_equivalence),
        ("pair mining matches brute force", pair_mining_oracle),
        ("OLS fits match normal equations", ols_fits),
        ("classify output independent of --jobs", determinism),
    ];
    let mut results: Vec<(&str, Status)> = checks
        .iter()
        .map(|(name, f)| {
            let status = match f() {
                Ok(s) => Status::Pass(s),
                Err(e) => Status::Fail(e),
            };
            (*name, status)
        })
        .collect();
    results.push(("real-data pair counts and expert table", real_data()));

    let mut failed = false;
    for (name, status) in &results {
        match status {
            Status::Pass(d) => println!("PASS {name}: {d}"),
            Status::Fail(d) => {
                failed = true;
                println!("FAIL {name}: {d}");
            }
            Status::Skipped(d) => println!("SKIPPED {name}: {d}"),
        }
    }
    if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
