//! Readers and writers for every on-disk format.
//!
//! CSV readers accept files with or without their header row; writers
//! always emit the header (except for the hypernym and synset-name files,
//! which are headerless) and use LF line endings. Text lists hold one id
//! per line; blank lines and lines starting with `#` are ignored.

use std::collections::{BTreeMap, BTreeSet};

use erratlas_core::annotations::{ImageAnnotation, Verdict};
use erratlas_core::cascade::{ErrorCategory, ErrorRecord, Evidence};
use erratlas_core::cooccurrence::{ClassPair, PairSet};
use erratlas_core::label_space::{ClassInfo, OverlapSpec};
use erratlas_core::metrics::{ExpertLabel, ModelMeta};
use erratlas_core::{ImageId, SynsetId};
use serde_json::{json, Value};

use crate::error::{Error, Result};

pub const EMB_MAGIC: &[u8; 4] = b"EMB1";

pub const PAIRS_HEADER: [&str; 3] = ["a", "b", "count"];
pub const RECORDS_HEADER: [&str; 5] = ["model", "image_id", "predicted", "category", "evidence_json"];
pub const PREDICTIONS_HEADER: [&str; 2] = ["image_id", "predicted_synset"];
pub const GROUND_TRUTH_HEADER: [&str; 2] = ["image_id", "label_id"];
pub const VERDICTS_HEADER: [&str; 3] = ["image_id", "label_id", "verdict"];
pub const EXPERT_HEADER: [&str; 3] = ["model", "image_id", "category"];

fn json<T: serde::de::DeserializeOwned>(name: &str, bytes: &[u8]) -> Result<T> {
    serde_json::from_slice(bytes).map_err(|e| Error::parse(name, e.line() as u64, e))
}

pub fn parse_labels(name: &str, bytes: &[u8]) -> Result<Vec<ClassInfo>> {
    json(name, bytes)
}

pub fn parse_overlap(name: &str, bytes: &[u8]) -> Result<OverlapSpec> {
    json(name, bytes)
}

pub fn parse_superclasses(name: &str, bytes: &[u8]) -> Result<BTreeMap<String, Vec<SynsetId>>> {
    json(name, bytes)
}

pub fn parse_models(name: &str, bytes: &[u8]) -> Result<Vec<ModelMeta>> {
    json(name, bytes)
}

/// Rows of a CSV file with exactly `header.len()` columns, with the 1-based
/// line number of each. A first row equal to `header` is skipped.
pub fn csv_rows(name: &str, bytes: &[u8], header: &[&str]) -> Result<Vec<(u64, Vec<String>)>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(bytes);
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::parse(name, line, e)
        })?;
        let line = rec.position().map_or(i as u64 + 1, |p| p.line());
        if i == 0 && rec.iter().eq(header.iter().copied()) {
            continue;
        }
        if rec.len() != header.len() {
            return Err(Error::parse(name, line, format!("expected {} columns, found {}", header.len(), rec.len())));
        }
        out.push((line, rec.iter().map(str::to_owned).collect()));
    }
    Ok(out)
}

fn synset(name: &str, line: u64, s: &str) -> Result<SynsetId> {
    SynsetId::new(s.trim()).map_err(|e| Error::parse(name, line, e))
}

fn image(name: &str, line: u64, s: &str) -> Result<ImageId> {
    ImageId::new(s.trim()).map_err(|e| Error::parse(name, line, e))
}

pub fn parse_hypernyms(name: &str, bytes: &[u8]) -> Result<Vec<(SynsetId, SynsetId)>> {
    csv_rows(name, bytes, &["child_id", "parent_id"])?
        .into_iter()
        .map(|(line, r)| Ok((synset(name, line, &r[0])?, synset(name, line, &r[1])?)))
        .collect()
}

pub fn parse_synset_names(name: &str, bytes: &[u8]) -> Result<BTreeMap<SynsetId, String>> {
    csv_rows(name, bytes, &["id", "name"])?
        .into_iter()
        .map(|(line, r)| Ok((synset(name, line, &r[0])?, r[1].clone())))
        .collect()
}

/// `image_id,label_id` rows (ground truth, ReaL labels, reference labels).
pub fn parse_image_labels(name: &str, bytes: &[u8]) -> Result<Vec<(ImageId, SynsetId)>> {
    csv_rows(name, bytes, &GROUND_TRUTH_HEADER)?
        .into_iter()
        .map(|(line, r)| Ok((image(name, line, &r[0])?, synset(name, line, &r[1])?)))
        .collect()
}

pub fn parse_verdicts(name: &str, bytes: &[u8]) -> Result<Vec<(ImageId, SynsetId, Verdict)>> {
    csv_rows(name, bytes, &VERDICTS_HEADER)?
        .into_iter()
        .map(|(line, r)| {
            let v = Verdict::parse(r[2].trim())
                .ok_or_else(|| Error::parse(name, line, format!("unknown verdict {:?}", r[2])))?;
            Ok((image(name, line, &r[0])?, synset(name, line, &r[1])?, v))
        })
        .collect()
}

pub fn parse_predictions(name: &str, bytes: &[u8]) -> Result<BTreeMap<ImageId, SynsetId>> {
    let mut out = BTreeMap::new();
    for (line, r) in csv_rows(name, bytes, &PREDICTIONS_HEADER)? {
        let img = image(name, line, &r[0])?;
        if out.insert(img.clone(), synset(name, line, &r[1])?).is_some() {
            return Err(Error::parse(name, line, format!("second prediction for {img}")));
        }
    }
    Ok(out)
}

pub fn write_predictions(predictions: &BTreeMap<ImageId, SynsetId>) -> Vec<u8> {
    let mut w = csv_writer();
    w.write_record(PREDICTIONS_HEADER).expect("in-memory write");
    for (i, p) in predictions {
        w.write_record([i.as_str(), p.as_str()]).expect("in-memory write");
    }
    finish(w)
}

/// Non-empty, non-comment lines.
pub fn parse_lines(name: &str, bytes: &[u8]) -> Result<Vec<(u64, String)>> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::parse(name, 0, e))?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, l)| (i as u64 + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(i, l)| (i, l.to_owned()))
        .collect())
}

pub fn parse_image_list(name: &str, bytes: &[u8]) -> Result<Vec<ImageId>> {
    parse_lines(name, bytes)?.into_iter().map(|(line, l)| image(name, line, &l)).collect()
}

/// Ids file of an embedding matrix: one id per line, row-aligned, so
/// blank lines are errors here.
pub fn parse_ids(name: &str, bytes: &[u8]) -> Result<Vec<String>> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::parse(name, 0, e))?;
    text.lines()
        .enumerate()
        .map(|(i, l)| {
            if l.is_empty() {
                Err(Error::parse(name, i as u64 + 1, "empty id"))
            } else {
                Ok(l.to_owned())
            }
        })
        .collect()
}

pub fn write_lines<'a>(ids: impl IntoIterator<Item = &'a str>) -> Vec<u8> {
    let mut out = Vec::new();
    for id in ids {
        out.extend_from_slice(id.as_bytes());
        out.push(b'\n');
    }
    out
}

/// Decodes an EMB1 blob into `(rows, dim, values)`.
pub fn read_emb1(name: &str, bytes: &[u8]) -> Result<(usize, usize, Vec<f32>)> {
    if bytes.len() < 12 || &bytes[..4] != EMB_MAGIC {
        return Err(Error::parse(name, 0, "not an EMB1 file"));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let dim = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = &bytes[12..];
    let expected = n.checked_mul(dim).and_then(|v| v.checked_mul(4));
    if expected != Some(body.len()) {
        return Err(Error::parse(name, 0, format!("header says {n}x{dim} but body has {} bytes", body.len())));
    }
    let values = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
    Ok((n, dim, values))
}

pub fn write_emb1(rows: usize, dim: usize, values: &[f32]) -> Vec<u8> {
    assert_eq!(rows * dim, values.len(), "values must be rows x dim");
    let mut out = Vec::with_capacity(12 + values.len() * 4);
    out.extend_from_slice(EMB_MAGIC);
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn parse_pairs(name: &str, bytes: &[u8]) -> Result<PairSet> {
    let mut counts = BTreeMap::new();
    for (line, r) in csv_rows(name, bytes, &PAIRS_HEADER)? {
        let pair = ClassPair::new(synset(name, line, &r[0])?, synset(name, line, &r[1])?)
            .ok_or_else(|| Error::parse(name, line, "pair of a class with itself"))?;
        let count: u32 = r[2].trim().parse().map_err(|e| Error::parse(name, line, e))?;
        if counts.insert(pair, count).is_some() {
            return Err(Error::parse(name, line, "duplicate pair"));
        }
    }
    Ok(PairSet::from_counts(counts))
}

pub fn write_pairs(pairs: &PairSet) -> Vec<u8> {
    let mut w = csv_writer();
    w.write_record(PAIRS_HEADER).expect("in-memory write");
    for (p, c) in pairs.iter() {
        w.write_record([p.a.as_str(), p.b.as_str(), &c.to_string()]).expect("in-memory write");
    }
    finish(w)
}

/// How a ground-truth label entered the anchor set.
fn anchor_kind(ann: &ImageAnnotation, label: &SynsetId) -> &'static str {
    match ann.verdicts.get(label) {
        Some(Verdict::Unclear) => "unclear",
        Some(_) => "correct",
        None => "original",
    }
}

/// Compact JSON for a record's evidence. `ann` adds the anchor provenance
/// of fine-grained and spurious matches.
pub fn evidence_json(record: &ErrorRecord, ann: Option<&ImageAnnotation>) -> String {
    let anchor = |label: &SynsetId| ann.map(|a| anchor_kind(a, label));
    let v = match &record.evidence {
        Evidence::OverlapCorrect { matched_gt } => json!({ "matched_gt": matched_gt.as_str() }),
        Evidence::MultiLabelCorrect { matched_label } => json!({ "matched_label": matched_label.as_str() }),
        Evidence::FineGrained { shared_superclass, matched_label } => {
            let mut v = json!({ "superclass": shared_superclass, "matched_label": matched_label.as_str() });
            if let Some(a) = anchor(matched_label) {
                v["anchor"] = a.into();
            }
            v
        }
        Evidence::FineGrainedOov { neighbor_ids, matched_superclass, best_proposal, best_is_oov } => json!({
            "neighbors": neighbor_ids,
            "superclass": matched_superclass,
            "best_proposal": best_proposal.as_str(),
            "best_is_oov": best_is_oov,
        }),
        Evidence::NonPrototypical | Evidence::ModelFailure => json!({}),
        Evidence::SpuriousCorrelation { pair } => {
            let partner = if pair.a == record.predicted { &pair.b } else { &pair.a };
            let mut v = json!({ "pair": [pair.a.as_str(), pair.b.as_str()] });
            if let Some(a) = anchor(partner) {
                v["anchor"] = a.into();
            }
            v
        }
    };
    v.to_string()
}

fn parse_evidence(category: ErrorCategory, raw: &str) -> std::result::Result<Evidence, String> {
    let v: Value = serde_json::from_str(raw).map_err(|e| e.to_string())?;
    let text = |key: &str| v.get(key).and_then(Value::as_str).ok_or_else(|| format!("missing string field {key:?}"));
    let id = |key: &str| text(key).and_then(|s| SynsetId::new(s).map_err(|e| e.to_string()));
    Ok(match category {
        ErrorCategory::OverlapCorrect => Evidence::OverlapCorrect { matched_gt: id("matched_gt")? },
        ErrorCategory::MultiLabelCorrect => Evidence::MultiLabelCorrect { matched_label: id("matched_label")? },
        ErrorCategory::FineGrained => Evidence::FineGrained {
            shared_superclass: text("superclass")?.to_owned(),
            matched_label: id("matched_label")?,
        },
        ErrorCategory::FineGrainedOov => Evidence::FineGrainedOov {
            neighbor_ids: v
                .get("neighbors")
                .and_then(Value::as_array)
                .ok_or("missing array field \"neighbors\"")?
                .iter()
                .map(|n| n.as_str().map(str::to_owned).ok_or("non-string neighbor id"))
                .collect::<std::result::Result<_, _>>()?,
            matched_superclass: text("superclass")?.to_owned(),
            best_proposal: id("best_proposal")?,
            best_is_oov: v.get("best_is_oov").and_then(Value::as_bool).ok_or("missing bool field \"best_is_oov\"")?,
        },
        ErrorCategory::NonPrototypical => Evidence::NonPrototypical,
        ErrorCategory::SpuriousCorrelation => {
            let ids: Vec<SynsetId> = v
                .get("pair")
                .and_then(Value::as_array)
                .filter(|a| a.len() == 2)
                .ok_or("missing two-element array field \"pair\"")?
                .iter()
                .map(|x| x.as_str().ok_or("non-string pair id".to_owned()).and_then(|s| SynsetId::new(s).map_err(|e| e.to_string())))
                .collect::<std::result::Result<_, _>>()?;
            let [a, b]: [SynsetId; 2] = ids.try_into().expect("length checked");
            Evidence::SpuriousCorrelation { pair: ClassPair::new(a, b).ok_or("pair of a class with itself")? }
        }
        ErrorCategory::ModelFailure => Evidence::ModelFailure,
    })
}

pub fn write_records<'a>(
    records: &[ErrorRecord],
    annotation: impl Fn(&ImageId) -> Option<&'a ImageAnnotation>,
) -> Vec<u8> {
    let mut w = csv_writer();
    w.write_record(RECORDS_HEADER).expect("in-memory write");
    for r in records {
        let ev = evidence_json(r, annotation(&r.image));
        w.write_record([r.model.as_str(), r.image.as_str(), r.predicted.as_str(), r.category().as_str(), &ev])
            .expect("in-memory write");
    }
    finish(w)
}

pub fn parse_records(name: &str, bytes: &[u8]) -> Result<Vec<ErrorRecord>> {
    csv_rows(name, bytes, &RECORDS_HEADER)?
        .into_iter()
        .map(|(line, r)| {
            let category = ErrorCategory::parse(&r[3])
                .ok_or_else(|| Error::parse(name, line, format!("unknown category {:?}", r[3])))?;
            let evidence = parse_evidence(category, &r[4]).map_err(|m| Error::parse(name, line, m))?;
            Ok(ErrorRecord {
                model: r[0].clone(),
                image: image(name, line, &r[1])?,
                predicted: synset(name, line, &r[2])?,
                evidence,
            })
        })
        .collect()
}

pub fn parse_expert(name: &str, bytes: &[u8]) -> Result<Vec<ExpertLabel>> {
    csv_rows(name, bytes, &EXPERT_HEADER)?
        .into_iter()
        .map(|(line, r)| {
            let category = ExpertLabel::parse_category(r[2].trim()).map_err(|e| Error::parse(name, line, e))?;
            Ok(ExpertLabel { model: r[0].clone(), image: image(name, line, &r[1])?, category })
        })
        .collect()
}

pub fn write_expert(labels: &[ExpertLabel]) -> Vec<u8> {
    let mut w = csv_writer();
    w.write_record(EXPERT_HEADER).expect("in-memory write");
    for l in labels {
        w.write_record([l.model.as_str(), l.image.as_str(), l.category.as_str()]).expect("in-memory write");
    }
    finish(w)
}

/// Multi-labels grouped per image.
pub fn group_labels(rows: Vec<(ImageId, SynsetId)>) -> BTreeMap<ImageId, BTreeSet<SynsetId>> {
    let mut out: BTreeMap<ImageId, BTreeSet<SynsetId>> = BTreeMap::new();
    for (i, l) in rows {
        out.entry(i).or_default().insert(l);
    }
    out
}

pub fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new())
}

pub fn finish(w: csv::Writer<Vec<u8>>) -> Vec<u8> {
    w.into_inner().expect("in-memory writer never fails")
}
