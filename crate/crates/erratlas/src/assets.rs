//! Asset manifests and loading.
//!
//! A manifest is a JSON file naming every input relative to its own
//! directory. Only the label space (`labels`, `hypernyms`) is mandatory;
//! everything else is loaded when present.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use erratlas_core::annotations::{AnnotationParts, AnnotationStore};
use erratlas_core::cascade::DatasetMode;
use erratlas_core::cooccurrence::{extract_pairs, PairMining, PairSet};
use erratlas_core::label_space::{LabelSpaceParts, Strictness};
use erratlas_core::{EmbeddingMatrix, ImageId, LabelSpace, LabeledIndex, SynsetId};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::formats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
pub enum Mode {
    #[default]
    #[serde(rename = "imagenet")]
    #[value(name = "imagenet")]
    ImageNet,
    #[serde(rename = "imagenet-a")]
    #[value(name = "imagenet-a")]
    ImageNetA,
}

impl From<Mode> for DatasetMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::ImageNet => DatasetMode::ImageNet,
            Mode::ImageNetA => DatasetMode::ImageNetA,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetManifest {
    #[serde(default)]
    pub dataset_mode: Mode,
    /// Enforce the 1000-class and 410/522/68 group counts.
    #[serde(default)]
    pub strict: bool,
    pub labels: String,
    pub hypernyms: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overlap: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub superclasses: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synset_names: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multilabel: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problematic: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub non_prototypical: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub real_labels: Option<String>,
    /// Images left out of pair mining; defaults to the evaluation set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_exclusion: Option<String>,
    /// Precomputed pairs; mined from `real_labels` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_embeddings: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_ids: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_labels: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluation_embeddings: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluation_ids: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_embeddings: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_ids: Option<String>,
    #[serde(default)]
    pub embedding_provenance: String,
    #[serde(default)]
    pub checksums: BTreeMap<String, String>,
}

impl AssetManifest {
    /// Every referenced file with its manifest key.
    pub fn files(&self) -> Vec<(&'static str, &str)> {
        let optional = [
            ("overlap", &self.overlap),
            ("superclasses", &self.superclasses),
            ("synset_names", &self.synset_names),
            ("ground_truth", &self.ground_truth),
            ("multilabel", &self.multilabel),
            ("problematic", &self.problematic),
            ("non_prototypical", &self.non_prototypical),
            ("real_labels", &self.real_labels),
            ("pair_exclusion", &self.pair_exclusion),
            ("pairs", &self.pairs),
            ("reference_embeddings", &self.reference_embeddings),
            ("reference_ids", &self.reference_ids),
            ("reference_labels", &self.reference_labels),
            ("evaluation_embeddings", &self.evaluation_embeddings),
            ("evaluation_ids", &self.evaluation_ids),
            ("text_embeddings", &self.text_embeddings),
            ("text_ids", &self.text_ids),
        ];
        let mut out = vec![("labels", self.labels.as_str()), ("hypernyms", self.hypernyms.as_str())];
        out.extend(optional.iter().filter_map(|(k, v)| v.as_deref().map(|p| (*k, p))));
        out
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

mod bundled {
    pub const MANIFEST: &[u8] = include_bytes!("../assets/imagenet/manifest.json");
    pub const FILES: [(&str, &[u8]); 5] = [
        ("labels.json", include_bytes!("../assets/imagenet/labels.json")),
        ("overlap.json", include_bytes!("../assets/imagenet/overlap.json")),
        ("superclasses.json", include_bytes!("../assets/imagenet/superclasses.json")),
        ("hypernyms.csv", include_bytes!("../assets/imagenet/hypernyms.csv")),
        ("synset_names.csv", include_bytes!("../assets/imagenet/synset_names.csv")),
    ];
}

/// Where manifest-relative paths resolve.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AssetRoot {
    Dir(PathBuf),
    /// The ImageNet label-space assets compiled into the binary.
    Bundled,
}

impl AssetRoot {
    pub fn read(&self, rel: &str) -> Result<Vec<u8>> {
        match self {
            AssetRoot::Dir(dir) => {
                let path = dir.join(rel);
                std::fs::read(&path).map_err(|e| Error::io(path, e))
            }
            AssetRoot::Bundled => bundled::FILES
                .iter()
                .find(|(name, _)| *name == rel)
                .map(|(_, b)| b.to_vec())
                .ok_or_else(|| Error::Validation(format!("{rel} is not part of the bundled assets"))),
        }
    }

    pub fn display(&self, rel: &str) -> String {
        match self {
            AssetRoot::Dir(dir) => dir.join(rel).display().to_string(),
            AssetRoot::Bundled => format!("<bundled>/{rel}"),
        }
    }
}

/// Manifest bytes and the root its paths resolve against.
pub fn open_manifest(path: Option<&Path>) -> Result<(AssetRoot, Vec<u8>)> {
    match path {
        None => Ok((AssetRoot::Bundled, bundled::MANIFEST.to_vec())),
        Some(p) => {
            let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
            let dir = p.parent().map(Path::to_path_buf).unwrap_or_default();
            Ok((AssetRoot::Dir(dir), bytes))
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    pub verify: bool,
    pub mode: Option<Mode>,
}

#[derive(Debug)]
pub struct Assets {
    pub root: AssetRoot,
    pub manifest: AssetManifest,
    pub manifest_sha256: String,
    pub mode: Mode,
    pub space: LabelSpace,
    pub synset_names: BTreeMap<SynsetId, String>,
    pub store: Option<AnnotationStore>,
    pub pair_exclusion: Option<BTreeSet<ImageId>>,
    pub pairs_file: Option<PairSet>,
    pub reference: Option<LabeledIndex>,
    pub evaluation: Option<EmbeddingMatrix>,
    pub text: Option<EmbeddingMatrix>,
}

struct Reader<'a> {
    root: &'a AssetRoot,
    manifest: &'a AssetManifest,
    verify: bool,
}

impl Reader<'_> {
    fn read(&self, rel: &str) -> Result<Vec<u8>> {
        let bytes = self.root.read(rel)?;
        if self.verify {
            let expected = self.manifest.checksums.get(rel).ok_or_else(|| Error::MissingChecksum(rel.to_owned()))?;
            let actual = sha256_hex(&bytes);
            if !expected.eq_ignore_ascii_case(&actual) {
                return Err(Error::ChecksumMismatch { file: rel.to_owned(), expected: expected.clone(), actual });
            }
        }
        Ok(bytes)
    }

    fn opt<T>(&self, rel: &Option<String>, parse: impl FnOnce(&str, &[u8]) -> Result<T>) -> Result<Option<T>> {
        rel.as_deref().map(|r| parse(&self.root.display(r), &self.read(r)?)).transpose()
    }

    fn embeddings(&self, emb: &Option<String>, ids: &Option<String>, key: &'static str) -> Result<Option<EmbeddingMatrix>> {
        match (emb, ids) {
            (None, None) => Ok(None),
            (Some(e), Some(i)) => {
                let (n, dim, values) = formats::read_emb1(&self.root.display(e), &self.read(e)?)?;
                let ids = formats::parse_ids(&self.root.display(i), &self.read(i)?)?;
                if ids.len() != n {
                    return Err(Error::Validation(format!("{key}: {n} embedding rows but {} ids", ids.len())));
                }
                Ok(Some(EmbeddingMatrix::new(ids, dim, &values)?))
            }
            _ => Err(Error::Validation(format!("{key}: embeddings and ids must be given together"))),
        }
    }
}

impl Assets {
    pub fn load(manifest_path: Option<&Path>, opts: LoadOptions) -> Result<Assets> {
        let (root, bytes) = open_manifest(manifest_path)?;
        let manifest: AssetManifest = serde_json::from_slice(&bytes)
            .map_err(|e| Error::parse(root.display("manifest.json"), e.line() as u64, e))?;
        Self::from_manifest(root, manifest, sha256_hex(&bytes), opts)
    }

    pub fn from_manifest(root: AssetRoot, manifest: AssetManifest, manifest_sha256: String, opts: LoadOptions) -> Result<Assets> {
        let mode = opts.mode.unwrap_or(manifest.dataset_mode);
        let m = &manifest;
        let r = Reader { root: &root, manifest: m, verify: opts.verify };
        let name = |rel: &str| root.display(rel);

        let classes = formats::parse_labels(&name(&m.labels), &r.read(&m.labels)?)?;
        let hypernym_edges = formats::parse_hypernyms(&name(&m.hypernyms), &r.read(&m.hypernyms)?)?;
        let overlap = r.opt(&m.overlap, formats::parse_overlap)?.unwrap_or_default();
        let superclasses = r.opt(&m.superclasses, formats::parse_superclasses)?.unwrap_or_default();
        let strictness = if m.strict { Strictness::ImageNet } else { Strictness::Lenient };
        let space = LabelSpace::build(LabelSpaceParts { classes, overlap, superclasses, hypernym_edges }, strictness)?;
        let synset_names = r.opt(&m.synset_names, formats::parse_synset_names)?.unwrap_or_default();

        let ground_truth = r.opt(&m.ground_truth, formats::parse_image_labels)?;
        let verdicts = match mode {
            Mode::ImageNet => r.opt(&m.multilabel, formats::parse_verdicts)?,
            Mode::ImageNetA => None,
        };
        if mode == Mode::ImageNet && ground_truth.is_some() && verdicts.is_none() {
            return Err(Error::MissingAsset("multilabel"));
        }
        let problematic = r.opt(&m.problematic, formats::parse_image_list)?;
        let non_prototypical = r.opt(&m.non_prototypical, formats::parse_image_list)?;
        let real_labels = r.opt(&m.real_labels, formats::parse_image_labels)?;
        let any_annotations =
            ground_truth.is_some() || problematic.is_some() || non_prototypical.is_some() || real_labels.is_some();
        let store = if any_annotations {
            Some(AnnotationStore::build(
                AnnotationParts {
                    ground_truth: ground_truth.unwrap_or_default(),
                    verdicts: verdicts.unwrap_or_default(),
                    problematic: problematic.unwrap_or_default(),
                    non_prototypical: non_prototypical.unwrap_or_default(),
                    real_labels: real_labels.unwrap_or_default(),
                },
                &space,
            )?)
        } else {
            None
        };
        let pair_exclusion = r.opt(&m.pair_exclusion, formats::parse_image_list)?.map(|v| v.into_iter().collect());
        let pairs_file = r.opt(&m.pairs, formats::parse_pairs)?;
        if let Some(p) = &pairs_file {
            for (pair, _) in p.iter() {
                for id in [&pair.a, &pair.b] {
                    if !space.in_vocabulary(id) {
                        return Err(Error::Validation(format!("pairs file references unknown class {id}")));
                    }
                }
            }
        }

        let reference = match r.embeddings(&m.reference_embeddings, &m.reference_ids, "reference")? {
            None => None,
            Some(matrix) => {
                let rel = m.reference_labels.as_deref().ok_or(Error::MissingAsset("reference_labels"))?;
                let rows = formats::parse_image_labels(&name(rel), &r.read(rel)?)?;
                let mut by_id = BTreeMap::new();
                for (img, label) in rows {
                    if !space.in_vocabulary(&label) {
                        return Err(Error::Validation(format!("reference image {img} has unknown label {label}")));
                    }
                    by_id.insert(img.as_str().to_owned(), label);
                }
                let labels = matrix
                    .ids()
                    .iter()
                    .map(|id| {
                        by_id.get(id).cloned().ok_or_else(|| Error::Validation(format!("reference row {id} has no label")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Some(LabeledIndex::new(matrix, labels)?)
            }
        };
        let evaluation = r.embeddings(&m.evaluation_embeddings, &m.evaluation_ids, "evaluation")?;
        let text = r.embeddings(&m.text_embeddings, &m.text_ids, "text")?;
        for (key, e) in [("reference", reference.as_ref().map(|r| &r.matrix)), ("evaluation", evaluation.as_ref())] {
            if let (Some(e), Some(t)) = (e, text.as_ref()) {
                if e.dim() != t.dim() {
                    return Err(Error::Validation(format!(
                        "{key} embeddings have dimension {} but text embeddings {}",
                        e.dim(),
                        t.dim()
                    )));
                }
            }
        }

        Ok(Assets {
            root,
            mode,
            space,
            synset_names,
            store,
            pair_exclusion,
            pairs_file,
            reference,
            evaluation,
            text,
            manifest_sha256,
            manifest,
        })
    }

    pub fn store(&self) -> Result<&AnnotationStore> {
        self.store.as_ref().ok_or(Error::MissingAsset("ground_truth"))
    }

    /// Mines spurious-correlation pairs from the ReaL labels, excluding the
    /// configured images (the evaluation set by default).
    pub fn mine_pairs(&self) -> Result<PairMining> {
        let store = self.store()?;
        if self.manifest.real_labels.is_none() {
            return Err(Error::MissingAsset("real_labels"));
        }
        let excluded = match &self.pair_exclusion {
            Some(e) => e.clone(),
            None => store.evaluation_ids(),
        };
        Ok(extract_pairs(store.real_labels(), &excluded, &self.space)?)
    }

    /// Pairs used by the cascade: the pairs file if given, else mined, else
    /// none.
    pub fn pairs(&self) -> Result<PairSet> {
        if let Some(p) = &self.pairs_file {
            return Ok(p.clone());
        }
        if self.manifest.real_labels.is_some() {
            return Ok(self.mine_pairs()?.pairs);
        }
        log::warn!("no pairs or real_labels in the manifest; the spurious-correlation stage never fires");
        Ok(PairSet::default())
    }
}

/// Manifest describing `files` (name → bytes) under a directory, with
/// checksums for every file.
pub fn with_checksums<'a>(mut manifest: AssetManifest, files: impl IntoIterator<Item = (&'a str, &'a [u8])>) -> AssetManifest {
    manifest.checksums = files.into_iter().map(|(n, b)| (n.to_owned(), sha256_hex(b))).collect();
    manifest
}
