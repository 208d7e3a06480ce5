//! Seeded synthetic worlds with planted errors of known category.
//!
//! Every planted misprediction is built so that exactly its intended stage
//! fires and no less severe one does:
//!
//! - superclass members sit under their own hypernym node, the remaining
//!   ("plain") classes under their group node, so plain classes share no
//!   superclass with anything;
//! - overlap relations only involve dedicated classes;
//! - an image whose prediction belongs to a superclass and that should not
//!   reach the OOV verdict gets ten reference rows right next to its
//!   embedding, labeled either with plain classes (gate fails) or with
//!   superclass members while its embedding sits next to an in-vocabulary
//!   text vector (winner in vocabulary);
//! - planted OOV images get a fresh out-of-vocabulary synset whose text
//!   vector is their own embedding;
//! - co-occurrence rows are written only for planted spurious pairs, plus
//!   decoys that the miner has to filter out (single occurrences, rows of
//!   evaluation images).

use std::collections::{BTreeMap, BTreeSet};

use erratlas_core::annotations::Verdict;
use erratlas_core::cascade::{ErrorCategory, ModelRun};
use erratlas_core::label_space::{ClassInfo, Containment, Group, OverlapSpec};
use erratlas_core::metrics::{ArchitectureFamily, ExpertLabel, ModelMeta};
use erratlas_core::{ImageId, SynsetId};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::assets::{with_checksums, AssetManifest, Mode};
use crate::formats;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureParams {
    pub seed: u64,
    /// Planted errors per category (and number of correct predictions).
    pub per_category: usize,
    pub superclasses: usize,
    /// Classes per superclass.
    pub members: usize,
    pub plain_classes: usize,
    pub models: usize,
    pub dim: usize,
    pub background_refs: usize,
    pub k_neighbors: usize,
    /// Images whose evaluation embedding is withheld although the cascade
    /// needs it.
    pub gaps: usize,
}

impl Default for FixtureParams {
    fn default() -> Self {
        FixtureParams {
            seed: 0,
            per_category: 24,
            superclasses: 8,
            members: 4,
            plain_classes: 30,
            models: 3,
            dim: 32,
            background_refs: 300,
            k_neighbors: 10,
            gaps: 0,
        }
    }
}

/// What the cascade should report for one (model, image).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Expected {
    Correct,
    Error(ErrorCategory),
    /// A needed embedding is missing.
    Skipped,
    /// Problematic image.
    Ignored,
    /// The model has no prediction for the image.
    Missing,
}

impl Expected {
    pub fn as_str(self) -> &'static str {
        match self {
            Expected::Correct => "correct",
            Expected::Error(c) => c.as_str(),
            Expected::Skipped => "skipped",
            Expected::Ignored => "ignored",
            Expected::Missing => "missing",
        }
    }

    pub fn parse(s: &str) -> Option<Expected> {
        match s {
            "correct" => Some(Expected::Correct),
            "skipped" => Some(Expected::Skipped),
            "ignored" => Some(Expected::Ignored),
            "missing" => Some(Expected::Missing),
            _ => ErrorCategory::parse(s).map(Expected::Error),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Planting {
    pub image: ImageId,
    pub original: SynsetId,
    /// The prediction of models that make the planted mistake.
    pub predicted: SynsetId,
    pub expected: Expected,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelExpectation {
    pub model: String,
    pub predictions: BTreeMap<ImageId, SynsetId>,
    pub expected: BTreeMap<ImageId, Expected>,
}

impl ModelExpectation {
    pub fn count(&self, e: Expected) -> usize {
        self.expected.values().filter(|x| **x == e).count()
    }
}

#[derive(Debug, Clone)]
pub struct PlantedWorld {
    pub params: FixtureParams,
    /// Relative path → contents, everything `write_to` emits.
    pub files: BTreeMap<String, Vec<u8>>,
    pub plantings: Vec<Planting>,
    pub models: Vec<ModelExpectation>,
    /// Pairs the miner must find, as `(a, b)` with `a < b`.
    pub spurious_pairs: BTreeSet<(SynsetId, SynsetId)>,
}

impl PlantedWorld {
    pub fn write_to(&self, dir: &std::path::Path) -> std::io::Result<()> {
        for (rel, bytes) in &self.files {
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(path, bytes)?;
        }
        Ok(())
    }
}

pub const MANIFEST: &str = "manifest.json";
pub const PREDICTIONS_DIR: &str = "predictions";
pub const MODELS: &str = "models.json";
pub const EXPERT: &str = "expert.csv";
pub const EXPECTED: &str = "expected.csv";

fn sid(n: usize) -> SynsetId {
    SynsetId::new(format!("n{n:08}")).expect("generated id")
}

fn pair(a: &SynsetId, b: &SynsetId) -> (SynsetId, SynsetId) {
    if a < b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

struct Builder {
    p: FixtureParams,
    rng: ChaCha8Rng,
    classes: Vec<ClassInfo>,
    names: BTreeMap<SynsetId, String>,
    edges: Vec<(SynsetId, SynsetId)>,
    superclasses: Vec<(SynsetId, Vec<SynsetId>)>,
    plain: Vec<SynsetId>,
    contains: Vec<(SynsetId, SynsetId)>,
    equivalent: Vec<(SynsetId, SynsetId)>,
    next_oov: usize,
    text: BTreeMap<SynsetId, Vec<f32>>,
    reference: Vec<(String, SynsetId, Vec<f32>)>,
    evaluation: BTreeMap<ImageId, Vec<f32>>,
    ground_truth: Vec<(ImageId, SynsetId)>,
    verdicts: Vec<(ImageId, SynsetId, Verdict)>,
    problematic: Vec<ImageId>,
    non_prototypical: Vec<ImageId>,
    real_labels: Vec<(ImageId, SynsetId)>,
    next_real: usize,
    plantings: Vec<Planting>,
    spurious: BTreeSet<(SynsetId, SynsetId)>,
    /// (original, predicted) pairs that must never be mined.
    guarded: BTreeSet<(SynsetId, SynsetId)>,
}

const ROOT: usize = 7_000_000;
const CLASS_BASE: usize = 1_000_000;
const NODE_BASE: usize = 8_000_000;
const OOV_BASE: usize = 9_000_000;

impl Builder {
    fn new(p: FixtureParams) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(p.seed);
        Builder {
            p,
            rng,
            classes: Vec::new(),
            names: BTreeMap::new(),
            edges: Vec::new(),
            superclasses: Vec::new(),
            plain: Vec::new(),
            contains: Vec::new(),
            equivalent: Vec::new(),
            next_oov: OOV_BASE,
            text: BTreeMap::new(),
            reference: Vec::new(),
            evaluation: BTreeMap::new(),
            ground_truth: Vec::new(),
            verdicts: Vec::new(),
            problematic: Vec::new(),
            non_prototypical: Vec::new(),
            real_labels: Vec::new(),
            next_real: 0,
            plantings: Vec::new(),
            spurious: BTreeSet::new(),
            guarded: BTreeSet::new(),
        }
    }

    fn vector(&mut self) -> Vec<f32> {
        (0..self.p.dim).map(|_| self.rng.sample::<f32, _>(StandardNormal)).collect()
    }

    fn near(&mut self, v: &[f32]) -> Vec<f32> {
        v.iter().map(|x| x + 0.05 * self.rng.sample::<f32, _>(StandardNormal)).collect()
    }

    fn node(&mut self, id: SynsetId, name: String, parent: Option<&SynsetId>) {
        if let Some(p) = parent {
            self.edges.push((id.clone(), p.clone()));
        }
        self.names.insert(id, name);
    }

    fn class(&mut self, n: usize, name: String, group: Group, parent: &SynsetId) -> SynsetId {
        let id = sid(CLASS_BASE + n);
        self.classes.push(ClassInfo { id: id.clone(), name: name.clone(), group });
        self.node(id.clone(), name, Some(parent));
        id
    }

    fn build_taxonomy(&mut self) {
        let root = sid(ROOT);
        self.node(root.clone(), "root".into(), None);
        let groups: Vec<SynsetId> = (1..=3).map(|i| sid(ROOT + i)).collect();
        for (g, id) in Group::ALL.iter().zip(&groups) {
            self.node(id.clone(), g.as_str().into(), Some(&root));
        }
        let mut n = 0;
        for s in 0..self.p.superclasses {
            let node = sid(NODE_BASE + s);
            self.node(node.clone(), format!("superclass_{s:02}_node"), Some(&groups[s % 3]));
            let members: Vec<SynsetId> = (0..self.p.members)
                .map(|m| {
                    n += 1;
                    self.class(n, format!("sc{s:02}_member{m}"), Group::ALL[s % 3], &node)
                })
                .collect();
            self.superclasses.push((node, members));
        }
        for i in 0..self.p.plain_classes {
            n += 1;
            let c = self.class(n, format!("plain{i:02}"), Group::ALL[i % 3], &groups[i % 3]);
            self.plain.push(c);
        }
        for i in 0..4 {
            n += 2;
            let g = &groups[i % 3];
            let sup = self.class(n - 1, format!("superset{i}"), Group::ALL[i % 3], g);
            let sub = self.class(n, format!("subset{i}"), Group::ALL[i % 3], g);
            self.contains.push((sup, sub));
        }
        for i in 0..3 {
            n += 2;
            let g = &groups[i % 3];
            let a = self.class(n - 1, format!("equiv{i}a"), Group::ALL[i % 3], g);
            let b = self.class(n, format!("equiv{i}b"), Group::ALL[i % 3], g);
            self.equivalent.push((a, b));
        }
    }

    fn superclass_of(&self, c: &SynsetId) -> Option<usize> {
        self.superclasses.iter().position(|(_, m)| m.contains(c))
    }

    fn random_member(&mut self, s: usize) -> SynsetId {
        self.superclasses[s].1.choose(&mut self.rng).expect("non-empty").clone()
    }

    fn random_classified(&mut self) -> (usize, SynsetId) {
        let s = self.rng.random_range(0..self.superclasses.len());
        (s, self.random_member(s))
    }

    fn two_plain(&mut self) -> (SynsetId, SynsetId) {
        let picked: Vec<SynsetId> = self.plain.choose_multiple(&mut self.rng, 2).cloned().collect();
        (picked[0].clone(), picked[1].clone())
    }

    fn add_refs(&mut self, v: &[f32], labels: impl Fn(&mut Self) -> SynsetId) {
        for _ in 0..self.p.k_neighbors {
            let row = self.near(v);
            let label = labels(self);
            let id = format!("ref_{:05}", self.reference.len());
            self.reference.push((id, label, row));
        }
    }

    /// Embedding and reference rows for an image whose prediction `pred`
    /// must not be judged OOV.
    fn block_oov(&mut self, pred: &SynsetId, variant: usize) -> Vec<f32> {
        let Some(s) = self.superclass_of(pred) else {
            return self.vector();
        };
        if variant.is_multiple_of(2) {
            let v = self.vector();
            self.add_refs(&v, |b| b.plain.choose(&mut b.rng).expect("plain classes").clone());
            v
        } else {
            let m = self.random_member(s);
            let target = self.text[&m].clone();
            let v = self.near(&target);
            self.add_refs(&v, move |b| b.random_member(s));
            v
        }
    }

    fn image(&mut self, original: &SynsetId, predicted: &SynsetId, expected: Expected, emb: Option<Vec<f32>>) -> ImageId {
        let id = ImageId::new(format!("fx_{:05}", self.plantings.len())).expect("generated id");
        self.ground_truth.push((id.clone(), original.clone()));
        if let Some(v) = emb {
            self.evaluation.insert(id.clone(), v);
        }
        self.plantings.push(Planting {
            image: id.clone(),
            original: original.clone(),
            predicted: predicted.clone(),
            expected,
        });
        id
    }

    fn real_image(&mut self, labels: &[&SynsetId]) {
        let id = ImageId::new(format!("real_{:05}", self.next_real)).expect("generated id");
        self.next_real += 1;
        self.real_row(&id, labels);
    }

    fn real_row(&mut self, id: &ImageId, labels: &[&SynsetId]) {
        for l in labels {
            self.real_labels.push((id.clone(), (*l).clone()));
        }
    }

    fn plant_overlap(&mut self, i: usize) {
        let e = Expected::Error(ErrorCategory::OverlapCorrect);
        match i % 4 {
            0 | 2 => {
                let (sup, sub) = self.contains[(i / 4) % self.contains.len()].clone();
                let v = self.vector();
                self.image(&sub, &sup, e, Some(v));
            }
            1 => {
                let (a, b) = self.equivalent[(i / 4) % self.equivalent.len()].clone();
                let (g, p) = if (i / 4).is_multiple_of(2) { (a, b) } else { (b, a) };
                let v = self.vector();
                self.image(&g, &p, e, Some(v));
            }
            _ => {
                // the accepted multi-label, not the original label, is overlapped
                let (sup, sub) = self.contains[(i / 4) % self.contains.len()].clone();
                let g = self.plain.choose(&mut self.rng).expect("plain").clone();
                let v = self.vector();
                let img = self.image(&g, &sup, e, Some(v));
                self.verdicts.push((img, sub, Verdict::Correct));
            }
        }
    }

    fn plant_multi_label(&mut self, i: usize) {
        let (g, mut p) = self.two_plain();
        if i % 3 == 2 {
            p = self.random_classified().1;
        }
        let v = self.vector();
        let img = self.image(&g, &p, Expected::Error(ErrorCategory::MultiLabelCorrect), Some(v));
        if i.is_multiple_of(2) {
            self.verdicts.push((img.clone(), g, Verdict::Correct));
        }
        let verdict = if i.is_multiple_of(2) { Verdict::Correct } else { Verdict::Unclear };
        self.verdicts.push((img, p, verdict));
    }

    fn plant_fine_grained(&mut self, i: usize) {
        let s = self.rng.random_range(0..self.superclasses.len());
        let picked: Vec<SynsetId> = self.superclasses[s].1.choose_multiple(&mut self.rng, 2).cloned().collect();
        let v = self.vector();
        let e = Expected::Error(ErrorCategory::FineGrained);
        if i.is_multiple_of(2) {
            self.image(&picked[0], &picked[1], e, Some(v));
        } else {
            let g = self.plain.choose(&mut self.rng).expect("plain").clone();
            let img = self.image(&g, &picked[1], e, Some(v));
            let verdict = if i % 4 == 1 { Verdict::Unclear } else { Verdict::Correct };
            self.verdicts.push((img, picked[0].clone(), verdict));
        }
    }

    fn plant_oov(&mut self, _i: usize) {
        let g = self.plain.choose(&mut self.rng).expect("plain").clone();
        let (s, p) = self.random_classified();
        let oov = sid(self.next_oov);
        self.next_oov += 1;
        let node = self.superclasses[s].0.clone();
        self.node(oov.clone(), format!("oov_{}", oov.as_str()), Some(&node));
        let t = self.vector();
        self.text.insert(oov, t.clone());
        let v = self.near(&t);
        self.add_refs(&v, move |b| b.random_member(s));
        self.image(&g, &p, Expected::Error(ErrorCategory::FineGrainedOov), Some(v));
    }

    /// Original and prediction for the three most severe categories: a
    /// plain ground truth and either a plain or a classified prediction.
    fn late_stage_pair(&mut self, i: usize) -> (SynsetId, SynsetId, Vec<f32>) {
        loop {
            let (g, p) = if i.is_multiple_of(2) {
                self.two_plain()
            } else {
                let g = self.plain.choose(&mut self.rng).expect("plain").clone();
                (g, self.random_classified().1)
            };
            let key = pair(&g, &p);
            if self.spurious.contains(&key) || self.guarded.contains(&key) {
                continue;
            }
            let v = self.block_oov(&p, i / 2);
            return (g, p, v);
        }
    }

    fn plant_non_prototypical(&mut self, i: usize) {
        let (g, p, v) = self.late_stage_pair(i);
        let img = self.image(&g, &p, Expected::Error(ErrorCategory::NonPrototypical), Some(v));
        self.non_prototypical.push(img);
    }

    fn plant_spurious(&mut self, i: usize) {
        let (g, p, v) = self.late_stage_pair(i);
        self.spurious.insert(pair(&g, &p));
        for _ in 0..2 + i % 2 {
            self.real_image(&[&g, &p]);
        }
        self.image(&g, &p, Expected::Error(ErrorCategory::SpuriousCorrelation), Some(v));
    }

    fn plant_failure(&mut self, i: usize) {
        let (g, p, v) = self.late_stage_pair(i);
        self.guarded.insert(pair(&g, &p));
        let img = self.image(&g, &p, Expected::Error(ErrorCategory::ModelFailure), Some(v));
        match i % 3 {
            // an explicitly rejected label is not a multi-label match
            0 => self.verdicts.push((img, p, Verdict::Wrong)),
            // co-occurs once elsewhere and once on the evaluation image
            // itself, which pair mining must ignore
            1 => {
                self.real_image(&[&g, &p]);
                self.real_row(&img, &[&g, &p]);
            }
            _ => {}
        }
    }

    fn plant_decoys(&mut self) {
        // same-superclass co-occurrences are filtered however frequent
        for s in 0..self.superclasses.len() {
            let picked: Vec<SynsetId> = self.superclasses[s].1.choose_multiple(&mut self.rng, 2).cloned().collect();
            for _ in 0..3 {
                self.real_image(&[&picked[0], &picked[1]]);
            }
        }
        // single-label rows produce no pairs
        for _ in 0..10 {
            let c = self.plain.choose(&mut self.rng).expect("plain").clone();
            self.real_image(&[&c]);
        }
    }

    fn plant_rest(&mut self) {
        let all: Vec<SynsetId> = self.classes.iter().map(|c| c.id.clone()).collect();
        for _ in 0..self.p.per_category {
            let c = all.choose(&mut self.rng).expect("classes").clone();
            let v = self.vector();
            self.image(&c, &c, Expected::Correct, Some(v));
        }
        for _ in 0..4 {
            let (g, p) = self.two_plain();
            let v = self.vector();
            let img = self.image(&g, &p, Expected::Ignored, Some(v));
            self.problematic.push(img);
        }
        for _ in 0..self.p.gaps {
            let g = self.plain.choose(&mut self.rng).expect("plain").clone();
            let (_, p) = self.random_classified();
            self.image(&g, &p, Expected::Skipped, None);
        }
    }

    fn build(mut self) -> PlantedWorld {
        self.build_taxonomy();
        let hierarchy: Vec<SynsetId> = self.names.keys().cloned().collect();
        for id in hierarchy {
            let v = self.vector();
            self.text.insert(id, v);
        }
        for _ in 0..self.p.background_refs {
            let v = self.vector();
            let label = self.classes.choose(&mut self.rng).expect("classes").id.clone();
            let id = format!("ref_{:05}", self.reference.len());
            self.reference.push((id, label, v));
        }

        let n = self.p.per_category;
        for i in 0..n {
            self.plant_overlap(i);
        }
        for i in 0..n {
            self.plant_multi_label(i);
        }
        for i in 0..n {
            self.plant_fine_grained(i);
        }
        for i in 0..n {
            self.plant_oov(i);
        }
        for i in 0..n {
            self.plant_spurious(i);
        }
        for i in 0..n {
            self.plant_non_prototypical(i);
        }
        for i in 0..n {
            self.plant_failure(i);
        }
        self.plant_decoys();
        self.plant_rest();

        // shuffle so categories are interleaved in id order
        let mut order: Vec<usize> = (0..self.plantings.len()).collect();
        order.shuffle(&mut self.rng);
        let models = self.models(&order);
        self.emit(models)
    }

    fn models(&mut self, order: &[usize]) -> Vec<ModelExpectation> {
        let mut out = Vec::new();
        for m in 0..self.p.models {
            let mut predictions = BTreeMap::new();
            let mut expected = BTreeMap::new();
            let mut missing = 0;
            for &i in order {
                let pl = &self.plantings[i];
                if m == 1 && missing < 3 && pl.expected == Expected::Correct {
                    missing += 1;
                    expected.insert(pl.image.clone(), Expected::Missing);
                    continue;
                }
                let planted = m == 0 || self.rng.random_bool(0.6);
                let (pred, exp) = if planted || pl.expected == Expected::Ignored {
                    (pl.predicted.clone(), pl.expected)
                } else {
                    (pl.original.clone(), Expected::Correct)
                };
                predictions.insert(pl.image.clone(), pred);
                expected.insert(pl.image.clone(), exp);
            }
            out.push(ModelExpectation { model: format!("model_{m}"), predictions, expected });
        }
        out
    }

    fn emit(self, models: Vec<ModelExpectation>) -> PlantedWorld {
        let mut files: BTreeMap<String, Vec<u8>> = BTreeMap::new();
        files.insert("labels.json".into(), json(&self.classes));
        files.insert(
            "overlap.json".into(),
            json(&OverlapSpec {
                equivalent: self.equivalent.iter().map(|(a, b)| [a.clone(), b.clone()]).collect(),
                contains: self
                    .contains
                    .iter()
                    .map(|(sup, sub)| Containment { superset: sup.clone(), subsets: vec![sub.clone()] })
                    .collect(),
            }),
        );
        let superclasses: BTreeMap<String, Vec<SynsetId>> = self
            .superclasses
            .iter()
            .enumerate()
            .map(|(s, (_, m))| (format!("superclass_{s:02}"), m.clone()))
            .collect();
        files.insert("superclasses.json".into(), json(&superclasses));

        let mut w = formats::csv_writer();
        for (c, p) in &self.edges {
            w.write_record([c.as_str(), p.as_str()]).expect("in-memory write");
        }
        files.insert("hypernyms.csv".into(), formats::finish(w));
        let mut w = formats::csv_writer();
        for (id, name) in &self.names {
            w.write_record([id.as_str(), name.as_str()]).expect("in-memory write");
        }
        files.insert("synset_names.csv".into(), formats::finish(w));

        files.insert("ground_truth.csv".into(), image_label_csv(&self.ground_truth));
        let mut w = formats::csv_writer();
        w.write_record(formats::VERDICTS_HEADER).expect("in-memory write");
        for (i, l, v) in &self.verdicts {
            w.write_record([i.as_str(), l.as_str(), v.as_str()]).expect("in-memory write");
        }
        files.insert("multilabel.csv".into(), formats::finish(w));
        files.insert("problematic.txt".into(), formats::write_lines(self.problematic.iter().map(|i| i.as_str())));
        files.insert(
            "non_prototypical.txt".into(),
            formats::write_lines(self.non_prototypical.iter().map(|i| i.as_str())),
        );
        files.insert("real_labels.csv".into(), image_label_csv(&self.real_labels));

        let dim = self.p.dim;
        let flat = |rows: &mut dyn Iterator<Item = &Vec<f32>>| rows.flat_map(|v| v.iter().copied()).collect::<Vec<f32>>();
        files.insert(
            "reference.emb".into(),
            formats::write_emb1(self.reference.len(), dim, &flat(&mut self.reference.iter().map(|r| &r.2))),
        );
        files.insert("reference.ids".into(), formats::write_lines(self.reference.iter().map(|r| r.0.as_str())));
        let ref_labels: Vec<(ImageId, SynsetId)> =
            self.reference.iter().map(|r| (ImageId::new(r.0.clone()).expect("generated id"), r.1.clone())).collect();
        files.insert("reference_labels.csv".into(), image_label_csv(&ref_labels));
        files.insert(
            "evaluation.emb".into(),
            formats::write_emb1(self.evaluation.len(), dim, &flat(&mut self.evaluation.values())),
        );
        files.insert("evaluation.ids".into(), formats::write_lines(self.evaluation.keys().map(|i| i.as_str())));
        files.insert("text.emb".into(), formats::write_emb1(self.text.len(), dim, &flat(&mut self.text.values())));
        files.insert("text.ids".into(), formats::write_lines(self.text.keys().map(|i| i.as_str())));

        let manifest = AssetManifest {
            dataset_mode: Mode::ImageNet,
            strict: false,
            labels: "labels.json".into(),
            hypernyms: "hypernyms.csv".into(),
            overlap: Some("overlap.json".into()),
            superclasses: Some("superclasses.json".into()),
            synset_names: Some("synset_names.csv".into()),
            ground_truth: Some("ground_truth.csv".into()),
            multilabel: Some("multilabel.csv".into()),
            problematic: Some("problematic.txt".into()),
            non_prototypical: Some("non_prototypical.txt".into()),
            real_labels: Some("real_labels.csv".into()),
            reference_embeddings: Some("reference.emb".into()),
            reference_ids: Some("reference.ids".into()),
            reference_labels: Some("reference_labels.csv".into()),
            evaluation_embeddings: Some("evaluation.emb".into()),
            evaluation_ids: Some("evaluation.ids".into()),
            text_embeddings: Some("text.emb".into()),
            text_ids: Some("text.ids".into()),
            embedding_provenance: format!("synthetic Gaussian vectors, seed {}", self.p.seed),
            ..Default::default()
        };
        let manifest = with_checksums(manifest, files.iter().map(|(k, v)| (k.as_str(), v.as_slice())));
        files.insert(MANIFEST.into(), json(&manifest));

        for m in &models {
            files.insert(format!("{PREDICTIONS_DIR}/{}.csv", m.model), formats::write_predictions(&m.predictions));
        }
        let families = ArchitectureFamily::ALL;
        let sizes = [1_281_167u64, 14_000_000, 300_000_000, 2_000_000_000];
        let metas: Vec<ModelMeta> = models
            .iter()
            .enumerate()
            .map(|(i, m)| ModelMeta {
                name: m.model.clone(),
                architecture_family: families[i % families.len()],
                param_count: 1_000_000 * (i as u64 + 1),
                pretrain_dataset: format!("synthetic-{}", i % sizes.len()),
                pretrain_size_images: sizes[i % sizes.len()],
            })
            .collect();
        files.insert(MODELS.into(), json(&metas));

        if let Some(m0) = models.first() {
            let expert: Vec<ExpertLabel> = m0
                .expected
                .iter()
                .filter_map(|(img, e)| match e {
                    Expected::Error(c) => Some(ExpertLabel { model: m0.model.clone(), image: img.clone(), category: *c }),
                    _ => None,
                })
                .collect();
            files.insert(EXPERT.into(), formats::write_expert(&expert));
        }
        let mut w = formats::csv_writer();
        w.write_record(["model", "image_id", "expected"]).expect("in-memory write");
        for m in &models {
            for (img, e) in &m.expected {
                w.write_record([m.model.as_str(), img.as_str(), e.as_str()]).expect("in-memory write");
            }
        }
        files.insert(EXPECTED.into(), formats::finish(w));

        PlantedWorld { params: self.p, files, plantings: self.plantings, models, spurious_pairs: self.spurious }
    }
}

fn image_label_csv(rows: &[(ImageId, SynsetId)]) -> Vec<u8> {
    let mut w = formats::csv_writer();
    w.write_record(formats::GROUND_TRUTH_HEADER).expect("in-memory write");
    for (i, l) in rows {
        w.write_record([i.as_str(), l.as_str()]).expect("in-memory write");
    }
    formats::finish(w)
}

fn json<T: serde::Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable");
    out.push(b'\n');
    out
}

pub fn generate(params: FixtureParams) -> PlantedWorld {
    assert!(params.members >= 2 && params.superclasses >= 1 && params.plain_classes >= 4, "world too small");
    assert!(params.k_neighbors >= 1 && params.dim >= 2, "degenerate embedding settings");
    Builder::new(params).build()
}

/// Reads `expected.csv` back.
pub fn parse_expected(name: &str, bytes: &[u8]) -> crate::Result<BTreeMap<String, BTreeMap<ImageId, Expected>>> {
    let mut out: BTreeMap<String, BTreeMap<ImageId, Expected>> = BTreeMap::new();
    for (line, r) in formats::csv_rows(name, bytes, &["model", "image_id", "expected"])? {
        let e = Expected::parse(&r[2]).ok_or_else(|| crate::Error::parse(name, line, format!("unknown outcome {:?}", r[2])))?;
        let img = ImageId::new(r[1].clone())?;
        out.entry(r[0].clone()).or_default().insert(img, e);
    }
    Ok(out)
}

/// Outcome of every (model, image) in a cascade run, in the vocabulary of
/// `expected.csv`.
pub fn observed(runs: &[ModelRun], predictions: &BTreeMap<ImageId, SynsetId>, model: &str) -> BTreeMap<ImageId, Expected> {
    let mut out: BTreeMap<ImageId, Expected> = predictions.keys().map(|i| (i.clone(), Expected::Correct)).collect();
    let Some(run) = runs.iter().find(|r| r.model == model) else {
        return out;
    };
    for r in &run.records {
        out.insert(r.image.clone(), Expected::Error(r.category()));
    }
    for s in &run.skipped {
        out.insert(s.image.clone(), Expected::Skipped);
    }
    for i in &run.ignored {
        out.insert(i.clone(), Expected::Ignored);
    }
    for i in &run.missing_predictions {
        out.insert(i.clone(), Expected::Missing);
    }
    out
}

/// `model image: expected X, got Y` for every disagreement with the
/// planted outcomes.
pub fn mismatches(world: &PlantedWorld, runs: &[ModelRun]) -> Vec<String> {
    let mut out = Vec::new();
    for m in &world.models {
        let got = observed(runs, &m.predictions, &m.model);
        for (img, want) in &m.expected {
            let have = got.get(img).copied();
            if have != Some(*want) {
                let have = have.map_or("nothing", Expected::as_str);
                out.push(format!("{} {img}: expected {}, got {have}", m.model, want.as_str()));
            }
        }
    }
    out
}
