//! Severity-ordered classification of a single misprediction.
//!
//! Stages run in a fixed order and the first one whose predicate holds
//! decides the category:
//!
//! 1. class overlap: the prediction is a distinct superset or equivalent of
//!    a ground-truth label,
//! 2. multi-label (ImageNet mode only): the prediction is an accepted label,
//! 3. fine-grained: the prediction shares a superclass with a ground-truth
//!    label,
//! 4. fine-grained OOV: visually similar reference images carry a label of
//!    the prediction's superclass and the open-world winner among the
//!    proposal labels is out of vocabulary,
//! 5. non-prototypical: the image is in the expert-flagged set,
//! 6. spurious correlation: the prediction and a ground-truth label form a
//!    mined co-occurrence pair,
//!
//! and anything left is a model failure. A prediction equal to the original
//! label is not an error.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::annotations::{AnnotationError, AnnotationStore, ImageAnnotation};
use crate::cooccurrence::{ClassPair, PairSet};
use crate::embedding::{score_proposals, EmbeddingError, EmbeddingMatrix, LabeledIndex};
use crate::ids::{ImageId, SynsetId};
use crate::label_space::{Group, LabelSpace, LabelSpaceError};

/// Error categories in ascending severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ErrorCategory {
    OverlapCorrect,
    MultiLabelCorrect,
    FineGrained,
    FineGrainedOov,
    NonPrototypical,
    SpuriousCorrelation,
    ModelFailure,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 7] = [
        ErrorCategory::OverlapCorrect,
        ErrorCategory::MultiLabelCorrect,
        ErrorCategory::FineGrained,
        ErrorCategory::FineGrainedOov,
        ErrorCategory::NonPrototypical,
        ErrorCategory::SpuriousCorrelation,
        ErrorCategory::ModelFailure,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::OverlapCorrect => "overlap_correct",
            ErrorCategory::MultiLabelCorrect => "multi_label_correct",
            ErrorCategory::FineGrained => "fine_grained",
            ErrorCategory::FineGrainedOov => "fine_grained_oov",
            ErrorCategory::NonPrototypical => "non_prototypical",
            ErrorCategory::SpuriousCorrelation => "spurious_correlation",
            ErrorCategory::ModelFailure => "model_failure",
        }
    }

    /// Parses canonical names as well as the usual human spellings
    /// ("Fine-grained OOV", "Spur. Corr.", "Model failures", ...).
    pub fn parse(label: &str) -> Option<ErrorCategory> {
        let key: String = label
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        let cat = match key.as_str() {
            "overlapcorrect" | "overlap" | "classoverlap" => ErrorCategory::OverlapCorrect,
            "multilabelcorrect" | "multilabel" | "missingmultilabel" => ErrorCategory::MultiLabelCorrect,
            "finegrained" | "fg" => ErrorCategory::FineGrained,
            "finegrainedoov" | "fgoov" | "oov" => ErrorCategory::FineGrainedOov,
            "nonprototypical" | "nonprot" | "nonproto" => ErrorCategory::NonPrototypical,
            "spuriouscorrelation" | "spurcorr" | "spurious" => ErrorCategory::SpuriousCorrelation,
            "modelfailure" | "modelfailures" | "failure" => ErrorCategory::ModelFailure,
            _ => return None,
        };
        Some(cat)
    }

    /// Whether the category still counts as an error under multi-label
    /// evaluation.
    pub fn is_multi_label_error(self) -> bool {
        self >= ErrorCategory::FineGrained
    }
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A cascade stage; model failure is the residual and has no stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Overlap,
    MultiLabel,
    FineGrained,
    FineGrainedOov,
    NonPrototypical,
    Spurious,
}

impl Stage {
    pub const DEFAULT_ORDER: [Stage; 6] = [
        Stage::Overlap,
        Stage::MultiLabel,
        Stage::FineGrained,
        Stage::FineGrainedOov,
        Stage::NonPrototypical,
        Stage::Spurious,
    ];

    pub fn category(self) -> ErrorCategory {
        match self {
            Stage::Overlap => ErrorCategory::OverlapCorrect,
            Stage::MultiLabel => ErrorCategory::MultiLabelCorrect,
            Stage::FineGrained => ErrorCategory::FineGrained,
            Stage::FineGrainedOov => ErrorCategory::FineGrainedOov,
            Stage::NonPrototypical => ErrorCategory::NonPrototypical,
            Stage::Spurious => ErrorCategory::SpuriousCorrelation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DatasetMode {
    #[default]
    ImageNet,
    /// Single-entity dataset: no multi-label stage, ground truth is the
    /// original label only.
    ImageNetA,
}

/// Which ground-truth label anchors the OOV ancestor walk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OovAnchor {
    #[default]
    OriginalLabel,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CascadeConfig {
    pub k_neighbors: usize,
    pub mode: DatasetMode,
    pub oov_anchor: OovAnchor,
    pub stages: Vec<Stage>,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        CascadeConfig {
            k_neighbors: 10,
            mode: DatasetMode::ImageNet,
            oov_anchor: OovAnchor::OriginalLabel,
            stages: Stage::DEFAULT_ORDER.to_vec(),
        }
    }
}

impl CascadeConfig {
    pub fn with_mode(mode: DatasetMode) -> Self {
        CascadeConfig { mode, ..Default::default() }
    }
}

/// Supporting facts for an assigned category.
#[derive(Debug, Clone, PartialEq)]
pub enum Evidence {
    OverlapCorrect { matched_gt: SynsetId },
    MultiLabelCorrect { matched_label: SynsetId },
    FineGrained { shared_superclass: String, matched_label: SynsetId },
    FineGrainedOov {
        neighbor_ids: Vec<String>,
        matched_superclass: String,
        best_proposal: SynsetId,
        best_is_oov: bool,
    },
    NonPrototypical,
    SpuriousCorrelation { pair: ClassPair },
    ModelFailure,
}

impl Evidence {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Evidence::OverlapCorrect { .. } => ErrorCategory::OverlapCorrect,
            Evidence::MultiLabelCorrect { .. } => ErrorCategory::MultiLabelCorrect,
            Evidence::FineGrained { .. } => ErrorCategory::FineGrained,
            Evidence::FineGrainedOov { .. } => ErrorCategory::FineGrainedOov,
            Evidence::NonPrototypical => ErrorCategory::NonPrototypical,
            Evidence::SpuriousCorrelation { .. } => ErrorCategory::SpuriousCorrelation,
            Evidence::ModelFailure => ErrorCategory::ModelFailure,
        }
    }
}

/// One categorized (model, image) misprediction.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRecord {
    pub model: String,
    pub image: ImageId,
    pub predicted: SynsetId,
    pub evidence: Evidence,
}

impl ErrorRecord {
    pub fn category(&self) -> ErrorCategory {
        self.evidence.category()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Correct,
    Error(ErrorRecord),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MissingEmbedding {
    ReferenceIndex,
    TextIndex,
    Evaluation(ImageId),
    Text(SynsetId),
}

impl fmt::Display for MissingEmbedding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MissingEmbedding::ReferenceIndex => f.write_str("no reference index loaded"),
            MissingEmbedding::TextIndex => f.write_str("no text embedding table loaded"),
            MissingEmbedding::Evaluation(i) => write!(f, "no evaluation embedding for {i}"),
            MissingEmbedding::Text(s) => write!(f, "no text embedding for {s}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CascadeError {
    #[error("missing embedding: {0}")]
    MissingEmbedding(MissingEmbedding),
    #[error("unknown image {0}")]
    UnknownImage(ImageId),
    #[error("image {0} is flagged problematic")]
    ProblematicImage(ImageId),
    #[error("unknown synset {0}")]
    UnknownSynset(SynsetId),
    #[error(transparent)]
    LabelSpace(#[from] LabelSpaceError),
    #[error(transparent)]
    Embedding(EmbeddingError),
    #[error(transparent)]
    Annotation(AnnotationError),
    #[error("invalid cascade configuration: {0}")]
    InvalidConfig(&'static str),
}

impl CascadeError {
    /// Per-image data gaps that a batch run skips instead of aborting on.
    pub fn is_data_gap(&self) -> bool {
        matches!(self, CascadeError::MissingEmbedding(_))
    }
}

impl From<EmbeddingError> for CascadeError {
    fn from(e: EmbeddingError) -> Self {
        match e {
            EmbeddingError::MissingTextEmbedding(s) => CascadeError::MissingEmbedding(MissingEmbedding::Text(s)),
            other => CascadeError::Embedding(other),
        }
    }
}

impl From<AnnotationError> for CascadeError {
    fn from(e: AnnotationError) -> Self {
        match e {
            AnnotationError::UnknownImage(i) => CascadeError::UnknownImage(i),
            other => CascadeError::Annotation(other),
        }
    }
}

/// Everything the cascade reads. All of it is shared and immutable.
#[derive(Debug, Clone, Copy)]
pub struct CascadeContext<'a> {
    pub space: &'a LabelSpace,
    pub store: &'a AnnotationStore,
    pub reference: Option<&'a LabeledIndex>,
    pub evaluation: Option<&'a EmbeddingMatrix>,
    pub text: Option<&'a EmbeddingMatrix>,
    pub pairs: &'a PairSet,
    pub config: &'a CascadeConfig,
}

impl<'a> CascadeContext<'a> {
    /// Ground-truth labels that anchor the fine-grained and spurious stages.
    pub fn anchors(&self, ann: &ImageAnnotation) -> BTreeSet<SynsetId> {
        match self.config.mode {
            DatasetMode::ImageNet => ann.correct_label_set(),
            DatasetMode::ImageNetA => [ann.original_label.clone()].into_iter().collect(),
        }
    }

    fn overlap_anchors(&self, ann: &ImageAnnotation) -> BTreeSet<SynsetId> {
        let mut out = self.anchors(ann);
        out.insert(ann.original_label.clone());
        out
    }

    fn oov_anchor(&self, ann: &ImageAnnotation) -> SynsetId {
        match self.config.oov_anchor {
            OovAnchor::OriginalLabel => ann.original_label.clone(),
        }
    }

    /// Evaluates one stage predicate; `Some` carries the evidence.
    pub fn evaluate_stage(
        &self,
        stage: Stage,
        ann: &ImageAnnotation,
        pred: &SynsetId,
    ) -> Result<Option<Evidence>, CascadeError> {
        let space = self.space;
        match stage {
            Stage::Overlap => {
                for g in self.overlap_anchors(ann) {
                    if g != *pred && space.is_overlap_correct(&g, pred)? {
                        return Ok(Some(Evidence::OverlapCorrect { matched_gt: g }));
                    }
                }
                Ok(None)
            }
            Stage::MultiLabel => {
                if self.config.mode == DatasetMode::ImageNet && ann.correct_label_set().contains(pred) {
                    Ok(Some(Evidence::MultiLabelCorrect { matched_label: pred.clone() }))
                } else {
                    Ok(None)
                }
            }
            Stage::FineGrained => {
                for g in self.anchors(ann) {
                    if let Some(name) = space.shared_superclass(pred, &g)? {
                        return Ok(Some(Evidence::FineGrained {
                            shared_superclass: name.to_string(),
                            matched_label: g,
                        }));
                    }
                }
                Ok(None)
            }
            Stage::FineGrainedOov => self.fine_grained_oov(ann, pred),
            Stage::NonPrototypical => Ok(self.store.is_non_prototypical(&ann.image).then_some(Evidence::NonPrototypical)),
            Stage::Spurious => {
                let anchors = self.anchors(ann);
                Ok(self.pairs.spurious_partner(pred, anchors.iter()).map(|g| Evidence::SpuriousCorrelation {
                    pair: ClassPair::new(pred.clone(), g.clone()).expect("pred is not a ground-truth label"),
                }))
            }
        }
    }

    fn fine_grained_oov(&self, ann: &ImageAnnotation, pred: &SynsetId) -> Result<Option<Evidence>, CascadeError> {
        let space = self.space;
        // An unclassified prediction can never pass the neighbor gate.
        if space.superclass_mates(pred)?.is_empty() {
            return Ok(None);
        }
        let reference = self.reference.ok_or(CascadeError::MissingEmbedding(MissingEmbedding::ReferenceIndex))?;
        let image_emb = self
            .evaluation
            .and_then(|e| e.get(ann.image.as_str()))
            .ok_or_else(|| CascadeError::MissingEmbedding(MissingEmbedding::Evaluation(ann.image.clone())))?;

        let neighbors = reference.matrix.knn_normalized(image_emb, self.config.k_neighbors)?;
        let mut matched = None;
        for n in &neighbors {
            if let Some(name) = space.shared_superclass(reference.label(n.row), pred)? {
                matched = Some(name.to_string());
                break;
            }
        }
        let Some(matched_superclass) = matched else {
            return Ok(None);
        };

        let proposals = self.proposals(ann, pred)?;
        let text = self.text.ok_or(CascadeError::MissingEmbedding(MissingEmbedding::TextIndex))?;
        let scored = score_proposals(image_emb, &proposals, text)?;
        if space.in_vocabulary(&scored.best) {
            return Ok(None);
        }
        Ok(Some(Evidence::FineGrainedOov {
            neighbor_ids: neighbors.into_iter().map(|n| n.id).collect(),
            matched_superclass,
            best_proposal: scored.best,
            best_is_oov: true,
        }))
    }

    /// Proposal labels for the open-world check: the prediction's superclass
    /// mates, its direct hypernym siblings and its ancestors below the first
    /// ancestor shared with the anchor label.
    pub fn proposals(&self, ann: &ImageAnnotation, pred: &SynsetId) -> Result<BTreeSet<SynsetId>, CascadeError> {
        let space = self.space;
        let mut out = space.superclass_mates(pred)?;
        out.extend(space.direct_siblings(pred)?);
        out.extend(space.ancestors_below_common(pred, &self.oov_anchor(ann))?);
        Ok(out)
    }

    fn resolve(&self, image: &ImageId, pred: &SynsetId) -> Result<&'a ImageAnnotation, CascadeError> {
        let ann = self.store.get(image)?;
        if ann.problematic {
            return Err(CascadeError::ProblematicImage(image.clone()));
        }
        if !self.space.in_vocabulary(pred) {
            return Err(CascadeError::UnknownSynset(pred.clone()));
        }
        if self.config.k_neighbors == 0 {
            return Err(CascadeError::InvalidConfig("k_neighbors must be at least 1"));
        }
        Ok(ann)
    }

    /// Classifies one prediction.
    pub fn classify(&self, model: &str, image: &ImageId, pred: &SynsetId) -> Result<Outcome, CascadeError> {
        let ann = self.resolve(image, pred)?;
        if *pred == ann.original_label {
            return Ok(Outcome::Correct);
        }
        let mut evidence = Evidence::ModelFailure;
        for &stage in &self.config.stages {
            if let Some(found) = self.evaluate_stage(stage, ann, pred)? {
                evidence = found;
                break;
            }
        }
        Ok(Outcome::Error(ErrorRecord {
            model: model.to_string(),
            image: image.clone(),
            predicted: pred.clone(),
            evidence,
        }))
    }

    /// Re-checks a record: its own stage must still fire with identical
    /// evidence and every strictly less severe stage must not.
    pub fn audit(&self, record: &ErrorRecord) -> Result<(), AuditFailure> {
        let fail = |reason: AuditReason| AuditFailure { image: record.image.clone(), reason };
        let ann = self.resolve(&record.image, &record.predicted).map_err(|e| fail(AuditReason::Error(e)))?;
        if record.predicted == ann.original_label {
            return Err(fail(AuditReason::NotAnError));
        }
        let category = record.category();
        for stage in Stage::DEFAULT_ORDER {
            if !self.config.stages.contains(&stage) || stage.category() > category {
                continue;
            }
            let got = self.evaluate_stage(stage, ann, &record.predicted).map_err(|e| fail(AuditReason::Error(e)))?;
            if stage.category() < category && got.is_some() {
                return Err(fail(AuditReason::LessSevereStageFires(stage)));
            }
            if stage.category() == category && got.as_ref() != Some(&record.evidence) {
                return Err(fail(AuditReason::EvidenceMismatch));
            }
        }
        if let Evidence::FineGrainedOov { neighbor_ids, best_is_oov, best_proposal, .. } = &record.evidence {
            if neighbor_ids.len() != self.config.k_neighbors || !*best_is_oov || self.space.in_vocabulary(best_proposal) {
                return Err(fail(AuditReason::EvidenceMismatch));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AuditReason {
    NotAnError,
    LessSevereStageFires(Stage),
    EvidenceMismatch,
    Error(CascadeError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditFailure {
    pub image: ImageId,
    pub reason: AuditReason,
}

/// Prediction set split into what the cascade sees and what it ignores.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunPlan {
    /// Evaluable images with a prediction, in image-id order.
    pub targets: Vec<(ImageId, SynsetId)>,
    /// Evaluable images without a prediction.
    pub missing_predictions: Vec<ImageId>,
    /// Predictions for problematic or unannotated images.
    pub ignored: Vec<ImageId>,
}

impl RunPlan {
    pub fn new(predictions: &BTreeMap<ImageId, SynsetId>, store: &AnnotationStore) -> Self {
        let mut plan = RunPlan::default();
        for (image, pred) in predictions {
            match store.get(image) {
                Ok(a) if !a.problematic => plan.targets.push((image.clone(), pred.clone())),
                _ => plan.ignored.push(image.clone()),
            }
        }
        plan.missing_predictions =
            store.evaluable().filter(|a| !predictions.contains_key(&a.image)).map(|a| a.image.clone()).collect();
        plan
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedImage {
    pub image: ImageId,
    pub predicted: SynsetId,
    pub reason: CascadeError,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub evaluated: usize,
    pub correct: usize,
    pub skipped: usize,
    pub by_category: BTreeMap<ErrorCategory, usize>,
    pub by_group: BTreeMap<Group, BTreeMap<ErrorCategory, usize>>,
}

/// Result of running the cascade over one model's predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelRun {
    pub model: String,
    /// Sorted by image id.
    pub records: Vec<ErrorRecord>,
    pub skipped: Vec<SkippedImage>,
    pub missing_predictions: Vec<ImageId>,
    pub ignored: Vec<ImageId>,
    pub summary: RunSummary,
}

impl ModelRun {
    /// Builds a run from per-target outcomes given in `plan.targets` order.
    /// Data gaps become skipped images; any other error aborts.
    pub fn assemble(
        model: &str,
        plan: RunPlan,
        outcomes: Vec<Result<Outcome, CascadeError>>,
        space: &LabelSpace,
        store: &AnnotationStore,
    ) -> Result<ModelRun, CascadeError> {
        assert_eq!(plan.targets.len(), outcomes.len(), "one outcome per target");
        let mut records = Vec::new();
        let mut skipped = Vec::new();
        let mut summary = RunSummary { evaluated: plan.targets.len(), ..Default::default() };
        for ((image, predicted), outcome) in plan.targets.into_iter().zip(outcomes) {
            match outcome {
                Ok(Outcome::Correct) => summary.correct += 1,
                Ok(Outcome::Error(rec)) => {
                    let group = space.group_of(&store.get(&rec.image)?.original_label)?;
                    *summary.by_category.entry(rec.category()).or_default() += 1;
                    *summary.by_group.entry(group).or_default().entry(rec.category()).or_default() += 1;
                    records.push(rec);
                }
                Err(e) if e.is_data_gap() => skipped.push(SkippedImage { image, predicted, reason: e }),
                Err(e) => return Err(e),
            }
        }
        summary.skipped = skipped.len();
        Ok(ModelRun {
            model: model.to_string(),
            records,
            skipped,
            missing_predictions: plan.missing_predictions,
            ignored: plan.ignored,
            summary,
        })
    }
}

/// Sequential batch driver over [`CascadeContext::classify`].
pub fn classify_model(
    model: &str,
    predictions: &BTreeMap<ImageId, SynsetId>,
    ctx: &CascadeContext<'_>,
) -> Result<ModelRun, CascadeError> {
    let plan = RunPlan::new(predictions, ctx.store);
    let outcomes = plan.targets.iter().map(|(image, pred)| ctx.classify(model, image, pred)).collect();
    ModelRun::assemble(model, plan, outcomes, ctx.space, ctx.store)
}
