//! Accuracies, per-group category breakdowns, size buckets and expert
//! comparison matrices.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use crate::annotations::{AnnotationError, AnnotationStore};
use crate::cascade::{ErrorCategory, ErrorRecord};
use crate::ids::{ImageId, SynsetId};
use crate::label_space::{Group, LabelSpace, LabelSpaceError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("no evaluable images")]
    EmptyEvaluationSet,
    #[error("no metadata for model {0:?}")]
    MissingMeta(String),
    #[error("metadata for model {model:?}: {reason}")]
    InvalidMeta { model: String, reason: &'static str },
    #[error("record for model {found:?} passed with model {expected:?}")]
    ForeignRecord { expected: String, found: String },
    #[error("unknown error category {0:?}")]
    CategoryMismatch(String),
    #[error("duplicate entry for model {model:?}, image {image}")]
    DuplicateEntry { model: String, image: ImageId },
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error(transparent)]
    LabelSpace(#[from] LabelSpaceError),
}

/// Fraction of evaluable images whose prediction equals the original label.
/// Images without a prediction count as wrong.
pub fn top1_accuracy(predictions: &BTreeMap<ImageId, SynsetId>, store: &AnnotationStore) -> Result<f64, MetricsError> {
    let mut total = 0usize;
    let mut hits = 0usize;
    for ann in store.evaluable() {
        total += 1;
        if predictions.get(&ann.image) == Some(&ann.original_label) {
            hits += 1;
        }
    }
    if total == 0 {
        return Err(MetricsError::EmptyEvaluationSet);
    }
    Ok(hits as f64 / total as f64)
}

/// Mean over classes (keyed by original label) of the per-class fraction of
/// images whose prediction is an accepted label.
pub fn multi_label_accuracy(
    predictions: &BTreeMap<ImageId, SynsetId>,
    store: &AnnotationStore,
) -> Result<f64, MetricsError> {
    let mut per_class: BTreeMap<&SynsetId, (usize, usize)> = BTreeMap::new();
    for ann in store.evaluable() {
        let slot = per_class.entry(&ann.original_label).or_default();
        slot.1 += 1;
        if predictions.get(&ann.image).is_some_and(|p| ann.correct_label_set().contains(p)) {
            slot.0 += 1;
        }
    }
    if per_class.is_empty() {
        return Err(MetricsError::EmptyEvaluationSet);
    }
    let sum: f64 = per_class.values().map(|&(h, n)| h as f64 / n as f64).sum();
    Ok(sum / per_class.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum ArchitectureFamily {
    Cnn,
    Transformer,
    Mlp,
    Hybrid,
    Other,
}

impl ArchitectureFamily {
    pub const ALL: [ArchitectureFamily; 5] = [
        ArchitectureFamily::Cnn,
        ArchitectureFamily::Transformer,
        ArchitectureFamily::Mlp,
        ArchitectureFamily::Hybrid,
        ArchitectureFamily::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ArchitectureFamily::Cnn => "cnn",
            ArchitectureFamily::Transformer => "transformer",
            ArchitectureFamily::Mlp => "mlp",
            ArchitectureFamily::Hybrid => "hybrid",
            ArchitectureFamily::Other => "other",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelMeta {
    pub name: String,
    pub architecture_family: ArchitectureFamily,
    pub param_count: u64,
    pub pretrain_dataset: String,
    pub pretrain_size_images: u64,
}

impl ModelMeta {
    pub fn validate(&self) -> Result<(), MetricsError> {
        let bad = |reason| Err(MetricsError::InvalidMeta { model: self.name.clone(), reason });
        if self.param_count == 0 {
            return bad("param_count must be positive");
        }
        if self.pretrain_size_images == 0 {
            return bad("pretrain_size_images must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum SizeBucket {
    Small,
    Medium,
    Large,
    XLarge,
}

impl SizeBucket {
    pub fn as_str(self) -> &'static str {
        match self {
            SizeBucket::Small => "small",
            SizeBucket::Medium => "medium",
            SizeBucket::Large => "large",
            SizeBucket::XLarge => "xlarge",
        }
    }
}

/// Pre-training set size boundaries, in images.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SizeThresholds {
    /// Smallest Medium size.
    pub medium_from: u64,
    /// Smallest Large size.
    pub large_from: u64,
    /// Sizes strictly above this are XLarge.
    pub xlarge_above: u64,
}

impl Default for SizeThresholds {
    fn default() -> Self {
        SizeThresholds { medium_from: 5_000_000, large_from: 100_000_000, xlarge_above: 500_000_000 }
    }
}

pub fn size_bucket(meta: &ModelMeta, thresholds: &SizeThresholds) -> SizeBucket {
    let n = meta.pretrain_size_images;
    if n < thresholds.medium_from {
        SizeBucket::Small
    } else if n > thresholds.xlarge_above {
        SizeBucket::XLarge
    } else if n >= thresholds.large_from {
        SizeBucket::Large
    } else {
        SizeBucket::Medium
    }
}

/// A count over a denominator, kept exact until [`value`](Self::value).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Portion {
    pub count: u64,
    pub denominator: u64,
}

impl Portion {
    /// `count / denominator`, or 0 for an empty denominator.
    pub fn value(self) -> f64 {
        if self.denominator == 0 {
            0.0
        } else {
            self.count as f64 / self.denominator as f64
        }
    }

    pub fn zero_denominator(self) -> bool {
        self.denominator == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ReportGroup {
    Organism,
    Artifact,
    Other,
    All,
}

impl ReportGroup {
    pub const ALL: [ReportGroup; 4] = [ReportGroup::Organism, ReportGroup::Artifact, ReportGroup::Other, ReportGroup::All];

    pub fn as_str(self) -> &'static str {
        match self {
            ReportGroup::Organism => "organism",
            ReportGroup::Artifact => "artifact",
            ReportGroup::Other => "other",
            ReportGroup::All => "all",
        }
    }

    pub fn parse(s: &str) -> Option<ReportGroup> {
        ReportGroup::ALL.into_iter().find(|g| g.as_str() == s)
    }
}

impl From<Group> for ReportGroup {
    fn from(g: Group) -> Self {
        match g {
            Group::Organism => ReportGroup::Organism,
            Group::Artifact => ReportGroup::Artifact,
            Group::Other => ReportGroup::Other,
        }
    }
}

/// Category counts of one group. Overlap and multi-label portions are
/// relative to top-1 errors, the others to multi-label errors.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GroupBreakdown {
    pub counts: BTreeMap<ErrorCategory, u64>,
}

impl GroupBreakdown {
    pub fn count(&self, c: ErrorCategory) -> u64 {
        self.counts.get(&c).copied().unwrap_or(0)
    }

    pub fn top1_errors(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn multi_label_errors(&self) -> u64 {
        self.counts.iter().filter(|(c, _)| c.is_multi_label_error()).map(|(_, n)| n).sum()
    }

    pub fn denominator(&self, c: ErrorCategory) -> u64 {
        if c.is_multi_label_error() {
            self.multi_label_errors()
        } else {
            self.top1_errors()
        }
    }

    pub fn portion(&self, c: ErrorCategory) -> Portion {
        Portion { count: self.count(c), denominator: self.denominator(c) }
    }

    fn add(&mut self, c: ErrorCategory) {
        *self.counts.entry(c).or_default() += 1;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelReport {
    pub model: String,
    pub meta: ModelMeta,
    pub size_bucket: SizeBucket,
    pub top1_acc: f64,
    pub mla: f64,
    pub groups: BTreeMap<ReportGroup, GroupBreakdown>,
    /// Model failures over multi-label errors.
    pub mlf_portion_of_mle: Portion,
    /// Model failures over top-1 errors.
    pub mlf_portion_of_top1: Portion,
}

impl ModelReport {
    pub fn group(&self, g: ReportGroup) -> &GroupBreakdown {
        &self.groups[&g]
    }
}

/// One model's inputs to [`aggregate`].
#[derive(Debug, Clone, Copy)]
pub struct ModelEvidence<'a> {
    pub model: &'a str,
    pub predictions: &'a BTreeMap<ImageId, SynsetId>,
    pub records: &'a [ErrorRecord],
}

/// Counts one model's records per group of the image's original label.
pub fn group_breakdown(
    records: &[ErrorRecord],
    space: &LabelSpace,
    store: &AnnotationStore,
) -> Result<BTreeMap<ReportGroup, GroupBreakdown>, MetricsError> {
    let mut groups: BTreeMap<ReportGroup, GroupBreakdown> =
        ReportGroup::ALL.into_iter().map(|g| (g, GroupBreakdown::default())).collect();
    for r in records {
        let group = space.group_of(&store.get(&r.image)?.original_label)?;
        let c = r.category();
        groups.get_mut(&ReportGroup::from(group)).expect("all groups present").add(c);
        groups.get_mut(&ReportGroup::All).expect("all groups present").add(c);
    }
    Ok(groups)
}

pub fn aggregate_model(
    run: &ModelEvidence<'_>,
    meta: &ModelMeta,
    thresholds: &SizeThresholds,
    space: &LabelSpace,
    store: &AnnotationStore,
) -> Result<ModelReport, MetricsError> {
    meta.validate()?;
    if let Some(r) = run.records.iter().find(|r| r.model != run.model) {
        return Err(MetricsError::ForeignRecord { expected: run.model.into(), found: r.model.clone() });
    }
    let mut seen = BTreeSet::new();
    for r in run.records {
        if !seen.insert(&r.image) {
            return Err(MetricsError::DuplicateEntry { model: run.model.into(), image: r.image.clone() });
        }
    }
    let groups = group_breakdown(run.records, space, store)?;
    let all = &groups[&ReportGroup::All];
    let failures = all.count(ErrorCategory::ModelFailure);
    Ok(ModelReport {
        model: run.model.into(),
        meta: meta.clone(),
        size_bucket: size_bucket(meta, thresholds),
        top1_acc: top1_accuracy(run.predictions, store)?,
        mla: multi_label_accuracy(run.predictions, store)?,
        mlf_portion_of_mle: Portion { count: failures, denominator: all.multi_label_errors() },
        mlf_portion_of_top1: Portion { count: failures, denominator: all.top1_errors() },
        groups,
    })
}

/// Reports in input order. `metas` is keyed by model name.
pub fn aggregate(
    runs: &[ModelEvidence<'_>],
    metas: &BTreeMap<String, ModelMeta>,
    thresholds: &SizeThresholds,
    space: &LabelSpace,
    store: &AnnotationStore,
) -> Result<Vec<ModelReport>, MetricsError> {
    runs.iter()
        .map(|run| {
            let meta = metas.get(run.model).ok_or_else(|| MetricsError::MissingMeta(run.model.into()))?;
            aggregate_model(run, meta, thresholds, space, store)
        })
        .collect()
}

/// One expert judgement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpertLabel {
    pub model: String,
    pub image: ImageId,
    pub category: ErrorCategory,
}

impl ExpertLabel {
    pub fn parse_category(label: &str) -> Result<ErrorCategory, MetricsError> {
        ErrorCategory::parse(label).ok_or_else(|| MetricsError::CategoryMismatch(label.into()))
    }
}

/// Expert categories (rows) against automatic ones (columns), both in
/// severity order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub cells: [[u64; 7]; 7],
    /// Expert entries with no automatic record.
    pub unmatched_expert: Vec<(String, ImageId)>,
}

fn idx(c: ErrorCategory) -> usize {
    ErrorCategory::ALL.iter().position(|&x| x == c).expect("listed")
}

impl ConfusionMatrix {
    pub fn get(&self, expert: ErrorCategory, auto: ErrorCategory) -> u64 {
        self.cells[idx(expert)][idx(auto)]
    }

    pub fn row_total(&self, expert: ErrorCategory) -> u64 {
        self.cells[idx(expert)].iter().sum()
    }

    pub fn column_total(&self, auto: ErrorCategory) -> u64 {
        self.cells.iter().map(|row| row[idx(auto)]).sum()
    }

    pub fn total(&self) -> u64 {
        self.cells.iter().flatten().sum()
    }

    pub fn off_diagonal(&self) -> u64 {
        self.total() - (0..7).map(|i| self.cells[i][i]).sum::<u64>()
    }
}

/// Tallies the (model, image) keys present in both inputs.
pub fn compare_categorizations(auto: &[ErrorRecord], expert: &[ExpertLabel]) -> Result<ConfusionMatrix, MetricsError> {
    let mut by_key: BTreeMap<(&str, &ImageId), ErrorCategory> = BTreeMap::new();
    for r in auto {
        if by_key.insert((r.model.as_str(), &r.image), r.category()).is_some() {
            return Err(MetricsError::DuplicateEntry { model: r.model.clone(), image: r.image.clone() });
        }
    }
    let mut out = ConfusionMatrix::default();
    let mut seen = BTreeSet::new();
    for e in expert {
        if !seen.insert((e.model.as_str(), &e.image)) {
            return Err(MetricsError::DuplicateEntry { model: e.model.clone(), image: e.image.clone() });
        }
        match by_key.get(&(e.model.as_str(), &e.image)) {
            Some(&a) => out.cells[idx(e.category)][idx(a)] += 1,
            None => out.unmatched_expert.push((e.model.clone(), e.image.clone())),
        }
    }
    Ok(out)
}
