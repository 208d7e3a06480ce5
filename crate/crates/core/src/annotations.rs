//! Per-image ground truth: original label, multi-label verdicts, the
//! problematic flag, the non-prototypical set and the full-validation-set
//! multi-labels used for pair mining.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use crate::ids::{ImageId, SynsetId};
use crate::label_space::LabelSpace;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnnotationError {
    #[error("unknown synset {0}")]
    UnknownSynset(SynsetId),
    #[error("unknown image {0}")]
    UnknownImage(ImageId),
    #[error("image {0} has more than one ground-truth row")]
    DuplicateImage(ImageId),
    #[error("image {image} has more than one verdict for {label}")]
    DuplicateVerdict { image: ImageId, label: SynsetId },
    #[error("{list} references image {image} which is not in the evaluation set")]
    NotEvaluated { list: &'static str, image: ImageId },
}

/// Reviewer verdict for one (image, label) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Verdict {
    Correct,
    Wrong,
    Unclear,
}

impl Verdict {
    /// Unclear labels are accepted as correct.
    pub fn accepts(self) -> bool {
        matches!(self, Verdict::Correct | Verdict::Unclear)
    }

    pub fn parse(s: &str) -> Option<Verdict> {
        match s {
            "correct" => Some(Verdict::Correct),
            "wrong" => Some(Verdict::Wrong),
            "unclear" => Some(Verdict::Unclear),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Correct => "correct",
            Verdict::Wrong => "wrong",
            Verdict::Unclear => "unclear",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageAnnotation {
    pub image: ImageId,
    pub original_label: SynsetId,
    pub verdicts: BTreeMap<SynsetId, Verdict>,
    pub problematic: bool,
}

impl ImageAnnotation {
    /// Labels accepted as correct: every label with a Correct or Unclear
    /// verdict, plus the original label unless it is explicitly Wrong.
    pub fn correct_label_set(&self) -> BTreeSet<SynsetId> {
        let mut out: BTreeSet<SynsetId> =
            self.verdicts.iter().filter(|(_, v)| v.accepts()).map(|(l, _)| l.clone()).collect();
        if self.verdicts.get(&self.original_label).is_none_or(|v| v.accepts()) {
            out.insert(self.original_label.clone());
        }
        out
    }
}

/// Unvalidated rows as read from the annotation files.
#[derive(Debug, Clone, Default)]
pub struct AnnotationParts {
    pub ground_truth: Vec<(ImageId, SynsetId)>,
    pub verdicts: Vec<(ImageId, SynsetId, Verdict)>,
    pub problematic: Vec<ImageId>,
    pub non_prototypical: Vec<ImageId>,
    pub real_labels: Vec<(ImageId, SynsetId)>,
}

#[derive(Debug, Clone, Default)]
pub struct AnnotationStore {
    images: BTreeMap<ImageId, ImageAnnotation>,
    non_prototypical: BTreeSet<ImageId>,
    real_labels: BTreeMap<ImageId, BTreeSet<SynsetId>>,
}

impl AnnotationStore {
    pub fn build(parts: AnnotationParts, space: &LabelSpace) -> Result<Self, AnnotationError> {
        let known = |id: &SynsetId| {
            if space.in_vocabulary(id) {
                Ok(())
            } else {
                Err(AnnotationError::UnknownSynset(id.clone()))
            }
        };

        let mut images = BTreeMap::new();
        for (image, label) in parts.ground_truth {
            known(&label)?;
            if images.contains_key(&image) {
                return Err(AnnotationError::DuplicateImage(image));
            }
            images.insert(
                image.clone(),
                ImageAnnotation { image, original_label: label, verdicts: BTreeMap::new(), problematic: false },
            );
        }

        for (image, label, verdict) in parts.verdicts {
            known(&label)?;
            let entry = images
                .get_mut(&image)
                .ok_or_else(|| AnnotationError::NotEvaluated { list: "multi-label verdicts", image: image.clone() })?;
            if entry.verdicts.insert(label.clone(), verdict).is_some() {
                return Err(AnnotationError::DuplicateVerdict { image, label });
            }
        }

        for image in parts.problematic {
            match images.get_mut(&image) {
                Some(a) => a.problematic = true,
                None => return Err(AnnotationError::NotEvaluated { list: "problematic images", image }),
            }
        }

        let mut non_prototypical = BTreeSet::new();
        for image in parts.non_prototypical {
            if !images.contains_key(&image) {
                return Err(AnnotationError::NotEvaluated { list: "non-prototypical images", image });
            }
            non_prototypical.insert(image);
        }

        let mut real_labels: BTreeMap<ImageId, BTreeSet<SynsetId>> = BTreeMap::new();
        for (image, label) in parts.real_labels {
            known(&label)?;
            real_labels.entry(image).or_default().insert(label);
        }

        Ok(AnnotationStore { images, non_prototypical, real_labels })
    }

    pub fn get(&self, image: &ImageId) -> Result<&ImageAnnotation, AnnotationError> {
        self.images.get(image).ok_or_else(|| AnnotationError::UnknownImage(image.clone()))
    }

    /// Every annotated image, problematic ones included.
    pub fn images(&self) -> impl Iterator<Item = &ImageAnnotation> {
        self.images.values()
    }

    /// Annotated images that take part in evaluation.
    pub fn evaluable(&self) -> impl Iterator<Item = &ImageAnnotation> {
        self.images.values().filter(|a| !a.problematic)
    }

    pub fn evaluable_count(&self) -> usize {
        self.evaluable().count()
    }

    pub fn correct_label_set(&self, image: &ImageId) -> Result<BTreeSet<SynsetId>, AnnotationError> {
        self.get(image).map(ImageAnnotation::correct_label_set)
    }

    pub fn is_non_prototypical(&self, image: &ImageId) -> bool {
        self.non_prototypical.contains(image)
    }

    pub fn non_prototypical(&self) -> &BTreeSet<ImageId> {
        &self.non_prototypical
    }

    pub fn real_labels(&self) -> &BTreeMap<ImageId, BTreeSet<SynsetId>> {
        &self.real_labels
    }

    /// Ids of all annotated images (the evaluation set).
    pub fn evaluation_ids(&self) -> BTreeSet<ImageId> {
        self.images.keys().cloned().collect()
    }
}
