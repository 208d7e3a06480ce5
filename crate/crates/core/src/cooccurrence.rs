//! Spurious-correlation candidate pairs mined from full-validation-set
//! multi-label annotations.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use crate::ids::{ImageId, SynsetId};
use crate::label_space::{LabelSpace, LabelSpaceError};

/// Unordered pair stored with `a < b`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClassPair {
    pub a: SynsetId,
    pub b: SynsetId,
}

impl ClassPair {
    /// Orders the two ids; `None` for `x == y`.
    pub fn new(x: SynsetId, y: SynsetId) -> Option<Self> {
        match x.cmp(&y) {
            core::cmp::Ordering::Less => Some(ClassPair { a: x, b: y }),
            core::cmp::Ordering::Greater => Some(ClassPair { a: y, b: x }),
            core::cmp::Ordering::Equal => None,
        }
    }
}

/// Filtered co-occurrence pairs with their image counts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairSet {
    pairs: BTreeMap<ClassPair, u32>,
}

impl PairSet {
    pub fn from_counts(pairs: BTreeMap<ClassPair, u32>) -> Self {
        PairSet { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ClassPair, u32)> {
        self.pairs.iter().map(|(p, c)| (p, *c))
    }

    pub fn contains(&self, x: &SynsetId, y: &SynsetId) -> bool {
        ClassPair::new(x.clone(), y.clone()).is_some_and(|p| self.pairs.contains_key(&p))
    }

    /// First ground-truth label forming a mined pair with `pred`.
    pub fn spurious_partner<'a>(
        &self,
        pred: &SynsetId,
        gt_labels: impl IntoIterator<Item = &'a SynsetId>,
    ) -> Option<&'a SynsetId> {
        gt_labels.into_iter().find(|g| self.contains(pred, g))
    }

    pub fn is_spurious<'a>(&self, pred: &SynsetId, gt_labels: impl IntoIterator<Item = &'a SynsetId>) -> bool {
        self.spurious_partner(pred, gt_labels).is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairMining {
    /// Pairs emitted before filtering, with multiplicity.
    pub raw_pair_count: u64,
    /// Non-excluded images with at least two labels.
    pub multi_label_image_count: usize,
    /// Excluded ids that had no multi-label row.
    pub excluded_missing: usize,
    pub pairs: PairSet,
}

/// Counts co-occurring label pairs over all non-excluded images, then drops
/// pairs seen in a single image and pairs whose classes share a superclass.
pub fn extract_pairs(
    real: &BTreeMap<ImageId, BTreeSet<SynsetId>>,
    excluded: &BTreeSet<ImageId>,
    space: &LabelSpace,
) -> Result<PairMining, LabelSpaceError> {
    let mut counts: BTreeMap<ClassPair, u32> = BTreeMap::new();
    let mut raw_pair_count = 0u64;
    let mut multi_label_image_count = 0;
    for (image, labels) in real {
        if excluded.contains(image) {
            continue;
        }
        for l in labels {
            if !space.in_vocabulary(l) {
                return Err(LabelSpaceError::UnknownSynset {
                    id: l.clone(),
                    context: alloc::format!("multi-labels of {image}"),
                });
            }
        }
        if labels.len() < 2 {
            continue;
        }
        multi_label_image_count += 1;
        let labels: Vec<&SynsetId> = labels.iter().collect();
        for (i, a) in labels.iter().enumerate() {
            for b in &labels[i + 1..] {
                raw_pair_count += 1;
                // sets iterate in order, so (a, b) is already sorted
                *counts.entry(ClassPair { a: (*a).clone(), b: (*b).clone() }).or_insert(0) += 1;
            }
        }
    }

    let mut kept = BTreeMap::new();
    for (pair, count) in counts {
        if count >= 2 && !space.shares_superclass(&pair.a, &pair.b)? {
            kept.insert(pair, count);
        }
    }

    let excluded_missing = excluded.iter().filter(|e| !real.contains_key(*e)).count();
    Ok(PairMining { raw_pair_count, multi_label_image_count, excluded_missing, pairs: PairSet { pairs: kept } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label_space::{ClassInfo, Group, LabelSpaceParts, Strictness};
    use alloc::string::ToString;
    use alloc::vec;

    fn sid(s: &str) -> SynsetId {
        SynsetId::new(s).unwrap()
    }
    fn img(s: &str) -> ImageId {
        ImageId::new(s).unwrap()
    }

    fn space(superclasses: &[(&str, &[&str])]) -> LabelSpace {
        let ids = ["a00000000", "b00000000", "c00000000", "d00000000", "e00000000", "f00000000"];
        LabelSpace::build(
            LabelSpaceParts {
                classes: ids.iter().map(|i| ClassInfo { id: sid(i), name: i.to_string(), group: Group::Other }).collect(),
                superclasses: superclasses
                    .iter()
                    .map(|(n, m)| (n.to_string(), m.iter().map(|x| sid(x)).collect()))
                    .collect(),
                hypernym_edges: ids.iter().map(|i| (sid(i), sid("r00000000"))).collect(),
                ..Default::default()
            },
            Strictness::Lenient,
        )
        .unwrap()
    }

    fn real(rows: &[(&str, &[&str])]) -> BTreeMap<ImageId, BTreeSet<SynsetId>> {
        rows.iter().map(|(i, ls)| (img(i), ls.iter().map(|l| sid(l)).collect())).collect()
    }

    #[test]
    fn drops_single_occurrences() {
        let s = space(&[("x", &["a00000000", "d00000000"]), ("y", &["b00000000", "e00000000"]), ("z", &["c00000000", "f00000000"])]);
        let r = real(&[
            ("img1", &["a00000000", "b00000000"]),
            ("img2", &["a00000000", "b00000000"]),
            ("img3", &["a00000000", "c00000000"]),
        ]);
        let m = extract_pairs(&r, &BTreeSet::new(), &s).unwrap();
        assert_eq!(m.raw_pair_count, 3);
        assert_eq!(m.multi_label_image_count, 3);
        let got: Vec<_> = m.pairs.iter().map(|(p, c)| (p.a.as_str(), p.b.as_str(), c)).collect();
        assert_eq!(got, vec![("a00000000", "b00000000", 2)]);
    }

    #[test]
    fn drops_same_superclass_pairs() {
        let s = space(&[("x", &["a00000000", "b00000000"])]);
        let r: BTreeMap<_, _> = (0..5).map(|i| (img(&alloc::format!("i{i}")), [sid("a00000000"), sid("b00000000")].into_iter().collect())).collect();
        assert!(extract_pairs(&r, &BTreeSet::new(), &s).unwrap().pairs.is_empty());
    }

    #[test]
    fn exclusion_and_raw_counts() {
        let s = space(&[]);
        let r = real(&[
            ("img1", &["a00000000", "b00000000", "c00000000"]),
            ("img2", &["a00000000", "b00000000", "c00000000", "d00000000"]),
            ("img3", &["a00000000"]),
            ("eval", &["a00000000", "b00000000"]),
        ]);
        let excluded: BTreeSet<_> = [img("eval"), img("gone")].into_iter().collect();
        let m = extract_pairs(&r, &excluded, &s).unwrap();
        assert_eq!(m.raw_pair_count, 3 + 6);
        assert_eq!(m.multi_label_image_count, 2);
        assert_eq!(m.excluded_missing, 1);
        assert_eq!(m.pairs.len(), 3);
    }

    #[test]
    fn spurious_lookup_is_symmetric() {
        let mut counts = BTreeMap::new();
        counts.insert(ClassPair::new(sid("b00000000"), sid("a00000000")).unwrap(), 2);
        let pairs = PairSet::from_counts(counts);
        let gt = [sid("c00000000"), sid("a00000000")];
        assert!(pairs.is_spurious(&sid("b00000000"), gt.iter()));
        assert_eq!(pairs.spurious_partner(&sid("b00000000"), gt.iter()), Some(&sid("a00000000")));
        assert!(!pairs.is_spurious(&sid("c00000000"), gt.iter()));
        assert!(!PairSet::default().is_spurious(&sid("b00000000"), gt.iter()));
    }

    #[test]
    fn unknown_label_rejected() {
        let s = space(&[]);
        let r = real(&[("img1", &["a00000000", "z00000000"])]);
        assert!(extract_pairs(&r, &BTreeSet::new(), &s).is_err());
    }

    #[test]
    fn class_pair_rejects_self() {
        assert!(ClassPair::new(sid("a00000000"), sid("a00000000")).is_none());
    }
}
