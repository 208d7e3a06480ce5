//! Class vocabulary and every taxonomy query the cascade needs.
//!
//! A [`LabelSpace`] bundles four pieces of curated data:
//!
//! - the class vocabulary with an organism / artifact / other group tag,
//! - the directed class-overlap relation (`gt` accepts `pred`),
//! - the superclass catalogue (many-to-many membership),
//! - a hypernym DAG over a superset of the classes.
//!
//! It is immutable once built.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::ids::SynsetId;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LabelSpaceError {
    #[error("unknown synset {id} referenced by {context}")]
    UnknownSynset { id: SynsetId, context: String },
    #[error("class {0} listed more than once")]
    DuplicateClass(SynsetId),
    #[error("superclass {name:?} has {size} member(s); at least 2 required")]
    SuperclassTooSmall { name: String, size: usize },
    #[error("hypernym graph contains a cycle through {0}")]
    Cycle(SynsetId),
    #[error("class {0} is missing from the hypernym graph")]
    NotInHierarchy(SynsetId),
    #[error("expected {expected} classes, found {found}")]
    ClassCount { expected: usize, found: usize },
    #[error("group {group} has {found} classes, expected {expected}")]
    GroupCount { group: Group, expected: usize, found: usize },
}

/// Coarse semantic group of a class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Group {
    Organism,
    Artifact,
    Other,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Organism, Group::Artifact, Group::Other];

    pub fn as_str(self) -> &'static str {
        match self {
            Group::Organism => "organism",
            Group::Artifact => "artifact",
            Group::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Option<Group> {
        match s {
            "organism" => Some(Group::Organism),
            "artifact" => Some(Group::Artifact),
            "other" => Some(Group::Other),
            _ => None,
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassInfo {
    pub id: SynsetId,
    pub name: String,
    pub group: Group,
}

/// One `superset ⊇ subsets` entry of the overlap data.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Containment {
    pub superset: SynsetId,
    pub subsets: Vec<SynsetId>,
}

/// Overlap data as curated: equivalent pairs plus superset containments.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OverlapSpec {
    #[cfg_attr(feature = "serde", serde(default))]
    pub equivalent: Vec<[SynsetId; 2]>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub contains: Vec<Containment>,
}

/// Strictness applied when building a label space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strictness {
    /// Structural checks only.
    Lenient,
    /// Additionally require the ImageNet-1k class count and group split.
    ImageNet,
}

pub const IMAGENET_CLASS_COUNT: usize = 1000;
pub const IMAGENET_GROUP_COUNTS: [(Group, usize); 3] =
    [(Group::Organism, 410), (Group::Artifact, 522), (Group::Other, 68)];

/// Raw inputs for [`LabelSpace::build`].
#[derive(Debug, Clone, Default)]
pub struct LabelSpaceParts {
    pub classes: Vec<ClassInfo>,
    pub overlap: OverlapSpec,
    pub superclasses: BTreeMap<String, Vec<SynsetId>>,
    pub hypernym_edges: Vec<(SynsetId, SynsetId)>,
}

/// Hypernym DAG stored as index-based adjacency lists.
#[derive(Debug, Clone, Default)]
pub struct HypernymGraph {
    index: BTreeMap<SynsetId, usize>,
    ids: Vec<SynsetId>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
}

impl HypernymGraph {
    /// Builds the graph from `(child, parent)` edges. Duplicate edges are
    /// collapsed; any cycle (including self loops) is rejected.
    pub fn from_edges(edges: &[(SynsetId, SynsetId)]) -> Result<Self, LabelSpaceError> {
        let mut graph = HypernymGraph::default();
        for (child, parent) in edges {
            let c = graph.intern(child);
            let p = graph.intern(parent);
            if !graph.parents[c].contains(&p) {
                graph.parents[c].push(p);
                graph.children[p].push(c);
            }
        }
        for list in graph.parents.iter_mut().chain(graph.children.iter_mut()) {
            list.sort_unstable();
        }
        graph.check_acyclic()?;
        Ok(graph)
    }

    fn intern(&mut self, id: &SynsetId) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.ids.len();
        self.index.insert(id.clone(), i);
        self.ids.push(id.clone());
        self.parents.push(Vec::new());
        self.children.push(Vec::new());
        i
    }

    // Kahn's algorithm over child -> parent edges.
    fn check_acyclic(&self) -> Result<(), LabelSpaceError> {
        let n = self.ids.len();
        let mut pending: Vec<usize> = self.children.iter().map(Vec::len).collect();
        let mut stack: Vec<usize> = (0..n).filter(|&i| pending[i] == 0).collect();
        let mut seen = 0;
        while let Some(i) = stack.pop() {
            seen += 1;
            for &p in &self.parents[i] {
                pending[p] -= 1;
                if pending[p] == 0 {
                    stack.push(p);
                }
            }
        }
        if seen == n {
            Ok(())
        } else {
            let stuck = (0..n).find(|&i| pending[i] > 0).unwrap_or(0);
            Err(LabelSpaceError::Cycle(self.ids[stuck].clone()))
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &SynsetId> {
        self.ids.iter()
    }

    /// Synsets without a parent.
    pub fn roots(&self) -> impl Iterator<Item = &SynsetId> {
        self.ids
            .iter()
            .enumerate()
            .filter(|(i, _)| self.parents[*i].is_empty())
            .map(|(_, id)| id)
    }

    fn lookup(&self, id: &SynsetId) -> Result<usize, LabelSpaceError> {
        self.index.get(id).copied().ok_or_else(|| LabelSpaceError::UnknownSynset {
            id: id.clone(),
            context: String::from("hypernym query"),
        })
    }

    pub fn parents(&self, id: &SynsetId) -> Result<BTreeSet<SynsetId>, LabelSpaceError> {
        let i = self.lookup(id)?;
        Ok(self.parents[i].iter().map(|&p| self.ids[p].clone()).collect())
    }

    pub fn children(&self, id: &SynsetId) -> Result<BTreeSet<SynsetId>, LabelSpaceError> {
        let i = self.lookup(id)?;
        Ok(self.children[i].iter().map(|&c| self.ids[c].clone()).collect())
    }

    fn strict_ancestors_idx(&self, start: usize) -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<usize> = self.parents[start].clone();
        while let Some(i) = stack.pop() {
            if seen.insert(i) {
                stack.extend(self.parents[i].iter().copied());
            }
        }
        seen
    }

    /// All strict ancestors of `id`.
    pub fn ancestors(&self, id: &SynsetId) -> Result<BTreeSet<SynsetId>, LabelSpaceError> {
        let i = self.lookup(id)?;
        Ok(self.strict_ancestors_idx(i).into_iter().map(|a| self.ids[a].clone()).collect())
    }

    /// Children of every parent of `id`, without `id` itself.
    pub fn direct_siblings(&self, id: &SynsetId) -> Result<BTreeSet<SynsetId>, LabelSpaceError> {
        let i = self.lookup(id)?;
        Ok(self.parents[i]
            .iter()
            .flat_map(|&p| self.children[p].iter().copied())
            .filter(|&c| c != i)
            .map(|c| self.ids[c].clone())
            .collect())
    }

    /// Strict ancestors of `pred` that are neither `anchor` nor one of its
    /// ancestors. On a tree this is the path from `pred` up to, but
    /// excluding, the first common ancestor.
    pub fn ancestors_below_common(
        &self,
        pred: &SynsetId,
        anchor: &SynsetId,
    ) -> Result<BTreeSet<SynsetId>, LabelSpaceError> {
        let p = self.lookup(pred)?;
        let a = self.lookup(anchor)?;
        let mut shared = self.strict_ancestors_idx(a);
        shared.insert(a);
        Ok(self
            .strict_ancestors_idx(p)
            .into_iter()
            .filter(|x| !shared.contains(x))
            .map(|x| self.ids[x].clone())
            .collect())
    }
}

/// Summary of the superclass catalogue.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperclassStats {
    pub count: usize,
    pub min_size: usize,
    pub max_size: usize,
    pub mean_size: f64,
    pub median_size: f64,
    /// Classes that belong to no superclass.
    pub unclassified: usize,
    /// Superclasses containing at least one class of the group.
    pub per_group: BTreeMap<Group, GroupSuperclassStats>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupSuperclassStats {
    pub count: usize,
    pub mean_size: f64,
}

#[derive(Debug, Clone)]
pub struct LabelSpace {
    classes: BTreeMap<SynsetId, ClassInfo>,
    overlap_accepts: BTreeSet<(SynsetId, SynsetId)>,
    superclasses: BTreeMap<String, BTreeSet<SynsetId>>,
    memberships: BTreeMap<SynsetId, BTreeSet<String>>,
    graph: HypernymGraph,
}

impl LabelSpace {
    pub fn build(parts: LabelSpaceParts, strictness: Strictness) -> Result<Self, LabelSpaceError> {
        let mut classes = BTreeMap::new();
        for info in parts.classes {
            if classes.contains_key(&info.id) {
                return Err(LabelSpaceError::DuplicateClass(info.id));
            }
            classes.insert(info.id.clone(), info);
        }

        if strictness == Strictness::ImageNet {
            if classes.len() != IMAGENET_CLASS_COUNT {
                return Err(LabelSpaceError::ClassCount {
                    expected: IMAGENET_CLASS_COUNT,
                    found: classes.len(),
                });
            }
            for (group, expected) in IMAGENET_GROUP_COUNTS {
                let found = classes.values().filter(|c| c.group == group).count();
                if found != expected {
                    return Err(LabelSpaceError::GroupCount { group, expected, found });
                }
            }
        }

        let known = |id: &SynsetId, context: &str| -> Result<(), LabelSpaceError> {
            if classes.contains_key(id) {
                Ok(())
            } else {
                Err(LabelSpaceError::UnknownSynset { id: id.clone(), context: String::from(context) })
            }
        };

        for [a, b] in &parts.overlap.equivalent {
            known(a, "overlap equivalence")?;
            known(b, "overlap equivalence")?;
        }
        for entry in &parts.overlap.contains {
            known(&entry.superset, "overlap containment")?;
            for s in &entry.subsets {
                known(s, "overlap containment")?;
            }
        }
        let overlap_accepts = expand_overlap(&parts.overlap, classes.keys());

        let mut superclasses = BTreeMap::new();
        let mut memberships: BTreeMap<SynsetId, BTreeSet<String>> = BTreeMap::new();
        for (name, members) in parts.superclasses {
            let set: BTreeSet<SynsetId> = members.into_iter().collect();
            for m in &set {
                known(m, &alloc::format!("superclass {name:?}"))?;
                memberships.entry(m.clone()).or_default().insert(name.clone());
            }
            if set.len() < 2 {
                return Err(LabelSpaceError::SuperclassTooSmall { name, size: set.len() });
            }
            superclasses.insert(name, set);
        }

        let graph = HypernymGraph::from_edges(&parts.hypernym_edges)?;
        if let Some(missing) = classes.keys().find(|c| !graph.contains(c.as_str())) {
            return Err(LabelSpaceError::NotInHierarchy(missing.clone()));
        }

        Ok(LabelSpace { classes, overlap_accepts, superclasses, memberships, graph })
    }

    fn require(&self, id: &SynsetId) -> Result<&ClassInfo, LabelSpaceError> {
        self.classes.get(id).ok_or_else(|| LabelSpaceError::UnknownSynset {
            id: id.clone(),
            context: String::from("class query"),
        })
    }

    pub fn classes(&self) -> impl Iterator<Item = &ClassInfo> {
        self.classes.values()
    }

    pub fn class(&self, id: &SynsetId) -> Option<&ClassInfo> {
        self.classes.get(id)
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn group_of(&self, id: &SynsetId) -> Result<Group, LabelSpaceError> {
        self.require(id).map(|c| c.group)
    }

    /// Whether `id` is one of the classes of the vocabulary.
    pub fn in_vocabulary(&self, id: &SynsetId) -> bool {
        self.classes.contains_key(id)
    }

    pub fn hypernyms(&self) -> &HypernymGraph {
        &self.graph
    }

    pub fn overlap_pairs(&self) -> impl Iterator<Item = &(SynsetId, SynsetId)> {
        self.overlap_accepts.iter()
    }

    /// True iff predicting `pred` for an image labeled `gt` is accepted
    /// because `pred` is a superset of, or equivalent to, `gt`.
    pub fn is_overlap_correct(&self, gt: &SynsetId, pred: &SynsetId) -> Result<bool, LabelSpaceError> {
        self.require(gt)?;
        self.require(pred)?;
        Ok(self.overlap_accepts.contains(&(gt.clone(), pred.clone())))
    }

    pub fn superclasses(&self) -> &BTreeMap<String, BTreeSet<SynsetId>> {
        &self.superclasses
    }

    /// Names of the superclasses containing `id` (empty for unclassified).
    pub fn superclasses_of(&self, id: &SynsetId) -> Result<impl Iterator<Item = &str>, LabelSpaceError> {
        self.require(id)?;
        Ok(self.memberships.get(id).into_iter().flatten().map(String::as_str))
    }

    /// First (by name) superclass containing both classes.
    pub fn shared_superclass(&self, a: &SynsetId, b: &SynsetId) -> Result<Option<&str>, LabelSpaceError> {
        self.require(a)?;
        self.require(b)?;
        let (Some(sa), Some(sb)) = (self.memberships.get(a), self.memberships.get(b)) else {
            return Ok(None);
        };
        Ok(sa.intersection(sb).next().map(String::as_str))
    }

    pub fn shares_superclass(&self, a: &SynsetId, b: &SynsetId) -> Result<bool, LabelSpaceError> {
        self.shared_superclass(a, b).map(|s| s.is_some())
    }

    /// Union of all superclasses containing `id`, including `id` itself when
    /// it is classified at all.
    pub fn superclass_mates(&self, id: &SynsetId) -> Result<BTreeSet<SynsetId>, LabelSpaceError> {
        self.require(id)?;
        let mut out = BTreeSet::new();
        for name in self.memberships.get(id).into_iter().flatten() {
            out.extend(self.superclasses[name].iter().cloned());
        }
        Ok(out)
    }

    pub fn direct_siblings(&self, id: &SynsetId) -> Result<BTreeSet<SynsetId>, LabelSpaceError> {
        self.graph.direct_siblings(id)
    }

    pub fn ancestors_below_common(
        &self,
        pred: &SynsetId,
        anchor: &SynsetId,
    ) -> Result<BTreeSet<SynsetId>, LabelSpaceError> {
        self.graph.ancestors_below_common(pred, anchor)
    }

    pub fn superclass_stats(&self) -> SuperclassStats {
        let mut sizes: Vec<usize> = self.superclasses.values().map(BTreeSet::len).collect();
        sizes.sort_unstable();
        let count = sizes.len();
        let unclassified = self.classes.keys().filter(|c| !self.memberships.contains_key(*c)).count();

        let mut per_group = BTreeMap::new();
        for group in Group::ALL {
            let members: Vec<usize> = self
                .superclasses
                .values()
                .filter(|set| set.iter().any(|c| self.classes[c].group == group))
                .map(BTreeSet::len)
                .collect();
            per_group.insert(group, GroupSuperclassStats { count: members.len(), mean_size: mean(&members) });
        }

        let median_size = match count {
            0 => 0.0,
            n if n % 2 == 1 => sizes[n / 2] as f64,
            n => (sizes[n / 2 - 1] + sizes[n / 2]) as f64 / 2.0,
        };

        SuperclassStats {
            count,
            min_size: sizes.first().copied().unwrap_or(0),
            max_size: sizes.last().copied().unwrap_or(0),
            mean_size: mean(&sizes),
            median_size,
            unclassified,
            per_group,
        }
    }
}

fn mean(values: &[usize]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<usize>() as f64 / values.len() as f64
    }
}

/// Expands curated overlap data into directed `(gt, accepted_pred)` pairs.
///
/// Equivalences are closed transitively and symmetrically; a containment
/// `S ⊇ T` accepts every member of `S`'s equivalence class for every member
/// of `T`'s. Every class accepts itself.
fn expand_overlap<'a>(
    spec: &OverlapSpec,
    classes: impl Iterator<Item = &'a SynsetId>,
) -> BTreeSet<(SynsetId, SynsetId)> {
    let mut adjacency: BTreeMap<&SynsetId, Vec<&SynsetId>> = BTreeMap::new();
    for [a, b] in &spec.equivalent {
        adjacency.entry(a).or_default().push(b);
        adjacency.entry(b).or_default().push(a);
    }
    let equivalence_class = |start: &SynsetId| -> BTreeSet<SynsetId> {
        let mut seen = BTreeSet::new();
        let mut stack = alloc::vec![start];
        while let Some(x) = stack.pop() {
            if seen.insert(x.clone()) {
                stack.extend(adjacency.get(x).into_iter().flatten().copied());
            }
        }
        seen
    };

    let mut accepts = BTreeSet::new();
    for c in classes {
        accepts.insert((c.clone(), c.clone()));
    }
    for start in adjacency.keys() {
        for other in equivalence_class(start) {
            accepts.insert(((*start).clone(), other));
        }
    }
    for entry in &spec.contains {
        let supers = equivalence_class(&entry.superset);
        for sub in &entry.subsets {
            for gt in equivalence_class(sub) {
                for pred in &supers {
                    accepts.insert((gt.clone(), pred.clone()));
                }
            }
        }
    }
    accepts
}
