//! Parent sets, ancestor graphs and task equivalence.
//!
//! Two tasks are equivalent when they run the same logic and their ancestor
//! graphs are isomorphic under an edge-preserving, config-similar bijection.
//! Equivalence is decided in two layers: a 128-bit Merkle-style signature
//! computed bottom-up over each dataflow, and a memoized structural check that
//! recursively matches parent multisets. The signature is only a filter; no
//! answer ever rests on hash equality alone.

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use xxhash_rust::xxh3::Xxh3;

use crate::model::{AbstractTask, ConcreteTask, Dataflow, Stream, TaskId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EquivalenceError {
    #[error("unknown task {task} in dataflow {dataflow}")]
    UnknownTask { dataflow: String, task: TaskId },
}

fn unknown(d: &Dataflow, t: &TaskId) -> EquivalenceError {
    EquivalenceError::UnknownTask {
        dataflow: d.name().to_owned(),
        task: t.clone(),
    }
}

/// Canonical structural fingerprint of a task's provenance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EquivalenceSignature {
    /// Longest path from any source to the task.
    pub depth: u32,
    pub digest: u128,
}

impl EquivalenceSignature {
    /// Signature of a task running `task` with the given parent signatures.
    /// Parent order does not matter; duplicates count.
    pub fn combine(task: &AbstractTask, parents: &[EquivalenceSignature]) -> Self {
        let mut digests: Vec<u128> = parents.iter().map(|p| p.digest).collect();
        digests.sort_unstable();
        let mut h = Xxh3::new();
        h.update(&(task.kind.len() as u64).to_le_bytes());
        h.update(task.kind.as_bytes());
        h.update(&(task.config.len() as u64).to_le_bytes());
        h.update(task.config.as_bytes());
        h.update(&(digests.len() as u64).to_le_bytes());
        for d in &digests {
            h.update(&d.to_le_bytes());
        }
        let depth = parents.iter().map(|p| p.depth + 1).max().unwrap_or(0);
        EquivalenceSignature {
            depth,
            digest: h.digest128(),
        }
    }
}

impl fmt::Display for EquivalenceSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:032x}@{}", self.digest, self.depth)
    }
}

/// Signatures of every task of one dataflow, computed in one topological pass.
#[derive(Clone, Debug, Default)]
pub struct Signatures {
    by_task: HashMap<TaskId, EquivalenceSignature>,
}

impl Signatures {
    /// Tasks that sit on a cycle get no signature.
    pub fn compute(d: &Dataflow) -> Self {
        let order = match d.topological_order() {
            Ok(order) => order,
            Err(cyclic) => {
                let cyclic: BTreeSet<TaskId> = cyclic.into_iter().collect();
                // Still sign the acyclic prefix; only reachable from validate.
                let mut sigs = Signatures::default();
                let mut pending: Vec<&TaskId> =
                    d.task_ids().filter(|t| !cyclic.contains(*t)).collect();
                while !pending.is_empty() {
                    let before = pending.len();
                    pending.retain(|t| !sigs.try_sign(d, t));
                    if pending.len() == before {
                        break;
                    }
                }
                return sigs;
            }
        };
        let mut sigs = Signatures {
            by_task: HashMap::with_capacity(order.len()),
        };
        for t in &order {
            let signed = sigs.try_sign(d, t);
            debug_assert!(signed);
        }
        sigs
    }

    fn try_sign(&mut self, d: &Dataflow, t: &TaskId) -> bool {
        let mut parent_sigs = Vec::new();
        for p in d.parents_of(t).into_iter().flatten() {
            match self.by_task.get(p) {
                Some(s) => parent_sigs.push(*s),
                None => return false,
            }
        }
        let sig = EquivalenceSignature::combine(d.task(t).unwrap(), &parent_sigs);
        self.by_task.insert(t.clone(), sig);
        true
    }

    pub fn get(&self, t: &TaskId) -> Option<&EquivalenceSignature> {
        self.by_task.get(t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TaskId, &EquivalenceSignature)> {
        self.by_task.iter()
    }
}

/// Decides equivalence between tasks of two (possibly identical) dataflows.
///
/// Results are memoized per pair, so matching a whole dataflow against another
/// costs a bounded number of parent matchings per candidate pair.
pub struct Matcher<'a> {
    left: &'a Dataflow,
    right: &'a Dataflow,
    left_sigs: Cow<'a, Signatures>,
    right_sigs: Cow<'a, Signatures>,
    memo: HashMap<(TaskId, TaskId), bool>,
}

impl<'a> Matcher<'a> {
    pub fn new(
        left: &'a Dataflow,
        left_sigs: &'a Signatures,
        right: &'a Dataflow,
        right_sigs: &'a Signatures,
    ) -> Self {
        Matcher {
            left,
            right,
            left_sigs: Cow::Borrowed(left_sigs),
            right_sigs: Cow::Borrowed(right_sigs),
            memo: HashMap::new(),
        }
    }

    pub fn between(left: &'a Dataflow, right: &'a Dataflow) -> Self {
        Matcher {
            left,
            right,
            left_sigs: Cow::Owned(Signatures::compute(left)),
            right_sigs: Cow::Owned(Signatures::compute(right)),
            memo: HashMap::new(),
        }
    }

    pub fn left_signatures(&self) -> &Signatures {
        &self.left_sigs
    }

    pub fn right_signatures(&self) -> &Signatures {
        &self.right_sigs
    }

    /// `l` (in the left dataflow) is equivalent to `r` (in the right one).
    /// Unknown or unsigned tasks are never equivalent to anything.
    pub fn equivalent(&mut self, l: &TaskId, r: &TaskId) -> bool {
        if let Some(&known) = self.memo.get(&(l.clone(), r.clone())) {
            return known;
        }
        let (Some(ls), Some(rs)) = (self.left_sigs.get(l), self.right_sigs.get(r)) else {
            return false;
        };
        let result = ls == rs && self.structural(l, r);
        self.memo.insert((l.clone(), r.clone()), result);
        result
    }

    fn structural(&mut self, l: &TaskId, r: &TaskId) -> bool {
        if self.left.task(l) != self.right.task(r) {
            return false;
        }
        let lp: Vec<TaskId> = self.left.parents_of(l).unwrap().iter().cloned().collect();
        let rp: Vec<TaskId> = self.right.parents_of(r).unwrap().iter().cloned().collect();
        if lp.len() != rp.len() {
            return false;
        }
        let adjacency: Vec<Vec<bool>> = lp
            .iter()
            .map(|a| rp.iter().map(|b| self.equivalent(a, b)).collect())
            .collect();
        perfect_matching(&adjacency)
    }

    /// For every left task, its equivalent right task (if any).
    pub fn match_all(&mut self) -> BTreeMap<TaskId, TaskId> {
        let mut by_digest: HashMap<u128, Vec<TaskId>> = HashMap::new();
        for (t, s) in self.right_sigs.iter() {
            by_digest.entry(s.digest).or_default().push(t.clone());
        }
        for group in by_digest.values_mut() {
            group.sort();
        }
        let mut left_ids: Vec<(TaskId, u128)> = self
            .left_sigs
            .iter()
            .map(|(t, s)| (t.clone(), s.digest))
            .collect();
        left_ids.sort();
        let mut out = BTreeMap::new();
        for (l, digest) in left_ids {
            if let Some(cands) = by_digest.get(&digest) {
                for r in cands {
                    if self.equivalent(&l, r) {
                        out.insert(l.clone(), r.clone());
                        break;
                    }
                }
            }
        }
        out
    }
}

/// Kuhn's augmenting-path bipartite matching on a square boolean matrix.
fn perfect_matching(adj: &[Vec<bool>]) -> bool {
    let n = adj.len();
    let mut owner: Vec<Option<usize>> = vec![None; n];
    fn augment(i: usize, adj: &[Vec<bool>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for j in 0..adj[i].len() {
            if adj[i][j] && !seen[j] {
                seen[j] = true;
                if owner[j].is_none_or(|k| augment(k, adj, seen, owner)) {
                    owner[j] = Some(i);
                    return true;
                }
            }
        }
        false
    }
    (0..n).all(|i| {
        let mut seen = vec![false; n];
        augment(i, adj, &mut seen, &mut owner)
    })
}

/// A task together with all its ancestors and the streams between them.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AncestorGraph {
    pub root: TaskId,
    pub tasks: BTreeSet<ConcreteTask>,
    pub streams: BTreeSet<Stream>,
}

impl AncestorGraph {
    pub fn task_ids(&self) -> impl Iterator<Item = &TaskId> {
        self.tasks.iter().map(|t| &t.id)
    }

    pub fn contains_task(&self, id: &TaskId) -> bool {
        self.tasks.iter().any(|t| &t.id == id)
    }

    /// Strict containment of both the task and stream sets.
    pub fn is_sub_ancestor_of(&self, other: &AncestorGraph) -> bool {
        self != other && self.tasks.is_subset(&other.tasks) && self.streams.is_subset(&other.streams)
    }
}

pub fn parents(d: &Dataflow, t: &TaskId) -> Result<BTreeSet<TaskId>, EquivalenceError> {
    d.parents_of(t).cloned().ok_or_else(|| unknown(d, t))
}

/// The task, its incoming streams, and recursively the ancestor graphs of its
/// parents, unioned.
pub fn ancestor_graph(d: &Dataflow, t: &TaskId) -> Result<AncestorGraph, EquivalenceError> {
    if !d.contains(t) {
        return Err(unknown(d, t));
    }
    let mut tasks = BTreeSet::new();
    let mut streams = BTreeSet::new();
    let mut seen: BTreeSet<&TaskId> = BTreeSet::new();
    let mut queue: VecDeque<&TaskId> = VecDeque::from([t]);
    while let Some(cur) = queue.pop_front() {
        if !seen.insert(cur) {
            continue;
        }
        tasks.insert(ConcreteTask::new(cur.clone(), d.task(cur).unwrap().clone()));
        for p in d.parents_of(cur).unwrap() {
            streams.insert(Stream::new(p.clone(), cur.clone()));
            queue.push_back(p);
        }
    }
    Ok(AncestorGraph {
        root: t.clone(),
        tasks,
        streams,
    })
}

pub fn signature(d: &Dataflow, t: &TaskId) -> Result<EquivalenceSignature, EquivalenceError> {
    if !d.contains(t) {
        return Err(unknown(d, t));
    }
    Signatures::compute(d)
        .get(t)
        .copied()
        .ok_or_else(|| unknown(d, t))
}

pub fn tasks_equivalent(
    d1: &Dataflow,
    t1: &TaskId,
    d2: &Dataflow,
    t2: &TaskId,
) -> Result<bool, EquivalenceError> {
    if !d1.contains(t1) {
        return Err(unknown(d1, t1));
    }
    if !d2.contains(t2) {
        return Err(unknown(d2, t2));
    }
    Ok(Matcher::between(d1, d2).equivalent(t1, t2))
}

/// Members of `graphs` that are not sub-ancestors of another member.
/// Output is sorted and free of duplicates.
pub fn maximal_ancestor_set(graphs: &[AncestorGraph]) -> Vec<AncestorGraph> {
    let unique: BTreeSet<&AncestorGraph> = graphs.iter().collect();
    unique
        .iter()
        .filter(|g| !unique.iter().any(|other| g.is_sub_ancestor_of(other)))
        .map(|g| (*g).clone())
        .collect()
}

/// Ancestor graphs (taken from `d1`) of every `d1` task that has an
/// equivalent in `d2`, sorted by root.
pub fn ancestor_intersection(d1: &Dataflow, d2: &Dataflow) -> Vec<AncestorGraph> {
    Matcher::between(d1, d2)
        .match_all()
        .keys()
        .map(|t| ancestor_graph(d1, t).unwrap())
        .collect()
}

/// The maximal members of [`ancestor_intersection`].
///
/// Matched tasks are ancestor-closed, so a matched task's graph is maximal
/// exactly when none of its children is matched; this avoids the quadratic
/// containment scan of [`maximal_ancestor_set`].
pub fn maximal_ancestor_intersection(d1: &Dataflow, d2: &Dataflow) -> Vec<AncestorGraph> {
    let matched = Matcher::between(d1, d2).match_all();
    frontier(d1, &matched)
        .map(|t| ancestor_graph(d1, t).unwrap())
        .collect()
}

pub(crate) fn frontier<'m, V>(
    d: &'m Dataflow,
    matched: &'m BTreeMap<TaskId, V>,
) -> impl Iterator<Item = &'m TaskId> {
    matched.keys().filter(move |t| {
        !d.children_of(t)
            .unwrap()
            .iter()
            .any(|c| matched.contains_key(c))
    })
}

/// No task of one is equivalent to a task of the other. Equivalent tasks have
/// equivalent sources in their ancestry, so comparing sources suffices.
pub fn dags_disjoint(d1: &Dataflow, d2: &Dataflow) -> bool {
    let left: BTreeSet<&AbstractTask> = d1.sources().map(|s| d1.task(s).unwrap()).collect();
    !d2.sources().any(|s| left.contains(d2.task(s).unwrap()))
}
