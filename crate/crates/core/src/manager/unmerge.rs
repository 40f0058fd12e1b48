use std::collections::{BTreeMap, BTreeSet};

use super::{ManagerError, ManagerState, UnmergePlan};
use crate::equivalence::ancestor_graph;
use crate::model::{Dataflow, Stream, TaskId};

impl ManagerState {
    /// Removes a submitted dataflow and unmerges it from its running DAG.
    pub fn remove(&mut self, name: &str) -> Result<UnmergePlan, ManagerError> {
        if !self.submitted.contains_key(name) {
            return Err(ManagerError::UnknownName(name.to_owned()));
        }
        let mut next = self.clone();
        let plan = next.unmerge(name)?;
        let report = next.check_constraints();
        if !report.is_empty() {
            return Err(ManagerError::ConstraintViolation {
                action: format!("remove {name}"),
                report,
            });
        }
        *self = next;
        Ok(plan)
    }

    fn unmerge(&mut self, name: &str) -> Result<UnmergePlan, ManagerError> {
        let action = format!("remove {name}");
        let affected = self
            .inverse
            .get(name)
            .cloned()
            .ok_or_else(|| ManagerError::internal(&action, format!("{name} has no running DAG")))?;
        let running = self
            .running
            .remove(&affected)
            .ok_or_else(|| ManagerError::internal(&action, format!("{affected} is not running")))?;
        let mut remaining = self.decomposition.remove(&affected).unwrap_or_default();
        remaining.remove(name);

        // Images of the sink ancestor graphs of everything still served.
        let mut keep_tasks: BTreeSet<TaskId> = BTreeSet::new();
        let mut keep_streams: BTreeSet<Stream> = BTreeSet::new();
        for other in &remaining {
            let d = &self.submitted[other];
            let b = &self.bindings[other];
            for sink in d.sinks() {
                let g = ancestor_graph(d, sink).unwrap();
                keep_tasks.extend(g.task_ids().map(|t| b[t].clone()));
                keep_streams.extend(
                    g.streams
                        .iter()
                        .map(|s| Stream::new(b[&s.from].clone(), b[&s.to].clone())),
                );
            }
        }

        let terminated_tasks: BTreeSet<TaskId> = running
            .task_ids()
            .filter(|t| !keep_tasks.contains(*t))
            .cloned()
            .collect();
        let disconnected_streams: BTreeSet<Stream> = running
            .streams()
            .iter()
            .filter(|s| terminated_tasks.contains(&s.from) || terminated_tasks.contains(&s.to))
            .cloned()
            .collect();
        let reduced = Dataflow::new(
            affected.clone(),
            running
                .concrete_tasks()
                .filter(|t| !terminated_tasks.contains(&t.id)),
            running
                .streams()
                .iter()
                .filter(|s| !disconnected_streams.contains(*s))
                .cloned(),
        )
        .map_err(|e| ManagerError::internal(&action, e.to_string()))?;
        if !keep_streams.is_subset(reduced.streams()) {
            return Err(ManagerError::internal(&action, "retained stream is not running"));
        }

        let cohesion: Vec<Vec<TaskId>> = remaining
            .iter()
            .map(|o| self.bindings[o].values().cloned().collect())
            .collect();
        let groups = components(&reduced, &cohesion);
        let names: Vec<String> = if groups.len() == 1 {
            vec![affected.clone()]
        } else {
            groups.iter().map(|_| self.mint_dag()).collect()
        };

        self.submitted.remove(name);
        self.bindings.remove(name);
        self.inverse.remove(name);

        let mut parts = Vec::with_capacity(groups.len());
        for (group, cname) in groups.into_iter().zip(names) {
            let part = Dataflow::new(
                cname.clone(),
                reduced.concrete_tasks().filter(|t| group.contains(&t.id)),
                reduced
                    .streams()
                    .iter()
                    .filter(|s| group.contains(&s.from))
                    .cloned(),
            )
            .map_err(|e| ManagerError::internal(&action, e.to_string()))?;
            let served: BTreeSet<String> = remaining
                .iter()
                .filter(|o| {
                    self.bindings[*o]
                        .values()
                        .next()
                        .is_some_and(|t| group.contains(t))
                })
                .cloned()
                .collect();
            for s in &served {
                self.inverse.insert(s.clone(), cname.clone());
            }
            self.decomposition.insert(cname.clone(), served);
            self.running.insert(cname, part.clone());
            parts.push(part);
        }

        Ok(UnmergePlan {
            removed: name.to_owned(),
            affected,
            terminated_tasks,
            disconnected_streams,
            components: parts,
        })
    }
}

/// Weakly connected components of `d`, where all tasks of one `cohesion`
/// group additionally count as connected. Components come out ordered by
/// their smallest source id.
pub(crate) fn components(d: &Dataflow, cohesion: &[Vec<TaskId>]) -> Vec<BTreeSet<TaskId>> {
    let ids: Vec<&TaskId> = d.task_ids().collect();
    let index: BTreeMap<&TaskId, usize> = ids.iter().enumerate().map(|(i, t)| (*t, i)).collect();
    let mut parent: Vec<usize> = (0..ids.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut union = |a: usize, b: usize| {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    };
    for s in d.streams() {
        union(index[&s.from], index[&s.to]);
    }
    for group in cohesion {
        let members: Vec<usize> = group.iter().filter_map(|t| index.get(t).copied()).collect();
        for w in members.windows(2) {
            union(w[0], w[1]);
        }
    }

    let mut by_root: BTreeMap<usize, BTreeSet<TaskId>> = BTreeMap::new();
    for (i, t) in ids.iter().enumerate() {
        let root = find(&mut parent, i);
        by_root.entry(root).or_default().insert((*t).clone());
    }
    let mut out: Vec<BTreeSet<TaskId>> = by_root.into_values().collect();
    out.sort_by_key(|g| {
        g.iter()
            .find(|t| d.task(t).is_some_and(|a| a.is_source()))
            .or_else(|| g.iter().next())
            .cloned()
    });
    out
}
