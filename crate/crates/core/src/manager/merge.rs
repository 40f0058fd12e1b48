use std::collections::{BTreeMap, BTreeSet};

use super::{ManagerError, ManagerState, MergePlan};
use crate::equivalence::{ancestor_graph, frontier, AncestorGraph, Matcher};
use crate::model::{validate, AbstractTask, ConcreteTask, Dataflow, Stream, TaskId};

impl ManagerState {
    /// Adds `d` to the submitted set and merges it into the running set.
    pub fn submit(&mut self, d: Dataflow) -> Result<MergePlan, ManagerError> {
        let name = d.name().to_owned();
        if self.submitted.contains_key(&name) {
            return Err(ManagerError::DuplicateName(name));
        }
        let report = validate(&d);
        if !report.is_empty() {
            return Err(ManagerError::InvalidDataflow { name, report });
        }

        let mut next = self.clone();
        let plan = next.merge(d)?;
        let report = next.check_constraints();
        if !report.is_empty() {
            return Err(ManagerError::ConstraintViolation {
                action: format!("submit {name}"),
                report,
            });
        }
        *self = next;
        Ok(plan)
    }

    fn merge(&mut self, d: Dataflow) -> Result<MergePlan, ManagerError> {
        let name = d.name().to_owned();
        let action = format!("submit {name}");

        // Running DAGs are pairwise disjoint, so only those sharing a source
        // with `d` can hold anything reusable.
        let source_logic: BTreeSet<&AbstractTask> =
            d.sources().map(|s| d.task(s).unwrap()).collect();
        let absorbed: Vec<String> = self
            .running
            .iter()
            .filter(|(_, r)| r.sources().any(|s| source_logic.contains(r.task(s).unwrap())))
            .map(|(n, _)| n.clone())
            .collect();

        let union = Dataflow::new(
            "",
            absorbed.iter().flat_map(|n| self.running[n].concrete_tasks()),
            absorbed
                .iter()
                .flat_map(|n| self.running[n].streams().iter().cloned()),
        )
        .map_err(|e| ManagerError::internal(&action, format!("absorbed DAGs overlap: {e}")))?;

        // Running task -> equivalent task of `d`.
        let equivalents = Matcher::between(&union, &d).match_all();
        let maximal: Vec<AncestorGraph> = frontier(&union, &equivalents)
            .map(|t| ancestor_graph(&union, t).unwrap())
            .collect();
        let reused_tasks: BTreeSet<TaskId> = maximal
            .iter()
            .flat_map(|g| g.task_ids().cloned())
            .collect();
        if reused_tasks.iter().ne(equivalents.keys()) {
            return Err(ManagerError::internal(
                &action,
                "maximal ancestor intersection is not the set of equivalent tasks",
            ));
        }

        let mut bindings: BTreeMap<TaskId, TaskId> = BTreeMap::new();
        for (running, local) in &equivalents {
            if let Some(prev) = bindings.insert(local.clone(), running.clone()) {
                return Err(ManagerError::internal(
                    &action,
                    format!("{local} is equivalent to both {prev} and {running}"),
                ));
            }
        }
        let reused_local: BTreeSet<TaskId> = bindings.keys().cloned().collect();

        let mut new_tasks = Vec::new();
        for (local, task) in d.tasks() {
            if !reused_local.contains(local) {
                let id = self.mint_task(&name, local);
                bindings.insert(local.clone(), id.clone());
                new_tasks.push(ConcreteTask::new(id, task.clone()));
            }
        }

        let mut internal_streams = BTreeSet::new();
        let mut boundary_streams = BTreeSet::new();
        for s in d.streams() {
            let mapped = Stream::new(bindings[&s.from].clone(), bindings[&s.to].clone());
            match (reused_local.contains(&s.from), reused_local.contains(&s.to)) {
                (false, false) => {
                    internal_streams.insert(mapped);
                }
                (true, false) => {
                    boundary_streams.insert(mapped);
                }
                (true, true) => {
                    if !union.streams().contains(&mapped) {
                        return Err(ManagerError::internal(
                            &action,
                            format!("reused stream {mapped} is not running"),
                        ));
                    }
                }
                (false, true) => {
                    return Err(ManagerError::internal(
                        &action,
                        format!("reused task {} has a new parent", s.to),
                    ));
                }
            }
        }

        let result_name = match absorbed.as_slice() {
            [only] => only.clone(),
            _ => self.mint_dag(),
        };
        let merged = Dataflow::new(
            result_name.clone(),
            union.concrete_tasks().chain(new_tasks.iter().cloned()),
            union
                .streams()
                .iter()
                .chain(&internal_streams)
                .chain(&boundary_streams)
                .cloned(),
        )
        .map_err(|e| ManagerError::internal(&action, e.to_string()))?;

        let mut served = BTreeSet::new();
        for a in &absorbed {
            self.running.remove(a);
            served.extend(self.decomposition.remove(a).unwrap_or_default());
        }
        served.insert(name.clone());
        for s in &served {
            self.inverse.insert(s.clone(), result_name.clone());
        }
        self.decomposition.insert(result_name.clone(), served);
        self.running.insert(result_name.clone(), merged);
        self.bindings.insert(name.clone(), bindings.clone());
        self.submitted.insert(name.clone(), d);

        Ok(MergePlan {
            submitted: name,
            absorbed,
            reused_tasks,
            new_tasks,
            internal_streams,
            boundary_streams,
            result_name,
            bindings,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manager::ManagerError;

    fn chain(name: &str, kinds: &[&str], sink: &str) -> Dataflow {
        let mut tasks = vec![ConcreteTask::new("src", AbstractTask::source(kinds[0]))];
        let mut streams = Vec::new();
        let mut prev = "src".to_string();
        for (i, k) in kinds[1..].iter().enumerate() {
            let id = format!("t{i}");
            tasks.push(ConcreteTask::new(id.as_str(), AbstractTask::new(*k, "")));
            streams.push(Stream::new(prev.as_str(), id.as_str()));
            prev = id;
        }
        tasks.push(ConcreteTask::new("out", AbstractTask::sink(sink)));
        streams.push(Stream::new(prev.as_str(), "out"));
        Dataflow::new(name, tasks, streams).unwrap()
    }

    #[test]
    fn first_submission_is_all_new() {
        let mut state = ManagerState::new();
        let plan = state.submit(chain("a", &["S", "P", "Q"], "K")).unwrap();
        assert!(plan.absorbed.is_empty());
        assert!(plan.reused_tasks.is_empty());
        assert_eq!(plan.new_tasks.len(), 4);
        assert_eq!(plan.internal_streams.len(), 3);
        assert!(plan.boundary_streams.is_empty());
        assert_eq!(state.running().len(), 1);
        assert_eq!(state.running_task_count(), 4);
    }

    #[test]
    fn shared_prefix_is_reused() {
        let mut state = ManagerState::new();
        state.submit(chain("a", &["S", "P", "Q"], "K1")).unwrap();
        let plan = state.submit(chain("b", &["S", "P", "X"], "K2")).unwrap();
        assert_eq!(plan.reused_tasks.len(), 2);
        assert_eq!(plan.new_tasks.len(), 2);
        assert_eq!(plan.boundary_streams.len(), 1);
        assert_eq!(state.running_task_count(), 6);
        assert_eq!(state.running().len(), 1);
    }

    #[test]
    fn duplicate_and_invalid_submissions_leave_state_untouched() {
        let mut state = ManagerState::new();
        state.submit(chain("a", &["S", "P"], "K")).unwrap();
        let before = state.clone();
        assert_eq!(
            state.submit(chain("a", &["T"], "K")),
            Err(ManagerError::DuplicateName("a".into()))
        );
        let no_sink = Dataflow::new(
            "bad",
            [ConcreteTask::new("s", AbstractTask::source("S"))],
            [],
        )
        .unwrap();
        assert!(matches!(
            state.submit(no_sink),
            Err(ManagerError::InvalidDataflow { .. })
        ));
        assert_eq!(state, before);
    }

    #[test]
    fn identical_resubmission_under_new_name_adds_nothing() {
        let mut state = ManagerState::new();
        state.submit(chain("a", &["S", "P"], "K")).unwrap();
        let plan = state.submit(chain("a2", &["S", "P"], "K")).unwrap();
        assert!(plan.new_tasks.is_empty());
        assert_eq!(state.running_task_count(), 3);
        assert_eq!(state.usage_counts().values().copied().collect::<Vec<_>>(), vec![2, 2, 2]);
    }
}
