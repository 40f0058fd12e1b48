use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::unmerge::components;
use super::{ManagerError, ManagerState};
use crate::equivalence::{Matcher, Signatures};
use crate::model::{validate, AbstractTask, ConcreteTask, Dataflow, Stream, TaskId};

/// The minimal running set for `submitted`, built directly: one running task
/// per equivalence class, streams induced, split into connected components.
pub fn rebuild_from_scratch(
    submitted: impl IntoIterator<Item = Dataflow>,
) -> Result<ManagerState, ManagerError> {
    let dags: Vec<Dataflow> = submitted.into_iter().collect();
    let mut seen = BTreeSet::new();
    for d in &dags {
        if !seen.insert(d.name().to_owned()) {
            return Err(ManagerError::DuplicateName(d.name().to_owned()));
        }
        let report = validate(d);
        if !report.is_empty() {
            return Err(ManagerError::InvalidDataflow {
                name: d.name().to_owned(),
                report,
            });
        }
    }
    let sigs: Vec<Signatures> = dags.iter().map(Signatures::compute).collect();

    let mut state = ManagerState::new();
    // Representatives (dataflow index, task) per digest, with their running id.
    let mut classes: HashMap<u128, Vec<(usize, TaskId, TaskId)>> = HashMap::new();
    let mut running_tasks: BTreeMap<TaskId, AbstractTask> = BTreeMap::new();
    let mut running_streams: BTreeSet<Stream> = BTreeSet::new();

    for (i, d) in dags.iter().enumerate() {
        let mut matchers: HashMap<usize, Matcher> = HashMap::new();
        let mut binding: BTreeMap<TaskId, TaskId> = BTreeMap::new();
        for (t, task) in d.tasks() {
            let digest = sigs[i].get(t).unwrap().digest;
            let reps = classes.entry(digest).or_default();
            let found = reps.iter().find(|(j, rep, _)| {
                matchers
                    .entry(*j)
                    .or_insert_with(|| Matcher::new(d, &sigs[i], &dags[*j], &sigs[*j]))
                    .equivalent(t, rep)
            });
            let id = match found {
                Some((_, _, id)) => id.clone(),
                None => {
                    let id = state.mint_task(d.name(), t);
                    reps.push((i, t.clone(), id.clone()));
                    running_tasks.insert(id.clone(), task.clone());
                    id
                }
            };
            binding.insert(t.clone(), id);
        }
        for s in d.streams() {
            running_streams.insert(Stream::new(
                binding[&s.from].clone(),
                binding[&s.to].clone(),
            ));
        }
        state.bindings.insert(d.name().to_owned(), binding);
    }

    let union = Dataflow::new(
        "",
        running_tasks
            .into_iter()
            .map(|(id, task)| ConcreteTask::new(id, task)),
        running_streams,
    )
    .map_err(|e| ManagerError::internal("rebuild", e.to_string()))?;
    let cohesion: Vec<Vec<TaskId>> = state
        .bindings
        .values()
        .map(|b| b.values().cloned().collect())
        .collect();

    for group in components(&union, &cohesion) {
        let name = state.mint_dag();
        let part = Dataflow::new(
            name.clone(),
            union.concrete_tasks().filter(|t| group.contains(&t.id)),
            union
                .streams()
                .iter()
                .filter(|s| group.contains(&s.from))
                .cloned(),
        )
        .map_err(|e| ManagerError::internal("rebuild", e.to_string()))?;
        let served: BTreeSet<String> = state
            .bindings
            .iter()
            .filter(|(_, b)| b.values().next().is_some_and(|t| group.contains(t)))
            .map(|(n, _)| n.clone())
            .collect();
        for s in &served {
            state.inverse.insert(s.clone(), name.clone());
        }
        state.decomposition.insert(name.clone(), served);
        state.running.insert(name, part);
    }
    state.submitted = dags.into_iter().map(|d| (d.name().to_owned(), d)).collect();
    Ok(state)
}
