use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SpecError;
use crate::equivalence::ancestor_graph;
use crate::model::{AbstractTask, ConcreteTask, Dataflow, Stream, TaskId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskRange {
    pub min: usize,
    pub max: usize,
}

/// Shape of a synthetic workload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub dag_count: usize,
    /// Task count of each DAG, sink included.
    pub tasks_per_dag: TaskRange,
    /// Number of distinct source types.
    pub source_pool: usize,
    /// Probability that a DAG starts from a copy of another DAG's prefix.
    pub prefix_share: f64,
    /// Where the copied prefix ends, as a quantile over all earlier tasks
    /// ordered by ancestor-graph size: 0 picks among all of them, 1 only
    /// among the largest that fit.
    #[serde(default)]
    pub prefix_depth: f64,
    /// Probability that a new task branches off an earlier task instead of
    /// extending the newest one.
    pub fan_out_prob: f64,
    /// Probability that a new task joins a second upstream task.
    pub join_prob: f64,
    /// Probability that a fresh DAG starts from two sources.
    pub multi_source_prob: f64,
    pub type_pool: usize,
    pub config_pool: usize,
    /// When set, DAG sizes are rescaled to add up to this total.
    #[serde(default)]
    pub total_tasks: Option<usize>,
    pub seed: u64,
}

impl WorkloadSpec {
    /// 35 DAGs of 2 to 38 tasks, 471 tasks in total, sharing prefixes heavily
    /// enough that 268 equivalence classes remain.
    pub fn opmw_like() -> Self {
        WorkloadSpec {
            dag_count: 35,
            tasks_per_dag: TaskRange { min: 2, max: 38 },
            source_pool: 4,
            prefix_share: 0.8,
            prefix_depth: 0.5,
            fan_out_prob: 0.1,
            join_prob: 0.1,
            multi_source_prob: 0.1,
            type_pool: 24,
            config_pool: 4,
            total_tasks: Some(471),
            seed: 6,
        }
    }

    /// Small random workload for property tests.
    pub fn small(seed: u64) -> Self {
        WorkloadSpec {
            dag_count: 12,
            tasks_per_dag: TaskRange { min: 2, max: 12 },
            source_pool: 3,
            prefix_share: 0.6,
            prefix_depth: 0.5,
            fan_out_prob: 0.3,
            join_prob: 0.2,
            multi_source_prob: 0.2,
            type_pool: 6,
            config_pool: 2,
            total_tasks: None,
            seed,
        }
    }

    fn check(&self) -> Result<(), SpecError> {
        let bad = |m: &str| Err(SpecError(m.to_owned()));
        if self.dag_count == 0 {
            return bad("dag_count must be positive");
        }
        if self.tasks_per_dag.min < 2 || self.tasks_per_dag.min > self.tasks_per_dag.max {
            return bad("tasks_per_dag needs 2 <= min <= max");
        }
        if self.source_pool == 0 || self.type_pool == 0 || self.config_pool == 0 {
            return bad("pools must be non-empty");
        }
        for (name, p) in [
            ("prefix_share", self.prefix_share),
            ("prefix_depth", self.prefix_depth),
            ("fan_out_prob", self.fan_out_prob),
            ("join_prob", self.join_prob),
            ("multi_source_prob", self.multi_source_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SpecError(format!("{name} must lie in [0, 1]")));
            }
        }
        if let Some(total) = self.total_tasks {
            let n = self.dag_count;
            if total < n * self.tasks_per_dag.min || total > n * self.tasks_per_dag.max {
                return bad("total_tasks is out of reach of tasks_per_dag");
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub spec: Option<WorkloadSpec>,
    pub dags: Vec<Dataflow>,
}

impl Workload {
    pub fn total_tasks(&self) -> usize {
        self.dags.iter().map(Dataflow::len).sum()
    }

    pub fn get(&self, name: &str) -> Option<&Dataflow> {
        self.dags.iter().find(|d| d.name() == name)
    }
}

fn sizes(spec: &WorkloadSpec, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let TaskRange { min, max } = spec.tasks_per_dag;
    let mut sizes: Vec<usize> = (0..spec.dag_count).map(|_| rng.random_range(min..=max)).collect();
    if let Some(total) = spec.total_tasks {
        while sizes.iter().sum::<usize>() != total {
            let i = rng.random_range(0..sizes.len());
            let sum: usize = sizes.iter().sum();
            if sum < total && sizes[i] < max {
                sizes[i] += 1;
            } else if sum > total && sizes[i] > min {
                sizes[i] -= 1;
            }
        }
    }
    sizes
}

struct Builder {
    tasks: BTreeMap<TaskId, AbstractTask>,
    streams: BTreeSet<Stream>,
    next: usize,
}

impl Builder {
    fn new() -> Self {
        Builder {
            tasks: BTreeMap::new(),
            streams: BTreeSet::new(),
            next: 0,
        }
    }

    fn add(&mut self, task: AbstractTask, parents: &[TaskId]) -> TaskId {
        let id = TaskId::new(format!("t{}", self.next));
        self.next += 1;
        self.tasks.insert(id.clone(), task);
        for p in parents {
            self.streams.insert(Stream::new(p.clone(), id.clone()));
        }
        id
    }

    fn parents(&self, t: &TaskId) -> BTreeSet<&TaskId> {
        self.streams.iter().filter(|s| &s.to == t).map(|s| &s.from).collect()
    }

    /// Adding `task` under `parents` would duplicate an existing task.
    fn duplicates(&self, task: &AbstractTask, parents: &[TaskId]) -> bool {
        let wanted: BTreeSet<&TaskId> = parents.iter().collect();
        self.tasks
            .iter()
            .any(|(id, t)| t == task && self.parents(id) == wanted)
    }

    fn non_sinks(&self) -> Vec<TaskId> {
        self.tasks
            .iter()
            .filter(|(_, t)| !t.is_sink())
            .map(|(id, _)| id.clone())
            .collect()
    }
}

fn logic(spec: &WorkloadSpec, rng: &mut ChaCha8Rng) -> AbstractTask {
    const FUNCTIONS: [&str; 4] = ["fn=tag", "fn=pi;iters=24", "fn=window;size=3", "fn=identity"];
    let kind = rng.random_range(0..spec.type_pool);
    let variant = rng.random_range(0..spec.config_pool);
    AbstractTask::new(
        format!("Op{kind}"),
        format!("{};v={variant}", FUNCTIONS[kind % FUNCTIONS.len()]),
    )
}

/// Generates `spec.dag_count` valid de-dup DAGs named `w0`, `w1`, ...
///
/// A DAG either starts fresh from one or two sources, or, with probability
/// `prefix_share`, from a copy of the ancestor graph of a task of an earlier
/// DAG, chosen among the deepest fitting ones according to `prefix_depth`.
/// It then grows new tasks until one slot is left for its sink, whose type
/// is unique to the DAG.
pub fn generate_workload(spec: &WorkloadSpec) -> Result<Workload, SpecError> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sizes = sizes(spec, &mut rng);
    let mut dags: Vec<Dataflow> = Vec::with_capacity(spec.dag_count);

    for (i, &size) in sizes.iter().enumerate() {
        let mut b = Builder::new();
        let body = size - 1;
        let mut tip: Option<TaskId> = None;

        if !dags.is_empty() && body >= 2 && rng.random_bool(spec.prefix_share) {
            let mut candidates: Vec<(usize, TaskId, usize)> = dags
                .iter()
                .enumerate()
                .flat_map(|(j, donor)| {
                    donor
                        .task_ids()
                        .filter(|t| !donor.task(t).unwrap().is_sink())
                        .map(move |t| (j, t.clone(), ancestor_graph(donor, t).unwrap().tasks.len()))
                })
                .filter(|(_, _, n)| *n <= body)
                .collect();
            candidates.sort_by(|a, b| (a.2, a.0, &a.1).cmp(&(b.2, b.0, &b.1)));
            let lowest = ((candidates.len() as f64) * spec.prefix_depth).floor() as usize;
            let pick = candidates
                .get(lowest.min(candidates.len().saturating_sub(1))..)
                .and_then(|tail| tail.choose(&mut rng));
            if let Some((j, root, _)) = pick {
                let donor = &dags[*j];
                let g = ancestor_graph(donor, root).unwrap();
                let order = donor.topological_order().unwrap();
                let mut rename: BTreeMap<TaskId, TaskId> = BTreeMap::new();
                for t in order.iter().filter(|t| g.contains_task(t)) {
                    let ps: Vec<TaskId> = donor.parents_of(t).unwrap().iter().map(|p| rename[p].clone()).collect();
                    let id = b.add(donor.task(t).unwrap().clone(), &ps);
                    rename.insert(t.clone(), id);
                }
                tip = Some(rename[root].clone());
            }
        }
        if b.tasks.is_empty() {
            let first = rng.random_range(0..spec.source_pool);
            let s = b.add(AbstractTask::source(format!("Src{first}")), &[]);
            if body >= 3 && spec.source_pool > 1 && rng.random_bool(spec.multi_source_prob) {
                let mut second = rng.random_range(0..spec.source_pool - 1);
                if second >= first {
                    second += 1;
                }
                let s2 = b.add(AbstractTask::source(format!("Src{second}")), &[]);
                let join = logic(spec, &mut rng);
                tip = Some(b.add(join, &[s.clone(), s2]));
            } else {
                tip = Some(s);
            }
        }

        let mut attempts = 0;
        while b.tasks.len() < body {
            attempts += 1;
            if attempts > 1000 {
                return Err(SpecError(format!(
                    "w{i}: pools too small to grow a de-dup DAG of {size} tasks"
                )));
            }
            let pool = b.non_sinks();
            let anchor = match &tip {
                Some(t) if !rng.random_bool(spec.fan_out_prob) => t.clone(),
                _ => pool.choose(&mut rng).unwrap().clone(),
            };
            let mut parents = vec![anchor.clone()];
            if pool.len() > 1 && rng.random_bool(spec.join_prob) {
                let other = pool.choose(&mut rng).unwrap().clone();
                if other != anchor {
                    parents.push(other);
                }
            }
            let task = logic(spec, &mut rng);
            if b.duplicates(&task, &parents) {
                continue;
            }
            attempts = 0;
            tip = Some(b.add(task, &parents));
        }

        let leaves: Vec<TaskId> = b
            .tasks
            .keys()
            .filter(|t| !b.streams.iter().any(|s| &s.from == *t))
            .cloned()
            .collect();
        b.add(AbstractTask::sink(format!("Sink{i}")), &leaves);

        let d = Dataflow::new(
            format!("w{i}"),
            b.tasks.into_iter().map(|(id, t)| ConcreteTask::new(id, t)),
            b.streams,
        )
        .map_err(|e| SpecError(format!("generated an invalid dataflow: {e}")))?;
        dags.push(d);
    }

    Ok(Workload {
        spec: Some(spec.clone()),
        dags,
    })
}
