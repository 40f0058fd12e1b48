use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::workload::Workload;
use super::SpecError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceKind {
    /// Submit everything, then remove everything.
    #[serde(rename = "SEQ")]
    Seq,
    /// Fill partly, random walk of submits and removes, then drain.
    #[serde(rename = "RW")]
    Rw,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "op", content = "name", rename_all = "snake_case")]
pub enum Op {
    Submit(String),
    Remove(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Action {
    pub step: usize,
    #[serde(flatten)]
    pub op: Op,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub kind: TraceKind,
    pub actions: Vec<Action>,
}

impl Trace {
    pub fn from_ops(kind: TraceKind, ops: impl IntoIterator<Item = Op>) -> Self {
        Trace {
            kind,
            actions: ops
                .into_iter()
                .enumerate()
                .map(|(step, op)| Action { step, op })
                .collect(),
        }
    }

    /// Every remove follows a submit of the same name, and no live name is
    /// submitted again.
    pub fn check(&self) -> Result<(), SpecError> {
        let mut live = BTreeSet::new();
        let mut last_step = None;
        for a in &self.actions {
            if last_step.is_some_and(|s| a.step < s) {
                return Err(SpecError(format!("step {} is out of order", a.step)));
            }
            last_step = Some(a.step);
            match &a.op {
                Op::Submit(n) if !live.insert(n.clone()) => {
                    return Err(SpecError(format!("{n} is submitted twice at step {}", a.step)))
                }
                Op::Remove(n) if !live.remove(n) => {
                    return Err(SpecError(format!("{n} is removed at step {} but not live", a.step)))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSpec {
    pub kind: TraceKind,
    pub seed: u64,
    /// Random-walk steps between fill and drain.
    pub rw_steps: usize,
    /// Fraction of the workload submitted before the random walk.
    pub initial_fill: f64,
}

impl TraceSpec {
    pub fn seq(seed: u64) -> Self {
        TraceSpec {
            kind: TraceKind::Seq,
            seed,
            rw_steps: 0,
            initial_fill: 1.0,
        }
    }

    pub fn rw(seed: u64, rw_steps: usize, initial_fill: f64) -> Self {
        TraceSpec {
            kind: TraceKind::Rw,
            seed,
            rw_steps,
            initial_fill,
        }
    }
}

pub fn generate_trace(workload: &Workload, spec: &TraceSpec) -> Result<Trace, SpecError> {
    if workload.dags.is_empty() {
        return Err(SpecError("workload is empty".into()));
    }
    if !(0.0..=1.0).contains(&spec.initial_fill) {
        return Err(SpecError("initial_fill must lie in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut names: Vec<String> = workload.dags.iter().map(|d| d.name().to_owned()).collect();
    names.shuffle(&mut rng);
    let mut ops = Vec::new();

    match spec.kind {
        TraceKind::Seq => {
            ops.extend(names.iter().cloned().map(Op::Submit));
            names.shuffle(&mut rng);
            ops.extend(names.into_iter().map(Op::Remove));
        }
        TraceKind::Rw => {
            let fill = (spec.initial_fill * names.len() as f64).round() as usize;
            let mut live: Vec<String> = names[..fill].to_vec();
            let mut idle: Vec<String> = names[fill..].to_vec();
            ops.extend(live.iter().cloned().map(Op::Submit));
            for _ in 0..spec.rw_steps {
                let add = rng.random_bool(0.5);
                if (add && !idle.is_empty()) || live.is_empty() {
                    let i = rng.random_range(0..idle.len());
                    let n = idle.swap_remove(i);
                    live.push(n.clone());
                    ops.push(Op::Submit(n));
                } else {
                    let i = rng.random_range(0..live.len());
                    let n = live.swap_remove(i);
                    idle.push(n.clone());
                    ops.push(Op::Remove(n));
                }
            }
            live.shuffle(&mut rng);
            ops.extend(live.into_iter().map(Op::Remove));
        }
    }
    Ok(Trace::from_ops(spec.kind, ops))
}
