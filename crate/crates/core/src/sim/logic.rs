//! Deterministic task functions.
//!
//! A task's behaviour is read from its config, written as `;`-separated
//! `key=value` pairs. `fn` selects the function:
//!
//! | `fn`       | keys   | output per input batch                              |
//! |------------|--------|-----------------------------------------------------|
//! | `identity` |        | the input events unchanged                          |
//! | `tag`      |        | one event per input, payload hashed with the task   |
//! | `pi`       | `iters`| one event per input, a Leibniz estimate of pi       |
//! | `window`   | `size` | one event per `size` inputs (count and digest)      |
//!
//! Any other or missing `fn` behaves as `tag`. Sources and sinks are
//! identities. The key `cores` sets the task's weight in the cost model.
//!
//! Window state lives for one step only: the last partial window is flushed
//! at the end of every batch.

use xxhash_rust::xxh3::{xxh3_64, Xxh3};

use super::Event;
use crate::model::AbstractTask;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TaskLogic {
    Identity,
    Tag,
    Pi { iters: u32 },
    Window { size: usize },
}

fn param<'a>(config: &'a str, key: &str) -> Option<&'a str> {
    config
        .split(';')
        .filter_map(|kv| kv.split_once('='))
        .find(|(k, _)| k.trim() == key)
        .map(|(_, v)| v.trim())
}

impl TaskLogic {
    pub fn of(task: &AbstractTask) -> Self {
        if task.is_source() || task.is_sink() {
            return TaskLogic::Identity;
        }
        match param(&task.config, "fn") {
            Some("identity") => TaskLogic::Identity,
            Some("pi") => TaskLogic::Pi {
                iters: param(&task.config, "iters")
                    .and_then(|v| v.parse().ok())
                    .unwrap_or(64),
            },
            Some("window") => TaskLogic::Window {
                size: param(&task.config, "size")
                    .and_then(|v| v.parse().ok())
                    .filter(|&n| n > 0)
                    .unwrap_or(4),
            },
            _ => TaskLogic::Tag,
        }
    }
}

/// Cost-model weight of a task, in core-equivalents.
pub fn weight(task: &AbstractTask, default: f64) -> f64 {
    param(&task.config, "cores")
        .and_then(|v| v.parse::<f64>().ok())
        .filter(|w| w.is_finite() && *w >= 0.0)
        .unwrap_or(default)
}

pub fn leibniz_pi(terms: u32) -> f64 {
    let mut sum = 0.0;
    for k in 0..terms {
        let term = 1.0 / (2 * k + 1) as f64;
        sum += if k % 2 == 0 { term } else { -term };
    }
    4.0 * sum
}

fn tag(task: &AbstractTask, payload: &[u8]) -> Vec<u8> {
    let mut h = Xxh3::new();
    h.update(task.kind.as_bytes());
    h.update(&[0]);
    h.update(task.config.as_bytes());
    h.update(&[0]);
    h.update(payload);
    h.digest().to_le_bytes().to_vec()
}

/// Runs `task` over one step's ordered input batch.
pub fn apply(task: &AbstractTask, batch: Vec<Event>) -> Vec<Event> {
    match TaskLogic::of(task) {
        TaskLogic::Identity => batch,
        TaskLogic::Tag => batch
            .into_iter()
            .map(|e| Event {
                payload: tag(task, &e.payload),
                ..e
            })
            .collect(),
        TaskLogic::Pi { iters } => batch
            .into_iter()
            .map(|e| {
                let extra = (xxh3_64(&e.payload) % 8) as u32;
                Event {
                    payload: leibniz_pi(iters + extra).to_le_bytes().to_vec(),
                    ..e
                }
            })
            .collect(),
        TaskLogic::Window { size } => batch
            .chunks(size)
            .map(|w| {
                let mut h = Xxh3::new();
                for e in w {
                    h.update(&(e.payload.len() as u64).to_le_bytes());
                    h.update(&e.payload);
                }
                let mut payload = (w.len() as u64).to_le_bytes().to_vec();
                payload.extend_from_slice(&h.digest().to_le_bytes());
                let last = w.last().unwrap();
                Event {
                    origin: last.origin.clone(),
                    seq: last.seq,
                    payload,
                }
            })
            .collect(),
    }
}
