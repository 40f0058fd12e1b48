//! Deterministic simulation of merged deployments.
//!
//! Each merge launches its new tasks as an immutable [`Fragment`]; boundary
//! streams from reused tasks travel through FIFO data topics of an in-process
//! [`Broker`], switched on by signals on the upstream task's control topic.
//! Removal pauses tasks instead of tearing fragments down.
//!
//! Within a step every active task runs once, after all of its producers, on
//! the events that reached it, ordered by producer rank. Ranks are derived from
//! equivalence signatures, so a task and its standalone counterpart see the
//! same input sequence.

mod broker;
mod deployment;
pub mod logic;
mod standalone;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::TaskId;

pub use broker::{Broker, ControlSignal, DataTopic};
pub use deployment::{CostModel, Deployment, Fragment, LogRecord};
pub use logic::TaskLogic;
pub use standalone::standalone_run;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("plan does not match the deployment: {0}")]
    StalePlan(String),
    #[error("{0} is not a deployed source task")]
    UnknownSource(TaskId),
    #[error("source {0} is paused")]
    PausedSource(TaskId),
    #[error("no fragment named {0}")]
    UnknownFragment(String),
}

/// An event of a raw stream, or derived from one.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Event {
    /// Source type of the raw stream it descends from.
    pub origin: String,
    /// Position in that raw stream.
    pub seq: u64,
    pub payload: Vec<u8>,
}

impl Event {
    pub fn new(origin: impl Into<String>, seq: u64, payload: Vec<u8>) -> Self {
        Event {
            origin: origin.into(),
            seq,
            payload,
        }
    }
}
