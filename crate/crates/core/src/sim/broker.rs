use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::Event;
use crate::model::{Stream, TaskId};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "signal", rename_all = "snake_case")]
pub enum ControlSignal {
    /// Start copying output to a data topic.
    Forward { topic: String },
    StopForward { topic: String },
    Pause,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataTopic {
    pub publisher: TaskId,
    pub subscribers: BTreeSet<TaskId>,
    pub queue: VecDeque<Event>,
    /// False once the publisher has been told to stop forwarding.
    pub open: bool,
}

/// In-process publish/subscribe broker: one FIFO data topic per boundary
/// stream and one control topic per deployed task.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Broker {
    pub data_topics: BTreeMap<String, DataTopic>,
    pub control_topics: BTreeMap<TaskId, VecDeque<ControlSignal>>,
}

impl Broker {
    pub fn topic_name(stream: &Stream) -> String {
        format!("data:{}->{}", stream.from, stream.to)
    }

    pub fn open_control(&mut self, task: &TaskId) {
        self.control_topics.entry(task.clone()).or_default();
    }

    pub fn close_control(&mut self, task: &TaskId) {
        self.control_topics.remove(task);
    }

    pub fn signal(&mut self, task: &TaskId, signal: ControlSignal) {
        self.control_topics
            .entry(task.clone())
            .or_default()
            .push_back(signal);
    }

    pub fn drain_control(&mut self, task: &TaskId) -> Vec<ControlSignal> {
        self.control_topics
            .get_mut(task)
            .map(|q| q.drain(..).collect())
            .unwrap_or_default()
    }

    /// Creates the topic for `stream`; returns its name, or `None` if it
    /// already exists.
    pub fn create_topic(&mut self, stream: &Stream) -> Option<String> {
        let name = Self::topic_name(stream);
        if self.data_topics.contains_key(&name) {
            return None;
        }
        self.data_topics.insert(
            name.clone(),
            DataTopic {
                publisher: stream.from.clone(),
                subscribers: BTreeSet::from([stream.to.clone()]),
                queue: VecDeque::new(),
                open: true,
            },
        );
        Some(name)
    }

    pub fn remove_topic(&mut self, name: &str) -> Option<DataTopic> {
        self.data_topics.remove(name)
    }

    pub fn publish(&mut self, topic: &str, events: &[Event]) {
        if let Some(t) = self.data_topics.get_mut(topic) {
            t.queue.extend(events.iter().cloned());
        }
    }

    /// Pops everything queued on `topic`, in publish order.
    pub fn take(&mut self, topic: &str) -> Vec<Event> {
        self.data_topics
            .get_mut(topic)
            .map(|t| t.queue.drain(..).collect())
            .unwrap_or_default()
    }

    pub fn subscribers(&self, topic: &str) -> impl Iterator<Item = &TaskId> {
        self.data_topics
            .get(topic)
            .into_iter()
            .flat_map(|t| t.subscribers.iter())
    }
}
