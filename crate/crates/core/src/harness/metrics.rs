use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::replay::{Mode, ReplayResult};
use crate::sim::Deployment;

/// State of one mode after one step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    pub mode: Mode,
    pub live_dags: usize,
    pub running_tasks: usize,
    pub cost: f64,
    /// Cost without the pause overhead.
    pub active_cost: f64,
    pub fragments: usize,
    pub paused: usize,
}

impl StepMetrics {
    pub fn of(step: usize, mode: Mode, live_dags: usize, dep: &Deployment) -> Self {
        StepMetrics {
            step,
            mode,
            live_dags,
            running_tasks: dep.active_task_count(),
            cost: dep.cost(),
            active_cost: dep.active_cost(),
            fragments: dep.fragments().len(),
            paused: dep.paused().len(),
        }
    }
}

/// Both modes side by side at one step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsSample {
    pub step: usize,
    pub running_tasks_default: usize,
    pub running_tasks_reuse: usize,
    pub cost_default: f64,
    pub cost_reuse: f64,
}

pub fn pair(default: &ReplayResult, reuse: &ReplayResult) -> Vec<MetricsSample> {
    default
        .steps
        .iter()
        .zip(&reuse.steps)
        .map(|(d, r)| MetricsSample {
            step: d.step,
            running_tasks_default: d.running_tasks,
            running_tasks_reuse: r.running_tasks,
            cost_default: d.cost,
            cost_reuse: r.cost,
        })
        .collect()
}

/// `1 - mean(reuse) / mean(default)` of running tasks over `steps`.
pub fn task_savings(samples: &[MetricsSample], steps: std::ops::Range<usize>) -> f64 {
    let window: Vec<&MetricsSample> = samples.iter().filter(|s| steps.contains(&s.step)).collect();
    let d: usize = window.iter().map(|s| s.running_tasks_default).sum();
    let r: usize = window.iter().map(|s| s.running_tasks_reuse).sum();
    if d == 0 {
        return 0.0;
    }
    1.0 - r as f64 / d as f64
}

pub fn metrics_csv<'a>(results: impl IntoIterator<Item = &'a ReplayResult>) -> String {
    let mut out = String::from("step,mode,running_tasks,cost,fragments,paused\n");
    for r in results {
        for s in &r.steps {
            writeln!(
                out,
                "{},{},{},{:.3},{},{}",
                s.step, s.mode, s.running_tasks, s.cost, s.fragments, s.paused
            )
            .unwrap();
        }
    }
    out
}

/// Share of running task-steps spent at each usage count.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReuseHistogram {
    pub fractions: BTreeMap<usize, f64>,
}

impl ReuseHistogram {
    /// Every (step, running task) pair weighs the same.
    pub fn from_usage(usage: &[Vec<usize>]) -> Self {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        let mut total = 0usize;
        for step in usage {
            for &k in step {
                *counts.entry(k).or_default() += 1;
                total += 1;
            }
        }
        let fractions = counts
            .into_iter()
            .map(|(k, n)| (k, n as f64 / total as f64))
            .collect();
        ReuseHistogram { fractions }
    }

    /// Buckets for tasks used more than once.
    pub fn reported(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.fractions
            .iter()
            .filter(|(k, _)| **k >= 2)
            .map(|(k, f)| (*k, *f))
    }

    pub fn shared_fraction(&self) -> f64 {
        self.reported().map(|(_, f)| f).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bucket_low,bucket_high,time_fraction\n");
        for (k, f) in self.reported() {
            writeln!(out, "{},{},{:.6}", k, k + 1, f).unwrap();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_weighs_task_steps() {
        let h = ReuseHistogram::from_usage(&[vec![1, 1, 2], vec![2, 3, 1, 1]]);
        assert!((h.fractions[&1] - 4.0 / 7.0).abs() < 1e-12);
        assert!((h.fractions[&2] - 2.0 / 7.0).abs() < 1e-12);
        assert_eq!(h.reported().count(), 2);
        assert_eq!(h.to_csv().lines().count(), 3);
    }

    #[test]
    fn disjoint_usage_reports_nothing() {
        let h = ReuseHistogram::from_usage(&[vec![1, 1], vec![1]]);
        assert_eq!(h.reported().count(), 0);
        assert_eq!(h.shared_fraction(), 0.0);
    }
}
