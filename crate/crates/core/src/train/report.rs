use std::fmt::Write as _;
use std::time::Duration;

use crate::model::ModelParams;

/// One logged number. The CSV form is `restart,epoch,split,metric,value`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub restart: usize,
    pub epoch: usize,
    pub split: &'static str,
    pub metric: &'static str,
    pub value: f64,
}

/// Outcome of one restart.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub restart: usize,
    pub epochs: usize,
    /// Selection score: training error (QA) or validation cost (LM).
    /// Infinite when the run was aborted.
    pub score: f64,
    pub aborted: Option<String>,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub rows: Vec<MetricRow>,
    pub runs: Vec<RunSummary>,
    pub selected: usize,
    pub params: ModelParams,
    pub wall_clock: Duration,
}

impl TrainReport {
    pub fn selected_run(&self) -> &RunSummary {
        &self.runs[self.selected]
    }

    /// Rows of one restart, one split and one metric, in epoch order.
    pub fn series(&self, restart: usize, split: &str, metric: &str) -> Vec<(usize, f64)> {
        self.rows
            .iter()
            .filter(|r| r.restart == restart && r.split == split && r.metric == metric)
            .map(|r| (r.epoch, r.value))
            .collect()
    }

    /// Training curves. Deterministic for a given seed: no timings.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("restart,epoch,split,metric,value\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{},{}", r.restart, r.epoch, r.split, r.metric, r.value);
        }
        out
    }
}
