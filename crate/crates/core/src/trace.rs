//! Per-iteration convergence records shared by the Wahba solvers, the iLQR
//! solver, and the benchmark runners.

use serde::Serialize;

/// One solver iteration. `value` is whatever the emitting solver tracks:
/// rotation error to a reference solution for Wahba, total trajectory cost
/// for iLQR. `damped` marks iterations where the step had to be regularized
/// to stay solvable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub value: f64,
    pub wall_time_s: f64,
    pub damped: bool,
}

/// Full history of a single solver run. Record 0 is the starting point
/// before any step is taken.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ConvergenceTrace {
    pub records: Vec<TraceRecord>,
    pub converged: bool,
}

impl ConvergenceTrace {
    pub fn new() -> Self {
        ConvergenceTrace { records: Vec::new(), converged: false }
    }

    pub fn push(&mut self, iteration: usize, value: f64, wall_time_s: f64, damped: bool) {
        self.records.push(TraceRecord { iteration, value, wall_time_s, damped });
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn final_value(&self) -> Option<f64> {
        self.records.last().map(|r| r.value)
    }

    /// Value at iteration `k`, holding the last recorded value for runs that
    /// stopped early. This is the padding rule used when aggregating runs of
    /// different lengths at a common iteration index.
    pub fn value_at_or_last(&self, k: usize) -> Option<f64> {
        if self.records.is_empty() {
            return None;
        }
        let idx = k.min(self.records.len() - 1);
        Some(self.records[idx].value)
    }
}
