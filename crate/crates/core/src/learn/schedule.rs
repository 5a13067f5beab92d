use serde::{Deserialize, Serialize};

/// Linear anneal from `start` to `end` over the first `fraction` of a run,
/// constant afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearSchedule {
    pub start: f64,
    pub end: f64,
    pub fraction: f64,
}

impl LinearSchedule {
    /// Value at `step` of `total`.
    pub fn value(&self, step: u64, total: u64) -> f64 {
        let horizon = self.fraction * total as f64;
        if horizon <= 0.0 {
            return self.end;
        }
        if step as f64 >= horizon {
            return self.end;
        }
        let t = step as f64 / horizon;
        self.start + t * (self.end - self.start)
    }
}
