use serde::{Deserialize, Serialize};

/// Piecewise-constant exponential decay: `initial · decay^⌊step / interval⌋`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub initial: f64,
    pub decay: f64,
    pub interval: usize,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            initial: 0.02,
            decay: 0.9,
            interval: 500,
        }
    }
}

impl LrSchedule {
    pub fn lr_at(&self, step: usize) -> f64 {
        self.initial * self.decay.powi((step / self.interval.max(1)) as i32)
    }
}

pub fn lr_at(schedule: &LrSchedule, step: usize) -> f64 {
    schedule.lr_at(step)
}
