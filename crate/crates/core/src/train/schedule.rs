//! Cyclic one-cycle learning rate and momentum schedule.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    /// Peak learning rate of cycle 0; halved each later cycle.
    pub max_lr: f64,
    /// Momentum at the plateau.
    pub beta1_min: f64,
    /// Momentum at the start and end of each cycle.
    pub beta1_max: f64,
    pub warmup: f64,
    pub hold: f64,
    pub warmdown: f64,
    /// Epochs in cycle 0; doubled each later cycle.
    pub base_epochs: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            max_lr: 0.012,
            beta1_min: 0.92,
            beta1_max: 0.98,
            warmup: 0.1,
            hold: 0.4,
            warmdown: 0.5,
            base_epochs: 100,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.warmup, self.hold, self.warmdown];
        if parts.iter().any(|p| !(0.0..=1.0).contains(p)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("phase fractions {parts:?} must be in [0, 1] and sum to 1")));
        }
        if !(self.max_lr > 0.0) || !(0.0..1.0).contains(&self.beta1_min) || !(0.0..1.0).contains(&self.beta1_max) {
            return Err(Error::Config("learning rate must be positive and momenta in [0, 1)".into()));
        }
        if self.base_epochs == 0 {
            return Err(Error::Config("cycle 0 needs at least one epoch".into()));
        }
        Ok(())
    }

    pub fn cycle_max_lr(&self, cycle: usize) -> f64 {
        self.max_lr / 2f64.powi(cycle as i32)
    }

    pub fn cycle_epochs(&self, cycle: usize) -> usize {
        self.base_epochs << cycle
    }

    /// Learning rate and β₁ at `step` of a cycle lasting `total` steps.
    pub fn at(&self, step: usize, total: usize, cycle: usize) -> Result<(f64, f64)> {
        if step >= total {
            return Err(Error::Domain(format!("step {step} outside a cycle of {total}")));
        }
        let peak = self.cycle_max_lr(cycle);
        let (lo, hi) = (self.beta1_min, self.beta1_max);
        let t = step as f64 / total as f64;
        // rise: 0 -> 1 along a half cosine
        let rise = |u: f64| (1.0 - (std::f64::consts::PI * u).cos()) / 2.0;
        let level = if t < self.warmup {
            rise(t / self.warmup)
        } else if t < self.warmup + self.hold {
            1.0
        } else {
            1.0 - rise((t - self.warmup - self.hold) / self.warmdown)
        };
        // pin the endpoints so plateau and start values are exact
        let beta1 = if level == 1.0 {
            lo
        } else if level == 0.0 {
            hi
        } else {
            hi - (hi - lo) * level
        };
        Ok((peak * level, beta1))
    }
}

/// Schedule value with the default configuration.
pub fn schedule_at(step: usize, total: usize, cycle: usize) -> Result<(f64, f64)> {
    ScheduleConfig::default().at(step, total, cycle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn phase_boundaries() {
        assert_eq!(schedule_at(100, 1000, 0).unwrap(), (0.012, 0.92));
        assert_eq!(schedule_at(0, 1000, 0).unwrap(), (0.0, 0.98));
        assert_eq!(schedule_at(300, 1000, 1).unwrap(), (0.006, 0.92));
        assert_eq!(schedule_at(499, 1000, 2).unwrap().0, 0.003);
        let (lr, b) = schedule_at(999, 1000, 0).unwrap();
        assert!(lr < 1e-6 && (b - 0.98).abs() < 1e-6);
        assert!(schedule_at(1000, 1000, 0).is_err());
    }

    #[test]
    fn warmdown_midpoint_is_half() {
        let (lr, b) = schedule_at(750, 1000, 0).unwrap();
        assert!((lr - 0.006).abs() < 1e-15);
        assert!((b - 0.95).abs() < 1e-12);
    }

    #[test]
    fn cycle_lengths() {
        let c = ScheduleConfig::default();
        assert_eq!([c.cycle_epochs(0), c.cycle_epochs(1), c.cycle_epochs(3)], [100, 200, 800]);
        assert!(ScheduleConfig { hold: 0.5, ..c }.validate().is_err());
    }

    proptest! {
        #[test]
        fn continuous_within_cycle(total in 50usize..5000, cycle in 0usize..4) {
            let c = ScheduleConfig::default();
            let peak = c.cycle_max_lr(cycle);
            // steepest part is the middle of the warmup half cosine
            let bound = std::f64::consts::PI / 2.0 / (c.warmup * total as f64) * 1.0001;
            let mut prev = c.at(0, total, cycle).unwrap();
            for s in 1..total {
                let cur = c.at(s, total, cycle).unwrap();
                prop_assert!((cur.0 - prev.0).abs() <= peak * bound);
                prop_assert!((cur.1 - prev.1).abs() <= (c.beta1_max - c.beta1_min) * bound);
                prop_assert!(cur.0 >= 0.0 && cur.0 <= peak);
                prev = cur;
            }
        }
    }
}
