use crate::error::{Error, Result};

/// Step-size schedule `alpha_k`, indexed from `k = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    /// `base / sqrt(k)`
    InverseSqrt {
        base: f64,
    },
    Constant {
        base: f64,
    },
    /// `base * k^(-beta)` with `beta` in (0.5, 1)
    InversePower {
        base: f64,
        beta: f64,
    },
}

impl StepSchedule {
    pub fn base(&self) -> f64 {
        match *self {
            StepSchedule::InverseSqrt { base }
            | StepSchedule::Constant { base }
            | StepSchedule::InversePower { base, .. } => base,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let base = self.base();
        if !(base.is_finite() && base > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "step-size base must be > 0, got {base}"
            )));
        }
        if let StepSchedule::InversePower { beta, .. } = *self {
            if !(beta > 0.5 && beta < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "beta must lie in (0.5, 1), got {beta}"
                )));
            }
        }
        Ok(())
    }

    pub fn alpha(&self, k: u64) -> Result<f64> {
        if k == 0 {
            return Err(Error::InvalidInput("iterations are counted from 1".into()));
        }
        let k = k as f64;
        Ok(match *self {
            StepSchedule::InverseSqrt { base } => base / k.sqrt(),
            StepSchedule::Constant { base } => base,
            StepSchedule::InversePower { base, beta } => base * k.powf(-beta),
        })
    }
}
