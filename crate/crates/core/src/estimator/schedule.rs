use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Learning-rate schedules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    /// `lr0 · factor^(step / decay_steps)` with a continuous exponent.
    ExpDecay {
        lr0: f64,
        decay_steps: f64,
        factor: f64,
    },
    /// Linear interpolation from `lr0` to `lr_final` over `total_steps`,
    /// constant afterwards.
    Linear {
        lr0: f64,
        lr_final: f64,
        total_steps: usize,
    },
}

impl LrSchedule {
    pub const PAPER_IMAGE: Self = Self::ExpDecay {
        lr0: 4.56e-5,
        decay_steps: 15490.0,
        factor: 0.933,
    };

    pub const PAPER_VIDEO: Self = Self::Linear {
        lr0: 4.58e-4,
        lr_final: 4.58e-7,
        total_steps: 100_000,
    };

    pub fn lr_at<T: Scalar>(&self, step: usize) -> T {
        match *self {
            Self::ExpDecay {
                lr0,
                decay_steps,
                factor,
            } => {
                if step == 0 {
                    return T::lit(lr0);
                }
                T::lit(lr0 * factor.powf(step as f64 / decay_steps))
            }
            Self::Linear {
                lr0,
                lr_final,
                total_steps,
            } => {
                if step >= total_steps {
                    return T::lit(lr_final);
                }
                let frac = step as f64 / total_steps as f64;
                T::lit(lr0 + (lr_final - lr0) * frac)
            }
        }
    }

    pub fn initial(&self) -> f64 {
        match *self {
            Self::ExpDecay { lr0, .. } | Self::Linear { lr0, .. } => lr0,
        }
    }

    pub fn is_valid(&self) -> bool {
        match *self {
            Self::ExpDecay {
                lr0,
                decay_steps,
                factor,
            } => lr0 > 0.0 && decay_steps > 0.0 && factor > 0.0,
            Self::Linear {
                lr0,
                lr_final,
                total_steps,
            } => lr0 > 0.0 && lr_final > 0.0 && total_steps > 0,
        }
    }
}
