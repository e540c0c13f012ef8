//! Stepsize schedules: constant, alpha/(k+h), and alpha/(k+h)^xi.

use crate::error::{Error, Result};
use crate::linalg::kahan_sum;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum StepsizeSchedule {
    #[serde(rename = "const")]
    Constant { alpha: f64 },
    #[serde(rename = "linear")]
    Linear { alpha: f64, h: f64 },
    #[serde(rename = "poly")]
    Polynomial { alpha: f64, h: f64, xi: f64 },
}

impl StepsizeSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            StepsizeSchedule::Constant { alpha } => alpha > 0.0,
            StepsizeSchedule::Linear { alpha, h } => alpha > 0.0 && h > 0.0,
            StepsizeSchedule::Polynomial { alpha, h, xi } => {
                alpha > 0.0 && h > 0.0 && (0.0..1.0).contains(&xi) && xi > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::StepsizeOutOfRange(format!("{self:?}")))
        }
    }

    pub fn alpha(&self, k: usize) -> f64 {
        match *self {
            StepsizeSchedule::Constant { alpha } => alpha,
            StepsizeSchedule::Linear { alpha, h } => alpha / (k as f64 + h),
            StepsizeSchedule::Polynomial { alpha, h, xi } => alpha / (k as f64 + h).powf(xi),
        }
    }

    /// Partial sum alpha_{i,j} = sum_{k=i}^{j} alpha_k (inclusive; 0 when i > j),
    /// Kahan-compensated.
    pub fn partial_sum(&self, i: usize, j_incl: usize) -> f64 {
        if i > j_incl {
            return 0.0;
        }
        kahan_sum((i..=j_incl).map(|k| self.alpha(k)))
    }
}
