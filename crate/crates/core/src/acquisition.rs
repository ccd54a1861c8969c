//! Acquisition functions in minimization form, the confidence-bound
//! exploration schedule and the uncertainty-hyperrectangle volume.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AcquisitionError {
    #[error("standard deviation must be non-negative, got {0}")]
    NegativeStd(f64),
    #[error("beta must be positive, got {0}")]
    NonPositiveBeta(f64),
    #[error("iteration index must be >= 1, got {0}")]
    IterationZero(usize),
    #[error("uncertainty volume needs at least one objective")]
    NoObjectives,
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
}

/// Acquisition function used for every objective of the cheap problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AcquisitionKind {
    Ei,
    Lcb,
}

fn check(std: f64, beta: f64) -> Result<(), AcquisitionError> {
    if std < 0.0 || std.is_nan() {
        return Err(AcquisitionError::NegativeStd(std));
    }
    if beta <= 0.0 || beta.is_nan() {
        return Err(AcquisitionError::NonPositiveBeta(beta));
    }
    Ok(())
}

pub fn ucb(mean: f64, std: f64, beta: f64) -> Result<f64, AcquisitionError> {
    check(std, beta)?;
    Ok(mean + beta.sqrt() * std)
}

pub fn lcb(mean: f64, std: f64, beta: f64) -> Result<f64, AcquisitionError> {
    check(std, beta)?;
    Ok(mean - beta.sqrt() * std)
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// Expected improvement below the incumbent `tau`:
/// `sigma * (a * Phi(a) + phi(a))` with `a = (tau - mean) / sigma`.
/// At `sigma = 0` this is `max(tau - mean, 0)`.
pub fn ei(mean: f64, std: f64, tau: f64) -> f64 {
    if std <= 0.0 || std.is_nan() {
        return (tau - mean).max(0.0);
    }
    let a = (tau - mean) / std;
    (std * (a * normal_cdf(a) + normal_pdf(a))).max(0.0)
}

/// Natural logarithm of [`ei`], accurate far into the tail where `ei`
/// itself underflows to zero. Returns `-inf` when the improvement is zero.
pub fn log_ei(mean: f64, std: f64, tau: f64) -> f64 {
    if std <= 0.0 || std.is_nan() {
        return (tau - mean).max(0.0).ln();
    }
    let a = (tau - mean) / std;
    let log_h = if a > -10.0 {
        (a * normal_cdf(a) + normal_pdf(a)).ln()
    } else {
        // a Phi(a) + phi(a) = phi(a) (1/a^2 - 3/a^4 + 15/a^6 - 105/a^8 + 945/a^10 ...)
        let r = 1.0 / (a * a);
        let series = r * (1.0 - r * (3.0 - r * (15.0 - r * (105.0 - r * 945.0))));
        -0.5 * a * a - 0.5 * (2.0 * PI).ln() + series.ln()
    };
    std.ln() + log_h
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BetaMode {
    Adaptive,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaSchedule {
    pub dimension: usize,
    pub delta: f64,
    pub mode: BetaMode,
}

impl BetaSchedule {
    pub fn adaptive(dimension: usize, delta: f64) -> Result<Self, AcquisitionError> {
        let s = Self {
            dimension,
            delta,
            mode: BetaMode::Adaptive,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn fixed(value: f64) -> Result<Self, AcquisitionError> {
        let s = Self {
            dimension: 1,
            delta: 0.1,
            mode: BetaMode::Fixed(value),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), AcquisitionError> {
        match self.mode {
            BetaMode::Fixed(v) if !(v > 0.0 && v.is_finite()) => {
                Err(AcquisitionError::NonPositiveBeta(v))
            }
            BetaMode::Adaptive if self.dimension == 0 => Err(AcquisitionError::InvalidSchedule(
                "dimension must be >= 1".into(),
            )),
            BetaMode::Adaptive if !(self.delta > 0.0 && self.delta < 1.0) => Err(
                AcquisitionError::InvalidSchedule(format!("delta {} not in (0, 1)", self.delta)),
            ),
            _ => Ok(()),
        }
    }

    /// `2 log(d t^2 pi^2 / (6 delta))` in adaptive mode.
    pub fn beta_t(&self, t: usize) -> Result<f64, AcquisitionError> {
        if t < 1 {
            return Err(AcquisitionError::IterationZero(t));
        }
        Ok(match self.mode {
            BetaMode::Fixed(v) => v,
            BetaMode::Adaptive => {
                let t = t as f64;
                2.0 * (self.dimension as f64 * t * t * PI * PI / (6.0 * self.delta)).ln()
            }
        })
    }
}

/// Volume of the box with sides `[lcb_i, ucb_i]`, i.e. `prod(2 sqrt(beta) sigma_i)`.
pub fn uncertainty_volume(stds: &[f64], beta: f64) -> Result<f64, AcquisitionError> {
    if stds.is_empty() {
        return Err(AcquisitionError::NoObjectives);
    }
    let mut volume = 1.0;
    for &s in stds {
        check(s, beta)?;
        volume *= 2.0 * beta.sqrt() * s;
    }
    Ok(volume)
}
