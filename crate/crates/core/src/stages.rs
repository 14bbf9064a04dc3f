//! Critical points of a fitted logistic curve and three-stage classification.
//!
//! The two cut-off points are the non-trivial zeros of the curve's third
//! derivative, at `x_mid ∓ ln(2 + √3) / k`, where the curve reaches
//! `A / (3 + √3)` and `A / (3 - √3)`. Countries left of the left cut-off
//! are in the initial stage, right of the right cut-off in the final stage,
//! and in the acceleration stage otherwise. Both cut-offs belong to the
//! acceleration stage.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::ingest::{Code, CountryObservation};
use crate::sigmoid_fit::{LogisticFit, LogisticParams};

const SQRT_3: f64 = 1.732_050_807_568_877_2;

/// `ln(2 + √3)`: distance from the inflection to either cut-off when `k = 1`.
pub const CUTOFF_OFFSET: f64 = 1.316_957_896_924_816_6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StageError {
    #[error("critical points need A > 0 and k > 0, got A = {asymptote}, k = {rate}")]
    InvalidParams { asymptote: f64, rate: f64 },
    #[error("fit did not converge")]
    NotConverged,
}

impl StageError {
    pub fn kind(&self) -> &'static str {
        match self {
            StageError::InvalidParams { .. } => "InvalidParams",
            StageError::NotConverged => "NotConverged",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalPoints {
    pub x_left: f64,
    pub y_left: f64,
    pub x_mid: f64,
    pub y_mid: f64,
    pub x_right: f64,
    pub y_right: f64,
}

pub fn critical_points(params: &LogisticParams) -> Result<CriticalPoints, StageError> {
    let LogisticParams {
        asymptote: a,
        rate: k,
        midpoint: m,
    } = *params;
    if !(a > 0.0 && k > 0.0 && a.is_finite() && k.is_finite() && m.is_finite()) {
        return Err(StageError::InvalidParams { asymptote: a, rate: k });
    }
    let half_width = CUTOFF_OFFSET / k;
    Ok(CriticalPoints {
        x_left: m - half_width,
        y_left: a / (3.0 + SQRT_3),
        x_mid: m,
        y_mid: a / 2.0,
        x_right: m + half_width,
        y_right: a / (3.0 - SQRT_3),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Initial,
    Acceleration,
    Final,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Initial, Stage::Acceleration, Stage::Final];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Initial => "initial",
            Stage::Acceleration => "acceleration",
            Stage::Final => "final",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

pub fn classify(x: f64, cp: &CriticalPoints) -> Stage {
    if x < cp.x_left {
        Stage::Initial
    } else if x > cp.x_right {
        Stage::Final
    } else {
        Stage::Acceleration
    }
}

/// One value per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PerStage<T> {
    pub initial: T,
    pub acceleration: T,
    #[serde(rename = "final")]
    pub final_: T,
}

impl<T> PerStage<T> {
    pub fn from_fn(mut f: impl FnMut(Stage) -> T) -> Self {
        PerStage {
            initial: f(Stage::Initial),
            acceleration: f(Stage::Acceleration),
            final_: f(Stage::Final),
        }
    }

    pub fn get(&self, stage: Stage) -> &T {
        match stage {
            Stage::Initial => &self.initial,
            Stage::Acceleration => &self.acceleration,
            Stage::Final => &self.final_,
        }
    }

    pub fn get_mut(&mut self, stage: Stage) -> &mut T {
        match stage {
            Stage::Initial => &mut self.initial,
            Stage::Acceleration => &mut self.acceleration,
            Stage::Final => &mut self.final_,
        }
    }
}

impl PerStage<usize> {
    pub fn total(&self) -> usize {
        self.initial + self.acceleration + self.final_
    }

    /// Share of each stage. All zero for an empty partition.
    pub fn proportions(&self) -> [f64; 3] {
        let n = self.total();
        if n == 0 {
            return [0.0; 3];
        }
        let n = n as f64;
        [
            self.initial as f64 / n,
            self.acceleration as f64 / n,
            self.final_ as f64 / n,
        ]
    }
}

pub type StageCounts = PerStage<usize>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageAssignment {
    pub country: Code,
    pub year: i32,
    pub x: f64,
    pub stage: Stage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageSummary {
    pub counts: StageCounts,
    pub assignments: Vec<StageAssignment>,
}

/// Classifies every observation by its log GDP against the fitted curve.
pub fn stage_counts(panel: &[CountryObservation], fit: &LogisticFit) -> Result<StageSummary, StageError> {
    if !fit.converged {
        return Err(StageError::NotConverged);
    }
    let cp = critical_points(&fit.params)?;
    Ok(assign(panel, &cp))
}

pub fn assign(panel: &[CountryObservation], cp: &CriticalPoints) -> StageSummary {
    let mut counts = StageCounts::default();
    let assignments = panel
        .iter()
        .map(|obs| {
            let stage = classify(obs.log_gdp, cp);
            *counts.get_mut(stage) += 1;
            StageAssignment {
                country: obs.country.clone(),
                year: obs.year,
                x: obs.log_gdp,
                stage,
            }
        })
        .collect();
    StageSummary { counts, assignments }
}
