//! Soft Dice, one-sided focal and log-cosh Dice + focal losses with analytic
//! gradients with respect to the predicted probabilities.
//!
//! The focal term only accumulates over positive labels (`y = 1`); negatives
//! contribute nothing. This differs from the usual two-sided focal loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossParams {
    /// Focal modulating exponent.
    pub gamma: f64,
    /// Added to numerator and denominator of the Dice ratio.
    pub smooth: f64,
    /// Probabilities are clamped to `[epsilon, 1 - epsilon]` before logs.
    pub epsilon: f64,
}

impl Default for LossParams {
    fn default() -> Self {
        Self {
            gamma: 2.0,
            smooth: 1.0,
            epsilon: 1e-7,
        }
    }
}

impl LossParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("gamma {} < 0", self.gamma)));
        }
        if !(self.smooth > 0.0 && self.smooth.is_finite()) {
            return Err(Error::InvalidParameter(format!("smooth {} <= 0", self.smooth)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(Error::InvalidParameter(format!(
                "epsilon {} outside (0, 0.5)",
                self.epsilon
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Dice,
    Focal,
    LogCoshDiceFocal,
}

fn check_inputs(y: &[f64], p: &[f64], params: &LossParams) -> Result<()> {
    params.validate()?;
    if y.len() != p.len() {
        return Err(Error::ShapeMismatch(format!(
            "labels have length {}, predictions {}",
            y.len(),
            p.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::InvalidParameter("empty input".into()));
    }
    if let Some(v) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidParameter(format!("label {v} is not binary")));
    }
    if let Some(v) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidParameter(format!("probability {v} outside [0, 1]")));
    }
    Ok(())
}

fn dice_sums(y: &[f64], p: &[f64]) -> (f64, f64) {
    let inter: f64 = y.iter().zip(p).map(|(a, b)| a * b).sum();
    let total: f64 = y.iter().sum::<f64>() + p.iter().sum::<f64>();
    (inter, total)
}

pub fn dice_loss(y: &[f64], p: &[f64], params: &LossParams) -> Result<f64> {
    check_inputs(y, p, params)?;
    let (inter, total) = dice_sums(y, p);
    Ok(1.0 - (2.0 * inter + params.smooth) / (total + params.smooth))
}

pub fn focal_loss(y: &[f64], p: &[f64], params: &LossParams) -> Result<f64> {
    check_inputs(y, p, params)?;
    let eps = params.epsilon;
    let sum: f64 = y
        .iter()
        .zip(p)
        .filter(|(&yi, _)| yi == 1.0)
        .map(|(_, &pi)| {
            let pc = pi.clamp(eps, 1.0 - eps);
            (1.0 - pc).powf(params.gamma) * pc.ln()
        })
        .sum();
    Ok(-sum / y.len() as f64)
}

pub fn log_cosh_dice_focal(y: &[f64], p: &[f64], params: &LossParams) -> Result<f64> {
    let d = dice_loss(y, p, params)?;
    Ok(d.cosh().ln() + focal_loss(y, p, params)?)
}

pub fn loss_value(kind: LossKind, y: &[f64], p: &[f64], params: &LossParams) -> Result<f64> {
    match kind {
        LossKind::Dice => dice_loss(y, p, params),
        LossKind::Focal => focal_loss(y, p, params),
        LossKind::LogCoshDiceFocal => log_cosh_dice_focal(y, p, params),
    }
}

fn dice_gradient(y: &[f64], p: &[f64], params: &LossParams) -> Vec<f64> {
    let (inter, total) = dice_sums(y, p);
    let num = 2.0 * inter + params.smooth;
    let den = total + params.smooth;
    y.iter()
        .map(|&yi| -(2.0 * yi * den - num) / (den * den))
        .collect()
}

fn focal_gradient(y: &[f64], p: &[f64], params: &LossParams) -> Vec<f64> {
    let n = y.len() as f64;
    let g = params.gamma;
    y.iter()
        .zip(p)
        .map(|(&yi, &pi)| {
            if yi == 0.0 {
                return 0.0;
            }
            let q = 1.0 - pi;
            let modulating = if g == 0.0 {
                0.0
            } else {
                -g * q.powf(g - 1.0) * pi.ln()
            };
            -(modulating + q.powf(g) / pi) / n
        })
        .collect()
}

/// Analytic `d loss / d p_i`.
///
/// Kinds containing the focal term require every probability strictly
/// inside `(epsilon, 1 - epsilon)`, where the clamp is inactive.
pub fn loss_gradient(kind: LossKind, y: &[f64], p: &[f64], params: &LossParams) -> Result<Vec<f64>> {
    check_inputs(y, p, params)?;
    if kind != LossKind::Dice {
        let eps = params.epsilon;
        if let Some(v) = p.iter().find(|&&v| !(v > eps && v < 1.0 - eps)) {
            return Err(Error::InvalidParameter(format!(
                "probability {v} on the clamp boundary; gradient undefined"
            )));
        }
    }
    Ok(match kind {
        LossKind::Dice => dice_gradient(y, p, params),
        LossKind::Focal => focal_gradient(y, p, params),
        LossKind::LogCoshDiceFocal => {
            let d = dice_loss(y, p, params)?;
            let scale = d.tanh();
            dice_gradient(y, p, params)
                .into_iter()
                .zip(focal_gradient(y, p, params))
                .map(|(gd, gf)| scale * gd + gf)
                .collect()
        }
    })
}
