//! Threshold selection from predictions of the supply and per-site demand.
//!
//! Predictions pick a target fraction per site the way the offline optimum
//! would; a distrust level `lambda` then confines each threshold to a band
//! between `lambda`-scaled and `tau(lambda)`-scaled aggressiveness.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{GammaVector, Instance};
use crate::policies::{threshold_fraction, Gpa};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdviceError {
    #[error("lambda {0} must lie in (0, 1/3]")]
    LambdaOutOfRange(f64),
    #[error("predictions cover {found} sites, instance has {expected}")]
    PredictionLength { expected: usize, found: usize },
    #[error("prediction {what} is negative or not finite: {value}")]
    InvalidPrediction { what: String, value: f64 },
    #[error("prediction for unknown site {0}")]
    UnknownSite(usize),
    #[error("predictions file: {0}")]
    Json(String),
}

/// Largest admissible distrust level; it recovers the advice-free thresholds.
pub const LAMBDA_MAX: f64 = 1.0 / 3.0;

fn check_lambda(lambda: f64) -> Result<(), AdviceError> {
    if lambda > 0.0 && lambda <= LAMBDA_MAX {
        Ok(())
    } else {
        Err(AdviceError::LambdaOutOfRange(lambda))
    }
}

/// `tau = (sqrt(1 + lambda) - sqrt(lambda))^2`, the unique root in `[lambda, 1)`
/// of `(1 - tau)^2 / (4 tau) = lambda`.
pub fn tau_of_lambda(lambda: f64) -> Result<f64, AdviceError> {
    check_lambda(lambda)?;
    let root = (1.0 + lambda).sqrt() - lambda.sqrt();
    Ok(root * root)
}

/// Predicted supply and per-site total demand (canonical site order), with
/// the realized error against the instance they were made for.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Predictions {
    pub s_hat: f64,
    pub d_hat: Vec<f64>,
    pub eta: f64,
}

impl Predictions {
    pub fn new(instance: &Instance, s_hat: f64, d_hat: Vec<f64>) -> Result<Self, AdviceError> {
        if d_hat.len() != instance.n() {
            return Err(AdviceError::PredictionLength {
                expected: instance.n(),
                found: d_hat.len(),
            });
        }
        let bad = |what: &str, value: f64| AdviceError::InvalidPrediction {
            what: what.into(),
            value,
        };
        if !(s_hat >= 0.0) || !s_hat.is_finite() {
            return Err(bad("s_hat", s_hat));
        }
        if let Some(&v) = d_hat.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(bad("d_hat", v));
        }
        let eta = prediction_error(instance, s_hat, &d_hat);
        Ok(Self { s_hat, d_hat, eta })
    }

    /// Exact predictions: `eta = 0`.
    pub fn perfect(instance: &Instance) -> Self {
        let d_hat = instance.total_demands().iter().map(|&d| d as f64).collect();
        Self::new(instance, instance.supply() as f64, d_hat).expect("exact values are valid")
    }

    /// Reads `{"s_hat": .., "d_hat": ..}` where `d_hat` is either a list in
    /// canonical (unit-cost) site order or an object keyed by site id.
    pub fn from_json(instance: &Instance, text: &str) -> Result<Self, AdviceError> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum DemandHat {
            Ordered(Vec<f64>),
            ById(BTreeMap<String, f64>),
        }
        #[derive(Deserialize)]
        struct File {
            s_hat: f64,
            d_hat: DemandHat,
        }
        let file: File =
            serde_json::from_str(text).map_err(|e| AdviceError::Json(e.to_string()))?;
        let d_hat = match file.d_hat {
            DemandHat::Ordered(v) => v,
            DemandHat::ById(map) => {
                let mut out = vec![None; instance.n()];
                for (key, value) in map {
                    let id: usize = key
                        .parse()
                        .map_err(|_| AdviceError::Json(format!("bad site id {key:?}")))?;
                    let idx = instance
                        .sites()
                        .iter()
                        .position(|s| s.site_id == id)
                        .ok_or(AdviceError::UnknownSite(id))?;
                    out[idx] = Some(value);
                }
                let found = out.iter().filter(|v| v.is_some()).count();
                if found != instance.n() {
                    return Err(AdviceError::PredictionLength {
                        expected: instance.n(),
                        found,
                    });
                }
                out.into_iter().map(|v| v.unwrap()).collect()
            }
        };
        Self::new(instance, file.s_hat, d_hat)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("predictions serialize")
    }
}

/// `|s - s_hat| + sum_i |D_i - D_hat_i|`.
pub fn prediction_error(instance: &Instance, s_hat: f64, d_hat: &[f64]) -> f64 {
    let supply = (instance.supply() as f64 - s_hat).abs();
    let demand: f64 = instance
        .total_demands()
        .iter()
        .zip(d_hat)
        .map(|(&d, &h)| (d as f64 - h).abs())
        .sum();
    supply + demand
}

/// Offline-style pivot computed from predictions alone.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedPivot {
    pub net_hat: Vec<f64>,
    /// 1-based pivotal site.
    pub index: usize,
    pub value: f64,
    /// Fractions before banding: 1 before the pivot, `value` at it, 0 after.
    pub fractions: Vec<f64>,
}

pub fn predicted_fractions(instance: &Instance, predictions: &Predictions) -> PredictedPivot {
    let net_hat: Vec<f64> = instance
        .sites()
        .iter()
        .zip(&predictions.d_hat)
        .map(|(site, &d)| (d - site.b as f64).max(0.0))
        .collect();
    let n = net_hat.len();
    let total: f64 = net_hat.iter().sum();
    let s_hat = predictions.s_hat;

    let (index, value) = if s_hat >= total {
        (n, 1.0)
    } else {
        let mut before = 0.0;
        let mut found = (n, 1.0);
        for (i, &nh) in net_hat.iter().enumerate() {
            if before + nh >= s_hat {
                let value = if nh == 0.0 {
                    1.0
                } else {
                    ((s_hat - before).max(0.0) / nh).min(1.0)
                };
                found = (i + 1, value);
                break;
            }
            before += nh;
        }
        found
    };

    let fractions = (1..=n)
        .map(|i| match i.cmp(&index) {
            std::cmp::Ordering::Less => 1.0,
            std::cmp::Ordering::Equal => value,
            std::cmp::Ordering::Greater => 0.0,
        })
        .collect();
    PredictedPivot {
        net_hat,
        index,
        value,
        fractions,
    }
}

/// Per-site `(lower, upper)` threshold band for distrust level `lambda`.
pub fn threshold_band(instance: &Instance, lambda: f64) -> Result<Vec<(f64, f64)>, AdviceError> {
    let tau = tau_of_lambda(lambda)?;
    let p = instance.penalty();
    Ok(instance
        .sites()
        .iter()
        .map(|s| {
            (
                threshold_fraction(lambda, s, p),
                threshold_fraction(tau, s, p),
            )
        })
        .collect())
}

pub fn gamma_from_predictions(
    instance: &Instance,
    predictions: &Predictions,
    lambda: f64,
) -> Result<GammaVector, AdviceError> {
    let band = threshold_band(instance, lambda)?;
    let pivot = predicted_fractions(instance, predictions);
    let values = band
        .iter()
        .enumerate()
        .map(|(i, &(lower, upper))| match (i + 1).cmp(&pivot.index) {
            std::cmp::Ordering::Less => upper,
            std::cmp::Ordering::Equal => upper.min(pivot.value.max(lower)),
            std::cmp::Ordering::Greater => lower,
        })
        .collect();
    Ok(GammaVector::new(values).expect("band values lie in [0, 1]"))
}

/// Threshold policy with prediction-guided thresholds.
pub fn la_gpa(
    instance: &Instance,
    predictions: &Predictions,
    lambda: f64,
) -> Result<Gpa, AdviceError> {
    let gamma = gamma_from_predictions(instance, predictions, lambda)?;
    Ok(Gpa::new(gamma).with_label("la-gpa"))
}

/// Perturbs `s` and every `D_i` so the realized error equals `target_eta`.
///
/// Each coordinate gets a random share of the error budget, proportional to
/// `u * max(x, 1)` with `u ~ U(0, 1)`, and a random sign. A downward move
/// that would cross zero is taken upward instead, so clamping never eats
/// into the budget.
pub fn make_predictions<R: Rng + ?Sized>(
    instance: &Instance,
    target_eta: f64,
    rng: &mut R,
) -> Predictions {
    let truth: Vec<f64> = std::iter::once(instance.supply() as f64)
        .chain(instance.total_demands().iter().map(|&d| d as f64))
        .collect();
    if !(target_eta > 0.0) {
        return Predictions::perfect(instance);
    }
    let draws: Vec<(f64, bool)> = truth
        .iter()
        .map(|&x| (rng.random::<f64>() * x.max(1.0), rng.random_bool(0.5)))
        .collect();
    let mut mass: f64 = draws.iter().map(|d| d.0).sum();
    if mass == 0.0 {
        mass = 1.0;
    }
    let perturbed: Vec<f64> = truth
        .iter()
        .zip(&draws)
        .map(|(&x, &(share, down))| {
            let delta = target_eta * share / mass;
            if down && x - delta >= 0.0 {
                x - delta
            } else {
                x + delta
            }
        })
        .collect();
    let s_hat = perturbed[0];
    let d_hat = perturbed[1..].to_vec();
    Predictions::new(instance, s_hat, d_hat).expect("perturbed values stay non-negative")
}
