//! Stopping conditions for guided flight: fixed final time or a hyperplane
//! `nu^T x <= beta` in the five-state longitudinal space, with the
//! first-order covariance map from the nominal final time to the stopping time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat5, Vec5};

/// Smallest admissible `|nu^T f|` relative to `|nu| |f|`.
const TRANSVERSALITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TriggerSpec {
    Fixed { t_final: f64 },
    Hyperplane { nu: Vec5, beta: f64 },
}

impl TriggerSpec {
    /// Planet-relative speed threshold, the common velocity trigger.
    pub fn velocity(threshold: f64) -> Self {
        TriggerSpec::Hyperplane {
            nu: crate::linalg::unit(crate::linalg::IDX_V),
            beta: threshold,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TriggerSpec::Fixed { t_final } if !(t_final.is_finite() && *t_final > 0.0) => {
                Err(Error::Argument("fixed final time must be positive".into()))
            }
            TriggerSpec::Hyperplane { nu, .. } if nu.norm() == 0.0 => {
                Err(Error::Argument("trigger normal must be nonzero".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self, TriggerSpec::Fixed { .. })
    }

    /// Signed distance to the trigger surface; the trigger fires when this
    /// becomes non-positive.
    pub fn margin(&self, t: f64, x: &Vec5) -> f64 {
        match self {
            TriggerSpec::Fixed { t_final } => t_final - t,
            TriggerSpec::Hyperplane { nu, beta } => nu.dot(x) - beta,
        }
    }
}

/// Oblique projection `Z = I - f nu^T / (nu^T f)` with the drift it was built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriggerTransform {
    pub z: Mat5,
    pub drift: Vec5,
}

pub fn trigger_transform(nu: &Vec5, drift: &Vec5) -> Result<TriggerTransform> {
    let denom = nu.dot(drift);
    if denom.abs() <= TRANSVERSALITY_TOL * nu.norm() * drift.norm() || denom == 0.0 {
        return Err(Error::DegenerateTrigger(denom.abs()));
    }
    Ok(TriggerTransform {
        z: Mat5::identity() - drift * nu.transpose() / denom,
        drift: *drift,
    })
}

/// Transform for a trigger spec; the identity for fixed final time.
pub fn transform_for(spec: &TriggerSpec, drift: &Vec5) -> Result<TriggerTransform> {
    match spec {
        TriggerSpec::Fixed { .. } => Ok(TriggerTransform {
            z: Mat5::identity(),
            drift: *drift,
        }),
        TriggerSpec::Hyperplane { nu, .. } => trigger_transform(nu, drift),
    }
}

/// Weight on the fixed-time state that reproduces a weight on the
/// stopping-time state: `Z^T a`.
pub fn transformed_weight(a_at_trigger: &Vec5, transform: &TriggerTransform) -> Vec5 {
    transform.z.transpose() * a_at_trigger
}

/// Variance of the stopping time `(nu^T f)^-2 nu^T P nu`.
pub fn stopping_time_variance(nu: &Vec5, drift: &Vec5, p_final: &Mat5) -> Result<f64> {
    let denom = nu.dot(drift);
    if denom.abs() <= TRANSVERSALITY_TOL * nu.norm() * drift.norm() || denom == 0.0 {
        return Err(Error::DegenerateTrigger(denom.abs()));
    }
    Ok((nu.transpose() * p_final * nu)[(0, 0)] / (denom * denom))
}

/// Locates the first trigger crossing in a sampled trajectory by linear
/// interpolation of the margin between bracketing samples.
pub fn detect_crossing(times: &[f64], states: &[Vec5], spec: &TriggerSpec) -> Result<(f64, Vec5)> {
    if times.len() != states.len() || times.is_empty() {
        return Err(Error::Argument("trajectory times and states must match".into()));
    }
    if let TriggerSpec::Fixed { t_final } = spec {
        let (i, w) = crate::table::bracket(times, *t_final);
        if *t_final > *times.last().unwrap() + 1e-9 || *t_final < times[0] {
            return Err(Error::NotTriggered {
                final_value: t_final - times.last().unwrap(),
            });
        }
        let x = if times.len() == 1 {
            states[0]
        } else {
            states[i] + (states[i + 1] - states[i]) * w
        };
        return Ok((*t_final, x));
    }
    let m0 = spec.margin(times[0], &states[0]);
    if m0 <= 0.0 {
        return Err(Error::Argument(format!(
            "trajectory starts on the triggered side (margin {m0})"
        )));
    }
    let mut prev = m0;
    for i in 1..times.len() {
        let m = spec.margin(times[i], &states[i]);
        if m <= 0.0 {
            let w = prev / (prev - m);
            let t = times[i - 1] + w * (times[i] - times[i - 1]);
            let x = states[i - 1] + (states[i] - states[i - 1]) * w;
            return Ok((t, x));
        }
        prev = m;
    }
    Err(Error::NotTriggered { final_value: prev })
}
