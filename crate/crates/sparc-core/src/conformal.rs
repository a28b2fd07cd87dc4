//! Split conformal calibration of predictor errors.
//!
//! Nonconformity scores are per-axis absolute prediction errors in velocity
//! units, pooled per step (default) or reduced to a per-trajectory supremum.
//! The calibrated radius for failure tolerance `alpha` is the r-th smallest
//! score with `r = ceil((n+1)(1-alpha))`, i.e. the `1-alpha` quantile of the
//! scores with infinity appended; it is infinite when the calibration set is
//! too small. Finite radii scale by the control period into axis-aligned
//! prediction regions for the pedestrian's next position.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Episode;
use crate::predict::{MlpModel, ModelError};
use crate::vec2::Vec2;

#[derive(Debug, Error)]
pub enum ConformalError {
    #[error("alpha must be in [0, 1], got {0}")]
    AlphaOutOfRange(f64),
    #[error("calibration set is empty")]
    EmptyCalibrationSet,
    #[error("nonconformity scores must be finite and >= 0, got {0}")]
    InvalidScore(f64),
    #[error("prediction region is unbounded: radius is infinite (reduce alpha or enlarge the calibration set)")]
    UnboundedRadius,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// How per-step errors are pooled into calibration scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// Every step contributes one score per axis.
    PerStep,
    /// One score per trajectory: the per-axis maximum over its steps.
    SupPerTrajectory,
}

impl std::str::FromStr for ScoreMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "per_step" => Ok(ScoreMode::PerStep),
            "sup_per_trajectory" => Ok(ScoreMode::SupPerTrajectory),
            other => Err(format!(
                "unknown score mode `{other}` (expected per_step or sup_per_trajectory)"
            )),
        }
    }
}

/// Per-axis nonconformity scores (m/s).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pub par: Vec<f64>,
    pub perp: Vec<f64>,
    pub mode: ScoreMode,
}

impl ScoreSet {
    pub fn len(&self) -> usize {
        self.par.len()
    }

    pub fn is_empty(&self) -> bool {
        self.par.is_empty()
    }
}

/// Score every calibration episode against the model's predictions.
pub fn nonconformity_scores(
    model: &MlpModel,
    cal_set: &[Episode],
    mode: ScoreMode,
) -> Result<ScoreSet, ConformalError> {
    if cal_set.iter().all(|e| e.is_empty()) {
        return Err(ConformalError::EmptyCalibrationSet);
    }
    let mut par = Vec::new();
    let mut perp = Vec::new();
    let mut history: Vec<[f64; 4]> = Vec::new();
    for ep in cal_set {
        if ep.is_empty() {
            continue;
        }
        history.clear();
        let mut sup = Vec2::ZERO;
        for s in &ep.steps {
            history.push(s.raw_features());
            let pred = model.predict(&history)?;
            let err_par = (s.dvel_par - pred.par).abs();
            let err_perp = (s.dvel_perp - pred.perp).abs();
            match mode {
                ScoreMode::PerStep => {
                    par.push(err_par);
                    perp.push(err_perp);
                }
                ScoreMode::SupPerTrajectory => {
                    sup.par = sup.par.max(err_par);
                    sup.perp = sup.perp.max(err_perp);
                }
            }
        }
        if mode == ScoreMode::SupPerTrajectory {
            par.push(sup.par);
            perp.push(sup.perp);
        }
    }
    Ok(ScoreSet { par, perp, mode })
}

/// The finite-sample conformal quantile of a score list, or infinity when the
/// list is too small for the requested level.
///
/// Equals the r-th smallest score, r = ceil((n+1)(1-alpha)); the index is
/// clamped up to 1 so alpha = 1 returns the smallest score. The product is
/// nudged before rounding so binary representation error in decimal alphas
/// cannot push an exact integer over the next ceiling.
pub fn conformal_quantile(scores: &[f64], alpha: f64) -> Result<f64, ConformalError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(ConformalError::AlphaOutOfRange(alpha));
    }
    for &s in scores {
        if !s.is_finite() || s < 0.0 {
            return Err(ConformalError::InvalidScore(s));
        }
    }
    let n = scores.len();
    let raw = (n as f64 + 1.0) * (1.0 - alpha);
    let r = ((raw - 1e-9).ceil() as i64).max(1) as usize;
    if r > n {
        return Ok(f64::INFINITY);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("scores validated finite"));
    Ok(sorted[r - 1])
}

/// Per-axis calibrated radii for one failure tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationProfile {
    pub alpha: f64,
    #[serde(with = "radius_serde")]
    pub r_par: f64,
    #[serde(with = "radius_serde")]
    pub r_perp: f64,
    pub n_cal: usize,
    pub score_mode: ScoreMode,
}

impl CalibrationProfile {
    pub fn is_finite(&self) -> bool {
        self.r_par.is_finite() && self.r_perp.is_finite()
    }

    /// A degenerate profile with zero radii: regions collapse to the bare
    /// prediction point.
    pub fn zero(alpha: f64) -> Self {
        Self {
            alpha,
            r_par: 0.0,
            r_perp: 0.0,
            n_cal: 0,
            score_mode: ScoreMode::PerStep,
        }
    }
}

/// Radii are JSON numbers, with infinity encoded as the string "inf".
mod radius_serde {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str("inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Raw::Text(t) => Err(de::Error::custom(format!(
                "expected a number or \"inf\", got \"{t}\""
            ))),
        }
    }
}

/// Score the calibration set and take per-axis conformal quantiles.
pub fn calibrate(
    model: &MlpModel,
    cal_set: &[Episode],
    alpha: f64,
    mode: ScoreMode,
) -> Result<CalibrationProfile, ConformalError> {
    let scores = nonconformity_scores(model, cal_set, mode)?;
    let r_par = conformal_quantile(&scores.par, alpha)?;
    let r_perp = conformal_quantile(&scores.perp, alpha)?;
    Ok(CalibrationProfile {
        alpha,
        r_par,
        r_perp,
        n_cal: scores.len(),
        score_mode: mode,
    })
}

/// Axis-aligned region in position space: `{y : |y_i - center_i| <= half_widths_i}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRegion {
    pub center: Vec2,
    pub half_widths: Vec2,
}

/// Region for the next position: center at `y_t + dy_hat * dt`, half-widths
/// are the velocity-space radii scaled by `dt`.
pub fn prediction_region(
    y_t: Vec2,
    dy_hat: Vec2,
    profile: &CalibrationProfile,
    dt: f64,
) -> Result<PredictionRegion, ConformalError> {
    if !profile.is_finite() {
        return Err(ConformalError::UnboundedRadius);
    }
    Ok(PredictionRegion {
        center: y_t + dy_hat * dt,
        half_widths: Vec2::new(profile.r_par * dt, profile.r_perp * dt),
    })
}

/// Closed-region membership: deviations up to and including the half-width
/// count as inside.
pub fn region_contains(region: &PredictionRegion, y: Vec2) -> bool {
    (y.par - region.center.par).abs() <= region.half_widths.par
        && (y.perp - region.center.perp).abs() <= region.half_widths.perp
}
