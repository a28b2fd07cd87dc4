//! Closed-loop Monte-Carlo evaluation.
//!
//! Each trial drives the vehicle with a constant reference speed drawn
//! uniformly per trial, optionally filtered through the barrier constraint
//! built on a per-period prediction region. Controllers are compared over
//! paired trials: the same trial index reuses the same random stream, so all
//! controllers see identical pedestrian noise draws.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conformal::{
    prediction_region, region_contains, CalibrationProfile, ConformalError,
};
use crate::data::Episode;
use crate::predict::{MlpModel, ModelError};
use crate::rng::stream_rng;
use crate::safety::{cbf_constraint, filter_control, FilterError, FilterParams};
use crate::sim::{
    check_collision, initial_world, pedestrian_mean_velocity, sample_pedestrian_velocity,
    separation, step_world, PedestrianParams, PedestrianState, SimError, VehicleState,
    WorldConfig, WorldState,
};
use crate::vec2::Vec2;

/// Control updates per prediction period (10 ms at the default 0.1 s period).
pub const CONTROL_SUBSTEPS: u32 = 10;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Conformal(#[from] ConformalError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("controller `{0}` requires a trained model")]
    MissingModel(ControllerKind),
    #[error("controller `sparc` requires a finite calibration profile")]
    MissingProfile,
    #[error("score list is empty")]
    EmptyScores,
    #[error("histogram needs at least one bin, got {0}")]
    BadBins(usize),
    #[error("tracing requires a region-based controller, not `{0}`")]
    TraceUnsupported(ControllerKind),
    #[error("results parse error at line {line}: {msg}")]
    ResultsParse { line: u64, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Sparc,
    Vanilla,
    Random,
}

impl ControllerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ControllerKind::Sparc => "sparc",
            ControllerKind::Vanilla => "vanilla",
            ControllerKind::Random => "random",
        }
    }
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sparc" => Ok(ControllerKind::Sparc),
            "vanilla" => Ok(ControllerKind::Vanilla),
            "random" => Ok(ControllerKind::Random),
            other => Err(format!(
                "unknown controller `{other}` (expected sparc, vanilla, or random)"
            )),
        }
    }
}

/// Everything a trial needs besides its seed.
#[derive(Clone, Copy)]
pub struct TrialInputs<'a> {
    pub model: Option<&'a MlpModel>,
    pub profile: Option<&'a CalibrationProfile>,
    pub cfg: &'a WorldConfig,
    pub params: &'a PedestrianParams,
    pub fparams: &'a FilterParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub controller: ControllerKind,
    pub alpha: Option<f64>,
    pub collided: bool,
    pub min_separation: f64,
    pub infeasible_steps: u32,
    pub seed: u64,
}

/// One traced control period of a region-based trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceStep {
    pub step: u32,
    pub center: Vec2,
    pub half_widths: Vec2,
    pub realized: Vec2,
    pub contained: bool,
}

/// Run one closed-loop trial. `stream` selects the trial's random stream
/// under `master_seed`; paired controllers pass the same pair.
pub fn run_trial(
    kind: ControllerKind,
    inputs: &TrialInputs<'_>,
    master_seed: u64,
    stream: u64,
) -> Result<TrialResult, HarnessError> {
    run_trial_inner(kind, inputs, master_seed, stream, None)
}

/// As [`run_trial`], also recording the per-period prediction regions and
/// realized pedestrian positions. Only meaningful for region-based
/// controllers.
pub fn run_trial_traced(
    kind: ControllerKind,
    inputs: &TrialInputs<'_>,
    master_seed: u64,
    stream: u64,
) -> Result<(TrialResult, Vec<TraceStep>), HarnessError> {
    if kind == ControllerKind::Random {
        return Err(HarnessError::TraceUnsupported(kind));
    }
    let mut trace = Vec::new();
    let result = run_trial_inner(kind, inputs, master_seed, stream, Some(&mut trace))?;
    Ok((result, trace))
}

fn run_trial_inner(
    kind: ControllerKind,
    inputs: &TrialInputs<'_>,
    master_seed: u64,
    stream: u64,
    mut trace: Option<&mut Vec<TraceStep>>,
) -> Result<TrialResult, HarnessError> {
    let cfg = inputs.cfg;
    let params = inputs.params;
    let fparams = inputs.fparams;

    let (model, profile) = match kind {
        ControllerKind::Random => (None, None),
        ControllerKind::Vanilla => {
            let m = inputs.model.ok_or(HarnessError::MissingModel(kind))?;
            (Some(m), None)
        }
        ControllerKind::Sparc => {
            let m = inputs.model.ok_or(HarnessError::MissingModel(kind))?;
            let p = inputs.profile.ok_or(HarnessError::MissingProfile)?;
            if !p.is_finite() {
                return Err(HarnessError::Conformal(ConformalError::UnboundedRadius));
            }
            (Some(m), Some(p))
        }
    };

    let mut rng = stream_rng(master_seed, stream);
    let u_r = rng.random_range(cfg.speed_min..=cfg.speed_max);
    let mut state = initial_world(cfg, &mut rng);
    state.vehicle.speed = u_r;

    let mut history: Vec<[f64; 4]> = Vec::with_capacity(cfg.episode_steps as usize + 1);
    history.push(state.raw_features());
    let mut collided = check_collision(&state, cfg);
    let mut min_sep = separation(&state, cfg);
    let mut infeasible_steps: u32 = 0;
    let dt_ctrl = cfg.dt / CONTROL_SUBSTEPS as f64;

    while !state.terminal {
        match kind {
            ControllerKind::Random => {
                // Unfiltered reference: one plain world step per period.
                state = step_world(&state, u_r, params, cfg, &mut rng)?;
            }
            ControllerKind::Vanilla | ControllerKind::Sparc => {
                let dy_hat = model.expect("checked above").predict(&history)?;
                let region_profile = match profile {
                    Some(p) => p.clone(),
                    None => CalibrationProfile::zero(1.0),
                };
                let region =
                    prediction_region(state.pedestrian.pos(), dy_hat, &region_profile, cfg.dt)?;

                // Zero-order hold: the region stays frozen while the filter
                // re-runs at the inner control rate.
                let mut veh = state.vehicle;
                for _ in 0..CONTROL_SUBSTEPS {
                    let c = cbf_constraint(&veh, &region, fparams, cfg);
                    let fc = filter_control(u_r, &c, fparams)?;
                    if fc.infeasible {
                        infeasible_steps += 1;
                    }
                    veh = VehicleState {
                        par: veh.par + fc.u * dt_ctrl,
                        speed: fc.u,
                    };
                }

                // Pedestrian dynamics are driven by the period-start state,
                // mirroring the plain simulator's update order.
                let mean = pedestrian_mean_velocity(&state.vehicle, &state.pedestrian, params, cfg);
                let vel = sample_pedestrian_velocity(mean, params, &mut rng);
                let pedestrian = PedestrianState {
                    par: (state.pedestrian.par + vel.par * cfg.dt).clamp(0.0, cfg.road_length),
                    perp: (state.pedestrian.perp + vel.perp * cfg.dt).clamp(0.0, cfg.road_width),
                    cross_dir: state.pedestrian.cross_dir,
                };
                let step = state.step + 1;
                let terminal = step >= cfg.episode_steps || crate::sim::past_end(&veh, cfg);
                if let Some(tr) = trace.as_deref_mut() {
                    tr.push(TraceStep {
                        step: state.step,
                        center: region.center,
                        half_widths: region.half_widths,
                        realized: pedestrian.pos(),
                        contained: region_contains(&region, pedestrian.pos()),
                    });
                }
                state = WorldState {
                    vehicle: veh,
                    pedestrian,
                    step,
                    terminal,
                };
            }
        }
        history.push(state.raw_features());
        collided |= check_collision(&state, cfg);
        min_sep = min_sep.min(separation(&state, cfg));
    }

    Ok(TrialResult {
        controller: kind,
        alpha: profile.map(|p| p.alpha),
        collided,
        min_separation: min_sep,
        infeasible_steps,
        seed: stream,
    })
}

/// One aggregated row of the collision-probability table.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub controller: ControllerKind,
    pub alpha: Option<f64>,
    pub trials: u64,
    pub collisions_abs: u64,
    pub rate_abs: f64,
    pub rate_rel: Option<f64>,
    pub infeasible_steps_total: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentTable {
    pub rows: Vec<ExperimentRow>,
}

pub const RESULTS_HEADER: &str =
    "controller,alpha,trials,collisions_abs,rate_abs,rate_rel,infeasible_steps_total";

impl ExperimentTable {
    /// Deterministic CSV rendering; identical inputs yield identical bytes.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(RESULTS_HEADER);
        out.push('\n');
        for r in &self.rows {
            let alpha = r.alpha.map(|a| a.to_string()).unwrap_or_default();
            let rel = r.rate_rel.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.controller, alpha, r.trials, r.collisions_abs, r.rate_abs, rel,
                r.infeasible_steps_total
            ));
        }
        out
    }

    pub fn from_csv_str(s: &str) -> Result<Self, HarnessError> {
        let mut rows = Vec::new();
        let mut lines = s.lines().enumerate();
        match lines.next() {
            None => return Ok(ExperimentTable { rows }),
            Some((_, header)) => {
                if header.trim().is_empty() {
                    return Ok(ExperimentTable { rows });
                }
                if header != RESULTS_HEADER {
                    return Err(HarnessError::ResultsParse {
                        line: 1,
                        msg: format!("bad header `{header}`"),
                    });
                }
            }
        }
        for (idx, line) in lines {
            let lineno = idx as u64 + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 7 {
                return Err(HarnessError::ResultsParse {
                    line: lineno,
                    msg: format!("expected 7 fields, got {}", fields.len()),
                });
            }
            let parse_err = |msg: String| HarnessError::ResultsParse { line: lineno, msg };
            let controller: ControllerKind = fields[0].parse().map_err(parse_err)?;
            let alpha = if fields[1].is_empty() {
                None
            } else {
                Some(fields[1].parse::<f64>().map_err(|e| {
                    HarnessError::ResultsParse {
                        line: lineno,
                        msg: format!("bad alpha: {e}"),
                    }
                })?)
            };
            let num =
                |s: &str, what: &str| -> Result<u64, HarnessError> {
                    s.parse::<u64>().map_err(|e| HarnessError::ResultsParse {
                        line: lineno,
                        msg: format!("bad {what}: {e}"),
                    })
                };
            let fnum =
                |s: &str, what: &str| -> Result<f64, HarnessError> {
                    s.parse::<f64>().map_err(|e| HarnessError::ResultsParse {
                        line: lineno,
                        msg: format!("bad {what}: {e}"),
                    })
                };
            let rate_rel = if fields[5].is_empty() {
                None
            } else {
                Some(fnum(fields[5], "rate_rel")?)
            };
            rows.push(ExperimentRow {
                controller,
                alpha,
                trials: num(fields[2], "trials")?,
                collisions_abs: num(fields[3], "collisions_abs")?,
                rate_abs: fnum(fields[4], "rate_abs")?,
                rate_rel,
                infeasible_steps_total: num(fields[6], "infeasible_steps_total")?,
            });
        }
        Ok(ExperimentTable { rows })
    }

    /// Collision-probability table as markdown.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from(
            "| Controller | Collision (absolute) | Collision (relative) |\n|---|---|---|\n",
        );
        for r in &self.rows {
            let name = match (r.controller, r.alpha) {
                (ControllerKind::Sparc, Some(a)) => format!("SPARC (alpha={a})"),
                (ControllerKind::Sparc, None) => "SPARC".to_string(),
                (ControllerKind::Vanilla, _) => "Vanilla CBF".to_string(),
                (ControllerKind::Random, _) => "Random".to_string(),
            };
            let rel = r
                .rate_rel
                .map(|v| format!("{:.2}%", v * 100.0))
                .unwrap_or_else(|| "-".to_string());
            out.push_str(&format!(
                "| {name} | {:.2}% | {rel} |\n",
                r.rate_abs * 100.0
            ));
        }
        out
    }
}

/// Which controllers an experiment compares.
#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub n_trials: u64,
    pub master_seed: u64,
    pub include_vanilla: bool,
    pub include_random: bool,
}

/// Run paired trials for every controller and aggregate collision rates.
/// Relative rates divide by the random baseline measured in the same run.
pub fn run_experiment(
    plan: &ExperimentPlan,
    model: Option<&MlpModel>,
    sparc_profiles: &[CalibrationProfile],
    cfg: &WorldConfig,
    params: &PedestrianParams,
    fparams: &FilterParams,
) -> Result<ExperimentTable, HarnessError> {
    #[derive(Clone, Copy)]
    enum Ctl<'a> {
        Sparc(&'a CalibrationProfile),
        Vanilla,
        Random,
    }

    let mut controllers: Vec<Ctl> = sparc_profiles.iter().map(Ctl::Sparc).collect();
    if plan.include_vanilla {
        controllers.push(Ctl::Vanilla);
    }
    if plan.include_random {
        controllers.push(Ctl::Random);
    }
    if plan.n_trials == 0 || controllers.is_empty() {
        return Ok(ExperimentTable::default());
    }

    let needs_model = plan.include_vanilla || !sparc_profiles.is_empty();
    if needs_model && model.is_none() {
        return Err(HarnessError::MissingModel(ControllerKind::Sparc));
    }

    // Per trial, run every controller on the same stream (common random
    // numbers). Collect in trial order so aggregation is deterministic.
    let per_trial: Result<Vec<Vec<(bool, u32)>>, HarnessError> = (0..plan.n_trials)
        .into_par_iter()
        .map(|t| {
            controllers
                .iter()
                .map(|ctl| {
                    let (kind, profile) = match ctl {
                        Ctl::Sparc(p) => (ControllerKind::Sparc, Some(*p)),
                        Ctl::Vanilla => (ControllerKind::Vanilla, None),
                        Ctl::Random => (ControllerKind::Random, None),
                    };
                    let inputs = TrialInputs {
                        model,
                        profile,
                        cfg,
                        params,
                        fparams,
                    };
                    let r = run_trial(kind, &inputs, plan.master_seed, t)?;
                    Ok((r.collided, r.infeasible_steps))
                })
                .collect()
        })
        .collect();
    let per_trial = per_trial?;

    let mut collisions = vec![0u64; controllers.len()];
    let mut infeasible = vec![0u64; controllers.len()];
    for trial in &per_trial {
        for (i, &(c, inf)) in trial.iter().enumerate() {
            collisions[i] += c as u64;
            infeasible[i] += inf as u64;
        }
    }

    let baseline = controllers
        .iter()
        .position(|c| matches!(c, Ctl::Random))
        .map(|i| collisions[i]);
    let n = plan.n_trials;
    let rows = controllers
        .iter()
        .enumerate()
        .map(|(i, ctl)| {
            let (controller, alpha) = match ctl {
                Ctl::Sparc(p) => (ControllerKind::Sparc, Some(p.alpha)),
                Ctl::Vanilla => (ControllerKind::Vanilla, None),
                Ctl::Random => (ControllerKind::Random, None),
            };
            let rate_abs = collisions[i] as f64 / n as f64;
            let rate_rel = match baseline {
                Some(b) if b > 0 => Some(collisions[i] as f64 / b as f64),
                _ => None,
            };
            ExperimentRow {
                controller,
                alpha,
                trials: n,
                collisions_abs: collisions[i],
                rate_abs,
                rate_rel,
                infeasible_steps_total: infeasible[i],
            }
        })
        .collect();
    Ok(ExperimentTable { rows })
}

/// Empirical coverage of the prediction regions on held-out episodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageReport {
    pub n_pairs: usize,
    /// Per-axis coverage: fraction of steps whose realized next position lies
    /// within the region's extent along that axis. This is the quantity the
    /// per-axis calibration guarantees.
    pub par: f64,
    pub perp: f64,
    /// Fraction inside the full box (both axes at once); reported, not
    /// guaranteed by per-axis calibration.
    pub joint: f64,
}

/// Check every (step, next-step) pair of the test set against the region
/// built from the model prediction at that step.
pub fn coverage_audit(
    model: &MlpModel,
    profile: &CalibrationProfile,
    test_set: &[Episode],
    dt: f64,
) -> Result<CoverageReport, HarnessError> {
    if !profile.is_finite() {
        return Err(HarnessError::Conformal(ConformalError::UnboundedRadius));
    }
    let mut n = 0usize;
    let (mut hit_par, mut hit_perp, mut hit_joint) = (0usize, 0usize, 0usize);
    let mut history: Vec<[f64; 4]> = Vec::new();
    for ep in test_set {
        history.clear();
        for s in &ep.steps {
            history.push(s.raw_features());
            let pred = model.predict(&history)?;
            let pos = Vec2::new(s.ped_par, s.ped_perp);
            let region = prediction_region(pos, pred, profile, dt)?;
            let realized = pos + Vec2::new(s.dvel_par, s.dvel_perp) * dt;
            let in_par = (realized.par - region.center.par).abs() <= region.half_widths.par;
            let in_perp = (realized.perp - region.center.perp).abs() <= region.half_widths.perp;
            n += 1;
            hit_par += in_par as usize;
            hit_perp += in_perp as usize;
            hit_joint += (in_par && in_perp) as usize;
        }
    }
    if n == 0 {
        return Err(HarnessError::EmptyScores);
    }
    Ok(CoverageReport {
        n_pairs: n,
        par: hit_par as f64 / n as f64,
        perp: hit_perp as f64 / n as f64,
        joint: hit_joint as f64 / n as f64,
    })
}

/// Equal-width histogram over `[0, max score]` with an optional quantile
/// marker.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub marker: Option<f64>,
}

impl Histogram {
    pub fn bin_edges(&self) -> Vec<f64> {
        let n = self.counts.len();
        (0..=n)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / n as f64)
            .collect()
    }

    pub fn to_csv_string(&self) -> String {
        let edges = self.bin_edges();
        let mut out = String::from("bin_lo,bin_hi,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", edges[i], edges[i + 1], c));
        }
        out
    }
}

pub fn score_histogram(
    scores: &[f64],
    n_bins: usize,
    marker: Option<f64>,
) -> Result<Histogram, HarnessError> {
    if scores.is_empty() {
        return Err(HarnessError::EmptyScores);
    }
    if n_bins == 0 {
        return Err(HarnessError::BadBins(n_bins));
    }
    let max = scores.iter().cloned().fold(0.0f64, f64::max);
    let hi = if max > 0.0 { max } else { 1.0 };
    let mut counts = vec![0u64; n_bins];
    for &s in scores {
        let idx = ((s / hi) * n_bins as f64) as usize;
        counts[idx.min(n_bins - 1)] += 1;
    }
    Ok(Histogram {
        lo: 0.0,
        hi,
        counts,
        marker,
    })
}

pub const TRACE_HEADER: &str =
    "step,center_par,center_perp,half_par,half_perp,realized_par,realized_perp,contained";

pub fn trace_to_csv_string(trace: &[TraceStep]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for t in trace {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            t.step,
            t.center.par,
            t.center.perp,
            t.half_widths.par,
            t.half_widths.perp,
            t.realized.par,
            t.realized.perp,
            t.contained
        ));
    }
    out
}
