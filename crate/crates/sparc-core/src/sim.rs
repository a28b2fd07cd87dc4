//! World model: a vehicle driving down a straight road toward a crosswalk,
//! and a pedestrian whose crossing behavior is coupled to the vehicle's state.
//!
//! The vehicle is velocity-controlled (`par' = par + u·dt`). The pedestrian's
//! per-step velocity is Gaussian around a mean that slows the crossing when a
//! fast vehicle is nearby, evades along the road, and re-centers toward the
//! crosswalk. Episodes are deterministic given a seeded random stream.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Episode, EpisodeStep};
use crate::vec2::Vec2;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("control input {u} outside admissible range [{min}, {max}]")]
    InadmissibleControl { u: f64, min: f64, max: f64 },
    #[error("cannot step a terminal world state")]
    TerminalStep,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Static geometry and timing of the road scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    /// Road length in meters; the vehicle travels from 0 to the end line.
    pub road_length: f64,
    /// Road width in meters; the pedestrian crosses from one edge to the other.
    pub road_width: f64,
    /// Center of the crosswalk along the road (meters).
    pub crosswalk_center_par: f64,
    /// Half-width of the crosswalk along the road (meters).
    pub crosswalk_half_width: f64,
    /// Control period in seconds.
    pub dt: f64,
    /// Number of control periods per episode.
    pub episode_steps: u32,
    /// Admissible vehicle speed range (m/s).
    pub speed_min: f64,
    pub speed_max: f64,
    /// Minimum safe vehicle–pedestrian distance (meters).
    pub d_safe: f64,
    /// Fixed lateral coordinate of the vehicle lane (meters).
    pub vehicle_lane_perp: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            road_length: 84.0,
            road_width: 25.0,
            crosswalk_center_par: 42.0,
            crosswalk_half_width: 2.0,
            dt: 0.1,
            episode_steps: 100,
            speed_min: 0.0,
            speed_max: 15.0,
            d_safe: 1.0,
            vehicle_lane_perp: 12.5,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let err = |m: String| Err(SimError::InvalidConfig(m));
        if !(self.road_length > 0.0) {
            return err(format!("road_length must be > 0, got {}", self.road_length));
        }
        if !(self.dt > 0.0) {
            return err(format!("dt must be > 0, got {}", self.dt));
        }
        if self.speed_min > self.speed_max {
            return err(format!(
                "speed_min {} exceeds speed_max {}",
                self.speed_min, self.speed_max
            ));
        }
        if self.crosswalk_half_width < 0.0
            || self.crosswalk_center_par - self.crosswalk_half_width < 0.0
            || self.crosswalk_center_par + self.crosswalk_half_width > self.road_length
        {
            return err("crosswalk must lie within the road".to_string());
        }
        if self.vehicle_lane_perp < 0.0 || self.vehicle_lane_perp > self.road_width {
            return err(format!(
                "vehicle_lane_perp {} outside road width [0, {}]",
                self.vehicle_lane_perp, self.road_width
            ));
        }
        if !(self.d_safe >= 0.0) {
            return err(format!("d_safe must be >= 0, got {}", self.d_safe));
        }
        if self.episode_steps == 0 {
            return err("episode_steps must be > 0".to_string());
        }
        Ok(())
    }
}

/// Parameters of the pedestrian's state-coupled velocity distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PedestrianParams {
    /// Unhindered crossing speed (m/s).
    pub walk_speed: f64,
    /// How strongly a fast nearby vehicle suppresses crossing speed.
    pub caution_gain: f64,
    /// Along-road evasion speed scale when the vehicle is close (m/s).
    pub evade_gain: f64,
    /// Floor on the evasion speed factor so pedestrians also step away from
    /// a slow or stationary vehicle in their path (fraction of speed_max).
    pub evade_floor: f64,
    /// Pull back toward the crosswalk center (m/s at one half-width out).
    pub center_gain: f64,
    /// Distance scale of vehicle influence (meters).
    pub proximity_scale: f64,
    /// Velocity noise standard deviations (m/s).
    pub sigma_par: f64,
    pub sigma_perp: f64,
}

impl Default for PedestrianParams {
    fn default() -> Self {
        Self {
            walk_speed: 1.4,
            caution_gain: 1.0,
            evade_gain: 1.5,
            evade_floor: 0.3,
            center_gain: 0.3,
            proximity_scale: 10.0,
            sigma_par: 0.5,
            sigma_perp: 2.0,
        }
    }
}

impl PedestrianParams {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.walk_speed < 0.0
            || self.caution_gain < 0.0
            || self.evade_gain < 0.0
            || self.center_gain < 0.0
        {
            return Err(SimError::InvalidConfig(
                "pedestrian gains must be >= 0".to_string(),
            ));
        }
        if !(0.0..=1.0).contains(&self.evade_floor) {
            return Err(SimError::InvalidConfig(format!(
                "evade_floor must be in [0, 1], got {}",
                self.evade_floor
            )));
        }
        if !(self.proximity_scale > 0.0) {
            return Err(SimError::InvalidConfig(format!(
                "proximity_scale must be > 0, got {}",
                self.proximity_scale
            )));
        }
        if !(self.sigma_par > 0.0 && self.sigma_perp > 0.0) {
            return Err(SimError::InvalidConfig(
                "sigma_par and sigma_perp must be > 0".to_string(),
            ));
        }
        Ok(())
    }
}

/// Which road edge the pedestrian started from; fixes the crossing direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossDir {
    /// Started at perp = 0, crossing toward increasing perp.
    Up,
    /// Started at perp = road_width, crossing toward decreasing perp.
    Down,
}

impl CrossDir {
    pub fn sign(self) -> f64 {
        match self {
            CrossDir::Up => 1.0,
            CrossDir::Down => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    /// Position along the road (meters).
    pub par: f64,
    /// Last applied control input (m/s).
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PedestrianState {
    pub par: f64,
    pub perp: f64,
    /// Crossing direction, fixed at episode start.
    pub cross_dir: CrossDir,
}

impl PedestrianState {
    pub fn pos(&self) -> Vec2 {
        Vec2::new(self.par, self.perp)
    }
}

/// Joint state of vehicle and pedestrian at one control instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub vehicle: VehicleState,
    pub pedestrian: PedestrianState,
    pub step: u32,
    pub terminal: bool,
}

impl WorldState {
    /// The raw per-step feature tuple consumed by the predictor.
    pub fn raw_features(&self) -> [f64; 4] {
        [
            self.vehicle.par,
            self.vehicle.speed,
            self.pedestrian.par,
            self.pedestrian.perp,
        ]
    }
}

/// The vehicle's position in the 2-D road plane.
pub fn vehicle_pos(v: &VehicleState, cfg: &WorldConfig) -> Vec2 {
    Vec2::new(v.par, cfg.vehicle_lane_perp)
}

/// Euclidean distance between vehicle and pedestrian.
pub fn separation(w: &WorldState, cfg: &WorldConfig) -> f64 {
    (vehicle_pos(&w.vehicle, cfg) - w.pedestrian.pos()).norm()
}

/// Advance the vehicle one control period under input `u`.
///
/// Rejects inadmissible inputs; the caller decides whether to clamp or fail.
pub fn step_vehicle(v: &VehicleState, u: f64, cfg: &WorldConfig) -> Result<VehicleState, SimError> {
    if !u.is_finite() || u < cfg.speed_min || u > cfg.speed_max {
        return Err(SimError::InadmissibleControl {
            u,
            min: cfg.speed_min,
            max: cfg.speed_max,
        });
    }
    Ok(VehicleState {
        par: v.par + u * cfg.dt,
        speed: u,
    })
}

/// Whether the vehicle has passed the end line.
pub fn past_end(v: &VehicleState, cfg: &WorldConfig) -> bool {
    v.par > cfg.road_length
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean of the pedestrian's velocity distribution given the current joint state.
///
/// Influence of the vehicle decays as `w = exp(-d / proximity_scale)` with
/// distance `d`. Crossing speed shrinks under speed-weighted proximity
/// (never below zero), while the along-road component combines evasion away
/// from the vehicle with a pull back toward the crosswalk center. Evasion
/// uses `max(evade_floor, speed/speed_max)` so a stopped vehicle in the
/// pedestrian's path is still stepped around rather than walked into.
pub fn pedestrian_mean_velocity(
    v: &VehicleState,
    p: &PedestrianState,
    params: &PedestrianParams,
    cfg: &WorldConfig,
) -> Vec2 {
    let d = (vehicle_pos(v, cfg) - p.pos()).norm();
    let w = (-d / params.proximity_scale).exp();
    let speed_frac = if cfg.speed_max > 0.0 {
        v.speed / cfg.speed_max
    } else {
        0.0
    };
    let caution = 1.0 - params.caution_gain * speed_frac * w;
    let mu_perp = params.walk_speed * p.cross_dir.sign() * caution.max(0.0);
    let evade =
        params.evade_gain * speed_frac.max(params.evade_floor) * w * sign(p.par - v.par);
    let centering = params.center_gain
        * ((cfg.crosswalk_center_par - p.par) / cfg.crosswalk_half_width).clamp(-1.0, 1.0);
    Vec2::new(evade + centering, mu_perp)
}

/// Draw one pedestrian velocity: `mean + (sigma_par·e1, sigma_perp·e2)`.
pub fn sample_pedestrian_velocity(
    mean: Vec2,
    params: &PedestrianParams,
    rng: &mut impl Rng,
) -> Vec2 {
    let e1: f64 = rng.sample(StandardNormal);
    let e2: f64 = rng.sample(StandardNormal);
    Vec2::new(
        mean.par + params.sigma_par * e1,
        mean.perp + params.sigma_perp * e2,
    )
}

/// Advance the full world one control period.
///
/// The pedestrian's velocity is drawn from the distribution parameterized by
/// the pre-step joint state, then the position is clamped to the road
/// rectangle. Terminal once the step budget is exhausted or the vehicle has
/// passed the end line.
pub fn step_world(
    w: &WorldState,
    u: f64,
    params: &PedestrianParams,
    cfg: &WorldConfig,
    rng: &mut impl Rng,
) -> Result<WorldState, SimError> {
    if w.terminal {
        return Err(SimError::TerminalStep);
    }
    let vehicle = step_vehicle(&w.vehicle, u, cfg)?;
    let mean = pedestrian_mean_velocity(&w.vehicle, &w.pedestrian, params, cfg);
    let vel = sample_pedestrian_velocity(mean, params, rng);
    let pedestrian = PedestrianState {
        par: (w.pedestrian.par + vel.par * cfg.dt).clamp(0.0, cfg.road_length),
        perp: (w.pedestrian.perp + vel.perp * cfg.dt).clamp(0.0, cfg.road_width),
        cross_dir: w.pedestrian.cross_dir,
    };
    let step = w.step + 1;
    let terminal = step >= cfg.episode_steps || past_end(&vehicle, cfg);
    Ok(WorldState {
        vehicle,
        pedestrian,
        step,
        terminal,
    })
}

/// True iff vehicle and pedestrian are strictly closer than `d_safe`.
/// Contact at exactly `d_safe` counts as safe.
pub fn check_collision(w: &WorldState, cfg: &WorldConfig) -> bool {
    separation(w, cfg) < cfg.d_safe
}

/// Initial world state: vehicle at the start line on the lane midline,
/// pedestrian at a uniform-random position within the crosswalk on a
/// uniform-random road edge. Vehicle speed is set by the first policy call.
pub fn initial_world(cfg: &WorldConfig, rng: &mut impl Rng) -> WorldState {
    let lo = cfg.crosswalk_center_par - cfg.crosswalk_half_width;
    let hi = cfg.crosswalk_center_par + cfg.crosswalk_half_width;
    let ped_par = rng.random_range(lo..=hi);
    let from_low_edge: bool = rng.random();
    let (perp, cross_dir) = if from_low_edge {
        (0.0, CrossDir::Up)
    } else {
        (cfg.road_width, CrossDir::Down)
    };
    WorldState {
        vehicle: VehicleState {
            par: 0.0,
            speed: 0.0,
        },
        pedestrian: PedestrianState {
            par: ped_par,
            perp,
            cross_dir,
        },
        step: 0,
        terminal: false,
    }
}

/// Run one complete episode under a control policy, recording the visited
/// states and the pedestrian velocity realized at each step.
///
/// The initial vehicle speed equals the policy's output on the initial state,
/// so constant-speed policies produce constant-speed trajectories from step 0.
pub fn run_episode(
    cfg: &WorldConfig,
    params: &PedestrianParams,
    mut policy: impl FnMut(&WorldState) -> f64,
    rng: &mut impl Rng,
    episode_id: u64,
) -> Result<Episode, SimError> {
    let mut state = initial_world(cfg, rng);
    let u0 = policy(&state);
    if !u0.is_finite() || u0 < cfg.speed_min || u0 > cfg.speed_max {
        return Err(SimError::InadmissibleControl {
            u: u0,
            min: cfg.speed_min,
            max: cfg.speed_max,
        });
    }
    state.vehicle.speed = u0;

    let mut steps = Vec::new();
    let mut collided = check_collision(&state, cfg);
    while !state.terminal {
        let u = policy(&state);
        let next = step_world(&state, u, params, cfg, rng)?;
        let dvel = (next.pedestrian.pos() - state.pedestrian.pos()) / cfg.dt;
        steps.push(EpisodeStep {
            step: state.step,
            veh_par: state.vehicle.par,
            veh_speed: state.vehicle.speed,
            ped_par: state.pedestrian.par,
            ped_perp: state.pedestrian.perp,
            dvel_par: dvel.par,
            dvel_perp: dvel.perp,
        });
        collided |= check_collision(&next, cfg);
        state = next;
    }
    Ok(Episode {
        id: episode_id,
        steps,
        collided,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use approx::assert_relative_eq;

    fn cfg() -> WorldConfig {
        WorldConfig::default()
    }

    fn params() -> PedestrianParams {
        PedestrianParams::default()
    }

    fn ped(par: f64, perp: f64) -> PedestrianState {
        PedestrianState {
            par,
            perp,
            cross_dir: CrossDir::Up,
        }
    }

    fn world(veh_par: f64, veh_speed: f64, ped_par: f64, ped_perp: f64) -> WorldState {
        WorldState {
            vehicle: VehicleState {
                par: veh_par,
                speed: veh_speed,
            },
            pedestrian: ped(ped_par, ped_perp),
            step: 0,
            terminal: false,
        }
    }

    #[test]
    fn vehicle_euler_step() {
        let v = VehicleState { par: 0.0, speed: 0.0 };
        let v2 = step_vehicle(&v, 10.0, &cfg()).unwrap();
        assert_relative_eq!(v2.par, 1.0);
        assert_relative_eq!(v2.speed, 10.0);
    }

    #[test]
    fn vehicle_zero_input_fixed_point() {
        let v = VehicleState { par: 5.0, speed: 3.0 };
        let v2 = step_vehicle(&v, 0.0, &cfg()).unwrap();
        assert_relative_eq!(v2.par, 5.0);
    }

    #[test]
    fn vehicle_past_end_line() {
        let v = VehicleState { par: 83.95, speed: 15.0 };
        let v2 = step_vehicle(&v, 15.0, &cfg()).unwrap();
        assert_relative_eq!(v2.par, 85.45, max_relative = 1e-12);
        assert!(past_end(&v2, &cfg()));
    }

    #[test]
    fn vehicle_rejects_inadmissible_input() {
        let v = VehicleState { par: 0.0, speed: 0.0 };
        assert!(matches!(
            step_vehicle(&v, 16.0, &cfg()),
            Err(SimError::InadmissibleControl { .. })
        ));
        assert!(matches!(
            step_vehicle(&v, -0.1, &cfg()),
            Err(SimError::InadmissibleControl { .. })
        ));
    }

    #[test]
    fn mean_velocity_distant_vehicle() {
        // Vehicle effectively infinitely far: coupling terms vanish.
        let v = VehicleState {
            par: -1.0e6,
            speed: 15.0,
        };
        let p = ped(42.0, 5.0); // crosswalk center: no centering pull
        let mu = pedestrian_mean_velocity(&v, &p, &params(), &cfg());
        assert_relative_eq!(mu.perp, 1.4, epsilon = 1e-12);
        assert_relative_eq!(mu.par, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn mean_velocity_zero_speed_vehicle() {
        // Adjacent but stationary vehicle: the caution term vanishes with
        // speed, so crossing continues at full walk speed; only the floored
        // evasion remains in the along-road component.
        let v = VehicleState { par: 41.0, speed: 0.0 };
        let p = ped(42.0, 12.0);
        let prm = params();
        let mu = pedestrian_mean_velocity(&v, &p, &prm, &cfg());
        assert_relative_eq!(mu.perp, 1.4, epsilon = 1e-12);
        let d = 1.0f64.hypot(0.5);
        let expected_evade = prm.evade_gain * prm.evade_floor * (-d / 10.0).exp();
        assert_relative_eq!(mu.par, expected_evade, epsilon = 1e-12);
    }

    #[test]
    fn mean_velocity_zero_floor_decouples_stationary_vehicle() {
        let v = VehicleState { par: 41.0, speed: 0.0 };
        let p = ped(42.0, 12.0);
        let prm = PedestrianParams {
            evade_floor: 0.0,
            ..params()
        };
        let mu = pedestrian_mean_velocity(&v, &p, &prm, &cfg());
        assert_relative_eq!(mu.par, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn mean_velocity_at_proximity_scale() {
        // Vehicle at speed_max exactly proximity_scale meters away, pedestrian
        // at the crosswalk center on the lane line.
        let v = VehicleState { par: 32.0, speed: 15.0 };
        let p = ped(42.0, 12.5);
        let mu = pedestrian_mean_velocity(&v, &p, &params(), &cfg());
        let w = (-1.0f64).exp();
        assert_relative_eq!(mu.perp, 1.4 * (1.0 - w), epsilon = 1e-12);
        assert_relative_eq!(mu.par, 1.5 * w, epsilon = 1e-12);
    }

    #[test]
    fn sample_zero_noise_is_mean() {
        let mut p = params();
        p.sigma_par = 0.0;
        p.sigma_perp = 0.0;
        let mut rng = stream_rng(1, 0);
        let v = sample_pedestrian_velocity(Vec2::new(0.3, -1.1), &p, &mut rng);
        assert_eq!(v, Vec2::new(0.3, -1.1));
    }

    #[test]
    fn sample_statistics_match_sigma() {
        let p = params();
        let mut rng = stream_rng(42, 0);
        let n = 100_000;
        let (mut s1, mut s2, mut q1, mut q2) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let v = sample_pedestrian_velocity(Vec2::ZERO, &p, &mut rng);
            s1 += v.par;
            s2 += v.perp;
            q1 += v.par * v.par;
            q2 += v.perp * v.perp;
        }
        let nf = n as f64;
        let (m1, m2) = (s1 / nf, s2 / nf);
        let std1 = (q1 / nf - m1 * m1).sqrt();
        let std2 = (q2 / nf - m2 * m2).sqrt();
        assert!(m1.abs() < 3.0 * 0.5 / nf.sqrt());
        assert!(m2.abs() < 3.0 * 2.0 / nf.sqrt());
        assert!((std1 - 0.5).abs() / 0.5 < 0.02, "std_par={std1}");
        assert!((std2 - 2.0).abs() / 2.0 < 0.02, "std_perp={std2}");
    }

    #[test]
    fn sample_deterministic_per_seed() {
        let p = params();
        let a = sample_pedestrian_velocity(Vec2::ZERO, &p, &mut stream_rng(9, 4));
        let b = sample_pedestrian_velocity(Vec2::ZERO, &p, &mut stream_rng(9, 4));
        assert_eq!(a, b);
    }

    #[test]
    fn step_world_composes_vehicle_and_pedestrian() {
        // Zero noise, distant stationary vehicle: pedestrian advances by
        // walk_speed · dt.
        let mut p = params();
        p.sigma_par = 0.0;
        p.sigma_perp = 0.0;
        let w = world(-1.0e6, 0.0, 42.0, 5.0);
        let mut rng = stream_rng(0, 0);
        let w2 = step_world(&w, 0.0, &p, &cfg(), &mut rng).unwrap();
        assert_relative_eq!(w2.pedestrian.perp, 5.14, epsilon = 1e-12);
        assert_relative_eq!(w2.pedestrian.par, 42.0, epsilon = 1e-12);
    }

    #[test]
    fn step_world_clamps_pedestrian_to_road() {
        let mut p = params();
        p.sigma_par = 0.0;
        p.sigma_perp = 0.0;
        let w = world(-1.0e6, 0.0, 42.0, 24.99);
        let mut rng = stream_rng(0, 0);
        let w2 = step_world(&w, 0.0, &p, &cfg(), &mut rng).unwrap();
        assert_eq!(w2.pedestrian.perp, 25.0);
    }

    #[test]
    fn episode_terminates_after_step_budget() {
        let c = cfg();
        let p = params();
        let mut rng = stream_rng(5, 0);
        let mut w = initial_world(&c, &mut rng);
        let mut n = 0;
        while !w.terminal {
            w = step_world(&w, 0.0, &p, &c, &mut rng).unwrap();
            n += 1;
        }
        assert_eq!(n, 100);
        assert_eq!(w.step, 100);
        assert_relative_eq!(w.step as f64 * c.dt, 10.0);
        assert!(matches!(
            step_world(&w, 0.0, &p, &c, &mut rng),
            Err(SimError::TerminalStep)
        ));
    }

    #[test]
    fn collision_zero_distance() {
        let w = world(10.0, 0.0, 10.0, 12.5);
        assert!(check_collision(&w, &cfg()));
    }

    #[test]
    fn collision_boundary_is_safe() {
        let w = world(10.0, 0.0, 10.0, 13.5); // distance exactly d_safe = 1.0
        assert!(!check_collision(&w, &cfg()));
    }

    #[test]
    fn collision_beyond_d_safe() {
        let w = world(42.0, 0.0, 42.0, 14.0); // distance 1.5
        assert!(!check_collision(&w, &cfg()));
    }

    #[test]
    fn stationary_vehicle_never_collides() {
        let c = cfg();
        let p = params();
        for seed in 0..20 {
            let mut rng = stream_rng(77, seed);
            let ep = run_episode(&c, &p, |_| 0.0, &mut rng, seed).unwrap();
            assert!(!ep.collided);
            assert!(ep.steps.iter().all(|s| s.veh_par == 0.0));
        }
    }

    #[test]
    fn episodes_deterministic_per_seed() {
        let c = cfg();
        let p = params();
        let a = run_episode(&c, &p, |_| 7.5, &mut stream_rng(3, 11), 11).unwrap();
        let b = run_episode(&c, &p, |_| 7.5, &mut stream_rng(3, 11), 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn vehicle_position_monotone_under_nonnegative_input() {
        let c = cfg();
        let p = params();
        let mut rng = stream_rng(8, 2);
        // Policy alternates admissible speeds, all >= 0.
        let mut k = 0u32;
        let ep = run_episode(
            &c,
            &p,
            |_| {
                k += 1;
                ((k % 4) as f64) * 3.0
            },
            &mut rng,
            0,
        )
        .unwrap();
        for pair in ep.steps.windows(2) {
            assert!(pair[1].veh_par >= pair[0].veh_par);
        }
    }

    #[test]
    fn pedestrian_contained_in_road_rectangle() {
        let c = cfg();
        let p = params();
        for seed in 0..50 {
            let ep = run_episode(&c, &p, |_| 12.0, &mut stream_rng(21, seed), seed).unwrap();
            for s in &ep.steps {
                assert!((0.0..=c.road_length).contains(&s.ped_par));
                assert!((0.0..=c.road_width).contains(&s.ped_perp));
            }
        }
    }

    #[test]
    fn coupling_monotone_in_vehicle_speed() {
        let c = cfg();
        let p = params();
        let pd = ped(44.0, 11.0);
        let mut prev: Option<(f64, f64)> = None;
        for i in 0..=30 {
            let speed = c.speed_max * (i as f64) / 30.0;
            let v = VehicleState { par: 40.0, speed };
            let mu = pedestrian_mean_velocity(&v, &pd, &p, &c);
            let evade_mag = (p.evade_gain * (speed / c.speed_max).max(p.evade_floor)
                * (-(vehicle_pos(&v, &c) - pd.pos()).norm() / p.proximity_scale).exp())
            .abs();
            if let Some((perp_mag, prev_evade)) = prev {
                assert!(mu.perp.abs() <= perp_mag + 1e-12);
                assert!(evade_mag >= prev_evade - 1e-12);
            }
            prev = Some((mu.perp.abs(), evade_mag));
        }
    }
}
