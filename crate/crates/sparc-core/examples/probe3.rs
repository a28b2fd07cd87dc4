//! Dev probe: anatomy of filtered-controller collisions.

use rand::Rng;
use sparc_core::conformal::{calibrate, prediction_region, ScoreMode};
use sparc_core::data::generate_dataset;
use sparc_core::predict::{build_training_set, train, TrainConfig};
use sparc_core::rng::stream_rng;
use sparc_core::safety::{cbf_constraint, filter_control, FilterParams};
use sparc_core::sim::{
    check_collision, initial_world, pedestrian_mean_velocity, sample_pedestrian_velocity,
    separation, PedestrianParams, PedestrianState, VehicleState, WorldConfig, WorldState,
};

fn main() {
    let cfg = WorldConfig::default();
    let params = PedestrianParams::default();
    let train_eps = generate_dataset(150_000, &cfg, &params, 1).unwrap();
    let cal_eps = generate_dataset(60_000, &cfg, &params, 2).unwrap();
    let set = build_training_set(&train_eps, 5).unwrap();
    let model = train(
        &set,
        &TrainConfig {
            epochs: 15,
            seed: 7,
            ..TrainConfig::default()
        },
    )
    .unwrap()
    .model;
    let prof = calibrate(&model, &cal_eps, 0.15, ScoreMode::PerStep).unwrap();

    for gamma in [2.0, 10.0] {
        let fparams = FilterParams {
            gamma,
            ..FilterParams::default()
        };
        let mut n_coll = 0;
        let mut coll_speed_low = 0; // vehicle nearly stopped at collision
        let mut coll_recent_infeasible = 0;
        let mut coll_perp_gap = Vec::new();
        let mut coll_par_gap = Vec::new();
        for t in 0..4000u64 {
            let mut rng = stream_rng(99, t);
            let u_r = rng.random_range(cfg.speed_min..=cfg.speed_max);
            let mut state = initial_world(&cfg, &mut rng);
            state.vehicle.speed = u_r;
            let mut history = vec![state.raw_features()];
            let mut recent_infeasible = 0u32;
            let dt_ctrl = cfg.dt / 10.0;
            let mut collided_at: Option<(WorldState, u32)> = None;
            while !state.terminal {
                let mut hist_slice = history.clone();
                hist_slice.truncate(history.len());
                let dy_hat = model.predict(&history).unwrap();
                let region =
                    prediction_region(state.pedestrian.pos(), dy_hat, &prof, cfg.dt).unwrap();
                let mut veh = state.vehicle;
                let mut infeas_this = 0;
                for _ in 0..10 {
                    let c = cbf_constraint(&veh, &region, &fparams, &cfg);
                    let fc = filter_control(u_r, &c, &fparams).unwrap();
                    if fc.infeasible {
                        infeas_this += 1;
                    }
                    veh = VehicleState {
                        par: veh.par + fc.u * dt_ctrl,
                        speed: fc.u,
                    };
                }
                recent_infeasible = if infeas_this > 0 {
                    10
                } else {
                    recent_infeasible.saturating_sub(1)
                };
                let mean = pedestrian_mean_velocity(&state.vehicle, &state.pedestrian, &params, &cfg);
                let vel = sample_pedestrian_velocity(mean, &params, &mut rng);
                let pedestrian = PedestrianState {
                    par: (state.pedestrian.par + vel.par * cfg.dt).clamp(0.0, cfg.road_length),
                    perp: (state.pedestrian.perp + vel.perp * cfg.dt).clamp(0.0, cfg.road_width),
                    cross_dir: state.pedestrian.cross_dir,
                };
                let step = state.step + 1;
                let terminal = step >= cfg.episode_steps || veh.par > cfg.road_length;
                state = WorldState {
                    vehicle: veh,
                    pedestrian,
                    step,
                    terminal,
                };
                history.push(state.raw_features());
                if check_collision(&state, &cfg) && collided_at.is_none() {
                    collided_at = Some((state, recent_infeasible));
                    break;
                }
                let _ = separation(&state, &cfg);
            }
            if let Some((w, rinf)) = collided_at {
                n_coll += 1;
                if w.vehicle.speed < 0.5 {
                    coll_speed_low += 1;
                }
                if rinf > 0 {
                    coll_recent_infeasible += 1;
                }
                coll_par_gap.push(w.pedestrian.par - w.vehicle.par);
                coll_perp_gap.push(w.pedestrian.perp - cfg.vehicle_lane_perp);
            }
        }
        println!(
            "gamma={gamma}: collisions={n_coll}/4000 speed<0.5 at impact: {coll_speed_low}, recent-infeasible: {coll_recent_infeasible}"
        );
        let mean = |v: &Vec<f64>| v.iter().sum::<f64>() / v.len().max(1) as f64;
        println!(
            "  par gap mean {:.2}, perp gap mean {:.2}; samples {:?}",
            mean(&coll_par_gap),
            mean(&coll_perp_gap),
            coll_par_gap
                .iter()
                .zip(&coll_perp_gap)
                .take(12)
                .map(|(a, b)| format!("({a:.2},{b:.2})"))
                .collect::<Vec<_>>()
        );
    }
}
