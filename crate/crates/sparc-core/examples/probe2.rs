//! Dev probe: collision-rate sensitivity to the barrier gain and walk speed.

use sparc_core::conformal::{calibrate, ScoreMode};
use sparc_core::data::generate_dataset;
use sparc_core::harness::{run_experiment, ExperimentPlan};
use sparc_core::predict::{build_training_set, train, TrainConfig};
use sparc_core::safety::FilterParams;
use sparc_core::sim::{PedestrianParams, WorldConfig};

fn main() {
    let cfg = WorldConfig::default();
    for walk in [1.4, 2.0] {
        let params = PedestrianParams {
            walk_speed: walk,
            ..PedestrianParams::default()
        };
        let train_eps = generate_dataset(150_000, &cfg, &params, 1).unwrap();
        let cal_eps = generate_dataset(60_000, &cfg, &params, 2).unwrap();
        let set = build_training_set(&train_eps, 5).unwrap();
        let tc = TrainConfig {
            epochs: 15,
            seed: 7,
            ..TrainConfig::default()
        };
        let model = train(&set, &tc).unwrap().model;
        let profiles: Vec<_> = [0.15, 0.25, 0.5]
            .iter()
            .map(|&a| calibrate(&model, &cal_eps, a, ScoreMode::PerStep).unwrap())
            .collect();
        println!(
            "walk={walk} radii: a=0.15 ({:.3},{:.3})",
            profiles[0].r_par, profiles[0].r_perp
        );
        for gamma in [2.0, 5.0, 10.0, 20.0] {
            let fparams = FilterParams {
                gamma,
                ..FilterParams::default()
            };
            let plan = ExperimentPlan {
                n_trials: 3_000,
                master_seed: 99,
                include_vanilla: true,
                include_random: true,
            };
            let table =
                run_experiment(&plan, Some(&model), &profiles, &cfg, &params, &fparams).unwrap();
            let fmt = |i: usize| {
                let r = &table.rows[i];
                format!(
                    "{}{}={:.4}({})",
                    r.controller,
                    r.alpha.map(|a| format!("[{a}]")).unwrap_or_default(),
                    r.rate_abs,
                    r.rate_rel.map(|v| format!("{:.3}", v)).unwrap_or_default()
                )
            };
            println!(
                "  gamma={gamma}: {} {} {} {} {} infeas={:?}",
                fmt(0),
                fmt(1),
                fmt(2),
                fmt(3),
                fmt(4),
                table
                    .rows
                    .iter()
                    .map(|r| r.infeasible_steps_total)
                    .collect::<Vec<_>>()
            );
        }
    }
}
