//! Dev probe: timings and statistics for the full pipeline at desk scale.

use std::time::Instant;

use sparc_core::conformal::{calibrate, ScoreMode};
use sparc_core::data::{generate_dataset, sample_count};
use sparc_core::harness::{coverage_audit, run_experiment, ExperimentPlan};
use sparc_core::predict::{build_training_set, train, TrainConfig};
use sparc_core::safety::FilterParams;
use sparc_core::sim::{PedestrianParams, WorldConfig};

fn main() {
    let cfg = WorldConfig::default();
    let params = PedestrianParams::default();
    let fparams = FilterParams::default();

    let t0 = Instant::now();
    let train_eps = generate_dataset(200_000, &cfg, &params, 1).unwrap();
    let cal_eps = generate_dataset(100_000, &cfg, &params, 2).unwrap();
    let audit_eps = generate_dataset(10_000, &cfg, &params, 3).unwrap();
    println!(
        "gen: {:.1}s train={} cal={} audit={}",
        t0.elapsed().as_secs_f64(),
        sample_count(&train_eps),
        sample_count(&cal_eps),
        sample_count(&audit_eps)
    );

    let t0 = Instant::now();
    let set = build_training_set(&train_eps, 5).unwrap();
    println!("features: {:.1}s ({} rows)", t0.elapsed().as_secs_f64(), set.x.nrows());

    let t0 = Instant::now();
    let tc = TrainConfig {
        epochs: 25,
        seed: 7,
        ..TrainConfig::default()
    };
    let out = train(&set, &tc).unwrap();
    println!(
        "train: {:.1}s losses first={:.5} last={:.5}",
        t0.elapsed().as_secs_f64(),
        out.epoch_losses.first().unwrap(),
        out.epoch_losses.last().unwrap()
    );

    let t0 = Instant::now();
    for alpha in [0.15, 0.25, 0.5] {
        let prof = calibrate(&out.model, &cal_eps, alpha, ScoreMode::PerStep).unwrap();
        let cov = coverage_audit(&out.model, &prof, &audit_eps, cfg.dt).unwrap();
        println!(
            "alpha={alpha}: r=({:.4},{:.4}) n={} cov par={:.4} perp={:.4} joint={:.4}",
            prof.r_par, prof.r_perp, prof.n_cal, cov.par, cov.perp, cov.joint
        );
    }
    println!("calibrate+audit x3: {:.1}s", t0.elapsed().as_secs_f64());
    println!(
        "analytic oracle: r_par=0.7198, r_perp=2.8791 (sigma * 1.439531)"
    );

    let t0 = Instant::now();
    let profiles: Vec<_> = [0.15, 0.25, 0.5]
        .iter()
        .map(|&a| calibrate(&out.model, &cal_eps, a, ScoreMode::PerStep).unwrap())
        .collect();
    let plan = ExperimentPlan {
        n_trials: 2_000,
        master_seed: 99,
        include_vanilla: true,
        include_random: true,
    };
    let table = run_experiment(&plan, Some(&out.model), &profiles, &cfg, &params, &fparams).unwrap();
    println!("experiment 2000x5: {:.1}s", t0.elapsed().as_secs_f64());
    print!("{}", table.to_csv_string());
}
